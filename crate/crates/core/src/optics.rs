//! Optical elements as [`ModeTransform`] builders.
//!
//! Every element acts on the two polarization modes of a spatial label and
//! is applied identically to each temporal component the label carries.
//! Jones matrices are indexed `[output][input]` over `(H, V)`.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{check_unit_interval, Error, Result};
use crate::fock::{ModeRegistry, ModeTransform, Polarization, Temporal};

pub type Jones = [[Complex64; 2]; 2];
pub type JonesVector = [Complex64; 2];

fn c(re: f64) -> Complex64 {
    Complex64::new(re, 0.0)
}

/// Named single-photon polarization states.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PolarizationState {
    H,
    V,
    /// `(H + V)/√2`
    D,
    /// `(H − V)/√2`
    DBar,
    /// `(H + iV)/√2`
    R,
    /// `(H − iV)/√2`
    L,
}

impl PolarizationState {
    pub fn jones(self) -> JonesVector {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        match self {
            PolarizationState::H => [c(1.0), c(0.0)],
            PolarizationState::V => [c(0.0), c(1.0)],
            PolarizationState::D => [c(s), c(s)],
            PolarizationState::DBar => [c(s), c(-s)],
            PolarizationState::R => [c(s), Complex64::new(0.0, s)],
            PolarizationState::L => [c(s), Complex64::new(0.0, -s)],
        }
    }
}

pub fn normalize(v: JonesVector) -> Result<JonesVector> {
    let n = (v[0].norm_sqr() + v[1].norm_sqr()).sqrt();
    if !(n > 0.0) || !n.is_finite() {
        return Err(Error::Config("polarization vector must be nonzero and finite".into()));
    }
    Ok([v[0] / n, v[1] / n])
}

pub fn rotation(theta: f64) -> Jones {
    let (s, co) = theta.sin_cos();
    [[c(co), c(-s)], [c(s), c(co)]]
}

pub fn matmul(a: &Jones, b: &Jones) -> Jones {
    let mut out = [[c(0.0); 2]; 2];
    for (r, row) in out.iter_mut().enumerate() {
        for (col, v) in row.iter_mut().enumerate() {
            *v = a[r][0] * b[0][col] + a[r][1] * b[1][col];
        }
    }
    out
}

pub fn apply_jones(j: &Jones, v: &JonesVector) -> JonesVector {
    [j[0][0] * v[0] + j[0][1] * v[1], j[1][0] * v[0] + j[1][1] * v[1]]
}

/// `R(θ)·diag(1, e^{iδ})·R(−θ)`.
pub fn waveplate_jones(theta: f64, retardance: f64) -> Jones {
    let retarder = [[c(1.0), c(0.0)], [c(0.0), Complex64::from_polar(1.0, retardance)]];
    matmul(&matmul(&rotation(theta), &retarder), &rotation(-theta))
}

/// Unitary that sends `u` to H and its orthogonal complement to V, so a
/// detector on the H output realizes the projection onto `u`.
pub fn analyzer_jones(u: JonesVector) -> Result<Jones> {
    let u = normalize(u)?;
    Ok([[u[0].conj(), u[1].conj()], [-u[1], u[0]]])
}

fn check_finite(name: &'static str, v: f64) -> Result<()> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(Error::OutOfRange {
            name,
            value: v,
            range: "finite",
        })
    }
}

/// Applies a Jones matrix to every temporal component of `spatial`.
pub fn polarization_transform(reg: &ModeRegistry, spatial: &str, j: &Jones) -> Result<ModeTransform> {
    let mut inputs = Vec::new();
    for t in reg.temporals(spatial)? {
        for p in Polarization::BOTH {
            inputs.push(reg.mode(spatial, p, t)?);
        }
    }
    let n = inputs.len();
    let mut m = vec![c(0.0); n * n];
    for block in 0..n / 2 {
        for r in 0..2 {
            for col in 0..2 {
                m[(2 * block + r) * n + 2 * block + col] = j[r][col];
            }
        }
    }
    ModeTransform::new(reg, inputs.clone(), inputs, m)
}

/// Builds a transform from an explicit list of (input, output, amplitude)
/// routes.
fn routed(reg: &ModeRegistry, routes: &[(usize, usize, Complex64)]) -> Result<ModeTransform> {
    let mut inputs: Vec<usize> = Vec::new();
    let mut outputs: Vec<usize> = Vec::new();
    for &(i, o, _) in routes {
        if !inputs.contains(&i) {
            inputs.push(i);
        }
        if !outputs.contains(&o) {
            outputs.push(o);
        }
    }
    let cols = inputs.len();
    let mut m = vec![c(0.0); outputs.len() * cols];
    for &(i, o, a) in routes {
        let col = inputs.iter().position(|&x| x == i).expect("input");
        let row = outputs.iter().position(|&x| x == o).expect("output");
        m[row * cols + col] += a;
    }
    ModeTransform::new(reg, inputs, outputs, m)
}

/// Polarizing beamsplitter: transmits H, reflects V.
///
/// `in1_H → out1_H`, `in1_V → out2_V`, `in2_H → out2_H`, `in2_V → out1_V`.
pub fn pbs(reg: &ModeRegistry, in1: &str, in2: &str, out1: &str, out2: &str) -> Result<ModeTransform> {
    if in1 == in2 || out1 == out2 {
        return Err(Error::Config("PBS ports must use distinct spatial labels".into()));
    }
    let mut routes = Vec::new();
    for (input, h_out, v_out) in [(in1, out1, out2), (in2, out2, out1)] {
        for t in reg.temporals(input)? {
            routes.push((reg.mode(input, Polarization::H, t)?, reg.mode(h_out, Polarization::H, t)?, c(1.0)));
            routes.push((reg.mode(input, Polarization::V, t)?, reg.mode(v_out, Polarization::V, t)?, c(1.0)));
        }
    }
    routed(reg, &routes)
}

pub fn waveplate(reg: &ModeRegistry, spatial: &str, angle: f64, retardance: f64) -> Result<ModeTransform> {
    check_finite("angle", angle)?;
    check_finite("retardance", retardance)?;
    polarization_transform(reg, spatial, &waveplate_jones(angle, retardance))
}

pub fn half_wave_plate(reg: &ModeRegistry, spatial: &str, angle: f64) -> Result<ModeTransform> {
    waveplate(reg, spatial, angle, std::f64::consts::PI)
}

pub fn quarter_wave_plate(reg: &ModeRegistry, spatial: &str, angle: f64) -> Result<ModeTransform> {
    waveplate(reg, spatial, angle, std::f64::consts::FRAC_PI_2)
}

pub fn phase_shifter(reg: &ModeRegistry, spatial: &str, phi_h: f64, phi_v: f64) -> Result<ModeTransform> {
    check_finite("phi_h", phi_h)?;
    check_finite("phi_v", phi_v)?;
    let j = [
        [Complex64::from_polar(1.0, phi_h), c(0.0)],
        [c(0.0), Complex64::from_polar(1.0, phi_v)],
    ];
    polarization_transform(reg, spatial, &j)
}

/// Rotates polarization `u` onto H (detected port) and its complement onto V.
pub fn polarizer_projection(reg: &ModeRegistry, spatial: &str, u: JonesVector) -> Result<ModeTransform> {
    polarization_transform(reg, spatial, &analyzer_jones(u)?)
}

/// Polarization-independent loss: a beamsplitter of amplitude `√T` into the
/// signal and `√(1−T)` into the (vacuum) modes of `loss_label`.
pub fn loss_channel(reg: &ModeRegistry, spatial: &str, transmittance: f64, loss_label: &str) -> Result<ModeTransform> {
    check_unit_interval("transmittance", transmittance)?;
    let (keep, lose) = (transmittance.sqrt(), (1.0 - transmittance).sqrt());
    let mut routes = Vec::new();
    for t in reg.temporals(spatial)? {
        for p in Polarization::BOTH {
            let s = reg.mode(spatial, p, t)?;
            routes.push((s, s, c(keep)));
            routes.push((s, reg.mode(loss_label, p, t)?, c(lose)));
        }
    }
    routed(reg, &routes)
}

/// Glass plate with reflectance `R`.
///
/// Light entering on the transmit side keeps amplitude `√(1−R)`; light
/// entering on the reflect side is sent on with amplitude `√R`. The
/// complementary amplitudes go to the discard labels.
pub fn glass_plate(
    reg: &ModeRegistry,
    transmit_in: &str,
    transmit_discard: &str,
    reflect_in: Option<(&str, &str)>,
    reflectance: f64,
) -> Result<ModeTransform> {
    check_unit_interval("reflectance", reflectance)?;
    let (tr, rf) = ((1.0 - reflectance).sqrt(), reflectance.sqrt());
    let mut routes = Vec::new();
    let mut port = |spatial: &str, discard: &str, keep: f64, lose: f64| -> Result<()> {
        for t in reg.temporals(spatial)? {
            for p in Polarization::BOTH {
                let s = reg.mode(spatial, p, t)?;
                routes.push((s, s, c(keep)));
                routes.push((s, reg.mode(discard, p, t)?, c(lose)));
            }
        }
        Ok(())
    };
    port(transmit_in, transmit_discard, tr, rf)?;
    if let Some((spatial, discard)) = reflect_in {
        port(spatial, discard, rf, tr)?;
    }
    routed(reg, &routes)
}

/// Splits each polarization of `spatial` into `s·matched + √(1−s²)·orthogonal`.
/// Only the matched part can interfere with light occupying matched modes
/// elsewhere.
pub fn overlap_split(reg: &ModeRegistry, spatial: &str, s: f64) -> Result<ModeTransform> {
    check_unit_interval("overlap", s)?;
    if !reg.has_twins(spatial) {
        return Err(Error::UnknownMode(format!("{spatial} has no orthogonal temporal twin")));
    }
    let o = (1.0 - s * s).max(0.0).sqrt();
    let mut routes = Vec::new();
    for p in Polarization::BOTH {
        let m = reg.mode(spatial, p, Temporal::Matched)?;
        let x = reg.mode(spatial, p, Temporal::Orthogonal)?;
        routes.push((m, m, c(s)));
        routes.push((m, x, c(o)));
        routes.push((x, m, c(-o)));
        routes.push((x, x, c(s)));
    }
    routed(reg, &routes)
}

/// Gaussian amplitude overlap versus optical delay.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OverlapModel {
    /// Amplitude overlap at zero delay.
    pub s0: f64,
    /// Gaussian width in μm.
    pub sigma_um: f64,
}

impl OverlapModel {
    pub fn new(s0: f64, sigma_um: f64) -> Result<Self> {
        check_unit_interval("s0", s0)?;
        if !(sigma_um > 0.0) || !sigma_um.is_finite() {
            return Err(Error::OutOfRange {
                name: "sigma_um",
                value: sigma_um,
                range: "(0, inf)",
            });
        }
        Ok(OverlapModel { s0, sigma_um })
    }

    /// `s(Δx) = s₀·exp(−Δx²/(2σ²))`.
    pub fn at_delay(&self, delay_um: f64) -> f64 {
        let x = delay_um / self.sigma_um;
        self.s0 * (-0.5 * x * x).exp()
    }
}

pub fn overlap_at_delay(model: &OverlapModel, delay_um: f64) -> f64 {
    model.at_delay(delay_um)
}

/// Declarative element description, interpreted by both the sparse engine
/// and the dense reference pipeline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Element {
    Pbs {
        in1: String,
        in2: String,
        out1: String,
        out2: String,
    },
    Waveplate {
        spatial: String,
        angle: f64,
        retardance: f64,
    },
    PhaseShifter {
        spatial: String,
        phi_h: f64,
        phi_v: f64,
    },
    Loss {
        spatial: String,
        transmittance: f64,
        loss_label: String,
    },
    GlassPlate {
        transmit_in: String,
        transmit_discard: String,
        reflectance: f64,
    },
    PolarizerProjection {
        spatial: String,
        jones: JonesVector,
    },
    OverlapSplit {
        spatial: String,
        overlap: f64,
    },
}

impl Element {
    pub fn build(&self, reg: &ModeRegistry) -> Result<ModeTransform> {
        match self {
            Element::Pbs { in1, in2, out1, out2 } => pbs(reg, in1, in2, out1, out2),
            Element::Waveplate {
                spatial,
                angle,
                retardance,
            } => waveplate(reg, spatial, *angle, *retardance),
            Element::PhaseShifter { spatial, phi_h, phi_v } => phase_shifter(reg, spatial, *phi_h, *phi_v),
            Element::Loss {
                spatial,
                transmittance,
                loss_label,
            } => loss_channel(reg, spatial, *transmittance, loss_label),
            Element::GlassPlate {
                transmit_in,
                transmit_discard,
                reflectance,
            } => glass_plate(reg, transmit_in, transmit_discard, None, *reflectance),
            Element::PolarizerProjection { spatial, jones } => polarizer_projection(reg, spatial, *jones),
            Element::OverlapSplit { spatial, overlap } => overlap_split(reg, spatial, *overlap),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fock::{make_registry, occupation, FockState, SpatialSpec};
    use std::f64::consts::{FRAC_PI_4, FRAC_PI_8, PI};
    use std::sync::Arc;

    fn reg() -> Arc<ModeRegistry> {
        Arc::new(
            make_registry(&[
                SpatialSpec::split("A"),
                SpatialSpec::split("R"),
                SpatialSpec::new("B"),
                SpatialSpec::new("L"),
            ])
            .unwrap(),
        )
    }

    fn photon(reg: &Arc<ModeRegistry>, spatial: &str, v: JonesVector) -> FockState {
        let h = reg.mode(spatial, Polarization::H, Temporal::Matched).unwrap();
        let vv = reg.mode(spatial, Polarization::V, Temporal::Matched).unwrap();
        let modes = reg.spatial_modes(spatial).unwrap();
        FockState::from_terms(
            reg.clone(),
            4,
            &modes,
            [(occupation(reg, &[(h, 1)]), v[0]), (occupation(reg, &[(vv, 1)]), v[1])],
        )
        .unwrap()
    }

    fn pol_amps(s: &FockState, spatial: &str) -> JonesVector {
        let reg = s.registry();
        let h = reg.mode(spatial, Polarization::H, Temporal::Matched).unwrap();
        let v = reg.mode(spatial, Polarization::V, Temporal::Matched).unwrap();
        [s.amplitude(&occupation(reg, &[(h, 1)])), s.amplitude(&occupation(reg, &[(v, 1)]))]
    }

    fn close(a: JonesVector, b: JonesVector) -> bool {
        (a[0] - b[0]).norm() < 1e-14 && (a[1] - b[1]).norm() < 1e-14
    }

    #[test]
    fn pbs_routes_by_polarization() {
        let reg = reg();
        let t = pbs(&reg, "A", "R", "A", "R").unwrap();
        let h = photon(&reg, "A", PolarizationState::H.jones()).apply_transform(&t).unwrap();
        assert!(close(pol_amps(&h, "A"), PolarizationState::H.jones()));
        let v = photon(&reg, "A", PolarizationState::V.jones()).apply_transform(&t).unwrap();
        assert!(close(pol_amps(&v, "R"), PolarizationState::V.jones()));
    }

    #[test]
    fn pbs_sends_h_and_v_inputs_to_one_port() {
        let reg = reg();
        let t = pbs(&reg, "A", "R", "A", "R").unwrap();
        let ah = reg.mode("A", Polarization::H, Temporal::Matched).unwrap();
        let rv = reg.mode("R", Polarization::V, Temporal::Matched).unwrap();
        let mut modes = reg.spatial_modes("A").unwrap();
        modes.extend(reg.spatial_modes("R").unwrap());
        let s = FockState::from_terms(reg.clone(), 4, &modes, [(occupation(&reg, &[(ah, 1), (rv, 1)]), c(1.0))])
            .unwrap()
            .apply_transform(&t)
            .unwrap();
        let av = reg.mode("A", Polarization::V, Temporal::Matched).unwrap();
        assert!((s.amplitude(&occupation(&reg, &[(ah, 1), (av, 1)])) - c(1.0)).norm() < 1e-15);
        let r_modes = reg.spatial_modes("R").unwrap();
        assert_eq!(s.photon_number_distribution(&r_modes)[0], 1.0);
    }

    #[test]
    fn waveplate_examples() {
        let reg = reg();
        let h = photon(&reg, "A", PolarizationState::H.jones());
        let v = photon(&reg, "A", PolarizationState::V.jones());
        let hwp0 = half_wave_plate(&reg, "A", 0.0).unwrap();
        assert!(close(pol_amps(&h.apply_transform(&hwp0).unwrap(), "A"), [c(1.0), c(0.0)]));
        assert!(close(pol_amps(&v.apply_transform(&hwp0).unwrap(), "A"), [c(0.0), c(-1.0)]));
        let hwp225 = half_wave_plate(&reg, "A", FRAC_PI_8).unwrap();
        assert!(close(
            pol_amps(&h.apply_transform(&hwp225).unwrap(), "A"),
            PolarizationState::D.jones()
        ));
        let hwp45 = half_wave_plate(&reg, "A", FRAC_PI_4).unwrap();
        assert!(close(
            pol_amps(&h.apply_transform(&hwp45).unwrap(), "A"),
            PolarizationState::V.jones()
        ));
    }

    #[test]
    fn quarter_wave_plate_makes_circular() {
        let reg = reg();
        let d = photon(&reg, "A", PolarizationState::D.jones());
        let out = d.apply_transform(&quarter_wave_plate(&reg, "A", 0.0).unwrap()).unwrap();
        assert!(close(pol_amps(&out, "A"), PolarizationState::R.jones()));
    }

    #[test]
    fn phase_shifter_examples() {
        let reg = reg();
        let d = photon(&reg, "A", PolarizationState::D.jones());
        let id = d.apply_transform(&phase_shifter(&reg, "A", 0.0, 0.0).unwrap()).unwrap();
        assert!(id.max_difference(&d).unwrap() < 1e-15);
        let flipped = d.apply_transform(&phase_shifter(&reg, "A", 0.3, 0.3 + PI).unwrap()).unwrap();
        let target = photon(&reg, "A", PolarizationState::DBar.jones());
        assert!((flipped.overlap_fidelity(&target).unwrap() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn analyzer_maps_target_to_h() {
        for p in [
            PolarizationState::D,
            PolarizationState::DBar,
            PolarizationState::R,
            PolarizationState::L,
            PolarizationState::V,
        ] {
            let out = apply_jones(&analyzer_jones(p.jones()).unwrap(), &p.jones());
            assert!((out[0].norm() - 1.0).abs() < 1e-15 && out[1].norm() < 1e-15, "{p:?}");
        }
    }

    #[test]
    fn loss_channel_examples() {
        let reg = reg();
        let b = photon(&reg, "B", PolarizationState::H.jones());
        let same = b.apply_transform(&loss_channel(&reg, "B", 1.0, "L").unwrap()).unwrap();
        let b_modes = reg.spatial_modes("B").unwrap();
        assert!((same.photon_number_distribution(&b_modes)[1] - 1.0).abs() < 1e-15);
        let lossy = b.apply_transform(&loss_channel(&reg, "B", 0.1, "L").unwrap()).unwrap();
        assert!((lossy.photon_number_distribution(&b_modes)[1] - 0.1).abs() < 1e-15);
        assert!(loss_channel(&reg, "B", 1.2, "L").is_err());
        assert!(loss_channel(&reg, "B", -0.1, "L").is_err());
    }

    #[test]
    fn glass_plate_examples() {
        let reg = reg();
        let b = photon(&reg, "B", PolarizationState::D.jones());
        let b_modes = reg.spatial_modes("B").unwrap();
        for (r, expected) in [(0.0, 1.0), (0.05, 0.95), (1.0, 0.0)] {
            let out = b.apply_transform(&glass_plate(&reg, "B", "L", None, r).unwrap()).unwrap();
            assert!((out.photon_number_distribution(&b_modes)[1] - expected).abs() < 1e-14);
        }
        let r = photon(&reg, "A", PolarizationState::H.jones());
        let a_modes = reg.spatial_modes("A").unwrap();
        let refl = r
            .apply_transform(&glass_plate(&reg, "B", "L", Some(("A", "R")), 1.0).unwrap())
            .unwrap();
        assert!((refl.photon_number_distribution(&a_modes)[1] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn overlap_split_examples() {
        let reg = reg();
        let d = photon(&reg, "R", PolarizationState::D.jones());
        let id = d.apply_transform(&overlap_split(&reg, "R", 1.0).unwrap()).unwrap();
        assert!(id.max_difference(&d).unwrap() < 1e-15);
        let half = d.apply_transform(&overlap_split(&reg, "R", 0.6).unwrap()).unwrap();
        let r_modes = reg.spatial_modes("R").unwrap();
        assert!((half.mean_photon_number(&r_modes) - 1.0).abs() < 1e-14);
        assert!(overlap_split(&reg, "B", 0.5).is_err());
    }

    #[test]
    fn overlap_model() {
        let m = OverlapModel::new(0.9, 100.0).unwrap();
        assert_eq!(m.at_delay(0.0), 0.9);
        assert!(m.at_delay(1e5) < 1e-300);
        assert!(OverlapModel::new(0.9, 0.0).is_err());
        assert!(OverlapModel::new(1.1, 1.0).is_err());
    }

    #[test]
    fn elements_are_isometries() {
        let reg = reg();
        let elements = [
            Element::Pbs {
                in1: "A".into(),
                in2: "R".into(),
                out1: "A".into(),
                out2: "R".into(),
            },
            Element::Waveplate {
                spatial: "A".into(),
                angle: 0.37,
                retardance: 1.1,
            },
            Element::PhaseShifter {
                spatial: "R".into(),
                phi_h: 0.2,
                phi_v: -1.3,
            },
            Element::Loss {
                spatial: "B".into(),
                transmittance: 0.3,
                loss_label: "L".into(),
            },
            Element::GlassPlate {
                transmit_in: "B".into(),
                transmit_discard: "L".into(),
                reflectance: 0.05,
            },
            Element::PolarizerProjection {
                spatial: "A".into(),
                jones: PolarizationState::R.jones(),
            },
            Element::OverlapSplit {
                spatial: "R".into(),
                overlap: 0.7,
            },
        ];
        for e in &elements {
            let t = e.build(&reg).unwrap();
            assert!(t.isometry_deviation() < 1e-12, "{e:?}");
        }
    }
}
