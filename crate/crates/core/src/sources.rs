//! Photon sources: multi-pair SPDC, coherent pulses, single photons.

use std::sync::Arc;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fock::{FockState, ModeRegistry, Occupation, Polarization, Temporal};
use crate::optics::{normalize, JonesVector, PolarizationState};

/// Weight above which a source truncation is reported as a warning.
pub const TAIL_WARNING: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpdcParams {
    /// Squared pair amplitude per pulse; the one-pair probability is ≈ 2γ.
    pub gamma: f64,
    pub pair_cutoff: u32,
}

impl Default for SpdcParams {
    fn default() -> Self {
        SpdcParams {
            gamma: 3.0e-3,
            pair_cutoff: 2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoherentParams {
    /// Mean photon number as launched by the sender.
    pub mean_photons: f64,
    pub polarization: JonesVector,
}

impl CoherentParams {
    pub fn diagonal(mean_photons: f64) -> Self {
        CoherentParams {
            mean_photons,
            polarization: PolarizationState::D.jones(),
        }
    }
}

/// Truncation bookkeeping returned with every prepared source state.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct SourceDiagnostics {
    pub tail_weight: f64,
    pub warning: Option<String>,
}

impl SourceDiagnostics {
    fn from_tail(what: &str, tail: f64) -> Self {
        let tail = tail.max(0.0);
        SourceDiagnostics {
            tail_weight: tail,
            warning: (tail > TAIL_WARNING).then(|| format!("{what} truncation drops weight {tail:.3e}")),
        }
    }
}

fn matched(reg: &ModeRegistry, spatial: &str) -> Result<(usize, usize)> {
    Ok((
        reg.mode(spatial, Polarization::H, Temporal::Matched)?,
        reg.mode(spatial, Polarization::V, Temporal::Matched)?,
    ))
}

/// Unnormalized pair-number weights `(k+1)γ^k` of the two-mode squeezed
/// polarization-entangled state, for `k = 0..=max_pairs`.
pub fn pair_weights(gamma: f64, max_pairs: u32) -> Vec<f64> {
    (0..=max_pairs).map(|k| (k as f64 + 1.0) * gamma.powi(k as i32)).collect()
}

/// Normalized truncation of `exp[√γ (a_H†b_H† + a_V†b_V†)]|0⟩`.
///
/// The k-pair sector is `γ^{k/2} Σ_j |j,k−j⟩_a |j,k−j⟩_b`, so its weight is
/// `(k+1)γ^k` before normalization. The reported tail is the weight the
/// truncation removes from the normalized infinite series.
pub fn spdc_state(reg: Arc<ModeRegistry>, params: &SpdcParams, a: &str, b: &str, cutoff: u32) -> Result<(FockState, SourceDiagnostics)> {
    if !(0.0..1.0).contains(&params.gamma) {
        return Err(Error::OutOfRange {
            name: "gamma",
            value: params.gamma,
            range: "[0, 1)",
        });
    }
    if params.pair_cutoff < 1 {
        return Err(Error::Config("pair cutoff must be at least 1".into()));
    }
    let (ah, av) = matched(&reg, a)?;
    let (bh, bv) = matched(&reg, b)?;
    let max_pairs = params.pair_cutoff.min(cutoff / 2);
    let z: f64 = pair_weights(params.gamma, max_pairs).iter().sum();
    let mut terms = Vec::new();
    for k in 0..=max_pairs {
        let amp = params.gamma.powf(k as f64 / 2.0) / z.sqrt();
        for j in 0..=k {
            let mut occ: Occupation = vec![0; reg.len()];
            occ[ah] = j as u8;
            occ[bh] = j as u8;
            occ[av] = (k - j) as u8;
            occ[bv] = (k - j) as u8;
            terms.push((occ, Complex64::new(amp, 0.0)));
        }
    }
    let tail = 1.0 - z * (1.0 - params.gamma).powi(2);
    let state = FockState::from_terms(reg, cutoff, &[ah, av, bh, bv], terms)?;
    Ok((state, SourceDiagnostics::from_tail("SPDC", tail)))
}

/// `α|HH⟩ + β|VV⟩` on two spatial labels: one photon each.
pub fn encoded_pair(reg: Arc<ModeRegistry>, a: &str, b: &str, alpha: Complex64, beta: Complex64, cutoff: u32) -> Result<FockState> {
    let norm = alpha.norm_sqr() + beta.norm_sqr();
    if (norm - 1.0).abs() > 1e-12 {
        return Err(Error::Config(format!("|alpha|^2 + |beta|^2 = {norm}, expected 1")));
    }
    let (ah, av) = matched(&reg, a)?;
    let (bh, bv) = matched(&reg, b)?;
    let mut hh = vec![0u8; reg.len()];
    hh[ah] = 1;
    hh[bh] = 1;
    let mut vv = vec![0u8; reg.len()];
    vv[av] = 1;
    vv[bv] = 1;
    FockState::from_terms(reg, cutoff, &[ah, av, bh, bv], [(hh, alpha), (vv, beta)])
}

pub fn single_photon(reg: Arc<ModeRegistry>, spatial: &str, polarization: JonesVector, cutoff: u32) -> Result<FockState> {
    let u = normalize(polarization)?;
    let (h, v) = matched(&reg, spatial)?;
    let mut oh = vec![0u8; reg.len()];
    oh[h] = 1;
    let mut ov = vec![0u8; reg.len()];
    ov[v] = 1;
    FockState::from_terms(reg, cutoff, &[h, v], [(oh, u[0]), (ov, u[1])])
}

/// Product of coherent states `|α_j⟩` on the listed modes, truncated at
/// total photon number `cutoff`. Amplitudes are exact Poisson amplitudes, so
/// the state's norm falls short of 1 by the dropped tail.
pub fn multimode_coherent(
    reg: Arc<ModeRegistry>,
    amplitudes: &[(usize, Complex64)],
    cutoff: u32,
) -> Result<(FockState, SourceDiagnostics)> {
    let mean: f64 = amplitudes.iter().map(|(_, a)| a.norm_sqr()).sum();
    if !mean.is_finite() {
        return Err(Error::OutOfRange {
            name: "coherent amplitude",
            value: mean,
            range: "finite",
        });
    }
    let prefactor = (-mean / 2.0).exp();
    let modes: Vec<usize> = amplitudes.iter().map(|(m, _)| *m).collect();
    let mut terms = Vec::new();
    let mut counts = vec![0u32; amplitudes.len()];
    loop {
        let n: u32 = counts.iter().sum();
        if n <= cutoff {
            let mut occ: Occupation = vec![0; reg.len()];
            let mut amp = Complex64::new(prefactor, 0.0);
            for (i, &(m, alpha)) in amplitudes.iter().enumerate() {
                occ[m] += counts[i] as u8;
                let k = counts[i];
                let fact: f64 = (1..=k).map(|x| x as f64).product();
                amp *= alpha.powu(k) / fact.sqrt();
            }
            terms.push((occ, amp));
        }
        // odometer over per-mode counts 0..=cutoff
        let mut i = 0;
        loop {
            if i == counts.len() {
                let state = FockState::from_terms(reg, cutoff, &modes, terms)?;
                let tail = 1.0 - state.norm_squared();
                return Ok((state, SourceDiagnostics::from_tail("coherent", tail)));
            }
            counts[i] += 1;
            if counts[i] <= cutoff {
                break;
            }
            counts[i] = 0;
            i += 1;
        }
    }
}

/// Truncated coherent pulse of mean `μ_B` in the matched modes of `spatial`.
pub fn coherent_state(
    reg: Arc<ModeRegistry>,
    params: &CoherentParams,
    spatial: &str,
    cutoff: u32,
) -> Result<(FockState, SourceDiagnostics)> {
    if !(params.mean_photons >= 0.0) {
        return Err(Error::OutOfRange {
            name: "mean_photons",
            value: params.mean_photons,
            range: "[0, inf)",
        });
    }
    let u = normalize(params.polarization)?;
    let (h, v) = matched(&reg, spatial)?;
    let a = params.mean_photons.sqrt();
    multimode_coherent(reg, &[(h, u[0] * a), (v, u[1] * a)], cutoff)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fock::{make_registry, SpatialSpec};

    fn reg() -> Arc<ModeRegistry> {
        Arc::new(make_registry(&[SpatialSpec::new("A"), SpatialSpec::new("B"), SpatialSpec::new("R")]).unwrap())
    }

    #[test]
    fn spdc_zero_gamma_is_vacuum() {
        let (s, d) = spdc_state(
            reg(),
            &SpdcParams {
                gamma: 0.0,
                pair_cutoff: 2,
            },
            "A",
            "B",
            4,
        )
        .unwrap();
        assert_eq!(s.len(), 1);
        assert_eq!(s.amplitude(&[0; 6]), Complex64::new(1.0, 0.0));
        assert!(d.warning.is_none());
    }

    #[test]
    fn spdc_one_pair_sector_is_phi_plus() {
        let reg = reg();
        let (s, _) = spdc_state(reg.clone(), &SpdcParams::default(), "A", "B", 4).unwrap();
        let hh = s.amplitude(&[1, 0, 1, 0, 0, 0]);
        let vv = s.amplitude(&[0, 1, 0, 1, 0, 0]);
        assert!(hh.norm() > 0.0 && (hh - vv).norm() < 1e-18);
        assert!(s.is_normalized(1e-14));
    }

    #[test]
    fn spdc_warns_on_heavy_tail() {
        let (_, d) = spdc_state(
            reg(),
            &SpdcParams {
                gamma: 0.1,
                pair_cutoff: 1,
            },
            "A",
            "B",
            4,
        )
        .unwrap();
        assert!(d.warning.is_some());
        assert!(spdc_state(
            reg(),
            &SpdcParams {
                gamma: 1.0,
                pair_cutoff: 1
            },
            "A",
            "B",
            4
        )
        .is_err());
    }

    #[test]
    fn coherent_examples() {
        let reg = reg();
        let (vac, _) = coherent_state(reg.clone(), &CoherentParams::diagonal(0.0), "R", 4).unwrap();
        assert_eq!(vac.len(), 1);
        let (s, d) = coherent_state(reg.clone(), &CoherentParams::diagonal(0.1), "R", 4).unwrap();
        let modes = reg.spatial_modes("R").unwrap();
        let p = s.photon_number_distribution(&modes);
        assert!((p[1] - 0.1 * (-0.1f64).exp()).abs() < 1e-15);
        assert!((p[1] - 0.0905).abs() < 5e-5);
        assert!((s.mean_photon_number(&modes) - 0.1).abs() < 1e-6);
        assert!(d.tail_weight < 1e-7 && d.warning.is_none());
        let (_, heavy) = coherent_state(reg, &CoherentParams::diagonal(3.0), "R", 4).unwrap();
        assert!(heavy.warning.is_some());
    }

    #[test]
    fn encoded_pair_requires_normalization() {
        let o = Complex64::new(1.0, 0.0);
        assert!(encoded_pair(reg(), "A", "B", o, o, 4).is_err());
        let s = encoded_pair(reg(), "A", "B", o, Complex64::new(0.0, 0.0), 4).unwrap();
        assert!(s.is_normalized(1e-15));
    }
}
