//! Threshold detectors and polarization analysis of post-selected events.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{check_unit_interval, Error, Result};
use crate::fock::{FockState, Polarization, PolarizationDensityMatrix};
use crate::optics::{apply_jones, polarizer_projection, JonesVector, PolarizationState};

/// Non-photon-number-resolving detector with efficiency and a per-pulse
/// dark-count probability.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectorModel {
    pub name: String,
    pub efficiency: f64,
    pub dark_probability: f64,
}

impl DetectorModel {
    pub fn new(name: impl Into<String>, efficiency: f64, dark_probability: f64) -> Result<Self> {
        check_unit_interval("efficiency", efficiency)?;
        if !(0.0..1.0).contains(&dark_probability) {
            return Err(Error::OutOfRange {
                name: "dark_probability",
                value: dark_probability,
                range: "[0, 1)",
            });
        }
        Ok(DetectorModel {
            name: name.into(),
            efficiency,
            dark_probability,
        })
    }

    pub fn ideal(name: impl Into<String>) -> Self {
        DetectorModel {
            name: name.into(),
            efficiency: 1.0,
            dark_probability: 0.0,
        }
    }

    /// `(1−η)ⁿ(1−d)`
    pub fn no_click(&self, photons: u32) -> f64 {
        (1.0 - self.efficiency).powi(photons as i32) * (1.0 - self.dark_probability)
    }

    pub fn click(&self, photons: u32) -> f64 {
        1.0 - self.no_click(photons)
    }
}

/// A detector watching a set of modes.
#[derive(Debug, Clone)]
pub struct DetectorAssignment {
    pub model: DetectorModel,
    pub modes: Vec<usize>,
}

/// What each detector must report in a coincidence pattern.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Requirement {
    Click,
    NoClick,
    Any,
}

fn check_disjoint(state: &FockState, detectors: &[DetectorAssignment]) -> Result<()> {
    let mut seen = BTreeSet::new();
    for d in detectors {
        for &m in &d.modes {
            if m >= state.registry().len() {
                return Err(Error::UnknownMode(format!("index {m}")));
            }
            if !seen.insert(m) {
                return Err(Error::OverlappingDetectors(state.registry().key(m).to_string()));
            }
        }
    }
    Ok(())
}

fn pattern_factor(occ: &[u8], detectors: &[DetectorAssignment], pattern: &[Requirement]) -> f64 {
    let mut f = 1.0;
    for (d, req) in detectors.iter().zip(pattern) {
        let n: u32 = d.modes.iter().map(|&m| occ[m] as u32).sum();
        f *= match req {
            Requirement::Click => d.model.click(n),
            Requirement::NoClick => d.model.no_click(n),
            Requirement::Any => 1.0,
        };
    }
    f
}

/// Probability of an exact click pattern, summed over every unobserved mode.
/// The POVM is diagonal in the Fock basis, so terms add incoherently.
pub fn pattern_probability(state: &FockState, detectors: &[DetectorAssignment], pattern: &[Requirement]) -> Result<f64> {
    check_disjoint(state, detectors)?;
    if pattern.len() != detectors.len() {
        return Err(Error::Config("pattern length differs from detector count".into()));
    }
    Ok(state
        .terms()
        .map(|(occ, a)| a.norm_sqr() * pattern_factor(occ, detectors, pattern))
        .sum())
}

/// Click (`true`) / no-click (`false`) pattern probability.
pub fn click_probabilities(state: &FockState, detectors: &[DetectorAssignment], pattern: &[bool]) -> Result<f64> {
    let req: Vec<Requirement> = pattern
        .iter()
        .map(|&c| if c { Requirement::Click } else { Requirement::NoClick })
        .collect();
    pattern_probability(state, detectors, &req)
}

/// Full distribution over the `2^k` click patterns; bit `i` of the index
/// is set when detector `i` clicks.
pub fn pattern_distribution(state: &FockState, detectors: &[DetectorAssignment]) -> Result<Vec<f64>> {
    check_disjoint(state, detectors)?;
    let k = detectors.len();
    let mut dist = vec![0.0; 1 << k];
    for (occ, a) in state.terms() {
        let w = a.norm_sqr();
        let no: Vec<f64> = detectors
            .iter()
            .map(|d| d.model.no_click(d.modes.iter().map(|&m| occ[m] as u32).sum()))
            .collect();
        for (idx, slot) in dist.iter_mut().enumerate() {
            let mut f = w;
            for (i, q) in no.iter().enumerate() {
                f *= if idx & (1 << i) != 0 { 1.0 - q } else { *q };
            }
            *slot += f;
        }
    }
    Ok(dist)
}

/// Pattern probability split by a term classifier.
pub fn pattern_probability_by<K: Ord>(
    state: &FockState,
    detectors: &[DetectorAssignment],
    pattern: &[Requirement],
    classify: impl Fn(&[u8]) -> K,
) -> Result<BTreeMap<K, f64>> {
    check_disjoint(state, detectors)?;
    let mut out = BTreeMap::new();
    for (occ, a) in state.terms() {
        let p = a.norm_sqr() * pattern_factor(occ, detectors, pattern);
        *out.entry(classify(occ)).or_insert(0.0) += p;
    }
    Ok(out)
}

/// Analysis bases in table order, each as its (+1, −1) eigenstates.
pub const BASES: [(PolarizationState, PolarizationState); 3] = [
    (PolarizationState::H, PolarizationState::V),
    (PolarizationState::D, PolarizationState::DBar),
    (PolarizationState::R, PolarizationState::L),
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Basis {
    Z = 0,
    X = 1,
    Y = 2,
}

impl Basis {
    pub const ALL: [Basis; 3] = [Basis::Z, Basis::X, Basis::Y];

    /// Index of the matching Pauli matrix (`σ_x = 1, σ_y = 2, σ_z = 3`).
    pub fn pauli_index(self) -> usize {
        match self {
            Basis::Z => 3,
            Basis::X => 1,
            Basis::Y => 2,
        }
    }
}

/// Coincidence probabilities for every pair of analysis settings:
/// `p[e_basis][g_basis][2·e_minus + g_minus]`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct SettingTable {
    pub p: [[[f64; 4]; 3]; 3],
}

impl SettingTable {
    pub fn get(&self, e: Basis, g: Basis) -> [f64; 4] {
        self.p[e as usize][g as usize]
    }

    pub fn add_scaled(&mut self, other: &SettingTable, w: f64) {
        for e in 0..3 {
            for g in 0..3 {
                for o in 0..4 {
                    self.p[e][g][o] += w * other.p[e][g][o];
                }
            }
        }
    }

    pub fn max_abs_difference(&self, other: &SettingTable) -> f64 {
        let mut worst: f64 = 0.0;
        for e in 0..3 {
            for g in 0..3 {
                for o in 0..4 {
                    worst = worst.max((self.p[e][g][o] - other.p[e][g][o]).abs());
                }
            }
        }
        worst
    }

    /// Normalized two-qubit correlator for one basis pair:
    /// `(p₊₊ − p₊₋ − p₋₊ + p₋₋)/Σp`.
    pub fn correlation(&self, e: Basis, g: Basis) -> Option<f64> {
        let q = self.get(e, g);
        let n: f64 = q.iter().sum();
        (n > 0.0).then(|| (q[0] - q[1] - q[2] + q[3]) / n)
    }

    /// Pauli correlator table `S[i][j] = ⟨σ_i ⊗ σ_j⟩` estimated from the
    /// normalized coincidence fractions. Single-qubit marginals are averaged
    /// over the partner's three bases.
    pub fn correlators(&self) -> Option<[[f64; 4]; 4]> {
        let mut s = [[0.0; 4]; 4];
        s[0][0] = 1.0;
        for e in Basis::ALL {
            for g in Basis::ALL {
                let q = self.get(e, g);
                let n: f64 = q.iter().sum();
                if n <= 0.0 {
                    return None;
                }
                let (i, j) = (e.pauli_index(), g.pauli_index());
                s[i][j] = (q[0] - q[1] - q[2] + q[3]) / n;
                s[i][0] += (q[0] + q[1] - q[2] - q[3]) / n / 3.0;
                s[0][j] += (q[0] - q[1] + q[2] - q[3]) / n / 3.0;
            }
        }
        Some(s)
    }

    /// Linear-inversion estimate of the analyzed two-qubit state.
    pub fn density_matrix(&self) -> Result<PolarizationDensityMatrix> {
        let s = self.correlators().ok_or(Error::EmptyPostSelection)?;
        PolarizationDensityMatrix::from_correlators(&s)
    }
}

/// Polarization projection applied to a heralding mode before its detector.
#[derive(Debug, Clone, PartialEq)]
pub struct Herald {
    pub spatial: String,
    pub polarization: JonesVector,
    pub detector: DetectorModel,
    /// Also accept the orthogonal outcome, with a σ_z feedforward on the
    /// analyzed photon E.
    pub include_orthogonal_branch: bool,
}

/// Detectors and labels for polarization analysis of photons E and G,
/// optionally conditioned on a heralding detection.
#[derive(Debug, Clone, PartialEq)]
pub struct AnalysisSetup {
    pub e_label: String,
    pub e_detector: DetectorModel,
    pub g_label: String,
    pub g_detector: DetectorModel,
    pub herald: Option<Herald>,
    /// Labels whose photon count identifies the number of emitted pairs.
    pub pair_labels: Vec<String>,
}

/// Emitted pairs and ancilla photons of one term of the final state.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Sector {
    pub pairs: u32,
    pub ancilla: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Conditioned {
    pub table: SettingTable,
    /// Coincidence probability with E and G detected regardless of
    /// polarization.
    pub success_probability: f64,
    pub components: BTreeMap<Sector, f64>,
    /// `None` when the post-selection never succeeds in some setting.
    pub dm: Option<PolarizationDensityMatrix>,
}

fn sigma_z(u: JonesVector) -> JonesVector {
    apply_jones(
        &[
            [num_complex::Complex64::new(1.0, 0.0), num_complex::Complex64::new(0.0, 0.0)],
            [num_complex::Complex64::new(0.0, 0.0), num_complex::Complex64::new(-1.0, 0.0)],
        ],
        &u,
    )
}

/// Raw coincidence data before any normalization.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CoincidenceData {
    pub table: SettingTable,
    pub success_probability: f64,
    pub components: BTreeMap<Sector, f64>,
}

impl CoincidenceData {
    pub fn conditioned(self) -> Conditioned {
        let dm = self.table.density_matrix().ok();
        Conditioned {
            table: self.table,
            success_probability: self.success_probability,
            components: self.components,
            dm,
        }
    }
}

/// Applies the herald projection, then measures every pair of analysis
/// settings on E and G with threshold detectors.
pub fn coincidence_data(state: &FockState, setup: &AnalysisSetup) -> Result<CoincidenceData> {
    let reg = state.registry().clone();
    let port = |label: &str, p: Polarization| reg.polarization_modes(label, p);
    let all = |label: &str| reg.spatial_modes(label);

    let mut state = state.clone();
    let herald_ports = match &setup.herald {
        Some(h) => {
            state = state.apply_transform(&polarizer_projection(&reg, &h.spatial, h.polarization)?)?;
            Some((port(&h.spatial, Polarization::H)?, port(&h.spatial, Polarization::V)?))
        }
        None => None,
    };

    // Branches: (herald requirements, E analyzer modifier)
    let mut branches: Vec<(Vec<Requirement>, bool)> = Vec::new();
    match (&setup.herald, &herald_ports) {
        (Some(h), Some(_)) => {
            branches.push((vec![Requirement::Click, Requirement::Any], false));
            if h.include_orthogonal_branch {
                branches.push((vec![Requirement::NoClick, Requirement::Click], true));
            }
        }
        _ => branches.push((vec![], false)),
    }

    let herald_detectors = |detectors: &mut Vec<DetectorAssignment>| {
        if let (Some(h), Some((hp, vp))) = (&setup.herald, &herald_ports) {
            detectors.push(DetectorAssignment {
                model: h.detector.clone(),
                modes: hp.clone(),
            });
            detectors.push(DetectorAssignment {
                model: h.detector.clone(),
                modes: vp.clone(),
            });
        }
    };

    // Polarization-blind coincidence and its sector breakdown.
    let mut blind = vec![
        DetectorAssignment {
            model: setup.e_detector.clone(),
            modes: all(&setup.e_label)?,
        },
        DetectorAssignment {
            model: setup.g_detector.clone(),
            modes: all(&setup.g_label)?,
        },
    ];
    herald_detectors(&mut blind);
    let pair_modes: Vec<usize> = setup.pair_labels.iter().map(|l| all(l)).collect::<Result<Vec<_>>>()?.concat();
    let classify = |occ: &[u8]| {
        let total: u32 = occ.iter().map(|&n| n as u32).sum();
        let pairs: u32 = pair_modes.iter().map(|&m| occ[m] as u32).sum();
        Sector {
            pairs,
            ancilla: total.saturating_sub(2 * pairs),
        }
    };
    let mut components: BTreeMap<Sector, f64> = BTreeMap::new();
    for (reqs, _) in &branches {
        let mut pattern = vec![Requirement::Click, Requirement::Click];
        pattern.extend(reqs.iter().copied());
        for (k, v) in pattern_probability_by(&state, &blind, &pattern, classify)? {
            *components.entry(k).or_insert(0.0) += v;
        }
    }
    let success_probability = components.values().sum();

    let e_plus = port(&setup.e_label, Polarization::H)?;
    let e_minus = port(&setup.e_label, Polarization::V)?;
    let g_plus = port(&setup.g_label, Polarization::H)?;
    let g_minus = port(&setup.g_label, Polarization::V)?;

    let mut table = SettingTable::default();
    for (reqs, feedforward) in &branches {
        for (ei, (e_state, _)) in BASES.iter().enumerate() {
            let mut u = e_state.jones();
            if *feedforward {
                u = sigma_z(u);
            }
            let after_e = state.apply_transform(&polarizer_projection(&reg, &setup.e_label, u)?)?;
            for (gi, (g_state, _)) in BASES.iter().enumerate() {
                let analyzed = after_e.apply_transform(&polarizer_projection(&reg, &setup.g_label, g_state.jones())?)?;
                for (o, (em, gm)) in [(false, false), (false, true), (true, false), (true, true)].into_iter().enumerate() {
                    let mut detectors = vec![
                        DetectorAssignment {
                            model: setup.e_detector.clone(),
                            modes: if em { e_minus.clone() } else { e_plus.clone() },
                        },
                        DetectorAssignment {
                            model: setup.g_detector.clone(),
                            modes: if gm { g_minus.clone() } else { g_plus.clone() },
                        },
                    ];
                    herald_detectors(&mut detectors);
                    let mut pattern = vec![Requirement::Click, Requirement::Click];
                    pattern.extend(reqs.iter().copied());
                    table.p[ei][gi][o] += pattern_probability(&analyzed, &detectors, &pattern)?;
                }
            }
        }
    }

    Ok(CoincidenceData {
        table,
        success_probability,
        components,
    })
}

/// Conditional two-qubit state of E and G reconstructed from coincidence
/// probabilities, with the polarization-blind success probability.
pub fn conditioned_polarization_dm(state: &FockState, setup: &AnalysisSetup) -> Result<Conditioned> {
    Ok(coincidence_data(state, setup)?.conditioned())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fock::{make_registry, occupation, ModeRegistry, SpatialSpec};
    use num_complex::Complex64;
    use std::sync::Arc;

    fn reg() -> Arc<ModeRegistry> {
        Arc::new(make_registry(&[SpatialSpec::new("E"), SpatialSpec::new("G")]).unwrap())
    }

    fn fock(reg: &Arc<ModeRegistry>, counts: &[(usize, u8)]) -> FockState {
        FockState::from_terms(reg.clone(), 4, &[0, 1, 2, 3], [(occupation(reg, counts), Complex64::new(1.0, 0.0))]).unwrap()
    }

    fn det(model: DetectorModel, modes: Vec<usize>) -> DetectorAssignment {
        DetectorAssignment { model, modes }
    }

    #[test]
    fn click_examples() {
        let reg = reg();
        let one = fock(&reg, &[(0, 1)]);
        let p = click_probabilities(&one, &[det(DetectorModel::ideal("E"), vec![0, 1])], &[true]).unwrap();
        assert_eq!(p, 1.0);

        let vac = FockState::vacuum(reg.clone(), 4);
        let dark = DetectorModel::new("G", 0.09, 1.5e-6).unwrap();
        let p = click_probabilities(&vac, &[det(dark, vec![2, 3])], &[true]).unwrap();
        assert!((p - 1.5e-6).abs() < 1e-16);

        let two = fock(&reg, &[(0, 2)]);
        let eff = DetectorModel::new("E", 0.13, 0.0).unwrap();
        let p = click_probabilities(&two, &[det(eff, vec![0])], &[true]).unwrap();
        assert!((p - 0.2431).abs() < 1e-12);
    }

    #[test]
    fn povm_completeness() {
        let reg = reg();
        let s = fock(&reg, &[(0, 1), (1, 2), (2, 1)]);
        let m = DetectorModel::new("x", 0.37, 0.01).unwrap();
        for modes in [vec![0], vec![0, 1], vec![2, 3]] {
            let d = [det(m.clone(), modes)];
            let sum = click_probabilities(&s, &d, &[true]).unwrap() + click_probabilities(&s, &d, &[false]).unwrap();
            assert!((sum - 1.0).abs() < 1e-12);
        }
        let dist = pattern_distribution(&s, &[det(m.clone(), vec![0]), det(m, vec![2])]).unwrap();
        assert!((dist.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn overlapping_detectors_rejected() {
        let reg = reg();
        let s = fock(&reg, &[(0, 1)]);
        let m = DetectorModel::ideal("x");
        let err = click_probabilities(&s, &[det(m.clone(), vec![0, 1]), det(m, vec![1])], &[true, true]).unwrap_err();
        assert!(matches!(err, Error::OverlappingDetectors(_)));
    }

    #[test]
    fn detector_parameter_ranges() {
        assert!(DetectorModel::new("x", 1.1, 0.0).is_err());
        assert!(DetectorModel::new("x", 0.5, 1.0).is_err());
    }

    #[test]
    fn analysis_of_phi_plus_recovers_it() {
        let reg = reg();
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let s = FockState::from_terms(
            reg.clone(),
            4,
            &[0, 1, 2, 3],
            [
                (occupation(&reg, &[(0, 1), (2, 1)]), Complex64::new(h, 0.0)),
                (occupation(&reg, &[(1, 1), (3, 1)]), Complex64::new(h, 0.0)),
            ],
        )
        .unwrap();
        let setup = AnalysisSetup {
            e_label: "E".into(),
            e_detector: DetectorModel::ideal("E"),
            g_label: "G".into(),
            g_detector: DetectorModel::ideal("G"),
            herald: None,
            pair_labels: vec!["G".into()],
        };
        let c = conditioned_polarization_dm(&s, &setup).unwrap();
        assert!((c.success_probability - 1.0).abs() < 1e-14);
        let dm = c.dm.unwrap();
        assert!(dm.trace_distance(&PolarizationDensityMatrix::phi_plus()).unwrap() < 1e-12);
        assert_eq!(
            c.components.keys().copied().collect::<Vec<_>>(),
            vec![Sector { pairs: 1, ancilla: 0 }]
        );
    }

    #[test]
    fn dark_counts_alone_give_maximally_mixed_state() {
        let reg = reg();
        let vac = FockState::vacuum(reg, 4);
        let d = 1e-3;
        let setup = AnalysisSetup {
            e_label: "E".into(),
            e_detector: DetectorModel::new("E", 0.5, d).unwrap(),
            g_label: "G".into(),
            g_detector: DetectorModel::new("G", 0.5, d).unwrap(),
            herald: None,
            pair_labels: vec!["G".into()],
        };
        let c = conditioned_polarization_dm(&vac, &setup).unwrap();
        assert!((c.success_probability - d * d).abs() < 1e-18 * 1e3);
        let dm = c.dm.unwrap();
        assert!(dm.trace_distance(&PolarizationDensityMatrix::maximally_mixed()).unwrap() < 1e-12);
    }
}
