use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::sync::Arc;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::fock::{ModeRegistry, ModeTransform};

/// Photon numbers per registry mode, indexed by registry position.
pub type Occupation = Vec<u8>;

pub const DEFAULT_CUTOFF: u32 = 4;
pub const DEFAULT_PRUNE: f64 = 1e-15;

/// Sparse multimode pure state with a total-photon cutoff.
///
/// Terms are kept in canonical (lexicographic occupation) order so two states
/// built the same way compare equal term by term and sums run in a fixed
/// order. The state may be unnormalized: projections return the conditional
/// branch with its probability as the squared norm.
#[derive(Debug, Clone)]
pub struct FockState {
    registry: Arc<ModeRegistry>,
    cutoff: u32,
    prune: f64,
    support: BTreeSet<usize>,
    terms: BTreeMap<Occupation, Complex64>,
    truncated_weight: f64,
}

pub fn occupation(registry: &ModeRegistry, counts: &[(usize, u8)]) -> Occupation {
    let mut occ = vec![0u8; registry.len()];
    for &(mode, n) in counts {
        occ[mode] += n;
    }
    occ
}

fn total(occ: &[u8]) -> u32 {
    occ.iter().map(|&n| n as u32).sum()
}

fn sqrt_factorial(n: u8) -> f64 {
    (1..=n as u32).map(|k| k as f64).product::<f64>().sqrt()
}

impl FockState {
    pub fn vacuum(registry: Arc<ModeRegistry>, cutoff: u32) -> Self {
        let mut terms = BTreeMap::new();
        terms.insert(vec![0u8; registry.len()], Complex64::new(1.0, 0.0));
        FockState {
            registry,
            cutoff,
            prune: DEFAULT_PRUNE,
            support: BTreeSet::new(),
            terms,
            truncated_weight: 0.0,
        }
    }

    /// Builds a state from explicit terms over the given support modes.
    /// Terms above the cutoff are dropped and their weight recorded.
    pub fn from_terms<I>(registry: Arc<ModeRegistry>, cutoff: u32, support: &[usize], terms: I) -> Result<Self>
    where
        I: IntoIterator<Item = (Occupation, Complex64)>,
    {
        let support: BTreeSet<usize> = support.iter().copied().collect();
        if let Some(&bad) = support.iter().find(|&&m| m >= registry.len()) {
            return Err(Error::UnknownMode(format!("index {bad}")));
        }
        let mut state = FockState {
            registry,
            cutoff,
            prune: DEFAULT_PRUNE,
            support,
            terms: BTreeMap::new(),
            truncated_weight: 0.0,
        };
        for (occ, amp) in terms {
            if occ.len() != state.registry.len() {
                return Err(Error::Config("occupation length differs from registry".into()));
            }
            for (m, &n) in occ.iter().enumerate() {
                if n > 0 && !state.support.contains(&m) {
                    return Err(Error::Config(format!(
                        "term occupies mode {} outside the state's support",
                        state.registry.key(m)
                    )));
                }
            }
            if total(&occ) > cutoff {
                state.truncated_weight += amp.norm_sqr();
                continue;
            }
            *state.terms.entry(occ).or_insert(Complex64::new(0.0, 0.0)) += amp;
        }
        state.prune_terms();
        Ok(state)
    }

    pub fn with_prune(mut self, threshold: f64) -> Self {
        self.prune = threshold;
        self.prune_terms();
        self
    }

    fn prune_terms(&mut self) {
        let threshold = self.prune;
        self.terms.retain(|_, a| a.norm() >= threshold);
    }

    pub fn registry(&self) -> &Arc<ModeRegistry> {
        &self.registry
    }

    pub fn cutoff(&self) -> u32 {
        self.cutoff
    }

    pub fn support(&self) -> &BTreeSet<usize> {
        &self.support
    }

    /// Accumulated probability weight dropped by the cutoff so far.
    pub fn truncated_weight(&self) -> f64 {
        self.truncated_weight
    }

    pub fn terms(&self) -> impl Iterator<Item = (&Occupation, &Complex64)> {
        self.terms.iter()
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn amplitude(&self, occ: &[u8]) -> Complex64 {
        self.terms.get(occ).copied().unwrap_or_default()
    }

    pub fn norm_squared(&self) -> f64 {
        self.terms.values().map(|a| a.norm_sqr()).sum()
    }

    pub fn is_normalized(&self, tol: f64) -> bool {
        (self.norm_squared() - 1.0).abs() <= tol
    }

    pub fn scaled(&self, factor: Complex64) -> FockState {
        let mut out = self.clone();
        for a in out.terms.values_mut() {
            *a *= factor;
        }
        out.prune_terms();
        out
    }

    pub fn normalized(&self) -> Result<FockState> {
        let n = self.norm_squared();
        if n <= 0.0 {
            return Err(Error::EmptyPostSelection);
        }
        Ok(self.scaled(Complex64::new(1.0 / n.sqrt(), 0.0)))
    }

    fn same_registry(&self, other: &FockState) -> Result<()> {
        if Arc::ptr_eq(&self.registry, &other.registry) || *self.registry == *other.registry {
            Ok(())
        } else {
            Err(Error::RegistryMismatch)
        }
    }

    /// `⟨self|other⟩`.
    pub fn inner(&self, other: &FockState) -> Result<Complex64> {
        self.same_registry(other)?;
        Ok(self
            .terms
            .iter()
            .filter_map(|(k, a)| other.terms.get(k).map(|b| a.conj() * b))
            .sum())
    }

    /// Largest amplitude difference over the union of terms.
    pub fn max_difference(&self, other: &FockState) -> Result<f64> {
        self.same_registry(other)?;
        let keys: BTreeSet<&Occupation> = self.terms.keys().chain(other.terms.keys()).collect();
        Ok(keys
            .into_iter()
            .map(|k| (self.amplitude(k) - other.amplitude(k)).norm())
            .fold(0.0, f64::max))
    }

    /// Overlap `|⟨a|b⟩|² / (‖a‖²‖b‖²)`; equals 1 iff the states agree up to
    /// a global phase.
    pub fn overlap_fidelity(&self, other: &FockState) -> Result<f64> {
        let ip = self.inner(other)?;
        let denom = self.norm_squared() * other.norm_squared();
        if denom <= 0.0 {
            return Err(Error::EmptyPostSelection);
        }
        Ok(ip.norm_sqr() / denom)
    }

    /// Mean photon number summed over `modes`.
    pub fn mean_photon_number(&self, modes: &[usize]) -> f64 {
        self.terms
            .iter()
            .map(|(k, a)| a.norm_sqr() * modes.iter().map(|&m| k[m] as f64).sum::<f64>())
            .sum()
    }

    /// Probability of each total photon count in `modes`.
    pub fn photon_number_distribution(&self, modes: &[usize]) -> Vec<f64> {
        let mut dist = vec![0.0; self.cutoff as usize + 1];
        for (k, a) in &self.terms {
            let n: usize = modes.iter().map(|&m| k[m] as usize).sum();
            dist[n] += a.norm_sqr();
        }
        dist
    }

    /// Rewrites every term by substituting creation operators according to
    /// the transform and re-expanding.
    pub fn apply_transform(&self, t: &ModeTransform) -> Result<FockState> {
        for &m in t.inputs().iter().chain(t.outputs()) {
            if m >= self.registry.len() {
                return Err(Error::UnknownMode(format!("index {m}")));
            }
        }
        t.validate()?;
        let fresh = t.fresh_outputs();
        let mut cache: HashMap<Vec<u8>, Vec<(Vec<u8>, Complex64)>> = HashMap::new();
        let mut out: BTreeMap<Occupation, Complex64> = BTreeMap::new();
        let mut truncated = self.truncated_weight;

        for (occ, &amp) in &self.terms {
            if let Some(&m) = fresh.iter().find(|&&m| occ[m] != 0) {
                return Err(Error::OccupiedFreshMode(self.registry.key(m).to_string()));
            }
            let key: Vec<u8> = t.inputs().iter().map(|&i| occ[i]).collect();
            let expansion = cache.entry(key).or_insert_with_key(|key| expand(t, key));
            let mut base = occ.clone();
            for &i in t.inputs() {
                base[i] = 0;
            }
            for (mono, coeff) in expansion.iter() {
                let mut next = base.clone();
                for (row, &o) in t.outputs().iter().enumerate() {
                    next[o] += mono[row];
                }
                let a = amp * coeff;
                if total(&next) > self.cutoff {
                    truncated += a.norm_sqr();
                    continue;
                }
                *out.entry(next).or_insert(Complex64::new(0.0, 0.0)) += a;
            }
        }

        let mut support = self.support.clone();
        support.extend(t.inputs().iter().copied());
        support.extend(t.outputs().iter().copied());
        let mut state = FockState {
            registry: self.registry.clone(),
            cutoff: self.cutoff,
            prune: self.prune,
            support,
            terms: out,
            truncated_weight: truncated,
        };
        state.prune_terms();
        Ok(state)
    }

    /// Product state over disjoint supports. Terms of the product above the
    /// cutoff are dropped and recorded.
    pub fn tensor(&self, other: &FockState) -> Result<FockState> {
        self.same_registry(other)?;
        if self.cutoff != other.cutoff {
            return Err(Error::Config(format!(
                "cutoff mismatch in tensor product ({} vs {})",
                self.cutoff, other.cutoff
            )));
        }
        if let Some(&m) = self.support.intersection(&other.support).next() {
            return Err(Error::OverlappingModes(self.registry.key(m).to_string()));
        }
        let mut terms = BTreeMap::new();
        let mut truncated = self.truncated_weight + other.truncated_weight;
        for (ka, a) in &self.terms {
            for (kb, b) in &other.terms {
                let occ: Occupation = ka.iter().zip(kb).map(|(x, y)| x + y).collect();
                let amp = a * b;
                if total(&occ) > self.cutoff {
                    truncated += amp.norm_sqr();
                } else {
                    *terms.entry(occ).or_insert(Complex64::new(0.0, 0.0)) += amp;
                }
            }
        }
        let mut state = FockState {
            registry: self.registry.clone(),
            cutoff: self.cutoff,
            prune: self.prune.min(other.prune),
            support: self.support.union(&other.support).copied().collect(),
            terms,
            truncated_weight: truncated,
        };
        state.prune_terms();
        Ok(state)
    }

    /// Keeps only the terms with exactly `n` photons in `mode`.
    pub fn project_occupation(&self, mode: usize, n: u32) -> Result<FockState> {
        if mode >= self.registry.len() {
            return Err(Error::UnknownMode(format!("index {mode}")));
        }
        if n > self.cutoff {
            return Err(Error::Config(format!("projection onto {n} photons exceeds cutoff {}", self.cutoff)));
        }
        self.filter(|occ| occ[mode] as u32 == n)
    }

    /// Keeps the terms whose occupation satisfies `keep`.
    pub fn filter(&self, keep: impl Fn(&[u8]) -> bool) -> Result<FockState> {
        let mut out = self.clone();
        out.terms.retain(|k, _| keep(k));
        Ok(out)
    }
}

/// Expands `Π_i (Σ_j M_ji b_j†)^{n_i} / √(n_i!)` acting on vacuum into
/// normalized output Fock amplitudes.
fn expand(t: &ModeTransform, counts: &[u8]) -> Vec<(Vec<u8>, Complex64)> {
    let rows = t.outputs().len();
    let mut poly: BTreeMap<Vec<u8>, Complex64> = BTreeMap::new();
    poly.insert(vec![0u8; rows], Complex64::new(1.0, 0.0));
    let mut input_norm = 1.0;
    for (col, &n) in counts.iter().enumerate() {
        input_norm *= sqrt_factorial(n);
        for _ in 0..n {
            let mut next: BTreeMap<Vec<u8>, Complex64> = BTreeMap::new();
            for (mono, c) in &poly {
                for row in 0..rows {
                    let m = t.entry(row, col);
                    if m == Complex64::new(0.0, 0.0) {
                        continue;
                    }
                    let mut k = mono.clone();
                    k[row] += 1;
                    *next.entry(k).or_insert(Complex64::new(0.0, 0.0)) += c * m;
                }
            }
            poly = next;
        }
    }
    poly.into_iter()
        .map(|(mono, c)| {
            let out_norm: f64 = mono.iter().map(|&k| sqrt_factorial(k)).product();
            let amp = c * (out_norm / input_norm);
            (mono, amp)
        })
        .filter(|(_, a)| a.norm() > 0.0)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fock::{make_registry, SpatialSpec};
    use std::f64::consts::FRAC_1_SQRT_2;

    fn reg2() -> Arc<ModeRegistry> {
        // Mode 0 = A_H, mode 1 = A_V; used here as two generic modes.
        Arc::new(make_registry(&[SpatialSpec::new("A")]).unwrap())
    }

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    fn splitter(reg: &ModeRegistry, theta: f64) -> ModeTransform {
        let (s, co) = theta.sin_cos();
        ModeTransform::new(reg, vec![0, 1], vec![0, 1], vec![c(co), c(-s), c(s), c(co)]).unwrap()
    }

    fn basis(reg: &Arc<ModeRegistry>, n0: u8, n1: u8) -> FockState {
        FockState::from_terms(reg.clone(), 4, &[0, 1], [(vec![n0, n1], c(1.0))]).unwrap()
    }

    #[test]
    fn identity_leaves_state_unchanged() {
        let reg = reg2();
        let s = FockState::from_terms(
            reg.clone(),
            4,
            &[0, 1],
            [(vec![1, 0], c(0.6)), (vec![1, 2], Complex64::new(0.0, 0.8))],
        )
        .unwrap();
        let out = s.apply_transform(&ModeTransform::identity(&[0, 1])).unwrap();
        assert!(out.max_difference(&s).unwrap() < 1e-15);
    }

    #[test]
    fn balanced_splitter_single_photon() {
        let reg = reg2();
        let out = basis(&reg, 1, 0)
            .apply_transform(&splitter(&reg, std::f64::consts::FRAC_PI_4))
            .unwrap();
        assert!((out.amplitude(&[1, 0]) - c(FRAC_1_SQRT_2)).norm() < 1e-15);
        assert!((out.amplitude(&[0, 1]) - c(FRAC_1_SQRT_2)).norm() < 1e-15);
    }

    #[test]
    fn hong_ou_mandel_bunching() {
        let reg = reg2();
        let out = basis(&reg, 1, 1)
            .apply_transform(&splitter(&reg, std::f64::consts::FRAC_PI_4))
            .unwrap();
        // (|2,0⟩ − |0,2⟩)/√2 up to the global sign fixed by the rotation convention
        assert_eq!(out.amplitude(&[1, 1]), c(0.0));
        assert!((out.amplitude(&[2, 0]).norm_sqr() - 0.5).abs() < 1e-12);
        assert!((out.amplitude(&[2, 0]) + out.amplitude(&[0, 2])).norm() < 1e-12);
    }

    #[test]
    fn tensor_of_single_photon_and_vacuum() {
        let reg = Arc::new(make_registry(&[SpatialSpec::new("A"), SpatialSpec::new("B")]).unwrap());
        let a = FockState::from_terms(reg.clone(), 4, &[0], [(occupation(&reg, &[(0, 1)]), c(1.0))]).unwrap();
        let b = FockState::from_terms(reg.clone(), 4, &[2], [(occupation(&reg, &[]), c(1.0))]).unwrap();
        let ab = a.tensor(&b).unwrap();
        assert_eq!(ab.len(), 1);
        assert_eq!(ab.amplitude(&[1, 0, 0, 0]), c(1.0));
        let vac = FockState::vacuum(reg.clone(), 4);
        let vv = vac.tensor(&FockState::vacuum(reg, 4)).unwrap();
        assert_eq!(vv.amplitude(&[0, 0, 0, 0]), c(1.0));
    }

    #[test]
    fn tensor_rejects_overlap() {
        let reg = reg2();
        let a = basis(&reg, 1, 0);
        assert!(matches!(a.tensor(&a), Err(Error::OverlappingModes(_))));
    }

    #[test]
    fn projection_examples() {
        let reg = reg2();
        let s = basis(&reg, 1, 0);
        let p = s.project_occupation(0, 1).unwrap();
        assert!(p.max_difference(&s).unwrap() < 1e-15);

        let sup = FockState::from_terms(
            reg.clone(),
            4,
            &[0, 1],
            [(vec![1, 0], c(FRAC_1_SQRT_2)), (vec![0, 1], c(FRAC_1_SQRT_2))],
        )
        .unwrap();
        let p0 = sup.project_occupation(0, 0).unwrap();
        assert!((p0.amplitude(&[0, 1]) - c(FRAC_1_SQRT_2)).norm() < 1e-15);
        assert!((p0.norm_squared() - 0.5).abs() < 1e-15);
        let sum: f64 = (0..=4).map(|n| sup.project_occupation(0, n).unwrap().norm_squared()).sum();
        assert!((sum - sup.norm_squared()).abs() < 1e-15);

        assert!(sup.project_occupation(9, 0).is_err());
        assert!(sup.project_occupation(0, 5).is_err());
    }

    #[test]
    fn occupied_fresh_mode_is_an_error() {
        let reg = reg2();
        let t = 0.5f64;
        let loss = ModeTransform::new(&reg, vec![0], vec![0, 1], vec![c(t.sqrt()), c(t.sqrt())]).unwrap();
        assert!(matches!(basis(&reg, 1, 1).apply_transform(&loss), Err(Error::OccupiedFreshMode(_))));
        let ok = basis(&reg, 2, 0).apply_transform(&loss).unwrap();
        assert!((ok.norm_squared() - 1.0).abs() < 1e-14);
        assert!((ok.amplitude(&[1, 1]).norm_sqr() - 0.5).abs() < 1e-14);
    }

    #[test]
    fn truncation_is_recorded() {
        let reg = reg2();
        let s = FockState::from_terms(reg, 2, &[0, 1], [(vec![1, 0], c(0.6)), (vec![2, 1], c(0.8))]).unwrap();
        assert_eq!(s.len(), 1);
        assert!((s.truncated_weight() - 0.64).abs() < 1e-15);
    }
}
