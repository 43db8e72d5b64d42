//! Dense density-matrix reference pipeline.
//!
//! Shares nothing with the sparse engine beyond the circuit description and
//! the single-particle mode matrices. Sources are built by applying creation
//! operators to the vacuum, unitaries are lifted to Fock space through
//! permanents, loss and detector inefficiency are Kraus maps, and detectors
//! are ideal threshold devices with dark counts OR-ed in afterwards.

use std::collections::{BTreeSet, HashMap};

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::detection::{SettingTable, BASES};
use crate::error::{Error, Result};
use crate::fock::{ModeRegistry, Polarization, Temporal};
use crate::optics::{analyzer_jones, apply_jones, polarization_transform, Element, JonesVector};
use crate::protocol::{build_circuit, Circuit, ExperimentConfig, GammaConvention, PairSource, Source, Variant};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// All occupations of `modes` with total photon number at most `cutoff`.
#[derive(Debug, Clone)]
struct Basis {
    modes: Vec<usize>,
    occs: Vec<Vec<u8>>,
    index: HashMap<Vec<u8>, usize>,
}

impl Basis {
    fn new(mut modes: Vec<usize>, cutoff: u32) -> Self {
        modes.sort_unstable();
        modes.dedup();
        let mut occs = Vec::new();
        let mut cur = vec![0u8; modes.len()];
        fn rec(i: usize, left: u32, cur: &mut Vec<u8>, out: &mut Vec<Vec<u8>>) {
            if i == cur.len() {
                out.push(cur.clone());
                return;
            }
            for n in 0..=left {
                cur[i] = n as u8;
                rec(i + 1, left - n, cur, out);
            }
            cur[i] = 0;
        }
        rec(0, cutoff, &mut cur, &mut occs);
        let index = occs.iter().enumerate().map(|(i, o)| (o.clone(), i)).collect();
        Basis { modes, occs, index }
    }

    fn dim(&self) -> usize {
        self.occs.len()
    }

    fn pos(&self, mode: usize) -> Option<usize> {
        self.modes.iter().position(|&m| m == mode)
    }
}

/// Sparse matrix as (row, col, value) triples.
type Sparse = Vec<(usize, usize, Complex64)>;

/// Row-major dense density matrix over a basis.
#[derive(Debug, Clone)]
struct Dm {
    basis: Basis,
    m: Vec<Complex64>,
}

impl Dm {
    fn pure(basis: Basis, psi: &[Complex64]) -> Self {
        let d = basis.dim();
        let mut m = vec![ZERO; d * d];
        for i in 0..d {
            for j in 0..d {
                m[i * d + j] = psi[i] * psi[j].conj();
            }
        }
        Dm { basis, m }
    }

    /// `L ρ L†` for a sparse `L` from this basis to `out`.
    fn conjugate(&self, l: &Sparse, out: Basis) -> Dm {
        let (di, dout) = (self.basis.dim(), out.dim());
        // X = L ρ   (dout × di)
        let mut x = vec![ZERO; dout * di];
        for &(r, c, v) in l {
            let src = &self.m[c * di..(c + 1) * di];
            let dst = &mut x[r * di..(r + 1) * di];
            for (d, s) in dst.iter_mut().zip(src) {
                *d += v * s;
            }
        }
        // Y = X L†  (dout × dout): Y[a][r] = Σ_c X[a][c] conj(L[r][c])
        let mut y = vec![ZERO; dout * dout];
        for &(r, c, v) in l {
            let vc = v.conj();
            for a in 0..dout {
                y[a * dout + r] += x[a * di + c] * vc;
            }
        }
        Dm { basis: out, m: y }
    }

    /// Single-mode amplitude damping with transmittance `t`.
    fn damp(&self, mode: usize, t: f64) -> Dm {
        let Some(p) = self.basis.pos(mode) else {
            return self.clone();
        };
        let d = self.basis.dim();
        let mut out = vec![ZERO; d * d];
        let binom = |n: u32, k: u32| -> f64 { (0..k).map(|i| (n - i) as f64 / (i + 1) as f64).product() };
        let kraus = |n: u32, k: u32| -> f64 { (binom(n, k) * t.powi((n - k) as i32) * (1.0 - t).powi(k as i32)).sqrt() };
        // lowered[i][k]: index of occupation i with k photons removed from the mode
        let lowered: Vec<Vec<usize>> = self
            .basis
            .occs
            .iter()
            .map(|o| {
                (0..=o[p])
                    .map(|k| {
                        let mut a = o.clone();
                        a[p] -= k;
                        self.basis.index[&a]
                    })
                    .collect()
            })
            .collect();
        for i in 0..d {
            let ni = self.basis.occs[i][p] as u32;
            for j in 0..d {
                let v = self.m[i * d + j];
                if v == ZERO {
                    continue;
                }
                let nj = self.basis.occs[j][p] as u32;
                for k in 0..=ni.min(nj) {
                    let (ia, ib) = (lowered[i][k as usize], lowered[j][k as usize]);
                    out[ia * d + ib] += v * kraus(ni, k) * kraus(nj, k);
                }
            }
        }
        Dm {
            basis: self.basis.clone(),
            m: out,
        }
    }

    fn diagonal(&self) -> Vec<f64> {
        let d = self.basis.dim();
        (0..d).map(|i| self.m[i * d + i].re).collect()
    }
}

fn permanent(a: &[Vec<Complex64>]) -> Complex64 {
    let n = a.len();
    if n == 0 {
        return Complex64::new(1.0, 0.0);
    }
    // Ryser's formula.
    let mut total = ZERO;
    for subset in 1u32..(1 << n) {
        let mut prod = Complex64::new(1.0, 0.0);
        for row in a {
            let s: Complex64 = (0..n).filter(|j| subset & (1 << j) != 0).map(|j| row[j]).sum();
            prod *= s;
        }
        let sign = if (n as u32 - subset.count_ones()).is_multiple_of(2) {
            1.0
        } else {
            -1.0
        };
        total += prod * sign;
    }
    total
}

fn factorial(n: u32) -> f64 {
    (1..=n).map(|x| x as f64).product()
}

/// Single-particle map as a dense `(outputs × inputs)` matrix.
struct ModeMap {
    inputs: Vec<usize>,
    outputs: Vec<usize>,
    m: Vec<Vec<Complex64>>,
}

/// Lifts a mode map from `before` into the basis over the new live modes.
fn lift(map: &ModeMap, before: &Basis, cutoff: u32) -> (Sparse, Basis) {
    let inputs: BTreeSet<usize> = map.inputs.iter().copied().collect();
    let untouched: Vec<usize> = before.modes.iter().copied().filter(|m| !inputs.contains(m)).collect();
    let mut live: Vec<usize> = untouched.clone();
    live.extend(map.outputs.iter().copied());
    let after = Basis::new(live, cutoff);

    let occ_of = |basis: &Basis, occ: &[u8], mode: usize| basis.pos(mode).map(|p| occ[p]).unwrap_or(0);
    let key = |basis: &Basis, occ: &[u8]| -> Vec<u8> { untouched.iter().map(|&m| occ_of(basis, occ, m)).collect() };
    let mut groups: HashMap<Vec<u8>, Vec<usize>> = HashMap::new();
    for (ri, rout) in after.occs.iter().enumerate() {
        groups.entry(key(&after, rout)).or_default().push(ri);
    }
    let mut l = Sparse::new();
    for (ci, cin) in before.occs.iter().enumerate() {
        let n_in: Vec<u8> = map.inputs.iter().map(|&m| occ_of(before, cin, m)).collect();
        let total_in: u32 = n_in.iter().map(|&x| x as u32).sum();
        let Some(candidates) = groups.get(&key(before, cin)) else {
            continue;
        };
        for &ri in candidates {
            let rout = &after.occs[ri];
            let n_out: Vec<u8> = map.outputs.iter().map(|&m| occ_of(&after, rout, m)).collect();
            if n_out.iter().map(|&x| x as u32).sum::<u32>() != total_in {
                continue;
            }
            let rows: Vec<usize> = n_out
                .iter()
                .enumerate()
                .flat_map(|(j, &k)| std::iter::repeat_n(j, k as usize))
                .collect();
            let cols: Vec<usize> = n_in
                .iter()
                .enumerate()
                .flat_map(|(i, &k)| std::iter::repeat_n(i, k as usize))
                .collect();
            let sub: Vec<Vec<Complex64>> = rows.iter().map(|&r| cols.iter().map(|&c| map.m[r][c]).collect()).collect();
            let norm: f64 = n_in.iter().chain(&n_out).map(|&k| factorial(k as u32)).product();
            let v = permanent(&sub) / norm.sqrt();
            if v.norm() > 0.0 {
                l.push((ri, ci, v));
            }
        }
    }
    (l, after)
}

fn mode_map(reg: &ModeRegistry, el: &Element) -> Result<ModeMap> {
    let t = el.build(reg)?;
    let (ins, outs) = (t.inputs().to_vec(), t.outputs().to_vec());
    let m = (0..outs.len()).map(|r| (0..ins.len()).map(|c| t.entry(r, c)).collect()).collect();
    Ok(ModeMap {
        inputs: ins,
        outputs: outs,
        m,
    })
}

fn polarization_map(reg: &ModeRegistry, spatial: &str, u: JonesVector) -> Result<ModeMap> {
    let t = polarization_transform(reg, spatial, &analyzer_jones(u)?)?;
    let (ins, outs) = (t.inputs().to_vec(), t.outputs().to_vec());
    let m = (0..outs.len()).map(|r| (0..ins.len()).map(|c| t.entry(r, c)).collect()).collect();
    Ok(ModeMap {
        inputs: ins,
        outputs: outs,
        m,
    })
}

/// Applies `Σ_k c_k · (creation monomial)_k` to a state vector.
fn create(basis: &Basis, psi: &[Complex64], monomials: &[(Complex64, Vec<usize>)]) -> Vec<Complex64> {
    let mut out = vec![ZERO; psi.len()];
    for (i, amp) in psi.iter().enumerate() {
        if *amp == ZERO {
            continue;
        }
        'mono: for (c, modes) in monomials {
            let mut occ = basis.occs[i].clone();
            let mut f = *amp * c;
            for &m in modes {
                let p = basis.pos(m).expect("source mode in basis");
                occ[p] += 1;
                f *= (occ[p] as f64).sqrt();
            }
            match basis.index.get(&occ) {
                Some(&j) => out[j] += f,
                None => continue 'mono,
            }
        }
    }
    out
}

fn series(basis: &Basis, psi: &[Complex64], monomials: &[(Complex64, Vec<usize>)], max_power: u32) -> Vec<Complex64> {
    let mut total = psi.to_vec();
    let mut term = psi.to_vec();
    for k in 1..=max_power {
        term = create(basis, &term, monomials);
        for x in term.iter_mut() {
            *x /= k as f64;
        }
        for (t, x) in total.iter_mut().zip(&term) {
            *t += x;
        }
    }
    total
}

fn matched(reg: &ModeRegistry, s: &str) -> Result<(usize, usize)> {
    Ok((
        reg.mode(s, Polarization::H, Temporal::Matched)?,
        reg.mode(s, Polarization::V, Temporal::Matched)?,
    ))
}

fn prepare(c: &Circuit) -> Result<Dm> {
    let reg = &c.registry;
    let mut modes = Vec::new();
    for s in &c.sources {
        match s {
            Source::Spdc { a, b, .. } | Source::Encoded { a, b, .. } => {
                let (ah, av) = matched(reg, a)?;
                let (bh, bv) = matched(reg, b)?;
                modes.extend([ah, av, bh, bv]);
            }
            Source::Coherent { spatial, .. } | Source::SinglePhoton { spatial, .. } => {
                let (h, v) = matched(reg, spatial)?;
                modes.extend([h, v]);
            }
        }
    }
    let basis = Basis::new(modes, c.cutoff);
    let mut psi = vec![ZERO; basis.dim()];
    psi[basis.index[&vec![0u8; basis.modes.len()]]] = Complex64::new(1.0, 0.0);
    for s in &c.sources {
        psi = match s {
            Source::Spdc { a, b, params } => {
                let (ah, av) = matched(reg, a)?;
                let (bh, bv) = matched(reg, b)?;
                let g = Complex64::new(params.gamma.sqrt(), 0.0);
                let max_pairs = params.pair_cutoff.min(c.cutoff / 2);
                let out = series(&basis, &psi, &[(g, vec![ah, bh]), (g, vec![av, bv])], max_pairs);
                let n: f64 = out.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt();
                out.into_iter().map(|x| x / n).collect()
            }
            Source::Encoded { a, b, alpha, beta } => {
                let (ah, av) = matched(reg, a)?;
                let (bh, bv) = matched(reg, b)?;
                create(&basis, &psi, &[(*alpha, vec![ah, bh]), (*beta, vec![av, bv])])
            }
            Source::Coherent { spatial, amplitudes } => {
                let (h, v) = matched(reg, spatial)?;
                let mean = amplitudes[0].norm_sqr() + amplitudes[1].norm_sqr();
                let out = series(&basis, &psi, &[(amplitudes[0], vec![h]), (amplitudes[1], vec![v])], c.cutoff);
                out.into_iter().map(|x| x * (-mean / 2.0).exp()).collect()
            }
            Source::SinglePhoton { spatial, jones } => {
                let (h, v) = matched(reg, spatial)?;
                let n = (jones[0].norm_sqr() + jones[1].norm_sqr()).sqrt();
                create(&basis, &psi, &[(jones[0] / n, vec![h]), (jones[1] / n, vec![v])])
            }
        };
    }
    Ok(Dm::pure(basis, &psi))
}

fn evolve(c: &Circuit) -> Result<Dm> {
    let reg = &c.registry;
    let mut rho = prepare(c)?;
    for el in &c.elements {
        rho = match el {
            Element::Loss {
                spatial, transmittance, ..
            } => damp_label(&rho, reg, spatial, *transmittance)?,
            Element::GlassPlate {
                transmit_in, reflectance, ..
            } => damp_label(&rho, reg, transmit_in, 1.0 - reflectance)?,
            other => {
                let (l, after) = lift(&mode_map(reg, other)?, &rho.basis, c.cutoff);
                rho.conjugate(&l, after)
            }
        };
    }
    Ok(rho)
}

fn damp_label(rho: &Dm, reg: &ModeRegistry, spatial: &str, t: f64) -> Result<Dm> {
    let mut out = rho.clone();
    for m in reg.spatial_modes(spatial)? {
        out = out.damp(m, t);
    }
    Ok(out)
}

fn analyze(rho: &Dm, reg: &ModeRegistry, spatial: &str, u: JonesVector, cutoff: u32) -> Result<Dm> {
    let (l, after) = lift(&polarization_map(reg, spatial, u)?, &rho.basis, cutoff);
    Ok(rho.conjugate(&l, after))
}

/// One detector in the reference pipeline: ideal threshold on `modes`.
struct Ideal {
    modes: Vec<usize>,
    dark: f64,
}

/// `click` is `Some(true)` for a required click, `Some(false)` for a
/// required silence and `None` for "either".
fn pattern(rho: &Dm, detectors: &[(Ideal, Option<bool>)]) -> f64 {
    let diag = rho.diagonal();
    let pos: Vec<Vec<usize>> = detectors
        .iter()
        .map(|(d, _)| d.modes.iter().filter_map(|&m| rho.basis.pos(m)).collect())
        .collect();
    let mut total = 0.0;
    for (i, w) in diag.iter().enumerate() {
        let occ = &rho.basis.occs[i];
        let mut f = *w;
        for ((d, req), p) in detectors.iter().zip(&pos) {
            let lit = p.iter().any(|&k| occ[k] > 0);
            let p_click = if lit { 1.0 } else { d.dark };
            f *= match req {
                Some(true) => p_click,
                Some(false) => 1.0 - p_click,
                None => 1.0,
            };
        }
        total += f;
    }
    total
}

/// Reference outcome probabilities for a circuit.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleOutcome {
    pub table: SettingTable,
    pub triple_coincidence: f64,
}

pub fn reference_outcome(c: &Circuit) -> Result<OracleOutcome> {
    let reg = &c.registry;
    let setup = &c.analysis;
    let mut rho = evolve(c)?;
    let port = |label: &str, p: Polarization| reg.polarization_modes(label, p);

    let mut branches: Vec<(Vec<Option<bool>>, bool)> = vec![(vec![], false)];
    if let Some(h) = &setup.herald {
        rho = analyze(&rho, reg, &h.spatial, h.polarization, c.cutoff)?;
        branches = vec![(vec![Some(true), None], false)];
        if h.include_orthogonal_branch {
            branches.push((vec![Some(false), Some(true)], true));
        }
    }

    // Detector inefficiency as loss in front of ideal detectors.
    let lossy = |rho: &Dm| -> Result<Dm> {
        let mut out = damp_label(rho, reg, &setup.e_label, setup.e_detector.efficiency)?;
        out = damp_label(&out, reg, &setup.g_label, setup.g_detector.efficiency)?;
        if let Some(h) = &setup.herald {
            out = damp_label(&out, reg, &h.spatial, h.detector.efficiency)?;
        }
        Ok(out)
    };
    let heralds = |reqs: &[Option<bool>]| -> Result<Vec<(Ideal, Option<bool>)>> {
        let mut v = Vec::new();
        if let Some(h) = &setup.herald {
            for (p, r) in [Polarization::H, Polarization::V].into_iter().zip(reqs) {
                v.push((
                    Ideal {
                        modes: port(&h.spatial, p)?,
                        dark: h.detector.dark_probability,
                    },
                    *r,
                ));
            }
        }
        Ok(v)
    };

    let blind = lossy(&rho)?;
    let mut triple = 0.0;
    for (reqs, _) in &branches {
        let mut dets = vec![
            (
                Ideal {
                    modes: reg.spatial_modes(&setup.e_label)?,
                    dark: setup.e_detector.dark_probability,
                },
                Some(true),
            ),
            (
                Ideal {
                    modes: reg.spatial_modes(&setup.g_label)?,
                    dark: setup.g_detector.dark_probability,
                },
                Some(true),
            ),
        ];
        dets.extend(heralds(reqs)?);
        triple += pattern(&blind, &dets);
    }

    let mut table = SettingTable::default();
    for (reqs, flip) in &branches {
        for (ei, (e_state, _)) in BASES.iter().enumerate() {
            let mut u = e_state.jones();
            if *flip {
                u = apply_jones(&[[Complex64::new(1.0, 0.0), ZERO], [ZERO, Complex64::new(-1.0, 0.0)]], &u);
            }
            let after_e = analyze(&rho, reg, &setup.e_label, u, c.cutoff)?;
            for (gi, (g_state, _)) in BASES.iter().enumerate() {
                let analyzed = lossy(&analyze(&after_e, reg, &setup.g_label, g_state.jones(), c.cutoff)?)?;
                for (o, (em, gm)) in [(false, false), (false, true), (true, false), (true, true)].into_iter().enumerate() {
                    let e_pol = if em { Polarization::V } else { Polarization::H };
                    let g_pol = if gm { Polarization::V } else { Polarization::H };
                    let mut dets = vec![
                        (
                            Ideal {
                                modes: port(&setup.e_label, e_pol)?,
                                dark: setup.e_detector.dark_probability,
                            },
                            Some(true),
                        ),
                        (
                            Ideal {
                                modes: port(&setup.g_label, g_pol)?,
                                dark: setup.g_detector.dark_probability,
                            },
                            Some(true),
                        ),
                    ];
                    dets.extend(heralds(reqs)?);
                    table.p[ei][gi][o] += pattern(&analyzed, &dets);
                }
            }
        }
    }
    Ok(OracleOutcome {
        table,
        triple_coincidence: triple,
    })
}

/// Comparison of the engine against the reference for one configuration.
#[derive(Debug, Clone, Serialize)]
pub struct OracleCase {
    pub label: String,
    pub phases_checked: usize,
    pub max_deviation: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct OracleReport {
    pub tolerance: f64,
    pub cases: Vec<OracleCase>,
    pub max_deviation: f64,
}

impl OracleReport {
    pub fn passed(&self) -> bool {
        self.max_deviation <= self.tolerance
    }

    pub fn into_result(self) -> Result<Self> {
        if self.passed() {
            Ok(self)
        } else {
            Err(Error::OracleMismatch {
                deviation: self.max_deviation,
                tolerance: self.tolerance,
            })
        }
    }
}

pub const ORACLE_TOLERANCE: f64 = 1e-9;

/// Largest absolute difference over every setting probability and the
/// triple coincidence, at each listed phase.
pub fn compare(cfg: &ExperimentConfig, phases: &[(f64, f64)]) -> Result<f64> {
    if cfg.cutoff > 3 {
        return Err(Error::Config("the dense reference is limited to cutoff <= 3".into()));
    }
    let mut worst: f64 = 0.0;
    for &phi in phases {
        let circuit = build_circuit(cfg, phi)?;
        let (engine, _) = circuit.run()?;
        let reference = reference_outcome(&circuit)?;
        worst = worst
            .max(engine.table.max_abs_difference(&reference.table))
            .max((engine.success_probability - reference.triple_coincidence).abs());
    }
    Ok(worst)
}

/// A random small configuration: every variant, both sources, mismatch,
/// the D̄ branch and the bright-pulse wiring all get exercised.
pub fn random_config(rng: &mut impl Rng) -> ExperimentConfig {
    let variant = [
        Variant::CounterPropagating,
        Variant::ForwardAllFromBob,
        Variant::SinglePhotonAncilla,
        Variant::DirectNoDfs,
    ][rng.gen_range(0..4)];
    let source = if rng.gen_bool(0.3) {
        let a: f64 = rng.gen_range(0.0..1.0);
        let ph: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
        PairSource::Encoded {
            alpha: Complex64::new(a.sqrt(), 0.0),
            beta: Complex64::from_polar((1.0 - a).sqrt(), ph),
        }
    } else {
        PairSource::Spdc
    };
    ExperimentConfig {
        variant,
        source,
        gamma: rng.gen_range(0.0..0.2),
        gamma_convention: if rng.gen_bool(0.5) {
            GammaConvention::PairProbability
        } else {
            GammaConvention::SquaredAmplitude
        },
        pair_cutoff: rng.gen_range(1..=2),
        mu: rng.gen_range(0.0..0.3),
        transmittance: rng.gen_range(0.2..1.0),
        eta: rng.gen_range(0.1..1.0),
        eta_g: rng.gen_range(0.1..1.0),
        dark_e: rng.gen_range(0.0..0.01),
        dark_f: rng.gen_range(0.0..0.01),
        dark_g: rng.gen_range(0.0..0.05),
        s0: if rng.gen_bool(0.3) { 1.0 } else { rng.gen_range(0.3..1.0) },
        sigma_um: 80.0,
        delay_um: rng.gen_range(0.0..40.0),
        gp_reflectance: rng.gen_range(0.0..0.2),
        phase_delta: (rng.gen_range(-0.3..0.3), rng.gen_range(-0.3..0.3)),
        cutoff: rng.gen_range(2..=3),
        include_dbar_branch: rng.gen_bool(0.5),
        coherent_shortcut: rng.gen_bool(0.7),
        ..ExperimentConfig::default()
    }
}

/// Runs `n` random configurations from a fixed seed, two random phases each.
pub fn oracle_check(seed: u64, n: usize) -> Result<OracleReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let tau = std::f64::consts::TAU;
    let drawn: Vec<(ExperimentConfig, [(f64, f64); 2])> = (0..n)
        .map(|_| {
            let cfg = random_config(&mut rng);
            let phases = [
                (rng.gen_range(0.0..tau), rng.gen_range(0.0..tau)),
                (rng.gen_range(0.0..tau), rng.gen_range(0.0..tau)),
            ];
            (cfg, phases)
        })
        .collect();
    let cases = drawn
        .par_iter()
        .enumerate()
        .map(|(i, (cfg, phases))| {
            Ok(OracleCase {
                label: format!("case {i}: {} cutoff {}", cfg.variant.name(), cfg.cutoff),
                phases_checked: phases.len(),
                max_deviation: compare(cfg, phases)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(report(cases))
}

/// Checks one user-supplied configuration at each of its phases.
pub fn oracle_check_config(cfg: &ExperimentConfig) -> Result<OracleReport> {
    let dev = compare(cfg, &cfg.phases)?;
    Ok(report(vec![OracleCase {
        label: format!("{} cutoff {}", cfg.variant.name(), cfg.cutoff),
        phases_checked: cfg.phases.len(),
        max_deviation: dev,
    }]))
}

fn report(cases: Vec<OracleCase>) -> OracleReport {
    let max_deviation = cases.iter().map(|c| c.max_deviation).fold(0.0, f64::max);
    OracleReport {
        tolerance: ORACLE_TOLERANCE,
        cases,
        max_deviation,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn permanent_small_cases() {
        let one = Complex64::new(1.0, 0.0);
        assert_eq!(permanent(&[]), one);
        let m = vec![vec![one, one * 2.0], vec![one * 3.0, one * 4.0]];
        assert_eq!(permanent(&m), one * 10.0);
    }

    #[test]
    fn ideal_config_matches_reference() {
        let cfg = ExperimentConfig {
            cutoff: 3,
            ..ExperimentConfig::ideal(Variant::SinglePhotonAncilla)
        };
        assert!(compare(&cfg, &[(0.0, 0.7)]).unwrap() < 1e-12);
    }
}
