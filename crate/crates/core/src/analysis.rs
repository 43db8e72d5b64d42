//! Sweeps, calibration, fits and derived experiments built on the protocol
//! engine, plus the flat `key = value` run-file format.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::detection::{pattern_distribution, Basis, DetectorAssignment, Sector};
use crate::error::{Error, Result};
use crate::fock::{Polarization, PolarizationDensityMatrix};
use crate::optics::polarizer_projection;
use crate::protocol::{
    build_circuit, chsh_flag, f_low, phase_set, run_phase_averaged, visibilities, ExperimentConfig, GammaConvention, PairSource, Variant,
};

pub const CSV_SCHEMA: &str = "dfsim.results.v1";

fn fmt_sci(x: f64) -> String {
    format!("{x:.11e}")
}

// ---------------------------------------------------------------------------
// Run files

/// Everything a command-line run needs: the physical configuration plus
/// sweep, scan and sampling settings.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunSpec {
    pub experiment: ExperimentConfig,
    pub t_values: Vec<f64>,
    pub calibrate: bool,
    pub anchor_t: f64,
    pub target_vx: f64,
    pub delays_um: Vec<f64>,
    pub calibrate_sigma: bool,
    pub target_fwhm_um: f64,
    pub n_pulses: u64,
    pub oracle_cases: usize,
    pub oracle_seed: u64,
}

pub const TABLE_T_VALUES: [f64; 5] = [0.1, 0.03, 0.01, 0.005, 0.003];

impl Default for RunSpec {
    fn default() -> Self {
        RunSpec {
            experiment: ExperimentConfig::default(),
            t_values: TABLE_T_VALUES.to_vec(),
            calibrate: true,
            anchor_t: 0.1,
            target_vx: 0.82,
            delays_um: (-20..=20).map(|i| i as f64 * 20.0).collect(),
            calibrate_sigma: true,
            target_fwhm_um: 180.0,
            n_pulses: 1_000_000,
            oracle_cases: 20,
            oracle_seed: 1,
        }
    }
}

fn parse_f64(line: usize, key: &str, v: &str) -> Result<f64> {
    v.parse::<f64>().map_err(|_| Error::Parse {
        line,
        message: format!("{key}: '{v}' is not a number"),
    })
}

fn parse_list(line: usize, key: &str, v: &str) -> Result<Vec<f64>> {
    v.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| parse_f64(line, key, s))
        .collect()
}

fn parse_bool(line: usize, key: &str, v: &str) -> Result<bool> {
    match v {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(Error::Parse {
            line,
            message: format!("{key}: '{v}' is not a boolean"),
        }),
    }
}

fn parse_int<T: std::str::FromStr>(line: usize, key: &str, v: &str) -> Result<T> {
    v.parse::<T>().map_err(|_| Error::Parse {
        line,
        message: format!("{key}: '{v}' is not a nonnegative integer"),
    })
}

impl RunSpec {
    /// Parses `key = value` lines; `#` starts a comment. Later keys win.
    pub fn parse(text: &str) -> Result<Self> {
        let mut spec = RunSpec::default();
        let e = &mut spec.experiment;
        let mut mu_eta: Option<f64> = None;
        let mut mu: Option<f64> = None;
        let mut phase_steps: Option<usize> = None;
        let mut qubit: (Option<f64>, Option<f64>, f64) = (None, None, 0.0);
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let (key, value) = content.split_once('=').ok_or_else(|| Error::Parse {
                line,
                message: format!("expected key = value, found '{content}'"),
            })?;
            let (key, v) = (key.trim(), value.trim());
            let f = || parse_f64(line, key, v);
            match key {
                "variant" => {
                    e.variant = Variant::parse(v).map_err(|err| Error::Parse {
                        line,
                        message: err.to_string(),
                    })?
                }
                "source" => match v {
                    "spdc" => e.source = PairSource::Spdc,
                    "encoded" => {
                        if qubit.0.is_none() {
                            qubit.0 = Some(std::f64::consts::FRAC_1_SQRT_2);
                            qubit.1 = Some(std::f64::consts::FRAC_1_SQRT_2);
                        }
                    }
                    _ => {
                        return Err(Error::Parse {
                            line,
                            message: format!("source: unknown '{v}'"),
                        })
                    }
                },
                "gamma" => e.gamma = f()?,
                "gamma_convention" => {
                    e.gamma_convention = GammaConvention::parse(v).map_err(|err| Error::Parse {
                        line,
                        message: err.to_string(),
                    })?
                }
                "pair_cutoff" => e.pair_cutoff = parse_int(line, key, v)?,
                "mu" => mu = Some(f()?),
                "mu_eta" => mu_eta = Some(f()?),
                "transmittance" | "t" => e.transmittance = f()?,
                "eta" => e.eta = f()?,
                "eta_g" => e.eta_g = f()?,
                "dark_e" => e.dark_e = f()?,
                "dark_f" => e.dark_f = f()?,
                "dark_g" | "d" => e.dark_g = f()?,
                "s0" => e.s0 = f()?,
                "sigma_um" => e.sigma_um = f()?,
                "delay_um" => e.delay_um = f()?,
                "gp_reflectance" => e.gp_reflectance = f()?,
                "phase_steps" => phase_steps = Some(parse_int(line, key, v)?),
                "phase_delta_h" => e.phase_delta.0 = f()?,
                "phase_delta_v" => e.phase_delta.1 = f()?,
                "cutoff" => e.cutoff = parse_int(line, key, v)?,
                "prune" => e.prune = f()?,
                "include_dbar_branch" => e.include_dbar_branch = parse_bool(line, key, v)?,
                "coherent_shortcut" => e.coherent_shortcut = parse_bool(line, key, v)?,
                "repetition_rate_hz" => e.repetition_rate_hz = f()?,
                "qubit_alpha" => qubit.0 = Some(f()?),
                "qubit_beta" => qubit.1 = Some(f()?),
                "qubit_beta_phase" => qubit.2 = f()?,
                "t_values" => spec.t_values = parse_list(line, key, v)?,
                "calibrate" => spec.calibrate = parse_bool(line, key, v)?,
                "anchor_t" => spec.anchor_t = f()?,
                "target_vx" => spec.target_vx = f()?,
                "delays_um" => spec.delays_um = parse_list(line, key, v)?,
                "calibrate_sigma" => spec.calibrate_sigma = parse_bool(line, key, v)?,
                "target_fwhm_um" => spec.target_fwhm_um = f()?,
                "n_pulses" => spec.n_pulses = parse_int(line, key, v)?,
                "oracle_cases" => spec.oracle_cases = parse_int(line, key, v)?,
                "oracle_seed" => spec.oracle_seed = parse_int(line, key, v)?,
                other => {
                    return Err(Error::Parse {
                        line,
                        message: format!("unknown key '{other}'"),
                    })
                }
            }
        }
        let e = &mut spec.experiment;
        match (mu, mu_eta) {
            (Some(_), Some(_)) => return Err(Error::Config("give either mu or mu_eta, not both".into())),
            (Some(m), None) => e.mu = m,
            (None, Some(me)) => {
                if !(e.eta > 0.0) {
                    return Err(Error::Config("mu_eta needs a positive eta".into()));
                }
                e.mu = me / e.eta;
            }
            (None, None) => {}
        }
        if let Some(n) = phase_steps {
            if n == 0 {
                return Err(Error::Config("phase_steps must be positive".into()));
            }
            e.phases = phase_set(n);
        }
        if let (Some(a), Some(b)) = (qubit.0, qubit.1) {
            e.source = PairSource::Encoded {
                alpha: Complex64::new(a, 0.0),
                beta: Complex64::from_polar(b, qubit.2),
            };
        } else if qubit.0.is_some() || qubit.1.is_some() {
            return Err(Error::Config("qubit_alpha and qubit_beta go together".into()));
        }
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        self.experiment.validate()?;
        if self.t_values.iter().any(|&t| !(t > 0.0 && t <= 1.0)) {
            return Err(Error::Config("t_values must lie in (0, 1]".into()));
        }
        if !(self.anchor_t > 0.0 && self.anchor_t <= 1.0) {
            return Err(Error::Config("anchor_t must lie in (0, 1]".into()));
        }
        if !(self.target_fwhm_um > 0.0) {
            return Err(Error::Config("target_fwhm_um must be positive".into()));
        }
        Ok(())
    }

    pub fn from_file(path: &std::path::Path) -> Result<Self> {
        RunSpec::parse(&std::fs::read_to_string(path)?)
    }
}

// ---------------------------------------------------------------------------
// Calibration

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OverlapCalibration {
    pub s0: f64,
    /// Intensity overlap `s0²`, reported for comparison with mode-matching
    /// figures quoted as visibilities.
    pub intensity_overlap: f64,
    pub v_x: f64,
    pub target_vx: f64,
    pub anchor_t: f64,
    pub evaluations: usize,
}

pub const CALIBRATION_TOLERANCE: f64 = 1e-4;

fn v_x_at(cfg: &ExperimentConfig, s0: f64, t: f64) -> Result<f64> {
    let c = ExperimentConfig {
        s0,
        transmittance: t,
        delay_um: 0.0,
        ..cfg.clone()
    };
    Ok(visibilities(&run_phase_averaged(&c)?)?.1)
}

/// Bisection on `s0` so that `V_X` at `anchor_t` hits `target`.
pub fn calibrate_overlap(cfg: &ExperimentConfig, anchor_t: f64, target: f64) -> Result<OverlapCalibration> {
    let top = v_x_at(cfg, 1.0, anchor_t)?;
    let mut evaluations = 1;
    let done = |s0: f64, v_x: f64, evaluations| OverlapCalibration {
        s0,
        intensity_overlap: s0 * s0,
        v_x,
        target_vx: target,
        anchor_t,
        evaluations,
    };
    if (top - target).abs() < CALIBRATION_TOLERANCE * 1e-2 {
        return Ok(done(1.0, top, evaluations));
    }
    if top < target {
        return Err(Error::Unattainable {
            target,
            max_attainable: top,
        });
    }
    let (mut lo, mut hi) = (0.0, 1.0);
    let mut best = (1.0, top);
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        let v = v_x_at(cfg, mid, anchor_t)?;
        evaluations += 1;
        best = (mid, v);
        if (v - target).abs() < CALIBRATION_TOLERANCE * 1e-2 {
            break;
        }
        if v > target {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    if (best.1 - target).abs() >= CALIBRATION_TOLERANCE {
        return Err(Error::Unattainable {
            target,
            max_attainable: top,
        });
    }
    Ok(done(best.0, best.1, evaluations))
}

// ---------------------------------------------------------------------------
// Transmittance sweep

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResultsRow {
    pub t: f64,
    pub v_z: f64,
    pub v_x: f64,
    pub f_low: f64,
    pub rate_per_pulse: f64,
    pub rate_per_second: f64,
    pub chsh_flag: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResultsMetadata {
    pub schema: &'static str,
    pub code_version: &'static str,
    pub config: ExperimentConfig,
    pub calibration: Option<OverlapCalibration>,
    pub max_source_tail: f64,
    pub max_truncated_weight: f64,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResultsTable {
    pub metadata: ResultsMetadata,
    pub rows: Vec<ResultsRow>,
}

impl ResultsTable {
    pub fn row(&self, t: f64) -> Option<&ResultsRow> {
        self.rows.iter().find(|r| (r.t - t).abs() <= 1e-12 * t.max(1e-300))
    }

    pub fn to_csv(&self) -> String {
        let mut s = format!("# schema={CSV_SCHEMA}\nt,v_z,v_x,f_low,rate_per_pulse,rate_per_second,chsh_flag\n");
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{}",
                fmt_sci(r.t),
                fmt_sci(r.v_z),
                fmt_sci(r.v_x),
                fmt_sci(r.f_low),
                fmt_sci(r.rate_per_pulse),
                fmt_sci(r.rate_per_second),
                r.chsh_flag
            );
        }
        s
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// One row per transmittance at fixed `μ` (Bob scales his pulse as `μ/T`),
/// in descending T.
pub fn sweep_transmittance(cfg: &ExperimentConfig, t_values: &[f64]) -> Result<ResultsTable> {
    cfg.validate()?;
    let mut ts = t_values.to_vec();
    ts.sort_by(|a, b| b.partial_cmp(a).expect("finite T"));
    let outcomes = ts
        .par_iter()
        .map(|&t| {
            let c = ExperimentConfig {
                transmittance: t,
                ..cfg.clone()
            };
            let out = run_phase_averaged(&c)?;
            Ok((t, out))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut rows = Vec::new();
    let mut meta = ResultsMetadata {
        schema: CSV_SCHEMA,
        code_version: env!("CARGO_PKG_VERSION"),
        config: cfg.clone(),
        calibration: None,
        max_source_tail: 0.0,
        max_truncated_weight: 0.0,
        warnings: Vec::new(),
    };
    for (t, out) in outcomes {
        let (v_z, v_x) = visibilities(&out)?;
        let f = f_low(v_z, v_x);
        rows.push(ResultsRow {
            t,
            v_z,
            v_x,
            f_low: f,
            rate_per_pulse: out.triple_coincidence,
            rate_per_second: out.triple_coincidence * cfg.repetition_rate_hz,
            chsh_flag: chsh_flag(f),
        });
        meta.max_source_tail = meta.max_source_tail.max(out.diagnostics.source_tail);
        meta.max_truncated_weight = meta.max_truncated_weight.max(out.diagnostics.truncated_weight);
        for w in out.diagnostics.warnings {
            if !meta.warnings.contains(&w) {
                meta.warnings.push(w);
            }
        }
    }
    Ok(ResultsTable { metadata: meta, rows })
}

/// Calibrates `s0` (if asked) and sweeps the run file's transmittances.
pub fn run_sweep(spec: &RunSpec) -> Result<ResultsTable> {
    let mut cfg = spec.experiment.clone();
    let calibration = if spec.calibrate {
        let c = calibrate_overlap(&cfg, spec.anchor_t, spec.target_vx)?;
        cfg.s0 = c.s0;
        Some(c)
    } else {
        None
    };
    let mut table = sweep_transmittance(&cfg, &spec.t_values)?;
    table.metadata.calibration = calibration;
    Ok(table)
}

// ---------------------------------------------------------------------------
// Fits

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SlopeFit {
    pub slope: f64,
    pub intercept: f64,
    pub stderr: f64,
}

impl SlopeFit {
    pub fn at(&self, x: f64) -> f64 {
        (self.intercept + self.slope * x.ln()).exp()
    }
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn fit_loglog_slope(points: &[(f64, f64)]) -> Result<SlopeFit> {
    if points.len() < 3 {
        return Err(Error::Fit(format!("need at least 3 points, got {}", points.len())));
    }
    if let Some(&(x, y)) = points.iter().find(|(x, y)| !(*x > 0.0 && *y > 0.0)) {
        return Err(Error::Fit(format!("nonpositive point ({x}, {y})")));
    }
    let n = points.len() as f64;
    let lx: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
    let ly: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxx: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::Fit("all x values coincide".into()));
    }
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let rss: f64 = lx.iter().zip(&ly).map(|(x, y)| (y - intercept - slope * x).powi(2)).sum();
    let stderr = if points.len() > 2 { (rss / (n - 2.0) / sxx).sqrt() } else { 0.0 };
    Ok(SlopeFit { slope, intercept, stderr })
}

// ---------------------------------------------------------------------------
// Rate scaling

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RateScaling {
    pub t_values: Vec<f64>,
    pub coherent_rates: Vec<f64>,
    pub single_photon_rates: Vec<f64>,
    pub coherent_fit: SlopeFit,
    pub single_photon_fit: SlopeFit,
    /// Transmittance where the two fitted power laws meet.
    pub crossing_t: f64,
    pub mu: f64,
}

/// Phase-averaged triple-coincidence probability against T for the coherent
/// ancilla and for a single-photon ancilla with otherwise equal settings.
pub fn rate_scaling(cfg: &ExperimentConfig, t_values: &[f64]) -> Result<RateScaling> {
    let rates = |variant: Variant| -> Result<Vec<f64>> {
        t_values
            .par_iter()
            .map(|&t| {
                let c = ExperimentConfig {
                    variant,
                    transmittance: t,
                    ..cfg.clone()
                };
                Ok(run_phase_averaged(&c)?.triple_coincidence)
            })
            .collect()
    };
    let coherent_rates = rates(Variant::CounterPropagating)?;
    let single_photon_rates = rates(Variant::SinglePhotonAncilla)?;
    let pts = |r: &[f64]| t_values.iter().copied().zip(r.iter().copied()).collect::<Vec<_>>();
    let cf = fit_loglog_slope(&pts(&coherent_rates))?;
    let sf = fit_loglog_slope(&pts(&single_photon_rates))?;
    if (cf.slope - sf.slope).abs() < 1e-12 {
        return Err(Error::Fit("parallel rate curves never cross".into()));
    }
    let crossing_t = ((sf.intercept - cf.intercept) / (cf.slope - sf.slope)).exp();
    Ok(RateScaling {
        t_values: t_values.to_vec(),
        coherent_rates,
        single_photon_rates,
        coherent_fit: cf,
        single_photon_fit: sf,
        crossing_t,
        mu: cfg.mu,
    })
}

// ---------------------------------------------------------------------------
// Error-component scaling

/// Photon-number sectors of a coincidence.
pub const DESIRED: Sector = Sector { pairs: 1, ancilla: 1 };
pub const COHERENT_TWO_PHOTON: Sector = Sector { pairs: 1, ancilla: 2 };
pub const DOUBLE_PAIR: Sector = Sector { pairs: 2, ancilla: 0 };

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComponentFit {
    pub component: String,
    pub parameter: String,
    pub target: f64,
    pub fit: SlopeFit,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComponentScaling {
    pub fits: Vec<ComponentFit>,
}

impl ComponentScaling {
    pub fn max_slope_error(&self) -> f64 {
        self.fits.iter().map(|f| (f.fit.slope - f.target).abs()).fold(0.0, f64::max)
    }
}

/// Log-spaced grid of `n` points from `lo` to `hi`.
pub fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| (lo.ln() + (hi.ln() - lo.ln()) * i as f64 / (n - 1).max(1) as f64).exp())
        .collect()
}

fn component_series(
    base: &ExperimentConfig,
    grid: &[f64],
    sector: Sector,
    set: impl Fn(&mut ExperimentConfig, f64) + Sync,
) -> Result<Vec<(f64, f64)>> {
    grid.par_iter()
        .map(|&x| {
            let mut c = base.clone();
            set(&mut c, x);
            let out = run_phase_averaged(&c)?;
            Ok((x, out.component(sector.pairs, sector.ancilla)))
        })
        .collect()
}

/// Exponents of the coincidence components in μ, γ and T. Dark counts are
/// switched off so every component is a clean power law at leading order.
pub fn component_scaling(cfg: &ExperimentConfig) -> Result<ComponentScaling> {
    let base = ExperimentConfig {
        dark_e: 0.0,
        dark_f: 0.0,
        dark_g: 0.0,
        source: PairSource::Spdc,
        phases: phase_set(2),
        ..cfg.clone()
    };
    let counter = ExperimentConfig {
        variant: Variant::CounterPropagating,
        ..base.clone()
    };
    let forward = ExperimentConfig {
        variant: Variant::ForwardAllFromBob,
        ..base.clone()
    };
    let mu_grid = log_grid(1e-4, 1e-2, 5);
    let gamma_grid = log_grid(1e-5, 1e-3, 5);
    let t_grid = log_grid(1e-3, 1e-1, 5);
    let t_grid_forward = log_grid(1e-4, 1e-2, 5);
    let set_mu = |c: &mut ExperimentConfig, x: f64| c.mu = x;
    let set_gamma = |c: &mut ExperimentConfig, x: f64| c.gamma = x;
    let set_t = |c: &mut ExperimentConfig, x: f64| c.transmittance = x;

    let mut fits = Vec::new();
    let mut add = |component: &str, parameter: &str, target: f64, pts: Vec<(f64, f64)>| -> Result<()> {
        fits.push(ComponentFit {
            component: component.into(),
            parameter: parameter.into(),
            target,
            fit: fit_loglog_slope(&pts)?,
        });
        Ok(())
    };
    add("desired", "mu", 1.0, component_series(&counter, &mu_grid, DESIRED, set_mu)?)?;
    add("desired", "T", 1.0, component_series(&counter, &t_grid, DESIRED, set_t)?)?;
    add(
        "coherent_two_photon",
        "mu",
        2.0,
        component_series(&counter, &mu_grid, COHERENT_TWO_PHOTON, set_mu)?,
    )?;
    add(
        "coherent_two_photon",
        "T",
        1.0,
        component_series(&counter, &t_grid, COHERENT_TWO_PHOTON, set_t)?,
    )?;
    add(
        "double_pair",
        "gamma",
        2.0,
        component_series(&counter, &gamma_grid, DOUBLE_PAIR, set_gamma)?,
    )?;
    add("double_pair", "T", 1.0, component_series(&counter, &t_grid, DOUBLE_PAIR, set_t)?)?;
    add("forward_desired", "mu", 1.0, component_series(&forward, &mu_grid, DESIRED, set_mu)?)?;
    add(
        "forward_unwanted",
        "mu",
        2.0,
        component_series(&forward, &mu_grid, COHERENT_TWO_PHOTON, set_mu)?,
    )?;
    add(
        "forward_unwanted",
        "T",
        0.0,
        component_series(&forward, &t_grid_forward, COHERENT_TWO_PHOTON, set_t)?,
    )?;
    Ok(ComponentScaling { fits })
}

// ---------------------------------------------------------------------------
// Delay scan

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DelayPoint {
    pub delay_um: f64,
    pub overlap: f64,
    /// Coincidence probability with E analyzed in R, F in D.
    pub p_r: f64,
    /// Coincidence probability with E analyzed in L, F in D.
    pub p_l: f64,
    pub visibility: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DelayScan {
    pub s0: f64,
    pub sigma_um: f64,
    pub points: Vec<DelayPoint>,
    pub zero_delay_visibility: f64,
    pub fwhm_um: f64,
}

fn delay_point(cfg: &ExperimentConfig, delay_um: f64) -> Result<DelayPoint> {
    let c = ExperimentConfig {
        variant: Variant::CounterPropagating,
        delay_um,
        ..cfg.clone()
    };
    // Bob's |L⟩ outcome leaves photon A in |R⟩.
    let out = run_phase_averaged(&c)?;
    let q = out.table.get(Basis::Y, Basis::Y);
    let (p_r, p_l) = (q[1], q[3]);
    let (hi, lo) = (p_r.max(p_l), p_r.min(p_l));
    Ok(DelayPoint {
        delay_um,
        overlap: c.overlap(),
        p_r,
        p_l,
        visibility: if hi + lo > 0.0 { (hi - lo) / (hi + lo) } else { 0.0 },
    })
}

/// Width at half height of the zero-delay visibility, found by bisection on
/// the monotone side of the Gaussian overlap.
pub fn visibility_fwhm(cfg: &ExperimentConfig) -> Result<f64> {
    let v0 = delay_point(cfg, 0.0)?.visibility;
    let half = v0 / 2.0;
    let (mut lo, mut hi) = (0.0, cfg.sigma_um);
    while delay_point(cfg, hi)?.visibility > half {
        hi *= 2.0;
        if hi > 1e3 * cfg.sigma_um {
            return Err(Error::Fit("visibility never falls to half height".into()));
        }
    }
    for _ in 0..50 {
        let mid = 0.5 * (lo + hi);
        if delay_point(cfg, mid)?.visibility > half {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(lo + hi)
}

/// `σ` such that the visibility dip has the requested FWHM. The visibility
/// depends on delay only through `Δx/σ`, so the width scales linearly in σ.
pub fn calibrate_sigma(cfg: &ExperimentConfig, target_fwhm_um: f64) -> Result<f64> {
    let unit = ExperimentConfig {
        sigma_um: 1.0,
        ..cfg.clone()
    };
    Ok(target_fwhm_um / visibility_fwhm(&unit)?)
}

pub fn delay_scan(cfg: &ExperimentConfig, delays_um: &[f64]) -> Result<DelayScan> {
    let points = delays_um.par_iter().map(|&d| delay_point(cfg, d)).collect::<Result<Vec<_>>>()?;
    Ok(DelayScan {
        s0: cfg.s0,
        sigma_um: cfg.sigma_um,
        points,
        zero_delay_visibility: delay_point(cfg, 0.0)?.visibility,
        fwhm_um: visibility_fwhm(cfg)?,
    })
}

impl DelayScan {
    pub fn to_csv(&self) -> String {
        let mut s = format!("# schema={CSV_SCHEMA}.delay\ndelay_um,overlap,p_r,p_l,visibility\n");
        for p in &self.points {
            let _ = writeln!(
                s,
                "{},{},{},{},{}",
                fmt_sci(p.delay_um),
                fmt_sci(p.overlap),
                fmt_sci(p.p_r),
                fmt_sci(p.p_l),
                fmt_sci(p.visibility)
            );
        }
        s
    }
}

/// Calibrates `s0` at the anchor, then `σ` to the target width, then scans.
pub fn run_delay_scan(spec: &RunSpec) -> Result<(DelayScan, Option<OverlapCalibration>)> {
    let mut cfg = spec.experiment.clone();
    let cal = if spec.calibrate {
        let c = calibrate_overlap(&cfg, spec.anchor_t, spec.target_vx)?;
        cfg.s0 = c.s0;
        Some(c)
    } else {
        None
    };
    if spec.calibrate_sigma {
        cfg.sigma_um = calibrate_sigma(&cfg, spec.target_fwhm_um)?;
    }
    Ok((delay_scan(&cfg, &spec.delays_um)?, cal))
}

// ---------------------------------------------------------------------------
// Tomography without the protocol

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Tomography {
    pub noise: bool,
    pub dm: PolarizationDensityMatrix,
    pub fidelity: f64,
    /// Largest magnitude among the HH–VV coherences.
    pub max_hh_vv_coherence: f64,
}

/// Photon pair sent directly (no ancilla, no parity check), with or without
/// the collective phase noise.
pub fn tomography_experiment(cfg: &ExperimentConfig, noise: bool) -> Result<Tomography> {
    let c = ExperimentConfig {
        variant: Variant::DirectNoDfs,
        phases: if noise { cfg.phases.clone() } else { vec![(0.0, 0.0)] },
        ..cfg.clone()
    };
    let dm = run_phase_averaged(&c)?.dm()?.clone();
    let fidelity = dm.fidelity_to_phi_plus()?;
    let max_hh_vv_coherence = dm.element(0, 3).norm().max(dm.element(3, 0).norm());
    Ok(Tomography {
        noise,
        dm,
        fidelity,
        max_hh_vv_coherence,
    })
}

// ---------------------------------------------------------------------------
// Event sampling

/// Clicks of `D_E`, `D_F` (behind the D analyzer) and `D_G` in one pulse.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct ClickRecord {
    pub pulse: u64,
    pub e: bool,
    pub f: bool,
    pub g: bool,
}

impl ClickRecord {
    pub fn triple(&self) -> bool {
        self.e && self.f && self.g
    }
}

/// Exact per-pulse distribution over the eight `(D_E, D_F, D_G)` patterns,
/// averaged over the phase set; bit 0 is `D_E`, bit 1 `D_F`, bit 2 `D_G`.
pub fn click_distribution(cfg: &ExperimentConfig) -> Result<[f64; 8]> {
    if cfg.variant == Variant::DirectNoDfs {
        return Err(Error::Config("event sampling needs the heralded wiring".into()));
    }
    let per_phase = cfg
        .phases
        .par_iter()
        .map(|&phi| {
            let circuit = build_circuit(cfg, phi)?;
            let (state, _) = circuit.evolve()?;
            let reg = &circuit.registry;
            let state = state.apply_transform(&polarizer_projection(reg, "F", crate::optics::PolarizationState::D.jones())?)?;
            let a = &circuit.analysis;
            let herald = a.herald.as_ref().expect("heralded wiring");
            let detectors = [
                DetectorAssignment {
                    model: a.e_detector.clone(),
                    modes: reg.spatial_modes(&a.e_label)?,
                },
                DetectorAssignment {
                    model: herald.detector.clone(),
                    modes: reg.polarization_modes("F", Polarization::H)?,
                },
                DetectorAssignment {
                    model: a.g_detector.clone(),
                    modes: reg.spatial_modes(&a.g_label)?,
                },
            ];
            pattern_distribution(&state, &detectors)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut dist = [0.0; 8];
    let w = 1.0 / per_phase.len() as f64;
    for d in &per_phase {
        for (slot, p) in dist.iter_mut().zip(d) {
            *slot += w * p;
        }
    }
    // Truncation leaves a small deficit; it is assigned to "no click".
    let total: f64 = dist.iter().sum();
    dist[0] += (1.0 - total).max(0.0);
    Ok(dist)
}

/// Draws `n_pulses` i.i.d. pulses from the exact distribution and reports
/// every pulse with at least one click.
pub fn sample_events(cfg: &ExperimentConfig, n_pulses: u64, seed: u64) -> Result<Vec<ClickRecord>> {
    let dist = click_distribution(cfg)?;
    Ok(sample_from(&dist, n_pulses, seed))
}

pub fn sample_from(dist: &[f64; 8], n_pulses: u64, seed: u64) -> Vec<ClickRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let any_click: f64 = dist[1..].iter().sum();
    let mut out = Vec::new();
    for pulse in 0..n_pulses {
        let u: f64 = rng.gen();
        if u >= any_click {
            continue;
        }
        let mut acc = 0.0;
        let mut pattern = 7;
        for (k, p) in dist.iter().enumerate().skip(1) {
            acc += p;
            if u < acc {
                pattern = k;
                break;
            }
        }
        out.push(ClickRecord {
            pulse,
            e: pattern & 1 != 0,
            f: pattern & 2 != 0,
            g: pattern & 4 != 0,
        });
    }
    out
}

pub fn events_to_csv(events: &[ClickRecord]) -> String {
    let mut s = format!("# schema={CSV_SCHEMA}.events\npulse,d_e,d_f,d_g\n");
    for e in events {
        let _ = writeln!(s, "{},{},{},{}", e.pulse, e.e as u8, e.f as u8, e.g as u8);
    }
    s
}

/// Counts of each click pattern in a sample.
pub fn pattern_counts(events: &[ClickRecord]) -> BTreeMap<(bool, bool, bool), u64> {
    let mut m = BTreeMap::new();
    for e in events {
        *m.entry((e.e, e.f, e.g)).or_insert(0) += 1;
    }
    m
}
