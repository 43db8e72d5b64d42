//! Wiring of the entanglement-distribution protocol and its variants.
//!
//! Alice holds an SPDC source emitting photons A and B. Photon B crosses the
//! noisy channel to Bob and is detected at `D_G` after a glass plate. Bob's
//! coherent pulse R crosses the same channel in the opposite direction, is
//! polarization-flipped at Alice and meets photon A on a polarizing beam
//! splitter whose outputs E and F are detected by `D_E` and `D_F`. Photon F is
//! analyzed in the diagonal basis and heralds the pair (E, G).

use std::collections::BTreeMap;
use std::f64::consts::{FRAC_1_SQRT_2, FRAC_PI_4, PI};
use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::detection::{coincidence_data, AnalysisSetup, CoincidenceData, DetectorModel, Herald, Sector, SettingTable};
use crate::error::{check_unit_interval, Error, Result};
use crate::fock::{FockState, ModeRegistry, Polarization, PolarizationDensityMatrix, SpatialSpec, Temporal, DEFAULT_CUTOFF, DEFAULT_PRUNE};
use crate::optics::{Element, JonesVector, OverlapModel, PolarizationState};
use crate::sources::{encoded_pair, multimode_coherent, single_photon, spdc_state, SpdcParams};

/// Pulses per second of the pump laser.
pub const DEFAULT_REPETITION_RATE_HZ: f64 = 82.0e6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    /// Photon B goes Alice → Bob while the coherent pulse R goes Bob → Alice.
    CounterPropagating,
    /// Bob prepares everything; A and R travel together to Alice.
    ForwardAllFromBob,
    /// Counter-propagating wiring with a single photon in place of the pulse.
    SinglePhotonAncilla,
    /// No ancilla and no parity check: A is analyzed directly.
    DirectNoDfs,
}

impl Variant {
    pub fn name(self) -> &'static str {
        match self {
            Variant::CounterPropagating => "counter_propagating",
            Variant::ForwardAllFromBob => "forward_all_from_bob",
            Variant::SinglePhotonAncilla => "single_photon_ancilla",
            Variant::DirectNoDfs => "direct_no_dfs",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Ok(match s {
            "counter_propagating" => Variant::CounterPropagating,
            "forward_all_from_bob" => Variant::ForwardAllFromBob,
            "single_photon_ancilla" => Variant::SinglePhotonAncilla,
            "direct_no_dfs" => Variant::DirectNoDfs,
            other => return Err(Error::Config(format!("unknown variant '{other}'"))),
        })
    }
}

/// How the configured `gamma` maps onto the SPDC series.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GammaConvention {
    /// `gamma` is the one-pair probability per pulse (to leading order), so
    /// the squared amplitude in the exponent is `gamma/2`.
    PairProbability,
    /// `gamma` is the squared amplitude itself; one-pair probability ≈ 2γ.
    SquaredAmplitude,
}

impl GammaConvention {
    pub fn name(self) -> &'static str {
        match self {
            GammaConvention::PairProbability => "pair_probability",
            GammaConvention::SquaredAmplitude => "squared_amplitude",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "pair_probability" => Ok(GammaConvention::PairProbability),
            "squared_amplitude" => Ok(GammaConvention::SquaredAmplitude),
            other => Err(Error::Config(format!("unknown gamma convention '{other}'"))),
        }
    }
}

/// What Alice's pair source emits.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PairSource {
    Spdc,
    /// Exactly one pair `α|HH⟩ + β|VV⟩`.
    Encoded {
        alpha: Complex64,
        beta: Complex64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub variant: Variant,
    pub source: PairSource,
    pub gamma: f64,
    pub gamma_convention: GammaConvention,
    pub pair_cutoff: u32,
    /// Mean ancilla photon number on arrival at Alice.
    pub mu: f64,
    pub transmittance: f64,
    pub eta: f64,
    pub eta_g: f64,
    pub dark_e: f64,
    pub dark_f: f64,
    pub dark_g: f64,
    pub s0: f64,
    pub sigma_um: f64,
    pub delay_um: f64,
    pub gp_reflectance: f64,
    /// Collective phase settings `(φ_H, φ_V)` averaged uniformly.
    pub phases: Vec<(f64, f64)>,
    /// Extra phase picked up by the return pass only.
    pub phase_delta: (f64, f64),
    pub cutoff: u32,
    pub prune: f64,
    /// Accept the orthogonal `D_F` outcome with a σ_z correction on E.
    pub include_dbar_branch: bool,
    /// Place the attenuated coherent pulse directly at Alice. A coherent
    /// state stays coherent under loss, so this is exact and avoids
    /// truncating the bright pulse Bob launches at small T.
    pub coherent_shortcut: bool,
    pub repetition_rate_hz: f64,
}

/// Eight phases `(0, nπ/4)`.
pub fn default_phases() -> Vec<(f64, f64)> {
    phase_set(8)
}

pub fn phase_set(steps: usize) -> Vec<(f64, f64)> {
    (0..steps).map(|n| (0.0, 2.0 * PI * n as f64 / steps as f64)).collect()
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let eta = 0.13;
        ExperimentConfig {
            variant: Variant::CounterPropagating,
            source: PairSource::Spdc,
            gamma: 3.0e-3,
            gamma_convention: GammaConvention::PairProbability,
            pair_cutoff: 2,
            mu: 1.4e-2 / eta,
            transmittance: 0.1,
            eta,
            eta_g: 0.09,
            dark_e: 0.0,
            dark_f: 0.0,
            dark_g: 1.5e-6,
            s0: 1.0,
            sigma_um: 76.4,
            delay_um: 0.0,
            gp_reflectance: 0.05,
            phases: default_phases(),
            phase_delta: (0.0, 0.0),
            cutoff: DEFAULT_CUTOFF,
            prune: DEFAULT_PRUNE,
            include_dbar_branch: false,
            coherent_shortcut: true,
            repetition_rate_hz: DEFAULT_REPETITION_RATE_HZ,
        }
    }
}

impl ExperimentConfig {
    /// Lossless, noiseless single-pair configuration.
    pub fn ideal(variant: Variant) -> Self {
        ExperimentConfig {
            variant,
            source: PairSource::Encoded {
                alpha: Complex64::new(FRAC_1_SQRT_2, 0.0),
                beta: Complex64::new(FRAC_1_SQRT_2, 0.0),
            },
            gamma: 0.0,
            mu: 1.0,
            transmittance: 1.0,
            eta: 1.0,
            eta_g: 1.0,
            dark_g: 0.0,
            gp_reflectance: 0.0,
            ..ExperimentConfig::default()
        }
    }

    pub fn with_qubit(mut self, alpha: Complex64, beta: Complex64) -> Self {
        self.source = PairSource::Encoded { alpha, beta };
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.gamma) {
            return Err(Error::OutOfRange {
                name: "gamma",
                value: self.gamma,
                range: "[0, 1)",
            });
        }
        if self.pair_cutoff < 1 {
            return Err(Error::Config("pair_cutoff must be at least 1".into()));
        }
        if !(self.mu >= 0.0 && self.mu.is_finite()) {
            return Err(Error::OutOfRange {
                name: "mu",
                value: self.mu,
                range: "[0, inf)",
            });
        }
        check_unit_interval("transmittance", self.transmittance)?;
        check_unit_interval("eta", self.eta)?;
        check_unit_interval("eta_g", self.eta_g)?;
        for (name, d) in [("dark_e", self.dark_e), ("dark_f", self.dark_f), ("dark_g", self.dark_g)] {
            if !(0.0..1.0).contains(&d) {
                return Err(Error::OutOfRange {
                    name,
                    value: d,
                    range: "[0, 1)",
                });
            }
        }
        OverlapModel::new(self.s0, self.sigma_um)?;
        if !self.delay_um.is_finite() {
            return Err(Error::OutOfRange {
                name: "delay_um",
                value: self.delay_um,
                range: "finite",
            });
        }
        check_unit_interval("gp_reflectance", self.gp_reflectance)?;
        if self.phases.is_empty() {
            return Err(Error::Config("phase set is empty".into()));
        }
        if self
            .phases
            .iter()
            .chain(std::iter::once(&self.phase_delta))
            .any(|(a, b)| !a.is_finite() || !b.is_finite())
        {
            return Err(Error::Config("phases must be finite".into()));
        }
        if self.cutoff < 2 {
            return Err(Error::Config("cutoff must be at least 2".into()));
        }
        if self.cutoff > 12 {
            return Err(Error::Config("cutoff above 12 is not supported".into()));
        }
        if !(self.prune >= 0.0) {
            return Err(Error::Config("prune threshold must be nonnegative".into()));
        }
        if !(self.repetition_rate_hz > 0.0) {
            return Err(Error::Config("repetition rate must be positive".into()));
        }
        if let PairSource::Encoded { alpha, beta } = self.source {
            let n = alpha.norm_sqr() + beta.norm_sqr();
            if (n - 1.0).abs() > 1e-12 {
                return Err(Error::Config(format!("|alpha|^2 + |beta|^2 = {n}, expected 1")));
            }
        }
        Ok(())
    }

    /// Squared pair amplitude handed to the SPDC source.
    pub fn spdc_gamma(&self) -> f64 {
        match self.gamma_convention {
            GammaConvention::PairProbability => self.gamma / 2.0,
            GammaConvention::SquaredAmplitude => self.gamma,
        }
    }

    /// Mean photon number Bob launches into the channel, `μ_B = μ/T`.
    pub fn mu_bob(&self) -> f64 {
        self.mu / self.transmittance
    }

    pub fn overlap(&self) -> f64 {
        OverlapModel {
            s0: self.s0,
            sigma_um: self.sigma_um,
        }
        .at_delay(self.delay_um)
    }

    fn detector(&self, name: &str, eta: f64, dark: f64) -> DetectorModel {
        DetectorModel {
            name: name.into(),
            efficiency: eta,
            dark_probability: dark,
        }
    }
}

/// A source placed on the input modes before any element acts.
#[derive(Debug, Clone, PartialEq)]
pub enum Source {
    Spdc {
        a: String,
        b: String,
        params: SpdcParams,
    },
    Encoded {
        a: String,
        b: String,
        alpha: Complex64,
        beta: Complex64,
    },
    /// Coherent state with per-polarization amplitudes `(α_H, α_V)`.
    Coherent {
        spatial: String,
        amplitudes: JonesVector,
    },
    SinglePhoton {
        spatial: String,
        jones: JonesVector,
    },
}

/// A fully specified optical circuit for one phase setting.
#[derive(Debug, Clone)]
pub struct Circuit {
    pub registry: Arc<ModeRegistry>,
    pub cutoff: u32,
    pub prune: f64,
    pub sources: Vec<Source>,
    pub elements: Vec<Element>,
    pub analysis: AnalysisSetup,
}

fn spec(label: &str, split: bool) -> SpatialSpec {
    if split {
        SpatialSpec::split(label)
    } else {
        SpatialSpec::new(label)
    }
}

fn phase(spatial: &str, (phi_h, phi_v): (f64, f64)) -> Element {
    Element::PhaseShifter {
        spatial: spatial.into(),
        phi_h,
        phi_v,
    }
}

fn loss(spatial: &str, transmittance: f64, loss_label: &str) -> Element {
    Element::Loss {
        spatial: spatial.into(),
        transmittance,
        loss_label: loss_label.into(),
    }
}

/// Builds the circuit for one collective phase setting.
pub fn build_circuit(cfg: &ExperimentConfig, phi: (f64, f64)) -> Result<Circuit> {
    cfg.validate()?;
    let s = cfg.overlap();
    let split = s < 1.0;
    let back = (phi.0 + cfg.phase_delta.0, phi.1 + cfg.phase_delta.1);
    let bright = !cfg.coherent_shortcut && cfg.variant != Variant::SinglePhotonAncilla;

    let mut labels: Vec<SpatialSpec> = Vec::new();
    let mut sources = Vec::new();
    let mut elements = Vec::new();

    let pair = match cfg.source {
        PairSource::Spdc => Source::Spdc {
            a: "A".into(),
            b: "B".into(),
            params: SpdcParams {
                gamma: cfg.spdc_gamma(),
                pair_cutoff: cfg.pair_cutoff,
            },
        },
        PairSource::Encoded { alpha, beta } => Source::Encoded {
            a: "A".into(),
            b: "B".into(),
            alpha,
            beta,
        },
    };
    sources.push(pair);

    let d = PolarizationState::D.jones();
    let arrived_pulse = |phases: (f64, f64)| {
        let a = cfg.mu.sqrt();
        [d[0] * Complex64::from_polar(a, phases.0), d[1] * Complex64::from_polar(a, phases.1)]
    };

    let (e_label, pair_labels) = match cfg.variant {
        Variant::CounterPropagating | Variant::SinglePhotonAncilla => {
            labels.extend([spec("A", split), spec("R", split), spec("E", split), spec("F", split)]);
            labels.extend([spec("B", false), spec("B.loss", false), spec("B.gp", false)]);
            // Bob-bound photon B.
            elements.push(phase("B", phi));
            elements.push(loss("B", cfg.transmittance, "B.loss"));
            elements.push(Element::GlassPlate {
                transmit_in: "B".into(),
                transmit_discard: "B.gp".into(),
                reflectance: cfg.gp_reflectance,
            });
            // Alice-bound ancilla R.
            match (cfg.variant, bright) {
                (Variant::SinglePhotonAncilla, _) => {
                    labels.push(spec("R.loss", split));
                    sources.push(Source::SinglePhoton {
                        spatial: "R".into(),
                        jones: d,
                    });
                    elements.push(phase("R", back));
                    elements.push(loss("R", cfg.transmittance, "R.loss"));
                }
                (_, true) => {
                    labels.push(spec("R.loss", split));
                    let a = cfg.mu_bob().sqrt();
                    sources.push(Source::Coherent {
                        spatial: "R".into(),
                        amplitudes: [d[0] * a, d[1] * a],
                    });
                    elements.push(phase("R", back));
                    elements.push(loss("R", cfg.transmittance, "R.loss"));
                }
                (_, false) => sources.push(Source::Coherent {
                    spatial: "R".into(),
                    amplitudes: arrived_pulse(back),
                }),
            }
            parity_check(&mut elements, split, s);
            ("E", vec!["B".into(), "B.loss".into(), "B.gp".into()])
        }
        Variant::ForwardAllFromBob => {
            labels.extend([spec("A", split), spec("R", split), spec("E", split), spec("F", split)]);
            labels.extend([spec("B", false), spec("A.loss", split)]);
            elements.push(phase("A", phi));
            elements.push(loss("A", cfg.transmittance, "A.loss"));
            if bright {
                labels.push(spec("R.loss", split));
                let a = cfg.mu_bob().sqrt();
                sources.push(Source::Coherent {
                    spatial: "R".into(),
                    amplitudes: [d[0] * a, d[1] * a],
                });
                elements.push(phase("R", phi));
                elements.push(loss("R", cfg.transmittance, "R.loss"));
            } else {
                sources.push(Source::Coherent {
                    spatial: "R".into(),
                    amplitudes: arrived_pulse(phi),
                });
            }
            parity_check(&mut elements, split, s);
            ("E", vec!["B".into()])
        }
        Variant::DirectNoDfs => {
            labels.extend([spec("A", false), spec("B", false), spec("B.loss", false), spec("B.gp", false)]);
            elements.push(phase("B", phi));
            elements.push(loss("B", cfg.transmittance, "B.loss"));
            elements.push(Element::GlassPlate {
                transmit_in: "B".into(),
                transmit_discard: "B.gp".into(),
                reflectance: cfg.gp_reflectance,
            });
            ("A", vec!["B".into(), "B.loss".into(), "B.gp".into()])
        }
    };

    let herald = (cfg.variant != Variant::DirectNoDfs).then(|| Herald {
        spatial: "F".into(),
        polarization: d,
        detector: cfg.detector("D_F", cfg.eta, cfg.dark_f),
        include_orthogonal_branch: cfg.include_dbar_branch,
    });
    let analysis = AnalysisSetup {
        e_label: e_label.into(),
        e_detector: cfg.detector("D_E", cfg.eta, cfg.dark_e),
        g_label: "B".into(),
        g_detector: cfg.detector("D_G", cfg.eta_g, cfg.dark_g),
        herald,
        pair_labels,
    };
    Ok(Circuit {
        registry: Arc::new(ModeRegistry::new(&labels)?),
        cutoff: cfg.cutoff,
        prune: cfg.prune,
        sources,
        elements,
        analysis,
    })
}

/// Polarization flip of R, mode mismatch, then the polarizing beam splitter
/// mixing A and R into E and F.
fn parity_check(elements: &mut Vec<Element>, split: bool, s: f64) {
    elements.push(Element::Waveplate {
        spatial: "R".into(),
        angle: FRAC_PI_4,
        retardance: PI,
    });
    if split {
        elements.push(Element::OverlapSplit {
            spatial: "R".into(),
            overlap: s,
        });
    }
    elements.push(Element::Pbs {
        in1: "A".into(),
        in2: "R".into(),
        out1: "E".into(),
        out2: "F".into(),
    });
}

/// Truncation bookkeeping of a circuit run.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct Diagnostics {
    /// Weight dropped from the source series (SPDC tail and coherent tail).
    pub source_tail: f64,
    /// Weight dropped by the photon-number cutoff while combining sources.
    pub truncated_weight: f64,
    pub warnings: Vec<String>,
}

impl Diagnostics {
    fn merge(&mut self, other: &Diagnostics) {
        self.source_tail = self.source_tail.max(other.source_tail);
        self.truncated_weight = self.truncated_weight.max(other.truncated_weight);
        for w in &other.warnings {
            if !self.warnings.contains(w) {
                self.warnings.push(w.clone());
            }
        }
    }
}

impl Circuit {
    /// Input state: all sources on their modes, tensored.
    pub fn prepare(&self) -> Result<(FockState, Diagnostics)> {
        let reg = self.registry.clone();
        let mut diag = Diagnostics::default();
        let mut state: Option<FockState> = None;
        for src in &self.sources {
            let part = match src {
                Source::Spdc { a, b, params } => {
                    let (s, d) = spdc_state(reg.clone(), params, a, b, self.cutoff)?;
                    diag.source_tail += d.tail_weight;
                    diag.warnings.extend(d.warning);
                    s
                }
                Source::Encoded { a, b, alpha, beta } => encoded_pair(reg.clone(), a, b, *alpha, *beta, self.cutoff)?,
                Source::Coherent { spatial, amplitudes } => {
                    let modes = [
                        reg.mode(spatial, Polarization::H, Temporal::Matched)?,
                        reg.mode(spatial, Polarization::V, Temporal::Matched)?,
                    ];
                    let (s, d) = multimode_coherent(reg.clone(), &[(modes[0], amplitudes[0]), (modes[1], amplitudes[1])], self.cutoff)?;
                    diag.source_tail += d.tail_weight;
                    diag.warnings.extend(d.warning);
                    s
                }
                Source::SinglePhoton { spatial, jones } => single_photon(reg.clone(), spatial, *jones, self.cutoff)?,
            };
            state = Some(match state {
                None => part,
                Some(s) => s.tensor(&part)?,
            });
        }
        let state = state
            .unwrap_or_else(|| FockState::vacuum(reg.clone(), self.cutoff))
            .with_prune(self.prune);
        diag.truncated_weight = state.truncated_weight();
        Ok((state, diag))
    }

    /// State just before the detectors.
    pub fn evolve(&self) -> Result<(FockState, Diagnostics)> {
        let (mut state, mut diag) = self.prepare()?;
        for el in &self.elements {
            state = state.apply_transform(&el.build(&self.registry)?)?;
        }
        diag.truncated_weight = diag.truncated_weight.max(state.truncated_weight());
        Ok((state, diag))
    }

    pub fn run(&self) -> Result<(CoincidenceData, Diagnostics)> {
        let (state, diag) = self.evolve()?;
        Ok((coincidence_data(&state, &self.analysis)?, diag))
    }
}

/// Result of one protocol run (fixed phase or phase-averaged).
#[derive(Debug, Clone, PartialEq)]
pub struct ProtocolOutcome {
    /// Coincidence probabilities per pulse for every analysis setting pair.
    pub table: SettingTable,
    /// Probability per pulse of a `D_E · D_F(D) · D_G` coincidence without
    /// polarization analysis at E and G.
    pub triple_coincidence: f64,
    /// Triple-coincidence probability by (pairs, ancilla photons) sector.
    pub components: BTreeMap<Sector, f64>,
    /// Conditional state of E and G; `None` if some setting never fires.
    pub dm: Option<PolarizationDensityMatrix>,
    pub diagnostics: Diagnostics,
}

impl ProtocolOutcome {
    fn from_data(data: CoincidenceData, diagnostics: Diagnostics) -> Self {
        let c = data.conditioned();
        ProtocolOutcome {
            table: c.table,
            triple_coincidence: c.success_probability,
            components: c.components,
            dm: c.dm,
            diagnostics,
        }
    }

    pub fn dm(&self) -> Result<&PolarizationDensityMatrix> {
        self.dm.as_ref().ok_or(Error::EmptyPostSelection)
    }

    pub fn component(&self, pairs: u32, ancilla: u32) -> f64 {
        self.components.get(&Sector { pairs, ancilla }).copied().unwrap_or(0.0)
    }
}

pub fn run_fixed_phase(cfg: &ExperimentConfig, phi_h: f64, phi_v: f64) -> Result<ProtocolOutcome> {
    let (data, diag) = build_circuit(cfg, (phi_h, phi_v))?.run()?;
    Ok(ProtocolOutcome::from_data(data, diag))
}

/// Uniform mixture over the configured phase set. Phases are evaluated in
/// parallel and summed in set order.
pub fn run_phase_averaged(cfg: &ExperimentConfig) -> Result<ProtocolOutcome> {
    cfg.validate()?;
    let runs: Vec<(CoincidenceData, Diagnostics)> = cfg
        .phases
        .par_iter()
        .map(|&phi| build_circuit(cfg, phi)?.run())
        .collect::<Result<_>>()?;
    let w = 1.0 / runs.len() as f64;
    let mut acc = CoincidenceData::default();
    let mut diag = Diagnostics::default();
    for (data, d) in &runs {
        acc.table.add_scaled(&data.table, w);
        acc.success_probability += w * data.success_probability;
        for (k, v) in &data.components {
            *acc.components.entry(*k).or_insert(0.0) += w * v;
        }
        diag.merge(d);
    }
    Ok(ProtocolOutcome::from_data(acc, diag))
}

/// `(V_Z, V_X) = (⟨Z⊗Z⟩, ⟨X⊗X⟩)` of the conditional state.
pub fn visibilities(outcome: &ProtocolOutcome) -> Result<(f64, f64)> {
    let dm = outcome.dm()?;
    Ok((dm.correlator(3, 3), dm.correlator(1, 1)))
}

pub fn f_low(v_z: f64, v_x: f64) -> f64 {
    (v_z + v_x) / 2.0
}

/// Threshold above which the shared state can violate the CHSH inequality.
pub const CHSH_THRESHOLD: f64 = FRAC_1_SQRT_2;

pub fn chsh_flag(f_low: f64) -> bool {
    f_low > CHSH_THRESHOLD
}

/// Phase-averaged triple-coincidence probability per pulse and per second.
pub fn sharing_rate(cfg: &ExperimentConfig) -> Result<(f64, f64)> {
    let p = run_phase_averaged(cfg)?.triple_coincidence;
    Ok((p, p * cfg.repetition_rate_hz))
}

/// Fidelity of the phase-averaged output to `α|HH⟩ + β|VV⟩`.
pub fn distribute_qubit(cfg: &ExperimentConfig) -> Result<f64> {
    let PairSource::Encoded { alpha, beta } = cfg.source else {
        return Err(Error::Config("qubit distribution needs an encoded pair source".into()));
    };
    let target = nalgebra::Vector4::new(alpha, Complex64::new(0.0, 0.0), Complex64::new(0.0, 0.0), beta);
    run_phase_averaged(cfg)?.dm()?.fidelity_to_pure(&target)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ideal_counter_propagating_is_phi_plus_for_every_phase() {
        let cfg = ExperimentConfig::ideal(Variant::SinglePhotonAncilla);
        for &(h, v) in &default_phases() {
            let out = run_fixed_phase(&cfg, h, v).unwrap();
            let dm = out.dm().unwrap();
            assert!(dm.trace_distance(&PolarizationDensityMatrix::phi_plus()).unwrap() < 1e-10);
        }
    }

    #[test]
    fn direct_variant_dephases() {
        let cfg = ExperimentConfig::ideal(Variant::DirectNoDfs);
        let out = run_phase_averaged(&cfg).unwrap();
        let f = out.dm().unwrap().fidelity_to_phi_plus().unwrap();
        assert!((f - 0.5).abs() < 1e-10);
        let fixed = run_fixed_phase(&cfg, 0.0, 0.0).unwrap();
        assert!((fixed.dm().unwrap().fidelity_to_phi_plus().unwrap() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn bright_and_shortcut_pulses_agree() {
        let mut cfg = ExperimentConfig {
            cutoff: 6,
            transmittance: 0.5,
            mu: 0.05,
            s0: 0.9,
            dark_g: 1e-3,
            phases: phase_set(2),
            ..ExperimentConfig::default()
        };
        let a = run_phase_averaged(&cfg).unwrap();
        cfg.coherent_shortcut = false;
        let b = run_phase_averaged(&cfg).unwrap();
        // The cutoff also counts lost ancilla photons in the bright wiring,
        // so the two differ at the truncation level only.
        assert!((a.triple_coincidence - b.triple_coincidence).abs() < 1e-3 * a.triple_coincidence);
        assert!(a.table.max_abs_difference(&b.table) < 1e-3 * a.triple_coincidence);
    }

    #[test]
    fn invalid_config_rejected() {
        let cfg = ExperimentConfig {
            transmittance: 1.5,
            ..ExperimentConfig::default()
        };
        assert!(matches!(run_phase_averaged(&cfg), Err(Error::OutOfRange { .. })));
        let cfg = ExperimentConfig {
            phases: vec![],
            ..ExperimentConfig::default()
        };
        assert!(run_phase_averaged(&cfg).is_err());
    }
}
