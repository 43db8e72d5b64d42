use std::collections::BTreeMap;

use nalgebra::{Matrix2, Matrix4, Vector4};
use num_complex::Complex64;
use serde::{Serialize, Serializer};

use crate::error::{Error, Result};
use crate::fock::{FockState, Polarization, Temporal};

const HERMITIAN_TOL: f64 = 1e-12;
const PSD_TOL: f64 = -1e-10;
const TRACE_TOL: f64 = 1e-9;

/// Two-qubit polarization state over the basis `HH, HV, VH, VV` (first
/// label first). The trace carries the post-selection probability when the
/// matrix comes from a projection; it is 1 after normalization.
#[derive(Debug, Clone, PartialEq)]
pub struct PolarizationDensityMatrix {
    m: Matrix4<Complex64>,
}

fn c(re: f64) -> Complex64 {
    Complex64::new(re, 0.0)
}

pub fn pauli(index: usize) -> Matrix2<Complex64> {
    let i = Complex64::new(0.0, 1.0);
    match index {
        0 => Matrix2::identity(),
        1 => Matrix2::new(c(0.0), c(1.0), c(1.0), c(0.0)),
        2 => Matrix2::new(c(0.0), -i, i, c(0.0)),
        3 => Matrix2::new(c(1.0), c(0.0), c(0.0), c(-1.0)),
        _ => panic!("pauli index {index} out of range"),
    }
}

pub fn kron2(a: &Matrix2<Complex64>, b: &Matrix2<Complex64>) -> Matrix4<Complex64> {
    Matrix4::from_fn(|r, col| a[(r / 2, col / 2)] * b[(r % 2, col % 2)])
}

pub fn phi_plus_vector() -> Vector4<Complex64> {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    Vector4::new(c(s), c(0.0), c(0.0), c(s))
}

impl PolarizationDensityMatrix {
    /// Validated constructor: Hermitian, positive semidefinite, trace in
    /// `[0, 1]` up to tolerance.
    pub fn new(m: Matrix4<Complex64>) -> Result<Self> {
        let dm = Self::hermitian(m)?;
        let min = dm.min_eigenvalue();
        if min < PSD_TOL {
            return Err(Error::InvalidDensityMatrix(format!("negative eigenvalue {min:.3e}")));
        }
        let tr = dm.trace();
        if !(-TRACE_TOL..=1.0 + TRACE_TOL).contains(&tr) {
            return Err(Error::InvalidDensityMatrix(format!("trace {tr}")));
        }
        Ok(dm)
    }

    /// Hermiticity is the only requirement; used for linear-inversion
    /// estimates, which need not be positive.
    pub fn hermitian(m: Matrix4<Complex64>) -> Result<Self> {
        let dev = (m - m.adjoint()).iter().map(|z| z.norm()).fold(0.0, f64::max);
        if dev > HERMITIAN_TOL {
            return Err(Error::InvalidDensityMatrix(format!("not Hermitian ({dev:.3e})")));
        }
        // Symmetrize away rounding noise.
        Ok(PolarizationDensityMatrix {
            m: (m + m.adjoint()) * c(0.5),
        })
    }

    pub fn pure(psi: &Vector4<Complex64>) -> Self {
        PolarizationDensityMatrix { m: psi * psi.adjoint() }
    }

    pub fn phi_plus() -> Self {
        Self::pure(&phi_plus_vector())
    }

    pub fn maximally_mixed() -> Self {
        PolarizationDensityMatrix {
            m: Matrix4::identity() * c(0.25),
        }
    }

    /// Linear-inversion reconstruction from a table of two-qubit Pauli
    /// correlators `S[i][j] = ⟨σ_i ⊗ σ_j⟩` with `σ_0 = I`.
    pub fn from_correlators(s: &[[f64; 4]; 4]) -> Result<Self> {
        let mut m = Matrix4::zeros();
        for (i, row) in s.iter().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                m += kron2(&pauli(i), &pauli(j)) * c(v / 4.0);
            }
        }
        Self::hermitian(m)
    }

    pub fn matrix(&self) -> &Matrix4<Complex64> {
        &self.m
    }

    pub fn element(&self, row: usize, col: usize) -> Complex64 {
        self.m[(row, col)]
    }

    pub fn trace(&self) -> f64 {
        self.m.trace().re
    }

    pub fn normalized(&self) -> Result<Self> {
        let tr = self.trace();
        if tr <= 0.0 {
            return Err(Error::ZeroTrace);
        }
        Ok(PolarizationDensityMatrix { m: self.m / c(tr) })
    }

    pub fn eigenvalues(&self) -> Vec<f64> {
        let mut v: Vec<f64> = self.m.symmetric_eigenvalues().iter().copied().collect();
        v.sort_by(|a, b| a.total_cmp(b));
        v
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.eigenvalues()[0]
    }

    pub fn purity(&self) -> f64 {
        (self.m * self.m).trace().re
    }

    /// `Tr(ρ O)` for a Hermitian observable.
    pub fn expectation(&self, observable: &Matrix4<Complex64>) -> f64 {
        (self.m * observable).trace().re
    }

    /// Pauli correlator `⟨σ_i ⊗ σ_j⟩` of the normalized state.
    pub fn correlator(&self, i: usize, j: usize) -> f64 {
        self.expectation(&kron2(&pauli(i), &pauli(j))) / self.trace()
    }

    pub fn fidelity_to_pure(&self, psi: &Vector4<Complex64>) -> Result<f64> {
        let tr = self.trace();
        if tr <= 0.0 {
            return Err(Error::ZeroTrace);
        }
        let v = psi.adjoint() * self.m * psi;
        Ok((v[(0, 0)].re / tr).clamp(0.0, 1.0))
    }

    /// `⟨φ⁺|ρ|φ⁺⟩` of the normalized matrix.
    pub fn fidelity_to_phi_plus(&self) -> Result<f64> {
        self.fidelity_to_pure(&phi_plus_vector())
    }

    /// Half the trace norm of the difference of the normalized matrices.
    pub fn trace_distance(&self, other: &Self) -> Result<f64> {
        let a = self.normalized()?;
        let b = other.normalized()?;
        let diff = a.m - b.m;
        Ok(0.5 * diff.symmetric_eigenvalues().iter().map(|x| x.abs()).sum::<f64>())
    }
}

impl Serialize for PolarizationDensityMatrix {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        let rows: Vec<Vec<[f64; 2]>> = (0..4)
            .map(|r| (0..4).map(|col| [self.m[(r, col)].re, self.m[(r, col)].im]).collect())
            .collect();
        rows.serialize(serializer)
    }
}

/// Reduced polarization state of the sector with exactly one photon in each
/// of two spatial labels.
///
/// All other modes, and the temporal component of each of the two photons,
/// are traced out: terms interfere only when every traced degree of freedom
/// agrees. The trace of the result is the probability of the sector.
pub fn reduce_to_polarization_dm(state: &FockState, spatial_a: &str, spatial_b: &str) -> Result<PolarizationDensityMatrix> {
    let reg = state.registry();
    let modes_a = reg.spatial_modes(spatial_a)?;
    let modes_b = reg.spatial_modes(spatial_b)?;

    // environment key -> amplitudes over the four polarization pairs
    let mut groups: BTreeMap<(Vec<u8>, Temporal, Temporal), [Complex64; 4]> = BTreeMap::new();
    for (occ, amp) in state.terms() {
        let count = |modes: &[usize]| modes.iter().map(|&m| occ[m] as u32).sum::<u32>();
        if count(&modes_a) != 1 || count(&modes_b) != 1 {
            continue;
        }
        let ma = *modes_a.iter().find(|&&m| occ[m] == 1).expect("one photon");
        let mb = *modes_b.iter().find(|&&m| occ[m] == 1).expect("one photon");
        let (ka, kb) = (reg.key(ma), reg.key(mb));
        let mut env = occ.clone();
        env[ma] = 0;
        env[mb] = 0;
        let idx = ka.polarization.index() * 2 + kb.polarization.index();
        let slot = groups
            .entry((env, ka.temporal, kb.temporal))
            .or_insert([Complex64::new(0.0, 0.0); 4]);
        slot[idx] += amp;
    }

    let mut m = Matrix4::<Complex64>::zeros();
    for amps in groups.values() {
        let v = Vector4::from_column_slice(amps);
        m += v * v.adjoint();
    }
    PolarizationDensityMatrix::new(m)
}

/// Index of the two-qubit basis element for a pair of polarizations.
pub fn pair_index(a: Polarization, b: Polarization) -> usize {
    a.index() * 2 + b.index()
}
