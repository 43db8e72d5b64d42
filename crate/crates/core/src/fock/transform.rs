use std::collections::BTreeSet;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::fock::ModeRegistry;

pub const ISOMETRY_TOLERANCE: f64 = 1e-12;

/// Linear map on creation operators: `a_in[i]† -> Σ_j M[j][i] a_out[j]†`.
///
/// Equivalently `M` acts on single-photon amplitude vectors. Output modes
/// that are not inputs must be vacuum when the transform is applied; this is
/// how loss is dilated onto fresh ancilla modes.
#[derive(Debug, Clone, PartialEq)]
pub struct ModeTransform {
    inputs: Vec<usize>,
    outputs: Vec<usize>,
    /// Row-major, `outputs.len()` rows by `inputs.len()` columns.
    matrix: Vec<Complex64>,
}

impl ModeTransform {
    pub fn new(registry: &ModeRegistry, inputs: Vec<usize>, outputs: Vec<usize>, matrix: Vec<Complex64>) -> Result<Self> {
        for &m in inputs.iter().chain(outputs.iter()) {
            if m >= registry.len() {
                return Err(Error::UnknownMode(format!("index {m}")));
            }
        }
        let t = Self::unchecked(inputs, outputs, matrix)?;
        t.validate()?;
        Ok(t)
    }

    fn unchecked(inputs: Vec<usize>, outputs: Vec<usize>, matrix: Vec<Complex64>) -> Result<Self> {
        if matrix.len() != inputs.len() * outputs.len() {
            return Err(Error::Config(format!(
                "transform matrix has {} entries, expected {}x{}",
                matrix.len(),
                outputs.len(),
                inputs.len()
            )));
        }
        let distinct = |v: &[usize]| v.iter().collect::<BTreeSet<_>>().len() == v.len();
        if !distinct(&inputs) || !distinct(&outputs) {
            return Err(Error::Config("repeated mode in transform".into()));
        }
        Ok(ModeTransform { inputs, outputs, matrix })
    }

    pub fn identity(modes: &[usize]) -> Self {
        let n = modes.len();
        let mut matrix = vec![Complex64::new(0.0, 0.0); n * n];
        for i in 0..n {
            matrix[i * n + i] = Complex64::new(1.0, 0.0);
        }
        ModeTransform {
            inputs: modes.to_vec(),
            outputs: modes.to_vec(),
            matrix,
        }
    }

    pub fn inputs(&self) -> &[usize] {
        &self.inputs
    }

    pub fn outputs(&self) -> &[usize] {
        &self.outputs
    }

    /// Coefficient of output `row` for input `col`.
    pub fn entry(&self, row: usize, col: usize) -> Complex64 {
        self.matrix[row * self.inputs.len() + col]
    }

    pub fn matrix(&self) -> &[Complex64] {
        &self.matrix
    }

    /// Output modes that are not inputs: must be vacuum on application.
    pub fn fresh_outputs(&self) -> Vec<usize> {
        self.outputs.iter().copied().filter(|m| !self.inputs.contains(m)).collect()
    }

    pub fn is_square(&self) -> bool {
        let a: BTreeSet<_> = self.inputs.iter().collect();
        let b: BTreeSet<_> = self.outputs.iter().collect();
        a == b
    }

    /// Largest elementwise deviation of `M†M` from the identity.
    pub fn isometry_deviation(&self) -> f64 {
        let (rows, cols) = (self.outputs.len(), self.inputs.len());
        let mut worst: f64 = 0.0;
        for a in 0..cols {
            for b in 0..cols {
                let mut acc = Complex64::new(0.0, 0.0);
                for r in 0..rows {
                    acc += self.entry(r, a).conj() * self.entry(r, b);
                }
                let target = if a == b { 1.0 } else { 0.0 };
                worst = worst.max((acc - target).norm());
            }
        }
        worst
    }

    pub fn validate(&self) -> Result<()> {
        let deviation = self.isometry_deviation();
        if deviation > ISOMETRY_TOLERANCE || deviation.is_nan() {
            return Err(Error::NotIsometric { deviation });
        }
        Ok(())
    }

    /// Embeds a square transform into the given ordered mode set, acting as
    /// the identity on the rest.
    fn embed(&self, modes: &[usize]) -> Vec<Complex64> {
        let n = modes.len();
        let pos = |m: usize| modes.iter().position(|&x| x == m).expect("mode in union");
        let mut out = vec![Complex64::new(0.0, 0.0); n * n];
        for (k, &m) in modes.iter().enumerate() {
            if let Some(col) = self.inputs.iter().position(|&x| x == m) {
                for (row, &o) in self.outputs.iter().enumerate() {
                    out[pos(o) * n + k] = self.entry(row, col);
                }
            } else {
                out[k * n + k] = Complex64::new(1.0, 0.0);
            }
        }
        out
    }

    /// The transform equivalent to applying `self` and then `next`.
    ///
    /// Only square (mode-preserving) transforms compose; a fresh-mode
    /// dilation has no well-defined action on an occupied ancilla.
    pub fn then(&self, next: &ModeTransform) -> Result<ModeTransform> {
        if !self.is_square() || !next.is_square() {
            return Err(Error::Config(
                "composition requires transforms whose input and output mode sets coincide".into(),
            ));
        }
        let modes: Vec<usize> = self
            .inputs
            .iter()
            .chain(next.inputs.iter())
            .copied()
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        let n = modes.len();
        let first = self.embed(&modes);
        let second = next.embed(&modes);
        let mut product = vec![Complex64::new(0.0, 0.0); n * n];
        for r in 0..n {
            for c in 0..n {
                let mut acc = Complex64::new(0.0, 0.0);
                for k in 0..n {
                    acc += second[r * n + k] * first[k * n + c];
                }
                product[r * n + c] = acc;
            }
        }
        Self::unchecked(modes.clone(), modes, product)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fock::{make_registry, SpatialSpec};

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    #[test]
    fn rejects_non_isometry() {
        let reg = make_registry(&[SpatialSpec::new("A")]).unwrap();
        let err = ModeTransform::new(&reg, vec![0, 1], vec![0, 1], vec![c(1.0), c(1.0), c(0.0), c(1.0)]).unwrap_err();
        assert!(matches!(err, Error::NotIsometric { .. }));
    }

    #[test]
    fn accepts_rectangular_isometry() {
        let reg = make_registry(&[SpatialSpec::new("A"), SpatialSpec::new("L")]).unwrap();
        let t = 0.3f64;
        let m = vec![c(t.sqrt()), c((1.0 - t).sqrt())];
        let tr = ModeTransform::new(&reg, vec![0], vec![0, 2], m).unwrap();
        assert_eq!(tr.fresh_outputs(), vec![2]);
        assert!(!tr.is_square());
    }

    #[test]
    fn unknown_index_rejected() {
        let reg = make_registry(&[SpatialSpec::new("A")]).unwrap();
        assert!(ModeTransform::new(&reg, vec![5], vec![5], vec![c(1.0)]).is_err());
    }
}
