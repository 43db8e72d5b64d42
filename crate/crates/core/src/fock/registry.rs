use std::collections::{BTreeSet, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Polarization {
    H,
    V,
}

impl Polarization {
    pub const BOTH: [Polarization; 2] = [Polarization::H, Polarization::V];

    pub fn index(self) -> usize {
        match self {
            Polarization::H => 0,
            Polarization::V => 1,
        }
    }
}

/// Temporal component of a spatial mode. The orthogonal twin carries the
/// part of a pulse that cannot interfere with the matched component.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Temporal {
    Matched,
    Orthogonal,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ModeKey {
    pub spatial: String,
    pub polarization: Polarization,
    pub temporal: Temporal,
}

impl fmt::Display for ModeKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let t = match self.temporal {
            Temporal::Matched => "",
            Temporal::Orthogonal => "'",
        };
        write!(f, "{}_{:?}{}", self.spatial, self.polarization, t)
    }
}

/// One spatial label to register, optionally with orthogonal temporal twins.
#[derive(Debug, Clone)]
pub struct SpatialSpec {
    pub label: String,
    pub split_temporal: bool,
}

impl SpatialSpec {
    pub fn new(label: impl Into<String>) -> Self {
        SpatialSpec {
            label: label.into(),
            split_temporal: false,
        }
    }

    pub fn split(label: impl Into<String>) -> Self {
        SpatialSpec {
            label: label.into(),
            split_temporal: true,
        }
    }
}

/// Ordered set of named optical modes. Indices are assigned once and never
/// change.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ModeRegistry {
    modes: Vec<ModeKey>,
    index: HashMap<ModeKey, usize>,
}

impl ModeRegistry {
    pub fn new(specs: &[SpatialSpec]) -> Result<Self> {
        let mut seen = BTreeSet::new();
        let mut modes = Vec::new();
        for spec in specs {
            if !seen.insert(spec.label.clone()) {
                return Err(Error::Config(format!("duplicate spatial label {:?}", spec.label)));
            }
            let temporals: &[Temporal] = if spec.split_temporal {
                &[Temporal::Matched, Temporal::Orthogonal]
            } else {
                &[Temporal::Matched]
            };
            for &temporal in temporals {
                for polarization in Polarization::BOTH {
                    modes.push(ModeKey {
                        spatial: spec.label.clone(),
                        polarization,
                        temporal,
                    });
                }
            }
        }
        let index = modes.iter().enumerate().map(|(i, k)| (k.clone(), i)).collect();
        Ok(ModeRegistry { modes, index })
    }

    pub fn len(&self) -> usize {
        self.modes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.modes.is_empty()
    }

    pub fn key(&self, index: usize) -> &ModeKey {
        &self.modes[index]
    }

    pub fn keys(&self) -> &[ModeKey] {
        &self.modes
    }

    pub fn lookup(&self, key: &ModeKey) -> Option<usize> {
        self.index.get(key).copied()
    }

    pub fn mode(&self, spatial: &str, polarization: Polarization, temporal: Temporal) -> Result<usize> {
        let key = ModeKey {
            spatial: spatial.to_string(),
            polarization,
            temporal,
        };
        self.lookup(&key).ok_or_else(|| Error::UnknownMode(key.to_string()))
    }

    pub fn has_label(&self, spatial: &str) -> bool {
        self.modes.iter().any(|k| k.spatial == spatial)
    }

    pub fn has_twins(&self, spatial: &str) -> bool {
        self.modes
            .iter()
            .any(|k| k.spatial == spatial && k.temporal == Temporal::Orthogonal)
    }

    /// Temporal components registered for a label, matched first.
    pub fn temporals(&self, spatial: &str) -> Result<Vec<Temporal>> {
        if !self.has_label(spatial) {
            return Err(Error::UnknownMode(spatial.to_string()));
        }
        Ok(if self.has_twins(spatial) {
            vec![Temporal::Matched, Temporal::Orthogonal]
        } else {
            vec![Temporal::Matched]
        })
    }

    /// All mode indices belonging to a spatial label, in registry order.
    pub fn spatial_modes(&self, spatial: &str) -> Result<Vec<usize>> {
        let out: Vec<usize> = self
            .modes
            .iter()
            .enumerate()
            .filter(|(_, k)| k.spatial == spatial)
            .map(|(i, _)| i)
            .collect();
        if out.is_empty() {
            Err(Error::UnknownMode(spatial.to_string()))
        } else {
            Ok(out)
        }
    }

    /// Modes of a label with a given polarization, across temporal components.
    pub fn polarization_modes(&self, spatial: &str, polarization: Polarization) -> Result<Vec<usize>> {
        Ok(self
            .spatial_modes(spatial)?
            .into_iter()
            .filter(|&i| self.modes[i].polarization == polarization)
            .collect())
    }
}

/// Convenience wrapper matching the builder used throughout the crate.
pub fn make_registry(specs: &[SpatialSpec]) -> Result<ModeRegistry> {
    ModeRegistry::new(specs)
}
