//! Training regimes and fold augmentation.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::data::{ColumnSchema, RowId, Table};
use crate::error::{Error, Result};
use crate::rng;
use crate::synthgen::{sample_edge_cases, FittedGenerator, GeneratorKind};

/// Number of synthetic rows: absolute, or a multiple of the minority count
/// of the table being augmented.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SynthCount {
    Absolute(usize),
    Multiple { minority_multiple: f64 },
}

impl SynthCount {
    pub fn resolve(self, minority: usize) -> usize {
        match self {
            SynthCount::Absolute(n) => n,
            SynthCount::Multiple { minority_multiple } => (minority_multiple * minority as f64).round() as usize,
        }
    }

    fn label(self) -> String {
        match self {
            SynthCount::Absolute(n) => n.to_string(),
            SynthCount::Multiple { minority_multiple } => format!("{minority_multiple}x"),
        }
    }

    fn is_valid(self) -> bool {
        match self {
            SynthCount::Absolute(_) => true,
            SynthCount::Multiple { minority_multiple } => minority_multiple.is_finite() && minority_multiple >= 0.0,
        }
    }
}

fn default_synth() -> SynthCount {
    SynthCount::Absolute(500)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RegimeSpec {
    None,
    Generator {
        generator: GeneratorKind,
        #[serde(default = "default_synth")]
        n: SynthCount,
    },
    Edge {
        #[serde(default = "default_synth")]
        n: SynthCount,
    },
    GeneratorPlusEdge {
        generator: GeneratorKind,
        #[serde(default = "default_synth")]
        n: SynthCount,
        #[serde(default = "default_synth")]
        n_edge: SynthCount,
    },
}

impl RegimeSpec {
    /// Short label such as `none`, `arf_500` or `arf_500+edge_500`.
    pub fn name(&self) -> String {
        match self {
            RegimeSpec::None => "none".into(),
            RegimeSpec::Generator { generator, n } => format!("{}_{}", generator.name(), n.label()),
            RegimeSpec::Edge { n } => format!("edge_{}", n.label()),
            RegimeSpec::GeneratorPlusEdge { generator, n, n_edge } => {
                format!("{}_{}+edge_{}", generator.name(), n.label(), n_edge.label())
            }
        }
    }

    /// Fitted generator required by this regime, if any.
    pub fn generator(&self) -> Option<GeneratorKind> {
        match self {
            RegimeSpec::Generator { generator, .. } | RegimeSpec::GeneratorPlusEdge { generator, .. } => {
                Some(*generator)
            }
            _ => None,
        }
    }

    pub fn uses_edge(&self) -> bool {
        matches!(
            self,
            RegimeSpec::Edge { .. }
                | RegimeSpec::GeneratorPlusEdge { .. }
                | RegimeSpec::Generator {
                    generator: GeneratorKind::Edge,
                    ..
                }
        )
    }

    pub fn validate(&self) -> Result<()> {
        let counts_ok = match self {
            RegimeSpec::None => true,
            RegimeSpec::Generator { n, .. } | RegimeSpec::Edge { n } => n.is_valid(),
            RegimeSpec::GeneratorPlusEdge { n, n_edge, generator } => {
                n.is_valid() && n_edge.is_valid() && *generator != GeneratorKind::Edge
            }
        };
        if counts_ok {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!("invalid regime {self:?}")))
        }
    }
}

/// What was added to a training table.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Augmentation {
    pub n_synthetic: usize,
    pub n_edge: usize,
}

/// Training table plus synthetic positives. `generator` must be fitted on
/// rows of `train` (and on nothing in `held_out`); edge rows follow the
/// schema of `train`.
pub fn augment_training_fold(
    train: &Table,
    held_out: &[RowId],
    regime: &RegimeSpec,
    generator: Option<&FittedGenerator>,
    seed: u64,
) -> Result<(Table, Augmentation)> {
    let minority = train.positives();
    let mut out = train.clone();
    let mut info = Augmentation::default();
    let schema: Vec<ColumnSchema> = train.schema();
    let (n_gen, n_edge) = match regime {
        RegimeSpec::None => (0, 0),
        RegimeSpec::Generator { n, .. } => (n.resolve(minority), 0),
        RegimeSpec::Edge { n } => (0, n.resolve(minority)),
        RegimeSpec::GeneratorPlusEdge { n, n_edge, .. } => (n.resolve(minority), n_edge.resolve(minority)),
    };
    if let Some(kind) = regime.generator() {
        let g = generator.ok_or_else(|| Error::InvalidArgument(format!("regime {} needs a fitted generator", regime.name())))?;
        if g.kind() != kind {
            return Err(Error::InvalidArgument(format!(
                "regime {} was given a {} generator",
                regime.name(),
                g.kind().name()
            )));
        }
        if g.fingerprint().intersects(held_out) {
            return Err(Error::Leakage(format!("{} generator was fitted on held-out rows", kind.name())));
        }
        let train_ids: HashSet<RowId> = train.row_ids().iter().copied().collect();
        if g.fingerprint().rows().iter().any(|id| !train_ids.contains(id)) {
            return Err(Error::Leakage(format!("{} generator was fitted on rows outside the training side", kind.name())));
        }
        if g.schema() != schema.as_slice() {
            return Err(Error::Schema(format!("{} generator schema differs from the training table", kind.name())));
        }
        let synth = g.sample(n_gen, rng::derive_seed(seed, &[rng::tag("synthetic")]))?;
        out = out.concat(&synth)?;
        info.n_synthetic = n_gen;
    }
    if n_edge > 0 {
        let edge = sample_edge_cases(&schema, n_edge, rng::derive_seed(seed, &[rng::tag("edge")]))?;
        out = out.concat(&edge)?;
        info.n_edge = n_edge;
    }
    Ok((out, info))
}
