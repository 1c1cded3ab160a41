//! Test-time rescaling of scale-variant features by a per-query factor.

use serde::{Deserialize, Serialize};

use crate::data::{Dataset, FeatureSchema, QueryRecord};
use crate::error::{Error, Result};

pub const DEFAULT_TARGETS: [&str; 2] = ["price", "discount"];
/// Fixed rate used by [`CaseKind::FixedRate`].
pub const DEFAULT_FIXED_RATE: f64 = 1200.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CaseKind {
    /// Multiply by the number of nights (total stay instead of nightly).
    Nights,
    /// Multiply by the query's exchange rate (local currency).
    Currency,
    /// Both of the above.
    NightsAndCurrency,
    /// Multiply every query by the same constant rate.
    FixedRate,
}

impl CaseKind {
    pub const ALL: [CaseKind; 4] = [
        CaseKind::Nights,
        CaseKind::Currency,
        CaseKind::NightsAndCurrency,
        CaseKind::FixedRate,
    ];

    pub fn number(self) -> u8 {
        match self {
            CaseKind::Nights => 1,
            CaseKind::Currency => 2,
            CaseKind::NightsAndCurrency => 3,
            CaseKind::FixedRate => 4,
        }
    }

    pub fn from_number(n: u8) -> Result<Self> {
        CaseKind::ALL
            .into_iter()
            .find(|c| c.number() == n)
            .ok_or_else(|| Error::Config(format!("unknown perturbation case {n} (expected 1-4)")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PerturbationCase {
    pub kind: CaseKind,
    pub targets: Vec<String>,
    pub fixed_rate: f64,
}

impl PerturbationCase {
    pub fn new(kind: CaseKind) -> Self {
        Self {
            kind,
            targets: DEFAULT_TARGETS.iter().map(|s| s.to_string()).collect(),
            fixed_rate: DEFAULT_FIXED_RATE,
        }
    }

    pub fn all() -> Vec<Self> {
        CaseKind::ALL.into_iter().map(Self::new).collect()
    }

    pub fn label(&self) -> String {
        format!("Case {}", self.kind.number())
    }

    /// Factor applied to every target value of `q`.
    pub fn multiplier(&self, q: &QueryRecord) -> f64 {
        let nights = f64::from(q.num_nights);
        match self.kind {
            CaseKind::Nights => nights,
            CaseKind::Currency => q.exchange_rate,
            CaseKind::NightsAndCurrency => nights * q.exchange_rate,
            CaseKind::FixedRate => self.fixed_rate,
        }
    }

    fn target_columns(&self, schema: &FeatureSchema) -> Result<Vec<usize>> {
        if !(self.fixed_rate > 0.0 && self.fixed_rate.is_finite()) {
            return Err(Error::Config(format!("fixed rate must be positive, got {}", self.fixed_rate)));
        }
        self.targets
            .iter()
            .map(|name| {
                schema.scalevariant_index(name).ok_or_else(|| {
                    Error::Config(format!("perturbation target `{name}` is not a scale-variant feature"))
                })
            })
            .collect()
    }
}

/// Returns a rescaled copy of `ds`; only the target columns change.
pub fn apply_case(ds: &Dataset, schema: &FeatureSchema, case: &PerturbationCase) -> Result<Dataset> {
    let columns = case.target_columns(schema)?;
    let queries = ds
        .iter()
        .map(|q| {
            let factor = case.multiplier(q);
            let mut out = q.clone();
            for item in &mut out.items {
                for &c in &columns {
                    item.scalevariant[c] *= factor;
                }
            }
            out
        })
        .collect();
    Ok(Dataset::new(queries))
}
