use serde::{Deserialize, Serialize};

use super::{Dataset, FeatureSchema, QueryRecord};
use crate::autodiff::Tensor;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureStats {
    pub name: String,
    pub mean: f64,
    pub std: f64,
}

/// Train-split mean and (population) standard deviation of every numeric
/// deep-path feature. Scale-variant stats are only consumed by the
/// deep-only baseline; the wide path always sees raw values.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StandardizationStats {
    pub query: Vec<FeatureStats>,
    pub fixed: Vec<FeatureStats>,
    pub scalevariant: Vec<FeatureStats>,
}

#[derive(Default)]
struct Running {
    n: f64,
    mean: f64,
    m2: f64,
}

impl Running {
    fn push(&mut self, x: f64) {
        self.n += 1.0;
        let delta = x - self.mean;
        self.mean += delta / self.n;
        self.m2 += delta * (x - self.mean);
    }

    fn finish(&self, name: &str) -> Result<FeatureStats> {
        let std = (self.m2 / self.n).sqrt();
        // relative guard: a constant column leaves only rounding residue in m2
        if !(std > 1e-12 * self.mean.abs().max(1.0)) {
            return Err(Error::Schema(format!("feature `{name}` has zero variance on the training split")));
        }
        Ok(FeatureStats {
            name: name.to_string(),
            mean: self.mean,
            std,
        })
    }
}

/// Fits standardization statistics on `train` only.
pub fn fit_standardization(train: &Dataset, schema: &FeatureSchema) -> Result<StandardizationStats> {
    if train.is_empty() {
        return Err(Error::contract("cannot fit standardization on an empty dataset"));
    }
    let numeric: Vec<(usize, &str)> = schema
        .numeric_query_features()
        .map(|(i, f)| (i, f.name.as_str()))
        .collect();
    let mut query = numeric.iter().map(|_| Running::default()).collect::<Vec<_>>();
    let mut fixed = (0..schema.num_fixed()).map(|_| Running::default()).collect::<Vec<_>>();
    let mut variant = (0..schema.num_scalevariant()).map(|_| Running::default()).collect::<Vec<_>>();
    for q in &train.queries {
        for (acc, (pos, _)) in query.iter_mut().zip(&numeric) {
            acc.push(q.query_values[*pos]);
        }
        for item in &q.items {
            for (acc, v) in fixed.iter_mut().zip(&item.fixed) {
                acc.push(*v);
            }
            for (acc, v) in variant.iter_mut().zip(&item.scalevariant) {
                acc.push(*v);
            }
        }
    }
    Ok(StandardizationStats {
        query: query
            .iter()
            .zip(&numeric)
            .map(|(a, (_, n))| a.finish(n))
            .collect::<Result<_>>()?,
        fixed: fixed
            .iter()
            .zip(&schema.item_features_fixed)
            .map(|(a, n)| a.finish(n))
            .collect::<Result<_>>()?,
        scalevariant: variant
            .iter()
            .zip(&schema.item_features_scalevariant)
            .map(|(a, n)| a.finish(n))
            .collect::<Result<_>>()?,
    })
}

/// Model-ready view of one query.
///
/// Deep-path numerics are standardized; `wide_raw` holds the untouched
/// `fixed ⊕ scalevariant` values that feed the wide part's log.
#[derive(Clone, Debug, PartialEq)]
pub struct PreparedQuery {
    pub query_id: String,
    pub query_numeric: Vec<f64>,
    pub query_categories: Vec<usize>,
    /// `D × K1`, standardized.
    pub fixed_std: Tensor,
    /// `D × K2`, standardized (deep-only baseline input).
    pub scalevariant_std: Tensor,
    /// `D × (K1 + K2)`, raw.
    pub wide_raw: Tensor,
    pub labels: Vec<f64>,
}

impl PreparedQuery {
    pub fn num_items(&self) -> usize {
        self.labels.len()
    }

    pub fn booked_index(&self) -> Option<usize> {
        self.labels.iter().position(|&l| l > 0.0)
    }

    /// Sub-list with the items at `indices`, in that order.
    pub fn select_items(&self, indices: &[usize]) -> PreparedQuery {
        let pick = |t: &Tensor| {
            let cols = t.cols();
            let mut data = Vec::with_capacity(indices.len() * cols);
            for &i in indices {
                data.extend_from_slice(t.row(i));
            }
            Tensor::from_parts(vec![indices.len(), cols], data)
        };
        PreparedQuery {
            query_id: self.query_id.clone(),
            query_numeric: self.query_numeric.clone(),
            query_categories: self.query_categories.clone(),
            fixed_std: pick(&self.fixed_std),
            scalevariant_std: pick(&self.scalevariant_std),
            wide_raw: pick(&self.wide_raw),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct PreparedDataset {
    pub queries: Vec<PreparedQuery>,
}

impl PreparedDataset {
    pub fn len(&self) -> usize {
        self.queries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.queries.is_empty()
    }
}

impl StandardizationStats {
    fn check_schema(&self, schema: &FeatureSchema) -> Result<()> {
        let names = |v: &[FeatureStats]| v.iter().map(|s| s.name.clone()).collect::<Vec<_>>();
        let numeric: Vec<String> = schema.numeric_query_features().map(|(_, f)| f.name.clone()).collect();
        if names(&self.query) != numeric
            || names(&self.fixed) != schema.item_features_fixed
            || names(&self.scalevariant) != schema.item_features_scalevariant
        {
            return Err(Error::Schema("standardization stats do not match the schema".into()));
        }
        Ok(())
    }

    pub fn prepare_query(&self, q: &QueryRecord, schema: &FeatureSchema) -> Result<PreparedQuery> {
        let numeric_pos: Vec<usize> = schema.numeric_query_features().map(|(i, _)| i).collect();
        let query_numeric = numeric_pos
            .iter()
            .zip(&self.query)
            .map(|(&p, s)| (q.query_values[p] - s.mean) / s.std)
            .collect();
        let query_categories = schema
            .categorical_query_features()
            .map(|(p, ..)| q.query_values[p] as usize)
            .collect();
        let d = q.items.len();
        let (k1, k2) = (schema.num_fixed(), schema.num_scalevariant());
        let mut fixed_std = Vec::with_capacity(d * k1);
        let mut variant_std = Vec::with_capacity(d * k2);
        let mut wide_raw = Vec::with_capacity(d * (k1 + k2));
        for item in &q.items {
            fixed_std.extend(item.fixed.iter().zip(&self.fixed).map(|(v, s)| (v - s.mean) / s.std));
            variant_std.extend(item.scalevariant.iter().zip(&self.scalevariant).map(|(v, s)| (v - s.mean) / s.std));
            wide_raw.extend_from_slice(&item.fixed);
            wide_raw.extend_from_slice(&item.scalevariant);
        }
        Ok(PreparedQuery {
            query_id: q.query_id.clone(),
            query_numeric,
            query_categories,
            fixed_std: Tensor::new(vec![d, k1], fixed_std)?,
            scalevariant_std: Tensor::new(vec![d, k2], variant_std)?,
            wide_raw: Tensor::new(vec![d, k1 + k2], wide_raw)?,
            labels: q.labels(),
        })
    }
}

/// Standardizes the deep-path copies of every query. The result is a
/// different type from [`Dataset`], so it cannot be standardized twice.
pub fn apply_standardization(
    ds: &Dataset,
    stats: &StandardizationStats,
    schema: &FeatureSchema,
) -> Result<PreparedDataset> {
    stats.check_schema(schema)?;
    let queries = ds
        .queries
        .iter()
        .map(|q| stats.prepare_query(q, schema))
        .collect::<Result<_>>()?;
    Ok(PreparedDataset { queries })
}
