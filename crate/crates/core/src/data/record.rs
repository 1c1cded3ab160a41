use super::{FeatureKind, FeatureSchema};
use crate::error::{Error, Result};

/// Maximum list length of a search.
pub const MAX_ITEMS_PER_QUERY: usize = 25;

#[derive(Clone, Debug, PartialEq)]
pub struct ItemRecord {
    pub item_id: String,
    /// Scale-fixed features, in schema order. Strictly positive because the
    /// raw values also enter the wide part's log.
    pub fixed: Vec<f64>,
    /// Scale-variant features, in schema order. Strictly positive.
    pub scalevariant: Vec<f64>,
    pub label: u8,
}

/// One booked search.
#[derive(Clone, Debug, PartialEq)]
pub struct QueryRecord {
    pub query_id: String,
    /// Query feature values in schema order; categorical entries hold the
    /// category id as an integral float.
    pub query_values: Vec<f64>,
    pub num_nights: u32,
    pub exchange_rate: f64,
    pub items: Vec<ItemRecord>,
}

impl QueryRecord {
    pub fn labels(&self) -> Vec<f64> {
        self.items.iter().map(|i| f64::from(i.label)).collect()
    }

    pub fn booked_index(&self) -> Option<usize> {
        self.items.iter().position(|i| i.label == 1)
    }

    /// Checks the record against `schema` and the dataset invariants.
    pub fn validate(&self, schema: &FeatureSchema) -> Result<()> {
        let fail = |rule: String| Error::Validation {
            query_id: self.query_id.clone(),
            rule,
        };
        if self.query_values.len() != schema.num_query_features() {
            return Err(fail(format!(
                "expected {} query features, found {}",
                schema.num_query_features(),
                self.query_values.len()
            )));
        }
        for (value, feature) in self.query_values.iter().zip(&schema.query_features) {
            if !value.is_finite() {
                return Err(fail(format!("non-finite value for query feature `{}`", feature.name)));
            }
            if let FeatureKind::Categorical { cardinality, .. } = feature.kind {
                if value.fract() != 0.0 || *value < 0.0 || *value >= cardinality as f64 {
                    return Err(fail(format!(
                        "category id {value} out of range for `{}` (cardinality {cardinality})",
                        feature.name
                    )));
                }
            }
        }
        if self.num_nights < 1 {
            return Err(fail("num_nights must be at least 1".into()));
        }
        if !(self.exchange_rate > 0.0) || !self.exchange_rate.is_finite() {
            return Err(fail(format!("exchange_rate must be positive, got {}", self.exchange_rate)));
        }
        if self.items.len() < 2 {
            return Err(fail(format!("too few items ({})", self.items.len())));
        }
        if self.items.len() > MAX_ITEMS_PER_QUERY {
            return Err(fail(format!(
                "too many items ({} > {MAX_ITEMS_PER_QUERY})",
                self.items.len()
            )));
        }
        let booked = self.items.iter().filter(|i| i.label == 1).count();
        match booked {
            0 => return Err(fail("no booked item".into())),
            1 => {}
            _ => return Err(fail("multiple booked items".into())),
        }
        for item in &self.items {
            if item.label > 1 {
                return Err(fail(format!("item `{}` has label {}", item.item_id, item.label)));
            }
            if item.fixed.len() != schema.num_fixed() || item.scalevariant.len() != schema.num_scalevariant() {
                return Err(fail(format!("item `{}` has the wrong number of features", item.item_id)));
            }
            for (v, name) in item.fixed.iter().zip(&schema.item_features_fixed) {
                if !(v.is_finite() && *v > 0.0) {
                    return Err(fail(format!(
                        "fixed feature `{name}` of item `{}` must be finite and positive, got {v}",
                        item.item_id
                    )));
                }
            }
            for (v, name) in item.scalevariant.iter().zip(&schema.item_features_scalevariant) {
                if !(v.is_finite() && *v > 0.0) {
                    return Err(fail(format!(
                        "scale-variant feature `{name}` of item `{}` must be finite and positive, got {v}",
                        item.item_id
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Ordered collection of queries.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Dataset {
    pub queries: Vec<QueryRecord>,
}

impl Dataset {
    pub fn new(queries: Vec<QueryRecord>) -> Self {
        Self { queries }
    }

    pub fn len(&self) -> usize {
        self.queries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.queries.is_empty()
    }

    pub fn validate(&self, schema: &FeatureSchema) -> Result<()> {
        self.queries.iter().try_for_each(|q| q.validate(schema))
    }

    pub fn iter(&self) -> impl Iterator<Item = &QueryRecord> {
        self.queries.iter()
    }
}
