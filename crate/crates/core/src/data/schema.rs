use std::collections::HashSet;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FeatureKind {
    Numeric,
    Categorical {
        cardinality: usize,
        embedding_dim: usize,
    },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct QueryFeature {
    pub name: String,
    #[serde(flatten)]
    pub kind: FeatureKind,
}

impl QueryFeature {
    pub fn numeric(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            kind: FeatureKind::Numeric,
        }
    }

    pub fn categorical(name: impl Into<String>, cardinality: usize, embedding_dim: usize) -> Self {
        Self {
            name: name.into(),
            kind: FeatureKind::Categorical {
                cardinality,
                embedding_dim,
            },
        }
    }
}

/// Declares the query features, the scale-fixed item features and the
/// scale-variant item features of a ranking dataset.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeatureSchema {
    pub query_features: Vec<QueryFeature>,
    pub item_features_fixed: Vec<String>,
    pub item_features_scalevariant: Vec<String>,
}

impl FeatureSchema {
    pub fn new(
        query_features: Vec<QueryFeature>,
        item_features_fixed: Vec<String>,
        item_features_scalevariant: Vec<String>,
    ) -> Result<Self> {
        let schema = Self {
            query_features,
            item_features_fixed,
            item_features_scalevariant,
        };
        schema.validate()?;
        Ok(schema)
    }

    pub fn validate(&self) -> Result<()> {
        if self.item_features_scalevariant.is_empty() {
            return Err(Error::Schema("at least one scale-variant item feature is required".into()));
        }
        let mut seen = HashSet::new();
        let all = self
            .query_features
            .iter()
            .map(|q| &q.name)
            .chain(&self.item_features_fixed)
            .chain(&self.item_features_scalevariant);
        for name in all {
            if !seen.insert(name.as_str()) {
                return Err(Error::Schema(format!("duplicate feature name `{name}`")));
            }
        }
        for q in &self.query_features {
            if let FeatureKind::Categorical {
                cardinality,
                embedding_dim,
            } = q.kind
            {
                if cardinality < 2 {
                    return Err(Error::Schema(format!(
                        "categorical feature `{}` needs cardinality >= 2, got {cardinality}",
                        q.name
                    )));
                }
                if embedding_dim == 0 {
                    return Err(Error::Schema(format!(
                        "categorical feature `{}` has zero embedding dimension",
                        q.name
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn num_query_features(&self) -> usize {
        self.query_features.len()
    }

    pub fn num_fixed(&self) -> usize {
        self.item_features_fixed.len()
    }

    pub fn num_scalevariant(&self) -> usize {
        self.item_features_scalevariant.len()
    }

    /// `K1 + K2`, the width of the wide part's log vector.
    pub fn num_item_features(&self) -> usize {
        self.num_fixed() + self.num_scalevariant()
    }

    pub fn numeric_query_features(&self) -> impl Iterator<Item = (usize, &QueryFeature)> {
        self.query_features
            .iter()
            .enumerate()
            .filter(|(_, q)| q.kind == FeatureKind::Numeric)
    }

    /// `(position, name, cardinality, embedding_dim)` of each categorical query feature.
    pub fn categorical_query_features(&self) -> impl Iterator<Item = (usize, &str, usize, usize)> {
        self.query_features.iter().enumerate().filter_map(|(i, q)| match q.kind {
            FeatureKind::Categorical {
                cardinality,
                embedding_dim,
            } => Some((i, q.name.as_str(), cardinality, embedding_dim)),
            FeatureKind::Numeric => None,
        })
    }

    /// Width of the processed query representation: numerics plus embeddings.
    pub fn query_repr_dim(&self) -> usize {
        self.query_features
            .iter()
            .map(|q| match q.kind {
                FeatureKind::Numeric => 1,
                FeatureKind::Categorical { embedding_dim, .. } => embedding_dim,
            })
            .sum()
    }

    pub fn scalevariant_index(&self, name: &str) -> Option<usize> {
        self.item_features_scalevariant.iter().position(|n| n == name)
    }

    /// Hex SHA-256 of the canonical JSON encoding.
    pub fn fingerprint(&self) -> String {
        let json = serde_json::to_vec(self).expect("schema serializes");
        hex::encode(Sha256::digest(&json))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let schema: Self = serde_json::from_str(&text)?;
        schema.validate()?;
        Ok(schema)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)? + "\n")?;
        Ok(())
    }
}
