//! Synthetic booked-search datasets with a known latent utility.
//!
//! Every item carries strictly positive fixed features drawn from shifted
//! log-normals and log-normal scale-variant features ("price", "discount",
//! then any extras). The booked item of a query is drawn from
//! `softmax(u / temperature)` over a hidden utility `u` that mixes fixed
//! features with query-dependent sensitivity to the log of the scale-variant
//! features.

use std::path::Path;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Normal;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, FeatureSchema, ItemRecord, QueryFeature, QueryRecord, MAX_ITEMS_PER_QUERY};
use crate::error::{Error, Result};
use crate::metrics::{discount, ndcg_of_scores, EvalResult};

/// Local-currency units per US dollar for the currencies a query may be
/// priced in.
pub const EXCHANGE_RATES: [f64; 10] = [1.0, 0.92, 0.79, 1.36, 1.52, 7.2, 18.0, 83.0, 150.0, 1200.0];
pub const MAX_NUM_NIGHTS: u32 = 14;

/// Median nightly price and log-scale spread.
const PRICE_MEDIAN: f64 = 150.0;
const PRICE_LOG_SD: f64 = 1.1;
const DISCOUNT_MEDIAN: f64 = 20.0;
const DISCOUNT_LOG_SD: f64 = 0.8;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeneratorConfig {
    pub num_queries: usize,
    pub min_items: usize,
    pub max_items: usize,
    /// Standard-normal numeric query features.
    pub num_numeric_query: usize,
    pub categorical_cardinalities: Vec<usize>,
    pub embedding_dim: usize,
    pub num_fixed: usize,
    /// At least 2; the first two are "price" and "discount".
    pub num_scalevariant: usize,
    /// Softmax temperature of the booking draw.
    pub temperature: f64,
    pub seed: u64,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        Self {
            num_queries: 2000,
            min_items: 5,
            max_items: MAX_ITEMS_PER_QUERY,
            num_numeric_query: 12,
            categorical_cardinalities: vec![8, 5, 7, 10],
            embedding_dim: 4,
            num_fixed: 12,
            num_scalevariant: 2,
            temperature: 1.0,
            seed: 7,
        }
    }
}

impl GeneratorConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if self.num_queries == 0 {
            return fail("num_queries must be positive".into());
        }
        if !(2 <= self.min_items && self.min_items <= self.max_items && self.max_items <= MAX_ITEMS_PER_QUERY) {
            return fail(format!(
                "items per query must satisfy 2 <= min ({}) <= max ({}) <= {MAX_ITEMS_PER_QUERY}",
                self.min_items, self.max_items
            ));
        }
        if self.num_numeric_query + self.categorical_cardinalities.len() == 0 {
            return fail("at least one query feature is required".into());
        }
        if self.categorical_cardinalities.iter().any(|&c| c < 2) {
            return fail("categorical cardinalities must be at least 2".into());
        }
        if self.embedding_dim == 0 || self.num_fixed == 0 {
            return fail("embedding_dim and num_fixed must be positive".into());
        }
        if self.num_scalevariant < 2 {
            return fail("num_scalevariant must be at least 2 (price and discount)".into());
        }
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return fail(format!("temperature must be positive, got {}", self.temperature));
        }
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let config: Self = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        config.validate()?;
        Ok(config)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)? + "\n")?;
        Ok(())
    }

    pub fn schema(&self) -> Result<FeatureSchema> {
        let mut query: Vec<QueryFeature> = (0..self.num_numeric_query)
            .map(|k| QueryFeature::numeric(format!("query_numeric_{k}")))
            .collect();
        query.extend(
            self.categorical_cardinalities
                .iter()
                .enumerate()
                .map(|(k, &card)| QueryFeature::categorical(format!("query_category_{k}"), card, self.embedding_dim)),
        );
        let fixed = (0..self.num_fixed).map(|k| format!("item_fixed_{k}")).collect();
        let mut variant = vec!["price".to_string(), "discount".to_string()];
        variant.extend((2..self.num_scalevariant).map(|k| format!("scalevariant_{k}")));
        FeatureSchema::new(query, fixed, variant)
    }

    /// Hidden utility parameters; a pure function of the config.
    pub fn hidden_utility(&self) -> Result<HiddenUtility> {
        self.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(u64::MAX);
        let normal = |rng: &mut ChaCha8Rng, sd: f64| rng.sample(Normal::new(0.0, sd).expect("valid sd"));
        let fixed = (0..self.num_fixed)
            .map(|_| FixedMarginal {
                shift: rng.random_range(0.5..2.0),
                log_mean: rng.random_range(-0.5..1.0),
                log_sd: rng.random_range(0.3..0.8),
                weight: normal(&mut rng, 0.6),
            })
            .collect();
        let variant = (0..self.num_scalevariant)
            .map(|s| {
                let (log_mean, log_sd, base) = match s {
                    0 => (PRICE_MEDIAN.ln(), PRICE_LOG_SD, -1.2),
                    1 => (DISCOUNT_MEDIAN.ln(), DISCOUNT_LOG_SD, 0.6),
                    _ => (rng.random_range(0.0..3.0), rng.random_range(0.4..1.0), 0.0),
                };
                VariantTerm {
                    log_mean,
                    log_sd,
                    weight: base + normal(&mut rng, 0.2),
                    query_slopes: (0..self.num_numeric_query).map(|_| normal(&mut rng, 0.25)).collect(),
                }
            })
            .collect();
        let price_category_slopes = self
            .categorical_cardinalities
            .iter()
            .map(|&card| (0..card).map(|_| normal(&mut rng, 0.3)).collect())
            .collect();
        let query_effect = (0..self.num_numeric_query).map(|_| normal(&mut rng, 1.0)).collect();
        Ok(HiddenUtility {
            fixed,
            variant,
            price_category_slopes,
            query_effect,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FixedMarginal {
    pub shift: f64,
    pub log_mean: f64,
    pub log_sd: f64,
    pub weight: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VariantTerm {
    pub log_mean: f64,
    pub log_sd: f64,
    pub weight: f64,
    /// Sensitivity change per unit of each numeric query feature.
    pub query_slopes: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HiddenUtility {
    pub fixed: Vec<FixedMarginal>,
    pub variant: Vec<VariantTerm>,
    /// Per categorical feature and category, added to the price sensitivity.
    pub price_category_slopes: Vec<Vec<f64>>,
    /// Item-independent query term.
    pub query_effect: Vec<f64>,
}

impl HiddenUtility {
    /// Utility of every item of `query`, recomputed from stored values.
    pub fn utilities(&self, query: &QueryRecord, schema: &FeatureSchema) -> Result<Vec<f64>> {
        if schema.num_fixed() != self.fixed.len() || schema.num_scalevariant() != self.variant.len() {
            return Err(Error::Schema("hidden utility does not match the schema".into()));
        }
        let numeric: Vec<f64> = schema.numeric_query_features().map(|(i, _)| query.query_values[i]).collect();
        let categories: Vec<usize> = schema
            .categorical_query_features()
            .map(|(i, ..)| query.query_values[i] as usize)
            .collect();
        query
            .items
            .iter()
            .map(|item| {
                let z_fixed: Vec<f64> = item
                    .fixed
                    .iter()
                    .zip(&self.fixed)
                    .map(|(&x, m)| ((x - m.shift).ln() - m.log_mean) / m.log_sd)
                    .collect();
                let z_variant: Vec<f64> = item
                    .scalevariant
                    .iter()
                    .zip(&self.variant)
                    .map(|(&x, t)| (x.ln() - t.log_mean) / t.log_sd)
                    .collect();
                self.utility_from_latents(&numeric, &categories, &z_fixed, &z_variant)
            })
            .collect()
    }

    fn utility_from_latents(&self, numeric: &[f64], categories: &[usize], z_fixed: &[f64], z_variant: &[f64]) -> Result<f64> {
        if numeric.len() != self.query_effect.len() || categories.len() != self.price_category_slopes.len() {
            return Err(Error::Schema("hidden utility does not match the query layout".into()));
        }
        let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
        let mut u = dot(numeric, &self.query_effect);
        u += z_fixed.iter().zip(&self.fixed).map(|(z, m)| z * m.weight).sum::<f64>();
        for (s, (z, term)) in z_variant.iter().zip(&self.variant).enumerate() {
            let mut sensitivity = term.weight + dot(numeric, &term.query_slopes);
            if s == 0 {
                for (slopes, &c) in self.price_category_slopes.iter().zip(categories) {
                    sensitivity += slopes.get(c).copied().ok_or_else(|| Error::Schema(format!("category {c} unknown")))?;
                }
            }
            u += sensitivity * z;
        }
        Ok(u)
    }
}

/// Generated corpus together with its schema and ground truth.
#[derive(Clone, Debug)]
pub struct Generated {
    pub schema: FeatureSchema,
    pub dataset: Dataset,
    pub utility: HiddenUtility,
}

pub fn generate(config: &GeneratorConfig) -> Result<Generated> {
    config.validate()?;
    let schema = config.schema()?;
    let utility = config.hidden_utility()?;
    let queries = (0..config.num_queries)
        .map(|i| generate_query(config, &utility, i))
        .collect::<Result<Vec<_>>>()?;
    let dataset = Dataset::new(queries);
    dataset.validate(&schema)?;
    Ok(Generated { schema, dataset, utility })
}

fn generate_query(config: &GeneratorConfig, utility: &HiddenUtility, index: usize) -> Result<QueryRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(index as u64);
    let std_normal = Normal::new(0.0, 1.0).expect("unit normal");

    let numeric: Vec<f64> = (0..config.num_numeric_query).map(|_| std_normal.sample(&mut rng)).collect();
    let categories: Vec<usize> = config.categorical_cardinalities.iter().map(|&c| rng.random_range(0..c)).collect();
    let num_nights = rng.random_range(1..=MAX_NUM_NIGHTS);
    let exchange_rate = EXCHANGE_RATES[rng.random_range(0..EXCHANGE_RATES.len())];
    let n = rng.random_range(config.min_items..=config.max_items);

    let query_id = format!("q{index:06}");
    let mut items = Vec::with_capacity(n);
    let mut utilities = Vec::with_capacity(n);
    for j in 0..n {
        let z_fixed: Vec<f64> = utility.fixed.iter().map(|_| std_normal.sample(&mut rng)).collect();
        let z_variant: Vec<f64> = utility.variant.iter().map(|_| std_normal.sample(&mut rng)).collect();
        let fixed = z_fixed
            .iter()
            .zip(&utility.fixed)
            .map(|(z, m)| m.shift + (m.log_mean + m.log_sd * z).exp())
            .collect();
        let scalevariant = z_variant
            .iter()
            .zip(&utility.variant)
            .map(|(z, t)| (t.log_mean + t.log_sd * z).exp())
            .collect();
        utilities.push(utility.utility_from_latents(&numeric, &categories, &z_fixed, &z_variant)?);
        items.push(ItemRecord {
            item_id: format!("{query_id}-{j:02}"),
            fixed,
            scalevariant,
            label: 0,
        });
    }

    let max = utilities.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let weights: Vec<f64> = utilities.iter().map(|u| ((u - max) / config.temperature).exp()).collect();
    let booked = WeightedIndex::new(&weights)
        .map_err(|e| Error::Config(format!("booking weights: {e}")))?
        .sample(&mut rng);
    items[booked].label = 1;

    let mut query_values = numeric;
    query_values.extend(categories.iter().map(|&c| c as f64));
    Ok(QueryRecord {
        query_id,
        query_values,
        num_nights,
        exchange_rate,
        items,
    })
}

/// Mean NDCG of ranking every query by its true utility.
pub fn ideal_ndcg_bound(ds: &Dataset, schema: &FeatureSchema, utility: &HiddenUtility) -> Result<EvalResult> {
    let per_query = ds
        .iter()
        .map(|q| ndcg_of_scores(&utility.utilities(q, schema)?, &q.labels()))
        .collect::<Result<Vec<_>>>()?;
    Ok(EvalResult::from_per_query(per_query))
}

/// Expected NDCG of a uniformly random ordering, averaged over queries.
pub fn random_ranker_ndcg(ds: &Dataset) -> f64 {
    if ds.is_empty() {
        return f64::NAN;
    }
    let per_query: Vec<f64> = ds
        .iter()
        .map(|q| {
            let n = q.items.len();
            (1..=n).map(discount).sum::<f64>() / n as f64
        })
        .collect();
    crate::metrics::pairwise_sum(&per_query) / ds.len() as f64
}
