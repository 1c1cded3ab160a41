use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{ParamId, ParameterSet, Tape, Tensor, Var};
use crate::data::{FeatureSchema, PreparedQuery};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelMode {
    /// Deep part over fixed features plus the log-linear wide part.
    Sir,
    /// Deep part only, fed every item feature (standardized).
    DeepOnly,
}

impl ModelMode {
    pub const ALL: [ModelMode; 2] = [ModelMode::DeepOnly, ModelMode::Sir];

    pub fn as_str(self) -> &'static str {
        match self {
            ModelMode::Sir => "sir",
            ModelMode::DeepOnly => "deep_only",
        }
    }
}

impl std::fmt::Display for ModelMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for ModelMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sir" => Ok(ModelMode::Sir),
            "deep_only" | "deep-only" => Ok(ModelMode::DeepOnly),
            other => Err(Error::Config(format!("unknown model mode `{other}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelConfig {
    /// Hidden widths of the deep stack.
    pub widths: Vec<usize>,
    /// Output width `L` of the query compressor.
    pub compressor_dim: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            widths: vec![64, 32, 16],
            compressor_dim: 4,
        }
    }
}

impl ModelConfig {
    /// Wider stack for large datasets.
    pub fn production() -> Self {
        Self {
            widths: vec![512, 256, 128],
            compressor_dim: 4,
        }
    }
}

#[derive(Clone, Debug)]
struct Layout {
    num_numeric: usize,
    categorical: Vec<(String, usize)>,
    fixed_names: Vec<String>,
    variant_names: Vec<String>,
    query_repr_dim: usize,
}

#[derive(Clone, Debug)]
struct Ids {
    embeddings: Vec<ParamId>,
    hidden: Vec<(ParamId, ParamId)>,
    head: (ParamId, ParamId),
    /// compressor weight, compressor bias, wide weight
    wide: Option<(ParamId, ParamId, ParamId)>,
}

/// Per-item scores recorded on a tape, each `D × 1`.
#[derive(Clone, Copy, Debug)]
pub struct ForwardVars {
    pub deep: Var,
    pub wide: Option<Var>,
    pub scores: Var,
}

/// Siamese list scorer: one set of weights applied to every item of a query.
///
/// In [`ModelMode::Sir`] the score of item `j` is
/// `f_d(q, fixed_j) + <w, f_s(q) ⊗ ln(fixed_j ⊕ variant_j)>`, where the
/// wide part reads raw values. Multiplying every variant feature of a query
/// by the same `c > 0` adds the item-independent term
/// `<w, f_s(q) ⊗ (0 ⊕ ln c·1)>` to all scores, so score differences and
/// the induced ranking do not change.
#[derive(Clone, Debug)]
pub struct RankingModel {
    mode: ModelMode,
    config: ModelConfig,
    layout: Layout,
    ids: Ids,
    params: ParameterSet,
}

impl RankingModel {
    pub fn new(schema: &FeatureSchema, mode: ModelMode, config: ModelConfig, seed: u64) -> Result<Self> {
        schema.validate()?;
        if config.widths.contains(&0) {
            return Err(Error::Config("layer widths must be positive".into()));
        }
        let layout = Layout {
            num_numeric: schema.numeric_query_features().count(),
            categorical: schema
                .categorical_query_features()
                .map(|(_, name, card, _)| (name.to_string(), card))
                .collect(),
            fixed_names: schema.item_features_fixed.clone(),
            variant_names: schema.item_features_scalevariant.clone(),
            query_repr_dim: schema.query_repr_dim(),
        };
        if mode == ModelMode::Sir && !(config.compressor_dim >= 1 && config.compressor_dim < layout.query_repr_dim) {
            return Err(Error::Config(format!(
                "compressor width L = {} must satisfy 1 <= L < {} (query representation width)",
                config.compressor_dim, layout.query_repr_dim
            )));
        }

        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParameterSet::new();
        let mut embeddings = Vec::new();
        for (_, name, card, dim) in schema.categorical_query_features() {
            embeddings.push(params.add_embedding(format!("embedding.{name}"), card, dim, &mut rng)?);
        }
        let item_inputs = match mode {
            ModelMode::Sir => schema.num_fixed(),
            ModelMode::DeepOnly => schema.num_item_features(),
        };
        let mut fan_in = layout.query_repr_dim + item_inputs;
        let mut hidden = Vec::new();
        for (i, &width) in config.widths.iter().enumerate() {
            let w = params.add_dense_weight(format!("deep.{i}.weight"), fan_in, width, &mut rng)?;
            let b = params.add_bias(format!("deep.{i}.bias"), width)?;
            hidden.push((w, b));
            fan_in = width;
        }
        let head = (
            params.add_dense_weight("deep.head.weight", fan_in, 1, &mut rng)?,
            params.add_bias("deep.head.bias", 1)?,
        );
        let wide = match mode {
            ModelMode::Sir => {
                let l = config.compressor_dim;
                let cw = params.add_dense_weight("compressor.weight", layout.query_repr_dim, l, &mut rng)?;
                let cb = params.add_bias("compressor.bias", l)?;
                let ww = params.add_dense_weight("wide.weight", l * schema.num_item_features(), 1, &mut rng)?;
                Some((cw, cb, ww))
            }
            ModelMode::DeepOnly => None,
        };
        Ok(Self {
            mode,
            config,
            layout,
            ids: Ids {
                embeddings,
                hidden,
                head,
                wide,
            },
            params,
        })
    }

    pub fn mode(&self) -> ModelMode {
        self.mode
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn params(&self) -> &ParameterSet {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParameterSet {
        &mut self.params
    }

    pub fn wide_weight_id(&self) -> Option<ParamId> {
        self.ids.wide.map(|(_, _, w)| w)
    }

    /// Sets every parameter to zero.
    pub fn zero_parameters(&mut self) {
        let ids: Vec<_> = self.params.ids().collect();
        for id in ids {
            self.params.value_mut(id).data_mut().iter_mut().for_each(|v| *v = 0.0);
        }
    }

    fn check_query(&self, q: &PreparedQuery) -> Result<()> {
        let d = q.num_items();
        if q.query_numeric.len() != self.layout.num_numeric
            || q.query_categories.len() != self.layout.categorical.len()
            || q.fixed_std.shape() != [d, self.layout.fixed_names.len()]
            || q.scalevariant_std.shape() != [d, self.layout.variant_names.len()]
            || q.wide_raw.shape() != [d, self.layout.fixed_names.len() + self.layout.variant_names.len()]
        {
            return Err(Error::Scoring(format!(
                "query `{}` does not match the model's feature layout",
                q.query_id
            )));
        }
        if d == 0 {
            return Err(Error::Scoring(format!("query `{}` has no items", q.query_id)));
        }
        if q.query_numeric.iter().any(|v| !v.is_finite()) {
            return Err(Error::Scoring(format!("query `{}` has a non-finite query feature", q.query_id)));
        }
        Ok(())
    }

    /// Records the forward pass of every item of `q` on `tape`.
    pub fn forward(&self, tape: &mut Tape, q: &PreparedQuery) -> Result<ForwardVars> {
        self.check_query(q)?;
        let d = q.num_items();

        let mut query_parts = Vec::with_capacity(1 + self.ids.embeddings.len());
        if self.layout.num_numeric > 0 {
            query_parts.push(tape.constant(Tensor::from_parts(
                vec![1, self.layout.num_numeric],
                q.query_numeric.clone(),
            )));
        }
        for ((id, (name, _)), &cat) in self.ids.embeddings.iter().zip(&self.layout.categorical).zip(&q.query_categories) {
            let table = tape.param(&self.params, *id);
            query_parts.push(tape.embedding(table, cat, name)?);
        }
        let query_repr = tape.concat_cols(&query_parts)?;

        let repeated = tape.repeat_rows(query_repr, d)?;
        let fixed = tape.constant(q.fixed_std.clone());
        let mut deep_inputs = vec![repeated, fixed];
        if self.mode == ModelMode::DeepOnly {
            deep_inputs.push(tape.constant(q.scalevariant_std.clone()));
        }
        let mut h = tape.concat_cols(&deep_inputs)?;
        for &(w, b) in &self.ids.hidden {
            let (wv, bv) = (tape.param(&self.params, w), tape.param(&self.params, b));
            let z = tape.affine(h, wv, Some(bv))?;
            h = tape.relu(z);
        }
        let (hw, hb) = (tape.param(&self.params, self.ids.head.0), tape.param(&self.params, self.ids.head.1));
        let deep = tape.affine(h, hw, Some(hb))?;

        let Some((cw, cb, ww)) = self.ids.wide else {
            return Ok(ForwardVars {
                deep,
                wide: None,
                scores: deep,
            });
        };
        let k1 = self.layout.fixed_names.len();
        let k = k1 + self.layout.variant_names.len();
        if let Some(pos) = q.wide_raw.data().iter().position(|&v| v <= 0.0) {
            let (item, col) = (pos / k, pos % k);
            let name = if col < k1 {
                &self.layout.fixed_names[col]
            } else {
                &self.layout.variant_names[col - k1]
            };
            return Err(Error::domain(format!(
                "wide-path feature `{name}` of item {item} in query `{}` is not positive ({})",
                q.query_id,
                q.wide_raw.data()[pos]
            )));
        }
        let (cwv, cbv) = (tape.param(&self.params, cw), tape.param(&self.params, cb));
        let compressed = tape.affine(query_repr, cwv, Some(cbv))?;
        let raw = tape.constant(q.wide_raw.clone());
        let logs = tape.log(raw)?;
        let interactions = tape.kron_rows(compressed, logs)?;
        let wv = tape.param(&self.params, ww);
        let wide = tape.matmul(interactions, wv)?;
        let scores = tape.add(deep, wide)?;
        Ok(ForwardVars {
            deep,
            wide: Some(wide),
            scores,
        })
    }

    /// Scores of every item of `q`.
    pub fn score_query(&self, q: &PreparedQuery) -> Result<Vec<f64>> {
        let mut tape = Tape::new();
        let f = self.forward(&mut tape, q)?;
        Ok(tape.value(f.scores).data().to_vec())
    }

    /// `(deep, wide)` score components per item; `wide` is all zeros for
    /// the deep-only baseline.
    pub fn score_components(&self, q: &PreparedQuery) -> Result<(Vec<f64>, Vec<f64>)> {
        let mut tape = Tape::new();
        let f = self.forward(&mut tape, q)?;
        let deep = tape.value(f.deep).data().to_vec();
        let wide = match f.wide {
            Some(w) => tape.value(w).data().to_vec(),
            None => vec![0.0; deep.len()],
        };
        Ok((deep, wide))
    }

    pub fn score_deep(&self, q: &PreparedQuery, item: usize) -> Result<f64> {
        self.component(q, item, |(d, _)| d)
    }

    pub fn score_wide(&self, q: &PreparedQuery, item: usize) -> Result<f64> {
        self.component(q, item, |(_, w)| w)
    }

    fn component(
        &self,
        q: &PreparedQuery,
        item: usize,
        pick: impl Fn((Vec<f64>, Vec<f64>)) -> Vec<f64>,
    ) -> Result<f64> {
        if item >= q.num_items() {
            return Err(Error::Scoring(format!(
                "item {item} out of range for query `{}` with {} items",
                q.query_id,
                q.num_items()
            )));
        }
        Ok(pick(self.score_components(q)?)[item])
    }

    /// Replaces parameter values with `params` (same names and shapes).
    pub fn load_parameters(&mut self, params: &ParameterSet) -> Result<()> {
        self.params.copy_values_from(params)
    }
}
