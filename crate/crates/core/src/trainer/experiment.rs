use serde::{Deserialize, Serialize};

use super::{train, StopReason, TrainConfig, TrainHistory, DEFAULT_LEARNING_RATE, DEFAULT_MAX_EPOCHS, DEFAULT_PATIENCE, SOFTRANK_NEGATIVES};
use crate::data::{apply_standardization, fit_standardization, split_holdout, Dataset, FeatureSchema, StandardizationStats};
use crate::error::{Error, Result};
use crate::generator::{ideal_ndcg_bound, random_ranker_ndcg, HiddenUtility};
use crate::losses::{LossKind, DEFAULT_SOFTRANK_SIGMA};
use crate::metrics::{bonferroni, mean_ndcg, two_sample_t_test};
use crate::perturbation::{apply_case, PerturbationCase, DEFAULT_FIXED_RATE};
use crate::provenance::Provenance;
use crate::scoring::{invariance_gap, rank, ModelConfig, ModelMode, RankingModel};

/// Significance level before correction.
pub const DEFAULT_ALPHA: f64 = 0.05;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub losses: Vec<LossKind>,
    pub modes: Vec<ModelMode>,
    pub max_epochs: usize,
    pub patience: usize,
    pub learning_rate: f64,
    pub softrank_sigma: f64,
    pub model: ModelConfig,
    pub cases: Vec<PerturbationCase>,
    pub alpha: f64,
    /// Scale used for the per-row invariance-gap measurement.
    pub invariance_scale: f64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 7,
            losses: LossKind::ALL.to_vec(),
            modes: ModelMode::ALL.to_vec(),
            max_epochs: DEFAULT_MAX_EPOCHS,
            patience: DEFAULT_PATIENCE,
            learning_rate: DEFAULT_LEARNING_RATE,
            softrank_sigma: DEFAULT_SOFTRANK_SIGMA,
            model: ModelConfig::default(),
            cases: PerturbationCase::all(),
            alpha: DEFAULT_ALPHA,
            invariance_scale: DEFAULT_FIXED_RATE,
        }
    }
}

impl ExperimentConfig {
    fn train_config(&self, loss: LossKind, mode: ModelMode, seed: u64) -> TrainConfig {
        TrainConfig {
            loss,
            mode,
            max_epochs: self.max_epochs,
            patience: self.patience,
            learning_rate: self.learning_rate,
            softrank_sigma: self.softrank_sigma,
            softrank_negatives: SOFTRANK_NEGATIVES,
            seed,
            model: self.model.clone(),
        }
    }

    /// Number of SIR-vs-baseline tests: one per loss and evaluation column.
    pub fn num_comparisons(&self) -> usize {
        self.losses.len() * (1 + self.cases.len())
    }
}

/// splitmix64 of `global` advanced `index` times.
pub fn derive_seed(global: u64, index: u64) -> u64 {
    let mut z = global.wrapping_add(index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSizes {
    pub train: usize,
    pub validation: usize,
    pub test: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellMetrics {
    pub validation_ndcg: f64,
    pub test_ndcg: f64,
    /// Mean test NDCG under each perturbation case, in config order.
    pub case_ndcg: Vec<f64>,
    /// Largest pairwise score-difference change over test queries when the
    /// scale-variant features are multiplied by the invariance scale.
    pub invariance_gap: f64,
    /// Fraction of test queries whose ranking changes under the last case.
    pub last_case_ranking_change: f64,
    pub history: TrainHistory,
    #[serde(skip)]
    pub per_query: Vec<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub loss: LossKind,
    pub mode: ModelMode,
    pub seed: u64,
    pub metrics: Option<CellMetrics>,
    pub error: Option<String>,
}

impl ReportRow {
    pub fn label(&self) -> String {
        match self.mode {
            ModelMode::Sir => format!("{} (SIR)", self.loss.display_name()),
            ModelMode::DeepOnly => self.loss.display_name().to_string(),
        }
    }
}

/// SIR against the deep-only baseline for one loss and one column.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub loss: LossKind,
    pub column: String,
    pub t: f64,
    pub df: f64,
    /// One-sided p-value that the baseline's NDCG is smaller than SIR's.
    pub p_value: f64,
    pub degenerate: bool,
    pub significant: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub provenance: Provenance,
    pub config: ExperimentConfig,
    pub split: SplitSizes,
    pub random_ranker_ndcg: f64,
    pub ideal_ndcg_bound: Option<f64>,
    pub num_comparisons: usize,
    pub significance_threshold: f64,
    pub columns: Vec<String>,
    pub rows: Vec<ReportRow>,
    pub comparisons: Vec<Comparison>,
}

impl ExperimentReport {
    pub fn row(&self, loss: LossKind, mode: ModelMode) -> Option<&ReportRow> {
        self.rows.iter().find(|r| r.loss == loss && r.mode == mode)
    }

    pub fn comparison(&self, loss: LossKind, column: &str) -> Option<&Comparison> {
        self.comparisons.iter().find(|c| c.loss == loss && c.column == column)
    }

    pub fn failed_cells(&self) -> Vec<String> {
        self.rows
            .iter()
            .filter_map(|r| r.error.as_ref().map(|e| format!("{}: {e}", r.label())))
            .collect()
    }
}

struct Prepared<'a> {
    schema: &'a FeatureSchema,
    stats: StandardizationStats,
    train: crate::data::PreparedDataset,
    validation: crate::data::PreparedDataset,
    test_raw: Dataset,
    /// Clean test set first, then one entry per case.
    test_sets: Vec<crate::data::PreparedDataset>,
}

fn evaluate_cell(p: &Prepared<'_>, config: &ExperimentConfig, train_config: &TrainConfig) -> Result<CellMetrics> {
    let (model, history) = train(p.schema, &p.train, &p.validation, train_config)?;
    let validation_ndcg = mean_ndcg(&model, &p.validation)?.mean;
    let mut per_query = Vec::with_capacity(p.test_sets.len());
    let mut means = Vec::with_capacity(p.test_sets.len());
    for set in &p.test_sets {
        let r = mean_ndcg(&model, set)?;
        means.push(r.mean);
        per_query.push(r.per_query);
    }
    let mut gap: f64 = 0.0;
    for q in p.test_raw.iter() {
        gap = gap.max(invariance_gap(&model, &p.stats, p.schema, q, config.invariance_scale)?);
    }
    let last_case_ranking_change = match p.test_sets.last() {
        Some(last) if p.test_sets.len() > 1 => ranking_change_fraction(&model, &p.test_sets[0], last)?,
        _ => 0.0,
    };
    Ok(CellMetrics {
        validation_ndcg,
        test_ndcg: means[0],
        case_ndcg: means[1..].to_vec(),
        invariance_gap: gap,
        last_case_ranking_change,
        history,
        per_query,
    })
}

/// Fraction of queries ranked differently on `a` and `b` (same queries).
pub fn ranking_change_fraction(
    model: &RankingModel,
    a: &crate::data::PreparedDataset,
    b: &crate::data::PreparedDataset,
) -> Result<f64> {
    let mut changed = 0usize;
    for (qa, qb) in a.queries.iter().zip(&b.queries) {
        if rank(&model.score_query(qa)?)? != rank(&model.score_query(qb)?)? {
            changed += 1;
        }
    }
    Ok(changed as f64 / a.len().max(1) as f64)
}

/// Trains every (loss, mode) cell on one hold-out split and compares SIR
/// with the baseline on the clean test set and under every perturbation.
pub fn run_experiment(
    ds: &Dataset,
    schema: &FeatureSchema,
    config: &ExperimentConfig,
    utility: Option<&HiddenUtility>,
    provenance: Provenance,
) -> Result<ExperimentReport> {
    if config.losses.is_empty() || config.modes.is_empty() {
        return Err(Error::Config("experiment needs at least one loss and one mode".into()));
    }
    ds.validate(schema)?;
    let split = split_holdout(ds, config.seed)?;
    let stats = fit_standardization(&split.train, schema)?;
    let mut test_sets = vec![apply_standardization(&split.test, &stats, schema)?];
    for case in &config.cases {
        test_sets.push(apply_standardization(&apply_case(&split.test, schema, case)?, &stats, schema)?);
    }
    let prepared = Prepared {
        schema,
        train: apply_standardization(&split.train, &stats, schema)?,
        validation: apply_standardization(&split.validation, &stats, schema)?,
        stats,
        test_raw: split.test.clone(),
        test_sets,
    };

    let mut rows = Vec::new();
    for (li, &loss) in config.losses.iter().enumerate() {
        for (mi, &mode) in config.modes.iter().enumerate() {
            let seed = derive_seed(config.seed, (li * config.modes.len() + mi) as u64);
            let train_config = config.train_config(loss, mode, seed);
            let (metrics, error) = match evaluate_cell(&prepared, config, &train_config) {
                Ok(m) => (Some(m), None),
                Err(e) => (None, Some(e.to_string())),
            };
            rows.push(ReportRow {
                loss,
                mode,
                seed,
                metrics,
                error,
            });
        }
    }

    let mut columns = vec!["Validation".to_string(), "Test".to_string()];
    columns.extend(config.cases.iter().map(PerturbationCase::label));

    let num_comparisons = config.num_comparisons();
    let threshold = bonferroni(config.alpha, num_comparisons)?;
    let mut comparisons = Vec::new();
    for &loss in &config.losses {
        let find = |mode| {
            rows.iter()
                .find(|r| r.loss == loss && r.mode == mode)
                .and_then(|r| r.metrics.as_ref())
        };
        let (Some(base), Some(sir)) = (find(ModelMode::DeepOnly), find(ModelMode::Sir)) else {
            continue;
        };
        for (k, column) in columns[1..].iter().enumerate() {
            let t = two_sample_t_test(&base.per_query[k], &sir.per_query[k])?;
            comparisons.push(Comparison {
                loss,
                column: column.clone(),
                t: t.t,
                df: t.df,
                p_value: t.p_value,
                degenerate: t.degenerate,
                significant: t.p_value < threshold,
            });
        }
    }

    let ideal_ndcg_bound = match utility {
        Some(u) => Some(ideal_ndcg_bound(&split.test, schema, u)?.mean),
        None => None,
    };
    Ok(ExperimentReport {
        provenance,
        config: config.clone(),
        split: SplitSizes {
            train: split.train.len(),
            validation: split.validation.len(),
            test: split.test.len(),
        },
        random_ranker_ndcg: random_ranker_ndcg(&split.test),
        ideal_ndcg_bound,
        num_comparisons,
        significance_threshold: threshold,
        columns,
        rows,
        comparisons,
    })
}

impl StopReason {
    pub fn as_str(self) -> &'static str {
        match self {
            StopReason::MaxEpochs => "max_epochs",
            StopReason::EarlyStop => "early_stop",
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generator::{generate, GeneratorConfig};

    fn tiny_config() -> ExperimentConfig {
        ExperimentConfig {
            seed: 3,
            losses: vec![LossKind::RankNet, LossKind::ListMle],
            max_epochs: 4,
            patience: 2,
            model: ModelConfig {
                widths: vec![8],
                compressor_dim: 3,
            },
            ..ExperimentConfig::default()
        }
    }

    #[test]
    fn report_shape_and_sir_invariance() {
        let g = generate(&GeneratorConfig {
            num_queries: 120,
            seed: 5,
            ..GeneratorConfig::default()
        })
        .unwrap();
        let config = tiny_config();
        let report = run_experiment(&g.dataset, &g.schema, &config, Some(&g.utility), Provenance::new(Some(3))).unwrap();
        assert_eq!(report.rows.len(), 4);
        assert_eq!(report.columns.len(), 6);
        assert_eq!(report.num_comparisons, 10);
        assert_eq!(report.comparisons.len(), 10);
        assert!(report.failed_cells().is_empty());
        for row in &report.rows {
            let m = row.metrics.as_ref().unwrap();
            assert_eq!(m.case_ndcg.len(), 4);
            if row.mode == ModelMode::Sir {
                for c in &m.case_ndcg {
                    assert!((c - m.test_ndcg).abs() < 1e-9);
                }
                assert!(m.invariance_gap < 1e-9);
                assert_eq!(m.last_case_ranking_change, 0.0);
            }
        }
        assert_eq!((report.split.train, report.split.validation, report.split.test), (76, 8, 36));
    }

    #[test]
    fn failed_cells_are_recorded() {
        let g = generate(&GeneratorConfig {
            num_queries: 40,
            seed: 6,
            ..GeneratorConfig::default()
        })
        .unwrap();
        let config = ExperimentConfig {
            learning_rate: 1e300,
            losses: vec![LossKind::RankNet],
            ..tiny_config()
        };
        let report = run_experiment(&g.dataset, &g.schema, &config, None, Provenance::new(None)).unwrap();
        assert_eq!(report.failed_cells().len(), 2);
        assert!(report.comparisons.is_empty());
    }

    #[test]
    fn stats_come_from_training_split_only() {
        let g = generate(&GeneratorConfig {
            num_queries: 100,
            seed: 7,
            ..GeneratorConfig::default()
        })
        .unwrap();
        let split = split_holdout(&g.dataset, 7).unwrap();
        let train_only = fit_standardization(&split.train, &g.schema).unwrap();
        let mut pooled = split.train.clone();
        pooled.queries.extend(split.test.queries.iter().cloned());
        let leaked = fit_standardization(&pooled, &g.schema).unwrap();
        assert_ne!(train_only, leaked);
    }

    #[test]
    fn seeds_differ_per_cell() {
        let seeds: std::collections::HashSet<u64> = (0..10).map(|i| derive_seed(7, i)).collect();
        assert_eq!(seeds.len(), 10);
        assert_eq!(derive_seed(7, 3), derive_seed(7, 3));
    }
}
