//! Siamese scorers (SIR and deep-only baseline), ranking and checkpoints.

mod checkpoint;
mod model;
mod rank;

pub use checkpoint::{Checkpoint, CHECKPOINT_FORMAT_VERSION};
pub use model::{ForwardVars, ModelConfig, ModelMode, RankingModel};
pub use rank::{rank, Ranking};

use crate::data::{FeatureSchema, QueryRecord, StandardizationStats};
use crate::error::{Error, Result};

/// Largest change of any pairwise score difference when every scale-variant
/// feature of `query` is multiplied by `c`.
pub fn invariance_gap(
    model: &RankingModel,
    stats: &StandardizationStats,
    schema: &FeatureSchema,
    query: &QueryRecord,
    c: f64,
) -> Result<f64> {
    if !(c > 0.0 && c.is_finite()) {
        return Err(Error::domain(format!("scale factor must be positive and finite, got {c}")));
    }
    let mut scaled = query.clone();
    for item in &mut scaled.items {
        item.scalevariant.iter_mut().for_each(|v| *v *= c);
    }
    let before = model.score_query(&stats.prepare_query(query, schema)?)?;
    let after = model.score_query(&stats.prepare_query(&scaled, schema)?)?;
    // max over pairs of |(a_i - a_j) - (b_i - b_j)| is the spread of a - b
    let (lo, hi) = before
        .iter()
        .zip(&after)
        .map(|(b, a)| a - b)
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), s| (lo.min(s), hi.max(s)));
    Ok(hi - lo)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::Tape;
    use crate::data::fixtures::{dataset, query, schema};
    use crate::data::{fit_standardization, PreparedQuery};
    use crate::provenance::Provenance;
    use proptest::prelude::*;

    fn setup(mode: ModelMode, seed: u64) -> (FeatureSchema, StandardizationStats, RankingModel) {
        let s = schema();
        let stats = fit_standardization(&dataset(20), &s).unwrap();
        let config = ModelConfig {
            widths: vec![6, 5],
            compressor_dim: 2,
        };
        let model = RankingModel::new(&s, mode, config, seed).unwrap();
        (s, stats, model)
    }

    fn prepared(stats: &StandardizationStats, s: &FeatureSchema, n: usize) -> PreparedQuery {
        stats.prepare_query(&query("t", 0.3, 0, n), s).unwrap()
    }

    #[test]
    fn zeroed_model_scores_zero() {
        let (s, stats, mut model) = setup(ModelMode::Sir, 1);
        model.zero_parameters();
        assert!(model.score_query(&prepared(&stats, &s, 4)).unwrap().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn compressor_width_must_be_below_query_width() {
        let s = schema();
        // query representation is 1 numeric + 2 embedding dims
        let bad = ModelConfig {
            widths: vec![4],
            compressor_dim: 3,
        };
        assert!(matches!(RankingModel::new(&s, ModelMode::Sir, bad.clone(), 0), Err(Error::Config(_))));
        assert!(RankingModel::new(&s, ModelMode::DeepOnly, bad, 0).is_ok());
    }

    #[test]
    fn single_item_scores_finite() {
        let (s, stats, model) = setup(ModelMode::Sir, 2);
        let scores = model.score_query(&prepared(&stats, &s, 1)).unwrap();
        assert_eq!(scores.len(), 1);
        assert!(scores[0].is_finite());
    }

    #[test]
    fn deep_score_ignores_scalevariant_inputs() {
        let (s, stats, model) = setup(ModelMode::Sir, 3);
        let base = query("t", 0.3, 0, 5);
        let mut mutated = base.clone();
        for (j, item) in mutated.items.iter_mut().enumerate() {
            item.scalevariant[0] *= 1000.0;
            item.scalevariant[1] = 0.37 + j as f64;
        }
        let a = model.score_components(&stats.prepare_query(&base, &s).unwrap()).unwrap().0;
        let b = model.score_components(&stats.prepare_query(&mutated, &s).unwrap()).unwrap().0;
        assert_eq!(a.iter().map(|v| v.to_bits()).collect::<Vec<_>>(), b.iter().map(|v| v.to_bits()).collect::<Vec<_>>());
    }

    #[test]
    fn wide_score_matches_triple_loop() {
        let (s, stats, model) = setup(ModelMode::Sir, 4);
        let q = prepared(&stats, &s, 6);
        let p = model.params();
        let cw = p.value(p.id_of("compressor.weight").unwrap());
        let cb = p.value(p.id_of("compressor.bias").unwrap());
        let w = p.value(p.id_of("wide.weight").unwrap());
        let emb = p.value(p.id_of("embedding.pos").unwrap());
        let mut repr = q.query_numeric.clone();
        repr.extend_from_slice(emb.row(q.query_categories[0]));
        let l = cb.len();
        let compressed: Vec<f64> = (0..l)
            .map(|o| cb.data()[o] + (0..repr.len()).map(|i| repr[i] * cw.row(i)[o]).sum::<f64>())
            .collect();
        for j in 0..q.num_items() {
            let logs: Vec<f64> = q.wide_raw.row(j).iter().map(|v| v.ln()).collect();
            let mut expected = 0.0;
            for a in 0..l {
                for (b, lv) in logs.iter().enumerate() {
                    expected += w.data()[a * logs.len() + b] * compressed[a] * lv;
                }
            }
            let got = model.score_wide(&q, j).unwrap();
            assert!((got - expected).abs() < 1e-12, "{got} vs {expected}");
        }
    }

    #[test]
    fn unit_features_give_zero_wide_score() {
        let (s, stats, model) = setup(ModelMode::Sir, 5);
        let mut q = query("t", 0.3, 0, 3);
        for item in &mut q.items {
            item.fixed.iter_mut().for_each(|v| *v = 1.0);
            item.scalevariant.iter_mut().for_each(|v| *v = 1.0);
        }
        let p = stats.prepare_query(&q, &s).unwrap();
        assert!((0..3).all(|j| model.score_wide(&p, j).unwrap() == 0.0));
    }

    #[test]
    fn zero_wide_weight_reduces_to_deep() {
        let (s, stats, mut model) = setup(ModelMode::Sir, 6);
        let w = model.wide_weight_id().unwrap();
        model.params_mut().value_mut(w).data_mut().fill(0.0);
        let q = prepared(&stats, &s, 4);
        let (deep, _) = model.score_components(&q).unwrap();
        assert_eq!(model.score_query(&q).unwrap(), deep);
    }

    #[test]
    fn scores_are_component_sums() {
        let (s, stats, model) = setup(ModelMode::Sir, 7);
        let q = prepared(&stats, &s, 5);
        let (deep, wide) = model.score_components(&q).unwrap();
        for (j, score) in model.score_query(&q).unwrap().into_iter().enumerate() {
            assert_eq!(score, deep[j] + wide[j]);
        }
    }

    #[test]
    fn nonpositive_wide_input_names_feature_and_item() {
        let (s, stats, model) = setup(ModelMode::Sir, 8);
        let mut q = query("t", 0.3, 0, 3);
        q.items[2].scalevariant[1] = 0.0;
        let err = model.score_query(&stats.prepare_query(&q, &s).unwrap()).unwrap_err().to_string();
        assert!(err.contains("discount") && err.contains("item 2"), "{err}");
        // the deep-only baseline has no log and accepts it
        let (_, _, deep) = setup(ModelMode::DeepOnly, 8);
        assert!(deep.score_query(&stats.prepare_query(&q, &s).unwrap()).is_ok());
    }

    #[test]
    fn sir_is_scale_invariant_but_scores_shift() {
        let (s, stats, model) = setup(ModelMode::Sir, 9);
        let q = query("t", -0.4, 1, 7);
        for c in [1e-2, 0.5, 7.0, 1200.0] {
            assert!(invariance_gap(&model, &stats, &s, &q, c).unwrap() < 1e-9);
        }
        assert_eq!(invariance_gap(&model, &stats, &s, &q, 1.0).unwrap(), 0.0);
        let mut scaled = q.clone();
        scaled.items.iter_mut().for_each(|i| i.scalevariant.iter_mut().for_each(|v| *v *= 1200.0));
        let a = model.score_query(&stats.prepare_query(&q, &s).unwrap()).unwrap();
        let b = model.score_query(&stats.prepare_query(&scaled, &s).unwrap()).unwrap();
        assert!((a[0] - b[0]).abs() > 1e-6);
        assert_eq!(rank(&a).unwrap(), rank(&b).unwrap());
    }

    #[test]
    fn deep_only_is_not_invariant() {
        let (s, stats, model) = setup(ModelMode::DeepOnly, 10);
        let q = query("t", -0.4, 1, 7);
        assert!(invariance_gap(&model, &stats, &s, &q, 1200.0).unwrap() > 1e-6);
    }

    #[test]
    fn gap_rejects_nonpositive_scale() {
        let (s, stats, model) = setup(ModelMode::Sir, 11);
        let q = query("t", 0.0, 0, 3);
        for c in [0.0, -1.0, f64::NAN] {
            assert!(matches!(invariance_gap(&model, &stats, &s, &q, c), Err(Error::Domain(_))));
        }
    }

    #[test]
    fn gap_matches_pairwise_oracle() {
        let (s, stats, model) = setup(ModelMode::DeepOnly, 12);
        let q = query("t", 0.1, 0, 6);
        let mut scaled = q.clone();
        scaled.items.iter_mut().for_each(|i| i.scalevariant.iter_mut().for_each(|v| *v *= 7.0));
        let a = model.score_query(&stats.prepare_query(&q, &s).unwrap()).unwrap();
        let b = model.score_query(&stats.prepare_query(&scaled, &s).unwrap()).unwrap();
        let mut oracle: f64 = 0.0;
        for i in 0..a.len() {
            for j in 0..a.len() {
                oracle = oracle.max(((b[i] - b[j]) - (a[i] - a[j])).abs());
            }
        }
        let gap = invariance_gap(&model, &stats, &s, &q, 7.0).unwrap();
        assert!((gap - oracle).abs() < 1e-12);
    }

    #[test]
    fn forward_records_gradients_for_wide_weight() {
        let (s, stats, mut model) = setup(ModelMode::Sir, 13);
        let q = prepared(&stats, &s, 3);
        let mut tape = Tape::new();
        let f = model.forward(&mut tape, &q).unwrap();
        let total = tape.sum(f.scores);
        tape.backward(total, model.params_mut()).unwrap();
        let w = model.wide_weight_id().unwrap();
        assert!(model.params().grad(w).data().iter().any(|&g| g != 0.0));
    }

    #[test]
    fn checkpoint_round_trip_and_fingerprint_guard() {
        let (s, stats, model) = setup(ModelMode::Sir, 14);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.json");
        Checkpoint::new(&model, &s, &stats, Provenance::new(Some(14))).save(&path).unwrap();
        let (loaded, loaded_stats) = Checkpoint::load(&path).unwrap().into_model(&s).unwrap();
        assert_eq!(loaded_stats, stats);
        let q = prepared(&stats, &s, 5);
        assert_eq!(loaded.score_query(&q).unwrap(), model.score_query(&q).unwrap());

        let mut other = s.clone();
        other.item_features_fixed[0] = "rating".into();
        match Checkpoint::load(&path).unwrap().into_model(&other) {
            Err(Error::FingerprintMismatch { expected, found }) => {
                assert_eq!(expected, s.fingerprint());
                assert_eq!(found, other.fingerprint());
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn random_sir_models_rank_identically_under_scaling(seed in 0u64..10_000, n in 1usize..10, c in 1e-3f64..1e4) {
            let (s, stats, model) = setup(ModelMode::Sir, seed);
            let q = query("p", (seed % 7) as f64 * 0.3 - 1.0, 0, n);
            let mut scaled = q.clone();
            scaled.items.iter_mut().for_each(|i| i.scalevariant.iter_mut().for_each(|v| *v *= c));
            let a = model.score_query(&stats.prepare_query(&q, &s).unwrap()).unwrap();
            let b = model.score_query(&stats.prepare_query(&scaled, &s).unwrap()).unwrap();
            prop_assert!(invariance_gap(&model, &stats, &s, &q, c).unwrap() < 1e-9);
            prop_assert_eq!(rank(&a).unwrap(), rank(&b).unwrap());
        }
    }
}
