//! Feature schema, query records, dataset files, standardization and splits.

mod io;
mod record;
mod schema;
mod split;
mod standardize;

pub use io::{load_dataset, read_dataset, save_dataset, write_dataset};
pub use record::{Dataset, ItemRecord, QueryRecord, MAX_ITEMS_PER_QUERY};
pub use schema::{FeatureKind, FeatureSchema, QueryFeature};
pub use split::{holdout_sizes, split_holdout, HoldoutSplit, TEST_FRACTION, VALIDATION_FRACTION};
pub use standardize::{
    apply_standardization, fit_standardization, FeatureStats, PreparedDataset, PreparedQuery,
    StandardizationStats,
};

#[cfg(test)]
pub(crate) mod fixtures {
    use super::*;

    pub fn schema() -> FeatureSchema {
        FeatureSchema::new(
            vec![QueryFeature::numeric("q0"), QueryFeature::categorical("pos", 3, 2)],
            vec!["stars".into()],
            vec!["price".into(), "discount".into()],
        )
        .unwrap()
    }

    pub fn query(id: &str, q0: f64, booked: usize, n: usize) -> QueryRecord {
        QueryRecord {
            query_id: id.into(),
            query_values: vec![q0, 1.0],
            num_nights: 2,
            exchange_rate: 1.5,
            items: (0..n)
                .map(|j| ItemRecord {
                    item_id: format!("{id}-{j}"),
                    fixed: vec![1.0 + j as f64],
                    scalevariant: vec![100.0 + 10.0 * j as f64, 5.0 + j as f64],
                    label: u8::from(j == booked),
                })
                .collect(),
        }
    }

    pub fn dataset(n: usize) -> Dataset {
        Dataset::new(
            (0..n)
                .map(|i| query(&format!("q{i}"), i as f64 * 0.5 - 1.0, i % 3, 3 + i % 4))
                .collect(),
        )
    }
}

#[cfg(test)]
mod tests {
    use super::fixtures::*;
    use super::*;
    use crate::Error;
    use proptest::prelude::*;
    use std::collections::HashSet;

    #[test]
    fn empty_file_is_empty_dataset() {
        let ds = read_dataset("".as_bytes(), &schema()).unwrap();
        assert!(ds.is_empty());
    }

    #[test]
    fn two_booked_items_rejected() {
        let mut q = query("dup", 0.0, 0, 3);
        q.items[2].label = 1;
        let mut buf = Vec::new();
        write_dataset(&mut buf, &Dataset::new(vec![q]), &schema()).unwrap();
        let err = read_dataset(buf.as_slice(), &schema()).unwrap_err();
        match err {
            Error::Validation { query_id, rule } => {
                assert_eq!(query_id, "dup");
                assert_eq!(rule, "multiple booked items");
            }
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn malformed_line_reports_line_number() {
        let mut buf = Vec::new();
        write_dataset(&mut buf, &dataset(2), &schema()).unwrap();
        buf.extend_from_slice(b"{not json\n");
        match read_dataset(buf.as_slice(), &schema()).unwrap_err() {
            Error::Parse { line, .. } => assert_eq!(line, 3),
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn validation_rules() {
        let s = schema();
        let mut q = query("a", 0.0, 0, 3);
        q.items[1].scalevariant[0] = 0.0;
        assert!(q.validate(&s).is_err());
        let mut q = query("b", 0.0, 0, 3);
        q.query_values[1] = 3.0;
        assert!(q.validate(&s).is_err());
        let q = query("c", 0.0, 0, 26);
        assert!(q.validate(&s).is_err());
        let mut q = query("d", 0.0, 0, 3);
        q.items[0].label = 0;
        assert!(q.validate(&s).is_err());
        let mut q = query("e", 0.0, 0, 3);
        q.items[0].fixed[0] = -1.0;
        assert!(q.validate(&s).is_err());
        assert!(query("ok", 0.0, 0, 25).validate(&s).is_ok());
    }

    #[test]
    fn wire_format_layout() {
        let mut buf = Vec::new();
        write_dataset(&mut buf, &Dataset::new(vec![query("x", 0.5, 1, 2)]), &schema()).unwrap();
        let line = String::from_utf8(buf).unwrap();
        assert_eq!(
            line.trim_end(),
            r#"{"query_id":"x","query":{"q0":0.5,"pos":1},"num_nights":2,"exchange_rate":1.5,"items":[{"item_id":"x-0","fixed":{"stars":1.0},"scalevariant":{"price":100.0,"discount":5.0},"label":0},{"item_id":"x-1","fixed":{"stars":2.0},"scalevariant":{"price":110.0,"discount":6.0},"label":1}]}"#
        );
    }

    #[test]
    fn unknown_feature_rejected() {
        let text = r#"{"query_id":"x","query":{"q0":0.5,"pos":1,"extra":2.0},"num_nights":2,"exchange_rate":1.5,"items":[]}"#;
        let err = read_dataset(text.as_bytes(), &schema()).unwrap_err().to_string();
        assert!(err.contains("extra"), "{err}");
    }

    #[test]
    fn constant_feature_has_zero_variance() {
        let ds = Dataset::new((0..4).map(|i| query(&format!("c{i}"), 5.0, 0, 3)).collect());
        let err = fit_standardization(&ds, &schema()).unwrap_err().to_string();
        assert!(err.contains("q0"), "{err}");
    }

    #[test]
    fn symmetric_feature_standardizes_to_unit() {
        let ds = Dataset::new(vec![query("a", -1.0, 0, 3), query("b", 1.0, 0, 3)]);
        let stats = fit_standardization(&ds, &schema()).unwrap();
        assert_eq!(stats.query[0].mean, 0.0);
        assert_eq!(stats.query[0].std, 1.0);
    }

    #[test]
    fn stats_match_two_pass_oracle() {
        let ds = dataset(37);
        let stats = fit_standardization(&ds, &schema()).unwrap();
        let two_pass = |xs: Vec<f64>| {
            let n = xs.len() as f64;
            let mean = xs.iter().sum::<f64>() / n;
            let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
            (mean, var.sqrt())
        };
        let (m, s) = two_pass(ds.iter().map(|q| q.query_values[0]).collect());
        assert!((stats.query[0].mean - m).abs() < 1e-12 && (stats.query[0].std - s).abs() < 1e-12);
        let (m, s) = two_pass(ds.iter().flat_map(|q| q.items.iter().map(|i| i.scalevariant[0])).collect());
        assert!((stats.scalevariant[0].mean - m).abs() < 1e-12 && (stats.scalevariant[0].std - s).abs() < 1e-12);
    }

    #[test]
    fn standardization_values_and_raw_wide_path() {
        let ds = dataset(12);
        let s = schema();
        let stats = fit_standardization(&ds, &s).unwrap();
        let mut probe = query("probe", stats.query[0].mean, 0, 2);
        probe.query_values[0] = stats.query[0].mean;
        let p = stats.prepare_query(&probe, &s).unwrap();
        assert_eq!(p.query_numeric[0], 0.0);
        probe.query_values[0] = stats.query[0].mean + stats.query[0].std;
        let p = stats.prepare_query(&probe, &s).unwrap();
        assert!((p.query_numeric[0] - 1.0).abs() < 1e-15);

        let prepared = apply_standardization(&ds, &stats, &s).unwrap();
        for (raw, prep) in ds.iter().zip(&prepared.queries) {
            for (j, item) in raw.items.iter().enumerate() {
                assert_eq!(&prep.wide_raw.row(j)[1..], item.scalevariant.as_slice());
                assert_eq!(prep.wide_raw.row(j)[0], item.fixed[0]);
            }
        }
    }

    #[test]
    fn stats_schema_mismatch() {
        let ds = dataset(12);
        let mut stats = fit_standardization(&ds, &schema()).unwrap();
        stats.fixed[0].name = "rating".into();
        assert!(matches!(apply_standardization(&ds, &stats, &schema()), Err(Error::Schema(_))));
    }

    #[test]
    fn split_sizes_for_100() {
        let split = split_holdout(&dataset(100), 3).unwrap();
        assert_eq!(
            (split.train.len(), split.validation.len(), split.test.len()),
            (63, 7, 30)
        );
        assert!(split_holdout(&dataset(9), 3).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn split_is_a_deterministic_partition(n in 10usize..300, seed in 0u64..1000) {
            let ds = dataset(n);
            let a = split_holdout(&ds, seed).unwrap();
            let b = split_holdout(&ds, seed).unwrap();
            prop_assert_eq!(&a, &b);
            let ids: Vec<&str> = a.train.iter().chain(a.validation.iter()).chain(a.test.iter())
                .map(|q| q.query_id.as_str()).collect();
            prop_assert_eq!(ids.len(), n);
            let unique: HashSet<&str> = ids.iter().copied().collect();
            prop_assert_eq!(unique.len(), n);
            let nf = n as f64;
            prop_assert!((a.test.len() as f64 - 0.30 * nf).abs() <= 1.0);
            prop_assert!((a.validation.len() as f64 - 0.07 * nf).abs() <= 1.0);
            prop_assert!((a.train.len() as f64 - 0.63 * nf).abs() <= 1.0);
        }
    }
}
