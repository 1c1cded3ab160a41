use std::fmt::Write as _;

use super::ExperimentReport;
use crate::error::Result;
use crate::scoring::ModelMode;

fn csv_name(column: &str) -> String {
    column.to_ascii_lowercase().replace(' ', "_")
}

fn csv_field(value: &str) -> String {
    if value.contains([',', '"', '\n']) {
        format!("\"{}\"", value.replace('"', "\"\""))
    } else {
        value.to_string()
    }
}

impl ExperimentReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for line in self.provenance.header_lines("#") {
            out.push_str(&line);
            out.push('\n');
        }
        let mut header = vec!["algorithm".to_string(), "loss".into(), "mode".into()];
        header.extend(self.columns.iter().map(|c| csv_name(c)));
        header.extend(self.columns[1..].iter().map(|c| format!("p_{}", csv_name(c))));
        header.extend(
            [
                "invariance_gap",
                "last_case_ranking_change",
                "best_epoch",
                "epochs",
                "stop_reason",
                "error",
            ]
            .map(String::from),
        );
        out.push_str(&header.join(","));
        out.push('\n');

        for row in &self.rows {
            let mut fields = vec![csv_field(&row.label()), row.loss.to_string(), row.mode.to_string()];
            match &row.metrics {
                Some(m) => {
                    fields.push(m.validation_ndcg.to_string());
                    fields.push(m.test_ndcg.to_string());
                    fields.extend(m.case_ndcg.iter().map(f64::to_string));
                }
                None => fields.extend(self.columns.iter().map(|_| String::new())),
            }
            for column in &self.columns[1..] {
                let p = match row.mode {
                    ModelMode::Sir => self.comparison(row.loss, column).map(|c| c.p_value.to_string()),
                    ModelMode::DeepOnly => None,
                };
                fields.push(p.unwrap_or_default());
            }
            match &row.metrics {
                Some(m) => {
                    fields.push(m.invariance_gap.to_string());
                    fields.push(m.last_case_ranking_change.to_string());
                    fields.push(m.history.best_epoch.to_string());
                    fields.push(m.history.epochs.len().to_string());
                    fields.push(m.history.stop_reason.as_str().to_string());
                }
                None => fields.extend(std::iter::repeat_n(String::new(), 5)),
            }
            fields.push(csv_field(row.error.as_deref().unwrap_or("")));
            out.push_str(&fields.join(","));
            out.push('\n');
        }
        out
    }

    /// Aligned table: one row per model, one column per evaluation set.
    /// SIR cells are starred when they beat the baseline significantly.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for line in self.provenance.header_lines("#") {
            let _ = writeln!(out, "{line}");
        }
        let name_width = self.rows.iter().map(|r| r.label().len()).max().unwrap_or(9).max(9);
        let _ = write!(out, "{:<name_width$}", "Algorithm");
        for c in &self.columns {
            let _ = write!(out, "  {c:>10}");
        }
        let _ = writeln!(out, "  {:>12}", format!("Gap(x{})", self.config.invariance_scale));

        for row in &self.rows {
            let _ = write!(out, "{:<name_width$}", row.label());
            let Some(m) = &row.metrics else {
                let _ = writeln!(out, "  failed: {}", row.error.as_deref().unwrap_or("unknown error"));
                continue;
            };
            let _ = write!(out, "  {:>10.4}", m.validation_ndcg);
            let values = std::iter::once(m.test_ndcg).chain(m.case_ndcg.iter().copied());
            for (value, column) in values.zip(&self.columns[1..]) {
                let star = row.mode == ModelMode::Sir
                    && self.comparison(row.loss, column).is_some_and(|c| c.significant);
                let cell = format!("{value:.4}{}", if star { "*" } else { " " });
                let _ = write!(out, "  {cell:>10}");
            }
            let _ = writeln!(out, "  {:>12.3e}", m.invariance_gap);
        }

        let _ = writeln!(out);
        let _ = writeln!(
            out,
            "* one-sided Welch p < {} ({} over {} comparisons), SIR above baseline",
            self.significance_threshold, self.config.alpha, self.num_comparisons
        );
        let _ = writeln!(
            out,
            "split {}/{}/{} queries (train/validation/test); random ranker test NDCG {:.4}",
            self.split.train, self.split.validation, self.split.test, self.random_ranker_ndcg
        );
        if let Some(bound) = self.ideal_ndcg_bound {
            let _ = writeln!(out, "true-utility ranker test NDCG {bound:.4}");
        }
        if !self.comparisons.is_empty() {
            let _ = writeln!(out);
            let _ = writeln!(out, "p-values");
            let mut current = None;
            for c in &self.comparisons {
                if current != Some(c.loss) {
                    if current.is_some() {
                        let _ = writeln!(out);
                    }
                    let _ = write!(out, "{:<name_width$}", c.loss.display_name());
                    current = Some(c.loss);
                }
                let _ = write!(out, "  {}={:.3e}{}", c.column, c.p_value, if c.degenerate { "(degenerate)" } else { "" });
            }
            let _ = writeln!(out);
        }
        out
    }
}
