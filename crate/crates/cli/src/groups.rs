use std::collections::HashMap;

use nat2::{run_pipeline, DataMatrix, KPolicy, SelectionConfig, TestConfig};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::input::{Group, Table};
use crate::CliError;

/// One line of the batch output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupRow {
    pub group: String,
    /// Columns listed for the group.
    pub listed: usize,
    /// Listed columns present in the input.
    pub size: usize,
    pub tested: bool,
    pub reason: Option<String>,
    pub k: Option<usize>,
    pub statistic: Option<f64>,
    pub z_score: Option<f64>,
    pub p_value: Option<f64>,
    /// Bonferroni threshold the p-value is compared with.
    pub threshold: f64,
    pub significant: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchReport {
    pub alpha: f64,
    pub correction: String,
    /// Number of groups actually tested.
    pub tested: usize,
    /// alpha / tested.
    pub threshold: f64,
    pub groups: Vec<GroupRow>,
}

pub struct BatchOptions {
    pub alpha: f64,
    pub min_size: usize,
    pub folds: usize,
    pub seed: u64,
}

fn excluded(group: &Group, size: usize, reason: String) -> GroupRow {
    GroupRow {
        group: group.name.clone(),
        listed: group.columns.len(),
        size,
        tested: false,
        reason: Some(reason),
        k: None,
        statistic: None,
        z_score: None,
        p_value: None,
        threshold: 0.0,
        significant: false,
    }
}

/// Tests each group's columns with a data-driven band width and applies the
/// Bonferroni threshold. Rows come back sorted by group name.
pub fn run_batch(
    table: &Table,
    groups: &[Group],
    opts: &BatchOptions,
) -> Result<BatchReport, CliError> {
    let index: HashMap<&str, usize> = table
        .names
        .iter()
        .enumerate()
        .map(|(j, s)| (s.as_str(), j))
        .collect();
    let n = table.rows();
    let data = DataMatrix::new(table.data.clone())?;
    let cfg = TestConfig {
        alpha: opts.alpha,
        force_k: false,
    };

    let mut rows: Vec<GroupRow> = groups
        .par_iter()
        .map(|group| {
            let mut cols: Vec<usize> = group
                .columns
                .iter()
                .filter_map(|c| index.get(c.as_str()).copied())
                .collect();
            cols.sort_unstable();
            cols.dedup();
            if cols.is_empty() {
                return Ok(excluded(
                    group,
                    0,
                    "no listed column is present in the input".into(),
                ));
            }
            if cols.len() < opts.min_size {
                let reason = format!(
                    "{} columns, below the minimum size {}",
                    cols.len(),
                    opts.min_size
                );
                return Ok(excluded(group, cols.len(), reason));
            }
            let x = data.select_cols(&cols)?;
            let policy = KPolicy::Auto(SelectionConfig {
                folds: opts.folds,
                ..SelectionConfig::for_sample_size(n, opts.seed)
            });
            match run_pipeline(&x, &policy, &cfg) {
                Ok(r) => Ok(GroupRow {
                    group: group.name.clone(),
                    listed: group.columns.len(),
                    size: cols.len(),
                    tested: true,
                    reason: None,
                    k: Some(r.report.k),
                    statistic: Some(r.report.statistic),
                    z_score: Some(r.report.z_score),
                    p_value: Some(r.report.p_value),
                    threshold: 0.0,
                    significant: false,
                }),
                Err(e) if e.is_input_error() => Err(CliError::from(e)),
                Err(e) => Ok(excluded(
                    group,
                    cols.len(),
                    format!("numerical failure: {e}"),
                )),
            }
        })
        .collect::<Result<_, CliError>>()?;
    rows.sort_by(|a, b| a.group.cmp(&b.group));

    let tested = rows.iter().filter(|r| r.tested).count();
    let threshold = if tested == 0 {
        0.0
    } else {
        opts.alpha / tested as f64
    };
    for row in &mut rows {
        row.threshold = threshold;
        row.significant = row.p_value.is_some_and(|p| p <= threshold);
    }
    Ok(BatchReport {
        alpha: opts.alpha,
        correction: "bonferroni".into(),
        tested,
        threshold,
        groups: rows,
    })
}
