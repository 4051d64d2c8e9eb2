use serde::{Deserialize, Serialize};

use super::evaluate::{evaluate, EvalOptions, EvalReport};
use super::trainer::{train, TrainConfig};
use crate::data::Instance;
use crate::error::{Error, Result};
use crate::model::{Model, ModelConfig, ModelKind};

/// Ablation variants: the full model and one removed module each.
pub const VARIANTS: [&str; 7] = ["full", "fs", "fr", "fcm", "nl", "st", "gs"];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub variant: String,
    pub label: String,
    pub param_count: usize,
    pub final_train_loss: Option<f64>,
    /// Σ over scenarios of (variant AUC − full AUC); negative when the
    /// variant is worse.
    pub total_gain: f64,
    pub report: EvalReport,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationTable {
    pub scenarios: Vec<usize>,
    pub rows: Vec<AblationRow>,
}

fn label(variant: &str) -> String {
    if variant == "full" {
        "MARIA".into()
    } else {
        format!("w/o {}", variant.to_uppercase())
    }
}

/// Trains every variant with identical seeds and data and evaluates it on
/// `test`. The full model is always trained, as the reference row.
pub fn ablate(
    base: &ModelConfig,
    train_data: &[Instance],
    test: &[Instance],
    variants: &[String],
    tcfg: &TrainConfig,
) -> Result<AblationTable> {
    if base.kind != ModelKind::Maria {
        return Err(Error::config("baseline", "ablation applies to the maria model only"));
    }
    for v in variants {
        if !VARIANTS.contains(&v.as_str()) {
            return Err(Error::config(
                "variants",
                format!("unknown variant `{v}` (full|fs|fr|fcm|nl|st|gs)"),
            ));
        }
    }
    let mut order: Vec<&str> = vec!["full"];
    for v in variants {
        if !order.contains(&v.as_str()) {
            order.push(v);
        }
    }
    let opts = EvalOptions {
        batch_size: tcfg.batch_size,
        workers: tcfg.workers,
    };
    let mut rows: Vec<AblationRow> = Vec::with_capacity(order.len());
    for v in order {
        let mut cfg = base.clone();
        if v != "full" {
            cfg.disable.set(v)?;
        }
        let mut model = Model::new(cfg)?;
        let outcome = train(&mut model, train_data, tcfg)?;
        let report = evaluate(&model, test, &opts)?;
        rows.push(AblationRow {
            variant: v.to_string(),
            label: label(v),
            param_count: model.param_count(),
            final_train_loss: outcome.epochs.last().map(|e| e.mean_loss),
            total_gain: 0.0,
            report,
        });
    }
    let full = rows[0].report.clone();
    let scenarios: Vec<usize> = full.scenarios.iter().map(|s| s.scenario).collect();
    for row in &mut rows {
        row.total_gain = scenarios
            .iter()
            .filter_map(|&s| Some(row.report.scenario_auc(s).value()? - full.scenario_auc(s).value()?))
            .sum();
    }
    Ok(AblationTable { scenarios, rows })
}

impl AblationTable {
    /// Aligned plain-text table.
    pub fn render(&self) -> String {
        let mut head = vec!["variant".to_string()];
        head.extend(self.scenarios.iter().map(|s| format!("S{s} AUC")));
        head.extend(["mean AUC", "total gain", "params"].map(String::from));
        let mut lines = vec![head];
        for r in &self.rows {
            let mut line = vec![r.label.clone()];
            line.extend(
                self.scenarios
                    .iter()
                    .map(|&s| format!("{:.4}", r.report.scenario_auc(s))),
            );
            line.push(format!("{:.4}", r.report.mean_scenario_auc));
            line.push(format!("{:+.4}", r.total_gain));
            line.push(r.param_count.to_string());
            lines.push(line);
        }
        let cols = lines[0].len();
        let widths: Vec<usize> = (0..cols)
            .map(|c| lines.iter().map(|l| l[c].len()).max().unwrap_or(0))
            .collect();
        let mut out = String::new();
        for (i, l) in lines.iter().enumerate() {
            let cells: Vec<String> = l
                .iter()
                .enumerate()
                .map(|(c, s)| {
                    if c == 0 {
                        format!("{s:<w$}", w = widths[c])
                    } else {
                        format!("{s:>w$}", w = widths[c])
                    }
                })
                .collect();
            out.push_str(cells.join("  ").trim_end());
            out.push('\n');
            if i == 0 {
                out.push_str(&"-".repeat(widths.iter().sum::<usize>() + 2 * (cols - 1)));
                out.push('\n');
            }
        }
        out
    }
}
