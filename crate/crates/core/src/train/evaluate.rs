use serde::{Deserialize, Serialize};

use super::metrics::{auc, pcoc, Metric};
use crate::autodiff::{Graph, PROB_CLAMP};
use crate::data::{BatchIter, Instance};
use crate::error::Result;
use crate::features::FIELD_NAMES;
use crate::model::{Mode, Model};

#[derive(Clone, Debug)]
pub struct EvalOptions {
    pub batch_size: usize,
    pub workers: usize,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self {
            batch_size: 512,
            workers: 1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioReport {
    pub scenario: usize,
    pub count: usize,
    pub positives: usize,
    pub auc: Metric,
    pub pcoc: Metric,
}

/// How often each refiner of `field` was selected for instances of `scenario`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RefinerHistogram {
    pub field: String,
    pub scenario: usize,
    pub counts: Vec<usize>,
}

impl RefinerHistogram {
    pub fn distribution(&self) -> Vec<f64> {
        let n: usize = self.counts.iter().sum();
        self.counts.iter().map(|&c| c as f64 / n.max(1) as f64).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub model: String,
    pub disabled: Vec<String>,
    pub count: usize,
    /// Mean per-instance cross-entropy.
    pub loss: f64,
    pub overall_auc: Metric,
    pub overall_pcoc: Metric,
    /// Unweighted mean of the defined per-scenario AUCs.
    pub mean_scenario_auc: Metric,
    pub scenarios: Vec<ScenarioReport>,
    pub refiner_histograms: Vec<RefinerHistogram>,
    pub warnings: Vec<String>,
}

impl EvalReport {
    pub fn scenario_auc(&self, s: usize) -> Metric {
        self.scenarios
            .iter()
            .find(|r| r.scenario == s)
            .map_or(Metric::NA, |r| r.auc)
    }

    pub fn histogram(&self, field: &str, scenario: usize) -> Option<&RefinerHistogram> {
        self.refiner_histograms
            .iter()
            .find(|h| h.field == field && h.scenario == scenario)
    }
}

struct Chunk {
    scores: Vec<f64>,
    /// Selected refiner per field, per instance.
    picks: Vec<Vec<usize>>,
}

fn run_batches(model: &Model, data: &[Instance], batches: &[Vec<usize>]) -> Result<Vec<Chunk>> {
    let mut out = Vec::with_capacity(batches.len());
    for idx in batches {
        let batch: Vec<&Instance> = idx.iter().map(|&i| &data[i]).collect();
        let mut g = Graph::new(0);
        let trace = model.forward(&mut g, &batch, Mode::Eval)?;
        let scores = g.data(trace.pred).to_vec();
        let picks = match &trace.adaptive {
            Some(af) => af
                .betas
                .iter()
                .map(|&b| {
                    let [n, k] = g.shape(b);
                    let d = g.data(b);
                    (0..n)
                        .map(|i| {
                            let row = &d[i * k..(i + 1) * k];
                            (0..k).fold(0, |best, j| if row[j] > row[best] { j } else { best })
                        })
                        .collect()
                })
                .collect(),
            None => Vec::new(),
        };
        out.push(Chunk { scores, picks });
    }
    Ok(out)
}

/// Evaluation-mode metrics. Batches may be spread over `workers` threads;
/// results are merged in batch order, so the report does not depend on the
/// worker count.
pub fn evaluate(model: &Model, data: &[Instance], opts: &EvalOptions) -> Result<EvalReport> {
    let batches: Vec<Vec<usize>> = BatchIter::new(data.len(), opts.batch_size.max(1), None).collect();
    let workers = opts.workers.max(1).min(batches.len().max(1));
    let chunks: Vec<Chunk> = if workers <= 1 {
        run_batches(model, data, &batches)?
    } else {
        let per = batches.len().div_ceil(workers);
        let parts: Vec<Result<Vec<Chunk>>> = std::thread::scope(|s| {
            let handles: Vec<_> = batches
                .chunks(per)
                .map(|part| s.spawn(move || run_batches(model, data, part)))
                .collect();
            handles
                .into_iter()
                .map(|h| h.join().expect("evaluation worker panicked"))
                .collect()
        });
        let mut all = Vec::with_capacity(batches.len());
        for p in parts {
            all.extend(p?);
        }
        all
    };

    let n_s = model.config.schema.scenarios;
    let mut scores = Vec::with_capacity(data.len());
    let mut field_picks: Vec<Vec<usize>> = Vec::new();
    for ch in &chunks {
        scores.extend_from_slice(&ch.scores);
        if field_picks.is_empty() {
            field_picks = vec![Vec::with_capacity(data.len()); ch.picks.len()];
        }
        for (f, p) in ch.picks.iter().enumerate() {
            field_picks[f].extend_from_slice(p);
        }
    }
    let labels: Vec<u8> = data.iter().map(|i| i.label).collect();
    let loss = scores
        .iter()
        .zip(&labels)
        .map(|(&p, &y)| {
            let q = p.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP);
            if y == 1 {
                -q.ln()
            } else {
                -(1.0 - q).ln()
            }
        })
        .sum::<f64>()
        / data.len().max(1) as f64;

    let mut scenarios = Vec::new();
    let mut warnings = Vec::new();
    for s in 0..n_s {
        let idx: Vec<usize> = (0..data.len()).filter(|&i| data[i].scenario == s).collect();
        if idx.is_empty() {
            warnings.push(format!("scenario {s} absent from data; omitted"));
            continue;
        }
        let sc: Vec<f64> = idx.iter().map(|&i| scores[i]).collect();
        let lb: Vec<u8> = idx.iter().map(|&i| labels[i]).collect();
        let r = ScenarioReport {
            scenario: s,
            count: idx.len(),
            positives: lb.iter().filter(|&&y| y == 1).count(),
            auc: auc(&sc, &lb),
            pcoc: pcoc(&sc, &lb),
        };
        if r.auc.is_na() {
            warnings.push(format!("scenario {s} has a single label class; AUC n/a"));
        }
        scenarios.push(r);
    }
    let defined: Vec<f64> = scenarios.iter().filter_map(|r| r.auc.value()).collect();
    let mean_scenario_auc = if defined.is_empty() {
        Metric::NA
    } else {
        Metric(Some(defined.iter().sum::<f64>() / defined.len() as f64))
    };

    let mut refiner_histograms = Vec::new();
    if let Some(net) = model.maria() {
        if let Some(fr) = &net.adaptive.refine {
            for (f, refiner) in fr.fields.iter().enumerate() {
                for r in &scenarios {
                    let mut counts = vec![0; refiner.count()];
                    for (i, inst) in data.iter().enumerate() {
                        if inst.scenario == r.scenario {
                            counts[field_picks[f][i]] += 1;
                        }
                    }
                    refiner_histograms.push(RefinerHistogram {
                        field: FIELD_NAMES[f].to_string(),
                        scenario: r.scenario,
                        counts,
                    });
                }
            }
        }
    }

    Ok(EvalReport {
        model: model.config.kind.name().to_string(),
        disabled: model.config.disable.names().iter().map(|s| s.to_string()).collect(),
        count: data.len(),
        loss,
        overall_auc: auc(&scores, &labels),
        overall_pcoc: pcoc(&scores, &labels),
        mean_scenario_auc,
        scenarios,
        refiner_histograms,
        warnings,
    })
}
