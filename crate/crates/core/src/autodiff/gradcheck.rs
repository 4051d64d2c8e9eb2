//! Central finite-difference verification of analytic gradients.
//!
//! Every evaluation rebuilds the graph from scratch with the same seed, so
//! Gumbel noise drawn during the forward pass is identical across the
//! analytic pass and both perturbed passes. Perturbations that flip the sign
//! of any ReLU input are skipped (the loss is not differentiable across the
//! kink) and counted. Outputs of `stop_gradient` are likewise held at their
//! unperturbed values, so the numeric derivative sees the same frozen
//! branches as the analytic one.

use std::collections::BTreeMap;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::graph::{Graph, Primitive, Var};
use super::params::ParamStore;
use crate::error::{Error, Result};

#[derive(Clone, Debug)]
pub struct GradCheckOptions {
    pub eps: f64,
    pub tolerance: f64,
    /// Denominator floor of the relative error.
    pub floor: f64,
    /// Entries checked per parameter tensor; larger tensors are subsampled.
    pub max_entries: usize,
    pub seed: u64,
    /// Broken backward rule to plant in the analytic pass (harness self-test).
    pub fault: Option<(Primitive, f64)>,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        Self {
            eps: 1e-5,
            tolerance: 1e-4,
            floor: 1e-5,
            max_entries: 64,
            seed: 0,
            fault: None,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct ParamCheck {
    pub name: String,
    pub checked: usize,
    pub skipped: usize,
    pub max_rel_err: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct GroupCheck {
    pub group: String,
    pub tensors: usize,
    pub checked: usize,
    pub skipped: usize,
    pub max_rel_err: f64,
    pub passed: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct GradCheckReport {
    pub tolerance: f64,
    pub eps: f64,
    pub groups: Vec<GroupCheck>,
    pub params: Vec<ParamCheck>,
    pub passed: bool,
}

impl GradCheckReport {
    pub fn failing_groups(&self) -> Vec<&str> {
        self.groups
            .iter()
            .filter(|g| !g.passed)
            .map(|g| g.group.as_str())
            .collect()
    }

    /// Human-readable table, one line per group.
    pub fn render(&self) -> String {
        let mut out = String::new();
        let width = self.groups.iter().map(|g| g.group.len()).max().unwrap_or(5).max(5);
        out.push_str(&format!(
            "{:<width$}  {:>7}  {:>7}  {:>7}  {:>12}  status\n",
            "group", "tensors", "checked", "skipped", "max_rel_err"
        ));
        for g in &self.groups {
            out.push_str(&format!(
                "{:<width$}  {:>7}  {:>7}  {:>7}  {:>12.3e}  {}\n",
                g.group,
                g.tensors,
                g.checked,
                g.skipped,
                g.max_rel_err,
                if g.passed { "pass" } else { "FAIL" }
            ));
        }
        out.push_str(&format!(
            "tolerance {:.0e}, eps {:.0e}: {}\n",
            self.tolerance,
            self.eps,
            if self.passed { "PASS" } else { "FAIL" }
        ));
        out
    }
}

/// Relative error with a denominator floor.
pub fn rel_err(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

/// Parameter group of a tensor name: the text before the first `.`.
pub fn group_of(name: &str) -> &str {
    name.split('.').next().unwrap_or(name)
}

/// Checks every parameter in `store` against central differences of the
/// scalar produced by `forward`.
pub fn check_params<F>(store: &mut ParamStore, mut forward: F, opts: &GradCheckOptions) -> Result<GradCheckReport>
where
    F: FnMut(&ParamStore, &mut Graph) -> Result<Var>,
{
    store.zero_grads();
    let mut g = Graph::new(opts.seed);
    if let Some((kind, factor)) = opts.fault {
        g.inject_backward_fault(kind, factor);
    }
    let loss = forward(store, &mut g)?;
    let base_pattern = g.relu_pattern();
    let frozen = g.frozen_values().to_vec();
    g.backward(loss)?;
    g.accumulate_param_grads(store);
    drop(g);

    let mut eval = |store: &ParamStore| -> Result<(f64, Vec<bool>)> {
        let mut g = Graph::new(opts.seed);
        g.replay_frozen(frozen.clone());
        let loss = forward(store, &mut g)?;
        let value = g.scalar(loss);
        if !value.is_finite() {
            return Err(Error::invalid("gradcheck: non-finite loss"));
        }
        Ok((value, g.relu_pattern()))
    };

    let mut pick = ChaCha8Rng::seed_from_u64(opts.seed ^ 0x9e37_79b9_7f4a_7c15);
    let ids: Vec<_> = store.iter().map(|(id, _)| id).collect();
    let mut params = Vec::with_capacity(ids.len());
    for id in ids {
        let (name, entries) = {
            let p = store.get(id);
            (
                p.name.clone(),
                entries_to_check(&p.grad, p.shape, opts.max_entries, &mut pick),
            )
        };
        let mut check = ParamCheck {
            name,
            checked: 0,
            skipped: 0,
            max_rel_err: 0.0,
        };
        for i in entries {
            let orig = store.get(id).data[i];
            let analytic = store.get(id).grad[i];
            store.get_mut(id).data[i] = orig + opts.eps;
            let plus = eval(store);
            store.get_mut(id).data[i] = orig - opts.eps;
            let minus = eval(store);
            store.get_mut(id).data[i] = orig;
            let ((lp, pp), (lm, pm)) = (plus?, minus?);
            if pp != base_pattern || pm != base_pattern {
                check.skipped += 1;
                continue;
            }
            let numeric = (lp - lm) / (2.0 * opts.eps);
            check.checked += 1;
            check.max_rel_err = check.max_rel_err.max(rel_err(analytic, numeric, opts.floor));
        }
        params.push(check);
    }
    store.zero_grads();

    let mut by_group: BTreeMap<String, GroupCheck> = BTreeMap::new();
    for p in &params {
        let e = by_group
            .entry(group_of(&p.name).to_string())
            .or_insert_with(|| GroupCheck {
                group: group_of(&p.name).to_string(),
                tensors: 0,
                checked: 0,
                skipped: 0,
                max_rel_err: 0.0,
                passed: true,
            });
        e.tensors += 1;
        e.checked += p.checked;
        e.skipped += p.skipped;
        e.max_rel_err = e.max_rel_err.max(p.max_rel_err);
    }
    let mut groups: Vec<GroupCheck> = by_group.into_values().collect();
    for gr in &mut groups {
        gr.passed = gr.max_rel_err <= opts.tolerance && gr.checked > 0;
    }
    let passed = groups.iter().all(|g| g.passed);
    Ok(GradCheckReport {
        tolerance: opts.tolerance,
        eps: opts.eps,
        groups,
        params,
        passed,
    })
}

/// Entry indices to probe. Embedding-like tables mostly have zero-gradient
/// rows, so touched entries are preferred, topped up with untouched ones.
fn entries_to_check(grad: &[f64], shape: [usize; 2], max: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let n = shape[0] * shape[1];
    if n <= max {
        return (0..n).collect();
    }
    let touched: Vec<usize> = (0..n).filter(|&i| grad[i] != 0.0).collect();
    let untouched: Vec<usize> = (0..n).filter(|&i| grad[i] == 0.0).collect();
    let take_t = touched.len().min(max * 3 / 4).max(max.saturating_sub(untouched.len()));
    let take_t = take_t.min(touched.len());
    let take_u = (max - take_t).min(untouched.len());
    let mut out: Vec<usize> = sample(rng, touched.len(), take_t)
        .into_iter()
        .map(|i| touched[i])
        .collect();
    out.extend(sample(rng, untouched.len(), take_u).into_iter().map(|i| untouched[i]));
    out.sort_unstable();
    out
}

/// Max relative error between analytic and numeric gradients of `f` with
/// respect to free inputs built from `inputs` (shape, data) pairs.
// Indices, not iterators: `work` is rewritten inside the loop.
#[allow(clippy::needless_range_loop)]
pub fn check_inputs<F>(inputs: &[([usize; 2], Vec<f64>)], eps: f64, floor: f64, mut f: F) -> Result<f64>
where
    F: FnMut(&mut Graph, &[Var]) -> Result<Var>,
{
    let build = |g: &mut Graph, data: &[([usize; 2], Vec<f64>)]| -> Result<Vec<Var>> {
        data.iter().map(|(s, d)| g.input(*s, d.clone())).collect()
    };
    let mut g = Graph::new(0);
    let vars = build(&mut g, inputs)?;
    let loss = f(&mut g, &vars)?;
    let base_pattern = g.relu_pattern();
    let frozen = g.frozen_values().to_vec();
    g.backward(loss)?;
    let grads: Vec<Vec<f64>> = vars.iter().map(|&v| g.grad(v)).collect();

    let mut work = inputs.to_vec();
    let mut worst = 0.0f64;
    for k in 0..work.len() {
        for i in 0..work[k].1.len() {
            let orig = work[k].1[i];
            let mut at = |x: f64, work: &mut Vec<([usize; 2], Vec<f64>)>| -> Result<(f64, Vec<bool>)> {
                work[k].1[i] = x;
                let mut g = Graph::new(0);
                g.replay_frozen(frozen.clone());
                let vars = build(&mut g, work)?;
                let l = f(&mut g, &vars)?;
                Ok((g.scalar(l), g.relu_pattern()))
            };
            let (lp, pp) = at(orig + eps, &mut work)?;
            let (lm, pm) = at(orig - eps, &mut work)?;
            work[k].1[i] = orig;
            if pp != base_pattern || pm != base_pattern {
                continue;
            }
            let numeric = (lp - lm) / (2.0 * eps);
            worst = worst.max(rel_err(grads[k][i], numeric, floor));
        }
    }
    Ok(worst)
}
