use rand::Rng;

use super::config::ModelConfig;
use super::encoder::InputEncoder;
use crate::autodiff::{Graph, ParamId, ParamStore, Var};
use crate::error::{Error, Result};
use crate::features::{AdaptiveFeatures, Correlation, FeatureScaler, Refinement};
use crate::nn::{Activation, Fcn};

/// Experts mixed by a scenario gate, or a single expert when the gate is removed.
#[derive(Clone, Debug)]
pub struct Moe {
    pub experts: Vec<Fcn>,
    /// `[d_s, N_e]`, no bias. `None` for a single ungated expert.
    pub gate: Option<ParamId>,
}

impl Moe {
    pub fn output_dim(&self) -> usize {
        self.experts[0].output_dim()
    }
}

/// `h_N = Σ_j g_j f_j(Q_f)` with `g = softmax(e_s W_g)`. Returns `(h_N, g)`.
pub fn moe_forward(g: &mut Graph, store: &ParamStore, q_f: Var, e_s: Var, moe: &Moe) -> Result<(Var, Option<Var>)> {
    let Some(gate) = moe.gate else {
        return Ok((moe.experts[0].forward(g, store, q_f)?, None));
    };
    let w = g.param(store, gate);
    if g.shape(w)[1] != moe.experts.len() {
        return Err(Error::shape("moe_forward", &g.shape(w), &[moe.experts.len()]));
    }
    let logits = g.matmul(e_s, w)?;
    let weights = g.softmax(logits);
    let mut acc = None;
    for (j, ex) in moe.experts.iter().enumerate() {
        let f = ex.forward(g, store, q_f)?;
        let gj = g.slice_cols(weights, j, 1)?;
        let term = g.mul_col(f, gj)?;
        acc = Some(match acc {
            None => term,
            Some(a) => g.add(a, term)?,
        });
    }
    Ok((acc.expect("at least one expert"), Some(weights)))
}

/// `α_s = 1/(N_s − 1) Σ_{j≠s} e_s·e_j` for every scenario: `[N_s, 1]`.
/// A single scenario has `α = 0`.
pub fn coupling_coeff(g: &mut Graph, table: Var) -> Result<Var> {
    let n = g.rows(table);
    if n < 2 {
        return g.constant([n, 1], vec![0.0; n]);
    }
    let t = g.transpose(table);
    let gram = g.matmul(table, t)?;
    let w = 1.0 / (n - 1) as f64;
    let mask: Vec<f64> = (0..n * n).map(|k| if k / n == k % n { 0.0 } else { w }).collect();
    let mask = g.constant([n, n], mask)?;
    let off = g.mul(gram, mask)?;
    Ok(g.sum_rows(off))
}

/// Applies `f(s, rows_of_s)` to each scenario group of `x` and restores the
/// original row order. Scenarios absent from the batch are never touched.
pub fn route<F>(g: &mut Graph, x: Var, scenarios: &[usize], count: usize, mut f: F) -> Result<Var>
where
    F: FnMut(&mut Graph, usize, Var) -> Result<Var>,
{
    let mut order = Vec::with_capacity(scenarios.len());
    let mut outs = Vec::new();
    for s in 0..count {
        let idx: Vec<usize> = (0..scenarios.len()).filter(|&i| scenarios[i] == s).collect();
        if idx.is_empty() {
            continue;
        }
        let rows = g.gather_rows(x, &idx)?;
        outs.push(f(g, s, rows)?);
        order.extend(idx);
    }
    if outs.len() == 1 && order.iter().enumerate().all(|(k, &i)| k == i) {
        return Ok(outs[0]);
    }
    let cat = g.concat_rows(&outs)?;
    let mut inverse = vec![0; order.len()];
    for (k, &i) in order.iter().enumerate() {
        inverse[i] = k;
    }
    g.gather_rows(cat, &inverse)
}

/// MARIA above the input encoder.
#[derive(Clone, Debug)]
pub struct MariaNet {
    pub adaptive: AdaptiveFeatures,
    pub moe: Moe,
    pub towers: Vec<Fcn>,
    pub shared: Option<Fcn>,
    pub head: Fcn,
}

impl MariaNet {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        c: &ModelConfig,
        enc: &InputEncoder,
        rng: &mut R,
    ) -> Result<Self> {
        let layout = &enc.layout;
        let d = c.disable;
        let adaptive = AdaptiveFeatures {
            scale: if d.fs {
                None
            } else {
                Some(FeatureScaler::new(
                    store,
                    "fs",
                    layout,
                    c.d_user,
                    c.d_item,
                    c.d_scenario,
                    &c.fs_hidden,
                    c.lambda,
                    rng,
                )?)
            },
            refine: if d.fr {
                None
            } else {
                Some(Refinement::new(
                    store,
                    "fr",
                    layout,
                    c.d_scenario,
                    &c.refiners,
                    c.refine_ratio,
                    rng,
                )?)
            },
            correlate: if d.fcm {
                None
            } else {
                Some(Correlation::new(store, "fcm", layout, c.d_r, rng)?)
            },
        };
        let q_f = adaptive.output_width(layout);
        let n_e = if d.nl { 1 } else { c.experts };
        let experts = (0..n_e)
            .map(|j| {
                Fcn::mlp(
                    store,
                    &format!("moe.expert{j}"),
                    q_f,
                    &c.expert_layers,
                    Activation::Relu,
                    Activation::Relu,
                    rng,
                )
            })
            .collect();
        let gate = (!d.nl).then(|| store.xavier("moe.gate", [c.d_scenario, c.experts], rng));
        let moe = Moe { experts, gate };
        let h_n = moe.output_dim();
        let towers = (0..c.schema.scenarios)
            .map(|s| {
                Fcn::mlp(
                    store,
                    &format!("tower.s{s}"),
                    h_n,
                    &c.tower_layers,
                    Activation::Relu,
                    Activation::Relu,
                    rng,
                )
            })
            .collect();
        let shared = (!d.st).then(|| {
            Fcn::mlp(
                store,
                "shared",
                h_n,
                &c.tower_layers,
                Activation::Relu,
                Activation::Relu,
                rng,
            )
        });
        let top = *c.tower_layers.last().expect("validated");
        let head = Fcn::new(store, "head", top, &[1], &[Activation::Sigmoid], rng);
        Ok(Self {
            adaptive,
            moe,
            towers,
            shared,
            head,
        })
    }
}
