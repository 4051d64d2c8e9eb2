use crate::autodiff::{Graph, ParamStore, Var};
use crate::error::{Error, Result};

use super::fcn::Fcn;

/// Pooled behavior summary and the attention weights (`[B, m]`).
#[derive(Clone, Copy, Debug)]
pub struct TriggerAttention {
    pub pooled: Var,
    pub weights: Var,
}

/// `h_b = Σ_i α_i h_i` with `α = softmax_i(sim([t || h_i]))`, per instance.
///
/// `trigger` is `[B, d_t]`, `seq` is `[B * m, d]`; `valid` masks padding.
pub fn trigger_attention(
    g: &mut Graph,
    store: &ParamStore,
    trigger: Var,
    seq: Var,
    valid: &[bool],
    sim_net: &Fcn,
) -> Result<TriggerAttention> {
    let [b, dt] = g.shape(trigger);
    let [rows, d] = g.shape(seq);
    if b == 0 || rows % b != 0 || valid.len() != rows {
        return Err(Error::shape("trigger_attention", &[b, dt], &[rows, d]));
    }
    if sim_net.input_dim() != dt + d || sim_net.output_dim() != 1 {
        return Err(Error::shape(
            "trigger_attention",
            &[dt + d, 1],
            &[sim_net.input_dim(), sim_net.output_dim()],
        ));
    }
    let m = rows / b;
    let t = g.repeat_rows(trigger, m);
    let pair = g.concat_cols(&[t, seq])?;
    let sim = sim_net.forward(g, store, pair)?;
    let sim = g.reshape(sim, [b, m])?;
    let mask: Vec<f64> = valid.iter().map(|&v| if v { 0.0 } else { f64::NEG_INFINITY }).collect();
    let mask = g.constant([b, m], mask)?;
    let sim = g.add(sim, mask)?;
    let weights = g.softmax(sim);
    let pooled = g.block_matmul(weights, seq, b)?;
    Ok(TriggerAttention { pooled, weights })
}
