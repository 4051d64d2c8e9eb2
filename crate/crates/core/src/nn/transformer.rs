use rand::Rng;

use super::fcn::{Activation, Fcn};
use crate::autodiff::{Graph, ParamId, ParamStore, Var};
use crate::error::{Error, Result};

const LN_EPS: f64 = 1e-5;

/// One pre-norm encoder layer: `x + MHA(LN(x))`, then `x + FF(LN(x))`.
#[derive(Clone, Debug)]
pub struct TransformerBlock {
    pub model_dim: usize,
    pub heads: usize,
    wq: ParamId,
    wk: ParamId,
    wv: ParamId,
    wo: ParamId,
    ln1: (ParamId, ParamId),
    ln2: (ParamId, ParamId),
    ff: Fcn,
}

/// Encoder output plus the per-head attention matrices (`[B*m, m]` each).
#[derive(Clone, Debug)]
pub struct Encoded {
    pub out: Var,
    pub attention: Vec<Var>,
}

impl TransformerBlock {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        prefix: &str,
        model_dim: usize,
        heads: usize,
        ff_mult: usize,
        rng: &mut R,
    ) -> Result<Self> {
        if heads == 0 || !model_dim.is_multiple_of(heads) {
            return Err(Error::invalid(format!(
                "transformer: model_dim {model_dim} not divisible by {heads} heads"
            )));
        }
        let d = model_dim;
        Ok(Self {
            model_dim,
            heads,
            wq: store.xavier(format!("{prefix}.wq"), [d, d], rng),
            wk: store.xavier(format!("{prefix}.wk"), [d, d], rng),
            wv: store.xavier(format!("{prefix}.wv"), [d, d], rng),
            wo: store.xavier(format!("{prefix}.wo"), [d, d], rng),
            ln1: (
                store.ones(format!("{prefix}.ln1.gain"), [1, d]),
                store.zeros(format!("{prefix}.ln1.bias"), [1, d]),
            ),
            ln2: (
                store.ones(format!("{prefix}.ln2.gain"), [1, d]),
                store.zeros(format!("{prefix}.ln2.bias"), [1, d]),
            ),
            ff: Fcn::new(
                store,
                &format!("{prefix}.ff"),
                d,
                &[ff_mult * d, d],
                &[Activation::Relu, Activation::None],
                rng,
            ),
        })
    }

    /// Encodes `blocks` sequences of equal length stacked as `[blocks * m, d]`.
    /// `valid[k]` marks real (non-padding) positions; invalid keys are masked
    /// with `-inf` before the softmax. Every sequence needs one valid position.
    pub fn encode(&self, g: &mut Graph, store: &ParamStore, x: Var, blocks: usize, valid: &[bool]) -> Result<Encoded> {
        let [rows, d] = g.shape(x);
        if d != self.model_dim {
            return Err(Error::shape("transformer_encode", &[rows, d], &[self.model_dim]));
        }
        if blocks == 0 || rows % blocks != 0 || valid.len() != rows {
            return Err(Error::shape("transformer_encode", &[rows, d], &[blocks, valid.len()]));
        }
        let m = rows / blocks;
        let mut mask = vec![0.0; rows * m];
        for b in 0..blocks {
            if !valid[b * m..(b + 1) * m].iter().any(|&v| v) {
                return Err(Error::invalid("transformer_encode: sequence with no valid position"));
            }
            for i in 0..m {
                for j in 0..m {
                    if !valid[b * m + j] {
                        mask[(b * m + i) * m + j] = f64::NEG_INFINITY;
                    }
                }
            }
        }
        let mask = g.constant([rows, m], mask)?;

        let h = self.norm(g, store, x, self.ln1)?;
        let [wq, wk, wv, wo] = [self.wq, self.wk, self.wv, self.wo].map(|p| g.param(store, p));
        let q = g.matmul(h, wq)?;
        let k = g.matmul(h, wk)?;
        let v = g.matmul(h, wv)?;
        let dh = d / self.heads;
        let inv_sqrt = 1.0 / (dh as f64).sqrt();
        let mut heads = Vec::with_capacity(self.heads);
        let mut attention = Vec::with_capacity(self.heads);
        for hd in 0..self.heads {
            let qh = g.slice_cols(q, hd * dh, dh)?;
            let kh = g.slice_cols(k, hd * dh, dh)?;
            let vh = g.slice_cols(v, hd * dh, dh)?;
            let scores = g.block_matmul_nt(qh, kh, blocks)?;
            let scores = g.scale(scores, inv_sqrt);
            let scores = g.add(scores, mask)?;
            let att = g.softmax(scores);
            heads.push(g.block_matmul(att, vh, blocks)?);
            attention.push(att);
        }
        let cat = g.concat_cols(&heads)?;
        let proj = g.matmul(cat, wo)?;
        let x1 = g.add(x, proj)?;

        let h2 = self.norm(g, store, x1, self.ln2)?;
        let ff = self.ff.forward(g, store, h2)?;
        let out = g.add(x1, ff)?;
        Ok(Encoded { out, attention })
    }

    fn norm(&self, g: &mut Graph, store: &ParamStore, x: Var, (gain, bias): (ParamId, ParamId)) -> Result<Var> {
        let n = g.layer_norm(x, LN_EPS);
        let gain = g.param(store, gain);
        let bias = g.param(store, bias);
        let n = g.mul_row(n, gain)?;
        g.add_row(n, bias)
    }
}
