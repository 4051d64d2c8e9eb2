use super::graph::{Graph, Var};
use crate::error::{Error, Result};

/// Row-wise `softmax((logits + g) / τ)` with fresh standard Gumbel noise `g`
/// drawn from the graph's generator. The noise is a constant leaf, so the
/// gradient flows into `logits` only.
pub fn gumbel_softmax(g: &mut Graph, logits: Var, temperature: f64) -> Result<Var> {
    if !(temperature > 0.0) {
        return Err(Error::invalid(format!(
            "gumbel_softmax: temperature must be > 0, got {temperature}"
        )));
    }
    if g.cols(logits) == 0 {
        return Err(Error::invalid("gumbel_softmax: empty logits"));
    }
    let noise = g.gumbel_noise(g.shape(logits));
    let z = g.add(logits, noise)?;
    let z = g.scale(z, 1.0 / temperature);
    Ok(g.softmax(z))
}

/// Row-wise one-hot of the arg-max (first index wins ties). Constant.
pub fn argmax_one_hot(g: &mut Graph, logits: Var) -> Var {
    let [n, m] = g.shape(logits);
    let src = g.data(logits);
    let mut out = vec![0.0; n * m];
    for i in 0..n {
        let row = &src[i * m..(i + 1) * m];
        let mut best = 0;
        for (j, &v) in row.iter().enumerate() {
            if v > row[best] {
                best = j;
            }
        }
        if m > 0 {
            out[i * m + best] = 1.0;
        }
    }
    g.constant([n, m], out).expect("shape is consistent by construction")
}
