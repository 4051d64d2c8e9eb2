use rand::Rng;

use super::layout::FieldLayout;
use crate::autodiff::{Graph, ParamStore, Var};
use crate::error::{Error, Result};
use crate::nn::{Activation, Fcn};

/// Per-element scaling `α = λ·σ(net([freeze(Q) || e_u || e_x || e_s]))`.
#[derive(Clone, Debug)]
pub struct FeatureScaler {
    pub net: Fcn,
    pub lambda: f64,
}

impl FeatureScaler {
    #[allow(clippy::too_many_arguments)]
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        prefix: &str,
        layout: &FieldLayout,
        d_user: usize,
        d_item: usize,
        d_scenario: usize,
        hidden: &[usize],
        lambda: f64,
        rng: &mut R,
    ) -> Result<Self> {
        if !(lambda > 0.0) {
            return Err(Error::config("lambda", "must be > 0"));
        }
        let mut widths = hidden.to_vec();
        widths.push(layout.element_count());
        let net = Fcn::mlp(
            store,
            prefix,
            layout.width() + d_user + d_item + d_scenario,
            &widths,
            Activation::Relu,
            Activation::None,
            rng,
        );
        Ok(Self { net, lambda })
    }
}

/// Returns `(Q_S, α)` with `α` of shape `[B, N_Q]`. Only the `e_*` inputs of
/// the scaling network receive gradient; its `Q` input is frozen.
#[allow(clippy::too_many_arguments)]
pub fn feature_scale(
    g: &mut Graph,
    store: &ParamStore,
    q: Var,
    layout: &FieldLayout,
    e_u: Var,
    e_x: Var,
    e_s: Var,
    p: &FeatureScaler,
) -> Result<(Var, Var)> {
    let [b, w] = g.shape(q);
    if w != layout.width() {
        return Err(Error::shape("feature_scale", &[b, w], &[layout.width()]));
    }
    if p.net.output_dim() != layout.element_count() {
        return Err(Error::shape(
            "feature_scale",
            &[p.net.output_dim()],
            &[layout.element_count()],
        ));
    }
    let frozen = g.stop_gradient(q);
    let input = g.concat_cols(&[frozen, e_u, e_x, e_s])?;
    let logits = p.net.forward(g, store, input)?;
    let alpha = g.sigmoid(logits);
    let alpha = g.scale(alpha, p.lambda);
    let expand = g.constant([layout.element_count(), w], layout.expansion())?;
    let per_col = g.matmul(alpha, expand)?;
    let q_s = g.mul(q, per_col)?;
    Ok((q_s, alpha))
}
