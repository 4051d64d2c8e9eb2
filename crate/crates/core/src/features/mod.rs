//! Adaptive feature learning over the concatenated field representation `Q`:
//! per-element scaling, per-field refiner selection and pairwise field
//! correlation.

mod correlate;
mod layout;
mod refine;
mod scale;

pub use correlate::{correlate_fields, Correlation};
pub use layout::{assemble_q, element_fields, FieldLayout, FieldSpan, FIELD_COUNT, FIELD_NAMES};
pub use refine::{refine_all, refine_field, FieldRefiner, Refinement, Selection};
pub use scale::{feature_scale, FeatureScaler};

use crate::autodiff::{Graph, ParamStore, Var};
use crate::error::Result;

/// Optional sub-modules; `None` replaces a stage by the identity (or, for
/// correlation, by nothing).
#[derive(Clone, Debug, Default)]
pub struct AdaptiveFeatures {
    pub scale: Option<FeatureScaler>,
    pub refine: Option<Refinement>,
    pub correlate: Option<Correlation>,
}

/// Intermediate tensors of one adaptive-feature pass.
#[derive(Clone, Debug)]
pub struct AdaptiveOutput {
    pub q_f: Var,
    pub q_s: Var,
    pub q_r: Var,
    /// `[B, N_Q]` scaling factors, when scaling is enabled.
    pub alpha: Option<Var>,
    /// One `[B, N_b]` selection matrix per field, when refinement is enabled.
    pub betas: Vec<Var>,
    /// `[B, pairs]` field correlations, when enabled.
    pub q_c: Option<Var>,
}

impl AdaptiveFeatures {
    /// Width of `Q_f` for a given layout.
    pub fn output_width(&self, layout: &FieldLayout) -> usize {
        let r = match &self.refine {
            Some(r) => r.output_width(),
            None => layout.width(),
        };
        r + self.correlate.as_ref().map_or(0, |c| c.pair_count())
    }
}

/// `Q → Q_S → {Q_R, Q_C} → Q_f = [Q_R || Q_C]`.
#[allow(clippy::too_many_arguments)]
pub fn adaptive_features(
    g: &mut Graph,
    store: &ParamStore,
    q: Var,
    layout: &FieldLayout,
    e_u: Var,
    e_x: Var,
    e_s: Var,
    p: &AdaptiveFeatures,
    selection: Selection,
) -> Result<AdaptiveOutput> {
    let (q_s, alpha) = match &p.scale {
        Some(fs) => {
            let (q_s, alpha) = feature_scale(g, store, q, layout, e_u, e_x, e_s, fs)?;
            (q_s, Some(alpha))
        }
        None => (q, None),
    };
    let (q_r, betas) = match &p.refine {
        Some(fr) => refine_all(g, store, q_s, layout, e_s, fr, selection)?,
        None => (q_s, Vec::new()),
    };
    let q_c = match &p.correlate {
        Some(fcm) => Some(correlate_fields(g, store, q_s, layout, fcm)?),
        None => None,
    };
    let q_f = match q_c {
        Some(c) => g.concat_cols(&[q_r, c])?,
        None => q_r,
    };
    Ok(AdaptiveOutput {
        q_f,
        q_s,
        q_r,
        alpha,
        betas,
        q_c,
    })
}
