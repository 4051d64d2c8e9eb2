use rand::Rng;

use super::layout::FieldLayout;
use crate::autodiff::{Graph, ParamStore, Var};
use crate::error::{Error, Result};
use crate::nn::{Activation, Fcn};

/// Linear projection of every field to a common width `d_r`.
#[derive(Clone, Debug)]
pub struct Correlation {
    pub projections: Vec<Fcn>,
    pub d_r: usize,
}

impl Correlation {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        prefix: &str,
        layout: &FieldLayout,
        d_r: usize,
        rng: &mut R,
    ) -> Result<Self> {
        if d_r == 0 {
            return Err(Error::config("d_r", "must be at least 1"));
        }
        let projections = layout
            .fields
            .iter()
            .map(|f| {
                Fcn::new(
                    store,
                    &format!("{prefix}.{}", f.name),
                    f.width,
                    &[d_r],
                    &[Activation::None],
                    rng,
                )
            })
            .collect();
        Ok(Self { projections, d_r })
    }

    pub fn pair_count(&self) -> usize {
        let n = self.projections.len();
        n * n.saturating_sub(1) / 2
    }
}

/// Pairwise dot products of the projected fields, pairs `(i, j)` with `i < j`
/// in lexicographic order: `[B, F(F-1)/2]`.
pub fn correlate_fields(
    g: &mut Graph,
    store: &ParamStore,
    q_s: Var,
    layout: &FieldLayout,
    p: &Correlation,
) -> Result<Var> {
    if p.projections.len() != layout.fields.len() {
        return Err(Error::shape(
            "correlate_fields",
            &[p.projections.len()],
            &[layout.fields.len()],
        ));
    }
    let mut proj = Vec::with_capacity(layout.fields.len());
    for (span, net) in layout.fields.iter().zip(&p.projections) {
        let field = g.slice_cols(q_s, span.offset, span.width)?;
        proj.push(net.forward(g, store, field)?);
    }
    let mut scores = Vec::with_capacity(p.pair_count());
    for i in 0..proj.len() {
        for j in i + 1..proj.len() {
            scores.push(g.row_dot(proj[i], proj[j])?);
        }
    }
    g.concat_cols(&scores)
}
