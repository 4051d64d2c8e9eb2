use rand::Rng;

use super::layout::FieldLayout;
use crate::autodiff::{argmax_one_hot, gumbel_softmax, Graph, ParamStore, Var};
use crate::error::{Error, Result};
use crate::nn::{Activation, Fcn};

/// How refiner weights `β` are formed from the selector's sigmoid outputs.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Selection {
    /// Gumbel-softmax sample at temperature `τ` (training).
    Gumbel(f64),
    /// One-hot arg-max (evaluation).
    ArgMax,
    /// Noise-free softmax (Gumbel disabled).
    Softmax,
}

/// Refiners and selector of one field.
#[derive(Clone, Debug)]
pub struct FieldRefiner {
    pub refiners: Vec<Fcn>,
    pub selector: Fcn,
}

impl FieldRefiner {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        prefix: &str,
        field_width: usize,
        d_scenario: usize,
        count: usize,
        out_width: usize,
        rng: &mut R,
    ) -> Result<Self> {
        if count == 0 {
            return Err(Error::config("refiners", "every field needs at least one refiner"));
        }
        let refiners = (0..count)
            .map(|k| {
                Fcn::new(
                    store,
                    &format!("{prefix}.ref{k}"),
                    field_width,
                    &[out_width],
                    &[Activation::Relu],
                    rng,
                )
            })
            .collect();
        let selector = Fcn::new(
            store,
            &format!("{prefix}.sel"),
            field_width + d_scenario,
            &[count],
            &[Activation::None],
            rng,
        );
        Ok(Self { refiners, selector })
    }

    pub fn count(&self) -> usize {
        self.refiners.len()
    }

    pub fn output_width(&self) -> usize {
        self.refiners.iter().map(Fcn::output_dim).sum()
    }
}

/// `[β_1 FC_1(v) || … || β_N FC_N(v)]` with `β` from the scenario-aware selector.
/// Returns the refined field and `β` (`[B, N_b]`).
pub fn refine_field(
    g: &mut Graph,
    store: &ParamStore,
    field: Var,
    e_s: Var,
    p: &FieldRefiner,
    selection: Selection,
) -> Result<(Var, Var)> {
    let input = g.concat_cols(&[field, e_s])?;
    let logits = p.selector.forward(g, store, input)?;
    let probs = g.sigmoid(logits);
    let beta = match selection {
        Selection::Gumbel(tau) => gumbel_softmax(g, probs, tau)?,
        Selection::ArgMax => argmax_one_hot(g, probs),
        Selection::Softmax => g.softmax(probs),
    };
    let mut parts = Vec::with_capacity(p.count());
    for (k, r) in p.refiners.iter().enumerate() {
        let h = r.forward(g, store, field)?;
        let bk = g.slice_cols(beta, k, 1)?;
        parts.push(g.mul_col(h, bk)?);
    }
    let out = if parts.len() == 1 {
        parts[0]
    } else {
        g.concat_cols(&parts)?
    };
    Ok((out, beta))
}

/// One [`FieldRefiner`] per field of the layout.
#[derive(Clone, Debug)]
pub struct Refinement {
    pub fields: Vec<FieldRefiner>,
}

impl Refinement {
    /// `counts[f]` refiners for field `f`, each of width `ceil(ratio · field width)`.
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        prefix: &str,
        layout: &FieldLayout,
        d_scenario: usize,
        counts: &[usize],
        ratio: f64,
        rng: &mut R,
    ) -> Result<Self> {
        if counts.len() != layout.fields.len() {
            return Err(Error::config(
                "refiners",
                format!("{} counts for {} fields", counts.len(), layout.fields.len()),
            ));
        }
        if !(ratio > 0.0 && ratio <= 1.0) {
            return Err(Error::config("refine_ratio", "must be in (0, 1]"));
        }
        let fields = layout
            .fields
            .iter()
            .zip(counts)
            .map(|(f, &n)| {
                let out = ((f.width as f64 * ratio).ceil() as usize).max(1);
                FieldRefiner::new(store, &format!("{prefix}.{}", f.name), f.width, d_scenario, n, out, rng)
            })
            .collect::<Result<_>>()?;
        Ok(Self { fields })
    }

    pub fn output_width(&self) -> usize {
        self.fields.iter().map(FieldRefiner::output_width).sum()
    }
}

/// Field-wise refinement of `Q_S`; returns `Q_R` and each field's `β`.
pub fn refine_all(
    g: &mut Graph,
    store: &ParamStore,
    q_s: Var,
    layout: &FieldLayout,
    e_s: Var,
    p: &Refinement,
    selection: Selection,
) -> Result<(Var, Vec<Var>)> {
    if p.fields.len() != layout.fields.len() {
        return Err(Error::shape("refine_all", &[p.fields.len()], &[layout.fields.len()]));
    }
    let mut outs = Vec::with_capacity(p.fields.len());
    let mut betas = Vec::with_capacity(p.fields.len());
    for (span, fr) in layout.fields.iter().zip(&p.fields) {
        let field = g.slice_cols(q_s, span.offset, span.width)?;
        let (out, beta) = refine_field(g, store, field, e_s, fr, selection)?;
        outs.push(out);
        betas.push(beta);
    }
    Ok((g.concat_cols(&outs)?, betas))
}
