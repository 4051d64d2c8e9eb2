use serde::{Deserialize, Serialize};

use crate::autodiff::{Graph, Var};
use crate::data::Schema;
use crate::error::{Error, Result};

pub const FIELD_COUNT: usize = 5;

/// Field order of `Q`.
pub const FIELD_NAMES: [&str; FIELD_COUNT] = ["behavior", "user", "item", "trigger", "context"];

/// Field index of every feature element, in layout order.
pub fn element_fields(schema: &Schema) -> Vec<usize> {
    let mut out = vec![0];
    out.extend(std::iter::repeat_n(1, 1 + schema.user_attrs));
    out.extend(std::iter::repeat_n(2, 1 + schema.item_attrs));
    out.extend(std::iter::repeat_n(3, 1 + schema.trigger_attrs));
    out.extend(std::iter::repeat_n(4, schema.context_attrs));
    out
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FieldSpan {
    pub name: String,
    pub offset: usize,
    pub width: usize,
    /// `(offset, width)` of each element, absolute within `Q`.
    pub elements: Vec<(usize, usize)>,
}

/// Element boundaries of `Q`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FieldLayout {
    pub fields: Vec<FieldSpan>,
}

impl FieldLayout {
    /// Builds contiguous spans from per-field element widths.
    pub fn new(names: &[&str], element_widths: &[Vec<usize>]) -> Result<Self> {
        if names.len() != element_widths.len() {
            return Err(Error::invalid("field layout: one name per field"));
        }
        let mut offset = 0;
        let mut fields = Vec::with_capacity(names.len());
        for (name, widths) in names.iter().zip(element_widths) {
            if widths.contains(&0) {
                return Err(Error::invalid(format!("field layout: zero-width element in `{name}`")));
            }
            let start = offset;
            let elements = widths
                .iter()
                .map(|&w| {
                    let e = (offset, w);
                    offset += w;
                    e
                })
                .collect();
            fields.push(FieldSpan {
                name: name.to_string(),
                offset: start,
                width: offset - start,
                elements,
            });
        }
        Ok(Self { fields })
    }

    /// Layout of the five standard fields.
    ///
    /// `d_seq` is the behavior summary width, `d_t` the trigger vector width.
    pub fn for_schema(
        schema: &Schema,
        d_user: usize,
        d_item: usize,
        d_attr: usize,
        d_context: usize,
        d_seq: usize,
    ) -> Result<Self> {
        let rep = |n: usize, w: usize| std::iter::repeat_n(w, n);
        let widths = vec![
            vec![d_seq],
            std::iter::once(d_user).chain(rep(schema.user_attrs, d_attr)).collect(),
            std::iter::once(d_item).chain(rep(schema.item_attrs, d_attr)).collect(),
            std::iter::once(schema.trigger_dim)
                .chain(rep(schema.trigger_attrs, d_attr))
                .collect(),
            rep(schema.context_attrs, d_context).collect(),
        ];
        if schema.context_attrs == 0 {
            return Err(Error::config(
                "context_attrs",
                "the context field needs at least one element",
            ));
        }
        Self::new(&FIELD_NAMES, &widths)
    }

    pub fn width(&self) -> usize {
        self.fields.last().map_or(0, |f| f.offset + f.width)
    }

    /// N_Q
    pub fn element_count(&self) -> usize {
        self.fields.iter().map(|f| f.elements.len()).sum()
    }

    pub fn elements(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.fields.iter().flat_map(|f| f.elements.iter().copied())
    }

    /// `[N_Q, width]` 0/1 matrix mapping element weights onto `Q` columns.
    pub fn expansion(&self) -> Vec<f64> {
        let w = self.width();
        let mut out = vec![0.0; self.element_count() * w];
        for (j, (off, len)) in self.elements().enumerate() {
            out[j * w + off..j * w + off + len].iter_mut().for_each(|v| *v = 1.0);
        }
        out
    }
}

/// Concatenates element tensors (`elements[f]` holds field `f`'s elements, in
/// order) into `Q`, checking every width against `layout`.
pub fn assemble_q(g: &mut Graph, elements: &[Vec<Var>], layout: &FieldLayout) -> Result<Var> {
    if elements.len() != layout.fields.len() {
        return Err(Error::shape("assemble_q", &[elements.len()], &[layout.fields.len()]));
    }
    let mut flat = Vec::with_capacity(layout.element_count());
    for (f, (vars, span)) in elements.iter().zip(&layout.fields).enumerate() {
        if vars.len() != span.elements.len() {
            return Err(Error::invalid(format!(
                "assemble_q: field `{}` has {} elements, layout expects {}",
                FIELD_NAMES.get(f).copied().unwrap_or(&span.name),
                vars.len(),
                span.elements.len()
            )));
        }
        for (&v, &(_, w)) in vars.iter().zip(&span.elements) {
            if g.cols(v) != w {
                return Err(Error::invalid(format!(
                    "assemble_q: element of field `{}` has width {}, layout expects {w}",
                    span.name,
                    g.cols(v)
                )));
            }
            flat.push(v);
        }
    }
    g.concat_cols(&flat)
}
