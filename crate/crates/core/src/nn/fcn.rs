use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Graph, ParamId, ParamStore, Var};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Sigmoid,
    None,
}

#[derive(Clone, Debug)]
struct Layer {
    w: ParamId,
    b: ParamId,
    act: Activation,
}

/// Stack of affine layers, each followed by its own activation.
#[derive(Clone, Debug)]
pub struct Fcn {
    layers: Vec<Layer>,
    dims: Vec<usize>,
}

impl Fcn {
    /// `widths[i]` is the output width of layer `i`; `acts` pairs with it.
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        prefix: &str,
        input: usize,
        widths: &[usize],
        acts: &[Activation],
        rng: &mut R,
    ) -> Self {
        assert_eq!(widths.len(), acts.len(), "{prefix}: one activation per layer");
        let mut dims = vec![input];
        let mut layers = Vec::with_capacity(widths.len());
        for (i, (&w, &act)) in widths.iter().zip(acts).enumerate() {
            let fan_in = *dims.last().unwrap();
            let wid = store.xavier(format!("{prefix}.{i}.w"), [fan_in, w], rng);
            let bid = store.zeros(format!("{prefix}.{i}.b"), [1, w]);
            layers.push(Layer { w: wid, b: bid, act });
            dims.push(w);
        }
        Self { layers, dims }
    }

    /// Hidden layers use `hidden`, the last layer uses `last`.
    pub fn mlp<R: Rng + ?Sized>(
        store: &mut ParamStore,
        prefix: &str,
        input: usize,
        widths: &[usize],
        hidden: Activation,
        last: Activation,
        rng: &mut R,
    ) -> Self {
        let mut acts = vec![hidden; widths.len()];
        if let Some(a) = acts.last_mut() {
            *a = last;
        }
        Self::new(store, prefix, input, widths, &acts, rng)
    }

    pub fn input_dim(&self) -> usize {
        self.dims[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.dims.last().unwrap()
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn weights(&self) -> impl Iterator<Item = (ParamId, ParamId)> + '_ {
        self.layers.iter().map(|l| (l.w, l.b))
    }

    pub fn forward(&self, g: &mut Graph, store: &ParamStore, x: Var) -> Result<Var> {
        if g.cols(x) != self.input_dim() {
            return Err(Error::shape("fcn_forward", &g.shape(x), &[self.input_dim()]));
        }
        let mut h = x;
        for l in &self.layers {
            let w = g.param(store, l.w);
            let b = g.param(store, l.b);
            h = g.matmul(h, w)?;
            h = g.add_row(h, b)?;
            h = match l.act {
                Activation::Relu => g.relu(h),
                Activation::Sigmoid => g.sigmoid(h),
                Activation::None => h,
            };
        }
        Ok(h)
    }
}
