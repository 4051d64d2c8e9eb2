use rand::Rng;

use crate::autodiff::{Graph, ParamId, ParamStore, Var};
use crate::error::Result;

/// A `rows x dim` lookup table, initialised like any `[rows, dim]` weight.
#[derive(Clone, Debug)]
pub struct Embedding {
    pub table: ParamId,
    pub rows: usize,
    pub dim: usize,
}

impl Embedding {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        name: impl Into<String>,
        rows: usize,
        dim: usize,
        rng: &mut R,
    ) -> Self {
        let table = store.xavier(name, [rows, dim], rng);
        Self { table, rows, dim }
    }

    /// `|ids| x dim`; gradients scatter back into the touched rows only.
    pub fn lookup(&self, g: &mut Graph, store: &ParamStore, ids: &[usize]) -> Result<Var> {
        g.embed(store, self.table, ids)
    }

    /// The whole table as a differentiable leaf.
    pub fn all(&self, g: &mut Graph, store: &ParamStore) -> Var {
        g.param(store, self.table)
    }
}
