use rand::Rng;

use super::config::ModelConfig;
use crate::autodiff::{Graph, ParamId, ParamStore, Var};
use crate::data::{Instance, Trigger};
use crate::error::Result;
use crate::features::{assemble_q, FieldLayout};
use crate::nn::{trigger_attention, Activation, Embedding, Fcn, TransformerBlock};

/// Embedding layer, behavior encoder and trigger attention: everything that
/// turns raw instances into `Q`. Shared by MARIA and the baselines.
#[derive(Clone, Debug)]
pub struct InputEncoder {
    pub user: Embedding,
    /// `items + 1` rows; the last is the padding item.
    pub item: Embedding,
    pub user_attr: Embedding,
    /// `vocab + 1` rows; the last pads behavior positions.
    pub item_attr: Embedding,
    /// `vocab + 1` rows; the last stands in for absent trigger attributes.
    pub trigger_attr: Embedding,
    pub context: Embedding,
    pub scenario: Embedding,
    pub position: ParamId,
    pub block: TransformerBlock,
    pub sim: Fcn,
    /// Maps an item id embedding to the trigger width.
    pub trigger_proj: Fcn,
    pub layout: FieldLayout,
}

/// Encoder outputs for one batch.
#[derive(Clone, Debug)]
pub struct EncodedBatch {
    pub q: Var,
    pub e_u: Var,
    pub e_x: Var,
    pub e_s: Var,
    /// Trigger field vector `t`, `[B, d_t + O·d_a]`.
    pub trigger: Var,
    /// Sequence encoder output `[B*m, d_seq]`.
    pub sequence: Var,
    pub self_attention: Vec<Var>,
    /// `[B, m]`
    pub trigger_weights: Var,
    pub scenarios: Vec<usize>,
}

impl InputEncoder {
    pub fn new<R: Rng + ?Sized>(store: &mut ParamStore, c: &ModelConfig, rng: &mut R) -> Result<Self> {
        let s = &c.schema;
        let d_seq = c.d_seq();
        let layout = FieldLayout::for_schema(s, c.d_user, c.d_item, c.d_attr, c.d_context, d_seq)?;
        let d_trigger_field = layout.fields[3].width;
        let user = Embedding::new(store, "emb.user", s.users, c.d_user, rng);
        let item = Embedding::new(store, "emb.item", s.items + 1, c.d_item, rng);
        let user_attr = Embedding::new(store, "emb.user_attr", s.user_attr_vocab, c.d_attr, rng);
        let item_attr = Embedding::new(store, "emb.item_attr", s.item_attr_vocab + 1, c.d_attr, rng);
        let trigger_attr = Embedding::new(store, "emb.trigger_attr", s.trigger_attr_vocab + 1, c.d_attr, rng);
        let context = Embedding::new(store, "emb.context", s.context_attr_vocab, c.d_context, rng);
        let scenario = Embedding::new(store, "emb.scenario", s.scenarios, c.d_scenario, rng);
        let position = store.xavier("enc.position", [s.max_behaviors, d_seq], rng);
        let block = TransformerBlock::new(store, "enc.block", d_seq, c.heads, c.ff_mult, rng)?;
        let sim = Fcn::mlp(
            store,
            "trig.sim",
            d_trigger_field + d_seq,
            &[c.sim_hidden, 1],
            Activation::Relu,
            Activation::None,
            rng,
        );
        let trigger_proj = Fcn::new(store, "trig.proj", c.d_item, &[s.trigger_dim], &[Activation::None], rng);
        Ok(Self {
            user,
            item,
            user_attr,
            item_attr,
            trigger_attr,
            context,
            scenario,
            position,
            block,
            sim,
            trigger_proj,
            layout,
        })
    }

    pub fn encode(
        &self,
        g: &mut Graph,
        store: &ParamStore,
        c: &ModelConfig,
        batch: &[&Instance],
    ) -> Result<EncodedBatch> {
        let s = &c.schema;
        for inst in batch {
            inst.validate(s)?;
        }
        let b = batch.len();
        let m = s.max_behaviors;
        let col = |f: &dyn Fn(&Instance) -> usize| -> Vec<usize> { batch.iter().map(|i| f(i)).collect() };

        // Behavior sequence, left-padded to m.
        let pad_item = s.items;
        let pad_attr = s.item_attr_vocab;
        let mut seq_items = Vec::with_capacity(b * m);
        let mut seq_attrs = vec![Vec::with_capacity(b * m); s.item_attrs];
        let mut valid = Vec::with_capacity(b * m);
        for inst in batch {
            let pad = m - inst.behavior.len();
            for _ in 0..pad {
                seq_items.push(pad_item);
                seq_attrs.iter_mut().for_each(|a| a.push(pad_attr));
                valid.push(false);
            }
            for bh in &inst.behavior {
                seq_items.push(bh.item);
                for (k, a) in seq_attrs.iter_mut().enumerate() {
                    a.push(bh.attrs[k]);
                }
                valid.push(true);
            }
            if inst.behavior.is_empty() {
                // Attend to one padding position so the softmax stays defined.
                let last = valid.len() - 1;
                valid[last] = true;
            }
        }
        let mut parts = vec![self.item.lookup(g, store, &seq_items)?];
        for ids in &seq_attrs {
            parts.push(self.item_attr.lookup(g, store, ids)?);
        }
        let x = if parts.len() == 1 {
            parts[0]
        } else {
            g.concat_cols(&parts)?
        };
        let pos = g.param(store, self.position);
        let pos = g.tile_rows(pos, b);
        let x = g.add(x, pos)?;
        let enc = self.block.encode(g, store, x, b, &valid)?;

        // Fields.
        let e_u = self.user.lookup(g, store, &col(&|i| i.user))?;
        let mut user = vec![e_u];
        for k in 0..s.user_attrs {
            user.push(self.user_attr.lookup(g, store, &col(&|i| i.user_attrs[k]))?);
        }
        let e_x = self.item.lookup(g, store, &col(&|i| i.target_item))?;
        let mut item = vec![e_x];
        for k in 0..s.item_attrs {
            item.push(self.item_attr.lookup(g, store, &col(&|i| i.target_attrs[k]))?);
        }

        let star = self.trigger_vector(g, store, c, batch)?;
        let mut trigger = vec![star];
        let missing = s.trigger_attr_vocab;
        for k in 0..s.trigger_attrs {
            let ids = col(&|i| match &i.trigger {
                Trigger::Product { attrs, .. } => attrs[k],
                _ => missing,
            });
            trigger.push(self.trigger_attr.lookup(g, store, &ids)?);
        }
        let t = if trigger.len() == 1 {
            trigger[0]
        } else {
            g.concat_cols(&trigger)?
        };
        let att = trigger_attention(g, store, t, enc.out, &valid, &self.sim)?;

        let mut context = Vec::with_capacity(s.context_attrs);
        for k in 0..s.context_attrs {
            context.push(self.context.lookup(g, store, &col(&|i| i.context[k]))?);
        }
        let scenarios = col(&|i| i.scenario);
        let e_s = self.scenario.lookup(g, store, &scenarios)?;

        let q = assemble_q(g, &[vec![att.pooled], user, item, trigger, context], &self.layout)?;
        Ok(EncodedBatch {
            q,
            e_u,
            e_x,
            e_s,
            trigger: t,
            sequence: enc.out,
            self_attention: enc.attention,
            trigger_weights: att.weights,
            scenarios,
        })
    }

    /// Dense part of the trigger field: the image vector, or the projected
    /// embedding of the trigger item (the target item when there is no trigger).
    fn trigger_vector(&self, g: &mut Graph, store: &ParamStore, c: &ModelConfig, batch: &[&Instance]) -> Result<Var> {
        let dt = c.schema.trigger_dim;
        let b = batch.len();
        let mut image = vec![0.0; b * dt];
        let mut keep = vec![0.0; b];
        let mut ids = Vec::with_capacity(b);
        let mut any_image = false;
        for (r, inst) in batch.iter().enumerate() {
            match &inst.trigger {
                Trigger::Image { vector } => {
                    image[r * dt..(r + 1) * dt].copy_from_slice(vector);
                    ids.push(inst.target_item);
                    any_image = true;
                }
                Trigger::Product { item, .. } => {
                    ids.push(*item);
                    keep[r] = 1.0;
                }
                Trigger::None => {
                    ids.push(inst.target_item);
                    keep[r] = 1.0;
                }
            }
        }
        let e = self.item.lookup(g, store, &ids)?;
        let proj = self.trigger_proj.forward(g, store, e)?;
        if !any_image {
            return Ok(proj);
        }
        let keep = g.constant([b, 1], keep)?;
        let proj = g.mul_col(proj, keep)?;
        let image = g.constant([b, dt], image)?;
        g.add(proj, image)
    }
}
