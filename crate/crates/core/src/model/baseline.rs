use rand::Rng;

use super::config::{ModelConfig, ModelKind};
use super::encoder::InputEncoder;
use crate::autodiff::ParamStore;
use crate::error::{Error, Result};
use crate::nn::{Activation, Fcn};

/// Upper structure of a comparator model, fed with the raw `Q`.
#[derive(Clone, Debug)]
pub enum BaselineNet {
    /// One DNN for every scenario.
    HardSharing { dnn: Fcn },
    /// One DNN per scenario over the shared embeddings.
    SharedBottom { dnns: Vec<Fcn> },
    /// Shared experts, a gate over `Q` and a tower per scenario.
    Mmoe {
        experts: Vec<Fcn>,
        gates: Vec<Fcn>,
        towers: Vec<Fcn>,
    },
}

impl BaselineNet {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        c: &ModelConfig,
        enc: &InputEncoder,
        rng: &mut R,
    ) -> Result<Self> {
        let q = enc.layout.width();
        let mut dnn_widths = c.tower_layers.clone();
        dnn_widths.push(1);
        let dnn = |store: &mut ParamStore, name: &str, input: usize, rng: &mut R| {
            Fcn::mlp(
                store,
                name,
                input,
                &dnn_widths,
                Activation::Relu,
                Activation::Sigmoid,
                rng,
            )
        };
        let n_s = c.schema.scenarios;
        Ok(match c.kind {
            ModelKind::HardSharing => BaselineNet::HardSharing {
                dnn: dnn(store, "dnn", q, rng),
            },
            ModelKind::SharedBottom => BaselineNet::SharedBottom {
                dnns: (0..n_s).map(|s| dnn(store, &format!("tower.s{s}"), q, rng)).collect(),
            },
            ModelKind::Mmoe => {
                let experts: Vec<Fcn> = (0..c.experts)
                    .map(|j| {
                        Fcn::mlp(
                            store,
                            &format!("moe.expert{j}"),
                            q,
                            &c.expert_layers,
                            Activation::Relu,
                            Activation::Relu,
                            rng,
                        )
                    })
                    .collect();
                let gates = (0..n_s)
                    .map(|s| Fcn::new(store, &format!("gate.s{s}"), q, &[c.experts], &[Activation::None], rng))
                    .collect();
                let h = experts[0].output_dim();
                let towers = (0..n_s).map(|s| dnn(store, &format!("tower.s{s}"), h, rng)).collect();
                BaselineNet::Mmoe { experts, gates, towers }
            }
            ModelKind::Maria => return Err(Error::invalid("maria is not a baseline kind")),
        })
    }
}
