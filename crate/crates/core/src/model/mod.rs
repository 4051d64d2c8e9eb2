//! End-to-end MARIA, the comparator baselines and checkpoint files.

mod baseline;
mod checkpoint;
mod config;
mod encoder;
mod maria;

pub use baseline::BaselineNet;
pub use checkpoint::{load_checkpoint, read_checkpoint_config, save_checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use config::{Disabled, ModelConfig, ModelKind};
pub use encoder::{EncodedBatch, InputEncoder};
pub use maria::{coupling_coeff, moe_forward, route, MariaNet, Moe};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{Graph, ParamStore, Var};
use crate::data::Instance;
use crate::error::Result;
use crate::features::{adaptive_features, AdaptiveOutput, Selection};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    /// Gumbel noise active in refiner selection.
    Train,
    /// Deterministic arg-max selection.
    Eval,
}

#[derive(Clone, Debug)]
pub enum Net {
    Maria(Box<MariaNet>),
    Baseline(Box<BaselineNet>),
}

/// Parameters plus structure of a MARIA or baseline ranker.
#[derive(Clone, Debug)]
pub struct Model {
    pub config: ModelConfig,
    pub store: ParamStore,
    pub encoder: InputEncoder,
    pub net: Net,
}

/// Intermediate tensors of one forward pass.
#[derive(Clone, Debug)]
pub struct ForwardTrace {
    /// `[B, 1]` click probabilities.
    pub pred: Var,
    pub encoded: EncodedBatch,
    pub adaptive: Option<AdaptiveOutput>,
    /// MARIA gate weights `[B, N_e]`.
    pub gate: Option<Var>,
    /// MMoE gate weights per scenario group present in the batch.
    pub group_gates: Vec<(usize, Var)>,
    pub h_n: Option<Var>,
    pub h_sp: Option<Var>,
    pub h_sh: Option<Var>,
    /// `[B, 1]` coupling coefficient of each instance's scenario.
    pub coupling: Option<Var>,
    pub h_f: Option<Var>,
}

impl Model {
    pub fn new(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.init_seed);
        let mut store = ParamStore::new();
        let encoder = InputEncoder::new(&mut store, &config, &mut rng)?;
        let net = match config.kind {
            ModelKind::Maria => Net::Maria(Box::new(MariaNet::new(&mut store, &config, &encoder, &mut rng)?)),
            _ => Net::Baseline(Box::new(BaselineNet::new(&mut store, &config, &encoder, &mut rng)?)),
        };
        Ok(Self {
            config,
            store,
            encoder,
            net,
        })
    }

    pub fn maria(&self) -> Option<&MariaNet> {
        match &self.net {
            Net::Maria(m) => Some(m),
            Net::Baseline(_) => None,
        }
    }

    pub fn selection(&self, mode: Mode) -> Selection {
        match (self.config.disable.gs, mode) {
            (true, _) => Selection::Softmax,
            (false, Mode::Train) => Selection::Gumbel(self.config.temperature),
            (false, Mode::Eval) => Selection::ArgMax,
        }
    }

    pub fn forward(&self, g: &mut Graph, batch: &[&Instance], mode: Mode) -> Result<ForwardTrace> {
        self.forward_with(g, &self.store, batch, mode)
    }

    /// Forward pass reading parameters from `store` (which must share this
    /// model's layout); used by finite-difference checks.
    pub fn forward_with(
        &self,
        g: &mut Graph,
        store: &ParamStore,
        batch: &[&Instance],
        mode: Mode,
    ) -> Result<ForwardTrace> {
        let c = &self.config;
        let enc = self.encoder.encode(g, store, c, batch)?;
        let n_s = c.schema.scenarios;
        let mut trace = ForwardTrace {
            pred: enc.q,
            adaptive: None,
            gate: None,
            group_gates: Vec::new(),
            h_n: None,
            h_sp: None,
            h_sh: None,
            coupling: None,
            h_f: None,
            encoded: enc,
        };
        let enc = &trace.encoded;
        let scen = enc.scenarios.clone();
        match &self.net {
            Net::Maria(net) => {
                let af = adaptive_features(
                    g,
                    store,
                    enc.q,
                    &self.encoder.layout,
                    enc.e_u,
                    enc.e_x,
                    enc.e_s,
                    &net.adaptive,
                    self.selection(mode),
                )?;
                let (h_n, gate) = moe_forward(g, store, af.q_f, enc.e_s, &net.moe)?;
                let h_sp = route(g, h_n, &scen, n_s, |g, s, x| net.towers[s].forward(g, store, x))?;
                let h_f = match &net.shared {
                    Some(shared) => {
                        let h_sh = shared.forward(g, store, h_n)?;
                        let table = self.encoder.scenario.all(g, store);
                        let alpha = coupling_coeff(g, table)?;
                        let alpha = g.gather_rows(alpha, &scen)?;
                        let scaled = g.mul_col(h_sh, alpha)?;
                        trace.h_sh = Some(h_sh);
                        trace.coupling = Some(alpha);
                        g.add(h_sp, scaled)?
                    }
                    None => h_sp,
                };
                trace.pred = net.head.forward(g, store, h_f)?;
                trace.adaptive = Some(af);
                trace.gate = gate;
                trace.h_n = Some(h_n);
                trace.h_sp = Some(h_sp);
                trace.h_f = Some(h_f);
            }
            Net::Baseline(net) => {
                let q = enc.q;
                trace.pred = match net.as_ref() {
                    BaselineNet::HardSharing { dnn } => dnn.forward(g, store, q)?,
                    BaselineNet::SharedBottom { dnns } => {
                        route(g, q, &scen, n_s, |g, s, x| dnns[s].forward(g, store, x))?
                    }
                    BaselineNet::Mmoe { experts, gates, towers } => {
                        let outs = experts
                            .iter()
                            .map(|e| e.forward(g, store, q))
                            .collect::<Result<Vec<_>>>()?;
                        let stacked = g.concat_cols(&outs)?;
                        let h = experts[0].output_dim();
                        let both = g.concat_cols(&[q, stacked])?;
                        let qw = g.cols(q);
                        let mut group_gates = Vec::new();
                        let pred = route(g, both, &scen, n_s, |g, s, x| {
                            let qs = g.slice_cols(x, 0, qw)?;
                            let logits = gates[s].forward(g, store, qs)?;
                            let w = g.softmax(logits);
                            group_gates.push((s, w));
                            let mut acc = None;
                            for j in 0..experts.len() {
                                let f = g.slice_cols(x, qw + j * h, h)?;
                                let wj = g.slice_cols(w, j, 1)?;
                                let term = g.mul_col(f, wj)?;
                                acc = Some(match acc {
                                    None => term,
                                    Some(a) => g.add(a, term)?,
                                });
                            }
                            towers[s].forward(g, store, acc.expect("at least one expert"))
                        })?;
                        trace.group_gates = group_gates;
                        pred
                    }
                };
            }
        }
        Ok(trace)
    }

    /// Click probabilities in evaluation mode.
    pub fn predict(&self, batch: &[&Instance]) -> Result<Vec<f64>> {
        let mut g = Graph::new(0);
        let t = self.forward(&mut g, batch, Mode::Eval)?;
        Ok(g.data(t.pred).to_vec())
    }

    pub fn param_count(&self) -> usize {
        self.store.scalar_count()
    }
}

/// Summed cross-entropy of `[B, 1]` predictions against labels.
pub fn loss(g: &mut Graph, pred: Var, labels: &[f64]) -> Result<Var> {
    g.binary_cross_entropy(pred, labels)
}
