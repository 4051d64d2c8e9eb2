//! Synthetic multi-scenario click data with scenario-specific feature importance.
//!
//! Each feature element of an instance is mapped to a fixed pseudo-random
//! real `φ ∈ [-1, 1]` derived from its id. A scenario's click logit is
//! `bias + Σ_j w_j · mask_j · φ_j`, so the importance mask decides which
//! fields carry signal in which scenario.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Zipf};
use serde::{Deserialize, Serialize};

use super::schema::{BehaviorItem, Instance, Schema, Trigger, TriggerKind};
use crate::autodiff::sigmoid;
use crate::error::{Error, Result};
use crate::features::{element_fields, FIELD_COUNT};
use crate::train::metrics::{auc, Metric};

/// Instances drawn for the Bayes-AUC estimate stored in the manifest.
pub const BAYES_SAMPLE: usize = 10_000;

const ZIPF_EXPONENT: f64 = 1.1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Importance {
    /// Fields are split among scenarios: field `f` matters only in scenario `f mod N_s`.
    Disjoint,
    /// Every element matters in every scenario.
    Shared,
    /// Independent `U[0, 1]` mask entries.
    Random,
    /// No element matters; labels are driven by bias and noise only.
    Zero,
}

impl std::str::FromStr for Importance {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "disjoint" => Ok(Importance::Disjoint),
            "shared" => Ok(Importance::Shared),
            "random" => Ok(Importance::Random),
            "zero" => Ok(Importance::Zero),
            _ => Err(Error::invalid(format!(
                "unknown importance `{s}` (disjoint|shared|random|zero)"
            ))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LabelMode {
    /// `label ~ Bernoulli(σ(logit + ε))`
    Bernoulli,
    /// `label = [logit + ε > 0]`
    Threshold,
}

impl std::str::FromStr for LabelMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "bernoulli" => Ok(LabelMode::Bernoulli),
            "threshold" => Ok(LabelMode::Threshold),
            _ => Err(Error::invalid(format!(
                "unknown label mode `{s}` (bernoulli|threshold)"
            ))),
        }
    }
}

/// Generative recipe of one scenario.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioProfile {
    pub scenario_id: usize,
    pub traffic_share: f64,
    /// One entry per feature element, in field-layout order.
    pub field_importance: Vec<f64>,
    pub label_weights: Vec<f64>,
    pub label_bias: f64,
    pub noise_std: f64,
    pub trigger_kind: TriggerKind,
    pub label_mode: LabelMode,
}

/// Knobs from which [`build_profiles`] derives the scenario profiles.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeneratorConfig {
    /// `None`: equal shares.
    pub traffic_share: Option<Vec<f64>>,
    /// `None`: cycle image, product, none.
    pub trigger_kinds: Option<Vec<TriggerKind>>,
    pub noise_std: f64,
    pub importance: Importance,
    pub weight_scale: f64,
    pub label_bias: f64,
    pub label_mode: LabelMode,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        Self {
            traffic_share: None,
            trigger_kinds: None,
            noise_std: 0.5,
            importance: Importance::Disjoint,
            weight_scale: 1.5,
            label_bias: 0.0,
            label_mode: LabelMode::Bernoulli,
        }
    }
}

/// Per-file summary written next to the data as `<stem>.manifest.json`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub schema: Schema,
    pub seed: u64,
    pub count: usize,
    pub scenario_counts: Vec<usize>,
    pub positive_rates: Vec<Metric>,
    /// AUC of the ground-truth logit on a held-out sample; the ceiling for any model.
    pub bayes_auc: Metric,
    pub bayes_auc_per_scenario: Vec<Metric>,
    pub profiles: Vec<ScenarioProfile>,
}

impl DatasetManifest {
    /// Recomputes counts and rates from `instances`.
    pub fn summarize(&mut self, instances: &[Instance]) {
        let s = self.schema.scenarios;
        let mut counts = vec![0usize; s];
        let mut pos = vec![0usize; s];
        for inst in instances {
            counts[inst.scenario] += 1;
            pos[inst.scenario] += inst.label as usize;
        }
        self.count = instances.len();
        self.positive_rates = counts
            .iter()
            .zip(&pos)
            .map(|(&c, &p)| Metric::from_option((c > 0).then(|| p as f64 / c as f64)))
            .collect();
        self.scenario_counts = counts;
    }
}

pub fn build_profiles(schema: &Schema, cfg: &GeneratorConfig, seed: u64) -> Result<Vec<ScenarioProfile>> {
    schema.validate()?;
    let s = schema.scenarios;
    let shares = match &cfg.traffic_share {
        Some(v) => v.clone(),
        None => vec![1.0 / s as f64; s],
    };
    if shares.len() != s {
        return Err(Error::config(
            "traffic_share",
            format!("{} shares given for {s} scenarios", shares.len()),
        ));
    }
    if shares.iter().any(|&x| !(x >= 0.0)) {
        return Err(Error::config("traffic_share", "shares must be non-negative"));
    }
    let total: f64 = shares.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::config(
            "traffic_share",
            format!("shares sum to {total}, expected 1"),
        ));
    }
    let kinds = match &cfg.trigger_kinds {
        Some(k) if k.len() != s => {
            return Err(Error::config(
                "trigger_kinds",
                format!("{} kinds given for {s} scenarios", k.len()),
            ))
        }
        Some(k) => k.clone(),
        None => (0..s)
            .map(|i| [TriggerKind::Image, TriggerKind::Product, TriggerKind::None][i % 3])
            .collect(),
    };
    if !(cfg.noise_std >= 0.0) || !cfg.noise_std.is_finite() {
        return Err(Error::config("noise_std", "must be finite and >= 0"));
    }
    if !cfg.weight_scale.is_finite() {
        return Err(Error::config("weight_scale", "must be finite"));
    }

    let fields = element_fields(schema);
    let mut rng = ChaCha8Rng::seed_from_u64(mix(seed, 0x7072_6f66));
    let mut out = Vec::with_capacity(s);
    for sid in 0..s {
        let mask: Vec<f64> = fields
            .iter()
            .map(|&f| match cfg.importance {
                Importance::Disjoint => f64::from(f % s == sid && f < FIELD_COUNT),
                Importance::Shared => 1.0,
                Importance::Random => rng.random::<f64>(),
                Importance::Zero => 0.0,
            })
            .collect();
        let weights = fields
            .iter()
            .map(|_| {
                let mag = cfg.weight_scale * rng.random_range(0.5..1.5);
                if rng.random::<bool>() {
                    mag
                } else {
                    -mag
                }
            })
            .collect();
        out.push(ScenarioProfile {
            scenario_id: sid,
            traffic_share: shares[sid],
            field_importance: mask,
            label_weights: weights,
            label_bias: cfg.label_bias,
            noise_std: cfg.noise_std,
            trigger_kind: kinds[sid],
            label_mode: cfg.label_mode,
        });
    }
    Ok(out)
}

/// Generates `count` instances. Instance `i` depends only on `(seed, i)`.
pub fn generate(
    profiles: &[ScenarioProfile],
    schema: &Schema,
    count: usize,
    seed: u64,
) -> Result<(DatasetManifest, Vec<Instance>)> {
    let world = World::new(profiles, schema, seed)?;
    let instances: Vec<Instance> = (0..count).map(|i| world.instance(i as u64).0).collect();

    let held_seed = mix(seed, 0xba7e_5a3e);
    let held = World::new(profiles, schema, held_seed)?;
    let mut scores = Vec::with_capacity(BAYES_SAMPLE);
    let mut labels = Vec::with_capacity(BAYES_SAMPLE);
    let mut per = vec![(Vec::new(), Vec::new()); schema.scenarios];
    for i in 0..BAYES_SAMPLE as u64 {
        let (inst, logit) = held.instance(i);
        scores.push(logit);
        labels.push(inst.label);
        per[inst.scenario].0.push(logit);
        per[inst.scenario].1.push(inst.label);
    }
    let mut manifest = DatasetManifest {
        schema: schema.clone(),
        seed,
        count,
        scenario_counts: Vec::new(),
        positive_rates: Vec::new(),
        bayes_auc: auc(&scores, &labels),
        bayes_auc_per_scenario: per.iter().map(|(s, l)| auc(s, l)).collect(),
        profiles: profiles.to_vec(),
    };
    manifest.summarize(&instances);
    Ok((manifest, instances))
}

/// Ground-truth logit (without noise) of `inst` under `profile`.
pub fn true_logit(profile: &ScenarioProfile, schema: &Schema, salt: u64, inst: &Instance) -> f64 {
    let phi = featurize(schema, salt, inst);
    profile.label_bias
        + phi
            .iter()
            .zip(&profile.field_importance)
            .zip(&profile.label_weights)
            .map(|((p, m), w)| p * m * w)
            .sum::<f64>()
}

/// `φ` of every feature element, in field-layout order.
pub fn featurize(schema: &Schema, salt: u64, inst: &Instance) -> Vec<f64> {
    let mut phi = Vec::with_capacity(schema.element_count());
    let behavior = if inst.behavior.is_empty() {
        0.0
    } else {
        inst.behavior
            .iter()
            .map(|b| hash_real(salt, TAG_ITEM, b.item))
            .sum::<f64>()
            / inst.behavior.len() as f64
    };
    phi.push(behavior);
    phi.push(hash_real(salt, TAG_USER, inst.user));
    phi.extend(inst.user_attrs.iter().map(|&a| hash_real(salt, TAG_USER_ATTR, a)));
    phi.push(hash_real(salt, TAG_ITEM, inst.target_item));
    phi.extend(inst.target_attrs.iter().map(|&a| hash_real(salt, TAG_ITEM_ATTR, a)));
    match &inst.trigger {
        Trigger::Image { vector } => {
            phi.push(vector[0]);
            phi.extend(std::iter::repeat_n(0.0, schema.trigger_attrs));
        }
        Trigger::Product { item, attrs } => {
            phi.push(hash_real(salt, TAG_ITEM, *item));
            phi.extend(attrs.iter().map(|&a| hash_real(salt, TAG_TRIGGER_ATTR, a)));
        }
        Trigger::None => phi.extend(std::iter::repeat_n(0.0, 1 + schema.trigger_attrs)),
    }
    phi.extend(inst.context.iter().map(|&a| hash_real(salt, TAG_CONTEXT, a)));
    phi
}

const TAG_USER: u64 = 1;
const TAG_USER_ATTR: u64 = 2;
const TAG_ITEM: u64 = 3;
const TAG_ITEM_ATTR: u64 = 4;
const TAG_TRIGGER_ATTR: u64 = 5;
const TAG_CONTEXT: u64 = 6;

struct World<'a> {
    profiles: &'a [ScenarioProfile],
    schema: &'a Schema,
    seed: u64,
    /// Featurization salt; shared by the training and held-out worlds.
    salt: u64,
    cumulative: Vec<f64>,
    zipf: Zipf<f64>,
}

impl<'a> World<'a> {
    fn new(profiles: &'a [ScenarioProfile], schema: &'a Schema, seed: u64) -> Result<Self> {
        schema.validate()?;
        if profiles.len() != schema.scenarios {
            return Err(Error::config(
                "scenarios",
                format!("{} profiles for {} scenarios", profiles.len(), schema.scenarios),
            ));
        }
        let n = schema.element_count();
        for p in profiles {
            if p.field_importance.len() != n || p.label_weights.len() != n {
                return Err(Error::config(
                    "importance",
                    format!("profile needs {n} entries per vector"),
                ));
            }
            if !(p.noise_std >= 0.0) {
                return Err(Error::config("noise_std", "must be >= 0"));
            }
        }
        let total: f64 = profiles.iter().map(|p| p.traffic_share).sum();
        if (total - 1.0).abs() > 1e-9 || profiles.iter().any(|p| !(p.traffic_share >= 0.0)) {
            return Err(Error::config(
                "traffic_share",
                format!("shares sum to {total}, expected 1"),
            ));
        }
        let mut acc = 0.0;
        let cumulative = profiles
            .iter()
            .map(|p| {
                acc += p.traffic_share;
                acc
            })
            .collect();
        let zipf = Zipf::new(schema.items as f64, ZIPF_EXPONENT).map_err(|e| Error::invalid(format!("zipf: {e}")))?;
        Ok(Self {
            profiles,
            schema,
            seed,
            salt: profile_salt(profiles),
            cumulative,
            zipf,
        })
    }

    fn instance(&self, i: u64) -> (Instance, f64) {
        let sc = self.schema;
        let mut rng = ChaCha8Rng::seed_from_u64(mix(self.seed, i));
        let u: f64 = rng.random();
        let scenario = self
            .cumulative
            .iter()
            .position(|&c| u < c)
            .unwrap_or(self.profiles.len() - 1);
        let profile = &self.profiles[scenario];
        let user = rng.random_range(0..sc.users);
        let target_item = rng.random_range(0..sc.items);
        let len = rng.random_range(0..=sc.max_behaviors);
        let offset = scenario * sc.items / sc.scenarios;
        let behavior = (0..len)
            .map(|_| {
                let rank = self.zipf.sample(&mut rng) as usize - 1;
                let item = (rank + offset) % sc.items;
                BehaviorItem {
                    item,
                    attrs: self.item_attrs(item),
                }
            })
            .collect();
        let trigger = match profile.trigger_kind {
            TriggerKind::Image => Trigger::Image {
                vector: (0..sc.trigger_dim).map(|_| rng.random_range(-1.0..1.0)).collect(),
            },
            TriggerKind::Product => {
                let item = (self.zipf.sample(&mut rng) as usize - 1 + offset) % sc.items;
                Trigger::Product {
                    item,
                    attrs: (0..sc.trigger_attrs)
                        .map(|k| {
                            (mix(mix(self.salt, 0x7417), (item * 31 + k) as u64) % sc.trigger_attr_vocab as u64)
                                as usize
                        })
                        .collect(),
                }
            }
            TriggerKind::None => Trigger::None,
        };
        let context = (0..sc.context_attrs)
            .map(|_| rng.random_range(0..sc.context_attr_vocab))
            .collect();
        let mut inst = Instance {
            scenario,
            user,
            user_attrs: (0..sc.user_attrs)
                .map(|k| (mix(mix(self.salt, 0x05e4), (user * 31 + k) as u64) % sc.user_attr_vocab as u64) as usize)
                .collect(),
            behavior,
            target_item,
            target_attrs: self.item_attrs(target_item),
            trigger,
            context,
            label: 0,
        };
        let logit = true_logit(profile, sc, self.salt, &inst);
        let noise = if profile.noise_std > 0.0 {
            Normal::new(0.0, profile.noise_std)
                .expect("noise_std validated")
                .sample(&mut rng)
        } else {
            0.0
        };
        let draw: f64 = rng.random();
        inst.label = match profile.label_mode {
            LabelMode::Bernoulli => u8::from(draw < sigmoid(logit + noise)),
            LabelMode::Threshold => u8::from(logit + noise > 0.0),
        };
        (inst, logit)
    }

    fn item_attrs(&self, item: usize) -> Vec<usize> {
        (0..self.schema.item_attrs)
            .map(|k| {
                (mix(mix(self.salt, 0x17e4), (item * 31 + k) as u64) % self.schema.item_attr_vocab as u64) as usize
            })
            .collect()
    }
}

/// Featurization salt. Derived from the profiles (not the sampling seed) so
/// the held-out Bayes sample lives in the same world as the data.
fn profile_salt(profiles: &[ScenarioProfile]) -> u64 {
    let mut h = 0x5eed_u64;
    for p in profiles {
        for w in &p.label_weights {
            h = mix(h, w.to_bits());
        }
    }
    h
}

/// Salt used for `profiles`; needed to recompute `φ` outside the generator.
pub fn salt_of(profiles: &[ScenarioProfile]) -> u64 {
    profile_salt(profiles)
}

fn hash_real(salt: u64, tag: u64, id: usize) -> f64 {
    let h = mix(mix(salt, tag), id as u64);
    2.0 * ((h >> 11) as f64 / (1u64 << 53) as f64) - 1.0
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Order-sensitive 64-bit mixing of two words.
pub fn mix(a: u64, b: u64) -> u64 {
    splitmix64(a ^ splitmix64(b))
}
