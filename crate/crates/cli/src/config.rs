//! Flat `key = value` run configuration.
//!
//! Every key maps onto one field of the library configs. Values are applied
//! to a JSON view of [`RunConfig`] and read back, so each key keeps the
//! library default unless it is set.

use std::path::Path;

use maria_core::data::{GeneratorConfig, Schema, TriggerKind};
use maria_core::model::{Disabled, ModelConfig};
use maria_core::train::TrainConfig;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::Failure;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub model: ModelConfig,
    pub generator: GeneratorConfig,
    pub profile_seed: u64,
    pub count: usize,
    pub data_seed: u64,
    pub train: TrainConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            model: ModelConfig::default(),
            generator: GeneratorConfig::default(),
            profile_seed: 0,
            count: 1000,
            data_seed: 0,
            train: TrainConfig::default(),
        }
    }
}

impl RunConfig {
    /// Base of `gradcheck`: a model small enough to difference every entry.
    pub fn tiny() -> Self {
        let schema = Schema {
            scenarios: 2,
            users: 6,
            items: 10,
            user_attr_vocab: 4,
            item_attr_vocab: 5,
            trigger_attr_vocab: 3,
            context_attr_vocab: 4,
            user_attrs: 1,
            item_attrs: 1,
            trigger_attrs: 1,
            context_attrs: 1,
            max_behaviors: 4,
            trigger_dim: 4,
        };
        Self {
            model: ModelConfig {
                schema,
                d_user: 4,
                d_item: 4,
                d_attr: 2,
                d_context: 2,
                d_scenario: 3,
                heads: 2,
                ff_mult: 2,
                sim_hidden: 4,
                experts: 2,
                expert_layers: vec![6, 4],
                tower_layers: vec![5, 4],
                fs_hidden: vec![4],
                refiners: vec![1, 2, 1, 1, 1],
                refine_ratio: 0.5,
                d_r: 3,
                lambda: 2.0,
                temperature: 1.0,
                init_seed: 11,
                ..ModelConfig::default()
            },
            generator: GeneratorConfig {
                trigger_kinds: Some(vec![TriggerKind::Image, TriggerKind::Product]),
                ..GeneratorConfig::default()
            },
            count: 8,
            ..Self::default()
        }
    }

    pub fn set(&mut self, key: &str, raw: &str) -> Result<(), Failure> {
        let spec = KEYS
            .iter()
            .find(|k| k.key == key)
            .ok_or_else(|| Failure::Usage(format!("unknown config key `{key}` (see --help for the list)")))?;
        let bad = |why: String| Failure::Usage(format!("config key `{key}`: {why}"));
        if spec.kind == Kind::Disable {
            let raw = raw.trim();
            self.model.disable = if raw == "none" {
                Disabled::default()
            } else {
                Disabled::parse(raw).map_err(|e| bad(e.to_string()))?
            };
            return Ok(());
        }
        let mut view = serde_json::to_value(&*self).expect("config serialises");
        let slot = spec
            .path
            .iter()
            .try_fold(&mut view, |v, p| v.get_mut(*p))
            .expect("key table paths exist");
        *slot = parse_value(spec.kind, slot, raw.trim()).map_err(bad)?;
        *self = serde_json::from_value(view).map_err(|e| bad(format!("invalid value `{raw}`: {e}")))?;
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<String> {
        let spec = KEYS.iter().find(|k| k.key == key)?;
        if spec.kind == Kind::Disable {
            let names = self.model.disable.names();
            return Some(if names.is_empty() {
                "none".into()
            } else {
                names.join(",")
            });
        }
        let view = serde_json::to_value(self).expect("config serialises");
        let v = spec.path.iter().try_fold(&view, |v, p| v.get(*p))?;
        Some(show(v))
    }

    /// Reads `key = value` lines; `#` starts a comment.
    pub fn apply_file(&mut self, path: &Path) -> Result<(), Failure> {
        let text = std::fs::read_to_string(path).map_err(|e| Failure::Io(format!("{}: {e}", path.display())))?;
        for (n, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Failure::Usage(format!("{}: line {}: expected `key = value`", path.display(), n + 1)))?;
            self.set(k.trim(), v.trim())
                .map_err(|e| Failure::Usage(format!("{}: line {}: {}", path.display(), n + 1, e.message())))?;
        }
        Ok(())
    }

    /// Applies `KEY=VALUE` overrides.
    pub fn apply_overrides(&mut self, pairs: &[String]) -> Result<(), Failure> {
        for p in pairs {
            let (k, v) = p
                .split_once('=')
                .ok_or_else(|| Failure::Usage(format!("--set `{p}`: expected KEY=VALUE")))?;
            self.set(k.trim(), v.trim())?;
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Kind {
    /// Parsed after the JSON type of the current value.
    Scalar,
    UintList,
    /// `auto` restores the library default.
    OptFloatList,
    OptStrList,
    Disable,
}

struct KeySpec {
    key: &'static str,
    path: &'static [&'static str],
    kind: Kind,
    doc: &'static str,
}

macro_rules! keys {
    ($( $key:literal => [$($p:literal),+] $kind:ident, $doc:literal; )*) => {
        const KEYS: &[KeySpec] = &[ $( KeySpec { key: $key, path: &[$($p),+], kind: Kind::$kind, doc: $doc }, )* ];
    };
}

keys! {
    "scenarios" => ["model", "schema", "scenarios"] Scalar, "number of scenarios N_s";
    "users" => ["model", "schema", "users"] Scalar, "user id vocabulary";
    "items" => ["model", "schema", "items"] Scalar, "item id vocabulary";
    "user_attr_vocab" => ["model", "schema", "user_attr_vocab"] Scalar, "user attribute vocabulary";
    "item_attr_vocab" => ["model", "schema", "item_attr_vocab"] Scalar, "item attribute vocabulary";
    "trigger_attr_vocab" => ["model", "schema", "trigger_attr_vocab"] Scalar, "trigger attribute vocabulary";
    "context_attr_vocab" => ["model", "schema", "context_attr_vocab"] Scalar, "context attribute vocabulary";
    "user_attrs" => ["model", "schema", "user_attrs"] Scalar, "attributes per user";
    "item_attrs" => ["model", "schema", "item_attrs"] Scalar, "attributes per item";
    "trigger_attrs" => ["model", "schema", "trigger_attrs"] Scalar, "attributes per product trigger";
    "context_attrs" => ["model", "schema", "context_attrs"] Scalar, "context attributes";
    "max_behaviors" => ["model", "schema", "max_behaviors"] Scalar, "behavior sequence capacity m";
    "trigger_dim" => ["model", "schema", "trigger_dim"] Scalar, "dense trigger width";
    "traffic_share" => ["generator", "traffic_share"] OptFloatList, "per-scenario traffic shares, summing to 1 (auto: equal)";
    "trigger_kinds" => ["generator", "trigger_kinds"] OptStrList, "per-scenario trigger kind: image|product|none (auto: cycle)";
    "noise_std" => ["generator", "noise_std"] Scalar, "label noise standard deviation";
    "importance" => ["generator", "importance"] Scalar, "field importance: disjoint|shared|random|zero";
    "weight_scale" => ["generator", "weight_scale"] Scalar, "magnitude of ground-truth weights";
    "label_bias" => ["generator", "label_bias"] Scalar, "ground-truth logit bias";
    "label_mode" => ["generator", "label_mode"] Scalar, "bernoulli|threshold";
    "profile_seed" => ["profile_seed"] Scalar, "seed of the scenario profiles (the data world)";
    "count" => ["count"] Scalar, "instances written by gen-data";
    "data_seed" => ["data_seed"] Scalar, "sampling seed of gen-data";
    "model" => ["model", "kind"] Scalar, "maria|hard_sharing|shared_bottom|mmoe";
    "disable" => ["model", "disable"] Disable, "removed modules: fs,fr,fcm,nl,st,gs (none: full model)";
    "d_user" => ["model", "d_user"] Scalar, "user embedding width";
    "d_item" => ["model", "d_item"] Scalar, "item embedding width";
    "d_attr" => ["model", "d_attr"] Scalar, "attribute embedding width";
    "d_context" => ["model", "d_context"] Scalar, "context embedding width";
    "d_scenario" => ["model", "d_scenario"] Scalar, "scenario embedding width";
    "heads" => ["model", "heads"] Scalar, "attention heads";
    "ff_mult" => ["model", "ff_mult"] Scalar, "transformer feed-forward expansion";
    "sim_hidden" => ["model", "sim_hidden"] Scalar, "hidden width of the trigger scorer";
    "experts" => ["model", "experts"] Scalar, "experts N_e";
    "expert_layers" => ["model", "expert_layers"] UintList, "expert widths";
    "tower_layers" => ["model", "tower_layers"] UintList, "scenario and shared tower widths";
    "fs_hidden" => ["model", "fs_hidden"] UintList, "hidden widths of the scaling network";
    "refiners" => ["model", "refiners"] UintList, "refiners per field: behavior,user,item,trigger,context";
    "refine_ratio" => ["model", "refine_ratio"] Scalar, "refiner output width over field width";
    "d_r" => ["model", "d_r"] Scalar, "field correlation projection width";
    "lambda" => ["model", "lambda"] Scalar, "feature scaling bound";
    "temperature" => ["model", "temperature"] Scalar, "Gumbel-softmax temperature";
    "init_seed" => ["model", "init_seed"] Scalar, "parameter initialisation seed";
    "learning_rate" => ["train", "learning_rate"] Scalar, "Adam step size";
    "batch_size" => ["train", "batch_size"] Scalar, "mini-batch size";
    "weight_decay" => ["train", "weight_decay"] Scalar, "decoupled weight decay";
    "decay_rate" => ["train", "decay_rate"] Scalar, "recorded with the run, not applied";
    "epochs" => ["train", "epochs"] Scalar, "training epochs";
    "seed" => ["train", "seed"] Scalar, "batch order and Gumbel noise seed";
    "eval_every" => ["train", "eval_every"] Scalar, "validation cadence in epochs (0: off)";
    "early_stopping" => ["train", "early_stopping"] Scalar, "stop on validation AUC";
    "patience" => ["train", "patience"] Scalar, "early-stopping patience";
    "validation_fraction" => ["train", "validation_fraction"] Scalar, "held-out share when validating";
    "workers" => ["train", "workers"] Scalar, "evaluation threads";
}

fn parse_value(kind: Kind, current: &Value, raw: &str) -> Result<Value, String> {
    let list = |raw: &str| -> Vec<String> {
        raw.split(',')
            .map(|s| s.trim().to_string())
            .filter(|s| !s.is_empty())
            .collect()
    };
    let uint = |s: &str| {
        s.parse::<u64>()
            .map_err(|_| format!("`{s}` is not a non-negative integer"))
    };
    let float = |s: &str| match s.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        _ => Err(format!("`{s}` is not a finite number")),
    };
    Ok(match kind {
        Kind::Scalar => match current {
            Value::Bool(_) => Value::Bool(raw.parse().map_err(|_| format!("`{raw}` is not true|false"))?),
            Value::Number(n) if n.is_u64() => uint(raw)?.into(),
            Value::Number(_) => float(raw)?.into(),
            _ => Value::String(raw.to_string()),
        },
        Kind::UintList => list(raw).iter().map(|s| uint(s)).collect::<Result<Vec<_>, _>>()?.into(),
        Kind::OptFloatList if raw == "auto" => Value::Null,
        Kind::OptFloatList => list(raw)
            .iter()
            .map(|s| float(s))
            .collect::<Result<Vec<_>, _>>()?
            .into(),
        Kind::OptStrList if raw == "auto" => Value::Null,
        Kind::OptStrList => {
            for s in list(raw) {
                s.parse::<TriggerKind>().map_err(|e| e.to_string())?;
            }
            list(raw).into()
        }
        Kind::Disable => unreachable!("handled by the caller"),
    })
}

fn show(v: &Value) -> String {
    match v {
        Value::Null => "auto".into(),
        Value::String(s) => s.clone(),
        Value::Array(a) => a.iter().map(show).collect::<Vec<_>>().join(","),
        other => other.to_string(),
    }
}

/// Every key with its default and meaning, for `--help`.
pub fn key_table(base: &RunConfig, title: &str) -> String {
    let width = KEYS.iter().map(|k| k.key.len()).max().unwrap_or(0);
    let dwidth = KEYS
        .iter()
        .map(|k| base.get(k.key).unwrap_or_default().len())
        .max()
        .unwrap_or(0);
    let mut out = format!("{title}\n");
    for k in KEYS {
        out.push_str(&format!(
            "  {:<width$}  {:<dwidth$}  {}\n",
            k.key,
            base.get(k.key).unwrap_or_default(),
            k.doc
        ));
    }
    out
}
