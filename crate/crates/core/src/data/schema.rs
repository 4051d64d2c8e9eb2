use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Vocabulary sizes and per-field attribute counts shared by data and model.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Schema {
    pub scenarios: usize,
    pub users: usize,
    pub items: usize,
    pub user_attr_vocab: usize,
    pub item_attr_vocab: usize,
    pub trigger_attr_vocab: usize,
    pub context_attr_vocab: usize,
    /// L
    pub user_attrs: usize,
    /// P
    pub item_attrs: usize,
    /// O
    pub trigger_attrs: usize,
    /// N_c
    pub context_attrs: usize,
    /// m, behavior capacity
    pub max_behaviors: usize,
    /// Width of dense image triggers and of the projected product trigger.
    pub trigger_dim: usize,
}

impl Default for Schema {
    fn default() -> Self {
        Self {
            scenarios: 3,
            users: 1000,
            items: 2000,
            user_attr_vocab: 20,
            item_attr_vocab: 50,
            trigger_attr_vocab: 20,
            context_attr_vocab: 10,
            user_attrs: 2,
            item_attrs: 2,
            trigger_attrs: 1,
            context_attrs: 2,
            max_behaviors: 8,
            trigger_dim: 8,
        }
    }
}

impl Schema {
    /// Total feature elements: `L + P + O + N_c + 4`.
    pub fn element_count(&self) -> usize {
        self.user_attrs + self.item_attrs + self.trigger_attrs + self.context_attrs + 4
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("scenarios", self.scenarios),
            ("users", self.users),
            ("items", self.items),
            ("user_attr_vocab", self.user_attr_vocab),
            ("item_attr_vocab", self.item_attr_vocab),
            ("trigger_attr_vocab", self.trigger_attr_vocab),
            ("context_attr_vocab", self.context_attr_vocab),
            ("max_behaviors", self.max_behaviors),
            ("trigger_dim", self.trigger_dim),
        ];
        for (key, v) in positive {
            if v == 0 {
                return Err(Error::config(key, "must be at least 1"));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BehaviorItem {
    pub item: usize,
    pub attrs: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Trigger {
    Image { vector: Vec<f64> },
    Product { item: usize, attrs: Vec<usize> },
    None,
}

impl Trigger {
    pub fn kind(&self) -> TriggerKind {
        match self {
            Trigger::Image { .. } => TriggerKind::Image,
            Trigger::Product { .. } => TriggerKind::Product,
            Trigger::None => TriggerKind::None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TriggerKind {
    Image,
    Product,
    None,
}

impl std::str::FromStr for TriggerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "image" => Ok(TriggerKind::Image),
            "product" => Ok(TriggerKind::Product),
            "none" => Ok(TriggerKind::None),
            _ => Err(Error::invalid(format!(
                "unknown trigger kind `{s}` (image|product|none)"
            ))),
        }
    }
}

/// One labeled interaction.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Instance {
    pub scenario: usize,
    pub user: usize,
    pub user_attrs: Vec<usize>,
    /// Oldest first.
    pub behavior: Vec<BehaviorItem>,
    pub target_item: usize,
    pub target_attrs: Vec<usize>,
    pub trigger: Trigger,
    pub context: Vec<usize>,
    pub label: u8,
}

impl Instance {
    /// Checks every id and length against `schema`.
    pub fn validate(&self, schema: &Schema) -> Result<()> {
        fn bad(field: &'static str, reason: String) -> Error {
            Error::MalformedInstance { field, reason }
        }
        fn ids(field: &'static str, xs: &[usize], len: usize, vocab: usize) -> Result<()> {
            if xs.len() != len {
                return Err(bad(field, format!("expected {len} ids, got {}", xs.len())));
            }
            if let Some(&x) = xs.iter().find(|&&x| x >= vocab) {
                return Err(bad(field, format!("id {x} out of range (vocab {vocab})")));
            }
            Ok(())
        }
        if self.scenario >= schema.scenarios {
            return Err(bad(
                "scenario",
                format!("id {} out of range ({} scenarios)", self.scenario, schema.scenarios),
            ));
        }
        if self.user >= schema.users {
            return Err(bad(
                "user",
                format!("id {} out of range (vocab {})", self.user, schema.users),
            ));
        }
        ids(
            "user_attrs",
            &self.user_attrs,
            schema.user_attrs,
            schema.user_attr_vocab,
        )?;
        if self.behavior.len() > schema.max_behaviors {
            return Err(bad(
                "behavior",
                format!(
                    "length {} exceeds capacity {}",
                    self.behavior.len(),
                    schema.max_behaviors
                ),
            ));
        }
        for b in &self.behavior {
            if b.item >= schema.items {
                return Err(bad(
                    "behavior",
                    format!("item {} out of range (vocab {})", b.item, schema.items),
                ));
            }
            ids("behavior", &b.attrs, schema.item_attrs, schema.item_attr_vocab)?;
        }
        if self.target_item >= schema.items {
            return Err(bad(
                "target_item",
                format!("id {} out of range (vocab {})", self.target_item, schema.items),
            ));
        }
        ids(
            "target_attrs",
            &self.target_attrs,
            schema.item_attrs,
            schema.item_attr_vocab,
        )?;
        match &self.trigger {
            Trigger::Image { vector } => {
                if vector.len() != schema.trigger_dim {
                    return Err(bad(
                        "trigger",
                        format!(
                            "image vector width {} != trigger_dim {}",
                            vector.len(),
                            schema.trigger_dim
                        ),
                    ));
                }
                if vector.iter().any(|v| !v.is_finite()) {
                    return Err(bad("trigger", "non-finite image vector entry".into()));
                }
            }
            Trigger::Product { item, attrs } => {
                if *item >= schema.items {
                    return Err(bad(
                        "trigger",
                        format!("item {item} out of range (vocab {})", schema.items),
                    ));
                }
                ids("trigger", attrs, schema.trigger_attrs, schema.trigger_attr_vocab)?;
            }
            Trigger::None => {}
        }
        ids(
            "context",
            &self.context,
            schema.context_attrs,
            schema.context_attr_vocab,
        )?;
        if self.label > 1 {
            return Err(bad("label", format!("{} is not 0 or 1", self.label)));
        }
        Ok(())
    }
}
