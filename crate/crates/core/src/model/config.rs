use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::autodiff::hex;
use crate::data::Schema;
use crate::error::{Error, Result};
use crate::features::FIELD_COUNT;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Maria,
    HardSharing,
    SharedBottom,
    Mmoe,
}

impl std::str::FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "maria" => Ok(ModelKind::Maria),
            "hard_sharing" => Ok(ModelKind::HardSharing),
            "shared_bottom" => Ok(ModelKind::SharedBottom),
            "mmoe" => Ok(ModelKind::Mmoe),
            _ => Err(Error::invalid(format!(
                "unknown model kind `{s}` (maria|hard_sharing|shared_bottom|mmoe)"
            ))),
        }
    }
}

impl ModelKind {
    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Maria => "maria",
            ModelKind::HardSharing => "hard_sharing",
            ModelKind::SharedBottom => "shared_bottom",
            ModelKind::Mmoe => "mmoe",
        }
    }
}

/// Modules switched off for ablation; `true` means removed.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Disabled {
    /// feature scaling
    pub fs: bool,
    /// feature refinement
    pub fr: bool,
    /// field correlation
    pub fcm: bool,
    /// mixture of experts (replaced by one expert)
    pub nl: bool,
    /// shared tower
    pub st: bool,
    /// Gumbel noise in refiner selection (replaced by softmax)
    pub gs: bool,
}

impl Disabled {
    pub const FLAGS: [&'static str; 6] = ["fs", "fr", "fcm", "nl", "st", "gs"];

    pub fn all() -> Self {
        Self {
            fs: true,
            fr: true,
            fcm: true,
            nl: true,
            st: true,
            gs: true,
        }
    }

    /// Parses a comma-separated flag list such as `fs,gs`.
    pub fn parse(list: &str) -> Result<Self> {
        let mut d = Self::default();
        for flag in list.split(',').map(str::trim).filter(|s| !s.is_empty()) {
            d.set(flag)?;
        }
        Ok(d)
    }

    pub fn set(&mut self, flag: &str) -> Result<()> {
        match flag {
            "fs" => self.fs = true,
            "fr" => self.fr = true,
            "fcm" => self.fcm = true,
            "nl" => self.nl = true,
            "st" => self.st = true,
            "gs" => self.gs = true,
            _ => {
                return Err(Error::config(
                    "disable",
                    format!("unknown module `{flag}` (fs|fr|fcm|nl|st|gs)"),
                ))
            }
        }
        Ok(())
    }

    pub fn names(&self) -> Vec<&'static str> {
        let on = [self.fs, self.fr, self.fcm, self.nl, self.st, self.gs];
        Self::FLAGS
            .iter()
            .zip(on)
            .filter(|(_, v)| *v)
            .map(|(n, _)| *n)
            .collect()
    }
}

/// Architecture and initialisation of a model; everything a checkpoint needs
/// to rebuild the parameter layout.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub schema: Schema,
    pub kind: ModelKind,
    pub d_user: usize,
    pub d_item: usize,
    pub d_attr: usize,
    pub d_context: usize,
    pub d_scenario: usize,
    pub heads: usize,
    pub ff_mult: usize,
    /// Hidden width of the trigger-attention scorer.
    pub sim_hidden: usize,
    pub experts: usize,
    pub expert_layers: Vec<usize>,
    /// Scenario and shared tower widths; the head maps the last one to 1.
    pub tower_layers: Vec<usize>,
    pub fs_hidden: Vec<usize>,
    /// Refiner count per field, in field order.
    pub refiners: Vec<usize>,
    pub refine_ratio: f64,
    pub d_r: usize,
    pub lambda: f64,
    pub temperature: f64,
    pub disable: Disabled,
    pub init_seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            schema: Schema::default(),
            kind: ModelKind::Maria,
            d_user: 8,
            d_item: 8,
            d_attr: 4,
            d_context: 4,
            d_scenario: 4,
            heads: 2,
            ff_mult: 2,
            sim_hidden: 16,
            experts: 4,
            expert_layers: vec![64, 32],
            tower_layers: vec![128, 64, 32],
            fs_hidden: vec![16],
            refiners: vec![1, 2, 1, 1, 1],
            refine_ratio: 0.5,
            d_r: 8,
            lambda: 2.0,
            temperature: 0.01,
            disable: Disabled::default(),
            init_seed: 0,
        }
    }
}

impl ModelConfig {
    /// Width of one encoded item: id embedding plus its attributes.
    pub fn d_seq(&self) -> usize {
        self.d_item + self.schema.item_attrs * self.d_attr
    }

    /// SHA-256 of the canonical JSON encoding.
    pub fn digest(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("config serialises");
        hex(&Sha256::digest(&bytes))
    }

    pub fn validate(&self) -> Result<()> {
        self.schema.validate()?;
        let positive = [
            ("d_user", self.d_user),
            ("d_item", self.d_item),
            ("d_attr", self.d_attr),
            ("d_context", self.d_context),
            ("d_scenario", self.d_scenario),
            ("heads", self.heads),
            ("ff_mult", self.ff_mult),
            ("sim_hidden", self.sim_hidden),
            ("experts", self.experts),
            ("d_r", self.d_r),
        ];
        for (key, v) in positive {
            if v == 0 {
                return Err(Error::config(key, "must be at least 1"));
            }
        }
        if !self.d_seq().is_multiple_of(self.heads) {
            return Err(Error::config(
                "heads",
                format!("item width {} is not divisible by {} heads", self.d_seq(), self.heads),
            ));
        }
        for (key, v) in [
            ("expert_layers", &self.expert_layers),
            ("tower_layers", &self.tower_layers),
        ] {
            if v.is_empty() || v.contains(&0) {
                return Err(Error::config(key, "needs at least one layer, all widths >= 1"));
            }
        }
        if self.fs_hidden.contains(&0) {
            return Err(Error::config("fs_hidden", "widths must be >= 1"));
        }
        if self.refiners.len() != FIELD_COUNT || self.refiners.contains(&0) {
            return Err(Error::config(
                "refiners",
                format!("needs {FIELD_COUNT} counts, each >= 1"),
            ));
        }
        if !(self.refine_ratio > 0.0 && self.refine_ratio <= 1.0) {
            return Err(Error::config("refine_ratio", "must be in (0, 1]"));
        }
        if !(self.lambda > 0.0) || !self.lambda.is_finite() {
            return Err(Error::config("lambda", "must be > 0"));
        }
        if !(self.temperature > 0.0) || !self.temperature.is_finite() {
            return Err(Error::config("temperature", "must be > 0"));
        }
        Ok(())
    }
}
