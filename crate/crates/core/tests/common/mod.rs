#![allow(dead_code)]

use maria_core::data::{
    build_profiles, generate, BehaviorItem, GeneratorConfig, Instance, Schema, Trigger, TriggerKind,
};
use maria_core::model::ModelConfig;

pub fn tiny_schema() -> Schema {
    Schema {
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
    }
}

/// Every width at most 8, two scenarios, two experts, two user refiners.
pub fn tiny_config() -> ModelConfig {
    ModelConfig {
        schema: tiny_schema(),
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
    }
}

/// Instances covering every trigger kind, an empty and a full behavior
/// sequence, and both scenarios.
pub fn tiny_batch() -> Vec<Instance> {
    let cfg = GeneratorConfig {
        trigger_kinds: Some(vec![TriggerKind::Image, TriggerKind::Product]),
        ..GeneratorConfig::default()
    };
    let schema = tiny_schema();
    let profiles = build_profiles(&schema, &cfg, 5).unwrap();
    let (_, mut data) = generate(&profiles, &schema, 6, 9).unwrap();
    data[0].behavior.clear();
    data[1].behavior = (0..4)
        .map(|k| BehaviorItem {
            item: k + 2,
            attrs: vec![k % 5],
        })
        .collect();
    data[2].trigger = Trigger::None;
    data[3].scenario = 0;
    data[3].trigger = Trigger::Image {
        vector: vec![0.3, -0.2, 0.9, 0.1],
    };
    data[4].scenario = 1;
    data[4].trigger = Trigger::Product {
        item: 7,
        attrs: vec![2],
    };
    data
}

pub fn refs(data: &[Instance]) -> Vec<&Instance> {
    data.iter().collect()
}
