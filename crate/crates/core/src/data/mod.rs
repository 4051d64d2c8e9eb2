//! Instance schema, synthetic generator, JSONL files and batching.

mod batch;
mod generate;
mod io;
mod schema;

pub use batch::{batch_iter, BatchIter};
pub use generate::{
    build_profiles, featurize, generate, mix, salt_of, true_logit, DatasetManifest, GeneratorConfig, Importance,
    LabelMode, ScenarioProfile, BAYES_SAMPLE,
};
pub use io::{manifest_path, read_jsonl, read_manifest, write_jsonl, InstanceReader};
pub use schema::{BehaviorItem, Instance, Schema, Trigger, TriggerKind};
