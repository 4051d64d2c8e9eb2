use std::path::{Path, PathBuf};
use std::time::Instant;

use maria_core::autodiff::gradcheck::{check_params, GradCheckOptions};
use maria_core::autodiff::Primitive;
use maria_core::data::{build_profiles, generate, read_jsonl, write_jsonl, DatasetManifest, Instance};
use maria_core::model::{load_checkpoint, loss, save_checkpoint, Disabled, Mode, Model, ModelKind};
use maria_core::train::{ablate as run_ablation, check_schema, evaluate, train as run_training};
use maria_core::train::{EvalOptions, EvalReport, Metric, TrainConfig, TrainOutcome};
use serde::Serialize;

use crate::config::RunConfig;
use crate::{ConfigArgs, Failure};

fn load_config(base: RunConfig, args: &ConfigArgs) -> Result<RunConfig, Failure> {
    let mut cfg = base;
    if let Some(path) = &args.config {
        cfg.apply_file(path)?;
    }
    cfg.apply_overrides(&args.set)?;
    Ok(cfg)
}

fn to_json<T: Serialize>(v: &T) -> String {
    serde_json::to_string_pretty(v).expect("report serialises")
}

fn write_file(path: &Path, text: &str) -> Result<(), Failure> {
    std::fs::write(path, text).map_err(|e| Failure::Io(format!("{}: {e}", path.display())))
}

fn load_data(path: &Path, cfg: &maria_core::model::ModelConfig) -> Result<Vec<Instance>, Failure> {
    let (manifest, data) = read_jsonl(path)?;
    check_schema(cfg, &manifest.schema).map_err(|e| Failure::Usage(format!("{}: {}", path.display(), e)))?;
    Ok(data)
}

fn fm(m: Metric) -> String {
    format!("{m:.4}")
}

fn manifest_summary(m: &DatasetManifest) -> String {
    let mut out = format!("{} instances, seed {}, Bayes AUC {:.4}\n", m.count, m.seed, m.bayes_auc);
    out.push_str("scenario  count  positive_rate  bayes_auc\n");
    for s in 0..m.schema.scenarios {
        out.push_str(&format!(
            "{:>8}  {:>5}  {:>13}  {:>9}\n",
            s,
            m.scenario_counts[s],
            fm(m.positive_rates[s]),
            fm(m.bayes_auc_per_scenario[s])
        ));
    }
    out
}

pub fn gen_data(
    args: &ConfigArgs,
    out: &Path,
    count: Option<usize>,
    seed: Option<u64>,
    json: bool,
) -> Result<(), Failure> {
    let cfg = load_config(RunConfig::default(), args)?;
    let schema = &cfg.model.schema;
    schema.validate()?;
    let profiles = build_profiles(schema, &cfg.generator, cfg.profile_seed)?;
    let (manifest, data) = generate(
        &profiles,
        schema,
        count.unwrap_or(cfg.count),
        seed.unwrap_or(cfg.data_seed),
    )?;
    write_jsonl(out, &manifest, &data)?;
    if json {
        println!("{}", to_json(&manifest));
    } else {
        print!("{}", manifest_summary(&manifest));
    }
    Ok(())
}

pub struct TrainArgs {
    pub cfg: ConfigArgs,
    pub data: PathBuf,
    pub model_out: PathBuf,
    pub metrics_out: Option<PathBuf>,
    pub eval_data: Option<PathBuf>,
    pub baseline: Option<String>,
    pub disable: Option<String>,
    pub workers: Option<usize>,
    pub json: bool,
}

#[derive(Serialize)]
struct TrainMetrics<'a> {
    model: &'a str,
    disabled: Vec<&'static str>,
    config_digest: String,
    param_count: usize,
    train_config: &'a TrainConfig,
    outcome: &'a TrainOutcome,
    report: &'a EvalReport,
}

pub fn train(a: &TrainArgs) -> Result<(), Failure> {
    let mut cfg = load_config(RunConfig::default(), &a.cfg)?;
    if let Some(b) = &a.baseline {
        let kind: ModelKind = b.parse().map_err(|e| Failure::Usage(format!("--baseline: {e}")))?;
        if kind == ModelKind::Maria {
            return Err(Failure::Usage(
                "--baseline: expected hard_sharing, shared_bottom or mmoe".into(),
            ));
        }
        cfg.model.kind = kind;
    }
    if let Some(d) = &a.disable {
        cfg.model.disable = Disabled::parse(d).map_err(|e| Failure::Usage(format!("--disable: {e}")))?;
    }
    if let Some(w) = a.workers {
        cfg.train.workers = w;
    }
    cfg.train.validate()?;
    let data = load_data(&a.data, &cfg.model)?;
    let eval_data = match &a.eval_data {
        Some(p) => Some(load_data(p, &cfg.model)?),
        None => None,
    };

    let start = Instant::now();
    let mut model = Model::new(cfg.model.clone())?;
    eprintln!(
        "training {} ({} parameters) on {} instances",
        cfg.model.kind.name(),
        model.param_count(),
        data.len()
    );
    let outcome = run_training(&mut model, &data, &cfg.train)?;
    for e in &outcome.epochs {
        match e.validation_auc {
            Some(v) => eprintln!("epoch {:>3}  loss {:.5}  validation AUC {:.4}", e.epoch, e.mean_loss, v),
            None => eprintln!("epoch {:>3}  loss {:.5}", e.epoch, e.mean_loss),
        }
    }
    if outcome.stopped_early {
        eprintln!("stopped early");
    }
    save_checkpoint(&model, &a.model_out)?;

    let opts = EvalOptions {
        batch_size: cfg.train.batch_size,
        workers: cfg.train.workers,
    };
    let report = evaluate(&model, eval_data.as_deref().unwrap_or(&data), &opts)?;
    let metrics = TrainMetrics {
        model: cfg.model.kind.name(),
        disabled: cfg.model.disable.names(),
        config_digest: cfg.model.digest(),
        param_count: model.param_count(),
        train_config: &cfg.train,
        outcome: &outcome,
        report: &report,
    };
    let text = to_json(&metrics);
    let metrics_path = a.metrics_out.clone().unwrap_or_else(|| {
        let mut p = a.model_out.clone().into_os_string();
        p.push(".metrics.json");
        p.into()
    });
    write_file(&metrics_path, &text)?;
    eprintln!("done in {:.1}s", start.elapsed().as_secs_f64());
    if a.json {
        println!("{text}");
    } else {
        print!("{}", render_report(&report));
    }
    Ok(())
}

fn render_report(r: &EvalReport) -> String {
    let mut out = format!(
        "model {}{}\n{} instances  loss {:.5}  AUC {:.4}  PCOC {:.4}  mean scenario AUC {:.4}\n",
        r.model,
        if r.disabled.is_empty() {
            String::new()
        } else {
            format!(" (without {})", r.disabled.join(","))
        },
        r.count,
        r.loss,
        r.overall_auc,
        r.overall_pcoc,
        r.mean_scenario_auc
    );
    out.push_str("scenario  count  positives     AUC    PCOC\n");
    for s in &r.scenarios {
        out.push_str(&format!(
            "{:>8}  {:>5}  {:>9}  {:>6}  {:>6}\n",
            s.scenario,
            s.count,
            s.positives,
            fm(s.auc),
            fm(s.pcoc)
        ));
    }
    if !r.refiner_histograms.is_empty() {
        out.push_str("refiner selection\n");
        for h in &r.refiner_histograms {
            let dist: Vec<String> = h.distribution().iter().map(|p| format!("{p:.3}")).collect();
            out.push_str(&format!("  {:<8} S{}  [{}]\n", h.field, h.scenario, dist.join(", ")));
        }
    }
    for w in &r.warnings {
        out.push_str(&format!("warning: {w}\n"));
    }
    out
}

pub fn eval(model: &Path, data: &Path, batch_size: usize, workers: usize, json: bool) -> Result<(), Failure> {
    if batch_size == 0 || workers == 0 {
        return Err(Failure::Usage("--batch-size and --workers must be positive".into()));
    }
    let model = load_checkpoint(model, None)?;
    let data = load_data(data, &model.config)?;
    let report = evaluate(&model, &data, &EvalOptions { batch_size, workers })?;
    if json {
        println!("{}", to_json(&report));
    } else {
        print!("{}", render_report(&report));
    }
    Ok(())
}

pub fn ablate(
    args: &ConfigArgs,
    data: &Path,
    test: &Path,
    variants: &str,
    workers: Option<usize>,
    json: bool,
) -> Result<(), Failure> {
    let mut cfg = load_config(RunConfig::default(), args)?;
    if let Some(w) = workers {
        cfg.train.workers = w;
    }
    let variants: Vec<String> = variants
        .split(',')
        .map(|s| s.trim().to_string())
        .filter(|s| !s.is_empty())
        .collect();
    let train_data = load_data(data, &cfg.model)?;
    let test_data = load_data(test, &cfg.model)?;
    let table = run_ablation(&cfg.model, &train_data, &test_data, &variants, &cfg.train)?;
    if json {
        println!("{}", to_json(&table));
    } else {
        print!("{}", table.render());
    }
    Ok(())
}

fn parse_fault(spec: &str) -> Result<(Primitive, f64), Failure> {
    let (name, factor) = spec.split_once(':').unwrap_or((spec, "1.5"));
    let prim: Primitive = name
        .parse()
        .map_err(|e| Failure::Usage(format!("--inject-fault: {e}")))?;
    let factor: f64 = factor
        .parse()
        .map_err(|_| Failure::Usage(format!("--inject-fault: bad factor `{factor}`")))?;
    Ok((prim, factor))
}

pub fn gradcheck(args: &ConfigArgs, seed: u64, json: bool, fault: Option<&str>) -> Result<(), Failure> {
    let cfg = load_config(RunConfig::tiny(), args)?;
    let opts = GradCheckOptions {
        seed,
        fault: fault.map(parse_fault).transpose()?,
        ..GradCheckOptions::default()
    };
    let schema = &cfg.model.schema;
    let profiles = build_profiles(schema, &cfg.generator, cfg.profile_seed)?;
    let (_, data) = generate(&profiles, schema, cfg.count, cfg.data_seed)?;
    let batch: Vec<&Instance> = data.iter().collect();
    let labels: Vec<f64> = data.iter().map(|i| f64::from(i.label)).collect();

    let start = Instant::now();
    let model = Model::new(cfg.model.clone())?;
    let mut store = model.store.clone();
    let report = check_params(
        &mut store,
        |store, g| {
            let t = model.forward_with(g, store, &batch, Mode::Train)?;
            loss(g, t.pred, &labels)
        },
        &opts,
    )?;
    if json {
        println!("{}", to_json(&report));
    } else {
        print!("{}", report.render());
        eprintln!(
            "{} parameters checked in {:.2}s",
            model.param_count(),
            start.elapsed().as_secs_f64()
        );
    }
    if report.passed {
        Ok(())
    } else {
        Err(Failure::Check(format!(
            "gradient check failed in: {}",
            report.failing_groups().join(", ")
        )))
    }
}
