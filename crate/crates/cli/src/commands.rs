use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::json;
use sirank::data::{
    apply_standardization, fit_standardization, load_dataset, save_dataset, split_holdout, FeatureSchema,
};
use sirank::generator::{generate as generate_data, GeneratorConfig};
use sirank::metrics::mean_ndcg;
use sirank::perturbation::{apply_case, CaseKind, PerturbationCase};
use sirank::provenance::{file_fingerprint, sha256_hex, Provenance};
use sirank::scoring::{Checkpoint, ModelConfig, RankingModel};
use sirank::trainer::{train as train_model, ExperimentConfig, ExperimentReport, TrainConfig};

use crate::{
    EvaluateArgs, ExperimentArgs, GenerateArgs, GeneratorOverrides, Hyper, PerturbArgs, ReportArgs, ReportFormat,
    TrainArgs,
};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Lib(#[from] sirank::Error),
    #[error("{} experiment cell(s) failed:\n  {}", .0.len(), .0.join("\n  "))]
    CellsFailed(Vec<String>),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Lib(sirank::Error::Training(_)) | CliError::CellsFailed(_) => 4,
            CliError::Lib(_) => 3,
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Lib(e.into())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Lib(e.into())
    }
}

type Result<T> = std::result::Result<T, CliError>;

/// `<path>.meta.json`, the provenance file written next to JSON Lines and schema outputs.
fn sidecar_path(path: &Path) -> PathBuf {
    let mut name = path.as_os_str().to_owned();
    name.push(".meta.json");
    PathBuf::from(name)
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    fs::write(path, serde_json::to_string_pretty(value)? + "\n")?;
    Ok(())
}

fn write_sidecar(path: &Path, provenance: &Provenance, extra: serde_json::Value) -> Result<()> {
    write_json(&sidecar_path(path), &json!({ "provenance": provenance, "details": extra }))
}

fn with_file(provenance: Provenance, name: &str, path: &Path) -> Result<Provenance> {
    Ok(provenance.with_input(name, file_fingerprint(path)?))
}

fn case_list(numbers: &[u8]) -> Result<Vec<PerturbationCase>> {
    Ok(numbers
        .iter()
        .map(|&n| CaseKind::from_number(n).map(PerturbationCase::new))
        .collect::<sirank::Result<_>>()?)
}

fn generator_config(overrides: &GeneratorOverrides, seed: u64) -> Result<GeneratorConfig> {
    let mut config = match &overrides.config {
        Some(path) => GeneratorConfig::load(path)?,
        None => GeneratorConfig::default(),
    };
    if let Some(n) = overrides.queries {
        config.num_queries = n;
    }
    config.seed = seed;
    config.validate()?;
    Ok(config)
}

fn apply_model_overrides(h: &Hyper, model: &mut ModelConfig) {
    if let Some(w) = &h.widths {
        model.widths = w.clone();
    }
    if let Some(l) = h.compressor_dim {
        model.compressor_dim = l;
    }
}

pub fn generate(args: GenerateArgs) -> Result<()> {
    let config = generator_config(&args.generator, args.seed)?;
    let generated = generate_data(&config)?;
    save_dataset(&args.out, &generated.dataset, &generated.schema)?;
    generated.schema.save(&args.schema)?;
    let provenance = Provenance::new(Some(args.seed));
    let details = json!({ "generator": config });
    write_sidecar(&args.out, &provenance, details.clone())?;
    write_sidecar(&args.schema, &provenance, details)?;
    println!(
        "wrote {} queries to {} (schema {})",
        generated.dataset.len(),
        args.out.display(),
        args.schema.display()
    );
    Ok(())
}

pub fn train(args: TrainArgs) -> Result<()> {
    let schema = FeatureSchema::load(&args.schema)?;
    let ds = load_dataset(&args.data, &schema)?;
    let mut config = TrainConfig {
        seed: args.seed,
        ..TrainConfig::new(args.loss, args.mode)
    };
    let h = &args.hyper;
    config.max_epochs = h.epochs.unwrap_or(config.max_epochs);
    config.patience = h.patience.unwrap_or(config.patience);
    config.learning_rate = h.lr.unwrap_or(config.learning_rate);
    config.softrank_sigma = h.sigma.unwrap_or(config.softrank_sigma);
    apply_model_overrides(h, &mut config.model);
    config.validate()?;
    RankingModel::new(&schema, config.mode, config.model.clone(), 0)?;

    let split = split_holdout(&ds, args.seed)?;
    let stats = fit_standardization(&split.train, &schema)?;
    let train_set = apply_standardization(&split.train, &stats, &schema)?;
    let validation = apply_standardization(&split.validation, &stats, &schema)?;
    let test = apply_standardization(&split.test, &stats, &schema)?;
    let (model, history) = train_model(&schema, &train_set, &validation, &config)?;
    let test_ndcg = mean_ndcg(&model, &test)?.mean;

    let provenance = with_file(Provenance::new(Some(args.seed)), "schema", &args.schema)?;
    let provenance = with_file(provenance, "data", &args.data)?;
    Checkpoint::new(&model, &schema, &stats, provenance).save(&args.out)?;
    println!("loss {} mode {}", config.loss, config.mode);
    println!(
        "epochs {} ({}), best epoch {}",
        history.epochs.len(),
        history.stop_reason.as_str(),
        history.best_epoch
    );
    println!("validation NDCG {:.6}", history.best_validation_ndcg());
    println!("test NDCG {test_ndcg:.6}");
    println!("checkpoint {}", args.out.display());
    Ok(())
}

#[derive(Serialize)]
struct CaseResult {
    case: String,
    mean_ndcg: f64,
}

#[derive(Serialize)]
struct EvaluationOutput {
    provenance: Provenance,
    queries: usize,
    mean_ndcg: f64,
    cases: Vec<CaseResult>,
    per_query: Vec<f64>,
}

pub fn evaluate(args: EvaluateArgs) -> Result<()> {
    let schema = FeatureSchema::load(&args.schema)?;
    let cases = case_list(&args.cases)?;
    let (model, stats) = Checkpoint::load(&args.model)?.into_model(&schema)?;
    let ds = load_dataset(&args.data, &schema)?;
    let clean = mean_ndcg(&model, &apply_standardization(&ds, &stats, &schema)?)?;
    let mut case_results = Vec::new();
    for case in &cases {
        let perturbed = apply_standardization(&apply_case(&ds, &schema, case)?, &stats, &schema)?;
        case_results.push(CaseResult {
            case: case.label(),
            mean_ndcg: mean_ndcg(&model, &perturbed)?.mean,
        });
    }

    println!("clean   {:.6}", clean.mean);
    for c in &case_results {
        println!("{:<7} {:.6}", c.case, c.mean_ndcg);
    }
    if let Some(out) = &args.out {
        let provenance = with_file(Provenance::new(None), "schema", &args.schema)?;
        let provenance = with_file(provenance, "data", &args.data)?;
        let provenance = with_file(provenance, "model", &args.model)?;
        write_json(
            out,
            &EvaluationOutput {
                provenance,
                queries: clean.count,
                mean_ndcg: clean.mean,
                cases: case_results,
                per_query: clean.per_query,
            },
        )?;
    }
    Ok(())
}

pub fn perturb(args: PerturbArgs) -> Result<()> {
    let schema = FeatureSchema::load(&args.schema)?;
    let case = PerturbationCase::new(CaseKind::from_number(args.case)?);
    let ds = load_dataset(&args.input, &schema)?;
    save_dataset(&args.out, &apply_case(&ds, &schema, &case)?, &schema)?;
    let provenance = with_file(Provenance::new(None), "schema", &args.schema)?;
    let provenance = with_file(provenance, "data", &args.input)?;
    write_sidecar(&args.out, &provenance, json!({ "case": case }))?;
    println!("{} applied to {} queries -> {}", case.label(), ds.len(), args.out.display());
    Ok(())
}

fn experiment_config(args: &ExperimentArgs) -> Result<ExperimentConfig> {
    let mut config: ExperimentConfig = match &args.experiment_config {
        Some(path) => serde_json::from_str(&fs::read_to_string(path)?)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    if let Some(losses) = &args.loss {
        config.losses = losses.clone();
    }
    if let Some(modes) = &args.mode {
        config.modes = modes.clone();
    }
    if let Some(cases) = &args.cases {
        config.cases = case_list(cases)?;
    }
    let h = &args.hyper;
    config.max_epochs = h.epochs.unwrap_or(config.max_epochs);
    config.patience = h.patience.unwrap_or(config.patience);
    config.learning_rate = h.lr.unwrap_or(config.learning_rate);
    config.softrank_sigma = h.sigma.unwrap_or(config.softrank_sigma);
    apply_model_overrides(h, &mut config.model);
    Ok(config)
}

/// Rejects settings that would make every cell fail.
fn check_experiment(config: &ExperimentConfig, schema: &FeatureSchema) -> Result<()> {
    for &mode in &config.modes {
        let probe = TrainConfig {
            max_epochs: config.max_epochs,
            patience: config.patience,
            learning_rate: config.learning_rate,
            softrank_sigma: config.softrank_sigma,
            model: config.model.clone(),
            ..TrainConfig::new(sirank::losses::LossKind::RankNet, mode)
        };
        probe.validate()?;
        RankingModel::new(schema, mode, config.model.clone(), 0)?;
    }
    Ok(())
}

pub fn experiment(args: ExperimentArgs) -> Result<()> {
    let config = experiment_config(&args)?;
    let mut provenance = Provenance::new(Some(config.seed));
    let (schema, ds, utility) = if args.generate {
        let gen = generator_config(&args.generator, config.seed)?;
        provenance = provenance.with_input("generator", sha256_hex(serde_json::to_string(&gen)?.as_bytes()));
        let g = generate_data(&gen)?;
        (g.schema, g.dataset, Some(g.utility))
    } else {
        let (schema_path, data_path) = (args.schema.as_ref().unwrap(), args.data.as_ref().unwrap());
        provenance = with_file(provenance, "schema", schema_path)?;
        provenance = with_file(provenance, "data", data_path)?;
        let schema = FeatureSchema::load(schema_path)?;
        let ds = load_dataset(data_path, &schema)?;
        (schema, ds, None)
    };
    check_experiment(&config, &schema)?;

    let report = sirank::trainer::run_experiment(&ds, &schema, &config, utility.as_ref(), provenance)?;
    fs::create_dir_all(&args.out)?;
    fs::write(args.out.join("report.json"), report.to_json()?)?;
    fs::write(args.out.join("report.csv"), report.to_csv())?;
    let text = report.to_text();
    fs::write(args.out.join("report.txt"), &text)?;
    print!("{text}");

    let failed = report.failed_cells();
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::CellsFailed(failed))
    }
}

pub fn report(args: ReportArgs) -> Result<()> {
    let report: ExperimentReport = serde_json::from_str(&fs::read_to_string(&args.input)?)?;
    let rendered = match args.format {
        ReportFormat::Text => report.to_text(),
        ReportFormat::Csv => report.to_csv(),
        ReportFormat::Json => report.to_json()?,
    };
    match &args.out {
        Some(path) => fs::write(path, rendered)?,
        None => print!("{rendered}"),
    }
    Ok(())
}
