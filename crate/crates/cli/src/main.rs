//! `decomp` command line.
//!
//! Exit codes: 0 success, 2 input could not be parsed or validated,
//! 3 convergence diagnostics failed, 4 budget over cap, 1 anything else.

use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use decomp_core::api::{self, BudgetCaps, EigRequest, PredictRequest};
use decomp_core::bundle::ModelBundle;
use decomp_core::data_io::{generate_synthetic, read_cases_file, write_cases, IngestReport, SyntheticSpec, SyntheticSpecDoc};
use decomp_core::eig::{DesignSpec, EigBudget, EstimatorKind};
use decomp_core::error::Error;
use decomp_core::evaluation::{run_cv, CvConfig, FoldPlan};
use decomp_core::model::DecompositionModel;
use decomp_core::parallel::{set_num_threads, Execution};
use decomp_core::sampler::{MetricKind, SamplerConfig};
use decomp_core::schema::{build_mask, load_schema, CaseRecord, Schema, Variant, BUNDLED_SCHEMA};

#[derive(Parser, Debug)]
#[command(name = "decomp", version, about = "Decomposition-state models: fit, PMI inference, evaluation and design ranking")]
struct Cli {
    /// Cap on worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Run every computation on the calling thread.
    #[arg(long, global = true)]
    sequential: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Fit a model variant and write a model directory.
    Fit(FitArgs),
    /// PMI posterior for one case (JSON in, JSON out).
    Predict(PredictArgs),
    /// k-fold cross-validation report.
    Evaluate(EvaluateArgs),
    /// Rank candidate designs by expected information gain.
    EigScan(EigScanArgs),
    /// Simulate a case table from a synthetic specification.
    Simulate(SimulateArgs),
    /// Posterior quantiles of every effect as CSV.
    ExportEffects(ExportArgs),
    /// Serve a model directory over HTTP.
    Serve(ServeArgs),
}

#[derive(Args, Debug, Clone)]
struct SchemaArgs {
    /// Schema TOML (default: the bundled vocabulary).
    #[arg(long)]
    schema: Option<PathBuf>,
    #[arg(long, default_value = "empty")]
    variant: Variant,
    /// Interaction table for the strict variant (default: the bundled one).
    #[arg(long)]
    mask: Option<PathBuf>,
}

#[derive(Args, Debug, Clone)]
struct SamplerArgs {
    #[arg(long, default_value_t = 4)]
    chains: usize,
    #[arg(long, default_value_t = 1000)]
    warmup: usize,
    #[arg(long, default_value_t = 1000)]
    samples: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value = "auto")]
    metric: MetricArg,
}

#[derive(clap::ValueEnum, Debug, Clone, Copy)]
enum MetricArg {
    Auto,
    Dense,
    Diagonal,
}

#[derive(clap::ValueEnum, Debug, Clone, Copy)]
enum EstimatorArg {
    Naive,
    LowVariance,
}

#[derive(Args, Debug)]
struct FitArgs {
    #[arg(long)]
    cases: PathBuf,
    #[command(flatten)]
    schema: SchemaArgs,
    #[command(flatten)]
    sampler: SamplerArgs,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct PredictArgs {
    #[arg(long)]
    model: PathBuf,
    /// JSON case: {"covariates": {...}, "observations": {...}}
    #[arg(long)]
    case: PathBuf,
    /// Output file; `-` for standard output.
    #[arg(long, default_value = "-")]
    out: PathBuf,
    /// Load a model even if its diagnostics failed.
    #[arg(long)]
    allow_unconverged: bool,
}

#[derive(Args, Debug)]
struct EvaluateArgs {
    #[arg(long)]
    cases: PathBuf,
    #[command(flatten)]
    schema: SchemaArgs,
    #[arg(long, default_value_t = 5)]
    k: usize,
    #[command(flatten)]
    sampler: SamplerArgs,
    /// Posterior draws used to score held-out cases.
    #[arg(long, default_value_t = 400)]
    scoring_draws: usize,
    /// Score folds even when their fit fails the convergence checks.
    #[arg(long)]
    allow_unconverged: bool,
    #[arg(long, default_value = "-")]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct EigScanArgs {
    #[arg(long)]
    model: PathBuf,
    /// Target effect, e.g. `beta[Bloat|Larva=present]`; repeat for several.
    #[arg(long = "target", required = true)]
    targets: Vec<String>,
    /// JSON array of designs. Without it a day grid is built from
    /// `--days`, `--cadavers` and `--set`.
    #[arg(long)]
    designs: Option<PathBuf>,
    /// Day grid `start:end:step`.
    #[arg(long, default_value = "0:50:5")]
    days: String,
    #[arg(long, default_value_t = 1)]
    cadavers: usize,
    /// Covariate level shared by every cadaver, `Name=level`; repeatable.
    #[arg(long = "set")]
    set: Vec<String>,
    #[arg(long, value_enum, default_value = "low-variance")]
    estimator: EstimatorArg,
    #[arg(long, default_value_t = 10_000)]
    n: usize,
    #[arg(long, default_value_t = 5_000)]
    m: usize,
    #[arg(long, default_value_t = 5_000)]
    m_prime: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Refuse budgets with N above this.
    #[arg(long)]
    max_n: Option<usize>,
    /// Refuse budgets with M or M' above this.
    #[arg(long)]
    max_m: Option<usize>,
    /// Output as `json` or `csv`.
    #[arg(long, default_value = "json")]
    format: String,
    #[arg(long, default_value = "-")]
    out: PathBuf,
    #[arg(long)]
    allow_unconverged: bool,
}

#[derive(Args, Debug)]
struct SimulateArgs {
    /// Synthetic specification (TOML).
    #[arg(long)]
    spec: PathBuf,
    #[arg(long)]
    schema: Option<PathBuf>,
    /// Number of cases (overrides the specification).
    #[arg(long)]
    n: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "-")]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct ExportArgs {
    #[arg(long)]
    model: PathBuf,
    /// Comma-separated quantiles.
    #[arg(long)]
    quantiles: Option<String>,
    #[arg(long, default_value = "-")]
    out: PathBuf,
    #[arg(long)]
    allow_unconverged: bool,
}

#[derive(Args, Debug)]
struct ServeArgs {
    #[arg(long)]
    model: Option<PathBuf>,
    #[arg(long, default_value_t = decomp_service::DEFAULT_PORT)]
    port: u16,
}

/// Failure with its exit code.
struct Failure {
    code: u8,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match &e {
            Error::Schema(_)
            | Error::UnknownLevel { .. }
            | Error::UnknownName(_)
            | Error::Field { .. }
            | Error::Invalid(_)
            | Error::Parse(_)
            | Error::Csv(_)
            | Error::Json(_)
            | Error::Toml(_) => 2,
            Error::Diagnostics(_) => 3,
            Error::Budget(_) => 4,
            _ => 1,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Error::Io(e).into()
    }
}

type Outcome = Result<(), Failure>;

fn parse_failure(message: impl Into<String>) -> Failure {
    Failure {
        code: 2,
        message: message.into(),
    }
}

fn read_text(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| Failure {
        code: 1,
        message: format!("{}: {e}", path.display()),
    })
}

fn output(path: &Path) -> io::Result<Box<dyn Write>> {
    if path.as_os_str() == "-" {
        Ok(Box::new(BufWriter::new(io::stdout().lock())))
    } else {
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            fs::create_dir_all(parent)?;
        }
        Ok(Box::new(BufWriter::new(fs::File::create(path)?)))
    }
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Outcome {
    let mut w = output(path)?;
    serde_json::to_writer_pretty(&mut w, value).map_err(Error::from)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

impl SchemaArgs {
    fn load(&self) -> Result<(String, Schema, decomp_core::schema::InteractionMask), Failure> {
        let document = match &self.schema {
            Some(p) => read_text(p)?,
            None => BUNDLED_SCHEMA.to_string(),
        };
        let schema = load_schema(&document)?;
        let table = self.mask.as_deref().map(read_text).transpose()?;
        if table.is_some() && self.variant != Variant::Strict {
            log::warn!("--mask only applies to the strict variant; ignored");
        }
        let mask = build_mask(self.variant, &schema, table.as_deref())?;
        Ok((document, schema, mask))
    }
}

impl SamplerArgs {
    fn config(&self, exec: Execution) -> SamplerConfig {
        SamplerConfig {
            num_chains: self.chains,
            warmup: self.warmup,
            samples: self.samples,
            seed: self.seed,
            metric: match self.metric {
                MetricArg::Auto => MetricKind::Auto,
                MetricArg::Dense => MetricKind::Dense,
                MetricArg::Diagonal => MetricKind::Diagonal,
            },
            execution: exec,
            ..SamplerConfig::default()
        }
    }
}

fn read_cases(path: &Path, schema: &Schema) -> Result<Vec<CaseRecord>, Failure> {
    let (records, report) = read_cases_file(path, schema)?;
    log_ingest(&report);
    if records.is_empty() {
        return Err(parse_failure(format!("{}: no usable rows", path.display())));
    }
    Ok(records)
}

fn log_ingest(report: &IngestReport) {
    log::info!("read {} rows, accepted {}", report.rows_read, report.accepted);
    for r in &report.rejected {
        log::warn!("line {}: {}", r.line, r.reason);
    }
    if !report.ignored_columns.is_empty() {
        log::warn!("ignored columns: {}", report.ignored_columns.join(", "));
    }
}

fn load_model(dir: &Path, allow_unconverged: bool) -> Result<ModelBundle, Failure> {
    Ok(ModelBundle::load(dir, !allow_unconverged)?)
}

fn fit(args: FitArgs, exec: Execution) -> Outcome {
    let (document, schema, mask) = args.schema.load()?;
    let records = read_cases(&args.cases, &schema)?;
    let config = args.sampler.config(exec);
    log::info!("fitting {} variant on {} cases", mask.variant, records.len());
    let bundle = ModelBundle::fit(&document, mask, records, &config)?;
    bundle.save(&args.out)?;
    log::info!("wrote {} (version {})", args.out.display(), bundle.manifest.version);
    if !bundle.diagnostics.passes {
        return Err(Error::Diagnostics(bundle.diagnostics.summary()).into());
    }
    log::info!("{}", bundle.diagnostics.summary());
    Ok(())
}

fn predict(args: PredictArgs) -> Outcome {
    let bundle = load_model(&args.model, args.allow_unconverged)?;
    let request: PredictRequest = serde_json::from_str(&read_text(&args.case)?).map_err(Error::from)?;
    let report = api::predict_pmi(&bundle, &request)?;
    write_json(&args.out, &report)
}

fn evaluate(args: EvaluateArgs, exec: Execution) -> Outcome {
    let (_, schema, mask) = args.schema.load()?;
    let records = read_cases(&args.cases, &schema)?;
    let ids: Vec<String> = records.iter().map(|r| r.case_id.clone()).collect();
    let plan = FoldPlan::new(&ids, args.k, args.sampler.seed)?;
    let config = CvConfig {
        sampler: args.sampler.config(exec),
        scoring_draws: args.scoring_draws,
        enforce_diagnostics: !args.allow_unconverged,
        execution: exec,
        ..CvConfig::default()
    };
    let report = run_cv(&records, &schema, &mask, &config, &plan)?;
    log::info!(
        "macro AUC {:.3} [{:.3}, {:.3}], R² {:.3} [{:.3}, {:.3}]",
        report.macro_auc.mean,
        report.macro_auc.lower,
        report.macro_auc.upper,
        report.r_squared.mean,
        report.r_squared.lower,
        report.r_squared.upper
    );
    write_json(&args.out, &report)
}

fn parse_days(spec: &str) -> Result<Vec<f64>, Failure> {
    let parts: Vec<f64> = spec
        .split(':')
        .map(|p| p.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|_| parse_failure(format!("--days: expected start:end:step, got {spec:?}")))?;
    let [start, end, step] = parts[..] else {
        return Err(parse_failure(format!("--days: expected start:end:step, got {spec:?}")));
    };
    if !(step > 0.0) || !(end >= start) || start < 0.0 {
        return Err(parse_failure("--days: need 0 ≤ start ≤ end and step > 0"));
    }
    let count = ((end - start) / step + 1e-9).floor() as usize;
    Ok((0..=count).map(|i| start + step * i as f64).collect())
}

fn day_grid(args: &EigScanArgs) -> Result<Vec<DesignSpec>, Failure> {
    let mut covariates = std::collections::BTreeMap::new();
    for s in &args.set {
        let (k, v) = s
            .split_once('=')
            .ok_or_else(|| parse_failure(format!("--set: expected Name=level, got {s:?}")))?;
        covariates.insert(k.trim().to_string(), v.trim().to_string());
    }
    Ok(parse_days(&args.days)?
        .into_iter()
        .map(|day| DesignSpec {
            num_cadavers: args.cadavers,
            covariates: covariates.clone(),
            cadavers: None,
            observation_day: day,
        })
        .collect())
}

fn eig_scan(args: EigScanArgs, exec: Execution) -> Outcome {
    let bundle = load_model(&args.model, args.allow_unconverged)?;
    let designs: Vec<DesignSpec> = match &args.designs {
        Some(p) => serde_json::from_str(&read_text(p)?).map_err(Error::from)?,
        None => day_grid(&args)?,
    };
    let request = EigRequest {
        targets: args.targets.clone(),
        designs,
        estimator: match args.estimator {
            EstimatorArg::Naive => EstimatorKind::Naive,
            EstimatorArg::LowVariance => EstimatorKind::LowVariance,
        },
        budget: EigBudget {
            n: args.n,
            m: args.m,
            m_prime: args.m_prime,
            seed: args.seed,
        },
    };
    let caps = BudgetCaps {
        max_n: args.max_n.unwrap_or(usize::MAX),
        max_m: args.max_m.unwrap_or(usize::MAX),
        ..BudgetCaps::UNLIMITED
    };
    let response = api::eig_scan(&bundle, &request, caps, exec)?;
    match args.format.as_str() {
        "json" => write_json(&args.out, &response),
        "csv" => {
            let mut w = output(&args.out)?;
            writeln!(w, "design,num_cadavers,observation_day,covariates,eig,eig_per_cadaver,se_per_cadaver,optimal")?;
            for (i, r) in response.rows.iter().enumerate() {
                let cov: Vec<String> = r.design.covariates.iter().map(|(k, v)| format!("{k}={v}")).collect();
                writeln!(
                    w,
                    "{i},{},{},\"{}\",{},{},{},{}",
                    r.design.num_cadavers,
                    r.design.observation_day,
                    cov.join(";"),
                    r.eig.value,
                    r.eig_per_cadaver,
                    r.se_per_cadaver,
                    r.optimal
                )?;
            }
            w.flush()?;
            Ok(())
        }
        other => Err(parse_failure(format!("--format: expected json or csv, got {other:?}"))),
    }
}

fn simulate(args: SimulateArgs) -> Outcome {
    let document = match &args.schema {
        Some(p) => read_text(p)?,
        None => BUNDLED_SCHEMA.to_string(),
    };
    let schema = load_schema(&document)?;
    let doc: SyntheticSpecDoc = toml::from_str(&read_text(&args.spec)?).map_err(Error::from)?;
    let mask = build_mask(doc.variant, &schema, None)?;
    let model = DecompositionModel::new(&schema, &mask)?;
    let mut spec = SyntheticSpec::from_doc(&doc, &schema, &model)?;
    if let Some(n) = args.n {
        spec.n_cases = n;
    }
    let records = generate_synthetic(&schema, &model, &spec, args.seed)?;
    let mut w = output(&args.out)?;
    write_cases(&mut w, &schema, &records)?;
    w.flush()?;
    log::info!("simulated {} cases", records.len());
    Ok(())
}

fn export(args: ExportArgs) -> Outcome {
    let bundle = load_model(&args.model, args.allow_unconverged)?;
    let quantiles = api::parse_quantiles(args.quantiles.as_deref())?;
    let table = api::effects(&bundle, &quantiles)?;
    let mut w = output(&args.out)?;
    table.write_csv(&mut w)?;
    w.flush()?;
    Ok(())
}

fn serve(args: ServeArgs) -> Outcome {
    let bundle = args.model.as_deref().map(|d| ModelBundle::load(d, true)).transpose()?;
    let runtime = tokio::runtime::Runtime::new()?;
    runtime.block_on(decomp_service::serve(decomp_service::AppState::new(bundle), args.port))?;
    Ok(())
}

fn run(cli: Cli) -> Outcome {
    if let Some(t) = cli.threads {
        set_num_threads(t).map_err(|m| Failure { code: 1, message: m })?;
    }
    let exec = if cli.sequential {
        Execution::Sequential
    } else {
        Execution::Parallel
    };
    match cli.command {
        Command::Fit(a) => fit(a, exec),
        Command::Predict(a) => predict(a),
        Command::Evaluate(a) => evaluate(a, exec),
        Command::EigScan(a) => eig_scan(a, exec),
        Command::Simulate(a) => simulate(a),
        Command::ExportEffects(a) => export(a),
        Command::Serve(a) => serve(a),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            log::error!("{}", f.message);
            ExitCode::from(f.code)
        }
    }
}
