//! Command implementations behind the `curate` binary.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use curate_core::config::{ConfigError, EngineConfig};
use curate_core::eval::{evaluate_dataset, EvalError, EvalOptions, EvalReport, TableDump};
use curate_core::generator::{GenerateError, LlmError, Schema, SchemaError};
use curate_core::ingest::IngestError;
use curate_core::sampler::{simulate_hatdc, Dataset, DatasetError, SimulationConfig, SimulationOutput};
use curate_store::{Backends, CurationService, DocumentUpload, ExportFormat, Phase, StoreError};

#[derive(Debug, Parser)]
#[command(name = "curate", version, about = "Schema-driven table curation from scientific documents")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

/// Flags shared by every command. Each overrides the config file value.
#[derive(Debug, Clone, Default, Args)]
pub struct GlobalArgs {
    /// Engine config file (flat TOML).
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Seed for pool sampling.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads; 0 means one per logical core.
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    /// Pool size for simulation.
    #[arg(long, global = true)]
    pub k: Option<usize>,
    /// In-context examples per prompt.
    #[arg(long, global = true)]
    pub m: Option<usize>,
    /// LLM context budget in characters.
    #[arg(long, global = true)]
    pub window: Option<usize>,
    /// Chunk overlap fraction in [0, 1).
    #[arg(long, global = true)]
    pub overlap: Option<f64>,
    /// Compare cells case-sensitively during evaluation.
    #[arg(long, global = true)]
    pub exact_case: bool,
    /// Print structured JSON to stdout instead of text.
    #[arg(long, global = true)]
    pub json: bool,
    /// Print the effective config as TOML and exit.
    #[arg(long, global = true)]
    pub print_config: bool,
}

impl GlobalArgs {
    /// The config file (or defaults) with flag overrides applied.
    pub fn effective_config(&self) -> Result<EngineConfig> {
        let mut cfg = match &self.config {
            Some(p) => EngineConfig::load(p)?,
            None => EngineConfig::default(),
        };
        if let Some(v) = self.seed {
            cfg.seed = v;
        }
        if let Some(v) = self.jobs {
            cfg.jobs = v;
        }
        if let Some(v) = self.k {
            cfg.k = v;
        }
        if let Some(v) = self.m {
            cfg.m = v;
        }
        if let Some(v) = self.window {
            cfg.window = v;
        }
        if let Some(v) = self.overlap {
            cfg.overlap = v;
        }
        cfg.exact_case |= self.exact_case;
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Ingest documents into a project, creating it when --schema is given.
    Ingest(IngestArgs),
    /// Run a pilot or batch extraction over ingested documents.
    Run(RunArgs),
    /// Replay the curation loop over a gold-annotated dataset.
    Simulate(SimulateArgs),
    /// Score a predicted table dump against a gold dump.
    Eval(EvalArgs),
    /// Export a project's curated table.
    Export(ExportArgs),
    /// Serve the HTTP API.
    Serve(ServeArgs),
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    /// Project database file.
    #[arg(long, value_name = "FILE")]
    pub db: PathBuf,
    #[arg(long)]
    pub project: String,
    /// Schema file (CSV header row or JSON column list) for a new project.
    #[arg(long, value_name = "FILE")]
    pub schema: Option<PathBuf>,
    /// Source files: TEI XML, plain text or PDF.
    #[arg(required = true)]
    pub files: Vec<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum PhaseArg {
    Pilot,
    Batch,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[arg(long, value_name = "FILE")]
    pub db: PathBuf,
    #[arg(long)]
    pub project: String,
    #[arg(long, value_enum, default_value = "batch")]
    pub phase: PhaseArg,
    /// Documents to process (repeatable or comma separated); defaults to
    /// every ingested document not yet in a batch.
    #[arg(long = "doc", value_delimiter = ',')]
    pub docs: Vec<String>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Directory with gold.json and docs/{doc_id}.txt|.xml.
    pub dataset: PathBuf,
    /// Schema file; must name the gold dump's columns.
    #[arg(long, value_name = "FILE")]
    pub schema: Option<PathBuf>,
    /// Where to write the predicted table dump.
    #[arg(long, value_name = "FILE")]
    pub out: PathBuf,
    /// Also write the per-document trace (pools and examples used).
    #[arg(long, value_name = "FILE")]
    pub trace: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    pub pred: PathBuf,
    pub gold: PathBuf,
    /// Write the JSON report here.
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum FormatArg {
    Csv,
    Json,
}

#[derive(Debug, Args)]
pub struct ExportArgs {
    #[arg(long, value_name = "FILE")]
    pub db: PathBuf,
    #[arg(long)]
    pub project: String,
    #[arg(long, value_enum, default_value = "csv")]
    pub format: FormatArg,
    #[arg(long)]
    pub include_irrelevant: bool,
    /// Output file; stdout when omitted.
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long, value_name = "FILE")]
    pub db: PathBuf,
    #[arg(long, default_value = "127.0.0.1:8080")]
    pub addr: String,
}

/// Stable machine-readable name for an error.
pub fn error_code(err: &anyhow::Error) -> &'static str {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<StoreError>() {
            return e.code();
        }
        if let Some(e) = cause.downcast_ref::<EvalError>() {
            return match e {
                EvalError::MalformedDump(_) => "MalformedDump",
                EvalError::SchemaMismatch { .. } => "SchemaMismatch",
                EvalError::DocIdMismatch(_) => "DocIdMismatch",
            };
        }
        if let Some(e) = cause.downcast_ref::<DatasetError>() {
            return match e {
                DatasetError::MissingGold(_) => "MissingGold",
                DatasetError::MissingDocument(_) => "MissingDocument",
                DatasetError::Gold(_) => "MalformedDump",
                DatasetError::Io { .. } | DatasetError::Empty => "DatasetError",
            };
        }
        if cause.is::<ConfigError>() {
            return "ConfigError";
        }
        if cause.is::<SchemaError>() {
            return "SchemaParseError";
        }
        if cause.is::<LlmError>() {
            return "LlmError";
        }
        if cause.is::<GenerateError>() {
            return "GenerationError";
        }
        if cause.is::<IngestError>() {
            return "IngestError";
        }
        if cause.is::<std::io::Error>() {
            return "IoError";
        }
    }
    "Error"
}

/// The JSON object printed on stderr for a failed command.
pub fn error_json(err: &anyhow::Error) -> serde_json::Value {
    json!({"error": error_code(err), "message": format!("{err:#}")})
}

fn print_json(v: &impl serde::Serialize) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(v)?);
    Ok(())
}

pub fn run(cli: Cli) -> Result<()> {
    let cfg = cli.global.effective_config()?;
    if cli.global.print_config {
        print!("{}", cfg.to_toml());
        return Ok(());
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.jobs)
        .build_global()
        .ok();
    let json_out = cli.global.json;
    match cli.command {
        Command::Ingest(a) => cmd_ingest(&a, &cfg, json_out),
        Command::Run(a) => cmd_run(&a, &cfg, json_out),
        Command::Simulate(a) => {
            let (out, report) = cmd_simulate(&a.dataset, a.schema.as_deref(), &cfg)?;
            std::fs::write(&a.out, out.table.to_json_pretty()).with_context(|| a.out.display().to_string())?;
            if let Some(t) = &a.trace {
                std::fs::write(t, serde_json::to_string_pretty(&out.trace)? + "\n")
                    .with_context(|| t.display().to_string())?;
            }
            if json_out {
                print_json(&report)
            } else {
                println!("{}", report.summary_line(&dataset_label(&a.dataset)));
                Ok(())
            }
        }
        Command::Eval(a) => {
            let report = cmd_eval(&a.pred, &a.gold, cfg.exact_case)?;
            if let Some(out) = &a.out {
                std::fs::write(out, serde_json::to_string_pretty(&report)? + "\n")
                    .with_context(|| out.display().to_string())?;
            }
            if json_out {
                print_json(&report)
            } else {
                println!("{}", report.summary_line(&dataset_label(&a.gold)));
                Ok(())
            }
        }
        Command::Export(a) => {
            let svc = open_store(&a.db, &cfg)?;
            let pid = project_id(&svc, &a.project)?;
            let format = match a.format {
                FormatArg::Csv => ExportFormat::Csv,
                FormatArg::Json => ExportFormat::Json,
            };
            let bytes = svc.export(pid, format, a.include_irrelevant)?;
            match &a.out {
                Some(p) => std::fs::write(p, bytes).with_context(|| p.display().to_string())?,
                None => {
                    use std::io::Write;
                    std::io::stdout().write_all(&bytes)?;
                }
            }
            Ok(())
        }
        Command::Serve(a) => {
            let svc = Arc::new(open_store(&a.db, &cfg)?);
            let token = cfg.api_token();
            let rt = tokio::runtime::Runtime::new()?;
            rt.block_on(async move {
                let listener = tokio::net::TcpListener::bind(&a.addr)
                    .await
                    .with_context(|| format!("bind {}", a.addr))?;
                log::info!("listening on {}", listener.local_addr()?);
                curate_store::http::serve(listener, svc, token).await?;
                Ok(())
            })
        }
    }
}

fn dataset_label(path: &Path) -> String {
    let p = if path.is_file() { path.parent().unwrap_or(path) } else { path };
    p.file_name()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| p.display().to_string())
}

/// Store opened with the backends the config names. A missing LLM only
/// fails the commands that need one.
pub fn open_store(db: &Path, cfg: &EngineConfig) -> Result<CurationService> {
    let llm: Arc<dyn curate_core::generator::LlmProvider> = match cfg.llm() {
        Ok(l) => Arc::from(l),
        Err(e) => Arc::new(Unconfigured(e.to_string())),
    };
    let backends = Backends {
        llm,
        embedder: Arc::from(cfg.embedder()),
        parser: Arc::from(cfg.parser_service()),
        ocr: cfg.ocr(),
    };
    Ok(CurationService::open(db, cfg.clone(), backends)?)
}

struct Unconfigured(String);

impl curate_core::generator::LlmProvider for Unconfigured {
    fn name(&self) -> &str {
        "unconfigured"
    }
    fn context_chars(&self) -> usize {
        0
    }
    fn complete(&self, _: &str) -> Result<String, LlmError> {
        Err(LlmError::Fixture(self.0.clone()))
    }
}

fn project_id(svc: &CurationService, name: &str) -> Result<i64> {
    match svc.project_id_by_name(name)? {
        Some(id) => Ok(id),
        None => bail!(StoreError::InvalidRequest(format!("no project named {name:?}"))),
    }
}

pub fn cmd_ingest(a: &IngestArgs, cfg: &EngineConfig, json_out: bool) -> Result<()> {
    let svc = open_store(&a.db, cfg)?;
    let pid = match (svc.project_id_by_name(&a.project)?, &a.schema) {
        (Some(id), _) => id,
        (None, Some(schema)) => {
            let text = std::fs::read_to_string(schema).with_context(|| schema.display().to_string())?;
            svc.create_project(&a.project, &text, Vec::new())?.project_id
        }
        (None, None) => bail!(StoreError::InvalidRequest(format!(
            "no project named {:?}; pass --schema to create it",
            a.project
        ))),
    };
    let uploads = a
        .files
        .iter()
        .map(|f| DocumentUpload {
            uri: Some(f.display().to_string()),
            ..DocumentUpload::default()
        })
        .collect();
    let docs = svc.add_documents(pid, uploads)?;
    if json_out {
        return print_json(&json!({"project_id": pid, "documents": docs}));
    }
    for d in &docs {
        let status = if d.failed { "FAILED" } else { "ok" };
        let variants: Vec<&str> = d.variants.iter().map(|k| k.as_str()).collect();
        println!("{}\t{status}\t{}", d.doc_id, variants.join(","));
    }
    Ok(())
}

pub fn cmd_run(a: &RunArgs, cfg: &EngineConfig, json_out: bool) -> Result<()> {
    let svc = open_store(&a.db, cfg)?;
    let pid = project_id(&svc, &a.project)?;
    let docs = if a.docs.is_empty() {
        let view = svc.get_project(pid)?;
        let done: std::collections::HashSet<&String> = view.batches.iter().flat_map(|b| &b.doc_ids).collect();
        view.documents
            .iter()
            .filter(|d| !d.failed && !done.contains(&d.doc_id))
            .map(|d| d.doc_id.clone())
            .collect()
    } else {
        a.docs.clone()
    };
    let phase = match a.phase {
        PhaseArg::Pilot => Phase::Pilot,
        PhaseArg::Batch => Phase::Batch,
    };
    let batch = svc.run_batch(pid, phase, &docs)?;
    if json_out {
        return print_json(&batch);
    }
    println!(
        "batch {} (#{}): {} records from {} documents, pool version {}",
        batch.summary.batch_id,
        batch.summary.seq,
        batch.records.len(),
        batch.summary.doc_ids.len(),
        batch.summary.pool_version_used
    );
    for f in &batch.failures {
        println!("failed\t{}\t{}", f.doc_id, f.reason);
    }
    Ok(())
}

/// Run the simulation and score it against the dataset's gold dump.
/// Nothing is written here, so a failure leaves no partial output.
pub fn cmd_simulate(dataset: &Path, schema: Option<&Path>, cfg: &EngineConfig) -> Result<(SimulationOutput, EvalReport)> {
    let ds = Dataset::load(dataset)?;
    if let Some(path) = schema {
        let text = std::fs::read_to_string(path).with_context(|| path.display().to_string())?;
        let given = Schema::parse_file(&text)?;
        let names = |s: &Schema| s.names().map(str::to_string).collect::<Vec<_>>();
        if names(&given) != names(&ds.schema) {
            bail!(EvalError::SchemaMismatch {
                pred: names(&given),
                gold: names(&ds.schema),
            });
        }
    }
    let llm = cfg.llm()?;
    let sim = SimulationConfig {
        pool_size: cfg.k,
        shots: cfg.m,
        seed: cfg.seed,
        generation: cfg.generation(),
    };
    let out = simulate_hatdc(&ds, &sim, llm.as_ref());
    let report = evaluate_dataset(
        &out.table,
        &ds.gold_dump(),
        EvalOptions {
            exact_case: cfg.exact_case,
        },
    )?;
    Ok((out, report))
}

pub fn cmd_eval(pred: &Path, gold: &Path, exact_case: bool) -> Result<EvalReport> {
    let read = |p: &Path| -> Result<TableDump> {
        let text = std::fs::read_to_string(p).with_context(|| p.display().to_string())?;
        Ok(TableDump::parse(&text)?)
    };
    Ok(evaluate_dataset(&read(pred)?, &read(gold)?, EvalOptions { exact_case })?)
}
