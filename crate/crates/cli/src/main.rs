use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use factaudit_core::auditor::{fact_check_sentence, prepare_document, AuditReport, DecodingConfig, DecodingMode};
use factaudit_core::evalkit::{
    aggregate_report, evaluate_predictions, pr_sweep, predict_dataset, read_jsonl, write_jsonl, write_sweep_csv,
    AnnotationRecord, GroundTruthRecord, PredictionRecord,
};
use factaudit_core::genbackend::{GenerationBackend, HttpBackend, HttpBackendConfig, MockScript};
use factaudit_core::promptio::{LexicalOverlap, PromptTemplate, TruncationOptions, DEFAULT_INPUT_BUDGET};
use factaudit_core::textmodel::{segment_document, split_sentences, ClaimContext, Document, HeadingPrefix, SegmentInput};
use factaudit_service::{ReviewService, ServiceConfig};

const BACKEND_ENV: &str = "FACTAUDIT_BACKEND_URL";

#[derive(Parser)]
#[command(name = "factaudit", version, about = "Document-grounded fact-checking of summaries")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the review service.
    Serve {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Overrides the configured listen address.
        #[arg(long)]
        bind: Option<String>,
    },
    /// Check every sentence of a summary against a document.
    Factcheck {
        /// Document as JSON, or plain text with `# ` section headings.
        #[arg(long)]
        doc: PathBuf,
        /// Summary as a JSON array of sentences, or plain text.
        #[arg(long)]
        summary: PathBuf,
        #[command(flatten)]
        decoding: DecodingArgs,
        #[command(flatten)]
        backend: BackendArgs,
        #[arg(long, default_value_t = DEFAULT_INPUT_BUDGET)]
        budget: usize,
        /// Fail instead of cutting sentences off the end of the document.
        #[arg(long)]
        no_hard_truncate: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Fact-check every record of a reference dataset and write predictions.
    Predict {
        #[arg(long)]
        gold: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        decoding: DecodingArgs,
        #[command(flatten)]
        backend: BackendArgs,
    },
    /// Score predictions against references, or summarize review annotations.
    Evaluate {
        #[arg(long, requires = "gold", required_unless_present = "annotations")]
        predictions: Option<PathBuf>,
        #[arg(long, requires = "predictions")]
        gold: Option<PathBuf>,
        #[arg(long, conflicts_with_all = ["predictions", "gold"])]
        annotations: Option<PathBuf>,
        /// A second annotator's records, for agreement statistics.
        #[arg(long, requires = "annotations")]
        second: Option<PathBuf>,
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Precision and recall of error identification across thresholds.
    Sweep {
        #[arg(long)]
        gold: PathBuf,
        /// Comma-separated, ascending.
        #[arg(long, value_delimiter = ',', default_value = "0.0,0.1,0.2,0.3,0.4,0.5,0.6,0.7,0.8,0.9,0.99")]
        taus: Vec<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        template: Option<PathBuf>,
        #[arg(long, default_value_t = factaudit_core::genbackend::DEFAULT_MAX_NEW_TOKENS)]
        max_new_tokens: usize,
        #[command(flatten)]
        backend: BackendArgs,
    },
}

#[derive(Args)]
struct DecodingArgs {
    /// Threshold; implies thresholded mode unless --mode says otherwise.
    #[arg(long)]
    tau: Option<f64>,
    #[arg(long, value_parser = parse_mode)]
    mode: Option<DecodingMode>,
    #[arg(long, default_value_t = factaudit_core::genbackend::DEFAULT_MAX_NEW_TOKENS)]
    max_new_tokens: usize,
    /// JSON file `{"instruction": ...}` replacing the built-in instruction.
    #[arg(long)]
    template: Option<PathBuf>,
}

#[derive(Args)]
struct BackendArgs {
    #[arg(long, env = BACKEND_ENV, conflicts_with = "mock")]
    backend_url: Option<String>,
    /// Scripted backend in the mock JSON format.
    #[arg(long)]
    mock: Option<PathBuf>,
}

fn parse_mode(s: &str) -> Result<DecodingMode, String> {
    serde_json::from_value(serde_json::Value::String(s.to_string()))
        .map_err(|_| format!("unknown mode {s:?} (plain, thresholded, low_prob_flag)"))
}

impl DecodingArgs {
    fn config(&self) -> Result<DecodingConfig> {
        let mode = match (self.mode, self.tau) {
            (Some(m), _) => m,
            (None, Some(_)) => DecodingMode::Thresholded,
            (None, None) => DecodingMode::Plain,
        };
        let cfg = DecodingConfig {
            tau: self.tau.unwrap_or(0.0),
            mode,
            max_new_tokens: self.max_new_tokens,
            ..DecodingConfig::default()
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

fn template(path: Option<&Path>) -> Result<PromptTemplate> {
    match path {
        Some(p) => PromptTemplate::load(p).with_context(|| format!("loading template {}", p.display())),
        None => Ok(PromptTemplate::default()),
    }
}

impl BackendArgs {
    fn build(&self) -> Result<Arc<dyn GenerationBackend>> {
        if let Some(path) = &self.mock {
            return Ok(Arc::new(MockScript::load(path)?));
        }
        match &self.backend_url {
            Some(url) => Ok(Arc::new(HttpBackend::new(HttpBackendConfig::new(url.clone())))),
            None => bail!("no backend: pass --backend-url, set {BACKEND_ENV}, or pass --mock"),
        }
    }
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn load_document(path: &Path) -> Result<Document> {
    let text = read(path)?;
    if let Ok(doc) = serde_json::from_str::<Document>(&text) {
        return Ok(doc);
    }
    let id = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    Ok(segment_document(id, SegmentInput::Raw(&text), Some(HeadingPrefix("# ")))?)
}

fn load_summary(path: &Path) -> Result<Vec<String>> {
    let text = read(path)?;
    let sentences = serde_json::from_str::<Vec<String>>(&text).unwrap_or_else(|_| split_sentences(&text));
    if sentences.is_empty() {
        bail!("{}: summary has no sentences", path.display());
    }
    Ok(sentences)
}

fn output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(io::BufWriter::new(fs::File::create(p).with_context(|| format!("creating {}", p.display()))?)),
        None => Box::new(io::stdout().lock()),
    })
}

fn write_json(path: Option<&Path>, value: &impl serde::Serialize) -> Result<()> {
    let mut w = output(path)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    Ok(())
}

fn load_service_config(path: Option<&Path>) -> Result<ServiceConfig> {
    let mut config: ServiceConfig = match path {
        Some(p) => toml::from_str(&read(p)?).with_context(|| format!("parsing {}", p.display()))?,
        None => ServiceConfig::default(),
    };
    if let Ok(url) = std::env::var(BACKEND_ENV) {
        config.backend_url = Some(url);
    }
    config.validate()?;
    Ok(config)
}

fn factcheck(
    doc: &Path,
    summary: &Path,
    cfg: &DecodingConfig,
    template: &PromptTemplate,
    backend: &dyn GenerationBackend,
    budget: usize,
    hard_truncate: bool,
) -> Result<serde_json::Value> {
    let doc = load_document(doc)?;
    let summary = load_summary(summary)?;
    let mut results = Vec::with_capacity(summary.len());
    for (i, claim) in summary.iter().enumerate() {
        let ctx = ClaimContext::new(summary[..i].to_vec(), claim.clone())?;
        let options = TruncationOptions { hard_truncate };
        let prepared = prepare_document(&doc, &ctx, template, budget, &LexicalOverlap::default(), options)
            .with_context(|| format!("sentence {i}"))?;
        results.push(
            fact_check_sentence(&prepared.document, &ctx, template, cfg, backend).with_context(|| format!("sentence {i}"))?,
        );
    }
    Ok(AuditReport::from_results(results).to_json())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Serve { config, bind } => {
            let mut config = load_service_config(config.as_deref())?;
            if let Some(bind) = bind {
                config.bind = bind;
            }
            let backend = factaudit_service::backend_from_config(&config)?;
            let service = ReviewService::new(config, backend)?;
            let runtime = tokio::runtime::Runtime::new()?;
            runtime.block_on(factaudit_service::serve(service))?;
        }
        Command::Factcheck { doc, summary, decoding, backend, budget, no_hard_truncate, out } => {
            let cfg = decoding.config()?;
            let template = template(decoding.template.as_deref())?;
            let report = factcheck(&doc, &summary, &cfg, &template, backend.build()?.as_ref(), budget, !no_hard_truncate)?;
            write_json(out.as_deref(), &report)?;
        }
        Command::Predict { gold, out, decoding, backend } => {
            let cfg = decoding.config()?;
            let dataset: Vec<GroundTruthRecord> = read_jsonl(&gold)?;
            let results = predict_dataset(&dataset, &template(decoding.template.as_deref())?, &cfg, backend.build()?.as_ref())?;
            let records: Vec<PredictionRecord> = results.iter().map(PredictionRecord::from).collect();
            let mut w = output(Some(&out))?;
            write_jsonl(&mut w, &records)?;
            w.flush()?;
        }
        Command::Evaluate { predictions, gold, annotations, second, report } => {
            let metrics = match (predictions, gold, annotations) {
                (Some(p), Some(g), None) => {
                    let gold: Vec<GroundTruthRecord> = read_jsonl(&g)?;
                    let preds: Vec<PredictionRecord> = read_jsonl(&p)?;
                    evaluate_predictions::<f64>(&gold, &preds)?
                }
                (None, None, Some(a)) => {
                    let first: Vec<AnnotationRecord> = read_jsonl(&a)?;
                    let second: Option<Vec<AnnotationRecord>> = second.map(read_jsonl).transpose()?;
                    aggregate_report::<f64>(&first, second.as_deref())?
                }
                _ => bail!("give --predictions with --gold, or --annotations"),
            };
            write_json(report.as_deref(), &metrics)?;
        }
        Command::Sweep { gold, taus, out, template: template_path, max_new_tokens, backend } => {
            let dataset: Vec<GroundTruthRecord> = read_jsonl(&gold)?;
            let cfg = DecodingConfig { max_new_tokens, ..DecodingConfig::default() };
            cfg.validate()?;
            let rows = pr_sweep(&dataset, &taus, &template(template_path.as_deref())?, &cfg, backend.build()?.as_ref())?;
            let mut w = output(out.as_deref())?;
            write_sweep_csv(&mut w, &rows)?;
            w.flush()?;
        }
    }
    Ok(())
}

fn main() {
    tracing_subscriber::fmt()
        .with_env_filter(tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into()))
        .with_writer(io::stderr)
        .init();
    if let Err(e) = run(Cli::parse()) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}
