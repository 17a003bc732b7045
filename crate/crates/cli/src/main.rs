use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde_json::json;

use cmafuse_core::experiment::{
    load_report, output_root, parse_json, run_experiment_in, write_synthetic, ExperimentError, ExperimentSpec,
    SpecError, SynthSpec, OUTPUT_ENV,
};
use cmafuse_core::ocr::{parse_stopwords, OcrPipeline, DEFAULT_DEDUP_THRESHOLD, DEFAULT_MIN_OVERLAP};
use cmafuse_core::store::{load_manifest, validate_manifest};

#[derive(Parser)]
#[command(name = "cmafuse", version, about = "Cross-modal attention fusion experiments over video embeddings")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment spec and write a numbered run directory.
    Run {
        spec: PathBuf,
        /// Output root; overrides $CMAFUSE_OUT and the spec's `output`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Generate a synthetic dataset from a generator spec.
    Synth {
        spec: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Clean, de-duplicate and merge per-video OCR segment lists.
    PreprocessOcr {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Enable stopword removal with this list (one word per line).
        #[arg(long)]
        stopwords: Option<PathBuf>,
        #[arg(long, default_value_t = DEFAULT_DEDUP_THRESHOLD)]
        threshold: f64,
        #[arg(long, default_value_t = DEFAULT_MIN_OVERLAP)]
        min_overlap: usize,
    },
    /// Check every embedding file referenced by a manifest.
    Validate { manifest: PathBuf },
    /// Print the tables of a finished run.
    Report { run_dir: PathBuf },
}

/// A failure printed as one JSON line on stderr.
struct Failure {
    code: u8,
    kind: &'static str,
    field: Option<String>,
    message: String,
}

impl Failure {
    fn new(kind: &'static str, message: impl ToString) -> Self {
        Self {
            code: 1,
            kind,
            field: None,
            message: message.to_string(),
        }
    }

    fn spec(e: SpecError) -> Self {
        Self {
            code: 2,
            kind: "spec",
            field: Some(e.field),
            message: e.message,
        }
    }
}

impl From<ExperimentError> for Failure {
    fn from(e: ExperimentError) -> Self {
        match e {
            ExperimentError::Spec(s) => Failure::spec(s),
            other => Failure::new(other.kind(), other),
        }
    }
}

fn run(spec_path: &Path, out: Option<PathBuf>) -> Result<(), Failure> {
    let spec = ExperimentSpec::load(spec_path).map_err(Failure::spec)?;
    let root = out.unwrap_or_else(|| output_root(&spec));
    log::info!("output root {} (override with --out or {OUTPUT_ENV})", root.display());
    let result = run_experiment_in(&spec, &root)?;
    for t in &result.report.tables {
        println!("{}", t.to_text());
    }
    println!("{}", result.dir.display());
    Ok(())
}

fn synth(spec_path: &Path, out: &Path) -> Result<(), Failure> {
    let text = std::fs::read_to_string(spec_path).map_err(|e| Failure::new("io", format!("{}: {e}", spec_path.display())))?;
    let spec: SynthSpec = parse_json(&text).map_err(Failure::spec)?;
    spec.validate()
        .map_err(|(field, message)| Failure::spec(SpecError::new(field, message)))?;
    let manifest = write_synthetic(&spec, out).map_err(|e| Failure::new("data", e))?;
    println!(
        "{} samples ({} hate) written to {}",
        manifest.samples.len(),
        manifest.class_counts()[1],
        out.join("manifest.json").display()
    );
    Ok(())
}

fn preprocess_ocr(
    input: &Path,
    out: &Path,
    stopwords: Option<PathBuf>,
    threshold: f64,
    min_overlap: usize,
) -> Result<(), Failure> {
    if !(threshold > 0.0 && threshold <= 1.0) {
        return Err(Failure::spec(SpecError::new("threshold", format!("must lie in (0, 1], got {threshold}"))));
    }
    let mut pipeline = OcrPipeline {
        threshold,
        min_overlap,
        stopwords: None,
    };
    if let Some(path) = stopwords {
        let text = std::fs::read_to_string(&path).map_err(|e| Failure::new("io", format!("{}: {e}", path.display())))?;
        pipeline = pipeline
            .with_stopwords(parse_stopwords(&text))
            .map_err(|e| Failure::spec(SpecError::new("stopwords", e.to_string())))?;
    }
    let n = pipeline.process_dir(input, out).map_err(|e| Failure::new("ocr", e))?;
    println!("{n} segment files processed into {}", out.display());
    Ok(())
}

fn validate(path: &Path) -> Result<(), Failure> {
    let manifest = load_manifest(path).map_err(|e| Failure::new("data", e))?;
    let reports = validate_manifest(&manifest).map_err(|e| Failure::new("data", e))?;
    let failed = reports.iter().filter(|r| !r.passed()).count();
    for r in &reports {
        println!("{} {r}", if r.passed() { "ok  " } else { "FAIL" });
    }
    println!("{} samples, {failed} failed", reports.len());
    if failed > 0 {
        return Err(Failure::new("validation", format!("{failed} of {} samples failed", reports.len())));
    }
    Ok(())
}

fn report(dir: &Path) -> Result<(), Failure> {
    let report = load_report(dir)?;
    for t in &report.tables {
        println!("{}", t.to_text());
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Run { spec, out } => run(&spec, out),
        Command::Synth { spec, out } => synth(&spec, &out),
        Command::PreprocessOcr {
            input,
            out,
            stopwords,
            threshold,
            min_overlap,
        } => preprocess_ocr(&input, &out, stopwords, threshold, min_overlap),
        Command::Validate { manifest } => validate(&manifest),
        Command::Report { run_dir } => report(&run_dir),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            let record = json!({"error": f.kind, "field": f.field, "message": f.message});
            eprintln!("{record}");
            ExitCode::from(f.code)
        }
    }
}
