use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use ecogdec::artifact::ModelArtifact;
use ecogdec::decoder::{train_fingers, Pipeline, TrainConfig};
use ecogdec::eval::{evaluate, export_timecourse, timecourse_svg, validation_trace, EvaluationReport};
use ecogdec::recording::{Finger, SplitSpec};
use ecogdec::selection::SelectionConfig;
use ecogdec::synth::{write_synthetic, SynthConfig, SynthMode};
use ecogdec::load_recording;

#[derive(Parser)]
#[command(name = "ecogdec", version, about = "Finger-flexion decoding from ECoG amplitude features")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic recording container with planted ground truth.
    Synth(SynthArgs),
    /// Train per-finger decoders and save them as one model file.
    Train(TrainArgs),
    /// Score models on the validation split and write a correlation table.
    Evaluate(EvaluateArgs),
    /// Export the predicted and true validation time course of one finger.
    Plot(PlotArgs),
    /// Write per-bin predictions of every model in a model file.
    Predict(PredictArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Band,
    Raw,
}

#[derive(Clone, Copy, ValueEnum)]
enum PipelineArg {
    Raw,
    Pca,
    Fd,
}

impl From<PipelineArg> for Pipeline {
    fn from(p: PipelineArg) -> Self {
        match p {
            PipelineArg::Raw => Pipeline::Raw,
            PipelineArg::Pca => Pipeline::Pca,
            PipelineArg::Fd => Pipeline::Fd,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum FingerArg {
    Thumb,
    Index,
    Middle,
    Ring,
    Little,
    All,
}

impl FingerArg {
    fn fingers(self) -> Vec<Finger> {
        match self {
            FingerArg::Thumb => vec![Finger::Thumb],
            FingerArg::Index => vec![Finger::Index],
            FingerArg::Middle => vec![Finger::Middle],
            FingerArg::Ring => vec![Finger::Ring],
            FingerArg::Little => vec![Finger::Little],
            FingerArg::All => Finger::ALL.to_vec(),
        }
    }
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output container directory (created if missing).
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 48, value_parser = clap::value_parser!(u32).range(1..))]
    channels: u32,
    #[arg(long, default_value_t = 600, value_parser = clap::value_parser!(u32).range(1..))]
    duration_s: u32,
    #[arg(long, value_enum, default_value_t = ModeArg::Band)]
    mode: ModeArg,
    /// Target noise level relative to the noiseless target's spread.
    #[arg(long, default_value_t = 0.05)]
    noise_std: f64,
}

#[derive(Args)]
struct TrainArgs {
    /// Recording container directory.
    #[arg(long)]
    data: PathBuf,
    #[arg(long, value_enum)]
    pipeline: PipelineArg,
    #[arg(long, value_enum, default_value_t = FingerArg::All)]
    finger: FingerArg,
    /// Model file to write.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 25, value_parser = clap::value_parser!(u32).range(1..))]
    taps: u32,
    #[arg(long, default_value_t = 40, value_parser = clap::value_parser!(u32).range(1..))]
    bin_ms: u32,
    #[arg(long, default_value_t = 10, value_parser = clap::value_parser!(u32).range(1..))]
    max_features: u32,
    #[arg(long, default_value_t = 0.01)]
    min_improvement: f64,
    #[arg(long, default_value_t = 0.6)]
    train_fraction: f64,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long)]
    data: PathBuf,
    /// Model file; repeat to add one report row per file.
    #[arg(long, required = true)]
    model: Vec<PathBuf>,
    /// TSV report to write.
    #[arg(long)]
    report: PathBuf,
    /// Also write the aligned text table here.
    #[arg(long)]
    text: Option<PathBuf>,
}

#[derive(Args)]
struct PlotArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    model: PathBuf,
    #[arg(long, value_enum)]
    finger: FingerArg,
    /// Length of the exported window, from the first scored validation bin.
    #[arg(long, default_value_t = 60, value_parser = clap::value_parser!(u32).range(1..))]
    seconds: u32,
    /// `timecourse.tsv` or `timecourse.tsv,figure.svg`.
    #[arg(long)]
    out: String,
}

#[derive(Args)]
struct PredictArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    model: PathBuf,
    /// TSV with one column per finger model.
    #[arg(long)]
    out: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Synth(a) => synth(a),
        Command::Train(a) => train(a),
        Command::Evaluate(a) => evaluate_cmd(a),
        Command::Plot(a) => plot(a),
        Command::Predict(a) => predict(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn synth(a: SynthArgs) -> Result<()> {
    let mode = match a.mode {
        ModeArg::Band => SynthMode::Band,
        ModeArg::Raw => SynthMode::Raw,
    };
    let cfg = SynthConfig {
        duration_s: a.duration_s,
        noise_std: a.noise_std,
        ..SynthConfig::new(a.seed, a.channels as usize, mode)
    };
    fs::create_dir_all(&a.out).with_context(|| format!("creating {}", a.out.display()))?;
    let (rec, _) = write_synthetic(&cfg, &a.out)?;
    eprintln!(
        "wrote {}: {} channels × {} samples, {} glove samples",
        a.out.display(),
        rec.n_channels(),
        rec.n_ecog_samples(),
        rec.n_glove_samples()
    );
    Ok(())
}

fn train(a: TrainArgs) -> Result<()> {
    let rec = load_recording(&a.data)?;
    let config = TrainConfig {
        bin_ms: a.bin_ms,
        selection: SelectionConfig {
            max_features: a.max_features as usize,
            min_improvement: a.min_improvement,
            train_fraction: a.train_fraction,
            taps: a.taps as usize,
        },
    };
    let pipeline = Pipeline::from(a.pipeline);
    let decoders = train_fingers(&rec, &a.finger.fingers(), pipeline, &config)?;
    for d in &decoders {
        let cols: Vec<String> = d.model.columns.iter().map(|c| c.label()).collect();
        eprintln!(
            "{:<7} r={:.4}  columns: {}",
            d.model.finger.name(),
            d.trace.final_r(),
            cols.join(" ")
        );
    }
    ModelArtifact::new(rec.subject_id(), pipeline, config, decoders).save(&a.out)?;
    Ok(())
}

fn evaluate_cmd(a: EvaluateArgs) -> Result<()> {
    let rec = load_recording(&a.data)?;
    let mut rows = Vec::new();
    let mut first: Option<TrainConfig> = None;
    for path in &a.model {
        let artifact = ModelArtifact::load(path)?;
        let config = *first.get_or_insert(artifact.config);
        if artifact.config.selection.taps != config.selection.taps
            || artifact.config.bin_ms != config.bin_ms
            || artifact.config.selection.train_fraction != config.selection.train_fraction
        {
            bail!("{} was trained with a different bin width, tap count or split", path.display());
        }
        let split = SplitSpec::new(config.selection.train_fraction)?;
        let row = evaluate(&artifact.models(), &rec, &split)
            .with_context(|| format!("evaluating {}", path.display()))?;
        rows.push(row);
    }
    let config = first.expect("clap requires at least one model");
    let report = EvaluationReport {
        rows,
        taps: config.selection.taps,
        bin_ms: config.bin_ms,
        train_fraction: config.selection.train_fraction,
    };
    report.write_tsv(&a.report)?;
    let text = report.to_text();
    if let Some(path) = &a.text {
        fs::write(path, &text).with_context(|| format!("writing {}", path.display()))?;
    }
    print!("{text}");
    Ok(())
}

fn plot(a: PlotArgs) -> Result<()> {
    let fingers = a.finger.fingers();
    let [finger] = fingers[..] else {
        bail!("plot needs a single finger");
    };
    let (tsv, svg) = match a.out.split_once(',') {
        Some((t, s)) => (PathBuf::from(t), Some(PathBuf::from(s))),
        None => (PathBuf::from(&a.out), None),
    };
    let rec = load_recording(&a.data)?;
    let artifact = ModelArtifact::load(&a.model)?;
    let model = artifact
        .models()
        .into_iter()
        .find(|m| m.finger == finger)
        .with_context(|| format!("{} holds no {finger} model", a.model.display()))?;
    let split = SplitSpec::new(artifact.config.selection.train_fraction)?;
    let trace = validation_trace(&model, &rec, &split)?;
    let bin_ms = model.recipe.bin_ms();
    let want = (a.seconds as usize * 1000) / bin_ms as usize;
    let n = want.min(trace.predicted.len());
    if n < want {
        eprintln!(
            "note: validation split holds {:.2} s, exporting all of it",
            n as f64 * bin_ms as f64 / 1000.0
        );
    }
    export_timecourse(&trace.predicted[..n], &trace.truth[..n], bin_ms, trace.first_bin, &tsv)?;
    if let Some(svg) = svg {
        let title = format!("{} {} ({}): predicted vs true", rec.subject_id(), finger, artifact.pipeline.label());
        let body = timecourse_svg(&trace.predicted[..n], &trace.truth[..n], bin_ms, trace.first_bin, &title);
        write_file(&svg, &body)?;
    }
    Ok(())
}

fn predict(a: PredictArgs) -> Result<()> {
    let rec = load_recording(&a.data)?;
    let artifact = ModelArtifact::load(&a.model)?;
    let models = artifact.models();
    let preds = models
        .iter()
        .map(|m| m.predict(&rec))
        .collect::<ecogdec::Result<Vec<_>>>()?;
    let taps = models.first().map_or(1, |m| m.taps);
    let mut out = String::from("bin_index");
    for m in &models {
        let _ = write!(out, "\t{}", m.finger.name());
    }
    out.push('\n');
    let len = preds.iter().map(Vec::len).min().unwrap_or(0);
    for i in 0..len {
        let _ = write!(out, "{}", i + taps - 1);
        for p in &preds {
            let _ = write!(out, "\t{}", p[i]);
        }
        out.push('\n');
    }
    write_file(&a.out, &out)
}

fn write_file(path: &Path, body: &str) -> Result<()> {
    fs::write(path, body).with_context(|| format!("writing {}", path.display()))
}
