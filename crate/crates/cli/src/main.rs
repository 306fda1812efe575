use std::fs;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use crowdgrid::data::{generate_synthetic, SyntheticConfig};
use crowdgrid::edges::canny;
use crowdgrid::eval::{
    split_indices, sweep_edge_threshold, sweep_grid_size, ConfusionMatrix, DEFAULT_GRID_SIZES, DEFAULT_THRESHOLDS,
};
use crowdgrid::gridfeat::{read_features_csv, write_features_csv, FeatureVector, ReferenceFrame};
use crowdgrid::imaging::{downsample, windows};
use crowdgrid::pipeline::{extract_corpus, Corpus, PipelineConfig};
use crowdgrid::select::{best_first_select, ClassEncoding, FeatureSubset};
use crowdgrid::svm::{grid_search_c, KernelParams, SvmModel};

/// Crowd emotion recognition from edge-grid features.
///
/// Stages exchange files: synth -> extract -> select -> train -> predict/evaluate.
/// select, train and evaluate recompute the same seeded, sequence-grouped
/// train/test split, so pass the same --train-fraction and --seed to each.
#[derive(Parser, Debug)]
#[command(name = "crowdgrid", version)]
struct Cli {
    /// Worker threads for extraction and sweeps [default: available cores]
    #[arg(long, global = true)]
    jobs: Option<usize>,

    /// More log output (-v info, -vv debug)
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write a synthetic corpus (PGM frame directories plus labels.csv)
    Synth(SynthArgs),
    /// Extract one feature row per window into a CSV
    Extract(ExtractArgs),
    /// Best-first CFS selection on the training split
    Select(SelectArgs),
    /// Train the one-vs-one RBF-SVM on the training split
    Train(TrainArgs),
    /// Predict a label for every feature row
    Predict(PredictArgs),
    /// Confusion matrix and metrics for a model, or for a stored count table
    Evaluate(EvaluateArgs),
    /// Full-pipeline sweeps over edge threshold and grid size
    Sweep(SweepArgs),
}

#[derive(Args, Debug)]
struct SynthArgs {
    /// Output corpus directory
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 10)]
    sequences_per_class: usize,
    /// Frames per sequence (at least 24)
    #[arg(long, default_value_t = 24)]
    frames: usize,
    #[arg(long, default_value_t = 64)]
    width: usize,
    #[arg(long, default_value_t = 64)]
    height: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args, Debug, Clone)]
struct FeatureArgs {
    /// Grid lines per direction (g)
    #[arg(long, default_value_t = 20)]
    grid: usize,
    /// Divisions per line (d)
    #[arg(long, default_value_t = 5)]
    divisions: usize,
    /// Sample points per line [default: same as --grid]
    #[arg(long)]
    n_spacing: Option<usize>,
    /// Canny high threshold on max-normalized gradient magnitude (t)
    #[arg(long, default_value_t = 0.4)]
    edge_threshold: f64,
    /// Canny low threshold as a fraction of the high one
    #[arg(long, default_value_t = 0.5)]
    low_ratio: f64,
    /// Gaussian smoothing sigma
    #[arg(long, default_value_t = 1.4)]
    sigma: f64,
    /// Frames per window (w), after down-sampling
    #[arg(long, default_value_t = 8)]
    window: usize,
    /// Window stride [default: same as --window]
    #[arg(long)]
    stride: Option<usize>,
    /// Keep every k-th source frame
    #[arg(long, default_value_t = 3)]
    keep_every: usize,
    /// Frame providing the static features: first, middle or last
    #[arg(long, default_value = "first")]
    reference: ReferenceFrame,
    /// Source frame rate, recorded for the down-sampled sequences
    #[arg(long, default_value_t = 24.0)]
    fps: f64,
}

#[derive(Args, Debug, Clone)]
struct SplitArgs {
    /// Fraction of each class's sequences used for training
    #[arg(long, default_value_t = 0.7)]
    train_fraction: f64,
    /// Seed for the split, folds and solver
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args, Debug, Clone)]
struct SelectOpts {
    /// Non-improving expansions before best-first search stops
    #[arg(long, default_value_t = 5)]
    max_stale: usize,
    /// Class side of the CFS correlation: indicator or integer
    #[arg(long, default_value = "indicator")]
    class_encoding: ClassEncoding,
}

#[derive(Args, Debug, Clone)]
struct SvmOpts {
    /// Soft-margin penalty C
    #[arg(long, default_value_t = KernelParams::DEFAULT_C)]
    slack_c: f64,
    /// RBF width [default: 1 / number of selected features]
    #[arg(long)]
    gamma: Option<f64>,
    /// Pick C among these by k-fold accuracy on the training split (comma separated)
    #[arg(long, value_delimiter = ',')]
    c_candidates: Option<Vec<f64>>,
    /// Folds for the C search
    #[arg(long, default_value_t = 10)]
    folds: usize,
}

#[derive(Args, Debug)]
struct ExtractArgs {
    /// Corpus directory (<root>/<sequence_id>/frame_NNNNN.pgm, optional labels.csv)
    #[arg(long)]
    corpus: PathBuf,
    /// Output features CSV
    #[arg(long)]
    out: PathBuf,
    /// Also write every edge map as PGM under this directory
    #[arg(long)]
    dump_edges: Option<PathBuf>,
    #[command(flatten)]
    features: FeatureArgs,
}

#[derive(Args, Debug)]
struct SelectArgs {
    #[arg(long)]
    features: PathBuf,
    /// Output subset file
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    split: SplitArgs,
    #[command(flatten)]
    select: SelectOpts,
}

#[derive(Args, Debug)]
struct TrainArgs {
    #[arg(long)]
    features: PathBuf,
    /// Subset file from `select` [default: all features]
    #[arg(long)]
    subset: Option<PathBuf>,
    /// Output model file
    #[arg(long)]
    out: PathBuf,
    /// Train on every labeled row instead of the training split
    #[arg(long)]
    all: bool,
    #[command(flatten)]
    split: SplitArgs,
    #[command(flatten)]
    svm: SvmOpts,
}

#[derive(Args, Debug)]
struct PredictArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    features: PathBuf,
    /// Output CSV: sequence_id,start_index,predicted,label
    #[arg(long)]
    out: PathBuf,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum Rows {
    Test,
    Train,
    All,
}

#[derive(Args, Debug)]
struct EvaluateArgs {
    #[arg(long, required_unless_present = "counts", requires = "features")]
    model: Option<PathBuf>,
    #[arg(long)]
    features: Option<PathBuf>,
    /// Evaluate a stored count table (rows true, columns predicted) instead of a model
    #[arg(long, conflicts_with_all = ["model", "features"])]
    counts: Option<PathBuf>,
    /// Which labeled rows to score
    #[arg(long, value_enum, default_value_t = Rows::Test)]
    on: Rows,
    /// Output directory for confusion.csv, confusion_counts.csv and metrics.txt
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    split: SplitArgs,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum Axis {
    Edge,
    Grid,
    Both,
}

#[derive(Args, Debug)]
struct SweepArgs {
    #[arg(long)]
    corpus: PathBuf,
    /// Output directory for sweep_edge.csv and sweep_grid.csv
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_enum, default_value_t = Axis::Both)]
    axis: Axis,
    /// Edge thresholds to try (comma separated) [default: 0.2,0.4,0.6,0.8]
    #[arg(long, value_delimiter = ',')]
    thresholds: Option<Vec<f64>>,
    /// Grid sizes to try (comma separated) [default: 5,10,...,50]
    #[arg(long, value_delimiter = ',')]
    grid_sizes: Option<Vec<usize>>,
    #[command(flatten)]
    features: FeatureArgs,
    #[command(flatten)]
    split: SplitArgs,
    #[command(flatten)]
    select: SelectOpts,
    #[command(flatten)]
    svm: SvmOpts,
}

fn pipeline_config(f: &FeatureArgs) -> PipelineConfig {
    PipelineConfig {
        grid: f.grid,
        divisions: f.divisions,
        n_spacing: f.n_spacing,
        edge_threshold: f.edge_threshold,
        low_ratio: f.low_ratio,
        sigma: f.sigma,
        window: f.window,
        stride: f.stride,
        keep_every: f.keep_every,
        reference: f.reference,
        ..PipelineConfig::default()
    }
}

fn create(path: &Path) -> Result<BufWriter<fs::File>> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
    }
    Ok(BufWriter::new(
        fs::File::create(path).with_context(|| format!("creating {}", path.display()))?,
    ))
}

fn open(path: &Path) -> Result<BufReader<fs::File>> {
    Ok(BufReader::new(
        fs::File::open(path).with_context(|| format!("opening {}", path.display()))?,
    ))
}

fn read_rows(path: &Path) -> Result<Vec<FeatureVector>> {
    read_features_csv(open(path)?).with_context(|| format!("reading {}", path.display()))
}

fn labeled(rows: Vec<FeatureVector>) -> Result<Vec<FeatureVector>> {
    let total = rows.len();
    let rows: Vec<_> = rows.into_iter().filter(|r| r.label.is_some()).collect();
    if rows.len() < total {
        log::info!("ignoring {} unlabeled rows", total - rows.len());
    }
    if rows.is_empty() {
        bail!("no labeled rows");
    }
    Ok(rows)
}

fn pick(rows: &[FeatureVector], idx: &[usize]) -> Vec<FeatureVector> {
    idx.iter().map(|&i| rows[i].clone()).collect()
}

fn synth(a: SynthArgs) -> Result<()> {
    let cfg = SyntheticConfig {
        sequences_per_class: a.sequences_per_class,
        frames: a.frames,
        width: a.width,
        height: a.height,
        seed: a.seed,
        ..SyntheticConfig::default()
    };
    let n = generate_synthetic(&cfg, &a.out)?;
    println!("wrote {n} sequences to {}", a.out.display());
    Ok(())
}

fn extract(a: ExtractArgs) -> Result<()> {
    let cfg = pipeline_config(&a.features);
    let corpus = Corpus::load(&a.corpus, a.features.fps)?;
    if corpus.sequences.is_empty() {
        bail!("no sequence directories under {}", a.corpus.display());
    }
    let (rows, stats) = extract_corpus(&corpus, &cfg)?;
    write_features_csv(&rows, create(&a.out)?)?;
    if let Some(dir) = &a.dump_edges {
        let params = cfg.edge_params()?;
        for (id, seq) in &corpus.sequences {
            let kept = downsample(seq, cfg.keep_every)?;
            for w in windows(&kept, id, cfg.window, cfg.stride())? {
                for (t, frame) in w.frames.iter().enumerate() {
                    let path = dir.join(id).join(format!("{:05}_{t}.pgm", w.start_index));
                    fs::create_dir_all(path.parent().unwrap())?;
                    canny(frame, &params)?.save_pgm(&path)?;
                }
            }
        }
    }
    println!(
        "{} windows ({} labeled), {} features each, {:.1} edge pixels per frame",
        stats.windows,
        stats.labeled,
        rows.first().map_or(0, FeatureVector::len),
        stats.mean_edge_pixels()
    );
    Ok(())
}

fn select(a: SelectArgs) -> Result<()> {
    let rows = labeled(read_rows(&a.features)?)?;
    let split = split_indices(&rows, a.split.train_fraction, a.split.seed)?;
    let subset = best_first_select(&pick(&rows, &split.train), a.select.max_stale, a.select.class_encoding)?;
    subset.write(create(&a.out)?)?;
    println!("selected {} features, merit {:.6}", subset.len(), subset.merit);
    Ok(())
}

fn train(a: TrainArgs) -> Result<()> {
    let rows = labeled(read_rows(&a.features)?)?;
    let subset = match &a.subset {
        Some(p) => FeatureSubset::read(open(p)?).with_context(|| format!("reading {}", p.display()))?,
        None => FeatureSubset::all(rows[0].len()),
    };
    let train_rows = if a.all {
        rows
    } else {
        let split = split_indices(&rows, a.split.train_fraction, a.split.seed)?;
        pick(&rows, &split.train)
    };
    let c = match &a.svm.c_candidates {
        Some(cands) => {
            let search = grid_search_c(&train_rows, &subset, cands, a.svm.folds, a.svm.gamma, a.split.seed)?;
            for (c, acc) in &search.scores {
                log::info!("C {c}: mean fold accuracy {acc:.4}");
            }
            search.best_c
        }
        None => a.svm.slack_c,
    };
    let gamma = a.svm.gamma.unwrap_or(1.0 / subset.len() as f64);
    let model = SvmModel::train(&train_rows, &subset, KernelParams::new(gamma, c)?)?;
    model.write(create(&a.out)?)?;
    println!(
        "trained {} machines on {} rows, C {c}, gamma {gamma}",
        model.machines.len(),
        train_rows.len()
    );
    Ok(())
}

fn load_model(path: &Path) -> Result<SvmModel> {
    SvmModel::read(open(path)?).with_context(|| format!("reading {}", path.display()))
}

fn predict(a: PredictArgs) -> Result<()> {
    let model = load_model(&a.model)?;
    let rows = read_rows(&a.features)?;
    let mut out = create(&a.out)?;
    writeln!(out, "sequence_id,start_index,predicted,label")?;
    for r in &rows {
        let p = model.predict_features(r)?;
        let label = r.label.map_or(String::new(), |l| l.to_string());
        writeln!(out, "{},{},{p},{label}", r.sequence_id, r.start_index)?;
    }
    out.flush()?;
    println!("predicted {} rows", rows.len());
    Ok(())
}

fn evaluate(a: EvaluateArgs) -> Result<()> {
    let cm = if let Some(path) = &a.counts {
        let counts = ConfusionMatrix::read_counts_csv(open(path)?).with_context(|| format!("reading {}", path.display()))?;
        ConfusionMatrix::from_pairs(counts.pairs())
    } else {
        let model = load_model(a.model.as_deref().unwrap())?;
        let rows = labeled(read_rows(a.features.as_deref().unwrap())?)?;
        let scored = match a.on {
            Rows::All => rows,
            side => {
                let split = split_indices(&rows, a.split.train_fraction, a.split.seed)?;
                pick(&rows, if side == Rows::Test { &split.test } else { &split.train })
            }
        };
        crowdgrid::eval::confusion(&model, &scored)?
    };
    fs::create_dir_all(&a.out).with_context(|| format!("creating {}", a.out.display()))?;
    cm.write_csv(create(&a.out.join("confusion.csv"))?)?;
    cm.write_counts_csv(create(&a.out.join("confusion_counts.csv"))?)?;
    let metrics = cm.metrics_text();
    fs::write(a.out.join("metrics.txt"), &metrics)?;
    print!("{metrics}");
    Ok(())
}

fn sweep(a: SweepArgs) -> Result<()> {
    let mut cfg = pipeline_config(&a.features);
    cfg.train_fraction = a.split.train_fraction;
    cfg.seed = a.split.seed;
    cfg.max_stale = a.select.max_stale;
    cfg.class_encoding = a.select.class_encoding;
    cfg.c = a.svm.slack_c;
    cfg.gamma = a.svm.gamma;
    cfg.c_candidates = a.svm.c_candidates.clone();
    cfg.folds = a.svm.folds;
    let corpus = Corpus::load(&a.corpus, a.features.fps)?;
    fs::create_dir_all(&a.out).with_context(|| format!("creating {}", a.out.display()))?;
    let mut results = Vec::new();
    if a.axis != Axis::Grid {
        let values = a.thresholds.clone().unwrap_or(DEFAULT_THRESHOLDS.to_vec());
        results.push(("sweep_edge.csv", sweep_edge_threshold(&corpus, &cfg, &values)?));
    }
    if a.axis != Axis::Edge {
        let values = a.grid_sizes.clone().unwrap_or(DEFAULT_GRID_SIZES.to_vec());
        results.push(("sweep_grid.csv", sweep_grid_size(&corpus, &cfg, &values)?));
    }
    for (name, result) in results {
        result.write_csv(create(&a.out.join(name))?)?;
        for p in &result.points {
            println!(
                "{} {}: overall {:.3}, {} features, {} selected, {:.1} edge px/frame",
                result.axis.name(),
                p.value,
                p.overall,
                p.feature_len,
                p.selected,
                p.mean_edge_pixels
            );
        }
        if let Some(best) = result.best() {
            println!("best {} = {}", result.axis.name(), best.value);
        }
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    if let Some(jobs) = cli.jobs {
        if jobs == 0 {
            bail!("--jobs must be at least 1");
        }
        rayon::ThreadPoolBuilder::new().num_threads(jobs).build_global()?;
    }
    match cli.command {
        Command::Synth(a) => synth(a),
        Command::Extract(a) => extract(a),
        Command::Select(a) => select(a),
        Command::Train(a) => train(a),
        Command::Predict(a) => predict(a),
        Command::Evaluate(a) => evaluate(a),
        Command::Sweep(a) => sweep(a),
    }
}

fn main() -> ExitCode {
    // clap exits with 2 on usage errors and 0 for --help/--version
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
