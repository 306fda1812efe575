//! In-memory composition of the stages: down-sample, window, extract,
//! select, train, evaluate. The CLI runs the same stages through files.

use std::path::Path;

use rayon::prelude::*;

use crate::data::{load_labels, load_sequences, LabelBook, LABELS_FILE};
use crate::edges::{canny, EdgeParams};
use crate::error::{Error, Result};
use crate::eval::{confusion, split, ConfusionMatrix};
use crate::gridfeat::{extract_from_edges, FeatureVector, GridSpec, ReferenceFrame};
use crate::imaging::{downsample, windows, FrameSequence};
use crate::select::{best_first_select, ClassEncoding, FeatureSubset};
use crate::svm::{grid_search_c, KernelParams, SvmModel};

/// Every tunable of a run.
#[derive(Clone, Debug, PartialEq)]
pub struct PipelineConfig {
    pub grid: usize,
    pub divisions: usize,
    /// Sample points per line; `None` uses `grid`.
    pub n_spacing: Option<usize>,
    pub edge_threshold: f64,
    pub low_ratio: f64,
    pub sigma: f64,
    pub window: usize,
    /// `None` means non-overlapping windows.
    pub stride: Option<usize>,
    pub keep_every: usize,
    pub reference: ReferenceFrame,
    pub c: f64,
    /// `None` uses `1 / selected feature count`.
    pub gamma: Option<f64>,
    /// When set, `c` is chosen among these by cross-validation.
    pub c_candidates: Option<Vec<f64>>,
    pub folds: usize,
    pub train_fraction: f64,
    pub max_stale: usize,
    pub class_encoding: ClassEncoding,
    pub seed: u64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            grid: 20,
            divisions: 5,
            n_spacing: None,
            edge_threshold: 0.4,
            low_ratio: 0.5,
            sigma: 1.4,
            window: 8,
            stride: None,
            keep_every: 3,
            reference: ReferenceFrame::First,
            c: KernelParams::DEFAULT_C,
            gamma: None,
            c_candidates: None,
            folds: 10,
            train_fraction: 0.7,
            max_stale: 5,
            class_encoding: ClassEncoding::default(),
            seed: 0,
        }
    }
}

impl PipelineConfig {
    pub fn grid_spec(&self) -> Result<GridSpec> {
        GridSpec::new(self.grid, self.divisions, self.n_spacing.unwrap_or(self.grid))
    }

    pub fn edge_params(&self) -> Result<EdgeParams> {
        EdgeParams::new(self.edge_threshold, self.low_ratio, self.sigma)
    }

    pub fn stride(&self) -> usize {
        self.stride.unwrap_or(self.window)
    }
}

/// Frame sequences plus resolved labels.
#[derive(Clone, Debug, Default)]
pub struct Corpus {
    pub sequences: Vec<(String, FrameSequence)>,
    pub labels: LabelBook,
}

impl Corpus {
    /// Reads `<root>/<sequence_id>/frame_*.pgm` and `<root>/labels.csv`.
    pub fn load(root: impl AsRef<Path>, source_fps: f64) -> Result<Corpus> {
        let root = root.as_ref();
        let labels_path = root.join(LABELS_FILE);
        let labels = if labels_path.exists() {
            load_labels(&labels_path)?
        } else {
            log::warn!("{} not found; windows are unlabeled", labels_path.display());
            LabelBook::default()
        };
        Ok(Corpus {
            sequences: load_sequences(root, source_fps)?,
            labels,
        })
    }
}

/// Extraction counters.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct ExtractStats {
    pub windows: usize,
    pub labeled: usize,
    pub frames: usize,
    pub edge_pixels: usize,
}

impl ExtractStats {
    /// Mean edge pixels per processed frame.
    pub fn mean_edge_pixels(&self) -> f64 {
        if self.frames == 0 {
            0.0
        } else {
            self.edge_pixels as f64 / self.frames as f64
        }
    }
}

/// Feature rows for every window of every sequence, labeled where the
/// corpus has a label.
pub fn extract_corpus(corpus: &Corpus, config: &PipelineConfig) -> Result<(Vec<FeatureVector>, ExtractStats)> {
    let spec = config.grid_spec()?;
    let params = config.edge_params()?;
    let stride = config.stride();
    let per_sequence = corpus
        .sequences
        .par_iter()
        .map(|(id, seq)| {
            let kept = downsample(seq, config.keep_every)?;
            let mut rows = Vec::new();
            let mut stats = ExtractStats::default();
            for w in windows(&kept, id, config.window, stride)? {
                let edges = w
                    .frames
                    .iter()
                    .map(|f| canny(f, &params))
                    .collect::<Result<Vec<_>>>()?;
                stats.frames += edges.len();
                stats.edge_pixels += edges.iter().map(|e| e.count()).sum::<usize>();
                let mut row = extract_from_edges(id, w.start_index, &edges, &spec, config.reference)?;
                row.label = corpus.labels.label_for(id, w.start_index);
                stats.windows += 1;
                stats.labeled += row.label.is_some() as usize;
                rows.push(row);
            }
            Ok((rows, stats))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut all = Vec::new();
    let mut total = ExtractStats::default();
    for (rows, s) in per_sequence {
        all.extend(rows);
        total.windows += s.windows;
        total.labeled += s.labeled;
        total.frames += s.frames;
        total.edge_pixels += s.edge_pixels;
    }
    Ok((all, total))
}

/// Everything a run produced.
#[derive(Clone, Debug)]
pub struct PipelineReport {
    pub feature_len: usize,
    pub stats: ExtractStats,
    pub subset: FeatureSubset,
    pub c: f64,
    pub model: SvmModel,
    pub train_windows: usize,
    pub test_windows: usize,
    pub confusion: ConfusionMatrix,
}

/// Select, train and test on already-extracted rows.
pub fn run_on_features(rows: &[FeatureVector], config: &PipelineConfig) -> Result<PipelineReport> {
    let labeled: Vec<FeatureVector> = rows.iter().filter(|r| r.label.is_some()).cloned().collect();
    if labeled.is_empty() {
        return Err(Error::DegenerateData("no labeled windows".into()));
    }
    let (train, test) = split(&labeled, config.train_fraction, config.seed)?;
    let subset = best_first_select(&train, config.max_stale, config.class_encoding)?;
    let c = match &config.c_candidates {
        Some(cands) => grid_search_c(&train, &subset, cands, config.folds, config.gamma, config.seed)?.best_c,
        None => config.c,
    };
    let gamma = config.gamma.unwrap_or(1.0 / subset.len() as f64);
    let model = SvmModel::train(&train, &subset, KernelParams::new(gamma, c)?)?;
    let confusion = confusion(&model, &test)?;
    Ok(PipelineReport {
        feature_len: labeled[0].len(),
        stats: ExtractStats::default(),
        subset,
        c,
        model,
        train_windows: train.len(),
        test_windows: test.len(),
        confusion,
    })
}

/// Extract, split, select, train, and score the held-out windows.
pub fn run_pipeline(corpus: &Corpus, config: &PipelineConfig) -> Result<PipelineReport> {
    let (rows, stats) = extract_corpus(corpus, config)?;
    let mut report = run_on_features(&rows, config)?;
    report.stats = stats;
    Ok(report)
}
