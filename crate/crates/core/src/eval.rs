//! Evaluation harness: sequence-grouped stratified splits and folds,
//! confusion matrices, and parameter sweeps over the full pipeline.
//!
//! Every window of a sequence always lands on the same side of a split, so
//! near-duplicate frames of one episode never leak between train and test.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::{BufRead, Write};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::gridfeat::FeatureVector;
use crate::label::Emotion;
use crate::pipeline::{run_pipeline, Corpus, PipelineConfig};
use crate::svm::SvmModel;

/// Windows of one sequence, with the label used for stratification.
struct Group {
    label: Option<Emotion>,
    members: Vec<usize>,
}

/// Groups rows by `sequence_id` in id order; the group label is the most
/// common window label (lowest class code on ties).
fn groups(rows: &[FeatureVector]) -> Vec<Group> {
    let mut by_id: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, r) in rows.iter().enumerate() {
        by_id.entry(r.sequence_id.as_str()).or_default().push(i);
    }
    by_id
        .into_values()
        .map(|members| {
            let mut counts = [0usize; Emotion::COUNT];
            for &i in &members {
                if let Some(l) = rows[i].label {
                    counts[l.code()] += 1;
                }
            }
            let top = counts.iter().copied().max().unwrap_or(0);
            let label = (top > 0)
                .then(|| Emotion::from_code(counts.iter().position(|&c| c == top).unwrap()))
                .flatten();
            Group { label, members }
        })
        .collect()
}

/// Group indices per stratum, each stratum shuffled with `rng`.
fn shuffled_strata(groups: &[Group], rng: &mut ChaCha8Rng) -> Vec<(Option<Emotion>, Vec<usize>)> {
    let mut strata: BTreeMap<Option<Emotion>, Vec<usize>> = BTreeMap::new();
    for (g, group) in groups.iter().enumerate() {
        strata.entry(group.label).or_default().push(g);
    }
    strata
        .into_iter()
        .map(|(label, mut gs)| {
            gs.shuffle(rng);
            (label, gs)
        })
        .collect()
}

/// Train/test row indices.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SplitIndices {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

/// Stratified, sequence-grouped split. Each class sends
/// `round(train_fraction * sequences)` of its sequences to train; a class
/// with fewer than two sequences goes entirely to train.
pub fn split_indices(rows: &[FeatureVector], train_fraction: f64, seed: u64) -> Result<SplitIndices> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "train fraction {train_fraction} not in (0, 1)"
        )));
    }
    let groups = groups(rows);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut train = Vec::new();
    let mut test = Vec::new();
    for (label, gs) in shuffled_strata(&groups, &mut rng) {
        let n = gs.len();
        let n_train = if n < 2 {
            log::warn!(
                "class {} has {n} sequence(s); all placed in train",
                label.map_or("unlabeled", Emotion::name)
            );
            n
        } else {
            ((train_fraction * n as f64).round() as usize).clamp(1, n - 1)
        };
        for (k, &g) in gs.iter().enumerate() {
            let side = if k < n_train { &mut train } else { &mut test };
            side.extend(&groups[g].members);
        }
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok(SplitIndices { train, test })
}

/// [`split_indices`] materialized into owned rows.
pub fn split(
    rows: &[FeatureVector],
    train_fraction: f64,
    seed: u64,
) -> Result<(Vec<FeatureVector>, Vec<FeatureVector>)> {
    let s = split_indices(rows, train_fraction, seed)?;
    let pick = |idx: &[usize]| idx.iter().map(|&i| rows[i].clone()).collect();
    Ok((pick(&s.train), pick(&s.test)))
}

/// Stratified, sequence-grouped k-fold partition. Returns the row indices
/// of each fold. Groups are dealt round-robin within every class, continuing
/// from where the previous class stopped, so fold sizes (in sequences) differ
/// by at most one.
pub fn kfold(rows: &[FeatureVector], k: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if k < 2 {
        return Err(Error::InvalidParameter(format!("k = {k} folds; need at least 2")));
    }
    let groups = groups(rows);
    if groups.len() < k {
        return Err(Error::Partition(format!(
            "{} sequences cannot fill {k} folds",
            groups.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut folds = vec![Vec::new(); k];
    let mut next = 0;
    for (_, gs) in shuffled_strata(&groups, &mut rng) {
        for g in gs {
            folds[next].extend(&groups[g].members);
            next = (next + 1) % k;
        }
    }
    folds.iter_mut().for_each(|f| f.sort_unstable());
    Ok(folds)
}

/// Counts of (true, predicted) over the seven classes.
#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub struct ConfusionMatrix {
    /// `counts[true][predicted]`, indexed by class code.
    pub counts: [[u64; Emotion::COUNT]; Emotion::COUNT],
}

impl ConfusionMatrix {
    pub fn from_pairs(pairs: impl IntoIterator<Item = (Emotion, Emotion)>) -> Self {
        let mut m = ConfusionMatrix::default();
        for (t, p) in pairs {
            m.counts[t.code()][p.code()] += 1;
        }
        m
    }

    pub fn classes(&self) -> [Emotion; Emotion::COUNT] {
        Emotion::ALL
    }

    pub fn support(&self) -> [u64; Emotion::COUNT] {
        self.counts.map(|row| row.iter().sum())
    }

    pub fn total(&self) -> u64 {
        self.support().iter().sum()
    }

    /// Row-normalized matrix; rows without support stay zero.
    pub fn rows(&self) -> [[f64; Emotion::COUNT]; Emotion::COUNT] {
        self.counts.map(|row| {
            let s: u64 = row.iter().sum();
            row.map(|c| if s > 0 { c as f64 / s as f64 } else { 0.0 })
        })
    }

    /// Diagonal of the row-normalized matrix; `None` without support.
    pub fn recall(&self) -> [Option<f64>; Emotion::COUNT] {
        let support = self.support();
        std::array::from_fn(|i| (support[i] > 0).then(|| self.counts[i][i] as f64 / support[i] as f64))
    }

    /// Support-weighted mean of the recalls, i.e. trace over total.
    pub fn overall_accuracy(&self) -> f64 {
        let total = self.total();
        if total == 0 {
            return 0.0;
        }
        let trace: u64 = (0..Emotion::COUNT).map(|i| self.counts[i][i]).sum();
        trace as f64 / total as f64
    }

    /// Unweighted mean recall over classes with support.
    pub fn mean_recall(&self) -> f64 {
        let r: Vec<f64> = self.recall().iter().flatten().copied().collect();
        if r.is_empty() {
            0.0
        } else {
            r.iter().sum::<f64>() / r.len() as f64
        }
    }

    /// Expands the counts back into individual (true, predicted) pairs.
    pub fn pairs(&self) -> impl Iterator<Item = (Emotion, Emotion)> + '_ {
        Emotion::ALL.into_iter().flat_map(move |t| {
            Emotion::ALL.into_iter().flat_map(move |p| {
                std::iter::repeat_n((t, p), self.counts[t.code()][p.code()] as usize)
            })
        })
    }

    /// `confusion.csv`: header of predicted classes, one row-normalized row per true class.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        self.write_table(out, |r, c| format!("{:.6}", self.rows()[r][c]))
    }

    /// Same layout with raw counts.
    pub fn write_counts_csv<W: Write>(&self, out: W) -> Result<()> {
        self.write_table(out, |r, c| self.counts[r][c].to_string())
    }

    fn write_table<W: Write>(&self, mut out: W, cell: impl Fn(usize, usize) -> String) -> Result<()> {
        let mut s = String::from("true");
        for e in Emotion::ALL {
            write!(s, ",{e}").unwrap();
        }
        s.push('\n');
        for (r, e) in Emotion::ALL.iter().enumerate() {
            s.push_str(e.name());
            for c in 0..Emotion::COUNT {
                write!(s, ",{}", cell(r, c)).unwrap();
            }
            s.push('\n');
        }
        out.write_all(s.as_bytes()).map_err(|e| Error::io("<confusion csv>", e))
    }

    /// Reads a counts table as written by [`write_counts_csv`](Self::write_counts_csv).
    /// Row and column headers may list the classes in any order.
    pub fn read_counts_csv<R: BufRead>(input: R) -> Result<Self> {
        let mut lines = input.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::Format("empty confusion file".into()))?
            .map_err(|e| Error::io("<confusion csv>", e))?;
        let cols = header
            .trim()
            .split(',')
            .skip(1)
            .map(str::parse)
            .collect::<Result<Vec<Emotion>>>()?;
        let mut m = ConfusionMatrix::default();
        for line in lines {
            let line = line.map_err(|e| Error::io("<confusion csv>", e))?;
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.trim().split(',').collect();
            if fields.len() != cols.len() + 1 {
                return Err(Error::Format(format!("confusion row {line:?} has wrong width")));
            }
            let t: Emotion = fields[0].parse()?;
            for (p, f) in cols.iter().zip(&fields[1..]) {
                m.counts[t.code()][p.code()] = f
                    .trim()
                    .parse()
                    .map_err(|_| Error::Format(format!("bad count {f:?}")))?;
            }
        }
        Ok(m)
    }

    /// `metrics.txt`: overall accuracy then per-class recall.
    pub fn metrics_text(&self) -> String {
        let mut s = format!(
            "overall_accuracy {:.6}\nmean_recall {:.6}\nsamples {}\n",
            self.overall_accuracy(),
            self.mean_recall(),
            self.total()
        );
        for (e, r) in Emotion::ALL.iter().zip(self.recall()) {
            match r {
                Some(r) => writeln!(s, "recall_{e} {r:.6}").unwrap(),
                None => writeln!(s, "recall_{e} n/a").unwrap(),
            }
        }
        s
    }
}

/// Confusion of `model` over labeled test rows.
pub fn confusion(model: &SvmModel, test: &[FeatureVector]) -> Result<ConfusionMatrix> {
    if test.is_empty() {
        return Err(Error::DegenerateData("empty test set".into()));
    }
    let pairs = test
        .iter()
        .filter_map(|r| r.label.map(|l| (l, r)))
        .map(|(truth, r)| Ok((truth, model.predict_features(r)?)))
        .collect::<Result<Vec<_>>>()?;
    Ok(ConfusionMatrix::from_pairs(pairs))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SweepAxis {
    EdgeThreshold,
    GridSize,
}

impl SweepAxis {
    pub fn name(self) -> &'static str {
        match self {
            SweepAxis::EdgeThreshold => "edge_threshold",
            SweepAxis::GridSize => "grid_size",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepPoint {
    pub value: f64,
    pub recall: [Option<f64>; Emotion::COUNT],
    pub overall: f64,
    pub feature_len: usize,
    pub selected: usize,
    pub mean_edge_pixels: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepResult {
    pub axis: SweepAxis,
    pub points: Vec<SweepPoint>,
}

impl SweepResult {
    /// Long format: `param,class,recall,overall`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        let mut s = String::from("param,class,recall,overall\n");
        for p in &self.points {
            for (e, r) in Emotion::ALL.iter().zip(p.recall) {
                let r = r.map_or(String::new(), |r| format!("{r:.6}"));
                writeln!(s, "{},{e},{r},{:.6}", p.value, p.overall).unwrap();
            }
        }
        out.write_all(s.as_bytes()).map_err(|e| Error::io("<sweep csv>", e))
    }

    /// Parameter value with the highest overall accuracy (first on ties).
    pub fn best(&self) -> Option<&SweepPoint> {
        self.points
            .iter()
            .fold(None, |best: Option<&SweepPoint>, p| match best {
                Some(b) if b.overall >= p.overall => Some(b),
                _ => Some(p),
            })
    }
}

fn sweep(
    corpus: &Corpus,
    base: &PipelineConfig,
    axis: SweepAxis,
    values: &[f64],
) -> Result<SweepResult> {
    if values.is_empty() {
        return Err(Error::InvalidParameter("empty sweep".into()));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    sorted.dedup();
    let points = sorted
        .par_iter()
        .map(|&value| {
            let mut cfg = base.clone();
            match axis {
                SweepAxis::EdgeThreshold => cfg.edge_threshold = value,
                SweepAxis::GridSize => {
                    cfg.grid = value as usize;
                    cfg.n_spacing = None;
                }
            }
            let report = run_pipeline(corpus, &cfg)?;
            Ok(SweepPoint {
                value,
                recall: report.confusion.recall(),
                overall: report.confusion.overall_accuracy(),
                feature_len: report.feature_len,
                selected: report.subset.len(),
                mean_edge_pixels: report.stats.mean_edge_pixels(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SweepResult { axis, points })
}

pub const DEFAULT_THRESHOLDS: [f64; 4] = [0.2, 0.4, 0.6, 0.8];
pub const DEFAULT_GRID_SIZES: [usize; 10] = [5, 10, 15, 20, 25, 30, 35, 40, 45, 50];

/// Full pipeline per edge threshold, grid size fixed by `base`.
pub fn sweep_edge_threshold(
    corpus: &Corpus,
    base: &PipelineConfig,
    thresholds: &[f64],
) -> Result<SweepResult> {
    sweep(corpus, base, SweepAxis::EdgeThreshold, thresholds)
}

/// Full pipeline per grid size (`n_spacing` follows the grid), threshold fixed by `base`.
pub fn sweep_grid_size(corpus: &Corpus, base: &PipelineConfig, sizes: &[usize]) -> Result<SweepResult> {
    let values: Vec<f64> = sizes.iter().map(|&g| g as f64).collect();
    sweep(corpus, base, SweepAxis::GridSize, &values)
}
