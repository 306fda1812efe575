//! Best-first feature-subset search.
//!
//! The default evaluator is the correlation-based merit
//!
//! ```text
//! merit(S) = k * mean|r_cf| / sqrt(k + k (k - 1) * mean|r_ff|)
//! ```
//!
//! where `r_cf` correlates a feature with the class and `r_ff` correlates two
//! selected features. The class side is either the integer class code or,
//! by default, the prior-weighted set of one-vs-rest indicators. A wrapper evaluator scoring subsets by
//! cross-validated SVM accuracy is also available.

use std::cmp::Ordering;
use std::collections::{BTreeSet, HashSet};
use std::io::{BufRead, Write};

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::eval::kfold;
use crate::gridfeat::FeatureVector;
use crate::svm::{KernelParams, SvmModel};

/// Merits closer than this are considered equal.
const MERIT_EPS: f64 = 1e-12;

/// Selected feature indices, ascending, with the merit they scored.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureSubset {
    pub indices: Vec<usize>,
    pub merit: f64,
}

impl FeatureSubset {
    /// Sorts and validates `indices` against a vector length of `n_features`.
    pub fn new(mut indices: Vec<usize>, merit: f64, n_features: usize) -> Result<Self> {
        indices.sort_unstable();
        if indices.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::InvalidParameter("duplicate feature index".into()));
        }
        if let Some(&bad) = indices.iter().find(|&&i| i >= n_features) {
            return Err(Error::InvalidParameter(format!(
                "feature index {bad} out of range for {n_features} features"
            )));
        }
        Ok(FeatureSubset { indices, merit })
    }

    /// Every feature of an `n`-dimensional vector.
    pub fn all(n: usize) -> Self {
        FeatureSubset {
            indices: (0..n).collect(),
            merit: f64::NAN,
        }
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    /// Picks the selected coordinates out of a full vector.
    pub fn project(&self, values: &[f64]) -> Result<Vec<f64>> {
        self.indices
            .iter()
            .map(|&i| {
                values.get(i).copied().ok_or_else(|| {
                    Error::Dimension(format!(
                        "vector of length {} lacks feature {i}",
                        values.len()
                    ))
                })
            })
            .collect()
    }

    /// Text form: a `# merit <value>` header then one index per line.
    pub fn write<W: Write>(&self, mut out: W) -> Result<()> {
        let mut text = format!("# merit {}\n", self.merit);
        for i in &self.indices {
            text.push_str(&format!("{i}\n"));
        }
        out.write_all(text.as_bytes())
            .map_err(|e| Error::io("<subset>", e))
    }

    pub fn read<R: BufRead>(input: R) -> Result<Self> {
        let mut lines = input.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::Format("empty subset file".into()))?
            .map_err(|e| Error::io("<subset>", e))?;
        let merit = header
            .strip_prefix("# merit ")
            .and_then(|m| m.trim().parse::<f64>().ok())
            .ok_or_else(|| Error::Format(format!("bad subset header {header:?}")))?;
        let mut indices = Vec::new();
        for line in lines {
            let line = line.map_err(|e| Error::io("<subset>", e))?;
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            indices.push(
                line.parse()
                    .map_err(|_| Error::Format(format!("bad feature index {line:?}")))?,
            );
        }
        FeatureSubset::new(indices, merit, usize::MAX)
    }
}

/// Scores candidate subsets for the search.
pub trait SubsetEvaluator: Sync {
    fn n_features(&self) -> usize;
    /// Merit of a sorted, duplicate-free index set; the empty set scores 0.
    fn merit(&self, indices: &[usize]) -> f64;
}

/// Pearson correlation; 0 when either side has zero variance.
pub fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    if a.is_empty() {
        return 0.0;
    }
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (&x, &y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if saa <= 0.0 || sbb <= 0.0 {
        0.0
    } else {
        (sab / (saa * sbb).sqrt()).clamp(-1.0, 1.0)
    }
}

fn labeled_codes(dataset: &[FeatureVector]) -> Result<Vec<f64>> {
    let codes = dataset
        .iter()
        .map(|row| {
            row.label.map(|l| l.code() as f64).ok_or_else(|| {
                Error::DegenerateData(format!(
                    "window {}:{} has no label",
                    row.sequence_id, row.start_index
                ))
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let distinct: BTreeSet<u64> = codes.iter().map(|c| c.to_bits()).collect();
    if distinct.len() < 2 {
        return Err(Error::DegenerateData(
            "feature selection needs at least two classes".into(),
        ));
    }
    Ok(codes)
}

fn feature_width(dataset: &[FeatureVector]) -> Result<usize> {
    let n = dataset.first().map_or(0, FeatureVector::len);
    if dataset.iter().any(|r| r.len() != n) {
        return Err(Error::Dimension("feature vectors differ in length".into()));
    }
    Ok(n)
}

/// How the class enters the feature-class correlation.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum ClassEncoding {
    /// Pearson correlation with the class code.
    IntegerCode,
    /// Prior-weighted mean of the absolute correlations with each class's
    /// 0/1 indicator. Treats the classes as unordered.
    #[default]
    Indicator,
}

impl ClassEncoding {
    pub fn name(self) -> &'static str {
        match self {
            ClassEncoding::IntegerCode => "integer",
            ClassEncoding::Indicator => "indicator",
        }
    }
}

impl std::str::FromStr for ClassEncoding {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "integer" | "integer-code" => Ok(ClassEncoding::IntegerCode),
            "indicator" => Ok(ClassEncoding::Indicator),
            _ => Err(Error::InvalidParameter(format!(
                "unknown class encoding {s:?} (integer, indicator)"
            ))),
        }
    }
}

fn class_correlation(column: &[f64], codes: &[f64], encoding: ClassEncoding) -> f64 {
    match encoding {
        ClassEncoding::IntegerCode => pearson(column, codes).abs(),
        ClassEncoding::Indicator => {
            let mut classes: Vec<u64> = codes.iter().map(|c| c.to_bits()).collect();
            classes.sort_unstable();
            classes.dedup();
            let n = codes.len() as f64;
            classes
                .iter()
                .map(|&bits| {
                    let ind: Vec<f64> = codes.iter().map(|c| (c.to_bits() == bits) as u8 as f64).collect();
                    let prior = ind.iter().sum::<f64>() / n;
                    prior * pearson(column, &ind).abs()
                })
                .sum()
        }
    }
}

/// Correlation-based merit with all correlations precomputed.
pub struct CfsEvaluator {
    n_features: usize,
    class_corr: Vec<f64>,
    /// `|r_ff|`, row-major `n_features x n_features`.
    feature_corr: Vec<f64>,
}

impl CfsEvaluator {
    pub fn new(dataset: &[FeatureVector], encoding: ClassEncoding) -> Result<Self> {
        if dataset.is_empty() {
            return Err(Error::DegenerateData("empty dataset".into()));
        }
        let codes = labeled_codes(dataset)?;
        let n = feature_width(dataset)?;
        let columns: Vec<Vec<f64>> = (0..n)
            .map(|j| dataset.iter().map(|r| r.values[j]).collect())
            .collect();
        let class_corr = columns
            .iter()
            .map(|c| class_correlation(c, &codes, encoding))
            .collect();
        let feature_corr: Vec<f64> = (0..n * n)
            .into_par_iter()
            .map(|idx| {
                let (i, j) = (idx / n, idx % n);
                if i == j {
                    1.0
                } else {
                    pearson(&columns[i.min(j)], &columns[i.max(j)]).abs()
                }
            })
            .collect();
        Ok(CfsEvaluator {
            n_features: n,
            class_corr,
            feature_corr,
        })
    }

    pub fn class_correlation(&self, feature: usize) -> f64 {
        self.class_corr[feature]
    }
}

impl SubsetEvaluator for CfsEvaluator {
    fn n_features(&self) -> usize {
        self.n_features
    }

    fn merit(&self, indices: &[usize]) -> f64 {
        if indices.is_empty() {
            return 0.0;
        }
        let k = indices.len() as f64;
        let rcf: f64 = indices.iter().map(|&i| self.class_corr[i]).sum();
        let mut rff = 0.0;
        for (a, &i) in indices.iter().enumerate() {
            for &j in &indices[a + 1..] {
                rff += self.feature_corr[i * self.n_features + j];
            }
        }
        let denom = (k + 2.0 * rff).sqrt();
        if denom > 0.0 {
            rcf / denom
        } else {
            0.0
        }
    }
}

/// CFS merit of an arbitrary subset; the empty subset scores 0.
pub fn cfs_merit(subset: &[usize], dataset: &[FeatureVector], encoding: ClassEncoding) -> Result<f64> {
    let eval = CfsEvaluator::new(dataset, encoding)?;
    let mut sorted = subset.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    if let Some(&bad) = sorted.iter().find(|&&i| i >= eval.n_features) {
        return Err(Error::InvalidParameter(format!("feature index {bad} out of range")));
    }
    Ok(eval.merit(&sorted))
}

/// Scores a subset by mean k-fold accuracy of an RBF-SVM trained on it.
pub struct WrapperEvaluator<'a> {
    dataset: &'a [FeatureVector],
    folds: Vec<Vec<usize>>,
    c: f64,
    n_features: usize,
}

impl<'a> WrapperEvaluator<'a> {
    pub fn new(dataset: &'a [FeatureVector], folds: usize, c: f64, seed: u64) -> Result<Self> {
        labeled_codes(dataset)?;
        let n_features = feature_width(dataset)?;
        let folds = kfold(dataset, folds, seed)?;
        Ok(WrapperEvaluator {
            dataset,
            folds,
            c,
            n_features,
        })
    }
}

impl SubsetEvaluator for WrapperEvaluator<'_> {
    fn n_features(&self) -> usize {
        self.n_features
    }

    fn merit(&self, indices: &[usize]) -> f64 {
        if indices.is_empty() {
            return 0.0;
        }
        let subset = FeatureSubset {
            indices: indices.to_vec(),
            merit: f64::NAN,
        };
        let params = match KernelParams::new(1.0 / indices.len() as f64, self.c) {
            Ok(p) => p,
            Err(_) => return 0.0,
        };
        let mut total = 0.0;
        for test in &self.folds {
            let held: HashSet<usize> = test.iter().copied().collect();
            let train: Vec<FeatureVector> = (0..self.dataset.len())
                .filter(|i| !held.contains(i))
                .map(|i| self.dataset[i].clone())
                .collect();
            let Ok(model) = SvmModel::train(&train, &subset, params) else {
                continue;
            };
            let correct = test
                .iter()
                .filter(|&&i| {
                    model.predict_features(&self.dataset[i]).ok() == self.dataset[i].label
                })
                .count();
            total += correct as f64 / test.len() as f64;
        }
        total / self.folds.len() as f64
    }
}

#[derive(Clone, Debug)]
struct Node {
    merit: f64,
    indices: Vec<usize>,
}

/// Higher merit first, then the lexicographically smaller index list.
fn rank(a: &Node, b: &Node) -> Ordering {
    b.merit
        .partial_cmp(&a.merit)
        .unwrap_or(Ordering::Equal)
        .then_with(|| a.indices.cmp(&b.indices))
}

/// Best-first forward search from the empty set.
///
/// The node with the highest merit is expanded by every single-feature
/// addition. Search stops after `max_stale` consecutive expansions that fail
/// to improve on the best subset seen so far, or when the open list empties.
pub fn best_first<E: SubsetEvaluator>(evaluator: &E, max_stale: usize) -> FeatureSubset {
    let n = evaluator.n_features();
    let mut open: Vec<Node> = vec![Node {
        merit: 0.0,
        indices: Vec::new(),
    }];
    let mut visited: HashSet<Vec<usize>> = HashSet::new();
    visited.insert(Vec::new());
    let mut best = open[0].clone();
    let mut stale = 0;

    while !open.is_empty() {
        // open is kept sorted best-first
        let node = open.remove(0);
        let candidates: Vec<Vec<usize>> = (0..n)
            .filter(|f| node.indices.binary_search(f).is_err())
            .map(|f| {
                let mut c = node.indices.clone();
                let pos = c.binary_search(&f).unwrap_err();
                c.insert(pos, f);
                c
            })
            .filter(|c| visited.insert(c.clone()))
            .collect();
        let children: Vec<Node> = candidates
            .into_par_iter()
            .map(|indices| Node {
                merit: evaluator.merit(&indices),
                indices,
            })
            .collect();

        let mut improved = false;
        if let Some(top) = children.iter().min_by(|a, b| rank(a, b)) {
            if top.merit > best.merit + MERIT_EPS {
                best = top.clone();
                improved = true;
            }
        }
        open.extend(children);
        open.sort_by(rank);

        if improved {
            stale = 0;
        } else {
            stale += 1;
            if stale >= max_stale {
                break;
            }
        }
    }
    FeatureSubset {
        indices: best.indices,
        merit: best.merit,
    }
}

/// CFS-scored best-first selection over a labeled dataset.
pub fn best_first_select(
    dataset: &[FeatureVector],
    max_stale: usize,
    encoding: ClassEncoding,
) -> Result<FeatureSubset> {
    if dataset.is_empty() {
        return Err(Error::DegenerateData("empty dataset".into()));
    }
    Ok(best_first(&CfsEvaluator::new(dataset, encoding)?, max_stale))
}
