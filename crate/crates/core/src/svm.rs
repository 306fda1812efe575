//! Soft-margin RBF support vector machines trained by sequential minimal
//! optimization, composed one-vs-one for multi-class prediction.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::io::{BufRead, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::eval::kfold;
use crate::gridfeat::FeatureVector;
use crate::label::Emotion;
use crate::select::FeatureSubset;

const MODEL_MAGIC: &str = "crowdgrid-svm";
const MODEL_VERSION: u32 = 1;

/// RBF width and soft-margin penalty.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KernelParams {
    gamma: f64,
    c: f64,
}

impl KernelParams {
    pub const DEFAULT_C: f64 = 0.4;

    pub fn new(gamma: f64, c: f64) -> Result<Self> {
        if !(gamma > 0.0 && gamma.is_finite()) {
            return Err(Error::InvalidParameter(format!("gamma {gamma} must be positive")));
        }
        if !(c > 0.0 && c.is_finite()) {
            return Err(Error::InvalidParameter(format!("C {c} must be positive")));
        }
        Ok(KernelParams { gamma, c })
    }

    /// `gamma = 1 / n_features`.
    pub fn scaled(n_features: usize, c: f64) -> Result<Self> {
        KernelParams::new(1.0 / n_features.max(1) as f64, c)
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn c(&self) -> f64 {
        self.c
    }
}

#[inline]
fn rbf_unchecked(x: &[f64], y: &[f64], gamma: f64) -> f64 {
    let d2: f64 = x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum();
    (-gamma * d2).exp()
}

/// `exp(-gamma * |x - y|^2)`.
pub fn rbf(x: &[f64], y: &[f64], gamma: f64) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::Dimension(format!(
            "rbf of {}- and {}-dimensional vectors",
            x.len(),
            y.len()
        )));
    }
    if !(gamma > 0.0) {
        return Err(Error::InvalidParameter(format!("gamma {gamma} must be positive")));
    }
    Ok(rbf_unchecked(x, y, gamma))
}

/// Solver settings.
#[derive(Clone, Copy, Debug)]
pub struct SmoConfig {
    /// KKT violation tolerance.
    pub tol: f64,
    /// Consecutive full sweeps without any multiplier change before stopping.
    pub max_passes: usize,
    /// Seeds the random start of the second-choice fallback loops.
    pub seed: u64,
    /// Upper bound on successful pair updates.
    pub max_updates: usize,
}

impl Default for SmoConfig {
    fn default() -> Self {
        SmoConfig {
            tol: 1e-3,
            max_passes: 10,
            seed: 0,
            max_updates: 1_000_000,
        }
    }
}

/// Multipliers and bias of a solved dual, plus the solver trace.
#[derive(Clone, Debug)]
pub struct SmoSolution {
    pub alphas: Vec<f64>,
    pub bias: f64,
    /// Dual objective after every successful pair update, starting at 0.
    pub objective_history: Vec<f64>,
    pub updates: usize,
}

/// Pins multipliers within round-off of a bound onto the bound.
fn snap(a: f64, c: f64) -> f64 {
    if a < 1e-12 * c {
        0.0
    } else if a > c * (1.0 - 1e-12) {
        c
    } else {
        a
    }
}

struct Smo<'a> {
    y: &'a [f64],
    kernel: Vec<f64>,
    n: usize,
    c: f64,
    tol: f64,
    alphas: Vec<f64>,
    bias: f64,
    errors: Vec<f64>,
    objective: f64,
    history: Vec<f64>,
    rng: ChaCha8Rng,
}

impl Smo<'_> {
    #[inline]
    fn k(&self, i: usize, j: usize) -> f64 {
        self.kernel[i * self.n + j]
    }

    fn is_free(&self, i: usize) -> bool {
        self.alphas[i] > 0.0 && self.alphas[i] < self.c
    }

    fn take_step(&mut self, i1: usize, i2: usize) -> bool {
        if i1 == i2 {
            return false;
        }
        let (a1, a2) = (self.alphas[i1], self.alphas[i2]);
        let (y1, y2) = (self.y[i1], self.y[i2]);
        let (e1, e2) = (self.errors[i1], self.errors[i2]);
        let s = y1 * y2;
        let c = self.c;
        let (lo, hi) = if y1 != y2 {
            ((a2 - a1).max(0.0), (c + a2 - a1).min(c))
        } else {
            ((a2 + a1 - c).max(0.0), (a2 + a1).min(c))
        };
        if hi - lo <= 0.0 {
            return false;
        }
        let (k11, k12, k22) = (self.k(i1, i1), self.k(i1, i2), self.k(i2, i2));
        let eta = k11 + k22 - 2.0 * k12;
        // objective gain as a function of the step in alpha2
        let gain = |d2: f64| y2 * (e1 - e2) * d2 - 0.5 * eta * d2 * d2;

        let mut a2_new = if eta > 1e-12 {
            (a2 + y2 * (e1 - e2) / eta).clamp(lo, hi)
        } else {
            let (g_lo, g_hi) = (gain(lo - a2), gain(hi - a2));
            if g_lo > g_hi + 1e-12 {
                lo
            } else if g_hi > g_lo + 1e-12 {
                hi
            } else {
                a2
            }
        };
        a2_new = snap(a2_new, c);
        let d2 = a2_new - a2;
        if d2.abs() < 1e-12 * (a2_new + a2 + 1e-12) {
            return false;
        }
        let step_gain = gain(d2);
        if step_gain < 0.0 {
            return false;
        }
        let a1_new = snap((a1 - s * d2).clamp(0.0, c), c);
        let d1 = a1_new - a1;

        let b1 = self.bias - e1 - y1 * d1 * k11 - y2 * d2 * k12;
        let b2 = self.bias - e2 - y1 * d1 * k12 - y2 * d2 * k22;
        let b_new = if a1_new > 0.0 && a1_new < c {
            b1
        } else if a2_new > 0.0 && a2_new < c {
            b2
        } else {
            0.5 * (b1 + b2)
        };
        let db = b_new - self.bias;
        for i in 0..self.n {
            self.errors[i] += y1 * d1 * self.k(i, i1) + y2 * d2 * self.k(i, i2) + db;
        }
        self.alphas[i1] = a1_new;
        self.alphas[i2] = a2_new;
        self.bias = b_new;
        self.objective += step_gain;
        self.history.push(self.objective);
        true
    }

    fn violates(&self, i: usize) -> bool {
        let r = self.errors[i] * self.y[i];
        (r < -self.tol && self.alphas[i] < self.c) || (r > self.tol && self.alphas[i] > 0.0)
    }

    fn examine(&mut self, i2: usize) -> bool {
        if !self.violates(i2) {
            return false;
        }
        let e2 = self.errors[i2];
        let free: Vec<usize> = (0..self.n).filter(|&i| self.is_free(i)).collect();
        if free.len() > 1 {
            let best = free
                .iter()
                .copied()
                .filter(|&i| i != i2)
                .max_by(|&a, &b| {
                    (self.errors[a] - e2)
                        .abs()
                        .partial_cmp(&(self.errors[b] - e2).abs())
                        .unwrap()
                        .then(b.cmp(&a))
                });
            if let Some(i1) = best {
                if self.take_step(i1, i2) {
                    return true;
                }
            }
        }
        if !free.is_empty() {
            let start = self.rng.random_range(0..free.len());
            for k in 0..free.len() {
                if self.take_step(free[(start + k) % free.len()], i2) {
                    return true;
                }
            }
        }
        let start = self.rng.random_range(0..self.n);
        for k in 0..self.n {
            let i1 = (start + k) % self.n;
            if self.take_step(i1, i2) {
                return true;
            }
        }
        false
    }

    /// Bias from the KKT conditions: mean over free multipliers, or the
    /// midpoint of the feasible interval when every multiplier is at a bound.
    fn refit_bias(&mut self) {
        let g: Vec<f64> = (0..self.n)
            .map(|i| self.errors[i] + self.y[i] - self.bias)
            .collect();
        let free: Vec<usize> = (0..self.n).filter(|&i| self.is_free(i)).collect();
        let b = if !free.is_empty() {
            free.iter().map(|&i| self.y[i] - g[i]).sum::<f64>() / free.len() as f64
        } else {
            let (mut lo, mut hi) = (f64::NEG_INFINITY, f64::INFINITY);
            for i in 0..self.n {
                let target = self.y[i] - g[i];
                // y f >= 1 at alpha = 0 and y f <= 1 at alpha = C bound b from one side
                let lower_side = (self.alphas[i] == 0.0) == (self.y[i] > 0.0);
                if lower_side {
                    lo = lo.max(target);
                } else {
                    hi = hi.min(target);
                }
            }
            match (lo.is_finite(), hi.is_finite()) {
                (true, true) => 0.5 * (lo + hi),
                (true, false) => lo,
                (false, true) => hi,
                (false, false) => self.bias,
            }
        };
        let db = b - self.bias;
        self.errors.iter_mut().for_each(|e| *e += db);
        self.bias = b;
    }
}

/// Solves the soft-margin dual for labels in `{-1, +1}`.
pub fn smo_train(
    xs: &[Vec<f64>],
    ys: &[f64],
    params: KernelParams,
    config: &SmoConfig,
) -> Result<SmoSolution> {
    if xs.len() != ys.len() {
        return Err(Error::Dimension(format!(
            "{} vectors but {} labels",
            xs.len(),
            ys.len()
        )));
    }
    if let Some(y) = ys.iter().find(|&&y| y != 1.0 && y != -1.0) {
        return Err(Error::InvalidParameter(format!("binary label {y} not in {{-1, +1}}")));
    }
    if !(ys.contains(&1.0) && ys.contains(&-1.0)) {
        return Err(Error::DegenerateData("binary training needs both labels".into()));
    }
    let dim = xs[0].len();
    if xs.iter().any(|x| x.len() != dim) {
        return Err(Error::Dimension("training vectors differ in length".into()));
    }
    if xs.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("non-finite feature value".into()));
    }
    let n = xs.len();
    let kernel: Vec<f64> = (0..n * n)
        .map(|idx| rbf_unchecked(&xs[idx / n], &xs[idx % n], params.gamma))
        .collect();
    let mut smo = Smo {
        y: ys,
        kernel,
        n,
        c: params.c,
        tol: config.tol,
        alphas: vec![0.0; n],
        bias: 0.0,
        errors: ys.iter().map(|y| -y).collect(),
        objective: 0.0,
        history: vec![0.0],
        rng: ChaCha8Rng::seed_from_u64(config.seed),
    };

    let mut examine_all = true;
    let mut clean_passes = 0;
    let mut updates = 0;
    while updates < config.max_updates {
        let candidates: Vec<usize> = if examine_all {
            (0..n).collect()
        } else {
            (0..n).filter(|&i| smo.is_free(i)).collect()
        };
        let mut changed = 0;
        for i in candidates {
            if smo.examine(i) {
                changed += 1;
                updates += 1;
            }
        }
        if examine_all {
            if changed == 0 {
                clean_passes += 1;
                if clean_passes >= config.max_passes.max(1) {
                    break;
                }
            } else {
                clean_passes = 0;
                examine_all = false;
            }
        } else if changed == 0 {
            examine_all = true;
        }
    }
    if updates >= config.max_updates {
        log::warn!("SMO stopped after {updates} updates without converging");
    }
    smo.refit_bias();
    Ok(SmoSolution {
        alphas: smo.alphas,
        bias: smo.bias,
        objective_history: smo.history,
        updates,
    })
}

/// Dual objective `sum(a) - 1/2 sum_ij a_i a_j y_i y_j K_ij`.
pub fn dual_objective(xs: &[Vec<f64>], ys: &[f64], alphas: &[f64], gamma: f64) -> f64 {
    let n = xs.len();
    let mut quad = 0.0;
    for i in 0..n {
        if alphas[i] == 0.0 {
            continue;
        }
        for j in 0..n {
            quad += alphas[i] * alphas[j] * ys[i] * ys[j] * rbf_unchecked(&xs[i], &xs[j], gamma);
        }
    }
    alphas.iter().sum::<f64>() - 0.5 * quad
}

/// One trained pairwise classifier. Positive decisions vote for `class_pair.0`.
#[derive(Clone, Debug, PartialEq)]
pub struct BinaryMachine {
    pub support_vectors: Vec<Vec<f64>>,
    /// `alpha_i * y_i` per support vector.
    pub dual_coefs: Vec<f64>,
    pub bias: f64,
    pub params: KernelParams,
    pub class_pair: (Emotion, Emotion),
}

impl BinaryMachine {
    pub fn from_solution(
        xs: &[Vec<f64>],
        ys: &[f64],
        solution: &SmoSolution,
        params: KernelParams,
        class_pair: (Emotion, Emotion),
    ) -> Self {
        let (support_vectors, dual_coefs) = solution
            .alphas
            .iter()
            .enumerate()
            .filter(|(_, &a)| a > 0.0)
            .map(|(i, &a)| (xs[i].clone(), a * ys[i]))
            .unzip();
        BinaryMachine {
            support_vectors,
            dual_coefs,
            bias: solution.bias,
            params,
            class_pair,
        }
    }

    /// `sum_i coef_i K(sv_i, x) + bias`.
    pub fn decision(&self, x: &[f64]) -> f64 {
        self.support_vectors
            .iter()
            .zip(&self.dual_coefs)
            .map(|(sv, coef)| coef * rbf_unchecked(sv, x, self.params.gamma))
            .sum::<f64>()
            + self.bias
    }

    pub fn vote(&self, x: &[f64]) -> (Emotion, f64) {
        let f = self.decision(x);
        if f >= 0.0 {
            (self.class_pair.0, f)
        } else {
            (self.class_pair.1, f)
        }
    }
}

/// Per-feature standardization fitted on training data.
#[derive(Clone, Debug, PartialEq)]
pub struct Scaler {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Scaler {
    pub fn fit(xs: &[Vec<f64>]) -> Self {
        let dim = xs.first().map_or(0, Vec::len);
        let n = xs.len().max(1) as f64;
        let mean: Vec<f64> = (0..dim)
            .map(|j| xs.iter().map(|x| x[j]).sum::<f64>() / n)
            .collect();
        let std = (0..dim)
            .map(|j| {
                let var = xs.iter().map(|x| (x[j] - mean[j]).powi(2)).sum::<f64>() / n;
                if var > 0.0 {
                    var.sqrt()
                } else {
                    1.0
                }
            })
            .collect();
        Scaler { mean, std }
    }

    pub fn transform(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(self.mean.iter().zip(&self.std))
            .map(|(v, (m, s))| (v - m) / s)
            .collect()
    }
}

/// One-vs-one multi-class model.
#[derive(Clone, Debug, PartialEq)]
pub struct SvmModel {
    pub classes: Vec<Emotion>,
    pub machines: Vec<BinaryMachine>,
    pub params: KernelParams,
    pub feature_subset: FeatureSubset,
    pub scaler: Scaler,
}

/// Trains one machine per pair of present classes on standardized inputs.
/// `xs` are already restricted to the features the model will use.
pub fn ovo_train(
    xs: &[Vec<f64>],
    ys: &[Emotion],
    params: KernelParams,
    config: &SmoConfig,
) -> Result<SvmModel> {
    if xs.len() != ys.len() {
        return Err(Error::Dimension(format!(
            "{} vectors but {} labels",
            xs.len(),
            ys.len()
        )));
    }
    let present: HashSet<Emotion> = ys.iter().copied().collect();
    let classes: Vec<Emotion> = Emotion::ALL
        .iter()
        .copied()
        .filter(|e| present.contains(e))
        .collect();
    if classes.len() < 2 {
        return Err(Error::DegenerateData(format!(
            "multi-class training needs two classes, found {}",
            classes.len()
        )));
    }
    for missing in Emotion::ALL.iter().filter(|e| !present.contains(e)) {
        log::warn!("class {missing} has no training samples; excluded from the model");
    }
    let dim = xs[0].len();
    if xs.iter().any(|x| x.len() != dim) {
        return Err(Error::Dimension("training vectors differ in length".into()));
    }
    let scaler = Scaler::fit(xs);
    let scaled: Vec<Vec<f64>> = xs.iter().map(|x| scaler.transform(x)).collect();

    let pairs: Vec<(Emotion, Emotion)> = classes
        .iter()
        .enumerate()
        .flat_map(|(i, &a)| classes[i + 1..].iter().map(move |&b| (a, b)))
        .collect();
    let machines = pairs
        .par_iter()
        .map(|&(a, b)| {
            let (px, py): (Vec<Vec<f64>>, Vec<f64>) = scaled
                .iter()
                .zip(ys)
                .filter(|(_, &y)| y == a || y == b)
                .map(|(x, &y)| (x.clone(), if y == a { 1.0 } else { -1.0 }))
                .unzip();
            let solution = smo_train(&px, &py, params, config)?;
            Ok(BinaryMachine::from_solution(&px, &py, &solution, params, (a, b)))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SvmModel {
        classes,
        machines,
        params,
        feature_subset: FeatureSubset::all(dim),
        scaler,
    })
}

impl SvmModel {
    /// Projects labeled feature vectors onto `subset` and trains.
    pub fn train(rows: &[FeatureVector], subset: &FeatureSubset, params: KernelParams) -> Result<Self> {
        Self::train_with(rows, subset, params, &SmoConfig::default())
    }

    pub fn train_with(
        rows: &[FeatureVector],
        subset: &FeatureSubset,
        params: KernelParams,
        config: &SmoConfig,
    ) -> Result<Self> {
        if subset.is_empty() {
            return Err(Error::InvalidParameter("empty feature subset".into()));
        }
        let mut xs = Vec::with_capacity(rows.len());
        let mut ys = Vec::with_capacity(rows.len());
        for row in rows {
            let label = row.label.ok_or_else(|| {
                Error::DegenerateData(format!(
                    "window {}:{} has no label",
                    row.sequence_id, row.start_index
                ))
            })?;
            xs.push(subset.project(&row.values)?);
            ys.push(label);
        }
        let mut model = ovo_train(&xs, &ys, params, config)?;
        model.feature_subset = subset.clone();
        Ok(model)
    }

    pub fn n_features(&self) -> usize {
        self.scaler.mean.len()
    }

    /// Predicts from a vector already restricted to the model's features.
    pub fn predict(&self, x: &[f64]) -> Result<Emotion> {
        if x.len() != self.n_features() {
            return Err(Error::Dimension(format!(
                "model expects {} features, got {}",
                self.n_features(),
                x.len()
            )));
        }
        let z = self.scaler.transform(x);
        let mut votes = [0usize; Emotion::COUNT];
        let mut strength = [0.0f64; Emotion::COUNT];
        for m in &self.machines {
            let (winner, f) = m.vote(&z);
            votes[winner.code()] += 1;
            strength[winner.code()] += f.abs();
        }
        let top = *votes.iter().max().expect("seven classes");
        let winner = self
            .classes
            .iter()
            .copied()
            .filter(|e| votes[e.code()] == top)
            .max_by(|a, b| {
                strength[a.code()]
                    .partial_cmp(&strength[b.code()])
                    .unwrap_or(std::cmp::Ordering::Equal)
                    .then(b.tie_break_rank().cmp(&a.tie_break_rank()))
            })
            .expect("at least two classes");
        Ok(winner)
    }

    /// Predicts from a full-length feature vector.
    pub fn predict_features(&self, row: &FeatureVector) -> Result<Emotion> {
        self.predict(&self.feature_subset.project(&row.values)?)
    }

    pub fn write<W: Write>(&self, mut out: W) -> Result<()> {
        let mut s = String::new();
        let join = |v: &[f64]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(" ");
        writeln!(s, "{MODEL_MAGIC} {MODEL_VERSION}").unwrap();
        let names: Vec<&str> = self.classes.iter().map(|c| c.name()).collect();
        writeln!(s, "classes {}", names.join(" ")).unwrap();
        writeln!(s, "gamma {}", self.params.gamma).unwrap();
        writeln!(s, "c {}", self.params.c).unwrap();
        writeln!(s, "merit {}", self.feature_subset.merit).unwrap();
        let idx: Vec<String> = self.feature_subset.indices.iter().map(|i| i.to_string()).collect();
        writeln!(s, "subset {} {}", idx.len(), idx.join(" ")).unwrap();
        writeln!(s, "mean {}", join(&self.scaler.mean)).unwrap();
        writeln!(s, "std {}", join(&self.scaler.std)).unwrap();
        writeln!(s, "machines {}", self.machines.len()).unwrap();
        for m in &self.machines {
            writeln!(
                s,
                "machine {} {} {} {}",
                m.class_pair.0,
                m.class_pair.1,
                m.bias,
                m.support_vectors.len()
            )
            .unwrap();
            for (sv, coef) in m.support_vectors.iter().zip(&m.dual_coefs) {
                writeln!(s, "sv {coef} {}", join(sv)).unwrap();
            }
        }
        out.write_all(s.as_bytes()).map_err(|e| Error::io("<model>", e))
    }

    pub fn read<R: BufRead>(input: R) -> Result<Self> {
        let lines: Vec<String> = input
            .lines()
            .collect::<std::io::Result<_>>()
            .map_err(|e| Error::io("<model>", e))?;
        let mut it = lines.iter().map(|l| l.trim()).filter(|l| !l.is_empty());
        let mut next = |key: &str| -> Result<Vec<String>> {
            let line = it
                .next()
                .ok_or_else(|| Error::Format(format!("model ends before {key:?}")))?;
            let mut parts = line.split_whitespace();
            if parts.next() != Some(key) {
                return Err(Error::Format(format!("expected {key:?}, found {line:?}")));
            }
            Ok(parts.map(str::to_string).collect())
        };
        let floats = |v: &[String]| -> Result<Vec<f64>> {
            v.iter()
                .map(|s| {
                    s.parse::<f64>()
                        .map_err(|_| Error::Format(format!("bad number {s:?} in model")))
                })
                .collect()
        };
        let one = |v: Vec<String>| -> Result<f64> {
            let f = floats(&v)?;
            if f.len() != 1 {
                return Err(Error::Format("expected a single value".into()));
            }
            Ok(f[0])
        };

        let header = next(MODEL_MAGIC)?;
        if header != [MODEL_VERSION.to_string()] {
            return Err(Error::Format(format!("unsupported model version {header:?}")));
        }
        let classes = next("classes")?
            .iter()
            .map(|c| c.parse())
            .collect::<Result<Vec<Emotion>>>()?;
        let params = KernelParams::new(one(next("gamma")?)?, one(next("c")?)?)?;
        let merit = one(next("merit")?)?;
        let subset_line = next("subset")?;
        let k: usize = subset_line
            .first()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::Format("bad subset line".into()))?;
        let indices = subset_line[1..]
            .iter()
            .map(|s| s.parse().map_err(|_| Error::Format("bad subset index".into())))
            .collect::<Result<Vec<usize>>>()?;
        if indices.len() != k {
            return Err(Error::Format("subset count mismatch".into()));
        }
        let feature_subset = FeatureSubset::new(indices, merit, usize::MAX)?;
        let mean = floats(&next("mean")?)?;
        let std = floats(&next("std")?)?;
        if mean.len() != k || std.len() != k {
            return Err(Error::Format("scaler length does not match subset".into()));
        }
        let n_machines = one(next("machines")?)? as usize;
        let mut machines = Vec::with_capacity(n_machines);
        for _ in 0..n_machines {
            let head = next("machine")?;
            if head.len() != 4 {
                return Err(Error::Format("bad machine header".into()));
            }
            let pair = (head[0].parse()?, head[1].parse()?);
            let bias = floats(&head[2..3])?[0];
            let n_sv: usize = head[3]
                .parse()
                .map_err(|_| Error::Format("bad support vector count".into()))?;
            let mut support_vectors = Vec::with_capacity(n_sv);
            let mut dual_coefs = Vec::with_capacity(n_sv);
            for _ in 0..n_sv {
                let vals = floats(&next("sv")?)?;
                if vals.len() != k + 1 {
                    return Err(Error::Format("support vector length mismatch".into()));
                }
                dual_coefs.push(vals[0]);
                support_vectors.push(vals[1..].to_vec());
            }
            machines.push(BinaryMachine {
                support_vectors,
                dual_coefs,
                bias,
                params,
                class_pair: pair,
            });
        }
        Ok(SvmModel {
            classes,
            machines,
            params,
            feature_subset,
            scaler: Scaler { mean, std },
        })
    }
}

/// Outcome of the penalty search.
#[derive(Clone, Debug, PartialEq)]
pub struct CSearch {
    pub best_c: f64,
    /// `(c, mean fold accuracy)` in ascending `c`.
    pub scores: Vec<(f64, f64)>,
}

/// Picks the penalty with the best mean k-fold accuracy on `train`;
/// ties go to the smaller value. `gamma = None` uses `1 / |subset|`.
pub fn grid_search_c(
    train: &[FeatureVector],
    subset: &FeatureSubset,
    candidates: &[f64],
    folds: usize,
    gamma: Option<f64>,
    seed: u64,
) -> Result<CSearch> {
    if candidates.is_empty() {
        return Err(Error::InvalidParameter("no candidate penalties".into()));
    }
    let mut sorted = candidates.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    sorted.dedup();
    if sorted.len() == 1 {
        KernelParams::new(gamma.unwrap_or(1.0), sorted[0])?;
        return Ok(CSearch {
            best_c: sorted[0],
            scores: vec![(sorted[0], f64::NAN)],
        });
    }
    let fold_sets = kfold(train, folds, seed)?;
    let gamma = gamma.unwrap_or(1.0 / subset.len().max(1) as f64);
    let mut scores = Vec::with_capacity(sorted.len());
    for &c in &sorted {
        let params = KernelParams::new(gamma, c)?;
        let mut acc = 0.0;
        for test in &fold_sets {
            let held: HashSet<usize> = test.iter().copied().collect();
            let fit: Vec<FeatureVector> = train
                .iter()
                .enumerate()
                .filter(|(i, _)| !held.contains(i))
                .map(|(_, r)| r.clone())
                .collect();
            let model = SvmModel::train(&fit, subset, params)?;
            let correct = test
                .iter()
                .filter(|&&i| model.predict_features(&train[i]).ok() == train[i].label)
                .count();
            acc += correct as f64 / test.len() as f64;
        }
        scores.push((c, acc / fold_sets.len() as f64));
    }
    let mut best = scores[0];
    for &(c, a) in &scores[1..] {
        if a > best.1 + 1e-12 {
            best = (c, a);
        }
    }
    Ok(CSearch {
        best_c: best.0,
        scores,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand_distr::{Distribution, Normal};

    fn xor() -> (Vec<Vec<f64>>, Vec<f64>) {
        (
            vec![vec![0.0, 0.0], vec![1.0, 1.0], vec![0.0, 1.0], vec![1.0, 0.0]],
            vec![-1.0, -1.0, 1.0, 1.0],
        )
    }

    fn check_kkt(xs: &[Vec<f64>], ys: &[f64], sol: &SmoSolution, params: KernelParams, tol: f64) {
        let c = params.c();
        let eq: f64 = sol.alphas.iter().zip(ys).map(|(a, y)| a * y).sum();
        assert!(eq.abs() <= 1e-3, "sum a y = {eq}");
        for (i, &a) in sol.alphas.iter().enumerate() {
            assert!((0.0..=c).contains(&a), "alpha {a} outside [0, {c}]");
            if a > 0.0 && a < c {
                let f: f64 = (0..xs.len())
                    .map(|j| sol.alphas[j] * ys[j] * rbf_unchecked(&xs[j], &xs[i], params.gamma()))
                    .sum::<f64>()
                    + sol.bias;
                assert!((ys[i] * f - 1.0).abs() <= 10.0 * tol, "KKT residual {}", ys[i] * f - 1.0);
            }
        }
    }

    #[test]
    fn rbf_values() {
        let x = [0.3, -1.2, 4.0];
        assert_eq!(rbf(&x, &x, 0.7).unwrap(), 1.0);
        let v = rbf(&[0.0], &[1.0], 1.0).unwrap();
        assert!((v - 0.367879).abs() < 1e-6);
        assert!(rbf(&[0.0], &[1.0], 2.0).unwrap() < v);
        assert!(matches!(rbf(&[0.0], &[1.0, 2.0], 1.0), Err(Error::Dimension(_))));
    }

    #[test]
    fn separable_pair() {
        let xs = vec![vec![0.0], vec![1.0]];
        let ys = vec![-1.0, 1.0];
        let params = KernelParams::new(1.0, 100.0).unwrap();
        let sol = smo_train(&xs, &ys, params, &SmoConfig::default()).unwrap();
        let m = BinaryMachine::from_solution(&xs, &ys, &sol, params, (Emotion::Happy, Emotion::Sad));
        assert!(m.decision(&xs[0]) < 0.0);
        assert!(m.decision(&xs[1]) > 0.0);
    }

    #[test]
    fn xor_is_learned() {
        let (xs, ys) = xor();
        let params = KernelParams::new(1.0, 10.0).unwrap();
        let sol = smo_train(&xs, &ys, params, &SmoConfig::default()).unwrap();
        let m = BinaryMachine::from_solution(&xs, &ys, &sol, params, (Emotion::Happy, Emotion::Sad));
        for (x, y) in xs.iter().zip(&ys) {
            assert_eq!(m.decision(x).signum(), *y);
        }
        check_kkt(&xs, &ys, &sol, params, 1e-3);
    }

    #[test]
    fn objective_trace_matches_direct_evaluation() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let normal = Normal::new(0.0, 1.0).unwrap();
        let xs: Vec<Vec<f64>> = (0..40)
            .map(|i| {
                let shift = if i % 2 == 0 { 0.8 } else { -0.8 };
                (0..3).map(|_| normal.sample(&mut rng) + shift).collect()
            })
            .collect();
        let ys: Vec<f64> = (0..40).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect();
        let params = KernelParams::new(0.5, 0.4).unwrap();
        let sol = smo_train(&xs, &ys, params, &SmoConfig::default()).unwrap();
        assert!(sol.objective_history.windows(2).all(|w| w[1] >= w[0] - 1e-9));
        let direct = dual_objective(&xs, &ys, &sol.alphas, params.gamma());
        assert!((direct - sol.objective_history.last().unwrap()).abs() < 1e-9);
        check_kkt(&xs, &ys, &sol, params, 1e-3);
    }

    #[test]
    fn binary_errors() {
        let params = KernelParams::new(1.0, 1.0).unwrap();
        let cfg = SmoConfig::default();
        let one_class = smo_train(&[vec![0.0], vec![1.0]], &[1.0, 1.0], params, &cfg);
        assert!(matches!(one_class, Err(Error::DegenerateData(_))));
        let nan = smo_train(&[vec![f64::NAN], vec![1.0]], &[1.0, -1.0], params, &cfg);
        assert!(matches!(nan, Err(Error::Numeric(_))));
        assert!(KernelParams::new(0.0, 1.0).is_err());
        assert!(KernelParams::new(1.0, -1.0).is_err());
    }

    fn blobs(classes: &[Emotion], per: usize, seed: u64) -> (Vec<Vec<f64>>, Vec<Emotion>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, 0.3).unwrap();
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for (k, &c) in classes.iter().enumerate() {
            let angle = k as f64 * std::f64::consts::TAU / classes.len() as f64;
            for _ in 0..per {
                xs.push(vec![
                    4.0 * angle.cos() + normal.sample(&mut rng),
                    4.0 * angle.sin() + normal.sample(&mut rng),
                ]);
                ys.push(c);
            }
        }
        (xs, ys)
    }

    #[test]
    fn machine_counts() {
        let params = KernelParams::new(0.5, 1.0).unwrap();
        let cfg = SmoConfig::default();
        let (xs, ys) = blobs(&Emotion::ALL, 5, 1);
        assert_eq!(ovo_train(&xs, &ys, params, &cfg).unwrap().machines.len(), 21);
        let (xs, ys) = blobs(&[Emotion::Sad, Emotion::Fear], 5, 1);
        assert_eq!(ovo_train(&xs, &ys, params, &cfg).unwrap().machines.len(), 1);
        let (xs, ys) = blobs(&Emotion::ALL[1..], 5, 1);
        let m = ovo_train(&xs, &ys, params, &cfg).unwrap();
        assert_eq!(m.machines.len(), 15);
        assert!(!m.classes.contains(&Emotion::Anger));
        let (xs, ys) = blobs(&[Emotion::Sad], 5, 1);
        assert!(matches!(ovo_train(&xs, &ys, params, &cfg), Err(Error::DegenerateData(_))));
    }

    #[test]
    fn training_points_of_separated_blobs() {
        let classes = [Emotion::Anger, Emotion::Happy, Emotion::Neutral];
        let (xs, ys) = blobs(&classes, 10, 2);
        let m = ovo_train(&xs, &ys, KernelParams::new(0.5, 1.0).unwrap(), &SmoConfig::default()).unwrap();
        for (x, y) in xs.iter().zip(&ys) {
            assert_eq!(m.predict(x).unwrap(), *y);
        }
        assert!(matches!(m.predict(&[0.0]), Err(Error::Dimension(_))));
    }

    #[test]
    fn unanimous_vote() {
        let classes = [Emotion::Anger, Emotion::Happy, Emotion::Neutral];
        let (xs, ys) = blobs(&classes, 10, 3);
        let m = ovo_train(&xs, &ys, KernelParams::new(0.5, 1.0).unwrap(), &SmoConfig::default()).unwrap();
        // deep inside the anger blob both anger machines agree and the third
        // machine votes for whichever remains; anger still gets two votes
        let p = m.predict(&[4.0, 0.0]).unwrap();
        assert_eq!(p, Emotion::Anger);
    }

    #[test]
    fn three_way_tie_is_deterministic() {
        let classes = [Emotion::Sad, Emotion::Fear, Emotion::Disgust];
        let (xs, ys) = blobs(&classes, 1, 4);
        let params = KernelParams::new(0.5, 1.0).unwrap();
        let m = ovo_train(&xs, &ys, params, &SmoConfig::default()).unwrap();
        let center = [0.0, 0.0];
        let z = m.scaler.transform(&center);
        let mut votes = std::collections::HashMap::new();
        for machine in &m.machines {
            *votes.entry(machine.vote(&z).0).or_insert(0) += 1;
        }
        let first = m.predict(&center).unwrap();
        for _ in 0..5 {
            assert_eq!(m.predict(&center).unwrap(), first);
        }
        if votes.values().all(|&v| v == 1) {
            // tie: the winner carries the largest summed |decision|
            let strength = |e: Emotion| -> f64 {
                m.machines
                    .iter()
                    .map(|mm| mm.vote(&z))
                    .filter(|(w, _)| *w == e)
                    .map(|(_, f)| f.abs())
                    .sum()
            };
            assert!(classes.iter().all(|&c| strength(first) >= strength(c)));
        }
    }

    #[test]
    fn model_file_round_trip() {
        let (xs, ys) = blobs(&[Emotion::Anger, Emotion::Sad, Emotion::Fear], 6, 7);
        let model = ovo_train(&xs, &ys, KernelParams::new(0.3, 0.4).unwrap(), &SmoConfig::default()).unwrap();
        let mut buf = Vec::new();
        model.write(&mut buf).unwrap();
        let back = SvmModel::read(&buf[..]).unwrap();
        assert_eq!(back.classes, model.classes);
        assert_eq!(back.machines, model.machines);
        assert_eq!(back.scaler, model.scaler);
        assert_eq!(back.feature_subset.indices, model.feature_subset.indices);
        assert!(SvmModel::read(&b"crowdgrid-svm 9\n"[..]).is_err());
    }

    fn labeled_rows(xs: &[Vec<f64>], ys: &[Emotion]) -> Vec<FeatureVector> {
        xs.iter()
            .zip(ys)
            .enumerate()
            .map(|(i, (x, y))| FeatureVector {
                sequence_id: format!("q{i}"),
                start_index: 0,
                values: x.clone(),
                label: Some(*y),
            })
            .collect()
    }

    #[test]
    fn c_search_rules() {
        let (xs, ys) = blobs(&[Emotion::Anger, Emotion::Happy], 10, 8);
        let rows = labeled_rows(&xs, &ys);
        let subset = FeatureSubset::all(2);
        let single = grid_search_c(&rows, &subset, &[0.7], 10, None, 0).unwrap();
        assert_eq!(single.best_c, 0.7);
        // blobs are far apart: every candidate is perfect, smallest wins
        let tie = grid_search_c(&rows, &subset, &[1.0, 0.4, 0.1], 5, None, 0).unwrap();
        assert_eq!(tie.scores.len(), 3);
        assert!(tie.scores.iter().all(|&(_, a)| a == 1.0));
        assert_eq!(tie.best_c, 0.1);
        assert!(grid_search_c(&rows, &subset, &[], 5, None, 0).is_err());
    }

    proptest! {
        #[test]
        fn rbf_symmetry(
            x in proptest::collection::vec(-5.0f64..5.0, 6),
            y in proptest::collection::vec(-5.0f64..5.0, 6),
            gamma in 0.01f64..3.0,
        ) {
            prop_assert_eq!(rbf(&x, &y, gamma).unwrap(), rbf(&y, &x, gamma).unwrap());
            prop_assert_eq!(rbf(&x, &x, gamma).unwrap(), 1.0);
        }

        #[test]
        fn smo_box_equality_kkt(seed in 0u64..1000, c in 0.1f64..5.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut unit = || rand::Rng::random::<f64>(&mut rng);
            let xs: Vec<Vec<f64>> = (0..16).map(|_| vec![unit(), unit()]).collect();
            let mut ys: Vec<f64> = xs.iter().map(|x| if x[0] + x[1] > 1.0 { 1.0 } else { -1.0 }).collect();
            ys[0] = 1.0;
            ys[1] = -1.0;
            let params = KernelParams::new(1.0, c).unwrap();
            let sol = smo_train(&xs, &ys, params, &SmoConfig::default()).unwrap();
            check_kkt(&xs, &ys, &sol, params, 1e-3);
            prop_assert!(sol.objective_history.windows(2).all(|w| w[1] >= w[0] - 1e-9));
        }
    }
}
