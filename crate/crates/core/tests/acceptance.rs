//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each
//! and exits non-zero if any failed.
//!
//! `cargo test -p crowdgrid --test acceptance` (add `--release` for the
//! timings that matter).

use std::collections::{BTreeSet, HashMap, HashSet};
use std::path::Path;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crowdgrid::data::{generate_synthetic, SyntheticConfig};
use crowdgrid::edges::{canny, EdgeMap, EdgeParams};
use crowdgrid::eval::{
    kfold, split_indices, sweep_edge_threshold, sweep_grid_size, ConfusionMatrix, DEFAULT_GRID_SIZES,
    DEFAULT_THRESHOLDS,
};
use crowdgrid::gridfeat::{extract, occupancy, FeatureVector, GridSpec, ReferenceFrame};
use crowdgrid::imaging::{GrayFrame, Window};
use crowdgrid::pipeline::{run_pipeline, Corpus, PipelineConfig};
use crowdgrid::select::{best_first_select, cfs_merit, ClassEncoding};
use crowdgrid::svm::{smo_train, KernelParams, SmoConfig, SmoSolution};
use crowdgrid::Emotion;

type Outcome = Result<String, String>;
type Criterion<'a> = (&'static str, Duration, Box<dyn Fn() -> Outcome + 'a>);

fn check(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn synthetic_corpus(dir: &Path) -> Corpus {
    generate_synthetic(&SyntheticConfig::default(), dir).expect("generate corpus");
    Corpus::load(dir, 24.0).expect("load corpus")
}

// 1
fn feature_length_law() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let frames: Vec<GrayFrame> = (0..8)
        .map(|_| GrayFrame::from_fn(64, 64, |_, _| rng.random::<f64>()))
        .collect();
    let window = Window {
        frames,
        sequence_id: "w".into(),
        start_index: 0,
    };
    for g in [5, 10, 20, 50] {
        let spec = GridSpec::with_blocks(g, 5).map_err(|e| e.to_string())?;
        let fv = extract(&window, &EdgeParams::default(), &spec, ReferenceFrame::First).map_err(|e| e.to_string())?;
        check(fv.len() == 4 * g * 5, || format!("g={g}: length {}", fv.len()))?;
    }
    let fv = extract(&window, &EdgeParams::default(), &GridSpec::default(), ReferenceFrame::First)
        .map_err(|e| e.to_string())?;
    check(fv.len() == 400, || format!("defaults: length {}", fv.len()))?;
    Ok("lengths 100/200/400/1000, defaults 400".into())
}

/// Brute-force occupancy in integer arithmetic, written from the definition.
fn occupancy_oracle(edges: &EdgeMap, g: usize, d: usize, n: usize) -> Vec<f64> {
    let (w, h) = (edges.width(), edges.height());
    // round half up of (i+1)*extent/(g+1)
    let lines = |extent: usize| -> Vec<usize> {
        (0..g)
            .map(|i| (2 * (i + 1) * extent + (g + 1)) / (2 * (g + 1)))
            .collect()
    };
    // round half down of (2k+1)*len/(2n), clamped to the line
    let points = |len: usize| -> Vec<usize> {
        (0..n)
            .map(|k| {
                let num = ((2 * k + 1) * len) as i64 - n as i64;
                let v = if num <= 0 { 0 } else { (num as usize).div_ceil(2 * n) };
                v.min(len - 1)
            })
            .collect()
    };
    let near_edge = |x: usize, y: usize| -> bool {
        for dy in -1i64..=1 {
            for dx in -1i64..=1 {
                let (nx, ny) = (x as i64 + dx, y as i64 + dy);
                if nx >= 0 && ny >= 0 && (nx as usize) < w && (ny as usize) < h && edges.get(nx as usize, ny as usize) {
                    return true;
                }
            }
        }
        false
    };
    let per = n / d;
    let division_of = |k: usize| (k / per).min(d - 1);
    let mut out = Vec::with_capacity(2 * g * d);
    for (horizontal, positions, len) in [(true, lines(h), w), (false, lines(w), h)] {
        let pts = points(len);
        for &line in &positions {
            let mut slots = vec![0.0; d];
            for (k, &p) in pts.iter().enumerate() {
                let (x, y) = if horizontal { (p, line) } else { (line, p) };
                if near_edge(x, y) {
                    slots[division_of(k)] = 1.0;
                }
            }
            out.extend(slots);
        }
    }
    out
}

// 2
fn intersection_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let specs = [(20, 5, 20), (10, 5, 10), (7, 3, 11), (20, 5, 23)];
    let mut ones = 0usize;
    for m in 0..100 {
        let density = [0.002, 0.01, 0.03, 0.1][m % 4];
        let edges = EdgeMap::from_fn(64, 64, |_, _| rng.random::<f64>() < density);
        let (g, d, n) = specs[m % specs.len()];
        let spec = GridSpec::new(g, d, n).map_err(|e| e.to_string())?;
        let got = occupancy(&edges, &spec).map_err(|e| e.to_string())?;
        let want = occupancy_oracle(&edges, g, d, n);
        check(got == want, || format!("map {m} (g={g}, d={d}, n={n}) differs from oracle"))?;
        ones += got.iter().filter(|&&v| v == 1.0).count();
    }
    Ok(format!("100 maps exact, {ones} occupied slots"))
}

fn hausdorff_to_square(edges: &EdgeMap, x0: f64, y0: f64, x1: f64, y1: f64) -> f64 {
    let dist_to_contour = |px: f64, py: f64| -> f64 {
        let dx = (x0 - px).max(0.0).max(px - x1);
        let dy = (y0 - py).max(0.0).max(py - y1);
        if dx > 0.0 || dy > 0.0 {
            (dx * dx + dy * dy).sqrt()
        } else {
            (px - x0).min(x1 - px).min(py - y0).min(y1 - py)
        }
    };
    let centers: Vec<(f64, f64)> = edges.pixels().map(|(x, y)| (x as f64 + 0.5, y as f64 + 0.5)).collect();
    let forward = centers.iter().map(|&(x, y)| dist_to_contour(x, y)).fold(0.0, f64::max);
    let mut contour = Vec::new();
    let steps = 400;
    for i in 0..=steps {
        let t = i as f64 / steps as f64;
        contour.push((x0 + t * (x1 - x0), y0));
        contour.push((x0 + t * (x1 - x0), y1));
        contour.push((x0, y0 + t * (y1 - y0)));
        contour.push((x1, y0 + t * (y1 - y0)));
    }
    let backward = contour
        .iter()
        .map(|&(cx, cy)| {
            centers
                .iter()
                .map(|&(x, y)| ((x - cx).powi(2) + (y - cy).powi(2)).sqrt())
                .fold(f64::INFINITY, f64::min)
        })
        .fold(0.0, f64::max);
    forward.max(backward)
}

// 3
fn canny_properties() -> Outcome {
    for t in DEFAULT_THRESHOLDS {
        let params = EdgeParams::with_threshold(t).map_err(|e| e.to_string())?;
        for v in [0.0, 0.3, 1.0] {
            let e = canny(&GrayFrame::constant(32, 24, v), &params).map_err(|e| e.to_string())?;
            check(e.count() == 0, || format!("constant {v} at t={t} gave {} edges", e.count()))?;
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for f in 0..50 {
        // random blobs over noise, so edges exist at every threshold
        let blobs: Vec<(f64, f64, f64, f64)> = (0..6)
            .map(|_| (rng.random_range(0.0..64.0), rng.random_range(0.0..64.0), rng.random_range(3.0..15.0), rng.random::<f64>()))
            .collect();
        let noise: Vec<f64> = (0..64 * 64).map(|_| rng.random::<f64>() * 0.15).collect();
        let frame = GrayFrame::from_fn(64, 64, |x, y| {
            let mut v = noise[y * 64 + x];
            for &(bx, by, r, a) in &blobs {
                if (x as f64 - bx).powi(2) + (y as f64 - by).powi(2) < r * r {
                    v += a * 0.8;
                }
            }
            v
        });
        let maps = DEFAULT_THRESHOLDS
            .iter()
            .map(|&t| canny(&frame, &EdgeParams::with_threshold(t).unwrap()))
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| e.to_string())?;
        for pair in maps.windows(2) {
            check(pair[1].is_subset_of(&pair[0]), || format!("frame {f}: edge sets not nested"))?;
        }
    }
    let mut worst = 0.0f64;
    for (x0, y0, side) in [(16usize, 16usize, 32usize), (10, 20, 20), (30, 8, 25)] {
        let frame = GrayFrame::from_fn(64, 64, |x, y| {
            if (x0..x0 + side).contains(&x) && (y0..y0 + side).contains(&y) {
                1.0
            } else {
                0.0
            }
        });
        let e = canny(&frame, &EdgeParams::default()).map_err(|e| e.to_string())?;
        let hd = hausdorff_to_square(&e, x0 as f64, y0 as f64, (x0 + side) as f64, (y0 + side) as f64);
        worst = worst.max(hd);
        check(hd <= 1.0, || format!("square at ({x0},{y0}) side {side}: Hausdorff {hd:.3}"))?;
    }
    Ok(format!("constant empty, 50 frames nested, square Hausdorff max {worst:.3} px"))
}

fn kkt_report(xs: &[Vec<f64>], ys: &[f64], sol: &SmoSolution, params: KernelParams) -> (f64, f64, f64) {
    let c = params.c();
    let eq: f64 = sol.alphas.iter().zip(ys).map(|(a, y)| a * y).sum();
    let mut box_violation = 0.0f64;
    let mut residual = 0.0f64;
    for (i, &a) in sol.alphas.iter().enumerate() {
        box_violation = box_violation.max(-a).max(a - c);
        if a > 0.0 && a < c {
            let f: f64 = (0..xs.len())
                .map(|j| {
                    let d2: f64 = xs[i].iter().zip(&xs[j]).map(|(p, q)| (p - q).powi(2)).sum();
                    sol.alphas[j] * ys[j] * (-params.gamma() * d2).exp()
                })
                .sum::<f64>()
                + sol.bias;
            residual = residual.max((ys[i] * f - 1.0).abs());
        }
    }
    (box_violation, eq.abs(), residual)
}

// 4
fn smo_correctness() -> Outcome {
    let xor_x = vec![vec![0.0, 0.0], vec![1.0, 1.0], vec![0.0, 1.0], vec![1.0, 0.0]];
    let xor_y = vec![-1.0, -1.0, 1.0, 1.0];
    let params = KernelParams::new(1.0, 10.0).map_err(|e| e.to_string())?;
    let sol = smo_train(&xor_x, &xor_y, params, &SmoConfig::default()).map_err(|e| e.to_string())?;
    for (x, &y) in xor_x.iter().zip(&xor_y) {
        let f: f64 = xor_x
            .iter()
            .zip(&xor_y)
            .zip(&sol.alphas)
            .map(|((xj, yj), a)| {
                let d2: f64 = x.iter().zip(xj).map(|(p, q)| (p - q).powi(2)).sum();
                a * yj * (-d2).exp()
            })
            .sum::<f64>()
            + sol.bias;
        check(f * y > 0.0, || format!("XOR point {x:?} misclassified"))?;
    }
    let mut machines = vec![(xor_x, xor_y, sol, params)];
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for m in 0..30 {
        let n = rng.random_range(10..60);
        let dim = rng.random_range(1..6);
        let xs: Vec<Vec<f64>> = (0..n).map(|_| (0..dim).map(|_| rng.random_range(-2.0..2.0)).collect()).collect();
        let mut ys: Vec<f64> = xs
            .iter()
            .map(|x| if x.iter().sum::<f64>() + rng.random_range(-0.8..0.8) > 0.0 { 1.0 } else { -1.0 })
            .collect();
        ys[0] = 1.0;
        ys[1] = -1.0;
        let params = KernelParams::new(rng.random_range(0.1..2.0), [0.1, 0.4, 1.0, 10.0][m % 4]).unwrap();
        let sol = smo_train(&xs, &ys, params, &SmoConfig { seed: m as u64, ..SmoConfig::default() })
            .map_err(|e| e.to_string())?;
        machines.push((xs, ys, sol, params));
    }
    let (mut worst_eq, mut worst_kkt) = (0.0f64, 0.0f64);
    for (i, (xs, ys, sol, params)) in machines.iter().enumerate() {
        let (bx, eq, kkt) = kkt_report(xs, ys, sol, *params);
        check(bx <= 0.0, || format!("machine {i}: box violated by {bx}"))?;
        check(eq <= 1e-3, || format!("machine {i}: |sum a y| = {eq}"))?;
        check(kkt <= 1e-2, || format!("machine {i}: KKT residual {kkt}"))?;
        worst_eq = worst_eq.max(eq);
        worst_kkt = worst_kkt.max(kkt);
    }
    Ok(format!(
        "XOR 4/4, {} machines, max |sum a y| {worst_eq:.1e}, max KKT residual {worst_kkt:.1e}",
        machines.len()
    ))
}

fn random_selection_dataset(rng: &mut ChaCha8Rng) -> Vec<FeatureVector> {
    let n_features = rng.random_range(4..=10);
    let n_classes = rng.random_range(2..=7);
    let n = rng.random_range(30..90);
    // a few informative features, some redundant copies, the rest noise
    let weights: Vec<f64> = (0..n_features)
        .map(|_| if rng.random_bool(0.4) { rng.random_range(0.3..2.0) } else { 0.0 })
        .collect();
    (0..n)
        .map(|i| {
            let c = i % n_classes;
            let base = c as f64;
            let mut values: Vec<f64> = weights
                .iter()
                .map(|w| w * ((base * 1.7).sin() + base * 0.2) + rng.random_range(-1.0..1.0))
                .collect();
            if n_features > 3 && rng.random_bool(0.9) {
                values[n_features - 1] = values[0] * 0.9 + rng.random_range(-0.1..0.1);
            }
            FeatureVector {
                sequence_id: format!("s{i}"),
                start_index: 0,
                values,
                label: Emotion::from_code(c),
            }
        })
        .collect()
}

// 5
fn selection_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut sizes = Vec::new();
    for d in 0..20 {
        let ds = random_selection_dataset(&mut rng);
        let n = ds[0].len();
        for enc in [ClassEncoding::Indicator, ClassEncoding::IntegerCode] {
            let found = best_first_select(&ds, 5, enc).map_err(|e| e.to_string())?;
            let mut best = 0.0f64;
            for mask in 1u32..(1 << n) {
                let subset: Vec<usize> = (0..n).filter(|i| mask >> i & 1 == 1).collect();
                best = best.max(cfs_merit(&subset, &ds, enc).map_err(|e| e.to_string())?);
            }
            check((found.merit - best).abs() <= 1e-12, || {
                format!("dataset {d} ({}): best-first {} vs exhaustive {best}", enc.name(), found.merit)
            })?;
            if enc == ClassEncoding::default() {
                sizes.push(found.len());
            }
        }
    }
    Ok(format!("20 datasets x 2 encodings match exhaustive optimum; subset sizes {sizes:?}"))
}

// 6
fn end_to_end(corpus: &Corpus) -> Outcome {
    let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().map_err(|e| e.to_string())?;
    let report = pool
        .install(|| run_pipeline(corpus, &PipelineConfig::default()))
        .map_err(|e| e.to_string())?;
    let cm = &report.confusion;
    let acc = cm.overall_accuracy();
    let recalls = cm.recall();
    let min_recall = recalls.iter().map(|r| r.unwrap_or(0.0)).fold(1.0, f64::min);
    let detail = format!(
        "accuracy {acc:.3} on {} held-out windows, min class recall {min_recall:.3}, {} features selected",
        cm.total(),
        report.subset.len()
    );
    check(acc >= 0.85, || format!("accuracy {acc:.3} < 0.85 ({detail})"))?;
    check(recalls.iter().all(|r| r.is_some_and(|r| r >= 0.6)), || format!("a class recall < 0.6 ({detail})"))?;
    Ok(detail)
}

// 7
fn sweep_harness(corpus: &Corpus) -> Outcome {
    let base = PipelineConfig::default();
    let csv = |r: &crowdgrid::eval::SweepResult| {
        let mut buf = Vec::new();
        r.write_csv(&mut buf).unwrap();
        buf
    };
    let edge_a = sweep_edge_threshold(corpus, &base, &DEFAULT_THRESHOLDS).map_err(|e| e.to_string())?;
    let edge_b = sweep_edge_threshold(corpus, &base, &DEFAULT_THRESHOLDS).map_err(|e| e.to_string())?;
    check(edge_a.points.len() == DEFAULT_THRESHOLDS.len(), || "edge sweep point count".into())?;
    check(csv(&edge_a) == csv(&edge_b), || "edge sweep CSV differs between runs".into())?;
    let grid_a = sweep_grid_size(corpus, &base, &DEFAULT_GRID_SIZES).map_err(|e| e.to_string())?;
    let grid_b = sweep_grid_size(corpus, &base, &DEFAULT_GRID_SIZES).map_err(|e| e.to_string())?;
    check(grid_a.points.len() == DEFAULT_GRID_SIZES.len(), || "grid sweep point count".into())?;
    check(csv(&grid_a) == csv(&grid_b), || "grid sweep CSV differs between runs".into())?;
    for p in &grid_a.points {
        let g = p.value as usize;
        check(p.feature_len == 4 * g * 5, || format!("g={g}: feature length {}", p.feature_len))?;
    }
    let best_t = edge_a.best().map(|p| p.value).unwrap_or(f64::NAN);
    let best_g = grid_a.best().map(|p| p.value).unwrap_or(f64::NAN);
    Ok(format!(
        "{} + {} points, byte-identical reruns; best t={best_t}, best g={best_g}",
        edge_a.points.len(),
        grid_a.points.len()
    ))
}

fn random_grouped_rows(rng: &mut ChaCha8Rng) -> Vec<FeatureVector> {
    let mut rows = Vec::new();
    for c in 0..rng.random_range(2..=7) {
        for g in 0..rng.random_range(2..8) {
            for w in 0..rng.random_range(1..5) {
                rows.push(FeatureVector {
                    sequence_id: format!("c{c}g{g}"),
                    start_index: w * 8,
                    values: vec![rng.random::<f64>(), rng.random::<f64>()],
                    label: Emotion::from_code(c),
                });
            }
        }
    }
    // scramble row order so grouping cannot rely on adjacency
    for i in (1..rows.len()).rev() {
        rows.swap(i, rng.random_range(0..=i));
    }
    rows
}

// 8
fn evaluation_laws() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for d in 0..100 {
        let rows = random_grouped_rows(&mut rng);
        let seed = rng.random::<u64>();
        let s = split_indices(&rows, 0.7, seed).map_err(|e| e.to_string())?;
        let mut all: Vec<usize> = s.train.iter().chain(&s.test).copied().collect();
        all.sort_unstable();
        check(all == (0..rows.len()).collect::<Vec<_>>(), || format!("dataset {d}: split is not a partition"))?;
        let train_ids: HashSet<&str> = s.train.iter().map(|&i| rows[i].sequence_id.as_str()).collect();
        check(s.test.iter().all(|&i| !train_ids.contains(rows[i].sequence_id.as_str())), || {
            format!("dataset {d}: a sequence straddles train/test")
        })?;
        let n_groups = rows.iter().map(|r| r.sequence_id.as_str()).collect::<BTreeSet<_>>().len();
        let k = rng.random_range(2..=n_groups.min(10));
        let folds = kfold(&rows, k, seed).map_err(|e| e.to_string())?;
        check(folds.len() == k, || format!("dataset {d}: {} folds for k={k}", folds.len()))?;
        let mut seen: Vec<usize> = folds.iter().flatten().copied().collect();
        seen.sort_unstable();
        check(seen == (0..rows.len()).collect::<Vec<_>>(), || format!("dataset {d}: folds are not a partition"))?;
        let mut owner: HashMap<&str, usize> = HashMap::new();
        for (f, fold) in folds.iter().enumerate() {
            for &i in fold {
                let prev = *owner.entry(rows[i].sequence_id.as_str()).or_insert(f);
                check(prev == f, || format!("dataset {d}: sequence split across folds"))?;
            }
        }
        let pairs: Vec<(Emotion, Emotion)> = rows
            .iter()
            .map(|r| (r.label.unwrap(), Emotion::from_code(rng.random_range(0..7)).unwrap()))
            .collect();
        let cm = ConfusionMatrix::from_pairs(pairs);
        for (t, row) in cm.rows().iter().enumerate() {
            if cm.support()[t] > 0 {
                let sum: f64 = row.iter().sum();
                check((sum - 1.0).abs() <= 1e-9, || format!("dataset {d}: row {t} sums to {sum}"))?;
            }
        }
    }
    Ok("100 datasets: partitions, grouping and row sums hold".into())
}

// 9
fn fixture_fidelity() -> Outcome {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures");
    let read = |name: &str| std::fs::read(dir.join(name)).map_err(|e| format!("{name}: {e}"));
    let counts = ConfusionMatrix::read_counts_csv(&read("reference_confusion_counts.csv")?[..]).map_err(|e| e.to_string())?;
    // evaluate from the raw (true, predicted) pairs the counts stand for
    let cm = ConfusionMatrix::from_pairs(counts.pairs());
    let acc = cm.overall_accuracy();
    let happy = cm.recall()[Emotion::Happy.code()].unwrap_or(f64::NAN);
    check((acc - 0.709).abs() <= 0.001, || format!("overall accuracy {acc}"))?;
    check(happy == 0.766, || format!("happy recall {happy}"))?;
    // the published proportions table agrees with the counts to its 3 decimals
    let published = String::from_utf8(read("reference_confusion.csv")?).map_err(|e| e.to_string())?;
    let rows = cm.rows();
    for line in published.lines().skip(1) {
        let f: Vec<&str> = line.split(',').collect();
        let t: Emotion = f[0].parse().map_err(|e: crowdgrid::Error| e.to_string())?;
        for (p, v) in f[1..].iter().enumerate() {
            let v: f64 = v.parse().map_err(|_| format!("bad cell {v}"))?;
            let got = rows[t.code()][p];
            let tol = if p == t.code() { 1e-12 } else { 5e-4 };
            check((got - v).abs() <= tol, || format!("{t} -> {p}: {got} vs published {v}"))?;
        }
    }
    Ok(format!("overall {acc:.5}, happy recall {happy}"))
}

fn main() -> ExitCode {
    let dir = tempfile::tempdir().expect("temp dir");
    let corpus = synthetic_corpus(dir.path());
    let criteria: Vec<Criterion> = vec![
        ("1 feature-length law", Duration::from_secs(1), Box::new(feature_length_law)),
        ("2 intersection oracle", Duration::from_secs(5), Box::new(intersection_oracle)),
        ("3 canny properties", Duration::from_secs(10), Box::new(canny_properties)),
        ("4 smo correctness", Duration::from_secs(5), Box::new(smo_correctness)),
        ("5 selection oracle", Duration::from_secs(30), Box::new(selection_oracle)),
        ("6 end-to-end synthetic", Duration::from_secs(120), Box::new(|| end_to_end(&corpus))),
        ("7 sweep harness", Duration::from_secs(600), Box::new(|| sweep_harness(&corpus))),
        ("8 evaluation laws", Duration::from_secs(30), Box::new(evaluation_laws)),
        ("9 fixture fidelity", Duration::from_secs(1), Box::new(fixture_fidelity)),
    ];
    let mut failed = 0;
    for (name, budget, run) in &criteria {
        let start = Instant::now();
        let outcome = run();
        let took = start.elapsed();
        let outcome = outcome.and_then(|msg| {
            if took <= *budget {
                Ok(msg)
            } else {
                Err(format!("{msg}; took {took:.2?}, budget {budget:?}"))
            }
        });
        match outcome {
            Ok(msg) => println!("PASS [{name}] {msg} ({took:.2?})"),
            Err(msg) => {
                failed += 1;
                println!("FAIL [{name}] {msg} ({took:.2?})");
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
