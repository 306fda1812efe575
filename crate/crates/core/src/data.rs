//! Dataset layout, multi-observer label resolution and a synthetic corpus
//! generator.
//!
//! A corpus is a directory of sequences, `<root>/<sequence_id>/frame_NNNNN.pgm`,
//! plus a labels CSV `sequence_id,start_index,observer_id,label`. An empty
//! `start_index` annotates the whole sequence and applies to each of its
//! windows; a numeric one annotates a single window and takes precedence.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufRead, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::imaging::{load_sequence, FrameSequence, GrayFrame};
use crate::label::Emotion;

pub const LABELS_FILE: &str = "labels.csv";

/// One observer's label for a window or a whole sequence.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Annotation {
    pub sequence_id: String,
    /// `None` annotates every window of the sequence.
    pub start_index: Option<usize>,
    pub observer_id: String,
    pub label: Emotion,
}

/// What an annotation refers to.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct WindowKey {
    pub sequence_id: String,
    pub start_index: Option<usize>,
}

/// Majority-resolved labels and the keys dropped for lack of one.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct LabelBook {
    pub labels: BTreeMap<WindowKey, Emotion>,
    pub excluded: Vec<WindowKey>,
}

impl LabelBook {
    /// Window-level label if present, else the sequence-level one.
    /// A window-level tie excludes the window even when the sequence has a label.
    pub fn label_for(&self, sequence_id: &str, start_index: usize) -> Option<Emotion> {
        let window = WindowKey {
            sequence_id: sequence_id.to_string(),
            start_index: Some(start_index),
        };
        if let Some(&l) = self.labels.get(&window) {
            return Some(l);
        }
        if self.excluded.contains(&window) {
            return None;
        }
        self.labels
            .get(&WindowKey {
                sequence_id: sequence_id.to_string(),
                start_index: None,
            })
            .copied()
    }
}

/// Resolves each annotated key to its strict-plurality label. Keys without
/// one (a three-way split, or 1-1 between two observers) are excluded and logged.
pub fn resolve_labels(annotations: &[Annotation]) -> LabelBook {
    let mut tallies: BTreeMap<WindowKey, [usize; Emotion::COUNT]> = BTreeMap::new();
    for a in annotations {
        let key = WindowKey {
            sequence_id: a.sequence_id.clone(),
            start_index: a.start_index,
        };
        tallies.entry(key).or_insert([0; Emotion::COUNT])[a.label.code()] += 1;
    }
    let mut book = LabelBook::default();
    for (key, counts) in tallies {
        let top = *counts.iter().max().unwrap();
        let winners: Vec<usize> = (0..Emotion::COUNT).filter(|&i| counts[i] == top).collect();
        if winners.len() == 1 {
            book.labels.insert(key, Emotion::from_code(winners[0]).unwrap());
        } else {
            log::info!(
                "no majority for {}:{}; excluded",
                key.sequence_id,
                key.start_index.map_or("*".to_string(), |s| s.to_string())
            );
            book.excluded.push(key);
        }
    }
    book
}

pub fn read_annotations_csv<R: BufRead>(input: R) -> Result<Vec<Annotation>> {
    let mut lines = input.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::Format("empty labels file".into()))?
        .map_err(|e| Error::io("<labels csv>", e))?;
    if header.trim() != "sequence_id,start_index,observer_id,label" {
        return Err(Error::Format(format!("unexpected labels header {header:?}")));
    }
    let mut out = Vec::new();
    for line in lines {
        let line = line.map_err(|e| Error::io("<labels csv>", e))?;
        if line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.trim().split(',').collect();
        if f.len() != 4 {
            return Err(Error::Format(format!("labels row {line:?} needs 4 fields")));
        }
        let start_index = if f[1].is_empty() {
            None
        } else {
            Some(
                f[1].parse()
                    .map_err(|_| Error::Format(format!("bad start_index {:?}", f[1])))?,
            )
        };
        out.push(Annotation {
            sequence_id: f[0].to_string(),
            start_index,
            observer_id: f[2].to_string(),
            label: f[3].parse()?,
        });
    }
    Ok(out)
}

pub fn write_annotations_csv<W: Write>(annotations: &[Annotation], mut out: W) -> Result<()> {
    let mut s = String::from("sequence_id,start_index,observer_id,label\n");
    for a in annotations {
        let start = a.start_index.map_or(String::new(), |i| i.to_string());
        s.push_str(&format!("{},{start},{},{}\n", a.sequence_id, a.observer_id, a.label));
    }
    out.write_all(s.as_bytes()).map_err(|e| Error::io("<labels csv>", e))
}

pub fn load_labels(path: impl AsRef<Path>) -> Result<LabelBook> {
    let path = path.as_ref();
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(resolve_labels(&read_annotations_csv(std::io::BufReader::new(file))?))
}

/// Sequence directories under `root`, sorted by name.
pub fn load_sequences(root: impl AsRef<Path>, source_fps: f64) -> Result<Vec<(String, FrameSequence)>> {
    let root = root.as_ref();
    let mut dirs: Vec<_> = fs::read_dir(root)
        .map_err(|e| Error::io(root, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_dir())
        .collect();
    dirs.sort();
    dirs.iter()
        .map(|d| {
            let id = d
                .file_name()
                .and_then(|n| n.to_str())
                .ok_or_else(|| Error::Format(format!("non-UTF-8 sequence directory {}", d.display())))?
                .to_string();
            Ok((id, load_sequence(d, source_fps)?))
        })
        .collect()
}

/// Kinds of synthetic motion, one per class.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Pattern {
    TranslatingSquare,
    OscillatingBar,
    ExpandingCircle,
    StaticSquare,
    TwoSquaresConverging,
    JitteringCross,
    BlankDrift,
}

/// How one class's sequences are drawn.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SyntheticClassSpec {
    pub label: Emotion,
    pub pattern: Pattern,
    /// Pixels per source frame.
    pub amplitude: f64,
    /// Standard deviation of additive intensity noise.
    pub noise: f64,
}

/// One distinct pattern per class.
pub fn default_class_specs() -> [SyntheticClassSpec; 7] {
    let spec = |label, pattern, amplitude| SyntheticClassSpec {
        label,
        pattern,
        amplitude,
        noise: 0.01,
    };
    [
        spec(Emotion::Anger, Pattern::TranslatingSquare, 2.0),
        spec(Emotion::Happy, Pattern::OscillatingBar, 1.5),
        spec(Emotion::Surprise, Pattern::ExpandingCircle, 1.0),
        spec(Emotion::Sad, Pattern::StaticSquare, 0.0),
        spec(Emotion::Fear, Pattern::TwoSquaresConverging, 1.0),
        spec(Emotion::Disgust, Pattern::JitteringCross, 3.0),
        spec(Emotion::Neutral, Pattern::BlankDrift, 0.0),
    ]
}

/// Corpus shape.
#[derive(Clone, Debug)]
pub struct SyntheticConfig {
    pub specs: Vec<SyntheticClassSpec>,
    pub sequences_per_class: usize,
    pub frames: usize,
    pub width: usize,
    pub height: usize,
    pub observers: usize,
    /// Chance that one observer disagrees with the others on a sequence.
    pub dissent_rate: f64,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            specs: default_class_specs().to_vec(),
            sequences_per_class: 10,
            frames: 24,
            width: 64,
            height: 64,
            observers: 3,
            dissent_rate: 0.2,
            seed: 0,
        }
    }
}

/// One generated sequence.
#[derive(Clone, Debug)]
pub struct SyntheticSequence {
    pub id: String,
    pub label: Emotion,
    pub frames: Vec<GrayFrame>,
}

/// Reflects `x` into `[lo, hi]` (triangle wave).
fn bounce(x: f64, lo: f64, hi: f64) -> f64 {
    let span = hi - lo;
    if span <= 0.0 {
        return lo;
    }
    let m = (x - lo).rem_euclid(2.0 * span);
    lo + if m <= span { m } else { 2.0 * span - m }
}

#[derive(Clone, Copy)]
struct Rect {
    x0: f64,
    y0: f64,
    x1: f64,
    y1: f64,
}

impl Rect {
    fn contains(&self, x: f64, y: f64) -> bool {
        x >= self.x0 && x < self.x1 && y >= self.y0 && y < self.y1
    }
}

/// Scene layout drawn once per sequence; `render` evaluates frame `t`.
struct Scene {
    spec: SyntheticClassSpec,
    w: f64,
    h: f64,
    fg: f64,
    bg: f64,
    size: f64,
    cx: f64,
    cy: f64,
    direction: f64,
    phase: f64,
    jitter: Vec<(f64, f64)>,
}

impl Scene {
    fn draw(spec: SyntheticClassSpec, width: usize, height: usize, frames: usize, rng: &mut ChaCha8Rng) -> Scene {
        let (w, h) = (width as f64, height as f64);
        let a = spec.amplitude;
        Scene {
            spec,
            w,
            h,
            fg: rng.random_range(0.7..0.9),
            bg: rng.random_range(0.1..0.3),
            size: rng.random_range(0.19..0.22) * w.min(h),
            cx: w / 2.0 + rng.random_range(-1.0..1.0),
            cy: h / 2.0 + rng.random_range(-1.0..1.0),
            direction: 1.0,
            phase: rng.random_range(0.0..0.15),
            jitter: (0..frames)
                .map(|_| (rng.random_range(-a..=a), rng.random_range(-a..=a)))
                .collect(),
        }
    }

    fn shapes(&self, t: usize) -> Vec<Rect> {
        let tf = t as f64;
        let a = self.spec.amplitude;
        let s = self.size;
        let square = |cx: f64, cy: f64, side: f64| Rect {
            x0: cx - side / 2.0,
            y0: cy - side / 2.0,
            x1: cx + side / 2.0,
            y1: cy + side / 2.0,
        };
        match self.spec.pattern {
            Pattern::TranslatingSquare => {
                let lo = 2.0 + s / 2.0;
                let hi = self.w - 2.0 - s / 2.0;
                let start = lo + self.phase * (hi - lo);
                vec![square(bounce(start + self.direction * a * tf, lo, hi), self.cy, s)]
            }
            Pattern::OscillatingBar => {
                // full-width horizontal bar moving up and down with peak speed `a`
                let period = 24.0;
                let amp = a * period / std::f64::consts::TAU;
                let y = self.cy + amp * (std::f64::consts::TAU * (tf / period + self.phase)).sin();
                vec![Rect {
                    x0: 0.0,
                    y0: y - s / 4.0,
                    x1: self.w,
                    y1: y + s / 4.0,
                }]
            }
            Pattern::StaticSquare => vec![square(self.cx, self.cy, s * 1.5)],
            Pattern::TwoSquaresConverging => {
                // one square above the other, closing vertically
                let side = s * 0.6;
                let max_gap = self.h / 2.0 - side - 2.0;
                let gap = max_gap - (a * tf + self.phase * max_gap).rem_euclid(max_gap);
                vec![
                    square(self.cx, self.h / 2.0 - gap - side / 2.0, side),
                    square(self.cx, self.h / 2.0 + gap + side / 2.0, side),
                ]
            }
            Pattern::JitteringCross => {
                let (jx, jy) = self.jitter[t];
                let (cx, cy) = (self.cx + jx, self.cy + jy);
                let arm = s * 1.2;
                let thick = s * 0.3;
                vec![
                    Rect { x0: cx - arm, y0: cy - thick, x1: cx + arm, y1: cy + thick },
                    Rect { x0: cx - thick, y0: cy - arm, x1: cx + thick, y1: cy + arm },
                ]
            }
            Pattern::ExpandingCircle | Pattern::BlankDrift => Vec::new(),
        }
    }

    fn intensity(&self, t: usize, x: f64, y: f64, shapes: &[Rect]) -> f64 {
        let tf = t as f64;
        match self.spec.pattern {
            Pattern::ExpandingCircle => {
                let r_min = self.size * 0.3;
                let r_max = self.w.min(self.h) * 0.42;
                let r = r_min + (self.phase * (r_max - r_min) + self.spec.amplitude * tf).rem_euclid(r_max - r_min);
                let d = ((x - self.cx).powi(2) + (y - self.cy).powi(2)).sqrt();
                if d < r {
                    self.fg
                } else {
                    self.bg
                }
            }
            Pattern::BlankDrift => {
                // nearly uniform field whose brightness slowly drifts
                self.bg + 0.1 * (tf / 24.0 + self.phase) + 0.02 * (x / self.w)
            }
            _ => {
                if shapes.iter().any(|r| r.contains(x, y)) {
                    self.fg
                } else {
                    self.bg
                }
            }
        }
    }

    fn render(&self, t: usize, noise: &mut impl FnMut() -> f64) -> GrayFrame {
        let shapes = self.shapes(t);
        let (w, h) = (self.w as usize, self.h as usize);
        GrayFrame::from_fn(w, h, |x, y| {
            // sample at pixel centers
            let v = self.intensity(t, x as f64 + 0.5, y as f64 + 0.5, &shapes) + noise();
            // quantize as the 8-bit corpus stores it
            (v.clamp(0.0, 1.0) * 255.0).round() / 255.0
        })
    }
}

fn class_rng(seed: u64, class: usize, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((class as u64) << 32) | index as u64);
    rng
}

/// Generates one sequence in memory.
pub fn synthesize_sequence(
    spec: SyntheticClassSpec,
    index: usize,
    frames: usize,
    width: usize,
    height: usize,
    seed: u64,
) -> Result<SyntheticSequence> {
    if width < 64 || height < 64 {
        return Err(Error::InvalidParameter(format!(
            "synthetic frames must be at least 64x64, got {width}x{height}"
        )));
    }
    let mut rng = class_rng(seed, spec.label.code(), index);
    let scene = Scene::draw(spec, width, height, frames, &mut rng);
    let normal = Normal::new(0.0, spec.noise.max(0.0)).map_err(|e| Error::InvalidParameter(e.to_string()))?;
    let mut noise = || if spec.noise > 0.0 { normal.sample(&mut rng) } else { 0.0 };
    Ok(SyntheticSequence {
        id: format!("{}_{index:03}", spec.label),
        label: spec.label,
        frames: (0..frames).map(|t| scene.render(t, &mut noise)).collect(),
    })
}

/// Generates every sequence plus observer annotations in memory.
pub fn synthesize(config: &SyntheticConfig) -> Result<(Vec<SyntheticSequence>, Vec<Annotation>)> {
    if config.frames < 24 {
        return Err(Error::InvalidParameter(format!(
            "synthetic sequences need at least 24 frames, got {}",
            config.frames
        )));
    }
    let labels: Vec<Emotion> = config.specs.iter().map(|s| s.label).collect();
    let mut distinct = labels.clone();
    distinct.sort();
    distinct.dedup();
    if distinct.len() != labels.len() {
        return Err(Error::InvalidParameter("one pattern per class".into()));
    }
    let jobs: Vec<(SyntheticClassSpec, usize)> = config
        .specs
        .iter()
        .flat_map(|s| (0..config.sequences_per_class).map(move |i| (*s, i)))
        .collect();
    let sequences = jobs
        .par_iter()
        .map(|&(spec, i)| synthesize_sequence(spec, i, config.frames, config.width, config.height, config.seed))
        .collect::<Result<Vec<_>>>()?;
    let mut annotations = Vec::new();
    let mut label_rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x5eed_1abe1);
    for seq in &sequences {
        let dissenter = (config.observers >= 3 && label_rng.random_bool(config.dissent_rate))
            .then(|| label_rng.random_range(0..config.observers));
        for o in 0..config.observers {
            let label = if Some(o) == dissenter {
                let other: Vec<Emotion> = labels.iter().copied().filter(|&l| l != seq.label).collect();
                other[label_rng.random_range(0..other.len())]
            } else {
                seq.label
            };
            annotations.push(Annotation {
                sequence_id: seq.id.clone(),
                start_index: None,
                observer_id: format!("obs{o}"),
                label,
            });
        }
    }
    Ok((sequences, annotations))
}

/// Writes a synthetic corpus under `root` and returns the sequence count.
pub fn generate_synthetic(config: &SyntheticConfig, root: impl AsRef<Path>) -> Result<usize> {
    let root = root.as_ref();
    let (sequences, annotations) = synthesize(config)?;
    fs::create_dir_all(root).map_err(|e| Error::io(root, e))?;
    sequences.par_iter().try_for_each(|seq| {
        let dir = root.join(&seq.id);
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        for (t, frame) in seq.frames.iter().enumerate() {
            frame.save_pgm(dir.join(format!("frame_{t:05}.pgm")))?;
        }
        Ok::<_, Error>(())
    })?;
    let labels = root.join(LABELS_FILE);
    let file = fs::File::create(&labels).map_err(|e| Error::io(&labels, e))?;
    write_annotations_csv(&annotations, std::io::BufWriter::new(file))?;
    Ok(sequences.len())
}
