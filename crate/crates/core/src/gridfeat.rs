//! Grid super-imposition over edge maps.
//!
//! `g` horizontal and `g` vertical lines are laid over the frame. Each line
//! carries `n_spacing` equally spaced sample points, grouped into `d`
//! contiguous divisions; a division is one *slot*. A slot is occupied when
//! an edge pixel lies within one pixel (8-neighborhood) of any of its sample
//! points. Across a window, the mean along-line position of a slot's hits is
//! tracked frame to frame to produce a velocity.
//!
//! Slot order everywhere: horizontal lines by index then division, followed
//! by vertical lines in the same order.

use std::fmt::Write as _;
use std::io::{BufRead, Write};

use crate::edges::{canny, EdgeMap, EdgeParams};
use crate::error::{Error, Result};
use crate::imaging::Window;
use crate::label::Emotion;

/// Grid geometry.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct GridSpec {
    g: usize,
    d: usize,
    n_spacing: usize,
}

impl GridSpec {
    pub fn new(g: usize, d: usize, n_spacing: usize) -> Result<Self> {
        if g == 0 || d == 0 || n_spacing == 0 {
            return Err(Error::InvalidParameter(format!(
                "grid parameters must be positive (g={g}, d={d}, n={n_spacing})"
            )));
        }
        if d > n_spacing {
            return Err(Error::InvalidParameter(format!(
                "{d} divisions need at least as many sample points, got {n_spacing}"
            )));
        }
        Ok(GridSpec { g, d, n_spacing })
    }

    /// `g` blocks per side with `d` divisions and `n_spacing = g`.
    pub fn with_blocks(g: usize, d: usize) -> Result<Self> {
        GridSpec::new(g, d, g)
    }

    pub fn g(&self) -> usize {
        self.g
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn n_spacing(&self) -> usize {
        self.n_spacing
    }

    /// Number of static (equally, velocity) slots: `2 g d`.
    pub fn slot_count(&self) -> usize {
        2 * self.g * self.d
    }

    /// Full feature-vector length: `4 g d`.
    pub fn feature_len(&self) -> usize {
        2 * self.slot_count()
    }

    /// Sample-point index range `[start, end)` of a division.
    pub fn division_range(&self, division: usize) -> std::ops::Range<usize> {
        let per = self.n_spacing / self.d;
        let start = division * per;
        let end = if division + 1 == self.d {
            self.n_spacing
        } else {
            start + per
        };
        start..end
    }
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec {
            g: 20,
            d: 5,
            n_spacing: 20,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Orientation {
    Horizontal,
    Vertical,
}

/// Address of one slot.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct SlotIndex {
    pub orientation: Orientation,
    pub line: usize,
    pub division: usize,
}

impl SlotIndex {
    pub fn flat(&self, spec: &GridSpec) -> usize {
        let base = match self.orientation {
            Orientation::Horizontal => 0,
            Orientation::Vertical => spec.g * spec.d,
        };
        base + self.line * spec.d + self.division
    }

    pub fn from_flat(index: usize, spec: &GridSpec) -> SlotIndex {
        let per_orientation = spec.g * spec.d;
        let orientation = if index < per_orientation {
            Orientation::Horizontal
        } else {
            Orientation::Vertical
        };
        let rest = index % per_orientation;
        SlotIndex {
            orientation,
            line: rest / spec.d,
            division: rest % spec.d,
        }
    }

    pub fn all(spec: &GridSpec) -> impl Iterator<Item = SlotIndex> + '_ {
        (0..spec.slot_count()).map(move |i| SlotIndex::from_flat(i, spec))
    }
}

/// Positions of the grid lines: `rows` for horizontal lines, `cols` for vertical.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GridLines {
    pub rows: Vec<usize>,
    pub cols: Vec<usize>,
}

/// Lines at `round((i + 1) * extent / (g + 1))`, strictly interior.
pub fn grid_lines(width: usize, height: usize, spec: &GridSpec) -> Result<GridLines> {
    if width <= spec.g || height <= spec.g {
        return Err(Error::Dimension(format!(
            "{width}x{height} frame too small for a {}-line grid",
            spec.g
        )));
    }
    let place = |extent: usize| -> Vec<usize> {
        (0..spec.g)
            .map(|i| ((i + 1) as f64 * extent as f64 / (spec.g + 1) as f64).round() as usize)
            .collect()
    };
    Ok(GridLines {
        rows: place(height),
        cols: place(width),
    })
}

/// Offsets of `n` equally spaced sample points along a line of `length` pixels.
///
/// Point `k` sits at `(k + 0.5) * length / n`, rounded with halves going down
/// so that `length == n` yields exactly `0..n`.
pub fn sample_points(length: usize, n: usize) -> Vec<usize> {
    (0..n)
        .map(|k| {
            let pos = (k as f64 + 0.5) * length as f64 / n as f64;
            ((pos - 0.5).ceil().max(0.0) as usize).min(length.saturating_sub(1))
        })
        .collect()
}

/// Precomputed sample coordinates for one frame size.
#[derive(Clone, Debug)]
pub struct GridLayout {
    spec: GridSpec,
    width: usize,
    height: usize,
    lines: GridLines,
    along_x: Vec<usize>,
    along_y: Vec<usize>,
}

impl GridLayout {
    pub fn new(width: usize, height: usize, spec: GridSpec) -> Result<Self> {
        let lines = grid_lines(width, height, &spec)?;
        Ok(GridLayout {
            spec,
            width,
            height,
            lines,
            along_x: sample_points(width, spec.n_spacing),
            along_y: sample_points(height, spec.n_spacing),
        })
    }

    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    pub fn lines(&self) -> &GridLines {
        &self.lines
    }

    fn check(&self, edges: &EdgeMap) -> Result<()> {
        if edges.width() != self.width || edges.height() != self.height {
            return Err(Error::Dimension(format!(
                "edge map {}x{} does not match grid layout {}x{}",
                edges.width(),
                edges.height(),
                self.width,
                self.height
            )));
        }
        Ok(())
    }

    /// `(along, x, y)` for every sample point of a slot.
    fn slot_points(&self, slot: SlotIndex) -> impl Iterator<Item = (usize, usize, usize)> + '_ {
        let range = self.spec.division_range(slot.division);
        let (along, fixed) = match slot.orientation {
            Orientation::Horizontal => (&self.along_x, self.lines.rows[slot.line]),
            Orientation::Vertical => (&self.along_y, self.lines.cols[slot.line]),
        };
        along[range].iter().map(move |&a| match slot.orientation {
            Orientation::Horizontal => (a, a, fixed),
            Orientation::Vertical => (a, fixed, a),
        })
    }

    /// Along-line offsets of the slot's sample points that touch an edge.
    fn slot_hits<'a>(
        &'a self,
        edges: &'a EdgeMap,
        slot: SlotIndex,
    ) -> impl Iterator<Item = usize> + 'a {
        self.slot_points(slot)
            .filter(move |&(_, x, y)| near_edge(edges, x, y))
            .map(|(a, _, _)| a)
    }

    pub fn occupancy(&self, edges: &EdgeMap) -> Result<Vec<f64>> {
        self.check(edges)?;
        Ok(SlotIndex::all(&self.spec)
            .map(|slot| {
                if self.slot_hits(edges, slot).next().is_some() {
                    1.0
                } else {
                    0.0
                }
            })
            .collect())
    }

    pub fn slot_centroid(&self, edges: &EdgeMap, slot: SlotIndex) -> Result<Option<f64>> {
        self.check(edges)?;
        Ok(centroid(self.slot_hits(edges, slot)))
    }

    fn centroids(&self, edges: &EdgeMap) -> Vec<Option<f64>> {
        SlotIndex::all(&self.spec)
            .map(|slot| centroid(self.slot_hits(edges, slot)))
            .collect()
    }

    pub fn velocity(&self, frames: &[EdgeMap]) -> Result<Vec<f64>> {
        if frames.len() < 2 {
            return Err(Error::InvalidParameter(format!(
                "velocity needs at least 2 frames, got {}",
                frames.len()
            )));
        }
        for f in frames {
            self.check(f)?;
        }
        let per_frame: Vec<Vec<Option<f64>>> = frames.iter().map(|f| self.centroids(f)).collect();
        Ok((0..self.spec.slot_count())
            .map(|s| {
                let (sum, pairs) = per_frame.windows(2).fold((0.0, 0usize), |(sum, n), pair| {
                    match (pair[0][s], pair[1][s]) {
                        (Some(a), Some(b)) => (sum + (b - a).abs(), n + 1),
                        _ => (sum, n),
                    }
                });
                if pairs == 0 {
                    0.0
                } else {
                    sum / pairs as f64
                }
            })
            .collect())
    }
}

fn centroid(hits: impl Iterator<Item = usize>) -> Option<f64> {
    let (sum, n) = hits.fold((0usize, 0usize), |(s, n), a| (s + a, n + 1));
    (n > 0).then(|| sum as f64 / n as f64)
}

/// Any edge pixel in the 3x3 neighborhood of `(x, y)`.
#[inline]
fn near_edge(edges: &EdgeMap, x: usize, y: usize) -> bool {
    let x_hi = (x + 1).min(edges.width() - 1);
    let y_hi = (y + 1).min(edges.height() - 1);
    (y.saturating_sub(1)..=y_hi)
        .any(|ny| (x.saturating_sub(1)..=x_hi).any(|nx| edges.get(nx, ny)))
}

/// Static slot values: 1 where an edge crosses the slot, else 0.
pub fn occupancy(edges: &EdgeMap, spec: &GridSpec) -> Result<Vec<f64>> {
    GridLayout::new(edges.width(), edges.height(), *spec)?.occupancy(edges)
}

/// Mean along-line offset of the slot's edge-touching sample points.
pub fn slot_centroid(edges: &EdgeMap, slot: SlotIndex, spec: &GridSpec) -> Result<Option<f64>> {
    GridLayout::new(edges.width(), edges.height(), *spec)?.slot_centroid(edges, slot)
}

/// Per-slot mean absolute centroid displacement between consecutive frames,
/// in pixels per frame; 0 for slots without a pair of occupied frames.
pub fn velocity_features(window: &[EdgeMap], spec: &GridSpec) -> Result<Vec<f64>> {
    let first = window.first().ok_or_else(|| {
        Error::InvalidParameter("velocity needs at least 2 frames, got 0".into())
    })?;
    GridLayout::new(first.width(), first.height(), *spec)?.velocity(window)
}

/// Which frame of a window supplies the static features.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum ReferenceFrame {
    #[default]
    First,
    Middle,
    Last,
}

impl ReferenceFrame {
    pub fn index(self, len: usize) -> usize {
        match self {
            ReferenceFrame::First => 0,
            ReferenceFrame::Middle => len / 2,
            ReferenceFrame::Last => len - 1,
        }
    }
}

impl std::str::FromStr for ReferenceFrame {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "first" => Ok(ReferenceFrame::First),
            "middle" => Ok(ReferenceFrame::Middle),
            "last" => Ok(ReferenceFrame::Last),
            _ => Err(Error::InvalidParameter(format!("unknown reference frame {s:?}"))),
        }
    }
}

/// Static occupancy followed by slot velocities for one window.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureVector {
    pub sequence_id: String,
    pub start_index: usize,
    /// `slot_count` static values then `slot_count` velocities.
    pub values: Vec<f64>,
    pub label: Option<Emotion>,
}

impl FeatureVector {
    pub fn slot_count(&self) -> usize {
        self.values.len() / 2
    }

    pub fn static_part(&self) -> &[f64] {
        &self.values[..self.slot_count()]
    }

    pub fn velocity_part(&self) -> &[f64] {
        &self.values[self.slot_count()..]
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Runs Canny on every frame of the window and assembles its feature vector.
pub fn extract(
    window: &Window,
    edge_params: &EdgeParams,
    spec: &GridSpec,
    reference: ReferenceFrame,
) -> Result<FeatureVector> {
    let edges = window
        .frames
        .iter()
        .map(|f| canny(f, edge_params))
        .collect::<Result<Vec<_>>>()?;
    extract_from_edges(&window.sequence_id, window.start_index, &edges, spec, reference)
}

/// Feature assembly over precomputed edge maps.
pub fn extract_from_edges(
    sequence_id: &str,
    start_index: usize,
    edges: &[EdgeMap],
    spec: &GridSpec,
    reference: ReferenceFrame,
) -> Result<FeatureVector> {
    if edges.len() < 2 {
        return Err(Error::InvalidParameter(format!(
            "window needs at least 2 frames, got {}",
            edges.len()
        )));
    }
    let layout = GridLayout::new(edges[0].width(), edges[0].height(), *spec)?;
    let mut values = layout.occupancy(&edges[reference.index(edges.len())])?;
    values.extend(layout.velocity(edges)?);
    Ok(FeatureVector {
        sequence_id: sequence_id.to_string(),
        start_index,
        values,
        label: None,
    })
}

/// Writes the feature CSV: `sequence_id,start_index,s_000…,v_000…,label`.
pub fn write_features_csv<W: Write>(rows: &[FeatureVector], mut out: W) -> Result<()> {
    let io = |e| Error::io("<features csv>", e);
    let slots = rows.first().map_or(0, FeatureVector::slot_count);
    if let Some(bad) = rows.iter().find(|r| r.slot_count() != slots || r.len() % 2 != 0) {
        return Err(Error::Dimension(format!(
            "row {}:{} has {} values, expected {}",
            bad.sequence_id,
            bad.start_index,
            bad.len(),
            2 * slots
        )));
    }
    let mut header = String::from("sequence_id,start_index");
    for prefix in ["s", "v"] {
        for i in 0..slots {
            write!(header, ",{prefix}_{i:03}").unwrap();
        }
    }
    header.push_str(",label\n");
    out.write_all(header.as_bytes()).map_err(io)?;
    for row in rows {
        if row.sequence_id.contains([',', '\n', '"']) {
            return Err(Error::Format(format!(
                "sequence id {:?} cannot be written to CSV",
                row.sequence_id
            )));
        }
        let mut line = format!("{},{}", row.sequence_id, row.start_index);
        for v in &row.values {
            write!(line, ",{v}").unwrap();
        }
        line.push(',');
        if let Some(label) = row.label {
            line.push_str(label.name());
        }
        line.push('\n');
        out.write_all(line.as_bytes()).map_err(io)?;
    }
    Ok(())
}

/// Parses a feature CSV written by [`write_features_csv`].
pub fn read_features_csv<R: BufRead>(input: R) -> Result<Vec<FeatureVector>> {
    let mut lines = input.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::Format("empty feature file".into()))?
        .map_err(|e| Error::io("<features csv>", e))?;
    let cols: Vec<&str> = header.trim_end().split(',').collect();
    if cols.len() < 3
        || cols[0] != "sequence_id"
        || cols[1] != "start_index"
        || cols[cols.len() - 1] != "label"
    {
        return Err(Error::Format("unexpected feature CSV header".into()));
    }
    let n_values = cols.len() - 3;
    let n_static = cols.iter().filter(|c| c.starts_with("s_")).count();
    if !n_values.is_multiple_of(2) || n_static * 2 != n_values {
        return Err(Error::Format(format!(
            "header has {n_static} static columns among {n_values} values"
        )));
    }
    let mut rows = Vec::new();
    for (lineno, line) in lines.enumerate() {
        let line = line.map_err(|e| Error::io("<features csv>", e))?;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.trim_end().split(',').collect();
        if fields.len() != cols.len() {
            return Err(Error::Format(format!(
                "line {}: {} fields, expected {}",
                lineno + 2,
                fields.len(),
                cols.len()
            )));
        }
        let start_index = fields[1]
            .parse()
            .map_err(|_| Error::Format(format!("line {}: bad start_index", lineno + 2)))?;
        let values = fields[2..2 + n_values]
            .iter()
            .map(|f| {
                f.parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| Error::Format(format!("line {}: bad value {f:?}", lineno + 2)))
            })
            .collect::<Result<Vec<_>>>()?;
        let label_field = fields[fields.len() - 1];
        let label = if label_field.is_empty() {
            None
        } else {
            Some(label_field.parse()?)
        };
        rows.push(FeatureVector {
            sequence_id: fields[0].to_string(),
            start_index,
            values,
            label,
        });
    }
    Ok(rows)
}
