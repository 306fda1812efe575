//! Canny edge detection driven by a single normalized threshold.
//!
//! The detector runs the classic four stages: Gaussian smoothing, Sobel
//! gradients, non-maximum suppression along the quantized gradient direction,
//! and hysteresis linking. Gradient magnitudes are divided by their frame-wide
//! maximum, so `threshold_t` is a fraction of the strongest edge in the frame
//! and does not depend on contrast.

use std::f64::consts::PI;
use std::path::Path;

use crate::error::{Error, Result};
use crate::imaging::GrayFrame;

/// Maximum gradient magnitudes at or below this are treated as a flat frame.
const FLAT_GRADIENT: f64 = 1e-12;

/// A real-valued row-major raster (gradient magnitude, direction, …).
#[derive(Clone, Debug, PartialEq)]
pub struct Raster {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f64>,
}

impl Raster {
    pub fn zeros(width: usize, height: usize) -> Self {
        Raster {
            width,
            height,
            data: vec![0.0; width * height],
        }
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }
}

/// Binary edge raster, `true` marks an edge pixel.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct EdgeMap {
    width: usize,
    height: usize,
    data: Vec<bool>,
}

impl EdgeMap {
    pub fn new(width: usize, height: usize, data: Vec<bool>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::Dimension(format!(
                "{} cells for a {width}x{height} edge map",
                data.len()
            )));
        }
        Ok(EdgeMap {
            width,
            height,
            data,
        })
    }

    pub fn empty(width: usize, height: usize) -> Self {
        EdgeMap {
            width,
            height,
            data: vec![false; width * height],
        }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        EdgeMap {
            width,
            height,
            data,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[bool] {
        &self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> bool {
        self.data[y * self.width + x]
    }

    pub fn set(&mut self, x: usize, y: usize, value: bool) {
        self.data[y * self.width + x] = value;
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&e| e).count()
    }

    /// True when every edge pixel of `self` is also an edge pixel of `other`.
    pub fn is_subset_of(&self, other: &EdgeMap) -> bool {
        self.width == other.width
            && self.height == other.height
            && self.data.iter().zip(&other.data).all(|(&a, &b)| !a || b)
    }

    /// Coordinates of all edge pixels in row-major order.
    pub fn pixels(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.data
            .iter()
            .enumerate()
            .filter(|(_, &e)| e)
            .map(|(i, _)| (i % self.width, i / self.width))
    }

    /// Renders edges as white (1.0) on black, e.g. for a PGM debug dump.
    pub fn to_frame(&self) -> GrayFrame {
        GrayFrame::from_fn(self.width, self.height, |x, y| {
            if self.get(x, y) {
                1.0
            } else {
                0.0
            }
        })
    }

    pub fn save_pgm(&self, path: impl AsRef<Path>) -> Result<()> {
        self.to_frame().save_pgm(path)
    }
}

/// Parameters of the detector.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EdgeParams {
    threshold_t: f64,
    low_ratio: f64,
    gaussian_sigma: f64,
}

impl EdgeParams {
    pub const DEFAULT_LOW_RATIO: f64 = 0.5;
    pub const DEFAULT_SIGMA: f64 = 1.4;

    pub fn new(threshold_t: f64, low_ratio: f64, gaussian_sigma: f64) -> Result<Self> {
        if !(threshold_t > 0.0 && threshold_t < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "edge threshold {threshold_t} not in (0, 1)"
            )));
        }
        if !(low_ratio > 0.0 && low_ratio <= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "low ratio {low_ratio} not in (0, 1]"
            )));
        }
        if !(gaussian_sigma > 0.0 && gaussian_sigma.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "sigma {gaussian_sigma} must be positive"
            )));
        }
        Ok(EdgeParams {
            threshold_t,
            low_ratio,
            gaussian_sigma,
        })
    }

    /// Default low ratio and sigma with the given high threshold.
    pub fn with_threshold(threshold_t: f64) -> Result<Self> {
        EdgeParams::new(threshold_t, Self::DEFAULT_LOW_RATIO, Self::DEFAULT_SIGMA)
    }

    pub fn threshold_t(&self) -> f64 {
        self.threshold_t
    }

    pub fn low_ratio(&self) -> f64 {
        self.low_ratio
    }

    pub fn gaussian_sigma(&self) -> f64 {
        self.gaussian_sigma
    }

    pub fn low_threshold(&self) -> f64 {
        self.threshold_t * self.low_ratio
    }
}

impl Default for EdgeParams {
    fn default() -> Self {
        EdgeParams {
            threshold_t: 0.4,
            low_ratio: Self::DEFAULT_LOW_RATIO,
            gaussian_sigma: Self::DEFAULT_SIGMA,
        }
    }
}

/// Normalized 1-D Gaussian kernel of radius `ceil(3 sigma)`.
pub fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let radius = (3.0 * sigma).ceil() as isize;
    let mut k: Vec<f64> = (-radius..=radius)
        .map(|i| (-((i * i) as f64) / (2.0 * sigma * sigma)).exp())
        .collect();
    let sum: f64 = k.iter().sum();
    k.iter_mut().for_each(|w| *w /= sum);
    k
}

#[inline]
fn clamp_index(i: isize, len: usize) -> usize {
    i.clamp(0, len as isize - 1) as usize
}

/// Separable Gaussian blur with clamp-to-edge borders.
pub fn gaussian_blur(frame: &GrayFrame, sigma: f64) -> Result<GrayFrame> {
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(Error::InvalidParameter(format!("sigma {sigma} must be positive")));
    }
    let kernel = gaussian_kernel(sigma);
    let radius = (kernel.len() / 2) as isize;
    let (w, h) = (frame.width(), frame.height());
    let src = frame.data();

    let mut horiz = vec![0.0; w * h];
    for y in 0..h {
        let row = &src[y * w..(y + 1) * w];
        for x in 0..w {
            horiz[y * w + x] = kernel
                .iter()
                .enumerate()
                .map(|(k, wt)| wt * row[clamp_index(x as isize + k as isize - radius, w)])
                .sum();
        }
    }
    let mut out = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            let v: f64 = kernel
                .iter()
                .enumerate()
                .map(|(k, wt)| wt * horiz[clamp_index(y as isize + k as isize - radius, h) * w + x])
                .sum();
            out[y * w + x] = v.clamp(0.0, 1.0);
        }
    }
    Ok(GrayFrame::from_raw_unchecked(w, h, out))
}

/// Sobel gradients: magnitude normalized into `[0, 1]` by its maximum, and
/// direction `atan2(gy, gx)` in `(-pi, pi]` with `y` growing downwards.
pub fn gradients(frame: &GrayFrame) -> Result<(Raster, Raster)> {
    let (w, h) = (frame.width(), frame.height());
    if w < 3 || h < 3 {
        return Err(Error::Dimension(format!(
            "gradients need at least 3x3, got {w}x{h}"
        )));
    }
    let px = |x: isize, y: isize| frame.get(clamp_index(x, w), clamp_index(y, h));
    let mut magnitude = Raster::zeros(w, h);
    let mut direction = Raster::zeros(w, h);
    for y in 0..h as isize {
        for x in 0..w as isize {
            let gx = (px(x + 1, y - 1) + 2.0 * px(x + 1, y) + px(x + 1, y + 1))
                - (px(x - 1, y - 1) + 2.0 * px(x - 1, y) + px(x - 1, y + 1));
            let gy = (px(x - 1, y + 1) + 2.0 * px(x, y + 1) + px(x + 1, y + 1))
                - (px(x - 1, y - 1) + 2.0 * px(x, y - 1) + px(x + 1, y - 1));
            let i = y as usize * w + x as usize;
            magnitude.data[i] = gx.hypot(gy);
            let mut theta = gy.atan2(gx);
            if theta <= -PI {
                theta = PI;
            }
            direction.data[i] = theta;
        }
    }
    let max = magnitude.data.iter().copied().fold(0.0, f64::max);
    if max > FLAT_GRADIENT {
        magnitude.data.iter_mut().for_each(|m| *m /= max);
    } else {
        magnitude.data.iter_mut().for_each(|m| *m = 0.0);
    }
    Ok((magnitude, direction))
}

/// Neighbor offsets along the gradient for a direction in radians,
/// quantized to 0, 45, 90 or 135 degrees.
fn gradient_neighbors(theta: f64) -> (isize, isize) {
    let mut deg = theta.to_degrees() % 180.0;
    if deg < 0.0 {
        deg += 180.0;
    }
    if !(22.5..157.5).contains(&deg) {
        (1, 0)
    } else if deg < 67.5 {
        (1, 1)
    } else if deg < 112.5 {
        (0, 1)
    } else {
        (-1, 1)
    }
}

/// Keeps a pixel iff its magnitude is `>=` both in-bounds neighbors along the
/// quantized gradient direction; everything else becomes 0.
pub fn non_max_suppression(magnitude: &Raster, direction: &Raster) -> Result<Raster> {
    if magnitude.width != direction.width || magnitude.height != direction.height {
        return Err(Error::Dimension("magnitude and direction differ in size".into()));
    }
    let (w, h) = (magnitude.width, magnitude.height);
    let mut out = Raster::zeros(w, h);
    for y in 0..h {
        for x in 0..w {
            let m = magnitude.get(x, y);
            if m <= 0.0 {
                continue;
            }
            let (dx, dy) = gradient_neighbors(direction.get(x, y));
            let keep = [(dx, dy), (-dx, -dy)].iter().all(|&(ox, oy)| {
                let nx = x as isize + ox;
                let ny = y as isize + oy;
                if nx < 0 || ny < 0 || nx >= w as isize || ny >= h as isize {
                    true
                } else {
                    m >= magnitude.get(nx as usize, ny as usize)
                }
            });
            if keep {
                out.data[y * w + x] = m;
            }
        }
    }
    Ok(out)
}

/// Double-threshold linking: strong pixels (`>= t`) plus weak pixels
/// (`>= t * low_ratio`) 8-connected to a strong pixel through weak ones.
pub fn hysteresis(suppressed: &Raster, params: &EdgeParams) -> EdgeMap {
    let (w, h) = (suppressed.width, suppressed.height);
    let high = params.threshold_t();
    let low = params.low_threshold();
    let mut edges = EdgeMap::empty(w, h);
    let mut stack: Vec<(usize, usize)> = Vec::new();
    for y in 0..h {
        for x in 0..w {
            if suppressed.get(x, y) >= high && !edges.get(x, y) {
                edges.set(x, y, true);
                stack.push((x, y));
                while let Some((cx, cy)) = stack.pop() {
                    for ny in cy.saturating_sub(1)..=(cy + 1).min(h - 1) {
                        for nx in cx.saturating_sub(1)..=(cx + 1).min(w - 1) {
                            if !edges.get(nx, ny) && suppressed.get(nx, ny) >= low {
                                edges.set(nx, ny, true);
                                stack.push((nx, ny));
                            }
                        }
                    }
                }
            }
        }
    }
    edges
}

/// Full detector: blur, gradients, non-maximum suppression, hysteresis.
pub fn canny(frame: &GrayFrame, params: &EdgeParams) -> Result<EdgeMap> {
    let blurred = gaussian_blur(frame, params.gaussian_sigma())?;
    let (magnitude, direction) = gradients(&blurred)?;
    let thin = non_max_suppression(&magnitude, &direction)?;
    Ok(hysteresis(&thin, params))
}
