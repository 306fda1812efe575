//! Frame loading, grayscale normalization, temporal down-sampling and
//! fixed-length window extraction.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};

/// A normalized grayscale raster. Intensities are row-major and lie in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct GrayFrame {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl GrayFrame {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::Dimension(format!(
                "frame must be non-empty, got {width}x{height}"
            )));
        }
        if data.len() != width * height {
            return Err(Error::Dimension(format!(
                "{} intensities for a {width}x{height} frame",
                data.len()
            )));
        }
        if let Some(v) = data.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::Numeric(format!("intensity {v} outside [0, 1]")));
        }
        Ok(GrayFrame {
            width,
            height,
            data,
        })
    }

    /// Builds a frame by evaluating `f(x, y)`; values are clamped into `[0, 1]`.
    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        assert!(width > 0 && height > 0, "frame must be non-empty");
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                let v = f(x, y);
                data.push(if v.is_nan() { 0.0 } else { v.clamp(0.0, 1.0) });
            }
        }
        GrayFrame {
            width,
            height,
            data,
        }
    }

    pub fn constant(width: usize, height: usize, value: f64) -> Self {
        GrayFrame::from_fn(width, height, |_, _| value)
    }

    /// Wraps already-clamped data without re-validating it.
    pub(crate) fn from_raw_unchecked(width: usize, height: usize, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), width * height);
        GrayFrame {
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

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    /// Transposed copy (rows become columns).
    pub fn transpose(&self) -> GrayFrame {
        GrayFrame::from_fn(self.height, self.width, |x, y| self.get(y, x))
    }

    /// Encodes as binary 8-bit PGM (`P5`).
    pub fn to_pgm_bytes(&self) -> Vec<u8> {
        let mut out = format!("P5\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend(self.data.iter().map(|v| (v * 255.0).round() as u8));
        out
    }

    pub fn save_pgm(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(&self.to_pgm_bytes())
            .map_err(|e| Error::io(path, e))
    }
}

/// ITU BT.601 luma of an RGB triple, in the source units.
pub fn luma(r: f64, g: f64, b: f64) -> f64 {
    0.299 * r + 0.587 * g + 0.114 * b
}

/// Loads a frame from a binary PGM or (with the `png` feature) a PNG file.
pub fn load_frame(path: impl AsRef<Path>) -> Result<GrayFrame> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_frame(&bytes)
}

/// Decodes an in-memory raster, dispatching on its magic bytes.
pub fn decode_frame(bytes: &[u8]) -> Result<GrayFrame> {
    if bytes.starts_with(b"P5") {
        decode_pgm(bytes)
    } else if bytes.starts_with(b"\x89PNG") {
        decode_png(bytes)
    } else {
        Err(Error::Format("unsupported raster format".into()))
    }
}

struct HeaderCursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl HeaderCursor<'_> {
    fn skip_space_and_comments(&mut self) {
        while self.pos < self.bytes.len() {
            match self.bytes[self.pos] {
                b'#' => {
                    while self.pos < self.bytes.len() && self.bytes[self.pos] != b'\n' {
                        self.pos += 1;
                    }
                }
                c if c.is_ascii_whitespace() => self.pos += 1,
                _ => break,
            }
        }
    }

    fn number(&mut self) -> Result<usize> {
        self.skip_space_and_comments();
        let start = self.pos;
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        std::str::from_utf8(&self.bytes[start..self.pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::Format("malformed PGM header".into()))
    }
}

fn decode_pgm(bytes: &[u8]) -> Result<GrayFrame> {
    let mut cur = HeaderCursor { bytes, pos: 2 };
    let width = cur.number()?;
    let height = cur.number()?;
    let maxval = cur.number()?;
    if width == 0 || height == 0 {
        return Err(Error::Format("zero-dimension image".into()));
    }
    if maxval == 0 || maxval > 65535 {
        return Err(Error::Format(format!("bad PGM maxval {maxval}")));
    }
    // exactly one whitespace byte separates the header from the raster
    if cur.pos >= bytes.len() || !bytes[cur.pos].is_ascii_whitespace() {
        return Err(Error::Format("malformed PGM header".into()));
    }
    let raster = &bytes[cur.pos + 1..];
    let n = width * height;
    let scale = maxval as f64;
    let data: Vec<f64> = if maxval < 256 {
        if raster.len() < n {
            return Err(Error::Format("truncated PGM raster".into()));
        }
        raster[..n].iter().map(|&p| p as f64 / scale).collect()
    } else {
        if raster.len() < 2 * n {
            return Err(Error::Format("truncated PGM raster".into()));
        }
        raster[..2 * n]
            .chunks_exact(2)
            .map(|c| u16::from_be_bytes([c[0], c[1]]) as f64 / scale)
            .collect()
    };
    if data.iter().any(|&v| v > 1.0) {
        return Err(Error::Format("PGM sample exceeds maxval".into()));
    }
    Ok(GrayFrame::from_raw_unchecked(width, height, data))
}

#[cfg(feature = "png")]
fn decode_png(bytes: &[u8]) -> Result<GrayFrame> {
    use image::DynamicImage;

    let img = image::load_from_memory_with_format(bytes, image::ImageFormat::Png)
        .map_err(|e| Error::Format(format!("png: {e}")))?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    if w == 0 || h == 0 {
        return Err(Error::Format("zero-dimension image".into()));
    }
    let data: Vec<f64> = match img {
        DynamicImage::ImageLuma8(buf) => buf.into_raw().iter().map(|&p| p as f64 / 255.0).collect(),
        DynamicImage::ImageLuma16(buf) => buf
            .into_raw()
            .iter()
            .map(|&p| p as f64 / 65535.0)
            .collect(),
        DynamicImage::ImageRgb8(buf) => buf
            .pixels()
            .map(|p| luma(p[0] as f64, p[1] as f64, p[2] as f64) / 255.0)
            .collect(),
        other => other
            .to_rgb8()
            .pixels()
            .map(|p| luma(p[0] as f64, p[1] as f64, p[2] as f64) / 255.0)
            .collect(),
    };
    Ok(GrayFrame::from_fn(w, h, |x, y| data[y * w + x]))
}

#[cfg(not(feature = "png"))]
fn decode_png(_bytes: &[u8]) -> Result<GrayFrame> {
    Err(Error::Format("PNG support not compiled in".into()))
}

/// An ordered list of equally sized frames.
#[derive(Clone, Debug, PartialEq)]
pub struct FrameSequence {
    frames: Vec<GrayFrame>,
    source_fps: f64,
}

impl FrameSequence {
    pub fn new(frames: Vec<GrayFrame>, source_fps: f64) -> Result<Self> {
        if !(source_fps > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "frame rate must be positive, got {source_fps}"
            )));
        }
        if let Some(first) = frames.first() {
            let (w, h) = (first.width(), first.height());
            if let Some(bad) = frames.iter().find(|f| f.width() != w || f.height() != h) {
                return Err(Error::Dimension(format!(
                    "sequence mixes {w}x{h} and {}x{} frames",
                    bad.width(),
                    bad.height()
                )));
            }
        }
        Ok(FrameSequence { frames, source_fps })
    }

    pub fn frames(&self) -> &[GrayFrame] {
        &self.frames
    }

    pub fn source_fps(&self) -> f64 {
        self.source_fps
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }
}

/// Loads every `.pgm`/`.png` file in `dir`, sorted lexicographically by name.
pub fn load_sequence(dir: impl AsRef<Path>, source_fps: f64) -> Result<FrameSequence> {
    let dir = dir.as_ref();
    let mut paths: Vec<_> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| {
            p.is_file()
                && p.extension()
                    .and_then(|e| e.to_str())
                    .is_some_and(|e| e.eq_ignore_ascii_case("pgm") || e.eq_ignore_ascii_case("png"))
        })
        .collect();
    paths.sort_by(|a, b| a.file_name().cmp(&b.file_name()));
    let frames = paths.iter().map(load_frame).collect::<Result<Vec<_>>>()?;
    FrameSequence::new(frames, source_fps)
}

/// Keeps frames `0, k, 2k, …` and divides the frame rate by `k`.
pub fn downsample(seq: &FrameSequence, keep_every: usize) -> Result<FrameSequence> {
    if keep_every == 0 {
        return Err(Error::InvalidParameter("keep_every must be >= 1".into()));
    }
    Ok(FrameSequence {
        frames: seq.frames.iter().step_by(keep_every).cloned().collect(),
        source_fps: seq.source_fps / keep_every as f64,
    })
}

/// A run of exactly `w` consecutive frames from one sequence.
#[derive(Clone, Debug)]
pub struct Window {
    pub frames: Vec<GrayFrame>,
    pub sequence_id: String,
    /// Offset of the first frame in the down-sampled sequence.
    pub start_index: usize,
}

/// Number of windows `windows` produces; `max(0, (len - w) / stride + 1)`.
pub fn window_count(len: usize, w: usize, stride: usize) -> usize {
    if len < w || stride == 0 {
        0
    } else {
        (len - w) / stride + 1
    }
}

/// Splits a sequence into full windows of `w` frames advancing by `stride`.
/// Trailing frames that cannot fill a window are dropped.
pub fn windows(
    seq: &FrameSequence,
    sequence_id: &str,
    w: usize,
    stride: usize,
) -> Result<Vec<Window>> {
    if w < 2 {
        return Err(Error::InvalidParameter(format!("window length {w} < 2")));
    }
    if stride == 0 {
        return Err(Error::InvalidParameter("stride must be >= 1".into()));
    }
    Ok((0..window_count(seq.len(), w, stride))
        .map(|i| {
            let start = i * stride;
            Window {
                frames: seq.frames[start..start + w].to_vec(),
                sequence_id: sequence_id.to_string(),
                start_index: start,
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn tagged_seq(n: usize, fps: f64) -> FrameSequence {
        // frame i is uniformly i/255 so identity survives cloning
        let frames = (0..n)
            .map(|i| GrayFrame::constant(2, 2, i as f64 / 255.0))
            .collect();
        FrameSequence::new(frames, fps).unwrap()
    }

    fn tags(seq: &FrameSequence) -> Vec<usize> {
        seq.frames()
            .iter()
            .map(|f| (f.get(0, 0) * 255.0).round() as usize)
            .collect()
    }

    #[test]
    fn pgm_normalizes_linearly() {
        let bytes = b"P5\n2 2\n255\n\x00\xff\x80\x40";
        let f = decode_frame(bytes).unwrap();
        assert_eq!(f.data(), &[0.0, 1.0, 128.0 / 255.0, 64.0 / 255.0]);
    }

    #[test]
    fn pgm_with_comments_and_zeros() {
        let bytes = b"P5 # comment\n3 1 # dims\n255\n\x00\x00\x00";
        let f = decode_frame(bytes).unwrap();
        assert_eq!(f.data(), &[0.0; 3]);
    }

    #[test]
    fn pgm_errors() {
        assert!(matches!(decode_frame(b"P5\n0 2\n255\n"), Err(Error::Format(_))));
        assert!(matches!(decode_frame(b"P5\n2 2\n255\n\x00"), Err(Error::Format(_))));
        assert!(matches!(decode_frame(b"GIF89a"), Err(Error::Format(_))));
        assert!(matches!(
            load_frame("/nonexistent/frame.pgm"),
            Err(Error::Io { .. })
        ));
    }

    #[test]
    fn sixteen_bit_pgm() {
        let bytes = b"P5\n1 1\n65535\n\xff\xff";
        assert_eq!(decode_frame(bytes).unwrap().data(), &[1.0]);
    }

    #[test]
    fn luma_of_pure_red() {
        assert!((luma(255.0, 0.0, 0.0) / 255.0 - 0.299).abs() < 1e-12);
    }

    #[cfg(feature = "png")]
    #[test]
    fn png_rgb_uses_luma() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("red.png");
        image::RgbImage::from_pixel(1, 1, image::Rgb([255, 0, 0]))
            .save(&path)
            .unwrap();
        let f = load_frame(&path).unwrap();
        assert!((f.data()[0] - 0.299).abs() < 1e-12);
    }

    #[test]
    fn invalid_frames_rejected() {
        assert!(GrayFrame::new(0, 1, vec![]).is_err());
        assert!(GrayFrame::new(2, 1, vec![0.0]).is_err());
        assert!(GrayFrame::new(1, 1, vec![1.5]).is_err());
        let a = GrayFrame::constant(2, 2, 0.0);
        let b = GrayFrame::constant(3, 2, 0.0);
        assert!(FrameSequence::new(vec![a, b], 24.0).is_err());
    }

    #[test]
    fn downsample_24_to_8() {
        let seq = tagged_seq(24, 24.0);
        let d = downsample(&seq, 3).unwrap();
        assert_eq!(d.len(), 8);
        assert_eq!(d.source_fps(), 8.0);
    }

    #[test]
    fn downsample_identity_and_partial() {
        let seq = tagged_seq(7, 24.0);
        assert_eq!(downsample(&seq, 1).unwrap(), seq);
        assert_eq!(tags(&downsample(&seq, 3).unwrap()), vec![0, 3, 6]);
        let empty = FrameSequence::new(vec![], 24.0).unwrap();
        assert!(downsample(&empty, 3).unwrap().is_empty());
        assert!(downsample(&seq, 0).is_err());
    }

    #[test]
    fn window_enumeration() {
        let w = |n| windows(&tagged_seq(n, 8.0), "s", 8, 8).unwrap();
        assert_eq!(w(8).len(), 1);
        let two = w(16);
        assert_eq!(two.len(), 2);
        assert_eq!(two[1].start_index, 8);
        assert_eq!(two[1].frames[0].get(0, 0), 8.0 / 255.0);
        assert_eq!(w(9).len(), 1);
        assert!(w(7).is_empty());
        assert!(windows(&tagged_seq(4, 8.0), "s", 1, 1).is_err());
    }

    #[test]
    fn save_load_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("f.pgm");
        let f = GrayFrame::from_fn(5, 3, |x, y| ((x * 37 + y * 91) % 256) as f64 / 255.0);
        f.save_pgm(&path).unwrap();
        assert_eq!(load_frame(&path).unwrap(), f);
    }

    proptest! {
        #[test]
        fn downsample_composes(n in 0usize..60, a in 1usize..5, b in 1usize..5) {
            let seq = tagged_seq(n, 24.0);
            let twice = downsample(&downsample(&seq, a).unwrap(), b).unwrap();
            let once = downsample(&seq, a * b).unwrap();
            prop_assert_eq!(tags(&twice), tags(&once));
        }

        #[test]
        fn window_count_law(len in 0usize..80, w in 2usize..12, stride in 1usize..10) {
            let ws = windows(&tagged_seq(len, 8.0), "s", w, stride).unwrap();
            let expected = if len >= w { (len - w) / stride + 1 } else { 0 };
            prop_assert_eq!(ws.len(), expected);
            prop_assert!(ws.iter().all(|win| win.frames.len() == w));
        }

        #[test]
        fn pgm_bytes_round_trip(pixels in proptest::collection::vec(any::<u8>(), 12)) {
            let mut bytes = b"P5\n4 3\n255\n".to_vec();
            bytes.extend(&pixels);
            let f = decode_frame(&bytes).unwrap();
            prop_assert_eq!(f.to_pgm_bytes(), bytes);
        }
    }
}
