//! Raw video input (Y4M and headerless planar YUV), luma frame buffers and
//! PSNR.
//!
//! Only the luma plane is kept; chroma bytes are skipped while reading.

use std::fs;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};

/// PSNR reported for a lossless frame pair.
pub const PSNR_CAP_DB: f64 = 100.0;

/// One 8-bit luma plane, row-major.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FrameBuffer {
    width: usize,
    height: usize,
    samples: Vec<u8>,
}

impl FrameBuffer {
    pub fn new(width: usize, height: usize, samples: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 || width % 8 != 0 || height % 8 != 0 {
            return Err(Error::DimensionNotMultipleOf8 { width, height });
        }
        if samples.len() != width * height {
            return Err(Error::SizeMismatch {
                expected: (width * height) as u64,
                actual: samples.len() as u64,
            });
        }
        Ok(FrameBuffer {
            width,
            height,
            samples,
        })
    }

    pub fn filled(width: usize, height: usize, value: u8) -> Result<Self> {
        Self::new(width, height, vec![value; width * height])
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn samples(&self) -> &[u8] {
        &self.samples
    }

    #[inline]
    pub fn samples_mut(&mut self) -> &mut [u8] {
        &mut self.samples
    }

    #[inline]
    pub fn at(&self, x: usize, y: usize) -> u8 {
        self.samples[y * self.width + x]
    }

    #[inline]
    pub fn row(&self, y: usize) -> &[u8] {
        &self.samples[y * self.width..(y + 1) * self.width]
    }

    /// Copies a `w`x`h` block whose top-left corner is `(x, y)` into the frame.
    pub fn write_block(&mut self, x: usize, y: usize, w: usize, h: usize, block: &[u8]) {
        debug_assert_eq!(block.len(), w * h);
        for r in 0..h {
            let dst = (y + r) * self.width + x;
            self.samples[dst..dst + w].copy_from_slice(&block[r * w..(r + 1) * w]);
        }
    }
}

/// Frames in display order.
#[derive(Clone, Debug, PartialEq)]
pub struct VideoSequence {
    pub frames: Vec<FrameBuffer>,
    pub frame_rate: f64,
}

impl VideoSequence {
    pub fn new(frames: Vec<FrameBuffer>, frame_rate: f64) -> Result<Self> {
        if let Some(first) = frames.first() {
            for f in &frames[1..] {
                if f.width != first.width || f.height != first.height {
                    return Err(Error::DimensionMismatch(
                        first.width,
                        first.height,
                        f.width,
                        f.height,
                    ));
                }
            }
        }
        Ok(VideoSequence { frames, frame_rate })
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn width(&self) -> usize {
        self.frames.first().map_or(0, |f| f.width)
    }

    pub fn height(&self) -> usize {
        self.frames.first().map_or(0, |f| f.height)
    }

    /// Keeps at most the first `count` frames.
    pub fn truncate(&mut self, count: usize) {
        self.frames.truncate(count);
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ChromaFormat {
    Yuv420,
    Monochrome,
}

impl ChromaFormat {
    /// Bytes of one frame (luma plus chroma) at the given luma size.
    pub fn frame_bytes(self, width: usize, height: usize) -> usize {
        let luma = width * height;
        match self {
            ChromaFormat::Yuv420 => luma + 2 * (width.div_ceil(2) * height.div_ceil(2)),
            ChromaFormat::Monochrome => luma,
        }
    }
}

impl FromStr for ChromaFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "420" => Ok(ChromaFormat::Yuv420),
            "400" => Ok(ChromaFormat::Monochrome),
            other => Err(Error::UnsupportedChroma(other.to_string())),
        }
    }
}

fn check_dims(width: usize, height: usize) -> Result<()> {
    if width == 0 || height == 0 || width % 8 != 0 || height % 8 != 0 {
        return Err(Error::DimensionNotMultipleOf8 { width, height });
    }
    Ok(())
}

struct Y4mHeader {
    width: usize,
    height: usize,
    frame_rate: f64,
    chroma: ChromaFormat,
}

fn parse_y4m_header(line: &str) -> Result<Y4mHeader> {
    let mut tokens = line.split_ascii_whitespace();
    if tokens.next() != Some("YUV4MPEG2") {
        return Err(Error::MalformedHeader("missing YUV4MPEG2 signature".into()));
    }
    let mut width = None;
    let mut height = None;
    let mut frame_rate = 25.0;
    let mut chroma = ChromaFormat::Yuv420;
    for tok in tokens {
        let (tag, value) = tok.split_at(1);
        let bad = || Error::MalformedHeader(format!("bad parameter {tok:?}"));
        match tag {
            "W" => width = Some(value.parse::<usize>().map_err(|_| bad())?),
            "H" => height = Some(value.parse::<usize>().map_err(|_| bad())?),
            "F" => {
                let (num, den) = value.split_once(':').ok_or_else(bad)?;
                let num: f64 = num.parse().map_err(|_| bad())?;
                let den: f64 = den.parse().map_err(|_| bad())?;
                if den > 0.0 {
                    frame_rate = num / den;
                }
            }
            "C" => {
                chroma = match value {
                    "420" | "420jpeg" | "420paldv" | "420mpeg2" => ChromaFormat::Yuv420,
                    "mono" => ChromaFormat::Monochrome,
                    other => return Err(Error::UnsupportedChroma(other.to_string())),
                }
            }
            // Interlacing, aspect ratio and extensions carry nothing we use.
            _ => {}
        }
    }
    let width = width.ok_or_else(|| Error::MalformedHeader("missing W".into()))?;
    let height = height.ok_or_else(|| Error::MalformedHeader("missing H".into()))?;
    Ok(Y4mHeader {
        width,
        height,
        frame_rate,
        chroma,
    })
}

fn read_file(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

/// Parses a Y4M stream held in memory.
pub fn parse_y4m(data: &[u8]) -> Result<VideoSequence> {
    let header_end = data
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| Error::MalformedHeader("header line not terminated".into()))?;
    let header = std::str::from_utf8(&data[..header_end])
        .map_err(|_| Error::MalformedHeader("header is not ASCII".into()))?;
    let hdr = parse_y4m_header(header)?;
    check_dims(hdr.width, hdr.height)?;

    let luma = hdr.width * hdr.height;
    let stride = hdr.chroma.frame_bytes(hdr.width, hdr.height);
    let mut frames = Vec::new();
    let mut pos = header_end + 1;
    while pos < data.len() {
        let index = frames.len();
        let line_end = data[pos..]
            .iter()
            .position(|&b| b == b'\n')
            .ok_or(Error::TruncatedFrame { frame: index })?;
        if !data[pos..pos + line_end].starts_with(b"FRAME") {
            return Err(Error::MalformedHeader(format!(
                "expected FRAME marker for frame {index}"
            )));
        }
        pos += line_end + 1;
        if data.len() - pos < stride {
            return Err(Error::TruncatedFrame { frame: index });
        }
        frames.push(FrameBuffer::new(
            hdr.width,
            hdr.height,
            data[pos..pos + luma].to_vec(),
        )?);
        pos += stride;
    }
    VideoSequence::new(frames, hdr.frame_rate)
}

pub fn load_y4m(path: impl AsRef<Path>) -> Result<VideoSequence> {
    parse_y4m(&read_file(path.as_ref())?)
}

/// Loads `count` frames of headerless planar video.
pub fn load_raw(
    path: impl AsRef<Path>,
    width: usize,
    height: usize,
    count: usize,
    chroma: ChromaFormat,
) -> Result<VideoSequence> {
    check_dims(width, height)?;
    let data = read_file(path.as_ref())?;
    let stride = chroma.frame_bytes(width, height);
    let expected = (stride * count) as u64;
    if (data.len() as u64) < expected {
        return Err(Error::SizeMismatch {
            expected,
            actual: data.len() as u64,
        });
    }
    let frames = (0..count)
        .map(|i| {
            let start = i * stride;
            FrameBuffer::new(width, height, data[start..start + width * height].to_vec())
        })
        .collect::<Result<Vec<_>>>()?;
    VideoSequence::new(frames, 25.0)
}

/// Writes a 4:2:0 Y4M stream with neutral (128) chroma.
pub fn write_y4m(out: &mut impl Write, seq: &VideoSequence) -> std::io::Result<()> {
    let (w, h) = (seq.width(), seq.height());
    let fps = seq.frame_rate.round().max(1.0) as u32;
    writeln!(out, "YUV4MPEG2 W{w} H{h} F{fps}:1 Ip A1:1 C420jpeg")?;
    let chroma = vec![128u8; ChromaFormat::Yuv420.frame_bytes(w, h) - w * h];
    for f in &seq.frames {
        out.write_all(b"FRAME\n")?;
        out.write_all(&f.samples)?;
        out.write_all(&chroma)?;
    }
    Ok(())
}

pub fn save_y4m(path: impl AsRef<Path>, seq: &VideoSequence) -> Result<()> {
    let path = path.as_ref();
    let mut buf = Vec::new();
    write_y4m(&mut buf, seq).map_err(|e| Error::io(path, e))?;
    fs::write(path, buf).map_err(|e| Error::io(path, e))
}

/// Sum of squared differences between two equally sized sample slices.
#[inline]
pub fn sse(a: &[u8], b: &[u8]) -> u64 {
    a.iter()
        .zip(b)
        .map(|(&x, &y)| {
            let d = x as i64 - y as i64;
            (d * d) as u64
        })
        .sum()
}

pub fn psnr_from_mse(mse: f64) -> f64 {
    if mse <= 0.0 {
        return PSNR_CAP_DB;
    }
    (10.0 * (255.0f64 * 255.0 / mse).log10()).min(PSNR_CAP_DB)
}

pub fn psnr(reference: &FrameBuffer, test: &FrameBuffer) -> Result<f64> {
    if reference.width != test.width || reference.height != test.height {
        return Err(Error::DimensionMismatch(
            reference.width,
            reference.height,
            test.width,
            test.height,
        ));
    }
    let mse = sse(&reference.samples, &test.samples) as f64 / reference.samples.len() as f64;
    Ok(psnr_from_mse(mse))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn y4m_bytes(w: usize, h: usize, frames: usize, tag: &str) -> Vec<u8> {
        let mut out = format!("YUV4MPEG2 W{w} H{h} F30:1 Ip A1:1 {tag}\n").into_bytes();
        let stride = if tag == "Cmono" { w * h } else { w * h * 3 / 2 };
        for i in 0..frames {
            out.extend_from_slice(b"FRAME\n");
            out.extend((0..stride).map(|k| ((k + i) % 251) as u8));
        }
        out
    }

    #[test]
    fn y4m_three_frames() {
        let seq = parse_y4m(&y4m_bytes(64, 64, 3, "C420jpeg")).unwrap();
        assert_eq!(seq.len(), 3);
        for (i, f) in seq.frames.iter().enumerate() {
            assert_eq!(f.samples().len(), 4096);
            assert_eq!(f.at(0, 0), (i % 251) as u8);
        }
        assert_eq!(seq.frame_rate, 30.0);
    }

    #[test]
    fn y4m_mono() {
        let seq = parse_y4m(&y4m_bytes(16, 8, 2, "Cmono")).unwrap();
        assert_eq!(seq.len(), 2);
        assert_eq!(seq.frames[1].at(0, 0), 1);
    }

    #[test]
    fn y4m_bad_width() {
        let err = parse_y4m(&y4m_bytes(100, 64, 1, "C420")).unwrap_err();
        assert!(err.to_string().contains("dimensions must be multiples of 8"));
    }

    #[test]
    fn y4m_truncated() {
        let mut data = y4m_bytes(32, 32, 3, "C420");
        data.truncate(data.len() - 10);
        match parse_y4m(&data).unwrap_err() {
            Error::TruncatedFrame { frame } => assert_eq!(frame, 2),
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn y4m_rejects_garbage() {
        assert!(matches!(
            parse_y4m(b"RIFF W64 H64\n").unwrap_err(),
            Error::MalformedHeader(_)
        ));
        assert!(matches!(
            parse_y4m(b"YUV4MPEG2 W64\n").unwrap_err(),
            Error::MalformedHeader(_)
        ));
        assert!(matches!(
            parse_y4m(b"YUV4MPEG2 W64 H64 C444\n").unwrap_err(),
            Error::UnsupportedChroma(_)
        ));
    }

    #[test]
    fn raw_loading() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.yuv");
        fs::write(&p, vec![7u8; 2 * (1024 + 512)]).unwrap();
        let seq = load_raw(&p, 32, 32, 2, ChromaFormat::Yuv420).unwrap();
        assert_eq!(seq.len(), 2);

        fs::write(&p, vec![7u8; 2 * (1024 + 512) - 1]).unwrap();
        assert!(matches!(
            load_raw(&p, 32, 32, 2, ChromaFormat::Yuv420),
            Err(Error::SizeMismatch { .. })
        ));

        fs::write(&p, vec![3u8; 256]).unwrap();
        let seq = load_raw(&p, 16, 16, 1, ChromaFormat::Monochrome).unwrap();
        assert_eq!(seq.frames[0].samples().len(), 256);

        assert!(matches!(
            "422".parse::<ChromaFormat>(),
            Err(Error::UnsupportedChroma(_))
        ));
    }

    #[test]
    fn y4m_write_then_load_is_identical() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.y4m");
        let seq = parse_y4m(&y4m_bytes(24, 16, 4, "C420")).unwrap();
        save_y4m(&p, &seq).unwrap();
        let a = load_y4m(&p).unwrap();
        let b = load_y4m(&p).unwrap();
        assert_eq!(a.frames, seq.frames);
        assert_eq!(a, b);
    }

    #[test]
    fn psnr_closed_forms() {
        let a = FrameBuffer::filled(16, 16, 100).unwrap();
        let b = FrameBuffer::filled(16, 16, 101).unwrap();
        assert_eq!(psnr(&a, &a).unwrap(), PSNR_CAP_DB);
        let expected = 10.0 * (255.0f64 * 255.0).log10();
        assert!((psnr(&a, &b).unwrap() - expected).abs() < 1e-12);
        assert!((expected - 48.13).abs() < 0.01);

        let black = FrameBuffer::filled(16, 16, 0).unwrap();
        let white = FrameBuffer::filled(16, 16, 255).unwrap();
        assert!(psnr(&black, &white).unwrap().abs() < 1e-12);

        let small = FrameBuffer::filled(8, 8, 0).unwrap();
        assert!(matches!(
            psnr(&a, &small),
            Err(Error::DimensionMismatch(..))
        ));
    }

    #[test]
    fn psnr_symmetric_and_monotone() {
        let base: Vec<u8> = (0..256).map(|i| (i * 7 % 200) as u8 + 20).collect();
        let a = FrameBuffer::new(16, 16, base.clone()).unwrap();
        let mut last = f64::INFINITY;
        for err in 1..20u8 {
            let b = FrameBuffer::new(16, 16, base.iter().map(|&v| v + err).collect()).unwrap();
            let p = psnr(&a, &b).unwrap();
            assert_eq!(p, psnr(&b, &a).unwrap());
            assert!(p < last);
            last = p;
        }
    }
}
