//! Raw 8-bit YUV 4:2:0 ingestion.
//!
//! Two input forms are accepted: YUV4MPEG2 streams, which describe their own
//! geometry, and headerless planar YUV420p where the caller supplies the
//! dimensions. Compressed containers are decoded by external tools before
//! they reach this module, so metric computation never depends on container
//! metadata.

use std::fmt;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::plane::Plane;

const Y4M_MAGIC: &[u8] = b"YUV4MPEG2";
const FRAME_MAGIC: &[u8] = b"FRAME";
/// Upper bound on a Y4M header line; anything longer is treated as garbage.
const MAX_HEADER_LEN: usize = 4096;

/// Frame rate as an exact rational.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FrameRate {
    pub num: u32,
    pub den: u32,
}

impl FrameRate {
    pub fn new(num: u32, den: u32) -> Result<Self> {
        if num == 0 || den == 0 {
            return Err(Error::InvalidParameter(format!(
                "frame rate {num}:{den} must have nonzero terms"
            )));
        }
        Ok(FrameRate { num, den })
    }

    pub fn as_f64(&self) -> f64 {
        f64::from(self.num) / f64::from(self.den)
    }
}

impl fmt::Display for FrameRate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.num, self.den)
    }
}

/// One 4:2:0 picture: a full-resolution luma plane and two quarter-size
/// chroma planes, all 8-bit and row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Frame {
    width: usize,
    height: usize,
    y: Vec<u8>,
    u: Vec<u8>,
    v: Vec<u8>,
}

impl Frame {
    pub fn new(width: usize, height: usize, y: Vec<u8>, u: Vec<u8>, v: Vec<u8>) -> Result<Self> {
        check_dimensions(width, height)?;
        let chroma = (width / 2) * (height / 2);
        if y.len() != width * height || u.len() != chroma || v.len() != chroma {
            return Err(Error::DimensionMismatch(format!(
                "plane sizes {}/{}/{} do not match {width}x{height} 4:2:0",
                y.len(),
                u.len(),
                v.len()
            )));
        }
        Ok(Frame {
            width,
            height,
            y,
            u,
            v,
        })
    }

    /// Builds a frame from a luma plane with neutral (128) chroma.
    pub fn from_luma(width: usize, height: usize, y: Vec<u8>) -> Result<Self> {
        let chroma = (width / 2) * (height / 2);
        Frame::new(width, height, y, vec![128; chroma], vec![128; chroma])
    }

    fn from_payload(width: usize, height: usize, payload: &[u8]) -> Frame {
        let luma = width * height;
        let chroma = luma / 4;
        Frame {
            width,
            height,
            y: payload[..luma].to_vec(),
            u: payload[luma..luma + chroma].to_vec(),
            v: payload[luma + chroma..luma + 2 * chroma].to_vec(),
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn y(&self) -> &[u8] {
        &self.y
    }

    pub fn u(&self) -> &[u8] {
        &self.u
    }

    pub fn v(&self) -> &[u8] {
        &self.v
    }

    /// Luma plane as `f64` samples in `[0, 255]`, unmodified.
    pub fn luma(&self) -> Plane {
        Plane::from_u8(self.width, self.height, &self.y).expect("frame invariant")
    }
}

/// Size in bytes of one 8-bit 4:2:0 frame.
pub fn frame_size(width: usize, height: usize) -> usize {
    width * height * 3 / 2
}

fn check_dimensions(width: usize, height: usize) -> Result<()> {
    if width == 0 || height == 0 {
        return Err(Error::Dimensions {
            width,
            height,
            reason: "must be positive",
        });
    }
    if width % 2 != 0 || height % 2 != 0 {
        return Err(Error::Dimensions {
            width,
            height,
            reason: "4:2:0 sampling requires even dimensions",
        });
    }
    Ok(())
}

/// A decoded clip. Frames are nonempty and share the clip geometry.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VideoClip {
    width: usize,
    height: usize,
    frame_rate: FrameRate,
    frames: Vec<Frame>,
}

impl VideoClip {
    pub fn new(frame_rate: FrameRate, frames: Vec<Frame>) -> Result<Self> {
        let first = frames.first().ok_or(Error::EmptyClip)?;
        let (width, height) = (first.width, first.height);
        if let Some((i, f)) = frames
            .iter()
            .enumerate()
            .find(|(_, f)| f.width != width || f.height != height)
        {
            return Err(Error::DimensionMismatch(format!(
                "frame {i} is {}x{}, clip is {width}x{height}",
                f.width, f.height
            )));
        }
        Ok(VideoClip {
            width,
            height,
            frame_rate,
            frames,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn frame_rate(&self) -> FrameRate {
        self.frame_rate
    }

    pub fn frames(&self) -> &[Frame] {
        &self.frames
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    /// Serializes the clip as headerless planar YUV420p.
    pub fn to_raw_yuv(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.frames.len() * frame_size(self.width, self.height));
        for f in &self.frames {
            out.extend_from_slice(&f.y);
            out.extend_from_slice(&f.u);
            out.extend_from_slice(&f.v);
        }
        out
    }

    pub fn write_y4m<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(
            w,
            "YUV4MPEG2 W{} H{} F{} Ip A1:1 C420jpeg",
            self.width, self.height, self.frame_rate
        )?;
        for f in &self.frames {
            w.write_all(b"FRAME\n")?;
            w.write_all(&f.y)?;
            w.write_all(&f.u)?;
            w.write_all(&f.v)?;
        }
        Ok(())
    }
}

/// Returns the luma plane of a frame.
pub fn luma(frame: &Frame) -> Plane {
    frame.luma()
}

/// Parses a headerless YUV420p stream of known geometry.
pub fn read_raw_yuv(
    bytes: &[u8],
    width: usize,
    height: usize,
    frame_rate: FrameRate,
) -> Result<VideoClip> {
    check_dimensions(width, height)?;
    if bytes.is_empty() {
        return Err(Error::EmptyClip);
    }
    let size = frame_size(width, height);
    if bytes.len() % size != 0 {
        return Err(Error::FrameSize {
            len: bytes.len(),
            frame_size: size,
        });
    }
    let frames = bytes
        .chunks_exact(size)
        .map(|chunk| Frame::from_payload(width, height, chunk))
        .collect();
    VideoClip::new(frame_rate, frames)
}

#[derive(Debug)]
struct Y4mHeader {
    width: usize,
    height: usize,
    frame_rate: FrameRate,
}

fn parse_y4m_header(line: &[u8]) -> Result<Y4mHeader> {
    let text = std::str::from_utf8(line)
        .map_err(|_| Error::MalformedHeader("header is not ASCII".into()))?;
    let mut tokens = text.split(' ').filter(|t| !t.is_empty());
    if tokens.next().map(str::as_bytes) != Some(Y4M_MAGIC) {
        return Err(Error::MalformedHeader("missing YUV4MPEG2 signature".into()));
    }
    let mut width = None;
    let mut height = None;
    let mut frame_rate = None;
    for token in tokens {
        let (tag, value) = token.split_at(1);
        match tag {
            "W" => width = Some(parse_dim(value, "W")?),
            "H" => height = Some(parse_dim(value, "H")?),
            "F" => {
                let (n, d) = value
                    .split_once(':')
                    .ok_or_else(|| Error::MalformedHeader(format!("frame rate `{value}`")))?;
                let parse = |s: &str| {
                    s.parse::<u32>()
                        .map_err(|_| Error::MalformedHeader(format!("frame rate `{value}`")))
                };
                frame_rate = Some(
                    FrameRate::new(parse(n)?, parse(d)?)
                        .map_err(|_| Error::MalformedHeader(format!("frame rate `{value}`")))?,
                );
            }
            "C" => match value {
                "420" | "420jpeg" | "420mpeg2" | "420paldv" => {}
                other => return Err(Error::UnsupportedColorspace(format!("C{other}"))),
            },
            "I" => match value {
                "p" | "?" => {}
                other => {
                    return Err(Error::UnsupportedColorspace(format!(
                        "interlacing I{other}"
                    )))
                }
            },
            // Aspect ratio and extension tokens do not affect the samples.
            "A" | "X" => {}
            _ => return Err(Error::MalformedHeader(format!("unknown token `{token}`"))),
        }
    }
    let width = width.ok_or_else(|| Error::MalformedHeader("missing W".into()))?;
    let height = height.ok_or_else(|| Error::MalformedHeader("missing H".into()))?;
    let frame_rate = frame_rate.ok_or_else(|| Error::MalformedHeader("missing F".into()))?;
    check_dimensions(width, height)?;
    Ok(Y4mHeader {
        width,
        height,
        frame_rate,
    })
}

fn parse_dim(value: &str, tag: &str) -> Result<usize> {
    value
        .parse::<usize>()
        .map_err(|_| Error::MalformedHeader(format!("{tag}{value}")))
}

fn split_line(bytes: &[u8]) -> Option<(&[u8], &[u8])> {
    let limit = bytes.len().min(MAX_HEADER_LEN);
    let nl = bytes[..limit].iter().position(|&b| b == b'\n')?;
    Some((&bytes[..nl], &bytes[nl + 1..]))
}

/// Parses a complete YUV4MPEG2 stream held in memory.
pub fn read_y4m(bytes: &[u8]) -> Result<VideoClip> {
    let (header, mut rest) = split_line(bytes)
        .ok_or_else(|| Error::MalformedHeader("unterminated header line".into()))?;
    let header = parse_y4m_header(header)?;
    let size = frame_size(header.width, header.height);
    let mut frames = Vec::new();
    while !rest.is_empty() {
        let index = frames.len();
        let (marker, payload) = split_line(rest).ok_or_else(|| {
            Error::MalformedHeader(format!("frame {index}: unterminated FRAME marker"))
        })?;
        if !marker.starts_with(FRAME_MAGIC) {
            return Err(Error::MalformedHeader(format!(
                "frame {index}: expected FRAME marker"
            )));
        }
        if payload.len() < size {
            return Err(Error::TruncatedFrame {
                frame: index,
                expected: size,
                got: payload.len(),
            });
        }
        frames.push(Frame::from_payload(header.width, header.height, &payload[..size]));
        rest = &payload[size..];
    }
    VideoClip::new(header.frame_rate, frames)
}

/// Reads a clip from disk, choosing the parser by extension: `.y4m` is
/// self-describing, anything else is treated as raw YUV420p and needs
/// `raw_geometry`.
pub fn read_clip_file(
    path: &std::path::Path,
    raw_geometry: Option<(usize, usize, FrameRate)>,
) -> Result<VideoClip> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let is_y4m = path
        .extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("y4m"));
    if is_y4m {
        return read_y4m(&bytes);
    }
    match raw_geometry {
        Some((w, h, fps)) => read_raw_yuv(&bytes, w, h, fps),
        None => Err(Error::InvalidParameter(format!(
            "{} is raw YUV but no width/height/frame rate were declared",
            path.display()
        ))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn fps10() -> FrameRate {
        FrameRate::new(10, 1).unwrap()
    }

    #[test]
    fn y4m_single_frame() {
        let mut bytes = b"YUV4MPEG2 W2 H2 F10:1 C420\nFRAME\n".to_vec();
        bytes.extend_from_slice(&[1, 2, 3, 4, 5, 6]);
        let clip = read_y4m(&bytes).unwrap();
        assert_eq!((clip.width(), clip.height(), clip.len()), (2, 2, 1));
        assert_eq!(clip.frame_rate(), fps10());
        let f = &clip.frames()[0];
        assert_eq!(f.y(), &[1, 2, 3, 4]);
        assert_eq!(f.u(), &[5]);
        assert_eq!(f.v(), &[6]);
    }

    #[test]
    fn y4m_truncated_payload() {
        let mut bytes = b"YUV4MPEG2 W2 H2 F10:1 C420\nFRAME\n".to_vec();
        bytes.extend_from_slice(&[1, 2, 3, 4, 5]);
        assert!(matches!(
            read_y4m(&bytes),
            Err(Error::TruncatedFrame {
                frame: 0,
                expected: 6,
                got: 5
            })
        ));
    }

    #[test]
    fn y4m_rejects_other_sampling() {
        let mut bytes = b"YUV4MPEG2 W2 H2 F10:1 C444\nFRAME\n".to_vec();
        bytes.extend_from_slice(&[0; 12]);
        assert!(matches!(
            read_y4m(&bytes),
            Err(Error::UnsupportedColorspace(_))
        ));
        let hi = b"YUV4MPEG2 W2 H2 F10:1 C420p10\n";
        assert!(matches!(read_y4m(hi), Err(Error::UnsupportedColorspace(_))));
        let interlaced = b"YUV4MPEG2 W2 H2 F10:1 It C420\n";
        assert!(matches!(
            read_y4m(interlaced),
            Err(Error::UnsupportedColorspace(_))
        ));
    }

    #[test]
    fn y4m_malformed_headers() {
        for h in [
            &b"YUV4MPEG W2 H2 F10:1\n"[..],
            b"YUV4MPEG2 W2 F10:1\n",
            b"YUV4MPEG2 W2 H2 F10\n",
            b"YUV4MPEG2 W2 H2 F10:1",
            b"YUV4MPEG2 Wx H2 F10:1\n",
        ] {
            assert!(
                matches!(read_y4m(h), Err(Error::MalformedHeader(_))),
                "{:?}",
                String::from_utf8_lossy(h)
            );
        }
    }

    #[test]
    fn y4m_without_frames_is_empty() {
        assert!(matches!(
            read_y4m(b"YUV4MPEG2 W2 H2 F10:1\n"),
            Err(Error::EmptyClip)
        ));
    }

    #[test]
    fn y4m_write_read_round_trip() {
        let clip = read_raw_yuv(&(0..24).collect::<Vec<u8>>(), 2, 2, fps10()).unwrap();
        let mut buf = Vec::new();
        clip.write_y4m(&mut buf).unwrap();
        assert_eq!(read_y4m(&buf).unwrap(), clip);
    }

    #[test]
    fn raw_yuv_frame_counts() {
        let clip = read_raw_yuv(&[0; 12], 2, 2, fps10()).unwrap();
        assert_eq!(clip.len(), 2);
        assert!(matches!(
            read_raw_yuv(&[0; 7], 2, 2, fps10()),
            Err(Error::FrameSize {
                len: 7,
                frame_size: 6
            })
        ));
        assert!(matches!(
            read_raw_yuv(&[], 2, 2, fps10()),
            Err(Error::EmptyClip)
        ));
        assert!(matches!(
            read_raw_yuv(&[0; 15], 3, 2, fps10()),
            Err(Error::Dimensions { .. })
        ));
    }

    #[test]
    fn luma_returns_y_plane() {
        let f = Frame::from_luma(2, 2, vec![128; 4]).unwrap();
        assert!(luma(&f).data().iter().all(|&v| v == 128.0));
        let f = Frame::from_luma(2, 2, vec![0, 64, 128, 255]).unwrap();
        assert_eq!(luma(&f).data(), &[0.0, 64.0, 128.0, 255.0]);
        assert_eq!(luma(&f), luma(&f));
    }

    proptest! {
        #[test]
        fn raw_round_trip(w in 1usize..6, h in 1usize..6, n in 1usize..4, seed in any::<u64>()) {
            let (w, h) = (2 * w, 2 * h);
            let len = n * frame_size(w, h);
            let bytes: Vec<u8> = (0..len)
                .map(|i| (seed.wrapping_mul(6364136223846793005).wrapping_add(i as u64) >> 13) as u8)
                .collect();
            let clip = read_raw_yuv(&bytes, w, h, FrameRate::new(30000, 1001).unwrap()).unwrap();
            prop_assert_eq!(clip.len(), n);
            prop_assert_eq!(clip.to_raw_yuv(), bytes);
        }
    }
}
