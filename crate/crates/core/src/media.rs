//! Planar video decoding: Y4M (YUV4MPEG2) and raw YUV with a sidecar record.
//!
//! Only 8-bit content is supported. Analysis downstream touches luma only;
//! chroma is carried along so a decoded clip can be written back untouched.

use std::fs::File;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ChromaLayout {
    #[serde(rename = "420")]
    C420,
    #[serde(rename = "422")]
    C422,
    #[serde(rename = "444")]
    C444,
}

impl ChromaLayout {
    pub fn chroma_dims(self, width: usize, height: usize) -> (usize, usize) {
        match self {
            ChromaLayout::C420 => ((width + 1) / 2, (height + 1) / 2),
            ChromaLayout::C422 => ((width + 1) / 2, height),
            ChromaLayout::C444 => (width, height),
        }
    }

    fn y4m_tag(self) -> &'static str {
        match self {
            ChromaLayout::C420 => "420",
            ChromaLayout::C422 => "422",
            ChromaLayout::C444 => "444",
        }
    }
}

/// Frame rate as an exact rational, as carried by the Y4M `F` token.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrameRate {
    pub num: u32,
    pub den: u32,
}

impl FrameRate {
    pub fn new(num: u32, den: u32) -> Result<Self> {
        if num == 0 || den == 0 {
            return Err(Error::Format(format!("invalid frame rate {num}:{den}")));
        }
        Ok(FrameRate { num, den })
    }

    pub fn as_f64(self) -> f64 {
        self.num as f64 / self.den as f64
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClipMetadata {
    pub width: usize,
    pub height: usize,
    pub frame_rate: FrameRate,
    pub frame_count: usize,
    pub chroma_layout: ChromaLayout,
    pub bit_depth: u8,
}

impl ClipMetadata {
    /// Clip duration in seconds.
    pub fn duration(&self) -> f64 {
        self.frame_count as f64 / self.frame_rate.as_f64()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Plane {
    pub width: usize,
    pub height: usize,
    pub samples: Vec<u8>,
}

impl Plane {
    pub fn new(width: usize, height: usize, samples: Vec<u8>) -> Result<Self> {
        if samples.len() != width * height {
            return Err(Error::Shape(format!(
                "plane payload {} != {width}x{height}",
                samples.len()
            )));
        }
        Ok(Plane {
            width,
            height,
            samples,
        })
    }

    pub fn filled(width: usize, height: usize, value: u8) -> Self {
        Plane {
            width,
            height,
            samples: vec![value; width * height],
        }
    }

    #[inline]
    pub fn sample(&self, x: usize, y: usize) -> u8 {
        self.samples[y * self.width + x]
    }

    #[inline]
    pub fn row(&self, y: usize) -> &[u8] {
        &self.samples[y * self.width..(y + 1) * self.width]
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Frame {
    pub luma: Plane,
    pub chroma_b: Plane,
    pub chroma_r: Plane,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ClipRole {
    Reference,
    Coded { qp: u8 },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Clip {
    pub metadata: ClipMetadata,
    pub frames: Vec<Frame>,
    pub role: ClipRole,
}

impl Clip {
    pub fn new(metadata: ClipMetadata, frames: Vec<Frame>, role: ClipRole) -> Result<Self> {
        if frames.len() != metadata.frame_count {
            return Err(Error::Shape(format!(
                "frame count {} != metadata frame_count {}",
                frames.len(),
                metadata.frame_count
            )));
        }
        if let ClipRole::Coded { qp } = role {
            if qp > 51 {
                return Err(Error::Range(format!("qp {qp} outside 0..51")));
            }
        }
        Ok(Clip {
            metadata,
            frames,
            role,
        })
    }

    /// Borrow the luma plane of frame `frame_index`.
    pub fn luma(&self, frame_index: usize) -> Result<&Plane> {
        self.frames
            .get(frame_index)
            .map(|f| &f.luma)
            .ok_or_else(|| {
                Error::Bounds(format!(
                    "frame {frame_index} outside 0..{}",
                    self.metadata.frame_count
                ))
            })
    }
}

const Y4M_SIGNATURE: &str = "YUV4MPEG2";

fn read_line<R: BufRead>(reader: &mut R, what: &str) -> Result<String> {
    let mut buf = Vec::new();
    reader
        .read_until(b'\n', &mut buf)
        .map_err(|e| Error::Truncated(format!("reading {what}: {e}")))?;
    if buf.last() == Some(&b'\n') {
        buf.pop();
    } else if buf.is_empty() {
        return Err(Error::Truncated(format!("missing {what}")));
    }
    String::from_utf8(buf).map_err(|_| Error::Format(format!("non-UTF8 {what}")))
}

/// Parse the YUV4MPEG2 signature line. Leaves the reader at the first FRAME
/// marker.
pub fn parse_stream_header<R: BufRead>(reader: &mut R) -> Result<ClipMetadata> {
    let line = read_line(reader, "stream header")?;
    let mut tokens = line.split(' ');
    match tokens.next() {
        Some(Y4M_SIGNATURE) => {}
        other => {
            return Err(Error::Format(format!(
                "expected {Y4M_SIGNATURE} signature, found {other:?}"
            )))
        }
    }

    let mut width = None;
    let mut height = None;
    let mut rate = None;
    let mut chroma = ChromaLayout::C420;
    for tok in tokens {
        let (tag, rest) = match tok.split_at_checked(1) {
            Some(parts) => parts,
            None => continue,
        };
        match tag {
            "W" => {
                width = Some(rest.parse::<usize>().map_err(|_| {
                    Error::Format(format!("bad width token W{rest}"))
                })?)
            }
            "H" => {
                height = Some(rest.parse::<usize>().map_err(|_| {
                    Error::Format(format!("bad height token H{rest}"))
                })?)
            }
            "F" => {
                let (n, d) = rest
                    .split_once(':')
                    .ok_or_else(|| Error::Format(format!("bad frame rate token F{rest}")))?;
                let num = n
                    .parse::<u32>()
                    .map_err(|_| Error::Format(format!("bad frame rate token F{rest}")))?;
                let den = d
                    .parse::<u32>()
                    .map_err(|_| Error::Format(format!("bad frame rate token F{rest}")))?;
                rate = Some(FrameRate::new(num, den)?);
            }
            "C" => {
                chroma = match rest {
                    "420" | "420jpeg" | "420mpeg2" | "420paldv" => ChromaLayout::C420,
                    "422" => ChromaLayout::C422,
                    "444" => ChromaLayout::C444,
                    other => {
                        return Err(Error::Unsupported(format!(
                            "chroma subsampling C{other} (8-bit 420/422/444 only)"
                        )))
                    }
                };
            }
            // Interlacing, aspect ratio and X extensions are ignored.
            "I" | "A" | "X" => {}
            _ => {}
        }
    }

    let width = width.ok_or_else(|| Error::Format("header missing W token".into()))?;
    let height = height.ok_or_else(|| Error::Format("header missing H token".into()))?;
    let frame_rate = rate.ok_or_else(|| Error::Format("header missing F token".into()))?;
    if width == 0 || height == 0 {
        return Err(Error::Format(format!("degenerate dimensions {width}x{height}")));
    }
    Ok(ClipMetadata {
        width,
        height,
        frame_rate,
        frame_count: 0,
        chroma_layout: chroma,
        bit_depth: 8,
    })
}

fn read_plane<R: Read>(reader: &mut R, width: usize, height: usize, which: &str) -> Result<Plane> {
    let mut samples = vec![0u8; width * height];
    reader
        .read_exact(&mut samples)
        .map_err(|e| Error::Truncated(format!("{which} plane payload: {e}")))?;
    Plane::new(width, height, samples)
}

/// Read all frames that follow the header. Fails if the stream holds no
/// complete frame at all.
pub fn read_clip<R: BufRead>(reader: &mut R, metadata: &ClipMetadata, role: ClipRole) -> Result<Clip> {
    let (cw, ch) = metadata.chroma_layout.chroma_dims(metadata.width, metadata.height);
    let mut frames = Vec::new();
    loop {
        let mut marker = Vec::new();
        reader
            .read_until(b'\n', &mut marker)
            .map_err(|e| Error::Truncated(format!("frame marker: {e}")))?;
        if marker.is_empty() {
            break; // clean EOF
        }
        if !marker.starts_with(b"FRAME") {
            return Err(Error::Format("expected FRAME marker".into()));
        }
        let luma = read_plane(reader, metadata.width, metadata.height, "luma")?;
        let chroma_b = read_plane(reader, cw, ch, "Cb")?;
        let chroma_r = read_plane(reader, cw, ch, "Cr")?;
        frames.push(Frame {
            luma,
            chroma_b,
            chroma_r,
        });
    }
    if frames.is_empty() {
        return Err(Error::Truncated("stream holds no frames".into()));
    }
    let metadata = ClipMetadata {
        frame_count: frames.len(),
        ..metadata.clone()
    };
    Clip::new(metadata, frames, role)
}

/// Decode a whole Y4M file.
pub fn read_y4m(path: &Path, role: ClipRole) -> Result<Clip> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = BufReader::new(file);
    let metadata = parse_stream_header(&mut reader)?;
    read_clip(&mut reader, &metadata, role)
}

/// Serialize a clip back to YUV4MPEG2. Round-trips bit-exactly.
pub fn write_y4m<W: Write>(writer: &mut W, clip: &Clip) -> std::io::Result<()> {
    let m = &clip.metadata;
    writeln!(
        writer,
        "{Y4M_SIGNATURE} W{} H{} F{}:{} Ip A1:1 C{}",
        m.width,
        m.height,
        m.frame_rate.num,
        m.frame_rate.den,
        m.chroma_layout.y4m_tag()
    )?;
    for frame in &clip.frames {
        writeln!(writer, "FRAME")?;
        writer.write_all(&frame.luma.samples)?;
        writer.write_all(&frame.chroma_b.samples)?;
        writer.write_all(&frame.chroma_r.samples)?;
    }
    Ok(())
}

pub fn write_y4m_file(path: &Path, clip: &Clip) -> Result<()> {
    let mut file = File::create(path).map_err(|e| Error::io(path, e))?;
    write_y4m(&mut file, clip).map_err(|e| Error::io(path, e))
}

/// Sidecar record accompanying a raw planar YUV file.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RawSidecar {
    pub width: usize,
    pub height: usize,
    pub frame_rate: FrameRate,
    pub chroma_layout: ChromaLayout,
}

/// Decode a headerless planar YUV file described by its sidecar.
pub fn read_raw(path: &Path, sidecar: &RawSidecar, role: ClipRole) -> Result<Clip> {
    if sidecar.width == 0 || sidecar.height == 0 {
        return Err(Error::Format("degenerate sidecar dimensions".into()));
    }
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = BufReader::new(file);
    let (cw, ch) = sidecar.chroma_layout.chroma_dims(sidecar.width, sidecar.height);
    let frame_bytes = sidecar.width * sidecar.height + 2 * cw * ch;
    let mut frames = Vec::new();
    loop {
        let mut payload = vec![0u8; frame_bytes];
        match reader.read_exact(&mut payload) {
            Ok(()) => {}
            Err(e) if e.kind() == std::io::ErrorKind::UnexpectedEof && frames.is_empty() => {
                return Err(Error::Truncated("raw stream holds no frames".into()));
            }
            Err(e) if e.kind() == std::io::ErrorKind::UnexpectedEof => break,
            Err(e) => return Err(Error::io(path, e)),
        }
        let luma_len = sidecar.width * sidecar.height;
        let luma = Plane::new(sidecar.width, sidecar.height, payload[..luma_len].to_vec())?;
        let chroma_b = Plane::new(cw, ch, payload[luma_len..luma_len + cw * ch].to_vec())?;
        let chroma_r = Plane::new(cw, ch, payload[luma_len + cw * ch..].to_vec())?;
        frames.push(Frame {
            luma,
            chroma_b,
            chroma_r,
        });
    }
    let metadata = ClipMetadata {
        width: sidecar.width,
        height: sidecar.height,
        frame_rate: sidecar.frame_rate,
        frame_count: frames.len(),
        chroma_layout: sidecar.chroma_layout,
        bit_depth: 8,
    };
    Clip::new(metadata, frames, role)
}

/// Build a luma-only test clip; chroma planes are flat 128.
pub fn clip_from_luma(
    planes: Vec<Plane>,
    frame_rate: FrameRate,
    role: ClipRole,
) -> Result<Clip> {
    let first = planes
        .first()
        .ok_or_else(|| Error::EmptyInput("no luma planes".into()))?;
    let (width, height) = (first.width, first.height);
    let (cw, ch) = ChromaLayout::C420.chroma_dims(width, height);
    let frames = planes
        .into_iter()
        .map(|luma| {
            if luma.width != width || luma.height != height {
                return Err(Error::Shape("inconsistent luma plane dimensions".into()));
            }
            Ok(Frame {
                luma,
                chroma_b: Plane::filled(cw, ch, 128),
                chroma_r: Plane::filled(cw, ch, 128),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let metadata = ClipMetadata {
        width,
        height,
        frame_rate,
        frame_count: frames.len(),
        chroma_layout: ChromaLayout::C420,
        bit_depth: 8,
    };
    Clip::new(metadata, frames, role)
}
