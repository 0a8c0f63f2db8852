//! Local quality scoring of distorted segments against their reference.
//!
//! The pipeline is metric-agnostic: two built-in full-reference indices are
//! provided (PSNR mapped to [0, 100] and mean structural similarity), and
//! externally computed per-segment scores (e.g. genuine VMAF) can be loaded
//! from a CSV table.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::media::Clip;
use crate::scalar::Real;
use crate::segment::{extract, SegmentConfig, SegmentIndex, SegmentLayout, SegmentView};

/// Metric selection as it appears in configuration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricId {
    PsnrMapped,
    StructSim,
    External,
}

/// A metric bound to everything it needs to score one coded clip.
#[derive(Debug, Clone, Copy)]
pub enum Metric<'a> {
    PsnrMapped,
    StructSim,
    External {
        table: &'a ScoreTable,
        clip_id: &'a str,
        qp: u8,
    },
}

/// PSNR values at or above this many dB map to a score of 100.
const PSNR_CEILING_DB: f64 = 60.0;

const SSIM_C1: f64 = (0.01 * 255.0) * (0.01 * 255.0);
const SSIM_C2: f64 = (0.03 * 255.0) * (0.03 * 255.0);
const SSIM_WINDOW: usize = 8;

fn check_aligned(reference: &SegmentView, distorted: &SegmentView) -> Result<()> {
    if reference.width != distorted.width
        || reference.height != distorted.height
        || reference.frame_count() != distorted.frame_count()
    {
        return Err(Error::Shape(format!(
            "segment shapes differ: {}x{}x{} vs {}x{}x{}",
            reference.width,
            reference.height,
            reference.frame_count(),
            distorted.width,
            distorted.height,
            distorted.frame_count()
        )));
    }
    Ok(())
}

fn psnr_frame_score(reference: &SegmentView, distorted: &SegmentView, frame: usize) -> f64 {
    let mut sse = 0u64;
    for y in 0..reference.height {
        for x in 0..reference.width {
            let d = reference.sample(frame, x, y) as i64 - distorted.sample(frame, x, y) as i64;
            sse += (d * d) as u64;
        }
    }
    if sse == 0 {
        return 100.0;
    }
    let mse = sse as f64 / (reference.width * reference.height) as f64;
    let psnr = 10.0 * (255.0 * 255.0 / mse).log10();
    (100.0 * psnr / PSNR_CEILING_DB).min(100.0)
}

fn ssim_window(
    reference: &SegmentView,
    distorted: &SegmentView,
    frame: usize,
    ox: usize,
    oy: usize,
) -> f64 {
    let n = (SSIM_WINDOW * SSIM_WINDOW) as f64;
    let (mut sx, mut sy, mut sxx, mut syy, mut sxy) = (0.0f64, 0.0, 0.0, 0.0, 0.0);
    for y in oy..oy + SSIM_WINDOW {
        for x in ox..ox + SSIM_WINDOW {
            let a = reference.sample(frame, x, y) as f64;
            let b = distorted.sample(frame, x, y) as f64;
            sx += a;
            sy += b;
            sxx += a * a;
            syy += b * b;
            sxy += a * b;
        }
    }
    let mx = sx / n;
    let my = sy / n;
    let vx = (sxx / n - mx * mx).max(0.0);
    let vy = (syy / n - my * my).max(0.0);
    let cov = sxy / n - mx * my;
    ((2.0 * mx * my + SSIM_C1) * (2.0 * cov + SSIM_C2))
        / ((mx * mx + my * my + SSIM_C1) * (vx + vy + SSIM_C2))
}

fn ssim_frame_score(reference: &SegmentView, distorted: &SegmentView, frame: usize) -> f64 {
    let cols = reference.width / SSIM_WINDOW;
    let rows = reference.height / SSIM_WINDOW;
    let mut total = 0.0;
    for wy in 0..rows {
        for wx in 0..cols {
            total += ssim_window(
                reference,
                distorted,
                frame,
                wx * SSIM_WINDOW,
                wy * SSIM_WINDOW,
            );
        }
    }
    (total / (cols * rows) as f64 * 100.0).clamp(0.0, 100.0)
}

/// Score one distorted segment against its reference.
///
/// Built-in metrics are computed per frame and averaged over the segment's
/// frames; the external metric is a table lookup.
pub fn score<F: Real>(
    metric: Metric,
    reference: &SegmentView,
    distorted: &SegmentView,
) -> Result<F> {
    check_aligned(reference, distorted)?;
    match metric {
        Metric::PsnrMapped | Metric::StructSim => {
            let frames = reference.frame_count();
            if frames == 0 {
                return Err(Error::Shape("segment spans no frames".into()));
            }
            let mut total = 0.0;
            for f in 0..frames {
                total += match metric {
                    Metric::PsnrMapped => psnr_frame_score(reference, distorted, f),
                    _ => ssim_frame_score(reference, distorted, f),
                };
            }
            Ok(F::from_f64_lossy(total / frames as f64))
        }
        Metric::External { table, clip_id, qp } => table
            .get(clip_id, qp, distorted.index)
            .map(F::from_f64_lossy)
            .ok_or_else(|| Error::MissingScore {
                clip_id: clip_id.to_string(),
                qp,
                w: distorted.index.w,
                h: distorted.index.h,
                t: distorted.index.t,
            }),
    }
}

/// Score every segment of a coded clip against the reference, in canonical
/// (t, h, w) order.
pub fn score_all<F: Real>(
    metric: Metric,
    ref_clip: &Clip,
    coded_clip: &Clip,
    layout: &SegmentLayout,
    config: &SegmentConfig,
) -> Result<Vec<F>> {
    if ref_clip.metadata.width != coded_clip.metadata.width
        || ref_clip.metadata.height != coded_clip.metadata.height
        || ref_clip.metadata.frame_count != coded_clip.metadata.frame_count
    {
        return Err(Error::Shape(format!(
            "reference and coded clips are not aligned: {}x{}x{} vs {}x{}x{}",
            ref_clip.metadata.width,
            ref_clip.metadata.height,
            ref_clip.metadata.frame_count,
            coded_clip.metadata.width,
            coded_clip.metadata.height,
            coded_clip.metadata.frame_count
        )));
    }
    let mut scores = Vec::with_capacity(layout.total());
    for index in layout.indices() {
        let r = extract(ref_clip, index, layout, config)?;
        let d = extract(coded_clip, index, layout, config)?;
        let s = score(metric, &r, &d).map_err(|e| match e {
            Error::MissingScore { .. } => e,
            other => Error::Shape(format!(
                "segment (w={}, h={}, t={}): {other}",
                index.w, index.h, index.t
            )),
        })?;
        scores.push(s);
    }
    Ok(scores)
}

/// Externally computed per-segment scores, keyed by (clip id, qp, index).
#[derive(Debug, Clone, Default)]
pub struct ScoreTable {
    entries: HashMap<(String, u8, SegmentIndex), f64>,
}

impl ScoreTable {
    pub fn get(&self, clip_id: &str, qp: u8, index: SegmentIndex) -> Option<f64> {
        self.entries
            .get(&(clip_id.to_string(), qp, index))
            .copied()
    }

    pub fn insert(&mut self, clip_id: &str, qp: u8, index: SegmentIndex, value: f64) -> Result<()> {
        if !(0.0..=100.0).contains(&value) {
            return Err(Error::Range(format!(
                "score {value} outside [0, 100] for {clip_id} qp {qp}"
            )));
        }
        self.entries.insert((clip_id.to_string(), qp, index), value);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Parse the documented CSV schema: `clip_id,qp,w,h,t,score`.
    pub fn load<R: BufRead>(reader: R) -> Result<Self> {
        let mut table = ScoreTable::default();
        let mut lines = reader.lines().enumerate();
        match lines.next() {
            Some((_, Ok(header))) if header.trim() == "clip_id,qp,w,h,t,score" => {}
            Some((_, Ok(header))) => {
                return Err(Error::Format(format!("unexpected score header `{header}`")))
            }
            Some((_, Err(e))) => return Err(Error::Format(format!("score table: {e}"))),
            None => return Err(Error::Format("empty score table".into())),
        }
        for (lineno, line) in lines {
            let line = line.map_err(|e| Error::Format(format!("score table: {e}")))?;
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != 6 {
                return Err(Error::Format(format!(
                    "score table line {}: expected 6 fields, found {}",
                    lineno + 1,
                    fields.len()
                )));
            }
            let parse_err =
                |what: &str| Error::Format(format!("score table line {}: bad {what}", lineno + 1));
            let qp: u8 = fields[1].trim().parse().map_err(|_| parse_err("qp"))?;
            let w: usize = fields[2].trim().parse().map_err(|_| parse_err("w"))?;
            let h: usize = fields[3].trim().parse().map_err(|_| parse_err("h"))?;
            let t: usize = fields[4].trim().parse().map_err(|_| parse_err("t"))?;
            let value: f64 = fields[5].trim().parse().map_err(|_| parse_err("score"))?;
            table.insert(fields[0].trim(), qp, SegmentIndex { w, h, t }, value)?;
        }
        Ok(table)
    }

    pub fn load_file(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        Self::load(BufReader::new(file))
    }

    /// Verify the table holds every segment of `layout` for (clip_id, qp).
    pub fn validate_complete(&self, clip_id: &str, qp: u8, layout: &SegmentLayout) -> Result<()> {
        let mut missing = 0usize;
        let mut first = None;
        for index in layout.indices() {
            if self.get(clip_id, qp, index).is_none() {
                if first.is_none() {
                    first = Some(index);
                }
                missing += 1;
            }
        }
        match first {
            None => Ok(()),
            Some(idx) => Err(Error::IncompleteTable {
                clip_id: clip_id.to_string(),
                qp,
                missing,
                first_w: idx.w,
                first_h: idx.h,
                first_t: idx.t,
            }),
        }
    }
}
