//! Per-(source, qp) feature construction: significant-segment selection from
//! quality slopes, the 20-D cumulative degradation feature, and the 20-D
//! masking feature built from spatial/temporal randomness of the reference.

use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::media::{Clip, Plane};
use crate::scalar::Real;
use crate::segment::{extract, SegmentConfig, SegmentLayout};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlopeParams {
    /// QP difference between neighbouring coded clips.
    pub k: u8,
    /// Fraction of segments kept as significant.
    pub p: f64,
}

impl Default for SlopeParams {
    fn default() -> Self {
        SlopeParams { k: 2, p: 0.80 }
    }
}

impl SlopeParams {
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::Config("slope stride k must be >= 1".into()));
        }
        if !(self.p > 0.0 && self.p <= 1.0) {
            return Err(Error::Config(format!(
                "selection fraction {} outside (0, 1]",
                self.p
            )));
        }
        Ok(())
    }
}

/// Local quality degradation slope between a segment's score at qp `i-k` and
/// at qp `i`: (V(i-k) - V(i)) / k.
pub fn slope<F: Real>(score_at_i_minus_k: F, score_at_i: F, k: u8) -> F {
    (score_at_i_minus_k - score_at_i) / F::from_usize_lossy(k as usize)
}

/// Per-segment slopes for two aligned score arrays.
pub fn slopes<F: Real>(scores_prev: &[F], scores_cur: &[F], k: u8) -> Result<Vec<F>> {
    if scores_prev.len() != scores_cur.len() {
        return Err(Error::MissingData(format!(
            "score arrays differ in length: {} vs {}",
            scores_prev.len(),
            scores_cur.len()
        )));
    }
    Ok(scores_prev
        .iter()
        .zip(scores_cur)
        .map(|(&a, &b)| slope(a, b, k))
        .collect())
}

/// Keep the ceil(p*N) segments with largest slope. Slopes are indexed in the
/// canonical (t, h, w) order; ties keep the earlier index. Returns selected
/// flat indices in ascending order.
pub fn select_significant<F: Real>(slopes: &[F], p: f64) -> Result<Vec<usize>> {
    if slopes.is_empty() {
        return Err(Error::EmptyInput("no slopes to select from".into()));
    }
    let keep = ((p * slopes.len() as f64).ceil() as usize).clamp(1, slopes.len());
    let mut order: Vec<usize> = (0..slopes.len()).collect();
    // Stable sort by descending slope preserves (t, h, w) order among ties.
    order.sort_by(|&a, &b| slopes[b].partial_cmp(&slopes[a]).unwrap());
    let mut selected: Vec<usize> = order[..keep].to_vec();
    selected.sort_unstable();
    Ok(selected)
}

pub const DEGRADATION_BINS: usize = 20;
pub const MASKING_BINS: usize = 10;

/// 20-D cumulative degradation feature: entry n-1 holds
/// Prob[delta <= 2n] for n = 1..=20.
#[derive(Debug, Clone, PartialEq)]
pub struct DegradationFeature<F>(pub [F; DEGRADATION_BINS]);

pub fn degradation_feature<F: Real>(deltas: &[F]) -> Result<DegradationFeature<F>> {
    if deltas.is_empty() {
        return Err(Error::EmptyInput("no score deltas".into()));
    }
    let total = F::from_usize_lossy(deltas.len());
    let mut f = [F::zero(); DEGRADATION_BINS];
    for (n, slot) in f.iter_mut().enumerate() {
        let threshold = F::from_usize_lossy(2 * (n + 1));
        let count = deltas.iter().filter(|&&d| d <= threshold).count();
        *slot = F::from_usize_lossy(count) / total;
    }
    Ok(DegradationFeature(f))
}

/// 20-D masking feature: 10-bin SR histogram followed by 10-bin TR histogram,
/// each normalized to sum 1.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskingFeature<F>(pub [F; 2 * MASKING_BINS]);

pub const FEATURE_DIM: usize = 40;

/// Final 40-D feature: degradation feature followed by masking feature.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector<F> {
    pub x: Vec<F>,
    pub source_id: String,
    pub qp: u8,
}

pub fn assemble<F: Real>(
    deg: &DegradationFeature<F>,
    mask: &MaskingFeature<F>,
    source_id: impl Into<String>,
    qp: u8,
) -> FeatureVector<F> {
    let mut x = Vec::with_capacity(FEATURE_DIM);
    x.extend_from_slice(&deg.0);
    x.extend_from_slice(&mask.0);
    FeatureVector {
        x,
        source_id: source_id.into(),
        qp,
    }
}

/// A real-valued plane produced by filtering an 8-bit plane.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarPlane<F> {
    pub width: usize,
    pub height: usize,
    pub samples: Vec<F>,
}

impl<F: Real> ScalarPlane<F> {
    #[inline]
    pub fn sample(&self, x: usize, y: usize) -> F {
        self.samples[y * self.width + x]
    }
}

/// 5-tap binomial low-pass kernel, DC-preserving.
const CSF_KERNEL: [f64; 5] = [1.0 / 16.0, 4.0 / 16.0, 6.0 / 16.0, 4.0 / 16.0, 1.0 / 16.0];

#[inline]
fn reflect(i: isize, len: usize) -> usize {
    // Symmetric boundary extension without sample repetition at the edge
    // folds back: -1 -> 1, len -> len-2.
    let len = len as isize;
    let mut i = i;
    while i < 0 || i >= len {
        if i < 0 {
            i = -i;
        }
        if i >= len {
            i = 2 * (len - 1) - i;
        }
    }
    i as usize
}

/// Separable CSF-inspired low-pass prefilter with symmetric boundary
/// extension. Constant planes pass through unchanged.
pub fn csf_prefilter<F: Real>(plane: &Plane) -> ScalarPlane<F> {
    let (w, h) = (plane.width, plane.height);
    let kernel: Vec<F> = CSF_KERNEL.iter().map(|&c| F::from_f64_lossy(c)).collect();
    // Horizontal pass.
    let mut horiz = vec![F::zero(); w * h];
    for y in 0..h {
        let row = plane.row(y);
        for x in 0..w {
            let mut acc = F::zero();
            for (k, &coeff) in kernel.iter().enumerate() {
                let xi = reflect(x as isize + k as isize - 2, w);
                acc = acc + coeff * F::from_usize_lossy(row[xi] as usize);
            }
            horiz[y * w + x] = acc;
        }
    }
    // Vertical pass.
    let mut out = vec![F::zero(); w * h];
    for y in 0..h {
        for x in 0..w {
            let mut acc = F::zero();
            for (k, &coeff) in kernel.iter().enumerate() {
                let yi = reflect(y as isize + k as isize - 2, h);
                acc = acc + coeff * horiz[yi * w + x];
            }
            out[y * w + x] = acc;
        }
    }
    ScalarPlane {
        width: w,
        height: h,
        samples: out,
    }
}

/// Stabilizer added to block deviations, on the 8-bit sample scale.
const EPS_STAB: f64 = 1.0;
/// Blocks with deviation below this are treated as flat.
const STD_FLOOR: f64 = 1e-6;

const SR_BLOCK: usize = 8;
const TR_BLOCK: usize = 16;
const TR_SEARCH: isize = 4;

/// A rectangle over a run of filtered frames, the unit SR/TR operate on.
#[derive(Debug, Clone, Copy)]
pub struct FilteredSegment<'a, F> {
    pub planes: &'a [ScalarPlane<F>],
    pub x: usize,
    pub y: usize,
    pub width: usize,
    pub height: usize,
}

impl<'a, F: Real> FilteredSegment<'a, F> {
    #[inline]
    fn sample(&self, frame: usize, x: usize, y: usize) -> F {
        self.planes[frame].sample(self.x + x, self.y + y)
    }
}

fn block_std<F: Real>(seg: &FilteredSegment<F>, frame: usize, bx: usize, by: usize, size: usize) -> F {
    let n = F::from_usize_lossy(size * size);
    let mut sum = F::zero();
    let mut sum_sq = F::zero();
    for y in by..by + size {
        for x in bx..bx + size {
            let v = seg.sample(frame, x, y);
            sum += v;
            sum_sq += v * v;
        }
    }
    let mean = sum / n;
    let ss = (sum_sq - sum * mean).max(F::zero());
    (ss / (n - F::one())).sqrt()
}

/// Solve a small symmetric linear system in place by Gaussian elimination
/// with partial pivoting. `a` is row-major n x n, `b` the right-hand side.
fn solve_in_place<F: Real>(a: &mut [F], b: &mut [F], n: usize) -> Option<Vec<F>> {
    for col in 0..n {
        let mut pivot = col;
        for row in col + 1..n {
            if a[row * n + col].abs() > a[pivot * n + col].abs() {
                pivot = row;
            }
        }
        if a[pivot * n + col].abs() < F::from_f64_lossy(1e-12) {
            return None;
        }
        if pivot != col {
            for k in 0..n {
                a.swap(col * n + k, pivot * n + k);
            }
            b.swap(col, pivot);
        }
        let inv = F::one() / a[col * n + col];
        for row in col + 1..n {
            let factor = a[row * n + col] * inv;
            for k in col..n {
                let v = a[col * n + k];
                a[row * n + k] = a[row * n + k] - factor * v;
            }
            let bv = b[col];
            b[row] = b[row] - factor * bv;
        }
    }
    let mut x = vec![F::zero(); n];
    for col in (0..n).rev() {
        let mut acc = b[col];
        for k in col + 1..n {
            acc = acc - a[col * n + k] * x[k];
        }
        x[col] = acc / a[col * n + col];
    }
    Some(x)
}

/// Residual RMS of the per-block least-squares causal predictor: each sample
/// is regressed on its left, top and top-left neighbours plus an intercept.
fn sr_block_residual_rms<F: Real>(
    seg: &FilteredSegment<F>,
    frame: usize,
    bx: usize,
    by: usize,
) -> F {
    const NREG: usize = 3;
    // Center regressors and target over the block; the intercept drops out
    // of the normal equations and stays unpenalized by the ridge, keeping
    // the residual invariant to a constant offset.
    let mut sums = [F::zero(); NREG];
    let mut sum_t = F::zero();
    let mut count = 0usize;
    for y in by + 1..by + SR_BLOCK {
        for x in bx + 1..bx + SR_BLOCK {
            sums[0] += seg.sample(frame, x - 1, y);
            sums[1] += seg.sample(frame, x, y - 1);
            sums[2] += seg.sample(frame, x - 1, y - 1);
            sum_t += seg.sample(frame, x, y);
            count += 1;
        }
    }
    let nf = F::from_usize_lossy(count);
    let means = [sums[0] / nf, sums[1] / nf, sums[2] / nf];
    let mean_t = sum_t / nf;

    let mut ata = [F::zero(); NREG * NREG];
    let mut atb = [F::zero(); NREG];
    let mut row = [F::zero(); NREG];
    for y in by + 1..by + SR_BLOCK {
        for x in bx + 1..bx + SR_BLOCK {
            row[0] = seg.sample(frame, x - 1, y) - means[0];
            row[1] = seg.sample(frame, x, y - 1) - means[1];
            row[2] = seg.sample(frame, x - 1, y - 1) - means[2];
            let target = seg.sample(frame, x, y) - mean_t;
            for i in 0..NREG {
                for j in 0..NREG {
                    ata[i * NREG + j] += row[i] * row[j];
                }
                atb[i] += row[i] * target;
            }
        }
    }
    // Tiny ridge keeps collinear regressors (e.g. pure vertical ramps)
    // solvable without affecting the residual measurably.
    let trace: F = (0..NREG).map(|i| ata[i * NREG + i]).sum();
    let ridge = F::from_f64_lossy(1e-12) * (trace / F::from_usize_lossy(NREG) + F::one());
    for i in 0..NREG {
        ata[i * NREG + i] += ridge;
    }
    let mut a = ata.to_vec();
    let mut b = atb.to_vec();
    let coeffs = match solve_in_place(&mut a, &mut b, NREG) {
        Some(c) => c,
        // Degenerate fit: fall back to the intercept-only predictor.
        None => vec![F::zero(); NREG],
    };
    let mut ss = F::zero();
    for y in by + 1..by + SR_BLOCK {
        for x in bx + 1..bx + SR_BLOCK {
            let predicted = coeffs[0] * (seg.sample(frame, x - 1, y) - means[0])
                + coeffs[1] * (seg.sample(frame, x, y - 1) - means[1])
                + coeffs[2] * (seg.sample(frame, x - 1, y - 1) - means[2])
                + mean_t;
            let r = seg.sample(frame, x, y) - predicted;
            ss += r * r;
        }
    }
    (ss / nf).max(F::zero()).sqrt()
}

/// Spatial randomness of a segment, in [0, 1]. Mean over 8x8 blocks of all
/// frames of the causal-prediction residual normalized by block deviation;
/// flat blocks contribute 0.
pub fn spatial_randomness<F: Real>(seg: &FilteredSegment<F>) -> Result<F> {
    if seg.width < SR_BLOCK || seg.height < SR_BLOCK {
        return Err(Error::Shape(format!(
            "segment {}x{} smaller than one {SR_BLOCK}x{SR_BLOCK} block",
            seg.width, seg.height
        )));
    }
    if seg.planes.is_empty() {
        return Err(Error::Shape("segment spans no frames".into()));
    }
    let cols = seg.width / SR_BLOCK;
    let rows = seg.height / SR_BLOCK;
    let eps = F::from_f64_lossy(EPS_STAB);
    let floor = F::from_f64_lossy(STD_FLOOR);
    let mut total = F::zero();
    let mut blocks = 0usize;
    for frame in 0..seg.planes.len() {
        for by in 0..rows {
            for bx in 0..cols {
                let (ox, oy) = (bx * SR_BLOCK, by * SR_BLOCK);
                let std = block_std(seg, frame, ox, oy, SR_BLOCK);
                let ratio = if std < floor {
                    F::zero()
                } else {
                    let rms = sr_block_residual_rms(seg, frame, ox, oy);
                    (rms / (std + eps)).min(F::one())
                };
                total += ratio;
                blocks += 1;
            }
        }
    }
    Ok(total / F::from_usize_lossy(blocks))
}

/// Temporal randomness of a segment, in [0, 1]. Mean over consecutive frame
/// pairs and 16x16 blocks of the best-match translation residual (full search
/// within +/-4 pixels) normalized by block deviation.
pub fn temporal_randomness<F: Real>(seg: &FilteredSegment<F>) -> Result<F> {
    if seg.width < TR_BLOCK || seg.height < TR_BLOCK {
        return Err(Error::Shape(format!(
            "segment {}x{} smaller than one {TR_BLOCK}x{TR_BLOCK} block",
            seg.width, seg.height
        )));
    }
    if seg.planes.len() < 2 {
        return Err(Error::Shape("temporal randomness needs >= 2 frames".into()));
    }
    let cols = seg.width / TR_BLOCK;
    let rows = seg.height / TR_BLOCK;
    let eps = F::from_f64_lossy(EPS_STAB);
    let floor = F::from_f64_lossy(STD_FLOOR);
    let n = F::from_usize_lossy(TR_BLOCK * TR_BLOCK);
    let mut total = F::zero();
    let mut blocks = 0usize;
    for frame in 1..seg.planes.len() {
        for by in 0..rows {
            for bx in 0..cols {
                let (ox, oy) = (bx * TR_BLOCK, by * TR_BLOCK);
                let std = block_std(seg, frame, ox, oy, TR_BLOCK);
                let ratio = if std < floor {
                    F::zero()
                } else {
                    let mut best = F::infinity();
                    for dy in -TR_SEARCH..=TR_SEARCH {
                        let py = oy as isize + dy;
                        if py < 0 || py as usize + TR_BLOCK > seg.height {
                            continue;
                        }
                        for dx in -TR_SEARCH..=TR_SEARCH {
                            let px = ox as isize + dx;
                            if px < 0 || px as usize + TR_BLOCK > seg.width {
                                continue;
                            }
                            let mut ssd = F::zero();
                            for y in 0..TR_BLOCK {
                                for x in 0..TR_BLOCK {
                                    let d = seg.sample(frame, ox + x, oy + y)
                                        - seg.sample(frame - 1, px as usize + x, py as usize + y);
                                    ssd += d * d;
                                }
                            }
                            if ssd < best {
                                best = ssd;
                            }
                        }
                    }
                    let rms = (best / n).sqrt();
                    (rms / (std + eps)).min(F::one())
                };
                total += ratio;
                blocks += 1;
            }
        }
    }
    Ok(total / F::from_usize_lossy(blocks))
}

/// Histogram over 10 uniform bins on [0, 1] (last bin right-closed),
/// normalized to sum 1.
pub fn histogram10<F: Real>(values: &[F]) -> Result<[F; MASKING_BINS]> {
    if values.is_empty() {
        return Err(Error::EmptyInput("no values to histogram".into()));
    }
    let mut counts = [0usize; MASKING_BINS];
    for &v in values {
        let vf = v.to_f64_lossy();
        if !(0.0..=1.0).contains(&vf) {
            return Err(Error::Range(format!("histogram value {vf} outside [0, 1]")));
        }
        let bin = ((vf * MASKING_BINS as f64) as usize).min(MASKING_BINS - 1);
        counts[bin] += 1;
    }
    let total = F::from_usize_lossy(values.len());
    let mut hist = [F::zero(); MASKING_BINS];
    for (h, &c) in hist.iter_mut().zip(&counts) {
        *h = F::from_usize_lossy(c) / total;
    }
    Ok(hist)
}

/// Per-segment SR and TR values over a full layout of the reference clip.
pub fn randomness_per_segment<F: Real>(
    reference: &Clip,
    layout: &SegmentLayout,
    config: &SegmentConfig,
) -> Result<(Vec<F>, Vec<F>)> {
    let filtered: Vec<ScalarPlane<F>> = reference
        .frames
        .iter()
        .map(|f| csf_prefilter(&f.luma))
        .collect();
    let mut sr = Vec::with_capacity(layout.total());
    let mut tr = Vec::with_capacity(layout.total());
    for index in layout.indices() {
        let view = extract(reference, index, layout, config)?;
        let seg = FilteredSegment {
            planes: &filtered[view.frame_start..view.frame_end],
            x: view.x,
            y: view.y,
            width: view.width,
            height: view.height,
        };
        sr.push(spatial_randomness(&seg)?);
        tr.push(temporal_randomness(&seg)?);
    }
    Ok((sr, tr))
}

/// Masking feature of a reference clip: SR histogram then TR histogram over
/// all segments of the layout.
pub fn masking_feature<F: Real>(
    reference: &Clip,
    layout: &SegmentLayout,
    config: &SegmentConfig,
) -> Result<MaskingFeature<F>> {
    let (sr, tr) = randomness_per_segment(reference, layout, config)?;
    let sr_hist = histogram10(&sr)?;
    let tr_hist = histogram10(&tr)?;
    let mut m = [F::zero(); 2 * MASKING_BINS];
    m[..MASKING_BINS].copy_from_slice(&sr_hist);
    m[MASKING_BINS..].copy_from_slice(&tr_hist);
    Ok(MaskingFeature(m))
}

const CACHE_HEADER_PREFIX: &str = "source_id,qp,x0";

fn cache_header() -> String {
    let cols: Vec<String> = (0..FEATURE_DIM).map(|i| format!("x{i}")).collect();
    format!("source_id,qp,{}", cols.join(","))
}

/// Write a feature cache CSV, deterministically ordered by (source_id, qp).
pub fn write_feature_cache<F: Real>(path: &Path, features: &[FeatureVector<F>]) -> Result<()> {
    let mut rows: Vec<&FeatureVector<F>> = features.iter().collect();
    rows.sort_by(|a, b| (&a.source_id, a.qp).cmp(&(&b.source_id, b.qp)));
    let mut file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = String::new();
    out.push_str(&cache_header());
    out.push('\n');
    for fv in rows {
        out.push_str(&fv.source_id);
        out.push(',');
        out.push_str(&fv.qp.to_string());
        for v in &fv.x {
            out.push(',');
            out.push_str(&format!("{:?}", v.to_f64_lossy()));
        }
        out.push('\n');
    }
    file.write_all(out.as_bytes()).map_err(|e| Error::io(path, e))
}

/// Read a feature cache CSV. Rows that fail to parse are reported, not
/// silently dropped.
pub fn read_feature_cache<F: Real>(path: &Path) -> Result<Vec<FeatureVector<F>>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let reader = BufReader::new(file);
    let mut lines = reader.lines().enumerate();
    match lines.next() {
        Some((_, Ok(header))) if header.starts_with(CACHE_HEADER_PREFIX) => {}
        _ => {
            return Err(Error::Corrupt {
                path: path.to_path_buf(),
                reason: "missing feature cache header".into(),
            })
        }
    }
    let mut features = Vec::new();
    for (lineno, line) in lines {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 2 + FEATURE_DIM {
            return Err(Error::Corrupt {
                path: path.to_path_buf(),
                reason: format!("line {}: wrong field count", lineno + 1),
            });
        }
        let qp: u8 = fields[1].parse().map_err(|_| Error::Corrupt {
            path: path.to_path_buf(),
            reason: format!("line {}: bad qp", lineno + 1),
        })?;
        let mut x = Vec::with_capacity(FEATURE_DIM);
        for raw in &fields[2..] {
            let v: f64 = raw.parse().map_err(|_| Error::Corrupt {
                path: path.to_path_buf(),
                reason: format!("line {}: bad feature value", lineno + 1),
            })?;
            x.push(F::from_f64_lossy(v));
        }
        features.push(FeatureVector {
            x,
            source_id: fields[0].to_string(),
            qp,
        });
    }
    Ok(features)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn slope_arithmetic() {
        assert_eq!(slope(90.0f64, 80.0, 2), 5.0);
        assert_eq!(slope(87.3f64, 87.3, 2), 0.0);
        assert_eq!(slope(80.0f64, 90.0, 2), -5.0);
    }

    #[test]
    fn select_significant_order_statistics() {
        let slopes: Vec<f64> = (1..=10).map(|v| v as f64).collect();
        let sel = select_significant(&slopes, 0.8).unwrap();
        // 8 largest are slopes 3..=10, i.e. indices 2..=9.
        assert_eq!(sel, (2..10).collect::<Vec<_>>());
    }

    #[test]
    fn select_significant_ties_keep_earlier_indices() {
        let slopes = vec![1.0f64; 490];
        let sel = select_significant(&slopes, 0.8).unwrap();
        assert_eq!(sel.len(), 392);
        assert_eq!(sel, (0..392).collect::<Vec<_>>());
    }

    #[test]
    fn select_significant_singleton() {
        let sel = select_significant(&[0.5f64], 0.8).unwrap();
        assert_eq!(sel, vec![0]);
    }

    #[test]
    fn select_significant_empty_is_error() {
        assert!(matches!(
            select_significant::<f64>(&[], 0.8),
            Err(Error::EmptyInput(_))
        ));
    }

    #[test]
    fn degradation_feature_lossless() {
        let f = degradation_feature(&vec![0.0f64; 50]).unwrap();
        assert!(f.0.iter().all(|&v| v == 1.0));
    }

    #[test]
    fn degradation_feature_uniform_ladder() {
        // One delta each at 2, 4, ..., 40: entry n-1 = n/20.
        let deltas: Vec<f64> = (1..=20).map(|n| 2.0 * n as f64).collect();
        let f = degradation_feature(&deltas).unwrap();
        for (n, &v) in f.0.iter().enumerate() {
            assert!((v - (n + 1) as f64 / 20.0).abs() < 1e-12);
        }
    }

    #[test]
    fn degradation_feature_beyond_cap() {
        let f = degradation_feature(&[50.0f64, 50.0]).unwrap();
        assert!(f.0.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn degradation_feature_matches_naive_recount() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..50 {
            let n = rng.gen_range(1..200);
            let deltas: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..60.0)).collect();
            let f = degradation_feature(&deltas).unwrap();
            for bin in 1..=20usize {
                let expected = deltas.iter().filter(|&&d| d <= 2.0 * bin as f64).count()
                    as f64
                    / n as f64;
                assert_eq!(f.0[bin - 1], expected);
            }
            // Non-decreasing, in [0, 1].
            assert!(f.0.windows(2).all(|w| w[0] <= w[1]));
            assert!(f.0.iter().all(|&v| (0.0..=1.0).contains(&v)));
        }
    }

    #[test]
    fn csf_preserves_constant_plane() {
        let plane = Plane::filled(32, 16, 93);
        let out: ScalarPlane<f64> = csf_prefilter(&plane);
        assert!(out.samples.iter().all(|&v| (v - 93.0).abs() < 1e-9));
    }

    #[test]
    fn csf_impulse_footprint_preserves_sum() {
        let mut samples = vec![0u8; 33 * 17];
        samples[8 * 33 + 16] = 255;
        let plane = Plane::new(33, 17, samples).unwrap();
        let out: ScalarPlane<f64> = csf_prefilter(&plane);
        let total: f64 = out.samples.iter().sum();
        assert!((total - 255.0).abs() < 1e-9);
        // Footprint is the separable 5x5 binomial stencil.
        let expected_center = 255.0 * (6.0 / 16.0) * (6.0 / 16.0);
        assert!((out.sample(16, 8) - expected_center).abs() < 1e-9);
        assert_eq!(out.sample(10, 8), 0.0);
    }

    #[test]
    fn csf_attenuates_checkerboard() {
        // Period-2 checkerboard: the highest representable frequency.
        let samples: Vec<u8> = (0..32 * 16)
            .map(|i| {
                let (x, y) = (i % 32, i / 32);
                if (x + y) % 2 == 0 {
                    200
                } else {
                    56
                }
            })
            .collect();
        let plane = Plane::new(32, 16, samples).unwrap();
        let out: ScalarPlane<f64> = csf_prefilter(&plane);
        // Direct-convolution oracle at an interior pixel.
        let mut oracle = 0.0;
        for ky in 0..5usize {
            for kx in 0..5usize {
                let v = plane.sample(10 + kx - 2, 8 + ky - 2) as f64;
                oracle += CSF_KERNEL[kx] * CSF_KERNEL[ky] * v;
            }
        }
        assert!((out.sample(10, 8) - oracle).abs() < 1e-9);
        let in_amp: f64 = 200.0 - 56.0;
        let out_max = out
            .samples
            .iter()
            .cloned()
            .fold(f64::NEG_INFINITY, f64::max);
        let out_min = out.samples.iter().cloned().fold(f64::INFINITY, f64::min);
        assert!(out_max - out_min < in_amp, "amplitude not reduced");
    }

    fn filtered_from_fn<F: Real>(
        frames: usize,
        w: usize,
        h: usize,
        f: impl Fn(usize, usize, usize) -> f64,
    ) -> Vec<ScalarPlane<F>> {
        (0..frames)
            .map(|t| ScalarPlane {
                width: w,
                height: h,
                samples: (0..w * h)
                    .map(|i| F::from_f64_lossy(f(t, i % w, i / w)))
                    .collect(),
            })
            .collect()
    }

    fn seg<F: Real>(planes: &[ScalarPlane<F>]) -> FilteredSegment<'_, F> {
        FilteredSegment {
            planes,
            x: 0,
            y: 0,
            width: planes[0].width,
            height: planes[0].height,
        }
    }

    #[test]
    fn sr_constant_segment_is_zero() {
        let planes = filtered_from_fn::<f64>(2, 32, 32, |_, _, _| 128.0);
        assert_eq!(spatial_randomness(&seg(&planes)).unwrap(), 0.0);
    }

    #[test]
    fn sr_linear_ramp_is_near_zero() {
        // Horizontal ramp: perfectly predictable from the left neighbour.
        let planes = filtered_from_fn::<f64>(1, 64, 32, |_, x, _| 10.0 + 2.0 * x as f64);
        let sr = spatial_randomness(&seg(&planes)).unwrap();
        assert!(sr < 1e-6, "ramp SR {sr}");
    }

    #[test]
    fn sr_iid_noise_is_high() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut total = 0.0;
        let runs = 100;
        for _ in 0..runs {
            let planes: Vec<ScalarPlane<f64>> = vec![ScalarPlane {
                width: 32,
                height: 32,
                samples: (0..32 * 32).map(|_| rng.gen_range(0.0..255.0)).collect(),
            }];
            total += spatial_randomness(&seg(&planes)).unwrap();
        }
        let mean = total / runs as f64;
        assert!(mean > 0.85, "noise SR mean {mean}");
    }

    #[test]
    fn sr_offset_invariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let base: Vec<f64> = (0..32 * 32).map(|_| rng.gen_range(0.0..100.0)).collect();
        let p1 = vec![ScalarPlane {
            width: 32,
            height: 32,
            samples: base.clone(),
        }];
        let p2 = vec![ScalarPlane {
            width: 32,
            height: 32,
            samples: base.iter().map(|v| v + 50.0).collect(),
        }];
        let a: f64 = spatial_randomness(&seg(&p1)).unwrap();
        let b: f64 = spatial_randomness(&seg(&p2)).unwrap();
        assert!((a - b).abs() < 1e-9);
    }

    #[test]
    fn tr_static_frames_are_zero() {
        let planes = filtered_from_fn::<f64>(4, 32, 32, |_, x, y| (x * 7 + y * 3) as f64);
        assert_eq!(temporal_randomness(&seg(&planes)).unwrap(), 0.0);
    }

    #[test]
    fn tr_global_translation_within_search_window() {
        // Textured pattern shifting 2 px/frame horizontally; exhaustive
        // search finds the exact match for interior blocks.
        let texture = |x: usize, y: usize| ((x * 13 + y * 29) % 97) as f64;
        let planes = filtered_from_fn::<f64>(3, 64, 48, move |t, x, y| texture(x + 2 * t, y));
        let tr: f64 = temporal_randomness(&seg(&planes)).unwrap();
        assert!(tr < 0.2, "translation TR {tr}");
    }

    #[test]
    fn tr_independent_noise_is_high() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut total = 0.0;
        let runs = 100;
        for _ in 0..runs {
            let planes: Vec<ScalarPlane<f64>> = (0..2)
                .map(|_| ScalarPlane {
                    width: 32,
                    height: 32,
                    samples: (0..32 * 32).map(|_| rng.gen_range(0.0..255.0)).collect(),
                })
                .collect();
            total += temporal_randomness(&seg(&planes)).unwrap();
        }
        let mean = total / runs as f64;
        assert!(mean > 0.7, "noise TR mean {mean}");
    }

    #[test]
    fn tr_single_frame_is_shape_error() {
        let planes = filtered_from_fn::<f64>(1, 32, 32, |_, _, _| 0.0);
        assert!(matches!(
            temporal_randomness(&seg(&planes)),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn sr_small_segment_is_shape_error() {
        let planes = filtered_from_fn::<f64>(1, 4, 4, |_, _, _| 0.0);
        assert!(matches!(
            spatial_randomness(&seg(&planes)),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn histogram_normalizes_and_respects_closed_last_bin() {
        let h = histogram10(&[0.0f64, 0.05, 0.95, 1.0]).unwrap();
        let sum: f64 = h.iter().sum();
        assert!((sum - 1.0).abs() < 1e-12);
        assert_eq!(h[0], 0.5);
        assert_eq!(h[9], 0.5);
    }

    #[test]
    fn assemble_orders_and_sizes() {
        let deg = DegradationFeature([0.25f64; DEGRADATION_BINS]);
        let mask = MaskingFeature([0.75f64; 2 * MASKING_BINS]);
        let fv = assemble(&deg, &mask, "src", 30);
        assert_eq!(fv.x.len(), FEATURE_DIM);
        assert!(fv.x[..20].iter().all(|&v| v == 0.25));
        assert!(fv.x[20..].iter().all(|&v| v == 0.75));
    }

    #[test]
    fn feature_cache_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cache.csv");
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let features: Vec<FeatureVector<f64>> = (0..5)
            .map(|i| FeatureVector {
                x: (0..FEATURE_DIM).map(|_| rng.gen_range(0.0..1.0)).collect(),
                source_id: format!("src{}", 4 - i),
                qp: 30 + i as u8,
            })
            .collect();
        write_feature_cache(&path, &features).unwrap();
        let back: Vec<FeatureVector<f64>> = read_feature_cache(&path).unwrap();
        assert_eq!(back.len(), 5);
        // Sorted by (source_id, qp) and bit-exact through the f64 formatter.
        assert!(back.windows(2).all(|w| (&w[0].source_id, w[0].qp) <= (&w[1].source_id, w[1].qp)));
        for fv in &features {
            let found = back
                .iter()
                .find(|b| b.source_id == fv.source_id && b.qp == fv.qp)
                .unwrap();
            assert_eq!(found.x, fv.x);
        }
    }
}
