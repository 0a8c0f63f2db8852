//! Satisfied-user-ratio modelling: Gaussian first-JND fit, empirical and
//! parametric SUR curves, JND extraction at a threshold, and least-squares
//! monotone projection for predicted curves.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;

/// First-JND annotations of one source: one QP value per subject, optionally
/// accompanied by raw per-(subject, qp) noticed flags.
#[derive(Debug, Clone, PartialEq)]
pub struct JndAnnotationSet {
    pub source_id: String,
    /// Per-subject first-JND QP, each in 1..=51.
    pub jnd_qps: Vec<u8>,
    /// Optional raw flags: `flags[m]` holds the QPs at which subject `m`
    /// noticed a difference.
    pub noticed: Option<Vec<Vec<u8>>>,
}

impl JndAnnotationSet {
    pub fn new(source_id: impl Into<String>, jnd_qps: Vec<u8>) -> Result<Self> {
        if jnd_qps.is_empty() {
            return Err(Error::EmptyInput("no subject annotations".into()));
        }
        if let Some(&bad) = jnd_qps.iter().find(|&&q| q == 0 || q > 51) {
            return Err(Error::Range(format!("jnd qp {bad} outside 1..=51")));
        }
        Ok(JndAnnotationSet {
            source_id: source_id.into(),
            jnd_qps,
            noticed: None,
        })
    }

    pub fn subject_count(&self) -> usize {
        self.jnd_qps.len()
    }
}

/// Gaussian model of the first-JND distribution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianJndModel<F> {
    pub mean: F,
    pub std: F,
}

/// Fit sample mean and unbiased (M-1) sample standard deviation.
pub fn fit_gaussian<F: Real>(annotations: &JndAnnotationSet) -> Result<GaussianJndModel<F>> {
    let m = annotations.subject_count();
    if m < 2 {
        return Err(Error::DegenerateSample(format!(
            "{}: need at least 2 subjects, have {m}",
            annotations.source_id
        )));
    }
    let mf = F::from_usize_lossy(m);
    let mean = annotations
        .jnd_qps
        .iter()
        .map(|&q| F::from_usize_lossy(q as usize))
        .sum::<F>()
        / mf;
    let ss = annotations
        .jnd_qps
        .iter()
        .map(|&q| {
            let d = F::from_usize_lossy(q as usize) - mean;
            d * d
        })
        .sum::<F>();
    let var = ss / (mf - F::one());
    if var <= F::zero() {
        return Err(Error::DegenerateSample(format!(
            "{}: zero variance in JND samples",
            annotations.source_id
        )));
    }
    Ok(GaussianJndModel {
        mean,
        std: var.sqrt(),
    })
}

/// Empirical SUR at QP `i`: one minus the fraction of subjects who notice a
/// difference. Uses raw flags when present, otherwise a subject notices at
/// `i` iff their first JND is <= i.
pub fn empirical_sur<F: Real>(annotations: &JndAnnotationSet, i: u8) -> F {
    let m = annotations.subject_count();
    let noticing = match &annotations.noticed {
        Some(flags) => flags
            .iter()
            .filter(|per_subject| per_subject.contains(&i))
            .count(),
        None => annotations.jnd_qps.iter().filter(|&&q| q <= i).count(),
    };
    F::one() - F::from_usize_lossy(noticing) / F::from_usize_lossy(m)
}

/// Parametric SUR at QP `i` per the Gaussian model: the normal upper-tail
/// probability Q((i - mean)/std), evaluated through erfc.
pub fn gaussian_sur<F: Real>(model: &GaussianJndModel<F>, i: F) -> F {
    let z = (i - model.mean) / model.std;
    q_function(z)
}

/// Standard normal upper-tail probability Q(z) = 1 - Phi(z).
pub fn q_function<F: Real>(z: F) -> F {
    let half = F::from_f64_lossy(0.5);
    let sqrt2 = F::from_f64_lossy(std::f64::consts::SQRT_2);
    half * (z / sqrt2).erfc()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Empirical,
    Gaussian,
    Predicted,
}

/// SUR as a function of QP on an integer grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurCurve<F> {
    pub grid: Vec<u8>,
    pub values: Vec<F>,
    pub provenance: Provenance,
}

impl<F: Real> SurCurve<F> {
    pub fn new(grid: Vec<u8>, values: Vec<F>, provenance: Provenance) -> Result<Self> {
        if grid.len() != values.len() || grid.is_empty() {
            return Err(Error::Shape(format!(
                "curve grid {} vs values {}",
                grid.len(),
                values.len()
            )));
        }
        if values
            .iter()
            .any(|v| !v.is_finite() || *v < -F::epsilon() || *v > F::one() + F::epsilon())
        {
            return Err(Error::Range("SUR values outside [0, 1]".into()));
        }
        Ok(SurCurve {
            grid,
            values,
            provenance,
        })
    }

    pub fn is_non_increasing(&self, tol: F) -> bool {
        self.values.windows(2).all(|w| w[1] <= w[0] + tol)
    }
}

/// Default integer qp grid 1..=51.
pub fn full_grid() -> Vec<u8> {
    (1..=51).collect()
}

/// Sample the Gaussian SUR curve on a grid.
pub fn gaussian_curve<F: Real>(model: &GaussianJndModel<F>, grid: &[u8]) -> SurCurve<F> {
    let values = grid
        .iter()
        .map(|&q| gaussian_sur(model, F::from_usize_lossy(q as usize)))
        .collect();
    SurCurve {
        grid: grid.to_vec(),
        values,
        provenance: Provenance::Gaussian,
    }
}

/// Sample the empirical SUR curve on a grid.
pub fn empirical_curve<F: Real>(annotations: &JndAnnotationSet, grid: &[u8]) -> SurCurve<F> {
    let values = grid.iter().map(|&q| empirical_sur(annotations, q)).collect();
    SurCurve {
        grid: grid.to_vec(),
        values,
        provenance: Provenance::Empirical,
    }
}

/// Result of a JND search on a curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum JndPoint<F> {
    /// QP (possibly fractional) at which the curve crosses the threshold.
    At(F),
    /// The curve never drops below the threshold on its grid.
    BeyondGrid,
}

impl<F: Real> JndPoint<F> {
    pub fn value(&self) -> Option<F> {
        match self {
            JndPoint::At(v) => Some(*v),
            JndPoint::BeyondGrid => None,
        }
    }
}

/// Smallest QP at which the curve crosses `threshold`, linearly interpolated
/// between grid points. The curve must be non-increasing; project first.
pub fn jnd_point<F: Real>(curve: &SurCurve<F>, threshold: F) -> Result<JndPoint<F>> {
    if threshold <= F::zero() || threshold >= F::one() {
        return Err(Error::Config(format!("threshold {threshold} outside (0, 1)")));
    }
    if !curve.is_non_increasing(F::from_f64_lossy(1e-9)) {
        return Err(Error::Contract(
            "curve is not non-increasing; apply monotone projection first".into(),
        ));
    }
    let first = curve.values[0];
    if first < threshold {
        return Ok(JndPoint::At(F::from_usize_lossy(curve.grid[0] as usize)));
    }
    for k in 0..curve.values.len() {
        let v = curve.values[k];
        if v == threshold {
            return Ok(JndPoint::At(F::from_usize_lossy(curve.grid[k] as usize)));
        }
        if v < threshold {
            // Crossing lies in (grid[k-1], grid[k]).
            let q0 = F::from_usize_lossy(curve.grid[k - 1] as usize);
            let q1 = F::from_usize_lossy(curve.grid[k] as usize);
            let v0 = curve.values[k - 1];
            let frac = (v0 - threshold) / (v0 - v);
            return Ok(JndPoint::At(q0 + frac * (q1 - q0)));
        }
    }
    Ok(JndPoint::BeyondGrid)
}

/// Closest non-increasing sequence in the least-squares sense
/// (pool-adjacent-violators on the reversed sequence), clamped to [0, 1].
pub fn monotone_project<F: Real>(grid: &[u8], raw: &[F]) -> Result<SurCurve<F>> {
    if raw.is_empty() || grid.len() != raw.len() {
        return Err(Error::EmptyInput("no values to project".into()));
    }
    // PAV for a non-decreasing fit on the reversed sequence equals a
    // non-increasing fit on the original.
    let mut means: Vec<F> = Vec::with_capacity(raw.len());
    let mut weights: Vec<F> = Vec::with_capacity(raw.len());
    for &v in raw.iter().rev() {
        means.push(v);
        weights.push(F::one());
        while means.len() > 1 && means[means.len() - 2] > means[means.len() - 1] {
            let (m2, w2) = (means.pop().unwrap(), weights.pop().unwrap());
            let (m1, w1) = (means.pop().unwrap(), weights.pop().unwrap());
            let w = w1 + w2;
            means.push((m1 * w1 + m2 * w2) / w);
            weights.push(w);
        }
    }
    let mut values = Vec::with_capacity(raw.len());
    for (m, w) in means.iter().zip(&weights) {
        let count = w.to_f64_lossy().round() as usize;
        for _ in 0..count {
            values.push(m.max(F::zero()).min(F::one()));
        }
    }
    values.reverse();
    SurCurve::new(grid.to_vec(), values, Provenance::Predicted)
}

/// Load annotation CSV `source_id,subject_id,first_jnd_qp` grouped by source.
pub fn load_annotations(path: &Path) -> Result<BTreeMap<String, JndAnnotationSet>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let reader = BufReader::new(file);
    let mut lines = reader.lines().enumerate();
    match lines.next() {
        Some((_, Ok(header))) if header.trim() == "source_id,subject_id,first_jnd_qp" => {}
        Some((_, Ok(header))) => {
            return Err(Error::Format(format!(
                "unexpected annotation header `{header}`"
            )))
        }
        Some((_, Err(e))) => return Err(Error::Format(format!("annotations: {e}"))),
        None => return Err(Error::Format("empty annotation file".into())),
    }
    let mut per_source: BTreeMap<String, Vec<u8>> = BTreeMap::new();
    for (lineno, line) in lines {
        let line = line.map_err(|e| Error::Format(format!("annotations: {e}")))?;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 3 {
            return Err(Error::Format(format!(
                "annotation line {}: expected 3 fields",
                lineno + 1
            )));
        }
        let qp: u8 = fields[2].trim().parse().map_err(|_| {
            Error::Format(format!("annotation line {}: bad qp", lineno + 1))
        })?;
        per_source
            .entry(fields[0].trim().to_string())
            .or_default()
            .push(qp);
    }
    per_source
        .into_iter()
        .map(|(id, qps)| JndAnnotationSet::new(id.clone(), qps).map(|a| (id, a)))
        .collect()
}
