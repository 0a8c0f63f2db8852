//! Epsilon-support-vector regression with an RBF kernel, trained by
//! sequential minimal optimization on the dual with maximal-violating-pair
//! working-set selection.

use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{de::DeserializeOwned, Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::FeatureVector;
use crate::scalar::Real;
use crate::sur::{monotone_project, SurCurve};

/// Per-dimension standardization fitted on training data. Dimensions with
/// zero variance are centred but not scaled.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureScaler<F> {
    pub mean: Vec<F>,
    /// Unbiased standard deviation; 0 marks a zero-variance dimension.
    pub std: Vec<F>,
}

pub fn fit_scaler<F: Real>(samples: &[Vec<F>]) -> Result<FeatureScaler<F>> {
    if samples.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "scaler needs >= 2 samples, have {}",
            samples.len()
        )));
    }
    let dim = samples[0].len();
    if samples.iter().any(|s| s.len() != dim) {
        return Err(Error::Shape("inconsistent feature dimensionality".into()));
    }
    let n = F::from_usize_lossy(samples.len());
    let mut mean = vec![F::zero(); dim];
    for s in samples {
        for (m, &v) in mean.iter_mut().zip(s) {
            *m += v;
        }
    }
    for m in mean.iter_mut() {
        *m = *m / n;
    }
    let mut std = vec![F::zero(); dim];
    for s in samples {
        for ((sd, &v), &m) in std.iter_mut().zip(s).zip(&mean) {
            let d = v - m;
            *sd += d * d;
        }
    }
    for sd in std.iter_mut() {
        *sd = (*sd / (n - F::one())).sqrt();
    }
    Ok(FeatureScaler { mean, std })
}

impl<F: Real> FeatureScaler<F> {
    pub fn transform(&self, x: &[F]) -> Result<Vec<F>> {
        if x.len() != self.mean.len() {
            return Err(Error::Shape(format!(
                "feature dimension {} != scaler dimension {}",
                x.len(),
                self.mean.len()
            )));
        }
        Ok(x.iter()
            .zip(&self.mean)
            .zip(&self.std)
            .map(|((&v, &m), &s)| {
                if s > F::zero() {
                    (v - m) / s
                } else {
                    v - m
                }
            })
            .collect())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SvrHyperParams<F> {
    pub c: F,
    pub epsilon: F,
    pub gamma: F,
    pub tolerance: F,
    pub max_passes: usize,
}

impl<F: Real> Default for SvrHyperParams<F> {
    fn default() -> Self {
        SvrHyperParams {
            c: F::from_f64_lossy(10.0),
            epsilon: F::from_f64_lossy(0.02),
            gamma: F::from_f64_lossy(1.0 / 40.0),
            tolerance: F::from_f64_lossy(1e-3),
            max_passes: 200_000,
        }
    }
}

impl<F: Real> SvrHyperParams<F> {
    pub fn validate(&self) -> Result<()> {
        if self.c <= F::zero()
            || self.epsilon < F::zero()
            || self.gamma <= F::zero()
            || self.tolerance <= F::zero()
        {
            return Err(Error::Config("invalid SVR hyperparameters".into()));
        }
        Ok(())
    }
}

pub fn rbf_kernel<F: Real>(gamma: F, a: &[F], b: &[F]) -> F {
    let mut d2 = F::zero();
    for (&x, &y) in a.iter().zip(b) {
        let d = x - y;
        d2 += d * d;
    }
    (-gamma * d2).exp()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvrModel<F> {
    /// Support vectors in scaled feature space.
    pub support_vectors: Vec<Vec<F>>,
    /// Dual coefficients alpha - alpha* per support vector.
    pub coefficients: Vec<F>,
    pub bias: F,
    pub params: SvrHyperParams<F>,
    pub scaler: FeatureScaler<F>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainReport<F> {
    pub iterations: usize,
    pub converged: bool,
    /// Final maximal KKT violation of the dual.
    pub residual: F,
    pub dual_objective: F,
}

/// Dual state of the SMO solver: 2n box variables, the first n for alpha
/// (sign +1) and the last n for alpha* (sign -1).
struct SmoState<F> {
    t: Vec<F>,
    grad: Vec<F>,
    n: usize,
}

#[inline]
fn sign<F: Real>(a: usize, n: usize) -> F {
    if a < n {
        F::one()
    } else {
        -F::one()
    }
}

/// Train on already-scaled samples. Deterministic for a fixed sample order.
pub fn train_scaled<F: Real>(
    samples: &[Vec<F>],
    targets: &[F],
    params: &SvrHyperParams<F>,
    scaler: FeatureScaler<F>,
) -> Result<(SvrModel<F>, TrainReport<F>)> {
    params.validate()?;
    let n = samples.len();
    if n == 0 {
        return Err(Error::InsufficientData("no training samples".into()));
    }
    if targets.len() != n {
        return Err(Error::Shape("samples and targets differ in length".into()));
    }
    for (s, &y) in samples.iter().zip(targets) {
        if s.iter().any(|v| !v.is_finite()) || !y.is_finite() {
            return Err(Error::Numeric("non-finite training input".into()));
        }
    }

    let kernel: Vec<F> = {
        let mut k = vec![F::zero(); n * n];
        for i in 0..n {
            for j in i..n {
                let v = rbf_kernel(params.gamma, &samples[i], &samples[j]);
                k[i * n + j] = v;
                k[j * n + i] = v;
            }
        }
        k
    };
    let kval = |i: usize, j: usize| kernel[(i % n) * n + (j % n)];

    // Linear term of the dual: eps - y for the alpha block, eps + y for the
    // alpha* block.
    let linear: Vec<F> = (0..2 * n)
        .map(|a| {
            if a < n {
                params.epsilon - targets[a]
            } else {
                params.epsilon + targets[a - n]
            }
        })
        .collect();

    let mut state = SmoState {
        t: vec![F::zero(); 2 * n],
        grad: linear.clone(),
        n,
    };

    let mut iterations = 0usize;
    let mut converged = false;
    let mut residual = F::zero();
    loop {
        // Maximal violating pair over I_up / I_low.
        let mut up: Option<(usize, F)> = None;
        let mut low: Option<(usize, F)> = None;
        for a in 0..2 * n {
            let s: F = sign(a, n);
            let v = -s * state.grad[a];
            let positive = s > F::zero();
            let in_up = (positive && state.t[a] < params.c) || (!positive && state.t[a] > F::zero());
            let in_low = (positive && state.t[a] > F::zero()) || (!positive && state.t[a] < params.c);
            if in_up && up.map_or(true, |(_, best)| v > best) {
                up = Some((a, v));
            }
            if in_low && low.map_or(true, |(_, best)| v < best) {
                low = Some((a, v));
            }
        }
        let ((i, m_up), (j, m_low)) = match (up, low) {
            (Some(u), Some(l)) => (u, l),
            _ => break,
        };
        residual = m_up - m_low;
        if residual <= params.tolerance {
            converged = true;
            break;
        }
        if iterations >= params.max_passes {
            break;
        }
        iterations += 1;

        let si: F = sign(i, n);
        let sj: F = sign(j, n);
        // The sign factors in Q cancel in the curvature term.
        let mut eta = kval(i, i) + kval(j, j) - F::from_f64_lossy(2.0) * kval(i, j);
        if eta <= F::from_f64_lossy(1e-12) {
            eta = F::from_f64_lossy(1e-12);
        }
        let mut delta = (m_up - m_low) / eta;
        // Feasible direction is t_i += si*delta, t_j -= sj*delta; clip to the
        // box for both variables.
        let room_i = if si > F::zero() {
            params.c - state.t[i]
        } else {
            state.t[i]
        };
        let room_j = if sj > F::zero() {
            state.t[j]
        } else {
            params.c - state.t[j]
        };
        delta = delta.min(room_i).min(room_j);
        if delta <= F::zero() {
            break;
        }
        state.t[i] = (state.t[i] + si * delta).max(F::zero()).min(params.c);
        state.t[j] = (state.t[j] - sj * delta).max(F::zero()).min(params.c);
        for a in 0..2 * n {
            let sa: F = sign(a, n);
            state.grad[a] += sa * delta * (kval(a, i) - kval(a, j));
        }
    }

    // beta_i = alpha_i - alpha_i*.
    let beta: Vec<F> = (0..n).map(|i| state.t[i] - state.t[i + n]).collect();

    // Bias from free dual variables; fall back to the midpoint of the
    // feasible interval when every variable sits at a bound.
    let mut free_sum = F::zero();
    let mut free_count = 0usize;
    for a in 0..2 * n {
        if state.t[a] > F::zero() && state.t[a] < params.c {
            let s: F = sign(a, n);
            free_sum += -s * state.grad[a];
            free_count += 1;
        }
    }
    let bias = if free_count > 0 {
        free_sum / F::from_usize_lossy(free_count)
    } else {
        let mut up_best = F::neg_infinity();
        let mut low_best = F::infinity();
        for a in 0..2 * n {
            let s: F = sign(a, n);
            let v = -s * state.grad[a];
            let positive = s > F::zero();
            let in_up = (positive && state.t[a] < params.c) || (!positive && state.t[a] > F::zero());
            let in_low = (positive && state.t[a] > F::zero()) || (!positive && state.t[a] < params.c);
            if in_up && v > up_best {
                up_best = v;
            }
            if in_low && v < low_best {
                low_best = v;
            }
        }
        (up_best + low_best) / F::from_f64_lossy(2.0)
    };

    let dual_objective = dual_objective_of(&state, &kernel, &linear);

    let mut support_vectors = Vec::new();
    let mut coefficients = Vec::new();
    for (i, &b) in beta.iter().enumerate() {
        if b.abs() > F::from_f64_lossy(1e-12) {
            support_vectors.push(samples[i].clone());
            coefficients.push(b);
        }
    }

    Ok((
        SvrModel {
            support_vectors,
            coefficients,
            bias,
            params: *params,
            scaler,
        },
        TrainReport {
            iterations,
            converged,
            residual,
            dual_objective,
        },
    ))
}

fn dual_objective_of<F: Real>(state: &SmoState<F>, kernel: &[F], linear: &[F]) -> F {
    let n = state.n;
    let beta: Vec<F> = (0..n).map(|i| state.t[i] - state.t[i + n]).collect();
    let mut quad = F::zero();
    for i in 0..n {
        if beta[i] == F::zero() {
            continue;
        }
        for j in 0..n {
            if beta[j] != F::zero() {
                quad += beta[i] * beta[j] * kernel[i * n + j];
            }
        }
    }
    let mut lin = F::zero();
    for a in 0..2 * n {
        lin += linear[a] * state.t[a];
    }
    quad * F::from_f64_lossy(0.5) + lin
}

/// Fit the scaler on raw samples, then train.
pub fn fit<F: Real>(
    raw_samples: &[Vec<F>],
    targets: &[F],
    params: &SvrHyperParams<F>,
) -> Result<(SvrModel<F>, TrainReport<F>)> {
    let scaler = fit_scaler(raw_samples)?;
    let scaled: Vec<Vec<F>> = raw_samples
        .iter()
        .map(|s| scaler.transform(s))
        .collect::<Result<_>>()?;
    train_scaled(&scaled, targets, params, scaler)
}

/// Predict on a raw (unscaled) feature vector. Output is intentionally not
/// clamped; curve assembly projects and clamps.
pub fn predict<F: Real>(model: &SvrModel<F>, x: &[F]) -> Result<F> {
    let scaled = model.scaler.transform(x)?;
    let mut acc = model.bias;
    for (sv, &coeff) in model.support_vectors.iter().zip(&model.coefficients) {
        acc += coeff * rbf_kernel(model.params.gamma, &scaled, sv);
    }
    Ok(acc)
}

/// Maximal violation of the epsilon-SVR optimality conditions over a
/// training set, from the fitted model alone.
pub fn kkt_violation<F: Real>(model: &SvrModel<F>, raw_samples: &[Vec<F>], targets: &[F]) -> Result<F> {
    let mut worst = F::zero();
    // Reconstruct per-sample dual coefficients by matching support vectors.
    for (x, &y) in raw_samples.iter().zip(targets) {
        let scaled = model.scaler.transform(x)?;
        let mut beta = F::zero();
        for (sv, &c) in model.support_vectors.iter().zip(&model.coefficients) {
            if sv == &scaled {
                beta = c;
            }
        }
        let f = predict(model, x)?;
        let r = f - y; // positive when over-predicting
        let eps = model.params.epsilon;
        let c = model.params.c;
        let near = F::from_f64_lossy(1e-9);
        let violation = if beta >= c - near {
            // alpha at C: requires r <= -eps.
            (r + eps).max(F::zero())
        } else if beta <= -c + near {
            (-r + eps).max(F::zero())
        } else if beta > near {
            // 0 < alpha < C: r = -eps exactly.
            (r + eps).abs()
        } else if beta < -near {
            (r - eps).abs()
        } else {
            // beta = 0: |r| <= eps.
            (r.abs() - eps).max(F::zero())
        };
        if violation > worst {
            worst = violation;
        }
    }
    Ok(worst)
}

/// Evaluate the model across a full QP grid for one source, then project to a
/// non-increasing SUR curve.
pub fn predict_sur_curve<F: Real>(
    model: &SvrModel<F>,
    grid: &[u8],
    features: &[FeatureVector<F>],
) -> Result<SurCurve<F>> {
    let mut raw = Vec::with_capacity(grid.len());
    for &qp in grid {
        let fv = features.iter().find(|f| f.qp == qp).ok_or_else(|| {
            let have: Vec<u8> = features.iter().map(|f| f.qp).collect();
            Error::MissingData(format!(
                "no feature vector at qp {qp}; features cover {have:?}"
            ))
        })?;
        raw.push(predict(model, &fv.x)?);
    }
    monotone_project(grid, &raw)
}

const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct ModelFile<F> {
    version: u32,
    model: SvrModel<F>,
}

pub fn save_model<F: Real + Serialize>(model: &SvrModel<F>, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    serde_json::to_writer_pretty(
        BufWriter::new(file),
        &ModelFile {
            version: MODEL_FORMAT_VERSION,
            model: model.clone(),
        },
    )
    .map_err(|e| Error::io(path, std::io::Error::other(e)))
}

pub fn load_model<F: Real + DeserializeOwned>(path: &Path) -> Result<SvrModel<F>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    // Peek the version before trusting the rest of the payload.
    let value: serde_json::Value =
        serde_json::from_reader(BufReader::new(file)).map_err(|e| Error::Corrupt {
            path: path.to_path_buf(),
            reason: e.to_string(),
        })?;
    let version = value
        .get("version")
        .and_then(|v| v.as_u64())
        .ok_or_else(|| Error::Corrupt {
            path: path.to_path_buf(),
            reason: "missing version tag".into(),
        })?;
    if version != MODEL_FORMAT_VERSION as u64 {
        return Err(Error::Version {
            found: version as u32,
            expected: MODEL_FORMAT_VERSION,
        });
    }
    let file: ModelFile<F> = serde_json::from_value(value).map_err(|e| Error::Corrupt {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })?;
    Ok(file.model)
}

/// Hyperparameter grid searched by `grid_search`.
#[derive(Debug, Clone)]
pub struct SearchGrid<F> {
    pub c: Vec<F>,
    pub gamma: Vec<F>,
    pub epsilon: Vec<F>,
}

impl<F: Real> Default for SearchGrid<F> {
    fn default() -> Self {
        SearchGrid {
            c: vec![1.0, 10.0, 100.0]
                .into_iter()
                .map(F::from_f64_lossy)
                .collect(),
            gamma: vec![0.0125, 0.025, 0.05]
                .into_iter()
                .map(F::from_f64_lossy)
                .collect(),
            epsilon: vec![0.01, 0.02, 0.05]
                .into_iter()
                .map(F::from_f64_lossy)
                .collect(),
        }
    }
}

/// Pick hyperparameters by cross-validated RMSE on an inner split.
pub fn grid_search<F: Real>(
    raw_samples: &[Vec<F>],
    targets: &[F],
    grid: &SearchGrid<F>,
    inner_folds: usize,
    seed: u64,
    base: &SvrHyperParams<F>,
) -> Result<SvrHyperParams<F>> {
    let n = raw_samples.len();
    if n < inner_folds || inner_folds < 2 {
        return Err(Error::Config(format!(
            "cannot split {n} samples into {inner_folds} inner folds"
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    order.shuffle(&mut rng);

    let mut best: Option<(F, SvrHyperParams<F>)> = None;
    for &c in &grid.c {
        for &gamma in &grid.gamma {
            for &epsilon in &grid.epsilon {
                let params = SvrHyperParams {
                    c,
                    gamma,
                    epsilon,
                    ..*base
                };
                let mut sse = F::zero();
                let mut count = 0usize;
                for fold in 0..inner_folds {
                    let test: Vec<usize> = order
                        .iter()
                        .copied()
                        .enumerate()
                        .filter(|(pos, _)| pos % inner_folds == fold)
                        .map(|(_, idx)| idx)
                        .collect();
                    let train: Vec<usize> = order
                        .iter()
                        .copied()
                        .filter(|idx| !test.contains(idx))
                        .collect();
                    if train.len() < 2 {
                        continue;
                    }
                    let tr_x: Vec<Vec<F>> =
                        train.iter().map(|&i| raw_samples[i].clone()).collect();
                    let tr_y: Vec<F> = train.iter().map(|&i| targets[i]).collect();
                    let (model, _) = fit(&tr_x, &tr_y, &params)?;
                    for &i in &test {
                        let p = predict(&model, &raw_samples[i])?;
                        let d = p - targets[i];
                        sse += d * d;
                        count += 1;
                    }
                }
                let rmse = (sse / F::from_usize_lossy(count.max(1))).sqrt();
                if best.as_ref().map_or(true, |(b, _)| rmse < *b) {
                    best = Some((rmse, params));
                }
            }
        }
    }
    Ok(best.expect("non-empty grid").1)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scaler_hand_statistics() {
        let samples = vec![vec![0.0f64; 3], vec![2.0; 3]];
        let scaler = fit_scaler(&samples).unwrap();
        assert!(scaler.mean.iter().all(|&m| (m - 1.0).abs() < 1e-12));
        let sqrt2 = 2.0f64.sqrt();
        assert!(scaler.std.iter().all(|&s| (s - sqrt2).abs() < 1e-12));
        // Centering: the mean maps to zero.
        let centered = scaler.transform(&[1.0, 1.0, 1.0]).unwrap();
        assert!(centered.iter().all(|&v| v.abs() < 1e-12));
    }

    #[test]
    fn scaler_zero_variance_shifts_only() {
        let samples = vec![vec![5.0f64, 1.0], vec![5.0, 3.0]];
        let scaler = fit_scaler(&samples).unwrap();
        assert_eq!(scaler.std[0], 0.0);
        let t = scaler.transform(&[7.0, 2.0]).unwrap();
        assert!((t[0] - 2.0).abs() < 1e-12); // shifted, not scaled
        assert!(t[1].abs() < 1e-12);
    }

    #[test]
    fn scaler_insufficient_data() {
        assert!(matches!(
            fit_scaler::<f64>(&[vec![1.0]]),
            Err(Error::InsufficientData(_))
        ));
    }

    #[test]
    fn constant_targets_land_in_tube() {
        let samples: Vec<Vec<f64>> = (0..12)
            .map(|i| vec![i as f64, (i * i % 7) as f64])
            .collect();
        let targets = vec![0.8f64; 12];
        let params = SvrHyperParams {
            epsilon: 0.01,
            ..SvrHyperParams::default()
        };
        let (model, _) = fit(&samples, &targets, &params).unwrap();
        for s in &samples {
            let p = predict(&model, s).unwrap();
            assert!((0.79..=0.81).contains(&p), "prediction {p}");
        }
    }

    #[test]
    fn far_from_all_support_vectors_decays_to_bias() {
        let samples: Vec<Vec<f64>> = (0..8).map(|i| vec![i as f64]).collect();
        let targets: Vec<f64> = (0..8).map(|i| 0.1 * i as f64).collect();
        let (model, _) = fit(&samples, &targets, &SvrHyperParams::default()).unwrap();
        let p = predict(&model, &[1e6]).unwrap();
        assert!((p - model.bias).abs() < 1e-9);
    }

    #[test]
    fn sinc_recovery_with_grid_search() {
        let samples: Vec<Vec<f64>> = (0..50)
            .map(|i| vec![-5.0 + 10.0 * i as f64 / 49.0])
            .collect();
        let sinc = |x: f64| {
            if x.abs() < 1e-12 {
                1.0
            } else {
                (std::f64::consts::PI * x).sin() / (std::f64::consts::PI * x)
            }
        };
        let targets: Vec<f64> = samples.iter().map(|s| sinc(s[0])).collect();
        let base = SvrHyperParams {
            epsilon: 0.005,
            tolerance: 1e-4,
            ..SvrHyperParams::default()
        };
        // Gamma applies after standardization, which shrinks x by its std of
        // about 2.95; candidates are chosen around 1..2 in raw units.
        let grid = SearchGrid {
            c: vec![100.0, 1000.0],
            gamma: vec![5.0, 10.0, 20.0],
            epsilon: vec![0.005, 0.01],
        };
        let params = grid_search(&samples, &targets, &grid, 4, 42, &base).unwrap();
        let (model, _) = fit(&samples, &targets, &params).unwrap();
        let mut sse = 0.0;
        for (s, &y) in samples.iter().zip(&targets) {
            let d = predict(&model, s).unwrap() - y;
            sse += d * d;
        }
        let rmse = (sse / 50.0).sqrt();
        assert!(rmse <= 0.02, "training RMSE {rmse}");
    }

    #[test]
    fn model_round_trip_is_exact() {
        let samples: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64, (i % 3) as f64]).collect();
        let targets: Vec<f64> = (0..10).map(|i| (i as f64 / 10.0).sin()).collect();
        let (model, _) = fit(&samples, &targets, &SvrHyperParams::default()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.json");
        save_model(&model, &path).unwrap();
        let back: SvrModel<f64> = load_model(&path).unwrap();
        for s in &samples {
            let a = predict(&model, s).unwrap();
            let b = predict(&back, s).unwrap();
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn truncated_model_file_is_corrupt() {
        let samples: Vec<Vec<f64>> = (0..4).map(|i| vec![i as f64]).collect();
        let targets = vec![0.1f64, 0.2, 0.3, 0.4];
        let (model, _) = fit(&samples, &targets, &SvrHyperParams::default()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.json");
        save_model(&model, &path).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() / 2]).unwrap();
        assert!(matches!(
            load_model::<f64>(&path),
            Err(Error::Corrupt { .. })
        ));
    }

    #[test]
    fn unknown_version_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.json");
        std::fs::write(&path, r#"{"version": 99, "model": {}}"#).unwrap();
        assert!(matches!(
            load_model::<f64>(&path),
            Err(Error::Version { found: 99, .. })
        ));
    }

    #[test]
    fn dual_feasibility_holds() {
        let samples: Vec<Vec<f64>> = (0..15)
            .map(|i| vec![(i as f64 * 0.7).sin(), (i as f64 * 0.3).cos()])
            .collect();
        let targets: Vec<f64> = (0..15).map(|i| 0.5 + 0.3 * (i as f64 * 0.5).sin()).collect();
        let params = SvrHyperParams::<f64>::default();
        let (model, report) = fit(&samples, &targets, &params).unwrap();
        assert!(report.converged);
        let sum: f64 = model.coefficients.iter().sum();
        assert!(sum.abs() < 1e-9, "coefficient sum {sum}");
        assert!(model
            .coefficients
            .iter()
            .all(|c| c.abs() <= params.c + 1e-9));
        let viol = kkt_violation(&model, &samples, &targets).unwrap();
        assert!(viol <= params.tolerance + 1e-6, "KKT violation {viol}");
    }
}
