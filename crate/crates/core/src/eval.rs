//! Evaluation protocol: dataset manifests, k-fold planning, the ΔSUR / ΔQP
//! metrics, end-to-end runs, and a deterministic synthetic dataset generator
//! for desk-scale verification.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{
    assemble, degradation_feature, masking_feature, select_significant, slopes, FeatureVector,
    SlopeParams,
};
use crate::media::{clip_from_luma, read_raw, read_y4m, Clip, ClipRole, FrameRate, Plane, RawSidecar};
use crate::quality::{score_all, Metric, MetricId, ScoreTable};
use crate::segment::{layout, SegmentConfig, SegmentLayout};
use crate::sur::{
    empirical_curve, fit_gaussian, gaussian_curve, jnd_point, GaussianJndModel, JndAnnotationSet,
    JndPoint, SurCurve,
};
use crate::svr::{
    fit_scaler, grid_search, predict_sur_curve, train_scaled, SearchGrid, SvrHyperParams, SvrModel,
};

/// Procedural reference clip recipe: mixtures of moving gradients, structured
/// texture and a noise field whose amplitude scales with the masking
/// strength mu.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticClipRecipe {
    pub width: usize,
    pub height: usize,
    pub fps: u32,
    pub frames: usize,
    /// Masking strength in [0, 1].
    pub masking_strength: f64,
    pub seed: u64,
}

/// Ground-truth JND distribution a synthetic source draws its subject
/// annotations from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticJnd {
    pub mean: f64,
    pub std: f64,
    pub subjects: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClipSource {
    Y4m { path: PathBuf },
    Raw { path: PathBuf, sidecar: PathBuf },
    Synthetic(SyntheticClipRecipe),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CodedSource {
    /// One coded clip file per qp.
    Paths { paths: BTreeMap<u8, PathBuf> },
    /// Blur-plus-quantization surrogates derived from the reference.
    Synthetic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnnotationSource {
    Csv { path: PathBuf },
    Synthetic(SyntheticJnd),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceEntry {
    pub id: String,
    pub resolution: String,
    pub reference: ClipSource,
    pub coded: CodedSource,
    pub annotations: AnnotationSource,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub qp_grid: Vec<u8>,
    pub sources: Vec<SourceEntry>,
}

impl DatasetManifest {
    pub fn load(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let manifest: DatasetManifest = serde_json::from_reader(BufReader::new(file))
            .map_err(|e| Error::Corrupt {
                path: path.to_path_buf(),
                reason: e.to_string(),
            })?;
        manifest.validate()?;
        Ok(manifest)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        serde_json::to_writer_pretty(file, self)
            .map_err(|e| Error::io(path, std::io::Error::other(e)))
    }

    pub fn validate(&self) -> Result<()> {
        if self.qp_grid.is_empty() {
            return Err(Error::Config("manifest has an empty qp grid".into()));
        }
        if !self.qp_grid.windows(2).all(|w| w[0] < w[1]) {
            return Err(Error::Config("qp grid must be strictly increasing".into()));
        }
        if let Some(&bad) = self.qp_grid.iter().find(|&&q| q == 0 || q > 51) {
            return Err(Error::Config(format!("qp {bad} outside 1..=51")));
        }
        let mut seen = std::collections::BTreeSet::new();
        for s in &self.sources {
            if !seen.insert(&s.id) {
                return Err(Error::Config(format!("duplicate source id {}", s.id)));
            }
            if let CodedSource::Paths { paths } = &s.coded {
                for &qp in &self.qp_grid {
                    if !paths.contains_key(&qp) {
                        return Err(Error::Config(format!(
                            "source {} lacks a coded clip at qp {qp}",
                            s.id
                        )));
                    }
                }
            }
        }
        Ok(())
    }
}

/// Configuration of `generate_synthetic`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub source_count: usize,
    pub width: usize,
    pub height: usize,
    pub fps: u32,
    pub duration_s: f64,
    pub qp_grid: Vec<u8>,
    pub subjects: usize,
    /// JND mean at masking strength 0.
    pub jnd_base: f64,
    /// Increase in JND mean per unit of masking strength.
    pub jnd_masking_gain: f64,
    pub jnd_std: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            source_count: 40,
            width: 640,
            height: 360,
            fps: 24,
            duration_s: 2.0,
            qp_grid: (1..=25).map(|i| 2 * i).collect(),
            subjects: 30,
            jnd_base: 22.0,
            jnd_masking_gain: 10.0,
            jnd_std: 3.0,
        }
    }
}

fn derived_seed(seed: u64, salt: u64) -> u64 {
    // splitmix64 step, enough to decorrelate per-source streams.
    let mut z = seed.wrapping_add(salt.wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Build a deterministic synthetic manifest. Per-source masking strengths are
/// drawn uniformly from [0, 1] and ground-truth JND means follow
/// `jnd_base + jnd_masking_gain * mu`.
pub fn generate_synthetic(config: &SynthConfig, seed: u64) -> Result<DatasetManifest> {
    if config.source_count == 0 {
        return Err(Error::Config("source count must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let frames = (config.duration_s * config.fps as f64).round() as usize;
    let sources = (0..config.source_count)
        .map(|i| {
            let mu: f64 = rng.gen_range(0.0..=1.0);
            SourceEntry {
                id: format!("synth-{i:03}"),
                resolution: format!("{}x{}", config.width, config.height),
                reference: ClipSource::Synthetic(SyntheticClipRecipe {
                    width: config.width,
                    height: config.height,
                    fps: config.fps,
                    frames,
                    masking_strength: mu,
                    seed: derived_seed(seed, 2 * i as u64 + 1),
                }),
                coded: CodedSource::Synthetic,
                annotations: AnnotationSource::Synthetic(SyntheticJnd {
                    mean: config.jnd_base + config.jnd_masking_gain * mu,
                    std: config.jnd_std,
                    subjects: config.subjects,
                    seed: derived_seed(seed, 2 * i as u64 + 2),
                }),
            }
        })
        .collect();
    Ok(DatasetManifest {
        qp_grid: config.qp_grid.clone(),
        sources,
    })
}

/// Render the procedural reference clip of a recipe.
pub fn synthesize_reference(recipe: &SyntheticClipRecipe) -> Result<Clip> {
    let (w, h) = (recipe.width, recipe.height);
    let mu = recipe.masking_strength;
    let mut rng = ChaCha8Rng::seed_from_u64(recipe.seed);
    // Noise amplitude ramps across the frame so segments span a range of
    // randomness values, and scales with the masking strength.
    let noise_gain = 45.0 * mu;
    let speed = 0.8 + 2.4 * mu; // pixels per frame of gradient drift
    let tau = std::f64::consts::TAU;
    let mut planes = Vec::with_capacity(recipe.frames);
    for f in 0..recipe.frames {
        // Separable bases, precomputed per frame.
        let col: Vec<f64> = (0..w)
            .map(|x| 45.0 * (tau * ((x as f64 + speed * f as f64) / 64.0)).sin())
            .collect();
        let row: Vec<f64> = (0..h)
            .map(|y| 25.0 * (tau * (y as f64 / 48.0 + 0.02 * f as f64)).sin())
            .collect();
        let tex_x: Vec<f64> = (0..w)
            .map(|x| (tau * (x as f64 / 8.0) + 0.1 * f as f64).sin())
            .collect();
        let tex_y: Vec<f64> = (0..h).map(|y| (tau * (y as f64 / 8.0)).sin()).collect();
        let mut samples = vec![0u8; w * h];
        for y in 0..h {
            let ramp_y = y as f64 / (h - 1).max(1) as f64;
            for x in 0..w {
                let ramp = 0.5 * (x as f64 / (w - 1).max(1) as f64 + ramp_y);
                let amp = noise_gain * ramp;
                let mut v = 118.0 + col[x] + row[y] + 22.0 * tex_x[x] * tex_y[y];
                if amp > 0.0 {
                    v += rng.gen_range(-amp..=amp);
                }
                samples[y * w + x] = v.clamp(0.0, 255.0) as u8;
            }
        }
        planes.push(Plane::new(w, h, samples)?);
    }
    clip_from_luma(
        planes,
        FrameRate {
            num: recipe.fps,
            den: 1,
        },
        ClipRole::Reference,
    )
}

/// Coded surrogate at qp: blend towards a blurred copy and quantize, with
/// both strengths monotone in qp. Deliberately not a codec model; ground
/// truth on synthetic data is known by construction.
pub fn degrade(reference: &Clip, blurred: &[Vec<f64>], qp: u8) -> Result<Clip> {
    // Mild blur blend plus quantization tuned so the mapped-PSNR drop sweeps
    // its useful range across the full qp ladder.
    let lambda = 0.15 * qp as f64 / 51.0;
    let step = 1.0 + 0.22 * qp as f64;
    let (w, h) = (reference.metadata.width, reference.metadata.height);
    let planes = reference
        .frames
        .iter()
        .zip(blurred)
        .map(|(frame, blur)| {
            let mut samples = vec![0u8; w * h];
            for (i, s) in samples.iter_mut().enumerate() {
                let v = (1.0 - lambda) * frame.luma.samples[i] as f64 + lambda * blur[i];
                let q = (v / step).round() * step;
                *s = q.clamp(0.0, 255.0) as u8;
            }
            Plane::new(w, h, samples)
        })
        .collect::<Result<Vec<_>>>()?;
    clip_from_luma(
        planes,
        reference.metadata.frame_rate,
        ClipRole::Coded { qp },
    )
}

/// Blurred luma planes of a clip (one 5-tap binomial pass per axis), shared
/// across all qp surrogates of one source.
pub fn blurred_luma(reference: &Clip) -> Vec<Vec<f64>> {
    reference
        .frames
        .iter()
        .map(|f| crate::features::csf_prefilter::<f64>(&f.luma).samples)
        .collect()
}

pub fn realize_reference(entry: &SourceEntry) -> Result<Clip> {
    match &entry.reference {
        ClipSource::Y4m { path } => read_y4m(path, ClipRole::Reference),
        ClipSource::Raw { path, sidecar } => {
            let file = File::open(sidecar).map_err(|e| Error::io(sidecar, e))?;
            let sc: RawSidecar =
                serde_json::from_reader(BufReader::new(file)).map_err(|e| Error::Corrupt {
                    path: sidecar.clone(),
                    reason: e.to_string(),
                })?;
            read_raw(path, &sc, ClipRole::Reference)
        }
        ClipSource::Synthetic(recipe) => synthesize_reference(recipe),
    }
}

pub fn realize_annotations(entry: &SourceEntry) -> Result<JndAnnotationSet> {
    match &entry.annotations {
        AnnotationSource::Csv { path } => {
            let all = crate::sur::load_annotations(path)?;
            all.get(&entry.id).cloned().ok_or_else(|| {
                Error::MissingData(format!("no annotations for source {} in {path:?}", entry.id))
            })
        }
        AnnotationSource::Synthetic(jnd) => {
            let normal = Normal::new(jnd.mean, jnd.std)
                .map_err(|e| Error::Numeric(format!("bad synthetic JND: {e}")))?;
            let mut rng = ChaCha8Rng::seed_from_u64(jnd.seed);
            let qps: Vec<u8> = (0..jnd.subjects)
                .map(|_| normal.sample(&mut rng).round().clamp(1.0, 51.0) as u8)
                .collect();
            JndAnnotationSet::new(entry.id.clone(), qps)
        }
    }
}

/// Options shared by feature extraction and evaluation runs.
#[derive(Debug, Clone, Serialize)]
pub struct PipelineConfig {
    pub metric: MetricId,
    pub segment: SegmentConfig,
    pub slope_k: u8,
    pub slope_p: f64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        let slope = SlopeParams::default();
        PipelineConfig {
            metric: MetricId::PsnrMapped,
            segment: SegmentConfig::default(),
            slope_k: slope.k,
            slope_p: slope.p,
        }
    }
}

impl PipelineConfig {
    fn slope_params(&self) -> SlopeParams {
        SlopeParams {
            k: self.slope_k,
            p: self.slope_p,
        }
    }
}

fn bind_metric<'a>(
    metric: MetricId,
    table: Option<&'a ScoreTable>,
    clip_id: &'a str,
    qp: u8,
) -> Result<Metric<'a>> {
    match metric {
        MetricId::PsnrMapped => Ok(Metric::PsnrMapped),
        MetricId::StructSim => Ok(Metric::StructSim),
        MetricId::External => {
            let table = table.ok_or_else(|| {
                Error::Config("external metric requires a score table".into())
            })?;
            Ok(Metric::External {
                table,
                clip_id,
                qp,
            })
        }
    }
}

/// Reference segment scores: exactly 100 for the built-in metrics; for the
/// external metric, qp-0 rows are used when present, otherwise 100.
fn reference_scores(
    metric: MetricId,
    table: Option<&ScoreTable>,
    clip_id: &str,
    seg_layout: &SegmentLayout,
) -> Vec<f64> {
    match (metric, table) {
        (MetricId::External, Some(t)) => seg_layout
            .indices()
            .map(|idx| t.get(clip_id, 0, idx).unwrap_or(100.0))
            .collect(),
        _ => vec![100.0; seg_layout.total()],
    }
}

/// Build the 40-D feature vector for every qp of one source.
pub fn extract_source_features(
    entry: &SourceEntry,
    qp_grid: &[u8],
    config: &PipelineConfig,
    table: Option<&ScoreTable>,
) -> Result<Vec<FeatureVector<f64>>> {
    config.slope_params().validate()?;
    let reference = realize_reference(entry)?;
    let seg_layout = layout(&reference.metadata, &config.segment)?;
    let mask = masking_feature::<f64>(&reference, &seg_layout, &config.segment)?;
    let ref_scores = reference_scores(config.metric, table, &entry.id, &seg_layout);

    let blurred = match entry.coded {
        CodedSource::Synthetic => Some(blurred_luma(&reference)),
        CodedSource::Paths { .. } => None,
    };

    let mut scores_by_qp: BTreeMap<u8, Vec<f64>> = BTreeMap::new();
    let mut features = Vec::with_capacity(qp_grid.len());
    for &qp in qp_grid {
        let coded = match &entry.coded {
            CodedSource::Paths { paths } => {
                let path = paths.get(&qp).ok_or_else(|| {
                    Error::MissingData(format!("source {} has no coded clip at qp {qp}", entry.id))
                })?;
                read_y4m(path, ClipRole::Coded { qp })?
            }
            CodedSource::Synthetic => degrade(
                &reference,
                blurred.as_ref().expect("blur precomputed"),
                qp,
            )?,
        };
        if coded.metadata.frame_count != reference.metadata.frame_count {
            return Err(Error::Shape(format!(
                "source {}: coded clip at qp {qp} has {} frames, reference {}",
                entry.id, coded.metadata.frame_count, reference.metadata.frame_count
            )));
        }
        let metric = bind_metric(config.metric, table, &entry.id, qp)?;
        if let (MetricId::External, Some(t)) = (config.metric, table) {
            t.validate_complete(&entry.id, qp, &seg_layout)?;
        }
        let scores: Vec<f64> = score_all(metric, &reference, &coded, &seg_layout, &config.segment)?;

        // Significant-segment selection from the slope towards qp - k; when
        // the neighbour is missing (start of grid) every segment is kept.
        let params = config.slope_params();
        let selected: Vec<usize> = match qp
            .checked_sub(params.k)
            .and_then(|prev| scores_by_qp.get(&prev))
        {
            Some(prev_scores) => {
                let sl = slopes(prev_scores, &scores, params.k)?;
                select_significant(&sl, params.p)?
            }
            None => (0..scores.len()).collect(),
        };
        let deltas: Vec<f64> = selected
            .iter()
            .map(|&i| ref_scores[i] - scores[i])
            .collect();
        let deg = degradation_feature(&deltas)?;
        features.push(assemble(&deg, &mask, entry.id.clone(), qp));
        scores_by_qp.insert(qp, scores);
    }
    Ok(features)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub k: usize,
    pub seed: u64,
    /// Test source ids per fold; folds partition the sources.
    pub folds: Vec<Vec<String>>,
}

/// Deterministic near-equal k-fold split of the source ids.
pub fn plan_folds(source_ids: &[String], k: usize, seed: u64) -> Result<FoldPlan> {
    if k < 2 {
        return Err(Error::Config("need at least 2 folds".into()));
    }
    if source_ids.len() < k {
        return Err(Error::Config(format!(
            "cannot split {} sources into {k} folds",
            source_ids.len()
        )));
    }
    let mut ids = source_ids.to_vec();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    ids.shuffle(&mut rng);
    let mut folds = vec![Vec::new(); k];
    for (i, id) in ids.into_iter().enumerate() {
        folds[i % k].push(id);
    }
    Ok(FoldPlan { k, seed, folds })
}

/// Mean absolute SUR difference over a shared qp grid.
pub fn delta_sur(predicted: &SurCurve<f64>, truth: &SurCurve<f64>) -> Result<f64> {
    if predicted.grid != truth.grid {
        return Err(Error::Shape("curves sampled on different grids".into()));
    }
    let n = predicted.values.len() as f64;
    Ok(predicted
        .values
        .iter()
        .zip(&truth.values)
        .map(|(&p, &t)| (p - t).abs())
        .sum::<f64>()
        / n)
}

/// Absolute JND difference in qp units; `None` when either point lies beyond
/// the grid (tallied separately by the report).
pub fn delta_qp(predicted: JndPoint<f64>, truth: JndPoint<f64>) -> Option<f64> {
    match (predicted.value(), truth.value()) {
        (Some(p), Some(t)) => Some((p - t).abs()),
        _ => None,
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct EvalConfig {
    pub pipeline: PipelineConfig,
    pub folds: usize,
    pub seed: u64,
    pub svr: SvrHyperParams<f64>,
    pub use_grid_search: bool,
    pub jnd_threshold: f64,
    /// Ground truth from the raw empirical CDF instead of the Gaussian fit.
    pub truth_from_empirical: bool,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            pipeline: PipelineConfig::default(),
            folds: 5,
            seed: 17,
            svr: SvrHyperParams::default(),
            use_grid_search: false,
            jnd_threshold: 0.75,
            truth_from_empirical: false,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SourceResult {
    pub source_id: String,
    pub resolution: String,
    pub fold: usize,
    pub truth_jnd: Option<f64>,
    pub predicted_jnd: Option<f64>,
    pub delta_sur: f64,
    pub delta_qp: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct EvaluationReport {
    pub per_source: Vec<SourceResult>,
    /// Mean over all evaluated sources.
    pub mean_delta_sur: f64,
    /// Mean over sources where both JND points are on-grid.
    pub mean_delta_qp: Option<f64>,
    /// Aggregates per resolution tag, Table-style.
    pub per_resolution: BTreeMap<String, (f64, Option<f64>)>,
    /// Sources skipped before training, with reasons.
    pub excluded: Vec<(String, String)>,
    /// Sources whose predicted or true JND lay beyond the grid.
    pub beyond_grid: usize,
    pub truth_source: &'static str,
    pub config_echo: String,
    /// Predicted curves keyed by source id, for plotting.
    #[serde(skip)]
    pub predicted_curves: BTreeMap<String, SurCurve<f64>>,
    /// Truth curves keyed by source id.
    #[serde(skip)]
    pub truth_curves: BTreeMap<String, SurCurve<f64>>,
}

/// Everything run_evaluation needs, realized up front so any missing artifact
/// aborts before training starts.
pub struct Dataset {
    pub features: BTreeMap<String, Vec<FeatureVector<f64>>>,
    pub truth_curves: BTreeMap<String, SurCurve<f64>>,
    pub truth_models: BTreeMap<String, Option<GaussianJndModel<f64>>>,
    pub resolutions: BTreeMap<String, String>,
    pub excluded: Vec<(String, String)>,
}

/// Realize features and truth curves for every source. Sources with
/// degenerate annotations are excluded with a reason; any other failure
/// aborts.
pub fn collect_dataset(
    manifest: &DatasetManifest,
    config: &EvalConfig,
    table: Option<&ScoreTable>,
    mut precomputed: Option<&mut BTreeMap<String, Vec<FeatureVector<f64>>>>,
) -> Result<Dataset> {
    manifest.validate()?;
    let mut dataset = Dataset {
        features: BTreeMap::new(),
        truth_curves: BTreeMap::new(),
        truth_models: BTreeMap::new(),
        resolutions: BTreeMap::new(),
        excluded: Vec::new(),
    };
    for entry in &manifest.sources {
        let annotations = realize_annotations(entry)?;
        let (curve, model) = if config.truth_from_empirical {
            (
                empirical_curve::<f64>(&annotations, &manifest.qp_grid),
                fit_gaussian(&annotations).ok(),
            )
        } else {
            match fit_gaussian::<f64>(&annotations) {
                Ok(model) => (gaussian_curve(&model, &manifest.qp_grid), Some(model)),
                Err(e) => {
                    dataset.excluded.push((entry.id.clone(), e.to_string()));
                    continue;
                }
            }
        };
        let features = match precomputed
            .as_mut()
            .and_then(|cache| cache.remove(&entry.id))
        {
            Some(f) => f,
            None => extract_source_features(entry, &manifest.qp_grid, &config.pipeline, table)?,
        };
        if features.len() != manifest.qp_grid.len() {
            return Err(Error::MissingData(format!(
                "source {}: {} feature rows for {} grid points",
                entry.id,
                features.len(),
                manifest.qp_grid.len()
            )));
        }
        dataset.features.insert(entry.id.clone(), features);
        dataset.truth_curves.insert(entry.id.clone(), curve);
        dataset.truth_models.insert(entry.id.clone(), model);
        dataset
            .resolutions
            .insert(entry.id.clone(), entry.resolution.clone());
    }
    Ok(dataset)
}

/// Train one fold's model on the pooled (source, qp) samples of the train
/// split.
fn train_fold(
    train_ids: &[String],
    dataset: &Dataset,
    config: &EvalConfig,
) -> Result<SvrModel<f64>> {
    let mut xs: Vec<Vec<f64>> = Vec::new();
    let mut ys: Vec<f64> = Vec::new();
    for id in train_ids {
        let features = &dataset.features[id];
        let truth = &dataset.truth_curves[id];
        for fv in features {
            let pos = truth
                .grid
                .iter()
                .position(|&q| q == fv.qp)
                .expect("feature qp on grid");
            xs.push(fv.x.clone());
            ys.push(truth.values[pos]);
        }
    }
    if xs.is_empty() {
        return Err(Error::InsufficientData("empty training set".into()));
    }
    let params = if config.use_grid_search {
        grid_search(
            &xs,
            &ys,
            &SearchGrid::default(),
            4,
            config.seed,
            &config.svr,
        )?
    } else {
        config.svr
    };
    let scaler = fit_scaler(&xs)?;
    let scaled: Vec<Vec<f64>> = xs
        .iter()
        .map(|x| scaler.transform(x))
        .collect::<Result<_>>()?;
    let (model, _report) = train_scaled(&scaled, &ys, &params, scaler)?;
    Ok(model)
}

/// The full protocol: plan folds, train per fold, predict test curves,
/// aggregate ΔSUR / ΔQP.
pub fn run_evaluation(
    manifest: &DatasetManifest,
    config: &EvalConfig,
    table: Option<&ScoreTable>,
    precomputed: Option<&mut BTreeMap<String, Vec<FeatureVector<f64>>>>,
) -> Result<EvaluationReport> {
    // Fail fast on an impossible split before any expensive extraction.
    if config.folds < 2 || manifest.sources.len() < config.folds {
        return Err(Error::Config(format!(
            "cannot split {} sources into {} folds",
            manifest.sources.len(),
            config.folds
        )));
    }
    let dataset = collect_dataset(manifest, config, table, precomputed)?;
    run_evaluation_on(&dataset, manifest, config)
}

pub fn run_evaluation_on(
    dataset: &Dataset,
    manifest: &DatasetManifest,
    config: &EvalConfig,
) -> Result<EvaluationReport> {
    let ids: Vec<String> = dataset.features.keys().cloned().collect();
    let plan = plan_folds(&ids, config.folds, config.seed)?;

    let mut per_source = Vec::new();
    let mut predicted_curves = BTreeMap::new();
    let mut beyond_grid = 0usize;
    for (fold_idx, test_ids) in plan.folds.iter().enumerate() {
        let train_ids: Vec<String> = ids
            .iter()
            .filter(|id| !test_ids.contains(id))
            .cloned()
            .collect();
        let model = train_fold(&train_ids, dataset, config)?;
        for id in test_ids {
            let features = &dataset.features[id];
            let truth = &dataset.truth_curves[id];
            let predicted = predict_sur_curve(&model, &manifest.qp_grid, features)?;
            let ds = delta_sur(&predicted, truth)?;
            let predicted_jnd = jnd_point(&predicted, config.jnd_threshold)?;
            let truth_jnd = jnd_point(truth, config.jnd_threshold)?;
            let dq = delta_qp(predicted_jnd, truth_jnd);
            if dq.is_none() {
                beyond_grid += 1;
            }
            per_source.push(SourceResult {
                source_id: id.clone(),
                resolution: dataset.resolutions[id].clone(),
                fold: fold_idx,
                truth_jnd: truth_jnd.value(),
                predicted_jnd: predicted_jnd.value(),
                delta_sur: ds,
                delta_qp: dq,
            });
            predicted_curves.insert(id.clone(), predicted);
        }
    }
    per_source.sort_by(|a, b| a.source_id.cmp(&b.source_id));

    let mean = |values: &[f64]| -> Option<f64> {
        if values.is_empty() {
            None
        } else {
            Some(values.iter().sum::<f64>() / values.len() as f64)
        }
    };
    let all_ds: Vec<f64> = per_source.iter().map(|r| r.delta_sur).collect();
    let all_dq: Vec<f64> = per_source.iter().filter_map(|r| r.delta_qp).collect();
    let mut per_resolution = BTreeMap::new();
    for tag in dataset.resolutions.values().collect::<std::collections::BTreeSet<_>>() {
        let ds: Vec<f64> = per_source
            .iter()
            .filter(|r| &r.resolution == tag)
            .map(|r| r.delta_sur)
            .collect();
        let dq: Vec<f64> = per_source
            .iter()
            .filter(|r| &r.resolution == tag)
            .filter_map(|r| r.delta_qp)
            .collect();
        per_resolution.insert(tag.clone(), (mean(&ds).unwrap_or(f64::NAN), mean(&dq)));
    }

    Ok(EvaluationReport {
        mean_delta_sur: mean(&all_ds).unwrap_or(f64::NAN),
        mean_delta_qp: mean(&all_dq),
        per_resolution,
        excluded: dataset.excluded.clone(),
        beyond_grid,
        truth_source: if config.truth_from_empirical {
            "empirical_cdf"
        } else {
            "gaussian_fit"
        },
        config_echo: serde_json::to_string(config).unwrap_or_default(),
        per_source,
        predicted_curves,
        truth_curves: dataset.truth_curves.clone(),
    })
}

impl EvaluationReport {
    /// Per-source CSV: one row per evaluated source.
    pub fn write_per_source_csv(&self, path: &Path) -> Result<()> {
        let mut out = String::from(
            "source_id,resolution,fold,truth_jnd,predicted_jnd,delta_sur,delta_qp\n",
        );
        let fmt = |v: Option<f64>| v.map(|x| format!("{x:.6}")).unwrap_or_else(|| "beyond_grid".into());
        for r in &self.per_source {
            out.push_str(&format!(
                "{},{},{},{},{},{:.6},{}\n",
                r.source_id,
                r.resolution,
                r.fold,
                fmt(r.truth_jnd),
                fmt(r.predicted_jnd),
                r.delta_sur,
                fmt(r.delta_qp)
            ));
        }
        std::fs::write(path, out).map_err(|e| Error::io(path, e))
    }

    /// Aggregate CSV laid out like the summary table: one metric per row, one
    /// resolution per column.
    pub fn write_aggregate_csv(&self, path: &Path) -> Result<()> {
        let tags: Vec<&String> = self.per_resolution.keys().collect();
        let mut out = String::from("metric");
        for tag in &tags {
            out.push(',');
            out.push_str(tag);
        }
        out.push_str(",all\n");
        out.push_str("delta_sur");
        for tag in &tags {
            out.push_str(&format!(",{:.4}", self.per_resolution[*tag].0));
        }
        out.push_str(&format!(",{:.4}\n", self.mean_delta_sur));
        out.push_str("delta_qp");
        for tag in &tags {
            match self.per_resolution[*tag].1 {
                Some(v) => out.push_str(&format!(",{v:.4}")),
                None => out.push_str(",n/a"),
            }
        }
        match self.mean_delta_qp {
            Some(v) => out.push_str(&format!(",{v:.4}\n")),
            None => out.push_str(",n/a\n"),
        }
        out.push_str(&format!("beyond_grid_count,{}\n", self.beyond_grid));
        out.push_str(&format!("excluded_count,{}\n", self.excluded.len()));
        out.push_str(&format!("truth_source,{}\n", self.truth_source));
        std::fs::write(path, out).map_err(|e| Error::io(path, e))
    }

    /// Predicted-vs-truth JND scatter with a 45-degree reference line.
    pub fn write_scatter_svg(&self, path: &Path) -> Result<()> {
        let pairs: Vec<(f64, f64)> = self
            .per_source
            .iter()
            .filter_map(|r| Some((r.truth_jnd?, r.predicted_jnd?)))
            .collect();
        let svg = scatter_svg(&pairs, "ground-truth JND (qp)", "predicted JND (qp)");
        std::fs::write(path, svg).map_err(|e| Error::io(path, e))
    }

    /// Predicted and truth SUR curves overlaid, one pair of polylines per
    /// source.
    pub fn write_curves_svg(&self, path: &Path) -> Result<()> {
        let svg = curves_svg(&self.predicted_curves, &self.truth_curves);
        std::fs::write(path, svg).map_err(|e| Error::io(path, e))
    }
}

const SVG_SIZE: f64 = 480.0;
const SVG_MARGIN: f64 = 48.0;

fn scatter_svg(pairs: &[(f64, f64)], x_label: &str, y_label: &str) -> String {
    let lo = 0.0;
    let hi = 52.0;
    let scale = |v: f64| SVG_MARGIN + (v - lo) / (hi - lo) * (SVG_SIZE - 2.0 * SVG_MARGIN);
    let flip = |v: f64| SVG_SIZE - v;
    let mut svg = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{0}\" height=\"{0}\" viewBox=\"0 0 {0} {0}\">\n",
        SVG_SIZE
    );
    svg.push_str(&format!(
        "<rect width=\"{0}\" height=\"{0}\" fill=\"white\"/>\n",
        SVG_SIZE
    ));
    // Axes and the 45-degree line.
    svg.push_str(&format!(
        "<line x1=\"{m}\" y1=\"{b}\" x2=\"{e}\" y2=\"{b}\" stroke=\"black\"/>\n<line x1=\"{m}\" y1=\"{b}\" x2=\"{m}\" y2=\"{m}\" stroke=\"black\"/>\n",
        m = SVG_MARGIN,
        b = SVG_SIZE - SVG_MARGIN,
        e = SVG_SIZE - SVG_MARGIN
    ));
    svg.push_str(&format!(
        "<line x1=\"{a}\" y1=\"{b}\" x2=\"{b2}\" y2=\"{a2}\" stroke=\"#999\" stroke-dasharray=\"4 3\"/>\n",
        a = scale(lo),
        b = flip(scale(lo)),
        b2 = scale(hi),
        a2 = flip(scale(hi))
    ));
    for &(truth, pred) in pairs {
        svg.push_str(&format!(
            "<circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"3\" fill=\"#1f77b4\" fill-opacity=\"0.7\"/>\n",
            scale(truth),
            flip(scale(pred))
        ));
    }
    svg.push_str(&format!(
        "<text x=\"{}\" y=\"{}\" font-size=\"12\" text-anchor=\"middle\">{}</text>\n",
        SVG_SIZE / 2.0,
        SVG_SIZE - 10.0,
        x_label
    ));
    svg.push_str(&format!(
        "<text x=\"14\" y=\"{}\" font-size=\"12\" text-anchor=\"middle\" transform=\"rotate(-90 14 {})\">{}</text>\n",
        SVG_SIZE / 2.0,
        SVG_SIZE / 2.0,
        y_label
    ));
    svg.push_str("</svg>\n");
    svg
}

fn curves_svg(
    predicted: &BTreeMap<String, SurCurve<f64>>,
    truth: &BTreeMap<String, SurCurve<f64>>,
) -> String {
    let scale_x = |q: f64| SVG_MARGIN + q / 52.0 * (SVG_SIZE - 2.0 * SVG_MARGIN);
    let scale_y = |s: f64| SVG_SIZE - SVG_MARGIN - s * (SVG_SIZE - 2.0 * SVG_MARGIN);
    let polyline = |curve: &SurCurve<f64>, color: &str, dash: &str| -> String {
        let points: Vec<String> = curve
            .grid
            .iter()
            .zip(&curve.values)
            .map(|(&q, &s)| format!("{:.2},{:.2}", scale_x(q as f64), scale_y(s)))
            .collect();
        format!(
            "<polyline points=\"{}\" fill=\"none\" stroke=\"{color}\" stroke-opacity=\"0.6\"{dash}/>\n",
            points.join(" ")
        )
    };
    let mut svg = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{0}\" height=\"{0}\" viewBox=\"0 0 {0} {0}\">\n",
        SVG_SIZE
    );
    svg.push_str(&format!(
        "<rect width=\"{0}\" height=\"{0}\" fill=\"white\"/>\n",
        SVG_SIZE
    ));
    for (id, curve) in predicted {
        svg.push_str(&polyline(curve, "#d62728", " stroke-dasharray=\"4 3\""));
        if let Some(t) = truth.get(id) {
            svg.push_str(&polyline(t, "#1f77b4", ""));
        }
    }
    svg.push_str("<text x=\"240\" y=\"470\" font-size=\"12\" text-anchor=\"middle\">qp</text>\n");
    svg.push_str("<text x=\"14\" y=\"240\" font-size=\"12\" text-anchor=\"middle\" transform=\"rotate(-90 14 240)\">SUR</text>\n");
    svg.push_str("</svg>\n");
    svg
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sur::Provenance;

    #[test]
    fn plan_folds_partitions_evenly() {
        let ids: Vec<String> = (0..220).map(|i| format!("s{i}")).collect();
        let plan = plan_folds(&ids, 5, 7).unwrap();
        assert!(plan.folds.iter().all(|f| f.len() == 44));
        let mut all: Vec<String> = plan.folds.concat();
        all.sort();
        let mut expected = ids.clone();
        expected.sort();
        assert_eq!(all, expected);
    }

    #[test]
    fn plan_folds_small_and_deterministic() {
        let ids: Vec<String> = (0..10).map(|i| format!("s{i}")).collect();
        let a = plan_folds(&ids, 5, 3).unwrap();
        assert!(a.folds.iter().all(|f| f.len() == 2));
        let b = plan_folds(&ids, 5, 3).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn plan_folds_too_few_sources() {
        let ids: Vec<String> = (0..3).map(|i| format!("s{i}")).collect();
        assert!(matches!(
            plan_folds(&ids, 5, 0),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn delta_sur_basics() {
        let grid: Vec<u8> = (1..=51).collect();
        let a = SurCurve::new(grid.clone(), vec![0.5; 51], Provenance::Gaussian).unwrap();
        assert_eq!(delta_sur(&a, &a).unwrap(), 0.0);
        let b = SurCurve::new(grid, vec![0.54; 51], Provenance::Gaussian).unwrap();
        assert!((delta_sur(&a, &b).unwrap() - 0.04).abs() < 1e-12);
    }

    #[test]
    fn delta_sur_shifted_gaussian_matches_summation_oracle() {
        let model = GaussianJndModel {
            mean: 27.0f64,
            std: 3.0,
        };
        let shifted = GaussianJndModel {
            mean: 29.0f64,
            std: 3.0,
        };
        let grid: Vec<u8> = (1..=51).collect();
        let a = gaussian_curve(&model, &grid);
        let b = gaussian_curve(&shifted, &grid);
        let got = delta_sur(&a, &b).unwrap();
        // Direct summation over Q-function differences.
        let mut acc = 0.0;
        for &q in &grid {
            let qa = crate::sur::gaussian_sur(&model, q as f64);
            let qb = crate::sur::gaussian_sur(&shifted, q as f64);
            acc += (qa - qb).abs();
        }
        let expected = acc / grid.len() as f64;
        assert!((got - expected).abs() < 1e-12);
    }

    #[test]
    fn delta_qp_policies() {
        assert_eq!(delta_qp(JndPoint::At(24.9), JndPoint::At(25.0)), Some(0.10000000000000142));
        assert_eq!(delta_qp(JndPoint::At(25.0), JndPoint::At(25.0)), Some(0.0));
        assert_eq!(delta_qp(JndPoint::BeyondGrid, JndPoint::At(25.0)), None);
    }

    #[test]
    fn synthetic_manifest_is_deterministic() {
        let cfg = SynthConfig {
            source_count: 4,
            ..SynthConfig::default()
        };
        let a = generate_synthetic(&cfg, 5).unwrap();
        let b = generate_synthetic(&cfg, 5).unwrap();
        assert_eq!(a, b);
        // And byte-identical clips.
        if let ClipSource::Synthetic(r) = &a.sources[0].reference {
            let c1 = synthesize_reference(r).unwrap();
            let c2 = synthesize_reference(r).unwrap();
            assert_eq!(c1.frames[0].luma.samples, c2.frames[0].luma.samples);
        } else {
            panic!("expected synthetic reference");
        }
    }

    #[test]
    fn masking_gain_shifts_jnd_mean_by_exactly_b() {
        let cfg = SynthConfig::default();
        let entry = |mu: f64| SyntheticJnd {
            mean: cfg.jnd_base + cfg.jnd_masking_gain * mu,
            std: cfg.jnd_std,
            subjects: cfg.subjects,
            seed: 0,
        };
        assert_eq!(
            entry(1.0).mean - entry(0.0).mean,
            cfg.jnd_masking_gain
        );
    }

    #[test]
    fn synthetic_subject_mean_is_within_standard_error() {
        let jnd = SyntheticJnd {
            mean: 27.0,
            std: 3.0,
            subjects: 30,
            seed: 99,
        };
        let entry = SourceEntry {
            id: "s".into(),
            resolution: "test".into(),
            reference: ClipSource::Synthetic(SyntheticClipRecipe {
                width: 64,
                height: 64,
                fps: 24,
                frames: 2,
                masking_strength: 0.0,
                seed: 1,
            }),
            coded: CodedSource::Synthetic,
            annotations: AnnotationSource::Synthetic(jnd.clone()),
        };
        let ann = realize_annotations(&entry).unwrap();
        assert_eq!(ann.subject_count(), 30);
        let mean: f64 =
            ann.jnd_qps.iter().map(|&q| q as f64).sum::<f64>() / ann.subject_count() as f64;
        let bound = 4.0 * jnd.std / (jnd.subjects as f64).sqrt();
        assert!((mean - jnd.mean).abs() < bound, "mean {mean}");
    }

    #[test]
    fn empirical_sur_converges_at_the_mean() {
        let entry = SourceEntry {
            id: "s".into(),
            resolution: "test".into(),
            reference: ClipSource::Synthetic(SyntheticClipRecipe {
                width: 64,
                height: 64,
                fps: 24,
                frames: 2,
                masking_strength: 0.0,
                seed: 1,
            }),
            coded: CodedSource::Synthetic,
            annotations: AnnotationSource::Synthetic(SyntheticJnd {
                mean: 27.0,
                std: 3.0,
                subjects: 1000,
                seed: 13,
            }),
        };
        let ann = realize_annotations(&entry).unwrap();
        // A subject with JND exactly at the integer mean counts as noticing
        // there, so probe just below the mean.
        let sur: f64 = crate::sur::empirical_sur(&ann, 26);
        let expected = crate::sur::gaussian_sur(
            &GaussianJndModel {
                mean: 27.0f64,
                std: 3.0,
            },
            26.5,
        );
        assert!((sur - expected).abs() < 0.05, "sur {sur} vs {expected}");
    }

    #[test]
    fn degradation_is_monotone_in_qp_on_average() {
        let recipe = SyntheticClipRecipe {
            width: 320,
            height: 180,
            fps: 24,
            frames: 4,
            masking_strength: 0.5,
            seed: 3,
        };
        let reference = synthesize_reference(&recipe).unwrap();
        let blurred = blurred_luma(&reference);
        let mut last_mse = -1.0f64;
        for qp in [5u8, 15, 25, 35, 45] {
            let coded = degrade(&reference, &blurred, qp).unwrap();
            let mut sse = 0.0;
            let mut n = 0usize;
            for (rf, cf) in reference.frames.iter().zip(&coded.frames) {
                for (&a, &b) in rf.luma.samples.iter().zip(&cf.luma.samples) {
                    let d = a as f64 - b as f64;
                    sse += d * d;
                    n += 1;
                }
            }
            let mse = sse / n as f64;
            assert!(mse > last_mse, "qp {qp}: mse {mse} <= {last_mse}");
            last_mse = mse;
        }
    }

    #[test]
    fn manifest_round_trip_and_validation() {
        let cfg = SynthConfig {
            source_count: 3,
            ..SynthConfig::default()
        };
        let manifest = generate_synthetic(&cfg, 1).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("manifest.json");
        manifest.save(&path).unwrap();
        let back = DatasetManifest::load(&path).unwrap();
        assert_eq!(manifest, back);

        let mut dup = manifest.clone();
        dup.sources.push(dup.sources[0].clone());
        assert!(matches!(dup.validate(), Err(Error::Config(_))));
    }
}
