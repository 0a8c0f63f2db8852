//! `surview`: SUR-curve and first-JND prediction for compressed video.
//!
//! Exit codes: 0 success, 2 configuration error, 3 data error, 4 numeric
//! error, 5 I/O error.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use sha2::{Digest, Sha256};

use surview_core::error::{Error, ErrorCategory, Result};
use surview_core::eval::{
    extract_source_features, realize_annotations, run_evaluation, AnnotationSource, ClipSource,
    DatasetManifest, EvalConfig, PipelineConfig, SourceEntry, SynthConfig,
};
use surview_core::features::{read_feature_cache, write_feature_cache, FeatureVector};
use surview_core::quality::{MetricId, ScoreTable};
use surview_core::segment::SegmentConfig;
use surview_core::sur::{
    empirical_curve, fit_gaussian, gaussian_curve, jnd_point, JndPoint, SurCurve,
};
use surview_core::svr::{
    fit, grid_search, load_model, predict_sur_curve, save_model, SearchGrid, SvrHyperParams,
    SvrModel,
};

#[derive(Parser)]
#[command(
    name = "surview",
    version,
    about = "Predict Satisfied-User-Ratio curves and first-JND points for compressed video",
    after_help = "Exit codes: 0 success, 2 config error, 3 data error, 4 numeric error, 5 I/O error."
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Compute 40-D feature vectors per (source, qp) into a cache directory
    ExtractFeatures(ExtractArgs),
    /// Train an epsilon-SVR on cached features and subject annotations
    Train(TrainArgs),
    /// Predict the SUR curve and JND point of one source with a trained model
    Predict(PredictArgs),
    /// Run the k-fold evaluation protocol and write report files
    Evaluate(EvaluateArgs),
    /// Generate a deterministic synthetic dataset manifest
    Synth(SynthArgs),
    /// Fit Gaussian JND models and SUR curves from an annotation file
    SurFit(SurFitArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum MetricArg {
    /// Mapped PSNR: min(100, 100 * PSNR / 60)
    PsnrMapped,
    /// Mean 8x8-window structural similarity on a 0-100 scale
    StructSim,
    /// Externally supplied per-segment scores (requires --scores)
    External,
}

impl From<MetricArg> for MetricId {
    fn from(m: MetricArg) -> MetricId {
        match m {
            MetricArg::PsnrMapped => MetricId::PsnrMapped,
            MetricArg::StructSim => MetricId::StructSim,
            MetricArg::External => MetricId::External,
        }
    }
}

/// Feature-pipeline options shared by the feature-producing subcommands.
/// Defaults: segments 320x180 x 0.5 s with 50% spatial overlap, slope lag
/// k=2, significant fraction p=0.8.
#[derive(Args, Clone)]
struct PipelineArgs {
    /// Local quality metric
    #[arg(long, value_enum, default_value_t = MetricArg::PsnrMapped)]
    metric: MetricArg,
    /// Score table CSV (clip_id,qp,w,h,t,score) for the external metric
    #[arg(long)]
    scores: Option<PathBuf>,
    /// Segment width in pixels
    #[arg(long, default_value_t = 320)]
    seg_width: usize,
    /// Segment height in pixels
    #[arg(long, default_value_t = 180)]
    seg_height: usize,
    /// Segment duration in seconds
    #[arg(long, default_value_t = 0.5)]
    seg_duration: f64,
    /// Spatial overlap fraction between neighbouring segments
    #[arg(long, default_value_t = 0.5)]
    spatial_overlap: f64,
    /// Quality-slope lag in qp steps
    #[arg(long, default_value_t = 2)]
    slope_k: u8,
    /// Fraction of segments kept as significant
    #[arg(long, default_value_t = 0.8)]
    slope_p: f64,
}

impl PipelineArgs {
    fn to_config(&self) -> Result<PipelineConfig> {
        if self.metric == MetricArg::External && self.scores.is_none() {
            return Err(Error::Config(
                "--metric external requires --scores".into(),
            ));
        }
        Ok(PipelineConfig {
            metric: self.metric.into(),
            segment: SegmentConfig {
                seg_width: self.seg_width,
                seg_height: self.seg_height,
                seg_duration: self.seg_duration,
                spatial_overlap: self.spatial_overlap,
            },
            slope_k: self.slope_k,
            slope_p: self.slope_p,
        })
    }

    fn load_table(&self) -> Result<Option<ScoreTable>> {
        self.scores
            .as_deref()
            .map(ScoreTable::load_file)
            .transpose()
    }
}

/// SVR hyper-parameters. Defaults: C=10, epsilon=0.02, gamma=0.025 (1/40 for
/// the 40-D feature), tolerance=1e-3.
#[derive(Args, Clone)]
struct SvrArgs {
    #[arg(long, default_value_t = 10.0)]
    svr_c: f64,
    #[arg(long, default_value_t = 0.02)]
    svr_epsilon: f64,
    #[arg(long, default_value_t = 0.025)]
    svr_gamma: f64,
    #[arg(long, default_value_t = 1e-3)]
    svr_tolerance: f64,
    /// Select C/gamma/epsilon by inner 4-fold grid search instead
    #[arg(long)]
    grid_search: bool,
}

impl SvrArgs {
    fn params(&self) -> Result<SvrHyperParams<f64>> {
        let p = SvrHyperParams {
            c: self.svr_c,
            epsilon: self.svr_epsilon,
            gamma: self.svr_gamma,
            tolerance: self.svr_tolerance,
            ..SvrHyperParams::default()
        };
        p.validate()?;
        Ok(p)
    }
}

#[derive(Args)]
struct ExtractArgs {
    /// Dataset manifest JSON
    #[arg(long)]
    manifest: PathBuf,
    /// Feature cache directory
    #[arg(long)]
    cache_dir: PathBuf,
    #[command(flatten)]
    pipeline: PipelineArgs,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    manifest: PathBuf,
    /// Feature cache directory populated by extract-features
    #[arg(long)]
    cache_dir: PathBuf,
    /// Output model file (JSON)
    #[arg(long)]
    output: PathBuf,
    #[command(flatten)]
    pipeline: PipelineArgs,
    #[command(flatten)]
    svr: SvrArgs,
    /// Seed for grid-search shuffling
    #[arg(long, default_value_t = 17)]
    seed: u64,
}

#[derive(Args)]
struct PredictArgs {
    #[arg(long)]
    manifest: PathBuf,
    /// Trained model file from `train`
    #[arg(long)]
    model: PathBuf,
    /// Source id from the manifest
    #[arg(long)]
    source: String,
    /// Feature cache directory; features are computed on the fly if absent
    #[arg(long)]
    cache_dir: Option<PathBuf>,
    /// Output directory for curve CSV, JND report and optional overlay SVG
    #[arg(long)]
    output_dir: PathBuf,
    /// SUR threshold defining the JND point
    #[arg(long, default_value_t = 0.75)]
    threshold: f64,
    #[command(flatten)]
    pipeline: PipelineArgs,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long)]
    manifest: PathBuf,
    /// Output directory for report CSVs and SVGs
    #[arg(long)]
    output_dir: PathBuf,
    /// Reuse cached features when present
    #[arg(long)]
    cache_dir: Option<PathBuf>,
    /// Number of cross-validation folds
    #[arg(long, default_value_t = 5)]
    folds: usize,
    /// Seed for fold assignment and grid-search shuffling
    #[arg(long, default_value_t = 17)]
    seed: u64,
    /// SUR threshold defining the JND point
    #[arg(long, default_value_t = 0.75)]
    threshold: f64,
    /// Score ground truth from the raw empirical CDF instead of Gaussian fits
    #[arg(long)]
    empirical_truth: bool,
    #[command(flatten)]
    pipeline: PipelineArgs,
    #[command(flatten)]
    svr: SvrArgs,
}

#[derive(Args)]
struct SynthArgs {
    /// Output manifest path
    #[arg(long)]
    output: PathBuf,
    #[arg(long, default_value_t = 40)]
    sources: usize,
    #[arg(long, default_value_t = 640)]
    width: usize,
    #[arg(long, default_value_t = 360)]
    height: usize,
    #[arg(long, default_value_t = 24)]
    fps: u32,
    #[arg(long, default_value_t = 2.0)]
    duration: f64,
    /// qp grid as start:stop:step
    #[arg(long, default_value = "2:50:2")]
    qp_grid: String,
    #[arg(long, default_value_t = 30)]
    subjects: usize,
    #[arg(long, default_value_t = 17)]
    seed: u64,
}

#[derive(Args)]
struct SurFitArgs {
    /// Annotation CSV (source_id,subject_id,first_jnd_qp)
    #[arg(long)]
    annotations: PathBuf,
    /// Output CSV; stdout when omitted
    #[arg(long)]
    output: Option<PathBuf>,
    /// SUR threshold defining the JND point
    #[arg(long, default_value_t = 0.75)]
    threshold: f64,
}

fn main() {
    let cli = Cli::parse();
    if let Err(e) = run(cli) {
        eprintln!("error: {e}");
        std::process::exit(match e.category() {
            ErrorCategory::Config => 2,
            ErrorCategory::Data => 3,
            ErrorCategory::Numeric => 4,
            ErrorCategory::Io => 5,
        });
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.cmd {
        Cmd::ExtractFeatures(args) => cmd_extract(args),
        Cmd::Train(args) => cmd_train(args),
        Cmd::Predict(args) => cmd_predict(args),
        Cmd::Evaluate(args) => cmd_evaluate(args),
        Cmd::Synth(args) => cmd_synth(args),
        Cmd::SurFit(args) => cmd_sur_fit(args),
    }
}

/// Content-plus-config fingerprint of one source's feature rows. File-backed
/// clips hash their bytes, synthetic ones their recipe, so caches transfer
/// across machines.
fn source_fingerprint(
    entry: &SourceEntry,
    qp_grid: &[u8],
    config: &PipelineConfig,
    table_path: Option<&Path>,
) -> Result<String> {
    let mut hasher = Sha256::new();
    hasher.update(serde_json::to_vec(config).map_err(|e| Error::Config(e.to_string()))?);
    hasher.update(qp_grid);
    hasher.update(
        serde_json::to_vec(entry).map_err(|e| Error::Config(e.to_string()))?,
    );
    let mut hash_file = |path: &Path| -> Result<()> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        hasher.update(&bytes);
        Ok(())
    };
    match &entry.reference {
        ClipSource::Y4m { path } => hash_file(path)?,
        ClipSource::Raw { path, sidecar } => {
            hash_file(path)?;
            hash_file(sidecar)?;
        }
        ClipSource::Synthetic(_) => {}
    }
    if let surview_core::eval::CodedSource::Paths { paths } = &entry.coded {
        for path in paths.values() {
            hash_file(path)?;
        }
    }
    if let Some(p) = table_path {
        hash_file(p)?;
    }
    Ok(format!("{:x}", hasher.finalize()))
}

#[derive(serde::Serialize, serde::Deserialize)]
struct CacheMeta {
    version: u32,
    fingerprint: String,
}

fn cache_paths(cache_dir: &Path, source_id: &str) -> (PathBuf, PathBuf) {
    (
        cache_dir.join(format!("{source_id}.features.csv")),
        cache_dir.join(format!("{source_id}.meta.json")),
    )
}

/// Load a source's cached features when the fingerprint matches and the file
/// parses; `None` means recompute.
fn load_cached(
    cache_dir: &Path,
    source_id: &str,
    fingerprint: &str,
    expected_rows: usize,
) -> Option<Vec<FeatureVector<f64>>> {
    let (data_path, meta_path) = cache_paths(cache_dir, source_id);
    let meta: CacheMeta =
        serde_json::from_slice(&std::fs::read(meta_path).ok()?).ok()?;
    if meta.version != 1 || meta.fingerprint != fingerprint {
        return None;
    }
    let rows = read_feature_cache(&data_path).ok()?;
    if rows.len() != expected_rows {
        return None;
    }
    Some(rows)
}

fn store_cache(
    cache_dir: &Path,
    source_id: &str,
    fingerprint: &str,
    rows: &[FeatureVector<f64>],
) -> Result<()> {
    let (data_path, meta_path) = cache_paths(cache_dir, source_id);
    write_feature_cache(&data_path, rows)?;
    let meta = CacheMeta {
        version: 1,
        fingerprint: fingerprint.to_string(),
    };
    std::fs::write(
        &meta_path,
        serde_json::to_vec_pretty(&meta).map_err(|e| Error::Config(e.to_string()))?,
    )
    .map_err(|e| Error::io(&meta_path, e))
}

fn cmd_extract(args: ExtractArgs) -> Result<()> {
    let config = args.pipeline.to_config()?;
    let table = args.pipeline.load_table()?;
    let manifest = DatasetManifest::load(&args.manifest)?;
    std::fs::create_dir_all(&args.cache_dir).map_err(|e| Error::io(&args.cache_dir, e))?;

    let mut failures: Vec<String> = Vec::new();
    let mut fresh = 0usize;
    let mut computed = 0usize;
    for entry in &manifest.sources {
        let fp = source_fingerprint(
            entry,
            &manifest.qp_grid,
            &config,
            args.pipeline.scores.as_deref(),
        )?;
        if load_cached(&args.cache_dir, &entry.id, &fp, manifest.qp_grid.len()).is_some() {
            fresh += 1;
            continue;
        }
        match extract_source_features(entry, &manifest.qp_grid, &config, table.as_ref()) {
            Ok(rows) => {
                store_cache(&args.cache_dir, &entry.id, &fp, &rows)?;
                computed += 1;
            }
            Err(e) => failures.push(format!("{}: {e}", entry.id)),
        }
    }
    println!(
        "extract-features: {computed} computed, {fresh} fresh, {} failed",
        failures.len()
    );
    if !failures.is_empty() {
        return Err(Error::MissingData(format!(
            "feature extraction failed for {} source(s):\n  {}",
            failures.len(),
            failures.join("\n  ")
        )));
    }
    Ok(())
}

/// Features for every manifest source, strictly from cache. Missing or stale
/// entries name the extract step in the error.
fn features_from_cache(
    manifest: &DatasetManifest,
    config: &PipelineConfig,
    cache_dir: &Path,
    scores: Option<&Path>,
) -> Result<(BTreeMap<String, Vec<FeatureVector<f64>>>, String)> {
    let mut all = BTreeMap::new();
    let mut combined = Sha256::new();
    for entry in &manifest.sources {
        let fp = source_fingerprint(entry, &manifest.qp_grid, config, scores)?;
        let rows = load_cached(cache_dir, &entry.id, &fp, manifest.qp_grid.len())
            .ok_or_else(|| {
                Error::MissingData(format!(
                    "no fresh feature cache for source {} in {cache_dir:?}; \
                     run `surview extract-features` first",
                    entry.id
                ))
            })?;
        combined.update(fp.as_bytes());
        all.insert(entry.id.clone(), rows);
    }
    Ok((all, format!("{:x}", combined.finalize())))
}

#[derive(serde::Serialize)]
struct ModelMeta {
    data_fingerprint: String,
    seed: u64,
    grid_searched: bool,
    chosen: SvrHyperParams<f64>,
    pipeline: PipelineConfig,
    qp_grid: Vec<u8>,
    sources: usize,
}

fn cmd_train(args: TrainArgs) -> Result<()> {
    let config = args.pipeline.to_config()?;
    let base = args.svr.params()?;
    let manifest = DatasetManifest::load(&args.manifest)?;
    let (features, data_fingerprint) = features_from_cache(
        &manifest,
        &config,
        &args.cache_dir,
        args.pipeline.scores.as_deref(),
    )?;

    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for entry in &manifest.sources {
        let annotations = realize_annotations(entry)?;
        let model = fit_gaussian::<f64>(&annotations)?;
        let curve = gaussian_curve(&model, &manifest.qp_grid);
        for (fv, &y) in features[&entry.id].iter().zip(&curve.values) {
            xs.push(fv.x.clone());
            ys.push(y);
        }
    }
    if xs.is_empty() {
        return Err(Error::InsufficientData("empty training set".into()));
    }
    let chosen = if args.svr.grid_search {
        grid_search(&xs, &ys, &SearchGrid::default(), 4, args.seed, &base)?
    } else {
        base
    };
    let (model, report) = fit(&xs, &ys, &chosen)?;
    if let Some(parent) = args.output.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
    }
    save_model(&model, &args.output)?;
    let meta = ModelMeta {
        data_fingerprint,
        seed: args.seed,
        grid_searched: args.svr.grid_search,
        chosen,
        pipeline: config,
        qp_grid: manifest.qp_grid.clone(),
        sources: manifest.sources.len(),
    };
    let meta_path = args.output.with_extension("meta.json");
    std::fs::write(
        &meta_path,
        serde_json::to_vec_pretty(&meta).map_err(|e| Error::Config(e.to_string()))?,
    )
    .map_err(|e| Error::io(&meta_path, e))?;
    println!(
        "train: {} samples, {} support vectors, {} iterations{}",
        xs.len(),
        model.support_vectors.len(),
        report.iterations,
        if report.converged { "" } else { " (iteration cap hit)" }
    );
    Ok(())
}

fn cmd_predict(args: PredictArgs) -> Result<()> {
    let config = args.pipeline.to_config()?;
    let table = args.pipeline.load_table()?;
    if !(0.0 < args.threshold && args.threshold < 1.0) {
        return Err(Error::Config(format!(
            "threshold {} outside (0, 1)",
            args.threshold
        )));
    }
    let manifest = DatasetManifest::load(&args.manifest)?;
    let model: SvrModel<f64> = load_model(&args.model)?;
    let source_id = args.source.clone();
    let entry = manifest
        .sources
        .iter()
        .find(|s| s.id == source_id)
        .ok_or_else(|| {
            Error::MissingData(format!("source {source_id} not in manifest"))
        })?;

    let features = match &args.cache_dir {
        Some(dir) => {
            let fp = source_fingerprint(
                entry,
                &manifest.qp_grid,
                &config,
                args.pipeline.scores.as_deref(),
            )?;
            match load_cached(dir, &entry.id, &fp, manifest.qp_grid.len()) {
                Some(rows) => rows,
                None => extract_source_features(
                    entry,
                    &manifest.qp_grid,
                    &config,
                    table.as_ref(),
                )?,
            }
        }
        None => extract_source_features(entry, &manifest.qp_grid, &config, table.as_ref())?,
    };
    let missing: Vec<u8> = manifest
        .qp_grid
        .iter()
        .filter(|&&q| !features.iter().any(|f| f.qp == q))
        .copied()
        .collect();
    if !missing.is_empty() {
        return Err(Error::MissingData(format!(
            "source {source_id} lacks features at qps {missing:?}"
        )));
    }

    let curve = predict_sur_curve(&model, &manifest.qp_grid, &features)?;
    let jnd = jnd_point(&curve, args.threshold)?;

    std::fs::create_dir_all(&args.output_dir).map_err(|e| Error::io(&args.output_dir, e))?;
    let curve_path = args.output_dir.join(format!("{source_id}.curve.csv"));
    write_curve_csv(&curve_path, &curve)?;
    let jnd_path = args.output_dir.join(format!("{source_id}.jnd.txt"));
    let jnd_text = match jnd {
        JndPoint::At(q) => format!("{q:.4}"),
        JndPoint::BeyondGrid => "beyond_grid".to_string(),
    };
    std::fs::write(&jnd_path, format!("{jnd_text}\n")).map_err(|e| Error::io(&jnd_path, e))?;

    // Overlay against ground truth when annotations exist for this source.
    let has_annotations = match &entry.annotations {
        AnnotationSource::Csv { path } => path.exists(),
        AnnotationSource::Synthetic(_) => true,
    };
    if has_annotations {
        if let Ok(annotations) = realize_annotations(entry) {
            let truth = match fit_gaussian::<f64>(&annotations) {
                Ok(m) => gaussian_curve(&m, &manifest.qp_grid),
                Err(_) => empirical_curve(&annotations, &manifest.qp_grid),
            };
            let mut predicted = BTreeMap::new();
            let mut truths = BTreeMap::new();
            predicted.insert(source_id.clone(), curve.clone());
            truths.insert(source_id.clone(), truth);
            let svg_path = args.output_dir.join(format!("{source_id}.overlay.svg"));
            surview_core::eval::EvaluationReport {
                per_source: vec![],
                mean_delta_sur: 0.0,
                mean_delta_qp: None,
                per_resolution: BTreeMap::new(),
                excluded: vec![],
                beyond_grid: 0,
                truth_source: "gaussian_fit",
                config_echo: String::new(),
                predicted_curves: predicted,
                truth_curves: truths,
            }
            .write_curves_svg(&svg_path)?;
        }
    }
    println!("predict: {source_id} jnd@{} = {jnd_text}", args.threshold);
    Ok(())
}

fn write_curve_csv(path: &Path, curve: &SurCurve<f64>) -> Result<()> {
    let mut out = String::from("qp,sur\n");
    for (&q, &s) in curve.grid.iter().zip(&curve.values) {
        out.push_str(&format!("{q},{s:.6}\n"));
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

fn cmd_evaluate(args: EvaluateArgs) -> Result<()> {
    let config = EvalConfig {
        pipeline: args.pipeline.to_config()?,
        folds: args.folds,
        seed: args.seed,
        svr: args.svr.params()?,
        use_grid_search: args.svr.grid_search,
        jnd_threshold: args.threshold,
        truth_from_empirical: args.empirical_truth,
    };
    let table = args.pipeline.load_table()?;
    let manifest = DatasetManifest::load(&args.manifest)?;

    // Warm sources from the cache where fingerprints match; the rest are
    // recomputed inside run_evaluation.
    let mut precomputed: BTreeMap<String, Vec<FeatureVector<f64>>> = BTreeMap::new();
    if let Some(dir) = &args.cache_dir {
        for entry in &manifest.sources {
            let fp = source_fingerprint(
                entry,
                &manifest.qp_grid,
                &config.pipeline,
                args.pipeline.scores.as_deref(),
            )?;
            if let Some(rows) = load_cached(dir, &entry.id, &fp, manifest.qp_grid.len()) {
                precomputed.insert(entry.id.clone(), rows);
            }
        }
    }

    let report = run_evaluation(&manifest, &config, table.as_ref(), Some(&mut precomputed))?;

    std::fs::create_dir_all(&args.output_dir).map_err(|e| Error::io(&args.output_dir, e))?;
    report.write_per_source_csv(&args.output_dir.join("per_source.csv"))?;
    report.write_aggregate_csv(&args.output_dir.join("aggregate.csv"))?;
    report.write_scatter_svg(&args.output_dir.join("jnd_scatter.svg"))?;
    report.write_curves_svg(&args.output_dir.join("sur_curves.svg"))?;
    let echo_path = args.output_dir.join("config.json");
    std::fs::write(&echo_path, &report.config_echo).map_err(|e| Error::io(&echo_path, e))?;

    println!(
        "evaluate: {} sources, mean dSUR {:.4}, mean dQP {}, {} beyond grid, {} excluded",
        report.per_source.len(),
        report.mean_delta_sur,
        report
            .mean_delta_qp
            .map(|v| format!("{v:.4}"))
            .unwrap_or_else(|| "n/a".into()),
        report.beyond_grid,
        report.excluded.len()
    );
    Ok(())
}

fn parse_qp_grid(spec: &str) -> Result<Vec<u8>> {
    let parts: Vec<&str> = spec.split(':').collect();
    if parts.len() != 3 {
        return Err(Error::Config(format!(
            "qp grid `{spec}` is not start:stop:step"
        )));
    }
    let parse = |s: &str| -> Result<u8> {
        s.parse()
            .map_err(|_| Error::Config(format!("bad qp value `{s}`")))
    };
    let (start, stop, step) = (parse(parts[0])?, parse(parts[1])?, parse(parts[2])?);
    if step == 0 || start == 0 || stop > 51 || start > stop {
        return Err(Error::Config(format!("unusable qp grid `{spec}`")));
    }
    Ok((start..=stop).step_by(step as usize).collect())
}

fn cmd_synth(args: SynthArgs) -> Result<()> {
    let config = SynthConfig {
        source_count: args.sources,
        width: args.width,
        height: args.height,
        fps: args.fps,
        duration_s: args.duration,
        qp_grid: parse_qp_grid(&args.qp_grid)?,
        subjects: args.subjects,
        ..SynthConfig::default()
    };
    let manifest = surview_core::eval::generate_synthetic(&config, args.seed)?;
    if let Some(parent) = args.output.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
    }
    manifest.save(&args.output)?;
    println!(
        "synth: {} sources, {} grid points -> {:?}",
        manifest.sources.len(),
        manifest.qp_grid.len(),
        args.output
    );
    Ok(())
}

fn cmd_sur_fit(args: SurFitArgs) -> Result<()> {
    if !(0.0 < args.threshold && args.threshold < 1.0) {
        return Err(Error::Config(format!(
            "threshold {} outside (0, 1)",
            args.threshold
        )));
    }
    let annotations = surview_core::sur::load_annotations(&args.annotations)?;
    let grid = surview_core::sur::full_grid();
    let mut out = String::from(
        "source_id,subjects,mean,std,gaussian_jnd,empirical_jnd\n",
    );
    for (id, set) in &annotations {
        let fmt_jnd = |p: JndPoint<f64>| match p {
            JndPoint::At(q) => format!("{q:.4}"),
            JndPoint::BeyondGrid => "beyond_grid".into(),
        };
        match fit_gaussian::<f64>(set) {
            Ok(model) => {
                let g_curve = gaussian_curve(&model, &grid);
                let e_curve = empirical_curve(set, &grid);
                let g_jnd = jnd_point(&g_curve, args.threshold)?;
                // The empirical staircase is non-increasing by construction.
                let e_jnd = jnd_point(&e_curve, args.threshold)?;
                out.push_str(&format!(
                    "{id},{},{:.4},{:.4},{},{}\n",
                    set.subject_count(),
                    model.mean,
                    model.std,
                    fmt_jnd(g_jnd),
                    fmt_jnd(e_jnd)
                ));
            }
            Err(e) => {
                out.push_str(&format!(
                    "{id},{},degenerate,degenerate,n/a,n/a\n",
                    set.subject_count()
                ));
                eprintln!("warning: {id}: {e}");
            }
        }
    }
    match &args.output {
        Some(path) => std::fs::write(path, out).map_err(|e| Error::io(path, e))?,
        None => print!("{out}"),
    }
    Ok(())
}
