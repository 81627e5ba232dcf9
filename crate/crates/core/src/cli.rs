//! Command-line pipeline: cohort generation, splitting, training, embedding,
//! reconstruction scoring, latent regression and 2-D projection.

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::data::{
    generate_cohort, group_split, load_manifest, prepare_volume, read_mvol, save_manifest, write_mvol, CohortSpec,
    PhantomCoefficients, Volume3D, VolumeRecord, DEFAULT_RATIOS,
};
use crate::error::{Error, Result};
use crate::latent_analysis::{
    grid_csv, grid_search_cv, pca_fit, pls_fit, project, projection_csv, regression_csv, svr_fit, svr_predict,
    GridSpec, ProjectionMatrix, RegressionRow,
};
use crate::metrics::{mae, metrics_report, r2, rmse, score_reconstruction, SsimConfig};
use crate::vae3d::{load_checkpoint, save_checkpoint, train, LatentVector, ModelConfig, Preset, TrainConfig, Vae3d, DEFAULT_CHANNELS};

/// Environment variable consulted when a seed is not given explicitly.
pub const SEED_ENV: &str = "LATVOL_SEED";

pub const EXIT_VALIDATION: i32 = 2;
pub const EXIT_NUMERIC: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "latvol", version, about = "Latent representation pipeline for 3-D volumes")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Target {
    Age,
    Sdmt,
}

impl Target {
    pub fn name(self) -> &'static str {
        match self {
            Target::Age => "age",
            Target::Sdmt => "sdmt",
        }
    }

    fn label(self, r: &VolumeRecord) -> Result<f64> {
        match self {
            Target::Age => Ok(r.age),
            Target::Sdmt => r.sdmt.ok_or_else(|| {
                Error::invalid(format!("record {} has no sdmt label; target sdmt is unavailable", r.id()))
            }),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Method {
    Pca,
    Pls,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a phantom cohort, its manifest and the generator coefficients.
    GenData {
        #[arg(long)]
        config: PathBuf,
    },
    /// Split a manifest 8:1:1 by subject into train/val/test manifests.
    Split {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory (defaults to the manifest's directory).
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
    /// Train a model; writes the checkpoint and the per-iteration loss log.
    Train {
        #[arg(long)]
        config: PathBuf,
    },
    /// Write posterior-mean latent codes, one row per session.
    Embed {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score reconstructions with PSNR and volumetric SSIM.
    EvalRecon {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 1.0)]
        max_val: f64,
    },
    /// Grid-searched SVR from latents to a label, scored on a held-out manifest.
    Regress {
        #[arg(long)]
        latents: PathBuf,
        #[arg(long, value_enum)]
        target: Target,
        /// Manifest of the sessions used for model selection and fitting.
        #[arg(long)]
        train: PathBuf,
        /// Manifest of the held-out sessions.
        #[arg(long)]
        test: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Cross-validation table (defaults to `<out stem>_grid.csv`).
        #[arg(long)]
        grid_out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Fit a 2-D PCA or PLS projection and export labelled coordinates.
    Project {
        #[arg(long)]
        latents: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long, value_enum)]
        method: Method,
        #[arg(long, value_enum)]
        target: Option<Target>,
        #[arg(long)]
        out: PathBuf,
    },
}

fn default_latent_dim() -> usize {
    32
}
fn default_extent() -> usize {
    16
}
fn default_channels() -> Vec<usize> {
    DEFAULT_CHANNELS.to_vec()
}
fn default_iterations() -> usize {
    5000
}
fn default_batch() -> usize {
    2
}
fn default_lr() -> f64 {
    1e-4
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CohortConfig {
    pub subjects: usize,
    pub min_sessions: usize,
    pub max_sessions: usize,
    pub noise_sigma: f64,
    pub with_sdmt: bool,
}

impl Default for CohortConfig {
    fn default() -> Self {
        let s = CohortSpec::default();
        CohortConfig {
            subjects: s.subjects,
            min_sessions: s.min_sessions,
            max_sessions: s.max_sessions,
            noise_sigma: s.noise_sigma,
            with_sdmt: s.with_sdmt,
        }
    }
}

/// Relative entries resolve against the configuration file's directory.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PathConfig {
    /// gen-data output directory.
    pub data_dir: Option<PathBuf>,
    /// Training manifest.
    pub manifest: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
    pub loss_log: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub preset: Option<Preset>,
    #[serde(default)]
    pub alpha: Option<f64>,
    #[serde(default)]
    pub beta: Option<f64>,
    #[serde(default = "default_latent_dim")]
    pub latent_dim: usize,
    #[serde(default = "default_extent")]
    pub input_extent: usize,
    #[serde(default = "default_channels")]
    pub channels: Vec<usize>,
    #[serde(default = "default_iterations")]
    pub iterations: usize,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    #[serde(default = "default_lr")]
    pub learning_rate: f64,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub cohort: CohortConfig,
    #[serde(default)]
    pub paths: PathConfig,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::invalid(format!("config: {e}")))
    }

    /// Parses the file and resolves relative paths against its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::from_json(&text).map_err(|e| Error::invalid(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new(""));
        let fix = |p: &mut Option<PathBuf>| {
            if let Some(inner) = p {
                if inner.is_relative() {
                    *inner = base.join(&*inner);
                }
            }
        };
        fix(&mut cfg.paths.data_dir);
        fix(&mut cfg.paths.manifest);
        fix(&mut cfg.paths.checkpoint);
        fix(&mut cfg.paths.loss_log);
        Ok(cfg)
    }

    pub fn seed(&self) -> Result<u64> {
        match self.seed {
            Some(s) => Ok(s),
            None => default_seed(),
        }
    }

    pub fn model_config(&self) -> Result<ModelConfig> {
        let (alpha, beta, deterministic) = match (self.preset, self.alpha, self.beta) {
            (Some(p), None, None) => p.weights(),
            (None, Some(a), Some(b)) => (a, b, a == 0.0 && b == 0.0),
            (Some(_), _, _) => return Err(Error::invalid("config: give either preset or alpha/beta, not both")),
            (None, _, _) => return Err(Error::invalid("config: needs a preset or both alpha and beta")),
        };
        let cfg = ModelConfig {
            alpha,
            beta,
            latent_dim: self.latent_dim,
            input_extent: self.input_extent,
            channels: self.channels.clone(),
            deterministic_encoder: deterministic,
            seed: self.seed()?,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn train_config(&self) -> Result<TrainConfig> {
        if self.iterations == 0 || self.batch_size == 0 {
            return Err(Error::invalid("config: iterations and batch_size must be >= 1"));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::invalid(format!("config: learning_rate {} must be > 0", self.learning_rate)));
        }
        Ok(TrainConfig {
            iterations: self.iterations,
            batch_size: self.batch_size,
            learning_rate: self.learning_rate,
            seed: self.seed()? ^ TRAIN_SEED_SALT,
        })
    }

    pub fn cohort_spec(&self) -> Result<CohortSpec> {
        if self.input_extent < 8 {
            return Err(Error::invalid(format!("config: input_extent {} must be >= 8", self.input_extent)));
        }
        if !(self.cohort.noise_sigma >= 0.0) {
            return Err(Error::invalid("config: cohort.noise_sigma must be >= 0"));
        }
        Ok(CohortSpec {
            subjects: self.cohort.subjects,
            min_sessions: self.cohort.min_sessions,
            max_sessions: self.cohort.max_sessions,
            extent: self.input_extent,
            noise_sigma: self.cohort.noise_sigma,
            with_sdmt: self.cohort.with_sdmt,
            seed: self.seed()?,
        })
    }
}

const TRAIN_SEED_SALT: u64 = 0x7472_6169_6e00_0001;

/// Seed from the environment, or 0 when unset.
pub fn default_seed() -> Result<u64> {
    match std::env::var(SEED_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .map_err(|_| Error::invalid(format!("{SEED_ENV}={v:?} is not an unsigned integer"))),
        Err(_) => Ok(0),
    }
}

fn require<'a>(p: &'a Option<PathBuf>, key: &str) -> Result<&'a Path> {
    p.as_deref().ok_or_else(|| Error::invalid(format!("config: paths.{key} is required for this command")))
}

/// Files and directories written by a command; removed again unless the
/// command commits.
#[derive(Default)]
struct Outputs {
    files: Vec<PathBuf>,
    dirs: Vec<PathBuf>,
    committed: bool,
}

impl Outputs {
    fn ensure_dir(&mut self, dir: &Path) -> Result<()> {
        let mut missing = Vec::new();
        let mut cur = Some(dir);
        while let Some(d) = cur {
            if d.as_os_str().is_empty() || d.exists() {
                break;
            }
            missing.push(d.to_path_buf());
            cur = d.parent();
        }
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        // outermost first, so cleanup can remove it recursively
        self.dirs.extend(missing.into_iter().rev().take(1));
        Ok(())
    }

    fn prepare(&mut self, path: &Path) -> Result<()> {
        if let Some(parent) = path.parent() {
            self.ensure_dir(parent)?;
        }
        self.files.push(path.to_path_buf());
        Ok(())
    }

    fn write(&mut self, path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
        self.prepare(path)?;
        fs::write(path, contents).map_err(|e| Error::io(path, e))
    }

    fn commit(mut self) {
        self.committed = true;
    }
}

impl Drop for Outputs {
    fn drop(&mut self) {
        if self.committed {
            return;
        }
        for f in &self.files {
            let _ = fs::remove_file(f);
        }
        for d in &self.dirs {
            let _ = fs::remove_dir_all(d);
        }
    }
}

fn manifest_dir(path: &Path) -> &Path {
    path.parent().unwrap_or(Path::new(""))
}

fn load_model_volumes(records: &[VolumeRecord], manifest: &Path, extent: usize) -> Result<Vec<Volume3D>> {
    let dir = manifest_dir(manifest);
    records
        .iter()
        .map(|r| prepare_volume(&read_mvol(&r.resolved_path(dir))?, extent))
        .collect()
}

fn sidecar(out: &Path) -> PathBuf {
    let mut name = out.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(".meta.json");
    out.with_file_name(name)
}

fn json_bytes(value: &serde_json::Value) -> Vec<u8> {
    let mut s = serde_json::to_string_pretty(value).expect("serializable");
    s.push('\n');
    s.into_bytes()
}

fn cmd_gen_data(config: &Path) -> Result<String> {
    let cfg = ExperimentConfig::load(config)?;
    let dir = require(&cfg.paths.data_dir, "data_dir")?;
    let spec = cfg.cohort_spec()?;
    let coeffs = PhantomCoefficients::default();
    let cohort = generate_cohort(&spec, &coeffs)?;
    let mut out = Outputs::default();
    out.ensure_dir(dir)?;
    for s in &cohort {
        let path = s.record.resolved_path(dir);
        out.prepare(&path)?;
        write_mvol(&s.volume, &path)?;
    }
    let records: Vec<VolumeRecord> = cohort.into_iter().map(|s| s.record).collect();
    let manifest = dir.join("manifest.csv");
    out.prepare(&manifest)?;
    save_manifest(&records, &manifest)?;
    out.write(&dir.join("generator_spec.txt"), coeffs.to_spec_text())?;
    out.commit();
    Ok(format!("wrote {} sessions to {}", records.len(), dir.display()))
}

fn cmd_split(manifest: &Path, seed: Option<u64>, out_dir: Option<&Path>) -> Result<String> {
    let seed = match seed {
        Some(s) => s,
        None => default_seed()?,
    };
    let mut records = load_manifest(manifest)?;
    let src = manifest_dir(manifest);
    let dest = out_dir.unwrap_or(src);
    if dest != src {
        for r in &mut records {
            r.path = r.resolved_path(src);
        }
    }
    let split = group_split(&records, DEFAULT_RATIOS, seed)?;
    let mut out = Outputs::default();
    for (name, part) in ["train", "val", "test"].iter().zip(split.parts()) {
        let path = dest.join(format!("{name}.csv"));
        out.prepare(&path)?;
        save_manifest(part, &path)?;
    }
    out.commit();
    Ok(format!(
        "split {} sessions into {}/{}/{} (fractions {:.3}/{:.3}/{:.3})",
        records.len(),
        split.train.len(),
        split.val.len(),
        split.test.len(),
        split.achieved[0],
        split.achieved[1],
        split.achieved[2]
    ))
}

fn cmd_train(config: &Path) -> Result<String> {
    let cfg = ExperimentConfig::load(config)?;
    let model_cfg = cfg.model_config()?;
    let train_cfg = cfg.train_config()?;
    let manifest = require(&cfg.paths.manifest, "manifest")?;
    let checkpoint = require(&cfg.paths.checkpoint, "checkpoint")?;
    let loss_log = require(&cfg.paths.loss_log, "loss_log")?;
    let records = load_manifest(manifest)?;
    let volumes = load_model_volumes(&records, manifest, model_cfg.input_extent)?;
    let mut model = Vae3d::new(model_cfg)?;
    let log = train(&mut model, &volumes, &train_cfg, |_| {})?;
    let mut text = String::from("iteration,rec,kl,mmd,total\n");
    for r in &log {
        text.push_str(&format!("{},{},{},{},{}\n", r.iteration, r.rec, r.kl, r.mmd, r.total));
    }
    let mut out = Outputs::default();
    out.prepare(checkpoint)?;
    save_checkpoint(&model, checkpoint)?;
    out.write(loss_log, text)?;
    out.commit();
    let last = log.last().expect("iterations >= 1");
    Ok(format!("trained {} iterations, final total loss {}", log.len(), last.total))
}

fn cmd_embed(checkpoint: &Path, manifest: &Path, out_path: &Path) -> Result<String> {
    let model = load_checkpoint(checkpoint)?;
    let records = load_manifest(manifest)?;
    let volumes = load_model_volumes(&records, manifest, model.config().input_extent)?;
    let d = model.config().latent_dim;
    let mut text = String::from("record_id");
    for k in 0..d {
        text.push_str(&format!(",z{k}"));
    }
    text.push('\n');
    for (r, v) in records.iter().zip(&volumes) {
        let post = model.encode(v)?;
        if post.mu.iter().any(|x| !x.is_finite()) {
            return Err(Error::Numeric(format!("non-finite latent code for {}", r.id())));
        }
        text.push_str(&r.id());
        for m in &post.mu {
            text.push_str(&format!(",{m}"));
        }
        text.push('\n');
    }
    let meta = serde_json::json!({
        "representation": "posterior_mean",
        "latent_dim": d,
        "rows": records.len(),
        "alpha": model.config().alpha,
        "beta": model.config().beta,
    });
    let mut out = Outputs::default();
    out.write(out_path, text)?;
    out.write(&sidecar(out_path), json_bytes(&meta))?;
    out.commit();
    Ok(format!("embedded {} sessions into {d} dimensions", records.len()))
}

fn cmd_eval_recon(checkpoint: &Path, manifest: &Path, out_path: &Path, max_val: f64) -> Result<String> {
    let model = load_checkpoint(checkpoint)?;
    let records = load_manifest(manifest)?;
    let volumes = load_model_volumes(&records, manifest, model.config().input_extent)?;
    let ssim = SsimConfig::default();
    let mut scores = Vec::with_capacity(records.len());
    for (r, v) in records.iter().zip(&volumes) {
        let post = model.encode(v)?;
        let rec = model.decode(&LatentVector { z: post.mu })?;
        let s = score_reconstruction(r.id(), v, &rec, max_val, &ssim)?;
        if s.ssim.is_nan() || s.psnr.is_nan() {
            return Err(Error::Numeric(format!("metric is NaN for {}", r.id())));
        }
        scores.push(s);
    }
    let meta = serde_json::json!({
        "reconstruction": "decode(posterior_mean)",
        "psnr_max_val": max_val,
        "ssim": {
            "window_extent": ssim.window_extent,
            "window": "uniform",
            "coverage": "valid",
            "k1": ssim.k1,
            "k2": ssim.k2,
            "dynamic_range": ssim.dynamic_range,
        },
    });
    let mut out = Outputs::default();
    out.write(out_path, metrics_report(&scores))?;
    out.write(&sidecar(out_path), json_bytes(&meta))?;
    out.commit();
    Ok(format!("scored {} reconstructions", scores.len()))
}

/// Latent matrix file: header `record_id,z0,..`, then one row per session.
pub fn read_latents(path: &Path) -> Result<(Vec<String>, Array2<f64>)> {
    let fail = |line: u64, msg: String| Error::Manifest {
        path: path.to_path_buf(),
        line,
        msg,
    };
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(file);
    let header = reader.headers().map_err(|e| fail(1, e.to_string()))?.clone();
    if header.get(0) != Some("record_id") || header.len() < 2 {
        return Err(fail(1, "expected header record_id,z0,...".into()));
    }
    let d = header.len() - 1;
    let mut ids = Vec::new();
    let mut values = Vec::new();
    for row in reader.records() {
        let row = row.map_err(|e| fail(e.position().map_or(0, |p| p.line()), e.to_string()))?;
        let line = row.position().map_or(0, |p| p.line());
        ids.push(row[0].to_string());
        for field in row.iter().skip(1) {
            let v: f64 = field.trim().parse().map_err(|_| fail(line, format!("bad number {field:?}")))?;
            if !v.is_finite() {
                return Err(fail(line, format!("non-finite value {field:?}")));
            }
            values.push(v);
        }
    }
    let n = ids.len();
    let z = Array2::from_shape_vec((n, d), values).map_err(|e| Error::invalid(e.to_string()))?;
    Ok((ids, z))
}

fn select_rows(ids: &[String], z: &Array2<f64>, records: &[VolumeRecord], what: &Path) -> Result<Array2<f64>> {
    let index: HashMap<&str, usize> = ids.iter().enumerate().map(|(i, s)| (s.as_str(), i)).collect();
    let rows = records
        .iter()
        .map(|r| {
            index
                .get(r.id().as_str())
                .copied()
                .ok_or_else(|| Error::invalid(format!("{}: no latent row for record {}", what.display(), r.id())))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(z.select(ndarray::Axis(0), &rows))
}

#[allow(clippy::too_many_arguments)]
fn cmd_regress(
    latents: &Path,
    target: Target,
    train_manifest: &Path,
    test_manifest: &Path,
    out_path: &Path,
    grid_out: Option<&Path>,
    seed: Option<u64>,
) -> Result<String> {
    let seed = match seed {
        Some(s) => s,
        None => default_seed()?,
    };
    let (ids, z) = read_latents(latents)?;
    let train_recs = load_manifest(train_manifest)?;
    let test_recs = load_manifest(test_manifest)?;
    let ytr = train_recs.iter().map(|r| target.label(r)).collect::<Result<Vec<_>>>()?;
    let yte = test_recs.iter().map(|r| target.label(r)).collect::<Result<Vec<_>>>()?;
    let ztr = select_rows(&ids, &z, &train_recs, latents)?;
    let zte = select_rows(&ids, &z, &test_recs, latents)?;
    let spec = GridSpec { seed, ..GridSpec::default() };
    let grid = grid_search_cv(ztr.view(), &ytr, &spec)?;
    let model = svr_fit(ztr.view(), &ytr, &grid.best)?;
    let pred = svr_predict(&model, zte.view())?;
    if pred.iter().any(|p| !p.is_finite()) {
        return Err(Error::Numeric("non-finite SVR prediction".into()));
    }
    let row = RegressionRow {
        task: target.name().to_string(),
        mae: mae(&yte, &pred)?,
        r2: r2(&yte, &pred)?,
        rmse: rmse(&yte, &pred)?,
        c: grid.best.c,
        kernel: grid.best.kernel,
    };
    let grid_path = grid_out.map(Path::to_path_buf).unwrap_or_else(|| {
        let stem = out_path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        out_path.with_file_name(format!("{stem}_grid.csv"))
    });
    let mut out = Outputs::default();
    out.write(out_path, regression_csv(std::slice::from_ref(&row)))?;
    out.write(&grid_path, grid_csv(&grid))?;
    out.commit();
    Ok(format!(
        "{}: kernel {} C {} held-out mae {} r2 {} rmse {}",
        row.task,
        row.kernel.name(),
        row.c,
        row.mae,
        row.r2,
        row.rmse
    ))
}

fn projection_meta(p: &ProjectionMatrix, target: Option<Target>) -> serde_json::Value {
    let cols: Vec<Vec<f64>> = (0..2).map(|k| p.w.column(k).to_vec()).collect();
    serde_json::json!({
        "method": p.method.name(),
        "target": target.map(Target::name),
        "w_columns": cols,
        "center": p.center.to_vec(),
        "fitted_on": format!("{:016x}", p.fitted_on),
        "rank_deficient": p.rank_deficient,
        "component_variance": p.component_variance,
        "explained_ratio": p.explained_ratio,
    })
}

fn cmd_project(latents: &Path, manifest: &Path, method: Method, target: Option<Target>, out_path: &Path) -> Result<String> {
    let (ids, z) = read_latents(latents)?;
    let records = load_manifest(manifest)?;
    let zr = select_rows(&ids, &z, &records, latents)?;
    let proj = match method {
        Method::Pca => pca_fit(zr.view())?,
        Method::Pls => {
            let t = target.ok_or_else(|| Error::invalid("project --method pls requires --target"))?;
            let y = records.iter().map(|r| t.label(r)).collect::<Result<Vec<_>>>()?;
            let y = Array2::from_shape_vec((y.len(), 1), y).expect("column vector");
            pls_fit(zr.view(), y.view())?
        }
    };
    let coords = project(zr.view(), &proj)?;
    let mut out = Outputs::default();
    out.write(out_path, projection_csv(&records, coords.view())?)?;
    out.write(&sidecar(out_path), json_bytes(&projection_meta(&proj, target)))?;
    out.commit();
    let flag = if proj.rank_deficient { " (rank deficient)" } else { "" };
    Ok(format!("projected {} sessions with {}{flag}", records.len(), proj.method.name()))
}

pub fn execute(cli: &Cli) -> Result<String> {
    match &cli.command {
        Command::GenData { config } => cmd_gen_data(config),
        Command::Split { manifest, seed, out_dir } => cmd_split(manifest, *seed, out_dir.as_deref()),
        Command::Train { config } => cmd_train(config),
        Command::Embed { checkpoint, manifest, out } => cmd_embed(checkpoint, manifest, out),
        Command::EvalRecon { checkpoint, manifest, out, max_val } => cmd_eval_recon(checkpoint, manifest, out, *max_val),
        Command::Regress { latents, target, train, test, out, grid_out, seed } => {
            cmd_regress(latents, *target, train, test, out, grid_out.as_deref(), *seed)
        }
        Command::Project { latents, manifest, method, target, out } => {
            cmd_project(latents, manifest, *method, *target, out)
        }
    }
}

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Numeric(_) => EXIT_NUMERIC,
        _ => EXIT_VALIDATION,
    }
}

/// Parses arguments, runs the command and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_VALIDATION } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(&cli) {
        Ok(msg) => {
            println!("{msg}");
            0
        }
        Err(e) => {
            let line = e.to_string().replace('\n', " ");
            eprintln!("latvol: error: {line}");
            exit_code(&e)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_defaults_and_unknown_keys() {
        let cfg = ExperimentConfig::from_json(r#"{"preset": "VAE", "seed": 3}"#).unwrap();
        assert_eq!(cfg.batch_size, 2);
        assert_eq!(cfg.learning_rate, 1e-4);
        let m = cfg.model_config().unwrap();
        assert_eq!((m.alpha, m.beta, m.latent_dim), (1.0, 1.0, 32));
        assert!(ExperimentConfig::from_json(r#"{"preset": "VAE", "lerning_rate": 1}"#).is_err());
        assert!(ExperimentConfig::from_json(r#"{"paths": {"chekpoint": "x"}}"#).is_err());
    }

    #[test]
    fn preset_or_weights() {
        let both = ExperimentConfig::from_json(r#"{"preset": "AE", "alpha": 1, "beta": 1, "seed": 0}"#).unwrap();
        assert!(both.model_config().is_err());
        let none = ExperimentConfig::from_json(r#"{"seed": 0}"#).unwrap();
        assert!(none.model_config().is_err());
        let explicit = ExperimentConfig::from_json(r#"{"alpha": 0, "beta": 0.5, "seed": 0}"#).unwrap();
        let m = explicit.model_config().unwrap();
        assert!(!m.deterministic_encoder);
        assert_eq!(m.beta, 0.5);
    }

    #[test]
    fn numeric_errors_map_to_exit_three() {
        assert_eq!(exit_code(&Error::Numeric("nan".into())), EXIT_NUMERIC);
        assert_eq!(exit_code(&Error::Invalid("x".into())), EXIT_VALIDATION);
    }

    #[test]
    fn uncommitted_outputs_are_removed() {
        let dir = tempfile::tempdir().unwrap();
        let nested = dir.path().join("a/b");
        let file = nested.join("out.csv");
        {
            let mut out = Outputs::default();
            out.write(&file, "x").unwrap();
            assert!(file.exists());
        }
        assert!(!file.exists());
        assert!(!dir.path().join("a").exists());
        let mut out = Outputs::default();
        out.write(&file, "x").unwrap();
        out.commit();
        assert!(file.exists());
    }
}
