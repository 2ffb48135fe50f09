//! The `demsr` command line: one subcommand per workflow step.
//!
//! Every subcommand writes `manifest.json` into its output directory (or the
//! directory holding its output file). Evaluation subcommands write a JSON
//! report and a flat CSV; `report` merges evaluation outputs of several
//! methods into combined tables.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::eval::geojson::{read_buildings_file, read_roads_file};
use crate::eval::{
    boundary_match_report, error_stats, extract_dem_boundaries, landcover_binned_stats, reference_boundary_raster,
    road_profile_report, slope_binned_stats, BinnedReport, BoundaryReport, EdgeConfig, ErrorStats, ProfileReport,
    Thinning, DEFAULT_BUFFERS, DEFAULT_SLOPE_EDGES, MIN_BUILDING_AREA,
};
use crate::interp::{upsample, Method};
use crate::msm::{load_model_file, save_model_file};
use crate::pipeline::{build_blocks, reconstruct_tiled, train_with, write_loss_csv, TrainConfig, TILE_BLOCK, TILE_OVERLAP};
use crate::raster::{compute_slope, downsample_nn, read_ascii_grid_file, write_ascii_grid_file, Grid};
use crate::synth::{generate_scene, SynthConfig};

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Parser)]
#[command(name = "demsr", version, about = "Super-resolution and accuracy assessment for urban DEMs")]
pub struct Cli {
    /// Cap on worker threads; results do not depend on it.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a procedural urban scene.
    Synth(SynthArgs),
    /// Nearest-neighbour downsampling of a grid.
    Downsample(DownsampleArgs),
    /// Classical upsampling baseline.
    Upsample(UpsampleArgs),
    /// Train a multi-scale model on one or more DEMs.
    Train(TrainArgs),
    /// Super-resolve a grid with a trained model.
    Reconstruct(ReconstructArgs),
    /// MAE, RMSE and STD over all valid cells.
    EvalNumeric(EvalNumericArgs),
    /// Error statistics binned by reference slope.
    EvalSlope(EvalSlopeArgs),
    /// Error statistics binned by land-cover class.
    EvalLandcover(EvalLandcoverArgs),
    /// Road-profile Pearson correlation.
    EvalRoads(EvalRoadsArgs),
    /// Building-boundary buffer ratios.
    EvalBuildings(EvalBuildingsArgs),
    /// Merge evaluation outputs into combined tables.
    Report(ReportArgs),
}

#[derive(Debug, Args, Serialize)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 512)]
    pub size: usize,
    #[arg(long, default_value_t = 0.5)]
    pub cell_size: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 6.0)]
    pub terrain_amplitude: f64,
    #[arg(long, default_value_t = 120.0)]
    pub correlation_length: f64,
    #[arg(long, default_value_t = 64.0)]
    pub road_spacing: f64,
    #[arg(long, default_value_t = 10.0)]
    pub road_width: f64,
    #[arg(long, default_value_t = 0.3)]
    pub building_density: f64,
    #[arg(long, default_value_t = 6.0)]
    pub footprint_min: f64,
    #[arg(long, default_value_t = 24.0)]
    pub footprint_max: f64,
    #[arg(long, default_value_t = 3.0)]
    pub height_min: f64,
    #[arg(long, default_value_t = 25.0)]
    pub height_max: f64,
    #[arg(long, default_value_t = 0.0)]
    pub noise_amplitude: f64,
    #[arg(long, default_value_t = 0.0)]
    pub xll: f64,
    #[arg(long, default_value_t = 0.0)]
    pub yll: f64,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

impl SynthArgs {
    fn config(&self) -> SynthConfig {
        SynthConfig {
            size: self.size,
            cell_size: self.cell_size,
            seed: self.seed,
            terrain_amplitude: self.terrain_amplitude,
            correlation_length: self.correlation_length,
            road_spacing: self.road_spacing,
            road_width: self.road_width,
            building_density: self.building_density,
            footprint_min: self.footprint_min,
            footprint_max: self.footprint_max,
            height_min: self.height_min,
            height_max: self.height_max,
            noise_amplitude: self.noise_amplitude,
            xll: self.xll,
            yll: self.yll,
        }
    }
}

#[derive(Debug, Args, Serialize)]
pub struct DownsampleArgs {
    #[arg(long)]
    pub factor: usize,
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum MethodArg {
    Nn,
    Bi,
    Cc,
    Idw,
}

#[derive(Debug, Args, Serialize)]
pub struct UpsampleArgs {
    #[arg(long, value_enum)]
    pub method: MethodArg,
    #[arg(long)]
    pub factor: usize,
    /// IDW distance exponent.
    #[arg(long, default_value_t = 2.0)]
    pub power: f64,
    /// IDW neighbour count.
    #[arg(long, default_value_t = 4)]
    pub k: usize,
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

impl UpsampleArgs {
    fn method(&self) -> Method {
        match self.method {
            MethodArg::Nn => Method::Nn,
            MethodArg::Bi => Method::Bi,
            MethodArg::Cc => Method::Cc,
            MethodArg::Idw => Method::Idw { power: self.power, k: self.k },
        }
    }
}

#[derive(Debug, Args, Serialize)]
pub struct TrainArgs {
    /// High-resolution training DEMs (repeatable).
    #[arg(long = "in", required = true, num_args = 1..)]
    pub inputs: Vec<PathBuf>,
    /// Number of 2x stages.
    #[arg(long, default_value_t = 2)]
    pub scales: usize,
    #[arg(long, default_value_t = 1000)]
    pub iters: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 64)]
    pub batch: usize,
    /// Patch edge at input resolution, in cells.
    #[arg(long, default_value_t = 32)]
    pub patch: usize,
    #[arg(long, default_value_t = 1e-4)]
    pub lr: f64,
    #[arg(long, default_value_t = 10.0)]
    pub lr_drop_factor: f64,
    #[arg(long, default_value_t = 250_000)]
    pub lr_drop_after: usize,
    #[arg(long, default_value_t = 1e-4)]
    pub weight_decay: f64,
    #[arg(long, default_value_t = 500)]
    pub block: usize,
    #[arg(long, default_value_t = 250)]
    pub block_overlap: usize,
    #[arg(long, default_value_t = 64)]
    pub features: usize,
    #[arg(long, default_value_t = 4)]
    pub split: usize,
    /// Sample a training area uniformly before picking a block.
    #[arg(long)]
    pub stratified: bool,
    /// Feed raw elevations to the residual branch.
    #[arg(long)]
    pub no_normalize: bool,
    /// Save an intermediate checkpoint every this many iterations; 0 disables.
    #[arg(long, default_value_t = 0)]
    pub checkpoint_every: usize,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

impl TrainArgs {
    fn config(&self) -> TrainConfig {
        TrainConfig {
            n_scales: self.scales,
            batch_size: self.batch,
            patch_size: self.patch,
            lr: self.lr,
            lr_drop_factor: self.lr_drop_factor,
            lr_drop_after: self.lr_drop_after,
            weight_decay: self.weight_decay,
            total_iters: self.iters,
            seed: self.seed,
            block: self.block,
            block_overlap: self.block_overlap,
            features: self.features,
            split: self.split,
            stratified: self.stratified,
            normalize: !self.no_normalize,
            checkpoint_every: self.checkpoint_every,
        }
    }
}

#[derive(Debug, Args, Serialize)]
pub struct ReconstructArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub factor: usize,
    #[arg(long, default_value_t = TILE_BLOCK)]
    pub tile: usize,
    #[arg(long, default_value_t = TILE_OVERLAP)]
    pub tile_overlap: usize,
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct EvalCommon {
    /// Reconstructed grid.
    #[arg(long)]
    pub recon: PathBuf,
    /// Label for this reconstruction in merged reports.
    #[arg(long)]
    pub method: String,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct EvalNumericArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub common: EvalCommon,
    #[arg(long = "ref")]
    pub reference: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct EvalSlopeArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub common: EvalCommon,
    #[arg(long = "ref")]
    pub reference: PathBuf,
    /// Slope bin edges in percent; the last may be `inf`.
    #[arg(long, value_delimiter = ',')]
    pub edges: Option<Vec<f64>>,
}

#[derive(Debug, Args, Serialize)]
pub struct EvalLandcoverArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub common: EvalCommon,
    #[arg(long = "ref")]
    pub reference: PathBuf,
    /// Grid of land-cover class codes aligned with the reference.
    #[arg(long)]
    pub landcover: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct EvalRoadsArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub common: EvalCommon,
    #[arg(long = "ref")]
    pub reference: PathBuf,
    /// GeoJSON FeatureCollection of LineStrings.
    #[arg(long)]
    pub roads: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct EvalBuildingsArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub common: EvalCommon,
    /// GeoJSON FeatureCollection of Polygons.
    #[arg(long)]
    pub buildings: PathBuf,
    #[arg(long, default_value_t = MIN_BUILDING_AREA)]
    pub min_area: f64,
    /// Absolute high-pass response at or above which a cell is an edge.
    #[arg(long, default_value_t = 1.0)]
    pub threshold: f64,
    #[arg(long)]
    pub no_thinning: bool,
    #[arg(long, value_delimiter = ',', default_values_t = DEFAULT_BUFFERS)]
    pub buffers: Vec<usize>,
}

#[derive(Debug, Args, Serialize)]
pub struct ReportArgs {
    /// Evaluation output directories or JSON files, in table order.
    #[arg(long = "in", required = true, num_args = 1..)]
    pub inputs: Vec<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub config: Value,
    pub inputs: Vec<String>,
    pub outputs: Vec<String>,
    pub seed: Option<u64>,
    pub tool_version: String,
    pub started_unix: f64,
    pub finished_unix: f64,
}

fn unix_now() -> f64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs_f64()).unwrap_or(0.0)
}

fn show(p: &Path) -> String {
    p.display().to_string()
}

/// Directory that holds `path`, `.` for bare file names.
fn parent_dir(path: &Path) -> PathBuf {
    match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    }
}

struct Run {
    command: &'static str,
    config: Value,
    seed: Option<u64>,
    started: f64,
    inputs: Vec<String>,
    outputs: Vec<String>,
}

impl Run {
    fn new(command: &'static str, args: &impl Serialize, seed: Option<u64>, inputs: &[&Path]) -> Result<Self> {
        Ok(Self {
            command,
            config: serde_json::to_value(args)?,
            seed,
            started: unix_now(),
            inputs: inputs.iter().map(|p| show(p)).collect(),
            outputs: Vec::new(),
        })
    }

    fn output(&mut self, p: &Path) {
        self.outputs.push(show(p));
    }

    fn finish(self, dir: &Path) -> Result<()> {
        let m = RunManifest {
            command: self.command.into(),
            config: self.config,
            inputs: self.inputs,
            outputs: self.outputs,
            seed: self.seed,
            tool_version: env!("CARGO_PKG_VERSION").into(),
            started_unix: self.started,
            finished_unix: unix_now(),
        };
        fs::create_dir_all(dir)?;
        fs::write(dir.join(MANIFEST_FILE), serde_json::to_string_pretty(&m)? + "\n")?;
        Ok(())
    }
}

fn write_grid(run: &mut Run, g: &Grid, out: &Path) -> Result<()> {
    fs::create_dir_all(parent_dir(out))?;
    write_ascii_grid_file(g, out)?;
    run.output(out);
    Ok(())
}

/// Envelope of every evaluation JSON file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalOutput<T> {
    pub kind: String,
    pub method: String,
    pub recon: String,
    pub result: T,
}

fn write_eval<T: Serialize>(run: &mut Run, common: &EvalCommon, kind: &str, result: &T, csv: Vec<u8>) -> Result<()> {
    fs::create_dir_all(&common.out)?;
    let env = EvalOutput { kind: kind.into(), method: common.method.clone(), recon: show(&common.recon), result };
    let json = common.out.join(format!("{kind}.json"));
    fs::write(&json, serde_json::to_string_pretty(&env)? + "\n")?;
    run.output(&json);
    let path = common.out.join(format!("{kind}.csv"));
    fs::write(&path, csv)?;
    run.output(&path);
    Ok(())
}

fn stats_csv(rows: &[(String, ErrorStats)]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["method", "mae", "rmse", "std", "mean_error", "n"])?;
    for (m, s) in rows {
        w.write_record([m.clone(), s.mae.to_string(), s.rmse.to_string(), s.std.to_string(), s.mean_error.to_string(), s.n.to_string()])?;
    }
    into_bytes(w)
}

fn binned_csv(rows: &[(String, BinnedReport)]) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    for (i, (m, r)) in rows.iter().enumerate() {
        r.write_csv(m, &mut buf, i == 0)?;
        let mut w = csv::Writer::from_writer(&mut buf);
        let f = |v: f64| v.to_string();
        w.write_record([m.clone(), r.binning.clone(), "average".into(), String::new(), String::new(), r.overall.n.to_string(), "1".into(), f(r.mean_mae), f(r.mean_rmse), f(r.mean_std)])?;
        w.flush()?;
    }
    Ok(buf)
}

fn profile_csv(rows: &[(String, ProfileReport)]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["method", "mean_pcc", "std_pcc", "evaluated", "skipped"])?;
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for (m, r) in rows {
        w.write_record([m.clone(), opt(r.mean_pcc), opt(r.std_pcc), r.evaluated.to_string(), r.skipped.to_string()])?;
    }
    into_bytes(w)
}

fn boundary_csv(rows: &[(String, BoundaryReport)]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["method", "buffer", "selected", "reference_count", "extracted_count", "ratio"])?;
    for (m, r) in rows {
        for b in &r.buffers {
            w.write_record([
                m.clone(),
                b.buffer.to_string(),
                b.selected.to_string(),
                r.reference_count.to_string(),
                r.extracted_count.to_string(),
                b.ratio.to_string(),
            ])?;
        }
    }
    into_bytes(w)
}

fn into_bytes(w: csv::Writer<Vec<u8>>) -> Result<Vec<u8>> {
    w.into_inner().map_err(|e| Error::Io(e.into_error()))
}

fn check_aligned(recon: &Grid, reference: &Grid) -> Result<()> {
    if !recon.same_geometry(reference) {
        return Err(Error::Dimension(format!(
            "reconstruction is {}x{} at {} m, reference is {}x{} at {} m",
            recon.nrows, recon.ncols, recon.cell_size, reference.nrows, reference.ncols, reference.cell_size
        )));
    }
    Ok(())
}

fn cmd_synth(a: &SynthArgs) -> Result<()> {
    let mut run = Run::new("synth", a, Some(a.seed), &[])?;
    let scene = generate_scene(&a.config())?;
    scene.write(&a.out)?;
    for f in ["dem.asc", "landcover.asc", "roads.geojson", "buildings.geojson"] {
        run.output(&a.out.join(f));
    }
    run.finish(&a.out)
}

fn cmd_downsample(a: &DownsampleArgs) -> Result<()> {
    let mut run = Run::new("downsample", a, None, &[&a.input])?;
    let g = read_ascii_grid_file(&a.input)?;
    write_grid(&mut run, &downsample_nn(&g, a.factor)?, &a.out)?;
    run.finish(&parent_dir(&a.out))
}

fn cmd_upsample(a: &UpsampleArgs) -> Result<()> {
    let mut run = Run::new("upsample", a, None, &[&a.input])?;
    let g = read_ascii_grid_file(&a.input)?;
    write_grid(&mut run, &upsample(&g, a.method(), a.factor)?, &a.out)?;
    run.finish(&parent_dir(&a.out))
}

pub const MODEL_FILE: &str = "model.ckpt";
pub const LOSS_FILE: &str = "loss.csv";

fn cmd_train(a: &TrainArgs) -> Result<()> {
    let inputs: Vec<&Path> = a.inputs.iter().map(|p| p.as_path()).collect();
    let mut run = Run::new("train", a, Some(a.seed), &inputs)?;
    let cfg = a.config();
    cfg.validate()?;
    let areas = a.inputs.iter().map(read_ascii_grid_file).collect::<Result<Vec<_>>>()?;
    let store = build_blocks(&areas, &cfg)?;
    if store.is_empty() {
        return Err(Error::Config(format!("no nodata-free {}x{} training block in the inputs", cfg.block, cfg.block)));
    }
    fs::create_dir_all(&a.out)?;
    let mut saved = Vec::new();
    let (model, history) = train_with(&store, &cfg, |it, m, _| {
        let p = a.out.join(format!("model_iter{it}.ckpt"));
        save_model_file(m, &p)?;
        saved.push(p);
        Ok(())
    })?;
    for p in &saved {
        run.output(p);
    }
    let model_path = a.out.join(MODEL_FILE);
    save_model_file(&model, &model_path)?;
    run.output(&model_path);
    let loss_path = a.out.join(LOSS_FILE);
    write_loss_csv(&history, fs::File::create(&loss_path)?)?;
    run.output(&loss_path);
    run.finish(&a.out)
}

fn cmd_reconstruct(a: &ReconstructArgs) -> Result<()> {
    let mut run = Run::new("reconstruct", a, None, &[&a.model, &a.input])?;
    let model = load_model_file(&a.model)?;
    let g = read_ascii_grid_file(&a.input)?;
    let out = reconstruct_tiled(&g, &model, a.factor, a.tile, a.tile_overlap)?;
    write_grid(&mut run, &out, &a.out)?;
    run.finish(&parent_dir(&a.out))
}

fn read_pair(recon: &Path, reference: &Path) -> Result<(Grid, Grid)> {
    let r = read_ascii_grid_file(recon)?;
    let g = read_ascii_grid_file(reference)?;
    check_aligned(&r, &g)?;
    Ok((r, g))
}

fn cmd_eval_numeric(a: &EvalNumericArgs) -> Result<()> {
    let c = &a.common;
    let mut run = Run::new("eval-numeric", a, None, &[&c.recon, &a.reference])?;
    let (recon, reference) = read_pair(&c.recon, &a.reference)?;
    let s = error_stats(&recon, &reference, None)?;
    write_eval(&mut run, c, "numeric", &s, stats_csv(&[(c.method.clone(), s)])?)?;
    run.finish(&c.out)
}

fn cmd_eval_slope(a: &EvalSlopeArgs) -> Result<()> {
    let c = &a.common;
    let mut run = Run::new("eval-slope", a, None, &[&c.recon, &a.reference])?;
    let (recon, reference) = read_pair(&c.recon, &a.reference)?;
    let slope = compute_slope(&reference)?;
    let edges = a.edges.clone().unwrap_or_else(|| DEFAULT_SLOPE_EDGES.to_vec());
    let r = slope_binned_stats(&recon, &reference, &slope, &edges)?;
    let csv = binned_csv(&[(c.method.clone(), r.clone())])?;
    write_eval(&mut run, c, "slope", &r, csv)?;
    run.finish(&c.out)
}

fn cmd_eval_landcover(a: &EvalLandcoverArgs) -> Result<()> {
    let c = &a.common;
    let mut run = Run::new("eval-landcover", a, None, &[&c.recon, &a.reference, &a.landcover])?;
    let (recon, reference) = read_pair(&c.recon, &a.reference)?;
    let lc = read_ascii_grid_file(&a.landcover)?;
    let r = landcover_binned_stats(&recon, &reference, &lc)?;
    let csv = binned_csv(&[(c.method.clone(), r.clone())])?;
    write_eval(&mut run, c, "landcover", &r, csv)?;
    run.finish(&c.out)
}

fn cmd_eval_roads(a: &EvalRoadsArgs) -> Result<()> {
    let c = &a.common;
    let mut run = Run::new("eval-roads", a, None, &[&c.recon, &a.reference, &a.roads])?;
    let (recon, reference) = read_pair(&c.recon, &a.reference)?;
    let roads = read_roads_file(&a.roads)?;
    let r = road_profile_report(&recon, &reference, &roads)?;
    let csv = profile_csv(&[(c.method.clone(), r.clone())])?;
    write_eval(&mut run, c, "roads", &r, csv)?;
    run.finish(&c.out)
}

fn cmd_eval_buildings(a: &EvalBuildingsArgs) -> Result<()> {
    let c = &a.common;
    let mut run = Run::new("eval-buildings", a, None, &[&c.recon, &a.buildings])?;
    let recon = read_ascii_grid_file(&c.recon)?;
    let polys = read_buildings_file(&a.buildings)?;
    let reference = reference_boundary_raster(&polys, &recon, a.min_area)?;
    let cfg = EdgeConfig {
        threshold: a.threshold,
        thinning: if a.no_thinning { Thinning::None } else { Thinning::ZhangSuen },
        ..Default::default()
    };
    let extracted = extract_dem_boundaries(&recon, &cfg)?;
    let r = boundary_match_report(&extracted, &reference.boundary, &a.buffers)?;
    let csv = boundary_csv(&[(c.method.clone(), r.clone())])?;
    write_eval(&mut run, c, "buildings", &r, csv)?;
    run.finish(&c.out)
}

/// Evaluation results gathered from several runs, in input order.
#[derive(Debug, Default, Serialize)]
pub struct MergedReport {
    pub numeric: Vec<(String, ErrorStats)>,
    pub slope: Vec<(String, BinnedReport)>,
    pub landcover: Vec<(String, BinnedReport)>,
    pub roads: Vec<(String, ProfileReport)>,
    pub buildings: Vec<(String, BoundaryReport)>,
}

impl MergedReport {
    fn add(&mut self, path: &Path) -> Result<()> {
        let text = fs::read_to_string(path)?;
        let v: EvalOutput<Value> = serde_json::from_str(&text)
            .map_err(|e| Error::Validation(format!("{} is not an evaluation report: {e}", path.display())))?;
        let m = v.method;
        let r = v.result;
        match v.kind.as_str() {
            "numeric" => self.numeric.push((m, serde_json::from_value(r)?)),
            "slope" => self.slope.push((m, serde_json::from_value(r)?)),
            "landcover" => self.landcover.push((m, serde_json::from_value(r)?)),
            "roads" => self.roads.push((m, serde_json::from_value(r)?)),
            "buildings" => self.buildings.push((m, serde_json::from_value(r)?)),
            k => return Err(Error::Validation(format!("{}: unknown report kind {k:?}", path.display()))),
        }
        Ok(())
    }

    fn is_empty(&self) -> bool {
        self.numeric.is_empty()
            && self.slope.is_empty()
            && self.landcover.is_empty()
            && self.roads.is_empty()
            && self.buildings.is_empty()
    }
}

fn report_files(input: &Path) -> Result<Vec<PathBuf>> {
    if input.is_file() {
        return Ok(vec![input.to_path_buf()]);
    }
    let mut files: Vec<PathBuf> = fs::read_dir(input)?
        .map(|e| e.map(|e| e.path()))
        .collect::<std::io::Result<_>>()?;
    files.retain(|p| {
        p.extension().is_some_and(|e| e == "json") && p.file_name().is_some_and(|n| n != MANIFEST_FILE)
    });
    files.sort();
    Ok(files)
}

fn cmd_report(a: &ReportArgs) -> Result<()> {
    let inputs: Vec<&Path> = a.inputs.iter().map(|p| p.as_path()).collect();
    let mut run = Run::new("report", a, None, &inputs)?;
    let mut merged = MergedReport::default();
    for input in &a.inputs {
        for f in report_files(input)? {
            merged.add(&f)?;
        }
    }
    if merged.is_empty() {
        return Err(Error::Validation("no evaluation reports found in the inputs".into()));
    }
    fs::create_dir_all(&a.out)?;
    let tables: [(&str, bool, Box<dyn Fn() -> Result<Vec<u8>> + '_>); 5] = [
        ("table1.csv", merged.numeric.is_empty(), Box::new(|| stats_csv(&merged.numeric))),
        ("table2_slope.csv", merged.slope.is_empty(), Box::new(|| binned_csv(&merged.slope))),
        ("table2_landcover.csv", merged.landcover.is_empty(), Box::new(|| binned_csv(&merged.landcover))),
        ("table3_roads.csv", merged.roads.is_empty(), Box::new(|| profile_csv(&merged.roads))),
        ("boundary.csv", merged.buildings.is_empty(), Box::new(|| boundary_csv(&merged.buildings))),
    ];
    let json = a.out.join("report.json");
    fs::write(&json, serde_json::to_string_pretty(&merged)? + "\n")?;
    run.output(&json);
    for (name, empty, make) in &tables {
        if !empty {
            let p = a.out.join(name);
            fs::write(&p, make()?)?;
            run.output(&p);
        }
    }
    run.finish(&a.out)
}

fn dispatch(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Synth(a) => cmd_synth(a),
        Command::Downsample(a) => cmd_downsample(a),
        Command::Upsample(a) => cmd_upsample(a),
        Command::Train(a) => cmd_train(a),
        Command::Reconstruct(a) => cmd_reconstruct(a),
        Command::EvalNumeric(a) => cmd_eval_numeric(a),
        Command::EvalSlope(a) => cmd_eval_slope(a),
        Command::EvalLandcover(a) => cmd_eval_landcover(a),
        Command::EvalRoads(a) => cmd_eval_roads(a),
        Command::EvalBuildings(a) => cmd_eval_buildings(a),
        Command::Report(a) => cmd_report(a),
    }
}

/// Runs one command on a dedicated pool of `threads` workers, or on the
/// global pool.
pub fn execute(cli: &Cli) -> Result<()> {
    match cli.threads {
        Some(0) => Err(Error::Parameter("--threads must be at least 1".into())),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::Parameter(format!("cannot start {n} worker threads: {e}")))?
            .install(|| dispatch(cli)),
        None => dispatch(cli),
    }
}

/// Parses `argv` (program name first) and runs it. Returns the process exit
/// code: 0 on success, 1 on a domain error, 2 on a usage error.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {}", e.to_string().replace('\n', " "));
            1
        }
    }
}
