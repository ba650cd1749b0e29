//! Subcommand implementations.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::Args;
use serde::Serialize;

use ftc::coherence::{shape_coherence_alpha, AlphaSettings, RegionSet, DEFAULT_SUPERSAMPLE};
use ftc::curves::{
    extremal_curves, trace_level_curve, write_polylines, zero_splitting_from_field, BicubicField, ContinuationSettings,
    CurveKind, Extremum, Polyline, ScalarFn,
};
use ftc::fields::{compute_field, evaluate_kernel, field_stats, slice, FieldGrid, FieldSettings, GridSpec, Kernel};
use ftc::gridio::{load_grid, load_int_grid, save_grid, GridHeader, Payload};
use ftc::segmentation::{
    merge_small_regions, seeded_region_growing, write_labels, write_region_table, GrowthSettings, RegionPartition,
    Transform,
};
use ftc::{Epoch, FlowSystem, FtcError, Point2};

use crate::config::{
    flow_from_description, parse_reals, resolve_kernel, resolve_problem, resolve_settings, FileConfig, FlowArgs,
    KernelArgs, Problem,
};
use crate::plot::{self, Scale};

type Result<T> = std::result::Result<T, FtcError>;

pub const DEFAULT_QUANTILE: f64 = 0.2;
pub const DEFAULT_THETA_TOL: f64 = 0.05;

fn config_err(msg: impl Into<String>) -> FtcError {
    FtcError::Config(msg.into())
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    Ok(BufWriter::new(File::create(path)?))
}

fn sidecar(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".provenance");
    PathBuf::from(s)
}

/// Writes `key=value` lines next to an artifact that cannot carry its own metadata.
fn write_provenance(path: &Path, meta: &BTreeMap<String, String>) -> Result<()> {
    let mut w = create(&sidecar(path))?;
    for (k, v) in meta {
        writeln!(w, "{k}={}", v.replace('\n', " "))?;
    }
    w.flush()?;
    Ok(())
}

fn base_meta(command: &str) -> BTreeMap<String, String> {
    let mut meta = BTreeMap::new();
    meta.insert("command".into(), command.into());
    meta.insert("version".into(), env!("CARGO_PKG_VERSION").into());
    meta
}

fn problem_meta(meta: &mut BTreeMap<String, String>, flow: &FlowSystem, epoch: Epoch) {
    meta.insert("flow".into(), flow.describe());
    meta.insert("t0".into(), format!("{:?}", epoch.t0));
    meta.insert("tau".into(), format!("{:?}", epoch.tau));
}

fn save_png(img: &image::RgbImage, path: &Path, meta: &BTreeMap<String, String>) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    plot::save(img, path)?;
    write_provenance(path, meta)
}

fn is_ftc(kernel: &str) -> bool {
    matches!(kernel, "maxftc" | "minftc" | "ftc_ratio")
}

fn default_scale(field: &FieldGrid) -> Scale {
    match field.meta.get("kernel") {
        Some(k) if is_ftc(k) => Scale::Log,
        _ => Scale::Linear,
    }
}

fn resolve_scale(cfg: &FileConfig, cli: Option<&str>, field: &FieldGrid) -> Result<Scale> {
    match cli.or(cfg.output.scale.as_deref()) {
        Some(s) => s.parse(),
        None => Ok(default_scale(field)),
    }
}

// ---------------------------------------------------------------- field

#[derive(Debug, Args)]
pub struct FieldArgs {
    #[command(flatten)]
    pub problem: FlowArgs,
    #[command(flatten)]
    pub tuning: KernelArgs,
    /// ftle, maxftc, minftc, ftc_ratio, theta
    #[arg(long)]
    pub kernel: Option<String>,
    #[arg(long, default_value = "field.grid")]
    pub out: PathBuf,
    /// binary or csv
    #[arg(long)]
    pub payload: Option<String>,
    /// Heatmap image path
    #[arg(long)]
    pub png: Option<PathBuf>,
    /// Heatmap color scale: log or linear
    #[arg(long)]
    pub scale: Option<String>,
    /// Slice line `x0,y0:x1,y1` (repeatable)
    #[arg(long, allow_hyphen_values = true)]
    pub slice: Vec<String>,
    #[arg(long)]
    pub slice_samples: Option<usize>,
    /// Also plot each slice trace
    #[arg(long)]
    pub slice_png: bool,
}

fn slice_path(out: &Path, k: usize, n: usize) -> PathBuf {
    let mut s = out.as_os_str().to_owned();
    if n == 1 {
        s.push(".slice.csv");
    } else {
        s.push(format!(".slice{k}.csv"));
    }
    PathBuf::from(s)
}

fn parse_slice(s: &str) -> Result<(Point2, Point2)> {
    let (a, b) = s.split_once(':').ok_or_else(|| config_err(format!("slice must look like x0,y0:x1,y1, got `{s}`")))?;
    let a = parse_reals::<2>(a, "slice start")?;
    let b = parse_reals::<2>(b, "slice end")?;
    Ok((Point2::new(a[0], a[1]), Point2::new(b[0], b[1])))
}

pub fn field(cfg: &FileConfig, args: &FieldArgs, threads: Option<usize>) -> Result<()> {
    let Problem { flow, epoch, spec } = resolve_problem(cfg, &args.problem)?;
    let kernel = resolve_kernel(cfg, args.kernel.as_deref())?;
    let settings = resolve_settings(cfg, &args.tuning, threads)?;
    let payload: Payload = args.payload.as_deref().or(cfg.output.payload.as_deref()).unwrap_or("binary").parse()?;
    let slices = args.slice.iter().map(|s| parse_slice(s)).collect::<Result<Vec<_>>>()?;
    let samples = args.slice_samples.or(cfg.output.slice_samples).unwrap_or(256);
    for &(a, b) in &slices {
        for p in [a, b] {
            if !flow.bounds().contains(p) {
                return Err(config_err(format!("slice endpoint ({}, {}) lies outside the domain", p.x, p.y)));
            }
        }
    }

    let field = compute_field(&flow, epoch, kernel, spec, &settings)?;
    save_grid(&args.out, &field, payload)?;
    let stats = field_stats(&field)?;
    eprintln!(
        "{kernel} {}x{}: min {:.6e} max {:.6e} mean {:.6e}, {} invalid",
        spec.nx, spec.ny, stats.min, stats.max, stats.mean, stats.invalid
    );

    let mut meta = field.meta.clone();
    meta.extend(base_meta("field"));
    meta.insert("source".into(), args.out.display().to_string());
    if args.png.is_some() || cfg.output.png == Some(true) {
        let path = args.png.clone().unwrap_or_else(|| args.out.with_extension("png"));
        let scale = resolve_scale(cfg, args.scale.as_deref(), &field)?;
        let mut m = meta.clone();
        m.insert("scale".into(), format!("{scale:?}").to_lowercase());
        save_png(&plot::heatmap(&field, scale), &path, &m)?;
    }
    for (k, &(a, b)) in slices.iter().enumerate() {
        let trace = slice(&field, a, b, samples)?;
        let path = slice_path(&args.out, k, slices.len());
        let mut w = create(&path)?;
        writeln!(w, "s,x,y,value")?;
        for (p, v) in trace.points.iter().zip(&trace.values) {
            let s = ((p.x - a.x).powi(2) + (p.y - a.y).powi(2)).sqrt();
            let v = v.map(ftc::gridio::format_value).unwrap_or_else(|| "nan".into());
            writeln!(w, "{},{},{},{}", ftc::gridio::format_value(s), ftc::gridio::format_value(p.x), ftc::gridio::format_value(p.y), v)?;
        }
        w.flush()?;
        let mut m = meta.clone();
        m.insert("slice".into(), format!("{:?},{:?}:{:?},{:?}", a.x, a.y, b.x, b.y));
        m.insert("samples".into(), samples.to_string());
        write_provenance(&path, &m)?;
        if args.slice_png {
            save_png(&plot::slice_plot(&trace.values), &path.with_extension("png"), &m)?;
        }
    }
    Ok(())
}

// ---------------------------------------------------------------- curves

#[derive(Debug, Args)]
pub struct CurvesArgs {
    #[command(flatten)]
    pub problem: FlowArgs,
    #[command(flatten)]
    pub tuning: KernelArgs,
    /// FTC kernel computed when no --ftc file is given (default maxftc)
    #[arg(long)]
    pub kernel: Option<String>,
    /// Precomputed FTC field (troughs)
    #[arg(long)]
    pub ftc: Option<PathBuf>,
    /// Precomputed FTLE field (ridges)
    #[arg(long)]
    pub ftle: Option<PathBuf>,
    /// Arbitrary field whose level curve through --seed is traced
    #[arg(long, requires = "seed")]
    pub field: Option<PathBuf>,
    /// Seed `x,y` for --field
    #[arg(long, allow_hyphen_values = true)]
    pub seed: Option<String>,
    #[arg(long)]
    pub quantile: Option<f64>,
    /// Also extract zero-splitting curves
    #[arg(long)]
    pub zero_splitting: bool,
    #[arg(long)]
    pub theta_tol: Option<f64>,
    /// Directory for troughs.csv, ridges.csv, zero_splitting.csv
    #[arg(long, default_value = ".")]
    pub out_dir: PathBuf,
    /// Output file for --field mode
    #[arg(long, default_value = "level.csv")]
    pub out: PathBuf,
    /// Overlay image path
    #[arg(long)]
    pub png: Option<PathBuf>,
}

fn write_curves(path: &Path, lines: &[Polyline], meta: &BTreeMap<String, String>) -> Result<()> {
    let mut w = create(path)?;
    write_polylines(&mut w, lines)?;
    w.flush()?;
    write_provenance(path, meta)
}

/// Field the troughs are traced on: FTC kinds in decades, others as is.
fn trough_surface(field: &FieldGrid) -> FieldGrid {
    match field.meta.get("kernel") {
        Some(k) if is_ftc(k) => field.log10(),
        _ => field.clone(),
    }
}

fn check_grid(field: &FieldGrid, spec: &GridSpec, what: &str) -> Result<()> {
    if field.nx != spec.nx || field.ny != spec.ny {
        return Err(config_err(format!("{what} grid {}x{} differs from {}x{}", field.nx, field.ny, spec.nx, spec.ny)));
    }
    Ok(())
}

fn level_curve_mode(args: &CurvesArgs, path: &Path) -> Result<()> {
    let field = load_grid(path)?;
    let seed = parse_reals::<2>(args.seed.as_deref().unwrap_or_default(), "seed")?;
    let seed = Point2::new(seed[0], seed[1]);
    let f = BicubicField::new(&field)?;
    let level = f.value(seed).ok_or(FtcError::OutOfBounds(seed))?;
    let settings = ContinuationSettings::for_grid(&field.spec());
    let (mut line, ends) = trace_level_curve(&f, seed, level, &settings)?;
    line.kind = CurveKind::LevelSet;
    let mut meta = base_meta("curves");
    meta.insert("field".into(), path.display().to_string());
    meta.insert("seed".into(), format!("{:?},{:?}", seed.x, seed.y));
    meta.insert("level".into(), format!("{level:?}"));
    write_curves(&args.out, std::slice::from_ref(&line), &meta)?;
    eprintln!("level {level:.6e}: {} points, closed {}, ends {:?}", line.len(), line.closed, ends);
    if let Some(png) = &args.png {
        save_png(&plot::overlay(field.spec(), Some(&field), &[line], default_scale(&field)), png, &meta)?;
    }
    Ok(())
}

pub fn curves(cfg: &FileConfig, args: &CurvesArgs, threads: Option<usize>) -> Result<()> {
    if let Some(path) = &args.field {
        return level_curve_mode(args, path);
    }
    let q = args.quantile.or(cfg.curves.quantile).unwrap_or(DEFAULT_QUANTILE);
    let theta_tol = args.theta_tol.or(cfg.curves.theta_tol).unwrap_or(DEFAULT_THETA_TOL);
    let needs_flow = args.ftc.is_none() || args.ftle.is_none() || args.zero_splitting;
    let problem = if needs_flow { Some(resolve_problem(cfg, &args.problem)?) } else { None };
    let settings = resolve_settings(cfg, &args.tuning, threads)?;
    let compute = |kernel: Kernel| -> Result<FieldGrid> {
        let p = problem.as_ref().expect("flow resolved");
        compute_field(&p.flow, p.epoch, kernel, p.spec, &settings)
    };

    let ftc = match &args.ftc {
        Some(p) => load_grid(p)?,
        None => {
            let kernel = match args.kernel.as_deref().or(cfg.kernel.name.as_deref()) {
                Some(k) => k.parse()?,
                None => Kernel::MaxFtc,
            };
            compute(kernel)?
        }
    };
    let spec = ftc.spec();
    if let Some(p) = &problem {
        if args.ftc.is_some() {
            check_grid(&ftc, &p.spec, "FTC")?;
        }
    }
    let ftle = match &args.ftle {
        Some(p) => load_grid(p)?,
        None => compute(Kernel::Ftle)?,
    };
    check_grid(&ftle, &spec, "FTLE")?;

    let cont = ContinuationSettings::for_grid(&spec);
    // A field with no positive values (straight-line flows) has no troughs in decades.
    let surface = trough_surface(&ftc);
    let troughs = if surface.valid_values().next().is_none() && ftc.valid_values().next().is_some() {
        Vec::new()
    } else {
        extremal_curves(&surface, Extremum::Trough, q, CurveKind::FtcTrough, &cont)?
    };
    let ridges = extremal_curves(&ftle, Extremum::Ridge, q, CurveKind::FtleRidge, &cont)?;

    let mut meta = base_meta("curves");
    meta.insert("quantile".into(), format!("{q:?}"));
    if let Some(p) = &problem {
        problem_meta(&mut meta, &p.flow, p.epoch);
    }
    for (key, f) in [("ftc", &ftc), ("ftle", &ftle)] {
        for (k, v) in &f.meta {
            meta.insert(format!("{key}.{k}"), v.clone());
        }
    }
    write_curves(&args.out_dir.join("troughs.csv"), &troughs, &meta)?;
    write_curves(&args.out_dir.join("ridges.csv"), &ridges, &meta)?;
    let closed = troughs.iter().filter(|l| l.closed).count();
    eprintln!("{} troughs ({closed} closed), {} ridges", troughs.len(), ridges.len());

    let mut all = Vec::new();
    if args.zero_splitting {
        let p = problem.as_ref().expect("flow resolved");
        let theta = ftc::fields::evaluate_grid(&p.flow, p.epoch, Kernel::Theta, spec, &settings)?.field;
        let zs = if theta.valid_values().next().is_none() {
            Vec::new()
        } else {
            zero_splitting_from_field(&theta, theta_tol, &cont)?
        };
        let mut m = meta.clone();
        m.insert("theta_tol".into(), format!("{theta_tol:?}"));
        write_curves(&args.out_dir.join("zero_splitting.csv"), &zs, &m)?;
        eprintln!("{} zero-splitting curves", zs.len());
        all.extend(zs);
    }
    if let Some(png) = &args.png {
        all.extend(troughs);
        all.extend(ridges);
        save_png(&plot::overlay(spec, Some(&ftc), &all, default_scale(&ftc)), png, &meta)?;
    }
    Ok(())
}

// ---------------------------------------------------------------- segment

#[derive(Debug, Args)]
pub struct SegmentArgs {
    /// Field to partition
    #[arg(long)]
    pub field: PathBuf,
    #[arg(long)]
    pub seeds: Option<usize>,
    /// Admission threshold in transformed units
    #[arg(long)]
    pub threshold: Option<f64>,
    /// log10 or identity
    #[arg(long)]
    pub transform: Option<String>,
    /// Merge regions smaller than this many cells
    #[arg(long)]
    pub min_cells: Option<usize>,
    #[arg(long, default_value = "labels.grid")]
    pub labels: PathBuf,
    #[arg(long, default_value = "regions.csv")]
    pub table: PathBuf,
    #[arg(long)]
    pub png: Option<PathBuf>,
    /// Score every region with the shape-coherence factor
    #[arg(long)]
    pub score: bool,
    #[command(flatten)]
    pub problem: FlowArgs,
    #[command(flatten)]
    pub alpha: AlphaTuning,
}

/// Flow and epoch for scoring: flags first, then the field's own metadata.
fn scoring_problem(cfg: &FileConfig, args: &FlowArgs, meta: &BTreeMap<String, String>) -> Result<(FlowSystem, Epoch)> {
    let meta_f64 = |k: &str| meta.get(k).and_then(|v| v.parse::<f64>().ok());
    let flow = if args.flow.is_some() || cfg.flow.kind.is_some() || meta.get("flow").is_none() {
        resolve_problem(cfg, &FlowArgs { grid: Some("2x2".into()), ..args.clone() })?.flow
    } else {
        flow_from_description(&meta["flow"])?
    };
    let t0 = args.t0.or(cfg.epoch.t0).or_else(|| meta_f64("t0")).unwrap_or(0.0);
    let tau = args
        .tau
        .or(cfg.epoch.tau)
        .or_else(|| meta_f64("tau"))
        .ok_or_else(|| config_err("no epoch: pass --tau or use a field carrying tau metadata"))?;
    Ok((flow, Epoch::new(t0, tau)))
}

pub fn segment(cfg: &FileConfig, args: &SegmentArgs, threads: Option<usize>) -> Result<()> {
    let field = load_grid(&args.field)?;
    let sc = &cfg.segment;
    let transform: Transform = match args.transform.as_deref().or(sc.transform.as_deref()) {
        Some(t) => t.parse()?,
        None => match field.meta.get("kernel").map(String::as_str) {
            Some("ftle" | "theta") => Transform::Identity,
            _ => Transform::Log10,
        },
    };
    let defaults = GrowthSettings::default();
    let growth = GrowthSettings {
        n_seeds: args.seeds.or(sc.seeds).unwrap_or(defaults.n_seeds),
        threshold: args.threshold.or(sc.threshold).unwrap_or(defaults.threshold),
        transform,
    };
    let mut partition = seeded_region_growing(&field, &growth)?;
    if let Some(m) = args.min_cells.or(sc.min_cells).filter(|&m| m > 1) {
        partition = merge_small_regions(&partition, m)?;
    }

    let mut meta = base_meta("segment");
    meta.insert("source".into(), args.field.display().to_string());
    meta.insert("seeds".into(), growth.n_seeds.to_string());
    meta.insert("threshold".into(), format!("{:?}", growth.threshold));
    meta.insert("transform".into(), growth.transform.as_str().into());
    meta.insert("min_cells".into(), args.min_cells.or(sc.min_cells).unwrap_or(0).to_string());
    for (k, v) in &field.meta {
        meta.insert(format!("field.{k}"), v.clone());
    }

    let alphas = if args.score {
        let (flow, epoch) = scoring_problem(cfg, &args.problem, &field.meta)?;
        let settings = args.alpha.resolve(cfg, threads)?;
        problem_meta(&mut meta, &flow, epoch);
        meta.insert("alpha".into(), args.alpha.describe(cfg, &settings));
        Some(score_regions(&flow, epoch, &partition, &settings, args.alpha.supersample(cfg))?)
    } else {
        None
    };

    let mut w = create(&args.labels)?;
    write_labels(&mut w, &partition, meta.clone())?;
    w.flush()?;
    let mut w = create(&args.table)?;
    write_region_table(&mut w, &partition, alphas.as_deref())?;
    w.flush()?;
    write_provenance(&args.table, &meta)?;
    eprintln!("{} regions, {} unassigned cells", partition.regions.len(), partition.unassigned());
    if let Some(png) = &args.png {
        save_png(&plot::labels(partition.spec, &partition.labels), png, &meta)?;
    }
    Ok(())
}

fn score_regions(
    flow: &FlowSystem,
    epoch: Epoch,
    partition: &RegionPartition,
    settings: &AlphaSettings,
    supersample: usize,
) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(partition.regions.len());
    for r in &partition.regions {
        let set = RegionSet::from_mask(&partition.spec, &partition.mask(r.label), supersample)?;
        match shape_coherence_alpha(flow, &set, &set, &partition.spec, epoch, settings) {
            Ok(a) => out.push(a.alpha),
            Err(e @ FtcError::EscapeBudget { .. }) => {
                eprintln!("region {}: {e}; alpha left undefined", r.label);
                out.push(f64::NAN);
            }
            Err(e) => return Err(e),
        }
    }
    Ok(out)
}

// ---------------------------------------------------------------- alpha

#[derive(Debug, Clone, Default, Args)]
pub struct AlphaTuning {
    #[arg(long)]
    pub n_angles: Option<usize>,
    #[arg(long)]
    pub max_evals: Option<usize>,
    /// Occupancy cells per source cell along each axis
    #[arg(long)]
    pub occupancy: Option<f64>,
    /// Sample points per cell along each axis
    #[arg(long)]
    pub supersample: Option<usize>,
}

impl AlphaTuning {
    fn resolve(&self, cfg: &FileConfig, threads: Option<usize>) -> Result<AlphaSettings> {
        let ac = &cfg.alpha;
        let d = AlphaSettings::default();
        let integrator = resolve_settings(cfg, &KernelArgs::default(), threads)?.integrator;
        let s = AlphaSettings {
            n_angles: self.n_angles.or(ac.n_angles).unwrap_or(d.n_angles),
            max_refine_evals: self.max_evals.or(ac.max_evals).unwrap_or(d.max_refine_evals),
            occupancy_factor: self.occupancy.or(ac.occupancy).unwrap_or(d.occupancy_factor),
            integrator,
            threads,
        };
        if s.n_angles == 0 || !(s.occupancy_factor > 0.0) {
            return Err(config_err("n_angles and occupancy must be positive"));
        }
        Ok(s)
    }

    fn supersample(&self, cfg: &FileConfig) -> usize {
        self.supersample.or(cfg.alpha.supersample).unwrap_or(DEFAULT_SUPERSAMPLE).max(1)
    }

    fn describe(&self, cfg: &FileConfig, s: &AlphaSettings) -> String {
        format!(
            "n_angles={} max_evals={} occupancy={:?} supersample={} steps={}",
            s.n_angles,
            s.max_refine_evals,
            s.occupancy_factor,
            self.supersample(cfg),
            s.integrator.steps_per_epoch
        )
    }
}

#[derive(Debug, Args)]
pub struct AlphaArgs {
    /// Integer grid; nonzero cells form the set
    #[arg(long)]
    pub mask: Option<PathBuf>,
    /// Partition grid written by `segment`
    #[arg(long, requires = "label")]
    pub labels: Option<PathBuf>,
    #[arg(long)]
    pub label: Option<u32>,
    /// Disc `x,y,r` rasterized on the --grid
    #[arg(long, allow_hyphen_values = true)]
    pub disc: Option<String>,
    /// Reference set B (mask file); defaults to A
    #[arg(long)]
    pub reference: Option<PathBuf>,
    #[command(flatten)]
    pub problem: FlowArgs,
    #[command(flatten)]
    pub tuning: AlphaTuning,
    /// Print machine-readable JSON
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Serialize)]
struct AlphaReport {
    alpha: f64,
    angle: f64,
    translation: [f64; 2],
    escaped: usize,
    evaluations: usize,
    cells: usize,
}

fn mask_from_file(path: &Path, label: Option<u32>) -> Result<(GridHeader, Vec<bool>)> {
    let (header, values) = load_int_grid(path)?;
    let mask: Vec<bool> = match label {
        Some(l) => values.iter().map(|&v| v == l as i64).collect(),
        None => values.iter().map(|&v| v != 0).collect(),
    };
    Ok((header, mask))
}

pub fn alpha(cfg: &FileConfig, args: &AlphaArgs, threads: Option<usize>) -> Result<()> {
    let sources = [args.mask.is_some(), args.labels.is_some(), args.disc.is_some()].iter().filter(|&&b| b).count();
    if sources != 1 {
        return Err(config_err("give exactly one of --mask, --labels with --label, or --disc"));
    }
    let (spec, mask, meta) = if let Some(d) = &args.disc {
        let p = resolve_problem(cfg, &args.problem)?;
        let [x, y, r] = parse_reals::<3>(d, "disc")?;
        let spec = p.spec;
        let mask = (0..spec.len())
            .map(|n| {
                let c = spec.cell_center(n % spec.nx, n / spec.nx);
                (c.x - x).powi(2) + (c.y - y).powi(2) <= r * r
            })
            .collect();
        (spec, mask, BTreeMap::new())
    } else {
        let path = args.mask.as_ref().or(args.labels.as_ref()).expect("one source");
        let (h, m) = mask_from_file(path, if args.labels.is_some() { args.label } else { None })?;
        (h.spec, m, h.meta)
    };
    let (flow, epoch) = scoring_problem(cfg, &args.problem, &meta)?;
    let settings = args.tuning.resolve(cfg, threads)?;
    let ss = args.tuning.supersample(cfg);
    let a = RegionSet::from_mask(&spec, &mask, ss)?;
    let b = match &args.reference {
        Some(path) => {
            let (h, m) = mask_from_file(path, None)?;
            RegionSet::from_mask(&h.spec, &m, ss)?
        }
        None => a.clone(),
    };
    let result = shape_coherence_alpha(&flow, &a, &b, &spec, epoch, &settings)?;
    let report = AlphaReport {
        alpha: result.alpha,
        angle: result.motion.angle,
        translation: [result.motion.translation.x, result.motion.translation.y],
        escaped: result.escaped,
        evaluations: result.evaluations,
        cells: mask.iter().filter(|&&m| m).count(),
    };
    if args.json {
        println!("{}", serde_json::to_string(&report).map_err(|e| FtcError::Format(e.to_string()))?);
    } else {
        println!(
            "alpha {:.6} angle {:.6} translation ({:.6}, {:.6}) escaped {} evaluations {}",
            report.alpha, report.angle, report.translation[0], report.translation[1], report.escaped, report.evaluations
        );
    }
    Ok(())
}

// ---------------------------------------------------------------- bench

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[command(flatten)]
    pub problem: FlowArgs,
    #[command(flatten)]
    pub tuning: KernelArgs,
    /// Points per kernel timing
    #[arg(long, default_value_t = 64)]
    pub points: usize,
}

pub fn bench(cfg: &FileConfig, args: &BenchArgs, threads: Option<usize>) -> Result<()> {
    let Problem { flow, epoch, spec } = resolve_problem(cfg, &args.problem)?;
    let settings: FieldSettings = resolve_settings(cfg, &args.tuning, threads)?;
    let n = args.points.max(1);
    let pts: Vec<Point2> = (0..n).map(|k| spec.cell_center(k * 7919 % spec.nx, k * 104729 % spec.ny)).collect();
    println!("flow {} epoch t0={} tau={} points {n}", flow.kind(), epoch.t0, epoch.tau);
    for kernel in [Kernel::Ftle, Kernel::Theta, Kernel::MaxFtc, Kernel::FtcRatio] {
        let t = Instant::now();
        let mut failures = 0;
        for &p in &pts {
            if evaluate_kernel(kernel, &flow, p, epoch, &settings).is_err() {
                failures += 1;
            }
        }
        let per = t.elapsed().as_secs_f64() / n as f64;
        let grid = per * spec.len() as f64;
        println!("{kernel:>9}: {:.3} ms/point, ~{grid:.1} s for {}x{} on one worker, {failures} failures", per * 1e3, spec.nx, spec.ny);
    }
    Ok(())
}
