use std::fmt::Write as _;
use std::fs::{File, OpenOptions};
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};

use scatter_core::dataset::{ensure_disjoint, generate_dataset, load_dataset, save_dataset, DatasetRole, ShapeDataset};
use scatter_core::geometry::circle_shape;
use scatter_core::metrics::{grid_points, pointwise_error, r2_score, relative_l2, FieldPair};
use scatter_core::oracle::{fdfd_solve, CylinderProblem, FdfdSolution};
use scatter_core::training::{load_checkpoint, save_checkpoint, train, Checkpoint, TrainEvent, TrainLogRecord};
use scatter_core::{mix_seed, seeded_rng, ComplexField, OperatorParams, PhysicsConfig, ShapeVector, Vec2};

use crate::config::{FrozenConfig, RunConfig};
use crate::error::{CliError, CliResult};
use crate::field::{read_field_csv, with_suffix, write_field_csv, write_images};

/// Stream id for network initialization, kept apart from the epoch streams.
const INIT_STREAM: u64 = 0x1a17;

/// FDFD grids coarser than this many nodes per wavelength draw a warning.
const NODES_PER_WAVELENGTH: f64 = 20.0;

#[derive(Parser, Debug)]
#[command(name = "scatter", version, about = "Operator-network acoustic scattering by rigid NURBS bodies")]
pub struct Cli {
    /// TOML run configuration; defaults apply to anything left out
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Generate a shape set
    GenShapes(GenShapesArgs),
    /// Train (or resume training) the operator network
    Train(TrainArgs),
    /// Predict the scattered field of one shape on a grid
    Predict(PredictArgs),
    /// Run a reference solver
    #[command(subcommand)]
    Oracle(OracleCommand),
    /// Score a checkpoint against FDFD on a shape set
    Eval(EvalArgs),
    /// Time network prediction against FDFD
    Bench(BenchArgs),
    /// Compare two field CSVs
    Compare(CompareArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum RoleArg {
    Train,
    TestCircles,
    TestArbitrary,
}

impl From<RoleArg> for DatasetRole {
    fn from(r: RoleArg) -> Self {
        match r {
            RoleArg::Train => DatasetRole::Train,
            RoleArg::TestCircles => DatasetRole::TestCircles,
            RoleArg::TestArbitrary => DatasetRole::TestArbitrary,
        }
    }
}

#[derive(Args, Debug, Clone)]
pub struct GenShapesArgs {
    #[arg(long, value_enum)]
    pub role: RoleArg,
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    pub count: u64,
    #[arg(long)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
    /// Regenerate any shape that also appears in this set
    #[arg(long)]
    pub disjoint_from: Option<PathBuf>,
}

#[derive(Args, Debug, Clone)]
pub struct TrainArgs {
    #[arg(long)]
    pub shapes: PathBuf,
    #[arg(long)]
    pub out_checkpoint: PathBuf,
    #[arg(long)]
    pub out_log: PathBuf,
    /// Continue from this checkpoint; the log is appended to
    #[arg(long)]
    pub resume: Option<PathBuf>,
}

#[derive(Args, Debug, Clone)]
pub struct PredictArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub shapes: PathBuf,
    #[arg(long)]
    pub id: u64,
    /// Nodes per side (default from [io])
    #[arg(long)]
    pub grid: Option<usize>,
    #[arg(long)]
    pub out: PathBuf,
    /// Write grayscale images with this path prefix
    #[arg(long)]
    pub image: Option<PathBuf>,
}

#[derive(Subcommand, Debug, Clone)]
pub enum OracleCommand {
    /// Finite-difference solve
    Fdfd(FdfdArgs),
    /// Partial-wave series for a circular cylinder
    Cylinder(CylinderArgs),
}

#[derive(Args, Debug, Clone)]
pub struct FdfdArgs {
    #[arg(long, requires = "id", conflicts_with = "circle")]
    pub shapes: Option<PathBuf>,
    #[arg(long, requires = "shapes")]
    pub id: Option<u64>,
    /// Use the template fitted to a circle of this radius
    #[arg(long)]
    pub circle: Option<f64>,
    /// FDFD nodes per side (default from [oracle])
    #[arg(long)]
    pub grid: Option<usize>,
    /// Interpolate the solution onto a grid with this many nodes per side
    #[arg(long)]
    pub resample: Option<usize>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug, Clone)]
pub struct CylinderArgs {
    #[arg(long)]
    pub radius: f64,
    /// `x,y`
    #[arg(long, value_delimiter = ',', num_args = 2, default_values_t = [0.5, 0.5])]
    pub center: Vec<f64>,
    /// Nodes per side (default from [oracle])
    #[arg(long)]
    pub grid: Option<usize>,
    #[arg(long)]
    pub terms: Option<usize>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug, Clone)]
pub struct EvalArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub shapes: PathBuf,
    /// Only these shape ids
    #[arg(long, value_delimiter = ',')]
    pub ids: Option<Vec<u64>>,
    /// Evaluation grid nodes per side (default from [io])
    #[arg(long)]
    pub grid: Option<usize>,
    /// FDFD nodes per side (default from [oracle])
    #[arg(long)]
    pub fdfd_grid: Option<usize>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug, Clone)]
pub struct BenchArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub shapes: PathBuf,
    /// Number of shapes timed, from the start of the file
    #[arg(long, default_value_t = 10, value_parser = clap::value_parser!(u64).range(1..))]
    pub count: u64,
    #[arg(long)]
    pub grid: Option<usize>,
    #[arg(long)]
    pub fdfd_grid: Option<usize>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug, Clone)]
pub struct CompareArgs {
    #[arg(long)]
    pub predicted: PathBuf,
    #[arg(long)]
    pub reference: PathBuf,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn run(cli: Cli) -> CliResult<()> {
    let frozen = RunConfig::load_or_default(cli.config.as_deref())?.freeze()?;
    match cli.command {
        Command::GenShapes(a) => gen_shapes(&frozen, &a).map(|ds| println!("wrote {} shapes to {}", ds.len(), a.out.display())),
        Command::Train(a) => {
            let (ckpt, _) = train_cmd(&frozen, &a)?;
            println!("trained to epoch {}; checkpoint {}", ckpt.epoch, a.out_checkpoint.display());
            Ok(())
        }
        Command::Predict(a) => {
            let out = predict_cmd(&frozen, &a)?;
            println!("predicted {} points in {:.3} s", out.field.len() - out.field.masked_count(), out.seconds);
            Ok(())
        }
        Command::Oracle(OracleCommand::Fdfd(a)) => {
            let field = fdfd_cmd(&frozen, &a)?;
            println!("wrote {} field values to {}", field.len() - field.masked_count(), a.out.display());
            Ok(())
        }
        Command::Oracle(OracleCommand::Cylinder(a)) => {
            let field = cylinder_cmd(&frozen, &a)?;
            println!("wrote {} field values to {}", field.len() - field.masked_count(), a.out.display());
            Ok(())
        }
        Command::Eval(a) => {
            let report = eval_cmd(&frozen, &a)?;
            println!("[L2, R2] = [{:.4}, {:.4}] over {} shapes", report.mean_l2, report.mean_r2, report.rows.len());
            Ok(())
        }
        Command::Bench(a) => {
            let report = bench_cmd(&frozen, &a)?;
            println!("mean t_pred = {:.3} s, mean t_fdfd = {:.3} s", report.mean_pred, report.mean_fdfd);
            Ok(())
        }
        Command::Compare(a) => {
            let m = compare_cmd(&frozen, &a)?;
            println!("l2={:.6} r2={:.6} max_abs_error={:.6e} points={}", m.l2, m.r2, m.max_error, m.points);
            Ok(())
        }
    }
}

pub fn gen_shapes(frozen: &FrozenConfig, a: &GenShapesArgs) -> CliResult<ShapeDataset> {
    let opts = frozen.config.dataset_options();
    let mut ds = generate_dataset(a.role.into(), a.count as usize, a.seed, &opts)?;
    if let Some(other) = &a.disjoint_from {
        ensure_disjoint(&load_dataset(other)?, &mut ds, &opts)?;
    }
    save_dataset(&ds, &a.out, &frozen.header(a.seed))?;
    Ok(ds)
}

fn lookup(ds: &ShapeDataset, id: u64, path: &Path) -> CliResult<ShapeVector> {
    ds.get(id)
        .copied()
        .ok_or_else(|| CliError::Lookup(format!("shape id {id} not found in {}", path.display())))
}

/// Fresh network for `config`.
pub fn init_params(config: &RunConfig) -> CliResult<OperatorParams> {
    let mut rng = seeded_rng(mix_seed(config.training.seed, INIT_STREAM));
    Ok(OperatorParams::init(&config.branch_plan(), &config.trunk_plan(), config.physics(), &mut rng)?)
}

fn checkpoint_meta(frozen: &FrozenConfig, c: &Checkpoint) -> String {
    let mut s = String::new();
    for h in frozen.header(c.config.seed) {
        writeln!(s, "# {h}").unwrap();
    }
    writeln!(s, "epoch={}", c.epoch).unwrap();
    s
}

/// Trains per the `[training]` section. Checkpoints overwrite
/// `out_checkpoint` (with a `.meta` text sidecar); log rows are written as
/// they are produced.
pub fn train_cmd(frozen: &FrozenConfig, a: &TrainArgs) -> CliResult<(Checkpoint, Vec<TrainLogRecord>)> {
    let cfg = &frozen.config;
    let ds = load_dataset(&a.shapes)?;
    let points = ds.point_sets(&cfg.point_counts())?;
    let train_cfg = cfg.train_config();

    let state = match &a.resume {
        Some(path) => {
            let mut c = load_checkpoint(path)?;
            let mut expected = train_cfg;
            expected.epochs = c.config.epochs;
            if c.config != expected {
                return Err(CliError::Config(format!(
                    "checkpoint {} was trained with different [training] settings",
                    path.display()
                )));
            }
            if c.params.physics != cfg.physics() || c.params.branch.plan != cfg.branch_plan() || c.params.trunk.plan != cfg.trunk_plan() {
                return Err(CliError::Config(format!(
                    "checkpoint {} does not match the [physics] or [network] settings",
                    path.display()
                )));
            }
            c.config.epochs = train_cfg.epochs;
            c
        }
        None => Checkpoint::fresh(init_params(cfg)?, train_cfg),
    };

    let append = a.resume.is_some() && a.out_log.exists();
    let mut log_file = if append {
        OpenOptions::new().append(true).open(&a.out_log)?
    } else {
        let mut f = File::create(&a.out_log)?;
        let mut head = String::new();
        for h in frozen.header(train_cfg.seed) {
            writeln!(head, "# {h}").unwrap();
        }
        writeln!(head, "{}", TrainLogRecord::CSV_HEADER).unwrap();
        f.write_all(head.as_bytes())?;
        f
    };

    let meta_path = with_suffix(&a.out_checkpoint, ".meta");
    let (ckpt, log) = train(&ds, &points, state, |ev| {
        match ev {
            TrainEvent::Log(rec) => {
                eprintln!(
                    "epoch {:>7} total {:.6e} pde {:.3e} inner {:.3e} outer {:.3e}",
                    rec.epoch, rec.total, rec.pde, rec.inner_bc, rec.outer_bc
                );
                writeln!(log_file, "{}", rec.csv_row())?;
                log_file.flush()?;
            }
            TrainEvent::Checkpoint(c) => {
                save_checkpoint(c, &a.out_checkpoint)?;
                std::fs::write(&meta_path, checkpoint_meta(frozen, c))?;
            }
        }
        Ok(())
    })?;
    Ok((ckpt, log))
}

pub struct PredictOutcome {
    pub field: ComplexField,
    pub seconds: f64,
}

pub fn predict_cmd(frozen: &FrozenConfig, a: &PredictArgs) -> CliResult<PredictOutcome> {
    let ckpt = load_checkpoint(&a.checkpoint)?;
    let ds = load_dataset(&a.shapes)?;
    let v = lookup(&ds, a.id, &a.shapes)?;
    let n = a.grid.unwrap_or(frozen.config.io.grid);
    if n < 2 {
        return Err(CliError::Usage("--grid must be at least 2".into()));
    }
    let start = Instant::now();
    let field = ckpt.params.predict_grid(&v, n)?;
    let seconds = start.elapsed().as_secs_f64();
    let mut header = frozen.header(ckpt.config.seed);
    header.push(format!("predict shape={} checkpoint_epoch={}", a.id, ckpt.epoch));
    write_field_csv(&field, &header, &a.out)?;
    let image = a.image.clone().or_else(|| frozen.config.io.images.then(|| a.out.with_extension("")));
    if let Some(prefix) = image {
        write_images(&field, &header, &prefix)?;
    }
    Ok(PredictOutcome { field, seconds })
}

fn resolution_floor(physics: &PhysicsConfig) -> usize {
    let wavelength = physics.sound_speed / physics.frequency;
    (NODES_PER_WAVELENGTH / wavelength).ceil() as usize + 1
}

pub fn fdfd_cmd(frozen: &FrozenConfig, a: &FdfdArgs) -> CliResult<ComplexField> {
    let cfg = &frozen.config;
    let physics = cfg.physics();
    let (v, what) = match (&a.shapes, a.id, a.circle) {
        (Some(path), Some(id), None) => (lookup(&load_dataset(path)?, id, path)?, format!("shape={id}")),
        (None, None, Some(r)) => (circle_shape(r)?.shape, format!("circle={r:?}")),
        _ => return Err(CliError::Usage("give either --shapes with --id, or --circle".into())),
    };
    let n = a.grid.unwrap_or(cfg.oracle.grid);
    let floor = resolution_floor(&physics);
    if n < floor {
        eprintln!("warning: grid n={n} is below the resolution floor n={floor} ({NODES_PER_WAVELENGTH} nodes per wavelength); proceeding");
    }
    let sol = fdfd_solve(&v, &physics, n)?;
    let field = match a.resample {
        Some(m) if m < 2 => return Err(CliError::Usage("--resample must be at least 2".into())),
        Some(m) => sol.resample_grid(m),
        None => sol.field,
    };
    let mut header = frozen.header(cfg.training.seed);
    header.push(format!("oracle fdfd {what} n={n} residual={:.3e}", sol.residual));
    write_field_csv(&field, &header, &a.out)?;
    Ok(field)
}

pub fn cylinder_cmd(frozen: &FrozenConfig, a: &CylinderArgs) -> CliResult<ComplexField> {
    let cfg = &frozen.config;
    let center = Vec2::new(a.center[0], a.center[1]);
    let terms = a.terms.unwrap_or(cfg.oracle.cylinder_terms);
    let prob = CylinderProblem::new(a.radius, center, cfg.physics(), terms)?;
    let n = a.grid.unwrap_or(cfg.oracle.grid);
    if n < 2 {
        return Err(CliError::Usage("--grid must be at least 2".into()));
    }
    let values = grid_points(n)
        .iter()
        .map(|&p| if (p - center).norm() < a.radius { Ok(None) } else { prob.jet(p).map(|j| Some(j.value)) })
        .collect::<scatter_core::Result<Vec<_>>>()?;
    let field = ComplexField::on_grid(n, values)?;
    let mut header = frozen.header(cfg.training.seed);
    header.push(format!("oracle cylinder radius={:?} center={:?},{:?} terms={terms}", a.radius, center.x, center.y));
    write_field_csv(&field, &header, &a.out)?;
    Ok(field)
}

#[derive(Clone, Debug, PartialEq)]
pub struct FieldMetrics {
    pub l2: f64,
    pub r2: f64,
    pub max_error: f64,
    pub points: usize,
}

pub fn field_metrics(predicted: &ComplexField, reference: &ComplexField) -> CliResult<FieldMetrics> {
    let pair = FieldPair::new(predicted, reference)?;
    let max_error = pointwise_error(&pair).into_iter().fold(0.0, f64::max);
    Ok(FieldMetrics { l2: relative_l2(&pair)?, r2: r2_score(&pair)?, max_error, points: pair.len() })
}

/// FDFD reference for `v` resampled onto the `grid × grid` evaluation grid.
pub fn reference_field(v: &ShapeVector, physics: &PhysicsConfig, fdfd_grid: usize, grid: usize) -> CliResult<(FdfdSolution, ComplexField)> {
    let sol = fdfd_solve(v, physics, fdfd_grid)?;
    let field = sol.resample_grid(grid);
    Ok((sol, field))
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalRow {
    pub id: u64,
    pub metrics: FieldMetrics,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalReport {
    pub rows: Vec<EvalRow>,
    pub mean_l2: f64,
    pub mean_r2: f64,
}

impl EvalReport {
    pub fn csv(&self, header: &[String]) -> String {
        let mut s = String::new();
        for h in header {
            writeln!(s, "# {h}").unwrap();
        }
        writeln!(s, "shape_id,l2,r2,max_abs_error").unwrap();
        for r in &self.rows {
            writeln!(s, "{},{:?},{:?},{:?}", r.id, r.metrics.l2, r.metrics.r2, r.metrics.max_error).unwrap();
        }
        let mean_max = self.rows.iter().map(|r| r.metrics.max_error).sum::<f64>() / self.rows.len() as f64;
        writeln!(s, "mean,{:?},{:?},{:?}", self.mean_l2, self.mean_r2, mean_max).unwrap();
        s
    }
}

/// Relative L2 and R² of the network against FDFD for each listed shape.
pub fn evaluate(params: &OperatorParams, shapes: &[(u64, ShapeVector)], grid: usize, fdfd_grid: usize) -> CliResult<EvalReport> {
    if shapes.is_empty() {
        return Err(CliError::Usage("no shapes to evaluate".into()));
    }
    let mut rows = Vec::with_capacity(shapes.len());
    for (id, v) in shapes {
        let (_, reference) = reference_field(v, &params.physics, fdfd_grid, grid)?;
        let predicted = params.predict_grid(v, grid)?;
        rows.push(EvalRow { id: *id, metrics: field_metrics(&predicted, &reference)? });
    }
    let k = rows.len() as f64;
    let mean_l2 = rows.iter().map(|r| r.metrics.l2).sum::<f64>() / k;
    let mean_r2 = rows.iter().map(|r| r.metrics.r2).sum::<f64>() / k;
    Ok(EvalReport { rows, mean_l2, mean_r2 })
}

fn select(ds: &ShapeDataset, ids: Option<&[u64]>, path: &Path) -> CliResult<Vec<(u64, ShapeVector)>> {
    match ids {
        None => Ok(ds.ids.iter().copied().zip(ds.shapes.iter().copied()).collect()),
        Some(ids) => ids.iter().map(|&id| Ok((id, lookup(ds, id, path)?))).collect(),
    }
}

pub fn eval_cmd(frozen: &FrozenConfig, a: &EvalArgs) -> CliResult<EvalReport> {
    let cfg = &frozen.config;
    let ckpt = load_checkpoint(&a.checkpoint)?;
    let ds = load_dataset(&a.shapes)?;
    let shapes = select(&ds, a.ids.as_deref(), &a.shapes)?;
    let grid = a.grid.unwrap_or(cfg.io.grid);
    let fdfd_grid = a.fdfd_grid.unwrap_or(cfg.oracle.grid);
    let report = evaluate(&ckpt.params, &shapes, grid, fdfd_grid)?;
    let mut header = frozen.header(ckpt.config.seed);
    header.push(format!("eval checkpoint_epoch={} grid={grid} fdfd_grid={fdfd_grid}", ckpt.epoch));
    std::fs::write(&a.out, report.csv(&header))?;
    Ok(report)
}

#[derive(Clone, Debug, PartialEq)]
pub struct BenchReport {
    /// `(shape id, prediction seconds, FDFD seconds)`
    pub rows: Vec<(u64, f64, f64)>,
    pub mean_pred: f64,
    pub mean_fdfd: f64,
}

impl BenchReport {
    pub fn csv(&self, header: &[String]) -> String {
        let mut s = String::new();
        for h in header {
            writeln!(s, "# {h}").unwrap();
        }
        writeln!(s, "shape_id,t_pred,t_fdfd").unwrap();
        for (id, p, f) in &self.rows {
            writeln!(s, "{id},{p:?},{f:?}").unwrap();
        }
        writeln!(s, "mean,{:?},{:?}", self.mean_pred, self.mean_fdfd).unwrap();
        s
    }
}

/// Wall-clock of one full-grid network prediction and one FDFD solve per shape.
pub fn bench(params: &OperatorParams, shapes: &[(u64, ShapeVector)], grid: usize, fdfd_grid: usize) -> CliResult<BenchReport> {
    if shapes.is_empty() {
        return Err(CliError::Usage("no shapes to benchmark".into()));
    }
    let mut rows = Vec::with_capacity(shapes.len());
    for (id, v) in shapes {
        let t = Instant::now();
        let field = params.predict_grid(v, grid)?;
        let t_pred = t.elapsed().as_secs_f64();
        std::hint::black_box(&field);
        let t = Instant::now();
        let sol = fdfd_solve(v, &params.physics, fdfd_grid)?;
        let t_fdfd = t.elapsed().as_secs_f64();
        std::hint::black_box(&sol);
        rows.push((*id, t_pred, t_fdfd));
    }
    let k = rows.len() as f64;
    let mean_pred = rows.iter().map(|r| r.1).sum::<f64>() / k;
    let mean_fdfd = rows.iter().map(|r| r.2).sum::<f64>() / k;
    Ok(BenchReport { rows, mean_pred, mean_fdfd })
}

pub fn bench_cmd(frozen: &FrozenConfig, a: &BenchArgs) -> CliResult<BenchReport> {
    let cfg = &frozen.config;
    let ckpt = load_checkpoint(&a.checkpoint)?;
    let ds = load_dataset(&a.shapes)?;
    let shapes: Vec<(u64, ShapeVector)> = select(&ds, None, &a.shapes)?.into_iter().take(a.count as usize).collect();
    let grid = a.grid.unwrap_or(cfg.io.grid);
    let fdfd_grid = a.fdfd_grid.unwrap_or(cfg.oracle.grid);
    let report = bench(&ckpt.params, &shapes, grid, fdfd_grid)?;
    let mut header = frozen.header(ckpt.config.seed);
    header.push(format!("bench grid={grid} fdfd_grid={fdfd_grid} threads={}", rayon::current_num_threads()));
    std::fs::write(&a.out, report.csv(&header))?;
    Ok(report)
}

pub fn compare_cmd(frozen: &FrozenConfig, a: &CompareArgs) -> CliResult<FieldMetrics> {
    let p = read_field_csv(&a.predicted)?;
    let r = read_field_csv(&a.reference)?;
    if p.grid != r.grid {
        return Err(CliError::Core(scatter_core::Error::Pairing(format!(
            "fields are on different grids ({:?} vs {:?})",
            p.grid, r.grid
        ))));
    }
    let m = field_metrics(&p, &r)?;
    if let Some(out) = &a.out {
        let mut s = String::new();
        for h in frozen.header(frozen.config.training.seed) {
            writeln!(s, "# {h}").unwrap();
        }
        writeln!(s, "l2,r2,max_abs_error,points").unwrap();
        writeln!(s, "{:?},{:?},{:?},{}", m.l2, m.r2, m.max_error, m.points).unwrap();
        std::fs::write(out, s)?;
    }
    Ok(m)
}
