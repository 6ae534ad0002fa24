//! The `wireshape` command line.
//!
//! Each subcommand reads its inputs, calls into the library and writes one
//! artifact to `--out` (or stdout). Diagnostics go to stderr.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::calibration::{solve_theta, CalibrationInput};
use crate::error::Error;
use crate::eval::{
    align, evaluate, report_csv, resample, summary_table, AlignMode, AlignmentOptions, ErrorMode,
    ErrorReport, ShapeSummary,
};
use crate::formats::{
    centerline_from_csv, centerline_to_csv, chords_from_text, config_from_json, config_to_json,
    program_from_json, program_to_json, ProjectConfig,
};
use crate::machine::{compile, simulate, ActuatorTrace, Carriage, MachineProgram, Stabilizer};
use crate::planner::{fit_actions, plan, FitOptions, PinchMode, RecipeKind, ShapeRecipe};
use crate::wire_model::{forward_shape, BendLaw, Centerline, ShapeMode};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_FAULT: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "wireshape", version, about = "Guidewire tip shaping toolkit")]
pub struct Cli {
    /// Project config (JSON). Built-in defaults are used when absent.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct OutArg {
    /// Output file; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Solve the per-segment bend angle from measured chords and store it in the config.
    Calibrate {
        /// One chord length (mm) per line.
        chords: PathBuf,
        /// Pinch command the chords were measured at; defaults to the config's nominal.
        #[arg(long)]
        beta: Option<f64>,
        /// Where to write the updated config; defaults to `--config`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Emit an action program for a built-in recipe.
    Plan {
        #[command(subcommand)]
        recipe: RecipeCmd,
        /// Pinch command for bent segments; defaults to the config's nominal.
        #[arg(long, global = true)]
        beta: Option<f64>,
        /// Advance per step in mm; defaults to the wire's segment length.
        #[arg(long, global = true)]
        segment_length: Option<f64>,
        /// Output file; stdout when absent.
        #[arg(long, global = true)]
        out: Option<PathBuf>,
    },
    /// Predict the centerline of a program.
    Shape {
        program: PathBuf,
        #[arg(long, value_enum, default_value_t = ModeArg::Rigid)]
        mode: ModeArg,
        #[command(flatten)]
        out: OutArg,
    },
    /// Recover a program from a target centerline.
    Fit {
        target: PathBuf,
        /// Grade pinch commands through the bend law instead of on/off.
        #[arg(long)]
        continuous: bool,
        #[command(flatten)]
        out: OutArg,
    },
    /// Quantize a program into machine commands.
    Compile {
        program: PathBuf,
        #[command(flatten)]
        out: OutArg,
    },
    /// Replay machine commands; exits with status 3 on an interlock fault.
    Simulate {
        machine: PathBuf,
        /// Also write the program realized by the actuators.
        #[arg(long)]
        achieved: Option<PathBuf>,
        #[command(flatten)]
        out: OutArg,
    },
    /// Per-joint error report for measured/predicted centerline pairs.
    Eval {
        /// Alternating MEASURED PREDICTED centerline files.
        #[arg(required = true, num_args = 2..)]
        files: Vec<PathBuf>,
        #[arg(long, value_enum, default_value_t = AlignArg::Base)]
        align: AlignArg,
        /// Project onto the predicted shape's best-fit plane.
        #[arg(long = "2d", conflicts_with = "spatial")]
        planar: bool,
        /// Full spatial error (default).
        #[arg(long = "3d")]
        spatial: bool,
        #[command(flatten)]
        out: OutArg,
    },
    /// SVG overlay of a predicted and a measured centerline.
    Plot {
        predicted: PathBuf,
        measured: PathBuf,
        #[arg(long, value_enum, default_value_t = ViewArg::Yz)]
        view: ViewArg,
        #[arg(long, value_enum, default_value_t = AlignArg::Base)]
        align: AlignArg,
        #[command(flatten)]
        out: OutArg,
    },
}

#[derive(Debug, Subcommand)]
pub enum RecipeCmd {
    /// Constant-curvature arc.
    C {
        #[arg(long)]
        segments: Option<usize>,
    },
    /// Two opposite arcs, proximal first.
    S { first: usize, second: usize },
    /// Straight proximal run followed by a bent distal run.
    Angled { straight: usize, bent: usize },
    /// Straight run, primary curve, then a recurve in the opposite plane.
    Hook {
        straight: usize,
        primary: usize,
        recurve: usize,
    },
    /// Constant bend with the roll advanced each step.
    Helix {
        #[arg(long)]
        segments: Option<usize>,
        /// Roll increment per step, degrees.
        #[arg(long, allow_hyphen_values = true)]
        dphi: f64,
    },
    /// Explicit steps in shaping order, e.g. `0:on,0:off,90:on` (roll in degrees).
    Custom { steps: String },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ModeArg {
    Rigid,
    Arc,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum AlignArg {
    Base,
    BaseRoll,
    None,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ViewArg {
    Xy,
    Xz,
    Yz,
}

#[derive(Debug)]
pub enum CliError {
    Io(PathBuf, std::io::Error),
    Lib(Option<PathBuf>, Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Lib(_, Error::Fault { .. }) => EXIT_FAULT,
            _ => EXIT_USAGE,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Io(p, e) => write!(f, "{}: {}", p.display(), e),
            CliError::Lib(Some(p), e) => write!(f, "{}: {}", p.display(), e),
            CliError::Lib(None, e) => write!(f, "{}", e),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Lib(None, e)
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

fn read(path: &Path) -> CliResult<String> {
    fs::read_to_string(path).map_err(|e| CliError::Io(path.to_path_buf(), e))
}

fn write_file(path: &Path, text: &str) -> CliResult<()> {
    fs::write(path, text).map_err(|e| CliError::Io(path.to_path_buf(), e))
}

fn emit(out: &OutArg, text: &str) -> CliResult<()> {
    match &out.out {
        Some(p) => write_file(p, text),
        None => {
            print!("{}", text);
            Ok(())
        }
    }
}

/// Parses a file with `f`, tagging errors with the path.
fn load<T>(path: &Path, f: impl FnOnce(&str) -> crate::Result<T>) -> CliResult<T> {
    let text = read(path)?;
    f(&text).map_err(|e| CliError::Lib(Some(path.to_path_buf()), e))
}

fn load_config(cli: &Cli) -> CliResult<ProjectConfig> {
    match &cli.config {
        Some(p) => load(p, config_from_json),
        None => Ok(ProjectConfig::default()),
    }
}

/// Parses arguments and runs; returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match run(&cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {}", e);
            e.exit_code()
        }
    }
}

pub fn run(cli: &Cli) -> CliResult<()> {
    let config = load_config(cli)?;
    match &cli.command {
        Command::Calibrate { chords, beta, out } => {
            cmd_calibrate(cli, config, chords, *beta, out.as_deref())
        }
        Command::Plan {
            recipe,
            beta,
            segment_length,
            out,
        } => {
            let recipe = build_recipe(recipe, &config, *beta, *segment_length)?;
            let program = plan(&recipe, &config.wire)?;
            emit(
                &OutArg { out: out.clone() },
                &program_to_json(&program),
            )
        }
        Command::Shape { program, mode, out } => {
            let p = load(program, program_from_json)?;
            let mode = match mode {
                ModeArg::Rigid => ShapeMode::RigidLink,
                ModeArg::Arc => ShapeMode::Arc,
            };
            let c = forward_shape(&p, &config.bend_law, mode)?;
            emit(out, &centerline_to_csv(&c))
        }
        Command::Fit {
            target,
            continuous,
            out,
        } => {
            let t = load(target, centerline_from_csv)?;
            let mut opts = FitOptions::for_law(&config.bend_law, &config.wire);
            if *continuous {
                opts.pinch_mode = PinchMode::Continuous;
            }
            let fit = fit_actions(&t, &config.wire, &config.bend_law, &opts)?;
            eprintln!("residual_rms_mm = {}", fit.residual_rms);
            emit(out, &program_to_json(&fit.program))
        }
        Command::Compile { program, out } => {
            let p = load(program, program_from_json)?;
            let mp = compile(&p, &config.machine)?;
            emit(out, &mp.to_string())
        }
        Command::Simulate {
            machine,
            achieved,
            out,
        } => {
            let mp: MachineProgram = load(machine, str::parse)?;
            let trace = simulate(&mp)?;
            if let Some(path) = achieved {
                let p = trace.achieved_program(&config.wire)?;
                write_file(path, &program_to_json(&p))?;
            }
            emit(out, &trace_csv(&mp, &trace))
        }
        Command::Eval {
            files,
            align,
            planar,
            out,
            ..
        } => cmd_eval(&config, files, *align, *planar, out),
        Command::Plot {
            predicted,
            measured,
            view,
            align: mode,
            out,
        } => {
            let pred = load(predicted, centerline_from_csv)?;
            let meas = load(measured, centerline_from_csv)?;
            let meas = prepare_measured(&meas, &pred, *mode)?;
            emit(out, &plot_svg(&pred, &meas, *view))
        }
    }
}

fn cmd_calibrate(
    cli: &Cli,
    mut config: ProjectConfig,
    chords: &Path,
    beta: Option<f64>,
    out: Option<&Path>,
) -> CliResult<()> {
    let measured = load(chords, chords_from_text)?;
    let result = solve_theta(&CalibrationInput {
        segment_length: config.wire.segment_length,
        segments: config.wire.segments,
        measured_chords: measured,
    })?;
    let beta = beta.unwrap_or(config.bend_law.nominal().0);
    config.bend_law = BendLaw::single(beta, result.theta_star)?;

    if result.is_straight() {
        eprintln!("warning: mean chord reaches n·l; the wire is straight (theta* = 0)");
    }
    println!("theta_star_deg = {}", result.theta_star.to_degrees());
    println!("theta_star_rad = {}", result.theta_star);
    println!("chord_mean_mm = {}", result.chord_mean);
    println!("chord_std_mm = {}", result.chord_std);
    println!("residual_mm = {}", result.residual);

    match out.or(cli.config.as_deref()) {
        Some(path) => write_file(path, &config_to_json(&config)),
        None => {
            eprintln!("note: no --config or --out given; updated config not saved");
            Ok(())
        }
    }
}

fn build_recipe(
    cmd: &RecipeCmd,
    config: &ProjectConfig,
    beta: Option<f64>,
    segment_length: Option<f64>,
) -> CliResult<ShapeRecipe> {
    let n = config.wire.segments;
    let kind = match cmd {
        RecipeCmd::C { segments } => RecipeKind::C {
            bent: segments.unwrap_or(n),
        },
        RecipeCmd::S { first, second } => RecipeKind::S {
            first: *first,
            second: *second,
        },
        RecipeCmd::Angled { straight, bent } => RecipeKind::Angled {
            straight: *straight,
            bent: *bent,
        },
        RecipeCmd::Hook {
            straight,
            primary,
            recurve,
        } => RecipeKind::Hook {
            straight: *straight,
            primary: *primary,
            recurve: *recurve,
        },
        RecipeCmd::Helix { segments, dphi } => RecipeKind::Helix {
            segments: segments.unwrap_or(n),
            dphi: dphi.to_radians(),
        },
        RecipeCmd::Custom { steps } => RecipeKind::Custom(parse_custom(steps)?),
    };
    Ok(ShapeRecipe::new(
        kind,
        segment_length.unwrap_or(config.wire.segment_length),
        beta.unwrap_or(config.bend_law.nominal().0),
    ))
}

fn parse_custom(text: &str) -> CliResult<Vec<(f64, bool)>> {
    let mut column = 1;
    let mut steps = Vec::new();
    for item in text.split(',') {
        let bad = |message: String| {
            CliError::Lib(
                None,
                Error::Parse {
                    line: 1,
                    column,
                    message,
                },
            )
        };
        let (phi, state) = item
            .split_once(':')
            .ok_or_else(|| bad(format!("expected ROLL_DEG:on|off, found `{}`", item)))?;
        let phi: f64 = phi
            .trim()
            .parse()
            .map_err(|_| bad(format!("bad roll `{}`", phi)))?;
        let on = match state.trim() {
            "on" => true,
            "off" => false,
            s => return Err(bad(format!("expected on or off, found `{}`", s))),
        };
        steps.push((phi.to_radians(), on));
        column += item.len() + 1;
    }
    Ok(steps)
}

fn trace_csv(mp: &MachineProgram, trace: &ActuatorTrace) -> String {
    let mut out = String::from("index,command,nozzle_deg,stabilizer,carriage_mm,carriage,carriage_beta\n");
    for (i, s) in trace.states.iter().enumerate() {
        let command = match i {
            0 => "START".to_string(),
            _ => mp.commands[i - 1].to_string(),
        };
        let stab = match s.stabilizer {
            Stabilizer::Open => "open",
            Stabilizer::Closed => "closed",
        };
        let (carriage, beta) = match s.carriage {
            Carriage::Open => ("open", String::new()),
            Carriage::Closed(b) => ("closed", b.to_string()),
        };
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            i,
            command,
            s.nozzle_angle(&trace.limits),
            stab,
            s.carriage_position(&trace.limits),
            carriage,
            beta
        );
    }
    out
}

fn align_mode(a: AlignArg) -> Option<AlignMode> {
    match a {
        AlignArg::Base => Some(AlignMode::BaseFrame),
        AlignArg::BaseRoll => Some(AlignMode::BaseFrameRoll),
        AlignArg::None => None,
    }
}

/// Resamples `meas` onto the joint count and spacing of `pred` when they
/// differ, then aligns it.
fn prepare_measured(meas: &Centerline, pred: &Centerline, a: AlignArg) -> CliResult<Centerline> {
    let meas = if meas.len() == pred.len() {
        meas.clone()
    } else {
        let n = pred.len() - 1;
        resample(&meas.points, n, pred.arc_length() / n as f64)?
    };
    Ok(match align_mode(a) {
        Some(mode) => align(&meas, pred, AlignmentOptions { mode })?,
        None => meas,
    })
}

fn cmd_eval(
    config: &ProjectConfig,
    files: &[PathBuf],
    a: AlignArg,
    planar: bool,
    out: &OutArg,
) -> CliResult<()> {
    if !files.len().is_multiple_of(2) {
        return Err(Error::InvalidArgument("eval takes MEASURED PREDICTED pairs".into()).into());
    }
    let mode = if planar {
        ErrorMode::Planar
    } else {
        ErrorMode::Spatial
    };
    let mut reports: Vec<ErrorReport> = Vec::new();
    for pair in files.chunks(2) {
        let meas = load(&pair[0], centerline_from_csv)?;
        let pred = load(&pair[1], centerline_from_csv)?;
        let meas = prepare_measured(&meas, &pred, AlignArg::None)?;
        let label = pair[0]
            .file_stem()
            .map_or("shape".into(), |s| s.to_string_lossy().into_owned());
        reports.push(evaluate(&meas, &pred, align_mode(a), mode, &config.wire, &label)?);
    }
    let rows: Vec<ShapeSummary> = reports.iter().map(ShapeSummary::from).collect();
    let mut table = summary_table(&rows)?;
    let agg = crate::eval::aggregate_reports(&reports)?;
    if let Some(rms) = agg.pooled_rms {
        let _ = writeln!(table, "mean of per-shape means = {} mm", agg.mean_of_means);
        let _ = writeln!(table, "pooled rms over all joints = {} mm", rms);
    }
    let csv = report_csv(&reports);
    match &out.out {
        Some(p) => {
            write_file(p, &csv)?;
            print!("{}", table);
        }
        None => {
            print!("{}", csv);
            eprint!("{}", table);
        }
    }
    Ok(())
}

const SVG_SIZE: f64 = 640.0;
const SVG_MARGIN: f64 = 40.0;

fn plot_svg(pred: &Centerline, meas: &Centerline, view: ViewArg) -> String {
    let (ia, ib, names) = match view {
        ViewArg::Xy => (0, 1, ("x", "y")),
        ViewArg::Xz => (0, 2, ("x", "z")),
        ViewArg::Yz => (1, 2, ("y", "z")),
    };
    let all = pred.points.iter().chain(&meas.points);
    let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
    for p in all {
        for (d, i) in [ia, ib].into_iter().enumerate() {
            lo[d] = lo[d].min(p[i]);
            hi[d] = hi[d].max(p[i]);
        }
    }
    let span = (hi[0] - lo[0]).max(hi[1] - lo[1]).max(1e-9);
    let scale = (SVG_SIZE - 2.0 * SVG_MARGIN) / span;
    let cx = 0.5 * (lo[0] + hi[0]);
    let cy = 0.5 * (lo[1] + hi[1]);
    let map = |p: &crate::geom::Vec3| -> (f64, f64) {
        (
            SVG_SIZE / 2.0 + (p[ia] - cx) * scale,
            SVG_SIZE / 2.0 - (p[ib] - cy) * scale,
        )
    };
    let poly = |c: &Centerline| -> String {
        c.points
            .iter()
            .map(|p| {
                let (x, y) = map(p);
                format!("{:.3},{:.3}", x, y)
            })
            .collect::<Vec<_>>()
            .join(" ")
    };

    let mut s = String::new();
    let _ = writeln!(s, r#"<?xml version="1.0" encoding="UTF-8"?>"#);
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{0}" height="{0}" viewBox="0 0 {0} {0}">"#,
        SVG_SIZE
    );
    let _ = writeln!(s, "<title>predicted vs measured centerline ({}-{} view)</title>", names.0, names.1);
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        s,
        r##"<polyline id="predicted" fill="none" stroke="#1f77b4" stroke-width="2" points="{}"/>"##,
        poly(pred)
    );
    let _ = writeln!(
        s,
        r##"<polyline id="measured" fill="none" stroke="#d62728" stroke-width="2" stroke-dasharray="6 3" points="{}"/>"##,
        poly(meas)
    );
    let _ = writeln!(s, r##"<g id="errors" stroke="#555555" stroke-width="1">"##);
    for (p, m) in pred.points.iter().zip(&meas.points).skip(1) {
        let (x1, y1) = map(p);
        let (x2, y2) = map(m);
        let _ = writeln!(
            s,
            r#"<line x1="{:.3}" y1="{:.3}" x2="{:.3}" y2="{:.3}"/>"#,
            x1, y1, x2, y2
        );
    }
    let _ = writeln!(s, "</g>");
    let _ = writeln!(
        s,
        r##"<text x="{}" y="20" font-family="sans-serif" font-size="12"><tspan fill="#1f77b4">predicted</tspan> <tspan fill="#d62728">measured</tspan> ({} horizontal, {} up, {:.3} mm span)</text>"##,
        SVG_MARGIN, names.0, names.1, span
    );
    let _ = writeln!(s, "</svg>");
    s
}
