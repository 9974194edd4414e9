//! Command-line front end: `solve`, `converge`, `greens`, and `ortho`
//! subcommands writing CSV artifacts.
//!
//! Flags mirror the keys of an optional TOML config file (`--config`); flags
//! win on conflict and unknown config keys are rejected. All CSV output uses
//! `.` decimal separators, 17 significant digits, comma delimiters, and LF
//! line endings; identical configurations produce bitwise-identical files.
//!
//! Exit codes: 0 success, 2 invalid configuration, 3 solver failure.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};
use serde::Deserialize;

use crate::analysis::{convergence_sweep, error_report, orthogonality_table, SweepAxis};
use crate::assembly::{divergence_matrix, mass_matrix, saddle_matrix, stiffness_matrix};
use crate::greens::{
    classic_greens, exact_greens_1d_poisson, exact_greens_2d_poisson, ClassicGreens, KernelSpaces,
};
use crate::mesh_spaces::{build_space, Mesh, SpaceKind};
use crate::vms_solver::{
    galerkin_solve, optimal_projection, vms_solve, Formulation, ProblemSpec,
};
use crate::{Error, Result};

/// Sample points per axis for `solution.csv`.
const SOLUTION_SAMPLES: usize = 200;
/// Sample points per axis for 1D / 2D kernel dumps.
const GREENS_SAMPLES_1D: usize = 200;
const GREENS_SAMPLES_2D: usize = 64;

#[derive(Parser)]
#[command(name = "msem-vms", version, about = "Spectral-element advection-diffusion solvers with an algebraic VMS closure")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Solve one configuration and dump sampled solution fields.
    Solve(CommonArgs),
    /// Run an h/p/k convergence sweep and dump errors plus fitted rates.
    Converge(CommonArgs),
    /// Compare the discrete Greens' kernel against the exact Poisson kernel.
    Greens(CommonArgs),
    /// Reproduce the fine-scale orthogonality tables.
    Ortho(CommonArgs),
}

#[derive(Args, Default, Clone)]
struct CommonArgs {
    /// Spatial dimension (1 or 2).
    #[arg(long = "dim")]
    dim: Option<usize>,
    /// Formulation: direct or mixed.
    #[arg(long = "form")]
    form: Option<String>,
    /// Diffusion coefficient.
    #[arg(long = "nu")]
    nu: Option<f64>,
    /// Elements per axis.
    #[arg(long = "N")]
    elements: Option<usize>,
    /// Coarse polynomial degree.
    #[arg(long = "p")]
    degree: Option<usize>,
    /// Fine-degree increment(s); a list is accepted where it makes sense.
    #[arg(long = "k", value_delimiter = ',')]
    k: Option<Vec<usize>>,
    /// Sweep axis for `converge`: h, p, or k.
    #[arg(long = "axis")]
    axis: Option<String>,
    /// Sweep grid values (comma separated).
    #[arg(long = "grid", value_delimiter = ',')]
    grid: Option<Vec<usize>>,
    /// Output directory.
    #[arg(long = "out")]
    out: Option<PathBuf>,
    /// TOML config file mirroring these flags (flags win).
    #[arg(long = "config")]
    config: Option<PathBuf>,
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    dim: Option<usize>,
    form: Option<String>,
    nu: Option<f64>,
    #[serde(rename = "N")]
    elements: Option<usize>,
    p: Option<usize>,
    k: Option<IntOrList>,
    axis: Option<String>,
    grid: Option<Vec<usize>>,
    out: Option<String>,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum IntOrList {
    One(usize),
    Many(Vec<usize>),
}

/// Validated run configuration after flag/config merging.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub dim: usize,
    pub formulation: Formulation,
    pub nu: f64,
    pub elements: usize,
    pub degree: usize,
    pub k_values: Vec<usize>,
    pub axis: SweepAxis,
    pub grid: Option<Vec<usize>>,
    pub out: PathBuf,
}

fn merge(args: &CommonArgs) -> Result<RunConfig> {
    let file: FileConfig = match &args.config {
        None => FileConfig::default(),
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| Error::invalid(format!("cannot read config {}: {e}", path.display())))?;
            toml::from_str(&text).map_err(|e| Error::invalid(format!("bad config file: {e}")))?
        }
    };
    let dim = args.dim.or(file.dim).unwrap_or(1);
    let form = args.form.clone().or(file.form).unwrap_or_else(|| "direct".into());
    let formulation = match form.as_str() {
        "direct" => Formulation::Direct,
        "mixed" => Formulation::Mixed,
        other => return Err(Error::invalid(format!("unknown formulation `{other}`"))),
    };
    let nu = args.nu.or(file.nu).unwrap_or(0.01);
    let elements = args.elements.or(file.elements).unwrap_or(4);
    let degree = args.degree.or(file.p).unwrap_or(2);
    let k_values = args
        .k
        .clone()
        .or(file.k.map(|k| match k {
            IntOrList::One(v) => vec![v],
            IntOrList::Many(v) => v,
        }))
        .unwrap_or_else(|| vec![2]);
    let axis = match args.axis.clone().or(file.axis).unwrap_or_else(|| "h".into()).as_str() {
        "h" => SweepAxis::H,
        "p" => SweepAxis::P,
        "k" => SweepAxis::K,
        other => return Err(Error::invalid(format!("unknown sweep axis `{other}`"))),
    };
    let grid = args.grid.clone().or(file.grid);
    let out = args.out.clone().or(file.out.map(PathBuf::from)).unwrap_or_else(|| PathBuf::from("."));

    if dim != 1 && dim != 2 {
        return Err(Error::invalid("dim must be 1 or 2"));
    }
    if formulation == Formulation::Direct && dim != 1 {
        return Err(Error::invalid("the direct formulation is 1D only"));
    }
    if !(nu > 0.0 && nu.is_finite()) {
        return Err(Error::invalid("nu must be positive"));
    }
    if elements < 1 {
        return Err(Error::invalid("N must be >= 1"));
    }
    if degree < 1 {
        return Err(Error::invalid("p must be >= 1"));
    }
    if k_values.is_empty() {
        return Err(Error::invalid("k must contain at least one value"));
    }
    Ok(RunConfig { dim, formulation, nu, elements, degree, k_values, axis, grid, out })
}

impl RunConfig {
    fn problem(&self, k: usize) -> ProblemSpec {
        match (self.dim, self.formulation) {
            (1, Formulation::Direct) => ProblemSpec::direct_1d(self.nu, self.elements, self.degree, k),
            (1, Formulation::Mixed) => ProblemSpec::mixed_1d(self.nu, self.elements, self.degree, k),
            _ => ProblemSpec::mixed_2d(self.nu, self.elements, self.degree, k),
        }
    }
}

/// Entry point for the binary.
pub fn run_from_env() -> i32 {
    run(std::env::args_os())
}

/// Parses arguments, executes the subcommand, and returns the process exit
/// code (0 ok, 2 invalid config, 3 solver failure).
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => {
            print!("{e}");
            return 0;
        }
        Err(e) => {
            eprint!("{e}");
            return 2;
        }
    };
    let (cmd, args) = match &cli.cmd {
        Cmd::Solve(a) => (CmdKind::Solve, a),
        Cmd::Converge(a) => (CmdKind::Converge, a),
        Cmd::Greens(a) => (CmdKind::Greens, a),
        Cmd::Ortho(a) => (CmdKind::Ortho, a),
    };
    let config = match merge(args) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return 2;
        }
    };
    let result = match cmd {
        CmdKind::Solve => cmd_solve(&config),
        CmdKind::Converge => cmd_converge(&config),
        CmdKind::Greens => cmd_greens(&config),
        CmdKind::Ortho => cmd_ortho(&config),
    };
    match result {
        Ok(()) => 0,
        Err(e @ Error::InvalidArgument(_)) => {
            eprintln!("error: {e}");
            2
        }
        Err(e) => {
            eprintln!("error: {e}");
            3
        }
    }
}

enum CmdKind {
    Solve,
    Converge,
    Greens,
    Ortho,
}

fn fmt_float(v: f64) -> String {
    format!("{v:.16e}")
}

fn write_file(path: &Path, content: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    std::fs::write(path, content)?;
    Ok(())
}

fn sample_axis(n: usize) -> Vec<f64> {
    (0..n).map(|i| i as f64 / (n - 1) as f64).collect()
}

/// `solve`: runs Galerkin, projection, and VMS at one configuration and
/// samples all fields on a uniform grid.
pub fn cmd_solve(config: &RunConfig) -> Result<()> {
    if config.k_values.len() != 1 {
        return Err(Error::invalid("solve takes a single k"));
    }
    let spec = config.problem(config.k_values[0]);
    let bundle = spec.exact.clone().expect("built-in problems carry exact solutions");
    let galerkin = galerkin_solve(&spec)?;
    let projection = optimal_projection(&spec)?;
    let vms = vms_solve(&spec)?;

    let mut csv = String::new();
    let pts = sample_axis(SOLUTION_SAMPLES);
    if config.dim == 1 {
        csv.push_str("x,phi_exact,phi_projection,phi_galerkin,phi_vms,phi_prime_exact,phi_prime_computed\n");
        for &x in &pts {
            let p = [x];
            let proj = projection.eval_phi(&p);
            let row = [
                x,
                (bundle.phi)(&p),
                proj,
                galerkin.eval_phi(&p),
                vms.eval_phi(&p),
                (bundle.phi)(&p) - proj,
                vms.eval_phi_prime(&p),
            ];
            let cells: Vec<String> = row.iter().map(|&v| fmt_float(v)).collect();
            let _ = writeln!(csv, "{}", cells.join(","));
        }
    } else {
        csv.push_str("x,y,phi_exact,phi_projection,phi_galerkin,phi_vms,phi_prime_exact,phi_prime_computed\n");
        for &y in &pts {
            for &x in &pts {
                let p = [x, y];
                let proj = projection.eval_phi(&p);
                let row = [
                    x,
                    y,
                    (bundle.phi)(&p),
                    proj,
                    galerkin.eval_phi(&p),
                    vms.eval_phi(&p),
                    (bundle.phi)(&p) - proj,
                    vms.eval_phi_prime(&p),
                ];
                let cells: Vec<String> = row.iter().map(|&v| fmt_float(v)).collect();
                let _ = writeln!(csv, "{}", cells.join(","));
            }
        }
    }
    write_file(&config.out.join("solution.csv"), &csv)
}

/// `converge`: sweep along the configured axis, dumping per-point errors and
/// fitted rates.
pub fn cmd_converge(config: &RunConfig) -> Result<()> {
    let grid = config.grid.clone().unwrap_or_else(|| match config.axis {
        SweepAxis::H => vec![8, 16, 32, 64],
        SweepAxis::P => vec![1, 2, 3],
        SweepAxis::K => vec![1, 2, 3, 4],
    });
    if grid.len() < 3 {
        return Err(Error::invalid("converge needs a grid of at least 3 points"));
    }
    let template = config.problem(config.k_values[0]);
    let record = convergence_sweep(config.axis, &grid, &template)?;

    let mut csv = String::from(
        "axis_value,err_galerkin,err_projection,err_vms,err_vms_vs_projection,err_fine_scales\n",
    );
    let mut successes = 0usize;
    for (value, errs) in &record.points {
        match errs {
            Some(e) => {
                successes += 1;
                let _ = writeln!(
                    csv,
                    "{},{},{},{},{},{}",
                    value,
                    fmt_float(e.galerkin),
                    fmt_float(e.projection),
                    fmt_float(e.vms),
                    fmt_float(e.vms_vs_projection),
                    fmt_float(e.fine_scales)
                );
            }
            None => {
                let _ = writeln!(csv, "{value},,,,,");
            }
        }
    }
    write_file(&config.out.join("convergence.csv"), &csv)?;

    let mut rates = String::from("column,slope\n");
    for (name, rate) in &record.rates {
        match rate {
            Some(r) => {
                let _ = writeln!(rates, "{},{}", name, fmt_float(*r));
            }
            None => {
                let _ = writeln!(rates, "{name},");
            }
        }
    }
    write_file(&config.out.join("rates.csv"), &rates)?;

    if successes < 3 {
        return Err(Error::Solver(format!(
            "only {successes} of {} sweep points succeeded",
            grid.len()
        )));
    }
    Ok(())
}

fn poisson_kernel_1d(config: &RunConfig) -> Result<ClassicGreens> {
    let mesh = Mesh::new(1, config.elements)?;
    match config.formulation {
        Formulation::Direct => {
            let space = build_space(mesh, config.degree, SpaceKind::H1Nodal, true)?;
            let k = stiffness_matrix(&space, 1.0)?;
            classic_greens(k, KernelSpaces::Direct(space))
        }
        Formulation::Mixed => {
            let flux = build_space(mesh, config.degree, SpaceKind::H1Nodal, false)?;
            let scalar = build_space(mesh, config.degree, SpaceKind::L2Volume, false)?;
            let mq = mass_matrix(&flux, &flux, 1.0)?;
            let d = divergence_matrix(&scalar, &flux)?;
            let a = saddle_matrix(&mq, &d)?;
            classic_greens(a, KernelSpaces::Mixed { flux, scalar })
        }
    }
}

fn poisson_kernel_2d(config: &RunConfig) -> Result<ClassicGreens> {
    let mesh = Mesh::new(2, config.elements)?;
    let flux = build_space(mesh, config.degree, SpaceKind::HdivFlux, false)?;
    let scalar = build_space(mesh, config.degree, SpaceKind::L2Volume, false)?;
    let mq = mass_matrix(&flux, &flux, 1.0)?;
    let d = divergence_matrix(&scalar, &flux)?;
    let a = saddle_matrix(&mq, &d)?;
    classic_greens(a, KernelSpaces::Mixed { flux, scalar })
}

/// Default 1D source points: element boundaries nearest 1/4, 1/2, 3/4.
fn source_points_1d(n: usize) -> Vec<f64> {
    let mut pts: Vec<f64> = [0.25, 0.5, 0.75]
        .iter()
        .map(|t| ((t * n as f64).round() / n as f64).clamp(1.0 / n as f64, 1.0 - 1.0 / n as f64))
        .collect();
    pts.dedup();
    pts
}

/// 2D reference source points for the kernel comparison.
pub const SOURCE_POINTS_2D: [[f64; 2]; 3] = [[0.125, 0.125], [0.625, 0.375], [0.875, 0.875]];

/// `greens`: dumps the discrete kernel against the exact Poisson kernel
/// (closed form in 1D, 100-term series in 2D) for fixed source points.
pub fn cmd_greens(config: &RunConfig) -> Result<()> {
    let mut csv = String::new();
    match config.dim {
        1 => {
            let g = poisson_kernel_1d(config)?;
            csv.push_str("s,x,g_exact,g_h,abs_diff\n");
            for s in source_points_1d(config.elements) {
                let slice = g.kernel_slice(&[s])?;
                for &x in &sample_axis(GREENS_SAMPLES_1D) {
                    let gh = slice.eval(&[x]);
                    let ge = exact_greens_1d_poisson(x, s);
                    let _ = writeln!(
                        csv,
                        "{},{},{},{},{}",
                        fmt_float(s),
                        fmt_float(x),
                        fmt_float(ge),
                        fmt_float(gh),
                        fmt_float((gh - ge).abs())
                    );
                }
            }
        }
        _ => {
            if config.formulation != Formulation::Mixed {
                return Err(Error::invalid("2D kernels use the mixed formulation"));
            }
            let g = poisson_kernel_2d(config)?;
            csv.push_str("s1,s2,x,y,g_exact,g_h,abs_diff\n");
            let pts = sample_axis(GREENS_SAMPLES_2D);
            for s in SOURCE_POINTS_2D {
                let slice = g.kernel_slice(&s)?;
                for &y in &pts {
                    for &x in &pts {
                        let gh = slice.eval(&[x, y]);
                        let ge = exact_greens_2d_poisson(&[x, y], &s, 100);
                        let _ = writeln!(
                            csv,
                            "{},{},{},{},{},{},{}",
                            fmt_float(s[0]),
                            fmt_float(s[1]),
                            fmt_float(x),
                            fmt_float(y),
                            fmt_float(ge),
                            fmt_float(gh),
                            fmt_float((gh - ge).abs())
                        );
                    }
                }
            }
        }
    }
    write_file(&config.out.join("greens.csv"), &csv)
}

/// Relative kernel deviation for one source point: the sup-norm of
/// `g_h - g_exact` over sample points outside the element containing `s`,
/// normalized by the sup-norm of the exact kernel over the whole grid (the
/// exact kernel is unbounded at `x = s`, so the source element itself is not
/// comparable pointwise).
pub fn greens_relative_deviation_2d(config: &RunConfig, s: &[f64; 2]) -> Result<f64> {
    let g = poisson_kernel_2d(config)?;
    let slice = g.kernel_slice(s)?;
    let mesh = Mesh::new(2, config.elements)?;
    let (es0, _) = mesh.locate(s[0]);
    let (es1, _) = mesh.locate(s[1]);
    let pts = sample_axis(GREENS_SAMPLES_2D);
    let mut max_diff: f64 = 0.0;
    let mut max_exact: f64 = 0.0;
    for &y in &pts {
        for &x in &pts {
            let ge = exact_greens_2d_poisson(&[x, y], s, 100);
            max_exact = max_exact.max(ge.abs());
            let (ex, _) = mesh.locate(x);
            let (ey, _) = mesh.locate(y);
            if ex == es0 && ey == es1 {
                continue;
            }
            max_diff = max_diff.max((slice.eval(&[x, y]) - ge).abs());
        }
    }
    Ok(max_diff / max_exact)
}

/// `ortho`: reproduces the orthogonality tables (one table for the direct
/// formulation, two stacked tables for mixed), rows `p` in {1, 2, 4} and
/// columns `k1..k4` by default.
pub fn cmd_ortho(config: &RunConfig) -> Result<()> {
    let p_values = [1usize, 2, 4];
    let k_values: Vec<usize> =
        if config.k_values.len() > 1 { config.k_values.clone() } else { vec![1, 2, 3, 4] };
    let template = config.problem(k_values[0]);
    let table = orthogonality_table(&template, &p_values, &k_values)?;

    let mut csv = String::new();
    let header: Vec<String> = std::iter::once("p".to_string())
        .chain(k_values.iter().map(|k| format!("k{k}")))
        .collect();
    for fam in 0..table.families.len() {
        csv.push_str(&header.join(","));
        csv.push('\n');
        for (ip, &p) in table.p_values.iter().enumerate() {
            let cells: Vec<String> = std::iter::once(p.to_string())
                .chain(table.entries[fam][ip].iter().map(|&v| fmt_float(v)))
                .collect();
            let _ = writeln!(csv, "{}", cells.join(","));
        }
    }
    write_file(&config.out.join("ortho.csv"), &csv)
}

/// Convenience used by the acceptance suite: error reports of the three
/// solvers at a configuration.
pub fn solver_errors(spec: &ProblemSpec) -> Result<(f64, f64, f64, f64, f64)> {
    let bundle = spec.exact.clone().ok_or_else(|| Error::invalid("missing exact bundle"))?;
    let g = galerkin_solve(spec)?;
    let p = optimal_projection(spec)?;
    let v = vms_solve(spec)?;
    let rg = error_report(&g, &bundle, &p)?;
    let rp = error_report(&p, &bundle, &p)?;
    let rv = error_report(&v, &bundle, &p)?;
    Ok((rg.e_exact, rp.e_exact, rv.e_exact, rv.e_projection, rv.e_fine))
}
