//! The `feecproj` command line: mesh tools, verification suites and studies.

use crate::config::{EpsilonPolicy, RunConfig, Thresholds};
use crate::error::{FeecError, Result};
use crate::geometry::{neighborhood_constant, DomainGeometry};
use crate::problem::DEFAULT_COLLAR_WIDTH;
use crate::report::{write_epsilon_csv, write_level_csv, Report, Timing};
use crate::study::{boundedness_study, default_epsilons, interpolation_error_study, StudyBands};
use crate::verify::{run_suite, Suite};
use clap::{Args, Parser, Subcommand, ValueEnum};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

/// Environment variable capping the worker threads.
pub const THREADS_ENV: &str = "FEECPROJ_THREADS";

pub const EXIT_PASS: i32 = 0;
pub const EXIT_FAIL: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "feecproj", version, about = "Smoothed projections onto finite element differential forms")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate or inspect meshes.
    Mesh {
        #[command(subcommand)]
        action: MeshAction,
    },
    /// Run invariant suites: calculus, spaces, geometry, mollifier,
    /// projection or all.
    Verify {
        suite: String,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Produce a study table.
    Study {
        kind: StudyKind,
        #[command(flatten)]
        run: RunArgs,
        /// Form degree studied.
        #[arg(long, default_value_t = 1)]
        degree: usize,
        /// Number of ε values, one decade per four.
        #[arg(long, default_value_t = 5)]
        count: usize,
        /// Refinement levels, as `a..b` (inclusive) or a comma list.
        #[arg(long, default_value = "0..3")]
        levels: String,
        /// Where to write the CSV table; standard output by default.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
}

#[derive(Debug, Subcommand)]
pub enum MeshAction {
    /// Write the JSON mesh of a named domain at a refinement level.
    Generate {
        #[arg(long, default_value = "unit_square")]
        domain: String,
        #[arg(long, default_value_t = 2)]
        level: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print counts, the shape constant and the neighbourhood constant.
    Info {
        #[arg(long, default_value = "unit_square")]
        domain: String,
        #[arg(long, default_value_t = 2)]
        level: usize,
        #[arg(long)]
        mesh_file: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum StudyKind {
    EpsilonScaling,
    RefinementBoundedness,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[arg(long, default_value = "unit_square")]
    pub domain: String,
    #[arg(long, default_value_t = 2)]
    pub level: usize,
    #[arg(long)]
    pub mesh_file: Option<PathBuf>,
    /// `P1-minus`, `P2`, or one family per degree such as `P1,P1-,P1-`.
    #[arg(long, default_value = "P1-minus")]
    pub complex: String,
    /// `auto` or an explicit value.
    #[arg(long, default_value = "auto")]
    pub epsilon: String,
    #[arg(long, default_value_t = 2.0)]
    pub p: f64,
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
    /// Face quadrature degree for assembling `Q`.
    #[arg(long)]
    pub quad_degree: Option<usize>,
    /// Where to write the JSON report.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// JSON file overriding some thresholds.
    #[arg(long)]
    pub thresholds: Option<PathBuf>,
    /// Record stage timings in the report, which makes it run-dependent.
    #[arg(long)]
    pub timings: bool,
}

impl RunArgs {
    pub fn config(&self) -> Result<RunConfig> {
        let thresholds = match &self.thresholds {
            Some(path) => Thresholds::from_file(path)?,
            None => Thresholds::default(),
        };
        Ok(RunConfig {
            domain: self.domain.clone(),
            level: self.level,
            mesh_file: self.mesh_file.clone(),
            complex: self.complex.clone(),
            epsilon: EpsilonPolicy::parse(&self.epsilon)?,
            p: self.p,
            seed: self.seed,
            quad_degree: self.quad_degree,
            thresholds,
        })
    }
}

/// Exit code for an error: failures of a numerical invariant give 1,
/// everything else is a configuration problem.
pub fn exit_code(e: &FeecError) -> i32 {
    match e {
        FeecError::NeumannDivergence(_)
        | FeecError::SliceCoverage(_)
        | FeecError::SingularDof(_)
        | FeecError::UnisolvenceFailure(_) => EXIT_FAIL,
        _ => EXIT_CONFIG,
    }
}

/// Parse `a..b` (inclusive) or `a,b,c`.
pub fn parse_levels(s: &str) -> Result<Vec<usize>> {
    let bad = || FeecError::InvalidConfig(format!("cannot read levels '{s}'"));
    let levels: Vec<usize> = if let Some((a, b)) = s.split_once("..") {
        let a: usize = a.trim().parse().map_err(|_| bad())?;
        let b: usize = b.trim().parse().map_err(|_| bad())?;
        (a..=b).collect()
    } else {
        s.split(',').map(|x| x.trim().parse().map_err(|_| bad())).collect::<Result<_>>()?
    };
    if levels.is_empty() {
        return Err(bad());
    }
    Ok(levels)
}

/// Size the global worker pool from [`THREADS_ENV`], if set.
pub fn init_threads() -> Result<()> {
    let Ok(v) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let n: usize = v
        .trim()
        .parse()
        .ok()
        .filter(|n| *n > 0)
        .ok_or_else(|| FeecError::InvalidConfig(format!("{THREADS_ENV} must be a positive integer, got '{v}'")))?;
    // A pool built earlier in the same process stays in place.
    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    Ok(())
}

/// Parse `args` (program name first), run, and return the exit code.
/// Human-readable output goes to `out`, diagnostics to `err`.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = e.exit_code();
            if code == 0 {
                let _ = write!(out, "{}", e.render());
                return EXIT_PASS;
            }
            let _ = write!(err, "{}", e.render());
            return EXIT_CONFIG;
        }
    };
    let result = init_threads().and_then(|_| dispatch(&cli.command, out));
    match result {
        Ok(true) => EXIT_PASS,
        Ok(false) => EXIT_FAIL,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            exit_code(&e)
        }
    }
}

fn dispatch(cmd: &Command, out: &mut dyn Write) -> Result<bool> {
    match cmd {
        Command::Mesh { action } => mesh_command(action, out),
        Command::Verify { suite, run } => verify_command(suite, run, out),
        Command::Study {
            kind,
            run,
            degree,
            count,
            levels,
            csv,
        } => study_command(*kind, run, *degree, *count, levels, csv.as_deref(), out),
    }
}

fn mesh_command(action: &MeshAction, out: &mut dyn Write) -> Result<bool> {
    match action {
        MeshAction::Generate { domain, level, out: path } => {
            let json = crate::mesh::generate(domain, *level)?.to_json();
            match path {
                Some(p) => std::fs::write(p, json + "\n")?,
                None => writeln!(out, "{json}")?,
            }
        }
        MeshAction::Info { domain, level, mesh_file } => {
            let cfg = RunConfig {
                domain: domain.clone(),
                level: *level,
                mesh_file: mesh_file.clone(),
                ..RunConfig::default()
            };
            let mesh = cfg.mesh()?;
            let geometry = DomainGeometry::named(domain, DEFAULT_COLLAR_WIDTH)?;
            geometry.check_mesh(&mesh)?;
            writeln!(out, "dimension {}", mesh.n())?;
            for d in 0..=mesh.n() {
                writeln!(out, "simplices[{d}] {}", mesh.num_simplices(d))?;
            }
            writeln!(out, "boundary_facets {}", mesh.boundary_facets().len())?;
            writeln!(out, "h_max {:e}", mesh.h_max())?;
            writeln!(out, "h_min {:e}", mesh.h_min())?;
            writeln!(out, "C_mesh {:.10}", mesh.shape_constant())?;
            writeln!(out, "eps_h {:e}", neighborhood_constant(&mesh, &geometry)?)?;
        }
    }
    Ok(true)
}

fn write_report(report: &Report, path: Option<&Path>) -> Result<()> {
    if let Some(p) = path {
        std::fs::write(p, report.to_json()?)?;
    }
    Ok(())
}

fn verify_command(suite: &str, run: &RunArgs, out: &mut dyn Write) -> Result<bool> {
    let suites = Suite::parse(suite)?;
    let cfg = run.config()?;
    let mut report = Report::new(&format!("verify {suite}"), &cfg);
    let mut timings = Vec::new();
    let mut problem = None;
    for s in suites {
        let start = Instant::now();
        let result = run_suite(s, &cfg, &mut problem)?;
        timings.push(Timing {
            stage: s.name().into(),
            seconds: start.elapsed().as_secs_f64(),
        });
        for c in &result.checks {
            let mark = if c.pass { "PASS" } else { "FAIL" };
            writeln!(out, "{mark} {}/{} {:e} {}", s.name(), c.name, c.value, c.bound)?;
            if !c.pass {
                writeln!(out, "     {}: {}", c.module, c.invariant)?;
            }
        }
        report.suites.push(result);
    }
    if let Some(pb) = &problem {
        report.ledger = Some(pb.ledger.clone());
        writeln!(out, "epsilon {:e} (binding: {})", pb.ledger.eps, pb.ledger.binding)?;
    }
    if run.timings {
        report.timings = Some(timings);
    }
    report.finish();
    writeln!(out, "verify {suite}: {}", if report.pass { "pass" } else { "fail" })?;
    write_report(&report, run.out.as_deref())?;
    Ok(report.pass)
}

fn csv_sink(path: Option<&Path>, out: &mut dyn Write, write: impl FnOnce(&mut dyn Write) -> Result<()>) -> Result<()> {
    match path {
        Some(p) => write(&mut std::fs::File::create(p)?),
        None => write(out),
    }
}

fn study_command(
    kind: StudyKind,
    run: &RunArgs,
    degree: usize,
    count: usize,
    levels: &str,
    csv: Option<&Path>,
    out: &mut dyn Write,
) -> Result<bool> {
    let cfg = run.config()?;
    let bands = StudyBands::from_thresholds(&cfg.thresholds);
    let start = Instant::now();
    let mut report = match kind {
        StudyKind::EpsilonScaling => {
            let pb = cfg.problem()?;
            let eps = default_epsilons(pb.eps(), count);
            let study = interpolation_error_study(&pb, degree, &eps, 2, cfg.seed, &bands)?;
            csv_sink(csv, out, |w| write_epsilon_csv(&study, bands.slope, w))?;
            let mut report = Report::new("study epsilon-scaling", &cfg);
            report.ledger = Some(pb.ledger.clone());
            report.epsilon_studies.push(study);
            report
        }
        StudyKind::RefinementBoundedness => {
            if cfg.mesh_file.is_some() {
                return Err(FeecError::InvalidConfig("refinement studies generate their own meshes".into()));
            }
            let levels = parse_levels(levels)?;
            let study = boundedness_study(&cfg.problem_spec(), &levels, degree, &bands)?;
            csv_sink(csv, out, |w| write_level_csv(&study, w))?;
            let mut report = Report::new("study refinement-boundedness", &cfg);
            report.boundedness_studies.push(study);
            report
        }
    };
    if run.timings {
        report.timings = Some(vec![Timing {
            stage: "study".into(),
            seconds: start.elapsed().as_secs_f64(),
        }]);
    }
    report.finish();
    write_report(&report, run.out.as_deref())?;
    Ok(report.pass)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run_args(args: &[&str]) -> (i32, String, String) {
        let mut out = Vec::new();
        let mut err = Vec::new();
        let code = run(std::iter::once("feecproj").chain(args.iter().copied()), &mut out, &mut err);
        (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
    }

    #[test]
    fn level_lists() {
        assert_eq!(parse_levels("0..3").unwrap(), vec![0, 1, 2, 3]);
        assert_eq!(parse_levels("1, 2").unwrap(), vec![1, 2]);
        assert!(parse_levels("a..b").is_err());
    }

    #[test]
    fn unknown_suite_is_a_config_error() {
        let (code, _, err) = run_args(&["verify", "everything"]);
        assert_eq!(code, EXIT_CONFIG);
        assert!(err.contains("unknown suite"));
    }

    #[test]
    fn bad_flag_is_a_config_error() {
        assert_eq!(run_args(&["verify", "calculus", "--seed", "x"]).0, EXIT_CONFIG);
        assert_eq!(run_args(&["verify", "calculus", "--epsilon", "-1"]).0, EXIT_CONFIG);
    }

    #[test]
    fn mesh_info_of_the_reference_square() {
        let (code, out, _) = run_args(&["mesh", "info", "--domain", "unit_square", "--level", "2"]);
        assert_eq!(code, EXIT_PASS);
        assert!(out.contains("simplices[2] 32"));
        assert!(out.contains("C_mesh 4.0000000000\n"), "{out}");
    }
}
