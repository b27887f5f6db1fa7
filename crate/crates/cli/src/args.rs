//! Argument groups shared by several subcommands.

use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use num_complex::Complex64;

use psdc::analysis::GridSpec;
use psdc::problems::{allen_cahn_1d, dahlquist, lorenz, prothero_robinson, AllenCahn, Dahlquist, Lorenz, ProtheroRobinson};
use psdc::{build, ButcherTableau, CollocationSystem, NodeFamily, PrecondKind, SweepConfig};

use crate::error::CliError;
use crate::output::{Format, RunManifest};

pub fn parse_family(s: &str) -> Result<NodeFamily, String> {
    s.parse().map_err(|e: psdc::Error| e.to_string())
}

pub fn parse_kind(s: &str) -> Result<PrecondKind, String> {
    s.parse().map_err(|e: psdc::Error| e.to_string())
}

/// `a+bi`, `a-bi`, `bi`, `i` or a real number.
pub fn parse_complex(s: &str) -> Result<Complex64, String> {
    let t: String = s.chars().filter(|c| !c.is_whitespace()).collect();
    let bad = || format!("cannot parse '{s}' as a complex number");
    let Some(body) = t.strip_suffix(['i', 'j']) else {
        return t.parse::<f64>().map(|re| Complex64::new(re, 0.0)).map_err(|_| bad());
    };
    let bytes = body.as_bytes();
    let split = (1..bytes.len())
        .rev()
        .find(|&i| matches!(bytes[i], b'+' | b'-') && !matches!(bytes[i - 1], b'e' | b'E'));
    let (re, im) = match split {
        Some(i) => (&body[..i], &body[i..]),
        None => ("0", body),
    };
    let im = match im {
        "" | "+" => "1",
        "-" => "-1",
        other => other,
    };
    Ok(Complex64::new(re.parse().map_err(|_| bad())?, im.parse().map_err(|_| bad())?))
}

/// `re_min:re_max:im_min:im_max`.
pub fn parse_ranges(s: &str) -> Result<[f64; 4], String> {
    let parts: Vec<f64> = s
        .split(':')
        .map(|p| p.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|_| format!("grid '{s}' must be four numbers re_min:re_max:im_min:im_max"))?;
    <[f64; 4]>::try_from(parts).map_err(|_| format!("grid '{s}' must have four fields"))
}

/// Comma-separated step counts.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StepList(pub Vec<usize>);

pub fn parse_steps(s: &str) -> Result<StepList, String> {
    let steps: Vec<usize> = s
        .split(',')
        .map(|p| p.trim().parse::<usize>())
        .collect::<Result<_, _>>()
        .map_err(|_| format!("step list '{s}' must be comma-separated positive integers"))?;
    if steps.is_empty() || steps.contains(&0) {
        return Err(format!("step list '{s}' must be non-empty and positive"));
    }
    Ok(StepList(steps))
}

pub fn grid_spec(ranges: [f64; 4], res: usize) -> Result<GridSpec, CliError> {
    Ok(GridSpec::new((ranges[0], ranges[1]), (ranges[2], ranges[3]), res, res)?)
}

#[derive(Debug, Clone, Args)]
pub struct OutputArgs {
    /// Write CSV (default), to a file when a path is given.
    #[arg(long, num_args = 0..=1, value_name = "PATH", conflicts_with = "json")]
    pub csv: Option<Option<PathBuf>>,
    /// Write JSON, to a file when a path is given.
    #[arg(long, num_args = 0..=1, value_name = "PATH")]
    pub json: Option<Option<PathBuf>>,
}

impl OutputArgs {
    pub fn format(&self) -> Format {
        if self.json.is_some() {
            Format::Json
        } else {
            Format::Csv
        }
    }

    pub fn path(&self) -> Option<&Path> {
        self.json.as_ref().or(self.csv.as_ref()).and_then(|p| p.as_deref())
    }

    pub fn requested(&self) -> bool {
        self.csv.is_some() || self.json.is_some()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TableauName {
    Rk4,
    Esdirk43,
}

impl TableauName {
    pub fn tableau(self) -> ButcherTableau {
        match self {
            TableauName::Rk4 => ButcherTableau::rk4(),
            TableauName::Esdirk43 => ButcherTableau::esdirk43(),
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct SchemeArgs {
    /// Preconditioner kind.
    #[arg(long, default_value = "min-sr-s", value_parser = parse_kind)]
    pub precond: PrecondKind,
    /// Run a Runge-Kutta tableau instead of SDC.
    #[arg(long, value_enum, conflicts_with = "precond")]
    pub tableau: Option<TableauName>,
    #[arg(long, default_value = "radau-right", value_parser = parse_family)]
    pub family: NodeFamily,
    /// Number of collocation nodes.
    #[arg(long, default_value_t = 4)]
    pub m: usize,
    /// Number of sweeps.
    #[arg(long, default_value_t = 4)]
    pub k: usize,
    /// Newton residual tolerance; the problem default when omitted.
    #[arg(long)]
    pub newton_tol: Option<f64>,
    #[arg(long, default_value_t = psdc::sweeper::DEFAULT_NEWTON_MAX)]
    pub newton_max: usize,
    /// Step value from the quadrature update instead of the last node.
    #[arg(long)]
    pub collocation_update: bool,
}

impl SchemeArgs {
    /// Sweep configuration; `workers` is applied only to diagonal preconditioners.
    pub fn config(&self, workers: usize) -> Result<SweepConfig, CliError> {
        let mut cfg = match self.tableau {
            Some(t) => SweepConfig::from_tableau(&t.tableau())?,
            None => {
                let coll = CollocationSystem::new(self.family, self.m)?;
                SweepConfig::new(&coll, build(self.precond, &coll)?, self.k)?
                    .with_collocation_update(self.collocation_update)
            }
        };
        if let Some(tol) = self.newton_tol {
            cfg = cfg.with_newton_tol(tol)?;
        }
        cfg = cfg.with_newton_max(self.newton_max)?;
        apply_workers(cfg, workers)
    }

    pub fn record(&self, manifest: &mut RunManifest, cfg: &SweepConfig) {
        match self.tableau {
            Some(t) => {
                manifest.param("tableau", t.tableau().name);
                manifest.param("stages", cfg.m());
            }
            None => {
                manifest.param("precond", self.precond);
                manifest.param("family", self.family);
                manifest.param("m", self.m);
                manifest.param("k", self.k);
            }
        }
        manifest.param("step_value", if cfg.collocation_update() { "collocation-update" } else { "last-node" });
        manifest.param("newton_max", cfg.newton_max());
        manifest.param("workers", cfg.workers());
    }
}

/// Workers are `1` or `M`; non-diagonal sweeps always run serially.
pub fn apply_workers(cfg: SweepConfig, workers: usize) -> Result<SweepConfig, CliError> {
    if workers <= 1 || !cfg.precond().is_diagonal() {
        return Ok(cfg);
    }
    if workers != cfg.m() {
        return Err(CliError::Usage(format!(
            "--workers must be 1 or M = {} for a diagonal preconditioner, got {workers}",
            cfg.m()
        )));
    }
    Ok(cfg.with_workers(workers)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ProblemName {
    Dahlquist,
    Lorenz,
    ProtheroRobinson,
    AllenCahn,
}

#[derive(Debug, Clone, Args)]
pub struct ProblemArgs {
    #[arg(long, value_enum)]
    pub problem: ProblemName,
    /// Dahlquist eigenvalue, e.g. `0+1i` or `-1`.
    #[arg(long, default_value = "0+1i", value_parser = parse_complex, allow_hyphen_values = true)]
    pub lambda: Complex64,
    /// Stiffness (prothero-robinson, default 1e-3) or interface width (allen-cahn, default 0.04).
    #[arg(long)]
    pub eps: Option<f64>,
    /// Allen-Cahn driving force.
    #[arg(long, default_value_t = 0.04)]
    pub dw: f64,
    /// Allen-Cahn interior grid points.
    #[arg(long, default_value_t = 2047)]
    pub points: usize,
    /// Final time; the problem default when omitted.
    #[arg(long)]
    pub t_end: Option<f64>,
}

pub enum AnyProblem {
    Dahlquist(Dahlquist),
    Lorenz(Lorenz),
    ProtheroRobinson(ProtheroRobinson),
    AllenCahn(AllenCahn),
}

impl ProblemArgs {
    pub fn build(&self) -> Result<AnyProblem, CliError> {
        Ok(match self.problem {
            ProblemName::Dahlquist => AnyProblem::Dahlquist(dahlquist(self.lambda)),
            ProblemName::Lorenz => AnyProblem::Lorenz(lorenz()),
            ProblemName::ProtheroRobinson => AnyProblem::ProtheroRobinson(prothero_robinson(self.eps.unwrap_or(1e-3))?),
            ProblemName::AllenCahn => AnyProblem::AllenCahn(allen_cahn_1d(self.eps.unwrap_or(0.04), self.dw, self.points)?),
        })
    }
}

/// Runs `$body` with `$p` bound to the concrete problem.
macro_rules! with_problem {
    ($any:expr, $p:ident => $body:expr) => {
        match $any {
            $crate::args::AnyProblem::Dahlquist($p) => $body,
            $crate::args::AnyProblem::Lorenz($p) => $body,
            $crate::args::AnyProblem::ProtheroRobinson($p) => $body,
            $crate::args::AnyProblem::AllenCahn($p) => $body,
        }
    };
}
pub(crate) use with_problem;
