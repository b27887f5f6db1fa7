//! Single-output subcommands.

use std::path::PathBuf;

use clap::{Args, ValueEnum};
use num_complex::Complex64;
use serde_json::json;

use psdc::analysis::{
    check_a_stability, convergence_study, cost, estimate_order, scan_stability, CostMode, ErrorSource, ERROR_FLOOR,
};
use psdc::linalg::Scalar;
use psdc::optimize::{continuation, min_sr_s_entry, spectral_radius_nonstiff, spectral_radius_stiff, CoefficientTable, TableEntry};
use psdc::precond::build_matrix;
use psdc::problems::{CostWeight, ErrorMetric};
use psdc::quadrature::node_quadrature_exactness;
use psdc::sweeper::reference_solution;
use psdc::{integrate, CollocationSystem, Counters, NodeFamily, PrecondKind, Problem, SweepConfig};

use crate::args::{grid_spec, parse_family, parse_kind, parse_ranges, parse_steps, with_problem, StepList, OutputArgs, ProblemArgs, SchemeArgs};
use crate::error::CliError;
use crate::output::{json_num, Cell, Report, RunManifest, Table};

/// Column names and cells of one state component.
pub trait StateCells: Scalar {
    fn names(i: usize) -> Vec<String>;
    fn cells(self) -> Vec<Cell>;
}

impl StateCells for f64 {
    fn names(i: usize) -> Vec<String> {
        vec![format!("u{i}")]
    }
    fn cells(self) -> Vec<Cell> {
        vec![Cell::Num(self)]
    }
}

impl StateCells for Complex64 {
    fn names(i: usize) -> Vec<String> {
        vec![format!("u{i}_re"), format!("u{i}_im")]
    }
    fn cells(self) -> Vec<Cell> {
        vec![Cell::Num(self.re), Cell::Num(self.im)]
    }
}

fn record_problem<P: Problem>(manifest: &mut RunManifest, p: &P, t_end: f64, cfg: &SweepConfig) {
    manifest.param("problem", p.name());
    for (k, v) in p.params() {
        manifest.param(k, v);
    }
    manifest.param("t_end", t_end);
    manifest.param("newton_tol", format!("{:e}", cfg.newton_tol().unwrap_or(p.newton_tol())));
}

#[derive(Debug, Clone, Args)]
pub struct NodesArgs {
    #[arg(long, default_value = "radau-right", value_parser = parse_family)]
    pub family: NodeFamily,
    #[arg(long, default_value_t = 4)]
    pub m: usize,
    #[command(flatten)]
    pub output: OutputArgs,
}

pub fn nodes(args: &NodesArgs) -> Result<Report, CliError> {
    let coll = CollocationSystem::new(args.family, args.m)?;
    let m = coll.m();
    let mut manifest = RunManifest::new("nodes");
    manifest.param("family", args.family).param("m", m);
    manifest.result("exactness_degree", node_quadrature_exactness(&coll));
    let mut table = Table::new(["tau".to_string(), "b".to_string()].into_iter().chain((1..=m).map(|j| format!("q{j}"))));
    for i in 0..m {
        let mut row = vec![Cell::Num(coll.tau()[i]), Cell::Num(coll.b()[i])];
        row.extend(coll.q().row(i).iter().map(|&x| Cell::Num(x)));
        table.push(row);
    }
    let q: Vec<&[f64]> = (0..m).map(|i| coll.q().row(i)).collect();
    let data = json!({ "family": args.family.as_str(), "m": m, "tau": coll.tau(), "b": coll.b(), "q": q });
    Ok(Report::new(manifest, table).with_json(data))
}

#[derive(Debug, Clone, Args)]
pub struct CoeffsArgs {
    #[arg(long, value_parser = parse_kind)]
    pub kind: PrecondKind,
    #[arg(long, default_value = "radau-right", value_parser = parse_family)]
    pub family: NodeFamily,
    #[arg(long, default_value_t = 4)]
    pub m: usize,
    /// Sweep index for sweep-dependent kinds.
    #[arg(long, default_value_t = 1)]
    pub sweep: usize,
    #[command(flatten)]
    pub output: OutputArgs,
}

pub fn coeffs(args: &CoeffsArgs) -> Result<Report, CliError> {
    let coll = CollocationSystem::new(args.family, args.m)?;
    let m = coll.m();
    let qd = build_matrix(args.kind, &coll, Some(args.sweep))?;
    let rho_ns = spectral_radius_nonstiff(&qd, &coll)?;
    // Singular Q_Δ (explicit kinds) has no stiff iteration matrix.
    let rho_s = spectral_radius_stiff(&qd, &coll).ok();

    let mut manifest = RunManifest::new("coeffs");
    manifest.param("kind", args.kind).param("family", args.family).param("m", m);
    if args.kind == PrecondKind::MinSrFlex {
        manifest.param("sweep", args.sweep);
    }
    manifest.result("rho_nonstiff", crate::output::fmt_num(rho_ns));
    manifest.result("rho_stiff", rho_s.map_or("undefined".to_string(), crate::output::fmt_num));

    let mut table = Table::new(
        ["index".to_string(), "tau".to_string(), "d".to_string()]
            .into_iter()
            .chain((1..=m).map(|j| format!("qd{j}"))),
    );
    for i in 0..m {
        let mut row = vec![Cell::Int(i as u64), Cell::Num(coll.tau()[i]), Cell::Num(qd[(i, i)])];
        row.extend(qd.row(i).iter().map(|&x| Cell::Num(x)));
        table.push(row);
    }
    let rows: Vec<&[f64]> = (0..m).map(|i| qd.row(i)).collect();
    let data = json!({
        "kind": args.kind.as_str(),
        "family": args.family.as_str(),
        "m": m,
        "sweep": args.sweep,
        "diagonal": qd.is_diagonal().then(|| qd.diagonal()),
        "matrix": rows,
        "rho_nonstiff": json_num(rho_ns),
        "rho_stiff": rho_s.map(json_num),
    });
    Ok(Report::new(manifest, table).with_json(data))
}

#[derive(Debug, Clone, Args)]
pub struct OptimizeArgs {
    #[arg(long, default_value = "radau-right", value_parser = parse_family)]
    pub family: NodeFamily,
    #[arg(long, default_value_t = 4)]
    pub m: usize,
    /// JSON coefficient cache; read when present, updated after a solve.
    #[arg(long, value_name = "PATH")]
    pub cache: Option<PathBuf>,
    #[command(flatten)]
    pub output: OutputArgs,
}

fn cached_entry(args: &OptimizeArgs) -> Result<(TableEntry, &'static str), CliError> {
    let Some(path) = &args.cache else {
        return Ok((min_sr_s_entry(args.family, args.m)?, "computed"));
    };
    let mut table = if path.exists() { CoefficientTable::load(path)? } else { CoefficientTable::default() };
    if let Some(e) = table.get(args.family, args.m) {
        return Ok((e.clone(), "cache"));
    }
    let fresh = continuation(args.family, args.m)?;
    for e in fresh.entries() {
        table.insert(e.clone());
    }
    table.save(path)?;
    let entry = table.get(args.family, args.m).expect("just inserted").clone();
    Ok((entry, "computed"))
}

pub fn optimize(args: &OptimizeArgs) -> Result<Report, CliError> {
    let coll = CollocationSystem::new(args.family, args.m)?;
    let (entry, source) = cached_entry(args)?;
    let mut manifest = RunManifest::new("optimize");
    manifest.param("family", args.family).param("m", args.m).param("source", source);
    manifest.result("rho_stiff", crate::output::fmt_num(entry.rho_stiff));
    manifest.result("residual_norm", crate::output::fmt_num(entry.residual_norm));
    let mut table = Table::new(["index", "tau", "d"]);
    for (i, (&t, &d)) in coll.tau().iter().zip(&entry.d).enumerate() {
        table.push(vec![Cell::Int(i as u64), Cell::Num(t), Cell::Num(d)]);
    }
    let data = json!({
        "family": args.family.as_str(),
        "m": args.m,
        "tau": coll.tau(),
        "d": entry.d,
        "rho_stiff": json_num(entry.rho_stiff),
        "residual_norm": json_num(entry.residual_norm),
    });
    Ok(Report::new(manifest, table).with_json(data))
}

#[derive(Debug, Clone, Args)]
#[command(group(clap::ArgGroup::new("stepping").required(true).args(["dt", "steps"])))]
pub struct IntegrateArgs {
    #[command(flatten)]
    pub problem: ProblemArgs,
    #[command(flatten)]
    pub scheme: SchemeArgs,
    /// Step size; must divide the final time.
    #[arg(long)]
    pub dt: Option<f64>,
    /// Number of uniform steps.
    #[arg(long)]
    pub steps: Option<usize>,
    #[command(flatten)]
    pub output: OutputArgs,
}

pub fn resolve_steps(t_end: f64, dt: Option<f64>, steps: Option<usize>) -> Result<usize, CliError> {
    if let Some(n) = steps {
        return if n == 0 { Err(CliError::Usage("--steps must be positive".into())) } else { Ok(n) };
    }
    let dt = dt.ok_or_else(|| CliError::Usage("one of --dt or --steps is required".into()))?;
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(CliError::Usage(format!("--dt must be positive, got {dt}")));
    }
    let n = (t_end / dt).round();
    if n < 1.0 || (n * dt - t_end).abs() > 1e-9 * t_end.abs().max(1.0) {
        return Err(CliError::Usage(format!("--dt {dt} does not divide the final time {t_end}")));
    }
    Ok(n as usize)
}

pub fn integrate_cmd(args: &IntegrateArgs, workers: usize) -> Result<Report, CliError> {
    let any = args.problem.build()?;
    with_problem!(&any, p => integrate_problem(p, args, workers))
}

fn integrate_problem<P: Problem>(p: &P, args: &IntegrateArgs, workers: usize) -> Result<Report, CliError>
where
    P::Scalar: StateCells,
{
    let t_end = args.problem.t_end.unwrap_or(p.t_end());
    let n = resolve_steps(t_end, args.dt, args.steps)?;
    let cfg = args.scheme.config(workers)?;
    let traj = integrate(p, t_end, n, &cfg)?;

    let mut manifest = RunManifest::new("integrate");
    record_problem(&mut manifest, p, t_end, &cfg);
    args.scheme.record(&mut manifest, &cfg);
    manifest.param("steps", n);
    manifest.param("dt", t_end / n as f64);
    manifest.result("rhs_evals", traj.counters.rhs_evals);
    manifest.result("newton_iters", traj.counters.newton_iters);

    let mut columns = vec!["t".to_string()];
    columns.extend((0..p.dim()).flat_map(P::Scalar::names));
    columns.extend(["rhs_evals".to_string(), "newton_iters".to_string()]);
    let mut table = Table::new(columns);
    let mut total = Counters::default();
    for (i, (t, u)) in traj.times.iter().zip(&traj.states).enumerate() {
        if i > 0 {
            total += traj.step_counters[i - 1];
        }
        let mut row = vec![Cell::Num(*t)];
        row.extend(u.iter().flat_map(|&x| x.cells()));
        row.extend([Cell::Int(total.rhs_evals), Cell::Int(total.newton_iters)]);
        table.push(row);
    }
    Ok(Report::new(manifest, table))
}

#[derive(Debug, Clone, Args)]
pub struct StabilityArgs {
    #[command(flatten)]
    pub scheme: SchemeArgs,
    /// Sample window `re_min:re_max:im_min:im_max`.
    #[arg(long, default_value = "-16:4:-16:16", value_parser = parse_ranges, allow_hyphen_values = true)]
    pub grid: [f64; 4],
    /// Samples per axis.
    #[arg(long, default_value_t = 400)]
    pub res: usize,
    /// Report A-stability evidence on the left half of the grid plus random samples.
    #[arg(long)]
    pub check_a_stability: bool,
    #[arg(long, default_value_t = 1000)]
    pub samples: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 1e-8)]
    pub tol: f64,
    #[command(flatten)]
    pub output: OutputArgs,
}

pub fn stability(args: &StabilityArgs) -> Result<Report, CliError> {
    let cfg = args.scheme.config(1)?;
    let grid = grid_spec(args.grid, args.res)?;
    let mut manifest = RunManifest::new("stability");
    args.scheme.record(&mut manifest, &cfg);
    manifest.param("grid", args.grid.map(|x| x.to_string()).join(":"));
    manifest.param("res", args.res);

    if args.check_a_stability {
        manifest.param("samples", args.samples).param("seed", args.seed).param("tol", format!("{:e}", args.tol));
        let r = check_a_stability(&cfg, &grid, args.samples, args.seed, args.tol);
        manifest.result("no_violation_found", r.no_violation_found());
        let mut table = Table::new(["samples", "violations", "max_abs_r", "worst_re", "worst_im"]);
        table.push(vec![
            r.samples.into(),
            r.violations.into(),
            r.max_abs_r.into(),
            r.worst_z.0.into(),
            r.worst_z.1.into(),
        ]);
        return Ok(Report::new(manifest, table));
    }

    let scan = scan_stability(&cfg, &grid);
    if let Some((v, z)) = scan.max_left_half_plane() {
        manifest.result("max_abs_r_left_half_plane", crate::output::fmt_num(v));
        manifest.result("max_at", format!("{}{:+}i", z.re, z.im));
    }
    let mut table = Table::new(["re", "im", "abs_r"]);
    for iy in 0..grid.ny {
        for ix in 0..grid.nx {
            table.push(vec![grid.re(ix).into(), grid.im(iy).into(), scan.value(ix, iy).into()]);
        }
    }
    Ok(Report::new(manifest, table))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MetricName {
    LinfTrajectory,
    L2Final,
    L2FinalEuclidean,
}

impl From<MetricName> for ErrorMetric {
    fn from(m: MetricName) -> Self {
        match m {
            MetricName::LinfTrajectory => ErrorMetric::LinfTrajectory,
            MetricName::L2Final => ErrorMetric::L2Final,
            MetricName::L2FinalEuclidean => ErrorMetric::L2FinalEuclidean,
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct ConvergenceArgs {
    #[command(flatten)]
    pub problem: ProblemArgs,
    #[command(flatten)]
    pub scheme: SchemeArgs,
    /// Comma-separated step counts, e.g. `16,32,64`.
    #[arg(long, value_parser = parse_steps)]
    pub steps: StepList,
    #[arg(long, value_enum, default_value = "linf-trajectory")]
    pub metric: MetricName,
    /// Steps of the collocation reference run for problems without an exact solution.
    #[arg(long, default_value_t = 4096)]
    pub reference_steps: usize,
    #[command(flatten)]
    pub output: OutputArgs,
}

pub fn convergence(args: &ConvergenceArgs, workers: usize) -> Result<Report, CliError> {
    let any = args.problem.build()?;
    with_problem!(&any, p => convergence_problem(p, args, workers))
}

fn convergence_problem<P: Problem>(p: &P, args: &ConvergenceArgs, workers: usize) -> Result<Report, CliError> {
    let steps = &args.steps.0;
    let t_end = args.problem.t_end.unwrap_or(p.t_end());
    let cfg = args.scheme.config(workers)?;
    let mut manifest = RunManifest::new("convergence");
    record_problem(&mut manifest, p, t_end, &cfg);
    args.scheme.record(&mut manifest, &cfg);
    manifest.param("steps", steps.iter().map(|n| n.to_string()).collect::<Vec<_>>().join(","));
    manifest.param("metric", args.metric.to_possible_value().expect("named").get_name());

    let reference = if p.exact_solution(0.0).is_some() {
        manifest.param("error_source", "exact");
        None
    } else {
        if let Some(n) = steps.iter().find(|&&n| !args.reference_steps.is_multiple_of(n)) {
            return Err(CliError::Usage(format!(
                "reference steps {} are not a multiple of {n}",
                args.reference_steps
            )));
        }
        manifest.param("error_source", format!("radau-right-5 collocation, {} steps", args.reference_steps));
        Some(reference_solution(p, t_end, args.reference_steps)?)
    };
    let source = reference.as_ref().map_or(ErrorSource::Exact, ErrorSource::Reference);
    let points = convergence_study(p, t_end, steps, &cfg, &source, args.metric.into())?;

    let weight = p.cost_weight();
    manifest.param("cost_weight", match weight {
        CostWeight::Standard => "standard",
        CostWeight::AllenCahn => "allen-cahn",
    });
    let diagonal = cfg.precond().is_diagonal();
    let mut table = Table::new(["n_steps", "dt", "error", "rhs_evals", "newton_iters", "cost_serial", "cost_parallel"]);
    for pt in &points {
        let serial = cost(pt.counters, CostMode::Serial, cfg.m(), weight, diagonal)?.cost;
        let parallel = cost(pt.counters, CostMode::Parallel, cfg.m(), weight, diagonal).map_or(f64::NAN, |r| r.cost);
        table.push(vec![
            pt.n_steps.into(),
            pt.dt.into(),
            pt.error.into(),
            pt.counters.rhs_evals.into(),
            pt.counters.newton_iters.into(),
            serial.into(),
            parallel.into(),
        ]);
    }
    let usable: Vec<(f64, f64)> = points.iter().filter(|p| p.error > ERROR_FLOOR).map(|p| (p.dt, p.error)).collect();
    if let Ok(order) = estimate_order(&usable) {
        manifest.result("fitted_order", format!("{order:.4}"));
    }
    Ok(Report::new(manifest, table))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum WeightName {
    Standard,
    AllenCahn,
}

#[derive(Debug, Clone, Args)]
pub struct CostArgs {
    #[arg(long)]
    pub rhs: u64,
    #[arg(long)]
    pub newton: u64,
    /// Node-parallel run of a diagonal preconditioner.
    #[arg(long)]
    pub parallel: bool,
    #[arg(long, default_value_t = 4)]
    pub m: usize,
    #[arg(long, value_enum, default_value = "standard")]
    pub weight: WeightName,
    #[command(flatten)]
    pub output: OutputArgs,
}

pub fn cost_cmd(args: &CostArgs) -> Result<(f64, Report), CliError> {
    let weight = match args.weight {
        WeightName::Standard => CostWeight::Standard,
        WeightName::AllenCahn => CostWeight::AllenCahn,
    };
    let mode = if args.parallel { CostMode::Parallel } else { CostMode::Serial };
    let counters = Counters {
        rhs_evals: args.rhs,
        newton_iters: args.newton,
    };
    let r = cost(counters, mode, args.m, weight, true)?;
    let mut manifest = RunManifest::new("cost");
    manifest.param("rhs_evals", args.rhs).param("newton_iters", args.newton).param("m", args.m);
    manifest.param("mode", if args.parallel { "parallel" } else { "serial" });
    manifest.param("weight", args.weight.to_possible_value().expect("named").get_name());
    manifest.param("p_eff", r.p_eff);
    let mut table = Table::new(["cost"]);
    table.push(vec![r.cost.into()]);
    Ok((r.cost, Report::new(manifest, table)))
}
