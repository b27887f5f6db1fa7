//! Datasets behind the benchmark figures, at desk scale.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use num_complex::Complex64;

use psdc::analysis::{convergence_study, cost, estimate_order, scan_stability, CostMode, ErrorSource, GridSpec, ERROR_FLOOR};
use psdc::problems::{allen_cahn_1d, dahlquist, lorenz, prothero_robinson, ErrorMetric};
use psdc::sweeper::reference_solution;
use psdc::{build, CollocationSystem, NodeFamily, PrecondKind, Problem, SweepConfig};

use crate::args::{apply_workers, TableauName};
use crate::error::CliError;
use crate::output::{fmt_num, Cell, FileSet, Report, RunManifest, Table};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Figure {
    /// Dahlquist order per sweep.
    Fig1Conv,
    /// Stability function grids.
    Fig2Stab,
    /// Lorenz error and cost.
    Fig3Lorenz,
    /// Prothero-Robinson error and cost.
    Fig4Prothero,
    /// Allen-Cahn error and cost.
    Fig5AllenCahn,
}

impl Figure {
    pub fn name(self) -> &'static str {
        match self {
            Figure::Fig1Conv => "fig1-conv",
            Figure::Fig2Stab => "fig2-stab",
            Figure::Fig3Lorenz => "fig3-lorenz",
            Figure::Fig4Prothero => "fig4-prothero",
            Figure::Fig5AllenCahn => "fig5-allen-cahn",
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct ReproduceArgs {
    #[arg(value_enum)]
    pub figure: Figure,
    /// Directory receiving `<figure>/*.csv`.
    #[arg(long, default_value = ".")]
    pub out_dir: PathBuf,
}

struct Method {
    label: String,
    cfg: SweepConfig,
    parallel: bool,
}

/// Any `workers > 1` runs diagonal sweeps on M threads, since figures mix node counts.
fn sdc(kind: PrecondKind, family: NodeFamily, m: usize, k: usize, workers: usize) -> Result<Method, CliError> {
    let coll = CollocationSystem::new(family, m)?;
    let threads = if workers > 1 { m } else { 1 };
    let cfg = apply_workers(SweepConfig::new(&coll, build(kind, &coll)?, k)?, threads)?;
    Ok(Method {
        label: kind.to_string(),
        parallel: cfg.precond().is_diagonal(),
        cfg,
    })
}

fn runge_kutta(t: TableauName) -> Result<Method, CliError> {
    let tableau = t.tableau();
    Ok(Method {
        label: tableau.name.clone(),
        cfg: SweepConfig::from_tableau(&tableau)?,
        parallel: false,
    })
}

fn pow2(range: std::ops::RangeInclusive<u32>) -> Vec<usize> {
    range.map(|n| 1usize << n).collect()
}

fn join(steps: &[usize]) -> String {
    steps.iter().map(|n| n.to_string()).collect::<Vec<_>>().join(",")
}

/// Error and modelled cost of `method` over `steps`.
fn study<P: Problem>(
    figure: Figure,
    problem: &P,
    t_end: f64,
    steps: &[usize],
    method: &Method,
    source: &ErrorSource<'_, P::Scalar>,
    metric: ErrorMetric,
) -> Result<Report, CliError> {
    let points = convergence_study(problem, t_end, steps, &method.cfg, source, metric)?;
    let mode = if method.parallel { CostMode::Parallel } else { CostMode::Serial };
    let weight = problem.cost_weight();

    let mut manifest = RunManifest::new(&format!("reproduce {}", figure.name()));
    manifest.param("problem", problem.name());
    for (k, v) in problem.params() {
        manifest.param(k, v);
    }
    manifest.param("method", &method.label);
    manifest.param("m", method.cfg.m());
    manifest.param("k", method.cfg.sweeps());
    manifest.param("t_end", t_end);
    manifest.param("steps", join(steps));
    manifest.param("newton_tol", format!("{:e}", method.cfg.newton_tol().unwrap_or(problem.newton_tol())));
    manifest.param("cost_mode", if method.parallel { "parallel" } else { "serial" });
    manifest.param("workers", method.cfg.workers());
    manifest.param(
        "metric",
        match metric {
            ErrorMetric::LinfTrajectory => "linf-trajectory",
            ErrorMetric::L2Final => "l2-final",
            ErrorMetric::L2FinalEuclidean => "l2-final-euclidean",
        },
    );
    let usable: Vec<(f64, f64)> = points.iter().filter(|p| p.error > ERROR_FLOOR).map(|p| (p.dt, p.error)).collect();
    if let Ok(order) = estimate_order(&usable) {
        manifest.result("fitted_order", format!("{order:.4}"));
    }

    let mut table = Table::new(["n_steps", "dt", "error", "rhs_evals", "newton_iters", "cost"]);
    for p in &points {
        let c = cost(p.counters, mode, method.cfg.m(), weight, method.parallel)?.cost;
        table.push(vec![
            p.n_steps.into(),
            p.dt.into(),
            p.error.into(),
            p.counters.rhs_evals.into(),
            p.counters.newton_iters.into(),
            c.into(),
        ]);
    }
    Ok(Report::new(manifest, table))
}

fn target(dir: &Path, figure: Figure, file: &str) -> PathBuf {
    dir.join(figure.name()).join(format!("{file}.csv"))
}

pub fn reproduce(args: &ReproduceArgs, workers: usize) -> Result<FileSet, CliError> {
    let mut files = FileSet::default();
    let fig = args.figure;
    let dir = &args.out_dir;
    match fig {
        Figure::Fig1Conv => {
            let p = dahlquist(Complex64::new(0.0, 1.0));
            let steps = pow2(4..=9);
            for (family, m) in [(NodeFamily::RadauRight, 4), (NodeFamily::Lobatto, 5)] {
                for kind in [PrecondKind::MinSrNs, PrecondKind::MinSrS, PrecondKind::MinSrFlex] {
                    for k in 1..=m {
                        let method = sdc(kind, family, m, k, workers)?;
                        let mut report = study(fig, &p, 2.0 * PI, &steps, &method, &ErrorSource::Exact, ErrorMetric::LinfTrajectory)?;
                        report.manifest.param("family", family);
                        files.write(target(dir, fig, &format!("{kind}_{family}_K{k}")), &report.render_csv())?;
                    }
                }
            }
        }
        Figure::Fig2Stab => {
            for kind in [
                PrecondKind::Pic,
                PrecondKind::MinSrNs,
                PrecondKind::MinSrS,
                PrecondKind::MinSrFlex,
                PrecondKind::Lu,
                PrecondKind::Vdhs,
            ] {
                let base = if kind == PrecondKind::MinSrS { GridSpec::wide() } else { GridSpec::default_grid() };
                let grid = GridSpec::new((base.re_min, base.re_max), (base.im_min, base.im_max), 200, 200)?;
                for k in 1..=4 {
                    let method = sdc(kind, NodeFamily::RadauRight, 4, k, 1)?;
                    let scan = scan_stability(&method.cfg, &grid);
                    let mut manifest = RunManifest::new(&format!("reproduce {}", fig.name()));
                    manifest.param("precond", kind).param("family", NodeFamily::RadauRight).param("m", 4).param("k", k);
                    manifest.param("step_value", "last-node");
                    manifest.param("grid", format!("{}:{}:{}:{}", grid.re_min, grid.re_max, grid.im_min, grid.im_max));
                    manifest.param("res", grid.nx);
                    if let Some((v, _)) = scan.max_left_half_plane() {
                        manifest.result("max_abs_r_left_half_plane", fmt_num(v));
                    }
                    let mut table = Table::new(["re", "im", "abs_r"]);
                    for iy in 0..grid.ny {
                        for ix in 0..grid.nx {
                            table.push(vec![grid.re(ix).into(), grid.im(iy).into(), Cell::Num(scan.value(ix, iy))]);
                        }
                    }
                    let report = Report::new(manifest, table);
                    files.write(target(dir, fig, &format!("{kind}_K{k}")), &report.render_csv())?;
                }
            }
        }
        Figure::Fig3Lorenz => {
            let p = lorenz();
            let t_end = p.t_end();
            let reference = reference_solution(&p, t_end, 4096)?;
            let source = ErrorSource::Reference(&reference);
            let steps = pow2(5..=10);
            let mut methods = Vec::new();
            for kind in [
                PrecondKind::Pic,
                PrecondKind::ImplicitEuler,
                PrecondKind::Lu,
                PrecondKind::Vdhs,
                PrecondKind::MinSrNs,
                PrecondKind::MinSrS,
                PrecondKind::MinSrFlex,
            ] {
                methods.push(sdc(kind, NodeFamily::RadauRight, 4, 4, workers)?);
            }
            methods.push(runge_kutta(TableauName::Rk4)?);
            methods.push(runge_kutta(TableauName::Esdirk43)?);
            for method in &methods {
                let mut report = study(fig, &p, t_end, &steps, method, &source, ErrorMetric::LinfTrajectory)?;
                report.manifest.param("reference", "radau-right-5 collocation, 4096 steps");
                files.write(target(dir, fig, &method.label), &report.render_csv())?;
            }
        }
        Figure::Fig4Prothero => {
            let p = prothero_robinson(1e-3)?;
            let t_end = p.t_end();
            let steps = pow2(2..=12);
            for k in [4, 6] {
                for kind in [
                    PrecondKind::Lu,
                    PrecondKind::Vdhs,
                    PrecondKind::MinSrNs,
                    PrecondKind::MinSrS,
                    PrecondKind::MinSrFlex,
                ] {
                    let method = sdc(kind, NodeFamily::RadauRight, 4, k, workers)?;
                    let report = study(fig, &p, t_end, &steps, &method, &ErrorSource::Exact, ErrorMetric::LinfTrajectory)?;
                    files.write(target(dir, fig, &format!("{kind}_K{k}")), &report.render_csv())?;
                }
            }
            let method = runge_kutta(TableauName::Esdirk43)?;
            let report = study(fig, &p, t_end, &steps, &method, &ErrorSource::Exact, ErrorMetric::LinfTrajectory)?;
            files.write(target(dir, fig, &method.label), &report.render_csv())?;
        }
        Figure::Fig5AllenCahn => {
            let p = allen_cahn_1d(0.04, 0.04, 2047)?;
            let t_end = p.t_end();
            let steps = [25, 50, 100, 200, 400];
            let methods = [
                sdc(PrecondKind::MinSrFlex, NodeFamily::RadauRight, 4, 4, workers)?,
                sdc(PrecondKind::MinSrS, NodeFamily::RadauRight, 4, 4, workers)?,
                sdc(PrecondKind::Lu, NodeFamily::RadauRight, 4, 4, workers)?,
                runge_kutta(TableauName::Esdirk43)?,
            ];
            for method in &methods {
                let report = study(fig, &p, t_end, &steps, method, &ErrorSource::Exact, ErrorMetric::L2FinalEuclidean)?;
                files.write(target(dir, fig, &method.label), &report.render_csv())?;
            }
        }
    }
    Ok(files)
}
