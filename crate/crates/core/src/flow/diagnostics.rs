//! Refinement studies for the flow integrators: strong error against an exact
//! solution, backward/forward round trips, scheme cross-checks and the flow
//! (cocycle) property.

use rayon::prelude::*;

use super::brownian::BrownianPaths;
use super::ensemble::mean_and_se;
use super::integrate::{flow_endpoint, integrate_path, Direction, FlowState, FlowSystem, PathOutcome, Scheme};
use crate::error::{Error, Result};
use crate::report::ConvergenceReport;

/// `coarse, coarse.refined(), …` (`levels` grids in total), all coupled.
pub fn refinement_ladder(coarse: &BrownianPaths, levels: usize) -> Result<Vec<BrownianPaths>> {
    let mut out = vec![coarse.clone()];
    for _ in 1..levels {
        let next = out.last().unwrap().refined()?;
        out.push(next);
    }
    Ok(out)
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(u, v)| (u - v).powi(2)).sum::<f64>().sqrt()
}

/// Whole-path trajectory at every grid node, or `None` if flagged.
pub fn trajectory(system: &FlowSystem, scheme: Scheme, paths: &BrownianPaths, path: usize, x0: &[f64]) -> Result<Option<Vec<FlowState>>> {
    let grid = paths.grid();
    let mut out = Vec::with_capacity(grid.steps() + 1);
    let outcome = integrate_path(
        system,
        scheme,
        Direction::Forward,
        grid,
        paths.path(path),
        paths.drivers(),
        x0,
        (0, grid.steps()),
        |_, s| out.push(s.clone()),
    )?;
    Ok(matches!(outcome, PathOutcome::Completed).then_some(out))
}

/// Strong error `E[max_j |X_j − X(t_j)|]` against an exact solution
/// `exact(W values of the path, node, x0)` over a ladder of coupled grids.
pub fn strong_error_sweep<E>(
    system: &FlowSystem,
    scheme: Scheme,
    ladder: &[BrownianPaths],
    x0: &[f64],
    exact: E,
) -> Result<ConvergenceReport>
where
    E: Fn(&[Vec<f64>], usize, &[f64]) -> Vec<f64> + Sync,
{
    let mut report = ConvergenceReport::new("strong-error", "dt", &["paths"]);
    for paths in ladder {
        let errs: Vec<Option<f64>> = (0..paths.n_paths())
            .into_par_iter()
            .map(|p| -> Result<Option<f64>> {
                let Some(traj) = trajectory(system, scheme, paths, p, x0)? else {
                    return Ok(None);
                };
                let w: Vec<Vec<f64>> = (0..paths.drivers()).map(|d| paths.brownian_values(p, d)).collect();
                Ok(Some(
                    traj.iter()
                        .enumerate()
                        .map(|(j, s)| dist(&s.x, &exact(&w, j, x0)))
                        .fold(0.0, f64::max),
                ))
            })
            .collect::<Result<_>>()?;
        let kept: Vec<f64> = errs.into_iter().flatten().collect();
        if kept.is_empty() {
            return Err(Error::EmptyEnsemble);
        }
        let (mean, se) = mean_and_se(&kept);
        report.push(paths.grid().dt(0), mean, se, vec![kept.len() as f64]);
    }
    report.fit();
    Ok(report)
}

/// Round-trip error `max |φ_{T,0}(φ_{0,T}(x)) − x|` over paths and points.
pub fn round_trip_sweep(system: &FlowSystem, scheme: Scheme, ladder: &[BrownianPaths], x0s: &[Vec<f64>]) -> Result<ConvergenceReport> {
    let mut report = ConvergenceReport::new("round-trip", "dt", &["paths"]);
    for paths in ladder {
        let grid = paths.grid();
        let errs: Vec<f64> = (0..paths.n_paths())
            .into_par_iter()
            .map(|p| -> Result<f64> {
                let mut worst = 0.0f64;
                for x0 in x0s {
                    let inc = paths.path(p);
                    let fwd = flow_endpoint(system, scheme, Direction::Forward, grid, inc, paths.drivers(), x0)?;
                    let Some(fwd) = fwd else { return Ok(f64::NAN) };
                    let back = flow_endpoint(system, scheme, Direction::Backward, grid, inc, paths.drivers(), &fwd.x)?;
                    worst = worst.max(back.map_or(f64::NAN, |b| dist(&b.x, x0)));
                }
                Ok(worst)
            })
            .collect::<Result<_>>()?;
        let kept: Vec<f64> = errs.into_iter().filter(|e| e.is_finite()).collect();
        if kept.is_empty() {
            return Err(Error::EmptyEnsemble);
        }
        report.push(grid.dt(0), kept.iter().cloned().fold(0.0, f64::max), 0.0, vec![kept.len() as f64]);
    }
    report.fit();
    Ok(report)
}

/// Pathwise `max_j |X^a_j − X^b_j|` between two schemes, maximised over paths.
pub fn scheme_discrepancy_sweep(
    system: &FlowSystem,
    a: Scheme,
    b: Scheme,
    ladder: &[BrownianPaths],
    x0: &[f64],
) -> Result<ConvergenceReport> {
    let mut report = ConvergenceReport::new("scheme-discrepancy", "dt", &["paths"]);
    for paths in ladder {
        let errs: Vec<f64> = (0..paths.n_paths())
            .into_par_iter()
            .map(|p| -> Result<f64> {
                let (Some(ta), Some(tb)) = (trajectory(system, a, paths, p, x0)?, trajectory(system, b, paths, p, x0)?) else {
                    return Ok(f64::NAN);
                };
                Ok(ta.iter().zip(&tb).map(|(u, v)| dist(&u.x, &v.x)).fold(0.0, f64::max))
            })
            .collect::<Result<_>>()?;
        let kept: Vec<f64> = errs.into_iter().filter(|e| e.is_finite()).collect();
        if kept.is_empty() {
            return Err(Error::EmptyEnsemble);
        }
        let (mean, se) = mean_and_se(&kept);
        report.push(paths.grid().dt(0), mean, se, vec![kept.len() as f64]);
    }
    report.fit();
    Ok(report)
}

/// `|φ_{s,r}(x) − φ_{t,r}(φ_{s,t}(x))|` for grid nodes `s < t < r`, along one path.
#[allow(clippy::too_many_arguments)]
pub fn flow_property_gap(
    system: &FlowSystem,
    scheme: Scheme,
    paths: &BrownianPaths,
    path: usize,
    x0: &[f64],
    s: usize,
    t: usize,
    r: usize,
) -> Result<f64> {
    if !(s < t && t < r) {
        return Err(Error::InvalidParameter("need s < t < r".into()));
    }
    let grid = paths.grid();
    let inc = paths.path(path);
    let d = paths.drivers();
    let end = |x: &[f64], w: (usize, usize)| -> Result<Vec<f64>> {
        let mut last = x.to_vec();
        match integrate_path(system, scheme, Direction::Forward, grid, inc, d, x, w, |_, st| last = st.x.clone())? {
            PathOutcome::Completed => Ok(last),
            PathOutcome::Flagged(k) => Err(Error::InvalidParameter(format!("trajectory flagged at step {k}"))),
        }
    };
    let direct = end(x0, (s, r))?;
    let mid = end(x0, (s, t))?;
    let composed = end(&mid, (t, r))?;
    Ok(dist(&direct, &composed))
}
