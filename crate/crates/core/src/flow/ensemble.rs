//! Trajectory ensembles, Jacobian moments and coupled convergence sweeps.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::Serialize;

use super::brownian::BrownianPaths;
use super::integrate::{integrate_path, Direction, FlowState, FlowSystem, PathOutcome, Scheme};
use crate::calculus::field::VectorField;
use crate::error::{Error, Result};
use crate::report::{decreasing_in_trend, fmt_num, ConvergenceReport};

/// Which grid nodes an ensemble keeps.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Record {
    All,
    /// Every `m`-th node counted from the starting node, plus the last node.
    Stride(usize),
    Final,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EnsembleOptions {
    pub scheme: Scheme,
    pub record: Record,
}

impl Default for EnsembleOptions {
    fn default() -> Self {
        EnsembleOptions {
            scheme: Scheme::Heun,
            record: Record::All,
        }
    }
}

/// Trajectories of a set of initial points along every Brownian path.
///
/// For backward ensembles the initial points sit at the final time and the
/// recorded nodes run from the final time down to zero.
#[derive(Clone, Debug)]
pub struct FlowEnsemble {
    n: usize,
    direction: Direction,
    scheme: Scheme,
    initial_points: Vec<Vec<f64>>,
    /// Grid node index of each recorded slot, in integration order.
    nodes: Vec<usize>,
    times: Vec<f64>,
    /// `[path][slot][point]` states; empty rows for flagged paths.
    states: Vec<Vec<Vec<FlowState>>>,
    flagged: Vec<Option<usize>>,
}

fn recorded_nodes(steps: usize, record: Record, direction: Direction) -> Vec<usize> {
    let mut fwd: Vec<usize> = match record {
        Record::All => (0..=steps).collect(),
        Record::Final => vec![0, steps],
        Record::Stride(m) => {
            let m = m.max(1);
            let mut v: Vec<usize> = (0..=steps).step_by(m).collect();
            if *v.last().unwrap() != steps {
                v.push(steps);
            }
            v
        }
    };
    if direction == Direction::Backward {
        fwd = fwd.into_iter().map(|i| steps - i).collect();
    }
    fwd
}

fn run_ensemble(
    system: &FlowSystem,
    paths: &BrownianPaths,
    x0s: &[Vec<f64>],
    opts: EnsembleOptions,
    direction: Direction,
) -> Result<FlowEnsemble> {
    let grid = paths.grid();
    let steps = grid.steps();
    let nodes = recorded_nodes(steps, opts.record, direction);
    let mut slot_of = vec![usize::MAX; steps + 1];
    for (s, &node) in nodes.iter().enumerate() {
        slot_of[node] = s;
    }
    let rows: Vec<Result<(Vec<Vec<FlowState>>, Option<usize>)>> = (0..paths.n_paths())
        .into_par_iter()
        .map(|p| {
            let mut slots = vec![Vec::with_capacity(x0s.len()); nodes.len()];
            for x0 in x0s {
                let outcome = integrate_path(
                    system,
                    opts.scheme,
                    direction,
                    grid,
                    paths.path(p),
                    paths.drivers(),
                    x0,
                    (0, steps),
                    |node, state| {
                        let s = slot_of[node];
                        if s != usize::MAX {
                            slots[s].push(state.clone());
                        }
                    },
                )?;
                if let PathOutcome::Flagged(step) = outcome {
                    return Ok((Vec::new(), Some(step)));
                }
            }
            Ok((slots, None))
        })
        .collect();
    let mut states = Vec::with_capacity(rows.len());
    let mut flagged = Vec::with_capacity(rows.len());
    for r in rows {
        let (s, f) = r?;
        states.push(s);
        flagged.push(f);
    }
    Ok(FlowEnsemble {
        n: system.n(),
        direction,
        scheme: opts.scheme,
        initial_points: x0s.to_vec(),
        times: nodes.iter().map(|&i| grid.times()[i]).collect(),
        nodes,
        states,
        flagged,
    })
}

/// Forward flow `φ_{0,t}(x)` with Jacobians along every path.
pub fn integrate_flow(system: &FlowSystem, paths: &BrownianPaths, x0s: &[Vec<f64>], opts: EnsembleOptions) -> Result<FlowEnsemble> {
    run_ensemble(system, paths, x0s, opts, Direction::Forward)
}

/// Backward flow `φ_{t,T}^{-1}` started at `x0s` at the final time, integrated
/// with negated fields against the reversed increments.
pub fn integrate_backward_flow(
    system: &FlowSystem,
    paths: &BrownianPaths,
    x0s: &[Vec<f64>],
    opts: EnsembleOptions,
) -> Result<FlowEnsemble> {
    run_ensemble(system, paths, x0s, opts, Direction::Backward)
}

impl FlowEnsemble {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn direction(&self) -> Direction {
        self.direction
    }

    pub fn scheme(&self) -> Scheme {
        self.scheme
    }

    pub fn initial_points(&self) -> &[Vec<f64>] {
        &self.initial_points
    }

    /// Recorded times, in integration order.
    pub fn times(&self) -> &[f64] {
        &self.times
    }

    /// Grid node index of each recorded slot.
    pub fn nodes(&self) -> &[usize] {
        &self.nodes
    }

    pub fn n_paths(&self) -> usize {
        self.states.len()
    }

    pub fn is_flagged(&self, path: usize) -> bool {
        self.flagged[path].is_some()
    }

    pub fn flagged_count(&self) -> usize {
        self.flagged.iter().filter(|f| f.is_some()).count()
    }

    pub fn retained_paths(&self) -> Vec<usize> {
        (0..self.n_paths()).filter(|&p| !self.is_flagged(p)).collect()
    }

    /// Fails if more than 1% of the paths were flagged.
    pub fn check_flag_budget(&self) -> Result<()> {
        let flagged = self.flagged_count();
        if flagged * 100 > self.n_paths() {
            return Err(Error::TooManyFlagged {
                flagged,
                total: self.n_paths(),
            });
        }
        Ok(())
    }

    /// State of `point` at recorded `slot` along `path` (`None` if flagged).
    pub fn state(&self, path: usize, slot: usize, point: usize) -> Option<&FlowState> {
        self.states[path].get(slot).map(|s| &s[point])
    }

    pub fn final_state(&self, path: usize, point: usize) -> Option<&FlowState> {
        self.state(path, self.nodes.len() - 1, point)
    }

    /// Slot holding grid node `node`.
    pub fn slot_of_node(&self, node: usize) -> Option<usize> {
        self.nodes.iter().position(|&i| i == node)
    }

    /// CSV rows `path_id, t, x…, Dphi…, J` for every retained path.
    pub fn to_csv_string(&self) -> String {
        let n = self.n;
        let mut wtr = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["path".to_string(), "point".into(), "t".into()];
        header.extend((0..n).map(|i| format!("x{}", i + 1)));
        for i in 0..n {
            for j in 0..n {
                header.push(format!("dphi{}{}", i + 1, j + 1));
            }
        }
        header.push("J".into());
        wtr.write_record(&header).expect("in-memory csv");
        for p in self.retained_paths() {
            for (slot, &t) in self.times.iter().enumerate() {
                for (pt, s) in self.states[p][slot].iter().enumerate() {
                    let mut rec = vec![p.to_string(), pt.to_string(), fmt_num(t)];
                    rec.extend(s.x.iter().map(|v| fmt_num(*v)));
                    rec.extend(s.jac.iter().map(|v| fmt_num(*v)));
                    rec.push(fmt_num(s.det()));
                    wtr.write_record(&rec).expect("in-memory csv");
                }
            }
        }
        String::from_utf8(wtr.into_inner().expect("flush")).expect("utf-8")
    }
}

/// Largest singular value of a row-major `n×n` matrix.
pub fn operator_norm(m: &[f64], n: usize) -> f64 {
    if n == 1 {
        return m[0].abs();
    }
    DMatrix::from_row_slice(n, n, m).singular_values().max()
}

/// Monte Carlo mean with its standard error.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct MomentEstimate {
    pub value: f64,
    pub std_error: f64,
    /// Initial point attaining the supremum.
    pub point: usize,
    pub paths: usize,
}

pub fn mean_and_se(samples: &[f64]) -> (f64, f64) {
    let m = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / m;
    if samples.len() < 2 {
        return (mean, f64::INFINITY);
    }
    let var = samples.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (m - 1.0);
    (mean, (var / m).sqrt())
}

/// `sup_x E[sup_t |Dφ(x)|^p]` (operator norm, recorded nodes as the time sup).
pub fn jacobian_moments(ens: &FlowEnsemble, p: f64) -> Result<MomentEstimate> {
    if p < 1.0 {
        return Err(Error::InvalidExponent(p));
    }
    let kept = ens.retained_paths();
    if kept.is_empty() || ens.initial_points.is_empty() {
        return Err(Error::EmptyEnsemble);
    }
    let n = ens.n;
    let mut best = MomentEstimate {
        value: f64::NEG_INFINITY,
        std_error: 0.0,
        point: 0,
        paths: kept.len(),
    };
    for pt in 0..ens.initial_points.len() {
        let samples: Vec<f64> = kept
            .iter()
            .map(|&path| {
                ens.states[path]
                    .iter()
                    .map(|slot| operator_norm(&slot[pt].jac, n).powf(p))
                    .fold(0.0, f64::max)
            })
            .collect();
        let (mean, se) = mean_and_se(&samples);
        if mean > best.value {
            best = MomentEstimate {
                value: mean,
                std_error: se,
                point: pt,
                paths: kept.len(),
            };
        }
    }
    Ok(best)
}

/// `sup_x E[sup_t |a − b|^p]` for positions and operator-norm Jacobian
/// differences between two ensembles on the same paths and points.
pub fn coupled_distance(a: &FlowEnsemble, b: &FlowEnsemble, p: f64) -> Result<(MomentEstimate, MomentEstimate)> {
    if a.n_paths() != b.n_paths() || a.initial_points.len() != b.initial_points.len() || a.nodes != b.nodes {
        return Err(Error::ShapeMismatch("ensembles are not coupled".into()));
    }
    let kept: Vec<usize> = (0..a.n_paths()).filter(|&q| !a.is_flagged(q) && !b.is_flagged(q)).collect();
    if kept.is_empty() {
        return Err(Error::EmptyEnsemble);
    }
    let n = a.n;
    let mut pos = MomentEstimate {
        value: f64::NEG_INFINITY,
        std_error: 0.0,
        point: 0,
        paths: kept.len(),
    };
    let mut jac = pos;
    for pt in 0..a.initial_points.len() {
        let mut sp = Vec::with_capacity(kept.len());
        let mut sj = Vec::with_capacity(kept.len());
        for &q in &kept {
            let mut mp = 0.0f64;
            let mut mj = 0.0f64;
            for (sa, sb) in a.states[q].iter().zip(&b.states[q]) {
                let (x, y) = (&sa[pt], &sb[pt]);
                let d: f64 = x.x.iter().zip(&y.x).map(|(u, v)| (u - v).powi(2)).sum::<f64>().sqrt();
                let dj: Vec<f64> = x.jac.iter().zip(&y.jac).map(|(u, v)| u - v).collect();
                mp = mp.max(d.powf(p));
                mj = mj.max(operator_norm(&dj, n).powf(p));
            }
            sp.push(mp);
            sj.push(mj);
        }
        let (m, se) = mean_and_se(&sp);
        if m > pos.value {
            pos = MomentEstimate {
                value: m,
                std_error: se,
                point: pt,
                paths: kept.len(),
            };
        }
        let (m, se) = mean_and_se(&sj);
        if m > jac.value {
            jac = MomentEstimate {
                value: m,
                std_error: se,
                point: pt,
                paths: kept.len(),
            };
        }
    }
    Ok((pos, jac))
}

/// Result of [`flow_convergence_sweep`].
#[derive(Clone, Debug, Serialize)]
pub struct FlowSweep {
    /// Rows: parameter, position error, extras `jacobian_error`, `position_se`.
    pub report: ConvergenceReport,
    pub decreasing: bool,
}

/// Coupled errors `sup_x E[sup_t |φⁿ − φ|^p]` (and the `Dφ` analogue) of a
/// sequence of drifts against a reference drift, all driven by the same paths.
/// Without an explicit reference the last member is the reference and is not
/// itself reported.
#[allow(clippy::too_many_arguments)]
pub fn flow_convergence_sweep(
    b_sequence: &[VectorField],
    parameters: &[f64],
    reference: Option<&VectorField>,
    xis: &[VectorField],
    paths: &BrownianPaths,
    x0s: &[Vec<f64>],
    p: f64,
    opts: EnsembleOptions,
) -> Result<FlowSweep> {
    if b_sequence.len() < 3 {
        return Err(Error::SweepTooShort {
            needed: 3,
            got: b_sequence.len(),
        });
    }
    if parameters.len() != b_sequence.len() {
        return Err(Error::ShapeMismatch("one parameter per drift".into()));
    }
    let (members, reference) = match reference {
        Some(r) => (b_sequence, r),
        None => (&b_sequence[..b_sequence.len() - 1], &b_sequence[b_sequence.len() - 1]),
    };
    let ref_ens = integrate_flow(&FlowSystem::new(reference.clone(), xis.to_vec())?, paths, x0s, opts)?;
    ref_ens.check_flag_budget()?;
    let mut report = ConvergenceReport::new("flow-convergence", "parameter", &["jacobian_error", "position_se"]);
    for (b, &param) in members.iter().zip(parameters) {
        let ens = integrate_flow(&FlowSystem::new(b.clone(), xis.to_vec())?, paths, x0s, opts)?;
        ens.check_flag_budget()?;
        let (pos, jac) = coupled_distance(&ens, &ref_ens, p)?;
        report.push(param, pos.value, pos.std_error, vec![jac.value, pos.std_error]);
    }
    report.fit();
    let decreasing = decreasing_in_trend(&report.abs_values());
    report.passed = decreasing;
    Ok(FlowSweep { report, decreasing })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::Expr;
    use crate::flow::brownian::TimeGrid;

    #[test]
    fn trivial_flow_has_unit_moments() {
        let sys = FlowSystem::new(
            VectorField::constant(&[0.3, 0.1]).unwrap(),
            vec![VectorField::constant(&[1.0, 0.5]).unwrap()],
        )
        .unwrap();
        let paths = BrownianPaths::generate(1, &TimeGrid::uniform(1.0, 8).unwrap(), 1, 16).unwrap();
        let ens = integrate_flow(&sys, &paths, &[vec![0.0, 0.0], vec![1.0, 1.0]], EnsembleOptions::default()).unwrap();
        for p in [1.0, 2.0, 4.0] {
            let m = jacobian_moments(&ens, p).unwrap();
            assert!((m.value - 1.0).abs() < 1e-14);
        }
        assert_eq!(jacobian_moments(&ens, 0.5).unwrap_err(), Error::InvalidExponent(0.5));
    }

    #[test]
    fn linear_drift_moment_is_exponential_norm() {
        let a = [0.5, 1.0, 0.0, -0.2];
        let sys = FlowSystem::deterministic(VectorField::linear(&a, 2).unwrap()).unwrap();
        let paths = BrownianPaths::zero(0, &TimeGrid::uniform(1.0, 256).unwrap(), 2);
        let ens = integrate_flow(&sys, &paths, &[vec![0.2, 0.1]], EnsembleOptions::default()).unwrap();
        let m = jacobian_moments(&ens, 2.0).unwrap();
        let exact = (0..=256)
            .map(|i| {
                let e = (DMatrix::from_row_slice(2, 2, &a) * (i as f64 / 256.0)).exp();
                e.singular_values().max().powi(2)
            })
            .fold(0.0, f64::max);
        assert!((m.value / exact - 1.0).abs() < 1e-4, "{} {exact}", m.value);
    }

    #[test]
    fn backward_ensemble_records_reverse_time() {
        let sys = FlowSystem::deterministic(VectorField::constant(&[1.0]).unwrap()).unwrap();
        let paths = BrownianPaths::zero(0, &TimeGrid::uniform(1.0, 4).unwrap(), 1);
        let ens = integrate_backward_flow(&sys, &paths, &[vec![1.0]], EnsembleOptions::default()).unwrap();
        assert_eq!(ens.times(), &[1.0, 0.75, 0.5, 0.25, 0.0]);
        assert!(ens.final_state(0, 0).unwrap().x[0].abs() < 1e-15);
    }

    #[test]
    fn identical_sequence_has_zero_errors() {
        let b = VectorField::new(vec![Expr::var(0).sin()]).unwrap();
        let xi = VectorField::constant(&[0.5]).unwrap();
        let paths = BrownianPaths::generate(1, &TimeGrid::uniform(1.0, 16).unwrap(), 4, 8).unwrap();
        let sweep = flow_convergence_sweep(
            &[b.clone(), b.clone(), b.clone()],
            &[0.3, 0.2, 0.1],
            Some(&b),
            &[xi],
            &paths,
            &[vec![0.1]],
            2.0,
            EnsembleOptions::default(),
        )
        .unwrap();
        assert!(sweep.report.values().iter().all(|&v| v == 0.0));
        let short = flow_convergence_sweep(
            std::slice::from_ref(&b),
            &[0.1],
            None,
            &[],
            &paths,
            &[vec![0.1]],
            2.0,
            EnsembleOptions::default(),
        );
        assert!(matches!(short, Err(Error::SweepTooShort { .. })));
    }

    #[test]
    fn flagged_paths_are_counted() {
        // x' = x² blows up before t = 1 from x = 2.
        let b = VectorField::new(vec![Expr::var(0) * Expr::var(0)]).unwrap();
        let sys = FlowSystem::deterministic(b).unwrap();
        let paths = BrownianPaths::zero(0, &TimeGrid::uniform(1.0, 64).unwrap(), 3);
        let ens = integrate_flow(&sys, &paths, &[vec![2.0]], EnsembleOptions::default()).unwrap();
        assert_eq!(ens.flagged_count(), 3);
        assert!(matches!(ens.check_flag_budget(), Err(Error::TooManyFlagged { .. })));
        assert_eq!(jacobian_moments(&ens, 2.0).unwrap_err(), Error::EmptyEnsemble);
    }
}
