//! The nine scenarios. Each turns a config into verdicts plus CSV/JSON
//! reports; nothing here touches the file system.

use std::f64::consts::FRAC_PI_2;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::json;

use super::config::{Scenario, ScenarioConfig};
use super::output::{verdict_table, Artifacts, Table, Verdict};
use crate::advection::{
    conservation_check, kiw_residual, kiw_transport_gap, specialization_suite, weak_residual_sweep, AffineSimplexSpec, Chain, Coupling,
    KiwProcess, SpecializationSettings,
};
use crate::calculus::identities::{identity_suite, random_test_form, random_trig_field, random_trig_form, IdentitySettings};
use crate::calculus::{KFormField, QuadratureGrid, Rule, TestForm, VectorField};
use crate::counterexample::{
    characteristic_residual_sweep, counterexample_study, falsifiability_control, holder_probe_stability, noise_selection_experiment,
    GammaSelection, HolderDrift, NoiseSelectionSettings, PolarQuadrature,
};
use crate::error::{Error, Result};
use crate::expr::Expr;
use crate::flow::{
    flow_convergence_sweep, integrate_flow, jacobian_moments, refinement_ladder, round_trip_sweep, strong_error_sweep, BrownianPaths,
    EnsembleOptions, FlowSystem, Scheme, TimeGrid,
};
use crate::mollifier::{epsilon_sweep, mollify_vector, CommutatorKind, CommutatorSettings, Mollifier, MollifyRoute};
use crate::registry::{ChainSpec, FieldSpec, FormSpec, ScalarSpec, TestSpec};
use crate::report::{fmt_num, ConvergenceReport};

/// Verdicts and report files of one scenario run.
#[derive(Clone, Debug, Default)]
pub struct Outcome {
    pub verdicts: Vec<Verdict>,
    pub artifacts: Artifacts,
}

impl Outcome {
    pub fn passed(&self) -> bool {
        self.verdicts.iter().all(|v| v.passed)
    }

    fn report(&mut self, name: &str, r: &ConvergenceReport) {
        self.artifacts.insert(format!("{name}.csv"), r.to_csv_string().into_bytes());
    }
}

const DEFAULT_EPS: [f64; 4] = [0.2, 0.1, 0.05, 0.025];

fn coord(i: usize) -> ScalarSpec {
    ScalarSpec::Coordinate { index: i }
}

fn scaled(factor: f64, of: ScalarSpec) -> ScalarSpec {
    ScalarSpec::Scale { factor, of: Box::new(of) }
}

fn sin_of(n: usize, axis: usize, phase: f64) -> ScalarSpec {
    let mut wavevector = vec![0.0; n];
    wavevector[axis] = 1.0;
    ScalarSpec::Trigonometric {
        wavevector,
        phase,
        amplitude: 1.0,
    }
}

fn cos_of(n: usize, axis: usize) -> ScalarSpec {
    sin_of(n, axis, FRAC_PI_2)
}

/// Smooth drift `(0.8 x₂, −0.6 sin x₁, …)` (cyclic in higher dimensions).
fn default_smooth_drift(n: usize, a: f64, b: f64) -> FieldSpec {
    if n == 1 {
        return FieldSpec::Components {
            components: vec![scaled(b, sin_of(1, 0, 0.0))],
        };
    }
    FieldSpec::Components {
        components: (0..n)
            .map(|i| {
                if i % 2 == 0 {
                    scaled(a, coord((i + 1) % n))
                } else {
                    scaled(b, sin_of(n, (i + n - 1) % n, 0.0))
                }
            })
            .collect(),
    }
}

/// Smooth noise `(0.4, 0.3 cos x₁, …)`.
fn default_smooth_noise(n: usize) -> FieldSpec {
    FieldSpec::Components {
        components: (0..n)
            .map(|i| {
                if i % 2 == 0 {
                    ScalarSpec::Constant { value: 0.4 }
                } else {
                    scaled(0.3, cos_of(n, i - 1))
                }
            })
            .collect(),
    }
}

fn unit_noise(n: usize, amplitude: f64) -> Vec<FieldSpec> {
    (0..n)
        .map(|d| {
            let mut value = vec![0.0; n];
            value[d] = amplitude;
            FieldSpec::Constant { value }
        })
        .collect()
}

fn build_noise(cfg: &ScenarioConfig, default: Vec<FieldSpec>) -> Result<Vec<VectorField>> {
    cfg.noise.clone().unwrap_or(default).iter().map(|f| f.build(cfg.n())).collect()
}

fn time_ladder(cfg: &ScenarioConfig, t_end: f64, steps: usize, levels: usize) -> (f64, usize, usize) {
    let t = cfg.time.clone().unwrap_or_default();
    (t.t_end.unwrap_or(t_end), t.steps.unwrap_or(steps), t.levels.unwrap_or(levels))
}

fn rate(r: &ConvergenceReport) -> f64 {
    r.slope.unwrap_or(f64::NAN)
}

fn rate_verdict(name: &str, r: &mut ConvergenceReport, min: f64) -> Verdict {
    r.judge_rate(min);
    Verdict::at_least(name, rate(r), min)
}

pub fn calculus_identities(cfg: &ScenarioConfig) -> Result<Outcome> {
    let s = IdentitySettings {
        seed: cfg.seed,
        cases: cfg.param_usize("cases"),
        probes: cfg.param_usize("probes"),
        max_dim: cfg.param_usize("max_dim"),
        max_quadrature_dim: cfg.param_usize("max_quadrature_dim"),
        tolerance: cfg.param_f64("tolerance"),
    };
    let checks = identity_suite(&s)?;
    let mut out = Outcome::default();
    let mut t = Table::new(&["identity", "cases", "max_residual", "tolerance", "passed"]);
    for c in &checks {
        t.row(vec![
            c.name.clone(),
            c.cases.to_string(),
            fmt_num(c.max_residual),
            fmt_num(c.tolerance),
            c.passed.to_string(),
        ]);
        out.verdicts.push(Verdict::at_most(&c.name, c.max_residual, c.tolerance));
    }
    out.artifacts.insert("identities.csv", t.finish()?);
    out.artifacts.json("summary.json", &checks);
    Ok(out)
}

#[derive(Serialize)]
struct SweepSummary {
    case: usize,
    kind: &'static str,
    slope: Option<f64>,
    fitted_constant: f64,
    bound_holds: bool,
    decay_ratio: f64,
}

pub fn commutator_sweep(cfg: &ScenarioConfig) -> Result<Outcome> {
    let (n, k) = (cfg.n(), cfg.k());
    let eps = cfg.eps_list.clone().unwrap_or(DEFAULT_EPS.to_vec());
    let settings = CommutatorSettings {
        grid_points: cfg.param_usize("grid_points"),
        panel_order: cfg.param_usize("panel_order"),
        kernel_points: cfg.param_usize("kernel_points"),
        ball_points: cfg.param_usize("ball_points"),
        ..Default::default()
    };
    let control_tol = cfg.param_f64("control_tolerance");
    let decay_tol = cfg.param_f64("decay_ratio");
    let drift = cfg.drift.as_ref().map(|f| f.build(n)).transpose()?;
    let noise = cfg.noise.as_ref().and_then(|v| v.first()).map(|f| f.build(n)).transpose()?;
    let initial = cfg.initial.as_ref().map(|f| f.build(n, k)).transpose()?;
    let test = cfg.test.as_ref().map(|t| t.build(n, k)).transpose()?;

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut table = Table::new(&[
        "case",
        "kind",
        "epsilon",
        "value",
        "abs_value",
        "bound_rhs",
        "fitted_constant",
        "error_estimate",
    ]);
    let mut summaries = Vec::new();
    let mut first_case: Option<(KFormField, TestForm)> = None;
    // Worst decay ratio, number of cases violating the bound, largest |value|.
    let mut worst = [(0.0f64, 0usize, 0.0f64); 2];
    for case in 0..cfg.param_usize("cases") {
        // Draw every random piece so that overriding one leaves the others unchanged.
        let rb = random_trig_field(n, 2, &mut rng)?;
        let rxi = random_trig_field(n, 2, &mut rng)?;
        let rk = random_trig_form(n, k, 2, &mut rng)?;
        let rtheta = random_test_form(n, k, &mut rng)?;
        let b = drift.clone().unwrap_or(rb);
        let xi = noise.clone().unwrap_or(rxi);
        let kf = initial.clone().unwrap_or(rk);
        let theta = test.clone().unwrap_or(rtheta);
        for (slot, kind, label) in [
            (0, CommutatorKind::Drift(b), "drift"),
            (1, CommutatorKind::DoubleNoise(xi), "double-noise"),
        ] {
            let sweep = epsilon_sweep(&kind, &kf, &theta, &settings, &eps, control_tol)?;
            for e in &sweep.evaluations {
                table.row(vec![
                    case.to_string(),
                    label.into(),
                    fmt_num(e.epsilon),
                    fmt_num(e.value),
                    fmt_num(e.value.abs()),
                    fmt_num(e.bound_rhs),
                    fmt_num(sweep.fitted_constant),
                    fmt_num(e.error_estimate),
                ]);
            }
            let w = &mut worst[slot];
            w.0 = w.0.max(sweep.decay_ratio);
            w.1 += usize::from(!sweep.bound_holds);
            w.2 = w.2.max(sweep.report.abs_values().into_iter().fold(0.0, f64::max));
            summaries.push(SweepSummary {
                case,
                kind: label,
                slope: sweep.report.slope,
                fitted_constant: sweep.fitted_constant,
                bound_holds: sweep.bound_holds,
                decay_ratio: sweep.decay_ratio,
            });
        }
        first_case.get_or_insert((kf, theta));
    }
    let mut out = Outcome::default();
    let constant = [
        cfg.drift.as_ref().is_some_and(|f| f.is_constant()),
        cfg.noise.as_ref().and_then(|v| v.first()).is_some_and(|f| f.is_constant()),
    ];
    for (slot, label) in [(0, "drift"), (1, "double-noise")] {
        let (decay, violations, largest) = worst[slot];
        if constant[slot] {
            out.verdicts
                .push(Verdict::at_most(&format!("{label}-constant-field"), largest, control_tol));
        } else {
            out.verdicts
                .push(Verdict::at_most(&format!("{label}-decay-ratio"), decay, decay_tol));
            out.verdicts
                .push(Verdict::at_most(&format!("{label}-bound-violations"), violations as f64, 0.0));
        }
    }
    if let Some((kf, theta)) = first_case {
        let c: Vec<f64> = (0..n).map(|i| 0.7 - 0.3 * i as f64).collect();
        let cf = VectorField::constant(&c)?;
        let mut largest = 0.0f64;
        for kind in [CommutatorKind::Drift(cf.clone()), CommutatorKind::DoubleNoise(cf)] {
            let sweep = epsilon_sweep(&kind, &kf, &theta, &settings, &eps, control_tol)?;
            largest = largest.max(sweep.report.abs_values().into_iter().fold(0.0, f64::max));
        }
        out.verdicts.push(Verdict::at_most("translation-control", largest, control_tol));
    }
    out.artifacts.insert("commutators.csv", table.finish()?);
    out.artifacts.json("summary.json", &summaries);
    Ok(out)
}

pub fn flow_convergence(cfg: &ScenarioConfig, dump_paths: bool) -> Result<Outcome> {
    let n = cfg.n();
    let drift = cfg
        .drift
        .clone()
        .unwrap_or(FieldSpec::RadialHolder { alpha: 0.5, r_cut: 10.0 })
        .build(n)?;
    let xis = build_noise(cfg, unit_noise(n, 1.0))?;
    let eps = cfg.eps_list.clone().unwrap_or(DEFAULT_EPS.to_vec());
    let (t_end, steps, _) = time_ladder(cfg, 1.0, 64, 0);
    let n_paths = cfg.n_paths.unwrap_or(64);
    let grid = TimeGrid::uniform(t_end, steps)?;
    let paths = BrownianPaths::generate(xis.len(), &grid, cfg.seed, n_paths)?;
    let rule_points = cfg.param_usize("rule_points");
    let b_seq: Vec<VectorField> = eps
        .iter()
        .map(|&e| mollify_vector(&drift, &Mollifier::new(n, e)?.rule(rule_points)?, MollifyRoute::Kernel))
        .collect::<Result<_>>()?;
    let x0s = vec![vec![0.0; n], (0..n).map(|i| if i == 0 { 0.3 } else { -0.2 }).collect()];
    let opts = EnsembleOptions::default();
    let mut sweep = flow_convergence_sweep(&b_seq, &eps, Some(&drift), &xis, &paths, &x0s, cfg.param_f64("p"), opts)?;
    let mut out = Outcome::default();
    out.verdicts
        .push(Verdict::flag("coupled-errors-decreasing", sweep.decreasing, rate(&sweep.report)));
    sweep.report.parameter_name = "epsilon".into();
    sweep.report.note("reference: unmollified drift on the same paths");
    out.report("coupled_errors", &sweep.report);

    // Jacobian moments of the smoothest member under path doubling.
    let sys = FlowSystem::new(b_seq[b_seq.len() - 1].clone(), xis.clone())?;
    let doubled = BrownianPaths::generate(xis.len(), &grid, cfg.seed, 2 * n_paths)?;
    let coarse = integrate_flow(&sys, &paths, &x0s, opts)?;
    let fine = integrate_flow(&sys, &doubled, &x0s, opts)?;
    let allowed = cfg.param_f64("moment_ratio");
    let mut mt = Table::new(&[
        "p",
        "paths",
        "moment",
        "std_error",
        "paths_doubled",
        "moment_doubled",
        "std_error_doubled",
        "ratio",
    ]);
    let mut moments = Vec::new();
    for p in [2.0, 4.0] {
        let a = jacobian_moments(&coarse, p)?;
        let b = jacobian_moments(&fine, p)?;
        let ratio = (a.value / b.value).max(b.value / a.value);
        mt.row(vec![
            fmt_num(p),
            a.paths.to_string(),
            fmt_num(a.value),
            fmt_num(a.std_error),
            b.paths.to_string(),
            fmt_num(b.value),
            fmt_num(b.std_error),
            fmt_num(ratio),
        ]);
        out.verdicts
            .push(Verdict::at_most(&format!("jacobian-moment-p{p}-stable"), ratio, allowed));
        moments.push(json!({ "p": p, "paths": a, "paths_doubled": b, "ratio": ratio }));
    }
    out.artifacts.insert("jacobian_moments.csv", mt.finish()?);

    if dump_paths {
        let reference = integrate_flow(&FlowSystem::new(drift.clone(), xis.clone())?, &paths, &x0s, opts)?;
        out.artifacts.insert("paths.csv", reference.to_csv_string().into_bytes());
    }

    if cfg.param_bool("integrator_checks") {
        let min_rate = cfg.param_f64("strong_rate");
        let ip = cfg.param_usize("integrator_paths");
        // Geometric Stratonovich benchmark dX = X ∘ dW, X = x₀ e^W, dt = 2⁻⁶ … 2⁻¹⁰.
        let geometric = FlowSystem::new(VectorField::zero(1)?, vec![VectorField::new(vec![Expr::var(0)])?])?;
        let ladder = refinement_ladder(&BrownianPaths::generate(1, &TimeGrid::uniform(1.0, 64)?, cfg.seed ^ 0x5eed, ip)?, 5)?;
        let mut strong = strong_error_sweep(&geometric, Scheme::Heun, &ladder, &[1.0], |w, j, x0| vec![x0[0] * w[0][j].exp()])?;
        out.verdicts.push(rate_verdict("geometric-strong-rate", &mut strong, min_rate));
        out.report("strong_error", &strong);

        let b = [0.3, -0.2];
        let xi = [[0.5, 0.1], [0.0, 0.7]];
        let additive = FlowSystem::new(
            VectorField::constant(&b)?,
            vec![VectorField::constant(&xi[0])?, VectorField::constant(&xi[1])?],
        )?;
        let apaths = BrownianPaths::generate(2, &TimeGrid::uniform(1.0, 64)?, cfg.seed ^ 0xadd, 16)?;
        let times = apaths.grid().times().to_vec();
        let exact = strong_error_sweep(&additive, Scheme::Heun, &[apaths], &[0.1, 0.2], |w, j, x0| {
            (0..2)
                .map(|i| x0[i] + b[i] * times[j] + xi[0][i] * w[0][j] + xi[1][i] * w[1][j])
                .collect()
        })?;
        out.verdicts
            .push(Verdict::at_most("additive-noise-exact", exact.values()[0], 1e-12));

        let nonlinear = FlowSystem::new(
            VectorField::new(vec![Expr::var(0).sin()])?,
            vec![VectorField::new(vec![Expr::var(0).cos().scale(0.5)])?],
        )?;
        let ladder = refinement_ladder(&BrownianPaths::generate(1, &TimeGrid::uniform(1.0, 64)?, cfg.seed ^ 0xb0b, 64)?, 5)?;
        let mut trip = round_trip_sweep(&nonlinear, Scheme::Heun, &ladder, &[vec![0.3], vec![-1.1]])?;
        out.verdicts.push(rate_verdict("round-trip-rate", &mut trip, min_rate));
        out.report("round_trip", &trip);
    }
    out.artifacts.json("summary.json", &json!({ "sweep": sweep, "moments": moments }));
    Ok(out)
}

struct WeakInputs {
    k0: KFormField,
    theta: TestForm,
    drift: VectorField,
    noise: Vec<VectorField>,
}

fn weak_inputs(cfg: &ScenarioConfig, initial: FormSpec, test: TestSpec) -> Result<WeakInputs> {
    let (n, k) = (cfg.n(), cfg.k());
    Ok(WeakInputs {
        k0: cfg.initial.clone().unwrap_or(initial).build(n, k)?,
        theta: cfg.test.clone().unwrap_or(test).build(n, k)?,
        drift: cfg.drift.clone().unwrap_or(default_smooth_drift(n, 0.8, -0.6)).build(n)?,
        noise: build_noise(cfg, vec![default_smooth_noise(n)])?,
    })
}

fn gaussian(center: Vec<f64>, width: f64) -> ScalarSpec {
    ScalarSpec::Gaussian {
        center,
        width,
        amplitude: 1.0,
    }
}

pub fn weak_residual(cfg: &ScenarioConfig) -> Result<Outcome> {
    let n = cfg.n();
    let mut c0 = vec![0.0; n];
    c0[0] = 0.1;
    let g = gaussian(c0, 0.5f64.sqrt());
    let initial = if (n, cfg.k()) == (2, 1) {
        FormSpec::Channels {
            channels: vec![
                g.clone(),
                ScalarSpec::Product {
                    factors: vec![g, coord(0)],
                },
            ],
        }
    } else {
        FormSpec::Uniform { profile: g }
    };
    let mut tc = vec![0.1; n];
    tc[0] = 0.2;
    let test = TestSpec {
        center: tc,
        radius: 1.2,
        profiles: vec![],
    };
    let w = weak_inputs(cfg, initial, test)?;
    let grid = QuadratureGrid::cube(
        w.theta.center(),
        cfg.param_f64("grid_half"),
        cfg.param_usize("grid_points"),
        Rule::GaussLegendre {
            order: cfg.param_usize("grid_order"),
        },
    )?;
    let (t_end, steps, levels) = time_ladder(cfg, 0.5, 4, 5);
    let coarse = TimeGrid::uniform(t_end, steps)?;
    let mut out = Outcome::default();

    let quiet = refinement_ladder(&BrownianPaths::zero(0, &coarse, 1), levels)?;
    let mut det = weak_residual_sweep(
        &w.k0,
        &FlowSystem::deterministic(w.drift.clone())?,
        &quiet,
        &w.theta,
        &grid,
        Scheme::Heun,
    )?;
    out.verdicts
        .push(rate_verdict("deterministic-rate", &mut det, cfg.param_f64("deterministic_rate")));
    out.report("weak_deterministic", &det);

    let noisy = refinement_ladder(
        &BrownianPaths::generate(w.noise.len(), &coarse, cfg.seed, cfg.n_paths.unwrap_or(64))?,
        levels,
    )?;
    let sys = FlowSystem::new(w.drift, w.noise)?;
    let mut sto = weak_residual_sweep(&w.k0, &sys, &noisy, &w.theta, &grid, Scheme::Heun)?;
    out.verdicts
        .push(rate_verdict("stochastic-rate", &mut sto, cfg.param_f64("stochastic_rate")));
    out.report("weak_stochastic", &sto);
    out.artifacts
        .json("summary.json", &json!({ "deterministic": det, "stochastic": sto }));
    Ok(out)
}

pub fn kiw(cfg: &ScenarioConfig) -> Result<Outcome> {
    let n = cfg.n();
    let initial = if (n, cfg.k()) == (2, 1) {
        FormSpec::Channels {
            channels: vec![
                sin_of(2, 1, 0.0),
                ScalarSpec::Product {
                    factors: vec![cos_of(2, 0), coord(1)],
                },
            ],
        }
    } else {
        FormSpec::Uniform {
            profile: sin_of(n, n - 1, 0.3),
        }
    };
    let mut tc = vec![0.0; n];
    tc[n - 1] = 0.1;
    let test = TestSpec {
        center: tc,
        radius: 1.0,
        profiles: vec![],
    };
    let w = weak_inputs(cfg, initial, test)?;
    let (n, k) = (cfg.n(), cfg.k());
    let grid = QuadratureGrid::cube(
        w.theta.center(),
        w.theta.radius(),
        cfg.param_usize("grid_points"),
        Rule::GaussLegendre {
            order: cfg.param_usize("grid_order"),
        },
    )?;
    let (t_end, steps, levels) = time_ladder(cfg, 0.5, 8, 6);
    let coarse = TimeGrid::uniform(t_end, steps)?;
    let det_rate = cfg.param_f64("deterministic_rate");
    let sto_rate = cfg.param_f64("stochastic_rate");
    let mut out = Outcome::default();

    let gap_sweep = |name: &str, sys: &FlowSystem, ladder: &[BrownianPaths]| -> Result<ConvergenceReport> {
        let mut r = ConvergenceReport::new(name, "dt", &["paths"]);
        for p in ladder {
            r.push(
                p.grid().dt(0),
                kiw_transport_gap(&w.k0, sys, p, &w.theta, &grid, Scheme::Heun)?,
                0.0,
                vec![p.n_paths() as f64],
            );
        }
        Ok(r)
    };
    let quiet = refinement_ladder(&BrownianPaths::zero(0, &coarse, 1), levels)?;
    let mut det = gap_sweep("transport-gap-deterministic", &FlowSystem::deterministic(w.drift.clone())?, &quiet)?;
    out.verdicts
        .push(rate_verdict("transport-gap-deterministic-rate", &mut det, det_rate));
    out.report("transport_gap_deterministic", &det);

    let sys = FlowSystem::new(w.drift.clone(), w.noise.clone())?;
    // The same-driver rate is a Monte Carlo estimate of a 1/2 rate; 128 paths
    // over six levels keeps it clear of the threshold.
    let noisy = refinement_ladder(
        &BrownianPaths::generate(w.noise.len(), &coarse, cfg.seed, cfg.n_paths.unwrap_or(128))?,
        levels,
    )?;
    let mut sto = gap_sweep("transport-gap-stochastic", &sys, &noisy)?;
    out.verdicts.push(rate_verdict("transport-gap-stochastic-rate", &mut sto, sto_rate));
    out.report("transport_gap_stochastic", &sto);

    // Separated process K₀ + (∫cos s ds) G₀ + W H₀ sharing the flow's driver.
    let g0 = FormSpec::Uniform {
        profile: ScalarSpec::Sum {
            terms: vec![coord(0), ScalarSpec::Constant { value: 1.0 }],
        },
    }
    .build(n, k)?;
    let h0 = FormSpec::Uniform {
        profile: scaled(0.5, cos_of(n, n - 1)),
    }
    .build(n, k)?;
    let process = KiwProcess {
        k0: w.k0.clone(),
        drift: Some((Expr::time().cos(), g0)),
        noise: vec![(Expr::one(), h0)],
    };
    let mut same = ConvergenceReport::new("kiw-same-driver", "dt", &["paths", "cross_mean", "cross_se"]);
    for p in &noisy {
        let r = kiw_residual(&process, &sys, p, p, Coupling::Same, &w.theta, &grid, Scheme::Heun)?;
        same.push(r.dt, r.rms_gap, 0.0, vec![r.paths.len() as f64, r.cross_mean, r.cross_se]);
    }
    out.verdicts.push(rate_verdict("kiw-same-driver-rate", &mut same, sto_rate));
    out.report("kiw_same_driver", &same);

    let finest = &noisy[noisy.len() - 1];
    let other = finest.independent(1, 0x1d)?;
    let ind = kiw_residual(&process, &sys, finest, &other, Coupling::Independent, &w.theta, &grid, Scheme::Heun)?;
    let z = cfg.param_f64("z");
    let score = if ind.cross_se > 0.0 {
        ind.cross_mean.abs() / ind.cross_se
    } else {
        0.0
    };
    out.verdicts.push(Verdict::at_most("independent-cross-term-z", score, z));
    let mut t = Table::new(&["path", "lhs", "rhs", "gap", "realised_cross"]);
    for p in &ind.paths {
        t.row(vec![
            p.path.to_string(),
            fmt_num(p.lhs),
            fmt_num(p.rhs),
            fmt_num(p.gap),
            fmt_num(p.realised_cross),
        ]);
    }
    out.artifacts.insert("kiw_independent.csv", t.finish()?);
    out.artifacts.json(
        "summary.json",
        &json!({
            "deterministic": det,
            "stochastic": sto,
            "same_driver": same,
            "independent": { "rms_gap": ind.rms_gap, "cross_mean": ind.cross_mean, "cross_std_error": ind.cross_se },
        }),
    );
    Ok(out)
}

fn default_chain(n: usize, k: usize) -> ChainSpec {
    if n == 2 && k == 2 {
        return ChainSpec::Rectangle {
            lo: [0.0, 0.0],
            hi: [1.0, 1.0],
        };
    }
    // Tilted standard k-simplex.
    let mut vertices = vec![vec![0.0; n]];
    for j in 0..k {
        let mut v = vec![0.0; n];
        v[j] = 1.0;
        if j + 1 < n {
            v[j + 1] = 0.25;
        }
        vertices.push(v);
    }
    ChainSpec::Simplices {
        simplices: vec![AffineSimplexSpec { vertices, sign: 1.0 }],
    }
}

pub fn conservation(cfg: &ScenarioConfig) -> Result<Outcome> {
    let (n, k) = (cfg.n(), cfg.k());
    let order = cfg.param_usize("rule_order");
    let chain: Chain = cfg.chain.clone().unwrap_or_else(|| default_chain(n, k)).build(n, order)?;
    let k0 = cfg
        .initial
        .clone()
        .unwrap_or(FormSpec::Uniform {
            profile: gaussian(vec![0.3; n], 0.8),
        })
        .build(n, k)?;
    let drift = cfg
        .drift
        .clone()
        .unwrap_or(FieldSpec::Rotation { omega: 1.0, plane: [0, 1] })
        .build(n)?;
    let noise = build_noise(cfg, vec![default_smooth_noise(n)])?;
    let (t_end, steps, levels) = time_ladder(cfg, 1.0, 8, 4);
    let mut out = Outcome::default();

    let det_paths = BrownianPaths::zero(0, &TimeGrid::uniform(t_end, cfg.param_usize("deterministic_steps"))?, 1);
    let det = conservation_check(&k0, &chain, &FlowSystem::deterministic(drift.clone())?, &det_paths, Scheme::Heun)?;
    out.verdicts
        .push(Verdict::at_most("deterministic-gap", det.max_gap, cfg.param_f64("tolerance")));

    let sys = FlowSystem::new(drift, noise)?;
    let ladder = refinement_ladder(
        &BrownianPaths::generate(
            sys.noise().len(),
            &TimeGrid::uniform(t_end, steps)?,
            cfg.seed,
            cfg.n_paths.unwrap_or(64),
        )?,
        levels,
    )?;
    let mut sto = ConvergenceReport::new("conservation-stochastic", "dt", &["paths", "max_gap"]);
    let mut per_path = Table::new(&["dt", "path", "pushed", "relative_gap"]);
    for p in &ladder {
        let r = conservation_check(&k0, &chain, &sys, p, Scheme::Heun)?;
        sto.push(p.grid().dt(0), r.rms_gap, 0.0, vec![r.pushed.len() as f64, r.max_gap]);
        for (i, (v, g)) in r.pushed.iter().zip(&r.relative_gaps).enumerate() {
            per_path.row(vec![fmt_num(p.grid().dt(0)), i.to_string(), fmt_num(*v), fmt_num(*g)]);
        }
    }
    out.verdicts
        .push(rate_verdict("stochastic-rms-rate", &mut sto, cfg.param_f64("stochastic_rate")));
    out.report("conservation_stochastic", &sto);
    out.artifacts.insert("conservation_paths.csv", per_path.finish()?);
    let mut t = Table::new(&["initial", "pushed", "max_gap"]);
    t.row(vec![fmt_num(det.initial), fmt_num(det.pushed[0]), fmt_num(det.max_gap)]);
    out.artifacts.insert("conservation_deterministic.csv", t.finish()?);
    out.artifacts
        .json("summary.json", &json!({ "deterministic": det, "stochastic": sto }));
    Ok(out)
}

fn holder_from(spec: Option<&FieldSpec>, n: usize) -> Result<HolderDrift> {
    match spec {
        None => HolderDrift::new(0.5, 10.0, n),
        Some(FieldSpec::RadialHolder { alpha, r_cut }) => HolderDrift::new(*alpha, *r_cut, n),
        Some(_) => Err(Error::Config("drift must be a radial-holder field".into())),
    }
}

pub fn counterexample(cfg: &ScenarioConfig) -> Result<Outcome> {
    let drift = holder_from(cfg.drift.as_ref(), 2)?;
    let k0 = cfg
        .initial
        .clone()
        .unwrap_or(FormSpec::Uniform {
            profile: gaussian(vec![0.2, -0.1], 1.0),
        })
        .build(2, 0)?;
    let theta = cfg
        .test
        .clone()
        .unwrap_or(TestSpec {
            center: vec![0.3, 0.1],
            radius: 1.2,
            profiles: vec![],
        })
        .build(2, 0)?;
    let gamma = cfg.param_f64("gamma");
    let window = (cfg.param_f64("window_start"), cfg.param_f64("window_end"));
    let quad = PolarQuadrature::default();
    let selections = vec![
        GammaSelection::Zero,
        GammaSelection::Constant { value: vec![gamma] },
        GammaSelection::Matched,
    ];
    let report = counterexample_study(&drift, &k0, &selections, &theta, window, &quad, cfg.param_usize("levels"))?;
    let tol = cfg.param_f64("residual_tolerance");
    let mut out = Outcome::default();
    let mut t = Table::new(&["selection", "level", "relative_residual", "residual"]);
    for s in &report.selections {
        for (level, (rel, res)) in s.relative.iter().zip(&s.residual).enumerate() {
            t.row(vec![s.selection.clone(), level.to_string(), fmt_num(*rel), fmt_num(*res)]);
        }
        let last = *s.relative.last().unwrap_or(&f64::NAN);
        out.verdicts
            .push(Verdict::at_most(&format!("weak-residual[{}]", s.selection), last, tol));
        // Refinement must not make things worse beyond rounding.
        let decays = last <= s.relative[0] + 1e-12;
        out.verdicts
            .push(Verdict::flag(&format!("residual-nonincreasing[{}]", s.selection), decays, last));
    }
    out.artifacts.insert("residuals.csv", t.finish()?);
    let analytic = report.analytic_distance.unwrap_or(f64::NAN);
    let deviation = (report.distance - analytic).abs() / analytic;
    out.verdicts.push(Verdict::at_most(
        "distance-vs-analytic",
        deviation,
        cfg.param_f64("distance_tolerance"),
    ));
    out.verdicts.push(Verdict::flag(
        "solutions-distinct",
        report.distance > 0.5 * analytic,
        report.distance,
    ));
    let mut t = Table::new(&["t", "distance", "analytic", "relative_deviation"]);
    t.row(vec![
        fmt_num(window.1),
        fmt_num(report.distance),
        fmt_num(analytic),
        fmt_num(deviation),
    ]);
    out.artifacts.insert("distance.csv", t.finish()?);

    let (honest, tampered) = falsifiability_control(&drift, &k0, &[0.6, -0.2], -1.0, &theta, window, &quad.refined().refined())?;
    out.verdicts.push(Verdict::flag(
        "tampered-solution-rejected",
        honest < tol && tampered > 10.0 * tol,
        tampered,
    ));

    let probe = holder_probe_stability(&drift, cfg.param_usize("holder_pairs"), cfg.seed)?;
    out.verdicts.push(Verdict::at_most(
        "holder-probe-stability",
        probe.relative_change,
        cfg.param_f64("holder_tolerance"),
    ));
    let mut t = Table::new(&["pairs", "ratio"]);
    t.row(vec![cfg.param_usize("holder_pairs").to_string(), fmt_num(probe.coarse)]);
    t.row(vec![(4 * cfg.param_usize("holder_pairs")).to_string(), fmt_num(probe.fine)]);
    out.artifacts.insert("holder_probe.csv", t.finish()?);

    let ode_drift = HolderDrift::new(cfg.param_f64("ode_alpha"), drift.r_cut, 2)?;
    let mut ode = characteristic_residual_sweep(&ode_drift, &[0.6, 0.8], 0.2, 1.0, &[0.1, 0.05, 0.025, 0.0125])?;
    out.verdicts
        .push(rate_verdict("characteristic-ode-rate", &mut ode, cfg.param_f64("ode_rate")));
    out.report("characteristic_ode", &ode);
    out.artifacts.json(
        "summary.json",
        &json!({ "study": report, "holder_probe": probe, "honest_residual": honest, "tampered_residual": tampered }),
    );
    Ok(out)
}

pub fn noise_selection(cfg: &ScenarioConfig) -> Result<Outcome> {
    let n = cfg.n();
    let drift = holder_from(cfg.drift.as_ref(), n)?;
    let d = NoiseSelectionSettings::default();
    let (t_end, steps, _) = time_ladder(cfg, d.t_end, d.steps, 0);
    let s = NoiseSelectionSettings {
        alpha: drift.alpha,
        r_cut: drift.r_cut,
        n,
        amplitude: cfg.param_f64("amplitude"),
        eps_list: cfg.eps_list.clone().unwrap_or(d.eps_list),
        paths: cfg.n_paths.unwrap_or(d.paths),
        steps,
        t_end,
        seed: cfg.seed,
        shift: cfg.param_f64("shift"),
        rule_points: cfg.param_usize("rule_points"),
        x0: vec![0.0; n],
    };
    let r = noise_selection_experiment(&s, true)?;
    let mut out = Outcome::default();
    out.verdicts
        .push(Verdict::flag("noisy-gaps-decreasing", r.noisy_decreasing, rate(&r.noisy)));
    let min_gap = r.noiseless.values().into_iter().fold(f64::INFINITY, f64::min);
    out.verdicts
        .push(Verdict::at_least("noiseless-branch-gap", min_gap, cfg.param_f64("branch_gap")));
    out.report("noise_on", &r.noisy);
    out.report("noise_off", &r.noiseless);
    out.artifacts.json("summary.json", &json!({ "settings": s, "result": r }));
    Ok(out)
}

pub fn specializations(cfg: &ScenarioConfig) -> Result<Outcome> {
    let s = SpecializationSettings {
        seed: cfg.seed,
        cases: cfg.param_usize("cases"),
        probes: cfg.param_usize("probes"),
        h: cfg.param_f64("h"),
        tolerance: cfg.param_f64("tolerance"),
        steps: cfg.param_usize("steps"),
        solution_tolerance: cfg.param_f64("solution_tolerance"),
    };
    let checks = specialization_suite(&s)?;
    let mut out = Outcome::default();
    let mut t = Table::new(&["identity", "cases", "max_residual", "tolerance", "passed"]);
    for c in &checks {
        t.row(vec![
            c.name.clone(),
            c.cases.to_string(),
            fmt_num(c.max_residual),
            fmt_num(c.tolerance),
            c.passed.to_string(),
        ]);
        out.verdicts.push(Verdict::at_most(&c.name, c.max_residual, c.tolerance));
    }
    out.artifacts.insert("specializations.csv", t.finish()?);
    out.artifacts.json("summary.json", &checks);
    Ok(out)
}

/// Runs the scenario named in the config (which must already be valid) and
/// adds `verdicts.csv`.
pub fn execute(cfg: &ScenarioConfig, dump_paths: bool) -> Result<Outcome> {
    let mut out = match cfg.scenario {
        Scenario::CalculusIdentities => calculus_identities(cfg),
        Scenario::CommutatorSweep => commutator_sweep(cfg),
        Scenario::FlowConvergence => flow_convergence(cfg, dump_paths),
        Scenario::WeakResidual => weak_residual(cfg),
        Scenario::Kiw => kiw(cfg),
        Scenario::Conservation => conservation(cfg),
        Scenario::Counterexample => counterexample(cfg),
        Scenario::NoiseSelection => noise_selection(cfg),
        Scenario::Specializations => specializations(cfg),
    }?;
    out.artifacts.insert("verdicts.csv", verdict_table(&out.verdicts)?);
    Ok(out)
}
