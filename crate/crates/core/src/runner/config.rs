//! Scenario configuration: one TOML document per run, checked field by field
//! before anything executes.

use std::fmt;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::calculus::MAX_DEFAULT_DIM;
use crate::registry::{ChainSpec, FieldSpec, FormSpec, TestSpec};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scenario {
    CalculusIdentities,
    CommutatorSweep,
    FlowConvergence,
    WeakResidual,
    Kiw,
    Conservation,
    Counterexample,
    NoiseSelection,
    Specializations,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ParamKind {
    Float,
    Int,
    Bool,
}

/// A scenario knob under `[params]`.
#[derive(Clone, Copy, Debug)]
pub struct ParamInfo {
    pub name: &'static str,
    pub kind: ParamKind,
    pub default: &'static str,
    pub help: &'static str,
}

const fn param(name: &'static str, kind: ParamKind, default: &'static str, help: &'static str) -> ParamInfo {
    ParamInfo { name, kind, default, help }
}

use ParamKind::{Bool, Float, Int};

const IDENTITY_PARAMS: &[ParamInfo] = &[
    param("cases", Int, "20", "random cases per identity"),
    param("probes", Int, "4", "evaluation points per case"),
    param("max_dim", Int, "4", "largest n for pointwise identities"),
    param("max_quadrature_dim", Int, "3", "largest n for quadrature identities"),
    param("tolerance", Float, "1e-8", "analytic tolerance"),
];

const COMMUTATOR_PARAMS: &[ParamInfo] = &[
    param("cases", Int, "3", "randomised (b, xi, K, theta) cases"),
    param("decay_ratio", Float, "1e-2", "required |value(eps_last)| / |value(eps_first)|"),
    param("control_tolerance", Float, "1e-8", "bound on |value| for constant fields"),
    param("grid_points", Int, "12", "outer quadrature points per axis"),
    param("panel_order", Int, "6", "outer Gauss-Legendre panel order"),
    param("kernel_points", Int, "8", "radial points of the convolution rule"),
    param("ball_points", Int, "16", "points per axis for the bound's ball norms"),
];

const FLOW_PARAMS: &[ParamInfo] = &[
    param("p", Float, "2", "moment exponent of the coupled errors"),
    param("rule_points", Int, "8", "radial points of the mollifier rule"),
    param("moment_ratio", Float, "2", "allowed ratio of Jacobian moments under path doubling"),
    param("integrator_checks", Bool, "true", "also run the integrator benchmarks"),
    param("integrator_paths", Int, "256", "paths for the strong-error benchmark"),
    param("strong_rate", Float, "0.9", "required strong and round-trip rate"),
];

const WEAK_PARAMS: &[ParamInfo] = &[
    param("deterministic_rate", Float, "0.9", "required rate without noise"),
    param("stochastic_rate", Float, "0.4", "required rate with noise"),
    param("grid_half", Float, "2.6", "half width of the Lagrangian grid"),
    param("grid_points", Int, "12", "grid points per axis"),
    param("grid_order", Int, "4", "Gauss-Legendre panel order"),
];

const KIW_PARAMS: &[ParamInfo] = &[
    param("deterministic_rate", Float, "0.9", "required transport-gap rate without noise"),
    param("stochastic_rate", Float, "0.4", "required rate with noise"),
    param("z", Float, "3", "standard errors allowed for the independent cross term"),
    param("grid_points", Int, "8", "grid points per axis"),
    param("grid_order", Int, "4", "Gauss-Legendre panel order"),
];

const CONSERVATION_PARAMS: &[ParamInfo] = &[
    param("tolerance", Float, "1e-6", "max gap in the deterministic case"),
    param("deterministic_steps", Int, "128", "time steps of the deterministic case"),
    param("stochastic_rate", Float, "0.4", "required RMS-gap rate with noise"),
    param("rule_order", Int, "5", "simplex quadrature order"),
];

const COUNTEREXAMPLE_PARAMS: &[ParamInfo] = &[
    param("gamma", Float, "0.8", "constant selected on the ball by the second solution"),
    param("window_start", Float, "0.25", "start of the time window"),
    param("window_end", Float, "0.9", "end of the time window"),
    param("levels", Int, "2", "quadrature refinement levels"),
    param("residual_tolerance", Float, "1e-3", "relative weak residual at the finest level"),
    param("distance_tolerance", Float, "0.1", "relative deviation of the L2 distance"),
    param("holder_pairs", Int, "10000", "probe pairs of the coarse Hölder estimate"),
    param("holder_tolerance", Float, "0.05", "relative change under 4x probe refinement"),
    param(
        "ode_alpha",
        Float,
        "0.333333333333333333",
        "exponent for the characteristic ODE rate check",
    ),
    param("ode_rate", Float, "1.9", "required characteristic residual rate"),
];

const NOISE_SELECTION_PARAMS: &[ParamInfo] = &[
    param("amplitude", Float, "1", "constant noise amplitude per axis"),
    param("shift", Float, "0.5", "alternating kernel offset in units of eps"),
    param("rule_points", Int, "8", "radial points of the mollifier rule"),
    param("branch_gap", Float, "1", "minimum noiseless gap counted as branching"),
];

const SPECIALIZATION_PARAMS: &[ParamInfo] = &[
    param("cases", Int, "10", "random fields per identity"),
    param("probes", Int, "6", "evaluation points per case"),
    param("h", Float, "1e-4", "finite-difference step"),
    param("tolerance", Float, "1e-6", "identity tolerance"),
    param("steps", Int, "64", "time steps behind the solution residuals"),
    param("solution_tolerance", Float, "1e-3", "solution residual tolerance"),
];

/// Top-level keys a scenario reads besides `scenario`, `seed`, `output` and `params`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Key {
    N,
    K,
    Time,
    Drift,
    Noise,
    Initial,
    Test,
    Chain,
    NPaths,
    EpsList,
}

impl Key {
    pub fn name(self) -> &'static str {
        match self {
            Key::N => "n",
            Key::K => "k",
            Key::Time => "time",
            Key::Drift => "drift",
            Key::Noise => "noise",
            Key::Initial => "initial",
            Key::Test => "test",
            Key::Chain => "chain",
            Key::NPaths => "n_paths",
            Key::EpsList => "eps_list",
        }
    }
}

impl Scenario {
    pub const ALL: [Scenario; 9] = [
        Scenario::CalculusIdentities,
        Scenario::CommutatorSweep,
        Scenario::FlowConvergence,
        Scenario::WeakResidual,
        Scenario::Kiw,
        Scenario::Conservation,
        Scenario::Counterexample,
        Scenario::NoiseSelection,
        Scenario::Specializations,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Scenario::CalculusIdentities => "calculus-identities",
            Scenario::CommutatorSweep => "commutator-sweep",
            Scenario::FlowConvergence => "flow-convergence",
            Scenario::WeakResidual => "weak-residual",
            Scenario::Kiw => "kiw",
            Scenario::Conservation => "conservation",
            Scenario::Counterexample => "counterexample",
            Scenario::NoiseSelection => "noise-selection",
            Scenario::Specializations => "specializations",
        }
    }

    pub fn from_name(s: &str) -> Option<Scenario> {
        Scenario::ALL.into_iter().find(|sc| sc.name() == s)
    }

    pub fn description(self) -> &'static str {
        match self {
            Scenario::CalculusIdentities => "d^2 = 0, Cartan, double star, Lie adjointness and the Hodge pairing on random forms",
            Scenario::CommutatorSweep => "eps-sweeps of the drift and double-noise commutators with constant-field controls",
            Scenario::FlowConvergence => "coupled flows of mollified drifts, Jacobian moments and integrator benchmarks",
            Scenario::WeakResidual => "weak-form residual of the pushforward solution under time refinement",
            Scenario::Kiw => "Itô-Wentzell pullback formula: transport gap, separated process, driver coupling",
            Scenario::Conservation => "integral of the solution over a transported chain",
            Scenario::Counterexample => "Hölder drift: two distinct weak solutions, probe stability, characteristic ODE",
            Scenario::NoiseSelection => "mollified Hölder flows with and without noise",
            Scenario::Specializations => "continuity, transport and induction special cases",
        }
    }

    pub fn params(self) -> &'static [ParamInfo] {
        match self {
            Scenario::CalculusIdentities => IDENTITY_PARAMS,
            Scenario::CommutatorSweep => COMMUTATOR_PARAMS,
            Scenario::FlowConvergence => FLOW_PARAMS,
            Scenario::WeakResidual => WEAK_PARAMS,
            Scenario::Kiw => KIW_PARAMS,
            Scenario::Conservation => CONSERVATION_PARAMS,
            Scenario::Counterexample => COUNTEREXAMPLE_PARAMS,
            Scenario::NoiseSelection => NOISE_SELECTION_PARAMS,
            Scenario::Specializations => SPECIALIZATION_PARAMS,
        }
    }

    pub fn keys(self) -> &'static [Key] {
        use Key::*;
        match self {
            Scenario::CalculusIdentities | Scenario::Specializations => &[],
            Scenario::CommutatorSweep => &[N, K, Drift, Noise, Initial, Test, EpsList],
            Scenario::FlowConvergence => &[N, Time, Drift, Noise, NPaths, EpsList],
            Scenario::WeakResidual | Scenario::Kiw => &[N, K, Time, Drift, Noise, Initial, Test, NPaths],
            Scenario::Conservation => &[N, K, Time, Drift, Noise, Initial, Chain, NPaths],
            Scenario::Counterexample => &[N, K, Drift, Initial, Test],
            Scenario::NoiseSelection => &[N, Time, Drift, NPaths, EpsList],
        }
    }

    /// Default `(n, k)`.
    pub fn default_shape(self) -> (usize, usize) {
        match self {
            Scenario::CommutatorSweep | Scenario::WeakResidual | Scenario::Kiw => (2, 1),
            Scenario::Conservation => (2, 2),
            _ => (2, 0),
        }
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_end: Option<f64>,
    /// Steps of the coarsest grid.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub steps: Option<usize>,
    /// Number of grids in a refinement ladder.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub levels: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub scenario: Scenario,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub time: Option<TimeSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub drift: Option<FieldSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise: Option<Vec<FieldSpec>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial: Option<FormSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub test: Option<TestSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub chain: Option<ChainSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_paths: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eps_list: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "toml::Table::is_empty")]
    pub params: toml::Table,
}

/// One problem found by validation.
/// Seeds must fit a TOML integer so that every config can be written back.
pub const MAX_SEED: u64 = i64::MAX as u64;

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Diagnostic {
    pub field: String,
    pub message: String,
}

impl Diagnostic {
    pub fn new(field: impl Into<String>, message: impl Into<String>) -> Self {
        Diagnostic {
            field: field.into(),
            message: message.into(),
        }
    }
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.message)
    }
}

const TOP_LEVEL: &[&str] = &[
    "scenario", "seed", "n", "k", "time", "drift", "noise", "initial", "test", "chain", "n_paths", "eps_list", "output", "params",
];

/// Parses and validates a config document. Every problem found is reported,
/// not just the first.
pub fn parse_config(text: &str) -> std::result::Result<ScenarioConfig, Vec<Diagnostic>> {
    let table: toml::Table = text
        .parse()
        .map_err(|e: toml::de::Error| vec![Diagnostic::new("<document>", e.message().trim())])?;
    let mut diags = Vec::new();
    for required in ["scenario", "seed"] {
        if !table.contains_key(required) {
            diags.push(Diagnostic::new(required, "missing required field"));
        }
    }
    for key in table.keys() {
        if !TOP_LEVEL.contains(&key.as_str()) {
            diags.push(Diagnostic::new(key.as_str(), "unknown field"));
        }
    }
    if let Some(v) = table.get("scenario") {
        match v.as_str() {
            Some(s) if Scenario::from_name(s).is_none() => {
                let names: Vec<&str> = Scenario::ALL.iter().map(|s| s.name()).collect();
                diags.push(Diagnostic::new(
                    "scenario",
                    format!("unknown scenario `{s}` (expected one of {})", names.join(", ")),
                ));
            }
            None => diags.push(Diagnostic::new("scenario", "must be a string")),
            _ => {}
        }
    }
    if !diags.is_empty() {
        return Err(diags);
    }
    let cfg: ScenarioConfig = toml::Value::Table(table)
        .try_into()
        .map_err(|e: toml::de::Error| vec![Diagnostic::new("<document>", e.message().trim())])?;
    let diags = cfg.validate();
    if diags.is_empty() {
        Ok(cfg)
    } else {
        Err(diags)
    }
}

fn param_kind_ok(kind: ParamKind, v: &toml::Value) -> bool {
    match kind {
        ParamKind::Float => v.is_float() || v.is_integer(),
        ParamKind::Int => v.as_integer().is_some_and(|i| i >= 0),
        ParamKind::Bool => v.is_bool(),
    }
}

impl ScenarioConfig {
    /// A config with every optional field left to the scenario defaults.
    pub fn new(scenario: Scenario, seed: u64) -> Self {
        ScenarioConfig {
            scenario,
            seed,
            n: None,
            k: None,
            time: None,
            drift: None,
            noise: None,
            initial: None,
            test: None,
            chain: None,
            n_paths: None,
            eps_list: None,
            output: None,
            params: toml::Table::new(),
        }
    }

    pub fn from_toml(text: &str) -> std::result::Result<Self, Vec<Diagnostic>> {
        parse_config(text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serialises")
    }

    pub fn n(&self) -> usize {
        self.n.unwrap_or(self.scenario.default_shape().0)
    }

    pub fn k(&self) -> usize {
        self.k.unwrap_or(self.scenario.default_shape().1)
    }

    fn present(&self, key: Key) -> bool {
        match key {
            Key::N => self.n.is_some(),
            Key::K => self.k.is_some(),
            Key::Time => self.time.is_some(),
            Key::Drift => self.drift.is_some(),
            Key::Noise => self.noise.is_some(),
            Key::Initial => self.initial.is_some(),
            Key::Test => self.test.is_some(),
            Key::Chain => self.chain.is_some(),
            Key::NPaths => self.n_paths.is_some(),
            Key::EpsList => self.eps_list.is_some(),
        }
    }

    /// Every invariant check, without running anything.
    pub fn validate(&self) -> Vec<Diagnostic> {
        let mut d = Vec::new();
        if self.seed > MAX_SEED {
            d.push(Diagnostic::new(
                "seed",
                format!("{} exceeds {MAX_SEED}, the largest TOML integer", self.seed),
            ));
        }
        let sc = self.scenario;
        let used = sc.keys();
        for key in [
            Key::N,
            Key::K,
            Key::Time,
            Key::Drift,
            Key::Noise,
            Key::Initial,
            Key::Test,
            Key::Chain,
            Key::NPaths,
            Key::EpsList,
        ] {
            if self.present(key) && !used.contains(&key) {
                d.push(Diagnostic::new(key.name(), format!("not used by scenario {sc}")));
            }
        }
        let (n, k) = (self.n(), self.k());
        if n == 0 {
            d.push(Diagnostic::new("n", "dimension must be at least 1"));
        } else if n > MAX_DEFAULT_DIM {
            d.push(Diagnostic::new("n", format!("dimension {n} exceeds the cap of {MAX_DEFAULT_DIM}")));
        }
        if k > n {
            d.push(Diagnostic::new(
                "k",
                format!("degree k = {k} exceeds dimension n = {n} (invariant k <= n)"),
            ));
        }
        let shape_ok = (1..=MAX_DEFAULT_DIM).contains(&n) && k <= n;

        if let Some(t) = &self.time {
            if t.t_end.is_some_and(|v| !(v > 0.0 && v.is_finite())) {
                d.push(Diagnostic::new("time.t_end", "must be positive"));
            }
            if t.steps == Some(0) {
                d.push(Diagnostic::new("time.steps", "must be at least 1"));
            }
            if t.levels.is_some_and(|l| l < 3) {
                d.push(Diagnostic::new("time.levels", "a rate needs at least 3 levels"));
            }
        }
        if self.n_paths == Some(0) {
            d.push(Diagnostic::new("n_paths", "must be at least 1"));
        }
        if let Some(eps) = &self.eps_list {
            let min_len = if sc == Scenario::NoiseSelection { 2 } else { 3 };
            if eps.len() < min_len {
                d.push(Diagnostic::new("eps_list", format!("needs at least {min_len} entries")));
            }
            if eps.windows(2).any(|w| w[1] >= w[0]) || eps.iter().any(|e| !(*e > 0.0 && *e < 1.0)) {
                d.push(Diagnostic::new("eps_list", "must be strictly decreasing within (0, 1)"));
            }
        }

        if shape_ok {
            if let Some(f) = &self.drift {
                if let Err(e) = f.build(n) {
                    d.push(Diagnostic::new("drift", e.to_string()));
                }
            }
            for (i, f) in self.noise.iter().flatten().enumerate() {
                if let Err(e) = f.build(n) {
                    d.push(Diagnostic::new(format!("noise[{i}]"), e.to_string()));
                }
            }
            if let Some(f) = &self.initial {
                if let Err(e) = f.build(n, k) {
                    d.push(Diagnostic::new("initial", e.to_string()));
                }
            }
            if let Some(t) = &self.test {
                if let Err(e) = t.build(n, k) {
                    d.push(Diagnostic::new("test", e.to_string()));
                }
            }
            if let Some(c) = &self.chain {
                if c.degree() != k {
                    d.push(Diagnostic::new(
                        "chain",
                        format!("chain of degree {} cannot integrate a {k}-form", c.degree()),
                    ));
                } else if let Err(e) = c.build(n, 3) {
                    d.push(Diagnostic::new("chain", e.to_string()));
                }
            }
        }

        match sc {
            Scenario::Counterexample => {
                if n != 2 {
                    d.push(Diagnostic::new(
                        "n",
                        "the counterexample residuals are computed in the plane (n = 2)",
                    ));
                }
                if k != 0 {
                    d.push(Diagnostic::new("k", "interior selections give weak solutions only for k = 0"));
                }
            }
            Scenario::Conservation if k == 0 => {
                d.push(Diagnostic::new("k", "conservation integrates over a chain of degree k >= 1"));
            }
            Scenario::CommutatorSweep if self.noise.as_ref().is_some_and(|v| v.len() > 1) => {
                d.push(Diagnostic::new("noise", "the double commutator takes a single noise field"));
            }
            _ => {}
        }
        if matches!(sc, Scenario::Counterexample | Scenario::NoiseSelection) {
            if let Some(f) = &self.drift {
                if !matches!(f, FieldSpec::RadialHolder { .. }) {
                    d.push(Diagnostic::new("drift", "must be a radial-holder field"));
                }
            }
        }
        if sc == Scenario::Kiw && self.noise.as_ref().is_some_and(|v| v.len() != 1) {
            d.push(Diagnostic::new(
                "noise",
                "the separated process is driven by exactly one noise field",
            ));
        }

        let known = sc.params();
        for (key, value) in &self.params {
            match known.iter().find(|p| p.name == key) {
                None => d.push(Diagnostic::new(
                    format!("params.{key}"),
                    format!("unknown parameter for scenario {sc}"),
                )),
                Some(p) if !param_kind_ok(p.kind, value) => {
                    d.push(Diagnostic::new(
                        format!("params.{key}"),
                        format!("expected {:?}, got `{value}`", p.kind),
                    ));
                }
                _ => {}
            }
        }
        d
    }

    pub fn param_f64(&self, name: &str) -> f64 {
        match self.params.get(name) {
            Some(toml::Value::Float(v)) => *v,
            Some(toml::Value::Integer(v)) => *v as f64,
            _ => self.default_param(name).parse().expect("numeric default"),
        }
    }

    pub fn param_usize(&self, name: &str) -> usize {
        match self.params.get(name).and_then(|v| v.as_integer()) {
            Some(v) => v as usize,
            None => self.default_param(name).parse().expect("integer default"),
        }
    }

    pub fn param_bool(&self, name: &str) -> bool {
        match self.params.get(name).and_then(|v| v.as_bool()) {
            Some(v) => v,
            None => self.default_param(name) == "true",
        }
    }

    fn default_param(&self, name: &str) -> &'static str {
        self.scenario
            .params()
            .iter()
            .find(|p| p.name == name)
            .unwrap_or_else(|| panic!("parameter {name} is not declared for {}", self.scenario))
            .default
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_config_lists_missing_fields() {
        let d = parse_config("").unwrap_err();
        let fields: Vec<&str> = d.iter().map(|x| x.field.as_str()).collect();
        assert_eq!(fields, vec!["scenario", "seed"]);
    }

    #[test]
    fn minimal_config_is_valid() {
        let cfg = parse_config("scenario = \"calculus-identities\"\nseed = 1\n").unwrap();
        assert!(cfg.validate().is_empty());
        assert_eq!(cfg.param_usize("cases"), 20);
    }

    #[test]
    fn degree_above_dimension_is_named() {
        let d = parse_config("scenario = \"weak-residual\"\nseed = 1\nn = 2\nk = 3\n").unwrap_err();
        assert!(d.iter().any(|x| x.field == "k" && x.message.contains("k <= n")), "{d:?}");
    }

    #[test]
    fn unknown_scenario_and_params() {
        let d = parse_config("scenario = \"warp\"\nseed = 1\n").unwrap_err();
        assert!(d[0].message.contains("unknown scenario"));
        let d = parse_config("scenario = \"kiw\"\nseed = 1\n[params]\nbogus = 1\nz = true\n").unwrap_err();
        assert_eq!(d.len(), 2, "{d:?}");
    }

    #[test]
    fn field_specs_are_checked_against_n() {
        let text = "scenario = \"commutator-sweep\"\nseed = 1\nn = 3\n[drift]\nkind = \"constant\"\nvalue = [1.0, 2.0]\n";
        let d = parse_config(text).unwrap_err();
        assert!(d.iter().any(|x| x.field == "drift"), "{d:?}");
    }

    #[test]
    fn unused_keys_are_reported() {
        let d = parse_config("scenario = \"specializations\"\nseed = 1\nn_paths = 4\n").unwrap_err();
        assert_eq!(d[0].field, "n_paths");
    }

    #[test]
    fn round_trips_through_toml() {
        let mut cfg = ScenarioConfig::new(Scenario::FlowConvergence, 9);
        cfg.eps_list = Some(vec![0.2, 0.1, 0.05]);
        cfg.drift = Some(FieldSpec::RadialHolder { alpha: 0.5, r_cut: 10.0 });
        let back = parse_config(&cfg.to_toml()).unwrap();
        assert_eq!(back, cfg);
    }
}
