//! Config parsing, validation and the field registry through the public API.

use kform::registry::{FieldSpec, FormSpec, ScalarSpec};
use kform::runner::config::MAX_SEED;
use kform::runner::{parse_config, Scenario, ScenarioConfig};
use proptest::prelude::*;

#[test]
fn every_scenario_default_config_is_valid() {
    for s in Scenario::ALL {
        let cfg = ScenarioConfig::new(s, 1);
        assert!(cfg.validate().is_empty(), "{s}: {:?}", cfg.validate());
        assert_eq!(Scenario::from_name(s.name()), Some(s));
    }
}

#[test]
fn registry_fields_match_direct_construction() {
    let spec = FieldSpec::Sum {
        terms: vec![
            FieldSpec::Rotation { omega: 0.5, plane: [0, 1] },
            FieldSpec::Scale {
                factor: 2.0,
                of: Box::new(FieldSpec::Constant { value: vec![0.1, -0.3] }),
            },
        ],
    };
    let b = spec.build(2).unwrap();
    let x = [0.4, -1.2];
    let mut v = [0.0; 2];
    b.eval(0.0, &x, &mut v);
    let expect = [-0.5 * x[1] + 0.2, 0.5 * x[0] - 0.6];
    assert!((v[0] - expect[0]).abs() < 1e-15 && (v[1] - expect[1]).abs() < 1e-15);
    assert!(!spec.is_constant());
    assert!(FieldSpec::Scale {
        factor: 3.0,
        of: Box::new(FieldSpec::Constant { value: vec![1.0, 0.0] })
    }
    .is_constant());
}

#[test]
fn forms_from_toml() {
    let text = r#"
scenario = "weak-residual"
seed = 2
n = 3
k = 2
[initial]
kind = "basis"
indices = [0, 2]
profile = { kind = "product", factors = [{ kind = "coordinate", index = 1 }, { kind = "constant", value = 3.0 }] }
"#;
    let cfg = parse_config(text).unwrap();
    let form = cfg.initial.as_ref().unwrap().build(3, 2).unwrap();
    // Channels dx0∧dx1, dx0∧dx2, dx1∧dx2.
    assert_eq!(form.eval(0.0, &[0.0, 0.5, 0.0]), vec![0.0, 1.5, 0.0]);
}

#[test]
fn seeds_must_fit_toml() {
    let cfg = ScenarioConfig::new(Scenario::Kiw, MAX_SEED + 1);
    assert_eq!(cfg.validate()[0].field, "seed");
    assert!(ScenarioConfig::new(Scenario::Kiw, MAX_SEED).validate().is_empty());
}

#[test]
fn wrong_kind_and_shape_are_diagnosed() {
    let d = parse_config("scenario = \"kiw\"\nseed = 1\n[drift]\nkind = \"vortex\"\n").unwrap_err();
    assert!(d.iter().any(|x| x.field == "drift" || x.message.contains("vortex")), "{d:?}");
    let d = parse_config("scenario = \"conservation\"\nseed = 1\nk = 1\n[chain]\nkind = \"rectangle\"\nlo = [0.0, 0.0]\nhi = [1.0, 1.0]\n")
        .unwrap_err();
    assert!(d.iter().any(|x| x.field == "chain"), "{d:?}");
    let d = parse_config("scenario = \"counterexample\"\nseed = 1\n[drift]\nkind = \"rotation\"\nomega = 1.0\n").unwrap_err();
    assert!(d.iter().any(|x| x.field == "drift"), "{d:?}");
}

fn scalar() -> impl Strategy<Value = ScalarSpec> {
    let leaf = prop_oneof![
        (-2.0..2.0f64).prop_map(|value| ScalarSpec::Constant { value }),
        (0usize..2).prop_map(|index| ScalarSpec::Coordinate { index }),
        (prop::collection::vec(-2.0..2.0f64, 2), -1.0..1.0f64).prop_map(|(wavevector, phase)| ScalarSpec::Trigonometric {
            wavevector,
            phase,
            amplitude: 1.0
        }),
    ];
    leaf.prop_recursive(2, 8, 3, |inner| {
        prop_oneof![
            prop::collection::vec(inner.clone(), 1..3).prop_map(|terms| ScalarSpec::Sum { terms }),
            prop::collection::vec(inner.clone(), 1..3).prop_map(|factors| ScalarSpec::Product { factors }),
            (-2.0..2.0f64, inner).prop_map(|(factor, of)| ScalarSpec::Scale { factor, of: Box::new(of) }),
        ]
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn configs_round_trip_through_toml(seed in 0..=MAX_SEED, a in scalar(), b in scalar(), paths in 1usize..500) {
        let mut cfg = ScenarioConfig::new(Scenario::WeakResidual, seed);
        cfg.n = Some(2);
        cfg.k = Some(1);
        cfg.n_paths = Some(paths);
        cfg.drift = Some(FieldSpec::Components { components: vec![a.clone(), b.clone()] });
        cfg.initial = Some(FormSpec::Channels { channels: vec![b, a] });
        let back = parse_config(&cfg.to_toml()).map_err(|d| TestCaseError::fail(format!("{d:?}")))?;
        prop_assert_eq!(back, cfg);
    }

    #[test]
    fn shape_checks_never_panic(n in 0usize..8, k in 0usize..8, eps in prop::collection::vec(-0.5..1.5f64, 0..5)) {
        let mut cfg = ScenarioConfig::new(Scenario::CommutatorSweep, 1);
        cfg.n = Some(n);
        cfg.k = Some(k);
        cfg.eps_list = Some(eps.clone());
        let diags = cfg.validate();
        let shape_ok = (1..=4).contains(&n) && k <= n;
        let eps_ok = eps.len() >= 3 && eps.windows(2).all(|w| w[1] < w[0]) && eps.iter().all(|e| *e > 0.0 && *e < 1.0);
        prop_assert_eq!(diags.is_empty(), shape_ok && eps_ok, "{:?}", diags);
    }
}
