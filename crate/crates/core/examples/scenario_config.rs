//! Builds a scenario config in code, prints it as TOML, shows the validator
//! at work on a broken copy, and runs the scenario in memory.

use kform::registry::{FieldSpec, ScalarSpec};
use kform::runner::{execute_with_threads, Scenario, ScenarioConfig};

fn main() -> kform::Result<()> {
    let mut cfg = ScenarioConfig::new(Scenario::NoiseSelection, 17);
    cfg.eps_list = Some(vec![0.2, 0.1, 0.05]);
    cfg.params.insert("amplitude".into(), toml::Value::Float(0.8));
    println!("{}", cfg.to_toml());

    let mut broken = cfg.clone();
    broken.k = Some(3);
    broken.drift = Some(FieldSpec::Components {
        components: vec![ScalarSpec::Coordinate { index: 4 }],
    });
    for d in broken.validate() {
        println!("rejected: {d}");
    }

    let outcome = execute_with_threads(&cfg, false, Some(1))?;
    for v in &outcome.verdicts {
        println!("{}", v.line());
    }
    for name in outcome.artifacts.names() {
        println!("report file: {name}");
    }
    Ok(())
}
