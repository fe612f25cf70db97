//! Mollified Hölder drifts with alternating offsets send noiseless flows from
//! the origin onto different branches, while with noise consecutive flows
//! draw together as ε shrinks.

use kform::counterexample::{noise_selection_experiment, NoiseSelectionSettings};

fn main() -> kform::Result<()> {
    let settings = NoiseSelectionSettings {
        eps_list: vec![0.2, 0.1, 0.05, 0.025],
        paths: 32,
        ..Default::default()
    };
    let r = noise_selection_experiment(&settings, true)?;
    println!("with noise (decreasing: {}):", r.noisy_decreasing);
    print!("{}", r.noisy.to_csv_string());
    println!("without noise:");
    print!("{}", r.noiseless.to_csv_string());
    Ok(())
}
