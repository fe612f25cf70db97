//! Classical equations hidden in the k-form equation: continuity for top
//! forms, transport for functions, and magnetic induction for 2-forms in R³.

use kform::advection::{specialization_suite, SpecializationSettings};

fn main() -> kform::Result<()> {
    for check in specialization_suite(&SpecializationSettings::default())? {
        println!(
            "{:<22} max residual {:.2e} (tolerance {:.0e})",
            check.name, check.max_residual, check.tolerance
        );
    }
    Ok(())
}
