//! Test functionals on an empirical measure and on the exact Gaussian law.

use mckean::measures::{functional_eval, functional_on_gaussian, Functional, FUNCTIONAL_IDS};
use mckean::noise::InitialLaw;
use mckean::DiscreteMeasure;

fn main() -> mckean::Result<()> {
    let law = InitialLaw { mean: 0.5, variance: 2.0 };
    let sample = law.sample(9, 0, 20_000, 1)?;
    let mu = DiscreteMeasure::uniform(1, sample)?;
    for (id, description) in FUNCTIONAL_IDS {
        let phi = Functional::from_id(id)?;
        let empirical = functional_eval(&phi, &mu)?;
        let exact = functional_on_gaussian(&phi, law.mean, law.variance)?;
        println!("{id:<22} {:>10.5} {:>10.5}   {description}", empirical.value, exact);
    }
    Ok(())
}
