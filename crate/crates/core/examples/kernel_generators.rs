//! Every symmetry generator of the ground state lies in the kernel of the
//! linearized operator, and triple products of kernel fields cancel against it.

use std::time::Instant;

use wave4d::states::{ground_state, Generator};
use wave4d::suites::{cancellation_spec, cancellation_study, generator_residuals};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let w = ground_state();
    let clock = Instant::now();
    for row in generator_residuals(&w, &Generator::all(), 5.0, 0.2, 3)? {
        if row.ladder.identically_zero() {
            println!("{:<9} identically zero", row.generator);
        } else {
            println!("{:<9} norms {:.3?} orders {:.3?}", row.generator, row.ladder.norms, row.ladder.orders);
        }
    }
    println!("[{:.1?}]", clock.elapsed());

    let clock = Instant::now();
    let study = cancellation_study(&w, 20, 11, &cancellation_spec())?;
    for (k, c) in study.samples.iter().enumerate() {
        println!("triple {k:>2}: {:+.3e} / scale {:.3e} = {:.2e}", c.value, c.scale, c.ratio());
    }
    println!("worst ratio {:.2e}; bump control ratio {:.2e} [{:.1?}]", study.worst_ratio, study.control.ratio(), clock.elapsed());
    Ok(())
}
