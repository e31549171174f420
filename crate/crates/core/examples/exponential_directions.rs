//! Growing and decaying directions of boosted ground states and their
//! orthogonality to the boosted kernel.

use std::time::Instant;

use wave4d::quadrature::QuadratureSpec;
use wave4d::spectrum::radial_unstable_mode;
use wave4d::states::{apply_generator, ground_state, Generator};
use wave4d::suites::exp_identities;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let w = ground_state();
    let mode = radial_unstable_mode(&w, 45.0, 18000)?;
    let kernel = [
        ("conf4".to_string(), apply_generator(w.clone(), Generator::Conformal(3))),
        ("dilation".to_string(), apply_generator(w.clone(), Generator::Dilation)),
        ("d1".to_string(), apply_generator(w.clone(), Generator::Translation(0))),
    ];
    let spec = QuadratureSpec { r_max: 90.0, ..QuadratureSpec::default() };
    let clock = Instant::now();
    for row in exp_identities(&w, &mode, &[0.0, 0.3, 0.6], &kernel, 1e-2, &spec)? {
        println!(
            "speed {}: alpha {:.5}, residuals {:.2e} / {:.2e}, worst pairing ratio {:.2e}",
            row.speed,
            row.alpha,
            row.plus_residual,
            row.minus_residual,
            row.worst_pairing()
        );
        for (name, c) in &row.pairings {
            println!("    {name:<16} {:+.3e} (scale {:.3e})", c.value, c.scale);
        }
    }
    println!("[{:.1?}]", clock.elapsed());
    Ok(())
}
