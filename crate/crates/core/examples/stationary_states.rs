//! Residual of the ground state under grid refinement, the Kelvin identity and decay fits.

use wave4d::states::{apply_generator, ground_state, surrogate_closed_form, Generator};
use wave4d::suites::{decay_table, kelvin_check, radial_residual_ladder};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let w = ground_state();
    let ladder = radial_residual_ladder(&w, 20.0, 0.2, 4)?;
    for (h, n) in ladder.steps.iter().zip(&ladder.norms) {
        println!("h = {h:<7} residual {n:.3e}");
    }
    println!("observed orders {:.3?}", ladder.orders);

    let k = kelvin_check(&w, 8.0, 1000, 5.0, 7)?;
    println!("Kelvin vs dilation: max error {:.2e} at {:?}", k.max_error, k.worst);

    let q = surrogate_closed_form();
    let rows = decay_table(
        &[
            ("W".into(), w.clone(), 2.0),
            ("d1 W".into(), apply_generator(w.clone(), Generator::Translation(0)), 3.0),
            ("dilation W".into(), apply_generator(w, Generator::Dilation), 2.0),
            ("surrogate".into(), q.clone(), 3.0),
            ("d4 surrogate".into(), apply_generator(q, Generator::Translation(3)), 4.0),
        ],
        10.0,
    )?;
    for r in rows {
        println!("{:<14} slope {:+.3} (expected {:+.1}), R^2 {:.5}", r.label, r.fit.slope, -r.expected, r.fit.r_squared);
    }
    Ok(())
}
