//! Evolution of single ground states on the cylindrical grid: persistence under
//! refinement, boosted centre speed, conservation and linearized mode rates.

use std::time::Instant;

use wave4d::evolve::CylindricalGrid;
use wave4d::lorentz::Speed;
use wave4d::shoot::{corrected_amplitude, measure_mode_rates, stationarity_study, Background, Tube};
use wave4d::spectrum::radial_unstable_mode;
use wave4d::states::ground_state;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let w = ground_state();
    let mode = radial_unstable_mode(&w, 30.0, 1500)?;
    let tube = Tube { horizon: 45.0, ..Tube::default() };
    let clock = Instant::now();

    for (l, lo, hi) in [(0.0, -20.0, 20.0), (0.4, -20.0, 32.0)] {
        let g0 = CylindricalGrid::new(lo, hi, 20.0, 0.2)?;
        let bgs = [g0, g0.refined()]
            .into_iter()
            .map(|g| Background::new(g, w.clone(), Speed::new(l)?, &mode))
            .collect::<Result<Vec<_>, _>>()?;
        let study = stationarity_study(&bgs, (-0.2, 0.2), &tube, 45, 30.0)?;
        println!("speed {l}:");
        for r in &study.rows {
            println!(
                "  h {:<5} eps* {:+.5}  max dev {:.3e}  centre speed {:.5}  drift E {:.1e} P {:.1e}",
                r.h, r.corrected_amplitude, r.max_deviation, r.center_speed, r.energy_drift, r.momentum_drift
            );
        }
        println!("  orders {:.3?} [{:.1?}]", study.orders, clock.elapsed());
    }

    for (l, hi) in [(0.0, 20.0), (0.5, 26.0)] {
        let grid = CylindricalGrid::new(-20.0, hi, 20.0, 0.2)?;
        let bg = Background::new(grid, w.clone(), Speed::new(l)?, &mode)?;
        let eps = corrected_amplitude(&bg, (-0.2, 0.2), &tube, 45)?;
        let m = measure_mode_rates(&bg, eps, 1e-3, (0.5, 3.5))?;
        println!(
            "speed {l}: alpha {:.5}, growth {:.5} ({:.2e}), decay {:.5} ({:.2e}) [{:.1?}]",
            m.alpha,
            m.growth,
            m.growth_error(),
            m.decay,
            m.decay_error(),
            clock.elapsed()
        );
    }
    Ok(())
}
