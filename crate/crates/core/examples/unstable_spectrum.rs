//! The single negative radial eigenvalue of the operator linearized at the ground state.

use wave4d::states::ground_state;
use wave4d::suites::{shooting_rate, spectral_suite};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let w = ground_state();
    let s = spectral_suite(&w, 30.0, 1500)?;
    println!("lowest eigenvalues {:.5?}", s.eigenvalues);
    println!("negative count {}, rate {:.6}", s.negative_count, s.rate);
    println!("decay fit on {:?}: {:.5} (relative error {:.2e})", s.decay_window, s.decay_rate, s.decay_error());
    for (cells, rate) in &s.refinement {
        println!("cells {cells:>5}: rate {rate:.7}");
    }
    let shot = shooting_rate(&w, 25.0, (0.3, 1.5), 1e-9)?;
    println!("shooting rate {shot:.7}, relative gap {:.2e}", (s.rate / shot - 1.0).abs());
    Ok(())
}
