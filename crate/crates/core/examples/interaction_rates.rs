//! Decay of two-soliton interaction integrals and of the interaction term.

use std::time::Instant;

use wave4d::field::{self, FnField, Symmetry};
use wave4d::fit::geometric;
use wave4d::interaction::{pairwise_q_norm, psi_xi_lawcheck, rate_study, verify_g_norms, MultiSolitonConfig, Soliton};
use wave4d::quadrature::QuadratureSpec;
use wave4d::states::{apply_generator, ground_state, surrogate_closed_form, Generator};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let times = geometric(10.0, 2.0, 5);
    let spec = QuadratureSpec::coarse();
    let bracket = FnField::new("<x>^-2", Symmetry::Cylindrical, |x| 1.0 / (1.0 + field::norm4(x).powi(2)))
        .with_decay(2.0)
        .into_field();

    for alphas in [(1.0, 3.0), (1.5, 3.0), (0.8, 3.5), (1.5, 1.5), (1.2, 1.2), (1.0, 1.5), (1.0, 2.0), (1.5, 2.0), (2.0, 2.0)] {
        let clock = Instant::now();
        let s = rate_study(&bracket, alphas, (-0.5, 0.5), &times, &spec)?;
        let extra = s.log.as_ref().map(|l| format!(" log coefficient {:.4e} ± {:.1e}", l.log_coefficient, l.std_error));
        println!(
            "alphas {:?} {:?}: slope {:.4} (predicted {:.2}){} [{:.1?}]",
            alphas,
            s.case,
            s.power.slope,
            s.expected_slope,
            extra.unwrap_or_default(),
            clock.elapsed()
        );
    }

    let pair = |q: &wave4d::field::Field| -> Result<MultiSolitonConfig, Box<dyn std::error::Error>> {
        let s = |l| Soliton::new(q.clone(), 1.0, l);
        Ok(MultiSolitonConfig::new(vec![s(-0.5)?, s(0.5)?])?)
    };
    for (name, q) in [("surrogate", surrogate_closed_form()), ("ground state", ground_state())] {
        let clock = Instant::now();
        let r = verify_g_norms(&pair(&q)?, &times, &spec)?;
        println!("{name}: G1 slope {:.4}, monotone {} [{:.1?}]", r.g1_fit.slope, r.g1_monotone, clock.elapsed());
    }

    let cfg = pair(&surrogate_closed_form())?;
    for &t in &times {
        let p = pairwise_q_norm(&cfg, t, &spec)?;
        let s = p.pairs[0];
        println!("t = {t}: total {:.4e}, far {:.3e}, near {:.3e}", p.total, s.far, s.near);
    }

    let psi = apply_generator(surrogate_closed_form(), Generator::Conformal(3));
    let long = geometric(100.0, 2.0, 5);
    for (l, partner) in [(0.0, 0.5), (0.6, 0.0)] {
        let sigma = 0.1 * f64::abs(l - partner);
        let clock = Instant::now();
        let r = psi_xi_lawcheck(&psi, l, partner, &long, sigma, &spec)?;
        println!(
            "speed {l}: log slope {:.4} vs {:.4} (relative error {:.2e}), cross spread {:.3e} [{:.1?}]",
            r.fit.log_coefficient,
            r.expected,
            r.relative_error,
            r.cross_spread,
            clock.elapsed()
        );
    }
    Ok(())
}
