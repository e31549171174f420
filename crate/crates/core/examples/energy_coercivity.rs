//! Coercivity of the linearized energy around a boosted ground state, with
//! and without a polynomial weight, plus the functionals of a prepared state.

use std::time::Instant;

use wave4d::energy::{energy_report, zeta_smallness, CoercivityProbe, SpeedCutoff, WeightZeta};
use wave4d::fit::geometric;
use wave4d::lorentz::Speed;
use wave4d::modulation::ground_state_setup;
use wave4d::quadrature::QuadratureSpec;
use wave4d::spectrum::radial_unstable_mode;
use wave4d::states::{apply_generator, ground_state, Generator};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let w = ground_state();
    let mode = radial_unstable_mode(&w, 30.0, 1500)?;
    let kernel: Vec<_> =
        [Generator::Dilation, Generator::Translation(0)].map(|g| apply_generator(w.clone(), g)).into();
    for l in [0.0, 0.5] {
        let clock = Instant::now();
        let probe = CoercivityProbe {
            speed: Speed::new(l)?,
            profile: w.clone(),
            mode: mode.clone(),
            kernel: kernel.clone(),
            samples: 100,
            seed: 7,
            spread: 3.0,
            gammas: vec![0.025, 0.05, 0.1],
            spec: QuadratureSpec::default(),
        };
        let r = probe.run()?;
        println!(
            "speed {l}: projected minimum {:.4e} (sample {}), control {:.4e}, kernel {:.2e} [{:.1?}]",
            r.min_ratio,
            r.argmin,
            r.negative_control,
            r.kernel_ratio,
            clock.elapsed()
        );
        for z in &r.weighted {
            println!("  gamma {}: weighted minimum {:.4e}, identity mismatch {:.2e}", z.gamma, z.min_ratio, z.identity_error);
        }
    }

    let cutoff = SpeedCutoff::new(&[-0.5, 0.5])?;
    for gamma in [0.025, 0.05, 0.1] {
        let s = zeta_smallness(&cutoff, WeightZeta::new(gamma)?, &geometric(1e3, 10.0, 3))?;
        println!("gamma {gamma}: omega slope {:.4}, chi slope {:.4} (target {})", s.omega_fit.slope, s.chi_fit.slope, -2.0 * gamma);
    }

    let mut spec = QuadratureSpec::coarse();
    spec.r_max = 60.0;
    spec.angular_nodes = 8;
    let setup = ground_state_setup(&[-0.5, 0.5], spec.clone())?;
    let t = 20.0;
    let basis = setup.basis(t)?;
    let bound = t.powf(-3.5);
    let data = basis.build_initial_data(&[vec![0.5 * bound], vec![-0.5 * bound]])?;
    let mut cfg = setup.cfg.clone();
    cfg = cfg.with_parameters(data.a.clone(), data.b.clone())?;
    let e = energy_report(&data.phi, &cfg, t, &spec)?;
    println!(
        "t = {t}: E {:.3e}, P {:.3e}, G {:.3e}, J {:.3e}, K {:.3e} (single pass {:.3e}), N_omega {:.3e} >= {:.3e}",
        e.e,
        e.p,
        e.g,
        e.j_total,
        e.k,
        e.k_single_pass,
        e.n_omega,
        (1.0 - cutoff.bar()) * e.omega_plain
    );
    Ok(())
}
