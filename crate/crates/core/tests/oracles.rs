//! Library results against closed forms and an independent eigenvalue solver.

mod common;

use std::f64::consts::PI;

use wave4d::energy::conserved_ep;
use wave4d::field::{self, FieldPair, Symmetry};
use wave4d::fit::geometric;
use wave4d::interaction::psi_xi_lawcheck;
use wave4d::lorentz::{boost, Speed};
use wave4d::quadrature::{Quadrature, QuadratureSpec};
use wave4d::spectrum::radial_unstable_mode;
use wave4d::states::{apply_generator, dilate, ground_state, kelvin, surrogate_closed_form, Generator};

fn radius(x: &[f64; 4]) -> f64 {
    field::norm4(x)
}

#[test]
fn ground_state_matches_closed_form() {
    let w = ground_state();
    for x in common::box_points(200, 6.0, 1) {
        let exact = common::ground_state(radius(&x));
        assert!((w.value(&x) - exact).abs() <= 1e-15 * exact.max(1.0));
    }
}

#[test]
fn kelvin_image_of_ground_state() {
    let k = kelvin(ground_state()).unwrap();
    let d = dilate(ground_state(), 8.0).unwrap();
    for x in common::box_points(500, 5.0, 2) {
        let exact = common::kelvin_image(radius(&x));
        assert!((k.value(&x) - exact).abs() <= 1e-12 * exact, "kelvin at {x:?}");
        assert!((d.value(&x) - exact).abs() <= 1e-12 * exact, "dilation at {x:?}");
    }
}

#[test]
fn quartic_integral_and_energy() {
    let w = ground_state();
    let rule = Quadrature::new(Symmetry::Cylindrical, &QuadratureSpec::default()).unwrap();
    let quartic = rule.integrate(|x| w.value(x).powi(4));
    assert!((quartic / common::quartic_integral() - 1.0).abs() < 1e-6, "{quartic}");

    let pair = FieldPair::joined(w, field::zero(Symmetry::Cylindrical));
    let (e, p) = conserved_ep(&pair, &QuadratureSpec::default()).unwrap();
    assert!((e / common::ground_energy() - 1.0).abs() < 1e-6, "E = {e}");
    assert!(p.abs() < 1e-12);
}

#[test]
fn generators_match_hand_derivatives() {
    let w = ground_state();
    let dilation = apply_generator(w.clone(), Generator::Dilation);
    let slope = apply_generator(w.clone(), Generator::Translation(0));
    let conformal = apply_generator(w, Generator::Conformal(0));
    for x in common::box_points(200, 4.0, 3) {
        let r = radius(&x);
        let q = common::ground_state(r);
        assert!((dilation.value(&x) - q * q * (8.0 - r * r) / 8.0).abs() < 1e-7);
        assert!((slope.value(&x) + x[0] * q * q / 4.0).abs() < 1e-7);
        // The conformal direction along x₁ is a multiple of ∂₁W.
        assert!((conformal.value(&x) + 2.0 * x[0] * q * q).abs() < 1e-6);
    }
}

#[test]
fn boosted_ground_state_is_contracted() {
    let l = Speed::new(0.6).unwrap();
    let gamma = 1.0 / (1.0f64 - 0.36).sqrt();
    let b = boost(ground_state(), l);
    for x in common::box_points(200, 5.0, 4) {
        let y = [gamma * x[0], x[1], x[2], x[3]];
        assert!((b.value(&x) - common::ground_state(radius(&y))).abs() < 1e-14);
    }
}

#[test]
fn surrogate_closed_form_values() {
    let q = surrogate_closed_form();
    for x in common::box_points(200, 4.0, 5) {
        let exact = 64.0 * x[3] / (1.0 + 8.0 * field::dot4(&x, &x)).powi(2);
        assert!((q.value(&x) - exact).abs() < 1e-13);
    }
}

#[test]
fn unstable_rate_matches_numerov_shooting() {
    let oracle = common::numerov_rate(30.0, 1e-3);
    let finer = common::numerov_rate(30.0, 5e-4);
    assert!((oracle - finer).abs() < 1e-5, "oracle not converged: {oracle} vs {finer}");
    let mode = radial_unstable_mode(&ground_state(), 30.0, 1500).unwrap();
    let rel = (mode.rate / finer - 1.0).abs();
    assert!(rel < 1e-3, "grid {} vs shooting {finer}", mode.rate);
}

#[test]
fn self_pairing_grows_at_the_closed_form_rate() {
    let psi = apply_generator(surrogate_closed_form(), Generator::Conformal(3));
    let times = geometric(100.0, 2.0, 5);
    for (l, partner) in [(0.0, 0.5), (0.6, 0.0)] {
        let r = psi_xi_lawcheck(&psi, l, partner, &times, 0.1 * f64::abs(l - partner), &QuadratureSpec::coarse()).unwrap();
        let exact = 2.0 * PI * PI * (1.0 - l * l).sqrt();
        assert!((r.expected - exact).abs() < 1e-12);
        assert!((r.fit.log_coefficient / exact - 1.0).abs() < 0.05, "speed {l}: {}", r.fit.log_coefficient);
    }
}
