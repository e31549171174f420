//! Finite-difference stencils on closed-form fields.

use super::Point4;

/// Step used by default gradients and Hessians.
pub const DEFAULT_STEP: f64 = 1e-3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum StencilOrder {
    Second,
    Fourth,
}

fn shifted(x: &Point4, axis: usize, d: f64) -> Point4 {
    let mut y = *x;
    y[axis] += d;
    y
}

/// Central first derivative along one axis.
pub fn partial(f: &dyn Fn(&Point4) -> f64, x: &Point4, axis: usize, h: f64, order: StencilOrder) -> f64 {
    match order {
        StencilOrder::Second => (f(&shifted(x, axis, h)) - f(&shifted(x, axis, -h))) / (2.0 * h),
        StencilOrder::Fourth => {
            (-f(&shifted(x, axis, 2.0 * h)) + 8.0 * f(&shifted(x, axis, h))
                - 8.0 * f(&shifted(x, axis, -h))
                + f(&shifted(x, axis, -2.0 * h)))
                / (12.0 * h)
        }
    }
}

pub fn gradient(f: &dyn Fn(&Point4) -> f64, x: &Point4, h: f64) -> Point4 {
    let mut g = [0.0; 4];
    for (axis, gi) in g.iter_mut().enumerate() {
        *gi = partial(f, x, axis, h, StencilOrder::Fourth);
    }
    g
}

/// Hessian from a gradient oracle, symmetrized.
pub fn hessian(g: &dyn Fn(&Point4) -> Point4, x: &Point4, h: f64) -> [[f64; 4]; 4] {
    let mut m = [[0.0; 4]; 4];
    for j in 0..4 {
        let p2 = g(&shifted(x, j, 2.0 * h));
        let p1 = g(&shifted(x, j, h));
        let m1 = g(&shifted(x, j, -h));
        let m2 = g(&shifted(x, j, -2.0 * h));
        for i in 0..4 {
            m[i][j] = (-p2[i] + 8.0 * p1[i] - 8.0 * m1[i] + m2[i]) / (12.0 * h);
        }
    }
    for i in 0..4 {
        for j in (i + 1)..4 {
            let s = 0.5 * (m[i][j] + m[j][i]);
            m[i][j] = s;
            m[j][i] = s;
        }
    }
    m
}

/// Second derivative along one axis.
pub fn second_partial(f: &dyn Fn(&Point4) -> f64, x: &Point4, axis: usize, h: f64, order: StencilOrder) -> f64 {
    let f0 = f(x);
    match order {
        StencilOrder::Second => (f(&shifted(x, axis, h)) - 2.0 * f0 + f(&shifted(x, axis, -h))) / (h * h),
        StencilOrder::Fourth => {
            (-f(&shifted(x, axis, 2.0 * h)) + 16.0 * f(&shifted(x, axis, h)) - 30.0 * f0
                + 16.0 * f(&shifted(x, axis, -h))
                - f(&shifted(x, axis, -2.0 * h)))
                / (12.0 * h * h)
        }
    }
}

pub fn laplacian(f: &dyn Fn(&Point4) -> f64, x: &Point4, h: f64, order: StencilOrder) -> f64 {
    (0..4).map(|axis| second_partial(f, x, axis, h, order)).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn poly(x: &Point4) -> f64 {
        x[0].powi(3) + x[1] * x[2] + (x[3] * 0.5).sin()
    }

    #[test]
    fn gradient_of_cubic_is_exact_to_roundoff() {
        let x = [0.3, -1.2, 0.7, 2.0];
        let g = gradient(&poly, &x, DEFAULT_STEP);
        assert!((g[0] - 3.0 * 0.09).abs() < 1e-9);
        assert!((g[1] - 0.7).abs() < 1e-9);
        assert!((g[2] + 1.2).abs() < 1e-9);
        assert!((g[3] - 0.5 * 1.0f64.cos()).abs() < 1e-9);
    }

    #[test]
    fn laplacian_orders() {
        let x = [0.3, -1.2, 0.7, 2.0];
        let exact = 6.0 * 0.3 - 0.25 * 1.0f64.sin();
        let e2 = (laplacian(&poly, &x, 1e-2, StencilOrder::Second) - exact).abs();
        let e4 = (laplacian(&poly, &x, 1e-2, StencilOrder::Fourth) - exact).abs();
        assert!(e4 < e2);
        assert!(e2 < 1e-4);
    }
}
