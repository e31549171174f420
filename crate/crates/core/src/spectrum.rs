//! Discrete spectrum of `𝓛 = −Δ − 3Q²` restricted to a symmetry sector.
//!
//! Operators are assembled in flux form on cell-centred grids with Dirichlet
//! walls and then symmetrized by the square root of the radial volume
//! weight, so the stored matrix is exactly symmetric.

use std::f64::consts::PI;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::eigen::{eigs_near, BandMatrix, EigenError};
use crate::field::{Axis, Field, FieldError, RadialSpline, SampledField, Symmetry, TailModel};

#[derive(Debug, Error)]
pub enum SpectrumError {
    #[error("profile symmetry {found:?} does not fit the {sector} sector")]
    SectorMismatch { found: Symmetry, sector: &'static str },
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error(transparent)]
    Eigen(#[from] EigenError),
    #[error(transparent)]
    Field(#[from] FieldError),
    #[error("no negative eigenvalue found")]
    NoUnstableMode,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum Sector {
    /// Functions of `|x|` on `[0, r_max]`.
    Radial { r_max: f64, cells: usize },
    /// Functions of `(x₁, |x̄|)` on `[-half_length, half_length] × [0, r_max]`.
    Cylindrical { half_length: f64, r_max: f64, step: f64 },
}

impl Sector {
    pub fn name(&self) -> &'static str {
        match self {
            Sector::Radial { .. } => "radial",
            Sector::Cylindrical { .. } => "cylindrical",
        }
    }

    pub fn r_max(&self) -> f64 {
        match *self {
            Sector::Radial { r_max, .. } | Sector::Cylindrical { r_max, .. } => r_max,
        }
    }
}

/// Symmetrized matrix of `𝓛` on a sector grid.
#[derive(Clone, Debug)]
pub struct SpectralOperator {
    pub sector: Sector,
    pub matrix: BandMatrix,
    /// Cell-centred radial coordinates.
    pub radial: Axis,
    /// Cell-centred `x₁` coordinates, cylindrical sector only.
    pub axial: Option<Axis>,
    /// Largest value of `3Q²` on the grid.
    pub potential_max: f64,
}

fn looks_radial(q: &dyn crate::field::ScalarField) -> bool {
    [0.3, 1.0, 2.7, 7.0].iter().all(|&r| {
        let a = q.value(&[r, 0.0, 0.0, 0.0]);
        let b = q.value(&[0.0, 0.0, 0.0, r]);
        let c = q.value(&[-r * 0.6, r * 0.8, 0.0, 0.0]);
        (a - b).abs() <= 1e-12 * a.abs().max(1e-300) && (a - c).abs() <= 1e-12 * a.abs().max(1e-300)
    })
}

/// Assembles the symmetrized operator in the requested sector.
pub fn assemble(q: &Field, sector: Sector) -> Result<SpectralOperator, SpectrumError> {
    if q.symmetry() != Symmetry::Cylindrical {
        return Err(SpectrumError::SectorMismatch { found: q.symmetry(), sector: sector.name() });
    }
    match sector {
        Sector::Radial { r_max, cells } => {
            if !looks_radial(q.as_ref()) {
                return Err(SpectrumError::SectorMismatch { found: q.symmetry(), sector: "radial" });
            }
            if cells < 8 || !(r_max > 0.0) {
                return Err(SpectrumError::InvalidGrid(format!("{cells} cells on [0, {r_max}]")));
            }
            let axis = Axis::cell_radial(r_max, cells)?;
            let h = axis.step;
            let mut m = BandMatrix::zeros(cells, 1);
            let mut vmax = 0.0f64;
            for i in 0..cells {
                let r = axis.coord(i);
                let (rp, rm) = (r + 0.5 * h, r - 0.5 * h);
                let v = 3.0 * q.value(&[r, 0.0, 0.0, 0.0]).powi(2);
                vmax = vmax.max(v);
                m.set(i, i, (rp.powi(3) + rm.powi(3)) / (h * h * r.powi(3)) - v);
                if i + 1 < cells {
                    let r1 = axis.coord(i + 1);
                    let off = -rp.powi(3) / (h * h * (r.powi(3) * r1.powi(3)).sqrt());
                    m.set(i, i + 1, off);
                    m.set(i + 1, i, off);
                }
            }
            Ok(SpectralOperator { sector, matrix: m, radial: axis, axial: None, potential_max: vmax })
        }
        Sector::Cylindrical { half_length, r_max, step } => {
            let n1 = (2.0 * half_length / step).round() as usize;
            let nr = (r_max / step).round() as usize;
            if n1 < 8 || nr < 8 {
                return Err(SpectrumError::InvalidGrid(format!("{n1} × {nr} cells")));
            }
            let ax1 = Axis::cell(-half_length, half_length, n1)?;
            let axr = Axis::cell_radial(r_max, nr)?;
            let (h1, hr) = (ax1.step, axr.step);
            // Inner index runs over the shorter axis to keep the band narrow.
            let r_inner = nr <= n1;
            let index = |j: usize, k: usize| if r_inner { j * nr + k } else { k * n1 + j };
            let bw = if r_inner { nr } else { n1 };
            let mut m = BandMatrix::zeros(n1 * nr, bw);
            let mut vmax = 0.0f64;
            for j in 0..n1 {
                for k in 0..nr {
                    let (x1, r) = (ax1.coord(j), axr.coord(k));
                    let (rp, rm) = (r + 0.5 * hr, r - 0.5 * hr);
                    let v = 3.0 * q.value(&[x1, 0.0, 0.0, r]).powi(2);
                    vmax = vmax.max(v);
                    let i = index(j, k);
                    m.set(i, i, 2.0 / (h1 * h1) + (rp * rp + rm * rm) / (hr * hr * r * r) - v);
                    if j + 1 < n1 {
                        let o = index(j + 1, k);
                        m.set(i, o, -1.0 / (h1 * h1));
                        m.set(o, i, -1.0 / (h1 * h1));
                    }
                    if k + 1 < nr {
                        let o = index(j, k + 1);
                        let off = -rp * rp / (hr * hr * r * axr.coord(k + 1));
                        m.set(i, o, off);
                        m.set(o, i, off);
                    }
                }
            }
            Ok(SpectralOperator { sector, matrix: m, radial: axr, axial: Some(ax1), potential_max: vmax })
        }
    }
}

/// One eigenpair with its eigenfunction normalized in `L²(R⁴)`.
#[derive(Clone, Debug)]
pub struct EigenMode {
    pub eigenvalue: f64,
    pub residual: f64,
    /// Nodal values of the eigenfunction (not symmetrized).
    pub nodal: Vec<f64>,
    pub field: Field,
    /// The same eigenfunction as a radial spline, for the radial sector.
    pub spline: Option<Arc<RadialSpline>>,
}

impl EigenMode {
    /// `λ` with `eigenvalue = −λ²`, for negative modes.
    pub fn rate(&self) -> f64 {
        (-self.eigenvalue).max(0.0).sqrt()
    }
}

#[derive(Clone, Debug)]
pub struct SpectralResult {
    pub modes: Vec<EigenMode>,
    pub iterations: usize,
}

impl SpectralResult {
    pub fn negative(&self) -> impl Iterator<Item = &EigenMode> {
        self.modes.iter().filter(|m| m.eigenvalue < 0.0)
    }
}

impl SpectralOperator {
    fn volume_weight(&self, idx: usize) -> f64 {
        match self.sector {
            Sector::Radial { .. } => {
                let r = self.radial.coord(idx);
                2.0 * PI * PI * r.powi(3) * self.radial.step
            }
            Sector::Cylindrical { .. } => {
                let nr = self.radial.count;
                let n1 = self.axial.expect("cylindrical grid").count;
                let k = if nr <= n1 { idx % nr } else { idx / n1 };
                let r = self.radial.coord(k);
                4.0 * PI * r * r * self.radial.step * self.axial.expect("axial").step
            }
        }
    }

    fn to_mode(&self, value: f64, residual: f64, sym: &[f64], trusted_tail: bool) -> Result<EigenMode, SpectrumError> {
        let mut nodal: Vec<f64> = sym.iter().enumerate().map(|(i, s)| s / self.volume_weight(i).sqrt()).collect();
        if nodal[0] < 0.0 {
            nodal.iter_mut().for_each(|v| *v = -*v);
        }
        let mut radial = None;
        let field: Field = match self.sector {
            Sector::Radial { r_max, .. } => {
                let mut spline = RadialSpline::new(self.radial.min, self.radial.step, nodal.clone())?
                    .with_label(format!("mode({value:.6})"));
                if trusted_tail && value < 0.0 {
                    spline = spline.with_tail(TailModel { rate: (-value).sqrt(), power: 1.5 }, 0.6 * r_max);
                }
                let spline = Arc::new(spline);
                radial = Some(spline.clone());
                spline
            }
            Sector::Cylindrical { .. } => {
                let ax1 = self.axial.expect("axial");
                let (n1, nr) = (ax1.count, self.radial.count);
                let values = if nr <= n1 {
                    nodal.clone()
                } else {
                    (0..n1 * nr).map(|f| nodal[(f % nr) * n1 + f / nr]).collect()
                };
                Arc::new(
                    SampledField::new(Symmetry::Cylindrical, vec![ax1, self.radial], values)?
                        .with_label(format!("mode({value:.6})")),
                )
            }
        };
        Ok(EigenMode { eigenvalue: value, residual, nodal, field, spline: radial })
    }

    /// The `k` lowest eigenpairs, computed with a shift below the spectrum.
    pub fn lowest(&self, k: usize) -> Result<SpectralResult, SpectrumError> {
        let shift = self.matrix.lower_bound().min(-self.potential_max) - 0.1;
        let pairs = eigs_near(&self.matrix, shift, k, 1e-10, 2000)?;
        let modes = pairs
            .values
            .iter()
            .zip(&pairs.vectors)
            .zip(&pairs.residuals)
            .map(|((v, vec), r)| self.to_mode(*v, *r, vec, true))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(SpectralResult { modes, iterations: pairs.iterations })
    }

    /// Eigenpairs nearest a shift.
    pub fn near(&self, shift: f64, k: usize) -> Result<SpectralResult, SpectrumError> {
        let pairs = eigs_near(&self.matrix, shift, k, 1e-9, 4000)?;
        let modes = pairs
            .values
            .iter()
            .zip(&pairs.vectors)
            .zip(&pairs.residuals)
            .map(|((v, vec), r)| self.to_mode(*v, *r, vec, false))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(SpectralResult { modes, iterations: pairs.iterations })
    }

    /// Window `(−ε, ε)` used to call an eigenvalue a kernel mode; it must
    /// exceed the `O(R⁻²)` lift of the threshold resonance on a box of radius `R`.
    pub fn kernel_window(&self) -> f64 {
        4.0 / self.sector.r_max().powi(2)
    }

    /// Radius inside which eigenfunctions are compared with continuum profiles.
    pub fn trusted_radius(&self) -> f64 {
        0.5 * self.sector.r_max()
    }
}

/// The `k` lowest eigenpairs of `𝓛_Q`, of which the negative ones are the unstable modes.
pub fn negative_spectrum(q: &Field, sector: Sector, k: usize) -> Result<SpectralResult, SpectrumError> {
    assemble(q, sector)?.lowest(k)
}

/// Normalized unstable radial mode `Y` with `𝓛_Q Y = −λ² Y`.
#[derive(Clone, Debug)]
pub struct UnstableMode {
    pub spline: Arc<RadialSpline>,
    pub rate: f64,
}

/// The lowest radial eigenpair, which must be negative.
pub fn radial_unstable_mode(q: &Field, r_max: f64, cells: usize) -> Result<UnstableMode, SpectrumError> {
    let result = negative_spectrum(q, Sector::Radial { r_max, cells }, 1)?;
    let mode = result.modes.into_iter().next().filter(|m| m.eigenvalue < 0.0).ok_or(SpectrumError::NoUnstableMode)?;
    Ok(UnstableMode { rate: mode.rate(), spline: mode.spline.expect("radial sector yields a spline") })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct KernelReport {
    pub window: f64,
    pub near_zero: Vec<f64>,
    pub expected: usize,
    /// Cosine between each expected generator and the near-zero eigenspace, on the trusted ball.
    pub alignment: Vec<(String, f64)>,
}

impl KernelReport {
    pub fn count(&self) -> usize {
        self.near_zero.len()
    }
}

/// Counts eigenvalues in the kernel window and measures how well each
/// expected generator lies in the span of the corresponding eigenvectors.
pub fn kernel_count(op: &SpectralOperator, expected: &[(String, Field)], probe: usize) -> Result<KernelReport, SpectrumError> {
    let window = op.kernel_window();
    let res = op.near(-0.5 * window, probe.max(expected.len() + 2))?;
    let kept: Vec<&EigenMode> = res.modes.iter().filter(|m| m.eigenvalue.abs() < window).collect();
    let trusted = op.trusted_radius();
    let n = op.matrix.n;
    let coords: Vec<[f64; 4]> = (0..n)
        .map(|i| match op.sector {
            Sector::Radial { .. } => [op.radial.coord(i), 0.0, 0.0, 0.0],
            Sector::Cylindrical { .. } => {
                let ax1 = op.axial.expect("axial");
                let (n1, nr) = (ax1.count, op.radial.count);
                let (j, k) = if nr <= n1 { (i / nr, i % nr) } else { (i % n1, i / n1) };
                [ax1.coord(j), 0.0, 0.0, op.radial.coord(k)]
            }
        })
        .collect();
    let inside: Vec<bool> = coords
        .iter()
        .map(|x| (x[0] * x[0] + x[3] * x[3]).sqrt() <= trusted)
        .collect();
    let weights: Vec<f64> = (0..n).map(|i| if inside[i] { op.volume_weight(i) } else { 0.0 }).collect();
    let ip = |a: &[f64], b: &[f64]| a.iter().zip(b).zip(&weights).map(|((x, y), w)| x * y * w).sum::<f64>();
    // Orthonormal basis of the kept eigenvectors in the trusted inner product.
    let mut basis: Vec<Vec<f64>> = Vec::new();
    for m in &kept {
        let mut v = m.nodal.clone();
        for b in &basis {
            let c = ip(&v, b);
            v.iter_mut().zip(b).for_each(|(x, y)| *x -= c * y);
        }
        let nrm = ip(&v, &v).sqrt();
        if nrm > 0.0 {
            v.iter_mut().for_each(|x| *x /= nrm);
            basis.push(v);
        }
    }
    let alignment = expected
        .iter()
        .map(|(name, g)| {
            let gv: Vec<f64> = coords.iter().map(|x| g.value(x)).collect();
            let gn = ip(&gv, &gv).sqrt();
            let proj: f64 = basis.iter().map(|b| ip(&gv, b).powi(2)).sum::<f64>().sqrt();
            (name.clone(), if gn > 0.0 { proj / gn } else { 0.0 })
        })
        .collect();
    Ok(KernelReport {
        window,
        near_zero: kept.iter().map(|m| m.eigenvalue).collect(),
        expected: expected.len(),
        alignment,
    })
}

/// Fits the exponential rate of a radial mode from `log(r^{3/2}|Y(r)|)` on `[r0, r1]`.
pub fn decay_rate(mode: &EigenMode, r0: f64, r1: f64) -> f64 {
    let pts: Vec<(f64, f64)> = (0..40)
        .map(|i| {
            let r = r0 + (r1 - r0) * i as f64 / 39.0;
            let v = mode.field.value(&[r, 0.0, 0.0, 0.0]).abs();
            (r, 1.5 * r.ln() + v.ln())
        })
        .collect();
    let xs: Vec<f64> = pts.iter().map(|p| p.0).collect();
    let ys: Vec<f64> = pts.iter().map(|p| p.1).collect();
    -crate::states::linear_fit(&xs, &ys).0
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::states::{ground_state, surrogate_closed_form};

    #[test]
    fn operator_is_symmetric() {
        let op = assemble(&ground_state(), Sector::Radial { r_max: 20.0, cells: 400 }).unwrap();
        assert!(op.matrix.is_symmetric());
        let op = assemble(&ground_state(), Sector::Cylindrical { half_length: 6.0, r_max: 6.0, step: 0.5 }).unwrap();
        assert!(op.matrix.is_symmetric());
    }

    #[test]
    fn sector_mismatch_is_rejected() {
        assert!(assemble(&surrogate_closed_form(), Sector::Radial { r_max: 20.0, cells: 100 }).is_err());
        let shifted = crate::states::translate(ground_state(), [1.0, 0.0, 0.0, 0.0]);
        assert!(assemble(&shifted, Sector::Radial { r_max: 20.0, cells: 100 }).is_err());
    }

    #[test]
    fn single_negative_radial_mode() {
        let res = negative_spectrum(&ground_state(), Sector::Radial { r_max: 40.0, cells: 4000 }, 3).unwrap();
        assert_eq!(res.negative().count(), 1);
        let l = res.modes[0].rate();
        assert!((l - 0.7656).abs() < 2e-3, "{l}");
    }
}
