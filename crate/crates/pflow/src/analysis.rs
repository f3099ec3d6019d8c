//! Local convergence analysis of the Newton-flow discretizations.
//!
//! Linearized around the solution, one explicit (forward Euler) step maps
//! the error by `z = 1 - h` and one implicit (backward Euler) step by
//! `z = 1 / (1 + h)`; both pencils have that single eigenvalue repeated n
//! times, so the scan works on closed forms instead of n-by-n
//! eigenproblems. A distorted variant `z = (1 - h + eps)(1 + eta)` models
//! how factorization imprecision (`eta`) and accumulated residual error
//! (`eps`) shrink the explicit method's stable step range. Eigenvalues are
//! also mapped to the s-domain, `s = log(z)/h`, where the real part is the
//! decay rate and the imaginary part the oscillation frequency.

use std::io::{self, Write};

use num_complex::Complex;

use crate::scalar::Scalar;

/// Distortion parameters for the explicit-scheme pencil.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Distortion<T> {
    /// multiplicative factorization imprecision
    pub eta: T,
    /// additive accumulated residual error
    pub eps_res: T,
}

/// Which discretization pencil to analyze. Distortion only applies to the
/// explicit scheme, so the implicit variant cannot carry one.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PencilSpec<T> {
    Fem { distortion: Option<Distortion<T>> },
    Bem,
}

impl<T: Scalar> PencilSpec<T> {
    pub fn fem() -> Self {
        PencilSpec::Fem { distortion: None }
    }

    pub fn fem_distorted(eta: T, eps_res: T) -> Self {
        PencilSpec::Fem {
            distortion: Some(Distortion { eta, eps_res }),
        }
    }

    pub fn bem() -> Self {
        PencilSpec::Bem
    }
}

/// Eigenvalue of the linearized step map at step size `h`.
pub fn pencil_eigen<T: Scalar>(spec: &PencilSpec<T>, h: T) -> Complex<T> {
    let zero = T::zero();
    let one = T::one();
    match spec {
        PencilSpec::Fem { distortion: None } => Complex::new(one - h, zero),
        PencilSpec::Fem {
            distortion: Some(d),
        } => Complex::new((one - h + d.eps_res) * (one + d.eta), zero),
        PencilSpec::Bem => Complex::new(one / (one + h), zero),
    }
}

/// Maps a discrete eigenvalue to the s-domain: `s = log(z)/h` on the
/// principal branch, arg in (-pi, pi]. `z = 0` (dead-beat) maps to a
/// real part of negative infinity, the "infinitely fast decay" sentinel.
pub fn z_to_s<T: Scalar>(z: Complex<T>, h: T) -> Complex<T> {
    assert!(h > T::zero(), "step size must be positive");
    if z.norm() == T::zero() {
        return Complex::new(T::neg_infinity(), T::zero());
    }
    Complex::new(z.norm().ln() / h, z.arg() / h)
}

/// Step-size interval on which a pencil is contracting (|z| < 1).
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StabilityBound<T> {
    /// stable for h in (lo, hi)
    Interval { lo: T, hi: T },
    /// stable for every h > lo
    Unbounded { lo: T },
    /// no positive step is stable
    Empty,
}

/// Solves |z(h)| < 1 analytically.
pub fn stability_bound<T: Scalar>(spec: &PencilSpec<T>) -> StabilityBound<T> {
    let zero = T::zero();
    let one = T::one();
    match spec {
        PencilSpec::Bem => StabilityBound::Unbounded { lo: zero },
        PencilSpec::Fem { distortion } => {
            let (eta, eps) = match distortion {
                None => (zero, zero),
                Some(d) => (d.eta, d.eps_res),
            };
            let m = one + eta;
            if m == zero {
                // pencil collapses to z = 0 for every h
                return StabilityBound::Unbounded { lo: zero };
            }
            // |(1 + eps - h) * m| < 1  =>  h in (1 + eps - 1/|m|, 1 + eps + 1/|m|)
            let half_width = one / m.abs();
            let center = one + eps;
            let lo = (center - half_width).max(zero);
            let hi = center + half_width;
            if hi <= lo {
                StabilityBound::Empty
            } else {
                StabilityBound::Interval { lo, hi }
            }
        }
    }
}

/// One grid point of a pencil scan.
#[derive(Debug, Clone, Copy)]
pub struct SpectrumPoint<T> {
    pub h: T,
    pub z: Complex<T>,
    pub s: Complex<T>,
    pub stable: bool,
}

/// Pencil eigenvalues over a step-size grid, in both domains.
#[derive(Debug, Clone)]
pub struct PencilSpectrum<T> {
    pub points: Vec<SpectrumPoint<T>>,
}

/// Tabulates z, s and the stability flag for every grid step size.
pub fn region_scan<T: Scalar>(spec: &PencilSpec<T>, h_grid: &[T]) -> PencilSpectrum<T> {
    let points = h_grid
        .iter()
        .map(|&h| {
            let z = pencil_eigen(spec, h);
            SpectrumPoint {
                h,
                z,
                s: z_to_s(z, h),
                stable: z.norm() < T::one(),
            }
        })
        .collect();
    PencilSpectrum { points }
}

impl<T: Scalar> PencilSpectrum<T> {
    /// Writes `h,z_re,z_im,s_re,s_im,stable` rows. The dead-beat sentinel
    /// comes out as the literal token `-inf` in the s_re column.
    pub fn write_csv(&self, mut w: impl Write) -> io::Result<()> {
        writeln!(w, "h,z_re,z_im,s_re,s_im,stable")?;
        for p in &self.points {
            writeln!(
                w,
                "{},{},{},{},{},{}",
                p.h, p.z.re, p.z.im, p.s.re, p.s.im, p.stable
            )?;
        }
        Ok(())
    }
}
