//! Compactly supported product kernels, including higher-order profiles.
//!
//! A [`KernelSpec`] pairs a univariate profile on `[-1, 1]` with a dimension
//! `d`; the multivariate kernel is the product of the profile over the `d`
//! coordinates. The order `r` of a profile is the index of its first
//! non-vanishing moment beyond the zeroth.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Univariate kernel profiles supported on `[-1, 1]`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Profile {
    /// `K(u) = 3/4 (1 - u²)`, order 2.
    Epanechnikov,
    /// `K(u) = 15/32 (3 - 10u² + 7u⁴)`, order 4. Takes negative values
    /// for `u² > 3/7`.
    Epanechnikov4,
    /// `K(u) = 15/16 (1 - u²)²`, order 2.
    Biweight,
}

impl Profile {
    pub const ALL: [Profile; 3] = [
        Profile::Epanechnikov,
        Profile::Epanechnikov4,
        Profile::Biweight,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Profile::Epanechnikov => "epanechnikov",
            Profile::Epanechnikov4 => "epanechnikov4",
            Profile::Biweight => "biweight",
        }
    }

    /// Moment-vanishing order `r`.
    pub fn order(self) -> u32 {
        match self {
            Profile::Epanechnikov | Profile::Biweight => 2,
            Profile::Epanechnikov4 => 4,
        }
    }

    /// Whether the profile is nonnegative everywhere.
    pub fn is_nonnegative(self) -> bool {
        !matches!(self, Profile::Epanechnikov4)
    }

    /// Evaluates the profile; zero outside `[-1, 1]`.
    #[inline]
    pub fn eval<T: Scalar>(self, u: T) -> T {
        let u2 = u * u;
        if u2 > T::one() {
            return T::zero();
        }
        match self {
            Profile::Epanechnikov => T::lit(0.75) * (T::one() - u2),
            Profile::Epanechnikov4 => {
                T::lit(15.0 / 32.0) * (T::lit(3.0) - T::lit(10.0) * u2 + T::lit(7.0) * u2 * u2)
            }
            Profile::Biweight => {
                let t = T::one() - u2;
                T::lit(15.0 / 16.0) * t * t
            }
        }
    }

    /// Largest absolute value of the profile (attained at the origin).
    pub fn peak(self) -> f64 {
        self.eval(0.0_f64)
    }
}

impl fmt::Display for Profile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Profile {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Profile::ALL
            .into_iter()
            .find(|p| p.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::InvalidInput(format!("unknown kernel profile `{s}`")))
    }
}

/// Product kernel on `R^d` built from a univariate profile.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct KernelSpec {
    pub profile: Profile,
    pub dim: usize,
}

impl KernelSpec {
    pub fn new(profile: Profile, dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidInput(
                "kernel dimension must be at least 1".into(),
            ));
        }
        Ok(Self { profile, dim })
    }

    /// Fourth-order Epanechnikov product kernel.
    pub fn epanechnikov4(dim: usize) -> Result<Self> {
        Self::new(Profile::Epanechnikov4, dim)
    }

    pub fn order(&self) -> u32 {
        self.profile.order()
    }

    /// Support half-width `C`; the kernel vanishes outside `[-C, C]^d`.
    pub fn support(&self) -> f64 {
        1.0
    }

    /// Largest absolute value of the product kernel, `K(0)^d`.
    pub fn peak(&self) -> f64 {
        self.profile.peak().powi(self.dim as i32)
    }

    /// `K((x - y) / h)` for the product kernel.
    #[inline]
    pub fn weight<T: Scalar>(&self, x: &[T], y: &[T], inv_h: T) -> T {
        debug_assert_eq!(x.len(), self.dim);
        debug_assert_eq!(y.len(), self.dim);
        let mut w = T::one();
        for (a, b) in x.iter().zip(y) {
            let k = self.profile.eval((*a - *b) * inv_h);
            if k == T::zero() {
                return T::zero();
            }
            w = w * k;
        }
        w
    }
}

/// `∫ u^k K(u) du` of the univariate profile, by adaptive Simpson quadrature.
pub fn kernel_moments(kernel: &KernelSpec, k: u32) -> f64 {
    let c = kernel.support();
    let profile = kernel.profile;
    let f = |u: f64| u.powi(k as i32) * profile.eval(u);
    adaptive_simpson(&f, -c, c, 1e-14, 50)
}

fn adaptive_simpson<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64, max_depth: u32) -> f64 {
    let fa = f(a);
    let fb = f(b);
    let m = 0.5 * (a + b);
    let fm = f(m);
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    simpson_step(f, a, b, fa, fm, fb, whole, tol, max_depth)
}

#[allow(clippy::too_many_arguments)]
fn simpson_step<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> f64 {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * tol {
        return left + right + delta / 15.0;
    }
    simpson_step(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)
        + simpson_step(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn epanechnikov4_moment_table() {
        let k = KernelSpec::epanechnikov4(1).unwrap();
        assert!((kernel_moments(&k, 0) - 1.0).abs() < 1e-10);
        assert!(kernel_moments(&k, 1).abs() < 1e-10);
        assert!(kernel_moments(&k, 2).abs() < 1e-10);
        assert!(kernel_moments(&k, 3).abs() < 1e-10);
        // fourth moment is the first non-vanishing one: -1/21
        assert!((kernel_moments(&k, 4) + 1.0 / 21.0).abs() < 1e-10);
    }

    #[test]
    fn every_profile_integrates_to_one_and_respects_its_order() {
        for p in Profile::ALL {
            let k = KernelSpec::new(p, 1).unwrap();
            assert!((kernel_moments(&k, 0) - 1.0).abs() < 1e-10, "{p}");
            for m in 1..p.order() {
                assert!(kernel_moments(&k, m).abs() < 1e-10, "{p} moment {m}");
            }
            assert!(kernel_moments(&k, p.order()).abs() > 1e-3, "{p}");
        }
    }

    #[test]
    fn profiles_vanish_outside_support_and_are_symmetric() {
        for p in Profile::ALL {
            assert_eq!(p.eval(1.0001_f64), 0.0);
            assert_eq!(p.eval(-3.0_f64), 0.0);
            for u in [0.1, 0.37, 0.8, 0.99] {
                assert_eq!(p.eval(u), p.eval(-u));
            }
        }
    }

    #[test]
    fn product_weight_multiplies_coordinates() {
        let k = KernelSpec::new(Profile::Epanechnikov, 2).unwrap();
        let w = k.weight(&[0.5, 0.0], &[0.0, 0.25], 1.0);
        let expect = Profile::Epanechnikov.eval(0.5) * Profile::Epanechnikov.eval(-0.25);
        assert_eq!(w, expect);
        assert!((k.peak() - 0.5625).abs() < 1e-15);
    }

    #[test]
    fn profile_names_round_trip() {
        for p in Profile::ALL {
            assert_eq!(p.name().parse::<Profile>().unwrap(), p);
        }
        assert!("gaussian".parse::<Profile>().is_err());
        assert!(KernelSpec::new(Profile::Biweight, 0).is_err());
    }
}
