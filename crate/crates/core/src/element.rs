//! A single shape element: a scaled, axis-aligned anisotropic 3D Gaussian.
//!
//! The field of one element is
//!
//! ```text
//! f(x) = c * exp( sum_d -(p_d - x_d)^2 / (2 r_d^2) )
//! ```
//!
//! with strength `c < 0`, center `p`, and per-axis radii `r_d > 0`. Because
//! `c` is negative the field is negative everywhere and decays to zero away
//! from the center.

use crate::error::{Error, Result};
use crate::real::Real;
use crate::vec3::Vec3;

/// Number of scalar parameters per element: `(c, p_x, p_y, p_z, r_x, r_y, r_z)`.
pub const PARAMS_PER_ELEMENT: usize = 7;

/// Smallest radius tolerated during optimization; below this the `1/r^3`
/// factor in the radius gradient becomes numerically explosive.
pub const RADIUS_FLOOR: f64 = 1e-4;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ShapeElement<T> {
    /// Field strength, strictly negative.
    pub c: T,
    /// Center position.
    pub p: Vec3<T>,
    /// Per-axis radii, strictly positive.
    pub r: Vec3<T>,
}

/// Derivatives of one element's field at a query point.
#[derive(Clone, Copy, Debug)]
pub struct ElementGrad<T> {
    /// `d f / d (c, p_x, p_y, p_z, r_x, r_y, r_z)`.
    pub wrt_params: [T; PARAMS_PER_ELEMENT],
    /// `d f / d x`.
    pub wrt_position: Vec3<T>,
}

impl<T: Real> ShapeElement<T> {
    pub fn new(c: T, p: Vec3<T>, r: Vec3<T>) -> Result<Self> {
        let e = Self { c, p, r };
        e.validate()?;
        Ok(e)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.c.is_finite() && self.p.is_finite() && self.r.is_finite()) {
            return Err(Error::non_finite("shape element parameters"));
        }
        if self.c >= T::zero() {
            return Err(Error::InvalidInput(format!(
                "element strength must be negative, got {}",
                self.c
            )));
        }
        if self.r.min_element() <= T::zero() {
            return Err(Error::InvalidInput(format!(
                "element radii must be positive, got ({}, {}, {})",
                self.r.x, self.r.y, self.r.z
            )));
        }
        Ok(())
    }

    /// Field value `f(x)`, in `[c, 0)`.
    #[inline]
    pub fn eval(&self, x: Vec3<T>) -> T {
        let half = T::of(0.5);
        let mut exponent = T::zero();
        for d in 0..3 {
            let diff = self.p[d] - x[d];
            let rd = self.r[d];
            exponent = exponent - half * (diff * diff) / (rd * rd);
        }
        self.c * exponent.exp()
    }

    /// Normalized falloff `f(x)/c`, in `(0, 1]`.
    #[inline]
    pub fn falloff(&self, x: Vec3<T>) -> T {
        self.eval(x) / self.c
    }

    /// Analytic derivatives of `f` at `x` with respect to the element
    /// parameters and the query position.
    #[inline]
    pub fn grad(&self, x: Vec3<T>) -> ElementGrad<T> {
        self.eval_grad(x).1
    }

    /// Field value and derivatives from a single evaluation. The value is
    /// bit-identical to [`eval`](Self::eval).
    #[inline]
    pub fn eval_grad(&self, x: Vec3<T>) -> (T, ElementGrad<T>) {
        let f = self.eval(x);
        let mut wrt_params = [T::zero(); PARAMS_PER_ELEMENT];
        wrt_params[0] = f / self.c;
        let mut wrt_position = Vec3::zero();
        for d in 0..3 {
            let diff = x[d] - self.p[d];
            let rd = self.r[d];
            let inv_r2 = T::one() / (rd * rd);
            let dp = f * diff * inv_r2;
            wrt_params[1 + d] = dp;
            wrt_params[4 + d] = f * diff * diff * inv_r2 / rd;
            wrt_position[d] = -dp;
        }
        (
            f,
            ElementGrad {
                wrt_params,
                wrt_position,
            },
        )
    }

    /// Flattened parameters in canonical order.
    pub fn params(&self) -> [T; PARAMS_PER_ELEMENT] {
        [
            self.c, self.p.x, self.p.y, self.p.z, self.r.x, self.r.y, self.r.z,
        ]
    }

    pub fn from_params(params: [T; PARAMS_PER_ELEMENT]) -> Result<Self> {
        Self::new(
            params[0],
            Vec3::new(params[1], params[2], params[3]),
            Vec3::new(params[4], params[5], params[6]),
        )
    }
}
