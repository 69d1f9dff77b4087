//! Finite-difference oracles for verifying analytic derivatives.
//!
//! Everything here is deliberately independent of the analytic gradient code:
//! it only ever calls back into the supplied closure.

use crate::real::Real;

/// Second-order central difference `(f(x+h) - f(x-h)) / 2h`.
pub fn central_diff<T: Real>(f: impl Fn(T) -> T, x: T, h: f64) -> T {
    let h = T::of(h);
    (f(x + h) - f(x - h)) / (T::of(2.0) * h)
}

/// Fourth-order central difference on the stencil `x ± h, x ± 2h`.
///
/// The extra two evaluations buy an `O(h^4)` truncation error, which matters
/// when the differentiated function runs through a steep sigmoid: at `h=1e-4`
/// the second-order stencil bottoms out around `1e-4` relative error there,
/// far above what a correct analytic gradient achieves.
pub fn central_diff4<T: Real>(f: impl Fn(T) -> T, x: T, h: f64) -> T {
    let h = T::of(h);
    let two = T::of(2.0);
    let eight = T::of(8.0);
    let twelve = T::of(12.0);
    (-f(x + two * h) + eight * f(x + h) - eight * f(x - h) + f(x - two * h)) / (twelve * h)
}

/// Gradient of a multivariate function by per-coordinate central differences.
pub fn gradient<T: Real>(
    f: impl Fn(&[T]) -> T,
    x: &[T],
    h: f64,
    fourth_order: bool,
) -> Vec<T> {
    let mut out = Vec::with_capacity(x.len());
    let mut work = x.to_vec();
    for k in 0..x.len() {
        let base = x[k];
        let diff = |v: T| {
            let mut w = work.clone();
            w[k] = v;
            f(&w)
        };
        let g = if fourth_order {
            central_diff4(diff, base, h)
        } else {
            central_diff(diff, base, h)
        };
        out.push(g);
        work[k] = base;
    }
    out
}

/// Relative error with an absolute floor guarding near-zero components.
pub fn relative_error<T: Real>(a: T, b: T, floor: T) -> T {
    (a - b).abs() / a.abs().max(b.abs()).max(floor)
}

/// Panic unless `a` and `b` agree to `rel` relative error or `abs` absolute error.
pub fn assert_close<T: Real>(a: T, b: T, rel: f64, abs: f64) {
    let diff = (a - b).abs();
    if diff <= T::of(abs) {
        return;
    }
    let scale = a.abs().max(b.abs());
    assert!(
        diff <= T::of(rel) * scale,
        "values differ: {a} vs {b} (diff {diff}, rel tol {rel}, abs tol {abs})"
    );
}
