//! Fitting losses with analytic gradients.
//!
//! Three terms, each a batch mean:
//!
//! * uniform-sample classification: `beta * G(x)^2` for inside points,
//!   `(1 - G(x))^2` for outside points, where
//!   `G(x) = Sigmoid(alpha * (F(x) - isolevel))`;
//! * near-surface classification: the same expression on near-surface points;
//! * center containment, per element: if the center lies in the working box,
//!   pull it inside the shape via `w_inside * G(p)^2`, otherwise pull it back
//!   toward the box via `w_outside * sum_d max(0, lo_d - p_d, p_d - hi_d)^2`.
//!
//! Gradients flow over the constrained parameter vector `(c, p, r)` per
//! element; the fitter maps them into its unconstrained space. Evaluation is
//! chunked so results stay bit-identical across runs and thread counts.

use rayon::prelude::*;

use crate::element::PARAMS_PER_ELEMENT;
use crate::real::{sigmoid, Real};
use crate::template::{Label, Template};
use crate::vec3::{Aabb, Vec3};

/// Default sharpness of the soft classifier.
pub const DEFAULT_BETA: f64 = 10.0;

/// Fixed chunk size for parallel batch reduction. Chunk boundaries and the
/// final combine order never depend on the thread count, so losses are
/// reproducible bit for bit.
const LOSS_CHUNK: usize = 512;

/// Hyperparameters of the total loss.
#[derive(Clone, Debug)]
pub struct LossWeights<T> {
    /// Sharpness of the soft inside/outside classifier.
    pub alpha: T,
    /// Extra weight on misclassified inside samples.
    pub beta: T,
    /// Weight of the uniform-sample term in the total.
    pub w_uniform: T,
    /// Weight of the near-surface term in the total.
    pub w_surface: T,
    /// Center term weight when the center is inside the working box.
    pub w_center_inside: T,
    /// Center term weight when the center has left the working box.
    pub w_center_outside: T,
    /// Box that element centers should stay within.
    pub center_box: Aabb<T>,
}

impl<T: Real> Default for LossWeights<T> {
    fn default() -> Self {
        Self {
            alpha: T::of(crate::template::DEFAULT_ALPHA),
            beta: T::of(DEFAULT_BETA),
            w_uniform: T::one(),
            w_surface: T::of(0.1),
            w_center_inside: T::of(10.0 / 3.0),
            w_center_outside: T::of(0.01),
            center_box: Aabb::unit(),
        }
    }
}

/// One loss term: scalar value plus gradient over the flattened parameters.
#[derive(Clone, Debug)]
pub struct LossTerm<T> {
    pub value: T,
    pub grad: Vec<T>,
}

/// All loss terms at one parameter vector, pre-combined.
#[derive(Clone, Debug)]
pub struct LossReport<T> {
    /// `w_uniform * uniform + w_surface * surface + center`.
    pub total: T,
    pub uniform: T,
    pub surface: T,
    pub center: T,
    /// Gradient of `total` over the flattened `7N` parameters.
    pub grad: Vec<T>,
}

/// Shared classification loss used by both sample-based terms.
fn classification_term<T: Real>(
    template: &Template<T>,
    points: &[Vec3<T>],
    labels: &[Label],
    alpha: T,
    beta: T,
) -> LossTerm<T> {
    assert_eq!(points.len(), labels.len(), "points and labels must pair up");
    let np = template.len() * PARAMS_PER_ELEMENT;
    // An empty batch contributes nothing, so callers can drop a term by
    // passing no samples for it.
    if points.is_empty() {
        return LossTerm {
            value: T::zero(),
            grad: vec![T::zero(); np],
        };
    }

    let iso = template.isolevel();
    let one = T::one();
    let two = T::of(2.0);
    let partials: Vec<(T, Vec<T>)> = points
        .par_chunks(LOSS_CHUNK)
        .zip(labels.par_chunks(LOSS_CHUNK))
        .map(|(xs, ls)| {
            let mut scratch = vec![T::zero(); np];
            let mut grad = vec![T::zero(); np];
            let mut value = T::zero();
            for (x, label) in xs.iter().zip(ls) {
                let (f, _) = template.grad_into(*x, &mut scratch);
                let g = sigmoid(alpha * (f - iso));
                let (term, dterm_dg) = match label {
                    Label::Inside => (beta * g * g, two * beta * g),
                    Label::Outside => {
                        let miss = one - g;
                        (miss * miss, -two * miss)
                    }
                };
                value += term;
                let w = dterm_dg * g * (one - g) * alpha;
                for (gk, sk) in grad.iter_mut().zip(&scratch) {
                    *gk += w * *sk;
                }
            }
            (value, grad)
        })
        .collect();

    let mut value = T::zero();
    let mut grad = vec![T::zero(); np];
    for (v, g) in partials {
        value += v;
        for (a, b) in grad.iter_mut().zip(g) {
            *a += b;
        }
    }
    let inv_n = one / T::of(points.len() as f64);
    value *= inv_n;
    for a in &mut grad {
        *a *= inv_n;
    }
    LossTerm { value, grad }
}

/// Classification loss over uniformly drawn volume samples.
pub fn loss_uniform<T: Real>(
    template: &Template<T>,
    points: &[Vec3<T>],
    labels: &[Label],
    weights: &LossWeights<T>,
) -> LossTerm<T> {
    classification_term(template, points, labels, weights.alpha, weights.beta)
}

/// Classification loss over near-surface samples. Same expression as
/// [`loss_uniform`], kept separate so the two batches can be weighted
/// independently in the total.
pub fn loss_surface<T: Real>(
    template: &Template<T>,
    points: &[Vec3<T>],
    labels: &[Label],
    weights: &LossWeights<T>,
) -> LossTerm<T> {
    classification_term(template, points, labels, weights.alpha, weights.beta)
}

/// Center containment loss, a mean over elements.
///
/// For a center inside the working box the term runs through the field, so
/// its gradient touches every parameter; the evaluation point is the center
/// itself, which adds the spatial gradient onto that element's position
/// slots. For a center outside the box the term is a plain squared distance
/// to the box, local to that element's position.
pub fn loss_center<T: Real>(template: &Template<T>, weights: &LossWeights<T>) -> LossTerm<T> {
    let n = template.len();
    let np = n * PARAMS_PER_ELEMENT;
    let iso = template.isolevel();
    let one = T::one();
    let two = T::of(2.0);
    let mut value = T::zero();
    let mut grad = vec![T::zero(); np];
    let mut scratch = vec![T::zero(); np];

    for (i, e) in template.elements().iter().enumerate() {
        let base = i * PARAMS_PER_ELEMENT;
        if weights.center_box.contains(e.p) {
            let (f, grad_position) = template.grad_into(e.p, &mut scratch);
            let g = sigmoid(weights.alpha * (f - iso));
            value += weights.w_center_inside * g * g;
            let w = weights.w_center_inside * two * g * g * (one - g) * weights.alpha;
            for (a, b) in grad.iter_mut().zip(&scratch) {
                *a += w * *b;
            }
            grad[base + 1] += w * grad_position.x;
            grad[base + 2] += w * grad_position.y;
            grad[base + 3] += w * grad_position.z;
        } else {
            let mut dist2 = T::zero();
            for d in 0..3 {
                let v = e.p[d];
                let lo = weights.center_box.min[d];
                let hi = weights.center_box.max[d];
                if v < lo {
                    let excess = lo - v;
                    dist2 += excess * excess;
                    grad[base + 1 + d] -= weights.w_center_outside * two * excess;
                } else if v > hi {
                    let excess = v - hi;
                    dist2 += excess * excess;
                    grad[base + 1 + d] += weights.w_center_outside * two * excess;
                }
            }
            value += weights.w_center_outside * dist2;
        }
    }

    let inv_n = one / T::of(n as f64);
    value *= inv_n;
    for a in &mut grad {
        *a *= inv_n;
    }
    LossTerm { value, grad }
}

/// Weighted sum of all three terms with its gradient.
pub fn loss_total<T: Real>(
    template: &Template<T>,
    uniform_points: &[Vec3<T>],
    uniform_labels: &[Label],
    surface_points: &[Vec3<T>],
    surface_labels: &[Label],
    weights: &LossWeights<T>,
) -> LossReport<T> {
    let u = loss_uniform(template, uniform_points, uniform_labels, weights);
    let s = loss_surface(template, surface_points, surface_labels, weights);
    let c = loss_center(template, weights);

    let total = weights.w_uniform * u.value + weights.w_surface * s.value + c.value;
    let mut grad = c.grad;
    for ((a, gu), gs) in grad.iter_mut().zip(&u.grad).zip(&s.grad) {
        *a += weights.w_uniform * *gu + weights.w_surface * *gs;
    }
    LossReport {
        total,
        uniform: u.value,
        surface: s.value,
        center: c.value,
        grad,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::element::ShapeElement;
    use crate::fd;
    use crate::template::DEFAULT_ISOLEVEL;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn unit_template() -> Template<f64> {
        Template::new(
            vec![ShapeElement::new(-1.0, Vec3::zero(), Vec3::splat(1.0)).unwrap()],
            DEFAULT_ISOLEVEL,
        )
        .unwrap()
    }

    fn random_template(rng: &mut ChaCha8Rng, n: usize) -> Template<f64> {
        let elements = (0..n)
            .map(|_| {
                ShapeElement::new(
                    -rng.gen_range(0.2..2.0),
                    Vec3::new(
                        rng.gen_range(-0.45..0.45),
                        rng.gen_range(-0.45..0.45),
                        rng.gen_range(-0.45..0.45),
                    ),
                    Vec3::new(
                        rng.gen_range(0.05..0.4),
                        rng.gen_range(0.05..0.4),
                        rng.gen_range(0.05..0.4),
                    ),
                )
                .unwrap()
            })
            .collect();
        Template::new(elements, DEFAULT_ISOLEVEL).unwrap()
    }

    fn random_batch(rng: &mut ChaCha8Rng, n: usize) -> (Vec<Vec3<f64>>, Vec<Label>) {
        let points = (0..n)
            .map(|_| {
                Vec3::new(
                    rng.gen_range(-0.5..0.5),
                    rng.gen_range(-0.5..0.5),
                    rng.gen_range(-0.5..0.5),
                )
            })
            .collect();
        let labels = (0..n)
            .map(|_| {
                if rng.gen_bool(0.5) {
                    Label::Inside
                } else {
                    Label::Outside
                }
            })
            .collect();
        (points, labels)
    }

    #[test]
    fn default_weights() {
        let w = LossWeights::<f64>::default();
        assert_eq!(w.alpha, 100.0);
        assert_eq!(w.beta, 10.0);
        assert_eq!(w.w_uniform, 1.0);
        assert_eq!(w.w_surface, 0.1);
        assert_relative_eq!(w.w_center_inside, 10.0 / 3.0, max_relative = 1e-15);
        assert_eq!(w.w_center_outside, 0.01);
        assert_eq!(w.center_box, Aabb::unit());
    }

    #[test]
    fn uniform_loss_hand_values() {
        let t = unit_template();
        let w = LossWeights::default();
        // At the center F = -1, so G = Sigmoid(-93): an inside point here is
        // classified correctly and contributes essentially zero.
        let inside = loss_uniform(&t, &[Vec3::zero()], &[Label::Inside], &w);
        assert!(inside.value < 1e-60);
        // The same point labeled outside is maximally wrong: (1 - G)^2 -> 1.
        let outside = loss_uniform(&t, &[Vec3::zero()], &[Label::Outside], &w);
        assert_relative_eq!(outside.value, 1.0, max_relative = 1e-30);
        // Far away F -> 0 and G = Sigmoid(7); an inside label there costs
        // beta * G^2.
        let far = Vec3::new(10.0, 0.0, 0.0);
        let g7 = 1.0 / (1.0 + (-7.0f64).exp());
        let far_inside = loss_uniform(&t, &[far], &[Label::Inside], &w);
        assert_relative_eq!(far_inside.value, 10.0 * g7 * g7, max_relative = 1e-12);
        // Batch mean of the two labeled points.
        let both = loss_uniform(
            &t,
            &[Vec3::zero(), far],
            &[Label::Outside, Label::Inside],
            &w,
        );
        assert_relative_eq!(
            both.value,
            0.5 * (outside.value + far_inside.value),
            max_relative = 1e-12
        );
    }

    #[test]
    fn surface_loss_equals_uniform_expression() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let t = random_template(&mut rng, 6);
        let (points, labels) = random_batch(&mut rng, 64);
        let w = LossWeights::default();
        let u = loss_uniform(&t, &points, &labels, &w);
        let s = loss_surface(&t, &points, &labels, &w);
        assert_eq!(u.value.to_bits(), s.value.to_bits());
    }

    #[test]
    fn empty_batch_contributes_zero() {
        let t = unit_template();
        let w = LossWeights::default();
        let term = loss_uniform(&t, &[], &[], &w);
        assert_eq!(term.value, 0.0);
        assert!(term.grad.iter().all(|g| *g == 0.0));
        assert_eq!(term.grad.len(), 7);
    }

    #[test]
    fn center_loss_hand_values() {
        let w = LossWeights::default();
        // A single element whose center is deep inside its own shape.
        let t = unit_template();
        let c = loss_center(&t, &w);
        assert!(c.value < 1e-60);

        // A center outside the box on one axis: w_outside * (p_x - 0.5)^2.
        let t = Template::new(
            vec![ShapeElement::new(-1.0, Vec3::new(0.7, 0.0, 0.0), Vec3::splat(0.3)).unwrap()],
            DEFAULT_ISOLEVEL,
        )
        .unwrap();
        let c = loss_center(&t, &w);
        assert_relative_eq!(c.value, 0.01 * 0.2 * 0.2, max_relative = 1e-12);
        // Gradient points back toward the box on x only.
        assert_relative_eq!(c.grad[1], 0.01 * 2.0 * 0.2, max_relative = 1e-12);
        assert_eq!(c.grad[2], 0.0);
        assert_eq!(c.grad[0], 0.0);
    }

    #[test]
    fn center_loss_mixed_corner_distance() {
        let w = LossWeights::default();
        // Outside the box past a corner: both violated axes accumulate.
        let t = Template::new(
            vec![
                ShapeElement::new(-1.0, Vec3::new(0.6, -0.8, 0.0), Vec3::splat(0.3)).unwrap(),
            ],
            DEFAULT_ISOLEVEL,
        )
        .unwrap();
        let c = loss_center(&t, &w);
        assert_relative_eq!(
            c.value,
            0.01 * (0.1 * 0.1 + 0.3 * 0.3),
            max_relative = 1e-12
        );
    }

    #[test]
    fn total_combines_terms_with_weights() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let t = random_template(&mut rng, 5);
        let (up, ul) = random_batch(&mut rng, 40);
        let (sp, sl) = random_batch(&mut rng, 40);
        let w = LossWeights::default();
        let report = loss_total(&t, &up, &ul, &sp, &sl, &w);
        let u = loss_uniform(&t, &up, &ul, &w);
        let s = loss_surface(&t, &sp, &sl, &w);
        let c = loss_center(&t, &w);
        assert_relative_eq!(
            report.total,
            w.w_uniform * u.value + w.w_surface * s.value + c.value,
            max_relative = 1e-15
        );
        assert_eq!(report.uniform, u.value);
        assert_eq!(report.surface, s.value);
        assert_eq!(report.center, c.value);
    }

    #[test]
    fn loss_is_deterministic_across_calls() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let t = random_template(&mut rng, 12);
        let (points, labels) = random_batch(&mut rng, 2000);
        let w = LossWeights::default();
        let a = loss_uniform(&t, &points, &labels, &w);
        let b = loss_uniform(&t, &points, &labels, &w);
        assert_eq!(a.value.to_bits(), b.value.to_bits());
        for (x, y) in a.grad.iter().zip(&b.grad) {
            assert_eq!(x.to_bits(), y.to_bits());
        }
    }

    #[test]
    fn total_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..10 {
            let t = random_template(&mut rng, 4);
            let (up, ul) = random_batch(&mut rng, 24);
            let (sp, sl) = random_batch(&mut rng, 24);
            let w = LossWeights::default();
            let report = loss_total(&t, &up, &ul, &sp, &sl, &w);

            let params = t.params();
            let iso = t.isolevel();
            let fd_grad = fd::gradient(
                |p| {
                    let tt = Template::from_params(p, iso).unwrap();
                    loss_total(&tt, &up, &ul, &sp, &sl, &w).total
                },
                &params,
                1e-4,
                true,
            );
            for (a, g) in report.grad.iter().zip(&fd_grad) {
                fd::assert_close(*a, *g, 1e-5, 1e-9);
            }
        }
    }

    #[test]
    fn center_gradient_includes_query_point_motion() {
        // Two elements, both centers in the box; the field each center sees
        // depends on the other element, so the position gradient must include
        // the spatial term. Verified against finite differences.
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        for _ in 0..20 {
            let t = random_template(&mut rng, 3);
            let w = LossWeights::default();
            let c = loss_center(&t, &w);
            let params = t.params();
            let iso = t.isolevel();
            let fd_grad = fd::gradient(
                |p| {
                    let tt = Template::from_params(p, iso).unwrap();
                    loss_center(&tt, &w).value
                },
                &params,
                1e-4,
                true,
            );
            for (a, g) in c.grad.iter().zip(&fd_grad) {
                fd::assert_close(*a, *g, 1e-5, 1e-9);
            }
        }
    }

    #[test]
    fn center_gradient_outside_box_matches_finite_differences() {
        let w = LossWeights::default();
        let t = Template::new(
            vec![
                ShapeElement::new(-0.8, Vec3::new(0.9, -0.6, 0.2), Vec3::splat(0.2)).unwrap(),
                ShapeElement::new(-1.1, Vec3::new(0.1, 0.2, -0.1), Vec3::splat(0.3)).unwrap(),
            ],
            DEFAULT_ISOLEVEL,
        )
        .unwrap();
        let c = loss_center(&t, &w);
        let params = t.params();
        let fd_grad = fd::gradient(
            |p| {
                let tt = Template::from_params(p, t.isolevel()).unwrap();
                loss_center(&tt, &w).value
            },
            &params,
            1e-4,
            true,
        );
        for (a, g) in c.grad.iter().zip(&fd_grad) {
            fd::assert_close(*a, *g, 1e-5, 1e-9);
        }
    }
}
