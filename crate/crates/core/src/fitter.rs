//! Direct gradient-based template fitting.
//!
//! Optimization runs in an unconstrained space: `log(-c)` for the scale and
//! `log r` for the radii, so no step can produce a positive scale or a
//! non-positive radius. Updates use Adam with bias correction and a cosine
//! learning-rate decay. Every source of randomness derives from one seed, and
//! all reductions have fixed order, so a fit is reproducible bit for bit.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::element::{PARAMS_PER_ELEMENT, RADIUS_FLOOR};
use crate::error::{Error, Result};
use crate::losses::{loss_total, LossWeights};
use crate::real::{mix_seed, Real};
use crate::template::{Label, Template, DEFAULT_ISOLEVEL};
use crate::vec3::{Aabb, Vec3};

/// Labeled point sets a fit trains on.
#[derive(Clone, Copy, Debug)]
pub struct FitSamples<'a, T> {
    pub uniform_points: &'a [Vec3<T>],
    pub uniform_labels: &'a [Label],
    pub surface_points: &'a [Vec3<T>],
    pub surface_labels: &'a [Label],
}

#[derive(Clone, Debug)]
pub struct FitConfig<T> {
    /// Number of shape elements.
    pub n_elements: usize,
    /// Optimization steps.
    pub steps: usize,
    /// Initial learning rate, cosine-decayed to `lr_final` over the run.
    pub lr: T,
    pub lr_final: T,
    /// Adam moment decays and denominator guard.
    pub beta1: T,
    pub beta2: T,
    pub adam_epsilon: T,
    /// Minibatch sizes drawn per step from each sample set.
    pub batch_uniform: usize,
    pub batch_surface: usize,
    /// Record a trace row every this many steps (plus the final step);
    /// zero disables tracing.
    pub trace_every: usize,
    /// Seed for initialization and minibatch selection.
    pub seed: u64,
    /// Initial per-axis radius of every element.
    pub init_radius: T,
    /// Initial scale of every element (must be negative).
    pub init_c: T,
    /// Level set defining the fitted surface.
    pub isolevel: T,
    pub weights: LossWeights<T>,
}

impl<T: Real> Default for FitConfig<T> {
    fn default() -> Self {
        Self {
            n_elements: 100,
            steps: 5000,
            lr: T::of(1e-2),
            lr_final: T::of(1e-4),
            beta1: T::of(0.9),
            beta2: T::of(0.999),
            adam_epsilon: T::of(1e-8),
            batch_uniform: 3000,
            batch_surface: 3000,
            trace_every: 100,
            seed: 0,
            init_radius: T::of(0.05),
            init_c: T::of(-1.0),
            isolevel: T::of(DEFAULT_ISOLEVEL),
            weights: LossWeights::default(),
        }
    }
}

impl<T: Real> FitConfig<T> {
    /// Learning rate at a 0-based step: cosine decay from `lr` to `lr_final`.
    pub fn learning_rate(&self, step: usize) -> T {
        if self.steps <= 1 {
            return self.lr;
        }
        let progress = T::of(step as f64) / T::of((self.steps - 1) as f64);
        let half = T::of(0.5);
        self.lr_final + (self.lr - self.lr_final) * half * (T::one() + (T::PI() * progress).cos())
    }
}

/// One recorded point of a fit run. Loss values are those of the step's
/// minibatch; accuracy is over the full uniform sample set.
#[derive(Clone, Debug)]
pub struct TraceRow<T> {
    pub step: usize,
    pub total: T,
    pub uniform: T,
    pub surface: T,
    pub center: T,
    pub accuracy: f64,
}

#[derive(Clone, Debug, Default)]
pub struct FitTrace<T> {
    pub rows: Vec<TraceRow<T>>,
}

impl<T: Real> FitTrace<T> {
    /// Write the trace as CSV. Floats print in shortest round-trip form.
    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut out = String::from("step,total,l_u,l_s,l_c,accuracy\n");
        for r in &self.rows {
            writeln!(
                out,
                "{},{},{},{},{},{}",
                r.step, r.total, r.uniform, r.surface, r.center, r.accuracy
            )
            .expect("string write");
        }
        fs::write(path, out).map_err(|e| Error::io(path, e))
    }
}

#[derive(Clone, Debug)]
pub struct FitOutcome<T> {
    pub template: Template<T>,
    pub trace: FitTrace<T>,
}

/// Fraction of points whose hard classification matches the label.
pub fn classification_accuracy<T: Real>(
    template: &Template<T>,
    points: &[Vec3<T>],
    labels: &[Label],
) -> f64 {
    assert_eq!(points.len(), labels.len(), "points and labels must pair up");
    if points.is_empty() {
        return 1.0;
    }
    let correct = points
        .par_iter()
        .zip(labels.par_iter())
        .filter(|(x, label)| template.classify_hard(**x) == **label)
        .count();
    correct as f64 / points.len() as f64
}

/// Fresh template for a fit: centers drawn uniformly from the domain shrunk
/// by 10% per axis, all radii and scales at their configured start values.
pub fn init_template<T: Real>(domain: &Aabb<T>, config: &FitConfig<T>) -> Result<Template<T>> {
    use rand::Rng;
    if config.n_elements == 0 {
        return Err(Error::InvalidInput("fit needs at least one element".into()));
    }
    let inner = domain.shrink_fraction(T::of(0.1));
    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(config.seed, 0));
    let elements = (0..config.n_elements)
        .map(|_| {
            let p = Vec3::new(
                rng.gen_range(inner.min.x..inner.max.x),
                rng.gen_range(inner.min.y..inner.max.y),
                rng.gen_range(inner.min.z..inner.max.z),
            );
            crate::element::ShapeElement::new(config.init_c, p, Vec3::splat(config.init_radius))
        })
        .collect::<Result<Vec<_>>>()?;
    Template::new(elements, config.isolevel)
}

/// Fit a template to the samples starting from a default initialization over
/// the unit domain.
pub fn fit<T: Real>(samples: &FitSamples<'_, T>, config: &FitConfig<T>) -> Result<FitOutcome<T>> {
    let initial = init_template(&Aabb::unit(), config)?;
    fit_from(initial, samples, config)
}

/// Fit starting from an explicit template (warm start).
pub fn fit_from<T: Real>(
    initial: Template<T>,
    samples: &FitSamples<'_, T>,
    config: &FitConfig<T>,
) -> Result<FitOutcome<T>> {
    assert_eq!(samples.uniform_points.len(), samples.uniform_labels.len());
    assert_eq!(samples.surface_points.len(), samples.surface_labels.len());

    let isolevel = initial.isolevel();
    let mut theta = initial.to_unconstrained();
    let dim = theta.len();
    let mut template = initial;

    let mut m = vec![T::zero(); dim];
    let mut v = vec![T::zero(); dim];
    let one = T::one();
    let ln_floor = T::of(RADIUS_FLOOR).ln();

    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(config.seed, 1));
    let mut trace = FitTrace::default();

    let mut batch_u_points: Vec<Vec3<T>> = Vec::new();
    let mut batch_u_labels: Vec<Label> = Vec::new();
    let mut batch_s_points: Vec<Vec3<T>> = Vec::new();
    let mut batch_s_labels: Vec<Label> = Vec::new();

    for step in 0..config.steps {
        draw_minibatch(
            &mut rng,
            samples.uniform_points,
            samples.uniform_labels,
            config.batch_uniform,
            &mut batch_u_points,
            &mut batch_u_labels,
        );
        draw_minibatch(
            &mut rng,
            samples.surface_points,
            samples.surface_labels,
            config.batch_surface,
            &mut batch_s_points,
            &mut batch_s_labels,
        );

        let report = loss_total(
            &template,
            &batch_u_points,
            &batch_u_labels,
            &batch_s_points,
            &batch_s_labels,
            &config.weights,
        );
        if !report.total.is_finite() {
            return Err(Error::non_finite(format!("loss at step {step}")));
        }

        let mut grad = report.grad;
        template.grad_to_unconstrained(&mut grad);

        let t = step + 1;
        let bc1 = one - config.beta1.powi(t as i32);
        let bc2 = one - config.beta2.powi(t as i32);
        let lr = config.learning_rate(step);
        for k in 0..dim {
            let g = grad[k];
            m[k] = config.beta1 * m[k] + (one - config.beta1) * g;
            v[k] = config.beta2 * v[k] + (one - config.beta2) * g * g;
            let m_hat = m[k] / bc1;
            let v_hat = v[k] / bc2;
            theta[k] -= lr * m_hat / (v_hat.sqrt() + config.adam_epsilon);
        }
        // Keep radii away from zero: below this the element degenerates into
        // a spike narrower than any sample spacing.
        for chunk in theta.chunks_exact_mut(PARAMS_PER_ELEMENT) {
            for slot in &mut chunk[4..7] {
                if *slot < ln_floor {
                    *slot = ln_floor;
                }
            }
        }

        template = Template::from_unconstrained(&theta, isolevel)?;

        let last = step + 1 == config.steps;
        if config.trace_every > 0 && (step % config.trace_every == 0 || last) {
            trace.rows.push(TraceRow {
                step,
                total: report.total,
                uniform: report.uniform,
                surface: report.surface,
                center: report.center,
                accuracy: classification_accuracy(
                    &template,
                    samples.uniform_points,
                    samples.uniform_labels,
                ),
            });
        }
    }

    Ok(FitOutcome { template, trace })
}

/// Draw `batch` indices without replacement (the whole set if it is smaller),
/// in ascending order so downstream reductions have a fixed order.
fn draw_minibatch<T: Real>(
    rng: &mut ChaCha8Rng,
    points: &[Vec3<T>],
    labels: &[Label],
    batch: usize,
    out_points: &mut Vec<Vec3<T>>,
    out_labels: &mut Vec<Label>,
) {
    out_points.clear();
    out_labels.clear();
    if points.is_empty() || batch == 0 {
        return;
    }
    if batch >= points.len() {
        out_points.extend_from_slice(points);
        out_labels.extend_from_slice(labels);
        return;
    }
    let mut idx = rand::seq::index::sample(rng, points.len(), batch).into_vec();
    idx.sort_unstable();
    for i in idx {
        out_points.push(points[i]);
        out_labels.push(labels[i]);
    }
}
