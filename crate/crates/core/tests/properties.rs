//! Fuzzed invariants of the representation, the losses, and the pipeline
//! stages, plus a few deterministic cross-module properties that don't
//! belong to any single unit.

use proptest::prelude::*;

use sif_core::{
    accumulate_field, extract, fd, loss_total, marching_cubes, DEFAULT_ISOLEVEL, Label,
    LossWeights, ShapeElement, Template, TriangleMesh, Vec3, VoxelGrid,
};
use sif_core::vec3::Aabb;

fn close(a: f64, b: f64, rel: f64, abs: f64) -> bool {
    let diff = (a - b).abs();
    diff <= abs || diff <= rel * a.abs().max(b.abs())
}

fn vec3_in(range: std::ops::Range<f64>) -> impl Strategy<Value = Vec3<f64>> {
    prop::array::uniform3(range).prop_map(|[x, y, z]| Vec3::new(x, y, z))
}

fn element_strategy() -> impl Strategy<Value = ShapeElement<f64>> {
    (-2.0..-0.05f64, vec3_in(-0.45..0.45), vec3_in(0.02..0.3))
        .prop_map(|(c, p, r)| ShapeElement::new(c, p, r).unwrap())
}

fn template_strategy(max_n: usize) -> impl Strategy<Value = Template<f64>> {
    prop::collection::vec(element_strategy(), 1..=max_n)
        .prop_map(|es| Template::new(es, DEFAULT_ISOLEVEL).unwrap())
}

fn batch_strategy(max_n: usize) -> impl Strategy<Value = (Vec<Vec3<f64>>, Vec<Label>)> {
    prop::collection::vec((vec3_in(-0.6..0.6), prop::bool::ANY), 1..=max_n).prop_map(|raw| {
        raw.into_iter()
            .map(|(p, inside)| (p, if inside { Label::Inside } else { Label::Outside }))
            .unzip()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn field_is_never_positive(t in template_strategy(6), x in vec3_in(-2.0..2.0)) {
        let v = t.eval(x);
        // Far from all elements the sum can underflow to zero, but it can
        // never cross it.
        prop_assert!(v <= 0.0, "F = {v}");
    }

    #[test]
    fn soft_and_hard_classification_agree(
        t in template_strategy(6),
        x in vec3_in(-1.0..1.0),
        alpha in 0.5..200.0f64,
    ) {
        let soft = t.classify_soft(x, alpha);
        let hard = t.classify_hard(x);
        if soft > 0.5 {
            prop_assert_eq!(hard, Label::Outside);
        } else if soft < 0.5 {
            prop_assert_eq!(hard, Label::Inside);
        }
        // soft == 0.5 exactly is the boundary; the hard test breaks the
        // tie toward inside on its own.
    }

    #[test]
    fn evaluation_is_translation_equivariant(
        t in template_strategy(5),
        x in vec3_in(-0.8..0.8),
        d in vec3_in(-0.5..0.5),
    ) {
        let a = t.eval(x);
        let b = t.translated(d).eval(x + d);
        prop_assert!(close(a, b, 1e-12, 1e-100), "{a} vs {b}");
    }

    #[test]
    fn evaluation_is_axis_scaling_equivariant(
        t in template_strategy(5),
        x in vec3_in(-0.8..0.8),
        s in 0.1..10.0f64,
    ) {
        let a = t.eval(x);
        // Scale centers, radii, and the query along x only.
        let scaled = Template::new(
            t.elements()
                .iter()
                .map(|e| {
                    ShapeElement::new(
                        e.c,
                        Vec3::new(e.p.x * s, e.p.y, e.p.z),
                        Vec3::new(e.r.x * s, e.r.y, e.r.z),
                    )
                    .unwrap()
                })
                .collect(),
            t.isolevel(),
        )
        .unwrap();
        let b = scaled.eval(Vec3::new(x.x * s, x.y, x.z));
        prop_assert!(close(a, b, 1e-12, 1e-100), "{a} vs {b}");
    }

    #[test]
    fn evaluation_is_deterministic(t in template_strategy(8), x in vec3_in(-1.0..1.0)) {
        prop_assert_eq!(t.eval(x).to_bits(), t.eval(x).to_bits());
    }

    #[test]
    fn loss_terms_are_nonnegative(
        t in template_strategy(4),
        (up, ul) in batch_strategy(32),
        (sp, sl) in batch_strategy(32),
    ) {
        let w = LossWeights::default();
        let report = loss_total(&t, &up, &ul, &sp, &sl, &w);
        prop_assert!(report.uniform >= 0.0);
        prop_assert!(report.surface >= 0.0);
        prop_assert!(report.center >= 0.0);
        prop_assert!(report.total >= 0.0);
    }

    #[test]
    fn loss_is_sample_order_invariant(
        t in template_strategy(3),
        (points, labels) in batch_strategy(600),
    ) {
        let w = LossWeights::default();
        let a = loss_total(&t, &points, &labels, &[], &[], &w);
        // Reverse both slices: same multiset, different reduction order.
        let rp: Vec<_> = points.iter().rev().copied().collect();
        let rl: Vec<_> = labels.iter().rev().copied().collect();
        let b = loss_total(&t, &rp, &rl, &[], &[], &w);
        prop_assert!(close(a.total, b.total, 1e-12, 1e-300), "{} vs {}", a.total, b.total);
        for (x, y) in a.grad.iter().zip(&b.grad) {
            prop_assert!(close(*x, *y, 1e-11, 1e-16), "{x} vs {y}");
        }
    }

    #[test]
    fn doubling_the_uniform_weight_scales_its_contribution(
        t in template_strategy(3),
        (up, ul) in batch_strategy(40),
    ) {
        let w1 = LossWeights::default();
        let mut w2 = LossWeights::default();
        w2.w_uniform = w1.w_uniform * 2.0;
        let a = loss_total(&t, &up, &ul, &[], &[], &w1);
        let b = loss_total(&t, &up, &ul, &[], &[], &w2);
        // The raw term is weight-independent.
        prop_assert_eq!(a.uniform.to_bits(), b.uniform.to_bits());
        prop_assert!(close(b.total - a.total, w1.w_uniform * a.uniform, 1e-10, 1e-14));
    }
}

proptest! {
    // Finite differences through the sigmoid are expensive; fewer cases.
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn field_gradient_matches_finite_differences(
        t in template_strategy(3),
        x in vec3_in(-0.5..0.5),
    ) {
        let sample = t.grad(x);
        let params = t.params();
        let iso = t.isolevel();
        let fd_grad = fd::gradient(
            |q| Template::from_params(q, iso).unwrap().eval(x),
            &params,
            1e-4,
            true,
        );
        let analytic = sample.grad_params.as_ref().unwrap();
        for (a, g) in analytic.iter().zip(&fd_grad) {
            prop_assert!(close(*a, *g, 1e-6, 1e-9), "{a} vs {g}");
        }
        // Position gradient against per-coordinate differences.
        for d in 0..3 {
            let diff = fd::central_diff4(
                |v| {
                    let mut q = x;
                    q[d] = v;
                    t.eval(q)
                },
                x[d],
                1e-4,
            );
            prop_assert!(close(sample.grad_position[d], diff, 1e-6, 1e-9));
        }
    }
}

#[test]
fn flood_fill_is_idempotent() {
    let sphere = TriangleMesh::<f64>::uv_sphere(Vec3::zero(), 0.35, 16, 32);
    let (mut grid, first) = VoxelGrid::from_mesh(&sphere, &Aabb::unit(), 32, 2).unwrap();
    let states: Vec<_> = (0..32 + 4)
        .flat_map(|z| {
            (0..36).flat_map(move |y| (0..36).map(move |x| (x, y, z)))
        })
        .map(|(x, y, z)| grid.state(x, y, z))
        .collect();
    let second = grid.fill_outside();
    assert_eq!(first, second);
    let after: Vec<_> = (0..36)
        .flat_map(|z| {
            (0..36).flat_map(move |y| (0..36).map(move |x| (x, y, z)))
        })
        .map(|(x, y, z)| grid.state(x, y, z))
        .collect();
    assert_eq!(states, after);
}

#[test]
fn culling_moves_vertices_less_than_one_cell() {
    // Elements far enough apart that each one's dropped tail at the other's
    // surface (~1e-8) cannot flip a grid node across the isolevel.
    let t = Template::new(
        vec![
            ShapeElement::new(-1.0, Vec3::new(-0.25, 0.0, 0.0), Vec3::splat(0.06)).unwrap(),
            ShapeElement::new(-0.7, Vec3::new(0.25, 0.0, 0.0), Vec3::splat(0.06)).unwrap(),
        ],
        DEFAULT_ISOLEVEL,
    )
    .unwrap();
    let culled = extract(&t, 64, 1e-3, 0.0);
    let full = extract(&t, 64, 0.0, 0.0);
    assert_eq!(culled.triangles, full.triangles);
    assert_eq!(culled.vertices.len(), full.vertices.len());
    let cell = 1.1 / 64.0;
    for (a, b) in culled.vertices.iter().zip(&full.vertices) {
        assert!((*a - *b).norm() <= cell, "{a:?} vs {b:?}");
    }
}

#[test]
fn fitting_improves_loss_and_preserves_constraints() {
    use rand::{Rng, SeedableRng};
    use sif_core::{fit, FitConfig, FitSamples};

    // Analytic two-sphere oracle supplies the labels.
    let oracle = Template::new(
        vec![
            ShapeElement::new(-1.0, Vec3::new(-0.2, 0.0, 0.0), Vec3::splat(0.08)).unwrap(),
            ShapeElement::new(-1.0, Vec3::new(0.2, 0.0, 0.0), Vec3::splat(0.08)).unwrap(),
        ],
        DEFAULT_ISOLEVEL,
    )
    .unwrap();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(17);
    let mut points = Vec::new();
    let mut labels = Vec::new();
    for _ in 0..4000 {
        let p = Vec3::new(
            rng.gen_range(-0.5..0.5),
            rng.gen_range(-0.5..0.5),
            rng.gen_range(-0.5..0.5),
        );
        points.push(p);
        labels.push(oracle.classify_hard(p));
    }
    let samples = FitSamples {
        uniform_points: &points,
        uniform_labels: &labels,
        surface_points: &points,
        surface_labels: &labels,
    };
    let config = FitConfig {
        n_elements: 4,
        steps: 1500,
        batch_uniform: 512,
        batch_surface: 512,
        trace_every: 25,
        seed: 3,
        ..FitConfig::default()
    };
    let outcome = fit(&samples, &config).unwrap();

    // Every post-step projection kept the element invariants.
    for e in outcome.template.elements() {
        assert!(e.c < 0.0);
        assert!(e.r.min_element() > 0.0);
    }

    // Median loss over the last tenth of the trace beats the first tenth.
    let rows = &outcome.trace.rows;
    let tenth = (rows.len() / 10).max(1);
    let median = |slice: &[sif_core::TraceRow<f64>]| {
        let mut v: Vec<f64> = slice.iter().map(|r| r.total).collect();
        v.sort_by(f64::total_cmp);
        v[v.len() / 2]
    };
    let early = median(&rows[..tenth]);
    let late = median(&rows[rows.len() - tenth..]);
    assert!(late < early, "loss did not improve: {early} -> {late}");
}

#[test]
fn center_loss_reels_in_a_dead_element() {
    use rand::{Rng, SeedableRng};
    use sif_core::{fit_from, FitConfig, FitSamples};

    let oracle = Template::new(
        vec![ShapeElement::new(-1.0, Vec3::zero(), Vec3::splat(0.1)).unwrap()],
        DEFAULT_ISOLEVEL,
    )
    .unwrap();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
    let mut points = Vec::new();
    let mut labels = Vec::new();
    for _ in 0..1000 {
        let p = Vec3::new(
            rng.gen_range(-0.5..0.5),
            rng.gen_range(-0.5..0.5),
            rng.gen_range(-0.5..0.5),
        );
        points.push(p);
        labels.push(oracle.classify_hard(p));
    }
    // One useful element plus a dead one parked outside the box: tiny
    // radius, so the classification losses cannot see it and only the
    // center loss acts on its position.
    let initial = Template::new(
        vec![
            ShapeElement::new(-1.0, Vec3::new(0.05, 0.0, 0.0), Vec3::splat(0.08)).unwrap(),
            ShapeElement::new(-0.5, Vec3::new(0.9, 0.2, -0.3), Vec3::splat(0.005)).unwrap(),
        ],
        DEFAULT_ISOLEVEL,
    )
    .unwrap();
    let samples = FitSamples {
        uniform_points: &points,
        uniform_labels: &labels,
        surface_points: &points,
        surface_labels: &labels,
    };
    let config = FitConfig {
        n_elements: 2,
        steps: 800,
        batch_uniform: 256,
        batch_surface: 256,
        trace_every: 0,
        seed: 5,
        ..FitConfig::default()
    };
    let outcome = fit_from(initial, &samples, &config).unwrap();
    let dead = outcome.template.elements()[1].p;
    for d in 0..3 {
        assert!(dead[d] >= -0.5 && dead[d] <= 0.5, "still outside: {dead:?}");
    }
}

#[test]
fn accumulated_grid_drives_marching_cubes_to_level_set() {
    // Cross-module check: grid accumulation + contouring reproduce the
    // template's level set within trilinear error.
    let t = Template::new(
        vec![ShapeElement::new(-1.0, Vec3::zero(), Vec3::new(0.1, 0.07, 0.12)).unwrap()],
        DEFAULT_ISOLEVEL,
    )
    .unwrap();
    let grid = accumulate_field(&t, 96, 1e-3);
    let mesh = marching_cubes(&grid, t.isolevel());
    assert!(mesh.manifold_report().is_closed());
    for v in &mesh.vertices {
        assert!((t.eval(*v) - t.isolevel()).abs() < 5e-3);
    }
}
