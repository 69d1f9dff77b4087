//! Shape templates: ordered collections of shape elements whose summed field
//! defines a surface as a level set.
//!
//! The template field is `F(x) = sum_i f_i(x)`, always negative, and the
//! surface is `{ x : F(x) = isolevel }` for a negative isolevel. Points with
//! `F > isolevel` are outside, everything else inside. Summation runs in
//! element-index order so repeated evaluations are bit-identical.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::element::{ShapeElement, PARAMS_PER_ELEMENT};
use crate::error::{Error, Result};
use crate::real::{sigmoid, Real};
use crate::vec3::Vec3;

/// Grid-searched default isolevel.
pub const DEFAULT_ISOLEVEL: f64 = -0.07;

/// Grid-searched default sharpness of the soft inside/outside boundary.
pub const DEFAULT_ALPHA: f64 = 100.0;

/// Ground-truth inside/outside label for a point.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Label {
    Inside,
    Outside,
}

impl Label {
    pub fn as_u8(self) -> u8 {
        match self {
            Label::Inside => 0,
            Label::Outside => 1,
        }
    }

    pub fn from_u8(v: u8) -> Result<Self> {
        match v {
            0 => Ok(Label::Inside),
            1 => Ok(Label::Outside),
            _ => Err(Error::InvalidInput(format!("label byte must be 0 or 1, got {v}"))),
        }
    }

    pub fn flipped(self) -> Self {
        match self {
            Label::Inside => Label::Outside,
            Label::Outside => Label::Inside,
        }
    }
}

/// Field value and derivatives of a template at one point.
#[derive(Clone, Debug)]
pub struct FieldSample<T> {
    /// `F(x)`, strictly negative up to floating-point underflow.
    pub value: T,
    /// `dF/dx`.
    pub grad_position: Vec3<T>,
    /// `dF/dΘ` over the flattened `7N` parameter vector, when requested.
    pub grad_params: Option<Vec<T>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Template<T> {
    elements: Vec<ShapeElement<T>>,
    isolevel: T,
}

impl<T: Real> Template<T> {
    pub fn new(elements: Vec<ShapeElement<T>>, isolevel: T) -> Result<Self> {
        if elements.is_empty() {
            return Err(Error::InvalidInput("template needs at least one element".into()));
        }
        if !(isolevel.is_finite() && isolevel < T::zero()) {
            return Err(Error::InvalidInput(format!(
                "isolevel must be finite and negative, got {isolevel}"
            )));
        }
        for e in &elements {
            e.validate()?;
        }
        Ok(Self { elements, isolevel })
    }

    pub fn elements(&self) -> &[ShapeElement<T>] {
        &self.elements
    }

    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        false // N >= 1 by construction
    }

    pub fn isolevel(&self) -> T {
        self.isolevel
    }

    /// `F(x)`: the summed element fields, in element-index order.
    #[inline]
    pub fn eval(&self, x: Vec3<T>) -> T {
        let mut acc = T::zero();
        for e in &self.elements {
            acc += e.eval(x);
        }
        acc
    }

    /// Like [`eval`](Self::eval) but rejects non-finite query coordinates.
    pub fn try_eval(&self, x: Vec3<T>) -> Result<T> {
        if !x.is_finite() {
            return Err(Error::non_finite("query position"));
        }
        Ok(self.eval(x))
    }

    /// Hard inside/outside test: outside iff `F(x) > isolevel`.
    /// A point exactly on the level set counts as inside.
    #[inline]
    pub fn classify_hard(&self, x: Vec3<T>) -> Label {
        if self.eval(x) > self.isolevel {
            Label::Outside
        } else {
            Label::Inside
        }
    }

    /// Soft inside/outside decision `Sigmoid(alpha * (F(x) - isolevel))`,
    /// in `(0, 1)` and monotone in the field value. Requires `alpha > 0`.
    #[inline]
    pub fn classify_soft(&self, x: Vec3<T>, alpha: T) -> T {
        debug_assert!(alpha > T::zero());
        sigmoid(alpha * (self.eval(x) - self.isolevel))
    }

    /// Field value plus full derivatives at `x`.
    pub fn grad(&self, x: Vec3<T>) -> FieldSample<T> {
        let mut grad_params = vec![T::zero(); self.elements.len() * PARAMS_PER_ELEMENT];
        let (value, grad_position) = self.grad_into(x, &mut grad_params);
        FieldSample {
            value,
            grad_position,
            grad_params: Some(grad_params),
        }
    }

    /// Allocation-free form of [`grad`](Self::grad) for hot loops: writes
    /// `dF/dΘ` into `grad_params` (length `7N`) and returns `(F, dF/dx)`.
    /// The value is bit-identical to [`eval`](Self::eval).
    pub fn grad_into(&self, x: Vec3<T>, grad_params: &mut [T]) -> (T, Vec3<T>) {
        assert_eq!(grad_params.len(), self.elements.len() * PARAMS_PER_ELEMENT);
        let mut value = T::zero();
        let mut grad_position = Vec3::zero();
        for (e, out) in self
            .elements
            .iter()
            .zip(grad_params.chunks_exact_mut(PARAMS_PER_ELEMENT))
        {
            let (f, g) = e.eval_grad(x);
            value += f;
            grad_position += g.wrt_position;
            out.copy_from_slice(&g.wrt_params);
        }
        (value, grad_position)
    }

    /// Flattened parameter vector, `(c, p, r)` per element.
    pub fn params(&self) -> Vec<T> {
        let mut out = Vec::with_capacity(self.elements.len() * PARAMS_PER_ELEMENT);
        for e in &self.elements {
            out.extend_from_slice(&e.params());
        }
        out
    }

    /// Rebuild a template from a flattened parameter vector.
    pub fn from_params(params: &[T], isolevel: T) -> Result<Self> {
        if params.is_empty() || params.len() % PARAMS_PER_ELEMENT != 0 {
            return Err(Error::Mismatch(format!(
                "parameter vector length {} is not a positive multiple of {}",
                params.len(),
                PARAMS_PER_ELEMENT
            )));
        }
        let elements = params
            .chunks_exact(PARAMS_PER_ELEMENT)
            .map(|chunk| {
                ShapeElement::from_params([
                    chunk[0], chunk[1], chunk[2], chunk[3], chunk[4], chunk[5], chunk[6],
                ])
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(elements, isolevel)
    }

    /// Unconstrained reparameterization `(log(-c), p, log r)` per element.
    /// Any real vector maps back to a valid template, so gradient steps can
    /// never violate the sign constraints on `c` and `r`.
    pub fn to_unconstrained(&self) -> Vec<T> {
        let mut out = Vec::with_capacity(self.elements.len() * PARAMS_PER_ELEMENT);
        for e in &self.elements {
            out.push((-e.c).ln());
            out.push(e.p.x);
            out.push(e.p.y);
            out.push(e.p.z);
            out.push(e.r.x.ln());
            out.push(e.r.y.ln());
            out.push(e.r.z.ln());
        }
        out
    }

    /// Inverse of [`to_unconstrained`](Self::to_unconstrained).
    pub fn from_unconstrained(raw: &[T], isolevel: T) -> Result<Self> {
        if raw.is_empty() || raw.len() % PARAMS_PER_ELEMENT != 0 {
            return Err(Error::Mismatch(format!(
                "parameter vector length {} is not a positive multiple of {}",
                raw.len(),
                PARAMS_PER_ELEMENT
            )));
        }
        let elements = raw
            .chunks_exact(PARAMS_PER_ELEMENT)
            .map(|w| {
                ShapeElement::new(
                    -w[0].exp(),
                    Vec3::new(w[1], w[2], w[3]),
                    Vec3::new(w[4].exp(), w[5].exp(), w[6].exp()),
                )
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(elements, isolevel)
    }

    /// Map a gradient over the constrained parameters into the unconstrained
    /// space, in place: `dL/d log(-c) = c dL/dc` and `dL/d log r = r dL/dr`.
    pub fn grad_to_unconstrained(&self, grad: &mut [T]) {
        assert_eq!(grad.len(), self.elements.len() * PARAMS_PER_ELEMENT);
        for (e, g) in self.elements.iter().zip(grad.chunks_exact_mut(PARAMS_PER_ELEMENT)) {
            g[0] *= e.c;
            g[4] *= e.r.x;
            g[5] *= e.r.y;
            g[6] *= e.r.z;
        }
    }

    /// Copy of the template with every center shifted by `offset`.
    pub fn translated(&self, offset: Vec3<T>) -> Self {
        let elements = self
            .elements
            .iter()
            .map(|e| ShapeElement {
                c: e.c,
                p: e.p + offset,
                r: e.r,
            })
            .collect();
        Self {
            elements,
            isolevel: self.isolevel,
        }
    }
}

// ---------------------------------------------------------------------------
// Versioned on-disk format (JSON). Values round-trip exactly: serde_json
// emits the shortest representation that parses back to the same float.
// ---------------------------------------------------------------------------

const TEMPLATE_FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TemplateFile {
    version: u32,
    isolevel: f64,
    elements: Vec<ElementRecord>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ElementRecord {
    c: f64,
    p: [f64; 3],
    r: [f64; 3],
}

impl<T: Real> Template<T> {
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = TemplateFile {
            version: TEMPLATE_FORMAT_VERSION,
            isolevel: self.isolevel.to_f64_lossy(),
            elements: self
                .elements
                .iter()
                .map(|e| ElementRecord {
                    c: e.c.to_f64_lossy(),
                    p: e.p.map(|v| v.to_f64_lossy()).to_array(),
                    r: e.r.map(|v| v.to_f64_lossy()).to_array(),
                })
                .collect(),
        };
        let mut text = serde_json::to_string_pretty(&file)
            .map_err(|e| Error::InvalidInput(format!("template serialization: {e}")))?;
        text.push('\n');
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let file: TemplateFile = serde_json::from_str(&text).map_err(|e| Error::Parse {
            path: path.into(),
            line: e.line(),
            message: e.to_string(),
        })?;
        if file.version != TEMPLATE_FORMAT_VERSION {
            return Err(Error::Version {
                path: path.into(),
                found: file.version,
                expected: TEMPLATE_FORMAT_VERSION,
            });
        }
        let elements = file
            .elements
            .iter()
            .map(|rec| {
                ShapeElement::new(
                    T::of(rec.c),
                    Vec3::from_array(rec.p).map(T::of),
                    Vec3::from_array(rec.r).map(T::of),
                )
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(elements, T::of(file.isolevel))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fd;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    pub(crate) fn random_template(rng: &mut ChaCha8Rng, n: usize) -> Template<f64> {
        let elements = (0..n)
            .map(|_| {
                ShapeElement::new(
                    -rng.gen_range(0.2..2.0),
                    Vec3::new(
                        rng.gen_range(-0.4..0.4),
                        rng.gen_range(-0.4..0.4),
                        rng.gen_range(-0.4..0.4),
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

    fn single(c: f64, r: f64) -> Template<f64> {
        Template::new(
            vec![ShapeElement::new(c, Vec3::zero(), Vec3::splat(r)).unwrap()],
            DEFAULT_ISOLEVEL,
        )
        .unwrap()
    }

    #[test]
    fn eval_sums_identical_elements() {
        let e = ShapeElement::new(-1.0, Vec3::zero(), Vec3::splat(1.0)).unwrap();
        let t = Template::new(vec![e, e], -0.07).unwrap();
        assert_eq!(t.eval(Vec3::zero()), -2.0);
    }

    #[test]
    fn single_element_matches_element_eval() {
        let e = ShapeElement::new(-1.5, Vec3::new(0.1, 0.2, 0.3), Vec3::splat(0.5)).unwrap();
        let t = Template::new(vec![e], -0.07).unwrap();
        let x = Vec3::new(0.3, -0.2, 0.4);
        assert_eq!(t.eval(x), e.eval(x));
    }

    #[test]
    fn eval_matches_brute_force_sum_on_large_template() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let t = random_template(&mut rng, 100);
        for _ in 0..50 {
            let x = Vec3::new(
                rng.gen_range(-2.0..2.0),
                rng.gen_range(-2.0..2.0),
                rng.gen_range(-2.0..2.0),
            );
            let brute: f64 = t.elements().iter().map(|e| e.eval(x)).sum();
            assert_eq!(t.eval(x), brute);
        }
        // Far outside all influence regions the contributions underflow;
        // the sum can land on +0.0, so the invariant is F <= 0, not F < 0.
        let far = Vec3::new(50.0, 50.0, 50.0);
        let v = t.eval(far);
        assert!(v.abs() < 1e-100);
        assert!(v <= 0.0);
    }

    #[test]
    fn classify_hard_examples() {
        let t = single(-1.0, 1.0);
        assert_eq!(t.classify_hard(Vec3::zero()), Label::Inside);
        assert_eq!(t.classify_hard(Vec3::new(10.0, 0.0, 0.0)), Label::Outside);
    }

    #[test]
    fn classify_hard_tie_breaks_inside() {
        // Place the query exactly on the level set: F = isolevel.
        let t = single(-0.07, 1.0);
        assert_eq!(t.eval(Vec3::zero()), t.isolevel());
        assert_eq!(t.classify_hard(Vec3::zero()), Label::Inside);
    }

    #[test]
    fn classify_soft_is_half_on_the_level_set() {
        let t = single(-0.07, 1.0);
        assert_eq!(t.classify_soft(Vec3::zero(), 100.0), 0.5);
    }

    #[test]
    fn classify_soft_saturates() {
        let t = single(-1.0, 1.0);
        // Center: F = -1, argument = 100 * -0.93, deep in the inside tail.
        assert!(t.classify_soft(Vec3::zero(), 100.0) < 1e-30);
        // Far away F -> 0, argument -> 100 * 0.07 = 7, so Sigmoid(7).
        let far = t.classify_soft(Vec3::new(10.0, 0.0, 0.0), 100.0);
        assert_relative_eq!(far, 1.0 / (1.0 + (-7.0f64).exp()), max_relative = 1e-12);
    }

    #[test]
    fn try_eval_rejects_non_finite_input() {
        let t = single(-1.0, 1.0);
        assert!(t.try_eval(Vec3::new(f64::NAN, 0.0, 0.0)).is_err());
        assert!(t.try_eval(Vec3::new(f64::INFINITY, 0.0, 0.0)).is_err());
    }

    #[test]
    fn grad_single_element_matches_element_grad() {
        let e = ShapeElement::new(-1.2, Vec3::new(0.1, 0.0, -0.1), Vec3::splat(0.3)).unwrap();
        let t = Template::new(vec![e], -0.07).unwrap();
        let x = Vec3::new(0.2, 0.1, 0.0);
        let s = t.grad(x);
        let g = e.grad(x);
        assert_eq!(s.grad_params.as_deref().unwrap(), &g.wrt_params[..]);
        assert_eq!(s.grad_position, g.wrt_position);
    }

    #[test]
    fn grad_duplicated_element_doubles_position_grad() {
        let e = ShapeElement::new(-1.0, Vec3::new(0.1, 0.2, 0.3), Vec3::splat(0.4)).unwrap();
        let t1 = Template::new(vec![e], -0.07).unwrap();
        let t2 = Template::new(vec![e, e], -0.07).unwrap();
        let x = Vec3::new(-0.1, 0.3, 0.2);
        let s1 = t1.grad(x);
        let s2 = t2.grad(x);
        assert_relative_eq!(s2.grad_position.x, 2.0 * s1.grad_position.x, max_relative = 1e-15);
        let g2 = s2.grad_params.unwrap();
        assert_eq!(&g2[..7], &g2[7..]);
    }

    #[test]
    fn grad_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..50 {
            let t = random_template(&mut rng, 4);
            let x = Vec3::new(
                rng.gen_range(-0.5..0.5),
                rng.gen_range(-0.5..0.5),
                rng.gen_range(-0.5..0.5),
            );
            let analytic = t.grad(x).grad_params.unwrap();
            let params = t.params();
            let iso = t.isolevel();
            let fd_grad = fd::gradient(
                |p| Template::from_params(p, iso).unwrap().eval(x),
                &params,
                1e-4,
                true,
            );
            for (a, g) in analytic.iter().zip(&fd_grad) {
                fd::assert_close(*a, *g, 1e-6, 1e-10);
            }
        }
    }

    #[test]
    fn unconstrained_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let t = random_template(&mut rng, 10);
        let raw = t.to_unconstrained();
        let back = Template::from_unconstrained(&raw, t.isolevel()).unwrap();
        for (a, b) in t.params().iter().zip(back.params()) {
            assert_relative_eq!(*a, b, max_relative = 1e-15);
        }
    }

    #[test]
    fn save_load_round_trip_is_value_exact() {
        let dir = std::env::temp_dir().join("sif_core_template_io_test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("t.json");
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let t = random_template(&mut rng, 17);
        t.save(&path).unwrap();
        let back: Template<f64> = Template::load(&path).unwrap();
        assert_eq!(t.isolevel().to_bits(), back.isolevel().to_bits());
        for (a, b) in t.params().iter().zip(back.params()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn load_rejects_unknown_version_and_fields() {
        let dir = std::env::temp_dir().join("sif_core_template_io_test");
        std::fs::create_dir_all(&dir).unwrap();
        let bad_version = dir.join("bad_version.json");
        std::fs::write(
            &bad_version,
            r#"{"version": 2, "isolevel": -0.07, "elements": []}"#,
        )
        .unwrap();
        assert!(matches!(
            Template::<f64>::load(&bad_version),
            Err(Error::Version { found: 2, .. })
        ));

        let bad_field = dir.join("bad_field.json");
        std::fs::write(
            &bad_field,
            r#"{"version": 1, "isolevel": -0.07, "elements": [], "extra": 1}"#,
        )
        .unwrap();
        assert!(matches!(
            Template::<f64>::load(&bad_field),
            Err(Error::Parse { .. })
        ));
    }
}
