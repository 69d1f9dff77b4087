//! Minimal 3-vector used by all geometry code.

use std::ops::{Add, AddAssign, Div, Index, IndexMut, Mul, Neg, Sub};

use crate::real::Real;

#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub struct Vec3<T> {
    pub x: T,
    pub y: T,
    pub z: T,
}

impl<T: Real> Vec3<T> {
    pub fn new(x: T, y: T, z: T) -> Self {
        Self { x, y, z }
    }

    pub fn splat(v: T) -> Self {
        Self { x: v, y: v, z: v }
    }

    pub fn zero() -> Self {
        Self::splat(T::zero())
    }

    pub fn from_array(a: [T; 3]) -> Self {
        Self::new(a[0], a[1], a[2])
    }

    pub fn to_array(self) -> [T; 3] {
        [self.x, self.y, self.z]
    }

    pub fn dot(self, o: Self) -> T {
        self.x * o.x + self.y * o.y + self.z * o.z
    }

    pub fn cross(self, o: Self) -> Self {
        Self::new(
            self.y * o.z - self.z * o.y,
            self.z * o.x - self.x * o.z,
            self.x * o.y - self.y * o.x,
        )
    }

    pub fn norm_squared(self) -> T {
        self.dot(self)
    }

    pub fn norm(self) -> T {
        self.norm_squared().sqrt()
    }

    /// Unit vector, or zero when the input has zero length.
    pub fn normalized(self) -> Self {
        let n = self.norm();
        if n == T::zero() {
            Self::zero()
        } else {
            self / n
        }
    }

    /// Componentwise product.
    pub fn mul_each(self, o: Self) -> Self {
        Self::new(self.x * o.x, self.y * o.y, self.z * o.z)
    }

    /// Componentwise quotient.
    pub fn div_each(self, o: Self) -> Self {
        Self::new(self.x / o.x, self.y / o.y, self.z / o.z)
    }

    pub fn min_each(self, o: Self) -> Self {
        Self::new(self.x.min(o.x), self.y.min(o.y), self.z.min(o.z))
    }

    pub fn max_each(self, o: Self) -> Self {
        Self::new(self.x.max(o.x), self.y.max(o.y), self.z.max(o.z))
    }

    pub fn min_element(self) -> T {
        self.x.min(self.y).min(self.z)
    }

    pub fn max_element(self) -> T {
        self.x.max(self.y).max(self.z)
    }

    pub fn abs(self) -> Self {
        Self::new(self.x.abs(), self.y.abs(), self.z.abs())
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    pub fn map<U: Real>(self, f: impl Fn(T) -> U) -> Vec3<U> {
        Vec3::new(f(self.x), f(self.y), f(self.z))
    }
}

impl<T: Real> Add for Vec3<T> {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        Self::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl<T: Real> AddAssign for Vec3<T> {
    fn add_assign(&mut self, o: Self) {
        *self = *self + o;
    }
}

impl<T: Real> Sub for Vec3<T> {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        Self::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

impl<T: Real> Mul<T> for Vec3<T> {
    type Output = Self;
    fn mul(self, s: T) -> Self {
        Self::new(self.x * s, self.y * s, self.z * s)
    }
}

impl<T: Real> Div<T> for Vec3<T> {
    type Output = Self;
    fn div(self, s: T) -> Self {
        Self::new(self.x / s, self.y / s, self.z / s)
    }
}

impl<T: Real> Neg for Vec3<T> {
    type Output = Self;
    fn neg(self) -> Self {
        Self::new(-self.x, -self.y, -self.z)
    }
}

impl<T> Index<usize> for Vec3<T> {
    type Output = T;
    fn index(&self, i: usize) -> &T {
        match i {
            0 => &self.x,
            1 => &self.y,
            2 => &self.z,
            _ => panic!("Vec3 index out of range: {i}"),
        }
    }
}

impl<T> IndexMut<usize> for Vec3<T> {
    fn index_mut(&mut self, i: usize) -> &mut T {
        match i {
            0 => &mut self.x,
            1 => &mut self.y,
            2 => &mut self.z,
            _ => panic!("Vec3 index out of range: {i}"),
        }
    }
}

/// Axis-aligned bounding box.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Aabb<T> {
    pub min: Vec3<T>,
    pub max: Vec3<T>,
}

impl<T: Real> Aabb<T> {
    pub fn new(min: Vec3<T>, max: Vec3<T>) -> Self {
        Self { min, max }
    }

    /// Smallest box containing all points; `None` for an empty iterator.
    pub fn from_points<I: IntoIterator<Item = Vec3<T>>>(points: I) -> Option<Self> {
        let mut it = points.into_iter();
        let first = it.next()?;
        let mut bb = Self::new(first, first);
        for p in it {
            bb.min = bb.min.min_each(p);
            bb.max = bb.max.max_each(p);
        }
        Some(bb)
    }

    /// Cube spanning [-0.5, 0.5] on every axis, the canonical normalized domain.
    pub fn unit() -> Self {
        Self::new(Vec3::splat(T::of(-0.5)), Vec3::splat(T::of(0.5)))
    }

    pub fn extent(&self) -> Vec3<T> {
        self.max - self.min
    }

    pub fn center(&self) -> Vec3<T> {
        (self.min + self.max) * T::of(0.5)
    }

    pub fn volume(&self) -> T {
        let e = self.extent();
        e.x * e.y * e.z
    }

    pub fn contains(&self, p: Vec3<T>) -> bool {
        (0..3).all(|d| p[d] >= self.min[d] && p[d] <= self.max[d])
    }

    pub fn union(&self, o: &Self) -> Self {
        Self::new(self.min.min_each(o.min), self.max.max_each(o.max))
    }

    pub fn grow(&self, margin: T) -> Self {
        Self::new(self.min - Vec3::splat(margin), self.max + Vec3::splat(margin))
    }

    /// Shrink uniformly about the center by the given fraction of each extent.
    pub fn shrink_fraction(&self, fraction: T) -> Self {
        let c = self.center();
        let half = self.extent() * ((T::one() - fraction) * T::of(0.5));
        Self::new(c - half, c + half)
    }

    /// Squared distance from a point to the box (zero inside).
    pub fn distance_squared(&self, p: Vec3<T>) -> T {
        let mut d2 = T::zero();
        for i in 0..3 {
            let v = p[i];
            let lo = self.min[i];
            let hi = self.max[i];
            let d = if v < lo {
                lo - v
            } else if v > hi {
                v - hi
            } else {
                T::zero()
            };
            d2 += d * d;
        }
        d2
    }
}
