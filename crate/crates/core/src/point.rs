//! Points in ℝⁿ, n ≤ 3, stored padded to three coordinates.
//!
//! Coordinates beyond the active dimension stay exactly zero: the potentials,
//! kernels and noise never write to them.

pub type Point = [f64; 3];

pub const ORIGIN: Point = [0.0; 3];

#[inline]
pub fn sub(a: &Point, b: &Point) -> Point {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

#[inline]
pub fn add_scaled(acc: &mut Point, v: &Point, s: f64) {
    acc[0] += s * v[0];
    acc[1] += s * v[1];
    acc[2] += s * v[2];
}

#[inline]
pub fn scale(v: &Point, s: f64) -> Point {
    [s * v[0], s * v[1], s * v[2]]
}

#[inline]
pub fn norm_sq(v: &Point) -> f64 {
    v[0] * v[0] + v[1] * v[1] + v[2] * v[2]
}

#[inline]
pub fn norm(v: &Point) -> f64 {
    norm_sq(v).sqrt()
}

#[inline]
pub fn dist(a: &Point, b: &Point) -> f64 {
    norm(&sub(a, b))
}

#[inline]
pub fn is_finite(v: &Point) -> bool {
    v.iter().all(|c| c.is_finite())
}

/// Point with the first `dim` coordinates taken from `coords`.
pub fn from_slice(coords: &[f64]) -> Point {
    let mut p = ORIGIN;
    p[..coords.len()].copy_from_slice(coords);
    p
}
