//! Scalar math routed through `num-traits` so the crate builds with either
//! `std` or `libm` backing the transcendental functions.

use num_traits::Float;

#[inline]
pub fn sqrt(x: f64) -> f64 {
    Float::sqrt(x)
}

#[inline]
pub fn abs(x: f64) -> f64 {
    Float::abs(x)
}

#[inline]
pub fn ln(x: f64) -> f64 {
    Float::ln(x)
}

#[inline]
pub fn powf(x: f64, y: f64) -> f64 {
    Float::powf(x, y)
}

#[inline]
pub fn ceil(x: f64) -> f64 {
    Float::ceil(x)
}

#[inline]
pub fn hypot(x: f64, y: f64) -> f64 {
    Float::hypot(x, y)
}
