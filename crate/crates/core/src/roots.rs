//! Zeros of meromorphic functions inside rectangles.
//!
//! The count in a rectangle is the winding number of `f` along its boundary
//! plus the orders of the declared poles inside. Rectangles are bisected until
//! each holds a single zero, which Newton's method then polishes.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

type C = Complex64;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub re_min: f64,
    pub re_max: f64,
    pub im_min: f64,
    pub im_max: f64,
}

impl Rect {
    pub fn new(re_min: f64, re_max: f64, im_min: f64, im_max: f64) -> Rect {
        Rect { re_min, re_max, im_min, im_max }
    }

    /// The square `[-l, l]^2`.
    pub fn square(l: f64) -> Rect {
        Rect::new(-l, l, -l, l)
    }

    pub fn contains(&self, z: C) -> bool {
        z.re > self.re_min && z.re < self.re_max && z.im > self.im_min && z.im < self.im_max
    }

    pub fn contains_closed(&self, z: C, slack: f64) -> bool {
        z.re >= self.re_min - slack
            && z.re <= self.re_max + slack
            && z.im >= self.im_min - slack
            && z.im <= self.im_max + slack
    }

    pub fn width(&self) -> f64 {
        self.re_max - self.re_min
    }

    pub fn height(&self) -> f64 {
        self.im_max - self.im_min
    }

    pub fn diameter(&self) -> f64 {
        self.width().hypot(self.height())
    }

    pub fn centre(&self) -> C {
        C::new(0.5 * (self.re_min + self.re_max), 0.5 * (self.im_min + self.im_max))
    }

    fn corners(&self) -> [C; 4] {
        [
            C::new(self.re_min, self.im_min),
            C::new(self.re_max, self.im_min),
            C::new(self.re_max, self.im_max),
            C::new(self.re_min, self.im_max),
        ]
    }

    /// Distance from `z` to the boundary.
    pub fn boundary_distance(&self, z: C) -> f64 {
        let c = self.corners();
        (0..4).map(|k| segment_distance(z, c[k], c[(k + 1) % 4])).fold(f64::INFINITY, f64::min)
    }
}

pub fn segment_distance(z: C, a: C, b: C) -> f64 {
    let d = b - a;
    let len2 = d.norm_sqr();
    if len2 == 0.0 {
        return (z - a).norm();
    }
    let t = (((z - a) * d.conj()).re / len2).clamp(0.0, 1.0);
    (z - (a + d * t)).norm()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pole {
    pub at: C,
    pub order: u32,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RootError {
    #[error("zero of multiplicity > 1 near {0}")]
    Multiple(C),
    #[error("root count mismatch in box: argument principle gave {expected}, found {found}")]
    CountMismatch { expected: i64, found: usize },
    #[error("function could not be evaluated on the box boundary near {0}")]
    Boundary(C),
    #[error("newton polish failed to converge near {0}")]
    NoConvergence(C),
}

/// A zero with its residual and derivative at the polished location.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Zero {
    pub at: C,
    pub residual: f64,
    pub derivative: C,
}

/// Function value and derivative, or `None` where it cannot be evaluated.
pub trait Analytic {
    fn value(&self, z: C) -> Option<C>;
    fn value_and_derivative(&self, z: C) -> Option<(C, C)>;
}

impl<F: Fn(C) -> Option<(C, C)>> Analytic for F {
    fn value(&self, z: C) -> Option<C> {
        self(z).map(|v| v.0)
    }
    fn value_and_derivative(&self, z: C) -> Option<(C, C)> {
        self(z)
    }
}

const MIN_DIAMETER: f64 = 1e-3;
const TIGHT_DIAMETER: f64 = 1e-9;

// Argument change of f along a segment, refined until each piece turns by
// less than a quarter of a circle and the log-derivative at both ends is
// small against the piece length (so no full turn can hide in between).
fn arg_change<F: Analytic>(f: &F, a: C, b: C, fa: C, fb: C, depth: u32) -> Option<f64> {
    let d = (fb / fa).arg();
    let h = (b - a).norm();
    let calm = |z: C| f.value_and_derivative(z).map(|(v, dv)| (dv / v).norm() * h < 1.0);
    if d.abs() < PI / 4.0 && calm(a)? && calm(b)? {
        return Some(d);
    }
    if depth > 48 {
        return None;
    }
    let m = 0.5 * (a + b);
    let fm = f.value(m).filter(|v| v.norm() > 0.0 && v.is_finite())?;
    Some(arg_change(f, a, m, fa, fm, depth + 1)? + arg_change(f, m, b, fm, fb, depth + 1)?)
}

fn boundary_winding<F: Analytic>(f: &F, r: &Rect) -> Option<i64> {
    let c = r.corners();
    let n_side = 16;
    let mut total = 0.0;
    for k in 0..4 {
        let (a, b) = (c[k], c[(k + 1) % 4]);
        let mut prev_z = a;
        let mut prev_f = f.value(a).filter(|v| v.norm() > 0.0 && v.is_finite())?;
        for j in 1..=n_side {
            let z = a + (b - a) * (j as f64 / n_side as f64);
            let fz = f.value(z).filter(|v| v.norm() > 0.0 && v.is_finite())?;
            total += arg_change(f, prev_z, z, prev_f, fz, 0)?;
            prev_z = z;
            prev_f = fz;
        }
    }
    let w = total / (2.0 * PI);
    let n = w.round();
    if (w - n).abs() > 1e-3 {
        return None;
    }
    Some(n as i64)
}

fn count_in<F: Analytic>(f: &F, poles: &[Pole], r: &Rect) -> Option<i64> {
    // poles too close to the boundary make the winding unreliable
    let scale = r.diameter();
    for p in poles {
        if r.contains_closed(p.at, 1e-9 * scale) && r.boundary_distance(p.at) < 1e-6 * scale {
            return None;
        }
    }
    let w = boundary_winding(f, r)?;
    let inside: i64 = poles.iter().filter(|p| r.contains(p.at)).map(|p| p.order as i64).sum();
    Some(w + inside)
}

// Shift the rectangle edges by a small, deterministic amount.
fn nudge(r: &Rect, k: u32) -> Rect {
    let e = 1e-4 * (k as f64) * r.diameter().max(1e-6) * std::f64::consts::FRAC_1_SQRT_2;
    Rect::new(r.re_min - e, r.re_max + 1.3 * e, r.im_min - 1.1 * e, r.im_max + 0.9 * e)
}

fn newton<F: Analytic>(f: &F, start: C, limit: &Rect) -> Result<Zero, RootError> {
    let mut z = start;
    for _ in 0..100 {
        let (v, d) = f.value_and_derivative(z).ok_or(RootError::NoConvergence(z))?;
        if v == C::new(0.0, 0.0) {
            return Ok(Zero { at: z, residual: 0.0, derivative: d });
        }
        if d.norm() == 0.0 {
            return Err(RootError::Multiple(z));
        }
        let step = v / d;
        z -= step;
        if !limit.contains_closed(z, limit.diameter()) {
            return Err(RootError::NoConvergence(z));
        }
        if step.norm() <= 1e-15 * (1.0 + z.norm()) {
            let (v, d) = f.value_and_derivative(z).ok_or(RootError::NoConvergence(z))?;
            return Ok(Zero { at: z, residual: v.norm(), derivative: d });
        }
    }
    Err(RootError::NoConvergence(z))
}

fn split(r: &Rect, frac: f64) -> (Rect, Rect) {
    if r.width() >= r.height() {
        let m = r.re_min + frac * r.width();
        (Rect::new(r.re_min, m, r.im_min, r.im_max), Rect::new(m, r.re_max, r.im_min, r.im_max))
    } else {
        let m = r.im_min + frac * r.height();
        (Rect::new(r.re_min, r.re_max, r.im_min, m), Rect::new(r.re_min, r.re_max, m, r.im_max))
    }
}

fn search<F: Analytic>(f: &F, poles: &[Pole], r: Rect, count: i64, out: &mut Vec<Zero>) -> Result<(), RootError> {
    if count <= 0 {
        return Ok(());
    }
    if count == 1 && r.diameter() < MIN_DIAMETER {
        let z = newton(f, r.centre(), &r)?;
        out.push(z);
        return Ok(());
    }
    if r.diameter() < TIGHT_DIAMETER {
        return Err(RootError::Multiple(r.centre()));
    }
    // try a few split positions until both halves have a clean count
    for k in 0..8 {
        let frac = 0.5 + 0.0173 * k as f64 * if k % 2 == 0 { 1.0 } else { -1.0 };
        let (a, b) = split(&r, frac);
        if let (Some(ca), Some(cb)) = (count_in(f, poles, &a), count_in(f, poles, &b)) {
            if ca + cb == count && ca >= 0 && cb >= 0 {
                search(f, poles, a, ca, out)?;
                search(f, poles, b, cb, out)?;
                return Ok(());
            }
        }
    }
    Err(RootError::Boundary(r.centre()))
}

/// All zeros of `f` in `rect`, given the poles of `f` (with orders) so the
/// argument principle counts zeros rather than zeros minus poles.
/// Returns the zeros sorted by real part then imaginary part.
pub fn find_zeros<F: Analytic>(f: &F, poles: &[Pole], rect: Rect) -> Result<Vec<Zero>, RootError> {
    let mut r = rect;
    let mut count = None;
    for k in 0..10 {
        if let Some(c) = count_in(f, poles, &r) {
            count = Some(c);
            break;
        }
        r = nudge(&rect, k + 1);
    }
    let count = count.ok_or(RootError::Boundary(rect.centre()))?;
    let mut out = Vec::new();
    search(f, poles, r, count, &mut out)?;
    // polished zeros from neighbouring boxes may coincide
    out.sort_by(|a, b| a.at.re.total_cmp(&b.at.re).then(a.at.im.total_cmp(&b.at.im)));
    let mut dedup: Vec<Zero> = Vec::new();
    for z in out {
        if let Some(prev) = dedup.iter().find(|p| (p.at - z.at).norm() < 1e-9) {
            return Err(RootError::Multiple(prev.at));
        }
        dedup.push(z);
    }
    if dedup.len() as i64 != count {
        return Err(RootError::CountMismatch { expected: count, found: dedup.len() });
    }
    for z in &dedup {
        let scale = z.at.norm().max(1.0);
        if z.derivative.norm() < 1e-10 * scale {
            return Err(RootError::Multiple(z.at));
        }
    }
    Ok(dedup)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn poly(roots: Vec<C>) -> impl Fn(C) -> Option<(C, C)> {
        move |z: C| {
            let mut v = C::new(1.0, 0.0);
            let mut d = C::new(0.0, 0.0);
            for r in &roots {
                d = d * (z - r) + v;
                v *= z - r;
            }
            Some((v, d))
        }
    }

    #[test]
    fn finds_polynomial_roots() {
        let roots = vec![C::new(0.3, 0.2), C::new(-1.1, 0.7), C::new(0.5, -0.9), C::new(2.5, 2.5)];
        let f = poly(roots.clone());
        let found = find_zeros(&f, &[], Rect::square(2.0)).unwrap();
        assert_eq!(found.len(), 3);
        for z in &found {
            assert!(roots.iter().any(|r| (r - z.at).norm() < 1e-13));
        }
    }

    #[test]
    fn accounts_for_declared_poles() {
        // (z - 0.4i) / (z + 0.5)^2
        let f = |z: C| {
            let p = z + 0.5;
            let v = (z - C::new(0.0, 0.4)) / (p * p);
            let d = 1.0 / (p * p) - 2.0 * (z - C::new(0.0, 0.4)) / (p * p * p);
            Some((v, d))
        };
        let poles = [Pole { at: C::new(-0.5, 0.0), order: 2 }];
        let found = find_zeros(&f, &poles, Rect::square(1.0)).unwrap();
        assert_eq!(found.len(), 1);
        assert!((found[0].at - C::new(0.0, 0.4)).norm() < 1e-14);
    }

    #[test]
    fn rejects_double_root() {
        let f = poly(vec![C::new(0.1, 0.1), C::new(0.1, 0.1)]);
        assert!(matches!(find_zeros(&f, &[], Rect::square(1.0)), Err(RootError::Multiple(_))));
    }

    #[test]
    fn close_but_distinct_roots_are_separated() {
        let roots = vec![C::new(0.1, 0.1), C::new(0.1 + 2e-4, 0.1)];
        let f = poly(roots.clone());
        let found = find_zeros(&f, &[], Rect::square(1.0)).unwrap();
        assert_eq!(found.len(), 2);
    }

    #[test]
    fn root_on_initial_boundary_is_nudged_inside() {
        let f = poly(vec![C::new(1.0, 0.0)]);
        let found = find_zeros(&f, &[], Rect::square(1.0)).unwrap();
        assert_eq!(found.len(), 1);
    }
}
