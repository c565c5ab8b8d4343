//! Paths in the complex s-plane, action integrals along them and winding
//! numbers of the F-map.
//!
//! Double-valued integrands (anything built on B or sqrt(q)) are written as a
//! function of the point and a chosen square root of a radicand. The root is
//! carried along each path by continuity from an anchor.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::field::{physical_root, FieldError, FieldProfile};
use crate::potential::{EffectivePotential, PotentialError};
use crate::quad;
use crate::roots::segment_distance;

type C = Complex64;

pub const DEFAULT_CLEARANCE: f64 = 0.05;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ContourError {
    #[error("singularity on the path near s = {0}")]
    SingularityOnPath(C),
    #[error("quadrature tolerance not met: error {error:.3e} for value {value}")]
    ToleranceNotMet { value: C, error: f64 },
    #[error("endpoint {0} is closer than the clearance to an obstacle")]
    EndpointTooClose(C),
    #[error("argument tracking failed near s = {0}")]
    ArgumentTracking(C),
    #[error("winding number {0} is not within 1e-3 of an integer")]
    NonInteger(f64),
    #[error("F vanishes or diverges on the path near s = {0}")]
    FZero(C),
    #[error("degenerate path")]
    Degenerate,
    #[error(transparent)]
    Field(#[from] FieldError),
}

impl From<PotentialError> for ContourError {
    fn from(e: PotentialError) -> ContourError {
        match e {
            PotentialError::Field(FieldError::Pole(s)) => ContourError::SingularityOnPath(s),
            PotentialError::Field(f) => ContourError::Field(f),
            PotentialError::C1Zero(s) | PotentialError::TurningPoint(s) => ContourError::SingularityOnPath(s),
        }
    }
}

fn field_err(e: FieldError) -> ContourError {
    match e {
        FieldError::Pole(s) | FieldError::BranchAmbiguity(s) => ContourError::SingularityOnPath(s),
        e => ContourError::Field(e),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum EndpointTag {
    TurningPoint,
    Origin,
    #[default]
    Generic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum DetourSide {
    #[default]
    Upper,
    Lower,
}

impl DetourSide {
    pub fn flipped(self) -> DetourSide {
        match self {
            DetourSide::Upper => DetourSide::Lower,
            DetourSide::Lower => DetourSide::Upper,
        }
    }
}

/// An oriented polyline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContourPath {
    pub points: Vec<C>,
    pub closed: bool,
    pub start: EndpointTag,
    pub end: EndpointTag,
    pub obstacles: Vec<C>,
    pub clearance: f64,
}

impl ContourPath {
    pub fn polyline(points: Vec<C>) -> ContourPath {
        ContourPath {
            points,
            closed: false,
            start: EndpointTag::Generic,
            end: EndpointTag::Generic,
            obstacles: vec![],
            clearance: DEFAULT_CLEARANCE,
        }
    }

    pub fn segment(a: C, b: C) -> ContourPath {
        ContourPath::polyline(vec![a, b])
    }

    /// Closed polyline; the first point is repeated at the end if needed.
    pub fn closed(mut points: Vec<C>) -> ContourPath {
        if points.first() != points.last() {
            points.push(points[0]);
        }
        let mut p = ContourPath::polyline(points);
        p.closed = true;
        p
    }

    pub fn with_tags(mut self, start: EndpointTag, end: EndpointTag) -> ContourPath {
        self.start = start;
        self.end = end;
        self
    }

    pub fn first(&self) -> C {
        self.points[0]
    }

    pub fn last(&self) -> C {
        *self.points.last().expect("paths are never empty")
    }

    pub fn length(&self) -> f64 {
        self.points.windows(2).map(|w| (w[1] - w[0]).norm()).sum()
    }

    /// Smallest distance between the path and any of its obstacles.
    pub fn min_clearance(&self) -> f64 {
        let mut d = f64::INFINITY;
        for &o in &self.obstacles {
            for w in self.points.windows(2) {
                d = d.min(segment_distance(o, w[0], w[1]));
            }
        }
        d
    }

    pub fn reversed(&self) -> ContourPath {
        let mut p = self.clone();
        p.points.reverse();
        std::mem::swap(&mut p.start, &mut p.end);
        p
    }

    pub fn conj(&self) -> ContourPath {
        let mut p = self.clone();
        for z in p.points.iter_mut().chain(p.obstacles.iter_mut()) {
            *z = z.conj();
        }
        p
    }

    /// Split every segment into `k` equal pieces.
    pub fn refined(&self, k: usize) -> ContourPath {
        let k = k.max(1);
        let mut pts = vec![self.points[0]];
        for w in self.points.windows(2) {
            for j in 1..=k {
                pts.push(w[0] + (w[1] - w[0]) * (j as f64 / k as f64));
            }
        }
        let mut p = self.clone();
        p.points = pts;
        p
    }

    /// Concatenate `other`, which must start where `self` ends.
    pub fn join(&self, other: &ContourPath) -> ContourPath {
        let mut p = self.clone();
        p.points.extend_from_slice(&other.points[1..]);
        p.end = other.end;
        p.obstacles.extend(other.obstacles.iter().filter(|o| !self.obstacles.contains(o)));
        p.closed = false;
        p
    }
}

// ----------------------------------------------------------------- integrands

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IntegrandTag {
    /// mu T B
    MuTB,
    /// phi' cos(Theta)
    PhiDotCosTheta,
    /// Theta' / sin(Theta)
    ThetaDotOverSinTheta,
    /// mu T B - phi' cos(Theta), the combination in the interference formula
    Action,
    SqrtQ2,
    SqrtQ0,
    Custom,
}

/// An integrand that may depend on a square root of `radicand`.
pub trait Integrand {
    fn tag(&self) -> IntegrandTag;
    fn radicand(&self, s: C) -> Result<C, ContourError>;
    fn value(&self, s: C, root: C) -> Result<C, ContourError>;
    /// Root on the reference sheet at `s`; defaults to the physical sheet.
    fn physical_root(&self, s: C) -> Result<C, ContourError> {
        physical_root(&|z| self.radicand(z).map_err(|_| FieldError::Pole(z)), s).map_err(field_err)
    }
}

/// Single-valued integrand from a closure.
pub struct Plain<F>(pub F);

impl<F: Fn(C) -> Result<C, ContourError>> Integrand for Plain<F> {
    fn tag(&self) -> IntegrandTag {
        IntegrandTag::Custom
    }
    fn radicand(&self, _: C) -> Result<C, ContourError> {
        Ok(C::new(1.0, 0.0))
    }
    fn value(&self, s: C, _: C) -> Result<C, ContourError> {
        (self.0)(s)
    }
}

/// sqrt(r(s)) for a closure `r`.
pub struct SqrtOf<F>(pub F);

impl<F: Fn(C) -> Result<C, ContourError>> Integrand for SqrtOf<F> {
    fn tag(&self) -> IntegrandTag {
        IntegrandTag::Custom
    }
    fn radicand(&self, s: C) -> Result<C, ContourError> {
        (self.0)(s)
    }
    fn value(&self, _: C, root: C) -> Result<C, ContourError> {
        Ok(root)
    }
}

/// Field-derived integrands; the root is the magnitude B.
pub struct FieldIntegrand<'a> {
    pub field: &'a FieldProfile,
    pub t: f64,
    pub tag: IntegrandTag,
}

impl Integrand for FieldIntegrand<'_> {
    fn tag(&self) -> IntegrandTag {
        self.tag
    }
    fn radicand(&self, s: C) -> Result<C, ContourError> {
        self.field.b_squared(s).map_err(field_err)
    }
    fn value(&self, s: C, b: C) -> Result<C, ContourError> {
        let mu_tb = || self.field.mu * self.t * b;
        let phi_cos = || -> Result<C, ContourError> {
            if self.field.is_planar() {
                return Ok(C::new(0.0, 0.0));
            }
            let j = self.field.b_jets(s, 2).map_err(field_err)?;
            let (bx, by, bz) = (j[0].value(), j[1].value(), j[2].value());
            let rho2 = bx * bx + by * by;
            if rho2.norm() == 0.0 {
                return Err(ContourError::SingularityOnPath(s));
            }
            Ok((bx * j[1].deriv(1) - by * j[0].deriv(1)) / rho2 * bz / b)
        };
        match self.tag {
            IntegrandTag::MuTB => Ok(mu_tb()),
            IntegrandTag::PhiDotCosTheta => phi_cos(),
            IntegrandTag::Action => Ok(mu_tb() - phi_cos()?),
            IntegrandTag::ThetaDotOverSinTheta => {
                let j = self.field.b_jets(s, 2).map_err(field_err)?;
                let (bx, by, bz) = (j[0].value(), j[1].value(), j[2].value());
                let (dx, dy, dz) = (j[0].deriv(1), j[1].deriv(1), j[2].deriv(1));
                let rho2 = bx * bx + by * by;
                // Theta'/sin(Theta) = (Bz (B.B') - B^2 Bz') / (B rho^2)
                Ok((bz * (bx * dx + by * dy) - b * b * dz) / (b * rho2))
            }
            _ => Err(ContourError::Degenerate),
        }
    }
}

/// sqrt(q2) or sqrt(q0) of a potential.
pub struct SqrtPotential<'a> {
    pub potential: &'a EffectivePotential,
    pub t: f64,
    pub full: bool,
}

impl Integrand for SqrtPotential<'_> {
    fn tag(&self) -> IntegrandTag {
        if self.full {
            IntegrandTag::SqrtQ2
        } else {
            IntegrandTag::SqrtQ0
        }
    }
    fn radicand(&self, s: C) -> Result<C, ContourError> {
        if self.full {
            Ok(self.potential.eval_q2(s, self.t)?)
        } else {
            Ok(self.potential.eval_q0(s)?)
        }
    }
    fn value(&self, _: C, root: C) -> Result<C, ContourError> {
        Ok(root)
    }
}

// ------------------------------------------------------------ branch tracking

/// Choice of the root at the start of a path.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum Anchor {
    /// Physical sheet, continued vertically from the real axis.
    #[default]
    Physical,
    /// The root nearest this value (only its direction matters when the
    /// path starts at a turning point).
    Root(C),
}

/// Roots tabulated along one straight segment.
struct RootTable {
    t: Vec<f64>,
    roots: Vec<C>,
}

const TABLE_STEP: f64 = 1.0 / 64.0;

fn pick(v: C, hint: C) -> C {
    let r = v.sqrt();
    if (r - hint).norm() <= (r + hint).norm() {
        r
    } else {
        -r
    }
}

impl RootTable {
    /// Continue from `root` at parameter `t0` to `t1` on the segment a -> b.
    fn build(f: &dyn Integrand, a: C, b: C, t0: f64, t1: f64, root: C) -> Result<RootTable, ContourError> {
        let at = |t: f64| a + (b - a) * t;
        let mut ts = vec![t0];
        let mut rs = vec![root];
        let mut h = TABLE_STEP;
        let mut t = t0;
        let dir = if t1 >= t0 { 1.0 } else { -1.0 };
        while dir * (t1 - t) > 1e-15 {
            let step = h.min(dir * (t1 - t));
            let tn = t + dir * step;
            let v = f.radicand(at(tn))?;
            let prev = *rs.last().expect("non-empty");
            let ok = if prev.norm() == 0.0 || v.norm() == 0.0 {
                true
            } else {
                let ratio = v / (prev * prev);
                ratio.arg().abs() < 0.25 * PI && ratio.norm() < 4.0
            };
            if !ok {
                h *= 0.5;
                if h < 1e-13 {
                    return Err(ContourError::SingularityOnPath(at(tn)));
                }
                continue;
            }
            rs.push(pick(v, prev));
            ts.push(tn);
            t = tn;
            h = (h * 1.5).min(TABLE_STEP);
        }
        if dir < 0.0 {
            ts.reverse();
            rs.reverse();
        }
        Ok(RootTable { t: ts, roots: rs })
    }

    fn root_at(&self, t: f64, v: C) -> C {
        let i = self.t.partition_point(|&x| x < t);
        let j = if i == 0 {
            0
        } else if i >= self.t.len() {
            self.t.len() - 1
        } else if (self.t[i] - t).abs() < (t - self.t[i - 1]).abs() {
            i
        } else {
            i - 1
        };
        // near a zero of the radicand the neighbouring node can be tiny;
        // prefer the larger of the two bracketing roots as the reference
        let mut hint = self.roots[j];
        if i > 0 && i < self.t.len() && hint.norm() < 1e-3 * self.roots[i - 1].norm().max(self.roots[i].norm()) {
            hint = if self.roots[i].norm() > self.roots[i - 1].norm() { self.roots[i] } else { self.roots[i - 1] };
        }
        pick(v, hint)
    }

    fn last_root(&self) -> C {
        *self.roots.last().expect("non-empty")
    }
}

// Offset from a turning-point end where tabulation starts.
const TP_OFFSET: f64 = 1e-6;

/// Result of an action integral.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ActionValue {
    pub value: C,
    pub error: f64,
    pub tag: IntegrandTag,
    /// Root of the radicand at the end of the path (on the continued sheet).
    pub end_root: C,
}

/// Integrate along `path`, carrying the square root by continuity from
/// `anchor`. Segments touching a turning-point end use s = s0 + d u^2.
pub fn action_integral(f: &dyn Integrand, path: &ContourPath, anchor: Anchor) -> Result<ActionValue, ContourError> {
    if path.points.len() < 2 {
        return Err(ContourError::Degenerate);
    }
    let nseg = path.points.len() - 1;
    let mut total = C::new(0.0, 0.0);
    let mut err = 0.0;
    let mut root: Option<C> = None;
    for k in 0..nseg {
        let (a, b) = (path.points[k], path.points[k + 1]);
        if a == b {
            continue;
        }
        let tp_a = k == 0 && path.start == EndpointTag::TurningPoint;
        let tp_b = k + 1 == nseg && path.end == EndpointTag::TurningPoint;
        let t0 = if tp_a { TP_OFFSET } else { 0.0 };
        let t1 = if tp_b { 1.0 - TP_OFFSET } else { 1.0 };
        let start_root = match root {
            Some(r) => pick(f.radicand(a + (b - a) * t0)?, r),
            None => {
                let s0 = a + (b - a) * t0;
                let v = f.radicand(s0)?;
                match anchor {
                    Anchor::Physical => f.physical_root(s0)?,
                    Anchor::Root(h) => pick(v, h),
                }
            }
        };
        let table = RootTable::build(f, a, b, t0, t1, start_root)?;
        let (v, e) = integrate_segment(f, a, b, &table, tp_a, tp_b)?;
        total += v;
        err += e;
        root = Some(table.last_root());
    }
    let end_root = match root {
        Some(r) => pick(f.radicand(path.last())?, r),
        None => return Err(ContourError::Degenerate),
    };
    let tol = 1e-10f64.max(1e-8 * total.norm());
    if !(err <= tol) || !total.is_finite() {
        return Err(ContourError::ToleranceNotMet { value: total, error: err });
    }
    Ok(ActionValue { value: total, error: err, tag: f.tag(), end_root })
}

fn integrate_segment(
    f: &dyn Integrand,
    a: C,
    b: C,
    table: &RootTable,
    tp_a: bool,
    tp_b: bool,
) -> Result<(C, f64), ContourError> {
    let d = b - a;
    let eval_t = |t: f64| -> Result<C, ContourError> {
        let s = a + d * t;
        let v = f.radicand(s)?;
        let r = table.root_at(t, v);
        let y = f.value(s, r)?;
        if !y.is_finite() {
            return Err(ContourError::SingularityOnPath(s));
        }
        Ok(y)
    };
    let run = |g: &dyn Fn(f64) -> Result<C, ContourError>, lo: f64, hi: f64| {
        let r = quad::integrate(g, lo, hi, 1e-13, 1e-11, 4000)?;
        Ok::<_, ContourError>((r.value, r.error))
    };
    match (tp_a, tp_b) {
        (false, false) => {
            let (v, e) = run(&|t| eval_t(t), 0.0, 1.0)?;
            Ok((v * d, e * d.norm()))
        }
        (true, false) => {
            // t = u^2
            let (v, e) = run(&|u| Ok(eval_t(u * u)? * (2.0 * u)), 0.0, 1.0)?;
            Ok((v * d, e * d.norm()))
        }
        (false, true) => {
            // t = 1 - u^2
            let (v, e) = run(&|u| Ok(eval_t(1.0 - u * u)? * (2.0 * u)), 0.0, 1.0)?;
            Ok((v * d, e * d.norm()))
        }
        (true, true) => {
            let (v1, e1) = run(&|u| Ok(eval_t(0.5 * u * u)? * u), 0.0, 1.0)?;
            let (v2, e2) = run(&|u| Ok(eval_t(1.0 - 0.5 * u * u)? * u), 0.0, 1.0)?;
            Ok(((v1 + v2) * d, (e1 + e2) * d.norm()))
        }
    }
}

// ------------------------------------------------------------------ winding

/// Winding number of `g` around 0 along a closed path, with the argument
/// tracked by adaptive stepping. `g` maps a point and the state at the last
/// accepted point to a value and new state, or `None` to ask for a shorter
/// step (e.g. when its own branch tracking would be unsafe).
pub fn winding_of<S: Copy>(
    init: S,
    mut g: impl FnMut(C, S) -> Result<Option<(C, S)>, ContourError>,
    path: &ContourPath,
) -> Result<i64, ContourError> {
    if !path.closed || path.points.len() < 3 {
        return Err(ContourError::Degenerate);
    }
    let mut total = 0.0;
    let (mut prev, mut state) = g(path.points[0], init)?.ok_or(ContourError::ArgumentTracking(path.points[0]))?;
    if prev.norm() == 0.0 || !prev.is_finite() {
        return Err(ContourError::FZero(path.points[0]));
    }
    for w in path.points.windows(2) {
        let (a, b) = (w[0], w[1]);
        let mut t = 0.0;
        let mut h: f64 = 1.0 / 8.0;
        while t < 1.0 {
            let step = h.min(1.0 - t);
            let s = a + (b - a) * (t + step);
            let next = g(s, state)?;
            let accept = match next {
                Some((v, _)) => {
                    if v.norm() == 0.0 || !v.is_finite() {
                        return Err(ContourError::FZero(s));
                    }
                    (v / prev).arg().abs() <= PI / 8.0
                }
                None => false,
            };
            if !accept {
                h *= 0.5;
                if h < 1e-12 {
                    return Err(ContourError::ArgumentTracking(s));
                }
                continue;
            }
            let (v, st) = next.expect("accepted steps have a value");
            total += (v / prev).arg();
            prev = v;
            state = st;
            t += step;
            h = (h * 1.5).min(1.0 / 8.0);
        }
    }
    let w = total / (2.0 * PI);
    let n = w.round();
    if (w - n).abs() > 1e-3 {
        return Err(ContourError::NonInteger(w));
    }
    Ok(n as i64)
}

/// Winding of the F-map image of a closed path around 0, with B0 carried by
/// continuity from the physical sheet at the path point nearest the real
/// axis. Positive for a counterclockwise image.
pub fn winding_number(field: &FieldProfile, path: &ContourPath) -> Result<i64, ContourError> {
    let path = &start_near_axis(path);
    let b0 = field.b0_physical(path.points[0]).map_err(field_err)?;
    winding_of(
        b0,
        |s, b| {
            let cand = pick(field.b0_squared(s).map_err(field_err)?, b);
            if (cand / b).arg().abs() > PI / 8.0 {
                return Ok(None);
            }
            let fv = field.eval_f(s, Some(cand)).map_err(|e| match e {
                FieldError::DenominatorZero(s) => ContourError::FZero(s),
                e => field_err(e),
            })?;
            Ok(Some((fv.f, cand)))
        },
        path,
    )
}

// Same closed path, restarted at the vertex nearest the real axis, so the
// physical sheet there is reached without passing a branch point.
fn start_near_axis(path: &ContourPath) -> ContourPath {
    if !path.closed || path.points.len() < 3 {
        return path.clone();
    }
    let n = path.points.len() - 1;
    let k = (0..n).min_by(|&i, &j| path.points[i].im.abs().total_cmp(&path.points[j].im.abs())).unwrap_or(0);
    let mut p = path.clone();
    p.points = (0..=n).map(|j| path.points[(k + j) % n]).collect();
    p
}

/// Closed stadium around the segment a -> b at distance `r`, traversed upper
/// side first (the side to the left of a -> b).
pub fn stadium(a: C, b: C, r: f64, arc_points: usize) -> ContourPath {
    let d = (b - a) / (b - a).norm();
    let n = C::new(0.0, 1.0) * d;
    let m = arc_points.max(4);
    let mut pts = Vec::with_capacity(2 * m + 4);
    // left tip, over the top, right cap, back along the bottom
    for j in 0..=m {
        let ang = PI - 0.5 * PI * j as f64 / m as f64;
        pts.push(a + r * (d * ang.cos() + n * ang.sin()));
    }
    for j in 0..=2 * m {
        let ang = 0.5 * PI - PI * j as f64 / (2 * m) as f64;
        pts.push(b + r * (d * ang.cos() + n * ang.sin()));
    }
    for j in 0..=m {
        let ang = -0.5 * PI - 0.5 * PI * j as f64 / m as f64;
        pts.push(a + r * (d * ang.cos() + n * ang.sin()));
    }
    pts.dedup();
    ContourPath::closed(pts)
}

/// Stadium around a -> b whose radius is half the distance from the segment
/// to the nearest obstacle, and at most a quarter of its length.
pub fn stadium_avoiding(a: C, b: C, obstacles: &[C]) -> ContourPath {
    let dmin = obstacles.iter().map(|&o| segment_distance(o, a, b)).fold(f64::INFINITY, f64::min);
    let r = (0.5 * dmin).min(0.25 * (b - a).norm());
    let mut p = stadium(a, b, r, 64);
    p.obstacles = obstacles.to_vec();
    p.clearance = 0.5 * r;
    p
}

// ------------------------------------------------------------------ detours

const ARC_SEGMENTS: usize = 32;

/// Piecewise-linear path from -> to that keeps `clearance` from every
/// obstacle, using semicircular detours of radius 2 * clearance on `side`.
pub fn build_avoiding_path(
    from: C,
    to: C,
    obstacles: &[C],
    clearance: f64,
    side: DetourSide,
) -> Result<ContourPath, ContourError> {
    for &o in obstacles {
        if (o - from).norm() < clearance {
            return Err(ContourError::EndpointTooClose(from));
        }
        if (o - to).norm() < clearance {
            return Err(ContourError::EndpointTooClose(to));
        }
    }
    let len = (to - from).norm();
    if len == 0.0 {
        return Err(ContourError::Degenerate);
    }
    let d = (to - from) / len;
    let mut n = C::new(0.0, 1.0) * d;
    // upper means the +i side; a vertical segment breaks the tie toward +Re
    if n.im < 0.0 || (n.im == 0.0 && n.re < 0.0) {
        n = -n;
    }
    if side == DetourSide::Lower {
        n = -n;
    }
    // intervals [centre - R, centre + R] along the line
    let mut intervals: Vec<(f64, f64)> = obstacles
        .iter()
        .filter(|&&o| segment_distance(o, from, to) < clearance)
        .map(|&o| {
            let x = ((o - from) * d.conj()).re;
            (x - 2.0 * clearance, x + 2.0 * clearance)
        })
        .collect();
    intervals.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut merged: Vec<(f64, f64)> = vec![];
    for iv in intervals {
        match merged.last_mut() {
            Some(last) if iv.0 <= last.1 => last.1 = last.1.max(iv.1),
            _ => merged.push(iv),
        }
    }
    let mut pts = vec![from];
    for (lo, hi) in merged {
        let mut centre = 0.5 * (lo + hi);
        let mut radius = 0.5 * (hi - lo);
        // enlarge until the arc keeps the clearance
        let arc = |c: f64, r: f64| -> Vec<C> {
            (0..=ARC_SEGMENTS)
                .map(|j| {
                    let ang = PI - PI * j as f64 / ARC_SEGMENTS as f64;
                    from + d * (c + r * ang.cos()) + n * (r * ang.sin())
                })
                .collect()
        };
        let clear =
            |p: &[C]| obstacles.iter().all(|&o| p.windows(2).all(|w| segment_distance(o, w[0], w[1]) >= clearance));
        let mut tries = 0;
        let mut a = arc(centre, radius);
        while !clear(&a) {
            radius *= 1.25;
            tries += 1;
            if tries > 60 {
                return Err(ContourError::EndpointTooClose(from + d * centre));
            }
            a = arc(centre, radius);
        }
        if centre - radius < 0.0 || centre + radius > len {
            // detour would overshoot an endpoint; keep it inside
            let lo = (centre - radius).max(1e-9 * len);
            let hi = (centre + radius).min(len * (1.0 - 1e-9));
            centre = 0.5 * (lo + hi);
            radius = 0.5 * (hi - lo);
            a = arc(centre, radius);
            if !clear(&a) {
                return Err(ContourError::EndpointTooClose(from + d * centre));
            }
        }
        pts.extend(a);
    }
    pts.push(to);
    pts.dedup();
    let mut p = ContourPath::polyline(pts);
    p.obstacles = obstacles.to_vec();
    p.clearance = clearance;
    Ok(p)
}
