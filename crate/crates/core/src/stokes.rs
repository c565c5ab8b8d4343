//! Turning points, Stokes lines and the Stokes graph of the adiabatic-limit
//! potential q0.
//!
//! A Stokes line is a curve from a turning point on which Im W = 0, with
//! W(s) = int_{s0}^s sqrt(q0); anti-Stokes lines have Re W = 0.

use std::collections::{BTreeSet, VecDeque};
use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::contours::{action_integral, Anchor, ContourPath, EndpointTag, SqrtOf};
use crate::potential::{EffectivePotential, PotentialError};
use crate::roots::{find_zeros, segment_distance, Pole, Rect, RootError};

type C = Complex64;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum StokesError {
    #[error("turning point search failed: {0}")]
    Roots(#[from] RootError),
    #[error("not a turning point: |q0({0})| = {1:.3e}")]
    NotATurningPoint(C, f64),
    #[error("step size collapsed near s = {0}")]
    StepCollapse(C),
    #[error("potential error: {0}")]
    Potential(#[from] PotentialError),
    #[error("no NED chain: {0}")]
    NotNed(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LineKind {
    Stokes,
    AntiStokes,
}

impl LineKind {
    // sqrt(q0) ds is kappa times a positive number along the line
    fn kappa(self) -> C {
        match self {
            LineKind::Stokes => C::new(1.0, 0.0),
            LineKind::AntiStokes => C::new(0.0, 1.0),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct TurningPoint {
    pub location: C,
    pub residual: f64,
    pub multiplicity: u32,
    /// dq0/ds at the point.
    pub slope: C,
    /// Unit directions of the three Stokes lines leaving the point.
    pub directions: [C; 3],
}

impl TurningPoint {
    fn new(location: C, residual: f64, slope: C) -> TurningPoint {
        TurningPoint {
            location,
            residual,
            multiplicity: 1,
            slope,
            directions: local_directions(slope, LineKind::Stokes),
        }
    }

    pub fn directions_for(&self, kind: LineKind) -> [C; 3] {
        local_directions(self.slope, kind)
    }
}

/// Directions from the local model q ~ a (s - s0): W ~ (2/3) sqrt(a) (s-s0)^(3/2).
pub fn local_directions(a: C, kind: LineKind) -> [C; 3] {
    let shift = match kind {
        LineKind::Stokes => 0.0,
        LineKind::AntiStokes => 0.5 * PI,
    };
    [0, 1, 2].map(|m| {
        let th = (2.0 / 3.0) * (m as f64 * PI + shift - 0.5 * a.arg());
        C::from_polar(1.0, th)
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Terminus {
    /// Left the box heading in `direction`.
    Infinity {
        direction: C,
    },
    Pole {
        at: C,
    },
    TurningPoint {
        at: C,
    },
}

#[derive(Debug, Clone, Serialize)]
pub struct StokesLine {
    pub origin: C,
    pub direction_index: usize,
    pub kind: LineKind,
    pub points: Vec<C>,
    /// W relative to the origin at every point.
    pub w: Vec<C>,
    pub terminus: Terminus,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TraceOptions {
    /// Largest step in s.
    pub h_max: f64,
    /// Step as a fraction of the distance to the nearest singular point.
    pub h_rel: f64,
    pub max_steps: usize,
}

impl Default for TraceOptions {
    fn default() -> Self {
        TraceOptions { h_max: 0.02, h_rel: 0.1, max_steps: 200_000 }
    }
}

const CAPTURE: f64 = 1e-6;
const START_OFFSET: f64 = 1e-4;

fn pick(v: C, hint: C) -> C {
    let r = v.sqrt();
    if (r - hint).norm() <= (r + hint).norm() {
        r
    } else {
        -r
    }
}

/// All simple zeros of q0 in `rect`.
pub fn find_turning_points(ep: &EffectivePotential, rect: Rect) -> Result<Vec<TurningPoint>, StokesError> {
    let f = |z: C| -> Option<(C, C)> {
        let j = ep.q0_jet(z, 2).ok()?;
        let (v, d) = (j.value(), j.deriv(1));
        (v.is_finite() && d.is_finite()).then_some((v, d))
    };
    let zeros = find_zeros(&f, &ep.field.poles, rect)?;
    Ok(zeros.into_iter().map(|z| TurningPoint::new(z.at, z.residual, z.derivative)).collect())
}

struct Tracer<'a> {
    ep: &'a EffectivePotential,
    kind: LineKind,
    singular: Vec<C>,
    poles: Vec<C>,
    targets: Vec<C>,
    bbox: Rect,
    opts: TraceOptions,
}

impl Tracer<'_> {
    fn q(&self, s: C) -> Result<C, StokesError> {
        Ok(self.ep.eval_q0(s)?)
    }

    fn dir(&self, s: C, r_hint: C) -> Result<(C, C), StokesError> {
        let r = pick(self.q(s)?, r_hint);
        Ok((self.kind.kappa() * r.conj() / r.norm(), r))
    }

    // W(b) - W(a) along the chord, 5-point Gauss-Legendre
    fn dw(&self, a: C, b: C, r_hint: C) -> Result<C, StokesError> {
        const X: [f64; 5] = [-0.906179845938664, -0.538469310105683, 0.0, 0.538469310105683, 0.906179845938664];
        const W: [f64; 5] =
            [0.236926885056189, 0.478628670499366, 0.568888888888889, 0.478628670499366, 0.236926885056189];
        let mut acc = C::new(0.0, 0.0);
        for (x, w) in X.iter().zip(W) {
            let s = a + (b - a) * (0.5 * (1.0 + x));
            acc += pick(self.q(s)?, r_hint) * w;
        }
        Ok(acc * (b - a) * 0.5)
    }

    // Move s across the line until Im(W/kappa) vanishes.
    fn project(&self, mut s: C, mut w: C, mut r: C) -> Result<(C, C, C), StokesError> {
        let k = self.kind.kappa();
        for _ in 0..8 {
            let off = (w / k).im;
            if off.abs() < 1e-13 * (1.0 + w.norm()) {
                break;
            }
            let delta = -k * C::new(0.0, off) / r;
            let sn = s + delta;
            w += self.dw(s, sn, r)?;
            r = pick(self.q(sn)?, r);
            s = sn;
        }
        Ok((s, w, r))
    }

    fn nearest_singular(&self, s: C) -> f64 {
        self.singular.iter().map(|&p| (p - s).norm()).fold(f64::INFINITY, f64::min)
    }

    fn trace(&self, tp: &TurningPoint, index: usize) -> Result<StokesLine, StokesError> {
        let s0 = tp.location;
        let e = tp.directions_for(self.kind)[index];
        let scale = tp.slope.norm();
        let qs = self.q(s0)?.norm();
        if qs > 1e-8 * scale.max(1e-300) || scale == 0.0 {
            return Err(StokesError::NotATurningPoint(s0, qs));
        }
        let away = self.singular.iter().map(|&p| (p - s0).norm()).filter(|&d| d > 0.0).fold(1.0, f64::min);
        let eps = START_OFFSET * away;
        let start = s0 + e * eps;
        // root with sqrt(q0) e along kappa
        let r_start = {
            let r = self.q(start)?.sqrt();
            if (r * e / self.kind.kappa()).re >= 0.0 {
                r
            } else {
                -r
            }
        };
        let path = ContourPath::segment(s0, start).with_tags(EndpointTag::TurningPoint, EndpointTag::Generic);
        let w0 = action_integral(&SqrtOf(|z| self.ep.eval_q0(z).map_err(Into::into)), &path, Anchor::Root(r_start))
            .map_err(|_| StokesError::StepCollapse(start))?
            .value;
        let (mut s, mut w, mut r) = self.project(start, w0, r_start)?;
        let mut points = vec![s0, s];
        let mut ws = vec![C::new(0.0, 0.0), w];
        let own = |p: C| (p - s0).norm() < 1e-12;
        for _ in 0..self.opts.max_steps {
            let dist = self.nearest_singular(s);
            let h = (self.opts.h_rel * dist).min(self.opts.h_max);
            if h < 1e-14 {
                return Err(StokesError::StepCollapse(s));
            }
            // classic RK4 on the unit direction field
            let (k1, r1) = self.dir(s, r)?;
            let (k2, r2) = self.dir(s + k1 * (0.5 * h), r1)?;
            let (k3, r3) = self.dir(s + k2 * (0.5 * h), r2)?;
            let (k4, _) = self.dir(s + k3 * h, r3)?;
            let sn = s + (k1 + 2.0 * k2 + 2.0 * k3 + k4) * (h / 6.0);
            let rn = pick(self.q(sn)?, r);
            let wn = w + self.dw(s, sn, r)?;
            let (sn, wn, rn) = self.project(sn, wn, rn)?;

            // capture by a turning point or pole, including a close pass
            for (&p, is_pole) in self.targets.iter().map(|p| (p, false)).chain(self.poles.iter().map(|p| (p, true))) {
                if !is_pole && own(p) {
                    continue;
                }
                if segment_distance(p, s, sn) < CAPTURE || (p - sn).norm() < CAPTURE {
                    points.push(p);
                    ws.push(wn);
                    let terminus = if is_pole { Terminus::Pole { at: p } } else { Terminus::TurningPoint { at: p } };
                    return Ok(self.finish(tp, index, points, ws, terminus));
                }
            }
            if !self.bbox.contains(sn) {
                let exit = clip_to_box(&self.bbox, s, sn);
                points.push(exit);
                ws.push(w + self.dw(s, exit, r)?);
                let d = (sn - s) / (sn - s).norm();
                return Ok(self.finish(tp, index, points, ws, Terminus::Infinity { direction: d }));
            }
            points.push(sn);
            ws.push(wn);
            s = sn;
            w = wn;
            r = rn;
        }
        Err(StokesError::StepCollapse(s))
    }

    fn finish(&self, tp: &TurningPoint, index: usize, points: Vec<C>, w: Vec<C>, terminus: Terminus) -> StokesLine {
        StokesLine { origin: tp.location, direction_index: index, kind: self.kind, points, w, terminus }
    }
}

fn clip_to_box(r: &Rect, a: C, b: C) -> C {
    let mut t: f64 = 1.0;
    let d = b - a;
    if d.re > 0.0 {
        t = t.min((r.re_max - a.re) / d.re);
    } else if d.re < 0.0 {
        t = t.min((r.re_min - a.re) / d.re);
    }
    if d.im > 0.0 {
        t = t.min((r.im_max - a.im) / d.im);
    } else if d.im < 0.0 {
        t = t.min((r.im_min - a.im) / d.im);
    }
    a + d * t.clamp(0.0, 1.0)
}

/// Trace one line from `tp` along local direction `index` (0..3). `others`
/// are the remaining turning points, which capture the line.
pub fn trace_stokes_line(
    ep: &EffectivePotential,
    tp: &TurningPoint,
    index: usize,
    kind: LineKind,
    others: &[C],
    bbox: Rect,
    opts: TraceOptions,
) -> Result<StokesLine, StokesError> {
    let poles: Vec<C> = ep.field.poles.iter().map(|p| p.at).collect();
    let mut singular = poles.clone();
    singular.extend_from_slice(others);
    singular.push(tp.location);
    let tracer = Tracer { ep, kind, singular, poles, targets: others.to_vec(), bbox, opts };
    tracer.trace(tp, index % 3)
}

// ------------------------------------------------------------------- graph

#[derive(Debug, Clone, Serialize)]
pub struct Sector {
    pub id: usize,
    /// Raster cells in the sector.
    pub cells: usize,
    /// A point inside the sector.
    pub sample: C,
    pub poles: Vec<C>,
    pub contains_origin: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NedChain {
    /// Lower conjugate of the first chain point.
    pub conj_first: C,
    /// Upper chain s1..sn, ordered by real part.
    pub upper: Vec<C>,
}

impl NedChain {
    pub fn n(&self) -> usize {
        self.upper.len()
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct StokesGraph {
    pub bbox: Rect,
    pub turning_points: Vec<TurningPoint>,
    pub poles: Vec<Pole>,
    pub lines: Vec<StokesLine>,
    pub sectors: Vec<Sector>,
    pub central_sector: Option<usize>,
    /// Indices into `lines` of the lines bounding the central strip.
    pub strip_boundary: Vec<usize>,
    pub chain: Option<NedChain>,
    #[serde(skip)]
    raster: Raster,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GraphOptions {
    /// Turning point search box.
    pub search: Rect,
    /// Half width of the drawing box; default 4 (1 + max |turning point|).
    pub half_width: Option<f64>,
    /// Trace only the upper half plane and mirror (fields real on the real axis).
    pub symmetrize: bool,
    pub anti_stokes: bool,
    pub raster: usize,
    pub trace: TraceOptions,
}

impl Default for GraphOptions {
    fn default() -> Self {
        GraphOptions {
            search: Rect::square(10.0),
            half_width: None,
            symmetrize: true,
            anti_stokes: false,
            raster: 512,
            trace: TraceOptions::default(),
        }
    }
}

#[derive(Debug, Clone, Default)]
struct Raster {
    n: usize,
    bbox: Option<Rect>,
    /// Component label per cell, usize::MAX for cells on a line.
    label: Vec<usize>,
}

impl Raster {
    fn cell(&self, z: C) -> Option<(usize, usize)> {
        let b = self.bbox?;
        let fx = (z.re - b.re_min) / b.width();
        let fy = (z.im - b.im_min) / b.height();
        if !(0.0..=1.0).contains(&fx) || !(0.0..=1.0).contains(&fy) {
            return None;
        }
        let i = ((fx * self.n as f64) as usize).min(self.n - 1);
        let j = ((fy * self.n as f64) as usize).min(self.n - 1);
        Some((i, j))
    }

    fn centre(&self, i: usize, j: usize) -> C {
        let b = self.bbox.expect("raster has a box");
        C::new(
            b.re_min + (i as f64 + 0.5) * b.width() / self.n as f64,
            b.im_min + (j as f64 + 0.5) * b.height() / self.n as f64,
        )
    }

    fn label_at(&self, z: C) -> Option<usize> {
        let (i, j) = self.cell(z)?;
        let l = self.label[j * self.n + i];
        (l != usize::MAX).then_some(l)
    }

    /// Labels of free cells within `radius` cells of z.
    fn labels_near(&self, z: C, radius: usize) -> BTreeSet<usize> {
        let mut out = BTreeSet::new();
        if let Some((i, j)) = self.cell(z) {
            let r = radius as isize;
            for dj in -r..=r {
                for di in -r..=r {
                    let (a, b) = (i as isize + di, j as isize + dj);
                    if a < 0 || b < 0 || a >= self.n as isize || b >= self.n as isize {
                        continue;
                    }
                    let l = self.label[b as usize * self.n + a as usize];
                    if l != usize::MAX {
                        out.insert(l);
                    }
                }
            }
        }
        out
    }
}

fn rasterize(bbox: Rect, n: usize, lines: &[StokesLine], poles: &[C]) -> (Raster, Vec<Sector>) {
    let mut r = Raster { n, bbox: Some(bbox), label: vec![0; n * n] };
    let cell = bbox.width().min(bbox.height()) / n as f64;
    for l in lines.iter().filter(|l| l.kind == LineKind::Stokes) {
        for w in l.points.windows(2) {
            let steps = ((w[1] - w[0]).norm() / (0.25 * cell)).ceil().max(1.0) as usize;
            for k in 0..=steps {
                let z = w[0] + (w[1] - w[0]) * (k as f64 / steps as f64);
                if let Some((i, j)) = r.cell(z) {
                    r.label[j * n + i] = usize::MAX;
                }
            }
        }
    }
    // flood fill, 4-connected; labels start at 1 so that 0 means unvisited
    let mut next = 1;
    let mut sizes = vec![0usize];
    let mut samples = vec![C::new(0.0, 0.0)];
    for start in 0..n * n {
        if r.label[start] != 0 {
            continue;
        }
        let mut q = VecDeque::from([start]);
        r.label[start] = next;
        let mut count = 0;
        while let Some(c) = q.pop_front() {
            count += 1;
            let (i, j) = (c % n, c / n);
            let mut push = |a: usize, b: usize| {
                let k = b * n + a;
                if r.label[k] == 0 {
                    r.label[k] = next;
                    q.push_back(k);
                }
            };
            if i > 0 {
                push(i - 1, j);
            }
            if i + 1 < n {
                push(i + 1, j);
            }
            if j > 0 {
                push(i, j - 1);
            }
            if j + 1 < n {
                push(i, j + 1);
            }
        }
        sizes.push(count);
        samples.push(r.centre(start % n, start / n));
        next += 1;
    }
    for l in r.label.iter_mut() {
        if *l != usize::MAX {
            *l -= 1;
        }
    }
    let origin = r.label_at(C::new(0.0, 0.0));
    let sectors = (1..next)
        .map(|id| Sector {
            id: id - 1,
            cells: sizes[id],
            sample: samples[id],
            poles: poles.iter().copied().filter(|&p| r.labels_near(p, 1).contains(&(id - 1))).collect(),
            contains_origin: origin == Some(id - 1),
        })
        .collect();
    (r, sectors)
}

/// Turning points, all lines from them, sectors and (when present) the NED chain.
pub fn build_graph(ep: &EffectivePotential, opts: &GraphOptions) -> Result<StokesGraph, StokesError> {
    let tps = find_turning_points(ep, opts.search)?;
    let max_tp = tps.iter().map(|t| t.location.norm()).fold(0.0, f64::max);
    let l = opts.half_width.unwrap_or(4.0 * (1.0 + max_tp));
    let bbox = Rect::square(l);
    let locs: Vec<C> = tps.iter().map(|t| t.location).collect();
    let mut kinds = vec![LineKind::Stokes];
    if opts.anti_stokes {
        kinds.push(LineKind::AntiStokes);
    }
    let jobs: Vec<(usize, usize, LineKind)> = tps
        .iter()
        .enumerate()
        .filter(|(_, t)| !opts.symmetrize || t.location.im >= 0.0)
        .flat_map(|(i, _)| kinds.iter().flat_map(move |&k| (0..3).map(move |d| (i, d, k))))
        .collect();
    let traced: Result<Vec<StokesLine>, StokesError> = jobs
        .par_iter()
        .map(|&(i, d, k)| {
            let others: Vec<C> = locs.iter().copied().filter(|&z| z != locs[i]).collect();
            trace_stokes_line(ep, &tps[i], d, k, &others, bbox, opts.trace)
        })
        .collect();
    let mut lines = traced?;
    if opts.symmetrize {
        let mirrored: Vec<StokesLine> = lines
            .iter()
            .filter(|l| l.origin.im > 0.0)
            .map(|l| StokesLine {
                origin: l.origin.conj(),
                direction_index: l.direction_index,
                kind: l.kind,
                points: l.points.iter().map(|z| z.conj()).collect(),
                w: l.w.iter().map(|z| z.conj()).collect(),
                terminus: match l.terminus {
                    Terminus::Infinity { direction } => Terminus::Infinity { direction: direction.conj() },
                    Terminus::Pole { at } => Terminus::Pole { at: at.conj() },
                    Terminus::TurningPoint { at } => Terminus::TurningPoint { at: at.conj() },
                },
            })
            .collect();
        lines.extend(mirrored);
    }
    let pole_locs: Vec<C> = ep.field.poles.iter().map(|p| p.at).collect();
    let (raster, sectors) = rasterize(bbox, opts.raster.max(16), &lines, &pole_locs);
    let central_sector = raster.label_at(C::new(0.0, 0.0));
    let mut g = StokesGraph {
        bbox,
        turning_points: tps,
        poles: ep.field.poles.clone(),
        lines,
        sectors,
        central_sector,
        strip_boundary: vec![],
        chain: None,
        raster,
    };
    if let Ok(chain) = identify_ned_chain(&g) {
        g.strip_boundary = strip_boundary(&g, &chain);
        g.chain = Some(chain);
    }
    Ok(g)
}

impl StokesGraph {
    /// Sector label at a point, `None` on a line or outside the box.
    pub fn sector_at(&self, z: C) -> Option<usize> {
        self.raster.label_at(z)
    }

    /// Does the central strip contain every real point of the box and no
    /// turning point?
    pub fn strip_is_regular(&self) -> bool {
        let Some(c) = self.central_sector else { return false };
        let n = self.raster.n;
        let b = self.bbox;
        let ok_axis = (0..n).all(|i| {
            let x = b.re_min + (i as f64 + 0.5) * b.width() / n as f64;
            self.raster.label_at(C::new(x, 0.0)) == Some(c)
        });
        ok_axis && self.turning_points.iter().all(|t| self.raster.label_at(t.location) != Some(c))
    }

    pub fn stokes_lines(&self) -> impl Iterator<Item = &StokesLine> {
        self.lines.iter().filter(|l| l.kind == LineKind::Stokes)
    }
}

// a turning point touches the strip when free cells right next to it belong there
fn touches(g: &StokesGraph, z: C, sector: usize) -> bool {
    g.raster.labels_near(z, 3).contains(&sector)
}

/// The lower point s1bar and the upper chain s1..sn on the boundary of the
/// central strip.
pub fn identify_ned_chain(g: &StokesGraph) -> Result<NedChain, StokesError> {
    let c = g.central_sector.ok_or_else(|| StokesError::NotNed("origin lies on a Stokes line".into()))?;
    if !g.strip_is_regular() {
        return Err(StokesError::NotNed("central strip does not contain the whole real axis".into()));
    }
    let mut upper: Vec<C> =
        g.turning_points.iter().map(|t| t.location).filter(|z| z.im > 0.0 && touches(g, *z, c)).collect();
    if upper.is_empty() {
        return Err(StokesError::NotNed("no turning point on the upper strip boundary".into()));
    }
    upper.sort_by(|a, b| a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im)));
    // consecutive chain points must be joined by a Stokes line
    for w in upper.windows(2) {
        let joined = g.stokes_lines().any(|l| {
            let end = match l.terminus {
                Terminus::TurningPoint { at } => at,
                _ => return false,
            };
            (l.origin == w[0] && end == w[1]) || (l.origin == w[1] && end == w[0])
        });
        if !joined {
            return Err(StokesError::NotNed(format!("no Stokes line joins {} and {}", w[0], w[1])));
        }
    }
    // the ends run off to infinity
    for end in [upper[0], *upper.last().expect("non-empty")] {
        let escapes = g.stokes_lines().any(|l| l.origin == end && matches!(l.terminus, Terminus::Infinity { .. }));
        if !escapes {
            return Err(StokesError::NotNed(format!("no Stokes line from {end} reaches infinity")));
        }
    }
    let conj_first = g
        .turning_points
        .iter()
        .map(|t| t.location)
        .find(|z| (*z - upper[0].conj()).norm() < 1e-8 && touches(g, *z, c))
        .ok_or_else(|| StokesError::NotNed("no conjugate partner of s1 on the lower boundary".into()))?;
    Ok(NedChain { conj_first, upper })
}

fn strip_boundary(g: &StokesGraph, chain: &NedChain) -> Vec<usize> {
    let Some(c) = g.central_sector else { return vec![] };
    let mut pts: Vec<C> = chain.upper.clone();
    pts.extend(chain.upper.iter().map(|z| z.conj()));
    g.lines
        .iter()
        .enumerate()
        .filter(|(_, l)| l.kind == LineKind::Stokes && pts.contains(&l.origin))
        .filter(|(_, l)| {
            let mid = l.points[l.points.len() / 2];
            g.raster.labels_near(mid, 2).contains(&c)
        })
        .map(|(i, _)| i)
        .collect()
}

/// Symmetric Hausdorff distance between two polylines.
pub fn hausdorff(a: &[C], b: &[C]) -> f64 {
    fn one_way(a: &[C], b: &[C]) -> f64 {
        a.iter()
            .map(|&z| {
                if b.len() == 1 {
                    return (z - b[0]).norm();
                }
                b.windows(2).map(|w| segment_distance(z, w[0], w[1])).fold(f64::INFINITY, f64::min)
            })
            .fold(0.0, f64::max)
    }
    one_way(a, b).max(one_way(b, a))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exprlang::parse;
    use crate::field::FieldProfile;

    fn c(re: f64, im: f64) -> C {
        C::new(re, im)
    }

    fn nik() -> EffectivePotential {
        EffectivePotential::adiabatic(FieldProfile::nikitin(1.0, 2.0, 1.0).unwrap())
    }

    // q0 = s, from B = (0, 0, 2 sqrt(s)) with mu = 1
    fn linear() -> EffectivePotential {
        let f = FieldProfile::custom(
            [parse("0").unwrap(), parse("0").unwrap(), parse("2*sqrt(s)").unwrap()],
            None,
            1.0,
            vec![],
        )
        .unwrap();
        EffectivePotential::adiabatic(f)
    }

    #[test]
    fn nikitin_turning_points() {
        let tps = find_turning_points(&nik(), Rect::new(-2.0, 2.0, 0.0, 2.0)).unwrap();
        let h = 3f64.sqrt() / 2.0;
        let expect = [c(-0.5, h), c(0.0, 2f64.sqrt()), c(0.5, h)];
        assert_eq!(tps.len(), 3);
        for (t, e) in tps.iter().zip(expect) {
            assert!((t.location - e).norm() < 1e-12, "{}", t.location);
            assert_eq!(t.multiplicity, 1);
        }
        let low = find_turning_points(&nik(), Rect::new(-2.0, 2.0, -2.0, 0.0)).unwrap();
        for (t, e) in low.iter().zip([c(-0.5, -h), c(0.0, -(2f64.sqrt())), c(0.5, -h)]) {
            assert!((t.location - e).norm() < 1e-12);
        }
    }

    #[test]
    fn berman_lorentzian_has_four_turning_points() {
        let f = FieldProfile::berman(
            parse("1/(1+s^2)").unwrap(),
            1.0,
            1.0,
            vec![Pole { at: c(0.0, 1.0), order: 2 }, Pole { at: c(0.0, -1.0), order: 2 }],
        )
        .unwrap();
        let tps = find_turning_points(&EffectivePotential::adiabatic(f), Rect::square(3.0)).unwrap();
        assert_eq!(tps.len(), 4);
        for t in &tps {
            let s2 = t.location * t.location;
            assert!((s2 - c(-1.0, -1.0)).norm() < 1e-10 || (s2 - c(-1.0, 1.0)).norm() < 1e-10);
        }
    }

    #[test]
    fn local_fan_is_two_thirds_pi() {
        for t in find_turning_points(&nik(), Rect::square(3.0)).unwrap() {
            let d = t.directions;
            for k in 0..3 {
                let ang = (d[(k + 1) % 3] / d[k]).arg().rem_euclid(2.0 * PI);
                assert!((ang - 2.0 * PI / 3.0).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn linear_model_rays() {
        let ep = linear();
        let tp = TurningPoint::new(c(0.0, 0.0), 0.0, c(1.0, 0.0));
        let bbox = Rect::square(2.0);
        for (kind, offset) in [(LineKind::Stokes, 0.0), (LineKind::AntiStokes, PI / 3.0)] {
            for k in 0..3 {
                let l = trace_stokes_line(&ep, &tp, k, kind, &[], bbox, TraceOptions::default()).unwrap();
                let want = C::from_polar(1.0, offset + 2.0 * PI * k as f64 / 3.0);
                // skip the 2*sqrt(s) branch cut on the negative axis
                if (want.arg().abs() - PI).abs() < 1e-9 {
                    continue;
                }
                for z in &l.points[1..] {
                    let off = (z * want.conj()).im.abs();
                    assert!(off < 1e-8, "{kind:?} {k}: {z}");
                }
                assert!(matches!(l.terminus, Terminus::Infinity { .. }));
            }
        }
    }

    #[test]
    fn constant_potential_is_rejected() {
        let f = FieldProfile::berman(parse("1").unwrap(), 1.0, 1.0, vec![]).unwrap();
        let ep = EffectivePotential::adiabatic(f);
        let tp = TurningPoint::new(c(0.0, 0.0), 0.0, c(1.0, 0.0));
        let r = trace_stokes_line(&ep, &tp, 0, LineKind::Stokes, &[], Rect::square(2.0), TraceOptions::default());
        assert!(matches!(r, Err(StokesError::NotATurningPoint(..))));
        let g = build_graph(&ep, &GraphOptions::default()).unwrap();
        assert!(g.turning_points.is_empty() && g.lines.is_empty());
        assert_eq!(g.sectors.len(), 1);
        assert!(matches!(identify_ned_chain(&g), Err(StokesError::NotNed(_))));
    }

    #[test]
    fn nikitin_main_line_joins_chain_pair() {
        let ep = nik();
        let h = 3f64.sqrt() / 2.0;
        let tps = find_turning_points(&ep, Rect::square(3.0)).unwrap();
        let s2 = tps.iter().find(|t| (t.location - c(0.5, h)).norm() < 1e-9).unwrap();
        let others: Vec<C> = tps.iter().map(|t| t.location).filter(|&z| z != s2.location).collect();
        let hits: Vec<StokesLine> = (0..3)
            .map(|k| {
                trace_stokes_line(&ep, s2, k, LineKind::Stokes, &others, Rect::square(9.0), TraceOptions::default())
                    .unwrap()
            })
            .filter(|l| matches!(l.terminus, Terminus::TurningPoint { at } if (at - c(-0.5, h)).norm() < 1e-9))
            .collect();
        assert_eq!(hits.len(), 1);
        let l = &hits[0];
        // Im W stays on the line
        for w in &l.w {
            assert!(w.im.abs() < 1e-6);
        }
        // cross-check W by an independent quadrature along the traced polyline
        let path =
            ContourPath::polyline(l.points.clone()).with_tags(EndpointTag::TurningPoint, EndpointTag::TurningPoint);
        let r0 = {
            let z = l.points[2];
            let r = ep.eval_q0(z).unwrap().sqrt();
            if (r * (z - l.points[0])).re >= 0.0 {
                r
            } else {
                -r
            }
        };
        let v = action_integral(&SqrtOf(|z| ep.eval_q0(z).map_err(Into::into)), &path, Anchor::Root(r0)).unwrap();
        assert!(v.value.im.abs() < 1e-6, "{}", v.value);
        assert!((v.value.re.abs() - 0.5 * 3.5297993309554477).abs() < 1e-6);
    }

    #[test]
    fn nikitin_graph_and_chain() {
        let g = build_graph(&nik(), &GraphOptions::default()).unwrap();
        assert_eq!(g.turning_points.len(), 6);
        assert_eq!(g.poles.len(), 2);
        assert!(g.strip_is_regular());
        let chain = g.chain.clone().unwrap();
        let h = 3f64.sqrt() / 2.0;
        assert_eq!(chain.n(), 2);
        assert!((chain.conj_first - c(-0.5, -h)).norm() < 1e-10);
        assert!((chain.upper[0] - c(-0.5, h)).norm() < 1e-10);
        assert!((chain.upper[1] - c(0.5, h)).norm() < 1e-10);
        assert!(!g.strip_boundary.is_empty());
        // every pole sits in a sector of its own, away from the strip
        for p in &g.poles {
            assert_ne!(g.sector_at(p.at + c(0.0, 0.01)), g.central_sector);
        }
    }

    #[test]
    fn unsymmetrized_graph_is_conjugation_symmetric() {
        let opts = GraphOptions { symmetrize: false, ..GraphOptions::default() };
        let g = build_graph(&nik(), &opts).unwrap();
        let upper: Vec<&StokesLine> = g.lines.iter().filter(|l| l.origin.im > 0.0).collect();
        let lower: Vec<&StokesLine> = g.lines.iter().filter(|l| l.origin.im < 0.0).collect();
        assert_eq!(upper.len(), lower.len());
        for l in &lower {
            let best = upper
                .iter()
                .map(|u| hausdorff(&l.points, &u.points.iter().map(|z| z.conj()).collect::<Vec<_>>()))
                .fold(f64::INFINITY, f64::min);
            assert!(best < 1e-6, "{best}");
        }
    }

    #[test]
    fn halving_the_step_keeps_the_line() {
        let ep = nik();
        let tps = find_turning_points(&ep, Rect::square(3.0)).unwrap();
        let locs: Vec<C> = tps.iter().map(|t| t.location).collect();
        let tp = &tps[0];
        let others: Vec<C> = locs.iter().copied().filter(|&z| z != tp.location).collect();
        let o1 = TraceOptions::default();
        let o2 = TraceOptions { h_max: 0.5 * o1.h_max, h_rel: 0.5 * o1.h_rel, ..o1 };
        for k in 0..3 {
            let a = trace_stokes_line(&ep, tp, k, LineKind::Stokes, &others, Rect::square(6.0), o1).unwrap();
            let b = trace_stokes_line(&ep, tp, k, LineKind::Stokes, &others, Rect::square(6.0), o2).unwrap();
            // coarse vertices lie on the fine curve up to the fine chord sag
            // (curvature * h^2 / 8, about 4e-5 here)
            let d = a
                .points
                .iter()
                .map(|&z| b.points.windows(2).map(|w| segment_distance(z, w[0], w[1])).fold(f64::INFINITY, f64::min))
                .fold(0.0, f64::max);
            assert!(d < 1e-4, "{k}: {d}");
            assert_eq!(std::mem::discriminant(&a.terminus), std::mem::discriminant(&b.terminus));
        }
    }

    #[test]
    fn tanh_profile_has_single_pair_chain() {
        let q = PI / 2.0;
        let poles = vec![
            Pole { at: c(0.0, q), order: 2 },
            Pole { at: c(0.0, -q), order: 2 },
            Pole { at: c(0.0, 3.0 * q), order: 2 },
            Pole { at: c(0.0, -3.0 * q), order: 2 },
        ];
        let f = FieldProfile::custom(
            [parse("1").unwrap(), parse("0").unwrap(), parse("tanh(s)").unwrap()],
            None,
            1.0,
            poles,
        )
        .unwrap();
        let ep = EffectivePotential::adiabatic(f);
        let opts =
            GraphOptions { search: Rect::new(-2.0, 2.0, -2.0, 2.0), half_width: Some(2.0), ..GraphOptions::default() };
        let g = build_graph(&ep, &opts).unwrap();
        let chain = identify_ned_chain(&g).unwrap();
        assert_eq!(chain.n(), 1);
        assert!((chain.upper[0] - c(0.0, PI / 4.0)).norm() < 1e-10);
    }
}
