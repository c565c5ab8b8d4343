//! Magnetic field profiles B(s) in rescaled time s = t/T.
//!
//! Every component is an [`Expr`]; the builtin models are closed forms written
//! in the same language, so derivatives always come from symbolic
//! differentiation. The magnitude `B = sqrt(B.B)` is double valued off the
//! real axis and is tracked by continuity from the real axis, where it is
//! positive.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::Serialize;
use thiserror::Error;

use crate::exprlang::{parse, EvalError, Expr};
use crate::jet::Jet;
use crate::roots::{find_zeros, Pole, Rect};

type C = Complex64;

/// Highest component derivative kept; enough for second derivatives of q2.
pub const DERIV_ORDER: usize = 4;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FieldError {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("pole of the field at s = {0}")]
    Pole(C),
    #[error("B^2 vanishes at s = {0}; the branch of B is ambiguous there")]
    BranchAmbiguity(C),
    #[error("F(s) has a vanishing denominator at s = {0}")]
    DenominatorZero(C),
    #[error("expression error: {0}")]
    Eval(#[from] EvalError),
    #[error("expression parse error: {0}")]
    Parse(String),
}

#[derive(Debug, Clone, PartialEq)]
pub enum FieldModel {
    /// B(s) = ((b^2+s^2)^(-3/2), 0, 1) * delta_eps / mu.
    Nikitin { b: f64, delta_eps: f64 },
    /// B(s) = (f(s), 0, omega/mu).
    Berman { f: Expr, omega: f64 },
    /// Three arbitrary components, optionally with a separate adiabatic-limit field.
    Custom,
}

#[derive(Debug, Clone)]
struct Component {
    derivs: Vec<Expr>,
}

impl Component {
    fn new(e: Expr) -> Component {
        let mut derivs = vec![e];
        for k in 0..DERIV_ORDER {
            let d = derivs[k].derivative();
            derivs.push(d);
        }
        Component { derivs }
    }

    fn jet(&self, s: C, len: usize) -> Result<Jet, EvalError> {
        let mut vals = Vec::with_capacity(len);
        for e in &self.derivs[..len] {
            vals.push(e.eval(s)?);
        }
        Ok(Jet::from_derivatives(&vals))
    }
}

/// A field profile: components, gyromagnetic constant and adiabatic parameter.
#[derive(Debug, Clone)]
pub struct FieldProfile {
    pub model: FieldModel,
    pub mu: f64,
    pub t: f64,
    exprs: [Expr; 3],
    comps: [Component; 3],
    comps0: Option<[Component; 3]>,
    rotation: [[f64; 3]; 3],
    planar: bool,
    /// Poles of B^2 with their orders.
    pub poles: Vec<Pole>,
    /// Poles that receive the 1/4 (s-z)^-2 correction in the Langer-modified potential.
    pub langer_poles: Vec<C>,
}

/// Everything about the field at one point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FieldSample {
    pub s: C,
    pub b: [C; 3],
    /// Magnitude, on the branch selected by continuity.
    pub bmag: C,
    pub e_plus: C,
    pub e_minus: C,
    pub theta: C,
    pub phi: C,
    pub db: [C; 3],
    pub theta_dot: C,
    pub phi_dot: C,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FMapValue {
    pub s: C,
    pub f: C,
}

/// Continue `sqrt(r(.))` from `root` at `from` to `to` along a straight line,
/// always taking the root nearest the previous one.
pub fn continue_sqrt(r: &impl Fn(C) -> Result<C, FieldError>, from: C, to: C, root: C) -> Result<C, FieldError> {
    let mut reference = root;
    let mut h: f64 = 1.0 / 16.0;
    let mut t = 0.0;
    while t < 1.0 {
        let step = h.min(1.0 - t);
        let zn = from + (to - from) * (t + step);
        let v = r(zn)?;
        let ratio = v / (reference * reference);
        if ratio.arg().abs() > 0.75 * PI || ratio.norm() > 4.0 || ratio.norm() < 0.25 {
            h *= 0.5;
            if h < 1e-14 {
                return Err(FieldError::BranchAmbiguity(zn));
            }
            continue;
        }
        reference *= ratio.sqrt();
        t += step;
        h = (h * 1.5).min(1.0 / 16.0);
    }
    Ok(reference)
}

fn rotation_to_z(v: [f64; 3]) -> [[f64; 3]; 3] {
    let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
    let u = [v[0] / n, v[1] / n, v[2] / n];
    if u[2] > 1.0 - 1e-15 {
        return [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
    }
    if u[2] < -1.0 + 1e-15 {
        // half turn about x
        return [[1.0, 0.0, 0.0], [0.0, -1.0, 0.0], [0.0, 0.0, -1.0]];
    }
    // Rodrigues rotation taking u to z about axis k = u x z / |u x z|
    let kx = u[1];
    let ky = -u[0];
    let sin = (kx * kx + ky * ky).sqrt();
    let cos = u[2];
    let (kx, ky) = (kx / sin, ky / sin);
    let k = [kx, ky, 0.0];
    let mut r = [[0.0; 3]; 3];
    let kmat = [[0.0, -k[2], k[1]], [k[2], 0.0, -k[0]], [-k[1], k[0], 0.0]];
    for i in 0..3 {
        for j in 0..3 {
            let mut k2 = 0.0;
            for m in 0..3 {
                k2 += kmat[i][m] * kmat[m][j];
            }
            r[i][j] = if i == j { 1.0 } else { 0.0 } + sin * kmat[i][j] + (1.0 - cos) * k2;
        }
    }
    r
}

fn rotate(r: &[[f64; 3]; 3], v: [Jet; 3]) -> [Jet; 3] {
    let mut out = v;
    for i in 0..3 {
        let mut acc = v[0] * r[i][0];
        acc = acc + v[1] * r[i][1];
        acc = acc + v[2] * r[i][2];
        out[i] = acc;
    }
    out
}

fn is_identity(r: &[[f64; 3]; 3]) -> bool {
    (0..3).all(|i| (0..3).all(|j| r[i][j] == if i == j { 1.0 } else { 0.0 }))
}

fn ep(e: Result<Expr, crate::exprlang::ParseError>) -> Result<Expr, FieldError> {
    e.map_err(|e| FieldError::Parse(e.to_string()))
}

impl FieldProfile {
    /// Nikitin's atom-atom collision model.
    pub fn nikitin(b: f64, delta_eps: f64, mu: f64) -> Result<FieldProfile, FieldError> {
        if !(b > 0.0 && b.is_finite()) {
            return Err(FieldError::InvalidParameter(format!("b must be > 0, got {b}")));
        }
        if !(delta_eps > 0.0 && delta_eps.is_finite()) {
            return Err(FieldError::InvalidParameter(format!("delta_eps must be > 0, got {delta_eps}")));
        }
        check_mu(mu)?;
        let k = delta_eps / mu;
        let bx = ep(parse(&format!("{k}*({}+s^2)^(-3/2)", b * b)))?;
        let bz = Expr::Const(k);
        let mut p =
            FieldProfile::build(FieldModel::Nikitin { b, delta_eps }, mu, [bx, Expr::Const(0.0), bz], None, vec![])?;
        // B^2 = k^2 (1 + (b^2+s^2)^-3) has third-order poles at +-ib
        let poles = [C::new(0.0, b), C::new(0.0, -b)];
        p.poles = poles.iter().map(|&at| Pole { at, order: 3 }).collect();
        p.langer_poles = poles.to_vec();
        Ok(p)
    }

    /// Berman-class field (f(s), 0, omega/mu).
    pub fn berman(f: Expr, omega: f64, mu: f64, poles: Vec<Pole>) -> Result<FieldProfile, FieldError> {
        if !omega.is_finite() || omega == 0.0 {
            return Err(FieldError::InvalidParameter(format!("omega must be nonzero, got {omega}")));
        }
        check_mu(mu)?;
        let bz = Expr::Const(omega / mu);
        let bz = if omega < 0.0 { Expr::Neg(Box::new(Expr::Const(-omega / mu))) } else { bz };
        let langer = poles.iter().filter(|p| p.order <= 2).map(|p| p.at).collect();
        let mut p = FieldProfile::build(
            FieldModel::Berman { f: f.clone(), omega },
            mu,
            [f, Expr::Const(0.0), bz],
            None,
            poles,
        )?;
        p.langer_poles = langer;
        Ok(p)
    }

    /// Arbitrary components, with an optional adiabatic-limit field `b0`
    /// (defaults to the field itself).
    pub fn custom(
        comps: [Expr; 3],
        b0: Option<[Expr; 3]>,
        mu: f64,
        poles: Vec<Pole>,
    ) -> Result<FieldProfile, FieldError> {
        check_mu(mu)?;
        let langer = poles.iter().filter(|p| p.order <= 2).map(|p| p.at).collect();
        let mut p = FieldProfile::build(FieldModel::Custom, mu, comps, b0, poles)?;
        p.langer_poles = langer;
        Ok(p)
    }

    fn build(
        model: FieldModel,
        mu: f64,
        exprs: [Expr; 3],
        b0: Option<[Expr; 3]>,
        poles: Vec<Pole>,
    ) -> Result<FieldProfile, FieldError> {
        let planar = matches!(exprs[1], Expr::Const(v) if v == 0.0)
            && b0.as_ref().is_none_or(|b| matches!(b[1], Expr::Const(v) if v == 0.0));
        let comps = exprs.clone().map(Component::new);
        let comps0 = b0.map(|b| b.map(Component::new));
        let mut p = FieldProfile {
            model,
            mu,
            t: 1.0,
            exprs,
            comps,
            comps0,
            rotation: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
            planar,
            poles,
            langer_poles: vec![],
        };
        // normalisation: rotate so that B(+inf) points along +z
        if let Some(lim) = p.limit(1.0) {
            let r = rotation_to_z(lim);
            if !is_identity(&r) {
                p.rotation = r;
                // a rotation mixing in y makes the field non-planar
                p.planar = p.planar && r[1][0] == 0.0 && r[1][2] == 0.0;
            }
        }
        Ok(p)
    }

    pub fn with_t(mut self, t: f64) -> FieldProfile {
        self.t = t;
        self
    }

    /// Source expressions of the components before normalisation.
    pub fn expressions(&self) -> &[Expr; 3] {
        &self.exprs
    }

    pub fn rotation(&self) -> [[f64; 3]; 3] {
        self.rotation
    }

    /// True when B_y vanishes identically (after normalisation).
    pub fn is_planar(&self) -> bool {
        self.planar
    }

    pub fn has_separate_b0(&self) -> bool {
        self.comps0.is_some()
    }

    // Estimate of the real field vector as s -> dir * infinity.
    fn limit(&self, dir: f64) -> Option<[f64; 3]> {
        let at = |s: f64| -> Option<[f64; 3]> {
            let mut v = [0.0; 3];
            for (i, c) in self.comps.iter().enumerate() {
                let z = c.derivs[0].eval(C::new(s, 0.0)).ok()?;
                if !z.re.is_finite() {
                    return None;
                }
                v[i] = z.re;
            }
            Some(v)
        };
        let a = at(dir * 1e4)?;
        let b = at(dir * 1e5)?;
        let na = (a[0] * a[0] + a[1] * a[1] + a[2] * a[2]).sqrt();
        let diff = ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt();
        if na == 0.0 || diff > 1e-3 * (1.0 + na) {
            return None;
        }
        Some(b)
    }

    /// Component jets of B (after normalisation) at `s`, with `len` terms.
    pub fn b_jets(&self, s: C, len: usize) -> Result<[Jet; 3], FieldError> {
        self.jets_of(&self.comps, s, len)
    }

    /// Component jets of the adiabatic-limit field B0.
    pub fn b0_jets(&self, s: C, len: usize) -> Result<[Jet; 3], FieldError> {
        match &self.comps0 {
            Some(c) => self.jets_of(c, s, len),
            None => self.b_jets(s, len),
        }
    }

    fn jets_of(&self, comps: &[Component; 3], s: C, len: usize) -> Result<[Jet; 3], FieldError> {
        let mut out = [Jet::constant(C::new(0.0, 0.0), len); 3];
        for (i, c) in comps.iter().enumerate() {
            out[i] = c.jet(s, len).map_err(|e| match e {
                EvalError::Pole(_) => FieldError::Pole(s),
                e => FieldError::Eval(e),
            })?;
            if !out[i].value().is_finite() {
                return Err(FieldError::Pole(s));
            }
        }
        if is_identity(&self.rotation) {
            Ok(out)
        } else {
            Ok(rotate(&self.rotation, out))
        }
    }

    /// B.B at `s` (single valued).
    pub fn b_squared(&self, s: C) -> Result<C, FieldError> {
        let b = self.b_jets(s, 1)?;
        Ok(b.iter().map(|j| j.value() * j.value()).sum())
    }

    /// B0.B0 at `s`.
    pub fn b0_squared(&self, s: C) -> Result<C, FieldError> {
        let b = self.b0_jets(s, 1)?;
        Ok(b.iter().map(|j| j.value() * j.value()).sum())
    }

    /// Physical-sheet magnitude of B0: positive on the real axis and continued
    /// vertically from there.
    pub fn b0_physical(&self, s: C) -> Result<C, FieldError> {
        physical_root(&|z| self.b0_squared(z), s)
    }

    /// Physical-sheet magnitude of B.
    pub fn b_physical(&self, s: C) -> Result<C, FieldError> {
        physical_root(&|z| self.b_squared(z), s)
    }

    /// Full sample at `s`. `hint` is a nearby value of B on the wanted sheet;
    /// without it the physical sheet is used.
    pub fn eval_field(&self, s: C, hint: Option<C>) -> Result<FieldSample, FieldError> {
        let j = self.b_jets(s, 2)?;
        sample_from_jets(s, &j, self.mu, self.planar, hint, |z| self.b_physical(z))
    }

    /// Sample of the adiabatic-limit field B0.
    pub fn eval_field0(&self, s: C, hint: Option<C>) -> Result<FieldSample, FieldError> {
        let j = self.b0_jets(s, 2)?;
        sample_from_jets(s, &j, self.mu, self.planar, hint, |z| self.b0_physical(z))
    }

    /// F(s) = (B0 - B0z)/(B0 + B0z), written as (B0x^2+B0y^2)/(B0+B0z)^2 to
    /// avoid cancellation. `b0` selects the sheet; `None` means physical.
    pub fn eval_f(&self, s: C, b0: Option<C>) -> Result<FMapValue, FieldError> {
        let j = self.b0_jets(s, 1)?;
        let (x, y, z) = (j[0].value(), j[1].value(), j[2].value());
        let b2 = x * x + y * y + z * z;
        let b = match b0 {
            Some(h) => pick_root(b2, h),
            None => self.b0_physical(s)?,
        };
        let den = b + z;
        let scale = b.norm().max(z.norm()).max(1e-300);
        if den.norm() <= 1e-14 * scale {
            return Err(FieldError::DenominatorZero(s));
        }
        Ok(FMapValue { s, f: (x * x + y * y) / (den * den) })
    }

    /// Check assumptions on the field over real probes in `[-range, range]`.
    pub fn validate_assumptions(&self, probe: &ProbeGrid) -> ValidationReport {
        validate(self, probe)
    }
}

fn check_mu(mu: f64) -> Result<(), FieldError> {
    if !(mu > 0.0 && mu.is_finite()) {
        return Err(FieldError::InvalidParameter(format!("mu must be > 0, got {mu}")));
    }
    Ok(())
}

fn pick_root(v: C, hint: C) -> C {
    let r = v.sqrt();
    if (r - hint).norm() <= (r + hint).norm() {
        r
    } else {
        -r
    }
}

/// Root of `r` on the sheet with positive real part on the real axis, found
/// by continuing vertically from `Re s`.
pub fn physical_root(r: &impl Fn(C) -> Result<C, FieldError>, s: C) -> Result<C, FieldError> {
    let base = C::new(s.re, 0.0);
    let v0 = r(base)?;
    // principal root: positive for positive reals, Re > 0 otherwise
    let root0 = v0.sqrt();
    if s.im == 0.0 {
        let v = r(s)?;
        return Ok(pick_root(v, root0));
    }
    continue_sqrt(r, base, s, root0)
}

fn sample_from_jets(
    s: C,
    j: &[Jet; 3],
    mu: f64,
    planar: bool,
    hint: Option<C>,
    physical: impl Fn(C) -> Result<C, FieldError>,
) -> Result<FieldSample, FieldError> {
    let (bx, by, bz) = (j[0].value(), j[1].value(), j[2].value());
    let (dbx, dby, dbz) = (j[0].deriv(1), j[1].deriv(1), j[2].deriv(1));
    let b2 = bx * bx + by * by + bz * bz;
    let scale = bx.norm_sqr() + by.norm_sqr() + bz.norm_sqr();
    if b2.norm() <= 1e-12 * scale.max(1e-300) {
        return Err(FieldError::BranchAmbiguity(s));
    }
    let b = match hint {
        Some(h) => pick_root(b2, h),
        None => physical(s)?,
    };
    let i = C::new(0.0, 1.0);
    // rho = B sin(Theta); for planar fields take rho = Bx (phi = 0) so that
    // every angle stays analytic.
    let rho = if planar { bx } else { (bx * bx + by * by).sqrt() };
    let theta = -i * ((bz + i * rho) / b).ln();
    let (phi, phi_dot) = if planar {
        (C::new(0.0, 0.0), C::new(0.0, 0.0))
    } else {
        let rho2 = bx * bx + by * by;
        let phi = if rho2.norm() == 0.0 { C::new(0.0, 0.0) } else { -i * ((bx + i * by) / rho).ln() };
        let phi_dot = if rho2.norm() == 0.0 { C::new(0.0, 0.0) } else { (bx * dby - by * dbx) / rho2 };
        (phi, phi_dot)
    };
    let theta_dot = if planar {
        (bz * dbx - bx * dbz) / b2
    } else {
        let rho2 = bx * bx + by * by;
        if rho2.norm() == 0.0 {
            C::new(0.0, 0.0)
        } else {
            (bz * (bx * dbx + by * dby) - rho2 * dbz) / (b2 * rho)
        }
    };
    Ok(FieldSample {
        s,
        b: [bx, by, bz],
        bmag: b,
        e_plus: 0.5 * mu * b,
        e_minus: -0.5 * mu * b,
        theta,
        phi,
        db: [dbx, dby, dbz],
        theta_dot,
        phi_dot,
    })
}

// ---------------------------------------------------------------- validation

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProbeGrid {
    /// Half-width of the real-axis probe interval.
    pub range: f64,
    pub points: usize,
    /// Box half-size used to look for complex roots of B0^2.
    pub root_box: f64,
    /// Lower bound demanded of |B| on the real axis, relative to max |B|.
    pub eps: f64,
}

impl Default for ProbeGrid {
    fn default() -> Self {
        ProbeGrid { range: 50.0, points: 2001, root_box: 4.0, eps: 1e-8 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationReport {
    pub checks: Vec<Check>,
}

impl ValidationReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn get(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn warnings(&self) -> Vec<String> {
        self.checks.iter().filter(|c| !c.passed).map(|c| format!("{}: {}", c.name, c.detail)).collect()
    }
}

pub const CHECK_REAL: &str = "real_on_axis";
pub const CHECK_NONVANISHING: &str = "nonvanishing";
pub const CHECK_LIMITS: &str = "finite_limits";
pub const CHECK_SIMPLE_ROOTS: &str = "simple_roots";
pub const CHECK_REGULAR_AT_ROOTS: &str = "regular_at_roots";

fn validate(p: &FieldProfile, g: &ProbeGrid) -> ValidationReport {
    let mut checks = Vec::new();
    let n = g.points.max(2);
    let mut worst_imag: f64 = 0.0;
    let mut min_b = f64::INFINITY;
    let mut max_b: f64 = 0.0;
    let mut eval_failures = 0usize;
    for k in 0..n {
        let s = -g.range + 2.0 * g.range * k as f64 / (n - 1) as f64;
        match p.b_jets(C::new(s, 0.0), 1) {
            Ok(j) => {
                let mut m2 = 0.0;
                for c in &j {
                    let v = c.value();
                    worst_imag = worst_imag.max(v.im.abs() / (1.0 + v.re.abs()));
                    m2 += v.re * v.re;
                }
                min_b = min_b.min(m2.sqrt());
                max_b = max_b.max(m2.sqrt());
            }
            Err(_) => eval_failures += 1,
        }
    }
    checks.push(Check {
        name: CHECK_REAL,
        passed: worst_imag <= 1e-12 && eval_failures == 0,
        detail: format!("max relative imaginary part {worst_imag:.3e}, {eval_failures} failed evaluations"),
    });
    checks.push(Check {
        name: CHECK_NONVANISHING,
        passed: eval_failures == 0 && min_b >= g.eps * max_b.max(1e-300) && min_b > 0.0,
        detail: format!("min |B| = {min_b:.3e}, max |B| = {max_b:.3e}"),
    });
    let lim_minus = p.limit(-1.0);
    let lim_plus = p.limit(1.0);
    let nonzero = |v: &Option<[f64; 3]>| v.is_some_and(|v| v.iter().any(|x| *x != 0.0));
    checks.push(Check {
        name: CHECK_LIMITS,
        passed: nonzero(&lim_minus) && nonzero(&lim_plus),
        detail: format!("B(-inf) = {lim_minus:?}, B(+inf) = {lim_plus:?}"),
    });

    let f = |z: C| -> Option<(C, C)> {
        let j = p.b0_jets(z, 2).ok()?;
        let v: C = j.iter().map(|c| c.value() * c.value()).sum();
        let d: C = j.iter().map(|c| 2.0 * c.value() * c.deriv(1)).sum();
        Some((v, d))
    };
    let rect = Rect::square(g.root_box);
    match find_zeros(&f, &p.poles, rect) {
        Ok(zeros) => {
            checks.push(Check {
                name: CHECK_SIMPLE_ROOTS,
                passed: true,
                detail: format!("{} simple roots of B0^2 in the probe box", zeros.len()),
            });
            let mut bad = Vec::new();
            for z in &zeros {
                match p.b0_jets(z.at, 1) {
                    Ok(j) => {
                        let bz = j[2].value();
                        let rho2 = j[0].value() * j[0].value() + j[1].value() * j[1].value();
                        if bz.norm() < 1e-10 || rho2.norm() < 1e-10 {
                            bad.push(z.at);
                        }
                    }
                    Err(_) => bad.push(z.at),
                }
            }
            checks.push(Check {
                name: CHECK_REGULAR_AT_ROOTS,
                passed: bad.is_empty(),
                detail: if bad.is_empty() {
                    "components regular and nonvanishing at all roots".into()
                } else {
                    format!("components vanish or are singular at {bad:?}")
                },
            });
        }
        Err(e) => {
            checks.push(Check { name: CHECK_SIMPLE_ROOTS, passed: false, detail: e.to_string() });
            checks.push(Check { name: CHECK_REGULAR_AT_ROOTS, passed: false, detail: "roots not available".into() });
        }
    }
    ValidationReport { checks }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn nik() -> FieldProfile {
        FieldProfile::nikitin(1.0, 2.0, 1.0).unwrap()
    }

    #[test]
    fn nikitin_reference_values() {
        let p = nik();
        let f = p.eval_field(C::new(0.0, 0.0), None).unwrap();
        assert!((f.b[0] - C::new(2.0, 0.0)).norm() < 1e-15);
        assert!((f.b[2] - C::new(2.0, 0.0)).norm() < 1e-15);
        assert!((p.mu * f.bmag - C::new(2.0 * 2f64.sqrt(), 0.0)).norm() < 1e-14);
        assert!((f.theta - C::new(PI / 4.0, 0.0)).norm() < 1e-15);
        assert_eq!(f.phi, C::new(0.0, 0.0));
        assert_eq!(f.phi_dot, C::new(0.0, 0.0));
        assert!(matches!(p.eval_field(C::new(0.0, 1.0), None), Err(FieldError::Pole(_))));
    }

    #[test]
    fn berman_with_zero_coupling_is_aligned() {
        let p = FieldProfile::berman(parse("0").unwrap(), 1.0, 1.0, vec![]).unwrap();
        for s in [C::new(0.0, 0.0), C::new(3.0, -1.0)] {
            let f = p.eval_field(s, None).unwrap();
            assert_eq!(f.b, [C::new(0.0, 0.0), C::new(0.0, 0.0), C::new(1.0, 0.0)]);
            assert_eq!(p.eval_f(s, None).unwrap().f, C::new(0.0, 0.0));
        }
    }

    #[test]
    fn parameter_ranges_are_enforced() {
        assert!(FieldProfile::nikitin(0.0, 2.0, 1.0).is_err());
        assert!(FieldProfile::nikitin(1.0, -2.0, 1.0).is_err());
        assert!(FieldProfile::nikitin(1.0, 2.0, 0.0).is_err());
    }

    #[test]
    fn f_map_reference_values() {
        let p = nik();
        let f = p.eval_f(C::new(0.0, 0.0), None).unwrap().f;
        let r2 = 2f64.sqrt();
        assert!((f.re - (r2 - 1.0) / (r2 + 1.0)).abs() < 1e-15);
        assert!((f.re - 0.171573).abs() < 1e-6);
        // turning point: B0 = 0 forces F = -1
        let s1 = C::new(0.5, 3f64.sqrt() / 2.0);
        let f = p.eval_f(s1, Some(C::new(0.0, 0.0))).unwrap().f;
        // B0 is only ~1e-8 at a double-precision turning point
        assert!((f + 1.0).norm() < 1e-6);
    }

    #[test]
    fn f_map_equals_tan_half_angle_squared_on_axis() {
        let p = nik();
        for s in [-3.0, -0.4, 0.0, 0.7, 5.0] {
            let z = C::new(s, 0.0);
            let fs = p.eval_field0(z, None).unwrap();
            let f = p.eval_f(z, None).unwrap().f;
            let t = (fs.theta / 2.0).tan();
            assert!((f - t * t).norm() < 1e-13);
        }
    }

    #[test]
    fn normalisation_rotates_limit_onto_z() {
        // constant field along x: rotated to z
        let p = FieldProfile::custom(
            [parse("1 + 0.5/(1+s^2)").unwrap(), parse("0").unwrap(), parse("1/(1+s^2)").unwrap()],
            None,
            1.0,
            vec![],
        )
        .unwrap();
        let far = p.b_jets(C::new(1e6, 0.0), 1).unwrap();
        assert!(far[0].value().norm() < 1e-9);
        assert!((far[2].value() - C::new(1.0, 0.0)).norm() < 1e-9);
        assert!(p.is_planar());
    }

    #[test]
    fn validation_of_reference_fields() {
        let r = nik().validate_assumptions(&ProbeGrid::default());
        assert!(r.all_passed(), "{:?}", r.warnings());

        let r = FieldProfile::berman(parse("s").unwrap(), 1.0, 1.0, vec![])
            .unwrap()
            .validate_assumptions(&ProbeGrid::default());
        assert!(!r.get(CHECK_LIMITS).unwrap().passed);

        let r = FieldProfile::custom(
            [parse("0").unwrap(), parse("0").unwrap(), parse("tanh(s)").unwrap()],
            None,
            1.0,
            vec![],
        )
        .unwrap()
        .validate_assumptions(&ProbeGrid::default());
        assert!(r.get(CHECK_REAL).unwrap().passed);
        assert!(!r.get(CHECK_NONVANISHING).unwrap().passed);
    }

    #[test]
    fn branch_continuation_follows_the_physical_sheet() {
        let p = nik();
        // just below the chain, B is near its real-axis value continued upward
        let z = C::new(0.0, 0.8);
        let b = p.b_physical(z).unwrap();
        let b2 = p.b_squared(z).unwrap();
        assert!((b * b - b2).norm() < 1e-12);
        assert!(b.re > 0.0);
        // continuity along a sampled path
        let mut prev = p.b_physical(C::new(-3.0, 0.5)).unwrap();
        for k in 1..=600 {
            let z = C::new(-3.0 + 6.0 * k as f64 / 600.0, 0.5);
            let f = p.eval_field(z, Some(prev)).unwrap();
            // a sheet flip would jump by 2|B| > 4
            assert!((f.bmag - prev).norm() < 0.5);
            prev = f.bmag;
        }
    }

    #[test]
    fn theta_dot_matches_finite_difference() {
        let p = FieldProfile::custom(
            [parse("1/(1+s^2)").unwrap(), parse("s/(2+s^2)").unwrap(), parse("1.5").unwrap()],
            None,
            1.0,
            vec![],
        )
        .unwrap();
        let s = C::new(0.3, 0.0);
        let h = 1e-6;
        let f = p.eval_field(s, None).unwrap();
        let fp = p.eval_field(s + h, None).unwrap();
        let fm = p.eval_field(s - h, None).unwrap();
        assert!((f.theta_dot - (fp.theta - fm.theta) / (2.0 * h)).norm() < 1e-7);
        assert!((f.phi_dot - (fp.phi - fm.phi) / (2.0 * h)).norm() < 1e-7);
    }

    proptest! {
        #[test]
        fn conjugation_symmetry(x in -3.0f64..3.0, y in 0.05f64..0.8) {
            let p = nik();
            let s = C::new(x, y);
            let a = p.eval_field(s, None).unwrap();
            let b = p.eval_field(s.conj(), None).unwrap();
            for k in 0..3 {
                prop_assert!((a.b[k].conj() - b.b[k]).norm() < 1e-12);
                prop_assert!((a.db[k].conj() - b.db[k]).norm() < 1e-12);
            }
            prop_assert!((a.bmag.conj() - b.bmag).norm() < 1e-12);
            prop_assert!((a.theta.conj() - b.theta).norm() < 1e-12);
            prop_assert!((a.theta_dot.conj() - b.theta_dot).norm() < 1e-12);
        }

        #[test]
        fn energies_split_by_mu_b(x in -5.0f64..5.0, y in -0.8f64..0.8) {
            let p = FieldProfile::nikitin(1.3, 0.7, 2.0).unwrap();
            let f = p.eval_field(C::new(x, y), None).unwrap();
            prop_assert_eq!(f.e_plus - f.e_minus, p.mu * f.bmag);
            let b2: C = f.b.iter().map(|v| v * v).sum();
            prop_assert!((f.bmag * f.bmag - b2).norm() <= 1e-13 * b2.norm().max(1.0));
            prop_assert!((f.theta.cos() - f.b[2] / f.bmag).norm() < 1e-12);
        }
    }
}
