//! Reference transition probabilities from direct integration of the
//! amplitude equations.
//!
//! Two interaction pictures are available. In the adiabatic one (a+, a-)
//!
//! ```text
//! a+' = d a+ + k+ e^{iX} a-,     a-' = k- e^{-iX} a+ - d a-,
//! X   = T int mu B,              d   = -i phi' (B - Bz) / 2B,
//! ```
//!
//! and in the diabatic one (a1, a2)
//!
//! ```text
//! a1' = -T c1~ e^{i Phi} a2,     a2' = T c1 e^{-i Phi} a1,
//! c1  = -(i/2) mu (Bx + i By),   c1~ = (i/2) mu (Bx - i By),   Phi = T int mu Bz.
//! ```
//!
//! Both phases come from a cumulative table with Hermite interpolation. The
//! adiabatic picture can also be integrated along Im s = -y0 below the real
//! axis. That keeps exponentially small probabilities (1e-60 and below)
//! resolvable, since the coupling there is no longer swamped by the O(1/T)
//! adiabatic dressing.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::field::{FieldError, FieldProfile};
use crate::potential::EffectivePotential;
use crate::quad;
use crate::roots::Rect;
use crate::stokes::find_turning_points;
use crate::transition::{Method, TransitionResult};

type C = Complex64;

const I: C = C::new(0.0, 1.0);

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OracleError {
    #[error("invalid settings: {0}")]
    Settings(String),
    #[error("step size collapsed at s = {0}")]
    StepCollapse(f64),
    #[error("step limit reached at s = {0}")]
    StepLimit(f64),
    #[error("norm drift {0:.3e} exceeds 1e-8")]
    NormDrift(f64),
    #[error("final mixing angle |Theta| = {0:.3e} exceeds 1e-3; raise s_max")]
    FinalAngle(f64),
    #[error("phase table did not converge")]
    PhaseTable,
    #[error("field error: {0}")]
    Field(#[from] FieldError),
    #[error("duplicate or unordered T values")]
    TList,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Representation {
    A12,
    #[default]
    APm,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PathMode {
    /// The real axis.
    #[default]
    RealAxis,
    /// The line Im s = -depth; `None` picks 3/4 of the distance to the
    /// nearest turning point or pole below the axis.
    Contour { depth: Option<f64> },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IntegrationSettings {
    pub s_min: f64,
    pub s_max: f64,
    pub rtol: f64,
    pub atol: f64,
    pub max_steps: usize,
    /// Phase table accuracy: the interpolation error stays below
    /// phase_tol * T * (s_max - s_min) radians.
    pub phase_tol: f64,
    pub path: PathMode,
}

impl Default for IntegrationSettings {
    fn default() -> Self {
        IntegrationSettings {
            s_min: -50.0,
            s_max: 50.0,
            rtol: 1e-10,
            atol: 1e-12,
            max_steps: 2_000_000,
            phase_tol: 1e-10,
            path: PathMode::RealAxis,
        }
    }
}

impl IntegrationSettings {
    pub fn validate(&self) -> Result<(), OracleError> {
        let bad = |m: &str| Err(OracleError::Settings(m.to_string()));
        if !(self.s_min < 0.0 && 0.0 < self.s_max) {
            return bad("need s_min < 0 < s_max");
        }
        if !(self.rtol > 0.0 && self.atol > 0.0 && self.phase_tol > 0.0) {
            return bad("tolerances must be positive");
        }
        if let PathMode::Contour { depth: Some(d) } = self.path {
            if !(d > 0.0 && d.is_finite()) {
                return bad("contour depth must be positive");
            }
        }
        Ok(())
    }

    pub fn contour() -> IntegrationSettings {
        IntegrationSettings { path: PathMode::Contour { depth: None }, ..IntegrationSettings::default() }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct OracleTrajectory {
    pub representation: Representation,
    pub t: f64,
    /// Imaginary offset of the path (0 on the real axis).
    pub depth: f64,
    pub s: Vec<f64>,
    pub amplitudes: Vec<[C; 2]>,
    /// Largest | |a|^2 + |b|^2 - 1 | seen (meaningful on the real axis).
    pub max_norm_drift: f64,
    pub steps: usize,
    pub rejected: usize,
}

impl OracleTrajectory {
    pub fn final_state(&self) -> [C; 2] {
        *self.amplitudes.last().expect("trajectory is never empty")
    }
}

// --------------------------------------------------------------- phase table

/// Cumulative integral of `rate` along x -> x - i depth, tabulated for cubic
/// Hermite interpolation.
struct PhaseTable {
    a: f64,
    h: f64,
    x: Vec<C>,
    dx: Vec<C>,
}

impl PhaseTable {
    fn build(
        rate: &(dyn Fn(f64) -> Result<C, OracleError> + Sync),
        a: f64,
        b: f64,
        origin_value: C,
        tol: f64,
    ) -> Result<PhaseTable, OracleError> {
        let mut n = 256usize;
        while n <= 1 << 22 {
            let h = (b - a) / n as f64;
            let cells: Result<Vec<(C, C)>, OracleError> = (0..n)
                .into_par_iter()
                .map(|j| {
                    let x0 = a + j as f64 * h;
                    let (whole, _) = quad::gk15(&mut |x| rate(x), x0, x0 + h)?;
                    let (half, _) = quad::gk15(&mut |x| rate(x), x0, x0 + 0.5 * h)?;
                    Ok((whole, half))
                })
                .collect();
            let cells = cells?;
            let mut x = Vec::with_capacity(n + 1);
            x.push(C::new(0.0, 0.0));
            for c in &cells {
                let last = *x.last().expect("non-empty");
                x.push(last + c.0);
            }
            let dx: Result<Vec<C>, OracleError> = (0..=n).into_par_iter().map(|j| rate(a + j as f64 * h)).collect();
            let mut t = PhaseTable { a, h, x, dx: dx? };
            let worst = cells
                .iter()
                .enumerate()
                .map(|(j, c)| (t.eval(a + (j as f64 + 0.5) * h) - (t.x[j] + c.1)).norm())
                .fold(0.0, f64::max);
            if worst <= tol {
                // shift so that the value at x = 0 is origin_value
                let off = origin_value - t.eval(0.0);
                t.x.iter_mut().for_each(|v| *v += off);
                return Ok(t);
            }
            n *= 2;
        }
        Err(OracleError::PhaseTable)
    }

    fn eval(&self, x: f64) -> C {
        let n = self.x.len() - 1;
        let u = ((x - self.a) / self.h).clamp(0.0, n as f64);
        let j = (u.floor() as usize).min(n - 1);
        let t = u - j as f64;
        let (t2, t3) = (t * t, t * t * t);
        let h00 = 2.0 * t3 - 3.0 * t2 + 1.0;
        let h10 = t3 - 2.0 * t2 + t;
        let h01 = -2.0 * t3 + 3.0 * t2;
        let h11 = t3 - t2;
        self.x[j] * h00 + self.dx[j] * (h10 * self.h) + self.x[j + 1] * h01 + self.dx[j + 1] * (h11 * self.h)
    }
}

// ------------------------------------------------------------------- DP5

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;
// fifth minus fourth order weights
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

type State = [C; 2];

fn axpy(y: &State, terms: &[(f64, &State)], h: f64) -> State {
    let mut out = *y;
    for (w, k) in terms {
        out[0] += k[0] * (w * h);
        out[1] += k[1] * (w * h);
    }
    out
}

struct Dp5Out {
    s: Vec<f64>,
    y: Vec<State>,
    steps: usize,
    rejected: usize,
}

/// Dormand-Prince 5(4) with per-component mixed error control. `abs_floor`
/// false makes the control purely relative per component (used off axis,
/// where amplitudes span hundreds of orders of magnitude).
fn dp5(
    f: &dyn Fn(f64, &State) -> State,
    a: f64,
    b: f64,
    y0: State,
    rtol: f64,
    atol: f64,
    max_steps: usize,
) -> Result<Dp5Out, OracleError> {
    let mut s = a;
    let mut y = y0;
    let mut h = 1e-3 * (b - a).abs().min(1.0);
    let mut k1 = f(s, &y);
    let mut out = Dp5Out { s: vec![s], y: vec![y], steps: 0, rejected: 0 };
    while s < b {
        if out.steps + out.rejected >= max_steps {
            return Err(OracleError::StepLimit(s));
        }
        if s + h > b {
            h = b - s;
        }
        let k2 = f(s + C2 * h, &axpy(&y, &[(A21, &k1)], h));
        let k3 = f(s + C3 * h, &axpy(&y, &[(A31, &k1), (A32, &k2)], h));
        let k4 = f(s + C4 * h, &axpy(&y, &[(A41, &k1), (A42, &k2), (A43, &k3)], h));
        let k5 = f(s + C5 * h, &axpy(&y, &[(A51, &k1), (A52, &k2), (A53, &k3), (A54, &k4)], h));
        let k6 = f(s + h, &axpy(&y, &[(A61, &k1), (A62, &k2), (A63, &k3), (A64, &k4), (A65, &k5)], h));
        let yn = axpy(&y, &[(B1, &k1), (B3, &k3), (B4, &k4), (B5, &k5), (B6, &k6)], h);
        let k7 = f(s + h, &yn);
        let mut err: f64 = 0.0;
        for i in 0..2 {
            let e = (k1[i] * E1 + k3[i] * E3 + k4[i] * E4 + k5[i] * E5 + k6[i] * E6 + k7[i] * E7) * h;
            let sc = atol + rtol * y[i].norm().max(yn[i].norm());
            err = err.max(e.norm() / sc);
        }
        if !err.is_finite() {
            err = 1e10;
        }
        if err <= 1.0 {
            s += h;
            y = yn;
            k1 = k7;
            out.s.push(s);
            out.y.push(y);
            out.steps += 1;
            let fac = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
            h *= fac;
        } else {
            out.rejected += 1;
            h *= (0.9 * err.powf(-0.2)).clamp(0.1, 0.9);
        }
        if h < 1e-14 * (b - a).abs() {
            return Err(OracleError::StepCollapse(s));
        }
    }
    Ok(out)
}

// ---------------------------------------------------------------- systems

fn pick(v: C, hint: C) -> C {
    let r = v.sqrt();
    if (r - hint).norm() <= (r + hint).norm() {
        r
    } else {
        -r
    }
}

struct Coeffs {
    b: C,
    d: C,
    kp: C,
    km: C,
}

// Coefficients of the adiabatic picture at s, with B nearest `hint`.
fn pm_coeffs(field: &FieldProfile, s: C, hint: C) -> Result<Coeffs, FieldError> {
    let j = field.b_jets(s, 2)?;
    let (bx, by, bz) = (j[0].value(), j[1].value(), j[2].value());
    let (dx, dy, dz) = (j[0].deriv(1), j[1].deriv(1), j[2].deriv(1));
    let b2 = bx * bx + by * by + bz * bz;
    let b = pick(b2, hint);
    if field.is_planar() {
        // rho = Bx, phi = 0
        let th = (bz * dx - bx * dz) / b2;
        return Ok(Coeffs { b, d: C::new(0.0, 0.0), kp: 0.5 * th, km: -0.5 * th });
    }
    let rho2 = bx * bx + by * by;
    if rho2.norm() == 0.0 {
        return Err(FieldError::BranchAmbiguity(s));
    }
    let phi_dot = (bx * dy - by * dx) / rho2;
    // Theta' e^{-+i phi} written through rho^2 only
    let core = (bz * (bx * dx + by * dy) - rho2 * dz) / (rho2 * b2);
    let th_em = (bx - I * by) * core;
    let th_ep = (bx + I * by) * core;
    Ok(Coeffs {
        b,
        d: -I * phi_dot * (b - bz) / (2.0 * b),
        kp: -(I * phi_dot * (bx - I * by) / (2.0 * b) - 0.5 * th_em),
        km: -(0.5 * th_ep + I * phi_dot * (bx + I * by) / (2.0 * b)),
    })
}

fn contour_depth(field: &FieldProfile, settings: &IntegrationSettings) -> Result<f64, OracleError> {
    match settings.path {
        PathMode::RealAxis => Ok(0.0),
        PathMode::Contour { depth: Some(d) } => Ok(d),
        PathMode::Contour { depth: None } => {
            let mut d: f64 = 2.0;
            let ep = EffectivePotential::adiabatic(field.clone());
            let rect = Rect::new(settings.s_min, settings.s_max, -2.0, -1e-3);
            // the field alone does not always allow a certified root count;
            // poles still bound the depth then
            if let Ok(tps) = find_turning_points(&ep, rect) {
                for t in tps {
                    d = d.min(-t.location.im);
                }
            }
            for p in &field.poles {
                if p.at.im < 0.0 {
                    d = d.min(-p.at.im);
                }
            }
            Ok(0.75 * d)
        }
    }
}

/// Integrate the amplitude equations across [s_min, s_max].
pub fn integrate_amplitude_system(
    field: &FieldProfile,
    t: f64,
    settings: &IntegrationSettings,
    rep: Representation,
) -> Result<OracleTrajectory, OracleError> {
    settings.validate()?;
    if !(t > 0.0 && t.is_finite()) {
        return Err(OracleError::Settings(format!("T must be positive, got {t}")));
    }
    match rep {
        Representation::APm => integrate_pm(field, t, settings),
        Representation::A12 => {
            if settings.path != PathMode::RealAxis {
                return Err(OracleError::Settings("the a12 picture is integrated on the real axis only".into()));
            }
            integrate_12(field, t, settings)
        }
    }
}

fn integrate_pm(field: &FieldProfile, t: f64, st: &IntegrationSettings) -> Result<OracleTrajectory, OracleError> {
    let y0 = contour_depth(field, st)?;
    let mu = field.mu;
    let at = |x: f64| C::new(x, -y0);
    // B on the line, continued from the physical sheet at -i y0
    let b_origin = field.b_physical(at(0.0))?;
    let b_line = |x: f64| -> Result<C, OracleError> {
        // walk from the origin in short steps so the branch is unambiguous
        let n = (x.abs() / 0.05).ceil().max(1.0) as usize;
        let mut b = b_origin;
        for k in 1..=n {
            b = pick(field.b_squared(at(x * k as f64 / n as f64))?, b);
        }
        Ok(b)
    };
    // nodes of B along the line for branch hints
    let hint_step = 0.05;
    let nh = ((st.s_max - st.s_min) / hint_step).ceil() as usize;
    let mut hints = vec![C::new(0.0, 0.0); nh + 1];
    {
        let j0 = ((-st.s_min) / hint_step).round() as usize;
        let x_of = |j: usize| st.s_min + (st.s_max - st.s_min) * j as f64 / nh as f64;
        hints[j0] = b_line(x_of(j0))?;
        for j in (j0 + 1)..=nh {
            hints[j] = pick(field.b_squared(at(x_of(j)))?, hints[j - 1]);
        }
        for j in (0..j0).rev() {
            hints[j] = pick(field.b_squared(at(x_of(j)))?, hints[j + 1]);
        }
    }
    let hint_at = |x: f64| {
        let u = (x - st.s_min) / (st.s_max - st.s_min) * nh as f64;
        hints[(u.round().max(0.0) as usize).min(nh)]
    };
    let b_at = |x: f64| -> Result<C, OracleError> { Ok(pick(field.b_squared(at(x))?, hint_at(x))) };
    // X(-i y0) from the real axis down the imaginary axis
    let x_origin = if y0 > 0.0 {
        let r = quad::integrate(
            |u: f64| -> Result<C, FieldError> { Ok(field.b_physical(C::new(0.0, -u))? * (-I) * (mu * t)) },
            0.0,
            y0,
            1e-14,
            1e-13,
            500,
        )?;
        r.value
    } else {
        C::new(0.0, 0.0)
    };
    let table = PhaseTable::build(
        &|x| Ok(b_at(x)? * (mu * t)),
        st.s_min,
        st.s_max,
        x_origin,
        st.phase_tol * t * (st.s_max - st.s_min),
    )?;
    let coeffs = |x: f64| pm_coeffs(field, at(x), hint_at(x));
    let rhs = |x: f64, y: &State| -> State {
        let (Ok(c), ph) = (coeffs(x), table.eval(x)) else {
            return [C::new(f64::NAN, 0.0); 2];
        };
        let e = (I * ph).exp();
        [c.d * y[0] + c.kp * e * y[1], c.km / e * y[0] - c.d * y[1]]
    };
    // dressed initial state: a+ = 1, a- from the first adiabatic correction
    let c0 = coeffs(st.s_min)?;
    let w0 = mu * t * c0.b;
    let am0 = I * c0.km / w0 * (-I * table.eval(st.s_min)).exp();
    let (rtol, atol) = if y0 > 0.0 { (st.rtol, 1e-300) } else { (st.rtol, st.atol) };
    let out = dp5(&rhs, st.s_min, st.s_max, [C::new(1.0, 0.0), am0], rtol, atol, st.max_steps)?;
    if out.y.iter().any(|y| !y[0].is_finite() || !y[1].is_finite()) {
        return Err(OracleError::StepCollapse(st.s_min));
    }
    let drift = out.y.iter().map(|y| (y[0].norm_sqr() + y[1].norm_sqr() - 1.0).abs()).fold(0.0, f64::max);
    Ok(OracleTrajectory {
        representation: Representation::APm,
        t,
        depth: y0,
        s: out.s,
        amplitudes: out.y,
        max_norm_drift: drift,
        steps: out.steps,
        rejected: out.rejected,
    })
}

fn integrate_12(field: &FieldProfile, t: f64, st: &IntegrationSettings) -> Result<OracleTrajectory, OracleError> {
    let mu = field.mu;
    let comps = |x: f64| field.b_jets(C::new(x, 0.0), 1).map(|j| [j[0].value(), j[1].value(), j[2].value()]);
    let table = PhaseTable::build(
        &|x| Ok(comps(x)?[2] * (mu * t)),
        st.s_min,
        st.s_max,
        C::new(0.0, 0.0),
        st.phase_tol * t * (st.s_max - st.s_min),
    )?;
    let rhs = |x: f64, y: &State| -> State {
        let Ok(b) = comps(x) else {
            return [C::new(f64::NAN, 0.0); 2];
        };
        let c1 = -0.5 * I * mu * (b[0] + I * b[1]);
        let c1t = 0.5 * I * mu * (b[0] - I * b[1]);
        let e = (I * table.eval(x)).exp();
        [-t * c1t * e * y[1], t * c1 / e * y[0]]
    };
    // upper adiabatic state at s_min: (cos Theta/2, e^{i phi} sin Theta/2 e^{-i Phi})
    let s0 = field.eval_field(C::new(st.s_min, 0.0), None)?;
    let (half_c, half_s) = ((0.5 * s0.theta).cos(), (0.5 * s0.theta).sin());
    let y0 = [half_c, (I * s0.phi).exp() * half_s * (-I * table.eval(st.s_min)).exp()];
    let out = dp5(&rhs, st.s_min, st.s_max, y0, st.rtol, st.atol, st.max_steps)?;
    let drift = out.y.iter().map(|y| (y[0].norm_sqr() + y[1].norm_sqr() - 1.0).abs()).fold(0.0, f64::max);
    let _ = table;
    Ok(OracleTrajectory {
        representation: Representation::A12,
        t,
        depth: 0.0,
        s: out.s,
        amplitudes: out.y,
        max_norm_drift: drift,
        steps: out.steps,
        rejected: out.rejected,
    })
}

/// a-(+inf) from a finished trajectory: the first adiabatic correction is
/// removed in the adiabatic picture; the diabatic picture is projected on
/// the lower adiabatic state.
pub fn extract_a_minus(traj: &OracleTrajectory, field: &FieldProfile) -> Result<TransitionResult, OracleError> {
    let s_end = *traj.s.last().expect("non-empty");
    let end = C::new(s_end, -traj.depth);
    let y = traj.final_state();
    let t = traj.t;
    let sample = field.eval_field(C::new(s_end, 0.0), None)?;
    if sample.theta.norm() > 1e-3 {
        return Err(OracleError::FinalAngle(sample.theta.norm()));
    }
    let a_minus = match traj.representation {
        Representation::APm => {
            // rebuild X at the end by integrating along the same path
            let b_end = field.b_physical(end)?;
            let c = pm_coeffs(field, end, b_end)?;
            // the dressing only needs X to O(1) accuracy relative to the
            // exponent it multiplies; recompute it exactly
            let x_end = end_phase(field, t, traj.depth, s_end)?;
            y[1] - I * c.km / (field.mu * t * c.b) * (-I * x_end).exp() * y[0]
        }
        Representation::A12 => {
            let mu = field.mu;
            let phase = quad::integrate(
                |x: f64| -> Result<C, FieldError> { Ok(field.b_jets(C::new(x, 0.0), 1)?[2].value() * (mu * t)) },
                traj.s[0],
                s_end,
                1e-13,
                1e-14,
                20000,
            )?
            .value;
            let (hc, hs) = ((0.5 * sample.theta).cos(), (0.5 * sample.theta).sin());
            -(I * sample.phi).exp() * hs * y[0] * (-I * phase).exp() + hc * y[1]
        }
    };
    let mut r = TransitionResult::new(Method::Oracle, t, a_minus.norm_sqr());
    r.amplitude = Some(a_minus);
    r.notes.push(format!("steps {}, rejected {}", traj.steps, traj.rejected));
    if traj.depth > 0.0 {
        r.notes.push(format!("integrated along Im s = {:.4}", -traj.depth));
    }
    Ok(r)
}

// X at x_end on the line Im s = -depth, with X(0) = 0.
fn end_phase(field: &FieldProfile, t: f64, depth: f64, x_end: f64) -> Result<C, OracleError> {
    let mu = field.mu;
    let down = if depth > 0.0 {
        quad::integrate(
            |u: f64| -> Result<C, FieldError> { Ok(field.b_physical(C::new(0.0, -u))? * (-I) * (mu * t)) },
            0.0,
            depth,
            1e-14,
            1e-13,
            500,
        )?
        .value
    } else {
        C::new(0.0, 0.0)
    };
    let mut hint = field.b_physical(C::new(0.0, -depth))?;
    let n = 2000;
    let mut acc = down;
    let (x_nodes, w_nodes) = quad::gauss_legendre(8);
    for k in 0..n {
        let (a, b) = (x_end * k as f64 / n as f64, x_end * (k + 1) as f64 / n as f64);
        for (xi, wi) in x_nodes.iter().zip(&w_nodes) {
            let x = 0.5 * (a + b) + 0.5 * (b - a) * xi;
            let bv = pick(field.b_squared(C::new(x, -depth))?, hint);
            acc += bv * (mu * t * 0.5 * (b - a) * wi);
        }
        hint = pick(field.b_squared(C::new(b, -depth))?, hint);
    }
    Ok(acc)
}

/// Integrate and extract in one go.
pub fn transition_probability(
    field: &FieldProfile,
    t: f64,
    settings: &IntegrationSettings,
    rep: Representation,
) -> Result<TransitionResult, OracleError> {
    let traj = integrate_amplitude_system(field, t, settings, rep)?;
    extract_a_minus(&traj, field)
}

/// Oracle probabilities for every T, in parallel. T values must be positive
/// and strictly ascending.
pub fn sweep_t(
    field: &FieldProfile,
    t_list: &[f64],
    settings: &IntegrationSettings,
) -> Result<Vec<TransitionResult>, OracleError> {
    if t_list.is_empty() || t_list.iter().any(|t| !(*t > 0.0)) || t_list.windows(2).any(|w| w[1] <= w[0]) {
        return Err(OracleError::TList);
    }
    t_list.par_iter().map(|&t| transition_probability(field, t, settings, Representation::APm)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exprlang::parse;

    fn nik() -> FieldProfile {
        FieldProfile::nikitin(1.0, 2.0, 1.0).unwrap()
    }

    #[test]
    fn settings_validation() {
        let mut s = IntegrationSettings::default();
        assert!(s.validate().is_ok());
        s.s_min = 1.0;
        assert!(s.validate().is_err());
        let s = IntegrationSettings { rtol: 0.0, ..IntegrationSettings::default() };
        assert!(s.validate().is_err());
    }

    #[test]
    fn dp5_matches_exponential() {
        let f = |_: f64, y: &State| [y[0] * I * 3.0, y[1] * -0.5];
        let out = dp5(&f, 0.0, 2.0, [C::new(1.0, 0.0), C::new(1.0, 0.0)], 1e-11, 1e-13, 100000).unwrap();
        let y = out.y.last().unwrap();
        assert!((y[0] - (I * 6.0).exp()).norm() < 1e-9);
        assert!((y[1] - C::new((-1.0f64).exp(), 0.0)).norm() < 1e-10);
    }

    #[test]
    fn phase_table_interpolates() {
        let t = PhaseTable::build(&|x| Ok(C::new(x.cos(), 0.0)), -3.0, 3.0, C::new(0.0, 0.0), 1e-12).unwrap();
        for x in [-2.9, -0.3, 0.0, 1.7] {
            assert!((t.eval(x).re - x.sin()).abs() < 1e-11);
        }
    }

    #[test]
    fn zero_coupling_gives_zero() {
        // Bx = 0: the field never turns
        let f = FieldProfile::berman(parse("0").unwrap(), 1.0, 1.0, vec![]).unwrap();
        let st = IntegrationSettings { s_min: -10.0, s_max: 10.0, ..IntegrationSettings::default() };
        for rep in [Representation::APm, Representation::A12] {
            let traj = integrate_amplitude_system(&f, 5.0, &st, rep).unwrap();
            assert!(traj.amplitudes.iter().all(|a| a[if rep == Representation::APm { 1 } else { 1 }].norm() == 0.0));
            assert_eq!(extract_a_minus(&traj, &f).unwrap().probability, 0.0);
        }
    }

    #[test]
    fn representations_agree_for_nikitin() {
        let st = IntegrationSettings::default();
        let a = transition_probability(&nik(), 10.0, &st, Representation::APm).unwrap();
        let b = transition_probability(&nik(), 10.0, &st, Representation::A12).unwrap();
        assert!((a.probability - b.probability).abs() < 1e-8, "{} {}", a.probability, b.probability);
        assert!(a.probability > 0.0);
    }

    #[test]
    fn contour_agrees_with_real_axis_and_is_depth_independent() {
        let real = transition_probability(&nik(), 5.0, &IntegrationSettings::default(), Representation::APm).unwrap();
        let deep =
            |d| IntegrationSettings { path: PathMode::Contour { depth: Some(d) }, ..IntegrationSettings::default() };
        let a = transition_probability(&nik(), 5.0, &deep(0.6), Representation::APm).unwrap();
        let b = transition_probability(&nik(), 5.0, &deep(0.7), Representation::APm).unwrap();
        assert!((a.probability / b.probability - 1.0).abs() < 1e-6, "{} {}", a.probability, b.probability);
        assert!((a.probability / real.probability - 1.0).abs() < 1e-4, "{} {}", a.probability, real.probability);
    }

    #[test]
    fn unitarity_on_the_real_axis() {
        for t in [5.0, 40.0] {
            for rep in [Representation::APm, Representation::A12] {
                let traj = integrate_amplitude_system(&nik(), t, &IntegrationSettings::default(), rep).unwrap();
                assert!(traj.max_norm_drift < 1e-9, "T={t} {rep:?}: {}", traj.max_norm_drift);
            }
        }
    }

    #[test]
    fn sweep_rejects_bad_lists() {
        let st = IntegrationSettings::default();
        assert!(matches!(sweep_t(&nik(), &[5.0, 5.0], &st), Err(OracleError::TList)));
        assert!(matches!(sweep_t(&nik(), &[10.0, 5.0], &st), Err(OracleError::TList)));
        assert!(matches!(sweep_t(&nik(), &[], &st), Err(OracleError::TList)));
    }
}
