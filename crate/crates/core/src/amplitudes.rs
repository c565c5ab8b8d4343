//! Asymptotic transition amplitudes built on the turning-point chain.
//!
//! With A = mu T B - phi' cos(Theta) and J(a, b) = i int_a^b A ds, the
//! adiabatic amplitude is
//!
//! ```text
//! a- = -i^(l+1) e^{-i pi n(s1bar,s1)/4} e^{(J(s1bar,s1) + J(s1bar,0) + J(sn,0))/2}
//!      * sum_k e^{i pi (n(s1,sk) - n(sk,sn))/4} e^{-(J(s1,sk) - J(sk,sn))/2}
//! P  = e^{-Im int_{s1bar}^{s1} A} |sum_k ...|^2
//! ```
//!
//! where the n are windings of the F-map around stadiums enclosing each pair.
//! The integer l is left open; amplitudes are reported for l = 0.

use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::contours::{
    action_integral, build_avoiding_path, stadium_avoiding, winding_number, Anchor, ContourError, ContourPath,
    DetourSide, EndpointTag, FieldIntegrand, Integrand, IntegrandTag, SqrtOf, SqrtPotential, DEFAULT_CLEARANCE,
};
use crate::field::{FieldError, FieldModel, FieldProfile};
use crate::potential::{EffectivePotential, PotentialError, PotentialMode};
use crate::quad;
use crate::roots::{find_zeros, segment_distance, Rect, RootError};
use crate::stokes::{build_graph, identify_ned_chain, GraphOptions, NedChain, StokesError, StokesGraph};
use crate::transition::{Decomposition, Method, TransitionResult, Windings};

type C = Complex64;

const I: C = C::new(0.0, 1.0);

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AmplitudeError {
    #[error(transparent)]
    Stokes(#[from] StokesError),
    #[error(transparent)]
    Contour(#[from] ContourError),
    #[error(transparent)]
    Roots(#[from] RootError),
    #[error("potential: {0}")]
    Potential(#[from] PotentialError),
    #[error("field: {0}")]
    Field(#[from] FieldError),
    #[error("not applicable: {0}")]
    NotApplicable(String),
    #[error("T must be positive, got {0}")]
    InvalidT(f64),
    #[error("tail bound {bound:.3e} exceeds tolerance {tol:.3e}")]
    TailBound { bound: f64, tol: f64 },
    #[error("path is not canonical: Im W rises by {0:.3e}")]
    NonCanonical(f64),
    #[error("Newton iteration for a zero of q2 failed near {0}")]
    ZeroNotFound(C),
}

/// Choices that must not change probabilities.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AmplitudeOptions {
    pub side: DetourSide,
    /// Subdivide every path this many times.
    pub refine: usize,
    pub clearance: f64,
    /// Truncation of the real-axis integrals of the exact formula.
    pub s_max: f64,
    pub tail_tol: f64,
}

impl Default for AmplitudeOptions {
    fn default() -> Self {
        AmplitudeOptions {
            side: DetourSide::Upper,
            refine: 1,
            clearance: DEFAULT_CLEARANCE,
            s_max: 50.0,
            tail_tol: 1e-3,
        }
    }
}

/// The field, its adiabatic potential, the Stokes graph and the chain.
#[derive(Debug, Clone)]
pub struct ChainSetup {
    pub field: FieldProfile,
    pub potential: EffectivePotential,
    pub chain: NedChain,
    /// All turning points of the graph.
    pub turning_points: Vec<C>,
    /// Zeros of B0x^2 + B0y^2 near the chain, where B0z +- B0 = 0.
    pub obstacles: Vec<C>,
    /// Obstacles lying inside the central strip.
    pub strip_obstacles: Vec<C>,
    pub notes: Vec<String>,
}

impl ChainSetup {
    pub fn new(field: &FieldProfile, opts: &GraphOptions) -> Result<ChainSetup, AmplitudeError> {
        let ep = EffectivePotential::adiabatic(field.clone());
        let g = build_graph(&ep, opts)?;
        ChainSetup::from_graph(field, &g)
    }

    pub fn from_graph(field: &FieldProfile, g: &StokesGraph) -> Result<ChainSetup, AmplitudeError> {
        let chain = match &g.chain {
            Some(c) => c.clone(),
            None => identify_ned_chain(g)?,
        };
        let mut notes = vec![];
        let obstacles = match f_obstacles(field, &chain) {
            Ok(v) => v,
            Err(e) => {
                notes.push(format!("obstacle search failed ({e}); paths avoid poles and turning points only"));
                vec![]
            }
        };
        let strip_obstacles = obstacles
            .iter()
            .copied()
            .filter(|&z| g.central_sector.is_some() && g.sector_at(z) == g.central_sector)
            .collect();
        Ok(ChainSetup {
            field: field.clone(),
            potential: EffectivePotential::adiabatic(field.clone()),
            chain,
            turning_points: g.turning_points.iter().map(|t| t.location).collect(),
            obstacles,
            strip_obstacles,
            notes,
        })
    }

    /// Everything a path between chain points must keep away from.
    fn avoid(&self, a: C, b: C) -> Vec<C> {
        let mut v: Vec<C> = self.turning_points.clone();
        v.extend(self.field.poles.iter().map(|p| p.at));
        v.extend(self.obstacles.iter().copied());
        v.retain(|&z| (z - a).norm() > 1e-9 && (z - b).norm() > 1e-9);
        v
    }

    fn tag(&self, z: C) -> EndpointTag {
        if self.turning_points.iter().any(|&t| (t - z).norm() < 1e-9) {
            EndpointTag::TurningPoint
        } else if z.norm() == 0.0 {
            EndpointTag::Origin
        } else {
            EndpointTag::Generic
        }
    }

    /// Detour side for a -> b. Odd-order poles are branch points of B, so
    /// near one the path must stay on the side of the real axis; elsewhere
    /// the caller's choice applies.
    fn side(&self, a: C, b: C, opts: &AmplitudeOptions) -> DetourSide {
        let near_pole = self.field.poles.iter().any(|p| {
            (p.at - a).norm() > 1e-9 && (p.at - b).norm() > 1e-9 && segment_distance(p.at, a, b) < opts.clearance
        });
        match (near_pole, (a + b).im > 0.0) {
            (false, _) => opts.side,
            (true, true) => DetourSide::Lower,
            (true, false) => DetourSide::Upper,
        }
    }

    fn path(&self, a: C, b: C, opts: &AmplitudeOptions) -> Result<ContourPath, AmplitudeError> {
        let p = build_avoiding_path(a, b, &self.avoid(a, b), opts.clearance, self.side(a, b, opts))?;
        Ok(p.refined(opts.refine.max(1)).with_tags(self.tag(a), self.tag(b)))
    }

    /// Winding of F around the stadium enclosing a and b.
    fn winding(&self, a: C, b: C, opts: &AmplitudeOptions) -> Result<i64, AmplitudeError> {
        if (a - b).norm() < 1e-12 {
            return Ok(0);
        }
        let p = stadium_avoiding(a, b, &self.avoid(a, b)).refined(opts.refine.max(1));
        Ok(winding_number(&self.field, &p)?)
    }

    /// int_a^b mu B ds (at T = 1) and int_a^b phi' cos(Theta) ds.
    fn action_parts(&self, a: C, b: C, opts: &AmplitudeOptions) -> Result<(C, C), AmplitudeError> {
        let path = self.path(a, b, opts)?;
        let fb = FieldIntegrand { field: &self.field, t: 1.0, tag: IntegrandTag::MuTB };
        let vb = action_integral(&fb, &path, Anchor::Physical)?.value;
        let vp = if self.field.is_planar() {
            C::new(0.0, 0.0)
        } else {
            let fp = FieldIntegrand { field: &self.field, t: 1.0, tag: IntegrandTag::PhiDotCosTheta };
            action_integral(&fp, &path, Anchor::Physical)?.value
        };
        Ok((vb, vp))
    }
}

fn f_obstacles(field: &FieldProfile, chain: &NedChain) -> Result<Vec<C>, RootError> {
    let (mut lo, mut hi, mut top) = (f64::INFINITY, f64::NEG_INFINITY, 0.0f64);
    for z in chain.upper.iter().chain([&chain.conj_first]) {
        lo = lo.min(z.re);
        hi = hi.max(z.re);
        top = top.max(z.im.abs());
    }
    let rect = Rect::new(lo - 1.0, hi + 1.0, -top - 1.0, top + 1.0);
    let f = |z: C| -> Option<(C, C)> {
        let j = field.b0_jets(z, 2).ok()?;
        let v = j[0].value() * j[0].value() + j[1].value() * j[1].value();
        let d = 2.0 * (j[0].value() * j[0].deriv(1) + j[1].value() * j[1].deriv(1));
        (v.is_finite() && d.is_finite()).then_some((v, d))
    };
    Ok(find_zeros(&f, &field.poles, rect)?.into_iter().map(|z| z.at).collect())
}

fn check_t(t: f64) -> Result<(), AmplitudeError> {
    if t > 0.0 && t.is_finite() {
        Ok(())
    } else {
        Err(AmplitudeError::InvalidT(t))
    }
}

// i times the action integral at T: J = i (T int mu B - int phi' cos Theta)
fn j_of(parts: (C, C), t: f64) -> C {
    I * (parts.0 * t - parts.1)
}

/// The adiabatic sum over the chain.
pub fn adiabatic_amplitude(
    setup: &ChainSetup,
    t: f64,
    opts: &AmplitudeOptions,
) -> Result<TransitionResult, AmplitudeError> {
    check_t(t)?;
    let ch = &setup.chain;
    let (s1b, s1, sn) = (ch.conj_first, ch.upper[0], *ch.upper.last().expect("chain is non-empty"));
    let n = ch.n();
    let d_parts = setup.action_parts(s1b, s1, opts)?;
    let exponent = (d_parts.0 * t - d_parts.1).im;
    // per-k integrals and windings, in parallel, merged in chain order
    let per_k: Vec<Result<(C, C, i64, i64), AmplitudeError>> = (0..n)
        .into_par_iter()
        .map(|k| {
            let sk = ch.upper[k];
            let zero = (C::new(0.0, 0.0), C::new(0.0, 0.0));
            let a = if k == 0 { zero } else { setup.action_parts(s1, sk, opts)? };
            let b = if k + 1 == n { zero } else { setup.action_parts(sk, sn, opts)? };
            let w1 = setup.winding(s1, sk, opts)?;
            let w2 = setup.winding(sk, sn, opts)?;
            Ok((j_of(a, t), j_of(b, t), w1, w2))
        })
        .collect();
    let per_k: Vec<(C, C, i64, i64)> = per_k.into_iter().collect::<Result<_, _>>()?;
    let mut sum = C::new(0.0, 0.0);
    let mut phases = vec![];
    for &(j1k, jkn, w1, w2) in &per_k {
        let e = I * (PI * (w1 - w2) as f64 / 4.0) - 0.5 * (j1k - jkn);
        phases.push(e.im);
        sum += e.exp();
    }
    let probability = (-exponent).exp() * sum.norm_sqr();
    let n_pair = setup.winding(s1b, s1, opts)?;
    let origin = C::new(0.0, 0.0);
    let j_b0 = j_of(setup.action_parts(s1b, origin, opts)?, t);
    let j_n0 = j_of(setup.action_parts(sn, origin, opts)?, t);
    let global = -I * (-I * (PI * n_pair as f64 / 4.0)).exp() * (0.5 * (j_of(d_parts, t) + j_b0 + j_n0)).exp();
    let mut r = TransitionResult::new(Method::AdiabaticSum, t, probability);
    r.amplitude = Some(global * sum);
    r.phase_modulo_quarter_turn = true;
    r.decomposition = Some(Decomposition {
        exponent,
        interference: (n == 2).then(|| 0.5 * (per_k[0].1 / I).re - PI * per_k[0].3 as f64 / 4.0),
        phases,
        windings: Windings {
            conj_pair: n_pair,
            from_first: per_k.iter().map(|p| p.2).collect(),
            to_last: per_k.iter().map(|p| p.3).collect(),
        },
    });
    r.notes.extend(setup.notes.iter().cloned());
    Ok(r)
}

/// Two-point interference formula, P = 4 e^{-D} cos^2(Re int_{s1}^{s2} A / 2 - pi n12 / 4).
/// Falls back to the adiabatic sum when B0z +- B0 = 0 has roots in the strip.
pub fn two_tp_amplitude(
    setup: &ChainSetup,
    t: f64,
    opts: &AmplitudeOptions,
) -> Result<TransitionResult, AmplitudeError> {
    check_t(t)?;
    let ch = &setup.chain;
    if ch.n() != 2 {
        return Err(AmplitudeError::NotApplicable(format!("the chain has {} points, not 2", ch.n())));
    }
    if !setup.strip_obstacles.is_empty() {
        let mut r = adiabatic_amplitude(setup, t, opts)?;
        r.notes.push(format!(
            "B0z +- B0 = 0 has {} root(s) inside the strip; used the adiabatic sum with deformed paths",
            setup.strip_obstacles.len()
        ));
        return Ok(r);
    }
    let (s1b, s1, s2) = (ch.conj_first, ch.upper[0], ch.upper[1]);
    let d = setup.action_parts(s1b, s1, opts)?;
    let exponent = (d.0 * t - d.1).im;
    let j = setup.action_parts(s1, s2, opts)?;
    let n12 = setup.winding(s1, s2, opts)?;
    let x = 0.5 * (j.0 * t - j.1).re - PI * n12 as f64 / 4.0;
    let mut r = TransitionResult::new(Method::TwoTp, t, 4.0 * (-exponent).exp() * x.cos().powi(2));
    r.decomposition = Some(Decomposition {
        exponent,
        phases: vec![x],
        windings: Windings { conj_pair: 0, from_first: vec![0, n12], to_last: vec![n12, 0] },
        interference: Some(x),
    });
    Ok(r)
}

/// Nikitin-Umanskii probability for Berman-class fields (f(s), 0, Omega/mu):
/// P = 4 exp(-mu T Im int_{s1bar}^{s1} R) sin^2(mu T Re int_{s1}^{s2} R / 2),
/// R = sqrt((Omega/mu)^2 + f^2).
pub fn nikitin_umanskii_probability(setup: &ChainSetup, t: f64) -> Result<TransitionResult, AmplitudeError> {
    check_t(t)?;
    let field = &setup.field;
    let radicand: Box<dyn Fn(C) -> Result<C, ContourError> + Sync> = match &field.model {
        FieldModel::Nikitin { b, delta_eps } => {
            let (k, b2) = (delta_eps / field.mu, b * b);
            Box::new(move |s: C| {
                let u = s * s + b2;
                Ok(k * k * (1.0 + (u * u * u).inv()))
            })
        }
        FieldModel::Berman { f, omega } => {
            let (f, w) = (f.clone(), omega / field.mu);
            Box::new(move |s: C| {
                let v = f.eval(s).map_err(|_| ContourError::SingularityOnPath(s))?;
                Ok(w * w + v * v)
            })
        }
        FieldModel::Custom => {
            return Err(AmplitudeError::NotApplicable("the formula needs a Berman-class field".into()));
        }
    };
    let ch = &setup.chain;
    if ch.n() != 2 {
        return Err(AmplitudeError::NotApplicable(format!("the chain has {} points; use the adiabatic sum", ch.n())));
    }
    let r = SqrtOf(radicand);
    let seg = |a: C, b: C| ContourPath::segment(a, b).with_tags(EndpointTag::TurningPoint, EndpointTag::TurningPoint);
    let i1 = action_integral(&r, &seg(ch.conj_first, ch.upper[0]), Anchor::Physical)?.value;
    let i2 = action_integral(&r, &seg(ch.upper[0], ch.upper[1]), Anchor::Physical)?.value;
    let mt = field.mu * t;
    let exponent = mt * i1.im;
    let x = 0.5 * mt * i2.re;
    let mut res = TransitionResult::new(Method::NikitinUmanskii, t, 4.0 * (-exponent).exp() * x.sin().powi(2));
    res.decomposition =
        Some(Decomposition { exponent, phases: vec![x], windings: Windings::default(), interference: Some(x) });
    Ok(res)
}

// ------------------------------------------------------------ exact formula

/// Transfer matrices across the chain and their ingredients.
#[derive(Debug, Clone, Serialize)]
pub struct ConnectionMatrices {
    pub t: f64,
    /// Zeros of q2 continuing s1..sn and s1bar..snbar.
    pub upper_zeros: Vec<C>,
    pub lower_zeros: Vec<C>,
    pub m: Vec<[[C; 2]; 2]>,
    /// alpha_k = exp(i T int_{skbar}^{sk} sqrt(q2)).
    pub alpha: Vec<C>,
    /// beta_k = i T int_{s(k-1)}^{sk} sqrt(q2), k = 2..n.
    pub beta: Vec<C>,
    /// beta_kbar = -i T int_{s(k-1)bar}^{skbar} sqrt(q2), k = 2..n.
    pub beta_bar: Vec<C>,
    /// Common chi factor applied to every transition (1 at order 0).
    pub chi: C,
    /// The product M1 M2 ... Mn.
    pub product: [[C; 2]; 2],
}

fn matmul(a: &[[C; 2]; 2], b: &[[C; 2]; 2]) -> [[C; 2]; 2] {
    let mut r = [[C::new(0.0, 0.0); 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            r[i][j] = a[i][0] * b[0][j] + a[i][1] * b[1][j];
        }
    }
    r
}

/// Zero of q2(., t) by Newton iteration from `z0`.
fn q2_zero(ep: &EffectivePotential, z0: C, t: f64) -> Result<C, AmplitudeError> {
    let mut z = z0;
    for _ in 0..60 {
        let j = ep.q2_jet(z, t, 2)?;
        let dz = j.value() / j.deriv(1);
        z -= dz;
        if dz.norm() <= 1e-14 * (1.0 + z.norm()) {
            return Ok(z);
        }
    }
    Err(AmplitudeError::ZeroNotFound(z0))
}

struct Full<'a> {
    setup: &'a ChainSetup,
    ep: EffectivePotential,
    t: f64,
    /// q0 zeros paired with q2 zeros, for path obstacle bookkeeping.
    moved: Vec<(C, C)>,
}

impl Full<'_> {
    // T int_a^b sqrt(q2) along an avoiding path between two q2 zeros or 0
    fn phase(&self, a: C, b: C, opts: &AmplitudeOptions) -> Result<C, AmplitudeError> {
        let orig = |z: C| self.moved.iter().find(|m| m.1 == z).map(|m| m.0).unwrap_or(z);
        let mut avoid = self.setup.avoid(orig(a), orig(b));
        // other q2 zeros replace their q0 partners
        for m in &self.moved {
            if let Some(p) = avoid.iter_mut().find(|z| **z == m.0) {
                *p = m.1;
            }
        }
        avoid.retain(|&z| (z - a).norm() > 1e-9 && (z - b).norm() > 1e-9);
        let tag = |z: C| if z.norm() == 0.0 { EndpointTag::Origin } else { EndpointTag::TurningPoint };
        let sq = SqrtPotential { potential: &self.ep, t: self.t, full: true };
        // anchor on the physical sheet at the origin when it is an endpoint
        if b.norm() == 0.0 {
            let p = build_avoiding_path(b, a, &avoid, opts.clearance, self.setup.side(b, a, opts))?
                .refined(opts.refine.max(1))
                .with_tags(tag(b), tag(a));
            return Ok(-action_integral(&sq, &p, Anchor::Physical)?.value * self.t);
        }
        let p = build_avoiding_path(a, b, &avoid, opts.clearance, self.setup.side(a, b, opts))?
            .refined(opts.refine.max(1))
            .with_tags(tag(a), tag(b));
        Ok(action_integral(&sq, &p, Anchor::Physical)?.value * self.t)
    }
}

fn full_setup(setup: &ChainSetup, t: f64) -> Result<(Full<'_>, Vec<C>, Vec<C>), AmplitudeError> {
    let ep = EffectivePotential::new(setup.field.clone(), PotentialMode::FullQ2);
    let ch = &setup.chain;
    let mut upper = vec![];
    let mut lower = vec![];
    let mut moved = vec![];
    for (k, &s) in ch.upper.iter().enumerate() {
        let u = q2_zero(&ep, s, t)?;
        let lb = if k == 0 { ch.conj_first } else { s.conj() };
        let l = q2_zero(&ep, lb, t)?;
        moved.push((s, u));
        moved.push((lb, l));
        upper.push(u);
        lower.push(l);
    }
    Ok((Full { setup, ep, t, moved }, upper, lower))
}

/// M1..Mn at finite T; `chi_order` 1 multiplies each transition by a common
/// first-order chi factor from the real half-axis.
pub fn connection_matrices(
    setup: &ChainSetup,
    t: f64,
    chi_order: u8,
    opts: &AmplitudeOptions,
) -> Result<ConnectionMatrices, AmplitudeError> {
    check_t(t)?;
    if chi_order > 1 {
        return Err(AmplitudeError::NotApplicable(format!("chi_order {chi_order} (0 or 1 supported)")));
    }
    let (full, up, lo) = full_setup(setup, t)?;
    let n = up.len();
    let alpha: Vec<C> = (0..n)
        .into_par_iter()
        .map(|k| full.phase(lo[k], up[k], opts).map(|v| (I * v).exp()))
        .collect::<Result<_, _>>()?;
    let mut beta = vec![];
    let mut beta_bar = vec![];
    for k in 1..n {
        beta.push(I * full.phase(up[k - 1], up[k], opts)?);
        beta_bar.push(-I * full.phase(lo[k - 1], lo[k], opts)?);
    }
    let chi = if chi_order == 1 {
        let path = ContourPath::segment(C::new(0.0, 0.0), C::new(opts.s_max.min(10.0), 0.0));
        C::new(1.0, 0.0) + chi_first_order(&setup.potential, &path, t, 1)?
    } else {
        C::new(1.0, 0.0)
    };
    let z = C::new(0.0, 0.0);
    let one = C::new(1.0, 0.0);
    let mut m = vec![[[z, z], [-I * alpha[0] * chi, one]]];
    for k in 1..n {
        let (eb, ebb) = (beta[k - 1].exp(), beta_bar[k - 1].exp());
        m.push([[eb, I * alpha[k] * eb * chi], [-I * alpha[k] * ebb * chi, ebb]]);
    }
    let product = m.iter().skip(1).fold(m[0], |acc, mk| matmul(&acc, mk));
    Ok(ConnectionMatrices { t, upper_zeros: up, lower_zeros: lo, m, alpha, beta, beta_bar, chi, product })
}

// Integrand of the regularised real-axis prefactor integrals.
struct Prefactor<'a> {
    field: &'a FieldProfile,
    ep: &'a EffectivePotential,
    t: f64,
    /// -1 on the negative half-axis, +1 on the positive one.
    side: f64,
}

impl Integrand for Prefactor<'_> {
    fn tag(&self) -> IntegrandTag {
        IntegrandTag::Custom
    }
    fn radicand(&self, s: C) -> Result<C, ContourError> {
        Ok(self.ep.eval_q2(s, self.t)?)
    }
    fn value(&self, s: C, root: C) -> Result<C, ContourError> {
        let f = self.field.eval_field(s, None)?;
        let (t, mu) = (self.t, self.field.mu);
        let b = f.bmag;
        let bdot = (f.b[0] * f.db[0] + f.b[1] * f.db[1] + f.b[2] * f.db[2]) / b;
        let th = f.theta;
        let c_log = bdot / b + f.theta_dot * th.cos() / th.sin() + I * f.phi_dot;
        let base = 0.5 * (c_log - I * t * mu * f.b[2]);
        let half = 0.5 * th;
        Ok(if self.side < 0.0 {
            base - I * t * root
                - I * (f.phi_dot - mu * t * b) * half.cos().powi(2)
                - 0.5 * f.theta_dot * half.cos() / half.sin()
        } else {
            base + I * t * root - I * (f.phi_dot + mu * t * b) * half.sin().powi(2)
        })
    }
}

// int_0^{side * s_max} of the prefactor integrand, oriented from the origin,
// with an algebraic tail correction; returns (value, tail bound).
fn prefactor_integral(p: &Prefactor, s_max: f64) -> Result<(C, f64), AmplitudeError> {
    let end = C::new(p.side * s_max, 0.0);
    let path = ContourPath::polyline(vec![C::new(0.0, 0.0), end * 0.02, end * 0.1, end * 0.3, end]);
    let v = action_integral(p, &path, Anchor::Physical)?;
    // integrand at S, S/2 and S/4 fixes the decay exponent and its drift
    let at = |x: f64| -> Result<C, ContourError> {
        let s = end * x;
        let r = p.ep.eval_q2(s, p.t)?.sqrt();
        let r = if (r - v.end_root).norm() <= (r + v.end_root).norm() { r } else { -r };
        p.value(s, r)
    };
    let (f1, f2, f4) = (p.value(end, v.end_root)?, at(0.5)?, at(0.25)?);
    if f1.norm() == 0.0 {
        return Ok((v.value, 0.0));
    }
    let pw = (f2.norm() / f1.norm()).log2();
    let pw_prev = (f4.norm() / f2.norm()).log2();
    if !(pw > 1.2) {
        // slower than 1/s: the tail is not controlled
        return Ok((v.value, f64::INFINITY));
    }
    let tail = f1 * (s_max / (pw - 1.0)) * p.side;
    let bound = tail.norm() * (pw - pw_prev).abs() / (pw - 1.0) + 1e-3 * tail.norm();
    Ok((v.value + tail, bound))
}

/// The exact-at-leading-chi amplitude: the full transfer-matrix element
/// times the regularised real-axis prefactor.
pub fn exact_leading_amplitude(
    setup: &ChainSetup,
    t: f64,
    chi_order: u8,
    opts: &AmplitudeOptions,
) -> Result<TransitionResult, AmplitudeError> {
    check_t(t)?;
    let cm = connection_matrices(setup, t, chi_order, opts)?;
    let m21 = cm.product[1][0];
    let (full, up, lo) = full_setup(setup, t)?;
    let origin = C::new(0.0, 0.0);
    let p1 = full.phase(lo[0], origin, opts)?;
    let pn = full.phase(*up.last().expect("non-empty"), origin, opts)?;
    let field = &setup.field;
    let minus = Prefactor { field, ep: &full.ep, t, side: -1.0 };
    let plus = Prefactor { field, ep: &full.ep, t, side: 1.0 };
    let (im, bm) = prefactor_integral(&minus, opts.s_max)?;
    let (ip, bp) = prefactor_integral(&plus, opts.s_max)?;
    // int_{-S}^0 = -int_0^{-S}
    let expo = -im + ip + I * p1 + I * pn;
    let tail = bm + bp;
    if tail > opts.tail_tol {
        return Err(AmplitudeError::TailBound { bound: tail, tol: opts.tail_tol });
    }
    let bl = field.b_physical(C::new(-opts.s_max, 0.0))?;
    let br = field.b_physical(C::new(opts.s_max, 0.0))?;
    let th0 = field.eval_field(origin, None)?.theta;
    let a = m21 * (bl / br).sqrt() * (0.5 * th0).sin() * expo.exp();
    let mut r = TransitionResult::new(Method::ExactLeading, t, a.norm_sqr());
    r.amplitude = Some(a);
    r.tail_bound = Some(tail);
    if chi_order == 1 {
        r.notes.push("chi approximated by one first-order factor from the real half-axis".into());
    }
    Ok(r)
}

/// First-order chi correction along a path:
/// (-sigma / 2iT) int Omega(xi) (1 - exp(-2 sigma i T (W(s) - W(xi)))) dxi,
/// with W the integral of sqrt(q~) from the start and s the end point.
pub fn chi_first_order(ep: &EffectivePotential, path: &ContourPath, t: f64, sigma: i8) -> Result<C, AmplitudeError> {
    check_t(t)?;
    let sig = if sigma >= 0 { 1.0 } else { -1.0 };
    let pts = &path.points;
    if pts.len() < 2 {
        return Err(ContourError::Degenerate.into());
    }
    // W at a fine set of nodes along the path, to check canonicity and
    // serve as anchors for the inner integrals
    let root = |s: C| -> Result<C, AmplitudeError> { Ok(ep.sqrt_q_tilde(s, t, None)?) };
    let w_seg = |a: C, b: C| -> Result<C, AmplitudeError> {
        let d = b - a;
        let r = quad::integrate(
            |u: f64| -> Result<C, AmplitudeError> { Ok(root(a + d * u)? * d) },
            0.0,
            1.0,
            1e-13,
            1e-12,
            200,
        )?;
        Ok(r.value)
    };
    let mut nodes = vec![pts[0]];
    for w in pts.windows(2) {
        for j in 1..=32 {
            nodes.push(w[0] + (w[1] - w[0]) * (j as f64 / 32.0));
        }
    }
    let mut w_nodes = vec![C::new(0.0, 0.0)];
    for w in nodes.windows(2) {
        let last = *w_nodes.last().expect("non-empty");
        w_nodes.push(last + w_seg(w[0], w[1])?);
    }
    let worst = w_nodes.windows(2).map(|w| sig * (w[0] - w[1]).im).fold(f64::NEG_INFINITY, f64::max);
    if worst > 1e-8 * (1.0 + w_nodes.last().expect("non-empty").norm()) {
        return Err(AmplitudeError::NonCanonical(worst));
    }
    let w_end = *w_nodes.last().expect("non-empty");
    let mut total = C::new(0.0, 0.0);
    for (j, w) in nodes.windows(2).enumerate() {
        let (a, b) = (w[0], w[1]);
        let d = b - a;
        let w_a = w_nodes[j];
        let r = quad::integrate(
            |u: f64| -> Result<C, AmplitudeError> {
                let xi = a + d * u;
                let w_xi = w_a + w_seg(a, xi)?;
                let om = ep.eval_omega_kernel(xi, t, None)?;
                Ok(om * (1.0 - (-2.0 * sig * I * t * (w_end - w_xi)).exp()) * d)
            },
            0.0,
            1.0,
            1e-14,
            1e-11,
            200,
        )?;
        total += r.value;
    }
    Ok(-sig / (2.0 * I * t) * total)
}
