//! Effective Schrodinger-type potentials for the lower-level amplitude.
//!
//! Eliminating a1 from the a1/a2 system gives `b2'' + T^2 q2 b2 = 0` with
//!
//! ```text
//! q2 = mu^2 B^2 / 4 - (i mu / 2T) (Bz' - Bz g) + (g' - g^2/2) / (2 T^2),
//! g  = c1'/c1 = (Bx' + i By') / (Bx + i By).
//! ```
//!
//! Every term is single valued, so q2 needs no branch bookkeeping. The
//! adiabatic limit is `q0 = mu^2 B0^2 / 4`.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::field::{physical_root, FieldError, FieldProfile};
use crate::jet::Jet;

type C = Complex64;

const I: C = C::new(0.0, 1.0);

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PotentialError {
    #[error(transparent)]
    Field(#[from] FieldError),
    #[error("c1 = -(i/2) mu (Bx + i By) vanishes at s = {0}")]
    C1Zero(C),
    #[error("the potential vanishes at s = {0} (turning point)")]
    TurningPoint(C),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum PotentialMode {
    /// T-independent adiabatic limit q0.
    #[default]
    AdiabaticQ0,
    /// Full q2(s, T).
    FullQ2,
}

/// q0 / q2 with pole bookkeeping for the Langer term.
#[derive(Debug, Clone)]
pub struct EffectivePotential {
    pub field: FieldProfile,
    pub mode: PotentialMode,
    /// Include the Langer term in the Omega kernel and in the modified
    /// potential used for it. Contour work on q0 never uses it.
    pub langer: bool,
}

impl EffectivePotential {
    pub fn new(field: FieldProfile, mode: PotentialMode) -> EffectivePotential {
        EffectivePotential { field, mode, langer: true }
    }

    pub fn adiabatic(field: FieldProfile) -> EffectivePotential {
        EffectivePotential::new(field, PotentialMode::AdiabaticQ0)
    }

    /// Jet of q0 with `len` terms (len <= 5).
    pub fn q0_jet(&self, s: C, len: usize) -> Result<Jet, PotentialError> {
        let b = self.field.b0_jets(s, len)?;
        let b2 = b[0] * b[0] + b[1] * b[1] + b[2] * b[2];
        Ok(b2 * (0.25 * self.field.mu * self.field.mu))
    }

    pub fn eval_q0(&self, s: C) -> Result<C, PotentialError> {
        Ok(self.q0_jet(s, 1)?.value())
    }

    fn q_jet(&self, s: C, t: f64, len: usize, sign: f64) -> Result<Jet, PotentialError> {
        // q2 needs two more orders of the field than it returns
        let b = self.field.b_jets(s, len + 2)?;
        let mu = self.field.mu;
        let iy = C::new(0.0, sign);
        let c = b[0] + b[1] * iy;
        if c.value().norm() < 1e-300 {
            return Err(PotentialError::C1Zero(s));
        }
        let g = c.differentiate() / c.truncate(len + 1);
        let dg = g.differentiate();
        let g = g.truncate(len);
        let bz = b[2].truncate(len);
        let dbz = b[2].differentiate().truncate(len);
        let b2 = (b[0] * b[0] + b[1] * b[1] + b[2] * b[2]).truncate(len);
        let lead = b2 * (0.25 * mu * mu);
        let first = (dbz - bz * g) * (-iy * mu / (2.0 * t));
        let second = (dg - g * g * 0.5) * (1.0 / (2.0 * t * t));
        Ok(lead + first + second)
    }

    /// Jet of q2(s, T) with `len` terms (len <= 3).
    pub fn q2_jet(&self, s: C, t: f64, len: usize) -> Result<Jet, PotentialError> {
        self.q_jet(s, t, len, 1.0)
    }

    pub fn eval_q2(&self, s: C, t: f64) -> Result<C, PotentialError> {
        Ok(self.q2_jet(s, t, 1)?.value())
    }

    /// The companion potential of a1; on the real axis it is the conjugate of q2.
    pub fn eval_q1(&self, s: C, t: f64) -> Result<C, PotentialError> {
        Ok(self.q_jet(s, t, 1, -1.0)?.value())
    }

    /// Sum of 1/4 (s - z)^-2 over the Langer poles, as a jet.
    pub fn langer_jet(&self, s: C, len: usize) -> Jet {
        let mut acc = Jet::constant(C::new(0.0, 0.0), len);
        for &z in &self.field.langer_poles {
            let d = Jet::variable(s - z, len);
            acc = acc + (d * d).recip() * 0.25;
        }
        acc
    }

    pub fn langer_delta(&self, s: C) -> C {
        self.langer_jet(s, 1).value()
    }

    /// The potential selected by `mode`, plus delta/T^2 when `langer` is set.
    pub fn q_tilde_jet(&self, s: C, t: f64, len: usize) -> Result<Jet, PotentialError> {
        let base = match self.mode {
            PotentialMode::AdiabaticQ0 => self.q0_jet(s, len)?,
            PotentialMode::FullQ2 => self.q2_jet(s, t, len)?,
        };
        if self.langer {
            Ok(base + self.langer_jet(s, len) * (1.0 / (t * t)))
        } else {
            Ok(base)
        }
    }

    /// Square root of the modified potential on the sheet that has positive
    /// real part on the real axis, or the root nearest `hint`.
    pub fn sqrt_q_tilde(&self, s: C, t: f64, hint: Option<C>) -> Result<C, PotentialError> {
        let v = self.q_tilde_jet(s, t, 1)?.value();
        match hint {
            Some(h) => {
                let r = v.sqrt();
                Ok(if (r - h).norm() <= (r + h).norm() { r } else { -r })
            }
            None => Ok(physical_root(&|z| self.q_tilde_jet(z, t, 1).map(|j| j.value()).map_err(field_err(z)), s)?),
        }
    }

    /// Omega = delta/q^(1/2) - q''/(4 q^(3/2)) + 5 q'^2 / (16 q^(5/2)), with
    /// q the modified potential and `root` its square root on the wanted sheet.
    pub fn omega_kernel_with_root(&self, s: C, t: f64, root: C) -> Result<C, PotentialError> {
        let q = self.q_tilde_jet(s, t, 3)?;
        let scale = q.deriv(1).norm().max(1.0);
        if q.value().norm() <= 1e-14 * scale {
            return Err(PotentialError::TurningPoint(s));
        }
        let delta = if self.langer { self.langer_delta(s) } else { C::new(0.0, 0.0) };
        let r3 = root * root * root;
        let r5 = r3 * root * root;
        let (d1, d2) = (q.deriv(1), q.deriv(2));
        Ok(delta / root - 0.25 * d2 / r3 + (5.0 / 16.0) * d1 * d1 / r5)
    }

    pub fn eval_omega_kernel(&self, s: C, t: f64, hint: Option<C>) -> Result<C, PotentialError> {
        let root = self.sqrt_q_tilde(s, t, hint)?;
        self.omega_kernel_with_root(s, t, root)
    }
}

fn field_err(z: C) -> impl Fn(PotentialError) -> FieldError {
    move |e| match e {
        PotentialError::Field(f) => f,
        _ => FieldError::Pole(z),
    }
}

/// The closed form of q2 for the Nikitin model, written independently of the
/// general pipeline for cross-checking.
pub fn nikitin_q2_reference(b: f64, delta_eps: f64, s: C, t: f64) -> C {
    let u = b * b + s * s;
    0.25 * delta_eps * delta_eps * (1.0 + 1.0 / (u * u * u))
        - 1.5 * I * delta_eps / t * s / u
        - 0.75 / (t * t) * (2.0 * b * b + s * s) / (u * u)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exprlang::parse;
    use proptest::prelude::*;

    fn nik() -> EffectivePotential {
        EffectivePotential::adiabatic(FieldProfile::nikitin(1.0, 2.0, 1.0).unwrap())
    }

    #[test]
    fn q0_reference_values() {
        let p = nik();
        assert!((p.eval_q0(C::new(0.0, 0.0)).unwrap() - C::new(2.0, 0.0)).norm() < 1e-15);
        let tp = C::new(0.5, 3f64.sqrt() / 2.0);
        assert!(p.eval_q0(tp).unwrap().norm() < 1e-14);
        for x in [-7.0, -0.3, 0.0, 2.2] {
            let v = p.eval_q0(C::new(x, 0.0)).unwrap();
            assert!(v.im == 0.0 && v.re > 0.0);
        }
    }

    #[test]
    fn q2_matches_closed_form_at_reference_point() {
        let p = nik();
        let s = C::new(0.3, 0.0);
        let a = p.eval_q2(s, 10.0).unwrap();
        let b = nikitin_q2_reference(1.0, 2.0, s, 10.0);
        assert!((a - b).norm() <= 1e-12 * b.norm());
    }

    #[test]
    fn q2_tends_to_q0_like_one_over_t() {
        let p = nik();
        let s = C::new(0.4, 0.2);
        let q0 = p.eval_q0(s).unwrap();
        let d: Vec<f64> = [1e2, 1e3, 1e4].iter().map(|&t| (p.eval_q2(s, t).unwrap() - q0).norm()).collect();
        // log-log slope -1 within a few percent
        let slope = (d[2].ln() - d[0].ln()) / (1e4f64.ln() - 1e2f64.ln());
        assert!((slope + 1.0).abs() < 0.02, "slope {slope}");
    }

    #[test]
    fn q2_diverges_at_poles() {
        let p = nik();
        assert!(p.eval_q2(C::new(0.0, 1.0), 10.0).is_err());
        let near = p.eval_q2(C::new(0.0, 1.0 - 1e-4), 10.0).unwrap();
        assert!(near.norm() > 1e10);
    }

    #[test]
    fn c1_zero_is_reported() {
        let f = FieldProfile::berman(parse("s").unwrap(), 1.0, 1.0, vec![]).unwrap();
        let p = EffectivePotential::new(f, PotentialMode::FullQ2);
        assert!(matches!(p.eval_q2(C::new(0.0, 0.0), 5.0), Err(PotentialError::C1Zero(_))));
    }

    #[test]
    fn langer_delta_reference_values() {
        let f = FieldProfile::berman(parse("1").unwrap(), 1.0, 1.0, vec![]).unwrap();
        let p = EffectivePotential::adiabatic(f.clone());
        assert_eq!(p.langer_delta(C::new(0.3, 0.1)), C::new(0.0, 0.0));
        let mut f1 = f;
        f1.langer_poles = vec![C::new(0.0, 1.0)];
        let p = EffectivePotential::adiabatic(f1);
        assert!((p.langer_delta(C::new(0.0, 0.0)) - C::new(-0.25, 0.0)).norm() < 1e-15);
        let n = nik();
        let v = n.langer_delta(C::new(0.7, 0.0));
        assert!(v.im.abs() < 1e-16);
    }

    #[test]
    fn omega_kernel_reference_values() {
        // constant potential: Omega = 0
        let f = FieldProfile::berman(parse("0.5").unwrap(), 1.0, 1.0, vec![]).unwrap();
        let p = EffectivePotential::adiabatic(f);
        assert!(p.eval_omega_kernel(C::new(0.3, 0.2), 10.0, None).unwrap().norm() < 1e-15);

        // q = s, realised as mu^2 B^2/4 with B = (0, 0, 2 sqrt(s)) and mu = 1
        let f = FieldProfile::custom(
            [parse("0").unwrap(), parse("0").unwrap(), parse("2*sqrt(s)").unwrap()],
            None,
            1.0,
            vec![],
        )
        .unwrap();
        let p = EffectivePotential::adiabatic(f);
        let q = p.q0_jet(C::new(1.0, 0.0), 3).unwrap();
        assert!((q.value() - C::new(1.0, 0.0)).norm() < 1e-14);
        let om = p.eval_omega_kernel(C::new(1.0, 0.0), 10.0, None).unwrap();
        assert!((om - C::new(0.3125, 0.0)).norm() < 1e-14);
    }

    #[test]
    fn omega_kernel_is_integrable_on_the_real_axis() {
        let p = nik();
        let r = crate::quad::integrate(
            |x| p.eval_omega_kernel(C::new(x, 0.0), 20.0, None),
            -50.0,
            50.0,
            1e-12,
            1e-10,
            2000,
        )
        .unwrap();
        assert!(r.converged && r.value.norm().is_finite());
        assert!(p.eval_omega_kernel(C::new(0.2, 0.0), 20.0, None).unwrap().norm().is_finite());
    }

    proptest! {
        #[test]
        fn q2_pipeline_agrees_with_closed_form(
            x in -4.0f64..4.0, y in -0.8f64..0.8, t in prop::sample::select(vec![10.0, 100.0])
        ) {
            let p = nik();
            let s = C::new(x, y);
            let a = p.eval_q2(s, t).unwrap();
            let b = nikitin_q2_reference(1.0, 2.0, s, t);
            prop_assert!((a - b).norm() <= 1e-10 * b.norm());
        }

        #[test]
        fn q1_is_the_mirror_of_q2(x in -4.0f64..4.0, y in -0.8f64..0.8, t in 1.0f64..100.0) {
            let p = nik();
            let s = C::new(x, y);
            let q2 = p.eval_q2(s, t).unwrap();
            let q1 = p.eval_q1(s.conj(), t).unwrap();
            prop_assert!((q1 - q2.conj()).norm() <= 1e-12 * q2.norm());
            if y == 0.0 {
                prop_assert!((p.eval_q1(s, t).unwrap() - q2.conj()).norm() <= 1e-12 * q2.norm());
            }
        }

        #[test]
        fn q0_is_real_symmetric(x in -4.0f64..4.0, y in -0.8f64..0.8) {
            let p = nik();
            let s = C::new(x, y);
            let a = p.eval_q0(s).unwrap();
            let b = p.eval_q0(s.conj()).unwrap();
            prop_assert!((a.conj() - b).norm() <= 1e-13 * a.norm());
        }
    }
}
