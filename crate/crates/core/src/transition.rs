//! Result type shared by the asymptotic formulas and the oracle.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

type C = Complex64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    AdiabaticSum,
    TwoTp,
    NikitinUmanskii,
    ExactLeading,
    Oracle,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::AdiabaticSum => "adiabatic_sum",
            Method::TwoTp => "two_tp",
            Method::NikitinUmanskii => "nikitin_umanskii",
            Method::ExactLeading => "exact_leading",
            Method::Oracle => "oracle",
        }
    }
}

/// Winding integers of the F-map along the chain contours.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Windings {
    /// Around s1bar and s1.
    pub conj_pair: i64,
    /// n(s1, sk) for k = 1..n (the first entry is 0).
    pub from_first: Vec<i64>,
    /// n(sk, sn) for k = 1..n (the last entry is 0).
    pub to_last: Vec<i64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Decomposition {
    /// Im int_{s1bar}^{s1} (mu T B - phi' cos Theta) ds.
    pub exponent: f64,
    /// Real interference phase of each chain term.
    pub phases: Vec<f64>,
    pub windings: Windings,
    /// The oscillating factor of two-point formulas (cos or sin argument
    /// already combined), when there is one.
    pub interference: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitionResult {
    pub method: Method,
    pub t: f64,
    /// Lower-level amplitude at s = +inf. Asymptotic amplitudes are defined
    /// up to the factor i^l of an undetermined integer l.
    pub amplitude: Option<C>,
    /// True when `amplitude` carries the unresolved quarter-turn phase.
    pub phase_modulo_quarter_turn: bool,
    pub probability: f64,
    pub decomposition: Option<Decomposition>,
    /// Bound on truncated improper integrals, when any were truncated.
    pub tail_bound: Option<f64>,
    pub notes: Vec<String>,
}

impl TransitionResult {
    pub fn new(method: Method, t: f64, probability: f64) -> TransitionResult {
        TransitionResult {
            method,
            t,
            amplitude: None,
            phase_modulo_quarter_turn: false,
            probability,
            decomposition: None,
            tail_bound: None,
            notes: vec![],
        }
    }

    /// The amplitude multiplied by i^l, the representative for integer `l`.
    pub fn amplitude_for_l(&self, l: i64) -> Option<C> {
        let q = C::new(0.0, 1.0).powi(l.rem_euclid(4) as i32);
        self.amplitude.map(|a| a * q)
    }
}
