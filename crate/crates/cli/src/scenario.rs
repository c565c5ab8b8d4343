//! Scenario files: one JSON document drives every subcommand.

use std::path::Path;

use adiabat_core::amplitudes::AmplitudeOptions;
use adiabat_core::exprlang::parse;
use adiabat_core::field::FieldProfile;
use adiabat_core::oracle::IntegrationSettings;
use adiabat_core::roots::{Pole, Rect};
use adiabat_core::stokes::GraphOptions;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum Model {
    Nikitin {
        b: f64,
        delta_eps: f64,
    },
    Berman {
        f: String,
        omega: f64,
    },
    Custom {
        components: [String; 3],
        #[serde(default)]
        adiabatic_components: Option<[String; 3]>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PoleSpec {
    /// [re, im]
    pub at: [f64; 2],
    pub order: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum MethodChoice {
    /// Two-point formula for chains of two, the sum otherwise.
    #[default]
    Auto,
    #[value(name = "two_tp")]
    TwoTp,
    Sum,
    Nu,
    Exact,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GraphSection {
    pub search_box: Rect,
    pub half_width: Option<f64>,
    /// Mirror the upper half plane; only valid for fields real on the real axis.
    pub symmetrize: bool,
    pub anti_stokes: bool,
    pub raster: usize,
}

impl Default for GraphSection {
    fn default() -> Self {
        let g = GraphOptions::default();
        GraphSection {
            search_box: g.search,
            half_width: g.half_width,
            symmetrize: g.symmetrize,
            anti_stokes: g.anti_stokes,
            raster: g.raster,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Outputs {
    pub graph: Option<String>,
    pub amplitude: Option<String>,
    pub oracle: Option<String>,
    pub sweep: Option<String>,
    pub compare: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub model: Model,
    #[serde(default = "one")]
    pub mu: f64,
    /// Poles of B^2 for Berman and custom models.
    #[serde(default)]
    pub poles: Vec<PoleSpec>,
    #[serde(rename = "T", default)]
    pub t: Option<f64>,
    #[serde(rename = "T_list", default)]
    pub t_list: Option<Vec<f64>>,
    /// Oracle settings; the default integrates below the real axis.
    #[serde(default = "contour_settings")]
    pub integration: IntegrationSettings,
    #[serde(default)]
    pub graph: GraphSection,
    #[serde(default)]
    pub amplitude: AmplitudeOptions,
    #[serde(default)]
    pub chi_order: u8,
    #[serde(default)]
    pub method: MethodChoice,
    /// An existing sweep CSV for `compare`; computed afresh when absent.
    #[serde(default)]
    pub sweep_table: Option<String>,
    #[serde(default)]
    pub outputs: Outputs,
}

fn one() -> f64 {
    1.0
}

fn contour_settings() -> IntegrationSettings {
    IntegrationSettings::contour()
}

impl Scenario {
    pub fn from_json(text: &str) -> Result<Scenario, CliError> {
        let s: Scenario = serde_json::from_str(text).map_err(|e| CliError::Validation(format!("scenario: {e}")))?;
        s.check()?;
        Ok(s)
    }

    pub fn load(path: &Path) -> Result<Scenario, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Validation(format!("cannot read {}: {e}", path.display())))?;
        Scenario::from_json(&text)
    }

    fn check(&self) -> Result<(), CliError> {
        let bad = |m: String| Err(CliError::Validation(m));
        if let Some(t) = self.t {
            if !(t > 0.0 && t.is_finite()) {
                return bad(format!("T must be positive, got {t}"));
            }
        }
        if let Some(l) = &self.t_list {
            if l.is_empty() || l.iter().any(|t| !(*t > 0.0 && t.is_finite())) {
                return bad("T_list must hold positive values".into());
            }
            if l.windows(2).any(|w| w[1] <= w[0]) {
                return bad("T_list must be strictly ascending without duplicates".into());
            }
        }
        if self.chi_order > 1 {
            return bad(format!("chi_order must be 0 or 1, got {}", self.chi_order));
        }
        let b = &self.graph.search_box;
        if !(b.re_min < b.re_max && b.im_min < b.im_max) {
            return bad("graph.search_box is empty".into());
        }
        if !(self.graph.raster >= 16 && self.graph.raster <= 4096) {
            return bad(format!("graph.raster must be in [16, 4096], got {}", self.graph.raster));
        }
        self.integration.validate().map_err(|e| CliError::Validation(format!("integration: {e}")))?;
        Ok(())
    }

    pub fn field(&self) -> Result<FieldProfile, CliError> {
        let val = |e: String| CliError::Validation(e);
        let expr = |src: &str, key: &str| parse(src).map_err(|e| val(format!("{key}: {e}")));
        let poles: Vec<Pole> =
            self.poles.iter().map(|p| Pole { at: Complex64::new(p.at[0], p.at[1]), order: p.order }).collect();
        let f = match &self.model {
            Model::Nikitin { b, delta_eps } => FieldProfile::nikitin(*b, *delta_eps, self.mu),
            Model::Berman { f, omega } => FieldProfile::berman(expr(f, "model.f")?, *omega, self.mu, poles),
            Model::Custom { components, adiabatic_components } => {
                let c = [
                    expr(&components[0], "model.components[0]")?,
                    expr(&components[1], "model.components[1]")?,
                    expr(&components[2], "model.components[2]")?,
                ];
                let c0 = match adiabatic_components {
                    Some(a) => Some([
                        expr(&a[0], "model.adiabatic_components[0]")?,
                        expr(&a[1], "model.adiabatic_components[1]")?,
                        expr(&a[2], "model.adiabatic_components[2]")?,
                    ]),
                    None => None,
                };
                FieldProfile::custom(c, c0, self.mu, poles)
            }
        };
        f.map_err(|e| val(format!("model: {e}")))
    }

    pub fn graph_options(&self) -> GraphOptions {
        GraphOptions {
            search: self.graph.search_box,
            half_width: self.graph.half_width,
            symmetrize: self.graph.symmetrize,
            anti_stokes: self.graph.anti_stokes,
            raster: self.graph.raster,
            ..GraphOptions::default()
        }
    }

    pub fn single_t(&self) -> Result<f64, CliError> {
        self.t.ok_or_else(|| CliError::Validation("missing key `T`".into()))
    }

    pub fn t_values(&self) -> Result<Vec<f64>, CliError> {
        self.t_list.clone().ok_or_else(|| CliError::Validation("missing key `T_list`".into()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use adiabat_core::oracle::PathMode;

    #[test]
    fn minimal_nikitin() {
        let s = Scenario::from_json(r#"{"model": {"type": "nikitin", "b": 1, "delta_eps": 2}, "T": 10}"#).unwrap();
        assert_eq!(s.mu, 1.0);
        assert_eq!(s.single_t().unwrap(), 10.0);
        assert!(s.field().is_ok());
        assert!(matches!(s.integration.path, PathMode::Contour { .. }));
    }

    #[test]
    fn unknown_and_missing_keys() {
        let e = Scenario::from_json(r#"{"model": {"type": "nikitin", "b": 1, "delta_eps": 2}, "colour": 1}"#);
        assert!(matches!(e, Err(CliError::Validation(m)) if m.contains("colour")));
        let e = Scenario::from_json(r#"{"T": 3}"#);
        assert!(matches!(e, Err(CliError::Validation(m)) if m.contains("model")));
    }

    #[test]
    fn t_list_checks() {
        let base = r#"{"model": {"type": "nikitin", "b": 1, "delta_eps": 2}, "T_list": LIST}"#;
        assert!(Scenario::from_json(&base.replace("LIST", "[5, 10]")).is_ok());
        assert!(Scenario::from_json(&base.replace("LIST", "[5, 5]")).is_err());
        assert!(Scenario::from_json(&base.replace("LIST", "[10, 5]")).is_err());
        assert!(Scenario::from_json(&base.replace("LIST", "[-1]")).is_err());
    }

    #[test]
    fn bad_expression_names_the_key() {
        let s = Scenario::from_json(r#"{"model": {"type": "berman", "f": "1/(1+", "omega": 1}}"#).unwrap();
        assert!(matches!(s.field(), Err(CliError::Validation(m)) if m.contains("model.f")));
    }
}
