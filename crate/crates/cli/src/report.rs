//! Sweep tables and the comparison report built from them.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::CliError;

pub const SCHEMA_VERSION: u32 = 1;

pub const SWEEP_HEADER: [&str; 7] = ["T", "P_oracle", "P_adiabatic", "rel_diff", "exponent", "phase", "winding_n12"];

/// Rows with |cos(phase)| below this sit near an interference zero.
pub const ZERO_FLAG: f64 = 0.1;

/// One row of a sweep. `phase` is the argument x of the cos^2 x factor of
/// two-point formulas; absent for longer chains.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    #[serde(rename = "T")]
    pub t: f64,
    #[serde(rename = "P_oracle")]
    pub p_oracle: Option<f64>,
    #[serde(rename = "P_adiabatic")]
    pub p_adiabatic: Option<f64>,
    pub rel_diff: Option<f64>,
    pub exponent: Option<f64>,
    pub phase: Option<f64>,
    pub winding_n12: Option<i64>,
}

impl SweepRow {
    pub fn new(t: f64, p_oracle: Option<f64>, p_adiabatic: Option<f64>) -> SweepRow {
        let rel_diff = match (p_oracle, p_adiabatic) {
            (Some(o), Some(a)) if o > 0.0 => Some((a - o).abs() / o),
            _ => None,
        };
        SweepRow { t, p_oracle, p_adiabatic, rel_diff, exponent: None, phase: None, winding_n12: None }
    }
}

fn csv_err(e: csv::Error) -> CliError {
    match e.kind() {
        csv::ErrorKind::Io(_) => CliError::Io(e.to_string()),
        _ => CliError::Validation(format!("sweep table: {e}")),
    }
}

pub fn write_sweep_csv<W: Write>(rows: &[SweepRow], w: W) -> Result<(), CliError> {
    let mut wr = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).has_headers(false).from_writer(w);
    wr.write_record(SWEEP_HEADER).map_err(csv_err)?;
    for r in rows {
        wr.serialize(r).map_err(csv_err)?;
    }
    wr.flush().map_err(|e| CliError::Io(e.to_string()))
}

pub fn read_sweep_csv<R: Read>(r: R) -> Result<Vec<SweepRow>, CliError> {
    let mut rd = csv::ReaderBuilder::new().from_reader(r);
    let header = rd.headers().map_err(csv_err)?.clone();
    if header.iter().ne(SWEEP_HEADER) {
        return Err(CliError::Validation(format!(
            "sweep table header must be `{}`, got `{}`",
            SWEEP_HEADER.join(","),
            header.iter().collect::<Vec<_>>().join(",")
        )));
    }
    rd.deserialize().map(|r| r.map_err(csv_err)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareRow {
    #[serde(rename = "T")]
    pub t: f64,
    #[serde(rename = "P_oracle")]
    pub p_oracle: f64,
    #[serde(rename = "P_adiabatic")]
    pub p_adiabatic: f64,
    pub rel_diff: f64,
    pub cos_factor: Option<f64>,
    pub near_zero: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Fit {
    /// Slope of log(rel_diff) against log(1/T).
    pub order: f64,
    pub std_error: Option<f64>,
    pub intercept: f64,
    pub rows_used: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareReport {
    pub schema_version: u32,
    pub rows: Vec<CompareRow>,
    pub fit: Option<Fit>,
    pub warnings: Vec<String>,
}

/// Relative differences, zero flags and the decay-order fit. Every row needs
/// both probabilities.
pub fn compare_report(rows: &[SweepRow]) -> Result<CompareReport, CliError> {
    if rows.is_empty() {
        return Err(CliError::Validation("the sweep table is empty".into()));
    }
    let mut out = Vec::with_capacity(rows.len());
    for r in rows {
        let (Some(o), Some(a)) = (r.p_oracle, r.p_adiabatic) else {
            return Err(CliError::Validation(format!(
                "row T = {} lacks {}; compare needs both oracle and asymptotic columns",
                r.t,
                if r.p_oracle.is_none() { "P_oracle" } else { "P_adiabatic" }
            )));
        };
        let rel = if o > 0.0 { (a - o).abs() / o } else { f64::INFINITY };
        let cos_factor = r.phase.map(f64::cos);
        out.push(CompareRow {
            t: r.t,
            p_oracle: o,
            p_adiabatic: a,
            rel_diff: rel,
            cos_factor,
            near_zero: cos_factor.is_some_and(|c| c.abs() < ZERO_FLAG),
        });
    }
    let mut warnings = vec![];
    let usable: Vec<(f64, f64)> = out
        .iter()
        .filter(|r| !r.near_zero && r.t > 0.0 && r.rel_diff > 0.0 && r.rel_diff.is_finite())
        .map(|r| ((1.0 / r.t).ln(), r.rel_diff.ln()))
        .collect();
    let fit = if usable.len() < 3 {
        warnings.push(format!("only {} usable row(s); the decay-order fit needs 3 and was skipped", usable.len()));
        None
    } else {
        Some(least_squares(&usable))
    };
    Ok(CompareReport { schema_version: SCHEMA_VERSION, rows: out, fit, warnings })
}

fn least_squares(p: &[(f64, f64)]) -> Fit {
    let n = p.len() as f64;
    let mx = p.iter().map(|q| q.0).sum::<f64>() / n;
    let my = p.iter().map(|q| q.1).sum::<f64>() / n;
    let sxx: f64 = p.iter().map(|q| (q.0 - mx).powi(2)).sum();
    let sxy: f64 = p.iter().map(|q| (q.0 - mx) * (q.1 - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ssr: f64 = p.iter().map(|q| (q.1 - intercept - slope * q.0).powi(2)).sum();
    let std_error = (p.len() > 2).then(|| (ssr / (n - 2.0) / sxx).sqrt());
    Fit { order: slope, std_error, intercept, rows_used: p.len() }
}

pub fn write_compare_csv<W: Write>(rep: &CompareReport, w: W) -> Result<(), CliError> {
    let mut wr = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(w);
    for r in &rep.rows {
        wr.serialize(r).map_err(csv_err)?;
    }
    wr.flush().map_err(|e| CliError::Io(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(t: f64, o: f64, a: f64, phase: Option<f64>) -> SweepRow {
        SweepRow { phase, ..SweepRow::new(t, Some(o), Some(a)) }
    }

    #[test]
    fn csv_round_trip() {
        let rows = vec![
            SweepRow {
                exponent: Some(17.6),
                phase: Some(0.25),
                winding_n12: Some(2),
                ..SweepRow::new(5.0, Some(2e-8), Some(2.1e-8))
            },
            SweepRow::new(10.0, Some(1.6e-15), None),
        ];
        let mut buf = vec![];
        write_sweep_csv(&rows, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("T,P_oracle,P_adiabatic,rel_diff,exponent,phase,winding_n12\n"));
        assert!(!text.contains('\r'));
        assert_eq!(read_sweep_csv(&buf[..]).unwrap(), rows);
    }

    #[test]
    fn fit_recovers_a_power_law() {
        let rows: Vec<_> = [5.0, 10.0, 20.0, 40.0].iter().map(|&t| row(t, 1.0, 1.0 + 0.3 / t, None)).collect();
        let rep = compare_report(&rows).unwrap();
        let fit = rep.fit.unwrap();
        assert!((fit.order - 1.0).abs() < 1e-9);
        assert!(fit.std_error.unwrap() < 1e-9);
        assert_eq!(rep.schema_version, SCHEMA_VERSION);
    }

    #[test]
    fn zeros_are_flagged_and_skip_the_fit() {
        let h = std::f64::consts::FRAC_PI_2;
        let rows: Vec<_> = [5.0, 10.0, 20.0].iter().map(|&t| row(t, 1.0, 1.1, Some(h + 0.01))).collect();
        let rep = compare_report(&rows).unwrap();
        assert!(rep.rows.iter().all(|r| r.near_zero));
        assert!(rep.fit.is_none());
        assert_eq!(rep.warnings.len(), 1);
    }

    #[test]
    fn single_method_is_rejected() {
        let rows = vec![SweepRow::new(5.0, Some(1.0), None)];
        assert!(matches!(compare_report(&rows), Err(CliError::Validation(m)) if m.contains("P_adiabatic")));
    }

    #[test]
    fn wrong_header_is_rejected() {
        let text = "T,P\n1,2\n";
        assert!(matches!(read_sweep_csv(text.as_bytes()), Err(CliError::Validation(_))));
    }

    proptest::proptest! {
        #[test]
        fn round_trip_any_rows(
            ts in proptest::collection::btree_set(1u32..1000, 1..8),
            p in 1e-300f64..1.0,
            e in proptest::option::of(0.0f64..500.0),
            w in proptest::option::of(-4i64..5),
        ) {
            let rows: Vec<SweepRow> = ts
                .iter()
                .map(|&t| SweepRow { exponent: e, winding_n12: w, ..SweepRow::new(t as f64 / 4.0, Some(p), Some(p * 1.01)) })
                .collect();
            let mut buf = vec![];
            write_sweep_csv(&rows, &mut buf).unwrap();
            proptest::prop_assert_eq!(read_sweep_csv(&buf[..]).unwrap(), rows);
        }

        #[test]
        fn fit_order_matches_the_power(k in 0.2f64..3.0, c in 1e-4f64..1.0) {
            let rows: Vec<_> = [3.0, 6.0, 12.0, 24.0].iter().map(|&t| row(t, 1.0, 1.0 + c * t.powf(-k), None)).collect();
            let fit = compare_report(&rows).unwrap().fit.unwrap();
            proptest::prop_assert!((fit.order - k).abs() < 1e-8);
        }
    }
}
