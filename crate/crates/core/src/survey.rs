//! Site radio survey: CSV intake, calibration and the per-point report.

use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::Read;
use thiserror::Error;

use crate::link::{
    fit_site_excess, free_space_loss, is_reachable, predict_rssi, LinkError, Obstruction,
    RadioConfig, SiteModel, SurveyPoint,
};

/// The nine range-test points measured at the farm, as bundled CSV.
pub const TABLE1_CSV: &str = include_str!("../data/table1.csv");

#[derive(Debug, Error)]
pub enum SurveyError {
    #[error("survey CSV has no data rows")]
    Empty,
    #[error("line {line}: {message}")]
    Row { line: usize, message: String },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Link(#[from] LinkError),
}

#[derive(Debug, Deserialize)]
struct CsvRow {
    label: String,
    distance_m: f64,
    rssi_dbm: Option<f64>,
    #[serde(default)]
    obstruction: Option<String>,
}

/// Parse `label,distance_m,rssi_dbm,obstruction`; an empty `rssi_dbm` means no signal.
pub fn parse_survey_csv<R: Read>(reader: R) -> Result<Vec<SurveyPoint>, SurveyError> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut points = Vec::new();
    for (i, row) in rdr.deserialize::<CsvRow>().enumerate() {
        let line = i + 2;
        let row = row.map_err(|e| SurveyError::Row {
            line,
            message: e.to_string(),
        })?;
        let obstruction = row
            .obstruction
            .as_deref()
            .unwrap_or("none")
            .parse::<Obstruction>()
            .map_err(|e| SurveyError::Row {
                line,
                message: e.to_string(),
            })?;
        let point = SurveyPoint {
            label: row.label,
            distance_km: row.distance_m / 1000.0,
            measured_rssi_dbm: row.rssi_dbm,
            obstruction,
        };
        point.validate().map_err(|e| SurveyError::Row {
            line,
            message: e.to_string(),
        })?;
        points.push(point);
    }
    if points.is_empty() {
        return Err(SurveyError::Empty);
    }
    Ok(points)
}

pub fn table1_points() -> Vec<SurveyPoint> {
    parse_survey_csv(TABLE1_CSV.as_bytes()).expect("bundled survey table is valid")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurveyRow {
    pub label: String,
    pub distance_m: f64,
    pub obstruction: Obstruction,
    pub measured_rssi_dbm: Option<f64>,
    pub free_space_loss_db: f64,
    pub predicted_rssi_dbm: f64,
    /// predicted minus measured
    pub residual_db: Option<f64>,
    pub reachable: bool,
    /// Whether the reachability prediction agrees with what was observed.
    pub matches_observation: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurveyReport {
    pub radio: RadioConfig,
    pub site: SiteModel,
    pub rows: Vec<SurveyRow>,
    pub reachable: usize,
    pub unreachable: usize,
    pub max_abs_residual_db: Option<f64>,
    pub all_measured_reachable: bool,
}

impl SurveyReport {
    /// Fit the site excess from the points (unless `site_excess_db` is given)
    /// and classify every point.
    pub fn build(
        radio: &RadioConfig,
        obstruction_loss_db: &BTreeMap<Obstruction, f64>,
        site_excess_db: Option<f64>,
        points: &[SurveyPoint],
    ) -> Result<Self, SurveyError> {
        radio.validate()?;
        if points.is_empty() {
            return Err(SurveyError::Empty);
        }
        let excess = match site_excess_db {
            Some(v) => v,
            None => fit_site_excess(radio, points)?,
        };
        let site = SiteModel {
            site_excess_db: excess,
            obstruction_loss_db: obstruction_loss_db.clone(),
        };
        let rows = points
            .iter()
            .map(|p| {
                let predicted = predict_rssi(radio, &site, p)?;
                let reachable = is_reachable(radio, &site, p);
                Ok(SurveyRow {
                    label: p.label.clone(),
                    distance_m: p.distance_km * 1000.0,
                    obstruction: p.obstruction,
                    measured_rssi_dbm: p.measured_rssi_dbm,
                    free_space_loss_db: free_space_loss(p.distance_km, radio.frequency_mhz)?,
                    predicted_rssi_dbm: predicted,
                    residual_db: p.measured_rssi_dbm.map(|m| predicted - m),
                    reachable,
                    matches_observation: reachable == p.measured_rssi_dbm.is_some(),
                })
            })
            .collect::<Result<Vec<_>, LinkError>>()?;
        let reachable = rows.iter().filter(|r| r.reachable).count();
        let max_abs_residual_db = rows
            .iter()
            .filter_map(|r| r.residual_db.map(f64::abs))
            .fold(None, |acc: Option<f64>, r| Some(acc.map_or(r, |a| a.max(r))));
        let all_measured_reachable = rows
            .iter()
            .filter(|r| r.measured_rssi_dbm.is_some())
            .all(|r| r.reachable);
        Ok(Self {
            radio: *radio,
            site,
            unreachable: rows.len() - reachable,
            reachable,
            rows,
            max_abs_residual_db,
            all_measured_reachable,
        })
    }

    pub fn classification_matches(&self) -> bool {
        self.rows.iter().all(|r| r.matches_observation)
    }

    pub fn render_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "radio: {:.0} MHz SF{} {} kHz, {:.1} dBm, gains {:.1}/{:.1} dBi, sensitivity {:.1} dBm",
            self.radio.frequency_mhz,
            self.radio.spreading_factor,
            self.radio.bandwidth_hz / 1000,
            self.radio.tx_power_dbm,
            self.radio.tx_antenna_gain_dbi,
            self.radio.rx_antenna_gain_dbi,
            self.radio.rx_sensitivity_dbm
        );
        let _ = writeln!(out, "site excess: {:.2} dB", self.site.site_excess_db);
        let _ = writeln!(
            out,
            "{:<6} {:>8} {:<10} {:>10} {:>10} {:>10} {:>9}",
            "label", "dist_m", "obstr", "meas_dBm", "pred_dBm", "resid_dB", "reach"
        );
        for r in &self.rows {
            let measured = r
                .measured_rssi_dbm
                .map_or_else(|| "no signal".to_string(), |m| format!("{m:.1}"));
            let residual = r
                .residual_db
                .map_or_else(|| "-".to_string(), |v| format!("{v:+.2}"));
            let _ = writeln!(
                out,
                "{:<6} {:>8.1} {:<10} {:>10} {:>10.2} {:>10} {:>9}{}",
                r.label,
                r.distance_m,
                r.obstruction.to_string(),
                measured,
                r.predicted_rssi_dbm,
                residual,
                if r.reachable { "yes" } else { "no" },
                if r.matches_observation { "" } else { "  MISMATCH" }
            );
        }
        let _ = writeln!(
            out,
            "reachable: {}  unreachable: {}  max |residual|: {}",
            self.reachable,
            self.unreachable,
            self.max_abs_residual_db
                .map_or_else(|| "-".to_string(), |v| format!("{v:.2} dB"))
        );
        out
    }
}
