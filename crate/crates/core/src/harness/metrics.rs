//! Evaluation rows, their CSV form and R-stability.

use std::path::Path;

use crate::error::{io_err, Error, Result};

pub const METRICS_HEADER: [&str; 9] = [
    "experiment",
    "seed",
    "episode",
    "reward",
    "steps",
    "planning_decisions",
    "success",
    "sr_dist_micro",
    "sr_dist_macro",
];

/// One evaluation: means over the evaluation episodes after `episode`
/// training episodes. `experiment` also names the agent and any sub-condition,
/// e.g. `E1:hierarchical` or `E7:hierarchical:eta0.38`.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricRow {
    pub experiment: String,
    pub seed: u64,
    pub episode: usize,
    pub reward: f64,
    pub steps: f64,
    pub planning_decisions: f64,
    /// Fraction of evaluation episodes that reached the goal.
    pub success: f64,
    pub sr_dist_micro: Option<f64>,
    pub sr_dist_macro: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct MetricSeries {
    pub rows: Vec<MetricRow>,
}

impl MetricSeries {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, row: MetricRow) {
        self.rows.push(row);
    }

    /// Rows under one label, in order.
    pub fn labelled<'a>(&'a self, label: &'a str) -> impl Iterator<Item = &'a MetricRow> + 'a {
        self.rows.iter().filter(move |r| r.experiment == label)
    }

    /// Distinct labels in order of first appearance.
    pub fn labels(&self) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        for r in &self.rows {
            if !out.contains(&r.experiment) {
                out.push(r.experiment.clone());
            }
        }
        out
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
        w.write_record(METRICS_HEADER).map_err(csv_err)?;
        for r in &self.rows {
            let opt = |x: Option<f64>| x.map_or(String::new(), |v| v.to_string());
            w.write_record([
                r.experiment.clone(),
                r.seed.to_string(),
                r.episode.to_string(),
                r.reward.to_string(),
                r.steps.to_string(),
                r.planning_decisions.to_string(),
                r.success.to_string(),
                opt(r.sr_dist_micro),
                opt(r.sr_dist_macro),
            ])
            .map_err(csv_err)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Internal(e.to_string()))?;
        String::from_utf8(bytes).map_err(|e| Error::Internal(e.to_string()))
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(text.as_bytes());
        let header = reader.headers().map_err(csv_err)?;
        if header.iter().ne(METRICS_HEADER.iter().copied()) {
            return Err(format_err(format!("unexpected header {header:?}")));
        }
        let mut series = MetricSeries::new();
        for (i, rec) in reader.records().enumerate() {
            let rec = rec.map_err(csv_err)?;
            let line = i + 2;
            let field = |j: usize| rec.get(j).unwrap_or("");
            let f = |j: usize| -> Result<f64> {
                field(j).parse().map_err(|_| format_err(format!("line {line}: bad number {:?}", field(j))))
            };
            let opt = |j: usize| -> Result<Option<f64>> { if field(j).is_empty() { Ok(None) } else { f(j).map(Some) } };
            series.push(MetricRow {
                experiment: field(0).to_string(),
                seed: field(1).parse().map_err(|_| format_err(format!("line {line}: bad seed")))?,
                episode: field(2).parse().map_err(|_| format_err(format!("line {line}: bad episode")))?,
                reward: f(3)?,
                steps: f(4)?,
                planning_decisions: f(5)?,
                success: f(6)?,
                sr_dist_micro: opt(7)?,
                sr_dist_macro: opt(8)?,
            });
        }
        Ok(series)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv()?).map_err(io_err(path))
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::from_csv(&std::fs::read_to_string(path).map_err(io_err(path))?)
    }
}

fn csv_err(e: csv::Error) -> Error {
    format_err(e.to_string())
}

fn format_err(detail: String) -> Error {
    Error::Format { what: "metrics csv".into(), detail }
}

/// Mean of `(R_best − R_t) / (R_best − R_min + ε)` over the last
/// `window_fraction` of the series (at least one point).
pub fn r_stability(series: &[f64], window_fraction: f64) -> Result<f64> {
    if series.is_empty() {
        return Err(Error::Argument("empty return series".into()));
    }
    if !(window_fraction > 0.0 && window_fraction <= 1.0) {
        return Err(Error::Argument(format!("window fraction {window_fraction} outside (0,1]")));
    }
    const EPS: f64 = 1e-9;
    let best = series.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let worst = series.iter().copied().fold(f64::INFINITY, f64::min);
    let len = ((series.len() as f64 * window_fraction).ceil() as usize).clamp(1, series.len());
    let window = &series[series.len() - len..];
    let total: f64 = window.iter().map(|r| (best - r) / (best - worst + EPS)).sum();
    Ok(total / len as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(label: &str, episode: usize) -> MetricRow {
        MetricRow {
            experiment: label.into(),
            seed: 3,
            episode,
            reward: 95.7,
            steps: 44.0,
            planning_decisions: 3.5,
            success: 1.0,
            sr_dist_micro: Some(0.0123),
            sr_dist_macro: None,
        }
    }

    #[test]
    fn empty_series_is_header_only() {
        assert_eq!(MetricSeries::new().to_csv().unwrap(), format!("{}\n", METRICS_HEADER.join(",")));
    }

    #[test]
    fn csv_round_trip() {
        let mut s = MetricSeries::new();
        s.push(row("E1:hierarchical", 25));
        s.push(row("E1:flat", 25));
        s.push(MetricRow { reward: -0.1 / 3.0, sr_dist_macro: Some(1e-300), ..row("E1:flat", 50) });
        let back = MetricSeries::from_csv(&s.to_csv().unwrap()).unwrap();
        assert_eq!(back, s);
        assert_eq!(back.labels(), vec!["E1:hierarchical".to_string(), "E1:flat".to_string()]);
        assert!(MetricSeries::from_csv("a,b\n1,2\n").is_err());
    }

    #[test]
    fn stability_examples() {
        assert_eq!(r_stability(&[5.0, 5.0, 5.0], 0.25).unwrap(), 0.0);
        let rs = r_stability(&[0.0, 100.0, 100.0, 0.0], 0.5).unwrap();
        assert!((rs - 0.5).abs() < 1e-9);
        assert!(r_stability(&[], 0.5).is_err());
        assert!(r_stability(&[1.0], 0.0).is_err());
    }
}
