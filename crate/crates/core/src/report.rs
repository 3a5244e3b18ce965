//! Latency reports and batch statistics.
//!
//! Reports are written as `key = value` lines in a fixed order. The text is
//! valid TOML, so [`LatencyReport::parse`] reads it back with the toml crate.

use std::fmt::Write as _;

use serde::Deserialize;

use crate::audio::MouthToEarResult;
use crate::estimator::{CorrelationResult, DecodedTrace};
use crate::scalar::Real;

/// Peaks below this suggest a failed decode or a mismatched trace pair.
pub const MIN_TRUSTED_PEAK: f64 = 0.9;

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RemoteResult {
    pub direction: String,
    pub latency_ms: i64,
    pub peak_coefficient: f64,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Diagnostics {
    pub peak_coefficient: f64,
    pub decode_error_rate: f64,
    pub held_fraction: f64,
    pub trace_length: usize,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LatencyReport {
    pub motion_to_photon_ms: i64,
    #[serde(default)]
    pub mouth_to_ear_ms: Option<u64>,
    #[serde(default)]
    pub remote: Option<RemoteResult>,
    pub diagnostics: Diagnostics,
    #[serde(default)]
    pub warnings: Vec<String>,
}

/// Assembles a report from a local correlation between a station's pot and
/// display traces, plus optional audio and remote results.
pub fn build_report(
    local: &CorrelationResult<f64>,
    display: &DecodedTrace,
    audio: Option<MouthToEarResult>,
    remote: Option<(String, &CorrelationResult<f64>)>,
) -> LatencyReport {
    let mut warnings = Vec::new();
    let mut check = |what: &str, r: &CorrelationResult<f64>| {
        if r.peak_coefficient < MIN_TRUSTED_PEAK {
            warnings.push(format!(
                "{what} peak coefficient {:.3} is below {MIN_TRUSTED_PEAK}",
                r.peak_coefficient
            ));
        }
        if r.best_lag_ms < 0 {
            warnings.push(format!("{what} lag {} ms is negative", r.best_lag_ms));
        }
    };
    check("local", local);
    if let Some((_, r)) = &remote {
        check("remote", r);
    }
    LatencyReport {
        motion_to_photon_ms: local.best_lag_ms,
        mouth_to_ear_ms: audio.map(|a| a.latency_ms),
        remote: remote.map(|(direction, r)| RemoteResult {
            direction,
            latency_ms: r.best_lag_ms,
            peak_coefficient: r.peak_coefficient,
        }),
        diagnostics: Diagnostics {
            peak_coefficient: local.peak_coefficient,
            decode_error_rate: display.diagnostics.decode_error_rate,
            held_fraction: display.diagnostics.held_fraction,
            trace_length: display.len(),
        },
        warnings,
    }
}

impl LatencyReport {
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let w = &mut s;
        writeln!(w, "motion_to_photon_ms = {}", self.motion_to_photon_ms).unwrap();
        if let Some(m) = self.mouth_to_ear_ms {
            writeln!(w, "mouth_to_ear_ms = {m}").unwrap();
        }
        if let Some(r) = &self.remote {
            writeln!(w, "remote.direction = {}", quote(&r.direction)).unwrap();
            writeln!(w, "remote.latency_ms = {}", r.latency_ms).unwrap();
            writeln!(w, "remote.peak_coefficient = {:.6}", r.peak_coefficient).unwrap();
        }
        let d = &self.diagnostics;
        writeln!(w, "diagnostics.peak_coefficient = {:.6}", d.peak_coefficient).unwrap();
        writeln!(w, "diagnostics.decode_error_rate = {:.6}", d.decode_error_rate).unwrap();
        writeln!(w, "diagnostics.held_fraction = {:.6}", d.held_fraction).unwrap();
        writeln!(w, "diagnostics.trace_length = {}", d.trace_length).unwrap();
        let warnings: Vec<String> = self.warnings.iter().map(|x| quote(x)).collect();
        writeln!(w, "warnings = [{}]", warnings.join(", ")).unwrap();
        s
    }

    pub fn parse(text: &str) -> Result<Self, String> {
        toml::from_str(text).map_err(|e| e.to_string())
    }

    pub fn has_warnings(&self) -> bool {
        !self.warnings.is_empty()
    }
}

fn quote(s: &str) -> String {
    format!("\"{}\"", s.replace('\\', "\\\\").replace('"', "\\\""))
}

/// Avg/Min/Max/SD over a set of runs. SD is the sample standard deviation
/// and is zero for a single run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Summary<T> {
    pub runs: usize,
    pub avg: T,
    pub min: T,
    pub max: T,
    pub sd: T,
}

impl<T: Real> Summary<T> {
    pub fn from_samples(samples: &[T]) -> Option<Self> {
        let n = samples.len();
        if n == 0 {
            return None;
        }
        let avg = samples.iter().copied().sum::<T>() / T::from_count(n);
        let min = samples.iter().copied().fold(T::infinity(), T::min);
        let max = samples.iter().copied().fold(T::neg_infinity(), T::max);
        let sd = if n == 1 {
            T::zero()
        } else {
            let ss: T = samples.iter().map(|&x| (x - avg) * (x - avg)).sum();
            (ss / T::from_count(n - 1)).sqrt()
        };
        Some(Summary { runs: n, avg, min, max, sd })
    }
}

/// Fixed-width table with one row per metric, in the given order.
pub fn summary_table(rows: &[(&str, Summary<f64>)]) -> String {
    let mut s = format!("{:<24}{:>6}{:>12}{:>12}{:>12}{:>12}\n", "metric", "runs", "avg", "min", "max", "sd");
    for (name, r) in rows {
        writeln!(
            s,
            "{:<24}{:>6}{:>12.3}{:>12.3}{:>12.3}{:>12.3}",
            name, r.runs, r.avg, r.min, r.max, r.sd
        )
        .unwrap();
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimator::{DecodeDiagnostics, TraceSource};

    fn corr(lag: i64, peak: f64) -> CorrelationResult<f64> {
        CorrelationResult {
            best_lag_ms: lag,
            first_lag: 0,
            coefficients: vec![],
            peak_coefficient: peak,
        }
    }

    fn display() -> DecodedTrace {
        DecodedTrace {
            values: vec![],
            source: TraceSource::Display,
            start_utc_us: 0,
            interval_ms: 1.0,
            diagnostics: DecodeDiagnostics {
                held_fraction: 0.75,
                decode_error_rate: 0.01,
            },
        }
    }

    #[test]
    fn local_only_report_has_no_audio_or_remote() {
        let r = build_report(&corr(7, 0.99), &display(), None, None);
        let text = r.to_text();
        assert!(!text.contains("mouth_to_ear"));
        assert!(!text.contains("remote"));
        assert!(text.starts_with("motion_to_photon_ms = 7\n"));
        assert!(!r.has_warnings());
    }

    #[test]
    fn text_round_trips() {
        let audio = MouthToEarResult { intervals: 113, latency_ms: 113 };
        let r = build_report(&corr(-2, 0.5), &display(), Some(audio), Some(("A->B".into(), &corr(25, 0.97))));
        assert_eq!(r.warnings.len(), 2);
        assert_eq!(LatencyReport::parse(&r.to_text()).unwrap(), r);
    }

    #[test]
    fn field_order_is_stable() {
        let r = build_report(
            &corr(7, 0.99),
            &display(),
            Some(MouthToEarResult { intervals: 1, latency_ms: 1 }),
            Some(("A->B".into(), &corr(25, 0.97))),
        );
        let text = r.to_text();
        let keys: Vec<&str> = text.lines().map(|l| l.split(" = ").next().unwrap()).collect();
        assert_eq!(
            keys,
            [
                "motion_to_photon_ms",
                "mouth_to_ear_ms",
                "remote.direction",
                "remote.latency_ms",
                "remote.peak_coefficient",
                "diagnostics.peak_coefficient",
                "diagnostics.decode_error_rate",
                "diagnostics.held_fraction",
                "diagnostics.trace_length",
                "warnings"
            ]
        );
    }

    #[test]
    fn low_peak_sets_a_warning() {
        let r = build_report(&corr(7, 0.85), &display(), None, None);
        assert!(r.has_warnings());
    }

    #[test]
    fn summary_statistics() {
        let s = Summary::from_samples(&[5.0, 7.0, 9.0]).unwrap();
        assert_eq!((s.avg, s.min, s.max, s.sd), (7.0, 5.0, 9.0, 2.0));
        let one = Summary::from_samples(&[4.0f32]).unwrap();
        assert_eq!(one.sd, 0.0);
        assert!(Summary::<f64>::from_samples(&[]).is_none());
    }

    #[test]
    fn table_has_paper_columns() {
        let t = summary_table(&[("motion_to_photon_ms", Summary::from_samples(&[5.0, 6.0]).unwrap())]);
        assert!(t.lines().next().unwrap().split_whitespace().eq(["metric", "runs", "avg", "min", "max", "sd"]));
    }
}
