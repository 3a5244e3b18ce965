//! End-to-end runs: simulate a scenario, analyze captures, repeat in batches.

use rayon::prelude::*;
use thiserror::Error;

use crate::audio::{measure_mouth_to_ear, AudioError, MouthToEarResult};
use crate::codec::dequantize;
use crate::estimator::{
    correlate_traces, decode_display_trace, decode_pot_trace, estimate_remote, DecodedTrace, EstimatorError,
    LagSearch,
};
use crate::netsim::remote_capture;
use crate::report::{build_report, summary_table, LatencyReport, Summary};
use crate::rig::{capture_local, RawCapture, RigError};
use crate::scenario::{Mode, Scenario, ScenarioError};

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error("simulation failed: {0}")]
    Rig(#[from] RigError),
    #[error("audio measurement failed: {0}")]
    Audio(#[from] AudioError),
    #[error("estimation failed: {0}")]
    Estimation(#[from] EstimatorError),
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    /// Station A first; remote runs add station B.
    pub captures: Vec<RawCapture>,
    pub audio: Option<MouthToEarResult>,
    pub report: LatencyReport,
}

impl Scenario {
    pub fn lag_search(&self) -> LagSearch {
        LagSearch {
            max_lag: self.max_lag_ms,
            allow_negative: self.allow_negative_lag,
        }
    }
}

/// Runs the scenario's captures and audio measurement with its own seed.
pub fn simulate(scenario: &Scenario) -> Result<RunOutput, RunError> {
    scenario.validate()?;
    let seed = scenario.seed;
    let captures = match scenario.mode {
        Mode::Local => {
            let a = scenario.station(0)?;
            vec![capture_local(&a, &scenario.gps, seed, scenario.duration_ms)?]
        }
        Mode::Remote => {
            let (a, b) = remote_capture(&scenario.remote()?, seed, scenario.duration_ms)?;
            vec![a, b]
        }
    };
    let audio = scenario
        .audio
        .as_ref()
        .map(|cfg| measure_mouth_to_ear(cfg, seed))
        .transpose()?;
    let report = analyze(&captures, scenario.lag_search(), audio)?;
    Ok(RunOutput { captures, audio, report })
}

/// Motion-to-photon latency of the first capture, and with a second capture
/// the latency from the first station's platform to the second's display.
pub fn analyze(
    captures: &[RawCapture],
    search: LagSearch,
    audio: Option<MouthToEarResult>,
) -> Result<LatencyReport, RunError> {
    let first = captures.first().ok_or(EstimatorError::Empty)?;
    let pot = decode_pot_trace(first)?;
    let display = decode_display_trace(first)?;
    let local = correlate_traces(&pot, &display, search)?;
    let remote = match captures.get(1) {
        Some(second) => {
            let remote_display = decode_display_trace(second)?;
            let r = estimate_remote(&pot, &remote_display, search)?;
            Some((format!("{}->{}", first.station_id, second.station_id), r))
        }
        None => None,
    };
    Ok(build_report(
        &local,
        &display,
        audio,
        remote.as_ref().map(|(d, r)| (d.clone(), r)),
    ))
}

/// Outcome of `runs` seeded repetitions (seed, seed + 1, ...).
#[derive(Debug)]
pub struct BatchResult {
    pub base_seed: u64,
    pub reports: Vec<Result<LatencyReport, String>>,
}

impl BatchResult {
    pub fn failures(&self) -> Vec<(u64, &str)> {
        self.reports
            .iter()
            .enumerate()
            .filter_map(|(i, r)| r.as_ref().err().map(|e| (self.base_seed + i as u64, e.as_str())))
            .collect()
    }

    pub fn successes(&self) -> impl Iterator<Item = &LatencyReport> {
        self.reports.iter().filter_map(|r| r.as_ref().ok())
    }

    /// Per-metric statistics over the successful runs.
    pub fn summaries(&self) -> Vec<(&'static str, Summary<f64>)> {
        let ok: Vec<&LatencyReport> = self.successes().collect();
        let metric = |f: &dyn Fn(&LatencyReport) -> Option<f64>| -> Option<Summary<f64>> {
            let xs: Vec<f64> = ok.iter().filter_map(|r| f(r)).collect();
            Summary::from_samples(&xs)
        };
        let mut rows = Vec::new();
        let candidates: [(&'static str, Box<dyn Fn(&LatencyReport) -> Option<f64>>); 5] = [
            ("motion_to_photon_ms", Box::new(|r| Some(r.motion_to_photon_ms as f64))),
            ("remote_latency_ms", Box::new(|r| r.remote.as_ref().map(|x| x.latency_ms as f64))),
            ("mouth_to_ear_ms", Box::new(|r| r.mouth_to_ear_ms.map(|x| x as f64))),
            ("peak_coefficient", Box::new(|r| Some(r.diagnostics.peak_coefficient))),
            ("held_fraction", Box::new(|r| Some(r.diagnostics.held_fraction))),
        ];
        for (name, f) in candidates {
            if let Some(s) = metric(&*f) {
                rows.push((name, s));
            }
        }
        rows
    }

    pub fn to_text(&self) -> String {
        let mut s = summary_table(&self.summaries());
        for (seed, err) in self.failures() {
            s.push_str(&format!("FAILED seed={seed}: {err}\n"));
        }
        s
    }
}

/// Runs the scenario `runs` times in parallel with consecutive seeds.
pub fn run_batch(scenario: &Scenario, runs: usize) -> Result<BatchResult, ScenarioError> {
    scenario.validate()?;
    let base_seed = scenario.seed;
    let reports = (0..runs as u64)
        .into_par_iter()
        .map(|i| {
            let s = scenario.clone().with_seed(base_seed + i);
            simulate(&s).map(|o| o.report).map_err(|e| e.to_string())
        })
        .collect();
    Ok(BatchResult { base_seed, reports })
}

/// One row of plot data: time since the common start, and both traces as
/// angles.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlotRow {
    pub time_ms: f64,
    pub pot_angle: f64,
    pub display_angle: f64,
}

/// Puts a potentiometer trace and a display trace on a common UTC time axis
/// starting at the later of the two starts.
pub fn plot_series(pot: &DecodedTrace, display: &DecodedTrace, angle_range_deg: f64) -> Result<Vec<PlotRow>, EstimatorError> {
    if pot.is_empty() || display.is_empty() {
        return Err(EstimatorError::Empty);
    }
    let interval_us = pot.interval_ms * 1000.0;
    let offset = ((display.start_utc_us - pot.start_utc_us) as f64 / interval_us).round() as i64;
    let a = pot.values.get(offset.max(0) as usize..).unwrap_or(&[]);
    let b = display.values.get((-offset).max(0) as usize..).unwrap_or(&[]);
    if a.is_empty() || b.is_empty() {
        return Err(EstimatorError::Alignment { overlap: 0, required: 1 });
    }
    Ok(a.iter()
        .zip(b)
        .enumerate()
        .map(|(i, (&p, &d))| PlotRow {
            time_ms: i as f64 * pot.interval_ms,
            pot_angle: dequantize(p, angle_range_deg),
            display_angle: dequantize(d, angle_range_deg),
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn baseline_run_lands_in_the_expected_band() {
        let s = Scenario::preset("vive-baseline").unwrap();
        let out = simulate(&s).unwrap();
        let r = &out.report;
        assert!((3..=10).contains(&r.motion_to_photon_ms), "{}", r.to_text());
        assert!(r.diagnostics.peak_coefficient > 0.99);
        assert!(r.mouth_to_ear_ms.is_none() && r.remote.is_none());
        assert_eq!(out.captures.len(), 1);
    }

    #[test]
    fn remote_run_reports_both_directions_of_interest() {
        let s = Scenario::preset("remote-default").unwrap();
        let out = simulate(&s).unwrap();
        let remote = out.report.remote.as_ref().unwrap();
        assert_eq!(remote.direction, "A->B");
        assert!(remote.latency_ms > out.report.motion_to_photon_ms);
        assert_eq!(out.captures[1].station_id, "B");
    }

    #[test]
    fn batch_is_deterministic() {
        let s = Scenario::preset("vive-baseline").unwrap();
        let a = run_batch(&s, 3).unwrap().to_text();
        let b = run_batch(&s, 3).unwrap().to_text();
        assert_eq!(a, b);
    }

    #[test]
    fn single_run_batch_has_zero_sd() {
        let s = Scenario::preset("vive-baseline").unwrap();
        let b = run_batch(&s, 1).unwrap();
        assert!(b.summaries().iter().all(|(_, s)| s.sd == 0.0));
    }
}
