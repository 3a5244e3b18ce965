//! Trace decoding and lag estimation by normalized cross-correlation.

use thiserror::Error;

use crate::codec::{
    classify_luminance, decode, level_residual, quantize_angle_saturating, AngleCode, LuminanceVector,
    MAX_DIGIT,
};
use crate::rig::RawCapture;
use crate::scalar::Real;

/// A sample counts as lit when its brightest channel reaches half a level.
pub const LIT_THRESHOLD: f64 = 0.5 / MAX_DIGIT as f64;
/// An accepted sample whose channel lies further than this from every level
/// is counted as a probable decode error.
pub const RESIDUAL_TOLERANCE: f64 = 0.25 / MAX_DIGIT as f64;
/// Lit runs up to this many samples come from a single strobe flash.
const STROBE_RUN_MAX: usize = 3;
/// Traces must be at least this many times longer than the lag range.
pub const MIN_LENGTH_FACTOR: usize = 10;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EstimatorError {
    #[error("display never lit in {len} samples")]
    AllBlack { len: usize },
    #[error("trace of {len} samples is shorter than {required} (10 x max lag)")]
    TraceTooShort { len: usize, required: usize },
    #[error("{which} trace is constant; correlation undefined")]
    ZeroVariance { which: &'static str },
    #[error("UTC overlap of {overlap} samples is shorter than {required}")]
    Alignment { overlap: usize, required: usize },
    #[error("sample intervals differ ({a} ms vs {b} ms)")]
    IntervalMismatch { a: f64, b: f64 },
    #[error("capture is empty")]
    Empty,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TraceSource {
    Potentiometer,
    Display,
}

/// Quality figures of a display decode.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct DecodeDiagnostics {
    /// Fraction of samples that carry a held (not freshly decoded) value.
    pub held_fraction: f64,
    /// Fraction of accepted samples with a channel off every level.
    pub decode_error_rate: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecodedTrace {
    pub values: Vec<AngleCode>,
    pub source: TraceSource,
    pub start_utc_us: i64,
    pub interval_ms: f64,
    pub diagnostics: DecodeDiagnostics,
}

impl DecodedTrace {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn as_reals<T: Real>(&self) -> Vec<T> {
        self.values
            .iter()
            .map(|c| T::from_u16(c.value()).unwrap())
            .collect()
    }
}

/// Quantizes the normalized potentiometer readings to codes.
pub fn decode_pot_trace(capture: &RawCapture) -> Result<DecodedTrace, EstimatorError> {
    if capture.is_empty() {
        return Err(EstimatorError::Empty);
    }
    let values = capture
        .pot
        .iter()
        .map(|&p| quantize_angle_saturating(p, 1.0).expect("unit range is valid"))
        .collect();
    Ok(DecodedTrace {
        values,
        source: TraceSource::Potentiometer,
        start_utc_us: capture.start_utc_us,
        interval_ms: capture.interval_ms,
        diagnostics: DecodeDiagnostics::default(),
    })
}

/// Decodes the photosensor channels to one code per sample.
///
/// A strobed display is lit for one or two samples per frame. Of each short
/// lit run only the brightest sample is decoded, since its neighbours are
/// caught mid-rise or mid-decay. Longer runs come from a persistent display
/// and every sample in them is decoded. All other samples repeat the last
/// decoded code, and samples before the first decode take that first code.
/// Short runs touching either end of the capture are skipped.
///
/// Code 0 lights no channel and so cannot be told apart from a dark display;
/// it is held over like any black phase.
pub fn decode_display_trace(capture: &RawCapture) -> Result<DecodedTrace, EstimatorError> {
    let n = capture.photo.len();
    if n == 0 {
        return Err(EstimatorError::Empty);
    }
    let lit: Vec<bool> = capture
        .photo
        .iter()
        .map(|p| LuminanceVector(*p).peak() >= LIT_THRESHOLD)
        .collect();

    let mut accepted = vec![false; n];
    let mut i = 0;
    while i < n {
        if !lit[i] {
            i += 1;
            continue;
        }
        let end = (i..n).find(|&j| !lit[j]).unwrap_or(n);
        if end - i <= STROBE_RUN_MAX {
            // A flash cut off by the start or end of the capture has no
            // trustworthy brightest sample.
            if i == 0 || end == n {
                i = end;
                continue;
            }
            let best = (i..end)
                .max_by(|&a, &b| {
                    let (sa, sb) = (LuminanceVector(capture.photo[a]).total(), LuminanceVector(capture.photo[b]).total());
                    // Reverse index order on ties so the earliest wins.
                    sa.total_cmp(&sb).then(b.cmp(&a))
                })
                .expect("run is non-empty");
            accepted[best] = true;
        } else {
            accepted[i..end].iter_mut().for_each(|a| *a = true);
        }
        i = end;
    }

    let first = accepted
        .iter()
        .position(|&a| a)
        .ok_or(EstimatorError::AllBlack { len: n })?;
    let mut current = decode(classify_luminance(&LuminanceVector(capture.photo[first])));
    let mut values = Vec::with_capacity(n);
    let mut n_accepted = 0usize;
    let mut n_suspect = 0usize;
    for (k, p) in capture.photo.iter().enumerate() {
        if accepted[k] {
            current = decode(classify_luminance(&LuminanceVector(*p)));
            n_accepted += 1;
            if p.iter().any(|&v| level_residual(v) > RESIDUAL_TOLERANCE) {
                n_suspect += 1;
            }
        }
        values.push(current);
    }
    Ok(DecodedTrace {
        values,
        source: TraceSource::Display,
        start_utc_us: capture.start_utc_us,
        interval_ms: capture.interval_ms,
        diagnostics: DecodeDiagnostics {
            held_fraction: (n - n_accepted) as f64 / n as f64,
            decode_error_rate: n_suspect as f64 / n_accepted as f64,
        },
    })
}

/// Range of candidate lags, in samples.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LagSearch {
    pub max_lag: usize,
    /// Also try `-max_lag..0`.
    pub allow_negative: bool,
}

impl LagSearch {
    pub fn causal(max_lag: usize) -> Self {
        LagSearch {
            max_lag,
            allow_negative: false,
        }
    }

    pub fn symmetric(max_lag: usize) -> Self {
        LagSearch {
            max_lag,
            allow_negative: true,
        }
    }

    pub fn min_lag(&self) -> i64 {
        if self.allow_negative {
            -(self.max_lag as i64)
        } else {
            0
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationResult<T> {
    pub best_lag_ms: i64,
    /// Lag of `coefficients[0]`; the rest follow in steps of one.
    pub first_lag: i64,
    pub coefficients: Vec<T>,
    pub peak_coefficient: T,
}

impl<T: Copy> CorrelationResult<T> {
    pub fn coefficient_at(&self, lag: i64) -> Option<T> {
        let idx = usize::try_from(lag - self.first_lag).ok()?;
        self.coefficients.get(idx).copied()
    }

    pub fn lags(&self) -> impl Iterator<Item = i64> + '_ {
        (0..self.coefficients.len() as i64).map(move |i| self.first_lag + i)
    }
}

/// Pearson correlation of `reference` against `delayed` for each candidate
/// lag. A positive lag `L` pairs `reference[i]` with `delayed[i + L]`, so
/// the lag of the peak is how far `delayed` trails `reference`. Only the
/// first `min(len)` samples of each input take part.
pub fn cross_correlate<T: Real>(
    reference: &[T],
    delayed: &[T],
    search: LagSearch,
) -> Result<CorrelationResult<T>, EstimatorError> {
    let n = reference.len().min(delayed.len());
    let required = (MIN_LENGTH_FACTOR * search.max_lag).max(search.max_lag + 2);
    if n < required {
        return Err(EstimatorError::TraceTooShort { len: n, required });
    }
    let x = center(&reference[..n]).ok_or(EstimatorError::ZeroVariance { which: "reference" })?;
    let y = center(&delayed[..n]).ok_or(EstimatorError::ZeroVariance { which: "delayed" })?;
    let px = Prefix::new(&x);
    let py = Prefix::new(&y);

    let coefficients: Vec<T> = (search.min_lag()..=search.max_lag as i64)
        .map(|lag| {
            let shift = lag.unsigned_abs() as usize;
            let m = n - shift;
            // Windows: x[xs..xs+m] paired with y[ys..ys+m].
            let (xs, ys) = if lag >= 0 { (0, shift) } else { (shift, 0) };
            let sxy: T = x[xs..xs + m]
                .iter()
                .zip(&y[ys..ys + m])
                .map(|(&a, &b)| a * b)
                .sum();
            pearson(sxy, px.window(xs, m), py.window(ys, m), m)
        })
        .collect();

    let (best_idx, peak) = coefficients
        .iter()
        .copied()
        .enumerate()
        .fold((0, T::neg_infinity()), |(bi, bv), (i, v)| if v > bv { (i, v) } else { (bi, bv) });
    Ok(CorrelationResult {
        best_lag_ms: search.min_lag() + best_idx as i64,
        first_lag: search.min_lag(),
        coefficients,
        peak_coefficient: peak,
    })
}

/// Subtracts the mean; `None` for a constant input.
fn center<T: Real>(v: &[T]) -> Option<Vec<T>> {
    let mean = v.iter().copied().sum::<T>() / T::from_count(v.len());
    let out: Vec<T> = v.iter().map(|&a| a - mean).collect();
    out.iter().any(|&a| a != T::zero()).then_some(out)
}

struct Prefix<T> {
    sum: Vec<T>,
    sum_sq: Vec<T>,
}

impl<T: Real> Prefix<T> {
    fn new(v: &[T]) -> Self {
        let mut sum = Vec::with_capacity(v.len() + 1);
        let mut sum_sq = Vec::with_capacity(v.len() + 1);
        let (mut s, mut q) = (T::zero(), T::zero());
        sum.push(s);
        sum_sq.push(q);
        for &a in v {
            s = s + a;
            q = q + a * a;
            sum.push(s);
            sum_sq.push(q);
        }
        Prefix { sum, sum_sq }
    }

    /// `(Σ, Σ²)` over `start..start + len`.
    fn window(&self, start: usize, len: usize) -> (T, T) {
        (
            self.sum[start + len] - self.sum[start],
            self.sum_sq[start + len] - self.sum_sq[start],
        )
    }
}

fn pearson<T: Real>(sxy: T, (sx, sxx): (T, T), (sy, syy): (T, T), m: usize) -> T {
    let m = T::from_count(m);
    let cov = sxy - sx * sy / m;
    let vx = sxx - sx * sx / m;
    let vy = syy - sy * sy / m;
    if vx <= T::zero() || vy <= T::zero() {
        return T::zero();
    }
    (cov / (vx * vy).sqrt()).max(-T::one()).min(T::one())
}

/// Correlates two decoded traces sample by sample.
pub fn correlate_traces(
    reference: &DecodedTrace,
    delayed: &DecodedTrace,
    search: LagSearch,
) -> Result<CorrelationResult<f64>, EstimatorError> {
    check_intervals(reference, delayed)?;
    cross_correlate(&reference.as_reals::<f64>(), &delayed.as_reals::<f64>(), search)
}

fn check_intervals(a: &DecodedTrace, b: &DecodedTrace) -> Result<(), EstimatorError> {
    if (a.interval_ms - b.interval_ms).abs() > 1e-9 {
        return Err(EstimatorError::IntervalMismatch {
            a: a.interval_ms,
            b: b.interval_ms,
        });
    }
    Ok(())
}

/// Latency from `sender_pot` to `receiver_display`, recorded on separate
/// machines. Both traces are re-indexed onto common UTC milliseconds (the one
/// that started earlier loses its leading samples) before correlating.
pub fn estimate_remote(
    sender_pot: &DecodedTrace,
    receiver_display: &DecodedTrace,
    search: LagSearch,
) -> Result<CorrelationResult<f64>, EstimatorError> {
    check_intervals(sender_pot, receiver_display)?;
    let interval_us = sender_pot.interval_ms * 1000.0;
    let offset = ((receiver_display.start_utc_us - sender_pot.start_utc_us) as f64 / interval_us).round() as i64;
    let skip_sender = offset.max(0) as usize;
    let skip_receiver = (-offset).max(0) as usize;
    let a = sender_pot.values.get(skip_sender..).unwrap_or(&[]);
    let b = receiver_display.values.get(skip_receiver..).unwrap_or(&[]);
    let overlap = a.len().min(b.len());
    let required = MIN_LENGTH_FACTOR * search.max_lag;
    if overlap < required || overlap == 0 {
        return Err(EstimatorError::Alignment { overlap, required });
    }
    let to_real = |v: &[AngleCode]| v.iter().map(|c| c.value() as f64).collect::<Vec<_>>();
    cross_correlate(&to_real(a), &to_real(b), search)
}
