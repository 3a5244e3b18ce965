//! Potentiometer and photosensor models.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::codec::{LuminanceVector, DIGIT_COUNT};
use crate::scalar::Real;

/// `ln 9`: a first-order system's 10–90 % rise time in units of its time
/// constant.
pub const RISE_TIME_PER_TAU: f64 = 2.197_224_577_336_219_6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SensorConfig {
    /// 10–90 % rise time of each photosensor.
    pub rise_time_us: f64,
    /// Potentiometer noise, in units of the full normalized range.
    pub pot_noise_sigma: f64,
    /// Photosensor noise, in normalized luminance.
    pub photo_noise_sigma: f64,
    pub adc_sample_hz: f64,
    /// Time to convert all five analog inputs once.
    pub adc_conversion_us: f64,
}

impl Default for SensorConfig {
    fn default() -> Self {
        SensorConfig {
            rise_time_us: 260.0,
            pot_noise_sigma: 0.0005,
            photo_noise_sigma: 0.01,
            adc_sample_hz: 1000.0,
            adc_conversion_us: 400.0,
        }
    }
}

impl SensorConfig {
    pub fn interval_us(&self) -> f64 {
        1e6 / self.adc_sample_hz
    }

    pub fn tau_us(&self) -> f64 {
        self.rise_time_us / RISE_TIME_PER_TAU
    }
}

/// Normalized potentiometer reading for a platform angle, with additive
/// Gaussian noise, clamped to `[0, 1]`.
pub fn potentiometer_read<T: Real, R: Rng + ?Sized>(
    angle_deg: T,
    angle_range_deg: T,
    noise_sigma: T,
    rng: &mut R,
) -> T {
    let mut v = angle_deg / angle_range_deg;
    if noise_sigma > T::zero() {
        let n = Normal::new(0.0, noise_sigma.as_f64()).expect("finite sigma");
        v = v + T::lit(n.sample(rng));
    }
    v.max(T::zero()).min(T::one())
}

/// Single-pole low-pass `τ·y' = u − y`, advanced exactly over intervals of
/// constant input.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FirstOrderLowPass<T> {
    tau_us: T,
    state: T,
}

impl<T: Real> FirstOrderLowPass<T> {
    pub fn new(tau_us: T) -> Self {
        FirstOrderLowPass {
            tau_us: tau_us.max(T::zero()),
            state: T::zero(),
        }
    }

    pub fn from_rise_time(rise_time_us: T) -> Self {
        Self::new(rise_time_us / T::lit(RISE_TIME_PER_TAU))
    }

    pub fn tau_us(&self) -> T {
        self.tau_us
    }

    pub fn output(&self) -> T {
        self.state
    }

    pub fn reset(&mut self, value: T) {
        self.state = value;
    }

    /// Holds `input` for `dt_us` and returns the new output.
    pub fn advance(&mut self, input: T, dt_us: T) -> T {
        if self.tau_us <= T::zero() {
            self.state = input;
        } else if dt_us > T::zero() {
            let decay = (-dt_us / self.tau_us).exp();
            self.state = input + (self.state - input) * decay;
        }
        self.state
    }
}

/// Piecewise-constant incident light, traversed forward in time.
pub trait PiecewiseLuminance<T> {
    /// Luminance on `[now, segment_end)`.
    fn level(&self) -> LuminanceVector<T>;
    fn segment_end(&self) -> T;
    /// Moves to the following segment.
    fn next_segment(&mut self);
}

/// Four photosensors over the code areas.
#[derive(Debug, Clone, Copy)]
pub struct Photosensor<T> {
    channels: [FirstOrderLowPass<T>; DIGIT_COUNT],
    now_us: T,
}

impl<T: Real> Photosensor<T> {
    pub fn new(rise_time_us: T, start_us: T) -> Self {
        Photosensor {
            channels: [FirstOrderLowPass::from_rise_time(rise_time_us); DIGIT_COUNT],
            now_us: start_us,
        }
    }

    pub fn now_us(&self) -> T {
        self.now_us
    }

    pub fn output(&self) -> LuminanceVector<T> {
        LuminanceVector(self.channels.map(|c| c.output()))
    }

    /// Integrates the incident light up to `target_us` and returns the
    /// noiseless sensor output there.
    pub fn advance_to<S: PiecewiseLuminance<T>>(
        &mut self,
        incident: &mut S,
        target_us: T,
    ) -> LuminanceVector<T> {
        while self.now_us < target_us {
            let end = incident.segment_end();
            let until = if end < target_us { end } else { target_us };
            let level = incident.level();
            let dt = until - self.now_us;
            for (ch, u) in self.channels.iter_mut().zip(level.0) {
                ch.advance(u, dt);
            }
            self.now_us = until;
            if end <= target_us {
                incident.next_segment();
            }
        }
        self.output()
    }
}

/// Sensor response to `incident`, read at each of `sample_times_us` (which
/// must be non-decreasing), plus Gaussian read noise clamped into `[0, 1]`.
pub fn photosensor_respond<T, S, R>(
    incident: &mut S,
    start_us: T,
    sample_times_us: &[T],
    rise_time_us: T,
    noise_sigma: T,
    rng: &mut R,
) -> Vec<LuminanceVector<T>>
where
    T: Real,
    S: PiecewiseLuminance<T>,
    R: Rng + ?Sized,
{
    let mut sensor = Photosensor::new(rise_time_us, start_us);
    let noise = (noise_sigma > T::zero())
        .then(|| Normal::new(0.0, noise_sigma.as_f64()).expect("finite sigma"));
    sample_times_us
        .iter()
        .map(|&t| {
            let mut lum = sensor.advance_to(incident, t);
            if let Some(n) = &noise {
                for v in lum.0.iter_mut() {
                    *v = *v + T::lit(n.sample(rng));
                }
            }
            lum.clamped()
        })
        .collect()
}
