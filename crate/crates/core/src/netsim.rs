//! Two stations joined by a rate-limited network link.
//!
//! The sender's VR application samples its tracked angle at the configured
//! send rate and ships each value to the receiver, which renders the newest
//! delivered value (zero-order hold) through its own pipeline and display.
//! Both stations run their own GPS-synchronized capture loops.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::clock::GpsConfig;
use crate::rig::{capture_station, station_timing, AngleSource, RawCapture, RigError, Station};
use crate::seeding::{self, streams};

/// Sending starts this long into the simulation, well before any capture.
const SEND_START_US: f64 = 100_000.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NetworkConfig {
    /// Updates per second; `inf` forwards every tracked value.
    pub send_rate_hz: f64,
    pub one_way_delay_ms: f64,
    /// Standard deviation of Gaussian delay jitter.
    pub jitter_ms: f64,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        NetworkConfig {
            send_rate_hz: 29.0,
            one_way_delay_ms: 0.5,
            jitter_ms: 0.0,
        }
    }
}

impl NetworkConfig {
    pub fn send_interval_ms(&self) -> f64 {
        1000.0 / self.send_rate_hz
    }

    /// Mean latency the link adds: half a send interval of sampling age plus
    /// the one-way delay.
    pub fn expected_added_latency_ms(&self) -> f64 {
        let sampling = if self.send_rate_hz.is_finite() {
            self.send_interval_ms() / 2.0
        } else {
            0.0
        };
        sampling + self.one_way_delay_ms
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Update {
    pub send_us: f64,
    pub deliver_us: f64,
    pub angle: f64,
}

/// Samples `source` every send interval over `[start_us, end_us)` starting at
/// `start_us + phase_us`, and schedules in-order delivery.
pub fn sample_and_send<R: Rng + ?Sized>(
    source: &dyn AngleSource,
    net: &NetworkConfig,
    start_us: f64,
    end_us: f64,
    phase_us: f64,
    rng: &mut R,
) -> Result<Vec<Update>, RigError> {
    let interval_us = net.send_interval_ms() * 1000.0;
    let base_delay_us = net.one_way_delay_ms * 1000.0;
    let jitter = (net.jitter_ms > 0.0)
        .then(|| Normal::new(0.0, net.jitter_ms * 1000.0).expect("finite jitter"));
    let mut updates = Vec::new();
    let mut last_delivery = f64::NEG_INFINITY;
    let mut k = 0u64;
    loop {
        let send_us = start_us + phase_us + k as f64 * interval_us;
        if send_us >= end_us {
            break;
        }
        let extra = jitter.as_ref().map_or(0.0, |n| n.sample(rng));
        let transit = (base_delay_us + extra).max(0.0);
        // A later packet never overtakes an earlier one.
        let deliver_us = (send_us + transit).max(last_delivery);
        last_delivery = deliver_us;
        updates.push(Update {
            send_us,
            deliver_us,
            angle: source.angle_at(send_us)?,
        });
        k += 1;
    }
    Ok(updates)
}

/// Receiver-side view of a stream of updates: the newest delivered angle.
#[derive(Debug, Clone)]
pub struct ReceivedFeed {
    updates: Vec<Update>,
}

impl ReceivedFeed {
    pub fn new(updates: Vec<Update>) -> Self {
        ReceivedFeed { updates }
    }

    pub fn updates(&self) -> &[Update] {
        &self.updates
    }

    /// The update the receiver holds at `t_us`.
    pub fn latest(&self, t_us: f64) -> Option<&Update> {
        let n = self.updates.partition_point(|u| u.deliver_us <= t_us);
        n.checked_sub(1).map(|i| &self.updates[i])
    }
}

impl AngleSource for ReceivedFeed {
    fn angle_at(&self, t_us: f64) -> Result<f64, RigError> {
        self.latest(t_us)
            .map(|u| u.angle)
            .ok_or(RigError::InsufficientHistory { t_ms: t_us / 1000.0 })
    }
}

/// Unthrottled link: every tracked value arrives after a fixed delay.
pub struct DelayedForward<'a> {
    pub source: &'a dyn AngleSource,
    pub delay_us: f64,
}

impl AngleSource for DelayedForward<'_> {
    fn angle_at(&self, t_us: f64) -> Result<f64, RigError> {
        self.source.angle_at(t_us - self.delay_us)
    }
}

#[derive(Debug, Clone)]
pub struct RemoteScenario {
    pub sender: Station,
    pub receiver: Station,
    pub net: NetworkConfig,
    pub gps: GpsConfig,
}

impl RemoteScenario {
    /// Analytic platform-A to display-B latency. The sender's tracking
    /// (delay less prediction) feeds the link; the receiver adds only its
    /// render, queue and display hold, since it does not track the pose
    /// itself.
    pub fn expected_latency_ms(&self) -> f64 {
        let s = &self.sender.pipeline;
        let r = &self.receiver.pipeline;
        s.tracking_delay_ms - s.extrapolation_ms
            + self.net.expected_added_latency_ms()
            + r.render_compute_ms
            + r.queue_delay_ms()
            + r.frame_period_ms() / 2.0
    }
}

/// Captures at both stations. The sender's display shows its own tracked
/// angle; the receiver's display shows the angle received over the network.
/// Returns `(sender, receiver)`.
pub fn remote_capture(
    rs: &RemoteScenario,
    seed: u64,
    duration_ms: f64,
) -> Result<(RawCapture, RawCapture), RigError> {
    let sender_timing = station_timing(&rs.sender, &rs.gps, seed, duration_ms)?;
    let receiver_timing = station_timing(&rs.receiver, &rs.gps, seed, duration_ms)?;
    let tracked = rs.sender.tracked(seed);
    let sender_capture = capture_station(&rs.sender, &sender_timing, &tracked, seed)?;

    let receiver_capture = if rs.net.send_rate_hz.is_finite() {
        let mut rng: ChaCha8Rng =
            seeding::stream(seed, seeding::station_base(rs.sender.index) + streams::NETWORK);
        let phase_us = rng.random::<f64>() * rs.net.send_interval_ms() * 1000.0;
        let end_us = receiver_timing
            .sample_times_us
            .last()
            .copied()
            .unwrap_or(0.0)
            + 1_000_000.0;
        let updates = sample_and_send(&tracked, &rs.net, SEND_START_US, end_us, phase_us, &mut rng)?;
        let feed = ReceivedFeed::new(updates);
        capture_station(&rs.receiver, &receiver_timing, &feed, seed)?
    } else {
        let forward = DelayedForward {
            source: &tracked,
            delay_us: rs.net.one_way_delay_ms * 1000.0,
        };
        capture_station(&rs.receiver, &receiver_timing, &forward, seed)?
    };
    Ok((sender_capture, receiver_capture))
}
