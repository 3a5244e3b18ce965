//! Simulation and analysis toolkit for end-to-end latency of VR systems.
//!
//! A station encodes the tracked angle of a rotating platform as four
//! display brightness levels, samples a potentiometer and four photosensors
//! at 1 kHz, and recovers the motion-to-photon latency as the lag that
//! maximizes the correlation between the two decoded traces. Two stations
//! synchronized by GPS timepulses extend this to latency between remote
//! sites.
//!
//! Signal-processing pieces are generic over [`Real`] (`f32` or `f64`); the
//! aliases below fix them to `f64`. Time bookkeeping is always `f64`
//! microseconds.

pub mod audio;
pub mod clock;
pub mod codec;
pub mod estimator;
pub mod experiment;
pub mod netsim;
pub mod report;
pub mod rig;
pub mod scenario;
pub mod scalar;
pub mod seeding;
pub mod trace;

pub use scalar::Real;

pub type Luminance = codec::LuminanceVector<f64>;
pub type Motion = rig::MotionProfile<f64>;
pub type Correlation = estimator::CorrelationResult<f64>;
pub type LowPass = rig::FirstOrderLowPass<f64>;
pub type Summary = report::Summary<f64>;
