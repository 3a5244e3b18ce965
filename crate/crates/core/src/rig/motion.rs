use serde::{Deserialize, Serialize};

use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MotionKind {
    #[default]
    Sinusoidal,
}

/// Servo-driven back-and-forth sweep of the rotation platform.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MotionProfile<T> {
    pub amplitude_deg: T,
    pub period_ms: T,
    pub center_deg: T,
    #[serde(default)]
    pub kind: MotionKind,
}

impl Default for MotionProfile<f64> {
    fn default() -> Self {
        MotionProfile {
            amplitude_deg: 40.0,
            period_ms: 2000.0,
            center_deg: 180.0,
            kind: MotionKind::Sinusoidal,
        }
    }
}

impl<T: Real> MotionProfile<T> {
    /// Platform angle `t_ms` after the platform started moving.
    pub fn angle_at(&self, t_ms: T) -> T {
        match self.kind {
            MotionKind::Sinusoidal => {
                let phase = T::lit(std::f64::consts::TAU) * t_ms / self.period_ms;
                self.center_deg + self.amplitude_deg * phase.sin()
            }
        }
    }

    pub fn min_angle(&self) -> T {
        self.center_deg - self.amplitude_deg
    }

    pub fn max_angle(&self) -> T {
        self.center_deg + self.amplitude_deg
    }

    /// Times (ms) of the upper and lower turning points within `[from, to)`,
    /// each tagged `true` for a maximum.
    pub fn turning_points(&self, from_ms: T, to_ms: T) -> Vec<(T, bool)> {
        let quarter = self.period_ms / T::lit(4.0);
        let half = self.period_ms / T::lit(2.0);
        // Turning points sit at odd multiples of a quarter period.
        let mut k = ((from_ms - quarter) / half).ceil();
        let mut out = Vec::new();
        loop {
            let t = quarter + k * half;
            if t >= to_ms {
                break;
            }
            let is_max = (k.as_f64() as i64).rem_euclid(2) == 0;
            out.push((t, is_max));
            k = k + T::one();
        }
        out
    }
}

/// Free-function form of [`MotionProfile::angle_at`].
pub fn platform_angle<T: Real>(profile: &MotionProfile<T>, t_ms: T) -> T {
    profile.angle_at(t_ms)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sinusoid_examples() {
        let p = MotionProfile::<f64> {
            amplitude_deg: 40.0,
            period_ms: 2000.0,
            center_deg: 180.0,
            kind: MotionKind::Sinusoidal,
        };
        assert_eq!(platform_angle(&p, 0.0), 180.0);
        assert!((platform_angle(&p, 500.0) - 220.0).abs() < 1e-12);
        assert!((platform_angle(&p, 1000.0) - 180.0).abs() < 1e-12);
        assert!((platform_angle(&p, 1500.0) - 140.0).abs() < 1e-12);
    }

    #[test]
    fn works_in_single_precision() {
        let p = MotionProfile::<f32> {
            amplitude_deg: 40.0,
            period_ms: 2000.0,
            center_deg: 180.0,
            kind: MotionKind::Sinusoidal,
        };
        assert!((p.angle_at(500.0) - 220.0).abs() < 1e-4);
    }

    #[test]
    fn turning_points_alternate() {
        let p = MotionProfile::<f64>::default();
        let tp = p.turning_points(0.0, 4000.0);
        assert_eq!(
            tp,
            vec![(500.0, true), (1500.0, false), (2500.0, true), (3500.0, false)]
        );
        let tp = p.turning_points(600.0, 2600.0);
        assert_eq!(tp, vec![(1500.0, false), (2500.0, true)]);
    }
}
