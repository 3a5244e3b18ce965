//! Brightness code: a 12-bit angle shown as four octal luminance digits.
//!
//! The VR application paints four display areas, each at one of eight
//! luminance levels `k/7`. A photosensor over each area reads the level back
//! and the four octal digits (most significant first) reassemble the code.
//! Eight levels leave a half-step of `1/14` of headroom on either side of each
//! level for sensor noise.

use thiserror::Error;

use crate::scalar::Real;

/// Number of distinct codes carried by four octal digits.
pub const CODE_COUNT: u16 = 4096;
/// Highest valid code.
pub const MAX_CODE: u16 = CODE_COUNT - 1;
/// Number of display areas (one octal digit each).
pub const DIGIT_COUNT: usize = 4;
/// Highest digit value; also the number of luminance steps.
pub const MAX_DIGIT: u8 = 7;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CodecError {
    #[error("angle range must be positive and finite, got {0}")]
    InvalidRange(f64),
    #[error("angle {angle} outside [0, {range})")]
    AngleOutOfRange { angle: f64, range: f64 },
    #[error("code {0} exceeds {MAX_CODE}")]
    CodeOutOfRange(u32),
    #[error("digit {0} exceeds {MAX_DIGIT}")]
    DigitOutOfRange(u8),
}

/// A 12-bit rotation code in `0..=4095`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct AngleCode(u16);

impl AngleCode {
    pub const MIN: AngleCode = AngleCode(0);
    pub const MAX: AngleCode = AngleCode(MAX_CODE);

    pub fn new(value: u16) -> Result<Self, CodecError> {
        if value > MAX_CODE {
            return Err(CodecError::CodeOutOfRange(value as u32));
        }
        Ok(AngleCode(value))
    }

    /// Clamps any integer into the valid code range.
    pub fn saturating(value: i64) -> Self {
        AngleCode(value.clamp(0, MAX_CODE as i64) as u16)
    }

    pub fn value(self) -> u16 {
        self.0
    }
}

impl From<AngleCode> for u16 {
    fn from(c: AngleCode) -> u16 {
        c.0
    }
}

/// Four octal digits, most significant first.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct OctalDigits([u8; DIGIT_COUNT]);

impl OctalDigits {
    pub fn new(digits: [u8; DIGIT_COUNT]) -> Result<Self, CodecError> {
        if let Some(&d) = digits.iter().find(|&&d| d > MAX_DIGIT) {
            return Err(CodecError::DigitOutOfRange(d));
        }
        Ok(OctalDigits(digits))
    }

    pub fn digits(self) -> [u8; DIGIT_COUNT] {
        self.0
    }
}

/// Normalized luminance of the four code areas.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LuminanceVector<T>(pub [T; DIGIT_COUNT]);

impl<T: Real> LuminanceVector<T> {
    pub const fn new(levels: [T; DIGIT_COUNT]) -> Self {
        LuminanceVector(levels)
    }

    pub fn dark() -> Self {
        LuminanceVector([T::zero(); DIGIT_COUNT])
    }

    pub fn levels(&self) -> &[T; DIGIT_COUNT] {
        &self.0
    }

    /// Each component clamped into `[0, 1]`.
    pub fn clamped(&self) -> Self {
        LuminanceVector(self.0.map(|v| v.max(T::zero()).min(T::one())))
    }

    /// Brightest channel, after clamping.
    pub fn peak(&self) -> T {
        self.clamped().0.into_iter().fold(T::zero(), T::max)
    }

    pub fn total(&self) -> T {
        self.0.into_iter().sum()
    }
}

fn check_range<T: Real>(range: T) -> Result<(), CodecError> {
    if !(range > T::zero()) || !range.is_finite() {
        return Err(CodecError::InvalidRange(range.as_f64()));
    }
    Ok(())
}

/// Maps an angle in `[0, range)` onto the 4096 code bins.
pub fn quantize_angle<T: Real>(angle: T, range: T) -> Result<AngleCode, CodecError> {
    check_range(range)?;
    if !(angle >= T::zero() && angle < range) {
        return Err(CodecError::AngleOutOfRange {
            angle: angle.as_f64(),
            range: range.as_f64(),
        });
    }
    let bin = (angle / range * T::from_count(CODE_COUNT as usize)).floor();
    Ok(AngleCode(bin.as_f64().min(MAX_CODE as f64) as u16))
}

/// Like [`quantize_angle`] but saturates angles outside the range instead of
/// failing. Used where a predicted angle may overshoot the mechanical sweep.
pub fn quantize_angle_saturating<T: Real>(angle: T, range: T) -> Result<AngleCode, CodecError> {
    check_range(range)?;
    if angle.is_nan() {
        return Err(CodecError::AngleOutOfRange {
            angle: f64::NAN,
            range: range.as_f64(),
        });
    }
    let bin = (angle / range * T::from_count(CODE_COUNT as usize)).floor();
    Ok(AngleCode::saturating(bin.as_f64() as i64))
}

/// Bin-center reconstruction of a code.
pub fn dequantize<T: Real>(code: AngleCode, range: T) -> T {
    (T::from_u16(code.0).unwrap() + T::lit(0.5)) / T::from_count(CODE_COUNT as usize) * range
}

pub fn encode(code: AngleCode) -> OctalDigits {
    let v = code.0;
    OctalDigits([
        ((v >> 9) & 7) as u8,
        ((v >> 6) & 7) as u8,
        ((v >> 3) & 7) as u8,
        (v & 7) as u8,
    ])
}

pub fn decode(digits: OctalDigits) -> AngleCode {
    let v = digits
        .0
        .iter()
        .fold(0u16, |acc, &d| (acc << 3) | d as u16);
    AngleCode(v)
}

/// Digit `k` is shown at luminance `k/7`.
pub fn digits_to_luminance<T: Real>(digits: OctalDigits) -> LuminanceVector<T> {
    let steps = T::from_u8(MAX_DIGIT).unwrap();
    LuminanceVector(digits.0.map(|d| T::from_u8(d).unwrap() / steps))
}

/// Nearest level of a single clamped reading; an exact midpoint goes to the
/// lower level.
pub fn classify_level<T: Real>(reading: T) -> u8 {
    let x = reading.max(T::zero()).min(T::one()) * T::from_u8(MAX_DIGIT).unwrap();
    let k = (x - T::lit(0.5)).ceil();
    k.max(T::zero()).min(T::from_u8(MAX_DIGIT).unwrap()).as_f64() as u8
}

pub fn classify_luminance<T: Real>(lum: &LuminanceVector<T>) -> OctalDigits {
    OctalDigits(lum.0.map(classify_level))
}

/// Distance of a reading from its nearest level, in units of luminance.
pub fn level_residual<T: Real>(reading: T) -> T {
    let clamped = reading.max(T::zero()).min(T::one());
    let level = T::from_u8(classify_level(clamped)).unwrap() / T::from_u8(MAX_DIGIT).unwrap();
    (clamped - level).abs()
}
