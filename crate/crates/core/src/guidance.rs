//! Haptic guidance: a PD law on the guidance controller's own near/far preview
//! errors, scaled by an authority gain and saturated.
//!
//! Gains are magnitudes; signs follow the driver model so that the torque
//! always pushes toward the lane center and into the turn.

use crate::course::{PreviewErrors, PreviewRates};
use crate::error::{require, Result};

/// Guidance controller parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HapticParams {
    /// Gain on the near-point lateral error.
    pub a1: f64,
    /// Gain on the lateral error rate.
    pub a2: f64,
    /// Gain on the far-point yaw error.
    pub a3: f64,
    /// Gain on the yaw error rate.
    pub a4: f64,
    /// Overall authority (0 = off, 1 = automated lane tracking).
    pub k1: f64,
    pub t_n: f64,
    pub t_f: f64,
    /// Saturation [N m].
    pub torque_limit: f64,
}

pub const DEFAULT_TORQUE_LIMIT: f64 = 5.0;

impl Default for HapticParams {
    fn default() -> Self {
        Self::ch4()
    }
}

impl HapticParams {
    /// Gains used for the closed-loop condition studies (normal authority).
    pub fn ch4() -> Self {
        HapticParams { a1: 1.9, a2: 0.05, a3: 38.0, a4: 1.9, k1: 0.25, t_n: 0.3, t_f: 0.7, torque_limit: DEFAULT_TORQUE_LIMIT }
    }

    /// First simulator study gains. Its rate gain on `e_y` was not reported and is zero here.
    pub fn exp1() -> Self {
        HapticParams { a1: 1.9, a2: 0.0, a3: 38.0, a4: 1.9, ..Self::ch4() }
    }

    /// Visual-occlusion study gains.
    pub fn exp2() -> Self {
        HapticParams { a1: 3.2, a2: 0.08, a3: 20.0, a4: 0.5, ..Self::ch4() }
    }

    /// Fatigue study gains, full authority.
    pub fn exp3() -> Self {
        HapticParams { a1: 0.16, a2: 0.004, a3: 1.8, a4: 0.045, k1: 1.0, ..Self::ch4() }
    }

    pub fn with_level(self, level: GuidanceLevel) -> Self {
        HapticParams { k1: level.k1(), ..self }
    }

    pub fn validate(&self) -> Result<()> {
        for (v, name) in [(self.a1, "a1"), (self.a2, "a2"), (self.a3, "a3"), (self.a4, "a4")] {
            require(v >= 0.0 && v.is_finite(), name, "guidance gains must be non-negative")?;
        }
        require((0.0..=1.0).contains(&self.k1), "K1", "must lie in [0, 1]")?;
        require(self.t_n > 0.0 && self.t_n.is_finite(), "t_n_s", "must be positive")?;
        require(self.t_f > self.t_n && self.t_f.is_finite(), "t_f_s", "far look-ahead must exceed near look-ahead")?;
        require(self.torque_limit >= 0.0 && self.torque_limit.is_finite(), "torque_limit_Nm", "must be non-negative")
    }

    /// Torque before saturation.
    pub fn raw_torque(&self, err: &PreviewErrors, rates: &PreviewRates) -> f64 {
        self.k1 * (-self.a1 * err.e_y - self.a2 * rates.e_y_dot + self.a3 * err.e_theta + self.a4 * rates.e_theta_dot)
    }

    /// Saturated guidance torque [N m].
    pub fn torque(&self, err: &PreviewErrors, rates: &PreviewRates) -> f64 {
        self.raw_torque(err, rates).clamp(-self.torque_limit, self.torque_limit)
    }
}

/// Guidance authority levels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum GuidanceLevel {
    None,
    Normal,
    Strong,
    Full,
}

impl GuidanceLevel {
    pub const ALL: [GuidanceLevel; 4] = [GuidanceLevel::None, GuidanceLevel::Normal, GuidanceLevel::Strong, GuidanceLevel::Full];

    pub fn k1(self) -> f64 {
        match self {
            GuidanceLevel::None => 0.0,
            GuidanceLevel::Normal => 0.25,
            GuidanceLevel::Strong => 0.5,
            GuidanceLevel::Full => 1.0,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            GuidanceLevel::None => "none",
            GuidanceLevel::Normal => "normal",
            GuidanceLevel::Strong => "strong",
            GuidanceLevel::Full => "full",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|l| l.name() == name)
    }
}

/// Returns `base` with the authority gain of `level`.
pub fn guidance_level(base: &HapticParams, level: GuidanceLevel) -> HapticParams {
    base.with_level(level)
}
