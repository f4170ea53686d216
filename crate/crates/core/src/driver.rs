//! Driver model: a two-point visual controller followed by a first-order Padé
//! processing delay, and a neuromuscular stage that turns the target steering
//! angle into driver torque while reacting to the guidance torque.
//!
//! The visual command is
//!
//! ```text
//! u = -a1 e_y - a2 ∫e_y - a3 de_y/dt + a4 e_theta
//! ```
//!
//! with `e_y` positive when the near point lies left of the centerline and
//! `e_theta` positive when the road turns left of the vehicle heading, so every
//! term steers back toward the lane center. The yaw term is dropped when the
//! far point is not visible.

use crate::course::PreviewErrors;
use crate::error::{require, Result};
use crate::ode::rk4_step;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum VisionMode {
    Normal,
    LowVisibility,
    DeclinedAttention,
}

impl VisionMode {
    pub const ALL: [VisionMode; 3] = [VisionMode::Normal, VisionMode::LowVisibility, VisionMode::DeclinedAttention];

    pub fn name(self) -> &'static str {
        match self {
            VisionMode::Normal => "normal",
            VisionMode::LowVisibility => "low_visibility",
            VisionMode::DeclinedAttention => "declined_attention",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|m| m.name() == name)
    }
}

/// Visual controller gains, look-ahead times and processing delay.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DriverParams {
    /// Gain on the near-point lateral error.
    pub a1: f64,
    /// Gain on the integral of the lateral error.
    pub a2: f64,
    /// Gain on the lateral error rate.
    pub a3: f64,
    /// Gain on the far-point yaw error.
    pub a4: f64,
    /// Near look-ahead time [s].
    pub t_n: f64,
    /// Far look-ahead time [s]; ignored when the far point is disabled.
    pub t_f: f64,
    /// Processing delay [s].
    pub t_p: f64,
    pub far_point_enabled: bool,
}

impl DriverParams {
    pub fn normal() -> Self {
        DriverParams { a1: 0.1, a2: 0.05, a3: 0.0, a4: 3.7, t_n: 0.3, t_f: 1.0, t_p: 0.1, far_point_enabled: true }
    }

    /// Far point occluded; the driver adds derivative action on the near point.
    pub fn low_visibility() -> Self {
        DriverParams { a3: 0.3, a4: 0.0, far_point_enabled: false, ..Self::normal() }
    }

    /// Same gains as [`normal`](Self::normal) with a 0.5 s processing delay.
    pub fn declined_attention() -> Self {
        DriverParams { t_p: 0.5, ..Self::normal() }
    }

    pub fn for_mode(mode: VisionMode) -> Self {
        match mode {
            VisionMode::Normal => Self::normal(),
            VisionMode::LowVisibility => Self::low_visibility(),
            VisionMode::DeclinedAttention => Self::declined_attention(),
        }
    }

    /// Far look-ahead time when the far point is in use.
    pub fn far_time(&self) -> Option<f64> {
        self.far_point_enabled.then_some(self.t_f)
    }

    pub fn validate(&self) -> Result<()> {
        for (v, name) in [(self.a1, "a1"), (self.a2, "a2"), (self.a3, "a3"), (self.a4, "a4")] {
            require(v.is_finite(), name, "must be finite")?;
        }
        require(self.t_n > 0.0 && self.t_n.is_finite(), "t_n_s", "must be positive")?;
        require(self.t_p > 0.0 && self.t_p.is_finite(), "t_p_s", "must be positive")?;
        if self.far_point_enabled {
            require(self.t_f > self.t_n && self.t_f.is_finite(), "t_f_s", "far look-ahead must exceed near look-ahead")?;
        }
        Ok(())
    }
}

/// Neuromuscular stage parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NeuromuscularParams {
    /// Target angle to torque gain [N m/rad].
    pub k_d: f64,
    /// Reaction to the guidance torque, 0 (full reliance) to 1 (none).
    pub k_hf: f64,
    /// Reflex gain [N m/rad].
    pub k_nms: f64,
    /// Arm time constant [s].
    pub t_nms: f64,
}

impl NeuromuscularParams {
    pub fn manual() -> Self {
        NeuromuscularParams { k_d: 3.8, k_hf: 0.5, k_nms: 1.0, t_nms: 0.1 }
    }

    pub fn assisted() -> Self {
        NeuromuscularParams { k_d: 3.2, k_hf: 0.5, k_nms: 1.0, t_nms: 0.1 }
    }

    pub fn validate(&self) -> Result<()> {
        require(self.k_d > 0.0 && self.k_d.is_finite(), "K_d", "must be positive")?;
        require((0.0..=1.0).contains(&self.k_hf), "K_hf", "must lie in [0, 1]")?;
        require(self.k_nms > 0.0 && self.k_nms.is_finite(), "K_nms", "must be positive")?;
        require(self.t_nms > 0.0 && self.t_nms.is_finite(), "t_nms_s", "must be positive")
    }

    /// Torque the lag converges to for fixed inputs.
    pub fn target_torque(&self, phi_target: f64, phi: f64, t_h: f64) -> f64 {
        (self.k_d + self.k_nms) * phi_target - self.k_nms * phi - self.k_hf * t_h
    }
}

/// Integral, Padé and neuromuscular lag states. `x_nms` is the driver torque.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct DriverState {
    pub x_int: f64,
    pub x_pade: f64,
    pub x_nms: f64,
}

impl DriverState {
    pub fn to_array(&self) -> [f64; 3] {
        [self.x_int, self.x_pade, self.x_nms]
    }

    pub fn from_array(a: &[f64]) -> Self {
        DriverState { x_int: a[0], x_pade: a[1], x_nms: a[2] }
    }
}

/// Signals the driver senses at one instant.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct DriverInputs {
    pub errors: PreviewErrors,
    pub e_y_dot: f64,
    pub phi: f64,
    pub t_h: f64,
}

/// Pre-delay target steering angle [rad].
pub fn visual_command(dp: &DriverParams, err: &PreviewErrors, e_y_dot: f64, x_int: f64) -> f64 {
    let far = if dp.far_point_enabled { dp.a4 * err.e_theta } else { 0.0 };
    -(dp.a1 * err.e_y + dp.a2 * x_int + dp.a3 * e_y_dot) + far
}

/// Rate of the Padé state for input `u`.
#[inline]
pub fn pade_rate(t_p: f64, x_pade: f64, u: f64) -> f64 {
    2.0 / t_p * (u - x_pade)
}

/// Delayed output `(1 - s t_p/2) / (1 + s t_p/2)` applied to `u`.
#[inline]
pub fn pade_output(x_pade: f64, u: f64) -> f64 {
    2.0 * x_pade - u
}

/// One RK4 step of the Padé block with `u` held. Returns the output at the end
/// of the step and the new state.
pub fn pade_delay_step(t_p: f64, x_pade: f64, u: f64, dt: f64) -> (f64, f64) {
    let mut f = |_t: f64, x: &[f64; 1]| [pade_rate(t_p, x[0], u)];
    let x = rk4_step(&mut f, 0.0, &[x_pade], dt)[0];
    (pade_output(x, u), x)
}

/// One RK4 step of the neuromuscular lag with its inputs held. Returns the
/// driver torque at the end of the step and the new state.
pub fn neuromuscular_step(np: &NeuromuscularParams, x_nms: f64, phi_target: f64, phi: f64, t_h: f64, dt: f64) -> (f64, f64) {
    let target = np.target_torque(phi_target, phi, t_h);
    let mut f = |_t: f64, x: &[f64; 1]| [(target - x[0]) / np.t_nms];
    let x = rk4_step(&mut f, 0.0, &[x_nms], dt)[0];
    (x, x)
}

/// Target steering angle and driver torque for the current state and inputs.
pub fn driver_outputs(dp: &DriverParams, ds: &DriverState, inp: &DriverInputs) -> (f64, f64) {
    let u = visual_command(dp, &inp.errors, inp.e_y_dot, ds.x_int);
    (pade_output(ds.x_pade, u), ds.x_nms)
}

/// Continuous-time rates of the driver states.
pub fn driver_derivative(dp: &DriverParams, np: &NeuromuscularParams, ds: &DriverState, inp: &DriverInputs) -> DriverState {
    let u = visual_command(dp, &inp.errors, inp.e_y_dot, ds.x_int);
    let phi_target = pade_output(ds.x_pade, u);
    DriverState {
        x_int: inp.errors.e_y,
        x_pade: pade_rate(dp.t_p, ds.x_pade, u),
        x_nms: (np.target_torque(phi_target, inp.phi, inp.t_h) - ds.x_nms) / np.t_nms,
    }
}

/// Advances the whole driver block by `dt` with the inputs held (RK4).
pub fn driver_step(dp: &DriverParams, np: &NeuromuscularParams, ds: &DriverState, inp: &DriverInputs, dt: f64) -> DriverState {
    let mut f = |_t: f64, x: &[f64; 3]| driver_derivative(dp, np, &DriverState::from_array(x), inp).to_array();
    DriverState::from_array(&rk4_step(&mut f, 0.0, &ds.to_array(), dt))
}
