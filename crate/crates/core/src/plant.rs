//! Steering column and linear bicycle vehicle model, coupled through the
//! front-wheel angle and the tire aligning torque.

use crate::error::{require, Result};
use crate::math::{cos, sin};

/// Vehicle and steering-system parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VehicleParams {
    /// Mass [kg].
    pub m: f64,
    /// Yaw moment of inertia [kg m^2].
    pub yaw_inertia: f64,
    /// Front axle distance from the center of gravity [m].
    pub l_f: f64,
    /// Rear axle distance from the center of gravity [m].
    pub l_r: f64,
    /// Front cornering stiffness [N/rad].
    pub k_f: f64,
    /// Rear cornering stiffness [N/rad].
    pub k_r: f64,
    /// Constant forward speed [m/s].
    pub v: f64,
    /// Pneumatic plus castor trail [m].
    pub e_t: f64,
    /// Kingpin spring constant [N m/rad].
    pub k_s: f64,
    /// Steering ratio, front-wheel angle per steering-wheel angle.
    pub k_t: f64,
    /// Steering column inertia [kg m^2].
    pub j_s: f64,
    /// Steering column damping [N m s/rad].
    pub b_s: f64,
}

impl Default for VehicleParams {
    /// Compact passenger car at 60 km/h.
    fn default() -> Self {
        VehicleParams {
            m: 1100.0,
            yaw_inertia: 2940.0,
            l_f: 1.0,
            l_r: 1.635,
            k_f: 53300.0,
            k_r: 117000.0,
            v: 60.0 / 3.6,
            e_t: 0.026,
            k_s: 48510.0,
            k_t: 1.0 / 17.0,
            j_s: 0.11,
            b_s: 0.57,
        }
    }
}

impl VehicleParams {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            (self.m, "m"),
            (self.yaw_inertia, "I"),
            (self.l_f, "l_f"),
            (self.l_r, "l_r"),
            (self.k_f, "K_f"),
            (self.k_r, "K_r"),
            (self.v, "v"),
            (self.e_t, "E_t"),
            (self.k_s, "K_s"),
            (self.k_t, "K_t"),
            (self.j_s, "J_s"),
            (self.b_s, "B_s"),
        ];
        for (value, name) in positive {
            require(value > 0.0 && value.is_finite(), name, "must be positive and finite")?;
        }
        require(self.k_t < 1.0, "K_t", "steering ratio must lie in (0, 1)")
    }

    /// Aligning-torque coefficient referred to the steering wheel [N m/rad].
    pub fn aligning_coefficient(&self) -> f64 {
        let e = 2.0 * self.e_t * self.k_f;
        e * self.k_t / (1.0 + e / self.k_s)
    }

    /// Aligning torque for the given lateral state and front-wheel angle.
    pub fn aligning_torque(&self, beta: f64, r: f64, delta: f64) -> f64 {
        self.aligning_coefficient() * (beta + self.l_f * r / self.v - delta)
    }

    /// Lateral dynamics `d/dt [beta, r] = A [beta, r] + b delta`.
    pub fn lateral_matrices(&self) -> ([[f64; 2]; 2], [f64; 2]) {
        let (m, v, i) = (self.m, self.v, self.yaw_inertia);
        let (kf, kr, lf, lr) = (self.k_f, self.k_r, self.l_f, self.l_r);
        let a = [
            [-2.0 * (kf + kr) / (m * v), -1.0 - 2.0 * (lf * kf - lr * kr) / (m * v * v)],
            [-2.0 * (lf * kf - lr * kr) / i, -2.0 * (lf * lf * kf + lr * lr * kr) / (i * v)],
        ];
        let b = [2.0 * kf / (m * v), 2.0 * lf * kf / i];
        (a, b)
    }

    /// Steady-state side slip and yaw rate for a constant front-wheel angle.
    pub fn steady_state(&self, delta: f64) -> (f64, f64) {
        let (a, b) = self.lateral_matrices();
        let det = a[0][0] * a[1][1] - a[0][1] * a[1][0];
        // A x = -b delta
        let rhs = [-b[0] * delta, -b[1] * delta];
        let beta = (rhs[0] * a[1][1] - a[0][1] * rhs[1]) / det;
        let r = (a[0][0] * rhs[1] - a[1][0] * rhs[0]) / det;
        (beta, r)
    }
}

/// Vehicle pose, bicycle states and steering column states.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PlantState {
    pub x: f64,
    pub y: f64,
    pub psi: f64,
    pub beta: f64,
    pub r: f64,
    pub phi: f64,
    pub phi_dot: f64,
}

impl PlantState {
    pub fn to_array(&self) -> [f64; 7] {
        [self.x, self.y, self.psi, self.beta, self.r, self.phi, self.phi_dot]
    }

    pub fn from_array(a: &[f64]) -> Self {
        PlantState { x: a[0], y: a[1], psi: a[2], beta: a[3], r: a[4], phi: a[5], phi_dot: a[6] }
    }
}

/// Torques applied to the steering column [N m].
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PlantInputs {
    pub t_d: f64,
    pub t_h: f64,
    pub t_ext: f64,
}

/// Time derivative of the plant state. The returned value uses the
/// [`PlantState`] layout, so `x` holds dX/dt and so on.
pub fn plant_derivative(p: &VehicleParams, s: &PlantState, u: &PlantInputs) -> PlantState {
    let (a, b) = p.lateral_matrices();
    let delta = p.k_t * s.phi;
    let t_a = p.aligning_torque(s.beta, s.r, delta);
    let course = s.psi + s.beta;
    PlantState {
        x: p.v * cos(course),
        y: p.v * sin(course),
        psi: s.r,
        beta: a[0][0] * s.beta + a[0][1] * s.r + b[0] * delta,
        r: a[1][0] * s.beta + a[1][1] * s.r + b[1] * delta,
        phi: s.phi_dot,
        phi_dot: (u.t_d + u.t_h + u.t_ext + t_a - p.b_s * s.phi_dot) / p.j_s,
    }
}
