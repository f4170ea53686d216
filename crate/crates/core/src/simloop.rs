//! Deterministic fixed-step closed-loop simulation of course, vehicle, driver
//! and guidance.
//!
//! The whole loop is one smooth ODE in ten states (seven plant, three driver)
//! integrated with classical RK4. Preview errors and their rates are evaluated
//! inside every RK4 stage; the only discontinuities are the guidance
//! saturation, curvature changes at segment joints and the edges of the
//! perturbation pulse, which is sampled at the step midpoint.

use alloc::string::String;
use alloc::vec::Vec;

use crate::course::{Course, Pose, PreviewErrors, PreviewRates};
use crate::driver::{driver_derivative, visual_command, DriverInputs, DriverParams, DriverState, NeuromuscularParams, VisionMode};
use crate::error::{require, Error, Result};
use crate::guidance::{GuidanceLevel, HapticParams};
use crate::math::{abs, cos, round, sin, FRAC_PI_2};
use crate::ode::rk4_step;
use crate::plant::{plant_derivative, PlantInputs, PlantState, VehicleParams};

const STATES: usize = 10;

/// Rectangular torque pulse on the steering column.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pulse {
    pub start: f64,
    pub duration: f64,
    pub magnitude: f64,
}

impl Default for Pulse {
    fn default() -> Self {
        Pulse { start: 30.0, duration: 2.0, magnitude: 1.0 }
    }
}

impl Pulse {
    pub fn torque(&self, t: f64) -> f64 {
        if t >= self.start && t < self.start + self.duration {
            self.magnitude
        } else {
            0.0
        }
    }

    pub fn end(&self) -> f64 {
        self.start + self.duration
    }
}

/// Everything needed to run one closed-loop simulation.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub course: Course,
    pub vehicle: VehicleParams,
    pub driver: DriverParams,
    pub neuromuscular: NeuromuscularParams,
    /// `None` removes the guidance controller from the loop.
    pub haptic: Option<HapticParams>,
    pub pulse: Option<Pulse>,
    pub t_end: f64,
    pub integrator_step: f64,
    pub log_rate: f64,
}

pub const DEFAULT_STEP: f64 = 1.0 / 1200.0;
pub const DEFAULT_LOG_RATE: f64 = 120.0;

impl Default for Scenario {
    /// Normal vision, manual driving on the curve-negotiation course.
    fn default() -> Self {
        Scenario {
            course: Course::curve_negotiation(),
            vehicle: VehicleParams::default(),
            driver: DriverParams::normal(),
            neuromuscular: NeuromuscularParams::manual(),
            haptic: Some(HapticParams::ch4().with_level(GuidanceLevel::None)),
            pulse: None,
            t_end: 100.0,
            integrator_step: DEFAULT_STEP,
            log_rate: DEFAULT_LOG_RATE,
        }
    }
}

impl Scenario {
    /// Integration steps between two logged samples.
    pub fn steps_per_sample(&self) -> Result<usize> {
        let ratio = 1.0 / (self.integrator_step * self.log_rate);
        let n = round(ratio);
        require(n >= 1.0 && abs(ratio - n) < 1e-6 * n, "log_rate_Hz", "must divide the integration rate evenly")?;
        Ok(n as usize)
    }

    pub fn validate(&self) -> Result<()> {
        self.vehicle.validate()?;
        self.driver.validate()?;
        self.neuromuscular.validate()?;
        if let Some(hp) = &self.haptic {
            hp.validate()?;
        }
        if let Some(p) = &self.pulse {
            require(p.duration >= 0.0 && p.start >= 0.0, "pulse", "start and duration must be non-negative")?;
            require(p.magnitude.is_finite(), "magnitude_Nm", "must be finite")?;
        }
        require(self.t_end > 0.0 && self.t_end.is_finite(), "t_end_s", "must be positive")?;
        require(self.integrator_step > 0.0, "integrator_step_s", "must be positive")?;
        let fastest = self.driver.t_p.min(self.neuromuscular.t_nms);
        require(self.integrator_step <= fastest / 10.0 + 1e-15, "integrator_step_s", "must not exceed min(t_p, t_nms)/10")?;
        require(self.log_rate > 0.0, "log_rate_Hz", "must be positive")?;
        self.steps_per_sample().map(|_| ())
    }
}

/// One logged sample.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SimRecord {
    pub t: f64,
    pub x: f64,
    pub y: f64,
    pub psi: f64,
    pub beta: f64,
    pub r: f64,
    pub phi: f64,
    pub delta: f64,
    pub t_d: f64,
    pub t_h: f64,
    pub t_a: f64,
    pub e_y: f64,
    pub e_theta: f64,
    pub s_foot: f64,
    pub lateral_offset: f64,
    /// Driver target steering angle (delayed visual command). Not part of the
    /// CSV log layout.
    pub phi_target: f64,
}

/// Column names of the log layout, in order.
pub const LOG_COLUMNS: [&str; 15] =
    ["t", "X", "Y", "psi", "beta", "r", "phi", "delta", "T_d", "T_h", "T_a", "e_y", "e_theta", "s_foot", "lateral_offset"];

impl SimRecord {
    pub fn values(&self) -> [f64; 15] {
        [
            self.t,
            self.x,
            self.y,
            self.psi,
            self.beta,
            self.r,
            self.phi,
            self.delta,
            self.t_d,
            self.t_h,
            self.t_a,
            self.e_y,
            self.e_theta,
            self.s_foot,
            self.lateral_offset,
        ]
    }

    /// Inverse of [`SimRecord::values`]; `phi_target` is set to zero.
    pub fn from_values(v: &[f64; 15]) -> Self {
        SimRecord {
            t: v[0],
            x: v[1],
            y: v[2],
            psi: v[3],
            beta: v[4],
            r: v[5],
            phi: v[6],
            delta: v[7],
            t_d: v[8],
            t_h: v[9],
            t_a: v[10],
            e_y: v[11],
            e_theta: v[12],
            s_foot: v[13],
            lateral_offset: v[14],
            phi_target: 0.0,
        }
    }

    pub fn get(&self, column: &str) -> Option<f64> {
        if column == "phi_target" {
            return Some(self.phi_target);
        }
        LOG_COLUMNS.iter().position(|c| *c == column).map(|i| self.values()[i])
    }
}

/// Fixed-rate record stream of every loop signal.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SimLog {
    pub log_rate: f64,
    /// Forward speed [m/s], constant over a run.
    pub speed: f64,
    pub records: Vec<SimRecord>,
}

impl SimLog {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        if name != "phi_target" && !LOG_COLUMNS.contains(&name) {
            return None;
        }
        Some(self.records.iter().map(|r| r.get(name).unwrap_or(f64::NAN)).collect())
    }

    pub fn series(&self, f: impl Fn(&SimRecord) -> f64) -> Vec<f64> {
        self.records.iter().map(f).collect()
    }

    /// Records whose foot point lies in `[s0, s1)`.
    pub fn between_s(&self, s0: f64, s1: f64) -> impl Iterator<Item = &SimRecord> {
        self.records.iter().filter(move |r| r.s_foot >= s0 && r.s_foot < s1)
    }

    /// Records with `t0 <= t < t1`.
    pub fn between_t(&self, t0: f64, t1: f64) -> impl Iterator<Item = &SimRecord> {
        self.records.iter().filter(move |r| r.t >= t0 && r.t < t1)
    }
}

/// Signals evaluated at one state.
#[derive(Debug, Clone, Copy)]
struct Evaluation {
    derivative: [f64; STATES],
    driver_errors: PreviewErrors,
    t_h: f64,
    t_a: f64,
    phi_target: f64,
    s_foot: f64,
    lateral_offset: f64,
}

fn evaluate(sc: &Scenario, x: &[f64; STATES], t_ext: f64) -> Result<Evaluation> {
    let plant = PlantState::from_array(&x[..7]);
    let ds = DriverState::from_array(&x[7..]);
    let v = sc.vehicle.v;
    let pose = Pose { x: plant.x, y: plant.y, psi: plant.psi };
    let velocity = [v * cos(plant.psi + plant.beta), v * sin(plant.psi + plant.beta)];

    let own = sc.course.project([plant.x, plant.y])?;

    let dp = &sc.driver;
    let (err, rates) = sc.course.preview(pose, velocity, plant.r, v, dp.t_n, dp.far_time())?;
    let t_h = match &sc.haptic {
        Some(hp) => {
            let (herr, hrates) = sc.course.preview(pose, velocity, plant.r, v, hp.t_n, Some(hp.t_f))?;
            hp.torque(&herr, &hrates)
        }
        None => 0.0,
    };

    let inputs = DriverInputs { errors: err, e_y_dot: rates.e_y_dot, phi: plant.phi, t_h };
    let dd = driver_derivative(dp, &sc.neuromuscular, &ds, &inputs);
    let pu = PlantInputs { t_d: ds.x_nms, t_h, t_ext };
    let pd = plant_derivative(&sc.vehicle, &plant, &pu);

    let mut derivative = [0.0; STATES];
    derivative[..7].copy_from_slice(&pd.to_array());
    derivative[7..].copy_from_slice(&dd.to_array());
    let u = visual_command(dp, &err, rates.e_y_dot, ds.x_int);
    Ok(Evaluation {
        derivative,
        driver_errors: err,
        t_h,
        t_a: sc.vehicle.aligning_torque(plant.beta, plant.r, sc.vehicle.k_t * plant.phi),
        phi_target: 2.0 * ds.x_pade - u,
        s_foot: own.s,
        lateral_offset: own.offset,
    })
}

fn record(t: f64, x: &[f64; STATES], ev: &Evaluation, k_t: f64) -> SimRecord {
    SimRecord {
        t,
        x: x[0],
        y: x[1],
        psi: x[2],
        beta: x[3],
        r: x[4],
        phi: x[5],
        delta: k_t * x[5],
        t_d: x[9],
        t_h: ev.t_h,
        t_a: ev.t_a,
        e_y: ev.driver_errors.e_y,
        e_theta: ev.driver_errors.e_theta,
        s_foot: ev.s_foot,
        lateral_offset: ev.lateral_offset,
        phi_target: ev.phi_target,
    }
}

/// Runs the closed loop from a quiescent on-centerline start.
pub fn simulate(sc: &Scenario) -> Result<SimLog> {
    sc.validate()?;
    let h = sc.integrator_step;
    let per_sample = sc.steps_per_sample()?;
    let total_steps = round(sc.t_end / h) as usize;

    let start = sc.course.point_extended(0.0);
    let mut x = [0.0; STATES];
    x[0] = start.position[0];
    x[1] = start.position[1];
    x[2] = start.heading;

    let mut log = SimLog { log_rate: sc.log_rate, speed: sc.vehicle.v, records: Vec::with_capacity(total_steps / per_sample + 1) };
    let mut fault: Option<Error> = None;

    for k in 0..=total_steps {
        let t = k as f64 * h;
        if k % per_sample == 0 {
            let ev = evaluate(sc, &x, 0.0).map_err(|e| at_time(e, t))?;
            log.records.push(record(t, &x, &ev, sc.vehicle.k_t));
        }
        if k == total_steps {
            break;
        }
        let t_ext = sc.pulse.map_or(0.0, |p| p.torque(t + 0.5 * h));
        let mut f = |_t: f64, s: &[f64; STATES]| match evaluate(sc, s, t_ext) {
            Ok(ev) => ev.derivative,
            Err(e) => {
                fault.get_or_insert(e);
                [0.0; STATES]
            }
        };
        x = rk4_step(&mut f, t, &x, h);
        if let Some(e) = fault.take() {
            return Err(at_time(e, t));
        }
        if !x.iter().all(|v| v.is_finite()) {
            return Err(Error::LinearModelViolation { t: t + h, beta: x[3] });
        }
        if abs(x[3]) >= FRAC_PI_2 {
            return Err(Error::LinearModelViolation { t: t + h, beta: x[3] });
        }
    }
    Ok(log)
}

fn at_time(e: Error, t: f64) -> Error {
    match e {
        Error::OffCourse { distance } => Error::CorridorExit { t, distance },
        other => other,
    }
}

/// One cell of the vision-mode by guidance-level grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Condition {
    pub vision: VisionMode,
    pub guidance: GuidanceLevel,
}

impl Condition {
    pub fn label(&self) -> String {
        let mut s = String::from(self.vision.name());
        s.push('+');
        s.push_str(self.guidance.name());
        s
    }

    /// Applies the vision-mode driver preset, the manual or assisted
    /// neuromuscular preset, and the guidance authority to `base`.
    pub fn apply(&self, base: &Scenario) -> Scenario {
        let mut sc = base.clone();
        sc.driver = DriverParams::for_mode(self.vision);
        sc.neuromuscular = match self.guidance {
            GuidanceLevel::None => NeuromuscularParams::manual(),
            _ => NeuromuscularParams::assisted(),
        };
        sc.haptic = Some(base.haptic.unwrap_or_default().with_level(self.guidance));
        sc
    }

    /// Every combination, vision-major.
    pub fn grid(visions: &[VisionMode], levels: &[GuidanceLevel]) -> Vec<Condition> {
        visions.iter().flat_map(|&vision| levels.iter().map(move |&guidance| Condition { vision, guidance })).collect()
    }
}

/// Runs each condition from the same base scenario, in input order.
pub fn run_condition_matrix(base: &Scenario, conditions: &[Condition]) -> Vec<(String, Result<SimLog>)> {
    conditions.iter().map(|c| (c.label(), simulate(&c.apply(base)))).collect()
}

/// Lateral error and rates seen by a controller at a plant state; handy for
/// replaying logs through the guidance law.
pub fn preview_at(course: &Course, plant: &PlantState, v: f64, t_n: f64, t_f: Option<f64>) -> Result<(PreviewErrors, PreviewRates)> {
    let pose = Pose { x: plant.x, y: plant.y, psi: plant.psi };
    let velocity = [v * cos(plant.psi + plant.beta), v * sin(plant.psi + plant.beta)];
    course.preview(pose, velocity, plant.r, v, t_n, t_f)
}
