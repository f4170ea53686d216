//! Grey-box identification of the driver model from logged
//! `(e_y, e_theta, phi, T_h) -> (T_d, phi')` data.
//!
//! The driver block is written as a three-state LTI model (integral of
//! `e_y`, Padé state, driver torque), discretized by zero-order hold and
//! fitted by a bounded, damped Gauss-Newton prediction-error search. Without
//! a disturbance model the one-step predictor is the simulated model output.

use alloc::vec::Vec;

use nalgebra::{SMatrix, SVector};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{require, Error, Result};
use crate::math::sqrt;
use crate::simloop::SimLog;

pub type Mat3 = SMatrix<f64, 3, 3>;

pub const PARAM_COUNT: usize = 6;
pub const MIN_SAMPLES: usize = 100;
pub const MAX_ITERATIONS: usize = 200;
/// Relative predicted loss decrease below which the search stops.
pub const STOP_RELATIVE_DECREASE: f64 = 1e-4;
pub const FD_RELATIVE_STEP: f64 = 1e-6;
pub const DEFAULT_STARTS: usize = 5;
pub const DEFAULT_SEED: u64 = 0x5eed1d;

/// Identified driver parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ParamVector {
    pub a1: f64,
    pub a2: f64,
    pub a4: f64,
    pub t_p: f64,
    pub k_d: f64,
    pub k_hf: f64,
}

impl ParamVector {
    pub const NAMES: [&'static str; PARAM_COUNT] = ["a1", "a2", "a4", "t_p", "K_d", "K_hf"];

    /// Default starting point of the search.
    pub fn defaults() -> Self {
        ParamVector { a1: 0.1, a2: 0.01, a4: 3.7, t_p: 0.1, k_d: 3.0, k_hf: 0.5 }
    }

    pub fn to_array(&self) -> [f64; PARAM_COUNT] {
        [self.a1, self.a2, self.a4, self.t_p, self.k_d, self.k_hf]
    }

    pub fn from_array(a: &[f64; PARAM_COUNT]) -> Self {
        ParamVector { a1: a[0], a2: a[1], a4: a[2], t_p: a[3], k_d: a[4], k_hf: a[5] }
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        Self::NAMES.iter().position(|n| *n == name).map(|i| self.to_array()[i])
    }
}

impl Default for ParamVector {
    fn default() -> Self {
        Self::defaults()
    }
}

/// Closed search interval per parameter, in [`ParamVector::NAMES`] order.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ParamBounds(pub [(f64, f64); PARAM_COUNT]);

impl Default for ParamBounds {
    fn default() -> Self {
        ParamBounds([(0.0, 0.5), (0.0, 0.1), (3.0, 5.0), (0.01, 0.3), (1.0, 5.0), (0.0, 1.0)])
    }
}

impl ParamBounds {
    pub fn validate(&self) -> Result<()> {
        for (i, (lo, hi)) in self.0.iter().enumerate() {
            require(lo.is_finite() && hi.is_finite() && lo <= hi, ParamVector::NAMES[i], "bounds must be finite with lo <= hi")?;
        }
        require(self.0[3].0 > 0.0, "t_p", "lower bound must be positive")?;
        require(self.0[4].0 >= 0.0, "K_d", "lower bound must be non-negative")
    }

    pub fn contains(&self, p: &ParamVector) -> bool {
        p.to_array().iter().zip(self.0.iter()).all(|(v, (lo, hi))| *v >= *lo && *v <= *hi)
    }

    pub fn project(&self, a: &mut [f64; PARAM_COUNT]) {
        for (v, (lo, hi)) in a.iter_mut().zip(self.0.iter()) {
            *v = v.clamp(*lo, *hi);
        }
    }

    pub fn width(&self, i: usize) -> f64 {
        self.0[i].1 - self.0[i].0
    }
}

/// Parameters held fixed during identification.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FixedParams {
    pub k_nms: f64,
    pub t_nms: f64,
}

impl Default for FixedParams {
    fn default() -> Self {
        FixedParams { k_nms: 1.0, t_nms: 0.1 }
    }
}

/// Continuous (or discrete) LTI model with inputs `[e_y, e_theta, phi, T_h]`,
/// states `[x_int, x_pade, T_d]` and outputs `[T_d, phi']`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Realization {
    pub a: Mat3,
    pub b: SMatrix<f64, 3, 4>,
    pub c: SMatrix<f64, 2, 3>,
    pub d: SMatrix<f64, 2, 4>,
}

/// State-space form of the driver block, with the sign convention of the
/// driver module.
pub fn realize_statespace(theta: &ParamVector, fixed: &FixedParams) -> Result<Realization> {
    require(theta.t_p > 0.0 && theta.t_p.is_finite(), "t_p", "must be positive")?;
    require(fixed.t_nms > 0.0 && fixed.t_nms.is_finite(), "t_nms", "must be positive")?;
    require(theta.to_array().iter().all(|v| v.is_finite()), "theta", "must be finite")?;
    Ok(realize(theta, fixed))
}

fn realize(p: &ParamVector, f: &FixedParams) -> Realization {
    let w = 2.0 / p.t_p;
    let g = (p.k_d + f.k_nms) / f.t_nms;
    let tn = f.t_nms;
    #[rustfmt::skip]
    let a = Mat3::new(
        0.0,       0.0,     0.0,
        -p.a2 * w, -w,      0.0,
        p.a2 * g,  2.0 * g, -1.0 / tn,
    );
    #[rustfmt::skip]
    let b = SMatrix::<f64, 3, 4>::new(
        1.0,       0.0,       0.0,           0.0,
        -p.a1 * w, p.a4 * w,  0.0,           0.0,
        p.a1 * g,  -p.a4 * g, -f.k_nms / tn, -p.k_hf / tn,
    );
    #[rustfmt::skip]
    let c = SMatrix::<f64, 2, 3>::new(
        0.0,  0.0, 1.0,
        p.a2, 2.0, 0.0,
    );
    #[rustfmt::skip]
    let d = SMatrix::<f64, 2, 4>::new(
        0.0,  0.0,   0.0, 0.0,
        p.a1, -p.a4, 0.0, 0.0,
    );
    Realization { a, b, c, d }
}

/// Zero-order-hold discretization through the exponential of `[A B; 0 0] dt`.
pub fn discretize(r: &Realization, dt: f64) -> Result<Realization> {
    require(dt > 0.0 && dt.is_finite(), "dt_s", "must be positive")?;
    let mut m = SMatrix::<f64, 7, 7>::zeros();
    m.fixed_view_mut::<3, 3>(0, 0).copy_from(&(r.a * dt));
    m.fixed_view_mut::<3, 4>(0, 3).copy_from(&(r.b * dt));
    let e = expm(&m);
    if !e.iter().all(|v| v.is_finite()) {
        return Err(Error::Diverged);
    }
    Ok(Realization { a: e.fixed_view::<3, 3>(0, 0).into_owned(), b: e.fixed_view::<3, 4>(0, 3).into_owned(), c: r.c, d: r.d })
}

/// Matrix exponential by scaling and squaring of a truncated Taylor series.
fn expm<const N: usize>(m: &SMatrix<f64, N, N>) -> SMatrix<f64, N, N> {
    let norm = m.row_iter().map(|r| r.iter().map(|v| v.abs()).sum::<f64>()).fold(0.0, f64::max);
    let mut squarings = 0;
    let mut scale = 1.0;
    while norm * scale > 0.25 && squarings < 64 {
        scale *= 0.5;
        squarings += 1;
    }
    let a = m * scale;
    let mut term = SMatrix::<f64, N, N>::identity();
    let mut e = term;
    for k in 1..=18 {
        term = term * a / k as f64;
        e += term;
    }
    for _ in 0..squarings {
        e = e * e;
    }
    e
}

/// Output sequence of a discrete realization from zero initial state.
pub fn simulate_discrete(r: &Realization, inputs: &[[f64; 4]]) -> Vec<[f64; 2]> {
    let mut x = SVector::<f64, 3>::zeros();
    inputs
        .iter()
        .map(|u| {
            let u = SVector::<f64, 4>::from_column_slice(u);
            let y = r.c * x + r.d * u;
            x = r.a * x + r.b * u;
            [y[0], y[1]]
        })
        .collect()
}

/// Fit percentage `100 (1 - |y - yhat| / |y - mean(y)|)`.
pub fn fit_percent(y: &[f64], yhat: &[f64]) -> Result<f64> {
    if y.len() != yhat.len() {
        return Err(Error::LengthMismatch { expected: y.len(), got: yhat.len() });
    }
    if y.is_empty() {
        return Err(Error::SeriesTooShort { needed: 1, got: 0 });
    }
    let mean = y.iter().sum::<f64>() / y.len() as f64;
    let num: f64 = y.iter().zip(yhat).map(|(a, b)| (a - b) * (a - b)).sum();
    let den: f64 = y.iter().map(|a| (a - mean) * (a - mean)).sum();
    if den == 0.0 {
        return Err(Error::DegenerateData);
    }
    Ok(100.0 * (1.0 - sqrt(num) / sqrt(den)))
}

fn variance(xs: impl Iterator<Item = f64> + Clone) -> f64 {
    let n = xs.clone().count() as f64;
    let mean = xs.clone().sum::<f64>() / n;
    xs.map(|x| (x - mean) * (x - mean)).sum::<f64>() / n
}

/// Identification data and search settings.
#[derive(Debug, Clone, PartialEq)]
pub struct IdentProblem {
    /// Rows of `[e_y, e_theta, phi, T_h]`.
    pub u: Vec<[f64; 4]>,
    /// Rows of `[T_d, phi']`.
    pub y: Vec<[f64; 2]>,
    pub sample_rate: f64,
    pub theta0: ParamVector,
    pub bounds: ParamBounds,
    pub fixed: FixedParams,
    /// Weights of the two output channels; `None` uses inverse variances.
    pub output_weights: Option<[f64; 2]>,
    pub starts: usize,
    pub seed: u64,
    /// Iteration cap per start.
    pub max_iterations: usize,
}

impl IdentProblem {
    pub fn new(u: Vec<[f64; 4]>, y: Vec<[f64; 2]>, sample_rate: f64) -> Self {
        IdentProblem {
            u,
            y,
            sample_rate,
            theta0: ParamVector::defaults(),
            bounds: ParamBounds::default(),
            fixed: FixedParams::default(),
            output_weights: None,
            starts: DEFAULT_STARTS,
            seed: DEFAULT_SEED,
            max_iterations: MAX_ITERATIONS,
        }
    }

    /// Problem built from a log. The second output is the logged driver
    /// target angle when `target_output` is set, otherwise the measured
    /// steering angle.
    pub fn from_log(log: &SimLog, target_output: bool) -> Self {
        let u = log.records.iter().map(|r| [r.e_y, r.e_theta, r.phi, r.t_h]).collect();
        let y = log.records.iter().map(|r| [r.t_d, if target_output { r.phi_target } else { r.phi }]).collect();
        Self::new(u, y, log.log_rate)
    }

    pub fn validate(&self) -> Result<()> {
        if self.u.len() != self.y.len() {
            return Err(Error::LengthMismatch { expected: self.u.len(), got: self.y.len() });
        }
        if self.u.len() < MIN_SAMPLES {
            return Err(Error::SeriesTooShort { needed: MIN_SAMPLES, got: self.u.len() });
        }
        require(self.sample_rate > 0.0 && self.sample_rate.is_finite(), "sample_rate_Hz", "must be positive")?;
        self.bounds.validate()?;
        require(self.bounds.contains(&self.theta0), "theta0", "must lie within the bounds")?;
        require(self.fixed.t_nms > 0.0, "t_nms", "must be positive")?;
        require(self.starts >= 1, "starts", "at least one start is needed")?;
        require(self.max_iterations >= 1, "max_iterations", "must be positive")?;
        if let Some(w) = self.output_weights {
            require(w.iter().all(|v| *v >= 0.0 && v.is_finite()) && w.iter().any(|v| *v > 0.0), "output_weights", "must be non-negative and not all zero")?;
        }
        let all_finite = self.u.iter().all(|r| r.iter().all(|v| v.is_finite())) && self.y.iter().all(|r| r.iter().all(|v| v.is_finite()));
        require(all_finite, "data", "must be finite")?;
        for ch in 0..2 {
            if variance(self.y.iter().map(move |r| r[ch])) == 0.0 {
                return Err(Error::DegenerateData);
            }
        }
        Ok(())
    }

    /// Effective output weights.
    pub fn weights(&self) -> [f64; 2] {
        self.output_weights.unwrap_or_else(|| {
            let v0 = variance(self.y.iter().map(|r| r[0]));
            let v1 = variance(self.y.iter().map(|r| r[1]));
            [1.0 / v0, 1.0 / v1]
        })
    }
}

/// One accepted (or terminal) iteration of one start.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRow {
    pub start: usize,
    pub iteration: usize,
    pub loss: f64,
    pub predicted_relative_decrease: f64,
    pub damping: f64,
    pub theta: ParamVector,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IdentResult {
    pub theta_hat: ParamVector,
    pub fit_td: f64,
    pub fit_phi: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Weighted mean squared prediction error.
    pub final_loss: f64,
    /// Index of the winning start (0 = `theta0`).
    pub best_start: usize,
    pub trace: Vec<TraceRow>,
}

struct Evaluator<'a> {
    p: &'a IdentProblem,
    sw: [f64; 2],
    dt: f64,
}

impl Evaluator<'_> {
    fn residuals(&self, theta: &[f64; PARAM_COUNT]) -> Result<Vec<f64>> {
        let r = discretize(&realize(&ParamVector::from_array(theta), &self.p.fixed), self.dt)?;
        let yhat = simulate_discrete(&r, &self.p.u);
        let mut out = Vec::with_capacity(2 * yhat.len());
        for (y, yh) in self.p.y.iter().zip(&yhat) {
            out.push(self.sw[0] * (y[0] - yh[0]));
            out.push(self.sw[1] * (y[1] - yh[1]));
        }
        if out.iter().all(|v| v.is_finite()) {
            Ok(out)
        } else {
            Err(Error::Diverged)
        }
    }

    fn loss_of(&self, res: &[f64]) -> f64 {
        res.iter().map(|v| v * v).sum::<f64>() / self.p.y.len() as f64
    }

    fn jacobian(&self, theta: &[f64; PARAM_COUNT]) -> Result<Vec<Vec<f64>>> {
        (0..PARAM_COUNT)
            .map(|i| {
                let h = FD_RELATIVE_STEP * theta[i].abs().max(1.0);
                let mut tp = *theta;
                let mut tm = *theta;
                tp[i] += h;
                tm[i] -= h;
                let rp = self.residuals(&tp)?;
                let rm = self.residuals(&tm)?;
                Ok(rp.iter().zip(&rm).map(|(a, b)| -(a - b) / (2.0 * h)).collect())
            })
            .collect()
    }
}

type Mat6 = SMatrix<f64, PARAM_COUNT, PARAM_COUNT>;
type Vec6 = SVector<f64, PARAM_COUNT>;

/// Projected step and its predicted loss decrease (in summed-square units).
fn damped_step(h: &Mat6, g: &Vec6, lambda: f64, theta: &[f64; PARAM_COUNT], bounds: &ParamBounds) -> Option<([f64; PARAM_COUNT], f64)> {
    let mut m = *h;
    let floor = 1e-12 * h.trace().max(f64::MIN_POSITIVE);
    for i in 0..PARAM_COUNT {
        m[(i, i)] += lambda * h[(i, i)].max(floor) + floor;
    }
    let delta = m.cholesky()?.solve(&(-g));
    let mut next = *theta;
    for i in 0..PARAM_COUNT {
        next[i] += delta[i];
    }
    bounds.project(&mut next);
    let d = Vec6::from_fn(|i, _| next[i] - theta[i]);
    // model of |r(theta + d)|^2 - |r|^2 is 2 g.d + d'H d with g = J'r
    let pred = -(2.0 * g.dot(&d) + (d.transpose() * h * d)[0]);
    Some((next, pred))
}

struct StartOutcome {
    theta: [f64; PARAM_COUNT],
    loss: f64,
    iterations: usize,
    converged: bool,
}

fn run_start(ev: &Evaluator, start: usize, theta0: [f64; PARAM_COUNT], trace: &mut Vec<TraceRow>) -> Result<StartOutcome> {
    let bounds = &ev.p.bounds;
    let n = ev.p.y.len() as f64;
    let mut theta = theta0;
    let mut res = ev.residuals(&theta)?;
    let mut sse = ev.loss_of(&res) * n;
    let scale: f64 = ev.p.y.iter().map(|y| ev.sw[0] * ev.sw[0] * y[0] * y[0] + ev.sw[1] * ev.sw[1] * y[1] * y[1]).sum();
    let mut lambda = 1e-3;
    let push = |trace: &mut Vec<TraceRow>, it: usize, sse: f64, pred: f64, lambda: f64, theta: &[f64; PARAM_COUNT]| {
        trace.push(TraceRow { start, iteration: it, loss: sse / n, predicted_relative_decrease: pred, damping: lambda, theta: ParamVector::from_array(theta) });
    };

    for it in 0..ev.p.max_iterations {
        if sse <= 1e-24 * scale {
            push(trace, it, sse, 0.0, lambda, &theta);
            return Ok(StartOutcome { theta, loss: sse / n, iterations: it, converged: true });
        }
        let jac = ev.jacobian(&theta)?;
        let h = Mat6::from_fn(|i, j| jac[i].iter().zip(&jac[j]).map(|(a, b)| a * b).sum());
        let g = Vec6::from_fn(|i, _| -jac[i].iter().zip(&res).map(|(a, b)| a * b).sum::<f64>());

        let gn_pred = damped_step(&h, &g, 0.0, &theta, bounds).map_or(0.0, |(_, p)| p.max(0.0)) / sse;
        push(trace, it, sse, gn_pred, lambda, &theta);
        if gn_pred < STOP_RELATIVE_DECREASE {
            return Ok(StartOutcome { theta, loss: sse / n, iterations: it, converged: true });
        }

        let mut accepted = false;
        for _ in 0..40 {
            if let Some((next, pred)) = damped_step(&h, &g, lambda, &theta, bounds) {
                if pred > 0.0 {
                    if let Ok(r) = ev.residuals(&next) {
                        let s = ev.loss_of(&r) * n;
                        if s < sse {
                            theta = next;
                            res = r;
                            sse = s;
                            lambda = (lambda / 3.0).max(1e-9);
                            accepted = true;
                            break;
                        }
                    }
                }
            }
            lambda *= 10.0;
        }
        if !accepted {
            // no descent direction left inside the bounds
            push(trace, it + 1, sse, 0.0, lambda, &theta);
            return Ok(StartOutcome { theta, loss: sse / n, iterations: it + 1, converged: true });
        }
    }
    let cap = ev.p.max_iterations;
    push(trace, cap, sse, f64::NAN, lambda, &theta);
    Ok(StartOutcome { theta, loss: sse / n, iterations: cap, converged: false })
}

/// Starting points: `theta0` followed by Latin-hypercube samples of the bounds.
pub fn start_points(p: &IdentProblem) -> Vec<[f64; PARAM_COUNT]> {
    let extra = p.starts.saturating_sub(1);
    let mut rng = ChaCha8Rng::seed_from_u64(p.seed);
    let mut pts = alloc::vec![[0.0; PARAM_COUNT]; extra];
    for i in 0..PARAM_COUNT {
        let mut strata: Vec<usize> = (0..extra).collect();
        strata.shuffle(&mut rng);
        let (lo, hi) = p.bounds.0[i];
        for (pt, k) in pts.iter_mut().zip(strata) {
            let u: f64 = rng.random();
            pt[i] = lo + (hi - lo) * (k as f64 + u) / extra as f64;
        }
    }
    let mut out = alloc::vec![p.theta0.to_array()];
    out.extend(pts);
    out
}

/// Multi-start bounded prediction-error fit. The lowest final loss wins,
/// ties going to the earlier start.
pub fn pem_fit(p: &IdentProblem) -> Result<IdentResult> {
    p.validate()?;
    let w = p.weights();
    let ev = Evaluator { p, sw: [sqrt(w[0]), sqrt(w[1])], dt: 1.0 / p.sample_rate };
    let mut trace = Vec::new();
    let mut best: Option<(usize, StartOutcome)> = None;
    let mut first_err = None;
    for (k, t0) in start_points(p).into_iter().enumerate() {
        match run_start(&ev, k, t0, &mut trace) {
            Ok(o) => {
                if best.as_ref().is_none_or(|(_, b)| o.loss < b.loss) {
                    best = Some((k, o));
                }
            }
            Err(e) => {
                first_err.get_or_insert(e);
            }
        }
    }
    let Some((best_start, o)) = best else { return Err(first_err.unwrap_or(Error::Diverged)) };
    let theta_hat = ParamVector::from_array(&o.theta);
    let yhat = simulate_discrete(&discretize(&realize(&theta_hat, &p.fixed), ev.dt)?, &p.u);
    let chan = |c: usize, src: &[[f64; 2]]| src.iter().map(|r| r[c]).collect::<Vec<f64>>();
    Ok(IdentResult {
        theta_hat,
        fit_td: fit_percent(&chan(0, &p.y), &chan(0, &yhat))?,
        fit_phi: fit_percent(&chan(1, &p.y), &chan(1, &yhat))?,
        iterations: o.iterations,
        converged: o.converged,
        final_loss: o.loss,
        best_start,
        trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::course::PreviewErrors;
    use crate::driver::{driver_outputs, driver_step, DriverInputs, DriverParams, DriverState, NeuromuscularParams};
    use crate::math::{cos, sin};
    use crate::ode::rk4_step;

    fn inputs(n: usize, rate: f64) -> Vec<[f64; 4]> {
        (0..n)
            .map(|k| {
                let t = k as f64 / rate;
                [0.3 * sin(0.7 * t) + 0.1 * sin(3.1 * t), 0.02 * cos(0.4 * t) + 0.01 * sin(2.3 * t), 0.05 * sin(1.3 * t + 0.5), 0.8 * sin(0.9 * t) + 0.3 * cos(4.0 * t)]
            })
            .collect()
    }

    fn truth() -> ParamVector {
        ParamVector { a1: 0.12, a2: 0.05, a4: 3.9, t_p: 0.12, k_d: 3.2, k_hf: 0.5 }
    }

    fn block_params(p: &ParamVector, f: &FixedParams) -> (DriverParams, NeuromuscularParams) {
        let dp = DriverParams { a1: p.a1, a2: p.a2, a3: 0.0, a4: p.a4, t_p: p.t_p, ..DriverParams::normal() };
        let np = NeuromuscularParams { k_d: p.k_d, k_hf: p.k_hf, k_nms: f.k_nms, t_nms: f.t_nms };
        (dp, np)
    }

    fn block_inputs(u: &[f64; 4]) -> DriverInputs {
        DriverInputs { errors: PreviewErrors { e_y: u[0], e_theta: u[1] }, e_y_dot: 0.0, phi: u[2], t_h: u[3] }
    }

    #[test]
    fn integrator_zoh() {
        let r = Realization { a: Mat3::zeros(), b: SMatrix::<f64, 3, 4>::identity(), c: SMatrix::zeros(), d: SMatrix::zeros() };
        let d = discretize(&r, 0.01).unwrap();
        assert!((d.a - Mat3::identity()).norm() < 1e-15);
        assert!((d.b - SMatrix::<f64, 3, 4>::identity() * 0.01).norm() < 1e-15);
    }

    #[test]
    fn scalar_decay_zoh() {
        let r = Realization { a: -Mat3::identity(), b: SMatrix::zeros(), c: SMatrix::zeros(), d: SMatrix::zeros() };
        let d = discretize(&r, 0.1).unwrap();
        assert!((d.a[(0, 0)] - libm::exp(-0.1)).abs() < 1e-14);
    }

    #[test]
    fn statespace_matches_block_with_same_integrator() {
        let (f, p) = (FixedParams::default(), truth());
        let (dp, np) = block_params(&p, &f);
        let r = realize_statespace(&p, &f).unwrap();
        let u = inputs(1200, 120.0);
        let dt = 1.0 / 120.0;
        let mut ds = DriverState::default();
        let mut x = [0.0; 3];
        for uk in &u {
            let inp = block_inputs(uk);
            let (phi_t, t_d) = driver_outputs(&dp, &ds, &inp);
            let xv = SVector::<f64, 3>::from_column_slice(&x);
            let uv = SVector::<f64, 4>::from_column_slice(uk);
            let y = r.c * xv + r.d * uv;
            assert!((y[0] - t_d).abs() < 1e-8 && (y[1] - phi_t).abs() < 1e-8);
            ds = driver_step(&dp, &np, &ds, &inp, dt);
            let mut fx = |_t: f64, s: &[f64; 3]| {
                let d = r.a * SVector::<f64, 3>::from_column_slice(s) + r.b * uv;
                [d[0], d[1], d[2]]
            };
            x = rk4_step(&mut fx, 0.0, &x, dt);
        }
    }

    #[test]
    fn zoh_matches_fine_block_simulation() {
        let (f, p) = (FixedParams::default(), truth());
        let (dp, np) = block_params(&p, &f);
        let rate = 120.0;
        let u = inputs(1200, rate);
        let yd = simulate_discrete(&discretize(&realize_statespace(&p, &f).unwrap(), 1.0 / rate).unwrap(), &u);
        let sub = 64;
        let h = 1.0 / rate / sub as f64;
        let mut ds = DriverState::default();
        for (uk, y) in u.iter().zip(&yd) {
            let inp = block_inputs(uk);
            let (phi_t, t_d) = driver_outputs(&dp, &ds, &inp);
            assert!((y[0] - t_d).abs() < 1e-8, "{} {}", y[0], t_d);
            assert!((y[1] - phi_t).abs() < 1e-8);
            for _ in 0..sub {
                ds = driver_step(&dp, &np, &ds, &inp, h);
            }
        }
    }

    #[test]
    fn zero_visual_gains_decouple_errors() {
        let p = ParamVector { a1: 0.0, a2: 0.0, a4: 0.0, ..truth() };
        let r = discretize(&realize_statespace(&p, &FixedParams::default()).unwrap(), 1.0 / 120.0).unwrap();
        let u = inputs(600, 120.0);
        let mut u2 = u.clone();
        for row in &mut u2 {
            row[0] *= -3.0;
            row[1] += 0.5;
        }
        let (y1, y2) = (simulate_discrete(&r, &u), simulate_discrete(&r, &u2));
        assert!(y1.iter().zip(&y2).all(|(a, b)| a[0] == b[0]));
    }

    #[test]
    fn dc_gain_matches_neuromuscular_steady_state() {
        let p = ParamVector { a2: 0.0, ..truth() };
        let f = FixedParams::default();
        let r = realize_statespace(&p, &f).unwrap();
        // integrator state decoupled when a2 = 0: drop it and solve the 2x2 block
        let a = r.a.fixed_view::<2, 2>(1, 1).into_owned();
        let b = r.b.fixed_view::<2, 4>(1, 0).into_owned();
        let c = r.c.fixed_view::<2, 2>(0, 1).into_owned();
        let g = -c * a.try_inverse().unwrap() * b + r.d;
        let u = [0.2, -0.01, 0.03, 1.5];
        let y = g * SVector::<f64, 4>::from_column_slice(&u);
        let phi_t = -p.a1 * u[0] + p.a4 * u[1];
        let t_d = (p.k_d + f.k_nms) * phi_t - f.k_nms * u[2] - p.k_hf * u[3];
        assert!((y[1] - phi_t).abs() < 1e-12);
        assert!((y[0] - t_d).abs() < 1e-12);
    }

    fn synthetic(theta: &ParamVector) -> IdentProblem {
        let rate = 120.0;
        let u = inputs(3000, rate);
        let y = simulate_discrete(&discretize(&realize(theta, &FixedParams::default()), 1.0 / rate).unwrap(), &u);
        IdentProblem::new(u, y, rate)
    }

    #[test]
    fn starting_at_truth_converges_immediately() {
        let mut p = synthetic(&truth());
        p.theta0 = truth();
        p.starts = 1;
        let r = pem_fit(&p).unwrap();
        assert!(r.converged);
        assert!(r.iterations <= 2);
        let w = p.weights();
        let scale = p.y.iter().map(|y| w[0] * y[0] * y[0] + w[1] * y[1] * y[1]).sum::<f64>() / p.y.len() as f64;
        assert!(r.final_loss < 1e-12 * scale);
    }

    #[test]
    fn recovers_synthetic_parameters() {
        let p = synthetic(&truth());
        let r = pem_fit(&p).unwrap();
        assert!(r.converged);
        assert!(r.fit_td > 99.9 && r.fit_phi > 99.9, "{} {}", r.fit_td, r.fit_phi);
        for (i, (a, b)) in r.theta_hat.to_array().iter().zip(truth().to_array()).enumerate() {
            assert!((a - b).abs() < 1e-3 * p.bounds.width(i), "{}: {a} vs {b}", ParamVector::NAMES[i]);
        }
    }

    #[test]
    fn accepted_losses_never_increase_and_stay_feasible() {
        let mut p = synthetic(&truth());
        p.starts = 3;
        let r = pem_fit(&p).unwrap();
        for s in 0..3 {
            let losses: Vec<f64> = r.trace.iter().filter(|t| t.start == s).map(|t| t.loss).collect();
            assert!(losses.windows(2).all(|w| w[1] <= w[0]));
        }
        assert!(r.trace.iter().all(|t| p.bounds.contains(&t.theta)));
        assert!(p.bounds.contains(&r.theta_hat));
    }

    #[test]
    fn latin_hypercube_points_cover_each_stratum() {
        let p = synthetic(&truth());
        let pts = start_points(&p);
        assert_eq!(pts.len(), DEFAULT_STARTS);
        assert_eq!(pts[0], ParamVector::defaults().to_array());
        for i in 0..PARAM_COUNT {
            let (lo, hi) = p.bounds.0[i];
            let mut strata: Vec<usize> = pts[1..].iter().map(|q| ((q[i] - lo) / (hi - lo) * 4.0) as usize).collect();
            strata.sort();
            assert_eq!(strata, [0, 1, 2, 3]);
        }
        assert_eq!(start_points(&p), pts);
    }

    #[test]
    fn degenerate_and_short_data() {
        let p = IdentProblem::new(alloc::vec![[0.0; 4]; 200], alloc::vec![[0.0; 2]; 200], 120.0);
        assert_eq!(pem_fit(&p).unwrap_err(), Error::DegenerateData);
        let p = IdentProblem::new(alloc::vec![[0.0; 4]; 50], alloc::vec![[0.0; 2]; 50], 120.0);
        assert!(matches!(pem_fit(&p), Err(Error::SeriesTooShort { .. })));
    }

    #[test]
    fn fit_percent_cases() {
        assert_eq!(fit_percent(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]).unwrap(), 100.0);
        assert_eq!(fit_percent(&[1.0, 2.0, 3.0], &[2.0, 2.0, 2.0]).unwrap(), 0.0);
        assert!(fit_percent(&[1.0, 1.0], &[1.0, 1.0]).is_err());
    }

    #[test]
    fn second_output_improves_closed_loop_reproduction() {
        use crate::driver::VisionMode;
        use crate::guidance::GuidanceLevel;
        use crate::simloop::{simulate, Condition, Scenario};

        // the degraded-attention driver lies outside the model bounds (t_p),
        // as measured human steering does
        let sc = Condition { vision: VisionMode::DeclinedAttention, guidance: GuidanceLevel::Normal }.apply(&Scenario::default());
        let log = simulate(&sc).unwrap();
        let both = IdentProblem::from_log(&log, true);
        let mut torque_only = both.clone();
        let w = both.weights();
        torque_only.output_weights = Some([w[0], 0.0]);

        let deviation = |p: &IdentProblem| {
            let th = pem_fit(p).unwrap().theta_hat;
            let mut re = sc.clone();
            re.driver = DriverParams { a1: th.a1, a2: th.a2, a4: th.a4, t_p: th.t_p, ..re.driver };
            re.neuromuscular = NeuromuscularParams { k_d: th.k_d, k_hf: th.k_hf, ..re.neuromuscular };
            let rl = simulate(&re).unwrap();
            let ss: f64 = rl.records.iter().zip(&log.records).map(|(a, b)| (a.lateral_offset - b.lateral_offset).powi(2)).sum();
            sqrt(ss / log.len() as f64)
        };
        let (e_both, e_torque) = (deviation(&both), deviation(&torque_only));
        assert!(e_both < e_torque, "two outputs {e_both}, torque only {e_torque}");
    }
}
