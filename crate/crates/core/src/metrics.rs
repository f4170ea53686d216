//! Lane-keeping, steering and gaze metrics over simulated or ingested logs.

use alloc::vec::Vec;

use crate::course::Course;
use crate::error::{require, Error, Result};
use crate::math::{abs, cos, floor, hypot, sin, sqrt};
use crate::simloop::SimLog;

/// Default reversal gap for the steering reversal rate: 3 degrees.
pub const DEFAULT_ALPHA: f64 = 3.0 * core::f64::consts::PI / 180.0;
/// Default steering threshold marking the start of a turn: 3 degrees.
pub const DEFAULT_TURN_THRESHOLD: f64 = 3.0 * core::f64::consts::PI / 180.0;
pub const DEFAULT_TLC_HORIZON: f64 = 20.0;
pub const TLC_PATH_STEP: f64 = 0.1;
/// Openness at or below which the eye counts as closed (80% closure).
pub const PERCLOS_CLOSED: f64 = 0.2;
pub const PRC_BIN_DEG: f64 = 0.5;
pub const DEFAULT_PRC_RADIUS_DEG: f64 = 6.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LaneGeometry {
    pub lane_width: f64,
    /// Distance to the boundary at which the predicted path counts as crossing.
    pub boundary_threshold: f64,
}

impl LaneGeometry {
    pub fn new(lane_width: f64) -> Result<Self> {
        let g = LaneGeometry { lane_width, boundary_threshold: 0.1 };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        require(self.lane_width > 0.0, "lane_width_m", "must be positive")?;
        require(
            self.boundary_threshold > 0.0 && self.boundary_threshold < self.lane_width / 2.0,
            "boundary_threshold_m",
            "must lie in (0, lane_width/2)",
        )
    }
}

/// Standard deviation of lateral position with the N-1 divisor.
pub fn sdlp(lateral_positions: &[f64]) -> Result<f64> {
    let n = lateral_positions.len();
    if n < 2 {
        return Err(Error::SeriesTooShort { needed: 2, got: n });
    }
    // shifted by the first sample so a constant series gives exactly zero
    let x0 = lateral_positions[0];
    let mean = lateral_positions.iter().map(|x| x - x0).sum::<f64>() / n as f64;
    let ss: f64 = lateral_positions.iter().map(|x| (x - x0 - mean) * (x - x0 - mean)).sum();
    Ok(sqrt(ss / (n - 1) as f64))
}

/// Mean absolute lateral error from the centerline.
pub fn male(lateral_errors: &[f64]) -> Result<f64> {
    if lateral_errors.is_empty() {
        return Err(Error::SeriesTooShort { needed: 1, got: 0 });
    }
    Ok(lateral_errors.iter().map(|e| abs(*e)).sum::<f64>() / lateral_errors.len() as f64)
}

/// Relative SDLP change in percent.
pub fn sdlp_var(sdlp_before: f64, sdlp_during: f64) -> Result<f64> {
    if sdlp_before <= 0.0 {
        return Err(Error::ZeroBaseline);
    }
    Ok((sdlp_during / sdlp_before - 1.0) * 100.0)
}

/// Time to lane crossing for every log sample, `None` where the predicted
/// path stays in the lane for the whole horizon.
///
/// The predicted path keeps the current speed and yaw rate (a circle, or a
/// straight line when |r| < 1e-6) and is walked in 0.1 m steps from the
/// center of gravity until it comes within the boundary threshold of either
/// lane edge of `course`.
pub fn tlc_series(log: &SimLog, geom: &LaneGeometry, course: &Course, horizon: f64) -> Vec<Option<f64>> {
    let v = log.speed;
    if !(v > 0.0) {
        return alloc::vec![None; log.len()];
    }
    let max_steps = floor(v * horizon / TLC_PATH_STEP) as usize;
    let limit = geom.lane_width / 2.0 - geom.boundary_threshold;
    log.records
        .iter()
        .map(|rec| {
            let chi0 = rec.psi + rec.beta;
            let kappa = rec.r / v;
            // the offset changes at most 1 m per metre of path, so grid points
            // closer than the remaining margin cannot cross
            let mut k = 0;
            while k <= max_steps {
                let l = k as f64 * TLC_PATH_STEP;
                let p = path_point(rec.x, rec.y, chi0, kappa, rec.r, l);
                match course.project(p) {
                    Ok(pr) if abs(pr.offset) <= limit => {
                        let skip = floor((limit - abs(pr.offset)) / TLC_PATH_STEP) as usize;
                        k += skip.max(1);
                    }
                    _ => return Some(l / v),
                }
            }
            None
        })
        .collect()
}

fn path_point(x: f64, y: f64, chi0: f64, kappa: f64, r: f64, l: f64) -> [f64; 2] {
    if abs(r) < 1e-6 {
        [x + l * cos(chi0), y + l * sin(chi0)]
    } else {
        let chi = chi0 + kappa * l;
        [x + (sin(chi) - sin(chi0)) / kappa, y - (cos(chi) - cos(chi0)) / kappa]
    }
}

/// Mean of the lowest 10% of present TLC samples; `None` with fewer than ten.
pub fn tlc_low10_mean(tlc: &[Option<f64>]) -> Option<f64> {
    let mut present: Vec<f64> = tlc.iter().flatten().copied().collect();
    if present.len() < 10 {
        return None;
    }
    present.sort_by(f64::total_cmp);
    let k = present.len() / 10;
    Some(present[..k].iter().sum::<f64>() / k as f64)
}

/// Number of steering direction reversals larger than `alpha` (gap method).
///
/// After the first `alpha` excursion fixes a direction, the running extremum
/// is tracked; a move of at least `alpha` back from it is one reversal.
pub fn count_reversals(angles: &[f64], alpha: f64) -> usize {
    #[derive(PartialEq)]
    enum Dir {
        Unknown,
        Up,
        Down,
    }
    let Some(&first) = angles.first() else { return 0 };
    let (mut lo, mut hi) = (first, first);
    let mut dir = Dir::Unknown;
    let mut ext = first;
    let mut count = 0;
    for &a in &angles[1..] {
        match dir {
            Dir::Unknown => {
                lo = lo.min(a);
                hi = hi.max(a);
                if a - lo >= alpha {
                    dir = Dir::Up;
                    ext = a;
                } else if hi - a >= alpha {
                    dir = Dir::Down;
                    ext = a;
                }
            }
            Dir::Up => {
                if a > ext {
                    ext = a;
                } else if ext - a >= alpha {
                    count += 1;
                    dir = Dir::Down;
                    ext = a;
                }
            }
            Dir::Down => {
                if a < ext {
                    ext = a;
                } else if a - ext >= alpha {
                    count += 1;
                    dir = Dir::Up;
                    ext = a;
                }
            }
        }
    }
    count
}

/// Steering wheel reversal rate [reversals/min].
pub fn swrr(steering_angles: &[f64], duration: f64, alpha: f64) -> Result<f64> {
    require(duration > 0.0, "duration_s", "must be positive")?;
    Ok(count_reversals(steering_angles, alpha) as f64 * 60.0 / duration)
}

/// Arc-length offset of the turn start from `junction_s`: the foot point of
/// the first sample with |phi| at or above `threshold`, minus `junction_s`.
pub fn turn_start(log: &SimLog, junction_s: f64, threshold: f64) -> Result<f64> {
    turn_start_within(log, junction_s, threshold, f64::NEG_INFINITY, f64::INFINITY)
}

/// [`turn_start`] restricted to samples whose foot point lies in `[s0, s1)`.
pub fn turn_start_within(log: &SimLog, junction_s: f64, threshold: f64, s0: f64, s1: f64) -> Result<f64> {
    log.between_s(s0, s1)
        .find(|r| abs(r.phi) >= threshold)
        .map(|r| r.s_foot - junction_s)
        .ok_or(Error::NoCrossing)
}

/// PERCLOS P80 per 60 s window [%]. A trailing partial window is reported on
/// its own samples.
pub fn perclos_p80(openness: &[f64], rate: f64) -> Result<Vec<f64>> {
    require(rate > 0.0, "rate_Hz", "must be positive")?;
    if openness.is_empty() {
        return Err(Error::SeriesTooShort { needed: 1, got: 0 });
    }
    let window = ((60.0 * rate) as usize).max(1);
    Ok(openness
        .chunks(window)
        .map(|w| 100.0 * w.iter().filter(|o| **o <= PERCLOS_CLOSED).count() as f64 / w.len() as f64)
        .collect())
}

/// Percent road center: share of gaze samples within `radius` degrees of the
/// modal gaze direction.
///
/// The mode is the centroid of the densest 0.5 degree bin; ties go to the bin
/// that was filled first.
pub fn prc(gaze: &[[f64; 2]], radius: f64) -> Result<f64> {
    if gaze.is_empty() {
        return Err(Error::SeriesTooShort { needed: 1, got: 0 });
    }
    // (bin, count, sum yaw, sum pitch) in first-seen order
    let mut bins: Vec<((i64, i64), usize, f64, f64)> = Vec::new();
    let mut index = alloc::collections::BTreeMap::new();
    for g in gaze {
        let key = (floor(g[0] / PRC_BIN_DEG) as i64, floor(g[1] / PRC_BIN_DEG) as i64);
        let i = *index.entry(key).or_insert_with(|| {
            bins.push((key, 0, 0.0, 0.0));
            bins.len() - 1
        });
        bins[i].1 += 1;
        bins[i].2 += g[0];
        bins[i].3 += g[1];
    }
    let mut best = &bins[0];
    for b in &bins[1..] {
        if b.1 > best.1 {
            best = b;
        }
    }
    let center = [best.2 / best.1 as f64, best.3 / best.1 as f64];
    let inside = gaze.iter().filter(|g| hypot(g[0] - center[0], g[1] - center[1]) <= radius + 1e-9).count();
    Ok(100.0 * inside as f64 / gaze.len() as f64)
}

/// Foot-point intervals `[start, end)` of the arc segments of `course`.
pub fn curve_intervals(course: &Course) -> Vec<(f64, f64)> {
    course
        .segment_starts()
        .zip(course.segments())
        .filter(|(_, seg)| seg.curvature != 0.0)
        .map(|(s0, seg)| (s0, s0 + seg.length))
        .collect()
}

fn on_curve(s: f64, curves: &[(f64, f64)]) -> bool {
    curves.iter().any(|(a, b)| s >= *a && s < *b)
}

/// Largest |lateral_offset| over samples whose foot point lies on an arc.
pub fn curve_max_abs_offset(log: &SimLog, course: &Course) -> Option<f64> {
    let curves = curve_intervals(course);
    log.records.iter().filter(|r| on_curve(r.s_foot, &curves)).map(|r| abs(r.lateral_offset)).reduce(f64::max)
}

/// SDLP over samples whose foot point lies on a straight segment.
pub fn straight_sdlp(log: &SimLog, course: &Course) -> Result<f64> {
    let curves = curve_intervals(course);
    let xs: Vec<f64> = log.records.iter().filter(|r| !on_curve(r.s_foot, &curves)).map(|r| r.lateral_offset).collect();
    sdlp(&xs)
}

pub fn peak_abs(values: impl IntoIterator<Item = f64>) -> Option<f64> {
    values.into_iter().map(abs).reduce(f64::max)
}

/// Time after `t0` from which |signal| stays within `fraction` of its peak
/// magnitude after `t0`, measured from `t0`. `None` without samples after
/// `t0` or when the peak is zero.
pub fn settling_time(t: &[f64], signal: &[f64], t0: f64, fraction: f64) -> Option<f64> {
    let after: Vec<(f64, f64)> = t.iter().zip(signal).filter(|(ti, _)| **ti >= t0).map(|(a, b)| (*a, abs(*b))).collect();
    let peak = after.iter().map(|p| p.1).reduce(f64::max)?;
    if peak == 0.0 {
        return None;
    }
    let band = fraction * peak;
    let last_out = after.iter().rposition(|p| p.1 > band);
    Some(match last_out {
        Some(i) if i + 1 < after.len() => after[i + 1].0 - t0,
        Some(i) => after[i].0 - t0,
        None => 0.0,
    })
}

/// Summary of one log.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct MetricReport {
    pub sdlp: f64,
    pub male: f64,
    pub tlc_low10_mean: Option<f64>,
    pub swrr: f64,
    pub sdlp_var: Option<f64>,
    /// One entry per curve entry on the course, in course order.
    pub turn_start_offsets: Vec<Option<f64>>,
    pub perclos: Option<f64>,
    pub prc: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReportOptions {
    pub geometry: LaneGeometry,
    pub alpha: f64,
    pub tlc_horizon: f64,
    pub turn_threshold: f64,
    /// Time splitting the log into a baseline and a comparison part for the
    /// relative SDLP change.
    pub sdlp_split: Option<f64>,
}

impl ReportOptions {
    pub fn new(lane_width: f64) -> Result<Self> {
        Ok(ReportOptions {
            geometry: LaneGeometry::new(lane_width)?,
            alpha: DEFAULT_ALPHA,
            tlc_horizon: DEFAULT_TLC_HORIZON,
            turn_threshold: DEFAULT_TURN_THRESHOLD,
            sdlp_split: None,
        })
    }
}

impl MetricReport {
    /// Lane-keeping and steering metrics of a log on `course`. Gaze and
    /// eyelid metrics are left empty.
    pub fn from_log(log: &SimLog, course: &Course, opts: &ReportOptions) -> Result<Self> {
        opts.geometry.validate()?;
        let offsets = log.series(|r| r.lateral_offset);
        let phi = log.series(|r| r.phi);
        let duration = match (log.records.first(), log.records.last()) {
            (Some(a), Some(b)) if b.t > a.t => b.t - a.t,
            _ => return Err(Error::SeriesTooShort { needed: 2, got: log.len() }),
        };
        let tlc = tlc_series(log, &opts.geometry, course, opts.tlc_horizon);

        let sdlp_var = match opts.sdlp_split {
            Some(t) => {
                let before: Vec<f64> = log.between_t(f64::NEG_INFINITY, t).map(|r| r.lateral_offset).collect();
                let after: Vec<f64> = log.between_t(t, f64::INFINITY).map(|r| r.lateral_offset).collect();
                Some(sdlp_var(sdlp(&before)?, sdlp(&after)?)?)
            }
            None => None,
        };

        // curve entries: junctions where an arc follows a straight
        let starts: Vec<f64> = course.segment_starts().collect();
        let segs = course.segments();
        let entries: Vec<f64> = (1..segs.len())
            .filter(|&k| segs[k].curvature != 0.0 && segs[k - 1].curvature == 0.0)
            .map(|k| starts[k])
            .collect();
        let turn_start_offsets = entries
            .iter()
            .enumerate()
            .map(|(i, &j)| {
                let lo = if i == 0 { f64::NEG_INFINITY } else { 0.5 * (entries[i - 1] + j) };
                let hi = entries.get(i + 1).map_or(f64::INFINITY, |n| 0.5 * (j + n));
                turn_start_within(log, j, opts.turn_threshold, lo, hi).ok()
            })
            .collect();

        Ok(MetricReport {
            sdlp: sdlp(&offsets)?,
            male: male(&offsets)?,
            tlc_low10_mean: tlc_low10_mean(&tlc),
            swrr: swrr(&phi, duration, opts.alpha)?,
            sdlp_var,
            turn_start_offsets,
            perclos: None,
            prc: None,
        })
    }
}
