//! Road centerline geometry and the near/far preview errors seen by the driver
//! and by the guidance controller.
//!
//! A course is a chain of straight and circular-arc segments joined with
//! continuous position and heading. Arc length `s` runs from 0 at the start.
//! Signs: lateral offsets are positive to the left of the road tangent, and
//! the yaw error is road tangent minus vehicle heading.

use alloc::vec::Vec;

use crate::error::{require, Error, Result};
use crate::math::{abs, atan2, cos, hypot, sin, wrap_angle, PI};

/// Largest distance from the centerline at which a point is still "on course".
pub const CORRIDOR_HALF_WIDTH: f64 = 50.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SegmentKind {
    Straight,
    Arc,
}

/// One piece of the centerline. `curvature` is signed (positive turns left).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Segment {
    pub kind: SegmentKind,
    pub length: f64,
    pub curvature: f64,
}

impl Segment {
    pub fn straight(length: f64) -> Result<Self> {
        let seg = Segment { kind: SegmentKind::Straight, length, curvature: 0.0 };
        seg.validate()?;
        Ok(seg)
    }

    /// Arc with a signed curvature (1/radius, positive for a left turn).
    pub fn arc(length: f64, curvature: f64) -> Result<Self> {
        let seg = Segment { kind: SegmentKind::Arc, length, curvature };
        seg.validate()?;
        Ok(seg)
    }

    /// Arc from a radius and a turn direction.
    pub fn arc_with_radius(length: f64, radius: f64, left: bool) -> Result<Self> {
        require(radius > 0.0 && radius.is_finite(), "radius_m", "must be positive")?;
        Self::arc(length, if left { 1.0 / radius } else { -1.0 / radius })
    }

    fn validate(&self) -> Result<()> {
        require(self.length > 0.0 && self.length.is_finite(), "length_m", "must be positive")?;
        match self.kind {
            SegmentKind::Straight => require(self.curvature == 0.0, "curvature", "straight segment must have zero curvature"),
            SegmentKind::Arc => {
                require(self.curvature != 0.0 && self.curvature.is_finite(), "curvature", "arc needs non-zero curvature")?;
                require(abs(self.curvature) * self.length < 2.0 * PI, "length_m", "arc must sweep less than a full turn")
            }
        }
    }
}

/// Position, tangent heading and curvature of a centerline point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CenterPoint {
    pub position: [f64; 2],
    pub heading: f64,
    pub curvature: f64,
}

/// Vehicle position and heading in the course frame.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Pose {
    pub x: f64,
    pub y: f64,
    pub psi: f64,
}

/// Lateral error at the near point and yaw error at the far point.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PreviewErrors {
    pub e_y: f64,
    pub e_theta: f64,
}

/// Time derivatives of [`PreviewErrors`] along the vehicle motion.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PreviewRates {
    pub e_y_dot: f64,
    pub e_theta_dot: f64,
}

/// Closest centerline point to a query point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Projection {
    /// Arc length of the foot point. Points beyond either end project onto
    /// the tangent extension, so `s` may fall outside `[0, total_length]`.
    pub s: f64,
    /// Signed distance, positive to the left of the tangent.
    pub offset: f64,
    pub heading: f64,
    pub curvature: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Anchor {
    s: f64,
    position: [f64; 2],
    heading: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Course {
    segments: Vec<Segment>,
    anchors: Vec<Anchor>,
    lane_width: f64,
    end: Anchor,
}

impl Course {
    /// Builds a course starting at the origin heading along +X.
    pub fn new(segments: Vec<Segment>, lane_width: f64) -> Result<Self> {
        Self::with_origin(segments, lane_width, [0.0, 0.0], 0.0)
    }

    pub fn with_origin(segments: Vec<Segment>, lane_width: f64, origin: [f64; 2], heading: f64) -> Result<Self> {
        require(!segments.is_empty(), "segments", "course needs at least one segment")?;
        require(lane_width > 0.0 && lane_width.is_finite(), "lane_width_m", "must be positive")?;
        for seg in &segments {
            seg.validate()?;
        }
        let mut anchors = Vec::with_capacity(segments.len());
        let mut cur = Anchor { s: 0.0, position: origin, heading };
        for seg in &segments {
            anchors.push(cur);
            let p = local_point(seg, &cur, seg.length);
            cur = Anchor { s: cur.s + seg.length, position: p.position, heading: p.heading };
        }
        Ok(Course { segments, anchors, lane_width, end: cur })
    }

    /// 1000 m straight, a 314 m left arc of radius 200 m, then a 500 m exit
    /// straight, in a 3.6 m lane.
    pub fn curve_negotiation() -> Self {
        let segments = alloc::vec![
            Segment { kind: SegmentKind::Straight, length: 1000.0, curvature: 0.0 },
            Segment { kind: SegmentKind::Arc, length: 314.0, curvature: 1.0 / 200.0 },
            Segment { kind: SegmentKind::Straight, length: 500.0, curvature: 0.0 },
        ];
        Course::new(segments, 3.6).expect("static course is valid")
    }

    /// Single straight of the given length in a 3.6 m lane.
    pub fn straight(length: f64) -> Result<Self> {
        Course::new(alloc::vec![Segment::straight(length)?], 3.6)
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn lane_width(&self) -> f64 {
        self.lane_width
    }

    pub fn total_length(&self) -> f64 {
        self.end.s
    }

    /// Arc lengths at which each segment starts.
    pub fn segment_starts(&self) -> impl Iterator<Item = f64> + '_ {
        self.anchors.iter().map(|a| a.s)
    }

    /// Exact point, tangent and curvature at arc length `s`.
    pub fn centerline_at(&self, s: f64) -> Result<CenterPoint> {
        if !(0.0..=self.total_length()).contains(&s) {
            return Err(Error::OutOfRange { s, total_length: self.total_length() });
        }
        Ok(self.point_extended(s))
    }

    /// Like [`centerline_at`](Self::centerline_at) but continues along the end
    /// tangents outside the course.
    pub fn point_extended(&self, s: f64) -> CenterPoint {
        if s < 0.0 {
            let a = &self.anchors[0];
            return CenterPoint { position: along(a, s), heading: a.heading, curvature: 0.0 };
        }
        if s > self.end.s {
            return CenterPoint { position: along(&self.end, s - self.end.s), heading: self.end.heading, curvature: 0.0 };
        }
        let k = self.segment_index(s);
        local_point(&self.segments[k], &self.anchors[k], s - self.anchors[k].s)
    }

    fn segment_index(&self, s: f64) -> usize {
        // segment k covers [start_k, start_{k+1}); the last one also owns the end point
        let idx = self.anchors.partition_point(|a| a.s <= s);
        idx.saturating_sub(1).min(self.segments.len() - 1)
    }

    /// Closest centerline point, including the tangent extensions past both ends.
    pub fn project(&self, p: [f64; 2]) -> Result<Projection> {
        let mut best: Option<(f64, f64)> = None; // (distance, s)
        let mut consider = |d: f64, s: f64| match best {
            Some((bd, _)) if d >= bd => {}
            _ => best = Some((d, s)),
        };

        let first = &self.anchors[0];
        let u0 = dot(sub(p, first.position), tangent(first.heading));
        if u0 < 0.0 {
            consider(hypot_v(sub(p, along(first, u0))), u0);
        }
        for (seg, anchor) in self.segments.iter().zip(&self.anchors) {
            let u = project_on_segment(seg, anchor, p);
            let q = local_point(seg, anchor, u);
            consider(hypot_v(sub(p, q.position)), anchor.s + u);
        }
        let ue = dot(sub(p, self.end.position), tangent(self.end.heading));
        if ue > 0.0 {
            consider(hypot_v(sub(p, along(&self.end, ue))), self.end.s + ue);
        }

        let (dist, s) = best.expect("at least one segment");
        if dist > CORRIDOR_HALF_WIDTH {
            return Err(Error::OffCourse { distance: dist });
        }
        let c = self.point_extended(s);
        let offset = cross(tangent(c.heading), sub(p, c.position));
        Ok(Projection { s, offset, heading: c.heading, curvature: c.curvature })
    }

    /// Arc length of the closest centerline point to `p`.
    pub fn foot_point(&self, p: [f64; 2]) -> Result<f64> {
        self.project(p).map(|pr| pr.s)
    }

    /// Near/far preview errors for a vehicle at `pose` moving at speed `v`.
    /// With `t_far = None` the far point is disabled and `e_theta` is 0.
    pub fn preview_errors(&self, pose: Pose, v: f64, t_near: f64, t_far: Option<f64>) -> Result<PreviewErrors> {
        let (err, _) = self.preview(pose, [v * cos(pose.psi), v * sin(pose.psi)], 0.0, v, t_near, t_far)?;
        Ok(err)
    }

    /// Preview errors together with their exact time derivatives, given the
    /// vehicle's ground velocity and yaw rate.
    pub fn preview(
        &self,
        pose: Pose,
        velocity: [f64; 2],
        yaw_rate: f64,
        v: f64,
        t_near: f64,
        t_far: Option<f64>,
    ) -> Result<(PreviewErrors, PreviewRates)> {
        let (sp, cp) = (sin(pose.psi), cos(pose.psi));
        let reach = v * t_near;
        let near = [pose.x + reach * cp, pose.y + reach * sp];
        let near_proj = self.project(near)?;
        let near_vel = [velocity[0] - reach * yaw_rate * sp, velocity[1] + reach * yaw_rate * cp];
        // the foot point slides along the curve, so only the normal velocity changes the offset
        let e_y_dot = dot(normal(near_proj.heading), near_vel);

        let (e_theta, e_theta_dot) = match t_far {
            None => (0.0, 0.0),
            Some(t_far) => {
                let own = self.project([pose.x, pose.y])?;
                let far = self.point_extended(own.s + v * t_far);
                let s_dot = dot(tangent(own.heading), velocity) / (1.0 - own.curvature * own.offset);
                (wrap_angle(far.heading - pose.psi), far.curvature * s_dot - yaw_rate)
            }
        };
        Ok((PreviewErrors { e_y: near_proj.offset, e_theta }, PreviewRates { e_y_dot, e_theta_dot }))
    }
}

fn local_point(seg: &Segment, a: &Anchor, u: f64) -> CenterPoint {
    match seg.kind {
        SegmentKind::Straight => CenterPoint { position: along(a, u), heading: a.heading, curvature: 0.0 },
        SegmentKind::Arc => {
            let k = seg.curvature;
            let h = a.heading + k * u;
            let position = [
                a.position[0] + (sin(h) - sin(a.heading)) / k,
                a.position[1] - (cos(h) - cos(a.heading)) / k,
            ];
            CenterPoint { position, heading: h, curvature: k }
        }
    }
}

/// Local arc parameter of the closest point on one segment, clamped to it.
fn project_on_segment(seg: &Segment, a: &Anchor, p: [f64; 2]) -> f64 {
    let u = match seg.kind {
        SegmentKind::Straight => dot(sub(p, a.position), tangent(a.heading)),
        SegmentKind::Arc => {
            let k = seg.curvature;
            let n0 = normal(a.heading);
            let center = [a.position[0] + n0[0] / k, a.position[1] + n0[1] / k];
            let r0 = sub(a.position, center);
            let rp = sub(p, center);
            // swept angle measured in the direction of travel
            let mut ang = atan2(cross(r0, rp), dot(r0, rp)) * k.signum();
            let sweep = abs(k) * seg.length;
            if ang < 0.0 && ang + 2.0 * PI - sweep < -ang {
                ang += 2.0 * PI;
            }
            ang / abs(k)
        }
    };
    u.clamp(0.0, seg.length)
}

#[inline]
fn along(a: &Anchor, u: f64) -> [f64; 2] {
    let t = tangent(a.heading);
    [a.position[0] + u * t[0], a.position[1] + u * t[1]]
}

#[inline]
fn tangent(h: f64) -> [f64; 2] {
    [cos(h), sin(h)]
}

#[inline]
fn normal(h: f64) -> [f64; 2] {
    [-sin(h), cos(h)]
}

#[inline]
fn sub(a: [f64; 2], b: [f64; 2]) -> [f64; 2] {
    [a[0] - b[0], a[1] - b[1]]
}

#[inline]
fn dot(a: [f64; 2], b: [f64; 2]) -> f64 {
    a[0] * b[0] + a[1] * b[1]
}

#[inline]
fn cross(a: [f64; 2], b: [f64; 2]) -> f64 {
    a[0] * b[1] - a[1] * b[0]
}

#[inline]
fn hypot_v(a: [f64; 2]) -> f64 {
    hypot(a[0], a[1])
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn curve_negotiation_layout() {
        let c = Course::curve_negotiation();
        assert!(close(c.total_length(), 1814.0, 1e-12));
        assert_eq!(c.centerline_at(500.0).unwrap().curvature, 0.0);
        assert!(close(c.centerline_at(1100.0).unwrap().curvature, 1.0 / 200.0, 1e-15));
        assert_eq!(c.lane_width(), 3.6);
    }

    #[test]
    fn origin_and_junction() {
        let c = Course::curve_negotiation();
        let p0 = c.centerline_at(0.0).unwrap();
        assert_eq!(p0.position, [0.0, 0.0]);
        assert_eq!(p0.heading, 0.0);
        assert_eq!(p0.curvature, 0.0);

        let j = c.centerline_at(1000.0).unwrap();
        assert!(close(j.heading, 0.0, 1e-15));
        assert!(close(j.curvature, 1.0 / 200.0, 1e-15));
        let before = c.centerline_at(1000.0 - 1e-9).unwrap();
        assert_eq!(before.curvature, 0.0);
        assert!(close(before.position[0], j.position[0], 1e-8));
    }

    #[test]
    fn joints_are_continuous() {
        let c = Course::new(
            vec![
                Segment::straight(40.0).unwrap(),
                Segment::arc_with_radius(70.0, 30.0, true).unwrap(),
                Segment::arc_with_radius(50.0, 80.0, false).unwrap(),
                Segment::straight(10.0).unwrap(),
            ],
            3.5,
        )
        .unwrap();
        for s in c.segment_starts().skip(1).collect::<Vec<_>>() {
            let a = c.point_extended(s - 1e-10);
            let b = c.point_extended(s);
            assert!(hypot_v(sub(a.position, b.position)) < 1e-9);
            assert!(close(a.heading, b.heading, 1e-9));
        }
    }

    #[test]
    fn straight_course_point() {
        let c = Course::straight(100.0).unwrap();
        let p = c.centerline_at(50.0).unwrap();
        assert_eq!(p.position, [50.0, 0.0]);
        assert!(matches!(c.centerline_at(100.1), Err(Error::OutOfRange { .. })));
        assert!(matches!(c.centerline_at(-0.1), Err(Error::OutOfRange { .. })));
    }

    #[test]
    fn foot_point_on_straight_is_orthogonal_projection() {
        let c = Course::straight(100.0).unwrap();
        assert!(close(c.foot_point([30.0, 1.0]).unwrap(), 30.0, 1e-12));
        let pr = c.project([30.0, -2.0]).unwrap();
        assert!(close(pr.offset, -2.0, 1e-12));
    }

    #[test]
    fn foot_point_recovers_centerline_arc_length() {
        let c = Course::curve_negotiation();
        for s in [0.0, 200.0, 999.0, 1000.0, 1157.0, 1200.0, 1313.0, 1600.0, 1814.0] {
            let p = c.centerline_at(s).unwrap().position;
            assert!(close(c.foot_point(p).unwrap(), s, 1e-7), "s = {s}");
        }
    }

    #[test]
    fn foot_point_rejects_far_points() {
        let c = Course::straight(100.0).unwrap();
        assert!(matches!(c.foot_point([50.0, 60.0]), Err(Error::OffCourse { .. })));
    }

    #[test]
    fn foot_point_matches_dense_sampling_on_arc() {
        // oracle: sample the centerline every 1 mm and take the nearest sample
        let r = 200.0;
        let c = Course::new(vec![Segment::arc_with_radius(r * PI / 2.0, r, true).unwrap()], 3.6).unwrap();
        let target = r * PI / 4.0;
        let on = c.centerline_at(target).unwrap();
        let inward = normal(on.heading);
        let p = [on.position[0] + inward[0], on.position[1] + inward[1]];

        let n = (c.total_length() / 1e-3) as usize;
        let mut best = (f64::INFINITY, 0.0);
        for i in 0..=n {
            let s = i as f64 * 1e-3;
            let q = c.centerline_at(s.min(c.total_length())).unwrap().position;
            let d = hypot_v(sub(p, q));
            if d < best.0 {
                best = (d, s);
            }
        }
        let s = c.foot_point(p).unwrap();
        assert!(close(s, best.1, 1e-3), "{s} vs {}", best.1);
        assert!(close(s, target, 1e-9));
    }

    #[test]
    fn preview_errors_basic_cases() {
        let c = Course::straight(500.0).unwrap();
        let v = 60.0 / 3.6;
        let e = c.preview_errors(Pose { x: 100.0, y: 0.0, psi: 0.0 }, v, 0.3, Some(1.0)).unwrap();
        assert_eq!(e, PreviewErrors { e_y: 0.0, e_theta: 0.0 });
        let e = c.preview_errors(Pose { x: 100.0, y: 0.5, psi: 0.0 }, v, 0.3, Some(1.0)).unwrap();
        assert!(close(e.e_y, 0.5, 1e-12));
        assert_eq!(e.e_theta, 0.0);
    }

    #[test]
    fn far_point_crosses_into_arc() {
        let c = Course::curve_negotiation();
        let v = 16.67;
        let e = c.preview_errors(Pose { x: 900.0, y: 0.0, psi: 0.0 }, v, 0.3, Some(1.0)).unwrap();
        // far point at s = 916.67 is still on the straight
        assert_eq!(e.e_theta, 0.0);
        let e = c.preview_errors(Pose { x: 990.0, y: 0.0, psi: 0.0 }, v, 0.3, Some(1.0)).unwrap();
        // closed form: heading change = (s* + v t_f - 1000) / R
        assert!(close(e.e_theta, (990.0 + v - 1000.0) / 200.0, 1e-12));
    }

    #[test]
    fn far_point_disabled_gives_zero_yaw_error() {
        let c = Course::curve_negotiation();
        let e = c.preview_errors(Pose { x: 990.0, y: 0.3, psi: 0.2 }, 16.67, 0.3, None).unwrap();
        assert_eq!(e.e_theta, 0.0);
    }

    #[test]
    fn preview_rates_match_finite_differences() {
        let c = Course::curve_negotiation();
        let v = 16.67;
        let (psi, beta, r) = (0.05, 0.01, 0.04);
        let vel = [v * cos(psi + beta), v * sin(psi + beta)];
        let pose_at = |t: f64| Pose { x: 1050.0 + vel[0] * t, y: 4.0 + vel[1] * t, psi: psi + r * t };
        let (_, rates) = c.preview(pose_at(0.0), vel, r, v, 0.3, Some(1.0)).unwrap();
        let h = 1e-5;
        let ep = c.preview_errors(pose_at(h), v, 0.3, Some(1.0)).unwrap();
        let em = c.preview_errors(pose_at(-h), v, 0.3, Some(1.0)).unwrap();
        assert!(close(rates.e_y_dot, (ep.e_y - em.e_y) / (2.0 * h), 1e-6));
        assert!(close(rates.e_theta_dot, (ep.e_theta - em.e_theta) / (2.0 * h), 1e-6));
    }
}
