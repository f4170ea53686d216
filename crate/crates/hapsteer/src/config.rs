//! Scenario configuration files.
//!
//! A config is a TOML document with the sections `[course]`, `[vehicle]`,
//! `[driver]`, `[neuromuscular]`, `[haptic]`, `[pulse]` and `[run]`. Every
//! section is optional. A section may be a preset reference such as
//! `driver = "preset:low_visibility"`, or a table whose optional `preset` key
//! selects the starting values that the remaining keys override. Unknown keys
//! are rejected.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use hapsteer_core::course::{Course, Segment};
use hapsteer_core::driver::{DriverParams, NeuromuscularParams};
use hapsteer_core::guidance::{GuidanceLevel, HapticParams};
use hapsteer_core::plant::VehicleParams;
use hapsteer_core::simloop::{Pulse, Scenario};

use crate::error::{CliError, CliResult};

pub const SECTIONS: [&str; 7] = ["course", "vehicle", "driver", "neuromuscular", "haptic", "pulse", "run"];

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SegmentSpec {
    /// `straight` or `arc`.
    pub kind: String,
    pub length_m: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub radius_m: Option<f64>,
    /// `left` or `right`, used with `radius_m`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub direction: Option<String>,
    /// Signed curvature, positive to the left; alternative to `radius_m`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub curvature_per_m: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CourseSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preset: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lane_width_m: Option<f64>,
    /// Length of the `straight` preset.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub length_m: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub segments: Option<Vec<SegmentSpec>>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VehicleSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preset: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub m: Option<f64>,
    #[serde(rename = "I", default, skip_serializing_if = "Option::is_none")]
    pub i: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub l_f: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub l_r: Option<f64>,
    #[serde(rename = "K_f", default, skip_serializing_if = "Option::is_none")]
    pub k_f: Option<f64>,
    #[serde(rename = "K_r", default, skip_serializing_if = "Option::is_none")]
    pub k_r: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub v: Option<f64>,
    #[serde(rename = "E_t", default, skip_serializing_if = "Option::is_none")]
    pub e_t: Option<f64>,
    #[serde(rename = "K_s", default, skip_serializing_if = "Option::is_none")]
    pub k_s: Option<f64>,
    #[serde(rename = "K_t", default, skip_serializing_if = "Option::is_none")]
    pub k_t: Option<f64>,
    #[serde(rename = "J_s", default, skip_serializing_if = "Option::is_none")]
    pub j_s: Option<f64>,
    #[serde(rename = "B_s", default, skip_serializing_if = "Option::is_none")]
    pub b_s: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DriverSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preset: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a1: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a2: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a3: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a4: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_n_s: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_f_s: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_p_s: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub far_point_enabled: Option<bool>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NeuromuscularSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preset: Option<String>,
    #[serde(rename = "K_d", default, skip_serializing_if = "Option::is_none")]
    pub k_d: Option<f64>,
    #[serde(rename = "K_hf", default, skip_serializing_if = "Option::is_none")]
    pub k_hf: Option<f64>,
    #[serde(rename = "K_nms", default, skip_serializing_if = "Option::is_none")]
    pub k_nms: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_nms_s: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HapticSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preset: Option<String>,
    /// `false` removes the guidance controller from the loop.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub enabled: Option<bool>,
    /// `none`, `normal`, `strong` or `full`; sets `K1`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub level: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a1: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a2: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a3: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a4: Option<f64>,
    #[serde(rename = "K1", default, skip_serializing_if = "Option::is_none")]
    pub k1: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_n_s: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_f_s: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    #[serde(rename = "torque_limit_Nm")]
    pub torque_limit_nm: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PulseSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub enabled: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub start_s: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub duration_s: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    #[serde(rename = "magnitude_Nm")]
    pub magnitude_nm: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_end_s: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub integrator_step_s: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    #[serde(rename = "log_rate_Hz")]
    pub log_rate_hz: Option<f64>,
}

/// Parsed, not yet resolved, configuration document.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub run: Option<RunSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub course: Option<CourseSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vehicle: Option<VehicleSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub driver: Option<DriverSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub neuromuscular: Option<NeuromuscularSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub haptic: Option<HapticSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pulse: Option<PulseSection>,
}

fn section<T: for<'de> Deserialize<'de> + Default>(name: &str, value: toml::Value, preset: impl Fn(String) -> T) -> CliResult<T> {
    match value {
        toml::Value::String(s) => match s.strip_prefix("preset:") {
            Some(p) => Ok(preset(p.to_string())),
            None => Err(CliError::Config(format!("[{name}]: expected a table or \"preset:NAME\", got \"{s}\""))),
        },
        v @ toml::Value::Table(_) => v.try_into().map_err(|e: toml::de::Error| CliError::Config(format!("[{name}]: {}", e.message()))),
        other => Err(CliError::Config(format!("[{name}]: expected a table or preset reference, got {}", other.type_str()))),
    }
}

impl ScenarioConfig {
    pub fn parse(text: &str) -> CliResult<Self> {
        let table: toml::Table = text.parse().map_err(|e: toml::de::Error| CliError::Config(e.to_string()))?;
        let mut cfg = ScenarioConfig::default();
        for (key, value) in table {
            match key.as_str() {
                "run" => cfg.run = Some(section(&key, value, |_| RunSection::default())?),
                "pulse" => cfg.pulse = Some(section(&key, value, |_| PulseSection::default())?),
                "course" => cfg.course = Some(section(&key, value, |p| CourseSection { preset: Some(p), ..Default::default() })?),
                "vehicle" => cfg.vehicle = Some(section(&key, value, |p| VehicleSection { preset: Some(p), ..Default::default() })?),
                "driver" => cfg.driver = Some(section(&key, value, |p| DriverSection { preset: Some(p), ..Default::default() })?),
                "neuromuscular" => {
                    cfg.neuromuscular = Some(section(&key, value, |p| NeuromuscularSection { preset: Some(p), ..Default::default() })?)
                }
                "haptic" => cfg.haptic = Some(section(&key, value, |p| HapticSection { preset: Some(p), ..Default::default() })?),
                _ => {
                    return Err(CliError::Config(format!("unknown section `{key}`, expected one of {}", SECTIONS.join(", "))));
                }
            }
        }
        Ok(cfg)
    }

    pub fn load(path: &std::path::Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(CliError::io(path))?;
        Self::parse(&text)
    }

    /// Resolves presets and overrides into a validated scenario.
    pub fn resolve(&self) -> CliResult<Scenario> {
        let mut sc = Scenario::default();
        let invalid = |section: &str, e: hapsteer_core::Error| CliError::Config(format!("[{section}] {e}"));

        if let Some(c) = &self.course {
            sc.course = resolve_course(c)?;
        }
        if let Some(v) = &self.vehicle {
            let mut p = match v.preset.as_deref() {
                None | Some("default") | Some("compact_car") => VehicleParams::default(),
                Some(other) => return Err(unknown_preset("vehicle", other, &["default", "compact_car"])),
            };
            set(&mut p.m, v.m);
            set(&mut p.yaw_inertia, v.i);
            set(&mut p.l_f, v.l_f);
            set(&mut p.l_r, v.l_r);
            set(&mut p.k_f, v.k_f);
            set(&mut p.k_r, v.k_r);
            set(&mut p.v, v.v);
            set(&mut p.e_t, v.e_t);
            set(&mut p.k_s, v.k_s);
            set(&mut p.k_t, v.k_t);
            set(&mut p.j_s, v.j_s);
            set(&mut p.b_s, v.b_s);
            p.validate().map_err(|e| invalid("vehicle", e))?;
            sc.vehicle = p;
        }
        if let Some(d) = &self.driver {
            let mut p = match d.preset.as_deref() {
                None | Some("normal") => DriverParams::normal(),
                Some("low_visibility") => DriverParams::low_visibility(),
                Some("declined_attention") => DriverParams::declined_attention(),
                Some(other) => return Err(unknown_preset("driver", other, &["normal", "low_visibility", "declined_attention"])),
            };
            set(&mut p.a1, d.a1);
            set(&mut p.a2, d.a2);
            set(&mut p.a3, d.a3);
            set(&mut p.a4, d.a4);
            set(&mut p.t_n, d.t_n_s);
            set(&mut p.t_f, d.t_f_s);
            set(&mut p.t_p, d.t_p_s);
            set(&mut p.far_point_enabled, d.far_point_enabled);
            p.validate().map_err(|e| invalid("driver", e))?;
            sc.driver = p;
        }
        if let Some(n) = &self.neuromuscular {
            let mut p = match n.preset.as_deref() {
                None | Some("manual") => NeuromuscularParams::manual(),
                Some("assisted") => NeuromuscularParams::assisted(),
                Some(other) => return Err(unknown_preset("neuromuscular", other, &["manual", "assisted"])),
            };
            set(&mut p.k_d, n.k_d);
            set(&mut p.k_hf, n.k_hf);
            set(&mut p.k_nms, n.k_nms);
            set(&mut p.t_nms, n.t_nms_s);
            p.validate().map_err(|e| invalid("neuromuscular", e))?;
            sc.neuromuscular = p;
        }
        if let Some(h) = &self.haptic {
            let mut p = match h.preset.as_deref() {
                None | Some("ch4") => HapticParams::ch4(),
                Some("exp1") => HapticParams::exp1(),
                Some("exp2") => HapticParams::exp2(),
                Some("exp3") => HapticParams::exp3(),
                Some(other) => return Err(unknown_preset("haptic", other, &["ch4", "exp1", "exp2", "exp3"])),
            };
            // the scenario default runs without guidance authority
            if h.preset.is_none() {
                p = p.with_level(GuidanceLevel::None);
            }
            if let Some(level) = &h.level {
                let l = GuidanceLevel::from_name(level)
                    .ok_or_else(|| CliError::Config(format!("[haptic] unknown level `{level}`, expected none, normal, strong or full")))?;
                p = p.with_level(l);
            }
            set(&mut p.a1, h.a1);
            set(&mut p.a2, h.a2);
            set(&mut p.a3, h.a3);
            set(&mut p.a4, h.a4);
            set(&mut p.k1, h.k1);
            set(&mut p.t_n, h.t_n_s);
            set(&mut p.t_f, h.t_f_s);
            set(&mut p.torque_limit, h.torque_limit_nm);
            p.validate().map_err(|e| invalid("haptic", e))?;
            sc.haptic = if h.enabled.unwrap_or(true) { Some(p) } else { None };
        }
        if let Some(pl) = &self.pulse {
            let mut p = Pulse::default();
            set(&mut p.start, pl.start_s);
            set(&mut p.duration, pl.duration_s);
            set(&mut p.magnitude, pl.magnitude_nm);
            sc.pulse = if pl.enabled.unwrap_or(true) { Some(p) } else { None };
        }
        if let Some(r) = &self.run {
            set(&mut sc.t_end, r.t_end_s);
            set(&mut sc.integrator_step, r.integrator_step_s);
            set(&mut sc.log_rate, r.log_rate_hz);
        }
        sc.validate().map_err(|e| {
            let section = match &e {
                hapsteer_core::Error::InvalidParameter { name, .. } if name.ends_with("_Nm") || *name == "pulse" => "pulse",
                _ => "run",
            };
            invalid(section, e)
        })?;
        Ok(sc)
    }
}

fn set<T>(field: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *field = v;
    }
}

fn unknown_preset(section: &str, name: &str, known: &[&str]) -> CliError {
    CliError::Config(format!("[{section}] unknown preset `{name}`, expected one of {}", known.join(", ")))
}

fn resolve_course(c: &CourseSection) -> CliResult<Course> {
    let err = |e: hapsteer_core::Error| CliError::Config(format!("[course] {e}"));
    let lane = c.lane_width_m.unwrap_or(3.6);
    if let Some(specs) = &c.segments {
        if c.preset.is_some() || c.length_m.is_some() {
            return Err(CliError::Config("[course] `segments` cannot be combined with `preset` or `length_m`".into()));
        }
        let segs = specs
            .iter()
            .enumerate()
            .map(|(i, s)| segment(s).map_err(|m| CliError::Config(format!("[course] segment {}: {m}", i + 1))))
            .collect::<CliResult<Vec<_>>>()?;
        return Course::new(segs, lane).map_err(err);
    }
    match c.preset.as_deref() {
        None | Some("curve_negotiation") => {
            if c.length_m.is_some() {
                return Err(CliError::Config("[course] `length_m` only applies to the `straight` preset".into()));
            }
            let base = Course::curve_negotiation();
            Course::new(base.segments().to_vec(), lane).map_err(err)
        }
        Some("straight") => Course::new(vec![Segment::straight(c.length_m.unwrap_or(3000.0)).map_err(err)?], lane).map_err(err),
        Some(other) => Err(unknown_preset("course", other, &["curve_negotiation", "straight"])),
    }
}

fn segment(s: &SegmentSpec) -> Result<Segment, String> {
    match s.kind.as_str() {
        "straight" => {
            if s.radius_m.is_some() || s.curvature_per_m.is_some() || s.direction.is_some() {
                return Err("a straight segment takes only `length_m`".into());
            }
            Segment::straight(s.length_m).map_err(|e| e.to_string())
        }
        "arc" => match (s.curvature_per_m, s.radius_m) {
            (Some(k), None) if s.direction.is_none() => Segment::arc(s.length_m, k).map_err(|e| e.to_string()),
            (None, Some(r)) => {
                let left = match s.direction.as_deref() {
                    Some("left") => true,
                    Some("right") => false,
                    _ => return Err("an arc with `radius_m` needs `direction = \"left\"` or `\"right\"`".into()),
                };
                Segment::arc_with_radius(s.length_m, r, left).map_err(|e| e.to_string())
            }
            _ => Err("an arc needs either `curvature_per_m` or `radius_m` with `direction`".into()),
        },
        other => Err(format!("unknown segment kind `{other}`, expected straight or arc")),
    }
}

/// Fully explicit config reproducing `sc`.
pub fn snapshot_config(sc: &Scenario) -> ScenarioConfig {
    let v = &sc.vehicle;
    let d = &sc.driver;
    let n = &sc.neuromuscular;
    let h = sc.haptic.unwrap_or_else(|| HapticParams::ch4().with_level(GuidanceLevel::None));
    ScenarioConfig {
        run: Some(RunSection { t_end_s: Some(sc.t_end), integrator_step_s: Some(sc.integrator_step), log_rate_hz: Some(sc.log_rate) }),
        course: Some(CourseSection {
            preset: None,
            lane_width_m: Some(sc.course.lane_width()),
            length_m: None,
            segments: Some(
                sc.course
                    .segments()
                    .iter()
                    .map(|s| SegmentSpec {
                        kind: if s.curvature == 0.0 { "straight" } else { "arc" }.into(),
                        length_m: s.length,
                        curvature_per_m: (s.curvature != 0.0).then_some(s.curvature),
                        ..Default::default()
                    })
                    .collect(),
            ),
        }),
        vehicle: Some(VehicleSection {
            preset: None,
            m: Some(v.m),
            i: Some(v.yaw_inertia),
            l_f: Some(v.l_f),
            l_r: Some(v.l_r),
            k_f: Some(v.k_f),
            k_r: Some(v.k_r),
            v: Some(v.v),
            e_t: Some(v.e_t),
            k_s: Some(v.k_s),
            k_t: Some(v.k_t),
            j_s: Some(v.j_s),
            b_s: Some(v.b_s),
        }),
        driver: Some(DriverSection {
            preset: None,
            a1: Some(d.a1),
            a2: Some(d.a2),
            a3: Some(d.a3),
            a4: Some(d.a4),
            t_n_s: Some(d.t_n),
            t_f_s: Some(d.t_f),
            t_p_s: Some(d.t_p),
            far_point_enabled: Some(d.far_point_enabled),
        }),
        neuromuscular: Some(NeuromuscularSection { preset: None, k_d: Some(n.k_d), k_hf: Some(n.k_hf), k_nms: Some(n.k_nms), t_nms_s: Some(n.t_nms) }),
        haptic: Some(HapticSection {
            preset: Some("ch4".into()),
            enabled: Some(sc.haptic.is_some()),
            level: None,
            a1: Some(h.a1),
            a2: Some(h.a2),
            a3: Some(h.a3),
            a4: Some(h.a4),
            k1: Some(h.k1),
            t_n_s: Some(h.t_n),
            t_f_s: Some(h.t_f),
            torque_limit_nm: Some(h.torque_limit),
        }),
        pulse: Some(match sc.pulse {
            Some(p) => PulseSection { enabled: Some(true), start_s: Some(p.start), duration_s: Some(p.duration), magnitude_nm: Some(p.magnitude) },
            None => PulseSection { enabled: Some(false), ..Default::default() },
        }),
    }
}

/// Canonical TOML text of the resolved scenario.
pub fn snapshot_text(sc: &Scenario) -> String {
    toml::to_string(&snapshot_config(sc)).expect("config snapshot serializes")
}

/// Content hash of the resolved scenario (first 16 hex digits of SHA-256).
pub fn run_id(sc: &Scenario) -> String {
    let digest = Sha256::digest(snapshot_text(sc).as_bytes());
    digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
}
