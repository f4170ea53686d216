//! Implementations of the subcommands. Every file a command writes lives
//! under its output path.

use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::Deserialize;

use hapsteer_core::driver::VisionMode;
use hapsteer_core::guidance::GuidanceLevel;
use hapsteer_core::ident::{pem_fit, FixedParams, IdentProblem, IdentResult, ParamBounds, ParamVector, PARAM_COUNT};
use hapsteer_core::metrics::{self, MetricReport, ReportOptions, DEFAULT_PRC_RADIUS_DEG};
use hapsteer_core::simloop::{simulate, Condition, Scenario, SimLog, LOG_COLUMNS};
use hapsteer_core::Course;

use crate::config::{run_id, snapshot_text, ScenarioConfig};
use crate::csvio::{self, fmt_num, write_file, write_log, write_table, write_target, Table};
use crate::error::{CliError, CliResult};
use crate::report;

fn create_dir(dir: &Path) -> CliResult<()> {
    std::fs::create_dir_all(dir).map_err(CliError::io(dir))
}

fn write_text(path: &Path, text: &str) -> CliResult<()> {
    std::fs::write(path, text).map_err(CliError::io(path))
}

fn core_data(e: hapsteer_core::Error) -> CliError {
    CliError::Data(e.to_string())
}

/// Writes the artifacts of one finished run into `dir`.
fn write_run(dir: &Path, sc: &Scenario, log: &SimLog) -> CliResult<()> {
    write_text(&dir.join("config.toml"), &snapshot_text(sc))?;
    write_text(&dir.join("run_id.txt"), &format!("{}\n", run_id(sc)))?;
    write_file(&dir.join("log.csv"), |b| write_log(log, b))?;
    write_file(&dir.join("target.csv"), |b| write_target(log, b))?;
    let opts = ReportOptions::new(sc.course.lane_width()).map_err(core_data)?;
    let rep = MetricReport::from_log(log, &sc.course, &opts).map_err(core_data)?;
    write_text(&dir.join("metrics.csv"), &report::to_csv(&report::fields(&rep, None)))
}

/// `simulate`: one closed-loop run.
pub fn simulate_cmd(config: &Path, out: &Path) -> CliResult<String> {
    let sc = ScenarioConfig::load(config)?.resolve()?;
    create_dir(out)?;
    let log = match simulate(&sc) {
        Ok(log) => log,
        Err(e) => {
            write_text(&out.join("config.toml"), &snapshot_text(&sc))?;
            return Err(CliError::Abort(e));
        }
    };
    write_run(out, &sc, &log)?;
    Ok(run_id(&sc))
}

pub fn parse_vision(name: &str) -> CliResult<VisionMode> {
    VisionMode::ALL.into_iter().find(|v| v.name() == name).ok_or_else(|| {
        let valid: Vec<&str> = VisionMode::ALL.iter().map(|v| v.name()).collect();
        CliError::Config(format!("unknown vision mode `{name}`, expected one of {}", valid.join(", ")))
    })
}

pub fn parse_guidance(name: &str) -> CliResult<GuidanceLevel> {
    GuidanceLevel::ALL.into_iter().find(|g| g.name() == name).ok_or_else(|| {
        let valid: Vec<&str> = GuidanceLevel::ALL.iter().map(|g| g.name()).collect();
        CliError::Config(format!("unknown guidance level `{name}`, expected one of {}", valid.join(", ")))
    })
}

/// Worker count from `SIM_THREADS`, else the available parallelism.
fn thread_count(cells: usize) -> CliResult<usize> {
    let n = match std::env::var("SIM_THREADS") {
        Ok(v) => v
            .trim()
            .parse::<usize>()
            .ok()
            .filter(|n| *n >= 1)
            .ok_or_else(|| CliError::Config(format!("SIM_THREADS must be a positive integer, got `{v}`")))?,
        Err(_) => std::thread::available_parallelism().map_or(1, |n| n.get()),
    };
    Ok(n.min(cells.max(1)))
}

/// One row of the sweep summary.
#[derive(Debug, Clone, PartialEq)]
pub struct CellSummary {
    pub label: String,
    pub status: String,
    pub run_id: String,
    pub curve_max_abs_offset: Option<f64>,
    pub straight_sdlp: Option<f64>,
    pub peak_abs_phi: Option<f64>,
    pub message: String,
}

pub const SUMMARY_COLUMNS: [&str; 7] =
    ["label", "status", "run_id", "curve_max_abs_offset_m", "straight_sdlp_m", "peak_abs_phi_rad", "message"];

fn run_cell(base: &Scenario, cond: Condition, out: &Path) -> CliResult<CellSummary> {
    let label = cond.label();
    let sc = cond.apply(base);
    let id = run_id(&sc);
    let tmp = out.join(format!(".tmp-{label}"));
    if tmp.exists() {
        std::fs::remove_dir_all(&tmp).map_err(CliError::io(&tmp))?;
    }
    create_dir(&tmp)?;
    let mut row = CellSummary {
        label: label.clone(),
        status: "ok".into(),
        run_id: id,
        curve_max_abs_offset: None,
        straight_sdlp: None,
        peak_abs_phi: None,
        message: String::new(),
    };
    match simulate(&sc) {
        Ok(log) => {
            write_run(&tmp, &sc, &log)?;
            row.curve_max_abs_offset = metrics::curve_max_abs_offset(&log, &sc.course);
            row.straight_sdlp = metrics::straight_sdlp(&log, &sc.course).ok();
            row.peak_abs_phi = metrics::peak_abs(log.records.iter().map(|r| r.phi));
        }
        Err(e) => {
            write_text(&tmp.join("config.toml"), &snapshot_text(&sc))?;
            write_text(&tmp.join("error.txt"), &format!("{e}\n"))?;
            row.status = "aborted".into();
            row.message = e.to_string();
        }
    }
    let dest = out.join(&label);
    if dest.exists() {
        std::fs::remove_dir_all(&dest).map_err(CliError::io(&dest))?;
    }
    std::fs::rename(&tmp, &dest).map_err(CliError::io(&dest))?;
    Ok(row)
}

/// `matrix`: every vision × guidance cell from one base config. Returns the
/// summary rows in input order.
pub fn matrix_cmd(config: &Path, visions: &[String], guidances: &[String], out: &Path) -> CliResult<Vec<CellSummary>> {
    let base = ScenarioConfig::load(config)?.resolve()?;
    let visions = visions.iter().map(|v| parse_vision(v)).collect::<CliResult<Vec<_>>>()?;
    let levels = guidances.iter().map(|g| parse_guidance(g)).collect::<CliResult<Vec<_>>>()?;
    if visions.is_empty() || levels.is_empty() {
        return Err(CliError::Config("vision and guidance lists must not be empty".into()));
    }
    let cells = Condition::grid(&visions, &levels);
    let threads = thread_count(cells.len())?;
    create_dir(out)?;

    let next = AtomicUsize::new(0);
    let results: Mutex<Vec<Option<CliResult<CellSummary>>>> = Mutex::new(cells.iter().map(|_| None).collect());
    std::thread::scope(|s| {
        for _ in 0..threads {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(&cond) = cells.get(i) else { break };
                let r = run_cell(&base, cond, out);
                results.lock().expect("result lock")[i] = Some(r);
            });
        }
    });
    let rows = results
        .into_inner()
        .expect("result lock")
        .into_iter()
        .map(|r| r.expect("every cell ran"))
        .collect::<CliResult<Vec<_>>>()?;

    let opt = |v: Option<f64>| v.map_or_else(String::new, fmt_num);
    let path = out.join("summary.csv");
    write_file(&path, |b| {
        write_table(
            b,
            &SUMMARY_COLUMNS,
            rows.iter().map(|r| {
                vec![
                    r.label.clone(),
                    r.status.clone(),
                    r.run_id.clone(),
                    opt(r.curve_max_abs_offset),
                    opt(r.straight_sdlp),
                    opt(r.peak_abs_phi),
                    r.message.clone(),
                ]
            }),
        )
    })?;
    if rows.iter().all(|r| r.status != "ok") {
        return Err(CliError::AllAborted(rows[0].message.clone()));
    }
    Ok(rows)
}

/// Options of the `metrics` command.
#[derive(Debug, Clone, Default)]
pub struct MetricsArgs {
    pub log: PathBuf,
    pub lane_width: f64,
    pub report: PathBuf,
    pub gaze: Option<PathBuf>,
    pub eyelid: Option<PathBuf>,
    /// Scenario config whose course the log was driven on.
    pub config: Option<PathBuf>,
    pub csv: Option<PathBuf>,
    pub split_time: Option<f64>,
}

const TLC_COLUMNS: [&str; 5] = ["X", "Y", "psi", "beta", "r"];

/// `metrics`: report of an existing log.
pub fn metrics_cmd(a: &MetricsArgs) -> CliResult<Vec<(&'static str, String)>> {
    let ing = csvio::read_log(&a.log, &["lateral_offset", "phi"])?;
    let course = match &a.config {
        Some(p) => ScenarioConfig::load(p)?.resolve()?.course,
        None => Course::curve_negotiation(),
    };
    let mut opts = ReportOptions::new(a.lane_width).map_err(|e| CliError::Config(format!("--lane-width: {e}")))?;
    opts.sdlp_split = a.split_time;
    let mut rep = MetricReport::from_log(&ing.log, &course, &opts).map_err(core_data)?;
    if TLC_COLUMNS.iter().any(|c| !ing.has(c)) {
        rep.tlc_low10_mean = None;
    }
    if !ing.has("s_foot") {
        rep.turn_start_offsets.clear();
    }
    let mut per_minute = None;
    if let Some(p) = &a.eyelid {
        let (open, rate) = csvio::read_eyelid(p)?;
        let windows = metrics::perclos_p80(&open, rate).map_err(core_data)?;
        let closed = open.iter().filter(|o| **o <= metrics::PERCLOS_CLOSED).count();
        rep.perclos = Some(100.0 * closed as f64 / open.len() as f64);
        per_minute = Some(windows);
    }
    if let Some(p) = &a.gaze {
        let (gaze, _) = csvio::read_gaze(p)?;
        rep.prc = Some(metrics::prc(&gaze, DEFAULT_PRC_RADIUS_DEG).map_err(core_data)?);
    }
    let fields = report::fields(&rep, per_minute.as_deref());
    if let Some(dir) = a.report.parent().filter(|d| !d.as_os_str().is_empty()) {
        create_dir(dir)?;
    }
    write_text(&a.report, &report::to_text(&fields))?;
    if let Some(p) = &a.csv {
        write_text(p, &report::to_csv(&fields))?;
    }
    Ok(fields)
}

#[derive(Debug, Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct InitParams {
    a1: Option<f64>,
    a2: Option<f64>,
    a4: Option<f64>,
    t_p_s: Option<f64>,
    #[serde(rename = "K_d")]
    k_d: Option<f64>,
    #[serde(rename = "K_hf")]
    k_hf: Option<f64>,
}

#[derive(Debug, Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct InitBounds {
    a1: Option<[f64; 2]>,
    a2: Option<[f64; 2]>,
    a4: Option<[f64; 2]>,
    t_p_s: Option<[f64; 2]>,
    #[serde(rename = "K_d")]
    k_d: Option<[f64; 2]>,
    #[serde(rename = "K_hf")]
    k_hf: Option<[f64; 2]>,
}

#[derive(Debug, Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct InitFixed {
    #[serde(rename = "K_nms")]
    k_nms: Option<f64>,
    t_nms_s: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct InitWeights {
    #[serde(rename = "T_d")]
    t_d: f64,
    phi: f64,
}

#[derive(Debug, Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct InitSearch {
    starts: Option<usize>,
    seed: Option<u64>,
    max_iterations: Option<usize>,
}

/// Contents of the `--init` file of `identify`.
#[derive(Debug, Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct InitFile {
    #[serde(default)]
    init: InitParams,
    #[serde(default)]
    bounds: InitBounds,
    #[serde(default)]
    fixed: InitFixed,
    weights: Option<InitWeights>,
    #[serde(default)]
    search: InitSearch,
}

fn apply_init(p: &mut IdentProblem, f: &InitFile) {
    let mut theta = p.theta0.to_array();
    let init = [f.init.a1, f.init.a2, f.init.a4, f.init.t_p_s, f.init.k_d, f.init.k_hf];
    for (slot, v) in theta.iter_mut().zip(init) {
        if let Some(v) = v {
            *slot = v;
        }
    }
    p.theta0 = ParamVector::from_array(&theta);
    let bounds = [f.bounds.a1, f.bounds.a2, f.bounds.a4, f.bounds.t_p_s, f.bounds.k_d, f.bounds.k_hf];
    let mut b = ParamBounds::default();
    for (slot, v) in b.0.iter_mut().zip(bounds) {
        if let Some([lo, hi]) = v {
            *slot = (lo, hi);
        }
    }
    p.bounds = b;
    let mut fixed = FixedParams::default();
    if let Some(v) = f.fixed.k_nms {
        fixed.k_nms = v;
    }
    if let Some(v) = f.fixed.t_nms_s {
        fixed.t_nms = v;
    }
    p.fixed = fixed;
    p.output_weights = f.weights.as_ref().map(|w| [w.t_d, w.phi]);
    if let Some(n) = f.search.starts {
        p.starts = n;
    }
    if let Some(s) = f.search.seed {
        p.seed = s;
    }
    if let Some(n) = f.search.max_iterations {
        p.max_iterations = n;
    }
}

/// Where the second identification output comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TargetSource {
    TargetFile,
    LogColumn,
    MeasuredPhi,
}

impl TargetSource {
    fn name(self) -> &'static str {
        match self {
            TargetSource::TargetFile => "target_file",
            TargetSource::LogColumn => "phi_target_column",
            TargetSource::MeasuredPhi => "measured_phi",
        }
    }
}

const IDENT_COLUMNS: [&str; 5] = ["e_y", "e_theta", "phi", "T_h", "T_d"];

/// `identify`: fits the driver parameters to a log and writes `params.txt`
/// and `trace.csv`. Non-convergence is an error after the files are written.
pub fn identify_cmd(log: &Path, init: &Path, target: Option<&Path>, out: &Path) -> CliResult<IdentResult> {
    let text = std::fs::read_to_string(init).map_err(CliError::io(init))?;
    let init_file: InitFile = toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", init.display())))?;
    let ing = csvio::read_log(log, &IDENT_COLUMNS)?;
    let (source, phi_out) = match (target, &ing.phi_target) {
        (Some(p), _) => (TargetSource::TargetFile, csvio::read_target(p, ing.log.len())?),
        (None, Some(col)) => (TargetSource::LogColumn, col.clone()),
        (None, None) => (TargetSource::MeasuredPhi, ing.log.series(|r| r.phi)),
    };
    let mut p = IdentProblem::from_log(&ing.log, false);
    for (row, v) in p.y.iter_mut().zip(&phi_out) {
        row[1] = *v;
    }
    apply_init(&mut p, &init_file);
    let res = pem_fit(&p).map_err(|e| match e {
        hapsteer_core::Error::InvalidParameter { .. } => CliError::Config(format!("{}: {e}", init.display())),
        other => core_data(other),
    })?;

    create_dir(out)?;
    let mut params = String::new();
    let theta = res.theta_hat.to_array();
    for (name, v) in ParamVector::NAMES.iter().zip(theta) {
        params.push_str(&format!("{name} = {}\n", fmt_num(v)));
    }
    params.push_str(&format!("fit_T_d_pct = {}\n", fmt_num(res.fit_td)));
    params.push_str(&format!("fit_phi_pct = {}\n", fmt_num(res.fit_phi)));
    params.push_str(&format!("final_loss = {}\n", fmt_num(res.final_loss)));
    params.push_str(&format!("iterations = {}\n", res.iterations));
    params.push_str(&format!("converged = {}\n", res.converged));
    params.push_str(&format!("best_start = {}\n", res.best_start));
    params.push_str(&format!("phi_output = {}\n", source.name()));
    write_text(&out.join("params.txt"), &params)?;

    let mut header = vec!["start", "iteration", "loss", "predicted_relative_decrease", "damping"];
    header.extend(ParamVector::NAMES);
    write_file(&out.join("trace.csv"), |b| {
        write_table(
            b,
            &header,
            res.trace.iter().map(|r| {
                let mut row = vec![
                    r.start.to_string(),
                    r.iteration.to_string(),
                    fmt_num(r.loss),
                    fmt_num(r.predicted_relative_decrease),
                    fmt_num(r.damping),
                ];
                row.extend(r.theta.to_array().iter().map(|v| fmt_num(*v)));
                debug_assert_eq!(row.len(), 5 + PARAM_COUNT);
                row
            }),
        )
    })?;
    if !res.converged {
        return Err(CliError::NotConverged);
    }
    Ok(res)
}

/// `plotdata`: aligned wide table of selected signals from several runs.
pub fn plotdata_cmd(runs: &[PathBuf], signals: &[String], out: &Path) -> CliResult<usize> {
    if runs.is_empty() || signals.is_empty() {
        return Err(CliError::Config("at least one run and one signal are required".into()));
    }
    if let Some(bad) = signals.iter().find(|s| !LOG_COLUMNS.contains(&s.as_str()) || s.as_str() == "t") {
        return Err(CliError::Config(format!("unknown signal `{bad}`, valid names: {}", LOG_COLUMNS[1..].join(", "))));
    }
    let mut header = vec!["t".to_string()];
    let mut columns: Vec<Vec<f64>> = Vec::new();
    let mut time: Vec<f64> = Vec::new();
    let mut rate: Option<(f64, &Path)> = None;
    for (k, dir) in runs.iter().enumerate() {
        let path = dir.join("log.csv");
        let file = path.display().to_string();
        let table = Table::open(&path)?;
        table.require(&["t"], &file)?;
        let t = table.column("t").expect("checked");
        let r = csvio::sample_rate(&t, &file)?;
        match rate {
            Some((r0, d0)) if (r - r0).abs() > 1e-6 * r0 => {
                return Err(CliError::Data(format!(
                    "log rates differ: {} Hz in {} but {} Hz in {}",
                    fmt_num(r0),
                    d0.display(),
                    fmt_num(r),
                    dir.display()
                )));
            }
            None => rate = Some((r, dir)),
            _ => {}
        }
        if t.len() > time.len() {
            time = t;
        }
        let name = dir.file_name().map_or_else(|| format!("run{k}"), |n| n.to_string_lossy().into_owned());
        let name = if header.iter().any(|h| h.starts_with(&format!("{name}/"))) { format!("{name}#{k}") } else { name };
        for s in signals {
            table.require(&[s.as_str()], &file)?;
            columns.push(table.column(s).expect("checked"));
            header.push(format!("{name}/{s}"));
        }
    }
    let header_refs: Vec<&str> = header.iter().map(String::as_str).collect();
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        create_dir(dir)?;
    }
    write_file(out, |b| {
        write_table(
            b,
            &header_refs,
            time.iter().enumerate().map(|(i, t)| {
                let mut row = vec![fmt_num(*t)];
                row.extend(columns.iter().map(|c| c.get(i).map_or_else(String::new, |v| fmt_num(*v))));
                row
            }),
        )
    })?;
    Ok(header.len())
}
