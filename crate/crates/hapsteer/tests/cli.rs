use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_hapsteer"))
}

fn run(args: &[&str], dir: &Path) -> Output {
    bin().args(args).current_dir(dir).env("SIM_THREADS", "4").output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p
}

fn read_csv(path: &Path) -> (Vec<String>, Vec<Vec<String>>) {
    let text = fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    let header = lines.next().unwrap().split(',').map(str::to_string).collect();
    (header, lines.map(|l| l.split(',').map(str::to_string).collect()).collect())
}

fn column(path: &Path, name: &str) -> Vec<f64> {
    let (h, rows) = read_csv(path);
    let i = h.iter().position(|c| c == name).unwrap_or_else(|| panic!("no column {name}"));
    rows.iter().map(|r| r[i].parse().unwrap()).collect()
}

fn report_value(text: &str, key: &str) -> String {
    text.lines().find_map(|l| l.strip_prefix(&format!("{key} = "))).unwrap_or_else(|| panic!("no {key} in\n{text}")).to_string()
}

const SHORT: &str = "[run]\nt_end_s = 5.0\n";

#[test]
fn simulate_writes_a_120_hz_log_and_snapshot() {
    let d = TempDir::new().unwrap();
    write(d.path(), "c.toml", SHORT);
    let o = run(&["simulate", "--config", "c.toml", "--out", "out"], d.path());
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let t = column(&d.path().join("out/log.csv"), "t");
    assert_eq!(t.len(), 601);
    assert!((t[1] - 1.0 / 120.0).abs() < 1e-9);
    for f in ["config.toml", "run_id.txt", "metrics.csv", "target.csv"] {
        assert!(d.path().join("out").join(f).exists(), "{f}");
    }
}

#[test]
fn snapshot_reruns_to_identical_outputs() {
    let d = TempDir::new().unwrap();
    write(d.path(), "c.toml", "driver = \"preset:low_visibility\"\n[run]\nt_end_s = 4.0\n[pulse]\nstart_s = 1.0\n");
    assert_eq!(code(&run(&["simulate", "--config", "c.toml", "--out", "a"], d.path())), 0);
    assert_eq!(code(&run(&["simulate", "--config", "a/config.toml", "--out", "b"], d.path())), 0);
    assert_eq!(code(&run(&["simulate", "--config", "c.toml", "--out", "c"], d.path())), 0);
    for f in ["log.csv", "run_id.txt", "config.toml", "metrics.csv", "target.csv"] {
        let a = fs::read(d.path().join("a").join(f)).unwrap();
        assert_eq!(a, fs::read(d.path().join("b").join(f)).unwrap(), "{f} after snapshot re-run");
        assert_eq!(a, fs::read(d.path().join("c").join(f)).unwrap(), "{f} after repeat");
    }
}

#[test]
fn negative_mass_is_a_config_error_naming_the_key() {
    let d = TempDir::new().unwrap();
    write(d.path(), "c.toml", "[vehicle]\nm = -1200.0\n");
    let o = run(&["simulate", "--config", "c.toml", "--out", "out"], d.path());
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("`m`"), "{}", stderr(&o));
}

#[test]
fn unknown_key_is_rejected() {
    let d = TempDir::new().unwrap();
    write(d.path(), "c.toml", "[vehicle]\nmass = 1200.0\n");
    let o = run(&["simulate", "--config", "c.toml", "--out", "out"], d.path());
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("mass"), "{}", stderr(&o));
}

#[test]
fn destabilized_driver_aborts_with_the_time() {
    let d = TempDir::new().unwrap();
    write(d.path(), "c.toml", "[driver]\na1 = -0.5\n");
    let o = run(&["simulate", "--config", "c.toml", "--out", "out"], d.path());
    assert_eq!(code(&o), 3, "{}", stderr(&o));
    assert!(stderr(&o).contains("t = "), "{}", stderr(&o));
    assert!(!d.path().join("out/log.csv").exists());
}

#[test]
fn matrix_writes_one_directory_per_cell_in_input_order() {
    let d = TempDir::new().unwrap();
    write(d.path(), "c.toml", SHORT);
    let o = run(
        &["matrix", "--config", "c.toml", "--vision", "declined_attention,normal,low_visibility", "--guidance", "strong,none", "--out", "m"],
        d.path(),
    );
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let (header, rows) = read_csv(&d.path().join("m/summary.csv"));
    assert_eq!(header[..6], ["label", "status", "run_id", "curve_max_abs_offset_m", "straight_sdlp_m", "peak_abs_phi_rad"]);
    let labels: Vec<&str> = rows.iter().map(|r| r[0].as_str()).collect();
    assert_eq!(
        labels,
        [
            "declined_attention+strong",
            "declined_attention+none",
            "normal+strong",
            "normal+none",
            "low_visibility+strong",
            "low_visibility+none"
        ]
    );
    let dirs = fs::read_dir(d.path().join("m")).unwrap().filter(|e| e.as_ref().unwrap().path().is_dir()).count();
    assert_eq!(dirs, 6);
    for l in labels {
        assert!(d.path().join("m").join(l).join("log.csv").exists());
    }
}

#[test]
fn matrix_rejects_unknown_levels() {
    let d = TempDir::new().unwrap();
    write(d.path(), "c.toml", SHORT);
    let o = run(&["matrix", "--config", "c.toml", "--vision", "normal", "--guidance", "maximum", "--out", "m"], d.path());
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("maximum"));
}

#[test]
fn matrix_records_aborted_cells() {
    let d = TempDir::new().unwrap();
    // every cell keeps the base haptic law; this one overpowers the column at full authority
    write(
        d.path(),
        "c.toml",
        "[haptic]\npreset = \"ch4\"\na1 = 500.0\ntorque_limit_Nm = 1000.0\n[pulse]\nstart_s = 1.0\n[run]\nt_end_s = 20.0\n",
    );
    let o = run(&["matrix", "--config", "c.toml", "--vision", "normal", "--guidance", "none,full", "--out", "m"], d.path());
    let (_, rows) = read_csv(&d.path().join("m/summary.csv"));
    assert_eq!(rows[0][1], "ok");
    assert_eq!(rows[1][1], "aborted");
    assert!(rows[1][6].contains("t = "));
    assert!(d.path().join("m/normal+full/error.txt").exists());
    assert_eq!(code(&o), 0);
}

#[test]
fn guidance_reduces_low_visibility_curve_error() {
    let d = TempDir::new().unwrap();
    write(d.path(), "c.toml", "");
    let o = run(&["matrix", "--config", "c.toml", "--vision", "low_visibility", "--guidance", "none,normal", "--out", "m"], d.path());
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let (_, rows) = read_csv(&d.path().join("m/summary.csv"));
    let none: f64 = rows[0][3].parse().unwrap();
    let normal: f64 = rows[1][3].parse().unwrap();
    assert!(normal < none, "assisted {normal} vs manual {none}");
}

#[test]
fn centered_straight_run_reports_zero_sdlp_and_reversals() {
    let d = TempDir::new().unwrap();
    write(d.path(), "c.toml", "course = \"preset:straight\"\n[run]\nt_end_s = 20.0\n");
    assert_eq!(code(&run(&["simulate", "--config", "c.toml", "--out", "s"], d.path())), 0);
    let o = run(
        &["metrics", "--log", "s/log.csv", "--lane-width", "3.6", "--config", "c.toml", "--report", "r/report.txt", "--csv", "r/report.csv"],
        d.path(),
    );
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let text = fs::read_to_string(d.path().join("r/report.txt")).unwrap();
    assert!(report_value(&text, "sdlp_m").parse::<f64>().unwrap() < 1e-9);
    assert_eq!(report_value(&text, "swrr_per_min"), "0");
    assert_eq!(report_value(&text, "tlc_low10_mean_s"), "absent");
    assert!(!text.contains("prc_pct") && !text.contains("perclos"));
    let (h, rows) = read_csv(&d.path().join("r/report.csv"));
    assert_eq!(h.len(), rows[0].len());
}

#[test]
fn gaze_and_eyelid_add_their_fields() {
    let d = TempDir::new().unwrap();
    write(d.path(), "c.toml", SHORT);
    assert_eq!(code(&run(&["simulate", "--config", "c.toml", "--out", "s"], d.path())), 0);
    let mut gaze = String::from("t,yaw_deg,pitch_deg\n");
    let mut lid = String::from("t,openness\n");
    for i in 0..600 {
        let t = i as f64 / 60.0;
        let yaw = if i % 4 == 0 { 20.0 } else { 1.0 };
        gaze.push_str(&format!("{t},{yaw},0\n"));
        lid.push_str(&format!("{t},{}\n", if (i / 30) % 2 == 0 { 1.0 } else { 0.0 }));
    }
    write(d.path(), "gaze.csv", &gaze);
    write(d.path(), "lid.csv", &lid);
    let o = run(&["metrics", "--log", "s/log.csv", "--lane-width", "3.6", "--gaze", "gaze.csv", "--report", "g.txt"], d.path());
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let text = fs::read_to_string(d.path().join("g.txt")).unwrap();
    assert_eq!(report_value(&text, "prc_pct"), "75");
    assert!(!text.contains("perclos"));
    let o = run(&["metrics", "--log", "s/log.csv", "--lane-width", "3.6", "--eyelid", "lid.csv", "--report", "e.txt"], d.path());
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let text = fs::read_to_string(d.path().join("e.txt")).unwrap();
    assert_eq!(report_value(&text, "perclos_p80_pct"), "50");
    assert!(!text.contains("prc_pct"));
}

#[test]
fn missing_column_is_named() {
    let d = TempDir::new().unwrap();
    write(d.path(), "log.csv", "t,phi\n0,0\n0.1,0.01\n0.2,0.0\n");
    let o = run(&["metrics", "--log", "log.csv", "--lane-width", "3.6", "--report", "r.txt"], d.path());
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("lateral_offset"), "{}", stderr(&o));
}

#[test]
fn malformed_csv_reports_the_line() {
    let d = TempDir::new().unwrap();
    write(d.path(), "log.csv", "t,phi,lateral_offset\n0,0,0\n0.1,x,0\n");
    let o = run(&["metrics", "--log", "log.csv", "--lane-width", "3.6", "--report", "r.txt"], d.path());
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("line 3"), "{}", stderr(&o));
}

const ASSISTED: &str = "neuromuscular = \"preset:assisted\"\n[haptic]\nlevel = \"normal\"\n[pulse]\n";

#[test]
fn identify_recovers_a_self_generated_log() {
    let d = TempDir::new().unwrap();
    write(d.path(), "c.toml", ASSISTED);
    write(d.path(), "init.toml", "");
    assert_eq!(code(&run(&["simulate", "--config", "c.toml", "--out", "s"], d.path())), 0);
    let o = run(&["identify", "--log", "s/log.csv", "--target", "s/target.csv", "--init", "init.toml", "--out", "id"], d.path());
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let params = fs::read_to_string(d.path().join("id/params.txt")).unwrap();
    assert!(report_value(&params, "fit_T_d_pct").parse::<f64>().unwrap() >= 99.5, "{params}");
    assert!(report_value(&params, "fit_phi_pct").parse::<f64>().unwrap() >= 99.5, "{params}");
    assert_eq!(report_value(&params, "phi_output"), "target_file");
    let (h, rows) = read_csv(&d.path().join("id/trace.csv"));
    assert_eq!(h.len(), 11);
    assert!(!rows.is_empty());
}

#[test]
fn constant_log_is_degenerate() {
    let d = TempDir::new().unwrap();
    let mut log = String::from("t,e_y,e_theta,phi,T_h,T_d\n");
    for i in 0..200 {
        log.push_str(&format!("{},0,0,0,0,0\n", i as f64 / 120.0));
    }
    write(d.path(), "log.csv", &log);
    write(d.path(), "init.toml", "");
    let o = run(&["identify", "--log", "log.csv", "--init", "init.toml", "--out", "id"], d.path());
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("degenerate data"), "{}", stderr(&o));
}

#[test]
fn iteration_cap_exits_4_and_still_writes_results() {
    let d = TempDir::new().unwrap();
    write(d.path(), "c.toml", ASSISTED);
    write(d.path(), "init.toml", "[init]\na1 = 0.4\nK_d = 1.5\nK_hf = 0.9\n[search]\nstarts = 1\nmax_iterations = 2\n");
    assert_eq!(code(&run(&["simulate", "--config", "c.toml", "--out", "s"], d.path())), 0);
    let o = run(&["identify", "--log", "s/log.csv", "--target", "s/target.csv", "--init", "init.toml", "--out", "id"], d.path());
    assert_eq!(code(&o), 4, "{}", stderr(&o));
    let params = fs::read_to_string(d.path().join("id/params.txt")).unwrap();
    assert_eq!(report_value(&params, "converged"), "false");
}

#[test]
fn plotdata_aligns_runs_and_signals() {
    let d = TempDir::new().unwrap();
    write(d.path(), "a.toml", SHORT);
    write(d.path(), "b.toml", "driver = \"preset:low_visibility\"\n[run]\nt_end_s = 3.0\n");
    assert_eq!(code(&run(&["simulate", "--config", "a.toml", "--out", "normal"], d.path())), 0);
    assert_eq!(code(&run(&["simulate", "--config", "b.toml", "--out", "lowvis"], d.path())), 0);
    let o = run(&["plotdata", "--runs", "normal", "lowvis", "--signals", "phi,lateral_offset", "--out", "p/plot.csv"], d.path());
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let (h, rows) = read_csv(&d.path().join("p/plot.csv"));
    assert_eq!(h, ["t", "normal/phi", "normal/lateral_offset", "lowvis/phi", "lowvis/lateral_offset"]);
    assert_eq!(rows.len(), 601);
    assert_eq!(rows[600][3], "");
}

#[test]
fn plotdata_rejects_unknown_signals_and_mixed_rates() {
    let d = TempDir::new().unwrap();
    write(d.path(), "a.toml", SHORT);
    write(d.path(), "b.toml", "[run]\nt_end_s = 5.0\nlog_rate_Hz = 60.0\n");
    assert_eq!(code(&run(&["simulate", "--config", "a.toml", "--out", "a"], d.path())), 0);
    assert_eq!(code(&run(&["simulate", "--config", "b.toml", "--out", "b"], d.path())), 0);
    let o = run(&["plotdata", "--runs", "a", "--signals", "steer", "--out", "p.csv"], d.path());
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("lateral_offset"), "valid names listed: {}", stderr(&o));
    let o = run(&["plotdata", "--runs", "a", "b", "--signals", "phi", "--out", "p.csv"], d.path());
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("rates differ"), "{}", stderr(&o));
    assert!(!d.path().join("p.csv").exists());
}

#[test]
fn low_visibility_overlay_shows_a_larger_curve_entry_peak() {
    let d = TempDir::new().unwrap();
    write(d.path(), "n.toml", "");
    write(d.path(), "l.toml", "driver = \"preset:low_visibility\"\n");
    assert_eq!(code(&run(&["simulate", "--config", "n.toml", "--out", "normal"], d.path())), 0);
    assert_eq!(code(&run(&["simulate", "--config", "l.toml", "--out", "lowvis"], d.path())), 0);
    let o = run(&["plotdata", "--runs", "normal", "lowvis", "--signals", "phi", "--out", "p.csv"], d.path());
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let p = d.path().join("p.csv");
    let t = column(&p, "t");
    // curve entry is at 60 s for 1000 m of straight at 60 km/h
    let window = |name: &str| -> f64 {
        column(&p, name).iter().zip(&t).filter(|(_, t)| (55.0..70.0).contains(*t)).map(|(v, _)| v.abs()).fold(0.0, f64::max)
    };
    assert!(window("lowvis/phi") > window("normal/phi"));
}

#[test]
fn commands_only_write_under_out() {
    let d = TempDir::new().unwrap();
    write(d.path(), "c.toml", SHORT);
    assert_eq!(code(&run(&["simulate", "--config", "c.toml", "--out", "o/run"], d.path())), 0);
    assert_eq!(code(&run(&["metrics", "--log", "o/run/log.csv", "--lane-width", "3.6", "--report", "o/r.txt"], d.path())), 0);
    let mut names: Vec<String> = fs::read_dir(d.path()).unwrap().map(|e| e.unwrap().file_name().to_string_lossy().into_owned()).collect();
    names.sort();
    assert_eq!(names, ["c.toml", "o"]);
}
