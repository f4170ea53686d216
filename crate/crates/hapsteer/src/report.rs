//! Text and CSV renderings of metric reports.

use hapsteer_core::metrics::MetricReport;

use crate::csvio::fmt_num;

/// Name of the steering reversal counting rule, written next to SWRR values.
pub const SWRR_RULE: &str = "gap_from_extremum";

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "absent".to_string(), fmt_num)
}

fn offsets(r: &MetricReport) -> String {
    if r.turn_start_offsets.is_empty() {
        return "absent".into();
    }
    r.turn_start_offsets.iter().map(|o| o.map_or_else(|| "none".to_string(), fmt_num)).collect::<Vec<_>>().join(";")
}

/// Ordered key/value pairs. Gaze and eyelid entries appear only when set.
pub fn fields(r: &MetricReport, perclos_per_minute: Option<&[f64]>) -> Vec<(&'static str, String)> {
    let mut out = vec![
        ("sdlp_m", fmt_num(r.sdlp)),
        ("male_m", fmt_num(r.male)),
        ("tlc_low10_mean_s", opt(r.tlc_low10_mean)),
        ("swrr_per_min", fmt_num(r.swrr)),
        ("swrr_rule", SWRR_RULE.to_string()),
        ("sdlp_var_pct", opt(r.sdlp_var)),
        ("turn_start_offsets_m", offsets(r)),
    ];
    if let Some(p) = r.perclos {
        out.push(("perclos_p80_pct", fmt_num(p)));
        if let Some(per) = perclos_per_minute {
            out.push(("perclos_p80_per_min_pct", per.iter().map(|v| fmt_num(*v)).collect::<Vec<_>>().join(";")));
        }
    }
    if let Some(p) = r.prc {
        out.push(("prc_pct", fmt_num(p)));
    }
    out
}

pub fn to_text(fields: &[(&str, String)]) -> String {
    fields.iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
}

pub fn to_csv(fields: &[(&str, String)]) -> String {
    let header: Vec<&str> = fields.iter().map(|(k, _)| *k).collect();
    let row: Vec<&str> = fields.iter().map(|(_, v)| v.as_str()).collect();
    format!("{}\n{}\n", header.join(","), row.join(","))
}
