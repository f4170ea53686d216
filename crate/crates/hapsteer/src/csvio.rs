//! CSV reading and writing for logs, target angles, gaze and eyelid series.

use std::collections::HashMap;
use std::io::{Read, Write};
use std::path::Path;

use hapsteer_core::simloop::{SimLog, SimRecord, LOG_COLUMNS};

use crate::error::{CliError, CliResult};

/// Formats `x` with 9 significant digits, fixed notation for moderate
/// magnitudes and scientific notation otherwise. Negative zero prints as `0`.
pub fn fmt_num(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return format!("{x}");
    }
    let sci = format!("{x:.8e}");
    let (mantissa, exp) = sci.split_once('e').expect("scientific format");
    let exp: i32 = exp.parse().expect("exponent");
    if (-5..15).contains(&exp) {
        let decimals = (8 - exp).max(0) as usize;
        let rounded: f64 = sci.parse().expect("scientific format");
        let s = format!("{rounded:.decimals$}");
        if s.contains('.') {
            s.trim_end_matches('0').trim_end_matches('.').to_string()
        } else {
            s
        }
    } else {
        let m = mantissa.trim_end_matches('0').trim_end_matches('.');
        format!("{m}e{exp}")
    }
}

fn writer<W: Write>(w: W) -> csv::Writer<W> {
    csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(w)
}

fn csv_err(path: &str) -> impl Fn(csv::Error) -> CliError + '_ {
    move |e| CliError::Data(format!("{path}: {e}"))
}

/// Writes a table with a header row.
pub fn write_table<W: Write>(w: W, header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> CliResult<()> {
    let mut wr = writer(w);
    let err = csv_err("output");
    wr.write_record(header).map_err(&err)?;
    for row in rows {
        wr.write_record(&row).map_err(&err)?;
    }
    wr.flush().map_err(|e| CliError::Data(format!("output: {e}")))
}

pub fn write_log<W: Write>(log: &SimLog, w: W) -> CliResult<()> {
    write_table(w, &LOG_COLUMNS, log.records.iter().map(|r| r.values().iter().map(|v| fmt_num(*v)).collect()))
}

/// Driver target angle next to the time column.
pub fn write_target<W: Write>(log: &SimLog, w: W) -> CliResult<()> {
    write_table(w, &["t", "phi_target"], log.records.iter().map(|r| vec![fmt_num(r.t), fmt_num(r.phi_target)]))
}

pub fn write_file(path: &Path, f: impl FnOnce(&mut Vec<u8>) -> CliResult<()>) -> CliResult<()> {
    let mut buf = Vec::new();
    f(&mut buf)?;
    std::fs::write(path, buf).map_err(CliError::io(path))
}

/// Numeric table read by column name.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn read<R: Read>(r: R, name: &str) -> CliResult<Table> {
        let mut rd = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(r);
        let columns: Vec<String> = rd.headers().map_err(csv_err(name))?.iter().map(str::to_string).collect();
        let mut rows = Vec::new();
        for (i, rec) in rd.records().enumerate() {
            let line = i + 2;
            let rec = rec.map_err(|e| CliError::Data(format!("{name}: line {line}: {e}")))?;
            if rec.len() != columns.len() {
                return Err(CliError::Data(format!("{name}: line {line}: expected {} fields, found {}", columns.len(), rec.len())));
            }
            let row = rec
                .iter()
                .zip(&columns)
                .map(|(field, col)| {
                    field.parse::<f64>().map_err(|_| CliError::Data(format!("{name}: line {line}: column `{col}`: `{field}` is not a number")))
                })
                .collect::<CliResult<Vec<f64>>>()?;
            rows.push(row);
        }
        Ok(Table { columns, rows })
    }

    pub fn open(path: &Path) -> CliResult<Table> {
        let f = std::fs::File::open(path).map_err(CliError::io(path))?;
        Self::read(std::io::BufReader::new(f), &path.display().to_string())
    }

    pub fn index(&self) -> HashMap<&str, usize> {
        self.columns.iter().enumerate().map(|(i, c)| (c.as_str(), i)).collect()
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let i = self.columns.iter().position(|c| c == name)?;
        Some(self.rows.iter().map(|r| r[i]).collect())
    }

    pub fn require(&self, names: &[&str], file: &str) -> CliResult<()> {
        for n in names {
            if !self.columns.iter().any(|c| c == n) {
                return Err(CliError::Data(format!("{file}: missing column `{n}`")));
            }
        }
        Ok(())
    }
}

/// Sample rate implied by a time column, checked for even spacing.
pub fn sample_rate(t: &[f64], file: &str) -> CliResult<f64> {
    if t.len() < 2 {
        return Err(CliError::Data(format!("{file}: need at least two samples")));
    }
    let dt = (t[t.len() - 1] - t[0]) / (t.len() - 1) as f64;
    if !(dt > 0.0) {
        return Err(CliError::Data(format!("{file}: time column must increase")));
    }
    for (i, w) in t.windows(2).enumerate() {
        if ((w[1] - w[0]) - dt).abs() > 1e-3 * dt {
            return Err(CliError::Data(format!("{file}: line {}: uneven time step", i + 3)));
        }
    }
    Ok(1.0 / dt)
}

/// A log read back from CSV. Columns absent from the file are zero in the
/// records and listed in `missing`.
#[derive(Debug, Clone, PartialEq)]
pub struct IngestedLog {
    pub log: SimLog,
    pub missing: Vec<&'static str>,
    /// `phi_target` column, when the file carries one.
    pub phi_target: Option<Vec<f64>>,
}

impl IngestedLog {
    pub fn has(&self, column: &str) -> bool {
        !self.missing.contains(&column)
    }
}

/// Reads a log with the standard header; `required` columns must be present.
pub fn read_log(path: &Path, required: &[&str]) -> CliResult<IngestedLog> {
    let file = path.display().to_string();
    let table = Table::open(path)?;
    let mut req = vec!["t"];
    req.extend_from_slice(required);
    table.require(&req, &file)?;
    let idx = table.index();
    let missing: Vec<&'static str> = LOG_COLUMNS.iter().copied().filter(|c| !idx.contains_key(c)).collect();
    let pick: Vec<Option<usize>> = LOG_COLUMNS.iter().map(|c| idx.get(c).copied()).collect();
    let records: Vec<SimRecord> = table
        .rows
        .iter()
        .map(|row| {
            let mut v = [0.0; 15];
            for (slot, p) in v.iter_mut().zip(&pick) {
                if let Some(i) = p {
                    *slot = row[*i];
                }
            }
            let mut rec = SimRecord::from_values(&v);
            if let Some(i) = idx.get("phi_target") {
                rec.phi_target = row[*i];
            }
            rec
        })
        .collect();
    let t: Vec<f64> = records.iter().map(|r| r.t).collect();
    let log_rate = sample_rate(&t, &file)?;
    let speed = if missing.contains(&"X") || missing.contains(&"Y") {
        0.0
    } else {
        let dist: f64 = records.windows(2).map(|w| (w[1].x - w[0].x).hypot(w[1].y - w[0].y)).sum();
        dist * log_rate / (records.len() - 1) as f64
    };
    let phi_target = table.column("phi_target");
    Ok(IngestedLog { log: SimLog { log_rate, speed, records }, missing, phi_target })
}

/// Reads a `t,phi_target` file aligned with a log of `n` samples.
pub fn read_target(path: &Path, n: usize) -> CliResult<Vec<f64>> {
    let file = path.display().to_string();
    let table = Table::open(path)?;
    table.require(&["t", "phi_target"], &file)?;
    let col = table.column("phi_target").expect("checked");
    if col.len() != n {
        return Err(CliError::Data(format!("{file}: {} rows, but the log has {n}", col.len())));
    }
    Ok(col)
}

/// Gaze directions `[yaw, pitch]` in degrees and the sample rate.
pub fn read_gaze(path: &Path) -> CliResult<(Vec<[f64; 2]>, f64)> {
    let file = path.display().to_string();
    let table = Table::open(path)?;
    table.require(&["t", "yaw_deg", "pitch_deg"], &file)?;
    let t = table.column("t").expect("checked");
    let rate = sample_rate(&t, &file)?;
    let yaw = table.column("yaw_deg").expect("checked");
    let pitch = table.column("pitch_deg").expect("checked");
    Ok((yaw.into_iter().zip(pitch).map(|(a, b)| [a, b]).collect(), rate))
}

/// Eyelid openness fractions and the sample rate.
pub fn read_eyelid(path: &Path) -> CliResult<(Vec<f64>, f64)> {
    let file = path.display().to_string();
    let table = Table::open(path)?;
    table.require(&["t", "openness"], &file)?;
    let t = table.column("t").expect("checked");
    let rate = sample_rate(&t, &file)?;
    let open = table.column("openness").expect("checked");
    if let Some(i) = open.iter().position(|o| !(0.0..=1.0).contains(o)) {
        return Err(CliError::Data(format!("{file}: line {}: openness must lie in [0, 1]", i + 2)));
    }
    Ok((open, rate))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nine_significant_digits() {
        assert_eq!(fmt_num(0.0), "0");
        assert_eq!(fmt_num(-0.0), "0");
        assert_eq!(fmt_num(1.0), "1");
        assert_eq!(fmt_num(16.6666666666667), "16.6666667");
        assert_eq!(fmt_num(-0.00123456789123), "-0.00123456789");
        assert_eq!(fmt_num(1234.5), "1234.5");
        assert_eq!(fmt_num(1.5e-9), "1.5e-9");
        assert_eq!(fmt_num(123456789012.0), "123456789000");
        for x in [0.1, -3.25, 1e-12, 987654.321, 2.0 / 3.0] {
            let back: f64 = fmt_num(x).parse().unwrap();
            assert!(((back - x) / x).abs() < 5e-9, "{x}");
        }
    }

    #[test]
    fn lf_line_endings_and_exact_header() {
        let log = SimLog { log_rate: 120.0, speed: 1.0, records: vec![SimRecord::default(), SimRecord { t: 1.0 / 120.0, ..Default::default() }] };
        let mut buf = Vec::new();
        write_log(&log, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(!text.contains('\r'));
        assert_eq!(text.lines().next().unwrap(), "t,X,Y,psi,beta,r,phi,delta,T_d,T_h,T_a,e_y,e_theta,s_foot,lateral_offset");
        assert_eq!(text.lines().count(), 3);
    }

    #[test]
    fn malformed_number_reports_line_and_column() {
        let e = Table::read("t,phi\n0,1\n0.1,abc\n".as_bytes(), "x.csv").unwrap_err().to_string();
        assert!(e.contains("line 3") && e.contains("phi"), "{e}");
    }

    #[test]
    fn uneven_time_is_rejected() {
        assert!(sample_rate(&[0.0, 0.1, 0.3], "x").is_err());
        assert!((sample_rate(&[0.0, 0.5, 1.0], "x").unwrap() - 2.0).abs() < 1e-12);
    }
}
