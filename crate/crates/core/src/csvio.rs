//! CSV number formatting, shared schema headers and small table helpers.

use std::path::Path;

use crate::{Error, Result};

/// Formats `x` with 9 significant digits, `%g` style: plain decimal for
/// moderate exponents, scientific otherwise, trailing zeros trimmed.
pub fn fmt_sig(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return if x.is_nan() { "NaN".into() } else if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    let sci = format!("{:.8e}", x);
    let (mantissa, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    if (-5..9).contains(&exp) {
        let decimals = (8 - exp).max(0) as usize;
        let s = format!("{:.*}", decimals, x);
        trim_zeros(&s)
    } else {
        format!("{}e{}", trim_zeros(mantissa), exp)
    }
}

fn trim_zeros(s: &str) -> String {
    if s.contains('.') {
        let t = s.trim_end_matches('0').trim_end_matches('.');
        if t == "-0" { "0".into() } else { t.to_string() }
    } else {
        s.to_string()
    }
}

pub const DISPATCH_HEADER: [&str; 5] = ["bus_id", "t", "p_bat_kw", "soc_kwh", "p_grid_kw"];
pub const DISPATCH_SUMMARY_HEADER: [&str; 7] =
    ["bus_id", "pv_capacity_kw", "capacity_kwh", "power_kw", "opex_chf_yr", "sigma_chf_yr", "totex_chf_yr"];
pub const AUDIT_HEADER: [&str; 5] = ["t", "kind", "element", "value", "limit"];
pub const STATE_HEADER: [&str; 4] = ["t", "kind", "element", "value"];
pub const OPF_HEADER: [&str; 6] = ["m", "bus_id", "t", "p_cur_kw", "p_bat_kw", "q_pv_kvar"];
pub const REPORT_HEADER: [&str; 9] = [
    "scenario",
    "penetration_pct",
    "mode",
    "c_trafo_kchf_mva",
    "c_reinf_chf_yr",
    "delta_opex_chf_yr",
    "curtailed_mwh",
    "curtailed_pct",
    "flex_value_chf_kw",
];
pub const INTERVENTION_HEADER: [&str; 7] = ["scenario", "mode", "m", "start", "end", "steps", "duration_h"];
pub const REINFORCE_HEADER: [&str; 5] = ["element", "kind", "max_value", "limit", "replaced"];

/// Writes a header and rows, creating parent directories as needed.
pub fn write_table<I>(path: &Path, header: &[&str], rows: I) -> Result<()>
where
    I: IntoIterator<Item = Vec<String>>,
{
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(header)?;
    for row in rows {
        w.write_record(&row)?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

/// Rows of a CSV file whose header must equal `header`.
pub struct Table {
    path: String,
    rows: Vec<csv::StringRecord>,
}

impl Table {
    pub fn read(path: &Path, header: &[&str]) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().from_path(path).map_err(|e| match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::io(path, io),
            other => Error::Parse {
                path: path.display().to_string(),
                line: 1,
                msg: format!("{other:?}"),
            },
        })?;
        let found: Vec<String> = rdr.headers()?.iter().map(|h| h.trim().to_string()).collect();
        if found != header {
            return Err(Error::Parse {
                path: path.display().to_string(),
                line: 1,
                msg: format!("expected header {}, found {}", header.join(","), found.join(",")),
            });
        }
        let rows = rdr.records().collect::<std::result::Result<Vec<_>, _>>()?;
        Ok(Self {
            path: path.display().to_string(),
            rows,
        })
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn str(&self, row: usize, col: usize) -> &str {
        self.rows[row].get(col).unwrap_or("").trim()
    }

    pub fn num(&self, row: usize, col: usize) -> Result<f64> {
        let s = self.str(row, col);
        s.parse::<f64>().map_err(|_| self.err(row, format!("column {}: expected a number, got {s:?}", col + 1)))
    }

    pub fn int(&self, row: usize, col: usize) -> Result<usize> {
        let s = self.str(row, col);
        s.parse::<usize>().map_err(|_| self.err(row, format!("column {}: expected an index, got {s:?}", col + 1)))
    }

    pub fn err(&self, row: usize, msg: String) -> Error {
        Error::Parse {
            path: self.path.clone(),
            line: row + 2,
            msg,
        }
    }
}
