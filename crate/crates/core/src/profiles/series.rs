use std::collections::HashMap;
use std::path::Path;

use chrono::{Datelike, NaiveDateTime};

use crate::grid::Network;
use crate::{Error, Result};

/// A 365-day study year.
pub const STUDY_YEAR_SECONDS: u64 = 365 * 86_400;

const TIMESTAMP_FORMATS: [&str; 3] = ["%Y-%m-%dT%H:%M:%S", "%Y-%m-%d %H:%M:%S", "%Y-%m-%dT%H:%M"];

/// Per-prosumer load and normalised PV yield on a common time grid.
///
/// Series are indexed `[prosumer][step]`, prosumers in network order. A full set
/// covers one study year; a reduced set (see [`TimeSeriesSet::representative_weeks`])
/// carries a `year_weight` so that weighted sums are annual quantities.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeriesSet {
    pub step_seconds: u32,
    pub timestamps: Vec<NaiveDateTime>,
    pub bus_ids: Vec<String>,
    pub load_kw: Vec<Vec<f64>>,
    pub pv_yield: Vec<Vec<f64>>,
    pub year_weight: f64,
}

impl TimeSeriesSet {
    pub fn horizon(&self) -> usize {
        self.timestamps.len()
    }

    pub fn dt_hours(&self) -> f64 {
        self.step_seconds as f64 / 3600.0
    }

    pub fn num_prosumers(&self) -> usize {
        self.bus_ids.len()
    }

    pub fn prosumer_position(&self, bus_id: &str) -> Option<usize> {
        self.bus_ids.iter().position(|b| b == bus_id)
    }

    /// Annualised energy of a power series given in kW, in kWh.
    pub fn annual_energy_kwh(&self, series: &[f64]) -> f64 {
        series.iter().sum::<f64>() * self.dt_hours() * self.year_weight
    }

    pub fn annual_demand_kwh(&self) -> f64 {
        self.load_kw.iter().map(|s| self.annual_energy_kwh(s)).sum()
    }

    /// Annual yield of prosumer `p` in kWh per installed kW.
    pub fn annual_yield_per_kw(&self, p: usize) -> f64 {
        self.annual_energy_kwh(&self.pv_yield[p])
    }

    /// Checks shape and value invariants.
    pub fn validate(&self) -> Result<()> {
        let t = self.horizon();
        if self.step_seconds == 0 {
            return Err(Error::Profile("step must be positive".into()));
        }
        if self.load_kw.len() != self.bus_ids.len() || self.pv_yield.len() != self.bus_ids.len() {
            return Err(Error::Profile("one load and one PV series per prosumer required".into()));
        }
        for (p, id) in self.bus_ids.iter().enumerate() {
            if self.load_kw[p].len() != t || self.pv_yield[p].len() != t {
                return Err(Error::Horizon {
                    expected: t,
                    found: self.load_kw[p].len().min(self.pv_yield[p].len()),
                });
            }
            if let Some(row) = self.load_kw[p].iter().position(|v| !(*v >= 0.0)) {
                return Err(Error::Profile(format!("negative load at row {} for bus {id}", row + 1)));
            }
            if let Some(row) = self.pv_yield[p].iter().position(|v| !(0.0..=1.2).contains(v)) {
                return Err(Error::Profile(format!("PV yield outside [0, 1.2] at row {} for bus {id}", row + 1)));
            }
        }
        if !(self.year_weight > 0.0) {
            return Err(Error::Profile("year weight must be positive".into()));
        }
        Ok(())
    }

    /// Number of steps in a full study year at this resolution.
    pub fn steps_per_year(&self) -> usize {
        (STUDY_YEAR_SECONDS / self.step_seconds as u64) as usize
    }

    /// Keeps the given 7-day weeks (0-based, counted from the first step) and
    /// weights them so that weighted sums stay annual.
    pub fn representative_weeks(&self, weeks: &[usize]) -> Result<TimeSeriesSet> {
        let per_week = (7 * 86_400 / self.step_seconds) as usize;
        let mut idx = Vec::with_capacity(weeks.len() * per_week);
        for &w in weeks {
            let start = w * per_week;
            if start + per_week > self.horizon() {
                return Err(Error::Profile(format!("week {w} lies outside the horizon")));
            }
            idx.extend(start..start + per_week);
        }
        if idx.is_empty() {
            return Err(Error::Profile("no representative weeks selected".into()));
        }
        let pick = |s: &Vec<f64>| idx.iter().map(|&i| s[i]).collect::<Vec<f64>>();
        let covered = self.horizon() as f64 / self.year_weight;
        Ok(TimeSeriesSet {
            step_seconds: self.step_seconds,
            timestamps: idx.iter().map(|&i| self.timestamps[i]).collect(),
            bus_ids: self.bus_ids.clone(),
            load_kw: self.load_kw.iter().map(pick).collect(),
            pv_yield: self.pv_yield.iter().map(pick).collect(),
            year_weight: covered / idx.len() as f64,
        })
    }

    /// Reads a load CSV (`timestamp,<bus_id>...`, kW) covering one study year.
    /// PV yield is left at zero; see [`TimeSeriesSet::read_pv_yield`].
    pub fn load(path: impl AsRef<Path>, network: &Network) -> Result<Self> {
        let path = path.as_ref();
        let (step, timestamps, cols) = read_profile_csv(path, network)?;
        let set = TimeSeriesSet {
            step_seconds: step,
            pv_yield: vec![vec![0.0; timestamps.len()]; cols.len()],
            timestamps,
            bus_ids: network.prosumer_ids().iter().map(|s| s.to_string()).collect(),
            load_kw: cols,
            year_weight: 1.0,
        };
        let expected = set.steps_per_year();
        if set.horizon() != expected {
            return Err(Error::Horizon {
                expected,
                found: set.horizon(),
            });
        }
        set.validate()?;
        Ok(set)
    }

    /// Replaces the PV yield with a CSV of identical shape (kW per installed kW).
    pub fn read_pv_yield(&mut self, path: impl AsRef<Path>, network: &Network) -> Result<()> {
        let (step, timestamps, cols) = read_profile_csv(path.as_ref(), network)?;
        if step != self.step_seconds || timestamps != self.timestamps {
            return Err(Error::Profile("PV yield file does not share the load file's time grid".into()));
        }
        self.pv_yield = cols;
        self.validate()
    }

    pub fn write_csv(&self, load_path: impl AsRef<Path>, pv_path: Option<&Path>) -> Result<()> {
        write_profile_csv(load_path.as_ref(), &self.timestamps, &self.bus_ids, &self.load_kw)?;
        if let Some(p) = pv_path {
            write_profile_csv(p, &self.timestamps, &self.bus_ids, &self.pv_yield)?;
        }
        Ok(())
    }

    /// Hour-of-week (0 = Monday 00h) of step `t`.
    pub fn hour_of_week(&self, t: usize) -> u32 {
        use chrono::Timelike;
        let ts = self.timestamps[t];
        ts.weekday().num_days_from_monday() * 24 + ts.hour()
    }
}

fn parse_timestamp(s: &str) -> Option<NaiveDateTime> {
    TIMESTAMP_FORMATS
        .iter()
        .find_map(|f| NaiveDateTime::parse_from_str(s.trim(), f).ok())
}

fn read_profile_csv(path: &Path, network: &Network) -> Result<(u32, Vec<NaiveDateTime>, Vec<Vec<f64>>)> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_path(path)
        .map_err(|e| Error::Profile(format!("{}: {e}", path.display())))?;
    let headers = rdr.headers()?.clone();
    if headers.get(0).map(str::trim) != Some("timestamp") {
        return Err(Error::Profile(format!("{}: first column must be `timestamp`", path.display())));
    }
    let columns: HashMap<&str, usize> = headers.iter().enumerate().skip(1).map(|(i, h)| (h.trim(), i)).collect();
    let prosumers = network.prosumer_ids();
    let mut col_of = Vec::with_capacity(prosumers.len());
    for id in &prosumers {
        match columns.get(id) {
            Some(&c) => col_of.push(c),
            None => return Err(Error::Profile(format!("{}: missing column for bus {id}", path.display()))),
        }
    }

    let mut timestamps = Vec::new();
    let mut cols = vec![Vec::new(); prosumers.len()];
    for (r, rec) in rdr.records().enumerate() {
        let row = r + 1;
        let rec = rec?;
        if rec.len() != headers.len() {
            return Err(Error::Profile(format!(
                "{}: row {row} has {} fields, header has {}",
                path.display(),
                rec.len(),
                headers.len()
            )));
        }
        let ts = parse_timestamp(&rec[0])
            .ok_or_else(|| Error::Profile(format!("{}: row {row}: bad timestamp {:?}", path.display(), &rec[0])))?;
        if let Some(prev) = timestamps.last() {
            if ts <= *prev {
                return Err(Error::Profile(format!("{}: row {row}: timestamps not increasing", path.display())));
            }
        }
        timestamps.push(ts);
        for (p, &c) in col_of.iter().enumerate() {
            let v: f64 = rec[c].trim().parse().map_err(|_| {
                Error::Profile(format!("{}: row {row}, bus {}: bad value {:?}", path.display(), prosumers[p], &rec[c]))
            })?;
            if v < 0.0 {
                return Err(Error::Profile(format!("negative value at row {row} for bus {}", prosumers[p])));
            }
            cols[p].push(v);
        }
    }
    if timestamps.len() < 2 {
        return Err(Error::Horizon {
            expected: 2,
            found: timestamps.len(),
        });
    }
    let step = (timestamps[1] - timestamps[0]).num_seconds();
    for w in timestamps.windows(2) {
        if (w[1] - w[0]).num_seconds() != step {
            return Err(Error::Profile(format!("{}: irregular time step", path.display())));
        }
    }
    Ok((step as u32, timestamps, cols))
}

fn write_profile_csv(path: &Path, ts: &[NaiveDateTime], ids: &[String], cols: &[Vec<f64>]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["timestamp".to_string()];
    header.extend(ids.iter().cloned());
    w.write_record(&header)?;
    for (t, stamp) in ts.iter().enumerate() {
        let mut rec = vec![stamp.format("%Y-%m-%dT%H:%M:%S").to_string()];
        rec.extend(cols.iter().map(|c| crate::csvio::fmt_sig(c[t])));
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn tiny_net() -> Network {
        Network::parse(
            "bus,S,slack,0.4,false\nbus,A,pq,0.4,true\nbus,B,pq,0.4,true\n\
             branch,S,A,0.1,0.2,0.1,1,false,0\nbranch,A,B,0.1,0.2,0.1,1,false,0\n",
            "t",
        )
        .unwrap()
    }

    fn write_year(rows: usize, edit: impl Fn(usize, &mut String)) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(f, "timestamp,A,B").unwrap();
        let start = NaiveDateTime::parse_from_str("2018-01-01T00:00:00", "%Y-%m-%dT%H:%M:%S").unwrap();
        for r in 0..rows {
            let ts = start + chrono::Duration::seconds(900 * r as i64);
            let mut line = format!("{},1.5,0.25", ts.format("%Y-%m-%dT%H:%M:%S"));
            edit(r, &mut line);
            writeln!(f, "{line}").unwrap();
        }
        f
    }

    #[test]
    fn full_year_accepted() {
        let f = write_year(35040, |_, _| {});
        let set = TimeSeriesSet::load(f.path(), &tiny_net()).unwrap();
        assert_eq!(set.horizon(), 35040);
        assert_eq!(set.step_seconds, 900);
        assert!((set.annual_energy_kwh(&set.load_kw[0]) - 1.5 * 8760.0).abs() < 1e-6);
    }

    #[test]
    fn short_year_rejected() {
        let f = write_year(35039, |_, _| {});
        assert!(matches!(
            TimeSeriesSet::load(f.path(), &tiny_net()),
            Err(Error::Horizon { expected: 35040, found: 35039 })
        ));
    }

    #[test]
    fn negative_load_names_row_and_bus() {
        let f = write_year(35040, |r, line| {
            if r == 10 {
                *line = line.replace(",0.25", ",-0.25");
            }
        });
        let err = TimeSeriesSet::load(f.path(), &tiny_net()).unwrap_err().to_string();
        assert!(err.contains("row 11") && err.contains("bus B"), "{err}");
    }

    #[test]
    fn missing_column_and_ragged_rows() {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(f, "timestamp,A\n2018-01-01T00:00:00,1").unwrap();
        let err = TimeSeriesSet::load(f.path(), &tiny_net()).unwrap_err().to_string();
        assert!(err.contains("missing column for bus B"), "{err}");

        let f = write_year(100, |r, line| {
            if r == 5 {
                line.push_str(",9");
            }
        });
        let err = TimeSeriesSet::load(f.path(), &tiny_net()).unwrap_err().to_string();
        assert!(err.contains("row 6"), "{err}");
    }

    #[test]
    fn non_monotone_timestamps() {
        let f = write_year(100, |r, line| {
            if r == 3 {
                *line = "2018-01-01T00:00:00,1,1".into();
            }
        });
        let err = TimeSeriesSet::load(f.path(), &tiny_net()).unwrap_err().to_string();
        assert!(err.contains("not increasing"), "{err}");
    }
}
