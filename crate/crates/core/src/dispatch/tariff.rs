use chrono::{Datelike, NaiveDateTime, Timelike};

use crate::{Error, Result};

/// Weekly import schedule and flat export rate, both in cts/kWh.
///
/// `import_cts[h]` is the rate for hour-of-week `h`, Monday 00h = 0.
#[derive(Debug, Clone, PartialEq)]
pub struct Tariff {
    pub import_cts: [f64; 168],
    pub export_cts: f64,
}

impl Default for Tariff {
    fn default() -> Self {
        Self::time_of_use(23.92, 15.16, 8.16, 6, 22).expect("valid default tariff")
    }
}

impl Tariff {
    /// Peak rate on weekdays between `peak_start` (inclusive) and `peak_end`
    /// (exclusive) hours, off-peak otherwise.
    pub fn time_of_use(peak_cts: f64, offpeak_cts: f64, export_cts: f64, peak_start: u32, peak_end: u32) -> Result<Self> {
        if peak_cts < 0.0 || offpeak_cts < 0.0 || export_cts < 0.0 {
            return Err(Error::invalid("tariff rates must be non-negative"));
        }
        if peak_start > peak_end || peak_end > 24 {
            return Err(Error::invalid(format!("bad peak window {peak_start}-{peak_end}")));
        }
        let mut import_cts = [offpeak_cts; 168];
        for day in 0..5 {
            for h in peak_start..peak_end {
                import_cts[(day * 24 + h) as usize] = peak_cts;
            }
        }
        Ok(Self { import_cts, export_cts })
    }

    /// `(import, export)` rates in cts/kWh at `ts`.
    pub fn rate(&self, ts: NaiveDateTime) -> (f64, f64) {
        let h = ts.weekday().num_days_from_monday() * 24 + ts.hour();
        (self.import_cts[h as usize], self.export_cts)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::NaiveDate;

    fn at(d: u32, h: u32) -> NaiveDateTime {
        // 2018-01-01 is a Monday
        NaiveDate::from_ymd_opt(2018, 1, d).unwrap().and_hms_opt(h, 0, 0).unwrap()
    }

    #[test]
    fn weekly_lookup() {
        let t = Tariff::default();
        assert_eq!(t.rate(at(3, 10)), (23.92, 8.16));
        assert_eq!(t.rate(at(3, 23)), (15.16, 8.16));
        assert_eq!(t.rate(at(6, 14)), (15.16, 8.16));
        assert_eq!(t.rate(at(3, 6)), (23.92, 8.16));
        assert_eq!(t.rate(at(3, 22)), (15.16, 8.16));
        assert_eq!(t.rate(at(1, 5)), (15.16, 8.16));
    }

    #[test]
    fn schedule_partition() {
        let t = Tariff::default();
        let peak = t.import_cts.iter().filter(|r| **r == 23.92).count();
        let off = t.import_cts.iter().filter(|r| **r == 15.16).count();
        assert_eq!(peak, 5 * 16);
        assert_eq!(peak + off, 168);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(Tariff::time_of_use(-1.0, 1.0, 1.0, 6, 22).is_err());
        assert!(Tariff::time_of_use(1.0, 1.0, 1.0, 22, 6).is_err());
    }
}
