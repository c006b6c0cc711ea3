use super::ViolationRecord;

/// A maximal run of violating steps, optionally widened, with inclusive bounds.
#[derive(Debug, Clone, PartialEq)]
pub struct InterventionPeriod {
    pub index: usize,
    pub start: usize,
    pub end: usize,
    pub violations: Vec<ViolationRecord>,
}

impl InterventionPeriod {
    pub fn len(&self) -> usize {
        self.end - self.start + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn contains(&self, t: usize) -> bool {
        self.start <= t && t <= self.end
    }

    pub fn steps(&self) -> std::ops::RangeInclusive<usize> {
        self.start..=self.end
    }

    pub fn duration_h(&self, dt_h: f64) -> f64 {
        self.len() as f64 * dt_h
    }
}

/// Groups violating steps into contiguous periods, widens each by `padding`
/// steps on both sides (clamped to the horizon) and merges overlaps.
pub fn extract_periods(violations: &[ViolationRecord], horizon: usize, padding: usize) -> Vec<InterventionPeriod> {
    let mut steps: Vec<usize> = violations.iter().map(|v| v.t).filter(|&t| t < horizon).collect();
    steps.sort_unstable();
    steps.dedup();

    let mut runs: Vec<(usize, usize)> = Vec::new();
    for t in steps {
        match runs.last_mut() {
            Some(r) if r.1 + 1 == t => r.1 = t,
            _ => runs.push((t, t)),
        }
    }
    let mut merged: Vec<(usize, usize)> = Vec::new();
    for (s, e) in runs {
        let (s, e) = (s.saturating_sub(padding), (e + padding).min(horizon - 1));
        match merged.last_mut() {
            Some(m) if s <= m.1 => m.1 = m.1.max(e),
            _ => merged.push((s, e)),
        }
    }
    merged
        .into_iter()
        .enumerate()
        .map(|(index, (start, end))| InterventionPeriod {
            index,
            start,
            end,
            violations: violations
                .iter()
                .filter(|v| start <= v.t && v.t <= end)
                .cloned()
                .collect(),
        })
        .collect()
}
