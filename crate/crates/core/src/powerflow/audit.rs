use std::fmt;
use std::str::FromStr;

use super::NetworkState;
use crate::grid::{Network, OperatingLimits};
use crate::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ViolationKind {
    Overvoltage,
    Undervoltage,
    Ampacity,
    Transformer,
}

impl ViolationKind {
    pub const ALL: [ViolationKind; 4] = [
        ViolationKind::Overvoltage,
        ViolationKind::Undervoltage,
        ViolationKind::Ampacity,
        ViolationKind::Transformer,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ViolationKind::Overvoltage => "overvoltage",
            ViolationKind::Undervoltage => "undervoltage",
            ViolationKind::Ampacity => "ampacity",
            ViolationKind::Transformer => "transformer",
        }
    }
}

impl fmt::Display for ViolationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ViolationKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        Self::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::invalid(format!("unknown violation kind {s:?}")))
    }
}

/// One element beyond its limit at one step. Voltages in pu, currents in kA,
/// transformer loading in MVA.
#[derive(Debug, Clone, PartialEq)]
pub struct ViolationRecord {
    pub t: usize,
    pub kind: ViolationKind,
    pub element: String,
    pub value: f64,
    pub limit: f64,
}

/// Appends the violations of one state to `out`.
///
/// Ampacity applies to lines only; transformers are checked against their
/// MVA rating at the high-voltage terminal.
pub fn audit_step(t: usize, state: &NetworkState, network: &Network, limits: &OperatingLimits, out: &mut Vec<ViolationRecord>) {
    for (i, bus) in network.buses().iter().enumerate() {
        let v = state.vm[i];
        if v > limits.v_max {
            out.push(ViolationRecord {
                t,
                kind: ViolationKind::Overvoltage,
                element: bus.id.clone(),
                value: v,
                limit: limits.v_max,
            });
        } else if v < limits.v_min {
            out.push(ViolationRecord {
                t,
                kind: ViolationKind::Undervoltage,
                element: bus.id.clone(),
                value: v,
                limit: limits.v_min,
            });
        }
    }
    for (b, br) in network.branches().iter().enumerate() {
        let (kind, value, limit) = match limits.rating_mva[b] {
            Some(rating) => (ViolationKind::Transformer, state.apparent_mva[b], rating),
            None => (ViolationKind::Ampacity, state.current_ka[b], limits.ampacity_ka[b]),
        };
        if value > limit {
            out.push(ViolationRecord {
                t,
                kind,
                element: br.id.clone(),
                value,
                limit,
            });
        }
    }
}

/// Violations of a state series, ordered by step, buses before branches.
pub fn audit(states: &[NetworkState], network: &Network, limits: &OperatingLimits) -> Vec<ViolationRecord> {
    let mut out = Vec::new();
    for (t, st) in states.iter().enumerate() {
        audit_step(t, st, network, limits, &mut out);
    }
    out
}

/// Smallest normalised distance to a limit; negative when violated.
/// Voltage slack is in pu, thermal slack as a fraction of the limit.
#[derive(Debug, Clone, PartialEq)]
pub struct Slack {
    pub value: f64,
    pub kind: ViolationKind,
    pub element: String,
}

pub fn worst_slack(state: &NetworkState, network: &Network, limits: &OperatingLimits) -> Slack {
    let mut worst = Slack {
        value: f64::INFINITY,
        kind: ViolationKind::Overvoltage,
        element: String::new(),
    };
    let mut consider = |value: f64, kind: ViolationKind, element: &str| {
        if value < worst.value {
            worst = Slack {
                value,
                kind,
                element: element.to_string(),
            };
        }
    };
    for (i, bus) in network.buses().iter().enumerate() {
        consider(limits.v_max - state.vm[i], ViolationKind::Overvoltage, &bus.id);
        consider(state.vm[i] - limits.v_min, ViolationKind::Undervoltage, &bus.id);
    }
    for (b, br) in network.branches().iter().enumerate() {
        match limits.rating_mva[b] {
            Some(r) => consider(1.0 - state.apparent_mva[b] / r, ViolationKind::Transformer, &br.id),
            None => consider(1.0 - state.current_ka[b] / limits.ampacity_ka[b], ViolationKind::Ampacity, &br.id),
        }
    }
    worst
}

/// Per-category totals: steps with at least one violation of that kind,
/// the matching hours, and the extreme value reached.
#[derive(Debug, Clone, PartialEq)]
pub struct CategorySummary {
    pub kind: ViolationKind,
    pub steps: usize,
    pub hours: f64,
    /// Highest value for upper limits, lowest for undervoltage. `None` without records.
    pub extreme: Option<f64>,
    /// Extreme relative to the limit of the same record.
    pub extreme_ratio: Option<f64>,
}

pub fn summarize(records: &[ViolationRecord], dt_h: f64) -> Vec<CategorySummary> {
    ViolationKind::ALL
        .iter()
        .map(|&kind| {
            let of_kind: Vec<&ViolationRecord> = records.iter().filter(|r| r.kind == kind).collect();
            let mut steps: Vec<usize> = of_kind.iter().map(|r| r.t).collect();
            steps.sort_unstable();
            steps.dedup();
            let pick = |a: &&&ViolationRecord, b: &&&ViolationRecord| {
                let (x, y) = (a.value / a.limit, b.value / b.limit);
                x.total_cmp(&y)
            };
            let extreme = if kind == ViolationKind::Undervoltage {
                of_kind.iter().min_by(pick)
            } else {
                of_kind.iter().max_by(pick)
            };
            CategorySummary {
                kind,
                steps: steps.len(),
                hours: steps.len() as f64 * dt_h,
                extreme: extreme.map(|r| r.value),
                extreme_ratio: extreme.map(|r| r.value / r.limit),
            }
        })
        .collect()
}
