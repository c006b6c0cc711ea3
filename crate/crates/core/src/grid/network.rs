use std::collections::HashMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use crate::{Error, Result};

const CIGRE_LV: &str = include_str!("../../data/cigre_lv.net");

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BusKind {
    Slack,
    Pq,
}

impl FromStr for BusKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "slack" => Ok(BusKind::Slack),
            "pq" => Ok(BusKind::Pq),
            other => Err(format!("unknown bus kind {other:?}")),
        }
    }
}

impl fmt::Display for BusKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BusKind::Slack => "slack",
            BusKind::Pq => "pq",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Bus {
    pub id: String,
    pub kind: BusKind,
    pub base_kv: f64,
    pub is_prosumer: bool,
}

/// A series element between two buses. Transformer branches run from the
/// high-voltage bus to the low-voltage bus.
#[derive(Debug, Clone, PartialEq)]
pub struct Branch {
    pub id: String,
    pub from: usize,
    pub to: usize,
    pub length_km: f64,
    /// Ω/km for lines; short-circuit resistance in % of own rating for transformers.
    pub r: f64,
    /// Ω/km for lines; short-circuit reactance in % of own rating for transformers.
    pub x: f64,
    pub ampacity_ka: f64,
    pub is_transformer: bool,
    pub rating_mva: f64,
}

#[derive(Debug, Clone)]
pub struct Network {
    buses: Vec<Bus>,
    branches: Vec<Branch>,
    slack: usize,
    prosumers: Vec<usize>,
    index: HashMap<String, usize>,
}

impl Network {
    /// Reads and validates a network file.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, &path.display().to_string())
    }

    /// The bundled CIGRE low-voltage benchmark.
    pub fn cigre_lv() -> Self {
        Self::parse(CIGRE_LV, "cigre_lv.net").expect("bundled fixture is valid")
    }

    pub fn parse(text: &str, source: &str) -> Result<Self> {
        let perr = |line: usize, msg: String| Error::Parse {
            path: source.to_string(),
            line,
            msg,
        };
        let mut buses = Vec::new();
        // (line number, from id, to id, km, r, x, kA, trafo, MVA)
        let mut raw_branches = Vec::new();

        for (n, raw) in text.lines().enumerate() {
            let lineno = n + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            match fields[0] {
                "bus" => {
                    if fields.len() != 5 {
                        return Err(perr(lineno, format!("bus record needs 5 fields, got {}", fields.len())));
                    }
                    let kind = fields[2].parse().map_err(|e| perr(lineno, e))?;
                    let base_kv = parse_num(fields[3]).map_err(|e| perr(lineno, e))?;
                    let is_prosumer = parse_bool(fields[4]).map_err(|e| perr(lineno, e))?;
                    if !(base_kv > 0.0) {
                        return Err(perr(lineno, format!("base voltage must be positive, got {base_kv}")));
                    }
                    buses.push(Bus {
                        id: fields[1].to_string(),
                        kind,
                        base_kv,
                        is_prosumer,
                    });
                }
                "branch" => {
                    if fields.len() != 9 {
                        return Err(perr(lineno, format!("branch record needs 9 fields, got {}", fields.len())));
                    }
                    let mut nums = [0.0; 4];
                    for (k, f) in [3, 4, 5, 6].iter().enumerate() {
                        nums[k] = parse_num(fields[*f]).map_err(|e| perr(lineno, e))?;
                    }
                    let trafo = parse_bool(fields[7]).map_err(|e| perr(lineno, e))?;
                    let mva = parse_num(fields[8]).map_err(|e| perr(lineno, e))?;
                    raw_branches.push((lineno, fields[1].to_string(), fields[2].to_string(), nums, trafo, mva));
                }
                other => return Err(perr(lineno, format!("unknown record kind {other:?}"))),
            }
        }

        let mut index = HashMap::new();
        for (i, b) in buses.iter().enumerate() {
            if index.insert(b.id.clone(), i).is_some() {
                return Err(Error::Topology(format!("duplicate bus id {:?}", b.id)));
            }
        }
        let slacks: Vec<usize> = (0..buses.len()).filter(|&i| buses[i].kind == BusKind::Slack).collect();
        let slack = match slacks.as_slice() {
            [s] => *s,
            [] => return Err(Error::Topology("network has no slack bus".into())),
            _ => return Err(Error::Topology(format!("network has {} slack buses", slacks.len()))),
        };

        let mut branches: Vec<Branch> = Vec::with_capacity(raw_branches.len());
        let mut seen: HashMap<String, usize> = HashMap::new();
        for (lineno, from_id, to_id, [km, r, x, ka], trafo, mva) in raw_branches {
            let lookup = |id: &str| {
                index
                    .get(id)
                    .copied()
                    .ok_or_else(|| Error::Topology(format!("branch on line {lineno} references unknown bus {id:?}")))
            };
            let from = lookup(&from_id)?;
            let to = lookup(&to_id)?;
            if from == to {
                return Err(Error::Topology(format!("branch on line {lineno} connects {from_id:?} to itself")));
            }
            let base = format!("{from_id}-{to_id}");
            let count = seen.entry(base.clone()).or_insert(0);
            *count += 1;
            let id = if *count == 1 { base } else { format!("{base}#{count}") };

            if !(ka > 0.0) {
                return Err(perr(lineno, format!("branch {id}: ampacity must be positive")));
            }
            if trafo {
                if !(mva > 0.0) {
                    return Err(perr(lineno, format!("transformer {id}: rating must be positive")));
                }
                if buses[from].base_kv <= buses[to].base_kv {
                    return Err(Error::Topology(format!(
                        "transformer {id}: from bus must be the high-voltage side"
                    )));
                }
            } else {
                if !(km > 0.0) {
                    return Err(perr(lineno, format!("line {id}: length must be positive")));
                }
                if (buses[from].base_kv - buses[to].base_kv).abs() > 1e-9 {
                    return Err(Error::Topology(format!("line {id} joins two voltage levels")));
                }
            }
            branches.push(Branch {
                id,
                from,
                to,
                length_km: km,
                r,
                x,
                ampacity_ka: ka,
                is_transformer: trafo,
                rating_mva: if trafo { mva } else { 0.0 },
            });
        }

        // every bus must be energised from the slack
        let mut adj = vec![Vec::new(); buses.len()];
        for br in &branches {
            adj[br.from].push(br.to);
            adj[br.to].push(br.from);
        }
        let mut reached = vec![false; buses.len()];
        let mut stack = vec![slack];
        reached[slack] = true;
        while let Some(i) = stack.pop() {
            for &k in &adj[i] {
                if !reached[k] {
                    reached[k] = true;
                    stack.push(k);
                }
            }
        }
        if let Some(i) = reached.iter().position(|r| !r) {
            return Err(Error::Topology(format!("bus {:?} is not connected to the slack", buses[i].id)));
        }

        let prosumers = (0..buses.len()).filter(|&i| buses[i].is_prosumer).collect();
        Ok(Network {
            buses,
            branches,
            slack,
            prosumers,
            index,
        })
    }

    pub fn buses(&self) -> &[Bus] {
        &self.buses
    }

    pub fn branches(&self) -> &[Branch] {
        &self.branches
    }

    pub fn slack(&self) -> usize {
        self.slack
    }

    /// Bus indices of the prosumer buses, in file order.
    pub fn prosumers(&self) -> &[usize] {
        &self.prosumers
    }

    pub fn prosumer_ids(&self) -> Vec<&str> {
        self.prosumers.iter().map(|&i| self.buses[i].id.as_str()).collect()
    }

    pub fn bus_index(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    pub fn branch_index(&self, id: &str) -> Option<usize> {
        self.branches.iter().position(|b| b.id == id)
    }

    pub fn transformers(&self) -> impl Iterator<Item = (usize, &Branch)> {
        self.branches.iter().enumerate().filter(|(_, b)| b.is_transformer)
    }
}

/// Voltage band plus per-branch thermal limits.
#[derive(Debug, Clone, PartialEq)]
pub struct OperatingLimits {
    pub v_min: f64,
    pub v_max: f64,
    pub ampacity_ka: Vec<f64>,
    /// Transformer rating in MVA; `None` for lines.
    pub rating_mva: Vec<Option<f64>>,
}

impl OperatingLimits {
    pub fn new(network: &Network, v_min: f64, v_max: f64) -> Result<Self> {
        if !(0.0 < v_min && v_min < 1.0 && 1.0 < v_max) {
            return Err(Error::invalid(format!(
                "voltage band must satisfy 0 < v_min < 1 < v_max, got [{v_min}, {v_max}]"
            )));
        }
        Ok(Self {
            v_min,
            v_max,
            ampacity_ka: network.branches.iter().map(|b| b.ampacity_ka).collect(),
            rating_mva: network
                .branches
                .iter()
                .map(|b| b.is_transformer.then_some(b.rating_mva))
                .collect(),
        })
    }
}

fn parse_num(s: &str) -> Result<f64, String> {
    s.parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| format!("invalid number {s:?}"))
}

fn parse_bool(s: &str) -> Result<bool, String> {
    match s.to_ascii_lowercase().as_str() {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(format!("invalid boolean {s:?}")),
    }
}
