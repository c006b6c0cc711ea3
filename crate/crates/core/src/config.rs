//! Study configuration: a flat `section.key = value` text file.
//!
//! Blank lines and lines starting with `#` are ignored. Later assignments of
//! the same key win, so command-line overrides are applied with [`RawConfig::set`].
//! Relative paths are resolved against the directory of the config file.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use crate::dispatch::{BatteryParams, Tariff};
use crate::economics::ReinforcementInputs;
use crate::opf::{FlexMode, OpfOptions};
use crate::powerflow::PfOptions;
use crate::profiles::{LcoeParams, DEFAULT_SCALES};
use crate::{Error, Result};

const KEYS: &[&str] = &[
    "network.path",
    "network.systems",
    "profiles.load",
    "profiles.pv",
    "profiles.seed",
    "profiles.weeks",
    "scenario.scales",
    "scenario.module_kw",
    "lcoe.lifetime",
    "lcoe.rate",
    "lcoe.chf_per_w",
    "lcoe.fixed_chf",
    "lcoe.threshold_cts",
    "tariff.peak_cts",
    "tariff.offpeak_cts",
    "tariff.export_cts",
    "tariff.peak_hours",
    "battery.unit_cost",
    "battery.fixed_cost",
    "battery.lifetime",
    "battery.interest",
    "battery.eta_charge",
    "battery.eta_discharge",
    "battery.power_ratio",
    "battery.soc_min",
    "battery.soc_max",
    "battery.initial_soc",
    "battery.sigma",
    "limits.v_min",
    "limits.v_max",
    "pf.tol",
    "pf.max_iter",
    "pf.warm_start",
    "opf.tol",
    "opf.max_outer_iter",
    "opf.trust_region",
    "opf.q_ratio",
    "opf.penalty",
    "periods.padding",
    "economics.c_line",
    "economics.c_trafo",
    "economics.lifetime",
    "economics.interest",
    "economics.c_trafo_values",
    "study.modes",
    "study.workers",
    "study.out",
];

/// Unvalidated key-value pairs, remembering where file paths are relative to.
#[derive(Debug, Clone, Default)]
pub struct RawConfig {
    values: BTreeMap<String, String>,
    base_dir: PathBuf,
}

impl RawConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::parse(&text, &path.display().to_string())?;
        cfg.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(cfg)
    }

    pub fn parse(text: &str, source: &str) -> Result<Self> {
        let mut cfg = Self::default();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let parse_err = |msg: String| Error::Parse {
                path: source.to_string(),
                line: n + 1,
                msg,
            };
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| parse_err(format!("expected `section.key = value`, got {line:?}")))?;
            let key = key.trim();
            if !KEYS.contains(&key) {
                return Err(parse_err(format!("unknown key {key:?}")));
            }
            cfg.values.insert(key.to_string(), value.trim().to_string());
        }
        Ok(cfg)
    }

    pub fn set(&mut self, key: &str, value: impl Into<String>) -> Result<()> {
        if !KEYS.contains(&key) {
            return Err(Error::Config {
                key: key.into(),
                msg: "unknown key".into(),
            });
        }
        self.values.insert(key.to_string(), value.into());
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }

    fn num(&self, key: &str, default: f64) -> Result<f64> {
        match self.get(key) {
            None => Ok(default),
            Some(v) => v.parse::<f64>().ok().filter(|x| x.is_finite()).ok_or_else(|| Error::Config {
                key: key.into(),
                msg: format!("expected a number, got {v:?}"),
            }),
        }
    }

    fn int(&self, key: &str, default: u64) -> Result<u64> {
        match self.get(key) {
            None => Ok(default),
            Some(v) => v.parse::<u64>().map_err(|_| Error::Config {
                key: key.into(),
                msg: format!("expected a non-negative integer, got {v:?}"),
            }),
        }
    }

    fn flag(&self, key: &str, default: bool) -> Result<bool> {
        match self.get(key) {
            None => Ok(default),
            Some("true") => Ok(true),
            Some("false") => Ok(false),
            Some(v) => Err(Error::Config {
                key: key.into(),
                msg: format!("expected true or false, got {v:?}"),
            }),
        }
    }

    fn list(&self, key: &str) -> Result<Option<Vec<f64>>> {
        let Some(v) = self.get(key) else { return Ok(None) };
        v.split(',')
            .map(|s| {
                s.trim().parse::<f64>().ok().filter(|x| x.is_finite()).ok_or_else(|| Error::Config {
                    key: key.into(),
                    msg: format!("expected a comma-separated list of numbers, got {v:?}"),
                })
            })
            .collect::<Result<Vec<_>>>()
            .map(Some)
    }

    fn path(&self, key: &str) -> Option<PathBuf> {
        self.get(key).map(|v| {
            let p = PathBuf::from(v);
            if p.is_relative() {
                self.base_dir.join(p)
            } else {
                p
            }
        })
    }
}

/// Where the profiles come from.
#[derive(Debug, Clone, PartialEq)]
pub enum ProfileSource {
    Files { load: PathBuf, pv: Option<PathBuf> },
    Synthetic { seed: u64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct StudyConfig {
    /// `None` uses the bundled CIGRE LV network.
    pub network: Option<PathBuf>,
    /// `None` uses the bundled per-prosumer system table.
    pub systems: Option<PathBuf>,
    pub profiles: ProfileSource,
    /// Seed for any synthetic series, including PV yield when only load is given.
    pub seed: u64,
    /// Representative weeks of the year (0-based); `None` runs the full year.
    pub weeks: Option<Vec<usize>>,
    pub scales: Vec<f64>,
    pub module_kw: f64,
    pub lcoe: LcoeParams,
    pub tariff: Tariff,
    pub battery: BatteryParams,
    pub v_min: f64,
    pub v_max: f64,
    pub pf: PfOptions,
    pub opf: OpfOptions,
    pub padding: usize,
    pub reinforcement: ReinforcementInputs,
    pub c_trafo_values: Vec<f64>,
    pub modes: Vec<FlexMode>,
    pub workers: Option<usize>,
    pub out_dir: PathBuf,
}

impl Default for StudyConfig {
    fn default() -> Self {
        Self::from_raw(&RawConfig::default()).expect("defaults are valid")
    }
}

impl StudyConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_raw(&RawConfig::load(path)?)
    }

    pub fn from_raw(raw: &RawConfig) -> Result<Self> {
        let seed = raw.int("profiles.seed", 42)?;
        let profiles = match raw.path("profiles.load") {
            Some(load) => ProfileSource::Files {
                load,
                pv: raw.path("profiles.pv"),
            },
            None => {
                if raw.get("profiles.pv").is_some() {
                    return Err(Error::Config {
                        key: "profiles.pv".into(),
                        msg: "a PV yield file needs profiles.load as well".into(),
                    });
                }
                ProfileSource::Synthetic { seed }
            }
        };
        let weeks = match raw.get("profiles.weeks") {
            None | Some("") | Some("all") => None,
            Some(_) => Some(
                raw.list("profiles.weeks")?
                    .unwrap_or_default()
                    .into_iter()
                    .map(|w| {
                        if w >= 0.0 && w.fract() == 0.0 {
                            Ok(w as usize)
                        } else {
                            Err(Error::Config {
                                key: "profiles.weeks".into(),
                                msg: format!("week {w} is not a non-negative integer"),
                            })
                        }
                    })
                    .collect::<Result<Vec<_>>>()?,
            ),
        };
        let scales = raw.list("scenario.scales")?.unwrap_or_else(|| DEFAULT_SCALES.to_vec());
        if scales.is_empty() || scales.iter().any(|&s| !(s > 0.0 && s <= 1.0)) {
            return Err(Error::Config {
                key: "scenario.scales".into(),
                msg: "scales must lie in (0, 1]".into(),
            });
        }
        let d_lcoe = LcoeParams::default();
        let lcoe = LcoeParams {
            lifetime_years: raw.num("lcoe.lifetime", d_lcoe.lifetime_years)?,
            discount_rate: raw.num("lcoe.rate", d_lcoe.discount_rate)?,
            variable_chf_per_w: raw.num("lcoe.chf_per_w", d_lcoe.variable_chf_per_w)?,
            fixed_chf: raw.num("lcoe.fixed_chf", d_lcoe.fixed_chf)?,
            threshold_cts: raw.num("lcoe.threshold_cts", d_lcoe.threshold_cts)?,
        };
        lcoe.validate()?;

        let (peak_start, peak_end) = match raw.get("tariff.peak_hours") {
            None => (6, 22),
            Some(v) => v
                .split_once('-')
                .and_then(|(a, b)| Some((a.trim().parse::<u32>().ok()?, b.trim().parse::<u32>().ok()?)))
                .ok_or_else(|| Error::Config {
                    key: "tariff.peak_hours".into(),
                    msg: format!("expected `start-end` hours, got {v:?}"),
                })?,
        };
        let tariff = Tariff::time_of_use(
            raw.num("tariff.peak_cts", 23.92)?,
            raw.num("tariff.offpeak_cts", 15.16)?,
            raw.num("tariff.export_cts", 8.16)?,
            peak_start,
            peak_end,
        )?;

        let d_bat = BatteryParams::default();
        let battery = BatteryParams {
            unit_cost_chf_per_kwh: raw.num("battery.unit_cost", d_bat.unit_cost_chf_per_kwh)?,
            fixed_cost_chf: raw.num("battery.fixed_cost", d_bat.fixed_cost_chf)?,
            lifetime_years: raw.num("battery.lifetime", d_bat.lifetime_years)?,
            interest: raw.num("battery.interest", d_bat.interest)?,
            charge_efficiency: raw.num("battery.eta_charge", d_bat.charge_efficiency)?,
            discharge_efficiency: raw.num("battery.eta_discharge", d_bat.discharge_efficiency)?,
            power_ratio: raw.num("battery.power_ratio", d_bat.power_ratio)?,
            soc_min: raw.num("battery.soc_min", d_bat.soc_min)?,
            soc_max: raw.num("battery.soc_max", d_bat.soc_max)?,
            initial_soc: raw.num("battery.initial_soc", d_bat.initial_soc)?,
            sigma_weight: raw.num("battery.sigma", d_bat.sigma_weight)?,
        };
        battery.validate()?;

        let d_pf = PfOptions::default();
        let pf = PfOptions {
            tol: raw.num("pf.tol", d_pf.tol)?,
            max_iter: raw.int("pf.max_iter", d_pf.max_iter as u64)? as usize,
            warm_start: raw.flag("pf.warm_start", d_pf.warm_start)?,
        };
        if !(pf.tol > 0.0) || pf.max_iter == 0 {
            return Err(Error::Config {
                key: "pf".into(),
                msg: "tolerance and iteration limit must be positive".into(),
            });
        }
        let d_opf = OpfOptions::default();
        let opf = OpfOptions {
            tol: raw.num("opf.tol", d_opf.tol)?,
            max_outer_iter: raw.int("opf.max_outer_iter", d_opf.max_outer_iter as u64)? as usize,
            trust_region: raw.num("opf.trust_region", d_opf.trust_region)?,
            q_ratio: raw.num("opf.q_ratio", d_opf.q_ratio)?,
            penalty: raw.num("opf.penalty", d_opf.penalty)?,
            pf,
            ..d_opf
        };
        opf.validate()?;

        let d_re = ReinforcementInputs::default();
        let reinforcement = ReinforcementInputs {
            c_line_kchf_per_km: raw.num("economics.c_line", d_re.c_line_kchf_per_km)?,
            c_trafo_kchf_per_mva: raw.num("economics.c_trafo", d_re.c_trafo_kchf_per_mva)?,
            lifetime_years: raw.num("economics.lifetime", d_re.lifetime_years)?,
            interest: raw.num("economics.interest", d_re.interest)?,
        };
        reinforcement.validate()?;
        let c_trafo_values = raw
            .list("economics.c_trafo_values")?
            .unwrap_or_else(|| vec![12.0, reinforcement.c_trafo_kchf_per_mva]);
        if c_trafo_values.is_empty() || c_trafo_values.iter().any(|&c| c < 0.0) {
            return Err(Error::Config {
                key: "economics.c_trafo_values".into(),
                msg: "need at least one non-negative transformer cost".into(),
            });
        }

        let modes = match raw.get("study.modes") {
            None => FlexMode::ALL.to_vec(),
            Some(v) => parse_modes(v)?,
        };
        let workers = match raw.int("study.workers", 0)? {
            0 => None,
            n => Some(n as usize),
        };

        Ok(Self {
            network: raw.path("network.path"),
            systems: raw.path("network.systems"),
            profiles,
            seed,
            weeks,
            scales,
            module_kw: raw.num("scenario.module_kw", 0.4)?,
            lcoe,
            tariff,
            battery,
            v_min: raw.num("limits.v_min", 0.95)?,
            v_max: raw.num("limits.v_max", 1.05)?,
            pf,
            opf,
            padding: raw.int("periods.padding", 0)? as usize,
            reinforcement,
            c_trafo_values,
            modes,
            workers,
            out_dir: raw.path("study.out").unwrap_or_else(|| PathBuf::from("out")),
        })
    }
}

pub fn parse_modes(v: &str) -> Result<Vec<FlexMode>> {
    let mut modes = Vec::new();
    for m in v.split(',') {
        let m: FlexMode = m.trim().parse()?;
        if !modes.contains(&m) {
            modes.push(m);
        }
    }
    if modes.is_empty() {
        return Err(Error::Config {
            key: "study.modes".into(),
            msg: "at least one mode is required".into(),
        });
    }
    Ok(modes)
}
