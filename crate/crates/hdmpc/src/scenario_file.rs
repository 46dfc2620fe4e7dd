//! Scenario files: flat `key = value` text with `[microgrid]`, `[consensus]`,
//! `[tariffs]` and `[building.<n>]` sections. Top-level keys precede the
//! first section.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use hdmpc_core::building::{ModelId, WeightClass};
use hdmpc_core::microgrid::{MicrogridParams, Tariff};
use hdmpc_core::negotiation::ConsensusConfig;
use hdmpc_core::scenario::{BuildingSpec, Mode, PccFeedback, PlantParams, ScenarioConfig, ScenarioError};
use thiserror::Error;

use crate::res_csv::{read_res_trace, ResTrace, ResTraceError};

#[derive(Debug, Error)]
pub enum ParseError {
    #[error("line {line}: missing key `{key}` in {section}")]
    MissingKey { section: String, key: String, line: usize },
    #[error("line {line}: hour {hour}: purchase tariff {buy} must exceed sale tariff {sell}")]
    TariffOrderViolation { hour: usize, buy: f64, sell: f64, line: usize },
    #[error("line {line}: {value} minutes is not a multiple of the {step}-minute step")]
    GridMisalignment { value: u32, step: u32, line: usize },
    #[error("line {line}: {msg}")]
    Syntax { line: usize, msg: String },
    #[error("line {line}: unknown key `{key}`")]
    UnknownKey { key: String, line: usize },
    #[error("line {line}: duplicate key `{key}`")]
    DuplicateKey { key: String, line: usize },
    #[error("line {line}: unknown section `{name}`")]
    UnknownSection { name: String, line: usize },
    #[error("line {line}: invalid value `{value}` for `{key}`: {msg}")]
    InvalidValue { key: String, value: String, msg: String, line: usize },
    #[error("{0}")]
    Io(#[from] std::io::Error),
    #[error("RES trace: {0}")]
    Res(#[from] ResTraceError),
    #[error("scenario: {0}")]
    Scenario(#[from] ScenarioError),
}

/// A parsed scenario file. `config.res` stays empty until the trace is loaded.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioSpec {
    pub config: ScenarioConfig,
    /// RES trace path as written in the file.
    pub res_trace: String,
}

/// A scenario ready to run.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadedScenario {
    pub spec: ScenarioSpec,
    pub config: ScenarioConfig,
    pub res: ResTrace,
    /// Resolved RES trace path.
    pub res_path: PathBuf,
}

const TOP_KEYS: &[&str] = &[
    "mode",
    "duration",
    "step",
    "start",
    "soc_ini",
    "incentive",
    "res_trace",
    "res_forecast_mix",
    "pcc_feedback",
    "seed",
    "load_scale",
    "noise_fraction",
];
const MICROGRID_KEYS: &[&str] = &[
    "eta_c",
    "eta_d",
    "pen",
    "pg_min",
    "pg_max",
    "pb_min",
    "pb_max",
    "e_min",
    "e_max",
    "w_c",
    "w_r",
    "w_p",
    "w_co",
    "w_ro",
    "n_m",
    "n_mpo",
    "capacity",
    "plant_eta_c",
    "plant_eta_d",
];
const CONSENSUS_KEYS: &[&str] = &["alpha", "max_iters", "eps_fraction", "eps_floor", "unit_w"];
const CONSENSUS_OPTIONAL: &[&str] = &["q_weights", "q_star"];
const BUILDING_KEYS: &[&str] = &["model", "class", "t_set"];
const BUILDING_OPTIONAL: &[&str] = &["t_init", "margin"];

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
enum SectionId {
    Top,
    Microgrid,
    Consensus,
    Tariffs,
    Building(u32),
}

impl SectionId {
    fn label(&self) -> String {
        match self {
            SectionId::Top => "top level".into(),
            SectionId::Microgrid => "[microgrid]".into(),
            SectionId::Consensus => "[consensus]".into(),
            SectionId::Tariffs => "[tariffs]".into(),
            SectionId::Building(n) => format!("[building.{n}]"),
        }
    }

    fn allows(&self, key: &str) -> bool {
        match self {
            SectionId::Top => TOP_KEYS.contains(&key),
            SectionId::Microgrid => MICROGRID_KEYS.contains(&key),
            SectionId::Consensus => CONSENSUS_KEYS.contains(&key) || CONSENSUS_OPTIONAL.contains(&key),
            SectionId::Tariffs => key.parse::<usize>().is_ok_and(|h| h < 24),
            SectionId::Building(_) => BUILDING_KEYS.contains(&key) || BUILDING_OPTIONAL.contains(&key),
        }
    }
}

struct Section {
    header_line: usize,
    entries: BTreeMap<String, (String, usize)>,
}

impl Section {
    fn raw(&self, id: &SectionId, key: &str) -> Result<(&str, usize), ParseError> {
        self.entries
            .get(key)
            .map(|(v, l)| (v.as_str(), *l))
            .ok_or_else(|| ParseError::MissingKey {
                section: id.label(),
                key: key.into(),
                line: self.header_line,
            })
    }

    fn optional(&self, key: &str) -> Option<(&str, usize)> {
        self.entries.get(key).map(|(v, l)| (v.as_str(), *l))
    }

    fn get<T: std::str::FromStr>(&self, id: &SectionId, key: &str) -> Result<T, ParseError>
    where
        T::Err: std::fmt::Display,
    {
        let (v, line) = self.raw(id, key)?;
        parse_value(key, v, line)
    }
}

fn parse_value<T: std::str::FromStr>(key: &str, v: &str, line: usize) -> Result<T, ParseError>
where
    T::Err: std::fmt::Display,
{
    v.parse::<T>().map_err(|e| ParseError::InvalidValue {
        key: key.into(),
        value: v.into(),
        msg: e.to_string(),
        line,
    })
}

fn invalid(key: &str, value: &str, msg: &str, line: usize) -> ParseError {
    ParseError::InvalidValue {
        key: key.into(),
        value: value.into(),
        msg: msg.into(),
        line,
    }
}

fn parse_list(key: &str, v: &str, line: usize) -> Result<Vec<f64>, ParseError> {
    if v.trim().is_empty() {
        return Ok(Vec::new());
    }
    v.split(',').map(|p| parse_value(key, p.trim(), line)).collect()
}

fn split_sections(text: &str) -> Result<BTreeMap<SectionId, Section>, ParseError> {
    let mut sections: BTreeMap<SectionId, Section> = BTreeMap::new();
    sections.insert(
        SectionId::Top,
        Section {
            header_line: 1,
            entries: BTreeMap::new(),
        },
    );
    let mut current = SectionId::Top;
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        if let Some(name) = content.strip_prefix('[') {
            let name = name
                .strip_suffix(']')
                .ok_or_else(|| ParseError::Syntax {
                    line,
                    msg: "unterminated section header".into(),
                })?
                .trim();
            let id = match name {
                "microgrid" => SectionId::Microgrid,
                "consensus" => SectionId::Consensus,
                "tariffs" => SectionId::Tariffs,
                _ => match name.strip_prefix("building.").and_then(|n| n.parse::<u32>().ok()) {
                    Some(n) => SectionId::Building(n),
                    None => {
                        return Err(ParseError::UnknownSection {
                            name: name.into(),
                            line,
                        })
                    }
                },
            };
            if sections.contains_key(&id) {
                return Err(ParseError::Syntax {
                    line,
                    msg: format!("section {} appears twice", id.label()),
                });
            }
            sections.insert(
                id.clone(),
                Section {
                    header_line: line,
                    entries: BTreeMap::new(),
                },
            );
            current = id;
            continue;
        }
        let (key, value) = content.split_once('=').ok_or_else(|| ParseError::Syntax {
            line,
            msg: "expected `key = value`".into(),
        })?;
        let (key, value) = (key.trim(), value.trim());
        if !current.allows(key) {
            return Err(ParseError::UnknownKey { key: key.into(), line });
        }
        let section = sections.get_mut(&current).expect("current section exists");
        if section.entries.insert(key.into(), (value.into(), line)).is_some() {
            return Err(ParseError::DuplicateKey { key: key.into(), line });
        }
    }
    for id in [SectionId::Microgrid, SectionId::Consensus, SectionId::Tariffs] {
        if !sections.contains_key(&id) {
            return Err(ParseError::Syntax {
                line: text.lines().count(),
                msg: format!("missing section {}", id.label()),
            });
        }
    }
    Ok(sections)
}

/// Parses scenario text. The RES trace is not read.
pub fn parse_scenario_str(text: &str) -> Result<ScenarioSpec, ParseError> {
    let sections = split_sections(text)?;
    let top_id = SectionId::Top;
    let top = &sections[&top_id];

    let (mode_raw, mode_line) = top.raw(&top_id, "mode")?;
    let mode = Mode::from_name(mode_raw).ok_or_else(|| invalid("mode", mode_raw, "expected flex, fix or cen", mode_line))?;
    let step: u32 = top.get(&top_id, "step")?;
    let (_, step_line) = top.raw(&top_id, "step")?;
    if step != 15 {
        return Err(invalid("step", &step.to_string(), "only 15-minute steps are supported", step_line));
    }
    let on_grid = |key: &str| -> Result<u32, ParseError> {
        let v: u32 = top.get(&top_id, key)?;
        let (_, line) = top.raw(&top_id, key)?;
        if !v.is_multiple_of(step) {
            return Err(ParseError::GridMisalignment { value: v, step, line });
        }
        Ok(v)
    };
    let duration = on_grid("duration")?;
    let start = on_grid("start")?;
    let (fb_raw, fb_line) = top.raw(&top_id, "pcc_feedback")?;
    let pcc_feedback = match fb_raw {
        "closed" => PccFeedback::Closed,
        "open" => PccFeedback::Open,
        _ => return Err(invalid("pcc_feedback", fb_raw, "expected closed or open", fb_line)),
    };
    let res_forecast_mix: f64 = top.get(&top_id, "res_forecast_mix")?;
    if !(0.0..=1.0).contains(&res_forecast_mix) {
        let (v, l) = top.raw(&top_id, "res_forecast_mix")?;
        return Err(invalid("res_forecast_mix", v, "must lie in [0, 1]", l));
    }
    let res_trace = top.raw(&top_id, "res_trace")?.0.to_string();

    let mg_id = SectionId::Microgrid;
    let mg = &sections[&mg_id];
    let microgrid = MicrogridParams {
        eta_c: mg.get(&mg_id, "eta_c")?,
        eta_d: mg.get(&mg_id, "eta_d")?,
        pen: mg.get(&mg_id, "pen")?,
        pg_min: mg.get(&mg_id, "pg_min")?,
        pg_max: mg.get(&mg_id, "pg_max")?,
        pb_min: mg.get(&mg_id, "pb_min")?,
        pb_max: mg.get(&mg_id, "pb_max")?,
        e_min: mg.get(&mg_id, "e_min")?,
        e_max: mg.get(&mg_id, "e_max")?,
        w_c: mg.get(&mg_id, "w_c")?,
        w_r: mg.get(&mg_id, "w_r")?,
        w_p: mg.get(&mg_id, "w_p")?,
        w_co: mg.get(&mg_id, "w_co")?,
        w_ro: mg.get(&mg_id, "w_ro")?,
        n_m: mg.get(&mg_id, "n_m")?,
        n_mpo: mg.get(&mg_id, "n_mpo")?,
    };
    let plant = PlantParams {
        capacity: mg.get(&mg_id, "capacity")?,
        eta_c: mg.get(&mg_id, "plant_eta_c")?,
        eta_d: mg.get(&mg_id, "plant_eta_d")?,
        noise_fraction: top.get(&top_id, "noise_fraction")?,
    };

    let cs_id = SectionId::Consensus;
    let cs = &sections[&cs_id];
    let list = |key: &str| -> Result<Vec<f64>, ParseError> {
        match cs.optional(key) {
            Some((v, l)) => parse_list(key, v, l),
            None => Ok(Vec::new()),
        }
    };
    let consensus = ConsensusConfig {
        alpha: cs.get(&cs_id, "alpha")?,
        max_iters: cs.get(&cs_id, "max_iters")?,
        eps_fraction: cs.get(&cs_id, "eps_fraction")?,
        eps_floor: cs.get(&cs_id, "eps_floor")?,
        q_weights: list("q_weights")?,
        q_star: list("q_star")?,
        unit_w: cs.get(&cs_id, "unit_w")?,
    };

    let tf_id = SectionId::Tariffs;
    let tf = &sections[&tf_id];
    let mut tariffs = Vec::with_capacity(24);
    for hour in 0..24 {
        let key = hour.to_string();
        let (v, line) = tf.raw(&tf_id, &key)?;
        let pair = parse_list(&key, v, line)?;
        if pair.len() != 2 {
            return Err(invalid(&key, v, "expected `buy, sell`", line));
        }
        let (buy, sell) = (pair[0], pair[1]);
        if !(buy > sell) {
            return Err(ParseError::TariffOrderViolation { hour, buy, sell, line });
        }
        tariffs.push(Tariff { buy, sell });
    }

    let mut buildings = Vec::new();
    for (id, sec) in sections.iter().filter(|(id, _)| matches!(id, SectionId::Building(_))) {
        let (model_raw, model_line) = sec.raw(id, "model")?;
        let model = ModelId::from_name(model_raw).ok_or_else(|| invalid("model", model_raw, "expected G1, G2 or G3", model_line))?;
        let (class_raw, class_line) = sec.raw(id, "class")?;
        let class = WeightClass::from_name(class_raw)
            .ok_or_else(|| invalid("class", class_raw, "expected benefit3, benefit6, comfort48 or comfort96", class_line))?;
        let t_init = match sec.optional("t_init") {
            Some((v, l)) => Some(parse_value("t_init", v, l)?),
            None => None,
        };
        let margin = match sec.optional("margin") {
            Some((v, l)) => Some(parse_value("margin", v, l)?),
            None => None,
        };
        buildings.push(BuildingSpec {
            model,
            class,
            t_set: sec.get(id, "t_set")?,
            t_init,
            margin,
        });
    }
    if buildings.is_empty() {
        return Err(ParseError::Syntax {
            line: text.lines().count(),
            msg: "at least one [building.<n>] section is required".into(),
        });
    }

    let config = ScenarioConfig {
        mode,
        duration,
        step,
        start,
        buildings,
        soc_ini: top.get(&top_id, "soc_ini")?,
        microgrid,
        plant,
        consensus,
        incentive: top.get(&top_id, "incentive")?,
        tariffs,
        res: Vec::new(),
        res_forecast_mix,
        pcc_feedback,
        seed: top.get(&top_id, "seed")?,
        load_scale: top.get(&top_id, "load_scale")?,
    };
    Ok(ScenarioSpec { config, res_trace })
}

fn join(v: &[f64]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(", ")
}

/// Writes `spec` in the scenario file format.
pub fn serialize_scenario(spec: &ScenarioSpec) -> String {
    let c = &spec.config;
    let mut s = String::new();
    let _ = writeln!(s, "mode = {}", c.mode.name());
    let _ = writeln!(s, "duration = {}", c.duration);
    let _ = writeln!(s, "step = {}", c.step);
    let _ = writeln!(s, "start = {}", c.start);
    let _ = writeln!(s, "soc_ini = {}", c.soc_ini);
    let _ = writeln!(s, "incentive = {}", c.incentive);
    let _ = writeln!(s, "res_trace = {}", spec.res_trace);
    let _ = writeln!(s, "res_forecast_mix = {}", c.res_forecast_mix);
    let fb = match c.pcc_feedback {
        PccFeedback::Closed => "closed",
        PccFeedback::Open => "open",
    };
    let _ = writeln!(s, "pcc_feedback = {fb}");
    let _ = writeln!(s, "seed = {}", c.seed);
    let _ = writeln!(s, "load_scale = {}", c.load_scale);
    let _ = writeln!(s, "noise_fraction = {}", c.plant.noise_fraction);

    let m = &c.microgrid;
    let _ = writeln!(s, "\n[microgrid]");
    for (k, v) in [
        ("eta_c", m.eta_c),
        ("eta_d", m.eta_d),
        ("pen", m.pen),
        ("pg_min", m.pg_min),
        ("pg_max", m.pg_max),
        ("pb_min", m.pb_min),
        ("pb_max", m.pb_max),
        ("e_min", m.e_min),
        ("e_max", m.e_max),
        ("w_c", m.w_c),
        ("w_r", m.w_r),
        ("w_p", m.w_p),
        ("w_co", m.w_co),
        ("w_ro", m.w_ro),
    ] {
        let _ = writeln!(s, "{k} = {v}");
    }
    let _ = writeln!(s, "n_m = {}", m.n_m);
    let _ = writeln!(s, "n_mpo = {}", m.n_mpo);
    let _ = writeln!(s, "capacity = {}", c.plant.capacity);
    let _ = writeln!(s, "plant_eta_c = {}", c.plant.eta_c);
    let _ = writeln!(s, "plant_eta_d = {}", c.plant.eta_d);

    let q = &c.consensus;
    let _ = writeln!(s, "\n[consensus]");
    let _ = writeln!(s, "alpha = {}", q.alpha);
    let _ = writeln!(s, "max_iters = {}", q.max_iters);
    let _ = writeln!(s, "eps_fraction = {}", q.eps_fraction);
    let _ = writeln!(s, "eps_floor = {}", q.eps_floor);
    let _ = writeln!(s, "unit_w = {}", q.unit_w);
    if !q.q_weights.is_empty() {
        let _ = writeln!(s, "q_weights = {}", join(&q.q_weights));
    }
    if !q.q_star.is_empty() {
        let _ = writeln!(s, "q_star = {}", join(&q.q_star));
    }

    let _ = writeln!(s, "\n[tariffs]");
    for (h, t) in c.tariffs.iter().enumerate() {
        let _ = writeln!(s, "{h} = {}, {}", t.buy, t.sell);
    }

    for (j, b) in c.buildings.iter().enumerate() {
        let _ = writeln!(s, "\n[building.{}]", j + 1);
        let _ = writeln!(s, "model = {}", b.model.name());
        let _ = writeln!(s, "class = {}", b.class.name());
        let _ = writeln!(s, "t_set = {}", b.t_set);
        if let Some(t) = b.t_init {
            let _ = writeln!(s, "t_init = {t}");
        }
        if let Some(mg) = b.margin {
            let _ = writeln!(s, "margin = {mg}");
        }
    }
    s
}

pub fn parse_scenario(path: &Path) -> Result<ScenarioSpec, ParseError> {
    let text = std::fs::read_to_string(path)?;
    parse_scenario_str(&text)
}

/// Parses a scenario file and loads its RES trace, resolved against the
/// file's directory.
pub fn load_scenario(path: &Path) -> Result<LoadedScenario, ParseError> {
    let spec = parse_scenario(path)?;
    let base = path.parent().unwrap_or(Path::new("."));
    let res_path = base.join(&spec.res_trace);
    let res = read_res_trace(&res_path)?;
    let mut config = spec.config.clone();
    config.res = res.values.clone();
    config.validate()?;
    Ok(LoadedScenario {
        spec,
        config,
        res,
        res_path,
    })
}
