//! Scenario files, synthetic inputs, bundled cases and the experiment
//! drivers behind the command-line tool.
//!
//! A scenario is a TOML document (current `schema_version = 1`):
//!
//! ```toml
//! schema_version = 1
//! name = "CIGRE LV, one month"
//! grid = "bundled:cigre_lv"        # or a path relative to this file
//! v_slack = 1.0                    # pu
//! seed = 42                        # drives synthetic series
//!
//! [horizon]
//! steps = 744
//! hours = 1.0
//! start = "2015-06-01T00:00:00"    # timestamp of period 0
//!
//! [limits]
//! v_min = 0.9                      # pu, every bus
//! v_max = 1.1
//! current_scale = 1.0              # multiplies the grid's ampacities
//!
//! [load]                           # per non-slack bus
//! source = "synthetic"             # synthetic | constant | file
//! # constant: p_kw = 5.0, q_kvar = 1.0
//! # file: p_path = "load_p.csv", q_path = "load_q.csv"
//!
//! [pv]                             # availability, share of installed power
//! source = "synthetic"             # synthetic | constant (value) | file (path)
//!
//! [price]                          # currency per kWh
//! source = "synthetic"             # synthetic | constant (value) | file (path)
//!
//! [[generator]]
//! label = "feeder"
//! bus = "R0"
//! p_min_kw = -1000.0
//! p_max_kw = 1000.0
//! q_min_kvar = -1000.0
//! q_max_kvar = 1000.0
//! cost = 0.03                      # currency per kWh when not priced
//! profile = "price"                # none | price | pv
//!
//! [[storage]]
//! label = "bat-R0"
//! bus = "R0"
//! rating_kva = 180.0
//! eta_ch = 0.88
//! eta_dis = 0.88
//! e0_kwh = 0.0
//! e_min_kwh = 0.0
//! e_max_kwh = 500.0                # omit to size the capacity
//! cost = 100.0                     # currency per kWh over the calendar life
//! calendar_life_years = 10.0
//! ```
//!
//! Series files are comma-separated with a header. The first column,
//! `timestamp`, holds ISO 8601 local times (`2015-06-01T00:00:00`), one row
//! per period. Load and PV files have one column per bus, named by bus
//! label; buses without a column get zero. The price file has a single
//! `price` column. Loads are in kW/kvar, PV as a share of installed power
//! in [0, 1].
//!
//! All user-facing quantities are SI plus currency; [`Scenario::to_case`]
//! converts to per-unit.

mod study;
mod synth;

use std::path::{Path, PathBuf};

use chrono::{Duration, NaiveDateTime};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub use study::{
    benchmark_runtime, loglog_slope, run_convergence_study, run_viability_study, write_manifest, ConvergenceReport,
    ConvergenceRow, Manifest, RuntimeReport, RuntimeRow, ViabilityReport, ViabilityRow,
};
pub use synth::{synth_profiles, Profiles};

use crate::error::{Error, Result};
use crate::grid::{parse_grid, RadialNetwork, BUNDLED_CIGRE_LV};
use crate::opf::{Demand, GeneratorSpec, OpfCase, OperatingLimits};
use crate::storage::{GeneratorProfile, Horizon, MultiPeriodCase, StorageSpec};

pub const SCHEMA_VERSION: u32 = 1;

const TIME_FORMAT: &str = "%Y-%m-%dT%H:%M:%S";

/// Bundled scenarios, addressed as `bundled:<name>`.
pub const BUNDLED_SCENARIOS: &[(&str, &str)] = &[
    ("table1", include_str!("../../assets/scenarios/table1.toml")),
    ("cigre_month", include_str!("../../assets/scenarios/cigre_month.toml")),
];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioDocument {
    pub schema_version: u32,
    pub name: String,
    pub grid: String,
    #[serde(default = "one")]
    pub v_slack: f64,
    #[serde(default)]
    pub seed: u64,
    pub horizon: HorizonDoc,
    pub limits: LimitsDoc,
    pub load: LoadDoc,
    pub pv: SeriesDoc,
    pub price: SeriesDoc,
    #[serde(rename = "generator", default)]
    pub generators: Vec<GeneratorDoc>,
    #[serde(rename = "storage", default)]
    pub storages: Vec<StorageDoc>,
}

fn one() -> f64 {
    1.0
}

fn default_start() -> String {
    "2015-06-01T00:00:00".into()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HorizonDoc {
    pub steps: usize,
    pub hours: f64,
    #[serde(default = "default_start")]
    pub start: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LimitsDoc {
    pub v_min: f64,
    pub v_max: f64,
    #[serde(default = "one")]
    pub current_scale: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "lowercase", deny_unknown_fields)]
pub enum LoadDoc {
    Synthetic,
    Constant { p_kw: f64, q_kvar: f64 },
    File { p_path: String, q_path: String },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "lowercase", deny_unknown_fields)]
pub enum SeriesDoc {
    Synthetic,
    Constant { value: f64 },
    File { path: String },
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProfileKind {
    #[default]
    None,
    Price,
    Pv,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratorDoc {
    pub label: String,
    pub bus: String,
    pub p_min_kw: f64,
    pub p_max_kw: f64,
    pub q_min_kvar: f64,
    pub q_max_kvar: f64,
    pub cost: f64,
    #[serde(default)]
    pub profile: ProfileKind,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StorageDoc {
    pub label: String,
    pub bus: String,
    pub rating_kva: f64,
    pub eta_ch: f64,
    pub eta_dis: f64,
    #[serde(default)]
    pub e0_kwh: f64,
    #[serde(default)]
    pub e_min_kwh: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub e_max_kwh: Option<f64>,
    pub cost: f64,
    pub calendar_life_years: f64,
}

/// Resolved series, SI units, indexed `[period][bus]`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SeriesData {
    pub load_kw: Vec<Vec<f64>>,
    pub load_kvar: Vec<Vec<f64>>,
    pub pv: Vec<Vec<f64>>,
    pub price: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct Scenario {
    pub document: ScenarioDocument,
    pub net: RadialNetwork,
    /// Text of the grid document, kept so the scenario can be saved.
    pub grid_text: String,
    pub series: SeriesData,
    /// Directory relative paths in the document resolve against.
    pub source_dir: PathBuf,
}

/// Storage layouts compared by the viability study.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Configuration {
    /// One 180 kVA storage at the feeder bus.
    Centralized,
    /// One 10 kVA storage at every household bus.
    Distributed,
}

impl std::fmt::Display for Configuration {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Configuration::Centralized => "centralized",
            Configuration::Distributed => "distributed",
        })
    }
}

fn bundled(name: &str) -> Option<&'static str> {
    BUNDLED_SCENARIOS.iter().find(|(n, _)| *n == name).map(|(_, t)| *t)
}

/// Loads `path`, or a bundled scenario when `path` is `bundled:<name>`.
pub fn load_scenario(path: &str) -> Result<Scenario> {
    if let Some(name) = path.strip_prefix("bundled:") {
        let text = bundled(name).ok_or_else(|| {
            let names: Vec<&str> = BUNDLED_SCENARIOS.iter().map(|(n, _)| *n).collect();
            Error::InvalidParameter(format!("no bundled scenario `{name}`; have {}", names.join(", ")))
        })?;
        return parse_scenario(text, Path::new(path), Path::new("."));
    }
    let file = Path::new(path);
    let text = std::fs::read_to_string(file).map_err(|e| Error::io(file, e))?;
    let dir = file.parent().unwrap_or(Path::new("."));
    parse_scenario(&text, file, dir)
}

/// Parses and validates a scenario; relative paths resolve against `dir`.
/// Every problem found is reported at once.
pub fn parse_scenario(text: &str, origin: &Path, dir: &Path) -> Result<Scenario> {
    let document: ScenarioDocument = toml::from_str(text).map_err(|e| Error::parse(origin, e))?;
    resolve(document, dir)
}

fn resolve(document: ScenarioDocument, dir: &Path) -> Result<Scenario> {
    let mut problems = Vec::new();
    if document.schema_version != SCHEMA_VERSION {
        return Err(Error::Schema(vec![format!(
            "unsupported schema_version {} (this build reads {SCHEMA_VERSION})",
            document.schema_version
        )]));
    }
    let grid_text = match document.grid.strip_prefix("bundled:") {
        Some("cigre_lv") => BUNDLED_CIGRE_LV.to_string(),
        Some(other) => return Err(Error::Schema(vec![format!("unknown bundled grid `{other}`")])),
        None => {
            let p = dir.join(&document.grid);
            std::fs::read_to_string(&p).map_err(|e| Error::io(&p, e))?
        }
    };
    let net = parse_grid(&grid_text, Path::new(&document.grid))?;
    let steps = document.horizon.steps;
    if steps == 0 || !(document.horizon.hours > 0.0) {
        problems.push("horizon needs steps >= 1 and hours > 0".to_string());
    }
    let start = NaiveDateTime::parse_from_str(&document.horizon.start, TIME_FORMAT);
    if start.is_err() {
        problems.push(format!("horizon.start `{}` is not {TIME_FORMAT}", document.horizon.start));
    }
    if !(document.v_slack > 0.0) {
        problems.push("v_slack must be positive".into());
    }
    let l = &document.limits;
    if !(0.0 < l.v_min && l.v_min < l.v_max) || !(l.current_scale > 0.0) {
        problems.push("limits need 0 < v_min < v_max and current_scale > 0".into());
    }
    let bus_of = |label: &str, owner: &str, problems: &mut Vec<String>| -> usize {
        net.bus_by_label(label).unwrap_or_else(|| {
            problems.push(format!("{owner} references unknown bus `{label}`"));
            0
        })
    };
    for g in &document.generators {
        bus_of(&g.bus, &format!("generator `{}`", g.label), &mut problems);
        if !(g.p_min_kw <= g.p_max_kw && g.q_min_kvar <= g.q_max_kvar) {
            problems.push(format!("generator `{}` has inverted bounds", g.label));
        }
        if !(g.cost.is_finite() && g.cost >= 0.0) {
            problems.push(format!("generator `{}` needs a finite non-negative cost", g.label));
        }
    }
    for s in &document.storages {
        bus_of(&s.bus, &format!("storage `{}`", s.label), &mut problems);
        if !(s.rating_kva > 0.0) {
            problems.push(format!("storage `{}` needs a positive rating", s.label));
        }
        for eta in [s.eta_ch, s.eta_dis] {
            if !(eta > 0.0 && eta <= 1.0) {
                problems.push(format!("storage `{}` efficiency {eta} outside (0, 1]", s.label));
            }
        }
        if let Some(e_max) = s.e_max_kwh {
            if !(s.e_min_kwh <= s.e0_kwh && s.e0_kwh <= e_max) {
                problems.push(format!("storage `{}` needs e_min <= e0 <= e_max", s.label));
            }
        }
        if !(s.cost >= 0.0 && s.calendar_life_years > 0.0) {
            problems.push(format!("storage `{}` needs cost >= 0 and a positive calendar life", s.label));
        }
    }
    let mut labels: Vec<&str> = document
        .generators
        .iter()
        .map(|g| g.label.as_str())
        .chain(document.storages.iter().map(|s| s.label.as_str()))
        .collect();
    labels.sort_unstable();
    for w in labels.windows(2) {
        if w[0] == w[1] {
            problems.push(format!("label `{}` used twice", w[0]));
        }
    }

    let series = if steps > 0 && problems.is_empty() {
        load_series(&document, &net, dir, &mut problems)
    } else {
        None
    };
    match series {
        Some(series) if problems.is_empty() => Ok(Scenario {
            document,
            net,
            grid_text,
            series,
            source_dir: dir.to_path_buf(),
        }),
        _ => Err(Error::Schema(problems)),
    }
}

struct Table {
    columns: Vec<String>,
    rows: Vec<Vec<f64>>,
}

fn read_table(path: &Path, what: &str, problems: &mut Vec<String>) -> Option<Table> {
    let mut reader = match csv::Reader::from_path(path) {
        Ok(r) => r,
        Err(e) => {
            problems.push(format!("{what} series {}: {e}", path.display()));
            return None;
        }
    };
    let headers = reader.headers().ok()?.clone();
    if headers.get(0) != Some("timestamp") {
        problems.push(format!("{what} series {}: first column must be `timestamp`", path.display()));
        return None;
    }
    let columns: Vec<String> = headers.iter().skip(1).map(str::to_string).collect();
    let mut rows = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = match record {
            Ok(r) => r,
            Err(e) => {
                problems.push(format!("{what} series {} row {i}: {e}", path.display()));
                return None;
            }
        };
        if NaiveDateTime::parse_from_str(&record[0], TIME_FORMAT).is_err() {
            problems.push(format!("{what} series {} row {i}: bad timestamp `{}`", path.display(), &record[0]));
        }
        let values: std::result::Result<Vec<f64>, _> = record.iter().skip(1).map(str::parse::<f64>).collect();
        match values {
            Ok(v) if v.iter().all(|x| x.is_finite()) => rows.push(v),
            _ => {
                problems.push(format!("{what} series {} row {i}: non-numeric value", path.display()));
                return None;
            }
        }
    }
    Some(Table { columns, rows })
}

/// Spreads a per-bus table onto all buses; unknown columns are problems.
fn bus_table(
    table: Table,
    net: &RadialNetwork,
    steps: usize,
    what: &str,
    problems: &mut Vec<String>,
) -> Option<Vec<Vec<f64>>> {
    if table.rows.len() != steps {
        problems.push(format!(
            "{what} series has {} rows, expected {steps} (first bad index {})",
            table.rows.len(),
            table.rows.len().min(steps)
        ));
        return None;
    }
    let mut index = Vec::new();
    for c in &table.columns {
        match net.bus_by_label(c) {
            Some(b) => index.push(b),
            None => {
                problems.push(format!("{what} series references unknown bus `{c}`"));
                return None;
            }
        }
    }
    Some(
        table
            .rows
            .iter()
            .map(|row| {
                let mut out = vec![0.0; net.bus_count()];
                for (v, &b) in row.iter().zip(&index) {
                    out[b] = *v;
                }
                out
            })
            .collect(),
    )
}

fn load_series(
    doc: &ScenarioDocument,
    net: &RadialNetwork,
    dir: &Path,
    problems: &mut Vec<String>,
) -> Option<SeriesData> {
    let steps = doc.horizon.steps;
    let n = net.bus_count();
    let slack = net.slack();
    let synthetic = matches!(doc.load, LoadDoc::Synthetic)
        || matches!(doc.pv, SeriesDoc::Synthetic)
        || matches!(doc.price, SeriesDoc::Synthetic);
    let synth = if synthetic {
        let per_day = (24.0 / doc.horizon.hours).round().max(1.0) as usize;
        let days = steps.div_ceil(per_day);
        match synth_profiles(doc.seed, days, doc.horizon.hours, n - 1) {
            Ok(p) => Some(p),
            Err(e) => {
                problems.push(e.to_string());
                return None;
            }
        }
    } else {
        None
    };
    // Household h of the synthetic set sits on the h-th non-slack bus.
    let spread = |rows: &[Vec<f64>]| -> Vec<Vec<f64>> {
        rows[..steps]
            .iter()
            .map(|row| {
                let mut out = vec![0.0; n];
                for (j, v) in (0..n).filter(|&j| j != slack).zip(row) {
                    out[j] = *v;
                }
                out
            })
            .collect()
    };
    let constant = |v: f64| -> Vec<Vec<f64>> {
        let mut row = vec![v; n];
        row[slack] = 0.0;
        vec![row; steps]
    };

    let (load_kw, load_kvar) = match &doc.load {
        LoadDoc::Synthetic => {
            let s = synth.as_ref()?;
            (spread(&s.load_kw), spread(&s.load_kvar))
        }
        LoadDoc::Constant { p_kw, q_kvar } => (constant(*p_kw), constant(*q_kvar)),
        LoadDoc::File { p_path, q_path } => {
            let p = read_table(&dir.join(p_path), "load_p", problems)
                .and_then(|t| bus_table(t, net, steps, "load_p", problems));
            let q = read_table(&dir.join(q_path), "load_q", problems)
                .and_then(|t| bus_table(t, net, steps, "load_q", problems));
            (p?, q?)
        }
    };
    let pv = match &doc.pv {
        SeriesDoc::Synthetic => spread(&synth.as_ref()?.pv_availability),
        SeriesDoc::Constant { value } => constant(*value),
        SeriesDoc::File { path } => {
            read_table(&dir.join(path), "pv", problems).and_then(|t| bus_table(t, net, steps, "pv", problems))?
        }
    };
    if pv.iter().flatten().any(|a| !(0.0..=1.0).contains(a)) {
        problems.push("pv availability must lie in [0, 1]".into());
    }
    let price = match &doc.price {
        SeriesDoc::Synthetic => synth.as_ref()?.price[..steps].to_vec(),
        SeriesDoc::Constant { value } => vec![*value; steps],
        SeriesDoc::File { path } => {
            let t = read_table(&dir.join(path), "price", problems)?;
            if t.columns != ["price"] {
                problems.push("price series needs exactly one column named `price`".into());
                return None;
            }
            if t.rows.len() != steps {
                problems.push(format!(
                    "price series has {} rows, expected {steps} (first bad index {})",
                    t.rows.len(),
                    t.rows.len().min(steps)
                ));
                return None;
            }
            t.rows.into_iter().map(|r| r[0]).collect()
        }
    };
    Some(SeriesData {
        load_kw,
        load_kvar,
        pv,
        price,
    })
}

#[derive(Serialize)]
struct HashView<'a> {
    net: &'a RadialNetwork,
    v_slack: f64,
    horizon: (usize, f64, &'a str),
    limits: &'a LimitsDoc,
    generators: &'a [GeneratorDoc],
    storages: &'a [StorageDoc],
    series: &'a SeriesData,
}

impl Scenario {
    pub fn steps(&self) -> usize {
        self.document.horizon.steps
    }

    /// SHA-256 of the resolved content: grid, devices, limits and series.
    /// Independent of where the series came from, so a saved and reloaded
    /// scenario hashes the same.
    pub fn hash(&self) -> String {
        let d = &self.document;
        let view = HashView {
            net: &self.net,
            v_slack: d.v_slack,
            horizon: (d.horizon.steps, d.horizon.hours, &d.horizon.start),
            limits: &d.limits,
            generators: &d.generators,
            storages: &d.storages,
            series: &self.series,
        };
        hex::encode(Sha256::digest(serde_json::to_vec(&view).expect("scenario serializes")))
    }

    fn base_kw(&self) -> f64 {
        self.net.base.power_kw()
    }

    fn limits(&self) -> OperatingLimits {
        let mut limits = OperatingLimits::uniform(&self.net, self.document.limits.v_min, self.document.limits.v_max);
        for i in &mut limits.i_max {
            *i *= self.document.limits.current_scale;
        }
        limits
    }

    fn generators(&self) -> Vec<GeneratorSpec> {
        let kw = self.base_kw();
        self.document
            .generators
            .iter()
            .map(|g| GeneratorSpec {
                label: g.label.clone(),
                bus: self.net.bus_by_label(&g.bus).expect("validated"),
                p_min: g.p_min_kw / kw,
                p_max: g.p_max_kw / kw,
                q_min: g.q_min_kvar / kw,
                q_max: g.q_max_kvar / kw,
                cost: g.cost,
            })
            .collect()
    }

    fn demand(&self, k: usize) -> Demand {
        let kw = self.base_kw();
        Demand {
            p: self.series.load_kw[k].iter().map(|v| v / kw).collect(),
            q: self.series.load_kvar[k].iter().map(|v| v / kw).collect(),
        }
    }

    pub fn storages(&self) -> Vec<StorageSpec> {
        let kw = self.base_kw();
        self.document
            .storages
            .iter()
            .map(|s| StorageSpec {
                label: s.label.clone(),
                bus: self.net.bus_by_label(&s.bus).expect("validated"),
                p_rated: s.rating_kva / kw,
                eta_ch: s.eta_ch,
                eta_dis: s.eta_dis,
                e0: s.e0_kwh / kw,
                e_min: s.e_min_kwh / kw,
                e_max: s.e_max_kwh.map(|e| e / kw),
                cost: s.cost,
                calendar_life_years: s.calendar_life_years,
            })
            .collect()
    }

    /// Multiperiod case in per-unit.
    pub fn to_case(&self) -> Result<MultiPeriodCase> {
        let gens = self.generators();
        let profiles = self
            .document
            .generators
            .iter()
            .zip(&gens)
            .map(|(doc, spec)| match doc.profile {
                ProfileKind::None => GeneratorProfile::default(),
                ProfileKind::Price => GeneratorProfile {
                    availability: None,
                    cost: Some(self.series.price.clone()),
                },
                ProfileKind::Pv => GeneratorProfile {
                    availability: Some(self.series.pv.iter().map(|row| row[spec.bus]).collect()),
                    cost: None,
                },
            })
            .collect();
        MultiPeriodCase::new(
            self.net.clone(),
            gens,
            profiles,
            self.storages(),
            self.limits(),
            (0..self.steps()).map(|k| self.demand(k)).collect(),
            self.document.v_slack,
            Horizon::new(self.steps(), self.document.horizon.hours)?,
        )
    }

    /// Single-period case for period `k`: PV capped by its availability,
    /// priced generators charged the period's price.
    pub fn single_period(&self, k: usize) -> Result<OpfCase> {
        if k >= self.steps() {
            return Err(Error::InvalidParameter(format!("period {k} outside 0..{}", self.steps())));
        }
        let mut gens = self.generators();
        for (doc, spec) in self.document.generators.iter().zip(&mut gens) {
            match doc.profile {
                ProfileKind::None => {}
                ProfileKind::Price => spec.cost = self.series.price[k],
                ProfileKind::Pv => spec.p_max *= self.series.pv[k][spec.bus],
            }
        }
        OpfCase::new(self.net.clone(), gens, self.limits(), self.demand(k), self.document.v_slack)
    }

    /// Start of period `k`, formatted like the series files.
    pub fn timestamp(&self, k: usize) -> String {
        let h = &self.document.horizon;
        let start = NaiveDateTime::parse_from_str(&h.start, TIME_FORMAT).expect("validated on load");
        let step = Duration::milliseconds((h.hours * 3_600_000.0).round() as i64);
        (start + step * k as i32).format(TIME_FORMAT).to_string()
    }

    /// Re-resolves the scenario with another seed. Only synthetic series
    /// change.
    pub fn with_seed(&self, seed: u64) -> Result<Scenario> {
        let mut doc = self.document.clone();
        doc.seed = seed;
        resolve(doc, &self.source_dir)
    }

    /// Replaces the storage fleet with one of the compared layouts; sizes
    /// are left to the optimizer.
    pub fn with_configuration(&self, config: Configuration, cost: f64) -> Scenario {
        let slack = self.net.slack();
        let candidate = |bus: usize, rating_kva: f64| StorageDoc {
            label: format!("bat-{}", self.net.buses[bus].label),
            bus: self.net.buses[bus].label.clone(),
            rating_kva,
            eta_ch: 0.88,
            eta_dis: 0.88,
            e0_kwh: 0.0,
            e_min_kwh: 0.0,
            e_max_kwh: None,
            cost,
            calendar_life_years: 10.0,
        };
        let storages = match config {
            Configuration::Centralized => vec![candidate(slack, 180.0)],
            Configuration::Distributed => (0..self.net.bus_count())
                .filter(|&b| b != slack)
                .map(|b| candidate(b, 10.0))
                .collect(),
        };
        let mut out = self.clone();
        out.document.storages = storages;
        out
    }

    /// Writes the scenario to `dir` with every series as a file, so it
    /// reloads without re-synthesizing. Returns the scenario file path.
    pub fn save(&self, dir: &Path) -> Result<PathBuf> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut doc = self.document.clone();
        if !doc.grid.starts_with("bundled:") {
            let grid = dir.join("grid.toml");
            std::fs::write(&grid, &self.grid_text).map_err(|e| Error::io(&grid, e))?;
            doc.grid = "grid.toml".into();
        }
        let stamps: Vec<String> = (0..self.steps()).map(|k| self.timestamp(k)).collect();
        let labels: Vec<&str> = self.net.buses.iter().map(|b| b.label.as_str()).collect();
        let write = |name: &str, header: &[&str], rows: &mut dyn Iterator<Item = Vec<f64>>| -> Result<()> {
            let path = dir.join(name);
            let mut w = csv::Writer::from_path(&path).map_err(|e| Error::parse(&path, e))?;
            let mut head = vec!["timestamp"];
            head.extend_from_slice(header);
            w.write_record(&head).map_err(|e| Error::parse(&path, e))?;
            for (stamp, row) in stamps.iter().zip(rows) {
                let mut rec = vec![stamp.clone()];
                rec.extend(row.iter().map(|v| v.to_string()));
                w.write_record(&rec).map_err(|e| Error::parse(&path, e))?;
            }
            w.flush().map_err(|e| Error::io(&path, e))
        };
        write("load_p.csv", &labels, &mut self.series.load_kw.iter().cloned())?;
        write("load_q.csv", &labels, &mut self.series.load_kvar.iter().cloned())?;
        write("pv.csv", &labels, &mut self.series.pv.iter().cloned())?;
        write("price.csv", &["price"], &mut self.series.price.iter().map(|p| vec![*p]))?;
        doc.load = LoadDoc::File {
            p_path: "load_p.csv".into(),
            q_path: "load_q.csv".into(),
        };
        doc.pv = SeriesDoc::File { path: "pv.csv".into() };
        doc.price = SeriesDoc::File {
            path: "price.csv".into(),
        };
        let path = dir.join("scenario.toml");
        let text = toml::to_string_pretty(&doc).map_err(|e| Error::parse(&path, e))?;
        std::fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
        Ok(path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundled_month_has_cigre_shape() {
        let s = load_scenario("bundled:cigre_month").unwrap();
        assert_eq!(s.net.bus_count(), 19);
        assert_eq!(s.steps(), 744);
        let pv: Vec<_> = s.document.generators.iter().filter(|g| g.profile == ProfileKind::Pv).collect();
        assert_eq!(pv.len(), 18);
        assert!(pv.iter().all(|g| g.p_max_kw == 30.0));
    }

    #[test]
    fn table1_is_single_period() {
        let s = load_scenario("bundled:table1").unwrap();
        let case = s.single_period(0).unwrap();
        assert_eq!(case.generators.len(), 19);
        assert!((case.demand.p[1] - 0.05).abs() < 1e-12);
        assert_eq!(case.demand.p[0], 0.0);
    }

    #[test]
    fn seed_drives_synthetic_series_only() {
        let s = load_scenario("bundled:cigre_month").unwrap();
        assert_eq!(s.with_seed(42).unwrap().hash(), s.hash());
        assert_ne!(s.with_seed(7).unwrap().hash(), s.hash());
        let t = load_scenario("bundled:table1").unwrap();
        assert_eq!(t.with_seed(7).unwrap().hash(), t.hash());
    }

    #[test]
    fn round_trip_keeps_hash() {
        let s = load_scenario("bundled:cigre_month").unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = s.save(dir.path()).unwrap();
        let back = load_scenario(path.to_str().unwrap()).unwrap();
        assert_eq!(s.hash(), back.hash());
        assert_eq!(s.series, back.series);
    }

    fn write_variant(edit: impl Fn(&mut String)) -> (tempfile::TempDir, Result<Scenario>) {
        let s = load_scenario("bundled:cigre_month").unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = s.save(dir.path()).unwrap();
        let mut text = std::fs::read_to_string(dir.path().join("price.csv")).unwrap();
        edit(&mut text);
        std::fs::write(dir.path().join("price.csv"), text).unwrap();
        let r = load_scenario(path.to_str().unwrap());
        (dir, r)
    }

    #[test]
    fn short_series_names_the_index() {
        let (_dir, r) = write_variant(|t| {
            let cut = t.trim_end().rfind('\n').unwrap();
            t.truncate(cut + 1);
        });
        match r {
            Err(Error::Schema(problems)) => {
                assert!(problems.iter().any(|p| p.contains("743 rows") && p.contains("index 743")), "{problems:?}")
            }
            other => panic!("expected schema error, got {other:?}"),
        }
    }

    #[test]
    fn unknown_bus_is_named_and_all_problems_listed() {
        let text = bundled("table1").unwrap().replace("bus = \"R3\"", "bus = \"R99\"").replace(
            "v_min = 0.9",
            "v_min = 1.2",
        );
        match parse_scenario(&text, Path::new("t"), Path::new(".")) {
            Err(Error::Schema(problems)) => {
                assert!(problems.iter().any(|p| p.contains("R99")), "{problems:?}");
                assert!(problems.iter().any(|p| p.contains("v_min")), "{problems:?}");
            }
            other => panic!("expected schema error, got {other:?}"),
        }
    }

    #[test]
    fn wrong_schema_version_rejected() {
        let text = bundled("table1").unwrap().replace("schema_version = 1", "schema_version = 9");
        assert!(matches!(
            parse_scenario(&text, Path::new("t"), Path::new(".")),
            Err(Error::Schema(_))
        ));
    }
}
