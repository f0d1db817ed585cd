//! Networks, DG fleets and multi-period scenarios, the plain-text dataset
//! format, and the bundled study systems.

use std::collections::{HashSet, VecDeque};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::powerflow;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("line {line}: field `{field}`: {message}")]
    Parse {
        line: usize,
        field: String,
        message: String,
    },
    #[error("invalid scenario: {0}")]
    Invalid(String),
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("period {period}: demand reconstruction failed: {message}")]
    Reconstruction { period: usize, message: String },
    #[error("unknown bundled scenario `{0}` (expected 3bus, 34bus-case1..case4, ow1)")]
    UnknownBundled(String),
}

#[derive(Clone, Debug, PartialEq)]
pub struct Bus {
    pub id: String,
    pub v_min: f64,
    pub v_max: f64,
    /// Fixed voltage magnitude, for sensitivity studies.
    pub pinned: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Line {
    pub from: String,
    pub to: String,
    /// Impedance magnitude in p.u. before `Network::impedance_scale`.
    pub z: f64,
    pub p_max: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Substation {
    pub bus: String,
    pub p_min: f64,
    pub p_max: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DgUnit {
    pub id: String,
    pub bus: String,
    /// MW
    pub p_min: f64,
    /// MW
    pub p_max: f64,
    /// €/MWh
    pub cost: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Period {
    pub index: usize,
    pub hours: f64,
    /// β(t), €/MWh
    pub market_price: f64,
    /// Per-bus demand in p.u., in network bus order.
    pub demand: Vec<f64>,
}

impl Period {
    pub fn total_demand(&self) -> f64 {
        self.demand.iter().sum()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Network {
    pub buses: Vec<Bus>,
    pub lines: Vec<Line>,
    pub substation: Substation,
    pub base_mva: f64,
    /// Multiplies every line impedance.
    pub impedance_scale: f64,
}

impl Network {
    pub fn bus_index(&self, id: &str) -> Option<usize> {
        self.buses.iter().position(|b| b.id == id)
    }

    pub fn substation_index(&self) -> usize {
        self.bus_index(&self.substation.bus)
            .expect("validated network has its substation bus")
    }

    /// Effective impedance of line `l` (p.u.).
    pub fn line_z(&self, l: usize) -> f64 {
        self.lines[l].z * self.impedance_scale
    }

    /// `(from, to)` bus indices of line `l`.
    pub fn line_ends(&self, l: usize) -> (usize, usize) {
        let line = &self.lines[l];
        (
            self.bus_index(&line.from).expect("validated line endpoint"),
            self.bus_index(&line.to).expect("validated line endpoint"),
        )
    }

    pub fn n_buses(&self) -> usize {
        self.buses.len()
    }

    /// Mean of `1/z` over the lines; a typical voltage sensitivity.
    pub fn mean_admittance(&self) -> f64 {
        if self.lines.is_empty() {
            return 1.0;
        }
        (0..self.lines.len()).map(|l| 1.0 / self.line_z(l)).sum::<f64>() / self.lines.len() as f64
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |m: String| Err(ModelError::Invalid(m));
        if self.buses.is_empty() {
            return bad("network has no buses".into());
        }
        if !(self.base_mva > 0.0 && self.base_mva.is_finite()) {
            return bad(format!("base_mva must be positive, got {}", self.base_mva));
        }
        if !(self.impedance_scale > 0.0 && self.impedance_scale.is_finite()) {
            return bad(format!(
                "impedance_scale must be positive, got {}",
                self.impedance_scale
            ));
        }
        let mut ids = HashSet::new();
        for b in &self.buses {
            if !ids.insert(b.id.as_str()) {
                return bad(format!("duplicate bus id {}", b.id));
            }
            if !(0.0 < b.v_min && b.v_min < b.v_max && b.v_max.is_finite()) {
                return bad(format!(
                    "bus {}: need 0 < v_min < v_max, got {} and {}",
                    b.id, b.v_min, b.v_max
                ));
            }
            if let Some(p) = b.pinned {
                if !(b.v_min <= p && p <= b.v_max) {
                    return bad(format!("bus {}: pinned voltage {p} outside limits", b.id));
                }
            }
        }
        let mut pairs = HashSet::new();
        for (i, l) in self.lines.iter().enumerate() {
            for end in [&l.from, &l.to] {
                if !ids.contains(end.as_str()) {
                    return bad(format!("line {}: unknown bus {end}", i + 1));
                }
            }
            if l.from == l.to {
                return bad(format!("line {}: from and to are both {}", i + 1, l.from));
            }
            if !(l.z > 0.0 && l.z.is_finite()) {
                return bad(format!("line {}-{}: z must be positive, got {}", l.from, l.to, l.z));
            }
            if !(l.p_max > 0.0) {
                return bad(format!(
                    "line {}-{}: p_max must be positive, got {}",
                    l.from, l.to, l.p_max
                ));
            }
            let key = if l.from < l.to {
                (l.from.as_str(), l.to.as_str())
            } else {
                (l.to.as_str(), l.from.as_str())
            };
            if !pairs.insert(key) {
                return bad(format!("duplicate line {}-{}", l.from, l.to));
            }
        }
        if !ids.contains(self.substation.bus.as_str()) {
            return bad(format!("substation bus {} does not exist", self.substation.bus));
        }
        let s = &self.substation;
        if !(0.0 <= s.p_min && s.p_min <= s.p_max) {
            return bad(format!(
                "substation: need 0 <= p_min <= p_max, got {} and {}",
                s.p_min, s.p_max
            ));
        }
        // connectivity
        let n = self.buses.len();
        let mut adj = vec![Vec::new(); n];
        for l in 0..self.lines.len() {
            let (a, b) = self.line_ends(l);
            adj[a].push(b);
            adj[b].push(a);
        }
        let mut seen = vec![false; n];
        let mut queue = VecDeque::from([0usize]);
        seen[0] = true;
        while let Some(k) = queue.pop_front() {
            for &m in &adj[k] {
                if !seen[m] {
                    seen[m] = true;
                    queue.push_back(m);
                }
            }
        }
        if let Some(k) = seen.iter().position(|s| !s) {
            return bad(format!("network is not connected (bus {} unreachable)", self.buses[k].id));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Scenario {
    pub label: String,
    pub network: Network,
    pub dgs: Vec<DgUnit>,
    pub periods: Vec<Period>,
}

impl Scenario {
    pub fn validate(&self) -> Result<(), ModelError> {
        self.network.validate()?;
        let bad = |m: String| Err(ModelError::Invalid(m));
        let mut ids = HashSet::new();
        for d in &self.dgs {
            if !ids.insert(d.id.as_str()) {
                return bad(format!("duplicate DG id {}", d.id));
            }
            if self.network.bus_index(&d.bus).is_none() {
                return bad(format!("DG {}: bus {} does not exist", d.id, d.bus));
            }
            if !(0.0 <= d.p_min && d.p_min <= d.p_max && d.p_max.is_finite()) {
                return bad(format!(
                    "DG {}: need 0 <= p_min <= p_max, got {} and {}",
                    d.id, d.p_min, d.p_max
                ));
            }
            if !(d.cost >= 0.0 && d.cost.is_finite()) {
                return bad(format!("DG {}: cost must be nonnegative, got {}", d.id, d.cost));
            }
        }
        if self.periods.is_empty() {
            return bad("scenario has no periods".into());
        }
        let n = self.network.n_buses();
        for (t, p) in self.periods.iter().enumerate() {
            if !(p.hours > 0.0 && p.hours.is_finite()) {
                return bad(format!("period {}: hours must be positive", t + 1));
            }
            if !(p.market_price >= 0.0 && p.market_price.is_finite()) {
                return bad(format!("period {}: market price must be nonnegative", t + 1));
            }
            if p.demand.len() != n {
                return bad(format!(
                    "period {}: {} demand values for {} buses",
                    t + 1,
                    p.demand.len(),
                    n
                ));
            }
            if let Some(k) = p.demand.iter().position(|d| !(*d >= 0.0 && d.is_finite())) {
                return bad(format!(
                    "period {}: demand at bus {} must be nonnegative",
                    t + 1,
                    self.network.buses[k].id
                ));
            }
        }
        Ok(())
    }

    pub fn total_hours(&self) -> f64 {
        self.periods.iter().map(|p| p.hours).sum()
    }

    /// Bus index of every DG, in fleet order.
    pub fn dg_buses(&self) -> Vec<usize> {
        self.dgs
            .iter()
            .map(|d| self.network.bus_index(&d.bus).expect("validated DG bus"))
            .collect()
    }

    /// The same scenario without DG units.
    pub fn without_dgs(&self) -> Scenario {
        Scenario {
            dgs: Vec::new(),
            ..self.clone()
        }
    }
}

/// Reads and validates a dataset file.
pub fn load_scenario(path: &Path) -> Result<Scenario, ModelError> {
    let text = std::fs::read_to_string(path).map_err(|source| ModelError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_scenario(&text)
}

#[derive(Clone, Copy, PartialEq)]
enum Section {
    None,
    Network,
    Substation,
    Bus,
    Line,
    Dg,
    Period,
}

/// Parses dataset text; see the crate README for the format.
pub fn parse_scenario(text: &str) -> Result<Scenario, ModelError> {
    let mut section = Section::None;
    let mut label = String::new();
    let mut base_mva = None;
    let mut impedance_scale = 1.0;
    let mut sub_bus = None;
    let mut sub_min = None;
    let mut sub_max = None;
    let mut buses = Vec::new();
    let mut lines = Vec::new();
    let mut dgs = Vec::new();
    let mut period_rows: Vec<(usize, Vec<f64>)> = Vec::new();

    for (ln0, raw) in text.lines().enumerate() {
        let ln = ln0 + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let perr = |field: &str, message: String| ModelError::Parse {
            line: ln,
            field: field.to_string(),
            message,
        };
        if line.starts_with('[') {
            section = match line {
                "[network]" => Section::Network,
                "[substation]" => Section::Substation,
                "[bus]" => Section::Bus,
                "[line]" => Section::Line,
                "[dg]" => Section::Dg,
                "[period]" => Section::Period,
                other => return Err(perr("section", format!("unknown section {other}"))),
            };
            continue;
        }
        let num = |field: &str, s: &str| -> Result<f64, ModelError> {
            let v: f64 = s
                .parse()
                .map_err(|_| perr(field, format!("`{s}` is not a number")))?;
            if v.is_finite() {
                Ok(v)
            } else {
                Err(perr(field, format!("`{s}` is not finite")))
            }
        };
        match section {
            Section::None => return Err(perr("section", "data before the first section".into())),
            Section::Network | Section::Substation => {
                let (key, value) = line
                    .split_once('=')
                    .ok_or_else(|| perr("key", "expected `key = value`".into()))?;
                let (key, value) = (key.trim(), value.trim());
                match (section, key) {
                    (Section::Network, "label") => label = value.to_string(),
                    (Section::Network, "base_mva") => base_mva = Some(num(key, value)?),
                    (Section::Network, "impedance_scale") => impedance_scale = num(key, value)?,
                    (Section::Substation, "bus") => sub_bus = Some(value.to_string()),
                    (Section::Substation, "p_min") => sub_min = Some(num(key, value)?),
                    (Section::Substation, "p_max") => sub_max = Some(num(key, value)?),
                    _ => return Err(perr(key, "unknown key".into())),
                }
            }
            Section::Bus => {
                let f: Vec<&str> = line.split_whitespace().collect();
                if f.len() != 3 && f.len() != 4 {
                    return Err(perr("bus", format!("expected 3 or 4 fields, got {}", f.len())));
                }
                buses.push(Bus {
                    id: f[0].to_string(),
                    v_min: num("v_min", f[1])?,
                    v_max: num("v_max", f[2])?,
                    pinned: f.get(3).map(|s| num("pinned", s)).transpose()?,
                });
            }
            Section::Line => {
                let f: Vec<&str> = line.split_whitespace().collect();
                if f.len() != 4 {
                    return Err(perr("line", format!("expected 4 fields, got {}", f.len())));
                }
                lines.push(Line {
                    from: f[0].to_string(),
                    to: f[1].to_string(),
                    z: num("z_pu", f[2])?,
                    p_max: num("p_max_pu", f[3])?,
                });
            }
            Section::Dg => {
                let f: Vec<&str> = line.split_whitespace().collect();
                if f.len() != 5 {
                    return Err(perr("dg", format!("expected 5 fields, got {}", f.len())));
                }
                dgs.push(DgUnit {
                    id: f[0].to_string(),
                    bus: f[1].to_string(),
                    p_min: num("p_min_mw", f[2])?,
                    p_max: num("p_max_mw", f[3])?,
                    cost: num("cost_eur_mwh", f[4])?,
                });
            }
            Section::Period => {
                let f: Vec<&str> = line.split_whitespace().collect();
                if f.len() < 3 {
                    return Err(perr("period", "expected hours, price and demand".into()));
                }
                let mut row = vec![num("hours", f[0])?, num("price_eur_mwh", f[1])?];
                for (k, s) in f[2..].iter().enumerate() {
                    row.push(num(&format!("demand_pu[{}]", k + 1), s)?);
                }
                period_rows.push((ln, row));
            }
        }
    }
    let missing = |field: &str| ModelError::Parse {
        line: 0,
        field: field.to_string(),
        message: "missing".into(),
    };
    let network = Network {
        buses,
        lines,
        substation: Substation {
            bus: sub_bus.ok_or_else(|| missing("substation.bus"))?,
            p_min: sub_min.ok_or_else(|| missing("substation.p_min"))?,
            p_max: sub_max.ok_or_else(|| missing("substation.p_max"))?,
        },
        base_mva: base_mva.ok_or_else(|| missing("network.base_mva"))?,
        impedance_scale,
    };
    let n = network.buses.len();
    let mut periods = Vec::new();
    for (t, (ln, row)) in period_rows.into_iter().enumerate() {
        if row.len() - 2 != n {
            return Err(ModelError::Parse {
                line: ln,
                field: "demand_pu".into(),
                message: format!("{} demand values for {} buses", row.len() - 2, n),
            });
        }
        periods.push(Period {
            index: t,
            hours: row[0],
            market_price: row[1],
            demand: row[2..].to_vec(),
        });
    }
    let scenario = Scenario {
        label,
        network,
        dgs,
        periods,
    };
    scenario.validate()?;
    Ok(scenario)
}

/// Writes a scenario in the dataset format. Numbers use the shortest
/// round-trip representation, so parsing the output gives back an equal
/// scenario.
pub fn serialize_scenario(s: &Scenario) -> String {
    let mut out = String::new();
    let net = &s.network;
    let _ = writeln!(out, "[network]");
    let _ = writeln!(out, "label = {}", s.label);
    let _ = writeln!(out, "base_mva = {:?}", net.base_mva);
    let _ = writeln!(out, "impedance_scale = {:?}", net.impedance_scale);
    let _ = writeln!(out, "\n[substation]");
    let _ = writeln!(out, "bus = {}", net.substation.bus);
    let _ = writeln!(out, "p_min = {:?}", net.substation.p_min);
    let _ = writeln!(out, "p_max = {:?}", net.substation.p_max);
    let _ = writeln!(out, "\n[bus]\n# id v_min v_max [pinned]");
    for b in &net.buses {
        let _ = write!(out, "{} {:?} {:?}", b.id, b.v_min, b.v_max);
        if let Some(p) = b.pinned {
            let _ = write!(out, " {p:?}");
        }
        out.push('\n');
    }
    let _ = writeln!(out, "\n[line]\n# from to z_pu p_max_pu");
    for l in &net.lines {
        let _ = writeln!(out, "{} {} {:?} {:?}", l.from, l.to, l.z, l.p_max);
    }
    let _ = writeln!(out, "\n[dg]\n# id bus p_min_mw p_max_mw cost_eur_mwh");
    for d in &s.dgs {
        let _ = writeln!(
            out,
            "{} {} {:?} {:?} {:?}",
            d.id, d.bus, d.p_min, d.p_max, d.cost
        );
    }
    let _ = writeln!(out, "\n[period]\n# hours price_eur_mwh demand_pu per bus");
    for p in &s.periods {
        let _ = write!(out, "{:?} {:?}", p.hours, p.market_price);
        for d in &p.demand {
            let _ = write!(out, " {d:?}");
        }
        out.push('\n');
    }
    out
}

const DATA_3BUS: &str = include_str!("../data/3bus.txt");
const DATA_34BUS: &str = include_str!("../data/34bus.txt");

/// Impedance scale that makes the no-DG loss of the 3-bus system equal the
/// 0.057 MW reported for it. See `calibrate_impedance_scale`.
pub const THREE_BUS_IMPEDANCE_SCALE: f64 = 0.025060552525801343;

/// The 3-bus test system with DG1 at bus 2 and DG2 at bus 3.
pub fn build_3bus() -> Scenario {
    let bus = |id: &str| Bus {
        id: id.into(),
        v_min: 0.9,
        v_max: 1.05,
        pinned: None,
    };
    let line = |a: &str, b: &str, z: f64| Line {
        from: a.into(),
        to: b.into(),
        z,
        p_max: 1.0,
    };
    let dg = |id: &str, bus: &str| DgUnit {
        id: id.into(),
        bus: bus.into(),
        p_min: 0.0,
        p_max: 1.0,
        cost: 60.0,
    };
    Scenario {
        label: "3-bus test system".into(),
        network: Network {
            buses: vec![bus("1"), bus("2"), bus("3")],
            lines: vec![line("1", "2", 1.236), line("2", "3", 1.144)],
            substation: Substation {
                bus: "1".into(),
                p_min: 0.0,
                p_max: 4.0,
            },
            base_mva: 10.0,
            impedance_scale: THREE_BUS_IMPEDANCE_SCALE,
        },
        dgs: vec![dg("DG1", "2"), dg("DG2", "3")],
        periods: vec![Period {
            index: 0,
            hours: 8760.0,
            market_price: 60.0,
            demand: vec![0.2, 0.2, 0.2],
        }],
    }
}

/// The bundled 34-bus network with its five reconstructed load periods and
/// no DG units.
pub fn base_34bus() -> Scenario {
    parse_scenario(DATA_34BUS).expect("bundled 34-bus data is valid")
}

fn dg60(id: &str, bus: &str) -> DgUnit {
    DgUnit {
        id: id.into(),
        bus: bus.into(),
        p_min: 0.0,
        p_max: 1.0,
        cost: 60.0,
    }
}

/// Bundled scenarios by name: `3bus`, `34bus` (no DG), `34bus-case1` ..
/// `34bus-case4`, `ow1` (the case-1 fleet, meant for the single-owner mode).
pub fn bundled(name: &str) -> Result<Scenario, ModelError> {
    let name = name.to_ascii_lowercase();
    if name == "3bus" {
        let s = parse_scenario(DATA_3BUS).expect("bundled 3-bus data is valid");
        return Ok(s);
    }
    let mut s = base_34bus();
    let case1 = vec![dg60("DG1", "17"), dg60("DG2", "24")];
    match name.as_str() {
        "34bus" => {}
        "34bus-case1" | "ow1" => s.dgs = case1,
        "34bus-case2" => {
            s.dgs = case1;
            s.dgs[0].cost = 70.0;
        }
        "34bus-case3" => {
            s.dgs = case1;
            s.dgs.push(dg60("DG3", "11"));
        }
        "34bus-case4" => {
            s.dgs = case1;
            s.dgs.push(dg60("DG3", "11"));
            s.dgs.push(dg60("DG4", "33"));
        }
        _ => return Err(ModelError::UnknownBundled(name)),
    }
    s.label = format!("{} ({})", s.label, name);
    Ok(s)
}

pub const BUNDLED_NAMES: [&str; 7] = [
    "3bus",
    "34bus",
    "34bus-case1",
    "34bus-case2",
    "34bus-case3",
    "34bus-case4",
    "ow1",
];

/// Loss (p.u.) of the no-DG network at a demand vector, with the
/// substation voltage at its upper limit. This is the minimum-loss
/// operating point when voltages are otherwise free.
pub fn no_dg_loss(network: &Network, demand: &[f64]) -> Result<f64, powerflow::PowerFlowError> {
    let sub = network.substation_index();
    let v_sub = network.buses[sub].pinned.unwrap_or(network.buses[sub].v_max);
    let inj: Vec<f64> = demand.iter().map(|d| -d).collect();
    Ok(powerflow::load_flow(network, v_sub, &inj)?.loss)
}

/// Impedance scale making the no-DG loss at `demand` equal `target_loss`
/// (p.u.), by bisection on a logarithmic bracket.
pub fn calibrate_impedance_scale(
    network: &Network,
    demand: &[f64],
    target_loss: f64,
) -> Result<f64, ModelError> {
    let loss_at = |scale: f64| {
        let mut n = network.clone();
        n.impedance_scale = scale;
        no_dg_loss(&n, demand).ok()
    };
    // bracket outward from the nominal data: `lo` serves the load below the
    // target loss, `hi` does not
    let below = |scale: f64| matches!(loss_at(scale), Some(l) if l < target_loss);
    let (mut lo, mut hi) = (1.0, 1.0);
    if below(1.0) {
        while below(hi) {
            lo = hi;
            hi *= 2.0;
            if hi > 1e8 {
                return Err(ModelError::Invalid("target loss unreachable".into()));
            }
        }
    } else {
        while !below(lo) {
            hi = lo;
            lo *= 0.5;
            if lo < 1e-8 {
                return Err(ModelError::Invalid("target loss unreachable".into()));
            }
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        match loss_at(mid) {
            Some(l) if l < target_loss => lo = mid,
            _ => hi = mid,
        }
        if hi - lo <= 1e-16 * hi {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Per-period demand levels (MW) reproducing the given market payments.
///
/// For each period the supply `payments[t] / (prices[t] * hours[t])` MW is
/// split into demand plus model loss; the demand is a uniform multiple of
/// `pattern` (p.u. per bus) found by bisection. Returns total demand in MW.
pub fn reconstruct_demand_levels(
    payments: &[f64],
    prices: &[f64],
    network: &Network,
    hours: &[f64],
    pattern: &[f64],
) -> Result<Vec<f64>, ModelError> {
    if payments.len() != prices.len() || payments.len() != hours.len() {
        return Err(ModelError::Invalid(
            "payments, prices and hours must have the same length".into(),
        ));
    }
    let weight: f64 = pattern.iter().sum();
    if !(weight > 0.0) || pattern.len() != network.n_buses() {
        return Err(ModelError::Invalid("pattern must cover every bus and be nonzero".into()));
    }
    let base = network.base_mva;
    let mut out = Vec::with_capacity(payments.len());
    for t in 0..payments.len() {
        let fail = |m: &str| ModelError::Reconstruction {
            period: t + 1,
            message: m.to_string(),
        };
        if payments[t] == 0.0 {
            out.push(0.0);
            continue;
        }
        if !(prices[t] > 0.0 && hours[t] > 0.0 && payments[t] > 0.0) {
            return Err(fail("payment, price and hours must be positive"));
        }
        let supply = payments[t] / (prices[t] * hours[t]) / base; // p.u.
        if supply > network.substation.p_max {
            return Err(fail("supply exceeds the substation limit"));
        }
        let supplied = |scale: f64| -> Option<f64> {
            let d: Vec<f64> = pattern.iter().map(|p| p * scale).collect();
            no_dg_loss(network, &d).ok().map(|l| weight * scale + l)
        };
        let (mut lo, mut hi) = (0.0, supply / weight);
        match supplied(hi) {
            Some(v) if v >= supply => {}
            _ => {
                // shrink until the load flow solves
                let mut h = hi;
                while supplied(h).is_none() {
                    h *= 0.9;
                    if h < 1e-12 {
                        return Err(fail("no load-flow solution"));
                    }
                }
                if supplied(h).unwrap() < supply {
                    return Err(fail("required supply is not deliverable"));
                }
                hi = h;
            }
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            match supplied(mid) {
                Some(v) if v < supply => lo = mid,
                Some(_) => hi = mid,
                None => hi = mid,
            }
            if hi - lo <= 1e-15 * hi {
                break;
            }
        }
        out.push(0.5 * (lo + hi) * weight * base);
    }
    Ok(out)
}
