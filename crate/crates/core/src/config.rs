//! GloMoSim-style scenario files.
//!
//! One `KEY value` pair per line; `#` starts a comment; keys are
//! case-insensitive. A line may also hold several comma-separated pairs,
//! each optionally written `KEY = value (unit)`, with a trailing period, so
//! a parameter block such as
//!
//! ```text
//! PROPAGATION-PATHLOSS = TWO-RAY, PROPAGATION-LIMIT = -111 (dBm),
//! RADIO-FREQUENCY = 2.4 e 9 (hertz), RADIO-TX-POWER = 15 (dBm).
//! ```
//!
//! parses as written. Spaces inside a number are ignored. Every key absent
//! from the file keeps its [`Scenario::default`] value; unknown keys are
//! errors.
//!
//! | key | value |
//! |-----|-------|
//! | PROPAGATION-PATHLOSS | TWO-RAY or FREE-SPACE |
//! | PROPAGATION-LIMIT, RADIO-TX-POWER, RADIO-RX-THRESHOLD | dBm |
//! | RADIO-FREQUENCY | Hz (also GHz, MHz) |
//! | RADIO-ANTENNA-GAIN | dB (a dBm annotation is read as dB), both ends |
//! | RADIO-ANTENNA-HEIGHT | m, both ends |
//! | RADIO-NOISE-FIGURE | dB |
//! | RADIO-NOISE-BANDWIDTH | Hz |
//! | RADIO-BANDWIDTH | data rate, bit/s (also Kbps, Mbps) |
//! | TERRAIN-DIMENSIONS | (x, y) m |
//! | NUMBER-OF-NODES, SEED | integer |
//! | SIMULATION-TIME | duration |
//! | SOURCE-SINK-DISTANCE | m |
//! | NODE-POSITION | id (x, y), repeatable; fixes every node |
//! | CBR-SOURCE, CBR-DESTINATION | node id |
//! | CBR-PAYLOAD | bytes |
//! | CBR-PACKETS | integer |
//! | CBR-INTERVAL, CBR-START | duration |
//! | MAC-SLOT, MAC-DIFS, MAC-CCA-TIME | duration |
//! | MAC-CW-MIN, MAC-CW-MAX, MAC-RETRY-LIMIT, MAC-QUEUE-LIMIT | integer |
//! | MAC-HEADER | bytes |
//! | ENERGY-TX-ELECTRONICS, ENERGY-RX, ENERGY-IDLE | mW |
//! | ENERGY-BUDGET | mWh |
//! | POWER-CONTROL | YES or NO |
//! | POWER-CONTROL-STEP, POWER-CONTROL-MARGIN | dB |
//! | POWER-CONTROL-ALPHA | (0, 1] |
//! | POWER-CONTROL-MIN-POWER | dBm |
//! | POWER-CONTROL-BER | (0, 0.5] |
//! | BITS-PER-SYMBOL | integer |
//! | ROUTE-LIFETIME, RREQ-HOLD, RREQ-BUFFER-LIFETIME, RREQ-JITTER | duration |
//! | SNR-THRESHOLD | dB |
//! | SNR-ALPHA, NPL-ALPHA | (0, 1] |
//! | BEACON-PERIOD | duration |
//! | NPL-STALE-PERIODS | integer |
//! | BREAK-MARGIN | dB |
//! | REPAIR-ENERGY-FRACTION | [0, 1] |
//! | REPAIR-QUEUE-LIMIT | integer |
//! | NODE-TRAVERSAL-TIME | duration |
//! | UMPIRES | YES or NO |
//! | UMPIRE-TIMEOUT | duration |
//! | BLACK-HOLE-NODES | node ids, `(3, 7)` or `3 7` |
//! | LINK-FAULT | time a b CUT, or time a b ATTENUATE dB; repeatable |
//!
//! Durations default to seconds and accept S, MS, US and NS suffixes.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use crate::linkbudget::{PathlossModel, PowerDbm};
use crate::sim::{FaultKind, LinkFault, Scenario, ScenarioError};
use crate::time::{SimDuration, SimTime};
use crate::NodeId;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigError {
    /// 1-based line; `None` when the problem is not tied to one line
    /// (for example a default value that conflicts with the file).
    pub line: Option<usize>,
    pub key: Option<String>,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match (&self.line, &self.key) {
            (Some(l), Some(k)) => write!(f, "line {l}: {k}: {}", self.message),
            (Some(l), None) => write!(f, "line {l}: {}", self.message),
            (None, Some(k)) => write!(f, "{k}: {}", self.message),
            (None, None) => f.write_str(&self.message),
        }
    }
}

impl std::error::Error for ConfigError {}

#[derive(Clone, Copy, Debug, PartialEq)]
enum Unit {
    Dbm,
    Db,
    /// Antenna gain: dB, with dBm read as dB so printed GloMoSim blocks load.
    Gain,
    Hz,
    BitRate,
    Meters,
    Seconds,
    Milliwatts,
    MilliwattHours,
    Bytes,
    Plain,
}

impl Unit {
    /// Scale factor for an accepted unit spelling.
    fn scale(self, unit: &str) -> Option<f64> {
        let u = unit.to_ascii_uppercase();
        let u = u.as_str();
        if u.is_empty() {
            return Some(1.0);
        }
        match self {
            Unit::Dbm => matches!(u, "DBM").then_some(1.0),
            Unit::Db => matches!(u, "DB").then_some(1.0),
            Unit::Gain => matches!(u, "DB" | "DBI" | "DBM").then_some(1.0),
            Unit::Hz => match u {
                "HZ" | "HERTZ" => Some(1.0),
                "KHZ" => Some(1e3),
                "MHZ" => Some(1e6),
                "GHZ" => Some(1e9),
                _ => None,
            },
            Unit::BitRate => match u {
                "BPS" | "BIT/S" | "BITS/S" => Some(1.0),
                "KBPS" => Some(1e3),
                "MBPS" => Some(1e6),
                _ => None,
            },
            Unit::Meters => matches!(u, "M" | "METER" | "METERS").then_some(1.0),
            Unit::Seconds => match u {
                "S" | "SEC" | "SECS" | "SECOND" | "SECONDS" => Some(1.0),
                "MS" => Some(1e-3),
                "US" => Some(1e-6),
                "NS" => Some(1e-9),
                _ => None,
            },
            Unit::Milliwatts => matches!(u, "MW").then_some(1.0),
            Unit::MilliwattHours => matches!(u, "MWH").then_some(1.0),
            Unit::Bytes => matches!(u, "B" | "BYTE" | "BYTES").then_some(1.0),
            Unit::Plain => None,
        }
    }
}

/// One `KEY value` occurrence.
#[derive(Clone, Debug)]
struct Entry {
    line: usize,
    key: String,
    value: String,
}

struct Ctx<'a> {
    e: &'a Entry,
}

impl Ctx<'_> {
    fn err(&self, message: impl Into<String>) -> ConfigError {
        ConfigError {
            line: Some(self.e.line),
            key: Some(self.e.key.clone()),
            message: message.into(),
        }
    }

    fn number(&self, unit: Unit) -> Result<f64, ConfigError> {
        let (v, u) = split_unit(&self.e.value).map_err(|m| self.err(m))?;
        let scale = unit
            .scale(&u)
            .ok_or_else(|| self.err(format!("unit {u:?} does not fit this key")))?;
        Ok(v * scale)
    }

    fn int<T: TryFrom<u64>>(&self, unit: Unit) -> Result<T, ConfigError> {
        // Plain digits skip the f64 path, which would round large seeds.
        let compact: String = self.e.value.split_whitespace().collect();
        if let Ok(v) = compact.parse::<u64>() {
            return T::try_from(v).map_err(|_| self.err(format!("{compact} is out of range")));
        }
        let v = self.number(unit)?;
        if v < 0.0 || v.fract() != 0.0 || v > u64::MAX as f64 {
            return Err(self.err(format!("expected a non-negative integer, got {}", self.e.value.trim())));
        }
        T::try_from(v as u64).map_err(|_| self.err(format!("{} is out of range", self.e.value.trim())))
    }

    fn node(&self) -> Result<NodeId, ConfigError> {
        self.int::<u32>(Unit::Plain).map(NodeId)
    }

    fn duration(&self) -> Result<SimDuration, ConfigError> {
        let s = self.number(Unit::Seconds)?;
        if s < 0.0 {
            return Err(self.err("durations cannot be negative"));
        }
        Ok(SimDuration::from_secs_f64(s))
    }

    fn flag(&self) -> Result<bool, ConfigError> {
        match self.e.value.trim().to_ascii_uppercase().as_str() {
            "YES" | "TRUE" | "ON" | "1" => Ok(true),
            "NO" | "FALSE" | "OFF" | "0" => Ok(false),
            other => Err(self.err(format!("expected YES or NO, got {other:?}"))),
        }
    }

    fn list(&self) -> Result<Vec<f64>, ConfigError> {
        list_numbers(&self.e.value).map_err(|m| self.err(m))
    }
}

/// Parses `"15 (dBm)"`, `"2.4 e 9 (hertz)"`, `"600S"` into (value, unit).
fn split_unit(raw: &str) -> Result<(f64, String), String> {
    let mut text = raw.trim().to_string();
    let mut unit = String::new();
    if let Some(open) = text.rfind('(') {
        if !text.ends_with(')') {
            return Err(format!("unbalanced parenthesis in {raw:?}"));
        }
        let inner = text[open + 1..text.len() - 1].trim().to_string();
        if inner.chars().any(|c| c.is_ascii_digit()) {
            return Err(format!("expected a single number, got {raw:?}"));
        }
        unit = inner;
        text.truncate(open);
    }
    let compact: String = text.chars().filter(|c| !c.is_whitespace()).collect();
    if compact.is_empty() {
        return Err("missing value".to_string());
    }
    // Longest prefix that is a number; the rest is a unit suffix.
    let cut = (1..=compact.len())
        .rev()
        .filter(|&k| compact.is_char_boundary(k))
        .find(|&k| compact[..k].parse::<f64>().is_ok() && !compact[..k].ends_with(['e', 'E']))
        .ok_or_else(|| format!("expected a number, got {:?}", raw.trim()))?;
    let value: f64 = compact[..cut].parse().unwrap();
    if !value.is_finite() {
        return Err(format!("expected a finite number, got {:?}", raw.trim()));
    }
    let suffix = &compact[cut..];
    match (suffix.is_empty(), unit.is_empty()) {
        (false, false) => Err(format!("two units in {raw:?}")),
        (false, true) => Ok((value, suffix.to_string())),
        _ => Ok((value, unit)),
    }
}

fn list_numbers(raw: &str) -> Result<Vec<f64>, String> {
    let t = raw.trim();
    let t = t.strip_prefix('(').map_or(Ok(t), |r| r.strip_suffix(')').ok_or(format!("unbalanced parenthesis in {raw:?}")))?;
    t.split(|c: char| c == ',' || c == '*' || c.is_whitespace())
        .filter(|s| !s.is_empty() && !s.eq_ignore_ascii_case("x"))
        .map(|s| match s.parse::<f64>() {
            Ok(v) if v.is_finite() => Ok(v),
            _ => Err(format!("expected a number, got {s:?}")),
        })
        .collect()
}

/// Splits on commas outside parentheses.
fn split_top_level(line: &str) -> Result<Vec<&str>, String> {
    let mut out = Vec::new();
    let mut depth = 0i32;
    let mut start = 0;
    for (i, c) in line.char_indices() {
        match c {
            '(' => depth += 1,
            ')' => {
                depth -= 1;
                if depth < 0 {
                    return Err("unbalanced parenthesis".to_string());
                }
            }
            ',' if depth == 0 => {
                out.push(&line[start..i]);
                start = i + 1;
            }
            _ => {}
        }
    }
    if depth != 0 {
        return Err("unbalanced parenthesis".to_string());
    }
    out.push(&line[start..]);
    Ok(out)
}

fn tokenize(text: &str) -> Result<Vec<Entry>, ConfigError> {
    let mut entries = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let body = raw.split('#').next().unwrap_or("").trim();
        let body = body.strip_suffix('.').unwrap_or(body).trim();
        if body.is_empty() {
            continue;
        }
        let parts = split_top_level(body).map_err(|m| ConfigError { line: Some(line), key: None, message: m })?;
        for part in parts {
            let part = part.trim();
            if part.is_empty() {
                continue;
            }
            let end = part.find(|c: char| c.is_whitespace() || c == '=').unwrap_or(part.len());
            let key = part[..end].to_ascii_uppercase();
            let rest = part[end..].trim_start();
            let value = rest.strip_prefix('=').unwrap_or(rest).trim().to_string();
            if value.is_empty() {
                return Err(ConfigError { line: Some(line), key: Some(key), message: "missing value".into() });
            }
            entries.push(Entry { line, key, value });
        }
    }
    Ok(entries)
}

const REPEATABLE: [&str; 2] = ["NODE-POSITION", "LINK-FAULT"];

/// Which file key controls a [`ScenarioError`] field.
fn key_for_field(field: &str) -> &'static [&'static str] {
    match field {
        "node_count" => &["NUMBER-OF-NODES"],
        "field.x" | "field.y" => &["TERRAIN-DIMENSIONS"],
        "sim_time" => &["SIMULATION-TIME"],
        "data_rate" => &["RADIO-BANDWIDTH"],
        "positions" => &["NODE-POSITION"],
        "source_sink_distance" => &["SOURCE-SINK-DISTANCE", "TERRAIN-DIMENSIONS"],
        "traffic" => &["CBR-SOURCE", "CBR-DESTINATION"],
        "traffic.interval" => &["CBR-INTERVAL"],
        "mac.slot" => &["MAC-SLOT"],
        "mac.cw" => &["MAC-CW-MIN", "MAC-CW-MAX"],
        "mac.queue_limit" => &["MAC-QUEUE-LIMIT"],
        "energy.tx_electronics_mw" => &["ENERGY-TX-ELECTRONICS"],
        "energy.rx_mw" => &["ENERGY-RX"],
        "energy.idle_mw" => &["ENERGY-IDLE"],
        "energy.budget_mwh" => &["ENERGY-BUDGET"],
        "power_control.step_db" => &["POWER-CONTROL-STEP"],
        "power_control.ewma_alpha" => &["POWER-CONTROL-ALPHA"],
        "power_control.ber_target" => &["POWER-CONTROL-BER"],
        "power_control.bits_per_symbol" => &["BITS-PER-SYMBOL"],
        "routing.snr_alpha" => &["SNR-ALPHA"],
        "routing.route_lifetime" => &["ROUTE-LIFETIME"],
        "power_control.min_power_dbm" => &["POWER-CONTROL-MIN-POWER", "RADIO-TX-POWER"],
        "recovery.npl_alpha" => &["NPL-ALPHA"],
        "recovery.repair_energy_fraction" => &["REPAIR-ENERGY-FRACTION"],
        "recovery.stale_periods" => &["NPL-STALE-PERIODS"],
        "recovery.queue_limit" => &["REPAIR-QUEUE-LIMIT"],
        "beacon_period" => &["BEACON-PERIOD"],
        "black_holes" => &["BLACK-HOLE-NODES"],
        "link_faults" => &["LINK-FAULT"],
        "tx_power" => &["RADIO-TX-POWER"],
        "rx_threshold" => &["RADIO-RX-THRESHOLD", "PROPAGATION-LIMIT"],
        "propagation_limit" => &["PROPAGATION-LIMIT"],
        "frequency" => &["RADIO-FREQUENCY"],
        "antenna_height_tx" | "antenna_height_rx" => &["RADIO-ANTENNA-HEIGHT"],
        "antenna_gain_tx" | "antenna_gain_rx" => &["RADIO-ANTENNA-GAIN"],
        "noise_figure" => &["RADIO-NOISE-FIGURE"],
        "noise_bandwidth" => &["RADIO-NOISE-BANDWIDTH"],
        _ => &[],
    }
}

fn apply(s: &mut Scenario, c: &Ctx, positions: &mut BTreeMap<u32, (f64, f64)>, pos_seen: &mut bool) -> Result<(), ConfigError> {
    let e = c.e;
    match e.key.as_str() {
        "PROPAGATION-PATHLOSS" => {
            s.pathloss = match e.value.trim().to_ascii_uppercase().replace('_', "-").as_str() {
                "TWO-RAY" | "TWORAY" | "GROUND-REFLECTION" => PathlossModel::TwoRay,
                "FREE-SPACE" | "FREESPACE" => PathlossModel::FreeSpace,
                other => return Err(c.err(format!("unknown model {other:?}; expected TWO-RAY or FREE-SPACE"))),
            }
        }
        "PROPAGATION-LIMIT" => s.radio.propagation_limit = PowerDbm(c.number(Unit::Dbm)?),
        "RADIO-FREQUENCY" => s.radio.frequency = c.number(Unit::Hz)?,
        "RADIO-TX-POWER" => s.radio.tx_power = PowerDbm(c.number(Unit::Dbm)?),
        "RADIO-RX-THRESHOLD" => s.radio.rx_threshold = PowerDbm(c.number(Unit::Dbm)?),
        "RADIO-ANTENNA-GAIN" => {
            let g = c.number(Unit::Gain)?;
            s.radio.antenna_gain_tx = g;
            s.radio.antenna_gain_rx = g;
        }
        "RADIO-ANTENNA-HEIGHT" => {
            let h = c.number(Unit::Meters)?;
            s.radio.antenna_height_tx = h;
            s.radio.antenna_height_rx = h;
        }
        "RADIO-NOISE-FIGURE" => s.radio.noise_figure = c.number(Unit::Db)?,
        "RADIO-NOISE-BANDWIDTH" => s.radio.noise_bandwidth = c.number(Unit::Hz)?,
        "RADIO-BANDWIDTH" => s.data_rate = c.number(Unit::BitRate)?,
        "TERRAIN-DIMENSIONS" => match c.list()?.as_slice() {
            [x, y] => s.field = (*x, *y),
            other => return Err(c.err(format!("expected (x, y), got {} numbers", other.len()))),
        },
        "NUMBER-OF-NODES" => s.node_count = c.int(Unit::Plain)?,
        "SEED" => s.seed = c.int(Unit::Plain)?,
        "SIMULATION-TIME" => s.sim_time = c.duration()?,
        "SOURCE-SINK-DISTANCE" => s.source_sink_distance = c.number(Unit::Meters)?,
        "NODE-POSITION" => {
            *pos_seen = true;
            let v = e.value.trim();
            let split = v.find(|ch: char| ch.is_whitespace() || ch == '(').ok_or_else(|| c.err("expected id (x, y)"))?;
            let id: u32 = v[..split].parse().map_err(|_| c.err(format!("bad node id {:?}", &v[..split])))?;
            let xy = list_numbers(&v[split..]).map_err(|m| c.err(m))?;
            let [x, y] = xy[..] else {
                return Err(c.err("expected id (x, y)"));
            };
            if positions.insert(id, (x, y)).is_some() {
                return Err(c.err(format!("node {id} positioned twice")));
            }
        }
        "CBR-SOURCE" => s.traffic.source = c.node()?,
        "CBR-DESTINATION" => s.traffic.destination = c.node()?,
        "CBR-PAYLOAD" => s.traffic.payload_bytes = c.int(Unit::Bytes)?,
        "CBR-PACKETS" => s.traffic.packet_count = c.int(Unit::Plain)?,
        "CBR-INTERVAL" => s.traffic.interval = c.duration()?,
        "CBR-START" => s.traffic.start = SimTime::ZERO + c.duration()?,
        "MAC-SLOT" => s.mac.slot = c.duration()?,
        "MAC-DIFS" => s.mac.difs = c.duration()?,
        "MAC-CCA-TIME" => s.mac.cca_time = c.duration()?,
        "MAC-CW-MIN" => s.mac.cw_min = c.int(Unit::Plain)?,
        "MAC-CW-MAX" => s.mac.cw_max = c.int(Unit::Plain)?,
        "MAC-RETRY-LIMIT" => s.mac.retry_limit = c.int(Unit::Plain)?,
        "MAC-HEADER" => s.mac.header_bytes = c.int(Unit::Bytes)?,
        "MAC-QUEUE-LIMIT" => s.mac.queue_limit = c.int(Unit::Plain)?,
        "ENERGY-TX-ELECTRONICS" => s.energy.tx_electronics_mw = c.number(Unit::Milliwatts)?,
        "ENERGY-RX" => s.energy.rx_mw = c.number(Unit::Milliwatts)?,
        "ENERGY-IDLE" => s.energy.idle_mw = c.number(Unit::Milliwatts)?,
        "ENERGY-BUDGET" => s.energy.budget_mwh = c.number(Unit::MilliwattHours)?,
        "POWER-CONTROL" => s.power_control.enabled = c.flag()?,
        "POWER-CONTROL-STEP" => s.power_control.step_db = c.number(Unit::Db)?,
        "POWER-CONTROL-ALPHA" => s.power_control.ewma_alpha = c.number(Unit::Plain)?,
        "POWER-CONTROL-MARGIN" => s.power_control.margin_db = c.number(Unit::Db)?,
        "POWER-CONTROL-MIN-POWER" => s.power_control.min_power_dbm = c.number(Unit::Dbm)?,
        "POWER-CONTROL-BER" => s.power_control.ber_target = c.number(Unit::Plain)?,
        "BITS-PER-SYMBOL" => s.power_control.bits_per_symbol = c.int(Unit::Plain)?,
        "ROUTE-LIFETIME" => s.routing.route_lifetime = c.duration()?,
        "RREQ-HOLD" => s.routing.rreq_hold = c.duration()?,
        "RREQ-BUFFER-LIFETIME" => s.routing.rreq_buffer_lifetime = c.duration()?,
        "RREQ-JITTER" => s.rreq_jitter = c.duration()?,
        "SNR-THRESHOLD" => s.routing.snr_threshold_db = c.number(Unit::Db)?,
        "SNR-ALPHA" => s.routing.snr_alpha = c.number(Unit::Plain)?,
        "BEACON-PERIOD" => s.beacon_period = c.duration()?,
        "NPL-ALPHA" => s.recovery.npl_alpha = c.number(Unit::Plain)?,
        "NPL-STALE-PERIODS" => s.recovery.stale_periods = c.int(Unit::Plain)?,
        "BREAK-MARGIN" => s.recovery.break_margin_db = c.number(Unit::Db)?,
        "REPAIR-ENERGY-FRACTION" => s.recovery.repair_energy_fraction = c.number(Unit::Plain)?,
        "REPAIR-QUEUE-LIMIT" => s.recovery.queue_limit = c.int(Unit::Plain)?,
        "NODE-TRAVERSAL-TIME" => s.recovery.node_traversal = c.duration()?,
        "UMPIRES" => s.umpire.enabled = c.flag()?,
        "UMPIRE-TIMEOUT" => s.umpire.timeout = c.duration()?,
        "BLACK-HOLE-NODES" => {
            let ids = c.list()?;
            s.black_holes = ids
                .into_iter()
                .map(|v| {
                    if v >= 0.0 && v.fract() == 0.0 && v <= f64::from(u32::MAX) {
                        Ok(NodeId(v as u32))
                    } else {
                        Err(c.err(format!("bad node id {v}")))
                    }
                })
                .collect::<Result<_, _>>()?;
        }
        "LINK-FAULT" => s.link_faults.push(parse_fault(c)?),
        _ => return Err(c.err("unknown key")),
    }
    Ok(())
}

fn parse_fault(c: &Ctx) -> Result<LinkFault, ConfigError> {
    let toks: Vec<&str> = c.e.value.split_whitespace().collect();
    let usage = || c.err("expected: time a b CUT, or time a b ATTENUATE dB");
    if toks.len() < 4 {
        return Err(usage());
    }
    let at = split_unit(toks[0]).map_err(|m| c.err(m))?;
    let scale = Unit::Seconds.scale(&at.1).ok_or_else(|| c.err(format!("unit {:?} does not fit a time", at.1)))?;
    if at.0 < 0.0 {
        return Err(c.err("fault time cannot be negative"));
    }
    let node = |t: &str| t.parse::<u32>().map(NodeId).map_err(|_| c.err(format!("bad node id {t:?}")));
    let (a, b) = (node(toks[1])?, node(toks[2])?);
    let kind = match (toks[3].to_ascii_uppercase().as_str(), toks.get(4)) {
        ("CUT", None) => FaultKind::Cut,
        ("ATTENUATE", Some(db)) if toks.len() == 5 => {
            let (v, u) = split_unit(db).map_err(|m| c.err(m))?;
            Unit::Db.scale(&u).ok_or_else(|| c.err(format!("unit {u:?} does not fit an attenuation")))?;
            FaultKind::Attenuate(v)
        }
        _ => return Err(usage()),
    };
    Ok(LinkFault { at: SimTime::from_secs_f64(at.0 * scale), a, b, kind })
}

/// Parses a scenario file; absent keys keep their defaults.
pub fn parse_config(text: &str) -> Result<Scenario, ConfigError> {
    let entries = tokenize(text)?;
    let mut s = Scenario::default();
    let mut first_line: BTreeMap<String, usize> = BTreeMap::new();
    let mut positions = BTreeMap::new();
    let mut pos_seen = false;
    for e in &entries {
        let c = Ctx { e };
        if !REPEATABLE.contains(&e.key.as_str()) {
            if let Some(prev) = first_line.get(&e.key) {
                return Err(c.err(format!("already set on line {prev}")));
            }
        }
        apply(&mut s, &c, &mut positions, &mut pos_seen)?;
        first_line.entry(e.key.clone()).or_insert(e.line);
    }
    if pos_seen {
        let line = first_line.get("NODE-POSITION").copied();
        let n = if first_line.contains_key("NUMBER-OF-NODES") { s.node_count } else { positions.len() };
        let missing: Vec<u32> = (0..n as u32).filter(|i| !positions.contains_key(i)).collect();
        let extra: Vec<u32> = positions.keys().copied().filter(|&i| i as usize >= n).collect();
        if !missing.is_empty() || !extra.is_empty() {
            return Err(ConfigError {
                line,
                key: Some("NODE-POSITION".into()),
                message: format!("positions must cover nodes 0..{n} exactly (missing {missing:?}, extra {extra:?})"),
            });
        }
        s = s.with_positions(positions.into_values().collect());
    }
    validate(&s, &first_line)?;
    Ok(s)
}

/// Scenario invariants, reported against the key that set the offending
/// value.
fn validate(s: &Scenario, lines: &BTreeMap<String, usize>) -> Result<(), ConfigError> {
    let field_err = |field: &str, message: String| {
        let keys = key_for_field(field);
        let hit = keys.iter().find_map(|k| lines.get(*k).map(|l| (k.to_string(), *l)));
        match hit {
            Some((k, l)) => ConfigError { line: Some(l), key: Some(k), message },
            None => ConfigError {
                line: None,
                key: keys.first().map(|k| k.to_string()),
                message: format!("{message} (default value conflicts with the file)"),
            },
        }
    };
    match s.validate() {
        Ok(()) => {}
        Err(ScenarioError::Invalid { field, reason }) => return Err(field_err(field, reason)),
        Err(ScenarioError::Radio(e)) => {
            let field = radio_field(&e);
            return Err(field_err(field, e.to_string()));
        }
    }
    Ok(())
}

fn radio_field(e: &crate::linkbudget::LinkBudgetError) -> &'static str {
    use crate::linkbudget::LinkBudgetError as E;
    match e {
        E::OutOfRange { param, .. } | E::NonPositive { param, .. } | E::NonFinite { param, .. } => param,
        _ => "",
    }
}

pub fn load_config(path: &Path) -> Result<Scenario, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|e| ConfigError {
        line: None,
        key: None,
        message: format!("cannot read {}: {e}", path.display()),
    })?;
    parse_config(&text)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        assert_eq!(parse_config("").unwrap(), Scenario::default());
        assert_eq!(parse_config("# nothing\n\n   \n").unwrap(), Scenario::default());
    }

    #[test]
    fn comma_separated_block() {
        let text = "PROPAGATION-PATHLOSS = TWO-RAY, PROPAGATION-LIMIT = -111 (dBm), RADIO-FREQUENCY = 2.4 e 9 (hertz), \
                    RADIO-TX-POWER = 10 (dBm), RADIO-RX-THRESHOLD = -81 (dBm), RADIO-ANTENNA-GAIN = 0.0 (dBm).";
        let s = parse_config(text).unwrap();
        assert_eq!(s.radio.antenna_gain_tx, 0.0);
        assert_eq!(s.radio.tx_power.0, 10.0);
        assert_eq!(s.radio.frequency, 2.4e9);
        assert_eq!(s.radio.propagation_limit.0, -111.0);
    }

    #[test]
    fn key_value_lines() {
        let s = parse_config("radio-tx-power 15\nPROPAGATION-PATHLOSS FREE-SPACE\nSIMULATION-TIME 150MS\nTERRAIN-DIMENSIONS (500, 400)\nSOURCE-SINK-DISTANCE 300\n").unwrap();
        assert_eq!(s.radio.tx_power.0, 15.0);
        assert_eq!(s.pathloss, PathlossModel::FreeSpace);
        assert_eq!(s.sim_time, SimDuration::from_millis(150));
        assert_eq!(s.field, (500.0, 400.0));
    }

    #[test]
    fn errors_name_key_and_line() {
        let e = parse_config("SEED 1\nRADIO-TX-POWR 15\n").unwrap_err();
        assert_eq!((e.line, e.key.as_deref()), (Some(2), Some("RADIO-TX-POWR")));
        let e = parse_config("\n\nRADIO-TX-POWER fifteen").unwrap_err();
        assert_eq!(e.line, Some(3));
        let e = parse_config("RADIO-FREQUENCY 2.4 (dBm)").unwrap_err();
        assert!(e.message.contains("unit"));
        let e = parse_config("NUMBER-OF-NODES 1").unwrap_err();
        assert_eq!((e.line, e.key.as_deref()), (Some(1), Some("NUMBER-OF-NODES")));
        let e = parse_config("SEED 1\nSEED 2").unwrap_err();
        assert_eq!(e.line, Some(2));
    }

    #[test]
    fn positions_faults_and_black_holes() {
        let text = "NODE-POSITION 0 (0, 0)\nNODE-POSITION 1 (300, 0)\nNODE-POSITION 2 (600, 0)\n\
                    CBR-DESTINATION 2\nBLACK-HOLE-NODES (1)\nLINK-FAULT 30S 0 1 CUT\nLINK-FAULT 40 1 2 ATTENUATE 6\n";
        let s = parse_config(text).unwrap();
        assert_eq!(s.node_count, 3);
        assert_eq!(s.positions.as_ref().unwrap()[1], (300.0, 0.0));
        assert_eq!(s.black_holes, vec![NodeId(1)]);
        assert_eq!(s.link_faults[0].kind, FaultKind::Cut);
        assert_eq!(s.link_faults[1].kind, FaultKind::Attenuate(6.0));
        assert_eq!(s.link_faults[1].at, SimTime::from_secs_f64(40.0));
        let e = parse_config("NODE-POSITION 0 (0, 0)\nNODE-POSITION 2 (1, 1)").unwrap_err();
        assert_eq!(e.key.as_deref(), Some("NODE-POSITION"));
    }

    #[test]
    fn split_unit_forms() {
        assert_eq!(split_unit("15 (dBm)").unwrap(), (15.0, "dBm".into()));
        assert_eq!(split_unit("2.4 e 9").unwrap(), (2.4e9, String::new()));
        assert_eq!(split_unit("600S").unwrap(), (600.0, "S".into()));
        assert_eq!(split_unit("1e-5").unwrap(), (1e-5, String::new()));
        assert!(split_unit("inf").is_err());
        assert!(split_unit("(1, 2)").is_err());
    }
}
