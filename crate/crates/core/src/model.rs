//! Shared domain types.
//!
//! Internal units are SI: meters, meters/second, meters/second², and integer
//! milliseconds on the scenario clock. Positions are planar Cartesian meters
//! (x east, y north). Headings are degrees clockwise from north in `[0, 360)`,
//! so a vehicle moving along +x has heading 90.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Exact miles-per-hour to meters-per-second factor.
pub const MPH_TO_MPS: f64 = 0.44704;
/// Exact feet to meters factor.
pub const FT_TO_M: f64 = 0.3048;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("unsupported unit conversion {from:?} -> {to:?}")]
    UnsupportedConversion { from: Unit, to: Unit },
    #[error("invalid topic name {0:?}")]
    InvalidTopic(String),
    #[error("invalid bsm: {0}")]
    InvalidBsm(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Unit {
    Mph,
    MetersPerSecond,
    FeetPerSecondSquared,
    MetersPerSecondSquared,
    Feet,
    Meters,
}

/// Converts between the supported unit pairs (mph/m·s⁻¹, ft·s⁻²/m·s⁻², ft/m).
pub fn convert_units(value: f64, from: Unit, to: Unit) -> Result<f64, ModelError> {
    use Unit::*;
    let factor = match (from, to) {
        (Mph, MetersPerSecond) => MPH_TO_MPS,
        (MetersPerSecond, Mph) => return Ok(value / MPH_TO_MPS),
        (FeetPerSecondSquared, MetersPerSecondSquared) | (Feet, Meters) => FT_TO_M,
        (MetersPerSecondSquared, FeetPerSecondSquared) | (Meters, Feet) => {
            return Ok(value / FT_TO_M)
        }
        (a, b) if a == b => 1.0,
        _ => return Err(ModelError::UnsupportedConversion { from, to }),
    };
    Ok(value * factor)
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Position {
    pub x_m: f64,
    pub y_m: f64,
}

impl Position {
    pub const fn new(x_m: f64, y_m: f64) -> Self {
        Self { x_m, y_m }
    }
}

/// Euclidean distance in meters.
pub fn distance(a: Position, b: Position) -> f64 {
    (a.x_m - b.x_m).hypot(a.y_m - b.y_m)
}

/// Compass bearing in degrees `[0, 360)` from `from` toward `to`.
pub fn bearing_deg(from: Position, to: Position) -> f64 {
    normalize_deg((to.x_m - from.x_m).atan2(to.y_m - from.y_m).to_degrees())
}

/// Wraps any angle into `[0, 360)`.
pub fn normalize_deg(deg: f64) -> f64 {
    let d = deg.rem_euclid(360.0);
    if d >= 360.0 {
        0.0
    } else {
        d
    }
}

/// Absolute angular difference in degrees, in `[0, 180]`.
pub fn angle_diff_deg(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(360.0);
    d.min(360.0 - d)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct MsgId(pub u64);

impl fmt::Display for MsgId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:016x}", self.0)
    }
}

/// One Basic Safety Message sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Bsm {
    pub msg_id: MsgId,
    pub vehicle_id: String,
    pub t_generated_ms: u64,
    pub pos: Position,
    pub speed_mps: f64,
    pub heading_deg: f64,
    pub accel_mps2: f64,
    pub brake_active: bool,
}

impl Bsm {
    pub fn validate(&self) -> Result<(), ModelError> {
        if !(self.speed_mps >= 0.0) {
            return Err(ModelError::InvalidBsm("speed must be non-negative"));
        }
        if !(0.0..360.0).contains(&self.heading_deg) {
            return Err(ModelError::InvalidBsm("heading outside [0, 360)"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EdgeKind {
    Mobile,
    Fixed,
    System,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct EdgeId {
    pub kind: EdgeKind,
    pub id: String,
}

impl EdgeId {
    pub fn mobile(id: impl Into<String>) -> Self {
        Self { kind: EdgeKind::Mobile, id: id.into() }
    }
    pub fn fixed(id: impl Into<String>) -> Self {
        Self { kind: EdgeKind::Fixed, id: id.into() }
    }
    pub fn system(id: impl Into<String>) -> Self {
        Self { kind: EdgeKind::System, id: id.into() }
    }
}

impl fmt::Display for EdgeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.id)
    }
}

/// A concrete topic name. Never contains `*`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct Topic(String);

pub const FCW_WARNINGS_TOPIC: &str = "fcw.warnings";

impl Topic {
    pub fn new(name: impl Into<String>) -> Result<Self, ModelError> {
        let name = name.into();
        if !is_valid_pattern(&name) || name.contains('*') {
            return Err(ModelError::InvalidTopic(name));
        }
        Ok(Self(name))
    }

    pub fn raw_for(fixed_edge: &str) -> Result<Self, ModelError> {
        Self::new(format!("bsm.raw.{fixed_edge}"))
    }

    pub fn agg_for(fixed_edge: &str) -> Result<Self, ModelError> {
        Self::new(format!("traffic.agg.{fixed_edge}"))
    }

    pub fn fcw_warnings() -> Self {
        Self(FCW_WARNINGS_TOPIC.to_owned())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

/// Checks the `[a-z0-9._*-]+` alphabet shared by topic names and patterns.
pub fn is_valid_pattern(s: &str) -> bool {
    !s.is_empty()
        && s.bytes().all(|b| {
            b.is_ascii_lowercase() || b.is_ascii_digit() || matches!(b, b'.' | b'_' | b'*' | b'-')
        })
}

impl TryFrom<String> for Topic {
    type Error = ModelError;
    fn try_from(s: String) -> Result<Self, Self::Error> {
        Topic::new(s)
    }
}

impl From<Topic> for String {
    fn from(t: Topic) -> String {
        t.0
    }
}

impl fmt::Display for Topic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// The ⟨source, sink⟩ flow label carried by every envelope.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Label {
    pub source: String,
    pub sink: String,
}

impl Default for Label {
    fn default() -> Self {
        Self { source: String::new(), sink: "*".to_owned() }
    }
}

/// A broker message.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Envelope {
    pub topic: Topic,
    pub producer: String,
    pub seq: u64,
    pub t_generated_ms: u64,
    pub t_published_ms: u64,
    #[serde(with = "hex_bytes")]
    pub payload: Vec<u8>,
    pub label: Label,
    #[serde(with = "hex_opt", default)]
    pub signature: Option<Vec<u8>>,
    pub encrypted: bool,
}

impl Envelope {
    pub fn new(topic: Topic, producer: impl Into<String>, seq: u64, t_generated_ms: u64, payload: Vec<u8>) -> Self {
        Self {
            topic,
            producer: producer.into(),
            seq,
            t_generated_ms,
            t_published_ms: t_generated_ms,
            payload,
            label: Label::default(),
            signature: None,
            encrypted: false,
        }
    }
}

mod hex_bytes {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(b: &[u8], s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&hex::encode(b))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<u8>, D::Error> {
        let s = String::deserialize(d)?;
        hex::decode(s).map_err(serde::de::Error::custom)
    }
}

mod hex_opt {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(b: &Option<Vec<u8>>, s: S) -> Result<S::Ok, S::Error> {
        match b {
            Some(b) => s.serialize_some(&hex::encode(b)),
            None => s.serialize_none(),
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<Vec<u8>>, D::Error> {
        Option::<String>::deserialize(d)?
            .map(|s| hex::decode(s).map_err(serde::de::Error::custom))
            .transpose()
    }
}
