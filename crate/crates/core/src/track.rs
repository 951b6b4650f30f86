//! H-track geometry: sensor beams, yardstick posts, occlusion and edge extraction.
//!
//! The H is laid out in the first quadrant. The left leg occupies
//! `x in [0, leg_width]`, the right leg `x in [leg_width + crossbar_length,
//! 2 * leg_width + crossbar_length]`, both spanning `y in [0, leg_length]`.
//! The crossbar joins the inner walls of the legs, centred vertically.
//!
//! Every beam lies along one named [`TrackEdge`]. Monitoring beams S1..S8
//! line the walls; gating beams S9..S12 span the four leg entrances.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::geometry::{OrientedRect, Segment, Vec2};

pub const SENSOR_COUNT: usize = 12;
pub const MONITORING_COUNT: usize = 8;

#[derive(Debug, Error, PartialEq)]
pub enum TrackError {
    #[error("{field} must be positive, got {value}")]
    NonPositive { field: &'static str, value: f64 },
    #[error("crossbar_width ({crossbar_width}) must be smaller than leg_length ({leg_length})")]
    CrossbarTooWide { crossbar_width: f64, leg_length: f64 },
    #[error("expected {SENSOR_COUNT} sensor placements, got {0}")]
    PlacementCount(usize),
    #[error("sensor {0} placed more than once")]
    DuplicateSensor(SensorId),
    #[error("sensor {id} is a {role} sensor but edge {edge} is not a {role} edge")]
    WrongEdgeKind { id: SensorId, role: SensorRole, edge: TrackEdge },
    #[error("sensor {id}: span [{from}, {to}] does not fit edge {edge} of length {length}")]
    BadSpan { id: SensorId, edge: TrackEdge, from: f64, to: f64, length: f64 },
    #[error("invalid sensor id {0:?}")]
    BadSensorId(String),
    #[error("track config: {0}")]
    Parse(String),
}

/// Sensor pair identifier `S1`..`S12`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SensorId(u8);

impl SensorId {
    pub fn new(n: u8) -> Option<Self> {
        (1..=SENSOR_COUNT as u8).contains(&n).then_some(Self(n))
    }

    pub fn number(self) -> u8 {
        self.0
    }

    pub fn index(self) -> usize {
        usize::from(self.0 - 1)
    }

    pub fn from_index(i: usize) -> Self {
        assert!(i < SENSOR_COUNT, "sensor index {i} out of range");
        Self(i as u8 + 1)
    }

    pub fn all() -> impl Iterator<Item = SensorId> {
        (0..SENSOR_COUNT).map(Self::from_index)
    }

    pub fn monitoring() -> impl Iterator<Item = SensorId> {
        (0..MONITORING_COUNT).map(Self::from_index)
    }

    pub fn gating() -> impl Iterator<Item = SensorId> {
        (MONITORING_COUNT..SENSOR_COUNT).map(Self::from_index)
    }

    pub fn role(self) -> SensorRole {
        if self.index() < MONITORING_COUNT {
            SensorRole::Monitoring
        } else {
            SensorRole::Gating
        }
    }
}

impl fmt::Display for SensorId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "S{}", self.0)
    }
}

impl FromStr for SensorId {
    type Err = TrackError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        s.strip_prefix('S')
            .and_then(|n| n.parse::<u8>().ok())
            .and_then(SensorId::new)
            .ok_or_else(|| TrackError::BadSensorId(s.to_string()))
    }
}

impl Serialize for SensorId {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for SensorId {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SensorRole {
    Monitoring,
    Gating,
}

impl fmt::Display for SensorRole {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SensorRole::Monitoring => "monitoring",
            SensorRole::Gating => "gating",
        })
    }
}

/// Named boundary segments of the H. Wall edges carry monitoring beams,
/// entrance edges carry gating beams.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrackEdge {
    LeftOuter,
    LeftInnerLower,
    LeftInnerUpper,
    CrossbarBottom,
    CrossbarTop,
    RightInnerLower,
    RightInnerUpper,
    RightOuter,
    LeftBottomEntrance,
    LeftTopEntrance,
    RightBottomEntrance,
    RightTopEntrance,
}

impl TrackEdge {
    pub const ALL: [TrackEdge; 12] = [
        TrackEdge::LeftOuter,
        TrackEdge::LeftInnerLower,
        TrackEdge::LeftInnerUpper,
        TrackEdge::CrossbarBottom,
        TrackEdge::CrossbarTop,
        TrackEdge::RightInnerLower,
        TrackEdge::RightInnerUpper,
        TrackEdge::RightOuter,
        TrackEdge::LeftBottomEntrance,
        TrackEdge::LeftTopEntrance,
        TrackEdge::RightBottomEntrance,
        TrackEdge::RightTopEntrance,
    ];

    pub fn role(self) -> SensorRole {
        match self {
            TrackEdge::LeftBottomEntrance
            | TrackEdge::LeftTopEntrance
            | TrackEdge::RightBottomEntrance
            | TrackEdge::RightTopEntrance => SensorRole::Gating,
            _ => SensorRole::Monitoring,
        }
    }
}

impl fmt::Display for TrackEdge {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        // serde's snake_case name doubles as the display form
        let v = serde_json::to_value(self).map_err(|_| fmt::Error)?;
        f.write_str(v.as_str().unwrap_or("?"))
    }
}

/// Where one sensor pair sits: on `edge`, from `from` to `to` metres along it.
/// `to = None` means the end of the edge.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SensorPlacement {
    pub id: SensorId,
    pub edge: TrackEdge,
    #[serde(default)]
    pub from: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub to: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrackConfig {
    pub leg_length: f64,
    pub leg_width: f64,
    pub crossbar_length: f64,
    pub crossbar_width: f64,
    #[serde(default = "default_placements", rename = "sensor")]
    pub sensors: Vec<SensorPlacement>,
}

impl Default for TrackConfig {
    fn default() -> Self {
        Self {
            leg_length: 12.0,
            leg_width: 3.0,
            crossbar_length: 12.0,
            crossbar_width: 3.0,
            sensors: default_placements(),
        }
    }
}

/// S1..S12 on edges in declaration order, each spanning its whole edge.
pub fn default_placements() -> Vec<SensorPlacement> {
    TrackEdge::ALL
        .iter()
        .enumerate()
        .map(|(i, &edge)| SensorPlacement {
            id: SensorId::from_index(i),
            edge,
            from: 0.0,
            to: None,
        })
        .collect()
}

impl TrackConfig {
    /// Parses the TOML track file. A missing `[[sensor]]` list means default placements.
    pub fn from_toml_str(text: &str) -> Result<Self, TrackError> {
        toml::from_str(text).map_err(|e| TrackError::Parse(e.to_string()))
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("track config serialises")
    }

    /// Endpoints of a track edge under this config's dimensions.
    pub fn edge_segment(&self, edge: TrackEdge) -> Segment {
        let w = self.leg_width;
        let l = self.leg_length;
        let yb = (l - self.crossbar_width) / 2.0;
        let yt = (l + self.crossbar_width) / 2.0;
        let xr = w + self.crossbar_length;
        let xo = xr + w;
        let (a, b) = match edge {
            TrackEdge::LeftOuter => ((0.0, 0.0), (0.0, l)),
            TrackEdge::LeftInnerLower => ((w, 0.0), (w, yb)),
            TrackEdge::LeftInnerUpper => ((w, yt), (w, l)),
            TrackEdge::CrossbarBottom => ((w, yb), (xr, yb)),
            TrackEdge::CrossbarTop => ((w, yt), (xr, yt)),
            TrackEdge::RightInnerLower => ((xr, 0.0), (xr, yb)),
            TrackEdge::RightInnerUpper => ((xr, yt), (xr, l)),
            TrackEdge::RightOuter => ((xo, 0.0), (xo, l)),
            TrackEdge::LeftBottomEntrance => ((0.0, 0.0), (w, 0.0)),
            TrackEdge::LeftTopEntrance => ((0.0, l), (w, l)),
            TrackEdge::RightBottomEntrance => ((xr, 0.0), (xo, 0.0)),
            TrackEdge::RightTopEntrance => ((xr, l), (xo, l)),
        };
        Segment::new(Vec2::new(a.0, a.1), Vec2::new(b.0, b.1))
    }

    fn validate(&self) -> Result<(), TrackError> {
        for (field, value) in [
            ("leg_length", self.leg_length),
            ("leg_width", self.leg_width),
            ("crossbar_length", self.crossbar_length),
            ("crossbar_width", self.crossbar_width),
        ] {
            if !(value > 0.0) || !value.is_finite() {
                return Err(TrackError::NonPositive { field, value });
            }
        }
        if self.crossbar_width >= self.leg_length {
            return Err(TrackError::CrossbarTooWide {
                crossbar_width: self.crossbar_width,
                leg_length: self.leg_length,
            });
        }
        if self.sensors.len() != SENSOR_COUNT {
            return Err(TrackError::PlacementCount(self.sensors.len()));
        }
        let mut seen = BTreeSet::new();
        for p in &self.sensors {
            if !seen.insert(p.id) {
                return Err(TrackError::DuplicateSensor(p.id));
            }
            if p.edge.role() != p.id.role() {
                return Err(TrackError::WrongEdgeKind { id: p.id, role: p.id.role(), edge: p.edge });
            }
            let length = self.edge_segment(p.edge).length();
            let to = p.to.unwrap_or(length);
            if !(p.from >= 0.0 && p.from < to && to <= length + 1e-9) {
                return Err(TrackError::BadSpan { id: p.id, edge: p.edge, from: p.from, to, length });
            }
        }
        Ok(())
    }
}

/// One end of a beam. `Left` is the post at the edge's start point
/// (transmitter side), `Right` the post at its end (receiver side).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PostEnd {
    Left,
    Right,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct PostId {
    pub sensor: SensorId,
    pub end: PostEnd,
}

impl fmt::Display for PostId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let end = match self.end {
            PostEnd::Left => "left",
            PostEnd::Right => "right",
        };
        write!(f, "{}-{}", self.sensor, end)
    }
}

impl FromStr for PostId {
    type Err = TrackError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || TrackError::BadSensorId(s.to_string());
        let (sensor, end) = s.split_once('-').ok_or_else(bad)?;
        let end = match end {
            "left" => PostEnd::Left,
            "right" => PostEnd::Right,
            _ => return Err(bad()),
        };
        Ok(PostId { sensor: sensor.parse()?, end })
    }
}

impl Serialize for PostId {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for PostId {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Beam {
    pub id: SensorId,
    pub role: SensorRole,
    pub edge: TrackEdge,
    pub segment: Segment,
}

impl Beam {
    pub fn post(&self, end: PostEnd) -> (PostId, Vec2) {
        let at = match end {
            PostEnd::Left => self.segment.a,
            PostEnd::Right => self.segment.b,
        };
        (PostId { sensor: self.id, end }, at)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrackLayout {
    /// Indexed by `SensorId::index`.
    pub beams: Vec<Beam>,
    pub walls: Vec<(TrackEdge, Segment)>,
}

impl TrackLayout {
    pub fn beam(&self, id: SensorId) -> &Beam {
        &self.beams[id.index()]
    }

    pub fn posts(&self) -> impl Iterator<Item = (PostId, Vec2)> + '_ {
        self.beams
            .iter()
            .flat_map(|b| [b.post(PostEnd::Left), b.post(PostEnd::Right)])
    }
}

pub fn build_track(config: &TrackConfig) -> Result<TrackLayout, TrackError> {
    config.validate()?;
    let mut beams: Vec<Beam> = config
        .sensors
        .iter()
        .map(|p| {
            let edge = config.edge_segment(p.edge);
            let length = edge.length();
            let to = p.to.unwrap_or(length);
            Beam {
                id: p.id,
                role: p.id.role(),
                edge: p.edge,
                segment: Segment::new(edge.at(p.from / length), edge.at(to / length)),
            }
        })
        .collect();
    beams.sort_by_key(|b| b.id);
    let walls = TrackEdge::ALL
        .iter()
        .filter(|e| e.role() == SensorRole::Monitoring)
        .map(|&e| (e, config.edge_segment(e)))
        .collect();
    Ok(TrackLayout { beams, walls })
}

/// Knocked posts. Striking is permanent; the set only grows.
pub type KnockedPosts = BTreeSet<PostId>;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BeamSnapshot {
    /// `true` = beam unbroken, indexed by `SensorId::index`.
    pub clear: [bool; SENSOR_COUNT],
    pub knocked: Vec<PostId>,
}

impl BeamSnapshot {
    pub fn all_clear() -> Self {
        Self { clear: [true; SENSOR_COUNT], knocked: Vec::new() }
    }

    pub fn is_clear(&self, id: SensorId) -> bool {
        self.clear[id.index()]
    }

    pub fn post_standing(&self, post: PostId) -> bool {
        !self.knocked.contains(&post)
    }

    /// Snapshot with the given sensors blocked; for fixtures and service seeding.
    pub fn with_blocked(ids: &[SensorId]) -> Self {
        let mut snap = Self::all_clear();
        for id in ids {
            snap.clear[id.index()] = false;
        }
        snap
    }
}

/// Beam occlusion for one footprint. `None` means no vehicle on the ground.
pub fn beam_states(
    layout: &TrackLayout,
    footprint: Option<&OrientedRect>,
    knocked: &KnockedPosts,
) -> BeamSnapshot {
    let mut clear = [true; SENSOR_COUNT];
    for beam in &layout.beams {
        let post_down = knocked.contains(&beam.post(PostEnd::Left).0)
            || knocked.contains(&beam.post(PostEnd::Right).0);
        let occluded = footprint.is_some_and(|f| f.intersects_segment(&beam.segment));
        clear[beam.id.index()] = !(post_down || occluded);
    }
    BeamSnapshot { clear, knocked: knocked.iter().copied().collect() }
}

/// Direction of a beam transition. Only falling (clear -> blocked) edges are emitted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EdgeKind {
    Falling,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SensorEdge {
    pub sensor: SensorId,
    pub t: f64,
    pub kind: EdgeKind,
}

/// Falling edges between two snapshots, in sensor order.
pub fn diff_edges(prev: &BeamSnapshot, curr: &BeamSnapshot, t: f64) -> Vec<SensorEdge> {
    SensorId::all()
        .filter(|id| prev.is_clear(*id) && !curr.is_clear(*id))
        .map(|sensor| SensorEdge { sensor, t, kind: EdgeKind::Falling })
        .collect()
}

/// Posts whose base point lies inside the footprint.
pub fn check_trounce(layout: &TrackLayout, footprint: &OrientedRect) -> Vec<PostId> {
    layout
        .posts()
        .filter(|(_, at)| footprint.contains(*at))
        .map(|(id, _)| id)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::FRAC_PI_2;

    fn s(n: u8) -> SensorId {
        SensorId::new(n).unwrap()
    }

    fn layout() -> TrackLayout {
        build_track(&TrackConfig::default()).unwrap()
    }

    #[test]
    fn default_layout_has_eight_monitoring_and_four_gating_beams() {
        let l = layout();
        assert_eq!(l.beams.len(), 12);
        let monitoring = l.beams.iter().filter(|b| b.role == SensorRole::Monitoring).count();
        let gating = l.beams.iter().filter(|b| b.role == SensorRole::Gating).count();
        assert_eq!((monitoring, gating), (8, 4));
        for id in SensorId::gating() {
            assert_eq!(l.beam(id).edge.role(), SensorRole::Gating);
        }
    }

    #[test]
    fn eleven_placements_rejected() {
        let mut cfg = TrackConfig::default();
        cfg.sensors.pop();
        assert_eq!(build_track(&cfg), Err(TrackError::PlacementCount(11)));
    }

    #[test]
    fn non_positive_dimension_rejected() {
        let cfg = TrackConfig { leg_width: 0.0, ..TrackConfig::default() };
        assert!(matches!(build_track(&cfg), Err(TrackError::NonPositive { field: "leg_width", .. })));
        let cfg = TrackConfig { crossbar_length: -1.0, ..TrackConfig::default() };
        assert!(build_track(&cfg).is_err());
    }

    #[test]
    fn duplicate_and_misrouted_sensors_rejected() {
        let mut cfg = TrackConfig::default();
        cfg.sensors[1].id = s(1);
        assert_eq!(build_track(&cfg), Err(TrackError::DuplicateSensor(s(1))));
        let mut cfg = TrackConfig::default();
        cfg.sensors[8].edge = TrackEdge::LeftOuter;
        assert!(matches!(build_track(&cfg), Err(TrackError::WrongEdgeKind { .. })));
    }

    #[test]
    fn span_outside_edge_rejected() {
        let mut cfg = TrackConfig::default();
        cfg.sensors[0].to = Some(40.0);
        assert!(matches!(build_track(&cfg), Err(TrackError::BadSpan { .. })));
    }

    #[test]
    fn build_is_deterministic() {
        assert_eq!(layout(), layout());
    }

    #[test]
    fn toml_round_trip_and_default_sensor_list() {
        let cfg = TrackConfig::default();
        let text = cfg.to_toml_string();
        assert_eq!(TrackConfig::from_toml_str(&text).unwrap(), cfg);
        let bare = "leg_length = 20.0\nleg_width = 3.5\ncrossbar_length = 10.0\ncrossbar_width = 3.0\n";
        let parsed = TrackConfig::from_toml_str(bare).unwrap();
        assert_eq!(parsed.sensors, default_placements());
        assert!(TrackConfig::from_toml_str("leg_length = 1\nbogus = 2").is_err());
    }

    #[test]
    fn far_footprint_leaves_everything_clear() {
        let l = layout();
        let far = OrientedRect::new(Vec2::new(-50.0, -50.0), 0.0, 4.0, 1.8);
        let snap = beam_states(&l, Some(&far), &KnockedPosts::new());
        assert_eq!(snap, BeamSnapshot::all_clear());
    }

    #[test]
    fn footprint_straddling_s9_blocks_only_s9() {
        let l = layout();
        let car = OrientedRect::new(Vec2::new(1.5, 0.0), FRAC_PI_2, 4.0, 1.8);
        let snap = beam_states(&l, Some(&car), &KnockedPosts::new());
        for id in SensorId::all() {
            assert_eq!(snap.is_clear(id), id != s(9), "{id}");
        }
    }

    #[test]
    fn knocked_post_blocks_its_beam() {
        let l = layout();
        let knocked: KnockedPosts = [PostId { sensor: s(5), end: PostEnd::Left }].into();
        let snap = beam_states(&l, None, &knocked);
        for id in SensorId::all() {
            assert_eq!(snap.is_clear(id), id != s(5));
        }
    }

    #[test]
    fn edges_only_on_clear_to_blocked() {
        let clear = BeamSnapshot::all_clear();
        let s9 = BeamSnapshot::with_blocked(&[s(9)]);
        assert!(diff_edges(&clear, &clear, 1.0).is_empty());
        assert_eq!(
            diff_edges(&clear, &s9, 2.5),
            vec![SensorEdge { sensor: s(9), t: 2.5, kind: EdgeKind::Falling }]
        );
        assert!(diff_edges(&s9, &clear, 3.0).is_empty());
    }

    #[test]
    fn trounce_lists_contained_posts() {
        let l = layout();
        let away = OrientedRect::new(Vec2::new(1.5, 3.0), FRAC_PI_2, 4.0, 1.8);
        assert!(check_trounce(&l, &away).is_empty());

        // S3 runs along the left leg's inner wall above the crossbar: (3, 7.5) -> (3, 12).
        let s3_left = l.beam(s(3)).segment.a;
        let clip = OrientedRect::new(s3_left + Vec2::new(0.3, 0.3), 0.0, 1.0, 1.0);
        let hit = check_trounce(&l, &clip);
        // The crossbar-top beam S5 starts at the same corner.
        assert_eq!(
            hit,
            vec![
                PostId { sensor: s(3), end: PostEnd::Left },
                PostId { sensor: s(5), end: PostEnd::Left },
            ]
        );

        let big = OrientedRect::new(Vec2::new(3.0, 9.75), FRAC_PI_2, 5.0, 0.5);
        let hit: Vec<_> = check_trounce(&l, &big).into_iter().filter(|p| p.sensor == s(3)).collect();
        assert_eq!(hit.len(), 2);
    }

    #[test]
    fn ids_parse_and_display() {
        assert_eq!("S12".parse::<SensorId>().unwrap(), s(12));
        assert!("S13".parse::<SensorId>().is_err());
        assert!("S0".parse::<SensorId>().is_err());
        let p: PostId = "S3-left".parse().unwrap();
        assert_eq!(p.to_string(), "S3-left");
        assert_eq!(TrackEdge::CrossbarTop.to_string(), "crossbar_top");
    }
}
