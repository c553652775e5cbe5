//! World description files for the simulator.
//!
//! One record per line, `#` starts a comment. Angles in degrees, lengths in meters.
//!
//! ```text
//! SENSOR channels=32 fov_up=3 fov_down=-25 az_step=0.4 max_range=25 noise=0.01 seed=7
//! GROUND z xmin ymin xmax ymax
//! BOX cx cy cz sx sy sz static|appear|disappear [sessions=1,2] [id=N]
//! AGENT cx cy cz sx sy sz vx vy vz [sessions=1] [id=N]
//! TRAJ session x,y x,y ... [spacing=1] [height=1.8]
//! OFFSET session x y z yaw
//! DRIFT session sigma_t sigma_rot [bias=yaw_per_keyframe]
//! ```
//!
//! `BOX` sessions default to every session. `AGENT` velocity is in meters per
//! keyframe; the agent's centre at keyframe `k` is `c + k·v`. Object ids
//! default to the 1-based record number; id 0 is reserved for the ground.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use nalgebra::{Point3, Vector3};

use crate::cloud::label;
use crate::error::{Error, Result};
use crate::geometry::Pose;

#[derive(Clone, Debug, PartialEq)]
pub struct SensorSpec {
    pub channels: usize,
    pub fov_up: f64,
    pub fov_down: f64,
    pub az_step: f64,
    pub max_range: f64,
    pub noise: f64,
    pub seed: u64,
}

impl Default for SensorSpec {
    fn default() -> Self {
        Self {
            channels: 32,
            fov_up: 3.0,
            fov_down: -25.0,
            az_step: 0.4,
            max_range: 25.0,
            noise: 0.01,
            seed: 7,
        }
    }
}

impl SensorSpec {
    pub fn columns(&self) -> usize {
        (360.0 / self.az_step).round() as usize
    }

    /// Beam elevation (radians) of channel `c`, top channel first.
    pub fn elevation(&self, c: usize) -> f64 {
        let step = (self.fov_up - self.fov_down) / self.channels as f64;
        (self.fov_up - (c as f64 + 0.5) * step).to_radians()
    }

    /// Beam azimuth (radians) of column `j`, starting at -π.
    pub fn azimuth(&self, j: usize) -> f64 {
        let w = self.columns() as f64;
        -std::f64::consts::PI + (j as f64 + 0.5) * std::f64::consts::TAU / w
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Aabb {
    pub min: Point3<f64>,
    pub max: Point3<f64>,
}

impl Aabb {
    pub fn from_center_size(c: Point3<f64>, s: Vector3<f64>) -> Aabb {
        Aabb {
            min: c - s / 2.0,
            max: c + s / 2.0,
        }
    }

    pub fn center(&self) -> Point3<f64> {
        nalgebra::center(&self.min, &self.max)
    }

    pub fn translated(&self, v: &Vector3<f64>) -> Aabb {
        Aabb {
            min: self.min + v,
            max: self.max + v,
        }
    }

    pub fn contains(&self, p: &Point3<f64>, pad: f64) -> bool {
        (0..3).all(|k| p[k] >= self.min[k] - pad && p[k] <= self.max[k] + pad)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ObjectClass {
    Static,
    Appear,
    Disappear,
}

impl ObjectClass {
    pub fn label(self) -> u8 {
        match self {
            ObjectClass::Static => label::STATIC,
            ObjectClass::Appear => label::LD_APPEARING,
            ObjectClass::Disappear => label::LD_DISAPPEARING,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BoxObject {
    pub id: u32,
    pub aabb: Aabb,
    pub class: ObjectClass,
    /// `None` means present in every session.
    pub sessions: Option<BTreeSet<u32>>,
}

impl BoxObject {
    pub fn present_in(&self, session: u32) -> bool {
        self.sessions.as_ref().is_none_or(|s| s.contains(&session))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Agent {
    pub id: u32,
    pub start: Aabb,
    pub velocity: Vector3<f64>,
    pub sessions: Option<BTreeSet<u32>>,
}

impl Agent {
    pub fn present_in(&self, session: u32) -> bool {
        self.sessions.as_ref().is_none_or(|s| s.contains(&session))
    }

    pub fn at(&self, t: f64) -> Aabb {
        self.start.translated(&(self.velocity * t))
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Ground {
    pub z: f64,
    pub min: [f64; 2],
    pub max: [f64; 2],
}

impl Ground {
    pub fn contains_xy(&self, x: f64, y: f64) -> bool {
        x >= self.min[0] && x <= self.max[0] && y >= self.min[1] && y <= self.max[1]
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Drift {
    pub sigma_t: f64,
    /// Degrees.
    pub sigma_rot: f64,
    /// Degrees of yaw added to every odometry step.
    pub yaw_bias: f64,
}

impl Drift {
    pub fn is_zero(&self) -> bool {
        self.sigma_t == 0.0 && self.sigma_rot == 0.0 && self.yaw_bias == 0.0
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SessionSpec {
    pub id: u32,
    pub waypoints: Vec<[f64; 2]>,
    pub spacing: f64,
    pub height: f64,
    /// World pose of the session's own frame origin.
    pub offset: Pose,
    pub drift: Drift,
}

impl SessionSpec {
    /// Keyframe poses sampled every `spacing` meters of arc length, heading along the path.
    pub fn trajectory(&self) -> Vec<Pose> {
        let mut out = Vec::new();
        let mut carry = 0.0;
        for w in self.waypoints.windows(2) {
            let (a, b) = (w[0], w[1]);
            let (dx, dy) = (b[0] - a[0], b[1] - a[1]);
            let len = dx.hypot(dy);
            if len == 0.0 {
                continue;
            }
            let yaw = dy.atan2(dx);
            let mut s = carry;
            while s < len - 1e-9 {
                let f = s / len;
                out.push(Pose::from_xyz_yaw(
                    a[0] + f * dx,
                    a[1] + f * dy,
                    self.height,
                    yaw,
                ));
                s += self.spacing;
            }
            carry = s - len;
        }
        if let (Some(a), Some(b)) = (self.waypoints.iter().rev().nth(1), self.waypoints.last()) {
            if carry.abs() < 1e-9 || out.is_empty() {
                out.push(Pose::from_xyz_yaw(
                    b[0],
                    b[1],
                    self.height,
                    (b[1] - a[1]).atan2(b[0] - a[0]),
                ));
            }
        }
        out
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct WorldSpec {
    pub sensor: SensorSpec,
    pub ground: Option<Ground>,
    pub boxes: Vec<BoxObject>,
    pub agents: Vec<Agent>,
    pub sessions: BTreeMap<u32, SessionSpec>,
}

impl WorldSpec {
    pub fn read(path: impl AsRef<Path>) -> Result<WorldSpec> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        WorldSpec::parse(&text, &path.display().to_string())
    }

    pub fn parse(text: &str, origin: &str) -> Result<WorldSpec> {
        let mut w = WorldSpec::default();
        let mut pending: Vec<(usize, u32, Pose)> = Vec::new();
        let mut drifts: Vec<(usize, u32, Drift)> = Vec::new();
        let mut box_sessions: Vec<(usize, u32)> = Vec::new();
        let mut ids = BTreeSet::new();
        for (n, raw) in text.lines().enumerate() {
            let ln = n + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |msg: String| Error::parse(origin, ln, msg);
            let mut tokens: Vec<&str> = line.split_whitespace().collect();
            let kind = tokens.remove(0);
            let (pos, opts) = split_options(&tokens).map_err(err)?;
            let num = |i: usize| -> Result<f64> {
                pos.get(i)
                    .ok_or_else(|| {
                        Error::parse(origin, ln, format!("{kind}: missing field {}", i + 1))
                    })?
                    .parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| {
                        Error::parse(
                            origin,
                            ln,
                            format!("{kind}: field {} is not a number", i + 1),
                        )
                    })
            };
            let arity = |want: usize| -> Result<()> {
                if pos.len() == want {
                    Ok(())
                } else {
                    Err(Error::parse(
                        origin,
                        ln,
                        format!("{kind}: expected {want} fields, got {}", pos.len()),
                    ))
                }
            };
            let opt_f64 = |key: &str| -> Result<Option<f64>> {
                opts.get(key)
                    .map(|v| {
                        v.parse::<f64>()
                            .map_err(|_| Error::parse(origin, ln, format!("{key}: not a number")))
                    })
                    .transpose()
            };
            let check_opts = |allowed: &[&str]| -> Result<()> {
                match opts.keys().find(|k| !allowed.contains(k)) {
                    Some(k) => Err(Error::parse(
                        origin,
                        ln,
                        format!("{kind}: unknown option `{k}`"),
                    )),
                    None => Ok(()),
                }
            };
            let object_id = |ids: &mut BTreeSet<u32>| -> Result<u32> {
                let id = match opts.get("id") {
                    Some(v) => v
                        .parse::<u32>()
                        .map_err(|_| Error::parse(origin, ln, "id: not an integer"))?,
                    None => ln as u32,
                };
                if id == 0 || !ids.insert(id) {
                    return Err(Error::parse(
                        origin,
                        ln,
                        format!("object id {id} is reserved or repeated"),
                    ));
                }
                Ok(id)
            };
            let sessions = || -> Result<Option<BTreeSet<u32>>> {
                opts.get("sessions")
                    .map(|v| {
                        v.split(',')
                            .map(|s| s.trim().parse::<u32>())
                            .collect::<std::result::Result<BTreeSet<u32>, _>>()
                            .map_err(|_| {
                                Error::parse(
                                    origin,
                                    ln,
                                    "sessions: expected a comma-separated id list",
                                )
                            })
                    })
                    .transpose()
            };
            match kind {
                "SENSOR" => {
                    arity(0)?;
                    check_opts(&[
                        "channels",
                        "fov_up",
                        "fov_down",
                        "az_step",
                        "max_range",
                        "noise",
                        "seed",
                    ])?;
                    let s = &mut w.sensor;
                    if let Some(v) = opts.get("channels") {
                        s.channels = v
                            .parse()
                            .map_err(|_| err("channels: not an integer".into()))?;
                    }
                    if let Some(v) = opts.get("seed") {
                        s.seed = v.parse().map_err(|_| err("seed: not an integer".into()))?;
                    }
                    s.fov_up = opt_f64("fov_up")?.unwrap_or(s.fov_up);
                    s.fov_down = opt_f64("fov_down")?.unwrap_or(s.fov_down);
                    s.az_step = opt_f64("az_step")?.unwrap_or(s.az_step);
                    s.max_range = opt_f64("max_range")?.unwrap_or(s.max_range);
                    s.noise = opt_f64("noise")?.unwrap_or(s.noise);
                    if s.channels == 0
                        || s.fov_up <= s.fov_down
                        || s.az_step <= 0.0
                        || s.max_range <= 0.0
                        || s.noise < 0.0
                    {
                        return Err(err(format!("invalid sensor {s:?}")));
                    }
                }
                "GROUND" => {
                    arity(5)?;
                    check_opts(&[])?;
                    let g = Ground {
                        z: num(0)?,
                        min: [num(1)?, num(2)?],
                        max: [num(3)?, num(4)?],
                    };
                    if g.min[0] >= g.max[0] || g.min[1] >= g.max[1] {
                        return Err(err("GROUND: empty extent".into()));
                    }
                    w.ground = Some(g);
                }
                "BOX" => {
                    arity(7)?;
                    check_opts(&["sessions", "id"])?;
                    let aabb = sized_box(&[num(0)?, num(1)?, num(2)?, num(3)?, num(4)?, num(5)?])
                        .map_err(err)?;
                    let class = match pos[6] {
                        "static" => ObjectClass::Static,
                        "appear" => ObjectClass::Appear,
                        "disappear" => ObjectClass::Disappear,
                        other => return Err(err(format!("BOX: unknown class `{other}`"))),
                    };
                    let sessions = sessions()?;
                    for s in sessions.iter().flatten() {
                        box_sessions.push((ln, *s));
                    }
                    w.boxes.push(BoxObject {
                        id: object_id(&mut ids)?,
                        aabb,
                        class,
                        sessions,
                    });
                }
                "AGENT" => {
                    arity(9)?;
                    check_opts(&["sessions", "id"])?;
                    let start = sized_box(&[num(0)?, num(1)?, num(2)?, num(3)?, num(4)?, num(5)?])
                        .map_err(err)?;
                    let sessions = sessions()?;
                    for s in sessions.iter().flatten() {
                        box_sessions.push((ln, *s));
                    }
                    w.agents.push(Agent {
                        id: object_id(&mut ids)?,
                        start,
                        velocity: Vector3::new(num(6)?, num(7)?, num(8)?),
                        sessions,
                    });
                }
                "TRAJ" => {
                    check_opts(&["spacing", "height"])?;
                    let id: u32 = pos
                        .first()
                        .and_then(|v| v.parse().ok())
                        .ok_or_else(|| err("TRAJ: expected a session id".into()))?;
                    let waypoints = pos[1..]
                        .iter()
                        .map(|t| {
                            parse_xy(t).ok_or_else(|| err(format!("TRAJ: bad waypoint `{t}`")))
                        })
                        .collect::<Result<Vec<_>>>()?;
                    if waypoints.len() < 2 {
                        return Err(err("TRAJ: need at least two waypoints".into()));
                    }
                    let spacing = opt_f64("spacing")?.unwrap_or(1.0);
                    if spacing <= 0.0 {
                        return Err(err("TRAJ: spacing must be positive".into()));
                    }
                    let spec = SessionSpec {
                        id,
                        waypoints,
                        spacing,
                        height: opt_f64("height")?.unwrap_or(1.8),
                        offset: Pose::identity(),
                        drift: Drift::default(),
                    };
                    if w.sessions.insert(id, spec).is_some() {
                        return Err(err(format!("TRAJ: session {id} defined twice")));
                    }
                }
                "OFFSET" => {
                    arity(5)?;
                    check_opts(&[])?;
                    let id = num(0)? as u32;
                    pending.push((
                        ln,
                        id,
                        Pose::from_xyz_yaw(num(1)?, num(2)?, num(3)?, num(4)?.to_radians()),
                    ));
                }
                "DRIFT" => {
                    arity(3)?;
                    check_opts(&["bias"])?;
                    let d = Drift {
                        sigma_t: num(1)?,
                        sigma_rot: num(2)?,
                        yaw_bias: opt_f64("bias")?.unwrap_or(0.0),
                    };
                    if d.sigma_t < 0.0 || d.sigma_rot < 0.0 {
                        return Err(err("DRIFT: negative sigma".into()));
                    }
                    drifts.push((ln, num(0)? as u32, d));
                }
                other => return Err(err(format!("unknown record `{other}`"))),
            }
        }
        for (ln, id, offset) in pending {
            let s = w.sessions.get_mut(&id).ok_or_else(|| {
                Error::parse(origin, ln, format!("OFFSET for unknown session {id}"))
            })?;
            s.offset = offset;
        }
        for (ln, id, drift) in drifts {
            let s = w.sessions.get_mut(&id).ok_or_else(|| {
                Error::parse(origin, ln, format!("DRIFT for unknown session {id}"))
            })?;
            s.drift = drift;
        }
        for (ln, id) in box_sessions {
            if !w.sessions.contains_key(&id) {
                return Err(Error::parse(
                    origin,
                    ln,
                    format!("object references unknown session {id}"),
                ));
            }
        }
        Ok(w)
    }

    pub fn session(&self, id: u32) -> Result<&SessionSpec> {
        self.sessions
            .get(&id)
            .ok_or_else(|| Error::Config(format!("world has no session {id}")))
    }
}

fn split_options<'a>(
    tokens: &[&'a str],
) -> std::result::Result<(Vec<&'a str>, BTreeMap<&'a str, &'a str>), String> {
    let mut pos = Vec::new();
    let mut opts = BTreeMap::new();
    for t in tokens {
        match t.split_once('=') {
            Some((k, v)) => {
                if opts.insert(k, v).is_some() {
                    return Err(format!("option `{k}` given twice"));
                }
            }
            None => pos.push(*t),
        }
    }
    Ok((pos, opts))
}

fn sized_box(v: &[f64; 6]) -> std::result::Result<Aabb, String> {
    if v[3] <= 0.0 || v[4] <= 0.0 || v[5] <= 0.0 {
        return Err("box extents must be positive".into());
    }
    Ok(Aabb::from_center_size(
        Point3::new(v[0], v[1], v[2]),
        Vector3::new(v[3], v[4], v[5]),
    ))
}

fn parse_xy(t: &str) -> Option<[f64; 2]> {
    let (x, y) = t.split_once(',')?;
    Some([x.parse().ok()?, y.parse().ok()?])
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = "\
SENSOR channels=16 az_step=0.8 seed=3   # light sensor
GROUND 0 -50 -50 50 50
BOX 5 0 1 1 2 2 static
BOX 8 3 1 1 1 2 appear sessions=2 id=40
AGENT 0 5 0.8 4 2 1.6 0.5 0 0 sessions=1
TRAJ 1 0,0 10,0 spacing=1
TRAJ 2 0,0 10,0 10,5 spacing=2 height=1.5
OFFSET 2 10 0 0 45
DRIFT 2 0.01 0.05 bias=-0.1
";

    #[test]
    fn parses_every_record() {
        let w = WorldSpec::parse(SAMPLE, "mem").unwrap();
        assert_eq!(w.sensor.channels, 16);
        assert_eq!(w.sensor.columns(), 450);
        assert_eq!(w.sensor.seed, 3);
        assert_eq!(w.boxes.len(), 2);
        assert_eq!(w.boxes[0].id, 3);
        assert_eq!(w.boxes[1].id, 40);
        assert!(w.boxes[0].present_in(2) && !w.boxes[1].present_in(1));
        assert_eq!(w.agents[0].at(2.0).center(), Point3::new(1.0, 5.0, 0.8));
        let s2 = w.session(2).unwrap();
        assert_eq!(s2.height, 1.5);
        assert!((s2.offset.yaw() - 45f64.to_radians()).abs() < 1e-12);
        assert_eq!(s2.drift.yaw_bias, -0.1);
    }

    #[test]
    fn trajectory_is_equidistant() {
        let w = WorldSpec::parse(SAMPLE, "mem").unwrap();
        let t = w.session(1).unwrap().trajectory();
        assert_eq!(t.len(), 11);
        for (i, p) in t.iter().enumerate() {
            assert!((p.translation().x - i as f64).abs() < 1e-12);
        }
        let t2 = w.session(2).unwrap().trajectory();
        // 15 m of path at 2 m spacing, corner carried over
        assert_eq!(t2.len(), 8);
        for pair in t2.windows(2) {
            let d = (pair[1].translation() - pair[0].translation()).norm();
            assert!(d <= 2.0 + 1e-9 && d > 1.4, "{d}");
        }
    }

    #[test]
    fn errors_name_the_line() {
        for (text, line) in [
            ("BOX 0 0 0 1 1 0 static", 1),
            ("GROUND 0 -1 -1 1 1\nBOX 0 0 0 1 1 1 chair", 2),
            ("TRAJ 1 0,0 1,0\nBOX 0 0 0 1 1 1 static sessions=9", 2),
            ("WALL 1", 1),
            ("OFFSET 3 0 0 0 0", 1),
            ("TRAJ 1 0,0", 1),
        ] {
            match WorldSpec::parse(text, "w") {
                Err(Error::Parse { line: l, .. }) => assert_eq!(l, line, "{text}"),
                other => panic!("{text}: {other:?}"),
            }
        }
    }
}
