//! Ray intersection against the analytic primitives of a world.

use nalgebra::{Point3, Vector3};

use super::world::{Aabb, Ground, WorldSpec};
use crate::cloud::label;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Hit {
    pub range: f64,
    pub label: u8,
    pub object_id: u32,
}

/// Entry distance of the ray into the box, if the box lies ahead of the origin.
pub fn ray_box(origin: &Point3<f64>, dir: &Vector3<f64>, b: &Aabb) -> Option<f64> {
    let mut t0 = f64::NEG_INFINITY;
    let mut t1 = f64::INFINITY;
    for k in 0..3 {
        if dir[k] == 0.0 {
            if origin[k] < b.min[k] || origin[k] > b.max[k] {
                return None;
            }
            continue;
        }
        let inv = 1.0 / dir[k];
        let (a, c) = ((b.min[k] - origin[k]) * inv, (b.max[k] - origin[k]) * inv);
        t0 = t0.max(a.min(c));
        t1 = t1.min(a.max(c));
    }
    (t0 <= t1 && t0 > 0.0).then_some(t0)
}

pub fn ray_ground(origin: &Point3<f64>, dir: &Vector3<f64>, g: &Ground) -> Option<f64> {
    if dir.z >= 0.0 || origin.z <= g.z {
        return None;
    }
    let t = (g.z - origin.z) / dir.z;
    let p = origin + dir * t;
    g.contains_xy(p.x, p.y).then_some(t)
}

/// Nearest hit within `max_range` for a session at time `t` (keyframe index).
/// `dir` must be unit length.
pub fn cast(
    world: &WorldSpec,
    session: u32,
    t: f64,
    origin: &Point3<f64>,
    dir: &Vector3<f64>,
    max_range: f64,
) -> Option<Hit> {
    let mut best: Option<Hit> = None;
    let mut consider = |range: f64, label: u8, object_id: u32| {
        if range <= max_range && best.is_none_or(|b| range < b.range) {
            best = Some(Hit {
                range,
                label,
                object_id,
            });
        }
    };
    if let Some(g) = &world.ground {
        if let Some(r) = ray_ground(origin, dir, g) {
            consider(r, label::STATIC, 0);
        }
    }
    for b in world.boxes.iter().filter(|b| b.present_in(session)) {
        if let Some(r) = ray_box(origin, dir, &b.aabb) {
            consider(r, b.class.label(), b.id);
        }
    }
    for a in world.agents.iter().filter(|a| a.present_in(session)) {
        if let Some(r) = ray_box(origin, dir, &a.at(t)) {
            consider(r, label::HD, a.id);
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn box_face_ten_meters_ahead() {
        let b = Aabb::from_center_size(Point3::new(11.0, 0.0, 1.0), Vector3::new(2.0, 2.0, 2.0));
        let r = ray_box(&Point3::new(0.0, 0.0, 1.0), &Vector3::x(), &b).unwrap();
        assert!((r - 10.0).abs() < 1e-12);
        assert!(ray_box(&Point3::new(0.0, 0.0, 1.0), &-Vector3::x(), &b).is_none());
        // origin inside the box sees nothing
        assert!(ray_box(&Point3::new(11.0, 0.0, 1.0), &Vector3::x(), &b).is_none());
    }

    #[test]
    fn ground_hit_respects_extent() {
        let g = Ground {
            z: 0.0,
            min: [-10.0, -10.0],
            max: [10.0, 10.0],
        };
        let o = Point3::new(0.0, 0.0, 2.0);
        let d = Vector3::new(1.0, 0.0, -1.0).normalize();
        assert!((ray_ground(&o, &d, &g).unwrap() - 2.0 * 2f64.sqrt()).abs() < 1e-12);
        let far = Vector3::new(100.0, 0.0, -1.0).normalize();
        assert!(ray_ground(&o, &far, &g).is_none());
        assert!(ray_ground(&o, &Vector3::z(), &g).is_none());
    }

    #[test]
    fn nearest_primitive_wins_and_carries_its_label() {
        let w = WorldSpec::parse(
            "GROUND 0 -50 -50 50 50\nBOX 10 0 1 1 4 4 static\nBOX 6 0 1 1 4 4 appear sessions=2\nTRAJ 1 0,0 1,0\nTRAJ 2 0,0 1,0",
            "mem",
        )
        .unwrap();
        let o = Point3::new(0.0, 0.0, 1.0);
        let h1 = cast(&w, 1, 0.0, &o, &Vector3::x(), 50.0).unwrap();
        assert_eq!((h1.label, h1.object_id), (label::STATIC, 2));
        assert!((h1.range - 9.5).abs() < 1e-12);
        let h2 = cast(&w, 2, 0.0, &o, &Vector3::x(), 50.0).unwrap();
        assert_eq!((h2.label, h2.object_id), (label::LD_APPEARING, 3));
        assert!(cast(&w, 1, 0.0, &o, &Vector3::x(), 5.0).is_none());
    }
}
