//! Spherical range images and the windowed free-space test.
//!
//! Row 0 is the top of the field of view, column 0 starts at azimuth -π.
//! Pixel centres coincide with the simulator's beam directions when the image
//! has one row per channel and one column per azimuth step.

use std::f64::consts::{PI, TAU};

use nalgebra::Point3;

use crate::cloud::PointCloud;
use crate::error::{Error, Result};
use crate::geometry::Pose;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RangeImageParams {
    pub width: usize,
    pub height: usize,
    /// Degrees.
    pub fov_up: f64,
    pub fov_down: f64,
    pub max_range: f64,
}

impl Default for RangeImageParams {
    fn default() -> Self {
        Self {
            width: 900,
            height: 32,
            fov_up: 3.0,
            fov_down: -25.0,
            max_range: 25.0,
        }
    }
}

impl RangeImageParams {
    /// Azimuth pixel size in radians.
    pub fn az_res(&self) -> f64 {
        TAU / self.width as f64
    }

    pub fn el_res(&self) -> f64 {
        (self.fov_up - self.fov_down).to_radians() / self.height as f64
    }

    fn validate(&self) -> Result<()> {
        if self.width == 0
            || self.height == 0
            || self.fov_up <= self.fov_down
            || self.max_range <= 0.0
        {
            return Err(Error::Config(format!("invalid range image {self:?}")));
        }
        Ok(())
    }

    /// Continuous image coordinates `(u, v, range)` of a sensor-frame point,
    /// or `None` outside the field of view or the range limit.
    pub fn coordinates(&self, p: &Point3<f64>) -> Option<(f64, f64, f64)> {
        let r = p.coords.norm();
        if r == 0.0 || r > self.max_range {
            return None;
        }
        let az = p.y.atan2(p.x);
        let el = (p.z / r).clamp(-1.0, 1.0).asin();
        let up = self.fov_up.to_radians();
        let v = (up - el) / self.el_res();
        if !(0.0..self.height as f64).contains(&v) {
            return None;
        }
        let u = (az + PI) / TAU * self.width as f64;
        Some((u, v, r))
    }

    /// Pixel `(row, col)` and range of a sensor-frame point.
    pub fn pixel(&self, p: &Point3<f64>) -> Option<(usize, usize, f64)> {
        let (u, v, r) = self.coordinates(p)?;
        let col = (u as usize).min(self.width - 1);
        let row = (v as usize).min(self.height - 1);
        Some((row, col, r))
    }

    /// Elevation (radians) at the centre of `row`.
    pub fn row_elevation(&self, row: usize) -> f64 {
        self.fov_up.to_radians() - (row as f64 + 0.5) * self.el_res()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RangeImage {
    params: RangeImageParams,
    /// Row-major, 0 where empty.
    range: Vec<f64>,
    /// Index of the point stored in each pixel, -1 where empty.
    source_index: Vec<i64>,
}

impl RangeImage {
    pub fn params(&self) -> &RangeImageParams {
        &self.params
    }

    pub fn width(&self) -> usize {
        self.params.width
    }

    pub fn height(&self) -> usize {
        self.params.height
    }

    pub fn range(&self, row: usize, col: usize) -> f64 {
        self.range[row * self.params.width + col]
    }

    pub fn source_index(&self, row: usize, col: usize) -> Option<usize> {
        let s = self.source_index[row * self.params.width + col];
        (s >= 0).then_some(s as usize)
    }

    pub fn filled(&self) -> usize {
        self.source_index.iter().filter(|&&s| s >= 0).count()
    }

    /// Range used as free-space evidence: empty pixels saw nothing up to the range limit.
    fn evidence(&self, row: usize, col: usize) -> f64 {
        let r = self.range(row, col);
        if r == 0.0 {
            self.params.max_range
        } else {
            r
        }
    }

    /// Whether a sensor-frame point lies in observed free space: its range is
    /// shorter, by more than `eps`, than every return in the window of pixels
    /// bracketing its direction. `factor` widens the window by `factor - 1`
    /// columns on each side; rows are always the two bracketing channels.
    /// `None` when the point is outside the range limit or not bracketed by two
    /// rows of the image, so the image holds no evidence.
    pub fn is_free(&self, p: &Point3<f64>, factor: usize, eps: f64) -> Option<bool> {
        let prm = &self.params;
        let (u, v, r) = prm.coordinates(p)?;
        let f = factor.max(1) as i64;
        let w = prm.width as i64;
        let u0 = (u - 0.5).floor() as i64;
        let v0 = (v - 0.5).floor() as i64;
        if v0 < 0 || v0 + 1 >= prm.height as i64 {
            return None;
        }
        let limit = r + eps;
        for row in v0..=v0 + 1 {
            for c in (u0 - (f - 1))..=(u0 + f) {
                let col = c.rem_euclid(w) as usize;
                if self.evidence(row as usize, col) <= limit {
                    return Some(false);
                }
            }
        }
        Some(true)
    }
}

/// Projects world-frame `cloud` into the image of a sensor at `sensor_pose`;
/// the nearest point wins each pixel, ties to the lower index.
pub fn project(
    cloud: &PointCloud,
    sensor_pose: &Pose,
    params: &RangeImageParams,
) -> Result<RangeImage> {
    let inv = sensor_pose.inverse();
    let local: Vec<Point3<f64>> = cloud
        .points()
        .iter()
        .map(|p| inv.transform_point(p))
        .collect();
    project_local(&local, params)
}

/// Same as [`project`] for points already in the sensor frame.
pub fn project_local(points: &[Point3<f64>], params: &RangeImageParams) -> Result<RangeImage> {
    params.validate()?;
    let n = params.width * params.height;
    let mut range = vec![0.0; n];
    let mut source_index = vec![-1i64; n];
    for (i, p) in points.iter().enumerate() {
        if let Some((row, col, r)) = params.pixel(p) {
            let k = row * params.width + col;
            if source_index[k] < 0 || r < range[k] {
                range[k] = r;
                source_index[k] = i as i64;
            }
        }
    }
    Ok(RangeImage {
        params: *params,
        range,
        source_index,
    })
}
