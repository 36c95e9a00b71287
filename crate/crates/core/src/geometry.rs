//! Equirectangular sphere geometry.
//!
//! Conventions (right-handed, `+z` up, `+x` forward):
//!
//! * row 0 is the zenith, the last row the nadir;
//! * column 0 starts at azimuth -180 degrees, azimuth grows left to right and
//!   the horizontal image center is azimuth 0 (the `+x` axis);
//! * azimuth +90 degrees is the `+y` axis;
//! * pixel `(u, v)` has its center at `(u + 0.5, v + 0.5)` in continuous
//!   image coordinates, so integer `(u, v)` name pixel centers.

use std::f64::consts::{FRAC_PI_2, PI};

use crate::error::{Error, Result};
use crate::image::{BinaryMask, Domain, EnvironmentMap, Image, WeightMap};

const UNIT_TOLERANCE: f64 = 1e-6;

/// Unit 3-vector on the sphere.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Direction {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Direction {
    /// Normalizes `(x, y, z)`. Fails on the zero vector.
    pub fn normalized(x: f64, y: f64, z: f64) -> Result<Self> {
        let n = (x * x + y * y + z * z).sqrt();
        if !(n > 0.0) || !n.is_finite() {
            return Err(Error::InvalidArgument("cannot normalize a zero vector".into()));
        }
        Ok(Self {
            x: x / n,
            y: y / n,
            z: z / n,
        })
    }

    /// Accepts `(x, y, z)` only if it is unit length within 1e-6.
    pub fn try_unit(x: f64, y: f64, z: f64) -> Result<Self> {
        let d = Self { x, y, z };
        if (d.norm() - 1.0).abs() > UNIT_TOLERANCE {
            return Err(Error::InvalidArgument(format!(
                "direction is not unit length (norm {})",
                d.norm()
            )));
        }
        Ok(d)
    }

    /// Direction from azimuth and elevation in radians.
    pub fn from_angles(azimuth: f64, elevation: f64) -> Self {
        let (se, ce) = elevation.sin_cos();
        let (sa, ca) = azimuth.sin_cos();
        Self {
            x: ce * ca,
            y: ce * sa,
            z: se,
        }
    }

    pub fn from_degrees(azimuth_deg: f64, elevation_deg: f64) -> Self {
        Self::from_angles(azimuth_deg.to_radians(), elevation_deg.to_radians())
    }

    #[inline]
    pub fn dot(&self, other: &Direction) -> f64 {
        self.x * other.x + self.y * other.y + self.z * other.z
    }

    #[inline]
    pub fn norm(&self) -> f64 {
        (self.x * self.x + self.y * self.y + self.z * self.z).sqrt()
    }

    /// Azimuth in radians, in (-pi, pi].
    pub fn azimuth(&self) -> f64 {
        self.y.atan2(self.x)
    }

    /// Elevation in radians, in [-pi/2, pi/2].
    pub fn elevation(&self) -> f64 {
        self.z.clamp(-1.0, 1.0).asin()
    }

    pub fn as_array(&self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }
}

/// Gravity-aligned pinhole camera: yaw and pitch in degrees, zero roll.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct CameraPose {
    pub yaw_deg: f64,
    pub pitch_deg: f64,
    pub fov_h_deg: f64,
}

impl CameraPose {
    pub fn new(yaw_deg: f64, pitch_deg: f64, fov_h_deg: f64) -> Result<Self> {
        let pose = Self {
            yaw_deg,
            pitch_deg,
            fov_h_deg,
        };
        pose.validate()?;
        Ok(pose)
    }

    /// Forward-looking camera at the map center.
    pub fn center(fov_h_deg: f64) -> Self {
        Self {
            yaw_deg: 0.0,
            pitch_deg: 0.0,
            fov_h_deg,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.fov_h_deg > 0.0 && self.fov_h_deg < 180.0) {
            return Err(Error::InvalidArgument(format!(
                "horizontal field of view {} not in (0, 180)",
                self.fov_h_deg
            )));
        }
        if !(-90.0..=90.0).contains(&self.pitch_deg) {
            return Err(Error::InvalidArgument(format!(
                "pitch {} not in [-90, 90]",
                self.pitch_deg
            )));
        }
        if !self.yaw_deg.is_finite() {
            return Err(Error::InvalidArgument("yaw must be finite".into()));
        }
        Ok(())
    }

    /// Orthonormal (forward, right, up) basis. `right` points toward
    /// increasing azimuth, which is image-right in both the crop and the map.
    fn basis(&self) -> ([f64; 3], [f64; 3], [f64; 3]) {
        let (sy, cy) = self.yaw_deg.to_radians().sin_cos();
        let (sp, cp) = self.pitch_deg.to_radians().sin_cos();
        let forward = [cp * cy, cp * sy, sp];
        let right = [-sy, cy, 0.0];
        let up = [-sp * cy, -sp * sy, cp];
        (forward, right, up)
    }

    /// Half-extents of the image plane at unit focal distance.
    fn tan_half_fov(&self, out_w: usize, out_h: usize) -> (f64, f64) {
        let tx = (self.fov_h_deg.to_radians() / 2.0).tan();
        (tx, tx * out_h as f64 / out_w as f64)
    }
}

fn check_pixel_dims(width: usize, height: usize) -> Result<()> {
    if width == 0 || height == 0 {
        return Err(Error::InvalidArgument(format!(
            "degenerate image size {width}x{height}"
        )));
    }
    Ok(())
}

/// Direction through pixel `(u, v)`. Integer arguments address pixel
/// centers; fractional parts move within the pixel.
pub fn pixel_to_direction(u: f64, v: f64, width: usize, height: usize) -> Result<Direction> {
    check_pixel_dims(width, height)?;
    if !(0.0..width as f64).contains(&u) || !(0.0..height as f64).contains(&v) {
        return Err(Error::Precondition(format!(
            "pixel ({u}, {v}) outside {width}x{height}"
        )));
    }
    Ok(pixel_to_direction_unchecked(u, v, width, height))
}

#[inline]
pub(crate) fn pixel_to_direction_unchecked(u: f64, v: f64, width: usize, height: usize) -> Direction {
    let azimuth = 2.0 * PI * ((u + 0.5) / width as f64) - PI;
    let elevation = FRAC_PI_2 - PI * ((v + 0.5) / height as f64);
    Direction::from_angles(azimuth, elevation)
}

/// Elevation in radians of the center of row `v`.
#[inline]
pub fn row_elevation(v: usize, height: usize) -> f64 {
    FRAC_PI_2 - PI * ((v as f64 + 0.5) / height as f64)
}

/// Continuous pixel coordinates of a unit direction, inverse of
/// [`pixel_to_direction`]. `u` is wrapped into `[0, width)`; `v` is clamped
/// to the centers of the first and last rows.
pub fn direction_to_pixel(d: &Direction, width: usize, height: usize) -> Result<(f64, f64)> {
    check_pixel_dims(width, height)?;
    if (d.norm() - 1.0).abs() > UNIT_TOLERANCE {
        return Err(Error::InvalidArgument(format!(
            "direction is not unit length (norm {})",
            d.norm()
        )));
    }
    Ok(direction_to_pixel_unchecked(d, width, height))
}

#[inline]
pub(crate) fn direction_to_pixel_unchecked(d: &Direction, width: usize, height: usize) -> (f64, f64) {
    let w = width as f64;
    let h = height as f64;
    let mut u = (d.azimuth() + PI) / (2.0 * PI) * w - 0.5;
    // Round-off just below zero belongs to column 0, not the far edge.
    if u < 0.0 && u > -1e-9 {
        u = 0.0;
    }
    u = u.rem_euclid(w);
    if u >= w {
        u = 0.0;
    }
    let v = ((FRAC_PI_2 - d.elevation()) / PI * h - 0.5).clamp(0.0, h - 1.0);
    (u, v)
}

/// Solid angle (steradians) subtended by each pixel. Each row gets its exact
/// band area `(2pi/W)(sin(top) - sin(bottom)) = (2pi/W) 2 sin(pi/2H) cos(elevation)`,
/// which is proportional to the cosine of the row-center elevation and sums
/// to `4pi` for every height.
pub fn solid_angle_weights(width: usize, height: usize) -> Result<WeightMap> {
    check_pixel_dims(width, height)?;
    let cell = (2.0 * PI / width as f64) * 2.0 * (PI / (2.0 * height as f64)).sin();
    let mut weights = Vec::with_capacity(width * height);
    for v in 0..height {
        let w = cell * row_elevation(v, height).cos().max(0.0);
        weights.extend(std::iter::repeat_n(w, width));
    }
    WeightMap::from_vec(width, height, weights)
}

/// Rectified pinhole view of `map` by gnomonic projection with bilinear
/// sampling. The vertical field of view follows from the output aspect ratio.
pub fn crop_fov(map: &EnvironmentMap, pose: &CameraPose, out_w: usize, out_h: usize) -> Result<Image> {
    pose.validate()?;
    if out_w == 0 || out_h == 0 {
        return Err(Error::InvalidArgument(format!(
            "degenerate output size {out_w}x{out_h}"
        )));
    }
    if !map.is_canonical() {
        return Err(Error::Precondition(format!(
            "map {}x{} is not canonical (width = 2 x height)",
            map.width(),
            map.height()
        )));
    }
    let (f, r, up) = pose.basis();
    let (tx, ty) = pose.tan_half_fov(out_w, out_h);
    let (w, h) = map.dims();
    Ok(Image::from_fn(out_w, out_h, |i, j| {
        let x = (2.0 * (i as f64 + 0.5) / out_w as f64 - 1.0) * tx;
        let y = (1.0 - 2.0 * (j as f64 + 0.5) / out_h as f64) * ty;
        let ray = [
            f[0] + x * r[0] + y * up[0],
            f[1] + x * r[1] + y * up[1],
            f[2] + x * r[2] + y * up[2],
        ];
        let n = (ray[0] * ray[0] + ray[1] * ray[1] + ray[2] * ray[2]).sqrt();
        let d = Direction {
            x: ray[0] / n,
            y: ray[1] / n,
            z: ray[2] / n,
        };
        let (u, v) = direction_to_pixel_unchecked(&d, w, h);
        map.sample_wrapped(u, v)
    }))
}

/// Projects a pinhole crop back onto a `width x height` equirectangular grid.
///
/// Returns the partial map (zero outside the frustum) and the mask of pixels
/// whose center direction falls inside the frustum (set = known).
pub fn project_crop_to_envmap(
    crop: &Image,
    pose: &CameraPose,
    width: usize,
    height: usize,
    domain: Domain,
) -> Result<(EnvironmentMap, BinaryMask)> {
    pose.validate()?;
    check_pixel_dims(width, height)?;
    if crop.pixel_count() == 0 {
        return Err(Error::InvalidArgument("empty crop".into()));
    }
    if !crop.is_finite() {
        return Err(Error::Precondition("crop contains non-finite values".into()));
    }
    let (f, r, up) = pose.basis();
    let (cw, ch) = crop.dims();
    let (tx, ty) = pose.tan_half_fov(cw, ch);
    let mut out = Image::new(width, height);
    let mut known = BinaryMask::new(width, height);
    for v in 0..height {
        for u in 0..width {
            if let Some((i, j)) = frustum_coords(
                &pixel_to_direction_unchecked(u as f64, v as f64, width, height),
                (&f, &r, &up),
                (tx, ty),
                (cw, ch),
            ) {
                out.set(u, v, crop.sample_clamped(i, j));
                known.set(u, v, true);
            }
        }
    }
    Ok((EnvironmentMap::new(out, domain), known))
}

/// Mask of equirectangular pixels whose center lies inside the frustum of a
/// `crop_w x crop_h` crop taken with `pose`.
pub fn frustum_mask(
    pose: &CameraPose,
    crop_w: usize,
    crop_h: usize,
    width: usize,
    height: usize,
) -> Result<BinaryMask> {
    pose.validate()?;
    check_pixel_dims(width, height)?;
    check_pixel_dims(crop_w, crop_h)?;
    let (f, r, up) = pose.basis();
    let (tx, ty) = pose.tan_half_fov(crop_w, crop_h);
    Ok(BinaryMask::from_fn(width, height, |u, v| {
        frustum_coords(
            &pixel_to_direction_unchecked(u as f64, v as f64, width, height),
            (&f, &r, &up),
            (tx, ty),
            (crop_w, crop_h),
        )
        .is_some()
    }))
}

/// Continuous crop-pixel coordinates of `d`, or `None` outside the frustum.
fn frustum_coords(
    d: &Direction,
    (f, r, up): (&[f64; 3], &[f64; 3], &[f64; 3]),
    (tx, ty): (f64, f64),
    (cw, ch): (usize, usize),
) -> Option<(f64, f64)> {
    let d = d.as_array();
    let dot = |a: &[f64; 3]| a[0] * d[0] + a[1] * d[1] + a[2] * d[2];
    let depth = dot(f);
    if depth <= 0.0 {
        return None;
    }
    let x = dot(r) / depth;
    let y = dot(up) / depth;
    if x.abs() > tx || y.abs() > ty {
        return None;
    }
    let i = (x / tx + 1.0) / 2.0 * cw as f64 - 0.5;
    let j = (1.0 - y / ty) / 2.0 * ch as f64 - 0.5;
    Some((i, j))
}
