//! Minimum-volume enclosing ellipse of a planar point set (Khachiyan).

use nalgebra::{Matrix2, Matrix3, Vector2, Vector3};

/// Smallest semi-axis allowed, in pixels.
pub const MIN_SEMI_AXIS: f64 = 0.5;
const TOLERANCE: f64 = 1e-6;
const MAX_ITERATIONS: usize = 100_000;

/// Ellipse in pixel space. `a >= b`; `angle_rad` is the direction of the
/// major axis measured from `+u` toward `+v`.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Ellipse {
    pub u: f64,
    pub v: f64,
    pub a: f64,
    pub b: f64,
    pub angle_rad: f64,
}

impl Ellipse {
    pub fn area(&self) -> f64 {
        std::f64::consts::PI * self.a * self.b
    }

    /// `(p - c)^T A (p - c)`: at most 1 inside, exactly 1 on the boundary.
    pub fn level(&self, u: f64, v: f64) -> f64 {
        let (s, c) = self.angle_rad.sin_cos();
        let (du, dv) = (u - self.u, v - self.v);
        let x = c * du + s * dv;
        let y = -s * du + c * dv;
        (x / self.a).powi(2) + (y / self.b).powi(2)
    }

    fn from_shape(center: Vector2<f64>, shape: Matrix2<f64>) -> Self {
        let eig = shape.symmetric_eigen();
        // Smaller eigenvalue of the shape matrix belongs to the major axis.
        let (imaj, imin) = if eig.eigenvalues[0] <= eig.eigenvalues[1] {
            (0, 1)
        } else {
            (1, 0)
        };
        let a = 1.0 / eig.eigenvalues[imaj].max(f64::MIN_POSITIVE).sqrt();
        let b = 1.0 / eig.eigenvalues[imin].max(f64::MIN_POSITIVE).sqrt();
        let axis = eig.eigenvectors.column(imaj);
        let mut angle = axis[1].atan2(axis[0]);
        // Axis direction is sign-free; keep the angle in (-pi/2, pi/2].
        if angle <= -std::f64::consts::FRAC_PI_2 {
            angle += std::f64::consts::PI;
        } else if angle > std::f64::consts::FRAC_PI_2 {
            angle -= std::f64::consts::PI;
        }
        Self {
            u: center[0],
            v: center[1],
            a: a.max(MIN_SEMI_AXIS),
            b: b.max(MIN_SEMI_AXIS),
            angle_rad: angle,
        }
    }
}

fn cross(o: (f64, f64), a: (f64, f64), b: (f64, f64)) -> f64 {
    (a.0 - o.0) * (b.1 - o.1) - (a.1 - o.1) * (b.0 - o.0)
}

/// Convex hull by monotone chain, counter-clockwise, without collinear
/// points. Degenerate inputs return the distinct extreme points.
pub fn convex_hull(points: &[(f64, f64)]) -> Vec<(f64, f64)> {
    let mut pts: Vec<(f64, f64)> = points.to_vec();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    pts.dedup();
    if pts.len() < 3 {
        return pts;
    }
    let mut hull: Vec<(f64, f64)> = Vec::with_capacity(2 * pts.len());
    for &p in &pts {
        while hull.len() >= 2 && cross(hull[hull.len() - 2], hull[hull.len() - 1], p) <= 0.0 {
            hull.pop();
        }
        hull.push(p);
    }
    let lower = hull.len() + 1;
    for &p in pts.iter().rev().skip(1) {
        while hull.len() >= lower && cross(hull[hull.len() - 2], hull[hull.len() - 1], p) <= 0.0 {
            hull.pop();
        }
        hull.push(p);
    }
    hull.pop();
    hull
}

/// Minimum-area ellipse containing every point (via its convex hull).
///
/// One point gives a circle of radius [`MIN_SEMI_AXIS`]; collinear points
/// give an ellipse through the segment endpoints with minor semi-axis
/// [`MIN_SEMI_AXIS`]. Semi-axes are floored at [`MIN_SEMI_AXIS`].
///
/// # Panics
///
/// Panics on an empty point list.
pub fn fit_enclosing_ellipse(points: &[(f64, f64)]) -> Ellipse {
    assert!(!points.is_empty(), "fit_enclosing_ellipse needs at least one point");
    let hull = convex_hull(points);
    match hull.len() {
        1 => Ellipse {
            u: hull[0].0,
            v: hull[0].1,
            a: MIN_SEMI_AXIS,
            b: MIN_SEMI_AXIS,
            angle_rad: 0.0,
        },
        2 => segment_ellipse(hull[0], hull[1]),
        _ => khachiyan(&hull),
    }
}

fn segment_ellipse(p: (f64, f64), q: (f64, f64)) -> Ellipse {
    let (du, dv) = (q.0 - p.0, q.1 - p.1);
    let half = (du * du + dv * dv).sqrt() / 2.0;
    let mut angle = dv.atan2(du);
    if angle <= -std::f64::consts::FRAC_PI_2 {
        angle += std::f64::consts::PI;
    } else if angle > std::f64::consts::FRAC_PI_2 {
        angle -= std::f64::consts::PI;
    }
    Ellipse {
        u: (p.0 + q.0) / 2.0,
        v: (p.1 + q.1) / 2.0,
        a: half.max(MIN_SEMI_AXIS),
        b: MIN_SEMI_AXIS,
        angle_rad: angle,
    }
}

fn khachiyan(hull: &[(f64, f64)]) -> Ellipse {
    let n = hull.len();
    const D: f64 = 2.0;
    // Work relative to the centroid for conditioning.
    let (mu, mv) = hull
        .iter()
        .fold((0.0, 0.0), |(a, b), p| (a + p.0 / n as f64, b + p.1 / n as f64));
    let q: Vec<Vector3<f64>> = hull
        .iter()
        .map(|p| Vector3::new(p.0 - mu, p.1 - mv, 1.0))
        .collect();
    let mut weights = vec![1.0 / n as f64; n];
    for _ in 0..MAX_ITERATIONS {
        let mut x = Matrix3::zeros();
        for (qi, &wi) in q.iter().zip(&weights) {
            x += qi * qi.transpose() * wi;
        }
        let Some(x_inv) = x.try_inverse() else {
            break;
        };
        let (j, m_max) = q
            .iter()
            .map(|qi| (qi.transpose() * x_inv * qi)[0])
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |best, (i, m)| if m > best.1 { (i, m) } else { best });
        let step = (m_max - D - 1.0) / ((D + 1.0) * (m_max - 1.0));
        let mut change = 0.0;
        for (i, w) in weights.iter_mut().enumerate() {
            let new = (1.0 - step) * *w + if i == j { step } else { 0.0 };
            change += (new - *w).powi(2);
            *w = new;
        }
        if change.sqrt() < TOLERANCE {
            break;
        }
    }
    let mut center = Vector2::zeros();
    for (qi, &wi) in q.iter().zip(&weights) {
        center += Vector2::new(qi[0], qi[1]) * wi;
    }
    let mut scatter = Matrix2::zeros();
    for (qi, &wi) in q.iter().zip(&weights) {
        let p = Vector2::new(qi[0], qi[1]);
        scatter += p * p.transpose() * wi;
    }
    scatter -= center * center.transpose();
    let mut shape = match scatter.try_inverse() {
        Some(inv) => inv / D,
        None => return collinear_fallback(hull),
    };
    // Exact containment: shrink the shape matrix by the worst violation.
    let worst = q
        .iter()
        .map(|qi| {
            let d = Vector2::new(qi[0], qi[1]) - center;
            (d.transpose() * shape * d)[0]
        })
        .fold(0.0, f64::max);
    if worst > 1.0 {
        shape /= worst;
    }
    // Flooring the axes inside from_shape only grows the ellipse.
    let e = Ellipse::from_shape(center + Vector2::new(mu, mv), shape);
    if !e.a.is_finite() || !e.b.is_finite() {
        return collinear_fallback(hull);
    }
    e
}

fn collinear_fallback(hull: &[(f64, f64)]) -> Ellipse {
    let mut best = (hull[0], hull[0], 0.0);
    for (i, &p) in hull.iter().enumerate() {
        for &q in &hull[i + 1..] {
            let d = (p.0 - q.0).powi(2) + (p.1 - q.1).powi(2);
            if d > best.2 {
                best = (p, q, d);
            }
        }
    }
    segment_ellipse(best.0, best.1)
}
