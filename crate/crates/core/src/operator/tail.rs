//! Kernel mass outside an axis-aligned box, seen from a point inside it.

use std::f64::consts::{FRAC_PI_2, PI};

use crate::error::Result;
use gauss_quad::GaussJacobi;

use crate::quadrature::{integrate, integrate_pieces, Tolerance};

/// Box `[lo, hi]` with the point strictly inside.
#[derive(Clone, Copy, Debug)]
pub struct Region {
    pub lo: [f64; 2],
    pub hi: [f64; 2],
    pub dim: usize,
}

impl Region {
    /// Nearest point of the box.
    pub fn clamp(&self, p: [f64; 2]) -> [f64; 2] {
        [p[0].clamp(self.lo[0], self.hi[0]), p[1].clamp(self.lo[1], self.hi[1])]
    }
}

/// Angular pieces `(from, to, distance to side, side normal angle)` that
/// split the circle of directions at the box corners.
fn sides(x: [f64; 2], b: &Region) -> [(f64, f64, f64, f64); 4] {
    let ne = (b.hi[1] - x[1]).atan2(b.hi[0] - x[0]);
    let nw = (b.hi[1] - x[1]).atan2(b.lo[0] - x[0]);
    let sw = (b.lo[1] - x[1]).atan2(b.lo[0] - x[0]);
    let se = (b.lo[1] - x[1]).atan2(b.hi[0] - x[0]);
    [
        (se, ne, b.hi[0] - x[0], 0.0),
        (ne, nw, b.hi[1] - x[1], FRAC_PI_2),
        (nw, sw + 2.0 * PI, x[0] - b.lo[0], PI),
        (sw, se, x[1] - b.lo[1], -FRAC_PI_2),
    ]
}

/// `int_{outside box} |x - y|^(-N-2s) dy`.
pub fn radial_tail(x: [f64; 2], b: &Region, s: f64, tol: Tolerance) -> Result<f64> {
    let two_s = 2.0 * s;
    if b.dim == 1 {
        return Ok(((x[0] - b.lo[0]).powf(-two_s) + (b.hi[0] - x[0]).powf(-two_s)) / two_s);
    }
    // Along a ray at angle theta the exit distance is d / cos(theta - normal).
    let mut total = 0.0;
    for (from, to, d, normal) in sides(x, b) {
        let e = integrate(|t| (t - normal).cos().max(0.0).powf(two_s), from, to, tol)?;
        total += d.powf(-two_s) * e.value;
    }
    Ok(total / two_s)
}

/// `G(beta) = int_0^beta sin(t)^(2s) dt` for `beta` in `[0, pi/2]`.
///
/// Written as `beta^(2s+1) int_0^1 r^(2s) (sin(beta r)/(beta r))^(2s) dr`,
/// whose second factor is analytic, and integrated with a Gauss-Jacobi rule
/// for the weight `r^(2s)`.
pub struct SinPower {
    s: f64,
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl SinPower {
    pub fn new(s: f64) -> SinPower {
        let gj = GaussJacobi::new(24, 0.0, 2.0 * s).expect("valid Jacobi parameters");
        let scale = 2f64.powf(-2.0 * s - 1.0);
        let (nodes, weights) = gj
            .as_node_weight_pairs()
            .iter()
            .map(|&(x, w)| (0.5 * (1.0 + x), w * scale))
            .unzip();
        SinPower { s, nodes, weights }
    }

    pub fn eval(&self, beta: f64) -> f64 {
        if beta <= 0.0 {
            return 0.0;
        }
        let two_s = 2.0 * self.s;
        let sum: f64 = self
            .nodes
            .iter()
            .zip(&self.weights)
            .map(|(&r, &w)| {
                let z = beta * r;
                w * (z.sin() / z).powf(two_s)
            })
            .sum();
        beta.powf(two_s + 1.0) * sum
    }

    /// `int_d^inf (u^2 + v^2)^(-1-s) du` for `d > 0`, `v >= 0`.
    pub fn strip(&self, d: f64, v: f64) -> f64 {
        let e = -1.0 - 2.0 * self.s;
        if v <= 1e-12 * d {
            return d.powf(e) / (1.0 + 2.0 * self.s);
        }
        v.powf(e) * self.eval((v / d).atan())
    }

    /// `int over {u > d1, w > d2} of (u^2 + w^2)^(-1-s)` for `d1, d2 > 0`.
    pub fn quadrant(&self, d1: f64, d2: f64) -> f64 {
        let tc = d2.atan2(d1);
        let two_s = 2.0 * self.s;
        (d2.powf(-two_s) * self.eval(tc) + d1.powf(-two_s) * self.eval(FRAC_PI_2 - tc)) / two_s
    }
}

/// `int_{outside box} a(y) |x - y|^(-N-2s) dy` where `a` is given on the
/// box boundary and extended outward as constant along the normal
/// direction (constant on each corner quadrant).
pub fn weighted_tail<A: Fn([f64; 2]) -> f64>(x: [f64; 2], b: &Region, s: f64, sp: &SinPower, a: A, tol: Tolerance) -> Result<f64> {
    let two_s = 2.0 * s;
    let (dr, dl) = (b.hi[0] - x[0], x[0] - b.lo[0]);
    if b.dim == 1 {
        return Ok((a([b.hi[0], 0.0]) * dr.powf(-two_s) + a([b.lo[0], 0.0]) * dl.powf(-two_s)) / two_s);
    }
    let (dt, db) = (b.hi[1] - x[1], x[1] - b.lo[1]);
    let corners = a(b.hi) * sp.quadrant(dr, dt)
        + a([b.lo[0], b.hi[1]]) * sp.quadrant(dl, dt)
        + a(b.lo) * sp.quadrant(dl, db)
        + a([b.hi[0], b.lo[1]]) * sp.quadrant(dr, db);
    let along_y = [b.lo[1], x[1], b.hi[1]];
    let along_x = [b.lo[0], x[0], b.hi[0]];
    let right = integrate_pieces(|y| a([b.hi[0], y]) * sp.strip(dr, (y - x[1]).abs()), &along_y, tol)?;
    let left = integrate_pieces(|y| a([b.lo[0], y]) * sp.strip(dl, (y - x[1]).abs()), &along_y, tol)?;
    let top = integrate_pieces(|t| a([t, b.hi[1]]) * sp.strip(dt, (t - x[0]).abs()), &along_x, tol)?;
    let bottom = integrate_pieces(|t| a([t, b.lo[1]]) * sp.strip(db, (t - x[0]).abs()), &along_x, tol)?;
    Ok(corners + right.value + left.value + top.value + bottom.value)
}
