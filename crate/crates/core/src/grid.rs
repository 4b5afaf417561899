//! Uniform Cartesian discretization of intervals, rectangles and discs.
//!
//! The grid stores a rectangular *lattice* of nodes that covers the domain
//! plus at least one ring of exterior nodes. Interior nodes are the degrees
//! of freedom; every other lattice node carries `u = 0`. Each node owns the
//! cell `x + [-h/2, h/2]^N`, so the lattice cells tile a box that contains
//! the closure of the domain.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative tolerance (in units of `h`) used when deciding whether a node
/// sits on the boundary.
const ON_BOUNDARY: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "lowercase")]
pub enum DomainSpec {
    Interval { bounds: [f64; 2] },
    Rectangle { x: [f64; 2], y: [f64; 2] },
    Disc { center: [f64; 2], radius: f64 },
}

impl DomainSpec {
    pub fn dim(&self) -> usize {
        match self {
            DomainSpec::Interval { .. } => 1,
            _ => 2,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = |lo: f64, hi: f64| lo.is_finite() && hi.is_finite() && hi > lo;
        let valid = match self {
            DomainSpec::Interval { bounds } => ok(bounds[0], bounds[1]),
            DomainSpec::Rectangle { x, y } => ok(x[0], x[1]) && ok(y[0], y[1]),
            DomainSpec::Disc { center, radius } => {
                center.iter().all(|c| c.is_finite()) && radius.is_finite() && *radius > 0.0
            }
        };
        if valid {
            Ok(())
        } else {
            Err(Error::InvalidDomain(format!("{self:?}")))
        }
    }

    /// Distance from `p` to the boundary, signed: positive inside.
    pub fn signed_distance(&self, p: [f64; 2]) -> f64 {
        match self {
            DomainSpec::Interval { bounds } => (p[0] - bounds[0]).min(bounds[1] - p[0]),
            DomainSpec::Rectangle { x, y } => {
                let dx = (p[0] - x[0]).min(x[1] - p[0]);
                let dy = (p[1] - y[0]).min(y[1] - p[1]);
                if dx >= 0.0 && dy >= 0.0 {
                    dx.min(dy)
                } else {
                    // Outside: exact Euclidean distance, negated.
                    let ox = (-dx).max(0.0);
                    let oy = (-dy).max(0.0);
                    -(ox * ox + oy * oy).sqrt()
                }
            }
            DomainSpec::Disc { center, radius } => {
                let dx = p[0] - center[0];
                let dy = p[1] - center[1];
                radius - (dx * dx + dy * dy).sqrt()
            }
        }
    }

    pub fn contains(&self, p: [f64; 2]) -> bool {
        self.signed_distance(p) > 0.0
    }

    pub fn center(&self) -> [f64; 2] {
        match self {
            DomainSpec::Interval { bounds } => [0.5 * (bounds[0] + bounds[1]), 0.0],
            DomainSpec::Rectangle { x, y } => [0.5 * (x[0] + x[1]), 0.5 * (y[0] + y[1])],
            DomainSpec::Disc { center, .. } => *center,
        }
    }

    pub fn inradius(&self) -> f64 {
        match self {
            DomainSpec::Interval { bounds } => 0.5 * (bounds[1] - bounds[0]),
            DomainSpec::Rectangle { x, y } => 0.5 * (x[1] - x[0]).min(y[1] - y[0]),
            DomainSpec::Disc { radius, .. } => *radius,
        }
    }

    pub fn smallest_extent(&self) -> f64 {
        2.0 * self.inradius()
    }

    pub fn measure(&self) -> f64 {
        match self {
            DomainSpec::Interval { bounds } => bounds[1] - bounds[0],
            DomainSpec::Rectangle { x, y } => (x[1] - x[0]) * (y[1] - y[0]),
            DomainSpec::Disc { radius, .. } => std::f64::consts::PI * radius * radius,
        }
    }

    /// The same shape shrunk about its center by `scale` in (0, 1).
    pub fn shrink(&self, scale: f64) -> DomainSpec {
        let c = self.center();
        let about = |lo: f64, hi: f64, mid: f64| [mid + scale * (lo - mid), mid + scale * (hi - mid)];
        match self {
            DomainSpec::Interval { bounds } => DomainSpec::Interval {
                bounds: about(bounds[0], bounds[1], c[0]),
            },
            DomainSpec::Rectangle { x, y } => DomainSpec::Rectangle {
                x: about(x[0], x[1], c[0]),
                y: about(y[0], y[1], c[1]),
            },
            DomainSpec::Disc { center, radius } => DomainSpec::Disc {
                center: *center,
                radius: scale * radius,
            },
        }
    }
}

/// Serializable description of a grid; nodes are recomputed on load.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridDescriptor {
    pub spec: DomainSpec,
    pub h: f64,
    /// Extra rings of exterior lattice nodes beyond the minimal covering
    /// lattice.
    #[serde(default)]
    pub collar: usize,
}

#[derive(Clone, Debug)]
pub struct Grid {
    spec: DomainSpec,
    h: f64,
    collar: usize,
    dims: [usize; 2],
    origin: [f64; 2],
    points: Vec<[f64; 2]>,
    interior: Vec<bool>,
    dof_nodes: Vec<usize>,
    dof_of: Vec<Option<usize>>,
}

/// Boundary-strip selection over the degrees of freedom.
#[derive(Clone, Debug, PartialEq)]
pub struct StripMask {
    pub mask: Vec<bool>,
    pub count: usize,
    /// True when the strip width reaches the inradius, so the mask is the
    /// whole interior.
    pub covers_interior: bool,
}

impl Grid {
    pub fn build(spec: DomainSpec, h: f64) -> Result<Grid> {
        Grid::with_collar(spec, h, 0)
    }

    pub fn from_descriptor(d: &GridDescriptor) -> Result<Grid> {
        Grid::with_collar(d.spec.clone(), d.h, d.collar)
    }

    pub fn with_collar(spec: DomainSpec, h: f64, collar: usize) -> Result<Grid> {
        spec.validate()?;
        if !(h.is_finite() && h > 0.0) {
            return Err(Error::InvalidParameter(format!("grid spacing h = {h} must be positive")));
        }
        if h >= spec.smallest_extent() {
            return Err(Error::DegenerateGrid(format!(
                "h = {h} is not smaller than the smallest domain extent {}",
                spec.smallest_extent()
            )));
        }
        let tol = ON_BOUNDARY * h;
        // Number of steps from `lo` until the first node at or beyond `hi`.
        let steps = |lo: f64, hi: f64| ((hi - lo) / h - ON_BOUNDARY).ceil().max(1.0) as usize;
        let (origin, dims) = match &spec {
            DomainSpec::Interval { bounds } => {
                let m = steps(bounds[0], bounds[1]);
                ([bounds[0], 0.0], [m + 1, 1])
            }
            DomainSpec::Rectangle { x, y } => {
                let mx = steps(x[0], x[1]);
                let my = steps(y[0], y[1]);
                ([x[0], y[0]], [mx + 1, my + 1])
            }
            DomainSpec::Disc { center, radius } => {
                let m = steps(0.0, *radius);
                let o = m as f64 * h;
                ([center[0] - o, center[1] - o], [2 * m + 1, 2 * m + 1])
            }
        };
        let dim = spec.dim();
        let c = collar as f64 * h;
        let origin = if dim == 1 {
            [origin[0] - c, 0.0]
        } else {
            [origin[0] - c, origin[1] - c]
        };
        let dims = if dim == 1 {
            [dims[0] + 2 * collar, 1]
        } else {
            [dims[0] + 2 * collar, dims[1] + 2 * collar]
        };

        let len = dims[0] * dims[1];
        let mut points = Vec::with_capacity(len);
        let mut interior = Vec::with_capacity(len);
        let mut dof_nodes = Vec::new();
        let mut dof_of = Vec::with_capacity(len);
        for i in 0..dims[0] {
            for j in 0..dims[1] {
                let p = if dim == 1 {
                    [origin[0] + i as f64 * h, 0.0]
                } else {
                    [origin[0] + i as f64 * h, origin[1] + j as f64 * h]
                };
                let inside = spec.signed_distance(p) > tol;
                if inside {
                    dof_of.push(Some(dof_nodes.len()));
                    dof_nodes.push(points.len());
                } else {
                    dof_of.push(None);
                }
                points.push(p);
                interior.push(inside);
            }
        }
        if dof_nodes.is_empty() {
            return Err(Error::DegenerateGrid(format!("no interior node at h = {h}")));
        }
        Ok(Grid {
            spec,
            h,
            collar,
            dims,
            origin,
            points,
            interior,
            dof_nodes,
            dof_of,
        })
    }

    pub fn descriptor(&self) -> GridDescriptor {
        GridDescriptor {
            spec: self.spec.clone(),
            h: self.h,
            collar: self.collar,
        }
    }

    pub fn spec(&self) -> &DomainSpec {
        &self.spec
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn dim(&self) -> usize {
        self.spec.dim()
    }

    /// Lattice sizes along each axis (`dims[1] == 1` in 1D).
    pub fn dims(&self) -> [usize; 2] {
        self.dims
    }

    pub fn origin(&self) -> [f64; 2] {
        self.origin
    }

    pub fn cell_measure(&self) -> f64 {
        self.h.powi(self.dim() as i32)
    }

    pub fn dof(&self) -> usize {
        self.dof_nodes.len()
    }

    pub fn lattice_len(&self) -> usize {
        self.points.len()
    }

    /// All lattice nodes in lexicographic order.
    pub fn points(&self) -> &[[f64; 2]] {
        &self.points
    }

    pub fn interior_mask(&self) -> &[bool] {
        &self.interior
    }

    /// Lattice index of each degree of freedom.
    pub fn dof_nodes(&self) -> &[usize] {
        &self.dof_nodes
    }

    pub fn dof_of(&self, lattice: usize) -> Option<usize> {
        self.dof_of[lattice]
    }

    pub fn dof_point(&self, k: usize) -> [f64; 2] {
        self.points[self.dof_nodes[k]]
    }

    pub fn dof_points(&self) -> impl Iterator<Item = [f64; 2]> + '_ {
        self.dof_nodes.iter().map(|&l| self.points[l])
    }

    pub fn lattice_index(&self, i: usize, j: usize) -> usize {
        i * self.dims[1] + j
    }

    pub fn lattice_coords(&self, l: usize) -> (usize, usize) {
        (l / self.dims[1], l % self.dims[1])
    }

    /// Neighbor of lattice node `l` shifted by `step` along `axis`, if it
    /// lies on the lattice.
    pub fn neighbor(&self, l: usize, axis: usize, step: isize) -> Option<usize> {
        let (i, j) = self.lattice_coords(l);
        let mut c = [i as isize, j as isize];
        c[axis] += step;
        if c[axis] < 0 || c[axis] >= self.dims[axis] as isize {
            return None;
        }
        Some(self.lattice_index(c[0] as usize, c[1] as usize))
    }

    /// Box covered by the union of all lattice cells.
    pub fn lattice_box(&self) -> ([f64; 2], [f64; 2]) {
        let half = 0.5 * self.h;
        let lo = [self.origin[0] - half, self.origin[1] - half];
        let hi = [
            self.origin[0] + (self.dims[0] - 1) as f64 * self.h + half,
            self.origin[1] + (self.dims[1] - 1) as f64 * self.h + half,
        ];
        (lo, hi)
    }

    /// Lift a dof vector to the lattice, with zeros on exterior nodes.
    pub fn extend(&self, u: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.lattice_len()];
        for (k, &l) in self.dof_nodes.iter().enumerate() {
            out[l] = u[k];
        }
        out
    }

    pub fn restrict(&self, lattice: &[f64]) -> Vec<f64> {
        self.dof_nodes.iter().map(|&l| lattice[l]).collect()
    }

    pub fn sample<F: Fn([f64; 2]) -> f64>(&self, f: F) -> Vec<f64> {
        self.dof_points().map(f).collect()
    }

    pub fn sample_lattice<F: Fn([f64; 2]) -> f64>(&self, f: F) -> Vec<f64> {
        self.points.iter().map(|&p| f(p)).collect()
    }

    /// Sum of interior cell measures, the discrete area of the domain.
    pub fn discrete_measure(&self) -> f64 {
        self.dof() as f64 * self.cell_measure()
    }

    /// Interior nodes with distance to the boundary strictly below `eps`.
    pub fn boundary_strip(&self, eps: f64) -> Result<StripMask> {
        if !(eps > 0.0) {
            return Err(Error::InvalidParameter(format!("strip width {eps} must be positive")));
        }
        let mask: Vec<bool> = self.dof_points().map(|p| self.spec.signed_distance(p) < eps).collect();
        let count = mask.iter().filter(|&&b| b).count();
        Ok(StripMask {
            mask,
            count,
            covers_interior: eps >= self.spec.inradius(),
        })
    }

    /// Interior nodes inside the concentric copy of the domain scaled by
    /// `scale`.
    pub fn probe_mask(&self, scale: f64) -> Vec<bool> {
        let inner = self.spec.shrink(scale);
        self.dof_points().map(|p| inner.contains(p)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_disc() -> DomainSpec {
        DomainSpec::Disc {
            center: [0.0, 0.0],
            radius: 1.0,
        }
    }

    #[test]
    fn interval_quarter_spacing() {
        let g = Grid::build(DomainSpec::Interval { bounds: [0.0, 1.0] }, 0.25).unwrap();
        let xs: Vec<f64> = g.dof_points().map(|p| p[0]).collect();
        assert_eq!(xs, vec![0.25, 0.5, 0.75]);
        assert_eq!(g.dims(), [5, 1]);
    }

    #[test]
    fn rectangle_half_spacing() {
        let g = Grid::build(
            DomainSpec::Rectangle {
                x: [0.0, 1.0],
                y: [0.0, 1.0],
            },
            0.5,
        )
        .unwrap();
        assert_eq!(g.dof(), 1);
        assert_eq!(g.dof_point(0), [0.5, 0.5]);
    }

    #[test]
    fn disc_nodes_match_enumeration() {
        let h = 0.5;
        let g = Grid::build(unit_disc(), h).unwrap();
        let mut expected = 0;
        for i in -4i32..=4 {
            for j in -4i32..=4 {
                let (x, y) = (i as f64 * h, j as f64 * h);
                if x * x + y * y < 1.0 {
                    expected += 1;
                }
            }
        }
        assert_eq!(expected, 9);
        assert_eq!(g.dof(), expected);
        for p in g.dof_points() {
            assert!(p[0] * p[0] + p[1] * p[1] < 1.0);
        }
    }

    #[test]
    fn too_coarse_is_degenerate() {
        let r = Grid::build(DomainSpec::Interval { bounds: [0.0, 1.0] }, 1.5);
        assert!(matches!(r, Err(Error::DegenerateGrid(_))));
        assert!(Grid::build(DomainSpec::Interval { bounds: [0.0, 1.0] }, -0.1).is_err());
    }

    #[test]
    fn non_dividing_spacing_keeps_exterior_ring() {
        let g = Grid::build(DomainSpec::Interval { bounds: [0.0, 1.0] }, 0.3).unwrap();
        let xs: Vec<f64> = g.dof_points().map(|p| p[0]).collect();
        assert_eq!(xs.len(), 3);
        let last = *g.points().last().unwrap();
        assert!(last[0] >= 1.0);
    }

    #[test]
    fn interval_strip() {
        let g = Grid::build(DomainSpec::Interval { bounds: [0.0, 1.0] }, 0.05).unwrap();
        let s = g.boundary_strip(0.3).unwrap();
        for (k, p) in g.dof_points().enumerate() {
            let expect = p[0] < 0.3 || p[0] > 0.7;
            // Nodes exactly at 0.3 / 0.7 are ambiguous in floating point.
            if (p[0] - 0.3).abs() > 1e-9 && (p[0] - 0.7).abs() > 1e-9 {
                assert_eq!(s.mask[k], expect, "x = {}", p[0]);
            }
        }
        assert!(!s.covers_interior);
        assert!(g.boundary_strip(0.6).unwrap().covers_interior);
    }

    #[test]
    fn rectangle_and_disc_strips() {
        let g = Grid::build(
            DomainSpec::Rectangle {
                x: [0.0, 1.0],
                y: [0.0, 1.0],
            },
            1.0 / 32.0,
        )
        .unwrap();
        let s = g.boundary_strip(0.1).unwrap();
        for (k, p) in g.dof_points().enumerate() {
            let d = p[0].min(1.0 - p[0]).min(p[1]).min(1.0 - p[1]);
            assert_eq!(s.mask[k], d < 0.1);
        }
        let d = Grid::build(unit_disc(), 0.05).unwrap();
        let s = d.boundary_strip(0.2).unwrap();
        for (k, p) in d.dof_points().enumerate() {
            let r = (p[0] * p[0] + p[1] * p[1]).sqrt();
            if (r - 0.8).abs() > 1e-9 {
                assert_eq!(s.mask[k], r > 0.8 && r < 1.0);
            }
        }
    }

    #[test]
    fn disc_area_converges_first_order() {
        let errors: Vec<f64> = [0.1, 0.05, 0.025]
            .iter()
            .map(|&h| {
                let g = Grid::build(unit_disc(), h).unwrap();
                (g.discrete_measure() - std::f64::consts::PI).abs()
            })
            .collect();
        // First order or better: the error is bounded by the boundary
        // layer area 2*pi*R*h.
        for (e, h) in errors.iter().zip([0.1, 0.05, 0.025]) {
            assert!(*e <= 2.0 * std::f64::consts::PI * h, "error {e} at h {h}");
        }
        assert!(errors[2] < errors[0]);
    }

    #[test]
    fn builds_are_bit_identical() {
        let a = Grid::build(unit_disc(), 0.037).unwrap();
        let b = Grid::build(unit_disc(), 0.037).unwrap();
        assert_eq!(a.points().len(), b.points().len());
        for (p, q) in a.points().iter().zip(b.points()) {
            assert_eq!(p[0].to_bits(), q[0].to_bits());
            assert_eq!(p[1].to_bits(), q[1].to_bits());
        }
        assert_eq!(a.interior_mask(), b.interior_mask());
    }

    #[test]
    fn descriptor_round_trip() {
        let g = Grid::with_collar(unit_disc(), 0.1, 2).unwrap();
        let json = serde_json::to_string(&g.descriptor()).unwrap();
        let d: GridDescriptor = serde_json::from_str(&json).unwrap();
        let g2 = Grid::from_descriptor(&d).unwrap();
        assert_eq!(g.points(), g2.points());
        assert_eq!(g.dims(), g2.dims());
    }

    #[test]
    fn collar_keeps_interior() {
        let a = Grid::build(unit_disc(), 0.1).unwrap();
        let b = Grid::with_collar(unit_disc(), 0.1, 3).unwrap();
        assert_eq!(a.dof(), b.dof());
        assert_eq!(b.dims()[0], a.dims()[0] + 6);
        for k in 0..a.dof() {
            let (p, q) = (a.dof_point(k), b.dof_point(k));
            assert!((p[0] - q[0]).abs() < 1e-12 && (p[1] - q[1]).abs() < 1e-12);
        }
    }

    #[test]
    fn probe_masks_are_nested() {
        let g = Grid::build(unit_disc(), 0.05).unwrap();
        let half = g.probe_mask(0.5);
        let three = g.probe_mask(0.75);
        assert!(half.iter().zip(&three).all(|(&a, &b)| !a || b));
        assert!(half.iter().any(|&b| b));
    }
}
