//! Model manifolds with closed-form metric data.
//!
//! Every grid is cell-centred: a node carries the exact volume of its cell,
//! and the Laplacian is assembled from face fluxes so that the discrete Green
//! identity holds to rounding. Warped surfaces use a staggered radial grid
//! (first node at h/2) so no node sits on a pole; finite differences across a
//! pole use the node at the same radius on the opposite meridian.

mod ops;
mod warp;

use std::f64::consts::PI;
use std::sync::Arc;

use crate::error::{LabError, Result};

pub use ops::*;
pub use warp::WarpProfile;

/// What lies at r = R on a warped surface.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OuterEnd {
    /// φ(R) = 0, φ'(R) = −1: the surface closes up (sphere-like).
    Pole,
    /// Neumann boundary circle at r = R.
    Boundary,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ManifoldKind {
    Circle { length: f64 },
    FlatTorus { lx: f64, ly: f64 },
    WarpedSurface { warp: WarpProfile, radius: f64, outer: OuterEnd },
    /// Axis-aligned box centred at the origin, Neumann walls.
    EuclideanBox { lx: f64, ly: f64 },
    /// Flat disc centred at the origin, Neumann rim.
    EuclideanDisc { radius: f64 },
}

impl ManifoldKind {
    pub fn unit_sphere() -> Self {
        ManifoldKind::WarpedSurface { warp: WarpProfile::unit_sphere(), radius: PI, outer: OuterEnd::Pole }
    }

    pub fn name(&self) -> &'static str {
        match self {
            ManifoldKind::Circle { .. } => "circle",
            ManifoldKind::FlatTorus { .. } => "torus",
            ManifoldKind::WarpedSurface { .. } => "warped",
            ManifoldKind::EuclideanBox { .. } => "box",
            ManifoldKind::EuclideanDisc { .. } => "disc",
        }
    }
}

/// A reference point for distances and heat kernels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BasePoint {
    Node(usize),
    /// The pole r = 0 of a warped surface or disc.
    Pole,
    /// Cartesian coordinates on a flat grid.
    Point([f64; 2]),
}

/// Flux coupling between two adjacent cells: contributes coef·(f_b − f_a) to the
/// divergence at `a` and the negative at `b`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Face {
    pub a: usize,
    pub b: usize,
    pub coef: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundaryNode {
    pub node: usize,
    /// Outward unit normal in the node's orthonormal frame.
    pub normal: [f64; 2],
    /// Second fundamental form of the boundary curve (geodesic curvature for n = 2).
    pub second_fundamental_form: f64,
    /// Boundary length carried by this node.
    pub area: f64,
}

#[derive(Debug, Clone)]
pub struct ManifoldGrid {
    pub kind: ManifoldKind,
    pub dim: usize,
    pub shape: [usize; 2],
    pub spacing: [f64; 2],
    pub axis0: Vec<f64>,
    pub axis1: Vec<f64>,
    pub node_volumes: Vec<f64>,
    pub faces: Vec<Face>,
    pub boundary: Vec<BoundaryNode>,
    /// Per node [Γ^0_11, Γ^1_01] in coordinate frame (zero on flat grids).
    pub christoffel: Vec<[f64; 2]>,
    /// Per radial index: φ, φ', Gauss curvature. Empty on flat grids.
    warp_values: Vec<[f64; 3]>,
}

impl ManifoldGrid {
    pub fn len(&self) -> usize {
        self.node_volumes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.node_volumes.is_empty()
    }

    pub fn index(&self, i0: usize, i1: usize) -> usize {
        i0 * self.shape[1] + i1
    }

    pub fn coords(&self, node: usize) -> (usize, usize) {
        (node / self.shape[1], node % self.shape[1])
    }

    pub fn total_volume(&self) -> f64 {
        self.node_volumes.iter().sum()
    }

    pub fn is_closed(&self) -> bool {
        self.boundary.is_empty()
            && !matches!(self.kind, ManifoldKind::EuclideanBox { .. } | ManifoldKind::EuclideanDisc { .. })
    }

    pub fn is_warped(&self) -> bool {
        !self.warp_values.is_empty()
    }

    /// True for grids whose metric is flat (circle, torus, box, disc).
    pub fn is_flat(&self) -> bool {
        match &self.kind {
            ManifoldKind::WarpedSurface { warp, .. } => matches!(warp, WarpProfile::Linear),
            _ => true,
        }
    }

    /// Characteristic spacing used for resolution floors (radial spacing on warped grids).
    pub fn spacing_scale(&self) -> f64 {
        if self.is_warped() || self.dim == 1 {
            self.spacing[0]
        } else {
            self.spacing[0].max(self.spacing[1])
        }
    }

    /// φ, φ' at a node (1, 0 on flat Cartesian grids).
    pub fn warp_at(&self, node: usize) -> (f64, f64) {
        if self.is_warped() {
            let w = self.warp_values[node / self.shape[1]];
            (w[0], w[1])
        } else {
            (1.0, 0.0)
        }
    }

    /// Gauss curvature (zero for n = 1 and flat grids).
    pub fn curvature_at(&self, node: usize) -> f64 {
        if self.is_warped() {
            self.warp_values[node / self.shape[1]][2]
        } else {
            0.0
        }
    }

    /// Node index after resolving ghost offsets: periodic wrap, Neumann mirror, or
    /// reflection across a pole onto the opposite meridian.
    pub fn node_at(&self, i0: isize, i1: isize) -> usize {
        let [n0, n1] = [self.shape[0] as isize, self.shape[1] as isize];
        let mirror = |i: isize, n: isize| {
            if i < 0 {
                -i - 1
            } else if i >= n {
                2 * n - 1 - i
            } else {
                i
            }
        };
        let (a, b) = match &self.kind {
            ManifoldKind::Circle { .. } => (i0.rem_euclid(n0), 0),
            ManifoldKind::FlatTorus { .. } => (i0.rem_euclid(n0), i1.rem_euclid(n1)),
            ManifoldKind::EuclideanBox { .. } => (mirror(i0, n0), mirror(i1, n1)),
            ManifoldKind::WarpedSurface { .. } | ManifoldKind::EuclideanDisc { .. } => {
                let outer_pole = matches!(
                    self.kind,
                    ManifoldKind::WarpedSurface { outer: OuterEnd::Pole, .. }
                );
                if i0 < 0 {
                    (-i0 - 1, (i1 + n1 / 2).rem_euclid(n1))
                } else if i0 >= n0 {
                    let shift = if outer_pole { n1 / 2 } else { 0 };
                    (2 * n0 - 1 - i0, (i1 + shift).rem_euclid(n1))
                } else {
                    (i0, i1.rem_euclid(n1))
                }
            }
        };
        (a * n1 + b) as usize
    }

    /// Cartesian embedding of a node for flat grids (polar grids map to the plane).
    pub fn cartesian(&self, node: usize) -> [f64; 2] {
        let (i, j) = self.coords(node);
        match &self.kind {
            ManifoldKind::EuclideanDisc { .. }
            | ManifoldKind::WarpedSurface { warp: WarpProfile::Linear, .. } => {
                let (r, th) = (self.axis0[i], self.axis1[j]);
                [r * th.cos(), r * th.sin()]
            }
            _ => [self.axis0[i], self.axis1[j]],
        }
    }

    /// Mask of nodes at least `band` cells away from any Neumann boundary.
    pub fn interior_mask(&self, band: usize) -> Vec<bool> {
        let [n0, n1] = self.shape;
        (0..self.len())
            .map(|k| {
                let (i, j) = self.coords(k);
                match &self.kind {
                    ManifoldKind::EuclideanBox { .. } => {
                        i >= band && i + band < n0 && j >= band && j + band < n1
                    }
                    ManifoldKind::EuclideanDisc { .. }
                    | ManifoldKind::WarpedSurface { outer: OuterEnd::Boundary, .. } => i + band < n0,
                    _ => true,
                }
            })
            .collect()
    }
}

/// Real values on the nodes of a grid.
#[derive(Debug, Clone)]
pub struct ScalarField {
    pub values: Vec<f64>,
    pub grid: Arc<ManifoldGrid>,
}

impl ScalarField {
    pub fn new(grid: Arc<ManifoldGrid>, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(LabError::LengthMismatch { expected: grid.len(), got: values.len() });
        }
        if let Some(k) = values.iter().position(|v| !v.is_finite()) {
            return Err(LabError::DomainError(format!("non-finite value at node {k}")));
        }
        Ok(Self { values, grid })
    }

    pub fn from_fn(grid: &Arc<ManifoldGrid>, f: impl Fn(usize) -> f64) -> Self {
        let values = (0..grid.len()).map(f).collect();
        Self { values, grid: Arc::clone(grid) }
    }

    pub fn constant(grid: &Arc<ManifoldGrid>, c: f64) -> Self {
        Self { values: vec![c; grid.len()], grid: Arc::clone(grid) }
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self { values: self.values.iter().map(|&v| f(v)).collect(), grid: Arc::clone(&self.grid) }
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn is_positive(&self) -> bool {
        self.values.iter().all(|&v| v > 0.0)
    }
}

/// Builds a grid for a manifold descriptor at the given per-axis resolution.
/// `resolution[1]` is ignored for the circle.
pub fn build_grid(kind: ManifoldKind, resolution: [usize; 2]) -> Result<ManifoldGrid> {
    let dim = if matches!(kind, ManifoldKind::Circle { .. }) { 1 } else { 2 };
    let shape = if dim == 1 { [resolution[0], 1] } else { resolution };
    if shape[0] < 8 || (dim == 2 && shape[1] < 8) {
        return Err(LabError::InvalidResolution(format!("need at least 8 nodes per axis, got {shape:?}")));
    }
    let positive = |name: &str, v: f64| {
        if v > 0.0 && v.is_finite() {
            Ok(())
        } else {
            Err(LabError::InvalidMetric(format!("{name} must be positive, got {v}")))
        }
    };
    match &kind {
        ManifoldKind::Circle { length } => {
            positive("length", *length)?;
            Ok(periodic_grid(kind.clone(), shape, [*length, 1.0], dim))
        }
        ManifoldKind::FlatTorus { lx, ly } => {
            positive("lx", *lx)?;
            positive("ly", *ly)?;
            Ok(periodic_grid(kind.clone(), shape, [*lx, *ly], dim))
        }
        ManifoldKind::EuclideanBox { lx, ly } => {
            positive("lx", *lx)?;
            positive("ly", *ly)?;
            Ok(box_grid(kind.clone(), shape, [*lx, *ly]))
        }
        ManifoldKind::EuclideanDisc { radius } => {
            positive("radius", *radius)?;
            warped_grid(kind.clone(), &WarpProfile::Linear, *radius, OuterEnd::Boundary, shape)
        }
        ManifoldKind::WarpedSurface { warp, radius, outer } => {
            positive("radius", *radius)?;
            warped_grid(kind.clone(), warp, *radius, *outer, shape)
        }
    }
}

fn periodic_grid(kind: ManifoldKind, shape: [usize; 2], lengths: [f64; 2], dim: usize) -> ManifoldGrid {
    let h = [lengths[0] / shape[0] as f64, if dim == 1 { 1.0 } else { lengths[1] / shape[1] as f64 }];
    let axis0 = (0..shape[0]).map(|i| i as f64 * h[0]).collect();
    let axis1 = if dim == 1 { vec![0.0] } else { (0..shape[1]).map(|j| j as f64 * h[1]).collect() };
    let n = shape[0] * shape[1];
    let cell = if dim == 1 { h[0] } else { h[0] * h[1] };
    let mut faces = Vec::with_capacity(dim * n);
    for i in 0..shape[0] {
        for j in 0..shape[1] {
            let a = i * shape[1] + j;
            let right = ((i + 1) % shape[0]) * shape[1] + j;
            let c0 = if dim == 1 { 1.0 / h[0] } else { h[1] / h[0] };
            faces.push(Face { a, b: right, coef: c0 });
            if dim == 2 {
                let up = i * shape[1] + (j + 1) % shape[1];
                faces.push(Face { a, b: up, coef: h[0] / h[1] });
            }
        }
    }
    ManifoldGrid {
        kind,
        dim,
        shape,
        spacing: h,
        axis0,
        axis1,
        node_volumes: vec![cell; n],
        faces,
        boundary: Vec::new(),
        christoffel: vec![[0.0; 2]; n],
        warp_values: Vec::new(),
    }
}

fn box_grid(kind: ManifoldKind, shape: [usize; 2], lengths: [f64; 2]) -> ManifoldGrid {
    let h = [lengths[0] / shape[0] as f64, lengths[1] / shape[1] as f64];
    let axis0 = (0..shape[0]).map(|i| -0.5 * lengths[0] + (i as f64 + 0.5) * h[0]).collect();
    let axis1 = (0..shape[1]).map(|j| -0.5 * lengths[1] + (j as f64 + 0.5) * h[1]).collect();
    let n = shape[0] * shape[1];
    let mut faces = Vec::with_capacity(2 * n);
    let mut boundary = Vec::new();
    for i in 0..shape[0] {
        for j in 0..shape[1] {
            let a = i * shape[1] + j;
            if i + 1 < shape[0] {
                faces.push(Face { a, b: a + shape[1], coef: h[1] / h[0] });
            }
            if j + 1 < shape[1] {
                faces.push(Face { a, b: a + 1, coef: h[0] / h[1] });
            }
            let mut wall = |normal: [f64; 2], area: f64| {
                boundary.push(BoundaryNode { node: a, normal, second_fundamental_form: 0.0, area })
            };
            if i == 0 {
                wall([-1.0, 0.0], h[1]);
            }
            if i + 1 == shape[0] {
                wall([1.0, 0.0], h[1]);
            }
            if j == 0 {
                wall([0.0, -1.0], h[0]);
            }
            if j + 1 == shape[1] {
                wall([0.0, 1.0], h[0]);
            }
        }
    }
    ManifoldGrid {
        kind,
        dim: 2,
        shape,
        spacing: h,
        axis0,
        axis1,
        node_volumes: vec![h[0] * h[1]; n],
        faces,
        boundary,
        christoffel: vec![[0.0; 2]; n],
        warp_values: Vec::new(),
    }
}

fn warped_grid(
    kind: ManifoldKind,
    warp: &WarpProfile,
    radius: f64,
    outer: OuterEnd,
    shape: [usize; 2],
) -> Result<ManifoldGrid> {
    let [nr, nt] = shape;
    if nt % 2 != 0 {
        return Err(LabError::InvalidResolution(format!("angular resolution must be even, got {nt}")));
    }
    if warp.value(0.0).abs() > 1e-12 || (warp.first_derivative(0.0) - 1.0).abs() > 1e-12 {
        return Err(LabError::PoleMismatch(format!(
            "need φ(0) = 0 and φ'(0) = 1, got φ(0) = {}, φ'(0) = {}",
            warp.value(0.0),
            warp.first_derivative(0.0)
        )));
    }
    if outer == OuterEnd::Pole
        && (warp.value(radius).abs() > 1e-12 || (warp.first_derivative(radius) + 1.0).abs() > 1e-12)
    {
        return Err(LabError::PoleMismatch(format!(
            "outer pole needs φ(R) = 0 and φ'(R) = −1, got {} and {}",
            warp.value(radius),
            warp.first_derivative(radius)
        )));
    }
    let hr = radius / nr as f64;
    let dth = 2.0 * PI / nt as f64;
    // φ must be positive on the open interval; sample finely between nodes.
    let samples = 8 * nr;
    for s in 1..samples {
        let r = radius * s as f64 / samples as f64;
        if !(warp.value(r) > 0.0) {
            return Err(LabError::InvalidMetric(format!("warp profile nonpositive at r = {r}")));
        }
    }
    if outer == OuterEnd::Boundary && !(warp.value(radius) > 0.0) {
        return Err(LabError::InvalidMetric("warp profile must be positive on the boundary".into()));
    }
    let axis0: Vec<f64> = (0..nr).map(|i| (i as f64 + 0.5) * hr).collect();
    let axis1: Vec<f64> = (0..nt).map(|j| j as f64 * dth).collect();
    let warp_values: Vec<[f64; 3]> =
        axis0.iter().map(|&r| [warp.value(r), warp.first_derivative(r), warp.gauss_curvature(r)]).collect();

    let n = nr * nt;
    let mut node_volumes = Vec::with_capacity(n);
    let mut christoffel = Vec::with_capacity(n);
    for (i, &r) in axis0.iter().enumerate() {
        let cell = dth * warp.integral(r - 0.5 * hr, r + 0.5 * hr);
        let [phi, dphi, _] = warp_values[i];
        for _ in 0..nt {
            node_volumes.push(cell);
            christoffel.push([-phi * dphi, dphi / phi]);
        }
    }
    let mut faces = Vec::with_capacity(2 * n);
    for i in 0..nr {
        let phi = warp_values[i][0];
        for j in 0..nt {
            let a = i * nt + j;
            if i + 1 < nr {
                let face_r = (i as f64 + 1.0) * hr;
                faces.push(Face { a, b: a + nt, coef: warp.value(face_r) * dth / hr });
            }
            faces.push(Face { a, b: i * nt + (j + 1) % nt, coef: hr / (phi * dth) });
        }
    }
    let mut boundary = Vec::new();
    if outer == OuterEnd::Boundary {
        let phi_r = warp.value(radius);
        let ii = warp.first_derivative(radius) / phi_r;
        for j in 0..nt {
            boundary.push(BoundaryNode {
                node: (nr - 1) * nt + j,
                normal: [1.0, 0.0],
                second_fundamental_form: ii,
                area: phi_r * dth,
            });
        }
    }
    Ok(ManifoldGrid {
        kind,
        dim: 2,
        shape,
        spacing: [hr, dth],
        axis0,
        axis1,
        node_volumes,
        faces,
        boundary,
        christoffel,
        warp_values,
    })
}
