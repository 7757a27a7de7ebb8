use std::sync::Arc;

use super::{BasePoint, ManifoldGrid, ManifoldKind, OuterEnd, ScalarField};
use crate::error::{LabError, Result};

/// Divergence-form Laplace–Beltrami operator on raw node values.
pub fn laplacian_values(grid: &ManifoldGrid, v: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; grid.len()];
    for f in &grid.faces {
        let d = f.coef * (v[f.b] - v[f.a]);
        out[f.a] += d;
        out[f.b] -= d;
    }
    for (o, vol) in out.iter_mut().zip(&grid.node_volumes) {
        *o /= vol;
    }
    out
}

pub fn laplace_beltrami(grid: &Arc<ManifoldGrid>, field: &ScalarField) -> ScalarField {
    ScalarField { values: laplacian_values(grid, &field.values), grid: Arc::clone(grid) }
}

/// Dirichlet form Σ_faces c·(δf)², equal to ∫|∇f|² dv and to −∫f Δf dv.
pub fn dirichlet_energy(grid: &ManifoldGrid, v: &[f64]) -> f64 {
    grid.faces.iter().map(|f| f.coef * (v[f.b] - v[f.a]).powi(2)).sum()
}

/// Node-wise ⟨∇f, ∇g⟩ obtained by splitting each face's flux product evenly between
/// its two cells; integrates exactly to the Dirichlet bilinear form.
pub fn inner_gradient_values(grid: &ManifoldGrid, f: &[f64], g: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; grid.len()];
    for face in &grid.faces {
        let p = 0.5 * face.coef * (f[face.b] - f[face.a]) * (g[face.b] - g[face.a]);
        out[face.a] += p;
        out[face.b] += p;
    }
    for (o, vol) in out.iter_mut().zip(&grid.node_volumes) {
        *o /= vol;
    }
    out
}

/// |∇f|² in the Green-consistent node form (nonnegative by construction).
pub fn gradient_sq(grid: &Arc<ManifoldGrid>, field: &ScalarField) -> ScalarField {
    let v = &field.values;
    ScalarField { values: inner_gradient_values(grid, v, v), grid: Arc::clone(grid) }
}

/// Centred first and second coordinate differences at one node.
struct Stencil {
    d0: f64,
    d1: f64,
    d00: f64,
    d01: f64,
    d11: f64,
}

fn stencil(grid: &ManifoldGrid, v: &[f64], node: usize) -> Stencil {
    let (i, j) = grid.coords(node);
    let (i, j) = (i as isize, j as isize);
    let at = |a: isize, b: isize| v[grid.node_at(i + a, j + b)];
    let [h0, h1] = grid.spacing;
    let c = v[node];
    let d0 = (at(1, 0) - at(-1, 0)) / (2.0 * h0);
    let d00 = (at(1, 0) - 2.0 * c + at(-1, 0)) / (h0 * h0);
    if grid.dim == 1 {
        return Stencil { d0, d1: 0.0, d00, d01: 0.0, d11: 0.0 };
    }
    let d1 = (at(0, 1) - at(0, -1)) / (2.0 * h1);
    let d11 = (at(0, 1) - 2.0 * c + at(0, -1)) / (h1 * h1);
    let d01 = (at(1, 1) - at(1, -1) - at(-1, 1) + at(-1, -1)) / (4.0 * h0 * h1);
    Stencil { d0, d1, d00, d01, d11 }
}

/// Centred gradient in the node's orthonormal frame (e_r, e_θ/φ on warped grids).
pub fn gradient_frame_values(grid: &ManifoldGrid, v: &[f64]) -> Vec<[f64; 2]> {
    (0..grid.len())
        .map(|k| {
            let s = stencil(grid, v, k);
            let (phi, _) = grid.warp_at(k);
            [s.d0, s.d1 / phi]
        })
        .collect()
}

/// |∇f|² from centred differences (exact on quadratics; not Green-consistent).
pub fn gradient_sq_centered(grid: &ManifoldGrid, v: &[f64]) -> Vec<f64> {
    gradient_frame_values(grid, v).iter().map(|g| g[0] * g[0] + g[1] * g[1]).collect()
}

/// Covariant Hessian in the orthonormal frame as [H_11, H_12, H_22] using the
/// closed-form Christoffel symbols of the grid.
pub fn hessian_frame_values(grid: &ManifoldGrid, v: &[f64]) -> Vec<[f64; 3]> {
    (0..grid.len())
        .map(|k| {
            let s = stencil(grid, v, k);
            if grid.dim == 1 {
                return [s.d00, 0.0, 0.0];
            }
            let (phi, _) = grid.warp_at(k);
            let [g_r_thth, g_th_rth] = grid.christoffel[k];
            let h_rr = s.d00;
            let h_rth = s.d01 - g_th_rth * s.d1;
            let h_thth = s.d11 - g_r_thth * s.d0;
            [h_rr, h_rth / phi, h_thth / (phi * phi)]
        })
        .collect()
}

/// |Hess f − c·g|² pointwise.
pub fn hessian_deviation_sq(grid: &ManifoldGrid, v: &[f64], c: f64) -> Vec<f64> {
    hessian_frame_values(grid, v)
        .iter()
        .map(|h| {
            if grid.dim == 1 {
                (h[0] - c).powi(2)
            } else {
                (h[0] - c).powi(2) + 2.0 * h[1] * h[1] + (h[2] - c).powi(2)
            }
        })
        .collect()
}

/// |Hess f − g/(2τ)|² pointwise.
pub fn hessian_quadratic_values(grid: &ManifoldGrid, v: &[f64], tau: f64) -> Vec<f64> {
    hessian_deviation_sq(grid, v, 0.5 / tau)
}

/// Laplacian as the trace of the centred Hessian (pointwise companion of `laplacian_values`).
pub fn laplacian_centered(grid: &ManifoldGrid, v: &[f64]) -> Vec<f64> {
    hessian_frame_values(grid, v)
        .iter()
        .map(|h| if grid.dim == 1 { h[0] } else { h[0] + h[2] })
        .collect()
}

pub fn hessian_quadratic(grid: &Arc<ManifoldGrid>, field: &ScalarField, tau: f64) -> Result<ScalarField> {
    if !(tau > 0.0) {
        return Err(LabError::InvalidTau(tau));
    }
    Ok(ScalarField { values: hessian_quadratic_values(grid, &field.values, tau), grid: Arc::clone(grid) })
}

/// Ric(∇f, ∇f) = K|∇f|² for surfaces, 0 in dimension one.
pub fn ricci_quadratic_values(grid: &ManifoldGrid, v: &[f64]) -> Vec<f64> {
    if grid.dim == 1 || !grid.is_warped() {
        return vec![0.0; grid.len()];
    }
    gradient_frame_values(grid, v)
        .iter()
        .enumerate()
        .map(|(k, g)| grid.curvature_at(k) * (g[0] * g[0] + g[1] * g[1]))
        .collect()
}

pub fn ricci_quadratic(grid: &Arc<ManifoldGrid>, field: &ScalarField) -> ScalarField {
    ScalarField { values: ricci_quadratic_values(grid, &field.values), grid: Arc::clone(grid) }
}

pub fn integrate_values(grid: &ManifoldGrid, v: &[f64]) -> f64 {
    v.iter().zip(&grid.node_volumes).map(|(a, w)| a * w).sum()
}

pub fn integrate(grid: &ManifoldGrid, field: &ScalarField) -> f64 {
    integrate_values(grid, &field.values)
}

fn periodic_gap(a: f64, b: f64, period: f64) -> f64 {
    let d = (a - b).rem_euclid(period);
    d.min(period - d)
}

/// Coordinates of a base point on grids where distances are computed in a chart.
fn base_coordinates(grid: &ManifoldGrid, base: BasePoint) -> Result<[f64; 2]> {
    match base {
        BasePoint::Node(k) if k < grid.len() => Ok(grid.cartesian(k)),
        BasePoint::Node(k) => Err(LabError::UnsupportedBase(format!("node {k} out of range"))),
        BasePoint::Point(p) => Ok(p),
        BasePoint::Pole => Ok([0.0, 0.0]),
    }
}

/// Geodesic distance from the base point to every node.
pub fn distance_values(grid: &ManifoldGrid, base: BasePoint) -> Result<Vec<f64>> {
    match &grid.kind {
        ManifoldKind::Circle { length } => {
            if base == BasePoint::Pole {
                return Err(LabError::UnsupportedBase("circle has no pole".into()));
            }
            let b = base_coordinates(grid, base)?;
            Ok(grid.axis0.iter().map(|&x| periodic_gap(x, b[0], *length)).collect())
        }
        ManifoldKind::FlatTorus { lx, ly } => {
            if base == BasePoint::Pole {
                return Err(LabError::UnsupportedBase("torus has no pole".into()));
            }
            let b = base_coordinates(grid, base)?;
            Ok((0..grid.len())
                .map(|k| {
                    let (i, j) = grid.coords(k);
                    periodic_gap(grid.axis0[i], b[0], *lx).hypot(periodic_gap(grid.axis1[j], b[1], *ly))
                })
                .collect())
        }
        ManifoldKind::EuclideanBox { .. } => {
            if base == BasePoint::Pole {
                return Err(LabError::UnsupportedBase("box has no pole".into()));
            }
            let b = base_coordinates(grid, base)?;
            Ok((0..grid.len())
                .map(|k| {
                    let p = grid.cartesian(k);
                    (p[0] - b[0]).hypot(p[1] - b[1])
                })
                .collect())
        }
        ManifoldKind::EuclideanDisc { .. } | ManifoldKind::WarpedSurface { .. } => {
            if base == BasePoint::Pole {
                return Ok((0..grid.len()).map(|k| grid.axis0[grid.coords(k).0]).collect());
            }
            if !grid.is_flat() {
                return Err(LabError::UnsupportedBase(
                    "distances on a curved warped surface are only available from the pole".into(),
                ));
            }
            let b = base_coordinates(grid, base)?;
            Ok((0..grid.len())
                .map(|k| {
                    let p = grid.cartesian(k);
                    (p[0] - b[0]).hypot(p[1] - b[1])
                })
                .collect())
        }
    }
}

pub fn distance_field(grid: &Arc<ManifoldGrid>, base: BasePoint) -> Result<ScalarField> {
    Ok(ScalarField { values: distance_values(grid, base)?, grid: Arc::clone(grid) })
}

/// Distance from each node to the cut locus of the base point (infinite when there is none).
pub fn cut_locus_distance(grid: &ManifoldGrid, base: BasePoint) -> Result<Vec<f64>> {
    match &grid.kind {
        ManifoldKind::Circle { length } => {
            Ok(distance_values(grid, base)?.into_iter().map(|d| 0.5 * length - d).collect())
        }
        ManifoldKind::FlatTorus { lx, ly } => {
            let b = base_coordinates(grid, base)?;
            Ok((0..grid.len())
                .map(|k| {
                    let (i, j) = grid.coords(k);
                    let gx = 0.5 * lx - periodic_gap(grid.axis0[i], b[0], *lx);
                    let gy = 0.5 * ly - periodic_gap(grid.axis1[j], b[1], *ly);
                    gx.min(gy)
                })
                .collect())
        }
        ManifoldKind::WarpedSurface { radius, outer: OuterEnd::Pole, .. } if base == BasePoint::Pole => {
            Ok(distance_values(grid, base)?.into_iter().map(|r| radius - r).collect())
        }
        _ => Ok(vec![f64::INFINITY; grid.len()]),
    }
}

/// Mask of nodes farther than `width` from the cut locus of `base`.
pub fn cut_mask(grid: &ManifoldGrid, base: BasePoint, width: f64) -> Result<Vec<bool>> {
    Ok(cut_locus_distance(grid, base)?.into_iter().map(|d| d > width).collect())
}
