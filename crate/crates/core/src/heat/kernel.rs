use std::f64::consts::PI;
use std::sync::Arc;

use super::dd::Dd;
use crate::error::{LabError, Result};
use crate::geometry::{BasePoint, ManifoldGrid, ManifoldKind, ScalarField};

pub const DEFAULT_MAX_DEGREE: usize = 2000;
pub const DEFAULT_TOLERANCE: f64 = 1e-40;

/// Series truncation for the periodic kernels: terms below e^-80 relative are dropped.
const PERIODIC_CUTOFF: f64 = 80.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OracleKind {
    CircleTheta,
    TorusTheta,
    SphereLegendre { max_degree: usize },
    /// Gaussian kernel of Rⁿ; exact on a box or disc only while the mass stays away from the walls.
    Euclidean,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelOracle {
    pub kind: OracleKind,
    /// Absolute truncation tolerance of the Legendre series.
    pub tolerance: f64,
}

impl KernelOracle {
    pub fn new(kind: OracleKind) -> Self {
        KernelOracle { kind, tolerance: DEFAULT_TOLERANCE }
    }

    /// The exact oracle for a grid, if one exists.
    pub fn for_grid(grid: &ManifoldGrid) -> Option<Self> {
        match &grid.kind {
            ManifoldKind::Circle { .. } => Some(Self::new(OracleKind::CircleTheta)),
            ManifoldKind::FlatTorus { .. } => Some(Self::new(OracleKind::TorusTheta)),
            ManifoldKind::WarpedSurface { warp, .. } if warp.is_unit_sphere() && grid.is_closed() => {
                Some(Self::new(OracleKind::SphereLegendre { max_degree: DEFAULT_MAX_DEGREE }))
            }
            _ => None,
        }
    }

    /// log H(base, x, t) at every node.
    pub fn log_values(&self, grid: &ManifoldGrid, base: BasePoint, t: f64) -> Result<Vec<f64>> {
        if !(t > 0.0) {
            return Err(LabError::DomainError(format!("kernel time must be positive, got {t}")));
        }
        match (self.kind, &grid.kind) {
            (OracleKind::CircleTheta, ManifoldKind::Circle { length }) => {
                let b = base_coordinate(grid, base)?;
                Ok(grid.axis0.iter().map(|&x| circle_log_kernel(x - b[0], *length, t)).collect())
            }
            (OracleKind::TorusTheta, ManifoldKind::FlatTorus { lx, ly }) => {
                let b = base_coordinate(grid, base)?;
                let ax: Vec<f64> = grid.axis0.iter().map(|&x| circle_log_kernel(x - b[0], *lx, t)).collect();
                let ay: Vec<f64> = grid.axis1.iter().map(|&y| circle_log_kernel(y - b[1], *ly, t)).collect();
                Ok((0..grid.len())
                    .map(|k| {
                        let (i, j) = grid.coords(k);
                        ax[i] + ay[j]
                    })
                    .collect())
            }
            (OracleKind::SphereLegendre { max_degree }, ManifoldKind::WarpedSurface { warp, .. })
                if warp.is_unit_sphere() =>
            {
                if base != BasePoint::Pole {
                    return Err(LabError::UnsupportedBase("the Legendre oracle needs the pole as base".into()));
                }
                let degree = legendre_degree(t, self.tolerance, max_degree)?;
                let radial: Vec<f64> =
                    grid.axis0.iter().map(|&r| sphere_kernel_dd(r.cos(), t, degree).ln()).collect();
                Ok((0..grid.len()).map(|k| radial[grid.coords(k).0]).collect())
            }
            (OracleKind::Euclidean, _) if grid.is_flat() => {
                let d = crate::geometry::distance_values(grid, base)?;
                let n = grid.dim as f64;
                let c = -0.5 * n * (4.0 * PI * t).ln();
                Ok(d.iter().map(|r| c - r * r / (4.0 * t)).collect())
            }
            _ => Err(LabError::UnsupportedGrid(format!(
                "{:?} oracle does not apply to a {} grid",
                self.kind,
                grid.kind.name()
            ))),
        }
    }

    pub fn values(&self, grid: &ManifoldGrid, base: BasePoint, t: f64) -> Result<Vec<f64>> {
        Ok(self.log_values(grid, base, t)?.into_iter().map(f64::exp).collect())
    }
}

pub fn kernel(oracle: &KernelOracle, grid: &Arc<ManifoldGrid>, base: BasePoint, t: f64) -> Result<ScalarField> {
    ScalarField::new(Arc::clone(grid), oracle.values(grid, base, t)?)
}

fn base_coordinate(grid: &ManifoldGrid, base: BasePoint) -> Result<[f64; 2]> {
    match base {
        BasePoint::Node(k) if k < grid.len() => Ok(grid.cartesian(k)),
        BasePoint::Point(p) => Ok(p),
        other => Err(LabError::UnsupportedBase(format!("{other:?} on a {} grid", grid.kind.name()))),
    }
}

/// log of the circle kernel at signed offset x: image sum for small t, Fourier series for large t.
pub fn circle_log_kernel(x: f64, length: f64, t: f64) -> f64 {
    let d = x.rem_euclid(length);
    let d = d.min(length - d);
    let images = ((4.0 * PERIODIC_CUTOFF * t).sqrt() / length).ceil() as i64 + 2;
    let modes = (length / (2.0 * PI) * (PERIODIC_CUTOFF / t).sqrt()).ceil() as i64 + 1;
    if images <= modes {
        let mut s = 0.0;
        for m in -images..=images {
            let y = d + m as f64 * length;
            s += (-(y * y - d * d) / (4.0 * t)).exp();
        }
        -d * d / (4.0 * t) - 0.5 * (4.0 * PI * t).ln() + s.ln()
    } else {
        let mut s = 1.0;
        for k in 1..=modes {
            let w = 2.0 * PI * k as f64 / length;
            s += 2.0 * (-w * w * t).exp() * (w * d).cos();
        }
        (s / length).ln()
    }
}

/// Smallest degree L whose Legendre tail Σ_{l>L} (2l+1)/(4π) e^{−l(l+1)t} is below `tol`.
pub fn legendre_degree(t: f64, tol: f64, budget: usize) -> Result<usize> {
    let bound = |l: f64| (2.0 * l + 1.0) / (4.0 * PI) * (-l * (l + 1.0) * t).exp();
    let mut l = 0usize;
    loop {
        let next = (l + 1) as f64;
        let ratio = bound(next + 1.0) / bound(next);
        if ratio < 1.0 && bound(next) / (1.0 - ratio) < tol {
            break;
        }
        l += 1;
        if l > 100_000_000 {
            break;
        }
    }
    if l > budget {
        return Err(LabError::TruncationError { required: l, budget });
    }
    Ok(l)
}

/// Σ_{l≤L} (2l+1)/(4π) e^{−l(l+1)t} P_l(x) in double-double.
pub fn sphere_kernel_dd(x: f64, t: f64, degree: usize) -> Dd {
    let q = Dd::exp(-2.0 * t);
    let x = Dd::from_f64(x);
    let mut decay = Dd::ONE;
    let mut qpow = Dd::ONE;
    let mut p_prev = Dd::ONE;
    let mut p = x;
    let mut sum = Dd::ONE;
    for l in 1..=degree {
        qpow = qpow * q;
        decay = decay * qpow;
        if l > 1 {
            let lf = (l - 1) as f64;
            let next = (x * p).mul_f64(2.0 * lf + 1.0) - p_prev.mul_f64(lf);
            p_prev = p;
            p = next.div_f64(lf + 1.0);
        }
        sum = sum + (decay * p).mul_f64((2 * l + 1) as f64);
    }
    sum.div_f64(4.0 * PI)
}
