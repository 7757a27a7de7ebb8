//! Positive unit-mass heat flow: Crank–Nicolson stepping and exact kernel oracles.

mod dd;
mod kernel;

use std::f64::consts::PI;
use std::sync::Arc;

use crate::error::{LabError, Result};
use crate::geometry::{distance_values, integrate_values, BasePoint, ManifoldGrid, ScalarField};

pub use dd::Dd;
pub use kernel::{
    circle_log_kernel, kernel, legendre_degree, sphere_kernel_dd, KernelOracle, OracleKind, DEFAULT_MAX_DEGREE,
    DEFAULT_TOLERANCE,
};

#[derive(Debug, Clone)]
pub struct HeatState {
    pub u: ScalarField,
    pub t: f64,
    /// Entropy offset: τ = t + τ₀.
    pub tau0: f64,
}

impl HeatState {
    pub fn new(u: ScalarField, t: f64, tau0: f64) -> Result<Self> {
        if !(t > 0.0) || !(tau0 >= 0.0) {
            return Err(LabError::DomainError(format!("need t > 0 and tau0 >= 0, got t={t}, tau0={tau0}")));
        }
        if !u.is_positive() {
            return Err(LabError::DomainError("heat state must be positive".into()));
        }
        Ok(HeatState { u, t, tau0 })
    }

    pub fn grid(&self) -> &Arc<ManifoldGrid> {
        &self.u.grid
    }

    pub fn tau(&self) -> f64 {
        self.t + self.tau0
    }

    pub fn mass(&self) -> f64 {
        integrate_values(&self.u.grid, &self.u.values)
    }
}

/// Fundamental-solution start at t₀: the exact kernel when the grid has an oracle,
/// otherwise a metric Gaussian bump, renormalized to unit mass.
pub fn delta_init(grid: &Arc<ManifoldGrid>, base: BasePoint, t0: f64) -> Result<HeatState> {
    let h = grid.spacing_scale();
    let floor = 10.0 * h * h;
    if !(t0 >= floor) {
        return Err(LabError::UnderResolved { t0, floor });
    }
    let values = match KernelOracle::for_grid(grid) {
        Some(oracle) => oracle.values(grid, base, t0)?,
        None => {
            let n = grid.dim as f64;
            let c = (4.0 * PI * t0).powf(-0.5 * n);
            distance_values(grid, base)?.iter().map(|r| c * (-r * r / (4.0 * t0)).exp()).collect()
        }
    };
    let mass = integrate_values(grid, &values);
    let u = ScalarField::new(Arc::clone(grid), values.iter().map(|v| v / mass).collect())?;
    HeatState::new(u, t0, 0.0)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepReport {
    /// |∫u − 1| before renormalization, maximized over substeps.
    pub renormalization: f64,
    /// Deepest dt halving used to keep u positive.
    pub halvings: usize,
    pub cg_iterations: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HeatSolver {
    pub dt_max: f64,
    /// Relative residual of the conjugate-gradient solve.
    pub cg_tol: f64,
    pub max_halvings: usize,
}

impl Default for HeatSolver {
    fn default() -> Self {
        HeatSolver { dt_max: 0.1, cg_tol: 1e-12, max_halvings: 8 }
    }
}

impl HeatSolver {
    pub fn step(&self, state: &HeatState, dt: f64) -> Result<HeatState> {
        Ok(self.step_with_report(state, dt)?.0)
    }

    pub fn step_with_report(&self, state: &HeatState, dt: f64) -> Result<(HeatState, StepReport)> {
        if !(dt > 0.0) || dt > self.dt_max {
            return Err(LabError::DomainError(format!("dt must lie in (0, {}], got {dt}", self.dt_max)));
        }
        let grid = state.grid();
        let mut report = StepReport { renormalization: 0.0, halvings: 0, cg_iterations: 0 };
        let values = self.advance(grid, &state.u.values, dt, 0, &mut report)?;
        let u = ScalarField { values, grid: Arc::clone(grid) };
        Ok((HeatState { u, t: state.t + dt, tau0: state.tau0 }, report))
    }

    /// Steps `count` times with a fixed dt, returning every state including the first.
    pub fn trajectory(&self, state: &HeatState, dt: f64, count: usize) -> Result<Vec<HeatState>> {
        let mut out = Vec::with_capacity(count + 1);
        out.push(state.clone());
        for _ in 0..count {
            let next = self.step(out.last().expect("nonempty"), dt)?;
            out.push(next);
        }
        Ok(out)
    }

    fn advance(
        &self,
        grid: &ManifoldGrid,
        u: &[f64],
        dt: f64,
        depth: usize,
        report: &mut StepReport,
    ) -> Result<Vec<f64>> {
        let (mut x, iters) = crank_nicolson(grid, u, dt, self.cg_tol);
        report.cg_iterations += iters;
        if x.iter().all(|&v| v > 0.0) {
            let mass = integrate_values(grid, &x);
            report.renormalization = report.renormalization.max((mass - 1.0).abs());
            x.iter_mut().for_each(|v| *v /= mass);
            return Ok(x);
        }
        if depth >= self.max_halvings {
            return Err(LabError::StepFailure { halvings: depth, dt });
        }
        report.halvings = report.halvings.max(depth + 1);
        let half = self.advance(grid, u, 0.5 * dt, depth + 1, report)?;
        self.advance(grid, &half, 0.5 * dt, depth + 1, report)
    }
}

/// K x with K the stiffness matrix Σ_faces c (x_a − x_b)² / 2 (positive semidefinite).
fn stiffness(grid: &ManifoldGrid, x: &[f64], out: &mut [f64]) {
    out.iter_mut().for_each(|o| *o = 0.0);
    for f in &grid.faces {
        let d = f.coef * (x[f.a] - x[f.b]);
        out[f.a] += d;
        out[f.b] -= d;
    }
}

/// Solves (V + dt/2 K) x = V u − dt/2 K u by Jacobi-preconditioned conjugate gradients.
fn crank_nicolson(grid: &ManifoldGrid, u: &[f64], dt: f64, tol: f64) -> (Vec<f64>, usize) {
    let n = u.len();
    let vol = &grid.node_volumes;
    let half = 0.5 * dt;
    let mut diag = vol.clone();
    for f in &grid.faces {
        diag[f.a] += half * f.coef;
        diag[f.b] += half * f.coef;
    }
    let mut ku = vec![0.0; n];
    stiffness(grid, u, &mut ku);
    let b: Vec<f64> = (0..n).map(|i| vol[i] * u[i] - half * ku[i]).collect();
    let apply = |x: &[f64], out: &mut [f64], scratch: &mut [f64]| {
        stiffness(grid, x, scratch);
        for i in 0..n {
            out[i] = vol[i] * x[i] + half * scratch[i];
        }
    };
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
    let bnorm = dot(&b, &b).sqrt();
    let mut x = u.to_vec();
    let mut ax = vec![0.0; n];
    let mut scratch = vec![0.0; n];
    apply(&x, &mut ax, &mut scratch);
    let mut r: Vec<f64> = (0..n).map(|i| b[i] - ax[i]).collect();
    let mut z: Vec<f64> = (0..n).map(|i| r[i] / diag[i]).collect();
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut ap = vec![0.0; n];
    let max_iter = 20 * n + 100;
    for it in 0..max_iter {
        if dot(&r, &r).sqrt() <= tol * bnorm {
            return (x, it);
        }
        apply(&p, &mut ap, &mut scratch);
        let alpha = rz / dot(&p, &ap);
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
            z[i] = r[i] / diag[i];
        }
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    (x, max_iter)
}
