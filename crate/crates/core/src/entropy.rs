//! The W entropy, its pointwise density, the dissipation formula and the
//! evolution identities for w = 2Δf − |∇f|² and W.

use std::f64::consts::PI;

use crate::error::{LabError, Result};
use crate::geometry::{
    dirichlet_energy, gradient_frame_values, gradient_sq_centered, hessian_deviation_sq, integrate_values,
    laplacian_centered, ricci_quadratic_values, ManifoldGrid, ScalarField,
};
use crate::heat::{HeatSolver, HeatState};

/// Densities below this are left out of every f-dependent integrand.
pub const DENSITY_FLOOR: f64 = 1e-300;
/// Allowed deviation of ∫u from 1 before W is refused.
pub const MASS_TOLERANCE: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EntropyReport {
    pub t: f64,
    pub tau: f64,
    pub w: f64,
    pub nash_term: f64,
    pub dirichlet_term: f64,
    pub predicted_dwdt: f64,
    pub measured_dwdt: Option<f64>,
    pub boundary_term: f64,
    pub match_relerr: Option<f64>,
    /// Mass carried by nodes below the density floor.
    pub excluded_mass: f64,
}

/// f = −log u − (n/2) log(4πτ) as raw values; floored nodes get the value at the floor.
pub fn f_values(grid: &ManifoldGrid, u: &[f64], tau: f64) -> Result<Vec<f64>> {
    if !(tau > 0.0) {
        return Err(LabError::InvalidTau(tau));
    }
    let shift = 0.5 * grid.dim as f64 * (4.0 * PI * tau).ln();
    u.iter()
        .enumerate()
        .map(|(node, &v)| {
            if !(v > 0.0) {
                Err(LabError::LogDomain { node, value: v })
            } else {
                Ok(-v.max(DENSITY_FLOOR).ln() - shift)
            }
        })
        .collect()
}

pub fn f_of(state: &HeatState) -> Result<ScalarField> {
    let grid = state.grid();
    ScalarField::new(grid.clone(), f_values(grid, &state.u.values, state.tau())?)
}

/// Inverse of `f_of`: u = e^{−f}/(4πτ)^{n/2}.
pub fn density_of(f: &ScalarField, tau: f64) -> ScalarField {
    let c = (4.0 * PI * tau).powf(-0.5 * f.grid.dim as f64);
    f.map(|v| c * (-v).exp())
}

fn excluded_mass(grid: &ManifoldGrid, u: &[f64]) -> f64 {
    u.iter().zip(&grid.node_volumes).filter(|(v, _)| **v < DENSITY_FLOOR).map(|(v, w)| v * w).sum()
}

fn check_mass(grid: &ManifoldGrid, u: &[f64]) -> Result<()> {
    let mass = integrate_values(grid, u);
    if (mass - 1.0).abs() > MASS_TOLERANCE {
        return Err(LabError::ConstraintViolated(format!("unit mass violated: ∫u = {mass}")));
    }
    Ok(())
}

/// (dirichlet, nash) with dirichlet = τ∫|∇f|²u = 4τ∫|∇√u|² and nash = ∫f u.
pub fn w_terms(state: &HeatState) -> Result<(f64, f64)> {
    let grid = state.grid();
    let u = &state.u.values;
    check_mass(grid, u)?;
    let tau = state.tau();
    let f = f_values(grid, u, tau)?;
    let sqrt_u: Vec<f64> = u.iter().map(|v| v.sqrt()).collect();
    let dirichlet = 4.0 * tau * dirichlet_energy(grid, &sqrt_u);
    let nash = u
        .iter()
        .zip(&f)
        .zip(&grid.node_volumes)
        .filter(|((v, _), _)| **v >= DENSITY_FLOOR)
        .map(|((v, fv), w)| v * fv * w)
        .sum();
    Ok((dirichlet, nash))
}

pub fn w_functional(state: &HeatState) -> Result<f64> {
    let (d, nash) = w_terms(state)?;
    Ok(d + nash - state.grid().dim as f64)
}

/// 4τ∫|∇v|² − ∫v² log v² − n − (n/2) log(4πτ) for v = √u.
pub fn w_of_psi(grid: &ManifoldGrid, v: &[f64], tau: f64) -> Result<f64> {
    if !(tau > 0.0) {
        return Err(LabError::InvalidTau(tau));
    }
    let n = grid.dim as f64;
    let ent: f64 = v
        .iter()
        .zip(&grid.node_volumes)
        .filter(|(x, _)| x.abs() > 0.0)
        .map(|(x, w)| {
            let s = x * x;
            s * s.ln() * w
        })
        .sum();
    Ok(4.0 * tau * dirichlet_energy(grid, v) - ent - n - 0.5 * n * (4.0 * PI * tau).ln())
}

/// τ(2Δf − |∇f|²) + f − n from raw f values (centred differences).
pub fn pointwise_w_values(grid: &ManifoldGrid, f: &[f64], tau: f64) -> Vec<f64> {
    let n = grid.dim as f64;
    let lap = laplacian_centered(grid, f);
    let g2 = gradient_sq_centered(grid, f);
    (0..f.len()).map(|k| tau * (2.0 * lap[k] - g2[k]) + f[k] - n).collect()
}

pub fn pointwise_w(state: &HeatState) -> Result<ScalarField> {
    let f = f_of(state)?;
    let grid = state.grid();
    Ok(ScalarField { values: pointwise_w_values(grid, &f.values, state.tau()), grid: grid.clone() })
}

/// −∫2τ(|Hess f − g/(2τ)|² + Ric(∇f,∇f)) u dv.
pub fn predicted_dwdt(state: &HeatState) -> Result<f64> {
    let grid = state.grid();
    let tau = state.tau();
    let u = &state.u.values;
    let f = f_values(grid, u, tau)?;
    let hq = hessian_deviation_sq(grid, &f, 0.5 / tau);
    let ric = ricci_quadratic_values(grid, &f);
    let s: f64 = (0..u.len())
        .filter(|&k| u[k] >= DENSITY_FLOOR)
        .map(|k| (hq[k] + ric[k]) * u[k] * grid.node_volumes[k])
        .sum();
    Ok(-2.0 * tau * s)
}

/// −2τ∮ II((∇f)ᵀ, (∇f)ᵀ) u dA; exactly 0 on closed grids.
pub fn boundary_term(state: &HeatState) -> Result<f64> {
    let grid = state.grid();
    if grid.boundary.is_empty() {
        return Ok(0.0);
    }
    let tau = state.tau();
    let u = &state.u.values;
    let f = f_values(grid, u, tau)?;
    let grad = gradient_frame_values(grid, &f);
    let s: f64 = grid
        .boundary
        .iter()
        .filter(|b| b.second_fundamental_form != 0.0)
        .map(|b| {
            let g = grad[b.node];
            let normal = g[0] * b.normal[0] + g[1] * b.normal[1];
            let tangential_sq = (g[0] * g[0] + g[1] * g[1] - normal * normal).max(0.0);
            b.second_fundamental_form * tangential_sq * u[b.node] * b.area
        })
        .sum();
    Ok(-2.0 * tau * s)
}

/// Entropy terms of one state without a measured derivative.
pub fn entropy_report(state: &HeatState) -> Result<EntropyReport> {
    let (dirichlet, nash) = w_terms(state)?;
    Ok(EntropyReport {
        t: state.t,
        tau: state.tau(),
        w: dirichlet + nash - state.grid().dim as f64,
        nash_term: nash,
        dirichlet_term: dirichlet,
        predicted_dwdt: predicted_dwdt(state)?,
        measured_dwdt: None,
        boundary_term: boundary_term(state)?,
        match_relerr: None,
        excluded_mass: excluded_mass(state.grid(), &state.u.values),
    })
}

/// Steps four times from `state` and reports at the middle time t + 2dt, where dW/dt is
/// measured by centred differences at spacings dt and 2dt combined by Richardson extrapolation.
pub fn dissipation(state: &HeatState, solver: &HeatSolver, dt: f64) -> Result<EntropyReport> {
    let traj = solver.trajectory(state, dt, 4)?;
    let w: Vec<f64> = traj.iter().map(w_functional).collect::<Result<_>>()?;
    let d1 = (w[3] - w[1]) / (2.0 * dt);
    let d2 = (w[4] - w[0]) / (4.0 * dt);
    let measured = (4.0 * d1 - d2) / 3.0;
    let mut report = entropy_report(&traj[2])?;
    let predicted = report.predicted_dwdt + report.boundary_term;
    report.measured_dwdt = Some(measured);
    report.match_relerr = Some((measured - predicted).abs() / predicted.abs().max(f64::MIN_POSITIVE));
    Ok(report)
}

/// Max-norm residuals of the evolution identities for w = 2Δf − |∇f|² (f = −log u) and for
/// W = τw + f − n, from three states at t − dt, t, t + dt, over nodes where `mask` holds.
pub fn lemma_residuals(states: [&HeatState; 3], mask: &[bool]) -> Result<(f64, f64)> {
    let grid = states[1].grid();
    let dt = 0.5 * (states[2].t - states[0].t);
    let fbar: Vec<Vec<f64>> = states
        .iter()
        .map(|s| s.u.values.iter().map(|v| -v.max(DENSITY_FLOOR).ln()).collect())
        .collect();
    let small_w: Vec<Vec<f64>> = fbar
        .iter()
        .map(|f| {
            let lap = laplacian_centered(grid, f);
            let g2 = gradient_sq_centered(grid, f);
            lap.iter().zip(&g2).map(|(l, g)| 2.0 * l - g).collect()
        })
        .collect();
    let n = grid.dim as f64;
    let big_w: Vec<Vec<f64>> = states
        .iter()
        .zip(&small_w)
        .zip(&fbar)
        .map(|((s, w), f)| {
            let tau = s.tau();
            let shift = 0.5 * n * (4.0 * PI * tau).ln();
            w.iter().zip(f).map(|(wk, fk)| tau * wk + fk - shift - n).collect()
        })
        .collect();

    let tau = states[1].tau();
    let f = &fbar[1];
    let grad_f = gradient_frame_values(grid, f);
    let hess = hessian_deviation_sq(grid, f, 0.0);
    let hess_tau = hessian_deviation_sq(grid, f, 0.5 / tau);
    let ric = ricci_quadratic_values(grid, f);

    let residual = |field: &[Vec<f64>], rhs: &dyn Fn(usize, f64) -> f64| -> f64 {
        let lap = laplacian_centered(grid, &field[1]);
        let grad = gradient_frame_values(grid, &field[1]);
        (0..grid.len())
            .filter(|&k| mask[k])
            .map(|k| {
                let dtf = (field[2][k] - field[0][k]) / (2.0 * dt);
                let cross = grad[k][0] * grad_f[k][0] + grad[k][1] * grad_f[k][1];
                (dtf - lap[k] - rhs(k, cross)).abs()
            })
            .fold(0.0, f64::max)
    };
    let r1 = residual(&small_w, &|k, cross| -2.0 * (hess[k] + ric[k]) - 2.0 * cross);
    let r2 = residual(&big_w, &|k, cross| -2.0 * tau * (hess_tau[k] + ric[k]) - 2.0 * cross);
    Ok((r1, r2))
}
