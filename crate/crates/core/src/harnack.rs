//! Pointwise Harnack-type defects for positive heat solutions, the small-time
//! Varadhan limit and Laplacian comparison for r².

use std::f64::consts::PI;
use std::sync::Arc;

use crate::entropy::{f_values, pointwise_w_values};
use crate::error::Result;
use crate::geometry::{
    distance_values, hessian_deviation_sq, laplacian_centered, BasePoint, ManifoldGrid, ScalarField,
};
use crate::heat::{HeatState, KernelOracle};

/// t·2Δf − n with f = −log u − (n/2) log(4πt).
pub fn liyau_defect(state: &HeatState) -> Result<ScalarField> {
    let grid = state.grid();
    let f = f_values(grid, &state.u.values, state.t)?;
    let n = grid.dim as f64;
    let values = laplacian_centered(grid, &f).iter().map(|l| state.t * 2.0 * l - n).collect();
    Ok(ScalarField { values, grid: grid.clone() })
}

/// t(2Δf − |∇f|²) + f − n, the pointwise W density at τ = t.
pub fn sharp_defect(state: &HeatState) -> Result<ScalarField> {
    let grid = state.grid();
    let f = f_values(grid, &state.u.values, state.t)?;
    Ok(ScalarField { values: pointwise_w_values(grid, &f, state.t), grid: grid.clone() })
}

/// Whether the two defects are ordered both ways somewhere on the grid: (some node with
/// Li–Yau below sharp, some node with Li–Yau above sharp), restricted to `mask`.
pub fn defect_ordering(state: &HeatState, mask: &[bool]) -> Result<(bool, bool)> {
    let ly = liyau_defect(state)?;
    let sh = sharp_defect(state)?;
    let mut below = false;
    let mut above = false;
    for k in (0..mask.len()).filter(|&k| mask[k]) {
        below |= ly.values[k] < sh.values[k];
        above |= ly.values[k] > sh.values[k];
    }
    Ok((below, above))
}

#[derive(Debug, Clone, PartialEq)]
pub struct VaradhanRow {
    pub t: f64,
    /// max |−4t log H − r²| over the region.
    pub max_error: f64,
    /// max |−4t log H − r² − 2nt log(4πt)| over the region: the same limit with the
    /// Euclidean prefactor of the kernel removed.
    pub corrected_error: f64,
    /// −4t log H at every node.
    pub scaled_log: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VaradhanTable {
    pub r_sq: Vec<f64>,
    pub rows: Vec<VaradhanRow>,
}

impl VaradhanTable {
    pub fn decreasing(&self) -> bool {
        self.rows.windows(2).all(|w| w[1].max_error < w[0].max_error)
    }

    pub fn corrected_decreasing(&self) -> bool {
        self.rows.windows(2).all(|w| w[1].corrected_error < w[0].corrected_error)
    }
}

pub fn varadhan_profile(
    oracle: &KernelOracle,
    grid: &ManifoldGrid,
    base: BasePoint,
    times: &[f64],
    region: &[bool],
) -> Result<VaradhanTable> {
    let r = distance_values(grid, base)?;
    let r_sq: Vec<f64> = r.iter().map(|x| x * x).collect();
    let n = grid.dim as f64;
    let mut rows = Vec::with_capacity(times.len());
    for &t in times {
        let log_h = oracle.log_values(grid, base, t)?;
        let scaled_log: Vec<f64> = log_h.iter().map(|l| -4.0 * t * l).collect();
        let prefactor = 2.0 * n * t * (4.0 * PI * t).ln();
        let mut max_error: f64 = 0.0;
        let mut corrected_error: f64 = 0.0;
        for k in (0..grid.len()).filter(|&k| region[k]) {
            let e = scaled_log[k] - r_sq[k];
            max_error = max_error.max(e.abs());
            corrected_error = corrected_error.max((e - prefactor).abs());
        }
        rows.push(VaradhanRow { t, max_error, corrected_error, scaled_log });
    }
    Ok(VaradhanTable { r_sq, rows })
}

/// Δ(r²) from the base point by centred differences.
pub fn laplacian_comparison(grid: &Arc<ManifoldGrid>, base: BasePoint) -> Result<ScalarField> {
    let r_sq: Vec<f64> = distance_values(grid, base)?.iter().map(|x| x * x).collect();
    Ok(ScalarField { values: laplacian_centered(grid, &r_sq), grid: grid.clone() })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RigiditySample {
    pub t: f64,
    /// sup |Hess f − g/(2t)|.
    pub hessian_defect: f64,
    /// sup |2tΔf − n|.
    pub trace_defect: f64,
}

pub fn rigidity_diagnostic(states: &[HeatState], mask: &[bool]) -> Result<Vec<RigiditySample>> {
    states
        .iter()
        .map(|s| {
            let grid = s.grid();
            let f = f_values(grid, &s.u.values, s.t)?;
            let hq = hessian_deviation_sq(grid, &f, 0.5 / s.t);
            let lap = laplacian_centered(grid, &f);
            let n = grid.dim as f64;
            let mut hessian_defect: f64 = 0.0;
            let mut trace_defect: f64 = 0.0;
            for k in (0..grid.len()).filter(|&k| mask[k]) {
                hessian_defect = hessian_defect.max(hq[k].sqrt());
                trace_defect = trace_defect.max((2.0 * s.t * lap[k] - n).abs());
            }
            Ok(RigiditySample { t: s.t, hessian_defect, trace_defect })
        })
        .collect()
}
