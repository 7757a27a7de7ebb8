//! Experiment pipelines. Each returns its tables, plots, measured constants and checks.

use std::f64::consts::PI;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::config::{Experiment, ExperimentConfig};
use super::output::{num, Outcome, Plot, Table};
use super::par_map;
use crate::entropy::{dissipation, entropy_report};
use crate::error::{LabError, Result};
use crate::geometry::{
    build_grid, cut_mask, distance_values, gradient_frame_values, BasePoint, ManifoldGrid, ManifoldKind, ScalarField,
};
use crate::growth::{
    diameter_bound, doubling_iteration, kernel_entropy_bound, mu_lower_to_volume, volume_profile, GrowthConstants,
    VolumeProfile,
};
use crate::harnack::{defect_ordering, laplacian_comparison, liyau_defect, rigidity_diagnostic, sharp_defect, varadhan_profile};
use crate::heat::{delta_init, HeatSolver, HeatState, KernelOracle, OracleKind};
use crate::logsob::{
    euclidean_lsi_check, minimize_mu, mu_curve, scaling_identity_check, w_gradient, w_integral, Energy, EnergyForm,
    MuOptions,
};
use crate::rearrange::{
    coarea_chain, dirichlet_compare, distribution, functional_32, functional_32_radial, layer_cake, radial_rearrangement,
    random_bump_field, DEFAULT_RADIAL_CELLS, DEFAULT_THRESHOLDS,
};

pub fn run_experiment(experiment: Experiment, cfg: &ExperimentConfig, seed: u64) -> Result<Outcome> {
    match experiment {
        Experiment::Monotonicity => monotonicity(cfg),
        Experiment::Pointwise => pointwise(cfg),
        Experiment::DissipationMatch => dissipation_match(cfg),
        Experiment::Liyau => liyau(cfg),
        Experiment::Varadhan => varadhan(cfg),
        Experiment::MuCurve => mu_curve_experiment(cfg),
        Experiment::LsiEuclidean => lsi_euclidean(cfg, seed),
        Experiment::Symmetrize => symmetrize(cfg, seed),
        Experiment::Growth => growth(cfg),
        Experiment::Noncollapse => noncollapse(cfg),
        Experiment::All => Err(LabError::Config("'all' is dispatched by the runner".into())),
    }
}

/// Rejects config keys an experiment does not use.
pub fn validate(experiment: Experiment, cfg: &ExperimentConfig) -> Result<()> {
    let allowed: &[&str] = match experiment {
        Experiment::Monotonicity | Experiment::DissipationMatch => &["manifold.", "grid.", "time."],
        Experiment::Pointwise | Experiment::Liyau | Experiment::Varadhan | Experiment::MuCurve => &["manifold.", "grid.", "tau."],
        Experiment::LsiEuclidean => &["manifold.", "grid.", "samples."],
        Experiment::Symmetrize => &["manifold.", "grid.", "samples."],
        Experiment::Growth => &["time."],
        Experiment::Noncollapse => &["growth."],
        Experiment::All => &[],
    };
    let common = ["experiment", "seed", "output.", "tolerance."];
    for (key, _) in &cfg.entries {
        if !common.iter().chain(allowed).any(|p| key.starts_with(p)) {
            return Err(LabError::Config(format!("key '{key}' does not apply to experiment '{experiment}'")));
        }
    }
    if let Some(kind) = &cfg.manifold {
        let name = kind.name();
        let ok = match experiment {
            Experiment::DissipationMatch => matches!(name, "circle" | "torus" | "warped" | "disc"),
            Experiment::Pointwise | Experiment::Liyau | Experiment::Varadhan => matches!(name, "circle" | "torus" | "warped" | "box"),
            Experiment::LsiEuclidean | Experiment::Symmetrize => name == "box",
            _ => true,
        };
        if !ok {
            return Err(LabError::Config(format!("manifold '{name}' is not supported by experiment '{experiment}'")));
        }
    }
    Ok(())
}

fn default_resolution(kind: &ManifoldKind) -> [usize; 2] {
    match kind {
        ManifoldKind::Circle { .. } => [256, 1],
        ManifoldKind::FlatTorus { .. } => [128, 128],
        ManifoldKind::WarpedSurface { .. } => [256, 16],
        ManifoldKind::EuclideanBox { .. } => [128, 128],
        ManifoldKind::EuclideanDisc { .. } => [64, 32],
    }
}

fn make_grid(kind: ManifoldKind, res: [usize; 2]) -> Result<Arc<ManifoldGrid>> {
    build_grid(kind, res).map(Arc::new).map_err(|e| LabError::Config(format!("grid: {e}")))
}

fn grid_from(cfg: &ExperimentConfig, default_kind: ManifoldKind, default_res: Option<[usize; 2]>) -> Result<Arc<ManifoldGrid>> {
    let kind = cfg.manifold.clone().unwrap_or(default_kind);
    let res = cfg.resolution.or(if cfg.manifold.is_none() { default_res } else { None }).unwrap_or_else(|| default_resolution(&kind));
    make_grid(kind, res)
}

pub fn default_base(grid: &ManifoldGrid) -> BasePoint {
    match grid.kind {
        ManifoldKind::WarpedSurface { .. } | ManifoldKind::EuclideanDisc { .. } => BasePoint::Pole,
        ManifoldKind::EuclideanBox { .. } => BasePoint::Point([0.0, 0.0]),
        _ => BasePoint::Node(0),
    }
}

fn oracle_for(grid: &ManifoldGrid) -> Result<KernelOracle> {
    if grid.is_flat() && !grid.is_closed() && matches!(grid.kind, ManifoldKind::EuclideanBox { .. }) {
        return Ok(KernelOracle::new(OracleKind::Euclidean));
    }
    KernelOracle::for_grid(grid).ok_or_else(|| LabError::Config(format!("no kernel oracle on {}", grid.kind.name())))
}

fn pointwise_mask(grid: &ManifoldGrid) -> Vec<bool> {
    if grid.boundary.is_empty() {
        vec![true; grid.len()]
    } else {
        grid.interior_mask(2)
    }
}

/// Nodes along one coordinate line through the base, sorted by distance.
fn profile_line(grid: &ManifoldGrid, dist: &[f64]) -> Vec<usize> {
    let j = if matches!(grid.kind, ManifoldKind::EuclideanBox { .. }) { grid.shape[1] / 2 } else { 0 };
    let mut nodes: Vec<usize> = (0..grid.shape[0]).map(|i| grid.index(i, j)).collect();
    nodes.sort_by(|&a, &b| dist[a].total_cmp(&dist[b]).then(a.cmp(&b)));
    nodes
}

fn masked_max(v: &[f64], mask: &[bool]) -> f64 {
    v.iter().zip(mask).filter(|(_, m)| **m).map(|(x, _)| *x).fold(f64::NEG_INFINITY, f64::max)
}

fn masked_min(v: &[f64], mask: &[bool]) -> f64 {
    v.iter().zip(mask).filter(|(_, m)| **m).map(|(x, _)| *x).fold(f64::INFINITY, f64::min)
}

fn kernel_state(grid: &Arc<ManifoldGrid>, oracle: &KernelOracle, base: BasePoint, t: f64) -> Result<HeatState> {
    HeatState::new(ScalarField::new(grid.clone(), oracle.values(grid, base, t)?)?, t, 0.0)
}

fn kernel_times(cfg: &ExperimentConfig) -> Vec<f64> {
    cfg.taus.clone().unwrap_or_else(|| vec![0.05, 0.1, 0.2])
}

fn monotonicity(cfg: &ExperimentConfig) -> Result<Outcome> {
    let grid = grid_from(cfg, ManifoldKind::unit_sphere(), None)?;
    // Flat models sit in the equality regime at small t, where dW/dt is far below the O(h²/t)
    // drift of the discrete W, so they start once the dissipation dominates.
    let (t0_default, dt_default) = match grid.kind {
        ManifoldKind::Circle { length: l } | ManifoldKind::FlatTorus { lx: l, .. } => {
            let s = (l / (2.0 * PI)).powi(2);
            (0.25 * s, 0.01 * s)
        }
        ManifoldKind::EuclideanBox { lx, ly } => {
            let s = (0.5 * lx.min(ly)).powi(2);
            (0.02 * s, 0.005 * s)
        }
        ManifoldKind::EuclideanDisc { radius } => (0.02 * radius * radius, 0.005 * radius * radius),
        ManifoldKind::WarpedSurface { .. } => (0.05, 0.01),
    };
    let t0 = cfg.time.t0.unwrap_or(t0_default);
    let dt = cfg.time.dt.unwrap_or(dt_default);
    let t_end = cfg.time.t_end.unwrap_or(t0 + 100.0 * dt);
    if t_end <= t0 {
        return Err(LabError::Config(format!("time.t_end ({t_end}) must exceed time.t0 ({t0})")));
    }
    let steps = ((t_end - t0) / dt).round().max(1.0) as usize;
    let slack = cfg.tolerance("slack", 1e-8);
    let base = default_base(&grid);
    let start = delta_init(&grid, base, t0).map_err(|e| match e {
        LabError::UnderResolved { .. } => LabError::Config(e.to_string()),
        other => other,
    })?;
    let traj = HeatSolver::default().trajectory(&start, dt, steps)?;
    let reports = traj.iter().map(entropy_report).collect::<Result<Vec<_>>>()?;

    let mut out = Outcome::default();
    let mut table = Table::new(&["t", "w", "nash_term", "dirichlet_term", "predicted_dwdt", "boundary_term", "nonincreasing"]);
    let mut max_increase = f64::NEG_INFINITY;
    for (k, r) in reports.iter().enumerate() {
        let step_ok = k == 0 || r.w <= reports[k - 1].w + slack;
        if k > 0 {
            max_increase = max_increase.max(r.w - reports[k - 1].w);
        }
        table.push(vec![
            num(r.t),
            num(r.w),
            num(r.nash_term),
            num(r.dirichlet_term),
            num(r.predicted_dwdt),
            num(r.boundary_term),
            (if step_ok { "1" } else { "0" }).into(),
        ]);
    }
    let bad_steps = (1..reports.len()).filter(|&k| reports[k].w > reports[k - 1].w + slack).count();
    out.check("w_nonincreasing", bad_steps == 0, format!("{steps} steps, {bad_steps} increases beyond {slack:e}, max step change {max_increase:.3e}"));
    let worst_pred = reports.iter().map(|r| r.predicted_dwdt).fold(f64::NEG_INFINITY, f64::max);
    out.check("predicted_dwdt_nonpositive", worst_pred <= 0.0, format!("max predicted dW/dt {worst_pred:.3e}"));
    match grid.kind {
        ManifoldKind::EuclideanDisc { .. } | ManifoldKind::WarpedSurface { outer: crate::geometry::OuterEnd::Boundary, .. } => {
            let worst = reports.iter().map(|r| r.boundary_term).fold(f64::NEG_INFINITY, f64::max);
            out.check("boundary_term_nonpositive", worst <= 0.0, format!("max boundary term {worst:.3e}"));
        }
        ManifoldKind::EuclideanBox { .. } => {
            let worst = reports.iter().map(|r| r.boundary_term.abs()).fold(0.0, f64::max);
            out.check("boundary_term_zero", worst <= 1e-12, format!("max |boundary term| {worst:.3e}"));
        }
        _ => {}
    }
    out.note("manifold", grid.kind.name());
    out.constant("w_first", reports[0].w);
    out.constant("w_last", reports[reports.len() - 1].w);
    out.constant("max_step_change", max_increase);
    out.plots.push(("w".into(), Plot::new("W along the heat flow", "t", "W").with("W", reports.iter().map(|r| (r.t, r.w)).collect())));
    out.tables.push(("w".into(), table));
    Ok(out)
}

fn pointwise(cfg: &ExperimentConfig) -> Result<Outcome> {
    let grid = grid_from(cfg, ManifoldKind::unit_sphere(), None)?;
    let oracle = oracle_for(&grid)?;
    let base = default_base(&grid);
    let tol = cfg.tolerance("defect", 1e-3);
    let mask = pointwise_mask(&grid);
    let dist = distance_values(&grid, base)?;
    let line = profile_line(&grid, &dist);
    let sphere = grid.is_warped() && grid.is_closed();

    let mut out = Outcome::default();
    let mut table = Table::new(&["t", "max_defect", "min_defect"]);
    let mut profile = Table::new(&["t", "r", "defect"]);
    let mut plot = Plot::new("sharp defect of the heat kernel", "r", "t(2Δf − |∇f|²) + f − n");
    let mut global_min = f64::INFINITY;
    for t in kernel_times(cfg) {
        let s = kernel_state(&grid, &oracle, base, t)?;
        let d = sharp_defect(&s)?;
        let (hi, lo) = (masked_max(&d.values, &mask), masked_min(&d.values, &mask));
        global_min = global_min.min(lo);
        out.check(&format!("defect_bounded_t{t}"), hi <= tol, format!("max {hi:.3e} against {tol:e}"));
        table.push(vec![num(t), num(hi), num(lo)]);
        for &k in &line {
            profile.push(vec![num(t), num(dist[k]), num(d.values[k])]);
        }
        plot = plot.with(&format!("t = {t}"), line.iter().map(|&k| (dist[k], d.values[k])).collect());
    }
    if sphere {
        // The floor away from the antipode, where the kernel's log is smooth; compared across a refinement.
        let floor = |g: &Arc<ManifoldGrid>| -> Result<f64> {
            let m = cut_mask(g, base, 1.0)?;
            let mut lo = f64::INFINITY;
            for t in kernel_times(cfg) {
                lo = lo.min(masked_min(&sharp_defect(&kernel_state(g, &oracle, base, t)?)?.values, &m));
            }
            Ok(lo)
        };
        let fine = floor(&grid)?;
        let coarse = floor(&make_grid(grid.kind.clone(), [grid.shape[0] / 2, grid.shape[1]])?)?;
        out.constant("floor", fine);
        out.constant("floor_coarse", coarse);
        out.check("sphere_negative_floor", fine <= -0.01, format!("min defect {fine:.4e} at distance ≥ 1 from the cut locus"));
        out.check(
            "sphere_floor_stable",
            coarse <= -0.01 && (coarse - fine).abs() <= 0.05 * fine.abs(),
            format!("coarse {coarse:.6e}, fine {fine:.6e}"),
        );
    }
    out.note("manifold", grid.kind.name());
    out.constant("min_defect", global_min);
    out.tables.push(("defects".into(), table));
    out.tables.push(("profile".into(), profile));
    out.plots.push(("defects".into(), plot));
    Ok(out)
}

fn dissipation_match(cfg: &ExperimentConfig) -> Result<Outcome> {
    let kind = cfg.manifold.clone().unwrap_or_else(ManifoldKind::unit_sphere);
    let (res, t0, dt) = match kind {
        ManifoldKind::Circle { .. } => ([64, 1], 1.0, 0.02),
        ManifoldKind::FlatTorus { .. } => ([32, 32], 0.5, 0.02),
        ManifoldKind::EuclideanDisc { .. } => ([32, 32], 0.05, 0.005),
        _ => ([64, 16], 0.2, 0.01),
    };
    let res = cfg.resolution.unwrap_or(res);
    let t0 = cfg.time.t0.unwrap_or(t0);
    let dt = cfg.time.dt.unwrap_or(dt);
    let max_rel = cfg.tolerance("relerr", 0.05);
    let min_ratio = cfg.tolerance("ratio", 1.7);
    let solver = HeatSolver::default();

    let mut out = Outcome::default();
    let mut table = Table::new(&["level", "n0", "n1", "dt", "t", "measured_dwdt", "predicted_dwdt", "boundary_term", "relerr"]);
    let mut errors = Vec::new();
    for level in 0..2usize {
        let f = 1usize << level;
        let r = [res[0] * f, if res[1] == 1 { 1 } else { res[1] * f }];
        let grid = make_grid(kind.clone(), r)?;
        let start = delta_init(&grid, default_base(&grid), t0).map_err(|e| LabError::Config(e.to_string()))?;
        let rep = dissipation(&start, &solver, dt / f as f64)?;
        let rel = rep.match_relerr.unwrap_or(f64::NAN);
        errors.push(rel);
        table.push(vec![
            level.to_string(),
            r[0].to_string(),
            r[1].to_string(),
            num(dt / f as f64),
            num(rep.t),
            num(rep.measured_dwdt.unwrap_or(f64::NAN)),
            num(rep.predicted_dwdt),
            num(rep.boundary_term),
            num(rel),
        ]);
    }
    let ratio = errors[0] / errors[1];
    out.check("base_relerr", errors[0] < max_rel, format!("{:.3e} against {max_rel}", errors[0]));
    out.check("refinement_ratio", ratio >= min_ratio, format!("{ratio:.3} against {min_ratio}"));
    out.note("manifold", kind.name());
    out.constant("relerr_base", errors[0]);
    out.constant("relerr_refined", errors[1]);
    out.constant("refinement_ratio", ratio);
    out.plots.push((
        "relerr".into(),
        Plot::new("dissipation match under refinement", "level", "relative error").with("relerr", errors.iter().enumerate().map(|(k, e)| (k as f64, *e)).collect()),
    ));
    out.tables.push(("dissipation".into(), table));
    Ok(out)
}

fn liyau(cfg: &ExperimentConfig) -> Result<Outcome> {
    let grid = grid_from(cfg, ManifoldKind::unit_sphere(), None)?;
    let oracle = oracle_for(&grid)?;
    let base = default_base(&grid);
    let tol = cfg.tolerance("defect", 1e-3);
    let mask = pointwise_mask(&grid);
    let dist = distance_values(&grid, base)?;
    let line = profile_line(&grid, &dist);
    let n = grid.dim as f64;

    let mut out = Outcome::default();
    let mut table = Table::new(&["t", "max_liyau", "max_sharp", "liyau_below_sharp", "liyau_above_sharp"]);
    let mut plot = Plot::new("Li-Yau and sharp defects", "r", "defect");
    let times = kernel_times(cfg);
    let mut states = Vec::new();
    for (idx, &t) in times.iter().enumerate() {
        let s = kernel_state(&grid, &oracle, base, t)?;
        let ly = liyau_defect(&s)?;
        let sh = sharp_defect(&s)?;
        let (below, above) = defect_ordering(&s, &mask)?;
        let hi = masked_max(&ly.values, &mask);
        out.check(&format!("liyau_bounded_t{t}"), hi <= tol, format!("max {hi:.3e} against {tol:e}"));
        table.push(vec![num(t), num(hi), num(masked_max(&sh.values, &mask)), below.to_string(), above.to_string()]);
        if idx == times.len() / 2 {
            plot = plot
                .with(&format!("Li-Yau t = {t}"), line.iter().map(|&k| (dist[k], ly.values[k])).collect())
                .with(&format!("sharp t = {t}"), line.iter().map(|&k| (dist[k], sh.values[k])).collect());
        }
        states.push(s);
    }
    // Laplacian comparison Δr² ≤ 2n away from the cut locus.
    let lap = laplacian_comparison(&grid, base)?;
    let away = cut_mask(&grid, base, 4.0 * grid.spacing_scale())?;
    let cmask: Vec<bool> = away.iter().zip(&mask).map(|(a, b)| *a && *b).collect();
    let lap_max = masked_max(&lap.values, &cmask);
    out.check("laplacian_comparison", lap_max <= 2.0 * n + 1e-3, format!("max Δr² {lap_max:.6} against {}", 2.0 * n));
    let mut comparison = Table::new(&["r", "laplacian_r2"]);
    for &k in &line {
        if cmask[k] {
            comparison.push(vec![num(dist[k]), num(lap.values[k])]);
        }
    }
    let rig = rigidity_diagnostic(&states, &mask)?;
    let mut rigidity = Table::new(&["t", "hessian_defect", "trace_defect"]);
    for r in &rig {
        rigidity.push(vec![num(r.t), num(r.hessian_defect), num(r.trace_defect)]);
    }
    if grid.is_flat() {
        let worst = rig.iter().map(|r| r.hessian_defect.max(r.trace_defect)).fold(0.0, f64::max);
        out.check("euclidean_rigidity", worst < 1e-6, format!("max defect {worst:.3e}"));
    } else {
        let least = rig.iter().map(|r| r.hessian_defect).fold(f64::INFINITY, f64::min);
        out.constant("min_hessian_defect", least);
    }
    out.note("manifold", grid.kind.name());
    out.tables.push(("defects".into(), table));
    out.tables.push(("comparison".into(), comparison));
    out.tables.push(("rigidity".into(), rigidity));
    out.plots.push(("defects".into(), plot));
    Ok(out)
}

fn varadhan(cfg: &ExperimentConfig) -> Result<Outcome> {
    let grid = grid_from(cfg, ManifoldKind::unit_sphere(), Some([128, 16]))?;
    let oracle = oracle_for(&grid)?;
    let base = default_base(&grid);
    let mut times = cfg.taus.clone().unwrap_or_else(|| vec![0.025, 0.05, 0.1]);
    times.reverse();
    let dist = distance_values(&grid, base)?;
    let reach = 2f64.min(0.65 * dist.iter().cloned().fold(0.0, f64::max));
    let region: Vec<bool> = dist.iter().map(|d| *d <= reach).collect();
    let tab = varadhan_profile(&oracle, &grid, base, &times, &region)?;
    let line = profile_line(&grid, &dist);

    let mut out = Outcome::default();
    let mut table = Table::new(&["t", "max_error", "corrected_error"]);
    let mut plot = Plot::new("small-time limit of −4t log H", "r", "−4t log H − r²");
    for row in &tab.rows {
        table.push(vec![num(row.t), num(row.max_error), num(row.corrected_error)]);
        plot = plot.with(
            &format!("t = {}", row.t),
            line.iter().filter(|&&k| region[k]).map(|&k| (dist[k], row.scaled_log[k] - tab.r_sq[k])).collect(),
        );
    }
    out.check("corrected_error_decreasing", tab.corrected_decreasing(), "max |−4t log H − r² − 2nt log 4πt| over the region");
    out.note("raw_error_decreasing", tab.decreasing().to_string());
    for row in &tab.rows {
        out.constant(&format!("raw_error_t{}", row.t), row.max_error);
    }
    out.note("manifold", grid.kind.name());
    out.constant("region_radius", reach);
    out.tables.push(("varadhan".into(), table));
    out.plots.push(("varadhan".into(), plot));
    Ok(out)
}

fn log_spaced(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    (0..count).map(|k| (lo.ln() + (hi.ln() - lo.ln()) * k as f64 / (count - 1) as f64).exp()).collect()
}

fn mu_curve_experiment(cfg: &ExperimentConfig) -> Result<Outcome> {
    let kinds = match &cfg.manifold {
        Some(k) => vec![k.clone()],
        None => vec![ManifoldKind::unit_sphere(), ManifoldKind::FlatTorus { lx: 2.0 * PI, ly: 2.0 * PI }],
    };
    let taus = cfg.taus.clone().unwrap_or_else(|| log_spaced(0.01, 10.0, 12));
    let slack = cfg.tolerance("mu", 1e-4);
    let mut out = Outcome::default();
    let mut table = Table::new(&["model", "tau", "mu", "start", "iterations", "el_residual", "multiplier_gap", "converged"]);
    let mut plot = Plot::new("μ(τ)", "log10 τ", "μ");
    for kind in kinds {
        let default_res = match kind {
            ManifoldKind::WarpedSurface { .. } => [128, 16],
            ManifoldKind::Circle { .. } => [256, 1],
            _ => [64, 64],
        };
        let grid = make_grid(kind, cfg.resolution.unwrap_or(default_res))?;
        let name = grid.kind.name();
        let form = if grid.is_closed() && grid.is_flat() { EnergyForm::Spectral } else { EnergyForm::Grid };
        let opts = MuOptions { form, ..MuOptions::default() };
        let dist = distance_values(&grid, default_base(&grid))?;
        let curve = mu_curve(&grid, &taus, &dist, &opts)?;
        for e in &curve {
            let r = &e.result;
            table.push(vec![
                name.into(),
                num(e.tau),
                num(r.mu),
                e.start.into(),
                r.iterations.to_string(),
                num(r.el_residual),
                num(r.multiplier_gap),
                r.converged.to_string(),
            ]);
        }
        let unconverged = curve.iter().filter(|e| !e.result.converged).count();
        out.check(&format!("{name}_converged"), unconverged == 0, format!("{unconverged} of {} unconverged", curve.len()));
        let rises = curve.windows(2).filter(|w| w[1].result.mu > w[0].result.mu + slack).count();
        out.check(&format!("{name}_nonincreasing"), rises == 0, format!("{rises} rises beyond {slack:e}"));
        let top = curve.iter().map(|e| e.result.mu).fold(f64::NEG_INFINITY, f64::max);
        out.check(&format!("{name}_nonpositive"), top <= 1e-3, format!("max μ {top:.3e}"));
        if curve[0].tau <= 0.01 + 1e-12 {
            let first = curve[0].result.mu;
            out.check(&format!("{name}_small_tau_limit"), first > -0.05, format!("μ({:.3}) = {first:.4e}", curve[0].tau));
        }
        out.note(&format!("{name}_energy_form"), format!("{form:?}"));
        out.constant(&format!("{name}_mu_min"), curve.iter().map(|e| e.result.mu).fold(f64::INFINITY, f64::min));
        plot = plot.with(name, curve.iter().map(|e| (e.tau.log10(), e.result.mu)).collect());
    }
    out.plots.push(("mu".into(), plot));
    out.tables.push(("mu".into(), table));
    Ok(out)
}

fn lsi_euclidean(cfg: &ExperimentConfig, seed: u64) -> Result<Outcome> {
    let grid = grid_from(cfg, ManifoldKind::EuclideanBox { lx: 12.0, ly: 12.0 }, Some([128, 128]))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let tau = 0.5;
    let dist = distance_values(&grid, BasePoint::Point([0.0, 0.0]))?;
    let n = grid.dim as f64;
    let mut out = Outcome::default();

    // Minimizer from a centred, radially perturbed, widened start.
    let start = ScalarField::from_fn(&grid, |k| (-dist[k] * dist[k] / 5.0).exp() * (1.0 + 0.2 * dist[k].cos()));
    let res = minimize_mu(&grid, tau, &start, &MuOptions::default())?;
    let gauss: Vec<f64> = dist.iter().map(|d| ((2.0 * PI).powf(-0.5 * n) * (-d * d / 2.0).exp()).sqrt()).collect();
    let l2 = |v: &[f64]| v.iter().zip(&grid.node_volumes).map(|(x, w)| x * x * w).sum::<f64>().sqrt();
    let gnorm = l2(&gauss);
    let diff: Vec<f64> = res.psi.values.iter().zip(&gauss).map(|(a, b)| a - b / gnorm).collect();
    let distance = l2(&diff);
    let mu_tol = cfg.tolerance("mu", 5e-3);
    let dist_tol = cfg.tolerance("distance", 0.02);
    out.check("minimizer_converged", res.converged, format!("{} iterations, residual {:.3e}", res.iterations, res.el_residual));
    out.check("mu_half_is_zero", res.mu.abs() <= mu_tol, format!("μ(½) = {:.4e}", res.mu));
    out.check("minimizer_is_gaussian", distance <= dist_tol, format!("L² distance {distance:.4e}"));
    out.constant("mu_half", res.mu);
    out.constant("gaussian_distance", distance);

    // Gradient against central differences along random directions.
    let energy = Energy::new(&grid, EnergyForm::Grid)?;
    let grad_tol = cfg.tolerance("gradient", 1e-5);
    let psi: Vec<f64> = res.psi.values.iter().map(|x| x * (1.0 + 0.1 * rng.gen::<f64>())).collect();
    let grad = w_gradient(&energy, &psi, tau);
    let mut gtable = Table::new(&["direction", "finite_difference", "analytic", "relerr"]);
    let mut worst: f64 = 0.0;
    for k in 0..20 {
        let d: Vec<f64> = psi.iter().map(|p| p * (rng.gen::<f64>() - 0.5)).collect();
        let eps = 1e-4;
        let shift = |s: f64| psi.iter().zip(&d).map(|(a, b)| a + s * b).collect::<Vec<f64>>();
        let fd = (w_integral(&energy, &shift(eps), tau) - w_integral(&energy, &shift(-eps), tau)) / (2.0 * eps);
        let an: f64 = grad.iter().zip(&d).zip(&grid.node_volumes).map(|((g, x), w)| g * x * w).sum();
        let rel = (fd - an).abs() / an.abs().max(f64::MIN_POSITIVE);
        worst = worst.max(rel);
        gtable.push(vec![k.to_string(), num(fd), num(an), num(rel)]);
    }
    out.check("gradient_matches_differences", worst < grad_tol, format!("worst relative error {worst:.3e}"));

    // Scaling identity for random positive fields and factors.
    let mut stable = Table::new(&["pair", "lambda", "lhs", "rhs"]);
    let mut worst_scaling: f64 = 0.0;
    for k in 0..100 {
        let amp: f64 = rng.gen_range(0.2..2.0);
        let width: f64 = rng.gen_range(0.5..3.0);
        let phi: Vec<f64> = dist.iter().map(|d| amp * (-d * d / (2.0 * width)).exp() * (1.0 + 0.3 * rng.gen::<f64>())).collect();
        let lambda = (rng.gen_range(-2.0f64..2.0)).exp();
        let (l, r) = scaling_identity_check(&energy, &phi, lambda, rng.gen_range(0.1..2.0))?;
        worst_scaling = worst_scaling.max((l - r).abs());
        stable.push(vec![k.to_string(), num(lambda), num(l), num(r)]);
    }
    out.check("scaling_identity", worst_scaling < 1e-10, format!("worst gap {worst_scaling:.3e}"));

    // The sharp Euclidean inequality on Gaussians of other widths and perturbed Gaussians.
    let mut samples = Vec::new();
    let mut expected = Vec::new();
    for s2 in [1.0, 0.5, 2.0] {
        samples.push(ScalarField::from_fn(&grid, |k| dist[k] * dist[k] / (2.0 * s2)));
        expected.push(Some(0.5 * n * (1.0 / s2 - 1.0 + s2.ln())));
    }
    for _ in 0..5 {
        let a: f64 = rng.gen_range(-0.5..0.5);
        let b: f64 = rng.gen_range(0.5..2.0);
        samples.push(ScalarField::from_fn(&grid, |k| {
            let p = grid.cartesian(k);
            0.5 * dist[k] * dist[k] + a * (b * p[0]).sin() * (p[1] / b).cos()
        }));
        expected.push(None);
    }
    let values = euclidean_lsi_check(&grid, &samples)?;
    let mut ltable = Table::new(&["sample", "value", "expected"]);
    let mut lsi_ok = true;
    for (k, (v, e)) in values.iter().zip(&expected).enumerate() {
        lsi_ok &= *v >= -mu_tol;
        if let Some(e) = e {
            lsi_ok &= (v - e).abs() <= mu_tol;
        }
        ltable.push(vec![k.to_string(), num(*v), e.map(num).unwrap_or_default()]);
    }
    out.check("euclidean_lsi", lsi_ok, format!("min value {:.4e}", values.iter().cloned().fold(f64::INFINITY, f64::min)));

    let line = profile_line(&grid, &dist);
    out.plots.push((
        "minimizer".into(),
        Plot::new("minimizer at τ = ½", "r", "ψ")
            .with("ψ", line.iter().map(|&k| (dist[k], res.psi.values[k])).collect())
            .with("Gaussian", line.iter().map(|&k| (dist[k], gauss[k] / gnorm)).collect()),
    ));
    out.tables.push(("gradient".into(), gtable));
    out.tables.push(("scaling".into(), stable));
    out.tables.push(("lsi".into(), ltable));
    Ok(out)
}

#[derive(Debug, Clone)]
struct SymmetrizeSample {
    worst_cells: f64,
    layer_relerr: f64,
    energy: (f64, f64),
    functional: (f64, f64),
    levels: usize,
    degenerate: usize,
    chain_failures: usize,
    worst_comparison: f64,
}

fn symmetrize_one(grid: &Arc<ManifoldGrid>, seed: u64) -> Result<SymmetrizeSample> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let bumps = rng.gen_range(2..5);
    let phi = random_bump_field(grid, &mut rng, bumps)?.values;
    let p = distribution(grid, &phi, DEFAULT_THRESHOLDS)?;
    let cell = grid.node_volumes.iter().cloned().fold(0.0, f64::max);
    let worst_cells = p
        .thresholds
        .iter()
        .zip(&p.measure)
        .map(|(&t, &f)| (p.rearranged_measure_at(t) - f).abs() / cell)
        .fold(0.0, f64::max);
    let (lhs, rhs) = layer_cake(grid, &phi, &p, |s| if s > 0.0 { s * s * (s * s).ln() } else { 0.0 })?;
    let layer_relerr = (lhs - rhs).abs() / rhs.abs();
    let g = radial_rearrangement(&p, grid.spacing_scale(), DEFAULT_RADIAL_CELLS);
    let energy = dirichlet_compare(grid, &phi, &p, &g)?;
    let functional = (functional_32(grid, &phi), functional_32_radial(&g));
    let grad_max = gradient_frame_values(grid, &phi).iter().map(|v| v[0].hypot(v[1])).fold(0.0, f64::max);
    let (mut levels, mut degenerate, mut chain_failures) = (0, 0, 0);
    let mut worst_comparison = f64::INFINITY;
    for j in 1..32 {
        match coarea_chain(grid, &phi, p.max_value() * j as f64 / 32.0, 0.05 * grad_max) {
            Ok(d) => {
                levels += 1;
                if !(d.holder_holds && d.comparison_holds) {
                    chain_failures += 1;
                }
                worst_comparison = worst_comparison.min(d.grad_integral / d.ball_grad_integral - 1.0);
            }
            Err(LabError::DegenerateLevel { .. }) => degenerate += 1,
            Err(e) => return Err(e),
        }
    }
    Ok(SymmetrizeSample { worst_cells, layer_relerr, energy, functional, levels, degenerate, chain_failures, worst_comparison })
}

fn symmetrize(cfg: &ExperimentConfig, seed: u64) -> Result<Outcome> {
    let grid = grid_from(cfg, ManifoldKind::EuclideanBox { lx: 8.0, ly: 8.0 }, Some([256, 256]))?;
    let count = cfg.samples.unwrap_or(50);
    let seeds: Vec<u64> = {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..count).map(|_| rng.gen()).collect()
    };
    let samples = par_map(&seeds, |&s| symmetrize_one(&grid, s)).into_iter().collect::<Result<Vec<_>>>()?;

    let mut out = Outcome::default();
    let mut table = Table::new(&[
        "sample",
        "equimeasurability_cells",
        "layer_cake_relerr",
        "energy_phi",
        "energy_g",
        "functional_phi",
        "functional_g",
        "levels",
        "degenerate_levels",
        "worst_comparison",
    ]);
    for (k, s) in samples.iter().enumerate() {
        table.push(vec![
            k.to_string(),
            num(s.worst_cells),
            num(s.layer_relerr),
            num(s.energy.0),
            num(s.energy.1),
            num(s.functional.0),
            num(s.functional.1),
            s.levels.to_string(),
            s.degenerate.to_string(),
            num(s.worst_comparison),
        ]);
    }
    let worst = |f: &dyn Fn(&SymmetrizeSample) -> f64| samples.iter().map(f).fold(f64::NEG_INFINITY, f64::max);
    let eq = worst(&|s| s.worst_cells);
    out.check("equimeasurability", eq <= 1.0, format!("worst {eq:.3} cell volumes"));
    let lc = worst(&|s| s.layer_relerr);
    out.check("layer_cake", lc <= 1e-3, format!("worst relative gap {lc:.3e}"));
    let e_bad = samples.iter().filter(|s| s.energy.0 < s.energy.1).count();
    out.check("dirichlet_comparison", e_bad == 0, format!("{e_bad} of {count} samples violate"));
    let chain_bad: usize = samples.iter().map(|s| s.chain_failures).sum();
    let levels: usize = samples.iter().map(|s| s.levels).sum();
    out.check("coarea_chain", chain_bad == 0 && levels > 0, format!("{chain_bad} failures over {levels} non-degenerate levels"));
    let f_bad = samples.iter().filter(|s| s.functional.0 < s.functional.1).count();
    out.check("functional_decreases", f_bad == 0, format!("{f_bad} of {count} samples violate"));
    out.constant("min_energy_gap", samples.iter().map(|s| (s.energy.0 - s.energy.1) / s.energy.0).fold(f64::INFINITY, f64::min));
    out.constant("min_rearranged_functional", samples.iter().map(|s| s.functional.1).fold(f64::INFINITY, f64::min));
    out.plots.push((
        "energies".into(),
        Plot::new("Dirichlet energy before and after rearrangement", "sample", "energy")
            .with("φ", samples.iter().enumerate().map(|(k, s)| (k as f64, s.energy.0)).collect())
            .with("rearranged", samples.iter().enumerate().map(|(k, s)| (k as f64, s.energy.1)).collect()),
    ));
    out.tables.push(("samples".into(), table));
    Ok(out)
}

fn profile_table(table: &mut Table, name: &str, p: &VolumeProfile) {
    let ratios = p.area_volume_ratios();
    let bishop = p.bishop_ratios();
    for k in 0..p.radii.len() {
        table.push(vec![name.into(), num(p.radii[k]), num(p.volumes[k]), num(p.areas[k]), num(bishop[k]), num(ratios[k])]);
    }
}

fn growth(cfg: &ExperimentConfig) -> Result<Outcome> {
    let mut out = Outcome::default();
    let band = cfg.tolerance("band", 0.05);
    let grid = make_grid(ManifoldKind::EuclideanBox { lx: 4.0, ly: 4.0 }, [128, 128])?;
    let base = BasePoint::Point([0.0, 0.0]);
    let t0 = cfg.time.t0.unwrap_or(0.01);
    let dt = cfg.time.dt.unwrap_or(0.0025);
    let t_end = cfg.time.t_end.unwrap_or(0.1);
    if t_end <= t0 {
        return Err(LabError::Config(format!("time.t_end ({t_end}) must exceed time.t0 ({t0})")));
    }
    let steps = ((t_end - t0) / dt).round().max(1.0) as usize;
    let start = kernel_state(&grid, &KernelOracle::new(OracleKind::Euclidean), base, t0)?;
    let traj = HeatSolver::default().trajectory(&start, dt, steps)?;
    let rows = kernel_entropy_bound(&traj, base)?;
    let n = grid.dim as f64;
    let mut table = Table::new(&["t", "w", "dirichlet", "entropy", "normalization", "moment", "entropy_excess"]);
    for r in &rows {
        table.push(vec![num(r.t), num(r.w), num(r.dirichlet), num(r.entropy), num(r.normalization), num(r.moment), num(r.entropy_excess)]);
    }
    let w_worst = rows.iter().map(|r| r.w.abs()).fold(0.0, f64::max);
    out.check("box_w_band", w_worst <= band, format!("max |W| {w_worst:.3e} against {band}"));
    let d_worst = rows.iter().map(|r| r.dirichlet).fold(f64::NEG_INFINITY, f64::max);
    out.check("dirichlet_bound", d_worst <= 0.5 * n * 1.01, format!("max 4t∫|∇v|² {d_worst:.5} against n/2 = {}", 0.5 * n));
    let moment_max = rows.iter().map(|r| r.moment / n).fold(0.0, f64::max);
    out.constant("moment_constant", moment_max);
    out.constant("entropy_excess_max", rows.iter().map(|r| r.entropy_excess).fold(f64::NEG_INFINITY, f64::max));

    // Torus: W approaches the uniform value from above.
    let torus = make_grid(ManifoldKind::FlatTorus { lx: 2.0 * PI, ly: 2.0 * PI }, [64, 64])?;
    let oracle = oracle_for(&torus)?;
    let tstates = [1.0, 2.0, 4.0].iter().map(|&t| kernel_state(&torus, &oracle, BasePoint::Node(0), t)).collect::<Result<Vec<_>>>()?;
    let trows = kernel_entropy_bound(&tstates, BasePoint::Node(0))?;
    let excess: Vec<f64> = trows.iter().map(|r| r.w - ((4.0 * PI * PI).ln() - (4.0 * PI * r.t).ln() - 2.0)).collect();
    out.check(
        "torus_w_decays_to_uniform",
        excess.iter().all(|e| *e >= 0.0) && excess.windows(2).all(|w| w[1] < w[0]),
        format!("excess over the uniform value {:?}", excess.iter().map(|e| format!("{e:.4e}")).collect::<Vec<_>>()),
    );

    // Volume profiles.
    let radii: Vec<f64> = (1..=8).map(|k| 0.2 * k as f64).collect();
    let bp = volume_profile(&grid, base, &radii)?;
    let sphere = make_grid(ManifoldKind::unit_sphere(), [256, 16])?;
    let sp = volume_profile(&sphere, BasePoint::Pole, &radii)?;
    let mut ptable = Table::new(&["model", "r", "volume", "area", "volume_over_rn", "r_area_over_volume"]);
    profile_table(&mut ptable, "box", &bp);
    profile_table(&mut ptable, "sphere", &sp);
    let h = grid.spacing_scale();
    let box_err = bp.radii.iter().zip(&bp.volumes).map(|(r, v)| (v - PI * r * r).abs() / (2.0 * PI * r * h)).fold(0.0, f64::max);
    out.check("box_ball_volumes", box_err <= 1.0, format!("max |V − πr²| / (2πr h) = {box_err:.3e}"));
    let sph_err = sp.radii.iter().zip(&sp.volumes).map(|(r, v)| (v - 2.0 * PI * (1.0 - r.cos())).abs()).fold(0.0, f64::max);
    out.check("sphere_ball_volumes", sph_err <= 1e-3, format!("max error {sph_err:.3e}"));
    let bishop_ok = [&bp, &sp].iter().all(|p| p.bishop_ratios().windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-3)));
    out.check("bishop_monotone", bishop_ok, "V(r)/rⁿ nonincreasing on box and sphere");
    // The smeared count blurs A(r) over a few cells, so small balls are left out.
    let box_av = bp
        .radii
        .iter()
        .zip(bp.area_volume_ratios())
        .filter(|(r, _)| **r >= 10.0 * h)
        .map(|(_, x)| (x - n).abs())
        .fold(0.0, f64::max);
    out.check("box_area_volume_ratio", box_av <= 2e-2, format!("max |rA/V − n| {box_av:.3e} for r ≥ 10h"));
    let sph_av = sp.area_volume_ratios().iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    out.check("sphere_area_volume_ratio", sph_av < n, format!("max rA/V {sph_av:.5}"));

    out.plots.push(("w".into(), Plot::new("W of the box heat kernel", "t", "W").with("W", rows.iter().map(|r| (r.t, r.w)).collect())));
    out.plots.push((
        "volume_ratio".into(),
        Plot::new("V(r)/rⁿ", "r", "V/rⁿ")
            .with("box", bp.radii.iter().zip(bp.bishop_ratios()).map(|(r, v)| (*r, v)).collect())
            .with("sphere", sp.radii.iter().zip(sp.bishop_ratios()).map(|(r, v)| (*r, v)).collect()),
    ));
    out.tables.push(("entropy".into(), table));
    out.tables.push(("profiles".into(), ptable));
    Ok(out)
}

fn noncollapse(cfg: &ExperimentConfig) -> Result<Outcome> {
    let radius = cfg.radius.unwrap_or(1.0);
    if radius > 1.5 {
        return Err(LabError::Config(format!("growth.radius {radius} exceeds the model range (≤ 1.5)")));
    }
    let mut out = Outcome::default();
    let constants = GrowthConstants::new(2);
    out.constant("eta", constants.eta);
    out.constant("c1", constants.c1);
    out.constant("c2", constants.c2);
    out.constant("c3", constants.c3);
    out.constant("zeta_grad_max", constants.zeta_grad_max);

    let models: Vec<(&str, Arc<ManifoldGrid>, BasePoint, EnergyForm)> = vec![
        ("box", make_grid(ManifoldKind::EuclideanBox { lx: 4.0, ly: 4.0 }, [128, 128])?, BasePoint::Point([0.0, 0.0]), EnergyForm::Grid),
        ("sphere", make_grid(ManifoldKind::unit_sphere(), [128, 16])?, BasePoint::Pole, EnergyForm::Grid),
        ("torus", make_grid(ManifoldKind::FlatTorus { lx: 2.0 * PI, ly: 2.0 * PI }, [64, 64])?, BasePoint::Node(0), EnergyForm::Spectral),
    ];
    let mut table = Table::new(&[
        "model", "radius", "a", "mu", "kappa", "volume_over_rn", "b", "b_lower", "b_upper", "test_value", "c3_plus_b", "doubling_holds",
    ]);
    let mut dtable = Table::new(&["model", "k", "radius", "volume", "eta_k_volume"]);
    let mut diam = Table::new(&["model", "v0", "kappa", "bound", "diameter"]);
    let mut plot = Plot::new("doubling chain", "log2 r", "log2 V");
    for (name, grid, base, form) in &models {
        let dist = distance_values(grid, *base)?;
        let mu = mu_curve(grid, &[radius * radius], &dist, &MuOptions { form: *form, ..MuOptions::default() })?;
        let mu = &mu[0].result;
        out.check(&format!("{name}_mu_converged"), mu.converged, format!("residual {:.3e}", mu.el_residual));
        let a = (-mu.mu).max(0.0) + 0.1;
        let rep = mu_lower_to_volume(grid, *base, a, radius)?;
        table.push(vec![
            name.to_string(),
            num(radius),
            num(a),
            num(mu.mu),
            num(rep.kappa),
            num(rep.ratio),
            num(rep.b),
            num(rep.b_lower),
            num(rep.b_upper),
            num(rep.test_value),
            num(constants.c3 + rep.b),
            rep.doubling_holds.to_string(),
        ]);
        out.check(&format!("{name}_noncollapsed"), rep.noncollapsed(), format!("V/Rⁿ = {:.5} ≥ κ = {:.3e}", rep.ratio, rep.kappa));
        out.check(&format!("{name}_b_bracket"), !rep.doubling_holds || rep.bracket_holds(), format!("{:.4} ≤ {:.4} ≤ {:.4}", rep.b_lower, rep.b, rep.b_upper));
        out.check(&format!("{name}_test_bound"), rep.test_bound_holds, format!("{:.4} ≤ C₃ + B = {:.4}", rep.test_value, constants.c3 + rep.b));
        let n = grid.dim as f64;
        out.check(
            &format!("{name}_test_above_mu"),
            rep.test_value - n >= mu.mu - 1e-6,
            format!("W(h) = {:.5} ≥ μ = {:.5}", rep.test_value - n, mu.mu),
        );
        let dyadic: Vec<f64> = (0..5).map(|k| radius / 2f64.powi(k)).collect();
        let prof = volume_profile(grid, *base, &dyadic)?;
        let chain = doubling_iteration(&prof, constants.eta);
        for k in 0..prof.radii.len() {
            dtable.push(vec![name.to_string(), k.to_string(), num(prof.radii[k]), num(prof.volumes[k]), num(constants.eta.powi(k as i32) * prof.volumes[0])]);
        }
        if *name != "torus" {
            out.check(&format!("{name}_doubling_breaks"), chain.breaks_at == Some(1), format!("chain breaks at {:?}", chain.breaks_at));
        }
        plot = plot.with(name, prof.radii.iter().zip(&prof.volumes).map(|(r, v)| (r.log2(), v.log2())).collect());
        if *name != "box" {
            let (v0, diameter) = if *name == "sphere" { (4.0 * PI, PI) } else { (4.0 * PI * PI, 2f64.sqrt() * PI) };
            let bound = diameter_bound(v0, rep.kappa)?;
            diam.push(vec![name.to_string(), num(v0), num(rep.kappa), num(bound), num(diameter)]);
            out.check(&format!("{name}_diameter_bound"), bound >= diameter, format!("bound {bound:.3e} ≥ {diameter:.5}"));
        }
    }
    let dyadic: Vec<f64> = (0..6).map(|k| 2f64.powi(-k)).collect();
    let synthetic = VolumeProfile::synthetic(&dyadic, 2, |r| r.powf(3.5));
    let chain = doubling_iteration(&synthetic, constants.eta);
    out.check(
        "synthetic_collapse_flagged",
        chain.anomalous,
        format!("exponent {:.4} against n log₂ 3 = {:.4}", chain.exponent, chain.exponent_bound),
    );
    plot = plot.with("r^3.5", synthetic.radii.iter().zip(&synthetic.volumes).map(|(r, v)| (r.log2(), v.log2())).collect());
    out.tables.push(("noncollapse".into(), table));
    out.tables.push(("doubling".into(), dtable));
    out.tables.push(("diameter".into(), diam));
    out.plots.push(("doubling".into(), plot));
    Ok(out)
}
