//! Acceptance run: one pass/fail line per criterion.
//!
//! Criterion 10 (raw small-time limit decreasing on the sample times) cannot hold: the
//! kernel prefactor contributes 2nt·log(4πt) to −4t log H − r², and its size grows as t
//! drops from 0.1 to 0.025. It is evaluated as stated and its failure is reported but
//! does not fail the run.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::sync::Arc;
use std::time::Instant;

use entropy_lab_core::entropy::{dissipation, entropy_report, lemma_residuals, pointwise_w, w_functional};
use entropy_lab_core::geometry::{build_grid, cut_mask, distance_values, gradient_frame_values, BasePoint, ManifoldGrid, ManifoldKind, ScalarField};
use entropy_lab_core::growth::{diameter_bound, doubling_iteration, kernel_entropy_bound, mu_lower_to_volume, volume_profile, GrowthConstants, VolumeProfile};
use entropy_lab_core::harnack::{liyau_defect, sharp_defect, varadhan_profile};
use entropy_lab_core::heat::{delta_init, HeatSolver, HeatState, KernelOracle, OracleKind};
use entropy_lab_core::logsob::{minimize_mu, mu_curve, scaling_identity_check, w_gradient, w_integral, Energy, EnergyForm, MuOptions};
use entropy_lab_core::rearrange::{
    coarea_chain, dirichlet_compare, distribution, functional_32, functional_32_radial, layer_cake, radial_rearrangement, random_bump_field,
    DEFAULT_RADIAL_CELLS, DEFAULT_THRESHOLDS,
};
use entropy_lab_core::{LabError, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const UNATTAINABLE: [usize; 1] = [10];

type Criterion = fn() -> Result<(bool, String)>;

fn grid(kind: ManifoldKind, res: [usize; 2]) -> Arc<ManifoldGrid> {
    Arc::new(build_grid(kind, res).expect("grid"))
}

fn torus() -> ManifoldKind {
    ManifoldKind::FlatTorus { lx: 2.0 * PI, ly: 2.0 * PI }
}

fn circle() -> ManifoldKind {
    ManifoldKind::Circle { length: 2.0 * PI }
}

fn kernel(g: &Arc<ManifoldGrid>, oracle: &KernelOracle, base: BasePoint, t: f64) -> Result<HeatState> {
    HeatState::new(ScalarField::new(g.clone(), oracle.values(g, base, t)?)?, t, 0.0)
}

fn masked<'a>(v: &'a [f64], m: &'a [bool]) -> impl Iterator<Item = f64> + 'a {
    v.iter().zip(m).filter(|(_, k)| **k).map(|(x, _)| *x)
}

fn max_abs(v: &[f64], m: &[bool]) -> f64 {
    masked(v, m).fold(0.0, |a, x| a.max(x.abs()))
}

fn refined(res: [usize; 2], f: usize) -> [usize; 2] {
    [res[0] * f, if res[1] == 1 { 1 } else { res[1] * f }]
}

fn euclidean_equality() -> Result<(bool, String)> {
    let g = grid(ManifoldKind::EuclideanBox { lx: 4.0, ly: 4.0 }, [256, 256]);
    let oracle = KernelOracle::new(OracleKind::Euclidean);
    let mask = g.interior_mask(2);
    let mut worst = [0.0f64; 4];
    for k in 0..5 {
        let t = 0.01 * (k + 1) as f64;
        let s = kernel(&g, &oracle, BasePoint::Point([0.0, 0.0]), t)?;
        worst[0] = worst[0].max(w_functional(&s)?.abs());
        worst[1] = worst[1].max(max_abs(&pointwise_w(&s)?.values, &mask));
        worst[2] = worst[2].max(max_abs(&liyau_defect(&s)?.values, &mask));
        worst[3] = worst[3].max(entropy_report(&s)?.predicted_dwdt.abs());
    }
    Ok((worst.iter().all(|w| *w < 5e-3), format!("|W| {:.2e}, pointwise {:.2e}, Li-Yau {:.2e}, dW/dt {:.2e}", worst[0], worst[1], worst[2], worst[3])))
}

fn monotone_run(g: &Arc<ManifoldGrid>, base: BasePoint, t0: f64, dt: f64, steps: usize) -> Result<Vec<entropy_lab_core::entropy::EntropyReport>> {
    let traj = HeatSolver::default().trajectory(&delta_init(g, base, t0)?, dt, steps)?;
    traj.iter().map(entropy_report).collect()
}

fn monotonicity() -> Result<(bool, String)> {
    let mut ok = true;
    let mut detail = Vec::new();
    for (name, g, base) in [
        ("sphere", grid(ManifoldKind::unit_sphere(), [256, 16]), BasePoint::Pole),
        ("torus", grid(torus(), [128, 128]), BasePoint::Node(0)),
    ] {
        let start = Instant::now();
        // The torus kernel is Euclidean to ~1e-17 until t ≈ 0.2, below the discretization drift of W.
        let t0 = if name == "torus" { 0.25 } else { 0.05 };
        let reps = monotone_run(&g, base, t0, 0.01, 100)?;
        let rise = reps.windows(2).map(|w| w[1].w - w[0].w).fold(f64::NEG_INFINITY, f64::max);
        let pred = reps.iter().map(|r| r.predicted_dwdt).fold(f64::NEG_INFINITY, f64::max);
        let secs = start.elapsed().as_secs_f64();
        ok &= rise <= 1e-8 && pred <= 0.0 && secs < 60.0;
        detail.push(format!("{name}: max step {rise:.2e}, max predicted {pred:.2e}, {secs:.1} s"));
    }
    Ok((ok, detail.join("; ")))
}

fn dissipation_match() -> Result<(bool, String)> {
    let start = Instant::now();
    let mut ok = true;
    let mut detail = Vec::new();
    for (name, kind, res, base, t0, dt) in [
        ("circle", circle(), [64, 1], BasePoint::Node(0), 1.0, 0.02),
        ("torus", torus(), [32, 32], BasePoint::Node(0), 0.5, 0.02),
        ("sphere", ManifoldKind::unit_sphere(), [64, 16], BasePoint::Pole, 0.2, 0.01),
    ] {
        let mut errs = [0.0; 2];
        for (lvl, e) in errs.iter_mut().enumerate() {
            let f = 1 << lvl;
            let g = grid(kind.clone(), refined(res, f));
            let rep = dissipation(&delta_init(&g, base, t0)?, &HeatSolver::default(), dt / f as f64)?;
            *e = rep.match_relerr.unwrap_or(f64::INFINITY);
        }
        ok &= errs[0] < 0.05 && errs[0] / errs[1] >= 1.7;
        detail.push(format!("{name} {:.2e} ratio {:.2}", errs[0], errs[0] / errs[1]));
    }
    let secs = start.elapsed().as_secs_f64();
    Ok((ok && secs < 180.0, format!("{}; {secs:.1} s", detail.join(", "))))
}

fn pointwise() -> Result<(bool, String)> {
    let times = [0.05, 0.1, 0.2];
    let mut ok = true;
    let mut detail = Vec::new();
    for (name, kind, res, base) in [
        ("circle", circle(), [256, 1], BasePoint::Node(0)),
        ("torus", torus(), [128, 128], BasePoint::Node(0)),
        ("sphere", ManifoldKind::unit_sphere(), [256, 16], BasePoint::Pole),
    ] {
        let g = grid(kind, res);
        let oracle = KernelOracle::for_grid(&g).expect("oracle");
        let mut hi = f64::NEG_INFINITY;
        for t in times {
            hi = hi.max(sharp_defect(&kernel(&g, &oracle, base, t)?)?.max());
        }
        ok &= hi <= 1e-3;
        detail.push(format!("{name} max {hi:.2e}"));
    }
    let floor = |res: [usize; 2]| -> Result<f64> {
        let g = grid(ManifoldKind::unit_sphere(), res);
        let oracle = KernelOracle::for_grid(&g).expect("oracle");
        let m = cut_mask(&g, BasePoint::Pole, 1.0)?;
        let mut lo = f64::INFINITY;
        for t in times {
            lo = masked(&sharp_defect(&kernel(&g, &oracle, BasePoint::Pole, t)?)?.values, &m).fold(lo, f64::min);
        }
        Ok(lo)
    };
    let (coarse, fine) = (floor([128, 16])?, floor([256, 16])?);
    ok &= fine <= -0.01 && coarse <= -0.01 && (fine - coarse).abs() <= 0.05 * fine.abs();
    detail.push(format!("sphere floor {coarse:.4} at 128, {fine:.4} at 256"));
    Ok((ok, detail.join(", ")))
}

fn lemma_orders() -> Result<(bool, String)> {
    let mut ok = true;
    let mut detail = Vec::new();
    for (name, kind, res, t0, dt) in [("circle", circle(), [64, 1], 0.5, 0.01), ("torus", torus(), [32, 32], 0.5, 0.02)] {
        let mut res_by_level = Vec::new();
        for lvl in 0..3 {
            let f = 1 << lvl;
            let g = grid(kind.clone(), refined(res, f));
            let tr = HeatSolver::default().trajectory(&delta_init(&g, BasePoint::Node(0), t0)?, dt / f as f64, 2)?;
            let mask = cut_mask(&g, BasePoint::Node(0), 1.0)?;
            res_by_level.push(lemma_residuals([&tr[0], &tr[1], &tr[2]], &mask)?);
        }
        let orders: Vec<f64> = res_by_level
            .windows(2)
            .flat_map(|w| [(w[0].0 / w[1].0).log2(), (w[0].1 / w[1].1).log2()])
            .collect();
        let least = orders.iter().cloned().fold(f64::INFINITY, f64::min);
        ok &= least >= 1.0;
        detail.push(format!("{name} min order {least:.2}"));
    }
    Ok((ok, detail.join(", ")))
}

fn mu_solver() -> Result<(bool, String)> {
    let start = Instant::now();
    let g = grid(ManifoldKind::EuclideanBox { lx: 12.0, ly: 12.0 }, [128, 128]);
    let d = distance_values(&g, BasePoint::Point([0.0, 0.0]))?;
    let init = ScalarField::from_fn(&g, |k| (-d[k] * d[k] / 5.0).exp() * (1.0 + 0.2 * d[k].cos()));
    let res = minimize_mu(&g, 0.5, &init, &MuOptions::default())?;
    let gauss: Vec<f64> = d.iter().map(|r| (-r * r / 4.0).exp() / (2.0 * PI).sqrt()).collect();
    let norm = gauss.iter().zip(&g.node_volumes).map(|(x, w)| x * x * w).sum::<f64>().sqrt();
    let dist = res.psi.values.iter().zip(&gauss).zip(&g.node_volumes).map(|((a, b), w)| (a - b / norm).powi(2) * w).sum::<f64>().sqrt();
    let mut ok = res.converged && res.mu.abs() <= 5e-3 && dist < 0.02;
    let mut detail = vec![format!("μ(½) {:.2e}, L² distance {dist:.2e}", res.mu)];

    let taus: Vec<f64> = (0..12).map(|k| (0.01f64.ln() + 1000f64.ln() * k as f64 / 11.0).exp()).collect();
    for (name, gg, base, form) in [
        ("sphere", grid(ManifoldKind::unit_sphere(), [128, 16]), BasePoint::Pole, EnergyForm::Grid),
        ("torus", grid(torus(), [64, 64]), BasePoint::Node(0), EnergyForm::Spectral),
    ] {
        let dd = distance_values(&gg, base)?;
        let curve = mu_curve(&gg, &taus, &dd, &MuOptions { form, ..MuOptions::default() })?;
        let mu: Vec<f64> = curve.iter().map(|e| e.result.mu).collect();
        let conv = curve.iter().all(|e| e.result.converged);
        let mono = mu.windows(2).all(|w| w[1] <= w[0] + 1e-4);
        let top = mu.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        ok &= conv && mono && top <= 1e-3 && mu[0] > -0.05;
        detail.push(format!("{name} μ(0.01) {:.2e}, max {top:.2e}, monotone {mono}", mu[0]));
    }

    let energy = Energy::new(&g, EnergyForm::Grid)?;
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let psi: Vec<f64> = res.psi.values.iter().map(|x| x * (1.0 + 0.1 * rng.gen::<f64>())).collect();
    let grad = w_gradient(&energy, &psi, 0.5);
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let dir: Vec<f64> = psi.iter().map(|p| p * (rng.gen::<f64>() - 0.5)).collect();
        let at = |s: f64| psi.iter().zip(&dir).map(|(a, b)| a + s * b).collect::<Vec<f64>>();
        let eps = 1e-4;
        let fd = (w_integral(&energy, &at(eps), 0.5) - w_integral(&energy, &at(-eps), 0.5)) / (2.0 * eps);
        let an: f64 = grad.iter().zip(&dir).zip(&g.node_volumes).map(|((a, b), w)| a * b * w).sum();
        worst = worst.max((fd - an).abs() / an.abs());
    }
    ok &= worst < 1e-5;
    let secs = start.elapsed().as_secs_f64();
    detail.push(format!("gradient relerr {worst:.2e}, {secs:.1} s"));
    Ok((ok && secs < 300.0, detail.join("; ")))
}

fn scaling() -> Result<(bool, String)> {
    let g = grid(ManifoldKind::EuclideanBox { lx: 6.0, ly: 6.0 }, [64, 64]);
    let energy = Energy::new(&g, EnergyForm::Grid)?;
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let phi: Vec<f64> = (0..g.len()).map(|_| rng.gen_range(0.05..2.0)).collect();
        let lambda = rng.gen_range(-3.0f64..3.0).exp();
        let (l, r) = scaling_identity_check(&energy, &phi, lambda, rng.gen_range(0.05..5.0))?;
        worst = worst.max((l - r).abs());
    }
    Ok((worst <= 1e-10, format!("worst gap {worst:.2e} over 100 pairs")))
}

fn symmetrization() -> Result<(bool, String)> {
    let start = Instant::now();
    let g = grid(ManifoldKind::EuclideanBox { lx: 8.0, ly: 8.0 }, [256, 256]);
    let cell = g.node_volumes.iter().cloned().fold(0.0, f64::max);
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let (mut eq, mut lc) = (0.0f64, 0.0f64);
    let (mut energy_bad, mut chain_bad, mut functional_bad, mut levels) = (0, 0, 0, 0);
    for _ in 0..50 {
        let bumps = rng.gen_range(2..5);
        let phi = random_bump_field(&g, &mut rng, bumps)?.values;
        let p = distribution(&g, &phi, DEFAULT_THRESHOLDS)?;
        for (t, m) in p.thresholds.iter().zip(&p.measure) {
            eq = eq.max((p.rearranged_measure_at(*t) - m).abs() / cell);
        }
        let (l, r) = layer_cake(&g, &phi, &p, |s| s * s)?;
        lc = lc.max((l - r).abs() / r.abs());
        let rad = radial_rearrangement(&p, g.spacing_scale(), DEFAULT_RADIAL_CELLS);
        let (e_phi, e_g) = dirichlet_compare(&g, &phi, &p, &rad)?;
        energy_bad += usize::from(e_phi < e_g);
        functional_bad += usize::from(functional_32(&g, &phi) < functional_32_radial(&rad));
        let floor = 0.05 * gradient_frame_values(&g, &phi).iter().map(|v| v[0].hypot(v[1])).fold(0.0, f64::max);
        for j in 1..32 {
            match coarea_chain(&g, &phi, p.max_value() * j as f64 / 32.0, floor) {
                Ok(c) => {
                    levels += 1;
                    chain_bad += usize::from(!(c.holder_holds && c.comparison_holds));
                }
                Err(LabError::DegenerateLevel { .. }) => {}
                Err(e) => return Err(e),
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    let ok = eq <= 1.0 && lc <= 1e-3 && energy_bad == 0 && chain_bad == 0 && levels > 0 && functional_bad == 0 && secs < 120.0;
    Ok((
        ok,
        format!(
            "equimeasurability {eq:.2} cells, layer cake {lc:.1e}, energy violations {energy_bad}, chain failures {chain_bad}/{levels}, functional violations {functional_bad}, {secs:.1} s"
        ),
    ))
}

fn boundary_variant() -> Result<(bool, String)> {
    let disc = grid(ManifoldKind::EuclideanDisc { radius: 1.0 }, [64, 32]);
    let reps = monotone_run(&disc, BasePoint::Pole, 0.02, 0.005, 100)?;
    let rise = reps.windows(2).map(|w| w[1].w - w[0].w).fold(f64::NEG_INFINITY, f64::max);
    let bd = reps.iter().map(|r| r.boundary_term).fold(f64::NEG_INFINITY, f64::max);
    let bx = grid(ManifoldKind::EuclideanBox { lx: 8.0, ly: 8.0 }, [128, 128]);
    let breps = monotone_run(&bx, BasePoint::Point([0.0, 0.0]), 0.05, 0.01, 100)?;
    let bb = breps.iter().map(|r| r.boundary_term.abs()).fold(0.0, f64::max);
    Ok((rise <= 1e-8 && bd <= 0.0 && bb <= 1e-12, format!("disc max step {rise:.2e}, max boundary {bd:.2e}; box |boundary| {bb:.1e}")))
}

fn varadhan() -> Result<(bool, String)> {
    let times = [0.1, 0.05, 0.025];
    let mut ok = true;
    let mut detail = Vec::new();
    for (name, g, base) in [("circle", grid(circle(), [256, 1]), BasePoint::Node(0)), ("sphere", grid(ManifoldKind::unit_sphere(), [128, 16]), BasePoint::Pole)] {
        let oracle = KernelOracle::for_grid(&g).expect("oracle");
        let d = distance_values(&g, base)?;
        let reach = 2f64.min(0.65 * d.iter().cloned().fold(0.0, f64::max));
        let region: Vec<bool> = d.iter().map(|r| *r <= reach).collect();
        let tab = varadhan_profile(&oracle, &g, base, &times, &region)?;
        ok &= tab.decreasing();
        let errs: Vec<String> = tab.rows.iter().map(|r| format!("{:.3}", r.max_error)).collect();
        detail.push(format!("{name} {}", errs.join(" ")));
    }
    Ok((ok, detail.join(", ")))
}

fn growth() -> Result<(bool, String)> {
    let bx = grid(ManifoldKind::EuclideanBox { lx: 4.0, ly: 4.0 }, [128, 128]);
    let origin = BasePoint::Point([0.0, 0.0]);
    let start = kernel(&bx, &KernelOracle::new(OracleKind::Euclidean), origin, 0.01)?;
    let traj = HeatSolver::default().trajectory(&start, 0.0025, 36)?;
    let band = kernel_entropy_bound(&traj, origin)?.iter().map(|r| r.w.abs()).fold(0.0, f64::max);
    let mut ok = band <= 0.05;
    let mut detail = vec![format!("box |W| {band:.2e}")];

    let c = GrowthConstants::new(2);
    let sphere = grid(ManifoldKind::unit_sphere(), [128, 16]);
    let tor = grid(torus(), [64, 64]);
    for (name, g, base, form) in [
        ("box", bx.clone(), origin, EnergyForm::Grid),
        ("sphere", sphere.clone(), BasePoint::Pole, EnergyForm::Grid),
        ("torus", tor.clone(), BasePoint::Node(0), EnergyForm::Spectral),
    ] {
        let d = distance_values(&g, base)?;
        let mu = mu_curve(&g, &[1.0], &d, &MuOptions { form, ..MuOptions::default() })?[0].result.mu;
        let rep = mu_lower_to_volume(&g, base, (-mu).max(0.0) + 0.1, 1.0)?;
        ok &= rep.kappa > 0.0 && rep.noncollapsed();
        let mut line = format!("{name} V/R² {:.3} ≥ κ {:.1e}", rep.ratio, rep.kappa);
        if name != "torus" {
            let prof = volume_profile(&g, base, &[1.0, 0.5, 0.25, 0.125])?;
            let breaks = doubling_iteration(&prof, c.eta).breaks_at;
            ok &= breaks == Some(1);
            line.push_str(&format!(", doubling breaks at {breaks:?}"));
        }
        if name != "box" {
            let (v0, diam) = if name == "sphere" { (4.0 * PI, PI) } else { (4.0 * PI * PI, 2f64.sqrt() * PI) };
            let bound = diameter_bound(v0, rep.kappa)?;
            ok &= bound >= diam;
            line.push_str(&format!(", diameter bound {bound:.1e}"));
        }
        detail.push(line);
    }
    let radii: Vec<f64> = (0..6).map(|k| 2f64.powi(-k)).collect();
    let syn = doubling_iteration(&VolumeProfile::synthetic(&radii, 2, |r| r.powf(3.5)), c.eta);
    ok &= syn.anomalous;
    detail.push(format!("synthetic exponent {:.2} vs {:.2}", syn.exponent, syn.exponent_bound));
    Ok((ok, detail.join("; ")))
}

fn snapshot(dir: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in std::fs::read_dir(&d).expect("read_dir") {
            let p = entry.expect("entry").path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.insert(p.strip_prefix(dir).unwrap().to_path_buf(), std::fs::read(&p).unwrap());
            }
        }
    }
    out
}

fn full_suite() -> Result<(bool, String)> {
    let root = std::env::temp_dir().join(format!("entropy-lab-acceptance-{}", std::process::id()));
    let _ = std::fs::remove_dir_all(&root);
    let mut runs = Vec::new();
    for k in 0..2 {
        let out = root.join(format!("run{k}"));
        let start = Instant::now();
        let status = Command::new(env!("CARGO_BIN_EXE_entropy-lab"))
            .args(["run", "all", "--seed", "11", "--out"])
            .arg(&out)
            .output()
            .map_err(LabError::from)?;
        runs.push((status.status.code(), start.elapsed().as_secs_f64(), snapshot(&out)));
    }
    let _ = std::fs::remove_dir_all(&root);
    let identical = runs[0].2 == runs[1].2;
    let ok = runs.iter().all(|r| r.0 == Some(0) && r.1 < 600.0) && identical && runs[0].2.len() > 10;
    Ok((ok, format!("exit {:?}, {:.1} s, {} files, identical {identical}", runs[0].0, runs[0].1, runs[0].2.len())))
}

fn main() {
    let criteria: [(&str, Criterion); 12] = [
        ("Euclidean equality case", euclidean_equality),
        ("monotonicity", monotonicity),
        ("dissipation match", dissipation_match),
        ("pointwise inequality", pointwise),
        ("lemma residual orders", lemma_orders),
        ("mu solver", mu_solver),
        ("scaling identity", scaling),
        ("symmetrization", symmetrization),
        ("boundary variant", boundary_variant),
        ("small-time limit", varadhan),
        ("growth and noncollapsing", growth),
        ("full suite", full_suite),
    ];
    let mut unexpected = 0;
    for (k, (name, f)) in criteria.iter().enumerate() {
        let id = k + 1;
        let (passed, detail) = f().unwrap_or_else(|e| (false, format!("error: {e}")));
        let tag = match (passed, UNATTAINABLE.contains(&id)) {
            (true, _) => "PASS",
            (false, true) => "FAIL (unattainable as stated)",
            (false, false) => {
                unexpected += 1;
                "FAIL"
            }
        };
        println!("criterion {id:>2} {tag}: {name}: {detail}");
    }
    if unexpected > 0 {
        eprintln!("{unexpected} criteria failed");
        std::process::exit(1);
    }
}
