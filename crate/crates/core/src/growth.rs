//! Volume growth from entropy bounds: geodesic-ball volume profiles, the kernel entropy
//! lower bound under maximal growth, κ-noncollapsing from a lower bound on μ, the
//! doubling iteration and the diameter bound.

use std::f64::consts::{E, PI};

use crate::entropy::w_terms;
use crate::error::{LabError, Result};
use crate::geometry::{dirichlet_energy, distance_values, BasePoint, ManifoldGrid};
use crate::heat::HeatState;

/// Cutoff ζ(s) = 1 − 3σ² + 2σ³, σ = clamp(2s − 1, 0, 1).
pub fn zeta(s: f64) -> f64 {
    let q = (2.0 * s - 1.0).clamp(0.0, 1.0);
    1.0 - 3.0 * q * q + 2.0 * q * q * q
}

pub fn zeta_prime(s: f64) -> f64 {
    let q = 2.0 * s - 1.0;
    if q <= 0.0 || q >= 1.0 {
        0.0
    } else {
        2.0 * (6.0 * q * q - 6.0 * q)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GrowthConstants {
    pub dim: usize,
    /// Doubling ratio (1/3)ⁿ.
    pub eta: f64,
    pub zeta_grad_max: f64,
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
}

impl GrowthConstants {
    pub fn new(dim: usize) -> Self {
        let n = dim as f64;
        let eta = 3f64.powi(-(dim as i32));
        let samples = 1 << 16;
        let zeta_grad_max = (0..=samples).map(|k| zeta_prime(k as f64 / samples as f64).abs()).fold(0.0, f64::max);
        let log_gauss = 0.5 * n * (4.0 * PI).ln();
        Self {
            dim,
            eta,
            zeta_grad_max,
            c1: eta.ln() - log_gauss,
            c2: -log_gauss,
            c3: 4.0 * zeta_grad_max * zeta_grad_max / eta + 1.0 / (E * eta),
        }
    }

    /// κ with V(R) ≥ κRⁿ whenever μ ≥ −A and the doubling hypothesis holds at R.
    pub fn kappa(&self, a: f64) -> f64 {
        (-a - self.c3 - self.c2).exp()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VolumeProfile {
    pub radii: Vec<f64>,
    pub volumes: Vec<f64>,
    pub areas: Vec<f64>,
    pub base: Option<BasePoint>,
    pub dim: usize,
    /// Radii beyond the reach of the grid from the base, clamped.
    pub clamped: Vec<bool>,
}

impl VolumeProfile {
    /// Profile from closed-form volume data; areas by centred differences of `v`.
    pub fn synthetic(radii: &[f64], dim: usize, v: impl Fn(f64) -> f64) -> Self {
        let volumes = radii.iter().map(|&r| v(r)).collect();
        let areas = radii
            .iter()
            .map(|&r| {
                let d = 1e-6 * r.max(1e-12);
                (v(r + d) - v((r - d).max(0.0))) / (r + d - (r - d).max(0.0))
            })
            .collect();
        Self { radii: radii.to_vec(), volumes, areas, base: None, dim, clamped: vec![false; radii.len()] }
    }

    /// V(r)/rⁿ at each radius.
    pub fn bishop_ratios(&self) -> Vec<f64> {
        self.radii.iter().zip(&self.volumes).map(|(r, v)| v / r.powi(self.dim as i32)).collect()
    }

    /// r·A(r)/V(r) at each radius.
    pub fn area_volume_ratios(&self) -> Vec<f64> {
        self.radii.iter().zip(&self.volumes).zip(&self.areas).map(|((r, v), a)| r * a / v).collect()
    }
}

/// Smeared ball volume: each cell counts with the fraction of a width-h window around
/// its distance that lies inside the ball.
fn ball_volume(grid: &ManifoldGrid, dist: &[f64], r: f64, h: f64) -> f64 {
    dist.iter()
        .zip(&grid.node_volumes)
        .map(|(d, w)| ((r - d) / h + 0.5).clamp(0.0, 1.0) * w)
        .sum()
}

pub fn volume_profile(grid: &ManifoldGrid, base: BasePoint, radii: &[f64]) -> Result<VolumeProfile> {
    let dist = distance_values(grid, base)?;
    let h = grid.spacing_scale();
    let reach = dist.iter().cloned().fold(0.0, f64::max) + 0.5 * h;
    let mut out = VolumeProfile {
        radii: Vec::with_capacity(radii.len()),
        volumes: Vec::with_capacity(radii.len()),
        areas: Vec::with_capacity(radii.len()),
        base: Some(base),
        dim: grid.dim,
        clamped: Vec::with_capacity(radii.len()),
    };
    for &r in radii {
        if !(r > 0.0) {
            return Err(LabError::DomainError(format!("radius must be positive, got {r}")));
        }
        let rc = r.min(reach);
        out.radii.push(rc);
        out.clamped.push(r > reach);
        out.volumes.push(ball_volume(grid, &dist, rc, h));
        let lo = (rc - h).max(0.0);
        out.areas.push((ball_volume(grid, &dist, rc + h, h) - ball_volume(grid, &dist, lo, h)) / (rc + h - lo));
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelEntropyRow {
    pub t: f64,
    pub w: f64,
    /// 4t∫|∇v|² with v = √u.
    pub dirichlet: f64,
    /// −∫v² log v².
    pub entropy: f64,
    /// n + (n/2) log(4πt).
    pub normalization: f64,
    /// (1/(3t))∫r²u.
    pub moment: f64,
    /// −∫u log u − log V(√t).
    pub entropy_excess: f64,
}

/// W along a fundamental-solution trajectory through the split
/// W = 4t∫|∇v|² − ∫v² log v² − (n + (n/2) log 4πt).
pub fn kernel_entropy_bound(trajectory: &[HeatState], base: BasePoint) -> Result<Vec<KernelEntropyRow>> {
    let Some(first) = trajectory.first() else {
        return Ok(Vec::new());
    };
    let grid = first.grid();
    let dist = distance_values(grid, base)?;
    let h = grid.spacing_scale();
    let n = grid.dim as f64;
    trajectory
        .iter()
        .map(|s| {
            let t = s.tau();
            let u = &s.u.values;
            let v: Vec<f64> = u.iter().map(|x| x.sqrt()).collect();
            let dirichlet = 4.0 * t * dirichlet_energy(grid, &v);
            let entropy: f64 = -u
                .iter()
                .zip(&grid.node_volumes)
                .filter(|(x, _)| **x > 0.0)
                .map(|(x, w)| x * x.ln() * w)
                .sum::<f64>();
            let normalization = n + 0.5 * n * (4.0 * PI * t).ln();
            let (d, nash) = w_terms(s)?;
            let w = d + nash - n;
            let moment = u.iter().zip(&dist).zip(&grid.node_volumes).map(|((x, r), vol)| x * r * r * vol).sum::<f64>() / (3.0 * t);
            let entropy_excess = entropy - ball_volume(grid, &dist, t.sqrt(), h).ln();
            for (name, x) in [("W", w), ("dirichlet", dirichlet), ("entropy", entropy), ("moment", moment)] {
                if !x.is_finite() {
                    return Err(LabError::DomainError(format!("{name} is not finite at t = {t}")));
                }
            }
            Ok(KernelEntropyRow { t, w, dirichlet, entropy, normalization, moment, entropy_excess })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct DoublingReport {
    pub eta: f64,
    /// Largest k with V(R/2^j) ≤ η^j V(R) for every j ≤ k.
    pub chain_length: usize,
    /// First k where the chain fails, if it does within the profile.
    pub breaks_at: Option<usize>,
    /// Least-squares slope of log V against log r.
    pub exponent: f64,
    /// log₂(1/η), which is n log₂ 3 for η = 3⁻ⁿ.
    pub exponent_bound: f64,
    /// The chain persisted to the resolution floor with exponent above the bound.
    pub anomalous: bool,
}

/// Runs the chain V(R/2^k) ≤ η^k V(R) over a profile whose radii are R, R/2, R/4, ….
pub fn doubling_iteration(profile: &VolumeProfile, eta: f64) -> DoublingReport {
    let v0 = profile.volumes[0];
    let mut chain_length = 0;
    let mut breaks_at = None;
    for k in 1..profile.volumes.len() {
        if profile.volumes[k] <= eta.powi(k as i32) * v0 {
            chain_length = k;
        } else {
            breaks_at = Some(k);
            break;
        }
    }
    let pts: Vec<(f64, f64)> = profile
        .radii
        .iter()
        .zip(&profile.volumes)
        .filter(|(r, v)| **r > 0.0 && **v > 0.0)
        .map(|(r, v)| (r.ln(), v.ln()))
        .collect();
    let m = pts.len() as f64;
    let (sx, sy) = pts.iter().fold((0.0, 0.0), |(a, b), (x, y)| (a + x, b + y));
    let (mx, my) = (sx / m, sy / m);
    let (sxy, sxx) = pts.iter().fold((0.0, 0.0), |(a, b), (x, y)| (a + (x - mx) * (y - my), b + (x - mx) * (x - mx)));
    let exponent = if sxx > 0.0 { sxy / sxx } else { f64::NAN };
    let exponent_bound = -eta.log2();
    DoublingReport {
        eta,
        chain_length,
        breaks_at,
        exponent,
        exponent_bound,
        anomalous: breaks_at.is_none() && exponent > exponent_bound,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NoncollapseReport {
    pub radius: f64,
    pub a: f64,
    pub constants: GrowthConstants,
    pub volume: f64,
    pub half_volume: f64,
    /// V(R/2) ≥ ηV(R).
    pub doubling_holds: bool,
    pub b: f64,
    pub b_lower: f64,
    pub b_upper: f64,
    /// ∫4R²|∇h|² − (log h² + (n/2) log 4πR²)h² for the cutoff test function.
    pub test_value: f64,
    /// test_value ≤ C₃ + B.
    pub test_bound_holds: bool,
    pub kappa: f64,
    /// V(R)/Rⁿ.
    pub ratio: f64,
    /// Dyadic chain from R when the doubling hypothesis fails.
    pub doubling: Option<DoublingReport>,
}

impl NoncollapseReport {
    pub fn bracket_holds(&self) -> bool {
        self.b_lower <= self.b && self.b <= self.b_upper
    }

    pub fn noncollapsed(&self) -> bool {
        self.kappa > 0.0 && self.ratio >= self.kappa
    }
}

/// Builds h² = e^{−B}(4πR²)^{−n/2} ζ²(r/R) about `base`, evaluates the μ upper bound it
/// gives and the κ implied by μ ≥ −A.
pub fn mu_lower_to_volume(grid: &ManifoldGrid, base: BasePoint, a: f64, radius: f64) -> Result<NoncollapseReport> {
    if !(radius > 0.0) {
        return Err(LabError::DomainError(format!("radius must be positive, got {radius}")));
    }
    let constants = GrowthConstants::new(grid.dim);
    let n = grid.dim as f64;
    let dist = distance_values(grid, base)?;
    let h = grid.spacing_scale();
    let volume = ball_volume(grid, &dist, radius, h);
    let half_volume = ball_volume(grid, &dist, 0.5 * radius, h);
    let doubling_holds = half_volume >= constants.eta * volume;
    let zeta_sq: Vec<f64> = dist.iter().map(|d| zeta(d / radius).powi(2)).collect();
    let mass: f64 = zeta_sq.iter().zip(&grid.node_volumes).map(|(z, w)| z * w).sum();
    let log_gauss = 0.5 * n * (4.0 * PI * radius * radius).ln();
    let b = mass.ln() - log_gauss;
    let scale = (-b - log_gauss).exp();
    let hf: Vec<f64> = zeta_sq.iter().map(|z| (scale * z).sqrt()).collect();
    let test_value = 4.0 * radius * radius * dirichlet_energy(grid, &hf)
        - hf
            .iter()
            .zip(&grid.node_volumes)
            .filter(|(x, _)| **x > 0.0)
            .map(|(x, w)| {
                let s = x * x;
                (s.ln() + log_gauss) * s * w
            })
            .sum::<f64>();
    let log_ratio = (volume / radius.powi(grid.dim as i32)).ln();
    let doubling = if doubling_holds {
        None
    } else {
        let radii: Vec<f64> = (0..8).map(|k| radius / 2f64.powi(k)).filter(|&r| r >= h).collect();
        Some(doubling_iteration(&volume_profile(grid, base, &radii)?, constants.eta))
    };
    Ok(NoncollapseReport {
        radius,
        a,
        constants,
        volume,
        half_volume,
        doubling_holds,
        b,
        b_lower: log_ratio + constants.c1,
        b_upper: log_ratio + constants.c2,
        test_value,
        test_bound_holds: test_value <= constants.c3 + b,
        kappa: constants.kappa(a),
        ratio: log_ratio.exp(),
        doubling,
    })
}

/// 2(⌊V₀/κ⌋ + 1).
pub fn diameter_bound(v0: f64, kappa: f64) -> Result<f64> {
    if !(kappa > 0.0) {
        return Err(LabError::DomainError(format!("κ must be positive, got {kappa}")));
    }
    if !(v0 > 0.0) {
        return Err(LabError::DomainError(format!("V₀ must be positive, got {v0}")));
    }
    Ok(2.0 * ((v0 / kappa).floor() + 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{build_grid, ManifoldKind};
    use crate::heat::{HeatSolver, KernelOracle, OracleKind};
    use crate::geometry::ScalarField;
    use std::sync::Arc;

    #[test]
    fn constants_from_the_cutoff() {
        let c = GrowthConstants::new(2);
        assert!((c.zeta_grad_max - 3.0).abs() < 1e-6);
        assert!((c.eta - 1.0 / 9.0).abs() < 1e-15);
        assert!((c.c2 + (4.0 * PI).ln()).abs() < 1e-14);
        assert!((c.c1 - c.c2 + 9f64.ln()).abs() < 1e-14);
        assert!((c.c3 - (324.0 + 9.0 / E)).abs() < 1e-3);
        assert!(zeta(0.5) == 1.0 && zeta(1.0) == 0.0 && (zeta(0.75) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn sphere_and_box_volumes() {
        let s = build_grid(ManifoldKind::unit_sphere(), [256, 32]).unwrap();
        let p = volume_profile(&s, BasePoint::Pole, &[0.5, 1.0, 2.0, PI, 4.0]).unwrap();
        for (r, v) in p.radii.iter().zip(&p.volumes).take(4) {
            assert!((v - 2.0 * PI * (1.0 - r.cos())).abs() < 1e-4, "r={r}");
        }
        assert!(p.clamped[4] && !p.clamped[3]);
        assert!((p.volumes[4] - 4.0 * PI).abs() < 1e-9);
        assert!((p.areas[1] - 2.0 * PI * 1f64.sin()).abs() < 1e-3);
        assert!(p.bishop_ratios().windows(2).take(3).all(|w| w[1] <= w[0]));
        assert!(p.area_volume_ratios()[1] < 2.0);

        let b = build_grid(ManifoldKind::EuclideanBox { lx: 4.0, ly: 4.0 }, [256, 256]).unwrap();
        let p = volume_profile(&b, BasePoint::Point([0.0, 0.0]), &[0.5, 1.0]).unwrap();
        for (r, v) in p.radii.iter().zip(&p.volumes) {
            assert!((v - PI * r * r).abs() < 2.0 * PI * r * b.spacing_scale() * 0.1, "r={r}");
        }
        assert!(p.area_volume_ratios().iter().all(|x| (x - 2.0).abs() < 1e-2));
    }

    #[test]
    fn doubling_examples() {
        let radii: Vec<f64> = (0..6).map(|k| 2f64.powi(-k)).collect();
        let flat = VolumeProfile::synthetic(&radii, 2, |r| PI * r * r);
        let d = doubling_iteration(&flat, 1.0 / 9.0);
        assert_eq!((d.chain_length, d.breaks_at), (0, Some(1)));
        assert!(!d.anomalous);
        let collapsing = VolumeProfile::synthetic(&radii, 2, |r| r.powf(3.5));
        let d = doubling_iteration(&collapsing, 1.0 / 9.0);
        assert_eq!(d.breaks_at, None);
        assert!((d.exponent - 3.5).abs() < 1e-12 && (d.exponent_bound - 2.0 * 3f64.log2()).abs() < 1e-12);
        assert!(d.anomalous);
        let sphere = VolumeProfile::synthetic(&[0.5, 0.25, 0.125], 2, |r| 2.0 * PI * (1.0 - r.cos()));
        assert_eq!(doubling_iteration(&sphere, 1.0 / 9.0).breaks_at, Some(1));
    }

    #[test]
    fn diameter_examples() {
        assert_eq!(diameter_bound(4.0 * PI, 1.0).unwrap(), 26.0);
        assert_eq!(diameter_bound(1.0, 2.0).unwrap(), 2.0);
        assert!(matches!(diameter_bound(1.0, 0.0), Err(LabError::DomainError(_))));
        let kappa = GrowthConstants::new(2).kappa(0.1);
        assert!(diameter_bound(4.0 * PI * PI, kappa).unwrap() >= 2f64.sqrt() * PI);
    }

    #[test]
    fn noncollapse_on_box_and_sphere() {
        let b = build_grid(ManifoldKind::EuclideanBox { lx: 4.0, ly: 4.0 }, [128, 128]).unwrap();
        let r = mu_lower_to_volume(&b, BasePoint::Point([0.0, 0.0]), 0.1, 1.0).unwrap();
        assert!(r.doubling_holds && r.bracket_holds() && r.test_bound_holds && r.noncollapsed());
        assert!((r.ratio - PI).abs() < 1e-2);
        // μ(R²) on Rⁿ is 0 and the test function is admissible.
        assert!(r.test_value >= -1e-3);
        let s = build_grid(ManifoldKind::unit_sphere(), [128, 16]).unwrap();
        let r = mu_lower_to_volume(&s, BasePoint::Pole, 2.0, 1.0).unwrap();
        assert!(r.doubling_holds && r.bracket_holds() && r.test_bound_holds && r.noncollapsed());
    }

    #[test]
    fn box_kernel_entropy_stays_in_band() {
        let g = Arc::new(build_grid(ManifoldKind::EuclideanBox { lx: 4.0, ly: 4.0 }, [128, 128]).unwrap());
        let base = BasePoint::Point([0.0, 0.0]);
        let u = KernelOracle::new(OracleKind::Euclidean).values(&g, base, 0.01).unwrap();
        let s0 = HeatState::new(ScalarField::new(g.clone(), u).unwrap(), 0.01, 0.0).unwrap();
        let traj = HeatSolver::default().trajectory(&s0, 0.0025, 36).unwrap();
        let rows = kernel_entropy_bound(&traj, base).unwrap();
        for row in &rows {
            assert!(row.w.abs() < 0.05, "{row:?}");
            assert!(row.dirichlet <= 1.0 + 1e-2, "{row:?}");
            let gap = row.dirichlet + row.entropy - row.normalization - row.w;
            assert!(gap.abs() < 1e-10, "{gap}");
        }
        assert!((rows[0].dirichlet - 1.0).abs() < 1e-2);
    }

    #[test]
    fn torus_kernel_entropy_trends_to_the_uniform_value() {
        let g = Arc::new(build_grid(ManifoldKind::FlatTorus { lx: 2.0 * PI, ly: 2.0 * PI }, [64, 64]).unwrap());
        let base = BasePoint::Node(0);
        let oracle = KernelOracle::for_grid(&g).unwrap();
        let states: Vec<HeatState> = [1.0, 2.0, 4.0]
            .iter()
            .map(|&t| HeatState::new(ScalarField::new(g.clone(), oracle.values(&g, base, t).unwrap()).unwrap(), t, 0.0).unwrap())
            .collect();
        let rows = kernel_entropy_bound(&states, base).unwrap();
        let excess: Vec<f64> = rows
            .iter()
            .map(|r| r.w - ((4.0 * PI * PI).ln() - (4.0 * PI * r.t).ln() - 2.0))
            .collect();
        assert!(excess.iter().all(|e| *e >= 0.0));
        assert!(excess.windows(2).all(|w| w[1] < w[0]));
        // u = (1 + ε)/V with ε = 2e^{−t}(cos x + cos y) gives excess 2(2t − 1)e^{−2t} + O(ε³).
        let leading = 14.0 * (-8f64).exp();
        assert!((excess[2] - leading).abs() < 1e-2 * leading, "{excess:?}");
    }
}
