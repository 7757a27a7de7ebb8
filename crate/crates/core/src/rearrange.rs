//! Schwarz symmetrization on Euclidean grids: distribution function, radial
//! rearrangement, layer-cake integrals, Dirichlet comparison and co-area diagnostics.

use std::f64::consts::PI;
use std::sync::Arc;

use rand::Rng;

use crate::error::{LabError, Result};
use crate::geometry::{dirichlet_energy, gradient_frame_values, ManifoldGrid, ManifoldKind, ScalarField, WarpProfile};

pub const DEFAULT_THRESHOLDS: usize = 256;
pub const DEFAULT_RADIAL_CELLS: usize = 2048;

/// Volume of the unit ball in Rⁿ for n ∈ {1, 2}.
fn unit_ball(n: usize) -> f64 {
    if n == 1 {
        2.0
    } else {
        PI
    }
}

fn is_euclidean(grid: &ManifoldGrid) -> bool {
    matches!(
        grid.kind,
        ManifoldKind::EuclideanBox { .. }
            | ManifoldKind::EuclideanDisc { .. }
            | ManifoldKind::WarpedSurface { warp: WarpProfile::Linear, .. }
    )
}

#[derive(Debug, Clone)]
pub struct LevelProfile {
    /// Thresholds, descending.
    pub thresholds: Vec<f64>,
    /// F(t_k) = Vol{φ ≥ t_k}.
    pub measure: Vec<f64>,
    /// Vol{φ > 0}.
    pub support: f64,
    pub dim: usize,
    /// Positive node values sorted descending with cumulative volumes.
    sorted: Vec<f64>,
    cumulative: Vec<f64>,
    midpoints: Vec<f64>,
    /// ∫_0^{midpoint_i} φ*.
    quantile_prefix: Vec<f64>,
}

impl LevelProfile {
    /// Exact F(t) for the discrete measure.
    pub fn measure_at(&self, t: f64) -> f64 {
        let count = self.sorted.partition_point(|&v| v >= t);
        if count == 0 {
            0.0
        } else {
            self.cumulative[count - 1]
        }
    }

    pub fn max_value(&self) -> f64 {
        self.sorted.first().copied().unwrap_or(0.0)
    }

    /// Decreasing rearrangement φ*(m), linear between cell midpoints and 0 at m = support.
    pub fn quantile(&self, m: f64) -> f64 {
        if self.sorted.is_empty() || m >= self.support {
            return 0.0;
        }
        let n = self.sorted.len();
        if m <= self.midpoints[0] {
            return self.sorted[0];
        }
        let i = self.midpoints.partition_point(|&c| c <= m);
        let (m0, v0) = (self.midpoints[i - 1], self.sorted[i - 1]);
        let (m1, v1) = if i < n { (self.midpoints[i], self.sorted[i]) } else { (self.support, 0.0) };
        v0 + (v1 - v0) * (m - m0) / (m1 - m0)
    }

    /// ∫_0^m φ*(s) ds, exact for the piecewise linear quantile.
    pub fn quantile_integral(&self, m: f64) -> f64 {
        if self.sorted.is_empty() {
            return 0.0;
        }
        let m = m.clamp(0.0, self.support);
        let first = self.midpoints[0];
        if m <= first {
            return m * self.sorted[0];
        }
        let i = self.midpoints.partition_point(|&c| c <= m);
        let v = self.quantile(m);
        let (m0, v0) = (self.midpoints[i - 1], self.sorted[i - 1]);
        self.quantile_prefix[i - 1] + 0.5 * (v0 + v) * (m - m0)
    }

    /// Vol{g ≥ t} for the interpolated rearrangement.
    pub fn rearranged_measure_at(&self, t: f64) -> f64 {
        if t > self.max_value() {
            return 0.0;
        }
        let (mut lo, mut hi) = (0.0, self.support);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if self.quantile(mid) >= t {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        lo
    }
}

/// Distribution function of a nonnegative field at `k` equal-measure thresholds.
pub fn distribution(grid: &ManifoldGrid, phi: &[f64], k: usize) -> Result<LevelProfile> {
    if let Some(v) = phi.iter().find(|v| !(**v >= 0.0)) {
        return Err(LabError::DomainError(format!("field must be nonnegative, found {v}")));
    }
    if k == 0 {
        return Err(LabError::DomainError("need at least one threshold".into()));
    }
    let mut idx: Vec<usize> = (0..phi.len()).filter(|&i| phi[i] > 0.0).collect();
    idx.sort_by(|&a, &b| phi[b].total_cmp(&phi[a]).then(a.cmp(&b)));
    let sorted: Vec<f64> = idx.iter().map(|&i| phi[i]).collect();
    let volumes: Vec<f64> = idx.iter().map(|&i| grid.node_volumes[i]).collect();
    let cumulative: Vec<f64> = volumes
        .iter()
        .scan(0.0, |acc, v| {
            *acc += v;
            Some(*acc)
        })
        .collect();
    let midpoints: Vec<f64> = cumulative.iter().zip(&volumes).map(|(c, v)| c - 0.5 * v).collect();
    let support = cumulative.last().copied().unwrap_or(0.0);
    let mut thresholds = Vec::with_capacity(k);
    let measure = Vec::new();
    if !sorted.is_empty() {
        for j in 1..=k {
            let target = support * j as f64 / k as f64;
            let pos = cumulative.partition_point(|&c| c < target * (1.0 - 1e-12)).min(sorted.len() - 1);
            thresholds.push(sorted[pos]);
        }
    }
    let mut quantile_prefix = Vec::with_capacity(sorted.len());
    for i in 0..sorted.len() {
        quantile_prefix.push(match i {
            0 => midpoints[0] * sorted[0],
            _ => quantile_prefix[i - 1] + 0.5 * (sorted[i - 1] + sorted[i]) * (midpoints[i] - midpoints[i - 1]),
        });
    }
    let mut profile =
        LevelProfile { thresholds, measure, support, dim: grid.dim, sorted, cumulative, midpoints, quantile_prefix };
    profile.measure = profile.thresholds.iter().map(|&t| profile.measure_at(t)).collect();
    Ok(profile)
}

/// Radial nonincreasing g on the ball of volume Vol{φ > 0}, sampled at cell-centred radii.
#[derive(Debug, Clone)]
pub struct RadialFunction {
    pub radius: f64,
    pub dim: usize,
    /// Cell edges 0 = ρ_0 < … < ρ_M = R.
    pub edges: Vec<f64>,
    /// g at the cell edges (g(R) = 0).
    pub values: Vec<f64>,
}

impl RadialFunction {
    fn shell_volume(&self, j: usize) -> f64 {
        let n = self.dim as i32;
        unit_ball(self.dim) * (self.edges[j + 1].powi(n) - self.edges[j].powi(n))
    }

    /// ∫|∇̄g|² dv̄ with g linear in ρ on each shell.
    pub fn dirichlet(&self) -> f64 {
        (0..self.edges.len() - 1)
            .map(|j| {
                let dr = self.edges[j + 1] - self.edges[j];
                let slope = (self.values[j + 1] - self.values[j]) / dr;
                slope * slope * self.shell_volume(j)
            })
            .sum()
    }

    /// ∫G(g) dv̄ by the trapezoid rule over shells.
    pub fn integrate(&self, f: impl Fn(f64) -> f64) -> f64 {
        (0..self.edges.len() - 1)
            .map(|j| 0.5 * (f(self.values[j]) + f(self.values[j + 1])) * self.shell_volume(j))
            .sum()
    }
}

/// g(ρ) is the quantile averaged over the measure of a band of width 2h around the
/// sphere of radius ρ, which removes lattice ties without moving level volumes to first order.
pub fn radial_rearrangement(profile: &LevelProfile, spacing: f64, cells: usize) -> RadialFunction {
    let n = profile.dim;
    let omega = unit_ball(n);
    let radius = (profile.support / omega).powf(1.0 / n as f64);
    let edges: Vec<f64> = (0..=cells).map(|j| radius * j as f64 / cells as f64).collect();
    let values = edges
        .iter()
        .map(|&r| {
            let m = omega * r.powi(n as i32);
            let w = 2.0 * spacing * n as f64 * omega * r.powi(n as i32 - 1);
            let (a, b) = ((m - 0.5 * w).max(0.0), (m + 0.5 * w).min(profile.support));
            if b - a <= 0.0 {
                profile.quantile(m)
            } else {
                (profile.quantile_integral(b) - profile.quantile_integral(a)) / (b - a)
            }
        })
        .collect();
    RadialFunction { radius, dim: n, edges, values }
}

/// Both sides of ∫_0^∞ λ'(s) F(s) ds = ∫ λ(φ) dv. F is a step function that is constant
/// between consecutive node values, so the left side is integrated piece by piece.
pub fn layer_cake(grid: &ManifoldGrid, phi: &[f64], profile: &LevelProfile, lambda: impl Fn(f64) -> f64) -> Result<(f64, f64)> {
    if lambda(0.0).abs() > 1e-300 {
        return Err(LabError::DomainError("layer cake needs λ(0) = 0".into()));
    }
    let rhs: f64 = phi.iter().zip(&grid.node_volumes).map(|(v, w)| lambda(*v) * w).sum();
    let s = &profile.sorted;
    let lhs = (0..s.len())
        .filter(|&j| j + 1 == s.len() || s[j + 1] < s[j])
        .map(|j| {
            let below = s.get(j + 1).copied().unwrap_or(0.0);
            (lambda(s[j]) - lambda(below)) * profile.cumulative[j]
        })
        .sum();
    Ok((lhs, rhs))
}

/// (∫|∇φ|² dv, ∫|∇̄g|² dv̄) on a Euclidean grid.
pub fn dirichlet_compare(grid: &Arc<ManifoldGrid>, phi: &[f64], profile: &LevelProfile, g: &RadialFunction) -> Result<(f64, f64)> {
    if !is_euclidean(grid) {
        return Err(LabError::UnsupportedGrid(format!(
            "symmetrization comparisons need a Euclidean grid, got {}",
            grid.kind.name()
        )));
    }
    let _ = profile;
    Ok((dirichlet_energy(grid, phi), g.dirichlet()))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoareaDiagnostics {
    pub level: f64,
    /// A(Γ_t), ∫_Γ|∇φ| dA, ∫_Γ 1/|∇φ| dA.
    pub area: f64,
    pub grad_integral: f64,
    pub inv_grad_integral: f64,
    /// The same three quantities on the rearranged level sphere.
    pub ball_area: f64,
    pub ball_grad_integral: f64,
    pub ball_inv_grad_integral: f64,
    /// A² ≤ (∫|∇φ|)(∫1/|∇φ|).
    pub holder_holds: bool,
    /// ∫_Γ|∇φ| ≥ ∫_Γ̄|∇̄g| within the band tolerance.
    pub comparison_holds: bool,
}

/// Relative tolerance of the band-quadrature comparison.
pub const COAREA_TOLERANCE: f64 = 0.02;

/// Level sets whose equivalent ball radius is below this many cells are unresolved.
pub const MIN_LEVEL_RADIUS_CELLS: f64 = 8.0;

/// Level-set integrals at level t by co-area over a band of effective width 2h: a hat
/// kernel in the values of φ whose support is |φ − t| < 2h·Ḡ, Ḡ the mean |∇φ| near the level.
pub fn coarea_chain(grid: &ManifoldGrid, phi: &[f64], t: f64, gradient_floor: f64) -> Result<CoareaDiagnostics> {
    let h = grid.spacing_scale();
    let grad: Vec<f64> = gradient_frame_values(grid, phi).iter().map(|g| g[0].hypot(g[1])).collect();
    let near: Vec<usize> = (0..phi.len()).filter(|&i| (phi[i] - t).abs() < h * grad[i]).collect();
    if near.is_empty() {
        return Err(LabError::DegenerateLevel { level: t });
    }
    let mean_grad = near.iter().map(|&i| grad[i]).sum::<f64>() / near.len() as f64;
    if mean_grad < gradient_floor || near.iter().any(|&i| grad[i] < 0.25 * mean_grad) {
        return Err(LabError::DegenerateLevel { level: t });
    }
    let eps = 2.0 * h * mean_grad;
    let hat = |x: f64| ((1.0 - x.abs() / eps) / eps).max(0.0);
    let ramp = |x: f64| {
        // ∫_{-∞}^{x} hat
        let y = (x / eps).clamp(-1.0, 1.0);
        if y <= 0.0 {
            0.5 * (1.0 + y) * (1.0 + y)
        } else {
            1.0 - 0.5 * (1.0 - y) * (1.0 - y)
        }
    };
    let mut area = 0.0;
    let mut grad_integral = 0.0;
    let mut inv_grad_integral = 0.0;
    let mut measure = 0.0;
    for i in 0..phi.len() {
        let v = grid.node_volumes[i];
        measure += v * ramp(phi[i] - t);
        let k = hat(phi[i] - t);
        if k > 0.0 {
            if grad[i] <= 0.0 {
                return Err(LabError::DegenerateLevel { level: t });
            }
            area += v * k * grad[i];
            grad_integral += v * k * grad[i] * grad[i];
            inv_grad_integral += v * k;
        }
    }
    let n = grid.dim as f64;
    let omega = unit_ball(grid.dim);
    let rho = (measure / omega).powf(1.0 / n);
    if rho < MIN_LEVEL_RADIUS_CELLS * h {
        return Err(LabError::DegenerateLevel { level: t });
    }
    let ball_area = n * omega * rho.powf(n - 1.0);
    // |∇̄g| is constant on the level sphere and −dF/dt agrees on both sides.
    let ball_grad = ball_area / inv_grad_integral;
    let ball_grad_integral = ball_area * ball_grad;
    let ball_inv_grad_integral = inv_grad_integral;
    let holder_holds = area * area <= grad_integral * inv_grad_integral * (1.0 + 1e-12);
    let comparison_holds = grad_integral >= ball_grad_integral * (1.0 - COAREA_TOLERANCE);
    Ok(CoareaDiagnostics {
        level: t,
        area,
        grad_integral,
        inv_grad_integral,
        ball_area,
        ball_grad_integral,
        ball_inv_grad_integral,
        holder_holds,
        comparison_holds,
    })
}

/// ∫ 2|∇φ|² − φ² log φ² − ((n/2) log 2π + n) φ² on the grid.
pub fn functional_32(grid: &ManifoldGrid, phi: &[f64]) -> f64 {
    let n = grid.dim as f64;
    let c = 0.5 * n * (2.0 * PI).ln() + n;
    let rest: f64 = phi
        .iter()
        .zip(&grid.node_volumes)
        .map(|(&x, w)| {
            let s = x * x;
            let ent = if s > 0.0 { s * s.ln() } else { 0.0 };
            (ent + c * s) * w
        })
        .sum();
    2.0 * dirichlet_energy(grid, phi) - rest
}

/// The same functional for the rearranged radial function.
pub fn functional_32_radial(g: &RadialFunction) -> f64 {
    let n = g.dim as f64;
    let c = 0.5 * n * (2.0 * PI).ln() + n;
    let rest = g.integrate(|x| {
        let s = x * x;
        (if s > 0.0 { s * s.ln() } else { 0.0 }) + c * s
    });
    2.0 * g.dirichlet() - rest
}

/// A sum of `bumps` anisotropic compactly supported C² bumps (1 − q)³₊ with random centres,
/// axes and orientations, kept inside the middle of a box, normalized to ∫φ² = 1.
pub fn random_bump_field(grid: &Arc<ManifoldGrid>, rng: &mut impl Rng, bumps: usize) -> Result<ScalarField> {
    let (lx, ly) = match grid.kind {
        ManifoldKind::EuclideanBox { lx, ly } => (lx, ly),
        _ => return Err(LabError::UnsupportedGrid("random bump fields are drawn on a box".into())),
    };
    let half = 0.5 * lx.min(ly);
    let specs: Vec<[f64; 6]> = (0..bumps)
        .map(|_| {
            let a = rng.gen_range(0.12..0.3) * half;
            let b = rng.gen_range(0.4..1.0) * a;
            let theta = rng.gen_range(0.0..PI);
            let reach = 0.55 * half;
            let cx = rng.gen_range(-reach..reach);
            let cy = rng.gen_range(-reach..reach);
            let amp = rng.gen_range(0.5..1.5);
            [cx, cy, a, b, theta, amp]
        })
        .collect();
    let mut values: Vec<f64> = (0..grid.len())
        .map(|k| {
            let p = grid.cartesian(k);
            specs
                .iter()
                .map(|&[cx, cy, a, b, th, amp]| {
                    let (dx, dy) = (p[0] - cx, p[1] - cy);
                    let u = (dx * th.cos() + dy * th.sin()) / a;
                    let v = (-dx * th.sin() + dy * th.cos()) / b;
                    amp * (1.0 - (u * u + v * v)).max(0.0).powi(3)
                })
                .sum()
        })
        .collect();
    let norm: f64 = values.iter().zip(&grid.node_volumes).map(|(x, w)| x * x * w).sum::<f64>().sqrt();
    if !(norm > 0.0) {
        return Err(LabError::DomainError("random field vanished on the grid".into()));
    }
    values.iter_mut().for_each(|x| *x /= norm);
    ScalarField::new(grid.clone(), values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::build_grid;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn boxed(n: usize) -> Arc<ManifoldGrid> {
        Arc::new(build_grid(ManifoldKind::EuclideanBox { lx: 8.0, ly: 8.0 }, [n, n]).unwrap())
    }

    fn radial_bump(g: &ManifoldGrid) -> Vec<f64> {
        (0..g.len())
            .map(|k| {
                let p = g.cartesian(k);
                (1.0 - (p[0] * p[0] + p[1] * p[1]) / 9.0).max(0.0).powi(3)
            })
            .collect()
    }

    #[test]
    fn distribution_rejects_negative_values() {
        let g = boxed(8);
        let mut phi = vec![1.0; g.len()];
        phi[3] = -1e-3;
        assert!(matches!(distribution(&g, &phi, 16), Err(LabError::DomainError(_))));
    }

    #[test]
    fn rearranged_level_volumes_match_within_one_cell() {
        let g = boxed(128);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let phi = random_bump_field(&g, &mut rng, 3).unwrap().values;
        let p = distribution(&g, &phi, DEFAULT_THRESHOLDS).unwrap();
        let cell = g.node_volumes.iter().cloned().fold(0.0, f64::max);
        for (&t, &f) in p.thresholds.iter().zip(&p.measure) {
            assert!((p.rearranged_measure_at(t) - f).abs() <= cell * (1.0 + 1e-9));
        }
        let total: f64 = phi.iter().zip(&g.node_volumes).filter(|(v, _)| **v > 0.0).map(|(_, w)| w).sum();
        assert!((p.support - total).abs() < 1e-12 * total);
    }

    #[test]
    fn radial_field_is_a_fixed_point() {
        let g = boxed(256);
        let phi = radial_bump(&g);
        let p = distribution(&g, &phi, DEFAULT_THRESHOLDS).unwrap();
        let r = radial_rearrangement(&p, g.spacing_scale(), DEFAULT_RADIAL_CELLS);
        assert!((r.radius - 3.0).abs() < 2.0 * g.spacing_scale());
        for (rho, v) in r.edges.iter().zip(&r.values).step_by(64) {
            let exact = (1.0 - rho * rho / 9.0).max(0.0).powi(3);
            assert!((v - exact).abs() < 2e-2, "rho={rho}");
        }
        let (e_phi, e_g) = dirichlet_compare(&g, &phi, &p, &r).unwrap();
        assert!((e_phi - e_g).abs() < 2e-2 * e_phi, "{e_phi} {e_g}");
    }

    #[test]
    fn layer_cake_matches_direct_integral() {
        let g = boxed(128);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let phi = random_bump_field(&g, &mut rng, 2).unwrap().values;
        let p = distribution(&g, &phi, DEFAULT_THRESHOLDS).unwrap();
        let lambdas: [fn(f64) -> f64; 3] = [|s| s, |s| s * s, |s| if s > 0.0 { s * s * (s * s).ln() } else { 0.0 }];
        for l in lambdas {
            let (lhs, rhs) = layer_cake(&g, &phi, &p, l).unwrap();
            assert!((lhs - rhs).abs() <= 1e-3 * rhs.abs().max(1e-12), "{lhs} {rhs}");
        }
        assert!(layer_cake(&g, &phi, &p, |s| s + 1.0).is_err());
    }

    #[test]
    fn symmetrization_lowers_energy_and_the_functional() {
        let g = boxed(128);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..5 {
            let phi = random_bump_field(&g, &mut rng, 2).unwrap().values;
            let p = distribution(&g, &phi, DEFAULT_THRESHOLDS).unwrap();
            let r = radial_rearrangement(&p, g.spacing_scale(), DEFAULT_RADIAL_CELLS);
            let (e_phi, e_g) = dirichlet_compare(&g, &phi, &p, &r).unwrap();
            assert!(e_phi >= e_g, "{e_phi} {e_g}");
            let (f_phi, f_g) = (functional_32(&g, &phi), functional_32_radial(&r));
            assert!(f_phi >= f_g - 1e-3 && f_g >= -1e-3, "{f_phi} {f_g}");
        }
    }

    #[test]
    fn coarea_chain_holds_on_random_fields() {
        let g = boxed(256);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut checked = 0;
        for _ in 0..4 {
            let phi = random_bump_field(&g, &mut rng, 2).unwrap().values;
            let top = phi.iter().cloned().fold(0.0, f64::max);
            let floor = 0.05 * gradient_frame_values(&g, &phi).iter().map(|v| v[0].hypot(v[1])).fold(0.0, f64::max);
            for j in 1..16 {
                match coarea_chain(&g, &phi, top * j as f64 / 16.0, floor) {
                    Ok(d) => {
                        checked += 1;
                        assert!(d.holder_holds);
                        assert!(d.comparison_holds, "{d:?}");
                        assert!((d.ball_grad_integral * d.ball_inv_grad_integral - d.ball_area.powi(2)).abs() < 1e-9 * d.ball_area.powi(2));
                    }
                    Err(LabError::DegenerateLevel { .. }) => {}
                    Err(e) => panic!("{e}"),
                }
            }
        }
        assert!(checked > 20, "{checked}");
    }

    #[test]
    fn non_euclidean_grids_are_rejected() {
        let g = Arc::new(build_grid(ManifoldKind::unit_sphere(), [32, 16]).unwrap());
        let phi = vec![1.0; g.len()];
        let p = distribution(&g, &phi, 8).unwrap();
        let r = radial_rearrangement(&p, 0.1, 64);
        assert!(matches!(dirichlet_compare(&g, &phi, &p, &r), Err(LabError::UnsupportedGrid(_))));
    }
}
