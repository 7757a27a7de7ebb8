/// Warping function φ(r) of a rotationally symmetric surface dr² + φ(r)² dθ².
#[derive(Debug, Clone, PartialEq)]
pub enum WarpProfile {
    /// φ(r) = a·sin(r/a): round sphere of radius a.
    Sine { scale: f64 },
    /// φ(r) = r: the Euclidean plane in polar coordinates.
    Linear,
    /// φ(r) = Σ c_k r^k.
    Polynomial(Vec<f64>),
}

impl WarpProfile {
    pub fn unit_sphere() -> Self {
        WarpProfile::Sine { scale: 1.0 }
    }

    pub fn value(&self, r: f64) -> f64 {
        match self {
            WarpProfile::Sine { scale } => scale * (r / scale).sin(),
            WarpProfile::Linear => r,
            WarpProfile::Polynomial(c) => c.iter().rev().fold(0.0, |acc, &ck| acc * r + ck),
        }
    }

    pub fn first_derivative(&self, r: f64) -> f64 {
        match self {
            WarpProfile::Sine { scale } => (r / scale).cos(),
            WarpProfile::Linear => 1.0,
            WarpProfile::Polynomial(c) => c
                .iter()
                .enumerate()
                .skip(1)
                .rev()
                .fold(0.0, |acc, (k, &ck)| acc * r + k as f64 * ck),
        }
    }

    pub fn second_derivative(&self, r: f64) -> f64 {
        match self {
            WarpProfile::Sine { scale } => -(r / scale).sin() / scale,
            WarpProfile::Linear => 0.0,
            WarpProfile::Polynomial(c) => c
                .iter()
                .enumerate()
                .skip(2)
                .rev()
                .fold(0.0, |acc, (k, &ck)| acc * r + (k * (k - 1)) as f64 * ck),
        }
    }

    /// Gauss curvature −φ''/φ.
    pub fn gauss_curvature(&self, r: f64) -> f64 {
        match self {
            WarpProfile::Sine { scale } => 1.0 / (scale * scale),
            WarpProfile::Linear => 0.0,
            WarpProfile::Polynomial(_) => -self.second_derivative(r) / self.value(r),
        }
    }

    /// ∫_a^b φ(r) dr by 5-point Gauss–Legendre.
    pub fn integral(&self, a: f64, b: f64) -> f64 {
        const NODES: [f64; 5] = [
            0.0,
            -0.538_469_310_105_683_1,
            0.538_469_310_105_683_1,
            -0.906_179_845_938_664,
            0.906_179_845_938_664,
        ];
        const WEIGHTS: [f64; 5] = [
            0.568_888_888_888_888_9,
            0.478_628_670_499_366_47,
            0.478_628_670_499_366_47,
            0.236_926_885_056_189_08,
            0.236_926_885_056_189_08,
        ];
        let mid = 0.5 * (a + b);
        let half = 0.5 * (b - a);
        NODES
            .iter()
            .zip(WEIGHTS.iter())
            .map(|(x, w)| w * self.value(mid + half * x))
            .sum::<f64>()
            * half
    }

    /// Returns true when the profile is the unit round sphere (Legendre oracle available).
    pub fn is_unit_sphere(&self) -> bool {
        matches!(self, WarpProfile::Sine { scale } if (*scale - 1.0).abs() < 1e-15)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polynomial_derivatives() {
        let p = WarpProfile::Polynomial(vec![0.0, 1.0, 0.0, -1.0 / 6.0]);
        let r = 0.7;
        assert!((p.value(r) - (r - r * r * r / 6.0)).abs() < 1e-15);
        assert!((p.first_derivative(r) - (1.0 - r * r / 2.0)).abs() < 1e-15);
        assert!((p.second_derivative(r) + r).abs() < 1e-15);
    }

    #[test]
    fn sine_integral_is_exact_enough() {
        let s = WarpProfile::unit_sphere();
        let got = s.integral(0.0, 0.3);
        let want = 1.0 - 0.3f64.cos();
        assert!((got - want).abs() < 1e-15);
        assert_eq!(s.gauss_curvature(1.0), 1.0);
    }
}
