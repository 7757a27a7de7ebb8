//! Flat `key = value` experiment configuration.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use crate::error::{LabError, Result};
use crate::geometry::ManifoldKind;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Experiment {
    Monotonicity,
    Pointwise,
    DissipationMatch,
    Liyau,
    Varadhan,
    MuCurve,
    LsiEuclidean,
    Symmetrize,
    Growth,
    Noncollapse,
    All,
}

impl Experiment {
    pub const ALL: [Experiment; 11] = [
        Experiment::Monotonicity,
        Experiment::Pointwise,
        Experiment::DissipationMatch,
        Experiment::Liyau,
        Experiment::Varadhan,
        Experiment::MuCurve,
        Experiment::LsiEuclidean,
        Experiment::Symmetrize,
        Experiment::Growth,
        Experiment::Noncollapse,
        Experiment::All,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Experiment::Monotonicity => "monotonicity",
            Experiment::Pointwise => "pointwise",
            Experiment::DissipationMatch => "dissipation-match",
            Experiment::Liyau => "liyau",
            Experiment::Varadhan => "varadhan",
            Experiment::MuCurve => "mu-curve",
            Experiment::LsiEuclidean => "lsi-euclidean",
            Experiment::Symmetrize => "symmetrize",
            Experiment::Growth => "growth",
            Experiment::Noncollapse => "noncollapse",
            Experiment::All => "all",
        }
    }

    /// The statement each experiment checks.
    pub fn anchor(self) -> &'static str {
        match self {
            Experiment::Monotonicity => "Theorem 0.1",
            Experiment::Pointwise => "Theorem 0.2",
            Experiment::DissipationMatch => "Theorem 0.1, dissipation identity",
            Experiment::Liyau => "Theorem 0.2, Li-Yau inequality",
            Experiment::Varadhan => "Theorem 0.3, Varadhan limit",
            Experiment::MuCurve => "Corollary 0.1",
            Experiment::LsiEuclidean => "Proposition 2.1",
            Experiment::Symmetrize => "Proposition 3.1",
            Experiment::Growth => "Proposition 3.2",
            Experiment::Noncollapse => "Proposition 4.1",
            Experiment::All => "every experiment above",
        }
    }
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Experiment {
    type Err = LabError;

    fn from_str(s: &str) -> Result<Self> {
        Experiment::ALL
            .into_iter()
            .find(|e| e.name() == s)
            .ok_or_else(|| LabError::Config(format!("unknown experiment '{s}'")))
    }
}

/// Tolerance names accepted as `tolerance.<name>`.
pub const TOLERANCES: [&str; 8] = ["slack", "defect", "relerr", "ratio", "mu", "distance", "band", "gradient"];

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TimeGrid {
    pub t0: Option<f64>,
    pub t_end: Option<f64>,
    pub dt: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ExperimentConfig {
    pub experiment: Option<Experiment>,
    pub manifold: Option<ManifoldKind>,
    pub resolution: Option<[usize; 2]>,
    pub time: TimeGrid,
    pub taus: Option<Vec<f64>>,
    pub samples: Option<usize>,
    pub radius: Option<f64>,
    pub tolerances: BTreeMap<String, f64>,
    pub out_dir: Option<PathBuf>,
    pub seed: Option<u64>,
    /// Accepted (key, value) pairs in file order, for the manifest.
    pub entries: Vec<(String, String)>,
}

fn config_err(line: usize, msg: impl fmt::Display) -> LabError {
    LabError::Config(format!("line {line}: {msg}"))
}

fn positive(line: usize, key: &str, v: &str) -> Result<f64> {
    let x: f64 = v.parse().map_err(|_| config_err(line, format!("{key}: '{v}' is not a number")))?;
    if !(x > 0.0) || !x.is_finite() {
        return Err(config_err(line, format!("{key} must be positive and finite, got {v}")));
    }
    Ok(x)
}

fn count(line: usize, key: &str, v: &str) -> Result<usize> {
    let x: usize = v.parse().map_err(|_| config_err(line, format!("{key}: '{v}' is not a count")))?;
    if x == 0 {
        return Err(config_err(line, format!("{key} must be at least 1")));
    }
    Ok(x)
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = ExperimentConfig::default();
        let mut kind: Option<(usize, String)> = None;
        let mut dims: BTreeMap<&'static str, (usize, f64)> = BTreeMap::new();
        let mut n0 = None;
        let mut n1 = None;
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let (key, value) = content
                .split_once('=')
                .map(|(k, v)| (k.trim(), v.trim()))
                .ok_or_else(|| config_err(line, format!("expected key = value, got '{content}'")))?;
            if cfg.entries.iter().any(|(k, _)| k == key) {
                return Err(config_err(line, format!("duplicate key '{key}'")));
            }
            match key {
                "experiment" => cfg.experiment = Some(value.parse().map_err(|e| config_err(line, e))?),
                "manifold.kind" => kind = Some((line, value.to_string())),
                "manifold.length" => {
                    dims.insert("length", (line, positive(line, key, value)?));
                }
                "manifold.lx" => {
                    dims.insert("lx", (line, positive(line, key, value)?));
                }
                "manifold.ly" => {
                    dims.insert("ly", (line, positive(line, key, value)?));
                }
                "manifold.radius" => {
                    dims.insert("radius", (line, positive(line, key, value)?));
                }
                "grid.n0" => n0 = Some(count(line, key, value)?),
                "grid.n1" => n1 = Some(count(line, key, value)?),
                "time.t0" => cfg.time.t0 = Some(positive(line, key, value)?),
                "time.t_end" => cfg.time.t_end = Some(positive(line, key, value)?),
                "time.dt" => cfg.time.dt = Some(positive(line, key, value)?),
                "tau.values" => {
                    let taus = value
                        .split(',')
                        .map(|v| positive(line, key, v.trim()))
                        .collect::<Result<Vec<_>>>()?;
                    if taus.windows(2).any(|w| w[1] <= w[0]) {
                        return Err(config_err(line, "tau.values must be strictly ascending"));
                    }
                    cfg.taus = Some(taus);
                }
                "samples.count" => cfg.samples = Some(count(line, key, value)?),
                "growth.radius" => cfg.radius = Some(positive(line, key, value)?),
                "output.dir" => {
                    if value.is_empty() {
                        return Err(config_err(line, "output.dir is empty"));
                    }
                    cfg.out_dir = Some(PathBuf::from(value));
                }
                "seed" => {
                    cfg.seed = Some(value.parse().map_err(|_| config_err(line, format!("seed: '{value}' is not an integer")))?)
                }
                _ => match key.strip_prefix("tolerance.") {
                    Some(name) if TOLERANCES.contains(&name) => {
                        cfg.tolerances.insert(name.to_string(), positive(line, key, value)?);
                    }
                    _ => return Err(config_err(line, format!("unknown key '{key}'"))),
                },
            }
            cfg.entries.push((key.to_string(), value.to_string()));
        }
        if let (Some(t0), Some(t1)) = (cfg.time.t0, cfg.time.t_end) {
            if t1 <= t0 {
                return Err(LabError::Config(format!("time.t_end ({t1}) must exceed time.t0 ({t0})")));
            }
        }
        cfg.resolution = match (n0, n1) {
            (None, None) => None,
            (Some(a), b) => Some([a, b.unwrap_or(1)]),
            (None, Some(_)) => return Err(LabError::Config("grid.n1 given without grid.n0".into())),
        };
        if let Some((line, name)) = kind {
            cfg.manifold = Some(manifold_from(line, &name, &mut dims)?);
        }
        if let Some((_, (line, _))) = dims.iter().next() {
            return Err(config_err(*line, "manifold dimensions given without a matching manifold.kind"));
        }
        Ok(cfg)
    }

    pub fn tolerance(&self, name: &str, default: f64) -> f64 {
        debug_assert!(TOLERANCES.contains(&name));
        self.tolerances.get(name).copied().unwrap_or(default)
    }
}

fn manifold_from(line: usize, name: &str, dims: &mut BTreeMap<&'static str, (usize, f64)>) -> Result<ManifoldKind> {
    let mut take = |k: &'static str, default: f64| dims.remove(k).map(|(_, v)| v).unwrap_or(default);
    Ok(match name {
        "circle" => ManifoldKind::Circle { length: take("length", 2.0 * PI) },
        "torus" => ManifoldKind::FlatTorus { lx: take("lx", 2.0 * PI), ly: take("ly", 2.0 * PI) },
        "sphere" => {
            let a = take("radius", 1.0);
            ManifoldKind::WarpedSurface {
                warp: crate::geometry::WarpProfile::Sine { scale: a },
                radius: PI * a,
                outer: crate::geometry::OuterEnd::Pole,
            }
        }
        "box" => ManifoldKind::EuclideanBox { lx: take("lx", 8.0), ly: take("ly", 8.0) },
        "disc" => ManifoldKind::EuclideanDisc { radius: take("radius", 1.0) },
        other => return Err(config_err(line, format!("unknown manifold.kind '{other}'"))),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_sections_and_comments() {
        let cfg = ExperimentConfig::parse(
            "# sphere run\nexperiment = monotonicity\nmanifold.kind = sphere\ngrid.n0 = 64\ngrid.n1 = 16\n\ntime.dt = 0.01 # step\ntau.values = 0.1, 1, 10\ntolerance.slack = 1e-9\nseed = 7\n",
        )
        .unwrap();
        assert_eq!(cfg.experiment, Some(Experiment::Monotonicity));
        assert_eq!(cfg.manifold, Some(ManifoldKind::unit_sphere()));
        assert_eq!(cfg.resolution, Some([64, 16]));
        assert_eq!(cfg.time.dt, Some(0.01));
        assert_eq!(cfg.taus, Some(vec![0.1, 1.0, 10.0]));
        assert_eq!(cfg.tolerance("slack", 1.0), 1e-9);
        assert_eq!(cfg.seed, Some(7));
        assert_eq!(cfg.entries.len(), 8);
    }

    #[test]
    fn rejects_bad_input() {
        for text in [
            "time.dt = 0",
            "time.dt = -1",
            "time.dx = 1",
            "tolerance.whatever = 1",
            "manifold.kind = klein",
            "manifold.lx = 2",
            "grid.n0 = 0",
            "seed = x",
            "no equals sign",
            "seed = 1\nseed = 2",
            "time.t0 = 1\ntime.t_end = 0.5",
            "tau.values = 1, 0.5",
        ] {
            assert!(matches!(ExperimentConfig::parse(text), Err(LabError::Config(_))), "{text}");
        }
    }

    #[test]
    fn experiment_names_round_trip() {
        for e in Experiment::ALL {
            assert_eq!(e.name().parse::<Experiment>().unwrap(), e);
        }
        assert!("bogus".parse::<Experiment>().is_err());
    }
}
