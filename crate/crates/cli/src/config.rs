//! Experiment configuration (TOML).

use std::fs::File;
use std::path::{Path, PathBuf};

use lame_spectral::enclosure::{BoundSpec, TheoremId};
use lame_spectral::io::{read_binary, read_csv};
use lame_spectral::lame::{LameParams, Potential};
use lame_spectral::lattice::Lattice;
use lame_spectral::norms::DEFAULT_WEIGHT_FLOOR;
use lame_spectral::potentials::{EnsembleOptions, PotentialSpec};
use lame_spectral::spectra::{Discretization, EigenOptions, NormEstimateOptions, NormPair, DEFAULT_MEMORY_BUDGET};
use lame_spectral::Complex64;
use serde::{Deserialize, Serialize};

/// A configuration problem, tied to the offending key.
#[derive(Debug)]
pub struct ConfigError {
    pub field: String,
    pub reason: String,
}

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "invalid config field `{}`: {}", self.field, self.reason)
    }
}

impl std::error::Error for ConfigError {}

fn bad(field: &str, reason: impl ToString) -> ConfigError {
    ConfigError { field: field.to_string(), reason: reason.to_string() }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_output")]
    pub output: PathBuf,
    pub lattice: LatticeConfig,
    #[serde(default)]
    pub lame: LameConfig,
    #[serde(default)]
    pub potential: PotentialConfig,
    #[serde(default)]
    pub field: FieldConfig,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub theorems: Vec<TheoremConfig>,
    #[serde(default)]
    pub resolvent: ResolventConfig,
    #[serde(default)]
    pub bs: BsConfig,
    #[serde(default)]
    pub norms: Vec<NormConfig>,
    #[serde(default)]
    pub ensemble: Option<EnsembleConfig>,
    /// Directory of the config file; relative paths resolve against it.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

fn default_output() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LatticeConfig {
    pub dim: usize,
    pub n: usize,
    pub period: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LameConfig {
    pub lambda: f64,
    pub mu: f64,
}

impl Default for LameConfig {
    fn default() -> Self {
        Self { lambda: 1.0, mu: 1.0 }
    }
}

#[derive(Debug, Default, Clone, Copy, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum FieldFormat {
    #[default]
    Csv,
    Binary,
}

#[derive(Debug, Default, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum PotentialConfig {
    #[default]
    Zero,
    Gaussian {
        depth: [f64; 2],
        width: f64,
        /// Cutoff radius; defaults to four widths.
        radius: Option<f64>,
        #[serde(default)]
        center: Vec<f64>,
    },
    SquareWell {
        depth: [f64; 2],
        half_width: f64,
        #[serde(default)]
        center: Vec<f64>,
    },
    PowerCutoff {
        depth: [f64; 2],
        exponent: f64,
        radius: f64,
        #[serde(default)]
        center: Vec<f64>,
    },
    /// Samples read from a field file on the configured lattice.
    File {
        path: PathBuf,
        #[serde(default)]
        format: FieldFormat,
    },
}

#[derive(Debug, Default, Clone, Copy, Serialize, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum FieldKind {
    #[default]
    Random,
    Gradient,
    Solenoidal,
    File,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FieldConfig {
    #[serde(default)]
    pub kind: FieldKind,
    pub path: Option<PathBuf>,
    #[serde(default)]
    pub format: FieldFormat,
    #[serde(default)]
    pub write_binary: bool,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverConfig {
    pub discretization: Discretization,
    pub filter: Option<f64>,
    pub filter_fraction: f64,
    pub residual_tolerance: Option<f64>,
    pub residual_fraction: f64,
    pub memory_budget_mib: u64,
    pub force_general: bool,
    /// Relative tolerance of the Birman-Schwinger power iteration.
    pub bs_tol: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        let e = EigenOptions::default();
        Self {
            discretization: e.discretization,
            filter: e.filter,
            filter_fraction: e.filter_fraction,
            residual_tolerance: e.residual_tolerance,
            residual_fraction: e.residual_fraction,
            memory_budget_mib: DEFAULT_MEMORY_BUDGET >> 20,
            force_general: e.force_general,
            bs_tol: 1e-8,
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TheoremConfig {
    pub theorem: TheoremId,
    pub gamma: f64,
    pub p: Option<f64>,
    pub alpha: Option<f64>,
    pub calibrated_constant: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ResolventConfig {
    /// Spectral parameters as `[re, im]` pairs.
    pub z: Vec<[f64; 2]>,
    pub pairs: Vec<NormPairConfig>,
    pub random_starts: usize,
    pub iterations: usize,
    pub tol: f64,
}

impl Default for ResolventConfig {
    fn default() -> Self {
        let o = NormEstimateOptions::default();
        Self { z: vec![[-1.0, 1.0]], pairs: Vec::new(), random_starts: o.random_starts, iterations: o.iterations, tol: o.tol }
    }
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum NormPairConfig {
    Lebesgue { p: f64 },
    Weighted { alpha: f64 },
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BsConfig {
    /// Points to test; empty means the computed discrete eigenvalues.
    #[serde(default)]
    pub z: Vec<[f64; 2]>,
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case", deny_unknown_fields)]
pub enum NormConfig {
    Lp { p: f64 },
    WeightedLq { q: f64, alpha: f64 },
    MorreyCampanato { alpha: f64, p: f64 },
    KermanSayer { alpha: f64 },
    Muckenhoupt { p: f64, floor: Option<f64> },
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnsembleConfig {
    pub count: usize,
    pub seed: Option<u64>,
    pub families: Option<Vec<String>>,
    pub min_depth: Option<f64>,
    pub max_depth: Option<f64>,
    pub max_radius: Option<f64>,
    #[serde(default)]
    pub real: bool,
    pub free_phase_fraction: Option<f64>,
    pub max_phase_offset: Option<f64>,
    /// `[lambda, mu]` pairs assigned to members cyclically; defaults to `[lame]`.
    #[serde(default)]
    pub lame: Vec<[f64; 2]>,
    /// Drop members without a discrete eigenvalue instead of failing.
    #[serde(default)]
    pub skip_empty: bool,
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| bad("<file>", format!("{}: {e}", path.display())))?;
        let mut cfg: ExperimentConfig = toml::from_str(&text).map_err(|e| {
            let msg = e.message().to_string();
            let field = msg.split('`').nth(1).unwrap_or("<toml>").to_string();
            ConfigError { field, reason: e.to_string().trim().to_string() }
        })?;
        cfg.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(cfg)
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn lattice(&self) -> Result<Lattice, ConfigError> {
        let l = &self.lattice;
        Lattice::new(l.dim, l.n, l.period).map_err(|e| {
            let field = if !(1..=3).contains(&l.dim) {
                "lattice.dim"
            } else if !(l.period > 0.0) {
                "lattice.period"
            } else {
                "lattice.n"
            };
            bad(field, e)
        })
    }

    pub fn params(&self) -> Result<LameParams, ConfigError> {
        LameParams::new(self.lame.lambda, self.lame.mu).map_err(|e| bad("lame", e))
    }

    pub fn eigen_options(&self) -> Result<EigenOptions, ConfigError> {
        let s = &self.solver;
        for (name, v) in [("solver.filter", s.filter), ("solver.residual_tolerance", s.residual_tolerance)] {
            if let Some(v) = v {
                if !(v >= 0.0 && v.is_finite()) {
                    return Err(bad(name, format!("must be a finite non-negative number, got {v}")));
                }
            }
        }
        for (name, v) in [("solver.filter_fraction", s.filter_fraction), ("solver.residual_fraction", s.residual_fraction)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(bad(name, format!("must be positive, got {v}")));
            }
        }
        if !(s.bs_tol > 0.0 && s.bs_tol < 1.0) {
            return Err(bad("solver.bs_tol", format!("must lie in (0, 1), got {}", s.bs_tol)));
        }
        Ok(EigenOptions {
            discretization: s.discretization,
            filter: s.filter,
            filter_fraction: s.filter_fraction,
            residual_tolerance: s.residual_tolerance,
            residual_fraction: s.residual_fraction,
            memory_budget: s.memory_budget_mib << 20,
            force_general: s.force_general,
        })
    }

    fn center(&self, c: &[f64]) -> Result<[f64; 3], ConfigError> {
        let d = self.lattice.dim;
        if !c.is_empty() && c.len() != d {
            return Err(bad("potential.center", format!("needs {d} coordinates, got {}", c.len())));
        }
        let mut out = [0.0; 3];
        out[..c.len()].copy_from_slice(c);
        Ok(out)
    }

    pub fn potential_spec(&self) -> Result<Option<PotentialSpec>, ConfigError> {
        let depth = |d: &[f64; 2]| Complex64::new(d[0], d[1]);
        Ok(Some(match &self.potential {
            PotentialConfig::Zero => PotentialSpec::Zero,
            PotentialConfig::Gaussian { depth: d, width, radius, center } => PotentialSpec::Gaussian {
                depth: depth(d),
                width: *width,
                radius: radius.unwrap_or(4.0 * width),
                center: self.center(center)?,
            },
            PotentialConfig::SquareWell { depth: d, half_width, center } => {
                PotentialSpec::SquareWell { depth: depth(d), half_width: *half_width, center: self.center(center)? }
            }
            PotentialConfig::PowerCutoff { depth: d, exponent, radius, center } => PotentialSpec::PowerCutoff {
                depth: depth(d),
                exponent: *exponent,
                radius: *radius,
                center: self.center(center)?,
            },
            PotentialConfig::File { .. } => return Ok(None),
        }))
    }

    /// Builds the potential and checks that it lives in the central half of the cell.
    pub fn potential(&self, lattice: Lattice) -> Result<Potential, ConfigError> {
        let v = match (&self.potential, self.potential_spec()?) {
            (_, Some(spec)) => spec.build(lattice).map_err(|e| bad("potential", e))?,
            (PotentialConfig::File { path, format }, None) => {
                let p = self.resolve(path);
                let file = File::open(&p).map_err(|e| bad("potential.path", format!("{}: {e}", p.display())))?;
                let values = match format {
                    FieldFormat::Csv => read_csv(file, lattice.len()),
                    FieldFormat::Binary => read_binary(file, lattice.len()),
                }
                .map_err(|e| bad("potential.path", e))?;
                let field = lame_spectral::lattice::ScalarField::new(lattice, values).map_err(|e| bad("potential", e))?;
                Potential::new(field).map_err(|e| bad("potential", e))?
            }
            _ => unreachable!("file potentials have no spec"),
        };
        check_central_half(&v).map_err(|r| bad("potential", r))?;
        Ok(v)
    }

    pub fn bound_specs(&self) -> Result<Vec<(BoundSpec, Option<f64>)>, ConfigError> {
        self.theorems
            .iter()
            .enumerate()
            .map(|(i, t)| {
                let spec = BoundSpec { theorem: t.theorem, dim: self.lattice.dim, gamma: t.gamma, p: t.p, alpha: t.alpha };
                if let Some(c) = t.calibrated_constant {
                    if !(c > 0.0 && c.is_finite()) {
                        return Err(bad(&format!("theorems[{i}].calibrated_constant"), format!("must be positive, got {c}")));
                    }
                }
                Ok((spec, t.calibrated_constant))
            })
            .collect()
    }

    pub fn z_points(list: &[[f64; 2]], field: &str) -> Result<Vec<Complex64>, ConfigError> {
        list.iter()
            .map(|z| {
                if z.iter().all(|c| c.is_finite()) {
                    Ok(Complex64::new(z[0], z[1]))
                } else {
                    Err(bad(field, format!("non-finite point {z:?}")))
                }
            })
            .collect()
    }

    pub fn norm_pairs(&self) -> Vec<NormPair> {
        self.resolvent
            .pairs
            .iter()
            .map(|p| match *p {
                NormPairConfig::Lebesgue { p } => NormPair::Lebesgue { p },
                NormPairConfig::Weighted { alpha } => NormPair::Weighted { alpha },
            })
            .collect()
    }

    pub fn norm_estimate_options(&self) -> NormEstimateOptions {
        let r = &self.resolvent;
        NormEstimateOptions { random_starts: r.random_starts, iterations: r.iterations, tol: r.tol, seed: self.seed }
    }

    pub fn ensemble_options(&self, lattice: &Lattice) -> Result<(EnsembleOptions, &EnsembleConfig), ConfigError> {
        let e = self.ensemble.as_ref().ok_or_else(|| bad("ensemble", "the [ensemble] table is required"))?;
        if e.count == 0 {
            return Err(bad("ensemble.count", "must be at least 1"));
        }
        let mut o = EnsembleOptions::for_lattice(lattice);
        o.real = e.real;
        if let Some(f) = &e.families {
            o.families = f.clone();
        }
        if let Some(v) = e.min_depth {
            o.min_depth = v;
        }
        if let Some(v) = e.max_depth {
            o.max_depth = v;
        }
        if let Some(v) = e.max_radius {
            o.max_radius = v;
        }
        if let Some(v) = e.free_phase_fraction {
            o.free_phase_fraction = v;
        }
        if let Some(v) = e.max_phase_offset {
            o.max_phase_offset = v;
        }
        if !(o.min_depth > 0.0 && o.min_depth <= o.max_depth) {
            return Err(bad("ensemble.min_depth", format!("need 0 < min_depth <= max_depth, got {} and {}", o.min_depth, o.max_depth)));
        }
        if !(o.max_radius > 0.0 && o.max_radius <= lattice.period() / 4.0) {
            return Err(bad("ensemble.max_radius", format!("need 0 < max_radius <= period/4, got {}", o.max_radius)));
        }
        Ok((o, e))
    }

    pub fn muckenhoupt_floor(floor: Option<f64>) -> f64 {
        floor.unwrap_or(DEFAULT_WEIGHT_FLOOR)
    }
}

/// The support must fit in `|x_a| <= L/4` on every axis.
pub fn check_central_half(v: &Potential) -> Result<(), String> {
    let lattice = v.lattice();
    let quarter = lattice.period() / 4.0 + 1e-12;
    for i in v.support_indices() {
        let x = lattice.position(i);
        if x[..lattice.dim()].iter().any(|c| c.abs() > quarter) {
            return Err(format!(
                "support reaches {:?}, outside the central half |x| <= {} of the cell",
                &x[..lattice.dim()],
                lattice.period() / 4.0
            ));
        }
    }
    Ok(())
}
