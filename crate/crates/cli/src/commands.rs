//! One function per subcommand. Each reads the validated config, runs the
//! pipeline and writes its files into the output directory.

use std::collections::BTreeMap;
use std::fs::File;

use lame_spectral::enclosure::{
    calibrate_with_spectra, enclosure_report, BoundSpec, Calibration, EnclosureReport, EnsembleMember,
    ensemble_fingerprint,
};
use lame_spectral::helmholtz::{divergence_residual, gradient_residual, helmholtz_decompose};
use lame_spectral::io::{read_vector_binary, read_vector_csv};
use lame_spectral::lame::{LameParams, Potential};
use lame_spectral::lattice::{Lattice, VectorField};
use lame_spectral::norms::{
    kerman_sayer_norm, lp_norm, morrey_campanato_norm, muckenhoupt_constant_with_floor, weighted_lq_norm, NormResult,
};
use lame_spectral::potentials::{random_ensemble, PotentialSpec};
use lame_spectral::spectra::{
    bs_check as bs_distance, bs_norm, discrete_eigenvalues, random_field, resolvent_norm_estimate, BirmanSchwinger,
    Eigenvalue, NormPair, ResolventNormEstimate, SolverInfo,
};
use lame_spectral::{Complex64, Error};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{ConfigError, ExperimentConfig, FieldFormat, FieldKind, NormConfig};
use crate::output::OutputDir;

#[derive(Debug)]
pub enum CliError {
    Config(ConfigError),
    Core(Error),
    Io(std::io::Error),
}

impl CliError {
    pub fn config(field: &str, reason: impl ToString) -> Self {
        CliError::Config(ConfigError { field: field.to_string(), reason: reason.to_string() })
    }

    /// 0 success, 2 invalid input, 3 hypothesis violation, 4 budget, 1 anything else.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Core(e) => match e {
                Error::HypothesisViolation { .. } => 3,
                Error::BudgetExceeded { .. } => 4,
                Error::InvalidLattice(_)
                | Error::InvalidParameter { .. }
                | Error::InvalidLameParams(_)
                | Error::NearSpectrum { .. }
                | Error::Parse(_) => 2,
                _ => 1,
            },
            CliError::Io(_) => 1,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(e) => e.fmt(f),
            CliError::Core(e) => e.fmt(f),
            CliError::Io(e) => write!(f, "i/o error: {e}"),
        }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Config(e)
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Core(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e)
    }
}

type Result<T> = std::result::Result<T, CliError>;

#[derive(Serialize)]
struct LatticeInfo {
    dim: usize,
    n: usize,
    period: f64,
    spacing: f64,
}

impl From<&Lattice> for LatticeInfo {
    fn from(l: &Lattice) -> Self {
        Self { dim: l.dim(), n: l.n(), period: l.period(), spacing: l.spacing() }
    }
}

fn input_field(cfg: &ExperimentConfig, lattice: Lattice) -> Result<VectorField> {
    let random = || random_field(lattice, &mut ChaCha8Rng::seed_from_u64(cfg.seed));
    Ok(match cfg.field.kind {
        FieldKind::Random => random(),
        FieldKind::Gradient => helmholtz_decompose(&random()).potential,
        FieldKind::Solenoidal => helmholtz_decompose(&random()).solenoidal,
        FieldKind::File => {
            let path = cfg.field.path.as_ref().ok_or_else(|| CliError::config("field.path", "required for kind = \"file\""))?;
            let path = cfg.resolve(path);
            let file = File::open(&path).map_err(|e| CliError::config("field.path", format!("{}: {e}", path.display())))?;
            match cfg.field.format {
                FieldFormat::Csv => read_vector_csv(lattice, file),
                FieldFormat::Binary => read_vector_binary(lattice, file),
            }
            .map_err(|e| CliError::config("field.path", e))?
        }
    })
}

#[derive(Serialize)]
struct DecomposeReport {
    lattice: LatticeInfo,
    field_kind: FieldKind,
    norm_f: f64,
    norm_solenoidal: f64,
    norm_potential: f64,
    pythagorean_residual: f64,
    orthogonality_residual: f64,
    /// Divergence of `f_S`.
    divergence_residual: f64,
    /// Curl of `f_P`.
    gradient_residual: f64,
    reconstruction_error: f64,
}

pub fn decompose(cfg: &ExperimentConfig, out: &OutputDir) -> Result<()> {
    let lattice = cfg.lattice()?;
    let f = input_field(cfg, lattice)?;
    let pair = helmholtz_decompose(&f);
    let norm_f = f.l2_norm();
    let recon = (&pair.reconstruct() - &f).l2_norm();
    let report = DecomposeReport {
        lattice: (&lattice).into(),
        field_kind: cfg.field.kind,
        norm_f,
        norm_solenoidal: pair.solenoidal.l2_norm(),
        norm_potential: pair.potential.l2_norm(),
        pythagorean_residual: pair.pythagorean_residual(&f),
        orthogonality_residual: pair.orthogonality_residual(),
        divergence_residual: divergence_residual(&pair.solenoidal),
        gradient_residual: gradient_residual(&pair.potential),
        reconstruction_error: if norm_f > 0.0 { recon / norm_f } else { recon },
    };
    let binary = cfg.field.write_binary;
    out.write_field("f", &f, binary)?;
    out.write_field("f_s", &pair.solenoidal, binary)?;
    out.write_field("f_p", &pair.potential, binary)?;
    out.write_result("decompose.json", "decompose", cfg.seed, report)
}

pub fn resolvent_check(cfg: &ExperimentConfig, out: &OutputDir) -> Result<()> {
    let lattice = cfg.lattice()?;
    let params = cfg.params()?;
    let zs = ExperimentConfig::z_points(&cfg.resolvent.z, "resolvent.z")?;
    let mut pairs = cfg.norm_pairs();
    if pairs.is_empty() {
        let d = lattice.dim() as f64;
        pairs = vec![NormPair::Lebesgue { p: 2.0 * (d + 1.0) / (d + 3.0) }, NormPair::Weighted { alpha: 1.0 }];
    }
    let opts = cfg.norm_estimate_options();
    let mut estimates: Vec<ResolventNormEstimate> = Vec::new();
    for z in &zs {
        for pair in &pairs {
            estimates.push(resolvent_norm_estimate(&params, *z, &lattice, *pair, &opts)?);
        }
    }
    #[derive(Serialize)]
    struct Report {
        lattice: LatticeInfo,
        estimates: Vec<ResolventNormEstimate>,
    }
    out.write_result("resolvent.json", "resolvent-check", cfg.seed, Report { lattice: (&lattice).into(), estimates })
}

#[derive(Serialize)]
struct EigenRow {
    index: usize,
    re: f64,
    im: f64,
    residual: f64,
    dist_to_ray: f64,
}

fn eigen_rows(values: &[Eigenvalue]) -> impl Iterator<Item = EigenRow> + '_ {
    values.iter().enumerate().map(|(index, e)| EigenRow {
        index,
        re: e.z.re,
        im: e.z.im,
        residual: e.residual,
        dist_to_ray: e.dist_to_ray,
    })
}

struct Problem {
    params: LameParams,
    potential: Potential,
}

fn problem(cfg: &ExperimentConfig) -> Result<Problem> {
    let lattice = cfg.lattice()?;
    Ok(Problem { params: cfg.params()?, potential: cfg.potential(lattice)? })
}

pub fn spectrum(cfg: &ExperimentConfig, out: &OutputDir) -> Result<()> {
    let opts = cfg.eigen_options()?;
    let p = problem(cfg)?;
    let res = discrete_eigenvalues(&p.params, &p.potential, &opts)?;
    out.write_rows("eigenvalues.csv", eigen_rows(&res.eigenvalues))?;
    out.write_result("spectrum.json", "spectrum", cfg.seed, &res)
}

pub fn bs_check(cfg: &ExperimentConfig, out: &OutputDir) -> Result<()> {
    let opts = cfg.eigen_options()?;
    let p = problem(cfg)?;
    let mut points: Vec<(Complex64, &'static str)> =
        ExperimentConfig::z_points(&cfg.bs.z, "bs.z")?.into_iter().map(|z| (z, "config")).collect();
    if points.is_empty() {
        let res = discrete_eigenvalues(&p.params, &p.potential, &opts)?;
        points = res.values().into_iter().map(|z| (z, "eigenvalue")).collect();
    }
    #[derive(Serialize)]
    struct Entry {
        z: Complex64,
        source: &'static str,
        /// `min |1 + sigma|` over the spectrum of the Birman-Schwinger operator.
        distance_to_minus_one: f64,
        operator_norm: f64,
    }
    let entries = points
        .into_iter()
        .map(|(z, source)| {
            let k = BirmanSchwinger::new(p.params, &p.potential, z)?;
            Ok(Entry {
                z,
                source,
                distance_to_minus_one: bs_distance(&p.params, &p.potential, z)?,
                operator_norm: bs_norm(&k, cfg.solver.bs_tol)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    out.write_result("bs.json", "bs-check", cfg.seed, entries)
}

fn plain(name: &str, params: &[(&str, f64)], value: f64) -> NormResult {
    NormResult {
        norm_name: name.to_string(),
        params: params.iter().map(|(k, v)| (k.to_string(), *v)).collect::<BTreeMap<_, _>>(),
        value,
        witness: None,
        floored_cells: 0,
    }
}

pub fn norms(cfg: &ExperimentConfig, out: &OutputDir) -> Result<()> {
    if cfg.norms.is_empty() {
        return Err(CliError::config("norms", "list at least one norm"));
    }
    let p = problem(cfg)?;
    let v = &p.potential;
    let results = cfg
        .norms
        .iter()
        .map(|n| {
            Ok(match *n {
                NormConfig::Lp { p } => plain("lp", &[("p", p)], lp_norm(v, p)?),
                NormConfig::WeightedLq { q, alpha } => {
                    plain("weighted_lq", &[("alpha", alpha), ("q", q)], weighted_lq_norm(v, q, alpha)?)
                }
                NormConfig::MorreyCampanato { alpha, p } => morrey_campanato_norm(v, alpha, p)?,
                NormConfig::KermanSayer { alpha } => kerman_sayer_norm(v, alpha)?,
                NormConfig::Muckenhoupt { p, floor } => {
                    let w = v.field().map(|z| Complex64::new(z.norm(), 0.0));
                    muckenhoupt_constant_with_floor(&w, p, ExperimentConfig::muckenhoupt_floor(floor))?
                }
            })
        })
        .collect::<Result<Vec<_>>>()?;
    out.write_result("norms.json", "norms", cfg.seed, results)
}

fn validated_specs(cfg: &ExperimentConfig) -> Result<Vec<(BoundSpec, Option<f64>)>> {
    let specs = cfg.bound_specs()?;
    if specs.is_empty() {
        return Err(CliError::config("theorems", "list at least one theorem"));
    }
    for (s, _) in &specs {
        s.validate()?;
    }
    Ok(specs)
}

#[derive(Serialize)]
struct PlotRow {
    theorem: &'static str,
    gamma: f64,
    re: f64,
    im: f64,
    ratio: f64,
    enclosure_radius: Option<f64>,
}

pub fn enclosure(cfg: &ExperimentConfig, out: &OutputDir) -> Result<()> {
    let specs = validated_specs(cfg)?;
    let opts = cfg.eigen_options()?;
    let p = problem(cfg)?;
    let res = discrete_eigenvalues(&p.params, &p.potential, &opts)?;
    let values = res.values();
    let reports = specs
        .iter()
        .map(|(s, c)| enclosure_report(s, &p.params, &p.potential, &values, *c))
        .collect::<lame_spectral::Result<Vec<_>>>()?;
    let rows: Vec<PlotRow> = reports
        .iter()
        .flat_map(|r| {
            r.eigenvalues_tested.iter().zip(&r.ratios).map(move |(z, ratio)| PlotRow {
                theorem: r.bound_spec.theorem.name(),
                gamma: r.bound_spec.gamma,
                re: z.re,
                im: z.im,
                ratio: *ratio,
                enclosure_radius: r.enclosure_radius,
            })
        })
        .collect();
    out.write_rows("enclosure_plot.csv", rows)?;
    #[derive(Serialize)]
    struct Report {
        solver_info: SolverInfo,
        eigenvalues: Vec<Eigenvalue>,
        all_inside: bool,
        reports: Vec<EnclosureReport>,
    }
    let all_inside = reports.iter().all(EnclosureReport::all_inside);
    let report = Report { solver_info: res.solver_info, eigenvalues: res.eigenvalues, all_inside, reports };
    out.write_result("enclosure.json", "enclosure", cfg.seed, report)
}

#[derive(Serialize)]
struct MemberInfo {
    index: usize,
    lambda: f64,
    mu: f64,
    potential: PotentialSpec,
    eigenvalues: Vec<Complex64>,
}

#[derive(Serialize)]
struct CalibrationRow {
    theorem: &'static str,
    gamma: f64,
    member: usize,
    lambda: f64,
    mu: f64,
    max_ratio: f64,
}

pub fn calibrate(cfg: &ExperimentConfig, out: &OutputDir) -> Result<()> {
    let specs = validated_specs(cfg)?;
    let opts = cfg.eigen_options()?;
    let lattice = cfg.lattice()?;
    let (ens_opts, e) = cfg.ensemble_options(&lattice)?;
    let seed = e.seed.unwrap_or(cfg.seed);
    let lame: Vec<LameParams> = if e.lame.is_empty() {
        vec![cfg.params()?]
    } else {
        e.lame
            .iter()
            .enumerate()
            .map(|(i, [l, m])| LameParams::new(*l, *m).map_err(|err| CliError::config(&format!("ensemble.lame[{i}]"), err)))
            .collect::<Result<_>>()?
    };
    let potentials = random_ensemble(&lattice, &ens_opts, seed, e.count)?;
    let members = potentials
        .iter()
        .enumerate()
        .map(|(i, s)| Ok(EnsembleMember { params: lame[i % lame.len()], potential: s.build(lattice)? }))
        .collect::<Result<Vec<_>>>()?;
    let spectra = members
        .par_iter()
        .map(|m| discrete_eigenvalues(&m.params, &m.potential, &opts).map(|r| r.values()))
        .collect::<lame_spectral::Result<Vec<_>>>()?;

    let (kept, skipped): (Vec<usize>, Vec<usize>) = (0..members.len()).partition(|&i| !spectra[i].is_empty());
    if !e.skip_empty {
        if let Some(&member) = skipped.first() {
            return Err(Error::NoEigenvalues { member }.into());
        }
    }
    if kept.is_empty() {
        return Err(Error::EmptyEnsemble.into());
    }
    let kept_members: Vec<EnsembleMember> = kept.iter().map(|&i| members[i].clone()).collect();
    let kept_spectra: Vec<Vec<Complex64>> = kept.iter().map(|&i| spectra[i].clone()).collect();
    let mut calibrations = specs
        .iter()
        .map(|(s, _)| calibrate_with_spectra(s, &kept_members, &kept_spectra))
        .collect::<lame_spectral::Result<Vec<Calibration>>>()?;
    // Report member indices in the original ensemble numbering.
    for c in &mut calibrations {
        c.argmax_member = kept[c.argmax_member];
    }

    let rows: Vec<CalibrationRow> = calibrations
        .iter()
        .flat_map(|c| {
            c.member_ratios.iter().zip(&kept).map(|(r, &i)| CalibrationRow {
                theorem: c.bound_spec.theorem.name(),
                gamma: c.bound_spec.gamma,
                member: i,
                lambda: members[i].params.lambda(),
                mu: members[i].params.mu(),
                max_ratio: *r,
            })
        })
        .collect();
    out.write_rows("calibrate.csv", rows)?;

    #[derive(Serialize)]
    struct Report {
        lattice: LatticeInfo,
        ensemble_seed: u64,
        fingerprint: String,
        kept: Vec<usize>,
        skipped: Vec<usize>,
        members: Vec<MemberInfo>,
        calibrations: Vec<Calibration>,
    }
    let report = Report {
        lattice: (&lattice).into(),
        ensemble_seed: seed,
        fingerprint: ensemble_fingerprint(&kept_members),
        members: potentials
            .into_iter()
            .zip(&members)
            .zip(spectra)
            .enumerate()
            .map(|(index, ((potential, m), eigenvalues))| MemberInfo {
                index,
                lambda: m.params.lambda(),
                mu: m.params.mu(),
                potential,
                eigenvalues,
            })
            .collect(),
        kept,
        skipped,
        calibrations,
    };
    out.write_result("calibrate.json", "calibrate", cfg.seed, report)
}
