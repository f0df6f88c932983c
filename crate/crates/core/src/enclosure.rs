//! Eigenvalue bounds: hypothesis checks, right-hand sides, scaling tests and
//! empirical constants.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::lame::{LameParams, Potential};
use crate::lattice::ScalarField;
use crate::norms::{kerman_sayer_norm, lp_norm, morrey_campanato_norm, muckenhoupt_constant, weighted_lq_norm};
use crate::spectra::{discrete_eigenvalues, EigenOptions};

/// Slack on the explicit one-dimensional bound that absorbs discretization error.
pub const T1D_MARGIN: f64 = 1e-2;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TheoremId {
    /// One dimension, explicit constant `1 / (2 sqrt(lambda + 2 mu))`.
    T1d,
    /// Lebesgue norm of `V`.
    #[serde(rename = "T_Lp")]
    TLp,
    /// Morrey-Campanato norm.
    #[serde(rename = "T_MC")]
    TMc,
    /// Kerman-Sayer norm of `|V|^beta`.
    #[serde(rename = "T_KS")]
    TKs,
    /// Weighted Lebesgue norm with weight `<x>^{2 alpha}`.
    #[serde(rename = "T_W")]
    TW,
    /// Real potentials, negative part only.
    #[serde(rename = "T_SA")]
    TSa,
}

impl TheoremId {
    pub const ALL: [TheoremId; 6] =
        [TheoremId::T1d, TheoremId::TLp, TheoremId::TMc, TheoremId::TKs, TheoremId::TW, TheoremId::TSa];

    pub fn name(&self) -> &'static str {
        match self {
            TheoremId::T1d => "T1d",
            TheoremId::TLp => "T_Lp",
            TheoremId::TMc => "T_MC",
            TheoremId::TKs => "T_KS",
            TheoremId::TW => "T_W",
            TheoremId::TSa => "T_SA",
        }
    }
}

impl std::str::FromStr for TheoremId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        TheoremId::ALL
            .into_iter()
            .find(|t| t.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::InvalidParameter { name: "theorem", reason: format!("unknown theorem `{s}`") })
    }
}

/// One bound to evaluate: theorem, dimension and exponents.
///
/// `p` is the Morrey-Campanato integrability (T_MC only). `alpha` is the
/// weight exponent (T_W only); the other theorems derive their `alpha`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundSpec {
    pub theorem: TheoremId,
    pub dim: usize,
    pub gamma: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
}

/// Exponents implied by a [`BoundSpec`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DerivedExponents {
    /// Power applied to the norm in the right-hand side.
    pub rhs_power: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub p: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub q: Option<f64>,
}

fn violation(t: TheoremId, inequality: String) -> Error {
    Error::HypothesisViolation { theorem: t.name().to_string(), inequality }
}

impl BoundSpec {
    pub fn new(theorem: TheoremId, dim: usize, gamma: f64) -> Self {
        Self { theorem, dim, gamma, p: None, alpha: None }
    }

    pub fn t1d() -> Self {
        Self::new(TheoremId::T1d, 1, 0.5)
    }

    pub fn lp(dim: usize, gamma: f64) -> Self {
        Self::new(TheoremId::TLp, dim, gamma)
    }

    pub fn mc(dim: usize, gamma: f64, p: f64) -> Self {
        Self { p: Some(p), ..Self::new(TheoremId::TMc, dim, gamma) }
    }

    pub fn ks(dim: usize, gamma: f64) -> Self {
        Self::new(TheoremId::TKs, dim, gamma)
    }

    pub fn weighted(dim: usize, gamma: f64, alpha: f64) -> Self {
        Self { alpha: Some(alpha), ..Self::new(TheoremId::TW, dim, gamma) }
    }

    pub fn self_adjoint(dim: usize, gamma: f64) -> Self {
        Self::new(TheoremId::TSa, dim, gamma)
    }

    /// `gamma + d/2`.
    pub fn lebesgue_exponent(&self) -> f64 {
        self.gamma + self.dim as f64 / 2.0
    }

    /// Open lower end of the admissible Morrey-Campanato `p` range.
    pub fn mc_p_lower(&self) -> f64 {
        let d = self.dim as f64;
        (d - 1.0) * (2.0 * self.gamma + d) / (2.0 * (d - 2.0 * self.gamma))
    }

    pub fn ks_beta(&self) -> f64 {
        let d = self.dim as f64;
        (d + 2.0 * self.gamma) * (d - 1.0) / (2.0 * (d - 2.0 * self.gamma))
    }

    /// Checks the theorem's hypotheses on `(d, gamma, p, alpha)`; the error
    /// names the first inequality that fails.
    pub fn validate(&self) -> Result<()> {
        let t = self.theorem;
        let d = self.dim;
        let g = self.gamma;
        if !(1..=3).contains(&d) {
            return Err(violation(t, format!("1 <= d <= 3 (got d = {d})")));
        }
        if !g.is_finite() {
            return Err(violation(t, format!("gamma finite (got {g})")));
        }
        let gamma_up_to_half = |strict_upper: bool| -> Result<()> {
            match d {
                1 => Err(violation(t, "d >= 2 (got d = 1)".into())),
                2 if !(g > 0.0) => Err(violation(t, format!("0 < gamma when d = 2 (got {g})"))),
                _ if !(g >= 0.0) => Err(violation(t, format!("0 <= gamma when d >= 3 (got {g})"))),
                _ if strict_upper && !(g < 0.5) => Err(violation(t, format!("gamma < 1/2 (got {g})"))),
                _ if !strict_upper && !(g <= 0.5) => Err(violation(t, format!("gamma <= 1/2 (got {g})"))),
                _ => Ok(()),
            }
        };
        match t {
            TheoremId::T1d => {
                if d != 1 {
                    return Err(violation(t, format!("d = 1 (got d = {d})")));
                }
                if g != 0.5 {
                    return Err(violation(t, format!("gamma = 1/2 (got {g})")));
                }
            }
            TheoremId::TLp => {
                if d == 1 {
                    // the one-dimensional case is the explicit bound without its constant
                    if g != 0.5 {
                        return Err(violation(t, format!("gamma = 1/2 when d = 1 (got {g})")));
                    }
                } else {
                    gamma_up_to_half(false)?;
                }
            }
            TheoremId::TMc => {
                gamma_up_to_half(false)?;
                let p = self.p.ok_or_else(|| violation(t, "p given".into()))?;
                let lower = self.mc_p_lower();
                let upper = self.lebesgue_exponent();
                if !(lower < p) {
                    return Err(violation(t, format!("(d-1)(2gamma+d)/(2(d-2gamma)) = {lower} < p = {p}")));
                }
                if !(p <= upper) {
                    return Err(violation(t, format!("p = {p} <= gamma + d/2 = {upper}")));
                }
                if !(p >= 1.0) {
                    return Err(violation(t, format!("1 <= p (got {p})")));
                }
            }
            TheoremId::TKs => {
                if d == 2 {
                    if !(g >= 1.0 / 3.0) {
                        return Err(violation(t, format!("1/3 <= gamma when d = 2 (got {g})")));
                    }
                    if !(g < 0.5) {
                        return Err(violation(t, format!("gamma < 1/2 (got {g})")));
                    }
                } else {
                    gamma_up_to_half(true)?;
                }
            }
            TheoremId::TW => {
                if d < 2 {
                    return Err(violation(t, format!("d >= 2 (got d = {d})")));
                }
                if !(g > 0.5) {
                    return Err(violation(t, format!("gamma > 1/2 (got {g})")));
                }
                let a = self.alpha.ok_or_else(|| violation(t, "alpha given".into()))?;
                if !(a > g - 0.5) {
                    return Err(violation(t, format!("alpha = {a} > gamma - 1/2 = {}", g - 0.5)));
                }
            }
            TheoremId::TSa => match d {
                1 if !(g >= 0.5) => return Err(violation(t, format!("gamma >= 1/2 when d = 1 (got {g})"))),
                2 if !(g > 0.0) => return Err(violation(t, format!("gamma > 0 when d = 2 (got {g})"))),
                3 if !(g >= 0.0) => return Err(violation(t, format!("gamma >= 0 when d = 3 (got {g})"))),
                _ => {}
            },
        }
        Ok(())
    }

    /// Exponents used by [`bound_rhs`]; validates first.
    pub fn derived(&self) -> Result<DerivedExponents> {
        self.validate()?;
        let d = self.dim as f64;
        let s = self.lebesgue_exponent();
        let none = DerivedExponents { rhs_power: s, p: None, alpha: None, beta: None, q: None };
        Ok(match self.theorem {
            TheoremId::T1d => DerivedExponents { rhs_power: 1.0, p: Some(1.0), ..none },
            TheoremId::TLp | TheoremId::TSa => DerivedExponents { p: Some(s), ..none },
            TheoremId::TMc => DerivedExponents { p: self.p, alpha: Some(2.0 * d / (2.0 * self.gamma + d)), ..none },
            TheoremId::TKs => {
                let beta = self.ks_beta();
                DerivedExponents {
                    rhs_power: s / beta,
                    alpha: Some(2.0 * d * beta / (2.0 * self.gamma + d)),
                    beta: Some(beta),
                    ..none
                }
            }
            TheoremId::TW => {
                let q = 2.0 * self.gamma + (d - 1.0) / 2.0;
                DerivedExponents { rhs_power: q, alpha: self.alpha, q: Some(q), ..none }
            }
        })
    }
}

/// `R = (|V|_1 / (2 sqrt(lambda + 2 mu)))^2`; every discrete eigenvalue has `|z| <= R`.
pub fn bound_1d_radius(params: &LameParams, v: &Potential) -> Result<f64> {
    let d = v.lattice().dim();
    if d != 1 {
        return Err(violation(TheoremId::T1d, format!("d = 1 (got d = {d})")));
    }
    Ok(t1d_rhs(params, v)?.powi(2))
}

fn t1d_rhs(params: &LameParams, v: &Potential) -> Result<f64> {
    Ok(lp_norm(v, 1.0)? / (2.0 * params.longitudinal().sqrt()))
}

/// Right-hand side of a bound together with side information.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RhsEvaluation {
    pub value: f64,
    /// The norm before raising it to `rhs_power`.
    pub norm_value: f64,
    pub derived: DerivedExponents,
    /// Muckenhoupt `A_2` constant of `|V|` (T_KS only).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub a2_constant: Option<f64>,
}

/// The norm expression of the bound without its constant. For T1d the
/// explicit constant is included, so the bound reads `|z|^{1/2} <= rhs`.
pub fn bound_rhs(spec: &BoundSpec, params: &LameParams, v: &Potential) -> Result<f64> {
    Ok(bound_rhs_detailed(spec, params, v)?.value)
}

pub fn bound_rhs_detailed(spec: &BoundSpec, params: &LameParams, v: &Potential) -> Result<RhsEvaluation> {
    let derived = spec.derived()?;
    let d = v.lattice().dim();
    if d != spec.dim {
        return Err(Error::InvalidParameter {
            name: "dim",
            reason: format!("bound is for d = {} but the potential lives in d = {d}", spec.dim),
        });
    }
    let mut a2_constant = None;
    let norm_value = match spec.theorem {
        TheoremId::T1d => t1d_rhs(params, v)?,
        TheoremId::TLp => lp_norm(v, spec.lebesgue_exponent())?,
        TheoremId::TMc => {
            morrey_campanato_norm(v, derived.alpha.expect("derived"), derived.p.expect("derived"))?.value
        }
        TheoremId::TKs => {
            let beta = derived.beta.expect("derived");
            let abs = v.field().map(|z| Complex64::new(z.norm(), 0.0));
            let powered = Potential::new(abs.map(|z| Complex64::new(z.re.powf(beta), 0.0)))?;
            a2_constant = Some(a2_of(&abs)?);
            kerman_sayer_norm(&powered, derived.alpha.expect("derived"))?.value
        }
        TheoremId::TW => weighted_lq_norm(v, derived.q.expect("derived"), derived.alpha.expect("derived"))?,
        TheoremId::TSa => {
            if !v.is_real() {
                return Err(violation(spec.theorem, "V real-valued".into()));
            }
            lp_norm(&v.negative_part()?, spec.lebesgue_exponent())?
        }
    };
    let value = if spec.theorem == TheoremId::T1d { norm_value } else { norm_value.powf(derived.rhs_power) };
    Ok(RhsEvaluation { value, norm_value, derived, a2_constant })
}

fn a2_of(abs: &ScalarField) -> Result<f64> {
    let q = muckenhoupt_constant(abs, 2.0)?.value;
    if !q.is_finite() {
        return Err(violation(TheoremId::TKs, format!("|V| in A_2 (constant {q})")));
    }
    Ok(q)
}

/// `|z|^gamma / rhs`, infinite when `rhs = 0` and `z != 0`.
pub fn ratio(z: Complex64, gamma: f64, rhs: f64) -> f64 {
    let lhs = z.norm().powf(gamma);
    if lhs == 0.0 {
        0.0
    } else {
        lhs / rhs
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Verdict {
    /// Inside the explicit enclosure; `margin = 1 - ratio`.
    Inside { margin: f64 },
    /// Outside the explicit enclosure even after the discretization slack.
    Outside { excess: f64 },
    /// No explicit constant; `relative` is the ratio over the calibrated constant if one was given.
    Recorded {
        #[serde(skip_serializing_if = "Option::is_none")]
        relative: Option<f64>,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnclosureReport {
    pub bound_spec: BoundSpec,
    pub derived: DerivedExponents,
    pub rhs_value: f64,
    /// Eigenvalue radius `rhs^2` of the explicit bound (T1d only).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub enclosure_radius: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub a2_constant: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub calibrated_constant: Option<f64>,
    pub eigenvalues_tested: Vec<Complex64>,
    pub ratios: Vec<f64>,
    pub verdicts: Vec<Verdict>,
    pub max_ratio: Option<f64>,
}

impl EnclosureReport {
    pub fn all_inside(&self) -> bool {
        self.verdicts.iter().all(|v| !matches!(v, Verdict::Outside { .. }))
    }
}

pub fn enclosure_report(
    spec: &BoundSpec,
    params: &LameParams,
    v: &Potential,
    eigenvalues: &[Complex64],
    calibrated_constant: Option<f64>,
) -> Result<EnclosureReport> {
    let rhs = bound_rhs_detailed(spec, params, v)?;
    let ratios: Vec<f64> = eigenvalues.iter().map(|z| ratio(*z, spec.gamma, rhs.value)).collect();
    let verdicts = ratios
        .iter()
        .map(|&r| match spec.theorem {
            TheoremId::T1d if r <= 1.0 + T1D_MARGIN => Verdict::Inside { margin: 1.0 - r },
            TheoremId::T1d => Verdict::Outside { excess: r - 1.0 },
            _ => Verdict::Recorded { relative: calibrated_constant.map(|c| r / c) },
        })
        .collect();
    Ok(EnclosureReport {
        bound_spec: *spec,
        derived: rhs.derived,
        rhs_value: rhs.value,
        enclosure_radius: (spec.theorem == TheoremId::T1d).then(|| rhs.value * rhs.value),
        a2_constant: rhs.a2_constant,
        calibrated_constant,
        eigenvalues_tested: eigenvalues.to_vec(),
        max_ratio: ratios.iter().copied().reduce(f64::max),
        ratios,
        verdicts,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalingPoint {
    pub scale: f64,
    pub eigenvalues: Vec<Complex64>,
    /// Largest `|w - a^2 z| / |a^2 z|` over base eigenvalues `z`, `w` the nearest scaled eigenvalue.
    pub tracking_error: f64,
    pub rhs_value: f64,
    pub ratio: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub wrong_exponent_ratio: Option<f64>,
}

/// Same sweep with the Lebesgue exponent replaced by `gamma + d/2 + offset`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NegativeControl {
    pub exponent: f64,
    /// Least-squares slope of `log ratio` against `log a`.
    pub fitted_power: f64,
    /// `-2 offset`.
    pub predicted_power: f64,
    pub spread: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalingReport {
    pub bound_spec: BoundSpec,
    pub points: Vec<ScalingPoint>,
    pub max_ratio: f64,
    pub min_ratio: f64,
    /// `max_ratio / min_ratio - 1`.
    pub ratio_variation: f64,
    pub max_tracking_error: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub negative_control: Option<NegativeControl>,
}

/// Offset added to the Lebesgue exponent in the negative control.
pub const WRONG_EXPONENT_OFFSET: f64 = 0.25;

/// Solves the problem for `V_a(x) = a^2 V(a x)` at every scale and compares
/// `|z_a|^gamma / rhs(V_a)`. For Lebesgue-type bounds a deliberately wrong
/// exponent is run alongside as a negative control.
pub fn scaling_exponent_test(
    params: &LameParams,
    v: &Potential,
    spec: &BoundSpec,
    scales: &[f64],
    options: &EigenOptions,
) -> Result<ScalingReport> {
    if scales.is_empty() {
        return Err(Error::InvalidParameter { name: "scales", reason: "need at least one scale".into() });
    }
    if let Some(&bad) = scales.iter().find(|a| !(**a > 0.0 && a.is_finite())) {
        return Err(Error::InvalidParameter { name: "scales", reason: format!("scales must be positive, got {bad}") });
    }
    let base = discrete_eigenvalues(params, v, options)?.values();
    if base.is_empty() {
        return Err(Error::NoEigenvalues { member: 0 });
    }
    let wrong = matches!(spec.theorem, TheoremId::T1d | TheoremId::TLp | TheoremId::TSa)
        .then(|| spec.lebesgue_exponent() + WRONG_EXPONENT_OFFSET);
    let mut points = Vec::with_capacity(scales.len());
    for &a in scales {
        let va = v.rescaled(a)?;
        let eig = if a == 1.0 { base.clone() } else { discrete_eigenvalues(params, &va, options)?.values() };
        if eig.is_empty() {
            return Err(Error::NoEigenvalues { member: points.len() });
        }
        let tracking_error = base
            .iter()
            .map(|z| {
                let target = z * (a * a);
                eig.iter().map(|w| (w - target).norm()).fold(f64::INFINITY, f64::min) / target.norm()
            })
            .fold(0.0, f64::max);
        let rhs_value = bound_rhs(spec, params, &va)?;
        let top = eig.iter().map(|z| z.norm()).fold(0.0, f64::max);
        let lhs = top.powf(spec.gamma);
        let wrong_exponent_ratio = match wrong {
            Some(p) => {
                let target = if spec.theorem == TheoremId::TSa { va.negative_part()? } else { va.clone() };
                Some(lhs / lp_norm(&target, p)?.powf(p))
            }
            None => None,
        };
        points.push(ScalingPoint { scale: a, eigenvalues: eig, tracking_error, rhs_value, ratio: lhs / rhs_value, wrong_exponent_ratio });
    }
    let max_ratio = points.iter().map(|p| p.ratio).fold(f64::NEG_INFINITY, f64::max);
    let min_ratio = points.iter().map(|p| p.ratio).fold(f64::INFINITY, f64::min);
    let negative_control = wrong.map(|exponent| {
        let xs: Vec<f64> = points.iter().map(|p| p.scale.ln()).collect();
        let ys: Vec<f64> = points.iter().map(|p| p.wrong_exponent_ratio.expect("set").ln()).collect();
        let (hi, lo) = ys.iter().fold((f64::NEG_INFINITY, f64::INFINITY), |(h, l), y| (h.max(*y), l.min(*y)));
        NegativeControl {
            exponent,
            fitted_power: slope(&xs, &ys),
            predicted_power: -2.0 * WRONG_EXPONENT_OFFSET,
            spread: (hi - lo).exp() - 1.0,
        }
    });
    Ok(ScalingReport {
        bound_spec: *spec,
        max_tracking_error: points.iter().map(|p| p.tracking_error).fold(0.0, f64::max),
        points,
        max_ratio,
        min_ratio,
        ratio_variation: max_ratio / min_ratio - 1.0,
        negative_control,
    })
}

fn slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    if sxx == 0.0 {
        0.0
    } else {
        sxy / sxx
    }
}

#[derive(Clone, Debug)]
pub struct EnsembleMember {
    pub params: LameParams,
    pub potential: Potential,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub bound_spec: BoundSpec,
    /// `C_emp`, the largest ratio over members and eigenvalues.
    pub constant: f64,
    pub argmax_member: usize,
    /// Largest ratio of each member.
    pub member_ratios: Vec<f64>,
    pub fingerprint: String,
}

/// SHA-256 over lattice geometry, Lamé parameters and potential samples of
/// every member, in order.
pub fn ensemble_fingerprint(ensemble: &[EnsembleMember]) -> String {
    let mut h = Sha256::new();
    for m in ensemble {
        let lat = m.potential.lattice();
        h.update((lat.dim() as u64).to_le_bytes());
        h.update((lat.n() as u64).to_le_bytes());
        h.update(lat.period().to_le_bytes());
        h.update(m.params.lambda().to_le_bytes());
        h.update(m.params.mu().to_le_bytes());
        for z in m.potential.values() {
            h.update(z.re.to_le_bytes());
            h.update(z.im.to_le_bytes());
        }
    }
    hex::encode(h.finalize())
}

/// Filtered discrete eigenvalues of every member, computed in parallel.
/// A member without eigenvalues is an error.
pub fn ensemble_spectra(ensemble: &[EnsembleMember], options: &EigenOptions) -> Result<Vec<Vec<Complex64>>> {
    if ensemble.is_empty() {
        return Err(Error::EmptyEnsemble);
    }
    let spectra: Vec<Vec<Complex64>> = ensemble
        .par_iter()
        .map(|m| discrete_eigenvalues(&m.params, &m.potential, options).map(|r| r.values()))
        .collect::<Result<_>>()?;
    if let Some(member) = spectra.iter().position(|s| s.is_empty()) {
        return Err(Error::NoEigenvalues { member });
    }
    Ok(spectra)
}

pub fn calibrate_with_spectra(
    spec: &BoundSpec,
    ensemble: &[EnsembleMember],
    spectra: &[Vec<Complex64>],
) -> Result<Calibration> {
    if ensemble.is_empty() {
        return Err(Error::EmptyEnsemble);
    }
    if spectra.len() != ensemble.len() {
        return Err(Error::ShapeMismatch { expected: ensemble.len(), got: spectra.len() });
    }
    let mut member_ratios = Vec::with_capacity(ensemble.len());
    for (i, (m, eig)) in ensemble.iter().zip(spectra).enumerate() {
        if eig.is_empty() {
            return Err(Error::NoEigenvalues { member: i });
        }
        let rhs = bound_rhs(spec, &m.params, &m.potential)?;
        member_ratios.push(eig.iter().map(|z| ratio(*z, spec.gamma, rhs)).fold(0.0, f64::max));
    }
    let (argmax_member, constant) = member_ratios
        .iter()
        .copied()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |best, (i, r)| if r > best.1 { (i, r) } else { best });
    Ok(Calibration { bound_spec: *spec, constant, argmax_member, member_ratios, fingerprint: ensemble_fingerprint(ensemble) })
}

/// `C_emp` for every spec over one ensemble; eigenvalues are computed once.
pub fn calibrate_constant(
    specs: &[BoundSpec],
    ensemble: &[EnsembleMember],
    options: &EigenOptions,
) -> Result<Vec<Calibration>> {
    for s in specs {
        s.validate()?;
    }
    let spectra = ensemble_spectra(ensemble, options)?;
    specs.iter().map(|s| calibrate_with_spectra(s, ensemble, &spectra)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lame::BoxWell;
    use crate::lattice::Lattice;

    fn lat(d: usize) -> Lattice {
        Lattice::new(d, 16, 16.0).unwrap()
    }

    fn bump(l: Lattice, depth: Complex64) -> Potential {
        Potential::from_fn(l, |x| {
            let r2: f64 = x.iter().map(|c| c * c).sum();
            if r2 < 4.0 {
                depth * (-r2).exp()
            } else {
                Complex64::new(0.0, 0.0)
            }
        })
        .unwrap()
    }

    fn rejects(spec: BoundSpec) -> String {
        match spec.validate() {
            Err(Error::HypothesisViolation { inequality, .. }) => inequality,
            other => panic!("expected a violation for {spec:?}, got {other:?}"),
        }
    }

    #[test]
    fn one_dimensional_radius_arithmetic() {
        let l = Lattice::new(1, 64, 16.0).unwrap();
        // |V|_1 = 2: depth 1 on an interval of length 2
        let well = BoxWell { center: [0.0; 3], half_widths: [1.0, 0.0, 0.0], depth: Complex64::new(1.0, 0.0) };
        let v = Potential::boxes(l, vec![well]).unwrap();
        assert!((lp_norm(&v, 1.0).unwrap() - 2.0).abs() < 1e-12);
        let r = bound_1d_radius(&LameParams::new(-1.0, 1.0).unwrap(), &v).unwrap();
        assert!((r - 1.0).abs() < 1e-12);
        let v4 = v.scaled_by(Complex64::new(2.0, 0.0)).unwrap();
        let r = bound_1d_radius(&LameParams::new(2.0, 1.0).unwrap(), &v4).unwrap();
        assert!((r - 1.0).abs() < 1e-12);
        assert!(matches!(
            bound_1d_radius(&LameParams::new(1.0, 1.0).unwrap(), &Potential::zero(lat(2))),
            Err(Error::HypothesisViolation { .. })
        ));
    }

    #[test]
    fn validators_follow_strict_and_closed_ends() {
        assert!(BoundSpec::lp(2, 0.5).validate().is_ok());
        assert!(rejects(BoundSpec::lp(2, 0.0)).contains("0 < gamma"));
        assert!(BoundSpec::lp(3, 0.0).validate().is_ok());
        assert!(rejects(BoundSpec::lp(3, 0.5000001)).contains("<= 1/2"));

        // d = 3, gamma = 1/4: 7/5 < p <= 7/4
        assert!(rejects(BoundSpec::mc(3, 0.25, 1.4)).contains("< p"));
        assert!(BoundSpec::mc(3, 0.25, 1.75).validate().is_ok());
        assert!(rejects(BoundSpec::mc(3, 0.25, 1.7500001)).contains("<= gamma + d/2"));
        // d = 2, gamma = 1/2: lower end 3/2 equals the upper end
        assert!(rejects(BoundSpec::mc(2, 0.5, 1.5)).contains("< p"));

        assert!(BoundSpec::ks(2, 1.0 / 3.0).validate().is_ok());
        assert!(rejects(BoundSpec::ks(2, 0.33)).contains("1/3 <= gamma"));
        assert!(rejects(BoundSpec::ks(2, 0.5)).contains("gamma < 1/2"));
        assert!(BoundSpec::ks(3, 0.0).validate().is_ok());

        assert!(rejects(BoundSpec::weighted(2, 0.5, 1.0)).contains("gamma > 1/2"));
        assert!(rejects(BoundSpec::weighted(2, 0.75, 0.25)).contains("alpha"));
        assert!(BoundSpec::weighted(2, 0.75, 0.2500001).validate().is_ok());

        assert!(BoundSpec::self_adjoint(1, 0.5).validate().is_ok());
        assert!(rejects(BoundSpec::self_adjoint(1, 0.49)).contains(">= 1/2"));
        assert!(rejects(BoundSpec::self_adjoint(2, 0.0)).contains("> 0"));
        assert!(BoundSpec::self_adjoint(3, 0.0).validate().is_ok());

        assert!(rejects(BoundSpec::new(TheoremId::T1d, 2, 0.5)).contains("d = 1"));
    }

    #[test]
    fn ks_exponents_at_the_lower_end() {
        let d = BoundSpec::ks(2, 1.0 / 3.0).derived().unwrap();
        assert!((d.beta.unwrap() - 1.0).abs() < 1e-14);
        assert!((d.alpha.unwrap() - 1.5).abs() < 1e-14);
    }

    #[test]
    fn zero_potential_has_zero_rhs() {
        let p = LameParams::new(1.0, 1.0).unwrap();
        let specs = [
            BoundSpec::lp(2, 0.25),
            BoundSpec::mc(2, 0.25, 1.1),
            BoundSpec::ks(2, 0.4),
            BoundSpec::weighted(2, 1.0, 1.0),
            BoundSpec::self_adjoint(2, 0.25),
        ];
        for s in specs {
            assert_eq!(bound_rhs(&s, &p, &Potential::zero(lat(2))).unwrap(), 0.0, "{s:?}");
        }
    }

    #[test]
    fn lp_rhs_is_the_lp_norm_power() {
        let p = LameParams::new(1.0, 1.0).unwrap();
        let v = bump(lat(2), Complex64::new(-1.0, 0.5));
        let got = bound_rhs(&BoundSpec::lp(2, 0.5), &p, &v).unwrap();
        assert!((got - lp_norm(&v, 1.5).unwrap().powf(1.5)).abs() < 1e-14 * got);
    }

    #[test]
    fn self_adjoint_rhs_uses_the_negative_part() {
        let p = LameParams::new(1.0, 1.0).unwrap();
        let pos = bump(lat(2), Complex64::new(2.0, 0.0));
        assert_eq!(bound_rhs(&BoundSpec::self_adjoint(2, 0.25), &p, &pos).unwrap(), 0.0);
        let neg = bump(lat(2), Complex64::new(-2.0, 0.0));
        let sa = bound_rhs(&BoundSpec::self_adjoint(2, 0.25), &p, &neg).unwrap();
        let lp = bound_rhs(&BoundSpec::lp(2, 0.25), &p, &neg).unwrap();
        assert!((sa - lp).abs() < 1e-14 * lp);
        let complex = bump(lat(2), Complex64::new(-2.0, 1.0));
        assert!(matches!(
            bound_rhs(&BoundSpec::self_adjoint(2, 0.25), &p, &complex),
            Err(Error::HypothesisViolation { .. })
        ));
    }

    #[test]
    fn ks_records_the_a2_constant() {
        let p = LameParams::new(1.0, 1.0).unwrap();
        let v = bump(lat(2), Complex64::new(-1.0, 0.0));
        let r = bound_rhs_detailed(&BoundSpec::ks(2, 0.4), &p, &v).unwrap();
        assert!(r.a2_constant.unwrap() >= 1.0);
        assert!(r.value > 0.0);
    }

    #[test]
    fn single_member_calibration_is_that_members_max_ratio() {
        let params = LameParams::new(1.0, 1.0).unwrap();
        let l = Lattice::new(1, 64, 20.0).unwrap();
        let v = bump(l, Complex64::new(-3.0, 1.0));
        let member = EnsembleMember { params, potential: v.clone() };
        let opts = EigenOptions::default();
        let cal = calibrate_constant(&[BoundSpec::t1d()], &[member.clone()], &opts).unwrap();
        let eig = discrete_eigenvalues(&params, &v, &opts).unwrap().values();
        let report = enclosure_report(&BoundSpec::t1d(), &params, &v, &eig, None).unwrap();
        assert_eq!(cal[0].constant, report.max_ratio.unwrap());
        assert!(report.all_inside());
        assert_eq!(cal[0].fingerprint, ensemble_fingerprint(&[member]));
        assert_eq!(cal[0].fingerprint.len(), 64);
    }

    #[test]
    fn empty_ensemble_is_rejected() {
        assert!(matches!(
            calibrate_constant(&[BoundSpec::t1d()], &[], &EigenOptions::default()),
            Err(Error::EmptyEnsemble)
        ));
    }

    #[test]
    fn scaling_sweep_in_one_dimension() {
        let params = LameParams::new(1.0, 1.0).unwrap();
        let l = Lattice::new(1, 64, 20.0).unwrap();
        let v = bump(l, Complex64::new(-3.0, 1.0));
        let r = scaling_exponent_test(&params, &v, &BoundSpec::lp(1, 0.5), &[0.5, 1.0, 2.0], &EigenOptions::default())
            .unwrap();
        assert!(r.ratio_variation < 1e-4, "{}", r.ratio_variation);
        assert!(r.max_tracking_error < 1e-6, "{}", r.max_tracking_error);
        let nc = r.negative_control.unwrap();
        assert!((nc.fitted_power - nc.predicted_power).abs() < 1e-6, "{nc:?}");
    }
}
