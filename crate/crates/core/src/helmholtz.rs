//! Riesz transforms, the Leray projector and the Helmholtz decomposition on
//! the periodic cell.
//!
//! The Riesz symbol `-i xi_j / |xi|` is set to zero at `xi = 0`. Constants
//! therefore stay in the solenoidal part and the potential part has zero mean,
//! which is what `(P f)_j = f_j + sum_k R_j R_k f_k` gives with that
//! convention.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{
    apply_multiplier, apply_scalar_multiplier, forward_transform, Lattice, ScalarField, SymbolMatrix,
    VectorField,
};

const I: Complex64 = Complex64::new(0.0, 1.0);

fn norm_sq(xi: &[f64]) -> f64 {
    xi.iter().map(|x| x * x).sum()
}

/// Symbol of the Riesz transform along `axis`, zero at the origin.
pub fn riesz_symbol(xi: &[f64], axis: usize) -> Complex64 {
    let r = norm_sq(xi).sqrt();
    if r == 0.0 {
        Complex64::new(0.0, 0.0)
    } else {
        -I * (xi[axis] / r)
    }
}

/// Symbol of the Leray projector, `I - xi xi^T / |xi|^2`, identity at the origin.
pub fn leray_symbol(xi: &[f64]) -> SymbolMatrix {
    let d = xi.len();
    let r2 = norm_sq(xi);
    if r2 == 0.0 {
        return SymbolMatrix::identity(d);
    }
    SymbolMatrix::from_fn(d, |r, c| {
        let delta = if r == c { 1.0 } else { 0.0 };
        Complex64::new(delta - xi[r] * xi[c] / r2, 0.0)
    })
}

/// Riesz transform `R_axis` (0-based axis).
pub fn riesz_transform(axis: usize, phi: &ScalarField) -> Result<ScalarField> {
    let dim = phi.lattice().dim();
    if axis >= dim {
        return Err(Error::AxisOutOfRange { axis, dim });
    }
    apply_scalar_multiplier(phi, |xi| riesz_symbol(xi, axis))
}

/// Leray projection onto the spectrally divergence-free fields.
pub fn leray_project(f: &VectorField) -> VectorField {
    apply_multiplier(f, leray_symbol).expect("Leray symbol is finite everywhere")
}

/// The pair `(f_S, f_P)` with `f = f_S + f_P`.
#[derive(Clone, Debug)]
pub struct HelmholtzPair {
    pub solenoidal: VectorField,
    pub potential: VectorField,
}

impl HelmholtzPair {
    pub fn reconstruct(&self) -> VectorField {
        &self.solenoidal + &self.potential
    }

    /// `| ||f||^2 - ||f_S||^2 - ||f_P||^2 | / ||f||^2` (zero for a zero field).
    pub fn pythagorean_residual(&self, original: &VectorField) -> f64 {
        let total = original.l2_norm().powi(2);
        if total == 0.0 {
            return 0.0;
        }
        let parts = self.solenoidal.l2_norm().powi(2) + self.potential.l2_norm().powi(2);
        (total - parts).abs() / total
    }

    /// `|<f_S, f_P>| / (||f_S|| ||f_P||)`, zero when either part vanishes.
    pub fn orthogonality_residual(&self) -> f64 {
        let a = self.solenoidal.l2_norm();
        let b = self.potential.l2_norm();
        if a == 0.0 || b == 0.0 {
            return 0.0;
        }
        self.solenoidal.inner(&self.potential).expect("same lattice").norm() / (a * b)
    }
}

pub fn helmholtz_decompose(f: &VectorField) -> HelmholtzPair {
    let solenoidal = leray_project(f);
    let potential = f - &solenoidal;
    HelmholtzPair { solenoidal, potential }
}

/// `cot(pi / (2 p*))`, `p* = max(p, p/(p-1))`: the `L^p` norm of each Riesz
/// transform.
pub fn riesz_norm_bound(p: f64) -> Result<f64> {
    if !(p > 1.0 && p.is_finite()) {
        return Err(Error::InvalidParameter { name: "p", reason: format!("need 1 < p < inf, got {p}") });
    }
    let p_star = p.max(p / (p - 1.0));
    Ok(1.0 / (std::f64::consts::PI / (2.0 * p_star)).tan())
}

fn coefficients(f: &VectorField) -> Vec<ScalarField> {
    f.components().iter().map(forward_transform).collect()
}

/// Relative spectral divergence `max |xi . f^(xi)| / max |xi| |f^(xi)|`.
pub fn divergence_residual(f: &VectorField) -> f64 {
    let lattice = *f.lattice();
    let hats = coefficients(f);
    let (mut num, mut den) = (0.0f64, 0.0f64);
    for i in 0..lattice.len() {
        let xi = lattice.frequency(i);
        let mut dot = Complex64::new(0.0, 0.0);
        let mut mag = 0.0;
        for (j, h) in hats.iter().enumerate() {
            dot += xi[j] * h.values()[i];
            mag += h.values()[i].norm_sqr();
        }
        num = num.max(dot.norm());
        den = den.max(norm_sq(&xi[..lattice.dim()]).sqrt() * mag.sqrt());
    }
    if den == 0.0 {
        0.0
    } else {
        num / den
    }
}

/// Relative deviation of `f^(xi)` from the line spanned by `xi`, together with
/// the mean; both vanish for a gradient field.
pub fn gradient_residual(f: &VectorField) -> f64 {
    let lattice = *f.lattice();
    let d = lattice.dim();
    let hats = coefficients(f);
    let (mut num, mut den) = (0.0f64, 0.0f64);
    for i in 0..lattice.len() {
        let xi = lattice.frequency(i);
        let r2 = norm_sq(&xi[..d]);
        let v: Vec<Complex64> = hats.iter().map(|h| h.values()[i]).collect();
        let mag: f64 = v.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
        den = den.max(mag);
        let off = if r2 == 0.0 {
            mag
        } else {
            let dot: Complex64 = v.iter().zip(&xi[..d]).map(|(c, x)| c * x).sum();
            v.iter()
                .zip(&xi[..d])
                .map(|(c, x)| (c - dot * (x / r2)).norm_sqr())
                .sum::<f64>()
                .sqrt()
        };
        num = num.max(off);
    }
    if den == 0.0 {
        0.0
    } else {
        num / den
    }
}

/// `||grad f||_2^2` computed spectrally, `L^d sum |xi|^2 |f^(xi)|^2`.
pub fn gradient_energy(f: &VectorField) -> f64 {
    let lattice = *f.lattice();
    let hats = coefficients(f);
    let mut s = 0.0;
    for i in 0..lattice.len() {
        let xi = lattice.frequency(i);
        let r2 = norm_sq(&xi[..lattice.dim()]);
        s += r2 * hats.iter().map(|h| h.values()[i].norm_sqr()).sum::<f64>();
    }
    s * lattice.volume()
}

/// Options for the empirical `L^p -> L^p` norm of a Riesz transform.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RieszEstimateOptions {
    pub random_starts: usize,
    pub iterations: usize,
    pub seed: u64,
}

impl Default for RieszEstimateOptions {
    fn default() -> Self {
        Self { random_starts: 8, iterations: 40, seed: 0x5eed }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RieszNormEstimate {
    pub axis: usize,
    pub p: f64,
    /// Largest ratio `||R_j phi||_p / ||phi||_p` found.
    pub value: f64,
    /// Which start produced `value`.
    pub best_start: String,
}

/// `|v|^{r-2} v`, the pointwise duality map for `L^r`.
pub(crate) fn duality_map(values: &[Complex64], r: f64) -> Vec<Complex64> {
    values
        .iter()
        .map(|v| {
            let a = v.norm();
            if a == 0.0 {
                *v
            } else {
                v * a.powf(r - 2.0)
            }
        })
        .collect()
}

fn ratio(axis: usize, phi: &ScalarField, p: f64) -> Result<f64> {
    let n = phi.lp_norm(p);
    if n == 0.0 {
        return Ok(0.0);
    }
    Ok(riesz_transform(axis, phi)?.lp_norm(p) / n)
}

/// Lower estimate of `||R_axis||_{L^p -> L^p}` on the lattice: random and
/// structured starts refined by the nonlinear power method
/// `phi <- J_{p'}(R* J_p(R phi))`.
pub fn estimate_riesz_norm(
    lattice: &Lattice,
    axis: usize,
    p: f64,
    options: &RieszEstimateOptions,
) -> Result<RieszNormEstimate> {
    riesz_norm_bound(p)?;
    let dim = lattice.dim();
    if axis >= dim {
        return Err(Error::AxisOutOfRange { axis, dim });
    }
    let q = p / (p - 1.0);
    let mut rng = ChaCha8Rng::seed_from_u64(options.seed);
    let mut starts: Vec<(String, ScalarField)> = Vec::new();

    // A single high mode along the axis attains |symbol| = 1.
    let mut k = vec![0i64; dim];
    k[axis] = (lattice.n() / 2 - 1) as i64;
    starts.push(("high-mode".into(), ScalarField::plane_wave(*lattice, &k)));
    // Sign-like profile along the axis and a localized bump.
    let half = lattice.period() / 4.0;
    starts.push((
        "step".into(),
        ScalarField::from_fn(*lattice, |x| Complex64::new(if x[axis].abs() < half { 1.0 } else { 0.0 }, 0.0)),
    ));
    starts.push((
        "bump".into(),
        ScalarField::from_fn(*lattice, |x| {
            let r2: f64 = x.iter().map(|v| v * v).sum();
            Complex64::new((-r2 / (0.02 * lattice.period().powi(2))).exp(), 0.0)
        }),
    ));
    for s in 0..options.random_starts {
        let values = (0..lattice.len())
            .map(|_| {
                let re: f64 = rng.sample(StandardNormal);
                let im: f64 = if s % 2 == 0 { rng.sample(StandardNormal) } else { 0.0 };
                Complex64::new(re, im)
            })
            .collect();
        starts.push((format!("random-{s}"), ScalarField::new(*lattice, values)?));
    }

    let mut best = RieszNormEstimate { axis, p, value: 0.0, best_start: String::new() };
    for (name, start) in starts {
        let mut phi = start;
        let mut local = ratio(axis, &phi, p)?;
        for _ in 0..options.iterations {
            let image = riesz_transform(axis, &phi)?;
            let dual = ScalarField::new(*lattice, duality_map(image.values(), p))?;
            // Adjoint symbol is the conjugate: R_j* = -R_j.
            let back = apply_scalar_multiplier(&dual, |xi| riesz_symbol(xi, axis).conj())?;
            let next = ScalarField::new(*lattice, duality_map(back.values(), q))?;
            let norm = next.lp_norm(p);
            if norm == 0.0 {
                break;
            }
            phi = &next * (1.0 / norm);
            let r = ratio(axis, &phi, p)?;
            if r <= local * (1.0 + 1e-12) {
                local = local.max(r);
                break;
            }
            local = r;
        }
        if local > best.value {
            best.value = local;
            best.best_start = name;
        }
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn lattice2() -> Lattice {
        Lattice::new(2, 16, 2.0 * PI).unwrap()
    }

    #[test]
    fn riesz_of_unit_direction_mode() {
        let lat = lattice2();
        let phi = ScalarField::plane_wave(lat, &[1, 0]);
        let r = riesz_transform(0, &phi).unwrap();
        assert!((&r - &(&phi * c(0.0, -1.0))).max_abs() < 1e-13);
    }

    #[test]
    fn riesz_kills_constants() {
        let lat = lattice2();
        let r = riesz_transform(1, &ScalarField::constant(lat, c(3.0, 1.0))).unwrap();
        assert!(r.max_abs() < 1e-14);
    }

    #[test]
    fn riesz_axis_is_checked() {
        let lat = lattice2();
        assert!(matches!(
            riesz_transform(2, &ScalarField::zeros(lat)),
            Err(Error::AxisOutOfRange { .. })
        ));
    }

    #[test]
    fn sum_of_squared_riesz_is_minus_identity_on_mean_zero() {
        let lat = lattice2();
        let phi = ScalarField::from_fn(lat, |x| c((2.0 * x[0]).sin() * x[1].cos(), (x[0] + 3.0 * x[1]).cos()));
        let mut acc = ScalarField::zeros(lat);
        for j in 0..2 {
            let rr = riesz_transform(j, &riesz_transform(j, &phi).unwrap()).unwrap();
            acc = &acc + &rr;
        }
        assert!((&acc + &phi).max_abs() < 1e-12);
    }

    #[test]
    fn gradients_are_annihilated() {
        let lat = lattice2();
        // psi = sin(x) cos(2y) + i cos(3y)
        let grad = VectorField::from_fn(lat, |j, x| match j {
            0 => c(x[0].cos() * (2.0 * x[1]).cos(), 0.0),
            _ => c(-2.0 * x[0].sin() * (2.0 * x[1]).sin(), -3.0 * (3.0 * x[1]).sin()),
        });
        assert!(leray_project(&grad).max_abs() < 1e-12);
    }

    #[test]
    fn solenoidal_fields_are_fixed() {
        let lat = lattice2();
        // (d2 psi, -d1 psi) for psi = sin(x + 2y)
        let f = VectorField::from_fn(lat, |j, x| {
            let d = (x[0] + 2.0 * x[1]).cos();
            if j == 0 {
                c(2.0 * d, 0.0)
            } else {
                c(-d, 0.0)
            }
        });
        assert!((&leray_project(&f) - &f).max_abs() < 1e-12);
    }

    #[test]
    fn constants_stay_solenoidal() {
        let lat = lattice2();
        let f = VectorField::from_fn(lat, |j, _| c(1.0 + j as f64, -0.5));
        let pair = helmholtz_decompose(&f);
        assert!((&pair.solenoidal - &f).max_abs() < 1e-14);
        assert!(pair.potential.max_abs() < 1e-14);
    }

    #[test]
    fn zero_field_decomposes_to_zero() {
        let pair = helmholtz_decompose(&VectorField::zeros(lattice2()));
        assert_eq!(pair.solenoidal.max_abs(), 0.0);
        assert_eq!(pair.potential.max_abs(), 0.0);
        assert_eq!(pair.pythagorean_residual(&VectorField::zeros(lattice2())), 0.0);
    }

    #[test]
    fn riesz_bound_values() {
        assert!((riesz_norm_bound(2.0).unwrap() - 1.0).abs() < 1e-15);
        assert!((riesz_norm_bound(4.0).unwrap() - (1.0 + 2f64.sqrt())).abs() < 1e-12);
        assert!((riesz_norm_bound(4.0).unwrap() - riesz_norm_bound(4.0 / 3.0).unwrap()).abs() < 1e-12);
        assert!(riesz_norm_bound(1.0).is_err());
        assert!(riesz_norm_bound(0.5).is_err());
    }

    #[test]
    fn one_dimensional_projector_keeps_only_the_mean() {
        let lat = Lattice::new(1, 16, 2.0 * PI).unwrap();
        let f = VectorField::from_fn(lat, |_, x| c(1.5 + x[0].sin(), 0.0));
        let s = leray_project(&f);
        assert!(s.component(0).values().iter().all(|v| (v - c(1.5, 0.0)).norm() < 1e-13));
    }

    #[test]
    fn high_mode_witness_reaches_one_at_p2() {
        let est = estimate_riesz_norm(&lattice2(), 0, 2.0, &RieszEstimateOptions { random_starts: 2, iterations: 5, seed: 1 }).unwrap();
        assert!(est.value >= 0.999 && est.value <= 1.0 + 1e-12);
    }
}
