//! Discrete spectrum of `-Lame + V`, Birman-Schwinger operators and resolvent
//! norm estimates.

use faer::prelude::*;
use faer::{Mat, Side};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::helmholtz::duality_map;
use crate::lame::{apply_perturbed, distance_to_ray, lame_symbol, LameParams, Potential, Resolvent};
use crate::lattice::{inverse_transform, Lattice, ScalarField, SymbolMatrix, VectorField};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

pub const DEFAULT_MEMORY_BUDGET: u64 = 512 << 20;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Discretization {
    /// Spectral symbol with `V` acting by pointwise multiplication on the grid.
    Collocation,
    /// Fourier basis with exact coefficients of a box potential.
    Galerkin,
}

#[derive(Clone, Debug)]
pub struct EigenOptions {
    pub discretization: Discretization,
    /// Absolute distance-to-ray threshold; defaults to `filter_fraction * width`.
    pub filter: Option<f64>,
    pub filter_fraction: f64,
    /// Absolute residual threshold; defaults to `residual_fraction * scale`.
    pub residual_tolerance: Option<f64>,
    pub residual_fraction: f64,
    pub memory_budget: u64,
    /// Use the general solver even when the matrix is Hermitian.
    pub force_general: bool,
}

impl Default for EigenOptions {
    fn default() -> Self {
        Self {
            discretization: Discretization::Collocation,
            filter: None,
            filter_fraction: 1e-3,
            residual_tolerance: None,
            residual_fraction: 1e-8,
            memory_budget: DEFAULT_MEMORY_BUDGET,
            force_general: false,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Eigenvalue {
    pub z: Complex64,
    pub residual: f64,
    pub dist_to_ray: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverInfo {
    pub dim: usize,
    pub n: usize,
    pub period: f64,
    pub unknowns: usize,
    pub method: String,
    pub discretization: Discretization,
    pub spectral_width: f64,
    pub filter: f64,
    pub residual_tolerance: f64,
    /// Eigenvalues dropped by the distance filter.
    pub filtered_out: usize,
    /// Eigenvalues that passed the filter but failed the residual test.
    pub rejected_by_residual: usize,
}

#[derive(Clone, Debug, Serialize)]
pub struct SpectralResult {
    pub eigenvalues: Vec<Eigenvalue>,
    pub solver_info: SolverInfo,
    #[serde(skip)]
    pub eigenvectors: Vec<VectorField>,
}

impl SpectralResult {
    pub fn values(&self) -> Vec<Complex64> {
        self.eigenvalues.iter().map(|e| e.z).collect()
    }
}

/// Largest eigenvalue of the free symbol on the grid.
pub fn spectral_width(params: &LameParams, lattice: &Lattice) -> f64 {
    params.mu().max(params.longitudinal()) * lattice.max_frequency_squared()
}

fn operator_scale(params: &LameParams, v: &Potential) -> f64 {
    spectral_width(params, v.lattice()) + v.field().max_abs()
}

fn check_budget(unknowns: usize, budget: u64) -> Result<()> {
    // matrix plus one factorization or eigen workspace of the same size
    let required = 2 * 16 * (unknowns as u64).pow(2);
    if required > budget {
        return Err(Error::BudgetExceeded { unknowns, required, budget });
    }
    Ok(())
}

/// Offset table index of `x_j - x_l` (per-axis difference modulo `n`).
fn offset_index(lattice: &Lattice, cj: &[usize; 3], cl: &[usize; 3]) -> usize {
    let n = lattice.n();
    let mut idx = 0;
    for a in 0..lattice.dim() {
        idx = idx * n + (cj[a] + n - cl[a]) % n;
    }
    idx
}

/// Convolution kernel `k(o) = N^{-1} sum_xi m(xi) e^{i xi o}` of a matrix
/// multiplier, tabulated over grid offsets.
pub fn multiplier_kernel(lattice: &Lattice, m: impl Fn(&[f64]) -> SymbolMatrix) -> Vec<SymbolMatrix> {
    let d = lattice.dim();
    let len = lattice.len();
    let symbols: Vec<SymbolMatrix> = (0..len).map(|k| m(&lattice.frequency(k)[..d])).collect();
    let mut out = vec![SymbolMatrix::zeros(d); len];
    let scale = 1.0 / len as f64;
    for a in 0..d {
        for b in 0..d {
            let coeffs = symbols.iter().map(|s| s.get(a, b) * scale).collect();
            let field = inverse_transform(&ScalarField::new(*lattice, coeffs).expect("length"));
            for (o, v) in field.values().iter().enumerate() {
                out[o].set(a, b, *v);
            }
        }
    }
    out
}

/// Dense matrix of `-Lame + V` acting on component-major flat vectors.
pub fn assemble_collocation(params: &LameParams, v: &Potential) -> Mat<Complex64> {
    let lattice = *v.lattice();
    let d = lattice.dim();
    let len = lattice.len();
    let kernel = multiplier_kernel(&lattice, |xi| lame_symbol(params, xi));
    let coords: Vec<[usize; 3]> = (0..len).map(|i| lattice.coords(i)).collect();
    let values = v.values();
    Mat::from_fn(d * len, d * len, |r, c| {
        let (a, j) = (r / len, r % len);
        let (b, l) = (c / len, c % len);
        let mut e = kernel[offset_index(&lattice, &coords[j], &coords[l])].get(a, b);
        if a == b && j == l {
            e += values[j];
        }
        e
    })
}

/// Exact Fourier coefficients `V^(m)` for all integer differences `m` in
/// `(-n, n)^d`, stored row-major with offset `n - 1`.
struct CoefficientTable {
    width: usize,
    dim: usize,
    values: Vec<Complex64>,
}

impl CoefficientTable {
    fn new(v: &Potential) -> Result<Self> {
        let lattice = v.lattice();
        let (n, d) = (lattice.n(), lattice.dim());
        let width = 2 * n - 1;
        let scale = 2.0 * std::f64::consts::PI / lattice.period();
        let mut values = Vec::with_capacity(width.pow(d as u32));
        for k in 0..width.pow(d as u32) {
            let mut rest = k;
            let mut xi = [0.0; 3];
            for a in (0..d).rev() {
                xi[a] = ((rest % width) as f64 - (n as f64 - 1.0)) * scale;
                rest /= width;
            }
            let c = v.exact_coefficient(&xi[..d]).ok_or_else(|| Error::InvalidParameter {
                name: "discretization",
                reason: "Galerkin assembly needs a potential built from boxes".into(),
            })?;
            values.push(c);
        }
        Ok(Self { width, dim: d, values })
    }

    fn at(&self, wk: &[i64; 3], wl: &[i64; 3]) -> Complex64 {
        let shift = (self.width as i64 - 1) / 2;
        let mut idx = 0usize;
        for a in 0..self.dim {
            idx = idx * self.width + (wk[a] - wl[a] + shift) as usize;
        }
        self.values[idx]
    }
}

fn wavenumbers(lattice: &Lattice) -> Vec<[i64; 3]> {
    (0..lattice.len())
        .map(|i| {
            let c = lattice.coords(i);
            let mut w = [0i64; 3];
            for a in 0..lattice.dim() {
                w[a] = lattice.wavenumber(c[a]);
            }
            w
        })
        .collect()
}

/// Dense matrix of `-Lame + V` in the Fourier basis `e^{i xi . x}`:
/// `H[(a,k),(b,l)] = M_ab(xi_k) delta_kl + V^(k - l) delta_ab`.
pub fn assemble_galerkin(params: &LameParams, v: &Potential) -> Result<Mat<Complex64>> {
    let lattice = *v.lattice();
    let d = lattice.dim();
    let len = lattice.len();
    let table = CoefficientTable::new(v)?;
    let w = wavenumbers(&lattice);
    let symbols: Vec<SymbolMatrix> = (0..len).map(|k| lame_symbol(params, &lattice.frequency(k)[..d])).collect();
    Ok(Mat::from_fn(d * len, d * len, |r, c| {
        let (a, k) = (r / len, r % len);
        let (b, l) = (c / len, c % len);
        let mut e = if k == l { symbols[k].get(a, b) } else { ZERO };
        if a == b {
            e += table.at(&w[k], &w[l]);
        }
        e
    }))
}

fn galerkin_apply(params: &LameParams, lattice: &Lattice, table: &CoefficientTable, u: &[Complex64]) -> Vec<Complex64> {
    let d = lattice.dim();
    let len = lattice.len();
    let w = wavenumbers(lattice);
    let mut out = vec![ZERO; d * len];
    for k in 0..len {
        let m = lame_symbol(params, &lattice.frequency(k)[..d]);
        for a in 0..d {
            let mut acc = ZERO;
            for b in 0..d {
                acc += m.get(a, b) * u[b * len + k];
            }
            for l in 0..len {
                acc += table.at(&w[k], &w[l]) * u[a * len + l];
            }
            out[a * len + k] = acc;
        }
    }
    out
}

fn flat_norm(v: &[Complex64]) -> f64 {
    v.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt()
}

fn is_hermitian(m: &Mat<Complex64>) -> bool {
    let n = m.nrows();
    let scale = (0..n).map(|i| m[(i, i)].norm()).fold(1.0, f64::max);
    (0..n).all(|i| (0..=i).all(|j| (m[(i, j)] - m[(j, i)].conj()).norm() <= 1e-13 * scale))
}

/// Eigenvector for a known eigenvalue by inverse iteration with a slightly
/// perturbed shift.
fn inverse_iteration(a: &Mat<Complex64>, z: Complex64) -> Vec<Complex64> {
    let m = a.nrows();
    let shift = z + Complex64::new(1e-10, 1e-10) * z.norm().max(1.0);
    let b = Mat::from_fn(m, m, |i, j| if i == j { a[(i, j)] - shift } else { a[(i, j)] });
    let lu = b.partial_piv_lu();
    let mut x = Mat::from_fn(m, 1, |i, _| Complex64::new(1.0 + (i % 7) as f64 * 0.1, (i % 5) as f64 * 0.05));
    for _ in 0..3 {
        lu.solve_in_place(x.as_mut());
        let norm = (0..m).map(|i| x[(i, 0)].norm_sqr()).sum::<f64>().sqrt();
        if !(norm.is_finite() && norm > 0.0) {
            break;
        }
        for i in 0..m {
            x[(i, 0)] /= norm;
        }
    }
    (0..m).map(|i| x[(i, 0)]).collect()
}

/// All eigenvalues of the assembled `-Lame + V` farther than the filter
/// from `[0, inf)`, each with a matrix-free residual.
pub fn discrete_eigenvalues(params: &LameParams, v: &Potential, options: &EigenOptions) -> Result<SpectralResult> {
    let lattice = *v.lattice();
    let d = lattice.dim();
    let unknowns = d * lattice.len();
    check_budget(unknowns, options.memory_budget)?;
    let width = spectral_width(params, &lattice);
    let filter = options.filter.unwrap_or(options.filter_fraction * width);
    let tol = options.residual_tolerance.unwrap_or(options.residual_fraction * operator_scale(params, v));

    let table = match options.discretization {
        Discretization::Galerkin => Some(CoefficientTable::new(v)?),
        Discretization::Collocation => None,
    };
    let mut a = match options.discretization {
        Discretization::Collocation => assemble_collocation(params, v),
        Discretization::Galerkin => assemble_galerkin(params, v)?,
    };
    let hermitian = !options.force_general && is_hermitian(&a);
    let (method, all): (&str, Vec<Complex64>) = if hermitian {
        let m = a.nrows();
        for i in 0..m {
            for j in 0..i {
                let s = (a[(i, j)] + a[(j, i)].conj()) * 0.5;
                a[(i, j)] = s;
                a[(j, i)] = s.conj();
            }
            a[(i, i)] = Complex64::new(a[(i, i)].re, 0.0);
        }
        let vals = a
            .self_adjoint_eigenvalues(Side::Lower)
            .map_err(|e| Error::LinearAlgebra(format!("{e:?}")))?;
        ("dense-hermitian", vals.into_iter().map(|x| Complex64::new(x, 0.0)).collect())
    } else {
        let vals = a.eigenvalues().map_err(|e| Error::LinearAlgebra(format!("{e:?}")))?;
        ("dense-general", vals)
    };

    let mut kept: Vec<Complex64> = all.iter().copied().filter(|z| distance_to_ray(*z) > filter).collect();
    let filtered_out = all.len() - kept.len();
    kept.sort_by(|x, y| x.re.total_cmp(&y.re).then(x.im.total_cmp(&y.im)));

    let checked: Vec<(Complex64, f64, VectorField)> = kept
        .par_iter()
        .map(|&z| {
            let u = inverse_iteration(&a, z);
            let hu = match &table {
                Some(t) => galerkin_apply(params, &lattice, t, &u),
                None => {
                    let field = VectorField::from_flat(lattice, &u).expect("length");
                    apply_perturbed(params, v, &field).expect("same lattice").to_flat()
                }
            };
            let r: Vec<Complex64> = hu.iter().zip(&u).map(|(h, x)| h - z * x).collect();
            let residual = flat_norm(&r) / flat_norm(&u);
            let field = match &table {
                Some(_) => coefficients_to_field(&lattice, &u),
                None => VectorField::from_flat(lattice, &u).expect("length"),
            };
            (z, residual, field)
        })
        .collect();

    let mut eigenvalues = Vec::new();
    let mut eigenvectors = Vec::new();
    let mut rejected = 0;
    for (z, residual, field) in checked {
        if residual < tol {
            eigenvalues.push(Eigenvalue { z, residual, dist_to_ray: distance_to_ray(z) });
            eigenvectors.push(field);
        } else {
            rejected += 1;
        }
    }
    Ok(SpectralResult {
        eigenvalues,
        eigenvectors,
        solver_info: SolverInfo {
            dim: d,
            n: lattice.n(),
            period: lattice.period(),
            unknowns,
            method: method.into(),
            discretization: options.discretization,
            spectral_width: width,
            filter,
            residual_tolerance: tol,
            filtered_out,
            rejected_by_residual: rejected,
        },
    })
}

fn coefficients_to_field(lattice: &Lattice, u: &[Complex64]) -> VectorField {
    let len = lattice.len();
    let comps = u
        .chunks(len)
        .map(|c| inverse_transform(&ScalarField::new(*lattice, c.to_vec()).expect("length")))
        .collect();
    VectorField::new(comps).expect("same lattice")
}

/// Field with independent standard complex Gaussian entries.
pub fn random_field(lattice: Lattice, rng: &mut impl Rng) -> VectorField {
    let flat: Vec<Complex64> = (0..lattice.dim() * lattice.len())
        .map(|_| Complex64::new(rng.sample(StandardNormal), rng.sample(StandardNormal)))
        .collect();
    VectorField::from_flat(lattice, &flat).expect("length")
}

fn csgn(v: Complex64) -> Complex64 {
    if v == ZERO {
        ZERO
    } else {
        v / v.norm()
    }
}

/// `K(z) = V_{1/2} (-Lame - z)^{-1} |V|^{1/2}` with `V_{1/2} = |V|^{1/2} sgn V`.
#[derive(Clone, Debug)]
pub struct BirmanSchwinger {
    resolvent: Resolvent,
    potential: Potential,
    half: ScalarField,
    abs_half: ScalarField,
}

impl BirmanSchwinger {
    pub fn new(params: LameParams, potential: &Potential, z: Complex64) -> Result<Self> {
        let resolvent = Resolvent::new(params, z)?;
        let abs_half = potential.field().map(|v| Complex64::new(v.norm().sqrt(), 0.0));
        let half = potential.field().map(|v| csgn(v) * v.norm().sqrt());
        Ok(Self { resolvent, potential: potential.clone(), half, abs_half })
    }

    pub fn z(&self) -> Complex64 {
        self.resolvent.z()
    }

    pub fn lattice(&self) -> &Lattice {
        self.potential.lattice()
    }

    pub fn half(&self) -> &ScalarField {
        &self.half
    }

    pub fn abs_half(&self) -> &ScalarField {
        &self.abs_half
    }

    pub fn apply(&self, g: &VectorField) -> Result<VectorField> {
        let inner = self.resolvent.apply(&g.scale_pointwise(&self.abs_half)?);
        inner.scale_pointwise(&self.half)
    }

    /// `K* = |V|^{1/2} (-Lame - conj z)^{-1} conj(V_{1/2})`.
    pub fn apply_adjoint(&self, g: &VectorField) -> Result<VectorField> {
        let conj_half = self.half.map(|v| v.conj());
        let inner = self.resolvent.adjoint().apply(&g.scale_pointwise(&conj_half)?);
        inner.scale_pointwise(&self.abs_half)
    }

    /// Dense `K` restricted to `supp V`, rows and columns ordered
    /// component-major over the support points in storage order.
    pub fn dense_on_support(&self) -> Mat<Complex64> {
        let lattice = *self.lattice();
        let d = lattice.dim();
        let support = self.potential.support_indices();
        let s = support.len();
        let params = *self.resolvent.params();
        let z = self.z();
        let kernel = multiplier_kernel(&lattice, |xi| {
            let shifted = lame_symbol(&params, xi).sub_scalar(z);
            let mut inv = SymbolMatrix::zeros(d);
            for b in 0..d {
                let mut e = [ZERO; 3];
                e[b] = Complex64::new(1.0, 0.0);
                let col = shifted.solve(&e[..d]).expect("admissible z");
                for a in 0..d {
                    inv.set(a, b, col[a]);
                }
            }
            inv
        });
        let coords: Vec<[usize; 3]> = support.iter().map(|&i| lattice.coords(i)).collect();
        let half = self.half.values();
        let abs_half = self.abs_half.values();
        Mat::from_fn(d * s, d * s, |r, c| {
            let (a, j) = (r / s, r % s);
            let (b, l) = (c / s, c % s);
            half[support[j]] * kernel[offset_index(&lattice, &coords[j], &coords[l])].get(a, b) * abs_half[support[l]]
        })
    }
}

pub fn bs_apply(k: &BirmanSchwinger, g: &VectorField) -> Result<VectorField> {
    k.apply(g)
}

pub const DEFAULT_BS_MAX_ITER: usize = 20_000;

/// Krylov dimension between restarts of [`bs_norm_with`].
const BS_KRYLOV: usize = 24;

/// `||K||_{L^2 -> L^2}` by power iteration on `K* K`. The returned value is
/// `||K y||` for a unit vector `y`, hence never above the true norm.
pub fn bs_norm(k: &BirmanSchwinger, tol: f64) -> Result<f64> {
    bs_norm_with(k, tol, DEFAULT_BS_MAX_ITER, 7)
}

/// Restarted Lanczos acceleration of the power iteration on `B = K* K`:
/// each cycle builds an orthonormal Krylov basis from the current vector and
/// restarts from the top Ritz vector. Stops when the Ritz residual satisfies
/// `||B y - theta y|| <= tol * theta`. `max_iter` bounds the number of `B`
/// applications.
pub fn bs_norm_with(k: &BirmanSchwinger, tol: f64, max_iter: usize, seed: u64) -> Result<f64> {
    if k.potential.is_zero() {
        return Ok(0.0);
    }
    let lattice = *k.lattice();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x = random_field(lattice, &mut rng);
    x = &x * (1.0 / x.l2_norm());
    let apply_b = |v: &VectorField| -> Result<VectorField> { k.apply_adjoint(&k.apply(v)?) };
    let mut applications = 0;
    let (mut lower, mut upper) = (0.0f64, f64::INFINITY);
    while applications < max_iter {
        let mut basis = vec![x.clone()];
        let mut images: Vec<VectorField> = Vec::new();
        let mut invariant = false;
        for j in 0..BS_KRYLOV.min(max_iter - applications) {
            let bv = apply_b(&basis[j])?;
            applications += 1;
            let mut w = bv.clone();
            for _ in 0..2 {
                for v in &basis {
                    let c = w.inner(v)?;
                    w = &w - &(v * c);
                }
            }
            images.push(bv);
            let wn = w.l2_norm();
            if wn <= 1e-13 * images[j].l2_norm() {
                invariant = true;
                break;
            }
            if j + 1 < BS_KRYLOV {
                basis.push(&w * (1.0 / wn));
            }
        }
        let m = images.len();
        let h = Mat::from_fn(m, m, |i, l| {
            let a = images[l].inner(&basis[i]).expect("lattice");
            let b = images[i].inner(&basis[l]).expect("lattice").conj();
            (a + b) * 0.5
        });
        let eig = h.self_adjoint_eigen(Side::Lower).map_err(|e| Error::LinearAlgebra(format!("{e:?}")))?;
        let top = m - 1;
        let theta = eig.S().column_vector()[top].re.max(0.0);
        let u = eig.U();
        let mut y = VectorField::zeros(lattice);
        let mut by = VectorField::zeros(lattice);
        for l in 0..m {
            y = &y + &(&basis[l] * u[(l, top)]);
            by = &by + &(&images[l] * u[(l, top)]);
        }
        let yn = y.l2_norm();
        if yn == 0.0 || theta == 0.0 {
            return Ok(0.0);
        }
        let residual = (&by - &(&y * theta)).l2_norm() / yn;
        x = &y * (1.0 / yn);
        let value = k.apply(&x)?.l2_norm();
        lower = lower.max(value);
        upper = (theta + residual).sqrt();
        if invariant || residual <= tol * theta {
            return Ok(lower);
        }
    }
    Err(Error::NonConvergence { iterations: max_iter, lower, upper })
}

/// Eigenvalues of the dense restriction of `K(z)` to `supp V`.
pub fn bs_eigenvalues(k: &BirmanSchwinger) -> Result<Vec<Complex64>> {
    if k.potential.is_zero() {
        return Ok(Vec::new());
    }
    k.dense_on_support().eigenvalues().map_err(|e| Error::LinearAlgebra(format!("{e:?}")))
}

/// `min |sigma + 1|` over the spectrum of `K(z)`; `1` when `V = 0`.
pub fn bs_check(params: &LameParams, v: &Potential, z: Complex64) -> Result<f64> {
    let k = BirmanSchwinger::new(*params, v, z)?;
    Ok(bs_eigenvalues(&k)?.iter().map(|s| (s + 1.0).norm()).fold(1.0, f64::min))
}

/// Function-space pairs for resolvent norms.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NormPair {
    /// `L^p -> L^{p'}`.
    Lebesgue { p: f64 },
    /// `L^2(<x>^{2 alpha}) -> L^2(<x>^{-2 alpha})`.
    Weighted { alpha: f64 },
}

impl NormPair {
    /// Power `e` with `|z|^e ||R(z)||` predicted bounded.
    pub fn compensating_exponent(&self, dim: usize) -> f64 {
        match *self {
            NormPair::Lebesgue { p } => (dim as f64 + 2.0) / 2.0 - dim as f64 / p,
            NormPair::Weighted { .. } => 0.5,
        }
    }
}

#[derive(Clone, Debug)]
pub struct NormEstimateOptions {
    pub random_starts: usize,
    pub iterations: usize,
    pub tol: f64,
    pub seed: u64,
}

impl Default for NormEstimateOptions {
    fn default() -> Self {
        Self { random_starts: 3, iterations: 60, tol: 1e-6, seed: 11 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResolventNormEstimate {
    pub z: Complex64,
    pub pair: NormPair,
    pub value: f64,
    /// `|z|^e * value` with the pair's compensating exponent.
    pub compensated: f64,
    pub best_start: String,
}

fn gaussian_start(lattice: Lattice, width: f64, wave: f64, polarization: usize) -> VectorField {
    let d = lattice.dim();
    VectorField::from_fn(lattice, |j, x| {
        let r2: f64 = x[..d].iter().map(|c| c * c).sum();
        let amp = (-r2 / (2.0 * width * width)).exp();
        let pol = match polarization {
            0 => (j == 0) as u8 as f64,
            _ => 1.0 / (j + 1) as f64,
        };
        Complex64::from_polar(amp * pol, wave * x[0])
    })
}

fn starts(lattice: Lattice, params: &LameParams, z: Complex64, opts: &NormEstimateOptions) -> Vec<(String, VectorField)> {
    let mut out = Vec::new();
    let scale = z.norm().sqrt().recip();
    let mut waves = vec![0.0];
    for c in [params.mu(), params.longitudinal()] {
        let k = (z / c).sqrt().re.abs();
        if k > 0.0 {
            waves.push(k);
        }
    }
    for &w in &waves {
        for f in [0.5, 1.0, 2.0] {
            for pol in 0..lattice.dim().min(2) {
                out.push((format!("gauss-{f}-k{w:.3}-p{pol}"), gaussian_start(lattice, f * scale, w, pol)));
            }
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    for s in 0..opts.random_starts {
        out.push((format!("random-{s}"), random_field(lattice, &mut rng)));
    }
    out
}

fn map_components(f: &VectorField, g: impl Fn(&[Complex64]) -> Vec<Complex64>) -> VectorField {
    let comps = f
        .components()
        .iter()
        .map(|c| ScalarField::new(*c.lattice(), g(c.values())).expect("length"))
        .collect();
    VectorField::new(comps).expect("same lattice")
}

/// Lower estimate of `||(-Lame - z)^{-1}||` between the spaces of `pair`.
pub fn resolvent_norm_estimate(
    params: &LameParams,
    z: Complex64,
    lattice: &Lattice,
    pair: NormPair,
    opts: &NormEstimateOptions,
) -> Result<ResolventNormEstimate> {
    let r = Resolvent::new(*params, z)?;
    let radj = r.adjoint();
    let lattice = *lattice;
    let start_list = starts(lattice, params, z, opts);
    let results: Vec<(f64, String)> = match pair {
        NormPair::Lebesgue { p } => {
            if !(p > 1.0 && p <= 2.0) {
                return Err(Error::InvalidParameter { name: "p", reason: format!("need 1 < p <= 2, got {p}") });
            }
            let q = p / (p - 1.0);
            start_list
                .into_par_iter()
                .map(|(name, g0)| {
                    let ratio = |g: &VectorField| r.apply(g).lp_norm(q) / g.lp_norm(p);
                    let mut g = g0;
                    let mut best = ratio(&g);
                    for _ in 0..opts.iterations {
                        let y = r.apply(&g);
                        let back = radj.apply(&map_components(&y, |v| duality_map(v, q)));
                        let next = map_components(&back, |v| duality_map(v, q));
                        let norm = next.lp_norm(p);
                        if !(norm > 0.0) {
                            break;
                        }
                        g = &next * (1.0 / norm);
                        let val = ratio(&g);
                        let improved = val > best * (1.0 + opts.tol);
                        best = best.max(val);
                        if !improved {
                            break;
                        }
                    }
                    (best, name)
                })
                .collect()
        }
        NormPair::Weighted { alpha } => {
            let inv_w = ScalarField::from_fn(lattice, |x| {
                let r2: f64 = x[..lattice.dim()].iter().map(|c| c * c).sum();
                Complex64::new((1.0 + r2).powf(-alpha / 2.0), 0.0)
            });
            let b = |g: &VectorField, res: &Resolvent| {
                res.apply(&g.scale_pointwise(&inv_w).expect("lattice")).scale_pointwise(&inv_w).expect("lattice")
            };
            start_list
                .into_par_iter()
                .map(|(name, g0)| {
                    let mut g = &g0 * (1.0 / g0.l2_norm());
                    let mut best = 0.0f64;
                    for _ in 0..opts.iterations {
                        let y = b(&g, &r);
                        let s = y.l2_norm();
                        let improved = s > best * (1.0 + opts.tol);
                        best = best.max(s);
                        if !improved {
                            break;
                        }
                        let back = b(&y, &radj);
                        let norm = back.l2_norm();
                        if !(norm > 0.0) {
                            break;
                        }
                        g = &back * (1.0 / norm);
                    }
                    (best, name)
                })
                .collect()
        }
    };
    let (value, best_start) = results
        .into_iter()
        .fold((0.0, String::new()), |acc, (v, n)| if v > acc.0 { (v, n) } else { acc });
    let compensated = z.norm().powf(pair.compensating_exponent(lattice.dim())) * value;
    Ok(ResolventNormEstimate { z, pair, value, compensated, best_start })
}

#[derive(Clone, Debug)]
pub struct ArnoldiOptions {
    pub krylov_dim: usize,
    pub wanted: usize,
    pub restarts: usize,
    pub gmres_tol: f64,
    pub gmres_restart: usize,
    pub gmres_max_iter: usize,
    pub seed: u64,
}

impl Default for ArnoldiOptions {
    fn default() -> Self {
        Self { krylov_dim: 40, wanted: 4, restarts: 8, gmres_tol: 1e-12, gmres_restart: 60, gmres_max_iter: 2000, seed: 3 }
    }
}

fn dot(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

fn axpy(y: &mut [Complex64], a: Complex64, x: &[Complex64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

/// Restarted GMRES for `op(x) = b` with zero initial guess.
fn gmres(op: &dyn Fn(&[Complex64]) -> Vec<Complex64>, b: &[Complex64], tol: f64, restart: usize, max_iter: usize) -> Result<Vec<Complex64>> {
    let m = b.len();
    let bnorm = flat_norm(b);
    let mut x = vec![ZERO; m];
    if bnorm == 0.0 {
        return Ok(x);
    }
    let mut total = 0;
    loop {
        let ax = op(&x);
        let r: Vec<Complex64> = b.iter().zip(&ax).map(|(bi, ai)| bi - ai).collect();
        let beta = flat_norm(&r);
        if beta <= tol * bnorm {
            return Ok(x);
        }
        if total >= max_iter {
            return Err(Error::NonConvergence { iterations: total, lower: 0.0, upper: beta / bnorm });
        }
        let mut basis: Vec<Vec<Complex64>> = vec![r.iter().map(|v| v / beta).collect()];
        let mut h = vec![vec![ZERO; restart]; restart + 1];
        let mut cs = vec![ZERO; restart];
        let mut sn = vec![ZERO; restart];
        let mut g = vec![ZERO; restart + 1];
        g[0] = Complex64::new(beta, 0.0);
        let mut k_used = 0;
        for k in 0..restart {
            total += 1;
            let mut w = op(&basis[k]);
            for _ in 0..2 {
                for (i, v) in basis.iter().enumerate() {
                    let hij = dot(v, &w);
                    h[i][k] += hij;
                    axpy(&mut w, -hij, v);
                }
            }
            let wn = flat_norm(&w);
            h[k + 1][k] = Complex64::new(wn, 0.0);
            for i in 0..k {
                let t = cs[i].conj() * h[i][k] + sn[i].conj() * h[i + 1][k];
                h[i + 1][k] = -sn[i] * h[i][k] + cs[i] * h[i + 1][k];
                h[i][k] = t;
            }
            let (a, bb) = (h[k][k], h[k + 1][k]);
            let den = (a.norm_sqr() + bb.norm_sqr()).sqrt();
            let (c, s) = if den == 0.0 { (Complex64::new(1.0, 0.0), ZERO) } else { (a / den, bb / den) };
            cs[k] = c;
            sn[k] = s;
            h[k][k] = c.conj() * a + s.conj() * bb;
            h[k + 1][k] = ZERO;
            g[k + 1] = -s * g[k];
            g[k] = c.conj() * g[k];
            k_used = k + 1;
            if g[k + 1].norm() <= tol * bnorm || wn == 0.0 || total >= max_iter {
                break;
            }
            basis.push(w.iter().map(|v| v / wn).collect());
        }
        let mut y = vec![ZERO; k_used];
        for i in (0..k_used).rev() {
            let mut s = g[i];
            for j in i + 1..k_used {
                s -= h[i][j] * y[j];
            }
            y[i] = s / h[i][i];
        }
        for (i, yi) in y.iter().enumerate() {
            axpy(&mut x, *yi, &basis[i]);
        }
    }
}

/// Eigenvalues of `-Lame + V` near `sigma` by Arnoldi on `(H - sigma)^{-1}`.
/// Each inverse application solves `(I + V R(sigma)) w = x` by GMRES and
/// returns `R(sigma) w`. Only eigenvalues passing the residual test and the
/// distance filter are reported.
pub fn shift_invert_eigenvalues(
    params: &LameParams,
    v: &Potential,
    sigma: Complex64,
    arnoldi: &ArnoldiOptions,
    options: &EigenOptions,
) -> Result<SpectralResult> {
    let lattice = *v.lattice();
    let d = lattice.dim();
    let unknowns = d * lattice.len();
    let width = spectral_width(params, &lattice);
    let filter = options.filter.unwrap_or(options.filter_fraction * width);
    let tol = options.residual_tolerance.unwrap_or(options.residual_fraction * operator_scale(params, v));
    let r = Resolvent::new(*params, sigma)?;
    let vals = v.values();
    let len = lattice.len();

    let apply_r = |x: &[Complex64]| r.apply(&VectorField::from_flat(lattice, x).expect("length")).to_flat();
    let precond_op = |w: &[Complex64]| {
        let rw = apply_r(w);
        w.iter().enumerate().map(|(i, wi)| wi + vals[i % len] * rw[i]).collect::<Vec<_>>()
    };
    let shift_invert = |x: &[Complex64]| -> Result<Vec<Complex64>> {
        let w = gmres(&precond_op, x, arnoldi.gmres_tol, arnoldi.gmres_restart, arnoldi.gmres_max_iter)?;
        Ok(apply_r(&w))
    };
    let apply_h = |u: &[Complex64]| {
        apply_perturbed(params, v, &VectorField::from_flat(lattice, u).expect("length")).expect("lattice").to_flat()
    };

    let mut rng = ChaCha8Rng::seed_from_u64(arnoldi.seed);
    let mut start: Vec<Complex64> = (0..unknowns)
        .map(|i| Complex64::new(rng.sample::<f64, _>(StandardNormal), 0.0) * vals[i % len].norm().max(1e-3))
        .collect();
    let mut accepted: Vec<(Complex64, f64, Vec<Complex64>)> = Vec::new();
    let kdim = arnoldi.krylov_dim.min(unknowns);
    for _ in 0..=arnoldi.restarts {
        let sn = flat_norm(&start);
        let mut basis: Vec<Vec<Complex64>> = vec![start.iter().map(|x| x / sn).collect()];
        let mut h = Mat::<Complex64>::zeros(kdim + 1, kdim);
        let mut steps = 0;
        for j in 0..kdim {
            let mut w = shift_invert(&basis[j])?;
            for _ in 0..2 {
                for (i, q) in basis.iter().enumerate() {
                    let c = dot(q, &w);
                    h[(i, j)] += c;
                    axpy(&mut w, -c, q);
                }
            }
            let wn = flat_norm(&w);
            h[(j + 1, j)] = Complex64::new(wn, 0.0);
            steps = j + 1;
            if wn <= 1e-14 {
                break;
            }
            basis.push(w.iter().map(|x| x / wn).collect());
        }
        let hm = Mat::from_fn(steps, steps, |i, j| h[(i, j)]);
        let eig = hm.eigen().map_err(|e| Error::LinearAlgebra(format!("{e:?}")))?;
        let theta = eig.S().column_vector().to_owned();
        let vecs = eig.U().to_owned();
        let mut order: Vec<usize> = (0..steps).collect();
        order.sort_by(|&a, &b| theta[b].norm().total_cmp(&theta[a].norm()));
        accepted.clear();
        let mut next = vec![ZERO; unknowns];
        for &i in order.iter().take(arnoldi.wanted) {
            if theta[i].norm() == 0.0 {
                continue;
            }
            let z = sigma + 1.0 / theta[i];
            let mut u = vec![ZERO; unknowns];
            for (k, q) in basis.iter().take(steps).enumerate() {
                axpy(&mut u, vecs[(k, i)], q);
            }
            let hu = apply_h(&u);
            let res: Vec<Complex64> = hu.iter().zip(&u).map(|(a, b)| a - z * b).collect();
            let residual = flat_norm(&res) / flat_norm(&u);
            if residual < tol {
                accepted.push((z, residual, u));
            } else {
                axpy(&mut next, Complex64::new(1.0, 0.0), &u);
            }
        }
        if accepted.len() >= arnoldi.wanted.min(steps) || flat_norm(&next) == 0.0 {
            break;
        }
        start = next;
    }

    let mut eigenvalues = Vec::new();
    let mut eigenvectors = Vec::new();
    let mut filtered_out = 0;
    accepted.sort_by(|a, b| a.0.re.total_cmp(&b.0.re).then(a.0.im.total_cmp(&b.0.im)));
    for (z, residual, u) in accepted {
        if distance_to_ray(z) > filter {
            eigenvalues.push(Eigenvalue { z, residual, dist_to_ray: distance_to_ray(z) });
            eigenvectors.push(VectorField::from_flat(lattice, &u)?);
        } else {
            filtered_out += 1;
        }
    }
    Ok(SpectralResult {
        eigenvalues,
        eigenvectors,
        solver_info: SolverInfo {
            dim: d,
            n: lattice.n(),
            period: lattice.period(),
            unknowns,
            method: "shift-invert-arnoldi".into(),
            discretization: Discretization::Collocation,
            spectral_width: width,
            filter,
            residual_tolerance: tol,
            filtered_out,
            rejected_by_residual: 0,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lame::{apply_lame, BoxWell};

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn params() -> LameParams {
        LameParams::new(0.5, 1.0).unwrap()
    }

    fn gaussian(lattice: Lattice, depth: Complex64) -> Potential {
        Potential::from_fn(lattice, |x| {
            let r2: f64 = x[..lattice.dim()].iter().map(|v| v * v).sum();
            if r2.sqrt() < lattice.period() / 4.0 {
                depth * (-r2).exp()
            } else {
                c(0.0, 0.0)
            }
        })
        .unwrap()
    }

    #[test]
    fn free_operator_has_no_discrete_eigenvalues() {
        let lat = Lattice::new(2, 8, 6.0).unwrap();
        let r = discrete_eigenvalues(&params(), &Potential::zero(lat), &EigenOptions::default()).unwrap();
        assert!(r.eigenvalues.is_empty());
        assert_eq!(r.solver_info.filtered_out, 128);
    }

    #[test]
    fn budget_is_enforced() {
        let lat = Lattice::new(2, 16, 6.0).unwrap();
        let opts = EigenOptions { memory_budget: 1 << 20, ..EigenOptions::default() };
        let err = discrete_eigenvalues(&params(), &Potential::zero(lat), &opts).unwrap_err();
        assert!(matches!(err, Error::BudgetExceeded { unknowns: 512, .. }));
    }

    #[test]
    fn collocation_matrix_matches_fft_application() {
        let lat = Lattice::new(2, 8, 5.0).unwrap();
        let v = gaussian(lat, c(-2.0, 0.7));
        let a = assemble_collocation(&params(), &v);
        let u = VectorField::from_fn(lat, |j, x| c((x[0] * (j + 1) as f64).sin(), x[1].cos()));
        let flat = u.to_flat();
        let m = flat.len();
        let dense: Vec<Complex64> = (0..m).map(|i| (0..m).map(|k| a[(i, k)] * flat[k]).sum()).collect();
        let fft = apply_perturbed(&params(), &v, &u).unwrap().to_flat();
        let err = dense.iter().zip(&fft).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max);
        assert!(err < 1e-12 * flat_norm(&fft), "{err}");
    }

    #[test]
    fn galerkin_needs_boxes() {
        let lat = Lattice::new(1, 16, 8.0).unwrap();
        let opts = EigenOptions { discretization: Discretization::Galerkin, ..EigenOptions::default() };
        assert!(discrete_eigenvalues(&params(), &gaussian(lat, c(-1.0, 0.0)), &opts).is_err());
        let well = Potential::boxes(
            lat,
            vec![BoxWell { center: [0.0; 3], half_widths: [1.0, 0.0, 0.0], depth: c(-3.0, 0.0) }],
        )
        .unwrap();
        let r = discrete_eigenvalues(&params(), &well, &opts).unwrap();
        assert!(!r.eigenvalues.is_empty());
        assert!(r.eigenvalues.iter().all(|e| e.z.im == 0.0 && e.z.re < 0.0));
    }

    #[test]
    fn eigenvectors_satisfy_the_equation() {
        let lat = Lattice::new(1, 64, 16.0).unwrap();
        let v = gaussian(lat, c(-4.0, 1.0));
        let r = discrete_eigenvalues(&params(), &v, &EigenOptions::default()).unwrap();
        assert!(!r.eigenvalues.is_empty());
        for (e, u) in r.eigenvalues.iter().zip(&r.eigenvectors) {
            let hu = apply_perturbed(&params(), &v, u).unwrap();
            let res = (&hu - &(u * e.z)).l2_norm() / u.l2_norm();
            assert!(res < 1e-8, "{res}");
        }
    }

    #[test]
    fn bs_operator_vanishes_for_zero_potential() {
        let lat = Lattice::new(2, 8, 6.0).unwrap();
        let k = BirmanSchwinger::new(params(), &Potential::zero(lat), c(-1.0, 0.0)).unwrap();
        let g = VectorField::from_fn(lat, |_, x| c(x[0], 1.0));
        assert_eq!(k.apply(&g).unwrap().max_abs(), 0.0);
        assert_eq!(bs_norm(&k, 1e-8).unwrap(), 0.0);
        assert_eq!(bs_check(&params(), &Potential::zero(lat), c(-1.0, 0.0)).unwrap(), 1.0);
    }

    #[test]
    fn bs_factors_multiply_back_to_v() {
        let lat = Lattice::new(1, 16, 6.0).unwrap();
        let v = gaussian(lat, c(-1.0, 2.0));
        let k = BirmanSchwinger::new(params(), &v, c(-1.0, 0.0)).unwrap();
        for ((a, b), orig) in k.half().values().iter().zip(k.abs_half().values()).zip(v.values()) {
            assert!((a * b - orig).norm() < 1e-15);
        }
    }

    #[test]
    fn bs_dense_matches_apply() {
        let lat = Lattice::new(2, 8, 6.0).unwrap();
        let v = gaussian(lat, c(-1.5, 0.5));
        let k = BirmanSchwinger::new(params(), &v, c(-0.5, 0.3)).unwrap();
        let support = v.support_indices();
        let s = support.len();
        let g = VectorField::from_fn(lat, |j, x| c(x[0] + j as f64, x[1].sin()));
        let out = k.apply(&g).unwrap();
        let dense = k.dense_on_support();
        for a in 0..2 {
            for (jj, &j) in support.iter().enumerate() {
                let mut acc = c(0.0, 0.0);
                for b in 0..2 {
                    for (ll, &l) in support.iter().enumerate() {
                        acc += dense[(a * s + jj, b * s + ll)] * g.component(b).values()[l];
                    }
                }
                assert!((acc - out.component(a).values()[j]).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn doubling_v_doubles_the_bs_norm() {
        let lat = Lattice::new(1, 32, 10.0).unwrap();
        let v = gaussian(lat, c(-1.0, 0.5));
        let z = c(-0.7, 0.2);
        let n1 = bs_norm(&BirmanSchwinger::new(params(), &v, z).unwrap(), 1e-10).unwrap();
        let v2 = v.scaled_by(c(2.0, 0.0)).unwrap();
        let n2 = bs_norm(&BirmanSchwinger::new(params(), &v2, z).unwrap(), 1e-10).unwrap();
        assert!((n2 - 2.0 * n1).abs() < 1e-8 * n2, "{n1} {n2}");
    }

    #[test]
    fn scalar_resolvent_norm_at_minus_one() {
        let p = LameParams::new(-1.0, 1.0).unwrap();
        let lat = Lattice::new(1, 32, 8.0).unwrap();
        let e = resolvent_norm_estimate(&p, c(-1.0, 0.0), &lat, NormPair::Lebesgue { p: 2.0 }, &NormEstimateOptions::default())
            .unwrap();
        assert!((e.value - 1.0).abs() < 1e-6, "{}", e.value);
    }

    #[test]
    fn gmres_solves_a_shifted_identity() {
        let b: Vec<Complex64> = (0..20).map(|i| c(i as f64, 1.0)).collect();
        let op = |x: &[Complex64]| x.iter().enumerate().map(|(i, v)| v * c(2.0 + i as f64 * 0.1, 0.5)).collect();
        let x = gmres(&op, &b, 1e-13, 8, 500).unwrap();
        let r: Vec<Complex64> = op(&x).iter().zip(&b).map(|(a, bb)| a - bb).collect();
        assert!(flat_norm(&r) < 1e-12 * flat_norm(&b));
    }

    #[test]
    fn arnoldi_recovers_dense_eigenvalues() {
        let lat = Lattice::new(1, 64, 16.0).unwrap();
        let v = gaussian(lat, c(-5.0, 1.0));
        let dense = discrete_eigenvalues(&params(), &v, &EigenOptions::default()).unwrap();
        let target = dense.eigenvalues[0].z;
        let sigma = target + c(0.05, 0.05);
        let r = shift_invert_eigenvalues(&params(), &v, sigma, &ArnoldiOptions::default(), &EigenOptions::default()).unwrap();
        let best = r.eigenvalues.iter().map(|e| (e.z - target).norm()).fold(f64::INFINITY, f64::min);
        assert!(best < 1e-8, "{best}");
    }

    #[test]
    fn lame_kernel_reproduces_the_free_operator() {
        let lat = Lattice::new(1, 16, 4.0).unwrap();
        let a = assemble_collocation(&params(), &Potential::zero(lat));
        let u = VectorField::from_fn(lat, |_, x| c(x[0].cos(), 0.0));
        let f = u.to_flat();
        let dense: Vec<Complex64> = (0..16).map(|i| (0..16).map(|k| a[(i, k)] * f[k]).sum()).collect();
        let err = dense.iter().zip(apply_lame(&params(), &u).to_flat()).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max);
        assert!(err < 1e-12);
    }
}
