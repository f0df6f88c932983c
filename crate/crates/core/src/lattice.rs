//! Periodic grids, sampled complex fields, the discrete Fourier transform and
//! Fourier multipliers.
//!
//! A [`Lattice`] discretizes the period cell `[0, L)^d` with `n` points per
//! axis. Fields are stored row-major (axis 0 slowest). Physical coordinates
//! are cell-centered: grid index `i` maps to `x = (i - n/2) h`, so the origin
//! sits at index `n/2` on every axis.
//!
//! Fourier coefficients use the mean-normalized convention
//! `c_k = N^{-1} sum_x f(x) e^{-i xi_k . x}`, so a constant field `c` has the
//! single coefficient `c` at `k = 0` and Parseval reads
//! `sum |f|^2 h^d = L^d sum |c_k|^2`.

use std::collections::HashMap;
use std::ops::{Add, Mul, Neg, Sub};
use std::sync::{Arc, Mutex, OnceLock};

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Periodic grid on `[0, L)^d`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Lattice {
    dim: usize,
    n: usize,
    period: f64,
}

impl Lattice {
    pub fn new(dim: usize, n: usize, period: f64) -> Result<Self> {
        if !(1..=3).contains(&dim) {
            return Err(Error::InvalidLattice(format!("dim must be 1, 2 or 3, got {dim}")));
        }
        if n < 4 || n % 2 != 0 {
            return Err(Error::InvalidLattice(format!("n must be even and at least 4, got {n}")));
        }
        if !(period.is_finite() && period > 0.0) {
            return Err(Error::InvalidLattice(format!("period must be positive and finite, got {period}")));
        }
        Ok(Self { dim, n, period })
    }

    /// `L = 2 pi` with `n = 128, 64, 32` for `d = 1, 2, 3`.
    pub fn default_for(dim: usize) -> Result<Self> {
        let n = match dim {
            1 => 128,
            2 => 64,
            3 => 32,
            _ => return Err(Error::InvalidLattice(format!("dim must be 1, 2 or 3, got {dim}"))),
        };
        Self::new(dim, n, 2.0 * std::f64::consts::PI)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn period(&self) -> f64 {
        self.period
    }

    pub fn spacing(&self) -> f64 {
        self.period / self.n as f64
    }

    /// Number of grid points, `n^d`.
    pub fn len(&self) -> usize {
        self.n.pow(self.dim as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Quadrature weight `h^d`.
    pub fn cell_volume(&self) -> f64 {
        self.spacing().powi(self.dim as i32)
    }

    pub fn volume(&self) -> f64 {
        self.period.powi(self.dim as i32)
    }

    /// Same grid with the period divided by `factor` (the `x -> factor x`
    /// rescaling used by the scaling covariance checks).
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        Self::new(self.dim, self.n, self.period / factor)
    }

    pub fn with_n(&self, n: usize) -> Result<Self> {
        Self::new(self.dim, n, self.period)
    }

    /// Multi-index of a flat storage index; unused trailing axes are 0.
    pub fn coords(&self, flat: usize) -> [usize; 3] {
        let mut out = [0usize; 3];
        let mut rest = flat;
        for axis in (0..self.dim).rev() {
            out[axis] = rest % self.n;
            rest /= self.n;
        }
        out
    }

    pub fn flat_index(&self, coords: &[usize]) -> usize {
        coords[..self.dim].iter().fold(0, |acc, &c| acc * self.n + c)
    }

    /// Signed FFT wavenumber in `[-n/2, n/2)` for a per-axis index.
    pub fn wavenumber(&self, index: usize) -> i64 {
        let half = self.n / 2;
        if index < half {
            index as i64
        } else {
            index as i64 - self.n as i64
        }
    }

    /// Angular frequency vector `xi = 2 pi k / L` of a flat index.
    pub fn frequency(&self, flat: usize) -> [f64; 3] {
        let c = self.coords(flat);
        let scale = 2.0 * std::f64::consts::PI / self.period;
        let mut xi = [0.0; 3];
        for axis in 0..self.dim {
            xi[axis] = scale * self.wavenumber(c[axis]) as f64;
        }
        xi
    }

    /// Cell-centered position `x = (i - n/2) h` of a flat index.
    pub fn position(&self, flat: usize) -> [f64; 3] {
        let c = self.coords(flat);
        let h = self.spacing();
        let half = (self.n / 2) as f64;
        let mut x = [0.0; 3];
        for axis in 0..self.dim {
            x[axis] = (c[axis] as f64 - half) * h;
        }
        x
    }

    /// Largest symbol value `|xi|^2` on the grid (all axes at Nyquist).
    pub fn max_frequency_squared(&self) -> f64 {
        let k = std::f64::consts::PI * self.n as f64 / self.period;
        self.dim as f64 * k * k
    }
}

/// Complex scalar field sampled on a lattice.
#[derive(Clone, Debug, PartialEq)]
pub struct ScalarField {
    lattice: Lattice,
    values: Vec<Complex64>,
}

impl ScalarField {
    pub fn new(lattice: Lattice, values: Vec<Complex64>) -> Result<Self> {
        if values.len() != lattice.len() {
            return Err(Error::ShapeMismatch { expected: lattice.len(), got: values.len() });
        }
        Ok(Self { lattice, values })
    }

    pub fn zeros(lattice: Lattice) -> Self {
        Self { lattice, values: vec![ZERO; lattice.len()] }
    }

    pub fn constant(lattice: Lattice, value: Complex64) -> Self {
        Self { lattice, values: vec![value; lattice.len()] }
    }

    /// Samples `f` at the cell-centered positions.
    pub fn from_fn(lattice: Lattice, f: impl Fn(&[f64]) -> Complex64) -> Self {
        let values = (0..lattice.len())
            .map(|i| {
                let x = lattice.position(i);
                f(&x[..lattice.dim()])
            })
            .collect();
        Self { lattice, values }
    }

    /// Plane wave `e^{i 2 pi k . y / L}` in storage coordinates `y = i h`.
    pub fn plane_wave(lattice: Lattice, wavenumbers: &[i64]) -> Self {
        let h = lattice.spacing();
        let scale = 2.0 * std::f64::consts::PI / lattice.period();
        let values = (0..lattice.len())
            .map(|i| {
                let c = lattice.coords(i);
                let phase: f64 = (0..lattice.dim())
                    .map(|a| scale * wavenumbers[a] as f64 * c[a] as f64 * h)
                    .sum();
                Complex64::from_polar(1.0, phase)
            })
            .collect();
        Self { lattice, values }
    }

    pub fn lattice(&self) -> &Lattice {
        &self.lattice
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [Complex64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<Complex64> {
        self.values
    }

    pub fn map(&self, f: impl Fn(Complex64) -> Complex64) -> Self {
        Self { lattice: self.lattice, values: self.values.iter().map(|&v| f(v)).collect() }
    }

    pub fn pointwise_mul(&self, other: &ScalarField) -> Result<Self> {
        check_same(&self.lattice, &other.lattice)?;
        Ok(Self {
            lattice: self.lattice,
            values: self.values.iter().zip(&other.values).map(|(a, b)| a * b).collect(),
        })
    }

    /// Discrete `L^p` norm `(sum |f|^p h^d)^{1/p}`.
    pub fn lp_norm(&self, p: f64) -> f64 {
        weighted_lp(&self.values, p, self.lattice.cell_volume())
    }

    pub fn l2_norm(&self) -> f64 {
        self.lp_norm(2.0)
    }

    /// `<f, g> = sum f conj(g) h^d`.
    pub fn inner(&self, other: &ScalarField) -> Result<Complex64> {
        check_same(&self.lattice, &other.lattice)?;
        let s: Complex64 = self.values.iter().zip(&other.values).map(|(a, b)| a * b.conj()).sum();
        Ok(s * self.lattice.cell_volume())
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }
}

/// Complex vector field with `d` components on one lattice.
#[derive(Clone, Debug, PartialEq)]
pub struct VectorField {
    lattice: Lattice,
    components: Vec<ScalarField>,
}

impl VectorField {
    pub fn new(components: Vec<ScalarField>) -> Result<Self> {
        let lattice = *components
            .first()
            .ok_or(Error::ShapeMismatch { expected: 1, got: 0 })?
            .lattice();
        if components.len() != lattice.dim() {
            return Err(Error::ShapeMismatch { expected: lattice.dim(), got: components.len() });
        }
        for c in &components {
            check_same(&lattice, c.lattice())?;
        }
        Ok(Self { lattice, components })
    }

    pub fn zeros(lattice: Lattice) -> Self {
        Self { lattice, components: vec![ScalarField::zeros(lattice); lattice.dim()] }
    }

    /// Samples `f(j, x)` for each component `j` at cell-centered positions.
    pub fn from_fn(lattice: Lattice, f: impl Fn(usize, &[f64]) -> Complex64) -> Self {
        let components = (0..lattice.dim())
            .map(|j| ScalarField::from_fn(lattice, |x| f(j, x)))
            .collect();
        Self { lattice, components }
    }

    /// Component-major flat layout: component `j` occupies `[j N, (j+1) N)`.
    pub fn from_flat(lattice: Lattice, flat: &[Complex64]) -> Result<Self> {
        let n = lattice.len();
        if flat.len() != n * lattice.dim() {
            return Err(Error::ShapeMismatch { expected: n * lattice.dim(), got: flat.len() });
        }
        let components = flat
            .chunks(n)
            .map(|c| ScalarField { lattice, values: c.to_vec() })
            .collect();
        Ok(Self { lattice, components })
    }

    pub fn to_flat(&self) -> Vec<Complex64> {
        self.components.iter().flat_map(|c| c.values.iter().copied()).collect()
    }

    pub fn lattice(&self) -> &Lattice {
        &self.lattice
    }

    pub fn dim(&self) -> usize {
        self.lattice.dim()
    }

    pub fn components(&self) -> &[ScalarField] {
        &self.components
    }

    pub fn component(&self, j: usize) -> &ScalarField {
        &self.components[j]
    }

    pub fn component_mut(&mut self, j: usize) -> &mut ScalarField {
        &mut self.components[j]
    }

    pub fn map(&self, f: impl Fn(Complex64) -> Complex64) -> Self {
        Self { lattice: self.lattice, components: self.components.iter().map(|c| c.map(&f)).collect() }
    }

    /// Multiplies every component pointwise by `w`.
    pub fn scale_pointwise(&self, w: &ScalarField) -> Result<Self> {
        check_same(&self.lattice, w.lattice())?;
        let components = self
            .components
            .iter()
            .map(|c| c.pointwise_mul(w))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { lattice: self.lattice, components })
    }

    /// `(sum_j ||u_j||_p^p)^{1/p}`.
    pub fn lp_norm(&self, p: f64) -> f64 {
        let s: f64 = self.components.iter().map(|c| c.lp_norm(p).powf(p)).sum();
        s.powf(1.0 / p)
    }

    pub fn l2_norm(&self) -> f64 {
        let s: f64 = self
            .components
            .iter()
            .flat_map(|c| c.values.iter())
            .map(|v| v.norm_sqr())
            .sum();
        (s * self.lattice.cell_volume()).sqrt()
    }

    pub fn inner(&self, other: &VectorField) -> Result<Complex64> {
        check_same(&self.lattice, &other.lattice)?;
        self.components
            .iter()
            .zip(&other.components)
            .map(|(a, b)| a.inner(b))
            .sum()
    }

    pub fn max_abs(&self) -> f64 {
        self.components.iter().map(|c| c.max_abs()).fold(0.0, f64::max)
    }
}

fn check_same(a: &Lattice, b: &Lattice) -> Result<()> {
    if a == b {
        Ok(())
    } else {
        Err(Error::LatticeMismatch)
    }
}

pub(crate) fn weighted_lp(values: &[Complex64], p: f64, weight: f64) -> f64 {
    if p == 2.0 {
        let s: f64 = values.iter().map(|v| v.norm_sqr()).sum();
        return (s * weight).sqrt();
    }
    let s: f64 = values.iter().map(|v| v.norm().powf(p)).sum();
    (s * weight).powf(1.0 / p)
}

macro_rules! impl_field_ops {
    ($t:ty, $field:ident) => {
        impl Add for &$t {
            type Output = $t;
            fn add(self, rhs: &$t) -> $t {
                assert_eq!(self.lattice, rhs.lattice, "lattice mismatch");
                <$t>::zip_with(self, rhs, |a, b| a + b)
            }
        }
        impl Sub for &$t {
            type Output = $t;
            fn sub(self, rhs: &$t) -> $t {
                assert_eq!(self.lattice, rhs.lattice, "lattice mismatch");
                <$t>::zip_with(self, rhs, |a, b| a - b)
            }
        }
        impl Mul<Complex64> for &$t {
            type Output = $t;
            fn mul(self, rhs: Complex64) -> $t {
                self.map(|v| v * rhs)
            }
        }
        impl Mul<f64> for &$t {
            type Output = $t;
            fn mul(self, rhs: f64) -> $t {
                self.map(|v| v * rhs)
            }
        }
        impl Neg for &$t {
            type Output = $t;
            fn neg(self) -> $t {
                self.map(|v| -v)
            }
        }
    };
}

impl ScalarField {
    fn zip_with(a: &Self, b: &Self, f: impl Fn(Complex64, Complex64) -> Complex64) -> Self {
        Self {
            lattice: a.lattice,
            values: a.values.iter().zip(&b.values).map(|(&x, &y)| f(x, y)).collect(),
        }
    }
}

impl VectorField {
    fn zip_with(a: &Self, b: &Self, f: impl Fn(Complex64, Complex64) -> Complex64 + Copy) -> Self {
        Self {
            lattice: a.lattice,
            components: a
                .components
                .iter()
                .zip(&b.components)
                .map(|(x, y)| ScalarField::zip_with(x, y, f))
                .collect(),
        }
    }
}

impl_field_ops!(ScalarField, values);
impl_field_ops!(VectorField, components);

type Plan = Arc<dyn Fft<f64>>;

fn plans(n: usize) -> (Plan, Plan) {
    static CACHE: OnceLock<Mutex<HashMap<usize, (Plan, Plan)>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    let mut guard = cache.lock().unwrap_or_else(|e| e.into_inner());
    guard
        .entry(n)
        .or_insert_with(|| {
            let mut planner = FftPlanner::new();
            (planner.plan_fft_forward(n), planner.plan_fft_inverse(n))
        })
        .clone()
}

/// Unnormalized multi-axis FFT in place.
fn fft_in_place(data: &mut [Complex64], lattice: &Lattice, inverse: bool) {
    let n = lattice.n();
    let dim = lattice.dim();
    let (fwd, inv) = plans(n);
    let fft = if inverse { inv } else { fwd };
    let mut scratch = vec![ZERO; fft.get_inplace_scratch_len()];
    let mut lane = vec![ZERO; n];
    for axis in 0..dim {
        let stride = n.pow((dim - 1 - axis) as u32);
        if stride == 1 {
            fft.process_with_scratch(data, &mut scratch);
            continue;
        }
        let block = stride * n;
        for base in (0..data.len()).step_by(block) {
            for offset in 0..stride {
                let start = base + offset;
                for (k, slot) in lane.iter_mut().enumerate() {
                    *slot = data[start + k * stride];
                }
                fft.process_with_scratch(&mut lane, &mut scratch);
                for (k, v) in lane.iter().enumerate() {
                    data[start + k * stride] = *v;
                }
            }
        }
    }
}

/// Mean-normalized discrete Fourier coefficients, stored in FFT order.
pub fn forward_transform(f: &ScalarField) -> ScalarField {
    let mut values = f.values.clone();
    fft_in_place(&mut values, &f.lattice, false);
    let scale = 1.0 / f.lattice.len() as f64;
    values.iter_mut().for_each(|v| *v *= scale);
    ScalarField { lattice: f.lattice, values }
}

pub fn inverse_transform(coefficients: &ScalarField) -> ScalarField {
    let mut values = coefficients.values.clone();
    fft_in_place(&mut values, &coefficients.lattice, true);
    ScalarField { lattice: coefficients.lattice, values }
}

/// Small dense `d x d` complex matrix, the value of a matrix-valued symbol at
/// one frequency.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SymbolMatrix {
    dim: usize,
    entries: [[Complex64; 3]; 3],
}

impl SymbolMatrix {
    pub fn zeros(dim: usize) -> Self {
        Self { dim, entries: [[ZERO; 3]; 3] }
    }

    pub fn identity(dim: usize) -> Self {
        Self::scalar(dim, Complex64::new(1.0, 0.0))
    }

    pub fn scalar(dim: usize, value: Complex64) -> Self {
        let mut m = Self::zeros(dim);
        for i in 0..dim {
            m.entries[i][i] = value;
        }
        m
    }

    pub fn from_fn(dim: usize, f: impl Fn(usize, usize) -> Complex64) -> Self {
        let mut m = Self::zeros(dim);
        for r in 0..dim {
            for c in 0..dim {
                m.entries[r][c] = f(r, c);
            }
        }
        m
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn set(&mut self, row: usize, col: usize, value: Complex64) {
        self.entries[row][col] = value;
    }

    pub fn get(&self, row: usize, col: usize) -> Complex64 {
        self.entries[row][col]
    }

    pub fn is_finite(&self) -> bool {
        self.entries[..self.dim]
            .iter()
            .all(|row| row[..self.dim].iter().all(|v| v.is_finite()))
    }

    pub fn mul_vec(&self, v: &[Complex64]) -> [Complex64; 3] {
        let mut out = [ZERO; 3];
        for r in 0..self.dim {
            out[r] = (0..self.dim).map(|c| self.entries[r][c] * v[c]).sum();
        }
        out
    }

    pub fn matmul(&self, other: &SymbolMatrix) -> SymbolMatrix {
        Self::from_fn(self.dim, |r, c| (0..self.dim).map(|k| self.entries[r][k] * other.entries[k][c]).sum())
    }

    pub fn adjoint(&self) -> SymbolMatrix {
        Self::from_fn(self.dim, |r, c| self.entries[c][r].conj())
    }

    pub fn sub_scalar(&self, z: Complex64) -> SymbolMatrix {
        let mut m = *self;
        for i in 0..self.dim {
            m.entries[i][i] -= z;
        }
        m
    }

    /// Solves `self x = rhs` by Gaussian elimination with partial pivoting.
    /// Returns `None` for a numerically singular matrix.
    pub fn solve(&self, rhs: &[Complex64]) -> Option<[Complex64; 3]> {
        let d = self.dim;
        let mut a = self.entries;
        let mut b = [ZERO; 3];
        b[..d].copy_from_slice(&rhs[..d]);
        for col in 0..d {
            let pivot = (col..d).max_by(|&i, &j| a[i][col].norm().total_cmp(&a[j][col].norm()))?;
            if a[pivot][col].norm() == 0.0 {
                return None;
            }
            a.swap(col, pivot);
            b.swap(col, pivot);
            for row in col + 1..d {
                let factor = a[row][col] / a[col][col];
                for k in col..d {
                    let v = a[col][k];
                    a[row][k] -= factor * v;
                }
                let v = b[col];
                b[row] -= factor * v;
            }
        }
        let mut x = [ZERO; 3];
        for row in (0..d).rev() {
            let s: Complex64 = (row + 1..d).map(|k| a[row][k] * x[k]).sum();
            x[row] = (b[row] - s) / a[row][row];
        }
        Some(x)
    }
}

/// Applies a scalar Fourier multiplier: `hat(out)(xi) = m(xi) hat(phi)(xi)`.
pub fn apply_scalar_multiplier(
    phi: &ScalarField,
    symbol: impl Fn(&[f64]) -> Complex64,
) -> Result<ScalarField> {
    let lattice = phi.lattice;
    let mut coeffs = forward_transform(phi);
    for (i, c) in coeffs.values.iter_mut().enumerate() {
        let xi = lattice.frequency(i);
        let m = symbol(&xi[..lattice.dim()]);
        if !m.is_finite() {
            return Err(Error::UndefinedSymbol { frequency: xi[..lattice.dim()].to_vec() });
        }
        *c *= m;
    }
    Ok(inverse_transform(&coeffs))
}

/// Applies a matrix-valued Fourier multiplier to a vector field:
/// `hat(out)(xi) = M(xi) hat(u)(xi)`.
pub fn apply_multiplier(
    u: &VectorField,
    symbol: impl Fn(&[f64]) -> SymbolMatrix,
) -> Result<VectorField> {
    let lattice = u.lattice;
    let d = lattice.dim();
    let mut coeffs: Vec<ScalarField> = u.components.iter().map(forward_transform).collect();
    let mut v = [ZERO; 3];
    for i in 0..lattice.len() {
        let xi = lattice.frequency(i);
        let m = symbol(&xi[..d]);
        if m.dim() != d || !m.is_finite() {
            return Err(Error::UndefinedSymbol { frequency: xi[..d].to_vec() });
        }
        for (j, c) in coeffs.iter().enumerate() {
            v[j] = c.values[i];
        }
        let out = m.mul_vec(&v);
        for (j, c) in coeffs.iter_mut().enumerate() {
            c.values[i] = out[j];
        }
    }
    let components = coeffs.iter().map(inverse_transform).collect();
    Ok(VectorField { lattice, components })
}

/// Applies a per-frequency map on the coefficient vectors of `u`. Used by
/// operators whose action is a solve rather than a product.
pub(crate) fn map_coefficients(
    u: &VectorField,
    mut f: impl FnMut(&[f64], &[Complex64]) -> Result<[Complex64; 3]>,
) -> Result<VectorField> {
    let lattice = u.lattice;
    let d = lattice.dim();
    let mut coeffs: Vec<ScalarField> = u.components.iter().map(forward_transform).collect();
    let mut v = [ZERO; 3];
    for i in 0..lattice.len() {
        let xi = lattice.frequency(i);
        for (j, c) in coeffs.iter().enumerate() {
            v[j] = c.values[i];
        }
        let out = f(&xi[..d], &v[..d])?;
        for (j, c) in coeffs.iter_mut().enumerate() {
            c.values[i] = out[j];
        }
    }
    let components = coeffs.iter().map(inverse_transform).collect();
    Ok(VectorField { lattice, components })
}
