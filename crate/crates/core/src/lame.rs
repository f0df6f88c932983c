//! The Lamé operator `-mu Lap u - (lambda + mu) grad div u`, its perturbation by
//! a complex potential, and its resolvent.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::helmholtz::helmholtz_decompose;
use crate::lattice::{
    apply_multiplier, apply_scalar_multiplier, map_coefficients, Lattice, ScalarField, SymbolMatrix,
    VectorField,
};

/// Lamé coefficients with `mu > 0` and `lambda + 2 mu > 0`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LameParams {
    lambda: f64,
    mu: f64,
}

impl LameParams {
    pub fn new(lambda: f64, mu: f64) -> Result<Self> {
        if !(lambda.is_finite() && mu.is_finite()) {
            return Err(Error::InvalidLameParams(format!("non-finite coefficients ({lambda}, {mu})")));
        }
        if mu <= 0.0 {
            return Err(Error::InvalidLameParams(format!("need mu > 0, got mu = {mu}")));
        }
        if lambda + 2.0 * mu <= 0.0 {
            return Err(Error::InvalidLameParams(format!(
                "need lambda + 2 mu > 0, got {}",
                lambda + 2.0 * mu
            )));
        }
        Ok(Self { lambda, mu })
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    /// `lambda + 2 mu`, the longitudinal coefficient.
    pub fn longitudinal(&self) -> f64 {
        self.lambda + 2.0 * self.mu
    }
}

/// Fourier symbol `mu |xi|^2 I + (lambda + mu) xi xi^T`.
pub fn lame_symbol(params: &LameParams, xi: &[f64]) -> SymbolMatrix {
    let r2: f64 = xi.iter().map(|x| x * x).sum();
    let shear = params.mu * r2;
    let coupling = params.lambda + params.mu;
    SymbolMatrix::from_fn(xi.len(), |r, c| {
        let diag = if r == c { shear } else { 0.0 };
        Complex64::new(diag + coupling * xi[r] * xi[c], 0.0)
    })
}

pub fn apply_lame(params: &LameParams, u: &VectorField) -> VectorField {
    apply_multiplier(u, |xi| lame_symbol(params, xi)).expect("Lamé symbol is finite")
}

/// Axis-aligned box of grid indices, inclusive on both ends.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SupportBox {
    pub lower: [usize; 3],
    pub upper: [usize; 3],
}

/// A constant-depth box `{ |x_a - c_a| < w_a }`, the building block of
/// piecewise-constant potentials with closed-form Fourier coefficients.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoxWell {
    pub center: [f64; 3],
    pub half_widths: [f64; 3],
    pub depth: Complex64,
}

impl BoxWell {
    /// Sampling weight at `x`: 1 inside, 1/2 per axis on a face, 0 outside.
    fn weight(&self, x: &[f64]) -> f64 {
        x.iter()
            .enumerate()
            .map(|(a, &xa)| {
                let dist = (xa - self.center[a]).abs();
                let w = self.half_widths[a];
                let tol = 1e-12 * w.max(1.0);
                if (dist - w).abs() <= tol {
                    0.5
                } else if dist < w {
                    1.0
                } else {
                    0.0
                }
            })
            .product()
    }

    /// `L^{-d} int_box e^{-i xi . x} dx` times the depth.
    fn fourier_coefficient(&self, xi: &[f64], volume: f64) -> Complex64 {
        let mut acc = self.depth / volume;
        for (a, &k) in xi.iter().enumerate() {
            let c = self.center[a];
            let w = self.half_widths[a];
            let integral = if k == 0.0 { 2.0 * w } else { 2.0 * (k * w).sin() / k };
            acc *= Complex64::from_polar(integral, -k * c);
        }
        acc
    }
}

/// A complex potential sampled on a lattice.
#[derive(Clone, Debug, PartialEq)]
pub struct Potential {
    field: ScalarField,
    support: Option<SupportBox>,
    pieces: Option<Vec<BoxWell>>,
}

impl Potential {
    pub fn new(field: ScalarField) -> Result<Self> {
        if let Some(bad) = field.values().iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "potential",
                reason: format!("non-finite value at grid index {bad}"),
            });
        }
        let support = support_of(&field);
        Ok(Self { field, support, pieces: None })
    }

    pub fn zero(lattice: Lattice) -> Self {
        Self { field: ScalarField::zeros(lattice), support: None, pieces: None }
    }

    pub fn from_fn(lattice: Lattice, f: impl Fn(&[f64]) -> Complex64) -> Result<Self> {
        Self::new(ScalarField::from_fn(lattice, f))
    }

    /// Sum of boxes; keeps the exact description for Galerkin assembly.
    pub fn boxes(lattice: Lattice, wells: Vec<BoxWell>) -> Result<Self> {
        let d = lattice.dim();
        let field = ScalarField::from_fn(lattice, |x| {
            wells.iter().map(|w| w.depth * w.weight(&x[..d])).sum()
        });
        let mut v = Self::new(field)?;
        v.pieces = Some(wells);
        Ok(v)
    }

    pub fn lattice(&self) -> &Lattice {
        self.field.lattice()
    }

    pub fn field(&self) -> &ScalarField {
        &self.field
    }

    pub fn values(&self) -> &[Complex64] {
        self.field.values()
    }

    /// Bounding box of the nonzero samples, `None` for `V = 0`.
    pub fn support(&self) -> Option<SupportBox> {
        self.support
    }

    pub fn pieces(&self) -> Option<&[BoxWell]> {
        self.pieces.as_deref()
    }

    pub fn is_zero(&self) -> bool {
        self.support.is_none()
    }

    pub fn is_real(&self) -> bool {
        self.values().iter().all(|v| v.im == 0.0)
    }

    /// Flat indices where `V != 0`, in storage order.
    pub fn support_indices(&self) -> Vec<usize> {
        self.values()
            .iter()
            .enumerate()
            .filter(|(_, v)| **v != Complex64::new(0.0, 0.0))
            .map(|(i, _)| i)
            .collect()
    }

    /// Exact normalized Fourier coefficient `L^{-d} int V e^{-i xi . x}` for
    /// box potentials; `None` otherwise.
    pub fn exact_coefficient(&self, xi: &[f64]) -> Option<Complex64> {
        let volume = self.lattice().volume();
        self.pieces.as_ref().map(|p| p.iter().map(|w| w.fourier_coefficient(xi, volume)).sum())
    }

    /// `V_a(x) = a^2 V(a x)` on the lattice with period `L / a`. Grid values
    /// are multiplied by `a^2`.
    pub fn rescaled(&self, factor: f64) -> Result<Self> {
        let lattice = self.lattice().scaled(factor)?;
        let scale = factor * factor;
        let values = self.values().iter().map(|v| v * scale).collect();
        let field = ScalarField::new(lattice, values)?;
        let pieces = self.pieces.as_ref().map(|ps| {
            ps.iter()
                .map(|w| BoxWell {
                    center: w.center.map(|c| c / factor),
                    half_widths: w.half_widths.map(|h| h / factor),
                    depth: w.depth * scale,
                })
                .collect()
        });
        Ok(Self { field, support: self.support, pieces })
    }

    pub fn scaled_by(&self, c: Complex64) -> Result<Self> {
        let mut v = Self::new(&self.field * c)?;
        v.pieces = self.pieces.as_ref().map(|ps| {
            ps.iter().map(|w| BoxWell { depth: w.depth * c, ..*w }).collect()
        });
        Ok(v)
    }

    /// Negative part `max(-Re V, 0)` of a real potential.
    pub fn negative_part(&self) -> Result<Self> {
        Self::new(self.field.map(|v| Complex64::new((-v.re).max(0.0), 0.0)))
    }
}

fn support_of(field: &ScalarField) -> Option<SupportBox> {
    let lattice = field.lattice();
    let mut lower = [usize::MAX; 3];
    let mut upper = [0usize; 3];
    let mut any = false;
    for (i, v) in field.values().iter().enumerate() {
        if *v != Complex64::new(0.0, 0.0) {
            any = true;
            let c = lattice.coords(i);
            for a in 0..lattice.dim() {
                lower[a] = lower[a].min(c[a]);
                upper[a] = upper[a].max(c[a]);
            }
        }
    }
    if !any {
        return None;
    }
    for a in lattice.dim()..3 {
        lower[a] = 0;
    }
    Some(SupportBox { lower, upper })
}

/// `-Lame u + V u`, the potential acting on every component.
pub fn apply_perturbed(params: &LameParams, potential: &Potential, u: &VectorField) -> Result<VectorField> {
    let free = apply_lame(params, u);
    let vu = u.scale_pointwise(potential.field())?;
    Ok(&free + &vu)
}

/// Default floor on `dist(z, [0, inf))` for resolvent evaluation.
pub const DEFAULT_Z_FLOOR: f64 = 1e-8;

pub fn distance_to_ray(z: Complex64) -> f64 {
    if z.re >= 0.0 {
        z.im.abs()
    } else {
        z.norm()
    }
}

/// `(-Lame - z)^{-1}` for a fixed admissible `z`.
#[derive(Clone, Copy, Debug)]
pub struct Resolvent {
    params: LameParams,
    z: Complex64,
}

impl Resolvent {
    pub fn new(params: LameParams, z: Complex64) -> Result<Self> {
        Self::with_floor(params, z, DEFAULT_Z_FLOOR)
    }

    pub fn with_floor(params: LameParams, z: Complex64, floor: f64) -> Result<Self> {
        let distance = distance_to_ray(z);
        if !z.is_finite() || distance < floor {
            return Err(Error::NearSpectrum { z, distance, floor });
        }
        Ok(Self { params, z })
    }

    pub fn z(&self) -> Complex64 {
        self.z
    }

    pub fn params(&self) -> &LameParams {
        &self.params
    }

    /// The resolvent at `conj(z)`, which is the adjoint.
    pub fn adjoint(&self) -> Self {
        Self { params: self.params, z: self.z.conj() }
    }

    /// Per-frequency inversion of `M(xi) - z I`.
    pub fn apply_direct(&self, g: &VectorField) -> Result<VectorField> {
        let params = self.params;
        let z = self.z;
        map_coefficients(g, |xi, v| {
            lame_symbol(&params, xi).sub_scalar(z).solve(v).ok_or_else(|| {
                Error::LinearAlgebra(format!("singular symbol at xi = {xi:?}"))
            })
        })
    }

    /// Helmholtz-split evaluation
    /// `mu^{-1} (-Lap - z/mu)^{-1} g_S + (lambda+2mu)^{-1} (-Lap - z/(lambda+2mu))^{-1} g_P`.
    pub fn apply_split(&self, g: &VectorField) -> VectorField {
        let pair = helmholtz_decompose(g);
        let mu = self.params.mu;
        let long = self.params.longitudinal();
        let s = laplacian_resolvent_vector(self.z / mu, &pair.solenoidal);
        let p = laplacian_resolvent_vector(self.z / long, &pair.potential);
        &(&s * (1.0 / mu)) + &(&p * (1.0 / long))
    }

    /// The split formula evaluated in a single transform pair: per frequency
    /// the coefficient vector is projected onto `xi^perp` and `xi` and each
    /// part is divided by its scalar symbol. Used in iterative solvers.
    pub fn apply(&self, g: &VectorField) -> VectorField {
        let mu = self.params.mu;
        let long = self.params.longitudinal();
        let z = self.z;
        map_coefficients(g, |xi, v| {
            let d = xi.len();
            let r2: f64 = xi.iter().map(|x| x * x).sum();
            let ts = 1.0 / (mu * r2 - z);
            let tp = 1.0 / (long * r2 - z);
            let mut out = [Complex64::new(0.0, 0.0); 3];
            if r2 == 0.0 {
                for j in 0..d {
                    out[j] = v[j] * ts;
                }
                return Ok(out);
            }
            let dot: Complex64 = (0..d).map(|j| v[j] * xi[j]).sum::<Complex64>() / r2;
            for j in 0..d {
                let vp = dot * xi[j];
                out[j] = (v[j] - vp) * ts + vp * tp;
            }
            Ok(out)
        })
        .expect("split symbol is finite away from the spectrum")
    }
}

/// `(-Lap - w)^{-1}` on each component; zero-frequency handled by the symbol
/// `-1/w`.
pub fn laplacian_resolvent(w: Complex64, phi: &ScalarField) -> ScalarField {
    apply_scalar_multiplier(phi, |xi| {
        let r2: f64 = xi.iter().map(|x| x * x).sum();
        1.0 / (r2 - w)
    })
    .expect("admissible shift")
}

fn laplacian_resolvent_vector(w: Complex64, f: &VectorField) -> VectorField {
    let components = f.components().iter().map(|c| laplacian_resolvent(w, c)).collect();
    VectorField::new(components).expect("same lattice")
}

pub fn resolvent_direct(params: &LameParams, z: Complex64, g: &VectorField) -> Result<VectorField> {
    Resolvent::new(*params, z)?.apply_direct(g)
}

pub fn resolvent_split(params: &LameParams, z: Complex64, g: &VectorField) -> Result<VectorField> {
    Ok(Resolvent::new(*params, z)?.apply_split(g))
}
