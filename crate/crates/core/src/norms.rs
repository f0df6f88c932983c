//! Size functionals for potentials: discrete `L^p`, weighted `L^q`,
//! Morrey-Campanato, Kerman-Sayer and the Muckenhoupt `A_p` constant.
//!
//! Every sup is taken over a finite search family (grid-centered balls with
//! dyadic radii, or dyadic cubes), and sums run over grid points in storage
//! order. The reported witness re-evaluates to the reported value exactly.

use std::collections::BTreeMap;
use std::num::NonZeroUsize;

use gauss_quad::legendre::GaussLegendre;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lame::Potential;
use crate::lattice::{Lattice, ScalarField};

/// A dyadic cube of the period cell. `corner` is the grid index of its lowest
/// corner; it spans `n / 2^level` points per axis.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DyadicCube {
    pub level: u32,
    pub corner: [usize; 3],
    pub side: f64,
}

impl DyadicCube {
    pub fn cells_per_side(&self, lattice: &Lattice) -> usize {
        lattice.n() >> self.level
    }

    pub fn contains(&self, lattice: &Lattice, coords: &[usize; 3]) -> bool {
        let s = self.cells_per_side(lattice);
        (0..lattice.dim()).all(|a| coords[a] >= self.corner[a] && coords[a] < self.corner[a] + s)
    }

    /// Flat indices of the cube in storage order.
    pub fn indices(&self, lattice: &Lattice) -> Vec<usize> {
        let s = self.cells_per_side(lattice);
        let d = lattice.dim();
        let mut out = Vec::with_capacity(s.pow(d as u32));
        let mut offset = [0usize; 3];
        loop {
            let mut c = [0usize; 3];
            for a in 0..d {
                c[a] = self.corner[a] + offset[a];
            }
            out.push(lattice.flat_index(&c));
            let mut axis = d;
            loop {
                if axis == 0 {
                    return out;
                }
                axis -= 1;
                offset[axis] += 1;
                if offset[axis] < s {
                    break;
                }
                offset[axis] = 0;
            }
        }
    }
}

/// Deepest dyadic level: single grid cells.
pub fn max_level(lattice: &Lattice) -> u32 {
    lattice.n().trailing_zeros()
}

/// All dyadic cubes at levels `0..=max_level`, coarse to fine, corners in
/// storage order within a level.
pub fn dyadic_cubes(lattice: &Lattice) -> Vec<DyadicCube> {
    let d = lattice.dim();
    let mut out = Vec::new();
    for level in 0..=max_level(lattice) {
        let per_axis = 1usize << level;
        let s = lattice.n() >> level;
        let side = lattice.period() / per_axis as f64;
        for k in 0..per_axis.pow(d as u32) {
            let mut corner = [0usize; 3];
            let mut rest = k;
            for a in (0..d).rev() {
                corner[a] = (rest % per_axis) * s;
                rest /= per_axis;
            }
            out.push(DyadicCube { level, corner, side });
        }
    }
    out
}

/// The set achieving a supremum.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Witness {
    /// Closed ball about a grid point; `radius = radius_cells * h`.
    Ball { center: [usize; 3], radius_cells: usize, radius: f64 },
    Cube(DyadicCube),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormResult {
    pub norm_name: String,
    pub params: BTreeMap<String, f64>,
    pub value: f64,
    pub witness: Option<Witness>,
    /// Cells raised to the weight floor (Muckenhoupt only).
    #[serde(default, skip_serializing_if = "is_zero")]
    pub floored_cells: usize,
}

fn is_zero(n: &usize) -> bool {
    *n == 0
}

impl NormResult {
    fn new(name: &str, params: &[(&str, f64)], value: f64, witness: Option<Witness>) -> Self {
        Self {
            norm_name: name.to_string(),
            params: params.iter().map(|(k, v)| (k.to_string(), *v)).collect(),
            value,
            witness,
            floored_cells: 0,
        }
    }
}

fn invalid(name: &'static str, reason: String) -> Error {
    Error::InvalidParameter { name, reason }
}

/// `(sum |V|^p h^d)^{1/p}`.
pub fn lp_norm(v: &Potential, p: f64) -> Result<f64> {
    if !(p >= 1.0) || !p.is_finite() {
        return Err(invalid("p", format!("need 1 <= p < inf, got {p}")));
    }
    Ok(v.field().lp_norm(p))
}

/// `<x> = (1 + |x|^2)^{1/2}` at cell-centered positions.
pub fn japanese_bracket(lattice: &Lattice, flat: usize) -> f64 {
    let x = lattice.position(flat);
    (1.0 + x.iter().map(|c| c * c).sum::<f64>()).sqrt()
}

/// The weight `<x>^{2 alpha}` as a field.
pub fn bracket_weight(lattice: Lattice, alpha: f64) -> ScalarField {
    let values = (0..lattice.len())
        .map(|i| Complex64::new(japanese_bracket(&lattice, i).powf(2.0 * alpha), 0.0))
        .collect();
    ScalarField::new(lattice, values).expect("length matches")
}

/// `(sum |V|^q <x>^{2 alpha} h^d)^{1/q}`.
pub fn weighted_lq_norm(v: &Potential, q: f64, alpha: f64) -> Result<f64> {
    if !(q >= 1.0) || !q.is_finite() {
        return Err(invalid("q", format!("need 1 <= q < inf, got {q}")));
    }
    let lattice = v.lattice();
    let s: f64 = v
        .values()
        .iter()
        .enumerate()
        .map(|(i, z)| z.norm().powf(q) * japanese_bracket(lattice, i).powf(2.0 * alpha))
        .sum();
    Ok((s * lattice.cell_volume()).powf(1.0 / q))
}

fn check_mc(d: usize, alpha: f64, p: f64) -> Result<()> {
    if !(alpha > 0.0) {
        return Err(invalid("alpha", format!("need alpha > 0, got {alpha}")));
    }
    if !(p >= 1.0 && p <= d as f64 / alpha) {
        return Err(invalid("p", format!("need 1 <= p <= d/alpha = {}, got {p}", d as f64 / alpha)));
    }
    Ok(())
}

fn abs_pow(v: &Potential, p: f64) -> Vec<f64> {
    v.values().iter().map(|z| z.norm().powf(p)).collect()
}

/// Radii `h 2^k <= L/2`, in cells.
pub fn mc_radii(lattice: &Lattice) -> Vec<usize> {
    let mut out = Vec::new();
    let mut k = 1usize;
    while k <= lattice.n() / 2 {
        out.push(k);
        k *= 2;
    }
    out
}

fn ball_sum(lattice: &Lattice, weights: &[f64], center: [usize; 3], radius_cells: usize) -> f64 {
    let d = lattice.dim();
    let n = lattice.n() as i64;
    let r = radius_cells as i64;
    let mut lo = [0i64; 3];
    let mut hi = [0i64; 3];
    for a in 0..d {
        lo[a] = (center[a] as i64 - r).max(0);
        hi[a] = (center[a] as i64 + r).min(n - 1);
    }
    let r2 = r * r;
    let mut sum = 0.0;
    let mut c = lo;
    loop {
        let o2: i64 = (0..d).map(|a| (c[a] - center[a] as i64).pow(2)).sum();
        if o2 <= r2 {
            let mut idx = 0usize;
            for a in 0..d {
                idx = idx * lattice.n() + c[a] as usize;
            }
            sum += weights[idx];
        }
        let mut axis = d;
        loop {
            if axis == 0 {
                return sum;
            }
            axis -= 1;
            c[axis] += 1;
            if c[axis] <= hi[axis] {
                break;
            }
            c[axis] = lo[axis];
        }
    }
}

/// `r^alpha (r^{-d} sum_{|x - c| <= r} |V|^p h^d)^{1/p}` from a ball sum of `|V|^p`.
pub fn mc_functional(lattice: &Lattice, alpha: f64, p: f64, radius_cells: usize, sum: f64) -> f64 {
    let h = lattice.spacing();
    let r = radius_cells as f64 * h;
    let d = lattice.dim() as i32;
    r.powf(alpha) * (sum * lattice.cell_volume() / r.powi(d)).powf(1.0 / p)
}

/// The Morrey-Campanato functional on one ball.
pub fn mc_ball_value(v: &Potential, alpha: f64, p: f64, center: [usize; 3], radius_cells: usize) -> Result<f64> {
    check_mc(v.lattice().dim(), alpha, p)?;
    let w = abs_pow(v, p);
    Ok(mc_functional(v.lattice(), alpha, p, radius_cells, ball_sum(v.lattice(), &w, center, radius_cells)))
}

/// `sup_{x, r} r^alpha (r^{-d} int_{B_r(x)} |V|^p)^{1/p}` over grid centers and
/// radii `h, 2h, ..., L/2`. Points outside the cell contribute zero.
pub fn morrey_campanato_norm(v: &Potential, alpha: f64, p: f64) -> Result<NormResult> {
    let lattice = *v.lattice();
    check_mc(lattice.dim(), alpha, p)?;
    let params = [("alpha", alpha), ("p", p)];
    if v.is_zero() {
        return Ok(NormResult::new("morrey_campanato", &params, 0.0, None));
    }
    let w = abs_pow(v, p);
    let radii = mc_radii(&lattice);
    let per_center: Vec<(f64, usize)> = (0..lattice.len())
        .into_par_iter()
        .map(|i| {
            let center = lattice.coords(i);
            let mut best = (f64::NEG_INFINITY, 0);
            for &k in &radii {
                let val = mc_functional(&lattice, alpha, p, k, ball_sum(&lattice, &w, center, k));
                if val > best.0 {
                    best = (val, k);
                }
            }
            best
        })
        .collect();
    let (mut value, mut arg) = (f64::NEG_INFINITY, (0, 0));
    for (i, &(val, k)) in per_center.iter().enumerate() {
        if val > value {
            value = val;
            arg = (i, k);
        }
    }
    let witness = Witness::Ball {
        center: lattice.coords(arg.0),
        radius_cells: arg.1,
        radius: arg.1 as f64 * lattice.spacing(),
    };
    Ok(NormResult::new("morrey_campanato", &params, value, Some(witness)))
}

/// Treatment of the singular diagonal `x = y` in the Kerman-Sayer double sum.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KsDiagonal {
    /// Cell pairs up to [`KS_NEAR_FIELD`] cells apart (max norm) carry the
    /// exact mean of `|x - y|^{alpha - d}` over the pair,
    /// `cell_pair_mean(d, alpha, o) h^{alpha - d}`; point values beyond.
    #[default]
    CellAverage,
    /// Diagonal dropped, point values elsewhere; undercounts by `O(h^alpha)`.
    Exclude,
}

/// `int_{[0,1]^d} int_{[0,1]^d} |x - y|^{alpha - d} dx dy`.
///
/// With `u = x - y` this is `2^d int_{[0,1]^d} |u|^{alpha - d} prod (1 - u_a) du`;
/// writing `u = s (t, 1)` over the `d` faces where one coordinate is largest
/// leaves a smooth integral over `t in [0,1]^{d-1}` after the radial part is
/// done in closed form.
pub fn self_cell_mean(dim: usize, alpha: f64) -> f64 {
    // radial integral int_0^1 s^{alpha-1} prod_a (1 - s q_a) ds
    let radial = |q: &[f64]| -> f64 {
        let mut poly = vec![1.0];
        for &qa in q {
            let mut next = vec![0.0; poly.len() + 1];
            for (k, c) in poly.iter().enumerate() {
                next[k] += c;
                next[k + 1] -= c * qa;
            }
            poly = next;
        }
        let r2: f64 = q.iter().map(|x| x * x).sum();
        r2.powf((alpha - dim as f64) / 2.0) * poly.iter().enumerate().map(|(k, c)| c / (alpha + k as f64)).sum::<f64>()
    };
    let simpson = |m: usize, f: &dyn Fn(f64) -> f64| -> f64 {
        let h = 1.0 / m as f64;
        (0..=m)
            .map(|i| {
                let w = if i == 0 || i == m { 1.0 } else if i % 2 == 1 { 4.0 } else { 2.0 };
                w * f(i as f64 * h)
            })
            .sum::<f64>()
            * h
            / 3.0
    };
    let face = match dim {
        1 => radial(&[1.0]),
        2 => simpson(2000, &|t| radial(&[t, 1.0])),
        _ => simpson(240, &|t1| simpson(240, &|t2| radial(&[t1, t2, 1.0]))),
    };
    2f64.powi(dim as i32) * dim as f64 * face
}

/// Max-norm radius (in cells) inside which the Kerman-Sayer kernel uses
/// exact cell-pair means.
pub const KS_NEAR_FIELD: usize = 3;

/// Mean of `|x - y|^{alpha - d}` over `x` in the unit cube and `y` in the unit
/// cube shifted by the integer `offset` (componentwise `>= 0`).
///
/// `w = y - x` has density `prod (1 - |w_a - o_a|)` on `o + [-1, 1]^d`, linear
/// on each of the `2^d` unit boxes. Boxes with the singularity at a corner go
/// through the cone reduction of [`self_cell_mean`]; the others are smooth and
/// take tensor Gauss-Legendre.
pub fn cell_pair_mean(dim: usize, alpha: f64, offset: &[usize]) -> f64 {
    if offset.iter().all(|&o| o == 0) {
        return self_cell_mean(dim, alpha);
    }
    let rule = GaussLegendre::new(NonZeroUsize::new(16).expect("nonzero"));
    let nodes: Vec<(f64, f64)> = rule.as_node_weight_pairs().iter().map(|&(x, w)| (0.5 * (x + 1.0), 0.5 * w)).collect();
    let e = alpha - dim as f64;
    let mut total = 0.0;
    for mask in 0..(1usize << dim) {
        let lo: Vec<f64> = (0..dim).map(|a| offset[a] as f64 - if mask >> a & 1 == 0 { 1.0 } else { 0.0 }).collect();
        if lo.iter().all(|&l| l == 0.0 || l == -1.0) {
            // reflected to [0,1]^d the weight factor is v (o_a = 1) or 1 - v (o_a = 0)
            let rising: Vec<bool> = offset.iter().map(|&o| o == 1).collect();
            total += corner_box(dim, alpha, &rising, &nodes);
        } else {
            total += tensor(dim, &nodes, &|u| {
                let mut r2 = 0.0;
                let mut weight = 1.0;
                for a in 0..dim {
                    let w = lo[a] + u[a];
                    r2 += w * w;
                    weight *= 1.0 - (w - offset[a] as f64).abs();
                }
                r2.powf(0.5 * e) * weight
            });
        }
    }
    total
}

/// `int_{[0,1]^d} |v|^{alpha - d} prod_a f_a(v_a) dv` with `f_a(v) = v` where
/// `rising[a]` and `1 - v` otherwise.
fn corner_box(dim: usize, alpha: f64, rising: &[bool], nodes: &[(f64, f64)]) -> f64 {
    let e = alpha - dim as f64;
    let mut total = 0.0;
    // face k: v = s q with q_k = 1 and the other coordinates t in [0,1]^{d-1}
    for k in 0..dim {
        total += tensor(dim - 1, nodes, &|t| {
            let q: Vec<f64> = (0..dim).map(|a| if a == k { 1.0 } else { t[if a < k { a } else { a - 1 }] }).collect();
            let mut poly = vec![1.0];
            for a in 0..dim {
                let mut next = vec![0.0; poly.len() + 1];
                for (j, c) in poly.iter().enumerate() {
                    if rising[a] {
                        next[j + 1] += c * q[a];
                    } else {
                        next[j] += c;
                        next[j + 1] -= c * q[a];
                    }
                }
                poly = next;
            }
            let r2: f64 = q.iter().map(|x| x * x).sum();
            r2.powf(0.5 * e) * poly.iter().enumerate().map(|(j, c)| c / (alpha + j as f64)).sum::<f64>()
        });
    }
    total
}

/// Tensor product rule on `[0,1]^m`.
fn tensor(m: usize, nodes: &[(f64, f64)], f: &dyn Fn(&[f64]) -> f64) -> f64 {
    let mut point = vec![0.0; m];
    let mut total = 0.0;
    let count = nodes.len().pow(m as u32);
    for idx in 0..count {
        let mut rest = idx;
        let mut weight = 1.0;
        for p in point.iter_mut() {
            let (x, w) = nodes[rest % nodes.len()];
            rest /= nodes.len();
            *p = x;
            weight *= w;
        }
        total += weight * f(&point);
    }
    total
}

/// Kernel `|x - y|^{alpha - d}` tabulated by absolute integer offset.
pub struct RieszKernel {
    n: usize,
    dim: usize,
    table: Vec<f64>,
}

impl RieszKernel {
    pub fn new(lattice: &Lattice, alpha: f64, diagonal: KsDiagonal) -> Self {
        let n = lattice.n();
        let dim = lattice.dim();
        let h = lattice.spacing();
        let mut table: Vec<f64> = (0..n.pow(dim as u32))
            .map(|k| {
                let mut rest = k;
                let mut o = [0usize; 3];
                for a in (0..dim).rev() {
                    o[a] = rest % n;
                    rest /= n;
                }
                let near = o[..dim].iter().all(|&c| c <= KS_NEAR_FIELD);
                if diagonal == KsDiagonal::CellAverage && near {
                    cell_pair_mean(dim, alpha, &o[..dim]) * h.powf(alpha - dim as f64)
                } else {
                    ks_kernel(h, dim, alpha, o[..dim].iter().map(|c| c * c).sum())
                }
            })
            .collect();
        if diagonal == KsDiagonal::Exclude {
            table[0] = 0.0;
        }
        Self { n, dim, table }
    }

    fn at(&self, x: &[usize; 3], y: &[usize; 3]) -> f64 {
        let mut idx = 0;
        for a in 0..self.dim {
            idx = idx * self.n + x[a].abs_diff(y[a]);
        }
        self.table[idx]
    }
}

/// `(h sqrt(|o|^2))^{alpha - d}` for a squared integer offset.
pub fn ks_kernel(h: f64, dim: usize, alpha: f64, offset_sq: usize) -> f64 {
    (h * (offset_sq as f64).sqrt()).powf(alpha - dim as f64)
}

fn check_ks(d: usize, alpha: f64) -> Result<()> {
    if !(alpha > 0.0 && alpha < d as f64) {
        return Err(invalid("alpha", format!("need 0 < alpha < d = {d}, got {alpha}")));
    }
    Ok(())
}

/// Mass `sum |V| h^d` and double sum `sum_{x, y} |V(x)||V(y)| k(x - y) h^{2d}`
/// over one cube; the ratio is the Kerman-Sayer functional.
fn ks_cube_parts(lattice: &Lattice, a: &[f64], kernel: &RieszKernel, cube: &DyadicCube) -> (f64, f64) {
    let idx = cube.indices(lattice);
    let coords: Vec<[usize; 3]> = idx.iter().map(|&i| lattice.coords(i)).collect();
    let mut mass = 0.0;
    for &i in &idx {
        mass += a[i];
    }
    let mut total = 0.0;
    for (xi, &i) in idx.iter().enumerate() {
        if a[i] == 0.0 {
            continue;
        }
        let mut row = 0.0;
        for (yi, &j) in idx.iter().enumerate() {
            if a[j] == 0.0 {
                continue;
            }
            row += a[j] * kernel.at(&coords[xi], &coords[yi]);
        }
        total += a[i] * row;
    }
    let hd = lattice.cell_volume();
    (mass * hd, total * hd * hd)
}

fn ks_ratio(mass: f64, double: f64) -> f64 {
    double / mass
}

/// The Kerman-Sayer functional on one cube; 0 for a cube without mass.
pub fn ks_cube_value(v: &Potential, alpha: f64, cube: &DyadicCube, diagonal: KsDiagonal) -> Result<f64> {
    let lattice = v.lattice();
    check_ks(lattice.dim(), alpha)?;
    let a: Vec<f64> = v.values().iter().map(|z| z.norm()).collect();
    let (mass, double) = ks_cube_parts(lattice, &a, &RieszKernel::new(lattice, alpha, diagonal), cube);
    Ok(if mass > 0.0 { ks_ratio(mass, double) } else { 0.0 })
}

/// `sup_Q (int_Q |V|)^{-1} int_Q int_Q |V(x)||V(y)| |x - y|^{alpha - d}` over
/// dyadic cubes with positive mass, diagonal cells by their exact cell average.
pub fn kerman_sayer_norm(v: &Potential, alpha: f64) -> Result<NormResult> {
    kerman_sayer_norm_with(v, alpha, KsDiagonal::CellAverage)
}

/// [`kerman_sayer_norm`] with a chosen diagonal treatment. The result records
/// the diagonal weight `self_cell_mean` (0 when excluded).
pub fn kerman_sayer_norm_with(v: &Potential, alpha: f64, diagonal: KsDiagonal) -> Result<NormResult> {
    let lattice = *v.lattice();
    check_ks(lattice.dim(), alpha)?;
    let mean = match diagonal {
        KsDiagonal::CellAverage => self_cell_mean(lattice.dim(), alpha),
        KsDiagonal::Exclude => 0.0,
    };
    let params = [("alpha", alpha), ("self_cell_mean", mean)];
    if v.is_zero() {
        return Ok(NormResult::new("kerman_sayer", &params, 0.0, None));
    }
    let a: Vec<f64> = v.values().iter().map(|z| z.norm()).collect();
    let kernel = RieszKernel::new(&lattice, alpha, diagonal);
    let cubes = dyadic_cubes(&lattice);
    let values: Vec<Option<f64>> = cubes
        .par_iter()
        .map(|cube| {
            let (mass, double) = ks_cube_parts(&lattice, &a, &kernel, cube);
            (mass > 0.0).then(|| ks_ratio(mass, double))
        })
        .collect();
    let (value, witness) = first_max(&cubes, &values);
    Ok(NormResult::new("kerman_sayer", &params, value, witness.map(Witness::Cube)))
}

fn first_max(cubes: &[DyadicCube], values: &[Option<f64>]) -> (f64, Option<DyadicCube>) {
    let mut best = (0.0, None);
    let mut seen = false;
    for (cube, val) in cubes.iter().zip(values) {
        if let Some(val) = *val {
            if !seen || val > best.0 {
                best = (val, Some(*cube));
                seen = true;
            }
        }
    }
    best
}

pub const DEFAULT_WEIGHT_FLOOR: f64 = 1e-12;

/// Non-negative weight values, zeros and tiny values raised to `floor`.
fn floored_weight(w: &ScalarField, floor: f64) -> Result<(Vec<f64>, usize)> {
    let mut floored = 0;
    let mut out = Vec::with_capacity(w.values().len());
    for (i, z) in w.values().iter().enumerate() {
        if z.im != 0.0 || !(z.re >= 0.0) || !z.re.is_finite() {
            return Err(invalid("weight", format!("need a finite non-negative real weight, got {z} at index {i}")));
        }
        if z.re < floor {
            floored += 1;
            out.push(floor);
        } else {
            out.push(z.re);
        }
    }
    Ok((out, floored))
}

fn ap_product(w: &[f64], p: f64, idx: &[usize]) -> f64 {
    let e = -1.0 / (p - 1.0);
    let mut s1 = 0.0;
    let mut s2 = 0.0;
    for &i in idx {
        s1 += w[i];
        s2 += w[i].powf(e);
    }
    let count = idx.len() as f64;
    (s1 / count) * (s2 / count).powf(p - 1.0)
}

fn check_ap(p: f64) -> Result<()> {
    if !(p > 1.0) || !p.is_finite() {
        return Err(invalid("p", format!("need 1 < p < inf, got {p}")));
    }
    Ok(())
}

/// The `A_p` bracket on one cube, with the weight floor applied.
pub fn muckenhoupt_cube_value(w: &ScalarField, p: f64, cube: &DyadicCube, floor: f64) -> Result<f64> {
    check_ap(p)?;
    let (wv, _) = floored_weight(w, floor)?;
    Ok(ap_product(&wv, p, &cube.indices(w.lattice())))
}

/// `Q_p(w) = sup_Q (avg_Q w)(avg_Q w^{-1/(p-1)})^{p-1}` over all dyadic cubes.
pub fn muckenhoupt_constant(w: &ScalarField, p: f64) -> Result<NormResult> {
    muckenhoupt_constant_with_floor(w, p, DEFAULT_WEIGHT_FLOOR)
}

pub fn muckenhoupt_constant_with_floor(w: &ScalarField, p: f64, floor: f64) -> Result<NormResult> {
    check_ap(p)?;
    if !(floor > 0.0) {
        return Err(invalid("floor", format!("need a positive weight floor, got {floor}")));
    }
    let lattice = *w.lattice();
    let (wv, floored) = floored_weight(w, floor)?;
    let cubes = dyadic_cubes(&lattice);
    let values: Vec<Option<f64>> =
        cubes.par_iter().map(|c| Some(ap_product(&wv, p, &c.indices(&lattice)))).collect();
    let (value, witness) = first_max(&cubes, &values);
    let mut out = NormResult::new("muckenhoupt", &[("p", p), ("floor", floor)], value, witness.map(Witness::Cube));
    out.floored_cells = floored;
    Ok(out)
}

/// Re-evaluate a result's witness with the same parameters.
pub fn evaluate_witness(v: &Potential, result: &NormResult) -> Result<Option<f64>> {
    let param = |k: &str| {
        result.params.get(k).copied().ok_or_else(|| invalid("params", format!("missing `{k}`")))
    };
    let Some(witness) = result.witness else { return Ok(None) };
    let value = match (result.norm_name.as_str(), witness) {
        ("morrey_campanato", Witness::Ball { center, radius_cells, .. }) => {
            mc_ball_value(v, param("alpha")?, param("p")?, center, radius_cells)?
        }
        ("kerman_sayer", Witness::Cube(cube)) => {
            let diagonal = if param("self_cell_mean")? == 0.0 { KsDiagonal::Exclude } else { KsDiagonal::CellAverage };
            ks_cube_value(v, param("alpha")?, &cube, diagonal)?
        }
        ("muckenhoupt", Witness::Cube(cube)) => {
            muckenhoupt_cube_value(v.field(), param("p")?, &cube, param("floor")?)?
        }
        (name, _) => return Err(invalid("witness", format!("no witness evaluation for `{name}`"))),
    };
    Ok(Some(value))
}
