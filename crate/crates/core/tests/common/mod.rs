//! Shared helpers for integration tests: exhaustive-search norm oracles and
//! seeded random inputs.
#![allow(dead_code)]

use lame_spectral::lame::Potential;
use lame_spectral::lattice::{Lattice, ScalarField};
use lame_spectral::norms::{cell_pair_mean, KS_NEAR_FIELD};
use lame_spectral::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Random complex samples, roughly a third of them zero.
pub fn sparse_potential(lattice: Lattice, rng: &mut impl Rng) -> Potential {
    let values = (0..lattice.len())
        .map(|_| {
            if rng.random::<f64>() < 0.35 {
                Complex64::new(0.0, 0.0)
            } else {
                Complex64::new(rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0))
            }
        })
        .collect();
    Potential::new(ScalarField::new(lattice, values).unwrap()).unwrap()
}

fn coords(lattice: &Lattice, i: usize) -> [usize; 3] {
    let n = lattice.n();
    let mut c = [0usize; 3];
    let mut rest = i;
    for a in (0..lattice.dim()).rev() {
        c[a] = rest % n;
        rest /= n;
    }
    c
}

/// Every dyadic cube as (level, corner), coarse to fine, corners in storage
/// order. Level `l` exists when `2^l` divides `n`.
pub fn all_cubes(lattice: &Lattice) -> Vec<(u32, [usize; 3])> {
    let d = lattice.dim();
    let n = lattice.n();
    let mut out = Vec::new();
    for level in 0..usize::BITS {
        if n % (1 << level) != 0 {
            break;
        }
        let s = n >> level;
        for i in 0..lattice.len() {
            let c = coords(lattice, i);
            if (0..d).all(|a| c[a] % s == 0) {
                out.push((level, c));
            }
        }
    }
    out
}

fn in_cube(lattice: &Lattice, level: u32, corner: &[usize; 3], c: &[usize; 3]) -> bool {
    let s = lattice.n() >> level;
    (0..lattice.dim()).all(|a| c[a] >= corner[a] && c[a] < corner[a] + s)
}

/// Exhaustive Morrey-Campanato scan: every grid center, radii `h, 2h, ..., L/2`,
/// every grid point tested for membership.
pub fn brute_mc(v: &Potential, alpha: f64, p: f64) -> f64 {
    let lattice = *v.lattice();
    let d = lattice.dim();
    let h = lattice.spacing();
    let w: Vec<f64> = v.values().iter().map(|z| z.norm().powf(p)).collect();
    let mut best = f64::NEG_INFINITY;
    for ci in 0..lattice.len() {
        let center = coords(&lattice, ci);
        let mut k = 1;
        while k <= lattice.n() / 2 {
            let mut sum = 0.0;
            for xi in 0..lattice.len() {
                let x = coords(&lattice, xi);
                let o2: usize = (0..d).map(|a| x[a].abs_diff(center[a]).pow(2)).sum();
                if o2 <= k * k {
                    sum += w[xi];
                }
            }
            let r = k as f64 * h;
            let val = r.powf(alpha) * (sum * lattice.cell_volume() / r.powi(d as i32)).powf(1.0 / p);
            if val > best {
                best = val;
            }
            k *= 2;
        }
    }
    if v.is_zero() {
        0.0
    } else {
        best
    }
}

/// Exhaustive Kerman-Sayer scan with exact cell-pair means in the near field.
pub fn brute_ks(v: &Potential, alpha: f64) -> f64 {
    let lattice = *v.lattice();
    let d = lattice.dim();
    let h = lattice.spacing();
    let a: Vec<f64> = v.values().iter().map(|z| z.norm()).collect();
    let kernel = |x: &[usize; 3], y: &[usize; 3]| {
        let o: Vec<usize> = (0..d).map(|k| x[k].abs_diff(y[k])).collect();
        if o.iter().all(|&c| c <= KS_NEAR_FIELD) {
            cell_pair_mean(d, alpha, &o) * h.powf(alpha - d as f64)
        } else {
            let o2: usize = o.iter().map(|c| c * c).sum();
            (h * (o2 as f64).sqrt()).powf(alpha - d as f64)
        }
    };
    let hd = lattice.cell_volume();
    let mut best: Option<f64> = None;
    for (level, corner) in all_cubes(&lattice) {
        let members: Vec<usize> =
            (0..lattice.len()).filter(|&i| in_cube(&lattice, level, &corner, &coords(&lattice, i))).collect();
        let mut mass = 0.0;
        for &i in &members {
            mass += a[i];
        }
        if mass * hd <= 0.0 {
            continue;
        }
        let mut total = 0.0;
        for &i in &members {
            if a[i] == 0.0 {
                continue;
            }
            let mut row = 0.0;
            for &j in &members {
                if a[j] == 0.0 {
                    continue;
                }
                row += a[j] * kernel(&coords(&lattice, i), &coords(&lattice, j));
            }
            total += a[i] * row;
        }
        let val = (total * hd * hd) / (mass * hd);
        if best.is_none_or(|b| val > b) {
            best = Some(val);
        }
    }
    best.unwrap_or(0.0)
}

/// Exhaustive dyadic `A_p` scan with the weight floor.
pub fn brute_ap(w: &ScalarField, p: f64, floor: f64) -> f64 {
    let lattice = *w.lattice();
    let vals: Vec<f64> = w.values().iter().map(|z| if z.re < floor { floor } else { z.re }).collect();
    let e = -1.0 / (p - 1.0);
    let mut best: Option<f64> = None;
    for (level, corner) in all_cubes(&lattice) {
        let (mut s1, mut s2, mut count) = (0.0, 0.0, 0usize);
        for i in 0..lattice.len() {
            if in_cube(&lattice, level, &corner, &coords(&lattice, i)) {
                s1 += vals[i];
                s2 += vals[i].powf(e);
                count += 1;
            }
        }
        let c = count as f64;
        let val = (s1 / c) * (s2 / c).powf(p - 1.0);
        if best.is_none_or(|b| val > b) {
            best = Some(val);
        }
    }
    best.unwrap()
}

/// Sharp discrete Hoelder constant for `MC(alpha = d/s, p) <= c ||.||_s`:
/// `max_k (N_k / k^d)^{1/p - 1/s}`, `N_k` the lattice points in a ball of `k` cells.
pub fn mc_holder_constant(lattice: &Lattice, s: f64, p: f64) -> f64 {
    let d = lattice.dim();
    let mut best = 0.0f64;
    let mut k = 1i64;
    while k as usize <= lattice.n() / 2 {
        let mut count = 0usize;
        let range = -k..=k;
        match d {
            1 => count = (2 * k + 1) as usize,
            2 => {
                for x in range.clone() {
                    for y in range.clone() {
                        count += (x * x + y * y <= k * k) as usize;
                    }
                }
            }
            _ => {
                for x in range.clone() {
                    for y in range.clone() {
                        for z in range.clone() {
                            count += (x * x + y * y + z * z <= k * k) as usize;
                        }
                    }
                }
            }
        }
        best = best.max((count as f64 / (k as f64).powi(d as i32)).powf(1.0 / p - 1.0 / s));
        k *= 2;
    }
    best
}
