//! Compactly supported test potentials and seeded random ensembles.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lame::{BoxWell, Potential};
use crate::lattice::Lattice;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum PotentialSpec {
    /// `depth exp(-|x - c|^2 / (2 width^2))`, cut off at `radius`.
    Gaussian { depth: Complex64, width: f64, radius: f64, center: [f64; 3] },
    /// Constant `depth` on the cube `|x_a - c_a| < half_width`.
    SquareWell { depth: Complex64, half_width: f64, center: [f64; 3] },
    /// `depth max(|x - c|, h/2)^{-exponent}` inside `radius`.
    PowerCutoff { depth: Complex64, exponent: f64, radius: f64, center: [f64; 3] },
    Zero,
}

impl PotentialSpec {
    pub fn build(&self, lattice: Lattice) -> Result<Potential> {
        let d = lattice.dim();
        let dist = |x: &[f64], c: &[f64; 3]| x[..d].iter().zip(c).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
        match *self {
            PotentialSpec::Gaussian { depth, width, radius, center } => {
                positive("width", width)?;
                positive("radius", radius)?;
                Potential::from_fn(lattice, |x| {
                    let r = dist(x, &center);
                    if r < radius {
                        depth * (-r * r / (2.0 * width * width)).exp()
                    } else {
                        Complex64::new(0.0, 0.0)
                    }
                })
            }
            PotentialSpec::SquareWell { depth, half_width, center } => {
                positive("half_width", half_width)?;
                let mut half_widths = [0.0; 3];
                half_widths[..d].fill(half_width);
                Potential::boxes(lattice, vec![BoxWell { center, half_widths, depth }])
            }
            PotentialSpec::PowerCutoff { depth, exponent, radius, center } => {
                positive("radius", radius)?;
                if !(exponent > 0.0) {
                    return Err(Error::InvalidParameter { name: "exponent", reason: format!("need > 0, got {exponent}") });
                }
                let floor = lattice.spacing() / 2.0;
                Potential::from_fn(lattice, |x| {
                    let r = dist(x, &center);
                    if r < radius {
                        depth * r.max(floor).powf(-exponent)
                    } else {
                        Complex64::new(0.0, 0.0)
                    }
                })
            }
            PotentialSpec::Zero => Ok(Potential::zero(lattice)),
        }
    }

    /// The same profile with every length divided by `factor` and the depth
    /// multiplied by `factor^2`.
    pub fn rescaled(&self, factor: f64) -> Self {
        let s = factor * factor;
        match *self {
            PotentialSpec::Gaussian { depth, width, radius, center } => PotentialSpec::Gaussian {
                depth: depth * s,
                width: width / factor,
                radius: radius / factor,
                center: center.map(|c| c / factor),
            },
            PotentialSpec::SquareWell { depth, half_width, center } => PotentialSpec::SquareWell {
                depth: depth * s,
                half_width: half_width / factor,
                center: center.map(|c| c / factor),
            },
            PotentialSpec::PowerCutoff { depth, exponent, radius, center } => PotentialSpec::PowerCutoff {
                depth: depth * factor.powf(2.0 - exponent),
                exponent,
                radius: radius / factor,
                center: center.map(|c| c / factor),
            },
            PotentialSpec::Zero => PotentialSpec::Zero,
        }
    }
}

fn positive(name: &'static str, v: f64) -> Result<()> {
    if !(v > 0.0 && v.is_finite()) {
        return Err(Error::InvalidParameter { name, reason: format!("need a positive value, got {v}") });
    }
    Ok(())
}

/// Ranges for random ensemble members.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EnsembleOptions {
    pub min_depth: f64,
    pub max_depth: f64,
    /// Largest support radius; also bounds the center offset.
    pub max_radius: f64,
    /// Fraction of members whose depth phase is drawn from the whole circle.
    pub free_phase_fraction: f64,
    /// The other members have phase in `pi +- max_phase_offset`; the default
    /// `pi/2` is the attractive half plane `Re depth <= 0`.
    pub max_phase_offset: f64,
    /// Allow only real depths.
    pub real: bool,
    pub families: Vec<String>,
}

impl EnsembleOptions {
    pub fn for_lattice(lattice: &Lattice) -> Self {
        Self {
            min_depth: 0.5,
            max_depth: 4.0,
            max_radius: lattice.period() / 8.0,
            free_phase_fraction: 0.25,
            max_phase_offset: std::f64::consts::FRAC_PI_2,
            real: false,
            families: vec!["gaussian".into(), "square_well".into(), "power_cutoff".into()],
        }
    }
}

/// Member `index` of a seeded ensemble; independent of how many other
/// members are drawn.
pub fn ensemble_member(lattice: &Lattice, opts: &EnsembleOptions, seed: u64, index: usize) -> Result<PotentialSpec> {
    if opts.families.is_empty() {
        return Err(Error::EmptyEnsemble);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (index as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    let d = lattice.dim();
    let family = &opts.families[index % opts.families.len()];
    let magnitude = rng.random_range(opts.min_depth..=opts.max_depth);
    let depth = if opts.real {
        Complex64::new(if rng.random_bool(0.85) { -magnitude } else { magnitude }, 0.0)
    } else {
        let phase = if rng.random_bool(opts.free_phase_fraction.clamp(0.0, 1.0)) {
            rng.random_range(-std::f64::consts::PI..std::f64::consts::PI)
        } else {
            let off = opts.max_phase_offset.clamp(0.0, std::f64::consts::PI);
            std::f64::consts::PI + rng.random_range(-off..=off)
        };
        Complex64::from_polar(magnitude, phase)
    };
    let radius = rng.random_range(0.4 * opts.max_radius..=opts.max_radius);
    let mut center = [0.0; 3];
    for c in center.iter_mut().take(d) {
        *c = rng.random_range(-0.5..=0.5) * (opts.max_radius - radius);
    }
    Ok(match family.as_str() {
        "gaussian" => PotentialSpec::Gaussian { depth, width: radius / 4.0, radius, center },
        "square_well" => PotentialSpec::SquareWell { depth, half_width: radius / (d as f64).sqrt(), center },
        "power_cutoff" => {
            let exponent = rng.random_range(0.2..0.8);
            PotentialSpec::PowerCutoff { depth: depth * radius.powf(exponent), exponent, radius, center }
        }
        other => {
            return Err(Error::InvalidParameter { name: "families", reason: format!("unknown family `{other}`") })
        }
    })
}

pub fn random_ensemble(lattice: &Lattice, opts: &EnsembleOptions, seed: u64, count: usize) -> Result<Vec<PotentialSpec>> {
    (0..count).map(|i| ensemble_member(lattice, opts, seed, i)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn members_are_reproducible_and_supported_in_the_central_half() {
        let lat = Lattice::new(2, 32, 16.0).unwrap();
        let opts = EnsembleOptions::for_lattice(&lat);
        let a = random_ensemble(&lat, &opts, 42, 9).unwrap();
        let b = random_ensemble(&lat, &opts, 42, 9).unwrap();
        assert_eq!(a, b);
        assert_eq!(ensemble_member(&lat, &opts, 42, 5).unwrap(), a[5]);
        for spec in &a {
            let v = spec.build(lat).unwrap();
            for i in v.support_indices() {
                let x = lat.position(i);
                assert!(x[0].abs() <= lat.period() / 4.0 && x[1].abs() <= lat.period() / 4.0);
            }
        }
    }

    #[test]
    fn real_ensembles_have_real_depths() {
        let lat = Lattice::new(1, 64, 20.0).unwrap();
        let opts = EnsembleOptions { real: true, ..EnsembleOptions::for_lattice(&lat) };
        for spec in random_ensemble(&lat, &opts, 1, 12).unwrap() {
            assert!(spec.build(lat).unwrap().is_real());
        }
    }

    #[test]
    fn rescaled_gaussian_matches_grid_rescaling() {
        let lat = Lattice::new(1, 64, 20.0).unwrap();
        let spec = PotentialSpec::Gaussian { depth: Complex64::new(-2.0, 0.5), width: 1.0, radius: 3.0, center: [0.3, 0.0, 0.0] };
        let direct = spec.rescaled(2.0).build(lat.scaled(2.0).unwrap()).unwrap();
        let grid = spec.build(lat).unwrap().rescaled(2.0).unwrap();
        for (a, b) in direct.values().iter().zip(grid.values()) {
            assert!((a - b).norm() < 1e-12);
        }
    }
}
