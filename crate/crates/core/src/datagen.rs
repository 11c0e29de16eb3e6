//! Synthetic benchmark datasets.

use std::f64::consts::PI;

use ndarray::Array2;
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Uniform};
use serde::{Deserialize, Serialize};

use crate::data::{DataMatrix, LabelVector};
use crate::error::{Error, Result};

#[derive(Clone, Debug)]
pub struct LabeledDataset {
    pub x: DataMatrix,
    pub truth: LabelVector,
    pub name: String,
}

/// Generator selection as it appears in pipeline configs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SyntheticSpec {
    TwoMoons {
        #[serde(default = "default_moon_n")]
        n_per_moon: usize,
        #[serde(default = "default_moon_sd")]
        noise_sd: f64,
    },
    ThreeRings {
        #[serde(default = "default_ring_n")]
        n_per_ring: usize,
        #[serde(default = "default_radii")]
        radii: [f64; 3],
        #[serde(default = "default_ring_sd")]
        noise_sd: f64,
    },
    Syd4 {
        #[serde(default)]
        params: Syd4Params,
    },
}

fn default_moon_n() -> usize {
    500
}
fn default_moon_sd() -> f64 {
    0.08
}
fn default_ring_n() -> usize {
    650
}
fn default_radii() -> [f64; 3] {
    [1.0, 2.0, 3.0]
}
fn default_ring_sd() -> f64 {
    0.05
}

impl SyntheticSpec {
    /// 500 points per moon, noise sd 0.08.
    pub fn two_moons() -> Self {
        SyntheticSpec::TwoMoons {
            n_per_moon: default_moon_n(),
            noise_sd: default_moon_sd(),
        }
    }

    /// 650 points per ring at radii 1, 2, 3, noise sd 0.05.
    pub fn three_rings() -> Self {
        SyntheticSpec::ThreeRings {
            n_per_ring: default_ring_n(),
            radii: default_radii(),
            noise_sd: default_ring_sd(),
        }
    }

    /// 78×1300 with 20% corrupted samples.
    pub fn syd4() -> Self {
        SyntheticSpec::Syd4 {
            params: Syd4Params::default(),
        }
    }

    pub fn generate(&self, seed: u64) -> Result<LabeledDataset> {
        match self {
            SyntheticSpec::TwoMoons { n_per_moon, noise_sd } => gen_two_moons(*n_per_moon, *noise_sd, seed),
            SyntheticSpec::ThreeRings {
                n_per_ring,
                radii,
                noise_sd,
            } => gen_three_rings(*n_per_ring, *radii, *noise_sd, seed),
            SyntheticSpec::Syd4 { params } => gen_syd4_with(params, seed),
        }
    }

    pub fn clusters(&self) -> usize {
        match self {
            SyntheticSpec::TwoMoons { .. } => 2,
            SyntheticSpec::ThreeRings { .. } => 3,
            SyntheticSpec::Syd4 { .. } => 4,
        }
    }
}

fn noise(sd: f64) -> Result<Normal<f64>> {
    if !(sd >= 0.0 && sd.is_finite()) {
        return Err(Error::param("noise_sd", format!("must be >= 0, got {sd}")));
    }
    Ok(Normal::new(0.0, sd).expect("validated sd"))
}

/// Upper moon `(cos θ, sin θ)`, lower moon `(1 − cos θ, 0.5 − sin θ)`,
/// θ uniform on `[0, π]`, isotropic Gaussian noise.
pub fn gen_two_moons(n_per_moon: usize, noise_sd: f64, seed: u64) -> Result<LabeledDataset> {
    if n_per_moon == 0 {
        return Err(Error::param("n_per_moon", "must be >= 1"));
    }
    let jitter = noise(noise_sd)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = 2 * n_per_moon;
    let mut x = Array2::zeros((2, n));
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let t = rng.random_range(0.0..=PI);
        let lower = i >= n_per_moon;
        let (px, py) = if lower {
            (1.0 - t.cos(), 0.5 - t.sin())
        } else {
            (t.cos(), t.sin())
        };
        x[[0, i]] = px + jitter.sample(&mut rng);
        x[[1, i]] = py + jitter.sample(&mut rng);
        labels.push(lower as usize);
    }
    Ok(LabeledDataset {
        x: DataMatrix::new(x)?,
        truth: LabelVector::new(labels, 2)?,
        name: "two_moons".into(),
    })
}

/// Concentric circles with uniform angles and Gaussian radial noise.
pub fn gen_three_rings(n_per_ring: usize, radii: [f64; 3], noise_sd: f64, seed: u64) -> Result<LabeledDataset> {
    if n_per_ring == 0 {
        return Err(Error::param("n_per_ring", "must be >= 1"));
    }
    if !(radii[0] > 0.0 && radii[0] < radii[1] && radii[1] < radii[2]) {
        return Err(Error::param(
            "radii",
            format!("must be positive and strictly increasing, got {radii:?}"),
        ));
    }
    let jitter = noise(noise_sd)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = 3 * n_per_ring;
    let mut x = Array2::zeros((2, n));
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let ring = i / n_per_ring;
        let t = rng.random_range(0.0..2.0 * PI);
        let r = radii[ring] + jitter.sample(&mut rng);
        x[[0, i]] = r * t.cos();
        x[[1, i]] = r * t.sin();
        labels.push(ring);
    }
    Ok(LabeledDataset {
        x: DataMatrix::new(x)?,
        truth: LabelVector::new(labels, 3)?,
        name: "three_rings".into(),
    })
}

/// Knobs for the four-function dataset.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Syd4Params {
    pub samples: usize,
    pub dims: usize,
    /// Gaussian sd added to every sample.
    pub jitter_sd: f64,
    /// Share of samples receiving uniform corruption.
    pub corrupt_fraction: f64,
    /// Corruption is uniform on `[−a, a]`.
    pub corrupt_amplitude: f64,
}

impl Default for Syd4Params {
    fn default() -> Self {
        Syd4Params {
            samples: 1300,
            dims: 78,
            jitter_sd: 0.01,
            corrupt_fraction: 0.2,
            corrupt_amplitude: 1.0,
        }
    }
}

/// The four generating curves, `d` counted from 1.
pub fn syd4_curve(cluster: usize, d: f64) -> f64 {
    match cluster {
        0 => (4.0 * PI * d / 7.0).cos() + (PI * (d - 40.0)).cos(),
        1 => (PI * d / 4.0 - 4.0).sin() - (PI * d / 5.0).sin(),
        2 => 1.0 - (PI * d / 3.0).sin() * (PI * (d - 4.0) / 5.0).cos() * (PI * d).cos(),
        3 => (PI * d / 3.0).sin() * (PI * d / 6.0).cos() * (PI * (d - 12.0)).cos(),
        _ => panic!("cluster index {cluster} out of range"),
    }
}

pub fn gen_syd4(seed: u64) -> Result<LabeledDataset> {
    gen_syd4_with(&Syd4Params::default(), seed)
}

/// Four-function dataset with custom sizes and noise levels.
pub fn gen_syd4_with(p: &Syd4Params, seed: u64) -> Result<LabeledDataset> {
    Ok(syd4_corrupted(p, seed)?.0)
}

/// Dataset plus the sorted indices of corrupted samples.
pub fn syd4_corrupted(p: &Syd4Params, seed: u64) -> Result<(LabeledDataset, Vec<usize>)> {
    if p.samples < 4 || p.dims == 0 {
        return Err(Error::param("samples", "need at least 4 samples and 1 dimension"));
    }
    if !(0.0..=1.0).contains(&p.corrupt_fraction) {
        return Err(Error::param("corrupt_fraction", format!("must lie in [0, 1], got {}", p.corrupt_fraction)));
    }
    if !(p.corrupt_amplitude >= 0.0 && p.corrupt_amplitude.is_finite()) {
        return Err(Error::param("corrupt_amplitude", "must be >= 0"));
    }
    let jitter = noise(p.jitter_sd)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (n, dims) = (p.samples, p.dims);
    // Sizes as equal as possible, earlier clusters take the remainder.
    let labels: Vec<usize> = (0..4)
        .flat_map(|c| std::iter::repeat_n(c, n / 4 + usize::from(c < n % 4)))
        .collect();
    let mut x = Array2::from_shape_fn((dims, n), |(d, i)| syd4_curve(labels[i], (d + 1) as f64));
    x.mapv_inplace(|v| v + jitter.sample(&mut rng));

    let corrupt = (p.corrupt_fraction * n as f64).floor() as usize;
    let mut picked = sample(&mut rng, n, corrupt).into_vec();
    picked.sort_unstable();
    if p.corrupt_amplitude > 0.0 {
        let u = Uniform::new_inclusive(-p.corrupt_amplitude, p.corrupt_amplitude).expect("valid bounds");
        for &i in &picked {
            for d in 0..dims {
                x[[d, i]] += u.sample(&mut rng);
            }
        }
    }
    Ok((
        LabeledDataset {
            x: DataMatrix::new(x)?,
            truth: LabelVector::new(labels, 4)?,
            name: "syd4".into(),
        },
        picked,
    ))
}
