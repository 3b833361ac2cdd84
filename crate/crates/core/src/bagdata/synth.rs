//! Synthetic feature-space bags with a controllable tumor-instance ratio.
//!
//! Normal instances are isotropic Gaussians around one of `normal_modes`
//! centres; tumor instances are isotropic Gaussians around a tumor centre
//! placed `separation` away from the origin. Centres depend only on
//! `cluster_seed`, so train and test sets drawn with different `seed`s
//! share the same geometry.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::bag::Bag;
use crate::error::{Error, Result};
use crate::numkernel::Tensor;
use crate::rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum RatioDistribution {
    #[default]
    Uniform,
    /// Uniform in log-space between the bounds; favours small tumors.
    LogUniform,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub d: usize,
    pub normal_bags: usize,
    pub tumor_bags: usize,
    pub bag_size_min: usize,
    pub bag_size_max: usize,
    pub tumor_ratio_min: f64,
    pub tumor_ratio_max: f64,
    pub ratio_distribution: RatioDistribution,
    /// Distance of the tumor centre from the origin.
    pub separation: f64,
    /// Per-coordinate standard deviation of every cluster.
    pub spread: f64,
    pub normal_modes: usize,
    /// Distance of each normal centre from the origin (ignored with one mode).
    pub mode_distance: f64,
    pub cluster_seed: u64,
    pub seed: u64,
    pub first_id: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            d: 32,
            normal_bags: 159,
            tumor_bags: 111,
            bag_size_min: 50,
            bag_size_max: 150,
            tumor_ratio_min: 0.005,
            tumor_ratio_max: 0.3,
            ratio_distribution: RatioDistribution::Uniform,
            separation: 3.0,
            spread: 1.0,
            normal_modes: 1,
            mode_distance: 0.0,
            cluster_seed: 0,
            seed: 0,
            first_id: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.d == 0 {
            return bad("d must be ≥ 1".into());
        }
        if self.bag_size_min == 0 || self.bag_size_min > self.bag_size_max {
            return bad(format!(
                "bag size range [{}, {}] must satisfy 1 ≤ min ≤ max",
                self.bag_size_min, self.bag_size_max
            ));
        }
        if !(self.tumor_ratio_min > 0.0
            && self.tumor_ratio_min <= self.tumor_ratio_max
            && self.tumor_ratio_max <= 1.0)
        {
            return bad(format!(
                "tumor ratio range [{}, {}] must satisfy 0 < min ≤ max ≤ 1 (a tumor bag needs a tumor instance)",
                self.tumor_ratio_min, self.tumor_ratio_max
            ));
        }
        if !(self.spread > 0.0 && self.spread.is_finite()) {
            return bad(format!("spread must be positive, got {}", self.spread));
        }
        if !self.separation.is_finite() || !self.mode_distance.is_finite() {
            return bad("cluster distances must be finite".into());
        }
        if self.normal_modes == 0 {
            return bad("normal_modes must be ≥ 1".into());
        }
        let last = self.first_id + (self.normal_bags + self.tumor_bags) as u64;
        if last > u64::from(u32::MAX) {
            return bad("bag ids exceed 32 bits".into());
        }
        Ok(())
    }

    fn unit_direction<R: Rng>(d: usize, rng: &mut R) -> Vec<f64> {
        let normal = Normal::new(0.0, 1.0).expect("unit normal");
        loop {
            let v: Vec<f64> = (0..d).map(|_| normal.sample(rng)).collect();
            let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if n > 1e-9 {
                return v.into_iter().map(|x| x / n).collect();
            }
        }
    }

    /// (normal centres, tumor centre)
    pub fn centres(&self) -> (Vec<Vec<f64>>, Vec<f64>) {
        let mut r = rng::stream(self.cluster_seed, "synth-centres");
        let tumor: Vec<f64> = Self::unit_direction(self.d, &mut r)
            .into_iter()
            .map(|x| x * self.separation)
            .collect();
        let normals = if self.normal_modes == 1 {
            vec![vec![0.0; self.d]]
        } else {
            (0..self.normal_modes)
                .map(|_| {
                    Self::unit_direction(self.d, &mut r)
                        .into_iter()
                        .map(|x| x * self.mode_distance)
                        .collect()
                })
                .collect()
        };
        (normals, tumor)
    }

    fn draw_ratio<R: Rng>(&self, rng: &mut R) -> f64 {
        let (lo, hi) = (self.tumor_ratio_min, self.tumor_ratio_max);
        if lo == hi {
            return lo;
        }
        match self.ratio_distribution {
            RatioDistribution::Uniform => rng.random_range(lo..=hi),
            RatioDistribution::LogUniform => rng.random_range(lo.ln()..=hi.ln()).exp(),
        }
    }
}

/// Generates `normal_bags + tumor_bags` bags. Label 1 marks tumor bags,
/// which carry `⌈ratio·n⌉` tumor instances at random positions.
/// Feature values are rounded to `f32` so the MBAG1 codec is lossless.
pub fn synth_generate(cfg: &SynthConfig) -> Result<Vec<Bag>> {
    cfg.validate()?;
    let (normal_centres, tumor_centre) = cfg.centres();
    let noise = Normal::new(0.0, cfg.spread).expect("validated spread");
    let mut r = rng::stream(cfg.seed, rng::DATA);

    let mut labels: Vec<u8> = std::iter::repeat_n(0u8, cfg.normal_bags)
        .chain(std::iter::repeat_n(1u8, cfg.tumor_bags))
        .collect();
    labels.shuffle(&mut r);

    let mut bags = Vec::with_capacity(labels.len());
    for (k, &label) in labels.iter().enumerate() {
        let n = r.random_range(cfg.bag_size_min..=cfg.bag_size_max);
        let mut tags = vec![0u8; n];
        if label == 1 {
            let ratio = cfg.draw_ratio(&mut r);
            let count = ((ratio * n as f64).ceil() as usize).clamp(1, n);
            for t in tags.iter_mut().take(count) {
                *t = 1;
            }
            tags.shuffle(&mut r);
        }
        let mut data = Vec::with_capacity(n * cfg.d);
        for &t in &tags {
            let centre = if t == 1 {
                &tumor_centre
            } else {
                &normal_centres[r.random_range(0..normal_centres.len())]
            };
            data.extend(centre.iter().map(|&c| f64::from((c + noise.sample(&mut r)) as f32)));
        }
        bags.push(Bag::new(
            cfg.first_id + k as u64,
            label,
            Tensor::matrix(n, cfg.d, data),
            Some(tags),
        )?);
    }
    Ok(bags)
}
