//! Synthetic two-group sparse functional data.
//!
//! Curves are built from a group mean function plus three fixed
//! trigonometric eigenfunctions weighted by random scores, observed at a
//! handful of uniform random times with Gaussian measurement error.
//! Contamination knobs add a +5 level shift to a fraction of curves and
//! extra i.i.d. noise to every observation.

use rand::Rng;
use rand_distr::{Distribution, Normal, StudentT};
use serde::{Deserialize, Serialize};

use crate::data::{FunctionalDataset, SparseCurve};
use crate::error::{Error, Result};
use crate::seed;

/// Which mean/eigenvalue structure separates the two groups.
///
/// A: different means and different variances; B: different means, same
/// variances; C: same mean, different variances.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SimModel {
    A,
    B,
    C,
}

/// Distribution of the functional principal component scores.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ScoreDist {
    Normal,
    /// Scaled Student t with 3 degrees of freedom; variance matches the
    /// eigenvalue exactly: xi = t3 * sqrt(lambda / 3).
    T3,
}

/// Group-level mean function choice.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MeanFn {
    TPlusSin,
    TPlusCos,
}

impl MeanFn {
    pub fn eval(self, t: f64) -> f64 {
        match self {
            MeanFn::TPlusSin => t + t.sin(),
            MeanFn::TPlusCos => t + t.cos(),
        }
    }
}

/// Mean function and eigenvalues for one group.
#[derive(Debug, Clone, Copy)]
pub struct GroupSpec {
    pub mean_fn: MeanFn,
    pub eigenvalues: [f64; 3],
}

impl SimModel {
    /// Group specifications for groups 0 and 1.
    pub fn groups(self) -> [GroupSpec; 2] {
        let low = [4.0, 2.0, 1.0];
        let high = [16.0, 8.0, 4.0];
        match self {
            SimModel::A => [
                GroupSpec { mean_fn: MeanFn::TPlusSin, eigenvalues: low },
                GroupSpec { mean_fn: MeanFn::TPlusCos, eigenvalues: high },
            ],
            SimModel::B => [
                GroupSpec { mean_fn: MeanFn::TPlusSin, eigenvalues: low },
                GroupSpec { mean_fn: MeanFn::TPlusCos, eigenvalues: low },
            ],
            SimModel::C => [
                GroupSpec { mean_fn: MeanFn::TPlusSin, eigenvalues: low },
                GroupSpec { mean_fn: MeanFn::TPlusSin, eigenvalues: high },
            ],
        }
    }
}

/// Full description of one data-generating scenario.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub model: SimModel,
    pub score_dist: ScoreDist,
    /// Fraction of curves shifted by +5 at all observations.
    pub rho_out: f64,
    /// Variance of extra noise added to every observation (0 = none).
    pub noise_var: f64,
    /// Curves per dataset; split equally into the two groups.
    pub n: usize,
    /// Per-curve observation count range, inclusive.
    pub n_obs_range: (usize, usize),
    pub domain: (f64, f64),
    /// Standard deviation of the baseline measurement error.
    pub measurement_sd: f64,
    pub seed: u64,
}

impl ScenarioConfig {
    pub fn new(model: SimModel, score_dist: ScoreDist, rho_out: f64, noise_var: f64) -> Self {
        ScenarioConfig {
            model,
            score_dist,
            rho_out,
            noise_var,
            n: 200,
            n_obs_range: (5, 10),
            domain: (0.0, 10.0),
            measurement_sd: 0.5,
            seed: 0,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    fn validate(&self) -> Result<()> {
        if self.n < 2 || self.n % 2 != 0 {
            return Err(Error::InvalidConfig(format!(
                "n must be even and >= 2, got {}",
                self.n
            )));
        }
        if self.n_obs_range.0 < 1 || self.n_obs_range.0 > self.n_obs_range.1 {
            return Err(Error::InvalidConfig(format!(
                "invalid observation range [{}, {}]",
                self.n_obs_range.0, self.n_obs_range.1
            )));
        }
        if !(0.0..=1.0).contains(&self.rho_out) {
            return Err(Error::InvalidConfig(format!(
                "rho_out {} outside [0, 1]",
                self.rho_out
            )));
        }
        if self.noise_var < 0.0 || self.measurement_sd < 0.0 {
            return Err(Error::InvalidConfig(
                "noise_var and measurement_sd must be nonnegative".into(),
            ));
        }
        Ok(())
    }
}

/// The nine benchmark scenarios.
pub fn scenario(id: usize) -> Result<ScenarioConfig> {
    use ScoreDist::{Normal, T3};
    use SimModel::{A, B, C};
    let (model, dist, rho, noise) = match id {
        1 => (A, Normal, 0.10, 0.0),
        2 => (A, T3, 0.10, 0.0),
        3 => (A, T3, 0.15, 0.1),
        4 => (B, T3, 0.0, 0.0),
        5 => (B, Normal, 0.0, 0.0),
        6 => (B, Normal, 0.10, 1.0),
        7 => (C, T3, 0.10, 0.1),
        8 => (C, Normal, 0.10, 0.1),
        9 => (C, T3, 0.0, 1.0),
        other => {
            return Err(Error::InvalidConfig(format!(
                "scenario id {other} outside 1..=9"
            )))
        }
    };
    Ok(ScenarioConfig::new(model, dist, rho, noise))
}

/// Orthonormal eigenfunctions on [0, 10]: cosines for odd k, sines for even.
pub fn eigenfunction(k: usize, t: f64) -> Result<f64> {
    let sqrt5 = 5f64.sqrt();
    match k {
        1 | 3 => Ok((std::f64::consts::PI * k as f64 * t / 5.0).cos() / sqrt5),
        2 => Ok((std::f64::consts::PI * k as f64 * t / 5.0).sin() / sqrt5),
        other => Err(Error::InvalidConfig(format!(
            "eigenfunction index {other} outside 1..=3"
        ))),
    }
}

/// Draw the three component scores for one curve of the given group.
pub fn draw_scores(group: &GroupSpec, dist: ScoreDist, rng: &mut impl Rng) -> [f64; 3] {
    let mut scores = [0.0; 3];
    match dist {
        ScoreDist::Normal => {
            for (k, s) in scores.iter_mut().enumerate() {
                let sd = group.eigenvalues[k].sqrt();
                *s = if sd > 0.0 {
                    Normal::new(0.0, sd).unwrap().sample(rng)
                } else {
                    0.0
                };
            }
        }
        ScoreDist::T3 => {
            let t3 = StudentT::new(3.0).unwrap();
            for (k, s) in scores.iter_mut().enumerate() {
                let scale = (group.eigenvalues[k] / 3.0).sqrt();
                *s = if scale > 0.0 { t3.sample(rng) * scale } else { 0.0 };
            }
        }
    }
    scores
}

/// Generate one dataset: n/2 curves per group, labels equal to group.
pub fn generate(config: &ScenarioConfig) -> Result<FunctionalDataset> {
    config.validate()?;
    let mut rng = seed::rng(config.seed, &[]);
    let groups = config.model.groups();
    let per_group = config.n / 2;
    let (lo, hi) = config.n_obs_range;
    let (t0, t1) = config.domain;

    let mut curves = Vec::with_capacity(config.n);
    for g in 0..2usize {
        let spec = &groups[g];
        for i in 0..per_group {
            let n_i = rng.random_range(lo..=hi);
            let mut times: Vec<f64>;
            loop {
                times = (0..n_i).map(|_| rng.random_range(t0..t1)).collect();
                times.sort_by(f64::total_cmp);
                if times.windows(2).all(|w| w[0] < w[1]) {
                    break;
                }
            }
            let scores = draw_scores(spec, config.score_dist, &mut rng);
            let noise = Normal::new(0.0, config.measurement_sd.max(f64::MIN_POSITIVE)).unwrap();
            let values: Vec<f64> = times
                .iter()
                .map(|&t| {
                    let mut z = spec.mean_fn.eval(t);
                    for k in 0..3 {
                        z += scores[k] * eigenfunction(k + 1, t).unwrap();
                    }
                    if config.measurement_sd > 0.0 {
                        z += noise.sample(&mut rng);
                    }
                    z
                })
                .collect();
            let id = format!("g{g}-{i:04}");
            curves.push(SparseCurve::new(id, times, values, Some(g as u8))?);
        }
    }

    // Outlier contamination: +5 shift on a random subset of curves, selected
    // across the pooled dataset.
    let n_out = (config.rho_out * config.n as f64).round() as usize;
    if n_out > 0 {
        let mut idx: Vec<usize> = (0..config.n).collect();
        use rand::seq::SliceRandom;
        idx.shuffle(&mut rng);
        for &i in idx.iter().take(n_out) {
            for v in &mut curves[i].values {
                *v += 5.0;
            }
        }
    }

    // Extra observation noise.
    if config.noise_var > 0.0 {
        let extra = Normal::new(0.0, config.noise_var.sqrt()).unwrap();
        for c in &mut curves {
            for v in &mut c.values {
                *v += extra.sample(&mut rng);
            }
        }
    }

    FunctionalDataset::new(curves, config.domain)
}
