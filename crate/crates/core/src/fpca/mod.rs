//! Principal component analysis for sparse functional data.
//!
//! The estimation chain: pool all observations and smooth them into a mean
//! function; form raw covariances of residual pairs and smooth the
//! off-diagonal cloud into a covariance surface (its diagonal carries the
//! measurement-error variance, recovered separately); eigendecompose the
//! surface under trapezoid quadrature; finally predict each curve's
//! component scores as the Gaussian conditional expectation given its own
//! few observations.

pub mod smooth;

use nalgebra::{Cholesky, DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::data::{FunctionalDataset, SparseCurve};
use crate::error::{Error, Result};
use smooth::{local_linear_1d, local_linear_2d_grid, RawPoints};

/// Equally spaced evaluation points spanning a dataset's domain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationGrid {
    points: Vec<f64>,
}

impl EvaluationGrid {
    pub fn new(domain: (f64, f64), size: usize) -> Result<Self> {
        if size < 2 {
            return Err(Error::InvalidConfig(format!(
                "grid size {size} must be at least 2"
            )));
        }
        if !(domain.0 < domain.1) {
            return Err(Error::InvalidConfig(format!(
                "domain [{}, {}] is not a valid interval",
                domain.0, domain.1
            )));
        }
        let step = (domain.1 - domain.0) / (size - 1) as f64;
        let mut points: Vec<f64> = (0..size).map(|i| domain.0 + i as f64 * step).collect();
        points[size - 1] = domain.1;
        Ok(EvaluationGrid { points })
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn domain(&self) -> (f64, f64) {
        (self.points[0], self.points[self.points.len() - 1])
    }

    pub fn spacing(&self) -> f64 {
        (self.points[self.len() - 1] - self.points[0]) / (self.len() - 1) as f64
    }

    /// Trapezoid quadrature weights.
    pub fn quadrature_weights(&self) -> Vec<f64> {
        let d = self.spacing();
        let mut w = vec![d; self.len()];
        w[0] = d / 2.0;
        let last = self.len() - 1;
        w[last] = d / 2.0;
        w
    }

    fn contains(&self, t: f64) -> bool {
        let (lo, hi) = self.domain();
        let eps = 1e-9 * (hi - lo);
        t >= lo - eps && t <= hi + eps
    }

    /// Linear interpolation of grid-sampled values at `t` (must be in domain).
    pub fn interpolate(&self, values: &[f64], t: f64) -> f64 {
        debug_assert_eq!(values.len(), self.len());
        let (lo, hi) = self.domain();
        let t = t.clamp(lo, hi);
        let step = self.spacing();
        let pos = (t - lo) / step;
        let j = (pos.floor() as usize).min(self.len() - 2);
        let frac = pos - j as f64;
        values[j] * (1.0 - frac) + values[j + 1] * frac
    }
}

/// Smoothed mean function on a grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeanFunction {
    pub grid: EvaluationGrid,
    pub values: Vec<f64>,
    pub bandwidth: f64,
}

impl MeanFunction {
    pub fn eval(&self, t: f64) -> f64 {
        self.grid.interpolate(&self.values, t)
    }
}

/// Smoothed covariance surface on a grid (row-major, symmetric).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovarianceSurface {
    pub grid: EvaluationGrid,
    /// Row-major G x G values.
    pub values: Vec<f64>,
    pub bandwidth: f64,
}

impl CovarianceSurface {
    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.grid.len() + j]
    }
}

/// Fitted model: mean, leading eigenpairs, noise variance and chosen
/// component count.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FpcaModel {
    pub mean: MeanFunction,
    /// Nonincreasing, strictly positive; length `k`.
    pub eigenvalues: Vec<f64>,
    /// Grid-sampled eigenfunctions, one inner vector per component.
    pub eigenfunctions: Vec<Vec<f64>>,
    pub noise_variance: f64,
    pub k: usize,
    pub pve_threshold: f64,
    /// Fraction of variance explained by the `k` retained components.
    pub achieved_pve: f64,
}

/// Conditional-expectation component scores for one curve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreVector(pub Vec<f64>);

impl ScoreVector {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Estimation settings. Bandwidths default to fixed fractions of the domain
/// length (10% for the mean, 25% for the covariance surface).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FpcaConfig {
    pub grid_size: usize,
    /// Absolute bandwidth for the mean smoother; `None` = 10% of the domain.
    pub mean_bandwidth: Option<f64>,
    /// Absolute bandwidth for the covariance smoother; `None` = 25%.
    pub cov_bandwidth: Option<f64>,
    pub pve_threshold: f64,
    pub k_min: Option<usize>,
    pub k_max: Option<usize>,
}

impl Default for FpcaConfig {
    fn default() -> Self {
        FpcaConfig {
            grid_size: 51,
            mean_bandwidth: None,
            cov_bandwidth: None,
            pve_threshold: 0.99,
            k_min: None,
            k_max: None,
        }
    }
}

impl FpcaConfig {
    fn resolve_bandwidths(&self, domain: (f64, f64)) -> (f64, f64) {
        let len = domain.1 - domain.0;
        (
            self.mean_bandwidth.unwrap_or(0.10 * len),
            self.cov_bandwidth.unwrap_or(0.25 * len),
        )
    }
}

/// Local linear smooth of all pooled observations, evaluated on the grid.
pub fn estimate_mean(
    data: &FunctionalDataset,
    grid: &EvaluationGrid,
    bandwidth: f64,
) -> Result<MeanFunction> {
    if bandwidth <= 0.0 {
        return Err(Error::InvalidConfig(format!(
            "mean bandwidth {bandwidth} must be positive"
        )));
    }
    let n_pooled = data.n_obs();
    if n_pooled < 2 {
        return Err(Error::InsufficientData(format!(
            "mean estimation needs at least 2 pooled observations, got {n_pooled}"
        )));
    }
    let mut pairs: Vec<(f64, f64)> = Vec::with_capacity(n_pooled);
    for c in &data.curves {
        pairs.extend(c.times.iter().copied().zip(c.values.iter().copied()));
    }
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    let (ts, ys): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
    let values = local_linear_1d(&ts, &ys, grid.points(), bandwidth)?;
    Ok(MeanFunction {
        grid: grid.clone(),
        values,
        bandwidth,
    })
}

/// Smooth the off-diagonal raw covariances into a surface and recover the
/// measurement-error variance from the diagonal.
///
/// Raw covariances are residual products over all ordered within-curve pairs.
/// Products with `j != l` feed the planar smoother (the diagonal carries the
/// noise); squared residuals (`j == l`) feed a separate one-dimensional
/// smooth `V(t)`, and `sigma^2 = max(0, mean(V - D))` over the central 80%
/// of the grid, where `D(t)` re-estimates the noise-free diagonal from the
/// off-diagonal cloud with a rotated fit that is quadratic across the
/// diagonal (a plain planar fit is biased low along the surface's ridge).
pub fn estimate_covariance(
    data: &FunctionalDataset,
    mean: &MeanFunction,
    bandwidth: f64,
) -> Result<(CovarianceSurface, f64)> {
    if bandwidth <= 0.0 {
        return Err(Error::InvalidConfig(format!(
            "covariance bandwidth {bandwidth} must be positive"
        )));
    }
    if !data.curves.iter().any(|c| c.len() >= 2) {
        return Err(Error::CovarianceInestimable);
    }
    let grid = &mean.grid;

    let mut off_diag: Vec<(f64, f64, f64)> = Vec::new();
    let mut diag: Vec<(f64, f64)> = Vec::new();
    for c in &data.curves {
        let resid: Vec<f64> = c
            .times
            .iter()
            .zip(&c.values)
            .map(|(&t, &v)| v - mean.eval(t))
            .collect();
        for j in 0..c.len() {
            diag.push((c.times[j], resid[j] * resid[j]));
            for l in 0..c.len() {
                if j != l {
                    off_diag.push((c.times[j], c.times[l], resid[j] * resid[l]));
                }
            }
        }
    }

    let points = RawPoints::from_unsorted(off_diag);
    let raw_surface = local_linear_2d_grid(&points, grid.points(), bandwidth)?;

    // Symmetrize: (G + G^T) / 2.
    let g = grid.len();
    let mut values = vec![0.0; g * g];
    for i in 0..g {
        for j in 0..g {
            values[i * g + j] = 0.5 * (raw_surface[i * g + j] + raw_surface[j * g + i]);
        }
    }
    let surface = CovarianceSurface {
        grid: grid.clone(),
        values,
        bandwidth,
    };

    // The noise-variance contrast uses a tighter bandwidth than the surface:
    // the wide surface bandwidth is right for the eigenproblem but lets
    // heavy-tailed raw covariances (outlier-shifted curves) leak a positive
    // bias into V - D.
    let sigma_bw = 0.3 * bandwidth;
    diag.sort_by(|a, b| a.0.total_cmp(&b.0));
    let (dts, dvs): (Vec<f64>, Vec<f64>) = diag.into_iter().unzip();
    let v_hat = local_linear_1d(&dts, &dvs, grid.points(), sigma_bw)?;
    let d_hat = smooth::diagonal_quadratic(&points, grid.points(), sigma_bw)?;

    let (lo, hi) = grid.domain();
    let margin = 0.1 * (hi - lo);
    let mut acc = 0.0;
    let mut count = 0usize;
    for (i, &t) in grid.points().iter().enumerate() {
        if t >= lo + margin && t <= hi - margin {
            acc += v_hat[i] - d_hat[i];
            count += 1;
        }
    }
    let noise_variance = if count > 0 { (acc / count as f64).max(0.0) } else { 0.0 };
    Ok((surface, noise_variance))
}

/// Smallest component count whose cumulative eigenvalue share reaches the
/// threshold, optionally clamped to `[k_min, k_max]`.
pub fn select_k(
    eigenvalues: &[f64],
    pve_threshold: f64,
    k_min: Option<usize>,
    k_max: Option<usize>,
) -> usize {
    let total: f64 = eigenvalues.iter().sum();
    let mut k = eigenvalues.len();
    if total > 0.0 {
        let mut cum = 0.0;
        for (m, &ev) in eigenvalues.iter().enumerate() {
            cum += ev;
            if cum / total >= pve_threshold {
                k = m + 1;
                break;
            }
        }
    }
    if let Some(hi) = k_max {
        k = k.min(hi.max(1));
    }
    if let Some(lo) = k_min {
        k = k.max(lo.max(1));
    }
    k.min(eigenvalues.len()).max(1)
}

/// Discrete eigendecomposition of the surface under trapezoid quadrature.
///
/// Solves the symmetric problem `W^{1/2} G W^{1/2} u = lambda u`, maps back
/// via `phi = W^{-1/2} u` (unit quadrature norm), drops nonpositive
/// eigenvalues, and fixes each sign so the entry of largest magnitude is
/// positive. Returns all retained eigenpairs plus the selected count.
pub fn eigendecompose(
    surface: &CovarianceSurface,
    pve_threshold: f64,
    k_min: Option<usize>,
    k_max: Option<usize>,
) -> Result<(Vec<f64>, Vec<Vec<f64>>, usize)> {
    if !(pve_threshold > 0.0 && pve_threshold <= 1.0) {
        return Err(Error::InvalidConfig(format!(
            "pve threshold {pve_threshold} outside (0, 1]"
        )));
    }
    let g = surface.grid.len();
    let weights = surface.grid.quadrature_weights();
    let sqrt_w: Vec<f64> = weights.iter().map(|w| w.sqrt()).collect();

    let b = DMatrix::from_fn(g, g, |i, j| {
        // Symmetrize once more so the eigensolver sees an exactly symmetric
        // input regardless of how the surface was produced.
        let v = 0.5 * (surface.at(i, j) + surface.at(j, i));
        sqrt_w[i] * v * sqrt_w[j]
    });
    let eig = b.symmetric_eigen();

    let mut order: Vec<usize> = (0..g).collect();
    order.sort_by(|&a, &b2| eig.eigenvalues[b2].total_cmp(&eig.eigenvalues[a]));

    // Nonpositive eigenvalues are discarded; so is the numerical-rank tail
    // (machine-noise positives) just below it.
    let lambda_max = eig.eigenvalues[order[0]];
    let floor = lambda_max * 1e-12;

    let mut eigenvalues = Vec::new();
    let mut eigenfunctions = Vec::new();
    for &idx in &order {
        let lambda = eig.eigenvalues[idx];
        if lambda <= floor.max(0.0) {
            continue;
        }
        let mut phi: Vec<f64> = (0..g)
            .map(|i| eig.eigenvectors[(i, idx)] / sqrt_w[i])
            .collect();
        // Unit norm under quadrature (already close; renormalize exactly).
        let norm2: f64 = phi
            .iter()
            .zip(&weights)
            .map(|(p, w)| p * p * w)
            .sum();
        let scale = norm2.sqrt();
        if !(scale > 0.0) {
            continue;
        }
        for p in phi.iter_mut() {
            *p /= scale;
        }
        let max_idx = phi
            .iter()
            .enumerate()
            .max_by(|a, b2| a.1.abs().total_cmp(&b2.1.abs()))
            .map(|(i, _)| i)
            .unwrap();
        if phi[max_idx] < 0.0 {
            for p in phi.iter_mut() {
                *p = -*p;
            }
        }
        eigenvalues.push(lambda);
        eigenfunctions.push(phi);
    }

    if eigenvalues.is_empty() {
        return Err(Error::DegenerateCovariance);
    }
    let k = select_k(&eigenvalues, pve_threshold, k_min, k_max);
    Ok((eigenvalues, eigenfunctions, k))
}

/// Conditional-expectation score estimates for one curve.
///
/// `xi_k = lambda_k phi_k(t)^T Sigma^{-1} (z - mu(t))` with
/// `Sigma = Phi Lambda Phi^T + sigma^2 I`; when `sigma^2 = 0` a ridge of
/// `1e-8 tr(Sigma)/n` makes the solve well posed.
pub fn pace_scores(model: &FpcaModel, curve: &SparseCurve) -> Result<ScoreVector> {
    let grid = &model.mean.grid;
    let (lo, hi) = grid.domain();
    for &t in &curve.times {
        if !grid.contains(t) {
            return Err(Error::Extrapolation { time: t, lo, hi });
        }
    }
    let n = curve.len();
    let k = model.k;

    let mut phi = DMatrix::zeros(n, k);
    for (j, &t) in curve.times.iter().enumerate() {
        for c in 0..k {
            phi[(j, c)] = grid.interpolate(&model.eigenfunctions[c], t);
        }
    }
    let centered = DVector::from_fn(n, |j, _| curve.values[j] - model.mean.eval(curve.times[j]));

    let mut sigma = DMatrix::zeros(n, n);
    for c in 0..k {
        let lambda = model.eigenvalues[c];
        for a in 0..n {
            for b in 0..n {
                sigma[(a, b)] += lambda * phi[(a, c)] * phi[(b, c)];
            }
        }
    }
    for a in 0..n {
        sigma[(a, a)] += model.noise_variance;
    }
    if model.noise_variance == 0.0 {
        let ridge = 1e-8 * sigma.trace() / n as f64;
        for a in 0..n {
            sigma[(a, a)] += ridge;
        }
    }

    let chol = Cholesky::new(sigma)
        .ok_or_else(|| Error::Numerical("curve covariance matrix is not positive definite".into()))?;
    let solved = chol.solve(&centered);

    let mut scores = vec![0.0; k];
    for c in 0..k {
        let mut acc = 0.0;
        for j in 0..n {
            acc += phi[(j, c)] * solved[j];
        }
        scores[c] = model.eigenvalues[c] * acc;
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::Numerical("non-finite score estimate".into()));
    }
    Ok(ScoreVector(scores))
}

/// End-to-end fit: mean, covariance, noise variance and eigenpairs.
pub fn fit_fpca(data: &FunctionalDataset, config: &FpcaConfig) -> Result<FpcaModel> {
    if data.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "need at least 2 curves, got {}",
            data.len()
        )));
    }
    let grid = EvaluationGrid::new(data.domain, config.grid_size)?;
    let (mean_bw, cov_bw) = config.resolve_bandwidths(data.domain);
    let mean = estimate_mean(data, &grid, mean_bw)?;
    let (surface, noise_variance) = estimate_covariance(data, &mean, cov_bw)?;
    let (eigenvalues, eigenfunctions, k) =
        eigendecompose(&surface, config.pve_threshold, config.k_min, config.k_max)?;

    let total: f64 = eigenvalues.iter().sum();
    let achieved_pve = eigenvalues.iter().take(k).sum::<f64>() / total;
    Ok(FpcaModel {
        mean,
        eigenvalues: eigenvalues[..k].to_vec(),
        eigenfunctions: eigenfunctions[..k].to_vec(),
        noise_variance,
        k,
        pve_threshold: config.pve_threshold,
        achieved_pve,
    })
}

impl FpcaModel {
    /// Debug dump as CSV blocks with section headers.
    pub fn write_dump(&self, out: &mut impl std::io::Write) -> std::io::Result<()> {
        writeln!(out, "# grid")?;
        for t in self.mean.grid.points() {
            writeln!(out, "{t}")?;
        }
        writeln!(out, "# mean")?;
        for v in &self.mean.values {
            writeln!(out, "{v}")?;
        }
        writeln!(out, "# eigenvalues")?;
        for ev in &self.eigenvalues {
            writeln!(out, "{ev}")?;
        }
        writeln!(out, "# eigenfunctions")?;
        for i in 0..self.mean.grid.len() {
            let row: Vec<String> = self
                .eigenfunctions
                .iter()
                .map(|phi| phi[i].to_string())
                .collect();
            writeln!(out, "{}", row.join(","))?;
        }
        writeln!(out, "# noise_variance")?;
        writeln!(out, "{}", self.noise_variance)?;
        writeln!(out, "# selected_k")?;
        writeln!(out, "{}", self.k)?;
        writeln!(out, "# achieved_pve")?;
        writeln!(out, "{}", self.achieved_pve)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::SparseCurve;
    use crate::simgen::{self, eigenfunction, ScenarioConfig, ScoreDist, SimModel};
    use rand::Rng;
    use rand_distr::{Distribution, Normal};

    fn grid_0_10(size: usize) -> EvaluationGrid {
        EvaluationGrid::new((0.0, 10.0), size).unwrap()
    }

    #[test]
    fn grid_interpolation_is_exact_on_nodes_and_linear_between() {
        let grid = grid_0_10(11);
        let values: Vec<f64> = grid.points().iter().map(|t| 3.0 * t - 1.0).collect();
        assert_eq!(grid.interpolate(&values, 4.0), 11.0);
        assert!((grid.interpolate(&values, 4.5) - 12.5).abs() < 1e-12);
        assert_eq!(grid.interpolate(&values, 10.0), 29.0);
    }

    #[test]
    fn mean_of_constant_curves_is_constant() {
        let curves: Vec<SparseCurve> = (0..5)
            .map(|i| {
                SparseCurve::new(
                    format!("c{i}"),
                    vec![i as f64, i as f64 + 3.0, i as f64 + 5.0],
                    vec![7.5; 3],
                    None,
                )
                .unwrap()
            })
            .collect();
        let ds = FunctionalDataset::new(curves, (0.0, 10.0)).unwrap();
        let grid = grid_0_10(21);
        let mean = estimate_mean(&ds, &grid, 1.0).unwrap();
        for v in &mean.values {
            assert!((v - 7.5).abs() < 1e-10);
        }
    }

    #[test]
    fn mean_recovers_linear_trend_from_noisy_curves() {
        // Z(t) = t + N(0, 0.01), 200 sparse curves.
        let mut rng = crate::seed::rng(21, &[3]);
        let noise = Normal::new(0.0, 0.1).unwrap();
        let curves: Vec<SparseCurve> = (0..200)
            .map(|i| {
                let n = rng.random_range(5..=10);
                let mut ts: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..10.0)).collect();
                ts.sort_by(f64::total_cmp);
                ts.dedup();
                let vs: Vec<f64> = ts.iter().map(|t| t + noise.sample(&mut rng)).collect();
                SparseCurve::new(format!("c{i}"), ts, vs, None).unwrap()
            })
            .collect();
        let ds = FunctionalDataset::new(curves, (0.0, 10.0)).unwrap();
        let grid = grid_0_10(51);
        let mean = estimate_mean(&ds, &grid, 1.0).unwrap();
        let max_dev = grid
            .points()
            .iter()
            .zip(&mean.values)
            .map(|(t, v)| (v - t).abs())
            .fold(0.0f64, f64::max);
        assert!(max_dev < 0.1, "max deviation {max_dev}");
    }

    #[test]
    fn mean_rejects_single_pooled_point() {
        let ds = FunctionalDataset::new(
            vec![SparseCurve::new("a", vec![1.0], vec![2.0], None).unwrap()],
            (0.0, 10.0),
        )
        .unwrap();
        assert!(matches!(
            estimate_mean(&ds, &grid_0_10(11), 1.0),
            Err(Error::InsufficientData(_))
        ));
    }

    #[test]
    fn covariance_surface_is_exactly_symmetric() {
        let cfg = ScenarioConfig::new(SimModel::A, ScoreDist::Normal, 0.0, 0.0).with_seed(5);
        let ds = simgen::generate(&cfg).unwrap();
        let grid = grid_0_10(31);
        let mean = estimate_mean(&ds, &grid, 1.0).unwrap();
        let (surface, _) = estimate_covariance(&ds, &mean, 1.5).unwrap();
        for i in 0..grid.len() {
            for j in 0..grid.len() {
                assert_eq!(surface.at(i, j), surface.at(j, i));
            }
        }
    }

    #[test]
    fn noise_variance_near_zero_for_noiseless_data() {
        // Single-dataset draws of sigma^2 are volatile (curve-level score
        // noise enters the diagonal contrast), so check the estimator's
        // level over a handful of seeds.
        let mut sum = 0.0;
        let seeds = [17u64, 18, 19, 20, 21, 22];
        for &seed in &seeds {
            let mut cfg =
                ScenarioConfig::new(SimModel::A, ScoreDist::Normal, 0.0, 0.0).with_seed(seed);
            cfg.measurement_sd = 0.0;
            let ds = simgen::generate(&cfg).unwrap();
            // Group 0 only, per the construction with known diagonal.
            let curves: Vec<SparseCurve> = ds
                .curves
                .iter()
                .filter(|c| c.label == Some(0))
                .cloned()
                .collect();
            let ds0 = FunctionalDataset::new(curves, ds.domain).unwrap();
            let grid = grid_0_10(51);
            let mean = estimate_mean(&ds0, &grid, 1.0).unwrap();
            let (_, sigma2) = estimate_covariance(&ds0, &mean, 2.5).unwrap();
            sum += sigma2;
        }
        let avg = sum / seeds.len() as f64;
        assert!(avg < 0.05, "mean sigma^2 = {avg}");
    }

    #[test]
    fn noise_variance_recovered_for_scenario_1() {
        let mut sum = 0.0;
        let seeds = [29u64, 30, 31, 32, 33, 34, 35, 36];
        for &seed in &seeds {
            let cfg = simgen::scenario(1).unwrap().with_seed(seed);
            let ds = simgen::generate(&cfg).unwrap();
            let grid = grid_0_10(51);
            let mean = estimate_mean(&ds, &grid, 1.0).unwrap();
            let (_, sigma2) = estimate_covariance(&ds, &mean, 2.5).unwrap();
            sum += sigma2;
        }
        let avg = sum / seeds.len() as f64;
        assert!(
            (0.15..=0.40).contains(&avg),
            "mean sigma^2 = {avg}, true value 0.25"
        );
    }

    /// Surface built exactly from the three benchmark eigenfunctions.
    fn synthetic_surface(eigenvalues: [f64; 3], size: usize) -> CovarianceSurface {
        let grid = grid_0_10(size);
        let g = grid.len();
        let mut values = vec![0.0; g * g];
        for i in 0..g {
            for j in 0..g {
                let (s, t) = (grid.points()[i], grid.points()[j]);
                let mut acc = 0.0;
                for k in 1..=3 {
                    acc += eigenvalues[k - 1]
                        * eigenfunction(k, s).unwrap()
                        * eigenfunction(k, t).unwrap();
                }
                values[i * g + j] = acc;
            }
        }
        CovarianceSurface {
            grid,
            values,
            bandwidth: 1.0,
        }
    }

    #[test]
    fn eigendecompose_recovers_synthetic_spectrum() {
        let surface = synthetic_surface([16.0, 8.0, 4.0], 51);
        let (evals, efuns, k) = eigendecompose(&surface, 0.99, None, None).unwrap();
        assert_eq!(k, 3);
        for (i, target) in [16.0, 8.0, 4.0].iter().enumerate() {
            let rel = (evals[i] - target).abs() / target;
            assert!(rel < 0.02, "lambda_{} = {} vs {}", i + 1, evals[i], target);
        }
        let grid = grid_0_10(51);
        for (c, phi_hat) in efuns.iter().take(3).enumerate() {
            let truth: Vec<f64> = grid
                .points()
                .iter()
                .map(|&t| eigenfunction(c + 1, t).unwrap())
                .collect();
            let sup_plus = phi_hat
                .iter()
                .zip(&truth)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0f64, f64::max);
            let sup_minus = phi_hat
                .iter()
                .zip(&truth)
                .map(|(a, b)| (a + b).abs())
                .fold(0.0f64, f64::max);
            assert!(
                sup_plus.min(sup_minus) < 0.02,
                "phi_{} sup error {}",
                c + 1,
                sup_plus.min(sup_minus)
            );
        }
    }

    #[test]
    fn select_k_matches_cumulative_pve_arithmetic() {
        // 16/28 = 0.571, 24/28 = 0.857, 28/28 = 1.0.
        assert_eq!(select_k(&[16.0, 8.0, 4.0], 0.99, None, None), 3);
        assert_eq!(select_k(&[16.0, 8.0, 4.0], 0.85, None, None), 2);
        assert_eq!(select_k(&[16.0, 8.0, 4.0], 0.5, None, None), 1);
        // Clamping.
        assert_eq!(select_k(&[16.0, 8.0, 4.0], 0.5, Some(2), None), 2);
        assert_eq!(select_k(&[16.0, 8.0, 4.0], 0.99, None, Some(2)), 2);
    }

    #[test]
    fn rank_one_surface_selects_single_component() {
        let surface = synthetic_surface([9.0, 0.0, 0.0], 31);
        for threshold in [0.1, 0.5, 0.99, 1.0] {
            let (_, _, k) = eigendecompose(&surface, threshold, None, None).unwrap();
            assert_eq!(k, 1, "threshold {threshold}");
        }
    }

    #[test]
    fn negative_surface_is_degenerate() {
        let grid = grid_0_10(11);
        let g = grid.len();
        let mut values = vec![0.0; g * g];
        for i in 0..g {
            values[i * g + i] = -1.0;
        }
        let surface = CovarianceSurface {
            grid,
            values,
            bandwidth: 1.0,
        };
        assert!(matches!(
            eigendecompose(&surface, 0.99, None, None),
            Err(Error::DegenerateCovariance)
        ));
    }

    /// Model with parameters injected directly (no estimation).
    fn injected_model(
        eigenvalues: Vec<f64>,
        eigenfunctions: Vec<Vec<f64>>,
        noise_variance: f64,
        grid: EvaluationGrid,
        mean: Vec<f64>,
    ) -> FpcaModel {
        let k = eigenvalues.len();
        FpcaModel {
            mean: MeanFunction {
                grid,
                values: mean,
                bandwidth: 1.0,
            },
            eigenvalues,
            eigenfunctions,
            noise_variance,
            k,
            pve_threshold: 0.99,
            achieved_pve: 1.0,
        }
    }

    #[test]
    fn single_observation_blup_closed_form() {
        // K=1, mu = 0, lambda = 1, sigma^2 = 1, phi(t0) = 1, Z = 2
        // => xi = 1 * 1 * (1 + 1)^{-1} * 2 = 1.
        let grid = grid_0_10(11);
        let model = injected_model(
            vec![1.0],
            vec![vec![1.0; 11]],
            1.0,
            grid,
            vec![0.0; 11],
        );
        let curve = SparseCurve::new("x", vec![3.0], vec![2.0], None).unwrap();
        let scores = pace_scores(&model, &curve).unwrap();
        assert!((scores.0[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn centered_curve_has_zero_scores() {
        let grid = grid_0_10(11);
        let mean: Vec<f64> = grid.points().iter().map(|t| t + t.sin()).collect();
        let phi: Vec<f64> = grid.points().iter().map(|t| (t / 3.0).cos()).collect();
        let model = injected_model(vec![2.0], vec![phi], 0.5, grid, mean);
        let curve = SparseCurve::new(
            "x",
            vec![1.0, 4.0, 8.0],
            vec![1.0 + 1.0f64.sin(), 4.0 + 4.0f64.sin(), 8.0 + 8.0f64.sin()],
            None,
        )
        .unwrap();
        let scores = pace_scores(&model, &curve).unwrap();
        assert!(scores.0[0].abs() < 1e-10);
    }

    #[test]
    fn blup_matches_information_form_identity() {
        // Same conditional mean through the Woodbury-dual route:
        // E[xi | z] = (Lambda^{-1} + Phi^T Phi / s2)^{-1} Phi^T (z - mu) / s2.
        let grid = grid_0_10(21);
        let mut rng = crate::seed::rng(77, &[1]);
        let phi1: Vec<f64> = grid.points().iter().map(|t| (t * 0.7).sin() + 0.2).collect();
        let phi2: Vec<f64> = grid.points().iter().map(|t| (t * 0.3).cos() - 0.1).collect();
        let mean: Vec<f64> = grid.points().iter().map(|t| 0.5 * t).collect();
        let s2 = 0.8;
        let lambdas = [3.0, 1.2];
        let model = injected_model(
            lambdas.to_vec(),
            vec![phi1, phi2],
            s2,
            grid.clone(),
            mean,
        );
        let times = vec![0.5, 2.0, 4.4, 7.1, 9.5];
        let values: Vec<f64> = times.iter().map(|_| rng.random_range(-3.0..3.0)).collect();
        let curve = SparseCurve::new("x", times.clone(), values.clone(), None).unwrap();
        let scores = pace_scores(&model, &curve).unwrap();

        let n = times.len();
        let phi = DMatrix::from_fn(n, 2, |i, j| {
            grid.interpolate(&model.eigenfunctions[j], times[i])
        });
        let centered = DVector::from_fn(n, |i, _| values[i] - model.mean.eval(times[i]));
        let mut info = phi.transpose() * &phi / s2;
        for j in 0..2 {
            info[(j, j)] += 1.0 / lambdas[j];
        }
        let rhs = phi.transpose() * centered / s2;
        let oracle = info.lu().solve(&rhs).unwrap();
        for j in 0..2 {
            assert!(
                (scores.0[j] - oracle[j]).abs() < 1e-8,
                "component {j}: {} vs {}",
                scores.0[j],
                oracle[j]
            );
        }
    }

    #[test]
    fn blup_matches_monte_carlo_conditional_expectation() {
        // Importance sampling from the prior: E[xi | z] as a weighted mean
        // over 10^6 prior draws with Gaussian likelihood weights.
        let grid = grid_0_10(21);
        let phi1: Vec<f64> = grid.points().iter().map(|t| (t * 0.6).sin()).collect();
        let phi2: Vec<f64> = grid.points().iter().map(|t| (t * 0.25).cos()).collect();
        let s2 = 1.0;
        let lambdas = [2.0, 0.7];
        let model = injected_model(
            lambdas.to_vec(),
            vec![phi1, phi2],
            s2,
            grid.clone(),
            vec![0.0; grid.len()],
        );
        let times = vec![1.0, 3.0, 5.0, 7.0, 9.0];
        let values = vec![0.8, -0.4, 1.3, 0.2, -0.9];
        let curve = SparseCurve::new("x", times.clone(), values.clone(), None).unwrap();
        let blup = pace_scores(&model, &curve).unwrap();

        let phi: Vec<[f64; 2]> = times
            .iter()
            .map(|&t| {
                [
                    grid.interpolate(&model.eigenfunctions[0], t),
                    grid.interpolate(&model.eigenfunctions[1], t),
                ]
            })
            .collect();
        let mut rng = crate::seed::rng(2024, &[6]);
        let sd = [lambdas[0].sqrt(), lambdas[1].sqrt()];
        let normal = Normal::new(0.0, 1.0).unwrap();
        let draws = 1_000_000usize;
        let mut wsum = 0.0f64;
        let mut wxi = [0.0f64; 2];
        for _ in 0..draws {
            let xi = [normal.sample(&mut rng) * sd[0], normal.sample(&mut rng) * sd[1]];
            let mut log_lik = 0.0;
            for (j, f) in phi.iter().enumerate() {
                let pred = xi[0] * f[0] + xi[1] * f[1];
                let r = values[j] - pred;
                log_lik += -0.5 * r * r / s2;
            }
            let w = log_lik.exp();
            wsum += w;
            wxi[0] += w * xi[0];
            wxi[1] += w * xi[1];
        }
        for j in 0..2 {
            let mc = wxi[j] / wsum;
            assert!(
                (blup.0[j] - mc).abs() < 0.01,
                "component {j}: blup {} vs mc {}",
                blup.0[j],
                mc
            );
        }
    }

    #[test]
    fn scores_shrink_monotonically_in_noise_variance() {
        let grid = grid_0_10(11);
        let phi: Vec<f64> = grid.points().iter().map(|t| 0.3 + 0.05 * t).collect();
        let curve = SparseCurve::new("x", vec![2.0, 5.0, 8.0], vec![1.0, 2.0, 1.5], None).unwrap();
        let mut last = f64::INFINITY;
        for s2 in [0.01, 0.1, 1.0, 10.0, 100.0] {
            let model = injected_model(
                vec![1.5],
                vec![phi.clone()],
                s2,
                grid.clone(),
                vec![0.0; 11],
            );
            let xi = pace_scores(&model, &curve).unwrap().0[0].abs();
            assert!(xi < last, "sigma^2 {s2}: |xi| {xi} >= {last}");
            last = xi;
        }
    }

    #[test]
    fn extrapolation_is_rejected() {
        let grid = EvaluationGrid::new((1.0, 9.0), 11).unwrap();
        let model = injected_model(vec![1.0], vec![vec![1.0; 11]], 1.0, grid, vec![0.0; 11]);
        let curve = SparseCurve::new("x", vec![0.5], vec![1.0], None).unwrap();
        assert!(matches!(
            pace_scores(&model, &curve),
            Err(Error::Extrapolation { .. })
        ));
    }

    #[test]
    fn fit_fpca_is_deterministic_and_orthonormal() {
        let cfg = simgen::scenario(1).unwrap().with_seed(3);
        let ds = simgen::generate(&cfg).unwrap();
        let model_a = fit_fpca(&ds, &FpcaConfig::default()).unwrap();
        let model_b = fit_fpca(&ds, &FpcaConfig::default()).unwrap();
        assert_eq!(model_a.eigenvalues, model_b.eigenvalues);
        assert_eq!(model_a.k, model_b.k);

        let weights = model_a.mean.grid.quadrature_weights();
        for i in 0..model_a.k {
            for j in i..model_a.k {
                let dot: f64 = model_a.eigenfunctions[i]
                    .iter()
                    .zip(&model_a.eigenfunctions[j])
                    .zip(&weights)
                    .map(|((a, b), w)| a * b * w)
                    .sum();
                let target = if i == j { 1.0 } else { 0.0 };
                assert!(
                    (dot - target).abs() < 1e-6,
                    "<phi_{i}, phi_{j}> = {dot}"
                );
            }
        }
        for w in model_a.eigenvalues.windows(2) {
            assert!(w[0] >= w[1]);
        }
        assert!(*model_a.eigenvalues.last().unwrap() > 0.0);
    }

    #[test]
    fn fit_fpca_selects_plausible_k_on_scenario_1() {
        for seed in [11, 12, 13] {
            let cfg = simgen::scenario(1).unwrap().with_seed(seed);
            let ds = simgen::generate(&cfg).unwrap();
            let model = fit_fpca(&ds, &FpcaConfig::default()).unwrap();
            assert!(
                (2..=6).contains(&model.k),
                "seed {seed}: K = {}",
                model.k
            );
        }
    }

    #[test]
    fn identical_constant_curves_are_degenerate() {
        let curves: Vec<SparseCurve> = (0..2)
            .map(|i| {
                SparseCurve::new(
                    format!("c{i}"),
                    vec![1.0, 4.0, 7.0],
                    vec![2.0, 2.0, 2.0],
                    None,
                )
                .unwrap()
            })
            .collect();
        let ds = FunctionalDataset::new(curves, (0.0, 10.0)).unwrap();
        assert!(matches!(
            fit_fpca(&ds, &FpcaConfig::default()),
            Err(Error::DegenerateCovariance)
        ));
    }

    #[test]
    fn k_is_monotone_in_pve_threshold() {
        let cfg = simgen::scenario(5).unwrap().with_seed(41);
        let ds = simgen::generate(&cfg).unwrap();
        let grid = grid_0_10(51);
        let mean = estimate_mean(&ds, &grid, 1.0).unwrap();
        let (surface, _) = estimate_covariance(&ds, &mean, 1.5).unwrap();
        let mut last_k = 0usize;
        for threshold in [0.5, 0.8, 0.9, 0.95, 0.99, 0.999] {
            let (_, _, k) = eigendecompose(&surface, threshold, None, None).unwrap();
            assert!(k >= last_k, "threshold {threshold}: K {k} < {last_k}");
            last_k = k;
        }
    }

    #[test]
    fn model_dump_writes_all_sections() {
        let cfg = simgen::scenario(1).unwrap().with_seed(3);
        let ds = simgen::generate(&cfg).unwrap();
        let model = fit_fpca(&ds, &FpcaConfig::default()).unwrap();
        let mut buf = Vec::new();
        model.write_dump(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        for section in [
            "# grid",
            "# mean",
            "# eigenvalues",
            "# eigenfunctions",
            "# noise_variance",
            "# selected_k",
        ] {
            assert!(text.contains(section), "missing {section}");
        }
    }
}
