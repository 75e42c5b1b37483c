//! Bootstrap-resampled ensembles of (FPCA, classifier) pairs and the three
//! rules for combining their predictions.
//!
//! Each replica resamples the training curves with replacement, refits the
//! whole score pipeline on the resample, and trains a classifier on the
//! replica's own scores. A new curve is scored separately through every
//! replica's FPCA fit before that replica's classifier votes. Votes combine
//! by plain majority, by out-of-bag-error weighting, or by averaging
//! probabilities and passing them through a Bayesian logistic calibration.

pub mod calibration;

pub use calibration::{fit_calibration, CalibrationModel};

use serde::{Deserialize, Serialize};

use crate::classifiers::{self, ClassifierKind, ClassifierModel, TrainingMatrix, TuningConfig};
use crate::data::{FunctionalDataset, SparseCurve};
use crate::error::{Error, Result};
use crate::fpca::{fit_fpca, pace_scores, FpcaConfig, FpcaModel};
use crate::seed;

/// Seed stream for replica resampling and FPCA refits (kind-independent).
pub(crate) const BASE_STREAM: u64 = 6;
/// Seed stream for per-replica classifier fits.
pub(crate) const CLASSIFIER_STREAM: u64 = 7;
const MAX_REDRAWS: usize = 20;

/// How predictions are aggregated for evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum AggregationRule {
    Single,
    MajorityVote,
    OobWeight,
    Bayesian,
}

impl AggregationRule {
    pub const ALL: [AggregationRule; 4] = [
        AggregationRule::Single,
        AggregationRule::MajorityVote,
        AggregationRule::OobWeight,
        AggregationRule::Bayesian,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            AggregationRule::Single => "single",
            AggregationRule::MajorityVote => "majority_vote",
            AggregationRule::OobWeight => "oob_weight",
            AggregationRule::Bayesian => "bayesian",
        }
    }

    pub fn parse(name: &str) -> Result<Self> {
        match name.to_ascii_lowercase().replace('-', "_").as_str() {
            "single" => Ok(AggregationRule::Single),
            "majority" | "majority_vote" | "mv" => Ok(AggregationRule::MajorityVote),
            "oob" | "oob_weight" | "oob_weighted" => Ok(AggregationRule::OobWeight),
            "bayesian" | "bayes" => Ok(AggregationRule::Bayesian),
            other => Err(Error::InvalidConfig(format!(
                "unknown aggregation rule `{other}`"
            ))),
        }
    }
}

impl std::fmt::Display for AggregationRule {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Which replica probabilities feed the calibration fit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CalibrationMode {
    /// Average over all replicas (the literal aggregated probability).
    AllReplicas,
    /// Average only over replicas where the curve was out of bag; curves
    /// never out of bag fall back to the all-replica average.
    OobOnly,
}

impl CalibrationMode {
    pub fn parse(name: &str) -> Result<Self> {
        match name.to_ascii_lowercase().replace('-', "_").as_str() {
            "all" | "all_replicas" => Ok(CalibrationMode::AllReplicas),
            "oob" | "oob_only" => Ok(CalibrationMode::OobOnly),
            other => Err(Error::InvalidConfig(format!(
                "unknown calibration mode `{other}`"
            ))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            CalibrationMode::AllReplicas => "all_replicas",
            CalibrationMode::OobOnly => "oob_only",
        }
    }
}

/// One bootstrap replica: the FPCA refit and the classifier trained on it.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Replica {
    pub fpca: FpcaModel,
    pub classifier: ClassifierModel,
}

/// A fitted ensemble over B bootstrap replicas.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EnsembleModel {
    pub replicas: Vec<Replica>,
    pub classifier_kind: ClassifierKind,
    /// Out-of-bag misclassification rate of each replica.
    pub oob_errors: Vec<f64>,
    /// Sampled training-curve indices per replica (the in-bag multiset).
    pub inbag: Vec<Vec<u32>>,
    /// Training-curve indices that were never out of bag; nonempty means
    /// out-of-bag calibration probabilities need the all-replica fallback.
    pub never_oob: Vec<u32>,
}

impl EnsembleModel {
    pub fn b(&self) -> usize {
        self.replicas.len()
    }

    /// Diagnostics export: per-replica component count and OOB error, plus
    /// the calibration coefficients when available.
    pub fn write_summary_csv(
        &self,
        calibration: Option<&CalibrationModel>,
        out: &mut impl std::io::Write,
    ) -> std::io::Result<()> {
        writeln!(out, "replica,k,oob_error")?;
        for (b, (replica, e)) in self.replicas.iter().zip(&self.oob_errors).enumerate() {
            writeln!(out, "{},{},{}", b, replica.fpca.k, e)?;
        }
        if let Some(c) = calibration {
            writeln!(out)?;
            writeln!(out, "beta0,beta1,prior_scale0,prior_scale1,converged,iterations")?;
            writeln!(
                out,
                "{},{},{},{},{},{}",
                c.beta0, c.beta1, c.prior_scale0, c.prior_scale1, c.converged, c.iterations
            )?;
        }
        Ok(())
    }
}

/// The kind-independent part of one replica fit: resample, FPCA refit,
/// scores for the in-bag rows and the out-of-bag curves.
pub(crate) struct ReplicaBase {
    pub fpca: FpcaModel,
    pub inbag: Vec<u32>,
    pub train_rows: Vec<Vec<f64>>,
    pub train_labels: Vec<u8>,
    /// Training-set indices out of bag for this replica, with their scores
    /// through this replica's FPCA.
    pub oob_indices: Vec<u32>,
    pub oob_rows: Vec<Vec<f64>>,
}

/// Fit the resample/FPCA base for replica `b`, redrawing on single-class
/// resamples or FPCA failures.
pub(crate) fn fit_replica_base(
    train: &FunctionalDataset,
    fpca_config: &FpcaConfig,
    ensemble_seed: u64,
    b: usize,
) -> Result<ReplicaBase> {
    use rand::Rng;
    let n = train.len();
    let mut last_error = String::new();
    for attempt in 0..MAX_REDRAWS {
        let mut rng = seed::rng(ensemble_seed, &[BASE_STREAM, b as u64, attempt as u64]);
        let inbag: Vec<u32> = (0..n).map(|_| rng.random_range(0..n) as u32).collect();

        let labels: Vec<u8> = inbag
            .iter()
            .map(|&i| train.curves[i as usize].label.unwrap())
            .collect();
        if !labels.contains(&0) || !labels.contains(&1) {
            last_error = "single-class resample".into();
            continue;
        }

        let resample = FunctionalDataset::new(
            inbag
                .iter()
                .map(|&i| train.curves[i as usize].clone())
                .collect(),
            train.domain,
        )?;
        let fpca = match fit_fpca(&resample, fpca_config) {
            Ok(m) => m,
            Err(e) => {
                last_error = e.to_string();
                continue;
            }
        };

        // Score each distinct in-bag curve once; duplicate draws reuse it.
        let mut score_cache: Vec<Option<Vec<f64>>> = vec![None; n];
        let mut ok = true;
        for &i in &inbag {
            let idx = i as usize;
            if score_cache[idx].is_none() {
                match pace_scores(&fpca, &train.curves[idx]) {
                    Ok(s) => score_cache[idx] = Some(s.0),
                    Err(e) => {
                        last_error = e.to_string();
                        ok = false;
                        break;
                    }
                }
            }
        }
        if !ok {
            continue;
        }
        let train_rows: Vec<Vec<f64>> = inbag
            .iter()
            .map(|&i| score_cache[i as usize].clone().unwrap())
            .collect();

        let mut in_bag_flag = vec![false; n];
        for &i in &inbag {
            in_bag_flag[i as usize] = true;
        }
        let mut oob_indices = Vec::new();
        let mut oob_rows = Vec::new();
        for i in 0..n {
            if in_bag_flag[i] {
                continue;
            }
            match pace_scores(&fpca, &train.curves[i]) {
                Ok(s) => {
                    oob_indices.push(i as u32);
                    oob_rows.push(s.0);
                }
                Err(e) => {
                    last_error = e.to_string();
                    ok = false;
                    break;
                }
            }
        }
        if !ok {
            continue;
        }

        return Ok(ReplicaBase {
            fpca,
            inbag,
            train_rows,
            train_labels: labels,
            oob_indices,
            oob_rows,
        });
    }
    Err(Error::ReplicaFailure {
        replica: b,
        attempts: MAX_REDRAWS,
        message: last_error,
    })
}

/// Classifier seed for replica `b`; independent of which kinds are fitted.
pub(crate) fn classifier_seed(ensemble_seed: u64, b: usize, kind: ClassifierKind) -> u64 {
    seed::derive(ensemble_seed, &[CLASSIFIER_STREAM, b as u64, kind.id()])
}

/// Out-of-bag misclassification rate of one replica's classifier.
pub(crate) fn replica_oob_error(base: &ReplicaBase, model: &ClassifierModel, train: &FunctionalDataset) -> Result<f64> {
    if base.oob_indices.is_empty() {
        return Ok(0.5);
    }
    let probs = classifiers::predict_proba_batch(model, &base.oob_rows)?;
    let mut errors = 0usize;
    for (idx, p) in base.oob_indices.iter().zip(&probs) {
        let label = train.curves[*idx as usize].label.unwrap();
        if u8::from(*p > 0.5) != label {
            errors += 1;
        }
    }
    Ok(errors as f64 / base.oob_indices.len() as f64)
}

/// Fit a B-replica ensemble for one classifier kind.
pub fn bootstrap_fit(
    train: &FunctionalDataset,
    kind: ClassifierKind,
    b_replicas: usize,
    fpca_config: &FpcaConfig,
    tuning: &TuningConfig,
    ensemble_seed: u64,
) -> Result<EnsembleModel> {
    if b_replicas == 0 {
        return Err(Error::InvalidConfig("ensemble needs B >= 1 replicas".into()));
    }
    train.require_labels()?;
    let n = train.len();

    let mut replicas = Vec::with_capacity(b_replicas);
    let mut oob_errors = Vec::with_capacity(b_replicas);
    let mut inbag = Vec::with_capacity(b_replicas);
    let mut ever_oob = vec![false; n];

    for b in 0..b_replicas {
        let base = fit_replica_base(train, fpca_config, ensemble_seed, b)?;
        let matrix = TrainingMatrix::new(base.train_rows.clone(), base.train_labels.clone())?;
        let classifier = classifiers::fit(kind, &matrix, tuning, classifier_seed(ensemble_seed, b, kind))?;
        oob_errors.push(replica_oob_error(&base, &classifier, train)?);
        for idx in &base.oob_indices {
            ever_oob[*idx as usize] = true;
        }
        inbag.push(base.inbag);
        replicas.push(Replica {
            fpca: base.fpca,
            classifier,
        });
    }

    let never_oob: Vec<u32> = (0..n as u32).filter(|&i| !ever_oob[i as usize]).collect();
    Ok(EnsembleModel {
        replicas,
        classifier_kind: kind,
        oob_errors,
        inbag,
        never_oob,
    })
}

/// Majority over the votes; exact tie goes to class 0.
pub(crate) fn majority_of(votes: &[u8]) -> u8 {
    let ones: usize = votes.iter().map(|&v| v as usize).sum();
    u8::from(2 * ones > votes.len())
}

/// Weighted vote share with weights 1/e_b; zero errors are replaced by the
/// smallest nonzero error (all weights equal when every error is zero).
pub fn oob_weighted_share(votes: &[u8], oob_errors: &[f64]) -> f64 {
    let min_nonzero = oob_errors
        .iter()
        .copied()
        .filter(|&e| e > 0.0)
        .fold(f64::INFINITY, f64::min);
    let weights: Vec<f64> = if min_nonzero.is_finite() {
        oob_errors
            .iter()
            .map(|&e| 1.0 / if e > 0.0 { e } else { min_nonzero })
            .collect()
    } else {
        vec![1.0; oob_errors.len()]
    };
    let total: f64 = weights.iter().sum();
    let weighted: f64 = weights
        .iter()
        .zip(votes)
        .map(|(w, &v)| w * v as f64)
        .sum();
    weighted / total
}

/// Out-of-bag-weighted vote: class 1 iff the weighted share strictly
/// exceeds one half.
pub(crate) fn oob_weighted_of(votes: &[u8], oob_errors: &[f64]) -> u8 {
    u8::from(oob_weighted_share(votes, oob_errors) > 0.5)
}

/// Per-replica hard votes for one curve, each through its own FPCA fit.
pub fn replica_votes(model: &EnsembleModel, curve: &SparseCurve) -> Result<Vec<u8>> {
    model
        .replicas
        .iter()
        .map(|r| {
            let scores = pace_scores(&r.fpca, curve)?;
            classifiers::predict_label(&r.classifier, scores.as_slice())
        })
        .collect()
}

/// Majority vote over all replicas.
pub fn predict_majority(model: &EnsembleModel, curve: &SparseCurve) -> Result<u8> {
    Ok(majority_of(&replica_votes(model, curve)?))
}

/// Out-of-bag-error weighted vote.
pub fn predict_oob_weighted(model: &EnsembleModel, curve: &SparseCurve) -> Result<u8> {
    Ok(oob_weighted_of(
        &replica_votes(model, curve)?,
        &model.oob_errors,
    ))
}

/// Average class-1 probability across replicas.
pub fn aggregate_proba(model: &EnsembleModel, curve: &SparseCurve) -> Result<f64> {
    let mut acc = 0.0;
    for r in &model.replicas {
        let scores = pace_scores(&r.fpca, curve)?;
        acc += classifiers::predict_proba(&r.classifier, scores.as_slice())?;
    }
    Ok(acc / model.b() as f64)
}

/// One training curve's aggregated probability with its label.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainingProb {
    pub probability: f64,
    pub label: u8,
    /// Set when the curve was never out of bag and the out-of-bag mode fell
    /// back to the all-replica average.
    pub oob_fallback: bool,
}

/// Aggregated training probabilities for the calibration fit.
pub fn training_aggregated_probs(
    model: &EnsembleModel,
    train: &FunctionalDataset,
    mode: CalibrationMode,
) -> Result<Vec<TrainingProb>> {
    train.require_labels()?;
    let n = train.len();
    let b = model.b();

    // p[b][i]: replica b's probability for train curve i.
    let mut probs = vec![vec![0.0f64; n]; b];
    for (bi, replica) in model.replicas.iter().enumerate() {
        for (i, curve) in train.curves.iter().enumerate() {
            let scores = pace_scores(&replica.fpca, curve)?;
            probs[bi][i] = classifiers::predict_proba(&replica.classifier, scores.as_slice())?;
        }
    }

    let mut oob_flag = vec![vec![false; n]; b];
    for (bi, bag) in model.inbag.iter().enumerate() {
        let mut in_bag = vec![false; n];
        for &i in bag {
            in_bag[i as usize] = true;
        }
        for i in 0..n {
            oob_flag[bi][i] = !in_bag[i];
        }
    }

    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let all_mean = (0..b).map(|bi| probs[bi][i]).sum::<f64>() / b as f64;
        let (probability, oob_fallback) = match mode {
            CalibrationMode::AllReplicas => (all_mean, false),
            CalibrationMode::OobOnly => {
                let oob: Vec<f64> = (0..b)
                    .filter(|&bi| oob_flag[bi][i])
                    .map(|bi| probs[bi][i])
                    .collect();
                if oob.is_empty() {
                    (all_mean, true)
                } else {
                    (oob.iter().sum::<f64>() / oob.len() as f64, false)
                }
            }
        };
        out.push(TrainingProb {
            probability,
            label: train.curves[i].label.unwrap(),
            oob_fallback,
        });
    }
    Ok(out)
}

/// Calibrated probability and label for a new curve.
pub fn predict_bayesian(
    model: &EnsembleModel,
    calib: &CalibrationModel,
    curve: &SparseCurve,
) -> Result<(f64, u8)> {
    let p_hat = aggregate_proba(model, curve)?;
    let pi = calib.calibrate(p_hat);
    Ok((pi, u8::from(pi > 0.5)))
}
