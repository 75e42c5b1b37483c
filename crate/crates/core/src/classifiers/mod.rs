//! Probability-emitting classifiers on component-score vectors.
//!
//! Six kinds share one interface: fit on an n x K score matrix with binary
//! labels, emit a class-1 probability for a new score vector. Probabilities
//! are clamped to [1e-12, 1 - 1e-12] so downstream logits stay finite;
//! labels threshold strictly at 0.5 (ties resolve to class 0).

mod discriminant;
mod forest;
mod gbm;
mod logit;
mod naive_bayes;
mod tree;

pub use discriminant::{LdaModel, QdaModel};
pub use forest::{ForestModel, RfTuning};
pub use gbm::{GbmModel, GbmTuning};
pub use logit::LogitModel;
pub use naive_bayes::NaiveBayesModel;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const PROB_CLAMP: f64 = 1e-12;

#[inline]
pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[inline]
pub(crate) fn clamp_probability(p: f64) -> f64 {
    p.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP)
}

/// The available classifier families.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ClassifierKind {
    Logit,
    Lda,
    Qda,
    NaiveBayes,
    RandomForest,
    Gbm,
}

impl ClassifierKind {
    pub const ALL: [ClassifierKind; 6] = [
        ClassifierKind::Logit,
        ClassifierKind::Lda,
        ClassifierKind::Qda,
        ClassifierKind::NaiveBayes,
        ClassifierKind::RandomForest,
        ClassifierKind::Gbm,
    ];

    /// Stable identifier used in CSV output and CLI flags.
    pub fn name(&self) -> &'static str {
        match self {
            ClassifierKind::Logit => "logit",
            ClassifierKind::Lda => "lda",
            ClassifierKind::Qda => "qda",
            ClassifierKind::NaiveBayes => "naive_bayes",
            ClassifierKind::RandomForest => "rf",
            ClassifierKind::Gbm => "gbm",
        }
    }

    pub fn parse(name: &str) -> Result<Self> {
        match name.to_ascii_lowercase().as_str() {
            "logit" | "logistic" => Ok(ClassifierKind::Logit),
            "lda" => Ok(ClassifierKind::Lda),
            "qda" => Ok(ClassifierKind::Qda),
            "naive_bayes" | "naivebayes" | "nb" => Ok(ClassifierKind::NaiveBayes),
            "rf" | "random_forest" | "randomforest" => Ok(ClassifierKind::RandomForest),
            "gbm" => Ok(ClassifierKind::Gbm),
            other => Err(Error::InvalidConfig(format!("unknown classifier `{other}`"))),
        }
    }

    /// Numeric id for seed derivation; stable across runs.
    pub(crate) fn id(&self) -> u64 {
        match self {
            ClassifierKind::Logit => 0,
            ClassifierKind::Lda => 1,
            ClassifierKind::Qda => 2,
            ClassifierKind::NaiveBayes => 3,
            ClassifierKind::RandomForest => 4,
            ClassifierKind::Gbm => 5,
        }
    }
}

impl std::fmt::Display for ClassifierKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Score vectors with binary labels, stored row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingMatrix {
    data: Vec<f64>,
    n_rows: usize,
    n_cols: usize,
    labels: Vec<u8>,
}

impl TrainingMatrix {
    pub fn new(rows: Vec<Vec<f64>>, labels: Vec<u8>) -> Result<Self> {
        if rows.len() != labels.len() {
            return Err(Error::ShapeMismatch {
                expected: rows.len(),
                got: labels.len(),
            });
        }
        if rows.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let n_cols = rows[0].len();
        if n_cols == 0 {
            return Err(Error::InvalidConfig("score vectors are empty".into()));
        }
        let mut data = Vec::with_capacity(rows.len() * n_cols);
        for r in &rows {
            if r.len() != n_cols {
                return Err(Error::ShapeMismatch {
                    expected: n_cols,
                    got: r.len(),
                });
            }
            if r.iter().any(|v| !v.is_finite()) {
                return Err(Error::Numerical("non-finite score in training matrix".into()));
            }
            data.extend_from_slice(r);
        }
        if labels.iter().any(|&l| l > 1) {
            return Err(Error::InvalidConfig("labels must be 0 or 1".into()));
        }
        if !labels.contains(&0) || !labels.contains(&1) {
            return Err(Error::DegenerateLabels);
        }
        Ok(TrainingMatrix {
            data,
            n_rows: rows.len(),
            n_cols,
            labels,
        })
    }

    pub fn n(&self) -> usize {
        self.n_rows
    }

    pub fn k(&self) -> usize {
        self.n_cols
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n_cols..(i + 1) * self.n_cols]
    }

    pub fn label(&self, i: usize) -> u8 {
        self.labels[i]
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn class_count(&self, class: u8) -> usize {
        self.labels.iter().filter(|&&l| l == class).count()
    }
}

/// Tuning settings for the two tree ensembles; other kinds need none.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct TuningConfig {
    pub rf: RfTuning,
    pub gbm: GbmTuning,
}

/// A fitted classifier of any kind.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub enum ClassifierModel {
    Logit(LogitModel),
    Lda(LdaModel),
    Qda(QdaModel),
    NaiveBayes(NaiveBayesModel),
    RandomForest(ForestModel),
    Gbm(GbmModel),
}

impl ClassifierModel {
    pub fn kind(&self) -> ClassifierKind {
        match self {
            ClassifierModel::Logit(_) => ClassifierKind::Logit,
            ClassifierModel::Lda(_) => ClassifierKind::Lda,
            ClassifierModel::Qda(_) => ClassifierKind::Qda,
            ClassifierModel::NaiveBayes(_) => ClassifierKind::NaiveBayes,
            ClassifierModel::RandomForest(_) => ClassifierKind::RandomForest,
            ClassifierModel::Gbm(_) => ClassifierKind::Gbm,
        }
    }

    pub fn n_features(&self) -> usize {
        match self {
            ClassifierModel::Logit(m) => m.coefficients.len(),
            ClassifierModel::Lda(m) => m.n_features(),
            ClassifierModel::Qda(m) => m.n_features(),
            ClassifierModel::NaiveBayes(m) => m.n_features(),
            ClassifierModel::RandomForest(m) => m.n_features,
            ClassifierModel::Gbm(m) => m.n_features,
        }
    }

    /// True when the logit fit hit separation (returned at its last iterate).
    pub fn separation_flag(&self) -> bool {
        match self {
            ClassifierModel::Logit(m) => m.separation,
            _ => false,
        }
    }
}

/// Fit a classifier of the requested kind.
pub fn fit(
    kind: ClassifierKind,
    data: &TrainingMatrix,
    tuning: &TuningConfig,
    seed: u64,
) -> Result<ClassifierModel> {
    if data.n() < 4 {
        return Err(Error::InsufficientData(format!(
            "classifier fit needs n >= 4 rows, got {}",
            data.n()
        )));
    }
    Ok(match kind {
        ClassifierKind::Logit => ClassifierModel::Logit(logit::fit(data)?),
        ClassifierKind::Lda => ClassifierModel::Lda(discriminant::fit_lda(data)?),
        ClassifierKind::Qda => ClassifierModel::Qda(discriminant::fit_qda(data)?),
        ClassifierKind::NaiveBayes => ClassifierModel::NaiveBayes(naive_bayes::fit(data)?),
        ClassifierKind::RandomForest => {
            ClassifierModel::RandomForest(forest::fit(data, &tuning.rf, seed)?)
        }
        ClassifierKind::Gbm => ClassifierModel::Gbm(gbm::fit(data, &tuning.gbm, seed)?),
    })
}

/// Class-1 probability, clamped away from the boundaries.
pub fn predict_proba(model: &ClassifierModel, scores: &[f64]) -> Result<f64> {
    if scores.len() != model.n_features() {
        return Err(Error::ShapeMismatch {
            expected: model.n_features(),
            got: scores.len(),
        });
    }
    let raw = match model {
        ClassifierModel::Logit(m) => m.probability(scores),
        ClassifierModel::Lda(m) => m.probability(scores),
        ClassifierModel::Qda(m) => m.probability(scores),
        ClassifierModel::NaiveBayes(m) => m.probability(scores),
        ClassifierModel::RandomForest(m) => m.probability(scores),
        ClassifierModel::Gbm(m) => m.probability(scores),
    };
    Ok(clamp_probability(raw))
}

/// Hard label: 1 iff the probability strictly exceeds 0.5.
pub fn predict_label(model: &ClassifierModel, scores: &[f64]) -> Result<u8> {
    Ok(if predict_proba(model, scores)? > 0.5 { 1 } else { 0 })
}

/// Clamped probabilities for a batch of rows. Tree ensembles run tree-major
/// for cache locality; other kinds fall back to the per-row path.
pub fn predict_proba_batch(model: &ClassifierModel, rows: &[Vec<f64>]) -> Result<Vec<f64>> {
    for row in rows {
        if row.len() != model.n_features() {
            return Err(Error::ShapeMismatch {
                expected: model.n_features(),
                got: row.len(),
            });
        }
    }
    let raw: Vec<f64> = match model {
        ClassifierModel::RandomForest(m) => m.probability_batch(rows),
        _ => rows
            .iter()
            .map(|row| match model {
                ClassifierModel::Logit(m) => m.probability(row),
                ClassifierModel::Lda(m) => m.probability(row),
                ClassifierModel::Qda(m) => m.probability(row),
                ClassifierModel::NaiveBayes(m) => m.probability(row),
                ClassifierModel::Gbm(m) => m.probability(row),
                ClassifierModel::RandomForest(_) => unreachable!(),
            })
            .collect(),
    };
    Ok(raw.into_iter().map(clamp_probability).collect())
}


#[cfg(test)]
mod tests {
    use super::test_support::gaussian_blobs;
    use super::*;
    use rand::Rng;

    #[test]
    fn training_matrix_rejects_single_class() {
        let rows = vec![vec![0.0], vec![1.0]];
        assert!(matches!(
            TrainingMatrix::new(rows, vec![1, 1]),
            Err(Error::DegenerateLabels)
        ));
    }

    #[test]
    fn training_matrix_rejects_non_finite() {
        let rows = vec![vec![0.0], vec![f64::NAN]];
        assert!(TrainingMatrix::new(rows, vec![0, 1]).is_err());
    }

    #[test]
    fn probabilities_stay_in_range_for_all_kinds() {
        let data = gaussian_blobs(40, 3, 2.0, 5);
        let tuning = TuningConfig::default();
        let mut rng = crate::seed::rng(6, &[1]);
        for kind in ClassifierKind::ALL {
            let model = fit(kind, &data, &tuning, 11).unwrap();
            for _ in 0..200 {
                let scores: Vec<f64> = (0..3).map(|_| rng.random_range(-50.0..50.0)).collect();
                let p = predict_proba(&model, &scores).unwrap();
                assert!((0.0..=1.0).contains(&p), "{kind}: p = {p}");
                assert!(p >= PROB_CLAMP && p <= 1.0 - PROB_CLAMP);
            }
        }
    }

    #[test]
    fn all_kinds_are_deterministic() {
        let data = gaussian_blobs(30, 2, 1.5, 9);
        let tuning = TuningConfig::default();
        for kind in ClassifierKind::ALL {
            let a = fit(kind, &data, &tuning, 77).unwrap();
            let b = fit(kind, &data, &tuning, 77).unwrap();
            let mut rng = crate::seed::rng(1, &[2]);
            for _ in 0..50 {
                let scores: Vec<f64> = (0..2).map(|_| rng.random_range(-4.0..4.0)).collect();
                assert_eq!(
                    predict_proba(&a, &scores).unwrap(),
                    predict_proba(&b, &scores).unwrap(),
                    "{kind} not deterministic"
                );
            }
        }
    }

    #[test]
    fn label_threshold_is_strict() {
        // alpha = beta = 0 gives probability exactly 0.5 everywhere; the tie
        // resolves to class 0.
        let model = ClassifierModel::Logit(LogitModel {
            intercept: 0.0,
            coefficients: vec![0.0, 0.0],
            converged: true,
            separation: false,
        });
        assert_eq!(predict_proba(&model, &[3.0, -1.0]).unwrap(), 0.5);
        assert_eq!(predict_label(&model, &[3.0, -1.0]).unwrap(), 0);
        let sure = ClassifierModel::Logit(LogitModel {
            intercept: 0.847,
            coefficients: vec![0.0, 0.0],
            converged: true,
            separation: false,
        });
        assert_eq!(predict_label(&sure, &[0.0, 0.0]).unwrap(), 1);
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let data = gaussian_blobs(10, 2, 1.0, 3);
        let model = fit(ClassifierKind::Lda, &data, &TuningConfig::default(), 0).unwrap();
        assert!(matches!(
            predict_proba(&model, &[1.0, 2.0, 3.0]),
            Err(Error::ShapeMismatch { .. })
        ));
    }

    #[test]
    fn kind_names_round_trip() {
        for kind in ClassifierKind::ALL {
            assert_eq!(ClassifierKind::parse(kind.name()).unwrap(), kind);
        }
        assert!(ClassifierKind::parse("svm").is_err());
    }
}
