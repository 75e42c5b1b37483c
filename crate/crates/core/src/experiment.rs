//! Seeded Monte Carlo experiments over synthetic scenarios or real data.
//!
//! Each repetition builds fresh train/test data from a derived seed, fits
//! one single model plus one ensemble per classifier kind (shared across the
//! three ensemble rules), and records test error percentages. Repetitions
//! run in a worker pool; every repetition is a pure function of its derived
//! seed, so results do not depend on scheduling.

use std::path::PathBuf;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classifiers::{self, ClassifierKind, TrainingMatrix, TuningConfig};
use crate::data::{self, FunctionalDataset, LongCsvSchema, SplitSpec};
use crate::ensemble::{
    self, classifier_seed, fit_calibration, fit_replica_base, AggregationRule, CalibrationMode,
};
use crate::error::{Error, Result};
use crate::fpca::{fit_fpca, pace_scores, FpcaConfig};
use crate::seed;
use crate::simgen;

const REP_STREAM: u64 = 10;
const TRAIN_STREAM: u64 = 0;
const TEST_STREAM: u64 = 1;
const SPARSIFY_STREAM: u64 = 2;
const SPLIT_STREAM: u64 = 3;
const SINGLE_STREAM: u64 = 4;
const ENSEMBLE_STREAM: u64 = 5;

/// Where each repetition's data comes from.
#[derive(Debug, Clone)]
pub enum ExperimentSource {
    /// Synthetic scenario: each repetition generates one fresh dataset of
    /// `n` curves and splits it in half (stratified) into train and test.
    Scenario {
        id: usize,
        n: usize,
        n_obs_range: (usize, usize),
    },
    /// A labeled long-CSV dataset, optionally sparsified, split fresh per
    /// repetition.
    RealData {
        path: PathBuf,
        schema: LongCsvSchema,
        sparsify: Option<(usize, usize)>,
        train_fraction: f64,
        domain: Option<(f64, f64)>,
    },
}

#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub source: ExperimentSource,
    pub classifiers: Vec<ClassifierKind>,
    pub rules: Vec<AggregationRule>,
    pub repetitions: usize,
    /// Bootstrap replicas per ensemble.
    pub ensemble_size: usize,
    pub fpca: FpcaConfig,
    pub calibration_mode: CalibrationMode,
    pub prior_scales: (f64, f64),
    pub tuning: TuningConfig,
    pub seed: u64,
    /// Worker threads; 0 uses all available cores.
    pub workers: usize,
}

impl ExperimentConfig {
    pub fn new(source: ExperimentSource) -> Self {
        ExperimentConfig {
            source,
            classifiers: vec![ClassifierKind::RandomForest],
            rules: AggregationRule::ALL.to_vec(),
            repetitions: 100,
            ensemble_size: 100,
            fpca: FpcaConfig::default(),
            calibration_mode: CalibrationMode::AllReplicas,
            prior_scales: (
                ensemble::calibration::DEFAULT_PRIOR_SCALE_INTERCEPT,
                ensemble::calibration::DEFAULT_PRIOR_SCALE_SLOPE,
            ),
            tuning: TuningConfig::default(),
            seed: 0,
            workers: 0,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.classifiers.is_empty() {
            return Err(Error::InvalidConfig("no classifiers requested".into()));
        }
        if self.rules.is_empty() {
            return Err(Error::InvalidConfig("no aggregation rules requested".into()));
        }
        if self.repetitions == 0 {
            return Err(Error::InvalidConfig("repetitions must be >= 1".into()));
        }
        if self.ensemble_size == 0 {
            return Err(Error::InvalidConfig("B must be >= 1".into()));
        }
        Ok(())
    }

    fn needs_ensemble(&self) -> bool {
        self.rules.iter().any(|r| *r != AggregationRule::Single)
    }
}

/// Per-repetition error percentages: `errors[classifier][rule]`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RepResult {
    pub rep: usize,
    pub errors: Vec<Vec<f64>>,
}

/// Collected experiment output.
#[derive(Debug, Clone)]
pub struct ResultsTable {
    pub classifiers: Vec<ClassifierKind>,
    pub rules: Vec<AggregationRule>,
    pub requested_repetitions: usize,
    /// Successful repetitions in repetition order.
    pub rows: Vec<RepResult>,
    pub failures: Vec<(usize, String)>,
}

impl ResultsTable {
    pub fn n_success(&self) -> usize {
        self.rows.len()
    }

    fn cell_values(&self, classifier: usize, rule: usize) -> impl Iterator<Item = f64> + '_ {
        self.rows.iter().map(move |r| r.errors[classifier][rule])
    }

    pub fn mean_error(&self, kind: ClassifierKind, rule: AggregationRule) -> Option<f64> {
        let c = self.classifiers.iter().position(|k| *k == kind)?;
        let r = self.rules.iter().position(|x| *x == rule)?;
        let n = self.n_success();
        if n == 0 {
            return None;
        }
        Some(self.cell_values(c, r).sum::<f64>() / n as f64)
    }

    /// Sample standard deviation of per-repetition errors (the parenthesized
    /// column of the result tables).
    pub fn sd_error(&self, kind: ClassifierKind, rule: AggregationRule) -> Option<f64> {
        let c = self.classifiers.iter().position(|k| *k == kind)?;
        let r = self.rules.iter().position(|x| *x == rule)?;
        let n = self.n_success();
        if n < 2 {
            return Some(0.0);
        }
        let mean = self.mean_error(kind, rule)?;
        let ss: f64 = self.cell_values(c, r).map(|e| (e - mean) * (e - mean)).sum();
        Some((ss / (n - 1) as f64).sqrt())
    }

    /// Write `summary.csv`, `errors_long.csv` and `trace.csv`.
    pub fn emit_outputs(&self, dir: impl AsRef<std::path::Path>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;

        let write = |name: &str, contents: String| -> Result<()> {
            let path = dir.join(name);
            std::fs::write(&path, contents).map_err(|e| Error::io(&path, e))
        };

        let mut summary = String::from("classifier,rule,mean_error_pct,se_pct,n_reps\n");
        for kind in &self.classifiers {
            for rule in &self.rules {
                let mean = self.mean_error(*kind, *rule).unwrap_or(f64::NAN);
                let sd = self.sd_error(*kind, *rule).unwrap_or(f64::NAN);
                summary.push_str(&format!(
                    "{},{},{},{},{}\n",
                    kind,
                    rule,
                    mean,
                    sd,
                    self.n_success()
                ));
            }
        }
        write("summary.csv", summary)?;

        let mut long = String::from("rep,classifier,rule,error_pct\n");
        for row in &self.rows {
            for (c, kind) in self.classifiers.iter().enumerate() {
                for (r, rule) in self.rules.iter().enumerate() {
                    long.push_str(&format!("{},{},{},{}\n", row.rep, kind, rule, row.errors[c][r]));
                }
            }
        }
        write("errors_long.csv", long)?;

        let mut trace = String::from("rep,classifier,rule,running_mean_pct\n");
        let mut sums = vec![vec![0.0f64; self.rules.len()]; self.classifiers.len()];
        for (i, row) in self.rows.iter().enumerate() {
            for (c, kind) in self.classifiers.iter().enumerate() {
                for (r, rule) in self.rules.iter().enumerate() {
                    sums[c][r] += row.errors[c][r];
                    trace.push_str(&format!(
                        "{},{},{},{}\n",
                        row.rep,
                        kind,
                        rule,
                        sums[c][r] / (i + 1) as f64
                    ));
                }
            }
        }
        write("trace.csv", trace)?;
        Ok(())
    }
}

enum RepData {
    Scenario(simgen::ScenarioConfig),
    Real(FunctionalDataset, Option<(usize, usize)>, f64),
}

/// Run the full experiment.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ResultsTable> {
    config.validate()?;

    let rep_data = match &config.source {
        ExperimentSource::Scenario { id, n, n_obs_range } => {
            let mut scen = simgen::scenario(*id)?;
            scen.n = *n;
            scen.n_obs_range = *n_obs_range;
            RepData::Scenario(scen)
        }
        ExperimentSource::RealData {
            path,
            schema,
            sparsify,
            train_fraction,
            domain,
        } => {
            let mut ds = data::load_long_csv(path, schema)?;
            if let Some(d) = domain {
                ds = FunctionalDataset::new(ds.curves, *d)?;
            }
            ds.require_labels()?;
            if let Some((lo, hi)) = sparsify {
                if *lo < 1 || lo > hi {
                    return Err(Error::InvalidConfig(format!(
                        "invalid sparsify range [{lo}, {hi}]"
                    )));
                }
                for c in &ds.curves {
                    if c.len() < *hi {
                        return Err(Error::InsufficientObservations {
                            id: c.id.clone(),
                            have: c.len(),
                            need: *hi,
                        });
                    }
                }
            }
            RepData::Real(ds, *sparsify, *train_fraction)
        }
    };

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.workers)
        .build()
        .map_err(|e| Error::Experiment(format!("worker pool: {e}")))?;

    let outcomes: Vec<(usize, Result<RepResult>)> = pool.install(|| {
        (0..config.repetitions)
            .into_par_iter()
            .map(|rep| (rep, run_repetition(config, &rep_data, rep)))
            .collect()
    });

    let mut rows = Vec::new();
    let mut failures = Vec::new();
    for (rep, outcome) in outcomes {
        match outcome {
            Ok(row) => rows.push(row),
            Err(e) => failures.push((rep, e.to_string())),
        }
    }
    rows.sort_by_key(|r| r.rep);
    failures.sort_by_key(|f| f.0);

    if failures.len() * 10 > config.repetitions {
        return Err(Error::Experiment(format!(
            "{} of {} repetitions failed (first: rep {}: {})",
            failures.len(),
            config.repetitions,
            failures[0].0,
            failures[0].1
        )));
    }

    Ok(ResultsTable {
        classifiers: config.classifiers.clone(),
        rules: config.rules.clone(),
        requested_repetitions: config.repetitions,
        rows,
        failures,
    })
}

fn run_repetition(
    config: &ExperimentConfig,
    rep_data: &RepData,
    rep: usize,
) -> Result<RepResult> {
    let rep_seed = seed::derive(config.seed, &[REP_STREAM, rep as u64]);

    let (train, test) = match rep_data {
        RepData::Scenario(scen) => {
            let full =
                simgen::generate(&scen.clone().with_seed(seed::derive(rep_seed, &[TRAIN_STREAM])))?;
            data::split(
                &full,
                &SplitSpec {
                    train_fraction: 0.5,
                    seed: seed::derive(rep_seed, &[TEST_STREAM]),
                },
            )?
        }
        RepData::Real(ds, sparsify_range, train_fraction) => {
            let sparse = match sparsify_range {
                Some(range) => data::sparsify(ds, *range, seed::derive(rep_seed, &[SPARSIFY_STREAM]))?,
                None => ds.clone(),
            };
            data::split(
                &sparse,
                &SplitSpec {
                    train_fraction: *train_fraction,
                    seed: seed::derive(rep_seed, &[SPLIT_STREAM]),
                },
            )?
        }
    };

    let n_test = test.len();
    let rule_index: Vec<usize> = (0..config.rules.len()).collect();
    let mut errors = vec![vec![0.0f64; config.rules.len()]; config.classifiers.len()];

    // Single fits share one FPCA model across classifier kinds.
    if config.rules.contains(&AggregationRule::Single) {
        let model = fit_fpca(&train, &config.fpca)?;
        let train_rows: Vec<Vec<f64>> = train
            .curves
            .iter()
            .map(|c| pace_scores(&model, c).map(|s| s.0))
            .collect::<Result<_>>()?;
        let matrix = TrainingMatrix::new(train_rows, train.labels()?)?;
        let test_rows: Vec<Vec<f64>> = test
            .curves
            .iter()
            .map(|c| pace_scores(&model, c).map(|s| s.0))
            .collect::<Result<_>>()?;

        let rule_pos = config
            .rules
            .iter()
            .position(|r| *r == AggregationRule::Single)
            .unwrap();
        for (ci, kind) in config.classifiers.iter().enumerate() {
            let clf = classifiers::fit(
                *kind,
                &matrix,
                &config.tuning,
                seed::derive(rep_seed, &[SINGLE_STREAM, kind.id()]),
            )?;
            let mut wrong = 0usize;
            for (row, curve) in test_rows.iter().zip(&test.curves) {
                if classifiers::predict_label(&clf, row)? != curve.label.unwrap() {
                    wrong += 1;
                }
            }
            errors[ci][rule_pos] = 100.0 * wrong as f64 / n_test as f64;
        }
    }

    if config.needs_ensemble() {
        let ensemble_seed = seed::derive(rep_seed, &[ENSEMBLE_STREAM]);
        let b = config.ensemble_size;
        let n_train = train.len();
        let n_kinds = config.classifiers.len();

        // Streaming accumulators, per kind.
        let mut test_votes: Vec<Vec<Vec<u8>>> = vec![Vec::with_capacity(b); n_kinds];
        let mut test_prob_sum: Vec<Vec<f64>> = vec![vec![0.0; n_test]; n_kinds];
        let mut train_prob_sum: Vec<Vec<f64>> = vec![vec![0.0; n_train]; n_kinds];
        let mut train_oob_prob_sum: Vec<Vec<f64>> = vec![vec![0.0; n_train]; n_kinds];
        let mut train_oob_count: Vec<usize> = vec![0; n_train];
        let mut oob_errors: Vec<Vec<f64>> = vec![Vec::with_capacity(b); n_kinds];
        let want_bayesian = config.rules.contains(&AggregationRule::Bayesian);

        for bi in 0..b {
            let base = fit_replica_base(&train, &config.fpca, ensemble_seed, bi)?;
            let matrix = TrainingMatrix::new(base.train_rows.clone(), base.train_labels.clone())?;

            // Scores for all test curves through this replica, shared by
            // every classifier kind.
            let test_rows: Vec<Vec<f64>> = test
                .curves
                .iter()
                .map(|c| pace_scores(&base.fpca, c).map(|s| s.0))
                .collect::<Result<_>>()?;
            let train_rows_full: Vec<Vec<f64>> = if want_bayesian {
                train
                    .curves
                    .iter()
                    .map(|c| pace_scores(&base.fpca, c).map(|s| s.0))
                    .collect::<Result<_>>()?
            } else {
                Vec::new()
            };

            let mut in_bag = vec![false; n_train];
            for &i in &base.inbag {
                in_bag[i as usize] = true;
            }
            for i in 0..n_train {
                if !in_bag[i] {
                    train_oob_count[i] += 1;
                }
            }

            for (ci, kind) in config.classifiers.iter().enumerate() {
                let clf = classifiers::fit(
                    *kind,
                    &matrix,
                    &config.tuning,
                    classifier_seed(ensemble_seed, bi, *kind),
                )?;
                oob_errors[ci].push(ensemble::replica_oob_error(&base, &clf, &train)?);

                let probs = classifiers::predict_proba_batch(&clf, &test_rows)?;
                let mut votes = Vec::with_capacity(n_test);
                for (ti, p) in probs.into_iter().enumerate() {
                    test_prob_sum[ci][ti] += p;
                    votes.push(u8::from(p > 0.5));
                }
                test_votes[ci].push(votes);

                if want_bayesian {
                    let probs = classifiers::predict_proba_batch(&clf, &train_rows_full)?;
                    for (i, p) in probs.into_iter().enumerate() {
                        train_prob_sum[ci][i] += p;
                        if !in_bag[i] {
                            train_oob_prob_sum[ci][i] += p;
                        }
                    }
                }
            }
        }

        let test_labels: Vec<u8> = test.curves.iter().map(|c| c.label.unwrap()).collect();
        for (ci, _) in config.classifiers.iter().enumerate() {
            for &ri in &rule_index {
                let rule = config.rules[ri];
                let error = match rule {
                    AggregationRule::Single => continue,
                    AggregationRule::MajorityVote => {
                        let mut wrong = 0usize;
                        for ti in 0..n_test {
                            let votes: Vec<u8> =
                                (0..b).map(|bi| test_votes[ci][bi][ti]).collect();
                            if ensemble::majority_of(&votes) != test_labels[ti] {
                                wrong += 1;
                            }
                        }
                        100.0 * wrong as f64 / n_test as f64
                    }
                    AggregationRule::OobWeight => {
                        let mut wrong = 0usize;
                        for ti in 0..n_test {
                            let votes: Vec<u8> =
                                (0..b).map(|bi| test_votes[ci][bi][ti]).collect();
                            if ensemble::oob_weighted_of(&votes, &oob_errors[ci]) != test_labels[ti]
                            {
                                wrong += 1;
                            }
                        }
                        100.0 * wrong as f64 / n_test as f64
                    }
                    AggregationRule::Bayesian => {
                        let pairs: Vec<(f64, u8)> = (0..n_train)
                            .map(|i| {
                                let p = match config.calibration_mode {
                                    CalibrationMode::AllReplicas => {
                                        train_prob_sum[ci][i] / b as f64
                                    }
                                    CalibrationMode::OobOnly => {
                                        if train_oob_count[i] > 0 {
                                            train_oob_prob_sum[ci][i] / train_oob_count[i] as f64
                                        } else {
                                            train_prob_sum[ci][i] / b as f64
                                        }
                                    }
                                };
                                (p, train.curves[i].label.unwrap())
                            })
                            .collect();
                        let calib = fit_calibration(
                            &pairs,
                            config.prior_scales.0,
                            config.prior_scales.1,
                        )?;
                        let mut wrong = 0usize;
                        for ti in 0..n_test {
                            let p_hat = test_prob_sum[ci][ti] / b as f64;
                            let label = u8::from(calib.calibrate(p_hat) > 0.5);
                            if label != test_labels[ti] {
                                wrong += 1;
                            }
                        }
                        100.0 * wrong as f64 / n_test as f64
                    }
                };
                errors[ci][ri] = error;
            }
        }
    }

    Ok(RepResult { rep, errors })
}
