// Scratch: RF fit timing after the tree rewrite + full repetition cost.
use std::time::Instant;
use fpcbag::classifiers::{self, ClassifierKind, TrainingMatrix, TuningConfig};
use fpcbag::ensemble::AggregationRule;
use fpcbag::experiment::{run_experiment, ExperimentConfig, ExperimentSource};
use fpcbag::fpca::{fit_fpca, pace_scores, FpcaConfig};
use fpcbag::simgen;

fn main() {
    let ds = simgen::generate(&simgen::scenario(1).unwrap().with_seed(1)).unwrap();
    let fc = FpcaConfig::default();
    let model = fit_fpca(&ds, &fc).unwrap();
    let rows: Vec<Vec<f64>> = ds.curves.iter().map(|c| pace_scores(&model, c).unwrap().0).collect();
    let data = TrainingMatrix::new(rows, ds.labels().unwrap()).unwrap();
    println!("K = {}", data.k());
    let tuning = TuningConfig::default();
    let t = Instant::now();
    for s in 0..10 { classifiers::fit(ClassifierKind::RandomForest, &data, &tuning, s).unwrap(); }
    println!("rf fit (tuned): {:?}/fit", t.elapsed() / 10);

    let t = Instant::now();
    for _ in 0..20 { fit_fpca(&ds, &fc).unwrap(); }
    println!("fpca fit:       {:?}/fit", t.elapsed() / 20);

    let mut config = ExperimentConfig::new(ExperimentSource::Scenario { id: 1, n: 200, n_obs_range: (5, 10) });
    config.classifiers = vec![ClassifierKind::RandomForest];
    config.rules = AggregationRule::ALL.to_vec();
    config.repetitions = 2;
    config.ensemble_size = 100;
    config.seed = 1;
    config.workers = 1;
    let t = Instant::now();
    run_experiment(&config).unwrap();
    println!("full rf rep:    {:?}/rep", t.elapsed() / 2);
}
