// Scratch: full rank-ordering sweep across scenarios and calibration modes.
use fpcbag::classifiers::ClassifierKind::RandomForest;
use fpcbag::ensemble::{AggregationRule::*, CalibrationMode};
use fpcbag::experiment::{run_experiment, ExperimentConfig, ExperimentSource};

fn main() {
    for mode in [CalibrationMode::OobOnly, CalibrationMode::AllReplicas] {
        let mut holds = 0;
        for scen in 1..=9usize {
            let mut config = ExperimentConfig::new(ExperimentSource::Scenario { id: scen, n: 200, n_obs_range: (5, 10) });
            config.classifiers = vec![RandomForest];
            config.rules = vec![Single, MajorityVote, OobWeight, Bayesian];
            config.repetitions = 30;
            config.ensemble_size = 100;
            config.seed = 5000 + scen as u64;
            config.calibration_mode = mode;
            let table = run_experiment(&config).unwrap();
            let m = |r| table.mean_error(RandomForest, r).unwrap();
            let (b, o, v, s) = (m(Bayesian), m(OobWeight), m(MajorityVote), m(Single));
            let ok = b <= o && o <= v && v <= s;
            holds += ok as usize;
            println!("{:?} s{scen}: bayes {b:.2} | oob {o:.2} | mv {v:.2} | single {s:.2}  [{}]", mode, if ok { "ok" } else { "VIOLATED" });
        }
        println!("{:?}: ordering held {holds}/9", mode);
    }
}
