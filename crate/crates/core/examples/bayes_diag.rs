// Scratch: all 9 scenarios at B=400, both calibration modes, one pass.
use fpcbag::classifiers::{self, ClassifierKind, TuningConfig};
use fpcbag::data::{split, SplitSpec};
use fpcbag::ensemble::{bootstrap_fit, fit_calibration, oob_weighted_share, training_aggregated_probs, CalibrationMode};
use fpcbag::fpca::{pace_scores, FpcaConfig};
use fpcbag::simgen;

fn main() {
    let b = 400usize;
    let reps = 30u64;
    for scen in 1..=9usize {
        // [bayes_all, bayes_oob, oob_rule, mv, single-ish(skip)]
        let mut agg = [0.0f64; 4];
        for rep in 0..reps {
            let full = simgen::generate(&simgen::scenario(scen).unwrap().with_seed(17_000 + rep * 13 + scen as u64)).unwrap();
            let (train, test) = split(&full, &SplitSpec { train_fraction: 0.5, seed: 17_500 + rep }).unwrap();
            let model = bootstrap_fit(&train, ClassifierKind::RandomForest, b, &FpcaConfig::default(), &TuningConfig::default(), 18_000 + rep).unwrap();

            let n_test = test.len();
            let mut prob_sum = vec![0.0f64; n_test];
            let mut votes: Vec<Vec<u8>> = Vec::new();
            for replica in &model.replicas {
                let rows: Vec<Vec<f64>> = test.curves.iter().map(|c| pace_scores(&replica.fpca, c).unwrap().0).collect();
                let probs = classifiers::predict_proba_batch(&replica.classifier, &rows).unwrap();
                votes.push(probs.iter().map(|&p| u8::from(p > 0.5)).collect());
                for (s, p) in prob_sum.iter_mut().zip(&probs) { *s += p; }
            }
            let p_hat: Vec<f64> = prob_sum.iter().map(|s| s / b as f64).collect();
            let labels: Vec<u8> = test.curves.iter().map(|c| c.label.unwrap()).collect();
            let err_thr = |thr: f64| -> f64 {
                100.0 * p_hat.iter().zip(&labels).filter(|(p, &y)| u8::from(**p > thr) != y).count() as f64 / n_test as f64
            };
            for (mi, mode) in [CalibrationMode::AllReplicas, CalibrationMode::OobOnly].iter().enumerate() {
                let pairs: Vec<(f64, u8)> = training_aggregated_probs(&model, &train, *mode).unwrap()
                    .iter().map(|t| (t.probability, t.label)).collect();
                let c = fit_calibration(&pairs, 10.0, 2.5).unwrap();
                agg[mi] += err_thr(-c.beta0 / c.beta1);
            }
            agg[2] += 100.0 * (0..n_test).filter(|&i| {
                let v: Vec<u8> = votes.iter().map(|v| v[i]).collect();
                u8::from(oob_weighted_share(&v, &model.oob_errors) > 0.5) != labels[i]
            }).count() as f64 / n_test as f64;
            agg[3] += 100.0 * (0..n_test).filter(|&i| {
                let ones: usize = votes.iter().map(|v| v[i] as usize).sum();
                u8::from(2 * ones > b) != labels[i]
            }).count() as f64 / n_test as f64;
        }
        for a in agg.iter_mut() { *a /= reps as f64; }
        println!("s{scen} B={b}: bayesAll {:.2} | bayesOob {:.2} | oob {:.2} | mv {:.2}   dAll {:+.2} dOob {:+.2}",
            agg[0], agg[1], agg[2], agg[3], agg[0] - agg[2], agg[1] - agg[2]);
    }
}
