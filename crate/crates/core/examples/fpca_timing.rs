use std::time::Instant;
fn main() {
    let cfg = fpcbag::simgen::scenario(1).unwrap().with_seed(1);
    let ds = fpcbag::simgen::generate(&cfg).unwrap();
    let fc = fpcbag::fpca::FpcaConfig::default();
    let t0 = Instant::now();
    let mut k_sum = 0usize;
    for _ in 0..20 { let m = fpcbag::fpca::fit_fpca(&ds, &fc).unwrap(); k_sum += m.k; }
    println!("20 fits in {:?} (avg {:?}), mean K = {}", t0.elapsed(), t0.elapsed() / 20, k_sum as f64 / 20.0);
    // score all curves
    let m = fpcbag::fpca::fit_fpca(&ds, &fc).unwrap();
    let t1 = Instant::now();
    for _ in 0..20 { for c in &ds.curves { fpcbag::fpca::pace_scores(&m, c).unwrap(); } }
    println!("20x200 scorings in {:?}", t1.elapsed());
}
