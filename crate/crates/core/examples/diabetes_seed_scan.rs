//! OLS test R² on the bundled Diabetes data across split seeds.
//!
//!   cargo run --release --example diabetes_seed_scan

use kfreg::baselines::fit_ols;
use kfreg::data::{fit_standardizer, load_csv, split};
use kfreg::metrics::r_squared;
use kfreg::sgd::predict;

fn main() -> kfreg::Result<()> {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/data/diabetes.csv");
    let data = load_csv(path, "progression", b',')?;
    let mut scores = Vec::new();
    for seed in 0..200u64 {
        let parts = split(&data, 0.2, seed)?;
        let s = fit_standardizer(&parts.train);
        let (train, test) = (s.apply(&parts.train)?, s.apply(&parts.test)?);
        let model = fit_ols(&train)?;
        let pred = predict(&model, test.features())?;
        scores.push((seed, r_squared(test.targets().as_slice(), pred.as_slice())?));
    }
    let in_band = scores.iter().filter(|(_, r)| (0.40..=0.55).contains(r)).count();
    let mut sorted: Vec<f64> = scores.iter().map(|s| s.1).collect();
    sorted.sort_by(f64::total_cmp);
    println!("seeds: {}, in [0.40, 0.55]: {in_band}", scores.len());
    println!(
        "min {:.4}  q25 {:.4}  median {:.4}  q75 {:.4}  max {:.4}",
        sorted[0],
        sorted[sorted.len() / 4],
        sorted[sorted.len() / 2],
        sorted[3 * sorted.len() / 4],
        sorted[sorted.len() - 1]
    );
    for (seed, r) in scores.iter().take(10) {
        println!("seed {seed}: {r:.4}");
    }
    Ok(())
}
