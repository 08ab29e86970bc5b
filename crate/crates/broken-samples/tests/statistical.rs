//! Distributional checks on the random generators that the unit tests do
//! not already cover: chi-square goodness of fit for the torus marginal
//! law and for the uniformity of the within-batch shuffles.
//!
//! Critical values are for significance 0.001, so a correct generator
//! fails each test about once per thousand runs of a *fresh* seed; the
//! seeds here are fixed, making the tests deterministic.

use broken_samples::domain::{BrokenBatch, Dataset, GenerativeModel, Point};
use broken_samples::models::TorusWrappedGaussian;
use broken_samples::sampling::{break_batches, SeedSpec};

/// chi-square critical value, df = 99, significance 0.001.
const CHI2_DF99: f64 = 148.230_359_165_101_73;
/// chi-square critical value, df = 5, significance 0.001.
const CHI2_DF5: f64 = 20.515_005_652_432_873;

fn chi_square(counts: &[u64], total: u64) -> f64 {
    let expected = total as f64 / counts.len() as f64;
    counts
        .iter()
        .map(|&c| {
            let d = c as f64 - expected;
            d * d / expected
        })
        .sum()
}

/// The first coordinate of a generated pair is uniform on the unit
/// square: bin 100k draws into a 10x10 grid and test goodness of fit.
#[test]
fn torus_first_coordinate_is_uniform_on_the_square() {
    let model = TorusWrappedGaussian::new(0.07).unwrap();
    let mut rng = SeedSpec::new(4242).stream(0);
    let total = 100_000u64;
    let mut counts = [0u64; 100];
    for _ in 0..total {
        let pair = model.sample_pair(&mut rng);
        let a = ((pair.x.coord(0) * 10.0) as usize).min(9);
        let b = ((pair.x.coord(1) * 10.0) as usize).min(9);
        counts[a * 10 + b] += 1;
    }
    let stat = chi_square(&counts, total);
    assert!(
        stat < CHI2_DF99,
        "chi-square {stat:.2} exceeds the df=99 critical value {CHI2_DF99:.2}"
    );
    println!("torus marginal uniformity: chi-square {stat:.2} < {CHI2_DF99:.2}");
}

/// Breaking a batch of three tagged points hits all six orders equally
/// often: 60k shuffles, chi-square over the permutation counts.
#[test]
fn batch_breaking_draws_orderings_uniformly() {
    let tags: Vec<Point> = (0..3).map(|i| Point::scalar(i as f64)).collect();
    let batches = vec![BrokenBatch::new(tags.clone(), tags).unwrap(); 60_000];
    let data = Dataset::new(batches).unwrap();
    let mut rng = SeedSpec::new(777).stream(0);
    let broken = break_batches(data, &mut rng);

    // rank each outcome by the base-3 code of its tag sequence
    let codes = [5usize, 7, 11, 15, 19, 21]; // 012 021 102 120 201 210
    let mut counts = [0u64; 6];
    for batch in broken.batches() {
        let code = batch
            .ys()
            .iter()
            .fold(0usize, |acc, p| acc * 3 + p.coord(0) as usize);
        let slot = codes
            .iter()
            .position(|&c| c == code)
            .expect("a permutation");
        counts[slot] += 1;
    }
    let total: u64 = counts.iter().sum();
    assert_eq!(total, 60_000);
    let stat = chi_square(&counts, total);
    assert!(
        stat < CHI2_DF5,
        "chi-square {stat:.2} exceeds the df=5 critical value {CHI2_DF5:.2}; counts {counts:?}"
    );
    println!("shuffle uniformity: chi-square {stat:.2} < {CHI2_DF5:.2}, counts {counts:?}");
}
