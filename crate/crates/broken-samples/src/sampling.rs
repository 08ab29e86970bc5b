//! Deterministic random-number plumbing: a master seed fans out into
//! independent per-replicate streams, datasets are drawn pair by pair, and
//! batches are *broken* by shuffling their second coordinates.
//!
//! Reproducibility contract: every stream is a ChaCha stream cipher with 8
//! rounds keyed by four SplitMix64 outputs, and all derived quantities
//! (uniform doubles, normal pairs, shuffle indices) are produced by the
//! fixed, documented maps below rather than by library conveniences. A
//! `(master_seed, replicate)` pair therefore yields the same bytes on every
//! platform, thread count, and release, and golden values recorded in the
//! tests pin the whole chain down.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_core::RngCore;

use crate::domain::{BrokenBatch, CoreError, Dataset, GenerativeModel};

/// SplitMix64 golden-ratio increment (Steele, Lea & Flood).
const SPLITMIX_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

/// One SplitMix64 step: advance the state by the golden-ratio increment and
/// return the avalanche-mixed output.
fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(SPLITMIX_GAMMA);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Master seed for an experiment; hands out decorrelated per-replicate
/// streams through a counter-based derivation, so replicate `r`'s stream can
/// be constructed without generating replicates `0..r-1` first.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SeedSpec {
    master_seed: u64,
}

impl SeedSpec {
    pub fn new(master_seed: u64) -> Self {
        Self { master_seed }
    }

    pub fn master_seed(&self) -> u64 {
        self.master_seed
    }

    /// The ChaCha8 stream for one replicate: the 256-bit key is four
    /// consecutive SplitMix64 outputs seeded with
    /// `master_seed XOR (replicate * gamma)`, which avalanche-mixes the
    /// counter into every key bit.
    pub fn stream(&self, replicate: u64) -> ChaCha8Rng {
        let mut state = self.master_seed ^ replicate.wrapping_mul(SPLITMIX_GAMMA);
        let mut seed = [0u8; 32];
        for chunk in seed.chunks_exact_mut(8) {
            chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
        }
        ChaCha8Rng::from_seed(seed)
    }
}

/// Uniform double in `[0, 1)` from the top 53 bits of one `u64` draw.
pub fn unit_f64(rng: &mut dyn RngCore) -> f64 {
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Pair of independent standard normals via the Box–Muller transform.
/// The radial uniform is shifted into `(0, 1]` so its logarithm is finite.
pub fn normal_pair(rng: &mut dyn RngCore) -> (f64, f64) {
    let u1 = ((rng.next_u64() >> 11) + 1) as f64 * (1.0 / (1u64 << 53) as f64);
    let u2 = unit_f64(rng);
    let r = (-2.0 * u1.ln()).sqrt();
    let t = std::f64::consts::TAU * u2;
    (r * t.cos(), r * t.sin())
}

/// Uniform index in `0..bound` by rejection sampling, so every value is
/// exactly equally likely (no modulo bias).
pub(crate) fn uniform_index(rng: &mut dyn RngCore, bound: usize) -> usize {
    debug_assert!(bound > 0);
    let bound = bound as u64;
    let zone = u64::MAX - u64::MAX % bound;
    loop {
        let v = rng.next_u64();
        if v < zone {
            return (v % bound) as usize;
        }
    }
}

/// Draws `n` batches of `m` paired samples from the generative model, in
/// batch-major order. The returned dataset is still *unbroken*: index `i` of
/// `xs` and `ys` belong to the same original pair.
pub fn generate_dataset(
    model: &dyn GenerativeModel,
    m: usize,
    n: usize,
    rng: &mut dyn RngCore,
) -> Result<Dataset, CoreError> {
    if m == 0 || n == 0 {
        return Err(CoreError::EmptyDataset);
    }
    let mut batches = Vec::with_capacity(n);
    for _ in 0..n {
        let mut xs = Vec::with_capacity(m);
        let mut ys = Vec::with_capacity(m);
        for _ in 0..m {
            let pair = model.sample_pair(rng);
            xs.push(pair.x);
            ys.push(pair.y);
        }
        batches.push(BrokenBatch::new(xs, ys)?);
    }
    Dataset::new(batches)
}

/// Forgets the pairing: each batch's `ys` are permuted by an independent
/// uniform permutation (Fisher–Yates over the supplied stream) while the
/// `xs` stay in draw order. Batches are processed in index order, so the
/// result is a deterministic function of `(dataset, stream state)`.
pub fn break_batches(dataset: Dataset, rng: &mut dyn RngCore) -> Dataset {
    let batches = dataset
        .into_batches()
        .into_iter()
        .map(|batch| {
            let (xs, mut ys) = batch.into_parts();
            for i in (1..ys.len()).rev() {
                ys.swap(i, uniform_index(rng, i + 1));
            }
            BrokenBatch::new(xs, ys).expect("lengths preserved by shuffling")
        })
        .collect();
    Dataset::new(batches).expect("breaking preserves validity")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{PairSample, ParamDomain, ParamPoint, Point};

    /// Minimal generator: pairs of consecutive counter values.
    struct CountingModel {
        domain: ParamDomain,
    }

    impl CountingModel {
        fn new() -> Self {
            Self {
                domain: ParamDomain::scalar(0.0, 1.0).unwrap(),
            }
        }
    }

    impl GenerativeModel for CountingModel {
        fn true_param(&self) -> ParamPoint {
            self.domain.center()
        }

        fn sample_pair(&self, rng: &mut dyn RngCore) -> PairSample {
            PairSample {
                x: Point::scalar(unit_f64(rng)),
                y: Point::scalar(unit_f64(rng)),
            }
        }
    }

    #[test]
    fn streams_are_reproducible_and_decorrelated() {
        let spec = SeedSpec::new(42);
        let mut a = spec.stream(7);
        let mut b = spec.stream(7);
        assert_eq!(a.next_u64(), b.next_u64());

        let mut c = spec.stream(8);
        assert_ne!(spec.stream(7).next_u64(), c.next_u64());
        assert_ne!(
            SeedSpec::new(43).stream(7).next_u64(),
            spec.stream(7).next_u64()
        );
    }

    #[test]
    fn unit_f64_stays_in_half_open_interval() {
        let mut rng = SeedSpec::new(1).stream(0);
        for _ in 0..10_000 {
            let u = unit_f64(&mut rng);
            assert!((0.0..1.0).contains(&u));
        }
    }

    #[test]
    fn normal_pair_is_finite_and_centered() {
        let mut rng = SeedSpec::new(2).stream(0);
        let mut sum = 0.0;
        let mut sumsq = 0.0;
        let n = 50_000;
        for _ in 0..n {
            let (a, b) = normal_pair(&mut rng);
            assert!(a.is_finite() && b.is_finite());
            sum += a + b;
            sumsq += a * a + b * b;
        }
        let mean = sum / (2.0 * n as f64);
        let var = sumsq / (2.0 * n as f64);
        assert!(mean.abs() < 0.02, "mean {mean}");
        assert!((var - 1.0).abs() < 0.03, "variance {var}");
    }

    #[test]
    fn generate_is_deterministic_in_seed_and_replicate() {
        let model = CountingModel::new();
        let spec = SeedSpec::new(9);
        let a = generate_dataset(&model, 4, 3, &mut spec.stream(0)).unwrap();
        let b = generate_dataset(&model, 4, 3, &mut spec.stream(0)).unwrap();
        assert_eq!(a, b);
        let c = generate_dataset(&model, 4, 3, &mut spec.stream(1)).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn generate_rejects_empty_shapes() {
        let model = CountingModel::new();
        let spec = SeedSpec::new(0);
        assert!(matches!(
            generate_dataset(&model, 0, 3, &mut spec.stream(0)),
            Err(CoreError::EmptyDataset)
        ));
        assert!(matches!(
            generate_dataset(&model, 3, 0, &mut spec.stream(0)),
            Err(CoreError::EmptyDataset)
        ));
    }

    #[test]
    fn breaking_permutes_ys_and_keeps_xs() {
        let model = CountingModel::new();
        let spec = SeedSpec::new(5);
        let data = generate_dataset(&model, 64, 2, &mut spec.stream(0)).unwrap();
        let broken = break_batches(data.clone(), &mut spec.stream(1));

        for (orig, brk) in data.batches().iter().zip(broken.batches()) {
            assert_eq!(orig.xs(), brk.xs(), "xs must stay in draw order");
            let mut a: Vec<u64> = orig.ys().iter().map(|p| p.coord(0).to_bits()).collect();
            let mut b: Vec<u64> = brk.ys().iter().map(|p| p.coord(0).to_bits()).collect();
            a.sort_unstable();
            b.sort_unstable();
            assert_eq!(a, b, "ys must be permuted, not altered");
        }
        // with m = 64 the identity permutation on both batches is absurdly unlikely
        assert_ne!(data, broken);
    }

    #[test]
    fn breaking_is_deterministic() {
        let model = CountingModel::new();
        let spec = SeedSpec::new(5);
        let data = generate_dataset(&model, 8, 4, &mut spec.stream(0)).unwrap();
        let a = break_batches(data.clone(), &mut spec.stream(1));
        let b = break_batches(data, &mut spec.stream(1));
        assert_eq!(a, b);
    }

    /// Golden values pinning the full derivation chain (SplitMix64 key
    /// schedule -> ChaCha8 stream -> shuffle indices). Captured once from
    /// this implementation; a change in any stage is a breaking change.
    #[test]
    fn golden_stream_and_permutation() {
        let mut rng = SeedSpec::new(42).stream(0);
        let first = rng.next_u64();

        let ys: Vec<Point> = (0..6).map(|i| Point::scalar(i as f64)).collect();
        let xs = ys.clone();
        let data = Dataset::new(vec![BrokenBatch::new(xs, ys).unwrap()]).unwrap();
        let broken = break_batches(data, &mut SeedSpec::new(42).stream(0));
        let perm: Vec<f64> = broken.batches()[0]
            .ys()
            .iter()
            .map(|p| p.coord(0))
            .collect();

        // EXPECTED_* captured from the reference stream on first run.
        const EXPECTED_FIRST: u64 = 3_536_907_876_931_541_756;
        const EXPECTED_PERM: [f64; 6] = [5.0, 1.0, 4.0, 3.0, 0.0, 2.0];
        assert_eq!(first, EXPECTED_FIRST);
        assert_eq!(perm, EXPECTED_PERM);
    }
}
