//! Seeded subsetting of control datasets.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::dataset::{Dataset, Sample, SubsetInfo};
use super::DistillError;

pub const CONTROL_PRNG: &str = "chacha8/seed_from_u64";

/// Uniform integer in `0..bound` by rejection, so no modulo bias.
fn below(rng: &mut ChaCha8Rng, bound: u64) -> u64 {
    debug_assert!(bound > 0);
    let zone = u64::MAX - (u64::MAX % bound);
    loop {
        let v = rng.next_u64();
        if v < zone {
            return v % bound;
        }
    }
}

/// Indices of `n` of `len` items drawn without replacement, sorted ascending.
///
/// Partial Fisher-Yates over `0..len` driven by ChaCha8 seeded through
/// `seed_from_u64`. The draw sequence depends only on `(len, n, seed)`.
pub fn control_indices(len: usize, n: usize, seed: u64) -> Result<Vec<usize>, DistillError> {
    if n > len {
        return Err(DistillError::Size { requested: n, available: len });
    }
    if n == len {
        return Ok((0..len).collect());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pool: Vec<usize> = (0..len).collect();
    for i in 0..n {
        let j = i + below(&mut rng, (len - i) as u64) as usize;
        pool.swap(i, j);
    }
    let mut picked = pool[..n].to_vec();
    picked.sort_unstable();
    Ok(picked)
}

pub fn sample_control_dataset<S: Sample>(
    dataset: &Dataset<S>,
    n: usize,
    seed: u64,
) -> Result<Dataset<S>, DistillError> {
    if n == 0 {
        return Err(DistillError::Input("control sample size must be positive".into()));
    }
    let indices = control_indices(dataset.len(), n, seed)?;
    let samples: Vec<S> = indices.iter().map(|&i| dataset.samples[i].clone()).collect();
    let mut manifest = dataset.manifest.clone();
    manifest.sample_count = samples.len();
    manifest.requested = n;
    manifest.skipped = 0;
    manifest.skips.clear();
    manifest.subset = Some(SubsetInfo {
        parent_checksum: dataset.content_checksum(),
        parent_size: dataset.len(),
        n,
        seed,
        prng: CONTROL_PRNG.into(),
    });
    Ok(Dataset { samples, manifest })
}
