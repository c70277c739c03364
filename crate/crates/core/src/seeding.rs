use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Independent generator for job `index` under `master_seed`.
///
/// Each index gets its own ChaCha stream, so jobs can run in any order or in
/// parallel and still draw identical numbers.
pub(crate) fn job_rng(master_seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(index);
    rng
}
