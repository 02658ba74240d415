use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::datakit::Vocabulary;
use crate::{Error, Result};

/// Corrupts `ids` for masked-LM training. Each non-special position is
/// selected with probability `mask_prob`; selected positions become
/// `[MASK]` 80% of the time, a random non-reserved token 10% of the time,
/// and stay unchanged otherwise. Labels hold the original id at selected
/// positions.
pub fn mask_for_mlm(
    ids: &[u32],
    mask_prob: f64,
    vocab_size: usize,
    seed: u64,
) -> Result<(Vec<u32>, Vec<Option<u32>>)> {
    if !(0.0..=1.0).contains(&mask_prob) {
        return Err(Error::InvalidSpec(format!("mask probability {mask_prob} outside (0, 1]")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut corrupted = ids.to_vec();
    let mut labels = vec![None; ids.len()];
    let first_regular = Vocabulary::N_RESERVED as u32;
    for (i, &id) in ids.iter().enumerate() {
        if Vocabulary::is_special(id) || !rng.random_bool(mask_prob) {
            continue;
        }
        labels[i] = Some(id);
        let roll: f64 = rng.random();
        if roll < 0.8 {
            corrupted[i] = Vocabulary::MASK;
        } else if roll < 0.9 && (vocab_size as u32) > first_regular {
            corrupted[i] = rng.random_range(first_regular..vocab_size as u32);
        }
    }
    Ok((corrupted, labels))
}
