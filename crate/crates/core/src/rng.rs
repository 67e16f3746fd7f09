//! Deterministic seed streams.
//!
//! Every random draw in the crate goes through a [`ChaCha8Rng`] seeded from a
//! `u64`. Child seeds are derived by mixing the parent with a list of keys, so
//! that grid cells, repetitions and per-tree streams are independent of the
//! order in which they run.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mix `parent` with `keys` into a new seed.
pub fn derive_seed(parent: u64, keys: &[u64]) -> u64 {
    keys.iter()
        .fold(splitmix64(parent), |acc, &k| splitmix64(acc ^ splitmix64(k)))
}

/// Stable key for a string label.
pub fn label_key(label: &str) -> u64 {
    // FNV-1a
    label.bytes().fold(0xcbf2_9ce4_8422_2325u64, |h, b| {
        (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01B3)
    })
}

pub fn rng_from_seed(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn child_rng(parent: u64, keys: &[u64]) -> Rng {
    rng_from_seed(derive_seed(parent, keys))
}

/// Draw `k` distinct indices with inclusion driven by `weights`
/// (Efraimidis–Spirakis: keep the `k` largest `ln(u) / w`). Returned indices
/// are sorted ascending.
pub fn weighted_sample_without_replacement(
    weights: &[f64],
    k: usize,
    rng: &mut Rng,
) -> crate::Result<Vec<usize>> {
    use rand::Rng as _;
    if let Some(i) = weights.iter().position(|w| !w.is_finite() || *w < 0.0) {
        return Err(crate::Error::InvalidArgument(format!(
            "sampling weight {} at index {i}",
            weights[i]
        )));
    }
    let positive = weights.iter().filter(|w| **w > 0.0).count();
    if k > positive {
        return Err(crate::Error::InvalidArgument(format!(
            "cannot draw {k} rows from a pool with {positive} positive weights"
        )));
    }
    let mut keyed: Vec<(f64, usize)> = weights
        .iter()
        .enumerate()
        .map(|(i, &w)| {
            // u in (0, 1]; one draw per index keeps streams aligned across weightings
            let u: f64 = 1.0 - rng.random::<f64>();
            let key = if w > 0.0 { u.ln() / w } else { f64::NEG_INFINITY };
            (key, i)
        })
        .collect();
    if k < keyed.len() && k > 0 {
        keyed.select_nth_unstable_by(k - 1, |a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    }
    let mut out: Vec<usize> = keyed[..k].iter().map(|&(_, i)| i).collect();
    out.sort_unstable();
    Ok(out)
}
