//! Seed derivation and sampling of unique solver groups.

use std::collections::BTreeSet;

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// splitmix64 finalizer.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derives an independent stream seed from a master seed and a label path,
/// e.g. `["evaluate", "gpt4|claude", "top5", "fold2", "case17"]`. Stable
/// across platforms and independent of scheduling.
pub fn derive_seed(master: u64, parts: &[&str]) -> u64 {
    let mut h = mix(master);
    for part in parts {
        let mut f: u64 = 0xcbf2_9ce4_8422_2325;
        for b in part.as_bytes() {
            f ^= u64::from(*b);
            f = f.wrapping_mul(0x0000_0100_0000_01b3);
        }
        h = mix(h ^ f);
    }
    h
}

pub fn rng_from(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Binomial coefficient, saturating at `u128::MAX`.
pub fn n_choose_k(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = match acc.checked_mul((n - i) as u128) {
            Some(v) => v / (i as u128 + 1),
            None => return u128::MAX,
        };
    }
    acc
}

/// All k-subsets of `0..n` in lexicographic order.
pub fn combinations(n: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    if k > n {
        return out;
    }
    let mut current: Vec<usize> = (0..k).collect();
    loop {
        out.push(current.clone());
        let mut i = k;
        loop {
            if i == 0 {
                return out;
            }
            i -= 1;
            if current[i] != i + n - k {
                break;
            }
            if i == 0 {
                return out;
            }
        }
        current[i] += 1;
        for j in i + 1..k {
            current[j] = current[j - 1] + 1;
        }
    }
}

/// Up to `max_groups` distinct `size`-subsets of `0..pool`, as sorted index
/// lists in lexicographic order. When every subset fits under the cap they
/// are all returned and the seed is unused; otherwise subsets are drawn
/// uniformly without replacement.
pub fn sample_groups(pool: usize, size: usize, max_groups: usize, seed: u64) -> Vec<Vec<usize>> {
    if size == 0 || size > pool || max_groups == 0 {
        return Vec::new();
    }
    if n_choose_k(pool, size) <= max_groups as u128 {
        return combinations(pool, size);
    }
    let mut rng = rng_from(seed);
    let mut seen: BTreeSet<Vec<usize>> = BTreeSet::new();
    while seen.len() < max_groups {
        let mut group = index::sample(&mut rng, pool, size).into_vec();
        group.sort_unstable();
        seen.insert(group);
    }
    seen.into_iter().collect()
}
