//! Seeded random draws shared by the simulators and permutation tests.
//!
//! All randomness flows from ChaCha8 streams keyed by a `u64` seed.
//! Replicate `b` of a run seeded with `s` uses seed `s + b` (wrapping), so
//! replicates can be evaluated in any order or in parallel.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Hypergeometric};

pub type SeededRng = ChaCha8Rng;

pub fn rng_for(seed: u64) -> SeededRng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn replicate_seed(seed: u64, replicate: usize) -> u64 {
    seed.wrapping_add(replicate as u64)
}

/// Master seed of an independent sub-stream, e.g. the permutation null of a
/// run whose sample split used `seed` itself. SplitMix64 finalizer, so nearby
/// seeds give unrelated sub-streams.
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Relative weight below which binomial tail mass is ignored.
const TAIL_CUTOFF: f64 = 1e-20;

/// One `Bin(n, p)` draw by inversion of the CDF.
///
/// The probability mass is built outward from the mode, so it never
/// underflows for large `n`; mass below `1e-20` of the modal weight is
/// dropped.
pub fn binomial_inverse_cdf<R: Rng + ?Sized>(rng: &mut R, n: u64, p: f64) -> u64 {
    if n == 0 || p <= 0.0 {
        return 0;
    }
    if p >= 1.0 {
        return n;
    }
    let odds = p / (1.0 - p);
    let mode = (((n + 1) as f64) * p).floor().min(n as f64) as u64;

    let mut below = Vec::new();
    let mut w = 1.0;
    let mut k = mode;
    while k > 0 {
        w *= k as f64 / ((n - k + 1) as f64 * odds);
        if w < TAIL_CUTOFF {
            break;
        }
        below.push(w);
        k -= 1;
    }
    let mut above = Vec::new();
    let mut w = 1.0;
    let mut k = mode;
    while k < n {
        w *= (n - k) as f64 / (k + 1) as f64 * odds;
        if w < TAIL_CUTOFF {
            break;
        }
        above.push(w);
        k += 1;
    }

    let total: f64 = below.iter().sum::<f64>() + 1.0 + above.iter().sum::<f64>();
    let target = rng.random::<f64>() * total;
    let lo = mode - below.len() as u64;
    let mut acc = 0.0;
    for (i, &w) in below.iter().rev().enumerate() {
        acc += w;
        if target < acc {
            return lo + i as u64;
        }
    }
    acc += 1.0;
    if target < acc {
        return mode;
    }
    for (i, &w) in above.iter().enumerate() {
        acc += w;
        if target < acc {
            return mode + 1 + i as u64;
        }
    }
    mode + above.len() as u64
}

/// Number of successes among `draws` items taken without replacement from
/// `population` items of which `successes` are successes.
pub fn hypergeometric<R: Rng + ?Sized>(rng: &mut R, population: u64, successes: u64, draws: u64) -> u64 {
    debug_assert!(successes <= population && draws <= population);
    if draws == 0 || successes == 0 {
        return 0;
    }
    if successes == population {
        return draws;
    }
    if draws == population {
        return successes;
    }
    Hypergeometric::new(population, successes, draws)
        .expect("valid hypergeometric parameters")
        .sample(rng)
}

/// Allocates `total` successes over cells with the given capacities, as if
/// the `Σ capacities` items were shuffled and the successes fell where they
/// may. Each cell receives at most its capacity.
pub fn multivariate_hypergeometric<R: Rng + ?Sized>(rng: &mut R, total: u64, capacities: &[u64]) -> Vec<u64> {
    let mut remaining_pop: u64 = capacities.iter().sum();
    debug_assert!(total <= remaining_pop);
    let mut remaining = total;
    let mut out = Vec::with_capacity(capacities.len());
    for &cap in capacities {
        let k = hypergeometric(rng, remaining_pop, remaining, cap);
        out.push(k);
        remaining -= k;
        remaining_pop -= cap;
    }
    out
}
