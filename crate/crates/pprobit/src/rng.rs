//! Counter-based randomness: every draw is a pure function of its key, so
//! the same (seed, index) always yields the same value regardless of pass,
//! worker, or feed order. This is what lets the two-pass algorithm see one
//! consistent sketch realization and lets sharded samplers merge
//! deterministically.

/// SplitMix64 finalizer; a full-avalanche 64-bit mix.
#[inline]
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mix a seed with one counter.
#[inline]
pub fn mix2(seed: u64, a: u64) -> u64 {
    splitmix64(splitmix64(seed).wrapping_add(splitmix64(a)))
}

/// Mix a seed with two counters. Split into a `b`-only part and a finish so
/// a bank of streams (one per `a`) can hoist the shared per-`b` work:
/// `mix3(seed, a, b) == mix3_finish(mix2(seed, a), mix3_partial(b))`.
#[inline]
pub fn mix3(seed: u64, a: u64, b: u64) -> u64 {
    mix3_finish(mix2(seed, a), mix3_partial(b))
}

#[inline]
pub fn mix3_partial(b: u64) -> u64 {
    splitmix64(b ^ 0xA5A5_A5A5_A5A5_A5A5)
}

#[inline]
pub fn mix3_finish(key: u64, partial: u64) -> u64 {
    splitmix64(key.wrapping_add(partial))
}

/// Map a 64-bit word to [0, 1) with 53 bits of precision.
#[inline]
pub fn unit_f64(u: u64) -> f64 {
    (u >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Standard exponential variate by inverse cdf: λ = −ln(1 − u).
#[inline]
pub fn exponential_from(u: u64) -> f64 {
    -(-unit_f64(u)).ln_1p()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn draws_are_deterministic_and_distinct() {
        assert_eq!(mix3(1, 2, 3), mix3(1, 2, 3));
        assert_ne!(mix3(1, 2, 3), mix3(1, 2, 4));
        assert_ne!(mix3(1, 2, 3), mix3(1, 3, 2));
        assert_ne!(mix2(0, 0), mix2(0, 1));
    }

    #[test]
    fn unit_values_are_in_range_with_plausible_mean() {
        let mut sum = 0.0;
        let n = 100_000u64;
        for i in 0..n {
            let u = unit_f64(mix2(99, i));
            assert!((0.0..1.0).contains(&u));
            sum += u;
        }
        let mean = sum / n as f64;
        assert!((mean - 0.5).abs() < 0.005, "mean {mean}");
    }

    #[test]
    fn exponential_mean_is_one() {
        // Exp(1) sanity over 1e5 draws.
        let n = 100_000u64;
        let mut sum = 0.0;
        for i in 0..n {
            let lam = exponential_from(mix2(7, i));
            assert!(lam > 0.0);
            sum += lam;
        }
        let mean = sum / n as f64;
        assert!((0.99..1.01).contains(&mean), "mean {mean}");
    }
}
