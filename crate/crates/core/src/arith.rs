//! Modular arithmetic over `u64` toy parameters.
//!
//! Everything in the simulator's number theory lives here: modular
//! exponentiation, deterministic Miller-Rabin, trial-division and
//! Pollard-rho factoring, multiplicative order, modular inverse, and a
//! baby-step giant-step discrete log solver. All moduli in the simulator
//! fit in `u64`, so intermediate products are done in `u128`.

use std::collections::HashMap;

pub fn mul_mod(a: u64, b: u64, m: u64) -> u64 {
    ((a as u128 * b as u128) % m as u128) as u64
}

pub fn mod_exp(mut base: u64, mut exp: u64, modulus: u64) -> u64 {
    if modulus == 1 {
        return 0;
    }
    let mut acc = 1u64;
    base %= modulus;
    while exp > 0 {
        if exp & 1 == 1 {
            acc = mul_mod(acc, base, modulus);
        }
        base = mul_mod(base, base, modulus);
        exp >>= 1;
    }
    acc
}

/// Deterministic Miller-Rabin, valid for all `u64` with this base set.
pub fn is_prime(n: u64) -> bool {
    if n < 2 {
        return false;
    }
    for p in [2u64, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37] {
        if n == p {
            return true;
        }
        if n % p == 0 {
            return false;
        }
    }
    let mut d = n - 1;
    let mut r = 0u32;
    while d & 1 == 0 {
        d >>= 1;
        r += 1;
    }
    'witness: for a in [2u64, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37] {
        let mut x = mod_exp(a, d, n);
        if x == 1 || x == n - 1 {
            continue;
        }
        for _ in 0..r - 1 {
            x = mul_mod(x, x, n);
            if x == n - 1 {
                continue 'witness;
            }
        }
        return false;
    }
    true
}

/// Prime factorization by trial division; fine for the < 2^32 values the
/// group catalog uses. Returns (prime, multiplicity) pairs.
pub fn factorize(mut n: u64) -> Vec<(u64, u32)> {
    let mut out = Vec::new();
    let mut push = |p: u64, n: &mut u64| {
        let mut k = 0u32;
        while *n % p == 0 {
            *n /= p;
            k += 1;
        }
        if k > 0 {
            out.push((p, k));
        }
    };
    push(2, &mut n);
    let mut p = 3u64;
    while p.saturating_mul(p) <= n {
        push(p, &mut n);
        p += 2;
    }
    if n > 1 {
        out.push((n, 1));
    }
    out
}

/// Smallest prime factor, by trial division. `None` for n < 2.
pub fn smallest_prime_factor(n: u64) -> Option<u64> {
    if n < 2 {
        return None;
    }
    if n % 2 == 0 {
        return Some(2);
    }
    let mut p = 3u64;
    while p.saturating_mul(p) <= n {
        if n % p == 0 {
            return Some(p);
        }
        p += 2;
    }
    Some(n)
}

/// Pollard's rho with Brent's cycle detection. Used only by the
/// Bleichenbacher decryption oracle, which stands in for an SSLv2 server
/// that decrypts regardless of modulus size.
pub fn pollard_rho(n: u64) -> Option<u64> {
    if n < 2 {
        return None;
    }
    if n % 2 == 0 {
        return Some(2);
    }
    if is_prime(n) {
        return Some(n);
    }
    for c in 1..64u64 {
        let f = |x: u64| (mul_mod(x, x, n) + c) % n;
        let (mut x, mut y, mut d) = (2u64, 2u64, 1u64);
        while d == 1 {
            x = f(x);
            y = f(f(y));
            d = gcd(x.abs_diff(y), n);
        }
        if d != n {
            return Some(d);
        }
    }
    None
}

pub fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        let t = a % b;
        a = b;
        b = t;
    }
    a
}

/// Modular inverse of `a` mod `m`, if gcd(a, m) == 1.
pub fn mod_inverse(a: u64, m: u64) -> Option<u64> {
    let (mut old_r, mut r) = (a as i128, m as i128);
    let (mut old_s, mut s) = (1i128, 0i128);
    while r != 0 {
        let q = old_r / r;
        (old_r, r) = (r, old_r - q * r);
        (old_s, s) = (s, old_s - q * s);
    }
    if old_r != 1 {
        return None;
    }
    Some(old_s.rem_euclid(m as i128) as u64)
}

/// Multiplicative order of `g` mod prime `p`.
pub fn element_order(g: u64, p: u64) -> u64 {
    let mut order = p - 1;
    for (q, _) in factorize(p - 1) {
        while order % q == 0 && mod_exp(g, order / q, p) == 1 {
            order /= q;
        }
    }
    order
}

/// Baby-step giant-step: find x with g^x = target (mod p), x < order.
/// Memory and time are O(sqrt(order)).
pub fn baby_step_giant_step(g: u64, target: u64, p: u64, order: u64) -> Option<u64> {
    let m = (order as f64).sqrt().ceil() as u64 + 1;
    let mut table = HashMap::with_capacity(m as usize);
    let mut e = 1u64;
    for j in 0..m {
        table.entry(e).or_insert(j);
        e = mul_mod(e, g, p);
    }
    // g^(-m) via g^(order - m)
    let factor = mod_exp(g, order - (m % order), p);
    let mut gamma = target % p;
    for i in 0..=m {
        if let Some(&j) = table.get(&gamma) {
            let x = (i * m + j) % order;
            if mod_exp(g, x, p) == target % p {
                return Some(x);
            }
        }
        gamma = mul_mod(gamma, factor, p);
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn modexp_matches_naive() {
        // independent oracle: repeated multiplication
        fn naive(g: u64, e: u64, p: u64) -> u64 {
            let mut acc = 1u64;
            for _ in 0..e {
                acc = (acc as u128 * g as u128 % p as u128) as u64;
            }
            acc
        }
        for (g, e, p) in [(5u64, 6, 23), (5, 15, 23), (7, 100, 65537), (13, 999, 2147483647)] {
            assert_eq!(mod_exp(g, e, p), naive(g, e, p));
        }
    }

    #[test]
    fn primality_small_range() {
        let primes: Vec<u64> = (2..200).filter(|&n| (2..n).all(|d| n % d != 0)).collect();
        for n in 2..200u64 {
            assert_eq!(is_prime(n), primes.contains(&n), "n={n}");
        }
        assert!(is_prime(2147483647));
        assert!(is_prime(65521));
        assert!(is_prime(65537));
        assert!(!is_prime(65536));
    }

    #[test]
    fn bsgs_agrees_with_exhaustive_search() {
        let p = 23u64;
        let g = 5u64;
        let order = element_order(g, p);
        assert_eq!(order, 22);
        for x in 0..order {
            let target = mod_exp(g, x, p);
            // exhaustive oracle
            let brute = (0..order).find(|&k| mod_exp(g, k, p) == target).unwrap();
            assert_eq!(baby_step_giant_step(g, target, p, order), Some(brute));
        }
    }

    #[test]
    fn pollard_rho_splits_semiprime() {
        let n = 65537u64 * 65539;
        let f = pollard_rho(n).unwrap();
        assert!(f == 65537 || f == 65539);
        assert_eq!(n % f, 0);
    }

    #[test]
    fn inverse_round_trip() {
        let m = 65538u64;
        for a in 1..200u64 {
            if gcd(a, m) == 1 {
                let inv = mod_inverse(a, m).unwrap();
                assert_eq!(mul_mod(a, inv, m), 1);
            } else {
                assert!(mod_inverse(a, m).is_none());
            }
        }
    }

    #[test]
    fn order_divides_group_order() {
        for (g, p) in [(5u64, 23u64), (13, 2147483647), (3, 65537)] {
            let ord = element_order(g, p);
            assert_eq!((p - 1) % ord, 0);
            assert_eq!(mod_exp(g, ord, p), 1);
            assert!((1..ord).all(|k| ord % k != 0 || mod_exp(g, k, p) != 1 || k == ord));
        }
    }
}
