//! Integer and rational helpers shared by the number-theoretic modules.

use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::Ratio;
use num_traits::{One, Signed, ToPrimitive, Zero};

use crate::error::{Error, Result};

/// Exact rational used for every κ value.
pub type Rational = Ratio<i128>;

/// Renders a rational as `"p/q"` (always with an explicit denominator).
pub fn format_rational(r: &Rational) -> String {
    format!("{}/{}", r.numer(), r.denom())
}

/// Parses `"p/q"`, `"p"` or a plain integer string.
pub fn parse_rational(s: &str) -> Result<Rational> {
    let s = s.trim();
    let parse = |t: &str| {
        t.trim()
            .parse::<i128>()
            .map_err(|_| Error::invalid(format!("not a rational: {s:?}")))
    };
    match s.split_once('/') {
        Some((n, d)) => {
            let d = parse(d)?;
            if d == 0 {
                return Err(Error::invalid(format!("zero denominator in {s:?}")));
            }
            Ok(Rational::new(parse(n)?, d))
        }
        None => Ok(Rational::from_integer(parse(s)?)),
    }
}

pub fn rational_to_f64(r: &Rational) -> f64 {
    *r.numer() as f64 / *r.denom() as f64
}

pub fn gcd(a: u64, b: u64) -> u64 {
    a.gcd(&b)
}

pub fn lcm(a: u128, b: u128) -> u128 {
    a / a.gcd(&b) * b
}

fn mul_mod(a: u64, b: u64, m: u64) -> u64 {
    ((a as u128 * b as u128) % m as u128) as u64
}

pub fn pow_mod(mut base: u64, mut exp: u64, m: u64) -> u64 {
    let mut acc = 1 % m;
    base %= m;
    while exp > 0 {
        if exp & 1 == 1 {
            acc = mul_mod(acc, base, m);
        }
        base = mul_mod(base, base, m);
        exp >>= 1;
    }
    acc
}

/// Deterministic Miller–Rabin for 64-bit integers.
pub fn is_prime(n: u64) -> bool {
    if n < 2 {
        return false;
    }
    for p in [2u64, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37] {
        if n % p == 0 {
            return n == p;
        }
    }
    let (mut d, mut r) = (n - 1, 0);
    while d % 2 == 0 {
        d /= 2;
        r += 1;
    }
    'witness: for a in [2u64, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37] {
        let mut x = pow_mod(a, d, n);
        if x == 1 || x == n - 1 {
            continue;
        }
        for _ in 1..r {
            x = mul_mod(x, x, n);
            if x == n - 1 {
                continue 'witness;
            }
        }
        return false;
    }
    true
}

/// Prime factorization by trial division (inputs here are moduli, so small).
pub fn factorize(mut n: u64) -> Vec<(u64, u32)> {
    let mut out = Vec::new();
    let mut p = 2u64;
    while p * p <= n {
        if n % p == 0 {
            let mut e = 0;
            while n % p == 0 {
                n /= p;
                e += 1;
            }
            out.push((p, e));
        }
        p += if p == 2 { 1 } else { 2 };
    }
    if n > 1 {
        out.push((n, 1));
    }
    out
}

pub fn euler_phi(n: u64) -> u64 {
    factorize(n)
        .into_iter()
        .fold(n, |acc, (p, _)| acc / p * (p - 1))
}

/// If `n = p^k` with `p` prime and `k ≥ 1`, returns `(p, k)`.
pub fn prime_power(n: u64) -> Option<(u64, u32)> {
    match factorize(n).as_slice() {
        [(p, k)] => Some((*p, *k)),
        _ => None,
    }
}

/// Sieve of Eratosthenes: `flags[x]` is true iff `x` is prime, for `x ≤ limit`.
pub fn prime_flags(limit: usize) -> Vec<bool> {
    let mut flags = vec![true; limit + 1];
    flags[0] = false;
    if limit >= 1 {
        flags[1] = false;
    }
    let mut p = 2;
    while p * p <= limit {
        if flags[p] {
            let mut m = p * p;
            while m <= limit {
                flags[m] = false;
                m += p;
            }
        }
        p += 1;
    }
    flags
}

pub fn primes_up_to(limit: usize) -> Vec<u64> {
    prime_flags(limit)
        .iter()
        .enumerate()
        .filter_map(|(i, &b)| b.then_some(i as u64))
        .collect()
}

/// `flags[x]` is true iff `x ≥ 1` is not divisible by any `p^k` with `p` prime.
pub fn kfree_flags(limit: usize, k: u32) -> Vec<bool> {
    let mut flags = vec![true; limit + 1];
    flags[0] = false;
    let root = (limit as f64).powf(1.0 / k as f64) as usize + 1;
    for p in primes_up_to(root) {
        let Some(pk) = (p as usize).checked_pow(k) else {
            continue;
        };
        let mut m = pk;
        while m <= limit {
            flags[m] = false;
            m += pk;
        }
    }
    flags
}

/// Jacobi symbol `(a/n)` for odd positive `n`.
pub fn jacobi(a: i128, n: u64) -> i32 {
    assert!(n % 2 == 1, "jacobi symbol needs an odd modulus");
    let mut a = a.rem_euclid(n as i128) as u64;
    let mut n = n;
    let mut sign = 1;
    while a != 0 {
        while a % 2 == 0 {
            a /= 2;
            if n % 8 == 3 || n % 8 == 5 {
                sign = -sign;
            }
        }
        std::mem::swap(&mut a, &mut n);
        if a % 4 == 3 && n % 4 == 3 {
            sign = -sign;
        }
        a %= n;
    }
    if n == 1 {
        sign
    } else {
        0
    }
}

/// p-adic valuation of a nonzero integer; `None` for zero.
pub fn valuation(mut x: i128, p: u64) -> Option<u32> {
    if x == 0 {
        return None;
    }
    let p = p as i128;
    let mut v = 0;
    while x % p == 0 {
        x /= p;
        v += 1;
    }
    Some(v)
}

/// Modular inverse of `a` modulo `m` (requires `gcd(a, m) = 1`).
pub fn inv_mod(a: i128, m: i128) -> Option<i128> {
    let (mut r0, mut r1) = (a.rem_euclid(m), m);
    let (mut s0, mut s1) = (1i128, 0i128);
    while r1 != 0 {
        let q = r0 / r1;
        (r0, r1) = (r1, r0 - q * r1);
        (s0, s1) = (s1, s0 - q * s1);
    }
    (r0 == 1).then(|| s0.rem_euclid(m))
}

/// Exact integer square root for nonnegative `n`, if `n` is a perfect square.
pub fn exact_sqrt(n: i128) -> Option<i128> {
    if n < 0 {
        return None;
    }
    let mut r = (n as f64).sqrt() as i128;
    while r * r > n {
        r -= 1;
    }
    while (r + 1) * (r + 1) <= n {
        r += 1;
    }
    (r * r == n).then_some(r)
}

/// Riemann zeta at an integer `k ≥ 2` (Euler–Maclaurin tail after 64 terms).
pub fn zeta(k: u32) -> f64 {
    assert!(k >= 2);
    let n = 64.0f64;
    let kf = k as f64;
    let head: f64 = (1..64).map(|j| (j as f64).powf(-kf)).sum();
    let tail = n.powf(1.0 - kf) / (kf - 1.0) + 0.5 * n.powf(-kf) + kf / 12.0 * n.powf(-kf - 1.0)
        - kf * (kf + 1.0) * (kf + 2.0) / 720.0 * n.powf(-kf - 3.0);
    head + tail
}

/// Determinant by fraction-free (Bareiss) elimination over the integers.
pub fn bareiss_determinant(m: &[Vec<i64>]) -> BigInt {
    let n = m.len();
    let mut a: Vec<Vec<BigInt>> = m
        .iter()
        .map(|r| r.iter().map(|&x| BigInt::from(x)).collect())
        .collect();
    let mut sign = 1;
    let mut prev = BigInt::one();
    for k in 0..n {
        if a[k][k].is_zero() {
            match (k + 1..n).find(|&i| !a[i][k].is_zero()) {
                Some(i) => {
                    a.swap(i, k);
                    sign = -sign;
                }
                None => return BigInt::zero(),
            }
        }
        for i in k + 1..n {
            for j in k + 1..n {
                let v = &a[i][j] * &a[k][k] - &a[i][k] * &a[k][j];
                a[i][j] = v / &prev;
            }
        }
        prev = a[k][k].clone();
    }
    if n == 0 {
        return BigInt::one();
    }
    let d = a[n - 1][n - 1].clone();
    if sign < 0 {
        -d
    } else {
        d
    }
}

/// Rank of a rectangular integer matrix by fraction-free elimination.
///
/// Runs in checked `i128` and falls back to big integers on overflow.
pub fn bareiss_rank(m: &[Vec<i64>]) -> usize {
    bareiss_rank_i128(m).unwrap_or_else(|| bareiss_rank_big(m))
}

fn bareiss_rank_i128(m: &[Vec<i64>]) -> Option<usize> {
    let rows = m.len();
    let cols = m.first().map_or(0, Vec::len);
    let mut a: Vec<Vec<i128>> = m
        .iter()
        .map(|r| r.iter().map(|&x| x as i128).collect())
        .collect();
    let mut rank = 0;
    let mut prev: i128 = 1;
    for col in 0..cols {
        if rank == rows {
            break;
        }
        let Some(piv) = (rank..rows).find(|&i| a[i][col] != 0) else {
            continue;
        };
        a.swap(piv, rank);
        for i in rank + 1..rows {
            for j in col + 1..cols {
                let v = a[i][j]
                    .checked_mul(a[rank][col])?
                    .checked_sub(a[i][col].checked_mul(a[rank][j])?)?;
                a[i][j] = v / prev;
            }
            a[i][col] = 0;
        }
        prev = a[rank][col];
        rank += 1;
    }
    Some(rank)
}

fn bareiss_rank_big(m: &[Vec<i64>]) -> usize {
    let rows = m.len();
    let cols = m.first().map_or(0, Vec::len);
    let mut a: Vec<Vec<BigInt>> = m
        .iter()
        .map(|r| r.iter().map(|&x| BigInt::from(x)).collect())
        .collect();
    let mut rank = 0;
    let mut prev = BigInt::one();
    for col in 0..cols {
        if rank == rows {
            break;
        }
        let Some(piv) = (rank..rows).find(|&i| !a[i][col].is_zero()) else {
            continue;
        };
        a.swap(piv, rank);
        for i in rank + 1..rows {
            for j in col + 1..cols {
                let v = &a[i][j] * &a[rank][col] - &a[i][col] * &a[rank][j];
                a[i][j] = v / &prev;
            }
            a[i][col] = BigInt::zero();
        }
        prev = a[rank][col].clone();
        rank += 1;
    }
    rank
}

/// Leading principal minors, used for a quick definiteness test.
pub fn leading_minors(m: &[Vec<i64>]) -> Vec<BigInt> {
    (1..=m.len())
        .map(|k| {
            let sub: Vec<Vec<i64>> = m[..k].iter().map(|r| r[..k].to_vec()).collect();
            bareiss_determinant(&sub)
        })
        .collect()
}

/// True when the symmetric matrix is positive or negative definite.
pub fn is_definite(m: &[Vec<i64>]) -> bool {
    let minors = leading_minors(m);
    let pos = minors.iter().all(|d| d.is_positive());
    let neg = minors
        .iter()
        .enumerate()
        .all(|(i, d)| if i % 2 == 0 { d.is_negative() } else { d.is_positive() });
    pos || neg
}

pub fn bigint_to_u64(x: &BigInt) -> Option<u64> {
    x.abs().to_u64()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn primes_and_phi() {
        assert_eq!(primes_up_to(20), vec![2, 3, 5, 7, 11, 13, 17, 19]);
        assert_eq!(euler_phi(6), 2);
        assert_eq!(euler_phi(1), 1);
        assert_eq!(euler_phi(60), 16);
        assert!(is_prime(1_000_000_007));
        assert!(!is_prime(561));
        assert_eq!(prime_power(27), Some((3, 3)));
        assert_eq!(prime_power(12), None);
    }

    #[test]
    fn squarefree_sieve() {
        let f = kfree_flags(10, 2);
        let sq: Vec<usize> = (1..=10).filter(|&x| f[x]).collect();
        assert_eq!(sq, vec![1, 2, 3, 5, 6, 7, 10]);
    }

    #[test]
    fn jacobi_matches_euler_criterion() {
        for p in [3u64, 5, 7, 11, 13] {
            for a in 1..p {
                let e = pow_mod(a, (p - 1) / 2, p);
                let expect = if e == 1 { 1 } else { -1 };
                assert_eq!(jacobi(a as i128, p), expect);
            }
        }
    }

    #[test]
    fn zeta_values() {
        assert!((zeta(2) - std::f64::consts::PI.powi(2) / 6.0).abs() < 1e-13);
        assert!((zeta(3) - 1.202_056_903_159_594_2).abs() < 1e-13);
    }

    #[test]
    fn bareiss() {
        let m = vec![vec![0, 1], vec![1, 0]];
        assert_eq!(bareiss_determinant(&m), BigInt::from(-1));
        let m = vec![vec![2, 4, 6], vec![1, 2, 3], vec![0, 0, 1]];
        assert_eq!(bareiss_rank(&m), 2);
        assert_eq!(bareiss_determinant(&m), BigInt::zero());
        assert_eq!(bareiss_rank(&[vec![0, 0], vec![0, 0]]), 0);
    }

    #[test]
    fn rationals_round_trip() {
        let r = parse_rational("6/4").unwrap();
        assert_eq!(format_rational(&r), "3/2");
        assert_eq!(parse_rational("5").unwrap(), Rational::from_integer(5));
        assert!(parse_rational("1/0").is_err());
    }
}
