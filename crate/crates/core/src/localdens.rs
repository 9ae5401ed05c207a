//! Weighted p-adic densities `M(p^m)`, the local factor sequences that compare
//! `p^m M(p^m)` with `Σ_{k ≤ m} B(p^k)`, and a randomized search for the
//! residue-class solvability witness used with k-free weights.

use num_bigint::{BigInt, RandBigInt};
use num_integer::Integer;
use num_traits::{One, Signed, ToPrimitive, Zero};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::arith;
use crate::error::{Error, Result};
use crate::expsums::{self, ExpSumConfig, ResidueData, Route};
use crate::forms::QuadraticForm;
use crate::weights::{WeightKind, WeightModel};

/// Default tolerance below which `|B(p^m)|` counts as vanished.
pub const STABILIZATION_TOL: f64 = 1e-9;

/// Largest modulus, in bits, the witness search will work with.
pub const MAX_WITNESS_MODULUS_BITS: u64 = 4096;

/// `M(p^m)` with the way it was obtained.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LocalDensity {
    pub p: u64,
    pub m: u32,
    /// `M(p^m)`.
    pub value: f64,
    /// `p^m · M(p^m)`.
    pub scaled: f64,
    /// Exact `M(p^m)` as `"numerator/denominator"` when enumerated.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub exact: Option<String>,
    pub method: DensityMethod,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum DensityMethod {
    Enumeration,
    /// Every solution mod `p` is non-singular, so the sequence is constant
    /// from the stable level on.
    Lifting,
}

/// Level from which `κ(p^m, ·)` depends only on `h mod p^{level}` up to the
/// factor `p^{−m}`, so non-singular solutions lift uniformly.
fn stable_level(model: &WeightModel) -> Option<u32> {
    match model.kind() {
        WeightKind::Unit | WeightKind::Primes => Some(1),
        WeightKind::KFree(k) => Some(*k),
        WeightKind::Custom(_) => None,
    }
}

fn pow_checked(p: u64, m: u32) -> Result<u64> {
    p.checked_pow(m).ok_or(Error::Overflow("p^m"))
}

/// `M(p^m) = Σ_{h mod p^m, f(h) ≡ t} Π_i κ(p^m, h_i)`.
pub fn m_pm(
    form: &QuadraticForm,
    model: &WeightModel,
    p: u64,
    m: u32,
    cfg: &ExpSumConfig,
) -> Result<LocalDensity> {
    if !arith::is_prime(p) {
        return Err(Error::invalid(format!("{p} is not prime")));
    }
    if m == 0 {
        return Ok(LocalDensity {
            p,
            m,
            value: 1.0,
            scaled: 1.0,
            exact: Some("1/1".into()),
            method: DensityMethod::Enumeration,
        });
    }
    let q = pow_checked(p, m)?;
    match enumerate_density(form, model, p, m, q, cfg) {
        Err(Error::Budget { .. }) | Err(Error::Overflow(_)) => {
            lifted_density(form, model, p, m, cfg)
        }
        other => other,
    }
}

fn enumerate_density(
    form: &QuadraticForm,
    model: &WeightModel,
    p: u64,
    m: u32,
    q: u64,
    cfg: &ExpSumConfig,
) -> Result<LocalDensity> {
    let data = ResidueData::build(form, model, q, cfg.residue_cap)?;
    let hist = data.full_histogram()?;
    let t = (form.target() as i128).rem_euclid(q as i128) as usize;
    let numer = BigInt::from(hist[t]);
    let denom = BigInt::from(data.denom).pow(form.dim() as u32);
    let g = numer.gcd(&denom);
    let (n, d) = if g.is_zero() {
        (numer, denom)
    } else {
        (&numer / &g, &denom / &g)
    };
    let value = ratio_f64(&n, &d);
    Ok(LocalDensity {
        p,
        m,
        value,
        scaled: value * (q as f64),
        exact: Some(format!("{n}/{d}")),
        method: DensityMethod::Enumeration,
    })
}

fn ratio_f64(n: &BigInt, d: &BigInt) -> f64 {
    // scale both down so the quotient keeps full precision
    let bits = d.bits().max(n.bits());
    let shift = bits.saturating_sub(1000);
    let n = (n >> shift).to_f64().unwrap_or(f64::NAN);
    let d = (d >> shift).to_f64().unwrap_or(f64::NAN);
    n / d
}

/// Rows beyond the enumeration budget, valid when every solution mod `p`
/// (within the weight support) has `∇f ≢ 0 (mod p)`.
fn lifted_density(
    form: &QuadraticForm,
    model: &WeightModel,
    p: u64,
    m: u32,
    cfg: &ExpSumConfig,
) -> Result<LocalDensity> {
    let refuse = || {
        Error::Budget {
            parameter: "residue_cap",
            required: (p as u128).saturating_pow(m * form.dim() as u32),
            cap: cfg.residue_cap,
        }
    };
    let level = stable_level(model).ok_or_else(refuse)?;
    if p == 2 || m <= level || !all_solutions_nonsingular(form, model, p, cfg)? {
        return Err(refuse());
    }
    let base = enumerate_density(form, model, p, level, pow_checked(p, level)?, cfg)?;
    Ok(LocalDensity {
        p,
        m,
        value: base.scaled / (p as f64).powi(m as i32),
        scaled: base.scaled,
        exact: None,
        method: DensityMethod::Lifting,
    })
}

/// Checks that no solution of `f ≡ t (mod p)` with coordinates in the weight
/// support mod `p` is singular, i.e. has `F h ≡ 0 (mod p)`.
fn all_solutions_nonsingular(
    form: &QuadraticForm,
    model: &WeightModel,
    p: u64,
    cfg: &ExpSumConfig,
) -> Result<bool> {
    let s = form.dim();
    let total = (p as u128).checked_pow(s as u32).ok_or(Error::Overflow("p^s"))?;
    Error::check_budget("residue_cap", total, cfg.residue_cap)?;
    let allowed: Vec<bool> = (0..p)
        .map(|h| model.kappa(p, h).map(|k| !k.is_zero()))
        .collect::<Result<_>>()?;
    let pi = p as i128;
    let t = (form.target() as i128).rem_euclid(pi);
    let mut x = vec![0u64; s];
    loop {
        if x.iter().all(|&h| allowed[h as usize]) {
            let xi: Vec<i64> = x.iter().map(|&v| v as i64).collect();
            let v = form.evaluate_i128(&xi).ok_or(Error::Overflow("f(h)"))?;
            if v.rem_euclid(pi) == t {
                let singular = (0..s).all(|i| {
                    let g: i128 = (0..s).map(|j| form.entry(i, j) as i128 * x[j] as i128).sum();
                    g.rem_euclid(pi) == 0
                });
                if singular {
                    return Ok(false);
                }
            }
        }
        let mut i = 0;
        loop {
            if i == s {
                return Ok(true);
            }
            x[i] += 1;
            if x[i] < p {
                break;
            }
            x[i] = 0;
            i += 1;
        }
    }
}

/// One row of a local density sequence.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DensityRow {
    pub m: u32,
    pub density: Option<f64>,
    /// `p^m · M(p^m)`.
    pub scaled: Option<f64>,
    pub b: Option<f64>,
    /// `Σ_{k ≤ m} Re B(p^k)`.
    pub b_partial: Option<f64>,
    pub discrepancy: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub method: Option<DensityMethod>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LocalDensitySequence {
    pub p: u64,
    pub rows: Vec<DensityRow>,
    pub stabilized: bool,
    /// First `m` of the two consecutive vanishing `B(p^m)`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub stabilization_depth: Option<u32>,
    /// Largest discrepancy relative to `1 + p^m M(p^m)`.
    pub max_relative_discrepancy: f64,
}

impl LocalDensitySequence {
    /// The latest available `p^m M(p^m)`.
    pub fn last_scaled(&self) -> Option<f64> {
        self.rows.iter().rev().find_map(|r| r.scaled)
    }
}

/// Rows `m = 0..=mmax` of `p^m M(p^m)` against `Σ_{k ≤ m} B(p^k)`. A budget
/// refusal ends the sequence with a recorded error row.
pub fn chi_p(
    form: &QuadraticForm,
    model: &WeightModel,
    p: u64,
    mmax: u32,
    cfg: &ExpSumConfig,
) -> Result<LocalDensitySequence> {
    if !arith::is_prime(p) {
        return Err(Error::invalid(format!("{p} is not prime")));
    }
    let mut rows = vec![DensityRow {
        m: 0,
        density: Some(1.0),
        scaled: Some(1.0),
        b: Some(1.0),
        b_partial: Some(1.0),
        discrepancy: Some(0.0),
        method: Some(DensityMethod::Enumeration),
        error: None,
    }];
    let mut partial = 1.0;
    let mut vanishing_run = 0;
    let mut stabilization_depth = None;
    let mut max_rel: f64 = 0.0;
    for m in 1..=mmax {
        let q = match pow_checked(p, m) {
            Ok(q) => q,
            Err(e) => {
                rows.push(error_row(m, &e));
                break;
            }
        };
        let b = expsums::b_q(form, model, q, Route::Auto, cfg);
        let d = m_pm(form, model, p, m, cfg);
        let mut row = error_row(m, &Error::invalid(""));
        row.error = None;
        match &b {
            Ok(v) => {
                partial += v.value.re;
                row.b = Some(v.value.re);
                row.b_partial = Some(partial);
                if v.value.norm() < STABILIZATION_TOL {
                    vanishing_run += 1;
                    if vanishing_run == 2 && stabilization_depth.is_none() {
                        stabilization_depth = Some(m - 1);
                    }
                } else {
                    vanishing_run = 0;
                }
            }
            Err(e) => row.error = Some(e.to_string()),
        }
        match &d {
            Ok(v) => {
                row.density = Some(v.value);
                row.scaled = Some(v.scaled);
                row.method = Some(v.method);
            }
            Err(e) => row.error = Some(e.to_string()),
        }
        if let (Some(sc), Some(bp)) = (row.scaled, row.b_partial) {
            let disc = (sc - bp).abs();
            row.discrepancy = Some(disc);
            max_rel = max_rel.max(disc / (1.0 + sc.abs()));
        }
        let failed = b.is_err() || d.is_err();
        let fatal = [b.err(), d.err()]
            .into_iter()
            .flatten()
            .find(|e| !matches!(e, Error::Budget { .. } | Error::Overflow(_)));
        if let Some(e) = fatal {
            return Err(e);
        }
        rows.push(row);
        if failed {
            break;
        }
    }
    Ok(LocalDensitySequence {
        p,
        rows,
        stabilized: stabilization_depth.is_some(),
        stabilization_depth,
        max_relative_discrepancy: max_rel,
    })
}

fn error_row(m: u32, e: &Error) -> DensityRow {
    DensityRow {
        m,
        density: None,
        scaled: None,
        b: None,
        b_partial: None,
        discrepancy: None,
        method: None,
        error: Some(e.to_string()),
    }
}

/// Result of the witness search.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConditionBResult {
    pub k: u32,
    /// `(2|det F|)^{2k−1}` in decimal.
    pub modulus: String,
    pub primes: Vec<u64>,
    /// Coordinates of a verified witness, in decimal.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub witness: Option<Vec<String>>,
    pub attempts: u64,
}

impl ConditionBResult {
    pub fn found(&self) -> bool {
        self.witness.is_some()
    }
}

/// Searches for `x mod N`, `N = (2|det F|)^{2k−1}`, with `f(x) ≡ t (mod N)` and
/// `p^k ∤ x_i` for every `i` and every prime `p | 2 det F`.
///
/// The all-ones vector is tried first, then `budget − 1` seeded random
/// vectors. Finding nothing proves nothing.
pub fn search_condition_b(
    form: &QuadraticForm,
    k: u32,
    budget: u64,
    seed: u64,
) -> Result<ConditionBResult> {
    if k < 2 {
        return Err(Error::invalid("witness search needs k ≥ 2"));
    }
    let two_det: BigInt = form.determinant().abs() * 2;
    let bits = two_det.bits() * (2 * k as u64 - 1);
    Error::check_budget(
        "witness_modulus_bits",
        bits as u128,
        MAX_WITNESS_MODULUS_BITS as u128,
    )?;
    let modulus = two_det.pow(2 * k - 1);
    let primes = prime_divisors(&two_det)?;
    let t = BigInt::from(form.target());
    let pk: Vec<BigInt> = primes.iter().map(|&p| BigInt::from(p).pow(k)).collect();
    let s = form.dim();

    let check = |x: &[BigInt]| -> bool {
        if x.iter().any(|xi| pk.iter().any(|m| (xi % m).is_zero())) {
            return false;
        }
        let mut v = BigInt::zero();
        for i in 0..s {
            for j in 0..s {
                v += BigInt::from(form.entry(i, j)) * &x[i] * &x[j];
            }
        }
        ((v - &t).mod_floor(&modulus)).is_zero()
    };

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut attempts = 0;
    let mut witness = None;
    while attempts < budget {
        let x: Vec<BigInt> = if attempts == 0 {
            vec![BigInt::one(); s]
        } else {
            (0..s)
                .map(|_| rng.gen_bigint_range(&BigInt::zero(), &modulus))
                .collect()
        };
        attempts += 1;
        if check(&x) {
            witness = Some(x);
            break;
        }
    }
    Ok(ConditionBResult {
        k,
        modulus: modulus.to_string(),
        primes,
        witness: witness.map(|w| w.iter().map(|x| x.to_string()).collect()),
        attempts,
    })
}

fn prime_divisors(n: &BigInt) -> Result<Vec<u64>> {
    let n = arith::bigint_to_u64(n)
        .ok_or_else(|| Error::invalid("2·det F exceeds 64 bits; cannot factor it"))?;
    Ok(arith::factorize(n).into_iter().map(|(p, _)| p).collect())
}

/// Exact re-check of a witness against `f ≡ t (mod N)` and the divisibility
/// restriction.
pub fn verify_condition_b(form: &QuadraticForm, result: &ConditionBResult) -> Result<bool> {
    let Some(w) = &result.witness else {
        return Ok(false);
    };
    let x: Vec<BigInt> = w
        .iter()
        .map(|v| v.parse::<BigInt>().map_err(|_| Error::invalid("bad witness")))
        .collect::<Result<_>>()?;
    let modulus: BigInt = result
        .modulus
        .parse()
        .map_err(|_| Error::invalid("bad modulus"))?;
    let mut v = BigInt::zero();
    for i in 0..form.dim() {
        for j in 0..form.dim() {
            v += BigInt::from(form.entry(i, j)) * &x[i] * &x[j];
        }
    }
    let residue_ok = (v - BigInt::from(form.target())).mod_floor(&modulus).is_zero();
    let digits_ok = result.primes.iter().all(|&p| {
        let pk = BigInt::from(p).pow(result.k);
        x.iter().all(|xi| !(xi % &pk).is_zero())
    });
    Ok(residue_ok && digits_ok)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg() -> ExpSumConfig {
        ExpSumConfig::default()
    }

    fn two_squares(t: i64) -> QuadraticForm {
        QuadraticForm::diagonal(&[1, 1], t).unwrap()
    }

    #[test]
    fn sum_of_two_squares_at_two() {
        let f = two_squares(1);
        let u = WeightModel::unit();
        let expect = [1.0, 2.0, 2.0];
        for (m, e) in (1..=3).zip(expect) {
            let d = m_pm(&f, &u, 2, m, &cfg()).unwrap();
            assert!((d.scaled - e).abs() < 1e-12, "m={m}: {}", d.scaled);
        }
        assert_eq!(m_pm(&f, &u, 2, 1, &cfg()).unwrap().exact.as_deref(), Some("1/2"));
        let seq = chi_p(&f, &u, 2, 3, &cfg()).unwrap();
        assert!(seq.rows.iter().all(|r| r.discrepancy.unwrap() < 1e-9));
        assert!((seq.last_scaled().unwrap() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn sum_of_two_squares_at_three() {
        // x² + y² ≡ 1 mod 3 has 4 of 9 solutions, all non-singular
        let f = two_squares(1);
        let u = WeightModel::unit();
        let seq = chi_p(&f, &u, 3, 4, &cfg()).unwrap();
        for r in &seq.rows[1..] {
            assert!((r.scaled.unwrap() - 4.0 / 3.0).abs() < 1e-12);
            assert!(r.discrepancy.unwrap() < 1e-9);
        }
        assert!(seq.stabilized);
        assert_eq!(seq.stabilization_depth, Some(2));
    }

    #[test]
    fn lifting_matches_enumeration() {
        let f = QuadraticForm::diagonal(&[1, 1, -2], 1).unwrap();
        for model in [WeightModel::unit(), WeightModel::primes(), WeightModel::kfree(2).unwrap()] {
            let tight = ExpSumConfig {
                residue_cap: 50,
                ..cfg()
            };
            let m = 3;
            let exact = m_pm(&f, &model, 3, m, &cfg()).unwrap();
            let lifted = m_pm(&f, &model, 3, m, &tight).unwrap();
            assert_eq!(lifted.method, DensityMethod::Lifting);
            assert!((exact.scaled - lifted.scaled).abs() < 1e-12, "{}", model.name());
        }
    }

    #[test]
    fn singular_solutions_refuse_lifting() {
        let f = two_squares(0);
        let tight = ExpSumConfig {
            residue_cap: 10,
            ..cfg()
        };
        assert!(matches!(
            m_pm(&f, &WeightModel::unit(), 3, 3, &tight),
            Err(Error::Budget { .. })
        ));
    }

    #[test]
    fn witness_examples() {
        let h = QuadraticForm::hyperbolic(5, 10).unwrap();
        let r = search_condition_b(&h, 2, 10, 1).unwrap();
        assert_eq!(r.modulus, "8");
        assert_eq!(r.witness, Some(vec!["1".to_string(); 10]));
        assert!(verify_condition_b(&h, &r).unwrap());

        let f = two_squares(3);
        let r = search_condition_b(&f, 2, 2000, 7).unwrap();
        assert!(!r.found());
        assert_eq!(r.attempts, 2000);

        let r = search_condition_b(&h, 2, 0, 1).unwrap();
        assert!(!r.found());
        assert_eq!(r.attempts, 0);
    }

    #[test]
    fn random_witnesses_verify() {
        let f = QuadraticForm::new(vec![vec![1, 1], vec![1, 3]], 3).unwrap();
        let r = search_condition_b(&f, 2, 5000, 3).unwrap();
        if r.found() {
            assert!(verify_condition_b(&f, &r).unwrap());
        }
    }
}
