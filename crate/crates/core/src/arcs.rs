//! Major arcs around rationals of small height, continued-fraction rational
//! approximation, the empirical Weyl-bound ratio and the major-arc
//! factorization diagnostic.

use num_bigint::BigInt;
use num_complex::Complex64;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::arith;
use crate::error::{Error, Result};
use crate::expsums::{self, ExpSumConfig, ExpSumTable, Route};
use crate::forms::QuadraticForm;
use crate::numeric;
use crate::realdens;
use crate::weights::WeightModel;

/// `𝔐(a, q) = [a/q − 1/(qQ), a/q + 1/(qQ)]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MajorArc {
    pub a: u64,
    pub q: u64,
    pub center: f64,
    pub half_width: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ArcSchedule {
    pub x: f64,
    pub p: u64,
    /// `Q = X²/P`.
    pub q: f64,
    pub b_exp: f64,
    pub k_exp: f64,
    pub arcs: Vec<MajorArc>,
    pub total_measure: f64,
    /// Half-width `1/Q` of the enlarged arcs.
    pub enlarged_half_width: f64,
}

impl ArcSchedule {
    /// Arcs for explicit `P` and `Q`.
    pub fn from_pq(p: u64, q: f64) -> Result<Self> {
        if p == 0 || !(q > 0.0) {
            return Err(Error::invalid("P ≥ 1 and Q > 0 are required"));
        }
        if p as f64 >= q {
            return Err(Error::invalid(format!(
                "P = {p} ≥ Q = {q}: the major arcs cover everything; use a larger X"
            )));
        }
        let arcs: Vec<MajorArc> = farey(p)
            .into_iter()
            .map(|(a, qq)| MajorArc {
                a,
                q: qq,
                center: a as f64 / qq as f64,
                half_width: 1.0 / (qq as f64 * q),
            })
            .collect();
        let mut total = numeric::CompensatedSum::new();
        for arc in &arcs {
            total.add(2.0 * arc.half_width);
        }
        Ok(ArcSchedule {
            x: (p as f64 * q).sqrt(),
            p,
            q,
            b_exp: f64::NAN,
            k_exp: f64::NAN,
            arcs,
            total_measure: total.value(),
            enlarged_half_width: 1.0 / q,
        })
    }

    /// The arc containing `α` (mod 1), if any.
    pub fn locate(&self, alpha: f64) -> Option<MajorArc> {
        let a = alpha - alpha.floor();
        self.arcs.iter().copied().find(|arc| {
            let d = (a - arc.center).abs();
            d.min(1.0 - d) <= arc.half_width
        })
    }
}

/// `P = ⌊(log X)^B⌋` (at least 1) and `Q = X²/P`.
pub fn arc_schedule(x: f64, b_exp: f64, k_exp: f64) -> Result<ArcSchedule> {
    if !(x > std::f64::consts::E) {
        return Err(Error::invalid("X must exceed e so that log X > 1"));
    }
    let p = (x.ln().powf(b_exp).floor() as u64).max(1);
    let mut s = ArcSchedule::from_pq(p, x * x / p as f64)?;
    s.x = x;
    s.b_exp = b_exp;
    s.k_exp = k_exp;
    Ok(s)
}

/// Fractions `a/q ∈ (0, 1]` in lowest terms with `q ≤ n`, increasing.
pub fn farey(n: u64) -> Vec<(u64, u64)> {
    let mut out = Vec::new();
    let (mut a, mut b, mut c, mut d) = (0u64, 1u64, 1u64, n);
    while c <= n {
        let k = (n + b) / d;
        (a, b, c, d) = (c, d, k * c - a, k * d - b);
        out.push((a, b));
    }
    out
}

/// Best convergent `a/q` of `α` with `q ≤ qbound`, and `λ = α − a/q`.
pub fn rational_approx(alpha: f64, qbound: u64) -> (u64, u64, f64) {
    let qbound = qbound.max(1);
    let Some(exact) = BigRational::from_float(alpha) else {
        return (0, 1, f64::NAN);
    };
    let (mut num, mut den) = (exact.numer().clone(), exact.denom().clone());
    let (mut p0, mut q0) = (BigInt::zero(), BigInt::one());
    let (mut p1, mut q1) = (BigInt::one(), BigInt::zero());
    let bound = BigInt::from(qbound);
    let mut best = (exact.floor().to_integer(), BigInt::one());
    while !den.is_zero() {
        let (quot, rem) = num.div_mod_floor(&den);
        let p2 = &quot * &p1 + &p0;
        let q2 = &quot * &q1 + &q0;
        if q2 > bound {
            break;
        }
        best = (p2.clone(), q2.clone());
        (p0, q0, p1, q1) = (p1, q1, p2, q2);
        (num, den) = (den, rem);
    }
    let lambda = (exact - BigRational::new(best.0.clone(), best.1.clone()))
        .to_f64()
        .unwrap_or(f64::NAN);
    let a = if best.0.is_negative() { 0 } else { best.0.to_u64().unwrap_or(0) };
    (a, best.1.to_u64().unwrap_or(1), lambda)
}

/// One α of the Weyl check.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WeylRow {
    pub alpha: f64,
    pub a: u64,
    pub q: u64,
    pub lambda: f64,
    pub abs_s: Option<f64>,
    pub rhs: f64,
    pub ratio: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WeylReport {
    pub x: f64,
    pub rank: usize,
    pub cumulative: f64,
    pub rows: Vec<WeylRow>,
    pub max_ratio: Option<f64>,
}

/// `max|F_ij| · A(X)^s · (1/X + 1/(q(1+X²|λ|)) + q(1+X²|λ|)/X²)^{r/2}`.
pub fn weyl_rhs(max_entry: f64, cumulative: f64, s: usize, rank: usize, x: f64, q: u64, lambda: f64) -> f64 {
    let h = q as f64 * (1.0 + x * x * lambda.abs());
    let inner = 1.0 / x + 1.0 / h + h / (x * x);
    max_entry * cumulative.powi(s as i32) * inner.powf(rank as f64 / 2.0)
}

/// `|S(α)|` against the Weyl bound with `C = 0`. Budget failures of the
/// exponential sum are recorded per α.
pub fn weyl_check(
    form: &QuadraticForm,
    model: &WeightModel,
    x: f64,
    alphas: &[f64],
    cfg: &ExpSumConfig,
) -> Result<WeylReport> {
    let rank = form.check_l1()?.rank;
    let cumulative = model.cumulative(x);
    let table = ExpSumTable::new(form, model, x, cfg);
    let qbound = x.floor().max(1.0) as u64;
    let rows: Vec<WeylRow> = alphas
        .iter()
        .map(|&alpha| {
            let (a, q, lambda) = rational_approx(alpha - alpha.floor(), qbound);
            let rhs = weyl_rhs(form.max_entry() as f64, cumulative, form.dim(), rank, x, q, lambda);
            match &table {
                Ok(t) => {
                    let abs_s = t.eval(alpha).norm();
                    WeylRow {
                        alpha,
                        a,
                        q,
                        lambda,
                        abs_s: Some(abs_s),
                        rhs,
                        ratio: Some(abs_s / rhs),
                        error: None,
                    }
                }
                Err(e) => WeylRow {
                    alpha,
                    a,
                    q,
                    lambda,
                    abs_s: None,
                    rhs,
                    ratio: None,
                    error: Some(e.to_string()),
                },
            }
        })
        .collect();
    let max_ratio = rows.iter().filter_map(|r| r.ratio).reduce(f64::max);
    Ok(WeylReport {
        x,
        rank,
        cumulative,
        rows,
        max_ratio,
    })
}

/// Rows `alpha,a,q,lambda,abs_s,rhs,ratio`.
pub fn weyl_csv(report: &WeylReport) -> String {
    let f = numeric::format_f64;
    let mut out = String::from("alpha,a,q,lambda,abs_s,rhs,ratio\n");
    for r in &report.rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            f(r.alpha),
            r.a,
            r.q,
            f(r.lambda),
            r.abs_s.map_or(String::new(), f),
            f(r.rhs),
            r.ratio.map_or(String::new(), f)
        ));
    }
    out
}

/// A minor-arc point with the dyadic level its denominator falls in.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MinorSample {
    pub alpha: f64,
    pub a: u64,
    pub q: u64,
    /// `j` with `2^j P < q ≤ 2^{j+1} P`.
    pub stratum: u32,
}

/// Default samples per dyadic stratum.
pub const DEFAULT_PER_STRATUM: usize = 4;
/// Default total sample cap.
pub const DEFAULT_MAX_SAMPLES: usize = 32;

/// Points `α = a/q + λ` with `q ∈ (2^j P, 2^{j+1} P]`, `q ≤ Q` and
/// `|λ| ≤ 1/(qQ)`, cycling through the strata until `max_total` points or
/// `per_stratum` points per stratum are drawn.
pub fn minor_arc_samples(schedule: &ArcSchedule, per_stratum: usize, max_total: usize, seed: u64) -> Vec<MinorSample> {
    let qmax = schedule.q.floor() as u64;
    let mut strata = Vec::new();
    let mut lo = schedule.p;
    while lo < qmax {
        strata.push((lo + 1, (2 * lo).min(qmax)));
        lo *= 2;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    'outer: for _ in 0..per_stratum {
        for (j, &(qlo, qhi)) in strata.iter().enumerate() {
            if out.len() >= max_total {
                break 'outer;
            }
            let q = rng.gen_range(qlo..=qhi);
            let a = loop {
                let a = rng.gen_range(1..=q);
                if arith::gcd(a, q) == 1 {
                    break a;
                }
            };
            let w = 1.0 / (q as f64 * schedule.q);
            let lambda = rng.gen_range(-w..=w);
            let alpha = a as f64 / q as f64 + lambda;
            out.push(MinorSample {
                alpha: alpha - alpha.floor(),
                a,
                q,
                stratum: j as u32,
            });
        }
    }
    out
}

/// Comparison of `S(α)` with `S(q, a) · I(λ, X)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FactorizationCheck {
    pub alpha: f64,
    pub a: u64,
    pub q: u64,
    pub lambda: f64,
    pub s_alpha: Complex64,
    pub s_qa: Complex64,
    pub integral: Complex64,
    pub relative_error: Option<f64>,
    pub note: Option<String>,
}

/// `|S(α) − S(q,a) I(λ,X)| / |S(q,a) I(λ,X)|` at `α = a/q + λ`, for `s ≤ 3`.
pub fn major_factorization_check(
    form: &QuadraticForm,
    model: &WeightModel,
    a: u64,
    q: u64,
    lambda: f64,
    x: f64,
    cfg: &ExpSumConfig,
) -> Result<FactorizationCheck> {
    if form.dim() > realdens::MAX_QUADRATURE_DIM {
        return Err(Error::invalid("the factorization check needs s ≤ 3"));
    }
    if q == 0 || a > q || arith::gcd(a, q) != 1 {
        return Err(Error::invalid("need 1 ≤ a ≤ q with gcd(a, q) = 1"));
    }
    let f0 = form.with_target(0);
    let alpha = a as f64 / q as f64 + lambda;
    let s_alpha = expsums::s_alpha(&f0, model, x, alpha, cfg)?;
    let s_qa = expsums::s_t_qa(&f0, model, q, a % q, Route::Auto, cfg)?;
    let integral = realdens::singular_integral_i(&f0, model, x, lambda)?;
    let main = s_qa * integral;
    let floor = 1e-6 * model.cumulative(x).powi(form.dim() as i32);
    let (relative_error, note) = if main.norm() < floor {
        (None, Some("factorization main term too small to compare".to_string()))
    } else {
        (Some((s_alpha - main).norm() / main.norm()), None)
    };
    Ok(FactorizationCheck {
        alpha,
        a,
        q,
        lambda,
        s_alpha,
        s_qa,
        integral,
        relative_error,
        note,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schedule_examples() {
        let s = ArcSchedule::from_pq(2, 10.0).unwrap();
        let pairs: Vec<(u64, u64)> = s.arcs.iter().map(|a| (a.a, a.q)).collect();
        assert_eq!(pairs, vec![(1, 2), (1, 1)]);
        assert!(s.total_measure <= 2.0 * 4.0 / 10.0);
        let s = arc_schedule(100.0, -1.0, 1.0).unwrap();
        assert_eq!(s.p, 1);
        assert_eq!(s.arcs.len(), 1);
        assert!(arc_schedule(5.0, 8.0, 1.0).is_err());
        let s = arc_schedule(1e4, 2.0, 1.0).unwrap();
        assert_eq!(s.p, 84);
        assert!(s.total_measure <= 2.0 * (s.p as f64).powi(2) / s.q);
    }

    #[test]
    fn farey_matches_double_loop() {
        for n in [1u64, 2, 7, 30, 200] {
            let mut brute: Vec<(u64, u64)> = (1..=n)
                .flat_map(|q| (1..=q).filter(move |&a| arith::gcd(a, q) == 1).map(move |a| (a, q)))
                .collect();
            brute.sort_by(|x, y| (x.0 * y.1).cmp(&(y.0 * x.1)));
            assert_eq!(farey(n), brute);
        }
    }

    #[test]
    fn rational_approx_examples() {
        // λ is exact, so only the f64 rounding of 2/3 remains
        let (a, q, l) = rational_approx(2.0 / 3.0, 10);
        assert_eq!((a, q), (2, 3));
        assert!(l.abs() < 1e-16);
        let (a, q, l) = rational_approx(0.5 + 1e-6, 2);
        assert_eq!((a, q), (1, 2));
        assert!((l - 1e-6).abs() < 1e-15);
        let (a, q, _) = rational_approx(std::f64::consts::PI - 3.0, 200);
        assert_eq!((a, q), (16, 113));
        assert_eq!(rational_approx(0.0, 5), (0, 1, 0.0));
        assert_eq!(rational_approx(1.0, 5), (1, 1, 0.0));
    }

    #[test]
    fn weyl_zero_alpha_bound() {
        let f = QuadraticForm::hyperbolic(5, 0).unwrap();
        let m = WeightModel::primes();
        let rep = weyl_check(&f, &m, 20.0, &[0.0, 0.25], &ExpSumConfig::default()).unwrap();
        let r0 = &rep.rows[0];
        assert!((r0.abs_s.unwrap() - 8f64.powi(10)).abs() < 1e-3);
        assert!(r0.ratio.unwrap() <= 20f64.powf(2.5));
        assert!(rep.rows.iter().all(|r| r.ratio.unwrap().is_finite()));
    }

    #[test]
    fn minor_samples_lie_in_strata() {
        let s = arc_schedule(1e3, 1.0, 1.0).unwrap();
        let v = minor_arc_samples(&s, DEFAULT_PER_STRATUM, DEFAULT_MAX_SAMPLES, 7);
        assert!(!v.is_empty() && v.len() <= DEFAULT_MAX_SAMPLES);
        for m in &v {
            let lo = s.p << m.stratum;
            assert!(m.q > lo && m.q <= 2 * lo);
            assert!((0.0..1.0).contains(&m.alpha));
        }
    }

    #[test]
    fn factorization_examples() {
        let sq = QuadraticForm::diagonal(&[1], 0).unwrap();
        let c = major_factorization_check(&sq, &WeightModel::unit(), 1, 2, 0.0, 1000.0, &ExpSumConfig::default()).unwrap();
        assert!(c.relative_error.is_none());
        let two = QuadraticForm::diagonal(&[1, 1], 0).unwrap();
        let c = major_factorization_check(&two, &WeightModel::primes(), 1, 1, 0.0, 1e4, &ExpSumConfig::default()).unwrap();
        let l = 1e4f64.ln();
        assert!(c.relative_error.unwrap() <= 2.0 * l.powi(-2), "{c:?}");
    }
}
