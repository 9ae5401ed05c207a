//! Exponential sums: `S(α)` over the weighted box, the complete sums
//! `S_t(q, a)`, their Ramanujan-type averages `B(q)` and the truncated
//! singular series.
//!
//! Complete sums are built from exact residue histograms: for each connected
//! component of the form the κ-weighted number of residue tuples with a given
//! value mod `q` is an integer numerator over a common power of the κ
//! denominator, and the phase of each bucket is an entry of a table of roots of
//! unity. Floating point only enters when buckets are accumulated.

use num_complex::Complex64;
use serde::Serialize;

use crate::arith;
use crate::enumerate::{self, ValueHistogram};
use crate::error::{Error, Result};
use crate::forms::QuadraticForm;
use crate::numeric::{self, ComplexSum, RootTable};
use crate::weights::{self, WeightKind, WeightModel};

/// Enumeration limits for exponential sums.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ExpSumConfig {
    /// Max residue tuples enumerated for one complete sum.
    pub residue_cap: u128,
    /// Max weighted-support tuples enumerated for `S(α)`.
    pub alpha_cap: u128,
    /// Base tolerance for `|Im B(q)|`.
    pub imag_tol: f64,
}

impl Default for ExpSumConfig {
    fn default() -> Self {
        ExpSumConfig {
            residue_cap: 1_000_000_000,
            alpha_cap: 10_000_000_000,
            imag_tol: 1e-9,
        }
    }
}

/// How a complete sum was (or should be) evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Route {
    /// Fast path when it applies, otherwise direct, otherwise multiplicative.
    Auto,
    /// Residue-histogram enumeration.
    Direct,
    /// Diagonalization mod `p^k` and one-dimensional Gauss sums.
    Fast,
    /// Product of prime-power values (only for `B(q)`).
    Multiplicative,
}

fn work_for(components: &[Vec<usize>], support: u128) -> u128 {
    components
        .iter()
        .map(|c| support.saturating_pow(c.len() as u32))
        .fold(0u128, |a, b| a.saturating_add(b))
}

/// Residue histograms of every component at modulus `q`, with κ numerators
/// over the common denominator `denom`.
#[derive(Debug, Clone)]
pub(crate) struct ResidueData {
    pub q: u64,
    pub denom: u128,
    pub components: Vec<ComponentHistogram>,
}

#[derive(Debug, Clone)]
pub(crate) struct ComponentHistogram {
    pub size: usize,
    pub counts: Vec<u128>,
}

impl ResidueData {
    pub fn build(form: &QuadraticForm, model: &WeightModel, q: u64, cap: u128) -> Result<Self> {
        let row = model.kappa_row(q)?;
        let denom = weights::row_denominator(&row)?;
        let numerators: Vec<u128> = row
            .iter()
            .map(|r| {
                if *r.numer() < 0 {
                    Err(Error::invalid("κ values must be nonnegative"))
                } else {
                    Ok(*r.numer() as u128 * (denom / *r.denom() as u128))
                }
            })
            .collect::<Result<_>>()?;
        let support = numerators.iter().filter(|&&w| w != 0).count() as u128;
        let mass: u128 = numerators.iter().sum();
        let comps = form.components();
        Error::check_budget("residue_cap", work_for(&comps, support), cap)?;
        let components = comps
            .iter()
            .map(|c| {
                mass.checked_pow(c.len() as u32)
                    .ok_or(Error::Overflow("κ-weighted residue mass"))?;
                Ok(ComponentHistogram {
                    size: c.len(),
                    counts: enumerate::residue_histogram(&form.block_matrix(c), q, &numerators),
                })
            })
            .collect::<Result<_>>()?;
        Ok(ResidueData {
            q,
            denom,
            components,
        })
    }

    /// Exact histogram of the whole form: numerators over `denom^s`.
    pub fn full_histogram(&self) -> Result<Vec<u128>> {
        let q = self.q as usize;
        let mut acc = vec![0u128; q];
        acc[0] = 1;
        for c in &self.components {
            let mut next = vec![0u128; q];
            for (u, &a) in acc.iter().enumerate() {
                if a == 0 {
                    continue;
                }
                for (v, &b) in c.counts.iter().enumerate() {
                    if b == 0 {
                        continue;
                    }
                    let term = a.checked_mul(b).ok_or(Error::Overflow("residue convolution"))?;
                    let slot = &mut next[(u + v) % q];
                    *slot = slot
                        .checked_add(term)
                        .ok_or(Error::Overflow("residue convolution"))?;
                }
            }
            acc = next;
        }
        Ok(acc)
    }

    /// `Σ_h κ(q,h) e(a f(h)/q)` as a product over components.
    fn weighted_sum(&self, roots: &RootTable, a: u64) -> Complex64 {
        let q = self.q;
        let mut prod = Complex64::new(1.0, 0.0);
        for c in &self.components {
            let scale = (self.denom as f64).powi(c.size as i32);
            let mut acc = ComplexSum::new();
            for (v, &w) in c.counts.iter().enumerate() {
                if w != 0 {
                    let r = ((a as u128 * v as u128) % q as u128) as u64;
                    acc.add(roots.get(r) * (w as f64 / scale));
                }
            }
            prod *= acc.value();
        }
        prod
    }
}

fn t_mod(form: &QuadraticForm, q: u64) -> u64 {
    (form.target() as i128).rem_euclid(q as i128) as u64
}

fn neg_phase(roots: &RootTable, a: u64, t: u64, q: u64) -> Complex64 {
    let at = ((a as u128 * t as u128) % q as u128) as u64;
    roots.get((q - at) % q)
}

/// `S(α) = Σ_{0 ≤ x ≤ X} a_x e(α f(x))` by enumeration over the weight support.
pub fn s_alpha(
    form: &QuadraticForm,
    model: &WeightModel,
    x: f64,
    alpha: f64,
    cfg: &ExpSumConfig,
) -> Result<Complex64> {
    Ok(ExpSumTable::new(form, model, x, cfg)?.eval(alpha))
}

/// Value histograms of the components of `f` over the weighted box, reusable
/// for many `α`.
#[derive(Debug, Clone)]
pub struct ExpSumTable {
    components: Vec<ValueHistogram>,
}

impl ExpSumTable {
    /// Full cube `[0, X]^s`.
    pub fn new(form: &QuadraticForm, model: &WeightModel, x: f64, cfg: &ExpSumConfig) -> Result<Self> {
        if !(x >= 0.0) {
            return Err(Error::invalid("X must be ≥ 0"));
        }
        let xi = x.floor() as i64;
        let s = form.dim();
        Self::with_region(form, model, &vec![0; s], &vec![xi; s], cfg)
    }

    /// Integer box `Π [lo_i, hi_i]`.
    pub fn with_region(
        form: &QuadraticForm,
        model: &WeightModel,
        lo: &[i64],
        hi: &[i64],
        cfg: &ExpSumConfig,
    ) -> Result<Self> {
        let supports = region_supports(form, model, lo, hi)?;
        let comps = form.components();
        let work = comps
            .iter()
            .map(|c| {
                c.iter()
                    .map(|&i| supports[i].len() as u128)
                    .fold(1u128, |a, b| a.saturating_mul(b))
            })
            .fold(0u128, |a, b| a.saturating_add(b));
        Error::check_budget("alpha_cap", work, cfg.alpha_cap)?;
        let components = comps
            .iter()
            .map(|c| {
                let sup: Vec<_> = c.iter().map(|&i| supports[i].clone()).collect();
                enumerate::value_histogram(&form.block_matrix(c), &sup)
            })
            .collect();
        Ok(ExpSumTable { components })
    }

    pub fn eval(&self, alpha: f64) -> Complex64 {
        let mut prod = Complex64::new(1.0, 0.0);
        for h in &self.components {
            let mut acc = ComplexSum::new();
            for &(v, w) in &h.entries {
                acc.add(numeric::phase(alpha, reduce_i64(v)) * w);
            }
            prod *= acc.value();
        }
        prod
    }

    /// `S(0)`, the total weight `A(X)^s` for the full cube.
    pub fn mass(&self) -> f64 {
        self.components
            .iter()
            .map(|h| h.entries.iter().map(|e| e.1).sum::<f64>())
            .product()
    }
}

/// Values of `f` fit `i64` at any realistic desk scale; this fallback keeps
/// `e(αv)` well defined otherwise by reducing modulo a period of `e(α·)`.
fn reduce_i64(v: i128) -> i64 {
    i64::try_from(v).unwrap_or_else(|_| (v % (1i128 << 62)) as i64)
}

pub(crate) fn region_supports(
    form: &QuadraticForm,
    model: &WeightModel,
    lo: &[i64],
    hi: &[i64],
) -> Result<Vec<Vec<(i64, f64)>>> {
    let s = form.dim();
    if lo.len() != s || hi.len() != s {
        return Err(Error::DimensionMismatch {
            expected: s,
            got: lo.len().min(hi.len()),
        });
    }
    let top = hi.iter().copied().max().unwrap_or(0).max(0) as u64;
    let table = model.table(top);
    Ok((0..s)
        .map(|i| {
            let l = lo[i].max(0);
            table
                .support(hi[i].max(-1).max(0) as u64)
                .into_iter()
                .filter(|&(x, _)| x >= l && x <= hi[i])
                .collect()
        })
        .collect())
}

/// `S_t(q, a) = Σ_{h mod q} κ(q,h) e(a(f(h) − t)/q)`.
pub fn s_t_qa(
    form: &QuadraticForm,
    model: &WeightModel,
    q: u64,
    a: u64,
    route: Route,
    cfg: &ExpSumConfig,
) -> Result<Complex64> {
    if q == 0 {
        return Err(Error::invalid("q must be ≥ 1"));
    }
    match route {
        Route::Fast => s_t_qa_fast(form, model, q, a),
        Route::Direct => s_t_qa_direct(form, model, q, a, cfg),
        Route::Multiplicative => Err(Error::invalid(
            "the multiplicative route applies to B(q), not S_t(q, a)",
        )),
        Route::Auto => {
            if fast_applies(model, q) {
                s_t_qa_fast(form, model, q, a)
            } else {
                s_t_qa_direct(form, model, q, a, cfg)
            }
        }
    }
}

fn s_t_qa_direct(
    form: &QuadraticForm,
    model: &WeightModel,
    q: u64,
    a: u64,
    cfg: &ExpSumConfig,
) -> Result<Complex64> {
    let data = ResidueData::build(form, model, q, cfg.residue_cap)?;
    let roots = RootTable::new(q);
    let a = a % q;
    Ok(data.weighted_sum(&roots, a) * neg_phase(&roots, a, t_mod(form, q), q))
}

/// True when the Gauss-sum evaluation is available: unit or prime weights and
/// an odd prime power modulus.
pub fn fast_applies(model: &WeightModel, q: u64) -> bool {
    matches!(model.kind(), WeightKind::Unit | WeightKind::Primes)
        && matches!(arith::prime_power(q), Some((p, _)) if p != 2)
}

/// `q = p^k` with `p` odd, diagonal entries of every scaled matrix needed by
/// the inclusion–exclusion over coordinates divisible by `p`.
struct GaussData {
    p: u64,
    k: u32,
    q: u64,
    /// `(sign · p^{−|T|}, diagonal of D_T F D_T mod q)` per subset `T`.
    terms: Vec<(f64, Vec<i128>)>,
    /// `φ(q)^{−s}` or `q^{−s}`.
    norm: f64,
}

impl GaussData {
    fn new(form: &QuadraticForm, model: &WeightModel, q: u64) -> Result<Self> {
        let (p, k) = arith::prime_power(q)
            .filter(|&(p, _)| p != 2)
            .ok_or_else(|| Error::invalid(format!("fast path needs an odd prime power, got {q}")))?;
        let s = form.dim();
        let m = form.matrix();
        let (terms, norm) = match model.kind() {
            WeightKind::Unit => (
                vec![(1.0, diagonalize_mod(m, p, k))],
                (q as f64).powi(-(s as i32)),
            ),
            WeightKind::Primes => {
                if s > 20 {
                    return Err(Error::Budget {
                        parameter: "fast_path_dim",
                        required: s as u128,
                        cap: 20,
                    });
                }
                let mut terms = Vec::with_capacity(1 << s);
                for mask in 0u32..(1 << s) {
                    let scaled: Vec<Vec<i64>> = (0..s)
                        .map(|i| {
                            (0..s)
                                .map(|j| {
                                    let mut v = m[i][j] as i128;
                                    if mask >> i & 1 == 1 {
                                        v *= p as i128;
                                    }
                                    if mask >> j & 1 == 1 {
                                        v *= p as i128;
                                    }
                                    v.rem_euclid(q as i128) as i64
                                })
                                .collect()
                        })
                        .collect();
                    let size = mask.count_ones() as i32;
                    let sign = if size % 2 == 0 { 1.0 } else { -1.0 };
                    terms.push((sign * (p as f64).powi(-size), diagonalize_mod(&scaled, p, k)));
                }
                (terms, (arith::euler_phi(q) as f64).powi(-(s as i32)))
            }
            _ => {
                return Err(Error::invalid(
                    "fast path needs unit or prime weights",
                ))
            }
        };
        Ok(GaussData {
            p,
            k,
            q,
            terms,
            norm,
        })
    }

    /// `Σ_h κ(q,h) e(a f(h)/q)`.
    fn weighted_sum(&self, a: u64) -> Complex64 {
        let mut acc = ComplexSum::new();
        for (coef, diag) in &self.terms {
            let mut prod = Complex64::new(*coef, 0.0);
            for &d in diag {
                let ad = (d * a as i128).rem_euclid(self.q as i128);
                prod *= gauss_1d(ad, self.p, self.k);
            }
            acc.add(prod);
        }
        acc.value() * self.norm
    }
}

fn s_t_qa_fast(form: &QuadraticForm, model: &WeightModel, q: u64, a: u64) -> Result<Complex64> {
    let g = GaussData::new(form, model, q)?;
    let roots = RootTable::new(q);
    let a = a % q;
    Ok(g.weighted_sum(a) * neg_phase(&roots, a, t_mod(form, q), q))
}

/// Diagonal of a matrix congruent to `m` modulo `p^k` (`p` odd), entries in `[0, p^k)`.
pub(crate) fn diagonalize_mod(m: &[Vec<i64>], p: u64, k: u32) -> Vec<i128> {
    let q = (p as i128).pow(k);
    let n = m.len();
    let mut a: Vec<Vec<i128>> = m
        .iter()
        .map(|r| r.iter().map(|&v| (v as i128).rem_euclid(q)).collect())
        .collect();
    let val = |x: i128| arith::valuation(x, p).unwrap_or(k).min(k);
    for i in 0..n {
        // pivot of least valuation among the remaining block
        let mut best = (k + 1, i, i);
        for r in i..n {
            for c in r..n {
                let v = val(a[r][c]);
                if v < best.0 || (v == best.0 && r == c && best.1 != best.2) {
                    best = (v, r, c);
                }
            }
        }
        let (v, r, c) = best;
        if v >= k {
            break;
        }
        let mut piv = r;
        if r != c && val(a[r][r]) > v && val(a[c][c]) > v {
            // x_r ← x_r + x_c makes the diagonal entry carry valuation v
            for j in 0..n {
                a[r][j] = (a[r][j] + a[c][j]).rem_euclid(q);
            }
            for j in 0..n {
                a[j][r] = (a[j][r] + a[j][c]).rem_euclid(q);
            }
        } else if r != c {
            piv = if val(a[r][r]) == v { r } else { c };
        }
        a.swap(i, piv);
        for row in a.iter_mut() {
            row.swap(i, piv);
        }
        let pv = (p as i128).pow(v);
        let unit = a[i][i] / pv;
        let inv = arith::inv_mod(unit, q).expect("pivot unit is invertible");
        for j in i + 1..n {
            if a[i][j] == 0 {
                continue;
            }
            let b = a[i][j] / pv;
            let coef = (b * inv).rem_euclid(q);
            for l in 0..n {
                a[j][l] = (a[j][l] - coef * a[i][l]).rem_euclid(q);
            }
            for l in 0..n {
                a[l][j] = (a[l][j] - coef * a[l][i]).rem_euclid(q);
            }
        }
    }
    (0..n).map(|i| a[i][i]).collect()
}

/// `Σ_{h mod p^k} e(d h²/p^k)` for odd `p`.
pub(crate) fn gauss_1d(d: i128, p: u64, k: u32) -> Complex64 {
    let q = (p as i128).pow(k);
    let d = d.rem_euclid(q);
    if d == 0 {
        return Complex64::new(q as f64, 0.0);
    }
    let v = arith::valuation(d, p).expect("nonzero");
    let j = k - v;
    let u = d / (p as i128).pow(v);
    let pj = (p as u64).pow(j);
    let sym = if j % 2 == 0 { 1 } else { arith::jacobi(u, p) };
    let mag = (pj as f64).sqrt() * (p as f64).powi(v as i32) * sym as f64;
    if pj % 4 == 1 {
        Complex64::new(mag, 0.0)
    } else {
        Complex64::new(0.0, mag)
    }
}

/// `B(q)` with its evaluation route and imaginary residual.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BValue {
    pub q: u64,
    pub value: Complex64,
    pub imag_residual: f64,
    /// Tolerance the residual is compared against.
    pub imag_tolerance: f64,
    pub route: Route,
}

impl BValue {
    pub fn imag_ok(&self) -> bool {
        self.imag_residual <= self.imag_tolerance
    }
}

fn coprime_residues(q: u64) -> impl Iterator<Item = u64> {
    (0..q).filter(move |&a| arith::gcd(a, q) == 1)
}

fn finish_b(q: u64, sum: Complex64, terms: u128, route: Route, cfg: &ExpSumConfig) -> BValue {
    let accum = terms as f64 * f64::EPSILON;
    BValue {
        q,
        value: sum,
        imag_residual: sum.im.abs(),
        imag_tolerance: cfg.imag_tol.max(accum) * (1.0 + sum.norm()),
        route,
    }
}

/// `B(q) = Σ_{a mod q, (a,q)=1} S_t(q, a)`.
pub fn b_q(
    form: &QuadraticForm,
    model: &WeightModel,
    q: u64,
    route: Route,
    cfg: &ExpSumConfig,
) -> Result<BValue> {
    if q == 0 {
        return Err(Error::invalid("q must be ≥ 1"));
    }
    if q == 1 {
        return Ok(finish_b(1, Complex64::new(1.0, 0.0), 1, Route::Direct, cfg));
    }
    match route {
        Route::Direct => b_direct(form, model, q, cfg),
        Route::Fast => b_fast(form, model, q, cfg),
        Route::Multiplicative => b_multiplicative(form, model, q, cfg),
        Route::Auto => {
            if fast_applies(model, q) {
                return b_fast(form, model, q, cfg);
            }
            match b_direct(form, model, q, cfg) {
                Err(Error::Budget { .. }) if arith::prime_power(q).is_none() => {
                    b_multiplicative(form, model, q, cfg)
                }
                other => other,
            }
        }
    }
}

fn b_direct(form: &QuadraticForm, model: &WeightModel, q: u64, cfg: &ExpSumConfig) -> Result<BValue> {
    let data = ResidueData::build(form, model, q, cfg.residue_cap)?;
    let roots = RootTable::new(q);
    let t = t_mod(form, q);
    let mut acc = ComplexSum::new();
    let mut n = 0u128;
    for a in coprime_residues(q) {
        acc.add(data.weighted_sum(&roots, a) * neg_phase(&roots, a, t, q));
        n += q as u128;
    }
    Ok(finish_b(q, acc.value(), n, Route::Direct, cfg))
}

fn b_fast(form: &QuadraticForm, model: &WeightModel, q: u64, cfg: &ExpSumConfig) -> Result<BValue> {
    let g = GaussData::new(form, model, q)?;
    let roots = RootTable::new(q);
    let t = t_mod(form, q);
    let mut acc = ComplexSum::new();
    let mut n = 0u128;
    for a in coprime_residues(q) {
        acc.add(g.weighted_sum(a) * neg_phase(&roots, a, t, q));
        n += g.terms.len() as u128;
    }
    Ok(finish_b(q, acc.value(), n, Route::Fast, cfg))
}

fn b_multiplicative(
    form: &QuadraticForm,
    model: &WeightModel,
    q: u64,
    cfg: &ExpSumConfig,
) -> Result<BValue> {
    let mut prod = Complex64::new(1.0, 0.0);
    let mut n = 0u128;
    for (p, e) in arith::factorize(q) {
        let b = b_q(form, model, p.pow(e), Route::Auto, cfg)?;
        prod *= b.value;
        n += 1;
    }
    Ok(finish_b(q, prod, n, Route::Multiplicative, cfg))
}

/// One row of the truncated singular series.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SeriesRow {
    pub q: u64,
    pub b: Complex64,
    pub imag_residual: f64,
    pub route: Route,
}

/// Partial local factors `Σ_{k ≤ m} B(p^k)` for `m = 0..=depth`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PrimeFactor {
    pub p: u64,
    pub b: Vec<Complex64>,
    pub partial_sums: Vec<f64>,
    /// Set when a budget refusal cut the row short.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub truncated: Option<String>,
}

impl PrimeFactor {
    pub fn last(&self) -> f64 {
        *self.partial_sums.last().unwrap_or(&1.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SingularSeriesReport {
    pub p_max: u64,
    pub prime_depth: u32,
    pub rank: Option<usize>,
    pub per_q: Vec<SeriesRow>,
    /// `Σ_{q ≤ P} Re B(q)`.
    pub partial: f64,
    /// Largest `|Im B(q)|` relative to `1 + |B(q)|`.
    pub max_imag_residual: f64,
    pub imag_ok: bool,
    /// Empirical constant `max |B(q)| q^{r/2 − 1}` over the top decade `(P/10, P]`.
    pub tail_constant: f64,
    /// `tail_constant · P^{−1/2}`.
    pub tail_estimate: f64,
    pub per_prime: Vec<PrimeFactor>,
    /// `Π_{p ≤ P} Σ_{k ≤ depth} B(p^k)`.
    pub euler_product: f64,
    /// `Σ Re B(q)` over `q ≤ P` whose prime powers all have exponent ≤ depth.
    pub restricted_direct: f64,
    /// The same sum rebuilt from the per-prime values.
    pub restricted_from_primes: f64,
    pub warnings: Vec<String>,
}

/// Truncated singular series with per-prime factors and a tail estimate.
pub fn singular_series(
    form: &QuadraticForm,
    model: &WeightModel,
    p_max: u64,
    prime_depth: u32,
    cfg: &ExpSumConfig,
) -> Result<SingularSeriesReport> {
    if p_max == 0 {
        return Err(Error::invalid("P must be ≥ 1"));
    }
    let mut warnings = Vec::new();
    let rank = match form.check_l1() {
        Ok(v) => Some(v.rank),
        Err(_) => {
            warnings.push("rank of the mixed block not computed (dimension too large)".into());
            None
        }
    };
    if rank.is_none_or(|r| r < 5) {
        warnings.push(format!(
            "mixed-block rank {} < 5: the tail bound is not guaranteed",
            rank.map_or("?".into(), |r| r.to_string())
        ));
    }

    let values: Vec<Result<BValue>> = (1..=p_max).map(|q| b_q(form, model, q, Route::Auto, cfg)).collect();
    let mut per_q = Vec::with_capacity(values.len());
    for v in values {
        let v = v?;
        per_q.push(SeriesRow {
            q: v.q,
            b: v.value,
            imag_residual: v.imag_residual,
            route: v.route,
        });
    }
    let mut sum = numeric::CompensatedSum::new();
    for r in &per_q {
        sum.add(r.b.re);
    }
    let max_imag_residual = per_q
        .iter()
        .map(|r| r.imag_residual / (1.0 + r.b.norm()))
        .fold(0.0, f64::max);
    let imag_ok = per_q.iter().all(|r| {
        r.imag_residual <= cfg.imag_tol.max(r.q as f64 * r.q as f64 * f64::EPSILON) * (1.0 + r.b.norm())
    });

    let r_half = rank.unwrap_or(0) as f64 / 2.0;
    let tail_constant = per_q
        .iter()
        .filter(|r| r.q as f64 > p_max as f64 / 10.0)
        .map(|r| r.b.norm() * (r.q as f64).powf(r_half - 1.0))
        .fold(0.0, f64::max);
    let tail_estimate = tail_constant / (p_max as f64).sqrt();

    let mut per_prime = Vec::new();
    for p in arith::primes_up_to(p_max as usize) {
        let mut b = vec![Complex64::new(1.0, 0.0)];
        let mut partial_sums = vec![1.0];
        let mut truncated = None;
        let mut pk = 1u64;
        for _ in 1..=prime_depth {
            let Some(next) = pk.checked_mul(p) else {
                truncated = Some("modulus overflow".into());
                break;
            };
            pk = next;
            let value = per_q
                .get(pk as usize - 1)
                .filter(|_| pk <= p_max)
                .map(|r| Ok(r.b))
                .unwrap_or_else(|| b_q(form, model, pk, Route::Auto, cfg).map(|v| v.value));
            match value {
                Ok(v) => {
                    b.push(v);
                    partial_sums.push(partial_sums.last().unwrap() + v.re);
                }
                Err(e @ Error::Budget { .. }) => {
                    truncated = Some(e.to_string());
                    break;
                }
                Err(e) => return Err(e),
            }
        }
        per_prime.push(PrimeFactor {
            p,
            b,
            partial_sums,
            truncated,
        });
    }
    let euler_product = per_prime.iter().map(|f| f.last()).product();

    let mut restricted_direct = numeric::CompensatedSum::new();
    let mut restricted_from_primes = numeric::CompensatedSum::new();
    for r in &per_q {
        let mut prod = Complex64::new(1.0, 0.0);
        let mut ok = true;
        for (p, e) in arith::factorize(r.q) {
            match per_prime.iter().find(|f| f.p == p).and_then(|f| f.b.get(e as usize)) {
                Some(v) => prod *= v,
                None => ok = false,
            }
        }
        if ok {
            restricted_direct.add(r.b.re);
            restricted_from_primes.add(prod.re);
        }
    }

    Ok(SingularSeriesReport {
        p_max,
        prime_depth,
        rank,
        per_q,
        partial: sum.value(),
        max_imag_residual,
        imag_ok,
        tail_constant,
        tail_estimate,
        per_prime,
        euler_product,
        restricted_direct: restricted_direct.value(),
        restricted_from_primes: restricted_from_primes.value(),
        warnings,
    })
}

/// `|a − b| ≤ tol·(1 + |b|)`.
pub fn close(a: Complex64, b: Complex64, tol: f64) -> bool {
    (a - b).norm() <= tol * (1.0 + b.norm())
}

impl SingularSeriesReport {
    pub fn b(&self, q: u64) -> Option<Complex64> {
        self.per_q.get(q as usize - 1).map(|r| r.b)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg() -> ExpSumConfig {
        ExpSumConfig::default()
    }

    fn sq1() -> QuadraticForm {
        QuadraticForm::diagonal(&[1], 0).unwrap()
    }

    #[test]
    fn s_alpha_examples() {
        let f = sq1();
        let u = WeightModel::unit();
        // a_0 = 0, so only x = 1, 2 contribute: e(1/2) + e(2) = 0
        let v = s_alpha(&f, &u, 2.0, 0.5, &cfg()).unwrap();
        assert!(v.norm() < 1e-15);
        let f2 = QuadraticForm::diagonal(&[1, 1], 0).unwrap();
        let v = s_alpha(&f2, &u, 1.0, 0.25, &cfg()).unwrap();
        // only (1,1): e(1/2) = −1
        assert!((v - Complex64::new(-1.0, 0.0)).norm() < 1e-15);
        let p = WeightModel::primes();
        let h = QuadraticForm::hyperbolic(5, 0).unwrap();
        let v = s_alpha(&h, &p, 20.0, 0.0, &cfg()).unwrap();
        assert!((v.re - 8f64.powi(10)).abs() < 1e-3);
    }

    #[test]
    fn s_alpha_budget() {
        let f = QuadraticForm::diagonal(&[1, 2, 3], 0).unwrap();
        let small = ExpSumConfig {
            alpha_cap: 10,
            ..cfg()
        };
        assert!(matches!(
            s_alpha(&f, &WeightModel::unit(), 100.0, 0.1, &small),
            Err(Error::Budget { parameter: "alpha_cap", required: 300, .. })
        ));
    }

    #[test]
    fn s_t_examples() {
        let f = sq1();
        for m in [WeightModel::unit(), WeightModel::primes()] {
            let v = s_t_qa(&f, &m, 1, 0, Route::Direct, &cfg()).unwrap();
            assert!((v - 1.0).norm() < 1e-15);
        }
        let v = s_t_qa(&f, &WeightModel::unit(), 2, 1, Route::Direct, &cfg()).unwrap();
        assert!(v.norm() < 1e-15);
        let v = s_t_qa(&f, &WeightModel::primes(), 3, 1, Route::Direct, &cfg()).unwrap();
        assert!((v - numeric::e(1.0 / 3.0)).norm() < 1e-15);
        let v = s_t_qa(&f, &WeightModel::primes(), 3, 1, Route::Fast, &cfg()).unwrap();
        assert!((v - numeric::e(1.0 / 3.0)).norm() < 1e-14);
    }

    #[test]
    fn b_examples() {
        let f = sq1();
        let u = WeightModel::unit();
        assert_eq!(b_q(&f, &u, 1, Route::Auto, &cfg()).unwrap().value, Complex64::new(1.0, 0.0));
        assert!(b_q(&f, &u, 2, Route::Direct, &cfg()).unwrap().value.norm() < 1e-15);
    }

    #[test]
    fn gauss_sums_match_enumeration() {
        for (p, k) in [(3u64, 1u32), (3, 2), (3, 3), (5, 1), (5, 2), (7, 1), (11, 1)] {
            let q = p.pow(k);
            for d in 0..q as i128 {
                let mut acc = ComplexSum::new();
                for h in 0..q as i128 {
                    acc.add(numeric::e(((d * h * h) % q as i128) as f64 / q as f64));
                }
                let g = gauss_1d(d, p, k);
                assert!((g - acc.value()).norm() < 1e-9, "p={p} k={k} d={d}");
            }
        }
    }

    #[test]
    fn diagonalization_preserves_gauss_sum() {
        let m = vec![vec![0, 1, 0], vec![1, 0, 2], vec![0, 2, 3]];
        let f = QuadraticForm::new(m, 5).unwrap();
        for q in [3u64, 9, 27, 5, 25, 7] {
            for a in [1u64, 2, 3] {
                let d = s_t_qa(&f, &WeightModel::unit(), q, a, Route::Direct, &cfg()).unwrap();
                let g = s_t_qa(&f, &WeightModel::unit(), q, a, Route::Fast, &cfg()).unwrap();
                assert!((d - g).norm() <= 1e-9 * (1.0 + d.norm()), "q={q} a={a}");
                let d = s_t_qa(&f, &WeightModel::primes(), q, a, Route::Direct, &cfg()).unwrap();
                let g = s_t_qa(&f, &WeightModel::primes(), q, a, Route::Fast, &cfg()).unwrap();
                assert!((d - g).norm() <= 1e-9 * (1.0 + d.norm()), "primes q={q} a={a}");
            }
        }
    }

    #[test]
    fn hyperbolic_series_two_methods() {
        let h = QuadraticForm::hyperbolic(5, 0).unwrap();
        let u = WeightModel::unit();
        let rep = singular_series(&h, &u, 6, 2, &cfg()).unwrap();
        assert!(rep.imag_ok);
        let fast: f64 = (1..=6)
            .map(|q| b_q(&h, &u, q, Route::Auto, &cfg()).unwrap().value.re)
            .sum();
        assert!((rep.partial - fast).abs() < 1e-9);
        for q in 1..=3 {
            let d = b_q(&h, &u, q, Route::Direct, &cfg()).unwrap().value;
            assert!(close(d, rep.b(q).unwrap(), 1e-9));
        }
        let two: f64 = [1u64, 2, 4].iter().map(|&q| rep.b(q).unwrap().re).sum();
        assert!((two - rep.per_prime[0].partial_sums[2]).abs() < 1e-12);
        assert!(rep.warnings.is_empty());
    }

    #[test]
    fn series_p1() {
        let f = QuadraticForm::diagonal(&[1, 1], 3).unwrap();
        let rep = singular_series(&f, &WeightModel::unit(), 1, 1, &cfg()).unwrap();
        assert_eq!(rep.partial, 1.0);
        assert_eq!(rep.per_q.len(), 1);
        assert!(!rep.warnings.is_empty());
    }
}
