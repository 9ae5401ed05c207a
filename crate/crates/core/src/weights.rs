//! Weight sequences `(a_x)`: pointwise values, cumulative sums, the limiting
//! residue-class densities `κ(q, h)`, smooth approximants and condition audits.
//!
//! Every model has `a_0 = 0`, so sums over `0 ≤ x ≤ X` and `1 ≤ x ≤ X` agree.

use std::collections::BTreeMap;
use std::sync::Arc;

use num_integer::Integer;
use num_traits::{One, Zero};
use serde::{Deserialize, Serialize};

use crate::arith::{self, Rational};
use crate::error::{Error, Result};

/// Default order `m` of the smooth approximant.
pub const DEFAULT_SMOOTH_ORDER: u32 = 5;
/// Default `k` for the k-free model.
pub const DEFAULT_KFREE_K: u32 = 2;

#[derive(Debug, Clone, PartialEq)]
pub enum WeightKind {
    Unit,
    Primes,
    KFree(u32),
    Custom(Arc<CustomModel>),
}

/// A weight sequence together with the order of its smooth approximant.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightModel {
    kind: WeightKind,
    order: u32,
}

impl WeightModel {
    pub fn unit() -> Self {
        WeightModel {
            kind: WeightKind::Unit,
            order: DEFAULT_SMOOTH_ORDER,
        }
    }

    pub fn primes() -> Self {
        WeightModel {
            kind: WeightKind::Primes,
            order: DEFAULT_SMOOTH_ORDER,
        }
    }

    pub fn kfree(k: u32) -> Result<Self> {
        if k < 2 {
            return Err(Error::invalid(format!("k-free model needs k ≥ 2, got {k}")));
        }
        Ok(WeightModel {
            kind: WeightKind::KFree(k),
            order: DEFAULT_SMOOTH_ORDER,
        })
    }

    pub fn custom(model: CustomModel) -> Self {
        WeightModel {
            kind: WeightKind::Custom(Arc::new(model)),
            order: DEFAULT_SMOOTH_ORDER,
        }
    }

    /// Parses `unit`, `primes`, `kfree` (k = 2), `kfree:k` or `custom:path`.
    pub fn parse(spec: &str) -> Result<Self> {
        let spec = spec.trim();
        match spec.split_once(':') {
            None => match spec {
                "unit" => Ok(Self::unit()),
                "primes" => Ok(Self::primes()),
                "kfree" => Self::kfree(DEFAULT_KFREE_K),
                _ => Err(Error::invalid(format!("unknown weight model {spec:?}"))),
            },
            Some(("kfree", k)) => {
                let k = k
                    .parse()
                    .map_err(|_| Error::invalid(format!("bad k in {spec:?}")))?;
                Self::kfree(k)
            }
            Some(("custom", path)) => {
                let text = std::fs::read_to_string(path)
                    .map_err(|e| Error::invalid(format!("cannot read {path}: {e}")))?;
                Ok(Self::custom(CustomModel::from_json(&text)?))
            }
            _ => Err(Error::invalid(format!("unknown weight model {spec:?}"))),
        }
    }

    pub fn with_order(mut self, m: u32) -> Self {
        self.order = m;
        self
    }

    pub fn order(&self) -> u32 {
        self.order
    }

    pub fn kind(&self) -> &WeightKind {
        &self.kind
    }

    pub fn name(&self) -> String {
        match &self.kind {
            WeightKind::Unit => "unit".into(),
            WeightKind::Primes => "primes".into(),
            WeightKind::KFree(k) => format!("kfree:{k}"),
            WeightKind::Custom(_) => "custom".into(),
        }
    }

    /// True when every weight is 0 or 1, so weighted counts are integers.
    pub fn is_indicator(&self) -> bool {
        match &self.kind {
            WeightKind::Custom(c) => c.a.iter().all(|&v| v == 0.0 || v == 1.0),
            _ => true,
        }
    }

    /// True when κ values come from a user table or an estimate rather than a formula.
    pub fn kappa_is_approximate(&self) -> bool {
        matches!(&self.kind, WeightKind::Custom(c) if c.kappa_estimated)
    }

    pub fn weight_at(&self, x: u64) -> f64 {
        if x == 0 {
            return 0.0;
        }
        match &self.kind {
            WeightKind::Unit => 1.0,
            WeightKind::Primes => arith::is_prime(x) as u8 as f64,
            WeightKind::KFree(k) => is_kfree(x, *k) as u8 as f64,
            WeightKind::Custom(c) => c.a.get(x as usize - 1).copied().unwrap_or(0.0),
        }
    }

    /// Values `a_0..=a_limit` and their prefix sums.
    pub fn table(&self, limit: u64) -> WeightTable {
        WeightTable::new(self, limit)
    }

    /// `A(X) = Σ_{x ≤ X} a_x`.
    pub fn cumulative(&self, x: f64) -> f64 {
        if x < 1.0 {
            return 0.0;
        }
        self.table(x.floor() as u64).cumulative(x)
    }

    /// `A(q, h; X) = Σ_{x ≤ X, x ≡ h (q)} a_x`.
    pub fn cumulative_progression(&self, q: u64, h: u64, x: f64) -> Result<f64> {
        if x < 1.0 {
            check_residue(q, h)?;
            return Ok(0.0);
        }
        self.table(x.floor() as u64).cumulative_progression(q, h, x)
    }

    /// Exact `κ(q, h)`.
    pub fn kappa(&self, q: u64, h: u64) -> Result<Rational> {
        check_residue(q, h)?;
        Ok(match &self.kind {
            WeightKind::Unit => Rational::new(1, q as i128),
            WeightKind::Primes => {
                if arith::gcd(h, q) == 1 {
                    Rational::new(1, arith::euler_phi(q) as i128)
                } else {
                    Rational::zero()
                }
            }
            WeightKind::KFree(k) => kfree_kappa(q, h, *k),
            WeightKind::Custom(c) => c.kappa(q, h)?,
        })
    }

    /// All `κ(q, h)` for `h = 0..q`.
    pub fn kappa_row(&self, q: u64) -> Result<Vec<Rational>> {
        (0..q).map(|h| self.kappa(q, h)).collect()
    }

    pub fn smooth_approx(&self) -> Result<SmoothApproximant> {
        let m = self.order;
        let shape = match &self.kind {
            WeightKind::Unit => Shape::Linear { c: 1.0 },
            WeightKind::KFree(k) => Shape::Linear {
                c: 1.0 / arith::zeta(*k),
            },
            WeightKind::Primes => Shape::LogIntegral { m },
            WeightKind::Custom(c) => match &c.psi {
                Some(PsiSpec::PowerLog { c, k, l, .. }) => Shape::PowerLog {
                    c: *c,
                    k: *k,
                    l: *l,
                },
                None => {
                    return Err(Error::MissingTable(
                        "custom model has no smooth approximant (\"psi\")".into(),
                    ))
                }
            },
        };
        let threshold = match (&self.kind, &shape) {
            (WeightKind::Custom(c), _) => match &c.psi {
                Some(PsiSpec::PowerLog { threshold, .. }) => threshold.unwrap_or(1.0),
                None => 1.0,
            },
            (_, Shape::LogIntegral { m }) => primes_threshold(*m),
            _ => 0.0,
        };
        Ok(SmoothApproximant {
            shape,
            threshold,
            order: m,
        })
    }
}

fn check_residue(q: u64, h: u64) -> Result<()> {
    if q == 0 || h >= q {
        Err(Error::invalid(format!("need q ≥ 1 and 0 ≤ h < q, got q={q}, h={h}")))
    } else {
        Ok(())
    }
}

fn is_kfree(x: u64, k: u32) -> bool {
    arith::factorize(x).iter().all(|&(_, e)| e < k)
}

fn kfree_kappa(q: u64, h: u64, k: u32) -> Rational {
    let g = arith::gcd(q, h);
    let fac = arith::factorize(q);
    if arith::factorize(g).iter().any(|&(_, e)| e >= k) {
        return Rational::zero();
    }
    let reduced = q / g;
    let mut acc = Rational::new(1, q as i128);
    for &(p, e) in &fac {
        let pk = (p as i128).pow(k);
        acc *= Rational::new(pk, pk - 1);
        if reduced % p != 0 {
            // p^{e-k} with e < k
            let pd = (p as i128).pow(k - e);
            acc *= Rational::new(pd - 1, pd);
        }
    }
    acc
}

/// `max(e², exp((m!)^{1/m}))`: beyond it `ψ` is positive for the prime model.
fn primes_threshold(m: u32) -> f64 {
    let fact: f64 = (1..=m.max(1)).map(|k| k as f64).product();
    let root = fact.powf(1.0 / m.max(1) as f64);
    (2.0f64).max(root * (1.0 + 1e-9)).exp()
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Shape {
    /// `Ψ(X) = cX`.
    Linear { c: f64 },
    /// `Ψ(X) = (X/L) Σ_{k<m} k!·L^{−k}`, `L = log X`.
    LogIntegral { m: u32 },
    /// `Ψ(X) = c X^k L^l`.
    PowerLog { c: f64, k: f64, l: f64 },
}

/// A smooth `Ψ` approximating `A(X)` and its derivative `ψ`.
///
/// Below `threshold` both are replaced by the linear ramp through
/// `(threshold, Ψ(threshold))`, so `Ψ(0) = 0` and `∫₀^X ψ = Ψ(X)` everywhere.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SmoothApproximant {
    shape: Shape,
    threshold: f64,
    order: u32,
}

impl SmoothApproximant {
    pub fn order(&self) -> u32 {
        self.order
    }

    pub fn threshold(&self) -> f64 {
        self.threshold
    }

    fn raw_big(&self, x: f64) -> f64 {
        match self.shape {
            Shape::Linear { c } => c * x,
            Shape::LogIntegral { m } => {
                let l = x.ln();
                let mut term = 1.0 / l;
                let mut acc = 0.0;
                for k in 0..m {
                    acc += term;
                    term *= (k + 1) as f64 / l;
                }
                x * acc
            }
            Shape::PowerLog { c, k, l } => c * x.powf(k) * x.ln().powf(l),
        }
    }

    fn raw_small(&self, x: f64) -> f64 {
        match self.shape {
            Shape::Linear { c } => c,
            Shape::LogIntegral { m } => {
                let l = x.ln();
                let fact: f64 = (1..=m).map(|k| k as f64).product();
                1.0 / l - fact / l.powi(m as i32 + 1)
            }
            Shape::PowerLog { c, k, l } => {
                let lg = x.ln();
                c * x.powf(k - 1.0) * lg.powf(l - 1.0) * (k * lg + l)
            }
        }
    }

    /// `Ψ(X)`.
    pub fn big_psi(&self, x: f64) -> f64 {
        if x <= 0.0 {
            0.0
        } else if x < self.threshold {
            x * self.raw_big(self.threshold) / self.threshold
        } else {
            self.raw_big(x)
        }
    }

    /// `ψ(X) = Ψ'(X)`.
    pub fn psi(&self, x: f64) -> f64 {
        if x < self.threshold {
            if self.threshold > 0.0 {
                self.raw_big(self.threshold) / self.threshold
            } else {
                self.raw_small(1.0)
            }
        } else {
            self.raw_small(x)
        }
    }
}

/// Values `a_0..=limit`, with prefix sums.
#[derive(Debug, Clone)]
pub struct WeightTable {
    values: Vec<f64>,
    prefix: Vec<f64>,
    squares: Vec<f64>,
}

impl WeightTable {
    pub fn new(model: &WeightModel, limit: u64) -> Self {
        let n = limit as usize;
        let values: Vec<f64> = match &model.kind {
            WeightKind::Unit => (0..=n).map(|x| (x > 0) as u8 as f64).collect(),
            WeightKind::Primes => arith::prime_flags(n)
                .into_iter()
                .map(|b| b as u8 as f64)
                .collect(),
            WeightKind::KFree(k) => arith::kfree_flags(n, *k)
                .into_iter()
                .map(|b| b as u8 as f64)
                .collect(),
            WeightKind::Custom(_) => (0..=limit).map(|x| model.weight_at(x)).collect(),
        };
        let mut prefix = Vec::with_capacity(values.len());
        let mut squares = Vec::with_capacity(values.len());
        let (mut acc, mut acc2) = (
            crate::numeric::CompensatedSum::new(),
            crate::numeric::CompensatedSum::new(),
        );
        for &v in &values {
            acc.add(v);
            acc2.add(v * v);
            prefix.push(acc.value());
            squares.push(acc2.value());
        }
        WeightTable {
            values,
            prefix,
            squares,
        }
    }

    pub fn limit(&self) -> u64 {
        self.values.len() as u64 - 1
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, x: u64) -> f64 {
        self.values[x as usize]
    }

    fn index(&self, x: f64) -> Result<Option<usize>> {
        if x < 0.0 {
            return Ok(None);
        }
        let i = x.floor() as u64;
        if i > self.limit() {
            return Err(Error::invalid(format!(
                "X = {x} exceeds the table limit {}",
                self.limit()
            )));
        }
        Ok(Some(i as usize))
    }

    pub fn cumulative(&self, x: f64) -> f64 {
        match self.index(x.min(self.limit() as f64)) {
            Ok(Some(i)) => self.prefix[i],
            _ => 0.0,
        }
    }

    /// `Σ_{x ≤ X} a_x²`.
    pub fn cumulative_squares(&self, x: f64) -> f64 {
        match self.index(x.min(self.limit() as f64)) {
            Ok(Some(i)) => self.squares[i],
            _ => 0.0,
        }
    }

    pub fn cumulative_progression(&self, q: u64, h: u64, x: f64) -> Result<f64> {
        check_residue(q, h)?;
        let Some(end) = self.index(x)? else {
            return Ok(0.0);
        };
        let mut acc = crate::numeric::CompensatedSum::new();
        let mut i = h as usize;
        while i <= end {
            acc.add(self.values[i]);
            i += q as usize;
        }
        Ok(acc.value())
    }

    /// Points `x ≤ X` with `a_x ≠ 0`, with their weights.
    pub fn support(&self, x: u64) -> Vec<(i64, f64)> {
        let end = (x.min(self.limit())) as usize;
        self.values[..=end]
            .iter()
            .enumerate()
            .filter(|(_, &v)| v != 0.0)
            .map(|(i, &v)| (i as i64, v))
            .collect()
    }
}

/// Smooth approximant parameters of a custom model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PsiSpec {
    /// `Ψ(X) = c X^k (log X)^l` above `threshold`.
    PowerLog {
        c: f64,
        k: f64,
        #[serde(default)]
        l: f64,
        #[serde(default)]
        threshold: Option<f64>,
    },
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct CustomFile {
    a: Vec<f64>,
    #[serde(default)]
    kappa: Option<BTreeMap<String, BTreeMap<String, String>>>,
    #[serde(default)]
    psi: Option<PsiSpec>,
}

/// A user-supplied weight table.
#[derive(Debug, Clone, PartialEq)]
pub struct CustomModel {
    /// `a[i]` is the weight of `x = i + 1`.
    pub a: Vec<f64>,
    pub kappa: Option<BTreeMap<u64, BTreeMap<u64, Rational>>>,
    pub psi: Option<PsiSpec>,
    /// Set when `kappa` was filled by [`CustomModel::estimate_kappa`].
    pub kappa_estimated: bool,
}

impl CustomModel {
    pub fn new(a: Vec<f64>) -> Result<Self> {
        if let Some(v) = a.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
            return Err(Error::invalid(format!("weights must be finite and ≥ 0, got {v}")));
        }
        Ok(CustomModel {
            a,
            kappa: None,
            psi: None,
            kappa_estimated: false,
        })
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: CustomFile = serde_json::from_str(text)
            .map_err(|e| Error::invalid(format!("custom weight JSON: {e}")))?;
        let mut model = Self::new(file.a)?;
        model.psi = file.psi;
        if let Some(table) = file.kappa {
            let mut out = BTreeMap::new();
            for (q, row) in table {
                let q: u64 = q
                    .parse()
                    .map_err(|_| Error::invalid(format!("bad κ modulus {q:?}")))?;
                let mut parsed = BTreeMap::new();
                for (h, v) in row {
                    let h: u64 = h
                        .parse()
                        .map_err(|_| Error::invalid(format!("bad κ residue {h:?}")))?;
                    check_residue(q, h)?;
                    parsed.insert(h, arith::parse_rational(&v)?);
                }
                out.insert(q, parsed);
            }
            model.kappa = Some(out);
        }
        Ok(model)
    }

    fn kappa(&self, q: u64, h: u64) -> Result<Rational> {
        let table = self
            .kappa
            .as_ref()
            .ok_or_else(|| Error::MissingTable("custom model has no κ table".into()))?;
        let row = table
            .get(&q)
            .ok_or_else(|| Error::MissingTable(format!("κ table has no row for q = {q}")))?;
        Ok(row.get(&h).copied().unwrap_or_else(Rational::zero))
    }

    /// Fills the κ table for `q ≤ qmax` from the empirical ratios
    /// `A(q, h; X)/A(X)` over the whole table, rounded to denominator `10^6`.
    pub fn estimate_kappa(&mut self, qmax: u64) {
        let total: f64 = self.a.iter().sum();
        let mut table = BTreeMap::new();
        for q in 1..=qmax {
            let mut sums = vec![0.0; q as usize];
            for (i, &v) in self.a.iter().enumerate() {
                sums[(i + 1) % q as usize] += v;
            }
            let row = sums
                .iter()
                .enumerate()
                .map(|(h, &s)| {
                    let ratio = if total > 0.0 { s / total } else { 0.0 };
                    (h as u64, Rational::new((ratio * 1e6).round() as i128, 1_000_000))
                })
                .collect();
            table.insert(q, row);
        }
        self.kappa = Some(table);
        self.kappa_estimated = true;
    }
}

/// Outcome of one audited condition.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConditionCheck {
    pub condition: String,
    /// `None` for purely diagnostic checks.
    pub passed: Option<bool>,
    pub cases: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub constant: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub exponent: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub witness: Option<String>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub columns: Vec<String>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub table: Vec<Vec<f64>>,
}

impl ConditionCheck {
    fn new(condition: &str) -> Self {
        ConditionCheck {
            condition: condition.into(),
            passed: Some(true),
            cases: 0,
            constant: None,
            exponent: None,
            witness: None,
            columns: Vec::new(),
            table: Vec::new(),
        }
    }

    fn fail(&mut self, witness: String) {
        if self.passed == Some(true) {
            self.passed = Some(false);
            self.witness = Some(witness);
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConditionReport {
    pub model: String,
    /// Set when κ came from an empirical estimate, so exact audits prove nothing.
    pub approximate: bool,
    pub checks: Vec<ConditionCheck>,
}

impl ConditionReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed != Some(false))
    }

    pub fn check(&self, condition: &str) -> Option<&ConditionCheck> {
        self.checks.iter().find(|c| c.condition == condition)
    }
}

/// Exact audits of κ for every modulus up to `qmax`: normalization, the
/// coprime multiplicativity identity, the refinement identity, and a fit of
/// the constant in `κ(q, h) ≪ (log q)^c / q`.
pub fn audit_kappa(model: &WeightModel, qmax: u64) -> Result<ConditionReport> {
    if qmax < 2 {
        return Err(Error::invalid("audit_kappa needs qmax ≥ 2"));
    }
    let rows: Vec<Vec<Rational>> = (0..=qmax)
        .map(|q| if q == 0 { Ok(Vec::new()) } else { model.kappa_row(q) })
        .collect::<Result<_>>()?;

    let mut norm = ConditionCheck::new("normalization");
    for q in 1..=qmax {
        let s: Rational = rows[q as usize].iter().copied().sum();
        norm.cases += 1;
        if !s.is_one() {
            norm.fail(format!("q={q}: Σ_h κ(q,h) = {}", arith::format_rational(&s)));
        }
    }

    let mut cond_c = ConditionCheck::new("C");
    for q in 1..=qmax {
        for q2 in 1..=qmax / q {
            if q.gcd(&q2) != 1 {
                continue;
            }
            let big = &rows[(q * q2) as usize];
            for h in 0..q {
                let left = rows[q as usize][((q2 * h) % q) as usize];
                for h2 in 0..q2 {
                    cond_c.cases += 1;
                    let right = rows[q2 as usize][((q * h2) % q2) as usize];
                    let joint = big[((q * h2 + q2 * h) % (q * q2)) as usize];
                    if joint != left * right {
                        cond_c.fail(format!("q={q}, q'={q2}, h={h}, h'={h2}"));
                    }
                }
            }
        }
    }

    let mut refine = ConditionCheck::new("refinement");
    for q in 1..=qmax {
        for q2 in 1..=qmax / q {
            let big = &rows[(q * q2) as usize];
            for h in 0..q {
                refine.cases += 1;
                let s: Rational = (0..q2).map(|j| big[(h + j * q) as usize]).sum();
                if s != rows[q as usize][h as usize] {
                    refine.fail(format!("q={q}, q'={q2}, h={h}"));
                }
            }
        }
    }

    let k_check = fit_condition_k(&rows, qmax);
    Ok(ConditionReport {
        model: model.name(),
        approximate: model.kappa_is_approximate(),
        checks: vec![norm, cond_c, refine, k_check],
    })
}

/// Smallest `c ∈ {0, 1, 2}` for which the dyadic-block maxima of
/// `q·max_h κ(q,h)/(log q)^c` never increase; the constant is the overall max.
fn fit_condition_k(rows: &[Vec<Rational>], qmax: u64) -> ConditionCheck {
    let mut check = ConditionCheck::new("K");
    check.passed = None;
    check.columns = vec!["q".into(), "q*max_h kappa".into()];
    let scaled: Vec<(u64, f64)> = (2..=qmax)
        .map(|q| {
            let m = rows[q as usize].iter().max().copied().unwrap_or_default();
            (q, q as f64 * arith::rational_to_f64(&m))
        })
        .collect();
    check.cases = scaled.len() as u64;
    check.table = scaled.iter().map(|&(q, v)| vec![q as f64, v]).collect();
    for c in 0..=2 {
        let ratio = |q: u64, v: f64| v / (q as f64).ln().powi(c);
        let mut blocks: Vec<(f64, u64)> = Vec::new();
        let mut lo = 2u64;
        while lo <= qmax {
            let hi = (2 * lo).min(qmax + 1);
            let best = scaled
                .iter()
                .filter(|(q, _)| (lo..hi).contains(q))
                .map(|&(q, v)| (ratio(q, v), q))
                .fold((f64::MIN, 0), |a, b| if b.0 > a.0 { b } else { a });
            blocks.push(best);
            lo *= 2;
        }
        let monotone = blocks.windows(2).all(|w| w[1].0 <= w[0].0 * (1.0 + 1e-12));
        if monotone || c == 2 {
            let (constant, q) = blocks
                .iter()
                .copied()
                .fold((f64::MIN, 0), |a, b| if b.0 > a.0 { b } else { a });
            check.exponent = Some(c as f64);
            check.constant = Some(constant);
            check.witness = Some(format!("q={q}"));
            check.passed = Some(monotone);
            break;
        }
    }
    check
}

/// Second-moment and equidistribution diagnostics over an increasing grid of
/// `X` values.
pub fn audit_distribution(
    model: &WeightModel,
    q_list: &[u64],
    x_grid: &[f64],
) -> Result<ConditionReport> {
    if x_grid.len() < 3 || x_grid.windows(2).any(|w| w[1] <= w[0]) || x_grid[0] < 2.0 {
        return Err(Error::invalid(
            "X grid must be increasing, start at 2 or more, and have at least 3 points",
        ));
    }
    let xmax = *x_grid.last().unwrap();
    let table = model.table(xmax.floor() as u64);

    let mut l2 = ConditionCheck::new("L2");
    l2.passed = None;
    l2.columns = vec!["X".into(), "X*sum a^2/A^2".into()];
    for &x in x_grid {
        let a = table.cumulative(x);
        let ratio = if a > 0.0 {
            table.cumulative_squares(x) * x / (a * a)
        } else {
            f64::INFINITY
        };
        l2.table.push(vec![x, ratio]);
    }
    l2.cases = x_grid.len() as u64;
    l2.exponent = Some(log_power_slope(&l2.table));
    l2.constant = l2.table.iter().map(|r| r[1]).reduce(f64::max);

    let mut d = ConditionCheck::new("D");
    d.columns = vec!["X".into(), "q".into(), "h".into(), "discrepancy".into()];
    let mut worst_per_x = Vec::new();
    for &x in x_grid {
        let a = table.cumulative(x);
        let mut worst = (0.0f64, 0u64, 0u64);
        for &q in q_list {
            if q == 0 {
                return Err(Error::invalid("modulus q must be ≥ 1"));
            }
            let row = model.kappa_row(q)?;
            for h in 0..q {
                let obs = table.cumulative_progression(q, h, x)?;
                let disc = (obs - arith::rational_to_f64(&row[h as usize]) * a).abs() / a;
                if disc > worst.0 {
                    worst = (disc, q, h);
                }
            }
        }
        d.table.push(vec![x, worst.1 as f64, worst.2 as f64, worst.0]);
        worst_per_x.push(vec![x, worst.0]);
        d.cases += q_list.iter().sum::<u64>();
    }
    d.exponent = Some(log_power_slope(&worst_per_x));
    d.constant = worst_per_x.iter().map(|r| r[1]).reduce(f64::max);
    let first = worst_per_x[0][1];
    let last = worst_per_x.last().unwrap()[1];
    d.passed = Some(last < first || last == 0.0);
    if d.passed == Some(false) {
        d.witness = Some(format!("discrepancy {last:e} at X={xmax} vs {first:e} at X={}", x_grid[0]));
    }

    Ok(ConditionReport {
        model: model.name(),
        approximate: model.kappa_is_approximate(),
        checks: vec![l2, d],
    })
}

/// Least-squares slope of `log y` against `log log X` for rows `[X, y]`.
fn log_power_slope(rows: &[Vec<f64>]) -> f64 {
    let pts: Vec<(f64, f64)> = rows
        .iter()
        .filter(|r| r[0] > 1.0 && r[1] > 0.0 && r[1].is_finite())
        .map(|r| (r[0].ln().ln(), r[1].ln()))
        .collect();
    if pts.len() < 2 {
        return 0.0;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx == 0.0 {
        0.0
    } else {
        sxy / sxx
    }
}

/// Least common multiple of the κ denominators of a row.
pub(crate) fn row_denominator(row: &[Rational]) -> Result<u128> {
    let mut d: u128 = 1;
    for r in row {
        let den = *r.denom() as u128;
        d = arith::lcm(d, den);
        if d > u64::MAX as u128 {
            return Err(Error::Overflow("κ denominator"));
        }
    }
    Ok(d)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn r(n: i128, d: i128) -> Rational {
        Rational::new(n, d)
    }

    #[test]
    fn weight_examples() {
        assert_eq!(WeightModel::primes().weight_at(7), 1.0);
        assert_eq!(WeightModel::kfree(2).unwrap().weight_at(12), 0.0);
        assert_eq!(WeightModel::unit().weight_at(0), 0.0);
        assert_eq!(WeightModel::primes().weight_at(1), 0.0);
    }

    #[test]
    fn cumulative_examples() {
        assert_eq!(WeightModel::primes().cumulative(10.0), 4.0);
        assert_eq!(WeightModel::unit().cumulative(10.0), 10.0);
        assert_eq!(WeightModel::kfree(2).unwrap().cumulative(10.0), 7.0);
        assert_eq!(WeightModel::unit().cumulative(10.7), 10.0);
    }

    #[test]
    fn progression_examples() {
        let p = WeightModel::primes();
        assert_eq!(p.cumulative_progression(4, 2, 10.0).unwrap(), 1.0);
        assert_eq!(WeightModel::unit().cumulative_progression(2, 0, 10.0).unwrap(), 5.0);
        let k = WeightModel::kfree(2).unwrap();
        assert_eq!(k.cumulative_progression(4, 0, 100.0).unwrap(), 0.0);
        assert!(p.cumulative_progression(4, 4, 10.0).is_err());
    }

    #[test]
    fn kappa_examples() {
        let k2 = WeightModel::kfree(2).unwrap();
        assert_eq!(WeightModel::primes().kappa(6, 5).unwrap(), r(1, 2));
        assert_eq!(k2.kappa(4, 0).unwrap(), r(0, 1));
        assert_eq!(k2.kappa(4, 2).unwrap(), r(1, 3));
        assert_eq!(k2.kappa(2, 1).unwrap(), r(2, 3));
        assert_eq!(k2.kappa(2, 0).unwrap(), r(1, 3));
        for m in [WeightModel::unit(), WeightModel::primes(), k2] {
            assert_eq!(m.kappa(1, 0).unwrap(), r(1, 1));
        }
    }

    #[test]
    fn empirical_squarefree_ratio() {
        let k2 = WeightModel::kfree(2).unwrap();
        let t = k2.table(1_000_000);
        let a = t.cumulative(1e6);
        let ratio = t.cumulative_progression(4, 2, 1e6).unwrap() / a;
        assert!((ratio - 1.0 / 3.0).abs() < 1e-2);
    }

    #[test]
    fn smooth_examples() {
        let u = WeightModel::unit().smooth_approx().unwrap();
        assert_eq!(u.big_psi(100.0), 100.0);
        assert_eq!(u.psi(3.0), 1.0);
        let k = WeightModel::kfree(2).unwrap().smooth_approx().unwrap();
        assert!((k.big_psi(1e6) / 1e6 - 6.0 / std::f64::consts::PI.powi(2)).abs() < 1e-12);
        let p = WeightModel::primes().with_order(1).smooth_approx().unwrap();
        let x = 10f64.exp();
        assert!((p.big_psi(x) - x / 10.0).abs() < 1e-9 * x);
    }

    #[test]
    fn primes_psi_is_derivative_and_positive() {
        for m in 1..=6 {
            let s = WeightModel::primes().with_order(m).smooth_approx().unwrap();
            for &x in &[3.0, 10.0, 50.0, 1e3, 1e5] {
                assert!(s.psi(x) > 0.0, "m={m} x={x}");
                if x > s.threshold() * 1.01 {
                    let h = 1e-4 * x;
                    let fd = (s.big_psi(x + h) - s.big_psi(x - h)) / (2.0 * h);
                    assert!((fd - s.psi(x)).abs() < 1e-6 * s.psi(x).abs().max(1e-3));
                }
            }
            assert_eq!(s.big_psi(0.0), 0.0);
        }
    }

    #[test]
    fn audits_pass_for_builtins() {
        for m in [
            WeightModel::unit(),
            WeightModel::primes(),
            WeightModel::kfree(2).unwrap(),
            WeightModel::kfree(3).unwrap(),
        ] {
            let rep = audit_kappa(&m, 50).unwrap();
            assert!(rep.all_passed(), "{}: {:?}", m.name(), rep);
        }
        let unit = audit_kappa(&WeightModel::unit(), 50).unwrap();
        let k = unit.check("K").unwrap();
        assert_eq!(k.exponent, Some(0.0));
        assert_eq!(k.constant, Some(1.0));
        let kf = audit_kappa(&WeightModel::kfree(2).unwrap(), 50).unwrap();
        assert_eq!(kf.check("K").unwrap().exponent, Some(1.0));
    }

    #[test]
    fn audit_reports_broken_table() {
        let mut c = CustomModel::new(vec![1.0; 10]).unwrap();
        let mut table = BTreeMap::new();
        table.insert(1, BTreeMap::from([(0, r(1, 1))]));
        table.insert(2, BTreeMap::from([(0, r(1, 2)), (1, r(1, 3))]));
        c.kappa = Some(table);
        let m = WeightModel::custom(c);
        let rep = audit_kappa(&m, 2).unwrap();
        let norm = rep.check("normalization").unwrap();
        assert_eq!(norm.passed, Some(false));
        assert_eq!(norm.witness.as_deref(), Some("q=2: Σ_h κ(q,h) = 5/6"));
        assert!(audit_kappa(&m, 3).is_err());
    }

    #[test]
    fn distribution_audit() {
        let rep = audit_distribution(&WeightModel::unit(), &[3], &[100.0, 1000.0, 10000.0]).unwrap();
        for row in &rep.check("L2").unwrap().table {
            assert_eq!(row[1], 1.0);
        }
        let rep = audit_distribution(&WeightModel::primes(), &[3], &[1e4, 1e5, 1e6]).unwrap();
        let d = rep.check("D").unwrap();
        assert_eq!(d.passed, Some(true));
        let disc: Vec<f64> = d.table.iter().map(|r| r[3]).collect();
        assert!(disc.windows(2).all(|w| w[1] < w[0]), "{disc:?}");
    }

    #[test]
    fn custom_json_and_parse() {
        let text = r#"{"a": [1, 0, 1, 0], "kappa": {"1": {"0": "1"}, "2": {"1": "1/1"}},
                       "psi": {"kind": "power_log", "c": 0.5, "k": 1}}"#;
        let m = WeightModel::custom(CustomModel::from_json(text).unwrap());
        assert_eq!(m.weight_at(3), 1.0);
        assert_eq!(m.weight_at(9), 0.0);
        assert_eq!(m.kappa(2, 0).unwrap(), r(0, 1));
        assert!(matches!(m.kappa(3, 0), Err(Error::MissingTable(_))));
        assert!((m.smooth_approx().unwrap().big_psi(10.0) - 5.0).abs() < 1e-12);
        assert!(CustomModel::from_json(r#"{"a": [1], "b": 2}"#).is_err());
        assert!(WeightModel::parse("kfree:3").is_ok());
        assert!(WeightModel::parse("kfree:1").is_err());
        assert!(WeightModel::parse("bogus").is_err());
    }

    #[test]
    fn estimated_kappa_is_flagged() {
        let mut c = CustomModel::new((1..=1000).map(|x| (x % 2) as f64).collect()).unwrap();
        c.estimate_kappa(4);
        let m = WeightModel::custom(c);
        assert!(m.kappa_is_approximate());
        assert_eq!(m.kappa(2, 1).unwrap(), r(1, 1));
        assert!(audit_kappa(&m, 4).unwrap().approximate);
    }
}
