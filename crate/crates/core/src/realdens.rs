//! Real density: positive real zeros, the comparison boxes around a point of
//! the level set `f = t₀`, Monte Carlo estimates of the weighted level-set
//! density `σ∞`, and small-dimension quadrature of the singular integral.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::arith;
use crate::error::{Error, Result};
use crate::forms::QuadraticForm;
use crate::numeric::{self, CompensatedSum, ComplexSum, KroneckerSequence};
use crate::par;
use crate::weights::{SmoothApproximant, WeightModel};

/// Smallest coordinate accepted for a positive zero.
pub const DEFAULT_MARGIN: f64 = 0.05;
/// Random starts tried by [`find_positive_zero`].
pub const DEFAULT_STARTS: usize = 200;
/// Gradient magnitude below which a point counts as degenerate.
pub const DEGENERATE_GRADIENT: f64 = 1e-6;

const SAMPLE_BLOCKS: usize = 64;

fn frobenius(form: &QuadraticForm) -> f64 {
    form.matrix()
        .iter()
        .flatten()
        .map(|&v| (v as f64).powi(2))
        .sum::<f64>()
        .sqrt()
}

fn norm2(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Roots of `F_jj δ² + g_j δ + (f − target) = 0`, the change of `f` when only
/// coordinate `j` moves by `δ`.
fn coordinate_roots(form: &QuadraticForm, x: &[f64], j: usize, target: f64) -> Vec<f64> {
    let a = form.entry(j, j) as f64;
    let g = form.gradient_unchecked(x)[j];
    let c = form.evaluate_f64(x) - target;
    if a == 0.0 {
        return if g != 0.0 { vec![-c / g] } else { Vec::new() };
    }
    let disc = g * g - 4.0 * a * c;
    if disc < 0.0 {
        return Vec::new();
    }
    // numerically stable pair
    let sq = disc.sqrt();
    let sign = if g >= 0.0 { 1.0 } else { -1.0 };
    let qv = -0.5 * (g + sign * sq);
    let mut roots = Vec::with_capacity(2);
    if qv != 0.0 {
        roots.push(qv / a);
        roots.push(c / qv);
    } else {
        roots.push(0.0);
    }
    roots
}

/// Moves one coordinate so that `f(x) = target`, choosing the coordinate with
/// the largest gradient that admits a root keeping `x_j ≥ margin`, and the
/// smallest such move. Returns the coordinate used.
fn solve_on_coordinate(
    form: &QuadraticForm,
    x: &mut [f64],
    target: f64,
    margin: f64,
) -> Option<usize> {
    let g = form.gradient_unchecked(x);
    let mut order: Vec<usize> = (0..x.len()).collect();
    order.sort_by(|&a, &b| g[b].abs().total_cmp(&g[a].abs()));
    for j in order {
        let best = coordinate_roots(form, x, j, target)
            .into_iter()
            .filter(|d| d.is_finite() && x[j] + d >= margin)
            .min_by(|a, b| a.abs().total_cmp(&b.abs()));
        if let Some(d) = best {
            x[j] += d;
            return Some(j);
        }
    }
    None
}

/// Newton polish on one coordinate.
fn polish(form: &QuadraticForm, x: &mut [f64], j: usize, target: f64) {
    for _ in 0..4 {
        let r = form.evaluate_f64(x) - target;
        let g = form.gradient_unchecked(x)[j];
        if g == 0.0 || r == 0.0 {
            break;
        }
        x[j] -= r / g;
    }
}

fn zero_tolerance(form: &QuadraticForm, x: &[f64]) -> f64 {
    1e-12 * frobenius(form) * norm2(x).powi(2)
}

/// A point `x₀ > 0` with `f(x₀) = 0` and `∇f(x₀) ≠ 0`.
///
/// Starts are drawn from `[0.2, 2]^s`; from each, one coordinate is moved to
/// an exact root of the induced quadratic, with damped Newton steps when no
/// coordinate has a root in range.
pub fn find_positive_zero(form: &QuadraticForm, seed: u64) -> Result<Vec<f64>> {
    find_positive_zero_with(form, seed, DEFAULT_STARTS, DEFAULT_MARGIN)
}

pub fn find_positive_zero_with(
    form: &QuadraticForm,
    seed: u64,
    starts: usize,
    margin: f64,
) -> Result<Vec<f64>> {
    if arith::is_definite(form.matrix()) {
        return Err(Error::Infeasible(
            "the form is definite, so f = 0 has no nonzero real solution".into(),
        ));
    }
    let s = form.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..starts {
        let mut x: Vec<f64> = (0..s).map(|_| rng.gen_range(0.2..2.0)).collect();
        for _ in 0..50 {
            if let Some(j) = solve_on_coordinate(form, &mut x, 0.0, margin) {
                polish(form, &mut x, j, 0.0);
                if accept_zero(form, &x, margin) {
                    return Ok(x);
                }
                break;
            }
            // no coordinate reaches the level set: damped step toward it
            let g = form.gradient_unchecked(&x);
            let r = form.evaluate_f64(&x);
            let gg: f64 = g.iter().map(|v| v * v).sum();
            if gg == 0.0 {
                break;
            }
            let mut step = 1.0;
            loop {
                let trial: Vec<f64> = x.iter().zip(&g).map(|(xi, gi)| xi - step * r * gi / gg).collect();
                if trial.iter().all(|&v| v >= margin) && form.evaluate_f64(&trial).abs() < r.abs() {
                    x = trial;
                    break;
                }
                step *= 0.5;
                if step < 1e-6 {
                    break;
                }
            }
            if step < 1e-6 {
                break;
            }
        }
    }
    Err(Error::Infeasible(format!(
        "no positive real zero of f found from {starts} starts"
    )))
}

fn accept_zero(form: &QuadraticForm, x: &[f64], margin: f64) -> bool {
    x.iter().all(|&v| v >= margin)
        && form.evaluate_f64(x).abs() <= zero_tolerance(form, x)
        && norm2(&form.gradient_unchecked(x)) > DEGENERATE_GRADIENT
}

/// Checks a user-supplied zero.
pub fn validate_zero(form: &QuadraticForm, x0: &[f64]) -> Result<()> {
    if x0.len() != form.dim() {
        return Err(Error::DimensionMismatch {
            expected: form.dim(),
            got: x0.len(),
        });
    }
    if !accept_zero(form, x0, f64::MIN_POSITIVE) {
        return Err(Error::invalid(
            "x0 must be positive with f(x0) = 0 and nonzero gradient",
        ));
    }
    Ok(())
}

/// `𝔅 = x* + [−η, η]^s` with inner and outer comparison boxes around `x₀`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoxSpec {
    pub x0: Vec<f64>,
    pub xstar: Vec<f64>,
    pub eta: f64,
    /// `t₀ = t/X²`.
    pub t0: f64,
    pub gradient: Vec<f64>,
    /// `x₀ ± η/2`.
    pub c1: Vec<(f64, f64)>,
    /// `x* ± η`.
    pub b: Vec<(f64, f64)>,
    /// `x₀ ± 2η`.
    pub c2: Vec<(f64, f64)>,
    /// Set when `x*` is a scaled lattice point rather than a perturbed zero.
    pub anchored: bool,
}

impl BoxSpec {
    pub fn dim(&self) -> usize {
        self.xstar.len()
    }

    pub fn volume(&self) -> f64 {
        (2.0 * self.eta).powi(self.dim() as i32)
    }

    /// Integer box `X𝔅 ∩ ℤ^s` as per-coordinate inclusive bounds.
    pub fn integer_bounds(&self, x: f64) -> (Vec<i64>, Vec<i64>) {
        self.b
            .iter()
            .map(|&(lo, hi)| ((x * lo).ceil() as i64, (x * hi).floor() as i64))
            .unzip()
    }

    /// `C₁ ⊂ 𝔅 ⊂ C₂` coordinatewise.
    pub fn nested(&self) -> bool {
        let inside = |a: &[(f64, f64)], b: &[(f64, f64)]| {
            a.iter().zip(b).all(|(x, y)| y.0 <= x.0 && x.1 <= y.1)
        };
        inside(&self.c1, &self.b) && inside(&self.b, &self.c2)
    }

    fn validate(&self, form: &QuadraticForm) -> Result<()> {
        if !self.nested() {
            return Err(Error::Box(
                "|x* − x0| exceeds η/2; use a larger X or a smaller η".into(),
            ));
        }
        if self.b.iter().any(|&(lo, _)| lo < self.eta) {
            return Err(Error::Box(format!(
                "box leaves the positive orthant margin η = {}; use a smaller η",
                self.eta
            )));
        }
        let resid = (form.evaluate_f64(&self.xstar) - self.t0).abs();
        if resid > 1e-10 * (1.0 + self.t0.abs()) {
            return Err(Error::Box(format!("f(x*) misses t₀ by {resid:e}")));
        }
        if self.gradient.iter().all(|d| d.abs() < DEGENERATE_GRADIENT) {
            return Err(Error::Box("∇f(x*) vanishes".into()));
        }
        Ok(())
    }
}

fn intervals(c: &[f64], r: f64) -> Vec<(f64, f64)> {
    c.iter().map(|&v| (v - r, v + r)).collect()
}

/// Default half-width `0.1 · min x₀`.
pub fn default_eta(x0: &[f64]) -> f64 {
    0.1 * x0.iter().copied().fold(f64::INFINITY, f64::min)
}

/// Box around the point `x*` of `f = t/X²` reached from the zero `x₀` by a move
/// in one coordinate.
pub fn build_box(form: &QuadraticForm, t: f64, x: f64, eta: f64, x0: &[f64]) -> Result<BoxSpec> {
    if x0.len() != form.dim() {
        return Err(Error::DimensionMismatch {
            expected: form.dim(),
            got: x0.len(),
        });
    }
    if !(eta > 0.0) || !(x > 0.0) {
        return Err(Error::invalid("η and X must be positive"));
    }
    let t0 = t / (x * x);
    let mut xstar = x0.to_vec();
    if t0 != 0.0 {
        let j = solve_on_coordinate(form, &mut xstar, t0, f64::MIN_POSITIVE)
            .ok_or_else(|| Error::Box("no one-coordinate move reaches f = t₀".into()))?;
        polish(form, &mut xstar, j, t0);
    }
    let spec = BoxSpec {
        x0: x0.to_vec(),
        t0,
        gradient: form.gradient_unchecked(&xstar),
        c1: intervals(x0, eta / 2.0),
        b: intervals(&xstar, eta),
        c2: intervals(x0, 2.0 * eta),
        xstar,
        eta,
        anchored: false,
    };
    spec.validate(form)?;
    Ok(spec)
}

/// Box centred on `x* = m/X` for an integer point `m` of the weight support;
/// the target is then `t = f(m)`, so `t₀ = f(x*)` holds exactly.
///
/// `m_i` is the support point nearest to `X·c_i` (ties go down). This covers
/// forms with no positive real zero, where the target must be chosen with the
/// box. The comparison boxes are centred on `x*` too.
pub fn anchored_box(
    form: &QuadraticForm,
    model: &WeightModel,
    x: f64,
    anchor: &[f64],
    eta_fraction: f64,
) -> Result<(BoxSpec, Vec<i64>, i64)> {
    let s = form.dim();
    if anchor.len() != s {
        return Err(Error::DimensionMismatch {
            expected: s,
            got: anchor.len(),
        });
    }
    let top = anchor.iter().fold(0.0f64, |a, &b| a.max(b)) * x * 2.0 + 2.0;
    let support = model.table(top as u64).support(top as u64);
    if support.is_empty() {
        return Err(Error::Box("weight support near X·c is empty".into()));
    }
    let m: Vec<i64> = anchor
        .iter()
        .map(|&c| {
            let target = c * x;
            support
                .iter()
                .map(|p| p.0)
                .min_by(|a, b| {
                    let da = (*a as f64 - target).abs();
                    let db = (*b as f64 - target).abs();
                    da.total_cmp(&db).then(a.cmp(b))
                })
                .unwrap()
        })
        .collect();
    let t = form
        .evaluate_i128(&m)
        .and_then(|v| i64::try_from(v).ok())
        .ok_or(Error::Overflow("f(m)"))?;
    let xstar: Vec<f64> = m.iter().map(|&v| v as f64 / x).collect();
    let eta = eta_fraction * xstar.iter().copied().fold(f64::INFINITY, f64::min);
    let spec = BoxSpec {
        x0: xstar.clone(),
        t0: t as f64 / (x * x),
        gradient: form.gradient_unchecked(&xstar),
        c1: intervals(&xstar, eta / 2.0),
        b: intervals(&xstar, eta),
        c2: intervals(&xstar, 2.0 * eta),
        xstar,
        eta,
        anchored: true,
    };
    spec.validate(form)?;
    Ok((spec, m, t))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum DensityMethodTag {
    Slab,
    Coarea,
}

/// `value ± stderr` from a stream of `samples` per-point estimates.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DensityEstimate {
    pub value: f64,
    pub stderr: f64,
    pub method: DensityMethodTag,
    pub samples: u64,
    pub seed: u64,
}

/// Both estimates of `σ∞` from a shared sample stream.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SigmaInfinity {
    pub slab: DensityEstimate,
    pub coarea: DensityEstimate,
    /// Slab widths `(ε, ε/2)` used for the extrapolation.
    pub epsilon: f64,
    /// `|slab − coarea| / √(se₁² + se₂²)`.
    pub z_score: f64,
    /// Fraction of co-area roots with `|∂_j f| < 10⁻⁶`.
    pub degenerate_fraction: f64,
}

impl SigmaInfinity {
    pub fn value(&self) -> f64 {
        self.slab.value
    }

    pub fn stderr(&self) -> f64 {
        self.slab.stderr
    }

    pub fn consistent(&self, k: f64) -> bool {
        self.z_score <= k
    }
}

/// Per-coordinate density of the weighted measure, `(X/Ψ(X)) ψ(X u)`.
struct MeasureDensity {
    smooth: SmoothApproximant,
    x: f64,
    norm: f64,
}

impl MeasureDensity {
    fn new(model: &WeightModel, x: f64) -> Result<Self> {
        let smooth = model.smooth_approx()?;
        let big = smooth.big_psi(x);
        if !(big > 0.0) {
            return Err(Error::invalid("Ψ(X) must be positive"));
        }
        Ok(MeasureDensity {
            smooth,
            x,
            norm: x / big,
        })
    }

    fn weight(&self, u: &[f64]) -> f64 {
        u.iter()
            .map(|&ui| self.norm * self.smooth.psi(self.x * ui))
            .product()
    }
}

#[derive(Default, Clone, Copy)]
struct Moments {
    slab: CompensatedSum,
    slab_sq: CompensatedSum,
    coarea: CompensatedSum,
    coarea_sq: CompensatedSum,
    roots: u64,
    degenerate: u64,
}

impl Moments {
    fn merge(&mut self, o: &Moments) {
        self.slab.merge(&o.slab);
        self.slab_sq.merge(&o.slab_sq);
        self.coarea.merge(&o.coarea);
        self.coarea_sq.merge(&o.coarea_sq);
        self.roots += o.roots;
        self.degenerate += o.degenerate;
    }
}

fn stream_estimate(sum: f64, sum_sq: f64, n: u64, method: DensityMethodTag, seed: u64) -> DensityEstimate {
    let nf = n as f64;
    let mean = sum / nf;
    let var = ((sum_sq / nf - mean * mean) * nf / (nf - 1.0).max(1.0)).max(0.0);
    DensityEstimate {
        value: mean,
        stderr: (var / nf).sqrt(),
        method,
        samples: n,
        seed,
    }
}

/// `σ∞ = ∫_𝔅 δ(f(u) − t₀) dμ(u)` with `dμ = Π (X/Ψ(X)) ψ(X u_i) du_i`.
///
/// Slab: `μ{|f − t₀| ≤ ε}/(2ε)` at `ε` and `ε/2`, combined as
/// `(4V(ε/2) − V(ε))/3`. Co-area: for the coordinate `j` with the largest
/// `|∂_j f(x*)|`, solve for `u_j` on the line through each sample and sum
/// `w/|∂_j f|` over the roots inside the box.
pub fn sigma_infinity(
    form: &QuadraticForm,
    model: &WeightModel,
    bx: &BoxSpec,
    x: f64,
    samples: u64,
    seed: u64,
) -> Result<SigmaInfinity> {
    let s = form.dim();
    if bx.dim() != s {
        return Err(Error::DimensionMismatch {
            expected: s,
            got: bx.dim(),
        });
    }
    if samples < 2 {
        return Err(Error::invalid("need at least 2 samples"));
    }
    let density = MeasureDensity::new(model, x)?;
    let epsilon = 0.1 * bx.eta * norm2(&bx.gradient).max(DEGENERATE_GRADIENT);
    let j = (0..s)
        .max_by(|&a, &b| bx.gradient[a].abs().total_cmp(&bx.gradient[b].abs()))
        .unwrap();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let shift: Vec<f64> = (0..s).map(|_| rng.gen::<f64>()).collect();
    let seq = KroneckerSequence::new(s, shift);
    let vol = bx.volume();
    let line_len = 2.0 * bx.eta;
    let (lo_j, hi_j) = bx.b[j];

    let blocks = par::map_collect(SAMPLE_BLOCKS, |blk| {
        let start = blk as u64 * samples / SAMPLE_BLOCKS as u64;
        let end = (blk as u64 + 1) * samples / SAMPLE_BLOCKS as u64;
        let mut mom = Moments::default();
        let mut unit = vec![0.0; s];
        let mut u = vec![0.0; s];
        for n in start..end {
            seq.point(n, &mut unit);
            for i in 0..s {
                u[i] = bx.b[i].0 + unit[i] * line_len;
            }
            let w = density.weight(&u);
            let r = (form.evaluate_f64(&u) - bx.t0).abs();
            let v1 = (r <= epsilon) as u8 as f64 / (2.0 * epsilon);
            let v2 = (r <= epsilon / 2.0) as u8 as f64 / epsilon;
            let y = vol * w * (4.0 * v2 - v1) / 3.0;
            mom.slab.add(y);
            mom.slab_sq.add(y * y);

            let mut c = 0.0;
            for root in coordinate_roots(form, &u, j, bx.t0) {
                let vj = u[j] + root;
                if !(lo_j..=hi_j).contains(&vj) {
                    continue;
                }
                let mut p = u.clone();
                p[j] = vj;
                let dj = form.gradient_unchecked(&p)[j].abs();
                mom.roots += 1;
                if dj < DEGENERATE_GRADIENT {
                    mom.degenerate += 1;
                    continue;
                }
                c += density.weight(&p) / dj;
            }
            let yc = vol / line_len * c;
            mom.coarea.add(yc);
            mom.coarea_sq.add(yc * yc);
        }
        mom
    });
    let mut total = Moments::default();
    for b in &blocks {
        total.merge(b);
    }
    let degenerate_fraction = if total.roots == 0 {
        0.0
    } else {
        total.degenerate as f64 / total.roots as f64
    };
    if degenerate_fraction > 0.01 {
        return Err(Error::Conditioning(format!(
            "{:.2}% of level-set points have |∇f| < 10⁻⁶",
            100.0 * degenerate_fraction
        )));
    }
    let slab = stream_estimate(total.slab.value(), total.slab_sq.value(), samples, DensityMethodTag::Slab, seed);
    let coarea = stream_estimate(
        total.coarea.value(),
        total.coarea_sq.value(),
        samples,
        DensityMethodTag::Coarea,
        seed,
    );
    let se = (slab.stderr.powi(2) + coarea.stderr.powi(2)).sqrt();
    let diff = (slab.value - coarea.value).abs();
    let z_score = if se > 0.0 {
        diff / se
    } else if diff == 0.0 {
        0.0
    } else {
        f64::INFINITY
    };
    Ok(SigmaInfinity {
        slab,
        coarea,
        epsilon,
        z_score,
        degenerate_fraction,
    })
}

/// `σ∞ · A(X)^s · X^{−2}` with the propagated standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MainTermIntegral {
    pub value: f64,
    pub stderr: f64,
    pub cumulative: f64,
}

pub fn main_term_integral(
    form: &QuadraticForm,
    model: &WeightModel,
    sigma: &SigmaInfinity,
    x: f64,
) -> MainTermIntegral {
    let a = model.cumulative(x);
    main_term_from(sigma.value(), sigma.stderr(), a, form.dim(), x)
}

pub fn main_term_from(sigma: f64, stderr: f64, cumulative: f64, s: usize, x: f64) -> MainTermIntegral {
    let scale = cumulative.powi(s as i32) / (x * x);
    MainTermIntegral {
        value: sigma * scale,
        stderr: stderr * scale,
        cumulative,
    }
}

/// Largest dimension handled by tensor quadrature.
pub const MAX_QUADRATURE_DIM: usize = 3;

const GL_NODES: usize = 16;

/// Composite Gauss–Legendre rule on `[0, X]` with a panel break at the
/// threshold of `ψ`.
fn panel_rule(x: f64, panels: usize, brk: f64) -> (Vec<f64>, Vec<f64>) {
    let (gn, gw) = numeric::gauss_legendre(GL_NODES);
    let mut edges = vec![0.0];
    if brk > 0.0 && brk < x {
        let lower = ((panels as f64 * brk / x).ceil() as usize).max(1);
        for k in 1..=lower {
            edges.push(brk * k as f64 / lower as f64);
        }
        let upper = panels.saturating_sub(lower).max(1);
        for k in 1..=upper {
            edges.push(brk + (x - brk) * k as f64 / upper as f64);
        }
    } else {
        for k in 1..=panels {
            edges.push(x * k as f64 / panels as f64);
        }
    }
    let mut nodes = Vec::with_capacity(edges.len() * GL_NODES);
    let mut weights = Vec::with_capacity(edges.len() * GL_NODES);
    for w in edges.windows(2) {
        let (a, b) = (w[0], w[1]);
        let half = 0.5 * (b - a);
        for (t, wt) in gn.iter().zip(&gw) {
            nodes.push(a + half * (t + 1.0));
            weights.push(half * wt);
        }
    }
    (nodes, weights)
}

/// `I(λ, X) = ∫_{[0,X]^s} Π ψ(u_i) e(λ f(u)) du` for `s ≤ 3`.
///
/// Diagonal forms are integrated one coordinate at a time; otherwise a tensor
/// rule is used. Panels are doubled until two successive values agree to
/// `10⁻¹²` relative.
pub fn singular_integral_i(
    form: &QuadraticForm,
    model: &WeightModel,
    x: f64,
    lambda: f64,
) -> Result<Complex64> {
    let s = form.dim();
    if s > MAX_QUADRATURE_DIM {
        return Err(Error::Budget {
            parameter: "quadrature_dim",
            required: s as u128,
            cap: MAX_QUADRATURE_DIM as u128,
        });
    }
    if !(x > 0.0) {
        return Err(Error::invalid("X must be positive"));
    }
    let smooth = model.smooth_approx()?;
    let diagonal = (0..s).all(|i| (0..s).all(|j| i == j || form.entry(i, j) == 0));
    let oscillations = lambda.abs() * form.max_entry() as f64 * (s * s) as f64 * x * x;
    let mut panels = (4.0 * oscillations).ceil().max(4.0) as usize;
    let max_panels = if diagonal || s == 1 { 1 << 14 } else if s == 2 { 256 } else { 32 };
    let mut prev: Option<Complex64> = None;
    loop {
        let (nodes, weights) = panel_rule(x, panels, smooth.threshold());
        let psi: Vec<f64> = nodes.iter().map(|&u| smooth.psi(u)).collect();
        let value = if diagonal {
            let mut prod = Complex64::new(1.0, 0.0);
            for i in 0..s {
                let c = form.entry(i, i) as f64 * lambda;
                let mut acc = ComplexSum::new();
                for k in 0..nodes.len() {
                    acc.add(numeric::e(c * nodes[k] * nodes[k]) * (weights[k] * psi[k]));
                }
                prod *= acc.value();
            }
            prod
        } else {
            tensor_integral(form, lambda, &nodes, &weights, &psi)
        };
        if let Some(p) = prev {
            if (value - p).norm() <= 1e-12 * value.norm().max(1e-300) || panels >= max_panels {
                return Ok(value);
            }
        }
        prev = Some(value);
        panels *= 2;
    }
}

fn tensor_integral(form: &QuadraticForm, lambda: f64, nodes: &[f64], weights: &[f64], psi: &[f64]) -> Complex64 {
    let s = form.dim();
    let n = nodes.len();
    let rows = par::map_collect(n, |i0| {
        let mut acc = ComplexSum::new();
        let mut idx = vec![0usize; s];
        idx[0] = i0;
        let mut u = vec![0.0; s];
        let inner = n.pow(s as u32 - 1);
        for flat in 0..inner {
            let mut r = flat;
            for k in 1..s {
                idx[k] = r % n;
                r /= n;
            }
            let mut w = 1.0;
            for k in 0..s {
                u[k] = nodes[idx[k]];
                w *= weights[idx[k]] * psi[idx[k]];
            }
            acc.add(numeric::e(lambda * form.evaluate_f64(&u)) * w);
        }
        acc
    });
    let mut total = ComplexSum::new();
    for r in &rows {
        total.merge(r);
    }
    total.value()
}
