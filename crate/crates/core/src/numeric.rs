//! Floating-point building blocks: compensated sums, phases, quadrature nodes
//! and low-discrepancy points.

use std::f64::consts::PI;

use num_complex::Complex64;

/// Neumaier's variant of Kahan summation.
#[derive(Debug, Clone, Copy, Default)]
pub struct CompensatedSum {
    sum: f64,
    comp: f64,
}

impl CompensatedSum {
    pub fn new() -> Self {
        Self::default()
    }

    #[inline]
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn merge(&mut self, other: &CompensatedSum) {
        self.add(other.sum);
        self.add(other.comp);
    }

    #[inline]
    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

/// Compensated accumulator for complex values (independent real and imaginary parts).
#[derive(Debug, Clone, Copy, Default)]
pub struct ComplexSum {
    re: CompensatedSum,
    im: CompensatedSum,
}

impl ComplexSum {
    pub fn new() -> Self {
        Self::default()
    }

    #[inline]
    pub fn add(&mut self, z: Complex64) {
        self.re.add(z.re);
        self.im.add(z.im);
    }

    pub fn merge(&mut self, other: &ComplexSum) {
        self.re.merge(&other.re);
        self.im.merge(&other.im);
    }

    pub fn value(&self) -> Complex64 {
        Complex64::new(self.re.value(), self.im.value())
    }
}

/// `e(x) = exp(2πix)` for an already reduced `x ∈ [0, 1)`.
#[inline]
fn cis_turns(x: f64) -> Complex64 {
    let (s, c) = (2.0 * PI * x).sin_cos();
    Complex64::new(c, s)
}

/// `e(α·v)` for integer `v`, reducing `α·v` modulo 1 with an error-free product
/// so that large `v` keeps full phase accuracy.
#[inline]
pub fn phase(alpha: f64, v: i64) -> Complex64 {
    let vf = v as f64;
    let hi = alpha * vf;
    let lo = alpha.mul_add(vf, -hi);
    let frac = (hi - hi.floor()) + lo;
    cis_turns(frac - frac.floor())
}

/// Scientific notation with 17 significant digits; non-finite
/// values become `NaN`, `inf` or `-inf`.
pub fn format_f64(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else if v.is_nan() {
        "NaN".into()
    } else if v > 0.0 {
        "inf".into()
    } else {
        "-inf".into()
    }
}

/// `e(x)` for real `x`, reduced modulo 1 first.
#[inline]
pub fn e(x: f64) -> Complex64 {
    cis_turns(x - x.floor())
}

/// Table of `q`-th roots of unity `e(j/q)`, `j = 0..q`.
#[derive(Debug, Clone)]
pub struct RootTable {
    q: u64,
    roots: Vec<Complex64>,
}

impl RootTable {
    pub fn new(q: u64) -> Self {
        let roots = (0..q).map(|j| Self::root(j, q)).collect();
        RootTable { q, roots }
    }

    fn root(j: u64, q: u64) -> Complex64 {
        let (c, s) = octant_cos_sin(8 * j as u128 % (8 * q as u128), q as u128);
        Complex64::new(c, s)
    }

    #[inline]
    pub fn get(&self, residue: u64) -> Complex64 {
        self.roots[(residue % self.q) as usize]
    }

    pub fn modulus(&self) -> u64 {
        self.q
    }
}

/// cos/sin of `2π·r/(8q)` for `0 ≤ r < 8q`, folded into the first octant so
/// that symmetric roots come out exactly symmetric.
fn octant_cos_sin(r: u128, q: u128) -> (f64, f64) {
    if r > 4 * q {
        let (c, s) = octant_cos_sin(8 * q - r, q);
        (c, -s)
    } else if r > 2 * q {
        let (c, s) = octant_cos_sin(4 * q - r, q);
        (-c, s)
    } else if r > q {
        let (c, s) = octant_cos_sin(2 * q - r, q);
        (s, c)
    } else {
        let (s, c) = (2.0 * PI * r as f64 / (8.0 * q as f64)).sin_cos();
        (c, s)
    }
}

/// Gauss–Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let kf = k as f64;
                let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
                p0 = p1;
                p1 = p2;
            }
            let pn = if n == 0 { 1.0 } else { p1 };
            let pn1 = if n == 1 { 1.0 } else { p0 };
            dp = n as f64 * (x * pn - pn1) / (x * x - 1.0);
            let dx = pn / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

/// Additive-recurrence (Kronecker) low-discrepancy sequence in `[0,1)^d` with a
/// random Cranley–Patterson shift.
#[derive(Debug, Clone)]
pub struct KroneckerSequence {
    alpha: Vec<f64>,
    shift: Vec<f64>,
}

impl KroneckerSequence {
    pub fn new(dim: usize, shift: Vec<f64>) -> Self {
        assert_eq!(shift.len(), dim);
        // generalized golden ratio: unique positive root of x^{d+1} = x + 1
        let mut g = 2.0f64;
        for _ in 0..64 {
            g = (1.0 + g).powf(1.0 / (dim as f64 + 1.0));
        }
        let alpha = (1..=dim).map(|j| (1.0 / g.powi(j as i32)).fract()).collect();
        KroneckerSequence { alpha, shift }
    }

    /// Writes the `n`-th point into `out`.
    #[inline]
    pub fn point(&self, n: u64, out: &mut [f64]) {
        for ((o, a), s) in out.iter_mut().zip(&self.alpha).zip(&self.shift) {
            // n·a modulo 1 with an error-free product so large n stay accurate
            let nf = n as f64;
            let hi = a * nf;
            let lo = a.mul_add(nf, -hi);
            let x = (hi - hi.floor()) + lo + s;
            *o = x - x.floor();
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn compensated_sum_recovers_small_terms() {
        let mut s = CompensatedSum::new();
        s.add(1e16);
        for _ in 0..1000 {
            s.add(1.0);
        }
        s.add(-1e16);
        assert_eq!(s.value(), 1000.0);
    }

    #[test]
    fn roots_of_unity() {
        for q in [1u64, 2, 3, 4, 5, 7, 12, 60, 64, 97] {
            let t = RootTable::new(q);
            let mut sum = ComplexSum::new();
            for j in 0..q {
                let z = t.get(j);
                let direct = e(j as f64 / q as f64);
                assert!((z - direct).norm() < 1e-15, "q={q} j={j}");
                assert!((z.norm() - 1.0).abs() < 1e-15);
                // conjugate symmetry
                let w = t.get((q - j) % q);
                assert!((z - w.conj()).norm() < 1e-15);
                sum.add(z);
            }
            if q > 1 {
                assert!(sum.value().norm() < 1e-13);
            }
        }
    }

    #[test]
    fn phase_reduces_large_arguments() {
        let z = phase(0.5, 3);
        assert!((z - Complex64::new(-1.0, 0.0)).norm() < 1e-15);
        let z = phase(0.25, 1_000_000_001);
        assert!((z - Complex64::new(0.0, 1.0)).norm() < 1e-12);
    }

    #[test]
    fn gauss_legendre_integrates_polynomials() {
        let (x, w) = gauss_legendre(8);
        let int: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(14)).sum();
        assert!((int - 2.0 / 15.0).abs() < 1e-14);
        let total: f64 = w.iter().sum();
        assert!((total - 2.0).abs() < 1e-14);
    }

    #[test]
    fn kronecker_points_in_unit_cube() {
        let seq = KroneckerSequence::new(3, vec![0.3, 0.1, 0.7]);
        let mut p = [0.0; 3];
        let mut mean = [0.0; 3];
        for n in 0..10_000 {
            seq.point(n, &mut p);
            for k in 0..3 {
                assert!((0.0..1.0).contains(&p[k]));
                mean[k] += p[k] / 10_000.0;
            }
        }
        for m in mean {
            assert!((m - 0.5).abs() < 1e-3);
        }
    }
}
