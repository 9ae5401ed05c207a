//! Integral quadratic forms `f(x) = xᵀFx`, their `(y, z)` block structure and
//! the mixed-term rank condition.
//!
//! Variable indices in this module are 0-based.

use num_bigint::BigInt;
use num_traits::Zero;
use serde::{Deserialize, Serialize};

use crate::arith;
use crate::error::{Error, Result};

/// Largest dimension for which the exhaustive partition search runs.
pub const MAX_PARTITION_SEARCH_DIM: usize = 24;

/// Serialized form description: `{"s": int, "F": [[int]], "t": int}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FormSpec {
    pub s: usize,
    #[serde(rename = "F")]
    pub f: Vec<Vec<i64>>,
    pub t: i64,
}

/// A non-singular integral quadratic form together with the target `t`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct QuadraticForm {
    s: usize,
    matrix: Vec<Vec<i64>>,
    t: i64,
    #[serde(skip)]
    det: BigInt,
}

impl QuadraticForm {
    /// Validates shape, symmetry and non-singularity.
    pub fn new(matrix: Vec<Vec<i64>>, t: i64) -> Result<Self> {
        let s = matrix.len();
        if s == 0 {
            return Err(Error::invalid("form must have dimension s ≥ 1"));
        }
        for row in &matrix {
            if row.len() != s {
                return Err(Error::DimensionMismatch {
                    expected: s,
                    got: row.len(),
                });
            }
        }
        for i in 0..s {
            for j in i + 1..s {
                if matrix[i][j] != matrix[j][i] {
                    return Err(Error::Asymmetric {
                        row: i,
                        col: j,
                        upper: matrix[i][j],
                        lower: matrix[j][i],
                    });
                }
            }
        }
        let det = arith::bareiss_determinant(&matrix);
        if det.is_zero() {
            return Err(Error::Singular);
        }
        Ok(QuadraticForm { s, matrix, t, det })
    }

    pub fn from_spec(spec: FormSpec) -> Result<Self> {
        if spec.f.len() != spec.s {
            return Err(Error::DimensionMismatch {
                expected: spec.s,
                got: spec.f.len(),
            });
        }
        Self::new(spec.f, spec.t)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let spec: FormSpec =
            serde_json::from_str(text).map_err(|e| Error::invalid(format!("form JSON: {e}")))?;
        Self::from_spec(spec)
    }

    pub fn to_spec(&self) -> FormSpec {
        FormSpec {
            s: self.s,
            f: self.matrix.clone(),
            t: self.t,
        }
    }

    /// Diagonal form `Σ c_i x_i²`.
    pub fn diagonal(coeffs: &[i64], t: i64) -> Result<Self> {
        let s = coeffs.len();
        let mut m = vec![vec![0; s]; s];
        for (i, &c) in coeffs.iter().enumerate() {
            m[i][i] = c;
        }
        Self::new(m, t)
    }

    /// `2 Σ_{i<n} x_i x_{i+n}` in `2n` variables (the split form with `F₂ = I`).
    pub fn hyperbolic(n: usize, t: i64) -> Result<Self> {
        let s = 2 * n;
        let mut m = vec![vec![0; s]; s];
        for i in 0..n {
            m[i][i + n] = 1;
            m[i + n][i] = 1;
        }
        Self::new(m, t)
    }

    pub fn dim(&self) -> usize {
        self.s
    }

    pub fn target(&self) -> i64 {
        self.t
    }

    pub fn matrix(&self) -> &[Vec<i64>] {
        &self.matrix
    }

    pub fn entry(&self, i: usize, j: usize) -> i64 {
        self.matrix[i][j]
    }

    pub fn determinant(&self) -> &BigInt {
        &self.det
    }

    /// Same matrix, different target.
    pub fn with_target(&self, t: i64) -> Self {
        QuadraticForm {
            t,
            ..self.clone()
        }
    }

    /// `max |F_ij|`.
    pub fn max_entry(&self) -> i64 {
        self.matrix
            .iter()
            .flat_map(|r| r.iter().map(|x| x.abs()))
            .max()
            .unwrap_or(0)
    }

    fn check_len(&self, len: usize) -> Result<()> {
        if len != self.s {
            Err(Error::DimensionMismatch {
                expected: self.s,
                got: len,
            })
        } else {
            Ok(())
        }
    }

    /// `xᵀFx` exactly.
    pub fn evaluate(&self, x: &[i64]) -> Result<BigInt> {
        self.check_len(x.len())?;
        let mut acc = BigInt::zero();
        for i in 0..self.s {
            let mut row = BigInt::zero();
            for j in 0..self.s {
                row += BigInt::from(self.matrix[i][j]) * x[j];
            }
            acc += row * x[i];
        }
        Ok(acc)
    }

    /// `xᵀFx` in `i128`, or `None` on overflow.
    pub fn evaluate_i128(&self, x: &[i64]) -> Option<i128> {
        debug_assert_eq!(x.len(), self.s);
        let mut acc: i128 = 0;
        for i in 0..self.s {
            let mut row: i128 = 0;
            for j in 0..self.s {
                row = row.checked_add((self.matrix[i][j] as i128).checked_mul(x[j] as i128)?)?;
            }
            acc = acc.checked_add(row.checked_mul(x[i] as i128)?)?;
        }
        Some(acc)
    }

    pub fn evaluate_f64(&self, x: &[f64]) -> f64 {
        let mut acc = 0.0;
        for i in 0..self.s {
            let mut row = 0.0;
            for j in 0..self.s {
                row += self.matrix[i][j] as f64 * x[j];
            }
            acc += row * x[i];
        }
        acc
    }

    /// `∇f(x) = 2Fx`.
    pub fn gradient(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_len(x.len())?;
        Ok(self.gradient_unchecked(x))
    }

    pub(crate) fn gradient_unchecked(&self, x: &[f64]) -> Vec<f64> {
        self.matrix
            .iter()
            .map(|row| 2.0 * row.iter().zip(x).map(|(&a, &b)| a as f64 * b).sum::<f64>())
            .collect()
    }

    fn check_partition(&self, partition_y: &[usize]) -> Result<(Vec<usize>, Vec<usize>)> {
        let n = self.s / 2;
        if partition_y.len() != n {
            return Err(Error::invalid(format!(
                "partition must have ⌊s/2⌋ = {n} indices, got {}",
                partition_y.len()
            )));
        }
        let mut seen = vec![false; self.s];
        for &i in partition_y {
            if i >= self.s || seen[i] {
                return Err(Error::invalid(format!(
                    "partition index {i} is out of range or repeated"
                )));
            }
            seen[i] = true;
        }
        let z: Vec<usize> = (0..self.s).filter(|&i| !seen[i]).collect();
        Ok((partition_y.to_vec(), z))
    }

    /// Splits `F` along `Y` (size `⌊s/2⌋`) and its complement and computes the
    /// rank of the off-diagonal block exactly.
    pub fn block_rank(&self, partition_y: &[usize]) -> Result<BlockDecomposition> {
        let (y, z) = self.check_partition(partition_y)?;
        let sub = |rows: &[usize], cols: &[usize]| -> Vec<Vec<i64>> {
            rows.iter()
                .map(|&i| cols.iter().map(|&j| self.matrix[i][j]).collect())
                .collect()
        };
        let f2 = sub(&z, &y);
        let rank = arith::bareiss_rank(&f2);
        Ok(BlockDecomposition {
            f1: sub(&y, &y),
            f3: sub(&y, &z),
            f4: sub(&z, &z),
            f2,
            partition_y: y,
            partition_z: z,
            rank,
        })
    }

    /// Exhaustive search over all `⌊s/2⌋`-subsets for the largest off-diagonal
    /// rank; ties go to the lexicographically smallest subset.
    pub fn check_l1(&self) -> Result<L1Verdict> {
        if self.s < 2 {
            return Err(Error::invalid("the mixed-term condition needs s ≥ 2"));
        }
        if self.s > MAX_PARTITION_SEARCH_DIM {
            return Err(Error::Budget {
                parameter: "partition_search_dim",
                required: self.s as u128,
                cap: MAX_PARTITION_SEARCH_DIM as u128,
            });
        }
        let n = self.s / 2;
        let bound = n.min(self.s - n);
        let mut best: Option<BlockDecomposition> = None;
        for subset in Combinations::new(self.s, n) {
            let dec = self.block_rank(&subset)?;
            if best.as_ref().is_none_or(|b| dec.rank > b.rank) {
                let full = dec.rank == bound;
                best = Some(dec);
                if full {
                    break;
                }
            }
        }
        let best = best.expect("at least one partition");
        Ok(L1Verdict {
            satisfied: best.rank >= 5,
            rank: best.rank,
            best,
        })
    }

    pub fn yz_decompose(&self, partition_y: &[usize]) -> Result<YzDecomposition> {
        let (y, z) = self.check_partition(partition_y)?;
        let r = y
            .iter()
            .map(|&i| y.iter().map(|&j| self.matrix[i][j]).collect())
            .collect();
        let q = z
            .iter()
            .map(|&i| z.iter().map(|&j| self.matrix[i][j]).collect())
            .collect();
        let g = y
            .iter()
            .map(|&i| z.iter().map(|&j| 2 * self.matrix[i][j]).collect())
            .collect();
        let h = z
            .iter()
            .map(|&j| y.iter().map(|&i| 2 * self.matrix[j][i]).collect())
            .collect();
        Ok(YzDecomposition {
            partition_y: y,
            partition_z: z,
            r,
            g,
            h,
            q,
        })
    }

    /// Connected components of the graph joining `i` and `j` when `F_ij ≠ 0`.
    ///
    /// The form is the sum of its restrictions to these blocks, which lets
    /// exponential sums and value histograms factor exactly.
    pub fn components(&self) -> Vec<Vec<usize>> {
        let mut comp = vec![usize::MAX; self.s];
        let mut out = Vec::new();
        for start in 0..self.s {
            if comp[start] != usize::MAX {
                continue;
            }
            let id = out.len();
            let mut stack = vec![start];
            let mut members = Vec::new();
            comp[start] = id;
            while let Some(i) = stack.pop() {
                members.push(i);
                for j in 0..self.s {
                    if j != i && self.matrix[i][j] != 0 && comp[j] == usize::MAX {
                        comp[j] = id;
                        stack.push(j);
                    }
                }
            }
            members.sort_unstable();
            out.push(members);
        }
        out
    }

    /// Restriction of `F` to a subset of variables.
    pub(crate) fn block_matrix(&self, indices: &[usize]) -> Vec<Vec<i64>> {
        indices
            .iter()
            .map(|&i| indices.iter().map(|&j| self.matrix[i][j]).collect())
            .collect()
    }
}

/// `F` split as `[[F₁, ·], [·, F₄]]` along `Y` and its complement `Z`.
///
/// `f2` is `F[Z][Y]` (shape `(s−n)×n`) and `f3 = F[Y][Z]` is its transpose.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct BlockDecomposition {
    pub partition_y: Vec<usize>,
    pub partition_z: Vec<usize>,
    pub f1: Vec<Vec<i64>>,
    pub f2: Vec<Vec<i64>>,
    pub f3: Vec<Vec<i64>>,
    pub f4: Vec<Vec<i64>>,
    pub rank: usize,
}

impl BlockDecomposition {
    /// Rebuilds the full `s×s` matrix from the four blocks.
    pub fn reassemble(&self) -> Vec<Vec<i64>> {
        let s = self.partition_y.len() + self.partition_z.len();
        let mut m = vec![vec![0; s]; s];
        for (a, &i) in self.partition_y.iter().enumerate() {
            for (b, &j) in self.partition_y.iter().enumerate() {
                m[i][j] = self.f1[a][b];
            }
            for (b, &j) in self.partition_z.iter().enumerate() {
                m[i][j] = self.f3[a][b];
            }
        }
        for (a, &i) in self.partition_z.iter().enumerate() {
            for (b, &j) in self.partition_y.iter().enumerate() {
                m[i][j] = self.f2[a][b];
            }
            for (b, &j) in self.partition_z.iter().enumerate() {
                m[i][j] = self.f4[a][b];
            }
        }
        m
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct L1Verdict {
    pub satisfied: bool,
    pub rank: usize,
    pub best: BlockDecomposition,
}

/// `f(y, z) = r(y) + Σ_j y_j g_j(z) + q(z)`.
///
/// `r` and `q` are Gram matrices, `g[j]` holds the coefficients of `g_j` over
/// `z`, and `h[k]` the coefficients of `h_k` over `y` (so `Σ_k z_k h_k(y)` is
/// the same mixed part).
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct YzDecomposition {
    pub partition_y: Vec<usize>,
    pub partition_z: Vec<usize>,
    pub r: Vec<Vec<i64>>,
    pub g: Vec<Vec<i64>>,
    pub h: Vec<Vec<i64>>,
    pub q: Vec<Vec<i64>>,
}

impl YzDecomposition {
    /// Evaluates `r(y) + Σ y_j g_j(z) + q(z)` at a full vector `x`.
    pub fn evaluate(&self, x: &[i64]) -> BigInt {
        let y: Vec<i64> = self.partition_y.iter().map(|&i| x[i]).collect();
        let z: Vec<i64> = self.partition_z.iter().map(|&i| x[i]).collect();
        let gram = |m: &[Vec<i64>], v: &[i64]| -> BigInt {
            let mut acc = BigInt::zero();
            for (i, row) in m.iter().enumerate() {
                for (j, &c) in row.iter().enumerate() {
                    acc += BigInt::from(c) * v[i] * v[j];
                }
            }
            acc
        };
        let mut acc = gram(&self.r, &y) + gram(&self.q, &z);
        for (j, coeffs) in self.g.iter().enumerate() {
            let gz: BigInt = coeffs
                .iter()
                .zip(&z)
                .map(|(&c, &zk)| BigInt::from(c) * zk)
                .sum();
            acc += gz * y[j];
        }
        acc
    }

    /// Checks the identity against `form` on `0`, the unit vectors, their
    /// doubles and the all-ones vector, exactly.
    pub fn verify(&self, form: &QuadraticForm) -> bool {
        let s = form.dim();
        let mut points = vec![vec![0i64; s], vec![1i64; s]];
        for i in 0..s {
            let mut e = vec![0i64; s];
            e[i] = 1;
            points.push(e.clone());
            e[i] = 2;
            points.push(e);
        }
        points
            .iter()
            .all(|p| form.evaluate(p).map(|v| v == self.evaluate(p)).unwrap_or(false))
    }
}

/// Lexicographic `k`-subsets of `0..n`.
struct Combinations {
    n: usize,
    current: Option<Vec<usize>>,
}

impl Combinations {
    fn new(n: usize, k: usize) -> Self {
        Combinations {
            n,
            current: (k <= n).then(|| (0..k).collect()),
        }
    }
}

impl Iterator for Combinations {
    type Item = Vec<usize>;

    fn next(&mut self) -> Option<Vec<usize>> {
        let cur = self.current.take()?;
        let out = cur.clone();
        let k = cur.len();
        let mut next = cur;
        let mut i = k;
        while i > 0 {
            i -= 1;
            if next[i] < self.n - k + i {
                next[i] += 1;
                for j in i + 1..k {
                    next[j] = next[j - 1] + 1;
                }
                self.current = Some(next);
                break;
            }
        }
        Some(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn swap_form() -> QuadraticForm {
        QuadraticForm::new(vec![vec![0, 1], vec![1, 0]], 0).unwrap()
    }

    #[test]
    fn evaluate_examples() {
        assert_eq!(swap_form().evaluate(&[3, 5]).unwrap(), BigInt::from(30));
        let id = QuadraticForm::diagonal(&[1, 1], 0).unwrap();
        assert_eq!(id.evaluate(&[3, 4]).unwrap(), BigInt::from(25));
        assert_eq!(id.evaluate(&[0, 0]).unwrap(), BigInt::zero());
        assert!(matches!(
            id.evaluate(&[1, 2, 3]),
            Err(Error::DimensionMismatch { expected: 2, got: 3 })
        ));
    }

    #[test]
    fn gradient_examples() {
        assert_eq!(swap_form().gradient(&[3.0, 5.0]).unwrap(), vec![10.0, 6.0]);
        let id = QuadraticForm::diagonal(&[1, 1], 0).unwrap();
        assert_eq!(id.gradient(&[1.0, 1.0]).unwrap(), vec![2.0, 2.0]);
        assert_eq!(id.gradient(&[0.0, 0.0]).unwrap(), vec![0.0, 0.0]);
        assert!(id.gradient(&[1.0]).is_err());
    }

    #[test]
    fn rejects_asymmetric_and_singular() {
        let err = QuadraticForm::new(vec![vec![1, 2], vec![3, 1]], 0).unwrap_err();
        assert_eq!(
            err,
            Error::Asymmetric {
                row: 0,
                col: 1,
                upper: 2,
                lower: 3
            }
        );
        assert_eq!(
            QuadraticForm::new(vec![vec![1, 1], vec![1, 1]], 0).unwrap_err(),
            Error::Singular
        );
    }

    #[test]
    fn json_loader() {
        let f = QuadraticForm::from_json(r#"{"s": 2, "F": [[0, 1], [1, 0]], "t": 7}"#).unwrap();
        assert_eq!(f.target(), 7);
        assert!(QuadraticForm::from_json(r#"{"s": 2, "F": [[0, 1], [2, 0]], "t": 7}"#).is_err());
        assert!(
            QuadraticForm::from_json(r#"{"s": 2, "F": [[0, 1], [1, 0]], "t": 7, "x": 1}"#)
                .is_err()
        );
    }

    #[test]
    fn block_rank_examples() {
        let f = QuadraticForm::hyperbolic(5, 0).unwrap();
        let dec = f.block_rank(&[0, 1, 2, 3, 4]).unwrap();
        assert_eq!(dec.rank, 5);
        for (i, row) in dec.f2.iter().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                assert_eq!(v, (i == j) as i64);
            }
        }
        assert_eq!(dec.reassemble(), f.matrix());

        let d = QuadraticForm::diagonal(&[1, 2, 3, 4], 0).unwrap();
        assert_eq!(d.block_rank(&[1, 3]).unwrap().rank, 0);
        assert_eq!(swap_form().block_rank(&[0]).unwrap().rank, 1);
        assert!(swap_form().block_rank(&[0, 1]).is_err());
    }

    #[test]
    fn l1_examples() {
        let v = QuadraticForm::hyperbolic(5, 0).unwrap().check_l1().unwrap();
        assert!(v.satisfied);
        assert_eq!(v.rank, 5);
        assert_eq!(v.best.partition_y, vec![0, 1, 2, 3, 4]);

        let d = QuadraticForm::diagonal(&[1; 10], 0).unwrap().check_l1().unwrap();
        assert!(!d.satisfied);
        assert_eq!(d.rank, 0);
        assert_eq!(d.best.partition_y, vec![0, 1, 2, 3, 4]);

        let m = vec![
            vec![1, 1, 1, 1],
            vec![1, 2, 0, 1],
            vec![1, 0, 3, 1],
            vec![1, 1, 1, 5],
        ];
        let f = QuadraticForm::new(m, 0).unwrap();
        let v = f.check_l1().unwrap();
        assert!(!v.satisfied);
        assert!(v.rank <= 2);
    }

    #[test]
    fn l1_refuses_large_dimension() {
        let f = QuadraticForm::diagonal(&[1; 25], 0).unwrap();
        assert!(matches!(f.check_l1(), Err(Error::Budget { .. })));
    }

    #[test]
    fn yz_examples() {
        let f = QuadraticForm::new(vec![vec![0, 1], vec![1, 0]], 0).unwrap();
        let d = f.yz_decompose(&[0]).unwrap();
        assert_eq!(d.r, vec![vec![0]]);
        assert_eq!(d.g, vec![vec![2]]);
        assert_eq!(d.q, vec![vec![0]]);
        assert!(d.verify(&f));

        let h = QuadraticForm::hyperbolic(5, 0).unwrap();
        let d = h.yz_decompose(&[0, 1, 2, 3, 4]).unwrap();
        for j in 0..5 {
            for k in 0..5 {
                assert_eq!(d.g[j][k], if j == k { 2 } else { 0 });
            }
        }
        assert!(d.r.iter().flatten().all(|&x| x == 0));
        assert!(d.q.iter().flatten().all(|&x| x == 0));
        assert!(d.verify(&h));

        let diag = QuadraticForm::diagonal(&[1, -2, 3, 5], 0).unwrap();
        let d = diag.yz_decompose(&[1, 2]).unwrap();
        assert!(d.g.iter().flatten().all(|&x| x == 0));
        assert!(d.verify(&diag));
    }

    #[test]
    fn components_split_independent_blocks() {
        let h = QuadraticForm::hyperbolic(5, 0).unwrap();
        assert_eq!(
            h.components(),
            vec![vec![0, 5], vec![1, 6], vec![2, 7], vec![3, 8], vec![4, 9]]
        );
        let d = QuadraticForm::diagonal(&[1, 1], 0).unwrap();
        assert_eq!(d.components(), vec![vec![0], vec![1]]);
    }

    #[test]
    fn combinations_count() {
        assert_eq!(Combinations::new(10, 5).count(), 252);
        assert_eq!(Combinations::new(4, 0).count(), 1);
    }
}
