//! Histogram enumerators shared by the exponential-sum, density and counting
//! code. Each walks a product set one coordinate at a time, carrying the
//! partial value of the form and the linear coefficients it induces on the
//! remaining coordinates, so a leaf costs O(1).
//!
//! Work is split over the leading coordinate into a fixed number of chunks,
//! independent of the thread count, and chunk results are merged in order.

use std::collections::HashMap;

use crate::par;

const CHUNKS: usize = 64;
/// Largest value range stored as a dense array.
const DENSE_RANGE: u128 = 1 << 24;

/// `W(v) = Σ_{h ∈ [0,q)^d, f(h) ≡ v (q)} Π w[h_i]` with exact integer weights.
///
/// `weights[h]` is the numerator of the per-coordinate weight of residue `h`;
/// residues with zero weight are skipped. The caller guarantees that the total
/// mass `(Σ w)^d` fits in `u128`.
pub(crate) fn residue_histogram(block: &[Vec<i64>], q: u64, weights: &[u128]) -> Vec<u128> {
    let d = block.len();
    let qi = q as i128;
    let fm: Vec<Vec<u64>> = block
        .iter()
        .map(|r| r.iter().map(|&v| (v as i128).rem_euclid(qi) as u64).collect())
        .collect();
    let support: Vec<u64> = (0..q).filter(|&h| weights[h as usize] != 0).collect();
    if d == 0 {
        let mut out = vec![0u128; q as usize];
        out[0] = 1;
        return out;
    }
    let chunks = support.len().clamp(1, CHUNKS);
    let partials = par::map_collect(chunks, |c| {
        let mut hist = vec![0u128; q as usize];
        let lo = c * support.len() / chunks;
        let hi = (c + 1) * support.len() / chunks;
        let mut lin = vec![0u64; d];
        for &h0 in &support[lo..hi] {
            let w0 = weights[h0 as usize];
            let base = mulmod(fm[0][0], mulmod(h0, h0, q), q);
            for j in 1..d {
                lin[j] = mulmod(2 * fm[0][j] % q, h0, q);
            }
            residue_walk(&fm, q, &support, weights, 1, base, w0, &mut lin, &mut hist);
        }
        hist
    });
    let mut out = vec![0u128; q as usize];
    for p in partials {
        for (o, v) in out.iter_mut().zip(p) {
            *o += v;
        }
    }
    out
}

#[inline]
fn mulmod(a: u64, b: u64, q: u64) -> u64 {
    ((a as u128 * b as u128) % q as u128) as u64
}

#[allow(clippy::too_many_arguments)]
fn residue_walk(
    fm: &[Vec<u64>],
    q: u64,
    support: &[u64],
    weights: &[u128],
    i: usize,
    value: u64,
    weight: u128,
    lin: &mut [u64],
    hist: &mut [u128],
) {
    let d = fm.len();
    if i == d {
        hist[value as usize] += weight;
        return;
    }
    let diag = fm[i][i];
    if i + 1 == d {
        let l = lin[i];
        for &h in support {
            let v = (value as u128 + diag as u128 * ((h as u128 * h as u128) % q as u128)
                + l as u128 * h as u128)
                % q as u128;
            hist[v as usize] += weight * weights[h as usize];
        }
        return;
    }
    let saved: Vec<u64> = lin[i + 1..].to_vec();
    for &h in support {
        let v = (value as u128
            + diag as u128 * ((h as u128 * h as u128) % q as u128)
            + lin[i] as u128 * h as u128)
            % q as u128;
        for j in i + 1..d {
            lin[j] = ((saved[j - i - 1] as u128 + 2 * fm[i][j] as u128 * h as u128) % q as u128)
                as u64;
        }
        residue_walk(
            fm,
            q,
            support,
            weights,
            i + 1,
            v as u64,
            weight * weights[h as usize],
            lin,
            hist,
        );
    }
    lin[i + 1..].copy_from_slice(&saved);
}

/// Weighted distribution of the integer values of a form over a product of
/// per-coordinate supports: sorted pairs `(f(x), Σ Π a_{x_i})`.
#[derive(Debug, Clone, Default, PartialEq)]
pub(crate) struct ValueHistogram {
    pub entries: Vec<(i128, f64)>,
}

impl ValueHistogram {
    #[cfg(test)]
    pub fn weight_of(&self, v: i128) -> f64 {
        self.entries
            .binary_search_by_key(&v, |e| e.0)
            .map(|i| self.entries[i].1)
            .unwrap_or(0.0)
    }
}

/// Bounds of `f` over the box `Π [min support_i, max support_i]`.
fn value_bounds(block: &[Vec<i64>], supports: &[Vec<(i64, f64)>]) -> (i128, i128) {
    let d = block.len();
    let range: Vec<(i128, i128)> = supports
        .iter()
        .map(|s| {
            let lo = s.iter().map(|p| p.0).min().unwrap_or(0) as i128;
            let hi = s.iter().map(|p| p.0).max().unwrap_or(0) as i128;
            (lo, hi)
        })
        .collect();
    let (mut lo, mut hi) = (0i128, 0i128);
    for i in 0..d {
        for j in 0..d {
            let c = block[i][j] as i128;
            let products = [
                range[i].0 * range[j].0,
                range[i].0 * range[j].1,
                range[i].1 * range[j].0,
                range[i].1 * range[j].1,
            ];
            let (pmin, pmax) = (
                *products.iter().min().unwrap(),
                *products.iter().max().unwrap(),
            );
            if c >= 0 {
                lo += c * pmin;
                hi += c * pmax;
            } else {
                lo += c * pmax;
                hi += c * pmin;
            }
        }
    }
    (lo, hi)
}

pub(crate) fn value_histogram(block: &[Vec<i64>], supports: &[Vec<(i64, f64)>]) -> ValueHistogram {
    let d = block.len();
    if d == 0 {
        return ValueHistogram {
            entries: vec![(0, 1.0)],
        };
    }
    if supports.iter().any(|s| s.is_empty()) {
        return ValueHistogram::default();
    }
    let (lo, hi) = value_bounds(block, supports);
    let dense = ((hi - lo) as u128) < DENSE_RANGE;
    let lead = &supports[0];
    let chunks = lead.len().clamp(1, CHUNKS);
    let partials: Vec<Vec<(i128, f64)>> = par::map_collect(chunks, |c| {
        let start = c * lead.len() / chunks;
        let end = (c + 1) * lead.len() / chunks;
        let mut sink = if dense {
            Sink::Dense {
                offset: lo,
                data: vec![0.0; (hi - lo + 1) as usize],
            }
        } else {
            Sink::Sparse(HashMap::new())
        };
        let mut lin = vec![0i128; d];
        for &(x0, w0) in &lead[start..end] {
            let x0 = x0 as i128;
            let base = block[0][0] as i128 * x0 * x0;
            for j in 1..d {
                lin[j] = 2 * block[0][j] as i128 * x0;
            }
            value_walk(block, supports, 1, base, w0, &mut lin, &mut sink);
        }
        sink.into_sorted()
    });
    ValueHistogram {
        entries: merge_sorted(partials),
    }
}

enum Sink {
    Dense { offset: i128, data: Vec<f64> },
    Sparse(HashMap<i128, f64>),
}

impl Sink {
    #[inline]
    fn add(&mut self, v: i128, w: f64) {
        match self {
            Sink::Dense { offset, data } => data[(v - *offset) as usize] += w,
            Sink::Sparse(m) => *m.entry(v).or_insert(0.0) += w,
        }
    }

    fn into_sorted(self) -> Vec<(i128, f64)> {
        match self {
            Sink::Dense { offset, data } => data
                .into_iter()
                .enumerate()
                .filter(|(_, w)| *w != 0.0)
                .map(|(i, w)| (i as i128 + offset, w))
                .collect(),
            Sink::Sparse(m) => {
                let mut v: Vec<_> = m.into_iter().filter(|(_, w)| *w != 0.0).collect();
                v.sort_unstable_by_key(|e| e.0);
                v
            }
        }
    }
}

fn value_walk(
    block: &[Vec<i64>],
    supports: &[Vec<(i64, f64)>],
    i: usize,
    value: i128,
    weight: f64,
    lin: &mut [i128],
    sink: &mut Sink,
) {
    let d = block.len();
    if i == d {
        sink.add(value, weight);
        return;
    }
    let diag = block[i][i] as i128;
    if i + 1 == d {
        let l = lin[i];
        for &(x, w) in &supports[i] {
            let x = x as i128;
            sink.add(value + diag * x * x + l * x, weight * w);
        }
        return;
    }
    let saved: Vec<i128> = lin[i + 1..].to_vec();
    for &(x, w) in &supports[i] {
        let xi = x as i128;
        let v = value + diag * xi * xi + lin[i] * xi;
        for j in i + 1..d {
            lin[j] = saved[j - i - 1] + 2 * block[i][j] as i128 * xi;
        }
        value_walk(block, supports, i + 1, v, weight * w, lin, sink);
    }
    lin[i + 1..].copy_from_slice(&saved);
}

/// Merges sorted runs in order, adding weights of equal values.
fn merge_sorted(parts: Vec<Vec<(i128, f64)>>) -> Vec<(i128, f64)> {
    let mut all: Vec<(i128, usize, f64)> = parts
        .into_iter()
        .enumerate()
        .flat_map(|(c, p)| p.into_iter().map(move |(v, w)| (v, c, w)))
        .collect();
    // stable order on (value, chunk) keeps the summation order fixed
    all.sort_unstable_by_key(|e| (e.0, e.1));
    let mut out: Vec<(i128, f64)> = Vec::new();
    for (v, _, w) in all {
        match out.last_mut() {
            Some(last) if last.0 == v => last.1 += w,
            _ => out.push((v, w)),
        }
    }
    out
}

/// Convolution of independent value histograms: the distribution of the sum.
#[cfg(test)]
pub(crate) fn convolve(a: &ValueHistogram, b: &ValueHistogram) -> ValueHistogram {
    let mut m: HashMap<i128, f64> = HashMap::new();
    for &(va, wa) in &a.entries {
        for &(vb, wb) in &b.entries {
            *m.entry(va + vb).or_insert(0.0) += wa * wb;
        }
    }
    let mut entries: Vec<_> = m.into_iter().collect();
    entries.sort_unstable_by_key(|e| e.0);
    ValueHistogram { entries }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn naive_residues(block: &[Vec<i64>], q: u64, w: &[u128]) -> Vec<u128> {
        let d = block.len();
        let mut out = vec![0u128; q as usize];
        let total = (q as usize).pow(d as u32);
        for idx in 0..total {
            let mut x = vec![0i64; d];
            let mut r = idx;
            for xi in x.iter_mut() {
                *xi = (r % q as usize) as i64;
                r /= q as usize;
            }
            let mut v: i128 = 0;
            let mut wt: u128 = 1;
            for i in 0..d {
                wt *= w[x[i] as usize];
                for j in 0..d {
                    v += block[i][j] as i128 * x[i] as i128 * x[j] as i128;
                }
            }
            out[v.rem_euclid(q as i128) as usize] += wt;
        }
        out
    }

    #[test]
    fn residue_histogram_matches_naive() {
        let blocks = [
            vec![vec![1, 0], vec![0, 1]],
            vec![vec![1, 0, 0], vec![0, 1, 0], vec![0, 0, -2]],
            vec![vec![0, 0, 1, 0], vec![0, 0, 0, 1], vec![1, 0, 0, 0], vec![0, 1, 0, 0]],
            vec![vec![3, -1], vec![-1, 5]],
        ];
        for b in &blocks {
            for q in [1u64, 2, 3, 4, 6, 7, 9] {
                let w: Vec<u128> = (0..q).map(|h| (h % 3 + 1) as u128 * (h != 2) as u128).collect();
                assert_eq!(residue_histogram(b, q, &w), naive_residues(b, q, &w), "q={q}");
            }
        }
    }

    #[test]
    fn value_histogram_matches_naive() {
        let b = vec![vec![1, 2, 0], vec![2, -1, 1], vec![0, 1, 3]];
        let s: Vec<Vec<(i64, f64)>> = vec![
            vec![(2, 1.0), (3, 1.0), (5, 0.5)],
            vec![(0, 1.0), (7, 2.0)],
            vec![(1, 1.0), (4, 1.0), (6, 3.0)],
        ];
        let h = value_histogram(&b, &s);
        let mut naive: HashMap<i128, f64> = HashMap::new();
        for &(a, wa) in &s[0] {
            for &(c, wc) in &s[1] {
                for &(e, we) in &s[2] {
                    let x = [a as i128, c as i128, e as i128];
                    let mut v = 0;
                    for i in 0..3 {
                        for j in 0..3 {
                            v += b[i][j] as i128 * x[i] * x[j];
                        }
                    }
                    *naive.entry(v).or_insert(0.0) += wa * wc * we;
                }
            }
        }
        assert_eq!(h.entries.len(), naive.len());
        for (v, w) in &h.entries {
            assert_eq!(naive[v], *w);
        }
    }

    #[test]
    fn convolution_of_squares() {
        let s = vec![vec![(0, 1.0), (1, 1.0), (2, 1.0)]];
        let h = value_histogram(&[vec![1]], &s);
        let c = convolve(&h, &h);
        assert_eq!(c.weight_of(5), 2.0);
        assert_eq!(c.weight_of(8), 1.0);
        assert_eq!(c.weight_of(3), 0.0);
    }
}
