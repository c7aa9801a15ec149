//! Small dense GEMM kernels on row-major slices.
//!
//! Every kernel adds `m·k·n` to a per-thread multiply-accumulate counter so
//! analytic FLOP counts can be checked against what actually ran.

use std::cell::Cell;

thread_local! {
    static MACS: Cell<u64> = const { Cell::new(0) };
}

/// Multiply-accumulates executed on this thread since the last reset.
pub fn mac_count() -> u64 {
    MACS.with(|c| c.get())
}

pub fn reset_mac_count() {
    MACS.with(|c| c.set(0));
}

#[inline]
fn count(m: usize, k: usize, n: usize) {
    MACS.with(|c| c.set(c.get() + (m * k * n) as u64));
}

/// Row-major strided view: element `(r, c)` lives at `r·rs + c·cs`.
#[derive(Clone, Copy)]
struct View<'a> {
    data: &'a [f64],
    rs: usize,
    cs: usize,
}

impl View<'_> {
    #[inline]
    fn at(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.rs + c * self.cs]
    }
}

const MR: usize = 4;
const NR: usize = 4;

/// Below this many rows of `c` the packing cost is not repaid.
const PACK_MIN_ROWS: usize = MR;

/// `c[m×n] += A·B` with `A` an `m×k` view and `B` a `k×n` view.
///
/// Both operands are packed into zero-padded panels (`MR` rows of `A`, `NR`
/// columns of `B`, interleaved along `k`) and multiplied by a register-blocked
/// `MR × NR` kernel.
fn gemm_view(m: usize, k: usize, n: usize, a: View, b: View, c: &mut [f64]) {
    count(m, k, n);
    if m == 0 || n == 0 || k == 0 {
        return;
    }
    if m < PACK_MIN_ROWS {
        for i in 0..m {
            let crow = &mut c[i * n..(i + 1) * n];
            for p in 0..k {
                let aip = a.at(i, p);
                if b.cs == 1 {
                    let brow = &b.data[p * b.rs..p * b.rs + n];
                    for (cv, &bv) in crow.iter_mut().zip(brow) {
                        *cv += aip * bv;
                    }
                } else {
                    for (j, cv) in crow.iter_mut().enumerate() {
                        *cv += aip * b.at(p, j);
                    }
                }
            }
        }
        return;
    }
    let mp = m.div_ceil(MR);
    let np = n.div_ceil(NR);
    let mut ap = vec![0.0; mp * k * MR];
    for (ib, panel) in ap.chunks_exact_mut(k * MR).enumerate() {
        for (p, slot) in panel.chunks_exact_mut(MR).enumerate() {
            for (r, v) in slot.iter_mut().enumerate() {
                let i = ib * MR + r;
                if i < m {
                    *v = a.at(i, p);
                }
            }
        }
    }
    let mut bp = vec![0.0; np * k * NR];
    for (jb, panel) in bp.chunks_exact_mut(k * NR).enumerate() {
        for (p, slot) in panel.chunks_exact_mut(NR).enumerate() {
            for (q, v) in slot.iter_mut().enumerate() {
                let j = jb * NR + q;
                if j < n {
                    *v = b.at(p, j);
                }
            }
        }
    }
    for (ib, apanel) in ap.chunks_exact(k * MR).enumerate() {
        for (jb, bpanel) in bp.chunks_exact(k * NR).enumerate() {
            let mut acc = [[0.0f64; NR]; MR];
            for (av, bv) in apanel.chunks_exact(MR).zip(bpanel.chunks_exact(NR)) {
                for r in 0..MR {
                    for q in 0..NR {
                        acc[r][q] += av[r] * bv[q];
                    }
                }
            }
            for (r, row) in acc.iter().enumerate() {
                let i = ib * MR + r;
                if i >= m {
                    break;
                }
                for (q, v) in row.iter().enumerate() {
                    let j = jb * NR + q;
                    if j < n {
                        c[i * n + j] += v;
                    }
                }
            }
        }
    }
}

/// `c[m×n] += a[m×k] · b[k×n]`
pub fn gemm_nn(m: usize, k: usize, n: usize, a: &[f64], b: &[f64], c: &mut [f64]) {
    assert_eq!(a.len(), m * k);
    assert_eq!(b.len(), k * n);
    assert_eq!(c.len(), m * n);
    gemm_view(m, k, n, View { data: a, rs: k, cs: 1 }, View { data: b, rs: n, cs: 1 }, c);
}

/// `c[m×n] += a[m×k] · b[n×k]ᵀ`
pub fn gemm_nt(m: usize, k: usize, n: usize, a: &[f64], b: &[f64], c: &mut [f64]) {
    assert_eq!(a.len(), m * k);
    assert_eq!(b.len(), n * k);
    assert_eq!(c.len(), m * n);
    if m < PACK_MIN_ROWS {
        count(m, k, n);
        for i in 0..m {
            let arow = &a[i * k..(i + 1) * k];
            for j in 0..n {
                c[i * n + j] += dot(arow, &b[j * k..(j + 1) * k]);
            }
        }
        return;
    }
    gemm_view(m, k, n, View { data: a, rs: k, cs: 1 }, View { data: b, rs: 1, cs: k }, c);
}

/// `c[m×n] += a[k×m]ᵀ · b[k×n]`
pub fn gemm_tn(m: usize, k: usize, n: usize, a: &[f64], b: &[f64], c: &mut [f64]) {
    assert_eq!(a.len(), k * m);
    assert_eq!(b.len(), k * n);
    assert_eq!(c.len(), m * n);
    gemm_view(m, k, n, View { data: a, rs: 1, cs: m }, View { data: b, rs: n, cs: 1 }, c);
}

/// Dot product with four independent accumulators.
#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0.0f64; 4];
    let ca = a.chunks_exact(4);
    let cb = b.chunks_exact(4);
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        acc[0] += x[0] * y[0];
        acc[1] += x[1] * y[1];
        acc[2] += x[2] * y[2];
        acc[3] += x[3] * y[3];
    }
    let mut s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for (x, y) in ra.iter().zip(rb) {
        s += x * y;
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    fn naive(m: usize, k: usize, n: usize, a: &[f64], b: &[f64]) -> Vec<f64> {
        let mut c = vec![0.0; m * n];
        for i in 0..m {
            for j in 0..n {
                for p in 0..k {
                    c[i * n + j] += a[i * k + p] * b[p * n + j];
                }
            }
        }
        c
    }

    fn transpose(r: usize, c: usize, a: &[f64]) -> Vec<f64> {
        let mut t = vec![0.0; r * c];
        for i in 0..r {
            for j in 0..c {
                t[j * r + i] = a[i * c + j];
            }
        }
        t
    }

    #[test]
    fn kernels_agree_with_naive_product() {
        for (m, k, n) in [(5, 7, 3), (1, 4, 9), (3, 2, 2), (8, 8, 8), (9, 13, 6), (4, 1, 5)] {
            let a: Vec<f64> = (0..m * k).map(|i| (i as f64 * 0.37).sin()).collect();
            let b: Vec<f64> = (0..k * n).map(|i| (i as f64 * 0.91).cos()).collect();
            let expect = naive(m, k, n, &a, &b);

            let mut c = vec![0.5; m * n];
            gemm_nn(m, k, n, &a, &b, &mut c);
            let mut c2 = vec![0.5; m * n];
            gemm_nt(m, k, n, &a, &transpose(k, n, &b), &mut c2);
            let mut c3 = vec![0.5; m * n];
            gemm_tn(m, k, n, &transpose(m, k, &a), &b, &mut c3);
            for i in 0..m * n {
                assert!((c[i] - 0.5 - expect[i]).abs() < 1e-12, "nn {m}x{k}x{n}");
                assert!((c2[i] - 0.5 - expect[i]).abs() < 1e-12, "nt {m}x{k}x{n}");
                assert!((c3[i] - 0.5 - expect[i]).abs() < 1e-12, "tn {m}x{k}x{n}");
            }
        }
    }

    #[test]
    fn mac_counter_tracks_calls() {
        reset_mac_count();
        let mut c = vec![0.0; 6];
        gemm_nn(2, 4, 3, &[1.0; 8], &[1.0; 12], &mut c);
        assert_eq!(mac_count(), 24);
        assert_eq!(c, vec![4.0; 6]);
    }
}
