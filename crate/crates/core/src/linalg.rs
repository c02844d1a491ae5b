//! Dense complex linear algebra kernels shared by the solvers.
//!
//! Matrices are `nalgebra::DMatrix` (column-major). Tensors are flat vectors in
//! Kronecker order: for mode dimensions `(n_1, ..., n_d)` the multi-index
//! `(j_1, ..., j_d)` lives at `((j_1 * n_2 + j_2) * n_3 + ...) + j_d`, so the
//! first mode varies slowest and `U_1 ⊗ ... ⊗ U_d` acts on the flat vector.
//!
//! The complex Schur form is computed with a Householder Hessenberg reduction
//! followed by single-shift QR sweeps (Wilkinson shifts plus periodic
//! exceptional shifts, which permutation matrices need), and can be reordered
//! with adjacent Givens swaps.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type C64 = Complex64;
pub type CMat = DMatrix<C64>;
pub type RMat = DMatrix<f64>;

pub const ZERO: C64 = C64 { re: 0.0, im: 0.0 };
pub const ONE: C64 = C64 { re: 1.0, im: 0.0 };

#[inline]
pub(crate) fn cabs1(z: C64) -> f64 {
    z.re.abs() + z.im.abs()
}

pub fn frobenius(m: &CMat) -> f64 {
    m.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// `‖AᴴA − AAᴴ‖_F / ‖A‖_F²`, zero for the zero matrix.
pub fn normality_residual(m: &CMat) -> f64 {
    let scale = frobenius(m).powi(2);
    if scale == 0.0 {
        return 0.0;
    }
    let mh = m.adjoint();
    frobenius(&(&mh * m - m * &mh)) / scale
}

pub fn is_hermitian(m: &CMat, tol: f64) -> bool {
    let scale = frobenius(m).max(1.0);
    frobenius(&(m - m.adjoint())) <= tol * scale
}

pub fn real_to_complex(m: &RMat) -> CMat {
    m.map(|x| C64::new(x, 0.0))
}

pub fn identity(n: usize) -> CMat {
    CMat::identity(n, n)
}

/// Kronecker product `a ⊗ b`.
pub fn kron(a: &CMat, b: &CMat) -> CMat {
    let (ar, ac) = a.shape();
    let (br, bc) = b.shape();
    let mut out = CMat::zeros(ar * br, ac * bc);
    for j in 0..ac {
        for i in 0..ar {
            let aij = a[(i, j)];
            if aij == ZERO {
                continue;
            }
            for q in 0..bc {
                for p in 0..br {
                    out[(i * br + p, j * bc + q)] = aij * b[(p, q)];
                }
            }
        }
    }
    out
}

/// Kronecker product of a list of matrices, first factor slowest.
pub fn kron_all<'a>(mats: impl IntoIterator<Item = &'a CMat>) -> CMat {
    let mut acc = CMat::from_element(1, 1, ONE);
    for m in mats {
        acc = kron(&acc, m);
    }
    acc
}

/// Applies `m` along one mode of a flat tensor.
pub fn mode_multiply(x: &[C64], dims: &[usize], mode: usize, m: &CMat) -> Vec<C64> {
    let n = dims[mode];
    assert_eq!(m.ncols(), n, "mode matrix does not match mode dimension");
    let rows = m.nrows();
    let left: usize = dims[..mode].iter().product();
    let right: usize = dims[mode + 1..].iter().product();
    assert_eq!(x.len(), left * n * right, "tensor length does not match dims");
    let mut out = vec![ZERO; left * rows * right];
    for l in 0..left {
        let src = &x[l * n * right..(l + 1) * n * right];
        let dst = &mut out[l * rows * right..(l + 1) * rows * right];
        for b in 0..n {
            let xb = &src[b * right..(b + 1) * right];
            for a in 0..rows {
                let mab = m[(a, b)];
                if mab == ZERO {
                    continue;
                }
                let da = &mut dst[a * right..(a + 1) * right];
                for (d, s) in da.iter_mut().zip(xb) {
                    *d += mab * s;
                }
            }
        }
    }
    out
}

/// Multilinear multiplication `(M_1, ..., M_d) · x`, one mode at a time.
pub fn multilinear_apply(x: &[C64], dims: &[usize], mats: &[&CMat]) -> Vec<C64> {
    assert_eq!(dims.len(), mats.len());
    let mut cur = x.to_vec();
    let mut cur_dims = dims.to_vec();
    for (mode, m) in mats.iter().enumerate() {
        cur = mode_multiply(&cur, &cur_dims, mode, m);
        cur_dims[mode] = m.nrows();
    }
    cur
}

/// Orthonormal basis of the column space of `m` keeping singular values
/// above `rel_tol · σ_max` (and above `abs_floor`).
pub fn orthonormal_range(m: &CMat, rel_tol: f64, abs_floor: f64) -> CMat {
    let (rows, cols) = m.shape();
    if rows == 0 || cols == 0 {
        return CMat::zeros(rows, 0);
    }
    let svd = m.clone().svd(true, false);
    let u = svd.u.expect("left singular vectors requested");
    let smax = svd.singular_values.iter().cloned().fold(0.0, f64::max);
    let cut = (rel_tol * smax).max(abs_floor);
    let keep: Vec<usize> = (0..svd.singular_values.len())
        .filter(|&k| svd.singular_values[k] > cut)
        .collect();
    CMat::from_fn(rows, keep.len(), |i, j| u[(i, keep[j])])
}

/// Real analogue of [`orthonormal_range`].
pub fn orthonormal_range_real(m: &RMat, rel_tol: f64, abs_floor: f64) -> RMat {
    let (rows, cols) = m.shape();
    if rows == 0 || cols == 0 {
        return RMat::zeros(rows, 0);
    }
    let svd = m.clone().svd(true, false);
    let u = svd.u.expect("left singular vectors requested");
    let smax = svd.singular_values.iter().cloned().fold(0.0, f64::max);
    let cut = (rel_tol * smax).max(abs_floor);
    let keep: Vec<usize> = (0..svd.singular_values.len())
        .filter(|&k| svd.singular_values[k] > cut)
        .collect();
    RMat::from_fn(rows, keep.len(), |i, j| u[(i, keep[j])])
}

/// Thin QR orthonormalization of the columns of `x` (assumed full rank).
pub fn orthonormalize(x: &CMat) -> CMat {
    let (rows, cols) = x.shape();
    if cols == 0 {
        return x.clone();
    }
    let qr = x.clone().qr();
    let q = qr.q();
    q.columns(0, cols.min(rows)).into_owned()
}

pub fn singular_values(m: &CMat) -> Vec<f64> {
    if m.nrows() == 0 || m.ncols() == 0 {
        return Vec::new();
    }
    m.clone().svd(false, false).singular_values.iter().cloned().collect()
}

pub fn spectral_norm(m: &CMat) -> f64 {
    singular_values(m).into_iter().fold(0.0, f64::max)
}

/// Givens rotation `[c s; -conj(s) c]` mapping `(f, g)` to `(r, 0)`, with `c` real.
pub(crate) fn lartg(f: C64, g: C64) -> (f64, C64, C64) {
    if g == ZERO {
        return (1.0, ZERO, f);
    }
    if f == ZERO {
        let ga = g.norm();
        return (0.0, g.conj() / ga, C64::new(ga, 0.0));
    }
    let fa = f.norm();
    let ga = g.norm();
    let norm = fa.hypot(ga);
    let phase = f / fa;
    (fa / norm, phase * g.conj() / norm, phase * norm)
}

/// Unitary Hessenberg reduction `A = Q H Qᴴ`.
pub fn hessenberg(a: &CMat) -> (CMat, CMat) {
    let n = a.nrows();
    assert_eq!(n, a.ncols(), "hessenberg needs a square matrix");
    let mut h = a.clone();
    if n < 3 {
        return (h, CMat::identity(n, n));
    }
    let mut y = vec![ZERO; n];
    // Reflector k is I - 2 w wᴴ acting on indices k+1..n.
    let mut reflectors: Vec<(usize, Vec<C64>)> = Vec::with_capacity(n - 2);
    for k in 0..n - 2 {
        let xnorm = (k + 1..n).map(|i| h[(i, k)].norm_sqr()).sum::<f64>().sqrt();
        let tail = (k + 2..n).map(|i| h[(i, k)].norm_sqr()).sum::<f64>();
        if xnorm == 0.0 || tail == 0.0 {
            continue;
        }
        let x0 = h[(k + 1, k)];
        let phase = if x0.norm() == 0.0 { ONE } else { x0 / x0.norm() };
        let alpha = -phase * xnorm;
        let mut wv: Vec<C64> = (k + 1..n).map(|i| h[(i, k)]).collect();
        wv[0] -= alpha;
        let wn = wv.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        for z in wv.iter_mut() {
            *z /= wn;
        }
        let data = h.as_mut_slice();
        apply_reflector_left(data, n, k + 1, &wv, k..n);
        // Right: H[:, k+1..] -= 2 (H w) wᴴ
        y.iter_mut().for_each(|z| *z = ZERO);
        for (t, j) in (k + 1..n).enumerate() {
            let wj = wv[t];
            let col = &data[j * n..(j + 1) * n];
            for (yi, ci) in y.iter_mut().zip(col) {
                *yi += ci * wj;
            }
        }
        for (t, j) in (k + 1..n).enumerate() {
            let s = wv[t].conj() * 2.0;
            let col = &mut data[j * n..(j + 1) * n];
            for (ci, yi) in col.iter_mut().zip(y.iter()) {
                *ci -= yi * s;
            }
        }
        h[(k + 1, k)] = alpha;
        for i in k + 2..n {
            h[(i, k)] = ZERO;
        }
        reflectors.push((k + 1, wv));
    }
    // Q = P_1 P_2 ... accumulated backwards so each step only touches the
    // trailing block that is not yet the identity.
    let mut q = CMat::identity(n, n);
    let qd = q.as_mut_slice();
    for (start, wv) in reflectors.iter().rev() {
        apply_reflector_left(qd, n, *start, wv, *start..n);
    }
    (h, q)
}

/// `M[start.., cols] -= 2 w (wᴴ M[start.., cols])` on a column-major slice.
fn apply_reflector_left(data: &mut [C64], n: usize, start: usize, w: &[C64], cols: std::ops::Range<usize>) {
    for j in cols {
        let col = &mut data[j * n + start..(j + 1) * n];
        let mut dot = ZERO;
        for (wi, hi) in w.iter().zip(col.iter()) {
            dot += wi.conj() * hi;
        }
        if dot == ZERO {
            continue;
        }
        let s = dot * 2.0;
        for (wi, hi) in w.iter().zip(col.iter_mut()) {
            *hi -= wi * s;
        }
    }
}

/// Complex Schur decomposition `A = Z T Zᴴ` with `T` upper triangular.
#[derive(Debug, Clone)]
pub struct Schur {
    pub z: CMat,
    pub t: CMat,
}

impl Schur {
    pub fn eigenvalues(&self) -> Vec<C64> {
        (0..self.t.nrows()).map(|k| self.t[(k, k)]).collect()
    }
}

#[inline]
fn rotate_rows(data: &mut [C64], n: usize, k: usize, cols: std::ops::Range<usize>, c: f64, s: C64) {
    let sc = s.conj();
    for j in cols {
        let a = data[j * n + k];
        let b = data[j * n + k + 1];
        data[j * n + k] = a * c + s * b;
        data[j * n + k + 1] = b * c - sc * a;
    }
}

/// Applies the adjoint of `[c s; -conj(s) c]` to columns `k, k+1` over `rows`.
#[inline]
fn rotate_cols(data: &mut [C64], n: usize, k: usize, rows: std::ops::Range<usize>, c: f64, s: C64) {
    let sc = s.conj();
    let (left, right) = data.split_at_mut((k + 1) * n);
    let ck = &mut left[k * n..];
    let ck1 = &mut right[..n];
    for i in rows {
        let a = ck[i];
        let b = ck1[i];
        ck[i] = a * c + sc * b;
        ck1[i] = b * c - s * a;
    }
}

pub fn schur(a: &CMat) -> Result<Schur> {
    let n = a.nrows();
    if n != a.ncols() {
        return Err(Error::DimensionMismatch("schur needs a square matrix".into()));
    }
    if n == 0 {
        return Ok(Schur { z: CMat::zeros(0, 0), t: CMat::zeros(0, 0) });
    }
    if a.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::invalid("matrix has non-finite entries"));
    }
    let (mut h, mut z) = hessenberg(a);
    if n == 1 {
        return Ok(Schur { z, t: h });
    }
    let ulp = f64::EPSILON;
    let smlnum = f64::MIN_POSITIVE * (n as f64 / ulp);
    let itmax = 30 * n.max(10);
    const KEXSH: usize = 10;
    const DAT1: f64 = 0.75;

    let hd = h.as_mut_slice();
    let zd = z.as_mut_slice();
    let at = |i: usize, j: usize| i + j * n;

    let mut rots: Vec<(usize, f64, C64)> = Vec::with_capacity(n);
    let mut i = n as isize - 1;
    let mut kdefl = 0usize;
    while i >= 0 {
        let iu = i as usize;
        let mut l = 0usize;
        let mut converged = false;
        for _its in 0..=itmax {
            // Search for a negligible subdiagonal entry.
            let mut k = iu;
            while k > l {
                let sub = hd[at(k, k - 1)];
                if cabs1(sub) <= smlnum {
                    break;
                }
                let mut tst = cabs1(hd[at(k - 1, k - 1)]) + cabs1(hd[at(k, k)]);
                if tst == 0.0 {
                    if k >= 2 {
                        tst += cabs1(hd[at(k - 1, k - 2)]);
                    }
                    if k + 1 < n {
                        tst += cabs1(hd[at(k + 1, k)]);
                    }
                }
                // Plain backward-stable criterion. The Ahues-Tisseur refinement
                // stalls on tight clusters of equal eigenvalues.
                if cabs1(sub) <= ulp * tst {
                    break;
                }
                k -= 1;
            }
            l = k;
            if l > 0 {
                hd[at(l, l - 1)] = ZERO;
            }
            if l >= iu {
                converged = true;
                break;
            }
            kdefl += 1;

            let shift = if kdefl.is_multiple_of(2 * KEXSH) {
                C64::new(DAT1 * cabs1(hd[at(iu, iu - 1)]), 0.0) + hd[at(iu, iu)]
            } else if kdefl.is_multiple_of(KEXSH) {
                C64::new(DAT1 * cabs1(hd[at(l + 1, l)]), 0.0) + hd[at(l, l)]
            } else {
                let mut t = hd[at(iu, iu)];
                let u = hd[at(iu - 1, iu)].sqrt() * hd[at(iu, iu - 1)].sqrt();
                let mut s = cabs1(u);
                if s != 0.0 {
                    let x = (hd[at(iu - 1, iu - 1)] - t) * 0.5;
                    let sx = cabs1(x);
                    s = s.max(cabs1(x));
                    let xs = x / s;
                    let us = u / s;
                    let mut y = (xs * xs + us * us).sqrt() * s;
                    if sx > 0.0 {
                        let xn = x / sx;
                        if xn.re * y.re + xn.im * y.im < 0.0 {
                            y = -y;
                        }
                    }
                    t -= u * (u / (x + y));
                }
                t
            };

            // Single-shift QR sweep over the active block l..=iu. Columns to
            // the right of the block only see the row rotations, which are
            // replayed column by column afterwards.
            rots.clear();
            for k in l..iu {
                let (f, g) = if k == l {
                    (hd[at(l, l)] - shift, hd[at(l + 1, l)])
                } else {
                    (hd[at(k, k - 1)], hd[at(k + 1, k - 1)])
                };
                let (c, s, r) = lartg(f, g);
                if k > l {
                    hd[at(k, k - 1)] = r;
                    hd[at(k + 1, k - 1)] = ZERO;
                }
                rotate_rows(hd, n, k, k..iu + 1, c, s);
                rotate_cols(hd, n, k, 0..(k + 3).min(iu + 1), c, s);
                rotate_cols(zd, n, k, 0..n, c, s);
                rots.push((k, c, s));
            }
            for j in iu + 1..n {
                let col = &mut hd[j * n..(j + 1) * n];
                for &(k, c, s) in &rots {
                    let a = col[k];
                    let b = col[k + 1];
                    col[k] = a * c + s * b;
                    col[k + 1] = b * c - s.conj() * a;
                }
            }
        }
        if !converged {
            return Err(Error::SchurConvergence { iterations: itmax });
        }
        kdefl = 0;
        i = l as isize - 1;
    }
    // Clear the strictly lower triangle.
    for j in 0..n {
        for r in j + 1..n {
            hd[at(r, j)] = ZERO;
        }
    }
    Ok(Schur { z, t: h })
}

/// Swaps the adjacent diagonal entries `k` and `k+1` of the Schur form.
fn swap_adjacent(schur: &mut Schur, k: usize) {
    let n = schur.t.nrows();
    let t11 = schur.t[(k, k)];
    let t22 = schur.t[(k + 1, k + 1)];
    let (c, s, _) = lartg(schur.t[(k, k + 1)], t22 - t11);
    let td = schur.t.as_mut_slice();
    if k + 2 < n {
        rotate_rows(td, n, k, k + 2..n, c, s);
    }
    rotate_cols(td, n, k, 0..k, c, s);
    td[k + k * n] = t22;
    td[(k + 1) + (k + 1) * n] = t11;
    rotate_cols(schur.z.as_mut_slice(), n, k, 0..n, c, s);
}

/// Moves the selected eigenvalues to the leading diagonal block while keeping
/// `A = Z T Zᴴ`. Returns the number of selected eigenvalues.
pub fn reorder_schur(schur: &mut Schur, select: &[bool]) -> usize {
    let n = schur.t.nrows();
    assert_eq!(select.len(), n);
    let mut next = 0usize;
    for k in 0..n {
        if !select[k] {
            continue;
        }
        let mut pos = k;
        while pos > next {
            swap_adjacent(schur, pos - 1);
            pos -= 1;
        }
        next += 1;
    }
    next
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_complex(n: usize, m: usize, seed: u64) -> CMat {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        CMat::from_fn(n, m, |_, _| C64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5))
    }

    fn cyclic_shift(n: usize) -> CMat {
        CMat::from_fn(n, n, |i, j| if j == (i + 1) % n { ONE } else { ZERO })
    }

    fn check_schur(a: &CMat, s: &Schur, tol: f64) {
        let n = a.nrows();
        let recon = &s.z * &s.t * s.z.adjoint();
        assert!(frobenius(&(recon - a)) <= tol * frobenius(a).max(1.0));
        assert!(frobenius(&(s.z.adjoint() * &s.z - CMat::identity(n, n))) <= tol);
        for j in 0..n {
            for i in j + 1..n {
                assert_eq!(s.t[(i, j)], ZERO);
            }
        }
    }

    #[test]
    fn hessenberg_reconstructs() {
        let a = random_complex(9, 9, 1);
        let (h, q) = hessenberg(&a);
        for j in 0..9 {
            for i in j + 2..9 {
                assert_eq!(h[(i, j)], ZERO);
            }
        }
        let recon = &q * &h * q.adjoint();
        assert!(frobenius(&(recon - &a)) < 1e-12);
    }

    #[test]
    fn schur_of_random_matrix() {
        for (n, seed) in [(1, 3), (2, 4), (5, 5), (17, 6), (40, 7)] {
            let a = random_complex(n, n, seed);
            let s = schur(&a).unwrap();
            check_schur(&a, &s, 1e-11);
        }
    }

    #[test]
    fn schur_of_cyclic_shift_converges() {
        for n in 2..=16 {
            let a = cyclic_shift(n);
            let s = schur(&a).unwrap();
            check_schur(&a, &s, 1e-11);
            for lam in s.eigenvalues() {
                assert!((lam.norm() - 1.0).abs() < 1e-10);
                assert!((lam.powu(n as u32) - ONE).norm() < 1e-9);
            }
        }
    }

    #[test]
    fn reorder_moves_selected_eigenvalues_first() {
        let a = random_complex(12, 12, 11);
        let mut s = schur(&a).unwrap();
        let before = s.eigenvalues();
        let select: Vec<bool> = before.iter().map(|l| l.re > 0.0).collect();
        let r = reorder_schur(&mut s, &select);
        check_schur(&a, &s, 1e-10);
        let after = s.eigenvalues();
        let mut want: Vec<C64> = before.iter().zip(&select).filter(|(_, &k)| k).map(|(l, _)| *l).collect();
        assert_eq!(r, want.len());
        for (k, lam) in want.drain(..).enumerate() {
            assert!((after[k] - lam).norm() < 1e-9);
        }
        // Leading r Schur vectors span an invariant subspace.
        let q = s.z.columns(0, r).into_owned();
        let aq = &a * &q;
        let proj = &q * (q.adjoint() * &aq);
        assert!(frobenius(&(aq - proj)) < 1e-9);
    }

    #[test]
    fn mode_multiply_matches_kronecker() {
        let dims = [2usize, 3, 2];
        let mats: Vec<CMat> = dims.iter().enumerate().map(|(k, &n)| random_complex(n, n, 20 + k as u64)).collect();
        let x: Vec<C64> = random_complex(12, 1, 30).iter().cloned().collect();
        let refs: Vec<&CMat> = mats.iter().collect();
        let got = multilinear_apply(&x, &dims, &refs);
        let dense = kron_all(mats.iter());
        let want = &dense * nalgebra::DVector::from_vec(x);
        for (g, w) in got.iter().zip(want.iter()) {
            assert!((g - w).norm() < 1e-12);
        }
    }

    #[test]
    fn lartg_annihilates() {
        let f = C64::new(0.3, -1.2);
        let g = C64::new(-0.7, 0.4);
        let (c, s, r) = lartg(f, g);
        assert!((f * c + s * g - r).norm() < 1e-14);
        assert!((g * c - s.conj() * f).norm() < 1e-14);
    }
}
