//! Dense linear least squares.
//!
//! `[A | b]` is reduced to a `(Z + 1) x (Z + 1)` triangular factor by Householder QR
//! over row blocks, so the tall matrix is read once and never copied. The small
//! factor is then handled either by one-sided Jacobi SVD (minimum-norm, truncated)
//! or by back substitution.

use std::any::TypeId;
use std::collections::HashMap;
use std::hash::{DefaultHasher, Hasher};
use std::time::Instant;

use serde::Serialize;

use crate::assemble::LinearSystem;
use crate::error::{invalid_arg, Error, Result};
use crate::scalar::Real;

const BLOCK_ROWS: usize = 256;
const PANEL: usize = 32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum SolveMethod {
    #[default]
    Svd,
    /// Back substitution on the triangular factor; falls back to SVD when rank deficient.
    Qr,
}

impl std::str::FromStr for SolveMethod {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "svd" => Ok(SolveMethod::Svd),
            "qr" => Ok(SolveMethod::Qr),
            _ => Err(invalid_arg(format!("unknown solver '{s}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveOptions {
    /// Singular values below `rank_tol * sigma_max` are discarded.
    pub rank_tol: f64,
    pub method: SolveMethod,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self { rank_tol: 1e-12, method: SolveMethod::Svd }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveReport<T> {
    pub coeffs: Vec<T>,
    pub residual_norm: T,
    pub rank: usize,
    /// `sigma_max / sigma_min` over the retained singular values (or diagonal of `R` on the QR path).
    pub condition_estimate: T,
    /// Wall time in seconds.
    pub wall_time: f64,
    /// Method that produced `coeffs`.
    pub method: SolveMethod,
}

fn check_system<T: Real>(sys: &LinearSystem<T>) -> Result<()> {
    if sys.n_rows == 0 || sys.n_cols == 0 {
        return Err(invalid_arg("least-squares system must have at least one row and column"));
    }
    if sys.a.len() != sys.n_rows * sys.n_cols || sys.b.len() != sys.n_rows {
        return Err(invalid_arg("system storage does not match its shape"));
    }
    if sys.a.iter().chain(&sys.b).any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("system has non-finite entries".into()));
    }
    Ok(())
}

#[inline]
fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    // independent partial sums keep the loop vectorizable and the result order fixed
    let mut acc = [T::zero(); 8];
    let mut ca = a.chunks_exact(8);
    let mut cb = b.chunks_exact(8);
    for (x, y) in (&mut ca).zip(&mut cb) {
        for l in 0..8 {
            acc[l] += x[l] * y[l];
        }
    }
    let mut tail = T::zero();
    for (x, y) in ca.remainder().iter().zip(cb.remainder()) {
        tail += *x * *y;
    }
    ((acc[0] + acc[4]) + (acc[1] + acc[5])) + ((acc[2] + acc[6]) + (acc[3] + acc[7])) + tail
}

#[inline]
fn axpy<T: Real>(alpha: T, x: &[T], y: &mut [T]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * *xi;
    }
}

/// First occurrence of each distinct row of `[A | b]` with the square root of its
/// multiplicity. Merging exact repeats this way leaves the normal equations unchanged.
fn distinct_rows<T: Real>(sys: &LinearSystem<T>) -> Vec<(usize, T)> {
    let mut seen: HashMap<u64, Vec<usize>> = HashMap::new();
    let mut out: Vec<(usize, usize)> = Vec::new();
    for i in 0..sys.n_rows {
        let row = sys.row(i);
        let mut h = DefaultHasher::new();
        for v in row.iter().chain(std::iter::once(&sys.b[i])) {
            h.write_u64(v.as_f64().to_bits());
        }
        let slot = seen.entry(h.finish()).or_default();
        let found = slot.iter().copied().find(|&u| {
            let j = out[u].0;
            sys.b[j] == sys.b[i] && sys.row(j) == row
        });
        match found {
            Some(u) => out[u].1 += 1,
            None => {
                slot.push(out.len());
                out.push((i, 1));
            }
        }
    }
    out.into_iter().map(|(i, c)| (i, T::from_usize(c).unwrap().sqrt())).collect()
}

/// Upper-triangular `R` (row-major, `(Z + 1)^2`) with `Q^T [A | b] = [R; 0]`.
///
/// The last column of `R` holds `Q^T b`; its final entry is the least-squares
/// residual norm of the full-rank problem up to sign.
pub fn triangular_factor<T: Real>(sys: &LinearSystem<T>) -> Result<Vec<T>> {
    check_system(sys)?;
    let z = sys.n_cols;
    let n = z + 1;
    let rows = distinct_rows(sys);
    let mut r = vec![T::zero(); n * n];
    let mut block = vec![T::zero(); BLOCK_ROWS * n];
    for chunk in rows.chunks(BLOCK_ROWS) {
        let nb = chunk.len();
        // column-major copy of the block rows of [A | b]
        for (i, &(src, weight)) in chunk.iter().enumerate() {
            for (k, v) in sys.row(src).iter().enumerate() {
                block[k * nb + i] = *v * weight;
            }
            block[z * nb + i] = sys.b[src] * weight;
        }
        absorb_block(&mut r, &mut block[..n * nb], n, nb);
    }
    Ok(r)
}

/// Folds a column-major `nb x n` block into `R`: QR of `[R; B]` with reflectors
/// `e_j + x_j`, applied panel by panel in compact WY form.
fn absorb_block<T: Real>(r: &mut [T], block: &mut [T], n: usize, nb: usize) {
    let mut tmat = [T::zero(); PANEL * PANEL];
    let mut taus = [T::zero(); PANEL];
    let mut w = [T::zero(); PANEL];
    let mut top_buf = vec![T::zero(); PANEL * n];
    let mut top2_buf = vec![T::zero(); PANEL * n];
    let mut j0 = 0;
    while j0 < n {
        let kb = PANEL.min(n - j0);
        let jend = j0 + kb;
        for j in j0..jend {
            let (head, tail) = block.split_at_mut((j + 1) * nb);
            let x = &mut head[j * nb..];
            let xnorm2 = dot(x, x);
            taus[j - j0] = T::zero();
            if xnorm2 == T::zero() {
                continue;
            }
            let alpha = r[j * n + j];
            let norm = (alpha * alpha + xnorm2).sqrt();
            let beta = if alpha >= T::zero() { -norm } else { norm };
            let scale = T::one() / (alpha - beta);
            x.iter_mut().for_each(|v| *v *= scale);
            let tau = (beta - alpha) / beta;
            taus[j - j0] = tau;
            r[j * n + j] = beta;
            for (k, col) in tail[..(jend - j - 1) * nb].chunks_exact_mut(nb).enumerate() {
                let kk = j + 1 + k;
                let s = (r[j * n + kk] + dot(x, col)) * tau;
                r[j * n + kk] -= s;
                axpy(-s, x, col);
            }
        }
        if jend == n {
            break;
        }
        let (panel, trailing) = block.split_at_mut(jend * nb);
        let xs = &panel[j0 * nb..];
        // upper-triangular T with H_0 ... H_{kb-1} = I - U T U^T
        for p in 0..kb {
            let xp = &xs[p * nb..(p + 1) * nb];
            for q in 0..p {
                w[q] = dot(&xs[q * nb..(q + 1) * nb], xp);
            }
            for i in 0..p {
                let mut acc = T::zero();
                for q in i..p {
                    acc += tmat[i * PANEL + q] * w[q];
                }
                tmat[i * PANEL + p] = -taus[p] * acc;
            }
            tmat[p * PANEL + p] = taus[p];
        }
        // trailing columns: C -= U T^T U^T C, with U = [e; X]
        let m = n - jend;
        let s = isize::try_from(m).unwrap();
        let snb = isize::try_from(nb).unwrap();
        let top = &mut top_buf[..kb * m];
        let top2 = &mut top2_buf[..kb * m];
        for p in 0..kb {
            top[p * m..(p + 1) * m].copy_from_slice(&r[(j0 + p) * n + jend..(j0 + p + 1) * n]);
        }
        gemm(kb, nb, m, T::one(), (xs, snb, 1), (trailing, 1, snb), T::one(), (top, s, 1));
        gemm(kb, kb, m, T::one(), (&tmat[..], 1, PANEL as isize), (top, s, 1), T::zero(), (top2, s, 1));
        for p in 0..kb {
            let row = &mut r[(j0 + p) * n + jend..(j0 + p + 1) * n];
            for (a, b) in row.iter_mut().zip(&top2[p * m..(p + 1) * m]) {
                *a -= *b;
            }
        }
        gemm(nb, kb, m, -T::one(), (xs, 1, snb), (top2, s, 1), T::one(), (trailing, 1, snb));
        j0 = jend;
    }
}

/// Strided matrix operand: `(data, row stride, column stride)`.
type Operand<'a, T> = (&'a [T], isize, isize);

/// `C = alpha A B + beta C` with `A` of shape `m x k` and `B` of shape `k x n`.
/// Double and single precision go through the optimized kernels of `matrixmultiply`.
#[allow(clippy::too_many_arguments)]
fn gemm<T: Real>(
    m: usize,
    k: usize,
    n: usize,
    alpha: T,
    a: Operand<'_, T>,
    b: Operand<'_, T>,
    beta: T,
    c: (&mut [T], isize, isize),
) {
    let span = |rows: usize, cols: usize, rs: isize, cs: isize| {
        (rows.saturating_sub(1) as isize * rs + cols.saturating_sub(1) as isize * cs) as usize
    };
    if m == 0 || n == 0 {
        return;
    }
    assert!(k == 0 || (span(m, k, a.1, a.2) < a.0.len() && span(k, n, b.1, b.2) < b.0.len()));
    assert!(span(m, n, c.1, c.2) < c.0.len());
    let (a, rsa, csa) = a;
    let (b, rsb, csb) = b;
    let (c, rsc, csc) = c;
    if TypeId::of::<T>() == TypeId::of::<f64>() {
        // SAFETY: T is f64 (checked above) and every accessed index is in bounds.
        unsafe {
            matrixmultiply::dgemm(
                m,
                k,
                n,
                alpha.as_f64(),
                a.as_ptr().cast(),
                rsa,
                csa,
                b.as_ptr().cast(),
                rsb,
                csb,
                beta.as_f64(),
                c.as_mut_ptr().cast(),
                rsc,
                csc,
            );
        }
        return;
    }
    if TypeId::of::<T>() == TypeId::of::<f32>() {
        // SAFETY: as above, with T = f32.
        unsafe {
            matrixmultiply::sgemm(
                m,
                k,
                n,
                alpha.as_f64() as f32,
                a.as_ptr().cast(),
                rsa,
                csa,
                b.as_ptr().cast(),
                rsb,
                csb,
                beta.as_f64() as f32,
                c.as_mut_ptr().cast(),
                rsc,
                csc,
            );
        }
        return;
    }
    let at = |s: &[T], i: usize, j: usize, rs: isize, cs: isize| s[(i as isize * rs + j as isize * cs) as usize];
    for i in 0..m {
        for j in 0..n {
            let mut acc = T::zero();
            for l in 0..k {
                acc += at(a, i, l, rsa, csa) * at(b, l, j, rsb, csb);
            }
            let idx = (i as isize * rsc + j as isize * csc) as usize;
            c[idx] = if beta == T::zero() { alpha * acc } else { alpha * acc + beta * c[idx] };
        }
    }
}

/// Householder QR with column pivoting of a square row-major matrix. `c` is
/// overwritten with `Q^T c`. Returns the row-major triangular factor and the
/// permutation (`perm[j]` is the original index of column `j`).
///
/// Used to grade the rows before Jacobi, which then needs only a few sweeps.
fn pivoted_qr<T: Real>(m: &[T], z: usize, c: &mut [T]) -> (Vec<T>, Vec<usize>) {
    let mut a = vec![T::zero(); z * z];
    for i in 0..z {
        for j in 0..z {
            a[j * z + i] = m[i * z + j];
        }
    }
    let mut perm: Vec<usize> = (0..z).collect();
    let mut norms: Vec<T> = a.chunks_exact(z).map(|col| dot(col, col).sqrt()).collect();
    let mut orig = norms.clone();
    let recompute = T::epsilon().sqrt();
    for j in 0..z {
        let mut p = j;
        for k in j + 1..z {
            if norms[k] > norms[p] {
                p = k;
            }
        }
        if p != j {
            let (lo, hi) = a.split_at_mut(p * z);
            lo[j * z..(j + 1) * z].swap_with_slice(&mut hi[..z]);
            perm.swap(j, p);
            norms.swap(j, p);
            orig.swap(j, p);
        }
        let (head, tail) = a.split_at_mut((j + 1) * z);
        let x = &mut head[j * z + j..];
        let xn2 = dot(&x[1..], &x[1..]);
        if xn2 > T::zero() {
            let alpha = x[0];
            let norm = (alpha * alpha + xn2).sqrt();
            let beta = if alpha >= T::zero() { -norm } else { norm };
            let scale = T::one() / (alpha - beta);
            x[1..].iter_mut().for_each(|v| *v *= scale);
            let tau = (beta - alpha) / beta;
            x[0] = beta;
            let v = &x[1..];
            for col in tail.chunks_exact_mut(z) {
                let col = &mut col[j..];
                let s = tau * (col[0] + dot(v, &col[1..]));
                col[0] -= s;
                axpy(-s, v, &mut col[1..]);
            }
            let s = tau * (c[j] + dot(v, &c[j + 1..]));
            c[j] -= s;
            axpy(-s, v, &mut c[j + 1..]);
        }
        for (k, col) in (j + 1..z).zip(tail.chunks_exact(z)) {
            if norms[k] == T::zero() {
                continue;
            }
            let t = (col[j] / norms[k]).abs();
            let t = (T::one() - t * t).max(T::zero());
            let ratio = norms[k] / orig[k];
            if t * ratio * ratio <= recompute {
                norms[k] = dot(&col[j + 1..], &col[j + 1..]).sqrt();
                orig[k] = norms[k];
            } else {
                norms[k] *= t.sqrt();
            }
        }
    }
    let mut r = vec![T::zero(); z * z];
    for i in 0..z {
        for j in i..z {
            r[i * z + j] = a[j * z + i];
        }
    }
    (r, perm)
}

/// One-sided Jacobi on the columns of `R^T`, i.e. the rows of `R`, which are
/// orthogonalized in place while the same rotations are applied to `c`.
///
/// Returns the column norms (singular values, unsorted). On exit row `k` of `r`
/// equals `sigma_k v_k^T` and `c_k = u_k^T c`.
fn jacobi_rows<T: Real>(r: &mut [T], n: usize, c: &mut [T]) -> Vec<T> {
    let tol = T::epsilon() * T::lit(n as f64).sqrt();
    let mut norms: Vec<T> = (0..n).map(|k| dot(&r[k * n..(k + 1) * n], &r[k * n..(k + 1) * n])).collect();
    let total: T = norms.iter().copied().sum();
    let floor = total * T::epsilon() * T::epsilon();
    for _sweep in 0..60 {
        let mut rotated = false;
        for p in 0..n {
            for q in p + 1..n {
                let (alpha, beta) = (norms[p], norms[q]);
                if alpha <= floor || beta <= floor {
                    continue;
                }
                let (lo, hi) = r.split_at_mut(q * n);
                let xp = &mut lo[p * n..(p + 1) * n];
                let xq = &mut hi[..n];
                let gamma = dot(xp, xq);
                if gamma.abs() <= tol * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (T::two() * gamma);
                let t = zeta.signum() / (zeta.abs() + (T::one() + zeta * zeta).sqrt());
                let cs = T::one() / (T::one() + t * t).sqrt();
                let sn = cs * t;
                for (a, b) in xp.iter_mut().zip(xq.iter_mut()) {
                    let (u, v) = (*a, *b);
                    *a = cs * u - sn * v;
                    *b = sn * u + cs * v;
                }
                let (u, v) = (c[p], c[q]);
                c[p] = cs * u - sn * v;
                c[q] = sn * u + cs * v;
                norms[p] = alpha - t * gamma;
                norms[q] = beta + t * gamma;
            }
        }
        // refresh norms to stop drift
        for k in 0..n {
            norms[k] = dot(&r[k * n..(k + 1) * n], &r[k * n..(k + 1) * n]);
        }
        if !rotated {
            break;
        }
    }
    norms.iter().map(|v| v.sqrt()).collect()
}

/// Singular values of the `Z x Z` leading block of the triangular factor, descending.
fn singular_values_of_factor<T: Real>(r: &[T], z: usize) -> Vec<T> {
    let n = z + 1;
    let m: Vec<T> = (0..z).flat_map(|i| r[i * n..i * n + z].to_vec()).collect();
    let mut dummy = vec![T::zero(); z];
    let (mut m, _) = pivoted_qr(&m, z, &mut dummy);
    let mut s = jacobi_rows(&mut m, z, &mut dummy);
    s.sort_by(|a, b| b.partial_cmp(a).unwrap());
    s
}

/// Minimum-norm least-squares solution with singular values below
/// `rank_tol * sigma_max` discarded.
pub fn lstsq<T: Real>(sys: &LinearSystem<T>, options: SolveOptions) -> Result<SolveReport<T>> {
    let t0 = Instant::now();
    if !(options.rank_tol > 0.0 && options.rank_tol < 1.0) {
        return Err(invalid_arg(format!("rank_tol must lie in (0, 1), got {}", options.rank_tol)));
    }
    let r = triangular_factor(sys)?;
    let z = sys.n_cols;
    let n = z + 1;
    let rank_tol = T::lit(options.rank_tol);

    if options.method == SolveMethod::Qr {
        let diag: Vec<T> = (0..z).map(|j| r[j * n + j].abs()).collect();
        let dmax = diag.iter().copied().fold(T::zero(), T::max);
        let dmin = diag.iter().copied().fold(T::infinity(), T::min);
        if dmax > T::zero() && dmin > rank_tol * dmax {
            let mut theta = vec![T::zero(); z];
            for j in (0..z).rev() {
                let mut s = r[j * n + z];
                for k in j + 1..z {
                    s -= r[j * n + k] * theta[k];
                }
                theta[j] = s / r[j * n + j];
            }
            let residual_norm = residual(sys, &theta);
            return Ok(SolveReport {
                coeffs: theta,
                residual_norm,
                rank: z,
                condition_estimate: dmax / dmin,
                wall_time: t0.elapsed().as_secs_f64(),
                method: SolveMethod::Qr,
            });
        }
    }

    let m: Vec<T> = (0..z).flat_map(|i| r[i * n..i * n + z].to_vec()).collect();
    let mut c: Vec<T> = (0..z).map(|i| r[i * n + z]).collect();
    let (mut m, perm) = pivoted_qr(&m, z, &mut c);
    let sigma = jacobi_rows(&mut m, z, &mut c);
    let smax = sigma.iter().copied().fold(T::zero(), T::max);
    let cutoff = rank_tol * smax;
    let mut y = vec![T::zero(); z];
    let mut rank = 0;
    let mut smin = T::infinity();
    for k in 0..z {
        let s = sigma[k];
        if smax == T::zero() || s <= cutoff {
            continue;
        }
        rank += 1;
        smin = smin.min(s);
        // row k of m is sigma_k v_k^T, c_k = u_k^T c
        axpy(c[k] / (s * s), &m[k * z..(k + 1) * z], &mut y);
    }
    let mut theta = vec![T::zero(); z];
    for (j, &col) in perm.iter().enumerate() {
        theta[col] = y[j];
    }
    let residual_norm = residual(sys, &theta);
    let condition_estimate = if rank == 0 { T::infinity() } else { smax / smin };
    Ok(SolveReport {
        coeffs: theta,
        residual_norm,
        rank,
        condition_estimate,
        wall_time: t0.elapsed().as_secs_f64(),
        method: SolveMethod::Svd,
    })
}

/// `||A theta - b||_2`.
pub fn residual<T: Real>(sys: &LinearSystem<T>, theta: &[T]) -> T {
    sys.apply(theta)
        .iter()
        .zip(&sys.b)
        .map(|(a, b)| (*a - *b) * (*a - *b))
        .sum::<T>()
        .sqrt()
}

/// `sigma_max / sigma_min` of `A` without truncation.
pub fn condition_report<T: Real>(sys: &LinearSystem<T>) -> Result<T> {
    let r = triangular_factor(sys)?;
    let s = singular_values_of_factor(&r, sys.n_cols);
    let smax = s[0];
    let smin = *s.last().unwrap();
    if smin == T::zero() {
        return Ok(T::infinity());
    }
    Ok(smax / smin)
}

/// All singular values of `A`, descending.
pub fn singular_values<T: Real>(sys: &LinearSystem<T>) -> Result<Vec<T>> {
    let r = triangular_factor(sys)?;
    Ok(singular_values_of_factor(&r, sys.n_cols))
}
