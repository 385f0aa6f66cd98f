//! Dense least-squares systems for the vanilla and asymptotic-preserving methods.
//!
//! Columns follow the coefficient layout of the models: box-major, feature-minor,
//! with the `rho` block ahead of the `g` block for the micro-macro system.
//! Interior rows for the micro-macro system come in (macro, micro) pairs per
//! collocation point, followed by the inflow rows.

use std::io::{Read, Write};
use std::ops::Range;
use std::path::Path;

use rayon::prelude::*;
use serde::Serialize;

use crate::basis::{ColumnEvaluator, FeatureModel};
use crate::collocation::{BoundaryPoint, CollocationSet, PhasePoint};
use crate::error::{invalid_arg, Error, Result};
use crate::problems::{Formulation, ProblemSpec};
use crate::quadrature::{direction, AngularRule};
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum RowKind {
    Macro,
    Micro,
    RfmInterior,
    Boundary,
    ZeroMean,
}

impl RowKind {
    pub fn as_str(self) -> &'static str {
        match self {
            RowKind::Macro => "macro",
            RowKind::Micro => "micro",
            RowKind::RfmInterior => "rfm-interior",
            RowKind::Boundary => "boundary",
            RowKind::ZeroMean => "zero-mean",
        }
    }

    fn code(self) -> u64 {
        match self {
            RowKind::Macro => 0,
            RowKind::Micro => 1,
            RowKind::RfmInterior => 2,
            RowKind::Boundary => 3,
            RowKind::ZeroMean => 4,
        }
    }

    fn from_code(c: u64) -> Result<Self> {
        Ok(match c {
            0 => RowKind::Macro,
            1 => RowKind::Micro,
            2 => RowKind::RfmInterior,
            3 => RowKind::Boundary,
            4 => RowKind::ZeroMean,
            _ => return Err(Error::InvalidInput(format!("unknown row kind code {c}"))),
        })
    }
}

/// Dense row-major system `A theta ~ b`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearSystem<T> {
    pub n_rows: usize,
    pub n_cols: usize,
    pub a: Vec<T>,
    pub b: Vec<T>,
    pub row_kind: Vec<RowKind>,
    /// Accumulated row scale factors; all ones before [`rescale_rows`].
    pub lambda: Vec<T>,
    pub n_int: usize,
    pub n_bdy: usize,
}

impl<T: Real> LinearSystem<T> {
    pub fn zeros(n_rows: usize, n_cols: usize) -> Self {
        Self {
            n_rows,
            n_cols,
            a: vec![T::zero(); n_rows * n_cols],
            b: vec![T::zero(); n_rows],
            row_kind: vec![RowKind::Boundary; n_rows],
            lambda: vec![T::one(); n_rows],
            n_int: 0,
            n_bdy: 0,
        }
    }

    /// Builds a system from explicit rows; every row is tagged [`RowKind::RfmInterior`].
    pub fn from_rows(rows: &[Vec<T>], b: &[T]) -> Result<Self> {
        let n = rows.len();
        if n == 0 || n != b.len() {
            return Err(invalid_arg("row count must be positive and match the right-hand side"));
        }
        let z = rows[0].len();
        if rows.iter().any(|r| r.len() != z) {
            return Err(invalid_arg("ragged rows"));
        }
        let mut sys = Self::zeros(n, z);
        for (k, r) in rows.iter().enumerate() {
            sys.a[k * z..(k + 1) * z].copy_from_slice(r);
        }
        sys.b.copy_from_slice(b);
        sys.row_kind = vec![RowKind::RfmInterior; n];
        sys.n_int = n;
        Ok(sys)
    }

    pub fn row(&self, k: usize) -> &[T] {
        &self.a[k * self.n_cols..(k + 1) * self.n_cols]
    }

    /// `A x`.
    pub fn apply(&self, x: &[T]) -> Vec<T> {
        self.a
            .par_chunks(self.n_cols.max(1))
            .map(|r| r.iter().zip(x).map(|(a, b)| *a * *b).sum())
            .collect()
    }

    /// `A^T y`.
    pub fn apply_transpose(&self, y: &[T]) -> Vec<T> {
        let mut out = vec![T::zero(); self.n_cols];
        for (r, yk) in self.a.chunks(self.n_cols.max(1)).zip(y) {
            for (o, a) in out.iter_mut().zip(r) {
                *o += *a * *yk;
            }
        }
        out
    }

    pub fn frobenius_norm(&self) -> T {
        self.a.iter().map(|v| *v * *v).sum::<T>().sqrt()
    }

    /// Rows of the given kind, concatenated row-major.
    pub fn rows_of_kind(&self, kinds: &[RowKind]) -> Vec<T> {
        let mut out = Vec::new();
        for k in 0..self.n_rows {
            if kinds.contains(&self.row_kind[k]) {
                out.extend_from_slice(self.row(k));
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct AssembleOptions {
    /// Append one `<g_M>(x) = 0` row per distinct interior position.
    pub zero_mean_rows: bool,
}

/// Consecutive runs of interior points sharing the same spatial position.
fn spatial_groups<T: Real>(pts: &[PhasePoint<T>]) -> Vec<Range<usize>> {
    let mut out = Vec::new();
    let mut start = 0;
    for k in 1..=pts.len() {
        if k == pts.len() || pts[k].x != pts[start].x {
            out.push(start..k);
            start = k;
        }
    }
    out
}

/// Splits `a` (row-major, `z` columns) and `b` into per-group blocks of `rows_per_point` rows.
fn split_blocks<'a, T>(
    groups: &[Range<usize>],
    rows_per_point: usize,
    z: usize,
    mut a: &'a mut [T],
    mut b: &'a mut [T],
) -> Vec<(Range<usize>, &'a mut [T], &'a mut [T])> {
    let mut out = Vec::with_capacity(groups.len());
    for g in groups {
        let n = g.len() * rows_per_point;
        let (ah, at) = a.split_at_mut(n * z);
        let (bh, bt) = b.split_at_mut(n);
        out.push((g.clone(), ah, bh));
        a = at;
        b = bt;
    }
    out
}

fn check_models<T: Real>(spec: &ProblemSpec<T>, model: &FeatureModel<T>, dim: usize, what: &str) -> Result<()> {
    if model.dim() != dim {
        return Err(invalid_arg(format!(
            "{}: {what} model has dimension {}, expected {dim}",
            spec.id,
            model.dim()
        )));
    }
    Ok(())
}

fn check_rule<T: Real>(spec: &ProblemSpec<T>, rule: &AngularRule<T>) -> Result<()> {
    if rule.dim() != spec.spatial_dim() {
        return Err(invalid_arg(format!(
            "{}: angular rule dimension {} does not match problem",
            spec.id,
            rule.dim()
        )));
    }
    Ok(())
}

/// `y = (x, v)` for a phase-space model.
#[inline]
fn phase<T: Real>(d: usize, x: &[T; 2], v: T) -> [T; 3] {
    if d == 1 {
        [x[0], v, T::zero()]
    } else {
        [x[0], x[1], v]
    }
}

/// Spatial direction `v` padded with a zero velocity component for phase-space models.
#[inline]
fn phase_dir<T: Real>(d: usize, dir: [T; 2]) -> [T; 3] {
    if d == 1 {
        [dir[0], T::zero(), T::zero()]
    } else {
        [dir[0], dir[1], T::zero()]
    }
}

/// Kernel weights `w_q k(v, v_q)` and their sum, or `None` for isotropic scattering.
fn kernel_weights<T: Real>(spec: &ProblemSpec<T>, rule: &AngularRule<T>, v: T) -> Result<Option<(Vec<T>, T)>> {
    let Some(k) = spec.kernel.as_ref() else {
        return Ok(None);
    };
    let mut w = Vec::with_capacity(rule.len());
    let mut s = T::zero();
    for (vq, wq) in rule.nodes().iter().zip(rule.weights()) {
        let kv = k(v, *vq);
        if kv < T::zero() {
            return Err(Error::InvalidKernel { v: v.as_f64(), w: vq.as_f64(), value: kv.as_f64() });
        }
        w.push(*wq * kv);
        s += *wq * kv;
    }
    Ok(Some((w, s)))
}

/// Values (and optionally spatial directional derivatives along `v_q`) of every column of
/// a phase-space model at `(x, v_q)` for all quadrature nodes, laid out `[q][column]`.
fn quadrature_cache<T: Real>(
    model: &FeatureModel<T>,
    rule: &AngularRule<T>,
    d: usize,
    x: &[T; 2],
    with_derivative: bool,
) -> Result<(Vec<T>, Vec<T>)> {
    let z = model.n_columns();
    let nq = rule.len();
    let mut vals = vec![T::zero(); nq * z];
    let mut dd = if with_derivative { vec![T::zero(); nq * z] } else { Vec::new() };
    let mut ev = model.evaluator();
    for q in 0..nq {
        let y = phase(d, x, rule.nodes()[q]);
        let vq = &mut vals[q * z..(q + 1) * z];
        if with_derivative {
            let dir = phase_dir(d, rule.direction(q));
            ev.eval(&y[..d + 1], Some(&dir[..d + 1]), vq, Some(&mut dd[q * z..(q + 1) * z]))?;
        } else {
            ev.eval(&y[..d + 1], None, vq, None)?;
        }
    }
    Ok((vals, dd))
}

fn weighted_sum<T: Real>(rule: &AngularRule<T>, data: &[T], z: usize, scale: impl Fn(usize) -> T) -> Vec<T> {
    let mut out = vec![T::zero(); z];
    for (q, w) in rule.weights().iter().enumerate() {
        let s = *w * scale(q);
        for (o, v) in out.iter_mut().zip(&data[q * z..(q + 1) * z]) {
            *o += s * *v;
        }
    }
    out
}

fn validate_positions<T: Real>(spec: &ProblemSpec<T>, colloc: &CollocationSet<T>) -> Result<()> {
    let d = spec.spatial_dim();
    let xs: Vec<Vec<T>> = spatial_groups(&colloc.interior)
        .iter()
        .map(|g| colloc.interior[g.start].x[..d].to_vec())
        .collect();
    spec.validate_at(&xs)
}

/// Vanilla system for `eps v . grad f - sigma_s L f + eps^2 sigma_a f = rfm_source` with
/// the inflow condition, for a single model over phase space.
pub fn assemble_rfm<T: Real>(
    spec: &ProblemSpec<T>,
    model: &FeatureModel<T>,
    colloc: &CollocationSet<T>,
    rule: &AngularRule<T>,
) -> Result<LinearSystem<T>> {
    let d = spec.spatial_dim();
    check_models(spec, model, d + 1, "phase-space")?;
    check_rule(spec, rule)?;
    validate_positions(spec, colloc)?;
    let z = model.n_columns();
    let n_int = colloc.n_int();
    let n_bdy = colloc.n_bdy();
    let mut sys = LinearSystem::zeros(n_int + n_bdy, z);
    sys.n_int = n_int;
    sys.n_bdy = n_bdy;
    for k in 0..n_int {
        sys.row_kind[k] = RowKind::RfmInterior;
    }
    let groups = spatial_groups(&colloc.interior);
    let (a_int, a_bdy) = sys.a.split_at_mut(n_int * z);
    let (b_int, b_bdy) = sys.b.split_at_mut(n_int);
    split_blocks(&groups, 1, z, a_int, b_int)
        .into_par_iter()
        .try_for_each(|(range, a, b)| -> Result<()> {
            let pts = &colloc.interior[range];
            let x = pts[0].x;
            let xs = &x[..d];
            let (qv, _) = quadrature_cache(model, rule, d, &x, false)?;
            let avg = weighted_sum(rule, &qv, z, |_| T::one());
            let eps = spec.eps_at(xs);
            let ss = (spec.sigma_s)(xs);
            let sa = (spec.sigma_a)(xs);
            let mut ev = model.evaluator();
            let mut val = vec![T::zero(); z];
            let mut dd = vec![T::zero(); z];
            for (t, p) in pts.iter().enumerate() {
                let y = phase(d, &x, p.v);
                let dir = phase_dir(d, direction(d, p.v));
                ev.eval(&y[..d + 1], Some(&dir[..d + 1]), &mut val, Some(&mut dd))?;
                let row = &mut a[t * z..(t + 1) * z];
                match kernel_weights(spec, rule, p.v)? {
                    None => {
                        for c in 0..z {
                            let lf = avg[c] - val[c];
                            row[c] = eps * dd[c] - ss * lf + eps * eps * sa * val[c];
                        }
                    }
                    Some((kw, ksum)) => {
                        let kav = weighted_sum_raw(&kw, &qv, z);
                        for c in 0..z {
                            let lf = kav[c] - ksum * val[c];
                            row[c] = eps * dd[c] - ss * lf + eps * eps * sa * val[c];
                        }
                    }
                }
                b[t] = (spec.rfm_source)(xs, p.v);
            }
            Ok(())
        })?;
    fill_boundary(
        &colloc.boundary,
        a_bdy,
        b_bdy,
        z,
        |p, row, ev: &mut ColumnEvaluator<'_, T>| {
            let y = phase(d, &p.x, p.v);
            ev.eval(&y[..d + 1], None, row, None)
        },
        || model.evaluator(),
    )?;
    for k in n_int..n_int + n_bdy {
        sys.row_kind[k] = RowKind::Boundary;
    }
    Ok(sys)
}

fn weighted_sum_raw<T: Real>(w: &[T], data: &[T], z: usize) -> Vec<T> {
    let mut out = vec![T::zero(); z];
    for (q, wq) in w.iter().enumerate() {
        for (o, v) in out.iter_mut().zip(&data[q * z..(q + 1) * z]) {
            *o += *wq * *v;
        }
    }
    out
}

fn fill_boundary<T, S, F, I>(
    pts: &[BoundaryPoint<T>],
    a: &mut [T],
    b: &mut [T],
    z: usize,
    row_fn: F,
    init: I,
) -> Result<()>
where
    T: Real,
    F: Fn(&BoundaryPoint<T>, &mut [T], &mut S) -> Result<()> + Sync,
    I: Fn() -> S + Sync,
{
    const CHUNK: usize = 64;
    a.par_chunks_mut(CHUNK * z)
        .zip(b.par_chunks_mut(CHUNK))
        .zip(pts.par_chunks(CHUNK))
        .try_for_each(|((a, b), pts)| -> Result<()> {
            let mut state = init();
            for (t, p) in pts.iter().enumerate() {
                row_fn(p, &mut a[t * z..(t + 1) * z], &mut state)?;
                b[t] = p.value;
            }
            Ok(())
        })
}

/// Micro-macro system with `rho` over space and `g` over phase space.
pub fn assemble_aprfm<T: Real>(
    spec: &ProblemSpec<T>,
    rho_model: &FeatureModel<T>,
    g_model: &FeatureModel<T>,
    colloc: &CollocationSet<T>,
    rule: &AngularRule<T>,
    options: AssembleOptions,
) -> Result<LinearSystem<T>> {
    let d = spec.spatial_dim();
    check_models(spec, rho_model, d, "rho")?;
    check_models(spec, g_model, d + 1, "g")?;
    check_rule(spec, rule)?;
    validate_positions(spec, colloc)?;
    let zr = rho_model.n_columns();
    let zg = g_model.n_columns();
    let z = zr + zg;
    let n_int = colloc.n_int();
    let n_bdy = colloc.n_bdy();
    let groups = spatial_groups(&colloc.interior);
    let n_zero = if options.zero_mean_rows { groups.len() } else { 0 };
    let mut sys = LinearSystem::zeros(2 * n_int + n_bdy + n_zero, z);
    sys.n_int = n_int;
    sys.n_bdy = n_bdy;
    for k in 0..n_int {
        sys.row_kind[2 * k] = RowKind::Macro;
        sys.row_kind[2 * k + 1] = RowKind::Micro;
    }
    for k in 2 * n_int + n_bdy..sys.n_rows {
        sys.row_kind[k] = RowKind::ZeroMean;
    }
    let (a_int, a_rest) = sys.a.split_at_mut(2 * n_int * z);
    let (b_int, b_rest) = sys.b.split_at_mut(2 * n_int);
    let (a_bdy, a_zero) = a_rest.split_at_mut(n_bdy * z);
    let (b_bdy, _) = b_rest.split_at_mut(n_bdy);
    let mixed = spec.formulation == Formulation::MixedScale;

    split_blocks(&groups, 2, z, a_int, b_int)
        .into_par_iter()
        .try_for_each(|(range, a, b)| -> Result<()> {
            let pts = &colloc.interior[range];
            let x = pts[0].x;
            let xs = &x[..d];
            let eps = spec.eps_at(xs);
            let ge = spec.epsilon.gradient(xs);
            let ss = (spec.sigma_s)(xs);
            let sa = (spec.sigma_a)(xs);

            // rho columns: values and the spatial gradient, one axis at a time
            let mut rev = rho_model.evaluator();
            let mut rv = vec![T::zero(); zr];
            let mut rgrad = vec![vec![T::zero(); zr]; d];
            for (k, gk) in rgrad.iter_mut().enumerate() {
                let mut e = [T::zero(); 2];
                e[k] = T::one();
                rev.eval(xs, Some(&e[..d]), &mut rv, Some(gk))?;
            }

            let (qv, qd) = quadrature_cache(g_model, rule, d, &x, true)?;
            let avg_g = weighted_sum(rule, &qv, zg, |_| T::one());
            let avg_vdg = weighted_sum(rule, &qd, zg, |_| T::one());
            // <v . grad(eps g)> for the mixed form, <v . grad g> otherwise
            let avg_flux: Vec<T> = if mixed {
                let vg0 = weighted_sum(rule, &qv, zg, |q| rule.direction(q)[0]);
                let vg1 = weighted_sum(rule, &qv, zg, |q| rule.direction(q)[1]);
                (0..zg).map(|c| eps * avg_vdg[c] + ge[0] * vg0[c] + ge[1] * vg1[c]).collect()
            } else {
                avg_vdg
            };

            let mut macro_row = vec![T::zero(); z];
            let rho_coef = if mixed { eps * sa } else { sa };
            for c in 0..zr {
                macro_row[c] = rho_coef * rv[c];
            }
            macro_row[zr..].copy_from_slice(&avg_flux);
            let macro_b = (spec.macro_source)(xs);

            let mut gev = g_model.evaluator();
            let mut gv = vec![T::zero(); zg];
            let mut gd = vec![T::zero(); zg];
            for (t, p) in pts.iter().enumerate() {
                let dir = direction(d, p.v);
                let y = phase(d, &x, p.v);
                let pdir = phase_dir(d, dir);
                gev.eval(&y[..d + 1], Some(&pdir[..d + 1]), &mut gv, Some(&mut gd))?;

                a[2 * t * z..(2 * t + 1) * z].copy_from_slice(&macro_row);
                b[2 * t] = macro_b;

                let row = &mut a[(2 * t + 1) * z..(2 * t + 2) * z];
                for c in 0..zr {
                    let mut s = T::zero();
                    for k in 0..d {
                        s += dir[k] * rgrad[k][c];
                    }
                    row[c] = s;
                }
                let g_row = &mut row[zr..];
                if mixed {
                    let v_ge = dir[0] * ge[0] + dir[1] * ge[1];
                    for c in 0..zg {
                        g_row[c] = (eps * gd[c] + v_ge * gv[c]) - avg_flux[c]
                            + ss * gv[c]
                            + eps * eps * sa * gv[c];
                    }
                } else {
                    let lg: Vec<T> = match kernel_weights(spec, rule, p.v)? {
                        None => (0..zg).map(|c| avg_g[c] - gv[c]).collect(),
                        Some((kw, ksum)) => {
                            let kav = weighted_sum_raw(&kw, &qv, zg);
                            (0..zg).map(|c| kav[c] - ksum * gv[c]).collect()
                        }
                    };
                    for c in 0..zg {
                        g_row[c] = eps * (gd[c] - avg_flux[c]) - ss * lg[c] + eps * eps * sa * gv[c];
                    }
                }
                b[2 * t + 1] = (spec.micro_source)(xs, p.v);
            }
            Ok(())
        })?;

    fill_boundary(
        &colloc.boundary,
        a_bdy,
        b_bdy,
        z,
        |p, row, (rev, gev): &mut (ColumnEvaluator<'_, T>, ColumnEvaluator<'_, T>)| {
            let xs = &p.x[..d];
            let (rpart, gpart) = row.split_at_mut(zr);
            rev.eval(xs, None, rpart, None)?;
            let y = phase(d, &p.x, p.v);
            gev.eval(&y[..d + 1], None, gpart, None)?;
            let eps = spec.eps_at(xs);
            gpart.iter_mut().for_each(|v| *v *= eps);
            Ok(())
        },
        || (rho_model.evaluator(), g_model.evaluator()),
    )?;
    for k in 2 * n_int..2 * n_int + n_bdy {
        sys.row_kind[k] = RowKind::Boundary;
    }

    if options.zero_mean_rows {
        a_zero
            .par_chunks_mut(z)
            .zip(groups.par_iter())
            .try_for_each(|(row, g)| -> Result<()> {
                let x = colloc.interior[g.start].x;
                let (qv, _) = quadrature_cache(g_model, rule, d, &x, false)?;
                row[zr..].copy_from_slice(&weighted_sum(rule, &qv, zg, |_| T::one()));
                Ok(())
            })?;
    }
    Ok(sys)
}

/// Scales each row by `1 / max_j |a_kj|`; the factors accumulate into `lambda`.
pub fn rescale_rows<T: Real>(mut sys: LinearSystem<T>) -> Result<LinearSystem<T>> {
    let z = sys.n_cols;
    if sys.a.iter().any(|v| !v.is_finite()) || sys.b.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("system has non-finite entries".into()));
    }
    let kinds = &sys.row_kind;
    sys.a
        .par_chunks_mut(z)
        .zip(sys.b.par_iter_mut())
        .zip(sys.lambda.par_iter_mut())
        .enumerate()
        .try_for_each(|(k, ((row, b), lam))| -> Result<()> {
            let m = row.iter().fold(T::zero(), |m, v| m.max(v.abs()));
            if m == T::zero() {
                return Err(Error::DegenerateRow { row: k, kind: kinds[k].as_str().to_string() });
            }
            let s = T::one() / m;
            row.iter_mut().for_each(|v| *v *= s);
            *b *= s;
            *lam *= s;
            Ok(())
        })?;
    Ok(sys)
}

/// `f = rho_M(x) + eps(x) g_M(x, v)` from the concatenated coefficient vector.
pub fn reconstruct_f<T: Real>(
    spec: &ProblemSpec<T>,
    rho_model: &FeatureModel<T>,
    g_model: &FeatureModel<T>,
    coeffs: &[T],
    x: &[T],
    v: T,
) -> Result<T> {
    let zr = rho_model.n_columns();
    if coeffs.len() != zr + g_model.n_columns() {
        return Err(invalid_arg(format!(
            "expected {} coefficients, got {}",
            zr + g_model.n_columns(),
            coeffs.len()
        )));
    }
    let d = spec.spatial_dim();
    let xs = &x[..d];
    let rho = rho_model.model_eval(&coeffs[..zr], xs)?;
    let mut y = xs.to_vec();
    y.push(v);
    let g = g_model.model_eval(&coeffs[zr..], &y)?;
    Ok(rho + spec.eps_at(xs) * g)
}

/// Writes `(A, b, lambda, row_kind)`: a header of five little-endian `u64`
/// (`N`, `Z`, `N_int`, `N_bdy`, byte offset of the row-kind table), then `A` row-major,
/// `b` and `lambda` as little-endian `f64`, then one `u64` code per row.
pub fn write_debug_dump<T: Real>(sys: &LinearSystem<T>, path: &Path) -> Result<()> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    let offset = 40 + 8 * (sys.a.len() + 2 * sys.n_rows) as u64;
    for h in [sys.n_rows as u64, sys.n_cols as u64, sys.n_int as u64, sys.n_bdy as u64, offset] {
        w.write_all(&h.to_le_bytes())?;
    }
    for v in sys.a.iter().chain(&sys.b).chain(&sys.lambda) {
        w.write_all(&v.as_f64().to_le_bytes())?;
    }
    for k in &sys.row_kind {
        w.write_all(&k.code().to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a file written by [`write_debug_dump`].
pub fn read_debug_dump(path: &Path) -> Result<LinearSystem<f64>> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    let word = |i: usize| -> Result<[u8; 8]> {
        bytes
            .get(i * 8..i * 8 + 8)
            .map(|s| s.try_into().unwrap())
            .ok_or_else(|| Error::InvalidInput("truncated debug dump".into()))
    };
    let h: Vec<u64> = (0..5).map(|i| word(i).map(u64::from_le_bytes)).collect::<Result<_>>()?;
    let (n, z) = (h[0] as usize, h[1] as usize);
    let floats: Vec<f64> = (5..5 + n * z + 2 * n)
        .map(|i| word(i).map(f64::from_le_bytes))
        .collect::<Result<_>>()?;
    let base = h[4] as usize / 8;
    let kinds: Vec<RowKind> = (0..n)
        .map(|i| word(base + i).map(u64::from_le_bytes).and_then(RowKind::from_code))
        .collect::<Result<_>>()?;
    Ok(LinearSystem {
        n_rows: n,
        n_cols: z,
        a: floats[..n * z].to_vec(),
        b: floats[n * z..n * z + n].to_vec(),
        lambda: floats[n * z + n..].to_vec(),
        row_kind: kinds,
        n_int: h[2] as usize,
        n_bdy: h[3] as usize,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::{Activation, PouKind};
    use crate::problems::{catalog, Epsilon, ProblemId};
    use approx::assert_abs_diff_eq;

    fn slab_models(jr: usize, jg: usize, seed: u64) -> (FeatureModel<f64>, FeatureModel<f64>) {
        let r = FeatureModel::random(vec![0.0], vec![1.0], vec![1], jr, 1.0, seed, Activation::Tanh, PouKind::PhiB)
            .unwrap();
        let g = FeatureModel::random(
            vec![0.0, -1.0],
            vec![1.0, 1.0],
            vec![1, 1],
            jg,
            1.0,
            seed ^ 7,
            Activation::Tanh,
            PouKind::PhiB,
        )
        .unwrap();
        (r, g)
    }

    #[test]
    fn rfm_shape() {
        let p = catalog::<f64>(ProblemId::Ex1, 1.0).unwrap();
        let (_, m) = slab_models(4, 16, 1);
        let c = CollocationSet::build(&p, &[8], 16).unwrap();
        let rule = AngularRule::new(1, 16).unwrap();
        let sys = assemble_rfm(&p, &m, &c, &rule).unwrap();
        assert_eq!(sys.n_rows, 8 * 16 + c.n_bdy());
        assert_eq!(c.n_bdy(), 16);
        assert_eq!(sys.n_cols, 16);
        assert_eq!(sys.row_kind[0], RowKind::RfmInterior);
        assert_eq!(sys.row_kind[sys.n_rows - 1], RowKind::Boundary);
    }

    #[test]
    fn rfm_rows_match_pointwise_operator() {
        let p = catalog::<f64>(ProblemId::Ex1, 0.3).unwrap();
        let (_, m) = slab_models(4, 8, 3);
        let c = CollocationSet::build(&p, &[4], 6).unwrap();
        let rule = AngularRule::new(1, 16).unwrap();
        let sys = assemble_rfm(&p, &m, &c, &rule).unwrap();
        for (k, pt) in c.interior.iter().enumerate() {
            for col in 0..8 {
                let (val, grad) = m.feature_eval(0, col, &[pt.x[0], pt.v]).unwrap();
                let samples: Vec<f64> =
                    rule.nodes().iter().map(|q| m.feature_eval(0, col, &[pt.x[0], *q]).unwrap().0).collect();
                let avg = rule.average(&samples).unwrap();
                let expected = 0.3 * pt.v * grad[0] - (avg - val);
                assert_abs_diff_eq!(sys.row(k)[col], expected, epsilon = 1e-13);
            }
            assert_abs_diff_eq!(sys.b[k], -0.3 * pt.v, epsilon = 1e-15);
        }
    }

    #[test]
    fn aprfm_shape_and_layout() {
        let p = catalog::<f64>(ProblemId::Ex1, 1e-2).unwrap();
        let (r, g) = slab_models(5, 7, 2);
        let c = CollocationSet::build(&p, &[4], 8).unwrap();
        let rule = AngularRule::new(1, 16).unwrap();
        let sys = assemble_aprfm(&p, &r, &g, &c, &rule, AssembleOptions::default()).unwrap();
        assert_eq!(sys.n_rows, 2 * 32 + c.n_bdy());
        assert_eq!(sys.n_cols, 12);
        assert_eq!(sys.row_kind[0], RowKind::Macro);
        assert_eq!(sys.row_kind[1], RowKind::Micro);
        // macro rows carry no rho dependence without absorption
        assert!(sys.row(0)[..5].iter().all(|v| *v == 0.0));
        // boundary rows scale g columns by eps
        let k = 2 * 32;
        let bp = c.boundary[0];
        let (gv, _) = g.feature_eval(0, 0, &[bp.x[0], bp.v]).unwrap();
        assert_abs_diff_eq!(sys.row(k)[5], 1e-2 * gv, epsilon = 1e-16);
        let with_zero =
            assemble_aprfm(&p, &r, &g, &c, &rule, AssembleOptions { zero_mean_rows: true }).unwrap();
        assert_eq!(with_zero.n_rows, sys.n_rows + 4);
        assert_eq!(with_zero.row_kind[with_zero.n_rows - 1], RowKind::ZeroMean);
        assert!(assemble_aprfm(&p, &g, &g, &c, &rule, AssembleOptions::default()).is_err());
    }

    #[test]
    fn limit_rows_at_zero_epsilon() {
        let mut p = catalog::<f64>(ProblemId::Ex1, 1.0).unwrap();
        p.epsilon = Epsilon::Constant(0.0);
        let (r, g) = slab_models(3, 4, 5);
        let c = CollocationSet::build(&p, &[3], 4).unwrap();
        let rule = AngularRule::new(1, 16).unwrap();
        let err = assemble_aprfm(&p, &r, &g, &c, &rule, AssembleOptions::default());
        assert!(matches!(err, Err(Error::InvalidProblem(_))));
    }

    #[test]
    fn rescale_example() {
        let sys = LinearSystem::from_rows(&[vec![2.0, 4.0, -8.0]], &[16.0]).unwrap();
        let s = rescale_rows(sys).unwrap();
        assert_eq!(s.a, vec![0.25, 0.5, -1.0]);
        assert_eq!(s.b, vec![2.0]);
        assert_eq!(s.lambda, vec![0.125]);
        let again = rescale_rows(s.clone()).unwrap();
        assert_eq!(again.a, s.a);
        let bad = LinearSystem::from_rows(&[vec![1.0, 0.0], vec![0.0, 0.0]], &[1.0, 0.0]).unwrap();
        match rescale_rows(bad) {
            Err(Error::DegenerateRow { row, kind }) => {
                assert_eq!(row, 1);
                assert_eq!(kind, "rfm-interior");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn reconstruct_examples() {
        let p = catalog::<f64>(ProblemId::Ex3, 1.0).unwrap();
        let (r, g) = slab_models(3, 4, 9);
        let zeros = vec![0.0; 7];
        assert_eq!(reconstruct_f(&p, &r, &g, &zeros, &[0.3], 0.2).unwrap(), 0.0);
        let coeffs: Vec<f64> = (0..7).map(|i| 0.1 * i as f64 - 0.3).collect();
        let x = 0.5;
        let rho = r.model_eval(&coeffs[..3], &[x]).unwrap();
        let gm = g.model_eval(&coeffs[3..], &[x, 0.2]).unwrap();
        let f = reconstruct_f(&p, &r, &g, &coeffs, &[x], 0.2).unwrap();
        assert_abs_diff_eq!(f - rho, crate::problems::epsilon_profile(x) * gm, epsilon = 1e-12);
        assert!(reconstruct_f(&p, &r, &g, &coeffs[..5], &[x], 0.2).is_err());
    }

    #[test]
    fn debug_dump_round_trip() {
        let p = catalog::<f64>(ProblemId::Ex1, 0.1).unwrap();
        let (r, g) = slab_models(3, 4, 9);
        let c = CollocationSet::build(&p, &[3], 4).unwrap();
        let rule = AngularRule::new(1, 16).unwrap();
        let sys = rescale_rows(assemble_aprfm(&p, &r, &g, &c, &rule, AssembleOptions::default()).unwrap()).unwrap();
        let dir = std::env::temp_dir().join(format!("aprfm-dump-{}", std::process::id()));
        sys_dump_check(&sys, &dir);
    }

    fn sys_dump_check(sys: &LinearSystem<f64>, path: &Path) {
        write_debug_dump(sys, path).unwrap();
        let bytes = std::fs::read(path).unwrap();
        assert_eq!(bytes.len(), 40 + 8 * (sys.a.len() + 3 * sys.n_rows));
        let back = read_debug_dump(path).unwrap();
        std::fs::remove_file(path).ok();
        assert_eq!(&back, sys);
    }
}
