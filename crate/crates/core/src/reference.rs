//! Ground truth and error measurement: exact fields, a first-order upwind
//! discrete-ordinates oracle with source iteration, and the relative l2 metric.

use rayon::prelude::*;

use crate::basis::FeatureModel;
use crate::collocation::{cell_centers, PhasePoint};
use crate::error::{invalid_arg, Error, Result};
use crate::problems::{Geometry, ProblemSpec};
use crate::quadrature::{direction, AngularRule};
use crate::scalar::Real;

/// Values on a list of points. Density fields use spatial points with `v = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct GridField<T> {
    pub points: Vec<PhasePoint<T>>,
    pub values: Vec<T>,
}

impl<T: Real> GridField<T> {
    pub fn new(points: Vec<PhasePoint<T>>, values: Vec<T>) -> Result<Self> {
        if points.len() != values.len() {
            return Err(invalid_arg(format!(
                "{} points but {} values",
                points.len(),
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("grid field has non-finite values".into()));
        }
        Ok(Self { points, values })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Distinct spatial positions of a tensor phase grid, in order of first appearance.
pub fn spatial_points<T: Real>(points: &[PhasePoint<T>]) -> Vec<[T; 2]> {
    let mut out: Vec<[T; 2]> = Vec::new();
    for p in points {
        if out.last() != Some(&p.x) {
            out.push(p.x);
        }
    }
    out
}

fn spatial_grid<T: Real>(xs: &[[T; 2]]) -> Vec<PhasePoint<T>> {
    xs.iter().map(|x| PhasePoint { x: *x, v: T::zero() }).collect()
}

pub fn exact_field<T: Real>(spec: &ProblemSpec<T>, points: &[PhasePoint<T>]) -> Result<GridField<T>> {
    let f = spec
        .exact_f
        .as_ref()
        .ok_or_else(|| Error::UnsupportedProblem(format!("{} has no exact solution", spec.id)))?;
    let d = spec.spatial_dim();
    GridField::new(points.to_vec(), points.iter().map(|p| f(&p.x[..d], p.v)).collect())
}

pub fn exact_density<T: Real>(spec: &ProblemSpec<T>, xs: &[[T; 2]]) -> Result<GridField<T>> {
    let f = spec
        .exact_rho
        .as_ref()
        .ok_or_else(|| Error::UnsupportedProblem(format!("{} has no exact density", spec.id)))?;
    let d = spec.spatial_dim();
    GridField::new(spatial_grid(xs), xs.iter().map(|x| f(&x[..d])).collect())
}

/// `sqrt(sum |a - r|^2 / sum |r|^2)`.
pub fn relative_l2<T: Real>(approx: &GridField<T>, reference: &GridField<T>) -> Result<T> {
    if approx.len() != reference.len() {
        return Err(invalid_arg("fields live on grids of different size"));
    }
    let den: T = reference.values.iter().map(|r| *r * *r).sum();
    if den == T::zero() {
        return Err(Error::UndefinedMetric("reference field is identically zero".into()));
    }
    let num: T = approx
        .values
        .iter()
        .zip(&reference.values)
        .map(|(a, r)| (*a - *r) * (*a - *r))
        .sum();
    Ok((num / den).sqrt())
}

/// A fitted approximant together with its coefficients.
#[derive(Debug, Clone, Copy)]
pub enum Solution<'a, T> {
    Rfm { model: &'a FeatureModel<T>, coeffs: &'a [T] },
    Aprfm { rho: &'a FeatureModel<T>, g: &'a FeatureModel<T>, coeffs: &'a [T] },
}

impl<T: Real> Solution<'_, T> {
    /// `f` at each phase point; `rho + eps(x) g` for the micro-macro pair.
    pub fn phase_values(&self, spec: &ProblemSpec<T>, points: &[PhasePoint<T>]) -> Result<Vec<T>> {
        let d = spec.spatial_dim();
        self.check()?;
        points
            .par_chunks(256)
            .map(|chunk| -> Result<Vec<T>> {
                let mut out = Vec::with_capacity(chunk.len());
                match *self {
                    Solution::Rfm { model, coeffs } => {
                        let mut ev = model.evaluator();
                        let mut buf = vec![T::zero(); model.n_columns()];
                        for p in chunk {
                            let y = [p.x[0], p.x[1]];
                            let y = phase_coords(d, &y, p.v);
                            ev.eval(&y[..d + 1], None, &mut buf, None)?;
                            out.push(dotv(&buf, coeffs));
                        }
                    }
                    Solution::Aprfm { rho, g, coeffs } => {
                        let zr = rho.n_columns();
                        let mut rev = rho.evaluator();
                        let mut gev = g.evaluator();
                        let mut rb = vec![T::zero(); zr];
                        let mut gb = vec![T::zero(); g.n_columns()];
                        for p in chunk {
                            rev.eval(&p.x[..d], None, &mut rb, None)?;
                            let y = phase_coords(d, &p.x, p.v);
                            gev.eval(&y[..d + 1], None, &mut gb, None)?;
                            let eps = spec.eps_at(&p.x[..d]);
                            out.push(dotv(&rb, &coeffs[..zr]) + eps * dotv(&gb, &coeffs[zr..]));
                        }
                    }
                }
                Ok(out)
            })
            .collect::<Result<Vec<_>>>()
            .map(|v| v.concat())
    }

    /// `<f>(x)` by the angular rule.
    pub fn density_values(
        &self,
        spec: &ProblemSpec<T>,
        rule: &AngularRule<T>,
        xs: &[[T; 2]],
    ) -> Result<Vec<T>> {
        let pts: Vec<PhasePoint<T>> = xs
            .iter()
            .flat_map(|x| rule.nodes().iter().map(move |v| PhasePoint { x: *x, v: *v }))
            .collect();
        let f = self.phase_values(spec, &pts)?;
        Ok(f.chunks(rule.len()).map(|s| dotv(s, rule.weights())).collect())
    }

    fn check(&self) -> Result<()> {
        let (want, got) = match *self {
            Solution::Rfm { model, coeffs } => (model.n_columns(), coeffs.len()),
            Solution::Aprfm { rho, g, coeffs } => (rho.n_columns() + g.n_columns(), coeffs.len()),
        };
        if want != got {
            return Err(invalid_arg(format!("expected {want} coefficients, got {got}")));
        }
        Ok(())
    }
}

fn phase_coords<T: Real>(d: usize, x: &[T; 2], v: T) -> [T; 3] {
    if d == 1 {
        [x[0], v, T::zero()]
    } else {
        [x[0], x[1], v]
    }
}

fn dotv<T: Real>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).map(|(x, y)| *x * *y).sum()
}

/// Density `<f>(x)` of a fitted solution on spatial points.
pub fn density_field<T: Real>(
    spec: &ProblemSpec<T>,
    solution: &Solution<'_, T>,
    rule: &AngularRule<T>,
    xs: &[[T; 2]],
) -> Result<GridField<T>> {
    GridField::new(spatial_grid(xs), solution.density_values(spec, rule, xs)?)
}

/// Density of samples `f` given on `xs x rule.nodes()` (velocity fastest).
pub fn density_from_samples<T: Real>(rule: &AngularRule<T>, xs: &[[T; 2]], f: &[T]) -> Result<GridField<T>> {
    if f.len() != xs.len() * rule.len() {
        return Err(invalid_arg("sample count does not match grid times rule"));
    }
    GridField::new(spatial_grid(xs), f.chunks(rule.len()).map(|s| dotv(s, rule.weights())).collect())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FdmOptions {
    /// Odd refinement factor of the oracle mesh relative to the evaluation mesh, so
    /// fine cell centers coincide with evaluation points. `None` picks 27 in 1D and 9 in 2D.
    pub refine: Option<usize>,
    pub tol: f64,
    pub max_iters: usize,
}

impl Default for FdmOptions {
    fn default() -> Self {
        Self { refine: None, tol: 1e-12, max_iters: 100_000 }
    }
}

#[derive(Debug, Clone)]
pub struct FdmReference<T> {
    /// `f` on the evaluation phase grid.
    pub phase: GridField<T>,
    /// `<f>` on the evaluation spatial grid (oracle ordinates).
    pub density: GridField<T>,
    pub iterations: usize,
    pub last_change: f64,
}

/// Upwind discrete-ordinates oracle for
/// `eps v . grad f + (sigma_s + eps^2 sigma_a) f = sigma_s <f> + rfm_source`
/// on a mesh refining the evaluation grid, which must be a cell-centered tensor grid
/// with equal counts per spatial axis.
///
/// The ordinates are the nodes of `rule`. After the scalar flux converges, one more
/// sweep per evaluation velocity produces `f` on the evaluation phase grid.
pub fn fdm_reference<T: Real>(
    spec: &ProblemSpec<T>,
    rule: &AngularRule<T>,
    eval_points: &[PhasePoint<T>],
    options: FdmOptions,
) -> Result<FdmReference<T>> {
    if spec.kernel.is_some() {
        return Err(Error::UnsupportedProblem(format!("{}: oracle handles isotropic scattering only", spec.id)));
    }
    if rule.dim() != spec.spatial_dim() {
        return Err(invalid_arg("angular rule dimension does not match problem"));
    }
    let bv = spec
        .boundary_value
        .as_ref()
        .ok_or_else(|| Error::InvalidProblem(format!("{}: no boundary data", spec.id)))?;
    let d = spec.spatial_dim();
    let refine = options.refine.unwrap_or(if d == 1 { 27 } else { 9 });
    if refine.is_multiple_of(2) {
        return Err(invalid_arg("oracle refinement factor must be odd"));
    }
    let (lo, hi) = spec.geometry.bounds();
    let coarse = cells_of(eval_points, lo[0], hi[0])?;
    if let Geometry::Annulus { hole, .. } = spec.geometry {
        let k = (hole - lo[0]) / (hi[0] - lo[0]) * T::from_usize(coarse * refine).unwrap();
        if (k - k.round()).abs() > T::lit(1e-9) {
            return Err(invalid_arg("oracle mesh must align with the annulus hole"));
        }
    }
    let mesh = Mesh::new(spec, d, coarse * refine, &lo, &hi);
    let mut rho = vec![T::zero(); mesh.len()];
    let mut rho_new = vec![T::zero(); mesh.len()];
    let nodes: Vec<T> = rule.nodes().to_vec();
    let mut iterations = 0;
    let mut change = f64::INFINITY;
    while iterations < options.max_iters {
        iterations += 1;
        let fluxes: Vec<Vec<T>> = nodes
            .par_iter()
            .map(|v| mesh.sweep(spec, bv.as_ref(), *v, &rho))
            .collect();
        rho_new.iter_mut().for_each(|r| *r = T::zero());
        for (f, w) in fluxes.iter().zip(rule.weights()) {
            for (r, fi) in rho_new.iter_mut().zip(f) {
                *r += *w * *fi;
            }
        }
        change = rho
            .iter()
            .zip(&rho_new)
            .map(|(a, b)| (*a - *b).abs().as_f64())
            .fold(0.0, f64::max);
        std::mem::swap(&mut rho, &mut rho_new);
        if change < options.tol {
            break;
        }
    }
    if !(change < options.tol) {
        return Err(Error::NoConvergence { iterations, last_change: change });
    }

    // evaluation output: cell `k` of the coarse grid is fine cell `k r + (r - 1) / 2`
    let offset = (refine - 1) / 2;
    let fine_index = |x: &[T; 2]| -> usize {
        let idx = |axis: usize| {
            let h = (hi[axis] - lo[axis]) / T::from_usize(coarse).unwrap();
            let k = ((x[axis] - lo[axis]) / h - T::half()).round().to_usize().unwrap();
            k * refine + offset
        };
        if d == 1 {
            idx(0)
        } else {
            idx(0) * mesh.n + idx(1)
        }
    };
    let mut vels: Vec<T> = eval_points.iter().map(|p| p.v).collect();
    vels.sort_by(|a, b| a.partial_cmp(b).unwrap());
    vels.dedup();
    let sweeps: Vec<Vec<T>> = vels.par_iter().map(|v| mesh.sweep(spec, bv.as_ref(), *v, &rho)).collect();
    let phase_vals: Vec<T> = eval_points
        .iter()
        .map(|p| {
            let vi = vels.binary_search_by(|a| a.partial_cmp(&p.v).unwrap()).unwrap();
            sweeps[vi][fine_index(&p.x)]
        })
        .collect();
    let xs = spatial_points(eval_points);
    let dens: Vec<T> = xs.iter().map(|x| rho[fine_index(x)]).collect();
    Ok(FdmReference {
        phase: GridField::new(eval_points.to_vec(), phase_vals)?,
        density: GridField::new(spatial_grid(&xs), dens)?,
        iterations,
        last_change: change,
    })
}

/// Cell count of the cell-centered evaluation grid along the first axis.
fn cells_of<T: Real>(points: &[PhasePoint<T>], lo: T, hi: T) -> Result<usize> {
    let mut xs: Vec<T> = points.iter().map(|p| p.x[0]).collect();
    xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    xs.dedup();
    let n = xs.len();
    let ok = n > 0 && {
        let h = (hi - lo) / T::from_usize(n).unwrap();
        xs.iter()
            .enumerate()
            .all(|(k, x)| (*x - (lo + h * (T::from_usize(k).unwrap() + T::half()))).abs() <= h * T::lit(1e-9))
    };
    if !ok {
        return Err(invalid_arg("evaluation points are not a cell-centered grid"));
    }
    Ok(n)
}

/// Cell-centered oracle mesh with per-cell coefficients.
struct Mesh<T> {
    d: usize,
    n: usize,
    h: [T; 2],
    centers: [Vec<T>; 2],
    lo: [T; 2],
    hi: [T; 2],
    active: Vec<bool>,
    eps: Vec<T>,
    sigma: Vec<T>,
    ss: Vec<T>,
}

impl<T: Real> Mesh<T> {
    fn new(spec: &ProblemSpec<T>, d: usize, n: usize, lo: &[T], hi: &[T]) -> Self {
        let c0 = cell_centers(lo[0], hi[0], n);
        let c1 = if d == 2 { cell_centers(lo[1], hi[1], n) } else { vec![T::zero()] };
        let nf = T::from_usize(n).unwrap();
        let h = [(hi[0] - lo[0]) / nf, if d == 2 { (hi[1] - lo[1]) / nf } else { T::one() }];
        let len = c0.len() * c1.len();
        let mut active = Vec::with_capacity(len);
        let mut eps = Vec::with_capacity(len);
        let mut sigma = Vec::with_capacity(len);
        let mut ss = Vec::with_capacity(len);
        for a in &c0 {
            for b in &c1 {
                let x = [*a, *b];
                let xs = &x[..d];
                let e = spec.eps_at(xs);
                active.push(!spec.geometry.in_hole(&x));
                eps.push(e);
                ss.push((spec.sigma_s)(xs));
                sigma.push((spec.sigma_s)(xs) + e * e * (spec.sigma_a)(xs));
            }
        }
        Self {
            d,
            n,
            h,
            centers: [c0, c1],
            lo: [lo[0], if d == 2 { lo[1] } else { T::zero() }],
            hi: [hi[0], if d == 2 { hi[1] } else { T::zero() }],
            active,
            eps,
            sigma,
            ss,
        }
    }

    fn len(&self) -> usize {
        self.active.len()
    }

    /// Transport sweep for one direction given the lagged scalar flux `rho`.
    fn sweep(&self, spec: &ProblemSpec<T>, bv: &(dyn Fn(&[T], T) -> T + Send + Sync), v: T, rho: &[T]) -> Vec<T> {
        let dir = direction(self.d, v);
        let mut f = vec![T::zero(); self.len()];
        let n = self.n;
        let src = |idx: usize, x: &[T; 2]| self.ss[idx] * rho[idx] + (spec.rfm_source)(&x[..self.d], v);
        if self.d == 1 {
            let a = dir[0].abs() / self.h[0];
            let order: Box<dyn Iterator<Item = usize>> =
                if dir[0] > T::zero() { Box::new(0..n) } else { Box::new((0..n).rev()) };
            let mut up = if dir[0] > T::zero() {
                bv(&[self.lo[0]], v)
            } else {
                bv(&[self.hi[0]], v)
            };
            for i in order {
                let x = [self.centers[0][i], T::zero()];
                let c = self.eps[i] * a;
                let val = (src(i, &x) + c * up) / (c + self.sigma[i]);
                f[i] = val;
                up = val;
            }
            return f;
        }
        let ax = dir[0].abs() / self.h[0];
        let ay = dir[1].abs() / self.h[1];
        let xs: Vec<usize> = if dir[0] >= T::zero() { (0..n).collect() } else { (0..n).rev().collect() };
        let ys: Vec<usize> = if dir[1] >= T::zero() { (0..n).collect() } else { (0..n).rev().collect() };
        let step_x: isize = if dir[0] >= T::zero() { -1 } else { 1 };
        let step_y: isize = if dir[1] >= T::zero() { -1 } else { 1 };
        let half = T::half();
        for &i in &xs {
            for &j in &ys {
                let idx = i * n + j;
                if !self.active[idx] {
                    continue;
                }
                let x = [self.centers[0][i], self.centers[1][j]];
                // upwind neighbors, or ghost values on the face between them
                let ui = i as isize + step_x;
                let uj = j as isize + step_y;
                let fx = if ui >= 0 && (ui as usize) < n && self.active[ui as usize * n + j] {
                    f[ui as usize * n + j]
                } else {
                    let face = x[0] + T::lit(step_x as f64) * self.h[0] * half;
                    bv(&[face, x[1]], v)
                };
                let fy = if uj >= 0 && (uj as usize) < n && self.active[i * n + uj as usize] {
                    f[i * n + uj as usize]
                } else {
                    let face = x[1] + T::lit(step_y as f64) * self.h[1] * half;
                    bv(&[x[0], face], v)
                };
                let cx = self.eps[idx] * ax;
                let cy = self.eps[idx] * ay;
                f[idx] = (src(idx, &x) + cx * fx + cy * fy) / (cx + cy + self.sigma[idx]);
            }
        }
        f
    }
}
