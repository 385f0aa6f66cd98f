//! Uniform cell-centered collocation grids in phase space.

use crate::basis::BoxPartition;
use crate::error::{invalid_arg, Error, Result};
use crate::problems::ProblemSpec;
use crate::quadrature::direction;
use crate::scalar::Real;

/// Interior phase-space point. `x[1]` is zero for slab problems.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhasePoint<T> {
    pub x: [T; 2],
    pub v: T,
}

/// Inflow boundary point with its prescribed value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundaryPoint<T> {
    pub x: [T; 2],
    pub v: T,
    pub value: T,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CollocationSet<T> {
    pub interior: Vec<PhasePoint<T>>,
    pub boundary: Vec<BoundaryPoint<T>>,
}

impl<T: Real> CollocationSet<T> {
    /// Interior grid with `n_spatial` nodes per axis and `n_velocity` velocities, plus
    /// inflow points using the same per-axis and velocity counts on every face.
    pub fn build(spec: &ProblemSpec<T>, n_spatial: &[usize], n_velocity: usize) -> Result<Self> {
        let interior = interior_grid(spec, n_spatial, n_velocity)?;
        let n_face = if spec.spatial_dim() == 1 { 1 } else { n_spatial[0] };
        let boundary = inflow_boundary(spec, n_face, n_velocity)?;
        Ok(Self { interior, boundary })
    }

    pub fn n_int(&self) -> usize {
        self.interior.len()
    }

    pub fn n_bdy(&self) -> usize {
        self.boundary.len()
    }
}

/// `n` cell centers of `[lo, hi]`.
pub fn cell_centers<T: Real>(lo: T, hi: T, n: usize) -> Vec<T> {
    let h = (hi - lo) / T::from_usize(n).unwrap();
    (0..n).map(|k| lo + h * (T::from_usize(k).unwrap() + T::half())).collect()
}

/// Tensor grid of cell centers, spatial axes outermost and velocity fastest.
/// Points in an annulus hole are dropped.
pub fn interior_grid<T: Real>(
    spec: &ProblemSpec<T>,
    n_spatial: &[usize],
    n_velocity: usize,
) -> Result<Vec<PhasePoint<T>>> {
    let d = spec.spatial_dim();
    if n_spatial.len() != d {
        return Err(invalid_arg(format!(
            "{}: expected {d} spatial counts, got {}",
            spec.id,
            n_spatial.len()
        )));
    }
    if n_spatial.iter().chain(std::iter::once(&n_velocity)).any(|&n| n < 2) {
        return Err(invalid_arg("collocation counts must be at least 2"));
    }
    let (lo, hi) = spec.geometry.bounds();
    let (vlo, vhi) = spec.velocity_bounds();
    let vs = cell_centers(vlo, vhi, n_velocity);
    let x0 = cell_centers(lo[0], hi[0], n_spatial[0]);
    let mut out = Vec::new();
    if d == 1 {
        out.reserve(x0.len() * vs.len());
        for &x in &x0 {
            for &v in &vs {
                out.push(PhasePoint { x: [x, T::zero()], v });
            }
        }
    } else {
        let x1 = cell_centers(lo[1], hi[1], n_spatial[1]);
        for &a in &x0 {
            for &b in &x1 {
                if spec.geometry.in_hole(&[a, b]) {
                    continue;
                }
                for &v in &vs {
                    out.push(PhasePoint { x: [a, b], v });
                }
            }
        }
    }
    Ok(out)
}

/// Inflow points `v . n < 0` on every boundary face: `n_face` cell-centered nodes along
/// each 2D face (one node per slab endpoint) crossed with `n_velocity` velocities.
pub fn inflow_boundary<T: Real>(
    spec: &ProblemSpec<T>,
    n_face: usize,
    n_velocity: usize,
) -> Result<Vec<BoundaryPoint<T>>> {
    if n_face == 0 || n_velocity == 0 {
        return Err(invalid_arg("boundary counts must be positive"));
    }
    let bv = spec
        .boundary_value
        .as_ref()
        .ok_or_else(|| Error::InvalidProblem(format!("{}: no boundary data", spec.id)))?;
    let d = spec.spatial_dim();
    let (vlo, vhi) = spec.velocity_bounds();
    let vs = cell_centers(vlo, vhi, n_velocity);
    let mut out = Vec::new();
    for face in spec.geometry.faces() {
        let xs: Vec<[T; 2]> = if d == 1 {
            vec![[face.value, T::zero()]]
        } else {
            cell_centers(face.span.0, face.span.1, n_face)
                .into_iter()
                .map(|s| if face.axis == 0 { [face.value, s] } else { [s, face.value] })
                .collect()
        };
        for x in xs {
            for &v in &vs {
                let dir = direction(d, v);
                if dir[0] * face.normal[0] + dir[1] * face.normal[1] < T::zero() {
                    out.push(BoundaryPoint { x, v, value: bv(&x[..d], v) });
                }
            }
        }
    }
    Ok(out)
}

/// Fixed error-measurement grid: `(128, 256)` in 1D, `(64, 64, 32)` in 2D.
pub fn evaluation_grid<T: Real>(spec: &ProblemSpec<T>) -> Result<Vec<PhasePoint<T>>> {
    match spec.spatial_dim() {
        1 => interior_grid(spec, &[128], 256),
        _ => interior_grid(spec, &[64, 64], 32),
    }
}

/// Number of grid coordinates (cell centers of `n` cells along `axis`) that land on a
/// derivative jump of the `phi_b` weights of `partition`, up to a relative tolerance.
///
/// For power-of-two counts this is non-zero only when `n = 4 M` along the axis.
pub fn kink_collisions<T: Real>(partition: &BoxPartition<T>, axis: usize, n: usize) -> usize {
    let lo = partition.lo()[axis];
    let hi = partition.hi()[axis];
    let tol = (hi - lo) * T::lit(1e-12);
    let kinks = partition.kink_loci(axis);
    cell_centers(lo, hi, n)
        .into_iter()
        .filter(|c| kinks.iter().any(|k| (*k - *c).abs() <= tol))
        .count()
}
