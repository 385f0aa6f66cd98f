//! Benchmark radiative transfer problems in micro-macro ready form.
//!
//! Every problem is written against the scaled equation
//!
//! ```text
//! v . grad f = (sigma_s / eps) L f - eps sigma_a f + eps Q
//! ```
//!
//! and stores its sources already split into the macro part `<Q>` and the micro
//! part `eps (Q - <Q>)`, so no stored function carries a `1/eps` factor. The
//! right-hand side of the undecomposed operator
//! `eps v . grad f - sigma_s L f + eps^2 sigma_a f` is stored separately as
//! `rfm_source = eps^2 Q`.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{invalid_arg, Error, Result};
use crate::scalar::Real;

pub type SpatialFn<T> = Arc<dyn Fn(&[T]) -> T + Send + Sync>;
pub type PhaseFn<T> = Arc<dyn Fn(&[T], T) -> T + Send + Sync>;
/// Scattering kernel `k(v, v')` over velocity coordinates.
pub type Kernel<T> = Arc<dyn Fn(T, T) -> T + Send + Sync>;

/// Identifier of the built-in benchmarks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProblemId {
    /// 1D slab with source, exact solution `1 - x`.
    Ex1,
    /// 1D slab, no source.
    Ex2,
    /// 1D slab with spatially varying `eps(x)`.
    Ex3,
    /// 2D square, exact solution `exp(-x1 - x2)`.
    Ex4,
    /// 2D square, uniform source, vacuum inflow.
    Ex5,
    /// Square annulus, exact solution `exp(-x1 - x2)`.
    Ex6,
}

impl ProblemId {
    pub const ALL: [ProblemId; 6] = [
        ProblemId::Ex1,
        ProblemId::Ex2,
        ProblemId::Ex3,
        ProblemId::Ex4,
        ProblemId::Ex5,
        ProblemId::Ex6,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ProblemId::Ex1 => "ex1",
            ProblemId::Ex2 => "ex2",
            ProblemId::Ex3 => "ex3",
            ProblemId::Ex4 => "ex4",
            ProblemId::Ex5 => "ex5",
            ProblemId::Ex6 => "ex6",
        }
    }

    pub fn spatial_dim(self) -> usize {
        match self {
            ProblemId::Ex1 | ProblemId::Ex2 | ProblemId::Ex3 => 1,
            _ => 2,
        }
    }

    /// Whether the problem uses the built-in `eps(x)` profile instead of a constant.
    pub fn has_profile(self) -> bool {
        self == ProblemId::Ex3
    }
}

impl FromStr for ProblemId {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        ProblemId::ALL
            .into_iter()
            .find(|p| p.as_str() == s.trim().to_ascii_lowercase())
            .ok_or_else(|| invalid_arg(format!("unknown problem id '{s}'")))
    }
}

impl fmt::Display for ProblemId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One flat piece of the spatial boundary.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Face<T> {
    /// Axis held fixed on the face.
    pub axis: usize,
    /// Coordinate value along `axis`.
    pub value: T,
    /// Extent along the other axis (unused in 1D).
    pub span: (T, T),
    /// Outward normal of the domain.
    pub normal: [T; 2],
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Geometry<T> {
    Interval { lo: T, hi: T },
    Square { lo: T, hi: T },
    /// `[lo, hi]^2` minus the open square `(-hole, hole)^2`.
    Annulus { lo: T, hi: T, hole: T },
}

impl<T: Real> Geometry<T> {
    pub fn spatial_dim(&self) -> usize {
        match self {
            Geometry::Interval { .. } => 1,
            _ => 2,
        }
    }

    /// Enclosing box of the spatial domain.
    pub fn bounds(&self) -> (Vec<T>, Vec<T>) {
        match *self {
            Geometry::Interval { lo, hi } => (vec![lo], vec![hi]),
            Geometry::Square { lo, hi } | Geometry::Annulus { lo, hi, .. } => {
                (vec![lo, lo], vec![hi, hi])
            }
        }
    }

    /// True when `x` lies in the removed hole of an annulus.
    pub fn in_hole(&self, x: &[T]) -> bool {
        match *self {
            Geometry::Annulus { hole, .. } => x[0].abs().max(x[1].abs()) < hole,
            _ => false,
        }
    }

    pub fn contains(&self, x: &[T]) -> bool {
        let (lo, hi) = self.bounds();
        x.len() == lo.len()
            && x.iter().zip(lo.iter().zip(&hi)).all(|(v, (a, b))| *v >= *a && *v <= *b)
            && !self.in_hole(x)
    }

    /// Boundary faces with the domain's outward normals.
    pub fn faces(&self) -> Vec<Face<T>> {
        let z = T::zero();
        let one = T::one();
        match *self {
            Geometry::Interval { lo, hi } => vec![
                Face { axis: 0, value: lo, span: (z, z), normal: [-one, z] },
                Face { axis: 0, value: hi, span: (z, z), normal: [one, z] },
            ],
            Geometry::Square { lo, hi } => square_faces(lo, hi, one),
            Geometry::Annulus { lo, hi, hole } => {
                let mut f = square_faces(lo, hi, one);
                // inner faces: the domain's outward normal points into the hole
                f.extend(square_faces(-hole, hole, -one));
                f
            }
        }
    }
}

fn square_faces<T: Real>(lo: T, hi: T, sign: T) -> Vec<Face<T>> {
    let z = T::zero();
    vec![
        Face { axis: 0, value: lo, span: (lo, hi), normal: [-sign, z] },
        Face { axis: 0, value: hi, span: (lo, hi), normal: [sign, z] },
        Face { axis: 1, value: lo, span: (lo, hi), normal: [z, -sign] },
        Face { axis: 1, value: hi, span: (lo, hi), normal: [z, sign] },
    ]
}

/// Knudsen number: a constant or the smooth profile of the mixed-scale slab.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Epsilon<T> {
    Constant(T),
    Profile,
}

impl<T: Real> Epsilon<T> {
    pub fn value(&self, x: &[T]) -> T {
        match *self {
            Epsilon::Constant(e) => e,
            Epsilon::Profile => epsilon_profile(x[0]),
        }
    }

    /// Spatial gradient, padded to two components.
    pub fn gradient(&self, x: &[T]) -> [T; 2] {
        match *self {
            Epsilon::Constant(_) => [T::zero(); 2],
            Epsilon::Profile => [epsilon_profile_derivative(x[0]), T::zero()],
        }
    }

    pub fn is_constant(&self) -> bool {
        matches!(self, Epsilon::Constant(_))
    }
}

/// `eps(x) = 1e-2 + (tanh(6.5 - 11 x) + tanh(11 x - 4.5)) / 2`.
pub fn epsilon_profile<T: Real>(x: T) -> T {
    T::lit(1e-2) + T::half() * ((T::lit(6.5) - T::lit(11.0) * x).tanh() + (T::lit(11.0) * x - T::lit(4.5)).tanh())
}

pub fn epsilon_profile_derivative<T: Real>(x: T) -> T {
    let a = (T::lit(6.5) - T::lit(11.0) * x).tanh();
    let b = (T::lit(11.0) * x - T::lit(4.5)).tanh();
    T::lit(5.5) * ((T::one() - b * b) - (T::one() - a * a))
}

/// Which micro-macro system the problem is decomposed into.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Formulation {
    /// `f = rho + eps g` with constant `eps`:
    /// `<v.grad g> + sigma_a rho = <Q>`,
    /// `v.grad rho + eps (I - P)(v.grad g) - sigma_s L g + eps^2 sigma_a g = eps (Q - <Q>)`.
    Standard,
    /// `f = rho + eps(x) g` with `<g> = 0`:
    /// `<v.grad(eps g)> + eps sigma_a rho = macro_source`,
    /// `v.grad rho + (I - P)(v.grad(eps g)) + sigma_s g + eps^2 sigma_a g = micro_source`.
    MixedScale,
}

/// A stationary radiative transfer problem.
#[derive(Clone)]
pub struct ProblemSpec<T> {
    pub id: String,
    pub geometry: Geometry<T>,
    pub epsilon: Epsilon<T>,
    pub formulation: Formulation,
    pub sigma_s: SpatialFn<T>,
    pub sigma_a: SpatialFn<T>,
    pub macro_source: SpatialFn<T>,
    pub micro_source: PhaseFn<T>,
    pub rfm_source: PhaseFn<T>,
    pub boundary_value: Option<PhaseFn<T>>,
    pub exact_f: Option<PhaseFn<T>>,
    pub exact_rho: Option<SpatialFn<T>>,
    /// Scattering kernel; isotropic `k = 1` when absent.
    pub kernel: Option<Kernel<T>>,
}

impl<T> fmt::Debug for ProblemSpec<T>
where
    T: fmt::Debug,
{
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ProblemSpec")
            .field("id", &self.id)
            .field("geometry", &self.geometry)
            .field("epsilon", &self.epsilon)
            .field("formulation", &self.formulation)
            .field("has_exact", &self.exact_f.is_some())
            .field("anisotropic", &self.kernel.is_some())
            .finish()
    }
}

impl<T: Real> ProblemSpec<T> {
    pub fn spatial_dim(&self) -> usize {
        self.geometry.spatial_dim()
    }

    /// Bounds of the velocity coordinate: `[-1, 1]` in 1D, angles `[0, 2 pi]` in 2D.
    pub fn velocity_bounds(&self) -> (T, T) {
        if self.spatial_dim() == 1 {
            (-T::one(), T::one())
        } else {
            (T::zero(), T::two_pi())
        }
    }

    /// Enclosing box of the phase space `(x, v)`.
    pub fn phase_bounds(&self) -> (Vec<T>, Vec<T>) {
        let (mut lo, mut hi) = self.geometry.bounds();
        let (a, b) = self.velocity_bounds();
        lo.push(a);
        hi.push(b);
        (lo, hi)
    }

    pub fn eps_at(&self, x: &[T]) -> T {
        self.epsilon.value(x)
    }

    /// Checks the non-negativity and positivity conditions on a set of sample points.
    pub fn validate_at(&self, xs: &[Vec<T>]) -> Result<()> {
        for x in xs {
            if (self.sigma_s)(x) < T::zero() || (self.sigma_a)(x) < T::zero() {
                return Err(Error::InvalidProblem(format!(
                    "{}: negative cross section at {x:?}",
                    self.id
                )));
            }
            if !(self.eps_at(x) > T::zero()) {
                return Err(Error::InvalidProblem(format!(
                    "{}: epsilon must be positive, got {:?} at {x:?}",
                    self.id,
                    self.eps_at(x)
                )));
            }
        }
        Ok(())
    }
}

fn exp_field<T: Real>(x: &[T]) -> T {
    (-x[0] - x[1]).exp()
}

/// Builds one of the built-in benchmarks. `epsilon` is ignored for `ex3`.
pub fn catalog<T: Real>(id: ProblemId, epsilon: T) -> Result<ProblemSpec<T>> {
    if !id.has_profile() && !(epsilon > T::zero() && epsilon.is_finite()) {
        return Err(invalid_arg(format!("{id}: epsilon must be positive and finite")));
    }
    let eps = epsilon;
    let one: SpatialFn<T> = Arc::new(|_| T::one());
    let zero_s: SpatialFn<T> = Arc::new(|_| T::zero());
    let zero_p: PhaseFn<T> = Arc::new(|_, _| T::zero());
    let slab_inflow = |left: T| -> PhaseFn<T> {
        Arc::new(move |x: &[T], _| if x[0] < T::half() { left } else { T::zero() })
    };
    let spec = match id {
        ProblemId::Ex1 => ProblemSpec {
            id: id.to_string(),
            geometry: Geometry::Interval { lo: T::zero(), hi: T::one() },
            epsilon: Epsilon::Constant(eps),
            formulation: Formulation::Standard,
            sigma_s: one,
            sigma_a: zero_s.clone(),
            macro_source: zero_s,
            micro_source: Arc::new(|_, v| -v),
            rfm_source: Arc::new(move |_, v| -eps * v),
            boundary_value: Some(slab_inflow(T::one())),
            exact_f: Some(Arc::new(|x, _| T::one() - x[0])),
            exact_rho: Some(Arc::new(|x| T::one() - x[0])),
            kernel: None,
        },
        ProblemId::Ex2 => ProblemSpec {
            id: id.to_string(),
            geometry: Geometry::Interval { lo: T::zero(), hi: T::one() },
            epsilon: Epsilon::Constant(eps),
            formulation: Formulation::Standard,
            sigma_s: one,
            sigma_a: zero_s.clone(),
            macro_source: zero_s,
            micro_source: zero_p.clone(),
            rfm_source: zero_p,
            boundary_value: Some(slab_inflow(T::one())),
            exact_f: None,
            exact_rho: None,
            kernel: None,
        },
        ProblemId::Ex3 => ProblemSpec {
            id: id.to_string(),
            geometry: Geometry::Interval { lo: T::zero(), hi: T::one() },
            epsilon: Epsilon::Profile,
            formulation: Formulation::MixedScale,
            sigma_s: one,
            sigma_a: zero_s.clone(),
            macro_source: zero_s,
            micro_source: zero_p.clone(),
            rfm_source: zero_p,
            boundary_value: Some(slab_inflow(T::half())),
            exact_f: None,
            exact_rho: None,
            kernel: None,
        },
        ProblemId::Ex4 | ProblemId::Ex6 => ProblemSpec {
            id: id.to_string(),
            geometry: if id == ProblemId::Ex4 {
                Geometry::Square { lo: -T::one(), hi: T::one() }
            } else {
                Geometry::Annulus { lo: -T::one(), hi: T::one(), hole: T::one() / T::lit(3.0) }
            },
            epsilon: Epsilon::Constant(eps),
            formulation: Formulation::Standard,
            sigma_s: one,
            sigma_a: zero_s.clone(),
            macro_source: zero_s,
            // Q = G = -(cos a + sin a) e^{-x1-x2} / eps, <Q> = 0
            micro_source: Arc::new(|x, a| -(a.cos() + a.sin()) * exp_field(x)),
            rfm_source: Arc::new(move |x, a| -eps * (a.cos() + a.sin()) * exp_field(x)),
            boundary_value: Some(Arc::new(|x, _| exp_field(x))),
            exact_f: Some(Arc::new(|x, _| exp_field(x))),
            exact_rho: Some(Arc::new(exp_field)),
            kernel: None,
        },
        ProblemId::Ex5 => ProblemSpec {
            id: id.to_string(),
            geometry: Geometry::Square { lo: -T::one(), hi: T::one() },
            epsilon: Epsilon::Constant(eps),
            formulation: Formulation::Standard,
            sigma_s: one,
            sigma_a: zero_s,
            // Q = G = 1/2
            macro_source: Arc::new(|_| T::half()),
            micro_source: zero_p.clone(),
            rfm_source: Arc::new(move |_, _| eps * eps * T::half()),
            boundary_value: Some(zero_p),
            exact_f: None,
            exact_rho: None,
            kernel: None,
        },
    };
    Ok(spec)
}

/// Pointwise values of `rho`, `g` and the velocity moments of `g` needed by the
/// micro-macro residuals at one phase-space point `(x, v)`.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct LocalFields<T> {
    pub rho: T,
    pub grad_rho: [T; 2],
    pub g: T,
    pub grad_g: [T; 2],
    /// `(L g)(x, v)`.
    pub collision_g: T,
    /// `<v . grad_x g>(x)`.
    pub avg_v_grad_g: T,
    /// `<v g>(x)`, componentwise.
    pub avg_v_g: [T; 2],
}

#[inline]
fn dot2<T: Real>(a: [T; 2], b: [T; 2]) -> T {
    a[0] * b[0] + a[1] * b[1]
}

/// Residuals `(macro, micro)` of the problem's micro-macro system at `(x, v)`.
pub fn micro_macro_residuals<T: Real>(
    spec: &ProblemSpec<T>,
    fields: &LocalFields<T>,
    x: &[T],
    v: T,
) -> (T, T) {
    let dir = crate::quadrature::direction(spec.spatial_dim(), v);
    let sa = (spec.sigma_a)(x);
    let ss = (spec.sigma_s)(x);
    let eps = spec.eps_at(x);
    let v_grad_rho = dot2(dir, fields.grad_rho);
    let v_grad_g = dot2(dir, fields.grad_g);
    match spec.formulation {
        Formulation::Standard => {
            let macro_res = fields.avg_v_grad_g + sa * fields.rho - (spec.macro_source)(x);
            let micro_res = v_grad_rho + eps * (v_grad_g - fields.avg_v_grad_g) - ss * fields.collision_g
                + eps * eps * sa * fields.g
                - (spec.micro_source)(x, v);
            (macro_res, micro_res)
        }
        Formulation::MixedScale => {
            let grad_eps = spec.epsilon.gradient(x);
            let v_grad_eg = eps * v_grad_g + dot2(dir, grad_eps) * fields.g;
            let avg_grad_eg = eps * fields.avg_v_grad_g + dot2(grad_eps, fields.avg_v_g);
            let macro_res = avg_grad_eg + eps * sa * fields.rho - (spec.macro_source)(x);
            let micro_res = v_grad_rho + (v_grad_eg - avg_grad_eg) + ss * fields.g + eps * eps * sa * fields.g
                - (spec.micro_source)(x, v);
            (macro_res, micro_res)
        }
    }
}

/// Residual of the undecomposed operator
/// `eps v . grad f - sigma_s L f + eps^2 sigma_a f - rfm_source` at `(x, v)`.
pub fn rfm_residual<T: Real>(
    spec: &ProblemSpec<T>,
    f: T,
    grad_f: [T; 2],
    collision_f: T,
    x: &[T],
    v: T,
) -> T {
    let dir = crate::quadrature::direction(spec.spatial_dim(), v);
    let eps = spec.eps_at(x);
    eps * dot2(dir, grad_f) - (spec.sigma_s)(x) * collision_f + eps * eps * (spec.sigma_a)(x) * f
        - (spec.rfm_source)(x, v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn ids_parse() {
        assert_eq!("ex3".parse::<ProblemId>().unwrap(), ProblemId::Ex3);
        assert_eq!("EX6".parse::<ProblemId>().unwrap(), ProblemId::Ex6);
        assert!(matches!("ex7".parse::<ProblemId>(), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn catalog_examples() {
        let p1 = catalog::<f64>(ProblemId::Ex1, 1e-3).unwrap();
        assert_abs_diff_eq!((p1.exact_f.as_ref().unwrap())(&[0.3], 0.9), 0.7, epsilon = 1e-15);
        let p4 = catalog::<f64>(ProblemId::Ex4, 1.0).unwrap();
        assert_eq!((p4.exact_f.as_ref().unwrap())(&[0.0, 0.0], 2.0), 1.0);
        let p5 = catalog::<f64>(ProblemId::Ex5, 1.0).unwrap();
        assert_eq!((p5.boundary_value.as_ref().unwrap())(&[-1.0, 0.2], 0.1), 0.0);
        assert!(catalog::<f64>(ProblemId::Ex1, 0.0).is_err());
        assert!(catalog::<f64>(ProblemId::Ex3, 0.0).is_ok());
    }

    #[test]
    fn slab_inflow_data() {
        let p = catalog::<f64>(ProblemId::Ex1, 1.0).unwrap();
        let bv = p.boundary_value.unwrap();
        assert_eq!(bv(&[0.0], 0.5), 1.0);
        assert_eq!(bv(&[1.0], -0.5), 0.0);
        let p3 = catalog::<f64>(ProblemId::Ex3, 1.0).unwrap();
        assert_eq!((p3.boundary_value.unwrap())(&[0.0], 0.5), 0.5);
    }

    #[test]
    fn profile_values() {
        assert_abs_diff_eq!(epsilon_profile(0.0f64), epsilon_profile(1.0f64), epsilon = 1e-15);
        // direct evaluation: 0.01 + tanh(1)
        assert_abs_diff_eq!(epsilon_profile(0.5f64), 0.01 + 1f64.tanh(), epsilon = 1e-15);
        assert_abs_diff_eq!(epsilon_profile(0.5f64), 0.771_594_2, epsilon = 1e-6);
        assert_abs_diff_eq!(
            epsilon_profile(0.0f64),
            0.01 + 0.5 * (6.5f64.tanh() - 4.5f64.tanh()),
            epsilon = 1e-15
        );
        assert_abs_diff_eq!(epsilon_profile(0.0f64), 0.010_121, epsilon = 1e-5);
    }

    #[test]
    fn profile_derivative_matches_central_difference() {
        for i in 0..=20 {
            let x = i as f64 / 20.0;
            let h = 1e-6;
            let fd = (epsilon_profile(x + h) - epsilon_profile(x - h)) / (2.0 * h);
            assert_abs_diff_eq!(epsilon_profile_derivative(x), fd, epsilon = 1e-6);
        }
    }

    #[test]
    fn profile_range_and_symmetry() {
        for i in 0..=1000 {
            let x = i as f64 / 1000.0;
            let e = epsilon_profile(x);
            assert!((0.01..=1.02).contains(&e), "eps({x}) = {e}");
            assert_abs_diff_eq!(e, epsilon_profile(1.0 - x), epsilon = 1e-14);
        }
    }

    #[test]
    fn trivial_residuals_vanish() {
        let mut p = catalog::<f64>(ProblemId::Ex2, 1.0).unwrap();
        p.sigma_a = Arc::new(|_| 0.0);
        let fields = LocalFields { rho: 3.0, ..Default::default() };
        let (m, u) = micro_macro_residuals(&p, &fields, &[0.4], 0.3);
        assert_eq!((m, u), (0.0, 0.0));
        let p3 = catalog::<f64>(ProblemId::Ex3, 1.0).unwrap();
        let (m, u) = micro_macro_residuals(&p3, &fields, &[0.4], -0.7);
        assert_eq!((m, u), (0.0, 0.0));
    }

    #[test]
    fn slab_exact_pair_residuals() {
        // rho = 1 - x, g = 0 solves the ex1 micro-macro system for every eps
        for eps in [1.0, 1e-4, 1e-12] {
            let p = catalog::<f64>(ProblemId::Ex1, eps).unwrap();
            for (x, v) in [(0.1, 0.5), (0.7, -0.9), (0.5, 0.01)] {
                let fields = LocalFields { rho: 1.0 - x, grad_rho: [-1.0, 0.0], ..Default::default() };
                let (m, u) = micro_macro_residuals(&p, &fields, &[x], v);
                assert_abs_diff_eq!(m, 0.0, epsilon = 1e-15);
                assert_abs_diff_eq!(u, 0.0, epsilon = 1e-15);
                let r = rfm_residual(&p, 1.0 - x, [-1.0, 0.0], 0.0, &[x], v);
                assert_abs_diff_eq!(r, 0.0, epsilon = 1e-15);
            }
        }
    }

    #[test]
    fn annulus_faces_point_into_hole() {
        let g = Geometry::Annulus { lo: -1.0, hi: 1.0, hole: 1.0 / 3.0 };
        let faces = g.faces();
        assert_eq!(faces.len(), 8);
        let inner_right = faces.iter().find(|f| f.axis == 0 && (f.value - 1.0f64 / 3.0).abs() < 1e-15).unwrap();
        assert_eq!(inner_right.normal, [-1.0, 0.0]);
        assert!(g.in_hole(&[0.0, 0.0]));
        assert!(!g.contains(&[0.1, -0.2]));
        assert!(g.contains(&[0.5, 0.0]));
    }
}
