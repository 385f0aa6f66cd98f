//! Partition-of-unity weighted random features.
//!
//! A [`FeatureModel`] represents functions of the form
//! `u(y) = sum_i psi_i(y) sum_j c_ij phi_ij(y)` where `psi_i` is the normalized
//! partition-of-unity weight of box `i` and `phi_ij = act(w_ij . z_i(y) + b_ij)`
//! is a random feature evaluated in the box-local coordinate `z_i(y) in [-1, 1]^d`.
//! Inner weights are drawn once and frozen; only the outer coefficients `c_ij`
//! are unknowns of the least-squares problems assembled elsewhere.

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid_arg, Error, Result};
use crate::scalar::Real;

/// Axis-aligned box `prod_k [lo_k, hi_k]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Hyperbox<T> {
    lo: Vec<T>,
    hi: Vec<T>,
}

impl<T: Real> Hyperbox<T> {
    pub fn new(lo: Vec<T>, hi: Vec<T>) -> Result<Self> {
        if lo.is_empty() || lo.len() != hi.len() {
            return Err(invalid_arg(format!(
                "box bounds must be non-empty and equal length (got {} and {})",
                lo.len(),
                hi.len()
            )));
        }
        if lo.iter().zip(&hi).any(|(a, b)| !(*a < *b)) {
            return Err(invalid_arg("box requires lo < hi on every axis"));
        }
        Ok(Self { lo, hi })
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn lo(&self) -> &[T] {
        &self.lo
    }

    pub fn hi(&self) -> &[T] {
        &self.hi
    }

    pub fn center(&self, axis: usize) -> T {
        (self.lo[axis] + self.hi[axis]) * T::half()
    }

    pub fn radius(&self, axis: usize) -> T {
        (self.hi[axis] - self.lo[axis]) * T::half()
    }

    pub fn contains(&self, y: &[T]) -> bool {
        y.len() == self.dim()
            && y.iter().enumerate().all(|(k, &v)| v >= self.lo[k] && v <= self.hi[k])
    }
}

/// Maps `y` onto the box-local coordinate `(y - center) / radius`, sending the box onto `[-1, 1]^d`.
pub fn normalize_to_box<T: Real>(y: &[T], bx: &Hyperbox<T>) -> Result<Vec<T>> {
    if y.len() != bx.dim() {
        return Err(invalid_arg(format!(
            "point has dimension {} but box has dimension {}",
            y.len(),
            bx.dim()
        )));
    }
    Ok(y.iter()
        .enumerate()
        .map(|(k, &v)| (v - bx.center(k)) / bx.radius(k))
        .collect())
}

/// Uniform tensor-product partition of an enclosing hypercube.
///
/// Boxes are numbered row-major over the axes, the last axis varying fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct BoxPartition<T> {
    lo: Vec<T>,
    hi: Vec<T>,
    counts: Vec<usize>,
    boxes: Vec<Hyperbox<T>>,
}

impl<T: Real> BoxPartition<T> {
    pub fn uniform(lo: Vec<T>, hi: Vec<T>, counts: Vec<usize>) -> Result<Self> {
        let outer = Hyperbox::new(lo, hi)?;
        if counts.len() != outer.dim() || counts.contains(&0) {
            return Err(invalid_arg("partition counts must be positive, one per axis"));
        }
        let d = outer.dim();
        let total: usize = counts.iter().product();
        let mut boxes = Vec::with_capacity(total);
        let mut multi = vec![0usize; d];
        for _ in 0..total {
            let mut blo = Vec::with_capacity(d);
            let mut bhi = Vec::with_capacity(d);
            for k in 0..d {
                let (a, b) = axis_cell(outer.lo[k], outer.hi[k], counts[k], multi[k]);
                blo.push(a);
                bhi.push(b);
            }
            boxes.push(Hyperbox::new(blo, bhi)?);
            for k in (0..d).rev() {
                multi[k] += 1;
                if multi[k] < counts[k] {
                    break;
                }
                multi[k] = 0;
            }
        }
        Ok(Self {
            lo: outer.lo,
            hi: outer.hi,
            counts,
            boxes,
        })
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    /// Total number of boxes `M`.
    pub fn len(&self) -> usize {
        self.boxes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.boxes.is_empty()
    }

    pub fn counts(&self) -> &[usize] {
        &self.counts
    }

    pub fn boxes(&self) -> &[Hyperbox<T>] {
        &self.boxes
    }

    pub fn lo(&self) -> &[T] {
        &self.lo
    }

    pub fn hi(&self) -> &[T] {
        &self.hi
    }

    /// Width of a single box along `axis`.
    pub fn cell_width(&self, axis: usize) -> T {
        (self.hi[axis] - self.lo[axis]) / T::from_usize(self.counts[axis]).unwrap()
    }

    /// Coordinates along `axis` where the `phi_b` weights have a derivative jump.
    pub fn kink_loci(&self, axis: usize) -> Vec<T> {
        let w = self.cell_width(axis);
        let mut out = Vec::new();
        for c in 0..self.counts[axis] {
            let (a, b) = axis_cell(self.lo[axis], self.hi[axis], self.counts[axis], c);
            let mid = (a + b) * T::half();
            for f in [0.375, 0.625] {
                out.push(mid - w * T::lit(f));
                out.push(mid + w * T::lit(f));
            }
        }
        out
    }
}

fn axis_cell<T: Real>(lo: T, hi: T, count: usize, idx: usize) -> (T, T) {
    let n = T::from_usize(count).unwrap();
    let a = lo + (hi - lo) * T::from_usize(idx).unwrap() / n;
    let b = if idx + 1 == count {
        hi
    } else {
        lo + (hi - lo) * T::from_usize(idx + 1).unwrap() / n
    };
    (a, b)
}

/// Univariate partition-of-unity profile.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum PouKind {
    /// Indicator of `|z| <= 1`.
    PhiA,
    /// Flat on `|z| <= 3/4`, sine blend to zero on `3/4 <= |z| <= 5/4`.
    #[default]
    PhiB,
}

impl std::str::FromStr for PouKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "phi_a" | "a" | "phia" => Ok(PouKind::PhiA),
            "phi_b" | "b" | "phib" => Ok(PouKind::PhiB),
            other => Err(invalid_arg(format!("unknown PoU kind '{other}'"))),
        }
    }
}

impl std::fmt::Display for PouKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            PouKind::PhiA => "phi_a",
            PouKind::PhiB => "phi_b",
        })
    }
}

pub fn pou_univariate<T: Real>(kind: PouKind, z: T) -> T {
    let a = z.abs();
    match kind {
        PouKind::PhiA => {
            if a <= T::one() {
                T::one()
            } else {
                T::zero()
            }
        }
        PouKind::PhiB => {
            if a <= T::lit(0.75) {
                T::one()
            } else if a <= T::lit(1.25) {
                (T::one() - (T::two_pi() * a).sin()) * T::half()
            } else {
                T::zero()
            }
        }
    }
}

/// Derivative of [`pou_univariate`] with respect to `z`; right limit at the kinks.
pub fn pou_univariate_derivative<T: Real>(kind: PouKind, z: T) -> T {
    match kind {
        PouKind::PhiA => T::zero(),
        PouKind::PhiB => {
            // right limit: evaluate as if z were nudged towards +inf
            let a = z.abs();
            let inside = if z >= T::zero() {
                a >= T::lit(0.75) && a < T::lit(1.25)
            } else {
                a > T::lit(0.75) && a <= T::lit(1.25)
            };
            if inside {
                -T::pi() * (T::two_pi() * a).cos() * z.signum()
            } else {
                T::zero()
            }
        }
    }
}

/// Normalized weights `psi_i(y) / sum_l psi_l(y)` for every box of the partition.
pub fn pou_tensor_normalized<T: Real>(
    partition: &BoxPartition<T>,
    kind: PouKind,
    y: &[T],
) -> Result<Vec<T>> {
    if y.len() != partition.dim() {
        return Err(invalid_arg("point dimension does not match partition"));
    }
    let raw: Vec<T> = partition
        .boxes()
        .iter()
        .map(|bx| {
            (0..bx.dim())
                .map(|k| pou_univariate(kind, (y[k] - bx.center(k)) / bx.radius(k)))
                .fold(T::one(), |acc, v| acc * v)
        })
        .collect();
    let total: T = raw.iter().copied().sum();
    if total <= T::zero() {
        return Err(Error::DegenerateCover {
            point: y.iter().map(|v| v.as_f64()).collect(),
        });
    }
    Ok(raw.into_iter().map(|v| v / total).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    #[default]
    Tanh,
    /// `sin(pi * a)`
    SinPi,
}

impl Activation {
    /// Value and derivative at `a`.
    #[inline]
    pub fn eval<T: Real>(self, a: T) -> (T, T) {
        match self {
            Activation::Tanh => {
                let t = a.tanh();
                (t, T::one() - t * t)
            }
            Activation::SinPi => {
                let (s, c) = (T::pi() * a).sin_cos();
                (s, T::pi() * c)
            }
        }
    }
}

impl std::str::FromStr for Activation {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "tanh" => Ok(Activation::Tanh),
            "sin" | "sine" | "sin_pi" | "sine-pi" => Ok(Activation::SinPi),
            other => Err(invalid_arg(format!("unknown activation '{other}'"))),
        }
    }
}

impl std::fmt::Display for Activation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Activation::Tanh => "tanh",
            Activation::SinPi => "sin_pi",
        })
    }
}

/// Frozen inner weights `w_ij in R^d` and biases `b_ij`, uniform on `[-B, B]`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureWeights<T> {
    w: Vec<T>,
    b: Vec<T>,
    range: T,
    seed: u64,
    boxes: usize,
    per_box: usize,
    dim: usize,
}

impl<T: Real> FeatureWeights<T> {
    /// Draws weights for `boxes * per_box` features in dimension `dim`.
    ///
    /// Feature `(i, j)` reads its `dim + 1` numbers from its own ChaCha8 stream
    /// keyed by `(seed, i, j)`, components first and bias last, so the draw does not
    /// depend on the order in which features are generated.
    pub fn generate(seed: u64, boxes: usize, per_box: usize, dim: usize, range: T) -> Result<Self> {
        if boxes == 0 || per_box == 0 || dim == 0 {
            return Err(invalid_arg("feature counts and dimension must be positive"));
        }
        if !(range > T::zero()) || !range.is_finite() {
            return Err(invalid_arg("weight range B must be positive and finite"));
        }
        let n = boxes * per_box;
        let mut w = Vec::with_capacity(n * dim);
        let mut b = Vec::with_capacity(n);
        for i in 0..boxes {
            for j in 0..per_box {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(((i as u64) << 32) | j as u64);
                for _ in 0..dim {
                    w.push(uniform_symmetric(&mut rng, range));
                }
                b.push(uniform_symmetric(&mut rng, range));
            }
        }
        Ok(Self {
            w,
            b,
            range,
            seed,
            boxes,
            per_box,
            dim,
        })
    }

    pub fn weight(&self, i: usize, j: usize) -> &[T] {
        let f = i * self.per_box + j;
        &self.w[f * self.dim..(f + 1) * self.dim]
    }

    pub fn bias(&self, i: usize, j: usize) -> T {
        self.b[i * self.per_box + j]
    }

    pub fn range(&self) -> T {
        self.range
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn per_box(&self) -> usize {
        self.per_box
    }

    pub fn boxes(&self) -> usize {
        self.boxes
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn all_weights(&self) -> &[T] {
        &self.w
    }

    pub fn all_biases(&self) -> &[T] {
        &self.b
    }
}

fn uniform_symmetric<T: Real>(rng: &mut ChaCha8Rng, range: T) -> T {
    let u = (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64);
    range * T::lit(2.0 * u - 1.0)
}

/// Partition of unity glued random-feature approximant.
#[derive(Debug, Clone)]
pub struct FeatureModel<T> {
    partition: BoxPartition<T>,
    weights: FeatureWeights<T>,
    activation: Activation,
    pou_kind: PouKind,
}

impl<T: Real> FeatureModel<T> {
    pub fn new(
        partition: BoxPartition<T>,
        weights: FeatureWeights<T>,
        activation: Activation,
        pou_kind: PouKind,
    ) -> Result<Self> {
        if weights.boxes() != partition.len() || weights.dim() != partition.dim() {
            return Err(invalid_arg(format!(
                "weights shaped for {} boxes in dimension {}, partition has {} boxes in dimension {}",
                weights.boxes(),
                weights.dim(),
                partition.len(),
                partition.dim()
            )));
        }
        Ok(Self {
            partition,
            weights,
            activation,
            pou_kind,
        })
    }

    /// Builds a model on the uniform partition of `[lo, hi]` with freshly drawn weights.
    pub fn random(
        lo: Vec<T>,
        hi: Vec<T>,
        counts: Vec<usize>,
        per_box: usize,
        range: T,
        seed: u64,
        activation: Activation,
        pou_kind: PouKind,
    ) -> Result<Self> {
        let partition = BoxPartition::uniform(lo, hi, counts)?;
        let weights =
            FeatureWeights::generate(seed, partition.len(), per_box, partition.dim(), range)?;
        Self::new(partition, weights, activation, pou_kind)
    }

    pub fn partition(&self) -> &BoxPartition<T> {
        &self.partition
    }

    pub fn weights(&self) -> &FeatureWeights<T> {
        &self.weights
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn pou_kind(&self) -> PouKind {
        self.pou_kind
    }

    pub fn dim(&self) -> usize {
        self.partition.dim()
    }

    /// Number of coefficients `M * J`.
    pub fn n_columns(&self) -> usize {
        self.partition.len() * self.weights.per_box()
    }

    /// Value and gradient of the bare feature `phi_ij` (no partition weight).
    pub fn feature_eval(&self, i: usize, j: usize, y: &[T]) -> Result<(T, Vec<T>)> {
        if i >= self.partition.len() || j >= self.weights.per_box() {
            return Err(invalid_arg(format!("feature index ({i}, {j}) out of range")));
        }
        let bx = &self.partition.boxes()[i];
        let z = normalize_to_box(y, bx)?;
        let w = self.weights.weight(i, j);
        let a = w.iter().zip(&z).fold(self.weights.bias(i, j), |acc, (wk, zk)| acc + *wk * *zk);
        let (s, ds) = self.activation.eval(a);
        let grad = (0..z.len()).map(|k| ds * w[k] / bx.radius(k)).collect();
        Ok((s, grad))
    }

    /// Evaluates `sum_i psi_i(y) sum_j c_ij phi_ij(y)`.
    pub fn model_eval(&self, coeffs: &[T], y: &[T]) -> Result<T> {
        if coeffs.len() != self.n_columns() {
            return Err(invalid_arg(format!(
                "expected {} coefficients, got {}",
                self.n_columns(),
                coeffs.len()
            )));
        }
        if y.len() != self.dim() {
            return Err(invalid_arg("point dimension does not match model"));
        }
        let mut ev = self.evaluator();
        let mut vals = vec![T::zero(); self.n_columns()];
        ev.eval(y, None, &mut vals, None)?;
        Ok(vals.iter().zip(coeffs).map(|(v, c)| *v * *c).sum())
    }

    pub fn evaluator(&self) -> ColumnEvaluator<'_, T> {
        let d = self.dim();
        let max_count = self.partition.counts().iter().copied().max().unwrap_or(1);
        ColumnEvaluator {
            model: self,
            phi: vec![T::zero(); d * max_count],
            dphi: vec![T::zero(); d * max_count],
            z: vec![T::zero(); d],
            multi: vec![0; d],
        }
    }
}

/// Reusable scratch for evaluating every column `psi_i phi_ij` of a model at one point.
pub struct ColumnEvaluator<'a, T> {
    model: &'a FeatureModel<T>,
    // per-axis normalized PoU values and derivatives, laid out [axis][box along axis]
    phi: Vec<T>,
    dphi: Vec<T>,
    z: Vec<T>,
    multi: Vec<usize>,
}

impl<T: Real> ColumnEvaluator<'_, T> {
    /// Writes `psi_i(y) phi_ij(y)` into `vals` (length `M * J`) and, when `dir` is given,
    /// the directional derivative `dir . grad(psi_i phi_ij)(y)` into `ddir`.
    ///
    /// Uses the factorization of the normalized tensor-product weights into
    /// per-axis normalized profiles.
    pub fn eval(
        &mut self,
        y: &[T],
        dir: Option<&[T]>,
        vals: &mut [T],
        mut ddir: Option<&mut [T]>,
    ) -> Result<()> {
        let model = self.model;
        let part = &model.partition;
        let d = part.dim();
        let per_box = model.weights.per_box();
        if y.len() != d || vals.len() != model.n_columns() {
            return Err(invalid_arg("evaluation buffers do not match model shape"));
        }
        if let Some(dv) = dir {
            if dv.len() != d {
                return Err(invalid_arg("direction dimension does not match model"));
            }
            match ddir.as_deref() {
                Some(buf) if buf.len() == vals.len() => {}
                _ => return Err(invalid_arg("directional derivative buffer missing or mis-sized")),
            }
        }
        let stride = self.phi.len() / d;
        let kind = model.pou_kind;
        for k in 0..d {
            let count = part.counts()[k];
            let width = part.cell_width(k);
            let half = width * T::half();
            let mut sum = T::zero();
            let mut dsum = T::zero();
            for c in 0..count {
                let mid = part.lo()[k] + width * (T::from_usize(c).unwrap() + T::half());
                let z = (y[k] - mid) / half;
                let p = pou_univariate(kind, z);
                let dp = pou_univariate_derivative(kind, z) / half;
                self.phi[k * stride + c] = p;
                self.dphi[k * stride + c] = dp;
                sum += p;
                dsum += dp;
            }
            if sum <= T::zero() {
                return Err(Error::DegenerateCover {
                    point: y.iter().map(|v| v.as_f64()).collect(),
                });
            }
            for c in 0..count {
                let p = self.phi[k * stride + c];
                let dp = self.dphi[k * stride + c];
                self.phi[k * stride + c] = p / sum;
                self.dphi[k * stride + c] = (dp * sum - p * dsum) / (sum * sum);
            }
        }

        self.multi.iter_mut().for_each(|m| *m = 0);
        for (i, bx) in part.boxes().iter().enumerate() {
            let cols = i * per_box..(i + 1) * per_box;
            let mut psi = T::one();
            for k in 0..d {
                psi *= self.phi[k * stride + self.multi[k]];
            }
            let mut dpsi = T::zero();
            if let Some(dv) = dir {
                for k in 0..d {
                    if dv[k] == T::zero() {
                        continue;
                    }
                    let mut term = self.dphi[k * stride + self.multi[k]] * dv[k];
                    for l in 0..d {
                        if l != k {
                            term *= self.phi[l * stride + self.multi[l]];
                        }
                    }
                    dpsi += term;
                }
            }
            advance(&mut self.multi, part.counts());

            if psi == T::zero() && dpsi == T::zero() {
                vals[cols.clone()].iter_mut().for_each(|v| *v = T::zero());
                if let Some(buf) = ddir.as_deref_mut() {
                    buf[cols].iter_mut().for_each(|v| *v = T::zero());
                }
                continue;
            }
            for k in 0..d {
                self.z[k] = (y[k] - bx.center(k)) / bx.radius(k);
            }
            for j in 0..per_box {
                let w = model.weights.weight(i, j);
                let mut a = model.weights.bias(i, j);
                for k in 0..d {
                    a += w[k] * self.z[k];
                }
                let (s, ds) = model.activation.eval(a);
                vals[i * per_box + j] = psi * s;
                if let (Some(dv), Some(buf)) = (dir, ddir.as_deref_mut()) {
                    let mut da = T::zero();
                    for k in 0..d {
                        da += dv[k] * w[k] / bx.radius(k);
                    }
                    buf[i * per_box + j] = dpsi * s + psi * ds * da;
                }
            }
        }
        Ok(())
    }
}

fn advance(multi: &mut [usize], counts: &[usize]) {
    for k in (0..multi.len()).rev() {
        multi[k] += 1;
        if multi[k] < counts[k] {
            return;
        }
        multi[k] = 0;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn unit_box() -> Hyperbox<f64> {
        Hyperbox::new(vec![0.0], vec![1.0]).unwrap()
    }

    #[test]
    fn normalize_examples() {
        let bx = unit_box();
        assert_eq!(normalize_to_box(&[0.5], &bx).unwrap(), vec![0.0]);
        assert_eq!(normalize_to_box(&[0.0], &bx).unwrap(), vec![-1.0]);
        assert_eq!(normalize_to_box(&[1.0], &bx).unwrap(), vec![1.0]);
        assert_eq!(normalize_to_box(&[0.75], &bx).unwrap(), vec![0.5]);
        assert!(matches!(
            normalize_to_box(&[0.1, 0.2], &bx),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn box_rejects_inverted_bounds() {
        assert!(Hyperbox::new(vec![1.0], vec![0.0]).is_err());
        assert!(Hyperbox::<f64>::new(vec![], vec![]).is_err());
    }

    #[test]
    fn pou_profile_examples() {
        assert_eq!(pou_univariate(PouKind::PhiB, 0.0), 1.0);
        assert_abs_diff_eq!(pou_univariate(PouKind::PhiB, 1.0), 0.5, epsilon = 1e-15);
        assert_eq!(pou_univariate(PouKind::PhiB, 2.0), 0.0);
        assert_eq!(pou_univariate(PouKind::PhiA, 0.5), 1.0);
        assert_eq!(pou_univariate(PouKind::PhiA, 1.5), 0.0);
        // continuity at both blend edges
        assert_abs_diff_eq!(pou_univariate(PouKind::PhiB, 0.75 + 1e-12), 1.0, epsilon = 1e-9);
        assert_abs_diff_eq!(pou_univariate(PouKind::PhiB, 1.25 - 1e-12), 0.0, epsilon = 1e-9);
    }

    #[test]
    fn pou_derivative_takes_right_limit_at_kinks() {
        // at z = 3/4 the right limit is -pi cos(3 pi / 2) = 0, at z = -3/4 it is 0 too
        assert_abs_diff_eq!(pou_univariate_derivative(PouKind::PhiB, 0.75), 0.0, epsilon = 1e-12);
        // just inside the blend zone the derivative is -pi cos(2 pi z)
        let z = 1.0;
        assert_abs_diff_eq!(
            pou_univariate_derivative(PouKind::PhiB, z),
            -std::f64::consts::PI,
            epsilon = 1e-12
        );
        assert_eq!(pou_univariate_derivative(PouKind::PhiB, 1.25), 0.0);
        assert_eq!(pou_univariate_derivative(PouKind::PhiB, -1.0), std::f64::consts::PI);
    }

    #[test]
    fn single_box_partition_is_one() {
        let p = BoxPartition::uniform(vec![0.0, -1.0], vec![1.0, 1.0], vec![1, 1]).unwrap();
        for y in [[0.0, -1.0], [0.3, 0.2], [1.0, 1.0]] {
            assert_eq!(pou_tensor_normalized(&p, PouKind::PhiB, &y).unwrap(), vec![1.0]);
        }
    }

    #[test]
    fn flat_region_is_exclusive() {
        let p = BoxPartition::uniform(vec![0.0, -1.0], vec![1.0, 1.0], vec![2, 4]).unwrap();
        // center of box (1, 2): x in [0.5, 1], v in [0, 0.5]
        let w = pou_tensor_normalized(&p, PouKind::PhiB, &[0.75, 0.25]).unwrap();
        for (i, v) in w.iter().enumerate() {
            assert_eq!(*v, if i == 4 + 2 { 1.0 } else { 0.0 });
        }
    }

    #[test]
    fn degenerate_cover_is_reported() {
        let p = BoxPartition::uniform(vec![0.0], vec![1.0], vec![2]).unwrap();
        assert!(matches!(
            pou_tensor_normalized(&p, PouKind::PhiB, &[5.0]),
            Err(Error::DegenerateCover { .. })
        ));
    }

    #[test]
    fn partition_shares_faces() {
        let p = BoxPartition::uniform(vec![0.0, 0.0], vec![1.0, 3.0], vec![4, 3]).unwrap();
        assert_eq!(p.len(), 12);
        for i in 0..4 {
            for j in 0..2 {
                let a = &p.boxes()[i * 3 + j];
                let b = &p.boxes()[i * 3 + j + 1];
                assert_eq!(a.hi()[1], b.lo()[1]);
            }
        }
        assert_eq!(p.boxes()[11].hi(), &[1.0, 3.0]);
    }

    #[test]
    fn zero_weights_give_zero_feature() {
        let p = BoxPartition::uniform(vec![0.0], vec![1.0], vec![1]).unwrap();
        let mut wts = FeatureWeights::generate(1, 1, 1, 1, 1.0).unwrap();
        wts.w[0] = 0.0;
        wts.b[0] = 0.0;
        let m = FeatureModel::new(p, wts, Activation::Tanh, PouKind::PhiB).unwrap();
        let (v, g) = m.feature_eval(0, 0, &[0.3]).unwrap();
        assert_eq!(v, 0.0);
        assert_eq!(g, vec![0.0]);
        assert!(m.feature_eval(1, 0, &[0.3]).is_err());
        assert!(m.feature_eval(0, 1, &[0.3]).is_err());
    }

    #[test]
    fn sine_activation_peak() {
        let p = BoxPartition::uniform(vec![-1.0], vec![1.0], vec![1]).unwrap();
        let mut wts = FeatureWeights::generate(1, 1, 1, 1, 1.0).unwrap();
        wts.w[0] = 0.0;
        wts.b[0] = 0.5;
        let m = FeatureModel::new(p, wts, Activation::SinPi, PouKind::PhiB).unwrap();
        let (v, _) = m.feature_eval(0, 0, &[0.1]).unwrap();
        assert_abs_diff_eq!(v, 1.0, epsilon = 1e-15);
    }

    #[test]
    fn weights_respect_range_and_shape() {
        let w = FeatureWeights::<f64>::generate(7, 3, 5, 2, 0.5).unwrap();
        assert_eq!(w.all_weights().len(), 30);
        assert_eq!(w.all_biases().len(), 15);
        assert!(w.all_weights().iter().chain(w.all_biases()).all(|v| v.abs() <= 0.5));
        assert!(FeatureWeights::<f64>::generate(7, 0, 5, 2, 0.5).is_err());
        assert!(FeatureWeights::<f64>::generate(7, 1, 5, 2, -1.0).is_err());
    }

    #[test]
    fn model_eval_single_box() {
        let m = FeatureModel::random(vec![0.0], vec![1.0], vec![1], 1, 1.0, 3, Activation::Tanh, PouKind::PhiB)
            .unwrap();
        let y = [0.4];
        let (phi, _) = m.feature_eval(0, 0, &y).unwrap();
        assert_eq!(m.model_eval(&[2.5], &y).unwrap(), 2.5 * phi);
        assert_eq!(m.model_eval(&[0.0], &y).unwrap(), 0.0);
        assert!(m.model_eval(&[1.0, 2.0], &y).is_err());
    }

    #[test]
    fn model_rejects_mismatched_weights() {
        let p = BoxPartition::uniform(vec![0.0], vec![1.0], vec![2]).unwrap();
        let w = FeatureWeights::generate(1, 1, 4, 1, 1.0).unwrap();
        assert!(FeatureModel::new(p, w, Activation::Tanh, PouKind::PhiB).is_err());
    }

    #[test]
    fn kink_loci_of_dyadic_partition() {
        let p = BoxPartition::uniform(vec![0.0], vec![1.0], vec![2]).unwrap();
        let mut k = p.kink_loci(0);
        k.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let expect = [-0.0625, 0.0625, 0.4375, 0.4375, 0.5625, 0.5625, 0.9375, 1.0625];
        for (a, b) in k.iter().zip(expect) {
            assert_abs_diff_eq!(*a, b, epsilon = 1e-15);
        }
    }

    #[test]
    fn works_in_single_precision() {
        let m = FeatureModel::<f32>::random(
            vec![0.0, -1.0],
            vec![1.0, 1.0],
            vec![2, 2],
            4,
            1.0,
            11,
            Activation::Tanh,
            PouKind::PhiB,
        )
        .unwrap();
        let w = pou_tensor_normalized(m.partition(), PouKind::PhiB, &[0.45f32, 0.1]).unwrap();
        assert!((w.iter().sum::<f32>() - 1.0).abs() < 1e-6);
        let v = m.model_eval(&[1.0; 16], &[0.45, 0.1]).unwrap();
        assert!(v.is_finite());
    }
}
