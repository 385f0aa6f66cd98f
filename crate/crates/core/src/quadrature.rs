//! Velocity-space quadrature: Gauss-Legendre rules, the normalized angular
//! average and the collision operator built on it.

use crate::error::{invalid_arg, Error, Result};
use crate::scalar::Real;

/// Gauss-Legendre nodes (ascending) and weights on `[-1, 1]`.
pub fn gauss_legendre<T: Real>(n: usize) -> Result<(Vec<T>, Vec<T>)> {
    if !(1..=128).contains(&n) {
        return Err(invalid_arg(format!("Gauss-Legendre order {n} outside 1..=128")));
    }
    // Newton iteration on P_n in f64, seeded with the Tricomi approximation.
    let mut nodes = vec![0.0f64; n];
    let mut weights = vec![0.0f64; n];
    let nf = n as f64;
    for i in 0..n.div_ceil(2) {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre_with_derivative(n, x);
        if d != 0.0 {
            dp = d;
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    Ok((
        nodes.into_iter().map(T::lit).collect(),
        weights.into_iter().map(T::lit).collect(),
    ))
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Normalized quadrature over the velocity sphere: `<1> = 1`.
///
/// In one dimension the nodes are velocities `v in [-1, 1]` and `<h> = 1/2 int h dv`.
/// In two dimensions the nodes are angles `alpha in [0, 2 pi]` and `<h> = 1/(2 pi) int h d alpha`.
#[derive(Debug, Clone, PartialEq)]
pub struct AngularRule<T> {
    dim: usize,
    nodes: Vec<T>,
    weights: Vec<T>,
}

impl<T: Real> AngularRule<T> {
    pub fn new(dimension: usize, n: usize) -> Result<Self> {
        if n < 2 {
            return Err(invalid_arg("angular rule needs at least two nodes"));
        }
        let (x, w) = gauss_legendre::<T>(n)?;
        match dimension {
            1 => Ok(Self {
                dim: 1,
                nodes: x,
                weights: w.into_iter().map(|wi| wi * T::half()).collect(),
            }),
            2 => Ok(Self {
                dim: 2,
                nodes: x.into_iter().map(|xi| (xi + T::one()) * T::pi()).collect(),
                weights: w.into_iter().map(|wi| wi * T::half()).collect(),
            }),
            d => Err(invalid_arg(format!("unsupported velocity dimension {d}"))),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[T] {
        &self.nodes
    }

    pub fn weights(&self) -> &[T] {
        &self.weights
    }

    /// Unit direction of node `q` padded to two components.
    pub fn direction(&self, q: usize) -> [T; 2] {
        direction(self.dim, self.nodes[q])
    }

    pub fn average(&self, samples: &[T]) -> Result<T> {
        if samples.len() != self.len() {
            return Err(invalid_arg(format!(
                "expected {} samples, got {}",
                self.len(),
                samples.len()
            )));
        }
        Ok(self.weights.iter().zip(samples).map(|(w, h)| *w * *h).sum())
    }

    /// `(L f)(v_q) = sum_q' w_q' k(v_q, v_q') (f_q' - f_q)`; isotropic when `kernel` is `None`.
    pub fn apply_collision(
        &self,
        samples: &[T],
        kernel: Option<&dyn Fn(T, T) -> T>,
    ) -> Result<Vec<T>> {
        let mean = self.average(samples)?;
        match kernel {
            None => Ok(samples.iter().map(|f| mean - *f).collect()),
            Some(k) => {
                let mut out = Vec::with_capacity(self.len());
                for (q, fq) in samples.iter().enumerate() {
                    let mut acc = T::zero();
                    for (p, fp) in samples.iter().enumerate() {
                        let kv = k(self.nodes[q], self.nodes[p]);
                        if kv < T::zero() {
                            return Err(Error::InvalidKernel {
                                v: self.nodes[q].as_f64(),
                                w: self.nodes[p].as_f64(),
                                value: kv.as_f64(),
                            });
                        }
                        acc += self.weights[p] * kv * (*fp - *fq);
                    }
                    out.push(acc);
                }
                Ok(out)
            }
        }
    }
}

/// Velocity direction for a velocity coordinate: `[v, 0]` in 1D, `[cos a, sin a]` in 2D.
#[inline]
pub fn direction<T: Real>(dim: usize, coord: T) -> [T; 2] {
    if dim == 1 {
        [coord, T::zero()]
    } else {
        let (s, c) = coord.sin_cos();
        [c, s]
    }
}
