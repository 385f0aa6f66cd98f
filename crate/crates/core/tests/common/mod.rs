//! Independent oracles shared by the integration tests.
#![allow(dead_code)]

use aprfm::basis::{pou_univariate, pou_univariate_derivative};
use aprfm::collocation::CollocationSet;
use aprfm::quadrature::direction;
use aprfm::{AngularRule64, FeatureModel64, ProblemSpec64};

/// Column values `psi_i phi_ij` and their full gradients at `y`, built from the
/// raw per-box profiles with the plain quotient rule.
pub fn oracle_columns(model: &FeatureModel64, y: &[f64]) -> (Vec<f64>, Vec<Vec<f64>>) {
    let part = model.partition();
    let d = y.len();
    let kind = model.pou_kind();
    let boxes = part.boxes();
    // raw_i = prod_k u(z_ik), grad_k raw_i = u'(z_ik) / r_ik * prod_{l != k} u(z_il)
    let mut raw = Vec::with_capacity(boxes.len());
    let mut draw = Vec::with_capacity(boxes.len());
    for bx in boxes {
        let z: Vec<f64> = (0..d).map(|k| (y[k] - bx.center(k)) / bx.radius(k)).collect();
        let u: Vec<f64> = z.iter().map(|&t| pou_univariate(kind, t)).collect();
        let du: Vec<f64> = (0..d).map(|k| pou_univariate_derivative(kind, z[k]) / bx.radius(k)).collect();
        raw.push(u.iter().product::<f64>());
        draw.push(
            (0..d)
                .map(|k| (0..d).map(|l| if l == k { du[l] } else { u[l] }).product::<f64>())
                .collect::<Vec<f64>>(),
        );
    }
    let total: f64 = raw.iter().sum();
    let dtotal: Vec<f64> = (0..d).map(|k| draw.iter().map(|g| g[k]).sum()).collect();
    let per_box = model.weights().per_box();
    let mut vals = Vec::with_capacity(model.n_columns());
    let mut grads = vec![Vec::with_capacity(model.n_columns()); d];
    for i in 0..boxes.len() {
        let psi = raw[i] / total;
        let dpsi: Vec<f64> = (0..d).map(|k| (draw[i][k] * total - raw[i] * dtotal[k]) / (total * total)).collect();
        for j in 0..per_box {
            let (phi, dphi) = model.feature_eval(i, j, y).unwrap();
            vals.push(psi * phi);
            for k in 0..d {
                grads[k].push(psi * dphi[k] + phi * dpsi[k]);
            }
        }
    }
    (vals, grads)
}

/// Interior rows of the vanishing-`eps` micro-macro system, assembled point by point:
/// macro `[sigma_a psi phi^rho | <v . grad_x g-columns>]`,
/// micro `[v . grad rho-columns | -sigma_s (<g-columns> - g-columns)]`.
pub fn limit_interior_rows(
    spec: &ProblemSpec64,
    rho: &FeatureModel64,
    g: &FeatureModel64,
    colloc: &CollocationSet<f64>,
    rule: &AngularRule64,
) -> Vec<f64> {
    let d = spec.spatial_dim();
    let (zr, zg) = (rho.n_columns(), g.n_columns());
    let mut out = Vec::with_capacity(2 * colloc.n_int() * (zr + zg));
    for p in &colloc.interior {
        let x = &p.x[..d];
        let sa = (spec.sigma_a)(x);
        let ss = (spec.sigma_s)(x);
        let (rv, rg) = oracle_columns(rho, x);
        let mut avg_g = vec![0.0; zg];
        let mut avg_flux = vec![0.0; zg];
        for q in 0..rule.len() {
            let vq = rule.nodes()[q];
            let wq = rule.weights()[q];
            let mut y = x.to_vec();
            y.push(vq);
            let (gv, gg) = oracle_columns(g, &y);
            let dir = direction(d, vq);
            for c in 0..zg {
                avg_g[c] += wq * gv[c];
                avg_flux[c] += wq * (0..d).map(|k| dir[k] * gg[k][c]).sum::<f64>();
            }
        }
        let mut y = x.to_vec();
        y.push(p.v);
        let (gv, _) = oracle_columns(g, &y);
        let dir = direction(d, p.v);
        // macro
        out.extend(rv.iter().map(|v| sa * v));
        out.extend_from_slice(&avg_flux);
        // micro
        out.extend((0..zr).map(|c| (0..d).map(|k| dir[k] * rg[k][c]).sum::<f64>()));
        out.extend((0..zg).map(|c| -ss * (avg_g[c] - gv[c])));
    }
    out
}

pub fn rel_frobenius(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
    let den: f64 = b.iter().map(|y| y * y).sum();
    (num / den).sqrt()
}

/// Full-rank least squares through the Householder QR of `nalgebra`.
pub fn qr_solve(rows: usize, cols: usize, a: &[f64], b: &[f64]) -> Vec<f64> {
    let m = nalgebra::DMatrix::from_row_slice(rows, cols, a);
    let qr = m.qr();
    let qtb = qr.q().transpose() * nalgebra::DVector::from_column_slice(b);
    qr.r().solve_upper_triangular(&qtb).unwrap().iter().copied().collect()
}

/// Exact density and its gradient for the problems with closed-form solutions.
pub fn exact_rho_and_grad(id: aprfm::ProblemId, x: &[f64]) -> (f64, [f64; 2]) {
    use aprfm::ProblemId::*;
    match id {
        Ex1 => (1.0 - x[0], [-1.0, 0.0]),
        Ex4 | Ex6 => {
            let e = (-x[0] - x[1]).exp();
            (e, [-e, -e])
        }
        _ => panic!("no closed form for {id}"),
    }
}
