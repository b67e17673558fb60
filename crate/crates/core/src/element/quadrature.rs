//! Gauss–Legendre rules on boxes and collapsed (Duffy) rules on triangles.

use std::f64::consts::PI;

/// Default total-degree exactness used for every tensor and coefficient integral.
pub const DEFAULT_ORDER: usize = 8;

/// Gauss–Legendre nodes and weights on [-1, 1] with `m` points (exact to degree 2m−1).
pub fn gauss_legendre(m: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(m >= 1, "need at least one Gauss point");
    let mut nodes = vec![0.0; m];
    let mut weights = vec![0.0; m];
    for i in 0..m.div_ceil(2) {
        let mut x = (PI * (i as f64 + 0.75) / (m as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(m, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre_with_derivative(m, x);
        dp = if d != 0.0 { d } else { dp };
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[m - 1 - i] = x;
        weights[i] = w;
        weights[m - 1 - i] = w;
    }
    if m % 2 == 1 {
        nodes[m / 2] = 0.0;
    }
    (nodes, weights)
}

fn legendre_with_derivative(m: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if m == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=m {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = m as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Points per axis for a box rule exact to total degree `order`.
pub fn box_points(order: usize) -> usize {
    (order + 2) / 2
}

/// Points per axis for the collapsed triangle rule exact to total degree `order`
/// (the collapse adds one degree in the radial direction).
pub fn triangle_points(order: usize) -> usize {
    (order + 3) / 2
}

/// Gauss–Legendre rule mapped to [0, 1].
pub fn unit_interval_rule(m: usize) -> Vec<(f64, f64)> {
    let (x, w) = gauss_legendre(m);
    x.iter()
        .zip(&w)
        .map(|(&xi, &wi)| (0.5 * (xi + 1.0), 0.5 * wi))
        .collect()
}

/// Tensor-product rule on the box [lo, hi].
pub fn box_rule(lo: &[f64], hi: &[f64], order: usize) -> Vec<(Vec<f64>, f64)> {
    let d = lo.len();
    let base = unit_interval_rule(box_points(order));
    let m = base.len();
    let total = m.pow(d as u32);
    let mut out = Vec::with_capacity(total);
    let mut idx = vec![0usize; d];
    for _ in 0..total {
        let mut point = Vec::with_capacity(d);
        let mut w = 1.0;
        for k in 0..d {
            let (u, wu) = base[idx[k]];
            let len = hi[k] - lo[k];
            point.push(lo[k] + u * len);
            w *= wu * len;
        }
        out.push((point, w));
        for i in idx.iter_mut() {
            *i += 1;
            if *i < m {
                break;
            }
            *i = 0;
        }
    }
    out
}

/// Collapsed rule on the triangle (v0, v1, v2):
/// x = v0 + u (v1 − v0) + u w (v2 − v1), Jacobian 2·area·u.
pub fn triangle_rule(v: &[[f64; 2]; 3], order: usize) -> Vec<(Vec<f64>, f64)> {
    let base = unit_interval_rule(triangle_points(order));
    let e1 = [v[1][0] - v[0][0], v[1][1] - v[0][1]];
    let e2 = [v[2][0] - v[1][0], v[2][1] - v[1][1]];
    let jac = (e1[0] * e2[1] - e1[1] * e2[0]).abs();
    let mut out = Vec::with_capacity(base.len() * base.len());
    for &(u, wu) in &base {
        for &(w, ww) in &base {
            let x = v[0][0] + u * e1[0] + u * w * e2[0];
            let y = v[0][1] + u * e1[1] + u * w * e2[1];
            out.push((vec![x, y], wu * ww * jac * u));
        }
    }
    out
}
