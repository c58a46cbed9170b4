//! Gauss-Legendre rules and Legendre polynomial evaluation.

use std::f64::consts::PI;

/// Nodes and weights of the `k`-point Gauss-Legendre rule on `[-1, 1]`,
/// nodes ascending. Newton iteration on the three-term recurrence.
pub fn gauss_legendre(k: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(k >= 1, "a Gauss rule needs at least one node");
    let mut nodes = vec![0.0; k];
    let mut weights = vec![0.0; k];
    let kf = k as f64;
    for i in 0..k.div_ceil(2) {
        // Tricomi's initial guess for the i-th largest root.
        let mut x = (PI * (i as f64 + 0.75) / (kf + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(k, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre_with_derivative(k, x);
        dp = if d != 0.0 { d } else { dp };
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[k - 1 - i] = x;
        nodes[i] = -x;
        weights[k - 1 - i] = w;
        weights[i] = w;
    }
    (nodes, weights)
}

/// `(P_k(x), P_k'(x))`.
fn legendre_with_derivative(k: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if k == 0 {
        return (1.0, 0.0);
    }
    for j in 2..=k {
        let jf = j as f64;
        let p2 = ((2.0 * jf - 1.0) * x * p1 - (jf - 1.0) * p0) / jf;
        p0 = p1;
        p1 = p2;
    }
    let d = k as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// `P_0(t), ..., P_deg(t)` into `out`.
pub fn legendre_values(t: f64, deg: usize, out: &mut Vec<f64>) {
    out.clear();
    out.push(1.0);
    if deg == 0 {
        return;
    }
    out.push(t);
    for j in 2..=deg {
        let jf = j as f64;
        let v = ((2.0 * jf - 1.0) * t * out[j - 1] - (jf - 1.0) * out[j - 2]) / jf;
        out.push(v);
    }
}

/// Gauss-Legendre rule mapped to `[a, b]`.
pub fn mapped_rule(k: usize, a: f64, b: f64) -> (Vec<f64>, Vec<f64>) {
    let (x, w) = gauss_legendre(k);
    let c = 0.5 * (a + b);
    let r = 0.5 * (b - a);
    (
        x.iter().map(|t| c + r * t).collect(),
        w.iter().map(|v| v * r).collect(),
    )
}
