//! Gauss–Legendre rules and the `ν`-quadrature used for the long-range
//! wave profiles.

use std::f64::consts::PI;

use crate::error::{Error, Result};

/// Gauss–Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            let p = if n == 0 { 1.0 } else { p1 };
            let pm1 = if n <= 1 { 1.0 } else { p0 };
            dp = n as f64 * (x * p - pm1) / (x * x - 1.0);
            let dx = p / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

/// Composite Gauss–Legendre rule with `panels` equal panels of `order` nodes on `[a, b]`.
pub fn composite_rule(a: f64, b: f64, panels: usize, order: usize) -> Vec<(f64, f64)> {
    let (x, w) = gauss_legendre(order);
    let h = (b - a) / panels as f64;
    let mut out = Vec::with_capacity(panels * order);
    for p in 0..panels {
        let lo = a + p as f64 * h;
        for (xi, wi) in x.iter().zip(&w) {
            out.push((lo + 0.5 * h * (xi + 1.0), 0.5 * h * wi));
        }
    }
    out
}

fn panel_layout(node_count: usize) -> (usize, usize) {
    for order in [16, 8] {
        if node_count % order == 0 {
            return (node_count / order, order);
        }
    }
    (1, node_count)
}

/// Nodes `(ν, weight)` for `∫_1^{ν_max} f(ν) dν`, composite Gauss–Legendre in
/// `ln ν`. An infinite `nu_max` splits the nodes between `[1, 64]` in `ln ν`
/// and `[64, ∞)` in `u = 64/ν`.
pub fn nu_quadrature(nu_max: f64, node_count: usize) -> Result<Vec<(f64, f64)>> {
    if nu_max.is_nan() || nu_max < 4.0 {
        return Err(Error::Domain(format!("nu_max must be >= 4, got {nu_max}")));
    }
    if node_count < 64 {
        return Err(Error::Domain(format!(
            "node_count must be >= 64, got {node_count}"
        )));
    }
    if nu_max.is_finite() {
        let (panels, order) = panel_layout(node_count);
        return Ok(composite_rule(0.0, nu_max.ln(), panels, order)
            .into_iter()
            .map(|(s, w)| {
                let nu = s.exp();
                (nu, w * nu)
            })
            .collect());
    }
    let split = 64.0_f64;
    let head = node_count * 3 / 4;
    let (hp, ho) = panel_layout(head);
    let (tp, to) = panel_layout(node_count - head);
    let mut nodes: Vec<(f64, f64)> = composite_rule(0.0, split.ln(), hp, ho)
        .into_iter()
        .map(|(s, w)| {
            let nu = s.exp();
            (nu, w * nu)
        })
        .collect();
    nodes.extend(composite_rule(0.0, 1.0, tp, to).into_iter().map(|(u, w)| {
        let nu = split / u;
        (nu, w * split / (u * u))
    }));
    Ok(nodes)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn legendre_integrates_polynomials_exactly() {
        let (x, w) = gauss_legendre(10);
        for deg in 0..20 {
            let got: f64 = x.iter().zip(&w).map(|(xi, wi)| wi * xi.powi(deg)).sum();
            let exact = if deg % 2 == 1 { 0.0 } else { 2.0 / (deg + 1) as f64 };
            assert!((got - exact).abs() < 1e-14, "degree {deg}");
        }
    }

    #[test]
    fn nu_rule_integrates_power_laws() {
        let q = nu_quadrature(64.0, 256).unwrap();
        let got: f64 = q.iter().map(|(nu, w)| w * nu.powi(-3)).sum();
        let exact = 0.5 * (1.0 - 64.0_f64.powi(-2));
        assert!((got - exact).abs() < 1e-14);
        let inf = nu_quadrature(f64::INFINITY, 256).unwrap();
        let got: f64 = inf.iter().map(|(nu, w)| w * nu.powi(-2)).sum();
        assert!((got - 1.0).abs() < 1e-13);
    }

    #[test]
    fn preconditions() {
        assert!(nu_quadrature(2.0, 256).is_err());
        assert!(nu_quadrature(64.0, 32).is_err());
    }
}
