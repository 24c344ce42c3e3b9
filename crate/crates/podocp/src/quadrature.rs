//! Numerical quadrature on the reference interval and reference triangle.
//!
//! Interval rules are Gauss-Legendre, computed by Newton iteration on the
//! Legendre recurrence.  Triangle rules are conical products obtained by
//! collapsing a tensor Gauss grid on the unit square onto the reference
//! triangle `{(x, y) : x, y >= 0, x + y <= 1}`; an `n x n` grid integrates
//! bivariate polynomials of total degree `2n - 2` exactly (one order is lost
//! to the Jacobian of the collapse).  All weights are positive.

/// One quadrature point on the reference triangle: coordinates and weight.
/// Weights sum to the reference area `1/2`.
#[derive(Debug, Clone, Copy)]
pub struct TriPoint {
    pub x: f64,
    pub y: f64,
    pub w: f64,
}

/// Gauss-Legendre nodes and weights on `[-1, 1]`.
fn gauss_legendre(n: usize) -> Vec<(f64, f64)> {
    assert!(n >= 1);
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        // Chebyshev-based initial guess, then Newton on P_n.
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        for _ in 0..100 {
            // Evaluate P_n and P_n' by the three-term recurrence.
            let mut p0 = 1.0;
            let mut p1 = x;
            for k in 2..=n {
                let kf = k as f64;
                let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
                p0 = p1;
                p1 = p2;
            }
            let pn = if n == 1 { p1 } else { p1 };
            let dpn = if n == 1 {
                1.0
            } else {
                (n as f64) * (x * p1 - p0) / (x * x - 1.0)
            };
            let dx = pn / dpn;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        // Recompute the derivative at the converged node for the weight.
        let mut p0 = 1.0;
        let mut p1 = x;
        for k in 2..=n {
            let kf = k as f64;
            let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
            p0 = p1;
            p1 = p2;
        }
        let dpn = if n == 1 {
            1.0
        } else {
            (n as f64) * (x * p1 - p0) / (x * x - 1.0)
        };
        let w = 2.0 / ((1.0 - x * x) * dpn * dpn);
        out.push((x, w));
    }
    // Newton from the Chebyshev guesses walks right-to-left; sort ascending.
    out.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    out
}

/// Gauss-Legendre rule mapped to `[0, 1]`; weights sum to one.
pub fn edge_rule(n: usize) -> Vec<(f64, f64)> {
    gauss_legendre(n)
        .into_iter()
        .map(|(x, w)| (0.5 * (x + 1.0), 0.5 * w))
        .collect()
}

/// Conical-product rule on the reference triangle, exact for total degree
/// `2n - 2`.
pub fn triangle_rule(n: usize) -> Vec<TriPoint> {
    let gl = edge_rule(n);
    let mut out = Vec::with_capacity(n * n);
    for &(u, wu) in &gl {
        for &(v, wv) in &gl {
            // Collapse map: x = u, y = v (1 - u), Jacobian (1 - u).
            out.push(TriPoint {
                x: u,
                y: v * (1.0 - u),
                w: wu * wv * (1.0 - u),
            });
        }
    }
    out
}

/// Rule exact for all forms assembled in this crate (total degree <= 6:
/// quadratic velocity times quadratic gradient times quadratic velocity
/// appears in the convection trilinear form with total degree five; degree
/// six covers it with margin).
pub fn triangle_rule_default() -> Vec<TriPoint> {
    triangle_rule(4)
}

/// High-order verification rule (total degree 12) used by test oracles.
pub fn triangle_rule_fine() -> Vec<TriPoint> {
    triangle_rule(7)
}

/// Default edge rule (degree 7), exact for traces of all assembled forms.
pub fn edge_rule_default() -> Vec<(f64, f64)> {
    edge_rule(4)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tri_monomial_exact(p: u32, q: u32) -> f64 {
        // Integral of x^p y^q over the reference triangle: p! q! / (p+q+2)!.
        let fact = |k: u32| (1..=k).map(|v| v as f64).product::<f64>().max(1.0);
        fact(p) * fact(q) / fact(p + q + 2)
    }

    #[test]
    fn edge_rule_integrates_polynomials() {
        for n in 1..=6 {
            let rule = edge_rule(n);
            let wsum: f64 = rule.iter().map(|&(_, w)| w).sum();
            assert!((wsum - 1.0).abs() < 1e-14, "weights sum to one");
            for d in 0..=(2 * n - 1) as u32 {
                let num: f64 = rule.iter().map(|&(t, w)| w * t.powi(d as i32)).sum();
                let exact = 1.0 / (d as f64 + 1.0);
                assert!(
                    (num - exact).abs() < 1e-13,
                    "n = {n}, degree {d}: {num} vs {exact}"
                );
            }
        }
    }

    #[test]
    fn triangle_rule_integrates_polynomials() {
        for n in [2usize, 4, 7] {
            let rule = triangle_rule(n);
            let max_deg = (2 * n - 2) as u32;
            assert!(rule.iter().all(|p| p.w > 0.0), "positive weights");
            for p in 0..=max_deg {
                for q in 0..=(max_deg - p) {
                    let num: f64 = rule
                        .iter()
                        .map(|tp| tp.w * tp.x.powi(p as i32) * tp.y.powi(q as i32))
                        .sum();
                    let exact = tri_monomial_exact(p, q);
                    assert!(
                        (num - exact).abs() < 1e-13 * exact.max(1.0),
                        "n = {n}, x^{p} y^{q}: {num} vs {exact}"
                    );
                }
            }
        }
    }
}
