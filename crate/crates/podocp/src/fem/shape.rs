//! Reference-element shape functions.
//!
//! Triangle: quadratic (six-node) and linear (three-node) Lagrange bases on
//! the reference triangle with vertices `(0,0), (1,0), (0,1)`.  Local node
//! order for the quadratic element: vertices 0, 1, 2, then edge midpoints
//! 3 = mid(0,1), 4 = mid(1,2), 5 = mid(2,0).
//!
//! Edge: the trace of the quadratic element on a straight edge, parametrized
//! by `t in [0, 1]` with nodes at `t = 0`, `t = 1`, `t = 1/2`.

/// Linear shape functions at a reference point.
#[inline]
pub fn p1_values(x: f64, y: f64) -> [f64; 3] {
    [1.0 - x - y, x, y]
}

/// Gradients of the linear shape functions (constant).
#[inline]
pub fn p1_grads() -> [[f64; 2]; 3] {
    [[-1.0, -1.0], [1.0, 0.0], [0.0, 1.0]]
}

/// Quadratic shape functions at a reference point.
#[inline]
pub fn p2_values(x: f64, y: f64) -> [f64; 6] {
    let l = [1.0 - x - y, x, y];
    [
        l[0] * (2.0 * l[0] - 1.0),
        l[1] * (2.0 * l[1] - 1.0),
        l[2] * (2.0 * l[2] - 1.0),
        4.0 * l[0] * l[1],
        4.0 * l[1] * l[2],
        4.0 * l[2] * l[0],
    ]
}

/// Reference gradients of the quadratic shape functions.
#[inline]
pub fn p2_grads(x: f64, y: f64) -> [[f64; 2]; 6] {
    let l = [1.0 - x - y, x, y];
    let dl = p1_grads();
    let mut g = [[0.0; 2]; 6];
    for i in 0..3 {
        let f = 4.0 * l[i] - 1.0;
        g[i] = [f * dl[i][0], f * dl[i][1]];
    }
    let pairs = [(0, 1), (1, 2), (2, 0)];
    for (k, (a, b)) in pairs.into_iter().enumerate() {
        g[3 + k] = [
            4.0 * (l[a] * dl[b][0] + l[b] * dl[a][0]),
            4.0 * (l[a] * dl[b][1] + l[b] * dl[a][1]),
        ];
    }
    g
}

/// Quadratic edge-trace shape functions: `[end a, end b, midpoint]`.
#[inline]
pub fn edge_p2_values(t: f64) -> [f64; 3] {
    [
        (1.0 - t) * (1.0 - 2.0 * t),
        t * (2.0 * t - 1.0),
        4.0 * t * (1.0 - t),
    ]
}

/// Parameter derivatives of the edge-trace shape functions.
#[inline]
pub fn edge_p2_derivs(t: f64) -> [f64; 3] {
    [4.0 * t - 3.0, 4.0 * t - 1.0, 4.0 - 8.0 * t]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn p2_is_nodal() {
        let nodes = [
            (0.0, 0.0),
            (1.0, 0.0),
            (0.0, 1.0),
            (0.5, 0.0),
            (0.5, 0.5),
            (0.0, 0.5),
        ];
        for (i, &(x, y)) in nodes.iter().enumerate() {
            let v = p2_values(x, y);
            for (j, &vj) in v.iter().enumerate() {
                let expect = if i == j { 1.0 } else { 0.0 };
                assert!((vj - expect).abs() < 1e-14, "N{j}({x},{y}) = {vj}");
            }
        }
    }

    #[test]
    fn partitions_of_unity() {
        for &(x, y) in &[(0.3, 0.2), (0.1, 0.6), (0.25, 0.25)] {
            let s2: f64 = p2_values(x, y).iter().sum();
            let s1: f64 = p1_values(x, y).iter().sum();
            assert!((s2 - 1.0).abs() < 1e-14);
            assert!((s1 - 1.0).abs() < 1e-14);
            let g = p2_grads(x, y);
            for d in 0..2 {
                let gs: f64 = g.iter().map(|gi| gi[d]).sum();
                assert!(gs.abs() < 1e-14);
            }
        }
    }

    #[test]
    fn edge_trace_is_nodal_and_quadratic() {
        for (i, t) in [0.0, 1.0, 0.5].into_iter().enumerate() {
            let v = edge_p2_values(t);
            for (j, &vj) in v.iter().enumerate() {
                let expect = if i == j { 1.0 } else { 0.0 };
                assert!((vj - expect).abs() < 1e-14);
            }
        }
        // Derivative reproduces d/dt of t^2 at a generic point.
        let t = 0.3;
        let coeffs = [0.0, 1.0, 0.25]; // nodal values of t^2
        let d: f64 = edge_p2_derivs(t)
            .iter()
            .zip(&coeffs)
            .map(|(d, c)| d * c)
            .sum();
        assert!((d - 2.0 * t).abs() < 1e-14);
    }
}
