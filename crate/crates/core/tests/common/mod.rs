//! Test oracles shared between integration test targets.

use quadmap::map::MapWithHoles;

/// Cycles of a permutation given as an array.
pub fn cycles(p: &[usize]) -> Vec<Vec<usize>> {
    let mut seen = vec![false; p.len()];
    let mut out = Vec::new();
    for s in 0..p.len() {
        if seen[s] {
            continue;
        }
        let mut c = Vec::new();
        let mut x = s;
        while !seen[x] {
            seen[x] = true;
            c.push(x);
            x = p[x];
        }
        out.push(c);
    }
    out
}

/// Gaussian partition function by tensor trapezoid quadrature, with the
/// Hamiltonian read directly off the permutations: every edge contributes
/// `(β/2)(σ_a − σ_b)²` between the faces on its two sides, a dart of the
/// outer face carrying the boundary value of its position.
pub fn gaussian_z_by_quadrature(m: &MapWithHoles, b: &[f64], beta: f64) -> f64 {
    let base = m.base();
    let n = base.num_darts();
    let outer = m.root_face_darts();
    #[derive(Clone, Copy)]
    enum Side {
        Inner(usize),
        Outer(usize),
    }
    let mut side = vec![Side::Outer(0); n];
    for (k, &d) in outer.iter().enumerate() {
        side[d] = Side::Outer(k);
    }
    let phi = base.phi_vec();
    let mut inner = 0;
    for c in cycles(&phi) {
        if c.contains(&outer[0]) {
            continue;
        }
        for &d in &c {
            side[d] = Side::Inner(inner);
        }
        inner += 1;
    }
    let edges: Vec<(Side, Side)> = (0..n).filter(|&d| d < base.alpha(d)).map(|d| (side[d], side[base.alpha(d)])).collect();
    let value = |s: Side, x: &[f64]| match s {
        Side::Inner(i) => x[i],
        Side::Outer(k) => b[k],
    };
    let h = 0.1;
    let half = 90;
    let grid: Vec<f64> = (-half..=half).map(|k| k as f64 * h).collect();
    let mut x = vec![0.0; inner];
    let mut total = 0.0;
    let count = grid.len().pow(inner as u32);
    for mut idx in 0..count {
        for xi in x.iter_mut() {
            *xi = grid[idx % grid.len()];
            idx /= grid.len();
        }
        let energy: f64 = edges.iter().map(|&(p, q)| 0.5 * beta * (value(p, &x) - value(q, &x)).powi(2)).sum();
        total += (-energy).exp();
    }
    total * h.powi(inner as i32)
}
