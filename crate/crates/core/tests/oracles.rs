//! Independent oracles for exact quantities.

use quadmap::census::{generate_all, CensusTable};
use quadmap::decorated::{partition_decorated, BoundaryCondition, DecoratedParams, SpinMeasure};

mod common;

use common::{cycles, gaussian_z_by_quadrature};

/// All permutations of `0..n` in lexicographic order.
fn permutations(n: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut p: Vec<usize> = (0..n).collect();
    loop {
        out.push(p.clone());
        let Some(i) = (0..n.saturating_sub(1)).rev().find(|&i| p[i] < p[i + 1]) else { break };
        let j = (i + 1..n).rev().find(|&j| p[j] > p[i]).unwrap();
        p.swap(i, j);
        p[i + 1..].reverse();
    }
    out
}

/// All fixed-point-free involutions of `0..n`.
fn matchings(n: usize) -> Vec<Vec<usize>> {
    fn rec(a: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        let Some(i) = a.iter().position(|&x| x == usize::MAX) else {
            out.push(a.clone());
            return;
        };
        for j in i + 1..a.len() {
            if a[j] == usize::MAX {
                a[i] = j;
                a[j] = i;
                rec(a, out);
                a[i] = usize::MAX;
                a[j] = usize::MAX;
            }
        }
    }
    let mut out = Vec::new();
    rec(&mut vec![usize::MAX; n], &mut out);
    out
}

fn transitive(a: &[usize], b: &[usize]) -> bool {
    let mut seen = vec![false; a.len()];
    let mut stack = vec![0];
    seen[0] = true;
    while let Some(x) = stack.pop() {
        for y in [a[x], b[x]] {
            if !seen[y] {
                seen[y] = true;
                stack.push(y);
            }
        }
    }
    seen.iter().all(|&s| s)
}

/// Rooted planar quadrangulations with semi-perimeter `ell` and `f` inner
/// faces, counted as labelled (edge involution, face permutation) pairs with
/// dart 0 on the outer face, divided by the `(n−1)!` relabellings fixing 0.
fn brute_force_count(ell: usize, f: usize) -> u64 {
    let n = 2 * (2 * f + ell);
    let perms = permutations(n);
    let mut labelled = 0u64;
    for alpha in matchings(n) {
        for phi in &perms {
            let faces = cycles(phi);
            if faces.len() != f + 1 {
                continue;
            }
            if !faces.iter().all(|c| if c.contains(&0) { c.len() == 2 * ell } else { c.len() == 4 }) {
                continue;
            }
            if !transitive(&alpha, phi) {
                continue;
            }
            // Vertices are the cycles of phi ∘ alpha.
            let sigma: Vec<usize> = (0..n).map(|d| phi[alpha[d]]).collect();
            let v = cycles(&sigma).len();
            if v + f + 1 == n / 2 + 2 {
                labelled += 1;
            }
        }
    }
    let fact: u64 = (1..n as u64).product();
    assert_eq!(labelled % fact, 0);
    labelled / fact
}

#[test]
fn census_matches_brute_force_enumeration() {
    let t = CensusTable::new(4, 2);
    for (ell, f) in [(1, 0), (1, 1), (2, 0), (2, 1), (3, 0), (4, 0)] {
        let brute = brute_force_count(ell, f);
        assert_eq!(t.count(ell, f).unwrap().to_string(), brute.to_string(), "N({ell},{f})");
        assert_eq!(generate_all(ell, f).unwrap().len() as u64, brute);
    }
}

#[test]
fn gaussian_partition_matches_quadrature() {
    let cases: [(usize, &[f64]); 3] = [(1, &[0.3, -0.7]), (2, &[0.5, -0.2, 1.0, 0.0]), (3, &[0.1, 0.4, -0.6, 0.9, -0.3, 0.2])];
    for (ell, b) in cases {
        for f in 0..=(3usize).min((8 - ell) / 2) {
            let maps = generate_all(ell, f).unwrap();
            // Three-face quadrature is costly; a fixed stride keeps coverage across the class.
            let stride = if f == 3 { 7 } else { 1 };
            for m in maps.iter().step_by(stride) {
                for beta in [0.7, 1.3] {
                    let params = DecoratedParams { beta, mu: SpinMeasure::Gaussian, ..DecoratedParams::default() };
                    let bc = BoundaryCondition(b.to_vec());
                    let z = partition_decorated(m, &bc, &params).unwrap();
                    let oracle = gaussian_z_by_quadrature(m, b, beta);
                    assert!(((z - oracle) / oracle).abs() < 1e-4, "ell {ell} f {f} beta {beta}: {z} vs {oracle}");
                }
            }
        }
    }
}
