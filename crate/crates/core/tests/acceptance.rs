//! Acceptance suite. Each criterion is one test that prints a single
//! `criterion N: PASS|FAIL ...` line to standard error (written directly, so
//! it shows up even when test output is captured) and then asserts.

use std::io::Write;
use std::time::Instant;

use quadmap::boltzmann::{decomposition_check, Boltzmann, BoltzmannParams, UniformSampler};
use quadmap::census::{generate_all, CensusTable};
use quadmap::decorated::{face_adjacency, gibbs_ratio_check, partition_decorated, BoundaryCondition, DecoratedParams, SpinMeasure, decorated_weak_markov_test};
use quadmap::map::{canonical_code, is_submap};
use quadmap::markov::{
    counterexample_branches, rerooting_invariance_check, single_type1, stopping_map_q, strong_markov_test, weak_markov_test, FillReference, FirstType2, PrefixRule,
    StoppingMapQ, StoppingRule,
};
use quadmap::metric::{bridge_decompose_check, bridge_sample, mid_edge_markov_test, mid_edge_null_test, p3_shape_test, McmcConfig, MetricParams, DEFAULT_EPSILON};
use quadmap::stats::{chi_square_gof, independence_test, ks_one_sample, ks_two_sample, ks_uniform, two_sample_chi_square, variance};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

mod common;

const ALPHA: f64 = 0.01;
const BATTERY_SEEDS: std::ops::RangeInclusive<u64> = 1..=20;
const MID_EDGE_SEEDS: std::ops::RangeInclusive<u64> = 1..=10;
const CALIBRATION_SEEDS: std::ops::RangeInclusive<u64> = 1..=50;
const P3_SEED: u64 = 1;

fn q_default() -> BoltzmannParams {
    BoltzmannParams::with_q(1.0 / 24.0)
}

fn verdict(id: &str, ok: bool, detail: String, start: Instant) {
    let line = format!("criterion {id}: {} ({detail}; {:.1} s)\n", if ok { "PASS" } else { "FAIL" }, start.elapsed().as_secs_f64());
    let _ = std::io::stderr().write_all(line.as_bytes());
    assert!(ok, "criterion {id} failed: {detail}");
}

fn catalan(n: u64) -> u64 {
    (0..n).fold(1u64, |c, k| c * 2 * (2 * k + 1) / (k + 2))
}

/// The battery: every p-value above `ALPHA` and the collection uniform by KS.
fn battery(ps: &[f64]) -> (bool, String) {
    let min = ps.iter().copied().fold(f64::INFINITY, f64::min);
    let ks = ks_uniform(ps).map(|r| r.p_value).unwrap_or(0.0);
    (min > ALPHA && ks > ALPHA, format!("{} p-values, min {min:.4}, KS-uniform p {ks:.4}", ps.len()))
}

#[test]
fn criterion_01_census() {
    let start = Instant::now();
    let t = CensusTable::new(8, 4);
    let mut ok = (0..=8).all(|l| t.count(l as usize, 0).unwrap().to_string() == catalan(l).to_string());
    let mut checked = 0;
    for l in 1..=8usize {
        for f in 0..=(8 - l) / 2 {
            ok &= t.count(l, f).unwrap().to_string() == generate_all(l, f).unwrap().len().to_string();
            checked += 1;
        }
    }
    verdict("1", ok, format!("Catalan rows 0..=8 and {checked} (l, f) classes enumerated"), start);
}

#[test]
fn criterion_02_critical_growth() {
    let start = Instant::now();
    let t = CensusTable::new(1, 41);
    let r = t.growth_ratio(1, 40).unwrap();
    let ratio = num_traits::ToPrimitive::to_f64(&r).unwrap();
    let rel = (ratio - 12.0).abs() / 12.0;
    verdict("2", rel <= 0.05, format!("growth ratio N(1,41)/N(1,40) = {r} = {ratio:.6}, relative gap to 12 is {:.4}", rel), start);
}

#[test]
fn criterion_03_decomposition() {
    let start = Instant::now();
    let err = decomposition_check(3, 3, &q_default()).unwrap();
    verdict("3", err <= 1e-9, format!("max relative error {err:e} over l <= 3, f <= 3"), start);
}

#[test]
fn criterion_04_rerooting() {
    let start = Instant::now();
    let err = rerooting_invariance_check(3, 2, &q_default()).unwrap();
    verdict("4", err == 0.0, format!("max error {err:e} over l <= 3, f <= 2"), start);
}

#[test]
fn criterion_05_weak_markov() {
    let start = Instant::now();
    let sub = single_type1(1).unwrap();
    let mut ps = Vec::new();
    for seed in BATTERY_SEEDS {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rep = weak_markov_test(1, &q_default(), &sub, 100_000, &mut rng, 1).unwrap();
        ps.extend(rep.marginal.iter().map(|h| h.result.p_value));
    }
    let (ok, detail) = battery(&ps);
    verdict("5", ok, detail, start);
}

fn strong_battery(rule: &dyn StoppingRule) -> Vec<f64> {
    BATTERY_SEEDS
        .map(|seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let rep = strong_markov_test(1, &q_default(), rule, 100_000, &mut rng, 1).unwrap();
            rep.combined.expect("strata with enough hits").p_value
        })
        .collect()
}

#[test]
fn criterion_06_strong_markov() {
    let start = Instant::now();
    let (ok_prefix, d_prefix) = battery(&strong_battery(&PrefixRule(2)));
    let (ok_first, d_first) = battery(&strong_battery(&FirstType2));
    verdict("6", ok_prefix && ok_first, format!("prefix of 2 steps: {d_prefix}; first type-2 step: {d_first}"), start);
}

#[test]
fn criterion_07_stopping_map() {
    let start = Instant::now();
    let mut contained = 0;
    let mut total = 0;
    for f in 0..=3 {
        for q in generate_all(1, f).unwrap() {
            total += 1;
            let s = stopping_map_q(&q).unwrap();
            if is_submap(&s, &q).is_some() {
                contained += 1;
            }
        }
    }
    let ok_a = contained == total;
    let (ok_b, d_b) = battery(&strong_battery(&StoppingMapQ));
    let rep = counterexample_branches(&q_default()).unwrap();
    let ok_c = !rep.leaves.is_empty() && rep.all_fail_to_discover();
    let min_leaf = rep.leaves.iter().map(|l| l.probability).fold(f64::INFINITY, f64::min);
    verdict(
        "7",
        ok_a && ok_b && ok_c,
        format!("(a) {contained}/{total} stopping maps contained; (b) {d_b}; (c) {} leaves, min probability {min_leaf:e}, none discovered", rep.leaves.len()),
        start,
    );
}

#[test]
fn criterion_08_decorated_exactness() {
    let start = Instant::now();
    let b = BoundaryCondition::constant(2, 1.0);
    let ising = DecoratedParams { beta: 1.0, mu: SpinMeasure::Ising, ..DecoratedParams::default() };
    // The single-face map: all four sides of the face lie on the boundary.
    let single = generate_all(2, 1)
        .unwrap()
        .into_iter()
        .find(|m| face_adjacency(m).unwrap().internal_phantom.values().sum::<usize>() == 4)
        .expect("the single-face map is in the census");
    let z = partition_decorated(&single, &b, &ising).unwrap();
    let expected = 1.0 + (-8.0f64).exp();
    let ising_ok = (z - expected).abs() <= 1e-12;

    let mut gauss_err: f64 = 0.0;
    let mut gauss_maps = 0;
    let cases: [(usize, &[f64]); 2] = [(1, &[0.3, -0.7]), (2, &[0.5, -0.2, 1.0, 0.0])];
    for (ell, values) in cases {
        for f in 0..=3 {
            let stride = if f == 3 { 7 } else { 1 };
            for m in generate_all(ell, f).unwrap().iter().step_by(stride) {
                let params = DecoratedParams { beta: 1.0, mu: SpinMeasure::Gaussian, ..DecoratedParams::default() };
                let z = partition_decorated(m, &BoundaryCondition(values.to_vec()), &params).unwrap();
                let oracle = common::gaussian_z_by_quadrature(m, values, 1.0);
                gauss_err = gauss_err.max(((z - oracle) / oracle).abs());
                gauss_maps += 1;
            }
        }
    }
    let mut gibbs: f64 = 0.0;
    for ell in 1..=2 {
        gibbs = gibbs.max(gibbs_ratio_check(ell, &BoundaryCondition::constant(ell, 1.0), 3, &ising).unwrap());
        let gp = DecoratedParams { mu: SpinMeasure::Gaussian, ..ising.clone() };
        let bg = BoundaryCondition((0..2 * ell).map(|k| 0.25 * k as f64).collect());
        gibbs = gibbs.max(gibbs_ratio_check(ell, &bg, 3, &gp).unwrap());
    }
    verdict(
        "8",
        ising_ok && gauss_err <= 1e-4 && gibbs <= 1e-8,
        format!("Ising Z = {z:.15} vs 1 + e^-8; Gaussian max relative error {gauss_err:e} on {gauss_maps} maps; Gibbs ratio error {gibbs:e}"),
        start,
    );
}

#[test]
fn criterion_09_decorated_weak_markov() {
    let start = Instant::now();
    let b = BoundaryCondition::constant(1, 1.0);
    let params = DecoratedParams { mu: SpinMeasure::Ising, ..DecoratedParams::default() };
    let sub = single_type1(1).unwrap();
    let mut ps = Vec::new();
    for seed in BATTERY_SEEDS {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rep = decorated_weak_markov_test(1, &b, &params, &sub, 100_000, &mut rng, 1).unwrap();
        ps.push(rep.combined.expect("strata with enough hits").p_value);
    }
    let (ok, detail) = battery(&ps);
    verdict("9", ok, detail, start);
}

#[test]
fn criterion_10_bridges() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let mut worst: f64 = 0.0;
    for _ in 0..10 {
        let u = rng.random_range(-3.0..3.0);
        let v = rng.random_range(-3.0..3.0);
        let w1 = rng.random_range(0.05..5.0);
        let w2 = rng.random_range(0.05..5.0);
        worst = worst.max(bridge_decompose_check(u, v, w1, w2).unwrap());
    }
    let n = 100_000;
    let mids: Vec<f64> = (0..n).map(|_| bridge_sample(0.0, 0.0, 1.0, 0.5, &mut rng).unwrap().values[1]).collect();
    let var = variance(&mids);
    let sd = 0.25 * (2.0 / (n as f64 - 1.0)).sqrt();
    let z = (var - 0.25) / sd;
    verdict("10", worst <= 1e-8 && z.abs() <= 3.0, format!("max decomposition error {worst:e}; midpoint variance {var:.5}, z = {z:.2}"), start);
}

#[test]
fn criterion_11_p3_shape() {
    let start = Instant::now();
    let params = MetricParams::default();
    let grid: Vec<f64> = (1..=10).map(|k| 0.2 * k as f64).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(P3_SEED);
    let rep = p3_shape_test(1, &[0.0, 1.0], &params, &grid, 1_000_000, DEFAULT_EPSILON, &mut rng, 1).unwrap();
    let r = &rep.regression;
    let ok = r.r2 >= 0.98 && r.slope < 0.0 && rep.intercept_z.abs() < 3.0;
    verdict("11", ok, format!("slope {:.4}, R^2 {:.5}, intercept z {:.2}, skeleton cap {}", r.slope, r.r2, rep.intercept_z, params.skeleton_cap), start);
}

#[test]
fn criterion_12_mid_edge_markov() {
    let start = Instant::now();
    let params = MetricParams { mu: SpinMeasure::Ising, skeleton_cap: 3, mcmc: McmcConfig::default(), ..MetricParams::default() };
    let mut ps = Vec::new();
    for seed in MID_EDGE_SEEDS {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rep = mid_edge_markov_test(1, &[1.0, 1.0], &params, 0.5, 1_000_000, &mut rng, 1).unwrap();
        assert_eq!(rep.bins.len(), 4);
        ps.extend(rep.p_values());
    }
    let min = ps.iter().copied().fold(f64::INFINITY, f64::min);
    verdict("12", min > ALPHA, format!("{} per-bin p-values, min {min:.4}", ps.len()), start);
}

fn calibrated(name: &str, ps: &[f64], out: &mut Vec<String>) -> bool {
    let p = ks_uniform(ps).unwrap().p_value;
    out.push(format!("{name} {p:.3}"));
    p > ALPHA
}

#[test]
fn criterion_13_calibration() {
    let start = Instant::now();
    let mut ok = true;
    let mut notes = Vec::new();
    let seeds = || CALIBRATION_SEEDS.map(ChaCha8Rng::seed_from_u64);

    let probs = [0.1, 0.2, 0.3, 0.4];
    let gof: Vec<f64> = seeds()
        .map(|mut r| {
            let mut obs = [0.0; 4];
            for _ in 0..2000 {
                let u: f64 = r.random();
                let mut acc = 0.0;
                let k = probs.iter().position(|p| {
                    acc += p;
                    u < acc
                });
                obs[k.unwrap_or(3)] += 1.0;
            }
            chi_square_gof(&obs, &probs.map(|p| p * 2000.0)).unwrap().p_value
        })
        .collect();
    ok &= calibrated("chi-square fit", &gof, &mut notes);

    let indep: Vec<f64> = seeds()
        .map(|mut r| {
            let pairs: Vec<(u8, u8)> = (0..2000).map(|_| (r.random_range(0..3), r.random_range(0..4))).collect();
            independence_test(&pairs).unwrap().p_value
        })
        .collect();
    ok &= calibrated("independence", &indep, &mut notes);

    let two: Vec<f64> = seeds()
        .map(|mut r| {
            let a: Vec<u8> = (0..2000).map(|_| r.random_range(0..5)).collect();
            let b: Vec<u8> = (0..3000).map(|_| r.random_range(0..5)).collect();
            two_sample_chi_square(&a, &b).unwrap().p_value
        })
        .collect();
    ok &= calibrated("two-sample chi-square", &two, &mut notes);

    let ks1: Vec<f64> = seeds()
        .map(|mut r| {
            let xs: Vec<f64> = (0..1000).map(|_| r.sample(StandardNormal)).collect();
            ks_one_sample(&xs, quadmap::stats::normal_cdf).unwrap().p_value
        })
        .collect();
    ok &= calibrated("KS one-sample", &ks1, &mut notes);

    let ks2: Vec<f64> = seeds()
        .map(|mut r| {
            let a: Vec<f64> = (0..800).map(|_| r.sample(StandardNormal)).collect();
            let b: Vec<f64> = (0..1200).map(|_| r.sample(StandardNormal)).collect();
            ks_two_sample(&a, &b).unwrap().p_value
        })
        .collect();
    ok &= calibrated("KS two-sample", &ks2, &mut notes);

    // Fill-law test against maps drawn from the law it encodes.
    let law = Boltzmann::new(q_default(), 2).unwrap();
    let reference = FillReference::new(&law, 2, 10).unwrap();
    let uniform = UniformSampler::new(2, q_default().face_cap);
    let fill: Vec<f64> = seeds()
        .map(|mut r| {
            let codes: Vec<Vec<u8>> = (0..5000).map(|_| canonical_code(&law.sample(2, &uniform, &mut r).unwrap())).collect();
            let refs: Vec<&[u8]> = codes.iter().map(|c| c.as_slice()).collect();
            reference.test(&refs).unwrap().p_value
        })
        .collect();
    ok &= calibrated("fill law", &fill, &mut notes);

    // Mid-edge harness with exact draws on both sides.
    let params = MetricParams { mu: SpinMeasure::Ising, skeleton_cap: 3, ..MetricParams::default() };
    let mut mid = Vec::new();
    for mut r in seeds() {
        mid.extend(mid_edge_null_test(1, &[1.0, 1.0], &params, 0.5, 200_000, &mut r, 1).unwrap().p_values());
    }
    ok &= calibrated("mid-edge", &mid, &mut notes);

    verdict("13", ok, format!("KS-uniform p over {} seeds: {}", CALIBRATION_SEEDS.count(), notes.join(", ")), start);
}
