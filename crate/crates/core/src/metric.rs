//! Metric maps on the dual of a quadrangulation with boundary.
//!
//! The vertices of the dual skeleton are the internal faces of a quadrangulation
//! together with one phantom vertex per boundary edge, and every edge of the
//! quadrangulation gives one dual edge. An edge of length `w` carries a Brownian
//! bridge between the spins of its endpoints, weighted by the heat kernel mass
//! `bm(u, v, w) = exp(−(u − v)²/(2w)) / √(2πw)`. With `β = 1` a decorated metric
//! map has density
//! `q^{#internal vertices} · Π_e e^{−λ w_e} bm(σ_e⁻, σ_e⁺, w_e) · Π_v μ(σ_v)`
//! where phantom vertices carry the boundary values.
//!
//! Integrating an edge length out gives
//! `∫ e^{−λw} bm(Δ, w) dw = e^{−|Δ|√(2λ)} / √(2λ)`, which turns the capped law
//! with a discrete spin measure into a finite mixture. [`ExactMetricSampler`]
//! samples that mixture directly; [`MetricChain`] is a Markov chain sampler that
//! works for every spin measure.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::Arc;

use rand::Rng;
use rand_distr::{Distribution, Gamma, InverseGaussian, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::boltzmann::categorical;
use crate::census::{generate_codes_with_bound, DEFAULT_GENERATION_BOUND};
use crate::decorated::{dart_sides, Side, SpinMeasure};
use crate::error::{Error, Result};
use crate::map::{canonical_code, MapWithHoles};
use crate::markov::{HoleTest, MarkovTestReport, MIN_STRATUM_HITS};
use crate::par::run_chunks;
use crate::peeling::{decode, encode_events};
use crate::quad::integrate_real_line;
use crate::stats::{chi2_sf, effective_sample_size, ks_two_sample, linear_regression, quantile, two_sample_chi_square, Regression, TestResult};

/// `ln √(2π)`.
const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

/// Default number of grid steps per edge for bridge paths.
pub const DEFAULT_GRID_DIVISIONS: usize = 64;

/// Default half-width of the window around `b(0)` in the p₃ estimator.
pub const DEFAULT_EPSILON: f64 = 0.05;

/// Number of tip-value bins in the mid-edge Markov test.
pub const MID_EDGE_BINS: usize = 4;

/// Largest number of spin configurations enumerated by the exact sampler.
pub const MAX_EXACT_CONFIGS: usize = 1 << 22;

fn check_length(w: f64) -> Result<()> {
    if w > 0.0 && w.is_finite() {
        Ok(())
    } else {
        Err(Error::NonpositiveLength(w))
    }
}

fn log_bm_unchecked(delta: f64, w: f64) -> f64 {
    -delta * delta / (2.0 * w) - 0.5 * w.ln() - LN_SQRT_2PI
}

/// Logarithm of [`bridge_mass`].
pub fn log_bridge_mass(u: f64, v: f64, w: f64) -> Result<f64> {
    check_length(w)?;
    Ok(log_bm_unchecked(u - v, w))
}

/// Total mass `exp(−(u − v)²/(2w)) / √(2πw)` of the unnormalized Brownian
/// bridge from `u` to `v` over time `w`.
pub fn bridge_mass(u: f64, v: f64, w: f64) -> Result<f64> {
    log_bridge_mass(u, v, w).map(f64::exp)
}

/// Integral of a single edge factor over the length:
/// `∫₀^∞ e^{−λw} bm(Δ, w) dw = e^{−|Δ|√(2λ)} / √(2λ)`.
pub fn integrated_edge_weight(delta: f64, lambda: f64) -> f64 {
    let r = (2.0 * lambda).sqrt();
    (-delta.abs() * r).exp() / r
}

/// `|∫ bm(u, z, w1) bm(z, v, w2) dz − bm(u, v, w1 + w2)|` by adaptive
/// quadrature.
pub fn bridge_decompose_check(u: f64, v: f64, w1: f64, w2: f64) -> Result<f64> {
    check_length(w1)?;
    check_length(w2)?;
    let w = w1 + w2;
    // The integrand is a Gaussian in z centred at c with standard deviation s;
    // integrating in x = (z − c)/s keeps the quadrature scale free.
    let c = (u * w2 + v * w1) / w;
    let s = (w1 * w2 / w).sqrt();
    let f = |x: f64| {
        let z = c + s * x;
        s * (log_bm_unchecked(u - z, w1) + log_bm_unchecked(z - v, w2)).exp()
    };
    let (val, _) = integrate_real_line(f, 1e-15, 1e-12)?;
    Ok((val - bridge_mass(u, v, w)?).abs())
}

/// A path sampled on a uniform grid `0, step, 2·step, …, length`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BridgePath {
    /// Grid step.
    pub step: f64,
    /// Values at the grid points, endpoints included.
    pub values: Vec<f64>,
}

impl BridgePath {
    /// Number of grid steps.
    pub fn steps(&self) -> usize {
        self.values.len().saturating_sub(1)
    }

    /// Total length.
    pub fn length(&self) -> f64 {
        self.step * self.steps() as f64
    }

    /// Value at the start.
    pub fn start(&self) -> f64 {
        self.values[0]
    }

    /// Value at the end.
    pub fn end(&self) -> f64 {
        *self.values.last().expect("a path has at least one point")
    }

    /// The same path traversed backwards.
    pub fn reversed(&self) -> BridgePath {
        BridgePath { step: self.step, values: self.values.iter().rev().copied().collect() }
    }

    /// `index,value` lines after a `# step=<h>` header.
    pub fn to_csv(&self) -> String {
        let mut s = format!("# step={}\nindex,value\n", self.step);
        for (i, v) in self.values.iter().enumerate() {
            s.push_str(&format!("{i},{v}\n"));
        }
        s
    }

    /// Parses the output of [`BridgePath::to_csv`].
    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let header = lines.next().ok_or_else(|| Error::Parse("empty path file".into()))?;
        let step: f64 = header
            .strip_prefix("# step=")
            .and_then(|s| s.trim().parse().ok())
            .ok_or_else(|| Error::Parse(format!("bad path header {header:?}")))?;
        if !(step > 0.0 && step.is_finite()) {
            return Err(Error::BadGrid(format!("step {step}")));
        }
        let mut values = Vec::new();
        for (k, line) in lines.skip(1).filter(|l| !l.trim().is_empty()).enumerate() {
            let (i, v) = line.split_once(',').ok_or_else(|| Error::Parse(format!("bad path line {line:?}")))?;
            if i.trim().parse::<usize>().ok() != Some(k) {
                return Err(Error::Parse(format!("path index {i:?} out of order")));
            }
            values.push(v.trim().parse().map_err(|_| Error::Parse(format!("bad path value {v:?}")))?);
        }
        if values.len() < 2 {
            return Err(Error::Parse("a path needs two grid points".into()));
        }
        Ok(BridgePath { step, values })
    }
}

/// Brownian bridge from `u` to `v` over `[0, w]` on the uniform grid with
/// `ceil(w/h)` steps.
///
/// Each grid value is drawn from its exact conditional law given the previous
/// value and the endpoint, so the grid marginals are exact.
pub fn bridge_sample<R: Rng + ?Sized>(u: f64, v: f64, w: f64, h: f64, rng: &mut R) -> Result<BridgePath> {
    check_length(w)?;
    if !(h > 0.0 && h.is_finite() && h <= w * (1.0 + 1e-12)) {
        return Err(Error::BadGrid(format!("step {h} for length {w}")));
    }
    let n = ((w / h) * (1.0 - 1e-12)).ceil().max(1.0) as usize;
    let step = w / n as f64;
    let mut values = Vec::with_capacity(n + 1);
    values.push(u);
    let mut x = u;
    for k in 0..n - 1 {
        let rem = w - k as f64 * step;
        let mean = x + (v - x) * step / rem;
        let var = step * (rem - step) / rem;
        let z: f64 = StandardNormal.sample(rng);
        x = mean + var.sqrt() * z;
        values.push(x);
    }
    values.push(v);
    Ok(BridgePath { step, values })
}

/// A vertex of the dual skeleton.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Vertex {
    /// Internal face, numbered in canonical order.
    Internal(usize),
    /// Phantom vertex on the `k`-th root-face dart.
    Phantom(usize),
}

impl std::fmt::Display for Vertex {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Vertex::Internal(i) => write!(f, "I{i}"),
            Vertex::Phantom(k) => write!(f, "P{k}"),
        }
    }
}

/// An edge of the dual skeleton, oriented from the face of `dart` to the face
/// of its opposite dart.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DualEdge {
    /// Dart of the quadrangulation the edge crosses.
    pub dart: usize,
    /// Start vertex.
    pub tail: Vertex,
    /// End vertex.
    pub head: Vertex,
}

/// The dual of a hole-free quadrangulation with boundary, with one phantom
/// vertex per boundary edge.
///
/// Edge 0 is the root edge; it starts at phantom vertex 0, which has no other
/// edge.
#[derive(Clone, Debug)]
pub struct DualSkeleton {
    map: MapWithHoles,
    codec: String,
    code: Vec<u8>,
    internal: usize,
    phantom: usize,
    edges: Vec<DualEdge>,
    incidence: Vec<Vec<usize>>,
}

impl DualSkeleton {
    /// Dual skeleton of a hole-free map.
    pub fn from_map(m: &MapWithHoles) -> Result<Self> {
        Self::build(m, String::new())
    }

    /// Dual skeleton of the map with the given codec string.
    pub fn from_codec(codec: &str) -> Result<Self> {
        Self::build(&decode(codec)?, codec.to_string())
    }

    fn build(m: &MapWithHoles, codec: String) -> Result<Self> {
        if m.is_cemetery() {
            return Err(Error::InvalidArgument("the cemetery has no dual skeleton".into()));
        }
        let side = dart_sides(m)?;
        let vertex = |s: Side| match s {
            Side::Internal(i) => Vertex::Internal(i),
            Side::Phantom(k) => Vertex::Phantom(k),
        };
        let b = m.base();
        let root = b.root();
        let mut edges = vec![DualEdge { dart: root, tail: vertex(side[root]), head: vertex(side[b.alpha(root)]) }];
        debug_assert_eq!(edges[0].tail, Vertex::Phantom(0));
        for d in 0..b.num_darts() {
            let e = b.alpha(d);
            if d < e && d != root && e != root {
                edges.push(DualEdge { dart: d, tail: vertex(side[d]), head: vertex(side[e]) });
            }
        }
        let internal = m.internal_face_count();
        let mut incidence = vec![Vec::new(); internal];
        for (i, e) in edges.iter().enumerate() {
            for v in [e.tail, e.head] {
                if let Vertex::Internal(k) = v {
                    incidence[k].push(i);
                }
            }
        }
        Ok(DualSkeleton { code: canonical_code(m), map: m.clone(), codec, internal, phantom: 2 * m.semi_perimeter(), edges, incidence })
    }

    /// The underlying quadrangulation.
    pub fn map(&self) -> &MapWithHoles {
        &self.map
    }

    /// Peeling codec string of the quadrangulation (empty when unknown).
    pub fn codec(&self) -> &str {
        &self.codec
    }

    /// Canonical code of the quadrangulation.
    pub fn code(&self) -> &[u8] {
        &self.code
    }

    /// Number of internal vertices.
    pub fn internal_count(&self) -> usize {
        self.internal
    }

    /// Number of phantom vertices (`2ℓ`).
    pub fn phantom_count(&self) -> usize {
        self.phantom
    }

    /// Semi-perimeter of the quadrangulation.
    pub fn semi_perimeter(&self) -> usize {
        self.phantom / 2
    }

    /// All edges, the root edge first.
    pub fn edges(&self) -> &[DualEdge] {
        &self.edges
    }

    /// Number of edges.
    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    /// Edges at an internal vertex, one entry per incidence (a loop appears
    /// twice).
    pub fn incident(&self, i: usize) -> &[usize] {
        &self.incidence[i]
    }

    /// Degree of a vertex.
    pub fn degree(&self, v: Vertex) -> usize {
        match v {
            Vertex::Internal(i) => self.incidence[i].len(),
            Vertex::Phantom(_) => 1,
        }
    }

    /// Index of a vertex in the value array `spins ++ boundary`.
    fn slot(&self, v: Vertex) -> usize {
        match v {
            Vertex::Internal(i) => i,
            Vertex::Phantom(k) => self.internal + k,
        }
    }
}

/// Tuning of the Markov chain sampler.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct McmcConfig {
    /// Standard deviation of the log-length random walk.
    pub length_step: f64,
    /// Standard deviation of the spin random walk (continuous spins).
    pub spin_step: f64,
    /// Standard deviation of the spin proposal in skeleton jumps (continuous
    /// spins), centred at the mean boundary value.
    pub spin_proposal_scale: f64,
    /// Sweeps discarded at the start of each chain.
    pub burn_in: usize,
    /// Sweeps between recorded samples.
    pub thin: usize,
}

impl Default for McmcConfig {
    fn default() -> Self {
        McmcConfig { length_step: 0.8, spin_step: 1.0, spin_proposal_scale: 2.0, burn_in: 1000, thin: 5 }
    }
}

/// Parameters of the metric Boltzmann law (with `β = 1`).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricParams {
    /// Weight per internal vertex.
    pub q: f64,
    /// Rate of the exponential length penalty.
    pub lambda: f64,
    /// Spin measure of the internal vertices.
    pub mu: SpinMeasure,
    /// Largest number of internal vertices.
    pub skeleton_cap: usize,
    /// Sampler tuning.
    pub mcmc: McmcConfig,
}

impl Default for MetricParams {
    fn default() -> Self {
        MetricParams { q: 0.25, lambda: 1.0, mu: SpinMeasure::Gaussian, skeleton_cap: 3, mcmc: McmcConfig::default() }
    }
}

impl MetricParams {
    /// Checks ranges.
    pub fn validate(&self) -> Result<()> {
        if !(self.q > 0.0 && self.q.is_finite()) {
            return Err(Error::InvalidArgument(format!("q = {} must be positive", self.q)));
        }
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return Err(Error::InvalidArgument(format!("lambda = {} must be positive", self.lambda)));
        }
        let m = &self.mcmc;
        for (name, x) in [("length step", m.length_step), ("spin step", m.spin_step), ("spin proposal scale", m.spin_proposal_scale)] {
            if !(x > 0.0 && x.is_finite()) {
                return Err(Error::InvalidArgument(format!("{name} = {x} must be positive")));
            }
        }
        if m.thin == 0 {
            return Err(Error::InvalidArgument("thinning must be at least one sweep".into()));
        }
        self.mu.validate()
    }
}

/// Log-weight of a spin under the reference measure (0 for Lebesgue measure).
fn log_spin_weight(mu: &SpinMeasure, x: f64) -> Result<f64> {
    match mu.atoms() {
        Some(atoms) => atoms.iter().find(|a| a.0 == x).map(|a| a.1.ln()).ok_or_else(|| Error::MissingSpin(format!("{x} outside the support"))),
        None if x.is_finite() => Ok(0.0),
        None => Err(Error::MissingSpin(format!("{x} is not finite"))),
    }
}

/// Logarithm of [`metric_density`].
pub fn metric_density_log(skeleton: &DualSkeleton, lengths: &[f64], spins: &[f64], b: &[f64], params: &MetricParams) -> Result<f64> {
    if lengths.len() != skeleton.num_edges() {
        return Err(Error::InvalidArgument(format!("{} lengths for {} edges", lengths.len(), skeleton.num_edges())));
    }
    if spins.len() != skeleton.internal_count() {
        return Err(Error::MissingSpin(format!("{} spins for {} internal vertices", spins.len(), skeleton.internal_count())));
    }
    if b.len() != skeleton.phantom_count() {
        return Err(Error::MissingSpin(format!("{} boundary values for {} phantom vertices", b.len(), skeleton.phantom_count())));
    }
    let value = |v: Vertex| match v {
        Vertex::Internal(i) => spins[i],
        Vertex::Phantom(k) => b[k],
    };
    let mut s = skeleton.internal_count() as f64 * params.q.ln();
    for x in spins {
        s += log_spin_weight(&params.mu, *x)?;
    }
    for (e, &w) in skeleton.edges().iter().zip(lengths) {
        s += -params.lambda * w + log_bridge_mass(value(e.tail), value(e.head), w)?;
    }
    Ok(s)
}

/// Unnormalized density
/// `q^{#internal} Π_e e^{−λ w_e} bm(σ_e⁻, σ_e⁺, w_e) Π_v μ(σ_v)`, where phantom
/// vertices take their values from `b` and `μ(σ)` is the atom weight for a
/// discrete measure and 1 for Lebesgue measure.
pub fn metric_density(skeleton: &DualSkeleton, lengths: &[f64], spins: &[f64], b: &[f64], params: &MetricParams) -> Result<f64> {
    metric_density_log(skeleton, lengths, spins, b, params).map(f64::exp)
}

/// A dual skeleton with edge lengths.
#[derive(Clone, Debug)]
pub struct MetricMap {
    /// The skeleton.
    pub skeleton: Arc<DualSkeleton>,
    /// One positive length per edge, in skeleton edge order.
    pub lengths: Vec<f64>,
}

impl MetricMap {
    /// Checks the number and sign of the lengths.
    pub fn new(skeleton: Arc<DualSkeleton>, lengths: Vec<f64>) -> Result<Self> {
        if lengths.len() != skeleton.num_edges() {
            return Err(Error::InvalidArgument(format!("{} lengths for {} edges", lengths.len(), skeleton.num_edges())));
        }
        for &w in &lengths {
            check_length(w)?;
        }
        Ok(MetricMap { skeleton, lengths })
    }

    /// `# codec=<codec>` header followed by `edge,tail,head,length` lines.
    pub fn to_csv(&self) -> String {
        let mut s = format!("# codec={}\nedge,tail,head,length\n", self.skeleton.codec());
        for (i, (e, w)) in self.skeleton.edges().iter().zip(&self.lengths).enumerate() {
            s.push_str(&format!("{i},{},{},{w}\n", e.tail, e.head));
        }
        s
    }

    /// Parses the output of [`MetricMap::to_csv`].
    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let header = lines.next().ok_or_else(|| Error::Parse("empty metric map file".into()))?;
        let codec = header.strip_prefix("# codec=").ok_or_else(|| Error::Parse(format!("bad header {header:?}")))?;
        let skeleton = Arc::new(DualSkeleton::from_codec(codec.trim())?);
        let mut lengths = Vec::new();
        for (k, line) in lines.skip(1).filter(|l| !l.trim().is_empty()).enumerate() {
            let cols: Vec<&str> = line.split(',').collect();
            if cols.len() != 4 || cols[0].trim().parse::<usize>().ok() != Some(k) {
                return Err(Error::Parse(format!("bad edge line {line:?}")));
            }
            let e = skeleton.edges().get(k).ok_or_else(|| Error::Parse("more lengths than edges".into()))?;
            if cols[1].trim() != e.tail.to_string() || cols[2].trim() != e.head.to_string() {
                return Err(Error::Parse(format!("edge {k} endpoints do not match the codec")));
            }
            lengths.push(cols[3].trim().parse().map_err(|_| Error::Parse(format!("bad length {:?}", cols[3])))?);
        }
        MetricMap::new(skeleton, lengths)
    }
}

/// A metric map with vertex spins, boundary values and (optionally) bridge
/// paths along the edges.
#[derive(Clone, Debug)]
pub struct DecoratedMetricMap {
    /// Skeleton and lengths.
    pub map: MetricMap,
    /// Spins of the internal vertices.
    pub spins: Vec<f64>,
    /// Values of the phantom vertices.
    pub boundary: Vec<f64>,
    /// One path per edge from tail to head, or empty when not sampled.
    pub paths: Vec<BridgePath>,
}

impl DecoratedMetricMap {
    /// Value carried by a vertex.
    pub fn value(&self, v: Vertex) -> f64 {
        match v {
            Vertex::Internal(i) => self.spins[i],
            Vertex::Phantom(k) => self.boundary[k],
        }
    }

    /// Length of the root edge.
    pub fn root_length(&self) -> f64 {
        self.map.lengths[0]
    }

    /// Value at the far end of the root edge.
    pub fn root_far_value(&self) -> f64 {
        self.value(self.map.skeleton.edges()[0].head)
    }

    /// Log-density under `params`.
    pub fn log_density(&self, params: &MetricParams) -> Result<f64> {
        metric_density_log(&self.map.skeleton, &self.map.lengths, &self.spins, &self.boundary, params)
    }

    /// Samples a bridge along every edge with `divisions` grid steps per edge.
    pub fn sample_paths<R: Rng + ?Sized>(&mut self, divisions: usize, rng: &mut R) -> Result<()> {
        if divisions == 0 {
            return Err(Error::BadGrid("zero grid steps".into()));
        }
        let mut paths = Vec::with_capacity(self.map.lengths.len());
        for (e, &w) in self.map.skeleton.edges().iter().zip(&self.map.lengths) {
            paths.push(bridge_sample(self.value(e.tail), self.value(e.head), w, w / divisions as f64, rng)?);
        }
        self.paths = paths;
        Ok(())
    }

    /// `vertex,value` lines for the internal vertices.
    pub fn spins_csv(&self) -> String {
        let mut s = String::from("vertex,value\n");
        for (i, v) in self.spins.iter().enumerate() {
            s.push_str(&format!("I{i},{v}\n"));
        }
        s
    }
}

/// Draws a length from the density proportional to `e^{−λw} bm(Δ, w)`.
///
/// This is a generalized inverse Gaussian law: Gamma(1/2, rate λ) when `Δ = 0`,
/// and otherwise the reciprocal of an inverse Gaussian variable with mean
/// `√(2λ)/|Δ|` and shape `2λ`.
pub fn sample_edge_length<R: Rng + ?Sized>(delta: f64, lambda: f64, rng: &mut R) -> f64 {
    loop {
        let w = if delta == 0.0 {
            Gamma::new(0.5, 1.0 / lambda).expect("positive parameters").sample(rng)
        } else {
            let ig = InverseGaussian::new((2.0 * lambda).sqrt() / delta.abs(), 2.0 * lambda).expect("positive parameters");
            1.0 / ig.sample(rng)
        };
        if w > 0.0 && w.is_finite() {
            return w;
        }
    }
}

/// The skeletons of semi-perimeter `ℓ` with at most `cap` internal vertices,
/// with the data the samplers need.
#[derive(Clone, Debug)]
pub struct SkeletonClass {
    ell: usize,
    boundary: Vec<f64>,
    skeletons: Vec<Arc<DualSkeleton>>,
    ends: Vec<Vec<(usize, usize)>>,
    neighbours: Vec<Vec<Vec<(usize, usize)>>>,
    log_proposal: Vec<f64>,
    proposal: Vec<f64>,
    index: HashMap<Vec<u8>, usize>,
}

impl SkeletonClass {
    /// Enumerates the class.
    pub fn new(ell: usize, b: &[f64], params: &MetricParams) -> Result<Self> {
        params.validate()?;
        if ell == 0 {
            return Err(Error::InvalidArgument("semi-perimeter must be positive".into()));
        }
        if b.len() != 2 * ell {
            return Err(Error::MissingSpin(format!("{} boundary values for semi-perimeter {ell}", b.len())));
        }
        if let Some(x) = b.iter().find(|x| !params.mu.contains(**x)) {
            return Err(Error::MissingSpin(format!("boundary value {x} outside the support")));
        }
        let bound = DEFAULT_GENERATION_BOUND.max(ell);
        if ell + 2 * params.skeleton_cap > bound {
            return Err(Error::CapUnsatisfiable(format!(
                "{} internal vertices at semi-perimeter {ell} exceed the enumeration bound {bound}",
                params.skeleton_cap
            )));
        }
        let mut class = SkeletonClass {
            ell,
            boundary: b.to_vec(),
            skeletons: Vec::new(),
            ends: Vec::new(),
            neighbours: Vec::new(),
            log_proposal: Vec::new(),
            proposal: Vec::new(),
            index: HashMap::new(),
        };
        // Proposal over skeletons proportional to q^f (2λ)^{−E/2}; with the
        // Gamma(1/2, λ) length proposal this cancels the length integrals.
        let mut logs = Vec::new();
        for f in 0..=params.skeleton_cap {
            for (events, m) in generate_codes_with_bound(ell, f, bound)? {
                let s = DualSkeleton::build(&m, encode_events(&events))?;
                logs.push(f as f64 * params.q.ln() - 0.5 * s.num_edges() as f64 * (2.0 * params.lambda).ln());
                class.index.insert(s.code.clone(), class.skeletons.len());
                class.ends.push(s.edges.iter().map(|e| (s.slot(e.tail), s.slot(e.head))).collect());
                class.neighbours.push(
                    (0..s.internal)
                        .map(|i| {
                            s.incidence[i]
                                .iter()
                                .filter_map(|&e| {
                                    let (a, c) = (s.slot(s.edges[e].tail), s.slot(s.edges[e].head));
                                    match (a == i, c == i) {
                                        (true, true) => None,
                                        (true, false) => Some((e, c)),
                                        _ => Some((e, a)),
                                    }
                                })
                                .collect()
                        })
                        .collect(),
                );
                class.skeletons.push(Arc::new(s));
            }
        }
        if class.skeletons.is_empty() {
            return Err(Error::CapUnsatisfiable("no skeleton below the cap".into()));
        }
        let top = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let total: f64 = logs.iter().map(|l| (l - top).exp()).sum();
        class.log_proposal = logs.iter().map(|l| l - top - total.ln()).collect();
        class.proposal = class.log_proposal.iter().map(|l| l.exp()).collect();
        Ok(class)
    }

    /// Semi-perimeter.
    pub fn ell(&self) -> usize {
        self.ell
    }

    /// Boundary values.
    pub fn boundary(&self) -> &[f64] {
        &self.boundary
    }

    /// Number of skeletons.
    pub fn len(&self) -> usize {
        self.skeletons.len()
    }

    /// True when the class is empty (never, after construction).
    pub fn is_empty(&self) -> bool {
        self.skeletons.is_empty()
    }

    /// The `i`-th skeleton.
    pub fn skeleton(&self, i: usize) -> &Arc<DualSkeleton> {
        &self.skeletons[i]
    }

    /// Index of a skeleton by canonical code.
    pub fn index_of(&self, code: &[u8]) -> Option<usize> {
        self.index.get(code).copied()
    }
}

/// State of the chain: skeleton index, lengths and internal spins.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChainState {
    /// Index of the skeleton in its class.
    pub skeleton: usize,
    /// Edge lengths.
    pub lengths: Vec<f64>,
    /// Internal spins.
    pub spins: Vec<f64>,
}

/// Kind of a chain move.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum MoveKind {
    /// Independence proposal of a whole new configuration.
    Skeleton,
    /// Log-scale random walk on one length.
    Length,
    /// Random walk on one continuous spin.
    SpinWalk,
    /// Exact conditional draw of one discrete spin.
    SpinHeatBath,
}

/// A logged Metropolis–Hastings step.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    /// Move type.
    pub kind: MoveKind,
    /// State before the move.
    pub from: ChainState,
    /// Proposed state.
    pub to: ChainState,
    /// Log target density of `from`.
    pub log_target_from: f64,
    /// Log target density of `to`.
    pub log_target_to: f64,
    /// Log density of proposing `to` from `from`.
    pub log_proposal_forward: f64,
    /// Log density of proposing `from` from `to`.
    pub log_proposal_reverse: f64,
    /// Acceptance probability used.
    pub acceptance: f64,
    /// Whether the proposal was accepted.
    pub accepted: bool,
}

/// Acceptance rates and mixing of a run.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ChainDiagnostics {
    /// Recorded samples.
    pub samples: usize,
    /// Sweeps performed (burn-in included).
    pub sweeps: u64,
    /// Accepted fraction of skeleton jumps.
    pub skeleton_acceptance: f64,
    /// Accepted fraction of length moves.
    pub length_acceptance: f64,
    /// Accepted fraction of spin moves.
    pub spin_acceptance: f64,
    /// Effective sample size of the root length, summed over chains.
    pub root_length_ess: f64,
}

#[derive(Clone, Copy, Debug, Default)]
struct Counts {
    proposed: [u64; 3],
    accepted: [u64; 3],
}

/// Metropolis-within-Gibbs sampler of the capped metric law.
///
/// One sweep makes an independence jump to a fresh configuration (skeleton
/// drawn with weight `q^f (2λ)^{−E/2}`, lengths Gamma(1/2, λ), spins from the
/// reference measure or a normal proposal), then a log-scale random walk on
/// every length, then one update per internal spin: an exact conditional draw
/// for discrete spins, a random walk for continuous ones.
#[derive(Clone, Debug)]
pub struct MetricChain {
    class: Arc<SkeletonClass>,
    params: MetricParams,
    atoms: Option<Vec<(f64, f64)>>,
    spin_center: f64,
    skel: usize,
    lengths: Vec<f64>,
    vals: Vec<f64>,
    counts: Counts,
    sweeps: u64,
    trace: Vec<f64>,
    log: Option<Vec<Transition>>,
}

impl MetricChain {
    /// Starts a chain from a proposal draw and runs the burn-in.
    pub fn new<R: Rng + ?Sized>(class: Arc<SkeletonClass>, params: &MetricParams, rng: &mut R) -> Result<Self> {
        params.validate()?;
        let atoms = params.mu.atoms().map(|a| {
            let t: f64 = a.iter().map(|x| x.1).sum();
            a.into_iter().map(|(v, w)| (v, w / t)).collect::<Vec<_>>()
        });
        let b = class.boundary.clone();
        let mut chain = MetricChain {
            spin_center: b.iter().sum::<f64>() / b.len() as f64,
            class,
            params: params.clone(),
            atoms,
            skel: 0,
            lengths: Vec::new(),
            vals: Vec::new(),
            counts: Counts::default(),
            sweeps: 0,
            trace: Vec::new(),
            log: None,
        };
        let (s, lengths, vals) = chain.propose(rng);
        chain.skel = s;
        chain.lengths = lengths;
        chain.vals = vals;
        for _ in 0..params.mcmc.burn_in {
            chain.sweep(rng);
        }
        Ok(chain)
    }

    /// Starts recording every transition.
    pub fn enable_log(&mut self) {
        self.log = Some(Vec::new());
    }

    /// Recorded transitions.
    pub fn transitions(&self) -> &[Transition] {
        self.log.as_deref().unwrap_or(&[])
    }

    /// The skeleton class.
    pub fn class(&self) -> &Arc<SkeletonClass> {
        &self.class
    }

    /// Current state.
    pub fn state(&self) -> ChainState {
        let n = self.class.skeletons[self.skel].internal;
        ChainState { skeleton: self.skel, lengths: self.lengths.clone(), spins: self.vals[..n].to_vec() }
    }

    /// Current skeleton index.
    pub fn skeleton_index(&self) -> usize {
        self.skel
    }

    /// Current root length.
    pub fn root_length(&self) -> f64 {
        self.lengths[0]
    }

    /// Current value at the far end of the root edge.
    pub fn root_far_value(&self) -> f64 {
        self.vals[self.class.ends[self.skel][0].1]
    }

    /// Current state as a decorated metric map.
    pub fn current(&self) -> DecoratedMetricMap {
        let s = &self.class.skeletons[self.skel];
        DecoratedMetricMap {
            map: MetricMap { skeleton: s.clone(), lengths: self.lengths.clone() },
            spins: self.vals[..s.internal].to_vec(),
            boundary: self.class.boundary.clone(),
            paths: Vec::new(),
        }
    }

    /// Runs `thin` sweeps and records the root length.
    pub fn advance<R: Rng + ?Sized>(&mut self, rng: &mut R) {
        for _ in 0..self.params.mcmc.thin {
            self.sweep(rng);
        }
        self.trace.push(self.lengths[0]);
    }

    /// Diagnostics of the recorded samples.
    pub fn diagnostics(&self) -> ChainDiagnostics {
        let rate = |k: usize| if self.counts.proposed[k] == 0 { 0.0 } else { self.counts.accepted[k] as f64 / self.counts.proposed[k] as f64 };
        ChainDiagnostics {
            samples: self.trace.len(),
            sweeps: self.sweeps,
            skeleton_acceptance: rate(0),
            length_acceptance: rate(1),
            spin_acceptance: rate(2),
            root_length_ess: effective_sample_size(&self.trace),
        }
    }

    fn log_target(&self, s: usize, lengths: &[f64], vals: &[f64]) -> f64 {
        let sk = &self.class.skeletons[s];
        let mut l = sk.internal as f64 * self.params.q.ln();
        if let Some(atoms) = &self.params.mu.atoms() {
            for x in &vals[..sk.internal] {
                l += atoms.iter().find(|a| a.0 == *x).map_or(f64::NEG_INFINITY, |a| a.1.ln());
            }
        }
        for (&(a, b), &w) in self.class.ends[s].iter().zip(lengths) {
            l += -self.params.lambda * w + log_bm_unchecked(vals[a] - vals[b], w);
        }
        l
    }

    fn log_spin_proposal(&self, x: f64) -> f64 {
        match &self.atoms {
            Some(a) => a.iter().find(|p| p.0 == x).map_or(f64::NEG_INFINITY, |p| p.1.ln()),
            None => {
                let s = self.params.mcmc.spin_proposal_scale;
                let z = (x - self.spin_center) / s;
                -0.5 * z * z - s.ln() - LN_SQRT_2PI
            }
        }
    }

    fn log_proposal(&self, s: usize, lengths: &[f64], vals: &[f64]) -> f64 {
        let lam = self.params.lambda;
        let mut l = self.class.log_proposal[s];
        for &w in lengths {
            l += 0.5 * lam.ln() - 0.5 * PI.ln() - 0.5 * w.ln() - lam * w;
        }
        for &x in &vals[..self.class.skeletons[s].internal] {
            l += self.log_spin_proposal(x);
        }
        l
    }

    fn propose<R: Rng + ?Sized>(&self, rng: &mut R) -> (usize, Vec<f64>, Vec<f64>) {
        let s = categorical(&self.class.proposal, rng);
        let sk = &self.class.skeletons[s];
        let gamma = Gamma::new(0.5, 1.0 / self.params.lambda).expect("positive parameters");
        let lengths = (0..sk.num_edges())
            .map(|_| loop {
                let w: f64 = gamma.sample(rng);
                if w > 0.0 {
                    break w;
                }
            })
            .collect();
        let mut vals: Vec<f64> = (0..sk.internal)
            .map(|_| match &self.atoms {
                Some(a) => a[categorical(&a.iter().map(|p| p.1).collect::<Vec<_>>(), rng)].0,
                None => {
                    let z: f64 = StandardNormal.sample(rng);
                    self.spin_center + self.params.mcmc.spin_proposal_scale * z
                }
            })
            .collect();
        vals.extend_from_slice(&self.class.boundary);
        (s, lengths, vals)
    }

    fn snapshot(&self, s: usize, lengths: &[f64], vals: &[f64]) -> ChainState {
        ChainState { skeleton: s, lengths: lengths.to_vec(), spins: vals[..self.class.skeletons[s].internal].to_vec() }
    }

    #[allow(clippy::too_many_arguments)]
    fn record(&mut self, kind: MoveKind, from: ChainState, to: ChainState, lt: (f64, f64), lp: (f64, f64), acceptance: f64, accepted: bool) {
        if let Some(log) = &mut self.log {
            log.push(Transition {
                kind,
                from,
                to,
                log_target_from: lt.0,
                log_target_to: lt.1,
                log_proposal_forward: lp.0,
                log_proposal_reverse: lp.1,
                acceptance,
                accepted,
            });
        }
    }

    fn sweep<R: Rng + ?Sized>(&mut self, rng: &mut R) {
        self.sweeps += 1;
        self.skeleton_move(rng);
        for e in 0..self.lengths.len() {
            self.length_move(e, rng);
        }
        for i in 0..self.class.skeletons[self.skel].internal {
            match self.atoms.clone() {
                Some(atoms) => self.heat_bath(i, &atoms, rng),
                None => self.spin_walk(i, rng),
            }
        }
    }

    fn skeleton_move<R: Rng + ?Sized>(&mut self, rng: &mut R) {
        let (s, lengths, vals) = self.propose(rng);
        let lt = (self.log_target(self.skel, &self.lengths, &self.vals), self.log_target(s, &lengths, &vals));
        let lp = (self.log_proposal(s, &lengths, &vals), self.log_proposal(self.skel, &self.lengths, &self.vals));
        let a = (lt.1 - lt.0 + lp.1 - lp.0).exp().min(1.0);
        let accepted = rng.random::<f64>() < a;
        self.counts.proposed[0] += 1;
        if self.log.is_some() {
            let (from, to) = (self.snapshot(self.skel, &self.lengths, &self.vals), self.snapshot(s, &lengths, &vals));
            self.record(MoveKind::Skeleton, from, to, lt, lp, a, accepted);
        }
        if accepted {
            self.counts.accepted[0] += 1;
            self.skel = s;
            self.lengths = lengths;
            self.vals = vals;
        }
    }

    fn length_move<R: Rng + ?Sized>(&mut self, e: usize, rng: &mut R) {
        let (a, b) = self.class.ends[self.skel][e];
        let d = self.vals[a] - self.vals[b];
        let w = self.lengths[e];
        let z: f64 = StandardNormal.sample(rng);
        let w2 = w * (self.params.mcmc.length_step * z).exp();
        let lam = self.params.lambda;
        let local = |x: f64| -lam * x + log_bm_unchecked(d, x);
        // Proposal density of w' given w is φ(ln(w'/w)/s)/(s w'), so the
        // Hastings ratio contributes w'/w.
        let log_ratio = local(w2) - local(w) + (w2 / w).ln();
        let acc = log_ratio.exp().min(1.0);
        let accepted = w2 > 0.0 && w2.is_finite() && rng.random::<f64>() < acc;
        self.counts.proposed[1] += 1;
        if self.log.is_some() {
            let from = self.snapshot(self.skel, &self.lengths, &self.vals);
            let mut to = from.clone();
            to.lengths[e] = w2;
            let lt = (self.log_target(self.skel, &self.lengths, &self.vals), self.log_target(self.skel, &to.lengths, &self.vals));
            let s = self.params.mcmc.length_step;
            let lq = -0.5 * z * z - s.ln() - LN_SQRT_2PI;
            self.record(MoveKind::Length, from, to, lt, (lq - w2.ln(), lq - w.ln()), acc, accepted);
        }
        if accepted {
            self.counts.accepted[1] += 1;
            self.lengths[e] = w2;
        }
    }

    fn local_spin_log(&self, i: usize, x: f64) -> f64 {
        self.class.neighbours[self.skel][i].iter().map(|&(e, o)| -(x - self.vals[o]).powi(2) / (2.0 * self.lengths[e])).sum()
    }

    fn heat_bath<R: Rng + ?Sized>(&mut self, i: usize, atoms: &[(f64, f64)], rng: &mut R) {
        let logs: Vec<f64> = atoms.iter().map(|&(v, w)| w.ln() + self.local_spin_log(i, v)).collect();
        let top = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let weights: Vec<f64> = logs.iter().map(|l| (l - top).exp()).collect();
        let k = categorical(&weights, rng);
        self.counts.proposed[2] += 1;
        self.counts.accepted[2] += 1;
        if self.log.is_some() {
            let total: f64 = weights.iter().sum();
            let from = self.snapshot(self.skel, &self.lengths, &self.vals);
            let mut vals2 = self.vals.clone();
            vals2[i] = atoms[k].0;
            let to = self.snapshot(self.skel, &self.lengths, &vals2);
            let cur = atoms.iter().position(|a| a.0 == self.vals[i]).expect("spin in the support");
            let lt = (self.log_target(self.skel, &self.lengths, &self.vals), self.log_target(self.skel, &self.lengths, &vals2));
            let lp = ((weights[k] / total).ln(), (weights[cur] / total).ln());
            self.record(MoveKind::SpinHeatBath, from, to, lt, lp, 1.0, true);
        }
        self.vals[i] = atoms[k].0;
    }

    fn spin_walk<R: Rng + ?Sized>(&mut self, i: usize, rng: &mut R) {
        let x = self.vals[i];
        let z: f64 = StandardNormal.sample(rng);
        let x2 = x + self.params.mcmc.spin_step * z;
        let log_ratio = self.local_spin_log(i, x2) - self.local_spin_log(i, x);
        let acc = log_ratio.exp().min(1.0);
        let accepted = rng.random::<f64>() < acc;
        self.counts.proposed[2] += 1;
        if self.log.is_some() {
            let from = self.snapshot(self.skel, &self.lengths, &self.vals);
            let mut vals2 = self.vals.clone();
            vals2[i] = x2;
            let to = self.snapshot(self.skel, &self.lengths, &vals2);
            let lt = (self.log_target(self.skel, &self.lengths, &self.vals), self.log_target(self.skel, &self.lengths, &vals2));
            let s = self.params.mcmc.spin_step;
            let lq = -0.5 * z * z - s.ln() - LN_SQRT_2PI;
            self.record(MoveKind::SpinWalk, from, to, lt, (lq, lq), acc, accepted);
        }
        if accepted {
            self.counts.accepted[2] += 1;
            self.vals[i] = x2;
        }
    }
}

/// Samples and diagnostics of one chain.
#[derive(Clone, Debug)]
pub struct MetricRun {
    /// Recorded decorated metric maps.
    pub samples: Vec<DecoratedMetricMap>,
    /// Chain diagnostics.
    pub diagnostics: ChainDiagnostics,
}

/// Runs one chain after burn-in and records `steps` samples, `thin` sweeps
/// apart.
pub fn mcmc_sample_metric<R: Rng + ?Sized>(ell: usize, b: &[f64], params: &MetricParams, steps: usize, rng: &mut R) -> Result<MetricRun> {
    let class = Arc::new(SkeletonClass::new(ell, b, params)?);
    let mut chain = MetricChain::new(class, params, rng)?;
    let mut samples = Vec::with_capacity(steps);
    for _ in 0..steps {
        chain.advance(rng);
        samples.push(chain.current());
    }
    Ok(MetricRun { samples, diagnostics: chain.diagnostics() })
}

fn merge_diagnostics(parts: &[ChainDiagnostics]) -> ChainDiagnostics {
    let sweeps: u64 = parts.iter().map(|d| d.sweeps).sum();
    let avg = |f: fn(&ChainDiagnostics) -> f64| {
        if sweeps == 0 {
            0.0
        } else {
            parts.iter().map(|d| f(d) * d.sweeps as f64).sum::<f64>() / sweeps as f64
        }
    };
    ChainDiagnostics {
        samples: parts.iter().map(|d| d.samples).sum(),
        sweeps,
        skeleton_acceptance: avg(|d| d.skeleton_acceptance),
        length_acceptance: avg(|d| d.length_acceptance),
        spin_acceptance: avg(|d| d.spin_acceptance),
        root_length_ess: parts.iter().map(|d| d.root_length_ess).sum(),
    }
}

#[derive(Clone, Debug)]
struct FarClass {
    value: f64,
    configs: Vec<usize>,
    cumulative: Vec<f64>,
}

/// Exact sampler of the capped metric law for a discrete spin measure, with
/// an arbitrary value at phantom vertex 0.
///
/// Integrating the lengths out leaves a finite mixture over (skeleton, spins)
/// with weight `q^f Π_e e^{−|Δ_e|√(2λ)}/√(2λ) Π μ(σ_v)`. The root edge is the
/// only edge at phantom 0, so changing its value reweights the mixture through
/// the root-edge factor alone. Given the spins, lengths are independent
/// generalized inverse Gaussian variables (see [`sample_edge_length`]).
#[derive(Clone, Debug)]
pub struct ExactMetricSampler {
    class: Arc<SkeletonClass>,
    lambda: f64,
    configs: Vec<(usize, Vec<f64>)>,
    far: Vec<FarClass>,
}

impl ExactMetricSampler {
    /// Enumerates the mixture.
    pub fn new(class: Arc<SkeletonClass>, params: &MetricParams) -> Result<Self> {
        params.validate()?;
        let atoms = params.mu.atoms().ok_or_else(|| Error::InvalidArgument("exact metric sampling needs a discrete spin measure".into()))?;
        let mut configs = Vec::new();
        let mut by_far: Vec<(f64, Vec<usize>, Vec<f64>)> = Vec::new();
        for (s, sk) in class.skeletons.iter().enumerate() {
            let n = sk.internal;
            let total = atoms.len().checked_pow(n as u32).filter(|&c| c <= MAX_EXACT_CONFIGS).ok_or(Error::TooManyFaces(n))?;
            for mut idx in 0..total {
                let mut vals = Vec::with_capacity(n + class.boundary.len());
                let mut lw = n as f64 * params.q.ln();
                for _ in 0..n {
                    let (v, w) = atoms[idx % atoms.len()];
                    vals.push(v);
                    lw += w.ln();
                    idx /= atoms.len();
                }
                vals.extend_from_slice(&class.boundary);
                for &(a, b) in &class.ends[s][1..] {
                    lw += integrated_edge_weight(vals[a] - vals[b], params.lambda).ln();
                }
                let far = vals[class.ends[s][0].1];
                let k = match by_far.iter().position(|c| c.0 == far) {
                    Some(k) => k,
                    None => {
                        by_far.push((far, Vec::new(), Vec::new()));
                        by_far.len() - 1
                    }
                };
                by_far[k].1.push(configs.len());
                by_far[k].2.push(lw.exp());
                configs.push((s, vals));
            }
        }
        let far = by_far
            .into_iter()
            .map(|(value, configs, w)| {
                let mut acc = 0.0;
                let cumulative = w.iter().map(|x| {
                    acc += x;
                    acc
                });
                FarClass { value, configs, cumulative: cumulative.collect() }
            })
            .collect();
        Ok(ExactMetricSampler { class, lambda: params.lambda, configs, far })
    }

    /// The skeleton class.
    pub fn class(&self) -> &Arc<SkeletonClass> {
        &self.class
    }

    /// Capped partition function with value `x` at phantom vertex 0.
    pub fn partition(&self, x: f64) -> f64 {
        self.far.iter().map(|c| c.cumulative.last().copied().unwrap_or(0.0) * integrated_edge_weight(x - c.value, self.lambda)).sum()
    }

    /// Draws from the capped law with the class boundary values.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> DecoratedMetricMap {
        self.sample_with_root_value(self.class.boundary[0], rng)
    }

    /// Draws from the capped law with value `x` at phantom vertex 0.
    pub fn sample_with_root_value<R: Rng + ?Sized>(&self, x: f64, rng: &mut R) -> DecoratedMetricMap {
        let weights: Vec<f64> = self.far.iter().map(|c| c.cumulative.last().copied().unwrap_or(0.0) * integrated_edge_weight(x - c.value, self.lambda)).collect();
        let c = &self.far[categorical(&weights, rng)];
        let u = rng.random::<f64>() * c.cumulative.last().copied().unwrap_or(0.0);
        let k = c.cumulative.partition_point(|&a| a <= u).min(c.configs.len() - 1);
        let (s, vals) = &self.configs[c.configs[k]];
        let sk = &self.class.skeletons[*s];
        let mut boundary = self.class.boundary.clone();
        boundary[0] = x;
        let mut vals = vals.clone();
        vals[sk.internal] = x;
        let lengths = self.class.ends[*s].iter().map(|&(a, b)| sample_edge_length(vals[a] - vals[b], self.lambda, rng)).collect();
        DecoratedMetricMap {
            map: MetricMap { skeleton: sk.clone(), lengths },
            spins: vals[..sk.internal].to_vec(),
            boundary,
            paths: Vec::new(),
        }
    }
}

/// A vertex discovered by a type-3 step.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RevealedVertex {
    /// Internal vertex index.
    pub vertex: usize,
    /// Its spin.
    pub value: f64,
    /// Its other edge incidences, which become active (a loop appears twice).
    pub new_active_edges: Vec<usize>,
}

/// Partial exploration of a decorated metric map by type-3 steps.
///
/// An edge is active when it is partly explored or has a phantom or revealed
/// endpoint; exploration runs from that endpoint along the stored bridge path.
#[derive(Clone, Debug)]
pub struct Type3State {
    map: DecoratedMetricMap,
    explored: Vec<usize>,
    from_tail: Vec<Option<bool>>,
    revealed: Vec<bool>,
}

impl Type3State {
    /// Nothing explored yet; the map must carry bridge paths.
    pub fn new(map: DecoratedMetricMap) -> Result<Self> {
        let m = map.map.lengths.len();
        if map.paths.len() != m {
            return Err(Error::BadGrid("type-3 exploration needs a bridge path on every edge".into()));
        }
        let n = map.spins.len();
        Ok(Type3State { map, explored: vec![0; m], from_tail: vec![None; m], revealed: vec![false; n] })
    }

    /// The explored map.
    pub fn map(&self) -> &DecoratedMetricMap {
        &self.map
    }

    fn known(&self, v: Vertex) -> bool {
        match v {
            Vertex::Phantom(_) => true,
            Vertex::Internal(i) => self.revealed[i],
        }
    }

    /// True when the edge can be peeled.
    pub fn is_active(&self, e: usize) -> bool {
        let Some(edge) = self.map.map.skeleton.edges().get(e) else { return false };
        self.explored[e] < self.map.paths[e].steps() && (self.explored[e] > 0 || self.known(edge.tail) || self.known(edge.head))
    }

    /// Explored length of an edge.
    pub fn explored_length(&self, e: usize) -> f64 {
        self.explored[e] as f64 * self.map.paths[e].step
    }

    /// Unexplored length of an edge.
    pub fn remaining_length(&self, e: usize) -> f64 {
        (self.map.paths[e].steps() - self.explored[e]) as f64 * self.map.paths[e].step
    }

    /// Internal vertices revealed so far.
    pub fn revealed(&self) -> Vec<usize> {
        (0..self.revealed.len()).filter(|&i| self.revealed[i]).collect()
    }

    fn oriented(&self, e: usize) -> BridgePath {
        let p = &self.map.paths[e];
        if self.from_tail[e].unwrap_or(true) {
            p.clone()
        } else {
            p.reversed()
        }
    }

    /// Explored part of an edge, from where exploration started.
    pub fn explored_path(&self, e: usize) -> BridgePath {
        let p = self.oriented(e);
        BridgePath { step: p.step, values: p.values[..=self.explored[e]].to_vec() }
    }

    /// Unexplored part of an edge, starting at the current tip.
    pub fn unexplored_path(&self, e: usize) -> BridgePath {
        let p = self.oriented(e);
        BridgePath { step: p.step, values: p.values[self.explored[e]..].to_vec() }
    }

    /// Value at the current tip of an active or partly explored edge; this is
    /// the boundary value the unexplored remainder sees.
    pub fn tip_value(&self, e: usize) -> f64 {
        self.unexplored_path(e).start()
    }
}

/// Result of a type-3 step.
#[derive(Clone, Debug)]
pub struct Type3Outcome {
    /// Length explored by this step.
    pub explored: f64,
    /// Path segment revealed by this step.
    pub segment: BridgePath,
    /// Value at the new tip.
    pub tip: f64,
    /// Vertex discovered when the edge was fully explored.
    pub revealed: Option<RevealedVertex>,
    /// State after the step.
    pub remainder: Type3State,
}

/// Explores `min(L, remaining)` of an active edge from its known end.
///
/// `L` must be a whole number of grid steps unless it covers the rest of the
/// edge. When the edge is used up and its far end is an unrevealed internal
/// vertex, that vertex is revealed together with its other incidences.
pub fn type3_peel(state: &Type3State, edge: usize, l: f64) -> Result<Type3Outcome> {
    if !state.is_active(edge) {
        let dart = state.map.map.skeleton.edges().get(edge).map_or(edge, |e| e.dart);
        return Err(Error::NotActive(dart));
    }
    if l.is_nan() || l <= 0.0 {
        return Err(Error::BadGrid(format!("exploration length {l}")));
    }
    let path = &state.map.paths[edge];
    let n = path.steps();
    let k0 = state.explored[edge];
    let remaining = (n - k0) as f64 * path.step;
    let k1 = if l >= remaining * (1.0 - 1e-12) {
        n
    } else {
        let k = l / path.step;
        let kr = k.round();
        if (k - kr).abs() > 1e-9 * k.max(1.0) || kr < 1.0 {
            return Err(Error::BadGrid(format!("length {l} is not a multiple of the grid step {}", path.step)));
        }
        k0 + kr as usize
    };
    let sk = state.map.map.skeleton.clone();
    let e = sk.edges()[edge];
    let mut next = state.clone();
    let from_tail = state.from_tail[edge].unwrap_or_else(|| state.known(e.tail));
    next.from_tail[edge] = Some(from_tail);
    next.explored[edge] = k1;
    let oriented = next.oriented(edge);
    let segment = BridgePath { step: path.step, values: oriented.values[k0..=k1].to_vec() };
    let tip = segment.end();
    let mut revealed = None;
    if k1 == n {
        if let Vertex::Internal(v) = if from_tail { e.head } else { e.tail } {
            if !next.revealed[v] {
                next.revealed[v] = true;
                let mut others = sk.incident(v).to_vec();
                let pos = others.iter().position(|&x| x == edge).expect("edge is incident");
                others.remove(pos);
                revealed = Some(RevealedVertex { vertex: v, value: state.map.spins[v], new_active_edges: others });
            }
        }
    }
    Ok(Type3Outcome { explored: (k1 - k0) as f64 * path.step, segment, tip, revealed, remainder: next })
}

/// Outcome of the p₃ regression.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct P3Report {
    /// Times at which p₃ was estimated.
    pub t_grid: Vec<f64>,
    /// Half-width of the window around `b(0)`.
    pub epsilon: f64,
    /// Number of chain samples.
    pub samples: usize,
    /// Samples with root length above `t` and bridge value in the window.
    pub hits: Vec<usize>,
    /// Estimates `hits / (2ε · samples)`.
    pub estimates: Vec<f64>,
    /// `ln(√(2πt) · estimate)`.
    pub log_shape: Vec<f64>,
    /// Least squares fit of `log_shape` against `t`.
    pub regression: Regression,
    /// `intercept / se(intercept)`.
    pub intercept_z: f64,
    /// Chain diagnostics.
    pub diagnostics: ChainDiagnostics,
}

fn check_grid(t_grid: &[f64]) -> Result<()> {
    if t_grid.is_empty() || t_grid.iter().any(|t| !(*t > 0.0 && t.is_finite())) || t_grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::BadGrid("times must be positive and increasing".into()));
    }
    Ok(())
}

/// Estimates the density `p₃(t)` of the event "the root edge is longer than
/// `t` and its bridge is back at `b(0)` at time `t`" from chain samples, and
/// regresses `ln(√(2πt) p̂₃(t))` on `t`.
///
/// For each sample the bridge on the root edge is drawn at the grid times
/// only, sequentially from its exact conditional laws.
#[allow(clippy::too_many_arguments)]
pub fn p3_shape_test<R: Rng + ?Sized>(
    ell: usize,
    b: &[f64],
    params: &MetricParams,
    t_grid: &[f64],
    n: usize,
    epsilon: f64,
    rng: &mut R,
    threads: usize,
) -> Result<P3Report> {
    check_grid(t_grid)?;
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(Error::InvalidArgument(format!("window half-width {epsilon} must be positive")));
    }
    if n == 0 {
        return Err(Error::InvalidArgument("no samples requested".into()));
    }
    let class = Arc::new(SkeletonClass::new(ell, b, params)?);
    let b0 = b[0];
    let parts = run_chunks(rng, n, threads, |r, count| -> Result<(Vec<usize>, ChainDiagnostics)> {
        let mut chain = MetricChain::new(class.clone(), params, r)?;
        let mut hits = vec![0usize; t_grid.len()];
        for _ in 0..count {
            chain.advance(r);
            let (w, v) = (chain.root_length(), chain.root_far_value());
            let (mut x, mut t0) = (b0, 0.0);
            for (k, &t) in t_grid.iter().enumerate() {
                if t >= w {
                    break;
                }
                let rem = w - t0;
                let dt = t - t0;
                let z: f64 = StandardNormal.sample(r);
                x = x + (v - x) * dt / rem + (dt * (w - t) / rem).sqrt() * z;
                t0 = t;
                if (x - b0).abs() <= epsilon {
                    hits[k] += 1;
                }
            }
        }
        Ok((hits, chain.diagnostics()))
    });
    let mut hits = vec![0usize; t_grid.len()];
    let mut diags = Vec::new();
    for p in parts {
        let (h, d) = p?;
        for (a, b) in hits.iter_mut().zip(h) {
            *a += b;
        }
        diags.push(d);
    }
    if let Some(k) = hits.iter().position(|&h| h == 0) {
        return Err(Error::InsufficientHits(format!("no hits at t = {}", t_grid[k])));
    }
    let estimates: Vec<f64> = hits.iter().map(|&h| h as f64 / (2.0 * epsilon * n as f64)).collect();
    let log_shape: Vec<f64> = t_grid.iter().zip(&estimates).map(|(t, p)| ((2.0 * PI * t).sqrt() * p).ln()).collect();
    let regression = linear_regression(t_grid, &log_shape)?;
    let intercept_z = if regression.se_intercept > 0.0 { regression.intercept / regression.se_intercept } else { 0.0 };
    Ok(P3Report {
        t_grid: t_grid.to_vec(),
        epsilon,
        samples: n,
        hits,
        estimates,
        log_shape,
        regression,
        intercept_z,
        diagnostics: merge_diagnostics(&diags),
    })
}

/// Tests of one tip-value bin in the mid-edge test.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MidEdgeBin {
    /// Lower bin edge (`−∞` for the first bin).
    pub lo: f64,
    /// Upper bin edge (`+∞` for the last bin).
    pub hi: f64,
    /// Conditioned chain samples in the bin (and as many fresh samples).
    pub hits: usize,
    /// Two-sample chi-square over (skeleton, far spin, residual quartile).
    pub joint: TestResult,
    /// Two-sample KS test of the residual root length.
    pub residual_ks: TestResult,
    /// Two-sample chi-square of the skeleton class, when it has two cells.
    pub skeleton: Option<TestResult>,
}

/// Outcome of the mid-edge Markov test.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MidEdgeReport {
    /// Exploration depth along the root edge.
    pub t: f64,
    /// One marginal entry per bin, holding the joint test.
    pub markov: MarkovTestReport,
    /// Per-bin details.
    pub bins: Vec<MidEdgeBin>,
    /// Chain diagnostics.
    pub diagnostics: ChainDiagnostics,
}

impl MidEdgeReport {
    /// The per-bin joint p-values.
    pub fn p_values(&self) -> Vec<f64> {
        self.bins.iter().map(|b| b.joint.p_value).collect()
    }
}

/// Remainder seen after exploring `[0, t]` of the root edge: skeleton, far
/// value, residual root length.
type Remainder = (usize, u64, f64);

/// Compares the remainder of chain samples explored along `[0, t]` of the root
/// edge with fresh exact samples whose root boundary value is the tip value.
///
/// Chain samples with root length above `t` get a tip value `x = B_t` drawn
/// from the bridge; each is paired with one exact draw at boundary value `x`.
/// Tip values are split into [`MID_EDGE_BINS`] quantile bins, and in each bin
/// the two samples are compared over the cells (skeleton class × far-end spin
/// × residual-length quartile). The spin measure must be discrete.
#[allow(clippy::too_many_arguments)]
pub fn mid_edge_markov_test<R: Rng + ?Sized>(
    ell: usize,
    b: &[f64],
    params: &MetricParams,
    t: f64,
    n: usize,
    rng: &mut R,
    threads: usize,
) -> Result<MidEdgeReport> {
    mid_edge_core(ell, b, params, t, n, rng, threads, false)
}

/// The harness of [`mid_edge_markov_test`] with exact draws in place of the
/// chain samples, so that both samples come from the same law by
/// construction. Its p-values are uniform when the harness is calibrated.
#[allow(clippy::too_many_arguments)]
pub fn mid_edge_null_test<R: Rng + ?Sized>(
    ell: usize,
    b: &[f64],
    params: &MetricParams,
    t: f64,
    n: usize,
    rng: &mut R,
    threads: usize,
) -> Result<MidEdgeReport> {
    mid_edge_core(ell, b, params, t, n, rng, threads, true)
}

#[allow(clippy::too_many_arguments)]
fn mid_edge_core<R: Rng + ?Sized>(
    ell: usize,
    b: &[f64],
    params: &MetricParams,
    t: f64,
    n: usize,
    rng: &mut R,
    threads: usize,
    exact_base: bool,
) -> Result<MidEdgeReport> {
    if !(t > 0.0 && t.is_finite()) {
        return Err(Error::InvalidArgument(format!("exploration depth {t} must be positive")));
    }
    let class = Arc::new(SkeletonClass::new(ell, b, params)?);
    let exact = ExactMetricSampler::new(class.clone(), params)?;
    let b0 = b[0];
    type Pair = (f64, Remainder, Remainder);
    let parts = run_chunks(rng, n, threads, |r, count| -> Result<(Vec<Pair>, ChainDiagnostics)> {
        let mut chain = if exact_base { None } else { Some(MetricChain::new(class.clone(), params, r)?) };
        let mut out = Vec::new();
        for _ in 0..count {
            let (s, w, v) = match &mut chain {
                Some(c) => {
                    c.advance(r);
                    (c.skeleton_index(), c.root_length(), c.root_far_value())
                }
                None => {
                    let m = exact.sample(r);
                    (class.index_of(m.map.skeleton.code()).expect("skeleton in the class"), m.root_length(), m.root_far_value())
                }
            };
            if w <= t {
                continue;
            }
            let z: f64 = StandardNormal.sample(r);
            let x = b0 + (v - b0) * t / w + (t * (w - t) / w).sqrt() * z;
            let fresh = exact.sample_with_root_value(x, r);
            let fs = class.index_of(fresh.map.skeleton.code()).expect("fresh skeleton in the class");
            out.push((x, (s, v.to_bits(), w - t), (fs, fresh.root_far_value().to_bits(), fresh.root_length())));
        }
        Ok((out, chain.map(|c| c.diagnostics()).unwrap_or_default()))
    });
    let mut pairs = Vec::new();
    let mut diags = Vec::new();
    for p in parts {
        let (v, d) = p?;
        pairs.extend(v);
        diags.push(d);
    }
    if pairs.is_empty() {
        return Err(Error::EventNeverHit);
    }
    let xs: Vec<f64> = pairs.iter().map(|p| p.0).collect();
    let mut edges = vec![f64::NEG_INFINITY];
    edges.extend((1..MID_EDGE_BINS).map(|k| quantile(&xs, k as f64 / MID_EDGE_BINS as f64)));
    edges.push(f64::INFINITY);
    let mut bins = Vec::new();
    let mut marginal = Vec::new();
    let (mut stat, mut dof) = (0.0, 0usize);
    for k in 0..MID_EDGE_BINS {
        let (lo, hi) = (edges[k], edges[k + 1]);
        let inside: Vec<&Pair> = pairs.iter().filter(|p| p.0 > lo && p.0 <= hi || (k == 0 && p.0 == lo)).collect();
        if inside.len() < MIN_STRATUM_HITS {
            return Err(Error::BinTooThin(format!("tip-value bin {k} has {} samples", inside.len())));
        }
        let residuals: Vec<f64> = inside.iter().flat_map(|p| [p.1 .2, p.2 .2]).collect();
        let cuts: Vec<f64> = (1..4).map(|j| quantile(&residuals, j as f64 / 4.0)).collect();
        let quartile = |r: f64| cuts.iter().filter(|&&c| r > c).count();
        let cell = |m: &Remainder| (m.0, m.1, quartile(m.2));
        let a: Vec<_> = inside.iter().map(|p| cell(&p.1)).collect();
        let c: Vec<_> = inside.iter().map(|p| cell(&p.2)).collect();
        let joint = two_sample_chi_square(&a, &c)?;
        let ra: Vec<f64> = inside.iter().map(|p| p.1 .2).collect();
        let rc: Vec<f64> = inside.iter().map(|p| p.2 .2).collect();
        let residual_ks = ks_two_sample(&ra, &rc)?;
        let sa: Vec<usize> = inside.iter().map(|p| p.1 .0).collect();
        let sc: Vec<usize> = inside.iter().map(|p| p.2 .0).collect();
        let skeleton = two_sample_chi_square(&sa, &sc).ok();
        stat += joint.statistic;
        dof += joint.dof;
        marginal.push(HoleTest { stratum: format!("x in ({lo}, {hi}]"), hole: 0, semi_perimeter: ell, hits: inside.len(), result: joint });
        bins.push(MidEdgeBin { lo, hi, hits: inside.len(), joint, residual_ks, skeleton });
    }
    let markov = MarkovTestReport {
        samples: n,
        hits: pairs.len(),
        marginal,
        independence: Vec::new(),
        combined: Some(TestResult { statistic: stat, dof, p_value: chi2_sf(stat, dof) }),
        skipped_strata: 0,
        flagged: 0,
        reference: "exact draws of the capped metric law with the root boundary value set to the tip value".into(),
        truncation_note: format!("skeletons with at most {} internal vertices", params.skeleton_cap),
    };
    Ok(MidEdgeReport { t, markov, bins, diagnostics: merge_diagnostics(&diags) })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quad::integrate_to_infinity;
    use crate::stats::{ks_one_sample, variance};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn ising(cap: usize) -> MetricParams {
        MetricParams { mu: SpinMeasure::Ising, skeleton_cap: cap, ..MetricParams::default() }
    }

    #[test]
    fn bridge_mass_values() {
        let c = 1.0 / (2.0 * PI).sqrt();
        assert!((bridge_mass(0.0, 0.0, 1.0).unwrap() - c).abs() < 1e-15);
        assert!((bridge_mass(0.0, 1.0, 1.0).unwrap() - c * (-0.5f64).exp()).abs() < 1e-15);
        assert_eq!(bridge_mass(0.3, -1.2, 0.7).unwrap(), bridge_mass(-1.2, 0.3, 0.7).unwrap());
        assert_eq!(bridge_mass(0.0, 0.0, 0.0), Err(Error::NonpositiveLength(0.0)));
        assert!(bridge_mass(0.0, 0.0, -1.0).is_err());
    }

    #[test]
    fn integrated_edge_weight_matches_quadrature() {
        for (d, lam) in [(0.0, 1.0), (0.7, 1.0), (-2.0, 0.3), (1.5, 2.5)] {
            let (v, _) = integrate_to_infinity(|w| if w > 0.0 { (-lam * w).exp() * bridge_mass(d, 0.0, w).unwrap() } else { 0.0 }, 0.0, 1e-12, 1e-10).unwrap();
            assert!((v - integrated_edge_weight(d, lam)).abs() < 1e-7, "{d} {lam}: {v}");
        }
    }

    #[test]
    fn bridge_decomposition() {
        assert!(bridge_decompose_check(0.0, 0.0, 1.0, 1.0).unwrap() <= 1e-8);
        assert!(bridge_decompose_check(1.0, -1.0, 0.5, 2.0).unwrap() <= 1e-8);
        for w1 in [1e-1, 1e-2, 1e-3] {
            assert!(bridge_decompose_check(0.4, -0.3, w1, 1.0).unwrap() <= 1e-6, "{w1}");
        }
        assert!(bridge_decompose_check(0.0, 0.0, 0.0, 1.0).is_err());
    }

    #[test]
    fn bridge_paths() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let p = bridge_sample(0.5, -1.0, 2.0, 0.3, &mut rng).unwrap();
        assert_eq!(p.steps(), 7);
        assert_eq!((p.start(), p.end()), (0.5, -1.0));
        assert!((p.length() - 2.0).abs() < 1e-12);
        assert_eq!(bridge_sample(0.0, 0.0, 1.0, 1.0, &mut rng).unwrap().steps(), 1);
        assert!(matches!(bridge_sample(0.0, 0.0, 1.0, 1.5, &mut rng), Err(Error::BadGrid(_))));
        assert!(matches!(bridge_sample(0.0, 0.0, 1.0, 0.0, &mut rng), Err(Error::BadGrid(_))));
        assert_eq!(BridgePath::from_csv(&p.to_csv()).unwrap(), p);
    }

    #[test]
    fn bridge_grid_covariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let n = 100_000;
        let draws: Vec<(f64, f64, f64)> = (0..n)
            .map(|_| {
                let p = bridge_sample(0.0, 0.0, 1.0, 0.25, &mut rng).unwrap();
                (p.values[1], p.values[2], p.values[3])
            })
            .collect();
        let mid: Vec<f64> = draws.iter().map(|d| d.1).collect();
        // Var of the sample variance of a normal is 2σ⁴/(n−1).
        let sd = (2.0 * 0.25f64.powi(2) / n as f64).sqrt();
        assert!((variance(&mid) - 0.25).abs() < 3.0 * sd);
        let cov = draws.iter().map(|d| d.0 * d.2).sum::<f64>() / n as f64;
        // Var(XY) = E[X²]E[Y²] + E[XY]² for centred jointly normal X, Y.
        let var_xy: f64 = (3.0f64 / 16.0).powi(2) + (1.0f64 / 16.0).powi(2);
        assert!((cov - 1.0 / 16.0).abs() < 3.0 * (var_xy / n as f64).sqrt(), "{cov}");
    }

    #[test]
    fn skeleton_of_tree_and_single_face() {
        let class = SkeletonClass::new(1, &[1.0, 1.0], &ising(1)).unwrap();
        assert_eq!(class.len(), 3);
        let tree = class.skeleton(0);
        assert_eq!(tree.num_edges(), 1);
        assert_eq!(tree.edges()[0].tail, Vertex::Phantom(0));
        assert_eq!(tree.edges()[0].head, Vertex::Phantom(1));
        for i in 1..3 {
            let s = class.skeleton(i);
            assert_eq!(s.internal_count(), 1);
            assert_eq!(s.num_edges(), 3);
            assert_eq!(s.degree(Vertex::Internal(0)), 4);
            assert_eq!(s.edges()[0].tail, Vertex::Phantom(0));
        }
        assert!(matches!(SkeletonClass::new(1, &[1.0, 1.0], &ising(5)), Err(Error::CapUnsatisfiable(_))));
        assert!(matches!(SkeletonClass::new(1, &[1.0, 0.5], &ising(1)), Err(Error::MissingSpin(_))));
    }

    #[test]
    fn density_of_one_edge_tree() {
        let class = SkeletonClass::new(1, &[0.3, 0.3], &MetricParams::default()).unwrap();
        let tree = class.skeleton(0);
        let p = MetricParams::default();
        for w in [0.1, 1.0, 3.0] {
            let d = metric_density(tree, &[w], &[], &[0.3, 0.3], &p).unwrap();
            assert!((d - (-w).exp() / (2.0 * PI * w).sqrt()).abs() < 1e-15);
        }
        assert!(matches!(metric_density(tree, &[0.0], &[], &[0.3, 0.3], &p), Err(Error::NonpositiveLength(_))));
        assert!(matches!(metric_density(tree, &[1.0], &[], &[0.3], &p), Err(Error::MissingSpin(_))));
        let face = class.skeleton(1);
        assert!(matches!(metric_density(face, &[1.0; 3], &[], &[0.3, 0.3], &p), Err(Error::MissingSpin(_))));
        assert!(matches!(metric_density(face, &[1.0; 3], &[0.5], &[0.3, 0.3], &ising(1)), Err(Error::MissingSpin(_))));
        // Decreasing in each length beyond the mode for equal spins.
        let vals: Vec<f64> = (1..20).map(|k| metric_density(face, &[1.0, 0.5 * k as f64, 1.0], &[0.3], &[0.3, 0.3], &p).unwrap()).collect();
        assert!(vals.windows(2).all(|w| w[1] < w[0]));
    }

    #[test]
    fn density_ratio_on_fixed_skeleton() {
        let p = MetricParams::default();
        let class = SkeletonClass::new(1, &[0.0, 1.0], &p).unwrap();
        let s = class.skeleton(2);
        let (l1, l2) = ([0.4, 1.1, 2.0], [0.9, 0.2, 0.5]);
        let r = metric_density(s, &l1, &[0.7], &[0.0, 1.0], &p).unwrap() / metric_density(s, &l2, &[0.7], &[0.0, 1.0], &p).unwrap();
        let edge = |ls: &[f64; 3]| -> f64 {
            s.edges()
                .iter()
                .zip(ls)
                .map(|(e, &w)| {
                    let v = |x: Vertex| match x {
                        Vertex::Internal(_) => 0.7,
                        Vertex::Phantom(k) => [0.0, 1.0][k],
                    };
                    (-w).exp() * bridge_mass(v(e.tail), v(e.head), w).unwrap()
                })
                .product()
        };
        assert!((r - edge(&l1) / edge(&l2)).abs() < 1e-12 * r);
    }

    #[test]
    fn metric_map_csv_round_trip() {
        let class = SkeletonClass::new(2, &[1.0; 4], &ising(2)).unwrap();
        let s = class.skeleton(class.len() - 1).clone();
        let lengths: Vec<f64> = (0..s.num_edges()).map(|k| 0.25 + k as f64).collect();
        let m = MetricMap::new(s.clone(), lengths.clone()).unwrap();
        let back = MetricMap::from_csv(&m.to_csv()).unwrap();
        assert_eq!(back.lengths, lengths);
        assert_eq!(back.skeleton.edges(), s.edges());
        assert!(MetricMap::new(s, vec![1.0]).is_err());
    }

    #[test]
    fn edge_length_sampler() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for (d, lam) in [(0.0, 1.0), (1.3, 0.7)] {
            let norm = integrated_edge_weight(d, lam);
            let xs: Vec<f64> = (0..4000).map(|_| sample_edge_length(d, lam, &mut rng)).collect();
            let cdf = |x: f64| {
                if x <= 0.0 {
                    return 0.0;
                }
                crate::quad::integrate(|w| if w > 0.0 { (-lam * w).exp() * bridge_mass(d, 0.0, w).unwrap() } else { 0.0 }, 0.0, x, 1e-12, 1e-10).unwrap().0 / norm
            };
            assert!(ks_one_sample(&xs, cdf).unwrap().p_value > 1e-3, "{d}");
        }
    }

    #[test]
    fn chain_length_marginal_on_single_tree() {
        // Cap 0 leaves the one-edge tree: the root length has density
        // ∝ e^{−λw} bm(b₀, b₁, w).
        let params = MetricParams { skeleton_cap: 0, ..MetricParams::default() };
        let b = [0.0, 0.8];
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let run = mcmc_sample_metric(1, &b, &MetricParams { mcmc: McmcConfig { thin: 10, ..McmcConfig::default() }, ..params.clone() }, 3000, &mut rng).unwrap();
        let xs: Vec<f64> = run.samples.iter().map(|s| s.root_length()).collect();
        let norm = integrated_edge_weight(0.8, 1.0);
        let cdf = |x: f64| {
            if x <= 0.0 {
                return 0.0;
            }
            crate::quad::integrate(|w| if w > 0.0 { (-w).exp() * bridge_mass(0.0, 0.8, w).unwrap() } else { 0.0 }, 0.0, x, 1e-12, 1e-10).unwrap().0 / norm
        };
        assert!(ks_one_sample(&xs, cdf).unwrap().p_value > 0.01);
        assert!(run.diagnostics.root_length_ess > 500.0, "{:?}", run.diagnostics);
    }

    #[test]
    fn chain_spin_marginal_on_one_vertex() {
        let params = MetricParams { skeleton_cap: 1, mcmc: McmcConfig { thin: 3, ..McmcConfig::default() }, ..MetricParams::default() };
        let b = [0.0, 1.0];
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let run = mcmc_sample_metric(1, &b, &params, 20_000, &mut rng).unwrap();
        // Given the skeleton and lengths the spin is normal with precision
        // Σ 1/w over non-loop edges; its probability integral transform is
        // uniform.
        let mut us = Vec::new();
        for s in run.samples.iter().filter(|s| s.spins.len() == 1).step_by(4) {
            let (mut prec, mut lin) = (0.0, 0.0);
            for (e, &w) in s.map.skeleton.edges().iter().zip(&s.map.lengths) {
                for (a, c) in [(e.tail, e.head), (e.head, e.tail)] {
                    if a == Vertex::Internal(0) && c != a {
                        prec += 1.0 / w;
                        lin += s.value(c) / w;
                    }
                }
            }
            let m = lin / prec;
            us.push(crate::stats::normal_cdf((s.spins[0] - m) * prec.sqrt()));
        }
        assert!(us.len() > 1000);
        assert!(crate::stats::ks_uniform(&us).unwrap().p_value > 0.01);
    }

    #[test]
    fn logged_transitions_satisfy_metropolis_identity() {
        for mu in [SpinMeasure::Ising, SpinMeasure::Gaussian] {
            let params = MetricParams { mu: mu.clone(), skeleton_cap: 2, mcmc: McmcConfig { burn_in: 0, thin: 1, ..McmcConfig::default() }, ..MetricParams::default() };
            let b = [1.0, 1.0];
            let class = Arc::new(SkeletonClass::new(1, &b, &params).unwrap());
            let mut rng = ChaCha8Rng::seed_from_u64(6);
            let mut chain = MetricChain::new(class.clone(), &params, &mut rng).unwrap();
            chain.enable_log();
            for _ in 0..200 {
                chain.advance(&mut rng);
            }
            let log = chain.transitions();
            assert!(log.len() > 400, "{}", log.len());
            let mut kinds = std::collections::HashSet::new();
            for t in log {
                kinds.insert(t.kind);
                let target = |s: &ChainState| metric_density_log(class.skeleton(s.skeleton), &s.lengths, &s.spins, &b, &params).unwrap();
                assert!((target(&t.from) - t.log_target_from).abs() < 1e-9);
                assert!((target(&t.to) - t.log_target_to).abs() < 1e-9);
                let a = (t.log_target_to - t.log_target_from + t.log_proposal_reverse - t.log_proposal_forward).exp().min(1.0);
                assert!((a - t.acceptance).abs() < 1e-9 * a.max(1e-300) + 1e-12, "{t:?}");
            }
            assert_eq!(kinds.len(), 3);
        }
    }

    #[test]
    fn exact_sampler_agrees_with_chain() {
        let params = ising(2);
        let b = [1.0, 1.0];
        let class = Arc::new(SkeletonClass::new(1, &b, &params).unwrap());
        let exact = ExactMetricSampler::new(class.clone(), &params).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut chain = MetricChain::new(class.clone(), &MetricParams { mcmc: McmcConfig { thin: 10, ..McmcConfig::default() }, ..params.clone() }, &mut rng).unwrap();
        let (mut a, mut c, mut la, mut lc) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
        for _ in 0..20_000 {
            chain.advance(&mut rng);
            a.push((chain.skeleton_index(), chain.root_far_value().to_bits()));
            la.push(chain.root_length());
            let s = exact.sample(&mut rng);
            c.push((class.index_of(s.map.skeleton.code()).unwrap(), s.root_far_value().to_bits()));
            lc.push(s.root_length());
        }
        assert!(two_sample_chi_square(&a, &c).unwrap().p_value > 1e-3);
        assert!(ks_two_sample(&la, &lc).unwrap().p_value > 1e-3);
    }

    #[test]
    fn exact_partition_of_tree() {
        let params = ising(0);
        let class = Arc::new(SkeletonClass::new(1, &[1.0, -1.0], &params).unwrap());
        let exact = ExactMetricSampler::new(class, &params).unwrap();
        assert!((exact.partition(1.0) - integrated_edge_weight(2.0, 1.0)).abs() < 1e-15);
        assert!((exact.partition(-1.0) - integrated_edge_weight(0.0, 1.0)).abs() < 1e-15);
        let gauss = Arc::new(SkeletonClass::new(1, &[1.0, -1.0], &MetricParams::default()).unwrap());
        assert!(ExactMetricSampler::new(gauss, &MetricParams::default()).is_err());
    }

    fn explored_map(seed: u64) -> DecoratedMetricMap {
        let params = ising(1);
        let b = [1.0, -1.0];
        let class = Arc::new(SkeletonClass::new(1, &b, &params).unwrap());
        let exact = ExactMetricSampler::new(class.clone(), &params).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        loop {
            let mut m = exact.sample(&mut rng);
            if m.spins.len() == 1 && m.map.skeleton.edges()[0].head == Vertex::Internal(0) {
                m.sample_paths(DEFAULT_GRID_DIVISIONS, &mut rng).unwrap();
                return m;
            }
        }
    }

    #[test]
    fn type3_full_and_partial() {
        let m = explored_map(8);
        let w = m.root_length();
        let st = Type3State::new(m.clone()).unwrap();
        let full = type3_peel(&st, 0, w + 1.0).unwrap();
        assert!((full.explored - w).abs() < 1e-12);
        let r = full.revealed.unwrap();
        assert_eq!(r.vertex, 0);
        assert_eq!(r.value, m.spins[0]);
        assert_eq!(r.new_active_edges.len(), 3);
        assert_eq!(full.tip, m.spins[0]);
        assert!(!full.remainder.is_active(0));
        assert!(r.new_active_edges.iter().all(|&e| full.remainder.is_active(e)));
        let h = m.paths[0].step;
        let part = type3_peel(&st, 0, 10.0 * h).unwrap();
        assert!((part.explored - 10.0 * h).abs() < 1e-12);
        assert_eq!(part.segment.steps(), 10);
        assert!(part.revealed.is_none());
        assert_eq!(part.tip, m.paths[0].values[10]);
        assert_eq!(part.remainder.tip_value(0), part.tip);
        assert!(matches!(type3_peel(&st, 0, 0.5 * h), Err(Error::BadGrid(_))));
        // The internal vertex is unknown, so its other edges are not active
        // unless they reach the boundary.
        let inner: Vec<usize> = (1..m.map.lengths.len()).filter(|&e| !st.is_active(e)).collect();
        for e in inner {
            assert!(matches!(type3_peel(&st, e, h), Err(Error::NotActive(_))));
        }
    }

    #[test]
    fn type3_restriction_composes() {
        let m = explored_map(9);
        let h = m.paths[0].step;
        let st = Type3State::new(m.clone()).unwrap();
        let one = type3_peel(&st, 0, 20.0 * h).unwrap();
        let a = type3_peel(&st, 0, 10.0 * h).unwrap();
        let b = type3_peel(&a.remainder, 0, 10.0 * h).unwrap();
        assert_eq!(one.tip, b.tip);
        let mut joined = a.segment.values.clone();
        joined.extend_from_slice(&b.segment.values[1..]);
        assert_eq!(joined, one.segment.values);
        assert_eq!(b.remainder.explored_path(0), one.remainder.explored_path(0));
        // Gluing the unexplored part back gives the original path and length.
        let mut back = b.remainder.explored_path(0).values;
        back.extend_from_slice(&b.remainder.unexplored_path(0).values[1..]);
        assert_eq!(back, m.paths[0].values);
        let total = b.remainder.explored_length(0) + b.remainder.remaining_length(0);
        assert!((total - m.root_length()).abs() < 1e-12);
    }

    #[test]
    fn p3_regression_small_run() {
        let params = MetricParams::default();
        let grid: Vec<f64> = (1..=10).map(|k| 0.2 * k as f64).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let rep = p3_shape_test(1, &[0.0, 1.0], &params, &grid, 100_000, DEFAULT_EPSILON, &mut rng, 1).unwrap();
        assert!(rep.regression.slope < 0.0, "{rep:?}");
        assert!(rep.regression.r2 > 0.9, "{rep:?}");
        assert!((rep.regression.slope + params.lambda).abs() < 0.3, "{rep:?}");
        assert!(matches!(p3_shape_test(1, &[0.0, 1.0], &params, &[100.0], 100, 0.05, &mut rng, 1), Err(Error::InsufficientHits(_))));
    }

    #[test]
    fn mid_edge_small_run() {
        let params = MetricParams { mcmc: McmcConfig { thin: 10, ..McmcConfig::default() }, ..ising(3) };
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let rep = mid_edge_markov_test(1, &[1.0, 1.0], &params, 0.5, 40_000, &mut rng, 1).unwrap();
        assert_eq!(rep.bins.len(), MID_EDGE_BINS);
        assert!(rep.p_values().iter().all(|&p| p > 1e-3), "{:?}", rep.bins);
        assert!(rep.bins.iter().all(|b| b.residual_ks.p_value > 1e-3));
        let vacuous = mid_edge_markov_test(1, &[1.0, 1.0], &params, 1e-9, 20_000, &mut rng, 1).unwrap();
        assert!(vacuous.p_values().iter().all(|&p| p > 1e-3));
        assert!(matches!(mid_edge_markov_test(1, &[1.0, 1.0], &params, 50.0, 200, &mut rng, 1), Err(Error::EventNeverHit)));
        assert!(mid_edge_markov_test(1, &[0.0, 1.0], &MetricParams::default(), 0.5, 200, &mut rng, 1).is_err());
    }
}
