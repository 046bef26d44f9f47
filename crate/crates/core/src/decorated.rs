//! Spin-decorated quadrangulations.
//!
//! Every boundary edge carries a phantom exterior face of degree one whose spin
//! is fixed by a boundary condition. Internal faces carry spins drawn from a
//! reference measure, and a decorated map has weight
//! `q^{#internal faces} · Π μ(dσ_i) · exp(−H)` with
//! `H = (β/2) Σ_edges (σ_i − σ_j)²`, the sum running once over every edge of the
//! map with its phantom faces attached.

use std::collections::{BTreeMap, HashMap};

use nalgebra::{Cholesky, DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::boltzmann::categorical;
use crate::census::{generate_all_with_bound, DEFAULT_GENERATION_BOUND};
use crate::error::{Error, Result};
use crate::map::{canonical_code, canonical_internal_faces, embed, MapWithHoles};
use crate::markov::{HoleTest, MarkovTestReport, MIN_STRATUM_HITS};
use crate::par::run_chunks;
use crate::stats::{chi2_sf, chi_square_gof, median, TestResult};

/// Largest number of internal faces for exact spin summation.
pub const MAX_SUMMATION_FACES: usize = 20;

/// Number of quantile bins per revealed continuous spin in the Markov test.
pub const GAUSSIAN_BINS: usize = 4;

/// Reference measure of a single spin.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum SpinMeasure {
    /// Counting measure on `{−1, +1}`.
    Ising,
    /// Lebesgue measure on the real line.
    Gaussian,
    /// Weighted counting measure on a finite set of values.
    DiscreteSet {
        /// Support points.
        values: Vec<f64>,
        /// Positive weights, one per support point.
        weights: Vec<f64>,
    },
}

impl SpinMeasure {
    /// Checks that the support is nonempty and the weights are positive.
    pub fn validate(&self) -> Result<()> {
        if let SpinMeasure::DiscreteSet { values, weights } = self {
            if values.is_empty() || values.len() != weights.len() {
                return Err(Error::InvalidArgument("discrete spin measure needs one weight per value".into()));
            }
            if weights.iter().any(|w| !(*w > 0.0 && w.is_finite())) || values.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidArgument("discrete spin weights must be positive and finite".into()));
            }
        }
        Ok(())
    }

    /// Support points with their weights, or `None` for the Gaussian case.
    pub fn atoms(&self) -> Option<Vec<(f64, f64)>> {
        match self {
            SpinMeasure::Ising => Some(vec![(-1.0, 1.0), (1.0, 1.0)]),
            SpinMeasure::Gaussian => None,
            SpinMeasure::DiscreteSet { values, weights } => Some(values.iter().copied().zip(weights.iter().copied()).collect()),
        }
    }

    /// True when `x` lies in the support.
    pub fn contains(&self, x: f64) -> bool {
        match self.atoms() {
            Some(a) => a.iter().any(|(v, _)| *v == x),
            None => x.is_finite(),
        }
    }
}

/// Spins of the phantom faces, indexed by the root-face darts in face order
/// from the root.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundaryCondition(pub Vec<f64>);

impl BoundaryCondition {
    /// Validated boundary condition for semi-perimeter `ell`.
    pub fn new(values: Vec<f64>, ell: usize, mu: &SpinMeasure) -> Result<Self> {
        if values.len() != 2 * ell {
            return Err(Error::InvalidArgument(format!("boundary condition of length {} for semi-perimeter {ell}", values.len())));
        }
        if let Some(x) = values.iter().find(|x| !mu.contains(**x)) {
            return Err(Error::MissingSpin(format!("boundary value {x} outside the support")));
        }
        Ok(BoundaryCondition(values))
    }

    /// The constant boundary condition.
    pub fn constant(ell: usize, value: f64) -> Self {
        BoundaryCondition(vec![value; 2 * ell])
    }

    /// Boundary condition seen from the root-face dart at position `k`.
    pub fn shifted(&self, k: usize) -> Self {
        let n = self.0.len();
        BoundaryCondition((0..n).map(|i| self.0[(i + k) % n]).collect())
    }

    /// Semi-perimeter.
    pub fn semi_perimeter(&self) -> usize {
        self.0.len() / 2
    }
}

/// Spins of the internal faces, listed in canonical face order.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Decoration {
    /// One spin per internal face.
    pub spins: Vec<f64>,
}

impl Decoration {
    /// `face,value` lines, faces numbered in canonical order.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("face,value\n");
        for (i, v) in self.spins.iter().enumerate() {
            s.push_str(&format!("{i},{v}\n"));
        }
        s
    }

    /// Parses the output of [`Decoration::to_csv`].
    pub fn from_csv(text: &str) -> Result<Self> {
        let mut rows: Vec<(usize, f64)> = Vec::new();
        for line in text.lines().skip(1).filter(|l| !l.trim().is_empty()) {
            let (a, b) = line.split_once(',').ok_or_else(|| Error::Parse(format!("bad decoration line {line:?}")))?;
            let i = a.trim().parse().map_err(|_| Error::Parse(format!("bad face id {a:?}")))?;
            let v = b.trim().parse().map_err(|_| Error::Parse(format!("bad spin {b:?}")))?;
            rows.push((i, v));
        }
        rows.sort_by_key(|r| r.0);
        if rows.iter().enumerate().any(|(k, r)| r.0 != k) {
            return Err(Error::Parse("face ids must be 0..n".into()));
        }
        Ok(Decoration { spins: rows.into_iter().map(|r| r.1).collect() })
    }
}

/// Parameters of the decorated Boltzmann law.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecoratedParams {
    /// Weight per internal face.
    pub q: f64,
    /// Largest number of internal faces in the truncated class.
    pub face_cap: usize,
    /// Largest accepted relative tail estimate.
    pub tail_tol: f64,
    /// Inverse temperature.
    pub beta: f64,
    /// Spin measure.
    pub mu: SpinMeasure,
}

impl Default for DecoratedParams {
    fn default() -> Self {
        DecoratedParams { q: 1.0 / 24.0, face_cap: 4, tail_tol: 0.05, beta: 1.0, mu: SpinMeasure::Ising }
    }
}

impl DecoratedParams {
    /// Checks ranges.
    pub fn validate(&self) -> Result<()> {
        if !(self.q >= 0.0 && self.q.is_finite()) {
            return Err(Error::InvalidArgument(format!("q = {} must be nonnegative", self.q)));
        }
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            return Err(Error::InvalidArgument(format!("beta = {} must be positive", self.beta)));
        }
        if self.tail_tol.is_nan() || self.tail_tol < 0.0 {
            return Err(Error::InvalidArgument("tail tolerance must be nonnegative".into()));
        }
        self.mu.validate()
    }
}

/// Edge multiplicities between faces of a hole-free map with phantom faces.
///
/// Internal faces are numbered in canonical order; phantom face `i` sits on the
/// `i`-th root-face dart.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FaceAdjacency {
    /// Number of internal faces.
    pub internal: usize,
    /// Number of phantom faces (`2ℓ`).
    pub phantom: usize,
    /// Internal–internal multiplicities, keyed by `(i, j)` with `i ≤ j`.
    pub internal_internal: BTreeMap<(usize, usize), usize>,
    /// Internal–phantom multiplicities, keyed by `(internal, phantom)`.
    pub internal_phantom: BTreeMap<(usize, usize), usize>,
    /// Phantom–phantom multiplicities, keyed by `(i, j)` with `i < j`.
    pub phantom_phantom: BTreeMap<(usize, usize), usize>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) enum Side {
    Internal(usize),
    Phantom(usize),
}

/// Face of every dart: internal (canonical index) or phantom (root-face position).
pub(crate) fn dart_sides(m: &MapWithHoles) -> Result<Vec<Side>> {
    if !m.is_hole_free() {
        return Err(Error::InvalidArgument("decorations are defined on hole-free maps".into()));
    }
    let lay = m.layout();
    let mut face_index = HashMap::new();
    for (i, f) in canonical_internal_faces(m).into_iter().enumerate() {
        face_index.insert(f, i);
    }
    let mut side = vec![Side::Phantom(0); m.base().num_darts()];
    for (k, d) in m.root_face_darts().into_iter().enumerate() {
        side[d] = Side::Phantom(k);
    }
    for (d, s) in side.iter_mut().enumerate() {
        let f = lay.face_of[d];
        if f != lay.root_face {
            *s = Side::Internal(face_index[&f]);
        }
    }
    Ok(side)
}

/// Edge multiplicities between internal and phantom faces.
pub fn face_adjacency(m: &MapWithHoles) -> Result<FaceAdjacency> {
    let mut adj = FaceAdjacency { phantom: 2 * m.semi_perimeter(), ..Default::default() };
    if m.is_cemetery() {
        return Ok(adj);
    }
    let side = dart_sides(m)?;
    adj.internal = m.internal_face_count();
    let b = m.base();
    for d in 0..b.num_darts() {
        let e = b.alpha(d);
        if d > e {
            continue;
        }
        match (side[d], side[e]) {
            (Side::Internal(i), Side::Internal(j)) => *adj.internal_internal.entry((i.min(j), i.max(j))).or_default() += 1,
            (Side::Internal(i), Side::Phantom(p)) | (Side::Phantom(p), Side::Internal(i)) => {
                *adj.internal_phantom.entry((i, p)).or_default() += 1
            }
            (Side::Phantom(i), Side::Phantom(j)) => *adj.phantom_phantom.entry((i.min(j), i.max(j))).or_default() += 1,
        }
    }
    Ok(adj)
}

fn check_boundary(adj: &FaceAdjacency, b: &BoundaryCondition) -> Result<()> {
    if b.0.len() != adj.phantom {
        return Err(Error::MissingSpin(format!("{} boundary values for {} phantom faces", b.0.len(), adj.phantom)));
    }
    Ok(())
}

/// Energy of the phantom–phantom edges.
fn boundary_energy(adj: &FaceAdjacency, b: &BoundaryCondition, beta: f64) -> f64 {
    adj.phantom_phantom.iter().map(|(&(i, j), &k)| 0.5 * beta * k as f64 * (b.0[i] - b.0[j]).powi(2)).sum()
}

fn energy(adj: &FaceAdjacency, s: &[f64], b: &BoundaryCondition, beta: f64) -> f64 {
    let mut h = boundary_energy(adj, b, beta);
    for (&(i, j), &k) in &adj.internal_internal {
        h += 0.5 * beta * k as f64 * (s[i] - s[j]).powi(2);
    }
    for (&(i, p), &k) in &adj.internal_phantom {
        h += 0.5 * beta * k as f64 * (s[i] - b.0[p]).powi(2);
    }
    h
}

/// The Hamiltonian `(β/2) Σ_edges (σ_i − σ_j)²`.
pub fn hamiltonian(m: &MapWithHoles, sigma: &Decoration, b: &BoundaryCondition, beta: f64) -> Result<f64> {
    let adj = face_adjacency(m)?;
    check_boundary(&adj, b)?;
    if sigma.spins.len() != adj.internal {
        return Err(Error::MissingSpin(format!("{} spins for {} internal faces", sigma.spins.len(), adj.internal)));
    }
    Ok(energy(&adj, &sigma.spins, b, beta))
}

/// Gaussian form `H(σ) = ½ σᵀAσ − hᵀσ + c`.
#[derive(Clone, Debug)]
pub struct QuadraticForm {
    /// Weighted face Laplacian restricted to internal faces.
    pub a: DMatrix<f64>,
    /// Linear term from the boundary spins.
    pub h: DVector<f64>,
    /// Constant term.
    pub c: f64,
}

/// The quadratic form of the Hamiltonian in the internal spins.
pub fn quadratic_form(adj: &FaceAdjacency, b: &BoundaryCondition, beta: f64) -> QuadraticForm {
    let n = adj.internal;
    let mut a = DMatrix::zeros(n, n);
    let mut h = DVector::zeros(n);
    let mut c = boundary_energy(adj, b, beta);
    for (&(i, j), &k) in &adj.internal_internal {
        if i != j {
            let w = beta * k as f64;
            a[(i, i)] += w;
            a[(j, j)] += w;
            a[(i, j)] -= w;
            a[(j, i)] -= w;
        }
    }
    for (&(i, p), &k) in &adj.internal_phantom {
        let w = beta * k as f64;
        a[(i, i)] += w;
        h[i] += w * b.0[p];
        c += 0.5 * w * b.0[p] * b.0[p];
    }
    QuadraticForm { a, h, c }
}

fn discrete_configs(n: usize, atoms: &[(f64, f64)]) -> Result<usize> {
    if n > MAX_SUMMATION_FACES {
        return Err(Error::TooManyFaces(n));
    }
    atoms.len().checked_pow(n as u32).filter(|&c| c <= 1 << 24).ok_or(Error::TooManyFaces(n))
}

fn config(mut idx: usize, n: usize, atoms: &[(f64, f64)], out: &mut [f64]) -> f64 {
    let mut w = 1.0;
    for slot in out.iter_mut().take(n) {
        let (v, wt) = atoms[idx % atoms.len()];
        *slot = v;
        w *= wt;
        idx /= atoms.len();
    }
    w
}

/// The decorated partition function `Z^b(m) = ∫ exp(−H) Π μ(dσ_i)`.
pub fn partition_decorated(m: &MapWithHoles, b: &BoundaryCondition, params: &DecoratedParams) -> Result<f64> {
    params.validate()?;
    let adj = face_adjacency(m)?;
    check_boundary(&adj, b)?;
    partition_from_adjacency(&adj, b, params)
}

fn partition_from_adjacency(adj: &FaceAdjacency, b: &BoundaryCondition, params: &DecoratedParams) -> Result<f64> {
    let n = adj.internal;
    match params.mu.atoms() {
        Some(atoms) => {
            let total = discrete_configs(n, &atoms)?;
            let mut s = vec![0.0; n];
            let mut z = 0.0;
            for idx in 0..total {
                let w = config(idx, n, &atoms, &mut s);
                z += w * (-energy(adj, &s, b, params.beta)).exp();
            }
            Ok(z)
        }
        None => {
            let f = quadratic_form(adj, b, params.beta);
            if n == 0 {
                return Ok((-f.c).exp());
            }
            let chol = Cholesky::new(f.a.clone()).ok_or(Error::SingularForm)?;
            let det = chol.determinant();
            if !(det > 0.0 && det.is_finite()) {
                return Err(Error::SingularForm);
            }
            let mean = chol.solve(&f.h);
            let expo = 0.5 * f.h.dot(&mean) - f.c;
            Ok((2.0 * std::f64::consts::PI).powf(n as f64 / 2.0) / det.sqrt() * expo.exp())
        }
    }
}

fn sample_spins_from<R: Rng + ?Sized>(adj: &FaceAdjacency, b: &BoundaryCondition, params: &DecoratedParams, rng: &mut R) -> Result<Decoration> {
    let n = adj.internal;
    match params.mu.atoms() {
        Some(atoms) => {
            let total = discrete_configs(n, &atoms)?;
            let mut s = vec![0.0; n];
            let weights: Vec<f64> = (0..total)
                .map(|idx| {
                    let w = config(idx, n, &atoms, &mut s);
                    w * (-energy(adj, &s, b, params.beta)).exp()
                })
                .collect();
            let idx = categorical(&weights, rng);
            config(idx, n, &atoms, &mut s);
            Ok(Decoration { spins: s })
        }
        None => {
            if n == 0 {
                return Ok(Decoration::default());
            }
            let f = quadratic_form(adj, b, params.beta);
            let chol = Cholesky::new(f.a.clone()).ok_or(Error::SingularForm)?;
            let mean = chol.solve(&f.h);
            let z = DVector::from_iterator(n, (0..n).map(|_| StandardNormal.sample(rng)));
            // A = L Lᵀ, so solving Lᵀx = z gives x with covariance A⁻¹.
            let x = chol.l().transpose().solve_upper_triangular(&z).ok_or(Error::SingularForm)?;
            Ok(Decoration { spins: (mean + x).iter().copied().collect() })
        }
    }
}

/// Draws spins from the Gibbs law of `m` with boundary condition `b`.
pub fn sample_spins<R: Rng + ?Sized>(m: &MapWithHoles, b: &BoundaryCondition, params: &DecoratedParams, rng: &mut R) -> Result<Decoration> {
    params.validate()?;
    let adj = face_adjacency(m)?;
    check_boundary(&adj, b)?;
    sample_spins_from(&adj, b, params, rng)
}

/// One map of the truncated decorated class with its weight.
#[derive(Clone, Debug)]
pub struct DecoratedEntry {
    /// The map.
    pub map: MapWithHoles,
    /// Number of internal faces.
    pub faces: usize,
    /// `Z^b(map)`.
    pub z: f64,
    /// `q^faces · Z^b(map)`.
    pub weight: f64,
    adjacency: FaceAdjacency,
}

/// The decorated Boltzmann law over maps with at most `cap` internal faces.
#[derive(Clone, Debug)]
pub struct DecoratedLaw {
    ell: usize,
    boundary: BoundaryCondition,
    params: DecoratedParams,
    cap: usize,
    entries: Vec<DecoratedEntry>,
    index: HashMap<Vec<u8>, usize>,
    total: f64,
    tail: f64,
}

impl DecoratedLaw {
    /// Enumerates the class with `f ≤ min(face_cap, (bound − ℓ)/2)` where
    /// `bound` is the exhaustive-generation bound.
    pub fn new(ell: usize, b: &BoundaryCondition, params: &DecoratedParams) -> Result<Self> {
        Self::with_cap(ell, b, params, params.face_cap)
    }

    /// Same as [`DecoratedLaw::new`] with an explicit face cap.
    pub fn with_cap(ell: usize, b: &BoundaryCondition, params: &DecoratedParams, cap: usize) -> Result<Self> {
        params.validate()?;
        if ell == 0 {
            return Err(Error::InvalidArgument("semi-perimeter must be positive".into()));
        }
        if b.0.len() != 2 * ell {
            return Err(Error::MissingSpin(format!("{} boundary values for semi-perimeter {ell}", b.0.len())));
        }
        let bound = DEFAULT_GENERATION_BOUND.max(ell);
        let cap = cap.min((bound - ell) / 2);
        let mut entries = Vec::new();
        let mut index = HashMap::new();
        let mut level = Vec::new();
        for f in 0..=cap {
            let qf = params.q.powi(f as i32);
            let mut s = 0.0;
            if qf > 0.0 || f == 0 {
                for m in generate_all_with_bound(ell, f, bound)? {
                    let adjacency = face_adjacency(&m)?;
                    let z = partition_from_adjacency(&adjacency, b, params)?;
                    let weight = qf * z;
                    s += weight;
                    index.insert(canonical_code(&m), entries.len());
                    entries.push(DecoratedEntry { map: m, faces: f, z, weight, adjacency });
                }
            }
            level.push(s);
        }
        let total: f64 = level.iter().sum();
        let tail = match level.len() {
            n if n >= 2 && level[n - 2] > 0.0 => {
                let r = level[n - 1] / level[n - 2];
                if r < 1.0 {
                    level[n - 1] * r / (1.0 - r) / total
                } else {
                    f64::INFINITY
                }
            }
            _ => 0.0,
        };
        if tail > params.tail_tol {
            return Err(Error::TailToleranceNotMet { tail, tol: params.tail_tol });
        }
        Ok(DecoratedLaw { ell, boundary: b.clone(), params: params.clone(), cap, entries, index, total, tail })
    }

    /// Semi-perimeter.
    pub fn ell(&self) -> usize {
        self.ell
    }

    /// Boundary condition.
    pub fn boundary(&self) -> &BoundaryCondition {
        &self.boundary
    }

    /// Face cap actually used.
    pub fn cap(&self) -> usize {
        self.cap
    }

    /// Truncated partition function `W^{ℓ,b}`.
    pub fn total(&self) -> f64 {
        self.total
    }

    /// Extrapolated relative weight beyond the cap.
    pub fn tail_estimate(&self) -> f64 {
        self.tail
    }

    /// All maps of the class.
    pub fn entries(&self) -> &[DecoratedEntry] {
        &self.entries
    }

    /// Probability of a map (marginal over spins); 0 outside the class.
    pub fn prob(&self, m: &MapWithHoles) -> f64 {
        self.index.get(&canonical_code(m)).map_or(0.0, |&i| self.entries[i].weight / self.total)
    }

    /// Probability of a map together with a discrete decoration.
    pub fn prob_decorated(&self, m: &MapWithHoles, sigma: &Decoration) -> Result<f64> {
        let atoms = self.params.mu.atoms().ok_or_else(|| Error::InvalidArgument("point probabilities need a discrete spin measure".into()))?;
        let Some(&i) = self.index.get(&canonical_code(m)) else { return Ok(0.0) };
        let e = &self.entries[i];
        if sigma.spins.len() != e.adjacency.internal {
            return Err(Error::MissingSpin("decoration size".into()));
        }
        let mut w = 1.0;
        for s in &sigma.spins {
            w *= atoms.iter().find(|a| a.0 == *s).ok_or_else(|| Error::MissingSpin(format!("{s} outside the support")))?.1;
        }
        let h = energy(&e.adjacency, &sigma.spins, &self.boundary, self.params.beta);
        Ok(self.params.q.powi(e.faces as i32) * w * (-h).exp() / self.total)
    }

    /// Every (map, decoration) pair with its probability (discrete spins only).
    pub fn decorated_classes(&self) -> Result<Vec<(Vec<u8>, f64)>> {
        let atoms = self.params.mu.atoms().ok_or_else(|| Error::InvalidArgument("classes need a discrete spin measure".into()))?;
        let mut out = Vec::new();
        for e in &self.entries {
            let n = e.adjacency.internal;
            let total = discrete_configs(n, &atoms)?;
            let code = canonical_code(&e.map);
            let mut s = vec![0.0; n];
            for idx in 0..total {
                let w = config(idx, n, &atoms, &mut s);
                let p = self.params.q.powi(e.faces as i32) * w * (-energy(&e.adjacency, &s, &self.boundary, self.params.beta)).exp() / self.total;
                out.push((class_key(&code, &s), p));
            }
        }
        Ok(out)
    }

    /// Draws a map and its spins.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<(MapWithHoles, Decoration)> {
        let weights: Vec<f64> = self.entries.iter().map(|e| e.weight).collect();
        let e = &self.entries[categorical(&weights, rng)];
        let sigma = sample_spins_from(&e.adjacency, &self.boundary, &self.params, rng)?;
        Ok((e.map.clone(), sigma))
    }
}

/// Key of a map with discrete spins.
fn class_key(code: &[u8], spins: &[f64]) -> Vec<u8> {
    let mut k = code.to_vec();
    k.push(0xff);
    for s in spins {
        k.extend_from_slice(&s.to_bits().to_le_bytes());
    }
    k
}

/// Draws a decorated map from the truncated law.
pub fn sample_decorated<R: Rng + ?Sized>(
    ell: usize,
    b: &BoundaryCondition,
    params: &DecoratedParams,
    rng: &mut R,
) -> Result<(MapWithHoles, Decoration)> {
    DecoratedLaw::new(ell, b, params)?.sample(rng)
}

/// Largest `|P(m1)/P(m2) − Z(m1)/Z(m2)|` over pairs of maps with the same face
/// count `f ≤ fmax`, where `Z` is recomputed from scratch.
pub fn gibbs_ratio_check(ell: usize, b: &BoundaryCondition, fmax: usize, params: &DecoratedParams) -> Result<f64> {
    let unchecked = DecoratedParams { tail_tol: f64::INFINITY, ..params.clone() };
    let law = DecoratedLaw::with_cap(ell, b, &unchecked, fmax)?;
    if law.cap() < fmax {
        return Err(Error::CensusMissing(format!("Q^({ell},{fmax}) beyond the generation bound")));
    }
    let mut worst: f64 = 0.0;
    for f in 0..=fmax {
        let items: Vec<(f64, f64)> = law
            .entries()
            .iter()
            .filter(|e| e.faces == f)
            .map(|e| Ok((law.prob(&e.map), partition_decorated(&e.map, b, params)?)))
            .collect::<Result<_>>()?;
        for (p1, z1) in &items {
            for (p2, z2) in &items {
                worst = worst.max((p1 / p2 - z1 / z2).abs());
            }
        }
    }
    Ok(worst)
}

/// Boundary condition seen by the fill of hole `i` of `subq`: the spin of the
/// face across each hole edge, in fill order.
pub fn hole_boundary(subq: &MapWithHoles, i: usize, spin_of_face: &dyn Fn(usize) -> Option<f64>, b: &BoundaryCondition) -> Result<BoundaryCondition> {
    let lay = subq.layout();
    let rf = subq.root_face_darts();
    let mut out = Vec::new();
    for p in subq.hole_darts_fill_order(i) {
        let a = subq.base().alpha(p);
        let f = lay.face_of[a];
        let v = if f == lay.root_face {
            b.0[rf.iter().position(|&d| d == a).expect("root-face dart")]
        } else {
            spin_of_face(f).ok_or_else(|| Error::MissingSpin(format!("hole {i} borders a face without a spin")))?
        };
        out.push(v);
    }
    Ok(BoundaryCondition(out))
}

type Observation = (Vec<f64>, Vec<(Vec<u8>, Vec<f64>)>);

/// Weak Markov test for decorated maps.
///
/// Samples are conditioned on containing `subq` and stratified by the spins of
/// its internal faces (exact values for discrete measures, quantile bins for the
/// Gaussian one). In each stratum every hole's fill is compared with the
/// decorated law whose boundary condition is read across the hole's edges,
/// truncated at the face budget left by `subq`. Discrete measures test the
/// joint law of fill and spins; the Gaussian one tests the fill's map law with
/// the bin-median spins as boundary values. Per-stratum statistics are summed
/// into the combined result.
pub fn decorated_weak_markov_test<R: Rng + ?Sized>(
    ell: usize,
    b: &BoundaryCondition,
    params: &DecoratedParams,
    subq: &MapWithHoles,
    n: usize,
    rng: &mut R,
    threads: usize,
) -> Result<MarkovTestReport> {
    let law = DecoratedLaw::new(ell, b, params)?;
    let whole = subq.is_cemetery();
    if !whole {
        if subq.semi_perimeter() != ell {
            return Err(Error::WrongPerimeter { expected: ell, found: subq.semi_perimeter() });
        }
        if subq.num_holes() == 0 {
            return Err(Error::InvalidArgument("the submap needs at least one hole".into()));
        }
        crate::markov::tree_witness(subq)?;
    }
    let sub_faces = canonical_internal_faces(subq);
    let discrete = params.mu.atoms().is_some();
    let chunks = run_chunks(rng, n, threads, |r, count| -> Result<Vec<Observation>> {
        let mut out = Vec::new();
        for _ in 0..count {
            let (q, sigma) = law.sample(r)?;
            if whole {
                out.push((Vec::new(), vec![(canonical_code(&q), sigma.spins.clone())]));
                continue;
            }
            let Some(emb) = embed(subq, &q) else { continue };
            let qlay = q.layout();
            let qidx: HashMap<usize, usize> = canonical_internal_faces(&q).into_iter().enumerate().map(|(i, f)| (f, i)).collect();
            let slay = subq.layout();
            let revealed: Vec<f64> = sub_faces.iter().map(|&f| sigma.spins[qidx[&qlay.face_of[emb.dart_map[slay.cycles[f][0]]]]]).collect();
            let mut fills = Vec::new();
            for (fill, dm) in emb.fills.iter().zip(&emb.fill_dart_maps) {
                let flay = fill.layout();
                let spins: Vec<f64> = canonical_internal_faces(fill)
                    .into_iter()
                    .map(|f| sigma.spins[qidx[&qlay.face_of[dm[flay.cycles[f][0]]]]])
                    .collect();
                fills.push((canonical_code(fill), spins));
            }
            out.push((revealed, fills));
        }
        Ok(out)
    });
    let mut obs: Vec<Observation> = Vec::new();
    for c in chunks {
        obs.extend(c?);
    }
    if obs.is_empty() {
        return Err(Error::EventNeverHit);
    }
    // Strata: exact revealed spins, or quantile bins per revealed spin.
    let dims = sub_faces.len();
    let mut edges: Vec<Vec<f64>> = Vec::new();
    if !discrete {
        for d in 0..dims {
            let mut v: Vec<f64> = obs.iter().map(|o| o.0[d]).collect();
            v.sort_by(f64::total_cmp);
            edges.push((1..GAUSSIAN_BINS).map(|k| v[k * v.len() / GAUSSIAN_BINS]).collect());
        }
    }
    let stratum_of = |rev: &[f64]| -> Vec<i64> {
        if discrete {
            rev.iter().map(|x| x.to_bits() as i64).collect()
        } else {
            rev.iter().zip(&edges).map(|(x, e)| e.iter().filter(|&&t| *x >= t).count() as i64).collect()
        }
    };
    let mut strata: BTreeMap<Vec<i64>, Vec<usize>> = BTreeMap::new();
    for (i, o) in obs.iter().enumerate() {
        strata.entry(stratum_of(&o.0)).or_default().push(i);
    }
    let hole_count = if whole { 1 } else { subq.num_holes() };
    let slay = subq.layout();
    let mut report = MarkovTestReport {
        samples: n,
        reference: format!("decorated Boltzmann fills, q = {}, beta = {}, {:?}", params.q, params.beta, params.mu),
        truncation_note: format!(
            "law truncated at {} faces (relative tail estimate {:.2e}); fill references use the remaining face budget",
            law.cap(),
            law.tail_estimate()
        ),
        ..Default::default()
    };
    for (sid, (_, members)) in strata.iter().enumerate() {
        if members.len() < MIN_STRATUM_HITS {
            if !discrete {
                return Err(Error::BinTooThin(format!("stratum {sid} has {} samples", members.len())));
            }
            report.skipped_strata += 1;
            continue;
        }
        let revealed: Vec<f64> = (0..dims)
            .map(|d| {
                let v: Vec<f64> = members.iter().map(|&i| obs[i].0[d]).collect();
                median(&v)
            })
            .collect();
        let spin_of_face = |f: usize| sub_faces.iter().position(|&g| g == f).map(|i| revealed[i]);
        let budget = law.cap() - subq.internal_face_count().min(law.cap());
        let mut tests = Vec::new();
        let mut degenerate = false;
        for h in 0..hole_count {
            let (k, bh) = if whole { (ell, b.clone()) } else {
                let bh = hole_boundary(subq, h, &spin_of_face, b)?;
                (slay.cycles[slay.face_of[subq.marks()[h]]].len() / 2, bh)
            };
            let reference = DecoratedLaw::with_cap(k, &bh, &DecoratedParams { tail_tol: f64::INFINITY, ..params.clone() }, budget)?;
            let classes: Vec<(Vec<u8>, f64)> = if discrete {
                reference.decorated_classes()?
            } else {
                reference.entries().iter().map(|e| (canonical_code(&e.map), e.weight / reference.total())).collect()
            };
            let pos: HashMap<&[u8], usize> = classes.iter().enumerate().map(|(i, c)| (c.0.as_slice(), i)).collect();
            let mut observed = vec![0.0; classes.len() + 1];
            for &i in members {
                let (code, spins) = &obs[i].1[h];
                let key = if discrete { class_key(code, spins) } else { code.clone() };
                match pos.get(key.as_slice()) {
                    Some(&c) => observed[c] += 1.0,
                    None => observed[classes.len()] += 1.0,
                }
            }
            let m = members.len() as f64;
            let mut expected: Vec<f64> = classes.iter().map(|c| c.1 * m).collect();
            expected.push(0.0);
            if observed[classes.len()] == 0.0 {
                observed.pop();
                expected.pop();
            }
            match chi_square_gof(&observed, &expected) {
                Ok(result) => tests.push(HoleTest { stratum: format!("stratum {sid}"), hole: h, semi_perimeter: k, hits: members.len(), result }),
                Err(Error::DegenerateTable(_)) => degenerate = true,
                Err(e) => return Err(e),
            }
        }
        if degenerate {
            report.skipped_strata += 1;
            continue;
        }
        report.hits += members.len();
        report.marginal.extend(tests);
    }
    if report.marginal.is_empty() {
        return Err(Error::EventNeverHit);
    }
    let stat: f64 = report.marginal.iter().map(|t| t.result.statistic).sum();
    let dof: usize = report.marginal.iter().map(|t| t.result.dof).sum();
    report.combined = Some(TestResult { statistic: stat, dof, p_value: chi2_sf(stat, dof) });
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::markov::single_type1;
    use crate::peeling::decode;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn square() -> MapWithHoles {
        // The unique map with semi-perimeter 2 and one internal face that is a
        // plain quadrilateral.
        crate::census::generate_all(2, 1)
            .unwrap()
            .into_iter()
            .find(|m| face_adjacency(m).unwrap().internal_phantom.len() == 4)
            .unwrap()
    }

    #[test]
    fn adjacency_of_square() {
        let adj = face_adjacency(&square()).unwrap();
        assert_eq!(adj.internal, 1);
        assert_eq!(adj.internal_phantom.values().copied().collect::<Vec<_>>(), vec![1, 1, 1, 1]);
        assert!(adj.internal_internal.is_empty() && adj.phantom_phantom.is_empty());
    }

    #[test]
    fn adjacency_of_tree() {
        let adj = face_adjacency(&decode("T2(0,0)").unwrap()).unwrap();
        assert_eq!(adj.internal, 0);
        assert!(adj.internal_internal.is_empty() && adj.internal_phantom.is_empty());
        assert_eq!(adj.phantom_phantom.get(&(0, 1)), Some(&1));
    }

    #[test]
    fn double_adjacency() {
        let found = crate::census::generate_all(1, 2)
            .unwrap()
            .into_iter()
            .any(|m| face_adjacency(&m).unwrap().internal_internal.values().any(|&k| k == 2));
        assert!(found);
    }

    #[test]
    fn square_energy_and_ising_z() {
        let m = square();
        let b = BoundaryCondition::constant(2, 1.0);
        assert_eq!(hamiltonian(&m, &Decoration { spins: vec![-1.0] }, &b, 1.0).unwrap(), 8.0);
        assert_eq!(hamiltonian(&m, &Decoration { spins: vec![1.0] }, &b, 1.0).unwrap(), 0.0);
        assert_eq!(hamiltonian(&m, &Decoration { spins: vec![-1.0] }, &b, 2.5).unwrap(), 20.0);
        let z = partition_decorated(&m, &b, &DecoratedParams::default()).unwrap();
        assert!((z - (1.0 + (-8.0f64).exp())).abs() < 1e-15);
        assert!(matches!(hamiltonian(&m, &Decoration::default(), &b, 1.0), Err(Error::MissingSpin(_))));
    }

    #[test]
    fn flip_symmetry() {
        for m in crate::census::generate_all(2, 2).unwrap() {
            let b = BoundaryCondition(vec![1.0, -1.0, 1.0, 1.0]);
            let fb = BoundaryCondition(b.0.iter().map(|x| -x).collect());
            let s = Decoration { spins: vec![1.0, -1.0] };
            let fs = Decoration { spins: vec![-1.0, 1.0] };
            assert_eq!(hamiltonian(&m, &s, &b, 1.0).unwrap(), hamiltonian(&m, &fs, &fb, 1.0).unwrap());
        }
    }

    #[test]
    fn tree_partition_is_one_for_constant_boundary() {
        let t = decode("T2(0,1),T2(0,0)").unwrap();
        let b = BoundaryCondition::constant(2, 1.0);
        assert_eq!(partition_decorated(&t, &b, &DecoratedParams::default()).unwrap(), 1.0);
        let g = DecoratedParams { mu: SpinMeasure::Gaussian, ..Default::default() };
        assert_eq!(partition_decorated(&t, &b, &g).unwrap(), 1.0);
    }

    #[test]
    fn gaussian_single_face_closed_form() {
        // One face with four phantom neighbours: Z = sqrt(2π/4β) exp(−(β/2)(Σb² − (Σb)²/4)).
        let m = square();
        let b = BoundaryCondition(vec![0.5, -1.0, 2.0, 0.0]);
        let p = DecoratedParams { mu: SpinMeasure::Gaussian, beta: 1.5, ..Default::default() };
        let s: f64 = b.0.iter().sum();
        let s2: f64 = b.0.iter().map(|x| x * x).sum();
        let expect = (2.0 * std::f64::consts::PI / (4.0 * 1.5)).sqrt() * (-(0.75) * (s2 - s * s / 4.0)).exp();
        let z = partition_decorated(&m, &b, &p).unwrap();
        assert!((z / expect - 1.0).abs() < 1e-12);
    }

    #[test]
    fn law_tree_only_at_q_zero() {
        let p = DecoratedParams { q: 0.0, ..Default::default() };
        let b = BoundaryCondition::constant(2, 1.0);
        let law = DecoratedLaw::new(2, &b, &p).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..20 {
            let (m, s) = law.sample(&mut rng).unwrap();
            assert_eq!(m.internal_face_count(), 0);
            assert!(s.spins.is_empty());
        }
    }

    #[test]
    fn gibbs_ratios() {
        let b = BoundaryCondition::constant(2, 1.0);
        assert!(gibbs_ratio_check(2, &b, 1, &DecoratedParams::default()).unwrap() <= 1e-12);
        assert_eq!(gibbs_ratio_check(2, &b, 0, &DecoratedParams::default()).unwrap(), 0.0);
        let g = DecoratedParams { mu: SpinMeasure::Gaussian, ..Default::default() };
        assert!(gibbs_ratio_check(2, &BoundaryCondition(vec![0.3, -0.2, 1.0, 0.0]), 2, &g).unwrap() <= 1e-8);
    }

    #[test]
    fn reroot_with_shifted_boundary() {
        let b = BoundaryCondition(vec![1.0, -1.0, -1.0, 1.0, 1.0, -1.0]);
        let p = DecoratedParams::default();
        for m in crate::census::generate_all(3, 1).unwrap() {
            let z = partition_decorated(&m, &b, &p).unwrap();
            for (k, d) in m.root_face_darts().into_iter().enumerate() {
                let r = crate::map::reroot(&m, d).unwrap();
                assert_eq!(partition_decorated(&r, &b.shifted(k), &p).unwrap(), z);
            }
        }
    }

    #[test]
    fn single_face_spin_frequency() {
        let m = square();
        let b = BoundaryCondition(vec![1.0, 1.0, 1.0, -1.0]);
        let p = DecoratedParams::default();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 20_000;
        let plus = (0..n).filter(|_| sample_spins(&m, &b, &p, &mut rng).unwrap().spins[0] == 1.0).count() as f64;
        // H(+1) = 2, H(−1) = 6.
        let expect = (-2.0f64).exp() / ((-2.0f64).exp() + (-6.0f64).exp());
        let sd = (expect * (1.0 - expect) / n as f64).sqrt();
        assert!((plus / n as f64 - expect).abs() < 4.0 * sd);
    }

    #[test]
    fn gaussian_sampler_moments() {
        let m = square();
        let b = BoundaryCondition(vec![1.0, 1.0, 3.0, -1.0]);
        let p = DecoratedParams { mu: SpinMeasure::Gaussian, ..Default::default() };
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let xs: Vec<f64> = (0..20_000).map(|_| sample_spins(&m, &b, &p, &mut rng).unwrap().spins[0]).collect();
        let mean = crate::stats::mean(&xs);
        let var = crate::stats::variance(&xs);
        assert!((mean - 1.0).abs() < 4.0 * (0.25f64 / 20_000.0).sqrt());
        assert!((var - 0.25).abs() < 0.02);
    }

    #[test]
    fn csv_round_trip() {
        let d = Decoration { spins: vec![1.0, -1.0, 0.25] };
        assert_eq!(Decoration::from_csv(&d.to_csv()).unwrap(), d);
    }

    #[test]
    fn ising_weak_markov_small() {
        let b = BoundaryCondition::constant(1, 1.0);
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let r = decorated_weak_markov_test(1, &b, &DecoratedParams::default(), &single_type1(1).unwrap(), 40_000, &mut rng, 1).unwrap();
        assert!(r.marginal.len() == 2, "{r:?}");
        assert!(r.combined.unwrap().p_value > 1e-4, "{r:?}");
    }

    #[test]
    fn trivial_submap_self_consistency() {
        let b = BoundaryCondition(vec![1.0, -1.0]);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let r = decorated_weak_markov_test(1, &b, &DecoratedParams::default(), &MapWithHoles::cemetery(), 20_000, &mut rng, 1).unwrap();
        assert!(r.combined.unwrap().p_value > 1e-4);
    }

    #[test]
    fn gaussian_weak_markov_runs() {
        let b = BoundaryCondition::constant(1, 0.0);
        let p = DecoratedParams { mu: SpinMeasure::Gaussian, ..Default::default() };
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let r = decorated_weak_markov_test(1, &b, &p, &single_type1(1).unwrap(), 40_000, &mut rng, 1).unwrap();
        assert_eq!(r.marginal.len(), GAUSSIAN_BINS);
    }
}
