//! The q-Boltzmann law on quadrangulations with a fixed boundary.
//!
//! `W^ℓ = Σ_{f ≤ cap} N(ℓ, f) q^f` is computed exactly with rationals and the
//! neglected tail is estimated by geometric extrapolation of the last term ratio
//! (never below the asymptotic ratio `12q`). Samplers are exact on the truncated
//! class: they draw the face count first and then a uniform map with that many
//! faces by census-guided peeling.

use std::sync::Arc;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::census::{generate_codes_with_bound, shared_census, CensusTable};
use crate::error::{Error, Result};
use crate::map::MapWithHoles;
use crate::peeling::{Builder, PeelEvent};

/// Largest admissible weight per face.
pub const Q_CRITICAL: f64 = 1.0 / 12.0;

/// Parameters of the truncated Boltzmann law.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoltzmannParams {
    /// Weight per internal face, in `[0, 1/12]`.
    pub q: f64,
    /// Largest face count kept in the truncated law.
    pub face_cap: usize,
    /// Largest accepted relative tail of the partition function.
    pub tail_tol: f64,
}

impl Default for BoltzmannParams {
    fn default() -> Self {
        BoltzmannParams { q: 1.0 / 24.0, face_cap: 60, tail_tol: 1e-9 }
    }
}

impl BoltzmannParams {
    /// Parameters with the default cap and tolerance.
    pub fn with_q(q: f64) -> Self {
        BoltzmannParams { q, ..Default::default() }
    }

    /// Checks the range of `q` and the tolerance.
    pub fn validate(&self) -> Result<()> {
        if !(self.q.is_finite() && (0.0..=Q_CRITICAL).contains(&self.q)) {
            return Err(Error::InvalidArgument(format!("q = {} is outside [0, 1/12]", self.q)));
        }
        if self.tail_tol.is_nan() || self.tail_tol < 0.0 {
            return Err(Error::InvalidArgument("tail tolerance must be nonnegative".into()));
        }
        Ok(())
    }
}

/// A truncated partition function with its tail estimate.
#[derive(Clone, Debug, PartialEq)]
pub struct PartitionValue {
    /// Exact truncated sum.
    pub w: BigRational,
    /// Estimated neglected mass relative to `w`.
    pub tail_bound: f64,
}

impl PartitionValue {
    /// The truncated sum as a float.
    pub fn value(&self) -> f64 {
        self.w.to_f64().unwrap_or(f64::NAN)
    }
}

fn q_exact(q: f64) -> BigRational {
    BigRational::from_float(q).unwrap_or_else(BigRational::zero)
}

fn partition_from(census: &CensusTable, ell: usize, q: f64, cap: usize) -> Result<PartitionValue> {
    if !census.covers(ell, cap) {
        return Err(Error::CensusMissing(format!("N({ell}, f) for f ≤ {cap}")));
    }
    let qe = q_exact(q);
    let mut w = BigRational::zero();
    let mut qpow = BigRational::one();
    for f in 0..=cap {
        let n = BigRational::from_integer(BigInt::from(census.count(ell, f)?.clone()));
        w += &n * &qpow;
        qpow *= &qe;
        if q == 0.0 {
            break;
        }
    }
    let tail_bound = if q == 0.0 {
        0.0
    } else {
        let term = |f: usize| -> f64 { census.count_f64(ell, f).unwrap_or(0.0) * q.powi(f as i32) };
        let last = term(cap);
        let ratio = if cap > 0 && term(cap - 1) > 0.0 { last / term(cap - 1) } else { 0.0 };
        let r = ratio.max(12.0 * q);
        let wf = w.to_f64().unwrap_or(f64::INFINITY);
        if r >= 1.0 {
            f64::INFINITY
        } else {
            last * r / (1.0 - r) / wf
        }
    };
    Ok(PartitionValue { w, tail_bound })
}

/// The truncated partition function `W^ℓ`.
pub fn partition(ell: usize, params: &BoltzmannParams) -> Result<PartitionValue> {
    params.validate()?;
    let census = shared_census(ell, params.face_cap);
    let pv = partition_from(&census, ell, params.q, params.face_cap)?;
    if pv.tail_bound > params.tail_tol {
        return Err(Error::TailToleranceNotMet { tail: pv.tail_bound, tol: params.tail_tol });
    }
    Ok(pv)
}

/// Precomputed partition functions for semi-perimeters `0..=lmax + 1`.
#[derive(Clone, Debug)]
pub struct Boltzmann {
    params: BoltzmannParams,
    census: Arc<CensusTable>,
    exact: Vec<PartitionValue>,
    w: Vec<f64>,
    face_weights: Vec<Vec<f64>>,
}

impl Boltzmann {
    /// Computes `W^0, …, W^{lmax+1}`. Tail tolerances are checked when a value is used.
    pub fn new(params: BoltzmannParams, lmax: usize) -> Result<Self> {
        params.validate()?;
        let census = shared_census(lmax + 1, params.face_cap);
        let mut exact = Vec::with_capacity(lmax + 2);
        for ell in 0..=lmax + 1 {
            exact.push(partition_from(&census, ell, params.q, params.face_cap)?);
        }
        let w = exact.iter().map(|p| p.value()).collect();
        let face_weights = (0..=lmax + 1)
            .map(|ell| {
                (0..=params.face_cap)
                    .map(|f| census.count_f64(ell, f).unwrap_or(0.0) * params.q.powi(f as i32))
                    .collect()
            })
            .collect();
        Ok(Boltzmann { params, census, exact, w, face_weights })
    }

    /// Parameters of the law.
    pub fn params(&self) -> &BoltzmannParams {
        &self.params
    }

    /// Census table backing the law.
    pub fn census(&self) -> &Arc<CensusTable> {
        &self.census
    }

    /// Largest semi-perimeter with a precomputed partition function.
    pub fn max_ell(&self) -> usize {
        self.w.len() - 1
    }

    fn check(&self, ell: usize) -> Result<()> {
        let pv = self.exact.get(ell).ok_or_else(|| Error::CensusMissing(format!("W^{ell} not precomputed")))?;
        if pv.tail_bound > self.params.tail_tol {
            return Err(Error::TailToleranceNotMet { tail: pv.tail_bound, tol: self.params.tail_tol });
        }
        Ok(())
    }

    /// Exact truncated `W^ℓ` with its tail bound.
    pub fn partition(&self, ell: usize) -> Result<&PartitionValue> {
        self.check(ell)?;
        Ok(&self.exact[ell])
    }

    /// `W^ℓ` as a float.
    pub fn w(&self, ell: usize) -> Result<f64> {
        self.check(ell)?;
        Ok(self.w[ell])
    }

    /// `q^f / W^ℓ`: the probability of one map with `f` faces and semi-perimeter `ℓ`.
    pub fn prob_of(&self, ell: usize, f: usize) -> Result<f64> {
        if f > self.params.face_cap {
            return Ok(0.0);
        }
        let w = self.w(ell)?;
        if self.params.q == 0.0 {
            return Ok(if f == 0 { 1.0 / w } else { 0.0 });
        }
        Ok((f as f64 * self.params.q.ln() - w.ln()).exp())
    }

    /// Probability of a hole-free map.
    pub fn prob_exact(&self, m: &MapWithHoles) -> Result<f64> {
        if !m.is_hole_free() || m.is_cemetery() {
            return Err(Error::InvalidArgument("prob_exact expects a hole-free map".into()));
        }
        self.prob_of(m.semi_perimeter(), m.internal_face_count())
    }

    /// Law of the first peeling event at a hole of semi-perimeter `ℓ`.
    pub fn peel_probabilities(&self, ell: usize) -> Result<Vec<(PeelEvent, f64)>> {
        if ell == 0 {
            return Err(Error::InvalidArgument("no peeling on a hole of semi-perimeter 0".into()));
        }
        let w = self.w(ell)?;
        let mut out = Vec::with_capacity(ell + 1);
        let p1 = if self.params.q == 0.0 { 0.0 } else { self.params.q * self.w(ell + 1)? / w };
        out.push((PeelEvent::Type1, p1));
        for l1 in 0..ell {
            let l2 = ell - 1 - l1;
            out.push((PeelEvent::Type2(l1, l2), self.w(l1)? * self.w(l2)? / w));
        }
        Ok(out)
    }

    /// Probability of one peeling event at a hole of semi-perimeter `ℓ`.
    pub fn step_probability(&self, ell: usize, ev: PeelEvent) -> Result<f64> {
        match ev {
            PeelEvent::Type1 => {
                if self.params.q == 0.0 {
                    Ok(0.0)
                } else {
                    Ok(self.params.q * self.w(ell + 1)? / self.w(ell)?)
                }
            }
            PeelEvent::Type2(l1, l2) => {
                if l1 + l2 + 1 != ell {
                    return Err(Error::SplitArityMismatch { l1, l2, ell });
                }
                Ok(self.w(l1)? * self.w(l2)? / self.w(ell)?)
            }
        }
    }

    /// Draws the face count of a map with semi-perimeter `ℓ`.
    pub fn sample_face_count<R: Rng + ?Sized>(&self, ell: usize, rng: &mut R) -> Result<usize> {
        self.check(ell)?;
        Ok(categorical(&self.face_weights[ell], rng))
    }

    /// Draws a map from the truncated Boltzmann law.
    pub fn sample<R: Rng + ?Sized>(&self, ell: usize, sampler: &UniformSampler, rng: &mut R) -> Result<MapWithHoles> {
        let f = self.sample_face_count(ell, rng)?;
        sampler.sample(ell, f, rng)
    }
}

/// Draws an index with probability proportional to nonnegative weights.
pub fn categorical<R: Rng + ?Sized>(weights: &[f64], rng: &mut R) -> usize {
    let total: f64 = weights.iter().sum();
    let mut u = rng.random::<f64>() * total;
    for (i, &w) in weights.iter().enumerate() {
        if u < w {
            return i;
        }
        u -= w;
    }
    weights.iter().rposition(|&w| w > 0.0).unwrap_or(0)
}

/// Exactly uniform sampler on `Q^{ℓ,f}` by census-guided peeling.
///
/// Every hole carries its own face budget. A step at a hole `(k, g)` chooses a
/// type-1 event with weight `N(k+1, g−1)` or a split `(l1, l2)` with face budgets
/// `(g1, g − g1)` with weight `N(l1, g1) N(l2, g − g1)`; these weights sum to `N(k, g)`.
#[derive(Clone, Debug)]
pub struct UniformSampler {
    counts: Vec<Vec<f64>>,
    lmax: usize,
    fmax: usize,
}

impl UniformSampler {
    /// Sampler for all `(ℓ, f)` with `ℓ ≤ lmax` and `f ≤ fmax`.
    pub fn new(lmax: usize, fmax: usize) -> Self {
        let census = shared_census(lmax, fmax);
        let top = lmax + fmax;
        let counts = (0..=top)
            .map(|l| (0..=fmax.min(top - l)).map(|f| census.count_f64(l, f).unwrap_or(0.0)).collect())
            .collect();
        UniformSampler { counts, lmax, fmax }
    }

    fn n(&self, l: usize, f: usize) -> f64 {
        self.counts.get(l).and_then(|r| r.get(f)).copied().unwrap_or(0.0)
    }

    /// Draws a uniform map of `Q^{ℓ,f}`.
    pub fn sample<R: Rng + ?Sized>(&self, ell: usize, f: usize, rng: &mut R) -> Result<MapWithHoles> {
        Ok(self.sample_events(ell, f, rng)?.1)
    }

    /// Draws a uniform map of `Q^{ℓ,f}` together with its canonical event list.
    pub fn sample_events<R: Rng + ?Sized>(&self, ell: usize, f: usize, rng: &mut R) -> Result<(Vec<PeelEvent>, MapWithHoles)> {
        if ell > self.lmax || f > self.fmax {
            return Err(Error::CensusMissing(format!("sampler covers ℓ ≤ {}, f ≤ {}", self.lmax, self.fmax)));
        }
        if ell == 0 {
            return Err(Error::InvalidArgument("semi-perimeter must be positive".into()));
        }
        if self.n(ell, f) == 0.0 {
            return Err(Error::EmptyClass);
        }
        let mut b = Builder::initial(ell)?;
        let mut budgets = vec![f];
        let mut events = Vec::new();
        let mut weights = Vec::new();
        let mut choices = Vec::new();
        while !b.is_complete() {
            let k = b.hole_half_perimeters()[0];
            let g = budgets[0];
            weights.clear();
            choices.clear();
            if g > 0 {
                weights.push(self.n(k + 1, g - 1));
                choices.push((PeelEvent::Type1, 0));
            }
            for l1 in 0..k {
                let l2 = k - 1 - l1;
                for g1 in 0..=g {
                    let w = self.n(l1, g1) * self.n(l2, g - g1);
                    if w > 0.0 {
                        weights.push(w);
                        choices.push((PeelEvent::Type2(l1, l2), g1));
                    }
                }
            }
            let (ev, g1) = choices[categorical(&weights, rng)];
            b.peel(b.marks()[0], ev)?;
            match ev {
                PeelEvent::Type1 => budgets[0] = g - 1,
                PeelEvent::Type2(l1, l2) => {
                    let mut parts = Vec::with_capacity(2);
                    if l1 > 0 {
                        parts.push(g1);
                    }
                    if l2 > 0 {
                        parts.push(g - g1);
                    }
                    budgets.splice(0..1, parts);
                }
            }
            events.push(ev);
        }
        Ok((events, b.to_map()))
    }
}

/// `q^f / W^ℓ` for a hole-free map.
pub fn prob_exact(m: &MapWithHoles, params: &BoltzmannParams) -> Result<f64> {
    let b = Boltzmann::new(*params, m.semi_perimeter())?;
    b.prob_exact(m)
}

/// Law of the first peeling event at a hole of semi-perimeter `ℓ`.
pub fn peel_probabilities(ell: usize, params: &BoltzmannParams) -> Result<Vec<(PeelEvent, f64)>> {
    Boltzmann::new(*params, ell)?.peel_probabilities(ell)
}

/// Largest relative gap `|P(m) − Π step probabilities| / P(m)` over every map
/// with `ℓ ≤ lmax` and `f ≤ fmax`, the product running along the canonical
/// exploration.
pub fn decomposition_check(lmax: usize, fmax: usize, params: &BoltzmannParams) -> Result<f64> {
    let b = Boltzmann::new(*params, lmax + fmax)?;
    let mut worst = 0.0f64;
    for l in 1..=lmax {
        for f in 0..=fmax {
            for (events, m) in generate_codes_with_bound(l, f, l + 2 * f)? {
                let mut builder = Builder::initial(l)?;
                let mut prod = 1.0;
                for ev in events {
                    prod *= b.step_probability(builder.hole_half_perimeters()[0], ev)?;
                    builder.peel(builder.marks()[0], ev)?;
                }
                let p = b.prob_exact(&m)?;
                worst = worst.max(((prod - p) / p).abs());
            }
        }
    }
    Ok(worst)
}

/// A uniform map of `Q^{ℓ,f}`.
pub fn sample_uniform<R: Rng + ?Sized>(ell: usize, f: usize, rng: &mut R) -> Result<MapWithHoles> {
    UniformSampler::new(ell, f).sample(ell, f, rng)
}

/// A map from the truncated Boltzmann law.
pub fn sample_boltzmann<R: Rng + ?Sized>(ell: usize, params: &BoltzmannParams, rng: &mut R) -> Result<MapWithHoles> {
    let b = Boltzmann::new(*params, ell)?;
    b.check(ell)?;
    let sampler = UniformSampler::new(ell, params.face_cap);
    b.sample(ell, &sampler, rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::map::canonical_code;
    use crate::peeling::encode;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn catalan(n: u64) -> u64 {
        (0..n).fold(1u64, |c, k| c * 2 * (2 * k + 1) / (k + 2))
    }

    #[test]
    fn q_zero_is_catalan() {
        let p = BoltzmannParams { q: 0.0, ..Default::default() };
        for l in 1..6 {
            let pv = partition(l, &p).unwrap();
            assert_eq!(pv.w, BigRational::from_integer(BigInt::from(catalan(l as u64))));
            assert_eq!(pv.tail_bound, 0.0);
            let probs = peel_probabilities(l, &p).unwrap();
            assert_eq!(probs[0].1, 0.0);
            let s: f64 = probs.iter().map(|x| x.1).sum();
            assert!((s - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn cap_zero_gives_one_tree() {
        let p = BoltzmannParams { q: 1.0 / 24.0, face_cap: 0, tail_tol: f64::INFINITY };
        assert_eq!(partition(1, &p).unwrap().w, BigRational::one());
        let strict = BoltzmannParams { tail_tol: 1e-9, ..p };
        assert!(matches!(partition(1, &strict), Err(Error::TailToleranceNotMet { .. })));
    }

    #[test]
    fn default_tail_is_small() {
        let pv = partition(1, &BoltzmannParams { q: 1.0 / 24.0, face_cap: 60, tail_tol: 1e-9 }).unwrap();
        assert!(pv.tail_bound < 1e-9);
        assert!(pv.value() > 1.0);
    }

    #[test]
    fn q_out_of_range() {
        assert!(partition(1, &BoltzmannParams::with_q(0.1)).is_err());
        assert!(partition(1, &BoltzmannParams::with_q(-0.01)).is_err());
    }

    /// `W^1` from the closed form of `N(1, f)` summed in exact rationals.
    #[test]
    fn w1_matches_closed_form() {
        let q = BigRational::new(BigInt::from(1), BigInt::from(32));
        let mut w = BigRational::zero();
        let mut n = BigRational::one();
        let mut qp = BigRational::one();
        for f in 0..=40u32 {
            w += &n * &qp;
            // N(1, f+1) / N(1, f) = 6(2f+1)/(f+3).
            n = n * BigRational::new(BigInt::from(6 * (2 * f + 1)), BigInt::from(f + 3));
            qp *= &q;
        }
        let p = BoltzmannParams { q: 1.0 / 32.0, face_cap: 40, tail_tol: 1e-6 };
        assert_eq!(partition(1, &p).unwrap().w, w);
    }

    #[test]
    fn step_product_equals_point_probability() {
        assert!(decomposition_check(3, 3, &BoltzmannParams::default()).unwrap() < 1e-9);
    }

    #[test]
    fn uniform_singleton_and_empty() {
        let s = UniformSampler::new(3, 3);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let t = s.sample(1, 0, &mut rng).unwrap();
        assert_eq!(encode(&t).unwrap(), "T2(0,0)");
        let mut codes = std::collections::HashSet::new();
        for _ in 0..400 {
            codes.insert(canonical_code(&s.sample(2, 1, &mut rng).unwrap()));
        }
        assert_eq!(codes.len(), 9);
    }

    #[test]
    fn q_zero_samples_trees() {
        let p = BoltzmannParams { q: 0.0, ..Default::default() };
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..20 {
            assert_eq!(sample_boltzmann(3, &p, &mut rng).unwrap().internal_face_count(), 0);
        }
    }
}
