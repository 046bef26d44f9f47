//! Markov properties of Boltzmann quadrangulations: statistical tests,
//! executable stopping rules, and the right-process stopping map.
//!
//! The weak test conditions Boltzmann samples on containing a fixed submap and
//! compares the law of every fill with the Boltzmann law of the hole's
//! semi-perimeter. The strong test replaces the fixed submap by the output of a
//! stopping rule and stratifies by its value.

use std::collections::{HashMap, HashSet};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::boltzmann::{Boltzmann, BoltzmannParams, UniformSampler};
use crate::census::generate_all_with_bound;
use crate::error::{Error, Result};
use crate::map::{canonical_code, canonical_labeling, embed, glue, is_submap, reroot, FaceKind, Layout, MapWithHoles};
use crate::par::run_chunks;
use crate::peeling::{decode, replay, Builder, Explorer, PeelEvent};
use crate::stats::{chi2_sf, chi_square_gof, independence_test, TestResult};

/// Bound on `k + 2f` for the enumerated reference classes of a fill.
pub const REFERENCE_BOUND: usize = 10;

/// Smallest number of hits for a stratum to enter the strong test.
pub const MIN_STRATUM_HITS: usize = 50;

/// Chi-square test of one hole's fill law.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HoleTest {
    /// Stratum label (empty for the weak test).
    pub stratum: String,
    /// Hole index.
    pub hole: usize,
    /// Semi-perimeter of the hole.
    pub semi_perimeter: usize,
    /// Number of fills tested.
    pub hits: usize,
    /// Test outcome.
    pub result: TestResult,
}

/// Independence test between the fills of two holes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairTest {
    /// Stratum label.
    pub stratum: String,
    /// First hole.
    pub first: usize,
    /// Second hole.
    pub second: usize,
    /// Test outcome.
    pub result: TestResult,
}

/// Outcome of a Markov-property test.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MarkovTestReport {
    /// Number of sampled maps.
    pub samples: usize,
    /// Number of samples used after conditioning.
    pub hits: usize,
    /// Per-hole marginal tests.
    pub marginal: Vec<HoleTest>,
    /// Pairwise independence tests.
    pub independence: Vec<PairTest>,
    /// Sum of all marginal chi-square statistics with summed degrees of freedom.
    pub combined: Option<TestResult>,
    /// Strata left out for having too few hits or a degenerate table.
    pub skipped_strata: usize,
    /// Samples carrying a warning flag (see the test's documentation).
    pub flagged: usize,
    /// Description of the reference law.
    pub reference: String,
    /// Note on truncation effects.
    pub truncation_note: String,
}

impl MarkovTestReport {
    /// Every marginal and independence p-value.
    pub fn p_values(&self) -> Vec<f64> {
        self.marginal.iter().map(|t| t.result.p_value).chain(self.independence.iter().map(|t| t.result.p_value)).collect()
    }

    /// Smallest p-value of the report (1 when there is none).
    pub fn min_p_value(&self) -> f64 {
        self.p_values().into_iter().fold(1.0, f64::min)
    }
}

/// Reference law of fills with a given semi-perimeter: enumerated classes and
/// their Boltzmann probabilities.
#[derive(Clone, Debug)]
pub struct FillReference {
    index: HashMap<Vec<u8>, usize>,
    probs: Vec<f64>,
}

impl FillReference {
    /// Enumerates the maps with semi-perimeter `k` and `k + 2f ≤ bound`.
    pub fn new(law: &Boltzmann, k: usize, bound: usize) -> Result<Self> {
        let mut index = HashMap::new();
        let mut probs = Vec::new();
        let mut f = 0;
        while k + 2 * f <= bound && f <= law.params().face_cap {
            let p = law.prob_of(k, f)?;
            if p == 0.0 {
                break;
            }
            for m in generate_all_with_bound(k, f, bound)? {
                index.insert(canonical_code(&m), probs.len());
                probs.push(p);
            }
            f += 1;
        }
        Ok(FillReference { index, probs })
    }

    /// Goodness of fit of observed fill codes; unlisted classes share one cell.
    pub fn test(&self, codes: &[&[u8]]) -> Result<TestResult> {
        let n = codes.len() as f64;
        let mut obs = vec![0.0; self.probs.len() + 1];
        for c in codes {
            match self.index.get(*c) {
                Some(&i) => obs[i] += 1.0,
                None => obs[self.probs.len()] += 1.0,
            }
        }
        let listed: f64 = self.probs.iter().sum();
        let mut exp: Vec<f64> = self.probs.iter().map(|p| p * n).collect();
        exp.push((1.0 - listed).max(0.0) * n);
        chi_square_gof(&obs, &exp)
    }
}

struct References<'a> {
    law: &'a Boltzmann,
    cache: HashMap<usize, FillReference>,
}

impl<'a> References<'a> {
    fn new(law: &'a Boltzmann) -> Self {
        References { law, cache: HashMap::new() }
    }

    fn get(&mut self, k: usize) -> Result<&FillReference> {
        if !self.cache.contains_key(&k) {
            let r = FillReference::new(self.law, k, REFERENCE_BOUND.max(k))?;
            self.cache.insert(k, r);
        }
        Ok(&self.cache[&k])
    }
}

/// A map filling every hole of `subq` with a tree, proving the conditioning
/// event has positive probability.
pub fn tree_witness(subq: &MapWithHoles) -> Result<MapWithHoles> {
    let lay = subq.layout();
    let fills = subq
        .marks()
        .iter()
        .map(|&m| {
            let k = lay.cycles[lay.face_of[m]].len() / 2;
            let code: Vec<String> = (0..k).rev().map(|j| format!("T2(0,{j})")).collect();
            decode(&code.join(","))
        })
        .collect::<Result<Vec<_>>>()?;
    glue(subq, &fills)
}

fn hole_sizes(m: &MapWithHoles) -> Vec<usize> {
    let lay = m.layout();
    m.marks().iter().map(|&d| lay.cycles[lay.face_of[d]].len() / 2).collect()
}

/// Law and sampler shared by the tests.
pub struct Sampler {
    law: Boltzmann,
    uniform: UniformSampler,
}

impl Sampler {
    /// Prepares the truncated Boltzmann law for semi-perimeters up to `lmax`.
    pub fn new(params: BoltzmannParams, lmax: usize) -> Result<Self> {
        let law = Boltzmann::new(params, lmax + REFERENCE_BOUND)?;
        let uniform = UniformSampler::new(lmax, params.face_cap);
        Ok(Sampler { law, uniform })
    }

    /// The law.
    pub fn law(&self) -> &Boltzmann {
        &self.law
    }

    /// Draws one map.
    pub fn sample<R: Rng + ?Sized>(&self, ell: usize, rng: &mut R) -> Result<MapWithHoles> {
        self.law.sample(ell, &self.uniform, rng)
    }
}

/// Weak Markov test: fills of a fixed submap against independent Boltzmann laws.
pub fn weak_markov_test<R: Rng + ?Sized>(
    ell: usize,
    params: &BoltzmannParams,
    subq: &MapWithHoles,
    n: usize,
    rng: &mut R,
    threads: usize,
) -> Result<MarkovTestReport> {
    if subq.num_holes() == 0 && !subq.is_cemetery() {
        return Err(Error::InvalidArgument("the submap needs at least one hole".into()));
    }
    if !subq.is_cemetery() {
        if subq.semi_perimeter() != ell {
            return Err(Error::WrongPerimeter { expected: ell, found: subq.semi_perimeter() });
        }
        tree_witness(subq)?;
    }
    let sizes = if subq.is_cemetery() { vec![ell] } else { hole_sizes(subq) };
    let sampler = Sampler::new(*params, ell)?;
    let chunks = run_chunks(rng, n, threads, |r, count| -> Result<Vec<Vec<Vec<u8>>>> {
        let mut out = Vec::new();
        for _ in 0..count {
            let q = sampler.sample(ell, r)?;
            if let Some(fills) = is_submap(subq, &q) {
                out.push(fills.iter().map(canonical_code).collect());
            }
        }
        Ok(out)
    });
    let mut hits: Vec<Vec<Vec<u8>>> = Vec::new();
    for c in chunks {
        hits.extend(c?);
    }
    if hits.is_empty() {
        return Err(Error::EventNeverHit);
    }
    let mut refs = References::new(sampler.law());
    let mut report = MarkovTestReport {
        samples: n,
        hits: hits.len(),
        reference: format!("independent Boltzmann fills, q = {}, semi-perimeters {:?}", params.q, sizes),
        truncation_note: truncation_note(params),
        ..Default::default()
    };
    for (h, &k) in sizes.iter().enumerate() {
        let codes: Vec<&[u8]> = hits.iter().map(|f| f[h].as_slice()).collect();
        let result = refs.get(k)?.test(&codes)?;
        report.marginal.push(HoleTest { stratum: String::new(), hole: h, semi_perimeter: k, hits: codes.len(), result });
    }
    for i in 0..sizes.len() {
        for j in i + 1..sizes.len() {
            let pairs: Vec<(Vec<u8>, Vec<u8>)> = hits.iter().map(|f| (f[i].clone(), f[j].clone())).collect();
            let result = independence_test(&pairs)?;
            report.independence.push(PairTest { stratum: String::new(), first: i, second: j, result });
        }
    }
    report.combined = combine(&report.marginal);
    Ok(report)
}

fn truncation_note(params: &BoltzmannParams) -> String {
    format!(
        "law truncated at {} faces; reference classes enumerated up to k + 2f ≤ {}, remaining mass pooled",
        params.face_cap, REFERENCE_BOUND
    )
}

fn combine(tests: &[HoleTest]) -> Option<TestResult> {
    if tests.is_empty() {
        return None;
    }
    let stat: f64 = tests.iter().map(|t| t.result.statistic).sum();
    let dof: usize = tests.iter().map(|t| t.result.dof).sum();
    Some(TestResult { statistic: stat, dof, p_value: chi2_sf(stat, dof) })
}

/// Three-valued answer of a containment decider.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Containment {
    /// The stopping map is contained in the explored map.
    Contained,
    /// The stopping map is not contained in the explored map.
    NotContained,
    /// The explored map does not determine the answer.
    Undetermined,
}

/// An executable stopping map.
pub trait StoppingRule: Sync {
    /// Short name used in reports.
    fn name(&self) -> String;
    /// The stopping submap of a hole-free map.
    fn extract(&self, q: &MapWithHoles) -> Result<MapWithHoles>;
    /// Decides whether the stopping submap of any map containing `p` is contained in `p`.
    fn decide(&self, p: &MapWithHoles) -> Result<Containment>;
    /// True when the last extraction carries a warning flag.
    fn flagged(&self, _q: &MapWithHoles) -> bool {
        false
    }
}

/// The first `n` steps of the canonical exploration.
#[derive(Clone, Copy, Debug)]
pub struct PrefixRule(pub usize);

/// The canonical exploration up to and including its first type-2 event.
#[derive(Clone, Copy, Debug)]
pub struct FirstType2;

fn explore_while(q: &MapWithHoles, mut go_on: impl FnMut(&[PeelEvent]) -> bool) -> Result<(MapWithHoles, bool)> {
    let mut ex = Explorer::new(q)?;
    while !ex.builder().is_complete() && go_on(ex.events()) {
        if ex.peel_first()?.is_none() {
            return Ok((ex.to_map(), false));
        }
    }
    Ok((ex.to_map(), true))
}

impl StoppingRule for PrefixRule {
    fn name(&self) -> String {
        format!("prefix({})", self.0)
    }

    fn extract(&self, q: &MapWithHoles) -> Result<MapWithHoles> {
        Ok(explore_while(q, |ev| ev.len() < self.0)?.0)
    }

    fn decide(&self, p: &MapWithHoles) -> Result<Containment> {
        let done = explore_while(p, |ev| ev.len() < self.0)?.1;
        Ok(if done { Containment::Contained } else { Containment::NotContained })
    }
}

impl StoppingRule for FirstType2 {
    fn name(&self) -> String {
        "first-type2".into()
    }

    fn extract(&self, q: &MapWithHoles) -> Result<MapWithHoles> {
        Ok(explore_while(q, |ev| !ev.iter().any(|e| matches!(e, PeelEvent::Type2(..))))?.0)
    }

    fn decide(&self, p: &MapWithHoles) -> Result<Containment> {
        let done = explore_while(p, |ev| !ev.iter().any(|e| matches!(e, PeelEvent::Type2(..))))?.1;
        Ok(if done { Containment::Contained } else { Containment::NotContained })
    }
}

/// The right-process stopping map of a map with semi-perimeter 1.
#[derive(Clone, Copy, Debug)]
pub struct StoppingMapQ;

impl StoppingRule for StoppingMapQ {
    fn name(&self) -> String {
        "right-process".into()
    }

    fn extract(&self, q: &MapWithHoles) -> Result<MapWithHoles> {
        stopping_map_q(q)
    }

    fn decide(&self, p: &MapWithHoles) -> Result<Containment> {
        containment_decider_q(p)
    }

    fn flagged(&self, q: &MapWithHoles) -> bool {
        right_process(q).map(|w| w.first_self_intersection().is_none()).unwrap_or(false)
    }
}

/// Strong Markov test: fills of a stopping map, stratified by its value.
///
/// Every stratum with at least [`MIN_STRATUM_HITS`] hits contributes one
/// chi-square test per hole; the combined statistic sums them.
pub fn strong_markov_test<R: Rng + ?Sized>(
    ell: usize,
    params: &BoltzmannParams,
    rule: &dyn StoppingRule,
    n: usize,
    rng: &mut R,
    threads: usize,
) -> Result<MarkovTestReport> {
    let sampler = Sampler::new(*params, ell)?;
    type Hit = (Vec<u8>, Vec<usize>, Vec<Vec<u8>>, bool);
    let chunks = run_chunks(rng, n, threads, |r, count| -> Result<Vec<Hit>> {
        let mut out = Vec::with_capacity(count);
        for _ in 0..count {
            let q = sampler.sample(ell, r)?;
            let s = rule.extract(&q)?;
            let fills = is_submap(&s, &q).ok_or(Error::NotSubmap)?;
            out.push((canonical_code(&s), hole_sizes(&s), fills.iter().map(canonical_code).collect(), rule.flagged(&q)));
        }
        Ok(out)
    });
    let mut strata: HashMap<Vec<u8>, (Vec<usize>, Vec<Vec<Vec<u8>>>)> = HashMap::new();
    let mut flagged = 0;
    for c in chunks {
        for (code, sizes, fills, flag) in c? {
            flagged += usize::from(flag);
            strata.entry(code).or_insert_with(|| (sizes, Vec::new())).1.push(fills);
        }
    }
    let mut keys: Vec<&Vec<u8>> = strata.keys().collect();
    keys.sort();
    let mut refs = References::new(sampler.law());
    let mut report = MarkovTestReport {
        samples: n,
        reference: format!("independent Boltzmann fills given the stopping map ({}), q = {}", rule.name(), params.q),
        truncation_note: truncation_note(params),
        flagged,
        ..Default::default()
    };
    for (sid, key) in keys.into_iter().enumerate() {
        let (sizes, hits) = &strata[key];
        if sizes.is_empty() {
            continue;
        }
        if hits.len() < MIN_STRATUM_HITS {
            report.skipped_strata += 1;
            continue;
        }
        let label = format!("stratum {sid}");
        let mut tests = Vec::new();
        let mut degenerate = false;
        for (h, &k) in sizes.iter().enumerate() {
            let codes: Vec<&[u8]> = hits.iter().map(|f| f[h].as_slice()).collect();
            match refs.get(k)?.test(&codes) {
                Ok(result) => tests.push(HoleTest { stratum: label.clone(), hole: h, semi_perimeter: k, hits: codes.len(), result }),
                Err(Error::DegenerateTable(_)) => degenerate = true,
                Err(e) => return Err(e),
            }
        }
        if degenerate {
            report.skipped_strata += 1;
            continue;
        }
        report.hits += hits.len();
        report.marginal.extend(tests);
    }
    if report.marginal.is_empty() {
        return Err(Error::EventNeverHit);
    }
    report.combined = combine(&report.marginal);
    Ok(report)
}

/// Largest `|P(m) − P(reroot(m, d))|` over all maps with `f ≤ fmax` and all
/// boundary darts, computed in exact arithmetic.
pub fn rerooting_invariance_check(ell: usize, fmax: usize, params: &BoltzmannParams) -> Result<f64> {
    let law = Boltzmann::new(*params, ell)?;
    let w = law.partition(ell)?.w.clone();
    let qe = num_rational::BigRational::from_float(params.q).unwrap_or_default();
    let prob = |m: &MapWithHoles| num_traits::Pow::pow(&qe, m.internal_face_count() as u32) / &w;
    let mut worst = num_rational::BigRational::default();
    for f in 0..=fmax {
        for m in generate_all_with_bound(ell, f, usize::MAX)? {
            let p = prob(&m);
            for d in m.root_face_darts() {
                let diff = prob(&reroot(&m, d)?) - &p;
                let diff = if diff < num_rational::BigRational::default() { -diff } else { diff };
                if diff > worst {
                    worst = diff;
                }
            }
        }
    }
    Ok(num_traits::ToPrimitive::to_f64(&worst).unwrap_or(f64::INFINITY))
}

/// A walk on the dual map: faces visited and darts crossed.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DualWalk {
    /// Faces `x_0, x_1, …` (face indices of the map's layout).
    pub faces: Vec<usize>,
    /// Dart crossed at step `i` (from `x_i` to `x_{i+1}`), on the side of `x_i`.
    pub crossed: Vec<usize>,
    /// The walk stopped on entering a hole.
    pub hit_hole: bool,
}

impl DualWalk {
    /// First index `i ≥ 1` whose face is visited again, excluding the final return.
    pub fn first_self_intersection(&self) -> Option<usize> {
        let t = self.faces.len() - 1;
        let mut count: HashMap<usize, usize> = HashMap::new();
        for &x in &self.faces[1..=t] {
            *count.entry(x).or_default() += 1;
        }
        (1..=t).find(|&i| count[&self.faces[i]] > 1)
    }

    /// Last index at which face `x_i` is visited.
    pub fn last_visit(&self, i: usize) -> usize {
        let x = self.faces[i];
        self.faces.iter().rposition(|&y| y == x).unwrap_or(i)
    }
}

fn dual_walk(m: &MapWithHoles, lay: &Layout, start: usize, rightmost: bool) -> DualWalk {
    let b = m.base();
    let phi_inv = b.phi_inv_vec();
    let edge = |d: usize| d.min(b.alpha(d));
    let mut visited = HashSet::new();
    let mut faces = vec![lay.root_face];
    let mut crossed = Vec::new();
    let mut d = start;
    loop {
        visited.insert(edge(d));
        crossed.push(d);
        let a = b.alpha(d);
        let f = lay.face_of[a];
        faces.push(f);
        if let FaceKind::Hole(_) = lay.kind[f] {
            return DualWalk { faces, crossed, hit_hole: true };
        }
        if f == lay.root_face {
            return DualWalk { faces, crossed, hit_hole: false };
        }
        let mut c = a;
        let mut next = None;
        for _ in 1..lay.cycles[f].len() {
            c = if rightmost { b.phi(c) } else { phi_inv[c] };
            if !visited.contains(&edge(c)) {
                next = Some(c);
                break;
            }
        }
        match next {
            Some(c) => d = c,
            None => return DualWalk { faces, crossed, hit_hole: false },
        }
    }
}

fn check_ell_one(q: &MapWithHoles) -> Result<()> {
    if q.semi_perimeter() != 1 {
        return Err(Error::WrongPerimeter { expected: 1, found: q.semi_perimeter() });
    }
    Ok(())
}

/// Right process from the root face: always the next unvisited edge in face
/// order, until the first return to the root face (or a hole).
pub fn right_process(q: &MapWithHoles) -> Result<DualWalk> {
    check_ell_one(q)?;
    let lay = q.layout();
    Ok(dual_walk(q, &lay, q.base().root(), true))
}

/// Left process: the mirror walk leaving through the other root-face edge.
pub fn left_process(q: &MapWithHoles) -> Result<DualWalk> {
    check_ell_one(q)?;
    let lay = q.layout();
    let start = q.base().phi(q.base().root());
    Ok(dual_walk(q, &lay, start, false))
}

/// Reveals the part of `q` made of the faces `faces` and the edges `edges`
/// (edge ids are the smaller dart of each edge), starting from the boundary.
pub fn reveal(q: &MapWithHoles, faces: &HashSet<usize>, edges: &HashSet<usize>) -> Result<MapWithHoles> {
    let qb = q.base();
    let qlay = q.layout();
    let mut ex = Explorer::new(q)?;
    'outer: loop {
        let b = ex.builder().clone();
        for i in 0..b.marks().len() {
            for h in b.hole_darts(i) {
                let x = ex.hidden_image(h);
                if !edges.contains(&x.min(qb.alpha(x))) || qlay.is_hole_dart(x) {
                    continue;
                }
                if ex.preimage(x).is_some() || faces.contains(&qlay.face_of[x]) {
                    ex.peel_at(h)?;
                    continue 'outer;
                }
            }
        }
        break;
    }
    Ok(normalize_marks(&ex.to_map()))
}

/// Moves every mark to the hole dart with the smallest canonical label and
/// orders holes by that label, so the result depends on the map only.
pub fn normalize_marks(m: &MapWithHoles) -> MapWithHoles {
    if m.num_holes() == 0 {
        return m.clone();
    }
    let label = canonical_labeling(m);
    let lay = m.layout();
    let mut marks: Vec<usize> = m
        .marks()
        .iter()
        .map(|&d| *lay.cycles[lay.face_of[d]].iter().min_by_key(|&&x| label[x]).expect("nonempty hole"))
        .collect();
    marks.sort_by_key(|&d| label[d]);
    MapWithHoles::new(m.base().clone(), marks).expect("same hole faces")
}

/// The right-process stopping map: the part of `q` discovered along the cycle
/// `x[0, τ_I] ∪ x[τ^R, τ_E]`, or along the whole walk when it never meets itself.
pub fn stopping_map_q(q: &MapWithHoles) -> Result<MapWithHoles> {
    let w = right_process(q)?;
    let lay = q.layout();
    let t = w.faces.len() - 1;
    let steps: Vec<usize> = match w.first_self_intersection() {
        Some(ti) => {
            let tr = w.last_visit(ti);
            (0..ti).chain(tr..t).collect()
        }
        None => (0..t).collect(),
    };
    let qb = q.base();
    let mut edges = HashSet::new();
    let mut faces = HashSet::new();
    for s in steps {
        let d = w.crossed[s];
        edges.insert(d.min(qb.alpha(d)));
        for f in [w.faces[s], w.faces[s + 1]] {
            if lay.kind[f] == FaceKind::Internal {
                faces.insert(f);
            }
        }
    }
    reveal(q, &faces, &edges)
}

/// Decides `Q ⊂ p` from `p` alone: run the right and left processes on `p`,
/// stopped at the first hole. The answer is "contained" when the right process
/// returns to the root inside `p` or when the two walks share a non-root face.
pub fn containment_decider_q(p: &MapWithHoles) -> Result<Containment> {
    let r = right_process(p)?;
    if !r.hit_hole {
        return Ok(Containment::Contained);
    }
    let l = left_process(p)?;
    let lay = p.layout();
    let inner = |w: &DualWalk| -> HashSet<usize> {
        w.faces.iter().copied().filter(|&f| lay.kind[f] == FaceKind::Internal).collect()
    };
    let shared = inner(&r).intersection(&inner(&l)).next().is_some();
    Ok(if shared { Containment::Contained } else { Containment::NotContained })
}

/// One leaf of the branch diagram.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BranchLeaf {
    /// Branch name.
    pub name: String,
    /// Steps as `(label, event)`.
    pub steps: Vec<(String, String)>,
    /// Product of peel-step probabilities.
    pub probability: f64,
    /// Completions of the leaf that were examined.
    pub completions: usize,
    /// Completions whose stopping map has more than three edges.
    pub compatible: usize,
    /// Compatible completions whose stopping map equals the leaf map.
    pub equal_to_q: usize,
}

/// Report of the branch diagram.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BranchReport {
    /// Weight per face used for step probabilities.
    pub q: f64,
    /// Leaves.
    pub leaves: Vec<BranchLeaf>,
}

impl BranchReport {
    /// Every leaf has positive probability, a compatible completion, and a
    /// discovered map different from the stopping map of every compatible completion.
    pub fn all_fail_to_discover(&self) -> bool {
        self.leaves.iter().all(|l| l.probability > 0.0 && l.compatible > 0 && l.equal_to_q == 0)
    }
}

/// Which dart a branch step peels and how.
#[derive(Clone, Copy, Debug)]
enum Step {
    /// Peel the labelled dart with a type-1 event, naming the three new hole darts.
    Face(&'static str, [&'static str; 3]),
    /// Peel the labelled dart and identify it with another labelled dart.
    Glue(&'static str, &'static str),
}

fn run_branch(law: &Boltzmann, steps: &[Step]) -> Result<(Builder, Vec<(String, String)>, f64)> {
    // After the first type-1 peel at the root edge, the new hole reads (a, b, c, d)
    // in fill order: a, b, c are the new face's free edges and d faces the other
    // boundary edge.
    let mut b = Builder::initial(1)?;
    let mut labels: HashMap<&'static str, usize> = HashMap::new();
    let mut prob = law.step_probability(1, PeelEvent::Type1)?;
    let n = b.len();
    b.peel(b.marks()[0], PeelEvent::Type1)?;
    let hd = b.hole_darts(0);
    for (name, &d) in ["a", "b", "c", "d"].iter().zip(&hd) {
        labels.insert(name, d);
    }
    debug_assert_eq!(hd[0], n + 3);
    let mut log = vec![("root".to_string(), PeelEvent::Type1.to_string())];
    for step in steps {
        match *step {
            Step::Face(x, names) => {
                let h = labels[x];
                let i = b.hole_index_of(h).ok_or(Error::NotActive(h))?;
                let k = b.hole_half_perimeters()[i];
                prob *= law.step_probability(k, PeelEvent::Type1)?;
                let n = b.len();
                b.peel(h, PeelEvent::Type1)?;
                for (j, nm) in names.iter().enumerate() {
                    labels.insert(nm, n + 3 + j);
                }
                log.push((x.to_string(), PeelEvent::Type1.to_string()));
            }
            Step::Glue(x, y) => {
                let (h, p) = (labels[x], labels[y]);
                let i = b.hole_index_of(h).ok_or(Error::NotActive(h))?;
                let k = b.hole_half_perimeters()[i];
                let mut d = h;
                let mut j = 0;
                for t in 1..2 * k {
                    d = b.phi_inv(d);
                    if d == p {
                        j = t;
                        break;
                    }
                }
                if j % 2 == 0 {
                    return Err(Error::InvalidArgument(format!("{x} cannot be identified with {y}")));
                }
                let ev = PeelEvent::Type2((j - 1) / 2, k - 1 - (j - 1) / 2);
                prob *= law.step_probability(k, ev)?;
                b.peel(h, ev)?;
                log.push((format!("{x}~{y}"), ev.to_string()));
            }
        }
    }
    Ok((b, log, prob))
}

fn examine_leaf(leaf: &MapWithHoles, max_completions: usize, bound: usize) -> Result<(usize, usize, usize)> {
    let sizes = hole_sizes(leaf);
    let mut options: Vec<Vec<MapWithHoles>> = Vec::new();
    for &k in &sizes {
        let mut v = Vec::new();
        let mut f = 0;
        while k + 2 * f <= bound {
            v.extend(generate_all_with_bound(k, f, bound)?);
            f += 1;
        }
        options.push(v);
    }
    let leaf_code = canonical_code(&normalize_marks(leaf));
    let (mut seen, mut compatible, mut equal) = (0, 0, 0);
    let mut idx = vec![0usize; options.len()];
    loop {
        let fills: Vec<MapWithHoles> = idx.iter().zip(&options).map(|(&i, o)| o[i].clone()).collect();
        let q = glue(leaf, &fills)?;
        let sq = stopping_map_q(&q)?;
        seen += 1;
        if sq.base().num_edges() > 3 {
            compatible += 1;
            if canonical_code(&sq) == leaf_code {
                equal += 1;
            }
        }
        if seen >= max_completions {
            break;
        }
        let mut pos = 0;
        loop {
            if pos == idx.len() {
                return Ok((seen, compatible, equal));
            }
            idx[pos] += 1;
            if idx[pos] < options[pos].len() {
                break;
            }
            idx[pos] = 0;
            pos += 1;
        }
        if idx.is_empty() {
            break;
        }
    }
    Ok((seen, compatible, equal))
}

/// Materializes the branch diagram showing that no peeling algorithm discovers
/// the right-process stopping map exactly.
///
/// After a type-1 peel at the root edge, the hole reads `a, b, c, d` in fill
/// order (`d` faces the other boundary edge). Leaves:
/// 1. peel `a` and identify it with `b` (and the mirror case);
/// 2. peel `c` (new darts `e, f, g`), peel `a` (new darts `h, i, j`), identify `h` with `d`;
/// 3. peel `d` (new darts `e, f, g`), then identify `g`/`f` or `a`/`b`, or
///    discover a further face at `c` (then `a`) or at `e` (then `g`) and close
///    the cycle as in branch 2.
///
/// Each leaf reports its probability and checks completions with small fills.
pub fn counterexample_branches(params: &BoltzmannParams) -> Result<BranchReport> {
    use Step::*;
    let law = Boltzmann::new(*params, 12)?;
    let branches: Vec<(&str, Vec<Step>)> = vec![
        ("1: a~b", vec![Glue("a", "b")]),
        ("1: b~a", vec![Glue("b", "a")]),
        ("2: c, a, h~d", vec![Face("c", ["e", "f", "g"]), Face("a", ["h", "i", "j"]), Glue("h", "d")]),
        ("3: d, g~f", vec![Face("d", ["e", "f", "g"]), Glue("g", "f")]),
        ("3: d, f~g", vec![Face("d", ["e", "f", "g"]), Glue("f", "g")]),
        ("3: d, a~b", vec![Face("d", ["e", "f", "g"]), Glue("a", "b")]),
        ("3: d, b~a", vec![Face("d", ["e", "f", "g"]), Glue("b", "a")]),
        (
            "3: d, c, a, h~e",
            vec![Face("d", ["e", "f", "g"]), Face("c", ["k", "l", "m"]), Face("a", ["h", "i", "j"]), Glue("h", "e")],
        ),
        (
            "3: d, e, g, h~c",
            vec![Face("d", ["e", "f", "g"]), Face("e", ["k", "l", "m"]), Face("g", ["h", "i", "j"]), Glue("h", "c")],
        ),
    ];
    let mut leaves = Vec::new();
    for (name, steps) in branches {
        let (b, log, probability) = run_branch(&law, &steps)?;
        let leaf = b.to_map();
        let (completions, compatible, equal_to_q) = examine_leaf(&leaf, 4000, 7)?;
        leaves.push(BranchLeaf { name: name.to_string(), steps: log, probability, completions, compatible, equal_to_q });
    }
    Ok(BranchReport { q: params.q, leaves })
}

/// The canonical exploration prefixes of a map (including the empty and full ones).
pub fn canonical_prefixes(q: &MapWithHoles) -> Result<Vec<MapWithHoles>> {
    let mut ex = Explorer::new(q)?;
    let mut out = vec![ex.to_map()];
    while !ex.builder().is_complete() {
        ex.peel_first()?;
        out.push(ex.to_map());
    }
    Ok(out)
}

/// The map obtained by one type-1 peel at the root of the initial map.
pub fn single_type1(ell: usize) -> Result<MapWithHoles> {
    replay(ell, &[PeelEvent::Type1])
}

/// Fills of `s` inside `q`.
pub fn fills_of(s: &MapWithHoles, q: &MapWithHoles) -> Result<Vec<MapWithHoles>> {
    embed(s, q).map(|e| e.fills).ok_or(Error::NotSubmap)
}


#[cfg(test)]
mod branch_tests {
    use super::*;

    #[test]
    fn branch_report_shape() {
        let r = counterexample_branches(&BoltzmannParams::default()).unwrap();
        assert_eq!(r.leaves.len(), 9);
        assert!(r.all_fail_to_discover());
        assert!((r.leaves[0].probability - 1.0 / 24.0).abs() < 1e-15);
    }
}

#[cfg(test)]
mod walk_fixture {
    use super::*;

    /// Smallest map found with a first self-intersection at step 3 whose last
    /// visit is step 9.
    const WALK_EXAMPLE: &str = "T1,T1,T1,T1,T2(0,4),T1,T1,T2(1,4),T2(0,0),T2(0,3),T2(2,0),T2(0,1),T2(0,0)";

    #[test]
    fn intersection_times() {
        let q = decode(WALK_EXAMPLE).unwrap();
        let w = right_process(&q).unwrap();
        assert_eq!(w.first_self_intersection(), Some(3));
        assert_eq!(w.last_visit(3), 9);
        let s = stopping_map_q(&q).unwrap();
        assert!(is_submap(&s, &q).is_some());
        assert!(s.num_holes() >= 1);
        assert!(s.base().num_edges() < q.base().num_edges());
    }
}
