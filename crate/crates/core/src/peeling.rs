//! Peeling steps, explorations of known maps and the peeling codec.
//!
//! A type-1 step glues a new quadrilateral on a hole dart; a type-2 step
//! identifies the hole dart with another dart of the same hole, splitting the
//! hole in two. The canonical algorithm always peels the marked dart of the
//! first hole, and holes behave as a stack: a split replaces the peeled hole in
//! place by its two parts (label 1 first). A map is encoded by the event list of
//! its canonical exploration, for instance `T1,T2(0,1),T2(0,0)`.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::map::{embed, FaceKind, Layout, MapWithHoles, RotationMap};

const NONE: usize = usize::MAX;

/// Outcome of one peeling step.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum PeelEvent {
    /// A new quadrilateral is discovered.
    Type1,
    /// The peeled dart is identified with another hole dart; the hole splits
    /// into holes of semi-perimeters `l1` and `l2`.
    Type2(usize, usize),
}

impl fmt::Display for PeelEvent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PeelEvent::Type1 => write!(f, "T1"),
            PeelEvent::Type2(a, b) => write!(f, "T2({a},{b})"),
        }
    }
}

impl FromStr for PeelEvent {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s == "T1" {
            return Ok(PeelEvent::Type1);
        }
        let inner = s
            .strip_prefix("T2(")
            .and_then(|r| r.strip_suffix(')'))
            .ok_or_else(|| Error::Parse(format!("unknown peeling event {s:?}")))?;
        let (a, b) = inner.split_once(',').ok_or_else(|| Error::Parse(format!("malformed event {s:?}")))?;
        let a = a.trim().parse().map_err(|_| Error::Parse(format!("malformed label in {s:?}")))?;
        let b = b.trim().parse().map_err(|_| Error::Parse(format!("malformed label in {s:?}")))?;
        Ok(PeelEvent::Type2(a, b))
    }
}

/// Joins events into a codec string.
pub fn encode_events(events: &[PeelEvent]) -> String {
    events.iter().map(|e| e.to_string()).collect::<Vec<_>>().join(",")
}

/// Splits a codec string into events.
pub fn parse_events(s: &str) -> Result<Vec<PeelEvent>> {
    let s = s.trim();
    if s.is_empty() {
        return Ok(Vec::new());
    }
    let mut out = Vec::new();
    let mut rest = s;
    while !rest.is_empty() {
        let (tok, tail) = if rest.starts_with("T2(") {
            let close = rest.find(')').ok_or_else(|| Error::Parse("unterminated T2 event".into()))?;
            (&rest[..=close], &rest[close + 1..])
        } else {
            match rest.find(',') {
                Some(c) => (&rest[..c], &rest[c..]),
                None => (rest, ""),
            }
        };
        out.push(tok.parse()?);
        rest = tail.trim_start();
        if let Some(t) = rest.strip_prefix(',') {
            rest = t.trim_start();
            if rest.is_empty() {
                return Err(Error::Parse("trailing comma".into()));
            }
        } else if !rest.is_empty() {
            return Err(Error::Parse(format!("expected ',' before {rest:?}")));
        }
    }
    Ok(out)
}

/// Semi-perimeter of the map encoded by a complete event list.
///
/// Type-1 steps raise the total hole semi-perimeter by one and type-2 steps
/// lower it by one, so a complete exploration has `#T2 − #T1 = ℓ`.
pub fn implied_semi_perimeter(events: &[PeelEvent]) -> Result<usize> {
    let t1 = events.iter().filter(|e| **e == PeelEvent::Type1).count();
    let t2 = events.len() - t1;
    if t2 <= t1 {
        return Err(Error::Parse("event list does not describe a map with positive semi-perimeter".into()));
    }
    Ok(t2 - t1)
}

/// Mutable map under construction by peeling.
///
/// Darts are never renumbered while peeling; removed darts are tombstoned and
/// dropped by [`Builder::to_map`].
#[derive(Clone, Debug)]
pub struct Builder {
    alpha: Vec<usize>,
    phi: Vec<usize>,
    phi_inv: Vec<usize>,
    alive: Vec<bool>,
    root: usize,
    marks: Vec<usize>,
    half: Vec<usize>,
    faces: usize,
}

impl Builder {
    /// The initial map of semi-perimeter `ell` (one hole bounded by the root face).
    pub fn initial(ell: usize) -> Result<Self> {
        Ok(Builder::from_map(&MapWithHoles::initial(ell)?))
    }

    /// Starts from an existing map with holes.
    pub fn from_map(m: &MapWithHoles) -> Self {
        let base = m.base();
        let n = base.num_darts();
        let phi = base.phi_vec();
        let phi_inv = base.phi_inv_vec();
        let lay = m.layout();
        let half = m.marks().iter().map(|&d| lay.cycles[lay.face_of[d]].len() / 2).collect();
        Builder {
            alpha: base.alpha_slice().to_vec(),
            phi,
            phi_inv,
            alive: vec![true; n],
            root: base.root(),
            marks: m.marks().to_vec(),
            half,
            faces: m.internal_face_count(),
        }
    }

    /// Number of dart slots, including removed ones.
    pub fn len(&self) -> usize {
        self.alpha.len()
    }

    /// True when no dart slot exists.
    pub fn is_empty(&self) -> bool {
        self.alpha.is_empty()
    }

    /// Marked darts of the holes.
    pub fn marks(&self) -> &[usize] {
        &self.marks
    }

    /// Semi-perimeters of the holes.
    pub fn hole_half_perimeters(&self) -> &[usize] {
        &self.half
    }

    /// True when no hole remains.
    pub fn is_complete(&self) -> bool {
        self.marks.is_empty()
    }

    /// Number of internal faces discovered so far.
    pub fn internal_faces(&self) -> usize {
        self.faces
    }

    /// Root dart.
    pub fn root(&self) -> usize {
        self.root
    }

    /// Edge involution.
    pub fn alpha(&self, d: usize) -> usize {
        self.alpha[d]
    }

    /// Face permutation.
    pub fn phi(&self, d: usize) -> usize {
        self.phi[d]
    }

    /// Inverse face permutation.
    pub fn phi_inv(&self, d: usize) -> usize {
        self.phi_inv[d]
    }

    /// True when the dart slot is in use.
    pub fn is_alive(&self, d: usize) -> bool {
        d < self.alive.len() && self.alive[d]
    }

    /// Index of the hole containing `d`, if any.
    pub fn hole_index_of(&self, d: usize) -> Option<usize> {
        if !self.is_alive(d) {
            return None;
        }
        let mut x = d;
        loop {
            if let Some(i) = self.marks.iter().position(|&m| m == x) {
                return Some(i);
            }
            x = self.phi[x];
            if x == d {
                return None;
            }
        }
    }

    /// Darts of hole `i` in fill order starting at its marked dart.
    pub fn hole_darts(&self, i: usize) -> Vec<usize> {
        self.cycle_back_from(self.marks[i], 2 * self.half[i])
    }

    fn cycle_back_from(&self, d: usize, len: usize) -> Vec<usize> {
        let mut v = Vec::with_capacity(len);
        let mut x = d;
        for _ in 0..len {
            v.push(x);
            x = self.phi_inv[x];
        }
        v
    }

    /// Applies one peeling step at hole dart `h`.
    pub fn peel(&mut self, h: usize, ev: PeelEvent) -> Result<()> {
        let i = self.hole_index_of(h).ok_or(Error::NotActive(h))?;
        let k = self.half[i];
        match ev {
            PeelEvent::Type1 => {
                let u = self.phi[h];
                let p1 = self.phi_inv[h];
                let n = self.alpha.len();
                let (a1, a2, a3, c1, c2, c3) = (n, n + 1, n + 2, n + 3, n + 4, n + 5);
                self.alpha.extend_from_slice(&[c1, c2, c3, a1, a2, a3]);
                self.phi.resize(n + 6, NONE);
                self.phi_inv.resize(n + 6, NONE);
                self.alive.resize(n + 6, true);
                let link = |a: usize, b: usize, phi: &mut [usize], inv: &mut [usize]| {
                    phi[a] = b;
                    inv[b] = a;
                };
                let (phi, inv) = (&mut self.phi, &mut self.phi_inv);
                link(h, a1, phi, inv);
                link(a1, a2, phi, inv);
                link(a2, a3, phi, inv);
                link(a3, h, phi, inv);
                link(p1, c3, phi, inv);
                link(c3, c2, phi, inv);
                link(c2, c1, phi, inv);
                link(c1, u, phi, inv);
                if self.marks[i] == h {
                    self.marks[i] = c1;
                }
                self.half[i] += 1;
                self.faces += 1;
            }
            PeelEvent::Type2(l1, l2) => {
                if l1 + l2 + 1 != k {
                    return Err(Error::SplitArityMismatch { l1, l2, ell: k });
                }
                let p = self.cycle_back_from(h, 2 * k);
                let j = 2 * l1 + 1;
                let pj = p[j];
                let (ah, apj) = (self.alpha[h], self.alpha[pj]);
                self.alpha[ah] = apj;
                self.alpha[apj] = ah;
                let old_phi_h = self.phi[h];
                let old_phi_pj = self.phi[pj];
                self.alive[h] = false;
                self.alive[pj] = false;
                let mark = self.marks[i];
                let mut new_marks = Vec::with_capacity(2);
                let mut new_half = Vec::with_capacity(2);
                if l1 > 0 {
                    self.phi[p[1]] = old_phi_pj;
                    self.phi_inv[old_phi_pj] = p[1];
                    let m = if p[1..j].contains(&mark) { mark } else { p[1] };
                    new_marks.push(m);
                    new_half.push(l1);
                }
                if l2 > 0 {
                    self.phi[p[j + 1]] = old_phi_h;
                    self.phi_inv[old_phi_h] = p[j + 1];
                    let m = if p[j + 1..].contains(&mark) { mark } else { p[j + 1] };
                    new_marks.push(m);
                    new_half.push(l2);
                }
                self.marks.splice(i..=i, new_marks);
                self.half.splice(i..=i, new_half);
            }
        }
        Ok(())
    }

    /// Map index of every live dart slot after compaction.
    pub fn compaction(&self) -> Vec<usize> {
        let mut idx = vec![NONE; self.alpha.len()];
        let mut next = 0;
        for (d, slot) in idx.iter_mut().enumerate() {
            if self.alive[d] {
                *slot = next;
                next += 1;
            }
        }
        idx
    }

    /// The current map with holes, darts renumbered densely in slot order.
    pub fn to_map(&self) -> MapWithHoles {
        let idx = self.compaction();
        let mut alpha = Vec::new();
        let mut phi = Vec::new();
        for d in 0..self.alpha.len() {
            if self.alive[d] {
                alpha.push(idx[self.alpha[d]]);
                phi.push(idx[self.phi[d]]);
            }
        }
        let base = RotationMap::from_alpha_phi_unchecked(alpha, phi, idx[self.root]);
        MapWithHoles::new_unchecked(base, self.marks.iter().map(|&m| idx[m]).collect())
    }
}

/// Applies one peeling step to a map with holes.
pub fn peel(m: &MapWithHoles, dart: usize, ev: PeelEvent) -> Result<MapWithHoles> {
    let mut b = Builder::from_map(m);
    b.peel(dart, ev)?;
    Ok(b.to_map())
}

/// Replays events from the initial map of semi-perimeter `ell`, always peeling
/// the marked dart of the first hole. Holes may remain when the list is a prefix.
pub fn replay(ell: usize, events: &[PeelEvent]) -> Result<MapWithHoles> {
    let mut b = Builder::initial(ell)?;
    for (t, &ev) in events.iter().enumerate() {
        if b.is_complete() {
            return Err(Error::Parse(format!("event {t} after the exploration ended")));
        }
        b.peel(b.marks()[0], ev)?;
    }
    Ok(b.to_map())
}

/// Decodes a complete codec string into a hole-free map.
pub fn decode(s: &str) -> Result<MapWithHoles> {
    let events = parse_events(s)?;
    let ell = implied_semi_perimeter(&events)?;
    let m = replay(ell, &events)?;
    if !m.is_hole_free() {
        return Err(Error::Parse("codec string ends before the exploration is complete".into()));
    }
    Ok(m)
}

/// Encodes a hole-free map by its canonical exploration.
pub fn encode(q: &MapWithHoles) -> Result<String> {
    Ok(encode_events(&explore(q, &Canonical, None)?.events))
}

/// A deterministic choice of the next dart to peel.
pub trait PeelingAlgorithm {
    /// Returns a dart on the active boundary of the current explored map.
    fn select(&self, state: &Builder) -> usize;
}

/// Peels the marked dart of the first hole.
#[derive(Clone, Copy, Debug, Default)]
pub struct Canonical;

impl PeelingAlgorithm for Canonical {
    fn select(&self, state: &Builder) -> usize {
        state.marks()[0]
    }
}

impl<F: Fn(&Builder) -> usize> PeelingAlgorithm for F {
    fn select(&self, state: &Builder) -> usize {
        self(state)
    }
}

/// A peeling exploration `e_0 ⊂ e_1 ⊂ … ⊂ e_n` of a map.
#[derive(Clone, Debug)]
pub struct Exploration {
    /// Semi-perimeter of the explored map.
    pub ell: usize,
    /// Events in order.
    pub events: Vec<PeelEvent>,
    /// Intermediate maps, starting with the initial map.
    pub maps: Vec<MapWithHoles>,
}

impl Exploration {
    /// The last explored map.
    pub fn final_map(&self) -> &MapWithHoles {
        self.maps.last().expect("an exploration holds at least its initial map")
    }
}

/// Exploration of a known map `q`, tracking the image of every explored dart.
#[derive(Clone, Debug)]
pub struct Explorer<'a> {
    q: &'a MapWithHoles,
    qlay: Layout,
    b: Builder,
    emb: Vec<usize>,
    inv: Vec<usize>,
    events: Vec<PeelEvent>,
}

impl<'a> Explorer<'a> {
    /// Starts at the initial map with the boundary of `q`.
    pub fn new(q: &'a MapWithHoles) -> Result<Self> {
        if q.is_cemetery() {
            return Err(Error::InvalidArgument("cannot explore the cemetery".into()));
        }
        let ell = q.semi_perimeter();
        let b = Builder::initial(ell)?;
        let mut emb = vec![NONE; b.len()];
        let mut inv = vec![NONE; q.base().num_darts()];
        for (i, &x) in q.root_face_darts().iter().enumerate() {
            emb[2 * i] = x;
            inv[x] = 2 * i;
        }
        Ok(Explorer { q, qlay: q.layout(), b, emb, inv, events: Vec::new() })
    }

    /// Current state.
    pub fn builder(&self) -> &Builder {
        &self.b
    }

    /// Events so far.
    pub fn events(&self) -> &[PeelEvent] {
        &self.events
    }

    /// Image in `q` of an explored builder dart (`usize::MAX` for hole darts).
    pub fn image(&self, d: usize) -> usize {
        self.emb[d]
    }

    /// Explored builder dart whose image is the `q`-dart `x`, if any.
    pub fn preimage(&self, x: usize) -> Option<usize> {
        let y = self.inv[x];
        if y == NONE || !self.b.is_alive(y) {
            None
        } else {
            Some(y)
        }
    }

    /// The `q`-dart facing hole dart `h` across its edge.
    pub fn hidden_image(&self, h: usize) -> usize {
        self.q.base().alpha(self.emb[self.b.alpha(h)])
    }

    /// The event `q` dictates at hole dart `h`, or `None` when the hidden side
    /// lies in a hole of `q`.
    pub fn event_at(&self, h: usize) -> Result<Option<PeelEvent>> {
        let i = self.b.hole_index_of(h).ok_or(Error::NotActive(h))?;
        let x = self.hidden_image(h);
        if self.qlay.is_hole_dart(x) {
            return Ok(None);
        }
        match self.preimage(x) {
            Some(y) => {
                let p = self.b.alpha(y);
                let k = self.b.hole_half_perimeters()[i];
                let mut d = h;
                for j in 1..2 * k {
                    d = self.b.phi_inv(d);
                    if d == p {
                        if j % 2 == 0 {
                            return Err(Error::NotSubmap);
                        }
                        let l1 = (j - 1) / 2;
                        return Ok(Some(PeelEvent::Type2(l1, k - 1 - l1)));
                    }
                }
                Err(Error::NotSubmap)
            }
            None => {
                let f = self.qlay.face_of[x];
                if self.qlay.kind[f] != FaceKind::Internal || self.qlay.cycles[f].len() != 4 {
                    return Err(Error::NotSubmap);
                }
                Ok(Some(PeelEvent::Type1))
            }
        }
    }

    /// Peels hole dart `h` with the event dictated by `q`. Returns `None`
    /// without changing the state when the hidden side lies in a hole of `q`.
    pub fn peel_at(&mut self, h: usize) -> Result<Option<PeelEvent>> {
        let ev = match self.event_at(h)? {
            Some(ev) => ev,
            None => return Ok(None),
        };
        let x = self.hidden_image(h);
        let n = self.b.len();
        self.b.peel(h, ev)?;
        if ev == PeelEvent::Type1 {
            let qb = self.q.base();
            self.emb.resize(self.b.len(), NONE);
            let mut y = x;
            for d in [h, n, n + 1, n + 2] {
                self.emb[d] = y;
                self.inv[y] = d;
                y = qb.phi(y);
            }
        }
        self.events.push(ev);
        Ok(Some(ev))
    }

    /// Peels the marked dart of the first hole.
    pub fn peel_first(&mut self) -> Result<Option<PeelEvent>> {
        match self.b.marks().first() {
            Some(&h) => self.peel_at(h),
            None => Ok(None),
        }
    }

    /// The explored map.
    pub fn to_map(&self) -> MapWithHoles {
        self.b.to_map()
    }

    /// Images in `q` of the darts of [`Explorer::to_map`] (`usize::MAX` on holes).
    pub fn compact_images(&self) -> Vec<usize> {
        (0..self.b.len()).filter(|&d| self.b.is_alive(d)).map(|d| self.emb[d]).collect()
    }
}

/// Stopping predicate evaluated on every intermediate explored map.
pub type StopRule<'r> = &'r dyn Fn(&MapWithHoles, &[PeelEvent]) -> bool;

/// Explores a hole-free map with a peeling algorithm until no hole remains or
/// the stopping rule fires.
pub fn explore(q: &MapWithHoles, alg: &dyn PeelingAlgorithm, stop: Option<StopRule<'_>>) -> Result<Exploration> {
    if !q.is_hole_free() {
        return Err(Error::InvalidArgument("explore expects a hole-free map".into()));
    }
    let mut ex = Explorer::new(q)?;
    let mut maps = vec![ex.to_map()];
    loop {
        if ex.builder().is_complete() {
            break;
        }
        if let Some(rule) = stop {
            if rule(maps.last().unwrap(), ex.events()) {
                break;
            }
        }
        let h = alg.select(ex.builder());
        if ex.builder().hole_index_of(h).is_none() {
            return Err(Error::AlgorithmReturnedInactiveDart(h));
        }
        ex.peel_at(h)?;
        maps.push(ex.to_map());
    }
    Ok(Exploration { ell: q.semi_perimeter(), events: ex.events().to_vec(), maps })
}

/// The event `q` dictates when peeling `dart` of the submap `e`.
pub fn peel_type_of(e: &MapWithHoles, dart: usize, q: &MapWithHoles) -> Result<PeelEvent> {
    let em = embed(e, q).ok_or(Error::NotSubmap)?;
    let lay = e.layout();
    if dart >= e.base().num_darts() {
        return Err(Error::NotActive(dart));
    }
    let i = match lay.kind[lay.face_of[dart]] {
        FaceKind::Hole(i) => i,
        _ => return Err(Error::NotActive(dart)),
    };
    let x = q.base().alpha(em.dart_map[e.base().alpha(dart)]);
    let y = em.dart_map.iter().position(|&z| z == x);
    match y {
        None => Ok(PeelEvent::Type1),
        Some(y) => {
            let p = e.base().alpha(y);
            let hd = e.hole_darts_fill_order(i);
            let k = hd.len() / 2;
            let s = hd.iter().position(|&d| d == dart).expect("dart lies on its hole");
            let t = hd.iter().position(|&d| d == p).ok_or(Error::NotSubmap)?;
            let j = (t + hd.len() - s) % hd.len();
            if j.is_multiple_of(2) {
                return Err(Error::NotSubmap);
            }
            let l1 = (j - 1) / 2;
            Ok(PeelEvent::Type2(l1, k - 1 - l1))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::map::{canonical_code, glue, is_submap, validate_quadrangulation};

    #[test]
    fn event_text_round_trip() {
        let s = "T1,T2(0,1),T2(0,0)";
        let ev = parse_events(s).unwrap();
        assert_eq!(ev, vec![PeelEvent::Type1, PeelEvent::Type2(0, 1), PeelEvent::Type2(0, 0)]);
        assert_eq!(encode_events(&ev), s);
        assert!(parse_events("T3").is_err());
        assert!(parse_events("T1,").is_err());
        assert!(parse_events("T2(1)").is_err());
    }

    #[test]
    fn one_edge_tree() {
        let t = decode("T2(0,0)").unwrap();
        assert_eq!(t.base().num_edges(), 1);
        assert!(t.is_hole_free());
        assert!(validate_quadrangulation(&t).is_ok());
        assert_eq!(encode(&t).unwrap(), "T2(0,0)");
    }

    #[test]
    fn first_type1_step() {
        let e0 = MapWithHoles::initial(1).unwrap();
        let e1 = peel(&e0, e0.marks()[0], PeelEvent::Type1).unwrap();
        assert_eq!(e1.internal_face_count(), 1);
        assert_eq!(e1.num_holes(), 1);
        assert_eq!(e1.hole_darts_fill_order(0).len(), 4);
        assert!(validate_quadrangulation(&e1).is_ok());
    }

    #[test]
    fn q11_members_differ() {
        let a = decode("T1,T2(0,1),T2(0,0)").unwrap();
        let b = decode("T1,T2(1,0),T2(0,0)").unwrap();
        for m in [&a, &b] {
            assert!(validate_quadrangulation(m).is_ok());
            assert_eq!(m.internal_face_count(), 1);
            assert_eq!(m.semi_perimeter(), 1);
        }
        assert_ne!(canonical_code(&a), canonical_code(&b));
        assert_eq!(encode(&a).unwrap(), "T1,T2(0,1),T2(0,0)");
        assert_eq!(encode(&b).unwrap(), "T1,T2(1,0),T2(0,0)");
    }

    #[test]
    fn arity_and_activity_errors() {
        let e0 = MapWithHoles::initial(2).unwrap();
        assert!(matches!(
            peel(&e0, e0.marks()[0], PeelEvent::Type2(1, 1)),
            Err(Error::SplitArityMismatch { l1: 1, l2: 1, ell: 2 })
        ));
        assert!(matches!(peel(&e0, 0, PeelEvent::Type1), Err(Error::NotActive(0))));
    }

    #[test]
    fn peel_type_of_examples() {
        let e0 = MapWithHoles::initial(1).unwrap();
        let t = decode("T2(0,0)").unwrap();
        assert_eq!(peel_type_of(&e0, 1, &t).unwrap(), PeelEvent::Type2(0, 0));
        for s in ["T1,T2(0,1),T2(0,0)", "T1,T2(1,0),T2(0,0)"] {
            assert_eq!(peel_type_of(&e0, 1, &decode(s).unwrap()).unwrap(), PeelEvent::Type1);
        }
        let big = decode("T1,T1,T2(0,2),T2(0,1),T2(0,0)").unwrap();
        assert!(matches!(peel_type_of(&MapWithHoles::initial(2).unwrap(), 1, &big), Err(Error::NotSubmap)));
    }

    #[test]
    fn glue_spec_example() {
        let t1 = replay(1, &[PeelEvent::Type1]).unwrap();
        let tree = decode("T2(0,1),T2(0,0)").unwrap();
        let g = glue(&t1, &[tree]).unwrap();
        let target = decode("T1,T2(0,1),T2(0,0)").unwrap();
        assert_eq!(canonical_code(&g), canonical_code(&target));
    }

    #[test]
    fn stop_after_first_type1() {
        let q = decode("T1,T1,T2(0,2),T2(0,1),T2(0,0)").unwrap();
        let rule = |_: &MapWithHoles, ev: &[PeelEvent]| ev.contains(&PeelEvent::Type1);
        let ex = explore(&q, &Canonical, Some(&rule)).unwrap();
        assert_eq!(ex.events, vec![PeelEvent::Type1]);
        assert_eq!(ex.final_map().num_holes(), 1);
        assert!(is_submap(ex.final_map(), &q).is_some());
    }

    #[test]
    fn inactive_dart_from_algorithm() {
        let q = decode("T1,T2(0,1),T2(0,0)").unwrap();
        let bad = |b: &Builder| b.root();
        assert!(matches!(explore(&q, &bad, None), Err(Error::AlgorithmReturnedInactiveDart(_))));
    }

    #[test]
    fn prefixes_are_submaps_and_glue_back() {
        let q = decode("T1,T1,T2(1,1),T2(0,0),T2(0,0)").unwrap();
        let ex = explore(&q, &Canonical, None).unwrap();
        assert_eq!(canonical_code(ex.final_map()), canonical_code(&q));
        for e in &ex.maps {
            let fills = is_submap(e, &q).expect("prefix is a submap");
            assert_eq!(canonical_code(&glue(e, &fills).unwrap()), canonical_code(&q));
        }
    }
}
