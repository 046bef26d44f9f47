//! Rooted planar maps with boundary and holes.
//!
//! A map is a rotation system on darts `0..2E`: `alpha` pairs the two darts of
//! each edge and `sigma` rotates counterclockwise around vertices. Faces are the
//! orbits of `phi = sigma ∘ alpha`; every dart belongs to exactly one face and the
//! root face is the face of the root dart. Along a face cycle `phi` visits the
//! darts in the order that indexes boundary (phantom) faces: the dart
//! `phi^k(root)` carries boundary index `k`.
//!
//! A [`MapWithHoles`] designates some faces as holes, each with a marked dart on
//! it. Internal faces are all faces that are neither the root face nor a hole.
//! Holes are read in *fill order*: position `j` of a hole with marked dart `m` is
//! `phi^{-j}(m)`. Gluing a fill into a hole identifies the fill's boundary dart
//! with index `j` with hole position `j`, so fill order is the order in which the
//! fill sees the boundary condition of the hole.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const NONE: usize = usize::MAX;

/// A rooted planar map given by its rotation system.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct RotationMap {
    alpha: Vec<usize>,
    sigma: Vec<usize>,
    root: usize,
}

/// Face structure of a rotation system.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Faces {
    /// Face index of every dart.
    pub face_of: Vec<usize>,
    /// Darts of each face in `phi` order, starting from the smallest dart.
    pub cycles: Vec<Vec<usize>>,
}

fn check_permutation(p: &[usize], name: &str) -> Result<()> {
    let n = p.len();
    let mut seen = vec![false; n];
    for (i, &x) in p.iter().enumerate() {
        if x >= n {
            return Err(Error::InvalidPermutation(format!("{name}[{i}] = {x} out of range")));
        }
        if seen[x] {
            return Err(Error::InvalidPermutation(format!("{name} is not a bijection (value {x} repeated)")));
        }
        seen[x] = true;
    }
    Ok(())
}

impl RotationMap {
    /// Builds a map from its edge involution, vertex rotation and root dart.
    ///
    /// Checks that both arrays are permutations of the same size, that `alpha`
    /// is a fixed-point-free involution and that the map is connected.
    pub fn new(alpha: Vec<usize>, sigma: Vec<usize>, root: usize) -> Result<Self> {
        let n = alpha.len();
        if n == 0 {
            return Err(Error::InvalidPermutation("a map needs at least one edge".into()));
        }
        if sigma.len() != n {
            return Err(Error::InvalidPermutation(format!(
                "alpha has {} entries but sigma has {}",
                n,
                sigma.len()
            )));
        }
        check_permutation(&alpha, "alpha")?;
        check_permutation(&sigma, "sigma")?;
        for (d, &a) in alpha.iter().enumerate() {
            if a == d {
                return Err(Error::InvalidPermutation(format!("alpha fixes dart {d}")));
            }
            if alpha[a] != d {
                return Err(Error::InvalidPermutation(format!("alpha is not an involution at dart {d}")));
            }
        }
        if root >= n {
            return Err(Error::InvalidPermutation(format!("root {root} out of range")));
        }
        let m = RotationMap { alpha, sigma, root };
        if !m.is_connected() {
            return Err(Error::InvalidPermutation("map is not connected".into()));
        }
        Ok(m)
    }

    /// Builds a map from its edge involution and face permutation `phi = sigma ∘ alpha`.
    pub fn from_alpha_phi(alpha: Vec<usize>, phi: Vec<usize>, root: usize) -> Result<Self> {
        if phi.len() != alpha.len() {
            return Err(Error::InvalidPermutation("alpha and phi differ in size".into()));
        }
        check_permutation(&alpha, "alpha")?;
        check_permutation(&phi, "phi")?;
        let sigma = (0..alpha.len()).map(|e| phi[alpha[e]]).collect();
        RotationMap::new(alpha, sigma, root)
    }

    pub(crate) fn empty() -> Self {
        RotationMap { alpha: Vec::new(), sigma: Vec::new(), root: 0 }
    }

    /// Builds a map from arrays known to be consistent (used by the peeling builder).
    pub(crate) fn from_alpha_phi_unchecked(alpha: Vec<usize>, phi: Vec<usize>, root: usize) -> Self {
        let sigma = (0..alpha.len()).map(|e| phi[alpha[e]]).collect();
        RotationMap { alpha, sigma, root }
    }

    fn is_connected(&self) -> bool {
        let n = self.alpha.len();
        let mut seen = vec![false; n];
        let mut stack = vec![self.root];
        seen[self.root] = true;
        let mut count = 1;
        while let Some(d) = stack.pop() {
            for e in [self.alpha[d], self.sigma[d]] {
                if !seen[e] {
                    seen[e] = true;
                    count += 1;
                    stack.push(e);
                }
            }
        }
        count == n
    }

    /// Number of darts (twice the number of edges).
    pub fn num_darts(&self) -> usize {
        self.alpha.len()
    }

    /// Number of edges.
    pub fn num_edges(&self) -> usize {
        self.alpha.len() / 2
    }

    /// Root dart.
    pub fn root(&self) -> usize {
        self.root
    }

    /// The dart paired with `d` by the edge involution.
    pub fn alpha(&self, d: usize) -> usize {
        self.alpha[d]
    }

    /// The next dart counterclockwise around the origin of `d`.
    pub fn sigma(&self, d: usize) -> usize {
        self.sigma[d]
    }

    /// The next dart along the face of `d`.
    pub fn phi(&self, d: usize) -> usize {
        self.sigma[self.alpha[d]]
    }

    /// The edge involution as a slice.
    pub fn alpha_slice(&self) -> &[usize] {
        &self.alpha
    }

    /// The vertex rotation as a slice.
    pub fn sigma_slice(&self) -> &[usize] {
        &self.sigma
    }

    /// The face permutation as a vector.
    pub fn phi_vec(&self) -> Vec<usize> {
        (0..self.alpha.len()).map(|d| self.phi(d)).collect()
    }

    /// The inverse of the face permutation.
    pub fn phi_inv_vec(&self) -> Vec<usize> {
        let mut inv = vec![0; self.alpha.len()];
        for d in 0..self.alpha.len() {
            inv[self.phi(d)] = d;
        }
        inv
    }

    /// Returns the same map with another root dart.
    pub fn with_root(&self, root: usize) -> Result<Self> {
        if root >= self.num_darts() {
            return Err(Error::InvalidArgument(format!("root {root} out of range")));
        }
        Ok(RotationMap { alpha: self.alpha.clone(), sigma: self.sigma.clone(), root })
    }

    /// Orbits of `phi`.
    pub fn faces(&self) -> Faces {
        orbits(self.alpha.len(), |d| self.phi(d))
    }

    /// Number of orbits of `sigma`.
    pub fn vertex_count(&self) -> usize {
        orbits(self.alpha.len(), |d| self.sigma[d]).cycles.len()
    }

    /// V − E + F.
    pub fn euler_characteristic(&self) -> i64 {
        self.vertex_count() as i64 - self.num_edges() as i64 + self.faces().cycles.len() as i64
    }
}

fn orbits(n: usize, next: impl Fn(usize) -> usize) -> Faces {
    let mut face_of = vec![NONE; n];
    let mut cycles = Vec::new();
    for start in 0..n {
        if face_of[start] != NONE {
            continue;
        }
        let id = cycles.len();
        let mut cyc = Vec::new();
        let mut d = start;
        loop {
            face_of[d] = id;
            cyc.push(d);
            d = next(d);
            if d == start {
                break;
            }
        }
        cycles.push(cyc);
    }
    Faces { face_of, cycles }
}

/// The role of a face in a map with holes.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FaceKind {
    /// The root (exterior) face.
    Root,
    /// The hole with the given index in the hole list.
    Hole(usize),
    /// An internal face.
    Internal,
}

/// Face structure annotated with face roles.
#[derive(Clone, Debug)]
pub struct Layout {
    /// Face index of every dart.
    pub face_of: Vec<usize>,
    /// Darts of each face in `phi` order.
    pub cycles: Vec<Vec<usize>>,
    /// Index of the root face.
    pub root_face: usize,
    /// Role of every face.
    pub kind: Vec<FaceKind>,
}

impl Layout {
    /// True when the dart lies on a hole face.
    pub fn is_hole_dart(&self, d: usize) -> bool {
        matches!(self.kind[self.face_of[d]], FaceKind::Hole(_))
    }

    /// True when the dart lies on the root face or on an internal face.
    pub fn is_explored_dart(&self, d: usize) -> bool {
        !self.is_hole_dart(d)
    }

    /// Indices of internal faces in increasing order.
    pub fn internal_faces(&self) -> Vec<usize> {
        (0..self.kind.len()).filter(|&f| self.kind[f] == FaceKind::Internal).collect()
    }
}

/// A hole record: the hole face and its marked dart.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Hole {
    /// Face index of the hole.
    pub face: usize,
    /// Marked dart lying on the hole face.
    pub marked: usize,
}

/// A rooted planar map together with an ordered list of holes.
///
/// The cemetery (the empty map) is represented by a map without darts.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MapWithHoles {
    base: RotationMap,
    marks: Vec<usize>,
}

impl MapWithHoles {
    /// Builds a map with holes given by their marked darts.
    pub fn new(base: RotationMap, marks: Vec<usize>) -> Result<Self> {
        let faces = base.faces();
        let root_face = faces.face_of[base.root()];
        let mut used = vec![false; faces.cycles.len()];
        for (i, &m) in marks.iter().enumerate() {
            if m >= base.num_darts() {
                return Err(Error::InvalidHole(format!("marked dart {m} of hole {i} out of range")));
            }
            let f = faces.face_of[m];
            if f == root_face {
                return Err(Error::InvalidHole(format!("hole {i} is the root face")));
            }
            if used[f] {
                return Err(Error::InvalidHole(format!("hole {i} repeats a face")));
            }
            if !faces.cycles[f].len().is_multiple_of(2) {
                return Err(Error::InvalidHole(format!("hole {i} has odd degree")));
            }
            used[f] = true;
        }
        Ok(MapWithHoles { base, marks })
    }

    pub(crate) fn new_unchecked(base: RotationMap, marks: Vec<usize>) -> Self {
        MapWithHoles { base, marks }
    }

    /// A hole-free map.
    pub fn hole_free(base: RotationMap) -> Self {
        MapWithHoles { base, marks: Vec::new() }
    }

    /// The cemetery: the empty map, minimal for the submap order.
    pub fn cemetery() -> Self {
        MapWithHoles { base: RotationMap::empty(), marks: Vec::new() }
    }

    /// True for the cemetery.
    pub fn is_cemetery(&self) -> bool {
        self.base.num_darts() == 0
    }

    /// The initial map of an exploration: a cycle of length `2ℓ` whose inside is
    /// one hole. Its root face and hole both have degree `2ℓ`.
    pub fn initial(ell: usize) -> Result<Self> {
        if ell == 0 {
            return Err(Error::InvalidArgument("semi-perimeter must be positive".into()));
        }
        let n = 4 * ell;
        let k = 2 * ell;
        let mut alpha = vec![0; n];
        let mut phi = vec![0; n];
        for i in 0..k {
            let r = 2 * i;
            let h = 2 * i + 1;
            alpha[r] = h;
            alpha[h] = r;
            phi[r] = 2 * ((i + 1) % k);
            phi[h] = 2 * ((i + k - 1) % k) + 1;
        }
        let base = RotationMap::from_alpha_phi(alpha, phi, 0)?;
        Ok(MapWithHoles { base, marks: vec![1] })
    }

    /// The underlying rotation system.
    pub fn base(&self) -> &RotationMap {
        &self.base
    }

    /// Marked darts of the holes, in hole order.
    pub fn marks(&self) -> &[usize] {
        &self.marks
    }

    /// Number of holes.
    pub fn num_holes(&self) -> usize {
        self.marks.len()
    }

    /// True when there are no holes.
    pub fn is_hole_free(&self) -> bool {
        self.marks.is_empty()
    }

    /// Hole records (face index and marked dart).
    pub fn holes(&self) -> Vec<Hole> {
        let faces = self.base.faces();
        self.marks.iter().map(|&m| Hole { face: faces.face_of[m], marked: m }).collect()
    }

    /// Face structure with roles.
    pub fn layout(&self) -> Layout {
        let faces = self.base.faces();
        let nf = faces.cycles.len();
        let mut kind = vec![FaceKind::Internal; nf];
        let root_face = if self.is_cemetery() { 0 } else { faces.face_of[self.base.root()] };
        if !self.is_cemetery() {
            kind[root_face] = FaceKind::Root;
        }
        for (i, &m) in self.marks.iter().enumerate() {
            kind[faces.face_of[m]] = FaceKind::Hole(i);
        }
        Layout { face_of: faces.face_of, cycles: faces.cycles, root_face, kind }
    }

    /// Half the degree of the root face (0 for the cemetery).
    pub fn semi_perimeter(&self) -> usize {
        if self.is_cemetery() {
            return 0;
        }
        self.root_face_darts().len() / 2
    }

    /// Darts of the root face in `phi` order starting at the root.
    pub fn root_face_darts(&self) -> Vec<usize> {
        if self.is_cemetery() {
            return Vec::new();
        }
        let r = self.base.root();
        let mut v = vec![r];
        let mut d = self.base.phi(r);
        while d != r {
            v.push(d);
            d = self.base.phi(d);
        }
        v
    }

    /// Darts of hole `i` in fill order (`phi^{-j}` of the marked dart).
    pub fn hole_darts_fill_order(&self, i: usize) -> Vec<usize> {
        let inv = self.base.phi_inv_vec();
        let m = self.marks[i];
        let mut v = vec![m];
        let mut d = inv[m];
        while d != m {
            v.push(d);
            d = inv[d];
        }
        v
    }

    /// Number of internal faces.
    pub fn internal_face_count(&self) -> usize {
        if self.is_cemetery() {
            return 0;
        }
        self.layout().kind.iter().filter(|k| **k == FaceKind::Internal).count()
    }

    /// Darts lying on hole faces (the active boundary).
    pub fn active_boundary(&self) -> Vec<usize> {
        let lay = self.layout();
        (0..self.base.num_darts()).filter(|&d| lay.is_hole_dart(d)).collect()
    }

    /// Replaces the marked dart of hole `i`.
    pub fn with_mark(&self, i: usize, dart: usize) -> Result<Self> {
        if i >= self.marks.len() {
            return Err(Error::NotAHole(format!("hole index {i}")));
        }
        let lay = self.layout();
        if lay.kind[lay.face_of[dart]] != FaceKind::Hole(i) {
            return Err(Error::NotActive(dart));
        }
        let mut marks = self.marks.clone();
        marks[i] = dart;
        Ok(MapWithHoles { base: self.base.clone(), marks })
    }
}

/// Checks that a map is a quadrangulation with boundary (holes allowed).
pub fn validate_quadrangulation(m: &MapWithHoles) -> Result<()> {
    if m.is_cemetery() {
        return Ok(());
    }
    let lay = m.layout();
    let root_deg = lay.cycles[lay.root_face].len();
    if !root_deg.is_multiple_of(2) {
        return Err(Error::NonQuadFace(lay.root_face));
    }
    for (f, cyc) in lay.cycles.iter().enumerate() {
        match lay.kind[f] {
            FaceKind::Internal if cyc.len() != 4 => return Err(Error::NonQuadFace(f)),
            FaceKind::Hole(_) if cyc.len() % 2 != 0 => return Err(Error::NonQuadFace(f)),
            _ => {}
        }
    }
    let v = m.base().vertex_count();
    let e = m.base().num_edges();
    let f = lay.cycles.len();
    if v + f != e + 2 {
        return Err(Error::EulerViolation { vertices: v, edges: e, faces: f });
    }
    Ok(())
}

/// Moves the root to another dart of the root face.
pub fn reroot(m: &MapWithHoles, dart: usize) -> Result<MapWithHoles> {
    if m.is_cemetery() || dart >= m.base().num_darts() {
        return Err(Error::DartNotOnBoundary(dart));
    }
    let faces = m.base().faces();
    if faces.face_of[dart] != faces.face_of[m.base().root()] {
        return Err(Error::DartNotOnBoundary(dart));
    }
    Ok(MapWithHoles { base: m.base().with_root(dart)?, marks: m.marks.clone() })
}

/// Breadth-first relabeling of darts from the root, following `alpha` then `sigma`.
pub fn canonical_labeling(m: &MapWithHoles) -> Vec<usize> {
    let n = m.base().num_darts();
    let mut label = vec![NONE; n];
    if n == 0 {
        return label;
    }
    let mut queue = VecDeque::with_capacity(n);
    label[m.base().root()] = 0;
    queue.push_back(m.base().root());
    let mut next = 1;
    while let Some(d) = queue.pop_front() {
        for e in [m.base().alpha(d), m.base().sigma(d)] {
            if label[e] == NONE {
                label[e] = next;
                next += 1;
                queue.push_back(e);
            }
        }
    }
    label
}

/// A byte string identifying the map up to root-preserving isomorphism.
///
/// Encodes the relabeled `alpha` and `sigma` followed by the sorted labels of
/// the marked darts; hole order is not part of the identity.
pub fn canonical_code(m: &MapWithHoles) -> Vec<u8> {
    let n = m.base().num_darts();
    if n == 0 {
        return Vec::new();
    }
    let label = canonical_labeling(m);
    let mut order = vec![0; n];
    for d in 0..n {
        order[label[d]] = d;
    }
    let mut out = Vec::with_capacity(4 * (2 * n + m.marks.len() + 2));
    let mut push = |x: usize| out.extend_from_slice(&(x as u32).to_le_bytes());
    push(n);
    for &d in &order {
        push(label[m.base().alpha(d)]);
        push(label[m.base().sigma(d)]);
    }
    let mut marks: Vec<usize> = m.marks.iter().map(|&d| label[d]).collect();
    marks.sort_unstable();
    push(marks.len());
    for x in marks {
        push(x);
    }
    out
}

/// Internal faces listed in canonical order (by smallest canonical dart label).
pub fn canonical_internal_faces(m: &MapWithHoles) -> Vec<usize> {
    let lay = m.layout();
    let label = canonical_labeling(m);
    let mut faces: Vec<(usize, usize)> = lay
        .internal_faces()
        .into_iter()
        .map(|f| (lay.cycles[f].iter().map(|&d| label[d]).min().unwrap_or(NONE), f))
        .collect();
    faces.sort_unstable();
    faces.into_iter().map(|(_, f)| f).collect()
}

/// Correspondence between a submap and a larger map.
#[derive(Clone, Debug)]
pub struct Embedding {
    /// Image of every explored dart of the submap (`usize::MAX` on hole darts).
    pub dart_map: Vec<usize>,
    /// One fill per hole of the submap.
    pub fills: Vec<MapWithHoles>,
    /// For every fill, the image of each fill dart in the larger map
    /// (`usize::MAX` on the fill's root-face darts).
    pub fill_dart_maps: Vec<Vec<usize>>,
}

/// Returns the unique fills `F` with `q2 = q1 ⊙ F`, or `None` when `q1 ⊄ q2`.
pub fn is_submap(q1: &MapWithHoles, q2: &MapWithHoles) -> Option<Vec<MapWithHoles>> {
    embed(q1, q2).map(|e| e.fills)
}

/// Computes the embedding of `q1` into `q2` together with the fills.
pub fn embed(q1: &MapWithHoles, q2: &MapWithHoles) -> Option<Embedding> {
    if q1.is_cemetery() {
        let n = q2.base().num_darts();
        return Some(Embedding { dart_map: Vec::new(), fills: vec![q2.clone()], fill_dart_maps: vec![(0..n).collect()] });
    }
    if q2.is_cemetery() {
        return None;
    }
    let b1 = q1.base();
    let b2 = q2.base();
    let lay1 = q1.layout();
    let lay2 = q2.layout();
    if lay1.cycles[lay1.root_face].len() != lay2.cycles[lay2.root_face].len() {
        return None;
    }
    let n1 = b1.num_darts();
    let n2 = b2.num_darts();
    let mut emb = vec![NONE; n1];
    let mut inv = vec![NONE; n2];
    let mut queue = VecDeque::new();
    let assign = |y: usize, x: usize, emb: &mut Vec<usize>, inv: &mut Vec<usize>, queue: &mut VecDeque<usize>| -> bool {
        if emb[y] != NONE {
            return emb[y] == x;
        }
        if inv[x] != NONE || lay2.is_hole_dart(x) {
            return false;
        }
        emb[y] = x;
        inv[x] = y;
        queue.push_back(y);
        true
    };
    if !assign(b1.root(), b2.root(), &mut emb, &mut inv, &mut queue) {
        return None;
    }
    while let Some(y) = queue.pop_front() {
        let x = emb[y];
        if !assign(b1.phi(y), b2.phi(x), &mut emb, &mut inv, &mut queue) {
            return None;
        }
        let a = b1.alpha(y);
        if lay1.is_explored_dart(a) && !assign(a, b2.alpha(x), &mut emb, &mut inv, &mut queue) {
            return None;
        }
    }
    for y in 0..n1 {
        if lay1.is_explored_dart(y) && emb[y] == NONE {
            return None;
        }
    }
    // Hole positions in fill order.
    let nh = q1.num_holes();
    let mut pos = vec![(NONE, NONE); n1];
    let mut hole_darts = Vec::with_capacity(nh);
    for i in 0..nh {
        let hd = q1.hole_darts_fill_order(i);
        for (j, &p) in hd.iter().enumerate() {
            if !lay1.is_explored_dart(b1.alpha(p)) {
                return None;
            }
            pos[p] = (i, j);
        }
        hole_darts.push(hd);
    }
    let mut region = vec![NONE; n2];
    let mut fills = Vec::with_capacity(nh);
    let mut fill_maps = Vec::with_capacity(nh);
    for i in 0..nh {
        let hd = &hole_darts[i];
        let k2 = hd.len();
        let xs: Vec<usize> = hd.iter().map(|&p| b2.alpha(emb[b1.alpha(p)])).collect();
        // Region darts of q2 inside hole i.
        let mut ids: Vec<usize> = Vec::new();
        let mut local = std::collections::HashMap::new();
        let mut q = VecDeque::new();
        for &x in &xs {
            if inv[x] == NONE && region[x] == NONE {
                region[x] = i;
                local.insert(x, k2 + ids.len());
                ids.push(x);
                q.push_back(x);
            } else if inv[x] == NONE && region[x] != i {
                return None;
            }
        }
        while let Some(z) = q.pop_front() {
            for w in [b2.phi(z), b2.alpha(z)] {
                if inv[w] != NONE {
                    continue;
                }
                if region[w] == NONE {
                    region[w] = i;
                    local.insert(w, k2 + ids.len());
                    ids.push(w);
                    q.push_back(w);
                } else if region[w] != i {
                    return None;
                }
            }
        }
        let nf = k2 + ids.len();
        let mut alpha = vec![NONE; nf];
        let mut phi = vec![NONE; nf];
        // Position in this hole of the hole dart facing an explored dart y.
        let partner_pos = |y: usize| -> Option<usize> {
            let a = b1.alpha(y);
            let (hi, j) = pos[a];
            if hi == i {
                Some(j)
            } else {
                None
            }
        };
        for j in 0..k2 {
            phi[j] = (j + 1) % k2;
            let x = xs[j];
            alpha[j] = if inv[x] != NONE { partner_pos(inv[x])? } else { local[&x] };
        }
        for (t, &z) in ids.iter().enumerate() {
            let id = k2 + t;
            let a = b2.alpha(z);
            alpha[id] = if inv[a] != NONE {
                let j = partner_pos(inv[a])?;
                if xs[j] != z {
                    return None;
                }
                j
            } else {
                *local.get(&a)?
            };
            phi[id] = *local.get(&b2.phi(z))?;
        }
        let base = RotationMap::from_alpha_phi(alpha, phi, 0).ok()?;
        let marks: Vec<usize> = q2.marks().iter().filter(|&&m| region[m] == i).map(|m| local[m]).collect();
        let fill = MapWithHoles::new(base, marks).ok()?;
        let mut fmap = vec![NONE; nf];
        for (t, &z) in ids.iter().enumerate() {
            fmap[k2 + t] = z;
        }
        fills.push(fill);
        fill_maps.push(fmap);
    }
    for x in 0..n2 {
        if inv[x] == NONE && region[x] == NONE {
            return None;
        }
    }
    Some(Embedding { dart_map: emb, fills, fill_dart_maps: fill_maps })
}

/// Glues one fill into every hole of `q1` (hole order), identifying the marked
/// dart of each hole with the fill's root dart.
pub fn glue(q1: &MapWithHoles, fills: &[MapWithHoles]) -> Result<MapWithHoles> {
    if q1.is_cemetery() {
        if fills.len() != 1 {
            return Err(Error::NotAHole("the cemetery takes exactly one fill".into()));
        }
        return Ok(fills[0].clone());
    }
    let nh = q1.num_holes();
    if fills.len() != nh {
        return Err(Error::NotAHole(format!("{} fills for {} holes", fills.len(), nh)));
    }
    let b1 = q1.base();
    let lay1 = q1.layout();
    let n1 = b1.num_darts();
    let mut hole_darts = Vec::with_capacity(nh);
    let mut pos = vec![(NONE, NONE); n1];
    for i in 0..nh {
        let hd = q1.hole_darts_fill_order(i);
        if fills[i].is_cemetery() || hd.len() != 2 * fills[i].semi_perimeter() {
            return Err(Error::PerimeterMismatch(i));
        }
        for (j, &p) in hd.iter().enumerate() {
            if lay1.is_hole_dart(b1.alpha(p)) {
                return Err(Error::InvalidHole(format!("hole {i} has an edge without explored side")));
            }
            pos[p] = (i, j);
        }
        hole_darts.push(hd);
    }
    let mut id1 = vec![NONE; n1];
    let mut next = 0;
    for (y, slot) in id1.iter_mut().enumerate() {
        if lay1.is_explored_dart(y) {
            *slot = next;
            next += 1;
        }
    }
    // Per fill: position of root-face darts and ids of the remaining darts.
    let mut gpos: Vec<Vec<usize>> = Vec::with_capacity(nh);
    let mut gdart: Vec<Vec<usize>> = Vec::with_capacity(nh);
    let mut idf: Vec<Vec<usize>> = Vec::with_capacity(nh);
    for f in fills {
        let n = f.base().num_darts();
        let rf = f.root_face_darts();
        let mut gp = vec![NONE; n];
        for (j, &g) in rf.iter().enumerate() {
            gp[g] = j;
        }
        let mut ids = vec![NONE; n];
        for (z, slot) in ids.iter_mut().enumerate() {
            if gp[z] == NONE {
                *slot = next;
                next += 1;
            }
        }
        gpos.push(gp);
        gdart.push(rf);
        idf.push(ids);
    }
    let total = next;
    let mut alpha = vec![NONE; total];
    let mut phi = vec![NONE; total];
    for y in 0..n1 {
        if id1[y] == NONE {
            continue;
        }
        phi[id1[y]] = id1[b1.phi(y)];
        let a = b1.alpha(y);
        alpha[id1[y]] = if id1[a] != NONE {
            id1[a]
        } else {
            let (i, j) = pos[a];
            let f = fills[i].base();
            let z = f.alpha(gdart[i][j]);
            if gpos[i][z] != NONE {
                id1[b1.alpha(hole_darts[i][gpos[i][z]])]
            } else {
                idf[i][z]
            }
        };
    }
    for (i, fill) in fills.iter().enumerate() {
        let f = fill.base();
        for z in 0..f.num_darts() {
            if idf[i][z] == NONE {
                continue;
            }
            phi[idf[i][z]] = idf[i][f.phi(z)];
            let a = f.alpha(z);
            alpha[idf[i][z]] = if gpos[i][a] != NONE { id1[b1.alpha(hole_darts[i][gpos[i][a]])] } else { idf[i][a] };
        }
    }
    let base = RotationMap::from_alpha_phi(alpha, phi, id1[b1.root()])?;
    let mut marks = Vec::new();
    for (i, fill) in fills.iter().enumerate() {
        for &m in fill.marks() {
            marks.push(idf[i][m]);
        }
    }
    MapWithHoles::new(base, marks)
}

/// JSON-compatible raw form of a map with holes.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawMap {
    /// Number of darts.
    pub darts: usize,
    /// Edge involution.
    pub alpha: Vec<usize>,
    /// Counterclockwise vertex rotation.
    pub sigma: Vec<usize>,
    /// Root dart.
    pub root: usize,
    /// Marked darts of the holes, in hole order.
    pub holes: Vec<usize>,
}

impl RawMap {
    /// Raw form of a map.
    pub fn from_map(m: &MapWithHoles) -> Self {
        RawMap {
            darts: m.base().num_darts(),
            alpha: m.base().alpha_slice().to_vec(),
            sigma: m.base().sigma_slice().to_vec(),
            root: m.base().root(),
            holes: m.marks().to_vec(),
        }
    }

    /// Validated map from the raw form.
    pub fn to_map(&self) -> Result<MapWithHoles> {
        if self.darts == 0 {
            return Ok(MapWithHoles::cemetery());
        }
        if self.alpha.len() != self.darts || self.sigma.len() != self.darts {
            return Err(Error::InvalidPermutation("array lengths differ from dart count".into()));
        }
        let base = RotationMap::new(self.alpha.clone(), self.sigma.clone(), self.root)?;
        MapWithHoles::new(base, self.holes.clone())
    }

    /// Parses the JSON form.
    pub fn from_json(s: &str) -> Result<Self> {
        serde_json::from_str(s).map_err(|e| Error::Parse(e.to_string()))
    }

    /// Serializes to JSON.
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("raw maps always serialize")
    }
}
