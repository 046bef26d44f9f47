//! Exact counts of quadrangulations with a boundary and exhaustive generation.
//!
//! `N(ℓ, f)` is the number of rooted quadrangulations with semi-perimeter `ℓ`
//! and `f` internal faces. Splitting on the first canonical peeling event gives
//! `N(ℓ, f) = N(ℓ+1, f−1) + Σ_{l1+l2=ℓ−1} Σ_{f1+f2=f} N(l1, f1) N(l2, f2)` for
//! `ℓ ≥ 1`, with the vertex map `N(0, 0) = 1` as the base case.

use std::sync::{Arc, Mutex};

use num_bigint::BigUint;
use num_rational::BigRational;
use num_traits::{ToPrimitive, Zero};

use crate::error::{Error, Result};
use crate::map::MapWithHoles;
use crate::peeling::{Builder, PeelEvent};

/// Default bound on `ℓ + 2f` for exhaustive generation.
pub const DEFAULT_GENERATION_BOUND: usize = 10;

/// Exact table of `N(ℓ, f)`.
///
/// Entry `(ℓ, f)` is available when `f ≤ fmax` and `ℓ ≤ lmax + fmax − f`; the
/// triangle beyond `lmax` holds the larger semi-perimeters the recursion needs.
#[derive(Clone, Debug)]
pub struct CensusTable {
    lmax: usize,
    fmax: usize,
    rows: Vec<Vec<BigUint>>,
}

impl CensusTable {
    /// Computes the table covering `ℓ ≤ lmax` and `f ≤ fmax`.
    pub fn new(lmax: usize, fmax: usize) -> Self {
        let top = lmax + fmax;
        let mut rows: Vec<Vec<BigUint>> = (0..=top).map(|l| vec![BigUint::zero(); fmax.min(top - l) + 1]).collect();
        rows[0][0] = BigUint::from(1u32);
        for f in 0..=fmax {
            for l in 1..=(top - f) {
                let mut acc = if f > 0 { rows[l + 1][f - 1].clone() } else { BigUint::zero() };
                for l1 in 0..l {
                    let l2 = l - 1 - l1;
                    for f1 in 0..=f {
                        let f2 = f - f1;
                        let (a, b) = (&rows[l1][f1], &rows[l2][f2]);
                        if !a.is_zero() && !b.is_zero() {
                            acc += a * b;
                        }
                    }
                }
                rows[l][f] = acc;
            }
        }
        CensusTable { lmax, fmax, rows }
    }

    /// Largest semi-perimeter covered for every `f ≤ fmax`.
    pub fn lmax(&self) -> usize {
        self.lmax
    }

    /// Largest face count covered.
    pub fn fmax(&self) -> usize {
        self.fmax
    }

    /// True when `(ℓ, f)` is in the table.
    pub fn covers(&self, ell: usize, f: usize) -> bool {
        f <= self.fmax && ell <= self.lmax + self.fmax - f
    }

    /// Exact `N(ℓ, f)`.
    pub fn count(&self, ell: usize, f: usize) -> Result<&BigUint> {
        if !self.covers(ell, f) {
            return Err(Error::OutOfBounds(format!("N({ell},{f}) outside table (lmax {}, fmax {})", self.lmax, self.fmax)));
        }
        Ok(&self.rows[ell][f])
    }

    /// `N(ℓ, f)` as a float (may be infinite for huge entries).
    pub fn count_f64(&self, ell: usize, f: usize) -> Result<f64> {
        Ok(self.count(ell, f)?.to_f64().unwrap_or(f64::INFINITY))
    }

    /// Exact ratio `N(ℓ, f+1) / N(ℓ, f)`.
    pub fn growth_ratio(&self, ell: usize, f: usize) -> Result<BigRational> {
        let den = self.count(ell, f)?.clone();
        let num = self.count(ell, f + 1)?.clone();
        if den.is_zero() {
            return Err(Error::DivisionByZero);
        }
        Ok(BigRational::new(num.into(), den.into()))
    }
}

static SHARED: Mutex<Option<Arc<CensusTable>>> = Mutex::new(None);

/// A process-wide table covering at least `(lmax, fmax)`, grown on demand.
pub fn shared_census(lmax: usize, fmax: usize) -> Arc<CensusTable> {
    let mut guard = SHARED.lock().unwrap_or_else(|e| e.into_inner());
    if let Some(t) = guard.as_ref() {
        if t.lmax >= lmax && t.fmax >= fmax {
            return Arc::clone(t);
        }
    }
    let (l, f) = match guard.as_ref() {
        Some(t) => (t.lmax.max(lmax), t.fmax.max(fmax)),
        None => (lmax.max(8), fmax.max(64)),
    };
    let t = Arc::new(CensusTable::new(l, f));
    *guard = Some(Arc::clone(&t));
    t
}

/// Every hole-free map in `Q^{ℓ,f}`, once each, in codec order, with the default bound.
pub fn generate_all(ell: usize, f: usize) -> Result<Vec<MapWithHoles>> {
    generate_all_with_bound(ell, f, DEFAULT_GENERATION_BOUND)
}

/// Every hole-free map in `Q^{ℓ,f}` with the bound `ℓ + 2f ≤ bound`.
pub fn generate_all_with_bound(ell: usize, f: usize, bound: usize) -> Result<Vec<MapWithHoles>> {
    Ok(generate_codes_with_bound(ell, f, bound)?.into_iter().map(|(_, m)| m).collect())
}

/// Like [`generate_all_with_bound`] but also returns the event list of each map.
pub fn generate_codes_with_bound(ell: usize, f: usize, bound: usize) -> Result<Vec<(Vec<PeelEvent>, MapWithHoles)>> {
    if ell == 0 {
        return Err(Error::InvalidArgument("generation needs a positive semi-perimeter".into()));
    }
    if ell + 2 * f > bound {
        return Err(Error::BudgetExceeded { requested: ell + 2 * f, bound });
    }
    let mut out = Vec::new();
    let mut events = Vec::new();
    dfs(Builder::initial(ell)?, f, &mut events, &mut out)?;
    Ok(out)
}

fn dfs(b: Builder, rem: usize, events: &mut Vec<PeelEvent>, out: &mut Vec<(Vec<PeelEvent>, MapWithHoles)>) -> Result<()> {
    if b.is_complete() {
        if rem == 0 {
            out.push((events.clone(), b.to_map()));
        }
        return Ok(());
    }
    let h = b.marks()[0];
    let k = b.hole_half_perimeters()[0];
    let mut options = Vec::with_capacity(k + 1);
    if rem > 0 {
        options.push(PeelEvent::Type1);
    }
    for l1 in 0..k {
        options.push(PeelEvent::Type2(l1, k - 1 - l1));
    }
    for ev in options {
        let rem2 = if ev == PeelEvent::Type1 { rem - 1 } else { rem };
        let mut nb = b.clone();
        nb.peel(h, ev)?;
        if nb.is_complete() && rem2 > 0 {
            continue;
        }
        events.push(ev);
        dfs(nb, rem2, events, out)?;
        events.pop();
    }
    Ok(())
}
