//! Windowed lower Banach density, `E`-cores and the lemma verifiers built on them.
//!
//! The density of `H` with respect to a shape `F` is the least fraction of a
//! right translate `Fg` covered by `H`. On a finite window the minimum runs
//! over the translates that fit entirely inside the window; the number of
//! such translates is always reported next to the value.

use rayon::prelude::*;
use rustc_hash::FxHashSet;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::folner::invariance_defect;
use crate::group::{FiniteSubset, GroupElement, GroupSpec, Side};
use crate::index::ElementIndex;
use crate::quasitiling::Quasitiling;
use crate::rational::{check_unit_interval, ratio, Fraction, Rational};

/// A nonempty finite region of the group standing in for the whole group.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Window {
    region: FiniteSubset,
}

impl Window {
    pub fn new(region: FiniteSubset) -> Result<Self> {
        if region.is_empty() {
            return Err(Error::domain("window must be nonempty"));
        }
        Ok(Window { region })
    }

    /// `[0, side)^rank`.
    pub fn cube(group: GroupSpec, side: i64) -> Result<Self> {
        Self::new(FiniteSubset::cube(group, side)?)
    }

    pub fn region(&self) -> &FiniteSubset {
        &self.region
    }

    pub fn group(&self) -> GroupSpec {
        self.region.group()
    }

    pub fn len(&self) -> usize {
        self.region.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn contains(&self, g: &GroupElement) -> bool {
        self.region.contains(g)
    }

    /// `{g : F·g ⊆ W}`.
    pub fn interior(&self, shape: &FiniteSubset) -> Result<FiniteSubset> {
        self.region.interior_positions(shape)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct DensityReport {
    pub value_num: i64,
    pub value_den: i64,
    pub argmin: GroupElement,
    pub interior_size: usize,
    #[serde(skip)]
    pub value: Rational,
}

/// `min_{g : Fg ⊆ W} |H ∩ Fg| / |F|` with its argmin (first in canonical order).
pub fn lower_density_over_window(h: &FiniteSubset, f: &FiniteSubset, window: &Window) -> Result<DensityReport> {
    if f.is_empty() {
        return Err(Error::domain("density shape must be nonempty"));
    }
    if h.group() != f.group() || f.group() != window.group() {
        return Err(Error::domain("H, F and the window belong to different groups"));
    }
    let interior = window.interior(f)?;
    if interior.is_empty() {
        return Err(Error::domain(format!(
            "no translate of the shape (|F| = {}) fits inside the window",
            f.len()
        )));
    }
    let group = f.group();
    let positions = interior.as_slice();
    let counts: Vec<usize> = positions
        .par_iter()
        .map(|g| {
            f.iter()
                .filter(|x| {
                    // translates of interior positions stay in range by construction
                    let y = group
                        .mul(x, g)
                        .expect("translate of an interior position is representable");
                    h.contains(&y)
                })
                .count()
        })
        .collect();
    let (idx, &min) = counts
        .iter()
        .enumerate()
        .min_by_key(|&(i, c)| (*c, i))
        .expect("interior is nonempty");
    let value = ratio(min, f.len());
    Ok(DensityReport {
        value_num: *value.numer(),
        value_den: *value.denom(),
        argmin: positions[idx].clone(),
        interior_size: positions.len(),
        value,
    })
}

/// `F_E = {f ∈ F : E·f ⊆ F}`.
pub fn e_core(f: &FiniteSubset, e: &FiniteSubset) -> Result<FiniteSubset> {
    if f.group() != e.group() {
        return Err(Error::domain("F and E belong to different groups"));
    }
    let group = f.group();
    let mut keep = Vec::new();
    'outer: for x in f {
        for g in e {
            match group.mul(g, x) {
                Ok(y) if f.contains(&y) => {}
                Ok(_) => continue 'outer,
                Err(Error::Overflow(_)) => continue 'outer,
                Err(err) => return Err(err),
            }
        }
        keep.push(x.clone());
    }
    FiniteSubset::new(group, keep)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CoreLemmaReport {
    pub delta_used: Fraction,
    pub defect: Fraction,
    pub core_size: usize,
    pub set_size: usize,
    pub core_fraction: Fraction,
    /// `defect <= δ`
    pub hypothesis_met: bool,
    pub pass: bool,
}

/// With `δ = ε/|E|`: `(E,δ)`-invariance of `F` forces `|F_E| >= (1-ε)|F|`.
pub fn check_core_lemma(e: &FiniteSubset, eps: &Rational, f: &FiniteSubset) -> Result<CoreLemmaReport> {
    check_unit_interval("eps", eps, false)?;
    if !e.contains_identity() {
        return Err(Error::domain("E must contain the identity"));
    }
    let delta = *eps / Rational::from_integer(e.len() as i64);
    let defect = invariance_defect(f, e)?;
    let core = e_core(f, e)?;
    let frac = ratio(core.len(), f.len());
    let hypothesis_met = defect <= delta;
    let conclusion = frac >= Rational::from_integer(1) - *eps;
    Ok(CoreLemmaReport {
        delta_used: delta.into(),
        defect: defect.into(),
        core_size: core.len(),
        set_size: f.len(),
        core_fraction: frac.into(),
        hypothesis_met,
        pass: !hypothesis_met || conclusion,
    })
}

/// `A` lies on the boundary of `B`: it meets `B` and is not contained in it.
pub fn lies_on_boundary(a: &FiniteSubset, b: &FiniteSubset) -> bool {
    let inside = a.intersection_len(b);
    inside > 0 && inside < a.len()
}

pub(crate) fn check_nested(shapes: &[FiniteSubset]) -> Result<()> {
    for (i, w) in shapes.windows(2).enumerate() {
        if !w[0].is_subset(&w[1]) {
            return Err(Error::domain(format!(
                "shapes are not nested: shape {i} is not contained in shape {}",
                i + 1
            )));
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct BoundaryReport {
    pub boundary_mass: Fraction,
    pub bound: Fraction,
    pub delta_used: Fraction,
    pub defect: Fraction,
    pub boundary_tiles: usize,
    pub hypothesis_met: bool,
    pub pass: bool,
}

/// Tiles of `tiling` lying on the boundary of `F` cover less than `ε|F|` of
/// `F`, provided `F` is `(T_k T_k⁻¹, δ)`-invariant with
/// `δ = (ε/|T_k|) / |T_k T_k⁻¹|`.
pub fn check_boundary_lemma(tiling: &Quasitiling, f: &FiniteSubset, eps: &Rational) -> Result<BoundaryReport> {
    check_unit_interval("eps", eps, false)?;
    check_nested(tiling.shapes())?;
    if f.is_empty() {
        return Err(Error::domain("F must be nonempty"));
    }
    let largest = tiling
        .shapes()
        .last()
        .ok_or_else(|| Error::domain("tiling has no shapes"))?;
    let diff_set = largest.product(&largest.inverse()?)?;
    let delta = *eps / Rational::from_integer(largest.len() as i64) / Rational::from_integer(diff_set.len() as i64);
    let defect = invariance_defect(f, &diff_set)?;

    let group = f.group();
    let index = ElementIndex::new(f);
    let mut covered = vec![false; f.len()];
    let mut boundary_tiles = 0;
    let mut hits: Vec<usize> = Vec::new();
    for (shape, centers) in tiling.shapes().iter().zip(tiling.centers()) {
        for c in centers {
            hits.clear();
            for t in shape {
                if let Some(i) = index.get(&group.mul(t, c)?) {
                    hits.push(i);
                }
            }
            if !hits.is_empty() && hits.len() < shape.len() {
                boundary_tiles += 1;
                for &i in &hits {
                    covered[i] = true;
                }
            }
        }
    }
    let mass = ratio(covered.iter().filter(|&&b| b).count(), f.len());
    let hypothesis_met = defect <= delta;
    Ok(BoundaryReport {
        boundary_mass: mass.into(),
        bound: (*eps).into(),
        delta_used: delta.into(),
        defect: defect.into(),
        boundary_tiles,
        hypothesis_met,
        pass: !hypothesis_met || mass < *eps,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct LargeCoreReport {
    pub d_e: Fraction,
    pub d_eprime: Fraction,
    pub difference: Fraction,
    pub gamma: Fraction,
    pub interior_size: usize,
    pub pass: bool,
}

/// Windowed check that shrinking every tile to a `(1-γ)`-subset of itself
/// lowers the density of the union by less than `γ`.
pub fn check_large_core(
    shapes: &[FiniteSubset],
    cores: &[FiniteSubset],
    centers: &[FiniteSubset],
    gamma: &Rational,
    f_test: &FiniteSubset,
    window: &Window,
) -> Result<LargeCoreReport> {
    check_unit_interval("gamma", gamma, false)?;
    if shapes.len() != cores.len() || shapes.len() != centers.len() {
        return Err(Error::domain("shapes, cores and centers must have equal length"));
    }
    check_nested(shapes)?;
    let one = Rational::from_integer(1);
    for (i, (s, c)) in shapes.iter().zip(cores).enumerate() {
        if !c.is_subset(s) {
            return Err(Error::domain(format!("core {i} is not a subset of shape {i}")));
        }
        if ratio(c.len(), 1) <= (one - *gamma) * ratio(s.len(), 1) {
            return Err(Error::domain(format!(
                "core {i} has {} of {} elements, not more than (1-γ)·|shape|",
                c.len(),
                s.len()
            )));
        }
    }
    for i in 0..centers.len() {
        for j in i + 1..centers.len() {
            if centers[i].intersection_len(&centers[j]) > 0 {
                return Err(Error::domain(format!("center sets {i} and {j} intersect")));
            }
        }
    }
    let group = window.group();
    let mut full = Vec::new();
    let mut reduced = Vec::new();
    for ((s, c), cs) in shapes.iter().zip(cores).zip(centers) {
        let mut seen: FxHashSet<GroupElement> = FxHashSet::default();
        for center in cs {
            for x in s.translate(center, Side::Right)?.iter() {
                if window.contains(x) && !seen.insert(x.clone()) {
                    return Err(Error::domain(format!(
                        "tiles of one level overlap at {x} inside the window"
                    )));
                }
            }
            full.extend(s.translate(center, Side::Right)?.iter().cloned());
            reduced.extend(c.translate(center, Side::Right)?.iter().cloned());
        }
    }
    let e_full = FiniteSubset::new(group, full)?;
    let e_red = FiniteSubset::new(group, reduced)?;
    let d_e = lower_density_over_window(&e_full, f_test, window)?;
    let d_ep = lower_density_over_window(&e_red, f_test, window)?;
    let diff = d_e.value - d_ep.value;
    Ok(LargeCoreReport {
        d_e: d_e.value.into(),
        d_eprime: d_ep.value.into(),
        difference: diff.into(),
        gamma: (*gamma).into(),
        interior_size: d_e.interior_size,
        pass: diff < *gamma,
    })
}
