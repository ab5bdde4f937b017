//! Dense indexing of the elements of a finite set.
//!
//! Cuboids in any group (coordinate boxes) get arithmetic indexing; other
//! sets fall back to a hash map. In both cases the index of an element is its
//! position in canonical order.

use rustc_hash::FxHashMap;

use crate::group::{FiniteSubset, GroupElement};

#[derive(Debug, Clone)]
pub enum ElementIndex {
    Cuboid { lo: Vec<i64>, extent: Vec<i64> },
    Map(FxHashMap<GroupElement, usize>),
}

impl ElementIndex {
    pub fn new(set: &FiniteSubset) -> Self {
        match bounding_box(set) {
            Some((lo, hi)) if is_full_box(set, &lo, &hi) => {
                let extent = lo.iter().zip(&hi).map(|(a, b)| b - a).collect();
                ElementIndex::Cuboid { lo, extent }
            }
            _ => ElementIndex::Map(set.iter().cloned().enumerate().map(|(i, g)| (g, i)).collect()),
        }
    }

    pub fn get(&self, g: &GroupElement) -> Option<usize> {
        match self {
            ElementIndex::Cuboid { lo, extent } => {
                let c = g.coords();
                let mut idx: usize = 0;
                for i in 0..lo.len() {
                    let off = c[i].checked_sub(lo[i])?;
                    if off < 0 || off >= extent[i] {
                        return None;
                    }
                    idx = idx * extent[i] as usize + off as usize;
                }
                Some(idx)
            }
            ElementIndex::Map(m) => m.get(g).copied(),
        }
    }
}

/// Coordinatewise `[lo, hi)` bounds of a nonempty set.
pub fn bounding_box(set: &FiniteSubset) -> Option<(Vec<i64>, Vec<i64>)> {
    let first = set.iter().next()?;
    let mut lo = first.coords().to_vec();
    let mut hi: Vec<i64> = lo.clone();
    for g in set {
        for (i, &x) in g.coords().iter().enumerate() {
            lo[i] = lo[i].min(x);
            hi[i] = hi[i].max(x);
        }
    }
    let hi = hi.into_iter().map(|x| x.checked_add(1)).collect::<Option<Vec<_>>>()?;
    Some((lo, hi))
}

fn is_full_box(set: &FiniteSubset, lo: &[i64], hi: &[i64]) -> bool {
    let mut vol: u128 = 1;
    for (a, b) in lo.iter().zip(hi) {
        vol = vol.saturating_mul((b - a) as u128);
    }
    vol == set.len() as u128
}

/// `Some((lo, hi))` when the set is exactly the box `∏ [lo_i, hi_i)`.
pub fn as_cuboid(set: &FiniteSubset) -> Option<(Vec<i64>, Vec<i64>)> {
    let (lo, hi) = bounding_box(set)?;
    is_full_box(set, &lo, &hi).then_some((lo, hi))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::group::GroupSpec;

    #[test]
    fn cuboid_and_map_agree() {
        let g = GroupSpec::Zd(2);
        let boxed = FiniteSubset::cuboid(g, &[-2, 3], &[4, 7]).unwrap();
        let idx = ElementIndex::new(&boxed);
        assert!(matches!(idx, ElementIndex::Cuboid { .. }));
        for (i, x) in boxed.iter().enumerate() {
            assert_eq!(idx.get(x), Some(i));
        }
        assert_eq!(idx.get(&GroupElement::new(&[4, 3])), None);
        let sparse = FiniteSubset::from_coords(g, &[&[0, 0], &[5, 5], &[2, 1]]).unwrap();
        let idx = ElementIndex::new(&sparse);
        assert!(matches!(idx, ElementIndex::Map(_)));
        assert_eq!(idx.get(&GroupElement::new(&[2, 1])), Some(1));
        assert_eq!(as_cuboid(&sparse), None);
        assert_eq!(as_cuboid(&boxed), Some((vec![-2, 3], vec![4, 7])));
    }
}
