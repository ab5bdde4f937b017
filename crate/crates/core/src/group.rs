//! Supported groups, their elements, and finite-subset algebra.
//!
//! Two families are supported: the free abelian groups `Z^d` and the discrete
//! Heisenberg group `H3(Z)`, written in coordinates `(a, b, c)` with
//!
//! ```text
//! (a, b, c) · (a', b', c') = (a + a', b + b', c + c' + a·b')
//! ```
//!
//! which is multiplication of the unipotent matrices `[[1, a, c], [0, 1, b], [0, 0, 1]]`.
//! All arithmetic is checked; overflow is reported, never wrapped.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use rustc_hash::FxHashSet;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use smallvec::SmallVec;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum GroupSpec {
    Zd(u32),
    Heisenberg3,
}

impl GroupSpec {
    pub fn zd(d: u32) -> Result<Self> {
        if d == 0 {
            return Err(Error::domain("Z^d requires d >= 1"));
        }
        Ok(GroupSpec::Zd(d))
    }

    /// Number of coordinates of an element.
    pub fn rank(&self) -> usize {
        match *self {
            GroupSpec::Zd(d) => d as usize,
            GroupSpec::Heisenberg3 => 3,
        }
    }

    pub fn is_abelian(&self) -> bool {
        matches!(self, GroupSpec::Zd(_))
    }

    pub fn identity(&self) -> GroupElement {
        GroupElement(SmallVec::from_elem(0, self.rank()))
    }

    pub fn element(&self, coords: &[i64]) -> Result<GroupElement> {
        let g = GroupElement::new(coords);
        self.check(&g)?;
        Ok(g)
    }

    pub fn check(&self, g: &GroupElement) -> Result<()> {
        if g.0.len() != self.rank() {
            return Err(Error::domain(format!(
                "element {g} has {} coordinates, group {self} needs {}",
                g.0.len(),
                self.rank()
            )));
        }
        Ok(())
    }

    pub fn mul(&self, g: &GroupElement, h: &GroupElement) -> Result<GroupElement> {
        self.check(g)?;
        self.check(h)?;
        self.mul_unchecked_dims(g, h)
    }

    /// Multiplication without the dimension check; callers guarantee both
    /// operands belong to this group.
    pub(crate) fn mul_unchecked_dims(&self, g: &GroupElement, h: &GroupElement) -> Result<GroupElement> {
        let ovf = || Error::Overflow("group multiplication");
        match *self {
            GroupSpec::Zd(_) => {
                let mut out = SmallVec::with_capacity(g.0.len());
                for (x, y) in g.0.iter().zip(h.0.iter()) {
                    out.push(x.checked_add(*y).ok_or_else(ovf)?);
                }
                Ok(GroupElement(out))
            }
            GroupSpec::Heisenberg3 => {
                let (a, b, c) = (g.0[0], g.0[1], g.0[2]);
                let (a2, b2, c2) = (h.0[0], h.0[1], h.0[2]);
                let twist = a.checked_mul(b2).ok_or_else(ovf)?;
                let c_out = c.checked_add(c2).and_then(|s| s.checked_add(twist)).ok_or_else(ovf)?;
                Ok(GroupElement(SmallVec::from_slice(&[
                    a.checked_add(a2).ok_or_else(ovf)?,
                    b.checked_add(b2).ok_or_else(ovf)?,
                    c_out,
                ])))
            }
        }
    }

    pub fn inv(&self, g: &GroupElement) -> Result<GroupElement> {
        self.check(g)?;
        let ovf = || Error::Overflow("group inverse");
        match *self {
            GroupSpec::Zd(_) => {
                let mut out = SmallVec::with_capacity(g.0.len());
                for x in g.0.iter() {
                    out.push(x.checked_neg().ok_or_else(ovf)?);
                }
                Ok(GroupElement(out))
            }
            GroupSpec::Heisenberg3 => {
                let (a, b, c) = (g.0[0], g.0[1], g.0[2]);
                // (a,b,c)^-1 = (-a, -b, ab - c)
                let ab = a.checked_mul(b).ok_or_else(ovf)?;
                Ok(GroupElement(SmallVec::from_slice(&[
                    a.checked_neg().ok_or_else(ovf)?,
                    b.checked_neg().ok_or_else(ovf)?,
                    ab.checked_sub(c).ok_or_else(ovf)?,
                ])))
            }
        }
    }

    /// `kind` dispatch over the three basic operations; `h` is ignored for
    /// `Inv` and both operands are ignored for `Identity`.
    pub fn apply(&self, op: GroupOp, g: &GroupElement, h: &GroupElement) -> Result<GroupElement> {
        match op {
            GroupOp::Mul => self.mul(g, h),
            GroupOp::Inv => self.inv(g),
            GroupOp::Identity => Ok(self.identity()),
        }
    }

    /// Standard symmetric generators `{±e_1, …, ±e_d}` (Heisenberg: `±x, ±y`).
    pub fn generators(&self) -> Vec<GroupElement> {
        let n = match *self {
            GroupSpec::Zd(d) => d as usize,
            GroupSpec::Heisenberg3 => 2,
        };
        let mut out = Vec::with_capacity(2 * n);
        for i in 0..n {
            for s in [1i64, -1] {
                let mut v = SmallVec::from_elem(0, self.rank());
                v[i] = s;
                out.push(GroupElement(v));
            }
        }
        out
    }
}

impl fmt::Display for GroupSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GroupSpec::Zd(d) => write!(f, "z{d}"),
            GroupSpec::Heisenberg3 => write!(f, "h3"),
        }
    }
}

impl FromStr for GroupSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let t = s.trim().to_ascii_lowercase();
        match t.as_str() {
            "h3" | "heisenberg" | "heisenberg3" => return Ok(GroupSpec::Heisenberg3),
            _ => {}
        }
        let digits = t
            .strip_prefix("zd:")
            .or_else(|| t.strip_prefix("zd"))
            .or_else(|| t.strip_prefix('z'));
        match digits.and_then(|d| d.parse::<u32>().ok()) {
            Some(d) => GroupSpec::zd(d),
            None => Err(Error::domain(format!("unknown group `{s}`"))),
        }
    }
}

impl Serialize for GroupSpec {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for GroupSpec {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GroupOp {
    Mul,
    Inv,
    Identity,
}

/// A group element in canonical coordinates. Ordering is lexicographic.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct GroupElement(SmallVec<[i64; 4]>);

impl GroupElement {
    pub fn new(coords: &[i64]) -> Self {
        GroupElement(SmallVec::from_slice(coords))
    }

    pub fn coords(&self) -> &[i64] {
        &self.0
    }
}

impl fmt::Display for GroupElement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, x) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{x}")?;
        }
        write!(f, ")")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Left,
    Right,
}

/// A finite set of elements of one group, kept sorted in canonical order.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct FiniteSubset {
    group: GroupSpec,
    elements: Vec<GroupElement>,
}

impl FiniteSubset {
    pub fn new<I>(group: GroupSpec, elements: I) -> Result<Self>
    where
        I: IntoIterator<Item = GroupElement>,
    {
        let mut elements: Vec<GroupElement> = elements.into_iter().collect();
        for g in &elements {
            group.check(g)?;
        }
        elements.sort_unstable();
        elements.dedup();
        Ok(FiniteSubset { group, elements })
    }

    /// Builds from already validated elements.
    pub(crate) fn from_unsorted(group: GroupSpec, mut elements: Vec<GroupElement>) -> Self {
        elements.sort_unstable();
        elements.dedup();
        FiniteSubset { group, elements }
    }

    pub fn empty(group: GroupSpec) -> Self {
        FiniteSubset {
            group,
            elements: Vec::new(),
        }
    }

    pub fn singleton(group: GroupSpec, g: GroupElement) -> Result<Self> {
        Self::new(group, [g])
    }

    pub fn from_coords(group: GroupSpec, coords: &[&[i64]]) -> Result<Self> {
        Self::new(group, coords.iter().map(|c| GroupElement::new(c)))
    }

    /// The coordinate box `∏ [lo_i, hi_i)`.
    pub fn cuboid(group: GroupSpec, lo: &[i64], hi: &[i64]) -> Result<Self> {
        let r = group.rank();
        if lo.len() != r || hi.len() != r {
            return Err(Error::domain(format!("box bounds must have {r} coordinates")));
        }
        let mut elements = vec![GroupElement(SmallVec::new())];
        for i in 0..r {
            let mut next = Vec::with_capacity(elements.len() * (hi[i] - lo[i]).max(0) as usize);
            for prefix in &elements {
                for x in lo[i]..hi[i] {
                    let mut v = prefix.0.clone();
                    v.push(x);
                    next.push(GroupElement(v));
                }
            }
            elements = next;
        }
        // nested loops emit lexicographic order already
        Ok(FiniteSubset { group, elements })
    }

    /// `[0, side)^rank`.
    pub fn cube(group: GroupSpec, side: i64) -> Result<Self> {
        let r = group.rank();
        Self::cuboid(group, &vec![0; r], &vec![side; r])
    }

    pub fn group(&self) -> GroupSpec {
        self.group
    }

    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, GroupElement> {
        self.elements.iter()
    }

    pub fn as_slice(&self) -> &[GroupElement] {
        &self.elements
    }

    pub fn contains(&self, g: &GroupElement) -> bool {
        self.elements.binary_search(g).is_ok()
    }

    /// Position of `g` in canonical order.
    pub fn index_of(&self, g: &GroupElement) -> Option<usize> {
        self.elements.binary_search(g).ok()
    }

    pub fn contains_identity(&self) -> bool {
        self.contains(&self.group.identity())
    }

    pub fn hash_set(&self) -> FxHashSet<GroupElement> {
        self.elements.iter().cloned().collect()
    }

    fn same_group(&self, other: &FiniteSubset) -> Result<()> {
        if self.group != other.group {
            return Err(Error::domain(format!(
                "subsets belong to different groups ({} vs {})",
                self.group, other.group
            )));
        }
        Ok(())
    }

    /// `EF = {g·f : g ∈ E, f ∈ F}`.
    pub fn product(&self, other: &FiniteSubset) -> Result<FiniteSubset> {
        self.same_group(other)?;
        let mut out = Vec::with_capacity(self.len() * other.len());
        for g in &self.elements {
            for f in &other.elements {
                out.push(self.group.mul_unchecked_dims(g, f)?);
            }
        }
        Ok(FiniteSubset::from_unsorted(self.group, out))
    }

    /// `{g⁻¹ : g ∈ E}`.
    pub fn inverse(&self) -> Result<FiniteSubset> {
        let out = self
            .elements
            .iter()
            .map(|g| self.group.inv(g))
            .collect::<Result<Vec<_>>>()?;
        Ok(FiniteSubset::from_unsorted(self.group, out))
    }

    /// `gF` (left) or `Fg` (right).
    pub fn translate(&self, g: &GroupElement, side: Side) -> Result<FiniteSubset> {
        self.group.check(g)?;
        let out = self
            .elements
            .iter()
            .map(|f| match side {
                Side::Left => self.group.mul_unchecked_dims(g, f),
                Side::Right => self.group.mul_unchecked_dims(f, g),
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(FiniteSubset::from_unsorted(self.group, out))
    }

    /// Right translate as a plain vector in the order induced by `self`
    /// (not re-sorted). Used by scans that only need membership tests.
    pub fn right_translate_iter<'a>(&'a self, g: &'a GroupElement) -> impl Iterator<Item = Result<GroupElement>> + 'a {
        self.elements.iter().map(move |f| self.group.mul_unchecked_dims(f, g))
    }

    pub fn union(&self, other: &FiniteSubset) -> Result<FiniteSubset> {
        self.same_group(other)?;
        let mut out = Vec::with_capacity(self.len() + other.len());
        let (mut i, mut j) = (0, 0);
        let (a, b) = (&self.elements, &other.elements);
        while i < a.len() && j < b.len() {
            match a[i].cmp(&b[j]) {
                Ordering::Less => {
                    out.push(a[i].clone());
                    i += 1;
                }
                Ordering::Greater => {
                    out.push(b[j].clone());
                    j += 1;
                }
                Ordering::Equal => {
                    out.push(a[i].clone());
                    i += 1;
                    j += 1;
                }
            }
        }
        out.extend_from_slice(&a[i..]);
        out.extend_from_slice(&b[j..]);
        Ok(FiniteSubset {
            group: self.group,
            elements: out,
        })
    }

    pub fn intersection(&self, other: &FiniteSubset) -> Result<FiniteSubset> {
        self.same_group(other)?;
        let elements = self.elements.iter().filter(|g| other.contains(g)).cloned().collect();
        Ok(FiniteSubset {
            group: self.group,
            elements,
        })
    }

    pub fn difference(&self, other: &FiniteSubset) -> Result<FiniteSubset> {
        self.same_group(other)?;
        let elements = self.elements.iter().filter(|g| !other.contains(g)).cloned().collect();
        Ok(FiniteSubset {
            group: self.group,
            elements,
        })
    }

    pub fn intersection_len(&self, other: &FiniteSubset) -> usize {
        self.elements.iter().filter(|g| other.contains(g)).count()
    }

    pub fn symmetric_difference_len(&self, other: &FiniteSubset) -> usize {
        let common = self.intersection_len(other);
        self.len() + other.len() - 2 * common
    }

    pub fn is_subset(&self, other: &FiniteSubset) -> bool {
        self.len() <= other.len() && self.elements.iter().all(|g| other.contains(g))
    }

    /// Positions `g` with `F·g ⊆ self`, i.e. the interior of `self` seen as
    /// a window for the shape `F`.
    pub fn interior_positions(&self, shape: &FiniteSubset) -> Result<FiniteSubset> {
        self.same_group(shape)?;
        let Some(f0) = shape.elements.first() else {
            return Err(Error::domain("interior of an empty shape"));
        };
        if self.group.is_abelian() {
            if let (Some((wlo, whi)), Some((slo, shi))) =
                (crate::index::as_cuboid(self), crate::index::as_cuboid(shape))
            {
                let mut lo = Vec::with_capacity(wlo.len());
                let mut hi = Vec::with_capacity(wlo.len());
                for i in 0..wlo.len() {
                    let a = wlo[i].checked_sub(slo[i]).ok_or(Error::Overflow("interior bounds"))?;
                    let b = whi[i].checked_sub(shi[i]).ok_or(Error::Overflow("interior bounds"))?;
                    lo.push(a);
                    hi.push((b + 1).max(a));
                }
                return FiniteSubset::cuboid(self.group, &lo, &hi);
            }
        }
        let f0_inv = self.group.inv(f0)?;
        let mut out = Vec::new();
        'cand: for w in &self.elements {
            let g = self.group.mul_unchecked_dims(&f0_inv, w)?;
            for f in &shape.elements[1..] {
                // an out-of-range product cannot lie in the window
                match self.group.mul_unchecked_dims(f, &g) {
                    Ok(x) if self.contains(&x) => {}
                    _ => continue 'cand,
                }
            }
            out.push(g);
        }
        Ok(FiniteSubset::from_unsorted(self.group, out))
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(&self.elements).expect("integer arrays always serialize")
    }

    pub fn from_json(group: GroupSpec, value: &serde_json::Value) -> Result<Self> {
        let elements: Vec<GroupElement> = serde_json::from_value(value.clone())
            .map_err(|e| Error::Format(format!("expected an array of integer arrays: {e}")))?;
        Self::new(group, elements)
    }
}

impl Serialize for FiniteSubset {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.elements.serialize(s)
    }
}

impl<'a> IntoIterator for &'a FiniteSubset {
    type Item = &'a GroupElement;
    type IntoIter = std::slice::Iter<'a, GroupElement>;

    fn into_iter(self) -> Self::IntoIter {
        self.elements.iter()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn el(c: &[i64]) -> GroupElement {
        GroupElement::new(c)
    }

    /// Product of the upper unitriangular matrices [[1,a,c],[0,1,b],[0,0,1]].
    fn heis_matrix_oracle(g: &[i64], h: &[i64]) -> [i64; 3] {
        let m = |x: &[i64]| [[1, x[0], x[2]], [0, 1, x[1]], [0, 0, 1]];
        let (p, q) = (m(g), m(h));
        let mut r = [[0i64; 3]; 3];
        for i in 0..3 {
            for j in 0..3 {
                for k in 0..3 {
                    r[i][j] += p[i][k] * q[k][j];
                }
            }
        }
        [r[0][1], r[1][2], r[0][2]]
    }

    #[test]
    fn zd_multiplication() {
        let z2 = GroupSpec::Zd(2);
        assert_eq!(z2.mul(&el(&[1, 2]), &el(&[3, 4])).unwrap(), el(&[4, 6]));
    }

    #[test]
    fn heisenberg_generators_commutator() {
        let h = GroupSpec::Heisenberg3;
        let xy = h.mul(&el(&[1, 0, 0]), &el(&[0, 1, 0])).unwrap();
        assert_eq!(xy.coords(), heis_matrix_oracle(&[1, 0, 0], &[0, 1, 0]));
        assert_eq!(xy, el(&[1, 1, 1]));
        let yx = h.mul(&el(&[0, 1, 0]), &el(&[1, 0, 0])).unwrap();
        assert_eq!(yx, el(&[1, 1, 0]));
    }

    #[test]
    fn inverse_of_identity() {
        for g in [GroupSpec::Zd(1), GroupSpec::Zd(3), GroupSpec::Heisenberg3] {
            let e = g.identity();
            assert_eq!(g.inv(&e).unwrap(), e);
            assert_eq!(g.apply(GroupOp::Identity, &e, &e).unwrap(), e);
        }
    }

    #[test]
    fn overflow_is_reported() {
        let z1 = GroupSpec::Zd(1);
        assert_eq!(
            z1.mul(&el(&[i64::MAX]), &el(&[1])),
            Err(Error::Overflow("group multiplication"))
        );
        assert!(z1.inv(&el(&[i64::MIN])).is_err());
        let h = GroupSpec::Heisenberg3;
        assert!(h.mul(&el(&[i64::MAX / 2, 0, 0]), &el(&[0, 3, 0])).is_err());
    }

    #[test]
    fn mismatched_dimensions() {
        let z2 = GroupSpec::Zd(2);
        assert!(matches!(z2.mul(&el(&[1]), &el(&[1, 2])), Err(Error::Domain(_))));
        let a = FiniteSubset::cube(GroupSpec::Zd(2), 2).unwrap();
        let b = FiniteSubset::cube(GroupSpec::Heisenberg3, 2).unwrap();
        assert!(a.product(&b).is_err());
    }

    #[test]
    fn set_product_examples() {
        let z1 = GroupSpec::Zd(1);
        let e = FiniteSubset::from_coords(z1, &[&[0], &[1]]).unwrap();
        let f = FiniteSubset::from_coords(z1, &[&[0], &[1], &[2]]).unwrap();
        let ef = e.product(&f).unwrap();
        assert_eq!(ef, FiniteSubset::cuboid(z1, &[0], &[4]).unwrap());
        assert_eq!(ef.len(), 4);

        let id = FiniteSubset::singleton(z1, z1.identity()).unwrap();
        assert_eq!(id.product(&f).unwrap(), f);

        let h = GroupSpec::Heisenberg3;
        let e = FiniteSubset::from_coords(h, &[&[0, 0, 0], &[1, 0, 0]]).unwrap();
        let f = FiniteSubset::from_coords(h, &[&[0, 1, 0]]).unwrap();
        let expected = FiniteSubset::from_coords(h, &[&[0, 1, 0], &[1, 1, 1]]).unwrap();
        assert_eq!(e.product(&f).unwrap(), expected);
    }

    #[test]
    fn translate_examples() {
        let z2 = GroupSpec::Zd(2);
        let f = FiniteSubset::cube(z2, 2).unwrap();
        assert_eq!(f.translate(&z2.identity(), Side::Left).unwrap(), f);
        let moved = f.translate(&el(&[5, 5]), Side::Right).unwrap();
        let expected = FiniteSubset::from_coords(z2, &[&[5, 5], &[6, 5], &[5, 6], &[6, 6]]).unwrap();
        assert_eq!(moved, expected);

        let h = GroupSpec::Heisenberg3;
        let f = FiniteSubset::from_coords(h, &[&[0, 0, 0], &[1, 0, 0]]).unwrap();
        let r = f.translate(&el(&[0, 1, 0]), Side::Right).unwrap();
        assert_eq!(r, FiniteSubset::from_coords(h, &[&[0, 1, 0], &[1, 1, 1]]).unwrap());
        let l = f.translate(&el(&[0, 1, 0]), Side::Left).unwrap();
        assert_eq!(l, FiniteSubset::from_coords(h, &[&[0, 1, 0], &[1, 1, 0]]).unwrap());
    }

    #[test]
    fn canonical_order_and_dedup() {
        let z2 = GroupSpec::Zd(2);
        let s = FiniteSubset::from_coords(z2, &[&[1, 0], &[0, 5], &[1, 0], &[0, -1]]).unwrap();
        let v: Vec<_> = s.iter().map(|g| g.coords().to_vec()).collect();
        assert_eq!(v, vec![vec![0, -1], vec![0, 5], vec![1, 0]]);
        assert_eq!(s.to_json().to_string(), "[[0,-1],[0,5],[1,0]]");
        let back = FiniteSubset::from_json(z2, &s.to_json()).unwrap();
        assert_eq!(back, s);
    }

    #[test]
    fn parse_group_names() {
        assert_eq!("z2".parse::<GroupSpec>().unwrap(), GroupSpec::Zd(2));
        assert_eq!("zd:3".parse::<GroupSpec>().unwrap(), GroupSpec::Zd(3));
        assert_eq!("heisenberg".parse::<GroupSpec>().unwrap(), GroupSpec::Heisenberg3);
        assert!("z0".parse::<GroupSpec>().is_err());
        assert!("free2".parse::<GroupSpec>().is_err());
    }

    #[test]
    fn interior_of_box() {
        let z2 = GroupSpec::Zd(2);
        let w = FiniteSubset::cube(z2, 10).unwrap();
        let f = FiniteSubset::cube(z2, 2).unwrap();
        let int = w.interior_positions(&f).unwrap();
        assert_eq!(int, FiniteSubset::cube(z2, 9).unwrap());
    }

    fn arb_group() -> impl Strategy<Value = GroupSpec> {
        prop_oneof![
            Just(GroupSpec::Zd(1)),
            Just(GroupSpec::Zd(2)),
            Just(GroupSpec::Zd(3)),
            Just(GroupSpec::Heisenberg3)
        ]
    }

    fn arb_elem(g: GroupSpec) -> impl Strategy<Value = GroupElement> {
        proptest::collection::vec(-1000i64..1000, g.rank()).prop_map(|v| GroupElement::new(&v))
    }

    fn arb_triple() -> impl Strategy<Value = (GroupSpec, GroupElement, GroupElement, GroupElement)> {
        arb_group().prop_flat_map(|g| (Just(g), arb_elem(g), arb_elem(g), arb_elem(g)))
    }

    fn arb_sets() -> impl Strategy<Value = (GroupSpec, Vec<GroupElement>, Vec<GroupElement>, GroupElement)> {
        arb_group().prop_flat_map(|g| {
            let e = proptest::collection::vec(arb_elem(g), 1..8);
            let f = proptest::collection::vec(arb_elem(g), 1..8);
            (Just(g), e, f, arb_elem(g))
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]

        #[test]
        fn associativity_and_inverses((grp, g, h, k) in arb_triple()) {
            let lhs = grp.mul(&grp.mul(&g, &h).unwrap(), &k).unwrap();
            let rhs = grp.mul(&g, &grp.mul(&h, &k).unwrap()).unwrap();
            prop_assert_eq!(lhs, rhs);
            let gi = grp.inv(&g).unwrap();
            prop_assert_eq!(grp.mul(&g, &gi).unwrap(), grp.identity());
            prop_assert_eq!(grp.mul(&gi, &g).unwrap(), grp.identity());
            if grp == GroupSpec::Heisenberg3 {
                let gh = grp.mul(&g, &h).unwrap();
                prop_assert_eq!(gh.coords(), heis_matrix_oracle(g.coords(), h.coords()));
            }
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(300))]

        #[test]
        fn cancellation_and_product_bounds((grp, e, f, g) in arb_sets()) {
            let e = FiniteSubset::new(grp, e).unwrap();
            let f = FiniteSubset::new(grp, f).unwrap();
            prop_assert_eq!(f.translate(&g, Side::Left).unwrap().len(), f.len());
            prop_assert_eq!(f.translate(&g, Side::Right).unwrap().len(), f.len());
            let ef = e.product(&f).unwrap();
            prop_assert!(ef.len() >= e.len().max(f.len()));
            prop_assert!(ef.len() <= e.len() * f.len());
            let a: Vec<_> = ef.iter().collect();
            let b: Vec<_> = ef.iter().collect();
            prop_assert_eq!(a, b);
        }
    }
}
