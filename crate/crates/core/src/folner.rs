//! Følner boxes and `(E, δ)`-invariance defects.

use num_traits::Signed;
use rustc_hash::FxHashSet;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::group::{FiniteSubset, GroupSpec};
use crate::rational::{ratio, Rational};

/// Upper bound on the number of elements a Følner set may be materialized with.
pub const MAX_FOLNER_ELEMENTS: u128 = 1 << 26;

/// The standard increasing Følner sequence of a supported group.
///
/// `Z^d`: `F_n = [0, n)^d`. Heisenberg: `F_n = [0,n) × [0,n) × [0,n²)`; the
/// central coordinate is scaled quadratically so that left multiplication by
/// a generator moves only an `O(1/n)` fraction of the box.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FolnerFamily {
    group: GroupSpec,
}

impl FolnerFamily {
    pub fn new(group: GroupSpec) -> Self {
        FolnerFamily { group }
    }

    pub fn group(&self) -> GroupSpec {
        self.group
    }

    /// `|F_n|` without materializing the set.
    pub fn size(&self, n: u64) -> Option<u128> {
        let n = n as u128;
        match self.group {
            GroupSpec::Zd(d) => n.checked_pow(d),
            GroupSpec::Heisenberg3 => n.checked_pow(4),
        }
    }

    pub fn set(&self, n: u64) -> Result<FiniteSubset> {
        if n == 0 {
            return Err(Error::domain("Følner index must be >= 1"));
        }
        let side = i64::try_from(n).map_err(|_| Error::Overflow("Følner index"))?;
        let size = self.size(n).ok_or(Error::Overflow("Følner set size"))?;
        if size > MAX_FOLNER_ELEMENTS {
            return Err(Error::Capacity {
                cap: "folner set size",
                requested: size,
                limit: MAX_FOLNER_ELEMENTS,
            });
        }
        match self.group {
            GroupSpec::Zd(_) => FiniteSubset::cube(self.group, side),
            GroupSpec::Heisenberg3 => {
                let top = side.checked_mul(side).ok_or(Error::Overflow("Følner set bounds"))?;
                FiniteSubset::cuboid(self.group, &[0, 0, 0], &[side, side, top])
            }
        }
    }
}

/// `|F Δ EF| / |F|`, exact.
pub fn invariance_defect(f: &FiniteSubset, e: &FiniteSubset) -> Result<Rational> {
    let (sd, _) = defect_counts(f, e)?;
    Ok(ratio(sd, f.len()))
}

/// Returns `(|F Δ EF|, |EF|)`.
pub fn defect_counts(f: &FiniteSubset, e: &FiniteSubset) -> Result<(usize, usize)> {
    if f.is_empty() {
        return Err(Error::domain("invariance defect of an empty set"));
    }
    if f.group() != e.group() {
        return Err(Error::domain("F and E belong to different groups"));
    }
    let group = f.group();
    let mut hit = vec![false; f.len()];
    let mut outside: FxHashSet<_> = FxHashSet::default();
    for g in e {
        for x in f {
            let y = group.mul(g, x)?;
            match f.index_of(&y) {
                Some(i) => hit[i] = true,
                None => {
                    outside.insert(y);
                }
            }
        }
    }
    let inside = hit.iter().filter(|&&h| h).count();
    let sd = outside.len() + (f.len() - inside);
    Ok((sd, inside + outside.len()))
}

/// The `(E, δ)`-invariance predicate with non-strict threshold.
pub fn is_invariant(f: &FiniteSubset, e: &FiniteSubset, delta: &Rational) -> Result<bool> {
    Ok(invariance_defect(f, e)? <= *delta)
}

/// Least `n <= n_max` with `F_n` `(E, δ)`-invariant, or `None` if the search
/// range is exhausted.
pub fn find_invariant_index(
    family: &FolnerFamily,
    e: &FiniteSubset,
    delta: &Rational,
    n_max: u64,
) -> Result<Option<u64>> {
    if !delta.is_positive() {
        return Err(Error::domain(format!("delta = {delta} must be positive")));
    }
    for n in 1..=n_max {
        if is_invariant(&family.set(n)?, e, delta)? {
            return Ok(Some(n));
        }
    }
    Ok(None)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ScanRow {
    pub n: u64,
    pub size: usize,
    pub defect_num: i64,
    pub defect_den: i64,
}

pub fn scan(family: &FolnerFamily, e: &FiniteSubset, ns: impl IntoIterator<Item = u64>) -> Result<Vec<ScanRow>> {
    ns.into_iter()
        .map(|n| {
            let f = family.set(n)?;
            let d = invariance_defect(&f, e)?;
            Ok(ScanRow {
                n,
                size: f.len(),
                defect_num: *d.numer(),
                defect_den: *d.denom(),
            })
        })
        .collect()
}

pub fn scan_to_csv(rows: &[ScanRow]) -> String {
    let mut out = String::from("n,size,defect_num,defect_den,defect\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{:.12}\n",
            r.n,
            r.size,
            r.defect_num,
            r.defect_den,
            r.defect_num as f64 / r.defect_den as f64
        ));
    }
    out
}

/// `{e} ∪ {±generators}`.
pub fn generator_cross(group: GroupSpec) -> FiniteSubset {
    let mut v = group.generators();
    v.push(group.identity());
    FiniteSubset::new(group, v).expect("generators have the group's rank")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::group::GroupElement;
    use proptest::prelude::*;
    use std::collections::BTreeSet;

    fn z(d: u32) -> GroupSpec {
        GroupSpec::Zd(d)
    }

    /// Brute-force defect for Z^d using plain vector addition.
    fn brute_defect_zd(f: &[Vec<i64>], e: &[Vec<i64>]) -> (usize, usize) {
        let fs: BTreeSet<Vec<i64>> = f.iter().cloned().collect();
        let mut ef = BTreeSet::new();
        for a in e {
            for b in f {
                ef.insert(a.iter().zip(b).map(|(x, y)| x + y).collect::<Vec<_>>());
            }
        }
        (fs.symmetric_difference(&ef).count(), fs.len())
    }

    fn box_coords(n: i64) -> Vec<Vec<i64>> {
        (0..n).flat_map(|x| (0..n).map(move |y| vec![x, y])).collect()
    }

    #[test]
    fn folner_sets_small() {
        let f = FolnerFamily::new(z(1)).set(3).unwrap();
        assert_eq!(f, FiniteSubset::from_coords(z(1), &[&[0], &[1], &[2]]).unwrap());
        let f = FolnerFamily::new(z(2)).set(2).unwrap();
        assert_eq!(
            f,
            FiniteSubset::from_coords(z(2), &[&[0, 0], &[1, 0], &[0, 1], &[1, 1]]).unwrap()
        );
        let h = FolnerFamily::new(GroupSpec::Heisenberg3).set(2).unwrap();
        assert_eq!(h.len(), 16);
        assert!(h.iter().all(|g| {
            let c = g.coords();
            (0..2).contains(&c[0]) && (0..2).contains(&c[1]) && (0..4).contains(&c[2])
        }));
        assert!(FolnerFamily::new(z(1)).set(0).is_err());
    }

    #[test]
    fn folner_family_invariants() {
        for g in [z(1), z(2), z(3), GroupSpec::Heisenberg3] {
            let fam = FolnerFamily::new(g);
            for n in 1..6 {
                let a = fam.set(n).unwrap();
                let b = fam.set(n + 1).unwrap();
                assert!(a.contains_identity());
                assert!(a.is_subset(&b));
                assert_eq!(a.len() as u128, fam.size(n).unwrap());
            }
        }
    }

    #[test]
    fn oversize_folner_set_is_capacity_error() {
        let fam = FolnerFamily::new(z(3));
        assert!(matches!(fam.set(1000), Err(Error::Capacity { .. })));
    }

    #[test]
    fn heisenberg_defect_decreases() {
        let fam = FolnerFamily::new(GroupSpec::Heisenberg3);
        let e = generator_cross(GroupSpec::Heisenberg3);
        let d: Vec<Rational> = [2, 4, 8]
            .iter()
            .map(|&n| invariance_defect(&fam.set(n).unwrap(), &e).unwrap())
            .collect();
        assert!(d[0] > d[1] && d[1] > d[2], "{d:?}");
    }

    #[test]
    fn defect_examples() {
        let f = FiniteSubset::cuboid(z(1), &[0], &[10]).unwrap();
        let id = FiniteSubset::singleton(z(1), z(1).identity()).unwrap();
        assert_eq!(invariance_defect(&f, &id).unwrap(), Rational::from_integer(0));
        let e = FiniteSubset::from_coords(z(1), &[&[0], &[1]]).unwrap();
        assert_eq!(invariance_defect(&f, &e).unwrap(), Rational::new(1, 10));

        let f = FiniteSubset::cube(z(2), 4).unwrap();
        let e = FiniteSubset::from_coords(z(2), &[&[0, 0], &[1, 0]]).unwrap();
        assert_eq!(invariance_defect(&f, &e).unwrap(), Rational::new(1, 4));
        assert!(invariance_defect(&FiniteSubset::empty(z(2)), &e).is_err());
    }

    #[test]
    fn cross_defect_matches_brute_force() {
        let cross = vec![vec![0, 0], vec![1, 0], vec![-1, 0], vec![0, 1], vec![0, -1]];
        for n in [7, 8] {
            let (sd, size) = brute_defect_zd(&box_coords(n), &cross);
            assert_eq!(Rational::new(sd as i64, size as i64), Rational::new(4, n));
        }
        let fam = FolnerFamily::new(z(2));
        let e = generator_cross(z(2));
        for n in 1..=30 {
            assert_eq!(
                invariance_defect(&fam.set(n).unwrap(), &e).unwrap(),
                Rational::new(4, n as i64)
            );
        }
    }

    #[test]
    fn find_index_examples() {
        let fam = FolnerFamily::new(z(2));
        let id = FiniteSubset::singleton(z(2), z(2).identity()).unwrap();
        assert_eq!(
            find_invariant_index(&fam, &id, &Rational::new(1, 10), 5).unwrap(),
            Some(1)
        );
        let e = generator_cross(z(2));
        assert_eq!(
            find_invariant_index(&fam, &e, &Rational::new(1, 2), 100).unwrap(),
            Some(8)
        );
        assert_eq!(
            find_invariant_index(&fam, &e, &Rational::new(1, 10), 100).unwrap(),
            Some(40)
        );
        assert_eq!(find_invariant_index(&fam, &e, &Rational::new(1, 10), 39).unwrap(), None);
        assert!(find_invariant_index(&fam, &e, &Rational::from_integer(0), 5).is_err());
    }

    #[test]
    fn monotone_exhaustion() {
        let fam = FolnerFamily::new(z(2));
        for k in 0..4i64 {
            let f = fam.set((2 * k + 2) as u64).unwrap();
            // the standard boxes start at the origin, so only g >= 0 is eventually absorbed
            for x in 0..=k {
                for y in 0..=k {
                    assert!(f.contains(&GroupElement::new(&[x, y])));
                }
            }
        }
    }

    #[test]
    fn csv_rows() {
        let fam = FolnerFamily::new(z(2));
        let rows = scan(&fam, &generator_cross(z(2)), [1, 2, 4]).unwrap();
        let csv = scan_to_csv(&rows);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "n,size,defect_num,defect_den,defect");
        assert_eq!(lines[3], "4,16,1,1,1.000000000000");
    }

    fn arb_case() -> impl Strategy<Value = (Vec<Vec<i64>>, Vec<Vec<i64>>, i64, i64)> {
        let pt = proptest::collection::vec(-4i64..5, 2);
        (
            proptest::collection::vec(pt.clone(), 1..30),
            proptest::collection::vec(pt, 0..6),
            1i64..40,
            1i64..20,
        )
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(500))]

        #[test]
        fn simpler_condition_equivalence((f, mut e, dn, dd) in arb_case()) {
            e.push(vec![0, 0]);
            let fs = FiniteSubset::new(z(2), f.iter().map(|c| GroupElement::new(c))).unwrap();
            let es = FiniteSubset::new(z(2), e.iter().map(|c| GroupElement::new(c))).unwrap();
            let delta = Rational::new(dn, dd);
            let (sd, ef_len) = defect_counts(&fs, &es).unwrap();
            let (brute_sd, _) = brute_defect_zd(
                &fs.iter().map(|g| g.coords().to_vec()).collect::<Vec<_>>(),
                &e,
            );
            prop_assert_eq!(sd, brute_sd);
            let lhs = is_invariant(&fs, &es, &delta).unwrap();
            let rhs = Rational::from_integer(ef_len as i64)
                <= (Rational::from_integer(1) + delta) * Rational::from_integer(fs.len() as i64);
            prop_assert_eq!(lhs, rhs);
        }
    }
}
