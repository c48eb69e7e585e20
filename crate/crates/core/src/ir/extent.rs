use std::fmt;

use super::Offset;

/// Per-axis signed access bounds relative to the compute domain.
///
/// Always contains the origin: `lo <= 0 <= hi` componentwise.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct Extent {
    pub lo: [i64; 3],
    pub hi: [i64; 3],
}

impl Extent {
    pub const ZERO: Extent = Extent { lo: [0; 3], hi: [0; 3] };

    pub fn new(lo: [i64; 3], hi: [i64; 3]) -> Self {
        let mut e = Extent::ZERO;
        for axis in 0..3 {
            e.lo[axis] = lo[axis].min(0);
            e.hi[axis] = hi[axis].max(0);
        }
        e
    }

    pub fn is_zero(&self) -> bool {
        *self == Extent::ZERO
    }

    pub fn union(&self, other: &Extent) -> Extent {
        let mut e = *self;
        for axis in 0..3 {
            e.lo[axis] = e.lo[axis].min(other.lo[axis]);
            e.hi[axis] = e.hi[axis].max(other.hi[axis]);
        }
        e
    }

    /// Region touched when every point of `self` reads at `offset`.
    pub fn shift(&self, offset: Offset) -> Extent {
        let mut e = Extent::ZERO;
        for axis in 0..3 {
            e.lo[axis] = (self.lo[axis] + offset.0[axis]).min(0);
            e.hi[axis] = (self.hi[axis] + offset.0[axis]).max(0);
        }
        e
    }

    /// Drops the vertical components.
    pub fn horizontal(&self) -> Extent {
        Extent::new([self.lo[0], self.lo[1], 0], [self.hi[0], self.hi[1], 0])
    }

    pub fn contains(&self, other: &Extent) -> bool {
        (0..3).all(|a| self.lo[a] <= other.lo[a] && self.hi[a] >= other.hi[a])
    }

    /// Number of points along `axis` for a domain of `n` points.
    pub fn span(&self, axis: usize, n: usize) -> usize {
        (n as i64 + self.hi[axis] - self.lo[axis]) as usize
    }
}

impl fmt::Display for Extent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "lo=({},{},{}) hi=({},{},{})",
            self.lo[0], self.lo[1], self.lo[2], self.hi[0], self.hi[1], self.hi[2]
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn extent() -> impl Strategy<Value = Extent> {
        (prop::array::uniform3(-4i64..=0), prop::array::uniform3(0i64..=4))
            .prop_map(|(lo, hi)| Extent::new(lo, hi))
    }

    proptest! {
        #[test]
        fn union_is_associative(a in extent(), b in extent(), c in extent()) {
            prop_assert_eq!(a.union(&b.union(&c)), a.union(&b).union(&c));
        }

        #[test]
        fn shift_of_zero_brackets_offset(o in prop::array::uniform3(-5i64..=5)) {
            let e = Extent::ZERO.shift(Offset(o));
            for ((lo, hi), o) in e.lo.iter().zip(&e.hi).zip(o) {
                prop_assert_eq!(*lo, o.min(0));
                prop_assert_eq!(*hi, o.max(0));
            }
        }

        #[test]
        fn shift_and_union_are_monotone(a in extent(), b in extent(), o in prop::array::uniform3(-3i64..=3)) {
            let big = a.union(&b);
            prop_assert!(big.contains(&a));
            prop_assert!(big.shift(Offset(o)).contains(&a.shift(Offset(o))));
        }
    }

    #[test]
    fn span_counts_halo_points() {
        let e = Extent::new([-2, -1, 0], [2, 0, 0]);
        assert_eq!(e.span(0, 10), 14);
        assert_eq!(e.span(1, 10), 11);
        assert_eq!(e.span(2, 10), 10);
    }
}
