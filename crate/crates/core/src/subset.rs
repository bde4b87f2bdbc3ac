use std::fmt;

/// A subset of a finite index range `0..universe`.
///
/// Indices at or beyond the universe (in particular the cemetery state, which
/// sits right after the last listed state) are never members.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct Subset {
    bits: Vec<bool>,
}

impl Subset {
    pub fn empty(universe: usize) -> Self {
        Subset {
            bits: vec![false; universe],
        }
    }

    pub fn full(universe: usize) -> Self {
        Subset {
            bits: vec![true; universe],
        }
    }

    /// Builds a subset; indices outside the universe are rejected with `None`.
    pub fn from_indices<I: IntoIterator<Item = usize>>(universe: usize, indices: I) -> Option<Self> {
        let mut set = Subset::empty(universe);
        for i in indices {
            if i >= universe {
                return None;
            }
            set.bits[i] = true;
        }
        Some(set)
    }

    pub fn from_mask(bits: Vec<bool>) -> Self {
        Subset { bits }
    }

    pub fn universe(&self) -> usize {
        self.bits.len()
    }

    #[inline]
    pub fn contains(&self, i: usize) -> bool {
        self.bits.get(i).copied().unwrap_or(false)
    }

    pub fn insert(&mut self, i: usize) {
        self.bits[i] = true;
    }

    pub fn remove(&mut self, i: usize) {
        self.bits[i] = false;
    }

    pub fn len(&self) -> usize {
        self.bits.iter().filter(|b| **b).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.bits.iter().any(|b| *b)
    }

    pub fn iter(&self) -> impl Iterator<Item = usize> + '_ {
        self.bits
            .iter()
            .enumerate()
            .filter_map(|(i, b)| b.then_some(i))
    }

    pub fn to_vec(&self) -> Vec<usize> {
        self.iter().collect()
    }

    pub fn is_subset(&self, other: &Subset) -> bool {
        self.iter().all(|i| other.contains(i))
    }

    pub fn mask(&self) -> &[bool] {
        &self.bits
    }
}

impl fmt::Debug for Subset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_set().entries(self.iter()).finish()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn out_of_universe_is_never_member() {
        let s = Subset::from_indices(4, [1, 3]).unwrap();
        assert!(s.contains(3));
        assert!(!s.contains(4));
        assert!(!s.contains(100));
        assert_eq!(s.to_vec(), vec![1, 3]);
        assert!(Subset::from_indices(4, [4]).is_none());
    }

    #[test]
    fn inclusion() {
        let a = Subset::from_indices(5, [1, 2]).unwrap();
        let b = Subset::from_indices(5, [1, 2, 4]).unwrap();
        assert!(a.is_subset(&b));
        assert!(!b.is_subset(&a));
        assert!(Subset::empty(5).is_subset(&a));
    }
}
