//! Mixed-radix index arithmetic.
//!
//! A tuple `(s_0, …, s_{k-1})` with radices `(r_0, …, r_{k-1})` maps to the
//! flat index `Σ_t s_t · Π_{t'>t} r_{t'}`: the first (oldest) symbol is the
//! most significant digit. The empty tuple maps to index 0 in a table of
//! length 1. Every table in this crate — kernel rows, trajectory
//! distributions, marginals — uses this convention.

/// Flat index of `tuple` under `radices`.
pub fn encode(tuple: &[usize], radices: &[usize]) -> usize {
    debug_assert_eq!(tuple.len(), radices.len());
    tuple.iter().zip(radices).fold(0, |acc, (&s, &r)| {
        debug_assert!(s < r);
        acc * r + s
    })
}

/// Inverse of [`encode`].
pub fn decode(index: usize, radices: &[usize]) -> Vec<usize> {
    let mut tuple = vec![0usize; radices.len()];
    let mut rest = index;
    for (slot, &r) in tuple.iter_mut().zip(radices.iter()).rev() {
        *slot = rest % r;
        rest /= r;
    }
    debug_assert_eq!(rest, 0, "index out of range for radices");
    tuple
}

/// Index of the sub-tuple found at `positions` of `tuple`, under the
/// sub-tuple's own radices. `positions` must be listed oldest first.
pub fn encode_gather(tuple: &[usize], positions: &[usize], sub_radices: &[usize]) -> usize {
    debug_assert_eq!(positions.len(), sub_radices.len());
    positions
        .iter()
        .zip(sub_radices)
        .fold(0, |acc, (&p, &r)| acc * r + tuple[p])
}

/// Number of tuples addressable under `radices`, or `None` on overflow.
pub fn table_len_checked(radices: &[usize]) -> Option<usize> {
    radices
        .iter()
        .try_fold(1usize, |acc, &r| acc.checked_mul(r))
}

/// Number of tuples addressable under `radices`. Panics on overflow.
pub fn table_len(radices: &[usize]) -> usize {
    table_len_checked(radices).expect("mixed-radix table size overflows usize")
}

/// Odometer that walks every tuple under `radices` in flat-index order.
///
/// The caller pairs `current()` with the running flat index:
/// `for idx in 0..len { … counter.current() …; counter.advance(); }`.
pub struct TupleCounter {
    tuple: Vec<usize>,
    radices: Vec<usize>,
}

impl TupleCounter {
    pub fn new(radices: &[usize]) -> Self {
        Self {
            tuple: vec![0; radices.len()],
            radices: radices.to_vec(),
        }
    }

    pub fn current(&self) -> &[usize] {
        &self.tuple
    }

    /// Step to the next tuple. Returns `false` once the counter wraps back
    /// to all zeros (i.e. after the last tuple).
    pub fn advance(&mut self) -> bool {
        for (slot, &r) in self.tuple.iter_mut().zip(self.radices.iter()).rev() {
            *slot += 1;
            if *slot < r {
                return true;
            }
            *slot = 0;
        }
        false
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn empty_tuple_is_index_zero() {
        assert_eq!(encode(&[], &[]), 0);
        assert_eq!(table_len(&[]), 1);
        assert_eq!(decode(0, &[]), Vec::<usize>::new());
    }

    #[test]
    fn oldest_symbol_most_significant() {
        // (1, 0, 2) under radices (2, 3, 4): 1*12 + 0*4 + 2 = 14
        assert_eq!(encode(&[1, 0, 2], &[2, 3, 4]), 14);
        assert_eq!(decode(14, &[2, 3, 4]), vec![1, 0, 2]);
    }

    #[test]
    fn counter_matches_decode() {
        let radices = [2usize, 3, 2];
        let mut counter = TupleCounter::new(&radices);
        for idx in 0..table_len(&radices) {
            assert_eq!(counter.current(), decode(idx, &radices).as_slice());
            counter.advance();
        }
    }

    #[test]
    fn gather_agrees_with_manual_encode() {
        let tuple = [1usize, 2, 0, 3];
        let radices = [2usize, 3, 2, 4];
        let positions = [0usize, 3];
        let sub: Vec<usize> = positions.iter().map(|&p| radices[p]).collect();
        assert_eq!(
            encode_gather(&tuple, &positions, &sub),
            encode(&[tuple[0], tuple[3]], &sub)
        );
    }

    proptest! {
        #[test]
        fn encode_decode_roundtrip(radices in proptest::collection::vec(1usize..5, 0..6)) {
            let len = table_len(&radices);
            for idx in 0..len {
                let tuple = decode(idx, &radices);
                prop_assert_eq!(encode(&tuple, &radices), idx);
            }
        }
    }
}
