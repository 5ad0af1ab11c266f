//! Run-length encoding of row-major element bitmaps as `[start, count]` runs
//! of set elements.

use thiserror::Error;

pub type Run = [usize; 2];

#[derive(Debug, Error, PartialEq, Eq)]
pub enum RleError {
    #[error("run [{start}, {count}] exceeds bitmap length {len}")]
    OutOfRange {
        start: usize,
        count: usize,
        len: usize,
    },
    #[error("runs overlap or are unsorted at start {0}")]
    Unordered(usize),
}

pub fn encode(bits: &[bool]) -> Vec<Run> {
    let mut runs = Vec::new();
    let mut i = 0;
    while i < bits.len() {
        if bits[i] {
            let start = i;
            while i < bits.len() && bits[i] {
                i += 1;
            }
            runs.push([start, i - start]);
        } else {
            i += 1;
        }
    }
    runs
}

pub fn decode(runs: &[Run], len: usize) -> Result<Vec<bool>, RleError> {
    let mut bits = vec![false; len];
    let mut next_free = 0;
    for &[start, count] in runs {
        if start < next_free {
            return Err(RleError::Unordered(start));
        }
        let end = start
            .checked_add(count)
            .filter(|&e| e <= len)
            .ok_or(RleError::OutOfRange { start, count, len })?;
        bits[start..end].iter_mut().for_each(|b| *b = true);
        next_free = end;
    }
    Ok(bits)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn known_runs() {
        let bits = [false, true, true, false, true];
        assert_eq!(encode(&bits), vec![[1, 2], [4, 1]]);
        assert_eq!(encode(&[false; 3]), Vec::<Run>::new());
    }

    #[test]
    fn rejects_bad_runs() {
        assert!(matches!(
            decode(&[[3, 4]], 5),
            Err(RleError::OutOfRange { .. })
        ));
        assert_eq!(decode(&[[2, 2], [1, 1]], 5), Err(RleError::Unordered(1)));
    }

    proptest! {
        #[test]
        fn roundtrip(bits in proptest::collection::vec(any::<bool>(), 0..200)) {
            prop_assert_eq!(decode(&encode(&bits), bits.len()).unwrap(), bits);
        }
    }
}
