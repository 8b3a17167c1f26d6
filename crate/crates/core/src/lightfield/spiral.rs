//! Spiral stacking of the angular grid and angular sub-sampling.

use crate::error::{Error, Result};

/// Ordered walk over the views of an angular grid; the position of a view
/// in `order` is its angular step.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SpiralSequence {
    pub angular_size: (usize, usize),
    pub order: Vec<(usize, usize)>,
}

impl SpiralSequence {
    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }

    pub fn first(&self) -> (usize, usize) {
        self.order[0]
    }

    pub fn last(&self) -> (usize, usize) {
        self.order[self.order.len() - 1]
    }
}

/// Ring-by-ring walk outward from the central view.
///
/// Each ring starts one step right of the previous ring's bottom-right
/// corner, climbs the right edge, then runs left, down and right, so every
/// ring (and the whole walk) ends at the bottom-right corner. Consecutive
/// views are 4-adjacent.
///
/// Only odd square grids are accepted: odd non-square grids such as 3x5
/// admit no 4-adjacent walk from the center to the bottom-right corner.
pub fn spiral_order(rows: usize, cols: usize) -> Result<SpiralSequence> {
    if rows == 0 || cols == 0 || rows % 2 == 0 || cols % 2 == 0 {
        return Err(Error::invalid(
            "angular_size",
            format!("{rows}x{cols} has no central view; both counts must be odd"),
        ));
    }
    if rows != cols {
        return Err(Error::invalid(
            "angular_size",
            format!("spiral stacking needs a square grid, got {rows}x{cols}"),
        ));
    }
    let radius = (rows / 2) as isize;
    let mut order = Vec::with_capacity(rows * cols);
    let (mut r, mut c) = (radius, radius);
    order.push((r as usize, c as usize));
    let mut walk = |dr: isize, dc: isize, steps: isize, order: &mut Vec<(usize, usize)>| {
        for _ in 0..steps {
            r += dr;
            c += dc;
            order.push((r as usize, c as usize));
        }
    };
    for k in 1..=radius {
        walk(0, 1, 1, &mut order);
        walk(-1, 0, 2 * k - 1, &mut order);
        walk(0, -1, 2 * k, &mut order);
        walk(1, 0, 2 * k, &mut order);
        walk(0, 1, 2 * k, &mut order);
    }
    Ok(SpiralSequence {
        angular_size: (rows, cols),
        order,
    })
}

/// Positions `round(i (L-1) / (n-1))`, `i = 0..n`, into a sequence of
/// length `L`; `n = 1` selects only the first element.
pub fn angular_sample_positions(len: usize, n: usize) -> Result<Vec<usize>> {
    if n == 0 || n > len {
        return Err(Error::invalid(
            "n",
            format!("angular sample count {n} outside 1..={len}"),
        ));
    }
    if n == 1 {
        return Ok(vec![0]);
    }
    let span = len - 1;
    let denom = n - 1;
    // Integer round-half-up of i * span / denom.
    Ok((0..n)
        .map(|i| (2 * i * span + denom) / (2 * denom))
        .collect())
}

/// Order-preserving subset of `n` views spanning the whole sequence.
pub fn angular_sample(seq: &SpiralSequence, n: usize) -> Result<SpiralSequence> {
    let positions = angular_sample_positions(seq.len(), n)?;
    Ok(SpiralSequence {
        angular_size: seq.angular_size,
        order: positions.into_iter().map(|p| seq.order[p]).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    /// Independent checker for the spiral contract.
    fn check_spiral(seq: &SpiralSequence, n: usize) {
        let center = (n / 2, n / 2);
        assert_eq!(seq.len(), n * n);
        let unique: HashSet<_> = seq.order.iter().copied().collect();
        assert_eq!(unique.len(), n * n);
        assert!(seq.order.iter().all(|&(r, c)| r < n && c < n));
        assert_eq!(seq.first(), center);
        assert_eq!(seq.last(), (n - 1, n - 1));
        for w in seq.order.windows(2) {
            let dr = w[0].0.abs_diff(w[1].0);
            let dc = w[0].1.abs_diff(w[1].1);
            assert_eq!(dr + dc, 1, "{:?} -> {:?}", w[0], w[1]);
        }
    }

    #[test]
    fn single_view() {
        assert_eq!(spiral_order(1, 1).unwrap().order, vec![(0, 0)]);
    }

    #[test]
    fn three_by_three() {
        let s = spiral_order(3, 3).unwrap();
        assert_eq!(
            s.order,
            vec![
                (1, 1),
                (1, 2),
                (0, 2),
                (0, 1),
                (0, 0),
                (1, 0),
                (2, 0),
                (2, 1),
                (2, 2)
            ]
        );
        check_spiral(&s, 3);
    }

    #[test]
    fn larger_grids_pass_checker() {
        for n in [5, 7, 9, 13] {
            check_spiral(&spiral_order(n, n).unwrap(), n);
        }
        let s = spiral_order(5, 5).unwrap();
        assert_eq!(s.first(), (2, 2));
        assert_eq!(s.last(), (4, 4));
    }

    #[test]
    fn even_or_rectangular_grids_rejected() {
        assert!(spiral_order(4, 4).is_err());
        assert!(spiral_order(5, 4).is_err());
        assert!(spiral_order(3, 5).is_err());
        assert!(spiral_order(0, 0).is_err());
    }

    #[test]
    fn ten_of_twenty_five() {
        assert_eq!(
            angular_sample_positions(25, 10).unwrap(),
            vec![0, 3, 5, 8, 11, 13, 16, 19, 21, 24]
        );
    }

    #[test]
    fn sample_positions_match_float_rounding() {
        for len in 1..40usize {
            for n in 2..=len {
                let got = angular_sample_positions(len, n).unwrap();
                let want: Vec<usize> = (0..n)
                    .map(|i| (i as f64 * (len - 1) as f64 / (n - 1) as f64).round() as usize)
                    .collect();
                assert_eq!(got, want, "len {len} n {n}");
                assert!(got.windows(2).all(|w| w[0] < w[1]));
            }
        }
    }

    #[test]
    fn sample_edges() {
        let s = spiral_order(5, 5).unwrap();
        assert_eq!(angular_sample(&s, 25).unwrap(), s);
        assert_eq!(angular_sample(&s, 1).unwrap().order, vec![(2, 2)]);
        assert!(angular_sample(&s, 0).is_err());
        assert!(angular_sample(&s, 26).is_err());
        let ten = angular_sample(&s, 10).unwrap();
        assert_eq!(ten.first(), s.first());
        assert_eq!(ten.last(), s.last());
    }

    #[test]
    fn deterministic() {
        assert_eq!(spiral_order(7, 7).unwrap(), spiral_order(7, 7).unwrap());
    }
}
