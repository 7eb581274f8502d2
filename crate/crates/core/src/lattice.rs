//! Finite boxes `{x in Z^d : |x|_inf <= L}` and their vertex numbering.
//!
//! Vertices are numbered lexicographically with the first coordinate most
//! significant: `index(x) = sum_i (x_i + L) * (2L+1)^{d-1-i}`. In `d = 1`
//! this is simply `x + L`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::max_encodable;

pub type Vertex = u32;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LatticeBox {
    d: usize,
    radius: u32,
}

impl LatticeBox {
    pub fn new(d: usize, radius: u32) -> Result<Self> {
        if d == 0 {
            return Err(Error::Param("box dimension must be at least 1".into()));
        }
        if radius == 0 {
            return Err(Error::Param("box radius must be at least 1".into()));
        }
        let side = 2 * radius as u128 + 1;
        if side.pow(d as u32) > u32::MAX as u128 {
            return Err(Error::Resource(format!(
                "box with radius {radius} in d = {d} has more than 2^32 vertices"
            )));
        }
        if 2 * radius as i64 > max_encodable(d) {
            return Err(Error::Resource(format!(
                "box radius {radius} too large for random-key encoding in d = {d}"
            )));
        }
        Ok(Self { d, radius })
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn radius(&self) -> u32 {
        self.radius
    }

    pub fn side(&self) -> u64 {
        2 * self.radius as u64 + 1
    }

    pub fn len(&self) -> usize {
        (self.side() as usize).pow(self.d as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Index stride of coordinate `i`.
    pub fn stride(&self, i: usize) -> u64 {
        self.side().pow((self.d - 1 - i) as u32)
    }

    pub fn contains(&self, x: &[i64]) -> bool {
        let l = self.radius as i64;
        x.len() == self.d && x.iter().all(|&c| -l <= c && c <= l)
    }

    pub fn index(&self, x: &[i64]) -> Option<Vertex> {
        if !self.contains(x) {
            return None;
        }
        let l = self.radius as i64;
        let side = self.side() as i64;
        let mut idx = 0i64;
        for &c in x {
            idx = idx * side + (c + l);
        }
        Some(idx as Vertex)
    }

    pub fn coords_into(&self, v: Vertex, out: &mut [i64]) {
        let side = self.side();
        let l = self.radius as i64;
        let mut rest = v as u64;
        for i in (0..self.d).rev() {
            out[i] = (rest % side) as i64 - l;
            rest /= side;
        }
    }

    pub fn coords(&self, v: Vertex) -> Vec<i64> {
        let mut out = vec![0; self.d];
        self.coords_into(v, &mut out);
        out
    }

    pub fn origin(&self) -> Vertex {
        self.index(&vec![0; self.d]).unwrap()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn small_box_bijection() {
        let b = LatticeBox::new(2, 3).unwrap();
        assert_eq!(b.len(), 49);
        let mut seen = vec![false; b.len()];
        for x in -3..=3 {
            for y in -3..=3 {
                let i = b.index(&[x, y]).unwrap() as usize;
                assert!(!seen[i]);
                seen[i] = true;
                assert_eq!(b.coords(i as u32), vec![x, y]);
            }
        }
        assert!(b.index(&[4, 0]).is_none());
        assert_eq!(b.origin(), 24);
    }

    #[test]
    fn one_dimensional_index_is_offset() {
        let b = LatticeBox::new(1, 10).unwrap();
        assert_eq!(b.index(&[-10]), Some(0));
        assert_eq!(b.index(&[3]), Some(13));
    }

    #[test]
    fn oversized_boxes_rejected() {
        assert!(LatticeBox::new(3, 1000).is_err());
        assert!(LatticeBox::new(1, 0).is_err());
        assert!(LatticeBox::new(1, 1 << 30).is_ok());
    }

    proptest! {
        #[test]
        fn lexicographic_order(a in proptest::collection::vec(-5i64..=5, 3), b in proptest::collection::vec(-5i64..=5, 3)) {
            let bx = LatticeBox::new(3, 5).unwrap();
            prop_assert_eq!(a.cmp(&b), bx.index(&a).unwrap().cmp(&bx.index(&b).unwrap()));
        }
    }
}
