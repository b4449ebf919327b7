use nalgebra::DMatrix;

/// Bijection between the upper triangle of an `n x n` symmetric matrix and
/// `n(n+1)/2` scalars, column by column.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SymmetricIndex {
    n: usize,
}

impl SymmetricIndex {
    pub fn new(n: usize) -> Self {
        assert!(n >= 1, "symmetric index needs n >= 1");
        Self { n }
    }

    pub fn order(&self) -> usize {
        self.n
    }

    pub fn len(&self) -> usize {
        self.n * (self.n + 1) / 2
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Scalar slot holding entry `(i, j)`; symmetric in its arguments.
    pub fn index(&self, i: usize, j: usize) -> usize {
        debug_assert!(i < self.n && j < self.n);
        let (r, c) = if i <= j { (i, j) } else { (j, i) };
        c * (c + 1) / 2 + r
    }

    /// Inverse of [`index`](Self::index), returning the upper-triangle pair.
    pub fn pair(&self, k: usize) -> (usize, usize) {
        debug_assert!(k < self.len());
        let mut c = 0;
        while (c + 1) * (c + 2) / 2 <= k {
            c += 1;
        }
        (k - c * (c + 1) / 2, c)
    }

    pub fn vectorize(&self, m: &DMatrix<f64>) -> Vec<f64> {
        assert_eq!(m.shape(), (self.n, self.n));
        (0..self.len())
            .map(|k| {
                let (r, c) = self.pair(k);
                m[(r, c)]
            })
            .collect()
    }

    pub fn devectorize(&self, v: &[f64]) -> DMatrix<f64> {
        assert_eq!(v.len(), self.len());
        DMatrix::from_fn(self.n, self.n, |i, j| v[self.index(i, j)])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn sizes() {
        assert_eq!(SymmetricIndex::new(1).len(), 1);
        assert_eq!(SymmetricIndex::new(7).len(), 28);
    }

    #[test]
    fn pair_inverts_index() {
        let idx = SymmetricIndex::new(9);
        for k in 0..idx.len() {
            let (r, c) = idx.pair(k);
            assert!(r <= c);
            assert_eq!(idx.index(r, c), k);
            assert_eq!(idx.index(c, r), k);
        }
    }

    proptest! {
        #[test]
        fn round_trip_is_exact(n in 1usize..12, seed in prop::collection::vec(-1e3f64..1e3, 144)) {
            let idx = SymmetricIndex::new(n);
            let a = DMatrix::from_fn(n, n, |i, j| seed[i * 12 + j]);
            let m = &a + a.transpose();
            let back = idx.devectorize(&idx.vectorize(&m));
            prop_assert_eq!(back, m);
        }
    }
}
