use std::collections::BTreeMap;

use nalgebra::DMatrix;

use crate::error::SdpError;
use crate::symmetric::SymmetricIndex;

/// Index of a scalar decision variable.
pub type VarId = usize;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sense {
    /// `F(x) < 0`
    NegativeDefinite,
    /// `F(x) > 0`
    PositiveDefinite,
}

/// One affine matrix inequality `F0 + sum_i x_i F_i (< or >) 0`.
///
/// Coefficient matrices are symmetric and stored as upper-triangle triplets
/// `(row, col, value)` with `row <= col`.
#[derive(Debug, Clone)]
pub struct LmiConstraint {
    pub name: String,
    pub sense: Sense,
    pub constant: DMatrix<f64>,
    pub terms: Vec<(VarId, Vec<(usize, usize, f64)>)>,
}

impl LmiConstraint {
    pub fn dim(&self) -> usize {
        self.constant.nrows()
    }

    /// Dense coefficient matrix of `var`, zero if the variable is absent.
    pub fn coefficient(&self, var: VarId) -> DMatrix<f64> {
        let n = self.dim();
        let mut m = DMatrix::zeros(n, n);
        if let Some((_, entries)) = self.terms.iter().find(|(v, _)| *v == var) {
            for &(r, c, v) in entries {
                m[(r, c)] += v;
                if r != c {
                    m[(c, r)] += v;
                }
            }
        }
        m
    }

    pub fn evaluate(&self, x: &[f64]) -> DMatrix<f64> {
        let mut m = self.constant.clone();
        for (var, entries) in &self.terms {
            let xv = x[*var];
            if xv == 0.0 {
                continue;
            }
            for &(r, c, v) in entries {
                m[(r, c)] += xv * v;
                if r != c {
                    m[(c, r)] += xv * v;
                }
            }
        }
        m
    }
}

/// Block-structured constructor for one LMI.
///
/// Entries are addressed as `(block_row, block_col, row, col)` with
/// `block_row <= block_col`. Entries placed in an off-diagonal block are
/// mirrored into the transposed block. Entries in a diagonal block are
/// symmetrised as `(X + X^T)`, so writing `A P` into a diagonal block yields
/// `A P + P A^T`.
#[derive(Debug, Clone)]
pub struct LmiBuilder {
    name: String,
    sense: Sense,
    offsets: Vec<usize>,
    sizes: Vec<usize>,
    dim: usize,
    constant: DMatrix<f64>,
    terms: BTreeMap<VarId, BTreeMap<(usize, usize), f64>>,
}

impl LmiBuilder {
    pub fn new(name: impl Into<String>, sense: Sense, blocks: &[usize]) -> Self {
        let mut offsets = Vec::with_capacity(blocks.len());
        let mut dim = 0;
        for &b in blocks {
            offsets.push(dim);
            dim += b;
        }
        Self {
            name: name.into(),
            sense,
            offsets,
            sizes: blocks.to_vec(),
            dim,
            constant: DMatrix::zeros(dim, dim),
            terms: BTreeMap::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn block_size(&self, b: usize) -> usize {
        self.sizes[b]
    }

    fn place(&self, bi: usize, bj: usize, r: usize, c: usize) -> (usize, usize, bool) {
        assert!(bi <= bj, "only upper blocks may be written ({bi}, {bj})");
        assert!(r < self.sizes[bi] && c < self.sizes[bj], "entry outside block");
        (self.offsets[bi] + r, self.offsets[bj] + c, bi == bj)
    }

    pub fn constant(&mut self, bi: usize, bj: usize, r: usize, c: usize, v: f64) {
        let (gr, gc, diag) = self.place(bi, bj, r, c);
        if diag && gr == gc {
            self.constant[(gr, gr)] += 2.0 * v;
        } else {
            self.constant[(gr, gc)] += v;
            self.constant[(gc, gr)] += v;
        }
    }

    /// Adds a dense constant block. Diagonal blocks receive `M + M^T`.
    pub fn constant_block(&mut self, bi: usize, bj: usize, m: &DMatrix<f64>) {
        for r in 0..m.nrows() {
            for c in 0..m.ncols() {
                if m[(r, c)] != 0.0 {
                    self.constant(bi, bj, r, c, m[(r, c)]);
                }
            }
        }
    }

    /// Adds a symmetric constant to a diagonal block without doubling.
    pub fn constant_sym(&mut self, b: usize, m: &DMatrix<f64>) {
        for r in 0..m.nrows() {
            for c in 0..m.ncols() {
                if m[(r, c)] != 0.0 {
                    self.constant(b, b, r, c, 0.5 * m[(r, c)]);
                }
            }
        }
    }

    pub fn term(&mut self, var: VarId, bi: usize, bj: usize, r: usize, c: usize, v: f64) {
        if v == 0.0 {
            return;
        }
        let (gr, gc, diag) = self.place(bi, bj, r, c);
        let key = (gr.min(gc), gr.max(gc));
        let w = if diag && gr == gc { 2.0 * v } else { v };
        *self.terms.entry(var).or_default().entry(key).or_insert(0.0) += w;
    }

    pub fn build(self) -> LmiConstraint {
        let terms = self
            .terms
            .into_iter()
            .map(|(var, entries)| {
                let list: Vec<_> = entries
                    .into_iter()
                    .filter(|(_, v)| *v != 0.0)
                    .map(|((r, c), v)| (r, c, v))
                    .collect();
                (var, list)
            })
            .filter(|(_, list)| !list.is_empty())
            .collect();
        LmiConstraint {
            name: self.name,
            sense: self.sense,
            constant: self.constant,
            terms,
        }
    }
}

/// Symmetric `n x n` matrix variable occupying `n(n+1)/2` scalar slots.
#[derive(Debug, Clone, Copy)]
pub struct SymmetricVar {
    pub offset: VarId,
    pub index: SymmetricIndex,
}

impl SymmetricVar {
    pub fn n(&self) -> usize {
        self.index.order()
    }

    pub fn at(&self, i: usize, j: usize) -> VarId {
        self.offset + self.index.index(i, j)
    }

    pub fn value(&self, x: &[f64]) -> DMatrix<f64> {
        self.index
            .devectorize(&x[self.offset..self.offset + self.index.len()])
    }
}

/// Unstructured `rows x cols` matrix variable, row-major slots.
#[derive(Debug, Clone, Copy)]
pub struct FullVar {
    pub offset: VarId,
    pub rows: usize,
    pub cols: usize,
}

impl FullVar {
    pub fn at(&self, i: usize, j: usize) -> VarId {
        debug_assert!(i < self.rows && j < self.cols);
        self.offset + i * self.cols + j
    }

    pub fn value(&self, x: &[f64]) -> DMatrix<f64> {
        DMatrix::from_fn(self.rows, self.cols, |i, j| x[self.at(i, j)])
    }
}

/// Minimise `c^T x` subject to a list of LMIs.
#[derive(Debug, Clone, Default)]
pub struct LmiProblem {
    names: Vec<String>,
    objective: Vec<f64>,
    constraints: Vec<LmiConstraint>,
}

impl LmiProblem {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn num_vars(&self) -> usize {
        self.names.len()
    }

    pub fn var_name(&self, v: VarId) -> &str {
        &self.names[v]
    }

    pub fn objective(&self) -> &[f64] {
        &self.objective
    }

    pub fn constraints(&self) -> &[LmiConstraint] {
        &self.constraints
    }

    pub fn add_scalar(&mut self, name: impl Into<String>) -> VarId {
        self.names.push(name.into());
        self.objective.push(0.0);
        self.names.len() - 1
    }

    pub fn add_symmetric(&mut self, name: &str, n: usize) -> SymmetricVar {
        let index = SymmetricIndex::new(n);
        let offset = self.num_vars();
        for k in 0..index.len() {
            let (r, c) = index.pair(k);
            self.add_scalar(format!("{name}[{r},{c}]"));
        }
        SymmetricVar { offset, index }
    }

    pub fn add_full(&mut self, name: &str, rows: usize, cols: usize) -> FullVar {
        let offset = self.num_vars();
        for r in 0..rows {
            for c in 0..cols {
                self.add_scalar(format!("{name}[{r},{c}]"));
            }
        }
        FullVar { offset, rows, cols }
    }

    pub fn set_objective(&mut self, var: VarId, coeff: f64) {
        self.objective[var] = coeff;
    }

    pub fn add_constraint(&mut self, c: LmiConstraint) {
        self.constraints.push(c);
    }

    pub fn validate(&self, max_vars: usize, max_block: usize) -> Result<(), SdpError> {
        if self.num_vars() > max_vars {
            return Err(SdpError::TooManyVariables {
                vars: self.num_vars(),
                cap: max_vars,
            });
        }
        for c in &self.constraints {
            let n = c.dim();
            let bad = |reason: String| SdpError::MalformedConstraint {
                name: c.name.clone(),
                reason,
            };
            if n == 0 {
                return Err(bad("empty matrix".into()));
            }
            if n > max_block {
                return Err(SdpError::BlockTooLarge {
                    name: c.name.clone(),
                    dim: n,
                    cap: max_block,
                });
            }
            if c.constant.ncols() != n {
                return Err(bad("constant term is not square".into()));
            }
            let asym = (&c.constant - c.constant.transpose()).amax();
            if asym > 1e-12 * (1.0 + c.constant.amax()) {
                return Err(bad(format!("constant term asymmetric by {asym:e}")));
            }
            if c.constant.iter().any(|v| !v.is_finite()) {
                return Err(bad("non-finite constant".into()));
            }
            for (var, entries) in &c.terms {
                if *var >= self.num_vars() {
                    return Err(bad(format!("unknown variable {var}")));
                }
                for &(r, col, v) in entries {
                    if r > col || col >= n || !v.is_finite() {
                        return Err(bad(format!("bad coefficient entry ({r}, {col}, {v})")));
                    }
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn diagonal_block_is_symmetrised() {
        let mut p = LmiProblem::new();
        let x = p.add_scalar("x");
        let mut b = LmiBuilder::new("t", Sense::NegativeDefinite, &[2, 1]);
        b.term(x, 0, 0, 0, 1, 3.0);
        b.term(x, 0, 0, 1, 1, 1.0);
        b.term(x, 0, 1, 1, 0, 5.0);
        let c = b.build();
        let f = c.coefficient(x);
        let expected = DMatrix::from_row_slice(3, 3, &[0., 3., 0., 3., 2., 5., 0., 5., 0.]);
        assert_eq!(f, expected);
    }

    #[test]
    fn evaluate_matches_coefficients() {
        let mut p = LmiProblem::new();
        let s = p.add_symmetric("P", 2);
        let mut b = LmiBuilder::new("t", Sense::PositiveDefinite, &[2]);
        for i in 0..2 {
            for j in 0..2 {
                // P itself, written half on each side.
                b.term(s.at(i, j), 0, 0, i, j, 0.5);
            }
        }
        let c = b.build();
        let x = [1.0, 0.25, 2.0];
        let f = c.evaluate(&x);
        assert_eq!(f, s.value(&x));
    }

    #[test]
    fn validate_rejects_oversize() {
        let mut p = LmiProblem::new();
        p.add_symmetric("P", 10);
        assert!(matches!(
            p.validate(20, 100),
            Err(SdpError::TooManyVariables { vars: 55, cap: 20 })
        ));
    }
}
