//! Sparse assembly and direct solves.
//!
//! Factorization is delegated to `rsparse` (CSparse LU with AMD ordering);
//! this module adds triplet assembly, a singularity screen on the pivots and
//! residual refinement.

use rsparse::data::{Nmrc, Sprs, Symb};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SparseError {
    #[error("matrix is structurally or numerically singular")]
    Singular,
}

/// Square sparse matrix under assembly; duplicate entries are summed.
#[derive(Debug, Clone)]
pub struct Triplets {
    n: usize,
    rows: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
}

impl Triplets {
    pub fn new(n: usize) -> Self {
        Triplets {
            n,
            rows: Vec::new(),
            cols: Vec::new(),
            vals: Vec::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn push(&mut self, row: usize, col: usize, val: f64) {
        debug_assert!(row < self.n && col < self.n);
        if val != 0.0 {
            self.rows.push(row);
            self.cols.push(col);
            self.vals.push(val);
        }
    }

    /// `y = A x`
    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        for ((&r, &c), &v) in self.rows.iter().zip(&self.cols).zip(&self.vals) {
            y[r] += v * x[c];
        }
        y
    }

    fn to_csc(&self) -> Sprs<f64> {
        let mut order: Vec<usize> = (0..self.vals.len()).collect();
        order.sort_unstable_by_key(|&k| (self.cols[k], self.rows[k]));
        let mut p = vec![0isize; self.n + 1];
        let mut i = Vec::with_capacity(order.len());
        let mut x: Vec<f64> = Vec::with_capacity(order.len());
        let mut last: Option<(usize, usize)> = None;
        for k in order {
            let key = (self.cols[k], self.rows[k]);
            if last == Some(key) {
                *x.last_mut().expect("entry exists") += self.vals[k];
            } else {
                i.push(key.1);
                x.push(self.vals[k]);
                p[key.0 + 1] += 1;
                last = Some(key);
            }
        }
        for c in 0..self.n {
            p[c + 1] += p[c];
        }
        Sprs {
            nzmax: x.len(),
            m: self.n,
            n: self.n,
            p,
            i,
            x,
        }
    }
}

/// LU factors of a square sparse matrix.
pub struct SparseLu {
    n: usize,
    symbolic: Symb,
    numeric: Nmrc<f64>,
}

/// Pivot ratio below which the matrix is treated as singular.
const PIVOT_RATIO: f64 = 1e-14;

impl SparseLu {
    pub fn factor(a: &Triplets) -> Result<Self, SparseError> {
        let n = a.dim();
        if n == 0 {
            return Ok(SparseLu {
                n,
                symbolic: Symb::new(),
                numeric: Nmrc::new(),
            });
        }
        let csc = a.to_csc();
        // AMD ordering in rsparse needs n >= 2.
        let ordering = if n < 3 { -1 } else { 1 };
        let mut symbolic = rsparse::sqr(&csc, ordering, false);
        let numeric = rsparse::lu(&csc, &mut symbolic, 1.0).map_err(|_| SparseError::Singular)?;

        let u = &numeric.u;
        let mut max_piv: f64 = 0.0;
        let mut min_piv = f64::INFINITY;
        for j in 0..n {
            // The diagonal is the last entry of each U column.
            let last = u.p[j + 1] as usize - 1;
            let d = u.x[last].abs();
            max_piv = max_piv.max(d);
            min_piv = min_piv.min(d);
        }
        if !(min_piv > PIVOT_RATIO * max_piv) || !max_piv.is_finite() {
            return Err(SparseError::Singular);
        }
        Ok(SparseLu {
            n,
            symbolic,
            numeric,
        })
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.n;
        let mut x = vec![0.0; n];
        match &self.numeric.pinv {
            Some(p) => {
                for k in 0..n {
                    x[p[k] as usize] = b[k];
                }
            }
            None => x.copy_from_slice(b),
        }
        rsparse::lsolve(&self.numeric.l, &mut x);
        rsparse::usolve(&self.numeric.u, &mut x);
        match &self.symbolic.q {
            Some(q) => {
                let mut out = vec![0.0; n];
                for k in 0..n {
                    out[q[k] as usize] = x[k];
                }
                out
            }
            None => x,
        }
    }
}

/// Result of a refined direct solve.
#[derive(Debug, Clone)]
pub struct Solved {
    pub x: Vec<f64>,
    /// Infinity norm of `b - A x` after refinement.
    pub residual: f64,
    pub refinements: usize,
}

/// Residual target and pass limit for [`solve_refined`].
pub const REFINE_TOL: f64 = 1e-11;
pub const REFINE_PASSES: usize = 2;

/// Solves `A x = b`, then refines with the same factors until the residual
/// drops below [`REFINE_TOL`] or [`REFINE_PASSES`] passes have run.
pub fn solve_refined(a: &Triplets, b: &[f64]) -> Result<Solved, SparseError> {
    let lu = SparseLu::factor(a)?;
    let mut x = lu.solve(b);
    let residual_of = |x: &[f64]| -> Vec<f64> {
        let ax = a.mul_vec(x);
        b.iter().zip(ax).map(|(bi, ai)| bi - ai).collect()
    };
    let mut r = residual_of(&x);
    let mut norm = inf_norm(&r);
    let mut passes = 0;
    while norm >= REFINE_TOL && passes < REFINE_PASSES {
        let dx = lu.solve(&r);
        for (xi, di) in x.iter_mut().zip(dx) {
            *xi += di;
        }
        r = residual_of(&x);
        norm = inf_norm(&r);
        passes += 1;
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(SparseError::Singular);
    }
    Ok(Solved {
        x,
        residual: norm,
        refinements: passes,
    })
}

pub fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}
