//! Banded LU with partial pivoting, used for the variable-coefficient
//! cell-density step. Layout follows LAPACK's `gbtrf`: column-major band
//! storage with `kl` extra rows for pivoting fill-in.

use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct BandMatrix {
    n: usize,
    kl: usize,
    ku: usize,
    ldab: usize,
    data: Vec<f64>,
    pivots: Vec<usize>,
    factored: bool,
}

impl BandMatrix {
    pub fn zeros(n: usize, kl: usize, ku: usize) -> Self {
        let ldab = 2 * kl + ku + 1;
        Self {
            n,
            kl,
            ku,
            ldab,
            data: vec![0.0; ldab * n],
            pivots: vec![0; n],
            factored: false,
        }
    }

    pub fn size(&self) -> usize {
        self.n
    }

    #[inline]
    fn idx(&self, i: usize, j: usize) -> usize {
        (self.kl + self.ku + i - j) + j * self.ldab
    }

    /// Add `v` to entry `(i, j)`; the entry must lie inside the declared band.
    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        debug_assert!(!self.factored);
        debug_assert!(j <= i + self.ku && i <= j + self.kl, "({i},{j}) outside band");
        let k = self.idx(i, j);
        self.data[k] += v;
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        if j > i + self.ku || i > j + self.kl {
            return 0.0;
        }
        self.data[self.idx(i, j)]
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        assert!(!self.factored);
        (0..self.n)
            .map(|i| {
                let lo = i.saturating_sub(self.kl);
                let hi = (i + self.ku).min(self.n - 1);
                (lo..=hi).map(|j| self.data[self.idx(i, j)] * x[j]).sum()
            })
            .collect()
    }

    pub fn factor(&mut self) -> Result<()> {
        let (n, kl, ku) = (self.n, self.kl, self.ku);
        let kv = kl + ku;
        let mut ju = 0usize;
        for j in 0..n {
            let km = kl.min(n - 1 - j);
            let mut p = 0;
            let mut best = self.data[self.idx(j, j)].abs();
            for r in 1..=km {
                let v = self.data[self.idx(j + r, j)].abs();
                if v > best {
                    best = v;
                    p = r;
                }
            }
            self.pivots[j] = j + p;
            if best == 0.0 {
                return Err(Error::LinearSolver(format!("zero pivot in column {j}")));
            }
            ju = ju.max((j + ku + p).min(n - 1));
            if p != 0 {
                for c in j..=ju {
                    let a = self.idx(j, c);
                    let b = self.idx(j + p, c);
                    self.data.swap(a, b);
                }
            }
            let piv = self.data[self.idx(j, j)];
            for r in 1..=km {
                let k = self.idx(j + r, j);
                self.data[k] /= piv;
            }
            for c in j + 1..=ju {
                let ujc = self.data[self.idx(j, c)];
                if ujc == 0.0 {
                    continue;
                }
                for r in 1..=km {
                    debug_assert!(c <= j + r + kv);
                    let l = self.data[self.idx(j + r, j)];
                    let k = self.idx(j + r, c);
                    self.data[k] -= l * ujc;
                }
            }
        }
        self.factored = true;
        Ok(())
    }

    /// Solve `A x = b` in place after [`factor`](Self::factor).
    pub fn solve_in_place(&self, b: &mut [f64]) {
        assert!(self.factored, "factor() must be called first");
        let (n, kl, kv) = (self.n, self.kl, self.kl + self.ku);
        for j in 0..n {
            let p = self.pivots[j];
            if p != j {
                b.swap(j, p);
            }
            let km = kl.min(n - 1 - j);
            let bj = b[j];
            for r in 1..=km {
                b[j + r] -= self.data[self.idx(j + r, j)] * bj;
            }
        }
        for j in (0..n).rev() {
            b[j] /= self.data[self.idx(j, j)];
            let bj = b[j];
            for i in j.saturating_sub(kv)..j {
                b[i] -= self.data[self.idx(i, j)] * bj;
            }
        }
    }
}
