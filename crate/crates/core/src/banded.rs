//! Symmetric positive definite band matrices with an in-place Cholesky
//! factorization.

/// Lower band storage: entry `(i, j)` with `i - p <= j <= i` lives at
/// `data[i * (p + 1) + (i - j)]`.
#[derive(Debug, Clone)]
pub(crate) struct BandMatrix {
    pub n: usize,
    pub p: usize,
    data: Vec<f64>,
}

impl BandMatrix {
    pub fn zeros(n: usize, p: usize) -> Self {
        Self {
            n,
            p,
            data: vec![0.0; n * (p + 1)],
        }
    }

    pub fn clear(&mut self) {
        self.data.iter_mut().for_each(|v| *v = 0.0);
    }

    #[inline]
    fn at(&self, i: usize, j: usize) -> usize {
        debug_assert!(j <= i && i - j <= self.p);
        i * (self.p + 1) + (i - j)
    }

    /// Add `v` to entry `(i, j)`; `(j, i)` is implied by symmetry.
    #[inline]
    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        let (i, j) = if i >= j { (i, j) } else { (j, i) };
        let k = self.at(i, j);
        self.data[k] += v;
    }

    #[cfg(test)]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (i, j) = if i >= j { (i, j) } else { (j, i) };
        if i - j > self.p {
            0.0
        } else {
            self.data[self.at(i, j)]
        }
    }

    /// Replace row and column `i` by the identity.
    pub fn set_identity_row(&mut self, i: usize) {
        for j in i.saturating_sub(self.p)..i {
            let k = self.at(i, j);
            self.data[k] = 0.0;
        }
        for r in i + 1..(i + self.p + 1).min(self.n) {
            let k = self.at(r, i);
            self.data[k] = 0.0;
        }
        let k = self.at(i, i);
        self.data[k] = 1.0;
    }

    /// Overwrite with the Cholesky factor `L`. Returns `false` if the matrix
    /// is not numerically positive definite.
    pub fn factorize(&mut self) -> bool {
        let (n, p) = (self.n, self.p);
        let w = p + 1;
        for j in 0..n {
            let lo = j.saturating_sub(p);
            let mut d = self.data[j * w];
            for k in lo..j {
                let l = self.data[j * w + (j - k)];
                d -= l * l;
            }
            if !(d > 0.0) || !d.is_finite() {
                return false;
            }
            let djj = d.sqrt();
            self.data[j * w] = djj;
            for i in j + 1..(j + w).min(n) {
                let lo_i = i.saturating_sub(p).max(lo);
                let mut s = self.data[i * w + (i - j)];
                for k in lo_i..j {
                    s -= self.data[i * w + (i - k)] * self.data[j * w + (j - k)];
                }
                self.data[i * w + (i - j)] = s / djj;
            }
        }
        true
    }

    /// Solve `L L^T x = b` in place after [`factorize`](Self::factorize).
    pub fn solve_in_place(&self, b: &mut [f64]) {
        let (n, p) = (self.n, self.p);
        let w = p + 1;
        for i in 0..n {
            let mut s = b[i];
            for k in i.saturating_sub(p)..i {
                s -= self.data[i * w + (i - k)] * b[k];
            }
            b[i] = s / self.data[i * w];
        }
        for i in (0..n).rev() {
            let mut s = b[i];
            for k in i + 1..(i + w).min(n) {
                s -= self.data[k * w + (k - i)] * b[k];
            }
            b[i] = s / self.data[i * w];
        }
    }
}
