//! Symmetric banded matrices with an unpivoted LDLᵀ factorization.
//!
//! Grid operators ordered by lattice index have bandwidth one in 1-d and the
//! lattice width in 2-d, so a direct factorization stays cheap at desk scale.
//! A nonpositive pivot means the matrix is not positive definite.

#[derive(Debug, Clone)]
pub struct BandMatrix {
    n: usize,
    bandwidth: usize,
    /// Row `i` stores columns `i − bandwidth ..= i` (lower triangle).
    data: Vec<f64>,
}

impl BandMatrix {
    pub fn zeros(n: usize, bandwidth: usize) -> Self {
        Self { n, bandwidth, data: vec![0.0; n * (bandwidth + 1)] }
    }

    #[inline]
    fn slot(&self, i: usize, j: usize) -> usize {
        debug_assert!(j <= i && i - j <= self.bandwidth);
        i * (self.bandwidth + 1) + (self.bandwidth + j - i)
    }

    /// Adds `value` to entry `(i, j)` (and implicitly `(j, i)`).
    #[inline]
    pub fn add(&mut self, i: usize, j: usize, value: f64) {
        let (i, j) = if i >= j { (i, j) } else { (j, i) };
        let s = self.slot(i, j);
        self.data[s] += value;
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.data[self.slot(i, i)]).collect()
    }

    /// `y = A x`.
    #[cfg(test)]
    pub fn mul(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        for i in 0..self.n {
            let lo = i.saturating_sub(self.bandwidth);
            for j in lo..=i {
                let a = self.data[self.slot(i, j)];
                y[i] += a * x[j];
                if j != i {
                    y[j] += a * x[i];
                }
            }
        }
        y
    }

    /// LDLᵀ factorization; `None` when a pivot is not safely positive.
    pub fn factor(&self) -> Option<BandLdl> {
        let b = self.bandwidth;
        let scale = self.diagonal().iter().fold(0.0_f64, |m, d| m.max(d.abs()));
        let tiny = 1e-13 * scale.max(f64::MIN_POSITIVE);
        let mut l = self.data.clone();
        let mut d = vec![0.0; self.n];
        for i in 0..self.n {
            let lo = i.saturating_sub(b);
            for j in lo..=i {
                let mut sum = l[self.slot(i, j)];
                for k in lo.max(j.saturating_sub(b))..j {
                    sum -= l[self.slot(i, k)] * l[self.slot(j, k)] * d[k];
                }
                if j < i {
                    l[self.slot(i, j)] = sum / d[j];
                } else {
                    if !(sum > tiny) {
                        return None;
                    }
                    d[i] = sum;
                    l[self.slot(i, i)] = 1.0;
                }
            }
        }
        Some(BandLdl { n: self.n, bandwidth: b, l, d })
    }
}

#[derive(Debug, Clone)]
pub struct BandLdl {
    n: usize,
    bandwidth: usize,
    l: Vec<f64>,
    d: Vec<f64>,
}

impl BandLdl {
    #[inline]
    fn at(&self, i: usize, j: usize) -> f64 {
        self.l[i * (self.bandwidth + 1) + (self.bandwidth + j - i)]
    }

    pub fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        let b = self.bandwidth;
        let mut x = rhs.to_vec();
        for i in 0..self.n {
            let lo = i.saturating_sub(b);
            let mut s = x[i];
            for j in lo..i {
                s -= self.at(i, j) * x[j];
            }
            x[i] = s;
        }
        for i in 0..self.n {
            x[i] /= self.d[i];
        }
        for i in (0..self.n).rev() {
            let hi = (i + b).min(self.n - 1);
            let mut s = x[i];
            for j in i + 1..=hi {
                s -= self.at(j, i) * x[j];
            }
            x[i] = s;
        }
        x
    }
}
