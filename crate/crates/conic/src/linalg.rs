//! Dense LDL' factorization for the quasi-definite reduced KKT system.

/// Square row-major dense matrix.
#[derive(Debug, Clone)]
pub(crate) struct Dense {
    pub n: usize,
    pub data: Vec<f64>,
}

impl Dense {
    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            data: vec![0.0; n * n],
        }
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    #[inline]
    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.n + j] += v;
    }

    #[cfg(test)]
    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        self.data
            .chunks_exact(self.n)
            .map(|row| row.iter().zip(x).map(|(a, b)| a * b).sum())
            .collect()
    }
}

/// `L D L'` with unit lower-triangular `L`.
#[derive(Debug, Clone)]
pub(crate) struct Ldl {
    n: usize,
    l: Vec<f64>,
    d: Vec<f64>,
}

impl Ldl {
    /// Factors a symmetric matrix whose first `n_pos` pivots should be
    /// positive and the rest negative. Pivots with the wrong sign or smaller
    /// than `delta` in magnitude are replaced by `+-delta`.
    pub fn factor(a: &Dense, n_pos: usize, delta: f64) -> Option<Self> {
        let n = a.n;
        let mut l = a.data.clone();
        let mut d = vec![0.0; n];
        let mut work = vec![0.0; n];
        for j in 0..n {
            // work[k] = L_jk d_k
            for k in 0..j {
                work[k] = l[j * n + k] * d[k];
            }
            let row_j = &l[j * n..j * n + j];
            let mut djj = a.data[j * n + j] - row_j.iter().zip(&work[..j]).map(|(x, y)| x * y).sum::<f64>();
            let sign = if j < n_pos { 1.0 } else { -1.0 };
            if !djj.is_finite() {
                return None;
            }
            if sign * djj < delta {
                djj = sign * delta;
            }
            d[j] = djj;
            for i in j + 1..n {
                let s: f64 = l[i * n..i * n + j].iter().zip(&work[..j]).map(|(x, y)| x * y).sum();
                l[i * n + j] = (a.data[i * n + j] - s) / djj;
            }
        }
        // clear the upper triangle so solves can read rows directly
        for i in 0..n {
            for j in i..n {
                l[i * n + j] = if i == j { 1.0 } else { 0.0 };
            }
        }
        Some(Self { n, l, d })
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.n;
        let mut x = b.to_vec();
        for i in 0..n {
            let row = &self.l[i * n..i * n + i];
            let s: f64 = row.iter().zip(&x[..i]).map(|(a, b)| a * b).sum();
            x[i] -= s;
        }
        for i in 0..n {
            x[i] /= self.d[i];
        }
        for j in (0..n).rev() {
            let xj = x[j];
            for i in 0..j {
                x[i] -= self.l[j * n + i] * xj;
            }
        }
        x
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solves_quasidefinite_system() {
        // [[4, 1, 2], [1, 3, 0], [2, 0, -1]]
        let mut a = Dense::zeros(3);
        let vals = [4.0, 1.0, 2.0, 1.0, 3.0, 0.0, 2.0, 0.0, -1.0];
        a.data.copy_from_slice(&vals);
        let f = Ldl::factor(&a, 2, 1e-14).unwrap();
        let b = [1.0, 2.0, 3.0];
        let x = f.solve(&b);
        let r = a.mul_vec(&x);
        for i in 0..3 {
            assert!((r[i] - b[i]).abs() < 1e-12);
        }
    }
}
