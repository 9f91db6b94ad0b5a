//! Minimal dense linear algebra for the trainers: row-major matrices and a
//! Cholesky solve for the small SPD systems of IRLS.

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Matrix {
    pub n_rows: usize,
    pub n_cols: usize,
    pub data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(n_rows: usize, n_cols: usize) -> Self {
        Self {
            n_rows,
            n_cols,
            data: vec![0.0; n_rows * n_cols],
        }
    }

    #[cfg(test)]
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Self {
        let n_rows = rows.len();
        let n_cols = rows.first().map_or(0, |r| r.len());
        let mut data = Vec::with_capacity(n_rows * n_cols);
        for r in rows {
            debug_assert_eq!(r.len(), n_cols);
            data.extend(r);
        }
        Self {
            n_rows,
            n_cols,
            data,
        }
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.n_cols..(r + 1) * self.n_cols]
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.n_cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.n_cols + c] = v;
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Solve A x = b for symmetric positive definite A (dense, row-major,
/// square). Adds a diagonal jitter and retries when the factorization
/// breaks down; returns None if it still fails.
pub(crate) fn cholesky_solve(a: &Matrix, b: &[f64]) -> Option<Vec<f64>> {
    debug_assert_eq!(a.n_rows, a.n_cols);
    debug_assert_eq!(a.n_rows, b.len());
    let n = a.n_rows;
    let scale = (0..n).map(|i| a.get(i, i).abs()).fold(0.0, f64::max);
    let mut jitter = 0.0;
    for _ in 0..6 {
        if let Some(l) = cholesky(a, jitter) {
            // forward: L y = b
            let mut y = vec![0.0; n];
            for i in 0..n {
                let s: f64 = (0..i).map(|k| l.get(i, k) * y[k]).sum();
                y[i] = (b[i] - s) / l.get(i, i);
            }
            // backward: L^T x = y
            let mut x = vec![0.0; n];
            for i in (0..n).rev() {
                let s: f64 = (i + 1..n).map(|k| l.get(k, i) * x[k]).sum();
                x[i] = (y[i] - s) / l.get(i, i);
            }
            if x.iter().all(|v| v.is_finite()) {
                return Some(x);
            }
        }
        jitter = if jitter == 0.0 {
            1e-10 * scale.max(1.0)
        } else {
            jitter * 100.0
        };
    }
    None
}

fn cholesky(a: &Matrix, jitter: f64) -> Option<Matrix> {
    let n = a.n_rows;
    let mut l = Matrix::zeros(n, n);
    for i in 0..n {
        for j in 0..=i {
            let mut s = a.get(i, j);
            if i == j {
                s += jitter;
            }
            for k in 0..j {
                s -= l.get(i, k) * l.get(j, k);
            }
            if i == j {
                if s <= 0.0 || !s.is_finite() {
                    return None;
                }
                l.set(i, j, s.sqrt());
            } else {
                l.set(i, j, s / l.get(j, j));
            }
        }
    }
    Some(l)
}
