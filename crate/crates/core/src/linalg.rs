//! Small dense linear algebra: row-major matrices, matrix–vector products
//! and a Cholesky factorization that tolerates semi-definite input.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(r * c);
        for row in rows {
            Error::check_len("matrix row", c, row.len())?;
            data.extend_from_slice(row);
        }
        Ok(Matrix {
            rows: r,
            cols: c,
            data,
        })
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Matrix { rows, cols, data }
    }

    pub fn diagonal(values: &[f64]) -> Self {
        let n = values.len();
        let mut m = Matrix::zeros(n, n);
        for (i, v) in values.iter().enumerate() {
            m.data[i * n + i] = *v;
        }
        m
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    /// Checks that the backing buffer agrees with the declared shape.
    pub fn validate(&self, context: &'static str) -> Result<()> {
        Error::check_len(context, self.rows * self.cols, self.data.len())?;
        Error::check_finite(context, &self.data)
    }

    pub fn frobenius_sq(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum()
    }

    pub fn frobenius(&self) -> f64 {
        self.frobenius_sq().sqrt()
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Matrix {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&x| f(x)).collect(),
        }
    }

    pub fn transpose(&self) -> Matrix {
        Matrix::from_fn(self.cols, self.rows, |i, j| self.get(j, i))
    }

    /// `self * x`.
    pub fn mul_vec(&self, x: &[f64]) -> Result<Vec<f64>> {
        Error::check_len("matrix-vector product", self.cols, x.len())?;
        Ok(self
            .data
            .chunks_exact(self.cols.max(1))
            .take(self.rows)
            .map(|row| dot(row, x))
            .collect())
    }

    /// `self * x`, adding the number of scalar multiply-adds performed to `counter`.
    pub fn mul_vec_counted(&self, x: &[f64], counter: &mut u64) -> Result<Vec<f64>> {
        Error::check_len("matrix-vector product", self.cols, x.len())?;
        let mut out = vec![0.0; self.rows];
        for (i, o) in out.iter_mut().enumerate() {
            let row = self.row(i);
            let mut acc = 0.0;
            for (a, b) in row.iter().zip(x) {
                acc += a * b;
                *counter += 1;
            }
            *o = acc;
        }
        Ok(out)
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        self.rows == self.cols
            && (0..self.rows)
                .all(|i| (0..i).all(|j| (self.get(i, j) - self.get(j, i)).abs() <= tol))
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm_l1(x: &[f64]) -> f64 {
    x.iter().map(|v| v.abs()).sum()
}

pub fn norm_sq(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum()
}

pub fn add(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + y).collect()
}

const JITTER: f64 = 1e-10;
const MAX_JITTER_ATTEMPTS: usize = 3;

/// Lower-triangular `L` with `L Lᵀ = sigma`.
///
/// A pivot that is zero (up to round-off) on a column whose remaining entries
/// are also zero is accepted, so semi-definite matrices such as the zero
/// matrix factor exactly. Anything else non-positive triggers a retry with
/// `1e-10·I` added, up to three times.
pub fn cholesky_psd(sigma: &Matrix) -> Result<Matrix> {
    if sigma.rows != sigma.cols {
        return Err(Error::InvalidConfig(format!(
            "covariance must be square, got {}x{}",
            sigma.rows, sigma.cols
        )));
    }
    sigma.validate("covariance")?;
    if !sigma.is_symmetric(1e-12 * (1.0 + sigma.frobenius())) {
        return Err(Error::InvalidConfig("covariance is not symmetric".into()));
    }
    if (0..sigma.rows).any(|i| sigma.get(i, i) < 0.0) {
        return Err(Error::InvalidConfig(
            "covariance has a negative diagonal entry".into(),
        ));
    }
    let mut jitter = 0.0;
    for _ in 0..=MAX_JITTER_ATTEMPTS {
        if let Some(l) = try_cholesky(sigma, jitter) {
            return Ok(l);
        }
        jitter += JITTER;
    }
    Err(Error::NotFactorizable)
}

fn try_cholesky(sigma: &Matrix, jitter: f64) -> Option<Matrix> {
    let n = sigma.rows;
    let scale = (0..n).map(|i| sigma.get(i, i)).fold(0.0, f64::max).max(1.0);
    let tiny = 1e-14 * scale;
    let mut l = Matrix::zeros(n, n);
    for j in 0..n {
        let mut d = sigma.get(j, j) + jitter;
        for k in 0..j {
            d -= l.get(j, k) * l.get(j, k);
        }
        if d > tiny {
            let djj = d.sqrt();
            l.set(j, j, djj);
            for i in j + 1..n {
                let mut s = sigma.get(i, j);
                for k in 0..j {
                    s -= l.get(i, k) * l.get(j, k);
                }
                l.set(i, j, s / djj);
            }
        } else if d > -tiny {
            // Degenerate direction: the column below must vanish too.
            for i in j + 1..n {
                let mut s = sigma.get(i, j);
                for k in 0..j {
                    s -= l.get(i, k) * l.get(j, k);
                }
                if s.abs() > tiny.sqrt() {
                    return None;
                }
            }
        } else {
            return None;
        }
    }
    Some(l)
}
