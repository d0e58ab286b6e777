//! Dense real symmetric matrices in packed lower-triangular storage.

use std::io::{Read, Write};

use rayon::prelude::*;

use crate::error::{Error, Result};

const MAGIC: &[u8; 8] = b"RMTSYM01";

#[derive(Debug, Clone, PartialEq)]
pub struct SymmetricMatrix {
    n: usize,
    // row i holds entries (i, 0..=i) starting at i(i+1)/2
    data: Vec<f64>,
}

#[inline]
fn offset(i: usize) -> usize {
    i * (i + 1) / 2
}

impl SymmetricMatrix {
    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            data: vec![0.0; offset(n)],
        }
    }

    /// Build from `f(i, j)` evaluated for `j ≤ i`.
    pub fn from_lower_fn(n: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(offset(n));
        for i in 0..n {
            data.extend((0..=i).map(|j| f(i, j)));
        }
        Self { n, data }
    }

    /// Build from packed rows: row `i` must hold `i + 1` entries.
    pub fn from_lower_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let n = rows.len();
        let mut data = Vec::with_capacity(offset(n));
        for (i, r) in rows.into_iter().enumerate() {
            if r.len() != i + 1 {
                return Err(Error::SizeMismatch(i + 1, r.len()));
            }
            data.extend(r);
        }
        Ok(Self { n, data })
    }

    /// From a full row-major matrix, which must be exactly symmetric.
    pub fn from_full(n: usize, full: &[f64]) -> Result<Self> {
        if full.len() != n * n {
            return Err(Error::SizeMismatch(n * n, full.len()));
        }
        for i in 0..n {
            for j in 0..i {
                if full[i * n + j] != full[j * n + i] {
                    return Err(Error::invalid(format!(
                        "matrix is not symmetric at ({i}, {j})"
                    )));
                }
            }
        }
        Ok(Self::from_lower_fn(n, |i, j| full[i * n + j]))
    }

    pub fn from_diagonal(diag: &[f64]) -> Self {
        Self::from_lower_fn(diag.len(), |i, j| if i == j { diag[i] } else { 0.0 })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (i, j) = if i >= j { (i, j) } else { (j, i) };
        self.data[offset(i) + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        let (i, j) = if i >= j { (i, j) } else { (j, i) };
        self.data[offset(i) + j] = v;
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.get(i, i)).collect()
    }

    pub fn to_full(&self) -> Vec<f64> {
        let n = self.n;
        let mut out = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..=i {
                let v = self.data[offset(i) + j];
                out[i * n + j] = v;
                out[j * n + i] = v;
            }
        }
        out
    }

    pub fn trace(&self) -> f64 {
        (0..self.n).map(|i| self.get(i, i)).sum()
    }

    pub fn frobenius_norm(&self) -> f64 {
        let mut s = 0.0;
        for i in 0..self.n {
            for j in 0..=i {
                let v = self.data[offset(i) + j];
                s += if i == j { v * v } else { 2.0 * v * v };
            }
        }
        s.sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// `y = M x`, parallel over rows for large matrices.
    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        assert_eq!(x.len(), self.n);
        assert_eq!(y.len(), self.n);
        let row = |i: usize| -> f64 {
            let base = offset(i);
            let mut acc: f64 = self.data[base..=base + i]
                .iter()
                .zip(&x[..=i])
                .map(|(a, b)| a * b)
                .sum();
            for j in i + 1..self.n {
                acc += self.data[offset(j) + i] * x[j];
            }
            acc
        };
        if self.n >= 256 {
            y.par_iter_mut()
                .enumerate()
                .for_each(|(i, yi)| *yi = row(i));
        } else {
            y.iter_mut().enumerate().for_each(|(i, yi)| *yi = row(i));
        }
    }

    /// `s·self + other`.
    pub fn scaled_add(&self, s: f64, other: &SymmetricMatrix) -> Result<Self> {
        if self.n != other.n {
            return Err(Error::SizeMismatch(self.n, other.n));
        }
        Ok(Self {
            n: self.n,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(a, b)| s * a + b)
                .collect(),
        })
    }

    pub fn scale(&self, s: f64) -> Self {
        Self {
            n: self.n,
            data: self.data.iter().map(|v| s * v).collect(),
        }
    }

    /// Binary form: 8-byte magic, `n` as little-endian u64, then the full
    /// matrix row-major as little-endian f64.
    pub fn write_binary<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(MAGIC)?;
        w.write_all(&(self.n as u64).to_le_bytes())?;
        let n = self.n;
        let mut row = Vec::with_capacity(8 * n);
        for i in 0..n {
            row.clear();
            for j in 0..n {
                row.extend_from_slice(&self.get(i, j).to_le_bytes());
            }
            w.write_all(&row)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_binary<R: Read>(mut r: R) -> Result<Self> {
        let mut header = [0u8; 16];
        r.read_exact(&mut header)?;
        if &header[..8] != MAGIC {
            return Err(Error::Format("bad matrix file magic".into()));
        }
        let n = u64::from_le_bytes(header[8..].try_into().expect("8 bytes")) as usize;
        let mut buf = vec![0u8; 8 * n];
        let mut full = Vec::with_capacity(n * n);
        for _ in 0..n {
            r.read_exact(&mut buf)?;
            full.extend(
                buf.chunks_exact(8)
                    .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))),
            );
        }
        Self::from_full(n, &full)
    }

    /// Full matrix as CSV with header `c0,c1,…`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let headers: Vec<String> = (0..self.n).map(|j| format!("c{j}")).collect();
        let header_refs: Vec<&str> = headers.iter().map(String::as_str).collect();
        let cols: Vec<Vec<f64>> = (0..self.n)
            .map(|j| (0..self.n).map(|i| self.get(i, j)).collect())
            .collect();
        let col_refs: Vec<&[f64]> = cols.iter().map(Vec::as_slice).collect();
        crate::io::write_columns(w, &header_refs, &col_refs)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> SymmetricMatrix {
        SymmetricMatrix::from_lower_fn(4, |i, j| (i * 10 + j) as f64 - 7.5)
    }

    #[test]
    fn symmetric_access() {
        let m = sample();
        for i in 0..4 {
            for j in 0..4 {
                assert_eq!(m.get(i, j), m.get(j, i));
            }
        }
        let full = m.to_full();
        assert_eq!(SymmetricMatrix::from_full(4, &full).unwrap(), m);
    }

    #[test]
    fn asymmetric_full_rejected() {
        assert!(SymmetricMatrix::from_full(2, &[1.0, 2.0, 3.0, 4.0]).is_err());
    }

    #[test]
    fn matvec_matches_dense() {
        let m = sample();
        let full = m.to_full();
        let x = [1.0, -2.0, 0.5, 3.0];
        let mut y = [0.0; 4];
        m.matvec(&x, &mut y);
        for i in 0..4 {
            let want: f64 = (0..4).map(|j| full[i * 4 + j] * x[j]).sum();
            assert!((y[i] - want).abs() < 1e-12);
        }
    }

    #[test]
    fn binary_round_trip() {
        let m = sample();
        let mut buf = Vec::new();
        m.write_binary(&mut buf).unwrap();
        assert_eq!(buf.len(), 16 + 8 * 16);
        assert_eq!(&buf[..8], b"RMTSYM01");
        assert_eq!(SymmetricMatrix::read_binary(buf.as_slice()).unwrap(), m);
    }

    #[test]
    fn norms() {
        let m = SymmetricMatrix::from_full(2, &[1.0, 2.0, 2.0, -3.0]).unwrap();
        assert!((m.frobenius_norm() - 18f64.sqrt()).abs() < 1e-15);
        assert_eq!(m.trace(), -2.0);
        assert_eq!(m.max_abs(), 3.0);
    }
}
