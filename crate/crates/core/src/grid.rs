//! Periodic samples on cell-centred nodes x_i = (i + ½)/n of the unit torus.
//!
//! Grids own their values; the mean and L² caches are computed once at
//! construction, so a grid is immutable after it is built.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sum::{self, Neumaier};

pub fn node(i: usize, n: usize) -> f64 {
    (i as f64 + 0.5) / n as f64
}

fn check_size(n: usize, what: &str) -> Result<()> {
    if n == 0 || !n.is_power_of_two() {
        return Err(Error::Input(format!("{what} = {n} is not a power of two")));
    }
    Ok(())
}

fn moments(values: &[f64], row: usize) -> (f64, f64) {
    let parts: Vec<(Neumaier, Neumaier)> = values
        .par_chunks(row.max(1))
        .map(|r| {
            let (mut a, mut b) = (Neumaier::default(), Neumaier::default());
            for &v in r {
                a.add(v);
                b.add(v * v);
            }
            (a, b)
        })
        .collect();
    let (mut a, mut b) = (Neumaier::default(), Neumaier::default());
    for (pa, pb) in parts {
        a.merge(pa);
        b.merge(pb);
    }
    let len = values.len() as f64;
    (a.total() / len, (b.total() / len).sqrt())
}

fn sup(values: &[f64]) -> f64 {
    values.iter().fold(0.0, |m, v| m.max(v.abs()))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalarGrid1D {
    n: usize,
    values: Vec<f64>,
}

impl ScalarGrid1D {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        check_size(values.len(), "grid size")?;
        Ok(ScalarGrid1D {
            n: values.len(),
            values,
        })
    }

    pub fn from_fn(n: usize, f: impl Fn(f64) -> f64) -> Result<Self> {
        Self::new((0..n).map(|i| f(node(i, n))).collect())
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn mean(&self) -> f64 {
        sum::sum(self.values.iter().copied()) / self.n as f64
    }

    /// Mean square, i.e. ∫ψ² by the midpoint rule.
    pub fn energy(&self) -> f64 {
        sum::sum(self.values.iter().map(|v| v * v)) / self.n as f64
    }

    pub fn l2(&self) -> f64 {
        self.energy().sqrt()
    }

    pub fn sup(&self) -> f64 {
        sup(&self.values)
    }
}

/// Values are stored row-major as `[y][x]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalarGrid2D {
    n: usize,
    values: Vec<f64>,
    mean: f64,
    l2: f64,
}

impl ScalarGrid2D {
    pub fn new(n: usize, values: Vec<f64>) -> Result<Self> {
        check_size(n, "grid size")?;
        if values.len() != n * n {
            return Err(Error::Input(format!(
                "expected {} values, got {}",
                n * n,
                values.len()
            )));
        }
        let (mean, l2) = moments(&values, n);
        Ok(ScalarGrid2D { n, values, mean, l2 })
    }

    pub fn from_fn(n: usize, f: impl Fn(f64, f64) -> f64 + Sync) -> Result<Self> {
        check_size(n, "grid size")?;
        let mut values = vec![0.0; n * n];
        values.par_chunks_mut(n).enumerate().for_each(|(j, row)| {
            let y = node(j, n);
            for (i, v) in row.iter_mut().enumerate() {
                *v = f(node(i, n), y);
            }
        });
        Self::new(n, values)
    }

    pub fn zeros(n: usize) -> Result<Self> {
        Self::new(n, vec![0.0; n * n])
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.values[j * self.n + i]
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    pub fn l2(&self) -> f64 {
        self.l2
    }

    pub fn energy(&self) -> f64 {
        self.l2 * self.l2
    }

    pub fn sup(&self) -> f64 {
        sup(&self.values)
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self::new(self.n, self.values.iter().map(|v| v * c).collect()).expect("same shape")
    }

    /// L² norm of the difference.
    pub fn dist(&self, other: &ScalarGrid2D) -> f64 {
        assert_eq!(self.n, other.n);
        let ms = sum::sum(self.values.iter().zip(&other.values).map(|(a, b)| (a - b) * (a - b)));
        (ms / self.values.len() as f64).sqrt()
    }

    pub fn inner(&self, other: &ScalarGrid2D) -> f64 {
        assert_eq!(self.n, other.n);
        sum::sum(self.values.iter().zip(&other.values).map(|(a, b)| a * b)) / self.values.len() as f64
    }

    pub fn write_raw(&self, path: &Path) -> Result<()> {
        write_raw(path, &[self.n, self.n], &self.values)
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        write_csv_matrix(path, self.n, &self.values)
    }
}

/// Values are stored row-major as `[z][y][x]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalarGrid3D {
    n_xy: usize,
    n_z: usize,
    values: Vec<f64>,
    mean: f64,
    l2: f64,
}

impl ScalarGrid3D {
    pub fn new(n_xy: usize, n_z: usize, values: Vec<f64>) -> Result<Self> {
        check_size(n_xy, "n_xy")?;
        check_size(n_z, "n_z")?;
        if values.len() != n_xy * n_xy * n_z {
            return Err(Error::Input(format!(
                "expected {} values, got {}",
                n_xy * n_xy * n_z,
                values.len()
            )));
        }
        let (mean, l2) = moments(&values, n_xy * n_xy);
        Ok(ScalarGrid3D {
            n_xy,
            n_z,
            values,
            mean,
            l2,
        })
    }

    pub fn from_fn(n_xy: usize, n_z: usize, f: impl Fn(f64, f64, f64) -> f64 + Sync) -> Result<Self> {
        check_size(n_xy, "n_xy")?;
        check_size(n_z, "n_z")?;
        let mut values = vec![0.0; n_xy * n_xy * n_z];
        values.par_chunks_mut(n_xy * n_xy).enumerate().for_each(|(l, slab)| {
            let z = node(l, n_z);
            for (j, row) in slab.chunks_mut(n_xy).enumerate() {
                let y = node(j, n_xy);
                for (i, v) in row.iter_mut().enumerate() {
                    *v = f(node(i, n_xy), y, z);
                }
            }
        });
        Self::new(n_xy, n_z, values)
    }

    /// Stacks horizontal slices bottom to top.
    pub fn from_slices(slices: &[ScalarGrid2D]) -> Result<Self> {
        let n_xy = slices.first().map(|s| s.n()).unwrap_or(0);
        let mut values = Vec::with_capacity(n_xy * n_xy * slices.len());
        for s in slices {
            if s.n() != n_xy {
                return Err(Error::Input("slices differ in size".into()));
            }
            values.extend_from_slice(s.values());
        }
        Self::new(n_xy, slices.len(), values)
    }

    pub fn n_xy(&self) -> usize {
        self.n_xy
    }

    pub fn n_z(&self) -> usize {
        self.n_z
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    pub fn l2(&self) -> f64 {
        self.l2
    }

    pub fn energy(&self) -> f64 {
        self.l2 * self.l2
    }

    pub fn sup(&self) -> f64 {
        sup(&self.values)
    }

    pub fn slice_values(&self, l: usize) -> &[f64] {
        let m = self.n_xy * self.n_xy;
        &self.values[l * m..(l + 1) * m]
    }

    pub fn slice(&self, l: usize) -> ScalarGrid2D {
        ScalarGrid2D::new(self.n_xy, self.slice_values(l).to_vec()).expect("slice shape")
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self::new(self.n_xy, self.n_z, self.values.iter().map(|v| v * c).collect()).expect("same shape")
    }

    pub fn dist(&self, other: &ScalarGrid3D) -> f64 {
        assert_eq!(self.values.len(), other.values.len());
        let ms = sum::sum(self.values.iter().zip(&other.values).map(|(a, b)| (a - b) * (a - b)));
        (ms / self.values.len() as f64).sqrt()
    }

    pub fn write_raw(&self, path: &Path) -> Result<()> {
        write_raw(path, &[self.n_z, self.n_xy, self.n_xy], &self.values)
    }

    /// Horizontal slice `l` as a CSV matrix.
    pub fn write_csv_slice(&self, path: &Path, l: usize) -> Result<()> {
        write_csv_matrix(path, self.n_xy, self.slice_values(l))
    }
}

pub const RAW_MAGIC: &[u8; 8] = b"SGRIDF64";

/// Raw export: magic, u32 rank, u64 dims, then f64 samples, all little-endian,
/// row-major with the last dimension fastest.
pub fn write_raw(path: &Path, dims: &[usize], data: &[f64]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(RAW_MAGIC)?;
    w.write_all(&(dims.len() as u32).to_le_bytes())?;
    for &d in dims {
        w.write_all(&(d as u64).to_le_bytes())?;
    }
    for v in data {
        w.write_all(&v.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_raw(path: &Path) -> Result<(Vec<usize>, Vec<f64>)> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != RAW_MAGIC {
        return Err(Error::Input("bad raw grid magic".into()));
    }
    let mut b4 = [0u8; 4];
    r.read_exact(&mut b4)?;
    let rank = u32::from_le_bytes(b4) as usize;
    let mut dims = Vec::with_capacity(rank);
    let mut b8 = [0u8; 8];
    for _ in 0..rank {
        r.read_exact(&mut b8)?;
        dims.push(u64::from_le_bytes(b8) as usize);
    }
    let len: usize = dims.iter().product();
    let mut data = Vec::with_capacity(len);
    for _ in 0..len {
        r.read_exact(&mut b8)?;
        data.push(f64::from_le_bytes(b8));
    }
    Ok((dims, data))
}

fn write_csv_matrix(path: &Path, n: usize, values: &[f64]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for row in values.chunks(n) {
        let line: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        writeln!(w, "{}", line.join(","))?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn caches_match_values() {
        let g = ScalarGrid2D::from_fn(16, |x, y| (2.0 * std::f64::consts::PI * x).sin() + y).unwrap();
        let ms: f64 = g.values().iter().map(|v| v * v).sum::<f64>() / 256.0;
        assert!((g.l2() - ms.sqrt()).abs() < 1e-13 * g.l2());
        assert!((g.mean() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn rejects_non_power_of_two() {
        assert!(ScalarGrid2D::zeros(12).is_err());
    }

    #[test]
    fn raw_roundtrip() {
        let dir = std::env::temp_dir().join(format!("anomix-raw-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let g = ScalarGrid3D::from_fn(4, 8, |x, y, z| x - y * z).unwrap();
        let p = dir.join("g.raw");
        g.write_raw(&p).unwrap();
        let (dims, data) = read_raw(&p).unwrap();
        assert_eq!(dims, vec![8, 4, 4]);
        assert_eq!(data, g.values());
        std::fs::remove_dir_all(&dir).unwrap();
    }
}
