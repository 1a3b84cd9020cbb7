//! Range-velocity maps and the range-velocity-scan stack.
//!
//! Transforms are unnormalized. The IF samples carry `exp(-j...)` beat and
//! Doppler phases, so the map is the forward 2D FFT of the conjugated,
//! windowed samples: receding reflectors land on positive velocity bins and
//! range bins are non-negative. Only the velocity axis is shifted.

use std::io::Write;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rustfft::FftPlanner;

use crate::error::{Error, Result};
use crate::waveform::IfMatrix;

/// Floor applied to normalized dB exports so empty cells stay finite.
pub const DB_FLOOR: f64 = -300.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Window {
    #[default]
    Hamming,
    Rectangular,
}

impl Window {
    /// Symmetric window coefficients of length `n`.
    pub fn coefficients(self, n: usize) -> Vec<f64> {
        match self {
            Window::Rectangular => vec![1.0; n],
            Window::Hamming if n == 1 => vec![1.0],
            Window::Hamming => {
                let denom = (n - 1) as f64;
                (0..n)
                    .map(|i| 0.54 - 0.46 * (std::f64::consts::TAU * i as f64 / denom).cos())
                    .collect()
            }
        }
    }
}

/// Complex spectrum of one scan: M range bins by N velocity bins, with
/// velocity bin `N / 2` holding zero Doppler.
#[derive(Debug, Clone, PartialEq)]
pub struct RangeVelocityMap {
    pub spectrum: DMatrix<Complex64>,
}

impl RangeVelocityMap {
    pub fn shape(&self) -> (usize, usize) {
        self.spectrum.shape()
    }

    pub fn magnitude(&self) -> DMatrix<f64> {
        self.spectrum.map(|z| z.norm())
    }

    /// Square-law detector input.
    pub fn power(&self) -> DMatrix<f64> {
        self.spectrum.map(|z| z.norm_sqr())
    }
}

/// Hamming-windowed 2D FFT of one IF matrix.
pub fn range_velocity_map(if_matrix: &IfMatrix) -> RangeVelocityMap {
    range_velocity_map_with(if_matrix, Window::Hamming)
}

pub fn range_velocity_map_with(if_matrix: &IfMatrix, window: Window) -> RangeVelocityMap {
    let (m, n) = if_matrix.data.shape();
    let wm = window.coefficients(m);
    let wn = window.coefficients(n);
    let mut planner = FftPlanner::<f64>::new();
    let range_fft = planner.plan_fft_forward(m);
    let doppler_fft = planner.plan_fft_forward(n);

    let mut spec = DMatrix::from_fn(m, n, |i, j| if_matrix.data[(i, j)].conj() * (wm[i] * wn[j]));
    for col in spec.as_mut_slice().chunks_exact_mut(m) {
        range_fft.process(col);
    }
    let shift = n / 2;
    let mut row = vec![Complex64::new(0.0, 0.0); n];
    for i in 0..m {
        for (j, slot) in row.iter_mut().enumerate() {
            *slot = spec[(i, j)];
        }
        doppler_fft.process(&mut row);
        for (k, z) in row.iter().enumerate() {
            spec[(i, (k + shift) % n)] = *z;
        }
    }
    RangeVelocityMap { spectrum: spec }
}

/// Max-normalized magnitude in dB, floored at [`DB_FLOOR`].
pub fn normalized_db(magnitude: &DMatrix<f64>) -> DMatrix<f64> {
    let peak = magnitude.iter().cloned().fold(0.0, f64::max);
    magnitude.map(|a| {
        if peak > 0.0 && a > 0.0 {
            (20.0 * (a / peak).log10()).max(DB_FLOOR)
        } else {
            DB_FLOOR
        }
    })
}

/// CSV rows `range_bin,velocity_bin,magnitude_db_normalized`.
pub fn write_map_csv<W: Write>(magnitude: &DMatrix<f64>, mut w: W) -> std::io::Result<()> {
    let db = normalized_db(magnitude);
    writeln!(w, "range_bin,velocity_bin,magnitude_db_normalized")?;
    for i in 0..db.nrows() {
        for j in 0..db.ncols() {
            writeln!(w, "{i},{j},{:.4}", db[(i, j)])?;
        }
    }
    Ok(())
}

/// Dense grid: u32 rows, u32 columns (little-endian), then row-major f32 values.
pub fn write_grid_f32<W: Write>(grid: &DMatrix<f64>, mut w: W) -> std::io::Result<()> {
    let (m, n) = grid.shape();
    w.write_all(&(m as u32).to_le_bytes())?;
    w.write_all(&(n as u32).to_le_bytes())?;
    let mut row = Vec::with_capacity(4 * n);
    for i in 0..m {
        row.clear();
        for j in 0..n {
            row.extend_from_slice(&(grid[(i, j)] as f32).to_le_bytes());
        }
        w.write_all(&row)?;
    }
    Ok(())
}

/// K magnitude maps flattened column-major into the columns of an (M*N) x K matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct RvsMatrix {
    pub data: DMatrix<f64>,
    pub range_bins: usize,
    pub velocity_bins: usize,
}

impl RvsMatrix {
    pub fn scans(&self) -> usize {
        self.data.ncols()
    }

    pub fn map_shape(&self) -> (usize, usize) {
        (self.range_bins, self.velocity_bins)
    }
}

/// Stacks the magnitudes of `maps`.
pub fn stack_scans(maps: &[RangeVelocityMap]) -> Result<RvsMatrix> {
    let mags: Vec<DMatrix<f64>> = maps.iter().map(RangeVelocityMap::magnitude).collect();
    stack_magnitudes(&mags)
}

/// Stacks real maps; column k is map k in column-major order.
pub fn stack_magnitudes(maps: &[DMatrix<f64>]) -> Result<RvsMatrix> {
    let first = maps
        .first()
        .ok_or_else(|| Error::Shape("no maps to stack".into()))?;
    let (m, n) = first.shape();
    if let Some((k, bad)) = maps.iter().enumerate().find(|(_, x)| x.shape() != (m, n)) {
        return Err(Error::Shape(format!(
            "map {k} is {}x{}, expected {m}x{n}",
            bad.nrows(),
            bad.ncols()
        )));
    }
    let mut data = DMatrix::zeros(m * n, maps.len());
    for (k, map) in maps.iter().enumerate() {
        data.column_mut(k).copy_from_slice(map.as_slice());
    }
    Ok(RvsMatrix {
        data,
        range_bins: m,
        velocity_bins: n,
    })
}

/// Inverse of [`stack_magnitudes`]: splits each column back into an M x N map.
pub fn unstack(matrix: &DMatrix<f64>, range_bins: usize, velocity_bins: usize) -> Result<Vec<DMatrix<f64>>> {
    let cells = range_bins * velocity_bins;
    if cells == 0 || matrix.nrows() != cells {
        return Err(Error::Shape(format!(
            "{} rows cannot be reshaped into {range_bins}x{velocity_bins} maps",
            matrix.nrows()
        )));
    }
    Ok(matrix
        .column_iter()
        .map(|col| DMatrix::from_column_slice(range_bins, velocity_bins, col.as_slice()))
        .collect())
}
