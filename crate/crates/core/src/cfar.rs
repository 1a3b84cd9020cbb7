//! Two-dimensional CA-CFAR and OS-CFAR over square-law range-velocity maps.
//!
//! The window is a pair of square rings around the cell under test: a guard
//! ring of half-width `g` and a reference ring extending `w` cells further.
//! Velocity indices wrap; range indices are clipped at the map edge.

use std::io::Write;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scene::CfarParams;

/// Square-ring detection window.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WindowGeometry {
    /// Guard half-width.
    pub guard: usize,
    /// Reference ring width beyond the guard ring.
    pub reference: usize,
}

impl WindowGeometry {
    /// Recovers ring widths from cell counts, e.g. (8, 40) gives guard 1 and reference 2.
    pub fn from_counts(guard_cells: usize, reference_cells: usize) -> Result<Self> {
        let guard = (0..=64)
            .find(|&g| (2 * g + 1) * (2 * g + 1) - 1 == guard_cells)
            .ok_or_else(|| {
                Error::invalid(
                    "cfar.guard_cells",
                    format!("{guard_cells} is not (2g+1)^2 - 1 for any ring width g"),
                )
            })?;
        let inner = (2 * guard + 1) * (2 * guard + 1);
        let reference = (1..=64)
            .find(|&w| {
                let side = 2 * (guard + w) + 1;
                side * side - inner == reference_cells
            })
            .ok_or_else(|| {
                Error::invalid(
                    "cfar.reference_cells",
                    format!("{reference_cells} does not fill a square ring around guard width {guard}"),
                )
            })?;
        Ok(WindowGeometry { guard, reference })
    }

    pub fn half_width(&self) -> usize {
        self.guard + self.reference
    }

    pub fn guard_cells(&self) -> usize {
        let side = 2 * self.guard + 1;
        side * side - 1
    }

    pub fn reference_cells(&self) -> usize {
        let outer = 2 * self.half_width() + 1;
        let inner = 2 * self.guard + 1;
        outer * outer - inner * inner
    }

    /// Offsets (range, velocity) of the reference ring.
    pub fn reference_offsets(&self) -> Vec<(isize, isize)> {
        let h = self.half_width() as isize;
        let g = self.guard as isize;
        let mut out = Vec::with_capacity(self.reference_cells());
        for di in -h..=h {
            for dj in -h..=h {
                if di.abs().max(dj.abs()) > g {
                    out.push((di, dj));
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CfarKind {
    Ca,
    Os,
}

/// CA threshold factor for an exponential background.
pub fn ca_threshold_factor(p_fa: f64, n_r: usize) -> Result<f64> {
    check_pfa(p_fa)?;
    if n_r == 0 {
        return Err(Error::invalid("reference_cells", "must be at least 1"));
    }
    let n = n_r as f64;
    Ok(n * (p_fa.powf(-1.0 / n) - 1.0))
}

/// False-alarm probability of OS-CFAR when the k-th strongest of `n_r` cells is the statistic.
pub fn os_false_alarm(alpha: f64, n_r: usize, k: usize) -> f64 {
    let k_os = n_r + 1 - k;
    (0..k_os)
        .map(|i| {
            let a = (n_r - i) as f64;
            a / (a + alpha)
        })
        .product()
}

/// OS threshold factor solved by bisection.
pub fn os_threshold_factor(p_fa: f64, n_r: usize, k: usize) -> Result<f64> {
    check_pfa(p_fa)?;
    if k == 0 || k > n_r {
        return Err(Error::invalid("os_rank", format!("must lie in [1, {n_r}]")));
    }
    let mut lo = 0.0;
    let mut hi = 1.0;
    while os_false_alarm(hi, n_r, k) > p_fa {
        hi *= 2.0;
        if hi > 1e300 {
            return Err(Error::Numerical("OS threshold bracket not found".into()));
        }
    }
    for _ in 0..2000 {
        let mid = 0.5 * (lo + hi);
        if os_false_alarm(mid, n_r, k) > p_fa {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-10 * hi {
            return Ok(0.5 * (lo + hi));
        }
    }
    Err(Error::Numerical("OS threshold bisection did not converge".into()))
}

fn check_pfa(p_fa: f64) -> Result<()> {
    if p_fa > 0.0 && p_fa < 1.0 {
        Ok(())
    } else {
        Err(Error::invalid("false_alarm_rate", "must lie in (0, 1)"))
    }
}

/// Detections of one map.
#[derive(Debug, Clone, PartialEq)]
pub struct DetectionMask {
    pub mask: DMatrix<bool>,
    /// Detected (range_bin, velocity_bin) cells in row-major order.
    pub cells: Vec<(usize, usize)>,
}

impl DetectionMask {
    pub fn empty(range_bins: usize, velocity_bins: usize) -> Self {
        DetectionMask {
            mask: DMatrix::from_element(range_bins, velocity_bins, false),
            cells: Vec::new(),
        }
    }

    pub fn from_cells(range_bins: usize, velocity_bins: usize, cells: Vec<(usize, usize)>) -> Self {
        let mut mask = DMatrix::from_element(range_bins, velocity_bins, false);
        for &(i, j) in &cells {
            mask[(i, j)] = true;
        }
        let mut out = DetectionMask { mask, cells };
        out.cells.sort_unstable();
        out.cells.dedup();
        out
    }

    pub fn count(&self) -> usize {
        self.cells.len()
    }
}

/// CSV rows `scan,range_bin,velocity_bin` for a sequence of per-scan masks.
pub fn write_masks_csv<W: Write>(masks: &[DetectionMask], mut w: W) -> std::io::Result<()> {
    writeln!(w, "scan,range_bin,velocity_bin")?;
    for (k, m) in masks.iter().enumerate() {
        for (i, j) in &m.cells {
            writeln!(w, "{k},{i},{j}")?;
        }
    }
    Ok(())
}

/// Runs CA or OS CFAR on a power map.
pub fn cfar_detect(power: &DMatrix<f64>, params: &CfarParams, kind: CfarKind) -> Result<DetectionMask> {
    let geom = WindowGeometry::from_counts(params.guard_cells, params.reference_cells)?;
    let alpha = match kind {
        CfarKind::Ca => ca_threshold_factor(params.false_alarm_rate, params.reference_cells)?,
        CfarKind::Os => os_threshold_factor(params.false_alarm_rate, params.reference_cells, params.os_rank)?,
    };
    cfar_detect_with(power, &geom, kind, alpha, params.os_rank)
}

/// CFAR with an explicit threshold factor.
pub fn cfar_detect_with(
    power: &DMatrix<f64>,
    geom: &WindowGeometry,
    kind: CfarKind,
    alpha: f64,
    os_rank: usize,
) -> Result<DetectionMask> {
    let (m, n) = power.shape();
    let side = 2 * geom.half_width() + 1;
    if m < side || n < side {
        return Err(Error::Shape(format!(
            "{m}x{n} map is smaller than the {side}x{side} detection window"
        )));
    }
    if power.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("power map contains non-finite values".into()));
    }
    let offsets = geom.reference_offsets();

    let cells: Vec<(usize, usize)> = (0..m)
        .into_par_iter()
        .flat_map_iter(|i| {
            let mut window = Vec::with_capacity(offsets.len());
            let mut hits = Vec::new();
            for j in 0..n {
                window.clear();
                for &(di, dj) in &offsets {
                    let r = i as isize + di;
                    if r < 0 || r >= m as isize {
                        continue;
                    }
                    let v = (j as isize + dj).rem_euclid(n as isize) as usize;
                    window.push(power[(r as usize, v)]);
                }
                let z = match kind {
                    CfarKind::Ca => window.iter().sum::<f64>() / window.len() as f64,
                    CfarKind::Os => {
                        let k = os_rank.clamp(1, window.len());
                        let (_, kth, _) = window.select_nth_unstable_by(k - 1, |a, b| b.total_cmp(a));
                        *kth
                    }
                };
                if power[(i, j)] > alpha * z {
                    hits.push((i, j));
                }
            }
            hits
        })
        .collect();

    let mut mask = DMatrix::from_element(m, n, false);
    for &(i, j) in &cells {
        mask[(i, j)] = true;
    }
    Ok(DetectionMask { mask, cells })
}

/// Additions spent by CA-CFAR on `cuts` cells.
pub fn ca_flops(reference_cells: usize, cuts: usize) -> u64 {
    (reference_cells * cuts) as u64
}

/// Comparisons spent by OS-CFAR on `cuts` cells, counted as N_R log2 N_R each.
pub fn os_flops(reference_cells: usize, cuts: usize) -> u64 {
    let per = reference_cells as f64 * (reference_cells as f64).log2().max(1.0);
    (per.ceil() as u64) * cuts as u64
}
