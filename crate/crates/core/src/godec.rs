//! GoDec low-rank plus sparse decomposition with bilateral random projections.
//!
//! The power-scheme operator `[(Z Z^T)^zeta] Z`, with `Z = X - S`, is only ever
//! applied to thin blocks, so the (MN)x(MN) Gram matrix is never formed.

use std::io::Write;

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::rdmap::RvsMatrix;
use crate::scene::GodecParams;

const SINGULAR_RETRIES: usize = 3;

/// Settings of one decomposition with the cardinality bound already resolved.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GodecConfig {
    pub rank: usize,
    pub power: usize,
    /// Maximum number of nonzeros in the sparse part.
    pub cardinality: usize,
    pub error_bound: f64,
    pub delta: f64,
    pub iter_max: usize,
}

impl GodecConfig {
    pub fn from_params(params: &GodecParams, chirps: usize, scans: usize) -> Self {
        GodecConfig {
            rank: params.rank_bound,
            power: params.power_exponent,
            cardinality: params.sparsity(chirps, scans),
            error_bound: params.error_bound,
            delta: params.delta,
            iter_max: params.iter_max,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GodecResult {
    pub low_rank: DMatrix<f64>,
    pub sparse: DMatrix<f64>,
    pub iter_cov: usize,
    /// Relative Frobenius error of the last iterate.
    pub epsilon: f64,
    /// Error after each iteration, starting at t = 1.
    pub trace: Vec<f64>,
}

impl GodecResult {
    pub fn sparse_nonzeros(&self) -> usize {
        self.sparse.iter().filter(|v| **v != 0.0).count()
    }
}

/// Decomposes a range-velocity-scan stack with the cardinality bound n_mov * N * K.
pub fn godec_decompose<R: Rng + ?Sized>(x: &RvsMatrix, params: &GodecParams, rng: &mut R) -> Result<GodecResult> {
    params.validate_basic()?;
    if params.rank_bound > x.scans() {
        return Err(Error::invalid("godec.rank_bound", "cannot exceed the number of scans"));
    }
    let cfg = GodecConfig::from_params(params, x.velocity_bins, x.scans());
    godec(&x.data, &cfg, rng)
}

pub fn godec<R: Rng + ?Sized>(x: &DMatrix<f64>, cfg: &GodecConfig, rng: &mut R) -> Result<GodecResult> {
    godec_observed(x, cfg, rng, |_, _, _| {})
}

/// Like [`godec`], calling `observe(t, L_t, S_t)` after every iteration.
pub fn godec_observed<R, F>(x: &DMatrix<f64>, cfg: &GodecConfig, rng: &mut R, mut observe: F) -> Result<GodecResult>
where
    R: Rng + ?Sized,
    F: FnMut(usize, &DMatrix<f64>, &DMatrix<f64>),
{
    let (rows, cols) = x.shape();
    if cfg.rank == 0 || cfg.rank > cols.min(rows) {
        return Err(Error::invalid("rank", format!("must lie in [1, {}]", cols.min(rows))));
    }
    if cfg.iter_max == 0 {
        return Err(Error::invalid("iter_max", "must be at least 1"));
    }
    if cfg.cardinality > rows * cols {
        return Err(Error::invalid("cardinality", "exceeds the number of entries"));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("input contains non-finite values".into()));
    }
    let norm = x.norm();
    if norm == 0.0 {
        return Err(Error::Numerical("input has zero Frobenius norm".into()));
    }
    let xs = x / norm;

    let mut sparse: Vec<(usize, f64)> = Vec::new();
    let mut trace = Vec::new();
    let mut low;
    let mut s_dense = DMatrix::zeros(rows, cols);
    let mut t = 1;
    loop {
        let mut z = xs.clone();
        for &(idx, v) in &sparse {
            z.as_mut_slice()[idx] -= v;
        }
        low = brp_low_rank(&z, cfg.rank, cfg.power, rng)?;
        let residual = &xs - &low;
        sparse = top_entries(residual.as_slice(), cfg.cardinality);
        s_dense.fill(0.0);
        for &(idx, v) in &sparse {
            s_dense.as_mut_slice()[idx] = v;
        }
        let mut err = residual;
        for &(idx, _) in &sparse {
            err.as_mut_slice()[idx] = 0.0;
        }
        let eps = err.norm();
        trace.push(eps);
        observe(t, &low, &s_dense);
        t += 1;

        let converged = eps < cfg.error_bound;
        let stalled = trace.len() >= 2 && (trace[trace.len() - 2] - eps).abs() < cfg.delta;
        if converged || stalled || t > cfg.iter_max {
            break;
        }
    }

    Ok(GodecResult {
        low_rank: low * norm,
        sparse: s_dense * norm,
        iter_cov: t - 1,
        epsilon: *trace.last().expect("at least one iteration"),
        trace,
    })
}

/// Applies `(Z Z^T)^power Z` to a K-column block.
fn apply_op(z: &DMatrix<f64>, a: &DMatrix<f64>, power: usize) -> DMatrix<f64> {
    let mut y = z * a;
    for _ in 0..power {
        y = z * z.tr_mul(&y);
    }
    y
}

/// Applies `Z^T (Z Z^T)^power` to an MN-row block.
fn apply_op_t(z: &DMatrix<f64>, b: &DMatrix<f64>, power: usize) -> DMatrix<f64> {
    let mut w = b.clone();
    for _ in 0..power {
        w = z * z.tr_mul(&w);
    }
    z.tr_mul(&w)
}

/// Rank-`rank` approximation of `z` from bilateral random projections with a power scheme.
pub fn brp_low_rank<R: Rng + ?Sized>(z: &DMatrix<f64>, rank: usize, power: usize, rng: &mut R) -> Result<DMatrix<f64>> {
    let (rows, cols) = z.shape();
    if z.norm() == 0.0 {
        return Ok(DMatrix::zeros(rows, cols));
    }
    for _ in 0..=SINGULAR_RETRIES {
        let a1 = DMatrix::from_fn(cols, rank, |_, _| rng.sample::<f64, _>(StandardNormal));
        let y1 = apply_op(z, &a1, power);
        let a2 = y1.clone();
        let y2 = apply_op_t(z, &y1, power);
        let y1 = apply_op(z, &y2, power);

        let gram = a2.tr_mul(&y1);
        let Some(gram_inv) = invert_checked(&gram) else {
            continue;
        };
        let qr2 = y2.qr();
        let qr1 = y1.qr();
        let (q1, r1) = (qr1.q(), qr1.r());
        let (q2, r2) = (qr2.q(), qr2.r());
        let inner = &r1 * gram_inv * r2.transpose();
        let root = 1.0 / (2 * power + 1) as f64;

        let out = if rank == 1 {
            let c = inner[(0, 0)];
            let c_root = c.signum() * c.abs().powf(root);
            (&q1 * c_root) * q2.transpose()
        } else {
            let svd = inner.svd(true, true);
            let u = svd.u.expect("u requested");
            let v_t = svd.v_t.expect("v_t requested");
            let sigma = DMatrix::from_diagonal(&svd.singular_values.map(|s| s.powf(root)));
            (&q1 * u) * sigma * (v_t * q2.transpose())
        };
        if out.iter().all(|v| v.is_finite()) {
            return Ok(out);
        }
    }
    Err(Error::Numerical(format!(
        "projection Gram matrix stayed singular after {SINGULAR_RETRIES} redraws"
    )))
}

fn invert_checked(m: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    let scale = m.amax();
    if !(scale.is_finite() && scale > 0.0) {
        return None;
    }
    let svd = m.clone().svd(false, false);
    let smin = svd.singular_values.min();
    let smax = svd.singular_values.max();
    if smin <= smax * 1e-13 {
        return None;
    }
    m.clone().try_inverse()
}

/// (column-major index, value) of the `s` largest-magnitude entries; ties go to the smaller index.
fn top_entries(values: &[f64], s: usize) -> Vec<(usize, f64)> {
    if s == 0 {
        return Vec::new();
    }
    let mut idx: Vec<usize> = (0..values.len()).collect();
    if s < idx.len() {
        let cmp = |a: &usize, b: &usize| {
            values[*b]
                .abs()
                .total_cmp(&values[*a].abs())
                .then(a.cmp(b))
        };
        idx.select_nth_unstable_by(s - 1, cmp);
        idx.truncate(s);
    }
    idx.sort_unstable();
    idx.into_iter().map(|i| (i, values[i])).collect()
}

/// Keeps the `s` largest-magnitude entries of `residual` and zeroes the rest.
pub fn sparse_project(residual: &DMatrix<f64>, s: usize) -> Result<DMatrix<f64>> {
    if s > residual.len() {
        return Err(Error::invalid(
            "cardinality",
            format!("{s} exceeds the {} entries of the matrix", residual.len()),
        ));
    }
    let mut out = DMatrix::zeros(residual.nrows(), residual.ncols());
    for (i, v) in top_entries(residual.as_slice(), s) {
        out.as_mut_slice()[i] = v;
    }
    Ok(out)
}

/// `||X - L - S||_F / ||X||_F`.
pub fn decomposition_error(x: &DMatrix<f64>, l: &DMatrix<f64>, s: &DMatrix<f64>) -> Result<f64> {
    if x.shape() != l.shape() || x.shape() != s.shape() {
        return Err(Error::Shape("X, L and S must share one shape".into()));
    }
    let norm = x.norm();
    if norm == 0.0 {
        return Err(Error::Numerical("X has zero Frobenius norm".into()));
    }
    Ok((x - l - s).norm() / norm)
}

/// Closed-form operation count `[r^2(MN + 3K + 4r) + 4(zeta+1)MNKr](iter_cov + 1)`.
pub fn godec_flops(m: usize, n: usize, k: usize, r: usize, zeta: usize, iter_cov: usize) -> u64 {
    let (m, n, k, r, zeta, it) = (m as u64, n as u64, k as u64, r as u64, zeta as u64, iter_cov as u64);
    (r * r * (m * n + 3 * k + 4 * r) + 4 * (zeta + 1) * m * n * k * r) * (it + 1)
}

/// CSV rows `t,epsilon`.
pub fn write_trace_csv<W: Write>(trace: &[f64], mut w: W) -> std::io::Result<()> {
    writeln!(w, "t,epsilon")?;
    for (t, e) in trace.iter().enumerate() {
        writeln!(w, "{},{e:.9e}", t + 1)?;
    }
    Ok(())
}
