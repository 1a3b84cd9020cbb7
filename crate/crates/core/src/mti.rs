//! Single delay-line canceller applied across adjacent chirps.

use crate::error::{Error, Result};
use crate::waveform::IfMatrix;

/// Column n of the output is chirp n+1 minus chirp n; the result is M x (N-1).
pub fn single_delay_cancel(if_matrix: &IfMatrix) -> Result<IfMatrix> {
    let (m, n) = if_matrix.data.shape();
    if n < 2 {
        return Err(Error::Shape(format!(
            "delay-line cancellation needs at least 2 chirps, got {n}"
        )));
    }
    let x = &if_matrix.data;
    let data = x.columns(1, n - 1) - x.columns(0, n - 1);
    debug_assert_eq!(data.shape(), (m, n - 1));
    Ok(IfMatrix {
        data,
        scan_index: if_matrix.scan_index,
    })
}

/// Subtractions performed by [`single_delay_cancel`].
pub fn mti_flops(samples: usize, chirps: usize) -> u64 {
    (chirps.saturating_sub(1) * samples) as u64
}

/// Magnitude response `(2|sin(pi f / f_r)|)^order` of a single or double canceller.
pub fn canceller_response(f_over_fr: f64, order: u32) -> Result<f64> {
    if !(order == 1 || order == 2) {
        return Err(Error::invalid("order", "canceller order must be 1 or 2"));
    }
    Ok((2.0 * (std::f64::consts::PI * f_over_fr).sin().abs()).powi(order as i32))
}
