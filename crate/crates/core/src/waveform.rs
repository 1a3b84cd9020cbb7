//! Sampled IF matrices: deterministic reflector beat tones plus receiver noise.
//!
//! Samples follow the dechirped phase law
//! `exp(-j2pi(f0*tau + mu*tau*t - mu*tau^2/2))` with `t` the time since the
//! start of the current chirp. The delay is held constant over each chirp and
//! advances from chirp to chirp with the reflector's motion.

use std::f64::consts::TAU;
use std::io::{Read, Write};

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::rdmap::Window;
use crate::scene::{received_power, RadarParams, Scenario, SceneObject, SPEED_OF_LIGHT};

/// One scan of complex baseband IF samples: M fast-time rows by N chirp columns.
#[derive(Debug, Clone, PartialEq)]
pub struct IfMatrix {
    pub data: DMatrix<Complex64>,
    pub scan_index: usize,
}

impl IfMatrix {
    pub fn zeros(samples: usize, chirps: usize, scan_index: usize) -> Self {
        IfMatrix {
            data: DMatrix::zeros(samples, chirps),
            scan_index,
        }
    }

    pub fn samples(&self) -> usize {
        self.data.nrows()
    }

    pub fn chirps(&self) -> usize {
        self.data.ncols()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }

    /// Writes the 8-byte header (M, N as little-endian u32) followed by the
    /// samples row by row as interleaved little-endian f32 pairs.
    pub fn write_to<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        let (m, n) = self.data.shape();
        w.write_all(&(m as u32).to_le_bytes())?;
        w.write_all(&(n as u32).to_le_bytes())?;
        let mut row = Vec::with_capacity(n * 8);
        for i in 0..m {
            row.clear();
            for j in 0..n {
                let z = self.data[(i, j)];
                row.extend_from_slice(&(z.re as f32).to_le_bytes());
                row.extend_from_slice(&(z.im as f32).to_le_bytes());
            }
            w.write_all(&row)?;
        }
        Ok(())
    }

    /// Reads the format produced by [`IfMatrix::write_to`]. Precision is f32.
    pub fn read_from<R: Read>(mut r: R, scan_index: usize) -> std::io::Result<Self> {
        let mut header = [0u8; 8];
        r.read_exact(&mut header)?;
        let m = u32::from_le_bytes(header[..4].try_into().unwrap()) as usize;
        let n = u32::from_le_bytes(header[4..].try_into().unwrap()) as usize;
        let mut bytes = vec![0u8; m * n * 8];
        r.read_exact(&mut bytes)?;
        let f = |k: usize| f32::from_le_bytes(bytes[4 * k..4 * k + 4].try_into().unwrap()) as f64;
        let data = DMatrix::from_fn(m, n, |i, j| {
            let k = 2 * (i * n + j);
            Complex64::new(f(k), f(k + 1))
        });
        Ok(IfMatrix { data, scan_index })
    }

    pub fn save(&self, path: impl AsRef<std::path::Path>) -> Result<()> {
        let path = path.as_ref();
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_to(std::io::BufWriter::new(file))
            .map_err(|e| Error::io(path, e))
    }
}

/// Round-trip delay of `obj` at time `t` into scan `scan_index`.
pub fn propagation_delay(obj: &SceneObject, t: f64, scan_index: usize, scan_interval: f64) -> f64 {
    let range = obj.range_at_scan(scan_index, scan_interval);
    2.0 * (range + obj.radial_velocity_mps * t) / SPEED_OF_LIGHT
}

/// IF amplitude of a reflector: transmit amplitude times the received field strength.
pub fn if_amplitude(radar: &RadarParams, obj: &SceneObject) -> Result<f64> {
    Ok(radar.tx_amplitude * received_power(radar, obj)?.sqrt())
}

/// Ideal peak-to-median-noise ratio (dB) of `obj` in a Hamming-windowed map:
/// on-bin coherent gain over noise gain, with the median of exponential
/// noise power at ln 2 of its mean. `None` when the noise is switched off.
pub fn expected_map_contrast_db(radar: &RadarParams, obj: &SceneObject) -> Result<Option<f64>> {
    let noise = radar.noise_power();
    if noise <= 0.0 {
        return Ok(None);
    }
    let gain = |n: usize| {
        let w = Window::Hamming.coefficients(n);
        let sum: f64 = w.iter().sum();
        sum * sum / w.iter().map(|x| x * x).sum::<f64>()
    };
    let signal = if_amplitude(radar, obj)?.powi(2);
    let ratio = signal / noise * gain(radar.samples_per_chirp) * gain(radar.chirps_per_scan) / std::f64::consts::LN_2;
    Ok(Some(10.0 * ratio.log10()))
}

/// Transmit amplitude that places `obj` at `contrast_db` above the median noise floor.
pub fn tx_amplitude_for_contrast(radar: &RadarParams, obj: &SceneObject, contrast_db: f64) -> Result<f64> {
    let unit = RadarParams {
        tx_amplitude: 1.0,
        ..radar.clone()
    };
    let at_unit = expected_map_contrast_db(&unit, obj)?
        .ok_or_else(|| Error::invalid("radar.noise_psd_dbm_hz", "calibration needs a noise floor"))?;
    Ok(10f64.powf((contrast_db - at_unit) / 20.0))
}

/// Phase in cycles of the dechirped tone at fast-time offset `t_fast` for delay `tau`.
fn if_phase_cycles(radar: &RadarParams, tau: f64, t_fast: f64) -> f64 {
    let mu = radar.slope();
    radar.carrier_hz * tau + mu * tau * t_fast - 0.5 * mu * tau * tau
}

/// Noise-free IF sample of one reflector at fast-time index `m`, chirp `n`.
pub fn object_if_sample(
    obj: &SceneObject,
    radar: &RadarParams,
    m: usize,
    n: usize,
    scan_index: usize,
) -> Result<Complex64> {
    let amp = if_amplitude(radar, obj)?;
    let tc = radar.chirp_interval_s;
    let t_fast = m as f64 * tc / radar.samples_per_chirp as f64;
    let tau = propagation_delay(obj, n as f64 * tc, scan_index, radar.scan_interval_s);
    let phase = if_phase_cycles(radar, tau, t_fast).rem_euclid(1.0);
    Ok(Complex64::from_polar(amp, -TAU * phase))
}

/// Adds the echo of `obj` for scan `scan_index` into `out`.
fn accumulate_echo(out: &mut IfMatrix, radar: &RadarParams, obj: &SceneObject) -> Result<()> {
    let amp = if_amplitude(radar, obj)?;
    let m_len = radar.samples_per_chirp;
    let tc = radar.chirp_interval_s;
    let dt = tc / m_len as f64;
    let mu = radar.slope();
    let scan = out.scan_index;
    for (n, column) in out.data.column_iter_mut().enumerate() {
        let tau = propagation_delay(obj, n as f64 * tc, scan, radar.scan_interval_s);
        // phase is affine in m; reduce the large constant part first
        let base = if_phase_cycles(radar, tau, 0.0).rem_euclid(1.0);
        let step = mu * tau * dt;
        for (m, z) in column.into_iter().enumerate() {
            let phase = (base + m as f64 * step).rem_euclid(1.0);
            *z += Complex64::from_polar(amp, -TAU * phase);
        }
    }
    Ok(())
}

/// Echoes of every reflector plus complex AWGN for one scan. Clutter is
/// added separately by [`crate::clutter::inject_clutter`].
pub fn synthesize_scan<R: Rng + ?Sized>(
    scenario: &Scenario,
    scan_index: usize,
    rng: &mut R,
) -> Result<IfMatrix> {
    let radar = &scenario.radar;
    let mut out = IfMatrix::zeros(radar.samples_per_chirp, radar.chirps_per_scan, scan_index);
    for obj in &scenario.objects {
        accumulate_echo(&mut out, radar, obj)?;
    }
    add_noise(&mut out, radar.noise_power(), rng);
    Ok(out)
}

/// Adds circular complex Gaussian noise of total power `power` per sample.
pub fn add_noise<R: Rng + ?Sized>(out: &mut IfMatrix, power: f64, rng: &mut R) {
    if power <= 0.0 {
        return;
    }
    let sigma = (power / 2.0).sqrt();
    for z in out.data.iter_mut() {
        let re: f64 = StandardNormal.sample(rng);
        let im: f64 = StandardNormal.sample(rng);
        *z += Complex64::new(sigma * re, sigma * im);
    }
}
