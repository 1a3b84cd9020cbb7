//! Coherent correlated Weibull clutter.
//!
//! Two independent white Gaussian channels are spectrally shaped by
//! `H(f) = sqrt(S(f))`, then pushed through the zero-memory nonlinearity
//! `u + jv = (x + jy) * (x^2 + y^2)^(1/p - 1/2)`, which turns the Rayleigh
//! envelope of the Gaussian pair into a Weibull(p, q) envelope while keeping
//! its phase. Clutter is laid down per range bin along slow time and then
//! mapped back to fast time so that the range FFT returns it to its bin.

use std::f64::consts::LN_2;
use std::io::Write;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::gamma;

use crate::error::{Error, Result};
use crate::rng::{Stream, Substreams};
use crate::scene::{received_power, ClutterReference, PsdModel, Scenario};
use crate::waveform::IfMatrix;

/// Weibull amplitude law and Doppler spectrum of the clutter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeibullSpec {
    pub p: f64,
    pub q: f64,
    /// Median amplitude q (ln 2)^(1/p).
    pub w_m: f64,
    /// Average power w_m^2 Gamma(1 + 2/p) / (ln 2)^(2/p).
    pub c0: f64,
    /// Half-power Doppler width.
    pub f_3db: f64,
    pub psd_model: PsdModel,
    pub gamma: f64,
}

impl WeibullSpec {
    pub fn new(p: f64, q: f64, f_3db: f64, psd_model: PsdModel, gamma_exp: f64) -> Result<Self> {
        if !(p > 0.0 && p.is_finite()) {
            return Err(Error::invalid("p", "shape must be positive"));
        }
        if !(q > 0.0 && q.is_finite()) {
            return Err(Error::invalid("q", "scale must be positive"));
        }
        if !(f_3db > 0.0 && f_3db.is_finite()) {
            return Err(Error::invalid("f_3db", "spectral width must be positive"));
        }
        let w_m = median_amplitude(p, q);
        Ok(WeibullSpec {
            p,
            q,
            w_m,
            c0: average_power(p, w_m),
            f_3db,
            psd_model,
            gamma: gamma_exp,
        })
    }

    /// Spec of the scenario's clutter; the width is 3% of the wind Doppler.
    pub fn from_scenario(scenario: &Scenario) -> Result<Self> {
        let c = &scenario.clutter;
        let f_3db = wind_3db_width(c.wind_velocity_mps, scenario.radar.wavelength());
        WeibullSpec::new(c.shape_p, c.scale_q, f_3db, c.psd_model, c.allpole_exponent)
    }
}

/// Half-power spectral width from the mean radial wind speed.
pub fn wind_3db_width(wind_velocity_mps: f64, wavelength: f64) -> f64 {
    2.0 * wind_velocity_mps / wavelength * 0.03
}

/// Median of a Weibull(p, q) amplitude.
pub fn median_amplitude(p: f64, q: f64) -> f64 {
    q * LN_2.powf(1.0 / p)
}

/// Mean power of a Weibull amplitude with shape `p` and median `w_m`.
pub fn average_power(p: f64, w_m: f64) -> f64 {
    w_m * w_m * gamma(1.0 + 2.0 / p) / LN_2.powf(2.0 / p)
}

/// Clutter power spectral density at Doppler frequency `f`.
pub fn psd_value(f: f64, spec: &WeibullSpec) -> f64 {
    let x = f / spec.f_3db;
    match spec.psd_model {
        PsdModel::Gaussian => spec.c0 * (-0.5 * x * x).exp(),
        PsdModel::Exponential => spec.c0 * (-x.abs()).exp(),
        PsdModel::AllPole => spec.c0 / (1.0 + x.abs().powf(spec.gamma)),
    }
}

/// Signed frequency of FFT bin `k` on an `len`-point grid at rate `rate`.
fn bin_frequency(k: usize, len: usize, rate: f64) -> f64 {
    let k = k as f64;
    let len_f = len as f64;
    if k <= len_f / 2.0 {
        k * rate / len_f
    } else {
        (k - len_f) * rate / len_f
    }
}

/// Frequency-domain shaping filter sampled on the `len`-point Doppler grid.
fn shaping_filter(len: usize, spec: &WeibullSpec, prf: f64) -> Vec<f64> {
    (0..len)
        .map(|k| psd_value(bin_frequency(k, len, prf), spec).sqrt())
        .collect()
}

/// Reusable generator for sequences of one length; holds the FFT plans and filter.
pub struct WeibullGenerator {
    spec: WeibullSpec,
    filter: Vec<f64>,
    fwd: std::sync::Arc<dyn Fft<f64>>,
    inv: std::sync::Arc<dyn Fft<f64>>,
    gain: f64,
}

impl WeibullGenerator {
    pub fn new(length: usize, spec: &WeibullSpec, prf: f64) -> Result<Self> {
        if length < 2 {
            return Err(Error::invalid("length", "need at least 2 samples"));
        }
        if !(prf > 0.0) || spec.f_3db >= prf / 2.0 {
            return Err(Error::invalid(
                "f_3db",
                format!(
                    "half-power width {} Hz must lie below prf/2 = {} Hz",
                    spec.f_3db,
                    prf / 2.0
                ),
            ));
        }
        let filter = shaping_filter(length, spec, prf);
        let mean_sq = filter.iter().map(|h| h * h).sum::<f64>() / length as f64;
        if !(mean_sq > 0.0) {
            return Err(Error::Numerical("shaping filter has no energy".into()));
        }
        let mut planner = FftPlanner::new();
        // white input has power 2 per complex sample; shaped power is 2 * mean|H|^2
        // (forward and inverse unnormalized, so divide by length once).
        // Target Gaussian power q^p gives Weibull(p, q) after the nonlinearity.
        let gain = (spec.q.powf(spec.p) / (2.0 * mean_sq)).sqrt() / length as f64;
        Ok(WeibullGenerator {
            spec: spec.clone(),
            filter,
            fwd: planner.plan_fft_forward(length),
            inv: planner.plan_fft_inverse(length),
            gain,
        })
    }

    pub fn len(&self) -> usize {
        self.filter.len()
    }

    pub fn is_empty(&self) -> bool {
        self.filter.is_empty()
    }

    /// Correlated complex Gaussian sequence with power q^p (before the nonlinearity).
    pub fn gaussian<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<Complex64> {
        let mut buf: Vec<Complex64> = (0..self.len())
            .map(|_| {
                let x: f64 = StandardNormal.sample(rng);
                let y: f64 = StandardNormal.sample(rng);
                Complex64::new(x, y)
            })
            .collect();
        self.fwd.process(&mut buf);
        for (z, h) in buf.iter_mut().zip(&self.filter) {
            *z *= *h;
        }
        self.inv.process(&mut buf);
        for z in buf.iter_mut() {
            *z *= self.gain;
        }
        buf
    }

    /// One coherent Weibull sequence with mean power C0.
    pub fn generate<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<Complex64> {
        let mut seq = self.gaussian(rng);
        zmnl_in_place(&mut seq, self.spec.p);
        seq
    }
}

/// Zero-memory nonlinearity mapping a Rayleigh envelope to a Weibull(p) envelope.
pub fn zmnl_in_place(seq: &mut [Complex64], p: f64) {
    let exponent = 1.0 / p - 0.5;
    for z in seq.iter_mut() {
        let r2 = z.norm_sqr();
        if r2 > 0.0 {
            *z *= r2.powf(exponent);
        }
    }
}

/// Generates `length` samples of coherent Weibull clutter at pulse rate `prf`.
pub fn generate_coherent_weibull<R: Rng + ?Sized>(
    length: usize,
    spec: &WeibullSpec,
    prf: f64,
    rng: &mut R,
) -> Result<Vec<Complex64>> {
    Ok(WeibullGenerator::new(length, spec, prf)?.generate(rng))
}

/// Clutter matrix in the range-bin x slow-time domain for one scan, scaled to
/// `power` per sample. Each range bin draws from its own substream.
pub fn clutter_map(
    scenario: &Scenario,
    scan_index: usize,
    power: f64,
    streams: &Substreams,
) -> Result<Vec<Vec<Complex64>>> {
    let radar = &scenario.radar;
    let spec = WeibullSpec::from_scenario(scenario)?;
    let generator = WeibullGenerator::new(radar.chirps_per_scan, &spec, radar.prf())?;
    let scale = (power / spec.c0).sqrt();
    Ok((0..radar.samples_per_chirp)
        .into_par_iter()
        .map(|bin| {
            let mut rng = streams.rng(Stream::Clutter {
                scan: scan_index,
                bin,
            });
            let mut seq = generator.generate(&mut rng);
            for z in seq.iter_mut() {
                *z *= scale;
            }
            seq
        })
        .collect())
}

/// Mean of `S(f) / S(0)` over the `len`-point Doppler grid at `rate`.
pub fn spectral_fill(spec: &WeibullSpec, len: usize, rate: f64) -> f64 {
    let peak = psd_value(0.0, spec);
    (0..len)
        .map(|k| psd_value(bin_frequency(k, len, rate), spec) / peak)
        .sum::<f64>()
        / len as f64
}

/// Per-sample clutter power implied by the clutter coefficient, relative to
/// the target's per-sample echo power at its initial range.
pub fn clutter_power(scenario: &Scenario) -> Result<f64> {
    let xi = scenario.clutter.clutter_power_coeff;
    if xi == 0.0 {
        return Ok(0.0);
    }
    let target = scenario.target().ok_or_else(|| {
        Error::invalid(
            "objects",
            "clutter power is referenced to the target echo, but the scene has no target",
        )
    })?;
    let amp2 = scenario.radar.tx_amplitude.powi(2);
    let reference = xi * amp2 * received_power(&scenario.radar, target)?;
    Ok(match scenario.clutter.reference {
        ClutterReference::MeanPower => reference,
        ClutterReference::SpectralPeak => {
            let radar = &scenario.radar;
            let spec = WeibullSpec::from_scenario(scenario)?;
            reference * spectral_fill(&spec, radar.chirps_per_scan, radar.prf())
        }
    })
}

/// Adds Weibull clutter to one scan. The clutter is generated per range bin
/// along slow time and carried to fast time by a unitary inverse DFT over
/// range (conjugated, to match the map's range transform).
pub fn inject_clutter(
    mut if_matrix: IfMatrix,
    scenario: &Scenario,
    streams: &Substreams,
) -> Result<IfMatrix> {
    let power = clutter_power(scenario)?;
    if power == 0.0 {
        return Ok(if_matrix);
    }
    let (m, n) = if_matrix.data.shape();
    if m != scenario.radar.samples_per_chirp || n != scenario.radar.chirps_per_scan {
        return Err(Error::Shape(format!(
            "IF matrix is {m}x{n}, scenario expects {}x{}",
            scenario.radar.samples_per_chirp, scenario.radar.chirps_per_scan
        )));
    }
    let bins = clutter_map(scenario, if_matrix.scan_index, power, streams)?;
    let inv = FftPlanner::new().plan_fft_inverse(m);
    let norm = 1.0 / (m as f64).sqrt();
    let mut column = vec![Complex64::new(0.0, 0.0); m];
    for (j, mut out) in if_matrix.data.column_iter_mut().enumerate() {
        for (b, slot) in column.iter_mut().enumerate() {
            *slot = bins[b][j];
        }
        inv.process(&mut column);
        for (z, c) in out.iter_mut().zip(&column) {
            *z += (c * norm).conj();
        }
    }
    Ok(if_matrix)
}

/// Goodness of fit of generated clutter against its nominal model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub model: String,
    /// Kolmogorov-Smirnov distance of |samples| to Weibull(p, fitted scale).
    pub ks_stat: f64,
    /// Fitted Weibull scale (maximum likelihood with p held fixed).
    pub fitted_scale: f64,
    /// Sample median of |samples|.
    pub median_amplitude: f64,
    /// RMS difference in dB between the averaged periodogram and S(f) over
    /// |f| <= 10 f_3db, after removing the best constant dB offset.
    pub psd_rms_db: f64,
    pub n_samples: usize,
}

impl FitReport {
    pub const CSV_HEADER: &'static str = "model,ks_stat,psd_rms_db,n_samples";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{}",
            self.model, self.ks_stat, self.psd_rms_db, self.n_samples
        )
    }

    pub fn write_csv<W: Write>(reports: &[FitReport], mut w: W) -> std::io::Result<()> {
        writeln!(w, "{}", Self::CSV_HEADER)?;
        for r in reports {
            writeln!(w, "{}", r.csv_row())?;
        }
        Ok(())
    }
}

/// Minimum sample count accepted by [`validate_distribution`].
pub const MIN_FIT_SAMPLES: usize = 10_000;

/// Segment length of the averaged periodogram used for the PSD comparison.
pub const PSD_SEGMENT: usize = 4096;

/// Checks the amplitude law (KS) and Doppler spectrum (averaged periodogram)
/// of `samples` drawn at pulse rate `prf`.
pub fn validate_distribution(samples: &[Complex64], spec: &WeibullSpec, prf: f64) -> Result<FitReport> {
    if samples.len() < MIN_FIT_SAMPLES {
        return Err(Error::invalid(
            "samples",
            format!("need at least {MIN_FIT_SAMPLES} samples, got {}", samples.len()),
        ));
    }
    let mut amps: Vec<f64> = samples.iter().map(|z| z.norm()).collect();
    amps.sort_by(f64::total_cmp);
    let n = amps.len();
    let p = spec.p;
    let fitted_scale = (amps.iter().map(|a| a.powf(p)).sum::<f64>() / n as f64).powf(1.0 / p);
    let ks_stat = ks_statistic(&amps, |a| 1.0 - (-(a / fitted_scale).powf(p)).exp());
    let median = if n % 2 == 1 {
        amps[n / 2]
    } else {
        0.5 * (amps[n / 2 - 1] + amps[n / 2])
    };

    let psd = averaged_periodogram(samples, PSD_SEGMENT.min(n));
    let seg = psd.len();
    let mut diffs = Vec::new();
    for (k, &pk) in psd.iter().enumerate() {
        let f = bin_frequency(k, seg, prf);
        if f.abs() <= 10.0 * spec.f_3db && pk > 0.0 {
            diffs.push(10.0 * (pk / psd_value(f, spec)).log10());
        }
    }
    if diffs.is_empty() {
        return Err(Error::Numerical("no periodogram bins inside the fit band".into()));
    }
    let offset = diffs.iter().sum::<f64>() / diffs.len() as f64;
    let psd_rms_db =
        (diffs.iter().map(|d| (d - offset).powi(2)).sum::<f64>() / diffs.len() as f64).sqrt();

    Ok(FitReport {
        model: format!("{:?}", spec.psd_model).to_lowercase(),
        ks_stat,
        fitted_scale,
        median_amplitude: median,
        psd_rms_db,
        n_samples: n,
    })
}

/// Two-sided KS distance of sorted data to a continuous CDF.
fn ks_statistic(sorted: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let n = sorted.len() as f64;
    sorted
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
        })
        .fold(0.0, f64::max)
}

/// Welch estimate: Hann-windowed segments with 50% overlap, in FFT bin order.
fn averaged_periodogram(samples: &[Complex64], seg: usize) -> Vec<f64> {
    let fft = FftPlanner::new().plan_fft_forward(seg);
    let window: Vec<f64> = (0..seg)
        .map(|i| 0.5 - 0.5 * (std::f64::consts::TAU * i as f64 / seg as f64).cos())
        .collect();
    let hop = (seg / 2).max(1);
    let mut acc = vec![0.0; seg];
    let mut count = 0usize;
    let mut buf = vec![Complex64::new(0.0, 0.0); seg];
    let mut start = 0;
    while start + seg <= samples.len() {
        for ((b, s), w) in buf.iter_mut().zip(&samples[start..start + seg]).zip(&window) {
            *b = s * w;
        }
        fft.process(&mut buf);
        for (a, b) in acc.iter_mut().zip(&buf) {
            *a += b.norm_sqr();
        }
        count += 1;
        start += hop;
    }
    for a in acc.iter_mut() {
        *a /= count.max(1) as f64;
    }
    acc
}
