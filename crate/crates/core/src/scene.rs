//! Scenario parameters: radar front end, reflectors, clutter, detector and
//! decomposition settings, plus the radar equation and map axis geometry.
//!
//! Everything is stored the way a user writes it (dBm, dB, dBsm, degrees)
//! and converted to linear SI units through the accessor methods.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::cfar::WindowGeometry;
use crate::error::{Error, Result};

/// Propagation speed used for every delay, wavelength and bin width.
pub const SPEED_OF_LIGHT: f64 = 3.0e8;

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

pub fn dbm_to_watts(dbm: f64) -> f64 {
    db_to_linear(dbm - 30.0)
}

/// Transmitter, sampling and timing constants for one LFMCW radar.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadarParams {
    pub transmit_power_dbm: f64,
    pub tx_gain_db: f64,
    pub rx_gain_db: f64,
    /// Receiver noise density. `null` turns the AWGN off entirely.
    pub noise_psd_dbm_hz: Option<f64>,
    pub bandwidth_hz: f64,
    pub carrier_hz: f64,
    /// Fast-time samples per chirp (M).
    pub samples_per_chirp: usize,
    /// Chirps per scan (N).
    pub chirps_per_scan: usize,
    /// Number of scans (K).
    pub scan_count: usize,
    /// Chirp duration, equal to the chirp repetition interval.
    pub chirp_interval_s: f64,
    pub scan_interval_s: f64,
    /// Transmit amplitude in normalized units; scales every echo amplitude.
    pub tx_amplitude: f64,
}

impl RadarParams {
    /// Chirp slope B / T_c in Hz/s.
    pub fn slope(&self) -> f64 {
        self.bandwidth_hz / self.chirp_interval_s
    }

    pub fn wavelength(&self) -> f64 {
        SPEED_OF_LIGHT / self.carrier_hz
    }

    /// Complex fast-time sample rate M / T_c.
    pub fn sample_rate(&self) -> f64 {
        self.samples_per_chirp as f64 / self.chirp_interval_s
    }

    pub fn prf(&self) -> f64 {
        1.0 / self.chirp_interval_s
    }

    /// Duration of one scan (N chirps back to back).
    pub fn scan_duration(&self) -> f64 {
        self.chirps_per_scan as f64 * self.chirp_interval_s
    }

    /// AWGN power per complex sample, N0 * F_s, or zero when noise is off.
    pub fn noise_power(&self) -> f64 {
        match self.noise_psd_dbm_hz {
            Some(psd) => dbm_to_watts(psd) * self.sample_rate(),
            None => 0.0,
        }
    }

    /// Beat frequency of a reflector at `range_m`.
    pub fn beat_frequency(&self, range_m: f64) -> f64 {
        self.slope() * 2.0 * range_m / SPEED_OF_LIGHT
    }

    fn validate(&self) -> Result<()> {
        for (field, n) in [
            ("radar.samples_per_chirp", self.samples_per_chirp),
            ("radar.chirps_per_scan", self.chirps_per_scan),
            ("radar.scan_count", self.scan_count),
        ] {
            if n == 0 {
                return Err(Error::invalid(field, "must be at least 1"));
            }
        }
        for (field, v) in [
            ("radar.bandwidth_hz", self.bandwidth_hz),
            ("radar.carrier_hz", self.carrier_hz),
            ("radar.chirp_interval_s", self.chirp_interval_s),
            ("radar.scan_interval_s", self.scan_interval_s),
            ("radar.tx_amplitude", self.tx_amplitude),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::invalid(field, "must be finite and strictly positive"));
            }
        }
        for (field, v) in [
            ("radar.transmit_power_dbm", self.transmit_power_dbm),
            ("radar.tx_gain_db", self.tx_gain_db),
            ("radar.rx_gain_db", self.rx_gain_db),
        ] {
            if !v.is_finite() {
                return Err(Error::invalid(field, "must be finite"));
            }
        }
        if let Some(psd) = self.noise_psd_dbm_hz {
            if !psd.is_finite() {
                return Err(Error::invalid("radar.noise_psd_dbm_hz", "must be finite or null"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObjectKind {
    StaticIo,
    MobileIo,
    Target,
}

/// A single point reflector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneObject {
    pub kind: ObjectKind,
    pub range_m: f64,
    /// Kept for scene bookkeeping only; the single-antenna model ignores it.
    pub azimuth_deg: f64,
    /// Positive when moving away from the radar.
    pub radial_velocity_mps: f64,
    pub rcs_dbsm: f64,
}

impl SceneObject {
    pub fn rcs_m2(&self) -> f64 {
        db_to_linear(self.rcs_dbsm)
    }

    /// Range at the start of scan `scan_index`.
    pub fn range_at_scan(&self, scan_index: usize, scan_interval_s: f64) -> f64 {
        self.range_m + self.radial_velocity_mps * scan_index as f64 * scan_interval_s
    }

    fn validate(&self, idx: usize) -> Result<()> {
        let field = |name: &str| format!("objects[{idx}].{name}");
        for (name, v) in [
            ("range_m", self.range_m),
            ("azimuth_deg", self.azimuth_deg),
            ("radial_velocity_mps", self.radial_velocity_mps),
            ("rcs_dbsm", self.rcs_dbsm),
        ] {
            if !v.is_finite() {
                return Err(Error::invalid(field(name), "must be finite"));
            }
        }
        if self.range_m <= 0.0 {
            return Err(Error::invalid(field("range_m"), "range must be positive"));
        }
        match self.kind {
            ObjectKind::Target => {
                if self.rcs_dbsm > 0.0 {
                    return Err(Error::invalid(field("rcs_dbsm"), "target RCS exceeds 0 dBsm"));
                }
                if self.radial_velocity_mps.abs() > 1.0 {
                    return Err(Error::invalid(
                        field("radial_velocity_mps"),
                        "target speed exceeds 1 m/s",
                    ));
                }
            }
            ObjectKind::StaticIo => {
                if self.radial_velocity_mps != 0.0 {
                    return Err(Error::invalid(
                        field("radial_velocity_mps"),
                        "static IO must have zero radial velocity",
                    ));
                }
            }
            ObjectKind::MobileIo => {}
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PsdModel {
    Gaussian,
    Exponential,
    AllPole,
}

/// What the clutter coefficient xi is a ratio of.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClutterReference {
    /// The zero-Doppler spectral level C0 of the clutter PSD equals xi times
    /// the target echo power; the realized mean power is lower by the
    /// spectrum's fill factor on the slow-time grid.
    #[default]
    SpectralPeak,
    /// The realized mean clutter power equals xi times the target echo power.
    MeanPower,
}

/// Weibull clutter settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClutterParams {
    pub shape_p: f64,
    pub scale_q: f64,
    pub wind_velocity_mps: f64,
    pub allpole_exponent: f64,
    /// Clutter-to-target power ratio. Zero disables clutter.
    pub clutter_power_coeff: f64,
    pub psd_model: PsdModel,
    #[serde(default)]
    pub reference: ClutterReference,
}

impl ClutterParams {
    fn validate(&self) -> Result<()> {
        for (field, v) in [
            ("clutter.shape_p", self.shape_p),
            ("clutter.scale_q", self.scale_q),
            ("clutter.wind_velocity_mps", self.wind_velocity_mps),
            ("clutter.allpole_exponent", self.allpole_exponent),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::invalid(field, "must be finite and strictly positive"));
            }
        }
        if !(self.clutter_power_coeff.is_finite() && self.clutter_power_coeff >= 0.0) {
            return Err(Error::invalid(
                "clutter.clutter_power_coeff",
                "must be finite and non-negative",
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CfarParams {
    pub guard_cells: usize,
    pub reference_cells: usize,
    pub false_alarm_rate: f64,
    /// Rank of the reference cell used by OS-CFAR, counted from the strongest.
    pub os_rank: usize,
}

impl CfarParams {
    fn validate(&self) -> Result<()> {
        WindowGeometry::from_counts(self.guard_cells, self.reference_cells)?;
        if !(self.false_alarm_rate > 0.0 && self.false_alarm_rate < 1.0) {
            return Err(Error::invalid("cfar.false_alarm_rate", "must lie in (0, 1)"));
        }
        if self.os_rank == 0 || self.os_rank > self.reference_cells {
            return Err(Error::invalid(
                "cfar.os_rank",
                format!("must lie in [1, {}]", self.reference_cells),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GodecParams {
    pub rank_bound: usize,
    pub power_exponent: usize,
    pub error_bound: f64,
    pub delta: f64,
    pub iter_max: usize,
    /// Sparsity knob: the cardinality bound is n_mov * N * K.
    pub n_mov: usize,
}

impl GodecParams {
    /// Cardinality bound s = n_mov * N * K.
    pub fn sparsity(&self, chirps: usize, scans: usize) -> usize {
        self.n_mov * chirps * scans
    }

    pub(crate) fn validate_basic(&self) -> Result<()> {
        if self.rank_bound == 0 {
            return Err(Error::invalid("godec.rank_bound", "must be at least 1"));
        }
        if self.iter_max == 0 {
            return Err(Error::invalid("godec.iter_max", "must be at least 1"));
        }
        if !(self.error_bound.is_finite() && self.error_bound >= 0.0) {
            return Err(Error::invalid("godec.error_bound", "must be finite and non-negative"));
        }
        if !(self.delta.is_finite() && self.delta >= 0.0) {
            return Err(Error::invalid("godec.delta", "must be finite and non-negative"));
        }
        Ok(())
    }

    fn validate(&self, radar: &RadarParams) -> Result<()> {
        self.validate_basic()?;
        if self.n_mov == 0 || self.n_mov > radar.samples_per_chirp {
            return Err(Error::invalid(
                "godec.n_mov",
                format!("must lie in [1, {}]", radar.samples_per_chirp),
            ));
        }
        if self.rank_bound > radar.scan_count {
            return Err(Error::invalid(
                "godec.rank_bound",
                "cannot exceed the number of scans",
            ));
        }
        Ok(())
    }
}

/// A complete, validated experiment description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub radar: RadarParams,
    pub objects: Vec<SceneObject>,
    pub clutter: ClutterParams,
    pub cfar: CfarParams,
    pub godec: GodecParams,
    pub seed: u64,
}

impl Scenario {
    /// Parses and validates a JSON scenario document.
    pub fn from_json(document: &str) -> Result<Self> {
        let scenario: Scenario = serde_json::from_str(document)?;
        scenario.validate()?;
        Ok(scenario)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serializes")
    }

    pub fn validate(&self) -> Result<()> {
        self.radar.validate()?;
        if self.objects.is_empty() {
            return Err(Error::invalid("objects", "scene requires at least one object"));
        }
        for (i, obj) in self.objects.iter().enumerate() {
            obj.validate(i)?;
        }
        self.check_unambiguous_range()?;
        self.clutter.validate()?;
        self.cfar.validate()?;
        self.godec.validate(&self.radar)?;
        Ok(())
    }

    /// Every reflector must stay at positive range with a beat frequency below
    /// the complex sample rate for the whole experiment.
    fn check_unambiguous_range(&self) -> Result<()> {
        let radar = &self.radar;
        let fs = radar.sample_rate();
        let span = (radar.scan_count - 1) as f64 * radar.scan_interval_s + radar.scan_duration();
        for (i, obj) in self.objects.iter().enumerate() {
            let end = obj.range_m + obj.radial_velocity_mps * span;
            for r in [obj.range_m, end] {
                if r <= 0.0 {
                    return Err(Error::invalid(
                        format!("objects[{i}].range_m"),
                        "object crosses zero range during the experiment",
                    ));
                }
                if radar.beat_frequency(r) >= fs {
                    return Err(Error::invalid(
                        format!("objects[{i}].range_m"),
                        format!(
                            "beat frequency {:.3e} Hz at {r:.2} m is not below the sample rate {fs:.3e} Hz",
                            radar.beat_frequency(r)
                        ),
                    ));
                }
            }
        }
        Ok(())
    }

    pub fn target(&self) -> Option<&SceneObject> {
        self.objects.iter().find(|o| o.kind == ObjectKind::Target)
    }

    /// Same scenario with a different master seed.
    pub fn with_seed(&self, seed: u64) -> Self {
        Scenario {
            seed,
            ..self.clone()
        }
    }

    /// The simulation scene: 24 GHz / 1 GHz LFMCW radar, two static
    /// reflectors, one fast mover and a weak slow target next to the strong
    /// static reflector, in 1.6/6.9 all-pole Weibull clutter.
    pub fn reference() -> Self {
        Scenario {
            radar: RadarParams {
                transmit_power_dbm: 20.0,
                tx_gain_db: 20.0,
                rx_gain_db: 20.0,
                noise_psd_dbm_hz: Some(-174.0),
                bandwidth_hz: 1.0e9,
                carrier_hz: 24.0e9,
                samples_per_chirp: 1024,
                chirps_per_scan: 256,
                scan_count: 10,
                chirp_interval_s: 1.0e-4,
                scan_interval_s: 0.5,
                // puts the target about 17 dB over the median noise floor of the raw map
                tx_amplitude: 0.0114,
            },
            objects: vec![
                SceneObject {
                    kind: ObjectKind::StaticIo,
                    range_m: 16.0,
                    azimuth_deg: 60.0,
                    radial_velocity_mps: 0.0,
                    rcs_dbsm: 37.0,
                },
                SceneObject {
                    kind: ObjectKind::StaticIo,
                    range_m: 56.7,
                    azimuth_deg: 40.0,
                    radial_velocity_mps: 0.0,
                    rcs_dbsm: 60.0,
                },
                SceneObject {
                    kind: ObjectKind::MobileIo,
                    range_m: 25.0,
                    azimuth_deg: 20.0,
                    radial_velocity_mps: 10.0,
                    rcs_dbsm: 23.0,
                },
                SceneObject {
                    kind: ObjectKind::Target,
                    range_m: 57.0,
                    azimuth_deg: 50.0,
                    radial_velocity_mps: 0.5,
                    rcs_dbsm: -20.0,
                },
            ],
            clutter: ClutterParams {
                shape_p: 1.6,
                scale_q: 6.9,
                wind_velocity_mps: 5.0,
                allpole_exponent: 3.0,
                clutter_power_coeff: 2000.0,
                psd_model: PsdModel::AllPole,
                reference: ClutterReference::SpectralPeak,
            },
            cfar: CfarParams {
                guard_cells: 8,
                reference_cells: 40,
                false_alarm_rate: 1e-9,
                os_rank: 10,
            },
            godec: GodecParams {
                rank_bound: 1,
                power_exponent: 3,
                error_bound: 1e-3,
                delta: 1e-4,
                iter_max: 100,
                n_mov: 18,
            },
            seed: 1,
        }
    }

    /// Horizontal-band scene: a large, slow mover whose range sidelobes form
    /// a band across all ranges near zero Doppler, with the weak target
    /// sitting inside that band.
    pub fn leakage_band() -> Self {
        let mut scenario = Scenario::reference();
        for obj in &mut scenario.objects {
            match obj.kind {
                ObjectKind::MobileIo => {
                    obj.range_m = 30.0;
                    obj.radial_velocity_mps = 1.2;
                    obj.rcs_dbsm = 45.0;
                }
                ObjectKind::Target => obj.radial_velocity_mps = 1.0,
                ObjectKind::StaticIo => {}
            }
        }
        scenario
    }
}

/// Received echo power in watts from the monostatic radar equation.
pub fn received_power(radar: &RadarParams, obj: &SceneObject) -> Result<f64> {
    received_power_at(radar, obj, obj.range_m)
}

/// Radar equation evaluated at an explicit range.
pub fn received_power_at(radar: &RadarParams, obj: &SceneObject, range_m: f64) -> Result<f64> {
    if !(range_m > 0.0) {
        return Err(Error::invalid("range_m", "range must be positive"));
    }
    let lambda = radar.wavelength();
    let pt = dbm_to_watts(radar.transmit_power_dbm);
    let gains = db_to_linear(radar.tx_gain_db) * db_to_linear(radar.rx_gain_db);
    Ok(pt * gains * lambda * lambda * obj.rcs_m2() / ((4.0 * PI).powi(3) * range_m.powi(4)))
}

/// Bin geometry of a range-velocity map.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AxisInfo {
    pub range_bins: usize,
    pub velocity_bins: usize,
    pub range_bin_m: f64,
    pub velocity_bin_mps: f64,
    /// Velocity bin holding 0 m/s after centering.
    pub zero_velocity_bin: usize,
}

impl AxisInfo {
    /// Range bin nearest to `range_m` (may exceed the map).
    pub fn range_bin(&self, range_m: f64) -> i64 {
        (range_m / self.range_bin_m).round() as i64
    }

    /// Velocity bin for `velocity_mps`, wrapped onto the periodic Doppler axis.
    pub fn velocity_bin(&self, velocity_mps: f64) -> usize {
        let offset = (velocity_mps / self.velocity_bin_mps).round() as i64;
        (self.zero_velocity_bin as i64 + offset).rem_euclid(self.velocity_bins as i64) as usize
    }
}

/// Axis geometry for the map of a full scan.
pub fn derive_axes(radar: &RadarParams) -> AxisInfo {
    derive_axes_for(radar, radar.chirps_per_scan)
}

/// Axis geometry for a map formed from `chirps` slow-time samples
/// (e.g. N - 1 after delay-line cancellation).
pub fn derive_axes_for(radar: &RadarParams, chirps: usize) -> AxisInfo {
    AxisInfo {
        range_bins: radar.samples_per_chirp,
        velocity_bins: chirps,
        range_bin_m: SPEED_OF_LIGHT / (2.0 * radar.bandwidth_hz),
        velocity_bin_mps: radar.wavelength() / (2.0 * chirps as f64 * radar.chirp_interval_s),
        zero_velocity_bin: chirps / 2,
    }
}
