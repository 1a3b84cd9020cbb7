//! Detection schemes end to end: simulation, suppression, CFAR, scoring,
//! the sparsity sweep and the stage timing benchmark.

use std::fmt;
use std::io::Write;
use std::str::FromStr;
use std::time::Instant;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cfar::{ca_flops, cfar_detect, os_flops, CfarKind, DetectionMask};
use crate::clutter::inject_clutter;
use crate::error::{Error, Result};
use crate::godec::{godec_decompose, godec_flops, GodecResult};
use crate::mti::{mti_flops, single_delay_cancel};
use crate::rdmap::{range_velocity_map, stack_magnitudes, unstack};
use crate::rng::{derive_seed, Stream, Substreams};
use crate::scene::{derive_axes_for, ObjectKind, Scenario};
use crate::waveform::{synthesize_scan, IfMatrix};

/// Default half-width of the truth neighborhood, in bins.
pub const TRUTH_TOLERANCE: usize = 2;

/// The sparsity grid evaluated by default.
pub const DEFAULT_NMOV_GRID: [usize; 13] = [1, 5, 8, 11, 14, 18, 21, 25, 30, 40, 50, 100, 200];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    RawCa,
    RawOs,
    MtiCa,
    MtiOs,
    GodecCa,
}

impl Scheme {
    pub const ALL: [Scheme; 5] = [
        Scheme::RawCa,
        Scheme::RawOs,
        Scheme::MtiCa,
        Scheme::MtiOs,
        Scheme::GodecCa,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Scheme::RawCa => "raw_ca",
            Scheme::RawOs => "raw_os",
            Scheme::MtiCa => "mti_ca",
            Scheme::MtiOs => "mti_os",
            Scheme::GodecCa => "godec_ca",
        }
    }

    pub fn detector(self) -> CfarKind {
        match self {
            Scheme::RawOs | Scheme::MtiOs => CfarKind::Os,
            _ => CfarKind::Ca,
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Scheme::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| {
                let names: Vec<&str> = Scheme::ALL.iter().map(|k| k.name()).collect();
                Error::invalid("scheme", format!("unknown scheme `{s}`; expected one of {}", names.join(", ")))
            })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Simulate,
    Map,
    Mti,
    Godec,
    CaCfar,
    OsCfar,
}

impl Stage {
    pub fn name(self) -> &'static str {
        match self {
            Stage::Simulate => "simulate",
            Stage::Map => "map",
            Stage::Mti => "mti",
            Stage::Godec => "godec",
            Stage::CaCfar => "ca_cfar",
            Stage::OsCfar => "os_cfar",
        }
    }
}

/// Wall-clock total over all K scans and the matching analytic operation count.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageTiming {
    pub stage: Stage,
    pub seconds: f64,
    pub flops: Option<u64>,
}

/// True cells per scan. Coordinates are (range_bin, velocity_bin).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub range_bins: usize,
    pub velocity_bins: usize,
    pub toi: Vec<(usize, usize)>,
    /// One trajectory per mobile interference object.
    pub mobile: Vec<Vec<(usize, usize)>>,
    /// One trajectory per static interference object.
    #[serde(default)]
    pub static_io: Vec<Vec<(usize, usize)>>,
}

impl GroundTruth {
    /// Truth for maps with `chirps` velocity bins, at each object's mid-scan range.
    pub fn from_scenario(scenario: &Scenario, chirps: usize) -> Result<Self> {
        let radar = &scenario.radar;
        let axes = derive_axes_for(radar, chirps);
        let half_scan = 0.5 * chirps as f64 * radar.chirp_interval_s;
        let track = |obj: &crate::scene::SceneObject| -> Vec<(usize, usize)> {
            (0..radar.scan_count)
                .map(|k| {
                    let r = obj.range_at_scan(k, radar.scan_interval_s) + obj.radial_velocity_mps * half_scan;
                    let bin = axes.range_bin(r).clamp(0, axes.range_bins as i64 - 1) as usize;
                    (bin, axes.velocity_bin(obj.radial_velocity_mps))
                })
                .collect()
        };
        let toi = scenario
            .target()
            .map(track)
            .ok_or_else(|| Error::invalid("objects", "scoring needs a target object"))?;
        let mobile = scenario
            .objects
            .iter()
            .filter(|o| o.kind == ObjectKind::MobileIo)
            .map(track)
            .collect();
        let static_io = scenario
            .objects
            .iter()
            .filter(|o| o.kind == ObjectKind::StaticIo)
            .map(track)
            .collect();
        Ok(GroundTruth {
            range_bins: axes.range_bins,
            velocity_bins: axes.velocity_bins,
            toi,
            mobile,
            static_io,
        })
    }

    /// Chebyshev distance with the velocity axis taken as circular.
    fn distance(&self, a: (usize, usize), b: (usize, usize)) -> usize {
        let dv = a.1.abs_diff(b.1);
        a.0.abs_diff(b.0).max(dv.min(self.velocity_bins - dv))
    }

    fn near(&self, a: (usize, usize), b: (usize, usize), tol: usize) -> bool {
        self.distance(a, b) <= tol
    }

    /// A detection credits the target only when no interference object of
    /// scan `k` lies at least as close to it.
    fn credits_target(&self, cell: (usize, usize), k: usize, tol: usize) -> bool {
        let d = self.distance(cell, self.toi[k]);
        d <= tol
            && self
                .mobile
                .iter()
                .chain(&self.static_io)
                .all(|track| self.distance(cell, track[k]) > d)
    }
}

/// Returns (N_fa, P_d) for per-scan masks against `truth`.
pub fn score(masks: &[DetectionMask], truth: &GroundTruth, tolerance: usize) -> Result<(f64, f64)> {
    if masks.is_empty() {
        return Err(Error::invalid("masks", "at least one scan is required"));
    }
    if masks.len() > truth.toi.len() {
        return Err(Error::Shape(format!(
            "{} masks but ground truth covers {} scans",
            masks.len(),
            truth.toi.len()
        )));
    }
    let mut hits = 0usize;
    let mut false_alarms = 0usize;
    for (k, mask) in masks.iter().enumerate() {
        let toi = truth.toi[k];
        let mut found = false;
        for &cell in &mask.cells {
            if truth.near(cell, toi, tolerance) {
                found |= truth.credits_target(cell, k, tolerance);
            } else if !truth.mobile.iter().any(|m| truth.near(cell, m[k], tolerance)) {
                false_alarms += 1;
            }
        }
        hits += usize::from(found);
    }
    let k = masks.len() as f64;
    Ok((false_alarms as f64 / k, hits as f64 / k))
}

/// `f = 0.5 (1/iter_cov + 0.5 (P_d + 1/(N_fa + 1)))`.
pub fn perf_score(iter_cov: usize, p_d: f64, n_fa: f64) -> Result<f64> {
    if iter_cov == 0 {
        return Err(Error::invalid("iter_cov", "must be at least 1"));
    }
    if !(0.0..=1.0).contains(&p_d) {
        return Err(Error::invalid("p_d", "must lie in [0, 1]"));
    }
    if !(n_fa.is_finite() && n_fa >= 0.0) {
        return Err(Error::invalid("n_fa", "must be finite and non-negative"));
    }
    Ok(0.5 * (1.0 / iter_cov as f64 + 0.5 * (p_d + 1.0 / (n_fa + 1.0))))
}

/// Peak magnitude within one cell of `cell`, in dB relative to the median of
/// the map's nonzero magnitudes.
pub fn toi_contrast_db(magnitude: &DMatrix<f64>, cell: (usize, usize)) -> f64 {
    let (m, n) = magnitude.shape();
    let mut peak = 0.0f64;
    for di in -1i64..=1 {
        let r = cell.0 as i64 + di;
        if r < 0 || r >= m as i64 {
            continue;
        }
        for dj in -1i64..=1 {
            let v = (cell.1 as i64 + dj).rem_euclid(n as i64) as usize;
            peak = peak.max(magnitude[(r as usize, v)]);
        }
    }
    let mut nz: Vec<f64> = magnitude.iter().copied().filter(|v| *v > 0.0).collect();
    if nz.is_empty() || peak == 0.0 {
        return f64::NEG_INFINITY;
    }
    let mid = nz.len() / 2;
    let (_, median, _) = nz.select_nth_unstable_by(mid, f64::total_cmp);
    20.0 * (peak / *median).log10()
}

/// Outcome of one scheme on one simulated data set.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DetectionReport {
    pub scheme: Scheme,
    pub seed: u64,
    pub n_mov: Option<usize>,
    pub n_fa: f64,
    pub p_d: f64,
    /// Zero for schemes without decomposition.
    pub iter_cov: usize,
    /// Performance function; only defined when a decomposition ran.
    pub f: Option<f64>,
    pub epsilon: Option<f64>,
    /// TOI contrast against the map background, per scan. For GoDec the map is
    /// the dynamic part `|X - L|`.
    pub toi_contrast_db: Vec<f64>,
    /// Detected cells per scan.
    pub detections: Vec<Vec<(usize, usize)>>,
    pub truth: GroundTruth,
    pub timing: Vec<StageTiming>,
    #[serde(skip)]
    pub masks: Vec<DetectionMask>,
    /// Magnitude maps the detector ran on.
    #[serde(skip)]
    pub maps: Vec<DMatrix<f64>>,
    #[serde(skip)]
    pub godec_trace: Vec<f64>,
}

impl DetectionReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// True when every field except wall-clock seconds matches.
    pub fn same_outcome(&self, other: &DetectionReport) -> bool {
        let strip = |r: &DetectionReport| {
            let mut c = r.clone();
            for t in &mut c.timing {
                t.seconds = 0.0;
            }
            c
        };
        strip(self) == strip(other)
    }
}

/// K simulated scans plus the time it took to make them.
#[derive(Debug, Clone)]
pub struct SimulatedScans {
    pub scans: Vec<IfMatrix>,
    pub seconds: f64,
}

/// Synthesizes all scans (echoes, noise and clutter) from the scenario seed.
pub fn simulate(scenario: &Scenario) -> Result<SimulatedScans> {
    scenario.validate()?;
    let streams = Substreams::new(scenario.seed);
    let start = Instant::now();
    let scans = (0..scenario.radar.scan_count)
        .into_par_iter()
        .map(|k| {
            let mut rng = streams.rng(Stream::Noise { scan: k });
            let scan = synthesize_scan(scenario, k, &mut rng)?;
            inject_clutter(scan, scenario, &streams)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SimulatedScans {
        scans,
        seconds: start.elapsed().as_secs_f64(),
    })
}

/// Simulates from `scenario.seed` and runs `scheme`.
pub fn run_scheme(scenario: &Scenario, scheme: Scheme) -> Result<DetectionReport> {
    let sim = simulate(scenario)?;
    let mut report = run_scheme_on(scenario, &sim.scans, scheme)?;
    report.timing.insert(
        0,
        StageTiming {
            stage: Stage::Simulate,
            seconds: sim.seconds,
            flops: None,
        },
    );
    Ok(report)
}

fn timed<T>(f: impl FnOnce() -> Result<T>) -> Result<(T, f64)> {
    let start = Instant::now();
    let out = f()?;
    Ok((out, start.elapsed().as_secs_f64()))
}

/// Magnitude maps of every scan.
pub fn raw_maps(scans: &[IfMatrix]) -> Vec<DMatrix<f64>> {
    scans.par_iter().map(|s| range_velocity_map(s).magnitude()).collect()
}

/// Runs `scheme` on already simulated scans.
pub fn run_scheme_on(scenario: &Scenario, scans: &[IfMatrix], scheme: Scheme) -> Result<DetectionReport> {
    scenario.validate()?;
    let radar = &scenario.radar;
    let (m, n) = (radar.samples_per_chirp, radar.chirps_per_scan);
    if scans.len() != radar.scan_count || scans.iter().any(|s| s.data.shape() != (m, n)) {
        return Err(Error::Shape(format!(
            "expected {} scans of {m}x{n} samples",
            radar.scan_count
        )));
    }
    let mut timing = Vec::new();
    let mut iter_cov = 0;
    let mut epsilon = None;
    let mut trace = Vec::new();
    let mut dynamic = None;

    let maps = match scheme {
        Scheme::RawCa | Scheme::RawOs => {
            let (maps, secs) = timed(|| Ok(raw_maps(scans)))?;
            timing.push(StageTiming { stage: Stage::Map, seconds: secs, flops: None });
            maps
        }
        Scheme::MtiCa | Scheme::MtiOs => {
            let (cancelled, secs) = timed(|| scans.iter().map(single_delay_cancel).collect::<Result<Vec<_>>>())?;
            timing.push(StageTiming {
                stage: Stage::Mti,
                seconds: secs,
                flops: Some(mti_flops(m, n) * scans.len() as u64),
            });
            let (maps, secs) = timed(|| Ok(raw_maps(&cancelled)))?;
            timing.push(StageTiming { stage: Stage::Map, seconds: secs, flops: None });
            maps
        }
        Scheme::GodecCa => {
            let (maps, secs) = timed(|| Ok(raw_maps(scans)))?;
            timing.push(StageTiming { stage: Stage::Map, seconds: secs, flops: None });
            let (res, secs) = timed(|| decompose(scenario, &maps))?;
            iter_cov = res.iter_cov;
            epsilon = Some(res.epsilon);
            let g = &scenario.godec;
            timing.push(StageTiming {
                stage: Stage::Godec,
                seconds: secs,
                flops: Some(godec_flops(m, n, scans.len(), g.rank_bound, g.power_exponent, res.iter_cov)),
            });
            let sparse = unstack(&res.sparse, m, n)?;
            let low = unstack(&res.low_rank, m, n)?;
            dynamic = Some(maps.iter().zip(&low).map(|(x, l)| (x - l).map(f64::abs)).collect::<Vec<_>>());
            trace = res.trace;
            sparse.into_iter().map(|s| s.map(f64::abs)).collect()
        }
    };

    let kind = scheme.detector();
    let (masks, secs) = timed(|| {
        maps.iter()
            .map(|a| cfar_detect(&a.map(|v| v * v), &scenario.cfar, kind))
            .collect::<Result<Vec<_>>>()
    })?;
    let cuts = maps.first().map_or(0, |a| a.len()) * maps.len();
    let n_r = scenario.cfar.reference_cells;
    timing.push(match kind {
        CfarKind::Ca => StageTiming { stage: Stage::CaCfar, seconds: secs, flops: Some(ca_flops(n_r, cuts)) },
        CfarKind::Os => StageTiming { stage: Stage::OsCfar, seconds: secs, flops: Some(os_flops(n_r, cuts)) },
    });

    let chirps = maps.first().map_or(n, |a| a.ncols());
    let truth = GroundTruth::from_scenario(scenario, chirps)?;
    let (n_fa, p_d) = score(&masks, &truth, TRUTH_TOLERANCE)?;
    let f = if scheme == Scheme::GodecCa {
        Some(perf_score(iter_cov, p_d, n_fa)?)
    } else {
        None
    };
    // GoDec contrast is read off the dynamic map X - L, which keeps the background
    let toi_contrast_db = dynamic
        .as_ref()
        .unwrap_or(&maps)
        .iter()
        .zip(&truth.toi)
        .map(|(a, &cell)| toi_contrast_db(a, cell))
        .collect();

    Ok(DetectionReport {
        scheme,
        seed: scenario.seed,
        n_mov: (scheme == Scheme::GodecCa).then_some(scenario.godec.n_mov),
        n_fa,
        p_d,
        iter_cov,
        f,
        epsilon,
        toi_contrast_db,
        detections: masks.iter().map(|mk| mk.cells.clone()).collect(),
        truth,
        timing,
        masks,
        maps,
        godec_trace: trace,
    })
}

/// GoDec on the stacked magnitude maps, drawing projections from the scenario seed.
pub fn decompose(scenario: &Scenario, maps: &[DMatrix<f64>]) -> Result<GodecResult> {
    let stacked = stack_magnitudes(maps)?;
    let mut rng = Substreams::new(scenario.seed).rng(Stream::Godec { run: 0 });
    godec_decompose(&stacked, &scenario.godec, &mut rng)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub n_mov: usize,
    pub repeat: usize,
    pub seed: u64,
    pub n_fa: f64,
    pub p_d: f64,
    pub iter_cov: usize,
    pub f: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepTable {
    pub rows: Vec<SweepRow>,
    /// (n_mov, mean f) in grid order.
    pub means: Vec<(usize, f64)>,
    pub optimum: usize,
    /// Grid values whose mean f reaches 95% of the maximum.
    pub band: Vec<usize>,
    /// Detection at the optimum on the scenario's own seed.
    pub final_report: Option<DetectionReport>,
}

impl SweepTable {
    pub fn mean_f(&self, n_mov: usize) -> Option<f64> {
        self.means.iter().find(|(v, _)| *v == n_mov).map(|(_, f)| *f)
    }

    pub fn rows_for(&self, n_mov: usize) -> impl Iterator<Item = &SweepRow> {
        self.rows.iter().filter(move |r| r.n_mov == n_mov)
    }

    /// CSV rows `nmov,repeat,n_fa,p_d,iter_cov,f,f_mean`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "nmov,repeat,n_fa,p_d,iter_cov,f,f_mean")?;
        for r in &self.rows {
            let mean = self.mean_f(r.n_mov).unwrap_or(f64::NAN);
            writeln!(
                w,
                "{},{},{:.4},{:.4},{},{:.6},{:.6}",
                r.n_mov, r.repeat, r.n_fa, r.p_d, r.iter_cov, r.f, mean
            )?;
        }
        Ok(())
    }
}

/// Repeat `r` uses seed `derive_seed(scenario.seed, r)`; every grid value
/// shares that repeat's simulated scans.
pub fn sweep_nmov(scenario: &Scenario, nmov_values: &[usize], repeats: usize) -> Result<SweepTable> {
    sweep_nmov_with(scenario, nmov_values, repeats, true)
}

pub fn sweep_nmov_with(
    scenario: &Scenario,
    nmov_values: &[usize],
    repeats: usize,
    final_run: bool,
) -> Result<SweepTable> {
    if nmov_values.is_empty() {
        return Err(Error::invalid("nmov", "at least one value is required"));
    }
    if repeats == 0 {
        return Err(Error::invalid("repeats", "must be at least 1"));
    }
    for &v in nmov_values {
        let mut s = scenario.clone();
        s.godec.n_mov = v;
        s.validate()?;
    }

    let mut rows = Vec::with_capacity(nmov_values.len() * repeats);
    for repeat in 0..repeats {
        let seeded = scenario.with_seed(derive_seed(scenario.seed, repeat as u64));
        let sim = simulate(&seeded)?;
        let maps = raw_maps(&sim.scans);
        let (m, n) = (seeded.radar.samples_per_chirp, seeded.radar.chirps_per_scan);
        let truth = GroundTruth::from_scenario(&seeded, n)?;
        let batch = nmov_values
            .par_iter()
            .map(|&n_mov| {
                let mut s = seeded.clone();
                s.godec.n_mov = n_mov;
                let res = decompose(&s, &maps)?;
                let masks = unstack(&res.sparse, m, n)?
                    .iter()
                    .map(|sp| cfar_detect(&sp.map(|v| v * v), &s.cfar, CfarKind::Ca))
                    .collect::<Result<Vec<_>>>()?;
                let (n_fa, p_d) = score(&masks, &truth, TRUTH_TOLERANCE)?;
                Ok(SweepRow {
                    n_mov,
                    repeat,
                    seed: s.seed,
                    n_fa,
                    p_d,
                    iter_cov: res.iter_cov,
                    f: perf_score(res.iter_cov, p_d, n_fa)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        rows.extend(batch);
    }
    rows.sort_by_key(|r| (position(nmov_values, r.n_mov), r.repeat));

    let means: Vec<(usize, f64)> = nmov_values
        .iter()
        .map(|&v| {
            let fs: Vec<f64> = rows.iter().filter(|r| r.n_mov == v).map(|r| r.f).collect();
            (v, fs.iter().sum::<f64>() / fs.len() as f64)
        })
        .collect();
    let (optimum, best) = means
        .iter()
        .copied()
        .fold((means[0].0, f64::MIN), |acc, (v, f)| if f > acc.1 { (v, f) } else { acc });
    let band = means.iter().filter(|(_, f)| *f >= 0.95 * best).map(|(v, _)| *v).collect();

    let final_report = if final_run {
        let mut s = scenario.clone();
        s.godec.n_mov = optimum;
        Some(run_scheme(&s, Scheme::GodecCa)?)
    } else {
        None
    };
    Ok(SweepTable {
        rows,
        means,
        optimum,
        band,
        final_report,
    })
}

fn position(values: &[usize], v: usize) -> usize {
    values.iter().position(|x| *x == v).unwrap_or(usize::MAX)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingRow {
    pub scheme: Scheme,
    pub stage: Stage,
    /// Mean wall-clock seconds per scan.
    pub mean_seconds: f64,
    /// Analytic operation count per scan.
    pub flops: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TimingTable {
    pub repeats: usize,
    pub rows: Vec<TimingRow>,
}

impl TimingTable {
    pub fn get(&self, scheme: Scheme, stage: Stage) -> Option<&TimingRow> {
        self.rows.iter().find(|r| r.scheme == scheme && r.stage == stage)
    }

    /// Mean per-scan seconds of `stage`, averaged over every scheme that ran it.
    pub fn stage_seconds(&self, stage: Stage) -> Option<f64> {
        let v: Vec<f64> = self.rows.iter().filter(|r| r.stage == stage).map(|r| r.mean_seconds).collect();
        (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
    }

    /// CSV rows `scheme,stage,mean_seconds,flops`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "scheme,stage,mean_seconds,flops")?;
        for r in &self.rows {
            let flops = r.flops.map(|f| f.to_string()).unwrap_or_default();
            writeln!(w, "{},{},{:.6e},{}", r.scheme, r.stage.name(), r.mean_seconds, flops)?;
        }
        Ok(())
    }
}

/// Runs each scheme `repeats` times on freshly simulated data and averages stage times.
pub fn benchmark(scenario: &Scenario, schemes: &[Scheme], repeats: usize) -> Result<TimingTable> {
    if repeats == 0 {
        return Err(Error::invalid("repeats", "must be at least 1"));
    }
    let k = scenario.radar.scan_count as f64;
    let mut acc: Vec<(Scheme, Stage, f64, Option<u64>)> = Vec::new();
    for repeat in 0..repeats {
        let seeded = scenario.with_seed(derive_seed(scenario.seed, repeat as u64));
        let sim = simulate(&seeded)?;
        for &scheme in schemes {
            let report = run_scheme_on(&seeded, &sim.scans, scheme)?;
            for t in report.timing {
                let per_scan = t.seconds / k;
                let flops = t.flops.map(|f| (f as f64 / k).round() as u64);
                match acc.iter_mut().find(|a| a.0 == scheme && a.1 == t.stage) {
                    Some(a) => {
                        a.2 += per_scan;
                        a.3 = flops;
                    }
                    None => acc.push((scheme, t.stage, per_scan, flops)),
                }
            }
        }
    }
    Ok(TimingTable {
        repeats,
        rows: acc
            .into_iter()
            .map(|(scheme, stage, total, flops)| TimingRow {
                scheme,
                stage,
                mean_seconds: total / repeats as f64,
                flops,
            })
            .collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::SceneObject;

    fn truth() -> GroundTruth {
        GroundTruth {
            range_bins: 64,
            velocity_bins: 32,
            toi: vec![(10, 17), (10, 17)],
            mobile: vec![vec![(40, 0), (41, 0)]],
            static_io: vec![vec![(9, 16), (30, 16)]],
        }
    }

    fn mask(cells: Vec<(usize, usize)>) -> DetectionMask {
        DetectionMask::from_cells(64, 32, cells)
    }

    #[test]
    fn score_examples() {
        let t = truth();
        let exact = vec![mask(vec![(10, 17)]), mask(vec![(10, 17)])];
        assert_eq!(score(&exact, &t, 2).unwrap(), (0.0, 1.0));
        let empty = vec![mask(vec![]), mask(vec![])];
        assert_eq!(score(&empty, &t, 2).unwrap(), (0.0, 0.0));
        // mobile hits across the velocity wrap are not false alarms
        let mixed = vec![mask(vec![(12, 19), (40, 31), (5, 5)]), mask(vec![(3, 3), (20, 20)])];
        assert_eq!(score(&mixed, &t, 2).unwrap(), (1.5, 0.5));
        assert!(score(&[], &t, 2).is_err());
        // a static reflector next to the target keeps its own detection
        let io = vec![mask(vec![(9, 16)]), mask(vec![(9, 16)])];
        assert_eq!(score(&io, &t, 2).unwrap(), (0.0, 0.5));
        let tie = vec![mask(vec![(9, 17)]), mask(vec![(11, 18)])];
        assert_eq!(score(&tie, &t, 2).unwrap(), (0.0, 0.5));
    }

    #[test]
    fn perf_examples() {
        assert_eq!(perf_score(1, 1.0, 0.0).unwrap(), 1.0);
        assert!((perf_score(2, 1.0, 15.3).unwrap() - 0.5153).abs() < 1e-4);
        let mean = [(2, 0.0, 3.4), (2, 0.0, 3.4), (2, 0.0, 2.9)]
            .iter()
            .map(|&(i, p, n)| perf_score(i, p, n).unwrap())
            .sum::<f64>()
            / 3.0;
        assert_eq!(format!("{mean:.3}"), "0.309");
        assert!(perf_score(0, 1.0, 0.0).is_err());
        assert!(perf_score(1, 1.5, 0.0).is_err());
        assert!(perf_score(1, 0.5, -1.0).is_err());
    }

    #[test]
    fn scheme_names_round_trip() {
        for s in Scheme::ALL {
            assert_eq!(s.name().parse::<Scheme>().unwrap(), s);
            assert_eq!(serde_json::to_string(&s).unwrap(), format!("\"{}\"", s.name()));
        }
        let err = "godec_os".parse::<Scheme>().unwrap_err().to_string();
        assert!(err.contains("raw_ca") && err.contains("godec_ca"));
    }

    #[test]
    fn contrast_of_lone_peak() {
        let mut a = DMatrix::from_element(8, 8, 1.0);
        a[(3, 3)] = 10.0;
        assert!((toi_contrast_db(&a, (3, 4)) - 20.0).abs() < 1e-12);
    }

    #[test]
    fn truth_uses_mid_scan_range() {
        let mut s = Scenario::reference();
        s.objects.retain(|o| o.kind != ObjectKind::StaticIo);
        let t = GroundTruth::from_scenario(&s, 256).unwrap();
        // 57 m + 0.5 m/s * 0.5 s per scan
        assert_eq!(t.toi[0], (380, 130));
        assert_eq!(t.toi[9].0, ((57.0 + 0.5 * 4.5 + 0.5 * 0.0128) / 0.15f64).round() as usize);
        assert_eq!(t.mobile[0][0].1, 128 + 41);
        let no_target = Scenario {
            objects: vec![SceneObject { kind: ObjectKind::StaticIo, ..s.objects[0].clone() }],
            ..s
        };
        assert!(GroundTruth::from_scenario(&no_target, 256).is_err());
    }
}
