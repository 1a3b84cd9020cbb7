//! Acceptance criteria, one line each. Run with
//! `cargo test -p clutterbench-core --test acceptance`; set
//! `ACCEPTANCE_ONLY=2,5` to run a subset.

use std::process::ExitCode;
use std::time::Instant;

use clutterbench::cfar::{ca_threshold_factor, cfar_detect, CfarKind};
use clutterbench::clutter::{generate_coherent_weibull, validate_distribution, WeibullSpec, PSD_SEGMENT};
use clutterbench::godec::{brp_low_rank, godec, godec_observed, sparse_project, GodecConfig};
use clutterbench::pipeline::{
    benchmark, perf_score, run_scheme_on, simulate, sweep_nmov_with, DetectionReport, Scheme, Stage,
    DEFAULT_NMOV_GRID,
};
use clutterbench::scene::CfarParams;
use clutterbench::Scenario;
use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict { pass, detail: detail.into() }
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Scans 1..K; the first scan has no predecessor for the dynamic part and is
/// reported but left out of contrast summaries.
fn mean_contrast(r: &DetectionReport) -> f64 {
    mean(&r.toi_contrast_db[1..])
}

/// Five batches of 10^6 samples. Slow-time correlation leaves a single
/// batch with only a few thousand independent amplitudes, so the median is
/// judged on the pooled batches; the PSD fit and runtime apply per batch.
fn clutter_statistics() -> Verdict {
    let spec = WeibullSpec::from_scenario(&Scenario::reference()).unwrap();
    let prf = Scenario::reference().radar.prf();
    let sequences = 1_000_000usize.div_ceil(PSD_SEGMENT);
    let mut pooled = Vec::new();
    let mut batch_medians = Vec::new();
    let mut worst_rms: f64 = 0.0;
    let mut worst_secs: f64 = 0.0;
    for batch in 0..5 {
        let start = Instant::now();
        let mut rng = ChaCha8Rng::seed_from_u64(2024 + batch);
        let mut samples: Vec<Complex64> = Vec::with_capacity(sequences * PSD_SEGMENT);
        for _ in 0..sequences {
            samples.extend(generate_coherent_weibull(PSD_SEGMENT, &spec, prf, &mut rng).unwrap());
        }
        let fit = validate_distribution(&samples, &spec, prf).unwrap();
        worst_secs = worst_secs.max(start.elapsed().as_secs_f64());
        worst_rms = worst_rms.max(fit.psd_rms_db);
        batch_medians.push(format!("{:.3}", fit.median_amplitude));
        pooled.extend(samples.iter().map(|z| z.norm()));
    }
    let mid = pooled.len() / 2;
    let (_, median, _) = pooled.select_nth_unstable_by(mid, f64::total_cmp);
    let median_err = (*median / spec.w_m - 1.0).abs();
    verdict(
        median_err < 0.01 && worst_rms < 2.0 && worst_secs < 10.0,
        format!(
            "pooled median {:.4} vs {:.4} ({:.2}%), batch medians [{}], worst PSD rms {:.2} dB, slowest batch {:.1} s",
            median,
            spec.w_m,
            100.0 * median_err,
            batch_medians.join(" "),
            worst_rms,
            worst_secs
        ),
    )
}

struct SceneRun {
    raw_ca: f64,
    raw_os: f64,
    mti_ca: f64,
    mti_os: f64,
    mti_contrast: f64,
    godec: Option<DetectionReport>,
}

fn reference_runs(seeds: u64, godec_seeds: u64) -> Vec<SceneRun> {
    (1..=seeds)
        .map(|seed| {
            let s = Scenario::reference().with_seed(seed);
            let sim = simulate(&s).unwrap();
            let run = |scheme| run_scheme_on(&s, &sim.scans, scheme).unwrap();
            let mti_ca = run(Scheme::MtiCa);
            SceneRun {
                raw_ca: run(Scheme::RawCa).p_d,
                raw_os: run(Scheme::RawOs).p_d,
                mti_contrast: mean_contrast(&mti_ca),
                mti_ca: mti_ca.p_d,
                mti_os: run(Scheme::MtiOs).p_d,
                godec: (seed <= godec_seeds).then(|| run(Scheme::GodecCa)),
            }
        })
        .collect()
}

fn masking(runs: &[SceneRun]) -> Verdict {
    let masked = runs.iter().filter(|r| r.raw_ca == 0.0 && r.raw_os == 0.0).count();
    let pd: Vec<String> = runs.iter().map(|r| format!("{}/{}", r.raw_ca, r.raw_os)).collect();
    verdict(
        masked >= 9,
        format!("{masked}/{} seeds with raw P_d = 0 (ca/os per seed: {})", runs.len(), pd.join(" ")),
    )
}

fn mti_degradation(runs: &[SceneRun]) -> Verdict {
    let contrast_ok = runs.iter().all(|r| (-20.0..=-8.0).contains(&r.mti_contrast));
    let ca_ok = runs.iter().all(|r| r.mti_ca == 0.0);
    let os_ok = runs.iter().all(|r| r.mti_os <= 0.3);
    let c: Vec<String> = runs.iter().map(|r| format!("{:.1}", r.mti_contrast)).collect();
    let ca: Vec<String> = runs.iter().map(|r| format!("{}", r.mti_ca)).collect();
    let os: Vec<String> = runs.iter().map(|r| format!("{}", r.mti_os)).collect();
    verdict(
        contrast_ok && ca_ok && os_ok,
        format!(
            "contrast dB [{}] {}; mti_ca P_d [{}] {}; mti_os P_d [{}] {}",
            c.join(" "),
            ok(contrast_ok),
            ca.join(" "),
            ok(ca_ok),
            os.join(" "),
            ok(os_ok)
        ),
    )
}

fn ok(b: bool) -> &'static str {
    if b {
        "ok"
    } else {
        "MISS"
    }
}

fn godec_recovery(runs: &[SceneRun]) -> Verdict {
    let reports: Vec<&DetectionReport> = runs.iter().filter_map(|r| r.godec.as_ref()).collect();
    let pd = mean(&reports.iter().map(|r| r.p_d).collect::<Vec<_>>());
    let contrast = mean(&reports.iter().map(|r| mean_contrast(r)).collect::<Vec<_>>());
    verdict(
        pd >= 0.9 && contrast >= 12.0,
        format!(
            "N_mov 18 over {} seeds: mean P_d {:.2}, TOI {:.1} dB over the dynamic-map median",
            reports.len(),
            pd,
            contrast
        ),
    )
}

fn tradeoff() -> Verdict {
    let table = sweep_nmov_with(&Scenario::reference(), &DEFAULT_NMOV_GRID, 3, false).unwrap();
    let iters: Vec<usize> = DEFAULT_NMOV_GRID
        .iter()
        .map(|&v| table.rows_for(v).map(|r| r.iter_cov).max().unwrap())
        .collect();
    let iters_min: Vec<usize> = DEFAULT_NMOV_GRID
        .iter()
        .map(|&v| table.rows_for(v).map(|r| r.iter_cov).min().unwrap())
        .collect();
    let nondecreasing = iters.windows(2).all(|w| w[0] <= w[1]) && iters_min.windows(2).all(|w| w[0] <= w[1]);
    let pattern = DEFAULT_NMOV_GRID.iter().enumerate().all(|(i, &v)| {
        if v <= 30 {
            iters[i] == 2 && iters_min[i] == 2
        } else if v >= 40 {
            iters_min[i] >= 3
        } else {
            true
        }
    });
    let a = nondecreasing && pattern;
    let (best_nmov, best_f) = table
        .means
        .iter()
        .copied()
        .fold((0, f64::MIN), |acc, (v, f)| if f > acc.1 { (v, f) } else { acc });
    let b = (14..=40).contains(&best_nmov);
    let nfa = |v: usize| mean(&table.rows_for(v).map(|r| r.n_fa).collect::<Vec<_>>());
    let c = nfa(100) >= 3.0 * nfa(5);
    let fbar: Vec<String> = table.means.iter().map(|(v, f)| format!("{v}:{f:.3}")).collect();
    verdict(
        a && b && c,
        format!(
            "(a) iter_cov {:?} {}; (b) max f = {:.3} at N_mov {} {}; (c) N_fa(100) {:.1} vs N_fa(5) {:.1} {}; f [{}]",
            iters,
            ok(a),
            best_f,
            best_nmov,
            ok(b),
            nfa(100),
            nfa(5),
            ok(c),
            fbar.join(" ")
        ),
    )
}

const TABLE_NFA: [[f64; 13]; 3] = [
    [3.4, 5.5, 4.8, 5.1, 6.8, 13.1, 13.8, 15.3, 17.4, 20.3, 21.9, 34.5, 27.1],
    [3.4, 5.8, 5.7, 6.0, 7.5, 10.2, 14.1, 13.9, 14.4, 20.1, 23.8, 34.4, 26.4],
    [2.9, 4.6, 5.7, 6.4, 8.3, 10.3, 12.1, 13.2, 14.6, 19.2, 24.3, 34.8, 25.2],
];
const TABLE_PD: [[f64; 13]; 3] = [
    [0.0, 0.2, 0.2, 0.4, 0.6, 0.6, 0.9, 1.0, 0.8, 0.9, 0.8, 0.9, 0.8],
    [0.0, 0.3, 0.4, 0.4, 0.5, 0.7, 0.6, 0.7, 0.9, 0.8, 0.7, 0.5, 0.7],
    [0.0, 0.1, 0.1, 0.4, 0.5, 1.0, 0.7, 0.7, 0.8, 0.7, 0.9, 0.8, 0.7],
];
const TABLE_ITER: [usize; 13] = [2, 2, 2, 2, 2, 2, 2, 2, 2, 3, 3, 4, 5];
const TABLE_FBAR: [&str; 13] = [
    "0.309", "0.340", "0.348", "0.387", "0.413", "0.462", "0.451", "0.467", "0.474", "0.379", "0.377", "0.315",
    "0.293",
];

fn performance_function() -> Verdict {
    let mut misses = Vec::new();
    for col in 0..13 {
        let fbar = (0..3)
            .map(|run| perf_score(TABLE_ITER[col], TABLE_PD[run][col], TABLE_NFA[run][col]).unwrap())
            .sum::<f64>()
            / 3.0;
        let got = format!("{fbar:.3}");
        if got != TABLE_FBAR[col] {
            misses.push(format!("column {col}: {got} vs {}", TABLE_FBAR[col]));
        }
    }
    verdict(
        misses.is_empty(),
        if misses.is_empty() {
            "all 13 mean f values match to 3 decimals".to_string()
        } else {
            misses.join("; ")
        },
    )
}

fn gaussian(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.sample::<f64, _>(StandardNormal))
}

fn numerical_rank(m: &DMatrix<f64>) -> usize {
    let sv = m.clone().svd(false, false).singular_values;
    let top = sv.max();
    sv.iter().filter(|s| **s > top * 1e-9).count()
}

fn godec_oracles() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(7);

    let mut invariant_fail = 0;
    for _ in 0..100 {
        let (rows, cols) = (rng.random_range(8..40), rng.random_range(2..7));
        let rank = rng.random_range(1..3usize).min(cols);
        let s = rng.random_range(0..rows * cols / 3);
        let x = gaussian(rows, cols, &mut rng);
        let cfg = GodecConfig { rank, power: 3, cardinality: s, error_bound: 1e-3, delta: 1e-4, iter_max: 100 };
        let mut bad = false;
        godec_observed(&x, &cfg, &mut rng, |_, l, sp| {
            bad |= numerical_rank(l) > rank || sp.iter().filter(|v| **v != 0.0).count() > s;
        })
        .unwrap();
        invariant_fail += bad as usize;
    }

    let mut support_fail = 0;
    for _ in 0..50 {
        let (rows, cols, s) = (200, 8, 6);
        let u = DMatrix::from_fn(rows, 1, |_, _| rng.random_range(0.5..1.5));
        let v = DMatrix::from_fn(1, cols, |_, _| rng.random_range(0.5..1.5));
        let mut planted = DMatrix::zeros(rows, cols);
        let mut support = Vec::new();
        while support.len() < s {
            let i = rng.random_range(0..rows * cols);
            if !support.contains(&i) {
                support.push(i);
                let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
                planted[i] = sign * rng.random_range(8.0..12.0);
            }
        }
        let x = &u * &v + &planted;
        let cfg = GodecConfig { rank: 1, power: 3, cardinality: s, error_bound: 1e-12, delta: 1e-12, iter_max: 500 };
        let res = godec(&x, &cfg, &mut rng).unwrap();
        let mut found: Vec<usize> = (0..x.len()).filter(|&i| res.sparse[i] != 0.0).collect();
        support.sort_unstable();
        found.sort_unstable();
        support_fail += (found != support) as usize;
    }

    let mut brp_worst: f64 = 0.0;
    for _ in 0..100 {
        let x = gaussian(20, 1, &mut rng) * gaussian(1, 5, &mut rng);
        let eig = x.tr_mul(&x).symmetric_eigen();
        let top = eig.eigenvalues.imax();
        let vtop = eig.eigenvectors.column(top).into_owned();
        let oracle = &x * &vtop * vtop.transpose();
        let l = brp_low_rank(&x, 1, 3, &mut rng).unwrap();
        brp_worst = brp_worst.max((&l - &oracle).norm() / oracle.norm());
    }

    let mut project_fail = 0;
    for _ in 0..1000 {
        let m = gaussian(rng.random_range(1..25), rng.random_range(1..10), &mut rng);
        let s = rng.random_range(0..=m.len());
        let mut idx: Vec<usize> = (0..m.len()).collect();
        idx.sort_by(|&a, &b| m[b].abs().total_cmp(&m[a].abs()).then(a.cmp(&b)));
        let mut oracle = DMatrix::zeros(m.nrows(), m.ncols());
        for &i in idx.iter().take(s) {
            oracle[i] = m[i];
        }
        project_fail += (sparse_project(&m, s).unwrap() != oracle) as usize;
    }

    verdict(
        invariant_fail == 0 && support_fail == 0 && brp_worst < 1e-6 && project_fail == 0,
        format!(
            "(a) invariant failures {invariant_fail}/100; (b) support misses {support_fail}/50; \
             (c) worst BRP vs SVD {brp_worst:.1e}; (d) projection mismatches {project_fail}/1000"
        ),
    )
}

fn cfar_calibration() -> Verdict {
    let p_fa = 1e-3;
    let (m, n) = (1000, 1000);
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let field = DMatrix::from_fn(m, n, |_, _| -(1.0 - rng.random::<f64>()).ln());
    let params = CfarParams { guard_cells: 8, reference_cells: 40, false_alarm_rate: p_fa, os_rank: 10 };
    let det = cfar_detect(&field, &params, CfarKind::Ca).unwrap();
    // range edges have a truncated reference ring
    let edge = 3;
    let hits = det.cells.iter().filter(|(i, _)| *i >= edge && *i < m - edge).count() as f64;
    let cuts = ((m - 2 * edge) * n) as f64;
    let rate = hits / cuts;
    let sigma = (p_fa * (1.0 - p_fa) / cuts).sqrt();
    let alpha = ca_threshold_factor(1e-9, 40).unwrap();
    verdict(
        (rate - p_fa).abs() < 3.0 * sigma && (alpha - 27.15).abs() <= 0.01,
        format!(
            "P_fa {rate:.3e} over {cuts:.0} CUTs (3 sigma band {:.3e}..{:.3e}); alpha(40, 1e-9) = {alpha:.4}",
            p_fa - 3.0 * sigma,
            p_fa + 3.0 * sigma
        ),
    )
}

fn timing_order() -> Verdict {
    let table = benchmark(&Scenario::reference(), &[Scheme::RawCa, Scheme::MtiCa, Scheme::GodecCa], 3).unwrap();
    let cfar = table.stage_seconds(Stage::CaCfar).unwrap();
    let godec = table.stage_seconds(Stage::Godec).unwrap();
    let mti = table.stage_seconds(Stage::Mti).unwrap();
    verdict(
        cfar > godec && godec > mti,
        format!("per scan: CA-CFAR {cfar:.4} s > GoDec {godec:.4} s > MTI {mti:.5} s"),
    )
}

fn leakage_band() -> Verdict {
    let grid = [1usize, 2, 3, 5, 10, 18];
    let mut lines = Vec::new();
    let mut pass = true;
    for seed in 1..=3 {
        let s = Scenario::leakage_band().with_seed(seed);
        let sim = simulate(&s).unwrap();
        let mti = run_scheme_on(&s, &sim.scans, Scheme::MtiOs).unwrap().p_d;
        let best = grid
            .iter()
            .map(|&n_mov| {
                let mut g = s.clone();
                g.godec.n_mov = n_mov;
                (n_mov, run_scheme_on(&g, &sim.scans, Scheme::GodecCa).unwrap().p_d)
            })
            .fold((0, -1.0), |acc, x| if x.1 > acc.1 { x } else { acc });
        pass &= mti == 0.0 && best.1 > 0.0;
        lines.push(format!("seed {seed}: mti_os {mti}, godec_ca best {} at N_mov {}", best.1, best.0));
    }
    verdict(pass, lines.join("; "))
}

type Check<'a> = Box<dyn Fn() -> Verdict + 'a>;

fn main() -> ExitCode {
    let only: Option<Vec<usize>> = std::env::var("ACCEPTANCE_ONLY")
        .ok()
        .map(|v| v.split(',').filter_map(|x| x.trim().parse().ok()).collect());
    let wanted = |id: usize| only.as_ref().is_none_or(|o| o.contains(&id));

    let needs_runs = [2, 3, 4].iter().any(|&i| wanted(i));
    let runs = needs_runs.then(|| reference_runs(10, 3));

    let criteria: Vec<(usize, &str, Check)> = vec![
        (1, "clutter statistics", Box::new(clutter_statistics)),
        (2, "masking effect", Box::new(|| masking(runs.as_ref().unwrap()))),
        (3, "MTI degradation", Box::new(|| mti_degradation(runs.as_ref().unwrap()))),
        (4, "GoDec recovery", Box::new(|| godec_recovery(&runs.as_ref().unwrap()[..3]))),
        (5, "tradeoff structure", Box::new(tradeoff)),
        (6, "performance function", Box::new(performance_function)),
        (7, "GoDec oracles", Box::new(godec_oracles)),
        (8, "CFAR calibration", Box::new(cfar_calibration)),
        (9, "timing ordering", Box::new(timing_order)),
        (10, "leakage-band emulation", Box::new(leakage_band)),
    ];

    let mut failed = 0;
    for (id, name, check) in &criteria {
        if !wanted(*id) {
            continue;
        }
        let v = check();
        failed += !v.pass as usize;
        println!("criterion {id:>2} {name}: {} ({})", if v.pass { "PASS" } else { "FAIL" }, v.detail);
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    }
}
