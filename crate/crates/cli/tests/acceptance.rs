//! Acceptance criteria, one pass/fail line each. Runs without the libtest harness so every
//! line is printed; exits nonzero when any criterion fails.

use std::f64::consts::PI;
use std::fs;
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use plasmo_cli::commands::{self, Context};
use plasmo_cli::config::PipelineConfig;
use plasmo_core::cgpt::compute_cgpt;
use plasmo_core::conformal::place_target;
use plasmo_core::forward::{default_angles, simulate_measurements};
use plasmo_core::forward::{find_peaks, local_maxima, scan_response, ForwardOptions, PairResponse, ScanGrid, Scene};
use plasmo_core::inversion::{recover_cgpt, RecoveryOptions};
use plasmo_core::shaperec::{objective, shape_gradient};
use plasmo_core::{BoundaryCurve, CgptTable, DirectOperator, DiskPair, InteractionOperator, LayerPotentials, Point, StarShape};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Criterion = (&'static str, Box<dyn Fn() -> Outcome>);

struct Outcome {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn random_shape(rng: &mut ChaCha8Rng, radius: f64) -> StarShape {
    let ak: Vec<f64> = (0..5).map(|_| rng.random_range(-0.06..0.06) * radius).collect();
    let bk: Vec<f64> = (0..5).map(|_| rng.random_range(-0.06..0.06) * radius).collect();
    StarShape::new([rng.random_range(-0.1..0.1) * radius, rng.random_range(-0.1..0.1) * radius], radius, ak, bk, 0.0).unwrap()
}

fn flower(delta: f64) -> StarShape {
    StarShape::flower([0.0, 0.0], delta / 1.3, 5, 0.3).unwrap()
}

fn c1_conformal_radii() -> Outcome {
    let start = Instant::now();
    let reps = 1000;
    let mut ratio = 0.0;
    for _ in 0..reps {
        let (t1, t2) = DiskPair::new(1e-3, 1.0, 5e-3).unwrap().transformed_radii();
        ratio = t1 / t2;
    }
    let per_call = start.elapsed() / reps;
    let pass = (ratio - 0.127).abs() <= 1e-3 && per_call < Duration::from_millis(1);
    verdict(pass, format!("r1~/r2~ = {ratio:.6} (target 0.127 +- 0.001), {per_call:?} per evaluation"))
}

fn c2_np_spectrum() -> Outcome {
    let circle = BoundaryCurve::circle(Point::zeros(), 1.0, 256).unwrap();
    let s = LayerPotentials::new(&circle).spectrum().unwrap();
    let circle_max = s.values.iter().fold(0.0, |m: f64, v| m.max(v.abs()));
    let ellipse = BoundaryCurve::ellipse(2.0, 1.0, 256).unwrap();
    let e = LayerPotentials::new(&ellipse).spectrum_truncated(2).unwrap();
    let mut lead = e.values.clone();
    lead.sort_by(f64::total_cmp);
    let ellipse_err = (lead[0] + 1.0 / 6.0).abs().max((lead[1] - 1.0 / 6.0).abs());
    verdict(
        circle_max < 1e-10 && ellipse_err < 1e-6,
        format!("circle max |lambda| = {circle_max:.2e}, ellipse (2,1) leading pair error = {ellipse_err:.2e}"),
    )
}

fn c3_cgpt() -> Outcome {
    let mut disk_err: f64 = 0.0;
    let rho: f64 = 0.8;
    let disk = BoundaryCurve::circle(Point::zeros(), rho, 128).unwrap();
    for lambda in [1.0, -2.0, 0.75] {
        let t = compute_cgpt(&disk, lambda, 6, Point::zeros()).unwrap();
        for n in 1..=6 {
            let e = PI * n as f64 * rho.powi(2 * n as i32) / lambda;
            let b = t.block(n, n);
            disk_err = disk_err.max((b[(0, 0)] - e).abs() / e.abs()).max((b[(1, 1)] - e).abs() / e.abs());
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut sym: f64 = 0.0;
    let mut rot: f64 = 0.0;
    for _ in 0..10 {
        let shape = random_shape(&mut rng, 1.0);
        let lambda = rng.random_range(0.6..3.0) * if rng.random_bool(0.5) { 1.0 } else { -1.0 };
        let t = compute_cgpt(&shape.sample(256).unwrap(), lambda, 6, Point::zeros()).unwrap();
        sym = sym.max(t.symmetry_defect());
        let theta = rng.random_range(0.0..2.0 * PI);
        let direct =
            compute_cgpt(&shape.rotate_about(theta, Point::zeros()).sample(256).unwrap(), lambda, 6, Point::zeros()).unwrap();
        rot = rot.max(t.rotated(theta).relative_error(&direct, 12));
    }
    verdict(
        disk_err < 1e-8 && sym < 1e-8 && rot < 1e-6,
        format!("disk diagonal error {disk_err:.2e}, symmetry defect {sym:.2e}, rotation law error {rot:.2e}"),
    )
}

fn c4_spectral_equivalence() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst: f64 = 0.0;
    let mut slowest = Duration::ZERO;
    for _ in 0..5 {
        let start = Instant::now();
        let delta = 1e-3;
        let shape = random_shape(&mut rng, delta / 1.4).rotate(rng.random_range(0.0..2.0 * PI));
        let c = rng.random_range(0.5..10.0);
        let placed = place_target(&shape, 1.0, c * delta).unwrap();
        let pair = placed.pair;
        let phys = placed.shape.sample(256).unwrap();
        let img = pair.map().transform_curve(&phys).unwrap();
        let (_, t2) = pair.transformed_radii();
        let n_tr = 12;
        let table = compute_cgpt(&img, 1.0, n_tr, Point::zeros()).unwrap();
        let annulus = InteractionOperator::assemble(&table, t2, n_tr).unwrap().eigenvalues().unwrap();
        let direct = DirectOperator::new(Some(&phys), &pair, 1.0, 256).unwrap().eigenvalues(4).unwrap();
        for (d, a) in direct.iter().zip(&annulus) {
            worst = worst.max((d - a).abs() / a.abs());
        }
        slowest = slowest.max(start.elapsed());
    }
    verdict(
        worst < 1e-3 && slowest < Duration::from_secs(30),
        format!("worst relative gap over leading 4 eigenvalues {worst:.2e}, slowest configuration {slowest:?}"),
    )
}

fn c5_decay() -> Outcome {
    let delta = 1e-3;
    let placed = place_target(&flower(delta).rotate(0.3), 1.0, 5.0 * delta).unwrap();
    let pair = placed.pair;
    let (t1, t2) = pair.transformed_radii();
    let img = pair.map().transform_curve(&placed.shape.sample(256).unwrap()).unwrap();
    let table = compute_cgpt(&img, 1.0, 11, Point::zeros()).unwrap();
    let op = InteractionOperator::assemble(&table, t2, 11).unwrap();
    let q = t1 / t2;
    // largest normalized operator block entry at each total degree
    let per_degree: Vec<f64> = (2..=12)
        .map(|s| {
            table
                .pairs_up_to(s)
                .filter(|&(m, n)| m + n == s)
                .map(|(m, n)| op.block(m, n).amax() / q.powi(s as i32))
                .fold(0.0, f64::max)
        })
        .collect();
    let fitted = |hi: usize| per_degree[..=hi - 2].iter().cloned().fold(0.0, f64::max);
    let c_full = fitted(12);
    let spread = (6..=12).map(|hi| (fitted(hi) / c_full - 1.0).abs()).fold(0.0, f64::max);
    verdict(spread <= 0.2, format!("fitted C = {c_full:.4e}, largest drift over degree windows {spread:.3}"))
}

fn c6_resonances() -> Outcome {
    let im = 3e-3;
    let opts = ForwardOptions::default();
    let scene = Scene::new(&flower(1e-3), opts.clone()).unwrap();
    let n_tr = opts.truncation;
    let bare_op = InteractionOperator::assemble(&CgptTable::zeros(n_tr, 1.0), scene.radii().1, n_tr).unwrap();
    let bare = PairResponse::new(&bare_op, &bare_op.eigenpairs(2 * n_tr).unwrap(), scene.pair());
    let bare_peaks = local_maxima(&scan_response(&bare, &opts.scan, im).unwrap());
    let bare_ok = bare_peaks.len() == 1 && bare_peaks[0].abs() < opts.scan.step;
    let default_count = local_maxima(&scan_response(&scene.response_at(0.0).unwrap(), &opts.scan, im).unwrap()).len();

    // a strong-regime target whose leading resonances separate by more than the damping
    let strong = ForwardOptions { d: 0.1, ..ForwardOptions::default() };
    let target = StarShape::ellipse([0.0, 0.0], 0.2, 0.1, 0.0, 8).unwrap();
    let scene = Scene::new(&target, strong.clone()).unwrap();
    let eig = scene.operator_at(0.0).unwrap().eigenvalues().unwrap();
    let curve = scan_response(&scene.response_at(0.0).unwrap(), &ScanGrid::default(), im).unwrap();
    let peaks = local_maxima(&curve);
    let mut pos_err: f64 = 0.0;
    let top = find_peaks(&curve, 2);
    if let Ok(top) = &top {
        for (p, e) in top.iter().zip(&eig) {
            pos_err = pos_err.max((p - e).abs());
        }
    }
    let pass = bare_ok && peaks.len() >= 2 && top.is_ok() && pos_err <= im;
    verdict(
        pass,
        format!(
            "bare peaks {bare_peaks:?}; strong ellipse shows {} peaks, leading positions within {pos_err:.2e} of eigenvalues; default flower shows {default_count}",
            peaks.len()
        ),
    )
}

fn c7_recovery() -> Outcome {
    let start = Instant::now();
    let scene = Scene::new(&flower(1e-3), ForwardOptions::default()).unwrap();
    let meas = simulate_measurements(&scene, &default_angles(11), 0.0, 0).unwrap();
    let rec = recover_cgpt(&meas, scene.radii().1, &RecoveryOptions::default()).unwrap();
    let err = rec.table(8).relative_error(&scene.table, 5);
    let elapsed = start.elapsed();
    verdict(
        err <= 1e-3 && elapsed < Duration::from_secs(600),
        format!(
            "relative error over m+n<=5 = {err:.3e}, Jacobian rank {} of 22, residual {:.2e}, {elapsed:?}",
            rec.report.rank, rec.report.residual
        ),
    )
}

fn c8_shape_gradient() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let truth = compute_cgpt(&flower(1.0).sample(128).unwrap(), 1.0, 4, Point::zeros()).unwrap();
    let mut worst: f64 = 0.0;
    for _ in 0..3 {
        let shape = random_shape(&mut rng, 1.0);
        let g = shape_gradient(&shape, &truth, 5, 128).unwrap();
        for _ in 0..3 {
            let dir: Vec<f64> = (0..g.coefficients.len()).map(|_| rng.random_range(-1.0..1.0)).collect();
            let exact: f64 = dir.iter().zip(&g.coefficients).map(|(d, g)| d * g).sum();
            let c = shape.coefficients();
            let best = [1e-2, 1e-3, 1e-4, 1e-5, 1e-6]
                .iter()
                .map(|&eps| {
                    let plus: Vec<f64> = c.iter().zip(&dir).map(|(c, d)| c + eps * d).collect();
                    let minus: Vec<f64> = c.iter().zip(&dir).map(|(c, d)| c - eps * d).collect();
                    let jp = objective(&shape.with_coefficients(&plus), &truth, 5, 128).unwrap();
                    let jm = objective(&shape.with_coefficients(&minus), &truth, 5, 128).unwrap();
                    ((jp - jm) / (2.0 * eps) - exact).abs() / exact.abs()
                })
                .fold(f64::INFINITY, f64::min);
            worst = worst.max(best);
        }
    }
    verdict(worst < 1e-4, format!("worst over 9 cases of the best relative error in the step sweep {worst:.2e}"))
}

fn c9_end_to_end(dir: &Path) -> Outcome {
    let start = Instant::now();
    let ctx = Context::new(PipelineConfig::default(), Some(dir.to_path_buf()), None).unwrap();
    match commands::pipeline(&ctx) {
        Ok(s) => {
            let rel = s.shape.relative_symmetric_difference.unwrap_or(f64::INFINITY);
            let elapsed = start.elapsed();
            verdict(
                rel <= 0.05 && elapsed < Duration::from_secs(1200),
                format!(
                    "symmetric difference {:.2}% of |D1|, tensor recovery error {:.2e}, {elapsed:?}",
                    100.0 * rel,
                    s.fit.relative_error.unwrap_or(f64::NAN)
                ),
            )
        }
        Err(e) => verdict(false, format!("pipeline failed: {e}")),
    }
}

fn c10_determinism(root: &Path) -> Outcome {
    let dirs = [root.join("run1"), root.join("run2")];
    for d in &dirs {
        let out =
            Command::new(env!("CARGO_BIN_EXE_plasmo")).arg("--out").arg(d).args(["--seed", "42", "pipeline"]).output().unwrap();
        if !out.status.success() {
            return verdict(false, format!("pipeline exited with {:?}", out.status.code()));
        }
    }
    let mut names: Vec<String> = fs::read_dir(&dirs[0])
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .filter(|n| n.ends_with(".json") || n.ends_with(".jsonl") || n.ends_with(".csv"))
        .collect();
    names.sort();
    let differing: Vec<&String> =
        names.iter().filter(|n| fs::read(dirs[0].join(n)).ok() != fs::read(dirs[1].join(n)).ok()).collect();
    verdict(differing.is_empty() && !names.is_empty(), format!("{} files compared, differing: {differing:?}", names.len()))
}

fn main() {
    let _ = env_logger::builder().is_test(true).parse_filters("error").try_init();
    let tmp = tempfile::tempdir().unwrap();
    let criteria: Vec<Criterion> = vec![
        ("conformal radii", Box::new(c1_conformal_radii)),
        ("disk and ellipse NP spectra", Box::new(c2_np_spectrum)),
        ("CGPT correctness", Box::new(c3_cgpt)),
        ("direct vs annulus spectral equivalence", Box::new(c4_spectral_equivalence)),
        ("tensor decay bound", Box::new(c5_decay)),
        ("resonance phenomenology", Box::new(c6_resonances)),
        ("CGPT recovery from 11 angles", Box::new(c7_recovery)),
        ("shape gradient vs finite differences", Box::new(c8_shape_gradient)),
        ("end-to-end reconstruction", Box::new(c9_end_to_end_boxed(tmp.path().join("e2e")))),
        ("pipeline determinism", Box::new(c10_boxed(tmp.path().join("det")))),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let o = f();
        failed += usize::from(!o.pass);
        println!("criterion {:>2} [{}] {name}: {}", i + 1, if o.pass { "PASS" } else { "FAIL" }, o.detail);
    }
    println!("acceptance: {} of {} criteria pass", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}

fn c9_end_to_end_boxed(dir: std::path::PathBuf) -> impl Fn() -> Outcome {
    move || c9_end_to_end(&dir)
}

fn c10_boxed(dir: std::path::PathBuf) -> impl Fn() -> Outcome {
    move || c10_determinism(&dir)
}
