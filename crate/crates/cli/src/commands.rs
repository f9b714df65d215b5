//! The five pipeline stages and their file artifacts.

use std::path::{Path, PathBuf};

use num_complex::Complex64;
use plasmo_core::cgpt::compute_cgpt;
use plasmo_core::forward::{
    absorption_proxy, default_angles, local_maxima, scan_response, simulate_measurements, ForwardOptions, MeasurementSet,
    PairResponse, ResponseCurve, Scene,
};
use plasmo_core::geometry::symmetric_difference_area;
use plasmo_core::inversion::{recover_cgpt, FitReport, RecoveryOptions};
use plasmo_core::shaperec::{default_init, pull_back, reconstruct, ReconstructOptions, ShapeIterate};
use plasmo_core::{BoundaryCurve, CgptTable, InteractionOperator, Point, StarShape};
use serde::Serialize;

use crate::config::{Format, InitMode, PipelineConfig};
use crate::output::{read_json, svg_plot, write_csv, write_json, write_json_lines, write_text, Series};
use crate::CliError;

/// Resolved configuration plus command-line overrides.
#[derive(Clone, Debug)]
pub struct Context {
    pub config: PipelineConfig,
    pub out: PathBuf,
}

impl Context {
    pub fn new(config: PipelineConfig, out: Option<PathBuf>, seed: Option<u64>) -> Result<Self, CliError> {
        let mut config = config;
        if let Some(seed) = seed {
            config.inversion.seed = seed;
        }
        config.validate()?;
        let out = out.unwrap_or_else(|| config.output.directory.clone());
        Ok(Context { config, out })
    }

    fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    fn wants(&self, f: Format) -> bool {
        self.config.output.formats.contains(&f)
    }

    pub fn forward_options(&self) -> Result<ForwardOptions, CliError> {
        let c = &self.config;
        Ok(ForwardOptions {
            r2: c.geometry.r2,
            d: c.d(),
            lambda1: c.lambda1()?,
            nodes: c.numerics.nodes,
            truncation: c.numerics.truncation,
            im_lambda2: c.physics.im_lambda2,
            scan: c.numerics.scan,
            mode: c.inversion.mode,
            rotation: c.inversion.rotation,
        })
    }

    pub fn scene(&self) -> Result<Scene, CliError> {
        Ok(Scene::new(&self.config.target()?, self.forward_options()?)?)
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct SpectrumReport {
    pub transformed_radii: [f64; 2],
    pub radius_ratio: f64,
    pub lambda1: f64,
    /// Eigenvalues of the truncated interaction operator, by decreasing magnitude.
    pub eigenvalues: Vec<f64>,
    pub bare_peaks: Vec<f64>,
    pub target_peaks: Option<Vec<f64>>,
}

fn bare_response(scene: &Scene) -> Result<PairResponse, CliError> {
    let n_tr = scene.options.truncation;
    let r2t = scene.radii().1;
    let op = InteractionOperator::assemble(&CgptTable::zeros(n_tr, scene.options.lambda1), r2t, n_tr)?;
    let spec = op.eigenpairs(2 * n_tr)?;
    Ok(PairResponse::new(&op, &spec, scene.pair()))
}

/// Response scan with and without the target, the operator spectrum and optional Drude sweep.
pub fn forward(ctx: &Context, no_target: bool) -> Result<SpectrumReport, CliError> {
    let scene = ctx.scene()?;
    let im = ctx.config.physics.im_lambda2;
    let grid = &ctx.config.numerics.scan;
    let bare = scan_response(&bare_response(&scene)?, grid, im)?;
    let (r1t, r2t) = scene.radii();
    let with_target = if no_target { None } else { Some(scan_response(&scene.response_at(0.0)?, grid, im)?) };
    let eigenvalues = if no_target { Vec::new() } else { scene.operator_at(0.0)?.eigenvalues()? };
    let report = SpectrumReport {
        transformed_radii: [r1t, r2t],
        radius_ratio: r1t / r2t,
        lambda1: scene.options.lambda1,
        eigenvalues,
        bare_peaks: local_maxima(&bare),
        target_peaks: with_target.as_ref().map(local_maxima),
    };
    write_json(&ctx.path("spectrum.json"), &report)?;
    let mut headers = vec!["lambda", "bare"];
    let mut cols: Vec<&[f64]> = vec![&bare.lambda, &bare.response];
    if let Some(t) = &with_target {
        headers.push("target");
        cols.push(&t.response);
    }
    if ctx.wants(Format::Csv) {
        write_csv(&ctx.path("response.csv"), &headers, &cols)?;
    }
    if ctx.wants(Format::Svg) {
        write_text(&ctx.path("response.svg"), &response_svg(&bare, with_target.as_ref()))?;
    }
    if let Some(model) = ctx.config.drude()? {
        let spec = ctx.config.physics.drude.as_ref().expect("drude section present");
        let resp = if no_target { bare_response(&scene)? } else { scene.response_at(0.0)? };
        let n = spec.samples;
        let mut cols: Vec<Vec<f64>> = (0..5).map(|_| Vec::with_capacity(n)).collect();
        for i in 0..n {
            let w = spec.omega_lo + (spec.omega_hi - spec.omega_lo) * i as f64 / (n - 1) as f64;
            let l: Complex64 = model.lambda_of_omega(w)?;
            let m = resp.polarization(l)?;
            cols[0].push(w);
            cols[1].push(l.re);
            cols[2].push(l.im);
            cols[3].push(m.norm());
            cols[4].push(absorption_proxy(&m, [1.0, 0.0]));
        }
        if ctx.wants(Format::Csv) {
            let refs: Vec<&[f64]> = cols.iter().map(|c| c.as_slice()).collect();
            write_csv(&ctx.path("drude.csv"), &["omega", "lambda_re", "lambda_im", "response", "absorption"], &refs)?;
        }
    }
    Ok(report)
}

fn response_svg(bare: &ResponseCurve, target: Option<&ResponseCurve>) -> String {
    let log = |c: &ResponseCurve| -> Vec<(f64, f64)> { c.lambda.iter().zip(&c.response).map(|(x, y)| (*x, y.log10())).collect() };
    let b = log(bare);
    let t = target.map(log);
    let mut series = vec![Series { points: &b, stroke: "gray", width: 1.0, closed: false, dashed: true }];
    if let Some(t) = &t {
        series.push(Series { points: t, stroke: "black", width: 1.0, closed: false, dashed: false });
    }
    svg_plot("log10 |M| against Re lambda", &series, false)
}

/// Peak pairs at the configured rotation angles.
pub fn measure(ctx: &Context) -> Result<MeasurementSet, CliError> {
    let scene = ctx.scene()?;
    let inv = &ctx.config.inversion;
    let meas = simulate_measurements(&scene, &default_angles(inv.angles), inv.noise, inv.seed)?;
    write_json(&ctx.path("measurements.json"), &meas)?;
    if ctx.wants(Format::Csv) {
        write_csv(&ctx.path("measurements.csv"), &["angle", "P1", "P2"], &[&meas.angles, &meas.p1, &meas.p2])?;
    }
    Ok(meas)
}

#[derive(Clone, Debug, Serialize)]
pub struct FitSummary {
    #[serde(flatten)]
    pub report: FitReport,
    /// Relative Frobenius error over `m + n ≤ 4k + 1` against a supplied ground truth.
    pub relative_error: Option<f64>,
}

/// Recovered table and fit report from a measurement file.
pub fn recover(ctx: &Context, measurements: &Path, truth: Option<&Path>) -> Result<(CgptTable, FitSummary), CliError> {
    let meas: MeasurementSet = read_json(measurements)?;
    let c = &ctx.config;
    let pair = plasmo_core::DiskPair::new(c.geometry.delta, c.geometry.r2, c.d())?;
    let opts = RecoveryOptions {
        level: c.inversion.level,
        lambda1: c.lambda1()?,
        truncation: c.numerics.truncation,
        max_iterations: c.inversion.max_iterations,
        gradient_tol: 1e-12,
        starts: c.inversion.starts,
        seed: c.inversion.seed,
    };
    let rec = recover_cgpt(&meas, pair.transformed_radii().1, &opts)?;
    let table = rec.table(c.numerics.truncation);
    let relative_error = match truth {
        Some(p) => {
            let t: CgptTable = read_json(p)?;
            Some(table.relative_error(&t, 4 * c.inversion.level + 1))
        }
        None => None,
    };
    let summary = FitSummary { report: rec.report, relative_error };
    write_json(&ctx.path("cgpt.json"), &table)?;
    write_json(&ctx.path("fit.json"), &summary)?;
    Ok((table, summary))
}

#[derive(Clone, Debug, Serialize)]
pub struct ShapeSummary {
    pub iterations: usize,
    pub initial_loss: f64,
    pub final_loss: f64,
    /// Reconstructed image of the target in the transformed plane.
    pub transformed_shape: StarShape,
    /// `|D1 Δ D1_rec| / |D1|` when the true target is known.
    pub relative_symmetric_difference: Option<f64>,
}

/// Descent from the recovered table, pull-back and overlay plot.
pub fn reconstruct_shape(ctx: &Context, cgpt: &Path, truth: Option<&StarShape>) -> Result<ShapeSummary, CliError> {
    let table: CgptTable = read_json(cgpt)?;
    let c = &ctx.config;
    let r = &c.reconstruction;
    let init = match r.init {
        InitMode::Ellipse => default_init(&table, r.shape_order)?,
        InitMode::Disk => {
            let m = table.first_order();
            let rho = (table.lambda() * m.trace() / (2.0 * std::f64::consts::PI)).abs().sqrt();
            StarShape::circle([table.origin().x, table.origin().y], rho)?.with_order(r.shape_order)
        }
    };
    let opts = ReconstructOptions {
        iterations: r.iterations,
        nodes: c.numerics.nodes,
        shape_order: r.shape_order,
        descent: r.descent,
        multi_resolution: r.multi_resolution,
    };
    let history: Vec<ShapeIterate> = reconstruct(&table, &init, c.numerics.cgpt_order, &opts)?;
    write_json_lines(&ctx.path("history.jsonl"), &history)?;
    let last = history.last().expect("history holds the initial iterate");
    let pair = plasmo_core::DiskPair::new(c.geometry.delta, c.geometry.r2, c.d())?;
    let map = pair.map();
    let nodes = 512;
    let physical = pull_back(&map, &last.shape.sample(nodes)?)?;
    let xs: Vec<f64> = physical.nodes().iter().map(|p| p.x).collect();
    let ys: Vec<f64> = physical.nodes().iter().map(|p| p.y).collect();
    if ctx.wants(Format::Csv) {
        write_csv(&ctx.path("boundary.csv"), &["x", "y"], &[&xs, &ys])?;
    }
    let truth_curve = truth.map(|t| t.sample(nodes)).transpose()?;
    let relative = match (truth, &truth_curve) {
        (Some(t), Some(tc)) => Some(symmetric_difference_area(&physical, tc, t.center(), 4096)? / tc.area()),
        _ => None,
    };
    if ctx.wants(Format::Svg) {
        write_text(&ctx.path("overlay.svg"), &overlay_svg(&physical, truth_curve.as_ref()))?;
    }
    let summary = ShapeSummary {
        iterations: history.len() - 1,
        initial_loss: history[0].loss,
        final_loss: last.loss,
        transformed_shape: last.shape.clone(),
        relative_symmetric_difference: relative,
    };
    write_json(&ctx.path("shape.json"), &summary)?;
    Ok(summary)
}

fn overlay_svg(recon: &BoundaryCurve, truth: Option<&BoundaryCurve>) -> String {
    let pts = |c: &BoundaryCurve| -> Vec<(f64, f64)> { c.nodes().iter().map(|p| (p.x, p.y)).collect() };
    let r = pts(recon);
    let t = truth.map(pts);
    let mut series = Vec::new();
    if let Some(t) = &t {
        series.push(Series { points: t, stroke: "gray", width: 3.0, closed: true, dashed: false });
    }
    series.push(Series { points: &r, stroke: "black", width: 1.5, closed: true, dashed: false });
    svg_plot("original (gray) and reconstruction (black)", &series, true)
}

#[derive(Clone, Debug, Serialize)]
pub struct PipelineSummary {
    pub radius_ratio: f64,
    pub fit: FitSummary,
    pub shape: ShapeSummary,
}

/// All stages end to end, with the directly computed tensors of the image as ground truth.
pub fn pipeline(ctx: &Context) -> Result<PipelineSummary, CliError> {
    let spectrum = forward(ctx, false)?;
    measure(ctx)?;
    let scene = ctx.scene()?;
    let truth_table = ground_truth(&scene)?;
    write_json(&ctx.path("truth.json"), &truth_table)?;
    let (_, fit) = recover(ctx, &ctx.path("measurements.json"), Some(&ctx.path("truth.json")))?;
    let shape = reconstruct_shape(ctx, &ctx.path("cgpt.json"), Some(&scene.placed.shape))?;
    let summary = PipelineSummary { radius_ratio: spectrum.radius_ratio, fit, shape };
    write_json(&ctx.path("summary.json"), &summary)?;
    Ok(summary)
}

/// Tensors of the unrotated image computed directly on its boundary.
pub fn ground_truth(scene: &Scene) -> Result<CgptTable, CliError> {
    let image = scene.image_curve(0.0)?;
    Ok(compute_cgpt(&image, scene.options.lambda1, scene.options.truncation, Point::zeros())?)
}
