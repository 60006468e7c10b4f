//! Subcommand implementations. Everything is validated and computed before the first
//! output file is written.

use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{anyhow, Context};
use depthguide::dense::render_dense;
use depthguide::io::{decode_pfm, encode_pfm, encode_png};
use depthguide::morphology::{aggregate, StructuringElement};
use depthguide::normal_sr::{build_multi_depth, MultiDepthMap, OffsetParams, SrMethod, SrOptions};
use depthguide::pipeline::{lr_depth, PipelineConfig};
use depthguide::{Raster, Scene};
use serde::Serialize;

use crate::manifest::Staged;
use crate::{contract, input, Cli, CliResult, Command, Failure, Global, Method, SrFlags};

pub fn run(cli: &Cli) -> CliResult<()> {
    let g = &cli.global;
    match &cli.command {
        Command::RenderLr => render_lr(g),
        Command::BuildDepth { depth, normal, alpha, aggregate_only, sr } => {
            let paths = [
                or_default(depth, g, "depth.pfm"),
                or_default(normal, g, "normal.pfm"),
                or_default(alpha, g, "alpha.pfm"),
            ];
            if *aggregate_only {
                aggregate_only_cmd(g, &paths[0], alpha.as_deref(), sr)
            } else {
                build_depth(g, &paths, sr)
            }
        }
        Command::RenderHr { multi_depth, mask, full_pipeline, oracle, report, sr } => crate::commands::render_hr(
            g,
            &or_default(multi_depth, g, "multi_depth.pfm"),
            &or_default(mask, g, "hr_mask.pfm"),
            *full_pipeline,
            *oracle,
            report.is_some(),
            sr,
        ),
        Command::Bench { suite, runs } => bench(g, suite, *runs),
        Command::Sweep { yaw, images, sr } => sweep(g, yaw, *images, sr),
    }
}

fn or_default(p: &Option<PathBuf>, g: &Global, name: &str) -> PathBuf {
    p.clone().unwrap_or_else(|| g.out.join(name))
}

fn ms_since(t: Instant) -> f64 {
    t.elapsed().as_secs_f64() * 1e3
}

fn load_scene(g: &Global) -> CliResult<Scene> {
    input(Scene::resolve(&g.scene).with_context(|| format!("loading scene '{}'", g.scene)))
}

pub fn sr_options(f: &SrFlags) -> SrOptions {
    SrOptions {
        se: StructuringElement::flat(f.se_k),
        aggregate: !f.no_aggregate,
        method: match f.method {
            Method::NormalGuided => SrMethod::NormalGuided,
            Method::Bilinear => SrMethod::Bilinear,
        },
        offsets: OffsetParams { eps_g: f.eps_g, ..OffsetParams::default() },
        eps_z: f.eps_z,
        passes: f.passes,
        ..SrOptions::default()
    }
}

fn config(g: &Global, sr: Option<&SrFlags>) -> CliResult<PipelineConfig> {
    let mut cfg = PipelineConfig::new(g.profile, g.seed);
    if let Some(f) = sr {
        cfg.sr = sr_options(f);
    }
    input(cfg.validate())?;
    Ok(cfg)
}

/// Reads a PFM that an earlier stage should have produced.
fn read_stage_input(staged: &mut Staged, path: &Path, what: &str) -> CliResult<Raster> {
    let bytes = contract(std::fs::read(path).with_context(|| format!("{what} map {} is missing", path.display())))?;
    let r = contract(decode_pfm(&bytes).with_context(|| format!("{what} map {}", path.display())))?;
    contract(staged.input(path))?;
    Ok(r)
}

fn commit<C: Serialize>(staged: Staged, command: &str, g: &Global, cfg: &C) -> CliResult<()> {
    let path = input(staged.commit(command, &g.scene, g.seed, cfg))?;
    eprintln!("wrote {}", path.display());
    Ok(())
}

fn render_lr(g: &Global) -> CliResult<()> {
    let scene = load_scene(g)?;
    let cfg = config(g, None)?;
    let fields = input(scene.fields(4))?;
    let cam = input(scene.camera(cfg.lr(), cfg.lr()))?;
    let mut render = cfg.render.clone();
    render.compute_normals = true;
    let t = Instant::now();
    let out = input(render_dense(&fields.lr, &cam, &render))?;
    let mut staged = Staged::new(&g.out);
    staged.time("render_lr", ms_since(t));
    let depth = lr_depth(&out, &cam, cfg.sr.alpha_threshold);
    staged.add("color.png", input(encode_png(&out.color))?);
    staged.add("depth.pfm", input(encode_pfm(&depth))?);
    staged.add("normal.pfm", input(encode_pfm(&out.normal))?);
    staged.add("alpha.pfm", input(encode_pfm(&out.alpha))?);
    commit(staged, "render_lr", g, &cfg)
}

fn aggregate_only_cmd(g: &Global, depth_path: &Path, alpha_path: Option<&Path>, sr: &SrFlags) -> CliResult<()> {
    let mut staged = Staged::new(&g.out);
    let depth = read_stage_input(&mut staged, depth_path, "depth")?;
    let mask = match alpha_path {
        Some(p) => read_stage_input(&mut staged, p, "alpha")?.map(|a| if a > 0.5 { 1.0 } else { 0.0 }),
        None => Raster::filled(depth.width(), depth.height(), 1, 1.0),
    };
    let se = StructuringElement::flat(sr.se_k);
    let t = Instant::now();
    let agg = contract(aggregate(&depth, &mask, &se))?;
    staged.time("aggregate", ms_since(t));
    staged.add("aggregated.pfm", input(encode_pfm(&agg.channels))?);
    commit(staged, "aggregate", g, &se)
}

fn build_depth(g: &Global, paths: &[PathBuf; 3], sr: &SrFlags) -> CliResult<()> {
    let scene = load_scene(g)?;
    let opts = sr_options(sr);
    input(opts.validate())?;
    let mut staged = Staged::new(&g.out);
    let depth = read_stage_input(&mut staged, &paths[0], "depth")?;
    let normal = read_stage_input(&mut staged, &paths[1], "normal")?;
    let alpha = read_stage_input(&mut staged, &paths[2], "alpha")?;
    let (w, h) = depth.dims();
    for (r, what) in [(&normal, "normal"), (&alpha, "alpha")] {
        if r.dims() != (w, h) {
            return Err(Failure::Contract(anyhow!(
                "{what} map is {}x{} but depth is {w}x{h}",
                r.width(),
                r.height()
            )));
        }
    }
    let cam = input(scene.camera(w, h))?;
    let t = Instant::now();
    let md = contract(build_multi_depth(&depth, &normal, &alpha, &cam, &opts))?;
    staged.time("build_depth", ms_since(t));
    staged.add("multi_depth.pfm", input(encode_pfm(&md.channels))?);
    staged.add("hr_mask.pfm", input(encode_pfm(&md.mask))?);
    eprintln!("multi-depth {}x{}, {} grazing pixels clamped", md.dims().0, md.dims().1, md.grazing_pixels);
    commit(staged, "build_depth", g, &opts)
}

#[derive(Serialize)]
struct HrReport {
    schema_version: u32,
    budget: depthguide::BudgetReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    oracle: Option<OracleScores>,
}

#[derive(Serialize)]
struct OracleScores {
    #[serde(with = "depthguide::metrics::score_serde")]
    psnr: f64,
    ssim: f64,
    dense: depthguide::BudgetReport,
    speedup: f64,
}

fn render_hr(g: &Global, md_path: &Path, mask_path: &Path, full: bool, oracle: bool, print: bool, sr: &SrFlags) -> CliResult<()> {
    let scene = load_scene(g)?;
    let cfg = config(g, Some(sr))?;
    let fields = input(scene.fields(4))?;
    let mut staged = Staged::new(&g.out);
    let (md, cam) = if full {
        let cam = input(scene.camera(cfg.hr(), cfg.hr()))?;
        let t = Instant::now();
        let lr_cam = input(cam.with_resolution(cfg.lr(), cfg.lr()))?;
        let mut render = cfg.render.clone();
        render.compute_normals = true;
        let lr = input(render_dense(&fields.lr, &lr_cam, &render))?;
        staged.time("render_lr", ms_since(t));
        let t = Instant::now();
        let depth = lr_depth(&lr, &lr_cam, cfg.sr.alpha_threshold);
        let md = contract(build_multi_depth(&depth, &lr.normal, &lr.alpha, &lr_cam, &cfg.sr))?;
        staged.time("build_depth", ms_since(t));
        staged.add("multi_depth.pfm", input(encode_pfm(&md.channels))?);
        staged.add("hr_mask.pfm", input(encode_pfm(&md.mask))?);
        (md, cam)
    } else {
        let channels = read_stage_input(&mut staged, md_path, "multi-depth")?;
        let mask = read_stage_input(&mut staged, mask_path, "mask")?;
        let md = contract(MultiDepthMap::new(channels, mask))?;
        if !md.is_sorted() {
            return Err(Failure::Contract(anyhow!("multi-depth {} is not sorted per pixel", md_path.display())));
        }
        let (w, h) = md.dims();
        (md, input(scene.camera(w, h))?)
    };
    let guided = contract(depthguide::render_guided(&fields.hr, &cam, &md, &cfg.guided))?;
    staged.time("render_hr", guided.report.wall_ms);
    staged.add("hr_color.png", input(encode_png(&guided.color))?);
    staged.add("hr_color.pfm", input(encode_pfm(&guided.color))?);
    let oracle = if oracle {
        let mut render = cfg.render.clone();
        render.compute_normals = false;
        let t = Instant::now();
        let dense = input(render_dense(&fields.hr, &cam, &render))?;
        let ms = ms_since(t);
        staged.time("oracle", ms);
        staged.add("oracle_color.png", input(encode_png(&dense.color))?);
        Some(OracleScores {
            psnr: input(depthguide::metrics::psnr(&guided.color, &dense.color, 1.0))?,
            ssim: input(depthguide::metrics::ssim(&guided.color, &dense.color))?,
            dense: depthguide::BudgetReport::for_dense(&dense, ms, render.alpha_threshold),
            speedup: ms / guided.report.wall_ms.max(1e-9),
        })
    } else {
        None
    };
    let report = HrReport { schema_version: crate::manifest::SCHEMA_VERSION, budget: guided.report, oracle };
    let json = input(serde_json::to_string_pretty(&report))?;
    if print {
        println!("{json}");
    }
    staged.add("budget.json", json.into_bytes());
    commit(staged, "render_hr", g, &cfg)
}

/// Largest run id already in `bench.csv`.
fn last_run_id(csv: &str) -> u64 {
    csv.lines().skip(1).filter_map(|l| l.split(',').next()?.parse().ok()).max().unwrap_or(0)
}

fn bench(g: &Global, suite: &[String], runs: usize) -> CliResult<()> {
    let cfg = config(g, None)?;
    if runs == 0 {
        return Err(Failure::Input(anyhow!("--runs must be at least 1")));
    }
    let names: Vec<String> = if suite.is_empty() {
        depthguide::scene::PRESETS.iter().map(|s| s.to_string()).collect()
    } else {
        suite.to_vec()
    };
    // resolve every scene before spending time on any of them
    let scenes = names
        .iter()
        .map(|n| input(Scene::resolve(n).with_context(|| format!("loading scene '{n}'"))))
        .collect::<CliResult<Vec<_>>>()?;
    let csv_path = g.out.join("bench.csv");
    let previous = match std::fs::read_to_string(&csv_path) {
        Ok(s) => s,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => String::new(),
        Err(e) => return Err(Failure::Input(e.into())),
    };
    let run_id = last_run_id(&previous) + 1;
    let mut staged = Staged::new(&g.out);
    let mut rows = Vec::new();
    for (name, scene) in names.iter().zip(&scenes) {
        let fields = input(scene.fields(4))?;
        let cam = input(scene.camera(cfg.hr(), cfg.hr()))?;
        let t = Instant::now();
        let row = contract(depthguide::pipeline::bench_scene(name, &fields.lr, &fields.hr, &cam, &cfg, runs))?;
        staged.time(name, ms_since(t));
        eprintln!("{name}: dense {:.1} ms, guided {:.1} ms, {:.1}x", row.dense_ms, row.guided_ms, row.speedup);
        rows.push(row);
    }
    let mut csv = if previous.is_empty() {
        format!("run_id,{}\n", depthguide::pipeline::BenchRow::CSV_HEADER)
    } else {
        previous
    };
    for r in &rows {
        csv += &format!("{run_id},{}\n", r.csv_fields());
    }
    staged.add("bench.csv", csv.into_bytes());
    let summary = serde_json::json!({
        "schema_version": crate::manifest::SCHEMA_VERSION,
        "run_id": run_id,
        "profile": cfg.profile,
        "rows": rows,
    });
    staged.add(format!("bench_run{run_id}.json"), input(serde_json::to_vec_pretty(&summary))?);
    commit(staged, "bench", g, &cfg)
}

fn sweep(g: &Global, yaw_spec: &str, images: bool, sr: &SrFlags) -> CliResult<()> {
    let yaws = input(crate::yaw::parse(yaw_spec))?;
    let scene = load_scene(g)?;
    let cfg = config(g, Some(sr))?;
    let fields = input(scene.fields(4))?;
    let cam = input(scene.camera(cfg.hr(), cfg.hr()))?;
    let t = Instant::now();
    let report = contract(depthguide::metrics::consistency_sweep(
        &scene.name,
        &fields.lr,
        &fields.hr,
        &cam,
        &scene.pivot(),
        &yaws,
        &cfg,
    ))?;
    let mut staged = Staged::new(&g.out);
    staged.time("sweep", ms_since(t));
    if images {
        for (i, &yaw) in yaws.iter().enumerate() {
            let view = input(cam.yaw_orbit(yaw, &scene.pivot()))?;
            let (_, run, oracle) = contract(depthguide::pipeline::score_view(&fields.lr, &fields.hr, &view, &cfg))?;
            staged.add(format!("view{i:02}_guided.png"), input(encode_png(&run.hr.color))?);
            staged.add(format!("view{i:02}_oracle.png"), input(encode_png(&oracle.color))?);
        }
    }
    eprintln!(
        "{} views: mean PSNR {} dB, min {} dB, mean SSIM {:.4}",
        report.views.len(),
        depthguide::pipeline::fmt_db(report.mean_psnr),
        depthguide::pipeline::fmt_db(report.min_psnr),
        report.mean_ssim
    );
    staged.add("sweep.json", input(serde_json::to_vec_pretty(&report))?);
    staged.add("sweep.csv", report.to_csv().into_bytes());
    commit(staged, "sweep", g, &cfg)
}
