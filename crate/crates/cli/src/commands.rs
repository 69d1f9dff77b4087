//! One function per subcommand. All heavy lifting lives in the library;
//! these wire files, flags, and seeds together.

use std::path::{Path, PathBuf};

use anyhow::Context;
use sif_core::{
    correspond, extract, f_score, interpolate, mix_seed, sample_near_surface, sample_surface,
    sample_uniform, CoordinateMagnitude, FitConfig, FitSamples, Label, LossWeights, Template,
    TriangleMesh, Vec3, VoxelGrid,
};
use sif_core::vec3::Aabb;

use crate::manifest::{Manifest, ManifestFiles, ManifestTransform, MANIFEST_NAME, MANIFEST_VERSION};

// Distinct seed streams per sampling product, so one user seed cannot
// correlate the draws.
const STREAM_UNIFORM: u64 = 10;
const STREAM_SURFACE: u64 = 11;
const STREAM_NEAR_SURFACE: u64 = 12;

pub struct SampleOptions {
    pub resolution: usize,
    pub padding: usize,
    pub count: usize,
    pub truncation: f64,
    pub text: bool,
    pub seed: u64,
    pub verbose: bool,
}

pub struct FitOptions {
    pub elements: usize,
    pub steps: usize,
    pub lr: f64,
    pub lr_final: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    pub batch_uniform: usize,
    pub batch_surface: usize,
    pub log_every: usize,
    pub seed: u64,
    pub isolevel: f64,
    pub alpha: f64,
    pub beta: f64,
    pub w_uniform: f64,
    pub w_surface: f64,
    pub w_center_inside: f64,
    pub w_center_outside: f64,
    pub verbose: bool,
}

pub struct ExtractOptions {
    pub res: usize,
    pub epsilon: f64,
    pub min_area: f64,
    pub isolevel: Option<f64>,
    pub verbose: bool,
}

pub struct EvalOptions {
    pub tau: f64,
    pub samples: usize,
    pub seed: u64,
}

pub fn parse_magnitude(raw: &str) -> anyhow::Result<CoordinateMagnitude> {
    match raw {
        "per-element" => Ok(CoordinateMagnitude::PerElement),
        "total-field" => Ok(CoordinateMagnitude::TotalField),
        other => Err(sif_core::Error::InvalidInput(format!(
            "magnitude must be `per-element` or `total-field`, got `{other}`"
        ))
        .into()),
    }
}

fn load_mesh(path: &Path, verbose: bool) -> anyhow::Result<TriangleMesh<f64>> {
    let loaded = TriangleMesh::<f64>::load_obj(path)?;
    if verbose && loaded.dropped_degenerate > 0 {
        eprintln!(
            "note: dropped {} degenerate face(s) from {}",
            loaded.dropped_degenerate,
            path.display()
        );
    }
    Ok(loaded.mesh)
}

fn split_labeled(samples: &[sif_core::LabeledSample<f64>]) -> (Vec<Vec3<f64>>, Vec<Label>) {
    samples.iter().map(|s| (s.position, s.label)).unzip()
}

pub fn cmd_sample(mesh_path: &Path, out_dir: &Path, opts: &SampleOptions) -> anyhow::Result<()> {
    std::fs::create_dir_all(out_dir)
        .map_err(|e| sif_core::Error::io(out_dir, e))
        .context("creating output directory")?;

    let mesh = load_mesh(mesh_path, opts.verbose)?;
    let (normalized, transform) = mesh.normalized()?;

    let (grid, fill) = VoxelGrid::from_mesh(&normalized, &Aabb::unit(), opts.resolution, opts.padding)?;
    if fill.leaked() {
        eprintln!(
            "warning: flood fill leaked ({} surface cells, 0 inside): input mesh is not watertight",
            fill.surface
        );
    }
    if opts.verbose {
        eprintln!(
            "note: voxelized at {} cells/axis: {} inside, {} surface, {} outside",
            opts.resolution, fill.inside, fill.surface, fill.outside
        );
    }
    let watertight = grid.extract_watertight()?;

    let bbox = normalized.bounding_box()?;
    let uniform = sample_uniform(&grid, &bbox, opts.count, mix_seed(opts.seed, STREAM_UNIFORM));
    let surface = sample_surface(&watertight, opts.count, mix_seed(opts.seed, STREAM_SURFACE))?;
    let near = sample_near_surface(
        &watertight,
        &surface,
        opts.count,
        opts.truncation,
        mix_seed(opts.seed, STREAM_NEAR_SURFACE),
    )?;

    let ext = if opts.text { "txt" } else { "sifs" };
    let files = ManifestFiles {
        uniform: format!("uniform.{ext}"),
        surface: format!("surface.{ext}"),
        near_surface: format!("near_surface.{ext}"),
        watertight: "watertight.obj".to_string(),
    };
    if opts.text {
        sif_core::save_labeled_samples_text(&out_dir.join(&files.uniform), &uniform)?;
        sif_core::save_surface_samples_text(&out_dir.join(&files.surface), &surface)?;
        sif_core::save_labeled_samples_text(&out_dir.join(&files.near_surface), &near)?;
    } else {
        sif_core::save_labeled_samples(&out_dir.join(&files.uniform), &uniform)?;
        sif_core::save_surface_samples(&out_dir.join(&files.surface), &surface)?;
        sif_core::save_labeled_samples(&out_dir.join(&files.near_surface), &near)?;
    }
    watertight.save_obj(out_dir.join(&files.watertight))?;

    let manifest = Manifest {
        version: MANIFEST_VERSION,
        source: mesh_path.display().to_string(),
        seed: opts.seed,
        resolution: opts.resolution,
        padding: opts.padding,
        count: opts.count,
        truncation: opts.truncation,
        text: opts.text,
        leaked: fill.leaked(),
        normalization: ManifestTransform::from_transform(&transform),
        files,
    };
    manifest.save(&out_dir.join(MANIFEST_NAME))?;
    Ok(())
}

pub fn cmd_fit(
    sample_dir: &Path,
    out_template: &Path,
    trace_path: Option<&Path>,
    opts: &FitOptions,
) -> anyhow::Result<()> {
    let manifest = Manifest::load(&sample_dir.join(MANIFEST_NAME))?;
    let uniform_file = sample_dir.join(&manifest.files.uniform);
    let near_file = sample_dir.join(&manifest.files.near_surface);
    let (uniform, near) = if manifest.text {
        (
            sif_core::load_labeled_samples_text::<f64>(&uniform_file)?,
            sif_core::load_labeled_samples_text::<f64>(&near_file)?,
        )
    } else {
        (
            sif_core::load_labeled_samples::<f64>(&uniform_file)?,
            sif_core::load_labeled_samples::<f64>(&near_file)?,
        )
    };
    let (uniform_points, uniform_labels) = split_labeled(&uniform);
    let (near_points, near_labels) = split_labeled(&near);

    let weights = LossWeights {
        alpha: opts.alpha,
        beta: opts.beta,
        w_uniform: opts.w_uniform,
        w_surface: opts.w_surface,
        w_center_inside: opts.w_center_inside,
        w_center_outside: opts.w_center_outside,
        ..LossWeights::default()
    };
    let config = FitConfig {
        n_elements: opts.elements,
        steps: opts.steps,
        lr: opts.lr,
        lr_final: opts.lr_final,
        beta1: opts.beta1,
        beta2: opts.beta2,
        adam_epsilon: opts.adam_eps,
        batch_uniform: opts.batch_uniform,
        batch_surface: opts.batch_surface,
        trace_every: opts.log_every,
        seed: opts.seed,
        isolevel: opts.isolevel,
        weights,
        ..FitConfig::default()
    };
    let samples = FitSamples {
        uniform_points: &uniform_points,
        uniform_labels: &uniform_labels,
        surface_points: &near_points,
        surface_labels: &near_labels,
    };
    let outcome = sif_core::fit(&samples, &config)?;
    if opts.verbose {
        if let Some(row) = outcome.trace.rows.last() {
            eprintln!(
                "note: step {} total {} accuracy {:.4}",
                row.step, row.total, row.accuracy
            );
        }
    }

    outcome.template.save(out_template)?;
    let default_trace = out_template.with_extension("trace.csv");
    let trace_path = trace_path.unwrap_or(&default_trace);
    outcome.trace.save_csv(trace_path)?;
    Ok(())
}

pub fn cmd_extract(
    template_path: &Path,
    out_mesh: &Path,
    opts: &ExtractOptions,
) -> anyhow::Result<()> {
    let mut template = Template::<f64>::load(template_path)?;
    if let Some(iso) = opts.isolevel {
        template = Template::from_params(&template.params(), iso)?;
    }
    let mesh = extract(&template, opts.res, opts.epsilon, opts.min_area);
    if mesh.triangles.is_empty() {
        eprintln!("warning: the level set does not cross the extraction grid; mesh is empty");
    } else if opts.verbose {
        eprintln!(
            "note: extracted {} vertices, {} triangles",
            mesh.vertices.len(),
            mesh.triangles.len()
        );
    }
    mesh.save_obj(out_mesh)?;
    Ok(())
}

pub fn cmd_correspond(
    src_mesh: &Path,
    src_template: &Path,
    dst_mesh: &Path,
    dst_template: &Path,
    out_csv: &Path,
    magnitude: CoordinateMagnitude,
    verbose: bool,
) -> anyhow::Result<()> {
    let sm = load_mesh(src_mesh, verbose)?;
    let dm = load_mesh(dst_mesh, verbose)?;
    let st = Template::<f64>::load(src_template)?;
    let dt = Template::<f64>::load(dst_template)?;
    let map = correspond(&sm, &st, &dm, &dt, magnitude)?;
    map.save_csv(out_csv)?;
    Ok(())
}

pub fn cmd_interpolate(
    inputs: &[PathBuf],
    weights: &[f64],
    out_template: &Path,
) -> anyhow::Result<()> {
    let templates = inputs
        .iter()
        .map(|p| Template::<f64>::load(p))
        .collect::<Result<Vec<_>, _>>()?;
    let blended = interpolate(&templates, weights)?;
    blended.save(out_template)?;
    Ok(())
}

pub fn cmd_eval(pred: &Path, gt: &Path, opts: &EvalOptions) -> anyhow::Result<()> {
    let pred_mesh = load_mesh(pred, false)?;
    let gt_mesh = load_mesh(gt, false)?;
    let report = f_score(&pred_mesh, &gt_mesh, opts.tau, opts.samples, opts.seed)?;
    println!("{:.2}", report.score);
    Ok(())
}

pub fn cmd_pipeline(
    mesh_path: &Path,
    out_dir: &Path,
    sample_opts: &SampleOptions,
    fit_opts: &FitOptions,
    extract_opts: &ExtractOptions,
) -> anyhow::Result<()> {
    cmd_sample(mesh_path, out_dir, sample_opts)?;
    let template_path = out_dir.join("template.json");
    let trace_path = out_dir.join("trace.csv");
    cmd_fit(out_dir, &template_path, Some(&trace_path), fit_opts)?;
    cmd_extract(&template_path, &out_dir.join("mesh.obj"), extract_opts)?;
    Ok(())
}
