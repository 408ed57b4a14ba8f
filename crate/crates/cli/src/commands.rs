use std::path::{Path, PathBuf};
use std::time::Instant;

use lrbn::data_io::{load_any, normalize_columns, write_pgm, write_pgm_grid, DataKind, Dataset};
use lrbn::evaluation::{
    ancestral_sample, csl_logprob_batch, exact_logprob, mean_reconstruction_error,
    reconstruct as reconstruct_one,
};
use lrbn::inference::SweepOrder;
use lrbn::learning::{
    finetune_supervised, finetune_unsupervised, greedy_stack, FinetuneReport, TrainConfig,
};
use lrbn::rng::{self, Stream};
use lrbn::{DeepLrbn, VisibleKind};
use ndarray::Array2;
use rayon::prelude::*;
use serde_json::json;

use crate::config::Settings;
use crate::report::{opt, Report};
use crate::CliError;

fn load_data(s: &Settings) -> Result<Dataset, CliError> {
    let path = s.path("data")?;
    if !path.exists() {
        return Err(CliError::Runtime(format!(
            "data file not found: {}",
            path.display()
        )));
    }
    let labels = s.get("labels").map(PathBuf::from);
    let mut ds = load_any(&path, labels.as_deref(), s.parse("binarize")?)
        .map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))?;
    if ds.is_empty() {
        return Err(CliError::Runtime(format!(
            "{} contains no samples",
            path.display()
        )));
    }
    if s.flag("normalize")? {
        if ds.kind == DataKind::Binary {
            return Err(CliError::Usage(
                "`normalize` applies to real-valued data only".into(),
            ));
        }
        let (samples, stats) = normalize_columns(ds.samples.view())?;
        ds.samples = samples;
        ds.normalization = Some(stats);
    }
    Ok(ds)
}

fn load_model(s: &Settings) -> Result<DeepLrbn, CliError> {
    let path = s.path("model")?;
    DeepLrbn::load(&path).map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))
}

fn visible_kind(ds: &Dataset) -> VisibleKind {
    match ds.kind {
        DataKind::Binary => VisibleKind::Binary,
        DataKind::Real => VisibleKind::Gaussian,
    }
}

fn check_compatible(model: &DeepLrbn, ds: &Dataset) -> Result<(), CliError> {
    if model.n_visible() != ds.dim() {
        return Err(CliError::Runtime(format!(
            "model has {} visible units but the data has {} columns",
            model.n_visible(),
            ds.dim()
        )));
    }
    if model.visible_kind() != visible_kind(ds) {
        let hint = if model.visible_kind() == VisibleKind::Binary {
            " (use `binarize`)"
        } else {
            ""
        };
        return Err(CliError::Runtime(format!(
            "model expects {} visibles but the data is {}{hint}",
            model.visible_kind(),
            if ds.kind == DataKind::Binary {
                "binary"
            } else {
                "real-valued"
            }
        )));
    }
    Ok(())
}

/// `dir/stem<suffix>` next to `path`.
fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    path.with_file_name(format!("{stem}{suffix}"))
}

fn image_dims(s: &Settings, dim: usize) -> Result<(usize, usize), CliError> {
    let rows: Option<usize> = s.parse("image_rows")?;
    let cols: Option<usize> = s.parse("image_cols")?;
    let dims = match (rows, cols) {
        (Some(r), Some(c)) => Some((r, c)),
        (Some(r), None) if r > 0 && dim.is_multiple_of(r) => Some((r, dim / r)),
        (None, Some(c)) if c > 0 && dim.is_multiple_of(c) => Some((dim / c, c)),
        (None, None) => {
            let side = (dim as f64).sqrt().round() as usize;
            (side * side == dim).then_some((side, side))
        }
        _ => None,
    };
    match dims {
        Some((r, c)) if r * c == dim && dim > 0 => Ok((r, c)),
        _ => Err(CliError::Usage(format!(
            "cannot lay out {dim} pixels as an image; set `image_rows` and `image_cols`"
        ))),
    }
}

/// Effective values of every training setting, for the report echo.
fn train_echo(cfg: &TrainConfig) -> Vec<(&'static str, String)> {
    let order = match cfg.icm.sweep_order {
        SweepOrder::Ascending => "ascending",
        SweepOrder::SeededPermutation => "seeded",
    };
    vec![
        ("lr", cfg.learning_rate.to_string()),
        ("batch", cfg.minibatch_size.to_string()),
        ("max_epochs", cfg.max_epochs.to_string()),
        ("validation_size", cfg.validation_size.to_string()),
        ("patience", cfg.early_stop_patience.to_string()),
        ("warm_start", cfg.warm_start.to_string()),
        ("icm_sweeps", cfg.icm.max_sweeps.to_string()),
        ("icm_order", order.to_string()),
        ("seed", cfg.rng_seed.to_string()),
    ]
}

fn to_unit_range(m: &mut Array2<f64>) {
    m.mapv_inplace(|v| v.clamp(0.0, 1.0));
}

pub fn train(s: &Settings, json: bool) -> Result<(), CliError> {
    let start = Instant::now();
    let layers = s
        .sizes("layers")?
        .ok_or_else(|| CliError::Usage("missing required setting `layers`".into()))?;
    let cfg = s.train()?;
    let out = s
        .get("out")
        .map(PathBuf::from)
        .unwrap_or_else(|| "model.lrbn".into());
    let report_path = s
        .get("report")
        .map(PathBuf::from)
        .unwrap_or_else(|| sibling(&out, ".report.txt"));
    let ds = load_data(s)?;
    let (model, reports) = greedy_stack(ds.samples.view(), visible_kind(&ds), &layers, &cfg)?;
    model.save(&out)?;
    let wall = start.elapsed().as_secs_f64();

    let mut echo = train_echo(&cfg);
    echo.push(("out", out.display().to_string()));
    echo.push(("report", report_path.display().to_string()));
    let mut report = Report::new(
        "train",
        &s.resolved(echo),
        &[
            "layer",
            "epoch",
            "train_objective",
            "validation_objective",
            "mean_sweeps",
        ],
    );
    report.field("layer_sizes", join(&model.layer_sizes()));
    for (l, r) in reports.iter().enumerate() {
        report.field(&format!("layer{l}_stop"), r.stop_reason);
        report.field(
            &format!("layer{l}_best_epoch"),
            r.best_epoch.map(|e| e.to_string()).unwrap_or_default(),
        );
        for e in &r.epochs {
            report.row(vec![
                l.to_string(),
                e.epoch.to_string(),
                e.train_objective.to_string(),
                opt(e.validation_objective),
                e.mean_sweeps.to_string(),
            ]);
        }
    }
    report.field("wall_time_s", format!("{wall:.3}"));
    report.save(&report_path)?;

    let best_validation = |r: &lrbn::learning::TrainReport| {
        r.best_epoch.and_then(|b| r.epochs[b].validation_objective)
    };
    if json {
        let layers: Vec<_> = reports
            .iter()
            .map(|r| {
                json!({
                    "epochs": r.epochs_run(),
                    "best_epoch": r.best_epoch,
                    "stop_reason": r.stop_reason.to_string(),
                    "best_validation_objective": best_validation(r),
                    "final_train_objective": r.epochs.last().map(|e| e.train_objective),
                })
            })
            .collect();
        println!(
            "{}",
            json!({
                "command": "train",
                "model": out.display().to_string(),
                "report": report_path.display().to_string(),
                "layer_sizes": model.layer_sizes(),
                "layers": layers,
                "wall_time_s": wall,
            })
        );
    } else {
        println!("model: {} ({})", out.display(), join(&model.layer_sizes()));
        for (l, r) in reports.iter().enumerate() {
            let best = best_validation(r)
                .map(|v| format!(", validation {v:.4}"))
                .unwrap_or_default();
            println!(
                "layer {l}: {} epochs, {}, best epoch {}{best}",
                r.epochs_run(),
                r.stop_reason,
                r.best_epoch
                    .map(|e| e.to_string())
                    .unwrap_or_else(|| "-".into())
            );
        }
        println!("report: {}", report_path.display());
        println!("wall time: {wall:.1} s");
    }
    Ok(())
}

fn join(v: &[usize]) -> String {
    v.iter()
        .map(|n| n.to_string())
        .collect::<Vec<_>>()
        .join("-")
}

fn finetune_rows(report: &mut Report, r: &FinetuneReport) {
    report.field("initial_train_objective", r.initial_train_objective);
    report.field(
        "initial_validation_objective",
        opt(r.initial_validation_objective),
    );
    report.field("stop", r.stop_reason);
    for p in &r.passes {
        report.row(vec![
            p.alternation.to_string(),
            p.train_objective.to_string(),
            opt(p.validation_objective),
            p.relative_change.to_string(),
        ]);
    }
}

pub fn finetune(s: &Settings, json: bool) -> Result<(), CliError> {
    let start = Instant::now();
    let model_path = s.path("model")?;
    let model = load_model(s)?;
    let cfg = s.finetune()?;
    let mode = s.get("mode").unwrap_or("unsupervised").to_string();
    let out = s
        .get("out")
        .map(PathBuf::from)
        .unwrap_or_else(|| sibling(&model_path, "-finetuned.lrbn"));
    let report_path = s
        .get("report")
        .map(PathBuf::from)
        .unwrap_or_else(|| sibling(&out, ".report.txt"));
    let mut echo = train_echo(&cfg.train);
    echo.extend([
        ("mode", mode.clone()),
        ("alternations", cfg.alternations.to_string()),
        ("tol", cfg.convergence_tol.to_string()),
        ("out", out.display().to_string()),
        ("report", report_path.display().to_string()),
    ]);
    let mut report = Report::new(
        "finetune",
        &s.resolved(echo),
        &[
            "alternation",
            "train_objective",
            "validation_objective",
            "relative_change",
        ],
    );

    let (tuned, ft) = match mode.as_str() {
        "unsupervised" => {
            if model.depth() < 2 {
                return Err(CliError::Runtime(format!(
                    "unsupervised fine-tuning needs at least two latent layers; {} has {}",
                    model_path.display(),
                    model.depth()
                )));
            }
            let ds = load_data(s)?;
            check_compatible(&model, &ds)?;
            finetune_unsupervised(&model, ds.samples.view(), &cfg)?
        }
        "supervised" => {
            let ds = load_data(s)?;
            check_compatible(&model, &ds)?;
            let labels = ds.labels.as_deref().ok_or_else(|| {
                CliError::Runtime("supervised fine-tuning needs labels (`labels`)".into())
            })?;
            let classes = ds.num_classes().unwrap_or(0);
            let top = model.top().n_upper();
            if classes != top {
                return Err(CliError::Runtime(format!(
                    "the labels have {classes} classes but the model's top layer has {top} units"
                )));
            }
            let (tuned, sup) = finetune_supervised(&model, ds.samples.view(), Some(labels), &cfg)?;
            report.field(
                "top_fit_objective",
                sup.top_fit_objective
                    .iter()
                    .map(f64::to_string)
                    .collect::<Vec<_>>()
                    .join(" "),
            );
            (tuned, sup.finetune)
        }
        other => {
            return Err(CliError::Usage(format!(
                "bad value `{other}` for `mode`: expected `unsupervised` or `supervised`"
            )))
        }
    };
    tuned.save(&out)?;
    let wall = start.elapsed().as_secs_f64();
    finetune_rows(&mut report, &ft);
    report.field("wall_time_s", format!("{wall:.3}"));
    report.save(&report_path)?;

    let trajectory: Vec<f64> = std::iter::once(ft.initial_train_objective)
        .chain(ft.passes.iter().map(|p| p.train_objective))
        .collect();
    if json {
        println!(
            "{}",
            json!({
                "command": "finetune",
                "mode": mode,
                "model": out.display().to_string(),
                "report": report_path.display().to_string(),
                "passes": ft.passes.len(),
                "stop_reason": ft.stop_reason.to_string(),
                "train_objective": trajectory,
                "wall_time_s": wall,
            })
        );
    } else {
        println!("model: {}", out.display());
        println!(
            "objective: {}",
            trajectory
                .iter()
                .map(|v| format!("{v:.4}"))
                .collect::<Vec<_>>()
                .join(" -> ")
        );
        println!("stop: {} after {} passes", ft.stop_reason, ft.passes.len());
        println!("report: {}", report_path.display());
    }
    Ok(())
}

pub fn reconstruct(s: &Settings, json: bool) -> Result<(), CliError> {
    let model = load_model(s)?;
    let ds = load_data(s)?;
    check_compatible(&model, &ds)?;
    let icm = s.icm()?;
    let error = mean_reconstruction_error(&model, ds.samples.view(), &icm)?;

    let grid = s.get("grid").map(PathBuf::from);
    if let Some(path) = &grid {
        let k = s.parse_or("grid_images", 10usize)?.min(ds.len());
        if k == 0 {
            return Err(CliError::Usage("`grid_images` must be at least 1".into()));
        }
        let (rows, cols) = image_dims(s, ds.dim())?;
        let mut tiles = Array2::zeros((2 * k, ds.dim()));
        for m in 0..k {
            let x = ds.samples.row(m).to_vec();
            let x_tilde = reconstruct_one(&model, &x, &icm)?;
            tiles.row_mut(m).assign(&ds.samples.row(m));
            tiles
                .row_mut(k + m)
                .iter_mut()
                .zip(x_tilde)
                .for_each(|(t, v)| *t = v);
        }
        to_unit_range(&mut tiles);
        write_pgm_grid(tiles.view(), rows, cols, 2, k, path)?;
    }

    if json {
        println!(
            "{}",
            json!({
                "command": "reconstruct",
                "samples": ds.len(),
                "reconstruction_error": error,
                "grid": grid.map(|p| p.display().to_string()),
            })
        );
    } else {
        println!(
            "reconstruction error: {error:.2} px over {} samples",
            ds.len()
        );
        if let Some(p) = grid {
            println!("grid: {}", p.display());
        }
    }
    Ok(())
}

pub fn sample(s: &Settings, json: bool) -> Result<(), CliError> {
    let model = load_model(s)?;
    let count = s.parse_or("count", 100usize)?;
    let seed = s.parse_or("seed", 0u64)?;
    let (rows, cols) = image_dims(s, model.n_visible())?;
    let draws: Vec<Vec<f64>> = (0..count)
        .into_par_iter()
        .map(|k| ancestral_sample(&model, &mut rng::stream(seed, Stream::Sampling, k as u64)).0)
        .collect();
    let mut images = Array2::zeros((count, model.n_visible()));
    for (mut row, x) in images.rows_mut().into_iter().zip(draws) {
        row.iter_mut().zip(x).for_each(|(r, v)| *r = v);
    }
    to_unit_range(&mut images);

    let files: Vec<PathBuf> = if count == 0 {
        Vec::new()
    } else if let Some(path) = s.get("grid").map(PathBuf::from) {
        let grid_cols = (count as f64).sqrt().ceil() as usize;
        let grid_rows = count.div_ceil(grid_cols);
        write_pgm_grid(images.view(), rows, cols, grid_rows, grid_cols, &path)?;
        vec![path]
    } else {
        let dir = s
            .get("out_dir")
            .map(PathBuf::from)
            .unwrap_or_else(|| "samples".into());
        std::fs::create_dir_all(&dir)?;
        write_pgm(
            images.view(),
            rows,
            cols,
            &dir,
            s.get("prefix").unwrap_or("sample"),
        )?
    };

    if json {
        let files: Vec<String> = files.iter().map(|p| p.display().to_string()).collect();
        println!(
            "{}",
            json!({ "command": "sample", "count": count, "seed": seed, "files": files })
        );
    } else {
        println!("{count} samples, {} files written", files.len());
        for f in &files {
            println!("{}", f.display());
        }
    }
    Ok(())
}

pub fn logprob(s: &Settings, json: bool) -> Result<(), CliError> {
    let model = load_model(s)?;
    let ds = load_data(s)?;
    check_compatible(&model, &ds)?;
    let cfg = s.csl()?;
    let oracle = s.flag("oracle")?;
    if oracle {
        // Fail before the sampling run rather than after it.
        exact_logprob(&model, &ds.samples.row(0).to_vec())?;
    }
    let estimates = csl_logprob_batch(&model, ds.samples.view(), &cfg)?;
    let n = estimates.len() as f64;
    let mean = estimates.iter().map(|e| e.mean).sum::<f64>() / n;
    let per_repetition: Vec<f64> = (0..cfg.repetitions)
        .map(|r| estimates.iter().map(|e| e.per_repetition[r]).sum::<f64>() / n)
        .collect();
    let spread = (per_repetition
        .iter()
        .map(|v| (v - mean).powi(2))
        .sum::<f64>()
        / per_repetition.len() as f64)
        .sqrt();
    let exact = if oracle {
        let values = (0..ds.len())
            .into_par_iter()
            .map(|m| exact_logprob(&model, &ds.samples.row(m).to_vec()))
            .collect::<lrbn::Result<Vec<f64>>>()?;
        Some(values.iter().sum::<f64>() / n)
    } else {
        None
    };

    if json {
        println!(
            "{}",
            json!({
                "command": "logprob",
                "samples": ds.len(),
                "csl": mean,
                "per_repetition": per_repetition,
                "spread": spread,
                "sample_count": cfg.sample_count,
                "exact": exact,
                "gap": exact.map(|e| mean - e),
            })
        );
    } else {
        println!(
            "log-probability: {mean:.4} nats (S = {}, {} repetitions, {} samples)",
            cfg.sample_count,
            cfg.repetitions,
            ds.len()
        );
        for (r, v) in per_repetition.iter().enumerate() {
            println!("repetition {r}: {v:.4}");
        }
        println!("spread: {spread:.4}");
        if let Some(e) = exact {
            println!("exact: {e:.4}");
            println!("gap: {:.4}", mean - e);
        }
    }
    Ok(())
}
