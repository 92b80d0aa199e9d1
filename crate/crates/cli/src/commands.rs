//! Subcommand implementations.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use rayon::prelude::*;
use wvssl::augment::{make_views, PoolConfig};
use wvssl::config::RunConfig;
use wvssl::contrastive::{embed_images, load_images, pretrain, PretrainHooks, TrainState};
use wvssl::eval::{
    finetune, plot, render_table, retrieval_map, retrieve_topk, KnnModel, LinearProbe, MetricsReport, MlpProbe,
    Task,
};
use wvssl::image::{GrayImage8, Image};
use wvssl::rng::Rng;
use wvssl::sar::{preprocess_scene, SceneGrid};
use wvssl::store::{synth_dataset, EmbeddingMatrix, Manifest, ManifestRecord, Split};
use wvssl::Error;

use crate::{Cli, Command, EmbedArgs, PretrainArgs, PreprocessArgs, PreviewArgs, ProbeArgs, Protocol, ReportArgs, RetrieveArgs};

/// Stream for drawing the labelled subset of a label budget.
const STREAM_LABELS: u64 = 0x4C41_4245;

pub fn run(cli: Cli) -> Result<()> {
    let mut overrides = cli.overrides.clone();
    if let Some(s) = cli.seed {
        overrides.push(format!("seed={s}"));
    }
    if let Some(t) = cli.threads {
        overrides.push(format!("threads={t}"));
    }
    let cfg = RunConfig::resolve(cli.config.as_deref(), &overrides)?;
    cfg.validate()?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.threads)
        .build_global()
        .context("configuring the worker pool")?;
    let out = cli.out.clone().unwrap_or_else(|| {
        std::env::var_os("WVSSL_CACHE").map_or_else(|| PathBuf::from("wvssl-out"), PathBuf::from)
    });
    fs::create_dir_all(&out).map_err(|e| Error::io(&out, e))?;
    match &cli.command {
        Command::Synth => synth(&cfg, &out),
        Command::Preprocess(a) => preprocess(&cfg, &out, a),
        Command::AugmentPreview(a) => augment_preview(&cfg, &out, a),
        Command::Pretrain(a) => pretrain_cmd(&cfg, &out, a),
        Command::Embed(a) => embed(&cfg, &out, a),
        Command::Probe(a) => probe(&cfg, &out, a),
        Command::Retrieve(a) => retrieve(&cfg, &out, a),
        Command::Report(a) => report(&out, a),
    }
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))?;
    Ok(())
}

fn synth(cfg: &RunConfig, out: &Path) -> Result<()> {
    let mut spec = cfg.synth.clone();
    spec.seed = cfg.seed;
    let manifest = synth_dataset(&spec, out)?;
    log::info!("wrote {} synthetic images to {}", manifest.len(), out.display());
    Ok(())
}

fn preprocess(cfg: &RunConfig, out: &Path, args: &PreprocessArgs) -> Result<()> {
    let manifest = Manifest::load(&args.manifest)?;
    let img_dir = out.join("images");
    fs::create_dir_all(&img_dir).map_err(|e| Error::io(&img_dir, e))?;
    let results: Vec<std::result::Result<PathBuf, String>> = manifest
        .records
        .par_iter()
        .map(|r| {
            let src = manifest.resolve(r);
            let rel = PathBuf::from("images").join(format!("{}.png", r.id));
            let pixels = if args.bypass {
                // already 8-bit: keep the largest centred square, resizing happens at load time
                GrayImage8::load_png(&src).map(|g| g.center_square(g.height.min(g.width)))
            } else {
                SceneGrid::read(&src).and_then(|s| preprocess_scene(&s, &r.id, &cfg.preprocess).map(|p| p.pixels))
            };
            pixels
                .and_then(|p| p.save_png(&out.join(&rel)))
                .map(|_| rel)
                .map_err(|e| format!("{}: {e}", r.id))
        })
        .collect();
    let failures: Vec<&String> = results.iter().filter_map(|r| r.as_ref().err()).collect();
    if !failures.is_empty() {
        for f in &failures {
            log::error!("{f}");
        }
        return Err(Error::Input(format!("{} of {} scenes failed to preprocess", failures.len(), results.len())).into());
    }
    let mut processed = manifest.clone();
    processed.base_dir = out.to_path_buf();
    for (r, p) in processed.records.iter_mut().zip(results) {
        r.path = p.expect("failures handled above");
    }
    processed.save(&out.join("manifest.tsv"))?;
    log::info!("preprocessed {} images into {}", processed.len(), out.display());
    Ok(())
}

fn to_gray(img: &Image) -> GrayImage8 {
    GrayImage8 {
        height: img.height,
        width: img.width,
        pixels: img
            .luminance()
            .iter()
            .map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u8)
            .collect(),
    }
}

/// Rows of (input | view a | view b) separated by a 2-pixel gutter.
fn contact_sheet(rows: &[[GrayImage8; 3]]) -> GrayImage8 {
    const GAP: usize = 2;
    let side = rows[0][0].width;
    let width = 3 * side + 4 * GAP;
    let height = rows.len() * (side + GAP) + GAP;
    let mut pixels = vec![255u8; width * height];
    for (r, row) in rows.iter().enumerate() {
        for (c, img) in row.iter().enumerate() {
            let top = GAP + r * (side + GAP);
            let left = GAP + c * (side + GAP);
            for y in 0..img.height.min(side) {
                let dst = (top + y) * width + left;
                pixels[dst..dst + img.width.min(side)].copy_from_slice(&img.pixels[y * img.width..y * img.width + img.width.min(side)]);
            }
        }
    }
    GrayImage8 { height, width, pixels }
}

fn augment_preview(cfg: &RunConfig, out: &Path, args: &PreviewArgs) -> Result<()> {
    let manifest = Manifest::load(&args.manifest)?;
    let pool = match &args.pool {
        Some(p) => PoolConfig::parse(&fs::read_to_string(p).map_err(|e| Error::io(p, e))?)?,
        None => cfg.pretrain.pool.clone(),
    };
    pool.validate()?;
    let records: Vec<&ManifestRecord> = manifest.records.iter().take(args.count).collect();
    let images = load_images(&manifest, &records, cfg.pretrain.encoder.input_side)?;
    let ids: Vec<String> = records.iter().map(|r| r.id.clone()).collect();
    let views = make_views(&images, &ids, &pool.policies(), cfg.seed)?;
    let dir = out.join("preview");
    fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    let mut log_lines = String::new();
    let mut sheet = Vec::with_capacity(ids.len());
    for (i, id) in ids.iter().enumerate() {
        let a = to_gray(&views.views_a[i]);
        let b = to_gray(&views.views_b[i]);
        a.save_png(&dir.join(format!("{id}_a.png")))?;
        b.save_png(&dir.join(format!("{id}_b.png")))?;
        sheet.push([to_gray(&images[i]), a, b]);
        let rec = serde_json::json!({
            "id": id,
            "view_a": views.provenance_a[i],
            "view_b": views.provenance_b[i],
        });
        log_lines.push_str(&rec.to_string());
        log_lines.push('\n');
    }
    write_file(&dir.join("provenance.jsonl"), log_lines.as_bytes())?;
    if !sheet.is_empty() {
        contact_sheet(&sheet).save_png(&dir.join("contact_sheet.png"))?;
    }
    log::info!("wrote {} view pairs to {}", ids.len(), dir.display());
    Ok(())
}

fn records_for<'a>(manifest: &'a Manifest, split: &str) -> Result<Vec<&'a ManifestRecord>> {
    if split == "all" {
        return Ok(manifest.records.iter().collect());
    }
    let s: Split = split.parse().map_err(Error::Config)?;
    Ok(manifest.split(s))
}

fn pretrain_cmd(cfg: &RunConfig, out: &Path, args: &PretrainArgs) -> Result<()> {
    let manifest = Manifest::load(&args.manifest)?;
    let ckpt = out.join("checkpoint.wvck");
    let mut state = match &args.resume {
        Some(p) => {
            let s = TrainState::load(p)?;
            log::info!("resuming from {} at epoch {}", p.display(), s.epoch);
            s
        }
        None => {
            let mut s = TrainState::new(cfg.pretrain.clone(), cfg.seed)?;
            s.provenance = cfg.to_toml();
            s
        }
    };
    let records = records_for(&manifest, &args.split)?;
    let images = load_images(&manifest, &records, state.config.encoder.input_side)?;
    let ids: Vec<String> = records.iter().map(|r| r.id.clone()).collect();
    let log_path = out.join("train_log.jsonl");
    let mut log_file = fs::OpenOptions::new()
        .create(true)
        .append(args.resume.is_some())
        .write(true)
        .truncate(args.resume.is_none())
        .open(&log_path)
        .map_err(|e| Error::io(&log_path, e))?;
    let hooks = PretrainHooks {
        checkpoint: Some(&ckpt),
        log: Some(&mut log_file),
        stop_after: args.stop_after,
    };
    let losses = pretrain(&mut state, &images, &ids, hooks)?;
    log::info!(
        "pretrained {} epochs on {} images; final loss {:.4}; checkpoint {}",
        losses.len(),
        images.len(),
        losses.last().copied().unwrap_or(f64::NAN),
        ckpt.display()
    );
    Ok(())
}

fn embed(cfg: &RunConfig, out: &Path, args: &EmbedArgs) -> Result<()> {
    let manifest = Manifest::load(&args.manifest)?;
    let state = match (&args.checkpoint, args.random_init) {
        (_, true) => {
            let mut s = TrainState::new(cfg.pretrain.clone(), cfg.seed)?;
            s.provenance = cfg.to_toml();
            s
        }
        (Some(p), false) => TrainState::load(p)?,
        (None, false) => return Err(Error::Config("embed needs --checkpoint or --random-init".into()).into()),
    };
    let records: Vec<&ManifestRecord> = manifest.records.iter().collect();
    let images = load_images(&manifest, &records, state.encoder.config.input_side)?;
    let ids: Vec<String> = records.iter().map(|r| r.id.clone()).collect();
    let mut emb = embed_images(&state.encoder, &state.params, &images, &ids, cfg.embed.space)?;
    emb.config = format!(
        "# checkpoint epoch {} step {} seed {}\n{}\n# embed\n{}",
        state.epoch,
        state.step,
        state.seed,
        state.provenance,
        cfg.to_toml()
    );
    let path = out.join(&args.name);
    emb.write(&path)?;
    log::info!("wrote {} x {} embeddings to {}", emb.rows, emb.dim, path.display());
    Ok(())
}

/// Rows of a manifest split with their targets, in manifest order.
struct LabeledRows<'a> {
    records: Vec<&'a ManifestRecord>,
    y: Vec<Vec<f64>>,
}

fn labeled_rows<'a>(manifest: &'a Manifest, split: &str, task: Task) -> Result<LabeledRows<'a>> {
    let records = records_for(manifest, split)?;
    if records.is_empty() {
        return Err(Error::Input(format!("split '{split}' has no rows")).into());
    }
    let y = match task {
        Task::Classification => {
            let c = manifest.classes.len();
            manifest.label_matrix(&records).chunks(c).map(|r| r.to_vec()).collect()
        }
        Task::Regression => records
            .iter()
            .map(|r| {
                r.target
                    .map(|t| vec![t])
                    .ok_or_else(|| Error::Input(format!("{}: no regression target", r.id)))
            })
            .collect::<std::result::Result<_, _>>()?,
    };
    Ok(LabeledRows { records, y })
}

fn apply_budget(rows: LabeledRows<'_>, budget: Option<usize>, seed: u64) -> Result<LabeledRows<'_>> {
    let Some(b) = budget else { return Ok(rows) };
    if b > rows.records.len() {
        return Err(Error::Config(format!(
            "probe.label_budget {b} exceeds the {} training rows",
            rows.records.len()
        ))
        .into());
    }
    let mut idx = Rng::derive(seed, &[STREAM_LABELS]).sample_indices(rows.records.len(), b);
    idx.sort_unstable();
    Ok(LabeledRows {
        records: idx.iter().map(|&i| rows.records[i]).collect(),
        y: idx.iter().map(|&i| rows.y[i].clone()).collect(),
    })
}

fn features(emb: &EmbeddingMatrix, records: &[&ManifestRecord]) -> Result<Vec<Vec<f64>>> {
    records
        .iter()
        .map(|r| {
            let i = emb
                .index_of(&r.id)
                .ok_or_else(|| Error::Input(format!("{} has no embedding", r.id)))?;
            Ok(emb.row(i).iter().map(|&v| v as f64).collect())
        })
        .collect()
}

fn probe(cfg: &RunConfig, out: &Path, args: &ProbeArgs) -> Result<()> {
    let manifest = Manifest::load(&args.manifest)?;
    let task = cfg.probe.task;
    let train = apply_budget(
        labeled_rows(&manifest, &cfg.probe.train_split, task)?,
        cfg.probe.label_budget,
        cfg.seed,
    )?;
    let eval = labeled_rows(&manifest, &cfg.probe.eval_split, task)?;
    let (protocol_cfg, scores) = match args.protocol {
        Protocol::Finetune => {
            let ckpt = args
                .checkpoint
                .as_ref()
                .ok_or_else(|| Error::Config("probe finetune needs --checkpoint".into()))?;
            let state = TrainState::load(ckpt)?;
            let side = state.encoder.config.input_side;
            let train_images = load_images(&manifest, &train.records, side)?;
            let eval_images = load_images(&manifest, &eval.records, side)?;
            let mut fc = cfg.finetune.clone();
            fc.seed = cfg.seed;
            let model = finetune(&state.encoder, &state.params, &train_images, &train.y, task, fc.clone())?;
            (serde_json::to_value(&fc)?, model.predict(&eval_images)?)
        }
        p => {
            let path = args
                .embeddings
                .as_ref()
                .ok_or_else(|| Error::Config("frozen-embedding probes need --embeddings".into()))?;
            let emb = EmbeddingMatrix::read(path)?;
            let xt = features(&emb, &train.records)?;
            let xe = features(&emb, &eval.records)?;
            match p {
                Protocol::Knn => {
                    let m = KnnModel::fit(&xt, &train.y, cfg.knn)?;
                    (serde_json::to_value(cfg.knn)?, m.predict(&xe))
                }
                Protocol::Linear => {
                    let m = LinearProbe::fit(&xt, &train.y, task, cfg.linear)?;
                    (serde_json::to_value(cfg.linear)?, m.predict(&xe))
                }
                _ => {
                    let mut mc = cfg.mlp.clone();
                    mc.seed = cfg.seed;
                    let m = MlpProbe::fit(&xt, &train.y, task, mc.clone())?;
                    (serde_json::to_value(&mc)?, m.predict(&xe))
                }
            }
        }
    };
    let name = format!("{:?}", args.protocol).to_lowercase();
    let provenance = serde_json::json!({
        "protocol": protocol_cfg,
        "manifest": args.manifest,
        "embeddings": args.embeddings,
        "checkpoint": args.checkpoint,
        "run": cfg.to_json(),
    });
    let mut rep = MetricsReport::new(&name, &cfg.probe.eval_split, provenance);
    rep = match task {
        Task::Classification => rep.with_classification(&manifest.classes, &eval.y, &scores, cfg.probe.f1_threshold)?,
        Task::Regression => {
            let y: Vec<f64> = eval.y.iter().map(|r| r[0]).collect();
            let yhat: Vec<f64> = scores.iter().map(|r| r[0]).collect();
            rep.with_regression(&y, &yhat, manifest.target.as_ref().map(|t| t.unit.as_str()))?
        }
    };
    rep.n_train = train.records.len();
    rep.validate()?;
    let path = out.join("metrics.jsonl");
    rep.append(&path)?;
    print!("{}", render_table(std::slice::from_ref(&rep)));
    Ok(())
}

fn retrieve(cfg: &RunConfig, out: &Path, args: &RetrieveArgs) -> Result<()> {
    let manifest = Manifest::load(&args.manifest)?;
    let emb = EmbeddingMatrix::read(&args.embeddings)?;
    let rows = labeled_rows(&manifest, &cfg.probe.eval_split, Task::Classification)?;
    let mut records = rows.records.clone();
    if let Some(anchor) = &args.anchor {
        // an anchor outside the gallery split queries that split
        if !records.iter().any(|r| &r.id == anchor) {
            let rec = manifest
                .records
                .iter()
                .find(|r| &r.id == anchor)
                .ok_or_else(|| Error::Input(format!("anchor {anchor:?} is not in the manifest")))?;
            records.push(rec);
        }
    }
    let x = features(&emb, &records)?;
    let ids: Vec<String> = records.iter().map(|r| r.id.clone()).collect();
    if let Some(anchor) = &args.anchor {
        let ranked = retrieve_topk(anchor, &ids, &x, cfg.retrieval.k)?;
        let stdout = std::io::stdout();
        let mut w = stdout.lock();
        for (rank, &i) in ranked.iter().enumerate() {
            writeln!(w, "{}\t{}\t{}", rank + 1, ids[i], records[i].labels.join(","))?;
        }
        return Ok(());
    }
    let mut rc = cfg.retrieval;
    rc.seed = cfg.seed;
    let scores = retrieval_map(&x, &ids, &rows.y, &manifest.classes, &rc)?;
    let provenance = serde_json::json!({
        "protocol": rc,
        "manifest": args.manifest,
        "embeddings": args.embeddings,
        "run": cfg.to_json(),
    });
    let rep = MetricsReport::new("retrieval", &cfg.probe.eval_split, provenance).with_retrieval(&scores, ids.len());
    rep.validate()?;
    rep.append(&out.join("metrics.jsonl"))?;
    print!("{}", render_table(std::slice::from_ref(&rep)));
    Ok(())
}

fn report(out: &Path, args: &ReportArgs) -> Result<()> {
    let mut reports = Vec::new();
    for p in &args.metrics {
        reports.extend(MetricsReport::read_jsonl(p)?);
    }
    if reports.is_empty() {
        return Err(Error::Input("no metric records found".into()).into());
    }
    for r in &reports {
        r.validate()?;
    }
    let table = render_table(&reports);
    print!("{table}");
    write_file(&out.join("report.txt"), table.as_bytes())?;
    let plots = out.join("plots");
    fs::create_dir_all(&plots).map_err(|e| Error::io(&plots, e))?;
    for (i, r) in reports.iter().enumerate() {
        if let Some(svg) = plot::auroc_bars(r) {
            write_file(&plots.join(format!("{i:02}_{}_auroc.svg", r.protocol)), svg.as_bytes())?;
        }
        if let Some(svg) = plot::regression_scatter(r) {
            write_file(&plots.join(format!("{i:02}_{}_scatter.svg", r.protocol)), svg.as_bytes())?;
        }
    }
    log::info!("report for {} records written to {}", reports.len(), out.display());
    Ok(())
}
