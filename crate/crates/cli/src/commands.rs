use std::collections::BTreeMap;
use std::fs::{self, File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use ordinal_depth::crowd::{self, ImageRef, SimConfig, Store, WorkerGroup};
use ordinal_depth::hourglass::{HourglassConfig, Model};
use ordinal_depth::metrics::{evaluate, EvalItem, EvalOptions, MetricsReport, TauChoice};
use ordinal_depth::sampling::SamplerConfig;
use ordinal_depth::pairs::{group_by_image, load_pairs, save_pairs, PairRecord};
use ordinal_depth::synthetic::{image_id, image_to_tensor, render_scenes, sample_queries};
use ordinal_depth::tensor::{load_checkpoint, save_checkpoint};
use ordinal_depth::train::{train, Objective, TrainItem};
use ordinal_depth::DepthMap;

use crate::cli::*;
use crate::config::RunConfig;
use crate::manifest::Manifest;
use crate::server;

pub const DEPTH_EXT: &str = "depth";
pub const MANIFEST: &str = "manifest.json";

fn load_config(common: &Common) -> Result<RunConfig> {
    let mut cfg = RunConfig::load(common.config.as_deref())?;
    if let Some(s) = common.seed {
        cfg.set_seed(s);
    }
    Ok(cfg)
}

/// Sorted file stems in `dir` with extension `ext`.
pub fn list_ids(dir: &Path, ext: &str) -> Result<Vec<String>> {
    let mut ids = Vec::new();
    for entry in fs::read_dir(dir).with_context(|| format!("listing {}", dir.display()))? {
        let path = entry?.path();
        if path.is_file() && path.extension().is_some_and(|e| e == ext) {
            if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
                ids.push(stem.to_string());
            }
        }
    }
    ids.sort();
    Ok(ids)
}

fn load_depth(dir: &Path, id: &str) -> Result<DepthMap> {
    let p = dir.join(format!("{id}.{DEPTH_EXT}"));
    DepthMap::load(&p).with_context(|| format!("reading {}", p.display()))
}

fn load_image(dir: &Path, id: &str) -> Result<image::RgbImage> {
    let p = dir.join(format!("{id}.png"));
    Ok(image::open(&p).with_context(|| format!("reading {}", p.display()))?.to_rgb8())
}

fn sidecar_manifest(file: &Path) -> PathBuf {
    let mut name = file.file_name().unwrap_or_default().to_os_string();
    name.push(".manifest.json");
    file.with_file_name(name)
}

pub fn synth(args: &SynthArgs) -> Result<()> {
    let mut cfg = load_config(&args.common)?;
    if let Some(n) = args.n {
        cfg.data.n_images = n;
    }
    if let Some(w) = args.width {
        cfg.data.width = w;
    }
    if let Some(h) = args.height {
        cfg.data.height = h;
    }
    let (img_dir, depth_dir) = (args.out.join("images"), args.out.join("depth"));
    fs::create_dir_all(&img_dir)?;
    fs::create_dir_all(&depth_dir)?;
    let scenes = render_scenes(cfg.data.n_images, cfg.data.width, cfg.data.height, cfg.seed)?;
    for (k, scene) in scenes.iter().enumerate() {
        let id = image_id(k);
        scene.image.save(img_dir.join(format!("{id}.png")))?;
        scene.depth.save(depth_dir.join(format!("{id}.{DEPTH_EXT}")))?;
    }
    let mut m = Manifest::new("synth", &cfg)?;
    m.output(&img_dir)?.output(&depth_dir)?;
    m.write(&args.out.join(MANIFEST))?;
    println!("rendered {} scenes into {}", scenes.len(), args.out.display());
    Ok(())
}

pub fn sample(args: &SampleArgs) -> Result<()> {
    let mut cfg = load_config(&args.common)?;
    if let Some(k) = args.per_image {
        cfg.data.pairs_per_image = k;
    }
    if let Some(s) = args.strategy {
        cfg.data.strategy = s.into();
    }
    if let Some(r) = args.equal_ratio {
        cfg.data.equal_ratio = r;
    }
    let ids = list_ids(&args.depth, DEPTH_EXT)?;
    let maps: Vec<DepthMap> = ids.iter().map(|id| load_depth(&args.depth, id)).collect::<Result<_>>()?;
    let first = maps.first().ok_or_else(|| anyhow!("no depth maps in {}", args.depth.display()))?;
    let sampler = cfg.data.sampler(first.width(), first.height(), cfg.seed);
    let queries = sample_queries(&maps, &sampler, cfg.data.pairs_per_image, cfg.data.equal_ratio)?;
    let records: Vec<PairRecord> = ids
        .iter()
        .zip(queries)
        .flat_map(|(id, qs)| {
            qs.into_iter().map(move |query| PairRecord {
                image_id: id.clone(),
                query,
            })
        })
        .collect();
    save_pairs(&args.out, &records)?;
    let mut m = Manifest::new("sample", &cfg)?;
    m.input(&args.depth)?.output(&args.out)?;
    m.write(&sidecar_manifest(&args.out))?;
    println!("wrote {} pairs for {} images to {}", records.len(), ids.len(), args.out.display());
    Ok(())
}

pub fn train_cmd(args: &TrainArgs) -> Result<()> {
    let mut cfg = load_config(&args.common)?;
    if let Some(e) = args.epochs {
        cfg.train.epochs = e;
    }
    if let Some(lr) = args.lr {
        cfg.train.lr = lr;
    }
    if let Some(b) = args.batch_size {
        cfg.train.batch_size = b;
    }
    if let Some(o) = args.objective {
        cfg.train.objective = o.into();
    }
    let groups = match &args.pairs {
        Some(p) => group_by_image(&load_pairs(p).with_context(|| format!("reading {}", p.display()))?),
        None => BTreeMap::new(),
    };
    let full_depth = cfg.train.objective == Objective::FullDepth;
    if full_depth && args.depth.is_none() {
        bail!("full-depth training needs --depth");
    }
    if !full_depth && groups.is_empty() {
        bail!("ranking training needs a non-empty --pairs file");
    }
    let ids = list_ids(&args.images, "png")?;
    for id in groups.keys() {
        if ids.binary_search(id).is_err() {
            bail!("pairs refer to image {id}, which is not in {}", args.images.display());
        }
    }
    let mut items = Vec::new();
    for id in &ids {
        let queries = groups.get(id).cloned().unwrap_or_default();
        if !full_depth && queries.is_empty() {
            continue;
        }
        let depth = match &args.depth {
            Some(d) => Some(load_depth(d, id)?),
            None => None,
        };
        items.push(TrainItem {
            image: image_to_tensor(&load_image(&args.images, id)?),
            queries,
            depth,
        });
    }
    let mut model = Model::<f32>::new(cfg.model.clone(), cfg.seed)?;
    log::info!("training {} parameters on {} images", model.param_count(), items.len());
    fs::create_dir_all(&args.out)?;
    let mut curve = BufWriter::new(File::create(args.out.join("loss.csv"))?);
    writeln!(curve, "epoch,loss,seconds")?;
    train(&mut model, &items, &cfg.train, |s| {
        let _ = writeln!(curve, "{},{},{:.3}", s.epoch, s.loss, s.seconds);
        let _ = curve.flush();
        println!("epoch {} loss {:.6} ({:.1}s)", s.epoch, s.loss, s.seconds);
    })?;
    drop(curve);
    save_checkpoint(args.out.join("model.ckpt"), &model.to_checkpoint())?;
    fs::write(args.out.join("model.json"), serde_json::to_string_pretty(model.config())?)?;
    fs::write(args.out.join("config.toml"), cfg.to_toml()?)?;
    let mut m = Manifest::new("train", &cfg)?;
    m.input(&args.images)?;
    if let Some(p) = &args.pairs {
        m.input(p)?;
    }
    m.output(&args.out)?;
    m.write(&args.out.join(MANIFEST))?;
    Ok(())
}

/// Model saved by `train` in `dir`.
pub fn load_model(dir: &Path) -> Result<Model<f32>> {
    let config: HourglassConfig = serde_json::from_str(
        &fs::read_to_string(dir.join("model.json")).with_context(|| format!("reading {}/model.json", dir.display()))?,
    )?;
    let mut model = Model::<f32>::new(config, 0)?;
    model.load_params(load_checkpoint(dir.join("model.ckpt"))?)?;
    Ok(model)
}

pub fn predict(args: &PredictArgs) -> Result<()> {
    let model = load_model(&args.model)?;
    fs::create_dir_all(&args.out)?;
    let ids = list_ids(&args.images, "png")?;
    for id in &ids {
        let scores = model.forward(&image_to_tensor(&load_image(&args.images, id)?))?;
        scores.save(args.out.join(format!("{id}.{DEPTH_EXT}")))?;
    }
    let mut m = Manifest::new("predict", &RunConfig::default())?;
    m.input(&args.model.join("model.ckpt"))?.input(&args.images)?.output(&args.out)?;
    m.write(&args.out.join(MANIFEST))?;
    println!("wrote {} score maps to {}", ids.len(), args.out.display());
    Ok(())
}

/// Score maps in `pred` in id order, each with its pairs and, when `gt` is
/// given, its ground truth.
pub fn eval_items(pred: &Path, pairs: Option<&Path>, gt: Option<&Path>) -> Result<Vec<EvalItem>> {
    let ids = list_ids(pred, DEPTH_EXT)?;
    if ids.is_empty() {
        bail!("no score maps in {}", pred.display());
    }
    let groups = match pairs {
        Some(p) => group_by_image(&load_pairs(p).with_context(|| format!("reading {}", p.display()))?),
        None => BTreeMap::new(),
    };
    for id in groups.keys() {
        if ids.binary_search(id).is_err() {
            bail!("no score map for image {id}");
        }
    }
    ids.iter()
        .map(|id| {
            Ok(EvalItem {
                scores: load_depth(pred, id)?,
                queries: groups.get(id).cloned().unwrap_or_default(),
                gt: gt.map(|g| load_depth(g, id)).transpose()?,
            })
        })
        .collect()
}

pub fn eval_options(cfg: &RunConfig) -> Result<EvalOptions> {
    let target = match (cfg.eval.target_mean, cfg.eval.target_std) {
        (Some(m), Some(s)) => Some((m, s)),
        (None, None) => None,
        _ => bail!("eval.target_mean and eval.target_std must be given together"),
    };
    Ok(EvalOptions {
        tau: cfg.eval.tau.map_or(TauChoice::Calibrate, TauChoice::Fixed),
        target,
        negate: cfg.eval.negate,
    })
}

pub fn eval(args: &EvalArgs) -> Result<MetricsReport> {
    let mut cfg = load_config(&args.common)?;
    if args.tau.is_some() {
        cfg.eval.tau = args.tau;
    }
    let items = eval_items(&args.pred, args.pairs.as_deref(), args.gt.as_deref())?;
    let (report, summary) = evaluate(&items, &eval_options(&cfg)?)?;
    fs::create_dir_all(&args.out)?;
    report.write_files(&args.out, &args.stem)?;
    let mut m = Manifest::new("eval", &cfg)?;
    m.input(&args.pred)?;
    if let Some(p) = &args.pairs {
        m.input(p)?;
    }
    if let Some(g) = &args.gt {
        m.input(g)?;
    }
    m.output(&args.out.join(format!("{}.txt", args.stem)))?
        .output(&args.out.join(format!("{}.json", args.stem)))?;
    m.write(&args.out.join(MANIFEST))?;
    print!("{}", report.to_text());
    log::info!("{} images, {} pairs, {} clamped pixels", summary.n_images, summary.n_pairs, summary.clamped);
    Ok(report)
}

pub fn simulate(args: &SimulateArgs) -> Result<()> {
    let cfg = load_config(&args.common)?;
    let mut crowd = cfg.crowd.clone();
    if let Some(p) = args.p_gold {
        crowd.p_gold = p;
    }
    crowd.gold_filter = !args.no_filter;
    let sim = SimConfig {
        groups: vec![WorkerGroup {
            count: args.workers,
            error: args.error,
            hard: args.hard,
        }],
        trials: args.trials,
        gold_tasks: args.gold_tasks,
        crowd,
        seed: cfg.seed,
    };
    let journal: Option<Box<dyn Write + Send>> = match &args.events {
        Some(p) => Some(Box::new(BufWriter::new(
            File::create(p).with_context(|| format!("creating {}", p.display()))?,
        ))),
        None => None,
    };
    let (report, store) = crowd::simulate(&sim, journal)?;
    drop(store);
    print!("{}", report.to_text());
    if let Some(out) = &args.out {
        fs::create_dir_all(out)?;
        fs::write(out.join("simulation.txt"), report.to_text())?;
        fs::write(out.join("simulation.json"), serde_json::to_string_pretty(&report)? + "\n")?;
        let mut m = Manifest::new("simulate", &cfg)?;
        m.output(&out.join("simulation.txt"))?.output(&out.join("simulation.json"))?;
        if let Some(e) = &args.events {
            m.output(e)?;
        }
        m.write(&out.join(MANIFEST))?;
    }
    Ok(())
}

/// Store for `serve`: replayed from the journal when it has content,
/// otherwise freshly populated from the image directory and gold bank.
pub fn open_store(args: &ServeArgs, cfg: &RunConfig) -> Result<Store> {
    let existing = args.events.metadata().map(|m| m.len() > 0).unwrap_or(false);
    let append = OpenOptions::new().create(true).append(true).open(&args.events)?;
    if existing {
        let events = crowd::read_events(File::open(&args.events)?)?;
        let mut store = Store::replay(events)?;
        store.attach_journal(Box::new(append));
        return Ok(store);
    }
    let mut crowd_cfg = cfg.crowd.clone();
    if let Some(p) = args.p_gold {
        crowd_cfg.p_gold = p;
    }
    let mut store = Store::new(crowd_cfg, Some(Box::new(append)))?;
    let dims = |id: &str| -> Result<ImageRef> {
        let p = args.images.join(format!("{id}.png"));
        let (w, h) = image::image_dimensions(&p).with_context(|| format!("reading {}", p.display()))?;
        Ok(ImageRef::new(id, w as usize, h as usize))
    };
    let mut gold = Vec::new();
    if let Some(g) = &args.gold {
        for rec in crowd::load_gold_bank(g)?.into_iter().filter(|r| r.verified) {
            gold.push((dims(&rec.pair.image_id)?, rec.pair.query));
        }
    }
    let gold_ids: std::collections::HashSet<&str> = gold.iter().map(|(im, _)| im.id.as_str()).collect();
    let images: Vec<ImageRef> = list_ids(&args.images, "png")?
        .iter()
        .filter(|id| !gold_ids.contains(id.as_str()))
        .map(|id| dims(id))
        .collect::<Result<_>>()?;
    // Width and height are replaced per image.
    let sampler = SamplerConfig {
        strategy: args.strategy.into(),
        ..cfg.data.sampler(0, 0, cfg.seed)
    };
    store.create_tasks(&images, &sampler, &gold)?;
    Ok(store)
}

pub fn serve(args: &ServeArgs) -> Result<()> {
    let cfg = load_config(&args.common)?;
    let store = open_store(args, &cfg)?;
    let stats = store.stats();
    let app = server::router(server::AppState::new(store, args.images.clone()));
    let rt = tokio::runtime::Runtime::new()?;
    rt.block_on(async {
        let listener = tokio::net::TcpListener::bind(&args.addr).await?;
        println!(
            "serving {} tasks ({} gold) on http://{}",
            stats.tasks,
            stats.gold_tasks,
            listener.local_addr()?
        );
        axum::serve(listener, app)
            .with_graceful_shutdown(async {
                let _ = tokio::signal::ctrl_c().await;
            })
            .await?;
        Ok::<_, anyhow::Error>(())
    })
}

pub fn export(args: &ExportArgs) -> Result<()> {
    let events = crowd::read_events(File::open(&args.events).with_context(|| format!("reading {}", args.events.display()))?)?;
    let store = Store::replay(events)?;
    store.verify()?;
    let records = store.export();
    save_pairs(&args.out, &records)?;
    let mut m = Manifest::new("export", &RunConfig::default())?;
    m.input(&args.events)?.output(&args.out)?;
    m.write(&sidecar_manifest(&args.out))?;
    println!("exported {} accepted pairs to {}", records.len(), args.out.display());
    Ok(())
}

pub fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Synth(a) => synth(a),
        Command::Sample(a) => sample(a),
        Command::Train(a) => train_cmd(a),
        Command::Predict(a) => predict(a),
        Command::Eval(a) => eval(a).map(|_| ()),
        Command::Simulate(a) => simulate(a),
        Command::Serve(a) => serve(a),
        Command::Export(a) => export(a),
    }
}
