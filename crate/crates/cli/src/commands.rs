//! Subcommand implementations.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use log::info;
use vfxaug::attention::AttentionCache;
use vfxaug::corpus::{default_corpus, generate, training_examples, training_scenes, CorpusEntry};
use vfxaug::diffusion::{ddim_invert_with, train_toy, NoiseSchedule, RunManifest};
use vfxaug::dit::DiTModel;
use vfxaug::metrics::{
    aggregate_table, evaluate, EvalInputs, HistogramEmbedder, MetricsReport, QualityBackend, RemoteQuality, StubQuality,
};
use vfxaug::pipeline::{run_ablation, AblationMode, EditConfig, EditContext, EditResult};
use vfxaug::planner::{make_planner, PlannerKind};
use vfxaug::segment::HeuristicSegmenter;
use vfxaug::tensor::{
    read_video_frames, vae_encode, write_mask_frames, write_tensor, write_video_frames, PixelMask, TensorFile,
    VideoClip,
};

use crate::config::{AppConfig, MetricBackend};
use crate::runs::{self, require, usage};

/// Name of the checkpoint directory written by `train`.
pub const CHECKPOINT: &str = "toy";

pub struct Ctx {
    pub config: AppConfig,
    pub force: bool,
}

impl Ctx {
    fn scene_dir(&self, scene: &str) -> PathBuf {
        self.config.paths.corpus.join(scene)
    }
    fn checkpoint_dir(&self) -> PathBuf {
        self.config.paths.checkpoints.join(CHECKPOINT)
    }
    fn invert_dir(&self, scene: &str) -> PathBuf {
        self.config.paths.runs.join("invert").join(scene)
    }
    fn schedule(&self) -> Result<NoiseSchedule> {
        Ok(NoiseSchedule::new(self.config.schedule)?)
    }
    fn quality(&self) -> Result<Box<dyn QualityBackend>> {
        Ok(match self.config.metrics.backend {
            MetricBackend::Stub => Box::new(StubQuality),
            MetricBackend::Remote => Box::new(RemoteQuality::new(self.config.metrics.remote.clone())?),
        })
    }
}

fn save_manifest(dir: &Path, manifest: &RunManifest, config: &AppConfig) -> Result<()> {
    manifest.save(dir.join("manifest.toml"))?;
    let p = dir.join("config.toml");
    fs::write(&p, config.to_toml()?).with_context(|| format!("writing {}", p.display()))
}

fn path_str(p: &Path) -> String {
    p.display().to_string()
}

/// A corpus scene loaded from disk.
struct Scene {
    entry: CorpusEntry,
    video: VideoClip,
}

fn load_scene(ctx: &Ctx, name: &str) -> Result<Scene> {
    let dir = ctx.scene_dir(name);
    require(&dir.join("scene.toml"), "corpus-gen")?;
    let p = dir.join("scene.toml");
    let text = fs::read_to_string(&p).with_context(|| format!("reading {}", p.display()))?;
    let entry: CorpusEntry =
        toml::from_str(&text).map_err(|e| vfxaug::Error::Config(format!("{}: {e}", p.display())))?;
    let video = read_video_frames(dir.join("frames"))?;
    Ok(Scene { entry, video })
}

fn load_model(ctx: &Ctx) -> Result<DiTModel> {
    let dir = ctx.checkpoint_dir();
    require(&dir.join("model.toml"), "train")?;
    Ok(DiTModel::load(&dir)?)
}

pub fn corpus_gen(ctx: &Ctx) -> Result<()> {
    let root = runs::create(&ctx.config.paths.corpus, ctx.force)?;
    let corpus = default_corpus();
    for e in &corpus {
        let dir = root.join(&e.name);
        let scene = generate(&e.spec)?;
        write_video_frames(dir.join("frames"), &scene.video)?;
        for t in &scene.tracks {
            write_mask_frames(dir.join("masks").join(t.label.replace(' ', "_")), &t.mask)?;
        }
        let text = toml::to_string_pretty(e).context("serializing scene")?;
        fs::write(dir.join("scene.toml"), text).context("writing scene.toml")?;
    }
    let manifest = RunManifest::new("corpus-gen").param("scenes", &corpus.iter().map(|e| e.name.clone()).collect::<Vec<_>>())?;
    save_manifest(&root, &manifest, &ctx.config)?;
    println!("wrote {} scenes to {}", corpus.len(), root.display());
    Ok(())
}

pub fn train(ctx: &Ctx, steps: Option<usize>) -> Result<()> {
    let mut cfg = ctx.config.clone();
    if let Some(s) = steps {
        cfg.train.steps = s;
    }
    cfg.train.validate()?;
    let dir = runs::create(&ctx.checkpoint_dir(), ctx.force)?;
    let scenes = training_scenes(cfg.data.extra_scenes, cfg.data.seed);
    let data = training_examples(&scenes, cfg.edit.vae)?;
    info!("training on {} examples from {} scenes", data.len(), scenes.len());
    let schedule = NoiseSchedule::new(cfg.schedule)?;
    let mut model = DiTModel::new(cfg.model.clone())?;
    let log = train_toy(&mut model, &schedule, &data, &cfg.train)?;
    model.save(&dir)?;
    log.save(dir.join("loss.csv"))?;
    let manifest = RunManifest::new("train")
        .seed("model", cfg.model.seed)
        .seed("train", cfg.train.seed)
        .seed("data", cfg.data.seed)
        .param("train", &cfg.train)?
        .param("initial_loss", &log.initial_smoothed())?
        .param("final_loss", &log.final_smoothed())?;
    save_manifest(&dir, &manifest, &cfg)?;
    println!(
        "trained {} steps: smoothed loss {:.4} -> {:.4}",
        cfg.train.steps,
        log.initial_smoothed(),
        log.final_smoothed()
    );
    Ok(())
}

pub fn invert(ctx: &Ctx, scene: &str) -> Result<()> {
    let s = load_scene(ctx, scene)?;
    let model = load_model(ctx)?;
    let schedule = ctx.schedule()?;
    let dir = runs::create(&ctx.invert_dir(scene), ctx.force)?;
    let x0 = vae_encode(&s.video, ctx.config.edit.vae)?;
    let inv = ddim_invert_with(&model, &schedule, &x0, &[], &ctx.config.invert)?;
    inv.cache.save(dir.join("cache.bundle"))?;
    let xt = inv.x_t();
    write_tensor(dir.join("x_t.tensor"), &TensorFile::new(xt.dims().to_vec(), xt.data().to_vec())?)?;
    let manifest = RunManifest::new("invert")
        .input("scene", &path_str(&ctx.scene_dir(scene)))
        .input("model", &path_str(&ctx.checkpoint_dir()))
        .param("invert", &ctx.config.invert)?;
    save_manifest(&dir, &manifest, &ctx.config)?;
    println!("inverted {scene}: {} cache entries", inv.cache.len());
    Ok(())
}

pub struct EditArgs<'a> {
    pub scene: &'a str,
    pub mode: AblationMode,
    pub instruction: Option<&'a str>,
    pub planner: Option<PlannerKind>,
    pub strength: Option<f64>,
}

fn write_result(dir: &Path, r: &EditResult) -> Result<()> {
    write_video_frames(dir.join("output"), &r.video)?;
    write_mask_frames(dir.join("mask"), &r.mask_pixel)?;
    for (i, it) in r.iterations.iter().enumerate() {
        let d = dir.join("iterations").join(format!("{i:02}_t{:04}", it.timestep));
        write_video_frames(d.join("frames"), &it.decoded)?;
        write_video_frames(d.join("composite"), &it.composite)?;
        write_mask_frames(d.join("mask"), &it.segmentation)?;
    }
    r.plan.save(dir.join("plan.toml"))?;
    Ok(())
}

fn source_prompt(labels: &[String]) -> String {
    if labels.is_empty() {
        return "a scene".into();
    }
    labels.iter().map(|l| format!("a {l}")).collect::<Vec<_>>().join(" and ")
}

/// `edit` is the full-method case of `ablate`.
pub fn edit(ctx: &Ctx, args: &EditArgs<'_>) -> Result<()> {
    let mut config: EditConfig = ctx.config.edit.clone();
    let label = match (args.mode.sdedit_strength(), args.strength) {
        (Some(_), Some(s)) => format!("SDEdit ({s})"),
        (None, Some(_)) => return Err(usage(format!("--strength only applies to the SDEdit modes, not {}", args.mode))),
        _ => args.mode.label().to_string(),
    };
    let s = load_scene(ctx, args.scene)?;
    let inv_dir = ctx.invert_dir(args.scene);
    require(&inv_dir.join("cache.bundle"), "invert")?;
    let model = load_model(ctx)?;
    let schedule = ctx.schedule()?;
    let cache = AttentionCache::load(inv_dir.join("cache.bundle"))?;
    let kind = args.planner.unwrap_or(ctx.config.planner.kind);
    let planner = make_planner(kind, &ctx.config.planner.remote)?;
    let instruction = args.instruction.unwrap_or(&s.entry.instruction);
    let labels = s.entry.spec.labels();
    let sub = match args.mode {
        AblationMode::Full => ctx.config.paths.runs.join("edit").join(args.scene),
        m => ctx.config.paths.runs.join("ablate").join(m.key()).join(args.scene),
    };
    let dir = runs::create(&sub, ctx.force)?;
    let seg = HeuristicSegmenter::default();
    let ectx = EditContext {
        model: &model,
        schedule: &schedule,
        cache: &cache,
        segmenter: &seg,
        source_segmenter: None,
    };
    let result = match (args.mode.sdedit_strength(), args.strength) {
        (Some(_), Some(st)) => vfxaug::pipeline::edit_sdedit(&s.video, instruction, &labels, st, &config, planner.as_ref(), &ectx)?,
        _ => {
            config = args.mode.configure(&config);
            run_ablation(args.mode, &s.video, instruction, &labels, &ctx.config.edit, planner.as_ref(), &ectx)?
        }
    };
    write_result(&dir, &result)?;
    let src = source_prompt(&labels);
    let report = evaluate(
        &label,
        args.scene,
        &EvalInputs {
            original: &s.video,
            edited: &result.video,
            source_prompt: &src,
            edit_prompt: &result.plan.composition_prompt,
            edit_object: &result.plan.edit_object,
            exclusion: &result.mask_pixel,
            reference_mask: None,
        },
        &HistogramEmbedder,
        ctx.quality()?.as_ref(),
    )?;
    report.save(dir.join("report.toml"))?;
    let manifest = result
        .manifest
        .clone()
        .input("scene", &path_str(&ctx.scene_dir(args.scene)))
        .input("model", &path_str(&ctx.checkpoint_dir()))
        .input("cache", &path_str(&inv_dir.join("cache.bundle")))
        .param("planner", &kind)?
        .param("mode", &args.mode)?
        .param("resolved_edit", &config)?;
    save_manifest(&dir, &manifest, &ctx.config)?;
    let missed = result.iterations.iter().filter(|it| !it.mask_found).count();
    println!(
        "{label} on {}: masked SSIM {:.3}, directional {:.3}, mask {} px{}",
        args.scene,
        report.masked_ssim,
        report.directional,
        result.mask_pixel.count(),
        if missed > 0 { format!(", object missed in {missed} iteration(s)") } else { String::new() }
    );
    println!("wrote {}", dir.display());
    Ok(())
}

pub struct EvalArgs<'a> {
    pub name: &'a str,
    pub original: &'a Path,
    pub edited: &'a Path,
    pub exclude: Option<&'a Path>,
    pub prompt: &'a str,
    pub source_prompt: &'a str,
    pub object: &'a str,
}

pub fn eval(ctx: &Ctx, args: &EvalArgs<'_>) -> Result<()> {
    let original = read_video_frames(args.original)?;
    let edited = read_video_frames(args.edited)?;
    let exclusion = match args.exclude {
        Some(p) => vfxaug::tensor::read_mask_frames(p)?,
        None => PixelMask::zeros(original.frames(), original.height(), original.width()),
    };
    let dir = runs::create(&ctx.config.paths.runs.join("eval").join(args.name), ctx.force)?;
    let report = evaluate(
        args.name,
        args.name,
        &EvalInputs {
            original: &original,
            edited: &edited,
            source_prompt: args.source_prompt,
            edit_prompt: args.prompt,
            edit_object: args.object,
            exclusion: &exclusion,
            reference_mask: None,
        },
        &HistogramEmbedder,
        ctx.quality()?.as_ref(),
    )?;
    report.save(dir.join("report.toml"))?;
    let mut manifest = RunManifest::new("eval")
        .input("original", &path_str(args.original))
        .input("edited", &path_str(args.edited))
        .prompt("edit", args.prompt)
        .prompt("source", args.source_prompt)
        .prompt("edit_object", args.object);
    if let Some(p) = args.exclude {
        manifest = manifest.input("exclude", &path_str(p));
    }
    save_manifest(&dir, &manifest, &ctx.config)?;
    println!("{}", aggregate_table(&[report]));
    Ok(())
}

fn collect_reports(dir: &Path, out: &mut Vec<(PathBuf, MetricsReport)>) -> Result<()> {
    let mut entries: Vec<_> = fs::read_dir(dir)
        .with_context(|| format!("listing {}", dir.display()))?
        .collect::<std::io::Result<_>>()?;
    entries.sort_by_key(|e| e.path());
    for e in entries {
        let p = e.path();
        if p.is_dir() {
            collect_reports(&p, out)?;
        } else if p.file_name().is_some_and(|n| n == "report.toml") {
            out.push((p.clone(), MetricsReport::load(&p)?));
        }
    }
    Ok(())
}

pub fn report(ctx: &Ctx) -> Result<()> {
    let runs_dir = &ctx.config.paths.runs;
    let mut found = Vec::new();
    for stage in ["edit", "ablate", "eval"] {
        let d = runs_dir.join(stage);
        if d.exists() {
            collect_reports(&d, &mut found)?;
        }
    }
    if found.is_empty() {
        return Err(runs::dependency(&runs_dir.join("edit"), "edit"));
    }
    let dir = runs::create(&runs_dir.join("report"), ctx.force)?;
    let reports: Vec<MetricsReport> = found.iter().map(|(_, r)| r.clone()).collect();
    let table = aggregate_table(&reports);
    fs::write(dir.join("table.md"), &table).context("writing table.md")?;
    let sources: BTreeMap<String, String> = found
        .iter()
        .enumerate()
        .map(|(i, (p, _))| (format!("report_{i:03}"), path_str(p)))
        .collect();
    let mut manifest = RunManifest::new("report");
    manifest.inputs = sources;
    save_manifest(&dir, &manifest, &ctx.config)?;
    print!("{table}");
    Ok(())
}
