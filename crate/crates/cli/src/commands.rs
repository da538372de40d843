use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};
use serde::{Deserialize, Serialize};
use serde_json::json;

use iidm::denoiser::{Architecture, DenoiserParams};
use iidm::imaging::{read_image, read_mask, write_mask_png, write_png_to};
use iidm::metrics::{image_set_distance, style_similarity, ChannelStatsFeatures, ScoreReport};
use iidm::pipeline::{ensemble_average, refine as refine_rounds, run_inference};
use iidm::toy::{band_mask, dataset, style_reference, LabelGaussian};
use iidm::training::{checkpoint_file_name, train_loop, TrainConfig};
use iidm::weights::{load_params, WeightFile};
use iidm::{Codec, CodecKind, Domain, NoiseSchedule, PipelineConfig, RgbImage, Seed, SynthesisConditions};

use crate::manifest::{manifest_path_for, Run};
use crate::{ColorTransferArgs, EnsembleArgs, EvalArgs, MakeToyArgs, PipelineArgs, RefineArgs, SampleArgs, ScheduleDumpArgs, TrainArgs};

/// Seed of the fixed linear-patch projection when no codec file is given.
const CODEC_SEED: Seed = Seed(0);

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path, what: &str) -> Result<T> {
    let text = fs::read_to_string(path).with_context(|| format!("cannot read {what} {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("malformed {what} {}", path.display()))
}

fn load_image(path: &Path) -> Result<RgbImage> {
    read_image(path).with_context(|| format!("cannot read image {}", path.display()))
}

fn png_bytes(image: &RgbImage) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    write_png_to(image, &mut buf)?;
    Ok(buf)
}

/// Training file: the optimizer settings plus the network and codec.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct TrainFile {
    #[serde(flatten)]
    train: TrainConfig,
    #[serde(default)]
    codec: CodecKind,
    /// Defaults to one more than the largest label in the data.
    #[serde(default)]
    num_labels: Option<usize>,
    #[serde(default)]
    hidden: Option<Vec<usize>>,
    #[serde(default)]
    time_dim: Option<usize>,
}

/// `NAME.png` / `NAME.mask.png` pairs, sorted by name.
fn load_pairs(dir: &Path) -> Result<Vec<(String, RgbImage, iidm::LabelGrid)>> {
    let mut names = Vec::new();
    for entry in fs::read_dir(dir).with_context(|| format!("cannot read data directory {}", dir.display()))? {
        let name = entry?.file_name().to_string_lossy().into_owned();
        if let Some(stem) = name.strip_suffix(".mask.png") {
            names.push(stem.to_owned());
        }
    }
    names.sort();
    ensure!(!names.is_empty(), "no *.mask.png files in {}", dir.display());
    names
        .into_iter()
        .map(|stem| {
            let image = load_image(&dir.join(format!("{stem}.png")))?;
            let mask_path = dir.join(format!("{stem}.mask.png"));
            let mask = read_mask(&mask_path).with_context(|| format!("cannot read mask {}", mask_path.display()))?;
            ensure!(
                (mask.width(), mask.height()) == (image.width(), image.height()),
                "{stem}: mask and image sizes differ"
            );
            Ok((stem, image, mask))
        })
        .collect()
}

pub fn train(args: TrainArgs) -> Result<()> {
    let mut run = Run::start("train");
    run.input(&args.config);
    let mut file: TrainFile = read_json(&args.config, "training config")?;
    let cfg = &mut file.train;
    if let Some(v) = args.seed {
        cfg.seed = v;
    }
    if let Some(v) = args.steps {
        cfg.steps = v;
    }
    if let Some(v) = args.batch_size {
        cfg.batch_size = v;
    }
    if let Some(v) = args.learning_rate {
        cfg.learning_rate = v;
    }
    if let Some(v) = args.checkpoint_every {
        cfg.checkpoint_every = v;
    }
    cfg.validate()?;

    let pairs = load_pairs(&args.data)?;
    run.input(&args.data);
    let (w, h) = (pairs[0].1.width(), pairs[0].1.height());
    ensure!(
        pairs.iter().all(|(_, img, _)| (img.width(), img.height()) == (w, h)),
        "all training images must share one size"
    );
    let max_label = pairs.iter().filter_map(|(_, _, m)| m.max_label()).max().unwrap_or(0) as usize;
    let num_labels = file.num_labels.unwrap_or(max_label + 1);
    ensure!(max_label < num_labels, "mask label {max_label} exceeds num_labels {num_labels}");
    file.num_labels = Some(num_labels);

    let codec = Codec::from_kind(file.codec, CODEC_SEED);
    let mut arch = Architecture::standard(codec.latent_shape(h, w)?, num_labels);
    if let Some(hidden) = &file.hidden {
        arch.hidden = hidden.clone();
    }
    if let Some(d) = file.time_dim {
        arch.time_dim = d;
    }
    file.hidden = Some(arch.hidden.clone());
    file.time_dim = Some(arch.time_dim);

    let seed = Seed(file.train.seed);
    let init = DenoiserParams::init(arch, seed, true)?;
    fs::create_dir_all(&args.out).with_context(|| format!("cannot create {}", args.out.display()))?;
    let dataset: Vec<_> = pairs.into_iter().map(|(_, img, mask)| (img, mask)).collect();
    let result = train_loop(&file.train, &dataset, init, &codec, &NoiseSchedule::standard(), Some(&args.out))?;

    for (step, _) in &result.checkpoints {
        run.record(&args.out.join(checkpoint_file_name(*step)));
    }
    run.record(&args.out.join("loss.csv"));
    if let Some((step, loss)) = result.history.last() {
        println!("step {step} loss {loss:.6}");
    }
    run.finish(&args.out.join("manifest.json"), serde_json::to_value(&file)?, Some(file.train.seed))?;
    Ok(())
}

fn resolve_pipeline(args: &PipelineArgs) -> Result<PipelineConfig> {
    let mut cfg: PipelineConfig = match &args.config {
        Some(path) => read_json(path, "pipeline config")?,
        None => PipelineConfig::default(),
    };
    if !args.ckpt.is_empty() {
        cfg.checkpoints = args.ckpt.clone();
    }
    if let Some(v) = args.seed {
        cfg.seed = v;
    }
    if let Some(v) = args.t_start {
        cfg.t_start = v;
    }
    if let Some(v) = args.rounds {
        cfg.rounds = v;
    }
    if let Some(v) = args.color_transfer {
        cfg.color_transfer = v;
    }
    if let Some(v) = args.mode {
        cfg.mode = v;
    }
    ensure!(!cfg.checkpoints.is_empty(), "no checkpoint given (use --ckpt or the config's \"checkpoints\")");
    cfg.validate(&NoiseSchedule::standard())?;
    Ok(cfg)
}

struct Loaded {
    config: PipelineConfig,
    conditions: SynthesisConditions,
    codec: Codec,
    params: DenoiserParams,
}

fn load_pipeline(args: &PipelineArgs, run: &mut Run) -> Result<Loaded> {
    let config = resolve_pipeline(args)?;
    if let Some(path) = &args.config {
        run.input(path);
    }
    let mask = read_mask(&args.mask).with_context(|| format!("cannot read mask {}", args.mask.display()))?;
    let style = load_image(&args.style)?;
    run.input(&args.mask);
    run.input(&args.style);
    let conditions = SynthesisConditions::new(mask, style).context("mask and style sizes differ")?;

    let codec = match &args.codec {
        Some(path) => {
            run.input(path);
            WeightFile::load(path)
                .and_then(Codec::try_from)
                .with_context(|| format!("cannot load codec {}", path.display()))?
        }
        None => Codec::from_kind(config.codec, CODEC_SEED),
    };
    let sets = config
        .checkpoints
        .iter()
        .map(|p| {
            run.input(p);
            load_params(p).with_context(|| format!("cannot load checkpoint {}", p.display()))
        })
        .collect::<Result<Vec<_>>>()?;
    let params = ensemble_average(&sets)?;
    let arch = params.architecture();
    let style = conditions.style_ref();
    let shape = codec.latent_shape(style.height(), style.width())?;
    ensure!(
        arch.latent == shape,
        "checkpoint expects latent {:?} but the images give {:?}",
        arch.latent,
        shape
    );
    conditions.mask().check_labels(arch.num_labels)?;
    Ok(Loaded {
        config,
        conditions,
        codec,
        params,
    })
}

pub fn sample(args: SampleArgs) -> Result<()> {
    let mut run = Run::start("sample");
    let l = load_pipeline(&args.pipeline, &mut run)?;
    let out = run_inference(&l.config, &l.conditions, &NoiseSchedule::standard(), &l.codec, &l.params)?;
    let path = &args.pipeline.out;
    run.output(path, &png_bytes(&out)?)?;
    run.finish(&manifest_path_for(path), serde_json::to_value(&l.config)?, Some(l.config.seed))?;
    Ok(())
}

pub fn refine(args: RefineArgs) -> Result<()> {
    let mut run = Run::start("refine");
    let l = load_pipeline(&args.pipeline, &mut run)?;
    let image = load_image(&args.image)?;
    run.input(&args.image);
    let first = args.first_round.unwrap_or(l.config.rounds as u64);
    let out = refine_rounds(&l.config, &image, &l.conditions, &NoiseSchedule::standard(), &l.codec, &l.params, first)?;
    let path = &args.pipeline.out;
    run.output(path, &png_bytes(&out)?)?;
    let mut config = serde_json::to_value(&l.config)?;
    config["first_round"] = json!(first);
    run.finish(&manifest_path_for(path), config, Some(l.config.seed))?;
    Ok(())
}

pub fn color_transfer(args: ColorTransferArgs) -> Result<()> {
    let mut run = Run::start("color-transfer");
    let src = load_image(&args.src)?;
    let reference = load_image(&args.reference)?;
    run.input(&args.src);
    run.input(&args.reference);
    let out = iidm::imaging::color_transfer(&src, &reference);
    run.output(&args.out, &png_bytes(&out)?)?;
    run.finish(&manifest_path_for(&args.out), json!({}), None)?;
    Ok(())
}

pub fn ensemble(args: EnsembleArgs) -> Result<()> {
    let mut run = Run::start("ensemble");
    let sets = args
        .inputs
        .iter()
        .map(|p| {
            run.input(p);
            load_params(p).with_context(|| format!("cannot load checkpoint {}", p.display()))
        })
        .collect::<Result<Vec<_>>>()?;
    let avg = ensemble_average(&sets)?;
    run.output(&args.out, &WeightFile::from(&avg).to_bytes()?)?;
    run.finish(&manifest_path_for(&args.out), json!({ "count": sets.len() }), None)?;
    Ok(())
}

#[derive(Debug, Default, Deserialize)]
struct External {
    mask_accuracy: Option<f64>,
    aesthetic: Option<f64>,
}

#[derive(Debug, Serialize)]
struct ImageScore {
    name: String,
    style_similarity: f64,
}

#[derive(Debug, Serialize)]
struct EvalReport {
    summary: ScoreReport,
    images: Vec<ImageScore>,
}

fn image_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files = Vec::new();
    for entry in fs::read_dir(dir).with_context(|| format!("cannot read image directory {}", dir.display()))? {
        let path = entry?.path();
        let name = path.file_name().unwrap_or_default().to_string_lossy();
        let is_image = name.ends_with(".png") || name.ends_with(".ppm");
        if is_image && !name.ends_with(".mask.png") {
            files.push(path);
        }
    }
    files.sort();
    Ok(files)
}

pub fn eval(args: EvalArgs) -> Result<()> {
    let mut run = Run::start("eval");
    let external: External = match &args.external {
        Some(path) => {
            run.input(path);
            read_json(path, "external scores")?
        }
        None => External::default(),
    };
    let gen_files = image_files(&args.gen)?;
    ensure!(gen_files.len() >= 2, "need at least 2 generated images in {}", args.gen.display());
    let mut images = Vec::new();
    let mut generated = Vec::new();
    let mut references = Vec::new();
    for path in &gen_files {
        let name = path.file_name().unwrap().to_string_lossy().into_owned();
        let ref_path = args.reference.join(&name);
        if !ref_path.exists() {
            bail!("no reference image {} for {}", ref_path.display(), path.display());
        }
        let g = load_image(path)?;
        let r = load_image(&ref_path)?;
        run.input(path);
        run.input(&ref_path);
        images.push(ImageScore {
            name,
            style_similarity: style_similarity(&g, &r, args.bins)?,
        });
        generated.push(g);
        references.push(r);
    }
    let s = images.iter().map(|i| i.style_similarity).sum::<f64>() / images.len() as f64;
    let fid = image_set_distance(&generated, &references, &ChannelStatsFeatures::default())?;
    let report = EvalReport {
        summary: ScoreReport::new(external.mask_accuracy, external.aesthetic, fid, s),
        images,
    };

    let mut json_bytes = serde_json::to_vec_pretty(&report)?;
    json_bytes.push(b'\n');
    run.output(&args.report, &json_bytes)?;
    let mut csv = String::from("name,style_similarity\n");
    for img in &report.images {
        csv.push_str(&format!("{},{}\n", img.name, img.style_similarity));
    }
    run.output(&args.report.with_extension("csv"), csv.as_bytes())?;
    println!("S {:.4} fid {:.6}", s, fid);
    run.finish(&manifest_path_for(&args.report), json!({ "bins": args.bins }), None)?;
    Ok(())
}

pub fn schedule_dump(args: ScheduleDumpArgs) -> Result<()> {
    let mut run = Run::start("schedule-dump");
    let schedule = NoiseSchedule::linear(args.t_max, args.slope)?;
    let mut csv = Vec::new();
    schedule.write_csv(&mut csv)?;
    run.output(&args.out, &csv)?;
    run.finish(
        &manifest_path_for(&args.out),
        json!({ "t_max": args.t_max, "slope": args.slope }),
        None,
    )?;
    Ok(())
}

pub fn make_toy(args: MakeToyArgs) -> Result<()> {
    let mut run = Run::start("make-toy");
    let prior = LabelGaussian::landscape();
    fs::create_dir_all(&args.out).with_context(|| format!("cannot create {}", args.out.display()))?;
    let pairs = dataset(&prior, args.count, args.width, args.height, Seed(args.seed))?;
    for (i, (image, mask)) in pairs.iter().enumerate() {
        let image_path = args.out.join(format!("{i:04}.png"));
        run.output(&image_path, &png_bytes(&image.clamp_unit())?)?;
        let mask_path = args.out.join(format!("{i:04}.mask.png"));
        write_mask_png(mask, &mask_path)?;
        run.record(&mask_path);
        if args.styles {
            let mut rng = Seed(args.seed).stream(Domain::Data, i as u64, 2);
            let fresh = band_mask(args.width, args.height, prior.num_labels(), &mut rng)?;
            let style = style_reference(&fresh, prior.num_labels(), &mut rng)?;
            run.output(&args.out.join(format!("{i:04}.style.png")), &png_bytes(&style)?)?;
            let style_mask = args.out.join(format!("{i:04}.style-mask.png"));
            write_mask_png(&fresh, &style_mask)?;
            run.record(&style_mask);
        }
    }
    run.finish(
        &args.out.join("manifest.json"),
        json!({ "count": args.count, "width": args.width, "height": args.height, "styles": args.styles }),
        Some(args.seed),
    )?;
    Ok(())
}
