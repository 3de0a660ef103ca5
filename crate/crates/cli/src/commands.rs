use std::fs;
use std::io::Write;
use std::path::Path;

use anyhow::{anyhow, Context};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;

use rpg_core::dataio::{
    export_trace_ply, interpolate_latents, load_cloud, load_dataset, synthetic_dataset, write_text_cloud, ColorMode,
    LabeledCloud, Split,
};
use rpg_core::geometry::{cloud_chamfer, nearest_neighbors, normalize_cloud, PointCloud};
use rpg_core::metrics::{generation_report, purity, reconstruction_cd, CloudSet, MetricRecord, SetRole};
use rpg_core::model::{segment, GenerationTrace, GeneratorConfig, ParamSet, ParamSpec, Rpg};
use rpg_core::training::{fit, load_checkpoint, TrainConfig};

use crate::args::{Command, InspectArgs, TrainArgs};
use crate::config::{preset, ConfigFile};
use crate::manifest::{Run, RunManifest};
use crate::{usage, CliError};

type CliResult<T = ()> = Result<T, CliError>;

pub fn dispatch(command: Command, out: &mut (dyn Write + Send)) -> CliResult {
    let run = match command {
        Command::Inspect(a) => return inspect(&a, out),
        Command::Rerun(a) => {
            let text = fs::read_to_string(&a.manifest).with_context(|| format!("reading {}", a.manifest.display()))?;
            let manifest: RunManifest =
                serde_json::from_str(&text).with_context(|| format!("parsing {}", a.manifest.display()))?;
            let mut run = manifest.run;
            if let Some(o) = a.out {
                run.set_output(o);
            }
            run
        }
        Command::Train(a) => resolve_train(&a)?,
        Command::Reconstruct(a) => Run::Reconstruct {
            ckpt: a.ckpt,
            input: a.input,
            out: a.out,
            level: a.level,
        },
        Command::Generate(a) => Run::Generate {
            ckpt: a.ckpt,
            n: a.n,
            seed: a.seed,
            out: a.out,
        },
        Command::Interpolate(a) => Run::Interpolate {
            ckpt: a.ckpt,
            a: a.a,
            b: a.b,
            steps: a.steps,
            out: a.out,
            all_stages: a.all_stages,
        },
        Command::Segment(a) => Run::Segment {
            ckpt: a.ckpt,
            input: a.input,
            level: a.level,
            out: a.out,
        },
        Command::Eval(a) => Run::Eval {
            ckpt: a.ckpt,
            reference: a.reference,
            n_generated: a.n_generated,
            seed: a.seed,
            out: a.out,
        },
        Command::Synth(a) => Run::Synth {
            out: a.out,
            n: a.n,
            per_kind: a.per_kind,
            seed: a.seed,
            jitter: a.jitter,
        },
    };
    execute(&run, out)
}

fn resolve_train(a: &TrainArgs) -> CliResult<Run> {
    let file = match &a.config {
        Some(p) => ConfigFile::load(p).map_err(|e| usage(format!("{e:#}")))?,
        None => ConfigFile::default(),
    };
    let mut generator = file.generator(a.preset.as_deref()).map_err(|e| usage(e.to_string()))?;
    let mut train = file.train.clone().unwrap_or_default();
    if a.vae {
        generator.vae_mode = true;
    }
    if let Some(v) = a.epochs {
        train.epochs = v;
    }
    if let Some(v) = a.batch_size {
        train.batch_size = v;
    }
    if let Some(v) = a.lr {
        train.learning_rate = v;
    }
    if let Some(v) = a.seed {
        train.seed = v;
    }
    if let Some(v) = a.save_every {
        train.save_every = v;
    }
    generator.validate().map_err(|e| usage(e.to_string()))?;
    if train.batch_size == 0 {
        return Err(usage("batch_size must be positive"));
    }
    Ok(Run::Train {
        generator,
        train,
        data: a.data.clone(),
        out: a.out.clone(),
    })
}

/// Runs a resolved invocation and records its manifest.
pub fn execute(run: &Run, out: &mut dyn Write) -> CliResult {
    let generator = match run {
        Run::Train {
            generator,
            train,
            data,
            out: dir,
        } => {
            train_command(generator, train, data, dir, out)?;
            Some(generator.clone())
        }
        Run::Reconstruct {
            ckpt,
            input,
            out: path,
            level,
        } => {
            let model = load_model(ckpt)?;
            let cloud = load_input(input)?;
            let trace = model.reconstruct_trace(&cloud.cloud)?;
            let cd = cloud_chamfer(&cloud.cloud, &trace.output_cloud())?;
            let mode = level.map_or(ColorMode::None, ColorMode::ByAncestor);
            export_trace_ply(path, &trace, mode)?;
            emit(out, &MetricRecord::scaled("cd", f64::from(cd), 1, 1))?;
            Some(model.config)
        }
        Run::Generate { ckpt, n, seed, out: dir } => {
            if *n == 0 {
                return Err(usage("--n must be at least 1"));
            }
            let model = load_model(ckpt)?;
            let traces = sample(&model, *n, *seed)?;
            fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
            for (i, t) in traces.iter().enumerate() {
                export_trace_ply(&dir.join(format!("sample_{i:04}.ply")), t, ancestor_colors(t))?;
            }
            writeln!(out, "wrote {n} samples to {}", dir.display())?;
            Some(model.config)
        }
        Run::Interpolate {
            ckpt,
            a,
            b,
            steps,
            out: dir,
            all_stages,
        } => {
            if *steps < 2 {
                return Err(usage("--steps must be at least 2"));
            }
            let model = load_model(ckpt)?;
            interpolate_command(&model, a, b, *steps, dir, *all_stages, out)?;
            Some(model.config)
        }
        Run::Segment {
            ckpt,
            input,
            level,
            out: path,
        } => {
            let model = load_model(ckpt)?;
            segment_command(&model, input, *level, path, out)?;
            Some(model.config)
        }
        Run::Eval {
            ckpt,
            reference,
            n_generated,
            seed,
            out: path,
        } => {
            if *n_generated == 0 {
                return Err(usage("--n-generated must be at least 1"));
            }
            let model = load_model(ckpt)?;
            eval_command(&model, reference, *n_generated, *seed, path.as_deref(), out)?;
            Some(model.config)
        }
        Run::Synth {
            out: dir,
            n,
            per_kind,
            seed,
            jitter,
        } => {
            if *n < 8 || *per_kind == 0 {
                return Err(usage("--n must be at least 8 and --per-kind at least 1"));
            }
            let ds = synthetic_dataset(*n, *per_kind, *seed, *jitter)?;
            fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
            for (name, item) in ds.names.iter().zip(&ds.items) {
                write_text_cloud(&dir.join(format!("{name}.xyz")), &item.cloud, item.labels.as_deref())?;
            }
            writeln!(out, "wrote {} shapes to {}", ds.len(), dir.display())?;
            None
        }
    };
    if let Some(path) = run.manifest_path() {
        let manifest = RunManifest::new(run.clone(), generator);
        let json = serde_json::to_string_pretty(&manifest)?;
        fs::write(&path, json + "\n").with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(())
}

fn emit<T: Serialize>(out: &mut dyn Write, record: &T) -> CliResult {
    writeln!(out, "{}", serde_json::to_string(record)?)?;
    Ok(())
}

fn load_model(path: &Path) -> CliResult<Rpg<f32>> {
    let ck = load_checkpoint(path).with_context(|| format!("loading checkpoint {}", path.display()))?;
    Ok(Rpg::new(ck.generator, ck.params)?)
}

fn load_input(path: &Path) -> CliResult<LabeledCloud> {
    let raw = load_cloud(path)?;
    Ok(LabeledCloud {
        cloud: normalize_cloud(&raw.cloud)?,
        labels: raw.labels,
    })
}

fn ancestor_colors(trace: &GenerationTrace<f32>) -> ColorMode {
    ColorMode::ByAncestor(1.min(trace.depth()))
}

/// Decodes `n` codes drawn from N(0, I); codes are drawn sequentially from `seed`.
pub fn sample(model: &Rpg<f32>, n: usize, seed: u64) -> CliResult<Vec<GenerationTrace<f32>>> {
    if !model.config.vae_mode {
        return Err(anyhow!("sampling needs a checkpoint trained with vae_mode").into());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let codes: Vec<Vec<f32>> = (0..n)
        .map(|_| (0..model.config.latent_width).map(|_| rng.sample(StandardNormal)).collect())
        .collect();
    Ok(codes
        .par_iter()
        .map(|z| model.generate(z))
        .collect::<Result<Vec<_>, _>>()?)
}

fn train_command(
    generator: &GeneratorConfig,
    train: &TrainConfig,
    data: &Path,
    dir: &Path,
    out: &mut dyn Write,
) -> CliResult {
    let ds = load_dataset(data, Split::Train)?;
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let log_path = dir.join("train_log.csv");
    let mut log = fs::File::create(&log_path).with_context(|| format!("creating {}", log_path.display()))?;
    writeln!(log, "epoch,cd,reg,kl,total")?;
    let mut write_err = None;
    let outcome = fit(&ds.clouds(), generator, train, Some(dir), |e| {
        let line = format!("{},{},{},{},{}", e.epoch, e.cd, e.reg, e.kl, e.total);
        if let Err(err) = writeln!(log, "{line}") {
            write_err.get_or_insert(err);
        }
        let _ = writeln!(out, "{line}");
    });
    if let Some(e) = write_err {
        return Err(anyhow::Error::from(e).context(format!("writing {}", log_path.display())).into());
    }
    let outcome = outcome?;
    writeln!(
        out,
        "trained {} epochs on {} clouds; checkpoint {}",
        outcome.log.len(),
        ds.len(),
        dir.join("final.rpgk").display()
    )?;
    Ok(())
}

#[derive(Serialize)]
struct StepRecord {
    metric: &'static str,
    step: usize,
    value: f64,
}

fn interpolate_command(
    model: &Rpg<f32>,
    a: &Path,
    b: &Path,
    steps: usize,
    dir: &Path,
    all_stages: bool,
    out: &mut dyn Write,
) -> CliResult {
    let za = model.encode(&load_input(a)?.cloud)?.mean;
    let zb = model.encode(&load_input(b)?.cloud)?.mean;
    let codes = interpolate_latents(&za, &zb, steps)?;
    let traces = codes
        .par_iter()
        .map(|z| model.generate(z))
        .collect::<Result<Vec<_>, _>>()?;
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    for (i, t) in traces.iter().enumerate() {
        let path = dir.join(format!("step_{i:03}.ply"));
        export_trace_ply(&path, t, ancestor_colors(t))?;
        if all_stages {
            export_trace_ply(&path, t, ColorMode::ByStage)?;
        }
    }
    let clouds: Vec<PointCloud<f32>> = traces.iter().map(GenerationTrace::output_cloud).collect();
    for i in 0..steps - 1 {
        let cd = cloud_chamfer(&clouds[i], &clouds[i + 1])?;
        emit(
            out,
            &StepRecord {
                metric: "step_cd",
                step: i,
                value: f64::from(cd),
            },
        )?;
    }
    let ends = cloud_chamfer(&clouds[0], &clouds[steps - 1])?;
    emit(
        out,
        &StepRecord {
            metric: "endpoint_cd",
            step: steps - 1,
            value: f64::from(ends),
        },
    )?;
    Ok(())
}

/// Part labels of `target` points carried over from their nearest labelled source point.
pub fn transfer_labels(source: &PointCloud<f32>, labels: &[usize], target: &PointCloud<f32>) -> CliResult<Vec<usize>> {
    Ok(nearest_neighbors(target.points(), source.points())?
        .iter()
        .map(|nb| labels[nb.index])
        .collect())
}

fn segment_command(model: &Rpg<f32>, input: &Path, level: usize, path: &Path, out: &mut dyn Write) -> CliResult {
    let cloud = load_input(input)?;
    let trace = model.reconstruct_trace(&cloud.cloud)?;
    let depth = trace.depth();
    if level > depth {
        return Err(anyhow!("level {level} exceeds the generator depth {depth}").into());
    }
    let predicted = if level == depth {
        (0..trace.leaves().len()).collect()
    } else {
        segment(&trace, depth, level)?
    };
    export_trace_ply(path, &trace, ColorMode::ByAncestor(level))?;
    let n_leaves = trace.leaves().len();
    emit(out, &MetricRecord::plain("segments", trace.stages[level].len() as f64, 1, n_leaves))?;
    if let Some(labels) = &cloud.labels {
        let truth = transfer_labels(&cloud.cloud, labels, &trace.output_cloud())?;
        emit(out, &MetricRecord::plain("purity", purity(&predicted, &truth)?, 1, n_leaves))?;
    }
    Ok(())
}

fn eval_command(
    model: &Rpg<f32>,
    reference: &Path,
    n_generated: usize,
    seed: u64,
    path: Option<&Path>,
    out: &mut dyn Write,
) -> CliResult {
    let ds = load_dataset(reference, Split::Test)?;
    let clouds = ds.clouds();
    let recon = reconstruction_cd(model, &clouds)?;
    let mut records = vec![MetricRecord::scaled("recon_cd", recon.mean, clouds.len(), clouds.len())];
    if model.config.vae_mode {
        let generated: Vec<PointCloud<f32>> = sample(model, n_generated, seed)?
            .iter()
            .map(GenerationTrace::output_cloud)
            .collect();
        let reference = CloudSet::new(clouds, SetRole::Reference)?;
        let generated = CloudSet::new(generated, SetRole::Generated)?;
        records.extend(generation_report(&reference, &generated)?);
    }
    let mut text = String::new();
    for r in &records {
        text.push_str(&serde_json::to_string(r)?);
        text.push('\n');
    }
    out.write_all(text.as_bytes())?;
    if let Some(p) = path {
        fs::write(p, &text).with_context(|| format!("writing {}", p.display()))?;
    }
    Ok(())
}

fn inspect(a: &InspectArgs, out: &mut dyn Write) -> CliResult {
    let (generator, train) = if let Some(ckpt) = &a.ckpt {
        let ck = load_checkpoint(ckpt).with_context(|| format!("loading checkpoint {}", ckpt.display()))?;
        (ck.generator, ck.train)
    } else if let Some(name) = &a.preset {
        (preset(name).map_err(|e| usage(e.to_string()))?, TrainConfig::default())
    } else if let Some(path) = &a.config {
        let file = ConfigFile::load(path).map_err(|e| usage(format!("{e:#}")))?;
        (
            file.generator(None).map_err(|e| usage(e.to_string()))?,
            file.train.unwrap_or_default(),
        )
    } else {
        return Err(usage("inspect needs one of --ckpt, --preset or --config"));
    };
    let layout = ParamSet::<ParamSpec>::layout(&generator)?;
    let mut w = String::new();
    let mut line = |k: &str, v: String| {
        w.push_str(&format!("{k}: {v}\n"));
    };
    line("k_schedule", format!("{:?}", generator.k_schedule));
    line("leaf_count", generator.leaf_count().to_string());
    line("stage_sizes", format!("{:?}", generator.stage_sizes()));
    line("latent_width", generator.latent_width.to_string());
    line("embed_width", generator.embed_width.to_string());
    line("mlp_hidden", format!("{:?}", generator.mlp_hidden));
    line("encoder_hidden", format!("{:?}", generator.encoder_hidden));
    line("vae_mode", generator.vae_mode.to_string());
    line("lambda", format!("{:e}", train.lambda));
    line("beta", format!("{:e}", train.beta));
    line("learning_rate", format!("{:e}", train.learning_rate));
    line("lr_schedule", format!("{:?}", train.lr_schedule).to_lowercase());
    line("batch_size", train.batch_size.to_string());
    line("epochs", train.epochs.to_string());
    line("weight_decay", format!("{:e}", train.adamw.weight_decay));
    let mut total = 0;
    let mut encoder = 0;
    let named = layout.map(|name, spec| (name.to_string(), spec.shape.clone())).into_values();
    for (name, shape) in &named {
        let n: usize = shape.iter().product();
        total += n;
        if rpg_core::model::is_encoder_param(name) {
            encoder += n;
        }
        line("tensor", format!("{name} {shape:?} {n}"));
    }
    line("parameters", total.to_string());
    line("encoder_parameters", encoder.to_string());
    line("generator_parameters", (total - encoder).to_string());
    out.write_all(w.as_bytes())?;
    Ok(())
}

