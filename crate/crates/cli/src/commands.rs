use std::collections::HashMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context, Result};
use rayon::prelude::*;

use birdsong_core::audio::{
    decode_audio, load_manifest, resolve_entry, write_wav, AudioClip, DatasetManifest, FetchConfig, FetchQuery, Fetcher,
    ManifestEntry,
};
use birdsong_core::audio::fetch::{SystemClock, UreqClient};
use birdsong_core::dataset::{build_dataset, Dataset, PrepOptions, Sample};
use birdsong_core::detect::{merge_events, timeline, write_events_jsonl, ChunkParams, Detector};
use birdsong_core::features::{FeatureCache, FeatureConfig, FeatureExtractor, FeatureKind};
use birdsong_core::model::{
    gradcheck_suite, load_weights, save_weights, FcnModel, Preprocessing, GRADCHECK_TOLERANCE,
};
use birdsong_core::nn::Fault;
use birdsong_core::synth::{synth_dataset, SynthSpec};
use birdsong_core::train::{
    cross_validate_runs, duration_study, evaluate, grid_search, write_matrix_csv, GridSpec,
};
use birdsong_core::Error;

use crate::args::PrepArgs;
use crate::{Cli, Command};

/// Raised when a gradient check exceeds the tolerance.
#[derive(Debug)]
struct GradcheckFailed(f64);

impl std::fmt::Display for GradcheckFailed {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "gradient check failed: max relative error {:.3e} > {GRADCHECK_TOLERANCE:e}", self.0)
    }
}

impl std::error::Error for GradcheckFailed {}

pub fn exit_code(e: &anyhow::Error) -> u8 {
    for cause in e.chain() {
        if cause.downcast_ref::<GradcheckFailed>().is_some() {
            return 10;
        }
        if let Some(err) = cause.downcast_ref::<Error>() {
            return match err {
                Error::Io { .. } => 3,
                Error::Format(_) | Error::Corruption(_) | Error::Parse(_) => 4,
                Error::Parameter(_) | Error::Config(_) | Error::Validation(_) => 5,
                Error::Shape(_) | Error::DegenerateInput(_) | Error::EmptyResult(_) | Error::Index(_) => 6,
                Error::Numeric(_) | Error::Divergence { .. } | Error::Graph(_) => 7,
                Error::Ordering(_) => 8,
                Error::Fetch(_) => 9,
            };
        }
        if cause.downcast_ref::<std::io::Error>().is_some() {
            return 3;
        }
    }
    1
}

pub fn run(cli: Cli) -> Result<()> {
    if cli.jobs == 0 {
        return Err(Error::Parameter("--jobs must be at least 1".into()).into());
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cli.jobs)
        .build()
        .context("building the worker pool")?;
    let (seed, jobs) = (cli.seed, cli.jobs);
    pool.install(|| match cli.command {
        Command::Fetch {
            species,
            max,
            cache_dir,
            archive,
            manifest,
        } => fetch(&species, max, &cache_dir, archive.as_deref(), manifest.as_deref()),
        Command::Synth {
            out_dir,
            classes,
            clips,
            min_seconds,
            max_seconds,
            snr_db,
        } => synth(
            &out_dir,
            &SynthSpec {
                n_classes: classes,
                clips_per_class: clips,
                min_seconds,
                max_seconds,
                snr_db,
                seed,
                ..SynthSpec::default()
            },
        ),
        Command::Prepare { manifest, out_dir, prep } => prepare(&manifest, &out_dir, prep.options()),
        Command::Features {
            manifest,
            descriptor,
            features,
        } => {
            let (ds, skipped) = dataset(&manifest, features.feature_config(descriptor.into()), &features.prep)?;
            let frames: Vec<usize> = ds.samples.iter().map(|s| s.features.frames).collect();
            println!(
                "{} clips, {} skipped, {} classes, {} bands, {}..{} frames",
                ds.len(),
                skipped,
                ds.n_classes(),
                ds.bands(),
                frames.iter().min().unwrap_or(&0),
                frames.iter().max().unwrap_or(&0)
            );
            Ok(())
        }
        Command::Train {
            manifest,
            descriptor,
            folds,
            save_model,
            out_dir,
            features,
            model,
            train,
        } => {
            let fc = features.feature_config(descriptor.into());
            let (ds, _) = dataset(&manifest, fc.clone(), &features.prep)?;
            let config = model.config(ds.n_classes(), ds.bands());
            let tc = train.train_config(jobs);
            let (report, runs) = cross_validate_runs(&ds, &config, &tc, folds, seed)?;
            let first = &runs[0].model;
            println!("parameters: {}", first.param_count());
            for line in first.summary().lines().filter(|l| l.starts_with("warning")) {
                eprintln!("{line}");
            }
            print!("{}", report.table());
            if let Some(dir) = out_dir {
                fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
                let json = serde_json::to_string_pretty(&report)?;
                write_file(&dir.join("cv.json"), json.as_bytes())?;
                for f in &report.folds {
                    let path = dir.join(format!("fold-{}-confusion.csv", f.fold + 1));
                    let mut buf = Vec::new();
                    write_matrix_csv(&mut buf, &ds.labels, &f.test.confusion)?;
                    write_file(&path, &buf)?;
                }
            }
            if let Some(path) = save_model {
                // first fold with the highest test accuracy
                let best = runs
                    .iter()
                    .reduce(|a, b| if b.report.test_accuracy > a.report.test_accuracy { b } else { a })
                    .expect("at least one fold");
                let mut m = best.model.clone();
                m.preprocessing = Some(Preprocessing {
                    features: fc,
                    standardizer: best.standardizer.clone(),
                });
                save_weights(&m, &path)?;
                println!("saved fold {} model to {}", best.report.fold + 1, path.display());
            }
            Ok(())
        }
        Command::Gridsearch {
            manifest,
            descriptors,
            depths,
            grid_widths,
            activations,
            folds,
            checkpoint_dir,
            out,
            features,
            train,
        } => {
            let mut sets = Vec::new();
            for d in &descriptors {
                let kind: FeatureKind = (*d).into();
                sets.push((kind, dataset(&manifest, features.feature_config(kind), &features.prep)?.0));
            }
            let refs: Vec<(FeatureKind, &Dataset)> = sets.iter().map(|(k, d)| (*k, d)).collect();
            let spec = GridSpec {
                depths,
                widths: grid_widths,
                activations: activations.into_iter().map(Into::into).collect(),
                descriptors: descriptors.into_iter().map(Into::into).collect(),
            };
            if let Some(dir) = &checkpoint_dir {
                fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
            }
            let result = grid_search(&refs, &spec, &train.train_config(jobs), folds, seed, checkpoint_dir.as_deref())?;
            println!("descriptor  depth  width  activation  params     test_acc  std");
            for c in &result.cells {
                let k = &c.key;
                match &c.error {
                    None => println!(
                        "{:<10}  {:>5}  {:>5}  {:<10}  {:>8}  {:>9.2}  {:.2}",
                        k.descriptor.as_str(),
                        k.depth,
                        k.width,
                        k.activation.to_string(),
                        c.param_count,
                        100.0 * c.mean_test_accuracy,
                        100.0 * c.std_test_accuracy
                    ),
                    Some(e) => println!(
                        "{:<10}  {:>5}  {:>5}  {:<10}  failed: {e}",
                        k.descriptor.as_str(),
                        k.depth,
                        k.width,
                        k.activation.to_string()
                    ),
                }
            }
            match &result.best {
                Some(b) => println!(
                    "best: {} depth {} width {} {}",
                    b.descriptor.as_str(),
                    b.depth,
                    b.width,
                    b.activation
                ),
                None => println!("best: none (every cell failed)"),
            }
            log::info!("{} cells trained, {} from checkpoints", result.trained_cells, result.cells.len() - result.trained_cells);
            if let Some(path) = out {
                write_file(&path, serde_json::to_string_pretty(&result)?.as_bytes())?;
            }
            Ok(())
        }
        Command::Eval {
            model,
            manifest,
            confusion_csv,
            json,
            prep,
        } => {
            let model = load_weights(&model)?;
            let samples = test_samples(&model, &manifest, &prep)?;
            let refs: Vec<&Sample> = samples.iter().collect();
            let report = evaluate(&model, &refs)?;
            print!("{}", report.table());
            println!();
            let mut buf = Vec::new();
            write_matrix_csv(&mut buf, model.label_set(), &report.confusion)?;
            print!("{}", String::from_utf8_lossy(&buf));
            if let Some(path) = confusion_csv {
                write_file(&path, &buf)?;
            }
            if let Some(path) = json {
                write_file(&path, serde_json::to_string_pretty(&report)?.as_bytes())?;
            }
            Ok(())
        }
        Command::Durations {
            model,
            manifest,
            durations,
            prep,
        } => {
            let model = load_weights(&model)?;
            let samples = test_samples(&model, &manifest, &prep)?;
            let refs: Vec<&Sample> = samples.iter().collect();
            println!("seconds  frames  accuracy");
            for p in duration_study(&model, &refs, &durations)? {
                let acc = p.accuracy.map_or("-".to_string(), |a| format!("{:.2}", 100.0 * a));
                println!("{:>7}  {:>6}  {:>8}", p.seconds, p.frames, acc);
            }
            Ok(())
        }
        Command::Detect {
            model,
            input,
            manifest,
            chunk,
            hop,
            min_confidence,
            low_energy_db,
            no_merge,
            stream,
            timeline: as_timeline,
        } => {
            let model = load_weights(&model)?;
            let cp = ChunkParams {
                chunk_seconds: chunk,
                hop_seconds: hop,
                min_confidence,
                low_energy_db,
            };
            let det = Detector::new(&model, cp)?;
            if let Some(path) = manifest {
                return multispecies(&det, &model, &path);
            }
            let path = input.expect("clap requires --input or --manifest");
            let clip = decode_audio(&path)?;
            let mut events = if stream {
                let mut s = det.stream()?;
                let mut out = Vec::new();
                for block in clip.samples.chunks(clip.sample_rate as usize) {
                    out.extend(s.push(block)?);
                }
                out.extend(s.finish()?);
                out
            } else {
                det.detect(&clip)?
            };
            if !no_merge {
                events = merge_events(&events)?;
            }
            let stdout = std::io::stdout();
            let mut out = stdout.lock();
            if as_timeline {
                write!(out, "{}", timeline(&events))?;
            } else {
                write_events_jsonl(&mut out, &events)?;
            }
            Ok(())
        }
        Command::Gradcheck { fault_scale } => {
            let checks = gradcheck_suite(fault_scale.map(Fault::ScaleConvKernelGrad))?;
            println!("check          max_rel_error  checked  skipped");
            for c in &checks {
                println!("{:<13}  {:>13.3e}  {:>7}  {:>7}", c.name, c.max_rel_error, c.checked, c.skipped);
            }
            let worst = checks.iter().map(|c| c.max_rel_error).fold(0.0, f64::max);
            if worst > GRADCHECK_TOLERANCE {
                return Err(GradcheckFailed(worst).into());
            }
            println!("all checks within {GRADCHECK_TOLERANCE:e}");
            Ok(())
        }
    })
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| anyhow!(Error::Io { path: path.into(), source: e }))
}

fn fetch(species: &[String], max: usize, cache_dir: &Path, archive: Option<&Path>, manifest: Option<&Path>) -> Result<()> {
    let config = match archive {
        Some(p) => FetchConfig::load(p)?,
        None => FetchConfig::default(),
    };
    let mut fetcher = Fetcher::new(config, UreqClient::default(), SystemClock::default());
    let mut entries = Vec::new();
    for s in species {
        let outcome = fetcher.fetch(&FetchQuery {
            species: s.clone(),
            max_results: max,
            cache_dir: cache_dir.to_path_buf(),
        })?;
        println!(
            "{s}: {} recordings, {} downloaded, {} requests",
            outcome.recordings.len(),
            outcome.downloads,
            outcome.requests
        );
        for (path, species) in outcome.manifest_rows() {
            entries.push(ManifestEntry {
                path,
                species,
                duration_secs: 0.0,
            });
        }
    }
    if let Some(path) = manifest {
        let mut label_set: Vec<String> = entries.iter().map(|e| e.species.clone()).collect();
        label_set.sort();
        label_set.dedup();
        DatasetManifest { entries, label_set }.write(path)?;
    }
    Ok(())
}

fn synth(out_dir: &Path, spec: &SynthSpec) -> Result<()> {
    let clips = synth_dataset(spec);
    let mut entries = Vec::new();
    let mut label_set = Vec::new();
    for (clip, _) in &clips {
        let species = clip.species.clone().unwrap_or_default();
        if !label_set.contains(&species) {
            label_set.push(species.clone());
        }
        let rel = PathBuf::from(&species).join(format!("{}.wav", clip.source_id));
        let path = out_dir.join(&rel);
        fs::create_dir_all(path.parent().expect("joined path")).with_context(|| format!("creating {}", out_dir.display()))?;
        write_wav(&path, clip)?;
        entries.push(ManifestEntry {
            path: rel,
            species,
            duration_secs: clip.duration_secs(),
        });
    }
    let manifest = out_dir.join("manifest.csv");
    DatasetManifest { entries, label_set }.write(&manifest)?;
    println!("{} clips written; manifest {}", clips.len(), manifest.display());
    Ok(())
}

fn prepare(manifest_path: &Path, out_dir: &Path, prep: PrepOptions) -> Result<()> {
    let loaded = load_manifest(manifest_path)?;
    let m = &loaded.manifest;
    // unique output names, assigned in manifest order
    let mut seen: HashMap<PathBuf, usize> = HashMap::new();
    let targets: Vec<PathBuf> = m
        .entries
        .iter()
        .map(|e| {
            let stem = e.path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
            let base = PathBuf::from(&e.species).join(&stem);
            let n = seen.entry(base.clone()).or_insert(0);
            *n += 1;
            if *n == 1 {
                base.with_extension("wav")
            } else {
                PathBuf::from(&e.species).join(format!("{stem}-{n}.wav"))
            }
        })
        .collect();
    let results: Vec<Result<Option<ManifestEntry>>> = m
        .entries
        .par_iter()
        .zip(&targets)
        .map(|(e, rel)| {
            let src = resolve_entry(manifest_path, e);
            let clip = match decode_audio(&src).and_then(|c| prep.apply(&c)) {
                Ok(c) => c,
                Err(Error::EmptyResult(msg)) => {
                    log::warn!("skipping {}: {msg}", src.display());
                    return Ok(None);
                }
                Err(err) => return Err(anyhow!(err).context(src.display().to_string())),
            };
            let dst = out_dir.join(rel);
            fs::create_dir_all(dst.parent().expect("joined path")).with_context(|| format!("creating {}", out_dir.display()))?;
            write_wav(&dst, &clip)?;
            Ok(Some(ManifestEntry {
                path: rel.clone(),
                species: e.species.clone(),
                duration_secs: clip.duration_secs(),
            }))
        })
        .collect();
    let mut entries = Vec::new();
    for r in results {
        entries.extend(r?);
    }
    let skipped = m.entries.len() - entries.len();
    let out = out_dir.join("manifest.csv");
    DatasetManifest {
        entries,
        label_set: m.label_set.clone(),
    }
    .write(&out)?;
    println!(
        "{} clips prepared, {skipped} skipped, {} duplicate rows dropped; manifest {}",
        m.entries.len() - skipped,
        loaded.duplicates,
        out.display()
    );
    Ok(())
}

fn dataset(manifest: &Path, fc: FeatureConfig, prep: &PrepArgs) -> Result<(Dataset, usize)> {
    let loaded = load_manifest(manifest)?;
    let extractor = FeatureExtractor::new(fc)?;
    let cache = prep.cache_dir.as_ref().map(FeatureCache::new).transpose()?;
    let (ds, skipped) = build_dataset(manifest, &loaded.manifest, &extractor, cache.as_ref(), prep.options())?;
    if ds.is_empty() {
        return Err(Error::EmptyResult(format!("no usable clips in {}", manifest.display())).into());
    }
    Ok((ds, skipped.len()))
}

/// Manifest clips featurized and standardized as the model expects, with
/// labels in the model's class order.
fn test_samples(model: &FcnModel, manifest: &Path, prep: &PrepArgs) -> Result<Vec<Sample>> {
    let pre = model
        .preprocessing
        .as_ref()
        .ok_or_else(|| Error::Config("the model file carries no preprocessing settings".into()))?;
    let (ds, _) = dataset(manifest, pre.features.clone(), prep)?;
    ds.samples
        .iter()
        .map(|s| {
            let name = &ds.labels[s.label];
            let label = model_label(model, name)?;
            let features = match &pre.standardizer {
                Some(st) => st.apply(&s.features)?,
                None => s.features.clone(),
            };
            Ok(Sample {
                id: s.id.clone(),
                label,
                features,
            })
        })
        .collect()
}

fn model_label(model: &FcnModel, name: &str) -> Result<usize> {
    model
        .label_set()
        .iter()
        .position(|l| l == name)
        .ok_or_else(|| anyhow!(Error::Validation(format!("species '{name}' is not one of the model's classes"))))
}

fn multispecies(det: &Detector, model: &FcnModel, manifest: &Path) -> Result<()> {
    let loaded = load_manifest(manifest)?;
    let clips: Vec<(AudioClip, usize)> = loaded
        .manifest
        .entries
        .par_iter()
        .map(|e| {
            let clip = decode_audio(&resolve_entry(manifest, e))?;
            Ok((clip, model_label(model, &e.species)?))
        })
        .collect::<Result<_>>()?;
    let r = det.multispecies_eval(&clips)?;
    println!("clips: {}", clips.len());
    println!("chunks: {}", r.chunks);
    println!("chunk accuracy: {:.2}", 100.0 * r.chunk_accuracy);
    println!("full-clip accuracy: {:.2}", 100.0 * r.full_clip_accuracy);
    println!("co-occurrence (rows: primary label, columns: detected):");
    let mut buf = Vec::new();
    write_matrix_csv(&mut buf, &r.labels, &r.cooccurrence)?;
    print!("{}", String::from_utf8_lossy(&buf));
    Ok(())
}
