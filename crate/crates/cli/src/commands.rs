use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;

use vcodec::ablation::{centroid_ablation, voting_ablation};
use vcodec::annotation::read_annotations;
use vcodec::bench::bench_decode;
use vcodec::encode::{keycentroid_weights, read_field_dir};
use vcodec::loss::{combined_loss, heatmap_loss, keycentroid_loss, maskcentroid_loss, LossReport, LossWeights, Predictions};
use vcodec::metrics::evaluate;
use vcodec::synth::{generate_corpus, make_occlusion_suite, SynthConfig};
use vcodec::{decode as decode_fields, encode as encode_scene, Detections, SceneAnnotation, SkeletonSpec};

use crate::args::{DecodeArgs, EncodeArgs, SynthArgs};
use crate::manifest::RunManifest;
use crate::{render as draw, CliError};

type CliResult<T = ()> = Result<T, CliError>;

const FIELD_MARKER: &str = "heatmaps.vcf";

fn read_text(path: &Path) -> CliResult<String> {
    fs::read_to_string(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

fn read_scene(path: &Path, skeleton: &SkeletonSpec) -> CliResult<SceneAnnotation> {
    let text = read_text(path)?;
    read_annotations(&text, skeleton).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

fn write_text(path: &Path, text: &str) -> CliResult {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)?;
    }
    fs::write(path, text).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

fn to_json<T: Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("report serialization cannot fail") + "\n"
}

/// Writes to `output`, or stdout when absent. Returns whether a file was written.
fn emit(output: Option<&Path>, text: &str) -> CliResult<bool> {
    match output {
        Some(p) => write_text(p, text).map(|_| true),
        None => {
            print!("{text}");
            Ok(false)
        }
    }
}

fn is_manifest(p: &Path) -> bool {
    p.file_name()
        .and_then(|n| n.to_str())
        .is_some_and(|n| n == "manifest.json" || n.ends_with(".manifest.json"))
}

/// JSON files of a directory in name order, manifests excluded.
fn json_files(dir: &Path) -> CliResult<Vec<PathBuf>> {
    let mut out = Vec::new();
    for entry in fs::read_dir(dir)? {
        let p = entry?.path();
        if p.is_file() && p.extension().is_some_and(|e| e == "json") && !is_manifest(&p) {
            out.push(p);
        }
    }
    out.sort();
    Ok(out)
}

fn field_dirs(dir: &Path) -> CliResult<Vec<PathBuf>> {
    let mut out = Vec::new();
    for entry in fs::read_dir(dir)? {
        let p = entry?.path();
        if p.join(FIELD_MARKER).is_file() {
            out.push(p);
        }
    }
    out.sort();
    Ok(out)
}

fn stem(p: &Path) -> String {
    p.file_stem().unwrap_or_default().to_string_lossy().into_owned()
}

fn config_json<T: Serialize>(value: &T) -> serde_json::Value {
    serde_json::to_value(value).expect("config serialization cannot fail")
}

fn encode_one(scene: &SceneAnnotation, skeleton: &SkeletonSpec, cfg: &vcodec::EncodeConfig, dir: &Path) -> CliResult {
    let fields = encode_scene(scene, skeleton, cfg)?;
    for w in &fields.warnings {
        eprintln!("warning: {}: {w:?}", dir.display());
    }
    fields.write_dir(dir)?;
    Ok(())
}

pub fn synth(
    args: &SynthArgs,
    count: usize,
    occlusion_suite: bool,
    fields: Option<&Path>,
    encode: &EncodeArgs,
    output: &Path,
) -> CliResult {
    if count == 0 {
        return Err(CliError::Usage("--count must be at least 1".into()));
    }
    let cfg = args.config(encode.disk_radius);
    let enc = encode.config();
    enc.validate()?;
    let scenes = if occlusion_suite {
        make_occlusion_suite(&cfg, count)?
    } else {
        generate_corpus(&cfg, count)?
    };
    let skeleton = SkeletonSpec::coco();
    let names: Vec<String> = if count == 1 {
        vec![stem(output)]
    } else {
        (0..count).map(|i| format!("scene_{i:04}")).collect()
    };
    if count == 1 {
        write_text(output, &scenes[0].to_json())?;
    } else {
        fs::create_dir_all(output)?;
        for (scene, name) in scenes.iter().zip(&names) {
            write_text(&output.join(format!("{name}.json")), &scene.to_json())?;
        }
    }
    if let Some(dir) = fields {
        scenes
            .par_iter()
            .zip(&names)
            .map(|(scene, name)| {
                let target = if count == 1 { dir.to_path_buf() } else { dir.join(name) };
                encode_one(scene, &skeleton, &enc, &target)
            })
            .collect::<CliResult<Vec<_>>>()?;
    }
    let mut manifest = RunManifest::new(
        "synth",
        json!({ "synth": cfg, "encode": enc, "count": count, "occlusion_suite": occlusion_suite }),
    )
    .output(output)
    .seed(cfg.rng_seed);
    if let Some(dir) = fields {
        manifest = manifest.output(dir);
    }
    manifest.write_beside(output)?;
    Ok(())
}

pub fn encode(input: &Path, args: &EncodeArgs, output: &Path) -> CliResult {
    let cfg = args.config();
    cfg.validate()?;
    let skeleton = SkeletonSpec::coco();
    if input.is_dir() {
        let files = json_files(input)?;
        files
            .par_iter()
            .map(|f| encode_one(&read_scene(f, &skeleton)?, &skeleton, &cfg, &output.join(stem(f))))
            .collect::<CliResult<Vec<_>>>()?;
    } else {
        encode_one(&read_scene(input, &skeleton)?, &skeleton, &cfg, output)?;
    }
    RunManifest::new("encode", config_json(&cfg))
        .input(input)
        .output(output)
        .write_beside(output)?;
    Ok(())
}

fn decode_dir(dir: &Path, skeleton: &SkeletonSpec, cfg: &vcodec::DecodeConfig) -> CliResult<String> {
    let (h, k, m) = read_field_dir(dir).map_err(|e| CliError::Data(format!("{}: {e}", dir.display())))?;
    let instances =
        decode_fields(&h, &k, &m, skeleton, cfg).map_err(|e| CliError::Data(format!("{}: {e}", dir.display())))?;
    Ok(Detections {
        width: h.width(),
        height: h.height(),
        instances,
    }
    .to_json())
}

pub fn decode(input: &Path, args: &DecodeArgs, output: &Path) -> CliResult {
    let cfg = args.config();
    cfg.validate()?;
    let skeleton = SkeletonSpec::coco();
    if input.join(FIELD_MARKER).is_file() {
        write_text(output, &decode_dir(input, &skeleton, &cfg)?)?;
    } else if input.is_dir() {
        let dirs = field_dirs(input)?;
        let texts = dirs
            .par_iter()
            .map(|d| decode_dir(d, &skeleton, &cfg))
            .collect::<CliResult<Vec<_>>>()?;
        fs::create_dir_all(output)?;
        for (d, text) in dirs.iter().zip(texts) {
            write_text(&output.join(format!("{}.json", stem(d))), &text)?;
        }
    } else {
        return Err(CliError::Data(format!("{}: not a field directory", input.display())));
    }
    RunManifest::new("decode", config_json(&cfg))
        .input(input)
        .output(output)
        .write_beside(output)?;
    Ok(())
}

pub fn loss(
    pred: &Path,
    scene_path: &Path,
    target: Option<&Path>,
    weights: &[f64],
    args: &EncodeArgs,
    output: Option<&Path>,
) -> CliResult {
    let [wh, wk, wm] = weights else {
        return Err(CliError::Usage("--weights takes three values".into()));
    };
    let weights = LossWeights::new(*wh, *wk, *wm);
    weights.validate()?;
    let cfg = args.config();
    cfg.validate()?;
    let skeleton = SkeletonSpec::coco();
    let scene = read_scene(scene_path, &skeleton)?;
    let (ph, pk, pm) = read_field_dir(pred)?;
    let report = match target {
        None => combined_loss(
            Predictions {
                heatmaps: &ph,
                keycentroid: &pk,
                maskcentroid: &pm,
            },
            &scene,
            &skeleton,
            &cfg,
            weights,
        )?,
        Some(dir) => {
            let (th, tk, _) = read_field_dir(dir)?;
            if th.height() != scene.height || th.width() != scene.width {
                return Err(CliError::Data(format!(
                    "target fields are {}x{}, scene is {}x{}",
                    th.width(),
                    th.height(),
                    scene.width,
                    scene.height
                )));
            }
            let heatmap = if weights.heatmap > 0.0 { heatmap_loss(&ph, &th)? } else { 0.0 };
            let keycentroid = if weights.keycentroid > 0.0 {
                keycentroid_loss(&pk, &tk, &keycentroid_weights(&scene, &skeleton, &cfg)?)?
            } else {
                0.0
            };
            let maskcentroid = if weights.maskcentroid > 0.0 {
                maskcentroid_loss(&pm, &pm, &scene, &skeleton, &cfg)?
            } else {
                0.0
            };
            LossReport::from_terms(heatmap, keycentroid, maskcentroid, weights)
        }
    };
    if emit(output, &to_json(&report))? {
        let out = output.expect("file output");
        let mut m = RunManifest::new("loss", json!({ "encode": cfg, "weights": weights }))
            .input(pred)
            .input(scene_path)
            .output(out);
        if let Some(t) = target {
            m = m.input(t);
        }
        m.write_beside(out)?;
    }
    Ok(())
}

fn read_detections(path: &Path) -> CliResult<Detections> {
    Detections::from_json(&read_text(path)?).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

pub fn eval(detections: &Path, annotations: &Path, output: Option<&Path>, pr_csv: Option<&Path>) -> CliResult {
    let skeleton = SkeletonSpec::coco();
    let pairs: Vec<(PathBuf, PathBuf)> = if detections.is_dir() {
        if !annotations.is_dir() {
            return Err(CliError::Usage("a detections directory needs an annotations directory".into()));
        }
        json_files(detections)?
            .into_iter()
            .map(|d| {
                let a = annotations.join(format!("{}.json", stem(&d)));
                if a.is_file() {
                    Ok((d, a))
                } else {
                    Err(CliError::Data(format!("no annotations for {}", d.display())))
                }
            })
            .collect::<CliResult<_>>()?
    } else {
        vec![(detections.to_path_buf(), annotations.to_path_buf())]
    };
    let loaded = pairs
        .par_iter()
        .map(|(d, a)| {
            let det = read_detections(d)?;
            let gt = read_scene(a, &skeleton)?;
            if (det.width, det.height) != (gt.width, gt.height) {
                return Err(CliError::Data(format!(
                    "{}: detections canvas {}x{} does not match annotations {}x{}",
                    d.display(),
                    det.width,
                    det.height,
                    gt.width,
                    gt.height
                )));
            }
            Ok((det.instances, gt))
        })
        .collect::<CliResult<Vec<_>>>()?;
    let (dets, gts): (Vec<_>, Vec<_>) = loaded.into_iter().unzip();
    let result = evaluate(&dets, &gts, &skeleton)?;
    if let Some(path) = pr_csv {
        let mut csv = String::from("kind,threshold,recall,precision\n");
        for (kind, p) in &result.pr_points {
            let kind = serde_json::to_value(kind).expect("kind serializes");
            csv.push_str(&format!(
                "{},{},{},{}\n",
                kind.as_str().unwrap_or_default(),
                p.threshold,
                p.recall,
                p.precision
            ));
        }
        write_text(path, &csv)?;
    }
    if emit(output, &to_json(&result))? {
        let out = output.expect("file output");
        let mut m = RunManifest::new("eval", json!({}))
            .input(detections)
            .input(annotations)
            .output(out);
        if let Some(p) = pr_csv {
            m = m.output(p);
        }
        m.write_beside(out)?;
    }
    Ok(())
}

pub fn bench(scene: &SynthConfig, args: &DecodeArgs, runs: usize, csv: Option<&Path>, output: Option<&Path>) -> CliResult {
    let cfg = args.config();
    let report = bench_decode(scene, &cfg, runs)?;
    if let Some(path) = csv {
        let mut buf = Vec::new();
        report.write_csv(&mut buf)?;
        write_text(path, &String::from_utf8(buf).expect("csv is ascii"))?;
    }
    if emit(output, &to_json(&report))? {
        let out = output.expect("file output");
        let mut m = RunManifest::new("bench", json!({ "scene": scene, "decode": cfg, "runs": runs }))
            .output(out)
            .seed(scene.rng_seed);
        if let Some(p) = csv {
            m = m.output(p);
        }
        m.write_beside(out)?;
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct AblateArgs {
    pub scenes: usize,
    pub suite_scenes: usize,
    pub corpus_seed: u64,
    pub suite_seed: u64,
    pub noise_sigma: f64,
    pub noise_seed: u64,
}

pub fn ablate(args: AblateArgs, output: Option<&Path>) -> CliResult {
    if args.scenes == 0 || args.suite_scenes == 0 {
        return Err(CliError::Usage("--scenes and --suite-scenes must be at least 1".into()));
    }
    let corpus = SynthConfig::default().with_seed(args.corpus_seed);
    let suite = SynthConfig::default().with_seed(args.suite_seed);
    let voting = voting_ablation(&corpus, args.scenes, args.noise_sigma, args.noise_seed)?;
    let centroid = centroid_ablation(&suite, args.suite_scenes)?;
    let mut voting_json = config_json(&voting);
    voting_json["gap"] = json!(voting.gap());
    let mut centroid_json = config_json(&centroid);
    centroid_json["gap"] = json!(centroid.gap());
    let report = json!({ "voting": voting_json, "centroid": centroid_json });
    if emit(output, &to_json(&report))? {
        let out = output.expect("file output");
        RunManifest::new("ablate", json!({ "args": args, "corpus": corpus, "suite": suite }))
            .output(out)
            .seed(args.corpus_seed)
            .seed(args.suite_seed)
            .seed(args.noise_seed)
            .write_beside(out)?;
    }
    Ok(())
}

pub fn render(input: &Path, width: Option<usize>, height: Option<usize>, output: &Path) -> CliResult {
    let text = read_text(input)?;
    let value: serde_json::Value =
        serde_json::from_str(&text).map_err(|e| CliError::Data(format!("{}: {e}", input.display())))?;
    let skeleton = SkeletonSpec::coco();
    let overlay = if value.get("persons").is_some() {
        draw::Overlay::from_scene(&read_scene(input, &skeleton)?, &skeleton)
    } else if value.get("instances").is_some() {
        draw::Overlay::from_detections(&read_detections(input)?)
    } else {
        return Err(CliError::Data(format!(
            "{}: neither annotations nor detections",
            input.display()
        )));
    };
    let (w, h) = (width.unwrap_or(overlay.width), height.unwrap_or(overlay.height));
    if w == 0 || h == 0 {
        return Err(CliError::Usage("canvas must be at least 1x1".into()));
    }
    let png = draw::render_png(&overlay, w, h)?;
    if let Some(parent) = output.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)?;
    }
    fs::write(output, png)?;
    RunManifest::new("render", json!({ "width": w, "height": h }))
        .input(input)
        .output(output)
        .write_beside(output)?;
    Ok(())
}
