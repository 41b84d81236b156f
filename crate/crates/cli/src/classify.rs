use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use anyhow::Context;
use clap::Args;
use serde_json::json;
use voxbench::curation::{read_bids, select_subjects, Modality};
use voxbench::evaluation::{
    hyperparameters_tsv, nested_cv, predictions_tsv, repeats_tsv, summary_tsv, EvaluationReport,
    KernelFamily, KernelInputs,
};
use voxbench::features::FeatureMatrix;
use voxbench::kernels::{build_voxel_graph, diffuse, linear_gram, RegularizationParams};
use voxbench::svm::{weight_vector, Class};
use voxbench::volume::{read_volume_file, unflatten, write_volume};

use crate::config::{task_slug, KernelKind, RunConfig, RunFlags};
use crate::provenance::{file_digest, Provenance};
use crate::store::{features_dir, read_store, FEATURES_FILE, INDEX_FILE, MASK_FILE};
use crate::{put, usage};

#[derive(Debug, Clone, Args)]
pub struct ClassifyArgs {
    /// TOML run configuration.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub folds: Option<usize>,
    #[arg(long)]
    pub inner_folds: Option<usize>,
    #[arg(long)]
    pub repeats: Option<usize>,
    /// Derivatives root; overrides the config.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug)]
pub struct ClassifyOutput {
    /// Directory holding the reports.
    pub dir: PathBuf,
    pub report: EvaluationReport,
}

pub fn cmd_classify(args: &ClassifyArgs) -> anyhow::Result<ClassifyOutput> {
    let flags = RunFlags {
        seed: args.seed,
        folds: args.folds,
        inner_folds: args.inner_folds,
        repeats: args.repeats,
        out: args.out.clone(),
    };
    let cfg = RunConfig::load(args.config.as_deref(), &flags)?;
    run_classification(&cfg)
}

/// Features of one modality at every diffusion time, with the kernels.
struct Family {
    modality: Modality,
    features: Vec<FeatureMatrix>,
    kernels: KernelFamily,
}

fn beta_tag(beta: f64) -> String {
    format!("{beta}").replace('.', "p")
}

fn build_family(
    cfg: &RunConfig,
    modality: Modality,
    features: FeatureMatrix,
    prov: &mut Provenance,
) -> anyhow::Result<Family> {
    match cfg.kernel {
        KernelKind::Linear => {
            let k = linear_gram(&features);
            Ok(Family {
                modality,
                features: vec![features],
                kernels: KernelFamily::fixed(k),
            })
        }
        KernelKind::Regularized => {
            if cfg.tissue_maps.is_empty() {
                return Err(usage("the regularized kernel needs tissue_maps"));
            }
            let mut maps = Vec::new();
            for p in &cfg.tissue_maps {
                maps.push(read_volume_file(p).with_context(|| format!("tissue map {}", p.display()))?);
                prov.input(format!("tissue_map:{}", maps.len() - 1), p)?;
            }
            let graph = build_voxel_graph(features.mask(), &maps, cfg.sigma_tissue)?;
            let mut smoothed = Vec::new();
            let mut kernels = Vec::new();
            for &beta in &cfg.grid.beta_values {
                let params = match cfg.diffusion_tolerance {
                    Some(tol) => RegularizationParams::with_tolerance(beta, cfg.sigma_tissue, &graph, tol)?,
                    None => RegularizationParams::with_default_steps(beta, cfg.sigma_tissue, &graph)?,
                };
                let d = diffuse(&features, &graph, &params)?;
                kernels.push((beta, linear_gram(&d)));
                smoothed.push(d);
            }
            Ok(Family {
                modality,
                features: smoothed,
                kernels: KernelFamily::regularized(kernels),
            })
        }
    }
}

pub fn run_classification(cfg: &RunConfig) -> anyhow::Result<ClassifyOutput> {
    let required: BTreeSet<Modality> = cfg.modalities.iter().copied().collect();
    let manifest = read_bids(&cfg.bids)?;
    let (first, second) = select_subjects(
        &manifest,
        (&cfg.task.0.to_string(), &cfg.task.1.to_string()),
        &required,
    )?;
    if first.is_empty() || second.is_empty() {
        anyhow::bail!(
            "task {} vs {} has {} and {} participants with {}",
            cfg.task.0,
            cfg.task.1,
            first.len(),
            second.len(),
            cfg.image_type()
        );
    }
    let mut subjects: Vec<String> = first.iter().chain(&second).cloned().collect();
    subjects.sort();
    let labels: Vec<Class> = subjects
        .iter()
        .map(|s| if first.binary_search(s).is_ok() { Class::Positive } else { Class::Negative })
        .collect();

    let slug = task_slug(cfg.task);
    let classifier = cfg.classifier_name();
    let mut prov = Provenance::new("classify", cfg.to_json());
    prov.config_sources = cfg.sources.clone();
    prov.input("participants.tsv", &cfg.bids.join("participants.tsv"))?;

    let mut families = Vec::new();
    for &m in &cfg.modalities {
        let dir = features_dir(&cfg.derivatives, m);
        for f in [FEATURES_FILE, MASK_FILE, INDEX_FILE] {
            prov.input(format!("features/{}/{f}", m.as_str()), &dir.join(f))?;
        }
        let store = read_store(&dir)?;
        let fm = store
            .select(&subjects)
            .with_context(|| format!("{m} features do not cover the task participants"))?;
        families.push(build_family(cfg, m, fm, &mut prov)?);
    }

    let kernel_dir = cfg.derivatives.join("kernels");
    for fam in &families {
        for (beta, k) in fam.kernels.betas.iter().zip(&fam.kernels.kernels) {
            let name = match beta {
                Some(b) => format!("{slug}_{}_{}_beta-{}.kmat", fam.modality.as_str(), cfg.kernel.as_str(), beta_tag(*b)),
                None => format!("{slug}_{}_{}.kmat", fam.modality.as_str(), cfg.kernel.as_str()),
            };
            put(&kernel_dir.join(name), &k.to_bytes())?;
        }
    }

    let inputs = match families.as_slice() {
        [a] => KernelInputs::Single(a.kernels.clone()),
        [a, b] => KernelInputs::Combined(a.kernels.clone(), b.kernels.clone()),
        _ => unreachable!("one or two modalities"),
    };
    let report = nested_cv(&inputs, &labels, &cfg.grid, &cfg.cv)?;

    let dir = cfg.derivatives.join("classify").join(&slug).join(&classifier);
    let task_name = format!("{} vs {}", cfg.task.0, cfg.task.1);
    put(
        &dir.join("summary.tsv"),
        summary_tsv(&cfg.image_type(), &classifier, &task_name, &report.summary).as_bytes(),
    )?;
    put(&dir.join("predictions.tsv"), predictions_tsv(&report).as_bytes())?;
    put(&dir.join("hyperparameters.tsv"), hyperparameters_tsv(&report).as_bytes())?;
    put(&dir.join("repeats.tsv"), repeats_tsv(&report).as_bytes())?;

    for rep in &report.repeats {
        for fold in &rep.folds {
            let stem = format!("rep-{:02}_fold-{:02}", rep.repeat, fold.fold);
            put(&dir.join("models").join(format!("{stem}_model.json")), fold.model.to_json().as_bytes())?;
            if !cfg.weight_maps {
                continue;
            }
            let alpha = fold.selected.alpha.unwrap_or(1.0);
            for (i, fam) in families.iter().enumerate() {
                // feature space of each modality scales by the sqrt of its kernel share
                let scale = if i == 0 { alpha.sqrt() } else { (1.0 - alpha).sqrt() };
                let features = &fam.features[fold.selected.beta_index];
                let w: Vec<f64> = weight_vector(&fold.model, features)?
                    .into_iter()
                    .map(|v| v * scale)
                    .collect();
                let vol = unflatten(&w, features.mask())?;
                let name = if families.len() == 1 {
                    format!("{stem}_weights.nii")
                } else {
                    format!("{stem}_mod-{}_weights.nii", fam.modality.as_str())
                };
                put(&dir.join("weights").join(name), &write_volume(&vol)?)?;
            }
        }
    }

    prov.seeds = json!({
        "base_seed": cfg.cv.base_seed,
        "repeat_seeds": report.repeats.iter().map(|r| r.seed).collect::<Vec<_>>(),
    });
    prov.write(&dir)?;
    Ok(ClassifyOutput { dir, report })
}

/// Digest of every report file in a classify output directory, sorted by
/// relative path.
pub fn report_digests(dir: &Path) -> anyhow::Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).with_context(|| format!("listing {}", d.display()))? {
            let p = e?.path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let rel = p.strip_prefix(dir)?.display().to_string();
                out.push((rel, file_digest(&p)?));
            }
        }
    }
    out.sort();
    Ok(out)
}
