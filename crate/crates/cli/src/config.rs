//! TOML configuration with precedence flags > file > defaults.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::Deserialize;
use serde_json::{json, Value};
use voxbench::curation::{Modality, TaskLabel};
use voxbench::evaluation::{CvConfig, HyperGrid};
use voxbench::svm::TrainConfig;

use crate::{parse_modality, usage};

pub fn load_toml<T: DeserializeOwned>(path: &Path) -> anyhow::Result<T> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| usage(format!("cannot read config {}: {e}", path.display())))?;
    toml::from_str(&text).map_err(|e| usage(format!("config {}: {e}", path.display())))
}

/// Records where each resolved setting came from.
#[derive(Debug, Default)]
pub struct Sourced {
    map: BTreeMap<String, String>,
}

impl Sourced {
    pub fn pick<T>(&mut self, key: &str, flag: Option<T>, file: Option<T>, default: impl FnOnce() -> T) -> T {
        let (value, source) = match (flag, file) {
            (Some(v), _) => (v, "flag"),
            (None, Some(v)) => (v, "file"),
            (None, None) => (default(), "default"),
        };
        self.map.insert(key.to_string(), source.to_string());
        value
    }

    pub fn mark(&mut self, key: &str, source: &str) {
        self.map.insert(key.to_string(), source.to_string());
    }

    pub fn into_map(self) -> BTreeMap<String, String> {
        self.map
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KernelKind {
    Linear,
    Regularized,
}

impl KernelKind {
    pub fn as_str(self) -> &'static str {
        match self {
            KernelKind::Linear => "linear",
            KernelKind::Regularized => "regularized",
        }
    }
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunFile {
    pub task: Option<String>,
    pub bids: Option<PathBuf>,
    pub derivatives: Option<PathBuf>,
    pub modalities: Option<Vec<String>>,
    pub kernel: Option<String>,
    pub tissue_maps: Option<Vec<PathBuf>>,
    pub sigma_tissue: Option<f64>,
    pub diffusion_tolerance: Option<f64>,
    pub c_values: Option<Vec<f64>>,
    pub alpha_values: Option<Vec<f64>>,
    pub beta_values: Option<Vec<f64>>,
    pub folds: Option<usize>,
    pub inner_folds: Option<usize>,
    pub repeats: Option<usize>,
    pub seed: Option<u64>,
    pub kkt_tolerance: Option<f64>,
    pub max_passes: Option<usize>,
    pub weight_maps: Option<bool>,
}

/// Flag values that override the file.
#[derive(Debug, Clone, Default)]
pub struct RunFlags {
    pub seed: Option<u64>,
    pub folds: Option<usize>,
    pub inner_folds: Option<usize>,
    pub repeats: Option<usize>,
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub task: (TaskLabel, TaskLabel),
    pub bids: PathBuf,
    pub derivatives: PathBuf,
    pub modalities: Vec<Modality>,
    pub kernel: KernelKind,
    pub tissue_maps: Vec<PathBuf>,
    pub sigma_tissue: f64,
    pub diffusion_tolerance: Option<f64>,
    pub grid: HyperGrid,
    pub cv: CvConfig,
    pub weight_maps: bool,
    pub sources: BTreeMap<String, String>,
}

/// `"AD vs CN"` or `"AD_vs_CN"` into its two labels.
pub fn parse_task(s: &str) -> anyhow::Result<(TaskLabel, TaskLabel)> {
    let (a, b) = s
        .split_once(" vs ")
        .or_else(|| s.split_once("_vs_"))
        .ok_or_else(|| usage(format!("task {s:?} must look like \"AD vs CN\"")))?;
    let a: TaskLabel = a.parse().map_err(|e| usage(format!("{e}")))?;
    let b: TaskLabel = b.parse().map_err(|e| usage(format!("{e}")))?;
    if a == b {
        return Err(usage(format!("task {s:?} names the same label twice")));
    }
    Ok((a, b))
}

pub fn task_slug(task: (TaskLabel, TaskLabel)) -> String {
    format!("{}_vs_{}", task.0.ascii(), task.1.ascii())
}

fn resolve_path(base: Option<&Path>, p: PathBuf) -> PathBuf {
    match base {
        Some(dir) if p.is_relative() => dir.join(p),
        _ => p,
    }
}

impl RunConfig {
    /// Resolves settings from `file` (relative paths taken from `config_dir`)
    /// and `flags`.
    pub fn resolve(file: RunFile, config_dir: Option<&Path>, flags: &RunFlags) -> anyhow::Result<Self> {
        let mut src = Sourced::default();
        let defaults = CvConfig::default();
        let train_defaults = TrainConfig::default();
        let grid_defaults = HyperGrid::default();

        let task_text = file.task.ok_or_else(|| usage("config must set task"))?;
        src.mark("task", "file");
        let task = parse_task(&task_text)?;
        let bids = file.bids.ok_or_else(|| usage("config must set bids"))?;
        src.mark("bids", "file");
        let bids = resolve_path(config_dir, bids);
        let derivatives = src.pick(
            "derivatives",
            flags.out.clone(),
            file.derivatives.map(|p| resolve_path(config_dir, p)),
            || bids.join("derivatives"),
        );
        let names = src.pick("modalities", None, file.modalities, || vec!["FDG".to_string()]);
        let modalities = names.iter().map(|n| parse_modality(n)).collect::<anyhow::Result<Vec<_>>>()?;
        if modalities.is_empty() || modalities.len() > 2 {
            return Err(usage("modalities must list one or two modalities"));
        }
        if modalities.len() == 2 && modalities[0] == modalities[1] {
            return Err(usage("modalities must differ"));
        }
        let kernel = match src.pick("kernel", None, file.kernel, || "linear".to_string()).as_str() {
            "linear" => KernelKind::Linear,
            "regularized" => KernelKind::Regularized,
            other => return Err(usage(format!("unknown kernel {other:?} (linear or regularized)"))),
        };
        let tissue_maps: Vec<PathBuf> = src
            .pick("tissue_maps", None, file.tissue_maps, Vec::new)
            .into_iter()
            .map(|p| resolve_path(config_dir, p))
            .collect();
        let sigma_tissue = src.pick("sigma_tissue", None, file.sigma_tissue, || {
            voxbench::kernels::DEFAULT_SIGMA_TISSUE
        });
        let diffusion_tolerance = file.diffusion_tolerance;
        src.mark("diffusion_tolerance", if diffusion_tolerance.is_some() { "file" } else { "default" });
        let grid = HyperGrid::new(
            src.pick("c_values", None, file.c_values, || grid_defaults.c_values.clone()),
            src.pick("alpha_values", None, file.alpha_values, || grid_defaults.alpha_values.clone()),
            src.pick("beta_values", None, file.beta_values, || grid_defaults.beta_values.clone()),
        )
        .map_err(|e| usage(e.to_string()))?;
        let cv = CvConfig {
            n_outer: src.pick("folds", flags.folds, file.folds, || defaults.n_outer),
            n_inner: src.pick("inner_folds", flags.inner_folds, file.inner_folds, || defaults.n_inner),
            repeats: src.pick("repeats", flags.repeats, file.repeats, || defaults.repeats),
            base_seed: src.pick("seed", flags.seed, file.seed, || defaults.base_seed),
            train: TrainConfig {
                kkt_tolerance: src.pick("kkt_tolerance", None, file.kkt_tolerance, || {
                    train_defaults.kkt_tolerance
                }),
                max_passes: src.pick("max_passes", None, file.max_passes, || train_defaults.max_passes),
                ..train_defaults
            },
        };
        if cv.n_outer < 2 || cv.n_inner < 2 {
            return Err(usage("folds and inner_folds must be at least 2"));
        }
        if cv.repeats == 0 {
            return Err(usage("repeats must be positive"));
        }
        if !(cv.train.kkt_tolerance > 0.0) || cv.train.max_passes == 0 {
            return Err(usage("kkt_tolerance and max_passes must be positive"));
        }
        let weight_maps = src.pick("weight_maps", None, file.weight_maps, || true);
        Ok(RunConfig {
            task,
            bids,
            derivatives,
            modalities,
            kernel,
            tissue_maps,
            sigma_tissue,
            diffusion_tolerance,
            grid,
            cv,
            weight_maps,
            sources: src.into_map(),
        })
    }

    pub fn load(config: Option<&Path>, flags: &RunFlags) -> anyhow::Result<Self> {
        match config {
            Some(p) => {
                let file: RunFile = load_toml(p)?;
                let dir = p.parent().filter(|d| !d.as_os_str().is_empty());
                Self::resolve(file, dir, flags)
            }
            None => Self::resolve(RunFile::default(), None, flags),
        }
    }

    /// Snapshot of every resolved setting, for provenance.
    pub fn to_json(&self) -> Value {
        json!({
            "task": format!("{} vs {}", self.task.0, self.task.1),
            "bids": self.bids.display().to_string(),
            "modalities": self.modalities.iter().map(|m| m.as_str()).collect::<Vec<_>>(),
            "kernel": self.kernel.as_str(),
            "tissue_maps": self.tissue_maps.iter().map(|p| p.display().to_string()).collect::<Vec<_>>(),
            "sigma_tissue": self.sigma_tissue,
            "diffusion_tolerance": self.diffusion_tolerance,
            "c_values": self.grid.c_values,
            "alpha_values": self.grid.alpha_values,
            "beta_values": self.grid.beta_values,
            "folds": self.cv.n_outer,
            "inner_folds": self.cv.n_inner,
            "repeats": self.cv.repeats,
            "seed": self.cv.base_seed,
            "kkt_tolerance": self.cv.train.kkt_tolerance,
            "max_passes": self.cv.train.max_passes,
            "weight_maps": self.weight_maps,
        })
    }

    /// Directory name of the classifier, e.g. `linear_svm` or
    /// `mkl_regularized_svm`.
    pub fn classifier_name(&self) -> String {
        let prefix = if self.modalities.len() == 2 { "mkl_" } else { "" };
        format!("{prefix}{}_svm", self.kernel.as_str())
    }

    pub fn image_type(&self) -> String {
        self.modalities.iter().map(|m| m.as_str()).collect::<Vec<_>>().join("+")
    }
}
