use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use voxbench_cli::classify::report_digests;
use voxbench_cli::phantom::{BIDS_DIR, BRAIN_MASK, REFERENCE_MASK};
use voxbench_cli::{
    cmd_classify, cmd_convert, cmd_extract, cmd_phantom, cmd_select, exit_code, ClassifyArgs,
    ConvertArgs, ExtractArgs, PhantomArgs, SelectArgs, EXIT_DATA, EXIT_USAGE,
};

const PHANTOM: &str = r#"
n_per_group = 10
dims = [10, 10, 10]
effect_corner = [4, 4, 4]
effect_size_voxels = [3, 3, 3]
effect_size = 2.0
modalities = ["T1", "FDG"]
informative = ["FDG"]
duplicate_t1 = true
seed = 5
"#;

fn write(path: &Path, text: &str) -> PathBuf {
    fs::create_dir_all(path.parent().unwrap()).unwrap();
    fs::write(path, text).unwrap();
    path.to_path_buf()
}

fn phantom(root: &Path) -> PathBuf {
    let out = root.join("phantom");
    let config = write(&root.join("phantom.toml"), PHANTOM);
    cmd_phantom(&PhantomArgs { config: Some(config), seed: None, out: out.clone() }).unwrap();
    out
}

fn convert_args(raw: &Path, out: &Path) -> ConvertArgs {
    ConvertArgs {
        raw: raw.to_path_buf(),
        clinical: raw.join("clinical.csv"),
        scans: raw.join("scans.csv"),
        horizon: 36,
        out: out.to_path_buf(),
    }
}

fn extract(ph: &Path, bids: &Path, modality: &str) {
    cmd_extract(&ExtractArgs {
        bids: bids.to_path_buf(),
        modality: modality.into(),
        brain_mask: ph.join(BRAIN_MASK),
        reference_mask: Some(ph.join(REFERENCE_MASK)),
        out: None,
    })
    .unwrap();
}

fn classify_config(root: &Path, name: &str, body: &str) -> PathBuf {
    let text = format!(
        "task = \"AD vs CN\"\nbids = \"phantom/bids\"\nc_values = [0.01, 1.0]\nalpha_values = [0.0, 0.5, 1.0]\nfolds = 3\ninner_folds = 3\nrepeats = 2\n{body}"
    );
    write(&root.join(name), &text)
}

fn classify(config: &Path) -> voxbench_cli::classify::ClassifyOutput {
    cmd_classify(&ClassifyArgs {
        config: Some(config.to_path_buf()),
        seed: None,
        folds: None,
        inner_folds: None,
        repeats: None,
        out: None,
    })
    .unwrap()
}

#[test]
fn phantom_to_reports() {
    let tmp = tempfile::tempdir().unwrap();
    let root = tmp.path();
    let ph = phantom(root);
    let bids = ph.join(BIDS_DIR);

    // convert from the raw tables reproduces the phantom's own tree
    let converted = root.join("converted");
    cmd_convert(&convert_args(&ph, &converted)).unwrap();
    let ours: Vec<_> = report_digests(&converted)
        .unwrap()
        .into_iter()
        .filter(|(p, _)| !p.starts_with("code"))
        .collect();
    assert_eq!(ours, report_digests(&bids).unwrap());
    let log = fs::read_to_string(converted.join("code/conversion_log.tsv")).unwrap();
    assert!(log.lines().any(|l| l.contains("\tT1\t") && l.ends_with("gradwarp+B1 preferred")), "{log}");

    let lists = root.join("lists");
    cmd_select(&SelectArgs {
        bids: bids.clone(),
        task: "AD vs CN".into(),
        modalities: vec!["T1".into(), "FDG".into()],
        out: lists.clone(),
    })
    .unwrap();
    assert_eq!(fs::read_to_string(lists.join("AD_vs_CN_AD.txt")).unwrap().lines().count(), 10);
    assert_eq!(
        fs::read_to_string(lists.join("AD_vs_CN_summary.tsv")).unwrap(),
        "group\tcount\nAD\t10\nCN\t10\n"
    );

    extract(&ph, &bids, "FDG");
    extract(&ph, &bids, "T1");
    // rerunning an extraction leaves identical files alone
    extract(&ph, &bids, "FDG");

    let cfg = classify_config(root, "mkl.toml", "modalities = [\"T1\", \"FDG\"]\n");
    let out = classify(&cfg);
    let summary = fs::read_to_string(out.dir.join("summary.tsv")).unwrap();
    let mut rows = summary.lines();
    assert!(rows.next().unwrap().starts_with("Image type\tClassifier\tTask\tAUC"));
    assert!(rows.next().unwrap().starts_with("T1+FDG\tmkl_linear_svm\tAD vs CN\t"));
    assert!(out.report.summary.mean.balanced_accuracy > 0.8);
    let files: Vec<String> = report_digests(&out.dir).unwrap().into_iter().map(|(p, _)| p).collect();
    for want in [
        "hyperparameters.tsv",
        "predictions.tsv",
        "provenance.json",
        "repeats.tsv",
        "models/rep-01_fold-02_model.json",
        "weights/rep-00_fold-00_mod-FDG_weights.nii",
        "weights/rep-00_fold-00_mod-T1_weights.nii",
    ] {
        assert!(files.iter().any(|f| f == want), "missing {want} in {files:?}");
    }
    let predictions = fs::read_to_string(out.dir.join("predictions.tsv")).unwrap();
    assert_eq!(predictions.lines().count(), 1 + 2 * 20);

    // identical rerun is accepted and changes nothing
    let before = report_digests(&out.dir).unwrap();
    classify(&cfg);
    assert_eq!(report_digests(&out.dir).unwrap(), before);

    let tissue = "[\"phantom/masks/tissue_gm.nii\", \"phantom/masks/tissue_wm.nii\", \"phantom/masks/tissue_csf.nii\"]";
    let cfg = classify_config(
        root,
        "reg.toml",
        &format!("kernel = \"regularized\"\nbeta_values = [0.0, 1.0]\ntissue_maps = {tissue}\n"),
    );
    let out = classify(&cfg);
    assert!(out.dir.ends_with("AD_vs_CN/regularized_svm"));
    let kernels = root.join("phantom/bids/derivatives/kernels");
    assert!(kernels.join("AD_vs_CN_FDG_regularized_beta-1.kmat").exists());
    assert!(kernels.join("AD_vs_CN_FDG_linear.kmat").exists());
}

#[test]
fn classify_flags_override_config() {
    let tmp = tempfile::tempdir().unwrap();
    let root = tmp.path();
    let ph = phantom(root);
    extract(&ph, &ph.join(BIDS_DIR), "FDG");
    let cfg = classify_config(root, "run.toml", "");
    let out = cmd_classify(&ClassifyArgs {
        config: Some(cfg),
        seed: Some(40),
        folds: None,
        inner_folds: None,
        repeats: Some(1),
        out: None,
    })
    .unwrap();
    assert_eq!(out.report.repeats.len(), 1);
    assert_eq!(out.report.repeats[0].seed, 40);
    let prov: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.dir.join("provenance.json")).unwrap()).unwrap();
    assert_eq!(prov["config_sources"]["seed"], "flag");
    assert_eq!(prov["config_sources"]["folds"], "file");
    assert_eq!(prov["config_sources"]["sigma_tissue"], "default");
    assert_eq!(prov["seeds"]["repeat_seeds"], serde_json::json!([40]));
}

#[test]
fn library_errors_map_to_exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let root = tmp.path();
    let ph = phantom(root);

    let clinical = fs::read_to_string(ph.join("clinical.csv")).unwrap();
    let header = clinical.lines().next().unwrap().to_string();
    let dropped = header.rsplit_once(',').unwrap().0.to_string();
    let broken = write(&root.join("broken.csv"), &clinical.replacen(&header, &dropped, 1));
    let mut args = convert_args(&ph, &root.join("out"));
    args.clinical = broken;
    let err = cmd_convert(&args).unwrap_err();
    assert_eq!(exit_code(&err), EXIT_DATA);

    let err = cmd_extract(&ExtractArgs {
        bids: ph.join(BIDS_DIR),
        modality: "FDG".into(),
        brain_mask: ph.join(BRAIN_MASK),
        reference_mask: None,
        out: None,
    })
    .unwrap_err();
    assert_eq!(exit_code(&err), EXIT_USAGE);

    let bad = write(&root.join("bad.toml"), "task = \"AD vs CN\"\nbids = \"x\"\nfolds = 1\n");
    let err = cmd_classify(&ClassifyArgs {
        config: Some(bad),
        seed: None,
        folds: None,
        inner_folds: None,
        repeats: None,
        out: None,
    })
    .unwrap_err();
    assert_eq!(exit_code(&err), EXIT_USAGE);

    // convert refuses to overwrite a tree built from different inputs
    let out = root.join("tree");
    cmd_convert(&convert_args(&ph, &out)).unwrap();
    let mut horizon = convert_args(&ph, &out);
    horizon.horizon = 12;
    assert!(cmd_convert(&horizon).is_err());
}

#[test]
fn binary_reports_errors_with_exit_codes() {
    let bin = env!("CARGO_BIN_EXE_voxbench");
    let tmp = tempfile::tempdir().unwrap();

    let out = Command::new(bin).args(["extract", "--bids", "x"]).output().unwrap();
    assert_eq!(out.status.code(), Some(EXIT_USAGE));

    let out = Command::new(bin)
        .args(["select", "--bids", "x", "--task", "AD vs CN", "--modalities", "PET", "--out"])
        .arg(tmp.path())
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(EXIT_USAGE));
    assert!(String::from_utf8_lossy(&out.stderr).contains("unknown modality"));

    let missing = tmp.path().join("missing");
    let out = Command::new(bin)
        .args(["convert", "--raw"])
        .arg(&missing)
        .arg("--clinical")
        .arg(missing.join("c.csv"))
        .arg("--scans")
        .arg(missing.join("s.csv"))
        .arg("--out")
        .arg(tmp.path().join("o"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(EXIT_DATA));
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error: reading"));

    let out = Command::new(bin)
        .args(["phantom", "--seed", "3", "--out"])
        .arg(tmp.path().join("ph"))
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(tmp.path().join("ph/bids/participants.tsv").exists());
}
