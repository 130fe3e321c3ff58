use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use quanvbench::data::{self, Dataset, DatasetName};
use quanvbench::image::ImageTensor;
use quanvbench::quanv;

fn quanvbench(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_quanvbench"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

/// 12 images per class; class `c` lights up a horizontal band at row `2c`.
fn write_blocks(root: &Path) {
    let mut images = Vec::new();
    let mut labels = Vec::new();
    for i in 0..120u32 {
        let c = (i % 10) as usize;
        let px: Vec<f64> = (0..784)
            .map(|p| {
                let (r, col) = (p / 28, p % 28);
                let on = (r / 2 == c || r / 2 == c + 4) && (col + i as usize) % 5 != 0;
                if on { 1.0 } else { f64::from((p as u32 * 7 + i) % 40) / 255.0 }
            })
            .collect();
        images.push(ImageTensor::new(28, 28, 1, px).unwrap());
        labels.push(c as u8);
    }
    let ds = Dataset { name: DatasetName::Mnist, images, labels };
    let dir = root.join("mnist");
    fs::create_dir_all(&dir).unwrap();
    data::write_idx(&ds, &dir.join("train-images-idx3-ubyte"), &dir.join("train-labels-idx1-ubyte")).unwrap();
}

#[test]
fn verify_passes() {
    let out = quanvbench(&["verify"]);
    assert!(out.status.success(), "{}", stderr(&out));
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.lines().filter(|l| l.starts_with("PASS")).count() >= 9);
    assert!(!text.contains("FAIL"));
}

#[test]
fn missing_config_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("nope.cfg");
    let out = quanvbench(&["sweep", "--config", cfg.to_str().unwrap(), "--out", dir.path().join("o").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("nope.cfg"));
}

#[test]
fn unknown_config_key_is_named() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.cfg");
    fs::write(&cfg, "trials = 2\nepsilonz = 0, 1\n").unwrap();
    let out = quanvbench(&["sweep", "--config", cfg.to_str().unwrap(), "--out", dir.path().join("o").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("epsilonz"));
}

#[test]
fn bad_arguments_are_usage_errors() {
    let dir = tempfile::tempdir().unwrap();
    write_blocks(dir.path());
    let root = dir.path().to_str().unwrap();
    let out_file = dir.path().join("f.qnvf");
    let out_file = out_file.to_str().unwrap();

    let out = quanvbench(&["quanvolve", "--dataset-dir", root, "--ansatz", "zz_ring", "--out", out_file]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("zz_ring"));

    let out = quanvbench(&["quanvolve", "--dataset-dir", root, "--dataset", "fmnist", "--out", out_file]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("fmnist"));

    let out = quanvbench(&["quanvolve", "--dataset-dir", root, "--n-train", "200", "--out", out_file]);
    assert_eq!(out.status.code(), Some(2));

    let out = quanvbench(&["--threads", "0", "verify"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn quanvolve_writes_reproducible_cache() {
    let dir = tempfile::tempdir().unwrap();
    write_blocks(dir.path());
    let root = dir.path().to_str().unwrap();
    let a = dir.path().join("a.qnvf");
    let b = dir.path().join("b.qnvf");
    for path in [&a, &b] {
        let out = quanvbench(&["quanvolve", "--dataset-dir", root, "--ansatz", "zz_star", "--seed", "4", "--out", path.to_str().unwrap()]);
        assert!(out.status.success(), "{}", stderr(&out));
    }
    let (maps, _) = quanv::read_qnvf(&a).unwrap();
    assert_eq!(maps.len(), 80);
    assert!(maps.iter().all(|m| m.dims() == (14, 14, 4)));
    assert!(maps.iter().all(|m| m.data().iter().all(|v| (-1.0..=1.0).contains(v))));
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());

    let c = dir.path().join("c.qnvf");
    let out = quanvbench(&["quanvolve", "--dataset-dir", root, "--ansatz", "zz_star", "--seed", "5", "--out", c.to_str().unwrap()]);
    assert!(out.status.success());
    assert_ne!(fs::read(&a).unwrap(), fs::read(&c).unwrap());
}

#[test]
fn small_sweep_writes_all_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    write_blocks(dir.path());
    let cfg = dir.path().join("small.cfg");
    fs::write(
        &cfg,
        "# one trial, tiny grid\n\
         architectures = classical_cnn, qunn\n\
         ansatz_list = zz_full, random\n\
         attack_list = fgsm, pgd\n\
         epsilons = 0, 0.1, 2\n\
         trials = 1\n\
         n_train = 20\n\
         n_test = 10\n\
         train.epochs = 3\n\
         pgd.steps = 3\n",
    )
    .unwrap();
    let out_dir = dir.path().join("run");
    let run = |extra: &[&str]| {
        let mut args = vec![
            "--threads",
            "2",
            "sweep",
            "--config",
            cfg.to_str().unwrap(),
            "--dataset-dir",
            dir.path().to_str().unwrap(),
            "--out",
            out_dir.to_str().unwrap(),
        ];
        args.extend_from_slice(extra);
        quanvbench(&args)
    };
    let out = run(&[]);
    assert!(out.status.success(), "{}", stderr(&out));

    let manifest = fs::read_to_string(out_dir.join("manifest.txt")).unwrap();
    assert!(manifest.contains("status = ok"));
    assert!(manifest.contains("config_hash = "));
    assert!(manifest.contains("trials = 1"));

    let csv = fs::read_to_string(out_dir.join("results.csv")).unwrap();
    assert!(csv.starts_with("dataset,architecture,ansatz,attack,mode,epsilon,trial,accuracy\n"));
    // 3 cells x (fgsm 4 points + pgd 3 points) x 1 trial
    assert_eq!(csv.lines().count(), 1 + 3 * 7);
    assert!(csv.contains("mnist,classical_cnn,none,fgsm,surrogate,15,0,"));

    for attack in ["fgsm", "pgd"] {
        let svg = fs::read_to_string(out_dir.join(format!("mnist_{attack}.svg"))).unwrap();
        assert!(svg.starts_with("<svg"));
        assert_eq!(svg.matches("<polyline").count(), 3);
        for bar in svg.lines().filter(|l| l.contains(r#"class="errbar""#)) {
            let attr = |name: &str| {
                let start = bar.find(&format!(" {name}=\"")).unwrap() + name.len() + 3;
                bar[start..].split('"').next().unwrap().to_string()
            };
            assert_eq!(attr("y1"), attr("y2"), "single trial gives zero-length bars");
        }
    }

    let out = run(&["--no-cache"]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert_eq!(fs::read_to_string(out_dir.join("results.csv")).unwrap(), csv);
}
