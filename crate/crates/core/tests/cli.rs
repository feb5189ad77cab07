use std::path::Path;
use std::process::Command;

use idmc::autonet::{Checkpoint, CheckpointMode};
use idmc::clustering::Constellation;
use idmc::metrics::{DISTRIBUTION_HEADER, MARGINAL_HEADER, SWEEP_HEADER};

const CONFIG: &str = r#"
mode = "idmc_i"
order = 4
cbr = 0.125
image_height = 4
image_width = 4
hidden = [16]
train_size = 96
test_size = 24
batch_size = 16
epochs_analog = 2
epochs_finetune = 1
lr = 1e-3
cluster_sample_images = 30
snr_eval = [0, 10, "noiseless"]
"#;

fn idmc(dir: &Path, args: &[&str]) -> (i32, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_idmc"))
        .current_dir(dir)
        .env("RUST_LOG", "warn")
        .args(args)
        .output()
        .unwrap();
    (
        out.status.code().unwrap(),
        String::from_utf8_lossy(&out.stderr).into_owned(),
    )
}

fn read(dir: &Path, f: &str) -> String {
    std::fs::read_to_string(dir.join(f)).unwrap()
}

#[test]
fn phases_chain_through_files() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    std::fs::write(dir.join("exp.toml"), CONFIG).unwrap();
    let ok = |args: &[&str]| {
        let (code, err) = idmc(dir, args);
        assert_eq!(code, 0, "{args:?}: {err}");
    };
    ok(&["train-analog", "--config", "exp.toml", "--out", "a.ckpt"]);
    assert_eq!(
        Checkpoint::load(&dir.join("a.ckpt")).unwrap().mode(),
        CheckpointMode::Analog
    );
    assert!(read(dir, "a.losses.csv").starts_with("phase,epoch,loss\nanalog,init,"));

    ok(&[
        "fit-constellation",
        "--config",
        "exp.toml",
        "--checkpoint",
        "a.ckpt",
        "--out",
        "c.txt",
    ]);
    let c = Constellation::load(&dir.join("c.txt")).unwrap();
    assert_eq!(c.order(), 4);
    assert!(read(dir, "c.txt").starts_with("M=4\n0,"));

    ok(&[
        "finetune",
        "--config",
        "exp.toml",
        "--checkpoint",
        "a.ckpt",
        "--constellation",
        "c.txt",
        "--out",
        "f.ckpt",
    ]);
    assert_eq!(
        Checkpoint::load(&dir.join("f.ckpt")).unwrap().mode(),
        CheckpointMode::Irregular
    );

    ok(&[
        "evaluate",
        "--config",
        "exp.toml",
        "--checkpoint",
        "f.ckpt",
        "--constellation",
        "c.txt",
        "--out",
        "s.csv",
    ]);
    let sweep = read(dir, "s.csv");
    let rows: Vec<&str> = sweep.lines().collect();
    assert_eq!(rows[0], SWEEP_HEADER);
    assert_eq!(rows.len(), 4);
    assert!(rows[3].starts_with("inf,"));
    assert!(rows[1].ends_with(",idmc_i,4,0.125,1"));

    ok(&[
        "evaluate",
        "--config",
        "exp.toml",
        "--checkpoint",
        "f.ckpt",
        "--constellation",
        "c.txt",
        "--snr",
        "5",
        "--out",
        "one.csv",
    ]);
    assert_eq!(read(dir, "one.csv").lines().count(), 2);

    ok(&[
        "export-distribution",
        "--config",
        "exp.toml",
        "--checkpoint",
        "a.ckpt",
        "--bins",
        "9",
        "--out",
        "dist.csv",
    ]);
    let hist = read(dir, "dist.csv");
    assert!(hist.starts_with(DISTRIBUTION_HEADER));
    assert_eq!(hist.lines().count(), 1 + 81);
    let total: u64 = hist
        .lines()
        .skip(1)
        .map(|l| l.rsplit(',').next().unwrap().parse::<u64>().unwrap())
        .sum();
    assert_eq!(total, 30 * 2);
    assert!(read(dir, "dist_i.csv").starts_with(MARGINAL_HEADER));
    assert!(read(dir, "dist_q.csv").starts_with(MARGINAL_HEADER));
}

#[test]
fn overrides_and_baseline() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    std::fs::write(
        dir.join("exp.toml"),
        CONFIG.replace("idmc_i", "ste_baseline"),
    )
    .unwrap();
    let (code, err) = idmc(
        dir,
        &[
            "train-ste",
            "--config",
            "exp.toml",
            "--order",
            "16",
            "--seed",
            "5",
            "--out",
            "s.ckpt",
        ],
    );
    assert_eq!(code, 0, "{err}");
    let (code, err) = idmc(
        dir,
        &[
            "evaluate",
            "--config",
            "exp.toml",
            "--order",
            "16",
            "--seed",
            "5",
            "--checkpoint",
            "s.ckpt",
            "--out",
            "s.csv",
        ],
    );
    assert_eq!(code, 0, "{err}");
    assert!(read(dir, "s.csv")
        .lines()
        .nth(1)
        .unwrap()
        .ends_with(",ste_baseline,16,0.125,5"));
    let (code, _) = idmc(
        dir,
        &[
            "train-analog",
            "--config",
            "exp.toml",
            "--snr",
            "7",
            "--out",
            "a.ckpt",
        ],
    );
    assert_eq!(code, 0);
}

#[test]
fn configuration_errors_exit_with_2() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    std::fs::write(dir.join("bad.toml"), "mode = \"analog\"\nepochs = 3\n").unwrap();
    std::fs::write(dir.join("exp.toml"), CONFIG).unwrap();
    std::fs::write(dir.join("junk.ckpt"), b"not a checkpoint").unwrap();
    let cases: &[&[&str]] = &[
        &["train-analog", "--config", "bad.toml", "--out", "x"],
        &["train-analog", "--config", "missing.toml", "--out", "x"],
        &[
            "train-analog",
            "--config",
            "exp.toml",
            "--bogus",
            "--out",
            "x",
        ],
        &[
            "train-analog",
            "--config",
            "exp.toml",
            "--snr",
            "noiseless",
            "--out",
            "x",
        ],
        &[
            "evaluate",
            "--config",
            "exp.toml",
            "--checkpoint",
            "junk.ckpt",
            "--out",
            "x",
        ],
        &[
            "finetune",
            "--config",
            "exp.toml",
            "--checkpoint",
            "missing.ckpt",
            "--out",
            "x",
        ],
    ];
    for args in cases {
        let (code, _) = idmc(dir, args);
        assert_eq!(code, 2, "{args:?}");
    }
    let (code, _) = idmc(
        dir,
        &["train-analog", "--config", "exp.toml", "--out", "a.ckpt"],
    );
    assert_eq!(code, 0);
    let (code, err) = idmc(
        dir,
        &[
            "finetune",
            "--config",
            "exp.toml",
            "--checkpoint",
            "a.ckpt",
            "--out",
            "f.ckpt",
        ],
    );
    assert_eq!(code, 2, "{err}");
    assert!(!dir.join("f.ckpt").exists());
}
