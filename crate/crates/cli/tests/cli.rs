use std::path::Path;
use std::process::{Command, Output};

use compressnet::codec;
use compressnet::config::{ModelConfig, Variant};
use compressnet::data::synthetic_image;
use compressnet::train::{load_model, TrainConfig};
use tempfile::TempDir;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_compressnet"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("spawn compressnet")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn tiny_config(dir: &Path, variant: Variant) -> String {
    let cfg = TrainConfig { model: ModelConfig::desk(variant, 4), epochs: 1, batch: 2, ..TrainConfig::default() };
    let mut kv = cfg.to_key_values();
    kv.set("patch_size", "32");
    kv.set("num_patches", "2");
    let path = dir.join("tiny.cfg");
    std::fs::write(&path, kv.render()).unwrap();
    path.to_str().unwrap().to_string()
}

fn train_tiny(dir: &Path, variant: Variant, name: &str) -> String {
    let cfg = tiny_config(dir, variant);
    let ckpt = dir.join(name).to_str().unwrap().to_string();
    let o = run(&["train", "--config", &cfg, "--out", &ckpt, "--seed", "3"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).starts_with("epoch,d_loss,g_loss,mse,perceptual,sae,spn_aux,psnr,fid\n"));
    ckpt
}

fn write_images(dir: &Path, offset: usize, count: usize) {
    std::fs::create_dir_all(dir).unwrap();
    for i in 0..count {
        synthetic_image(i + offset, 32).save_png(dir.join(format!("img_{i}.png"))).unwrap();
    }
}

#[test]
fn usage_errors_exit_with_two() {
    assert_eq!(run(&[]).status.code(), Some(2));
    assert_eq!(run(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(run(&["compress", "--model", "m"]).status.code(), Some(2));
    assert_eq!(run(&["inspect", "a", "--bogus"]).status.code(), Some(2));
}

#[test]
fn runtime_errors_are_single_machine_readable_lines() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("m.ckpt");
    let o = run(&["train", "--set", "learning_rate=1", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    let err = stderr(&o);
    assert_eq!(err.lines().count(), 1, "{err}");
    assert!(err.starts_with("error: config: "), "{err}");

    let junk = dir.path().join("junk.cnet");
    std::fs::write(&junk, b"not a bitstream").unwrap();
    let o = run(&["inspect", junk.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).starts_with("error: corruption: "), "{}", stderr(&o));
}

#[test]
fn compress_decompress_match_library_calls() {
    let dir = TempDir::new().unwrap();
    let ckpt = train_tiny(dir.path(), Variant::Swwae, "swwae.ckpt");
    let png = dir.path().join("a.png");
    synthetic_image(5, 64).save_png(&png).unwrap();
    let cnet = dir.path().join("a.cnet");
    let o = run(&["compress", "--model", &ckpt, "--in", png.to_str().unwrap(), "--out", cnet.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let report = stdout(&o);
    for key in ["theoretical_bpp", "container_bpp", "side_channel_bpp"] {
        assert!(report.contains(key), "{report}");
    }

    let model = load_model(&ckpt).unwrap();
    let img = compressnet::ImageTensor::load_png(&png).unwrap();
    let (bs, _) = codec::compress(&img, &model, model.config()).unwrap();
    assert_eq!(std::fs::read(&cnet).unwrap(), bs.to_bytes());

    let out_png = dir.path().join("b.png");
    let o = run(&["decompress", "--model", &ckpt, "--in", cnet.to_str().unwrap(), "--out", out_png.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let lib_png = dir.path().join("lib.png");
    codec::decompress(&bs, &model).unwrap().save_png(&lib_png).unwrap();
    assert_eq!(std::fs::read(&out_png).unwrap(), std::fs::read(&lib_png).unwrap());

    let o = run(&["inspect", cnet.to_str().unwrap()]);
    assert!(o.status.success());
    let text = stdout(&o);
    for key in [
        "variant = swwae",
        "height = 64",
        "width = 64",
        "latent_channels = 4",
        "levels = 5",
        "theoretical_bpp",
        "container_bpp",
    ] {
        assert!(text.contains(key), "{text}");
    }
}

#[test]
fn training_is_deterministic_given_seed() {
    let dir = TempDir::new().unwrap();
    let a = train_tiny(dir.path(), Variant::SaeSpn, "a.ckpt");
    let b = train_tiny(dir.path(), Variant::SaeSpn, "b.ckpt");
    assert_eq!(std::fs::read(a).unwrap(), std::fs::read(b).unwrap());
}

#[test]
fn evaluate_and_compare_print_table_rows() {
    let dir = TempDir::new().unwrap();
    let refs = dir.path().join("ref");
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    write_images(&refs, 0, 3);
    write_images(&a, 0, 3);
    write_images(&b, 4, 3);
    let o = run(&["evaluate", "--ref", refs.to_str().unwrap(), "--test", b.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = stdout(&o);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "SSIM\tPSNR\tFSIM_c\tPLoss\tFID");
    assert_eq!(lines[1].split('\t').count(), 5);

    let cands = format!("same={},other={}", a.display(), b.display());
    let o = run(&["compare", "--ref", refs.to_str().unwrap(), "--candidates", &cands]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = stdout(&o);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 3);
    assert_eq!(lines[0], "candidate\tSSIM\tPSNR\tFSIM_c\tPLoss\tFID");
    assert!(lines[1].starts_with("same\t1.0000\tinf\t1.0000\t0.0000\t"), "{}", lines[1]);
    assert!(lines[2].starts_with("other\t"));

    let o = run(&["compare", "--ref", refs.to_str().unwrap(), "--candidates", "broken"]);
    assert_eq!(o.status.code(), Some(1));
}
