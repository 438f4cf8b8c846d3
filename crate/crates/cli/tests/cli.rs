use std::path::Path;
use std::process::{Command, Output};

use pixie::pnm::encode_ppm;
use pixie::prompt::load_prompts;
use pixie::rng::SplitMix64;
use pixie::Tensor4;

fn pixie(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pixie")).args(args).output().unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = pixie(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn fails(args: &[&str]) -> String {
    let out = pixie(args);
    assert!(!out.status.success(), "{args:?} should fail");
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(err.starts_with("pixie-error: "), "{err}");
    assert_eq!(err.trim_end().lines().count(), 1, "{err}");
    err
}

fn write_image(path: &Path, seed: u64, h: usize, w: usize, offset: u8) {
    let mut rng = SplitMix64::new(seed);
    let img = Tensor4::from_fn([1, 3, h, w], |_, _, _, _| {
        (((rng.next_u64() % 100) as u8).saturating_add(offset)) as f32 / 255.0
    });
    std::fs::write(path, encode_ppm(&img).unwrap()).unwrap();
}

fn tsv(out: &str, metric: &str, stage: &str) -> u64 {
    out.lines()
        .map(|l| l.split('\t').collect::<Vec<_>>())
        .find(|f| f[0] == metric && f[1] == stage)
        .unwrap_or_else(|| panic!("no {metric}/{stage}"))[2]
        .parse()
        .unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn enhance_at_init_reproduces_input() {
    let dir = tempfile::tempdir().unwrap();
    let (input, output) = (dir.path().join("in.ppm"), dir.path().join("out.ppm"));
    write_image(&input, 1, 70, 90, 0);
    let cfg = dir.path().join("cfg.json");
    std::fs::write(&cfg, r#"{"base_channels": 8, "dppb_per_scale": 1, "token_dim": 16}"#).unwrap();
    let stdout = ok(&["enhance", "--input", s(&input), "--output", s(&output), "--config", s(&cfg), "--reference", s(&input)]);
    assert_eq!(std::fs::read(&input).unwrap(), std::fs::read(&output).unwrap());
    assert!(stdout.starts_with("PSNR inf dB, SSIM 1.000000"), "{stdout}");
}

#[test]
fn enhance_reports_mismatched_weights() {
    let dir = tempfile::tempdir().unwrap();
    let (input, output, w) = (dir.path().join("in.ppm"), dir.path().join("o.ppm"), dir.path().join("w.pixw"));
    write_image(&input, 1, 64, 64, 0);
    ok(&["init-weights", "--out", s(&w), "--base-channels", "8", "--seed", "1"]);
    let err = fails(&["enhance", "--input", s(&input), "--output", s(&output), "--weights", s(&w)]);
    assert!(err.contains("stem.weight"), "{err}");
}

#[test]
fn init_weights_is_deterministic_and_validated() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b, c) = (dir.path().join("a"), dir.path().join("b"), dir.path().join("c.json"));
    let table = ok(&["init-weights", "--out", s(&a), "--seed", "5", "--base-channels", "8", "--config-out", s(&c)]);
    ok(&["init-weights", "--out", s(&b), "--seed", "5", "--base-channels", "8"]);
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    let total = tsv(&table, "params", "total");
    // header (12 bytes) plus four bytes per parameter, plus per-tensor records
    assert!(std::fs::metadata(&a).unwrap().len() > 12 + 4 * total);
    assert!(std::fs::read_to_string(&c).unwrap().contains("\"base_channels\": 8"));
    let err = fails(&["init-weights", "--out", s(&a), "--base-channels", "12"]);
    assert!(err.contains("multiple of 8"), "{err}");
}

#[test]
fn init_weights_orders_variants() {
    let dir = tempfile::tempdir().unwrap();
    let p = |v: &str| {
        let out = dir.path().join(v);
        tsv(&ok(&["init-weights", "--out", s(&out), "--scc-variant", v, "--base-channels", "32"]), "params", "total")
    };
    assert!(p("full") > p("channel_only"));
}

#[test]
fn analyze_complexity_claims() {
    let at = |args: &[&str]| ok(&[&["analyze"], args].concat());
    let small = at(&["--height", "128", "--width", "128"]);
    let big = at(&["--height", "256", "--width", "256"]);
    assert_eq!(tsv(&big, "macs", "denoise_attn_core"), 4 * tsv(&small, "macs", "denoise_attn_core"));
    let c8 = at(&["--base-channels", "8"]);
    let c16 = at(&["--base-channels", "16"]);
    assert_eq!(tsv(&c8, "macs", "dppb_attn_core"), tsv(&c16, "macs", "dppb_attn_core"));
    let total = |v: &str| tsv(&at(&["--scc-variant", v]), "macs", "total");
    let full = total("full");
    for v in ["none", "channel_only", "spatial_only"] {
        assert!(full < total(v), "{v}");
    }
    fails(&["analyze", "--height", "100"]);
}

#[test]
fn ablation_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let prefix = dir.path().join("abl");
    let ratio = |strategy: &str, seed: &str| -> f64 {
        let out = ok(&["ablate-modulation", "--strategy", strategy, "--seed", seed, "--out-prefix", s(&prefix)]);
        out.trim().split('\t').nth(1).unwrap().parse().unwrap()
    };
    for seed in ["0", "1", "2"] {
        assert!(ratio("patchwise", seed) >= ratio("continuous", seed));
    }
    assert_eq!(ratio("global", "4"), 1.0);
    let pgm = dir.path().join("abl_continuous.pgm");
    let first = std::fs::read(&pgm).unwrap();
    ratio("continuous", "2");
    assert_eq!(std::fs::read(&pgm).unwrap(), first);
    assert!(first.starts_with(b"P5\n128 128\n255\n"));
}

#[test]
fn compare_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b, c) = (dir.path().join("a.ppm"), dir.path().join("b.ppm"), dir.path().join("c.ppm"));
    write_image(&a, 3, 16, 16, 0);
    write_image(&b, 3, 16, 16, 51);
    write_image(&c, 3, 16, 8, 0);
    assert!(ok(&["compare", "--a", s(&a), "--b", s(&a)]).starts_with("PSNR inf dB, SSIM 1.000000"));
    // 51/255 = 0.2, so PSNR is 20 log10(5)
    assert!(ok(&["compare", "--a", s(&a), "--b", s(&b)]).starts_with("PSNR 13.9794 dB"));
    fails(&["compare", "--a", s(&a), "--b", s(&c)]);
}

#[test]
fn synth_prompt_files() {
    let dir = tempfile::tempdir().unwrap();
    let (img, p1, p2) = (dir.path().join("i.ppm"), dir.path().join("1.pixt"), dir.path().join("2.pixt"));
    write_image(&img, 4, 256, 256, 0);
    ok(&["synth-prompts", "--input", s(&img), "--seed", "9", "--out", s(&p1)]);
    ok(&["synth-prompts", "--input", s(&img), "--seed", "9", "--out", s(&p2)]);
    assert_eq!(std::fs::read(&p1).unwrap(), std::fs::read(&p2).unwrap());
    let g = load_prompts(&p1).unwrap().grid_shape();
    assert_eq!((g.height, g.width), (16, 16));
    write_image(&img, 4, 250, 256, 0);
    let err = fails(&["synth-prompts", "--input", s(&img), "--out", s(&p1)]);
    assert!(err.contains("pad"), "{err}");
}

#[test]
fn bad_thread_override() {
    let out = Command::new(env!("CARGO_BIN_EXE_pixie"))
        .args(["analyze"])
        .env("PIXIE_THREADS", "zero")
        .output()
        .unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("PIXIE_THREADS"));
}
