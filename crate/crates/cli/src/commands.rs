use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};
use pixie::enhance::{build_field_tensor, ModulationParams, MODULATION_SLICES};
use pixie::metrics::{compare as compare_images, seam_energy_ratio};
use pixie::params::{ParamLayout, ParamReader};
use pixie::pipeline::{count_flops, count_params, init_weights as init_store, load_weights, save_weights, Pixie, PipelineConfig};
use pixie::pnm::{read_image, read_ppm, write_pgm, write_ppm};
use pixie::prompt::{load_prompts, save_prompts, synth_prompts as synth, SyntheticPromptConfig, TOKEN_PATCH};
use pixie::rng::SplitMix64;
use pixie::tensor::{crop, reflect_pad};
use pixie::Tensor4;

use crate::{AblateArgs, AnalyzeArgs, CompareArgs, EnhanceArgs, InitArgs, SynthArgs};

/// Patch size of the modulation ablation and the token grid it draws.
const ABLATION_PATCH: usize = 16;
const ABLATION_GRID: [usize; 4] = [1, MODULATION_SLICES, 8, 8];

fn load_config(path: Option<&Path>) -> Result<PipelineConfig> {
    let cfg = match path {
        Some(p) => {
            let text = fs::read_to_string(p).with_context(|| format!("reading config {}", p.display()))?;
            serde_json::from_str(&text).with_context(|| format!("parsing config {}", p.display()))?
        }
        None => PipelineConfig::default(),
    };
    Ok(cfg)
}

fn prompt_config(cfg: &PipelineConfig, seed: u64) -> SyntheticPromptConfig {
    SyntheticPromptConfig {
        seed,
        token_dim: cfg.token_dim,
        layers: cfg.layers.clone(),
    }
}

pub fn enhance(a: EnhanceArgs) -> Result<()> {
    let cfg = load_config(a.config.as_deref())?;
    cfg.validate()?;
    let image = read_ppm(&a.input).with_context(|| format!("reading {}", a.input.display()))?;
    let (h, w) = (image.height(), image.width());
    let m = cfg.size_multiple();
    let padded = reflect_pad(&image, h.next_multiple_of(m) - h, w.next_multiple_of(m) - w);

    let store = match &a.weights {
        Some(p) => load_weights(p).with_context(|| format!("reading weights {}", p.display()))?,
        None => init_store(&cfg)?,
    };
    let net = Pixie::from_store(&cfg, store).context("weights do not fit the configuration")?;
    let prompts = match &a.prompts {
        Some(p) => load_prompts(p).with_context(|| format!("reading prompts {}", p.display()))?,
        None => synth(&padded, &prompt_config(&cfg, a.synth_seed))?,
    };

    let out = net.forward(&padded, &prompts)?;
    let mut out = crop(&out, h, w)?;
    if !out.is_finite() {
        bail!("enhanced image contains non-finite values");
    }
    out.data_mut().iter_mut().for_each(|v| *v = v.clamp(0.0, 1.0));
    write_ppm(&a.output, &out).with_context(|| format!("writing {}", a.output.display()))?;

    if let Some(r) = &a.reference {
        let reference = read_ppm(r).with_context(|| format!("reading {}", r.display()))?;
        let report = compare_images(&out, &reference)?;
        println!("PSNR {:.4} dB, SSIM {:.6}", report.psnr_db, report.ssim);
    }
    Ok(())
}

fn print_table(metric: &str, rows: &pixie::pipeline::Breakdown) {
    for (stage, v) in rows.iter() {
        println!("{metric}\t{stage}\t{v}");
    }
    println!("{metric}\ttotal\t{}", rows.total());
}

pub fn init_weights(a: InitArgs) -> Result<()> {
    let mut cfg = load_config(a.config.as_deref())?;
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    if let Some(c) = a.base_channels {
        cfg.base_channels = c;
    }
    if let Some(v) = a.scc_variant {
        cfg.scc_variant = v;
    }
    let store = init_store(&cfg)?;
    save_weights(&store, &a.out).with_context(|| format!("writing {}", a.out.display()))?;
    if let Some(p) = &a.config_out {
        fs::write(p, serde_json::to_string_pretty(&cfg)? + "\n").with_context(|| format!("writing {}", p.display()))?;
    }
    println!("metric\tstage\tvalue");
    print_table("params", &count_params(&cfg)?);
    Ok(())
}

pub fn analyze(a: AnalyzeArgs) -> Result<()> {
    let mut cfg = load_config(a.config.as_deref())?;
    if let Some(c) = a.base_channels {
        cfg.base_channels = c;
    }
    if let Some(v) = a.scc_variant {
        cfg.scc_variant = v;
    }
    let params = count_params(&cfg)?;
    let macs = count_flops(&cfg, a.height, a.width)?;
    println!("metric\tstage\tvalue");
    print_table("params", &params);
    print_table("macs", &macs);
    Ok(())
}

fn min_max_scaled(plane: &[f32], h: usize, w: usize) -> Result<Tensor4> {
    let (lo, hi) = plane.iter().fold((f32::INFINITY, f32::NEG_INFINITY), |(l, u), &v| (l.min(v), u.max(v)));
    let span = hi - lo;
    let data = plane
        .iter()
        .map(|&v| if span > 0.0 { (v - lo) / span } else { 0.0 })
        .collect();
    Ok(Tensor4::from_vec([1, 1, h, w], data)?)
}

pub fn ablate_modulation(a: AblateArgs) -> Result<()> {
    let mut rng = SplitMix64::new(a.seed);
    let grid = Tensor4::from_fn(ABLATION_GRID, |_, _, _, _| rng.uniform(1.0));
    let mut l = ParamLayout::new();
    ModulationParams::declare(&mut l, "ablate", 1, 1, a.strategy);
    let field_params = ModulationParams::read(
        &mut ParamReader::new(l.materialize(a.seed)),
        "ablate",
        1,
        1,
        a.strategy,
        a.upsample,
        ABLATION_PATCH,
    )?
    .field;
    let (h, w) = (ABLATION_GRID[2] * ABLATION_PATCH, ABLATION_GRID[3] * ABLATION_PATCH);
    let field = build_field_tensor(&grid, h, w, &field_params)?;
    let path = format!("{}_{}.pgm", a.out_prefix, a.strategy);
    write_pgm(&path, &min_max_scaled(field.plane(0, 0), h, w)?).with_context(|| format!("writing {path}"))?;
    println!("seam_energy_ratio\t{}", seam_energy_ratio(&field, ABLATION_PATCH)?);
    Ok(())
}

pub fn compare(a: CompareArgs) -> Result<()> {
    let x = read_image(&a.a).with_context(|| format!("reading {}", a.a.display()))?;
    let y = read_image(&a.b).with_context(|| format!("reading {}", a.b.display()))?;
    if x.shape() != y.shape() {
        bail!("images differ in size: {} is {}, {} is {}", a.a.display(), x.shape(), a.b.display(), y.shape());
    }
    let report = compare_images(&x, &y)?;
    println!("PSNR {:.4} dB, SSIM {:.6}", report.psnr_db, report.ssim);
    Ok(())
}

pub fn synth_prompts(a: SynthArgs) -> Result<()> {
    let cfg = load_config(a.config.as_deref())?;
    let image = read_image(&a.input).with_context(|| format!("reading {}", a.input.display()))?;
    if image.channels() != 3 {
        bail!("synthetic prompts need an RGB (P6) image");
    }
    if image.height() % TOKEN_PATCH != 0 || image.width() % TOKEN_PATCH != 0 {
        bail!(
            "image is {}x{}; pad it to a multiple of {TOKEN_PATCH} on both axes first (enhance pads automatically)",
            image.height(),
            image.width()
        );
    }
    let prompts = synth(&image, &prompt_config(&cfg, a.seed))?;
    save_prompts(&prompts, &a.out).with_context(|| format!("writing {}", a.out.display()))?;
    let g = prompts.grid_shape();
    println!("layers\t{:?}\ngrid\t{}x{}\ntoken_dim\t{}", prompts.layers(), g.height, g.width, g.channels);
    Ok(())
}
