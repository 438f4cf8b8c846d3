use pixie::enhance::{ModulationStrategy, SccVariant, UpsampleMode};
use pixie::pipeline::{
    count_flops, count_params, init_weights, load_weights, param_layout, pipeline_forward, save_weights, Pixie,
    PipelineConfig,
};
use pixie::prompt::{synth_prompts, SyntheticPromptConfig};
use pixie::rng::SplitMix64;
use pixie::{PixieError, Tensor4};

fn small(c: usize, strategy: ModulationStrategy, scc: SccVariant) -> PipelineConfig {
    PipelineConfig {
        base_channels: c,
        dppb_per_scale: 1,
        layers: vec![2, 5],
        token_dim: 8,
        strategy,
        scc_variant: scc,
        seed: 7,
        ..Default::default()
    }
}

fn image(seed: u64, h: usize, w: usize) -> Tensor4 {
    let mut rng = SplitMix64::new(seed);
    Tensor4::from_fn([1, 3, h, w], |_, _, _, _| rng.next_f64() as f32)
}

fn prompts_for(cfg: &PipelineConfig, img: &Tensor4) -> pixie::prompt::PromptSet {
    synth_prompts(
        img,
        &SyntheticPromptConfig {
            seed: 3,
            token_dim: cfg.token_dim,
            layers: cfg.layers.clone(),
        },
    )
    .unwrap()
}

#[test]
fn identity_at_init() {
    let img = image(1, 64, 128);
    for &strategy in ModulationStrategy::ALL {
        let cfg = small(8, strategy, SccVariant::Full);
        let out = pipeline_forward(&img, &init_weights(&cfg).unwrap(), &prompts_for(&cfg, &img), &cfg).unwrap();
        assert!(out.bit_eq(&img), "{strategy}");
    }
}

#[test]
fn residual_head_isolates_internal_changes() {
    let cfg = small(8, ModulationStrategy::Continuous, SccVariant::Full);
    let img = image(2, 64, 64);
    let prompts = prompts_for(&cfg, &img);
    let base = Pixie::init(&cfg).unwrap().forward_traced(&img, &prompts).unwrap();

    let mut store = init_weights(&cfg).unwrap();
    store.get_mut("denoise.s1.block1.mdta.q_pw.weight").unwrap().data[0] += 0.5;
    let net = Pixie::from_store(&cfg, store).unwrap();
    let moved = net.forward_traced(&img, &prompts).unwrap();
    assert!(!moved.denoised[0].bit_eq(&base.denoised[0]));
    assert!(moved.output.bit_eq(&img));

    // Once the residual head is live the change reaches the output.
    let mut store = init_weights(&cfg).unwrap();
    store.get_mut("fusion.conv2.weight").unwrap().data[13] = 0.25;
    let out = Pixie::from_store(&cfg, store).unwrap().forward(&img, &prompts).unwrap();
    assert!(!out.bit_eq(&img));
    assert!(out.is_finite());
}

#[test]
fn trace_shapes() {
    let cfg = small(16, ModulationStrategy::Patchwise, SccVariant::ChannelOnly);
    let img = image(3, 128, 64);
    let t = Pixie::init(&cfg).unwrap().forward_traced(&img, &prompts_for(&cfg, &img)).unwrap();
    let dims: Vec<_> = t.refined.iter().map(|f| f.shape().as_array()).collect();
    assert_eq!(dims, [[1, 16, 128, 64], [1, 32, 64, 32], [1, 64, 32, 16]]);
    assert_eq!(t.output.shape(), img.shape());
}

#[test]
fn input_validation() {
    let cfg = small(8, ModulationStrategy::Global, SccVariant::None);
    let net = Pixie::init(&cfg).unwrap();
    let img = image(4, 64, 64);
    let prompts = prompts_for(&cfg, &img);
    assert!(matches!(net.forward(&image(4, 64, 96), &prompts), Err(PixieError::Shape(_))));
    let other = prompts_for(&cfg, &image(4, 128, 64));
    assert!(net.forward(&img, &other).is_err());
    let mut wrong_layers = cfg.clone();
    wrong_layers.layers = vec![1, 5];
    assert!(net.forward(&img, &prompts_for(&wrong_layers, &img)).is_err());
}

#[test]
fn weights_must_match_config() {
    let cfg = small(8, ModulationStrategy::Continuous, SccVariant::Full);
    let store = init_weights(&cfg).unwrap();
    let wider = PipelineConfig {
        base_channels: 16,
        ..cfg.clone()
    };
    let err = Pixie::from_store(&wider, store.clone()).unwrap_err().to_string();
    assert!(err.contains("stem.weight"), "{err}");
    let patchwise = PipelineConfig {
        strategy: ModulationStrategy::Patchwise,
        ..cfg
    };
    let err = Pixie::from_store(&patchwise, store).unwrap_err().to_string();
    assert!(err.contains("smoother"), "{err}");
}

#[test]
fn init_is_seeded_and_saved_exactly() {
    let cfg = small(8, ModulationStrategy::Continuous, SccVariant::Full);
    let a = init_weights(&cfg).unwrap();
    assert!(a.bit_eq(&init_weights(&cfg).unwrap()));
    let b = init_weights(&PipelineConfig { seed: 8, ..cfg }).unwrap();
    assert!(!a.bit_eq(&b));
    for t in a.iter().filter(|t| t.name.ends_with(".mlp.fc2.weight") || t.name.starts_with("fusion.conv2")) {
        assert!(t.data.iter().all(|&v| v == 0.0), "{}", t.name);
    }
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("w.pixw");
    save_weights(&a, &path).unwrap();
    assert!(load_weights(&path).unwrap().bit_eq(&a));
}

fn config_grid() -> Vec<PipelineConfig> {
    let mut out = Vec::new();
    for c in [8, 16, 32] {
        for &scc in SccVariant::ALL {
            for &strategy in ModulationStrategy::ALL {
                out.push(PipelineConfig {
                    base_channels: c,
                    scc_variant: scc,
                    strategy,
                    ..Default::default()
                });
            }
        }
    }
    out
}

#[test]
fn closed_form_params_match_layout() {
    for cfg in config_grid() {
        let layout = param_layout(&cfg).unwrap();
        let counts = count_params(&cfg).unwrap();
        assert_eq!(counts.total(), layout.numel() as u64, "{cfg:?}");
        let group = |f: &dyn Fn(&str) -> bool| -> u64 {
            layout.specs().iter().filter(|s| f(&s.name)).map(|s| s.numel() as u64).sum()
        };
        assert_eq!(counts.get("denoise"), group(&|n| n.starts_with("denoise.")));
        assert_eq!(counts.get("mrpe"), group(&|n| n.contains(".mrpe.")));
        assert_eq!(counts.get("modulation"), group(&|n| n.contains(".mod.")));
        assert_eq!(counts.get("dppb_attention"), group(&|n| n.contains(".scc.") || n.contains(".attn_norm.")));
        assert_eq!(counts.get("dppb_ffn"), group(&|n| n.contains(".ffn.") || n.contains(".ffn_norm.")));
    }
}

#[test]
fn materialized_store_matches_count() {
    for cfg in config_grid().into_iter().filter(|c| c.base_channels == 8 && c.scc_variant != SccVariant::SpatialOnly) {
        assert_eq!(init_weights(&cfg).unwrap().numel() as u64, count_params(&cfg).unwrap().total());
    }
}

#[test]
fn oversized_configs_are_refused() {
    let cfg = PipelineConfig {
        scc_variant: SccVariant::SpatialOnly,
        ..Default::default()
    };
    assert!(matches!(init_weights(&cfg), Err(PixieError::Config(_))));
    assert!(count_params(&cfg).unwrap().total() > 1 << 29);
}

#[test]
fn bicubic_config_runs() {
    let cfg = PipelineConfig {
        upsample: UpsampleMode::Bicubic,
        ..small(8, ModulationStrategy::Continuous, SccVariant::Full)
    };
    let img = image(5, 64, 64);
    assert!(Pixie::init(&cfg).unwrap().forward(&img, &prompts_for(&cfg, &img)).unwrap().bit_eq(&img));
}

#[test]
fn config_json_defaults() {
    let cfg: PipelineConfig = serde_json::from_str(r#"{"base_channels": 16, "scc_variant": "channel_only"}"#).unwrap();
    assert_eq!(cfg.base_channels, 16);
    assert_eq!(cfg.scc_variant, SccVariant::ChannelOnly);
    assert_eq!(cfg.dppb_per_scale, 4);
    assert!(serde_json::from_str::<PipelineConfig>(r#"{"channels": 16}"#).is_err());
}

#[test]
fn flop_stages_are_consistent() {
    let cfg = PipelineConfig::default();
    let f = count_flops(&cfg, 256, 256).unwrap();
    assert_eq!(f.get("stem"), 32 * 3 * 9 * 256 * 256);
    assert_eq!(f.total(), f.iter().map(|(_, v)| v).sum::<u64>());
}
