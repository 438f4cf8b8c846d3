use pixie::enhance::{SccParams, SccVariant};
use pixie::pipeline::complexity::conv_macs;
use pixie::pipeline::{count_flops, count_params, Pixie, PipelineConfig};
use pixie::restormer::MdtaParams;
use pixie::tensor::Conv2dParams;

fn cfg(c: usize, scc: SccVariant) -> PipelineConfig {
    PipelineConfig {
        base_channels: c,
        scc_variant: scc,
        ..Default::default()
    }
}

fn macs(p: &Conv2dParams, n: u64) -> u64 {
    conv_macs(1, p.out_channels(), p.in_channels(), p.groups, p.kernel_size(), 1, 1) * n
}

/// (projection MACs, core MACs) of an MDTA over `n` pixels, from its tensors.
fn mdta_macs(m: &MdtaParams, n: u64) -> (u64, u64) {
    let proj = [&m.q_pw, &m.q_dw, &m.k_pw, &m.k_dw, &m.v_pw, &m.v_dw, &m.out]
        .iter()
        .map(|p| macs(p, n))
        .sum();
    let (w, d) = (m.width() as u64, (m.width() / m.heads()) as u64);
    (proj, 2 * w * d * n)
}

/// MAC tally obtained by walking a materialized network.
fn walked(net: &Pixie, h: usize, w: usize) -> [(&'static str, u64); 9] {
    let n1 = (h * w) as u64;
    let p2 = (net.config().patch * net.config().patch) as u64;
    let (mut den, mut den_core, mut mrpe, mut modu, mut proj, mut core, mut ffn) = (0, 0, 0, 0, 0, 0, 0);
    for (s, level) in net.denoise.scales.iter().enumerate() {
        let n = n1 >> (2 * s);
        den += level.input_proj.as_ref().map_or(0, |p| macs(p, n));
        den += level.fuse.iter().flatten().map(|p| macs(p, n)).sum::<u64>();
        for b in &level.blocks {
            let (pr, co) = mdta_macs(&b.mdta, n);
            den += pr;
            den_core += co;
            let g = &b.gdfn;
            den += [&g.u1_pw, &g.u1_dw, &g.u2_pw, &g.u2_dw, &g.out].iter().map(|p| macs(p, n)).sum::<u64>();
        }
    }
    for (s, level) in net.levels.iter().enumerate() {
        let n = n1 >> (2 * s);
        mrpe += level.mrpe.branches.iter().map(|p| macs(p, n)).sum::<u64>() + macs(&level.mrpe.mix, n);
        for b in &level.blocks {
            let m = &b.modulation;
            modu += macs(&m.fc1, n / p2) + macs(&m.fc2, n / p2);
            modu += m.field.smoother.as_ref().map_or(0, |p| macs(p, n));
            let (convs, inner_n): (Vec<&Conv2dParams>, u64) = match &b.scc {
                SccParams::Full { compress, expand, .. } => (vec![compress, expand], n / p2),
                SccParams::ChannelOnly { compress, expand, .. } => (vec![compress, expand], n),
                SccParams::SpatialOnly { .. } => (vec![], n / p2),
                SccParams::None { .. } => (vec![], n),
            };
            proj += convs.iter().map(|p| macs(p, inner_n)).sum::<u64>();
            let (pr, co) = mdta_macs(b.scc.mdta(), inner_n);
            proj += pr;
            core += co;
            ffn += macs(&b.ffn.fc1, n) + macs(&b.ffn.fc2, n);
        }
    }
    [
        ("stem", macs(&net.stem, n1)),
        ("denoise", den),
        ("denoise_attn_core", den_core),
        ("mrpe", mrpe),
        ("modulation", modu),
        ("dppb_projections", proj),
        ("dppb_attn_core", core),
        ("ffn", ffn),
        ("fusion", macs(&net.fusion.conv1, n1) + macs(&net.fusion.conv2, n1)),
    ]
}

#[test]
fn closed_form_macs_match_walked_network() {
    for c in [8, 16] {
        for &scc in SccVariant::ALL {
            let mut cfg = cfg(c, scc);
            if scc == SccVariant::SpatialOnly {
                cfg.dppb_per_scale = 1;
                if c > 8 {
                    continue;
                }
            }
            let net = Pixie::init(&cfg).unwrap();
            let f = count_flops(&cfg, 128, 192).unwrap();
            for (stage, v) in walked(&net, 128, 192) {
                assert_eq!(f.get(stage), v, "{stage} at C={c} {scc}");
            }
        }
    }
}

#[test]
fn denoise_core_is_linear_in_pixels() {
    for c in [8, 32] {
        let cfg = cfg(c, SccVariant::Full);
        let small = count_flops(&cfg, 64, 64).unwrap().get("denoise_attn_core");
        let big = count_flops(&cfg, 128, 128).unwrap().get("denoise_attn_core");
        assert!(small > 0);
        assert_eq!(big, 4 * small);
    }
}

#[test]
fn compacted_core_ignores_width() {
    let at = |c| count_flops(&cfg(c, SccVariant::Full), 256, 256).unwrap();
    assert_eq!(at(8).get("dppb_attn_core"), at(16).get("dppb_attn_core"));
    assert_eq!(at(8).get("dppb_attn_core"), at(32).get("dppb_attn_core"));
    assert!(at(16).get("dppb_projections") > at(8).get("dppb_projections"));
    // without compaction the core grows with C
    let none = |c| count_flops(&cfg(c, SccVariant::None), 256, 256).unwrap().get("dppb_attn_core");
    assert!(none(16) > none(8));
}

#[test]
fn full_compaction_is_cheapest() {
    let total = |v| count_flops(&cfg(32, v), 256, 256).unwrap().total();
    let full = total(SccVariant::Full);
    for v in [SccVariant::None, SccVariant::ChannelOnly, SccVariant::SpatialOnly] {
        assert!(full < total(v), "{v}");
    }
}

#[test]
fn parameter_ordering() {
    let p = |v| count_params(&cfg(32, v)).unwrap().total();
    assert!(p(SccVariant::SpatialOnly) > p(SccVariant::Full));
    assert!(p(SccVariant::Full) > p(SccVariant::None));
    assert!(p(SccVariant::None) > p(SccVariant::ChannelOnly));
}
