//! End-to-end use of the public API: files in, blocks and backbones through,
//! gradients checked against the extended-precision reference.

use prism_core::config::{parse_config, read_config, render_config};
use prism_core::experiments::ring_descriptors;
use prism_core::grid::{make_map, occlude, rotate_exact, Fill};
use prism_core::io::{read_prfm, write_prfm};
use prism_core::numerics::reference::block_loss_differences;
use prism_core::numerics::FiniteDiffReport;
use prism_core::prism::{backbone_forward, prism_forward, PrismParams, PrismTape};
use prism_core::synth::smooth_image;
use prism_core::{BackboneConfig, BlockConfig, FeatureMap, PcfMode, PrismBlock};
use proptest::prelude::*;

#[test]
fn backbone_scores_survive_a_file_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let image = occlude(&smooth_image(32, 32, 3, 11).unwrap(), 1, 0, 4).unwrap();
    let path = dir.path().join("in.prfm");
    write_prfm(&path, &image).unwrap();
    let loaded = read_prfm(&path).unwrap();
    assert_eq!(loaded, image);

    let cfg = BackboneConfig::default();
    let a = backbone_forward(&image, &cfg, 5).unwrap();
    let b = backbone_forward(&loaded, &cfg, 5).unwrap();
    assert_eq!(a.len(), cfg.classes);
    assert_eq!(a, b);
    assert_ne!(a, backbone_forward(&image, &cfg, 6).unwrap());
}

#[test]
fn config_files_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let cfg =
        BackboneConfig { blocks: [2, 1, 3, 1], delta_r: 1.5, pcf: PcfMode::Median, ffn: true, ..Default::default() };
    let path = dir.path().join("model.cfg");
    std::fs::write(&path, render_config(&cfg)).unwrap();
    assert_eq!(read_config(&path).unwrap(), cfg);
    assert!(read_config(dir.path().join("missing.cfg")).is_err());
    assert!(parse_config("stages.blocks = 1,1\n").is_err());
}

#[test]
fn gradients_hold_on_masked_inputs() {
    for (seed, ffn, pcf) in [(0, false, PcfMode::Mean), (1, true, PcfMode::Median), (2, true, PcfMode::Off)] {
        let mut cfg = BlockConfig::new(5, 3, 2);
        cfg.ffn = ffn;
        cfg.pcf = pcf;
        let block = PrismBlock::from_params(cfg.clone(), PrismParams::uniform_all(&cfg, 0.5, seed)).unwrap();
        let x = occlude(&make_map(8, 6, 5, Fill::Seeded(seed + 10)).unwrap(), 0, 1, 2).unwrap();
        assert!(x.mask().iter().any(|&m| !m));
        let w = make_map(8, 6, 5, Fill::Seeded(seed + 20)).unwrap();

        let part = block.partition(&x);
        let mut tape = PrismTape::new();
        tape.forward_with_partition(&block, &x, part.clone()).unwrap();
        if let Some(hidden) = &tape.trace().unwrap().ffn_hidden {
            assert!(hidden.iter().all(|z| z.abs() > 1e-3));
        }
        let (dx, grads) = tape.backward(&block, &w).unwrap();

        let rings = block.rings_for(8, 6).unwrap();
        let (num_p, num_x) = block_loss_differences(&cfg, &rings, &part, &x, &block.params.to_flat(), w.values(), 1e-5);
        let ep = FiniteDiffReport::compare(&grads.to_flat(), &num_p, 1e-5).max_rel_error;
        let ex = FiniteDiffReport::compare(dx.values(), &num_x, 1e-5).max_rel_error;
        assert!(ep < 1e-5 && ex < 1e-5, "seed {seed}: params {ep:e}, input {ex:e}");
    }
}

#[test]
fn memoryless_ring_descriptors_ignore_quarter_turns() {
    let mut cfg = BlockConfig::new(4, 4, 4);
    cfg.pcf = PcfMode::Off;
    let mut block = PrismBlock::seeded(cfg, 9).unwrap();
    block.params.angular.decay_b = vec![40.0; 4];
    let image = smooth_image(15, 15, 4, 2).unwrap();
    let base = ring_descriptors(&block, &image).unwrap();
    for q in 1..4 {
        let turned = ring_descriptors(&block, &rotate_exact(&image, q).unwrap()).unwrap();
        let worst = base.iter().zip(&turned).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(worst <= 1e-10, "{q} quarter turns: {worst:e}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn blocks_preserve_shape_and_finiteness(h in 1usize..10, w in 1usize..10, c in 1usize..6, seed in any::<u64>()) {
        let block = PrismBlock::seeded(BlockConfig::new(c, 3, 2), seed).unwrap();
        let x: FeatureMap = make_map(h, w, c, Fill::Seeded(seed)).unwrap();
        let y = prism_forward(&x, &block).unwrap();
        prop_assert_eq!(y.shape(), (h, w, c));
        prop_assert!(y.values().iter().all(|v| v.is_finite()));
    }
}
