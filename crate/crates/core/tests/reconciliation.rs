use rsec::channel::generate_block;
use rsec::recon::{prepare_session, rsec_reconcile, run_session, sec_reconcile, LlrMode, SessionConfig};
use rsec::rotation::rotate_block;
use rsec::{Error, Protocol};

fn small(protocol: Protocol, snr: f64) -> SessionConfig {
    SessionConfig {
        n: 1 << 11,
        blocks: 12,
        calibration_samples: 1 << 16,
        grid_step: Some(0.4),
        keep_key: true,
        master_seed: 77,
        ..SessionConfig::new(protocol, snr)
    }
}

/// Bob's slice words for block `i`, computed without the reconciliation code.
fn bob_words(cfg: &SessionConfig, step: f64, i: usize) -> Vec<u8> {
    let block = cfg.generate_block(i).unwrap();
    let mut x = block.x.clone();
    let mut y = block.y.clone();
    if cfg.protocol == Protocol::Rsec {
        rotate_block(&mut x, &mut y, cfg.d, block.seed).unwrap();
    }
    let grid = rsec::SliceGrid::new(cfg.m, step).unwrap();
    y.iter().map(|&v| grid.interval_index(v) as u8).collect()
}

#[test]
fn passed_blocks_reproduce_bobs_words() {
    for protocol in Protocol::ALL {
        let cfg = small(protocol, 6.0);
        let session = prepare_session(&cfg).unwrap();
        let out = run_session(&session, true).unwrap();
        assert_eq!(out.residual_errors, 0);
        assert!(out.blocks_passed > 0, "{protocol}");
        let mut expected = Vec::new();
        for (i, t) in out.transcripts.iter().enumerate() {
            assert_eq!(t.block_seed, cfg.block_seed(i));
            assert_eq!(t.disclosed.len(), cfg.disclosed as usize);
            assert_eq!(t.passed, t.slices.iter().all(|s| s.passed));
            if t.passed {
                expected.extend(bob_words(&cfg, 0.4, i));
            }
        }
        assert_eq!(out.blocks_passed, out.transcripts.iter().filter(|t| t.passed).count());
        assert_eq!(out.corrected_key, expected, "{protocol}");
    }
}

#[test]
fn results_do_not_depend_on_thread_count() {
    let cfg = small(Protocol::Rsec, 3.0);
    let session = prepare_session(&cfg).unwrap();
    let run = |threads| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| run_session(&session, false).unwrap())
    };
    assert_eq!(run(1), run(3));
}

#[test]
fn soft_llrs_also_give_clean_keys() {
    let cfg = SessionConfig {
        llr_mode: LlrMode::Soft,
        ..small(Protocol::Sec, 4.0)
    };
    let out = run_session(&prepare_session(&cfg).unwrap(), false).unwrap();
    assert_eq!(out.residual_errors, 0);
    assert!(out.blocks_passed > 0);
}

#[test]
fn efficiency_is_bounded_by_quantization() {
    for protocol in Protocol::ALL {
        let out = run_session(&prepare_session(&small(protocol, 3.0)).unwrap(), false).unwrap();
        assert!(
            out.beta <= out.beta_s + 2.0 * out.beta_s_se,
            "{protocol}: {} vs {}",
            out.beta,
            out.beta_s
        );
        assert!((out.beta - out.beta_ledger).abs() < 1e-9);
        let expected = out.leaked_bits_per_block * out.blocks_attempted as u64;
        assert_eq!(out.disclosed_bits, expected);
    }
}

#[test]
fn caller_supplied_streams() {
    let cfg = small(Protocol::Sec, 3.0);
    let session = prepare_session(&cfg).unwrap();
    let blocks: Vec<_> = (0..cfg.blocks).map(|i| cfg.generate_block(i).unwrap()).collect();
    let a = sec_reconcile(&session, blocks.clone()).unwrap();
    assert_eq!(a, run_session(&session, false).unwrap());
    assert!(matches!(
        sec_reconcile(&session, blocks[..3].to_vec()),
        Err(Error::StreamExhausted(3))
    ));
    assert!(matches!(rsec_reconcile(&session, blocks), Err(Error::Config(_))));
    let short = generate_block(16, &session.params, 1).unwrap();
    assert!(sec_reconcile(&session, std::iter::repeat_n(short, cfg.blocks)).is_err());
}

#[test]
fn code_cache_is_reused() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = SessionConfig {
        code_cache: Some(dir.path().to_path_buf()),
        ..small(Protocol::Rsec, 3.0)
    };
    let first = run_session(&prepare_session(&cfg).unwrap(), false).unwrap();
    let files = std::fs::read_dir(dir.path()).unwrap().count();
    assert!(files > 0);
    let second = run_session(&prepare_session(&cfg).unwrap(), false).unwrap();
    assert_eq!(first, second);
    assert_eq!(files, std::fs::read_dir(dir.path()).unwrap().count());
}
