use std::collections::HashMap;

use leakprobe::aes::{aes128_encrypt, Block};
use leakprobe::ingest::{parse_vcd, resample_per_cycle};
use leakprobe::metrics::hamming_distance;
use leakprobe::BitVec;
use leakprobe::obfuscation::obfuscate_address;
use leakprobe::sim::{
    emit_vcd, epoch_keys, run_batch, run_logs, run_workload, synth_power, AccessKind, AesWorkload, BatchOptions,
    CycleLog, Machine, MicroOp, SimConfig, SimError, CLOCK_NAME,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn logged_run(cfg: &SimConfig, pt: &Block, key: &Block) -> (Machine, CycleLog) {
    let w = AesWorkload::default();
    let mut m = w.machine(cfg, None, pt, key).unwrap();
    let mut log = CycleLog::new(m.layout().clone());
    m.run(&w.program, &mut log, None).unwrap();
    (m, log)
}

#[test]
fn lockstep_param_decodes_to_baseline_every_cycle() {
    let mut r = rng(1);
    for _ in 0..3 {
        let (pt, key): (Block, Block) = (r.random(), r.random());
        let (_, base) = logged_run(&SimConfig::baseline(), &pt, &key);
        let (m, param) = logged_run(&SimConfig::param().with_eda_fix(false), &pt, &key);
        assert_eq!(base.cycles(), param.cycles());
        let decoded = param.decoded(m.keys().unwrap(), &m.config().affine, m.address_geometry());
        let plain = base.without_replacement_state();
        let w = base.layout.words_per_cycle();
        for c in 0..base.cycles() {
            assert_eq!(base.valid_bits(c), param.valid_bits(c), "valid bits at cycle {c}");
            assert_eq!(&plain[c * w..(c + 1) * w], &decoded[c * w..(c + 1) * w], "cycle {c}");
        }
    }
}

#[test]
fn param_log_differs_from_baseline() {
    let (pt, key) = ([3u8; 16], [7u8; 16]);
    let (_, base) = logged_run(&SimConfig::baseline(), &pt, &key);
    let (_, param) = logged_run(&SimConfig::param(), &pt, &key);
    let rf = base.layout.find("core/rf", "x9").unwrap();
    let c = base.cycles() - 1;
    assert_ne!(base.value(c, rf), param.value(c, rf));
}

#[test]
fn ciphertexts_match_reference_in_both_modes() {
    let mut r = rng(2);
    let key: Block = r.random();
    let pts: Vec<Block> = (0..64).map(|_| r.random()).collect();
    for cfg in [SimConfig::baseline(), SimConfig::param().with_rekey_interval(Some(10))] {
        let out = run_batch(&cfg.with_noise(0.0), &pts, &key, &BatchOptions::default()).unwrap();
        for (run, p) in out.runs.iter().zip(&pts) {
            assert_eq!(run.ciphertext, Some(aes128_encrypt(p, &key)));
        }
    }
}

#[test]
fn cycle_counts_equal_across_modes() {
    let mut r = rng(3);
    let w = AesWorkload::default();
    for _ in 0..10 {
        let (pt, key): (Block, Block) = (r.random(), r.random());
        let (_, a) = logged_run(&SimConfig::baseline(), &pt, &key);
        let (_, b) = logged_run(&SimConfig::param(), &pt, &key);
        assert_eq!(a.cycles(), w.cycles());
        assert_eq!(b.cycles(), w.cycles());
    }
}

#[test]
fn rekey_flush_preserves_decoded_state_and_writes_back() {
    let cfg = SimConfig::param();
    let w = AesWorkload::default();
    let (pt, key) = ([0x11u8; 16], [0x22u8; 16]);
    let mut m = w.machine(&cfg, None, &pt, &key).unwrap();
    let mut log = CycleLog::new(m.layout().clone());
    m.run(&w.program[..200], &mut log, None).unwrap();

    let addr = 0x3140;
    m.cache_access(addr, AccessKind::Store, 0xA5).unwrap();
    assert!(m.is_dirty(addr));
    assert_ne!(m.memory_byte(addr), 0xA5);

    let old = *m.keys().unwrap();
    let regs: Vec<u64> = (0..32).map(|r| m.register(r)).collect();
    let (row, valid) = m.state_row();
    let mut before = row.to_vec();
    m.layout().decode_row(&mut before, valid, &old, &cfg.affine, m.address_geometry());

    let new = m.rekey_flush().unwrap();
    assert_ne!(new.keys, old.keys);
    assert_eq!(new.epoch, old.epoch + 1);
    assert_eq!(m.memory_byte(addr), 0xA5);
    assert!(!m.is_cached(addr));
    assert_eq!((0..32).map(|r| m.register(r)).collect::<Vec<_>>(), regs);
    let (row, valid) = m.state_row();
    let mut after = row.to_vec();
    m.layout().decode_row(&mut after, valid, &new, &cfg.affine, m.address_geometry());
    assert_eq!(before, after);
    assert_eq!(m.read_bytes(addr, 1).unwrap(), vec![0xA5]);
}

#[test]
fn run_straddling_rekey_still_encrypts() {
    let cfg = SimConfig::param();
    let w = AesWorkload::default();
    let mut r = rng(4);
    let (pt, key): (Block, Block) = (r.random(), r.random());
    let mut m = w.machine(&cfg, None, &pt, &key).unwrap();
    let mut log = CycleLog::new(m.layout().clone());
    let split = w.sbox_load_index(4, 0);
    m.run(&w.program[..split], &mut log, None).unwrap();
    m.rekey_flush().unwrap();
    m.run(&w.program[split..], &mut log, None).unwrap();
    assert_eq!(w.ciphertext(&m).unwrap(), aes128_encrypt(&pt, &key));
}

#[test]
fn rekey_in_baseline_is_an_error() {
    let mut m = Machine::new(&SimConfig::baseline()).unwrap();
    assert!(matches!(m.rekey_flush(), Err(SimError::RekeyInBaseline)));
}

#[test]
fn miss_then_hit() {
    for cfg in [SimConfig::baseline(), SimConfig::param()] {
        let mut m = Machine::new(&cfg).unwrap();
        assert!(!m.cache_access(0x1234, AccessKind::Load, 0).unwrap().hit);
        assert!(m.cache_access(0x1234, AccessKind::Load, 0).unwrap().hit);
        assert!(m.cache_access(0x1200, AccessKind::Load, 0).unwrap().hit);
    }
}

#[test]
fn set_placement_follows_address_obfuscation() {
    let base = Machine::new(&SimConfig::baseline()).unwrap();
    let (a, b) = (0x0000_1040u64, 0x0010_1040u64);
    assert_eq!(base.placement(a).0, base.placement(b).0);
    assert_eq!(base.placement(a).0, (a >> 6) as usize % 64);

    let cfg = SimConfig::param();
    let mut m = Machine::new(&cfg).unwrap();
    let keys = *m.keys().unwrap();
    for addr in [a, b, 0x2F00, 0x3FFF_FFC0] {
        let obf = obfuscate_address(addr, m.address_geometry(), &keys, &cfg.affine).unwrap();
        let expect = ((obf >> 6) & 63) as usize;
        assert_eq!(m.placement(addr).0, expect);
        assert_eq!(m.cache_access(addr, AccessKind::Load, 0).unwrap().set, expect);
    }
}

#[test]
fn store_then_load_is_coherent() {
    for cfg in [SimConfig::baseline(), SimConfig::param()] {
        let mut m = Machine::new(&cfg).unwrap();
        m.cache_access(0x500, AccessKind::Store, 0x5A).unwrap();
        assert_eq!(m.cache_access(0x500, AccessKind::Load, 0).unwrap().value, 0x5A);
        assert_eq!(m.read_bytes(0x500, 1).unwrap(), vec![0x5A]);
    }
}

#[test]
fn cache_matches_flat_memory_on_random_accesses() {
    for (i, cfg) in [SimConfig::baseline(), SimConfig::param()].into_iter().enumerate() {
        let mut m = Machine::new(&cfg).unwrap();
        let mut flat: HashMap<u64, u8> = HashMap::new();
        let mut r = rng(10 + i as u64);
        let (mut hits, mut misses) = (0, 0);
        for _ in 0..10_000 {
            // 64 KiB span over a 16 KiB cache forces evictions and write-backs.
            let addr = r.random_range(0..0x1_0000u64);
            let res = if r.random_bool(0.4) {
                let b: u8 = r.random();
                flat.insert(addr, b);
                m.cache_access(addr, AccessKind::Store, b).unwrap()
            } else {
                let res = m.cache_access(addr, AccessKind::Load, 0).unwrap();
                assert_eq!(res.value, *flat.get(&addr).unwrap_or(&0), "load {addr:#x}");
                res
            };
            if res.hit { hits += 1 } else { misses += 1 }
        }
        assert!(hits > 1000 && misses > 1000, "hits {hits} misses {misses}");
        for (addr, b) in &flat {
            assert_eq!(m.read_bytes(*addr, 1).unwrap()[0], *b);
        }
    }
}

#[test]
fn out_of_range_address_rejected() {
    let mut m = Machine::new(&SimConfig::baseline()).unwrap();
    assert!(matches!(
        m.cache_access(1 << 38, AccessKind::Load, 0),
        Err(SimError::AddressOutOfRange { width: 38, .. })
    ));
}

#[test]
fn shadow_registers_follow_eda_fix() {
    let w = AesWorkload::default();
    let (pt, key) = ([9u8; 16], [4u8; 16]);
    let layout_sig = |log: &CycleLog, m: &str, n: &str| log.layout.find(m, n).unwrap();
    let timing = leakprobe::sim::schedule(&w.program);
    let alu_cycles: Vec<usize> = w
        .program
        .iter()
        .zip(&timing)
        .filter(|(op, _)| matches!(op, MicroOp::Alu { .. }))
        .map(|(_, t)| t.ex)
        .collect();
    for mode_cfg in [SimConfig::baseline(), SimConfig::param()] {
        let (_, off) = logged_run(&mode_cfg.clone().with_eda_fix(false), &pt, &key);
        let (_, on) = logged_run(&mode_cfg.with_eda_fix(true), &pt, &key);
        let pairs = [
            ("core/fpu", "rs1", "operand_a"),
            ("core/fpu", "rs2", "operand_b"),
            ("core/muldiv", "rs1", "operand_a"),
            ("core/muldiv", "rs2", "operand_b"),
            ("core/bpu", "target", "result"),
        ];
        for (module, name, alu) in pairs {
            let shadow = layout_sig(&off, module, name);
            let src = layout_sig(&off, "core/alu", alu);
            for &c in &alu_cycles {
                assert_eq!(off.value(c, shadow), off.value(c, src), "{module}/{name} cycle {c}");
                assert_eq!(on.value(c, shadow), &[1], "{module}/{name} fixed, cycle {c}");
            }
            assert!((0..on.cycles()).all(|c| on.value(c, shadow) == [1] || c < alu_cycles[0]));
        }
    }
}

#[test]
fn power_is_recomputable_from_log() {
    let (log, power) = run_workload(&SimConfig::baseline().with_noise(0.0), &[1; 16], &[2; 16]).unwrap();
    for c in 0..log.cycles() {
        let mut expect = 0;
        for (s, spec) in log.layout.signals.iter().enumerate() {
            let prev = if c == 0 { BitVec::zero(spec.width) } else { BitVec::from_words(log.value(c - 1, s), spec.width) };
            let cur = BitVec::from_words(log.value(c, s), spec.width);
            expect += hamming_distance(&prev, &cur).unwrap();
        }
        assert_eq!(power.samples[c], expect as f64, "cycle {c}");
    }
    assert_eq!(synth_power(&log, 0.0, 99), power);
}

#[test]
fn noisy_power_is_seeded() {
    let (log, _) = run_workload(&SimConfig::baseline(), &[1; 16], &[2; 16]).unwrap();
    let a = synth_power(&log, 5.0, 1);
    assert_eq!(a, synth_power(&log, 5.0, 1));
    assert_ne!(a, synth_power(&log, 5.0, 2));
    let clean = synth_power(&log, 0.0, 1);
    let mean_diff: f64 =
        a.samples.iter().zip(&clean.samples).map(|(x, y)| x - y).sum::<f64>() / a.samples.len() as f64;
    assert!(mean_diff.abs() < 0.5);
}

#[test]
fn synthetic_logs() {
    let layout = std::sync::Arc::new(leakprobe::sim::LogLayout::new(
        vec![leakprobe::sim::SignalSpec {
            module: vec!["r"],
            name: "q".into(),
            width: 64,
            encoding: leakprobe::sim::Encoding::Plain,
        }],
        0,
    ));
    let mut still = CycleLog::new(layout.clone());
    let mut flip = CycleLog::new(layout);
    for c in 0..10u64 {
        still.push(&[0], &[1]);
        flip.push(&[if c % 2 == 0 { u64::MAX } else { 0 }], &[1]);
    }
    assert!(synth_power(&still, 0.0, 0).samples.iter().all(|s| *s == 0.0));
    assert!(synth_power(&flip, 0.0, 0).samples.iter().all(|s| *s == 64.0));
}

#[test]
fn batches_are_deterministic() {
    let mut r = rng(5);
    let key: Block = r.random();
    let pts: Vec<Block> = (0..600).map(|_| r.random()).collect();
    let cfg = SimConfig::param().with_rekey_interval(Some(100));
    let opts = BatchOptions { window: Some((0, 40)), stop_at_window_end: true, module: None };
    let a = run_batch(&cfg, &pts, &key, &opts).unwrap();
    let b = run_batch(&cfg, &pts, &key, &opts).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.epochs(), (0..6).collect::<Vec<u64>>());
    assert!(a.runs.iter().all(|r| r.samples.len() == 40 && r.ciphertext.is_none()));
    let keys = epoch_keys(&cfg, 6);
    assert_eq!(keys.len(), 6);
}

#[test]
fn vcd_round_trip_reproduces_log() {
    let mut r = rng(6);
    let key: Block = r.random();
    let pts: Vec<Block> = (0..3).map(|_| r.random()).collect();
    for cfg in [SimConfig::baseline(), SimConfig::param()] {
        for log in run_logs(&cfg, &pts, &key, Some(120)).unwrap() {
            let m = resample_per_cycle(&parse_vcd(&emit_vcd(&log)).unwrap(), CLOCK_NAME).unwrap();
            assert_eq!(m.cycles(), log.cycles());
            for c in 0..log.cycles() {
                for s in 0..log.layout.len() {
                    assert_eq!(m.words(c, s + 1), log.value(c, s), "cycle {c} signal {s}");
                }
            }
        }
    }
}

#[test]
fn empty_log_gives_header_only_vcd() {
    let m = Machine::new(&SimConfig::baseline()).unwrap();
    let text = String::from_utf8(emit_vcd(&CycleLog::new(m.layout().clone()))).unwrap();
    assert!(text.ends_with("$enddefinitions $end\n"));
    assert!(text.contains("$scope module dcache $end"));
}

#[test]
fn ten_cycle_log_has_ten_rising_edges() {
    let w = AesWorkload::default();
    let mut m = w.machine(&SimConfig::baseline(), None, &[0; 16], &[0; 16]).unwrap();
    let mut log = CycleLog::new(m.layout().clone());
    m.run(&w.program, &mut log, Some(10)).unwrap();
    let dump = parse_vcd(&emit_vcd(&log)).unwrap();
    assert_eq!(resample_per_cycle(&dump, CLOCK_NAME).unwrap().cycles(), 10);
}
