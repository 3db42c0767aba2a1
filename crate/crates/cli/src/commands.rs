use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};

use leakprobe::aes::{gen_oracle, Block, InterestingPoint};
use leakprobe::dpa::{DpaError, MtdTracker};
use leakprobe::formats::{
    block_hex, blocks_to_string, parse_block, parse_blocks, read_class_samples, read_oracle_csv, read_traces_csv,
    write_oracle_csv, write_traces_csv,
};
use leakprobe::ingest::{load_run_set_manifest, Alignment};
use leakprobe::metrics::{pairwise_ttest_matrix, svf_all, CycleWindow, OracleTrace, SvfOptions};
use leakprobe::obfuscation::{deobfuscate32, obfuscate32, AffineSpec, RoundKeys};
use leakprobe::report::{DpaReport, LeakageReport, OracleSpec, RunManifest, SeverityThresholds};
use leakprobe::sim::{emit_vcd, for_each_run, run_logs, BatchOptions, LogLayout, SimConfig};

use crate::config::{load_affine, FileConfig};
use crate::{AnalyzeArgs, Cli, Command, DpaArgs, ObfuscateArgs, SimulateArgs, TtestArgs};

pub fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Simulate(a) => simulate(cli, a),
        Command::Analyze(a) => analyze(cli, a),
        Command::Dpa(a) => dpa(cli, a),
        Command::Ttest(a) => ttest(cli, a),
        Command::Obfuscate(a) => obfuscate(a),
    }
}

fn out_dir(cli: &Cli) -> Result<&Path> {
    fs::create_dir_all(&cli.out).with_context(|| format!("creating output directory {}", cli.out.display()))?;
    Ok(&cli.out)
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path).with_context(|| format!("writing {}", path.display()))?))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn open(path: &Path) -> Result<File> {
    File::open(path).with_context(|| format!("reading {}", path.display()))
}

fn read_plaintexts(path: &Path) -> Result<Vec<Block>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    parse_blocks(&text).with_context(|| format!("plaintext file {}", path.display()))
}

fn parse_key(hex: &str) -> Result<Block> {
    parse_block(hex).map_err(|e| anyhow::anyhow!("key: {e}"))
}

/// Settings of one simulated batch, from flags or from a manifest.
struct Batch {
    cfg: SimConfig,
    key: Block,
    plaintext_file: PathBuf,
    window: Option<(usize, usize)>,
    stop_at_window_end: bool,
    power_module: Option<String>,
    vcd: bool,
    vcd_cycles: Option<usize>,
    oracles: Vec<OracleSpec>,
}

impl Batch {
    fn from_args(cli: &Cli, a: &SimulateArgs) -> Result<Self> {
        let file = FileConfig::load(cli.config.as_deref())?;
        let cfg = file.to_sim(cli.seed, a.mode)?;
        ensure!(a.oracle_byte < 16, "--oracle-byte must be below 16, got {}", a.oracle_byte);
        Ok(Self {
            cfg,
            key: parse_key(a.key.as_deref().expect("required by clap"))?,
            plaintext_file: a.plaintexts.clone().expect("required by clap"),
            window: a.window,
            stop_at_window_end: a.stop_at_window_end,
            power_module: a.power_module.clone(),
            vcd: a.vcd,
            vcd_cycles: a.vcd_cycles,
            oracles: a.oracles.iter().map(|p| OracleSpec { point: *p, byte: a.oracle_byte }).collect(),
        })
    }

    fn from_manifest(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).with_context(|| format!("reading manifest {}", path.display()))?;
        let m = RunManifest::from_json(&text).map_err(|e| anyhow::anyhow!("manifest {}: {e}", path.display()))?;
        m.config.validate()?;
        Ok(Self {
            cfg: m.config,
            key: parse_key(&m.key_hex)?,
            plaintext_file: PathBuf::from(m.plaintext_file),
            window: m.window,
            stop_at_window_end: m.stop_at_window_end,
            power_module: m.power_module,
            vcd: m.vcd,
            vcd_cycles: m.vcd_max_cycles,
            oracles: m.oracles,
        })
    }
}

fn simulate(cli: &Cli, a: &SimulateArgs) -> Result<()> {
    let b = match &a.replay {
        Some(path) => Batch::from_manifest(path)?,
        None => Batch::from_args(cli, a)?,
    };
    let plaintexts = read_plaintexts(&b.plaintext_file)?;
    ensure!(!plaintexts.is_empty(), "plaintext file {} holds no blocks", b.plaintext_file.display());
    if let Some(m) = &b.power_module {
        if LogLayout::for_cache(&b.cfg.cache).word_mask(m).iter().all(|w| *w == 0) {
            bail!("power module {m:?} matches no signals");
        }
    }
    let out = out_dir(cli)?;

    let opts = BatchOptions { window: b.window, stop_at_window_end: b.stop_at_window_end, module: b.power_module.clone() };
    let mut traces = Vec::with_capacity(plaintexts.len());
    let mut ciphertexts = Vec::new();
    for_each_run(&b.cfg, &plaintexts, &b.key, &opts, |r| {
        traces.push(r.samples);
        ciphertexts.extend(r.ciphertext);
    })?;

    let mut manifest = RunManifest::new(&b.cfg, block_hex(&b.key), b.plaintext_file.display().to_string(), plaintexts.len());
    manifest.window = b.window;
    manifest.stop_at_window_end = b.stop_at_window_end;
    manifest.power_module = b.power_module.clone();
    manifest.vcd = b.vcd;
    manifest.vcd_max_cycles = b.vcd_cycles;
    manifest.oracles = b.oracles.clone();

    write_text(&out.join("plaintexts.txt"), &blocks_to_string(&plaintexts))?;
    manifest.outputs.insert("plaintexts".into(), "plaintexts.txt".into());
    write_traces_csv(&traces, create(&out.join("traces.csv"))?)?;
    manifest.outputs.insert("traces".into(), "traces.csv".into());
    if ciphertexts.len() == plaintexts.len() {
        write_text(&out.join("ciphertexts.txt"), &blocks_to_string(&ciphertexts))?;
        manifest.outputs.insert("ciphertexts".into(), "ciphertexts.txt".into());
    }
    for spec in &b.oracles {
        let point = InterestingPoint::new(spec.point, spec.byte).expect("byte checked");
        let name = format!("oracle_{}.csv", point.label());
        write_oracle_csv(&gen_oracle(&plaintexts, &b.key, &point), create(&out.join(&name))?)?;
        manifest.outputs.insert(format!("oracle_{}", point.label()), name);
    }
    if b.vcd {
        let dir = out.join("vcd");
        fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
        let mut list = String::new();
        for (i, log) in run_logs(&b.cfg, &plaintexts, &b.key, b.vcd_cycles)?.iter().enumerate() {
            let name = format!("run_{i:06}.vcd");
            fs::write(dir.join(&name), emit_vcd(log)).with_context(|| format!("writing {name}"))?;
            list.push_str(&name);
            list.push('\n');
        }
        write_text(&dir.join("runs.txt"), &list)?;
        manifest.outputs.insert("vcd_list".into(), "vcd/runs.txt".into());
    }
    write_text(&out.join("manifest.json"), &(manifest.to_json() + "\n"))?;
    println!(
        "simulated {} runs ({} mode, {} samples each, {} key epochs) -> {}",
        plaintexts.len(),
        if b.cfg.is_param() { "param" } else { "baseline" },
        traces.first().map_or(0, |t| t.len()),
        manifest.rekey_epochs.len().max(1),
        out.display()
    );
    Ok(())
}

fn analyze(cli: &Cli, a: &AnalyzeArgs) -> Result<()> {
    let alignment = if a.truncate { Alignment::TruncateToMin } else { Alignment::ErrorOnMismatch };
    let runs = load_run_set_manifest(&a.vcds, &a.clock, alignment)
        .with_context(|| format!("loading run set {}", a.vcds.display()))?;
    let oracles: Vec<OracleTrace> = a
        .oracles
        .iter()
        .map(|p| read_oracle_csv(open(p)?).with_context(|| format!("oracle file {}", p.display())))
        .collect::<Result<_>>()?;
    for (o, p) in oracles.iter().zip(&a.oracles) {
        ensure!(
            o.len() == runs.n(),
            "oracle {} has {} values but the run set has {} runs",
            p.display(),
            o.len(),
            runs.n()
        );
    }
    let window = a.window.map_or(CycleWindow::full(), |(s, e)| CycleWindow::new(s, e));
    let opts = SvfOptions { window, shuffles: a.shuffles, seed: cli.seed.unwrap_or(0) };
    let svf = svf_all(&runs, &oracles, &opts)?;
    let thresholds = SeverityThresholds { red_min: a.red_min, red_factor: a.red_factor, orange_factor: a.orange_factor };
    let report = LeakageReport::from_svf(&svf, thresholds);
    let out = out_dir(cli)?;
    write_text(&out.join("svf_report.json"), &(svf.to_json() + "\n"))?;
    write_text(&out.join("leakage_report.json"), &(report.to_json() + "\n"))?;
    print!("{}", report.to_table());
    Ok(())
}

fn dpa(cli: &Cli, a: &DpaArgs) -> Result<()> {
    let traces = read_traces_csv(open(&a.traces)?).with_context(|| format!("trace file {}", a.traces.display()))?;
    let plaintexts = read_plaintexts(&a.plaintexts)?;
    ensure!(
        traces.len() == plaintexts.len(),
        "{} has {} traces but {} has {} plaintexts",
        a.traces.display(),
        traces.len(),
        a.plaintexts.display(),
        plaintexts.len()
    );
    ensure!(traces.len() >= 2, "need at least 2 traces, got {}", traces.len());
    let samples = traces[0].len();
    let (start, end) = a.window.unwrap_or((0, samples));
    ensure!(end <= samples, "window end {end} exceeds {samples} samples");
    let true_key = a.true_key.as_deref().map(parse_key).transpose()?.map(|k| k[a.target_byte.min(15)]);

    let mut tracker = MtdTracker::new(a.target_byte, end - start, true_key.unwrap_or(0), a.checkpoint, a.point)
        .map_err(|e| match e {
            DpaError::ZeroStep => anyhow::anyhow!("--checkpoint must be at least 1"),
            other => other.into(),
        })?;
    for (t, p) in traces.iter().zip(&plaintexts) {
        tracker.push(&t[start..end], p)?;
    }
    let mut attack = tracker.result();
    if !a.full_correlations {
        attack.correlations.clear();
    }
    let curve = tracker.finish();
    let report = DpaReport::new(attack, a.checkpoint, true_key.map(|_| &curve));
    let out = out_dir(cli)?;
    write_text(&out.join("dpa_report.json"), &(report.to_json() + "\n"))?;
    write_text(&out.join("evolution.csv"), &curve.evolution_csv())?;
    let a_ = &report.attack;
    print!(
        "byte {}: best guess 0x{:02x} (max |rho| {:.4} at sample {})",
        a_.target_byte,
        a_.best_guess,
        a_.max_abs_rho[a_.best_guess as usize],
        a_.best_sample + start
    );
    match (report.true_key, report.mtd) {
        (Some(k), Some(m)) => println!("; true key 0x{k:02x} disclosed after {m} traces"),
        (Some(k), None) => println!(
            "; true key 0x{k:02x} not disclosed within {} traces (rank {})",
            a_.traces,
            report.true_key_rank.unwrap_or(0)
        ),
        _ => println!(),
    }
    Ok(())
}

fn ttest(cli: &Cli, a: &TtestArgs) -> Result<()> {
    let groups = read_class_samples(open(&a.classes)?).with_context(|| format!("class file {}", a.classes.display()))?;
    let m = pairwise_ttest_matrix(&groups)?;
    let out = out_dir(cli)?;
    write_text(&out.join("tmatrix.csv"), &m.to_csv())?;
    println!("{} classes, max off-diagonal |t| = {:.3}", m.size(), m.max_off_diagonal());
    Ok(())
}

fn parse_hex_u32(s: &str, what: &str) -> Result<u32> {
    let t = s.trim();
    let t = t.strip_prefix("0x").or_else(|| t.strip_prefix("0X")).unwrap_or(t);
    ensure!(!t.is_empty() && t.len() <= 8, "{what}: expected up to 8 hex digits, got {s:?}");
    u32::from_str_radix(t, 16).with_context(|| format!("{what}: bad hex {s:?}"))
}

fn parse_round_keys(s: &str) -> Result<RoundKeys> {
    let parts: Vec<&str> = if s.contains(',') {
        s.split(',').map(str::trim).collect()
    } else {
        let t = s.trim().trim_start_matches("0x");
        ensure!(t.len() == 16 && t.is_ascii(), "--keys: expected 16 hex digits or k1,k2,k3,k4, got {s:?}");
        (0..4).map(|i| &t[4 * i..4 * i + 4]).collect()
    };
    ensure!(parts.len() == 4, "--keys: expected 4 round keys, got {}", parts.len());
    let mut keys = [0u16; 4];
    for (k, p) in keys.iter_mut().zip(&parts) {
        let v = parse_hex_u32(p, "--keys")?;
        *k = u16::try_from(v).map_err(|_| anyhow::anyhow!("--keys: round key {p:?} exceeds 16 bits"))?;
    }
    Ok(RoundKeys::new(keys))
}

fn obfuscate(a: &ObfuscateArgs) -> Result<()> {
    let x = parse_hex_u32(&a.value, "value")?;
    let keys = parse_round_keys(&a.keys)?;
    let spec = match &a.affine_spec {
        Some(p) => load_affine(p)?,
        None => AffineSpec::default_v1(),
    };
    let y = if a.inverse { deobfuscate32(x, &keys, &spec) } else { obfuscate32(x, &keys, &spec) };
    println!("0x{y:08x}");
    Ok(())
}
