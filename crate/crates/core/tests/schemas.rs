//! Every JSON artifact validates against its shipped schema.

use serde_json::Value;

use leakprobe::aes::{Block, InterestingPoint, PointKind};
use leakprobe::dpa::MtdTracker;
use leakprobe::metrics::{svf_all, SvfOptions};
use leakprobe::report::{DpaReport, LeakageReport, RunManifest, SeverityThresholds};
use leakprobe::sim::{run_logs, run_set_from_logs, SimConfig};

fn validator(name: &str) -> jsonschema::Validator {
    let path = format!("{}/schemas/{name}", env!("CARGO_MANIFEST_DIR"));
    let schema: Value = serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap();
    jsonschema::validator_for(&schema).unwrap()
}

fn assert_valid(schema: &str, json: &str) {
    let v = validator(schema);
    let doc: Value = serde_json::from_str(json).unwrap();
    let errors: Vec<String> = v.iter_errors(&doc).map(|e| format!("{} at {}", e, e.instance_path())).collect();
    assert!(errors.is_empty(), "{schema}: {errors:#?}");
}

fn blocks(n: usize, salt: u8) -> Vec<Block> {
    (0..n).map(|i| core::array::from_fn(|j| (i as u8).wrapping_mul(37) ^ (j as u8 * 11) ^ salt)).collect()
}

#[test]
fn svf_and_leakage_reports() {
    let key: Block = core::array::from_fn(|i| 0x40 + i as u8);
    let pts = blocks(8, 3);
    let logs = run_logs(&SimConfig::baseline(), &pts, &key, Some(60)).unwrap();
    let runs = run_set_from_logs(&logs).unwrap();
    let point = InterestingPoint::new(PointKind::SboxOut, 0).unwrap();
    let oracle = leakprobe::aes::gen_oracle(&pts, &key, &point);
    let report = svf_all(&runs, &[oracle], &SvfOptions { shuffles: 20, ..Default::default() }).unwrap();
    assert_valid("svf_report.schema.json", &report.to_json());
    let leakage = LeakageReport::from_svf(&report, SeverityThresholds::default());
    assert_valid("leakage_report.schema.json", &leakage.to_json());
}

#[test]
fn dpa_reports_with_and_without_key() {
    let pts = blocks(40, 9);
    let traces: Vec<Vec<f64>> = pts.iter().map(|p| vec![p[0].count_ones() as f64, p[1] as f64]).collect();
    let mut t = MtdTracker::new(0, 2, 0x00, 10, PointKind::XorKey).unwrap();
    for (tr, p) in traces.iter().zip(&pts) {
        t.push(tr, p).unwrap();
    }
    let mut attack = t.result();
    let curve = t.finish();
    assert_valid("dpa_report.schema.json", &DpaReport::new(attack.clone(), 10, Some(&curve)).to_json());
    attack.correlations.clear();
    assert_valid("dpa_report.schema.json", &DpaReport::new(attack, 10, None).to_json());
}

#[test]
fn run_manifests() {
    for cfg in [SimConfig::baseline(), SimConfig::param().with_rekey_interval(Some(2)), SimConfig::param().with_rekey_interval(None)] {
        let mut m = RunManifest::new(&cfg, "00112233445566778899aabbccddeeff".into(), "pts.txt".into(), 5);
        m.window = Some((0, 250));
        m.outputs.insert("traces".into(), "traces.csv".into());
        assert_valid("run_manifest.schema.json", &m.to_json());
    }
}

#[test]
fn schemas_reject_malformed_documents() {
    let v = validator("leakage_report.schema.json");
    let bad: Value = serde_json::json!({
        "thresholds": { "red_min": 0.5, "red_factor": 3.0, "orange_factor": 2.0 },
        "modules": [{ "module_path": "soc/alu", "oracle": "o", "svf": 1.5, "peak_cycle": 1,
                      "noise_floor": null, "xz_ratio": 0.0, "severity": "green" }]
    });
    assert_eq!(v.iter_errors(&bad).count(), 2);
    let m = validator("run_manifest.schema.json");
    assert!(!m.is_valid(&serde_json::json!({ "tool": "leakprobe" })));
}
