use std::path::{Path, PathBuf};

use rayon::prelude::*;

use super::{parse_vcd, resample_per_cycle, CycleMatrix, IngestError, ModuleNode, SignalDecl, WaveDump};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Alignment {
    #[default]
    TruncateToMin,
    ErrorOnMismatch,
}

/// N aligned runs of the same design, each a cycle matrix over the same
/// signal order.
#[derive(Debug, Clone)]
pub struct RunSet {
    pub declarations: Vec<SignalDecl>,
    pub hierarchy: ModuleNode,
    pub runs: Vec<CycleMatrix>,
    pub labels: Vec<String>,
    /// Ticks between the first two rising edges of run 0, if known.
    pub cycle_period: Option<u64>,
}

fn same_layout(a: &[SignalDecl], b: &[SignalDecl]) -> bool {
    a.len() == b.len()
        && a.iter().zip(b).all(|(x, y)| x.name == y.name && x.width == y.width && x.scope_path == y.scope_path)
}

impl RunSet {
    pub fn new(
        declarations: Vec<SignalDecl>,
        hierarchy: ModuleNode,
        mut runs: Vec<CycleMatrix>,
        labels: Vec<String>,
        alignment: Alignment,
    ) -> Result<Self, IngestError> {
        if runs.len() < 2 {
            return Err(IngestError::TooFewRuns(runs.len()));
        }
        let min = runs.iter().map(|r| r.cycles()).min().unwrap_or(0);
        let max = runs.iter().map(|r| r.cycles()).max().unwrap_or(0);
        if min != max {
            match alignment {
                Alignment::ErrorOnMismatch => {
                    let run = runs.iter().position(|r| r.cycles() != runs[0].cycles()).unwrap_or(0);
                    return Err(IngestError::LengthMismatch {
                        run,
                        expected: runs[0].cycles(),
                        found: runs[run].cycles(),
                    });
                }
                Alignment::TruncateToMin => runs.iter_mut().for_each(|r| r.truncate(min)),
            }
        }
        let cycle_period = runs[0].edge_times().get(..2).map(|t| t[1] - t[0]);
        Ok(Self { declarations, hierarchy, runs, labels, cycle_period })
    }

    /// Resamples already-parsed dumps, which must share one declaration list.
    pub fn from_dumps(
        dumps: &[WaveDump],
        clock_name: &str,
        alignment: Alignment,
    ) -> Result<Self, IngestError> {
        let first = dumps.first().ok_or(IngestError::TooFewRuns(0))?;
        for (i, d) in dumps.iter().enumerate().skip(1) {
            if !same_layout(&first.declarations, &d.declarations) || d.hierarchy != first.hierarchy {
                return Err(IngestError::HierarchyMismatch { run: i });
            }
        }
        let runs = dumps
            .par_iter()
            .map(|d| resample_per_cycle(d, clock_name))
            .collect::<Result<Vec<_>, _>>()?;
        let labels = (0..dumps.len()).map(|i| i.to_string()).collect();
        Self::new(first.declarations.clone(), first.hierarchy.clone(), runs, labels, alignment)
    }

    pub fn n(&self) -> usize {
        self.runs.len()
    }

    pub fn cycles(&self) -> usize {
        self.runs.first().map_or(0, |r| r.cycles())
    }
}

/// Reads and resamples each file in parallel.
pub fn load_run_set(paths: &[PathBuf], clock_name: &str, alignment: Alignment) -> Result<RunSet, IngestError> {
    if paths.len() < 2 {
        return Err(IngestError::TooFewRuns(paths.len()));
    }
    let dumps = paths
        .par_iter()
        .map(|p| {
            let bytes = std::fs::read(p).map_err(|e| IngestError::Io { path: p.clone(), source: e })?;
            parse_vcd(&bytes).map_err(|e| IngestError::InFile { path: p.clone(), source: Box::new(e) })
        })
        .collect::<Result<Vec<_>, _>>()?;
    RunSet::from_dumps(&dumps, clock_name, alignment)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestEntry {
    pub path: PathBuf,
    pub label: Option<String>,
}

/// One VCD path per line with an optional label column. Blank lines and `#`
/// comments are skipped; relative paths resolve against the manifest's
/// directory.
pub fn read_vcd_manifest(path: &Path) -> Result<Vec<ManifestEntry>, IngestError> {
    let text = std::fs::read_to_string(path).map_err(|e| IngestError::Io { path: path.to_path_buf(), source: e })?;
    let base = path.parent().unwrap_or_else(|| Path::new("."));
    Ok(parse_vcd_manifest(&text, base))
}

pub fn parse_vcd_manifest(text: &str, base: &Path) -> Vec<ManifestEntry> {
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(|line| {
            let mut parts = line.splitn(2, |c: char| c.is_whitespace() || c == ',');
            let file = PathBuf::from(parts.next().unwrap_or_default());
            let label = parts.next().map(|s| s.trim().to_string()).filter(|s| !s.is_empty());
            let path = if file.is_absolute() { file } else { base.join(file) };
            ManifestEntry { path, label }
        })
        .collect()
}

pub fn load_run_set_manifest(manifest: &Path, clock_name: &str, alignment: Alignment) -> Result<RunSet, IngestError> {
    let entries = read_vcd_manifest(manifest)?;
    let paths: Vec<PathBuf> = entries.iter().map(|e| e.path.clone()).collect();
    let mut set = load_run_set(&paths, clock_name, alignment)?;
    set.labels = entries
        .iter()
        .enumerate()
        .map(|(i, e)| e.label.clone().unwrap_or_else(|| i.to_string()))
        .collect();
    Ok(set)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dump(edges: usize, sig: &str) -> WaveDump {
        let mut text = format!(
            "$scope module top $end\n$var wire 1 ! clk $end\n$var reg 8 \" {sig} $end\n$upscope $end\n$enddefinitions $end\n#0\n0!\nb0 \"\n"
        );
        for e in 0..edges {
            text.push_str(&format!("#{}\n1!\nb{:b} \"\n#{}\n0!\n", 10 * e + 5, e, 10 * e + 10));
        }
        parse_vcd(text.as_bytes()).unwrap()
    }

    #[test]
    fn identical_dumps() {
        let set = RunSet::from_dumps(&[dump(4, "a"), dump(4, "a")], "clk", Alignment::ErrorOnMismatch).unwrap();
        assert_eq!(set.n(), 2);
        assert_eq!(set.runs[0], set.runs[1]);
        assert_eq!(set.cycle_period, Some(10));
    }

    #[test]
    fn truncate_to_min() {
        let set = RunSet::from_dumps(&[dump(100, "a"), dump(98, "a")], "clk", Alignment::TruncateToMin).unwrap();
        assert_eq!(set.cycles(), 98);
        let err = RunSet::from_dumps(&[dump(100, "a"), dump(98, "a")], "clk", Alignment::ErrorOnMismatch);
        assert!(matches!(err, Err(IngestError::LengthMismatch { run: 1, expected: 100, found: 98 })));
    }

    #[test]
    fn hierarchy_mismatch() {
        let err = RunSet::from_dumps(&[dump(3, "a"), dump(3, "b")], "clk", Alignment::TruncateToMin);
        assert!(matches!(err, Err(IngestError::HierarchyMismatch { run: 1 })));
    }

    #[test]
    fn single_run_rejected() {
        assert!(matches!(
            RunSet::from_dumps(&[dump(3, "a")], "clk", Alignment::TruncateToMin),
            Err(IngestError::TooFewRuns(1))
        ));
    }

    #[test]
    fn manifest_lines() {
        let entries = parse_vcd_manifest("# runs\nrun0.vcd  fixed\n\n/abs/run1.vcd\n", Path::new("/data"));
        assert_eq!(entries.len(), 2);
        assert_eq!(entries[0].path, PathBuf::from("/data/run0.vcd"));
        assert_eq!(entries[0].label.as_deref(), Some("fixed"));
        assert_eq!(entries[1].path, PathBuf::from("/abs/run1.vcd"));
        assert_eq!(entries[1].label, None);
    }
}
