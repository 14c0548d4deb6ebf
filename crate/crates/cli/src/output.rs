use std::fs;
use std::io::Write;
use std::path::Path;

use anyhow::{Context, Result};
use grwsim_core::dynamics::CollapseEvent;
use grwsim_core::ontology::{Flash, MatterDensityField};

/// Writes `contents` next to `path` under a temporary name, then renames
/// it into place.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|d| !d.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let name = path
        .file_name()
        .with_context(|| format!("{} is not a file path", path.display()))?;
    let tmp = dir.join(format!(".{}.tmp-{}", name.to_string_lossy(), std::process::id()));
    let mut f = fs::File::create(&tmp).with_context(|| format!("creating {}", tmp.display()))?;
    f.write_all(contents)?;
    f.sync_all()?;
    drop(f);
    fs::rename(&tmp, path).with_context(|| format!("renaming {} to {}", tmp.display(), path.display()))?;
    Ok(())
}

pub fn events_jsonl(events: &[CollapseEvent]) -> Result<String> {
    let mut out = String::new();
    for e in events {
        out.push_str(&serde_json::to_string(e)?);
        out.push('\n');
    }
    Ok(out)
}

pub fn flashes_csv(flashes: &[Flash]) -> String {
    let mut out = String::from("time,position,particle\n");
    for f in flashes {
        out.push_str(&format!("{},{},{}\n", f.time, f.position, f.particle));
    }
    out
}

pub fn density_csv(m: &MatterDensityField) -> String {
    let mut out = String::from("x,m\n");
    for (x, v) in m.positions().zip(&m.values) {
        out.push_str(&format!("{x},{v}\n"));
    }
    out
}

/// One row of a summary CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub statistic: String,
    pub estimate: String,
    pub se: String,
    pub target: String,
    pub z: String,
    pub pass: bool,
}

pub fn read_summary_csv(text: &str) -> Result<Vec<SummaryRow>> {
    let mut lines = text.lines();
    let header = lines.next().context("empty summary")?;
    anyhow::ensure!(
        header.trim() == "statistic,estimate,se,target,z,pass",
        "unexpected summary header {header:?}"
    );
    lines
        .filter(|l| !l.trim().is_empty())
        .enumerate()
        .map(|(i, l)| {
            let f: Vec<&str> = l.split(',').collect();
            anyhow::ensure!(f.len() == 6, "summary row {} has {} fields", i + 2, f.len());
            Ok(SummaryRow {
                statistic: f[0].to_string(),
                estimate: f[1].to_string(),
                se: f[2].to_string(),
                target: f[3].to_string(),
                z: f[4].to_string(),
                pass: f[5]
                    .trim()
                    .parse()
                    .with_context(|| format!("summary row {}: bad pass flag", i + 2))?,
            })
        })
        .collect()
}
