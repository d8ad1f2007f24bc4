use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{HarnessError, Result};

/// Overrides the configured output root.
pub const OUTPUT_ENV: &str = "PCAHN_OUT";

pub const DEFAULT_OUTPUT: &str = "pcahn-out";

/// `--out`, then `$PCAHN_OUT`, then the config's `[output] directory`, then `pcahn-out`.
pub fn resolve_output_dir(cli: Option<&Path>, configured: Option<&Path>) -> PathBuf {
    if let Some(p) = cli {
        return p.to_path_buf();
    }
    if let Some(p) = std::env::var_os(OUTPUT_ENV).filter(|v| !v.is_empty()) {
        return PathBuf::from(p);
    }
    configured.map_or_else(|| PathBuf::from(DEFAULT_OUTPUT), Path::to_path_buf)
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileEntry {
    /// Relative to the output directory.
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

/// Written last as `manifest.json`. Carries no timestamps, so identical runs give identical
/// manifests.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub config_sha256: String,
    pub config: String,
    pub files: Vec<FileEntry>,
    pub summary: serde_json::Value,
}

impl Manifest {
    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| HarnessError::Input {
            path: path.to_path_buf(),
            message: format!("line {}: {e}", e.line()),
        })
    }

    /// Re-hashes every listed file and returns those that changed or vanished.
    pub fn verify(&self, dir: &Path) -> Vec<String> {
        self.files
            .iter()
            .filter(|f| fs::read(dir.join(&f.path)).map_or(true, |b| sha256_hex(&b) != f.sha256))
            .map(|f| f.path.clone())
            .collect()
    }
}

/// Output directory that remembers what was written into it.
pub struct OutputDir {
    root: PathBuf,
    files: Vec<FileEntry>,
}

impl OutputDir {
    pub fn create(root: PathBuf) -> Result<Self> {
        fs::create_dir_all(&root).map_err(|e| HarnessError::io(&root, e))?;
        Ok(Self {
            root,
            files: Vec::new(),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn write(&mut self, name: &str, bytes: &[u8]) -> Result<PathBuf> {
        let path = self.root.join(name);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(|e| HarnessError::io(parent, e))?;
        }
        fs::write(&path, bytes).map_err(|e| HarnessError::io(&path, e))?;
        self.files.retain(|f| f.path != name);
        self.files.push(FileEntry {
            path: name.to_string(),
            sha256: sha256_hex(bytes),
            bytes: bytes.len() as u64,
        });
        Ok(path)
    }

    pub fn files(&self) -> &[FileEntry] {
        &self.files
    }

    pub fn finish(self, command: &str, config_text: &str, summary: serde_json::Value) -> Result<Manifest> {
        let manifest = Manifest {
            tool: "pcahn".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command: command.into(),
            config_sha256: sha256_hex(config_text.as_bytes()),
            config: config_text.into(),
            files: self.files,
            summary,
        };
        let path = self.root.join("manifest.json");
        let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
        fs::write(&path, text + "\n").map_err(|e| HarnessError::io(&path, e))?;
        Ok(manifest)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
}

const COLOURS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];

/// Minimal SVG line plot with markers; non-finite points are dropped.
pub fn line_plot_svg(title: &str, x_label: &str, y_label: &str, series: &[Series]) -> String {
    let (w, h, m) = (640.0, 420.0, 60.0);
    let pts: Vec<(f64, f64)> = series
        .iter()
        .flat_map(|s| s.points.iter().copied())
        .filter(|(x, y)| x.is_finite() && y.is_finite())
        .collect();
    let span = |v: &mut dyn Iterator<Item = f64>| {
        let (lo, hi) = v.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), x| (a.min(x), b.max(x)));
        if !lo.is_finite() {
            (0.0, 1.0)
        } else if hi > lo {
            (lo, hi)
        } else {
            (lo - 0.5, hi + 0.5)
        }
    };
    let (x0, x1) = span(&mut pts.iter().map(|p| p.0));
    let (y0, y1) = span(&mut pts.iter().map(|p| p.1));
    let sx = |x: f64| m + (x - x0) / (x1 - x0) * (w - 2.0 * m);
    let sy = |y: f64| h - m - (y - y0) / (y1 - y0) * (h - 2.0 * m);
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{}" y="24" text-anchor="middle" font-size="15">{}</text>"#, w / 2.0, escape(title));
    let _ = writeln!(
        s,
        r#"<path d="M{m} {m} V{} H{}" fill="none" stroke="black"/>"#,
        h - m,
        w - m
    );
    for k in 0..=4 {
        let fx = x0 + (x1 - x0) * k as f64 / 4.0;
        let fy = y0 + (y1 - y0) * k as f64 / 4.0;
        let _ = writeln!(s, r#"<text x="{:.1}" y="{}" text-anchor="middle">{}</text>"#, sx(fx), h - m + 18.0, tick(fx));
        let _ = writeln!(s, r#"<text x="{}" y="{:.1}" text-anchor="end">{}</text>"#, m - 6.0, sy(fy) + 4.0, tick(fy));
    }
    let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#, w / 2.0, h - 14.0, escape(x_label));
    let _ = writeln!(
        s,
        r#"<text x="16" y="{}" text-anchor="middle" transform="rotate(-90 16 {})">{}</text>"#,
        h / 2.0,
        h / 2.0,
        escape(y_label)
    );
    for (i, ser) in series.iter().enumerate() {
        let c = COLOURS[i % COLOURS.len()];
        let good: Vec<(f64, f64)> = ser.points.iter().copied().filter(|(x, y)| x.is_finite() && y.is_finite()).collect();
        if good.is_empty() {
            continue;
        }
        let d: Vec<String> = good
            .iter()
            .enumerate()
            .map(|(k, &(x, y))| format!("{}{:.2} {:.2}", if k == 0 { 'M' } else { 'L' }, sx(x), sy(y)))
            .collect();
        let _ = writeln!(s, r#"<path d="{}" fill="none" stroke="{c}" stroke-width="1.5"/>"#, d.join(" "));
        if good.len() <= 50 {
            for &(x, y) in &good {
                let _ = writeln!(s, r#"<circle cx="{:.2}" cy="{:.2}" r="3" fill="{c}"/>"#, sx(x), sy(y));
            }
        }
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" fill="{c}">{}</text>"#,
            w - m - 120.0,
            m + 16.0 * (i as f64 + 1.0),
            escape(&ser.label)
        );
    }
    s.push_str("</svg>\n");
    s
}

fn tick(v: f64) -> String {
    if v != 0.0 && (v.abs() >= 1e4 || v.abs() < 1e-2) {
        format!("{v:.2e}")
    } else {
        format!("{v:.3}")
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn manifest_round_trips_and_verifies() {
        let dir = tempfile::tempdir().unwrap();
        let mut out = OutputDir::create(dir.path().join("run")).unwrap();
        out.write("a.csv", b"x,u\n0,1\n").unwrap();
        out.write("sub/b.txt", b"hello").unwrap();
        let m = out.finish("simulate", "[model]\ntheta = 2\n", serde_json::json!({"steps": 3})).unwrap();
        let back = Manifest::read(&dir.path().join("run/manifest.json")).unwrap();
        assert_eq!(back, m);
        assert_eq!(back.files[1].sha256, sha256_hex(b"hello"));
        assert!(back.verify(&dir.path().join("run")).is_empty());
        fs::write(dir.path().join("run/a.csv"), "tampered").unwrap();
        assert_eq!(back.verify(&dir.path().join("run")), vec!["a.csv".to_string()]);
    }

    #[test]
    fn sha256_known_vector() {
        assert_eq!(sha256_hex(b"abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    }

    #[test]
    fn svg_is_well_formed() {
        let s = line_plot_svg(
            "E < t",
            "t",
            "E",
            &[Series {
                label: "run".into(),
                points: vec![(0.0, 1.0), (1.0, f64::NAN), (2.0, 0.5)],
            }],
        );
        assert!(s.starts_with("<svg") && s.trim_end().ends_with("</svg>"));
        assert!(s.contains("E &lt; t"));
        assert_eq!(s.matches("<circle").count(), 2);
    }
}
