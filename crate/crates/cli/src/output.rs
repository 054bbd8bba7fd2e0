//! Number formatting and run manifests.

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::ValueEnum;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Text,
    Csv,
}

impl std::str::FromStr for Format {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        <Format as ValueEnum>::from_str(s, true)
    }
}

impl std::fmt::Display for Format {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Format::Text => "text",
            Format::Csv => "csv",
        })
    }
}

/// Six significant digits.
pub fn sig6(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return format!("{x}");
    }
    let mag = x.abs().log10().floor() as i32;
    if (-4..6).contains(&mag) {
        format!("{:.*}", (5 - mag).max(0) as usize, x)
    } else {
        format!("{x:.5e}")
    }
}

/// Renders `x` for the chosen format: six significant digits for text,
/// shortest round-trip for CSV.
pub fn num(x: f64, format: Format) -> String {
    match format {
        Format::Text => sig6(x),
        Format::Csv => format!("{x}"),
    }
}

/// Everything needed to re-run a command: its resolved flags in
/// config-file form, plus the command name and toolkit version.
#[derive(Debug, Clone)]
pub struct RunManifest {
    pub command: &'static str,
    pub entries: Vec<(String, String)>,
    pub output: Option<PathBuf>,
}

impl RunManifest {
    pub fn new(command: &'static str) -> Self {
        Self {
            command,
            entries: Vec::new(),
            output: None,
        }
    }

    pub fn push(&mut self, key: &str, value: impl ToString) {
        self.entries.push((key.to_string(), value.to_string()));
    }

    fn lines(&self) -> Vec<String> {
        let mut out = vec![
            format!("command={}", self.command),
            format!("version={}", env!("CARGO_PKG_VERSION")),
        ];
        if let Some(p) = &self.output {
            out.push(format!("output={}", p.display()));
        }
        out.extend(self.entries.iter().map(|(k, v)| format!("{k}={v}")));
        out
    }

    pub fn sidecar_path(output: &Path) -> PathBuf {
        let mut name = output.as_os_str().to_owned();
        name.push(".manifest");
        PathBuf::from(name)
    }

    /// Writes `<output>.manifest` when there is an output file, otherwise
    /// prints the manifest as `# ` lines.
    pub fn emit(&self, stdout: &mut impl Write) -> anyhow::Result<()> {
        match &self.output {
            Some(p) => {
                let path = Self::sidecar_path(p);
                let mut body = self.lines().join("\n");
                body.push('\n');
                std::fs::write(&path, body)
                    .map_err(|e| anyhow::anyhow!("cannot write manifest {}: {e}", path.display()))?;
            }
            None => {
                for line in self.lines() {
                    writeln!(stdout, "# {line}")?;
                }
            }
        }
        Ok(())
    }
}
