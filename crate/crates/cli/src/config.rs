//! Flat `key=value` config files. Keys are the long flag names without the
//! leading dashes; flags given on the command line take precedence.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

/// Keys a manifest carries that are not flags. Keys starting with `info.`
/// are informational as well.
const META_KEYS: [&str; 3] = ["command", "version", "output"];

/// A malformed config file or value. Maps to the parse-error exit code.
#[derive(Debug)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

#[derive(Debug, Default)]
pub struct Resolver {
    values: BTreeMap<String, (usize, String)>,
    source: String,
}

impl Resolver {
    pub fn empty() -> Self {
        Self::default()
    }

    pub fn load(path: &Path, command: &str) -> anyhow::Result<Self> {
        let text =
            std::fs::read_to_string(path).map_err(|e| anyhow::anyhow!("cannot read config {}: {e}", path.display()))?;
        Ok(Self::parse(&text, &path.display().to_string(), command)?)
    }

    pub fn parse(text: &str, source: &str, command: &str) -> Result<Self, ConfigError> {
        let mut values = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| ConfigError(format!("{source}:{}: expected key=value", i + 1)))?;
            let (k, v) = (k.trim(), v.trim());
            if k == "command" && v != command {
                return Err(ConfigError(format!(
                    "{source}:{}: config is for `{v}`, not `{command}`",
                    i + 1
                )));
            }
            if META_KEYS.contains(&k) || k.starts_with("info.") {
                continue;
            }
            if values.insert(k.to_string(), (i + 1, v.to_string())).is_some() {
                return Err(ConfigError(format!("{source}:{}: duplicate key `{k}`", i + 1)));
            }
        }
        Ok(Self {
            values,
            source: source.to_string(),
        })
    }

    /// The flag value if given, else the config value, else `None`.
    pub fn opt<T: FromStr>(&mut self, key: &str, flag: Option<T>) -> Result<Option<T>, ConfigError> {
        let from_file = self.values.remove(key);
        if flag.is_some() {
            return Ok(flag);
        }
        match from_file {
            None => Ok(None),
            Some((line, raw)) => raw
                .parse()
                .map(Some)
                .map_err(|_| ConfigError(format!("{}:{line}: bad value `{raw}` for `{key}`", self.source))),
        }
    }

    pub fn get<T: FromStr>(&mut self, key: &str, flag: Option<T>, default: T) -> Result<T, ConfigError> {
        Ok(self.opt(key, flag)?.unwrap_or(default))
    }

    /// Comma-separated list.
    pub fn list<T: FromStr>(&mut self, key: &str, flag: Option<Vec<T>>) -> Result<Option<Vec<T>>, ConfigError> {
        let from_file = self.values.remove(key);
        if flag.is_some() {
            return Ok(flag);
        }
        match from_file {
            None => Ok(None),
            Some((line, raw)) => raw
                .split(',')
                .map(|s| s.trim().parse())
                .collect::<Result<Vec<T>, _>>()
                .map(Some)
                .map_err(|_| ConfigError(format!("{}:{line}: bad list `{raw}` for `{key}`", self.source))),
        }
    }

    /// Fails on keys no flag consumed.
    pub fn finish(&self) -> Result<(), ConfigError> {
        match self.values.iter().next() {
            Some((k, (line, _))) => Err(ConfigError(format!("{}:{line}: unknown key `{k}`", self.source))),
            None => Ok(()),
        }
    }
}
