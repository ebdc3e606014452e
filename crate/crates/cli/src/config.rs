//! Flat `key=value` config files and flag/file/default resolution.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::CliError;

/// Parsed config file. Blank lines and lines starting with `#` are ignored;
/// keys use the long flag names (`alpha`, `weights`, `n-cal`, ...).
#[derive(Debug, Default, Clone)]
pub struct ConfigFile {
    values: BTreeMap<String, String>,
}

impl ConfigFile {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::input(format!("{}: {e}", path.display())))?;
        Self::parse(&text, path)
    }

    pub fn parse(text: &str, path: &Path) -> Result<Self, CliError> {
        let mut values = BTreeMap::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                CliError::input(format!("{}: line {}: expected key=value", path.display(), i + 1))
            })?;
            values.insert(key.trim().replace('_', "-"), value.trim().to_string());
        }
        Ok(Self { values })
    }
}

/// Resolves settings in precedence order flag > config file > default and
/// records every resolved value for echoing into reports.
pub struct Resolver<'a> {
    file: &'a ConfigFile,
    resolved: BTreeMap<String, String>,
}

impl<'a> Resolver<'a> {
    pub fn new(file: &'a ConfigFile) -> Self {
        Self {
            file,
            resolved: BTreeMap::new(),
        }
    }

    fn raw(&self, key: &str, flag: Option<String>) -> Option<String> {
        flag.or_else(|| self.file.values.get(key).cloned())
    }

    pub fn optional<T: FromStr + ToString>(&mut self, key: &str, flag: Option<T>) -> Result<Option<T>, CliError> {
        let value = match self.raw(key, flag.map(|v| v.to_string())) {
            Some(text) => Some(
                text.parse::<T>()
                    .map_err(|_| CliError::input(format!("invalid value for `{key}`: `{text}`")))?,
            ),
            None => None,
        };
        if let Some(v) = &value {
            self.resolved.insert(key.to_string(), v.to_string());
        }
        Ok(value)
    }

    pub fn or_default<T: FromStr + ToString>(&mut self, key: &str, flag: Option<T>, default: T) -> Result<T, CliError> {
        let value = self.optional(key, flag)?.unwrap_or(default);
        self.resolved.insert(key.to_string(), value.to_string());
        Ok(value)
    }

    pub fn required<T: FromStr + ToString>(&mut self, key: &str, flag: Option<T>) -> Result<T, CliError> {
        self.optional(key, flag)?
            .ok_or_else(|| CliError::input(format!("missing required setting `--{key}`")))
    }

    pub fn path(&mut self, key: &str, flag: Option<PathBuf>) -> Result<Option<PathBuf>, CliError> {
        let value = self.raw(key, flag.map(|p| p.display().to_string())).map(PathBuf::from);
        if let Some(p) = &value {
            self.resolved.insert(key.to_string(), p.display().to_string());
        }
        Ok(value)
    }

    pub fn required_path(&mut self, key: &str, flag: Option<PathBuf>) -> Result<PathBuf, CliError> {
        let path = self
            .path(key, flag)?
            .ok_or_else(|| CliError::input(format!("missing required setting `--{key}`")))?;
        Ok(path)
    }

    /// Like [`Resolver::required_path`], and the file must exist.
    pub fn existing_path(&mut self, key: &str, flag: Option<PathBuf>) -> Result<PathBuf, CliError> {
        let path = self.required_path(key, flag)?;
        if !path.is_file() {
            return Err(CliError::input(format!("`--{key}`: {} does not exist", path.display())));
        }
        Ok(path)
    }

    /// `# key = value` lines for the resolved configuration.
    pub fn header(&self, command: &str) -> String {
        let mut out = format!("# confset {command}\n");
        for (k, v) in &self.resolved {
            let _ = writeln!(out, "# {k} = {v}");
        }
        out
    }
}
