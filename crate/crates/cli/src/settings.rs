//! Run settings: `key = value` config files merged under command-line flags.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{anyhow, bail, Context, Result};

/// Settings of one subcommand, resolved in the order flag > config file > default.
pub struct Settings {
    file: BTreeMap<String, (usize, String)>,
    resolved: Vec<(&'static str, String)>,
}

fn normalize(key: &str) -> String {
    key.trim().to_ascii_lowercase().replace('_', "-")
}

impl Settings {
    pub fn load(path: Option<&Path>) -> Result<Settings> {
        let mut file = BTreeMap::new();
        if let Some(path) = path {
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("reading config {}", path.display()))?;
            file = parse_config(&text).with_context(|| format!("config {}", path.display()))?;
        }
        Ok(Settings {
            file,
            resolved: Vec::new(),
        })
    }

    /// Value for `key`; `flag` wins over the config file, which wins over `default`.
    pub fn get<T>(&mut self, key: &'static str, flag: Option<T>, default: Option<T>) -> Result<T>
    where
        T: FromStr + fmt::Display,
        T::Err: fmt::Display,
    {
        self.optional(key, flag)?.or(default).map_or_else(
            || Err(anyhow!("missing required setting '{key}'")),
            |v| {
                self.record(key, &v);
                Ok(v)
            },
        )
    }

    /// Like [`Settings::get`] but without a default; absent values are logged as `none`.
    pub fn get_opt<T>(&mut self, key: &'static str, flag: Option<T>) -> Result<Option<T>>
    where
        T: FromStr + fmt::Display,
        T::Err: fmt::Display,
    {
        let v = self.optional(key, flag)?;
        match &v {
            Some(v) => self.record(key, v),
            None => self.resolved.push((key, "none".into())),
        }
        Ok(v)
    }

    /// Path setting; same precedence as [`Settings::get`].
    pub fn path(
        &mut self,
        key: &'static str,
        flag: Option<PathBuf>,
        default: Option<PathBuf>,
    ) -> Result<PathBuf> {
        let flag = flag.map(|p| p.to_string_lossy().into_owned());
        let default = default.map(|p| p.to_string_lossy().into_owned());
        self.get::<String>(key, flag, default).map(PathBuf::from)
    }

    fn optional<T>(&mut self, key: &'static str, flag: Option<T>) -> Result<Option<T>>
    where
        T: FromStr,
        T::Err: fmt::Display,
    {
        let from_file = self.file.remove(key);
        if flag.is_some() {
            return Ok(flag);
        }
        from_file
            .map(|(line, raw)| {
                raw.parse::<T>()
                    .map_err(|e| anyhow!("config line {line}: bad value for '{key}': {e}"))
            })
            .transpose()
    }

    fn record<T: fmt::Display>(&mut self, key: &'static str, v: &T) {
        self.resolved.push((key, v.to_string()));
    }

    /// Rejects config keys that no setting consumed and returns the resolved list.
    pub fn finish(self) -> Result<Vec<(&'static str, String)>> {
        if let Some((key, (line, _))) = self.file.iter().next() {
            bail!("config line {line}: unknown key '{key}'");
        }
        Ok(self.resolved)
    }
}

fn parse_config(text: &str) -> Result<BTreeMap<String, (usize, String)>> {
    let mut out = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| anyhow!("line {}: expected 'key = value'", i + 1))?;
        let key = normalize(k);
        if key.is_empty() {
            bail!("line {}: empty key", i + 1);
        }
        if out
            .insert(key.clone(), (i + 1, v.trim().to_string()))
            .is_some()
        {
            bail!("line {}: duplicate key '{key}'", i + 1);
        }
    }
    Ok(out)
}

/// Comma list of register sizes; `a-b` expands to an inclusive range.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QubitList(pub Vec<usize>);

impl FromStr for QubitList {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut out = Vec::new();
        for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let num = |x: &str| {
                x.trim()
                    .parse::<usize>()
                    .map_err(|_| format!("bad qubit count {x:?}"))
            };
            match part.split_once('-') {
                Some((a, b)) => {
                    let (a, b) = (num(a)?, num(b)?);
                    if a > b {
                        return Err(format!("empty range {part:?}"));
                    }
                    out.extend(a..=b);
                }
                None => out.push(num(part)?),
            }
        }
        if out.is_empty() {
            return Err("no qubit counts given".into());
        }
        out.sort_unstable();
        out.dedup();
        Ok(QubitList(out))
    }
}

impl fmt::Display for QubitList {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.0.iter().map(usize::to_string).collect();
        f.write_str(&parts.join(","))
    }
}

/// `re,im` pair for fixed label conditioning.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LabelArg(pub f64, pub f64);

impl FromStr for LabelArg {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (re, im) = s.split_once(',').unwrap_or((s, "0"));
        let p = |x: &str| {
            x.trim()
                .parse::<f64>()
                .map_err(|_| format!("bad label component {x:?}"))
        };
        Ok(LabelArg(p(re)?, p(im)?))
    }
}

impl fmt::Display for LabelArg {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{},{}", self.0, self.1)
    }
}
