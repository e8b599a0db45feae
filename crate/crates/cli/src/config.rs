//! Flat INI experiment configs.
//!
//! ```text
//! # comment
//! ; comment
//! [section]
//! key = value        # trailing comments start with '#'
//! ```
//!
//! Values are numbers (`0.25`, `1/512`), comma lists, bare names, or terms
//! such as `band(1, 2, 7)`.

use std::collections::BTreeMap;
use std::fmt;

/// Sections and the keys each one accepts.
const SCHEMA: &[(&str, &[&str])] = &[
    ("grid", &["radius", "h"]),
    ("kernel", &["family", "sigma"]),
    ("quadrature", &["delta_inner", "tail_tol"]),
    ("problem", &["gamma", "p", "f", "exterior", "gradient"]),
    ("solver", &["epsilon", "cfl", "tol", "max_iters", "sweep"]),
    (
        "eval",
        &["operator", "function", "input", "multipliers", "p_exp", "r_p"],
    ),
    (
        "probe",
        &[
            "mode", "function", "input", "center", "scales", "rho", "depth", "alpha", "C",
        ],
    ),
    ("counterexample", &["sigma", "side", "dists"]),
];

#[derive(Clone, Debug, PartialEq)]
pub struct ConfigError {
    pub line: Option<usize>,
    pub msg: String,
}

impl ConfigError {
    pub fn at(line: usize, msg: impl Into<String>) -> Self {
        ConfigError {
            line: Some(line),
            msg: msg.into(),
        }
    }

    pub fn bare(msg: impl Into<String>) -> Self {
        ConfigError {
            line: None,
            msg: msg.into(),
        }
    }
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ConfigError { line: Some(n), msg } => write!(f, "line {n}: {msg}"),
            ConfigError { line: None, msg } => f.write_str(msg),
        }
    }
}

pub type Result<T> = std::result::Result<T, ConfigError>;

#[derive(Clone, Debug)]
struct Entry {
    value: String,
    line: usize,
}

#[derive(Clone, Debug, Default)]
pub struct Ini {
    entries: BTreeMap<(String, String), Entry>,
}

impl Ini {
    pub fn parse(text: &str) -> Result<Self> {
        let mut ini = Ini::default();
        let mut section: Option<String> = None;
        for (k, raw) in text.lines().enumerate() {
            let line = k + 1;
            let body = strip_comment(raw).trim();
            if body.is_empty() {
                continue;
            }
            if let Some(rest) = body.strip_prefix('[') {
                let name = rest
                    .strip_suffix(']')
                    .ok_or_else(|| ConfigError::at(line, "unterminated section header"))?
                    .trim();
                if !SCHEMA.iter().any(|(s, _)| *s == name) {
                    return Err(ConfigError::at(line, format!("unknown section [{name}]")));
                }
                section = Some(name.to_string());
                continue;
            }
            let (key, value) = body
                .split_once('=')
                .ok_or_else(|| ConfigError::at(line, format!("expected `key = value`, found `{body}`")))?;
            let (key, value) = (key.trim(), value.trim());
            let sec = section
                .as_deref()
                .ok_or_else(|| ConfigError::at(line, format!("key `{key}` outside any section")))?;
            let known = SCHEMA
                .iter()
                .find(|(s, _)| *s == sec)
                .map(|(_, keys)| *keys)
                .unwrap_or(&[]);
            if !known.contains(&key) {
                return Err(ConfigError::at(line, format!("unknown key `{key}` in [{sec}]")));
            }
            if value.is_empty() {
                return Err(ConfigError::at(line, format!("empty value for `{key}`")));
            }
            let slot = (sec.to_string(), key.to_string());
            if let Some(prev) = ini.entries.get(&slot) {
                return Err(ConfigError::at(
                    line,
                    format!("duplicate key `{key}` in [{sec}] (first set on line {})", prev.line),
                ));
            }
            ini.entries.insert(
                slot,
                Entry {
                    value: value.to_string(),
                    line,
                },
            );
        }
        Ok(ini)
    }

    fn get(&self, section: &str, key: &str) -> Option<&Entry> {
        self.entries.get(&(section.to_string(), key.to_string()))
    }
}

/// `;` only opens a whole-line comment since it also separates matrix rows.
fn strip_comment(s: &str) -> &str {
    if s.trim_start().starts_with(';') {
        return "";
    }
    match s.find('#') {
        Some(i) => &s[..i],
        None => s,
    }
}

pub fn parse_number(s: &str) -> Option<f64> {
    let v = match s.split_once('/') {
        Some((a, b)) => a.trim().parse::<f64>().ok()? / b.trim().parse::<f64>().ok()?,
        None => s.trim().parse::<f64>().ok()?,
    };
    v.is_finite().then_some(v)
}

/// `name` or `name(arg, ...)` with numeric arguments.
#[derive(Clone, Debug, PartialEq)]
pub struct Term {
    pub name: String,
    pub args: Vec<f64>,
    pub line: Option<usize>,
}

impl Term {
    fn parse(s: &str, line: Option<usize>) -> Result<Self> {
        let err = |msg: String| ConfigError { line, msg };
        let (name, args) = match s.split_once('(') {
            None => (s.trim(), Vec::new()),
            Some((name, rest)) => {
                let inner = rest
                    .trim_end()
                    .strip_suffix(')')
                    .ok_or_else(|| err(format!("missing `)` in `{s}`")))?;
                let args = if inner.trim().is_empty() {
                    Vec::new()
                } else {
                    inner
                        .split(',')
                        .map(|a| parse_number(a).ok_or_else(|| err(format!("bad argument `{}` in `{s}`", a.trim()))))
                        .collect::<Result<_>>()?
                };
                (name.trim(), args)
            }
        };
        if name.is_empty() || !name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_') {
            return Err(err(format!("bad name in `{s}`")));
        }
        Ok(Term {
            name: name.to_string(),
            args,
            line,
        })
    }

    pub fn error(&self, msg: impl Into<String>) -> ConfigError {
        ConfigError {
            line: self.line,
            msg: msg.into(),
        }
    }

    /// Checks the argument count and returns the arguments.
    pub fn expect_args(&self, n: usize) -> Result<&[f64]> {
        if self.args.len() != n {
            return Err(self.error(format!(
                "`{}` takes {n} argument(s), got {}",
                self.name,
                self.args.len()
            )));
        }
        Ok(&self.args)
    }
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name)?;
        if !self.args.is_empty() {
            let args: Vec<String> = self.args.iter().map(|a| a.to_string()).collect();
            write!(f, "({})", args.join(","))?;
        }
        Ok(())
    }
}

/// Typed reads with defaults; records every resolved value for the CSV header.
pub struct Resolver<'a> {
    ini: &'a Ini,
    record: Vec<(String, String)>,
}

impl<'a> Resolver<'a> {
    pub fn new(ini: &'a Ini) -> Self {
        Resolver {
            ini,
            record: Vec::new(),
        }
    }

    fn note(&mut self, section: &str, key: &str, shown: String) {
        self.record.push((format!("{section}.{key}"), shown));
    }

    /// Records a derived value that is not read from the file.
    pub fn derived(&mut self, name: &str, shown: impl fmt::Display) {
        self.record.push((name.to_string(), shown.to_string()));
    }

    pub fn line(&self, section: &str, key: &str) -> Option<usize> {
        self.ini.get(section, key).map(|e| e.line)
    }

    fn error(&self, section: &str, key: &str, msg: String) -> ConfigError {
        ConfigError {
            line: self.line(section, key),
            msg: format!("[{section}] {key}: {msg}"),
        }
    }

    pub fn number(
        &mut self,
        section: &str,
        key: &str,
        default: f64,
        valid: impl Fn(f64) -> bool,
        range: &str,
    ) -> Result<f64> {
        let v = match self.ini.get(section, key) {
            Some(e) => parse_number(&e.value)
                .ok_or_else(|| ConfigError::at(e.line, format!("[{section}] {key}: `{}` is not a number", e.value)))?,
            None => default,
        };
        if !valid(v) {
            return Err(self.error(section, key, format!("{v} must be {range}")));
        }
        self.note(section, key, v.to_string());
        Ok(v)
    }

    pub fn optional_number(
        &mut self,
        section: &str,
        key: &str,
        valid: impl Fn(f64) -> bool,
        range: &str,
    ) -> Result<Option<f64>> {
        if self.ini.get(section, key).is_none() {
            self.note(section, key, "default".into());
            return Ok(None);
        }
        self.number(section, key, f64::NAN, valid, range).map(Some)
    }

    pub fn integer(&mut self, section: &str, key: &str, default: usize, min: usize) -> Result<usize> {
        let v = match self.ini.get(section, key) {
            Some(e) => e.value.parse::<usize>().map_err(|_| {
                ConfigError::at(
                    e.line,
                    format!("[{section}] {key}: `{}` is not a nonnegative integer", e.value),
                )
            })?,
            None => default,
        };
        if v < min {
            return Err(self.error(section, key, format!("{v} must be at least {min}")));
        }
        self.note(section, key, v.to_string());
        Ok(v)
    }

    pub fn list(&mut self, section: &str, key: &str, default: &[f64]) -> Result<Vec<f64>> {
        let v = match self.ini.get(section, key) {
            Some(e) => e
                .value
                .split(',')
                .map(|s| {
                    parse_number(s).ok_or_else(|| {
                        ConfigError::at(e.line, format!("[{section}] {key}: `{}` is not a number", s.trim()))
                    })
                })
                .collect::<Result<Vec<f64>>>()?,
            None => default.to_vec(),
        };
        if v.is_empty() {
            return Err(self.error(section, key, "list is empty".into()));
        }
        let shown: Vec<String> = v.iter().map(|x| x.to_string()).collect();
        self.note(section, key, shown.join(","));
        Ok(v)
    }

    /// Rows separated by `;`, entries by `,`.
    pub fn matrix(&mut self, section: &str, key: &str, default: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        let m = match self.ini.get(section, key) {
            Some(e) => e
                .value
                .split(';')
                .map(|row| {
                    row.split(',')
                        .map(|s| {
                            parse_number(s).ok_or_else(|| {
                                ConfigError::at(e.line, format!("[{section}] {key}: `{}` is not a number", s.trim()))
                            })
                        })
                        .collect::<Result<Vec<f64>>>()
                })
                .collect::<Result<Vec<_>>>()?,
            None => default.to_vec(),
        };
        let shown: Vec<String> = m
            .iter()
            .map(|row| row.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(","))
            .collect();
        self.note(section, key, shown.join(";"));
        Ok(m)
    }

    pub fn term(&mut self, section: &str, key: &str, default: &str) -> Result<Term> {
        let t = match self.ini.get(section, key) {
            Some(e) => Term::parse(&e.value, Some(e.line))?,
            None => Term::parse(default, None)?,
        };
        self.note(section, key, t.to_string());
        Ok(t)
    }

    pub fn choice(&mut self, section: &str, key: &str, default: &str, allowed: &[&str]) -> Result<String> {
        let v = match self.ini.get(section, key) {
            Some(e) => e.value.clone(),
            None => default.to_string(),
        };
        if !allowed.contains(&v.as_str()) {
            return Err(self.error(section, key, format!("`{v}` is not one of {}", allowed.join(", "))));
        }
        self.note(section, key, v.clone());
        Ok(v)
    }

    pub fn text(&mut self, section: &str, key: &str) -> Option<String> {
        let v = self.ini.get(section, key).map(|e| e.value.clone());
        if let Some(s) = &v {
            self.note(section, key, s.clone());
        }
        v
    }

    /// `# config: section.key=value ...` in resolution order.
    pub fn header(&self) -> String {
        let parts: Vec<String> = self.record.iter().map(|(k, v)| format!("{k}={v}")).collect();
        format!("# config: {}", parts.join(" "))
    }
}
