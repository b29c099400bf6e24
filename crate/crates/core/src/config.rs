//! Sectioned `key=value` text used for run configuration and scene scripts.

use std::fmt;
use std::str::FromStr;

use crate::behavior::SurrogateKind;
use crate::descriptor::{self, Connectivity, DescriptorParams};
use crate::error::{Error, Result};
use crate::event::EventParams;
use crate::motion;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KvEntry {
    pub key: String,
    pub value: String,
    pub line: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KvSection {
    pub name: String,
    pub line: usize,
    pub entries: Vec<KvEntry>,
}

impl KvSection {
    pub fn get(&self, key: &str) -> Option<&KvEntry> {
        self.entries.iter().rev().find(|e| e.key == key)
    }
}

/// Parsed document. Keys before the first `[section]` header go into a
/// section with an empty name. `#` and `;` start comments.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KvDocument {
    pub context: String,
    pub sections: Vec<KvSection>,
}

impl KvDocument {
    pub fn parse(context: &str, text: &str) -> Result<Self> {
        let mut sections = vec![KvSection {
            name: String::new(),
            line: 0,
            entries: Vec::new(),
        }];
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let content = raw
                .split(['#', ';'])
                .next()
                .unwrap_or_default()
                .trim();
            if content.is_empty() {
                continue;
            }
            if let Some(rest) = content.strip_prefix('[') {
                let name = rest
                    .strip_suffix(']')
                    .ok_or_else(|| Error::parse(context, line, "unterminated section header"))?
                    .trim();
                if name.is_empty() {
                    return Err(Error::parse(context, line, "empty section name"));
                }
                sections.push(KvSection {
                    name: name.to_string(),
                    line,
                    entries: Vec::new(),
                });
                continue;
            }
            let (k, v) = content
                .split_once('=')
                .ok_or_else(|| Error::parse(context, line, format!("expected key=value, got {content:?}")))?;
            let key = k.trim();
            if key.is_empty() {
                return Err(Error::parse(context, line, "empty key"));
            }
            sections
                .last_mut()
                .expect("root section is always present")
                .entries
                .push(KvEntry {
                    key: key.to_string(),
                    value: v.trim().to_string(),
                    line,
                });
        }
        if sections[0].entries.is_empty() {
            sections.remove(0);
        }
        Ok(KvDocument {
            context: context.to_string(),
            sections,
        })
    }

    pub fn value<T: FromStr>(&self, entry: &KvEntry) -> Result<T>
    where
        T::Err: fmt::Display,
    {
        entry.value.parse::<T>().map_err(|e| {
            Error::parse(
                &self.context,
                entry.line,
                format!("{} = {:?}: {e}", entry.key, entry.value),
            )
        })
    }
}

/// Effective run configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct Config {
    pub tau: f64,
    pub rho: f64,
    pub descriptor: DescriptorParams,
    pub event: EventParams,
    pub theta: f64,
    pub surrogate: SurrogateKind,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            tau: 40.0,
            rho: 0.005,
            descriptor: DescriptorParams::default(),
            event: EventParams::default(),
            theta: 0.6,
            surrogate: SurrogateKind::Max,
        }
    }
}

impl Config {
    pub fn validate(&self) -> Result<()> {
        motion::check_tau(self.tau)?;
        motion::check_rho(self.rho)?;
        descriptor::check_window(self.descriptor.n)?;
        self.event.validate()?;
        if !self.theta.is_finite() {
            return Err(Error::ParameterOutOfRange {
                name: "theta",
                value: self.theta,
                expected: "finite real",
            });
        }
        Ok(())
    }

    /// Applies a config file on top of `self`; unknown sections or keys are
    /// errors so typos do not pass silently.
    pub fn apply_text(&mut self, context: &str, text: &str) -> Result<()> {
        let doc = KvDocument::parse(context, text)?;
        for section in &doc.sections {
            for entry in &section.entries {
                match (section.name.as_str(), entry.key.as_str()) {
                    ("motion", "tau") => self.tau = doc.value(entry)?,
                    ("motion", "rho") => self.rho = doc.value(entry)?,
                    ("descriptor", "n") => self.descriptor.n = doc.value(entry)?,
                    ("descriptor", "connectivity") => {
                        self.descriptor.connectivity = doc.value::<Connectivity>(entry)?
                    }
                    ("event", "w") => self.event.w = doc.value(entry)?,
                    ("event", "a1") => self.event.a1 = doc.value(entry)?,
                    ("event", "a2") => self.event.a2 = doc.value(entry)?,
                    ("event", "a3") => self.event.a3 = doc.value(entry)?,
                    ("detect", "theta") => self.theta = doc.value(entry)?,
                    ("behavior", "surrogate") => self.surrogate = doc.value(entry)?,
                    (s, k) => {
                        return Err(Error::parse(
                            context,
                            entry.line,
                            format!("unknown setting [{s}] {k}"),
                        ))
                    }
                }
            }
        }
        Ok(())
    }

    pub fn from_text(context: &str, text: &str) -> Result<Self> {
        let mut c = Config::default();
        c.apply_text(context, text)?;
        c.validate()?;
        Ok(c)
    }
}

/// Renders in the same format [`Config::apply_text`] reads.
impl fmt::Display for Config {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "[motion]\ntau={}\nrho={}", self.tau, self.rho)?;
        writeln!(
            f,
            "[descriptor]\nn={}\nconnectivity={}",
            self.descriptor.n,
            self.descriptor.connectivity.as_number()
        )?;
        writeln!(
            f,
            "[event]\nw={}\na1={}\na2={}\na3={}",
            self.event.w, self.event.a1, self.event.a2, self.event.a3
        )?;
        writeln!(f, "[detect]\ntheta={}", self.theta)?;
        write!(f, "[behavior]\nsurrogate={}", self.surrogate)
    }
}
