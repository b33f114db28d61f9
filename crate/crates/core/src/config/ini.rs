//! Minimal INI reader: `[section]` headers, `key = value` lines, `#`/`;` comments.
//! Values may be wrapped in double quotes.

use std::collections::BTreeMap;
use std::str::FromStr;

use super::expr::{parse_expr, Expr};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Ini {
    sections: BTreeMap<String, BTreeMap<String, String>>,
}

impl Ini {
    pub fn parse(text: &str) -> Result<Ini> {
        let mut ini = Ini::default();
        let mut current: Option<String> = None;
        for (lineno, raw) in text.lines().enumerate() {
            let line = strip_comment(raw).trim();
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix('[') {
                let name = rest.strip_suffix(']').ok_or_else(|| {
                    Error::config(
                        "",
                        "",
                        format!("line {}: unterminated section header", lineno + 1),
                    )
                })?;
                let name = name.trim().to_string();
                ini.sections.entry(name.clone()).or_default();
                current = Some(name);
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::config(
                    current.as_deref().unwrap_or(""),
                    "",
                    format!("line {}: expected key = value", lineno + 1),
                )
            })?;
            let section = current.as_ref().ok_or_else(|| {
                Error::config(
                    "",
                    key.trim(),
                    format!("line {}: key outside any section", lineno + 1),
                )
            })?;
            ini.sections
                .get_mut(section)
                .unwrap()
                .insert(key.trim().to_string(), unquote(value.trim()).to_string());
        }
        Ok(ini)
    }

    /// Applies a `section.key=value` override.
    pub fn apply_override(&mut self, spec: &str) -> Result<()> {
        let (path, value) = spec
            .split_once('=')
            .ok_or_else(|| Error::InvalidArgument(format!("override `{spec}` is not key=value")))?;
        let (section, key) = path.trim().split_once('.').ok_or_else(|| {
            Error::InvalidArgument(format!("override key `{path}` is not section.key"))
        })?;
        self.set(section, key, unquote(value.trim()));
        Ok(())
    }

    pub fn set(&mut self, section: &str, key: &str, value: &str) {
        self.sections
            .entry(section.to_string())
            .or_default()
            .insert(key.to_string(), value.to_string());
    }

    pub fn has_section(&self, section: &str) -> bool {
        self.sections.contains_key(section)
    }

    pub fn require_section(&self, section: &str) -> Result<()> {
        if self.has_section(section) {
            Ok(())
        } else {
            Err(Error::MissingSection(section.to_string()))
        }
    }

    pub fn get_str(&self, section: &str, key: &str) -> Option<&str> {
        self.sections.get(section)?.get(key).map(String::as_str)
    }

    pub fn get<T: FromStr>(&self, section: &str, key: &str) -> Result<Option<T>>
    where
        T::Err: std::fmt::Display,
    {
        match self.get_str(section, key) {
            None => Ok(None),
            Some(v) => v
                .parse::<T>()
                .map(Some)
                .map_err(|e| Error::config(section, key, format!("cannot parse `{v}`: {e}"))),
        }
    }

    pub fn get_or<T: FromStr>(&self, section: &str, key: &str, default: T) -> Result<T>
    where
        T::Err: std::fmt::Display,
    {
        Ok(self.get(section, key)?.unwrap_or(default))
    }

    pub fn require<T: FromStr>(&self, section: &str, key: &str) -> Result<T>
    where
        T::Err: std::fmt::Display,
    {
        self.require_section(section)?;
        self.get(section, key)?
            .ok_or_else(|| Error::config(section, key, "missing required key"))
    }

    /// A real number written as an expression, e.g. `5*pi/4`.
    pub fn get_number(&self, section: &str, key: &str) -> Result<Option<f64>> {
        match self.get_expr(section, key)? {
            None => Ok(None),
            Some(e) => Ok(Some(e.eval(0.0, 0.0, 0.0))),
        }
    }

    pub fn number_or(&self, section: &str, key: &str, default: f64) -> Result<f64> {
        Ok(self.get_number(section, key)?.unwrap_or(default))
    }

    pub fn get_expr(&self, section: &str, key: &str) -> Result<Option<Expr>> {
        match self.get_str(section, key) {
            None => Ok(None),
            Some(v) => parse_expr(v)
                .map(Some)
                .map_err(|e| Error::config(section, key, e.to_string())),
        }
    }

    /// Comma-separated list of numbers (each may be an expression).
    pub fn get_list(&self, section: &str, key: &str) -> Result<Option<Vec<f64>>> {
        match self.get_str(section, key) {
            None => Ok(None),
            Some(v) => v
                .split(',')
                .map(|item| {
                    parse_expr(item.trim())
                        .map(|e| e.eval(0.0, 0.0, 0.0))
                        .map_err(|e| Error::config(section, key, e.to_string()))
                })
                .collect::<Result<Vec<_>>>()
                .map(Some),
        }
    }

    /// Canonical text form; used for hashing run configurations.
    pub fn canonical(&self) -> String {
        let mut out = String::new();
        for (name, entries) in &self.sections {
            out.push_str(&format!("[{name}]\n"));
            for (k, v) in entries {
                out.push_str(&format!("{k} = {v}\n"));
            }
        }
        out
    }
}

fn strip_comment(line: &str) -> &str {
    let mut in_quotes = false;
    for (i, c) in line.char_indices() {
        match c {
            '"' => in_quotes = !in_quotes,
            '#' if !in_quotes => return &line[..i],
            ';' if !in_quotes && line[..i].trim().is_empty() => return "",
            _ => {}
        }
    }
    line
}

fn unquote(v: &str) -> &str {
    v.strip_prefix('"')
        .and_then(|s| s.strip_suffix('"'))
        .unwrap_or(v)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sections_keys_comments_and_quotes() {
        let ini = Ini::parse(
            "# header\n[time]\n; full-line comment\nT = 8 # final time\nsteps=400\n[schedule]\nwindows = 0, 3; 4, 8\n[coefficients]\na = \"-10 + 2*x1 # not a comment\"\n",
        )
        .unwrap();
        assert_eq!(ini.get::<f64>("time", "T").unwrap(), Some(8.0));
        assert_eq!(ini.get::<usize>("time", "steps").unwrap(), Some(400));
        assert_eq!(ini.get_str("schedule", "windows"), Some("0, 3; 4, 8"));
        assert_eq!(
            ini.get_str("coefficients", "a"),
            Some("-10 + 2*x1 # not a comment")
        );
    }

    #[test]
    fn overrides_and_missing_sections() {
        let mut ini = Ini::parse("").unwrap();
        assert_eq!(
            ini.require::<f64>("time", "T"),
            Err(Error::MissingSection("time".into()))
        );
        ini.apply_override("time.T=2").unwrap();
        assert_eq!(ini.require::<f64>("time", "T").unwrap(), 2.0);
        assert!(ini.apply_override("nodot=1").is_err());
    }

    #[test]
    fn bad_values_name_the_key() {
        let ini = Ini::parse("[time]\nsteps = many\n").unwrap();
        match ini.get::<usize>("time", "steps") {
            Err(Error::Config { section, key, .. }) => {
                assert_eq!((section.as_str(), key.as_str()), ("time", "steps"))
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn numeric_expressions_and_lists() {
        let ini = Ini::parse("[actuators]\ntheta1 = 5*pi/4\nrect = 0, 1/2, 0, 1/3\n").unwrap();
        let t1 = ini.get_number("actuators", "theta1").unwrap().unwrap();
        assert!((t1 - 1.25 * std::f64::consts::PI).abs() < 1e-15);
        assert_eq!(
            ini.get_list("actuators", "rect").unwrap().unwrap()[3],
            1.0 / 3.0
        );
    }
}
