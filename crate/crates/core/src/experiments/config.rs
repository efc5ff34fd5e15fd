//! Flat `[section]` / `key = value` configuration files.
//!
//! Lines starting with `#` are comments, as is anything after a `#` on a
//! value line. Lists are comma separated, optionally wrapped in brackets.
//! Every section and key must be known to the schema.
//!
//! ```text
//! [run]          seed, threads, out, svg
//! [branching]    gamma, beta
//! [duality]      systems, barriers, radius, law_x, law_y, times, law_tolerance
//! [csbp]         t, x, replicas, z, entrance_r, entrance_replicas
//! [scbm]         replicas, negative_replicas, max_step, truncation, resolution, checks
//! [integral]     horizon, terms, delta, sequence_length, growth, exponents, block_replicas
//! [survival]     truncation, replicas, horizons, growths, max_step, grid_step, t0
//! ```
//!
//! Growth functions are written `constant:C`, `power:S:P` (`S t^P`),
//! `exponential:B` (`B^t`), `capped:B:C` (`min(B^t, C)`) or
//! `step:T0/V0;T1/V1;...`.

use std::path::Path;

use crate::branching::BranchingParams;
use crate::error::{Error, Result};
use crate::scbm::GrowthFunction;

const SCHEMA: &[(&str, &[&str])] = &[
    ("run", &["seed", "threads", "out", "svg"]),
    ("branching", &["gamma", "beta"]),
    (
        "duality",
        &[
            "systems",
            "barriers",
            "radius",
            "law_x",
            "law_y",
            "times",
            "law_tolerance",
        ],
    ),
    ("csbp", &["t", "x", "replicas", "z", "entrance_r", "entrance_replicas"]),
    (
        "scbm",
        &[
            "replicas",
            "negative_replicas",
            "max_step",
            "truncation",
            "resolution",
            "checks",
        ],
    ),
    (
        "integral",
        &[
            "horizon",
            "terms",
            "delta",
            "sequence_length",
            "growth",
            "exponents",
            "block_replicas",
        ],
    ),
    (
        "survival",
        &[
            "truncation",
            "replicas",
            "horizons",
            "growths",
            "max_step",
            "grid_step",
            "t0",
        ],
    ),
];

#[derive(Debug, Clone, PartialEq)]
struct Entry {
    key: String,
    value: String,
    line: usize,
}

#[derive(Debug, Clone, PartialEq)]
struct Section {
    name: String,
    entries: Vec<Entry>,
}

/// A parsed and schema-checked configuration file.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ConfigFile {
    sections: Vec<Section>,
}

fn config_error(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}

impl ConfigFile {
    pub fn parse(text: &str) -> Result<Self> {
        let mut sections: Vec<Section> = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
                let name = name.trim();
                if !SCHEMA.iter().any(|(s, _)| *s == name) {
                    return Err(config_error(format!("line {line_no}: unknown section [{name}]")));
                }
                if sections.iter().any(|s| s.name == name) {
                    return Err(config_error(format!("line {line_no}: duplicate section [{name}]")));
                }
                sections.push(Section {
                    name: name.to_owned(),
                    entries: Vec::new(),
                });
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(config_error(format!("line {line_no}: expected `key = value`")));
            };
            let Some(section) = sections.last_mut() else {
                return Err(config_error(format!("line {line_no}: key outside of any section")));
            };
            let key = key.trim();
            let allowed = SCHEMA
                .iter()
                .find(|(s, _)| *s == section.name)
                .map(|(_, keys)| *keys)
                .unwrap_or(&[]);
            if !allowed.contains(&key) {
                return Err(Error::UnknownKey {
                    section: section.name.clone(),
                    key: key.to_owned(),
                });
            }
            if section.entries.iter().any(|e| e.key == key) {
                return Err(config_error(format!("line {line_no}: duplicate key `{key}`")));
            }
            section.entries.push(Entry {
                key: key.to_owned(),
                value: value.trim().to_owned(),
                line: line_no,
            });
        }
        Ok(Self { sections })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text =
            std::fs::read_to_string(path).map_err(|e| config_error(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    fn entry(&self, section: &str, key: &str) -> Option<&Entry> {
        self.sections
            .iter()
            .find(|s| s.name == section)?
            .entries
            .iter()
            .find(|e| e.key == key)
    }

    pub fn raw(&self, section: &str, key: &str) -> Option<&str> {
        self.entry(section, key).map(|e| e.value.as_str())
    }

    fn typed<T: std::str::FromStr>(&self, section: &str, key: &str, what: &str) -> Result<Option<T>> {
        match self.entry(section, key) {
            None => Ok(None),
            Some(e) => e.value.parse().map(Some).map_err(|_| {
                config_error(format!(
                    "line {}: [{section}] {key} must be {what}, got `{}`",
                    e.line, e.value
                ))
            }),
        }
    }

    pub fn f64_or(&self, section: &str, key: &str, default: f64) -> Result<f64> {
        Ok(self.typed(section, key, "a number")?.unwrap_or(default))
    }

    pub fn u64_or(&self, section: &str, key: &str, default: u64) -> Result<u64> {
        Ok(self.typed(section, key, "a nonnegative integer")?.unwrap_or(default))
    }

    pub fn usize_or(&self, section: &str, key: &str, default: usize) -> Result<usize> {
        Ok(self.typed(section, key, "a nonnegative integer")?.unwrap_or(default))
    }

    pub fn i64_or(&self, section: &str, key: &str, default: i64) -> Result<i64> {
        Ok(self.typed(section, key, "an integer")?.unwrap_or(default))
    }

    pub fn bool_or(&self, section: &str, key: &str, default: bool) -> Result<bool> {
        Ok(self.typed(section, key, "true or false")?.unwrap_or(default))
    }

    pub fn optional_f64(&self, section: &str, key: &str) -> Result<Option<f64>> {
        self.typed(section, key, "a number")
    }

    /// Comma-separated items, or `default` when the key is absent.
    pub fn list_or(&self, section: &str, key: &str, default: &[&str]) -> Vec<String> {
        match self.raw(section, key) {
            None => default.iter().map(|s| (*s).to_owned()).collect(),
            Some(v) => split_list(v),
        }
    }

    pub fn f64_list_or(&self, section: &str, key: &str, default: &[f64]) -> Result<Vec<f64>> {
        self.parsed_list(section, key, default, "numbers")
    }

    pub fn i64_list_or(&self, section: &str, key: &str, default: &[i64]) -> Result<Vec<i64>> {
        self.parsed_list(section, key, default, "integers")
    }

    fn parsed_list<T: std::str::FromStr + Clone>(
        &self,
        section: &str,
        key: &str,
        default: &[T],
        what: &str,
    ) -> Result<Vec<T>> {
        match self.entry(section, key) {
            None => Ok(default.to_vec()),
            Some(e) => split_list(&e.value)
                .iter()
                .map(|item| item.parse())
                .collect::<std::result::Result<Vec<T>, _>>()
                .map_err(|_| config_error(format!("line {}: [{section}] {key} must be a list of {what}", e.line))),
        }
    }

    /// `[branching]` parameters, defaulting to `γ = 2`, `β = 1`.
    pub fn branching(&self) -> Result<BranchingParams<f64>> {
        let gamma = self.f64_or("branching", "gamma", 2.0)?;
        let beta = self.f64_or("branching", "beta", 1.0)?;
        BranchingParams::new(gamma, beta).map_err(|e| config_error(format!("[branching]: {e}")))
    }
}

fn split_list(value: &str) -> Vec<String> {
    let v = value.trim();
    let v = v.strip_prefix('[').and_then(|v| v.strip_suffix(']')).unwrap_or(v);
    v.split(',')
        .map(|s| s.trim().to_owned())
        .filter(|s| !s.is_empty())
        .collect()
}

/// Parses a growth-function spec such as `power:1:0.5`.
pub fn parse_growth(spec: &str) -> Result<GrowthFunction<f64>> {
    let bad = || config_error(format!("invalid growth function `{spec}`"));
    let mut parts = spec.trim().split(':');
    let kind = parts.next().ok_or_else(bad)?;
    let args: Vec<&str> = parts.collect();
    let nums = |n: usize| -> Result<Vec<f64>> {
        if args.len() != n {
            return Err(bad());
        }
        args.iter()
            .map(|a| a.trim().parse::<f64>().map_err(|_| bad()))
            .collect()
    };
    let wrap = |r: Result<GrowthFunction<f64>>| r.map_err(|e| config_error(format!("growth `{spec}`: {e}")));
    match kind {
        "constant" => wrap(GrowthFunction::constant(nums(1)?[0])),
        "power" => {
            let v = nums(2)?;
            wrap(GrowthFunction::power(v[0], v[1]))
        }
        "exponential" => wrap(GrowthFunction::exponential(nums(1)?[0])),
        "capped" => {
            let v = nums(2)?;
            let e = wrap(GrowthFunction::exponential(v[0]))?;
            Ok(e.min(wrap(GrowthFunction::constant(v[1]))?))
        }
        "step" => {
            if args.len() != 1 {
                return Err(bad());
            }
            let mut times = Vec::new();
            let mut values = Vec::new();
            for pair in args[0].split(';') {
                let (t, v) = pair.split_once('/').ok_or_else(bad)?;
                times.push(t.trim().parse::<f64>().map_err(|_| bad())?);
                values.push(v.trim().parse::<f64>().map_err(|_| bad())?);
            }
            wrap(GrowthFunction::step(times, values))
        }
        _ => Err(bad()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_sections_and_lists() {
        let c = ConfigFile::parse(
            "# header\n[branching]\ngamma = 2.5 # inline\nbeta=1\n\n[survival]\nhorizons = [4, 16, 64]\ngrowths = constant:1, power:1:1\n",
        )
        .unwrap();
        assert_eq!(c.branching().unwrap().gamma(), 2.5);
        assert_eq!(
            c.f64_list_or("survival", "horizons", &[]).unwrap(),
            vec![4.0, 16.0, 64.0]
        );
        assert_eq!(c.list_or("survival", "growths", &[]), vec!["constant:1", "power:1:1"]);
        assert_eq!(c.f64_or("survival", "max_step", 0.05).unwrap(), 0.05);
    }

    #[test]
    fn rejects_unknown_keys_and_sections() {
        match ConfigFile::parse("[branching]\ngama = 2\n") {
            Err(Error::UnknownKey { section, key }) => {
                assert_eq!((section.as_str(), key.as_str()), ("branching", "gama"))
            }
            other => panic!("{other:?}"),
        }
        assert!(matches!(ConfigFile::parse("[nope]\n"), Err(Error::Config(_))));
        assert!(matches!(ConfigFile::parse("gamma = 1\n"), Err(Error::Config(_))));
        assert!(matches!(ConfigFile::parse("[run]\nseed\n"), Err(Error::Config(_))));
        assert!(matches!(
            ConfigFile::parse("[run]\nseed = 1\nseed = 2\n"),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn typed_errors() {
        let c = ConfigFile::parse("[run]\nseed = abc\n[branching]\ngamma = -1\n").unwrap();
        assert!(matches!(c.u64_or("run", "seed", 0), Err(Error::Config(_))));
        assert!(matches!(c.branching(), Err(Error::Config(_))));
    }

    #[test]
    fn growth_specs() {
        assert_eq!(parse_growth("power:2:0.5").unwrap().eval(4.0), 4.0);
        assert_eq!(parse_growth("capped:3:10").unwrap().eval(5.0), 10.0);
        let s = parse_growth("step:0/1;2/3;3/9").unwrap();
        assert_eq!((s.eval(2.5), s.left_limit(2.0)), (3.0, 1.0));
        assert!(parse_growth("power:1").is_err());
        assert!(parse_growth("log:1").is_err());
        assert!(parse_growth("constant:-1").is_err());
    }
}
