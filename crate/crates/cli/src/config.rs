//! Flat `section.key = value` run configuration.
//!
//! Keys may be written flat (`gam.criterion = gcv`) or under an INI section
//! header (`[gam]` then `criterion = gcv`); dotted keys are always taken
//! as written, even below a header. `--set` overrides are applied
//! after the file, later values replacing earlier ones in place.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{anyhow, bail, Context, Result};
use ini::Ini;

#[derive(Debug, Clone, Default)]
pub struct RunConfig {
    entries: Vec<(String, String)>,
    /// Directory relative paths are resolved against.
    base: PathBuf,
}

impl RunConfig {
    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self> {
        let mut cfg = RunConfig::default();
        if let Some(path) = path {
            let ini = Ini::load_from_file(path).with_context(|| format!("reading config {}", path.display()))?;
            for (section, props) in &ini {
                for (k, v) in props.iter() {
                    let key = match section {
                        Some(s) if !k.contains('.') => format!("{s}.{k}"),
                        _ => k.to_string(),
                    };
                    cfg.set(key, v.to_string());
                }
            }
            cfg.base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        }
        for o in overrides {
            let (k, v) = o
                .split_once('=')
                .ok_or_else(|| anyhow!("--set expects key=value, got `{o}`"))?;
            cfg.set(k.trim().to_string(), v.trim().to_string());
        }
        Ok(cfg)
    }

    pub fn set(&mut self, key: String, value: String) {
        match self.entries.iter_mut().find(|(k, _)| *k == key) {
            Some(e) => e.1 = value,
            None => self.entries.push((key, value)),
        }
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn require(&self, key: &str) -> Result<&str> {
        self.get(key).ok_or_else(|| anyhow!("{key} required"))
    }

    pub fn parse<T: FromStr>(&self, key: &str) -> Result<Option<T>>
    where
        T::Err: std::fmt::Display,
    {
        self.get(key)
            .map(|v| v.parse::<T>().map_err(|e| anyhow!("invalid {key} `{v}`: {e}")))
            .transpose()
    }

    pub fn parse_or<T: FromStr>(&self, key: &str, default: T) -> Result<T>
    where
        T::Err: std::fmt::Display,
    {
        Ok(self.parse(key)?.unwrap_or(default))
    }

    /// Comma-separated list of values.
    pub fn list<T: FromStr>(&self, key: &str) -> Result<Option<Vec<T>>>
    where
        T::Err: std::fmt::Display,
    {
        self.get(key)
            .map(|v| {
                v.split(',')
                    .map(|s| s.trim().parse::<T>().map_err(|e| anyhow!("invalid entry `{s}` in {key}: {e}")))
                    .collect()
            })
            .transpose()
    }

    /// `(label, value)` pairs of every key below `prefix.`, in file order.
    pub fn section(&self, prefix: &str) -> Vec<(String, String)> {
        let p = format!("{prefix}.");
        self.entries
            .iter()
            .filter_map(|(k, v)| k.strip_prefix(&p).map(|l| (l.to_string(), v.clone())))
            .collect()
    }

    pub fn path(&self, value: &str) -> PathBuf {
        let p = PathBuf::from(value);
        if p.is_absolute() {
            p
        } else {
            self.base.join(p)
        }
    }

    pub fn require_path(&self, key: &str) -> Result<PathBuf> {
        Ok(self.path(self.require(key)?))
    }

    pub fn check_known(&self, known: &[&str]) -> Result<()> {
        for (k, _) in &self.entries {
            let ok = known.iter().any(|p| match p.strip_suffix(".*") {
                Some(prefix) => k.starts_with(prefix) && k[prefix.len()..].starts_with('.'),
                None => k == p,
            });
            if !ok {
                bail!("unknown config key `{k}`");
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    #[test]
    fn sections_flat_keys_and_overrides() {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(f, "method = ols\nrestriction = 20-443\ngam.criterion = aic\n[sets]\nv = a.csv\nns = b.csv\nsynthetic.dim = 2").unwrap();
        let cfg = RunConfig::load(Some(f.path()), &["method=gam".into(), "sets.cr=c.csv".into()]).unwrap();
        assert_eq!(cfg.get("method"), Some("gam"));
        assert_eq!(cfg.get("gam.criterion"), Some("aic"));
        assert_eq!(cfg.get("synthetic.dim"), Some("2"));
        let labels: Vec<String> = cfg.section("sets").into_iter().map(|(l, _)| l).collect();
        assert_eq!(labels, ["v", "ns", "cr"]);
        assert_eq!(cfg.path("a.csv"), f.path().parent().unwrap().join("a.csv"));
        assert!(cfg.require("kernel.basis").unwrap_err().to_string().contains("kernel.basis required"));
    }

    #[test]
    fn typed_access() {
        let cfg = RunConfig::load(None, &["a=3".into(), "b=1,2.5".into(), "c=x".into()]).unwrap();
        assert_eq!(cfg.parse::<usize>("a").unwrap(), Some(3));
        assert_eq!(cfg.list::<f64>("b").unwrap(), Some(vec![1.0, 2.5]));
        assert!(cfg.parse::<usize>("c").is_err());
        assert!(RunConfig::load(None, &["novalue".into()]).is_err());
        assert!(cfg.check_known(&["a", "b"]).is_err());
        assert!(cfg.check_known(&["a", "b", "c"]).is_ok());
    }
}
