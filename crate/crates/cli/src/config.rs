//! `key=value` configuration files. A flag given on the command line wins
//! over the file, and the file wins over built-in defaults.

use std::collections::HashMap;
use std::path::Path;
use std::str::FromStr;
use vinegof::{Result, VineError};

#[derive(Clone, Debug, Default)]
pub struct ConfigFile {
    values: HashMap<String, String>,
}

impl ConfigFile {
    pub fn parse(text: &str) -> Result<Self> {
        let mut values = HashMap::new();
        for (i, raw) in text.lines().enumerate() {
            let s = raw.trim();
            if s.is_empty() || s.starts_with('#') {
                continue;
            }
            let (k, v) = s
                .split_once('=')
                .ok_or_else(|| VineError::Parse { line: i + 1, msg: format!("expected key=value, got '{s}'") })?;
            let key = k.trim().replace('_', "-").to_ascii_lowercase();
            if values.insert(key.clone(), v.trim().to_string()).is_some() {
                return Err(VineError::Parse { line: i + 1, msg: format!("duplicate key '{key}'") });
            }
        }
        Ok(ConfigFile { values })
    }

    pub fn read(path: Option<&Path>) -> Result<Self> {
        match path {
            Some(p) => Self::parse(&std::fs::read_to_string(p)?),
            None => Ok(Self::default()),
        }
    }

    pub fn raw(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }

    /// The flag value if given, otherwise the parsed file value.
    pub fn pick<T>(&self, flag: Option<T>, key: &str) -> Result<Option<T>>
    where
        T: FromStr,
        T::Err: std::fmt::Display,
    {
        if flag.is_some() {
            return Ok(flag);
        }
        self.raw(key)
            .map(|v| v.parse::<T>().map_err(|e| VineError::Config(format!("{key}={v}: {e}"))))
            .transpose()
    }

    pub fn pick_or<T>(&self, flag: Option<T>, key: &str, default: T) -> Result<T>
    where
        T: FromStr,
        T::Err: std::fmt::Display,
    {
        Ok(self.pick(flag, key)?.unwrap_or(default))
    }

    pub fn require<T>(&self, flag: Option<T>, key: &str) -> Result<T>
    where
        T: FromStr,
        T::Err: std::fmt::Display,
    {
        self.pick(flag, key)?.ok_or_else(|| VineError::Config(format!("--{key} is required")))
    }

    /// A boolean switch: set by the flag, or by `key=true` in the file.
    pub fn switch(&self, flag: bool, key: &str) -> Result<bool> {
        Ok(flag || self.pick::<bool>(None, key)?.unwrap_or(false))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_win_over_file_over_default() {
        let c = ConfigFile::parse("# run\nn = 300\nseed=4\nfull=true\n").unwrap();
        assert_eq!(c.pick_or(Some(10usize), "n", 1).unwrap(), 10);
        assert_eq!(c.pick_or(None::<usize>, "n", 1).unwrap(), 300);
        assert_eq!(c.pick_or(None::<usize>, "r", 7).unwrap(), 7);
        assert!(c.switch(false, "full").unwrap());
        assert!(c.require::<u64>(None, "missing").is_err());
    }

    #[test]
    fn malformed_files() {
        assert!(matches!(ConfigFile::parse("n=1\nbad line"), Err(VineError::Parse { line: 2, .. })));
        assert!(ConfigFile::parse("n=1\nn=2").is_err());
        let c = ConfigFile::parse("n=abc").unwrap();
        assert!(c.pick::<usize>(None, "n").is_err());
    }
}
