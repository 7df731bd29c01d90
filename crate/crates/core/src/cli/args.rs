use std::cell::RefCell;
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::rng::derive_seed;

/// How an option is resolved when the user does not set it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Fill {
    Value(&'static str),
    Required,
    /// May be absent; recorded as an empty value.
    Optional,
    /// May be given any number of times.
    Repeat,
}

#[derive(Debug, Clone, Copy)]
pub struct Opt {
    pub key: &'static str,
    pub fill: Fill,
    pub help: &'static str,
}

pub const fn opt(key: &'static str, default: &'static str, help: &'static str) -> Opt {
    Opt { key, fill: Fill::Value(default), help }
}

pub const fn required(key: &'static str, help: &'static str) -> Opt {
    Opt { key, fill: Fill::Required, help }
}

pub const fn optional(key: &'static str, help: &'static str) -> Opt {
    Opt { key, fill: Fill::Optional, help }
}

pub const fn repeat(key: &'static str, help: &'static str) -> Opt {
    Opt { key, fill: Fill::Repeat, help }
}

/// Options every subcommand accepts.
pub const COMMON: [Opt; 3] = [
    required("out", "output directory"),
    opt("seed", "0", "run seed; module seeds are derived from it"),
    optional("config", "file of key=value lines; flags override it"),
];

#[derive(Debug)]
pub enum CliError {
    /// Bad invocation; exit code 1.
    Usage(String),
    /// Failure while running; exit code 2.
    Runtime(crate::Error),
    /// `--help` was requested.
    Help,
}

impl From<crate::Error> for CliError {
    fn from(e: crate::Error) -> Self {
        CliError::Runtime(e)
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

pub fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

/// A fully resolved invocation: every known key has its value(s).
#[derive(Debug)]
pub struct RunConfig {
    pub command: String,
    values: BTreeMap<&'static str, Vec<String>>,
    pub positionals: Vec<String>,
    derived: RefCell<BTreeMap<String, u64>>,
}

fn find(opts: &[Opt], key: &str) -> Option<Opt> {
    COMMON.iter().chain(opts).find(|o| o.key == key).copied()
}

fn read_config(path: &str, opts: &[Opt]) -> CliResult<BTreeMap<&'static str, Vec<String>>> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| usage(format!("--config: cannot read {path}: {e}")))?;
    let mut out: BTreeMap<&'static str, Vec<String>> = BTreeMap::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| usage(format!("--config: line {} is not key=value", n + 1)))?;
        let k = k.trim();
        let o = find(opts, k)
            .filter(|o| o.key != "config")
            .ok_or_else(|| usage(format!("--config: unknown key `{k}` on line {}", n + 1)))?;
        let slot = out.entry(o.key).or_default();
        if o.fill != Fill::Repeat {
            slot.clear();
        }
        slot.push(v.trim().to_string());
    }
    Ok(out)
}

impl RunConfig {
    /// Parse `args` (everything after the subcommand) against `opts`,
    /// expecting exactly `positional` bare arguments.
    pub fn parse(command: &str, args: &[String], opts: &[Opt], positional: usize) -> CliResult<Self> {
        let mut given: BTreeMap<&'static str, Vec<String>> = BTreeMap::new();
        let mut positionals = Vec::new();
        let mut i = 0;
        while i < args.len() {
            let arg = &args[i];
            i += 1;
            if arg == "--help" || arg == "-h" {
                return Err(CliError::Help);
            }
            let Some(flag) = arg.strip_prefix("--") else {
                if arg.starts_with('-') && arg.len() > 1 && arg.parse::<f64>().is_err() {
                    return Err(usage(format!("{arg}: flags take the form --key value")));
                }
                positionals.push(arg.clone());
                continue;
            };
            let (key, inline) = match flag.split_once('=') {
                Some((k, v)) => (k, Some(v.to_string())),
                None => (flag, None),
            };
            let o = find(opts, key).ok_or_else(|| usage(format!("--{key}: unknown flag for `{command}`")))?;
            let value = match inline {
                Some(v) => v,
                None => {
                    let v = args.get(i).ok_or_else(|| usage(format!("--{key}: missing value")))?;
                    i += 1;
                    v.clone()
                }
            };
            let slot = given.entry(o.key).or_default();
            if o.fill != Fill::Repeat && !slot.is_empty() {
                return Err(usage(format!("--{key}: given more than once")));
            }
            slot.push(value);
        }
        if positionals.len() != positional {
            return Err(usage(format!(
                "`{command}` takes {positional} positional argument(s), got {}",
                positionals.len()
            )));
        }

        let mut values = match given.get("config") {
            Some(path) => read_config(&path[0], opts)?,
            None => BTreeMap::new(),
        };
        for (k, v) in given {
            values.insert(k, v);
        }
        for o in COMMON.iter().chain(opts) {
            let entry = values.entry(o.key).or_default();
            if entry.is_empty() {
                match o.fill {
                    Fill::Value(d) => entry.push(d.to_string()),
                    Fill::Required => return Err(usage(format!("--{}: required", o.key))),
                    Fill::Optional | Fill::Repeat => {}
                }
            }
        }
        Ok(Self {
            command: command.to_string(),
            values,
            positionals,
            derived: RefCell::new(BTreeMap::new()),
        })
    }

    pub fn out_dir(&self) -> PathBuf {
        PathBuf::from(&self.values["out"][0])
    }

    pub fn out(&self, name: &str) -> PathBuf {
        self.out_dir().join(name)
    }

    pub fn opt_str(&self, key: &str) -> Option<&str> {
        self.values.get(key).and_then(|v| v.first()).map(String::as_str)
    }

    pub fn str(&self, key: &str) -> &str {
        self.opt_str(key).unwrap_or_else(|| panic!("option `{key}` has no default"))
    }

    pub fn all(&self, key: &str) -> &[String] {
        self.values.get(key).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn get<T: FromStr>(&self, key: &str) -> CliResult<T> {
        let raw = self.str(key);
        raw.parse()
            .map_err(|_| usage(format!("--{key}: cannot parse `{raw}` as {}", std::any::type_name::<T>())))
    }

    pub fn get_opt<T: FromStr>(&self, key: &str) -> CliResult<Option<T>> {
        match self.opt_str(key) {
            None => Ok(None),
            Some(_) => self.get(key).map(Some),
        }
    }

    /// Comma-separated list of values.
    pub fn list<T: FromStr>(&self, key: &str) -> CliResult<Vec<T>> {
        self.str(key)
            .split(',')
            .map(|s| {
                s.trim()
                    .parse()
                    .map_err(|_| usage(format!("--{key}: cannot parse list item `{s}`")))
            })
            .collect()
    }

    pub fn seed(&self) -> CliResult<u64> {
        self.get("seed")
    }

    /// Seed for `module`, derived from the run seed and recorded for the
    /// manifest.
    pub fn module_seed(&self, module: &str) -> CliResult<u64> {
        let s = derive_seed(self.seed()?, module);
        self.derived.borrow_mut().insert(module.to_string(), s);
        Ok(s)
    }

    /// `command`, positionals, every resolved key, then derived seeds. The
    /// output directory is left out: the manifest lives there, and omitting
    /// it keeps reruns into different directories byte-identical.
    pub fn manifest(&self) -> String {
        let mut out = format!("command={}\n", self.command);
        for (i, p) in self.positionals.iter().enumerate() {
            out.push_str(&format!("arg{i}={p}\n"));
        }
        for (k, vs) in self.values.iter().filter(|(k, _)| **k != "out") {
            if vs.is_empty() {
                out.push_str(&format!("{k}=\n"));
            }
            for v in vs {
                out.push_str(&format!("{k}={v}\n"));
            }
        }
        for (m, s) in self.derived.borrow().iter() {
            out.push_str(&format!("derived_seed.{m}={s}\n"));
        }
        out
    }
}

pub fn path_arg(cfg: &RunConfig, key: &str) -> PathBuf {
    Path::new(cfg.str(key)).to_path_buf()
}
