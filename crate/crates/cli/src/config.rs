//! Experiment configuration: a flat `key = value` file with the same keys
//! as the command-line flags. Flags override file values.
//!
//! ```text
//! # convergence at desk scale
//! coarse = 1,2,3,4
//! fine = 7
//! eps = 5
//! ell = 1,2,global
//! seed = 7
//! ```

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};
use stokes_lod_core::basis::GLOBAL_ORDER;
use stokes_lod_core::coeffs::RandomCoefficientSpec;
use stokes_lod_core::mesh::DEFAULT_MAX_LEVEL;

use crate::error::{HarnessError, Result};

/// Largest fine level accepted before any mesh is built.
pub const MAX_FINE_LEVEL: u32 = DEFAULT_MAX_LEVEL;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Experiment {
    Decay,
    Localization,
    Convergence,
    Solve,
}

impl Experiment {
    pub fn name(self) -> &'static str {
        match self {
            Experiment::Decay => "decay",
            Experiment::Localization => "localization",
            Experiment::Convergence => "convergence",
            Experiment::Solve => "solve",
        }
    }
}

/// Partially specified settings from a file or the command line.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Overrides {
    pub coarse: Option<Vec<u32>>,
    pub fine: Option<u32>,
    pub eps: Option<u32>,
    pub ell: Option<Vec<usize>>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub threads: Option<usize>,
    pub timings: Option<bool>,
    pub background_min: Option<f64>,
    pub background_max: Option<f64>,
    pub inclusion_value: Option<f64>,
    pub inclusion_width: Option<f64>,
}

fn parse_value<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, String> {
    value.trim().parse().map_err(|_| format!("invalid value {value:?} for {key}"))
}

fn parse_list<T: std::str::FromStr>(key: &str, value: &str) -> Result<Vec<T>, String> {
    let items = value
        .split(',')
        .map(|s| parse_value(key, s))
        .collect::<Result<Vec<T>, String>>()?;
    if items.is_empty() {
        return Err(format!("empty list for {key}"));
    }
    Ok(items)
}

/// Parses one patch order; `global` selects whole-domain patches.
pub fn parse_order(s: &str) -> Result<usize, String> {
    match s.trim() {
        "global" => Ok(GLOBAL_ORDER),
        t => match t.parse::<usize>() {
            Ok(0) => Err("patch order must be at least 1".into()),
            Ok(n) => Ok(n),
            Err(_) => Err(format!("invalid patch order {t:?}")),
        },
    }
}

pub fn format_order(order: usize) -> String {
    if order == GLOBAL_ORDER {
        "global".into()
    } else {
        order.to_string()
    }
}

/// Parses a comma separated list of patch orders.
pub fn parse_orders(s: &str) -> Result<Vec<usize>, String> {
    s.split(',').map(parse_order).collect()
}

/// Parses a comma separated list of levels.
pub fn parse_levels(s: &str) -> Result<Vec<u32>, String> {
    parse_list("coarse", s)
}

impl Overrides {
    /// Sets one key from its textual value.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), String> {
        match key {
            "coarse" => self.coarse = Some(parse_levels(value)?),
            "fine" => self.fine = Some(parse_value(key, value)?),
            "eps" => self.eps = Some(parse_value(key, value)?),
            "ell" => self.ell = Some(parse_orders(value)?),
            "seed" => self.seed = Some(parse_value(key, value)?),
            "out" => self.out = Some(PathBuf::from(value.trim())),
            "threads" => self.threads = Some(parse_value(key, value)?),
            "timings" => self.timings = Some(parse_value(key, value)?),
            "background_min" => self.background_min = Some(parse_value(key, value)?),
            "background_max" => self.background_max = Some(parse_value(key, value)?),
            "inclusion_value" => self.inclusion_value = Some(parse_value(key, value)?),
            "inclusion_width" => self.inclusion_width = Some(parse_value(key, value)?),
            _ => return Err(format!("unknown key {key:?}")),
        }
        Ok(())
    }

    /// Parses config file text. Blank lines and `#` comments are skipped.
    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let mut out = Overrides::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |message: String| HarnessError::Parse {
                path: path.to_path_buf(),
                line: i + 1,
                message,
            };
            let (key, value) = line.split_once('=').ok_or_else(|| err("expected `key = value`".into()))?;
            out.set(key.trim(), value).map_err(err)?;
        }
        Ok(out)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| HarnessError::ConfigFile {
            path: path.to_path_buf(),
            source,
        })?;
        Self::parse(&text, path)
    }

    /// Values of `higher` win.
    pub fn merge(self, higher: Overrides) -> Overrides {
        Overrides {
            coarse: higher.coarse.or(self.coarse),
            fine: higher.fine.or(self.fine),
            eps: higher.eps.or(self.eps),
            ell: higher.ell.or(self.ell),
            seed: higher.seed.or(self.seed),
            out: higher.out.or(self.out),
            threads: higher.threads.or(self.threads),
            timings: higher.timings.or(self.timings),
            background_min: higher.background_min.or(self.background_min),
            background_max: higher.background_max.or(self.background_max),
            inclusion_value: higher.inclusion_value.or(self.inclusion_value),
            inclusion_width: higher.inclusion_width.or(self.inclusion_width),
        }
    }
}

/// Fully resolved settings of one experiment.
#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    pub coarse_levels: Vec<u32>,
    pub fine_level: u32,
    pub eps_level: u32,
    pub orders: Vec<usize>,
    pub seed: u64,
    pub coefficients: RandomCoefficientSpec,
    pub out_dir: PathBuf,
    /// `None` uses rayon's default.
    pub threads: Option<usize>,
    /// Write measured wall times instead of `nan`.
    pub timings: bool,
}

impl ExperimentConfig {
    pub fn defaults(experiment: Experiment) -> Self {
        let (coarse_levels, orders) = match experiment {
            Experiment::Decay => (vec![1, 2, 3], vec![GLOBAL_ORDER]),
            Experiment::Localization => (vec![1, 2, 3], vec![1, 2, 3, 4, 5]),
            Experiment::Convergence => (vec![1, 2, 3, 4], vec![1, 2, 3]),
            Experiment::Solve => (vec![2], vec![2]),
        };
        let seed = 7;
        ExperimentConfig {
            experiment,
            coarse_levels,
            fine_level: 7,
            eps_level: 5,
            orders,
            seed,
            coefficients: RandomCoefficientSpec::new(5, seed),
            out_dir: PathBuf::from("out"),
            threads: None,
            timings: false,
        }
    }

    /// Applies `overrides` to the defaults and validates the result.
    pub fn resolve(experiment: Experiment, overrides: Overrides) -> Result<Self> {
        let mut c = Self::defaults(experiment);
        if let Some(v) = overrides.coarse {
            c.coarse_levels = v;
        }
        if let Some(v) = overrides.fine {
            c.fine_level = v;
        }
        if let Some(v) = overrides.eps {
            c.eps_level = v;
        }
        if let Some(v) = overrides.ell {
            c.orders = v;
        }
        if let Some(v) = overrides.seed {
            c.seed = v;
        }
        if let Some(v) = overrides.out {
            c.out_dir = v;
        }
        c.threads = overrides.threads.or(c.threads);
        c.timings = overrides.timings.unwrap_or(c.timings);
        let mut spec = RandomCoefficientSpec::new(c.eps_level, c.seed);
        spec.background_min = overrides.background_min.unwrap_or(spec.background_min);
        spec.background_max = overrides.background_max.unwrap_or(spec.background_max);
        spec.inclusion_value = overrides.inclusion_value.unwrap_or(spec.inclusion_value);
        spec.inclusion_width = overrides.inclusion_width.unwrap_or(spec.inclusion_width);
        c.coefficients = spec;
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        let usage = |m: String| Err(HarnessError::Usage(m));
        if self.coarse_levels.is_empty() {
            return usage("at least one coarse level is required".into());
        }
        if self.orders.is_empty() {
            return usage("at least one patch order is required".into());
        }
        if self.fine_level > MAX_FINE_LEVEL {
            return usage(format!("fine level {} exceeds the limit {MAX_FINE_LEVEL}", self.fine_level));
        }
        if self.eps_level > self.fine_level {
            return usage(format!("eps level {} is finer than the fine level {}", self.eps_level, self.fine_level));
        }
        if let Some(&c) = self.coarse_levels.iter().find(|&&c| c == 0 || c > self.eps_level) {
            return usage(format!("coarse level {c} must lie in 1..={}", self.eps_level));
        }
        if self.orders.contains(&0) {
            return usage("patch orders must be at least 1".into());
        }
        if self.threads == Some(0) {
            return usage("thread count must be at least 1".into());
        }
        let s = &self.coefficients;
        if !(s.background_min > 0.0 && s.background_min <= s.background_max && s.inclusion_value > 0.0 && s.inclusion_width >= 0.0) {
            return usage("coefficient bounds must satisfy 0 < background_min <= background_max and inclusion_value > 0".into());
        }
        if self.experiment == Experiment::Decay && self.orders != [GLOBAL_ORDER] {
            return usage("decay always uses whole-domain patches; ell does not apply".into());
        }
        if self.experiment == Experiment::Solve && (self.coarse_levels.len() != 1 || self.orders.len() != 1) {
            return usage("solve takes exactly one coarse level and one patch order".into());
        }
        Ok(())
    }

    /// Settings that determine the numbers written, one `key = value` per line.
    /// Output location, thread count and timing output are left out.
    pub fn canonical(&self) -> String {
        let levels: Vec<String> = self.coarse_levels.iter().map(u32::to_string).collect();
        let orders: Vec<String> = self.orders.iter().map(|&o| format_order(o)).collect();
        let s = &self.coefficients;
        let mut out = String::new();
        let _ = writeln!(out, "experiment = {}", self.experiment.name());
        let _ = writeln!(out, "coarse = {}", levels.join(","));
        let _ = writeln!(out, "fine = {}", self.fine_level);
        let _ = writeln!(out, "eps = {}", self.eps_level);
        let _ = writeln!(out, "ell = {}", orders.join(","));
        let _ = writeln!(out, "seed = {}", self.seed);
        let _ = writeln!(out, "background_min = {:e}", s.background_min);
        let _ = writeln!(out, "background_max = {:e}", s.background_max);
        let _ = writeln!(out, "inclusion_value = {:e}", s.inclusion_value);
        let _ = writeln!(out, "inclusion_width = {:e}", s.inclusion_width);
        out
    }

    /// First 16 hex digits of the SHA-256 of [`canonical`](Self::canonical).
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.canonical().as_bytes());
        digest[..8].iter().map(|b| format!("{b:02x}")).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn file_then_flags() {
        let file = Overrides::parse("# comment\ncoarse = 1, 2\nfine=6\nell = 1,global # trailing\n\nseed = 3\n", Path::new("x.cfg")).unwrap();
        let flags = Overrides {
            fine: Some(5),
            ..Default::default()
        };
        let c = ExperimentConfig::resolve(Experiment::Convergence, file.merge(flags)).unwrap();
        assert_eq!(c.coarse_levels, vec![1, 2]);
        assert_eq!(c.fine_level, 5);
        assert_eq!(c.orders, vec![1, GLOBAL_ORDER]);
        assert_eq!(c.seed, 3);
        assert_eq!(c.coefficients.seed, 3);
    }

    #[test]
    fn parse_errors_name_the_line() {
        let err = Overrides::parse("fine = 6\nbogus = 1\n", Path::new("a.cfg")).unwrap_err();
        assert_eq!(err.to_string(), "a.cfg:2: unknown key \"bogus\"");
        assert!(Overrides::parse("fine 6\n", Path::new("a.cfg")).is_err());
        assert!(Overrides::parse("ell = 0\n", Path::new("a.cfg")).is_err());
    }

    #[test]
    fn level_ordering_is_enforced() {
        let bad = [
            Overrides { eps: Some(8), ..Default::default() },
            Overrides { coarse: Some(vec![6]), ..Default::default() },
            Overrides { coarse: Some(vec![0]), ..Default::default() },
            Overrides { fine: Some(12), eps: Some(3), ..Default::default() },
            Overrides { threads: Some(0), ..Default::default() },
        ];
        for o in bad {
            let err = ExperimentConfig::resolve(Experiment::Convergence, o).unwrap_err();
            assert!(err.is_usage(), "{err}");
        }
        let err = ExperimentConfig::resolve(Experiment::Solve, Overrides { ell: Some(vec![1, 2]), ..Default::default() }).unwrap_err();
        assert!(err.is_usage());
    }

    #[test]
    fn hash_ignores_output_location() {
        let a = ExperimentConfig::resolve(Experiment::Decay, Overrides::default()).unwrap();
        let b = ExperimentConfig::resolve(
            Experiment::Decay,
            Overrides {
                out: Some("elsewhere".into()),
                threads: Some(3),
                ..Default::default()
            },
        )
        .unwrap();
        let c = ExperimentConfig::resolve(Experiment::Decay, Overrides { seed: Some(8), ..Default::default() }).unwrap();
        assert_eq!(a.hash(), b.hash());
        assert_ne!(a.hash(), c.hash());
        assert_eq!(a.hash().len(), 16);
    }
}
