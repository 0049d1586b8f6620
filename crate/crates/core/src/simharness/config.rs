use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::models::{CopulaModel, STUDY_MODELS};
use crate::phi::ConvexFunction;

pub const STUDY_SAMPLE_SIZES: [usize; 7] = [10, 50, 100, 500, 1000, 5000, 10000];
pub const DEFAULT_REPLICATIONS: usize = 100;
pub const FULL_REPLICATIONS: usize = 1000;
pub const DEFAULT_TRUTH_RESOLUTION: usize = 512;

/// One simulation study: models × φ × sample sizes × replications.
///
/// The text form is flat `key = value` lines; `#` starts a comment. Lists are
/// comma-separated, and `mo:A,B` keeps its inner comma:
///
/// ```text
/// models = mo:1,0, mo:0.2,0.7, fgm:0.5
/// phis = abs^p:1, expsgn:1/5
/// sample_sizes = 100, 1000
/// replications = 100
/// ```
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub models: Vec<CopulaModel>,
    pub phis: Vec<ConvexFunction<f64>>,
    pub sample_sizes: Vec<usize>,
    pub replications: usize,
    pub s: f64,
    pub master_seed: u64,
    pub workers: usize,
    /// Resolution of the fine checkerboard behind the reference values.
    pub truth_resolution: usize,
    /// Record wall time per estimate; off makes records a pure function of the config.
    pub timing: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            models: STUDY_MODELS.to_vec(),
            phis: ConvexFunction::study_grid(),
            sample_sizes: STUDY_SAMPLE_SIZES.to_vec(),
            replications: DEFAULT_REPLICATIONS,
            s: 0.5,
            master_seed: 0,
            workers: std::thread::available_parallelism().map_or(1, |n| n.get()),
            truth_resolution: DEFAULT_TRUTH_RESOLUTION,
            timing: true,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if self.models.is_empty() {
            return fail("no models".into());
        }
        if self.phis.is_empty() {
            return fail("no phi functions".into());
        }
        if self.sample_sizes.is_empty() {
            return fail("no sample sizes".into());
        }
        if let Some(n) = self.sample_sizes.iter().find(|&&n| n < 2) {
            return fail(format!("sample size {n} below 2"));
        }
        if self.replications == 0 {
            return fail("replications must be at least 1".into());
        }
        if !(self.s > 0.0 && self.s <= 1.0) {
            return fail(format!("resolution exponent s = {} outside (0, 1]", self.s));
        }
        if self.workers == 0 {
            return fail("workers must be at least 1".into());
        }
        if self.truth_resolution < 128 || !self.truth_resolution.is_power_of_two() {
            return fail(format!("truth_resolution must be a power of two >= 128, got {}", self.truth_resolution));
        }
        for m in &self.models {
            m.validate()?;
        }
        for f in &self.phis {
            f.validate()?;
        }
        Ok(())
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io { path: path.to_path_buf(), source })?;
        text.parse()
    }

    /// The `key = value` text this config parses back from.
    pub fn to_text(&self) -> String {
        let join = |v: Vec<String>| v.join(", ");
        let mut out = String::new();
        let _ = writeln!(out, "models = {}", join(self.models.iter().map(|m| m.descriptor()).collect()));
        let _ = writeln!(out, "phis = {}", join(self.phis.iter().map(|f| f.descriptor()).collect()));
        let _ = writeln!(out, "sample_sizes = {}", join(self.sample_sizes.iter().map(|n| n.to_string()).collect()));
        let _ = writeln!(out, "replications = {}", self.replications);
        let _ = writeln!(out, "s = {}", self.s);
        let _ = writeln!(out, "master_seed = {}", self.master_seed);
        let _ = writeln!(out, "workers = {}", self.workers);
        let _ = writeln!(out, "truth_resolution = {}", self.truth_resolution);
        let _ = writeln!(out, "timing = {}", self.timing);
        out
    }
}

/// Splits a comma-separated list, re-attaching the β of `mo:A,B`.
fn split_list(value: &str) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    let mut pending_mo = false;
    for token in value.split(',').map(str::trim) {
        if pending_mo {
            if let Some(last) = out.last_mut() {
                last.push(',');
                last.push_str(token);
            }
            pending_mo = false;
            continue;
        }
        if token.is_empty() {
            continue;
        }
        pending_mo = token.starts_with("mo:");
        out.push(token.to_string());
    }
    out
}

fn parse_number<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value.trim().parse().map_err(|_| Error::Config(format!("{key}: cannot parse `{}`", value.trim())))
}

impl FromStr for ExperimentConfig {
    type Err = Error;

    fn from_str(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value", lineno + 1)))?;
            let (key, value) = (key.trim(), value.trim());
            match key {
                "models" => {
                    cfg.models = split_list(value).iter().map(|t| t.parse()).collect::<Result<_>>()?;
                }
                "phis" => {
                    cfg.phis = split_list(value).iter().map(|t| t.parse()).collect::<Result<_>>()?;
                }
                "sample_sizes" | "n" => {
                    cfg.sample_sizes = split_list(value).iter().map(|t| parse_number(key, t)).collect::<Result<_>>()?;
                }
                "replications" | "reps" => cfg.replications = parse_number(key, value)?,
                "s" => cfg.s = parse_number(key, value)?,
                "master_seed" | "seed" => cfg.master_seed = parse_number(key, value)?,
                "workers" => cfg.workers = parse_number(key, value)?,
                "truth_resolution" => cfg.truth_resolution = parse_number(key, value)?,
                "timing" => cfg.timing = parse_number(key, value)?,
                other => return Err(Error::Config(format!("line {}: unknown key `{other}`", lineno + 1))),
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mo_descriptors_survive_list_splitting() {
        assert_eq!(split_list("mo:1,0, mo:0.2,0.7,fgm:0.5"), vec!["mo:1,0", "mo:0.2,0.7", "fgm:0.5"]);
        assert_eq!(split_list("como, indep,"), vec!["como", "indep"]);
    }

    #[test]
    fn parses_a_full_config() {
        let text = "# desk scale\nmodels = mo:1,0, mo:1,1, mo:0.2,0.7, mo:0.3,1\nphis = abs^p:1, abs^p:2, expsgn:1/5\n\
                    sample_sizes = 100, 1000\nreps = 5\ns = 0.4\nseed = 17\nworkers = 3\ntruth_resolution = 256\ntiming = false\n";
        let cfg: ExperimentConfig = text.parse().unwrap();
        assert_eq!(cfg.models, STUDY_MODELS.to_vec());
        assert_eq!(cfg.phis.iter().map(|f| f.descriptor()).collect::<Vec<_>>(), ["abs^p:1", "abs^p:2", "expsgn:0.2"]);
        assert_eq!(cfg.sample_sizes, [100, 1000]);
        assert_eq!((cfg.replications, cfg.master_seed, cfg.workers, cfg.truth_resolution), (5, 17, 3, 256));
        assert_eq!(cfg.s, 0.4);
        assert!(!cfg.timing);

        let again: ExperimentConfig = cfg.to_text().parse().unwrap();
        assert_eq!(again.to_text(), cfg.to_text());
    }

    #[test]
    fn defaults_follow_the_study() {
        let cfg: ExperimentConfig = "".parse().unwrap();
        assert_eq!(cfg.replications, 100);
        assert_eq!(cfg.s, 0.5);
        assert_eq!(cfg.phis.len(), 9);
        assert_eq!(cfg.sample_sizes, STUDY_SAMPLE_SIZES);
    }

    #[test]
    fn rejects_invalid_configs() {
        for bad in [
            "reps = 0",
            "sample_sizes = 100, 1",
            "sample_sizes =",
            "models = mo:2,0",
            "phis = abs^p:0.5",
            "s = 0",
            "workers = 0",
            "truth_resolution = 300",
            "colour = blue",
            "just text",
            "reps = many",
        ] {
            assert!(bad.parse::<ExperimentConfig>().is_err(), "{bad}");
        }
    }
}
