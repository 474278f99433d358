//! Flat `key = value` run configuration. Lines starting with `#` are
//! comments. Command-line flags are applied on top with the same keys.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use bptd_core::evaluation::Protocol;
use bptd_core::model::resolve_gamma0;
use bptd_core::sampler::ModelConfig;
use bptd_core::{AllocationMode, Hyperparams, ModelKind};

use crate::error::{AppError, Result};
use crate::runner::default_workers;

/// Which dyads of the test window are held out.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MaskKind {
    /// Dyads touching the `n` most active countries.
    Top(usize),
    /// Dyads touching none of them.
    InverseTop(usize),
}

impl fmt::Display for MaskKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MaskKind::Top(n) => write!(f, "top{n}"),
            MaskKind::InverseTop(n) => write!(f, "inverse-top{n}"),
        }
    }
}

impl FromStr for MaskKind {
    type Err = AppError;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || AppError::Usage(format!("unknown mask {s:?}, expected topN or inverse-topN"));
        let (inv, rest) = match s.strip_prefix("inverse-") {
            Some(r) => (true, r),
            None => (false, s),
        };
        let n: usize = rest.strip_prefix("top").ok_or_else(bad)?.parse().map_err(|_| bad())?;
        Ok(if inv { MaskKind::InverseTop(n) } else { MaskKind::Top(n) })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Gamma0 {
    Value(f64),
    /// Solve `(γ₀/C)²(γ₀/K)(γ₀/R) = target`.
    Target(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub model: ModelKind,
    pub communities: usize,
    pub topics: usize,
    pub regimes: usize,
    pub eps0: f64,
    pub gamma0: Gamma0,
    pub components: Option<usize>,
    pub alloc: AllocationMode,
    pub sweeps: usize,
    /// Checkpoint every this many sweeps; 0 keeps only the final one.
    pub save_every: usize,
    pub seed: u64,
    pub workers: usize,
    pub holdout: usize,
    pub mask: MaskKind,
    pub train_sweeps: usize,
    pub test_sweeps: usize,
    pub burn_in: usize,
    pub thin: usize,
    pub include_zeros: bool,
    pub data: Option<PathBuf>,
    pub out: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        let p = Protocol::default();
        Self {
            model: ModelKind::Bptd,
            communities: 20,
            topics: 6,
            regimes: 3,
            eps0: 0.1,
            gamma0: Gamma0::Target(0.01),
            components: None,
            alloc: AllocationMode::Compositional,
            sweeps: 1000,
            save_every: 0,
            seed: 0,
            workers: default_workers(),
            holdout: 3,
            mask: MaskKind::Top(15),
            train_sweeps: p.train_sweeps,
            test_sweeps: p.test_sweeps,
            burn_in: p.burn_in,
            thin: p.thin,
            include_zeros: p.include_zeros,
            data: None,
            out: None,
        }
    }
}

fn num<T: FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse()
        .map_err(|_| AppError::Usage(format!("bad value {v:?} for {key}")))
}

fn positive(key: &str, v: &str) -> Result<usize> {
    match num::<usize>(key, v)? {
        0 => Err(AppError::Usage(format!("{key} must be positive"))),
        n => Ok(n),
    }
}

pub fn parse_dims(v: &str) -> Result<(usize, usize, usize)> {
    let parts: Vec<&str> = v.split(',').map(str::trim).collect();
    match parts[..] {
        [c, k, r] => Ok((positive("dims", c)?, positive("dims", k)?, positive("dims", r)?)),
        _ => Err(AppError::Usage(format!("dims must be C,K,R, got {v:?}"))),
    }
}

pub fn parse_alloc(v: &str) -> Result<AllocationMode> {
    match v {
        "joint" => Ok(AllocationMode::Joint),
        "compositional" => Ok(AllocationMode::Compositional),
        _ => Err(AppError::Usage(format!("alloc must be joint or compositional, got {v:?}"))),
    }
}

impl RunConfig {
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        match key.trim() {
            "model" => self.model = v.parse().map_err(|e: bptd_core::Error| AppError::Usage(e.to_string()))?,
            "dims" => (self.communities, self.topics, self.regimes) = parse_dims(v)?,
            "communities" => self.communities = positive(key, v)?,
            "topics" => self.topics = positive(key, v)?,
            "regimes" => self.regimes = positive(key, v)?,
            "eps0" => self.eps0 = num(key, v)?,
            "gamma0" => self.gamma0 = Gamma0::Value(num(key, v)?),
            "gamma0_target" => self.gamma0 = Gamma0::Target(num(key, v)?),
            "components" => self.components = Some(positive(key, v)?),
            "alloc" => self.alloc = parse_alloc(v)?,
            "sweeps" => self.sweeps = num(key, v)?,
            "save_every" => self.save_every = num(key, v)?,
            "seed" => self.seed = num(key, v)?,
            "workers" => self.workers = positive(key, v)?,
            "holdout" => self.holdout = positive(key, v)?,
            "mask" => self.mask = v.parse()?,
            "train_sweeps" => self.train_sweeps = num(key, v)?,
            "test_sweeps" => self.test_sweeps = positive(key, v)?,
            "burn_in" => self.burn_in = num(key, v)?,
            "thin" => self.thin = positive(key, v)?,
            "include_zeros" => self.include_zeros = num(key, v)?,
            "data" => self.data = Some(PathBuf::from(v)),
            "out" => self.out = Some(PathBuf::from(v)),
            other => return Err(AppError::Usage(format!("unknown config key {other:?}"))),
        }
        Ok(())
    }

    /// Applies every `key = value` line of `text`.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| AppError::Usage(format!("config line {}: expected key = value", n + 1)))?;
            self.set(k, v)?;
        }
        Ok(())
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(AppError::io(format!("reading {}", path.display())))?;
        let mut c = Self::default();
        c.apply_text(&text)?;
        Ok(c)
    }

    pub fn resolved_gamma0(&self) -> f64 {
        match self.gamma0 {
            Gamma0::Value(g) => g,
            Gamma0::Target(t) => resolve_gamma0(self.communities, self.topics, self.regimes, t),
        }
    }

    pub fn hyper(&self) -> Result<Hyperparams> {
        Ok(Hyperparams::new(self.eps0, self.resolved_gamma0())?)
    }

    pub fn model_config(&self) -> Result<ModelConfig> {
        Ok(ModelConfig {
            communities: self.communities,
            topics: self.topics,
            regimes: self.regimes,
            hyper: self.hyper()?,
            allocation: self.alloc,
            components: self.components,
        })
    }

    pub fn protocol(&self) -> Result<Protocol> {
        let p = Protocol {
            train_sweeps: self.train_sweeps,
            test_sweeps: self.test_sweeps,
            burn_in: self.burn_in,
            thin: self.thin,
            include_zeros: self.include_zeros,
        };
        p.validate()?;
        Ok(p)
    }

    /// The settings as `key = value` lines that [`RunConfig::apply_text`]
    /// reads back.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let mut put = |k: &str, v: String| s.push_str(&format!("{k} = {v}\n"));
        put("model", self.model.to_string());
        put("dims", format!("{},{},{}", self.communities, self.topics, self.regimes));
        put("eps0", self.eps0.to_string());
        match self.gamma0 {
            Gamma0::Value(g) => put("gamma0", g.to_string()),
            Gamma0::Target(t) => put("gamma0_target", t.to_string()),
        }
        if let Some(q) = self.components {
            put("components", q.to_string());
        }
        let alloc = match self.alloc {
            AllocationMode::Joint => "joint",
            AllocationMode::Compositional => "compositional",
        };
        put("alloc", alloc.into());
        put("sweeps", self.sweeps.to_string());
        put("save_every", self.save_every.to_string());
        put("seed", self.seed.to_string());
        put("workers", self.workers.to_string());
        put("holdout", self.holdout.to_string());
        put("mask", self.mask.to_string());
        put("train_sweeps", self.train_sweeps.to_string());
        put("test_sweeps", self.test_sweeps.to_string());
        put("burn_in", self.burn_in.to_string());
        put("thin", self.thin.to_string());
        put("include_zeros", self.include_zeros.to_string());
        if let Some(p) = &self.data {
            put("data", p.display().to_string());
        }
        if let Some(p) = &self.out {
            put("out", p.display().to_string());
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn keys_and_overrides() {
        let mut c = RunConfig::default();
        c.apply_text("# run\nmodel = bptf\ndims = 4,3,2\n\nseed=7\nalloc = joint\nmask = inverse-top10\n")
            .unwrap();
        assert_eq!(c.model, ModelKind::Bptf);
        assert_eq!((c.communities, c.topics, c.regimes), (4, 3, 2));
        assert_eq!(c.seed, 7);
        assert_eq!(c.alloc, AllocationMode::Joint);
        assert_eq!(c.mask, MaskKind::InverseTop(10));
        c.set("seed", "8").unwrap();
        assert_eq!(c.seed, 8);
    }

    #[test]
    fn rejects_bad_input() {
        let mut c = RunConfig::default();
        assert!(c.set("colour", "red").is_err());
        assert!(c.set("dims", "4,3").is_err());
        assert!(c.set("dims", "4,0,1").is_err());
        assert!(c.set("alloc", "greedy").is_err());
        assert!(c.apply_text("seed 4").is_err());
        assert!(matches!(c.set("sweeps", "-1"), Err(AppError::Usage(_))));
    }

    #[test]
    fn gamma0_resolution() {
        let mut c = RunConfig::default();
        c.set("dims", "20,6,3").unwrap();
        assert!((c.resolved_gamma0() - 72f64.powf(0.25)).abs() < 1e-12);
        c.set("gamma0", "1.5").unwrap();
        assert_eq!(c.hyper().unwrap().gamma0, 1.5);
    }

    #[test]
    fn text_roundtrip() {
        let mut c = RunConfig::default();
        c.apply_text("model = dcgpirm\ngamma0 = 2\ncomponents = 5\ndata = x.tsv\ninclude_zeros = false").unwrap();
        let mut back = RunConfig::default();
        back.apply_text(&c.to_text()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn mask_names() {
        for m in [MaskKind::Top(15), MaskKind::InverseTop(15)] {
            assert_eq!(m.to_string().parse::<MaskKind>().unwrap(), m);
        }
        assert!("bottom3".parse::<MaskKind>().is_err());
    }
}
