//! Flat key=value run configuration with documented defaults. Unknown keys
//! are rejected so preset files cannot silently drift.

use std::path::PathBuf;

use crate::eea::EeaAlgorithm;
use crate::error::{Error, Result};
use crate::neighborhood::NeighborhoodSpec;
use crate::trainer::TrainConfig;

/// One unmixing run: training hyperparameters plus dataset wiring.
///
/// Keys and defaults:
/// `lr` (1e-4), `batch` (400), `epochs_an` (50), `epochs_stage1` (300),
/// `epochs_stage2` (100), `w_mse` (1), `w_sad` (0), `w_nonneg` (1e-8),
/// `w_minvol` (0.0025), `nbhd` (shape=circle,level=2), `seed_params` (1),
/// `seed_shuffle` (2), `seed_eea` (3), `heads_an`/`heads_ap`/`heads_sp`
/// (0 = auto), `m` (required for unmixing), `algos` (vca,nfindr,atgp),
/// `image` (none), `out_dir` (none).
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub train: TrainConfig,
    pub m: Option<usize>,
    pub algos: Vec<EeaAlgorithm>,
    pub image: Option<PathBuf>,
    pub out_dir: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            train: TrainConfig::default(),
            m: None,
            algos: vec![EeaAlgorithm::Vca, EeaAlgorithm::Nfindr, EeaAlgorithm::Atgp],
            image: None,
            out_dir: None,
        }
    }
}

fn parse_num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .trim()
        .parse()
        .map_err(|_| Error::Config(format!("key '{key}': cannot parse '{value}'")))
}

fn parse_algos(value: &str) -> Result<Vec<EeaAlgorithm>> {
    let algos = value
        .split(',')
        .map(|t| t.trim().parse())
        .collect::<Result<Vec<EeaAlgorithm>>>()?;
    if algos.is_empty() {
        return Err(Error::Config("key 'algos': empty list".into()));
    }
    Ok(algos)
}

impl RunConfig {
    /// Apply one key=value pair; used both by the file parser and by CLI
    /// flag overrides.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "lr" => self.train.lr = parse_num(key, value)?,
            "batch" => self.train.batch = parse_num(key, value)?,
            "epochs_an" => self.train.epochs_an = parse_num(key, value)?,
            "epochs_stage1" => self.train.epochs_stage1 = parse_num(key, value)?,
            "epochs_stage2" => self.train.epochs_stage2 = parse_num(key, value)?,
            "w_mse" => self.train.weights.mse = parse_num(key, value)?,
            "w_sad" => self.train.weights.sad = parse_num(key, value)?,
            "w_nonneg" => self.train.weights.nonneg = parse_num(key, value)?,
            "w_minvol" => self.train.weights.minvol = parse_num(key, value)?,
            "nbhd" => self.train.nbhd = NeighborhoodSpec::parse(value.trim())?,
            "seed_params" => self.train.seeds.params = parse_num(key, value)?,
            "seed_shuffle" => self.train.seeds.shuffle = parse_num(key, value)?,
            "seed_eea" => self.train.seeds.eea = parse_num(key, value)?,
            "heads_an" => self.train.heads_an = parse_num(key, value)?,
            "heads_ap" => self.train.heads_ap = parse_num(key, value)?,
            "heads_sp" => self.train.heads_sp = parse_num(key, value)?,
            "m" => self.m = Some(parse_num(key, value)?),
            "algos" => self.algos = parse_algos(value)?,
            "image" => self.image = Some(PathBuf::from(value.trim())),
            "out_dir" => self.out_dir = Some(PathBuf::from(value.trim())),
            other => return Err(Error::Config(format!("unknown key '{other}'"))),
        }
        Ok(())
    }

    /// Parse a flat config file: `key = value` lines, `#` comments, blank
    /// lines ignored.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = RunConfig::default();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| Error::Parse {
                line: lineno + 1,
                msg: format!("expected 'key = value', got '{line}'"),
            })?;
            cfg.set(key.trim(), value).map_err(|e| Error::Parse {
                line: lineno + 1,
                msg: e.to_string(),
            })?;
        }
        cfg.train.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }
}
