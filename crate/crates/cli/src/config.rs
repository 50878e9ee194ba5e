use std::path::{Path, PathBuf};

use anyhow::Context;
use dstdoctor::bias::CountingPolicy;
use dstdoctor::eval::FuzzyMode;
use dstdoctor::io::Format;
use serde::{Deserialize, Serialize};

pub const DEFAULT_SEED: u64 = 20211;
pub const DEFAULT_OUT_DIR: &str = "dstdoctor-out";
pub const CONFIG_ENV: &str = "DSTDOCTOR_CONFIG";

/// Contents of the `--config` TOML file. Every key is optional; command-line
/// flags win over the file.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seed: Option<u64>,
    pub jobs: Option<usize>,
    pub out_dir: Option<PathBuf>,
    pub format: Option<Format>,
    pub multi_value: Option<bool>,
    #[serde(default)]
    pub paths: Paths,
    #[serde(default)]
    pub check: CheckSection,
    #[serde(default)]
    pub bias: BiasSection,
    #[serde(default)]
    pub eval: EvalSection,
    #[serde(default)]
    pub substitute: SubstituteSection,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Paths {
    pub train: Option<PathBuf>,
    pub valid: Option<PathBuf>,
    pub test: Option<PathBuf>,
    pub ontology: Option<PathBuf>,
    pub database: Option<PathBuf>,
    pub rules: Option<PathBuf>,
    pub lexicon: Option<PathBuf>,
    pub synonyms: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckSection {
    pub sides: Option<String>,
    pub allow_overwrite: Option<bool>,
    pub strip_diacritics: Option<bool>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BiasSection {
    pub policy: Option<CountingPolicy>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalSection {
    pub fuzzy_threshold: Option<f64>,
    pub fuzzy_mode: Option<FuzzyMode>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SubstituteSection {
    pub perturb_numeric: Option<bool>,
}

impl RunConfig {
    /// Reads `explicit`, else `$DSTDOCTOR_CONFIG`, else returns defaults.
    /// Relative paths inside the file resolve against the file's directory.
    pub fn load(explicit: Option<&Path>) -> anyhow::Result<(RunConfig, Option<PathBuf>)> {
        let path = match explicit {
            Some(p) => Some(p.to_path_buf()),
            None => std::env::var_os(CONFIG_ENV)
                .filter(|v| !v.is_empty())
                .map(PathBuf::from),
        };
        let Some(path) = path else {
            return Ok((RunConfig::default(), None));
        };
        let text = std::fs::read_to_string(&path).with_context(|| format!("reading config {}", path.display()))?;
        let mut cfg: RunConfig = toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        cfg.rebase(&base);
        Ok((cfg, Some(path)))
    }

    fn rebase(&mut self, base: &Path) {
        let fix = |p: &mut Option<PathBuf>| {
            if let Some(path) = p {
                if path.is_relative() {
                    *path = base.join(&*path);
                }
            }
        };
        let p = &mut self.paths;
        for slot in [
            &mut p.train,
            &mut p.valid,
            &mut p.test,
            &mut p.ontology,
            &mut p.database,
            &mut p.rules,
            &mut p.lexicon,
            &mut p.synonyms,
        ] {
            fix(slot);
        }
        fix(&mut self.out_dir);
    }
}
