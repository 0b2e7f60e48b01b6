//! Resolved configurations, run records and output helpers.

use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use nearfar::cohort::{load_cohort, Cohort, Schema};
use nearfar::matching::{read_design_csv, strengthen, DistanceSpec, MatchedDesign};
use nearfar::{Error, Result};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;

/// Environment variable consulted when `--seed` is absent.
pub const SEED_ENV: &str = "NEARFAR_SEED";

fn io_error(e: std::io::Error, path: &Path) -> Error {
    Error::Io(std::io::Error::new(
        e.kind(),
        format!("{}: {e}", path.display()),
    ))
}

/// Reads a whole text file, naming it in any error.
pub fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| io_error(e, path))
}

/// Process-wide settings shared by every subcommand.
pub struct Context {
    pub out_dir: PathBuf,
    pub seed_flag: Option<u64>,
    pub workers: usize,
    pub config: Option<PathBuf>,
}

impl Context {
    /// Seed for a fresh configuration: the flag, then the environment, then `fallback`.
    pub fn seed_or(&self, fallback: u64) -> Result<u64> {
        if let Some(s) = self.seed_flag {
            return Ok(s);
        }
        match std::env::var(SEED_ENV) {
            Ok(v) => v.trim().parse().map_err(|_| {
                Error::validation(format!("{SEED_ENV}={v:?} is not an unsigned integer"))
            }),
            Err(_) => Ok(fallback),
        }
    }

    /// Loads `--config` if given. A run record contributes its `config` field.
    pub fn load<T: DeserializeOwned>(&self) -> Result<Option<T>> {
        let Some(path) = &self.config else {
            return Ok(None);
        };
        let text = read(path)?;
        let mut value: Value = serde_json::from_str(&text)?;
        if value.get("tool").and_then(Value::as_str) == Some("nearfar") {
            value = value
                .get_mut("config")
                .map(Value::take)
                .unwrap_or(Value::Null);
        }
        Ok(Some(serde_json::from_value(value)?))
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.out_dir.join(name)
    }

    pub fn create(&self, name: &str) -> Result<BufWriter<File>> {
        std::fs::create_dir_all(&self.out_dir).map_err(|e| io_error(e, &self.out_dir))?;
        let path = self.path(name);
        Ok(BufWriter::new(
            File::create(&path).map_err(|e| io_error(e, &path))?,
        ))
    }

    pub fn write_json<T: Serialize>(&self, name: &str, value: &T) -> Result<()> {
        let mut w = self.create(name)?;
        serde_json::to_writer_pretty(&mut w, value)?;
        use std::io::Write;
        writeln!(w)?;
        Ok(())
    }

    /// Writes `<subcommand>.run.json` describing this run.
    pub fn record<T: Serialize>(
        &self,
        subcommand: &str,
        seed: Option<u64>,
        config: &T,
        outputs: &[&str],
    ) -> Result<()> {
        let record = RunRecord {
            tool: "nearfar",
            version: env!("CARGO_PKG_VERSION"),
            subcommand,
            seed,
            workers: self.workers,
            config,
            outputs,
        };
        self.write_json(&format!("{subcommand}.run.json"), &record)
    }
}

#[derive(Serialize)]
struct RunRecord<'a, T: Serialize> {
    tool: &'static str,
    version: &'static str,
    subcommand: &'a str,
    seed: Option<u64>,
    workers: usize,
    config: &'a T,
    outputs: &'a [&'a str],
}

/// Cohort file plus its column mapping.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CohortSource {
    pub cohort: PathBuf,
    #[serde(default)]
    pub schema: Schema,
}

impl CohortSource {
    pub fn from_args(path: Option<&Path>, schema: Option<&Path>) -> Result<Self> {
        let cohort = path
            .ok_or_else(|| Error::validation("--cohort is required unless --config is given"))?
            .to_path_buf();
        let schema = match schema {
            Some(p) => serde_json::from_str(&read(p)?)?,
            None => Schema::default(),
        };
        Ok(CohortSource { cohort, schema })
    }

    pub fn load(&self) -> Result<Cohort> {
        load_cohort(&self.cohort, &self.schema)
    }
}

/// A design read from disk, or built by matching.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DesignSource {
    #[serde(default)]
    pub design: Option<PathBuf>,
    #[serde(default)]
    pub distance: DistanceSpec,
}

impl DesignSource {
    pub fn resolve(&self, cohort: &Cohort) -> Result<MatchedDesign> {
        match &self.design {
            Some(p) => read_design_csv(File::open(p).map_err(|e| io_error(e, p))?, cohort),
            None => strengthen(cohort, &self.distance),
        }
    }
}
