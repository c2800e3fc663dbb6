use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::{bail, Context, Result};
use ff_forge_core::data::{load_split, ImageSet, Split};
use ff_forge_core::ffa::checkpoint::load_network;
use ff_forge_core::FfNetwork;
use serde::de::DeserializeOwned;
use serde::Serialize;

pub const DEFAULT_DATA_DIR: &str = "data/desk";

/// Options shared by every subcommand.
#[derive(Debug, Clone, clap::Args)]
pub struct GlobalArgs {
    /// Worker threads (defaults to the number of cores)
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    /// Dataset root holding `<name>/<split>-images-idx3-ubyte[.gz]`
    #[arg(long = "data-dir", visible_alias = "data", env = "FF_FORGE_DATA", global = true)]
    pub data_dir: Option<PathBuf>,

    /// Output directory (default `runs/<command>-<unix time>`)
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,

    /// JSON run config; flags given on the command line override it
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
}

impl GlobalArgs {
    /// Command-line data dir, then the config's, then the default.
    pub fn data_dir(&self, from_config: Option<PathBuf>) -> PathBuf {
        self.data_dir
            .clone()
            .or(from_config)
            .unwrap_or_else(|| PathBuf::from(DEFAULT_DATA_DIR))
    }
}

pub fn load_config<T: DeserializeOwned + Default>(path: Option<&Path>) -> Result<T> {
    let Some(path) = path else {
        return Ok(T::default());
    };
    let text = fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
}

pub struct RunDir {
    path: PathBuf,
}

impl RunDir {
    pub fn create(out: Option<&Path>, command: &str) -> Result<Self> {
        let path = match out {
            Some(p) => p.to_path_buf(),
            None => {
                let secs = SystemTime::now().duration_since(UNIX_EPOCH)?.as_secs();
                let base = PathBuf::from("runs").join(format!("{command}-{secs}"));
                let mut path = base.clone();
                let mut n = 1;
                while path.exists() {
                    path = PathBuf::from(format!("{}-{n}", base.display()));
                    n += 1;
                }
                path
            }
        };
        fs::create_dir_all(&path).with_context(|| format!("creating {}", path.display()))?;
        Ok(RunDir { path })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn file(&self, name: &str) -> PathBuf {
        self.path.join(name)
    }

    pub fn write(&self, name: &str, bytes: impl AsRef<[u8]>) -> Result<()> {
        let path = self.file(name);
        fs::write(&path, bytes).with_context(|| format!("writing {}", path.display()))
    }

    pub fn write_json<T: Serialize>(&self, name: &str, value: &T) -> Result<()> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        self.write(name, text)
    }
}

pub fn parse_split(name: &str) -> Result<Split> {
    match name {
        "train" => Ok(Split::Train),
        "test" | "t10k" => Ok(Split::Test),
        other => bail!("unknown split '{other}' (expected train or test)"),
    }
}

pub fn load_set(data_dir: &Path, dataset: &str, split: Split, limit: Option<usize>) -> Result<ImageSet> {
    let set = load_split(data_dir, dataset, split)
        .with_context(|| format!("loading {dataset} ({split:?}) from {}", data_dir.display()))?;
    Ok(match limit {
        Some(n) => set.take(n),
        None => set,
    })
}

pub fn load_model(path: &Path) -> Result<FfNetwork> {
    load_network(path).with_context(|| format!("loading model {}", path.display()))
}

pub fn require<T: Clone>(value: &Option<T>, what: &str) -> Result<T> {
    match value {
        Some(v) => Ok(v.clone()),
        None => bail!("missing {what}"),
    }
}
