use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use storage_bidding::error::{Error, Result};
use storage_bidding::experiments::Provenance;

/// Output directory plus the provenance stamped on every table.
pub struct Sink {
    dir: PathBuf,
    pub prov: Provenance,
}

impl Sink {
    pub fn new(dir: &Path, config_bytes: &[u8], seed: u64) -> Result<Self> {
        fs::create_dir_all(dir)?;
        let prov = Provenance {
            config_hash: hex::encode(Sha256::digest(config_bytes)),
            seed,
            version: env!("CARGO_PKG_VERSION").to_string(),
        };
        Ok(Self { dir: dir.to_path_buf(), prov })
    }

    pub fn file(&self, name: &str) -> Result<BufWriter<File>> {
        Ok(BufWriter::new(File::create(self.dir.join(name))?))
    }

    pub fn json<T: Serialize>(&self, name: &str, value: &T) -> Result<()> {
        let w = self.file(name)?;
        serde_json::to_writer_pretty(w, value)?;
        Ok(())
    }

    /// Writes `value` wrapped with the provenance fields.
    pub fn stamped_json<T: Serialize>(&self, name: &str, value: &T) -> Result<()> {
        #[derive(Serialize)]
        struct Stamped<'a, T> {
            provenance: &'a Provenance,
            result: &'a T,
        }
        self.json(name, &Stamped { provenance: &self.prov, result: value })
    }

    /// Long-format plot table: one `(x, y, metric, value)` row per point.
    pub fn long_csv(&self, name: &str, axes: [&str; 2], rows: impl IntoIterator<Item = (f64, f64, String, f64)>) -> Result<()> {
        let mut w = csv::Writer::from_writer(self.file(name)?);
        w.write_record([axes[0], axes[1], "metric", "value", "config_hash", "seed", "version"])?;
        let seed = self.prov.seed.to_string();
        for (x, y, metric, value) in rows {
            w.write_record([
                x.to_string(),
                y.to_string(),
                metric,
                value.to_string(),
                self.prov.config_hash.clone(),
                seed.clone(),
                self.prov.version.clone(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

pub fn read_config(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))
}
