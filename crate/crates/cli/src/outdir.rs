//! Output directory management: exclusive lockfile, data-file writers,
//! and the run-metadata file (the only place timestamps live, so data
//! outputs stay byte-identical across reruns).

use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use foglab_core::report::KvDoc;
use foglab_core::{Error, Result};

pub struct RunDir {
    path: PathBuf,
    lock: PathBuf,
    started: Instant,
    started_unix: u64,
    meta_extra: Vec<(String, String)>,
}

impl RunDir {
    pub fn create(path: &Path) -> Result<Self> {
        fs::create_dir_all(path)?;
        let lock = path.join(".lock");
        match fs::OpenOptions::new().write(true).create_new(true).open(&lock) {
            Ok(_) => {}
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => {
                return Err(Error::Validation(format!(
                    "output directory {} is locked by another run (delete {} if stale)",
                    path.display(),
                    lock.display()
                )));
            }
            Err(e) => return Err(e.into()),
        }
        let started_unix = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0);
        Ok(Self {
            path: path.to_path_buf(),
            lock,
            started: Instant::now(),
            started_unix,
            meta_extra: Vec::new(),
        })
    }

    pub fn write(&self, name: &str, contents: impl AsRef<[u8]>) -> Result<()> {
        let target = self.path.join(name);
        if let Some(parent) = target.parent() {
            fs::create_dir_all(parent)?;
        }
        fs::write(target, contents)?;
        Ok(())
    }

    pub fn write_kv(&self, name: &str, doc: &KvDoc) -> Result<()> {
        self.write(name, doc.render())
    }

    /// Queues a timing/diagnostic entry for run_meta.kv.
    pub fn meta(&mut self, key: &str, value: impl std::fmt::Display) {
        self.meta_extra.push((key.to_string(), value.to_string()));
    }

    /// Writes run_meta.kv and releases the lock.
    pub fn finish(self, command: &str) -> Result<()> {
        let mut doc = KvDoc::new();
        doc.push("report", "run_meta");
        doc.push("command", command);
        doc.push("started_unix", self.started_unix);
        doc.push("duration_s", self.started.elapsed().as_secs_f64());
        for (k, v) in &self.meta_extra {
            doc.push(k, v);
        }
        self.write("run_meta.kv", doc.render())?;
        Ok(())
    }
}

impl Drop for RunDir {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.lock);
    }
}
