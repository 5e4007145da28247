use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;
use spu_core::Result;

/// Collects the files a run writes and records them in `manifest.json`.
pub struct Output {
    dir: PathBuf,
    artifacts: Vec<String>,
    started: Instant,
}

#[derive(Serialize)]
struct Manifest<'a, C: Serialize> {
    subcommand: &'a str,
    version: &'a str,
    seed: u64,
    chains: usize,
    config: &'a C,
    artifacts: &'a [String],
    wall_clock_seconds: f64,
}

impl Output {
    pub fn create(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir)?;
        Ok(Self { dir: dir.to_path_buf(), artifacts: Vec::new(), started: Instant::now() })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    pub fn write(&mut self, name: &str, f: impl FnOnce(&mut dyn Write) -> Result<()>) -> Result<()> {
        let mut w = BufWriter::new(File::create(self.path(name))?);
        f(&mut w)?;
        w.flush()?;
        self.artifacts.push(name.to_string());
        Ok(())
    }

    pub fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        self.write(name, |w| {
            serde_json::to_writer_pretty(&mut *w, value)?;
            writeln!(w)?;
            Ok(())
        })
    }

    pub fn text(&mut self, name: &str, body: &str) -> Result<()> {
        self.write(name, |w| Ok(w.write_all(body.as_bytes())?))
    }

    pub fn finish<C: Serialize>(self, subcommand: &str, seed: u64, chains: usize, config: &C) -> Result<()> {
        let m = Manifest {
            subcommand,
            version: env!("CARGO_PKG_VERSION"),
            seed,
            chains,
            config,
            artifacts: &self.artifacts,
            wall_clock_seconds: self.started.elapsed().as_secs_f64(),
        };
        let mut w = BufWriter::new(File::create(self.path("manifest.json"))?);
        serde_json::to_writer_pretty(&mut w, &m)?;
        writeln!(w)?;
        w.flush()?;
        Ok(())
    }
}
