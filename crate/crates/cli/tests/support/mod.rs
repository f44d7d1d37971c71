//! Drives the `tactile` binary inside a scratch directory.

#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

pub struct Run {
    pub dir: tempfile::TempDir,
}

impl Run {
    pub fn new() -> Self {
        Self {
            dir: tempfile::tempdir().expect("scratch dir"),
        }
    }

    pub fn path(&self, rel: &str) -> PathBuf {
        self.dir.path().join(rel)
    }

    pub fn write(&self, rel: &str, text: &str) -> PathBuf {
        let p = self.path(rel);
        if let Some(parent) = p.parent() {
            std::fs::create_dir_all(parent).unwrap();
        }
        std::fs::write(&p, text).unwrap();
        p
    }

    pub fn tactile(&self, args: &[&str]) -> Output {
        Command::new(env!("CARGO_BIN_EXE_tactile"))
            .args(args)
            .current_dir(self.dir.path())
            .env("RUST_LOG", "warn")
            .output()
            .expect("binary runs")
    }

    /// Runs and asserts success.
    pub fn ok(&self, args: &[&str]) -> Output {
        let out = self.tactile(args);
        assert!(
            out.status.success(),
            "tactile {args:?} failed ({:?}):\n{}",
            out.status.code(),
            String::from_utf8_lossy(&out.stderr)
        );
        out
    }

    /// Renders a translating-cap sequence with a calibration set into
    /// `data/` and builds `cal/table.ctab` from it.
    pub fn sequence(&self, frames: usize, seed: u64) {
        self.write(
            "seq.toml",
            &format!("seed = {seed}\n[render]\nframes = {frames}\n[calibration_set]\nn_positions = 5\n"),
        );
        self.ok(&["--config", "seq.toml", "--out", "data", "render"]);
        self.ok(&["--out", "cal", "calibrate", "--manifest", "data/calibration/manifest.json"]);
    }
}

pub fn read(path: &Path) -> Vec<u8> {
    std::fs::read(path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

pub fn json(path: &Path) -> serde_json::Value {
    serde_json::from_slice(&read(path)).unwrap()
}
