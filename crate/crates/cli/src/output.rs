//! Run directory writer.

use std::fs;
use std::path::{Path, PathBuf};

use pact_core::io::{self, Tensor};
use pact_core::Image;

use crate::config::Settings;
use crate::error::{CliError, Result};

pub const MANIFEST: &str = "manifest.txt";

pub struct Output {
    pub dir: PathBuf,
}

impl Output {
    pub fn create(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir).map_err(|e| CliError::Write {
            path: dir.to_path_buf(),
            source: e,
        })?;
        Ok(Self {
            dir: dir.to_path_buf(),
        })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    fn write(&self, name: &str, bytes: &[u8]) -> Result<()> {
        let path = self.path(name);
        fs::write(&path, bytes).map_err(|e| CliError::Write { path, source: e })
    }

    pub fn tensors(&self, name: &str, tensors: &[Tensor]) -> Result<()> {
        self.write(&format!("{name}.padt"), &io::encode(tensors)?)
    }

    /// `name.padt` plus a `name.pgm` preview.
    pub fn image(&self, name: &str, im: &Image) -> Result<()> {
        self.tensors(name, &io::image_records(im))?;
        self.write(&format!("{name}.pgm"), &io::pgm_bytes(im))
    }

    pub fn csv(&self, name: &str, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
        let mut text = header.join(",");
        text.push('\n');
        for r in rows {
            text.push_str(&r.join(","));
            text.push('\n');
        }
        self.write(&format!("{name}.csv"), text.as_bytes())
    }

    /// Records the command, its file arguments, and every setting.
    pub fn manifest(&self, command: &str, args: &[(&str, String)], s: &Settings) -> Result<()> {
        let mut lines = vec![format!("command = {command}")];
        for (k, v) in args {
            lines.push(format!("arg.{k} = {v}"));
        }
        lines.extend(s.to_lines());
        lines.push(String::new());
        self.write(MANIFEST, lines.join("\n").as_bytes())
    }
}

/// Shortest round-trip text form of a float.
pub fn num(v: f64) -> String {
    format!("{v}")
}
