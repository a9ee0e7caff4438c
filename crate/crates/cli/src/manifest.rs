//! Run manifests written beside experiment outputs.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use sha1::{Digest, Sha1};

/// Git blob hash (`sha1("blob <len>\0" ++ bytes)`), so an input can be
/// matched against `git hash-object`.
pub fn git_blob_hash(bytes: &[u8]) -> String {
    let mut h = Sha1::new();
    h.update(format!("blob {}\0", bytes.len()).as_bytes());
    h.update(bytes);
    h.finalize()
        .iter()
        .fold(String::with_capacity(40), |mut s, b| {
            let _ = write!(s, "{b:02x}");
            s
        })
}

fn unix_millis() -> u128 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map_or(0, |d| d.as_millis())
}

pub struct RunManifest {
    command: String,
    args: Vec<String>,
    seed: Option<u64>,
    config: Option<String>,
    inputs: Vec<(PathBuf, String)>,
    outputs: Vec<PathBuf>,
    started_ms: u128,
}

impl RunManifest {
    pub fn start(command: &str, args: Vec<String>) -> Self {
        Self {
            command: command.to_string(),
            args,
            seed: None,
            config: None,
            inputs: Vec::new(),
            outputs: Vec::new(),
            started_ms: unix_millis(),
        }
    }

    pub fn seed(&mut self, seed: u64) {
        self.seed = Some(seed);
    }

    pub fn config(&mut self, dump: String) {
        self.config = Some(dump);
    }

    pub fn input(&mut self, path: &Path, bytes: &[u8]) {
        self.inputs.push((path.to_path_buf(), git_blob_hash(bytes)));
    }

    pub fn output(&mut self, path: &Path) {
        self.outputs.push(path.to_path_buf());
    }

    /// Writes `<primary>.manifest` next to the first output. No-op when the
    /// run produced no files.
    pub fn finish(self) -> std::io::Result<Option<PathBuf>> {
        let Some(primary) = self.outputs.first() else {
            return Ok(None);
        };
        let mut path = primary.clone().into_os_string();
        path.push(".manifest");
        let path = PathBuf::from(path);

        let mut text = String::new();
        let _ = writeln!(text, "command = {}", self.command);
        let _ = writeln!(text, "args = {}", self.args.join(" "));
        if let Some(seed) = self.seed {
            let _ = writeln!(text, "seed = {seed}");
        }
        for (p, hash) in &self.inputs {
            let _ = writeln!(text, "input = {} {hash}", p.display());
        }
        for p in &self.outputs {
            let _ = writeln!(text, "output = {}", p.display());
        }
        let _ = writeln!(text, "started_unix_ms = {}", self.started_ms);
        let _ = writeln!(text, "finished_unix_ms = {}", unix_millis());
        if let Some(cfg) = &self.config {
            text.push_str("[config]\n");
            text.push_str(cfg);
        }
        fs::write(&path, text)?;
        Ok(Some(path))
    }
}
