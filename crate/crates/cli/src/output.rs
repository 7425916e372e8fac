use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::Serialize;

use crate::CliError;

#[derive(Debug, Serialize)]
struct Meta<'a> {
    command: &'a str,
    version: &'a str,
    timestamp_unix: u64,
}

#[derive(Debug, Serialize)]
struct Envelope<'a, T: Serialize> {
    meta: Meta<'a>,
    body: &'a T,
}

/// Writes `bytes` to `path` through a temporary file in the same directory
/// followed by a rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    let dir = path
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .unwrap_or(Path::new("."));
    std::fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("cannot create {}: {e}", dir.display())))?;
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("report");
    let tmp = dir.join(format!(".{name}.{}.tmp", std::process::id()));
    let write = || -> std::io::Result<()> {
        let mut f = std::fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        std::fs::rename(&tmp, path)
    };
    write().map_err(|e| {
        let _ = std::fs::remove_file(&tmp);
        CliError::Io(format!("cannot write {}: {e}", path.display()))
    })
}

/// A report as `{"meta": {...}, "body": ...}`. Only `meta` carries the
/// timestamp, so bodies of identical runs are byte-identical.
pub fn envelope_json<T: Serialize>(command: &str, body: &T) -> String {
    let timestamp_unix = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    let env = Envelope {
        meta: Meta {
            command,
            version: env!("CARGO_PKG_VERSION"),
            timestamp_unix,
        },
        body,
    };
    let mut s = serde_json::to_string_pretty(&env).expect("reports are serializable");
    s.push('\n');
    s
}

pub struct OutDir(PathBuf);

impl OutDir {
    pub fn new(dir: PathBuf) -> Self {
        Self(dir)
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.0.join(name)
    }

    pub fn json<T: Serialize>(&self, name: &str, command: &str, body: &T) -> Result<PathBuf, CliError> {
        let p = self.path(name);
        write_atomic(&p, envelope_json(command, body).as_bytes())?;
        Ok(p)
    }

    pub fn text(&self, name: &str, text: &str) -> Result<PathBuf, CliError> {
        let p = self.path(name);
        write_atomic(&p, text.as_bytes())?;
        Ok(p)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn atomic_write_replaces_and_leaves_no_temporaries() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.json");
        write_atomic(&p, b"one").unwrap();
        write_atomic(&p, b"two").unwrap();
        assert_eq!(std::fs::read_to_string(&p).unwrap(), "two");
        assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 1);
    }

    #[test]
    fn envelope_separates_meta_and_body() {
        let v: serde_json::Value = serde_json::from_str(&envelope_json("price", &vec![1, 2])).unwrap();
        assert_eq!(v["meta"]["command"], "price");
        assert!(v["meta"]["timestamp_unix"].is_u64());
        assert_eq!(v["body"], serde_json::json!([1, 2]));
    }
}
