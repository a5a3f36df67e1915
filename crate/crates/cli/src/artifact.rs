//! Atomic file output and config-hash provenance.
//!
//! CSV files start with `# config_hash: <hex>`, then `# config:` and the
//! canonical config TOML as `# `-prefixed lines, then the header. JSON files
//! are objects with `config_hash` and `config` fields next to the payload.

use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::CliError;

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Writes `contents` to `dir/name` through a temporary file in `dir`.
pub fn write_atomic(dir: &Path, name: &str, contents: &[u8]) -> Result<PathBuf, CliError> {
    std::fs::create_dir_all(dir)
        .map_err(|e| CliError::io(format!("cannot create {}: {e}", dir.display())))?;
    let target = dir.join(name);
    let mut tmp = tempfile::NamedTempFile::new_in(dir)
        .map_err(|e| CliError::io(format!("cannot create temp file in {}: {e}", dir.display())))?;
    #[cfg(unix)]
    {
        use std::os::unix::fs::PermissionsExt;
        let _ = tmp.as_file().set_permissions(std::fs::Permissions::from_mode(0o644));
    }
    tmp.write_all(contents)
        .and_then(|_| tmp.as_file().sync_all())
        .map_err(|e| CliError::io(format!("cannot write {}: {e}", target.display())))?;
    tmp.persist(&target)
        .map_err(|e| CliError::io(format!("cannot move into {}: {e}", target.display())))?;
    Ok(target)
}

/// Preamble lines for CSV output.
pub fn csv_preamble(hash: &str, canonical: &str) -> String {
    let mut s = format!("config_hash: {hash}\nconfig:\n");
    s.push_str(canonical);
    s
}

#[derive(Serialize)]
struct Stamped<'a, T: Serialize> {
    config_hash: &'a str,
    config: &'a str,
    #[serde(flatten)]
    payload: &'a T,
}

pub fn stamped_json<T: Serialize>(hash: &str, canonical: &str, payload: &T) -> Result<String, CliError> {
    let mut s = serde_json::to_string_pretty(&Stamped {
        config_hash: hash,
        config: canonical,
        payload,
    })
    .map_err(|e| CliError::io(format!("cannot encode JSON: {e}")))?;
    s.push('\n');
    Ok(s)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct FileCheck {
    pub file: String,
    pub embedded_hash: Option<String>,
    pub recomputed_hash: Option<String>,
    /// Hash of the `config.toml` next to the file, when present.
    pub sibling_hash: Option<String>,
    pub ok: bool,
    pub problem: Option<String>,
}

fn embedded_csv(text: &str) -> Option<(String, String)> {
    let mut lines = text.lines();
    let hash = lines.next()?.strip_prefix("# config_hash: ")?.to_string();
    if lines.next()? != "# config:" {
        return None;
    }
    let mut config = String::new();
    for line in lines {
        match line.strip_prefix("# ") {
            Some(rest) => {
                config.push_str(rest);
                config.push('\n');
            }
            None if line == "#" => config.push('\n'),
            None => break,
        }
    }
    Some((hash, config))
}

fn embedded_json(text: &str) -> Option<(String, String)> {
    let value: serde_json::Value = serde_json::from_str(text).ok()?;
    let hash = value.get("config_hash")?.as_str()?.to_string();
    let config = value.get("config")?.as_str()?.to_string();
    Some((hash, config))
}

/// Re-hashes the config embedded in an artifact and compares it with the
/// embedded hash and with a sibling `config.toml`.
pub fn verify_file(path: &Path) -> FileCheck {
    let file = path.display().to_string();
    let fail = |problem: String| FileCheck {
        file: file.clone(),
        embedded_hash: None,
        recomputed_hash: None,
        sibling_hash: None,
        ok: false,
        problem: Some(problem),
    };
    let text = match std::fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) => return fail(format!("cannot read: {e}")),
    };
    let embedded = if path.extension().is_some_and(|e| e == "json") {
        embedded_json(&text)
    } else {
        embedded_csv(&text)
    };
    let Some((hash, config)) = embedded else {
        return fail("no embedded config hash".into());
    };
    let recomputed = sha256_hex(config.as_bytes());
    let sibling = path
        .parent()
        .map(|d| d.join("config.toml"))
        .filter(|p| p.is_file())
        .and_then(|p| std::fs::read_to_string(p).ok())
        .map(|t| sha256_hex(t.as_bytes()));
    let mut problem = None;
    if recomputed != hash {
        problem = Some("embedded config does not match its hash".to_string());
    } else if sibling.as_ref().is_some_and(|s| *s != hash) {
        problem = Some("config.toml next to the file has a different hash".to_string());
    }
    FileCheck {
        file,
        embedded_hash: Some(hash),
        recomputed_hash: Some(recomputed),
        sibling_hash: sibling,
        ok: problem.is_none(),
        problem,
    }
}
