//! Deterministic file emission: every file starts with one comment line
//! carrying (version, master seed, config hash) so identical effective
//! configurations reproduce identical bytes. CSV uses `.` decimals, `,`
//! delimiters and LF line endings.

use std::path::{Path, PathBuf};

use crate::CliError;

#[derive(Debug, Clone)]
pub struct OutputMeta {
    pub seed: u64,
    pub config_hash: String,
}

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

impl OutputMeta {
    pub fn comment_line(&self) -> String {
        format!(
            "# cedent v{} seed={} config={}\n",
            VERSION, self.seed, self.config_hash
        )
    }
}

pub fn write_file(dir: &Path, name: &str, content: &str) -> Result<PathBuf, CliError> {
    std::fs::create_dir_all(dir)
        .map_err(|e| CliError::Io(format!("cannot create {}: {e}", dir.display())))?;
    let path = dir.join(name);
    std::fs::write(&path, content)
        .map_err(|e| CliError::Io(format!("cannot write {}: {e}", path.display())))?;
    Ok(path)
}

pub fn write_csv(
    dir: &Path,
    name: &str,
    meta: &OutputMeta,
    header: &str,
    rows: impl IntoIterator<Item = String>,
) -> Result<PathBuf, CliError> {
    let mut content = meta.comment_line();
    content.push_str(header);
    content.push('\n');
    for row in rows {
        content.push_str(&row);
        content.push('\n');
    }
    write_file(dir, name, &content)
}

pub fn write_json<T: serde::Serialize>(
    dir: &Path,
    name: &str,
    value: &T,
) -> Result<PathBuf, CliError> {
    let mut content = serde_json::to_string_pretty(value)
        .map_err(|e| CliError::Io(format!("serialization failed: {e}")))?;
    content.push('\n');
    write_file(dir, name, &content)
}
