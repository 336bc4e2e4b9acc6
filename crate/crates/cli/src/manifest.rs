//! Per-stage run manifests and content hashes.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const MANIFEST_FILE: &str = "manifest.json";
/// Bumped whenever a stage's artifact layout changes.
pub const ARTIFACT_VERSION: u32 = 1;

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Every file under `dir` except the manifest, keyed by `/`-separated relative path.
pub fn hash_tree(dir: &Path) -> std::io::Result<BTreeMap<String, String>> {
    fn walk(root: &Path, dir: &Path, out: &mut BTreeMap<String, String>) -> std::io::Result<()> {
        let mut entries: Vec<_> = fs::read_dir(dir)?.collect::<Result<_, _>>()?;
        entries.sort_by_key(|e| e.file_name());
        for e in entries {
            let path = e.path();
            if e.file_type()?.is_dir() {
                walk(root, &path, out)?;
                continue;
            }
            let rel = path.strip_prefix(root).expect("walked from root");
            let key = rel.components().map(|c| c.as_os_str().to_string_lossy()).collect::<Vec<_>>().join("/");
            if key != MANIFEST_FILE {
                out.insert(key, sha256_hex(&fs::read(&path)?));
            }
        }
        Ok(())
    }
    let mut out = BTreeMap::new();
    walk(dir, dir, &mut out)?;
    Ok(out)
}

/// Hash of a `name -> hash` listing.
pub fn hash_listing(listing: &BTreeMap<String, String>) -> String {
    let mut text = String::new();
    for (k, v) in listing {
        text.push_str(k);
        text.push('\t');
        text.push_str(v);
        text.push('\n');
    }
    sha256_hex(text.as_bytes())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageManifest {
    pub stage: String,
    pub version: u32,
    pub seed: Option<u64>,
    pub inputs_hash: String,
    pub config_hash: String,
    pub outputs: BTreeMap<String, String>,
    pub elapsed_ms: u64,
}

impl StageManifest {
    pub fn outputs_hash(&self) -> String {
        hash_listing(&self.outputs)
    }

    pub fn load(dir: &Path) -> Option<Self> {
        let text = fs::read_to_string(dir.join(MANIFEST_FILE)).ok()?;
        serde_json::from_str(&text).ok()
    }

    pub fn write(&self, dir: &Path) -> std::io::Result<()> {
        let text = serde_json::to_string_pretty(self).expect("manifest serializes");
        fs::write(dir.join(MANIFEST_FILE), text + "\n")
    }

    /// True when the files on disk are exactly the recorded outputs.
    pub fn verify(&self, dir: &Path) -> bool {
        hash_tree(dir).is_ok_and(|t| t == self.outputs)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageEntry {
    pub seed: Option<u64>,
    pub inputs_hash: String,
    pub config_hash: String,
    pub outputs_hash: String,
}

/// The run directory's top-level manifest. Holds no timings, so identical
/// runs produce identical bytes.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct RunManifest {
    pub version: u32,
    pub stages: BTreeMap<String, StageEntry>,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tree_hash_skips_manifest_and_tracks_content() {
        let dir = tempfile::tempdir().unwrap();
        fs::create_dir_all(dir.path().join("sub")).unwrap();
        fs::write(dir.path().join("a.txt"), "a").unwrap();
        fs::write(dir.path().join("sub/b.txt"), "b").unwrap();
        fs::write(dir.path().join(MANIFEST_FILE), "{}").unwrap();
        let t = hash_tree(dir.path()).unwrap();
        assert_eq!(t.keys().cloned().collect::<Vec<_>>(), vec!["a.txt", "sub/b.txt"]);
        // sha256("a")
        assert_eq!(t["a.txt"], "ca978112ca1bbdcafac231b39a23dc4da786eff8147c4e72b9807785afee48bb");
        let m = StageManifest {
            stage: "x".into(),
            version: ARTIFACT_VERSION,
            seed: None,
            inputs_hash: String::new(),
            config_hash: String::new(),
            outputs: t,
            elapsed_ms: 0,
        };
        assert!(m.verify(dir.path()));
        fs::write(dir.path().join("a.txt"), "changed").unwrap();
        assert!(!m.verify(dir.path()));
    }
}
