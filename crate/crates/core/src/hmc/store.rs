//! Draw store: a column-major little-endian `f64` file plus a text manifest.

use std::fs;
use std::path::Path;

use sha2::{Digest, Sha256};

use super::{ChainStats, HmcError, PosteriorDraws, SamplerConfig};

const MANIFEST: &str = "manifest.txt";
const VALUES: &str = "draws.f64";
const HEADER: &str = "stepturn-draws v1";

pub(crate) fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Hash of the serialized sampler configuration.
pub fn config_hash(config: &SamplerConfig) -> String {
    sha256_hex(serde_json::to_string(config).expect("config serializes").as_bytes())
}

/// Write `draws` into directory `dir` (created if needed). Parameter `j`
/// occupies a contiguous block of `n_chains * n_kept` values, chain by chain.
pub fn save_draws(draws: &PosteriorDraws, dir: &Path) -> Result<(), HmcError> {
    fs::create_dir_all(dir)?;
    let d = draws.n_params();
    let mut bytes = Vec::with_capacity(draws.values.len() * 8);
    for j in 0..d {
        for k in 0..draws.n_total() {
            bytes.extend_from_slice(&draws.pooled_draw(k)[j].to_le_bytes());
        }
    }
    let mut m = String::new();
    m.push_str(HEADER);
    m.push('\n');
    m.push_str(&format!("seed = {}\n", draws.seed));
    m.push_str(&format!("n_chains = {}\n", draws.n_chains));
    m.push_str(&format!("n_kept = {}\n", draws.n_kept));
    m.push_str(&format!("n_params = {d}\n"));
    m.push_str(&format!("values_sha256 = {}\n", sha256_hex(&bytes)));
    m.push_str(&format!("config_sha256 = {}\n", config_hash(&draws.config)));
    m.push_str(&format!("config = {}\n", serde_json::to_string(&draws.config).expect("config serializes")));
    m.push_str(&format!("chain_stats = {}\n", serde_json::to_string(&draws.chain_stats).expect("stats serialize")));
    m.push_str("names:\n");
    for n in &draws.names {
        m.push_str(n);
        m.push('\n');
    }
    fs::write(dir.join(VALUES), bytes)?;
    fs::write(dir.join(MANIFEST), m)?;
    Ok(())
}

fn mismatch(msg: impl Into<String>) -> HmcError {
    HmcError::ManifestMismatch(msg.into())
}

/// Read a store written by [`save_draws`], checking sizes and hashes.
pub fn load_draws(dir: &Path) -> Result<PosteriorDraws, HmcError> {
    let text = fs::read_to_string(dir.join(MANIFEST))?;
    let bytes = fs::read(dir.join(VALUES))?;
    let mut lines = text.lines();
    if lines.next() != Some(HEADER) {
        return Err(mismatch("unrecognized manifest header"));
    }
    let mut fields = std::collections::HashMap::new();
    let mut names = Vec::new();
    let mut in_names = false;
    for line in lines {
        if in_names {
            names.push(line.to_string());
        } else if line == "names:" {
            in_names = true;
        } else if let Some((k, v)) = line.split_once(" = ") {
            fields.insert(k.to_string(), v.to_string());
        } else {
            return Err(mismatch(format!("bad manifest line {line:?}")));
        }
    }
    let get = |k: &str| fields.get(k).ok_or_else(|| mismatch(format!("missing field {k}")));
    let num = |k: &str| -> Result<u64, HmcError> { get(k)?.parse().map_err(|_| mismatch(format!("bad {k}"))) };
    let seed = num("seed")?;
    let n_chains = num("n_chains")? as usize;
    let n_kept = num("n_kept")? as usize;
    let d = num("n_params")? as usize;
    if names.len() != d {
        return Err(mismatch(format!("{} names for {d} parameters", names.len())));
    }
    if bytes.len() != d * n_chains * n_kept * 8 {
        return Err(mismatch(format!("value file has {} bytes, expected {}", bytes.len(), d * n_chains * n_kept * 8)));
    }
    if sha256_hex(&bytes) != *get("values_sha256")? {
        return Err(mismatch("value file hash differs"));
    }
    let config: SamplerConfig = serde_json::from_str(get("config")?).map_err(|e| mismatch(e.to_string()))?;
    if config_hash(&config) != *get("config_sha256")? {
        return Err(mismatch("config hash differs"));
    }
    if config.seed != seed {
        return Err(mismatch("seed differs from config"));
    }
    let chain_stats: Vec<ChainStats> = serde_json::from_str(get("chain_stats")?).map_err(|e| mismatch(e.to_string()))?;
    let total = n_chains * n_kept;
    let mut values = vec![0.0; total * d];
    for (idx, chunk) in bytes.chunks_exact(8).enumerate() {
        let (j, k) = (idx / total, idx % total);
        values[k * d + j] = f64::from_le_bytes(chunk.try_into().expect("8-byte chunk"));
    }
    Ok(PosteriorDraws { names, n_chains, n_kept, values, seed, config, chain_stats })
}
