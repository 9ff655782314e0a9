//! Key directory layout written by `keygen` and consumed by the client
//! commands:
//!
//!   meta.txt      key=value text: preset, fingerprint, circuit geometry
//!   secret.ctls   secret key file (never leaves this directory)
//!   public.ctlp   public key
//!   relin.ctlr    relinearization key
//!   galois.ctlg   rotation key set
//!
//! The secret key file format exists only here; the wire codecs have no
//! notion of it.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use cryptotl_he::ckks::{CkksParams, GaloisKeySet, PublicKey, RelinKey, SecretKey};
use cryptotl_he::layers::{plan_packing, PackingPlan};
use cryptotl_protocol::codec;

use crate::errors::CliError;

const SECRET_MAGIC: &[u8; 4] = b"CTLS";
const SECRET_VERSION: u16 = 1;

pub struct KeyDir {
    pub params: Arc<CkksParams>,
    pub plan: PackingPlan,
    pub meta: KeyMeta,
    pub sk: SecretKey,
    pub pk: PublicKey,
    pub relin: RelinKey,
    pub galois: GaloisKeySet,
}

#[derive(Clone, Debug)]
pub struct KeyMeta {
    pub preset: String,
    pub item_width: usize,
    pub conv_filter: usize,
    pub pool: usize,
    pub seed: u64,
    pub insecure: bool,
    pub fingerprint_hex: String,
}

fn meta_path(dir: &Path) -> PathBuf {
    dir.join("meta.txt")
}

pub fn write_meta(dir: &Path, meta: &KeyMeta) -> Result<(), CliError> {
    let mut f = std::fs::File::create(meta_path(dir))?;
    writeln!(f, "format=cryptotl-keys-v1")?;
    writeln!(f, "preset={}", meta.preset)?;
    writeln!(
        f,
        "security={}",
        if meta.insecure {
            "INSECURE"
        } else {
            "STANDARD-128"
        }
    )?;
    writeln!(f, "fingerprint={}", meta.fingerprint_hex)?;
    writeln!(f, "item_width={}", meta.item_width)?;
    writeln!(f, "conv_filter={}", meta.conv_filter)?;
    writeln!(f, "pool={}", meta.pool)?;
    writeln!(f, "seed={}", meta.seed)?;
    Ok(())
}

pub fn read_meta(dir: &Path) -> Result<KeyMeta, CliError> {
    let text = std::fs::read_to_string(meta_path(dir))
        .map_err(|e| CliError::Data(format!("key metadata: {e}")))?;
    let mut kv = BTreeMap::new();
    for line in text.lines() {
        if let Some((k, v)) = line.split_once('=') {
            kv.insert(k.trim().to_string(), v.trim().to_string());
        }
    }
    let get = |k: &str| -> Result<String, CliError> {
        kv.get(k)
            .cloned()
            .ok_or_else(|| CliError::Data(format!("key metadata missing {k}")))
    };
    let parse = |k: &str| -> Result<u64, CliError> {
        get(k)?
            .parse()
            .map_err(|_| CliError::Data(format!("key metadata field {k} not a number")))
    };
    Ok(KeyMeta {
        preset: get("preset")?,
        item_width: parse("item_width")? as usize,
        conv_filter: parse("conv_filter")? as usize,
        pool: parse("pool")? as usize,
        seed: parse("seed")?,
        insecure: get("security")? == "INSECURE",
        fingerprint_hex: get("fingerprint")?,
    })
}

pub fn write_secret(dir: &Path, sk: &SecretKey, insecure: bool) -> Result<(), CliError> {
    let coeffs = sk.ternary_coeffs();
    let mut out = Vec::with_capacity(40 + coeffs.len());
    out.extend_from_slice(SECRET_MAGIC);
    out.extend_from_slice(&SECRET_VERSION.to_le_bytes());
    out.push(u8::from(insecure)); // security label byte in the header
    out.extend_from_slice(&sk.fingerprint().0);
    out.extend_from_slice(&(coeffs.len() as u32).to_le_bytes());
    out.extend(coeffs.iter().map(|&c| c as u8));
    std::fs::write(dir.join("secret.ctls"), out)?;
    Ok(())
}

pub fn read_secret(dir: &Path, params: &Arc<CkksParams>) -> Result<SecretKey, CliError> {
    let bytes = std::fs::read(dir.join("secret.ctls"))
        .map_err(|e| CliError::Data(format!("secret key: {e}")))?;
    if bytes.len() < 43 || &bytes[..4] != SECRET_MAGIC {
        return Err(CliError::Data("secret key file corrupt".into()));
    }
    let fp = &bytes[7..39];
    if fp != params.fingerprint().0 {
        return Err(CliError::Crypto("secret key fingerprint mismatch".into()));
    }
    let n = u32::from_le_bytes(bytes[39..43].try_into().expect("4 bytes")) as usize;
    if bytes.len() != 43 + n || n != params.degree() {
        return Err(CliError::Data("secret key length mismatch".into()));
    }
    let coeffs: Vec<i8> = bytes[43..].iter().map(|&b| b as i8).collect();
    SecretKey::from_coeffs(params, coeffs).map_err(|e| CliError::Crypto(e.to_string()))
}

/// Load a complete key directory, validating fingerprints along the way.
pub fn load_key_dir(dir: &Path) -> Result<KeyDir, CliError> {
    let meta = read_meta(dir)?;
    let params = CkksParams::preset_by_name(&meta.preset)
        .ok_or_else(|| CliError::Data(format!("unknown preset {} in key metadata", meta.preset)))?;
    if params.fingerprint().to_hex() != meta.fingerprint_hex {
        return Err(CliError::Crypto(
            "key metadata fingerprint does not match preset parameters".into(),
        ));
    }
    let plan = plan_packing(&params, meta.item_width).map_err(CliError::from)?;
    let sk = read_secret(dir, &params)?;
    let pk_bytes = std::fs::read(dir.join("public.ctlp"))?;
    let pk = codec::deserialize_public_key(&pk_bytes, &params)?;
    let relin_bytes = std::fs::read(dir.join("relin.ctlr"))?;
    let relin = codec::deserialize_relin_key(&relin_bytes, &params)?;
    let galois_bytes = std::fs::read(dir.join("galois.ctlg"))?;
    let galois = codec::deserialize_galois_keys(&galois_bytes, &params)?;
    Ok(KeyDir {
        params,
        plan,
        meta,
        sk,
        pk,
        relin,
        galois,
    })
}
