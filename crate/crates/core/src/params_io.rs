//! Binary parameter files.
//!
//! Layout (little endian): `b"FLPR"`, u32 version, u8 architecture tag,
//! u32 logic length, u32 mutator-state length, then both vectors as f64.

use std::path::Path;

use crate::agents::Architecture;
use crate::error::{Error, Result};
use crate::programs::ProgramEntry;

const MAGIC: &[u8; 4] = b"FLPR";
const VERSION: u32 = 1;
const HEADER_LEN: usize = 4 + 4 + 1 + 4 + 4;

pub fn encode_params(arch: Architecture, entry: &ProgramEntry) -> Vec<u8> {
    let n = entry.logic.len() + entry.mutator_state.len();
    let mut out = Vec::with_capacity(HEADER_LEN + 8 * n);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.push(arch.tag());
    out.extend_from_slice(&(entry.logic.len() as u32).to_le_bytes());
    out.extend_from_slice(&(entry.mutator_state.len() as u32).to_le_bytes());
    for v in entry.logic.iter().chain(&entry.mutator_state) {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode_params(bytes: &[u8]) -> Result<(Architecture, ProgramEntry)> {
    let bad = |m: String| Error::Params(m);
    if bytes.len() < HEADER_LEN || &bytes[..4] != MAGIC {
        return Err(bad("bad magic".into()));
    }
    let u32_at = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().unwrap());
    let version = u32_at(4);
    if version != VERSION {
        return Err(bad(format!("unsupported version {version}")));
    }
    let arch = Architecture::from_tag(bytes[8]).ok_or_else(|| bad(format!("unknown architecture tag {}", bytes[8])))?;
    let (n_logic, n_mut) = (u32_at(9) as usize, u32_at(13) as usize);
    if n_logic != arch.param_len() {
        return Err(Error::ParamsLength {
            expected: arch.param_len(),
            got: n_logic,
        });
    }
    let body = &bytes[HEADER_LEN..];
    if body.len() != 8 * (n_logic + n_mut) {
        return Err(bad(format!(
            "expected {} value bytes, found {}",
            8 * (n_logic + n_mut),
            body.len()
        )));
    }
    let mut values = body.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap()));
    let logic: Vec<f64> = values.by_ref().take(n_logic).collect();
    let mutator_state: Vec<f64> = values.collect();
    if logic.iter().chain(&mutator_state).any(|v| !v.is_finite()) {
        return Err(bad("non-finite value".into()));
    }
    Ok((arch, ProgramEntry { logic, mutator_state }))
}

pub fn save_params(path: &Path, arch: Architecture, entry: &ProgramEntry) -> Result<()> {
    std::fs::write(path, encode_params(arch, entry))?;
    Ok(())
}

pub fn load_params(path: &Path) -> Result<(Architecture, ProgramEntry)> {
    decode_params(&std::fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agents::{init_extended, init_minimal};
    use proptest::prelude::*;

    #[test]
    fn round_trip_init() {
        for (arch, logic) in [(Architecture::Minimal, init_minimal()), (Architecture::Extended, init_extended())] {
            let entry = ProgramEntry {
                mutator_state: vec![0.5; 3],
                logic,
            };
            let (a, e) = decode_params(&encode_params(arch, &entry)).unwrap();
            assert_eq!(a, arch);
            assert_eq!(e, entry);
        }
    }

    #[test]
    fn rejects_corruption() {
        let entry = ProgramEntry {
            logic: init_minimal(),
            mutator_state: vec![],
        };
        let good = encode_params(Architecture::Minimal, &entry);
        assert!(decode_params(&good[..good.len() - 1]).is_err());
        let mut bad = good.clone();
        bad[0] = b'X';
        assert!(decode_params(&bad).is_err());
        let mut bad = good.clone();
        bad[8] = 9;
        assert!(decode_params(&bad).is_err());
        let mut bad = good.clone();
        bad[8] = Architecture::Extended.tag();
        assert!(matches!(decode_params(&bad), Err(Error::ParamsLength { .. })));
        let mut bad = good;
        let nan = f64::NAN.to_le_bytes();
        bad[HEADER_LEN..HEADER_LEN + 8].copy_from_slice(&nan);
        assert!(decode_params(&bad).is_err());
    }

    proptest! {
        #[test]
        fn round_trip_random(logic in proptest::collection::vec(-1e6f64..1e6, MINIMAL), m in proptest::collection::vec(0.0f64..1.0, 0..8)) {
            let entry = ProgramEntry { logic, mutator_state: m };
            let (_, back) = decode_params(&encode_params(Architecture::Minimal, &entry)).unwrap();
            prop_assert_eq!(back, entry);
        }
    }

    const MINIMAL: usize = crate::agents::MINIMAL_LEN;
}
