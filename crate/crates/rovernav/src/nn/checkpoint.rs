//! Binary checkpoint format.
//!
//! Layout: magic `SVRL`, a u32 format version, the network configuration,
//! a layer manifest (name, shape list), then the parameter arrays as
//! little-endian f64 in manifest order. Round-trips are bit-exact.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::network::{NetConfig, NetKind, NnError, PolicyNetwork};
use super::tensor::Tensor;

const MAGIC: &[u8; 4] = b"SVRL";
const FORMAT_VERSION: u32 = 1;

fn kind_tag(kind: NetKind) -> u8 {
    match kind {
        NetKind::Cnn => 0,
        NetKind::CnnLstm => 1,
        NetKind::Mlp => 2,
    }
}

fn kind_from_tag(tag: u8) -> Result<NetKind, NnError> {
    match tag {
        0 => Ok(NetKind::Cnn),
        1 => Ok(NetKind::CnnLstm),
        2 => Ok(NetKind::Mlp),
        other => Err(NnError::BadCheckpoint(format!("unknown network kind tag {other}"))),
    }
}

pub fn save(net: &PolicyNetwork, path: &Path) -> Result<(), NnError> {
    let file = File::create(path)?;
    let mut w = BufWriter::new(file);
    w.write_all(MAGIC)?;
    w.write_all(&FORMAT_VERSION.to_le_bytes())?;

    let c = &net.config;
    w.write_all(&[kind_tag(c.kind)])?;
    for v in [
        c.obs_width,
        c.obs_height,
        c.conv1_filters,
        c.conv2_filters,
        c.dense_units,
        c.lstm_units,
        c.mlp_units,
    ] {
        w.write_all(&(v as u32).to_le_bytes())?;
    }

    let (names, tensors) = net.raw_tensors();
    w.write_all(&(names.len() as u32).to_le_bytes())?;
    for (name, t) in names.iter().zip(tensors) {
        let bytes = name.as_bytes();
        w.write_all(&(bytes.len() as u32).to_le_bytes())?;
        w.write_all(bytes)?;
        w.write_all(&(t.shape().len() as u32).to_le_bytes())?;
        for &d in t.shape() {
            w.write_all(&(d as u64).to_le_bytes())?;
        }
    }
    for t in tensors {
        for &v in t.data() {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn load(path: &Path) -> Result<PolicyNetwork, NnError> {
    let file = File::open(path)?;
    let mut r = BufReader::new(file);

    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(NnError::BadCheckpoint(format!("bad magic {magic:?}")));
    }
    let version = read_u32(&mut r)?;
    if version != FORMAT_VERSION {
        return Err(NnError::BadCheckpoint(format!("unsupported format version {version}")));
    }

    let mut tag = [0u8; 1];
    r.read_exact(&mut tag)?;
    let kind = kind_from_tag(tag[0])?;
    let mut dims = [0usize; 7];
    for d in dims.iter_mut() {
        *d = read_u32(&mut r)? as usize;
    }
    let config = NetConfig {
        kind,
        obs_width: dims[0],
        obs_height: dims[1],
        conv1_filters: dims[2],
        conv2_filters: dims[3],
        dense_units: dims[4],
        lstm_units: dims[5],
        mlp_units: dims[6],
    };

    // A freshly built network defines the expected manifest; the file must
    // match it exactly.
    let reference = PolicyNetwork::new(&config, 0)?;
    let (ref_names, ref_tensors) = reference.raw_tensors();

    let n_layers = read_u32(&mut r)? as usize;
    if n_layers != ref_names.len() {
        return Err(NnError::BadCheckpoint(format!(
            "layer count {n_layers} does not match architecture ({} expected)",
            ref_names.len()
        )));
    }
    let mut shapes = Vec::with_capacity(n_layers);
    for (i, expected_name) in ref_names.iter().enumerate() {
        let name_len = read_u32(&mut r)? as usize;
        if name_len > 256 {
            return Err(NnError::BadCheckpoint(format!("layer {i}: name length {name_len} out of range")));
        }
        let mut name = vec![0u8; name_len];
        r.read_exact(&mut name)?;
        let name = String::from_utf8(name).map_err(|e| NnError::BadCheckpoint(e.to_string()))?;
        if &name != expected_name {
            return Err(NnError::BadCheckpoint(format!(
                "layer {i}: name {name:?} does not match expected {expected_name:?}"
            )));
        }
        let ndim = read_u32(&mut r)? as usize;
        let mut shape = Vec::with_capacity(ndim);
        for _ in 0..ndim {
            let mut b = [0u8; 8];
            r.read_exact(&mut b)?;
            shape.push(u64::from_le_bytes(b) as usize);
        }
        if shape != ref_tensors[i].shape() {
            return Err(NnError::BadCheckpoint(format!(
                "layer {name}: shape {shape:?} does not match expected {:?}",
                ref_tensors[i].shape()
            )));
        }
        shapes.push(shape);
    }

    let mut tensors = Vec::with_capacity(n_layers);
    for shape in shapes {
        let n: usize = shape.iter().product();
        let mut data = Vec::with_capacity(n);
        let mut b = [0u8; 8];
        for _ in 0..n {
            r.read_exact(&mut b)?;
            data.push(f64::from_le_bytes(b));
        }
        tensors.push(Tensor::from_vec(shape, data));
    }
    let mut trailing = Vec::new();
    r.read_to_end(&mut trailing)?;
    if !trailing.is_empty() {
        return Err(NnError::BadCheckpoint(format!("{} trailing bytes", trailing.len())));
    }

    Ok(PolicyNetwork::from_raw(config, ref_names.to_vec(), tensors))
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32, NnError> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        for kind in [NetKind::Cnn, NetKind::CnnLstm, NetKind::Mlp] {
            let config = NetConfig {
                kind,
                obs_width: 16,
                obs_height: 12,
                conv1_filters: 4,
                conv2_filters: 6,
                dense_units: 10,
                lstm_units: 5,
                mlp_units: 8,
            };
            let net = PolicyNetwork::new(&config, 99).unwrap();
            let path = dir.path().join(format!("{}.svrl", kind.as_str()));
            save(&net, &path).unwrap();
            let loaded = load(&path).unwrap();
            assert_eq!(loaded.config, net.config);
            assert_eq!(loaded.manifest(), net.manifest());
            let a = net.params_flat();
            let b = loaded.params_flat();
            assert_eq!(a.len(), b.len());
            for (x, y) in a.iter().zip(&b) {
                assert_eq!(x.to_bits(), y.to_bits());
            }
        }
    }

    #[test]
    fn corrupt_magic_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.svrl");
        std::fs::write(&path, b"NOPE123456").unwrap();
        assert!(matches!(load(&path), Err(NnError::BadCheckpoint(_))));
    }

    #[test]
    fn truncated_file_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let config = NetConfig {
            kind: NetKind::Mlp,
            ..NetConfig::default()
        };
        let net = PolicyNetwork::new(&config, 1).unwrap();
        let path = dir.path().join("full.svrl");
        save(&net, &path).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        let cut = dir.path().join("cut.svrl");
        std::fs::write(&cut, &bytes[..bytes.len() - 9]).unwrap();
        assert!(load(&cut).is_err());
    }
}
