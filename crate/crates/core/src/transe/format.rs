//! Embedding files.
//!
//! Binary layout, little-endian:
//!
//! ```text
//! magic     b"LPEM"
//! version   u32
//! n         u64   entity rows
//! d         u64
//! r         u32   relation count
//! r times:  u32 byte length, UTF-8 relation token
//! f64 x (r + n) * d, row-major, relations first
//! ```

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::EmbeddingModel;
use crate::error::{Error, Result};
use crate::graph::RelationKind;

pub const MAGIC: &[u8; 4] = b"LPEM";
pub const VERSION: u32 = 1;

pub fn write_embedding<W: Write>(model: &EmbeddingModel, mut w: W) -> Result<()> {
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&(model.entity_count() as u64).to_le_bytes())?;
    w.write_all(&(model.dim() as u64).to_le_bytes())?;
    w.write_all(&(model.relations().len() as u32).to_le_bytes())?;
    for r in model.relations().keys() {
        let token = r.token().as_bytes();
        w.write_all(&(token.len() as u32).to_le_bytes())?;
        w.write_all(token)?;
    }
    for x in model.relations().values().flatten().chain(model.entity_buffer()) {
        w.write_all(&x.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

fn read_array<const N: usize, R: Read>(r: &mut R) -> Result<[u8; N]> {
    let mut buf = [0u8; N];
    r.read_exact(&mut buf)
        .map_err(|e| Error::Format(format!("truncated embedding file: {e}")))?;
    Ok(buf)
}

pub fn read_embedding<R: Read>(mut r: R) -> Result<EmbeddingModel> {
    if &read_array::<4, _>(&mut r)? != MAGIC {
        return Err(Error::Format("bad magic, expected LPEM".into()));
    }
    let version = u32::from_le_bytes(read_array(&mut r)?);
    if version != VERSION {
        return Err(Error::Format(format!("unsupported version {version}")));
    }
    let n = u64::from_le_bytes(read_array(&mut r)?) as usize;
    let d = u64::from_le_bytes(read_array(&mut r)?) as usize;
    let n_rel = u32::from_le_bytes(read_array(&mut r)?) as usize;
    let mut kinds = Vec::with_capacity(n_rel);
    for _ in 0..n_rel {
        let len = u32::from_le_bytes(read_array(&mut r)?) as usize;
        let mut token = vec![0u8; len];
        r.read_exact(&mut token)
            .map_err(|e| Error::Format(format!("truncated relation table: {e}")))?;
        let token = String::from_utf8(token).map_err(|_| Error::Format("relation token is not UTF-8".into()))?;
        kinds.push(RelationKind::from_token(&token).ok_or(Error::UnknownRelation(token))?);
    }
    let mut values = Vec::with_capacity((n_rel + n) * d);
    for _ in 0..(n_rel + n) * d {
        values.push(f64::from_le_bytes(read_array(&mut r)?));
    }
    let mut trailing = [0u8; 1];
    if r.read(&mut trailing)? != 0 {
        return Err(Error::Format("trailing bytes after embedding payload".into()));
    }
    let entities = values.split_off(n_rel * d);
    let relations: BTreeMap<RelationKind, Vec<f64>> = kinds
        .into_iter()
        .zip(values.chunks(d.max(1)).map(<[f64]>::to_vec))
        .collect();
    EmbeddingModel::new(d, entities, relations)
}

pub fn save_embedding(model: &EmbeddingModel, path: impl AsRef<Path>) -> Result<()> {
    write_embedding(model, BufWriter::new(File::create(path)?))
}

pub fn load_embedding(path: impl AsRef<Path>) -> Result<EmbeddingModel> {
    read_embedding(BufReader::new(File::open(path)?))
}

/// CSV export `entity_id,c0,...,c{d-1}`.
pub fn write_embedding_csv<W: Write>(model: &EmbeddingModel, names: &[String], w: W) -> Result<()> {
    if names.len() != model.entity_count() {
        return Err(Error::InvalidArgument(format!(
            "{} names for {} embedding rows",
            names.len(),
            model.entity_count()
        )));
    }
    let mut out = csv::Writer::from_writer(w);
    let mut header = vec!["entity_id".to_string()];
    header.extend((0..model.dim()).map(|j| format!("c{j}")));
    out.write_record(&header)?;
    for (i, name) in names.iter().enumerate() {
        let mut rec = vec![name.clone()];
        rec.extend(model.row(i.into()).iter().map(|x| format!("{x:e}")));
        out.write_record(&rec)?;
    }
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn binary_round_trip(
            n in 1usize..6,
            d in 1usize..5,
            with_rel in any::<bool>(),
            seed in any::<u64>(),
        ) {
            let mut x = seed;
            let mut next = || { x = crate::rng::derive(x, 1); (x >> 11) as f64 / (1u64 << 53) as f64 - 0.5 };
            let entities: Vec<f64> = (0..n * d).map(|_| next()).collect();
            let mut relations = BTreeMap::new();
            if with_rel {
                relations.insert(RelationKind::Wtf, (0..d).map(|_| next()).collect());
                relations.insert(RelationKind::Follow, (0..d).map(|_| next()).collect());
            }
            let m = EmbeddingModel::new(d, entities, relations).unwrap();
            let mut buf = Vec::new();
            write_embedding(&m, &mut buf).unwrap();
            prop_assert_eq!(buf.len(), 4 + 4 + 8 + 8 + 4 + if with_rel { 4 + 6 + 4 + 3 } else { 0 } + 8 * d * (n + if with_rel { 2 } else { 0 }));
            let back = read_embedding(buf.as_slice()).unwrap();
            prop_assert_eq!(back, m);
        }
    }

    #[test]
    fn header_layout() {
        let m = EmbeddingModel::new(2, vec![1.0, 2.0], BTreeMap::new()).unwrap();
        let mut buf = Vec::new();
        write_embedding(&m, &mut buf).unwrap();
        assert_eq!(&buf[..4], b"LPEM");
        assert_eq!(u32::from_le_bytes(buf[4..8].try_into().unwrap()), 1);
        assert_eq!(u64::from_le_bytes(buf[8..16].try_into().unwrap()), 1);
        assert_eq!(u64::from_le_bytes(buf[16..24].try_into().unwrap()), 2);
        assert_eq!(f64::from_le_bytes(buf[28..36].try_into().unwrap()), 1.0);
    }

    #[test]
    fn rejects_bad_magic_and_truncation() {
        assert!(read_embedding(&b"NOPE\x01\0\0\0"[..]).is_err());
        let m = EmbeddingModel::new(2, vec![1.0, 2.0], BTreeMap::new()).unwrap();
        let mut buf = Vec::new();
        write_embedding(&m, &mut buf).unwrap();
        assert!(read_embedding(&buf[..buf.len() - 3]).is_err());
    }

    #[test]
    fn csv_has_header_and_rows() {
        let m = EmbeddingModel::new(2, vec![1.0, 2.0, 3.0, 4.0], BTreeMap::new()).unwrap();
        let mut buf = Vec::new();
        write_embedding_csv(&m, &["a".into(), "b".into()], &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "entity_id,c0,c1");
        assert_eq!(lines[2], "b,3e0,4e0");
    }
}
