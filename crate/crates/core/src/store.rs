//! Memory store: units keyed by `(object_id, aspect)`, a metadata index over
//! canonical `(object_type, aspect)`, and one summary embedding per unit.
//!
//! On disk a store is a `.damstore` file: one manifest line followed by one
//! JSON object per unit, in key order. Saves write a sibling temp file and
//! rename it over the target.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::belief::{belief_entropy, MemoryUnit, SentimentProfile, Timestamp, EPS};
use crate::error::{Error, Result};
use crate::key::{canonicalize, UnitKey};

pub const SCHEMA_VERSION: u32 = 1;
pub const STORE_EXTENSION: &str = "damstore";

#[derive(Debug, Clone, PartialEq)]
struct Entry {
    unit: MemoryUnit,
    embedding: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MemoryStore {
    dim: usize,
    config_fingerprint: String,
    units: BTreeMap<UnitKey, Entry>,
    // canonical (object_type, aspect) -> keys
    metadata_index: BTreeMap<(String, String), BTreeSet<UnitKey>>,
    // canonical key -> raw keys that canonicalize to it
    canonical_index: BTreeMap<UnitKey, BTreeSet<UnitKey>>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Manifest {
    schema_version: u32,
    dim: usize,
    config_fingerprint: String,
    unit_count: usize,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Record {
    object_id: String,
    object_type: String,
    aspect: String,
    profile: SentimentProfile,
    weight: f64,
    entropy: f64,
    summary: String,
    reason: String,
    created_at: Timestamp,
    updated_at: Timestamp,
    high_entropy_streak: u32,
    embedding: Vec<f64>,
}

fn metadata_key(unit: &MemoryUnit) -> (String, String) {
    (canonicalize(&unit.object_type), canonicalize(&unit.aspect))
}

impl MemoryStore {
    pub fn new(dim: usize, config_fingerprint: impl Into<String>) -> Self {
        Self {
            dim,
            config_fingerprint: config_fingerprint.into(),
            units: BTreeMap::new(),
            metadata_index: BTreeMap::new(),
            canonical_index: BTreeMap::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn config_fingerprint(&self) -> &str {
        &self.config_fingerprint
    }

    pub fn schema_version(&self) -> u32 {
        SCHEMA_VERSION
    }

    pub fn len(&self) -> usize {
        self.units.len()
    }

    pub fn is_empty(&self) -> bool {
        self.units.is_empty()
    }

    pub fn contains(&self, key: &UnitKey) -> bool {
        self.units.contains_key(key)
    }

    pub fn get(&self, key: &UnitKey) -> Option<&MemoryUnit> {
        self.units.get(key).map(|e| &e.unit)
    }

    pub fn embedding(&self, key: &UnitKey) -> Option<&[f64]> {
        self.units.get(key).map(|e| e.embedding.as_slice())
    }

    pub fn keys(&self) -> impl Iterator<Item = &UnitKey> {
        self.units.keys()
    }

    pub fn units(&self) -> impl Iterator<Item = &MemoryUnit> {
        self.units.values().map(|e| &e.unit)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&UnitKey, &MemoryUnit, &[f64])> {
        self.units.iter().map(|(k, e)| (k, &e.unit, e.embedding.as_slice()))
    }

    fn check_embedding(&self, embedding: &[f64]) -> Result<()> {
        if embedding.len() != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, got: embedding.len() });
        }
        if embedding.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFiniteEmbedding);
        }
        Ok(())
    }

    fn unindex(&mut self, key: &UnitKey, unit: &MemoryUnit) {
        let mk = metadata_key(unit);
        if let Some(set) = self.metadata_index.get_mut(&mk) {
            set.remove(key);
            if set.is_empty() {
                self.metadata_index.remove(&mk);
            }
        }
        let ck = key.canonical();
        if let Some(set) = self.canonical_index.get_mut(&ck) {
            set.remove(key);
            if set.is_empty() {
                self.canonical_index.remove(&ck);
            }
        }
    }

    fn index(&mut self, key: &UnitKey, unit: &MemoryUnit) {
        self.metadata_index.entry(metadata_key(unit)).or_default().insert(key.clone());
        self.canonical_index.entry(key.canonical()).or_default().insert(key.clone());
    }

    /// Insert or replace a unit together with its summary embedding.
    pub fn put(&mut self, unit: MemoryUnit, embedding: Vec<f64>) -> Result<UnitKey> {
        self.check_embedding(&embedding)?;
        let key = unit.key();
        if let Some(old) = self.units.remove(&key) {
            self.unindex(&key, &old.unit);
        }
        self.index(&key, &unit);
        self.units.insert(key.clone(), Entry { unit, embedding });
        Ok(key)
    }

    pub fn delete(&mut self, key: &UnitKey) -> Result<MemoryUnit> {
        let entry = self.units.remove(key).ok_or_else(|| Error::NotFound(key.to_string()))?;
        self.unindex(key, &entry.unit);
        Ok(entry.unit)
    }

    /// Mutate a unit in place, keeping its embedding. The closure must not
    /// change `object_id` or `aspect`.
    pub fn update<F>(&mut self, key: &UnitKey, f: F) -> Result<()>
    where
        F: FnOnce(&mut MemoryUnit),
    {
        let mut entry = self.units.remove(key).ok_or_else(|| Error::NotFound(key.to_string()))?;
        self.unindex(key, &entry.unit);
        let before = entry.unit.clone();
        f(&mut entry.unit);
        if entry.unit.key() != *key {
            let changed = entry.unit.key().to_string();
            entry.unit = before;
            self.index(key, &entry.unit);
            self.units.insert(key.clone(), entry);
            return Err(Error::KeyMismatch(key.to_string(), changed));
        }
        self.index(key, &entry.unit);
        self.units.insert(key.clone(), entry);
        Ok(())
    }

    /// Keys whose canonical `(object_type, aspect)` equal the canonicalized
    /// arguments. `None` matches everything.
    pub fn filter_by_metadata(&self, object_type: Option<&str>, aspect: Option<&str>) -> BTreeSet<UnitKey> {
        let ot = object_type.map(canonicalize);
        let asp = aspect.map(canonicalize);
        match (ot, asp) {
            (Some(ot), Some(asp)) => self.metadata_index.get(&(ot, asp)).cloned().unwrap_or_default(),
            (ot, asp) => self
                .metadata_index
                .iter()
                .filter(|((t, a), _)| ot.as_ref().is_none_or(|x| x == t) && asp.as_ref().is_none_or(|x| x == a))
                .flat_map(|(_, keys)| keys.iter().cloned())
                .collect(),
        }
    }

    /// Stored keys that canonicalize to `key`'s canonical form.
    pub fn find_canonical(&self, key: &UnitKey) -> Vec<UnitKey> {
        self.canonical_index.get(&key.canonical()).map(|s| s.iter().cloned().collect()).unwrap_or_default()
    }

    /// Sum of belief entropy over all units.
    pub fn global_entropy(&self) -> f64 {
        // folded from +0.0: an empty f64 sum is -0.0
        self.units().map(MemoryUnit::entropy).fold(0.0, |a, h| a + h)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        self.write_to(&mut out).expect("writing to a Vec cannot fail");
        out
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        let manifest = Manifest {
            schema_version: SCHEMA_VERSION,
            dim: self.dim,
            config_fingerprint: self.config_fingerprint.clone(),
            unit_count: self.units.len(),
        };
        serde_json::to_writer(&mut w, &manifest).map_err(std::io::Error::from)?;
        w.write_all(b"\n")?;
        for entry in self.units.values() {
            let u = &entry.unit;
            let rec = Record {
                object_id: u.object_id.clone(),
                object_type: u.object_type.clone(),
                aspect: u.aspect.clone(),
                profile: u.profile(),
                weight: u.weight,
                entropy: u.entropy(),
                summary: u.summary.clone(),
                reason: u.reason.clone(),
                created_at: u.created_at,
                updated_at: u.updated_at,
                high_entropy_streak: u.high_entropy_streak,
                embedding: entry.embedding.clone(),
            };
            serde_json::to_writer(&mut w, &rec).map_err(std::io::Error::from)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }

    /// Write atomically: temp file, fsync, rename.
    pub fn save(&self, path: &Path) -> Result<usize> {
        let tmp = tmp_path(path);
        {
            let file = File::create(&tmp)?;
            let mut w = BufWriter::new(file);
            self.write_to(&mut w)?;
            w.flush()?;
            w.get_ref().sync_all()?;
        }
        if let Err(e) = fs::rename(&tmp, path) {
            let _ = fs::remove_file(&tmp);
            return Err(e.into());
        }
        Ok(self.units.len())
    }

    pub fn load(path: &Path) -> Result<MemoryStore> {
        let file = File::open(path)?;
        Self::read_from(BufReader::new(file))
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<MemoryStore> {
        Self::read_from(bytes)
    }

    pub fn read_from<R: Read>(r: R) -> Result<MemoryStore> {
        let reader = BufReader::new(r);
        let mut lines = reader.lines().enumerate().map(|(i, l)| (i + 1, l));

        let corrupt = |line: usize, reason: String| Error::CorruptRecord { line, reason };

        let manifest: Manifest = match lines.next() {
            None => return Err(corrupt(1, "missing manifest".into())),
            Some((n, line)) => {
                let line = line?;
                serde_json::from_str(&line).map_err(|e| corrupt(n, format!("bad manifest: {e}")))?
            }
        };
        if manifest.schema_version != SCHEMA_VERSION {
            return Err(Error::SchemaMismatch { found: manifest.schema_version, expected: SCHEMA_VERSION });
        }

        let mut store = MemoryStore::new(manifest.dim, manifest.config_fingerprint);
        let mut last_line = 1;
        for (n, line) in lines {
            let line = line?;
            last_line = n;
            if line.is_empty() {
                continue;
            }
            if store.len() == manifest.unit_count {
                return Err(corrupt(n, "more records than the manifest declares".into()));
            }
            let rec: Record = serde_json::from_str(&line).map_err(|e| corrupt(n, e.to_string()))?;
            if !rec.profile.is_normalized() {
                return Err(corrupt(n, "profile is not normalized".into()));
            }
            let h = belief_entropy(&rec.profile).map_err(|e| corrupt(n, e.to_string()))?;
            if (h - rec.entropy).abs() > EPS {
                return Err(corrupt(n, format!("cached entropy {} disagrees with profile ({h})", rec.entropy)));
            }
            if !(rec.weight.is_finite() && rec.weight >= 0.0) {
                return Err(corrupt(n, "weight must be finite and non-negative".into()));
            }
            let unit = MemoryUnit::from_parts(
                rec.object_id,
                rec.object_type,
                rec.aspect,
                rec.profile,
                rec.weight,
                rec.entropy,
                rec.summary,
                rec.reason,
                rec.created_at,
                rec.updated_at,
                rec.high_entropy_streak,
            );
            if store.contains(&unit.key()) {
                return Err(corrupt(n, format!("duplicate key {}", unit.key())));
            }
            store.put(unit, rec.embedding).map_err(|e| corrupt(n, e.to_string()))?;
        }
        if store.len() != manifest.unit_count {
            return Err(corrupt(
                last_line + 1,
                format!("truncated: manifest declares {} units, found {}", manifest.unit_count, store.len()),
            ));
        }
        Ok(store)
    }
}

fn tmp_path(path: &Path) -> PathBuf {
    let mut name = path.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(".tmp");
    path.with_file_name(name)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::belief::Polarity;

    fn unit(id: &str, ty: &str, aspect: &str, p: SentimentProfile) -> MemoryUnit {
        MemoryUnit::new(id, ty, aspect, p, 1.0, &format!("{id} {aspect}"), 0).unwrap()
    }

    fn emb(dim: usize, i: usize) -> Vec<f64> {
        let mut v = vec![0.0; dim];
        v[i % dim] = 1.0;
        v
    }

    #[test]
    fn put_replace_and_dimension_check() {
        let mut s = MemoryStore::new(4, "fp");
        let k = s.put(unit("coffee", "beverage", "taste", SentimentProfile::uniform()), emb(4, 0)).unwrap();
        assert_eq!(s.len(), 1);
        assert!(s.filter_by_metadata(Some("beverage"), Some("taste")).contains(&k));

        let mut u = s.get(&k).unwrap().clone();
        u.summary = "new".into();
        s.put(u, emb(4, 1)).unwrap();
        assert_eq!(s.len(), 1);
        assert_eq!(s.embedding(&k).unwrap(), emb(4, 1).as_slice());

        let err = s.put(unit("tea", "beverage", "taste", SentimentProfile::uniform()), vec![0.0; 3]);
        assert!(matches!(err, Err(Error::DimensionMismatch { expected: 4, got: 3 })));
        let err = s.put(unit("tea", "beverage", "taste", SentimentProfile::uniform()), vec![f64::NAN; 4]);
        assert!(matches!(err, Err(Error::NonFiniteEmbedding)));
    }

    #[test]
    fn delete_semantics() {
        let mut s = MemoryStore::new(2, "fp");
        let u = unit("coffee", "beverage", "taste", SentimentProfile::uniform());
        let k = s.put(u.clone(), emb(2, 0)).unwrap();
        s.delete(&k).unwrap();
        assert!(s.is_empty());
        assert!(s.filter_by_metadata(Some("beverage"), Some("taste")).is_empty());
        assert!(matches!(s.delete(&k), Err(Error::NotFound(_))));
        s.put(u, emb(2, 0)).unwrap();
        assert_eq!(s.len(), 1);
    }

    #[test]
    fn filter_exact_and_wildcard() {
        let mut s = MemoryStore::new(2, "fp");
        s.put(unit("coffee", "Beverage", "taste", SentimentProfile::uniform()), emb(2, 0)).unwrap();
        s.put(unit("coffee", "Beverage", "packaging", SentimentProfile::uniform()), emb(2, 0)).unwrap();
        s.put(unit("phone", "product", "price", SentimentProfile::uniform()), emb(2, 0)).unwrap();

        let hits = s.filter_by_metadata(Some(" beverage "), Some("TASTE"));
        assert_eq!(hits.into_iter().map(|k| k.to_string()).collect::<Vec<_>>(), ["coffee/taste"]);
        assert!(s.filter_by_metadata(Some("beverage"), Some("smell")).is_empty());
        assert_eq!(s.filter_by_metadata(Some("beverage"), None).len(), 2);
        assert_eq!(s.filter_by_metadata(None, Some("price")).len(), 1);
        assert_eq!(s.filter_by_metadata(None, None).len(), 3);
    }

    #[test]
    fn update_reindexes_and_rejects_key_change() {
        let mut s = MemoryStore::new(2, "fp");
        let k = s.put(unit("coffee", "beverage", "taste", SentimentProfile::uniform()), emb(2, 0)).unwrap();
        s.update(&k, |u| u.object_type = "drink".into()).unwrap();
        assert!(s.filter_by_metadata(Some("beverage"), None).is_empty());
        assert_eq!(s.filter_by_metadata(Some("drink"), None).len(), 1);
        assert!(matches!(s.update(&k, |u| u.aspect = "price".into()), Err(Error::KeyMismatch(..))));
        assert_eq!(s.get(&k).unwrap().aspect, "taste");
    }

    #[test]
    fn raw_keys_share_canonical_form() {
        let mut s = MemoryStore::new(2, "fp");
        s.put(unit("Coffee", "beverage", "taste", SentimentProfile::uniform()), emb(2, 0)).unwrap();
        s.put(unit("coffee", "beverage", "taste", SentimentProfile::uniform()), emb(2, 0)).unwrap();
        assert_eq!(s.len(), 2);
        assert_eq!(s.find_canonical(&UnitKey::new("COFFEE", "taste")).len(), 2);
        assert_eq!(s.filter_by_metadata(Some("beverage"), Some("taste")).len(), 2);
    }

    #[test]
    fn global_entropy_examples() {
        let mut s = MemoryStore::new(2, "fp");
        assert_eq!(s.global_entropy().to_bits(), 0.0f64.to_bits());
        s.put(unit("a", "t", "x", SentimentProfile::point(Polarity::Positive)), emb(2, 0)).unwrap();
        s.put(unit("b", "t", "x", SentimentProfile::new(0.5, 0.5, 0.0)), emb(2, 0)).unwrap();
        assert!((s.global_entropy() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn empty_roundtrip_and_truncation() {
        let s = MemoryStore::new(3, "fp");
        let back = MemoryStore::from_bytes(&s.to_bytes()).unwrap();
        assert_eq!(back, s);

        let mut s = MemoryStore::new(2, "fp");
        s.put(unit("a", "t", "x", SentimentProfile::uniform()), emb(2, 0)).unwrap();
        s.put(unit("b", "t", "x", SentimentProfile::uniform()), emb(2, 1)).unwrap();
        let bytes = s.to_bytes();
        let cut = &bytes[..bytes.len() - 10];
        match MemoryStore::from_bytes(cut) {
            Err(Error::CorruptRecord { line, .. }) => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
        // cut on a line boundary: the first missing line is reported
        let text = String::from_utf8(bytes).unwrap();
        let two_lines: String = text.lines().take(2).map(|l| format!("{l}\n")).collect();
        match MemoryStore::from_bytes(two_lines.as_bytes()) {
            Err(Error::CorruptRecord { line, .. }) => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(MemoryStore::from_bytes(b""), Err(Error::CorruptRecord { line: 1, .. })));
    }

    #[test]
    fn schema_mismatch() {
        let text = "{\"schema_version\":9,\"dim\":2,\"config_fingerprint\":\"x\",\"unit_count\":0}\n";
        assert!(matches!(
            MemoryStore::from_bytes(text.as_bytes()),
            Err(Error::SchemaMismatch { found: 9, expected: 1 })
        ));
    }

    #[test]
    fn save_and_load_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("user.damstore");
        let mut s = MemoryStore::new(2, "fp");
        s.put(unit("a", "t", "x", SentimentProfile::new(0.7, 0.2, 0.1)), vec![0.6, 0.8]).unwrap();
        assert_eq!(s.save(&path).unwrap(), 1);
        assert_eq!(MemoryStore::load(&path).unwrap(), s);
        assert!(!tmp_path(&path).exists());
        assert!(matches!(MemoryStore::load(&dir.path().join("missing")), Err(Error::Io(_))));
    }
}
