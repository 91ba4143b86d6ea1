//! Fingerprint-keyed matrix cache, in memory and under `<out>/cache`.

use std::collections::HashMap;
use std::fs;
use std::path::PathBuf;

use aniso_field::covariance::Gram;
use aniso_field::{Error, Result};
use nalgebra::DMatrix;

pub struct Cache {
    dir: PathBuf,
    grams: HashMap<String, Gram>,
    matrices: HashMap<String, DMatrix<f64>>,
    pub hits: usize,
    pub misses: usize,
}

impl Cache {
    pub fn new(dir: PathBuf) -> Self {
        Self {
            dir,
            grams: HashMap::new(),
            matrices: HashMap::new(),
            hits: 0,
            misses: 0,
        }
    }

    fn path(&self, kind: &str, key: &str) -> PathBuf {
        self.dir.join(format!("{kind}-{key}.json"))
    }

    fn read<T: serde::de::DeserializeOwned>(&self, kind: &str, key: &str) -> Option<T> {
        let text = fs::read_to_string(self.path(kind, key)).ok()?;
        serde_json::from_str(&text).ok()
    }

    fn write<T: serde::Serialize>(&self, kind: &str, key: &str, value: &T) -> Result<()> {
        fs::create_dir_all(&self.dir)?;
        let text = serde_json::to_string(value).map_err(Error::from)?;
        fs::write(self.path(kind, key), text)?;
        Ok(())
    }

    pub fn gram(&mut self, key: &str, build: impl FnOnce() -> Result<Gram>) -> Result<Gram> {
        if let Some(g) = self.grams.get(key) {
            self.hits += 1;
            return Ok(g.clone());
        }
        let g = match self.read::<Gram>("gram", key) {
            Some(g) => {
                self.hits += 1;
                g
            }
            None => {
                self.misses += 1;
                let g = build()?;
                self.write("gram", key, &g)?;
                g
            }
        };
        self.grams.insert(key.to_string(), g.clone());
        Ok(g)
    }

    pub fn matrix(&mut self, key: &str, build: impl FnOnce() -> Result<DMatrix<f64>>) -> Result<DMatrix<f64>> {
        if let Some(m) = self.matrices.get(key) {
            self.hits += 1;
            return Ok(m.clone());
        }
        let m = match self.read::<DMatrix<f64>>("matrix", key) {
            Some(m) => {
                self.hits += 1;
                m
            }
            None => {
                self.misses += 1;
                let m = build()?;
                self.write("matrix", key, &m)?;
                m
            }
        };
        self.matrices.insert(key.to_string(), m.clone());
        Ok(m)
    }
}
