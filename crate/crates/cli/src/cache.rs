//! On-disk cache of DMRG ground states keyed by couplings, size, bond
//! dimension, seed, sweep count and initialization.

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use mpsmagic::mps::io::{load, save};
use mpsmagic::Mps;

#[derive(Clone, Debug, PartialEq)]
pub struct CacheKey {
    pub jz: f64,
    pub d: f64,
    pub n_sites: usize,
    pub chi: usize,
    pub seed: u64,
    pub n_sweeps: usize,
    /// Warm-started states depend on the chain of smaller bond dimensions.
    pub warm: bool,
}

impl CacheKey {
    /// Couplings are encoded by their bit patterns so distinct values never
    /// collide after formatting.
    pub fn file_name(&self) -> String {
        format!(
            "dmrg_N{}_chi{}_jz{:016x}_d{:016x}_seed{}_sw{}_{}.mpsq",
            self.n_sites,
            self.chi,
            self.jz.to_bits(),
            self.d.to_bits(),
            self.seed,
            self.n_sweeps,
            if self.warm { "warm" } else { "cold" }
        )
    }
}

#[derive(Clone, Debug)]
pub struct StateCache {
    dir: PathBuf,
}

impl StateCache {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Self { dir: dir.into() }
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn path(&self, key: &CacheKey) -> PathBuf {
        self.dir.join(key.file_name())
    }

    /// The cached state, or `None` when absent or unreadable.
    pub fn get(&self, key: &CacheKey) -> Option<Mps> {
        let path = self.path(key);
        if !path.exists() {
            return None;
        }
        match load::<f64>(&path) {
            Ok(s) if s.n_sites() == key.n_sites => Some(s),
            Ok(_) => None,
            Err(e) => {
                log::warn!("ignoring unreadable cache entry {}: {e}", path.display());
                None
            }
        }
    }

    /// Writes through a temporary file so concurrent readers never see a
    /// partial entry.
    pub fn put(&self, key: &CacheKey, state: &Mps) -> Result<()> {
        std::fs::create_dir_all(&self.dir).with_context(|| format!("cannot create cache dir {}", self.dir.display()))?;
        let path = self.path(key);
        let tmp = path.with_extension(format!("tmp{}", std::process::id()));
        save(state, &tmp).with_context(|| format!("cannot write {}", tmp.display()))?;
        std::fs::rename(&tmp, &path).with_context(|| format!("cannot move cache entry to {}", path.display()))?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn key() -> CacheKey {
        CacheKey { jz: 0.5, d: 0.635, n_sites: 6, chi: 4, seed: 1, n_sweeps: 10, warm: false }
    }

    #[test]
    fn put_then_get() {
        let dir = tempfile::tempdir().unwrap();
        let cache = StateCache::new(dir.path().join("c"));
        assert!(cache.get(&key()).is_none());
        let s = Mps::random(6, 3, 4, 2).unwrap();
        cache.put(&key(), &s).unwrap();
        let back = cache.get(&key()).unwrap();
        assert!((back.inner(&s).unwrap().norm() - s.norm_squared().unwrap()).abs() < 1e-12);
        assert!(cache.get(&CacheKey { seed: 2, ..key() }).is_none());
    }

    #[test]
    fn keys_separate_every_field() {
        let base = key().file_name();
        for other in [
            CacheKey { jz: 0.5000000001, ..key() },
            CacheKey { d: -0.635, ..key() },
            CacheKey { chi: 8, ..key() },
            CacheKey { n_sweeps: 12, ..key() },
            CacheKey { warm: true, ..key() },
        ] {
            assert_ne!(other.file_name(), base);
        }
    }

    #[test]
    fn corrupt_entries_are_ignored() {
        let dir = tempfile::tempdir().unwrap();
        let cache = StateCache::new(dir.path());
        std::fs::write(dir.path().join(key().file_name()), b"MPSQ junk").unwrap();
        assert!(cache.get(&key()).is_none());
    }
}
