//! Translation between any two domains by composing one domain's encoder with
//! another's decoder, with encoder outputs cached for one-to-many use.

use std::num::NonZeroUsize;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use lru::LruCache;
use sha2::{Digest, Sha256};

use crate::domain::{DomainId, ImageTensor, LatentCode};
use crate::error::{Error, Result};
use crate::networks::{decode, encode};
use crate::registry::DomainRegistry;

pub const DEFAULT_CACHE_CAPACITY: usize = 64;

/// Content hash of an image's shape and little-endian values.
pub fn fingerprint(x: &ImageTensor) -> [u8; 32] {
    let mut h = Sha256::new();
    for d in x.shape() {
        h.update((d as u64).to_le_bytes());
    }
    for v in x.tensor().data() {
        h.update(v.to_le_bytes());
    }
    h.finalize().into()
}

type Key = ([u8; 32], DomainId);

/// Bounded LRU map from `(image fingerprint, source domain)` to its latent code.
pub struct LatentCache {
    entries: Mutex<LruCache<Key, LatentCode>>,
    hits: AtomicUsize,
    misses: AtomicUsize,
}

impl LatentCache {
    pub fn new(capacity: NonZeroUsize) -> Self {
        Self { entries: Mutex::new(LruCache::new(capacity)), hits: AtomicUsize::new(0), misses: AtomicUsize::new(0) }
    }

    pub fn capacity(&self) -> usize {
        self.entries.lock().unwrap().cap().get()
    }

    pub fn len(&self) -> usize {
        self.entries.lock().unwrap().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn hits(&self) -> usize {
        self.hits.load(Ordering::Relaxed)
    }

    pub fn misses(&self) -> usize {
        self.misses.load(Ordering::Relaxed)
    }

    pub fn clear(&self) {
        self.entries.lock().unwrap().clear();
    }

    fn get(&self, key: &Key) -> Option<LatentCode> {
        let found = self.entries.lock().unwrap().get(key).cloned();
        let counter = if found.is_some() { &self.hits } else { &self.misses };
        counter.fetch_add(1, Ordering::Relaxed);
        found
    }

    fn put(&self, key: Key, code: LatentCode) {
        self.entries.lock().unwrap().put(key, code);
    }
}

/// Frozen registry plus cache and invocation counters. Safe to share between threads.
pub struct Translator {
    registry: DomainRegistry,
    cache: Option<LatentCache>,
    encodes: AtomicUsize,
    decodes: AtomicUsize,
}

impl Translator {
    /// A capacity of zero disables caching.
    pub fn new(registry: DomainRegistry, cache_capacity: usize) -> Self {
        let cache = NonZeroUsize::new(cache_capacity).map(LatentCache::new);
        Self { registry, cache, encodes: AtomicUsize::new(0), decodes: AtomicUsize::new(0) }
    }

    pub fn registry(&self) -> &DomainRegistry {
        &self.registry
    }

    pub fn cache(&self) -> Option<&LatentCache> {
        self.cache.as_ref()
    }

    /// Encoder forward passes run so far.
    pub fn encoder_calls(&self) -> usize {
        self.encodes.load(Ordering::Relaxed)
    }

    /// Decoder forward passes run so far.
    pub fn decoder_calls(&self) -> usize {
        self.decodes.load(Ordering::Relaxed)
    }

    pub fn reset_counters(&self) {
        self.encodes.store(0, Ordering::Relaxed);
        self.decodes.store(0, Ordering::Relaxed);
    }

    fn check(&self, d: DomainId) -> Result<()> {
        if d.index() >= self.registry.len() {
            return Err(Error::DomainOutOfRange { index: d.index(), n: self.registry.len() });
        }
        Ok(())
    }

    /// Latent code of `x` under `from`'s encoder; the encoder only runs on a cache miss.
    pub fn latent(&self, x: &ImageTensor, from: DomainId) -> Result<LatentCode> {
        self.check(from)?;
        let key = self.cache.as_ref().map(|_| (fingerprint(x), from));
        if let (Some(cache), Some(key)) = (&self.cache, &key) {
            if let Some(code) = cache.get(key) {
                return Ok(code);
            }
        }
        self.encodes.fetch_add(1, Ordering::Relaxed);
        let code = encode(&self.registry.domain(from).encoder, x, from)?;
        if let (Some(cache), Some(key)) = (&self.cache, key) {
            cache.put(key, code.clone());
        }
        Ok(code)
    }

    pub fn decode(&self, code: &LatentCode, to: DomainId) -> Result<ImageTensor> {
        self.check(to)?;
        self.decodes.fetch_add(1, Ordering::Relaxed);
        decode(&self.registry.domain(to).decoder, code)
    }

    /// `Decoder_to(Encoder_from(x))`.
    pub fn translate(&self, x: &ImageTensor, from: DomainId, to: DomainId) -> Result<ImageTensor> {
        self.check(to)?;
        let code = self.latent(x, from)?;
        self.decode(&code, to)
    }

    /// Name-based variant of [`Translator::translate`].
    pub fn translate_named(&self, x: &ImageTensor, from: &str, to: &str) -> Result<ImageTensor> {
        let (a, b) = (self.registry.id_of(from)?, self.registry.id_of(to)?);
        self.translate(x, a, b)
    }

    /// One encode, then one decode per target.
    pub fn translate_many(&self, x: &ImageTensor, from: DomainId, targets: &[DomainId]) -> Result<Vec<ImageTensor>> {
        for &t in targets {
            self.check(t)?;
        }
        let code = self.latent(x, from)?;
        targets.iter().map(|&t| self.decode(&code, t)).collect()
    }

    /// `grid[i][j]` is image `i` translated to domain `j`; the diagonal holds
    /// the inputs unchanged.
    pub fn translate_grid(&self, images: &[ImageTensor]) -> Result<Vec<Vec<ImageTensor>>> {
        let n = self.registry.len();
        if images.len() != n {
            return Err(Error::Config(format!("grid needs one image per domain ({n}), got {}", images.len())));
        }
        let mut grid = Vec::with_capacity(n);
        for (i, img) in images.iter().enumerate() {
            let from = self.registry.id(i)?;
            let code = self.latent(img, from)?;
            let mut row = Vec::with_capacity(n);
            for j in 0..n {
                if i == j {
                    row.push(img.clone());
                } else {
                    row.push(self.decode(&code, self.registry.id(j)?)?);
                }
            }
            grid.push(row);
        }
        Ok(grid)
    }
}
