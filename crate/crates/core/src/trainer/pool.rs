use rand::RngExt;
use rand_chacha::ChaCha8Rng;

use crate::domain::ImageTensor;

pub const DEFAULT_POOL_CAPACITY: usize = 50;

/// History of generated images for one domain. Once full, each query returns
/// either the incoming fake or, with probability one half, a stored fake that
/// the incoming one replaces.
#[derive(Clone, Debug, PartialEq)]
pub struct FakePool {
    capacity: usize,
    images: Vec<ImageTensor>,
}

impl FakePool {
    pub fn new(capacity: usize) -> Self {
        Self { capacity, images: Vec::with_capacity(capacity) }
    }

    pub fn from_images(capacity: usize, mut images: Vec<ImageTensor>) -> Self {
        images.truncate(capacity);
        Self { capacity, images }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn images(&self) -> &[ImageTensor] {
        &self.images
    }

    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    pub fn query(&mut self, fake: ImageTensor, rng: &mut ChaCha8Rng) -> ImageTensor {
        if self.capacity == 0 {
            return fake;
        }
        if self.images.len() < self.capacity {
            self.images.push(fake.clone());
            return fake;
        }
        if rng.random_bool(0.5) {
            let i = rng.random_range(0..self.capacity);
            std::mem::replace(&mut self.images[i], fake)
        } else {
            fake
        }
    }
}
