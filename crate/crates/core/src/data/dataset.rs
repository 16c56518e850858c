use std::path::{Path, PathBuf};

use image::imageops;
use rand::seq::SliceRandom;
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::image_io::{decode_rgb, probe, resize, rgb_to_tensor};
use crate::domain::{DomainId, ImageTensor};
use crate::error::{Error, Result};

const EXTENSIONS: [&str; 3] = ["png", "jpg", "jpeg"];

/// Fraction of each domain held out for validation by default.
pub const DEFAULT_HOLDOUT: f64 = 0.05;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetOptions {
    /// `(height, width)`, both multiples of 4.
    pub target_size: (usize, usize),
    pub flip: bool,
    pub crop: bool,
}

impl Default for DatasetOptions {
    fn default() -> Self {
        Self { target_size: (256, 256), flip: true, crop: false }
    }
}

impl DatasetOptions {
    pub fn validate(&self) -> Result<()> {
        let (h, w) = self.target_size;
        if h == 0 || w == 0 || h % 4 != 0 || w % 4 != 0 {
            return Err(Error::Config(format!("target size {h}x{w} must be a nonzero multiple of 4")));
        }
        Ok(())
    }
}

/// Anything the trainer can draw per-domain examples from.
pub trait ImageSource {
    fn domain_count(&self) -> usize;

    fn domain_len(&self, d: DomainId) -> usize;

    /// Reshuffles every domain's draw order.
    fn begin_epoch(&mut self, rng: &mut ChaCha8Rng);

    /// Next example of `d` in the current order, wrapping around when exhausted.
    fn draw(&mut self, d: DomainId, rng: &mut ChaCha8Rng) -> Result<ImageTensor>;
}

/// Per-domain shuffled draw order with a cursor.
#[derive(Clone, Debug, Default)]
struct DrawOrder {
    order: Vec<Vec<usize>>,
    cursor: Vec<usize>,
}

impl DrawOrder {
    fn new(lens: impl Iterator<Item = usize>) -> Self {
        let order: Vec<Vec<usize>> = lens.map(|n| (0..n).collect()).collect();
        let cursor = vec![0; order.len()];
        Self { order, cursor }
    }

    /// Depends only on `rng`, so a resumed run reproduces the order.
    fn shuffle(&mut self, rng: &mut ChaCha8Rng) {
        for (o, c) in self.order.iter_mut().zip(&mut self.cursor) {
            for (k, v) in o.iter_mut().enumerate() {
                *v = k;
            }
            o.shuffle(rng);
            *c = 0;
        }
    }

    fn next(&mut self, d: usize) -> Option<usize> {
        let order = &self.order[d];
        if order.is_empty() {
            return None;
        }
        let i = order[self.cursor[d] % order.len()];
        self.cursor[d] += 1;
        Some(i)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DomainFiles {
    pub name: String,
    pub files: Vec<PathBuf>,
}

/// Folder-per-domain image dataset: `<root>/<domain>/*.{png,jpg,jpeg}`.
#[derive(Clone, Debug)]
pub struct DatasetHandle {
    pub root: PathBuf,
    pub domains: Vec<DomainFiles>,
    pub options: DatasetOptions,
    order: DrawOrder,
    skipped: Vec<PathBuf>,
}

fn is_image(p: &Path) -> bool {
    p.extension()
        .and_then(|e| e.to_str())
        .map(|e| EXTENSIONS.contains(&e.to_ascii_lowercase().as_str()))
        .unwrap_or(false)
}

fn sorted_entries(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for entry in std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let entry = entry.map_err(|e| Error::io(dir, e))?;
        let name = entry.file_name();
        if name.to_string_lossy().starts_with('.') {
            continue;
        }
        out.push(entry.path());
    }
    out.sort();
    Ok(out)
}

/// One domain per immediate subdirectory, named after it, in sorted order.
pub fn scan_dataset(root: &Path, options: DatasetOptions) -> Result<DatasetHandle> {
    options.validate()?;
    if !root.is_dir() {
        return Err(Error::Data(format!("dataset root {} is not a directory", root.display())));
    }
    let mut domains = Vec::new();
    for dir in sorted_entries(root)?.into_iter().filter(|p| p.is_dir()) {
        let name = dir.file_name().unwrap().to_string_lossy().into_owned();
        let files: Vec<PathBuf> = sorted_entries(&dir)?.into_iter().filter(|p| p.is_file() && is_image(p)).collect();
        if files.is_empty() {
            return Err(Error::Data(format!("domain `{name}` contains no images")));
        }
        for f in &files {
            probe(f)?;
        }
        domains.push(DomainFiles { name, files });
    }
    if domains.len() < 2 {
        return Err(Error::TooFewDomains(domains.len()));
    }
    Ok(DatasetHandle::from_domains(root.to_path_buf(), domains, options))
}

impl DatasetHandle {
    pub fn from_domains(root: PathBuf, domains: Vec<DomainFiles>, options: DatasetOptions) -> Self {
        let order = DrawOrder::new(domains.iter().map(|d| d.files.len()));
        Self { root, domains, options, order, skipped: Vec::new() }
    }

    pub fn names(&self) -> Vec<String> {
        self.domains.iter().map(|d| d.name.clone()).collect()
    }

    pub fn largest_domain(&self) -> usize {
        self.domains.iter().map(|d| d.files.len()).max().unwrap_or(0)
    }

    /// Files that failed to decode during draws.
    pub fn skipped(&self) -> &[PathBuf] {
        &self.skipped
    }

    /// Seeded per-domain split into `(train, held_out)`. Every domain keeps at
    /// least one training file; domains with two or more files hold out at least one.
    pub fn split(&self, holdout: f64, seed: u64) -> (DatasetHandle, DatasetHandle) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut train = Vec::new();
        let mut held = Vec::new();
        for d in &self.domains {
            let mut files = d.files.clone();
            files.shuffle(&mut rng);
            let n = files.len();
            let k = if n < 2 { 0 } else { ((n as f64 * holdout).round() as usize).clamp(1, n - 1) };
            let mut held_files = files.split_off(n - k);
            files.sort();
            held_files.sort();
            train.push(DomainFiles { name: d.name.clone(), files });
            held.push(DomainFiles { name: d.name.clone(), files: held_files });
        }
        (
            DatasetHandle::from_domains(self.root.clone(), train, self.options),
            DatasetHandle::from_domains(self.root.clone(), held, self.options),
        )
    }

    /// Decodes, crops or resizes to the target size and normalizes one file, without flipping.
    pub fn load_file(&self, path: &Path, rng: Option<&mut ChaCha8Rng>) -> Result<ImageTensor> {
        let img = decode_rgb(path)?;
        let (h, w) = self.options.target_size;
        let img = match (self.options.crop, rng) {
            (true, Some(rng)) => {
                // resize slightly larger, then take a random window
                let (lh, lw) = (h + h / 8, w + w / 8);
                let big = resize(&img, (lh, lw));
                let y = rng.random_range(0..=lh - h) as u32;
                let x = rng.random_range(0..=lw - w) as u32;
                imageops::crop_imm(&big, x, y, w as u32, h as u32).to_image()
            }
            _ => resize(&img, (h, w)),
        };
        rgb_to_tensor(&img)
    }

    pub fn load(&self, d: DomainId, index: usize) -> Result<ImageTensor> {
        let path = self
            .domains
            .get(d.index())
            .and_then(|dom| dom.files.get(index))
            .ok_or_else(|| Error::Data(format!("no file {index} in domain {d}")))?;
        self.load_file(path, None)
    }
}

/// Horizontal flip with probability one half, when enabled.
pub fn maybe_flip(img: ImageTensor, flip: bool, rng: &mut ChaCha8Rng) -> ImageTensor {
    if flip && rng.random_bool(0.5) {
        img.flip_horizontal()
    } else {
        img
    }
}

/// Draws the next example of domain `d`: decode, resize, normalize, random flip.
/// Undecodable files are skipped and reported.
pub fn load_example(h: &mut DatasetHandle, d: DomainId, rng: &mut ChaCha8Rng) -> Result<ImageTensor> {
    let n = h.domains.get(d.index()).map(|x| x.files.len()).unwrap_or(0);
    for _ in 0..n {
        let idx = h.order.next(d.index()).expect("nonempty domain");
        let path = h.domains[d.index()].files[idx].clone();
        let crop_rng = h.options.crop.then_some(&mut *rng);
        match h.load_file(&path, crop_rng) {
            Ok(img) => return Ok(maybe_flip(img, h.options.flip, rng)),
            Err(e @ Error::Decode { .. }) => {
                log::warn!("skipping {}: {e}", path.display());
                if !h.skipped.contains(&path) {
                    h.skipped.push(path);
                }
            }
            Err(e) => return Err(e),
        }
    }
    Err(Error::Data(format!("domain {d} has no decodable images")))
}

impl ImageSource for DatasetHandle {
    fn domain_count(&self) -> usize {
        self.domains.len()
    }

    fn domain_len(&self, d: DomainId) -> usize {
        self.domains.get(d.index()).map(|x| x.files.len()).unwrap_or(0)
    }

    fn begin_epoch(&mut self, rng: &mut ChaCha8Rng) {
        self.order.shuffle(rng);
    }

    fn draw(&mut self, d: DomainId, rng: &mut ChaCha8Rng) -> Result<ImageTensor> {
        load_example(self, d, rng)
    }
}

/// Pre-decoded images held in memory.
#[derive(Clone, Debug)]
pub struct MemoryDataset {
    pub names: Vec<String>,
    pub images: Vec<Vec<ImageTensor>>,
    pub flip: bool,
    order: DrawOrder,
}

impl MemoryDataset {
    pub fn new(names: Vec<String>, images: Vec<Vec<ImageTensor>>, flip: bool) -> Result<Self> {
        if names.len() != images.len() {
            return Err(Error::Data("one image list per domain name required".into()));
        }
        if let Some((i, _)) = images.iter().enumerate().find(|(_, v)| v.is_empty()) {
            return Err(Error::Data(format!("domain `{}` is empty", names[i])));
        }
        let order = DrawOrder::new(images.iter().map(Vec::len));
        Ok(Self { names, images, flip, order })
    }

    /// Decodes every file of a dataset up front.
    pub fn from_handle(h: &DatasetHandle) -> Result<Self> {
        let images = h
            .domains
            .iter()
            .map(|d| d.files.iter().map(|f| h.load_file(f, None)).collect::<Result<Vec<_>>>())
            .collect::<Result<Vec<_>>>()?;
        Self::new(h.names(), images, h.options.flip)
    }
}

impl ImageSource for MemoryDataset {
    fn domain_count(&self) -> usize {
        self.images.len()
    }

    fn domain_len(&self, d: DomainId) -> usize {
        self.images.get(d.index()).map(Vec::len).unwrap_or(0)
    }

    fn begin_epoch(&mut self, rng: &mut ChaCha8Rng) {
        self.order.shuffle(rng);
    }

    fn draw(&mut self, d: DomainId, rng: &mut ChaCha8Rng) -> Result<ImageTensor> {
        let idx = self.order.next(d.index()).ok_or_else(|| Error::Data(format!("domain {d} is empty")))?;
        Ok(maybe_flip(self.images[d.index()][idx].clone(), self.flip, rng))
    }
}
