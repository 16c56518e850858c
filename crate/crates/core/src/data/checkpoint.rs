//! Single-file checkpoint container.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! "XLATCKPT" | u32 version | u64 meta_len | meta (JSON) | sha256(meta)
//! u32 blob_count
//! per blob: u32 name_len | name | u32 ndim | u64 dims[ndim] | u64 n | sha256(data) | f32 data[n]
//! ```
//!
//! Blobs hold network weights, optimizer moments and fake-pool images in a
//! fixed order, so a save of a loaded checkpoint reproduces the file.

use std::io::{Read, Write};
use std::path::Path;

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::domain::{ImageTensor, ObjectiveConfig};
use crate::error::{Error, Result};
use crate::networks::{ArchSpec, Network, Role};
use crate::optim::{Adam, AdamConfig};
use crate::registry::{DomainModels, DomainRegistry};
use crate::scheduler::{PairSampler, TrainPlan};
use crate::tensor::Tensor;
use crate::trainer::{DomainOptimizers, FakePool, TrainState};

pub const MAGIC: &[u8; 8] = b"XLATCKPT";
pub const FORMAT_VERSION: u32 = 1;
pub const EXTENSION: &str = "cgan";

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub registry: DomainRegistry,
    pub state: TrainState,
}

impl Checkpoint {
    /// Fails unless the checkpoint's domains are exactly `names`, in order.
    pub fn expect_domains<S: AsRef<str>>(&self, names: &[S]) -> Result<()> {
        let have = self.registry.names();
        let want: Vec<&str> = names.iter().map(AsRef::as_ref).collect();
        if have != want {
            return Err(Error::Checkpoint(format!(
                "checkpoint has {} domains [{}], requested {} [{}]",
                have.len(),
                have.join(", "),
                want.len(),
                want.join(", ")
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct Meta {
    arch: ArchSpec,
    domains: Vec<String>,
    plan: TrainPlan,
    objective: ObjectiveConfig,
    adam: AdamConfig,
    epoch: usize,
    iteration: u64,
    sampler: PairSampler,
    data_rng: ChaCha8Rng,
    pool_rng: ChaCha8Rng,
    pool_capacity: usize,
    /// Optimizer step counts per domain, in role order.
    adam_steps: Vec<[u64; 3]>,
    pool_sizes: Vec<usize>,
}

struct Blob {
    name: String,
    dims: Vec<usize>,
    data: Vec<f32>,
}

fn blob_sha(data: &[f32]) -> [u8; 32] {
    let mut h = Sha256::new();
    for v in data {
        h.update(v.to_le_bytes());
    }
    h.finalize().into()
}

fn network_blobs(prefix: &str, net: &Network, blobs: &mut Vec<Blob>) {
    for p in net.params() {
        blobs.push(Blob { name: format!("{prefix}/{}", p.name), dims: p.shape.clone(), data: p.data.clone() });
    }
}

fn adam_blobs(prefix: &str, net: &Network, adam: &Adam, blobs: &mut Vec<Blob>) {
    for (kind, moments) in [("adam.m", &adam.first_moment), ("adam.v", &adam.second_moment)] {
        for (p, m) in net.params().iter().zip(moments) {
            blobs.push(Blob { name: format!("{prefix}/{kind}/{}", p.name), dims: p.shape.clone(), data: m.clone() });
        }
    }
}

fn encode(reg: &DomainRegistry, state: &TrainState) -> Result<Vec<u8>> {
    if state.optimizers.len() != reg.len() || state.pools.len() != reg.len() {
        return Err(Error::Checkpoint("training state does not match the registry".into()));
    }
    let meta = Meta {
        arch: reg.arch().clone(),
        domains: reg.names().iter().map(|s| s.to_string()).collect(),
        plan: state.plan.clone(),
        objective: state.objective,
        adam: state.adam,
        epoch: state.epoch,
        iteration: state.iteration,
        sampler: state.sampler.clone(),
        data_rng: state.data_rng.clone(),
        pool_rng: state.pool_rng.clone(),
        pool_capacity: state.pool_capacity(),
        adam_steps: state.optimizers.iter().map(|o| Role::ALL.map(|r| o.get(r).step)).collect(),
        pool_sizes: state.pools.iter().map(FakePool::len).collect(),
    };
    let mut blobs = Vec::new();
    for (i, d) in reg.domains().iter().enumerate() {
        for role in Role::ALL {
            network_blobs(&format!("{i}/{}", role.name()), d.network(role), &mut blobs);
        }
    }
    for (i, (d, opt)) in reg.domains().iter().zip(&state.optimizers).enumerate() {
        for role in Role::ALL {
            adam_blobs(&format!("{i}/{}", role.name()), d.network(role), opt.get(role), &mut blobs);
        }
    }
    for (i, pool) in state.pools.iter().enumerate() {
        for (k, img) in pool.images().iter().enumerate() {
            blobs.push(Blob {
                name: format!("{i}/pool/{k}"),
                dims: img.shape().to_vec(),
                data: img.tensor().data().to_vec(),
            });
        }
    }

    let meta = serde_json::to_vec_pretty(&meta).map_err(|e| Error::Checkpoint(e.to_string()))?;
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(meta.len() as u64).to_le_bytes());
    out.extend_from_slice(&meta);
    out.extend_from_slice(&Sha256::digest(&meta));
    out.extend_from_slice(&(blobs.len() as u32).to_le_bytes());
    for b in &blobs {
        out.extend_from_slice(&(b.name.len() as u32).to_le_bytes());
        out.extend_from_slice(b.name.as_bytes());
        out.extend_from_slice(&(b.dims.len() as u32).to_le_bytes());
        for &d in &b.dims {
            out.extend_from_slice(&(d as u64).to_le_bytes());
        }
        out.extend_from_slice(&(b.data.len() as u64).to_le_bytes());
        out.extend_from_slice(&blob_sha(&b.data));
        for v in &b.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

/// Writes the checkpoint atomically: a temporary file in the target directory
/// is renamed over `path`.
pub fn save_checkpoint(path: &Path, reg: &DomainRegistry, state: &TrainState) -> Result<()> {
    let bytes = encode(reg, state)?;
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| Error::io(dir, e))?;
    tmp.write_all(&bytes).map_err(|e| Error::io(path, e))?;
    tmp.as_file().sync_all().map_err(|e| Error::io(path, e))?;
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| Error::Checkpoint("truncated file".into()))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn len(&mut self) -> Result<usize> {
        usize::try_from(self.u64()?).map_err(|_| Error::Checkpoint("length overflow".into()))
    }
}

fn decode_blobs(r: &mut Reader<'_>) -> Result<Vec<Blob>> {
    let count = r.u32()? as usize;
    let mut blobs = Vec::with_capacity(count.min(1 << 16));
    for _ in 0..count {
        let name_len = r.u32()? as usize;
        let name = String::from_utf8(r.take(name_len)?.to_vec())
            .map_err(|_| Error::Checkpoint("blob name is not UTF-8".into()))?;
        let ndim = r.u32()? as usize;
        let dims = (0..ndim).map(|_| r.len()).collect::<Result<Vec<_>>>()?;
        let n = r.len()?;
        if dims.iter().product::<usize>() != n {
            return Err(Error::Checkpoint(format!("blob `{name}` dims {dims:?} disagree with length {n}")));
        }
        let sha: [u8; 32] = r.take(32)?.try_into().unwrap();
        let raw = r.take(n.checked_mul(4).ok_or_else(|| Error::Checkpoint("length overflow".into()))?)?;
        let data: Vec<f32> = raw.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect();
        if blob_sha(&data) != sha {
            return Err(Error::Checksum(name));
        }
        blobs.push(Blob { name, dims, data });
    }
    if r.pos != r.bytes.len() {
        return Err(Error::Checkpoint("trailing bytes after the last blob".into()));
    }
    Ok(blobs)
}

struct BlobQueue {
    blobs: std::vec::IntoIter<Blob>,
}

impl BlobQueue {
    fn next(&mut self, name: &str, dims: &[usize]) -> Result<Vec<f32>> {
        let b = self.blobs.next().ok_or_else(|| Error::Checkpoint(format!("missing blob `{name}`")))?;
        if b.name != name || b.dims != dims {
            return Err(Error::Checkpoint(format!("expected blob `{name}` {dims:?}, found `{}` {:?}", b.name, b.dims)));
        }
        Ok(b.data)
    }
}

fn decode(bytes: &[u8]) -> Result<Checkpoint> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(8).ok() != Some(MAGIC.as_slice()) {
        return Err(Error::Checkpoint("not a checkpoint file".into()));
    }
    let version = r.u32()?;
    if version != FORMAT_VERSION {
        return Err(Error::VersionSkew { found: version, expected: FORMAT_VERSION });
    }
    let meta_len = r.len()?;
    let meta_bytes = r.take(meta_len)?;
    let sha = r.take(32)?;
    if Sha256::digest(meta_bytes).as_slice() != sha {
        return Err(Error::Checksum("meta".into()));
    }
    let meta: Meta = serde_json::from_slice(meta_bytes).map_err(|e| Error::Checkpoint(format!("metadata: {e}")))?;
    let n = meta.domains.len();
    if meta.adam_steps.len() != n || meta.pool_sizes.len() != n {
        return Err(Error::Checkpoint("metadata lists disagree on the domain count".into()));
    }
    let mut q = BlobQueue { blobs: decode_blobs(&mut r)?.into_iter() };

    let mut domains = Vec::with_capacity(n);
    for (i, name) in meta.domains.iter().enumerate() {
        let mut net = |role: Role| -> Result<Network> {
            let mut net = Network::build(role, &meta.arch)?;
            for p in net.params_mut() {
                p.data = q.next(&format!("{i}/{}/{}", role.name(), p.name), &p.shape)?;
            }
            Ok(net)
        };
        domains.push(DomainModels {
            name: name.clone(),
            encoder: net(Role::Encoder)?,
            decoder: net(Role::Decoder)?,
            discriminator: net(Role::Discriminator)?,
        });
    }
    let registry = DomainRegistry::from_parts(meta.arch.clone(), domains)?;

    let mut optimizers = Vec::with_capacity(n);
    for (i, d) in registry.domains().iter().enumerate() {
        let mut adam = |role: Role, k: usize| -> Result<Adam> {
            let net = d.network(role);
            let mut a = Adam::new(net, meta.adam);
            a.step = meta.adam_steps[i][k];
            let prefix = format!("{i}/{}", role.name());
            for (slot, kind) in [(&mut a.first_moment, "adam.m"), (&mut a.second_moment, "adam.v")] {
                for (m, p) in slot.iter_mut().zip(net.params()) {
                    *m = q.next(&format!("{prefix}/{kind}/{}", p.name), &p.shape)?;
                }
            }
            Ok(a)
        };
        optimizers.push(DomainOptimizers {
            encoder: adam(Role::Encoder, 0)?,
            decoder: adam(Role::Decoder, 1)?,
            discriminator: adam(Role::Discriminator, 2)?,
        });
    }

    let mut pools = Vec::with_capacity(n);
    for (i, &size) in meta.pool_sizes.iter().enumerate() {
        let mut images = Vec::with_capacity(size);
        for k in 0..size {
            let b = q.blobs.next().ok_or_else(|| Error::Checkpoint(format!("missing pool image {i}/{k}")))?;
            let shape: [usize; 3] = b
                .dims
                .as_slice()
                .try_into()
                .map_err(|_| Error::Checkpoint(format!("pool image `{}` is not 3-dimensional", b.name)))?;
            if b.name != format!("{i}/pool/{k}") {
                return Err(Error::Checkpoint(format!("expected pool image {i}/{k}, found `{}`", b.name)));
            }
            images.push(ImageTensor::new(Tensor::from_vec(shape, b.data)?)?);
        }
        pools.push(FakePool::from_images(meta.pool_capacity, images));
    }
    if q.blobs.next().is_some() {
        return Err(Error::Checkpoint("unexpected extra blobs".into()));
    }

    let state = TrainState {
        plan: meta.plan,
        objective: meta.objective,
        adam: meta.adam,
        epoch: meta.epoch,
        iteration: meta.iteration,
        sampler: meta.sampler,
        data_rng: meta.data_rng,
        pool_rng: meta.pool_rng,
        optimizers,
        pools,
    };
    if state.plan.n_domains != n {
        return Err(Error::Checkpoint(format!("plan is for {} domains, checkpoint holds {n}", state.plan.n_domains)));
    }
    Ok(Checkpoint { registry, state })
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let mut bytes = Vec::new();
    std::fs::File::open(path).and_then(|mut f| f.read_to_end(&mut bytes)).map_err(|e| Error::io(path, e))?;
    decode(&bytes)
}
