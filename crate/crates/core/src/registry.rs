use std::collections::HashSet;

use crate::domain::DomainId;
use crate::error::{Error, Result};
use crate::networks::{ArchSpec, Network, Role};
use crate::tensor::Real;

/// The encoder, decoder and discriminator owned by one domain.
#[derive(Clone, Debug, PartialEq)]
pub struct DomainModels<T = f32> {
    pub name: String,
    pub encoder: Network<T>,
    pub decoder: Network<T>,
    pub discriminator: Network<T>,
}

impl<T: Real> DomainModels<T> {
    pub fn network(&self, role: Role) -> &Network<T> {
        match role {
            Role::Encoder => &self.encoder,
            Role::Decoder => &self.decoder,
            Role::Discriminator => &self.discriminator,
        }
    }

    pub fn network_mut(&mut self, role: Role) -> &mut Network<T> {
        match role {
            Role::Encoder => &mut self.encoder,
            Role::Decoder => &mut self.decoder,
            Role::Discriminator => &mut self.discriminator,
        }
    }

    pub fn fingerprint(&self) -> String {
        Role::ALL.iter().map(|&r| self.network(r).fingerprint()).collect::<Vec<_>>().join(":")
    }
}

/// Per-domain network triples, indexed densely by [`DomainId`] in name order.
#[derive(Clone, Debug, PartialEq)]
pub struct DomainRegistry<T = f32> {
    arch: ArchSpec,
    domains: Vec<DomainModels<T>>,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Independent initialization seed for one network of one domain.
pub fn network_seed(base: u64, domain: usize, role: Role) -> u64 {
    let slot = domain as u64 * 3 + Role::ALL.iter().position(|&r| r == role).unwrap() as u64;
    splitmix64(base ^ splitmix64(slot))
}

pub fn validate_names<S: AsRef<str>>(names: &[S]) -> Result<()> {
    if names.len() < 2 {
        return Err(Error::TooFewDomains(names.len()));
    }
    let mut seen = HashSet::new();
    for n in names {
        let n = n.as_ref();
        if n.is_empty() {
            return Err(Error::Config("domain names must be nonempty".into()));
        }
        if !seen.insert(n) {
            return Err(Error::DuplicateDomain(n.to_string()));
        }
    }
    Ok(())
}

impl<T: Real> DomainRegistry<T> {
    /// One freshly initialized encoder/decoder/discriminator per name.
    pub fn build<S: AsRef<str>>(names: &[S], arch: &ArchSpec, seed: u64) -> Result<Self> {
        validate_names(names)?;
        let mut domains = Vec::with_capacity(names.len());
        for (i, name) in names.iter().enumerate() {
            let net = |role| -> Result<Network<T>> {
                let mut n = Network::build(role, arch)?;
                n.init_weights(network_seed(seed, i, role));
                Ok(n)
            };
            domains.push(DomainModels {
                name: name.as_ref().to_string(),
                encoder: net(Role::Encoder)?,
                decoder: net(Role::Decoder)?,
                discriminator: net(Role::Discriminator)?,
            });
        }
        Ok(Self { arch: arch.clone(), domains })
    }

    /// Assembles a registry from existing networks, checking that every
    /// network matches the architecture.
    pub fn from_parts(arch: ArchSpec, domains: Vec<DomainModels<T>>) -> Result<Self> {
        validate_names(&domains.iter().map(|d| d.name.as_str()).collect::<Vec<_>>())?;
        for role in Role::ALL {
            let reference = Network::<T>::build(role, &arch)?.inventory();
            for d in &domains {
                if d.network(role).role() != role || d.network(role).inventory() != reference {
                    return Err(Error::Config(format!(
                        "{} of domain `{}` does not match the architecture",
                        role.name(),
                        d.name
                    )));
                }
            }
        }
        Ok(Self { arch, domains })
    }

    pub fn len(&self) -> usize {
        self.domains.len()
    }

    pub fn is_empty(&self) -> bool {
        self.domains.is_empty()
    }

    pub fn arch(&self) -> &ArchSpec {
        &self.arch
    }

    pub fn names(&self) -> Vec<&str> {
        self.domains.iter().map(|d| d.name.as_str()).collect()
    }

    pub fn ids(&self) -> impl Iterator<Item = DomainId> {
        DomainId::all(self.domains.len())
    }

    pub fn id(&self, index: usize) -> Result<DomainId> {
        DomainId::new(index, self.len())
    }

    pub fn id_of(&self, name: &str) -> Result<DomainId> {
        self.domains.iter().position(|d| d.name == name).map(DomainId::new_unchecked).ok_or_else(|| {
            Error::UnknownDomain { name: name.to_string(), valid: self.names().iter().map(|s| s.to_string()).collect() }
        })
    }

    pub fn domain(&self, id: DomainId) -> &DomainModels<T> {
        &self.domains[id.index()]
    }

    pub fn domain_mut(&mut self, id: DomainId) -> &mut DomainModels<T> {
        &mut self.domains[id.index()]
    }

    pub fn domains(&self) -> &[DomainModels<T>] {
        &self.domains
    }

    pub fn network(&self, id: DomainId, role: Role) -> &Network<T> {
        self.domain(id).network(role)
    }

    pub fn network_mut(&mut self, id: DomainId, role: Role) -> &mut Network<T> {
        self.domain_mut(id).network_mut(role)
    }

    pub fn network_count(&self) -> usize {
        3 * self.domains.len()
    }

    pub fn parameter_count(&self) -> usize {
        self.domains.iter().flat_map(|d| Role::ALL.map(|r| d.network(r).parameter_count())).sum()
    }

    pub fn cast<U: Real>(&self) -> DomainRegistry<U> {
        DomainRegistry {
            arch: self.arch.clone(),
            domains: self
                .domains
                .iter()
                .map(|d| DomainModels {
                    name: d.name.clone(),
                    encoder: d.encoder.cast(),
                    decoder: d.decoder.cast(),
                    discriminator: d.discriminator.cast(),
                })
                .collect(),
        }
    }
}
