//! Digests, contract addresses, and simulated signing identities.
//!
//! Signatures are keyed SHA-256 digests over canonical encodings. They give
//! attribution and tamper evidence inside the simulation; they are not
//! public-key signatures.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest as _, Sha256};

pub const DIGEST_LEN: usize = 32;
pub const ADDRESS_LEN: usize = 20;

#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Digest(pub [u8; DIGEST_LEN]);

impl Digest {
    pub const ZERO: Digest = Digest([0; DIGEST_LEN]);

    pub fn of(bytes: &[u8]) -> Self {
        Self(Sha256::digest(bytes).into())
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }
}

impl fmt::Debug for Digest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Digest({}..)", &self.to_hex()[..12])
    }
}

impl fmt::Display for Digest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

impl FromStr for Digest {
    type Err = hex::FromHexError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut out = [0u8; DIGEST_LEN];
        hex::decode_to_slice(s, &mut out)?;
        Ok(Self(out))
    }
}

impl Serialize for Digest {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Digest {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        String::deserialize(d)?.parse().map_err(serde::de::Error::custom)
    }
}

/// Contract address: the first 20 bytes of `H(deployer, deployment nonce)`.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Address(pub [u8; ADDRESS_LEN]);

impl Address {
    /// Target of contract-creation transactions.
    pub const ZERO: Address = Address([0; ADDRESS_LEN]);

    pub fn derive(deployer: &str, nonce: u64) -> Self {
        let mut enc = Encoder::new(b"contract-address");
        enc.str(deployer).u64(nonce);
        let digest = enc.digest();
        let mut out = [0u8; ADDRESS_LEN];
        out.copy_from_slice(&digest.0[..ADDRESS_LEN]);
        Self(out)
    }
}

impl fmt::Debug for Address {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Address({self})")
    }
}

impl fmt::Display for Address {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "0x{}", hex::encode(self.0))
    }
}

impl FromStr for Address {
    type Err = hex::FromHexError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.strip_prefix("0x").unwrap_or(s);
        let mut out = [0u8; ADDRESS_LEN];
        hex::decode_to_slice(s, &mut out)?;
        Ok(Self(out))
    }
}

impl Serialize for Address {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Address {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        String::deserialize(d)?.parse().map_err(serde::de::Error::custom)
    }
}

/// Length-prefixed field concatenation, the canonical encoding for every
/// digest in the ledger. Each field is preceded by its length as a
/// big-endian u64, so distinct field sequences never encode identically.
#[derive(Debug, Clone)]
pub struct Encoder {
    buf: Vec<u8>,
}

impl Encoder {
    pub fn new(domain: &[u8]) -> Self {
        let mut enc = Self {
            buf: Vec::with_capacity(256),
        };
        enc.bytes(domain);
        enc
    }

    pub fn bytes(&mut self, b: &[u8]) -> &mut Self {
        self.buf.extend_from_slice(&(b.len() as u64).to_be_bytes());
        self.buf.extend_from_slice(b);
        self
    }

    pub fn str(&mut self, s: &str) -> &mut Self {
        self.bytes(s.as_bytes())
    }

    pub fn u64(&mut self, v: u64) -> &mut Self {
        self.bytes(&v.to_be_bytes())
    }

    pub fn finish(self) -> Vec<u8> {
        self.buf
    }

    pub fn digest(&self) -> Digest {
        Digest::of(&self.buf)
    }
}

/// A named signer with a simulated secret key.
#[derive(Clone, PartialEq, Eq)]
pub struct Identity {
    id: String,
    key: Digest,
}

impl fmt::Debug for Identity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Identity").field("id", &self.id).finish_non_exhaustive()
    }
}

impl Identity {
    /// Derives a key for `id` from a scenario secret.
    pub fn derive(id: impl Into<String>, secret: u64) -> Self {
        let id = id.into();
        let mut enc = Encoder::new(b"identity-key");
        enc.u64(secret).str(&id);
        Self { key: enc.digest(), id }
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    /// The verification handle the ledger keeps for this identity.
    pub fn key(&self) -> Digest {
        self.key
    }

    pub fn sign(&self, message: &[u8]) -> Digest {
        keyed_digest(&self.key, message)
    }
}

pub fn keyed_digest(key: &Digest, message: &[u8]) -> Digest {
    let mut enc = Encoder::new(b"signature");
    enc.bytes(&key.0).bytes(message);
    enc.digest()
}
