//! Canonical byte encoding, domain-separated SHA-256 digests, salted
//! commitments and Ed25519 identities.
//!
//! Every hash and signature in the crate goes through [`digest`], [`commit`]
//! or [`sign`] with exactly one [`DomainTag`]. The tag prefix is
//! `"CM1:" || TAG || 0x00`; tags are ASCII without NUL, so prefixes never
//! overlap.

mod bytes;
mod container;
mod keys;
mod serde_codec;
mod value;

use sha2::{Digest as _, Sha256};
use thiserror::Error;

pub use bytes::{Blob, Digest, Nonce, PublicIdentity, Salt, Signature};
pub use container::{frame, unframe, ContainerKind, CONTAINER_VERSION};
pub use keys::{sign, verify, verify_raw, KeyPair};
pub use serde_codec::{from_canonical, from_value, to_canonical, to_value};
pub use value::{decode_canonical, encode_canonical, CanonicalBytes, Value, MAX_DEPTH};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CanonError {
    #[error("integer {0} does not fit in 64 unsigned bits")]
    IntegerOverflow(String),
    #[error("unexpected end of input")]
    UnexpectedEof,
    #[error("{0} trailing bytes after value")]
    TrailingBytes(usize),
    #[error("unknown kind byte {0:#04x}")]
    UnknownKind(u8),
    #[error("nesting deeper than {MAX_DEPTH}")]
    TooDeep,
    #[error("expected {expected}, found {got}")]
    Shape { expected: &'static str, got: &'static str },
    #[error("record has {got} fields, expected {expected}")]
    FieldCount { expected: usize, got: usize },
    #[error("invalid utf-8 in string leaf")]
    InvalidUtf8,
    #[error("{0} is not representable canonically")]
    Unsupported(&'static str),
    #[error("expected {expected} bytes, found {got}")]
    Length { expected: usize, got: usize },
    #[error("salt must be 16 bytes, found {0}")]
    SaltLength(usize),
    #[error("bad container magic")]
    BadMagic,
    #[error("unsupported container version {0}")]
    BadVersion(u8),
    #[error("{0}")]
    Serde(String),
}

/// Context label mixed into every digest and signature.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum DomainTag {
    Field,
    Interaction,
    Root,
    Receipt,
    Cert,
    Anchor,
    Token,
    Inherit,
    Hello,
    Confirm,
    Directory,
    Arbiter,
    Bulletin,
}

impl DomainTag {
    pub const ALL: [DomainTag; 13] = [
        DomainTag::Field,
        DomainTag::Interaction,
        DomainTag::Root,
        DomainTag::Receipt,
        DomainTag::Cert,
        DomainTag::Anchor,
        DomainTag::Token,
        DomainTag::Inherit,
        DomainTag::Hello,
        DomainTag::Confirm,
        DomainTag::Directory,
        DomainTag::Arbiter,
        DomainTag::Bulletin,
    ];

    pub fn label(self) -> &'static str {
        match self {
            DomainTag::Field => "FIELD",
            DomainTag::Interaction => "INTERACTION",
            DomainTag::Root => "ROOT",
            DomainTag::Receipt => "RECEIPT",
            DomainTag::Cert => "CERT",
            DomainTag::Anchor => "ANCHOR",
            DomainTag::Token => "TOKEN",
            DomainTag::Inherit => "INHERIT",
            DomainTag::Hello => "HELLO",
            DomainTag::Confirm => "CONFIRM",
            DomainTag::Directory => "DIRECTORY",
            DomainTag::Arbiter => "ARBITER",
            DomainTag::Bulletin => "BULLETIN",
        }
    }

    /// Bytes hashed ahead of the payload.
    pub fn prefix(self) -> Vec<u8> {
        let mut p = b"CM1:".to_vec();
        p.extend_from_slice(self.label().as_bytes());
        p.push(0);
        p
    }
}

/// `SHA-256(tag prefix || payload)`.
pub fn digest(tag: DomainTag, payload: &[u8]) -> Digest {
    let mut h = Sha256::new();
    h.update(tag.prefix());
    h.update(payload);
    Digest(h.finalize().into())
}

/// Digest of the canonical encoding of `value`.
pub fn digest_value(tag: DomainTag, value: &Value) -> Digest {
    digest(tag, &encode_canonical(value))
}

/// Salted commitment `digest(tag, salt || payload)`.
pub fn commit(tag: DomainTag, salt: &[u8], payload: &[u8]) -> Result<Digest, CanonError> {
    if salt.len() != Salt::LEN {
        return Err(CanonError::SaltLength(salt.len()));
    }
    let mut h = Sha256::new();
    h.update(tag.prefix());
    h.update(salt);
    h.update(payload);
    Ok(Digest(h.finalize().into()))
}
