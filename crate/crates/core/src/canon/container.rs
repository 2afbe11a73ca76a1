//! Versioned container framing: `magic[4] || version[1] || canonical payload`.

use serde::de::DeserializeOwned;
use serde::Serialize;

use super::{from_canonical, to_canonical, CanonError};

pub const CONTAINER_VERSION: u8 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ContainerKind {
    /// Memory artifact with its disclosure proof.
    Artifact,
    /// Enclave, platform and peer messages.
    Message,
    /// Platform journal file header.
    Journal,
    /// Signed gang member list.
    MemberList,
}

impl ContainerKind {
    pub fn magic(self) -> [u8; 4] {
        match self {
            ContainerKind::Artifact => *b"CMAR",
            ContainerKind::Message => *b"CMMS",
            ContainerKind::Journal => *b"CMJL",
            ContainerKind::MemberList => *b"CMML",
        }
    }
}

pub fn frame<T: Serialize + ?Sized>(kind: ContainerKind, value: &T) -> Result<Vec<u8>, CanonError> {
    let payload = to_canonical(value)?;
    let mut out = Vec::with_capacity(5 + payload.len());
    out.extend_from_slice(&kind.magic());
    out.push(CONTAINER_VERSION);
    out.extend_from_slice(&payload);
    Ok(out)
}

pub fn unframe<T: DeserializeOwned>(kind: ContainerKind, bytes: &[u8]) -> Result<T, CanonError> {
    if bytes.len() < 5 || bytes[..4] != kind.magic() {
        return Err(CanonError::BadMagic);
    }
    if bytes[4] != CONTAINER_VERSION {
        return Err(CanonError::BadVersion(bytes[4]));
    }
    from_canonical(&bytes[5..])
}
