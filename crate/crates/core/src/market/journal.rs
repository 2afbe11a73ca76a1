//! Append-only journal file: `magic[4] || version[1]` then records of
//! `u64 BE length || canonical payload`.
//!
//! A record cut short at the tail (a torn write) is dropped and the file is
//! truncated back to the last whole record. A whole record is never dropped.

use std::fs::{File, OpenOptions};
use std::io::{Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::canon::{ContainerKind, CONTAINER_VERSION};

#[derive(Debug, Error)]
pub enum JournalError {
    #[error("journal i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("journal header is not a version {CONTAINER_VERSION} CMJL header")]
    BadHeader,
}

pub const HEADER_LEN: usize = 5;

pub fn header() -> [u8; HEADER_LEN] {
    let m = ContainerKind::Journal.magic();
    [m[0], m[1], m[2], m[3], CONTAINER_VERSION]
}

/// Splits journal bytes into whole record payloads and the length of the
/// valid prefix.
pub fn split_records(bytes: &[u8]) -> Result<(Vec<&[u8]>, usize), JournalError> {
    if bytes.len() < HEADER_LEN || bytes[..HEADER_LEN] != header() {
        return Err(JournalError::BadHeader);
    }
    let mut out = Vec::new();
    let mut pos = HEADER_LEN;
    loop {
        let rest = &bytes[pos..];
        if rest.len() < 8 {
            break;
        }
        let len = u64::from_be_bytes(rest[..8].try_into().expect("8 bytes"));
        let Some(end) = usize::try_from(len).ok().and_then(|l| l.checked_add(8)) else {
            break;
        };
        if rest.len() < end {
            break;
        }
        out.push(&rest[8..end]);
        pos += end;
    }
    Ok((out, pos))
}

#[derive(Debug)]
pub struct Journal {
    file: File,
    path: PathBuf,
    sync: bool,
    len: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Replay {
    pub records: Vec<Vec<u8>>,
    /// Bytes cut from a torn tail.
    pub discarded: u64,
}

impl Journal {
    /// Opens or creates the journal at `path`, returning every whole record.
    pub fn open(path: &Path, sync: bool) -> Result<(Journal, Replay), JournalError> {
        let mut file = OpenOptions::new().read(true).write(true).create(true).truncate(false).open(path)?;
        let mut bytes = Vec::new();
        file.read_to_end(&mut bytes)?;
        let (records, valid, discarded) = if bytes.is_empty() {
            file.write_all(&header())?;
            (Vec::new(), HEADER_LEN, 0)
        } else if bytes.len() < HEADER_LEN && header().starts_with(&bytes) {
            // torn header
            file.set_len(0)?;
            file.seek(SeekFrom::Start(0))?;
            file.write_all(&header())?;
            (Vec::new(), HEADER_LEN, bytes.len() as u64)
        } else {
            let (recs, valid) = split_records(&bytes)?;
            let recs: Vec<Vec<u8>> = recs.into_iter().map(<[u8]>::to_vec).collect();
            if valid < bytes.len() {
                file.set_len(valid as u64)?;
            }
            (recs, valid, (bytes.len() - valid) as u64)
        };
        file.seek(SeekFrom::Start(valid as u64))?;
        if sync {
            file.sync_all()?;
        }
        Ok((
            Journal {
                file,
                path: path.to_path_buf(),
                sync,
                len: valid as u64,
            },
            Replay { records, discarded },
        ))
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    /// File length in bytes.
    pub fn len(&self) -> u64 {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == HEADER_LEN as u64
    }

    pub fn append(&mut self, payload: &[u8]) -> Result<(), JournalError> {
        let mut buf = Vec::with_capacity(8 + payload.len());
        buf.extend_from_slice(&(payload.len() as u64).to_be_bytes());
        buf.extend_from_slice(payload);
        self.file.write_all(&buf)?;
        self.file.flush()?;
        if self.sync {
            self.file.sync_data()?;
        }
        self.len += buf.len() as u64;
        Ok(())
    }
}
