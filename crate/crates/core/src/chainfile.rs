//! Chain file format: length-prefixed binary records plus a JSON export.
//!
//! Layout: `"TFQC"` magic, version u16, tag width u16, then records of
//! `(type u8, len u32, body)`. Record type 1 is a block (84-byte header,
//! tx count, length-prefixed canonical transactions, evidence payload);
//! type 2 is the epilogue evidence payload covering the tip block. All
//! integers big-endian.

use std::path::Path;

use thiserror::Error;

use crate::auth::AuthVector;
use crate::gf::GfWord;
use crate::keystore::EvidencePayload;
use crate::ledger::{Block, BlockHeader, Chain, Transaction, TxPayload};

pub const MAGIC: &[u8; 4] = b"TFQC";
pub const VERSION: u16 = 1;

const RECORD_BLOCK: u8 = 1;
const RECORD_EPILOGUE: u8 = 2;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ChainFileError {
    #[error("bad magic or truncated preamble")]
    BadMagic,
    #[error("unsupported version {0}")]
    BadVersion(u16),
    #[error("file tag width {file} does not match requested width {requested}")]
    WidthMismatch { file: u16, requested: u16 },
    #[error("truncated or malformed record at byte {0}")]
    Malformed(usize),
    #[error("io: {0}")]
    Io(String),
}

fn push_block<W: GfWord>(out: &mut Vec<u8>, block: &Block<W>) {
    let mut body = Vec::new();
    body.extend_from_slice(&block.header.height.to_be_bytes());
    body.extend_from_slice(&block.header.prev_hash);
    body.extend_from_slice(&block.header.body_digest);
    body.extend_from_slice(&block.header.proposer.to_be_bytes());
    body.extend_from_slice(&block.header.view.to_be_bytes());
    body.extend_from_slice(&(block.transactions.len() as u32).to_be_bytes());
    for tx in &block.transactions {
        let bytes = tx.canonical_bytes();
        body.extend_from_slice(&(bytes.len() as u32).to_be_bytes());
        body.extend_from_slice(&bytes);
    }
    body.extend_from_slice(&block.evidence_for_previous.canonical_bytes());
    out.push(RECORD_BLOCK);
    out.extend_from_slice(&(body.len() as u32).to_be_bytes());
    out.extend_from_slice(&body);
}

/// Serialize a chain (and its epilogue, when present) to the binary format.
pub fn chain_to_bytes<W: GfWord>(chain: &Chain<W>) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_be_bytes());
    out.extend_from_slice(&(W::BITS as u16).to_be_bytes());
    for block in &chain.blocks {
        push_block(&mut out, block);
    }
    if let Some(epilogue) = &chain.epilogue {
        let body = epilogue.canonical_bytes();
        out.push(RECORD_EPILOGUE);
        out.extend_from_slice(&(body.len() as u32).to_be_bytes());
        out.extend_from_slice(&body);
    }
    out
}

/// Tag width recorded in a chain file preamble (for dispatch).
pub fn peek_width(bytes: &[u8]) -> Result<u16, ChainFileError> {
    if bytes.len() < 8 || &bytes[..4] != MAGIC {
        return Err(ChainFileError::BadMagic);
    }
    let version = u16::from_be_bytes([bytes[4], bytes[5]]);
    if version != VERSION {
        return Err(ChainFileError::BadVersion(version));
    }
    Ok(u16::from_be_bytes([bytes[6], bytes[7]]))
}

fn parse_tx<W: GfWord>(bytes: &[u8], at: usize) -> Result<Transaction<W>, ChainFileError> {
    let bad = || ChainFileError::Malformed(at);
    if bytes.len() < 36 {
        return Err(bad());
    }
    let sender = u32::from_be_bytes(bytes[0..4].try_into().map_err(|_| bad())?);
    let ctr = u64::from_be_bytes(bytes[4..12].try_into().map_err(|_| bad())?);
    let payload = TxPayload {
        sender: u32::from_be_bytes(bytes[12..16].try_into().map_err(|_| bad())?),
        receiver: u32::from_be_bytes(bytes[16..20].try_into().map_err(|_| bad())?),
        amount: u64::from_be_bytes(bytes[20..28].try_into().map_err(|_| bad())?),
        timestamp_us: u64::from_be_bytes(bytes[28..36].try_into().map_err(|_| bad())?),
    };
    let vec_bytes = &bytes[36..];
    let width = W::byte_len();
    if vec_bytes.len() < 4 || (vec_bytes.len() - 4) % width != 0 {
        return Err(bad());
    }
    let nodes = ((vec_bytes.len() - 4) / width) as u32;
    let vector = AuthVector::<W>::from_be_slice(vec_bytes, nodes).ok_or_else(bad)?;
    Ok(Transaction {
        sender,
        ctr,
        payload,
        vector,
    })
}

fn parse_block<W: GfWord>(body: &[u8], at: usize) -> Result<Block<W>, ChainFileError> {
    let bad = || ChainFileError::Malformed(at);
    if body.len() < 88 {
        return Err(bad());
    }
    let header = BlockHeader {
        height: u64::from_be_bytes(body[0..8].try_into().map_err(|_| bad())?),
        prev_hash: body[8..40].try_into().map_err(|_| bad())?,
        body_digest: body[40..72].try_into().map_err(|_| bad())?,
        proposer: u32::from_be_bytes(body[72..76].try_into().map_err(|_| bad())?),
        view: u64::from_be_bytes(body[76..84].try_into().map_err(|_| bad())?),
    };
    let tx_count = u32::from_be_bytes(body[84..88].try_into().map_err(|_| bad())?);
    let mut cursor = 88usize;
    let mut transactions = Vec::with_capacity(tx_count as usize);
    for _ in 0..tx_count {
        let len_bytes = body.get(cursor..cursor + 4).ok_or_else(bad)?;
        let len = u32::from_be_bytes(len_bytes.try_into().map_err(|_| bad())?) as usize;
        cursor += 4;
        let tx_bytes = body.get(cursor..cursor + len).ok_or_else(bad)?;
        transactions.push(parse_tx::<W>(tx_bytes, at + cursor)?);
        cursor += len;
    }
    let (evidence, used) =
        EvidencePayload::<W>::from_be_slice(&body[cursor..]).ok_or_else(bad)?;
    if cursor + used != body.len() {
        return Err(bad());
    }
    Ok(Block {
        header,
        transactions,
        evidence_for_previous: evidence,
    })
}

/// Parse a chain file; the requested word type must match the recorded
/// width.
pub fn chain_from_bytes<W: GfWord>(bytes: &[u8]) -> Result<Chain<W>, ChainFileError> {
    let width = peek_width(bytes)?;
    if width != W::BITS as u16 {
        return Err(ChainFileError::WidthMismatch {
            file: width,
            requested: W::BITS as u16,
        });
    }
    let mut at = 8usize;
    let mut blocks = Vec::new();
    let mut epilogue = None;
    while at < bytes.len() {
        let kind = bytes[at];
        let len_bytes = bytes
            .get(at + 1..at + 5)
            .ok_or(ChainFileError::Malformed(at))?;
        let len = u32::from_be_bytes(len_bytes.try_into().unwrap()) as usize;
        let body = bytes
            .get(at + 5..at + 5 + len)
            .ok_or(ChainFileError::Malformed(at))?;
        match kind {
            RECORD_BLOCK => blocks.push(parse_block::<W>(body, at)?),
            RECORD_EPILOGUE => {
                let (payload, used) =
                    EvidencePayload::<W>::from_be_slice(body).ok_or(ChainFileError::Malformed(at))?;
                if used != body.len() {
                    return Err(ChainFileError::Malformed(at));
                }
                epilogue = Some(payload);
            }
            _ => return Err(ChainFileError::Malformed(at)),
        }
        at += 5 + len;
    }
    if blocks.is_empty() {
        return Err(ChainFileError::Malformed(8));
    }
    Ok(Chain { blocks, epilogue })
}

pub fn save_chain<W: GfWord>(chain: &Chain<W>, path: &Path) -> Result<(), ChainFileError> {
    std::fs::write(path, chain_to_bytes(chain)).map_err(|e| ChainFileError::Io(e.to_string()))
}

pub fn load_chain<W: GfWord>(path: &Path) -> Result<Chain<W>, ChainFileError> {
    let bytes = std::fs::read(path).map_err(|e| ChainFileError::Io(e.to_string()))?;
    chain_from_bytes(&bytes)
}

/// Human-readable JSON rendering of the whole chain.
pub fn chain_to_json<W: GfWord>(chain: &Chain<W>) -> String {
    serde_json::to_string_pretty(chain).expect("chain serializes")
}
