//! FPSH container files: the on-disk format for shares, triples, and models.
//!
//! Layout, byte-exact:
//!
//! ```text
//! "FPSH" | version: u8 | party: u8 | object type: u8 | shape0: u32 LE | shape1: u32 LE | u64 LE elements...
//! ```
//!
//! `party` is 1 or 2 for secret shares and 0 for public objects (e.g. a
//! decoded model container). The meaning of the two shape fields depends on
//! the object type:
//!
//! * matrix-shaped objects ([`ObjectType::ShareMatrix`] and the triple part
//!   files): shape is `(rows, cols)` of one record; pool files stack
//!   `data.len() / (rows*cols)` records back to back,
//! * flat pools (conversion tuples, AND words, odd masks, zero shares):
//!   shape is `(record count, words per record)`.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};

pub const MAGIC: [u8; 4] = *b"FPSH";
pub const VERSION: u8 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
pub enum ObjectType {
    /// A single share or plaintext matrix; shape = (rows, cols).
    ShareMatrix = 0x01,
    /// Stacked `A` factors of matrix multiplication triples.
    MatTripleA = 0x02,
    /// Stacked `B` factors.
    MatTripleB = 0x03,
    /// Stacked `C` products.
    MatTripleC = 0x04,
    /// Stacked `A` factors of elementwise (Hadamard) triples.
    HadTripleA = 0x05,
    HadTripleB = 0x06,
    HadTripleC = 0x07,
    /// Conversion tuples; shape = (count, 4) with record
    /// `[rho share, rho bit word, daBit xor share, daBit arithmetic share]`.
    Conversion = 0x08,
    /// Binary AND triples, 64 bit lanes per word; shape = (count, 3).
    AndWords = 0x09,
    /// Shares of random odd ring elements; shape = (count, 1).
    OddMask = 0x0a,
    /// Shares of zero, used to re-randomize sharings; shape = (count, 1).
    ZeroShare = 0x0b,
}

impl ObjectType {
    pub fn from_byte(b: u8) -> Result<Self> {
        Ok(match b {
            0x01 => ObjectType::ShareMatrix,
            0x02 => ObjectType::MatTripleA,
            0x03 => ObjectType::MatTripleB,
            0x04 => ObjectType::MatTripleC,
            0x05 => ObjectType::HadTripleA,
            0x06 => ObjectType::HadTripleB,
            0x07 => ObjectType::HadTripleC,
            0x08 => ObjectType::Conversion,
            0x09 => ObjectType::AndWords,
            0x0a => ObjectType::OddMask,
            0x0b => ObjectType::ZeroShare,
            other => return Err(Error::BadContainer(format!("unknown object type {other:#x}"))),
        })
    }

    /// Fixed words-per-record for flat pool types, `None` for matrix types.
    fn record_words(self) -> Option<u32> {
        match self {
            ObjectType::Conversion => Some(4),
            ObjectType::AndWords => Some(3),
            ObjectType::OddMask | ObjectType::ZeroShare => Some(1),
            _ => None,
        }
    }
}

/// One FPSH file in memory.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Container {
    pub party: u8,
    pub object_type: ObjectType,
    pub shape: (u32, u32),
    pub data: Vec<u64>,
}

impl Container {
    pub fn new(party: u8, object_type: ObjectType, shape: (u32, u32), data: Vec<u64>) -> Self {
        Container {
            party,
            object_type,
            shape,
            data,
        }
    }

    fn validate(&self) -> Result<()> {
        let (s0, s1) = self.shape;
        let record = s0 as usize * s1 as usize;
        match self.object_type.record_words() {
            Some(w) => {
                if s1 != w || self.data.len() != record {
                    return Err(Error::BadContainer(format!(
                        "{:?}: expected {s0} records of {w} words, found shape ({s0},{s1}) with {} words",
                        self.object_type,
                        self.data.len()
                    )));
                }
            }
            None => {
                if record == 0 || self.data.len() % record != 0 {
                    return Err(Error::BadContainer(format!(
                        "{:?}: data length {} is not a multiple of record size {record}",
                        self.object_type,
                        self.data.len()
                    )));
                }
            }
        }
        Ok(())
    }

    /// Number of stacked records in the file.
    pub fn record_count(&self) -> usize {
        let record = self.shape.0 as usize * self.shape.1 as usize;
        match self.object_type.record_words() {
            Some(_) => self.shape.0 as usize,
            None => {
                if record == 0 {
                    0
                } else {
                    self.data.len() / record
                }
            }
        }
    }

    pub fn write_to(&self, path: &Path) -> Result<()> {
        self.validate()?;
        let mut w = BufWriter::new(File::create(path)?);
        w.write_all(&MAGIC)?;
        w.write_all(&[VERSION, self.party, self.object_type as u8])?;
        w.write_all(&self.shape.0.to_le_bytes())?;
        w.write_all(&self.shape.1.to_le_bytes())?;
        for &x in &self.data {
            w.write_all(&x.to_le_bytes())?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_from(path: &Path) -> Result<Self> {
        let mut r = BufReader::new(File::open(path)?);
        let mut head = [0u8; 15];
        r.read_exact(&mut head)
            .map_err(|_| Error::BadContainer("truncated header".into()))?;
        if head[0..4] != MAGIC {
            return Err(Error::BadContainer("bad magic".into()));
        }
        if head[4] != VERSION {
            return Err(Error::BadContainer(format!("unsupported version {}", head[4])));
        }
        let party = head[5];
        if party > 2 {
            return Err(Error::BadContainer(format!("bad party byte {party}")));
        }
        let object_type = ObjectType::from_byte(head[6])?;
        let shape = (
            u32::from_le_bytes(head[7..11].try_into().unwrap()),
            u32::from_le_bytes(head[11..15].try_into().unwrap()),
        );
        let mut body = Vec::new();
        r.read_to_end(&mut body)?;
        if body.len() % 8 != 0 {
            return Err(Error::BadContainer("body is not a whole number of u64s".into()));
        }
        let data = body
            .chunks_exact(8)
            .map(|c| u64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        let c = Container {
            party,
            object_type,
            shape,
            data,
        };
        c.validate()?;
        Ok(c)
    }
}
