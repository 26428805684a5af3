//! Line-delimited JSON packet traces for debugging.

use std::io::{self, Write};

use serde::{Deserialize, Serialize};

use super::{CodingVector, VectorKind};

/// One transmitted packet as seen by one receiver.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub layer: usize,
    pub index: u64,
    pub kind: VectorKind,
    /// Coefficients as lowercase hex, two digits per element.
    pub coefficients: String,
    pub erased: bool,
}

impl TraceRecord {
    pub fn new(layer: usize, index: u64, vector: &CodingVector, erased: bool) -> Self {
        let coefficients = vector
            .coefficients
            .iter()
            .map(|c| format!("{:02x}", c.value()))
            .collect();
        TraceRecord {
            layer,
            index,
            kind: vector.kind,
            coefficients,
            erased,
        }
    }
}

pub fn write_trace<W: Write>(records: &[TraceRecord], mut out: W) -> io::Result<()> {
    for r in records {
        serde_json::to_writer(&mut out, r)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}
