//! Incremental Gaussian-elimination decoder with operation counting.
//!
//! Received coding vectors are kept in row echelon form, indexed by pivot
//! column, with every pivot normalized to one. Inserting a vector eliminates
//! it against the existing pivots in column order; a nonzero residual becomes
//! a new pivot row. Once the rank reaches `k`, [`Decoder::finish`] performs
//! back-substitution.
//!
//! Operation accounting: a row operation `target -= f * source` costs one
//! fused multiply-subtract for every nonzero slot of `source` it touches
//! (pivot slot included), and normalizing a row costs one multiply per
//! nonzero slot. Payload arithmetic is added on top when the decoder counts
//! payloads and a payload is attached: one operation per payload symbol per
//! row operation. Forward-elimination and back-substitution counts are kept
//! separately.

use serde::{Deserialize, Serialize};

use super::{CodecError, CodingVector};
use crate::gf::{Field, FieldElement, FieldSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OpCounting {
    /// Only coding-coefficient arithmetic is counted.
    #[default]
    CoefficientsOnly,
    /// Coefficient arithmetic plus one operation per attached payload symbol
    /// for every row operation.
    WithPayload,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DecoderConfig {
    pub k: usize,
    pub field: FieldSpec,
    #[serde(default)]
    pub counting: OpCounting,
}

impl DecoderConfig {
    pub fn new(k: usize, field: FieldSpec) -> Self {
        DecoderConfig {
            k,
            field,
            counting: OpCounting::CoefficientsOnly,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct InsertOutcome {
    pub innovative: bool,
    pub ops_added: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FinishOutcome {
    pub total_ops: u64,
    pub solved: bool,
}

#[derive(Debug, Clone)]
pub struct Decoder {
    k: usize,
    field: Field,
    counting: OpCounting,
    pivot_rows: Vec<Option<usize>>,
    rows: Vec<Vec<FieldElement>>,
    payloads: Vec<Vec<FieldElement>>,
    attached: Option<Option<usize>>,
    forward_ops: u64,
    backsub_ops: u64,
    solved: bool,
    scratch: Vec<FieldElement>,
}

impl Decoder {
    pub fn new(config: DecoderConfig) -> Self {
        Decoder {
            k: config.k,
            field: Field::new(config.field),
            counting: config.counting,
            pivot_rows: vec![None; config.k],
            rows: Vec::with_capacity(config.k),
            payloads: Vec::new(),
            attached: None,
            forward_ops: 0,
            backsub_ops: 0,
            solved: false,
            scratch: Vec::with_capacity(config.k),
        }
    }

    /// Builds a decoder sharing an existing field context (avoids rebuilding
    /// tables when many decoders are created).
    pub fn with_field(k: usize, field: &Field, counting: OpCounting) -> Self {
        Decoder {
            k,
            field: field.clone(),
            counting,
            pivot_rows: vec![None; k],
            rows: Vec::with_capacity(k),
            payloads: Vec::new(),
            attached: None,
            forward_ops: 0,
            backsub_ops: 0,
            solved: false,
            scratch: Vec::with_capacity(k),
        }
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn rank(&self) -> usize {
        self.rows.len()
    }

    pub fn defect(&self) -> usize {
        self.k - self.rows.len()
    }

    pub fn is_complete(&self) -> bool {
        self.rows.len() == self.k
    }

    pub fn op_count(&self) -> u64 {
        self.forward_ops + self.backsub_ops
    }

    pub fn forward_ops(&self) -> u64 {
        self.forward_ops
    }

    pub fn backsub_ops(&self) -> u64 {
        self.backsub_ops
    }

    /// Inserts a coding vector without payload.
    pub fn insert(&mut self, vector: &CodingVector) -> Result<InsertOutcome, CodecError> {
        self.insert_slice(&vector.coefficients, None)
    }

    pub fn insert_with_payload(
        &mut self,
        vector: &CodingVector,
        payload: &[FieldElement],
    ) -> Result<InsertOutcome, CodecError> {
        self.insert_slice(&vector.coefficients, Some(payload))
    }

    fn payload_cost(&self, attached: bool) -> u64 {
        match (self.counting, attached) {
            (OpCounting::WithPayload, true) => self.attached.flatten().unwrap_or(0) as u64,
            _ => 0,
        }
    }

    fn insert_slice(
        &mut self,
        coefficients: &[FieldElement],
        payload: Option<&[FieldElement]>,
    ) -> Result<InsertOutcome, CodecError> {
        if coefficients.len() != self.k {
            return Err(CodecError::DimensionMismatch {
                expected: self.k,
                actual: coefficients.len(),
            });
        }
        // Payloads must be attached to every packet or to none.
        let attached = payload.map(<[FieldElement]>::len);
        match self.attached {
            None => self.attached = Some(attached),
            Some(expected) if expected != attached => {
                return Err(CodecError::PayloadLengthMismatch {
                    expected: expected.unwrap_or(0),
                    actual: attached.unwrap_or(0),
                })
            }
            Some(_) => {}
        }
        if self.is_complete() {
            return Ok(InsertOutcome {
                innovative: false,
                ops_added: 0,
            });
        }

        let field = &self.field;
        let k = self.k;
        let payload_cost = self.payload_cost(payload.is_some());
        let mut v = std::mem::take(&mut self.scratch);
        v.clear();
        v.extend_from_slice(coefficients);
        let mut pl = payload.map(<[FieldElement]>::to_vec);
        let mut ops = 0u64;

        for c in 0..k {
            let f = v[c];
            if f.is_zero() {
                continue;
            }
            match self.pivot_rows[c] {
                Some(r) => {
                    let row = &self.rows[r];
                    for j in c..k {
                        let s = row[j];
                        if !s.is_zero() {
                            v[j] = field.fused_mul_sub(v[j], f, s);
                            ops += 1;
                        }
                    }
                    if let Some(p) = pl.as_mut() {
                        let src = &self.payloads[r];
                        for (d, s) in p.iter_mut().zip(src) {
                            *d = field.fused_mul_sub(*d, f, *s);
                        }
                        ops += payload_cost;
                    }
                }
                None => {
                    if f != FieldElement::ONE {
                        let inv = field.inv(f).expect("nonzero pivot");
                        for x in v[c..].iter_mut() {
                            if !x.is_zero() {
                                *x = field.mul(*x, inv);
                                ops += 1;
                            }
                        }
                        if let Some(p) = pl.as_mut() {
                            for x in p.iter_mut() {
                                *x = field.mul(*x, inv);
                            }
                            ops += payload_cost;
                        }
                    }
                    self.pivot_rows[c] = Some(self.rows.len());
                    self.rows.push(v.clone());
                    if let Some(p) = pl {
                        self.payloads.push(p);
                    }
                    self.scratch = v;
                    self.forward_ops += ops;
                    return Ok(InsertOutcome {
                        innovative: true,
                        ops_added: ops,
                    });
                }
            }
        }
        self.scratch = v;
        self.forward_ops += ops;
        Ok(InsertOutcome {
            innovative: false,
            ops_added: ops,
        })
    }

    /// Back-substitutes once the rank reaches `k`. Calling it again is a
    /// no-op; calling it early reports `solved = false` without touching the
    /// matrix.
    pub fn finish(&mut self) -> FinishOutcome {
        if !self.is_complete() {
            return FinishOutcome {
                total_ops: self.op_count(),
                solved: false,
            };
        }
        if !self.solved {
            let field = self.field.clone();
            let has_payload = matches!(self.attached, Some(Some(_)));
            let payload_cost = self.payload_cost(has_payload);
            let mut ops = 0u64;
            for c in (0..self.k).rev() {
                let src = self.pivot_rows[c].expect("full rank");
                for c2 in 0..c {
                    let dst = self.pivot_rows[c2].expect("full rank");
                    let f = self.rows[dst][c];
                    if f.is_zero() {
                        continue;
                    }
                    // Rows are disjoint; split to borrow both.
                    let (s_row, d_row) = borrow_two(&mut self.rows, src, dst);
                    for j in c..self.k {
                        let s = s_row[j];
                        if !s.is_zero() {
                            d_row[j] = field.fused_mul_sub(d_row[j], f, s);
                            ops += 1;
                        }
                    }
                    if has_payload {
                        let (s_pl, d_pl) = borrow_two(&mut self.payloads, src, dst);
                        for (d, s) in d_pl.iter_mut().zip(s_pl.iter()) {
                            *d = field.fused_mul_sub(*d, f, *s);
                        }
                        ops += payload_cost;
                    }
                }
            }
            self.backsub_ops = ops;
            self.solved = true;
        }
        FinishOutcome {
            total_ops: self.op_count(),
            solved: true,
        }
    }

    /// Source payloads in order, once solved with payloads attached to every
    /// innovative packet.
    pub fn recovered_payloads(&self) -> Option<Vec<Vec<FieldElement>>> {
        if !self.solved || self.payloads.len() != self.k {
            return None;
        }
        Some(
            self.pivot_rows
                .iter()
                .map(|r| self.payloads[r.expect("full rank")].clone())
                .collect(),
        )
    }
}

fn borrow_two<T>(v: &mut [T], a: usize, b: usize) -> (&T, &mut T) {
    assert_ne!(a, b);
    if a < b {
        let (lo, hi) = v.split_at_mut(b);
        (&lo[a], &mut hi[0])
    } else {
        let (lo, hi) = v.split_at_mut(a);
        (&hi[0], &mut lo[b])
    }
}
