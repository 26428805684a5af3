//! Sparse coding-vector generation and packet streams.
//!
//! A layer of `k` source packets is sent either as a non-systematic stream of
//! random coded packets, or systematically (the `k` source packets verbatim,
//! then coded packets). Each coefficient of a random coding vector is zero
//! with probability `p_zero` and otherwise uniform over the `q - 1` nonzero
//! elements; the dense schemes are the special case `p_zero = 1/q`.
//!
//! Pruned streams never emit an all-zero coding vector: the draw is rejected
//! and repeated. Rejected draws still advance the stream's RNG, so a pruned
//! stream is exactly the non-pruned stream with its all-zero packets removed.

mod decoder;
pub mod trace;

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gf::{Field, FieldElement, FieldSpec};
use crate::rng::{self, StreamRng};

pub use decoder::{Decoder, DecoderConfig, FinishOutcome, InsertOutcome, OpCounting};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CodecError {
    #[error("coding vector has length {actual}, decoder expects {expected}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("payload has length {actual}, decoder expects {expected}")]
    PayloadLengthMismatch { expected: usize, actual: usize },
    #[error("sparsity must satisfy 0 < p_zero < 1, got {0}")]
    InvalidSparsity(f64),
    #[error("layer length k must be at least 1")]
    EmptyLayer,
    #[error("scheme {scheme} is dense and requires p_zero = 1/{q}, got {p_zero}")]
    DenseSchemeSparsity { scheme: Scheme, q: u32, p_zero: f64 },
    #[error("pruning only applies to sparse schemes, not {0}")]
    PrunedDenseScheme(Scheme),
    #[error("expected {expected} source payloads, got {actual}")]
    SourceCountMismatch { expected: usize, actual: usize },
}

/// The four coding schemes. The `Sparse*` variants allow any `p_zero`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Scheme {
    #[serde(rename = "rlnc")]
    Rlnc,
    #[serde(rename = "srlnc")]
    Srlnc,
    #[serde(rename = "s-rlnc")]
    SparseRlnc,
    #[serde(rename = "s-srlnc")]
    SparseSrlnc,
}

impl Scheme {
    pub const ALL: [Scheme; 4] = [Scheme::Rlnc, Scheme::Srlnc, Scheme::SparseRlnc, Scheme::SparseSrlnc];

    pub fn is_systematic(self) -> bool {
        matches!(self, Scheme::Srlnc | Scheme::SparseSrlnc)
    }

    pub fn is_sparse(self) -> bool {
        matches!(self, Scheme::SparseRlnc | Scheme::SparseSrlnc)
    }

    /// The sparse scheme with the same systematic structure.
    pub fn sparse(self) -> Scheme {
        if self.is_systematic() {
            Scheme::SparseSrlnc
        } else {
            Scheme::SparseRlnc
        }
    }

    /// The dense scheme with the same systematic structure.
    pub fn dense(self) -> Scheme {
        if self.is_systematic() {
            Scheme::Srlnc
        } else {
            Scheme::Rlnc
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Scheme::Rlnc => "rlnc",
            Scheme::Srlnc => "srlnc",
            Scheme::SparseRlnc => "s-rlnc",
            Scheme::SparseSrlnc => "s-srlnc",
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Scheme {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "rlnc" => Ok(Scheme::Rlnc),
            "srlnc" => Ok(Scheme::Srlnc),
            "s-rlnc" => Ok(Scheme::SparseRlnc),
            "s-srlnc" => Ok(Scheme::SparseSrlnc),
            other => Err(format!(
                "unknown scheme `{other}` (expected rlnc, srlnc, s-rlnc or s-srlnc)"
            )),
        }
    }
}

/// Coefficient distribution for one layer.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SparsityParams {
    p_zero: f64,
    k: usize,
    field: FieldSpec,
}

impl SparsityParams {
    pub fn new(p_zero: f64, k: usize, field: FieldSpec) -> Result<Self, CodecError> {
        if !(p_zero > 0.0 && p_zero < 1.0) {
            return Err(CodecError::InvalidSparsity(p_zero));
        }
        if k == 0 {
            return Err(CodecError::EmptyLayer);
        }
        Ok(SparsityParams { p_zero, k, field })
    }

    /// The dense distribution, `p_zero = 1/q`: every vector equiprobable.
    pub fn dense(k: usize, field: FieldSpec) -> Result<Self, CodecError> {
        Self::new(1.0 / field.q() as f64, k, field)
    }

    pub fn p_zero(&self) -> f64 {
        self.p_zero
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn field(&self) -> FieldSpec {
        self.field
    }

    pub fn is_dense(&self) -> bool {
        (self.p_zero * self.field.q() as f64 - 1.0).abs() < 1e-12
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VectorKind {
    /// A unit vector: an uncoded (systematic) source packet.
    Degenerate,
    Random,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CodingVector {
    pub coefficients: Vec<FieldElement>,
    pub kind: VectorKind,
}

impl CodingVector {
    pub fn unit(k: usize, position: usize) -> Self {
        let mut coefficients = vec![FieldElement::ZERO; k];
        coefficients[position] = FieldElement::ONE;
        CodingVector {
            coefficients,
            kind: VectorKind::Degenerate,
        }
    }

    pub fn len(&self) -> usize {
        self.coefficients.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coefficients.is_empty()
    }

    pub fn is_zero(&self) -> bool {
        self.coefficients.iter().all(|c| c.is_zero())
    }

    pub fn nonzeros(&self) -> usize {
        self.coefficients.iter().filter(|c| !c.is_zero()).count()
    }
}

/// Draws one random coding vector. The result may be all-zero.
pub fn draw_coding_vector<R: Rng + ?Sized>(sparsity: &SparsityParams, rng: &mut R) -> CodingVector {
    let q = sparsity.field.q();
    let coefficients = (0..sparsity.k)
        .map(|_| {
            if rng.gen::<f64>() < sparsity.p_zero {
                FieldElement::ZERO
            } else if q == 2 {
                FieldElement::ONE
            } else {
                FieldElement::from_raw(rng.gen_range(1..q) as u8)
            }
        })
        .collect();
    CodingVector {
        coefficients,
        kind: VectorKind::Random,
    }
}

/// Everything needed to reproduce one layer's packet stream.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PacketStreamConfig {
    pub scheme: Scheme,
    pub pruned: bool,
    pub sparsity: SparsityParams,
    pub rng_seed: u64,
}

impl PacketStreamConfig {
    pub fn new(scheme: Scheme, pruned: bool, sparsity: SparsityParams, rng_seed: u64) -> Result<Self, CodecError> {
        let config = PacketStreamConfig {
            scheme,
            pruned,
            sparsity,
            rng_seed,
        };
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), CodecError> {
        if !self.scheme.is_sparse() {
            if !self.sparsity.is_dense() {
                return Err(CodecError::DenseSchemeSparsity {
                    scheme: self.scheme,
                    q: self.sparsity.field.q(),
                    p_zero: self.sparsity.p_zero,
                });
            }
            if self.pruned {
                return Err(CodecError::PrunedDenseScheme(self.scheme));
            }
        }
        Ok(())
    }

    pub fn k(&self) -> usize {
        self.sparsity.k
    }
}

/// Produces the packet at position `index` of a stream.
///
/// Systematic schemes return unit vectors for indices `0..k`; every other
/// packet is a fresh draw from `rng`. Pruned configurations redraw until the
/// vector is nonzero.
pub fn generate_packet<R: Rng + ?Sized>(config: &PacketStreamConfig, index: u64, rng: &mut R) -> CodingVector {
    let k = config.sparsity.k;
    if config.scheme.is_systematic() && index < k as u64 {
        return CodingVector::unit(k, index as usize);
    }
    loop {
        let v = draw_coding_vector(&config.sparsity, rng);
        if !config.pruned || !v.is_zero() {
            return v;
        }
    }
}

/// A packet together with its position in the stream.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Packet {
    pub index: u64,
    pub vector: CodingVector,
}

/// Stateful packet source for one layer.
#[derive(Debug, Clone)]
pub struct Encoder {
    config: PacketStreamConfig,
    rng: StreamRng,
    next_index: u64,
}

impl Encoder {
    pub fn new(config: PacketStreamConfig) -> Result<Self, CodecError> {
        config.validate()?;
        Ok(Encoder {
            config,
            rng: rng::stream(config.rng_seed, &[]),
            next_index: 0,
        })
    }

    pub fn config(&self) -> &PacketStreamConfig {
        &self.config
    }

    pub fn next_packet(&mut self) -> Packet {
        let index = self.next_index;
        self.next_index += 1;
        Packet {
            index,
            vector: generate_packet(&self.config, index, &mut self.rng),
        }
    }
}

impl Iterator for Encoder {
    type Item = Packet;

    fn next(&mut self) -> Option<Packet> {
        Some(self.next_packet())
    }
}

/// Linear combination of the source payloads selected by `vector`.
pub fn encode_payload(
    field: &Field,
    vector: &CodingVector,
    sources: &[Vec<FieldElement>],
) -> Result<Vec<FieldElement>, CodecError> {
    if sources.len() != vector.len() {
        return Err(CodecError::SourceCountMismatch {
            expected: vector.len(),
            actual: sources.len(),
        });
    }
    let width = sources.first().map_or(0, Vec::len);
    let mut out = vec![FieldElement::ZERO; width];
    for (c, src) in vector.coefficients.iter().zip(sources) {
        if c.is_zero() {
            continue;
        }
        if src.len() != width {
            return Err(CodecError::PayloadLengthMismatch {
                expected: width,
                actual: src.len(),
            });
        }
        for (o, s) in out.iter_mut().zip(src) {
            *o = field.fused_mul_add(*o, *c, *s);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn sp(p: f64, k: usize, q: u32) -> SparsityParams {
        SparsityParams::new(p, k, FieldSpec::from_q(q).unwrap()).unwrap()
    }

    #[test]
    fn sparsity_validation() {
        let f = FieldSpec::gf2();
        assert_eq!(SparsityParams::new(0.0, 4, f), Err(CodecError::InvalidSparsity(0.0)));
        assert_eq!(SparsityParams::new(1.0, 4, f), Err(CodecError::InvalidSparsity(1.0)));
        assert!(SparsityParams::new(f64::NAN, 4, f).is_err());
        assert_eq!(SparsityParams::new(0.5, 0, f), Err(CodecError::EmptyLayer));
        assert!(SparsityParams::dense(4, f).unwrap().is_dense());
        assert!(!sp(0.6, 4, 2).is_dense());
    }

    #[test]
    fn zero_fraction_follows_p_zero() {
        let params = sp(0.8, 10, 2);
        let mut rng = StreamRng::seed_from_u64(11);
        let mut zeros = 0usize;
        let draws = 100_000;
        for _ in 0..draws {
            zeros += draw_coding_vector(&params, &mut rng)
                .coefficients
                .iter()
                .filter(|c| c.is_zero())
                .count();
        }
        let frac = zeros as f64 / (draws * 10) as f64;
        assert!((frac - 0.8).abs() < 0.01, "zero fraction {frac}");
    }

    #[test]
    fn binary_half_density_is_uniform() {
        let params = sp(0.5, 8, 2);
        let mut rng = StreamRng::seed_from_u64(3);
        let mut counts = [0usize; 256];
        let draws = 256 * 400;
        for _ in 0..draws {
            let v = draw_coding_vector(&params, &mut rng);
            let idx = v
                .coefficients
                .iter()
                .enumerate()
                .fold(0usize, |acc, (i, c)| acc | ((c.value() as usize) << i));
            counts[idx] += 1;
        }
        let expected = draws as f64 / 256.0;
        let chi2: f64 = counts.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
        // 255 degrees of freedom; 99.9th percentile is about 330.
        assert!(chi2 < 330.0, "chi-square {chi2}");
    }

    #[test]
    fn dense_gf256_coefficients_are_uniform() {
        let params = sp(1.0 / 256.0, 10, 256);
        let mut rng = StreamRng::seed_from_u64(5);
        let mut counts = [0usize; 256];
        for _ in 0..100_000 {
            for c in draw_coding_vector(&params, &mut rng).coefficients {
                counts[c.value() as usize] += 1;
            }
        }
        let expected = 1_000_000.0 / 256.0;
        let chi2: f64 = counts.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
        assert!(chi2 < 330.0, "chi-square {chi2}");
    }

    #[test]
    fn systematic_phase_emits_unit_vectors() {
        let config = PacketStreamConfig::new(Scheme::SparseSrlnc, false, sp(0.7, 10, 2), 1).unwrap();
        let mut rng = StreamRng::seed_from_u64(0);
        let v = generate_packet(&config, 3, &mut rng);
        assert_eq!(v, CodingVector::unit(10, 3));
        assert_eq!(v.kind, VectorKind::Degenerate);
        let coded = generate_packet(&config, 10, &mut rng);
        assert_eq!(coded.kind, VectorKind::Random);

        let mut enc = Encoder::new(config).unwrap();
        for i in 0..10 {
            assert_eq!(enc.next_packet().vector, CodingVector::unit(10, i));
        }
        assert_eq!(enc.next_packet().vector.kind, VectorKind::Random);
    }

    #[test]
    fn pruned_stream_never_emits_zero() {
        let config = PacketStreamConfig::new(Scheme::SparseRlnc, true, sp(0.95, 5, 2), 9).unwrap();
        let enc = Encoder::new(config).unwrap();
        assert!(enc.take(20_000).all(|p| !p.vector.is_zero()));
    }

    #[test]
    fn non_pruned_zero_frequency() {
        let config = PacketStreamConfig::new(Scheme::SparseRlnc, false, sp(0.9, 10, 2), 4).unwrap();
        let enc = Encoder::new(config).unwrap();
        let n = 100_000;
        let zeros = enc.take(n).filter(|p| p.vector.is_zero()).count();
        let freq = zeros as f64 / n as f64;
        assert!((freq - 0.9f64.powi(10)).abs() < 0.01, "zero frequency {freq}");
    }

    #[test]
    fn pruned_stream_is_non_pruned_without_zeros() {
        let base = PacketStreamConfig::new(Scheme::SparseRlnc, false, sp(0.85, 6, 256), 77).unwrap();
        let pruned = PacketStreamConfig { pruned: true, ..base };
        let a: Vec<_> = Encoder::new(base)
            .unwrap()
            .take(2000)
            .map(|p| p.vector)
            .filter(|v| !v.is_zero())
            .collect();
        let b: Vec<_> = Encoder::new(pruned).unwrap().take(a.len()).map(|p| p.vector).collect();
        assert_eq!(a, b);
    }

    #[test]
    fn dense_schemes_require_dense_sparsity() {
        assert!(matches!(
            PacketStreamConfig::new(Scheme::Rlnc, false, sp(0.7, 4, 2), 0),
            Err(CodecError::DenseSchemeSparsity { .. })
        ));
        assert!(PacketStreamConfig::new(Scheme::Rlnc, false, sp(0.5, 4, 2), 0).is_ok());
        assert_eq!(
            PacketStreamConfig::new(Scheme::Srlnc, true, sp(0.5, 4, 2), 0),
            Err(CodecError::PrunedDenseScheme(Scheme::Srlnc))
        );
    }

    #[test]
    fn scheme_names_roundtrip() {
        for s in Scheme::ALL {
            assert_eq!(s.as_str().parse::<Scheme>().unwrap(), s);
        }
        assert!("foo".parse::<Scheme>().is_err());
        assert_eq!(Scheme::Rlnc.sparse(), Scheme::SparseRlnc);
        assert_eq!(Scheme::SparseSrlnc.dense(), Scheme::Srlnc);
    }

    #[test]
    fn payload_encoding_is_linear() {
        let field = Field::gf256();
        let sources = vec![vec![FieldElement::ONE; 3], vec![field.element(2).unwrap(); 3]];
        let v = CodingVector {
            coefficients: vec![field.element(3).unwrap(), FieldElement::ONE],
            kind: VectorKind::Random,
        };
        // 3·1 + 1·2 = 3 XOR 2 = 1
        assert_eq!(
            encode_payload(&field, &v, &sources).unwrap(),
            vec![FieldElement::ONE; 3]
        );
        assert!(encode_payload(&field, &v, &sources[..1]).is_err());
    }
}
