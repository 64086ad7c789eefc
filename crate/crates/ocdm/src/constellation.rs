//! Unit-energy symbol alphabets with Gray bit labelling.

use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ConstellationKind {
    Bpsk,
    Qam4,
}

impl ConstellationKind {
    pub fn bits_per_symbol(self) -> usize {
        match self {
            ConstellationKind::Bpsk => 1,
            ConstellationKind::Qam4 => 2,
        }
    }
}

impl fmt::Display for ConstellationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ConstellationKind::Bpsk => write!(f, "bpsk"),
            ConstellationKind::Qam4 => write!(f, "qam4"),
        }
    }
}

impl FromStr for ConstellationKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "bpsk" => Ok(ConstellationKind::Bpsk),
            "qam4" | "4qam" | "qpsk" => Ok(ConstellationKind::Qam4),
            other => Err(Error::InvalidConfig(format!(
                "unknown constellation '{other}' (expected bpsk or qam4)"
            ))),
        }
    }
}

/// A symbol alphabet with average energy 1 and a Gray label per point.
///
/// `labels[m]` holds the bit pattern carried by point `m` (MSB first when
/// split into bits); nearest points along each axis differ in one bit.
#[derive(Debug, Clone)]
pub struct Constellation {
    kind: ConstellationKind,
    points: Vec<Complex64>,
    labels: Vec<u8>,
    index_of_label: Vec<usize>,
}

impl Constellation {
    pub fn new(kind: ConstellationKind) -> Self {
        let (points, labels): (Vec<Complex64>, Vec<u8>) = match kind {
            // Bit 0 -> +1, bit 1 -> -1.
            ConstellationKind::Bpsk => (
                vec![Complex64::new(1.0, 0.0), Complex64::new(-1.0, 0.0)],
                vec![0, 1],
            ),
            // First bit selects the real sign, second the imaginary sign
            // (0 -> +, 1 -> -); points scaled to unit energy.
            ConstellationKind::Qam4 => {
                let a = 1.0 / 2f64.sqrt();
                let mut points = Vec::new();
                let mut labels = Vec::new();
                for m in 0u8..4 {
                    let re = if m & 0b10 == 0 { a } else { -a };
                    let im = if m & 0b01 == 0 { a } else { -a };
                    points.push(Complex64::new(re, im));
                    labels.push(m);
                }
                (points, labels)
            }
        };
        let mut index_of_label = vec![0usize; points.len()];
        for (idx, &lab) in labels.iter().enumerate() {
            index_of_label[lab as usize] = idx;
        }
        Self {
            kind,
            points,
            labels,
            index_of_label,
        }
    }

    pub fn kind(&self) -> ConstellationKind {
        self.kind
    }

    pub fn points(&self) -> &[Complex64] {
        &self.points
    }

    pub fn size(&self) -> usize {
        self.points.len()
    }

    pub fn bits_per_symbol(&self) -> usize {
        self.kind.bits_per_symbol()
    }

    pub fn point(&self, index: usize) -> Complex64 {
        self.points[index]
    }

    /// Map a bit stream (0/1 values, length a multiple of bits-per-symbol)
    /// to point indices.
    pub fn map_bits(&self, bits: &[u8]) -> Result<Vec<usize>> {
        let bps = self.bits_per_symbol();
        if bits.len() % bps != 0 {
            return Err(Error::InvalidConfig(format!(
                "bit count {} is not a multiple of {bps}",
                bits.len()
            )));
        }
        Ok(bits
            .chunks(bps)
            .map(|group| {
                let mut label = 0u8;
                for &b in group {
                    label = (label << 1) | (b & 1);
                }
                self.index_of_label[label as usize]
            })
            .collect())
    }

    /// Expand point indices back into the bit stream they carry.
    pub fn bits_from_indices(&self, indices: &[usize]) -> Vec<u8> {
        let bps = self.bits_per_symbol();
        let mut bits = Vec::with_capacity(indices.len() * bps);
        for &idx in indices {
            let label = self.labels[idx];
            for k in (0..bps).rev() {
                bits.push((label >> k) & 1);
            }
        }
        bits
    }

    /// Index of the constellation point nearest to `z`.
    pub fn hard_decision(&self, z: Complex64) -> usize {
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for (idx, p) in self.points.iter().enumerate() {
            let d = (z - p).norm_sqr();
            if d < best_d {
                best_d = d;
                best = idx;
            }
        }
        best
    }

    pub fn indices_to_points(&self, indices: &[usize]) -> Vec<Complex64> {
        indices.iter().map(|&i| self.points[i]).collect()
    }
}
