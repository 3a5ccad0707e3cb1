use std::io::{Read, Write};

use crate::C64;

use super::ModelError;

/// Complex matched-filter samples of one channel and CPI.
///
/// Logical shape is `L × Γ × N` (element, range bin, pulse). Storage is
/// range-major so that [`column`](Self::column) is a contiguous slice of
/// length `L·N` with element `l·N + n`.
#[derive(Debug, Clone, PartialEq)]
pub struct DataCube {
    pub channel: usize,
    pub cpi: usize,
    num_elements: usize,
    num_bins: usize,
    num_pulses: usize,
    samples: Vec<C64>,
}

/// Magic bytes opening a cube dump.
pub const CUBE_MAGIC: [u8; 8] = *b"MSTBDCB1";

impl DataCube {
    pub fn zeros(channel: usize, cpi: usize, num_elements: usize, num_bins: usize, num_pulses: usize) -> Self {
        DataCube {
            channel,
            cpi,
            num_elements,
            num_bins,
            num_pulses,
            samples: vec![C64::new(0.0, 0.0); num_elements * num_bins * num_pulses],
        }
    }

    pub fn num_elements(&self) -> usize {
        self.num_elements
    }
    pub fn num_bins(&self) -> usize {
        self.num_bins
    }
    pub fn num_pulses(&self) -> usize {
        self.num_pulses
    }
    pub fn column_len(&self) -> usize {
        self.num_elements * self.num_pulses
    }

    /// Stacked column `Z(r)`.
    pub fn column(&self, r: usize) -> &[C64] {
        let n = self.column_len();
        &self.samples[r * n..(r + 1) * n]
    }

    pub fn column_mut(&mut self, r: usize) -> &mut [C64] {
        let n = self.column_len();
        &mut self.samples[r * n..(r + 1) * n]
    }

    pub fn get(&self, l: usize, r: usize, n: usize) -> C64 {
        self.samples[(r * self.num_elements + l) * self.num_pulses + n]
    }

    pub fn set(&mut self, l: usize, r: usize, n: usize, v: C64) {
        self.samples[(r * self.num_elements + l) * self.num_pulses + n] = v;
    }

    pub fn samples(&self) -> &[C64] {
        &self.samples
    }

    pub fn is_finite(&self) -> bool {
        self.samples.iter().all(|v| v.re.is_finite() && v.im.is_finite())
    }

    /// Binary dump: 32-byte little-endian header then `complex64` samples in
    /// `[l][r][n]` order (row-major over the logical `L × Γ × N` shape).
    ///
    /// Header: magic (8 bytes), then `u32` L, Γ, N, channel, cpi, and 4
    /// reserved zero bytes.
    pub fn write_dump<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        let mut header = [0u8; 32];
        header[..8].copy_from_slice(&CUBE_MAGIC);
        let fields = [self.num_elements, self.num_bins, self.num_pulses, self.channel, self.cpi];
        for (i, v) in fields.iter().enumerate() {
            header[8 + 4 * i..12 + 4 * i].copy_from_slice(&(*v as u32).to_le_bytes());
        }
        w.write_all(&header)?;
        let mut buf = Vec::with_capacity(self.samples.len() * 8);
        for l in 0..self.num_elements {
            for r in 0..self.num_bins {
                for n in 0..self.num_pulses {
                    let v = self.get(l, r, n);
                    buf.extend_from_slice(&(v.re as f32).to_le_bytes());
                    buf.extend_from_slice(&(v.im as f32).to_le_bytes());
                }
            }
        }
        w.write_all(&buf)
    }

    pub fn read_dump<R: Read>(mut r: R) -> Result<Self, ModelError> {
        let io = |e: std::io::Error| ModelError::BadCubeDump(e.to_string());
        let mut header = [0u8; 32];
        r.read_exact(&mut header).map_err(io)?;
        if header[..8] != CUBE_MAGIC {
            return Err(ModelError::BadCubeDump("bad magic".into()));
        }
        let field = |i: usize| u32::from_le_bytes(header[8 + 4 * i..12 + 4 * i].try_into().unwrap()) as usize;
        let mut cube = DataCube::zeros(field(3), field(4), field(0), field(1), field(2));
        let mut buf = vec![0u8; cube.samples.len() * 8];
        r.read_exact(&mut buf).map_err(io)?;
        let mut chunks = buf.chunks_exact(8);
        for l in 0..cube.num_elements {
            for rb in 0..cube.num_bins {
                for n in 0..cube.num_pulses {
                    let c = chunks.next().unwrap();
                    let re = f32::from_le_bytes(c[..4].try_into().unwrap());
                    let im = f32::from_le_bytes(c[4..].try_into().unwrap());
                    cube.set(l, rb, n, C64::new(re as f64, im as f64));
                }
            }
        }
        Ok(cube)
    }
}
