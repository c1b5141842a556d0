//! 64-bit FNV-1a fingerprints over parameter and dataset bytes.

use crate::numkit::Matrix;
use crate::real::Real;

const OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const PRIME: u64 = 0x0000_0100_0000_01b3;

#[derive(Debug, Clone, Copy)]
pub struct Fingerprint(u64);

impl Default for Fingerprint {
    fn default() -> Self {
        Fingerprint(OFFSET)
    }
}

impl Fingerprint {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn bytes(&mut self, bytes: &[u8]) -> &mut Self {
        for &b in bytes {
            self.0 ^= b as u64;
            self.0 = self.0.wrapping_mul(PRIME);
        }
        self
    }

    pub fn u64(&mut self, v: u64) -> &mut Self {
        self.bytes(&v.to_le_bytes())
    }

    pub fn matrix<T: Real>(&mut self, m: &Matrix<T>) -> &mut Self {
        self.u64(m.rows() as u64).u64(m.cols() as u64);
        for &v in m.as_slice() {
            self.u64(v.bits());
        }
        self
    }

    pub fn finish(&self) -> u64 {
        self.0
    }
}
