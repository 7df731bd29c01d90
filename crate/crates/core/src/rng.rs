//! Seedable, splittable 64-bit generator.
//!
//! The generator is SplitMix64. With state `s` (a `u64`), each draw does
//!
//! ```text
//! s  = s + 0x9E3779B97F4A7C15             (wrapping)
//! z  = s
//! z  = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9 (wrapping)
//! z  = (z ^ (z >> 27)) * 0x94D049BB133111EB (wrapping)
//! out = z ^ (z >> 31)
//! ```
//!
//! `split(label)` derives an independent child stream by mixing the parent's
//! next output with an FNV-1a hash of the label, so named sub-streams are
//! stable no matter how many draws other sub-streams make.

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitMix64 {
    state: u64,
}

fn mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// FNV-1a over the bytes of `s`.
pub fn fnv1a(s: &str) -> u64 {
    let mut h: u64 = 0xCBF2_9CE4_8422_2325;
    for b in s.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01B3);
    }
    h
}

/// Derive a module seed from a run seed and a name.
pub fn derive_seed(seed: u64, name: &str) -> u64 {
    mix(seed ^ mix(fnv1a(name).wrapping_add(GOLDEN)))
}

impl SplitMix64 {
    pub fn new(seed: u64) -> Self {
        Self { state: seed }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(GOLDEN);
        mix(self.state)
    }

    /// Child generator keyed by `label`.
    pub fn split(&mut self, label: &str) -> SplitMix64 {
        let base = self.next_u64();
        SplitMix64::new(mix(base ^ fnv1a(label)))
    }

    /// Child generator keyed by an integer (e.g. a child index).
    pub fn split_index(&self, index: u64) -> SplitMix64 {
        SplitMix64::new(mix(self.state ^ mix(index.wrapping_add(GOLDEN))))
    }

    /// Uniform in [0, 1) with 53 bits of resolution.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.next_f64()
    }

    /// Uniform integer in `0..n`. `n` must be non-zero.
    pub fn below(&mut self, n: usize) -> usize {
        assert!(n > 0, "below(0)");
        // Lemire's multiply-shift; the tiny bias is irrelevant at these sizes.
        ((u128::from(self.next_u64()) * n as u128) >> 64) as usize
    }

    /// Standard normal via Box-Muller (one value per call).
    pub fn normal(&mut self) -> f64 {
        let u1 = 1.0 - self.next_f64();
        let u2 = self.next_f64();
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }

    pub fn bernoulli(&mut self, p: f64) -> bool {
        self.next_f64() < p
    }

    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i + 1);
            items.swap(i, j);
        }
    }
}
