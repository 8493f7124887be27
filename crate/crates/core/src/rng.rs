//! Counter-based normal draws.
//!
//! Every draw is a pure function of `(master_seed, trajectory_index, k)`, so a
//! trajectory produces the same numbers no matter which worker runs it or in
//! which order. The construction, for a [`Mixer`] with finalizer constants
//! `(m1, m2)` and increment `gamma`:
//!
//! ```text
//! mix(z)   = z ^= z >> 30; z *= m1; z ^= z >> 27; z *= m2; z ^ (z >> 31)
//! key      = mix(mix(seed + gamma) ^ mix(index + 2*gamma))
//! salt     = mix(key ^ SALT_TAG)
//! bits(c)  = mix(salt ^ mix(key + (c + 1) * gamma))
//! u(c)     = ((bits(c) >> 11) + 1) * 2^-53                 in (0, 1]
//! xi(k)    = sqrt(-2 ln u(2j)) * cos(2 pi u(2j+1))   k = 2j
//!            sqrt(-2 ln u(2j)) * sin(2 pi u(2j+1))   k = 2j + 1
//! ```
//!
//! All arithmetic is wrapping on `u64`. The standard constants are the
//! SplitMix64 ones.

use std::f64::consts::TAU;

const SALT_TAG: u64 = 0xd1b5_4a32_d192_ed03;
const ROW_TAG: u64 = 0x8cb9_2ba7_2f3d_8dd7;

/// Constants of the 64-bit mixing function.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Mixer {
    pub m1: u64,
    pub m2: u64,
    pub gamma: u64,
}

impl Mixer {
    pub const STANDARD: Mixer = Mixer {
        m1: 0xbf58_476d_1ce4_e5b9,
        m2: 0x94d0_49bb_1331_11eb,
        gamma: 0x9e37_79b9_7f4a_7c15,
    };

    #[inline]
    pub fn mix(&self, mut z: u64) -> u64 {
        z = (z ^ (z >> 30)).wrapping_mul(self.m1);
        z = (z ^ (z >> 27)).wrapping_mul(self.m2);
        z ^ (z >> 31)
    }

    /// Hash of an ordered pair; used for stream keys and derived seeds.
    #[inline]
    pub fn combine(&self, a: u64, b: u64) -> u64 {
        self.mix(self.mix(a.wrapping_add(self.gamma)) ^ self.mix(b.wrapping_add(self.gamma.wrapping_mul(2))))
    }

    /// Seed for the `row`-th independent sub-experiment of a master seed.
    pub fn derive_seed(&self, master_seed: u64, row: u64) -> u64 {
        self.combine(master_seed ^ ROW_TAG, row)
    }
}

impl Default for Mixer {
    fn default() -> Self {
        Mixer::STANDARD
    }
}

/// Source of i.i.d. standard normal draws.
pub trait NormalSource {
    fn next_normal(&mut self) -> f64;
}

impl<S: NormalSource + ?Sized> NormalSource for &mut S {
    #[inline]
    fn next_normal(&mut self) -> f64 {
        (**self).next_normal()
    }
}

/// Deterministic N(0,1) stream of one trajectory.
#[derive(Debug, Clone)]
pub struct NormalStream {
    mixer: Mixer,
    key: u64,
    salt: u64,
    next_k: u64,
    spare: Option<f64>,
}

impl NormalStream {
    pub fn new(master_seed: u64, trajectory_index: u64) -> Self {
        Self::with_mixer(Mixer::STANDARD, master_seed, trajectory_index)
    }

    pub fn with_mixer(mixer: Mixer, master_seed: u64, trajectory_index: u64) -> Self {
        let key = mixer.combine(master_seed, trajectory_index);
        NormalStream {
            mixer,
            key,
            salt: mixer.mix(key ^ SALT_TAG),
            next_k: 0,
            spare: None,
        }
    }

    /// Number of draws handed out so far.
    pub fn draws(&self) -> u64 {
        self.next_k
    }

    #[inline]
    fn uniform(&self, counter: u64) -> f64 {
        let state = self
            .key
            .wrapping_add(counter.wrapping_add(1).wrapping_mul(self.mixer.gamma));
        let bits = self.mixer.mix(self.salt ^ self.mixer.mix(state));
        ((bits >> 11) + 1) as f64 * (1.0 / 9_007_199_254_740_992.0)
    }

    #[inline]
    fn pair(&self, j: u64) -> (f64, f64) {
        let u1 = self.uniform(2 * j);
        let u2 = self.uniform(2 * j + 1);
        let r = (-2.0 * u1.ln()).sqrt();
        let (s, c) = (TAU * u2).sin_cos();
        (r * c, r * s)
    }

    /// The `k`-th draw of this stream, independent of the cursor.
    pub fn draw_at(&self, k: u64) -> f64 {
        let (c, s) = self.pair(k / 2);
        if k.is_multiple_of(2) {
            c
        } else {
            s
        }
    }
}

impl NormalSource for NormalStream {
    #[inline]
    fn next_normal(&mut self) -> f64 {
        let k = self.next_k;
        self.next_k += 1;
        if let Some(s) = self.spare.take() {
            return s;
        }
        let (c, s) = self.pair(k / 2);
        self.spare = Some(s);
        c
    }
}

/// Deterministic draw source for a given master seed and trajectory index.
pub fn normal_stream(master_seed: u64, trajectory_index: u64) -> NormalStream {
    NormalStream::new(master_seed, trajectory_index)
}

/// A source that always yields the same value.
#[derive(Debug, Clone, Copy)]
pub struct ConstantSource(pub f64);

impl NormalSource for ConstantSource {
    fn next_normal(&mut self) -> f64 {
        self.0
    }
}

/// Counts draws taken from an inner source.
#[derive(Debug)]
pub struct Counting<S> {
    pub inner: S,
    pub count: u64,
}

impl<S> Counting<S> {
    pub fn new(inner: S) -> Self {
        Counting { inner, count: 0 }
    }
}

impl<S: NormalSource> NormalSource for Counting<S> {
    fn next_normal(&mut self) -> f64 {
        self.count += 1;
        self.inner.next_normal()
    }
}
