//! Gaussian measurement ensembles: sampling, seeding and the `PRLE` file
//! format.
//!
//! Randomness comes from ChaCha12 (`rand_chacha`), a counter-based stream
//! cipher generator, seeded with a 64-bit value. Trial seeds are derived with
//! the SplitMix64 finalizer so that independent trials get independent
//! streams. Standard normals use the ziggurat sampler from `rand_distr`
//! (`StandardNormal`); the version is pinned by `Cargo.lock`.
//!
//! Sampling order under a derived seed: the signal (if random) as `n`
//! normals normalized to unit length, then the `m × n` row entries in
//! row-major order.

use std::io::{Read, Write};
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::linalg::{dot, norm};

pub const MAGIC: &[u8; 4] = b"PRLE";
pub const FORMAT_VERSION: u32 = 1;
const HEADER_LEN: u64 = 4 + 4 + 8 + 8 + 8;

/// SplitMix64 output finalizer.
#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Reproducible per-trial seed derived from a base seed and a trial index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub struct TrialSeed {
    pub base_seed: u64,
    pub trial_index: u64,
    pub derived: u64,
}

impl TrialSeed {
    pub fn new(base_seed: u64, trial_index: u64) -> Self {
        let derived =
            mix64(base_seed ^ mix64(trial_index.wrapping_add(1).wrapping_mul(0x9e37_79b9_7f4a_7c15)));
        Self { base_seed, trial_index, derived }
    }

    /// Child seed for a nested stream (e.g. trial `t` within sweep cell `c`).
    pub fn child(&self, index: u64) -> Self {
        Self::new(self.derived, index)
    }

    pub fn rng(&self) -> ChaCha12Rng {
        ChaCha12Rng::seed_from_u64(self.derived)
    }
}

/// Uniform unit vector in `R^n` (normalized Gaussian); empty for `n = 0`.
pub fn random_direction(n: usize, rng: &mut ChaCha12Rng) -> Vec<f64> {
    if n == 0 {
        return Vec::new();
    }
    loop {
        let g: Vec<f64> = (0..n).map(|_| StandardNormal.sample(rng)).collect();
        if let Some(u) = crate::linalg::normalized(&g) {
            return u;
        }
    }
}

/// How the planted signal is chosen.
#[derive(Debug, Clone, PartialEq)]
pub enum SignalSpec {
    /// Uniform on the unit sphere, drawn from the ensemble's stream.
    Random,
    /// Caller-supplied unit vector.
    Given(Vec<f64>),
}

/// `m` Gaussian measurement rows together with the planted unit signal `x`
/// and the squared magnitudes `y_j² = ⟨a_j, x⟩²`. Immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementEnsemble {
    n: usize,
    m: usize,
    rows: Vec<f64>,
    signal: Vec<f64>,
    y_squared: Vec<f64>,
    seed: u64,
}

impl MeasurementEnsemble {
    /// Builds an ensemble from explicit rows (row-major, `m × n`), computing
    /// `y²` from the signal.
    pub fn from_rows(n: usize, rows: Vec<f64>, signal: Vec<f64>, seed: u64) -> Result<Self> {
        if n == 0 {
            return Err(Error::Integrity("n must be at least 1".into()));
        }
        if rows.is_empty() || rows.len() % n != 0 {
            return Err(Error::Integrity(format!(
                "row storage of length {} is not a positive multiple of n = {n}",
                rows.len()
            )));
        }
        check_signal(&signal, n, 1e-9)?;
        let m = rows.len() / n;
        let y_squared = rows
            .chunks_exact(n)
            .map(|a| {
                let p = dot(a, &signal);
                p * p
            })
            .collect();
        let e = Self { n, m, rows, signal, y_squared, seed };
        e.validate()?;
        Ok(e)
    }

    /// Checks every stored invariant. Used after loading from disk.
    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.m == 0 {
            return Err(Error::Integrity(format!("m = {}, n = {} must both be >= 1", self.m, self.n)));
        }
        if self.rows.len() != self.m * self.n || self.signal.len() != self.n || self.y_squared.len() != self.m {
            return Err(Error::Integrity("field lengths disagree with (m, n)".into()));
        }
        if !self.rows.iter().chain(&self.signal).chain(&self.y_squared).all(|v| v.is_finite()) {
            return Err(Error::Integrity("non-finite entry".into()));
        }
        let s = norm(&self.signal);
        if (s - 1.0).abs() > 1e-12 {
            return Err(Error::Integrity(format!("signal norm {s} is not 1")));
        }
        for (j, (a, y2)) in self.rows.chunks_exact(self.n).zip(&self.y_squared).enumerate() {
            let p = dot(a, &self.signal);
            let expect = p * p;
            if (expect - y2).abs() > 1e-12 * expect.abs() {
                return Err(Error::Integrity(format!(
                    "y²[{j}] = {y2} disagrees with ⟨a_j, x⟩² = {expect}"
                )));
            }
        }
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn signal(&self) -> &[f64] {
        &self.signal
    }

    pub fn y_squared(&self) -> &[f64] {
        &self.y_squared
    }

    /// Row-major `m × n` storage.
    pub fn rows_flat(&self) -> &[f64] {
        &self.rows
    }

    pub fn row(&self, j: usize) -> &[f64] {
        &self.rows[j * self.n..(j + 1) * self.n]
    }

    pub fn rows(&self) -> std::slice::ChunksExact<'_, f64> {
        self.rows.chunks_exact(self.n)
    }

    /// `(1/m) Σ y_j²`
    pub fn mean_y_squared(&self) -> f64 {
        self.y_squared.iter().sum::<f64>() / self.m as f64
    }

    /// Writes the `PRLE` binary layout.
    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(MAGIC)?;
        w.write_all(&FORMAT_VERSION.to_le_bytes())?;
        w.write_all(&(self.n as u64).to_le_bytes())?;
        w.write_all(&(self.m as u64).to_le_bytes())?;
        w.write_all(&self.seed.to_le_bytes())?;
        for v in self.rows.iter().chain(&self.signal).chain(&self.y_squared) {
            w.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    /// Parses the `PRLE` binary layout from a byte buffer.
    pub fn from_bytes(buf: &[u8]) -> Result<Self> {
        let mut cur = Cursor { buf, pos: 0 };
        let magic = cur.take(4, "magic")?;
        if magic != MAGIC {
            return Err(Error::Format { offset: 0, reason: "bad magic (expected \"PRLE\")".into() });
        }
        let version = u32::from_le_bytes(cur.take(4, "version")?.try_into().unwrap());
        if version != FORMAT_VERSION {
            return Err(Error::Format { offset: 4, reason: format!("unsupported version {version}") });
        }
        let n = cur.u64("n")?;
        let m = cur.u64("m")?;
        let seed = cur.u64("seed")?;
        if n == 0 || m == 0 {
            return Err(Error::Integrity(format!("header declares m = {m}, n = {n}")));
        }
        let count = m
            .checked_mul(n)
            .and_then(|mn| mn.checked_add(n))
            .and_then(|c| c.checked_add(m))
            .ok_or_else(|| Error::Integrity(format!("dimensions m = {m}, n = {n} overflow")))?;
        let body = (buf.len() as u64).saturating_sub(HEADER_LEN);
        if body < count.saturating_mul(8) {
            return Err(Error::Format {
                offset: buf.len() as u64,
                reason: format!("truncated: header declares {count} f64 entries, found {} bytes", body),
            });
        }
        if body > count * 8 {
            return Err(Error::Integrity(format!(
                "file holds {} bytes beyond the {count} entries declared for m = {m}, n = {n}",
                body - count * 8
            )));
        }
        let (n, m) = (n as usize, m as usize);
        let rows = cur.f64s(m * n, "rows")?;
        let signal = cur.f64s(n, "signal")?;
        let y_squared = cur.f64s(m, "y_squared")?;
        let e = Self { n, m, rows, signal, y_squared, seed };
        e.validate()?;
        Ok(e)
    }
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, len: usize, what: &str) -> Result<&'a [u8]> {
        if self.pos + len > self.buf.len() {
            return Err(Error::Format {
                offset: self.pos as u64,
                reason: format!("unexpected end of file reading {what}"),
            });
        }
        let s = &self.buf[self.pos..self.pos + len];
        self.pos += len;
        Ok(s)
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }

    fn f64s(&mut self, count: usize, what: &str) -> Result<Vec<f64>> {
        let bytes = self.take(count * 8, what)?;
        Ok(bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect())
    }
}

fn check_signal(signal: &[f64], n: usize, tol: f64) -> Result<()> {
    if signal.len() != n {
        return Err(Error::Shape { expected: n, got: signal.len() });
    }
    if !signal.iter().all(|v| v.is_finite()) {
        return Err(Error::InvalidSignal("non-finite entry".into()));
    }
    let s = norm(signal);
    if s == 0.0 {
        return Err(Error::InvalidSignal("signal is the zero vector".into()));
    }
    if (s - 1.0).abs() > tol {
        return Err(Error::NormalizationRequired { norm: s });
    }
    Ok(())
}

/// Draws an ensemble of `m` i.i.d. standard Gaussian rows in dimension `n`.
///
/// A supplied signal must already be unit norm to within `1e-9`; it is
/// renormalized exactly before use so the stored signal meets the `1e-12`
/// invariant.
pub fn sample_ensemble(n: usize, m: usize, signal: SignalSpec, seed: TrialSeed) -> Result<MeasurementEnsemble> {
    if n == 0 || m == 0 {
        return Err(Error::Config(format!("need n >= 1 and m >= 1 (got n = {n}, m = {m})")));
    }
    let mut rng = seed.rng();
    let signal = match signal {
        SignalSpec::Given(x) => {
            check_signal(&x, n, 1e-9)?;
            let s = norm(&x);
            x.into_iter().map(|v| v / s).collect()
        }
        SignalSpec::Random => loop {
            let g: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
            let s = norm(&g);
            if s > 0.0 {
                break g.into_iter().map(|v| v / s).collect::<Vec<f64>>();
            }
        },
    };
    let rows: Vec<f64> = (0..m * n).map(|_| StandardNormal.sample(&mut rng)).collect();
    let y_squared = rows
        .chunks_exact(n)
        .map(|a| {
            let p = dot(a, &signal);
            p * p
        })
        .collect();
    Ok(MeasurementEnsemble { n, m, rows, signal, y_squared, seed: seed.derived })
}

pub fn save_ensemble(e: &MeasurementEnsemble, path: impl AsRef<Path>) -> Result<()> {
    let f = std::fs::File::create(path)?;
    let mut w = std::io::BufWriter::new(f);
    e.write_to(&mut w)?;
    w.flush()?;
    Ok(())
}

pub fn load_ensemble(path: impl AsRef<Path>) -> Result<MeasurementEnsemble> {
    let mut buf = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut buf)?;
    MeasurementEnsemble::from_bytes(&buf)
}
