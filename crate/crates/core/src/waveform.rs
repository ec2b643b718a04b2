//! Clean LPI radar waveform synthesis.
//!
//! Every waveform is a unit-amplitude complex exponential `exp(jφ[n])` over
//! [`SEGMENT_LEN`] samples. The phase is a carrier `2π·f0·n` plus a
//! family-specific modulation term. Frequencies are normalized (cycles per
//! sample) and stay strictly inside (0, 0.5).
//!
//! Code elements (chips, hops, polyphase elements) split the segment
//! evenly: sample `n` belongs to element `n·L / N` for a code of `L`
//! elements.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng as _;

use crate::error::{Error, Result};
use crate::rng::{self, Rng};
use crate::signal::{ComplexSignal, SEGMENT_LEN};

/// The twelve LPI modulation families.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Modulation {
    Lfm,
    Costas,
    Bpsk,
    Frank,
    P1,
    P2,
    P3,
    P4,
    T1,
    T2,
    T3,
    T4,
}

impl Modulation {
    pub const ALL: [Modulation; 12] = [
        Modulation::Lfm,
        Modulation::Costas,
        Modulation::Bpsk,
        Modulation::Frank,
        Modulation::P1,
        Modulation::P2,
        Modulation::P3,
        Modulation::P4,
        Modulation::T1,
        Modulation::T2,
        Modulation::T3,
        Modulation::T4,
    ];

    /// Stable numeric tag used in dataset files.
    pub fn tag(self) -> u32 {
        Self::ALL.iter().position(|&m| m == self).unwrap() as u32
    }

    pub fn from_tag(tag: u32) -> Option<Self> {
        Self::ALL.get(tag as usize).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            Modulation::Lfm => "LFM",
            Modulation::Costas => "Costas",
            Modulation::Bpsk => "BPSK",
            Modulation::Frank => "Frank",
            Modulation::P1 => "P1",
            Modulation::P2 => "P2",
            Modulation::P3 => "P3",
            Modulation::P4 => "P4",
            Modulation::T1 => "T1",
            Modulation::T2 => "T2",
            Modulation::T3 => "T3",
            Modulation::T4 => "T4",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.iter().copied().find(|m| m.name().eq_ignore_ascii_case(name))
    }
}

impl core::fmt::Display for Modulation {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.write_str(self.name())
    }
}

/// Family-specific modulation parameters.
#[derive(Debug, Clone, PartialEq)]
pub enum WaveformParams {
    /// LFM: linear sweep of `bandwidth` cycles/sample across the segment.
    Chirp { bandwidth: f64 },
    /// Costas: hop `j` sits at `start_freq + hops[j]·freq_step`.
    Hopping { freq_step: f64, hops: Vec<u8> },
    /// BPSK with a Barker code of the given length.
    Barker { length: usize },
    /// Frank and P1 to P4; the code has `order²` elements.
    Polyphase { order: usize },
    /// T1 to T4. `bandwidth` is used by T3/T4 only.
    Polytime { segments: usize, phase_states: usize, bandwidth: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct WaveformSpec {
    pub modulation: Modulation,
    /// Carrier (or lowest hop) frequency in cycles/sample.
    pub start_freq: f64,
    pub params: WaveformParams,
    pub seed: u64,
}

/// Barker codes available for BPSK.
pub const BARKER_CODES: &[(usize, &[i8])] = &[
    (2, &[1, -1]),
    (3, &[1, 1, -1]),
    (4, &[1, 1, -1, 1]),
    (5, &[1, 1, 1, -1, 1]),
    (7, &[1, 1, 1, -1, -1, 1, -1]),
    (11, &[1, 1, 1, -1, -1, -1, 1, -1, -1, 1, -1]),
    (13, &[1, 1, 1, 1, 1, -1, -1, 1, 1, -1, 1, -1, 1]),
];

pub fn barker_code(length: usize) -> Option<&'static [i8]> {
    BARKER_CODES.iter().find(|(l, _)| *l == length).map(|(_, c)| *c)
}

/// Sampling ranges used by [`random_spec`].
pub mod ranges {
    pub const LFM_BANDWIDTH: (f64, f64) = (0.05, 0.4);
    pub const COSTAS_HOPS: (usize, usize) = (4, 8);
    pub const BARKER_LENGTHS: [usize; 3] = [7, 11, 13];
    pub const POLYPHASE_ORDERS: [usize; 3] = [4, 6, 8];
    pub const POLYTIME_SEGMENTS: (usize, usize) = (2, 6);
    pub const POLYTIME_STATES: (usize, usize) = (2, 6);
    pub const POLYTIME_BANDWIDTH: (f64, f64) = (0.05, 0.3);
    /// Guard band kept between any instantaneous frequency and 0 / 0.5.
    pub const GUARD: f64 = 0.01;
}

/// True when every displacement vector between hops is distinct.
pub fn is_costas(perm: &[u8]) -> bool {
    let m = perm.len();
    let mut seen = vec![false; m];
    for &p in perm {
        if p as usize >= m || seen[p as usize] {
            return false;
        }
        seen[p as usize] = true;
    }
    for d in 1..m {
        for a in 0..m - d {
            let da = perm[a + d] as i32 - perm[a] as i32;
            for b in a + 1..m - d {
                if perm[b + d] as i32 - perm[b] as i32 == da {
                    return false;
                }
            }
        }
    }
    true
}

fn costas_search(perm: &mut Vec<u8>, used: &mut [bool], rng: &mut Rng) -> bool {
    let m = used.len();
    let pos = perm.len();
    if pos == m {
        return true;
    }
    let mut candidates: Vec<u8> = (0..m as u8).filter(|&v| !used[v as usize]).collect();
    candidates.shuffle(rng);
    for v in candidates {
        let ok = (0..pos).all(|i| {
            let d = pos - i;
            let diff = v as i32 - perm[i] as i32;
            (0..pos - d).all(|j| perm[j + d] as i32 - perm[j] as i32 != diff)
        });
        if !ok {
            continue;
        }
        perm.push(v);
        used[v as usize] = true;
        if costas_search(perm, used, rng) {
            return true;
        }
        perm.pop();
        used[v as usize] = false;
    }
    false
}

/// Draws a random Costas permutation of order `m` by randomized backtracking.
pub fn random_costas(m: usize, rng: &mut Rng) -> Vec<u8> {
    let mut perm = Vec::with_capacity(m);
    let mut used = vec![false; m];
    let found = costas_search(&mut perm, &mut used, rng);
    // Costas arrays exist for every order up to 29.
    debug_assert!(found);
    perm
}

fn uniform(rng: &mut Rng, lo: f64, hi: f64) -> f64 {
    lo + (hi - lo) * rng.random::<f64>()
}

/// Samples a waveform spec of the given family, deterministic in `seed`.
pub fn random_spec(modulation: Modulation, seed: u64) -> WaveformSpec {
    use ranges::*;
    let mut rng = rng::rng_from(rng::derive(seed, &[rng::stream::WAVEFORM]));
    let (start_freq, params) = match modulation {
        Modulation::Lfm => {
            let bw = uniform(&mut rng, LFM_BANDWIDTH.0, LFM_BANDWIDTH.1);
            let f0 = uniform(&mut rng, GUARD, 0.5 - GUARD - bw);
            (f0, WaveformParams::Chirp { bandwidth: bw })
        }
        Modulation::Costas => {
            let m = rng.random_range(COSTAS_HOPS.0..=COSTAS_HOPS.1);
            let hops = random_costas(m, &mut rng);
            let f0 = uniform(&mut rng, 0.02, 0.1);
            let step = uniform(&mut rng, 0.02, (0.5 - GUARD - f0) / (m - 1) as f64);
            (f0, WaveformParams::Hopping { freq_step: step, hops })
        }
        Modulation::Bpsk => {
            let length = *BARKER_LENGTHS.choose(&mut rng).unwrap();
            (uniform(&mut rng, 0.05, 0.45), WaveformParams::Barker { length })
        }
        Modulation::Frank | Modulation::P1 | Modulation::P2 | Modulation::P3 | Modulation::P4 => {
            let order = *POLYPHASE_ORDERS.choose(&mut rng).unwrap();
            (uniform(&mut rng, 0.05, 0.45), WaveformParams::Polyphase { order })
        }
        Modulation::T1 | Modulation::T2 | Modulation::T3 | Modulation::T4 => {
            let segments = rng.random_range(POLYTIME_SEGMENTS.0..=POLYTIME_SEGMENTS.1);
            let phase_states = rng.random_range(POLYTIME_STATES.0..=POLYTIME_STATES.1);
            let (f0, bandwidth) = match modulation {
                Modulation::T3 => {
                    let bw = uniform(&mut rng, POLYTIME_BANDWIDTH.0, POLYTIME_BANDWIDTH.1);
                    (uniform(&mut rng, GUARD, 0.5 - GUARD - bw), bw)
                }
                Modulation::T4 => {
                    let bw = uniform(&mut rng, POLYTIME_BANDWIDTH.0, POLYTIME_BANDWIDTH.1);
                    (uniform(&mut rng, GUARD + bw / 2.0, 0.5 - GUARD - bw / 2.0), bw)
                }
                _ => (uniform(&mut rng, 0.05, 0.45), 0.0),
            };
            (f0, WaveformParams::Polytime { segments, phase_states, bandwidth })
        }
    };
    WaveformSpec { modulation, start_freq, params, seed }
}

fn param_err(msg: impl Into<alloc::string::String>) -> Error {
    Error::Parameter(msg.into())
}

impl WaveformSpec {
    /// Checks that parameters match the family and respect Nyquist.
    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = self.frequency_band();
        if !(self.start_freq.is_finite() && lo > 0.0 && hi < 0.5) {
            return Err(param_err(format!(
                "{}: instantaneous frequencies [{lo}, {hi}] leave (0, 0.5)",
                self.modulation
            )));
        }
        match (self.modulation, &self.params) {
            (Modulation::Lfm, WaveformParams::Chirp { bandwidth }) => {
                if !(*bandwidth >= 0.0) {
                    return Err(param_err("LFM bandwidth must be non-negative"));
                }
            }
            (Modulation::Costas, WaveformParams::Hopping { freq_step, hops }) => {
                if hops.is_empty() {
                    return Err(param_err("Costas sequence length must be positive"));
                }
                if !is_costas(hops) {
                    return Err(param_err("hop sequence is not a Costas permutation"));
                }
                if !(*freq_step > 0.0) {
                    return Err(param_err("Costas frequency step must be positive"));
                }
            }
            (Modulation::Bpsk, WaveformParams::Barker { length }) => {
                if barker_code(*length).is_none() {
                    return Err(param_err(format!("no Barker code of length {length}")));
                }
            }
            (
                Modulation::Frank | Modulation::P1 | Modulation::P2 | Modulation::P3 | Modulation::P4,
                WaveformParams::Polyphase { order },
            ) => {
                if *order < 2 || order * order > SEGMENT_LEN {
                    return Err(param_err(format!("polyphase order {order} out of range")));
                }
            }
            (
                Modulation::T1 | Modulation::T2 | Modulation::T3 | Modulation::T4,
                WaveformParams::Polytime { segments, phase_states, bandwidth },
            ) => {
                if *segments == 0 || *phase_states < 2 {
                    return Err(param_err("polytime codes need segments >= 1 and phase states >= 2"));
                }
                if matches!(self.modulation, Modulation::T3 | Modulation::T4) && !(*bandwidth > 0.0) {
                    return Err(param_err("T3/T4 bandwidth must be positive"));
                }
            }
            (m, p) => return Err(param_err(format!("{m} cannot use parameters {p:?}"))),
        }
        Ok(())
    }

    /// Declared band `[lo, hi]` of instantaneous frequencies (cycles/sample).
    pub fn frequency_band(&self) -> (f64, f64) {
        let f0 = self.start_freq;
        match (&self.params, self.modulation) {
            (WaveformParams::Chirp { bandwidth }, _) => (f0, f0 + bandwidth),
            (WaveformParams::Hopping { freq_step, hops }, _) => {
                (f0, f0 + freq_step * hops.len().saturating_sub(1) as f64)
            }
            (WaveformParams::Polytime { bandwidth, .. }, Modulation::T3) => (f0, f0 + bandwidth),
            (WaveformParams::Polytime { bandwidth, .. }, Modulation::T4) => {
                (f0 - bandwidth / 2.0, f0 + bandwidth / 2.0)
            }
            _ => (f0, f0),
        }
    }

    /// Number of code elements that split the segment (1 for LFM).
    pub fn code_length(&self) -> usize {
        match &self.params {
            WaveformParams::Chirp { .. } => 1,
            WaveformParams::Hopping { hops, .. } => hops.len(),
            WaveformParams::Barker { length } => *length,
            WaveformParams::Polyphase { order } => order * order,
            WaveformParams::Polytime { segments, .. } => *segments,
        }
    }
}

/// Code element containing sample `n` for a code of `len` elements.
#[inline]
pub fn element_of(n: usize, len: usize) -> usize {
    n * len / SEGMENT_LEN
}

/// Modulation phase (radians, excluding the carrier) of polyphase element
/// `c` of a code with `order²` elements.
pub fn polyphase_phase(modulation: Modulation, order: usize, c: usize) -> f64 {
    let m = order as f64;
    let (row, col) = ((c / order) as f64, (c % order) as f64);
    match modulation {
        Modulation::Frank => 2.0 * PI * row * col / m,
        // 1-based i = row + 1, j = col + 1.
        Modulation::P1 => -(PI / m) * (m - (2.0 * col + 1.0)) * (col * m + row),
        Modulation::P2 => (PI / (2.0 * m)) * (m - 1.0 - 2.0 * row) * (m - 1.0 - 2.0 * col),
        Modulation::P3 => {
            let (c, nc) = (c as f64, m * m);
            PI * c * c / nc
        }
        Modulation::P4 => {
            let (c, nc) = (c as f64, m * m);
            PI * c * c / nc - PI * c
        }
        _ => 0.0,
    }
}

fn polytime_phase(
    modulation: Modulation,
    n: usize,
    segments: usize,
    phase_states: usize,
    bandwidth: f64,
) -> f64 {
    let t = n as f64;
    let big_t = SEGMENT_LEN as f64;
    let k = segments as f64;
    let ns = phase_states as f64;
    let step = 2.0 * PI / ns;
    let j = libm::floor(k * t / big_t);
    let quantized = match modulation {
        Modulation::T1 => libm::floor((k * t - j * big_t) * j * ns / big_t),
        Modulation::T2 => libm::floor((k * t - j * big_t) * ((2.0 * j - k + 1.0) / big_t) * (ns / 2.0)),
        Modulation::T3 => libm::floor(ns * bandwidth * t * t / (2.0 * big_t)),
        Modulation::T4 => libm::floor(ns * bandwidth * t * t / (2.0 * big_t) - ns * bandwidth * t / 2.0),
        _ => 0.0,
    };
    step * quantized
}

/// Full phase sequence (carrier included) of a validated spec.
pub fn phase_sequence(spec: &WaveformSpec) -> Vec<f64> {
    let f0 = spec.start_freq;
    let carrier = |n: usize| 2.0 * PI * f0 * n as f64;
    match &spec.params {
        WaveformParams::Chirp { bandwidth } => {
            let rate = bandwidth / SEGMENT_LEN as f64;
            (0..SEGMENT_LEN)
                .map(|n| {
                    let t = n as f64;
                    2.0 * PI * (f0 * t + 0.5 * rate * t * t)
                })
                .collect()
        }
        WaveformParams::Hopping { freq_step, hops } => {
            let mut phase = Vec::with_capacity(SEGMENT_LEN);
            let mut acc = 0.0;
            for n in 0..SEGMENT_LEN {
                phase.push(acc);
                let hop = hops[element_of(n, hops.len())] as f64;
                acc += 2.0 * PI * (f0 + hop * freq_step);
            }
            phase
        }
        WaveformParams::Barker { length } => {
            let code = barker_code(*length).expect("validated Barker length");
            (0..SEGMENT_LEN)
                .map(|n| carrier(n) + if code[element_of(n, *length)] < 0 { PI } else { 0.0 })
                .collect()
        }
        WaveformParams::Polyphase { order } => {
            let len = order * order;
            (0..SEGMENT_LEN)
                .map(|n| carrier(n) + polyphase_phase(spec.modulation, *order, element_of(n, len)))
                .collect()
        }
        WaveformParams::Polytime { segments, phase_states, bandwidth } => (0..SEGMENT_LEN)
            .map(|n| carrier(n) + polytime_phase(spec.modulation, n, *segments, *phase_states, *bandwidth))
            .collect(),
    }
}

/// Generates the unit-amplitude waveform described by `spec`.
pub fn generate_waveform(spec: &WaveformSpec) -> Result<ComplexSignal> {
    spec.validate()?;
    let phase = phase_sequence(spec);
    let (i, q) = phase.iter().map(|&p| (libm::cos(p) as f32, libm::sin(p) as f32)).unzip();
    Ok(ComplexSignal::from_parts_unchecked(i, q))
}
