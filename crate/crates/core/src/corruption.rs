//! Composite corruption: `r = s + α·(w1·n + w2·s(t-τ) + w3·i)`.
//!
//! The blend weights set the internal ratios of the disturbance; one scalar
//! `α` then fixes its total power so that the SNR of `r` against `s` hits
//! the recipe's target.

use alloc::format;
use alloc::vec::Vec;

use rand::seq::IndexedRandom;
use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::metrics::snr_db;
use crate::rng::{self, stream};
use crate::signal::{normalize_segment, ComplexSignal, SEGMENT_LEN};
use crate::waveform::{generate_waveform, random_spec, Modulation, WaveformSpec};

/// A non-empty subset of {AWGN, ECHO, INTERFERENCE}, stored as bits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ArtifactSet(u8);

impl ArtifactSet {
    pub const AWGN: ArtifactSet = ArtifactSet(0b001);
    pub const ECHO: ArtifactSet = ArtifactSet(0b010);
    pub const INTERFERENCE: ArtifactSet = ArtifactSet(0b100);

    /// The seven non-empty subsets.
    pub const ALL_SUBSETS: [ArtifactSet; 7] = [
        ArtifactSet(1),
        ArtifactSet(2),
        ArtifactSet(3),
        ArtifactSet(4),
        ArtifactSet(5),
        ArtifactSet(6),
        ArtifactSet(7),
    ];

    pub fn from_bits(bits: u8) -> Option<Self> {
        (1..=7).contains(&bits).then_some(ArtifactSet(bits))
    }

    pub fn bits(self) -> u8 {
        self.0
    }

    pub fn contains(self, other: ArtifactSet) -> bool {
        self.0 & other.0 == other.0
    }

    pub fn union(self, other: ArtifactSet) -> ArtifactSet {
        ArtifactSet(self.0 | other.0)
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    /// Names joined with '+', e.g. `AWGN+ECHO`.
    pub fn label(self) -> alloc::string::String {
        let names = [(Self::AWGN, "AWGN"), (Self::ECHO, "ECHO"), (Self::INTERFERENCE, "INTERFERENCE")];
        let parts: Vec<&str> = names.iter().filter(|(a, _)| self.contains(*a)).map(|(_, n)| *n).collect();
        parts.join("+")
    }
}

pub const ECHO_DELAY_RANGE: (usize, usize) = (32, 512);
pub const WEIGHT_RANGE: (f64, f64) = (0.1, 1.0);
pub const SNR_RANGE_DB: (f64, f64) = (-14.0, 10.0);

#[derive(Debug, Clone, PartialEq)]
pub struct CorruptionRecipe {
    pub active: ArtifactSet,
    /// Raw blend weights for AWGN, echo, and interference.
    pub weights: [f64; 3],
    pub echo_delay: Option<usize>,
    pub interference: Option<WaveformSpec>,
    pub target_snr_db: f64,
    /// Seeds the AWGN draw.
    pub rng_seed: u64,
}

impl CorruptionRecipe {
    pub fn validate(&self) -> Result<()> {
        let flags = [ArtifactSet::AWGN, ArtifactSet::ECHO, ArtifactSet::INTERFERENCE];
        for (w, a) in self.weights.iter().zip(flags) {
            if !(w.is_finite() && *w >= 0.0) {
                return Err(Error::Recipe(format!("weight {w} for {} is not a finite non-negative value", a.label())));
            }
            if !self.active.contains(a) && *w != 0.0 {
                return Err(Error::Recipe(format!("inactive artifact {} has weight {w}", a.label())));
            }
        }
        if self.weights.iter().all(|&w| w == 0.0) {
            return Err(Error::Recipe("all blend weights are zero".into()));
        }
        match (self.active.contains(ArtifactSet::ECHO), self.echo_delay) {
            (true, Some(tau)) if (ECHO_DELAY_RANGE.0..=ECHO_DELAY_RANGE.1).contains(&tau) => {}
            (true, Some(tau)) => return Err(Error::Recipe(format!("echo delay {tau} out of range"))),
            (false, None) => {}
            _ => return Err(Error::Recipe("echo delay must be present iff ECHO is active".into())),
        }
        if self.active.contains(ArtifactSet::INTERFERENCE) != self.interference.is_some() {
            return Err(Error::Recipe("interference spec must be present iff INTERFERENCE is active".into()));
        }
        if !self.target_snr_db.is_finite() {
            return Err(Error::Recipe("target SNR is not finite".into()));
        }
        Ok(())
    }
}

/// How the target SNR of a recipe is chosen.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SnrChoice {
    Uniform(f64, f64),
    Fixed(f64),
}

/// Distribution [`sample_recipe_with`] draws from.
#[derive(Debug, Clone, PartialEq)]
pub struct RecipePolicy {
    pub subsets: Vec<ArtifactSet>,
    pub snr: SnrChoice,
}

impl Default for RecipePolicy {
    fn default() -> Self {
        Self {
            subsets: ArtifactSet::ALL_SUBSETS.to_vec(),
            snr: SnrChoice::Uniform(SNR_RANGE_DB.0, SNR_RANGE_DB.1),
        }
    }
}

/// Samples a recipe with the default policy: uniform over the seven subsets,
/// SNR uniform in [-14, 10] dB.
pub fn sample_recipe(rng_seed: u64) -> CorruptionRecipe {
    sample_recipe_with(rng_seed, &RecipePolicy::default())
}

pub fn sample_recipe_with(rng_seed: u64, policy: &RecipePolicy) -> CorruptionRecipe {
    let mut rng = rng::rng_from(rng::derive(rng_seed, &[stream::RECIPE]));
    let active = *policy.subsets.choose(&mut rng).expect("policy has no artifact subsets");
    let mut weights = [0.0; 3];
    for (k, a) in [ArtifactSet::AWGN, ArtifactSet::ECHO, ArtifactSet::INTERFERENCE].into_iter().enumerate() {
        if active.contains(a) {
            weights[k] = rng.random_range(WEIGHT_RANGE.0..WEIGHT_RANGE.1);
        }
    }
    let echo_delay = active
        .contains(ArtifactSet::ECHO)
        .then(|| rng.random_range(ECHO_DELAY_RANGE.0..=ECHO_DELAY_RANGE.1));
    let interference = active.contains(ArtifactSet::INTERFERENCE).then(|| {
        let family = *Modulation::ALL.choose(&mut rng).unwrap();
        random_spec(family, rng::derive(rng_seed, &[stream::INTERFERENCE]))
    });
    let target_snr_db = match policy.snr {
        SnrChoice::Uniform(lo, hi) => rng.random_range(lo..hi),
        SnrChoice::Fixed(v) => v,
    };
    CorruptionRecipe {
        active,
        weights,
        echo_delay,
        interference,
        target_snr_db,
        rng_seed: rng::derive(rng_seed, &[stream::NOISE]),
    }
}

/// Corruption before normalization.
#[derive(Debug, Clone, PartialEq)]
pub struct RawCorruption {
    pub corrupted: ComplexSignal,
    /// Power scale `α` applied to the blended disturbance.
    pub scale: f64,
    /// SNR of `corrupted` against the clean input, in dB.
    pub achieved_snr_db: f64,
}

/// Zero-padded (non-circular) delay of both channels by `tau` samples.
pub fn delayed(x: &ComplexSignal, tau: usize) -> ComplexSignal {
    let shift = |c: &[f32]| -> Vec<f32> {
        (0..SEGMENT_LEN).map(|n| if n >= tau { c[n - tau] } else { 0.0 }).collect()
    };
    ComplexSignal::from_parts_unchecked(shift(x.i()), shift(x.q()))
}

/// Applies the recipe to an un-normalized clean waveform.
pub fn corrupt(clean: &ComplexSignal, recipe: &CorruptionRecipe) -> Result<RawCorruption> {
    recipe.validate()?;
    let [w1, w2, w3] = recipe.weights;
    let mut d_i = alloc::vec![0.0f64; SEGMENT_LEN];
    let mut d_q = alloc::vec![0.0f64; SEGMENT_LEN];

    if w1 > 0.0 {
        let mut rng = rng::rng_from(recipe.rng_seed);
        for n in 0..SEGMENT_LEN {
            let a: f64 = StandardNormal.sample(&mut rng);
            let b: f64 = StandardNormal.sample(&mut rng);
            d_i[n] += w1 * a;
            d_q[n] += w1 * b;
        }
    }
    if w2 > 0.0 {
        let echo = delayed(clean, recipe.echo_delay.expect("validated"));
        for n in 0..SEGMENT_LEN {
            d_i[n] += w2 * echo.i()[n] as f64;
            d_q[n] += w2 * echo.q()[n] as f64;
        }
    }
    if w3 > 0.0 {
        let intf = generate_waveform(recipe.interference.as_ref().expect("validated"))?;
        for n in 0..SEGMENT_LEN {
            d_i[n] += w3 * intf.i()[n] as f64;
            d_q[n] += w3 * intf.q()[n] as f64;
        }
    }

    let p_s = clean.power();
    let p_d: f64 = d_i.iter().chain(d_q.iter()).map(|v| v * v).sum();
    if !(p_d > 0.0) {
        return Err(Error::Recipe("disturbance has zero power".into()));
    }
    if !(p_s > 0.0) {
        return Err(Error::Recipe("clean signal has zero power".into()));
    }
    let scale = libm::sqrt(p_s / (p_d * libm::pow(10.0, recipe.target_snr_db / 10.0)));
    let mix = |c: &[f32], d: &[f64]| -> Vec<f32> {
        c.iter().zip(d).map(|(&s, &d)| (s as f64 + scale * d) as f32).collect()
    };
    let corrupted = ComplexSignal::from_parts_unchecked(mix(clean.i(), &d_i), mix(clean.q(), &d_q));
    let achieved_snr_db = snr_db(clean, &corrupted);
    Ok(RawCorruption { corrupted, scale, achieved_snr_db })
}

/// A normalized (clean, corrupted) training or test pair.
#[derive(Debug, Clone, PartialEq)]
pub struct CorruptedPair {
    pub clean: ComplexSignal,
    pub corrupted: ComplexSignal,
    pub recipe: CorruptionRecipe,
    /// Measured before normalization.
    pub achieved_snr_db: f64,
    pub modulation: Modulation,
    /// Constant channels hit during normalization: [clean I, clean Q, corrupted I, corrupted Q].
    pub degenerate: [bool; 4],
}

/// Corrupts `clean` per `recipe`, then normalizes both members per channel.
pub fn compose_corruption(
    clean: &ComplexSignal,
    modulation: Modulation,
    recipe: &CorruptionRecipe,
) -> Result<CorruptedPair> {
    let raw = corrupt(clean, recipe)?;
    let c = normalize_segment(clean);
    let r = normalize_segment(&raw.corrupted);
    Ok(CorruptedPair {
        clean: c.signal,
        corrupted: r.signal,
        recipe: recipe.clone(),
        achieved_snr_db: raw.achieved_snr_db,
        modulation,
        degenerate: [c.degenerate[0], c.degenerate[1], r.degenerate[0], r.degenerate[1]],
    })
}
