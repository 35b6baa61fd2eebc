//! Experiment configuration: the system description and its validation.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::power::PowerConstants;

/// Receiver architecture.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, PartialOrd, Ord)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    Dbf,
    Hbf,
    DbfMixed,
}

impl Mode {
    /// True for the fully digital architectures (combiner is the identity).
    pub fn is_digital(self) -> bool {
        matches!(self, Mode::Dbf | Mode::DbfMixed)
    }

    pub fn label(self) -> &'static str {
        match self {
            Mode::Dbf => "dbf",
            Mode::Hbf => "hbf",
            Mode::DbfMixed => "dbf-mixed",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// Resolution of one converter chain: a bit count or an unquantized chain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "RawResolution", into = "RawResolution")]
pub enum Resolution {
    Bits(u8),
    Ideal,
}

impl Resolution {
    pub const MAX_BITS: u8 = 12;

    pub fn bits(self) -> Option<u8> {
        match self {
            Resolution::Bits(b) => Some(b),
            Resolution::Ideal => None,
        }
    }
}

impl fmt::Display for Resolution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Resolution::Bits(b) => write!(f, "{b}"),
            Resolution::Ideal => f.write_str("ideal"),
        }
    }
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum RawResolution {
    Bits(u8),
    Name(String),
}

impl TryFrom<RawResolution> for Resolution {
    type Error = String;

    fn try_from(raw: RawResolution) -> std::result::Result<Self, String> {
        match raw {
            RawResolution::Bits(b) => Ok(Resolution::Bits(b)),
            RawResolution::Name(s) if s == "ideal" => Ok(Resolution::Ideal),
            RawResolution::Name(s) => Err(format!("unknown resolution {s:?} (expected a bit count or \"ideal\")")),
        }
    }
}

impl From<Resolution> for RawResolution {
    fn from(r: Resolution) -> Self {
        match r {
            Resolution::Bits(b) => RawResolution::Bits(b),
            Resolution::Ideal => RawResolution::Name("ideal".into()),
        }
    }
}

/// Scalar quantizer family used for every chain.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum QuantizerFamily {
    #[default]
    LloydMax,
    Uniform,
}

/// How the transmit power is derived from the configured SNR.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SnrScaling {
    /// Normalize by the energy of each drawn channel.
    #[default]
    PerRealization,
    /// Normalize by the ensemble channel energy `M_R`.
    Ensemble,
}

/// Channel-estimation error model.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ChannelEstimation {
    /// Wiener-interpolation MSE table lookup.
    #[default]
    Analytic,
    /// No estimation error.
    Perfect,
}

fn one() -> usize {
    1
}
fn default_evm() -> Option<f64> {
    Some(-25.0)
}
fn default_fs() -> f64 {
    2.0
}
fn default_realizations() -> usize {
    30
}
fn default_grid_threshold() -> f64 {
    1e-3
}
fn default_doppler() -> f64 {
    0.01
}
fn default_symbols() -> usize {
    14
}
fn unit() -> f64 {
    1.0
}

/// Full description of one simulated system.
///
/// `adc_bits` lists one resolution per RF chain; a single entry is broadcast
/// to every chain by [`SystemConfig::normalized`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemConfig {
    pub m_r: usize,
    #[serde(default = "one")]
    pub m_c: usize,
    pub m_rfe: usize,
    pub users: usize,
    #[serde(default = "one")]
    pub m_t: usize,
    /// Maximum channel length in samples.
    pub max_taps: usize,
    /// Number of nonzero taps.
    pub taps: usize,
    pub beta: f64,
    pub snr_db: f64,
    /// Transmitter EVM in dB; `null` disables it.
    #[serde(default = "default_evm")]
    pub evm_db: Option<f64>,
    pub n_f: usize,
    #[serde(default)]
    pub f1_bin: usize,
    /// Defaults to the last bin.
    #[serde(default)]
    pub f2_bin: Option<usize>,
    #[serde(default = "default_fs")]
    pub fs_ghz: f64,
    pub adc_bits: Vec<Resolution>,
    pub mode: Mode,
    #[serde(default = "default_realizations")]
    pub realizations: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub quantizer: QuantizerFamily,
    #[serde(default = "default_grid_threshold")]
    pub grid_threshold: f64,
    #[serde(default)]
    pub snr_scaling: SnrScaling,
    #[serde(default)]
    pub channel_estimation: ChannelEstimation,
    /// Normalized Doppler `f_D * T_sym`.
    #[serde(default = "default_doppler")]
    pub doppler_norm: f64,
    #[serde(default = "default_symbols")]
    pub ofdm_symbols: usize,
    /// Ratio of the assumed to the true delay-spread decay.
    #[serde(default = "unit")]
    pub delay_spread_mismatch: f64,
    /// Ratio of the assumed to the true Doppler.
    #[serde(default = "unit")]
    pub doppler_mismatch: f64,
    #[serde(default)]
    pub power: PowerConstants,
    /// Added to the nominal bit count to obtain the ENOB.
    #[serde(default)]
    pub enob_offset: f64,
}

impl SystemConfig {
    /// Parses JSON, normalizes and validates.
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: SystemConfig = serde_json::from_str(text)?;
        let cfg = cfg.normalized();
        cfg.validate()?;
        Ok(cfg)
    }

    /// Broadcasts a single `adc_bits` entry and fills the default `f2_bin`.
    pub fn normalized(mut self) -> Self {
        if self.adc_bits.len() == 1 && self.m_rfe > 1 {
            self.adc_bits = vec![self.adc_bits[0]; self.m_rfe];
        }
        if self.f2_bin.is_none() && self.n_f > 0 {
            self.f2_bin = Some(self.n_f - 1);
        }
        self
    }

    pub fn f2(&self) -> usize {
        self.f2_bin.unwrap_or(self.n_f.saturating_sub(1))
    }

    /// Number of bins in the band of interest.
    pub fn band_bins(&self) -> usize {
        self.f2() + 1 - self.f1_bin
    }

    /// Number of spatial streams seen by the quantizers.
    pub fn chains(&self) -> usize {
        self.m_rfe
    }

    /// All configuration errors, each naming the offending field.
    pub fn diagnostics(&self) -> Vec<String> {
        let mut d = Vec::new();
        if self.m_r == 0 {
            d.push("m_r: must be at least 1".into());
        }
        if self.m_c == 0 || self.m_rfe == 0 {
            d.push("m_c/m_rfe: must be at least 1".into());
        } else if self.m_c * self.m_rfe != self.m_r {
            d.push(format!("m_c * m_rfe: {} * {} != m_r = {}", self.m_c, self.m_rfe, self.m_r));
        }
        if self.mode.is_digital() && self.m_c != 1 {
            d.push(format!("mode: {} requires m_c = 1 (got {})", self.mode, self.m_c));
        }
        if self.users == 0 {
            d.push("users: must be at least 1".into());
        }
        if self.m_t == 0 {
            d.push("m_t: must be at least 1".into());
        }
        if self.taps == 0 || self.taps > self.max_taps {
            d.push(format!("taps: need 1 <= taps <= max_taps (taps = {}, max_taps = {})", self.taps, self.max_taps));
        }
        if !(self.beta >= 0.0 && self.beta.is_finite()) {
            d.push(format!("beta: must be finite and nonnegative (got {})", self.beta));
        }
        if !self.snr_db.is_finite() && self.snr_db != f64::NEG_INFINITY {
            d.push("snr_db: must be a number".into());
        }
        if let Some(e) = self.evm_db {
            if !e.is_finite() {
                d.push("evm_db: must be finite or null".into());
            }
        }
        if self.n_f < self.max_taps {
            d.push(format!("n_f: must be >= max_taps ({} < {})", self.n_f, self.max_taps));
        }
        let f2 = self.f2();
        if self.f1_bin > f2 || f2 >= self.n_f.max(1) {
            d.push(format!("f1_bin/f2_bin: need f1 <= f2 < n_f (f1 = {}, f2 = {f2}, n_f = {})", self.f1_bin, self.n_f));
        }
        if !(self.fs_ghz > 0.0 && self.fs_ghz.is_finite()) {
            d.push(format!("fs_ghz: must be positive (got {})", self.fs_ghz));
        }
        if self.adc_bits.len() != self.m_rfe {
            d.push(format!("adc_bits: expected {} entries (one per RF chain), got {}", self.m_rfe, self.adc_bits.len()));
        }
        for r in &self.adc_bits {
            if let Resolution::Bits(b) = r {
                if *b == 0 || *b > Resolution::MAX_BITS {
                    d.push(format!("adc_bits: {b} outside 1..={}", Resolution::MAX_BITS));
                }
            }
        }
        if self.realizations == 0 {
            d.push("realizations: must be at least 1".into());
        }
        if !(self.grid_threshold > 0.0 && self.grid_threshold < 1.0) {
            d.push(format!("grid_threshold: must lie in (0, 1) (got {})", self.grid_threshold));
        }
        if !(self.doppler_norm >= 0.0 && self.doppler_norm.is_finite()) {
            d.push("doppler_norm: must be nonnegative".into());
        }
        if self.ofdm_symbols < 3 {
            d.push("ofdm_symbols: must be at least 3 (pilot symbol index 2)".into());
        }
        if self.channel_estimation == ChannelEstimation::Analytic && self.users > 4 {
            d.push(format!("users: pilot pattern supports at most 4 users (got {})", self.users));
        }
        if !(self.delay_spread_mismatch > 0.0) || !(self.doppler_mismatch > 0.0) {
            d.push("delay_spread_mismatch/doppler_mismatch: must be positive".into());
        }
        if !self.enob_offset.is_finite() {
            d.push("enob_offset: must be finite".into());
        }
        d.extend(self.power.diagnostics());
        d
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.diagnostics();
        if d.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(d))
        }
    }

    /// A small configuration used by tests and documentation examples.
    pub fn example() -> Self {
        SystemConfig {
            m_r: 8,
            m_c: 1,
            m_rfe: 8,
            users: 2,
            m_t: 1,
            max_taps: 16,
            taps: 4,
            beta: 0.5,
            snr_db: 10.0,
            evm_db: Some(-25.0),
            n_f: 32,
            f1_bin: 0,
            f2_bin: Some(31),
            fs_ghz: 2.0,
            adc_bits: vec![Resolution::Bits(4); 8],
            mode: Mode::Dbf,
            realizations: 4,
            seed: 1,
            quantizer: QuantizerFamily::LloydMax,
            grid_threshold: 1e-3,
            snr_scaling: SnrScaling::PerRealization,
            channel_estimation: ChannelEstimation::Analytic,
            doppler_norm: 0.01,
            ofdm_symbols: 14,
            delay_spread_mismatch: 1.0,
            doppler_mismatch: 1.0,
            power: PowerConstants::default(),
            enob_offset: 0.0,
        }
    }

    /// The reference DBF system (64 antennas, 4 users, 128 taps / 32 nonzero).
    pub fn reference_dbf(bits: u8) -> Self {
        SystemConfig {
            m_r: 64,
            m_c: 1,
            m_rfe: 64,
            users: 4,
            max_taps: 128,
            taps: 32,
            beta: 0.5,
            snr_db: 0.0,
            n_f: 128,
            f2_bin: Some(127),
            adc_bits: vec![Resolution::Bits(bits); 64],
            realizations: 30,
            ..Self::example()
        }
    }

    /// Reference sub-array HBF with `m_rfe` chains.
    pub fn reference_hbf(m_rfe: usize, bits: u8) -> Self {
        SystemConfig {
            m_c: 64 / m_rfe,
            m_rfe,
            mode: Mode::Hbf,
            adc_bits: vec![Resolution::Bits(bits); m_rfe],
            ..Self::reference_dbf(bits)
        }
    }
}
