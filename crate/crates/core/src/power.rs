//! RF front-end power model and energy efficiency.
//!
//! All sums are carried out in integer nanowatts; a breakdown adds up to its
//! total exactly.

use serde::{Deserialize, Serialize};

use crate::config::{Resolution, SystemConfig};
use crate::error::{Error, Result};

/// Component power figures in mW (ADC figure of merit in mW/GHz).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PowerConstants {
    pub lo: f64,
    pub lna: f64,
    pub mixer: f64,
    pub hybrid: f64,
    pub limiting_amp: f64,
    pub one_bit_adc: f64,
    pub phase_shifter: f64,
    pub vga: f64,
    pub adc_fom_mw_per_ghz: f64,
}

impl Default for PowerConstants {
    fn default() -> Self {
        PowerConstants {
            lo: 22.5,
            lna: 5.4,
            mixer: 0.3,
            hybrid: 3.0,
            limiting_amp: 0.8,
            one_bit_adc: 0.0,
            phase_shifter: 2.0,
            vga: 2.0,
            adc_fom_mw_per_ghz: 0.015,
        }
    }
}

impl PowerConstants {
    pub(crate) fn diagnostics(&self) -> Vec<String> {
        let all = [
            ("power.lo", self.lo),
            ("power.lna", self.lna),
            ("power.mixer", self.mixer),
            ("power.hybrid", self.hybrid),
            ("power.limiting_amp", self.limiting_amp),
            ("power.one_bit_adc", self.one_bit_adc),
            ("power.phase_shifter", self.phase_shifter),
            ("power.vga", self.vga),
            ("power.adc_fom_mw_per_ghz", self.adc_fom_mw_per_ghz),
        ];
        all.iter()
            .filter(|(_, v)| !(v.is_finite() && *v >= 0.0))
            .map(|(n, v)| format!("{n}: must be finite and nonnegative (got {v})"))
            .collect()
    }
}

const NW_PER_MW: f64 = 1e6;

fn to_nw(mw: f64) -> u64 {
    (mw * NW_PER_MW).round() as u64
}

fn to_mw(nw: u64) -> f64 {
    nw as f64 / NW_PER_MW
}

/// ADC power `fom * f_s * 2^enob` in mW.
pub fn adc_power(fs_ghz: f64, enob: f64) -> f64 {
    adc_power_with(&PowerConstants::default(), fs_ghz, enob)
}

pub fn adc_power_with(c: &PowerConstants, fs_ghz: f64, enob: f64) -> f64 {
    c.adc_fom_mw_per_ghz * fs_ghz * enob.exp2()
}

/// Per-component front-end power, stored in nanowatts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct PowerBreakdown {
    pub lo_nw: u64,
    pub lna_nw: u64,
    pub hybrid_nw: u64,
    pub mixers_nw: u64,
    pub phase_shifters_nw: u64,
    pub vgas_nw: u64,
    pub limiting_amps_nw: u64,
    pub adcs_nw: u64,
    /// Analog combining present.
    pub flag_c: bool,
    pub one_bit_chains: usize,
}

impl PowerBreakdown {
    pub fn total_nw(&self) -> u64 {
        self.lo_nw
            + self.lna_nw
            + self.hybrid_nw
            + self.mixers_nw
            + self.phase_shifters_nw
            + self.vgas_nw
            + self.limiting_amps_nw
            + self.adcs_nw
    }

    pub fn total_mw(&self) -> f64 {
        to_mw(self.total_nw())
    }

    pub fn total_w(&self) -> f64 {
        self.total_nw() as f64 * 1e-9
    }

    /// `(name, mW)` pairs in a fixed order.
    pub fn parts_mw(&self) -> [(&'static str, f64); 8] {
        [
            ("lo", to_mw(self.lo_nw)),
            ("lna", to_mw(self.lna_nw)),
            ("hybrid", to_mw(self.hybrid_nw)),
            ("mixers", to_mw(self.mixers_nw)),
            ("phase_shifters", to_mw(self.phase_shifters_nw)),
            ("vgas", to_mw(self.vgas_nw)),
            ("limiting_amps", to_mw(self.limiting_amps_nw)),
            ("adcs", to_mw(self.adcs_nw)),
        ]
    }
}

/// Front-end power for a configuration. Unquantized chains have no defined
/// converter power and are rejected.
pub fn frontend_power(cfg: &SystemConfig) -> Result<PowerBreakdown> {
    let c = &cfg.power;
    let m_r = cfg.m_r as u64;
    let flag_c = !(cfg.m_rfe == cfg.m_r && cfg.m_c == 1);
    let mut out = PowerBreakdown {
        lo_nw: to_nw(c.lo),
        lna_nw: m_r * to_nw(c.lna),
        hybrid_nw: m_r * to_nw(c.hybrid),
        mixers_nw: m_r * 2 * to_nw(c.mixer),
        phase_shifters_nw: if flag_c { m_r * to_nw(c.phase_shifter) } else { 0 },
        flag_c,
        ..Default::default()
    };
    for r in &cfg.adc_bits {
        match r {
            Resolution::Bits(1) => {
                out.limiting_amps_nw += 2 * to_nw(c.limiting_amp);
                out.adcs_nw += 2 * to_nw(c.one_bit_adc);
                out.one_bit_chains += 1;
            }
            Resolution::Bits(b) => {
                let enob = *b as f64 + cfg.enob_offset;
                out.vgas_nw += 2 * to_nw(c.vga);
                out.adcs_nw += 2 * to_nw(adc_power_with(c, cfg.fs_ghz, enob));
            }
            Resolution::Ideal => {
                return Err(Error::Parameter("power model needs a finite ADC resolution on every chain".into()))
            }
        }
    }
    Ok(out)
}

/// Energy efficiency: rate in bit/s/Hz divided by front-end power in W.
pub fn energy_efficiency(rate_bpshz: f64, p_r_mw: f64) -> Result<f64> {
    if !(p_r_mw > 0.0) {
        return Err(Error::Parameter(format!("front-end power must be positive (got {p_r_mw} mW)")));
    }
    Ok(rate_bpshz / (p_r_mw * 1e-3))
}
