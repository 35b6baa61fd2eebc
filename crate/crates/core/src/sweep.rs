//! Experiment driver: expands a sweep plan into configurations, evaluates
//! them and writes the CSV curve families plus a manifest.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::Write;
use std::path::Path;
use std::sync::Arc;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::chanest::{build_mse_table, MseTable};
use crate::config::{ChannelEstimation, Mode, Resolution, SystemConfig};
use crate::error::{Error, Result};
use crate::exec::{current_threads, Exec};
use crate::power::{energy_efficiency, frontend_power};
use crate::quantization::MapCache;
use crate::rate::{RateResult, Simulator};

/// Sweep axes. Empty axes fall back to the value in the system section.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepAxes {
    pub snr_db: Vec<f64>,
    pub modes: Vec<Mode>,
    /// Uniform resolutions for `dbf` and `hbf`.
    pub bits: Vec<Resolution>,
    /// RF chain counts for `hbf`.
    pub m_rfe: Vec<usize>,
    /// High-resolution chain counts for `dbf-mixed`.
    pub m_h: Vec<usize>,
    pub b_l: Vec<Resolution>,
    pub b_h: Vec<Resolution>,
}

/// The configuration file: a system description and optional sweep axes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub system: SystemConfig,
    #[serde(default)]
    pub sweep: SweepAxes,
}

impl ExperimentConfig {
    /// Parses JSON and normalizes the system section (no validation).
    pub fn from_json(text: &str) -> Result<Self> {
        let mut exp: ExperimentConfig = serde_json::from_str(text)?;
        exp.system = exp.system.normalized();
        Ok(exp)
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// SHA-256 of the canonical JSON serialization.
    pub fn hash(&self) -> String {
        let text = serde_json::to_string(self).expect("config serializes");
        hex::encode(Sha256::digest(text.as_bytes()))
    }
}

/// Reads, normalizes and validates a configuration file, returning every
/// diagnostic at once on failure.
pub fn validate_config(path: &Path) -> Result<ExperimentConfig> {
    let text = fs::read_to_string(path)?;
    let exp = ExperimentConfig::from_json(&text).map_err(|e| match e {
        Error::Json(j) => Error::Config(vec![format!("{}: {j}", path.display())]),
        other => other,
    })?;
    SweepPlan::new(&exp)?;
    Ok(exp)
}

/// Which curve a point belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub enum Variant {
    Uniform { mode: Mode, m_rfe: usize, bits: Resolution },
    Mixed { m_h: usize, b_l: Resolution, b_h: Resolution },
    /// `dbf-mixed` with the resolutions listed in the system section.
    Custom,
}

impl Variant {
    pub fn mode(&self) -> Mode {
        match self {
            Variant::Uniform { mode, .. } => *mode,
            _ => Mode::DbfMixed,
        }
    }

    /// Name of the rate-vs-SNR curve.
    pub fn curve_name(&self) -> String {
        match self {
            Variant::Uniform { mode: Mode::Hbf, m_rfe, bits } => format!("hbf_rfe{m_rfe}_b{bits}"),
            Variant::Uniform { mode, bits, .. } => format!("{mode}_b{bits}"),
            Variant::Mixed { m_h, b_l, b_h } => format!("dbf-mixed_mh{m_h}_bl{b_l}_bh{b_h}"),
            Variant::Custom => "dbf-mixed_custom".into(),
        }
    }

    /// Name of the EE-vs-rate family (without the SNR) and the resolution
    /// that orders points along it.
    pub fn family(&self) -> (String, Resolution) {
        match self {
            Variant::Uniform { mode: Mode::Hbf, m_rfe, bits } => (format!("hbf_rfe{m_rfe}"), *bits),
            Variant::Uniform { mode, bits, .. } => (mode.to_string(), *bits),
            Variant::Mixed { m_h, b_l, b_h } => (format!("dbf-mixed_mh{m_h}_bh{b_h}"), *b_l),
            Variant::Custom => ("dbf-mixed_custom".into(), Resolution::Ideal),
        }
    }
}

/// One fully specified configuration of the sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepPoint {
    pub index: usize,
    pub variant: Variant,
    pub snr_db: f64,
    pub cfg: SystemConfig,
}

/// A validated sweep: every point of the Cartesian product of the axes.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepPlan {
    pub experiment: ExperimentConfig,
    pub points: Vec<SweepPoint>,
}

fn uniform_bits(adc: &[Resolution]) -> Option<Resolution> {
    let first = *adc.first()?;
    adc.iter().all(|&r| r == first).then_some(first)
}

impl SweepPlan {
    pub fn new(exp: &ExperimentConfig) -> Result<Self> {
        let base = &exp.system;
        let axes = &exp.sweep;
        let mut diag: Vec<String> = base.diagnostics().into_iter().map(|d| format!("system: {d}")).collect();
        let snrs = if axes.snr_db.is_empty() { vec![base.snr_db] } else { axes.snr_db.clone() };
        let modes = if axes.modes.is_empty() { vec![base.mode] } else { axes.modes.clone() };
        if snrs.iter().any(|s| !s.is_finite()) {
            diag.push("sweep.snr_db: values must be finite".to_string());
        }
        let bits = if axes.bits.is_empty() {
            match uniform_bits(&base.adc_bits) {
                Some(b) => vec![b],
                None if modes.iter().any(|m| *m != Mode::DbfMixed) => {
                    diag.push("sweep.bits: required when system.adc_bits is not uniform".into());
                    vec![]
                }
                None => vec![],
            }
        } else {
            axes.bits.clone()
        };

        let mut variants = Vec::new();
        for &mode in &modes {
            match mode {
                Mode::Dbf => variants.extend(bits.iter().map(|&b| Variant::Uniform { mode, m_rfe: base.m_r, bits: b })),
                Mode::Hbf => {
                    let chains = if axes.m_rfe.is_empty() { vec![base.m_rfe] } else { axes.m_rfe.clone() };
                    for m in chains {
                        if m == 0 || base.m_r % m != 0 {
                            diag.push(format!("sweep.m_rfe: {m} does not divide m_r = {}", base.m_r));
                            continue;
                        }
                        variants.extend(bits.iter().map(|&b| Variant::Uniform { mode, m_rfe: m, bits: b }));
                    }
                }
                Mode::DbfMixed => {
                    let given = [axes.m_h.is_empty(), axes.b_l.is_empty(), axes.b_h.is_empty()];
                    if given.iter().all(|&e| e) {
                        if base.mode != Mode::DbfMixed || base.m_rfe != base.m_r {
                            diag.push("sweep.m_h/b_l/b_h: required for mode dbf-mixed unless the system section is a dbf-mixed configuration".into());
                        } else {
                            variants.push(Variant::Custom);
                        }
                    } else if given.iter().any(|&e| e) {
                        diag.push("sweep.m_h/b_l/b_h: give all three axes or none".into());
                    } else {
                        for &m_h in &axes.m_h {
                            if m_h > base.m_r {
                                diag.push(format!("sweep.m_h: {m_h} exceeds m_r = {}", base.m_r));
                                continue;
                            }
                            for &b_h in &axes.b_h {
                                for &b_l in &axes.b_l {
                                    variants.push(Variant::Mixed { m_h, b_l, b_h });
                                }
                            }
                        }
                    }
                }
            }
        }

        let mut points = Vec::new();
        for variant in variants {
            for &snr_db in &snrs {
                let mut cfg = base.clone();
                cfg.snr_db = snr_db;
                cfg.mode = variant.mode();
                match variant {
                    Variant::Uniform { m_rfe, bits, .. } => {
                        cfg.m_rfe = m_rfe;
                        cfg.m_c = base.m_r / m_rfe;
                        cfg.adc_bits = vec![bits; m_rfe];
                    }
                    Variant::Mixed { m_h, b_l, b_h } => {
                        cfg.m_rfe = base.m_r;
                        cfg.m_c = 1;
                        cfg.adc_bits = std::iter::repeat_n(b_h, m_h).chain(std::iter::repeat_n(b_l, base.m_r - m_h)).collect();
                    }
                    Variant::Custom => {}
                }
                for d in cfg.diagnostics() {
                    let msg = format!("{}: {d}", variant.curve_name());
                    if !diag.contains(&msg) {
                        diag.push(msg);
                    }
                }
                points.push(SweepPoint { index: points.len(), variant, snr_db, cfg });
            }
        }
        if points.is_empty() && diag.is_empty() {
            diag.push("sweep: the plan has no points".into());
        }
        if !diag.is_empty() {
            return Err(Error::Config(diag));
        }
        Ok(SweepPlan { experiment: exp.clone(), points })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Replaces the master seed of every point.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.experiment.system.seed = seed;
        for p in &mut self.points {
            p.cfg.seed = seed;
        }
        self
    }
}

/// Evaluated sweep point.
#[derive(Debug, Clone, PartialEq)]
pub struct PointResult {
    pub index: usize,
    pub variant: Variant,
    pub snr_db: f64,
    pub rate: RateResult,
    /// Front-end power in mW (absent for unquantized chains).
    pub power_mw: Option<f64>,
    /// Energy efficiency in bit/s/Hz/W and its standard error.
    pub ee: Option<(f64, f64)>,
}

/// Shared state for evaluating many configurations.
#[derive(Debug)]
pub struct Evaluator {
    pub cache: MapCache,
    pub exec: Exec,
    /// Table used for every point instead of building per architecture.
    pub mse_override: Option<Arc<MseTable>>,
    tables: BTreeMap<(bool, usize), Arc<MseTable>>,
}

impl Evaluator {
    pub fn new(cache: MapCache, exec: Exec) -> Self {
        Evaluator { cache, exec, mse_override: None, tables: BTreeMap::new() }
    }

    pub fn with_mse_table(mut self, table: MseTable) -> Self {
        self.mse_override = Some(Arc::new(table));
        self
    }

    /// Channel-estimation table for `cfg`, built once per architecture and
    /// chain count.
    pub fn mse_table(&mut self, cfg: &SystemConfig) -> Result<Option<Arc<MseTable>>> {
        if cfg.channel_estimation == ChannelEstimation::Perfect {
            return Ok(None);
        }
        if let Some(t) = &self.mse_override {
            return Ok(Some(t.clone()));
        }
        let key = (cfg.mode.is_digital(), if cfg.mode.is_digital() { cfg.m_r } else { cfg.m_rfe });
        if let Some(t) = self.tables.get(&key) {
            return Ok(Some(t.clone()));
        }
        let t = Arc::new(build_mse_table(cfg, &MseTable::default_grid(), self.exec)?);
        self.tables.insert(key, t.clone());
        Ok(Some(t))
    }

    pub fn simulator(&mut self, cfg: &SystemConfig) -> Result<Simulator> {
        let table = self.mse_table(cfg)?;
        Simulator::new(cfg.clone(), &self.cache, table, self.exec)
    }

    /// Prepares every point first (quantizer maps and estimation tables are
    /// built sequentially), then evaluates the points in order, handing each
    /// result to `on_point` as soon as it is available.
    pub fn run_plan<F>(&mut self, plan: &SweepPlan, mut on_point: F) -> Result<Vec<PointResult>>
    where
        F: FnMut(&PointResult) -> Result<()>,
    {
        let sims = plan.points.iter().map(|p| self.simulator(&p.cfg)).collect::<Result<Vec<_>>>()?;
        let mut out = Vec::with_capacity(sims.len());
        for (p, sim) in plan.points.iter().zip(&sims) {
            let rate = sim.run(self.exec)?;
            let power_mw = frontend_power(&p.cfg).ok().map(|b| b.total_mw());
            let ee = match power_mw {
                Some(pw) => Some((energy_efficiency(rate.sum_rate, pw)?, energy_efficiency(rate.stderr, pw)?)),
                None => None,
            };
            let res = PointResult { index: p.index, variant: p.variant, snr_db: p.snr_db, rate, power_mw, ee };
            on_point(&res)?;
            out.push(res);
        }
        Ok(out)
    }
}

/// Floats in output files: 9 significant digits.
pub fn fmt_float(x: f64) -> String {
    format!("{x:.8e}")
}

fn snr_label(snr: f64) -> String {
    let s = format!("{snr}");
    format!("snr{s}")
}

/// Writes a `x,y,yerr` CSV.
pub fn write_xy_csv(path: &Path, rows: &[(f64, f64, f64)]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["x", "y", "yerr"])?;
    for &(x, y, e) in rows {
        w.write_record([fmt_float(x), fmt_float(y), fmt_float(e)])?;
    }
    w.flush()?;
    Ok(())
}

/// Summary written to `manifest.json`.
#[derive(Debug, Clone, Serialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub seed: u64,
    pub config_sha256: String,
    pub points: usize,
    pub threads: usize,
    pub parallel: bool,
    pub wall_time_s: f64,
    pub files: Vec<String>,
    pub config: ExperimentConfig,
}

const POINTS_HEADER: [&str; 13] = [
    "index", "mode", "m_rfe", "m_c", "m_h", "bits", "b_l", "b_h", "snr_db", "rate", "rate_stderr", "power_mw", "ee",
];

fn point_row(p: &PointResult, cfg: &SystemConfig) -> Vec<String> {
    let opt = |r: Option<String>| r.unwrap_or_default();
    let (m_h, bits, b_l, b_h) = match p.variant {
        Variant::Uniform { bits, .. } => (None, Some(bits.to_string()), None, None),
        Variant::Mixed { m_h, b_l, b_h } => (Some(m_h.to_string()), None, Some(b_l.to_string()), Some(b_h.to_string())),
        Variant::Custom => (None, None, None, None),
    };
    vec![
        p.index.to_string(),
        cfg.mode.to_string(),
        cfg.m_rfe.to_string(),
        cfg.m_c.to_string(),
        opt(m_h),
        opt(bits),
        opt(b_l),
        opt(b_h),
        fmt_float(p.snr_db),
        fmt_float(p.rate.sum_rate),
        fmt_float(p.rate.stderr),
        opt(p.power_mw.map(fmt_float)),
        opt(p.ee.map(|e| fmt_float(e.0))),
    ]
}

/// Runs the plan and writes into `out_dir`:
/// `points.csv` (one row per point, flushed as points finish),
/// `rate_<curve>.csv` (x = SNR in dB, y = mean rate, yerr = standard error),
/// `ee_<family>_snr<snr>.csv` (x = mean rate, y = energy efficiency, yerr =
/// its standard error, rows ordered by resolution) and `manifest.json`.
pub fn run_sweep(plan: &SweepPlan, evaluator: &mut Evaluator, out_dir: &Path) -> Result<Manifest> {
    let start = Instant::now();
    fs::create_dir_all(out_dir)?;
    log::info!("sweep: {} points x {} realizations", plan.len(), plan.experiment.system.realizations);
    let mut points_w = csv::Writer::from_path(out_dir.join("points.csv"))?;
    points_w.write_record(POINTS_HEADER)?;
    points_w.flush()?;
    let results = evaluator.run_plan(plan, |r| {
        points_w.write_record(point_row(r, &plan.points[r.index].cfg))?;
        points_w.flush()?;
        log::info!("point {}/{} {} snr {} dB: rate {:.4}", r.index + 1, plan.len(), r.variant.curve_name(), r.snr_db, r.rate.sum_rate);
        Ok(())
    })?;
    drop(points_w);

    let mut files = vec!["points.csv".to_string()];
    let mut curves: BTreeMap<String, Vec<(f64, f64, f64)>> = BTreeMap::new();
    let mut families: BTreeMap<String, Vec<(Resolution, f64, f64, f64)>> = BTreeMap::new();
    for r in &results {
        curves.entry(r.variant.curve_name()).or_default().push((r.snr_db, r.rate.sum_rate, r.rate.stderr));
        if let Some((ee, ee_err)) = r.ee {
            let (fam, res) = r.variant.family();
            families.entry(format!("{fam}_{}", snr_label(r.snr_db))).or_default().push((res, r.rate.sum_rate, ee, ee_err));
        }
    }
    for (name, mut rows) in curves {
        rows.sort_by(|a, b| a.0.total_cmp(&b.0));
        let file = format!("rate_{name}.csv");
        write_xy_csv(&out_dir.join(&file), &rows)?;
        files.push(file);
    }
    for (name, mut rows) in families {
        rows.sort_by(|a, b| a.0.cmp(&b.0));
        let file = format!("ee_{name}.csv");
        let xy: Vec<(f64, f64, f64)> = rows.iter().map(|r| (r.1, r.2, r.3)).collect();
        write_xy_csv(&out_dir.join(&file), &xy)?;
        files.push(file);
    }

    let manifest = Manifest {
        tool: "adcsim".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        seed: plan.experiment.system.seed,
        config_sha256: plan.experiment.hash(),
        points: plan.len(),
        threads: if evaluator.exec.is_parallel() { current_threads() } else { 1 },
        parallel: evaluator.exec.is_parallel(),
        wall_time_s: start.elapsed().as_secs_f64(),
        files,
        config: plan.experiment.clone(),
    };
    let mut f = File::create(out_dir.join("manifest.json"))?;
    serde_json::to_writer_pretty(&mut f, &manifest)?;
    writeln!(f)?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::QuantizerFamily;

    fn exp() -> ExperimentConfig {
        ExperimentConfig {
            system: SystemConfig { realizations: 2, channel_estimation: ChannelEstimation::Perfect, ..SystemConfig::example() },
            sweep: SweepAxes::default(),
        }
    }

    fn evaluator() -> Evaluator {
        Evaluator::new(MapCache::new(QuantizerFamily::LloydMax, 1e-3, Exec::Sequential), Exec::Sequential)
    }

    #[test]
    fn single_point_plan() {
        let plan = SweepPlan::new(&exp()).unwrap();
        assert_eq!(plan.len(), 1);
        assert_eq!(plan.points[0].variant, Variant::Uniform { mode: Mode::Dbf, m_rfe: 8, bits: Resolution::Bits(4) });
    }

    #[test]
    fn cartesian_expansion() {
        let mut e = exp();
        e.sweep = SweepAxes {
            snr_db: vec![0.0, 10.0],
            modes: vec![Mode::Dbf, Mode::Hbf, Mode::DbfMixed],
            bits: vec![Resolution::Bits(1), Resolution::Bits(3)],
            m_rfe: vec![2, 4],
            m_h: vec![2],
            b_l: vec![Resolution::Bits(1), Resolution::Bits(2)],
            b_h: vec![Resolution::Bits(5)],
        };
        let plan = SweepPlan::new(&e).unwrap();
        // dbf 2 bits + hbf 2 chains x 2 bits + mixed 2, each at 2 SNRs
        assert_eq!(plan.len(), (2 + 4 + 2) * 2);
        let mixed = plan.points.iter().find(|p| matches!(p.variant, Variant::Mixed { b_l: Resolution::Bits(2), .. })).unwrap();
        assert_eq!(mixed.cfg.adc_bits[..3], [Resolution::Bits(5), Resolution::Bits(5), Resolution::Bits(2)]);
        let hbf = plan.points.iter().find(|p| p.cfg.mode == Mode::Hbf).unwrap();
        assert_eq!(hbf.cfg.m_c * hbf.cfg.m_rfe, 8);
        assert!(plan.points.iter().enumerate().all(|(i, p)| p.index == i));
    }

    #[test]
    fn bad_axes_are_named() {
        let mut e = exp();
        e.sweep.modes = vec![Mode::Hbf, Mode::DbfMixed];
        e.sweep.m_rfe = vec![3];
        e.sweep.m_h = vec![2];
        let Err(Error::Config(d)) = SweepPlan::new(&e) else { panic!("expected diagnostics") };
        assert!(d.iter().any(|s| s.starts_with("sweep.m_rfe")), "{d:?}");
        assert!(d.iter().any(|s| s.starts_with("sweep.m_h/b_l/b_h")), "{d:?}");
    }

    #[test]
    fn unknown_keys_rejected() {
        let text = r#"{"system": {"m_r": 8}, "sweep": {"snr": [1]}}"#;
        assert!(ExperimentConfig::from_json(text).is_err());
    }

    #[test]
    fn hash_tracks_content() {
        let a = exp();
        let mut b = exp();
        assert_eq!(a.hash(), b.hash());
        b.system.snr_db = 11.0;
        assert_ne!(a.hash(), b.hash());
    }

    #[test]
    fn one_point_sweep_writes_one_row() {
        let dir = tempfile::tempdir().unwrap();
        let plan = SweepPlan::new(&exp()).unwrap();
        let m = run_sweep(&plan, &mut evaluator(), dir.path()).unwrap();
        assert_eq!(m.points, 1);
        let rate = fs::read_to_string(dir.path().join("rate_dbf_b4.csv")).unwrap();
        let lines: Vec<&str> = rate.lines().collect();
        assert_eq!(lines[0], "x,y,yerr");
        assert_eq!(lines.len(), 2);
        assert!(lines[1].starts_with("1.00000000e1,"));
        let ee = fs::read_to_string(dir.path().join("ee_dbf_snr10.csv")).unwrap();
        assert_eq!(ee.lines().count(), 2);
        assert!(dir.path().join("manifest.json").exists());
        assert_eq!(fs::read_to_string(dir.path().join("points.csv")).unwrap().lines().count(), 2);
    }

    #[test]
    fn ee_rows_follow_resolution() {
        let dir = tempfile::tempdir().unwrap();
        let mut e = exp();
        e.sweep.bits = vec![Resolution::Bits(3), Resolution::Bits(1), Resolution::Bits(2)];
        let plan = SweepPlan::new(&e).unwrap();
        let results = evaluator().run_plan(&plan, |_| Ok(())).unwrap();
        run_sweep(&plan, &mut evaluator(), dir.path()).unwrap();
        let text = fs::read_to_string(dir.path().join("ee_dbf_snr10.csv")).unwrap();
        let xs: Vec<f64> = text.lines().skip(1).map(|l| l.split(',').next().unwrap().parse().unwrap()).collect();
        let by_bits = |b: u8| {
            results.iter().find(|r| matches!(r.variant, Variant::Uniform { bits, .. } if bits == Resolution::Bits(b))).unwrap().rate.sum_rate
        };
        for (x, b) in xs.iter().zip([1u8, 2, 3]) {
            assert_eq!(*x, fmt_float(by_bits(b)).parse::<f64>().unwrap());
        }
        for r in &results {
            let p = frontend_power(&plan.points[r.index].cfg).unwrap().total_mw();
            assert_eq!(r.ee.unwrap().0, r.rate.sum_rate / (p * 1e-3));
        }
    }

    #[test]
    fn float_format() {
        assert_eq!(fmt_float(1.0), "1.00000000e0");
        assert_eq!(fmt_float(-0.000123456789), "-1.23456789e-4");
        assert_eq!(snr_label(-2.5), "snr-2.5");
    }
}
