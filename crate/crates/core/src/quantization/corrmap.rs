use std::collections::HashMap;
use std::f64::consts::{FRAC_PI_2, PI};
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use crate::config::{QuantizerFamily, Resolution};
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::numeric::{integrate, NaturalCubicSpline};

use super::design::{design_quantizer, QuantizerSpec};

/// Pair terms whose exponent exceeds this are below 1e-21 and skipped.
const EXPONENT_CUTOFF: f64 = 50.0;
const INITIAL_INTERVALS: usize = 16;
const MAX_REFINE_DEPTH: u32 = 30;
const QUAD_ABS_TOL: f64 = 1e-8;
const CACHE_VERSION: &str = "adcsim-corrmap v1";

/// Output covariance `E[Q_a(x) Q_b(y)]` of two quantizers as a function of the
/// input correlation `rho` of unit-variance jointly Gaussian `x, y`.
///
/// The map is tabulated on a grid in `theta = asin(rho)` and interpolated by a
/// natural cubic spline in `theta`; negative inputs use odd symmetry. When at
/// least one side is unquantized the map is exactly linear.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationMap {
    pub pair: (Resolution, Resolution),
    pub family: QuantizerFamily,
    pub grid_threshold: f64,
    repr: Repr,
}

#[derive(Debug, Clone, PartialEq)]
enum Repr {
    Linear(f64),
    Spline(NaturalCubicSpline),
}

impl CorrelationMap {
    /// Interpolated output covariance; `rho` is clamped to `[-1, 1]`.
    pub fn eval(&self, rho: f64) -> f64 {
        let r = rho.clamp(-1.0, 1.0);
        match &self.repr {
            Repr::Linear(s) => s * r,
            Repr::Spline(sp) => r.signum() * sp.eval(r.abs().asin()),
        }
    }

    /// Grid points `(rho_in, rho_out)` on `[0, 1]`, or `None` for a linear map.
    pub fn grid(&self) -> Option<Vec<(f64, f64)>> {
        match &self.repr {
            Repr::Linear(_) => None,
            Repr::Spline(sp) => Some(sp.knots().iter().zip(sp.values()).map(|(t, m)| (t.sin(), *m)).collect()),
        }
    }

    pub fn is_linear(&self) -> bool {
        matches!(self.repr, Repr::Linear(_))
    }

    fn file_name(&self) -> String {
        cache_file_name(self.family, self.pair, self.grid_threshold)
    }

    /// Writes the tabulated map as CSV (two comment header lines, then
    /// `theta,rho_in,rho_out`).
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let Repr::Spline(sp) = &self.repr else {
            return Err(Error::Parameter("linear maps are not tabulated".into()));
        };
        let mut f = std::io::BufWriter::new(fs::File::create(path)?);
        writeln!(f, "# {CACHE_VERSION}")?;
        writeln!(
            f,
            "# family={} bits={},{} grid_threshold={:e}",
            family_label(self.family),
            self.pair.0,
            self.pair.1,
            self.grid_threshold
        )?;
        writeln!(f, "theta,rho_in,rho_out")?;
        for (t, m) in sp.knots().iter().zip(sp.values()) {
            writeln!(f, "{t:e},{:e},{m:e}", t.sin())?;
        }
        f.flush()?;
        Ok(())
    }

    /// Reads a map written by [`CorrelationMap::write_csv`], checking that the
    /// header matches the requested quantizer pair.
    pub fn read_csv(path: &Path, family: QuantizerFamily, pair: (Resolution, Resolution), grid_threshold: f64) -> Result<Self> {
        let bad = |reason: String| Error::Format { kind: "correlation map", reason };
        let mut lines = BufReader::new(fs::File::open(path)?).lines();
        let version = lines.next().transpose()?.unwrap_or_default();
        if version.trim() != format!("# {CACHE_VERSION}") {
            return Err(bad(format!("unexpected version line {version:?}")));
        }
        let meta = lines.next().transpose()?.unwrap_or_default();
        let expect = format!(
            "# family={} bits={},{} grid_threshold={:e}",
            family_label(family),
            pair.0,
            pair.1,
            grid_threshold
        );
        if meta.trim() != expect {
            return Err(bad(format!("header {meta:?} does not match {expect:?}")));
        }
        let rest: String = lines.collect::<std::io::Result<Vec<_>>>()?.join("\n");
        let mut rdr = csv::Reader::from_reader(rest.as_bytes());
        let (mut theta, mut m) = (Vec::new(), Vec::new());
        for rec in rdr.records() {
            let rec = rec?;
            let parse = |i: usize| -> Result<f64> {
                rec.get(i)
                    .and_then(|s| s.trim().parse::<f64>().ok())
                    .ok_or_else(|| bad(format!("bad field {i} in record {rec:?}")))
            };
            theta.push(parse(0)?);
            m.push(parse(2)?);
        }
        Ok(CorrelationMap {
            pair,
            family,
            grid_threshold,
            repr: Repr::Spline(NaturalCubicSpline::new(theta, m)?),
        })
    }
}

fn family_label(f: QuantizerFamily) -> &'static str {
    match f {
        QuantizerFamily::LloydMax => "lloyd-max",
        QuantizerFamily::Uniform => "uniform",
    }
}

fn cache_file_name(family: QuantizerFamily, pair: (Resolution, Resolution), thr: f64) -> String {
    format!("corrmap_{}_{}_{}_{:e}.csv", family_label(family), pair.0, pair.1, thr)
}

/// Precomputed threshold/step data for the pair-sum integrand.
struct Steps {
    at: Vec<f64>,
    height: Vec<f64>,
}

impl Steps {
    fn of(q: &QuantizerSpec) -> Self {
        Steps { at: q.thresholds.clone(), height: q.steps() }
    }
}

/// `d m / d theta` at `theta`, i.e. the pair sum of bivariate densities at the
/// threshold pairs multiplied by `cos(theta)`.
fn integrand(a: &Steps, b: &Steps, theta: f64) -> f64 {
    let (s, c) = theta.sin_cos();
    let c2 = c * c;
    let inv = 0.5 / c2;
    let k = 1.0 / (1.0 + s);
    // exponent >= (a - c)^2 / (4 cos^2): only pairs inside this window matter
    let window = 2.0 * c * EXPONENT_CUTOFF.sqrt();
    let mut total = 0.0;
    for (&x, &dx) in a.at.iter().zip(&a.height) {
        // (x, y) and (-x, -y) contribute equally
        if x < 0.0 {
            continue;
        }
        let mult = if x == 0.0 { 1.0 } else { 2.0 };
        let lo = b.at.partition_point(|&y| y < x - window);
        let hi = b.at.partition_point(|&y| y <= x + window);
        let mut acc = 0.0;
        for j in lo..hi {
            let y = b.at[j];
            let d = x - y;
            let e = d * d * inv + x * y * k;
            if e < EXPONENT_CUTOFF {
                acc += b.height[j] * (-e).exp();
            }
        }
        total += mult * dx * acc;
    }
    total / (2.0 * PI)
}

struct Leaf {
    right: f64,
    delta: f64,
}

fn refine(a: &Steps, b: &Steps, lo: f64, hi: f64, threshold: f64, depth: u32, exec: Exec) -> Result<Vec<Leaf>> {
    let tol = QUAD_ABS_TOL * (hi - lo) / FRAC_PI_2;
    let q = integrate(|t| integrand(a, b, t), lo, hi, tol)?;
    if q.value.abs() <= threshold {
        return Ok(vec![Leaf { right: hi, delta: q.value }]);
    }
    if depth >= MAX_REFINE_DEPTH {
        return Err(Error::Numerical(format!("correlation grid refinement stalled near theta = {lo}")));
    }
    let mid = 0.5 * (lo + hi);
    let (l, r) = exec.join(
        || refine(a, b, lo, mid, threshold, depth + 1, exec),
        || refine(a, b, mid, hi, threshold, depth + 1, exec),
    );
    let mut l = l?;
    l.extend(r?);
    Ok(l)
}

/// Tabulates the output covariance of a quantizer pair on an adaptive grid so
/// that neighbouring grid values differ by at most `grid_threshold`.
pub fn build_correlation_map(qa: &QuantizerSpec, qb: &QuantizerSpec, grid_threshold: f64, exec: Exec) -> Result<CorrelationMap> {
    if !(grid_threshold > 0.0) {
        return Err(Error::Parameter(format!("grid threshold must be positive (got {grid_threshold})")));
    }
    let (ra, rb) = (qa.resolution, qb.resolution);
    let pair = if ra <= rb { (ra, rb) } else { (rb, ra) };
    let mk = |repr| CorrelationMap { pair, family: qa.family, grid_threshold, repr };
    if qa.is_ideal() || qb.is_ideal() {
        return Ok(mk(Repr::Linear(qa.gain * qb.gain)));
    }
    let (sa, sb) = (Steps::of(qa), Steps::of(qb));
    let h = FRAC_PI_2 / INITIAL_INTERVALS as f64;
    let chunks = exec.try_map(INITIAL_INTERVALS, |i| {
        let hi = if i + 1 == INITIAL_INTERVALS { FRAC_PI_2 } else { (i + 1) as f64 * h };
        refine(&sa, &sb, i as f64 * h, hi, grid_threshold, 0, exec)
    })?;
    let mut theta = vec![0.0];
    let mut m = vec![0.0];
    let mut acc = 0.0;
    for leaf in chunks.into_iter().flatten() {
        acc += leaf.delta;
        theta.push(leaf.right);
        m.push(acc);
    }
    Ok(mk(Repr::Spline(NaturalCubicSpline::new(theta, m)?)))
}

/// Designed quantizers and correlation maps, memoized by resolution and by
/// unordered resolution pair, optionally persisted to a directory.
///
/// Lookups that miss compute under a lock, so a cache should be filled from
/// sequential code before it is shared with parallel workers.
#[derive(Debug)]
pub struct MapCache {
    pub family: QuantizerFamily,
    pub grid_threshold: f64,
    pub exec: Exec,
    dir: Option<PathBuf>,
    specs: Mutex<HashMap<Resolution, Arc<QuantizerSpec>>>,
    maps: Mutex<HashMap<(Resolution, Resolution), Arc<CorrelationMap>>>,
}

impl MapCache {
    pub fn new(family: QuantizerFamily, grid_threshold: f64, exec: Exec) -> Self {
        MapCache {
            family,
            grid_threshold,
            exec,
            dir: None,
            specs: Mutex::new(HashMap::new()),
            maps: Mutex::new(HashMap::new()),
        }
    }

    /// Persists tabulated maps under `dir` and reuses them on later runs.
    pub fn with_dir(mut self, dir: impl Into<PathBuf>) -> Self {
        self.dir = Some(dir.into());
        self
    }

    pub fn spec(&self, r: Resolution) -> Result<Arc<QuantizerSpec>> {
        if let Some(s) = self.specs.lock().expect("spec cache poisoned").get(&r) {
            return Ok(s.clone());
        }
        let s = Arc::new(design_quantizer(r, self.family)?);
        self.specs.lock().expect("spec cache poisoned").insert(r, s.clone());
        Ok(s)
    }

    pub fn map(&self, a: Resolution, b: Resolution) -> Result<Arc<CorrelationMap>> {
        let key = if a <= b { (a, b) } else { (b, a) };
        if let Some(m) = self.maps.lock().expect("map cache poisoned").get(&key) {
            return Ok(m.clone());
        }
        let path = self.dir.as_ref().map(|d| d.join(cache_file_name(self.family, key, self.grid_threshold)));
        let linear = a == Resolution::Ideal || b == Resolution::Ideal;
        let from_disk = match &path {
            Some(p) if !linear && p.exists() => match CorrelationMap::read_csv(p, self.family, key, self.grid_threshold) {
                Ok(m) => Some(m),
                Err(e) => {
                    log::warn!("ignoring correlation-map cache {}: {e}", p.display());
                    None
                }
            },
            _ => None,
        };
        let map = match from_disk {
            Some(m) => m,
            None => {
                let start = std::time::Instant::now();
                let m = build_correlation_map(&*self.spec(key.0)?, &*self.spec(key.1)?, self.grid_threshold, self.exec)?;
                log::debug!("correlation map {}/{} built in {:.2?}", key.0, key.1, start.elapsed());
                if let (Some(dir), false) = (&self.dir, m.is_linear()) {
                    fs::create_dir_all(dir)?;
                    m.write_csv(&dir.join(m.file_name()))?;
                }
                m
            }
        };
        let map = Arc::new(map);
        self.maps.lock().expect("map cache poisoned").insert(key, map.clone());
        Ok(map)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lm(b: u8) -> QuantizerSpec {
        design_quantizer(Resolution::Bits(b), QuantizerFamily::LloydMax).unwrap()
    }

    /// `E[Q_a(x) Q_b(x)]` by direct summation over the overlapping bins.
    fn same_input_covariance(qa: &QuantizerSpec, qb: &QuantizerSpec) -> f64 {
        let mut edges: Vec<f64> = qa.thresholds.iter().chain(&qb.thresholds).copied().collect();
        edges.sort_by(f64::total_cmp);
        edges.dedup();
        let mut e = vec![f64::NEG_INFINITY];
        e.extend(edges);
        e.push(f64::INFINITY);
        e.windows(2)
            .map(|w| {
                let probe = if w[0].is_infinite() { w[1] - 1.0 } else { w[0] };
                crate::special::normal_interval(w[0], w[1]) * qa.quantize(probe) * qb.quantize(probe)
            })
            .sum()
    }

    #[test]
    fn one_bit_arcsine_law() {
        let q = lm(1);
        let map = build_correlation_map(&q, &q, 1e-3, Exec::Sequential).unwrap();
        let mut worst: f64 = 0.0;
        for i in 0..=1000 {
            let rho = i as f64 / 1000.0;
            let exact = (2.0 / PI) * (2.0 / PI) * rho.asin();
            worst = worst.max((map.eval(rho) - exact).abs());
        }
        assert!(worst < 1e-9, "{worst}");
        assert!((map.eval(0.5) / (2.0 / PI) - 1.0 / 3.0).abs() < 1e-9);
    }

    #[test]
    fn endpoints_and_grid_invariants() {
        for (a, b) in [(2u8, 2u8), (1, 3), (3, 5)] {
            let (qa, qb) = (lm(a), lm(b));
            let map = build_correlation_map(&qa, &qb, 1e-3, Exec::Parallel).unwrap();
            assert_eq!(map.eval(0.0), 0.0);
            let at_one = same_input_covariance(&qa, &qb);
            assert!((map.eval(1.0) - at_one).abs() < 1e-7, "{a}/{b}: {} vs {at_one}", map.eval(1.0));
            let grid = map.grid().unwrap();
            assert!(grid.windows(2).all(|w| w[1].0 > w[0].0 && w[1].1 > w[0].1));
            assert!(grid.windows(2).all(|w| w[1].1 - w[0].1 <= 1e-3 + 1e-12));
            assert!((map.eval(-0.3) + map.eval(0.3)).abs() < 1e-15);
        }
        let q = lm(4);
        let map = build_correlation_map(&q, &q, 1e-3, Exec::Sequential).unwrap();
        assert!((map.eval(1.0) - q.output_power).abs() < 1e-7);
    }

    #[test]
    fn ideal_pairs_are_linear() {
        let id = QuantizerSpec::ideal(QuantizerFamily::LloydMax);
        let q = lm(3);
        let m = build_correlation_map(&id, &q, 1e-3, Exec::Sequential).unwrap();
        assert!(m.is_linear());
        assert!((m.eval(0.4) - 0.4 * q.gain).abs() < 1e-15);
        let m = build_correlation_map(&id, &id, 1e-3, Exec::Sequential).unwrap();
        assert_eq!(m.eval(-0.25), -0.25);
    }

    #[test]
    fn sequential_and_parallel_agree_bitwise() {
        let (qa, qb) = (lm(2), lm(4));
        let a = build_correlation_map(&qa, &qb, 1e-3, Exec::Sequential).unwrap();
        let b = build_correlation_map(&qa, &qb, 1e-3, Exec::Parallel).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn disk_cache_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let cache = MapCache::new(QuantizerFamily::LloydMax, 1e-3, Exec::Sequential).with_dir(dir.path());
        let m1 = cache.map(Resolution::Bits(3), Resolution::Bits(2)).unwrap();
        assert_eq!(m1.pair, (Resolution::Bits(2), Resolution::Bits(3)));
        let fresh = MapCache::new(QuantizerFamily::LloydMax, 1e-3, Exec::Sequential).with_dir(dir.path());
        let m2 = fresh.map(Resolution::Bits(2), Resolution::Bits(3)).unwrap();
        assert_eq!(*m1, *m2);
        let path = dir.path().join(m1.file_name());
        assert!(CorrelationMap::read_csv(&path, QuantizerFamily::Uniform, m1.pair, 1e-3).is_err());
    }
}
