use crate::config::{QuantizerFamily, Resolution};
use crate::error::{Error, Result};
use crate::special::{normal_interval, normal_pdf, normal_quantile};

const MAX_NEWTON_ITERS: usize = 200;
const CENTROID_TOL: f64 = 1e-12;

/// Scalar quantizer for a zero-mean unit-variance real Gaussian input.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantizerSpec {
    pub resolution: Resolution,
    pub family: QuantizerFamily,
    /// Ascending decision thresholds (`2^b - 1` of them).
    pub thresholds: Vec<f64>,
    /// Ascending representatives (`2^b` of them).
    pub levels: Vec<f64>,
    /// `E[(Q(x) - x)^2]`.
    pub distortion: f64,
    /// Bussgang gain `E[Q(x) x]`.
    pub gain: f64,
    /// `E[Q(x)^2]`.
    pub output_power: f64,
}

impl QuantizerSpec {
    pub fn ideal(family: QuantizerFamily) -> Self {
        QuantizerSpec {
            resolution: Resolution::Ideal,
            family,
            thresholds: Vec::new(),
            levels: Vec::new(),
            distortion: 0.0,
            gain: 1.0,
            output_power: 1.0,
        }
    }

    pub fn is_ideal(&self) -> bool {
        self.resolution == Resolution::Ideal
    }

    /// Maps `x` to its bin representative; `x` equal to a threshold goes to
    /// the upper bin.
    pub fn quantize(&self, x: f64) -> f64 {
        if self.is_ideal() {
            return x;
        }
        self.levels[self.thresholds.partition_point(|&t| t <= x)]
    }

    /// Step heights `r_{k+1} - r_k` at each threshold.
    pub fn steps(&self) -> Vec<f64> {
        self.levels.windows(2).map(|w| w[1] - w[0]).collect()
    }
}

/// Designs the quantizer of the given family and resolution.
pub fn design_quantizer(resolution: Resolution, family: QuantizerFamily) -> Result<QuantizerSpec> {
    let bits = match resolution {
        Resolution::Ideal => return Ok(QuantizerSpec::ideal(family)),
        Resolution::Bits(b) if (1..=Resolution::MAX_BITS).contains(&b) => b,
        Resolution::Bits(b) => {
            return Err(Error::Parameter(format!("quantizer resolution {b} outside 1..={}", Resolution::MAX_BITS)))
        }
    };
    let half = 1usize << (bits - 1);
    let (pos_thresholds, pos_levels) = match family {
        QuantizerFamily::LloydMax => lloyd_max_half(half)?,
        QuantizerFamily::Uniform => uniform_half(half),
    };
    Ok(assemble(resolution, family, &pos_thresholds, &pos_levels))
}

/// Mirrors a positive-half design. `pos_thresholds` excludes 0 and infinity.
fn assemble(resolution: Resolution, family: QuantizerFamily, pos_thresholds: &[f64], pos_levels: &[f64]) -> QuantizerSpec {
    let mut thresholds: Vec<f64> = pos_thresholds.iter().rev().map(|t| -t).collect();
    thresholds.push(0.0);
    thresholds.extend_from_slice(pos_thresholds);
    let mut levels: Vec<f64> = pos_levels.iter().rev().map(|r| -r).collect();
    levels.extend_from_slice(pos_levels);

    let (mut gain, mut power) = (0.0, 0.0);
    let edges = bin_edges(pos_thresholds);
    for (k, &r) in pos_levels.iter().enumerate() {
        let (a, b) = (edges[k], edges[k + 1]);
        power += normal_interval(a, b) * r * r;
        gain += r * (normal_pdf(a) - normal_pdf(b));
    }
    let (gain, power) = (2.0 * gain, 2.0 * power);
    QuantizerSpec {
        resolution,
        family,
        thresholds,
        levels,
        distortion: 1.0 - 2.0 * gain + power,
        gain,
        output_power: power,
    }
}

fn bin_edges(pos_thresholds: &[f64]) -> Vec<f64> {
    let mut e = Vec::with_capacity(pos_thresholds.len() + 2);
    e.push(0.0);
    e.extend_from_slice(pos_thresholds);
    e.push(f64::INFINITY);
    e
}

/// `phi(a) - phi(b)` without cancellation for narrow intervals.
fn pdf_diff(a: f64, b: f64) -> f64 {
    if b.is_infinite() {
        return normal_pdf(a);
    }
    -normal_pdf(a) * (-(b - a) * (b + a) * 0.5).exp_m1()
}

struct Cell {
    r: f64,
    dr_da: f64,
    dr_db: f64,
}

fn centroid(a: f64, b: f64) -> Cell {
    let d = normal_interval(a, b);
    let r = pdf_diff(a, b) / d;
    Cell {
        r,
        dr_da: normal_pdf(a) * (r - a) / d,
        dr_db: if b.is_infinite() { 0.0 } else { normal_pdf(b) * (b - r) / d },
    }
}

/// Lloyd-Max design of the positive half with `half` levels. The nearest
/// neighbour conditions `G_k = t_k - (r_k + r_{k+1}) / 2 = 0` are solved by a
/// damped Newton iteration whose Jacobian is tridiagonal; the initial point is
/// the asymptotically optimal compander.
fn lloyd_max_half(half: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    let n = half - 1;
    let n_levels = 2 * half;
    let mut t: Vec<f64> = (1..half)
        .map(|k| 3f64.sqrt() * normal_quantile((half + k) as f64 / n_levels as f64))
        .collect();
    let cells = |t: &[f64]| -> Vec<Cell> {
        let e = bin_edges(t);
        (0..half).map(|k| centroid(e[k], e[k + 1])).collect()
    };
    let residual = |t: &[f64], c: &[Cell]| -> Vec<f64> { (0..n).map(|k| t[k] - 0.5 * (c[k].r + c[k + 1].r)).collect() };
    let norm = |g: &[f64]| g.iter().fold(0.0f64, |m, x| m.max(x.abs()));

    let mut c = cells(&t);
    let mut g = residual(&t, &c);
    for _ in 0..MAX_NEWTON_ITERS {
        if n == 0 {
            break;
        }
        // Jacobian rows: sub[k] couples t_{k-1}, sup[k] couples t_{k+1}.
        let mut diag = vec![0.0; n];
        let mut sub = vec![0.0; n];
        let mut sup = vec![0.0; n];
        for k in 0..n {
            diag[k] = 1.0 - 0.5 * (c[k].dr_db + c[k + 1].dr_da);
            if k > 0 {
                sub[k] = -0.5 * c[k].dr_da;
            }
            if k + 1 < n {
                sup[k] = -0.5 * c[k + 1].dr_db;
            }
        }
        let step = solve_tridiagonal(&sub, &diag, &sup, &g);
        let g0 = norm(&g);
        let mut lambda = 1.0;
        let (t_new, c_new, g_new) = loop {
            let cand: Vec<f64> = t.iter().zip(&step).map(|(x, s)| x - lambda * s).collect();
            let ordered = cand[0] > 0.0 && cand.windows(2).all(|w| w[1] > w[0]);
            if ordered {
                let cc = cells(&cand);
                let gg = residual(&cand, &cc);
                if norm(&gg) <= g0 || lambda < 1e-6 {
                    break (cand, cc, gg);
                }
            }
            lambda *= 0.5;
            if lambda < 1e-12 {
                return Err(Error::Numerical(format!("Lloyd-Max Newton step failed for {n_levels} levels")));
            }
        };
        let dr = c.iter().zip(&c_new).fold(0.0f64, |m, (a, b)| m.max((a.r - b.r).abs()));
        t = t_new;
        c = c_new;
        g = g_new;
        if dr < CENTROID_TOL {
            let levels = c.iter().map(|x| x.r).collect();
            return Ok((t, levels));
        }
    }
    if n == 0 {
        return Ok((t, c.iter().map(|x| x.r).collect()));
    }
    Err(Error::Numerical(format!(
        "Lloyd-Max design for {n_levels} levels did not converge (residual {:e})",
        norm(&g)
    )))
}

/// Thomas algorithm; `sub[0]` and `sup[n-1]` are ignored.
fn solve_tridiagonal(sub: &[f64], diag: &[f64], sup: &[f64], rhs: &[f64]) -> Vec<f64> {
    let n = diag.len();
    let mut c = vec![0.0; n];
    let mut d = vec![0.0; n];
    c[0] = sup[0] / diag[0];
    d[0] = rhs[0] / diag[0];
    for i in 1..n {
        let m = diag[i] - sub[i] * c[i - 1];
        c[i] = sup[i] / m;
        d[i] = (rhs[i] - sub[i] * d[i - 1]) / m;
    }
    let mut x = vec![0.0; n];
    x[n - 1] = d[n - 1];
    for i in (0..n - 1).rev() {
        x[i] = d[i] - c[i] * x[i + 1];
    }
    x
}

fn uniform_half_with_step(half: usize, step: f64) -> (Vec<f64>, Vec<f64>) {
    let t = (1..half).map(|k| k as f64 * step).collect();
    let r = (0..half).map(|k| (k as f64 + 0.5) * step).collect();
    (t, r)
}

fn uniform_distortion(half: usize, step: f64) -> f64 {
    let (t, r) = uniform_half_with_step(half, step);
    let e = bin_edges(&t);
    let mut d = 0.0;
    for (k, &rk) in r.iter().enumerate() {
        let (a, b) = (e[k], e[k + 1]);
        // int (x - r)^2 phi = D (1 + r^2) - 2 r (phi(a) - phi(b)) + a phi(a) - b phi(b)
        let bphi = if b.is_infinite() { 0.0 } else { b * normal_pdf(b) };
        d += normal_interval(a, b) * (1.0 + rk * rk) - 2.0 * rk * pdf_diff(a, b) + a * normal_pdf(a) - bphi;
    }
    2.0 * d
}

/// Uniform mid-rise quantizer with the MSE-optimal step (golden-section search).
fn uniform_half(half: usize) -> (Vec<f64>, Vec<f64>) {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let (mut lo, mut hi) = (1e-6, 4.0);
    let mut x1 = hi - inv_phi * (hi - lo);
    let mut x2 = lo + inv_phi * (hi - lo);
    let (mut f1, mut f2) = (uniform_distortion(half, x1), uniform_distortion(half, x2));
    while hi - lo > 1e-13 {
        if f1 < f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - inv_phi * (hi - lo);
            f1 = uniform_distortion(half, x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + inv_phi * (hi - lo);
            f2 = uniform_distortion(half, x2);
        }
    }
    uniform_half_with_step(half, 0.5 * (lo + hi))
}
