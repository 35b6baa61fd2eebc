//! Phase-shifter codebook, beam power search, resource-fair RF-chain
//! allocation and the sub-array analog combiner.

use std::f64::consts::PI;

use nalgebra::DMatrix;

use crate::channel::{steering_vector, ChannelRealization};
use crate::config::{Mode, SystemConfig};
use crate::error::{dim_err, Result};
use crate::exec::Exec;
use crate::linalg::{CMatrix, CVector};
#[cfg(test)]
use crate::linalg::C64;

/// `4 M_C` steering vectors with phases uniformly spaced over `[-pi, pi)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Codebook {
    pub m_c: usize,
    pub phases: Vec<f64>,
    /// Columns are the beams `w_j`; combining applies `w_j^H`.
    pub vectors: CMatrix,
}

impl Codebook {
    pub fn len(&self) -> usize {
        self.phases.len()
    }

    pub fn is_empty(&self) -> bool {
        self.phases.is_empty()
    }

    pub fn beam(&self, j: usize) -> CVector {
        self.vectors.column(j).into_owned()
    }
}

pub fn build_codebook(m_c: usize) -> Codebook {
    let n = 4 * m_c;
    let phases: Vec<f64> = (0..n).map(|j| -PI + j as f64 * 2.0 * PI / n as f64).collect();
    let mut vectors = CMatrix::zeros(m_c, n);
    for (j, &phi) in phases.iter().enumerate() {
        vectors.column_mut(j).copy_from(&steering_vector(phi, m_c));
    }
    Codebook { m_c, phases, vectors }
}

/// Best beam power `[P]_{u,i}` and its codebook index `[J]_{u,i}`.
#[derive(Debug, Clone, PartialEq)]
pub struct BeamPowerTable {
    pub power: DMatrix<f64>,
    pub index: DMatrix<usize>,
}

/// Evaluates `p(j) = sum_l ||w_j^H H_u^i[l]||^2` for every user and sub-array
/// and keeps the maximum (lowest index on ties).
pub fn beam_power_table(ch: &ChannelRealization, cb: &Codebook, m_rfe: usize, exec: Exec) -> Result<BeamPowerTable> {
    if cb.m_c * m_rfe != ch.m_r {
        return Err(dim_err("beam_power_table", ch.m_r, cb.m_c * m_rfe));
    }
    let u_n = ch.num_users();
    let active: Vec<usize> = (0..ch.len()).filter(|&l| ch.h[l].iter().any(|z| z.norm_sqr() > 0.0)).collect();
    let wh = cb.vectors.adjoint();
    let cells = exec.map(u_n * m_rfe, |k| {
        let (u, i) = (k / m_rfe, k % m_rfe);
        let mut p = vec![0.0; cb.len()];
        for &l in &active {
            let block = ch.h[l].view((i * cb.m_c, u * ch.m_t), (cb.m_c, ch.m_t));
            let g = &wh * block;
            for (j, pj) in p.iter_mut().enumerate() {
                *pj += g.row(j).iter().map(|z| z.norm_sqr()).sum::<f64>();
            }
        }
        let mut best = 0;
        for j in 1..p.len() {
            if p[j] > p[best] {
                best = j;
            }
        }
        (p[best], best)
    });
    Ok(BeamPowerTable {
        power: DMatrix::from_fn(u_n, m_rfe, |u, i| cells[u * m_rfe + i].0),
        index: DMatrix::from_fn(u_n, m_rfe, |u, i| cells[u * m_rfe + i].1),
    })
}

/// Per-chain assignment produced by the greedy allocation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BeamAllocation {
    /// `user[i]`: user served by RF chain `i`.
    pub user: Vec<usize>,
    /// `beam[i]`: codebook index used on RF chain `i`.
    pub beam: Vec<usize>,
    /// Chains in the order they were assigned.
    pub order: Vec<usize>,
}

impl BeamAllocation {
    pub fn chains_per_user(&self, users: usize) -> Vec<usize> {
        let mut n = vec![0; users];
        for &u in &self.user {
            n[u] += 1;
        }
        n
    }
}

/// Greedy resource-fair allocation: repeatedly take the largest remaining
/// `[P]_{u,i}` over the users not yet served this round and the unassigned
/// chains. Ties go to the lowest user, then the lowest chain.
pub fn allocate_beams(table: &BeamPowerTable) -> BeamAllocation {
    let (users, m_rfe) = table.power.shape();
    let mut user = vec![usize::MAX; m_rfe];
    let mut beam = vec![0; m_rfe];
    let mut order = Vec::with_capacity(m_rfe);
    let mut chain_free = vec![true; m_rfe];
    let mut user_free = vec![true; users];
    for _ in 0..m_rfe {
        if !user_free.iter().any(|&f| f) {
            user_free.iter_mut().for_each(|f| *f = true);
        }
        let mut best: Option<(usize, usize)> = None;
        for u in (0..users).filter(|&u| user_free[u]) {
            for i in (0..m_rfe).filter(|&i| chain_free[i]) {
                if best.is_none_or(|(bu, bi)| table.power[(u, i)] > table.power[(bu, bi)]) {
                    best = Some((u, i));
                }
            }
        }
        let Some((u, i)) = best else { break };
        user[i] = u;
        beam[i] = table.index[(u, i)];
        order.push(i);
        chain_free[i] = false;
        user_free[u] = false;
    }
    BeamAllocation { user, beam, order }
}

/// Block-diagonal `M_R x M_RFE` combiner; block `i` holds the beam selected
/// for chain `i`.
pub fn assemble_combiner(alloc: &BeamAllocation, cb: &Codebook) -> CMatrix {
    let m_rfe = alloc.beam.len();
    let mut w = CMatrix::zeros(cb.m_c * m_rfe, m_rfe);
    for (i, &j) in alloc.beam.iter().enumerate() {
        w.view_mut((i * cb.m_c, i), (cb.m_c, 1)).copy_from(&cb.vectors.column(j));
    }
    w
}

/// Combiner for a configuration: identity for the digital modes, otherwise
/// codebook search plus greedy allocation.
pub fn combiner_for(cfg: &SystemConfig, ch: &ChannelRealization, exec: Exec) -> Result<CMatrix> {
    match cfg.mode {
        Mode::Dbf | Mode::DbfMixed => Ok(CMatrix::identity(cfg.m_r, cfg.m_r)),
        Mode::Hbf => {
            let cb = build_codebook(cfg.m_c);
            let table = beam_power_table(ch, &cb, cfg.m_rfe, exec)?;
            Ok(assemble_combiner(&allocate_beams(&table), &cb))
        }
    }
}

/// `W^H W`, which equals `M_C I` for every sub-array combiner.
pub fn combiner_gram(w: &CMatrix) -> CMatrix {
    w.adjoint() * w
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed::rng_for;
    use proptest::prelude::*;
    use rand::Rng;

    fn zero() -> C64 {
        C64::new(0.0, 0.0)
    }

    fn single_path(m_r: usize, phi: f64, alpha: C64) -> ChannelRealization {
        let h = steering_vector(phi, m_r) * alpha;
        ChannelRealization::from_taps(vec![CMatrix::from_column_slice(m_r, 1, h.as_slice())], 1).unwrap()
    }

    fn random_table(rng: &mut impl Rng, users: usize, m_rfe: usize) -> BeamPowerTable {
        BeamPowerTable {
            power: DMatrix::from_fn(users, m_rfe, |_, _| rng.random::<f64>()),
            index: DMatrix::from_fn(users, m_rfe, |_, _| rng.random_range(0..8)),
        }
    }

    #[test]
    fn codebook_examples() {
        let cb = build_codebook(1);
        assert_eq!(cb.len(), 4);
        let expect = [-PI, -PI / 2.0, 0.0, PI / 2.0];
        for (a, b) in cb.phases.iter().zip(expect) {
            assert!((a - b).abs() < 1e-15);
        }
        let cb = build_codebook(2);
        assert_eq!(cb.len(), 8);
        for j in 0..cb.len() {
            assert!((cb.beam(j).norm_squared() - 2.0).abs() < 1e-12);
        }
        assert!(cb.phases.windows(2).all(|w| w[1] > w[0]));
        assert!(*cb.phases.last().unwrap() < PI);
    }

    #[test]
    fn aligned_beam_gets_coherent_gain() {
        let m_c = 4;
        let cb = build_codebook(m_c);
        for k in [0, 3, 9, 15] {
            let ch = single_path(m_c, cb.phases[k], C64::from_polar(1.0, 0.3));
            let t = beam_power_table(&ch, &cb, 1, Exec::Sequential).unwrap();
            assert!((t.power[(0, 0)] - (m_c * m_c) as f64).abs() < 1e-9);
            assert_eq!(t.index[(0, 0)], k);
            // brute force over all beams
            for j in 0..cb.len() {
                let p = (cb.beam(j).adjoint() * ch.user_tap(0, 0))[(0, 0)].norm_sqr();
                assert!(p <= t.power[(0, 0)] + 1e-9);
            }
        }
    }

    #[test]
    fn zero_channel_picks_first_beam() {
        let ch = ChannelRealization::from_taps(vec![CMatrix::zeros(4, 2)], 1).unwrap();
        let t = beam_power_table(&ch, &build_codebook(2), 2, Exec::Sequential).unwrap();
        assert!(t.power.iter().all(|&p| p == 0.0));
        assert!(t.index.iter().all(|&j| j == 0));
    }

    #[test]
    fn allocation_counts() {
        let mut rng = rng_for(11, 0, 0);
        let a = allocate_beams(&random_table(&mut rng, 4, 4));
        assert_eq!(a.chains_per_user(4), vec![1; 4]);
        let a = allocate_beams(&random_table(&mut rng, 4, 8));
        assert_eq!(a.chains_per_user(4), vec![2; 4]);
    }

    #[test]
    fn single_user_takes_chains_in_descending_power() {
        let power = DMatrix::from_row_slice(1, 4, &[0.2, 0.9, 0.5, 0.7]);
        let t = BeamPowerTable { power, index: DMatrix::from_row_slice(1, 4, &[3, 1, 2, 0]) };
        let a = allocate_beams(&t);
        assert_eq!(a.order, vec![1, 3, 2, 0]);
        assert_eq!(a.user, vec![0; 4]);
        assert_eq!(a.beam, vec![3, 1, 2, 0]);
    }

    #[test]
    fn ties_break_low() {
        let t = BeamPowerTable { power: DMatrix::from_element(2, 2, 1.0), index: DMatrix::from_element(2, 2, 0) };
        let a = allocate_beams(&t);
        assert_eq!(a.user, vec![0, 1]);
        assert_eq!(a.order, vec![0, 1]);
    }

    #[test]
    fn combiner_structure() {
        let cfg = SystemConfig { m_r: 4, m_c: 1, m_rfe: 4, ..SystemConfig::example() };
        let ch = ChannelRealization::from_taps(vec![CMatrix::zeros(4, 1)], 1).unwrap();
        assert_eq!(combiner_for(&cfg, &ch, Exec::Sequential).unwrap(), CMatrix::identity(4, 4));

        let cb = build_codebook(2);
        let alloc = BeamAllocation { user: vec![0, 0], beam: vec![1, 6], order: vec![0, 1] };
        let w = assemble_combiner(&alloc, &cb);
        assert_eq!(w.shape(), (4, 2));
        assert_eq!(w[(2, 0)], zero());
        assert_eq!(w[(3, 0)], zero());
        assert_eq!(w[(0, 1)], zero());
        assert_eq!(w[(1, 1)], zero());
        assert!((combiner_gram(&w) - CMatrix::identity(2, 2) * C64::new(2.0, 0.0)).norm() < 1e-12);
    }

    proptest! {
        #[test]
        fn fairness(seed in any::<u64>(), users in 1usize..7, m_rfe in 1usize..20) {
            let mut rng = rng_for(seed, 0, 0);
            let t = random_table(&mut rng, users, m_rfe);
            let a = allocate_beams(&t);
            prop_assert!(a.user.iter().all(|&u| u < users));
            let n = a.chains_per_user(users);
            if m_rfe >= users {
                let (lo, hi) = (n.iter().min().unwrap(), n.iter().max().unwrap());
                prop_assert!(hi - lo <= 1);
            } else {
                prop_assert!(n.iter().all(|&k| k <= 1));
            }
        }

        #[test]
        fn first_pick_of_each_round_is_largest_remaining(seed in any::<u64>(), users in 1usize..5, m_rfe in 1usize..16) {
            let mut rng = rng_for(seed, 0, 1);
            let t = random_table(&mut rng, users, m_rfe);
            let a = allocate_beams(&t);
            let mut free = vec![true; m_rfe];
            for (step, &i) in a.order.iter().enumerate() {
                if step % users == 0 {
                    let max = (0..users)
                        .flat_map(|u| (0..m_rfe).filter(|&c| free[c]).map(move |c| (u, c)))
                        .map(|(u, c)| t.power[(u, c)])
                        .fold(f64::MIN, f64::max);
                    prop_assert_eq!(t.power[(a.user[i], i)], max);
                }
                free[i] = false;
            }
        }

        #[test]
        fn common_scale_leaves_allocation_unchanged(seed in any::<u64>(), re in 0.1f64..3.0, im in -3.0f64..3.0) {
            let cfg = SystemConfig { m_r: 8, m_c: 2, m_rfe: 4, mode: Mode::Hbf, users: 3,
                adc_bits: vec![crate::config::Resolution::Bits(3); 4], ..SystemConfig::example() };
            let ch = crate::channel::sample_channel(&cfg, &mut rng_for(seed, 1, 0)).unwrap();
            let s = C64::new(re, im);
            let scaled = ChannelRealization::from_taps(ch.h.iter().map(|h| h * s).collect(), 1).unwrap();
            let cb = build_codebook(2);
            let t1 = beam_power_table(&ch, &cb, 4, Exec::Sequential).unwrap();
            let t2 = beam_power_table(&scaled, &cb, 4, Exec::Sequential).unwrap();
            prop_assert_eq!(&t1.index, &t2.index);
            for (a, b) in t1.power.iter().zip(t2.power.iter()) {
                prop_assert!((b - a * s.norm_sqr()).abs() <= 1e-9 * b.abs().max(1.0));
            }
            let (a1, a2) = (allocate_beams(&t1), allocate_beams(&t2));
            for (&i, &j) in a1.order.iter().zip(&a2.order) {
                let (p1, p2) = (t1.power[(a1.user[i], i)], t2.power[(a2.user[j], j)]);
                prop_assert!((p2 - p1 * s.norm_sqr()).abs() <= 1e-9 * p2.abs().max(1e-300));
            }
        }

        #[test]
        fn combiner_gram_is_scaled_identity(seed in any::<u64>(), m_c in 1usize..5, m_rfe in 1usize..5) {
            let mut rng = rng_for(seed, 0, 2);
            let beam: Vec<usize> = (0..m_rfe).map(|_| rng.random_range(0..4 * m_c)).collect();
            let alloc = BeamAllocation { user: vec![0; m_rfe], beam, order: (0..m_rfe).collect() };
            let w = assemble_combiner(&alloc, &build_codebook(m_c));
            let g = combiner_gram(&w);
            prop_assert!((g - CMatrix::identity(m_rfe, m_rfe) * C64::new(m_c as f64, 0.0)).norm() < 1e-10);
        }
    }
}
