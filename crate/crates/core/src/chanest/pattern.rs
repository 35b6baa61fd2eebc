use crate::error::{Error, Result};

pub const SLOT_SYMBOLS: usize = 14;
/// Front-loaded DMRS position within each slot.
pub const DMRS_SYMBOL: usize = 2;

/// Per-user pilot positions on a `k x l_sym` time-frequency grid; every user's
/// set is the product of its pilot symbols and pilot subcarriers and is
/// replicated over all antennas.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PilotPattern {
    pub k: usize,
    pub l_sym: usize,
    pub symbols: Vec<Vec<usize>>,
    pub subcarriers: Vec<Vec<usize>>,
}

impl PilotPattern {
    pub fn users(&self) -> usize {
        self.symbols.len()
    }

    /// Time-frequency indices `l * K + k` of user `u`.
    pub fn tf_indices(&self, u: usize) -> Vec<usize> {
        let mut v = Vec::new();
        for &l in &self.symbols[u] {
            for &k in &self.subcarriers[u] {
                v.push(l * self.k + k);
            }
        }
        v
    }

    /// Space-time-frequency indices `m * (L K) + l * K + k` for `m` antennas.
    pub fn stf_indices(&self, u: usize, m: usize) -> Vec<usize> {
        let tf = self.tf_indices(u);
        let plane = self.k * self.l_sym;
        (0..m).flat_map(|a| tf.iter().map(move |&i| a * plane + i)).collect()
    }
}

/// NR type-1 DMRS: one pilot symbol per 14-symbol slot, users 0 and 1 on the
/// even comb and users 2 and 3 on the odd comb. Two users sharing a comb are
/// separated by a length-2 code, modelled as disjoint sets with every fourth
/// subcarrier each; a user alone on its comb gets the whole comb.
pub fn dmrs_pattern(users: usize, k: usize, l_sym: usize) -> Result<PilotPattern> {
    if users == 0 || users > 4 {
        return Err(Error::Parameter(format!("DMRS pattern supports 1 to 4 users (got {users})")));
    }
    if k == 0 || k % 2 != 0 {
        return Err(Error::Parameter(format!("subcarrier count must be even and positive (got {k})")));
    }
    if l_sym <= DMRS_SYMBOL {
        return Err(Error::Parameter(format!("need more than {DMRS_SYMBOL} symbols (got {l_sym})")));
    }
    let symbols: Vec<usize> = (DMRS_SYMBOL..l_sym).step_by(SLOT_SYMBOLS).collect();
    let mut subcarriers = Vec::with_capacity(users);
    for u in 0..users {
        let comb = u / 2;
        let partner = u ^ 1;
        let shared = partner < users;
        let set: Vec<usize> = if shared {
            let offset = comb + 2 * (u % 2);
            (offset..k).step_by(4).collect()
        } else {
            (comb..k).step_by(2).collect()
        };
        subcarriers.push(set);
    }
    Ok(PilotPattern { k, l_sym, symbols: vec![symbols; users], subcarriers })
}
