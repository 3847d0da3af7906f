//! Occupation-number basis of the `N`-particle sector on `M` sites.

use crate::error::{Error, Result};

/// Largest number of basis states a single oracle run may use.
pub const BASIS_GUARD: usize = 200_000;

/// Largest number of sites; masks are stored in a `u32`.
pub const MAX_SITES: usize = 24;

pub fn binomial(n: usize, k: usize) -> usize {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * (n - i) as u128 / (i + 1) as u128;
    }
    acc as usize
}

/// Checks the site and basis-size guards without building anything.
pub fn check_basis_guard(sites: usize, particles: usize) -> Result<usize> {
    if particles == 0 || particles > sites {
        return Err(Error::InvalidParameter(format!("need 1 ≤ N ≤ M, got N = {particles}, M = {sites}")));
    }
    if sites > MAX_SITES {
        return Err(Error::SizeGuard(format!("basis guard: M = {sites} exceeds {MAX_SITES} sites")));
    }
    let count = binomial(sites, particles);
    if count > BASIS_GUARD {
        return Err(Error::SizeGuard(format!(
            "basis guard: C({sites},{particles}) = {count} exceeds {BASIS_GUARD} states"
        )));
    }
    Ok(count)
}

/// Masks with exactly `N` of `M` bits set, in increasing numeric order.
///
/// Bit `r` is site `r`. The ordinal of a mask is its rank in the
/// combinatorial number system, `Σ_i C(r_i, i+1)` over occupied sites
/// `r_0 < r_1 < …`, which coincides with the numeric order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FockBasis {
    sites: usize,
    particles: usize,
    states: Vec<u32>,
    // binom[r][i] = C(r, i)
    binom: Vec<Vec<usize>>,
}

impl FockBasis {
    pub fn new(sites: usize, particles: usize) -> Result<Self> {
        let count = check_basis_guard(sites, particles)?;
        let binom: Vec<Vec<usize>> =
            (0..=sites).map(|r| (0..=particles).map(|i| binomial(r, i)).collect()).collect();
        let mut states = Vec::with_capacity(count);
        // Gosper's hack enumerates same-popcount masks in increasing order
        let mut mask: u64 = (1u64 << particles) - 1;
        let limit = 1u64 << sites;
        while mask < limit {
            states.push(mask as u32);
            let c = mask & mask.wrapping_neg();
            let r = mask + c;
            mask = (((r ^ mask) >> 2) / c) | r;
        }
        debug_assert_eq!(states.len(), count);
        Ok(Self { sites, particles, states, binom })
    }

    pub fn sites(&self) -> usize {
        self.sites
    }

    pub fn particles(&self) -> usize {
        self.particles
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn states(&self) -> &[u32] {
        &self.states
    }

    pub fn mask(&self, index: usize) -> u32 {
        self.states[index]
    }

    /// Ordinal of a mask with `N` bits set.
    pub fn index_of(&self, mask: u32) -> usize {
        let mut rest = mask;
        let mut rank = 0;
        let mut i = 1;
        while rest != 0 {
            let r = rest.trailing_zeros() as usize;
            rank += self.binom[r][i];
            rest &= rest - 1;
            i += 1;
        }
        rank
    }

    /// Sites occupied in `mask`, ascending.
    pub fn occupied(mask: u32) -> impl Iterator<Item = usize> {
        let mut rest = mask;
        std::iter::from_fn(move || {
            if rest == 0 {
                None
            } else {
                let r = rest.trailing_zeros() as usize;
                rest &= rest - 1;
                Some(r)
            }
        })
    }
}

/// `(-1)^{#occupied sites below r}`, the sign of `a_r` or `a_r†` on `mask`.
pub fn sign_below(mask: u32, r: usize) -> f64 {
    let below = mask & ((1u32 << r) - 1);
    if below.count_ones() % 2 == 0 {
        1.0
    } else {
        -1.0
    }
}

/// Sign and target of `a_r† a_s |mask⟩` for `s` occupied and `r` empty (or
/// `r = s`); `None` when the result vanishes.
pub fn hop(mask: u32, r: usize, s: usize) -> Option<(u32, f64)> {
    if mask & (1 << s) == 0 {
        return None;
    }
    let removed = mask & !(1 << s);
    if removed & (1 << r) != 0 {
        return None;
    }
    let sign = sign_below(mask, s) * sign_below(removed, r);
    Some((removed | (1 << r), sign))
}
