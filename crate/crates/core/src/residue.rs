//! Residue number system position code.
//!
//! A position `x` is held as its remainders modulo pairwise-coprime ring sizes.
//! Decoding returns the representative in the centred window
//! `[-floor((C-1)/2), floor(C/2)]` where `C` is the product of the moduli, so a
//! walker that drifts past either edge reappears on the other side.

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ResidueError {
    #[error("modulus {0} is smaller than 2")]
    ModulusTooSmall(u64),
    #[error("moduli {0} and {1} are not coprime")]
    NotCoprime(u64, u64),
    #[error("expected {expected} values, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("residue {residue} out of range for modulus {modulus}")]
    ResidueOutOfRange { residue: u64, modulus: u64 },
    #[error("product of moduli overflows")]
    Overflow,
}

fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

/// Product of the moduli. Fails on any modulus below 2 or any non-coprime pair.
pub fn capacity(moduli: &[u64]) -> Result<u64, ResidueError> {
    for (i, &a) in moduli.iter().enumerate() {
        if a < 2 {
            return Err(ResidueError::ModulusTooSmall(a));
        }
        for &b in &moduli[i + 1..] {
            if gcd(a, b) != 1 {
                return Err(ResidueError::NotCoprime(a, b));
            }
        }
    }
    moduli
        .iter()
        .try_fold(1u64, |acc, &m| acc.checked_mul(m))
        .filter(|&c| c <= i64::MAX as u64)
        .ok_or(ResidueError::Overflow)
}

/// Half-width of the decode window below zero.
fn lower_half(capacity: u64) -> i64 {
    ((capacity - 1) / 2) as i64
}

/// Maps any integer onto the centred decode window, i.e. what a code of this
/// capacity reports for true position `x`.
pub fn signed_wrap(x: i64, capacity: u64) -> i64 {
    let c = capacity as i128;
    let h = lower_half(capacity) as i128;
    ((x as i128 + h).rem_euclid(c) - h) as i64
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct ResidueCode {
    moduli: Vec<u64>,
    residues: Vec<u64>,
}

impl ResidueCode {
    pub fn new(moduli: Vec<u64>, residues: Vec<u64>) -> Result<Self, ResidueError> {
        capacity(&moduli)?;
        if moduli.len() != residues.len() {
            return Err(ResidueError::LengthMismatch {
                expected: moduli.len(),
                got: residues.len(),
            });
        }
        for (&residue, &modulus) in residues.iter().zip(&moduli) {
            if residue >= modulus {
                return Err(ResidueError::ResidueOutOfRange { residue, modulus });
            }
        }
        Ok(Self { moduli, residues })
    }

    pub fn moduli(&self) -> &[u64] {
        &self.moduli
    }

    pub fn residues(&self) -> &[u64] {
        &self.residues
    }

    pub fn capacity(&self) -> u64 {
        self.moduli.iter().product()
    }

    /// Adds `delta` to every component.
    pub fn shifted(&self, delta: i64) -> Self {
        let residues = self
            .residues
            .iter()
            .zip(&self.moduli)
            .map(|(&r, &m)| (r as i128 + delta as i128).rem_euclid(m as i128) as u64)
            .collect();
        Self {
            moduli: self.moduli.clone(),
            residues,
        }
    }
}

pub fn encode(x: i64, moduli: &[u64]) -> Result<ResidueCode, ResidueError> {
    capacity(moduli)?;
    let residues = moduli
        .iter()
        .map(|&m| (x as i128).rem_euclid(m as i128) as u64)
        .collect();
    Ok(ResidueCode {
        moduli: moduli.to_vec(),
        residues,
    })
}

/// Per-ring offset `(c_i - r_i) mod C_i` between a walker's ring states and the
/// reference ring states.
pub fn offset(walker: &[u64], reference: &[u64], moduli: &[u64]) -> Result<ResidueCode, ResidueError> {
    for len in [walker.len(), reference.len()] {
        if len != moduli.len() {
            return Err(ResidueError::LengthMismatch {
                expected: moduli.len(),
                got: len,
            });
        }
    }
    let residues = walker
        .iter()
        .zip(reference)
        .zip(moduli)
        .map(|((&c, &r), &m)| {
            if c >= m || r >= m {
                Err(ResidueError::ResidueOutOfRange {
                    residue: c.max(r),
                    modulus: m,
                })
            } else {
                Ok((c + m - r) % m)
            }
        })
        .collect::<Result<Vec<_>, _>>()?;
    ResidueCode::new(moduli.to_vec(), residues)
}

/// Extended Euclid: inverse of `a` modulo `m` (coprimality already checked).
fn mod_inverse(a: i128, m: i128) -> i128 {
    let (mut old_r, mut r) = (a.rem_euclid(m), m);
    let (mut old_s, mut s) = (1i128, 0i128);
    while r != 0 {
        let q = old_r / r;
        (old_r, r) = (r, old_r - q * r);
        (old_s, s) = (s, old_s - q * s);
    }
    old_s.rem_euclid(m)
}

/// Chinese-remainder reconstruction into the centred window.
pub fn decode(code: &ResidueCode) -> Result<i64, ResidueError> {
    let cap = capacity(&code.moduli)?;
    // Garner-style incremental reconstruction: x ≡ r_i mod prod(moduli[..=i]).
    let mut x: i128 = 0;
    let mut prod: i128 = 1;
    for (&r, &m) in code.residues.iter().zip(&code.moduli) {
        if r >= m {
            return Err(ResidueError::ResidueOutOfRange { residue: r, modulus: m });
        }
        let m = m as i128;
        let k = ((r as i128 - x).rem_euclid(m) * mod_inverse(prod, m)).rem_euclid(m);
        x += k * prod;
        prod *= m;
    }
    Ok(signed_wrap(x as i64, cap))
}
