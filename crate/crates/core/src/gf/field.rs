use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest accepted modulus. Products of two residues must fit in `u128`
/// and sums of two residues in `u64`.
pub const MAX_MODULUS: u64 = 1 << 63;

/// The prime field GF(p).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "u64", into = "u64")]
pub struct PrimeField {
    modulus: u64,
}

impl TryFrom<u64> for PrimeField {
    type Error = Error;

    fn try_from(modulus: u64) -> Result<Self> {
        Self::new(modulus)
    }
}

impl From<PrimeField> for u64 {
    fn from(field: PrimeField) -> u64 {
        field.modulus
    }
}

impl PrimeField {
    pub fn new(modulus: u64) -> Result<Self> {
        if modulus >= MAX_MODULUS {
            return Err(Error::ModulusTooLarge(modulus));
        }
        if !is_prime(modulus) {
            return Err(Error::NotPrime(modulus));
        }
        Ok(Self { modulus })
    }

    /// Smallest prime field with at least `min_size` elements.
    pub fn smallest_at_least(min_size: u64) -> Result<Self> {
        let mut candidate = min_size.max(2);
        while candidate < MAX_MODULUS {
            if is_prime(candidate) {
                return Ok(Self { modulus: candidate });
            }
            candidate += 1;
        }
        Err(Error::ModulusTooLarge(min_size))
    }

    #[inline]
    pub fn modulus(&self) -> u64 {
        self.modulus
    }

    #[inline]
    pub fn reduce(&self, x: u64) -> u64 {
        x % self.modulus
    }

    /// Maps a signed integer to its residue.
    pub fn from_i64(&self, x: i64) -> u64 {
        (x as i128).rem_euclid(self.modulus as i128) as u64
    }

    #[inline]
    pub fn add(&self, a: u64, b: u64) -> u64 {
        let s = a + b;
        if s >= self.modulus {
            s - self.modulus
        } else {
            s
        }
    }

    #[inline]
    pub fn sub(&self, a: u64, b: u64) -> u64 {
        if a >= b {
            a - b
        } else {
            a + self.modulus - b
        }
    }

    #[inline]
    pub fn neg(&self, a: u64) -> u64 {
        if a == 0 {
            0
        } else {
            self.modulus - a
        }
    }

    #[inline]
    pub fn mul(&self, a: u64, b: u64) -> u64 {
        ((a as u128 * b as u128) % self.modulus as u128) as u64
    }

    pub fn pow(&self, base: u64, mut exp: u64) -> u64 {
        let mut acc = 1 % self.modulus;
        let mut base = base % self.modulus;
        while exp > 0 {
            if exp & 1 == 1 {
                acc = self.mul(acc, base);
            }
            base = self.mul(base, base);
            exp >>= 1;
        }
        acc
    }

    /// Multiplicative inverse via Fermat's little theorem.
    pub fn inv(&self, a: u64) -> Result<u64> {
        let a = a % self.modulus;
        if a == 0 {
            return Err(Error::ZeroInverse);
        }
        Ok(self.pow(a, self.modulus - 2))
    }

    /// Evaluation points `alpha_i = i - 1` for `i = 1..=n_points`.
    pub fn eval_points(&self, n_points: usize) -> Result<Vec<u64>> {
        if n_points as u128 > self.modulus as u128 {
            return Err(Error::FieldTooSmall {
                needed: n_points,
                modulus: self.modulus,
            });
        }
        Ok((0..n_points as u64).collect())
    }

    /// `base^0, base^1, ..., base^(count-1)`.
    pub fn powers(&self, base: u64, count: usize) -> Vec<u64> {
        let mut out = Vec::with_capacity(count);
        let mut cur = 1 % self.modulus;
        for _ in 0..count {
            out.push(cur);
            cur = self.mul(cur, base);
        }
        out
    }
}

fn mul_mod(a: u64, b: u64, m: u64) -> u64 {
    ((a as u128 * b as u128) % m as u128) as u64
}

fn pow_mod(mut base: u64, mut exp: u64, m: u64) -> u64 {
    let mut acc = 1u64;
    base %= m;
    while exp > 0 {
        if exp & 1 == 1 {
            acc = mul_mod(acc, base, m);
        }
        base = mul_mod(base, base, m);
        exp >>= 1;
    }
    acc
}

/// Deterministic Miller-Rabin, exact for every `u64`.
pub fn is_prime(n: u64) -> bool {
    const WITNESSES: [u64; 12] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37];
    if n < 2 {
        return false;
    }
    for &p in &WITNESSES {
        if n.is_multiple_of(p) {
            return n == p;
        }
    }
    let mut d = n - 1;
    let mut s = 0;
    while d.is_multiple_of(2) {
        d /= 2;
        s += 1;
    }
    'witness: for &a in &WITNESSES {
        let mut x = pow_mod(a, d, n);
        if x == 1 || x == n - 1 {
            continue;
        }
        for _ in 1..s {
            x = mul_mod(x, x, n);
            if x == n - 1 {
                continue 'witness;
            }
        }
        return false;
    }
    true
}

#[cfg(test)]
mod tests {
    use super::*;

    fn trial_division(n: u64) -> bool {
        n >= 2
            && (2..)
                .take_while(|d| d * d <= n)
                .all(|d| !n.is_multiple_of(d))
    }

    #[test]
    fn primality_matches_trial_division() {
        for n in 0..5000 {
            assert_eq!(is_prime(n), trial_division(n), "n = {n}");
        }
        assert!(is_prime(2_147_483_647));
        assert!(is_prime(18_446_744_073_709_551_557));
        assert!(!is_prime(3_215_031_751)); // strong pseudoprime to bases 2, 3, 5, 7
    }

    #[test]
    fn construction_rejects_composites() {
        assert!(matches!(PrimeField::new(9), Err(Error::NotPrime(9))));
        assert!(matches!(PrimeField::new(1), Err(Error::NotPrime(1))));
        assert!(PrimeField::new(101).is_ok());
        assert_eq!(PrimeField::smallest_at_least(8).unwrap().modulus(), 11);
        assert_eq!(PrimeField::smallest_at_least(11).unwrap().modulus(), 11);
    }

    #[test]
    fn gf7_examples() {
        let f = PrimeField::new(7).unwrap();
        assert_eq!(f.inv(3).unwrap(), 5);
        assert_eq!(f.add(4, 5), 2);
        assert_eq!(f.sub(2, 5), 4);
        assert_eq!(f.neg(3), 4);
        assert_eq!(f.pow(3, 6), 1);
        assert_eq!(f.from_i64(-1), 6);
        assert!(matches!(f.inv(0), Err(Error::ZeroInverse)));
        assert!(matches!(f.inv(7), Err(Error::ZeroInverse)));
    }

    #[test]
    fn gf11_inverse_exhaustive() {
        let f = PrimeField::new(11).unwrap();
        for a in 1..11 {
            let inv = f.inv(a).unwrap();
            assert_eq!(f.mul(a, inv), 1);
            // brute-force search agrees
            let brute = (1..11).find(|b| (a * b) % 11 == 1).unwrap();
            assert_eq!(inv, brute);
        }
    }

    #[test]
    fn eval_points_are_distinct_and_bounded() {
        let f11 = PrimeField::new(11).unwrap();
        assert_eq!(f11.eval_points(8).unwrap(), vec![0, 1, 2, 3, 4, 5, 6, 7]);
        assert!(matches!(
            f11.eval_points(12),
            Err(Error::FieldTooSmall {
                needed: 12,
                modulus: 11
            })
        ));
        assert_eq!(f11.eval_points(11).unwrap().len(), 11);

        let f13 = PrimeField::new(13).unwrap();
        let pts = f13.eval_points(8).unwrap();
        let unique: std::collections::BTreeSet<_> = pts.iter().collect();
        assert_eq!(unique.len(), 8);
    }

    #[test]
    fn serde_validates_modulus() {
        let f: PrimeField = serde_json::from_str("101").unwrap();
        assert_eq!(f.modulus(), 101);
        assert!(serde_json::from_str::<PrimeField>("100").is_err());
    }

    #[test]
    fn large_modulus_arithmetic() {
        let p = 9_223_372_036_854_775_783; // largest prime below 2^63
        let f = PrimeField::new(p).unwrap();
        let a = p - 1;
        assert_eq!(f.mul(a, a), 1);
        assert_eq!(f.add(a, a), p - 2);
        assert_eq!(f.mul(f.inv(12345).unwrap(), 12345), 1);
    }
}
