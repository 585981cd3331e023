use std::collections::HashSet;

use super::field::PrimeField;
use super::matrix::FieldMatrix;
use crate::error::{Error, Result};

/// Polynomial whose coefficients are matrices of a common shape.
/// `coefficients[k]` multiplies `x^k`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MatrixPoly {
    coefficients: Vec<FieldMatrix>,
}

impl MatrixPoly {
    pub fn new(coefficients: Vec<FieldMatrix>) -> Result<Self> {
        let Some(first) = coefficients.first() else {
            return Err(Error::InvalidArgument(
                "a matrix polynomial needs at least one coefficient".into(),
            ));
        };
        let (field, shape) = (first.field(), first.shape());
        for c in &coefficients[1..] {
            if c.field() != field {
                return Err(Error::FieldMismatch {
                    expected: field.modulus(),
                    found: c.field().modulus(),
                });
            }
            if c.shape() != shape {
                return Err(Error::ShapeMismatch(
                    "coefficients must share one shape".into(),
                ));
            }
        }
        Ok(Self { coefficients })
    }

    pub fn coefficients(&self) -> &[FieldMatrix] {
        &self.coefficients
    }

    pub fn into_coefficients(self) -> Vec<FieldMatrix> {
        self.coefficients
    }

    pub fn field(&self) -> PrimeField {
        self.coefficients[0].field()
    }

    pub fn shape(&self) -> (usize, usize) {
        self.coefficients[0].shape()
    }

    /// Highest exponent with a nonzero coefficient; `None` for the zero polynomial.
    pub fn degree(&self) -> Option<usize> {
        self.coefficients.iter().rposition(|c| !c.is_zero())
    }

    /// Horner evaluation.
    pub fn eval(&self, point: u64) -> FieldMatrix {
        let field = self.field();
        let point = field.reduce(point);
        let mut acc = self.coefficients.last().unwrap().clone();
        for coeff in self.coefficients.iter().rev().skip(1) {
            acc = acc.scale(point);
            acc.add_scaled_assign(coeff, 1)
                .expect("shapes checked at construction");
        }
        acc
    }
}

/// Coefficient vectors of the Lagrange basis polynomials for `points`:
/// `basis[i][k]` is the coefficient of `x^k` in `L_i`.
pub fn lagrange_basis(field: PrimeField, points: &[u64]) -> Result<Vec<Vec<u64>>> {
    let n = points.len();
    let mut seen = HashSet::with_capacity(n);
    for &x in points {
        if !seen.insert(field.reduce(x)) {
            return Err(Error::DuplicatePoint(x));
        }
    }
    // master(x) = prod_j (x - x_j), stored low degree first, length n + 1
    let mut master = vec![0u64; n + 1];
    master[0] = 1 % field.modulus();
    for (deg, &x) in points.iter().enumerate() {
        let neg = field.neg(field.reduce(x));
        for k in (0..=deg + 1).rev() {
            let shifted = if k > 0 { master[k - 1] } else { 0 };
            master[k] = field.add(shifted, field.mul(master[k], neg));
        }
    }
    let mut basis = Vec::with_capacity(n);
    for (i, &xi) in points.iter().enumerate() {
        let xi = field.reduce(xi);
        // synthetic division master / (x - xi)
        let mut quotient = vec![0u64; n];
        let mut carry = 0u64;
        for k in (1..=n).rev() {
            carry = field.add(master[k], field.mul(carry, xi));
            quotient[k - 1] = carry;
        }
        let mut denom = 1 % field.modulus();
        for (j, &xj) in points.iter().enumerate() {
            if j != i {
                denom = field.mul(denom, field.sub(xi, field.reduce(xj)));
            }
        }
        let scale = field.inv(denom)?;
        basis.push(quotient.into_iter().map(|q| field.mul(q, scale)).collect());
    }
    Ok(basis)
}

/// Recovers the unique polynomial of degree `< degree_bound` through the
/// samples. The first `degree_bound` samples determine the polynomial; any
/// further samples must agree with it, otherwise `Error::Inconsistent`.
pub fn interpolate(samples: &[(u64, FieldMatrix)], degree_bound: usize) -> Result<MatrixPoly> {
    if degree_bound == 0 {
        return Err(Error::InvalidArgument(
            "degree bound must be positive".into(),
        ));
    }
    if samples.len() < degree_bound {
        return Err(Error::NotEnoughSamples {
            have: samples.len(),
            need: degree_bound,
        });
    }
    let field = samples[0].1.field();
    let shape = samples[0].1.shape();
    let mut seen = HashSet::with_capacity(samples.len());
    for (x, value) in samples {
        if value.field() != field {
            return Err(Error::FieldMismatch {
                expected: field.modulus(),
                found: value.field().modulus(),
            });
        }
        if value.shape() != shape {
            return Err(Error::ShapeMismatch(
                "all samples must share one shape".into(),
            ));
        }
        if !seen.insert(field.reduce(*x)) {
            return Err(Error::DuplicatePoint(*x));
        }
    }

    let (used, extra) = samples.split_at(degree_bound);
    let points: Vec<u64> = used.iter().map(|(x, _)| *x).collect();
    let basis = lagrange_basis(field, &points)?;
    let mut coefficients = vec![FieldMatrix::zeros(field, shape.0, shape.1); degree_bound];
    for ((_, value), weights) in used.iter().zip(&basis) {
        for (coeff, &w) in coefficients.iter_mut().zip(weights) {
            coeff.add_scaled_assign(value, w)?;
        }
    }
    let poly = MatrixPoly::new(coefficients)?;
    for (x, value) in extra {
        if poly.eval(*x) != *value {
            return Err(Error::Inconsistent { degree_bound });
        }
    }
    Ok(poly)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn gf(p: u64) -> PrimeField {
        PrimeField::new(p).unwrap()
    }

    fn random_poly(field: PrimeField, terms: usize, rng: &mut ChaCha8Rng) -> MatrixPoly {
        MatrixPoly::new(
            (0..terms)
                .map(|_| FieldMatrix::random(field, 2, 3, rng))
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn single_sample_is_constant() {
        let f = gf(101);
        let v = FieldMatrix::from_fn(f, 2, 2, |r, c| (3 * r + c) as i64);
        let p = interpolate(&[(5, v.clone())], 1).unwrap();
        assert_eq!(p.coefficients(), std::slice::from_ref(&v));
        assert_eq!(p.eval(77), v);
    }

    #[test]
    fn linear_recovery() {
        let f = gf(101);
        let c0 = FieldMatrix::from_fn(f, 1, 2, |_, c| c as i64 + 4);
        let c1 = FieldMatrix::from_fn(f, 1, 2, |_, c| 10 - c as i64);
        let poly = MatrixPoly::new(vec![c0.clone(), c1.clone()]).unwrap();
        let samples = vec![(3, poly.eval(3)), (9, poly.eval(9))];
        let got = interpolate(&samples, 2).unwrap();
        assert_eq!(got.coefficients(), &[c0, c1]);
    }

    #[test]
    fn horner_edge_cases() {
        let f = gf(13);
        let c = FieldMatrix::from_fn(f, 2, 2, |r, c| (r + 2 * c + 1) as i64);
        let constant = MatrixPoly::new(vec![c.clone()]).unwrap();
        assert_eq!(constant.eval(0), c);
        assert_eq!(constant.eval(12), c);
        let linear = MatrixPoly::new(vec![FieldMatrix::zeros(f, 2, 2), c.clone()]).unwrap();
        assert!(linear.eval(0).is_zero());
        assert_eq!(linear.degree(), Some(1));
        assert_eq!(linear.eval(2), c.scale(2));
    }

    #[test]
    fn degree_four_round_trip_gf101() {
        let f = gf(101);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let poly = random_poly(f, 5, &mut rng);
        let samples: Vec<_> = [0u64, 17, 33, 58, 99]
            .iter()
            .map(|&x| (x, poly.eval(x)))
            .collect();
        let got = interpolate(&samples, 5).unwrap();
        assert_eq!(got, poly);
        for (x, v) in &samples {
            assert_eq!(&got.eval(*x), v);
        }
    }

    #[test]
    fn error_paths() {
        let f = gf(13);
        let v = FieldMatrix::zeros(f, 1, 1);
        assert!(matches!(
            interpolate(&[(1, v.clone()), (1, v.clone())], 2),
            Err(Error::DuplicatePoint(1))
        ));
        assert!(matches!(
            interpolate(&[(1, v.clone())], 2),
            Err(Error::NotEnoughSamples { have: 1, need: 2 })
        ));
        // three samples of a line, one corrupted
        let one = FieldMatrix::new(f, 1, 1, vec![1]).unwrap();
        let samples = vec![(0, v.clone()), (1, v.clone()), (2, one)];
        assert!(matches!(
            interpolate(&samples, 2),
            Err(Error::Inconsistent { degree_bound: 2 })
        ));
    }

    #[test]
    fn basis_is_kronecker_at_nodes() {
        let f = gf(31);
        let pts = [2u64, 5, 11, 30];
        let basis = lagrange_basis(f, &pts).unwrap();
        for (i, b) in basis.iter().enumerate() {
            for (j, &x) in pts.iter().enumerate() {
                let val = b.iter().rev().fold(0, |acc, &c| f.add(f.mul(acc, x), c));
                assert_eq!(val, (i == j) as u64);
            }
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn evaluate_then_interpolate_is_identity(
            seed in any::<u64>(),
            terms in 1usize..8,
            extra in 0usize..4,
        ) {
            let f = gf(101);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let poly = random_poly(f, terms, &mut rng);
            let mut pts: Vec<u64> = (0..101).collect();
            use rand::seq::SliceRandom;
            pts.shuffle(&mut rng);
            let samples: Vec<_> = pts[..terms + extra].iter().map(|&x| (x, poly.eval(x))).collect();
            let got = interpolate(&samples, terms).unwrap();
            prop_assert_eq!(got, poly);
        }
    }
}
