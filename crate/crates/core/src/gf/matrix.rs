use rand::Rng;
use serde::{Deserialize, Serialize};

use super::field::PrimeField;
use crate::error::{Error, Result};

/// Dense row-major matrix over a prime field.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawMatrix", into = "RawMatrix")]
pub struct FieldMatrix {
    field: PrimeField,
    rows: usize,
    cols: usize,
    data: Vec<u64>,
}

#[derive(Serialize, Deserialize)]
struct RawMatrix {
    modulus: PrimeField,
    rows: usize,
    cols: usize,
    data: Vec<u64>,
}

impl TryFrom<RawMatrix> for FieldMatrix {
    type Error = Error;

    fn try_from(raw: RawMatrix) -> Result<Self> {
        FieldMatrix::new(raw.modulus, raw.rows, raw.cols, raw.data)
    }
}

impl From<FieldMatrix> for RawMatrix {
    fn from(m: FieldMatrix) -> Self {
        RawMatrix {
            modulus: m.field,
            rows: m.rows,
            cols: m.cols,
            data: m.data,
        }
    }
}

impl FieldMatrix {
    pub fn new(field: PrimeField, rows: usize, cols: usize, data: Vec<u64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::ShapeMismatch(format!(
                "{} entries for a {rows}x{cols} matrix",
                data.len()
            )));
        }
        if let Some(&bad) = data.iter().find(|&&x| x >= field.modulus()) {
            return Err(Error::Format(format!(
                "entry {bad} is not a residue modulo {}",
                field.modulus()
            )));
        }
        Ok(Self {
            field,
            rows,
            cols,
            data,
        })
    }

    pub fn zeros(field: PrimeField, rows: usize, cols: usize) -> Self {
        Self {
            field,
            rows,
            cols,
            data: vec![0; rows * cols],
        }
    }

    /// Builds a matrix from signed integers, reducing each entry.
    pub fn from_fn(
        field: PrimeField,
        rows: usize,
        cols: usize,
        mut f: impl FnMut(usize, usize) -> i64,
    ) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(field.from_i64(f(r, c)));
            }
        }
        Self {
            field,
            rows,
            cols,
            data,
        }
    }

    pub fn random<R: Rng + ?Sized>(
        field: PrimeField,
        rows: usize,
        cols: usize,
        rng: &mut R,
    ) -> Self {
        let data = (0..rows * cols)
            .map(|_| rng.random_range(0..field.modulus()))
            .collect();
        Self {
            field,
            rows,
            cols,
            data,
        }
    }

    #[inline]
    pub fn field(&self) -> PrimeField {
        self.field
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    #[inline]
    pub fn as_slice(&self) -> &[u64] {
        &self.data
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> u64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, value: u64) {
        self.data[r * self.cols + c] = self.field.reduce(value);
    }

    pub fn is_zero(&self) -> bool {
        self.data.iter().all(|&x| x == 0)
    }

    fn check_same_field(&self, other: &FieldMatrix) -> Result<()> {
        if self.field != other.field {
            return Err(Error::FieldMismatch {
                expected: self.field.modulus(),
                found: other.field.modulus(),
            });
        }
        Ok(())
    }

    fn check_same_shape(&self, other: &FieldMatrix) -> Result<()> {
        self.check_same_field(other)?;
        if self.shape() != other.shape() {
            return Err(Error::ShapeMismatch(format!(
                "{}x{} vs {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        Ok(())
    }

    pub fn add(&self, other: &FieldMatrix) -> Result<FieldMatrix> {
        let mut out = self.clone();
        out.add_scaled_assign(other, 1)?;
        Ok(out)
    }

    /// `self += scalar * other`.
    pub fn add_scaled_assign(&mut self, other: &FieldMatrix, scalar: u64) -> Result<()> {
        self.check_same_shape(other)?;
        let f = self.field;
        let scalar = f.reduce(scalar);
        if scalar == 0 {
            return Ok(());
        }
        for (x, &y) in self.data.iter_mut().zip(&other.data) {
            *x = f.add(*x, f.mul(scalar, y));
        }
        Ok(())
    }

    pub fn scale(&self, scalar: u64) -> FieldMatrix {
        let f = self.field;
        let scalar = f.reduce(scalar);
        FieldMatrix {
            field: f,
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&x| f.mul(scalar, x)).collect(),
        }
    }

    /// Matrix product. Performs exactly `rows * inner * cols` scalar
    /// multiplications.
    pub fn matmul(&self, other: &FieldMatrix) -> Result<FieldMatrix> {
        self.check_same_field(other)?;
        if self.cols != other.rows {
            return Err(Error::ShapeMismatch(format!(
                "cannot multiply {}x{} by {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let p = self.field.modulus() as u128;
        // keep the accumulator below 2^127 so one more product cannot overflow
        const FOLD: u128 = 1 << 126;
        let mut out = Vec::with_capacity(self.rows * other.cols);
        let mut acc = vec![0u128; other.cols];
        for r in 0..self.rows {
            acc.iter_mut().for_each(|a| *a = 0);
            let row = &self.data[r * self.cols..(r + 1) * self.cols];
            for (k, &a) in row.iter().enumerate() {
                if a == 0 {
                    continue;
                }
                let brow = &other.data[k * other.cols..(k + 1) * other.cols];
                for (slot, &b) in acc.iter_mut().zip(brow) {
                    *slot += a as u128 * b as u128;
                    if *slot >= FOLD {
                        *slot %= p;
                    }
                }
            }
            out.extend(acc.iter().map(|&a| (a % p) as u64));
        }
        Ok(FieldMatrix {
            field: self.field,
            rows: self.rows,
            cols: other.cols,
            data: out,
        })
    }

    pub fn submatrix(&self, row0: usize, col0: usize, rows: usize, cols: usize) -> FieldMatrix {
        assert!(row0 + rows <= self.rows && col0 + cols <= self.cols);
        let mut data = Vec::with_capacity(rows * cols);
        for r in row0..row0 + rows {
            data.extend_from_slice(&self.data[r * self.cols + col0..r * self.cols + col0 + cols]);
        }
        FieldMatrix {
            field: self.field,
            rows,
            cols,
            data,
        }
    }

    /// Writes `block` into this matrix with its top-left corner at `(row0, col0)`.
    pub fn paste(&mut self, row0: usize, col0: usize, block: &FieldMatrix) {
        assert!(row0 + block.rows <= self.rows && col0 + block.cols <= self.cols);
        for r in 0..block.rows {
            let dst = (row0 + r) * self.cols + col0;
            self.data[dst..dst + block.cols]
                .copy_from_slice(&block.data[r * block.cols..(r + 1) * block.cols]);
        }
    }

    /// Zero-pads to `rows x cols` (each at least the current size).
    pub fn padded(&self, rows: usize, cols: usize) -> FieldMatrix {
        assert!(rows >= self.rows && cols >= self.cols);
        if rows == self.rows && cols == self.cols {
            return self.clone();
        }
        let mut out = FieldMatrix::zeros(self.field, rows, cols);
        out.paste(0, 0, self);
        out
    }

    pub fn cropped(&self, rows: usize, cols: usize) -> FieldMatrix {
        if rows == self.rows && cols == self.cols {
            return self.clone();
        }
        self.submatrix(0, 0, rows, cols)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn naive_product(a: &FieldMatrix, b: &FieldMatrix) -> FieldMatrix {
        let f = a.field();
        FieldMatrix::from_fn(f, a.rows(), b.cols(), |r, c| {
            let mut s: u128 = 0;
            for k in 0..a.cols() {
                s += a.get(r, k) as u128 * b.get(k, c) as u128;
            }
            (s % f.modulus() as u128) as i64
        })
    }

    #[test]
    fn matmul_matches_naive() {
        let f = PrimeField::new(101).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = FieldMatrix::random(f, 4, 7, &mut rng);
        let b = FieldMatrix::random(f, 7, 3, &mut rng);
        assert_eq!(a.matmul(&b).unwrap(), naive_product(&a, &b));
    }

    #[test]
    fn matmul_large_modulus_does_not_overflow() {
        let f = PrimeField::new(9_223_372_036_854_775_783).unwrap();
        let big = f.modulus() - 1;
        let a = FieldMatrix::new(f, 1, 8, vec![big; 8]).unwrap();
        let b = FieldMatrix::new(f, 8, 1, vec![big; 8]).unwrap();
        // (-1)(-1) * 8
        assert_eq!(a.matmul(&b).unwrap().get(0, 0), 8);
    }

    #[test]
    fn shape_and_field_errors() {
        let f = PrimeField::new(7).unwrap();
        let g = PrimeField::new(11).unwrap();
        let a = FieldMatrix::zeros(f, 2, 3);
        assert!(matches!(a.matmul(&a), Err(Error::ShapeMismatch(_))));
        assert!(matches!(
            a.add(&FieldMatrix::zeros(g, 2, 3)),
            Err(Error::FieldMismatch { .. })
        ));
        assert!(FieldMatrix::new(f, 2, 2, vec![0, 1, 2]).is_err());
        assert!(FieldMatrix::new(f, 1, 1, vec![7]).is_err());
    }

    #[test]
    fn pad_crop_round_trip() {
        let f = PrimeField::new(13).unwrap();
        let m = FieldMatrix::from_fn(f, 3, 2, |r, c| (r * 2 + c) as i64);
        let p = m.padded(4, 5);
        assert_eq!(p.get(3, 4), 0);
        assert_eq!(p.cropped(3, 2), m);
    }

    #[test]
    fn serde_round_trip_checks_entries() {
        let f = PrimeField::new(13).unwrap();
        let m = FieldMatrix::from_fn(f, 2, 2, |r, c| (r + c) as i64);
        let s = serde_json::to_string(&m).unwrap();
        assert_eq!(serde_json::from_str::<FieldMatrix>(&s).unwrap(), m);
        let bad = r#"{"modulus":13,"rows":1,"cols":1,"data":[13]}"#;
        assert!(serde_json::from_str::<FieldMatrix>(bad).is_err());
    }
}
