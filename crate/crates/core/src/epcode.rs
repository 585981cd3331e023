//! Single-layer Entangled Polynomial code.
//!
//! `A` is split into an `m x p` grid and `B` into a `p x n` grid. The coded
//! matrices are
//!
//! ```text
//! f(x) = sum_{u<m, v<p} A(u,v) x^(v + p*u)
//! g(x) = sum_{u<p, v<n} B(u,v) x^(p-1-u + p*m*v)
//! ```
//!
//! (zero-based block indices). Block `(u, v)` of `A*B` is the coefficient of
//! `x^(p-1 + p*u + p*m*v)` in `f(x) g(x)`, a polynomial of degree
//! `p*m*n + p - 2`, so any `p*m*n + p - 1` evaluations determine it.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gf::{interpolate, FieldMatrix, PrimeField};

/// Split parameters of one EP code.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "[usize; 3]", into = "[usize; 3]")]
pub struct PartitionParams {
    /// Split of the shared dimension.
    pub p: usize,
    /// Row split of `A`.
    pub m: usize,
    /// Column split of `B`.
    pub n: usize,
}

impl TryFrom<[usize; 3]> for PartitionParams {
    type Error = Error;

    fn try_from([p, m, n]: [usize; 3]) -> Result<Self> {
        Self::new(p, m, n)
    }
}

impl From<PartitionParams> for [usize; 3] {
    fn from(params: PartitionParams) -> Self {
        [params.p, params.m, params.n]
    }
}

impl std::fmt::Display for PartitionParams {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "(p={}, m={}, n={})", self.p, self.m, self.n)
    }
}

impl PartitionParams {
    pub fn new(p: usize, m: usize, n: usize) -> Result<Self> {
        if p == 0 || m == 0 || n == 0 {
            return Err(Error::InvalidPartition(format!(
                "p, m, n must be >= 1, got ({p}, {m}, {n})"
            )));
        }
        Ok(Self { p, m, n })
    }

    /// `p*m*n + p - 1`.
    pub fn recovery_threshold(&self) -> usize {
        self.p * self.m * self.n + self.p - 1
    }

    /// Exponent carrying block `(u, v)` (zero-based) of the product.
    pub fn product_exponent(&self, u: usize, v: usize) -> usize {
        self.p - 1 + self.p * u + self.p * self.m * v
    }

    /// Every partition with the given recovery threshold, ordered by `(p, m, n)`.
    pub fn with_threshold(threshold: usize) -> Vec<PartitionParams> {
        let mut out = Vec::new();
        for p in 1..=threshold + 1 {
            if !(threshold + 1).is_multiple_of(p) {
                continue;
            }
            let mn = (threshold + 1) / p - 1;
            if mn == 0 {
                continue;
            }
            for m in 1..=mn {
                if mn.is_multiple_of(m) {
                    out.push(PartitionParams { p, m, n: mn / m });
                }
            }
        }
        out
    }
}

/// A matrix cut into equally sized blocks, row-major.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BlockGrid {
    block_rows: usize,
    block_cols: usize,
    source_shape: (usize, usize),
    blocks: Vec<FieldMatrix>,
}

impl BlockGrid {
    pub fn grid_shape(&self) -> (usize, usize) {
        (self.block_rows, self.block_cols)
    }

    /// Shape of the matrix before padding.
    pub fn source_shape(&self) -> (usize, usize) {
        self.source_shape
    }

    pub fn block_shape(&self) -> (usize, usize) {
        self.blocks[0].shape()
    }

    pub fn block(&self, u: usize, v: usize) -> &FieldMatrix {
        &self.blocks[u * self.block_cols + v]
    }

    pub fn field(&self) -> PrimeField {
        self.blocks[0].field()
    }

    /// Reassembles the padded matrix.
    pub fn assemble_padded(&self) -> FieldMatrix {
        let (br, bc) = self.block_shape();
        let mut out = FieldMatrix::zeros(self.field(), br * self.block_rows, bc * self.block_cols);
        for u in 0..self.block_rows {
            for v in 0..self.block_cols {
                out.paste(u * br, v * bc, self.block(u, v));
            }
        }
        out
    }

    /// Reassembles and crops to the original shape.
    pub fn assemble(&self) -> FieldMatrix {
        self.assemble_padded()
            .cropped(self.source_shape.0, self.source_shape.1)
    }
}

/// Zero-pads `matrix` so its dimensions divide evenly, then cuts it into a
/// `block_rows x block_cols` grid.
pub fn partition(matrix: &FieldMatrix, block_rows: usize, block_cols: usize) -> Result<BlockGrid> {
    if block_rows == 0 || block_cols == 0 {
        return Err(Error::ZeroBlocks);
    }
    let br = matrix.rows().div_ceil(block_rows);
    let bc = matrix.cols().div_ceil(block_cols);
    let padded = matrix.padded(br * block_rows, bc * block_cols);
    let mut blocks = Vec::with_capacity(block_rows * block_cols);
    for u in 0..block_rows {
        for v in 0..block_cols {
            blocks.push(padded.submatrix(u * br, v * bc, br, bc));
        }
    }
    Ok(BlockGrid {
        block_rows,
        block_cols,
        source_shape: matrix.shape(),
        blocks,
    })
}

fn weighted_sum<'a>(
    field: PrimeField,
    shape: (usize, usize),
    terms: impl Iterator<Item = (&'a FieldMatrix, u64)>,
) -> FieldMatrix {
    let mut acc = FieldMatrix::zeros(field, shape.0, shape.1);
    for (block, weight) in terms {
        acc.add_scaled_assign(block, weight)
            .expect("blocks of one grid share a shape");
    }
    acc
}

/// Evaluates the `A`-side encoding polynomial at `point`.
pub fn encode_a(grid: &BlockGrid, params: PartitionParams, point: u64) -> Result<FieldMatrix> {
    if grid.grid_shape() != (params.m, params.p) {
        return Err(Error::ShapeMismatch(format!(
            "A grid is {:?}, expected (m, p) = ({}, {})",
            grid.grid_shape(),
            params.m,
            params.p
        )));
    }
    let field = grid.field();
    let pw = field.powers(point, params.p * params.m);
    let terms = (0..params.m).flat_map(|u| (0..params.p).map(move |v| (u, v)));
    Ok(weighted_sum(
        field,
        grid.block_shape(),
        terms.map(|(u, v)| (grid.block(u, v), pw[v + params.p * u])),
    ))
}

/// Evaluates the `B`-side encoding polynomial at `point`.
pub fn encode_b(grid: &BlockGrid, params: PartitionParams, point: u64) -> Result<FieldMatrix> {
    if grid.grid_shape() != (params.p, params.n) {
        return Err(Error::ShapeMismatch(format!(
            "B grid is {:?}, expected (p, n) = ({}, {})",
            grid.grid_shape(),
            params.p,
            params.n
        )));
    }
    let field = grid.field();
    let pw = field.powers(point, params.p * params.m * params.n);
    let terms = (0..params.p).flat_map(|u| (0..params.n).map(move |v| (u, v)));
    Ok(weighted_sum(
        field,
        grid.block_shape(),
        terms.map(|(u, v)| {
            (
                grid.block(u, v),
                pw[params.p - 1 - u + params.p * params.m * v],
            )
        }),
    ))
}

/// Recovers `A*B` from evaluations `f(x_i) g(x_i)` at distinct points.
///
/// Uses every sample: the first `R` fix the product polynomial, the rest
/// are checked against it. The result is cropped to `out_shape`.
pub fn ep_decode(
    samples: &[(u64, FieldMatrix)],
    params: PartitionParams,
    out_shape: (usize, usize),
) -> Result<FieldMatrix> {
    let threshold = params.recovery_threshold();
    let poly = interpolate(samples, threshold)?;
    let coeffs = poly.coefficients();
    let (br, bc) = poly.shape();
    if out_shape.0 > br * params.m || out_shape.1 > bc * params.n {
        return Err(Error::ShapeMismatch(format!(
            "requested {out_shape:?} exceeds the decoded {}x{}",
            br * params.m,
            bc * params.n
        )));
    }
    let mut out = FieldMatrix::zeros(poly.field(), br * params.m, bc * params.n);
    for u in 0..params.m {
        for v in 0..params.n {
            out.paste(u * br, v * bc, &coeffs[params.product_exponent(u, v)]);
        }
    }
    Ok(out.cropped(out_shape.0, out_shape.1))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::seq::SliceRandom;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn gf101() -> PrimeField {
        PrimeField::new(101).unwrap()
    }

    fn pp(p: usize, m: usize, n: usize) -> PartitionParams {
        PartitionParams::new(p, m, n).unwrap()
    }

    fn evaluations(
        a: &FieldMatrix,
        b: &FieldMatrix,
        params: PartitionParams,
        points: &[u64],
    ) -> Vec<(u64, FieldMatrix)> {
        let ga = partition(a, params.m, params.p).unwrap();
        let gb = partition(b, params.p, params.n).unwrap();
        points
            .iter()
            .map(|&x| {
                let fa = encode_a(&ga, params, x).unwrap();
                let gbx = encode_b(&gb, params, x).unwrap();
                (x, fa.matmul(&gbx).unwrap())
            })
            .collect()
    }

    #[test]
    fn partition_round_trips() {
        let f = gf101();
        let m = FieldMatrix::from_fn(f, 4, 4, |r, c| (4 * r + c) as i64);
        let g = partition(&m, 2, 2).unwrap();
        assert_eq!(g.block_shape(), (2, 2));
        assert_eq!(g.block(1, 0), &m.submatrix(2, 0, 2, 2));
        assert_eq!(g.assemble(), m);

        let single = partition(&m, 1, 1).unwrap();
        assert_eq!(single.block(0, 0), &m);

        let odd = FieldMatrix::from_fn(f, 5, 4, |r, c| (r * 7 + c + 1) as i64);
        let g = partition(&odd, 2, 2).unwrap();
        assert_eq!(g.block_shape(), (3, 2));
        assert_eq!(g.assemble_padded().shape(), (6, 4));
        assert_eq!(g.assemble(), odd);

        assert!(matches!(partition(&m, 0, 2), Err(Error::ZeroBlocks)));
    }

    #[test]
    fn encoding_matches_worked_example() {
        // p = 2, m = n = 1: f = A1 + x A2, g = x B1 + B2
        let f = gf101();
        let a = FieldMatrix::from_fn(f, 2, 4, |r, c| (r * 4 + c + 1) as i64);
        let b = FieldMatrix::from_fn(f, 4, 2, |r, c| (r * 2 + c + 11) as i64);
        let params = pp(2, 1, 1);
        let x = 6;
        let ga = partition(&a, 1, 2).unwrap();
        let gb = partition(&b, 2, 1).unwrap();
        let expect_a = ga.block(0, 0).add(&ga.block(0, 1).scale(x)).unwrap();
        let expect_b = gb.block(0, 0).scale(x).add(gb.block(1, 0)).unwrap();
        assert_eq!(encode_a(&ga, params, x).unwrap(), expect_a);
        assert_eq!(encode_b(&gb, params, x).unwrap(), expect_b);

        // p = 3: f = A1 + x A2 + x^2 A3, g = x^2 B1 + x B2 + B3
        let a = FieldMatrix::from_fn(f, 2, 3, |r, c| (r * 3 + c + 2) as i64);
        let b = FieldMatrix::from_fn(f, 3, 2, |r, c| (r * 5 + c + 3) as i64);
        let params = pp(3, 1, 1);
        let ga = partition(&a, 1, 3).unwrap();
        let gb = partition(&b, 3, 1).unwrap();
        let x2 = f.mul(x, x);
        let expect_a = ga
            .block(0, 0)
            .add(&ga.block(0, 1).scale(x))
            .unwrap()
            .add(&ga.block(0, 2).scale(x2))
            .unwrap();
        let expect_b = gb
            .block(0, 0)
            .scale(x2)
            .add(&gb.block(1, 0).scale(x))
            .unwrap()
            .add(gb.block(2, 0))
            .unwrap();
        assert_eq!(encode_a(&ga, params, x).unwrap(), expect_a);
        assert_eq!(encode_b(&gb, params, x).unwrap(), expect_b);
    }

    #[test]
    fn trivial_partition_is_identity() {
        let f = gf101();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = FieldMatrix::random(f, 3, 2, &mut rng);
        let b = FieldMatrix::random(f, 2, 4, &mut rng);
        let params = pp(1, 1, 1);
        for x in [0, 1, 50] {
            assert_eq!(
                encode_a(&partition(&a, 1, 1).unwrap(), params, x).unwrap(),
                a
            );
            assert_eq!(
                encode_b(&partition(&b, 1, 1).unwrap(), params, x).unwrap(),
                b
            );
        }
        let one = evaluations(&a, &b, params, &[9]);
        assert_eq!(
            ep_decode(&one, params, (3, 4)).unwrap(),
            a.matmul(&b).unwrap()
        );
    }

    #[test]
    fn product_polynomial_middle_coefficient() {
        // (A1 + x A2)(x B1 + B2) = A1B2 + x(A1B1 + A2B2) + x^2 A2B1
        let f = gf101();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let a = FieldMatrix::random(f, 2, 4, &mut rng);
        let b = FieldMatrix::random(f, 4, 3, &mut rng);
        let params = pp(2, 1, 1);
        assert_eq!(params.product_exponent(0, 0), 1);
        let samples = evaluations(&a, &b, params, &[2, 5, 9]);
        let poly = interpolate(&samples, 3).unwrap();
        let ga = partition(&a, 1, 2).unwrap();
        let gb = partition(&b, 2, 1).unwrap();
        let a1b2 = ga.block(0, 0).matmul(gb.block(1, 0)).unwrap();
        let a2b1 = ga.block(0, 1).matmul(gb.block(0, 0)).unwrap();
        assert_eq!(poly.coefficients()[0], a1b2);
        assert_eq!(poly.coefficients()[1], a.matmul(&b).unwrap());
        assert_eq!(poly.coefficients()[2], a2b1);
    }

    #[test]
    fn decode_from_every_threshold_subset() {
        let f = gf101();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let a = FieldMatrix::random(f, 4, 6, &mut rng);
        let b = FieldMatrix::random(f, 6, 4, &mut rng);
        let direct = a.matmul(&b).unwrap();
        let params = pp(2, 2, 1);
        assert_eq!(params.recovery_threshold(), 5);
        let all = evaluations(&a, &b, params, &[0, 1, 2, 3, 4, 5, 6]);
        let mut subsets = 0;
        for mask in 0u32..(1 << 7) {
            if mask.count_ones() != 5 {
                continue;
            }
            let chosen: Vec<_> = (0..7)
                .filter(|i| mask >> i & 1 == 1)
                .map(|i| all[i].clone())
                .collect();
            assert_eq!(ep_decode(&chosen, params, (4, 4)).unwrap(), direct);
            subsets += 1;
        }
        assert_eq!(subsets, 21);
        assert!(matches!(
            ep_decode(&all[..4], params, (4, 4)),
            Err(Error::NotEnoughSamples { have: 4, need: 5 })
        ));
        let dup = vec![
            all[0].clone(),
            all[0].clone(),
            all[1].clone(),
            all[2].clone(),
            all[3].clone(),
        ];
        assert!(matches!(
            ep_decode(&dup, params, (4, 4)),
            Err(Error::DuplicatePoint(0))
        ));
    }

    #[test]
    fn exponents_are_collision_free() {
        for p in 1..=6 {
            for m in 1..=6 {
                for n in 1..=6 {
                    let params = pp(p, m, n);
                    let mut seen = std::collections::HashSet::new();
                    for u in 0..m {
                        for v in 0..n {
                            let e = params.product_exponent(u, v);
                            assert!(e <= p * m * n + p - 2);
                            assert!(seen.insert(e));
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn threshold_enumeration() {
        let all = PartitionParams::with_threshold(11);
        assert!(all.contains(&pp(2, 1, 5)));
        assert!(all.contains(&pp(6, 1, 1)));
        assert!(all.iter().all(|t| t.recovery_threshold() == 11));
        // brute force count
        let mut brute = 0;
        for p in 1..=12 {
            for m in 1..=12 {
                for n in 1..=12 {
                    if p * m * n + p - 1 == 11 {
                        brute += 1;
                    }
                }
            }
        }
        assert_eq!(all.len(), brute);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]
        #[test]
        fn padded_decode_equals_direct_product(
            seed in any::<u64>(),
            p in 1usize..4, m in 1usize..4, n in 1usize..4,
            rows in 1usize..7, inner in 1usize..7, cols in 1usize..7,
        ) {
            let f = gf101();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let a = FieldMatrix::random(f, rows, inner, &mut rng);
            let b = FieldMatrix::random(f, inner, cols, &mut rng);
            let params = pp(p, m, n);
            let r = params.recovery_threshold();
            let mut pts: Vec<u64> = (0..101).collect();
            pts.shuffle(&mut rng);
            let samples = evaluations(&a, &b, params, &pts[..r + 1]);
            let direct = a.matmul(&b).unwrap();
            prop_assert_eq!(ep_decode(&samples[..r], params, (rows, cols)).unwrap(), direct.clone());
            prop_assert_eq!(ep_decode(&samples, params, (rows, cols)).unwrap(), direct);
            prop_assert!(ep_decode(&samples[..r - 1], params, (rows, cols)).is_err() || r == 1);
        }
    }
}
