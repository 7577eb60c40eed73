//! Empirical-CDF rank transform of an estimated selection index.
//!
//! Each observation's index `Z_i'γ` is replaced by the share of the sample
//! whose index does not exceed it. Ties share the highest rank, so the
//! maximum always maps to one.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Ranks in `{1/n, ..., 1}`, one per observation.
#[derive(Debug, Clone, PartialEq)]
pub struct IndexRanks {
    values: Vec<f64>,
}

impl IndexRanks {
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.values
    }
}

fn check_inputs(z: &DMatrix<f64>, gamma: &[f64]) -> Result<()> {
    if z.nrows() < 2 {
        return Err(Error::InsufficientSample(format!("n = {}, need at least 2", z.nrows())));
    }
    if gamma.len() != z.ncols() {
        return Err(Error::DimensionMismatch(format!(
            "gamma has {} entries, z has {} columns",
            gamma.len(),
            z.ncols()
        )));
    }
    if gamma.iter().any(|g| !g.is_finite()) {
        return Err(Error::InvalidArgument("gamma is not finite".into()));
    }
    if gamma.iter().all(|&g| g == 0.0) {
        return Err(Error::DegenerateIndex);
    }
    Ok(())
}

fn linear_index(z: &DMatrix<f64>, gamma: &[f64]) -> Vec<f64> {
    (0..z.nrows())
        .map(|i| gamma.iter().enumerate().map(|(j, g)| z[(i, j)] * g).sum())
        .collect()
}

/// Ranks of `Z γ`.
pub fn eta_hat(z: &DMatrix<f64>, gamma: &[f64]) -> Result<IndexRanks> {
    check_inputs(z, gamma)?;
    Ok(ranks_of(&linear_index(z, gamma)))
}

/// Share of the sample whose index is at most `z_query' γ`.
pub fn eta_hat_at(z: &DMatrix<f64>, gamma: &[f64], z_query: &[f64]) -> Result<f64> {
    check_inputs(z, gamma)?;
    if z_query.len() != gamma.len() {
        return Err(Error::DimensionMismatch(format!(
            "query has {} entries, expected {}",
            z_query.len(),
            gamma.len()
        )));
    }
    let target: f64 = z_query.iter().zip(gamma).map(|(a, b)| a * b).sum();
    let index = linear_index(z, gamma);
    let count = index.iter().filter(|&&v| v <= target).count();
    Ok(count as f64 / index.len() as f64)
}

/// Empirical CDF of `index` evaluated at each of its own points.
///
/// Sorts once; a run of tied values all receive the position of the last
/// member of the run.
pub fn ranks_of(index: &[f64]) -> IndexRanks {
    let n = index.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| index[a].total_cmp(&index[b]));
    let mut values = vec![0.0; n];
    let nf = n as f64;
    let mut start = 0;
    while start < n {
        let mut end = start + 1;
        while end < n && index[order[end]] == index[order[start]] {
            end += 1;
        }
        let rank = end as f64 / nf;
        for &i in &order[start..end] {
            values[i] = rank;
        }
        start = end;
    }
    IndexRanks { values }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn column(v: &[f64]) -> DMatrix<f64> {
        DMatrix::from_column_slice(v.len(), 1, v)
    }

    /// Direct count over all pairs.
    fn brute_force(z: &DMatrix<f64>, gamma: &[f64]) -> Vec<f64> {
        let n = z.nrows();
        let index = linear_index(z, gamma);
        (0..n)
            .map(|i| index.iter().filter(|&&v| v - index[i] <= 0.0).count() as f64 / n as f64)
            .collect()
    }

    #[test]
    fn strict_ordering() {
        let r = eta_hat(&column(&[0.1, 0.2, 0.3]), &[1.0]).unwrap();
        assert_eq!(r.values(), &[1.0 / 3.0, 2.0 / 3.0, 1.0]);
    }

    #[test]
    fn all_ties_share_top_rank() {
        let r = eta_hat(&column(&[5.0, 5.0, 5.0]), &[1.0]).unwrap();
        assert_eq!(r.values(), &[1.0, 1.0, 1.0]);
    }

    #[test]
    fn partial_ties() {
        let r = eta_hat(&column(&[2.0, 1.0, 2.0, 0.0]), &[1.0]).unwrap();
        assert_eq!(r.values(), &[1.0, 0.5, 1.0, 0.25]);
    }

    #[test]
    fn query_points() {
        let z = column(&[1.0, 2.0, 3.0]);
        assert_eq!(eta_hat_at(&z, &[1.0], &[2.5]).unwrap(), 2.0 / 3.0);
        assert_eq!(eta_hat_at(&z, &[1.0], &[0.0]).unwrap(), 0.0);
        assert_eq!(eta_hat_at(&z, &[1.0], &[3.0]).unwrap(), 1.0);
    }

    #[test]
    fn errors() {
        assert!(matches!(
            eta_hat(&column(&[1.0]), &[1.0]),
            Err(Error::InsufficientSample(_))
        ));
        let z = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]);
        assert!(matches!(eta_hat(&z, &[0.0, 0.0]), Err(Error::DegenerateIndex)));
        assert!(matches!(eta_hat(&z, &[1.0]), Err(Error::DimensionMismatch(_))));
    }

    #[test]
    fn sorted_matches_quadratic_oracle_on_random_instances() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for _ in 0..100 {
            let n = rng.random_range(2..60);
            let l = rng.random_range(1..4);
            // Coarse values so ties actually occur.
            let z = DMatrix::from_fn(n, l, |_, _| rng.random_range(-3..4) as f64);
            let gamma: Vec<f64> = (0..l).map(|_| rng.random_range(-2.0..2.0)).collect();
            assert_eq!(eta_hat(&z, &gamma).unwrap().values(), brute_force(&z, &gamma).as_slice());
        }
    }

    proptest! {
        #[test]
        fn positive_rescaling_is_invisible(
            vals in prop::collection::vec(-100.0f64..100.0, 4..40),
            g in prop::collection::vec(0.1f64..3.0, 2),
            c in 0.01f64..50.0,
        ) {
            let z = DMatrix::from_fn(vals.len() / 2, 2, |i, j| vals[2 * i + j]);
            prop_assume!(z.nrows() >= 2);
            // Powers of two scale every product and sum exactly.
            let pow2 = 2f64.powi((c.log2().round()) as i32);
            let scaled: Vec<f64> = g.iter().map(|v| v * pow2).collect();
            prop_assert_eq!(eta_hat(&z, &g).unwrap(), eta_hat(&z, &scaled).unwrap());
            // Any positive factor on a single column.
            let col = DMatrix::from_fn(z.nrows(), 1, |i, _| z[(i, 0)]);
            prop_assert_eq!(eta_hat(&col, &[g[0]]).unwrap(), eta_hat(&col, &[g[0] * c]).unwrap());
        }

        #[test]
        fn monotone_in_query(
            vals in prop::collection::vec(-10.0f64..10.0, 2..30),
            a in -12.0f64..12.0,
            b in -12.0f64..12.0,
        ) {
            let z = column(&vals);
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            prop_assert!(eta_hat_at(&z, &[1.0], &[hi]).unwrap() >= eta_hat_at(&z, &[1.0], &[lo]).unwrap());
        }

        #[test]
        fn continuous_indices_give_uniform_grid(
            vals in prop::collection::hash_set(-1_000_000i64..1_000_000, 2..50),
        ) {
            let v: Vec<f64> = vals.into_iter().map(|x| x as f64 * 1e-3).collect();
            let mut r = ranks_of(&v).into_vec();
            r.sort_by(f64::total_cmp);
            let n = v.len();
            let expected: Vec<f64> = (1..=n).map(|i| i as f64 / n as f64).collect();
            prop_assert_eq!(r, expected);
        }
    }
}
