use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// One observation block: selection indicator, observed outcome, outcome
/// covariates `x` (n×k) and selection covariates `z` (n×l).
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    d: Vec<bool>,
    y: Vec<f64>,
    x: DMatrix<f64>,
    z: DMatrix<f64>,
}

impl Dataset {
    pub fn new(d: Vec<bool>, y: Vec<f64>, x: DMatrix<f64>, z: DMatrix<f64>) -> Result<Self> {
        let n = d.len();
        if n < 2 {
            return Err(Error::InsufficientSample(format!("n = {n}, need at least 2")));
        }
        if y.len() != n || x.nrows() != n || z.nrows() != n {
            return Err(Error::DimensionMismatch(format!(
                "d has {n} rows, y {}, x {}, z {}",
                y.len(),
                x.nrows(),
                z.nrows()
            )));
        }
        if z.ncols() == 0 {
            return Err(Error::DimensionMismatch("z has no columns".into()));
        }
        Ok(Dataset { d, y, x, z })
    }

    /// Builds from a 0/1 selection vector.
    pub fn from_indicator(d: &[u8], y: Vec<f64>, x: DMatrix<f64>, z: DMatrix<f64>) -> Result<Self> {
        let d = d
            .iter()
            .enumerate()
            .map(|(i, &v)| match v {
                0 => Ok(false),
                1 => Ok(true),
                _ => Err(Error::InvalidArgument(format!("d[{i}] = {v} is not binary"))),
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(d, y, x, z)
    }

    pub fn n(&self) -> usize {
        self.d.len()
    }

    pub fn k(&self) -> usize {
        self.x.ncols()
    }

    pub fn l(&self) -> usize {
        self.z.ncols()
    }

    pub fn d(&self) -> &[bool] {
        &self.d
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn x(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn z(&self) -> &DMatrix<f64> {
        &self.z
    }

    pub fn n_selected(&self) -> usize {
        self.d.iter().filter(|&&s| s).count()
    }

    /// `Z γ` for every observation.
    pub fn index(&self, gamma: &[f64]) -> Result<Vec<f64>> {
        if gamma.len() != self.l() {
            return Err(Error::DimensionMismatch(format!(
                "gamma has {} entries, z has {} columns",
                gamma.len(),
                self.l()
            )));
        }
        let g = DVector::from_column_slice(gamma);
        Ok((&self.z * g).iter().copied().collect())
    }

    /// Rows selected by `rows`, in that order (duplicates allowed).
    pub fn resample(&self, rows: &[usize]) -> Result<Self> {
        let d = rows.iter().map(|&i| self.d[i]).collect();
        let y = rows.iter().map(|&i| self.y[i]).collect();
        let x = self.x.select_rows(rows.iter());
        let z = self.z.select_rows(rows.iter());
        Self::new(d, y, x, z)
    }

    pub(crate) fn check_beta(&self, beta: &[f64]) -> Result<()> {
        if beta.len() != self.k() {
            return Err(Error::DimensionMismatch(format!(
                "beta has {} entries, x has {} columns",
                beta.len(),
                self.k()
            )));
        }
        if beta.iter().any(|b| !b.is_finite()) {
            return Err(Error::InvalidArgument("beta is not finite".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_shapes() {
        let x = DMatrix::zeros(3, 1);
        let z = DMatrix::zeros(3, 1);
        assert!(matches!(
            Dataset::new(vec![true], vec![1.0], DMatrix::zeros(1, 1), DMatrix::zeros(1, 1)),
            Err(Error::InsufficientSample(_))
        ));
        assert!(matches!(
            Dataset::new(vec![true; 3], vec![1.0; 2], x.clone(), z.clone()),
            Err(Error::DimensionMismatch(_))
        ));
        assert!(Dataset::from_indicator(&[0, 1, 2], vec![0.0; 3], x, z).is_err());
    }

    #[test]
    fn index_and_resample() {
        let z = DMatrix::from_row_slice(3, 2, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let data =
            Dataset::from_indicator(&[1, 0, 1], vec![1.0, 2.0, 3.0], DMatrix::zeros(3, 0), z).unwrap();
        assert_eq!(data.index(&[1.0, -1.0]).unwrap(), vec![-1.0, -1.0, -1.0]);
        let r = data.resample(&[2, 2, 0]).unwrap();
        assert_eq!(r.y(), &[3.0, 3.0, 1.0]);
        assert_eq!(r.z()[(0, 1)], 6.0);
        assert_eq!(r.n_selected(), 3);
    }
}
