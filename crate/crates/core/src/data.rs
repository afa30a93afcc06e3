//! Observed data: outcome with a presence mask, missingness indicator, fully
//! observed covariates `u`, and instruments `z`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct Dataset {
    /// Outcome values; entries with `r = 0` hold NaN and must not be read.
    y: DVector<f64>,
    /// Missingness indicator: `r[i]` is true iff `y[i]` is observed.
    r: Vec<bool>,
    /// Covariates related to the missingness, n x m_u.
    u: DMatrix<f64>,
    /// Instruments, n x m_z.
    z: DMatrix<f64>,
}

impl Dataset {
    /// Build a dataset from per-row outcomes (`None` = missing) and fully
    /// observed covariate matrices.
    pub fn new(y: Vec<Option<f64>>, u: DMatrix<f64>, z: DMatrix<f64>) -> Result<Self> {
        let n = y.len();
        if u.nrows() != n || z.nrows() != n {
            return Err(Error::Shape(format!(
                "row mismatch: y has {n}, u has {}, z has {}",
                u.nrows(),
                z.nrows()
            )));
        }
        if u.ncols() == 0 || z.ncols() == 0 {
            return Err(Error::Shape(
                "need at least one u-column and one z-column".into(),
            ));
        }
        for (name, mat) in [("u", &u), ("z", &z)] {
            if mat.iter().any(|v| !v.is_finite()) {
                return Err(Error::Domain(format!(
                    "covariate matrix {name} contains a nonfinite value"
                )));
            }
        }
        let dim = 1 + u.ncols() + z.ncols();
        if n < dim + 1 {
            return Err(Error::DegenerateData(format!(
                "need at least m + 2 = {} rows, got {n}",
                dim + 1
            )));
        }
        let mut yv = DVector::from_element(n, f64::NAN);
        let mut r = vec![false; n];
        let mut complete = 0usize;
        for (i, yi) in y.into_iter().enumerate() {
            if let Some(v) = yi {
                if !v.is_finite() {
                    return Err(Error::Domain(format!(
                        "observed outcome at row {i} is nonfinite"
                    )));
                }
                yv[i] = v;
                r[i] = true;
                complete += 1;
            }
        }
        if complete < dim + 1 {
            return Err(Error::DegenerateData(format!(
                "need at least m + 2 = {} complete cases, got {complete}",
                dim + 1
            )));
        }
        Ok(Self { y: yv, r, u, z })
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn m_u(&self) -> usize {
        self.u.ncols()
    }

    pub fn m_z(&self) -> usize {
        self.z.ncols()
    }

    pub fn m(&self) -> usize {
        self.m_u() + self.m_z()
    }

    /// Length of the coefficient vector, m + 1.
    pub fn dim(&self) -> usize {
        self.m() + 1
    }

    pub fn is_observed(&self, i: usize) -> bool {
        self.r[i]
    }

    pub fn indicators(&self) -> &[bool] {
        &self.r
    }

    pub fn complete_cases(&self) -> usize {
        self.r.iter().filter(|&&b| b).count()
    }

    /// Outcome at row `i`, or `None` if missing.
    pub fn y(&self, i: usize) -> Option<f64> {
        if self.r[i] {
            Some(self.y[i])
        } else {
            None
        }
    }

    pub fn u(&self) -> &DMatrix<f64> {
        &self.u
    }

    pub fn z(&self) -> &DMatrix<f64> {
        &self.z
    }

    pub fn u_row(&self, i: usize) -> Vec<f64> {
        self.u.row(i).iter().cloned().collect()
    }

    pub fn z_row(&self, i: usize) -> Vec<f64> {
        self.z.row(i).iter().cloned().collect()
    }

    /// Covariate vector x_i = (u_i, z_i).
    pub fn x_row(&self, i: usize) -> Vec<f64> {
        let mut x = Vec::with_capacity(self.m());
        x.extend(self.u.row(i).iter());
        x.extend(self.z.row(i).iter());
        x
    }

    /// The joint covariate matrix (u | z), n x m.
    pub fn x_matrix(&self) -> DMatrix<f64> {
        let n = self.n();
        let mut x = DMatrix::zeros(n, self.m());
        x.view_mut((0, 0), (n, self.m_u())).copy_from(&self.u);
        x.view_mut((0, self.m_u()), (n, self.m_z()))
            .copy_from(&self.z);
        x
    }
}
