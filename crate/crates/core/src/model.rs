//! The plant `x_{k+1} = A x_k + B w_k`, `y^i_k = C^i x_k + D^i v^i_k`.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::interval::IntervalVector;

#[derive(Debug, Clone, PartialEq)]
pub struct PlantModel {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    /// Per-agent output matrices `C^i` (`m_i × n`).
    pub c: Vec<DMatrix<f64>>,
    /// Per-agent noise matrices `D^i` (`m_i × n_v^i`).
    pub d: Vec<DMatrix<f64>>,
    pub w_bounds: IntervalVector,
    pub v_bounds: Vec<IntervalVector>,
    pub x0_bounds: IntervalVector,
}

impl PlantModel {
    pub fn new(
        a: DMatrix<f64>,
        b: DMatrix<f64>,
        c: Vec<DMatrix<f64>>,
        d: Vec<DMatrix<f64>>,
        w_bounds: IntervalVector,
        v_bounds: Vec<IntervalVector>,
        x0_bounds: IntervalVector,
    ) -> Result<Self> {
        let plant = Self {
            a,
            b,
            c,
            d,
            w_bounds,
            v_bounds,
            x0_bounds,
        };
        plant.validate()?;
        Ok(plant)
    }

    pub fn n(&self) -> usize {
        self.a.nrows()
    }

    pub fn agents(&self) -> usize {
        self.c.len()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.a.nrows();
        if n == 0 || self.a.ncols() != n {
            return Err(Error::validation("plant.a", format!("A must be square and nonempty, got {}x{}", self.a.nrows(), self.a.ncols())));
        }
        if self.b.nrows() != n {
            return Err(Error::validation("plant.b", format!("B must have {n} rows, got {}", self.b.nrows())));
        }
        if self.w_bounds.len() != self.b.ncols() {
            return Err(Error::validation(
                "process_noise",
                format!("bounds have length {} but B has {} columns", self.w_bounds.len(), self.b.ncols()),
            ));
        }
        if self.x0_bounds.len() != n {
            return Err(Error::validation("initial", format!("bounds must have length {n}")));
        }
        if self.c.is_empty() {
            return Err(Error::validation("agents", "at least one agent is required"));
        }
        if self.d.len() != self.c.len() || self.v_bounds.len() != self.c.len() {
            return Err(Error::validation("agents", "C, D and noise bounds must be given for every agent"));
        }
        for (i, ((c, d), v)) in self.c.iter().zip(&self.d).zip(&self.v_bounds).enumerate() {
            if c.ncols() != n {
                return Err(Error::validation(format!("agents[{i}].c"), format!("C must have {n} columns, got {}", c.ncols())));
            }
            if d.nrows() != c.nrows() {
                return Err(Error::validation(
                    format!("agents[{i}].d"),
                    format!("D must have {} rows to match C, got {}", c.nrows(), d.nrows()),
                ));
            }
            if v.len() != d.ncols() {
                return Err(Error::validation(
                    format!("agents[{i}].noise"),
                    format!("bounds have length {} but D has {} columns", v.len(), d.ncols()),
                ));
            }
        }
        let finite = |m: &DMatrix<f64>| m.iter().all(|v| v.is_finite());
        if !finite(&self.a) || !finite(&self.b) || !self.c.iter().all(finite) || !self.d.iter().all(finite) {
            return Err(Error::validation("plant", "matrices must be finite"));
        }
        Ok(())
    }
}
