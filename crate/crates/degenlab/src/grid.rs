//! Uniform tensor grids on `[-a, a]^m`, optionally restricted to the closed
//! ball `B(0, a)`, for `m` in {1, 2}. Node sets are deterministic given
//! `(m, a, n)`.

use serde::Serialize;
use thiserror::Error;

pub const MIN_NODES_PER_AXIS: usize = 16;

#[derive(Debug, Clone, Serialize)]
pub struct Grid {
    m: usize,
    radius: f64,
    nodes_per_axis: usize,
    ball_restricted: bool,
}

#[derive(Debug, Error)]
pub enum GridError {
    #[error("grid dimension must be 1 or 2, got {0}")]
    Dimension(usize),
    #[error("grid needs at least {MIN_NODES_PER_AXIS} nodes per axis, got {0}")]
    TooCoarse(usize),
    #[error("grid radius must be positive, got {0}")]
    Radius(f64),
}

impl Grid {
    pub fn new(m: usize, radius: f64, nodes_per_axis: usize) -> Result<Self, GridError> {
        if m == 0 || m > 2 {
            return Err(GridError::Dimension(m));
        }
        if nodes_per_axis < MIN_NODES_PER_AXIS {
            return Err(GridError::TooCoarse(nodes_per_axis));
        }
        if !(radius > 0.0) {
            return Err(GridError::Radius(radius));
        }
        Ok(Grid {
            m,
            radius,
            nodes_per_axis,
            ball_restricted: m > 1,
        })
    }

    pub fn line(radius: f64, nodes: usize) -> Result<Self, GridError> {
        Grid::new(1, radius, nodes)
    }

    pub fn dim(&self) -> usize {
        self.m
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn nodes_per_axis(&self) -> usize {
        self.nodes_per_axis
    }

    pub fn spacing(&self) -> f64 {
        2.0 * self.radius / (self.nodes_per_axis - 1) as f64
    }

    pub fn axis_coord(&self, i: usize) -> f64 {
        -self.radius + i as f64 * self.spacing()
    }

    /// All grid nodes in row-major order (ball-restricted for m = 2).
    pub fn nodes(&self) -> Vec<Vec<f64>> {
        let n = self.nodes_per_axis;
        match self.m {
            1 => (0..n).map(|i| vec![self.axis_coord(i)]).collect(),
            2 => {
                let mut out = Vec::new();
                for j in 0..n {
                    for i in 0..n {
                        let x = self.axis_coord(i);
                        let y = self.axis_coord(j);
                        if !self.ball_restricted || x.hypot(y) <= self.radius + 1e-12 {
                            out.push(vec![x, y]);
                        }
                    }
                }
                out
            }
            _ => unreachable!(),
        }
    }

    /// Trapezoid quadrature weight for node `x` (tensor product of 1D
    /// trapezoid weights; half weight on axis endpoints).
    pub fn quad_weight(&self, x: &[f64]) -> f64 {
        let h = self.spacing();
        let mut w = 1.0;
        for &c in x {
            let edge = (c.abs() - self.radius).abs() < 1e-12;
            w *= if edge { h / 2.0 } else { h };
        }
        w
    }

    /// Trapezoid integral of nodal values given in [`Grid::nodes`] order.
    pub fn integrate(&self, values: &[f64]) -> f64 {
        let nodes = self.nodes();
        assert_eq!(nodes.len(), values.len(), "value vector/grid mismatch");
        nodes
            .iter()
            .zip(values)
            .map(|(x, v)| self.quad_weight(x) * v)
            .sum()
    }
}
