//! Crate-wide error type.

use thiserror::Error;

#[derive(Error, Debug)]
pub enum SimError {
    #[error("configuration: {0}")]
    Config(String),

    #[error("point ({x}, {y}) lies outside the grid domain")]
    OutOfDomain { x: f64, y: f64 },

    #[error("fields live on different grids ({0} vs {1} cells)")]
    GridMismatch(usize, usize),

    #[error(
        "subdomain extent {extent} along {axis} is below 4*r_max = {limit}; \
         minimum-image contact search is ambiguous"
    )]
    SubdomainTooSmall {
        axis: char,
        extent: f64,
        limit: f64,
    },

    #[error("degenerate contact between floes {l} and {j}: centre distance {d} <= |r_l - r_j|")]
    Engulfment { l: usize, j: usize, d: f64 },

    #[error("substep {tau} exceeds the CFL bound {bound}")]
    CflViolation { tau: f64, bound: f64 },

    #[error("non-finite state on floe {floe} ({detail})")]
    Divergence { floe: usize, detail: String },

    #[error("non-finite {field} at cell ({i}, {j})")]
    NonFiniteField {
        field: &'static str,
        i: usize,
        j: usize,
    },

    #[error("cell has zero concentration; radius target is undefined")]
    DegenerateCell,

    #[error("coarse step {step}, cell ({i}, {j}): {source}")]
    AtCell {
        step: usize,
        i: usize,
        j: usize,
        #[source]
        source: Box<SimError>,
    },

    #[error("coarse step {step}: {source}")]
    AtStep {
        step: usize,
        #[source]
        source: Box<SimError>,
    },
}

impl SimError {
    /// Attach coarse-step and cell context to an error bubbling out of a run.
    pub fn at_cell(self, step: usize, i: usize, j: usize) -> SimError {
        SimError::AtCell {
            step,
            i,
            j,
            source: Box::new(self),
        }
    }

    pub fn at_step(self, step: usize) -> SimError {
        SimError::AtStep {
            step,
            source: Box::new(self),
        }
    }
}
