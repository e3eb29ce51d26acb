//! Operation codes. Query payloads carry broadcast arguments; partial
//! payloads carry per-site aggregates only.

use crate::error::{LqmError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u16)]
pub enum Op {
    /// `[G, sizes.., weights..]` -> ack.
    SetPartition = 1,
    /// -> `A_i^T y_i` (P).
    Correlation = 2,
    /// `[g]` -> `[A_i]_g^T [A_i]_g` (p_g * p_g).
    Gram = 3,
    /// `[x]` (P) -> ack; rebuilds `R_i = A_i x - y_i`.
    SetModel = 4,
    /// `[g]` -> `[A_i]_g^T R_i` (p_g).
    Gradient = 5,
    /// `[g, new block..]` -> ack; `R_i += [A_i]_g (new - old)`.
    ApplyBlock = 6,
    /// -> `[||R_i||^2, <R_i, y_i>]`.
    ResidualMoments = 7,
    /// `[include flag per group]` -> `A_i^T R_i` on flagged groups (P).
    FullGradient = 8,
    /// `[lambda_prev, lambda_next, at_max, g*, x_prev (P).., [A]_{g*}^T y..]`
    /// -> `[||v1_i||^2, <v1_i, v2_i>]`.
    DualSetup = 9,
    /// `[alpha]` -> `[||v2_perp_i||^2]`.
    DualProject = 10,
    /// -> `A_i^T (theta_i + v2_perp_i / 2)` (P).
    ScreenCorrelation = 11,
    /// `[slot]` -> squared norm of a site-local vector.
    SqNorm = 12,
    /// -> `[max |R_i - (A_i x - y_i)|]`.
    AuditResidual = 13,
    /// -> column sums, column sums of squares, `sum y_i`, `n_i` (2P + 2).
    ColumnMoments = 14,
    /// `[means (P).., scales (P).., y mean]` -> ack.
    Standardize = 15,
    /// `[x]` (P) -> `[A_i^T (A_i x - y_i) (P).., ||.||^2, <., y_i>]` from scratch.
    Evaluate = 16,
    /// Control: stop serving.
    Shutdown = 100,
    /// Control, site to master: `[code]`.
    Error = 101,
}

impl Op {
    pub fn from_u16(v: u16) -> Result<Self> {
        use Op::*;
        Ok(match v {
            1 => SetPartition,
            2 => Correlation,
            3 => Gram,
            4 => SetModel,
            5 => Gradient,
            6 => ApplyBlock,
            7 => ResidualMoments,
            8 => FullGradient,
            9 => DualSetup,
            10 => DualProject,
            11 => ScreenCorrelation,
            12 => SqNorm,
            13 => AuditResidual,
            14 => ColumnMoments,
            15 => Standardize,
            16 => Evaluate,
            100 => Shutdown,
            101 => Error,
            other => return Err(LqmError::UnknownOp(other)),
        })
    }
}

/// Site-local vectors addressable by [`Op::SqNorm`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Slot {
    Theta = 0,
    V1 = 1,
    V2 = 2,
    V2Perp = 3,
    Residual = 4,
}

impl Slot {
    pub fn from_f64(v: f64) -> Option<Self> {
        match v as i64 {
            0 => Some(Slot::Theta),
            1 => Some(Slot::V1),
            2 => Some(Slot::V2),
            3 => Some(Slot::V2Perp),
            4 => Some(Slot::Residual),
            _ => None,
        }
    }
}

/// Error codes sent in [`Op::Error`] frames.
pub mod codes {
    pub const BAD_PAYLOAD: u16 = 1;
    pub const NO_PARTITION: u16 = 2;
    pub const UNKNOWN_OP: u16 = 3;
    pub const COMPUTE: u16 = 4;
    pub const LENGTH_MISMATCH: u16 = 5;
}
