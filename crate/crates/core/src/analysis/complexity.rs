//! Per-node, per-instant arithmetic cost of each algorithm.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ComplexityRow {
    Dlms,
    Drls,
    DcdDrls,
    DcdDrlsShift,
    Rdrls,
    DcdRdrls,
    DcdRdrlsShift,
}

impl ComplexityRow {
    pub const ALL: [ComplexityRow; 7] = [
        Self::Dlms,
        Self::Drls,
        Self::DcdDrls,
        Self::DcdDrlsShift,
        Self::Rdrls,
        Self::DcdRdrls,
        Self::DcdRdrlsShift,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Self::Dlms => "dlms",
            Self::Drls => "drls",
            Self::DcdDrls => "dcd-drls",
            Self::DcdDrlsShift => "dcd-drls-shift",
            Self::Rdrls => "rdrls",
            Self::DcdRdrls => "dcd-rdrls",
            Self::DcdRdrlsShift => "dcd-rdrls-shift",
        }
    }

    pub fn uses_dcd(self) -> bool {
        matches!(self, Self::DcdDrls | Self::DcdDrlsShift | Self::DcdRdrls | Self::DcdRdrlsShift)
    }
}

impl fmt::Display for ComplexityRow {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ComplexityRow {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Self::ALL.into_iter().find(|r| r.name() == s).ok_or_else(|| {
            let names: Vec<_> = Self::ALL.iter().map(|r| r.name()).collect();
            Error::config(format!("unknown algorithm `{s}` for the complexity report (expected one of {})", names.join(", ")))
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct OpCounts {
    pub mults: u64,
    pub adds: u64,
    pub divs: u64,
    pub sqrts: u64,
}

/// Operation counts for one node with `n_k` neighbors (self included), dimension
/// `m`, constrained-branch flag `kappa ∈ {0, 1}` and DCD addition count `c_dcd`.
pub fn complexity_table(row: ComplexityRow, m: u64, n_k: u64, kappa: u64, c_dcd: u64) -> Result<OpCounts> {
    if m == 0 || n_k == 0 {
        return Err(Error::param("complexity needs M ≥ 1 and n_k ≥ 1"));
    }
    if kappa > 1 {
        return Err(Error::param(format!("κ must be 0 or 1, got {kappa}")));
    }
    let (k, c) = (kappa, c_dcd);
    let nm = n_k * m;
    let nm1 = n_k * (m + 1);
    let ops = |mults, adds, divs, sqrts| OpCounts { mults, adds, divs, sqrts };
    Ok(match row {
        ComplexityRow::Dlms => ops(nm + 2 * m + 1, nm + m, 0, 0),
        ComplexityRow::Drls => ops(nm + 4 * m * m + 3 * m, nm + 3 * m * m, m, 0),
        ComplexityRow::DcdDrls => ops(nm + 2 * m * m + 3 * m, nm + m * m + 2 * m + c, 0, 0),
        ComplexityRow::DcdDrlsShift => ops(nm + 5 * m, nm + 3 * m + c, 0, 0),
        ComplexityRow::Rdrls => ops(nm1 + 4 * m * m + 4 * m + 5, nm1 + 3 * m * m + m + 1, m + 1, 1),
        ComplexityRow::DcdRdrls => ops(
            nm1 + 2 * m * m + 4 * m + 3 * k * m + 2,
            nm1 + m * m + 3 * m + k * (2 * m - 1 + c) + c,
            2 * k,
            2 * k,
        ),
        ComplexityRow::DcdRdrlsShift => ops(
            nm1 + 6 * m + 3 * k * m + 2,
            nm1 + 4 * m + k * (2 * m - 1 + c) + c,
            2 * k,
            2 * k,
        ),
    })
}
