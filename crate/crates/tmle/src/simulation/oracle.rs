//! Frozen oracle constants for the two designs: the true mean outcome and
//! the efficiency bound, computed once by direct simulation with the seed
//! and draw count recorded here. `regenerate` reproduces them bitwise with
//! the same inputs (the `oracle` CLI subcommand exposes it).

use super::{efficiency_bound, oracle_psi0, DgpSpec};

/// Draw count used for the shipped constants.
pub const SHIPPED_M: usize = 10_000_000;
/// Master seed used for the shipped constants.
pub const SHIPPED_SEED: u64 = 1729;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleConstants {
    pub psi0: f64,
    pub psi0_mc_se: f64,
    pub bound: f64,
    pub bound_mc_se: f64,
    pub m: usize,
    pub seed: u64,
}

/// Recompute the constants from scratch: the mean-outcome stream is
/// derived from `(seed, 0)` and the bound stream from `(seed, 1)`.
pub fn regenerate(dgp: DgpSpec, m: usize, seed: u64) -> OracleConstants {
    let psi = oracle_psi0(dgp, m, seed.wrapping_add(0));
    let bound = efficiency_bound(dgp, m, seed.wrapping_add(1), psi.value);
    OracleConstants {
        psi0: psi.value,
        psi0_mc_se: psi.mc_se,
        bound: bound.value,
        bound_mc_se: bound.mc_se,
        m,
        seed,
    }
}

/// The shipped constants (regenerate(dgp, SHIPPED_M, SHIPPED_SEED)).
pub fn shipped(dgp: DgpSpec) -> OracleConstants {
    match dgp {
        DgpSpec::D1 => OracleConstants {
            psi0: PSI0_D1,
            psi0_mc_se: PSI0_D1_MC_SE,
            bound: BOUND_D1,
            bound_mc_se: BOUND_D1_MC_SE,
            m: SHIPPED_M,
            seed: SHIPPED_SEED,
        },
        DgpSpec::D3 => OracleConstants {
            psi0: PSI0_D3,
            psi0_mc_se: PSI0_D3_MC_SE,
            bound: BOUND_D3,
            bound_mc_se: BOUND_D3_MC_SE,
            m: SHIPPED_M,
            seed: SHIPPED_SEED,
        },
    }
}

// Values produced by `regenerate` with SHIPPED_M draws and seed
// SHIPPED_SEED; the acceptance suite checks they are reproduced bitwise.
const PSI0_D1: f64 = 0.3553925894923296;
const PSI0_D1_MC_SE: f64 = 0.00013148541179774535;
const BOUND_D1: f64 = 0.2506133778977364;
const BOUND_D1_MC_SE: f64 = 0.00011198358497742536;
const PSI0_D3: f64 = 0.059949743691525885;
const PSI0_D3_MC_SE: f64 = 4.54944179649341e-6;
const BOUND_D3: f64 = 0.06949769194830488;
const BOUND_D3_MC_SE: f64 = 9.132375442297688e-5;

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    #[ignore = "generator for the frozen constants above"]
    fn print_shipped_constants() {
        for dgp in [DgpSpec::D1, DgpSpec::D3] {
            let c = regenerate(dgp, SHIPPED_M, SHIPPED_SEED);
            println!("{dgp:?}: {c:?}");
            println!(
                "consts: psi0={:?} psi0_se={:?} bound={:?} bound_se={:?}",
                c.psi0, c.psi0_mc_se, c.bound, c.bound_mc_se
            );
        }
    }
}
