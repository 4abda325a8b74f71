//! Energy ledger: one row per recorded time with the energy, the cumulative
//! dissipation, the L^4 spacetime accumulator and sup-local energies.

use crate::grid::Point;
use alloc::vec::Vec;

#[derive(Debug, Clone, PartialEq)]
pub struct LedgerRow {
    pub t: f64,
    pub energy: f64,
    /// `gamma_1 * integral_0^t ||d_t u||^2`, with `d_t u` the realized increment.
    pub diss_cum: f64,
    /// `integral_0^t ||grad u||_{L^4}^4 dt` (trapezoid in time).
    pub l4_cum: f64,
    /// Largest pre-projection target distance seen in the last step.
    pub unit_drift: f64,
    /// Sup-local energy for each configured radius.
    pub sup_local: Vec<f64>,
    /// Argmax of the sup-local energy at the last (smallest) radius.
    pub argmax: Point,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct EnergyLedger {
    radii: Vec<f64>,
    rows: Vec<LedgerRow>,
}

impl EnergyLedger {
    pub fn new(radii: Vec<f64>) -> Self {
        Self { radii, rows: Vec::new() }
    }

    pub fn radii(&self) -> &[f64] {
        &self.radii
    }

    pub fn rows(&self) -> &[LedgerRow] {
        &self.rows
    }

    pub fn rows_mut(&mut self) -> &mut [LedgerRow] {
        &mut self.rows
    }

    pub fn push(&mut self, row: LedgerRow) {
        debug_assert_eq!(row.sup_local.len(), self.radii.len());
        self.rows.push(row);
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn first(&self) -> Option<&LedgerRow> {
        self.rows.first()
    }

    pub fn last(&self) -> Option<&LedgerRow> {
        self.rows.last()
    }

    /// Largest value of `|E(0) - E(t) - diss_cum(t)|` over the rows.
    pub fn dissipation_residual(&self) -> f64 {
        let Some(first) = self.rows.first() else {
            return 0.0;
        };
        self.rows.iter().map(|r| (first.energy - r.energy - (r.diss_cum - first.diss_cum)).abs()).fold(0.0, f64::max)
    }

    /// Checks the row invariants: `t` strictly increasing, `diss_cum` and
    /// `l4_cum` non-decreasing, `E` non-increasing within `tol`.
    pub fn check_invariants(&self, tol: f64) -> bool {
        self.rows.windows(2).all(|w| {
            w[1].t > w[0].t
                && w[1].diss_cum >= w[0].diss_cum
                && w[1].l4_cum >= w[0].l4_cum
                && w[1].energy <= w[0].energy + tol
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn row(t: f64, e: f64, d: f64) -> LedgerRow {
        LedgerRow { t, energy: e, diss_cum: d, l4_cum: t, unit_drift: 0.0, sup_local: vec![], argmax: Point::ORIGIN }
    }

    #[test]
    fn residual_of_balanced_ledger_is_zero() {
        let mut l = EnergyLedger::new(vec![]);
        assert_eq!(l.dissipation_residual(), 0.0);
        l.push(row(0.0, 10.0, 0.0));
        l.push(row(1.0, 7.0, 3.0));
        l.push(row(2.0, 6.5, 3.5));
        assert_eq!(l.dissipation_residual(), 0.0);
        assert!(l.check_invariants(0.0));
    }

    #[test]
    fn raised_energy_shows_up() {
        let mut l = EnergyLedger::new(vec![]);
        l.push(row(0.0, 10.0, 0.0));
        l.push(row(1.0, 9.0, 1.0));
        l.rows_mut()[1].energy += 2.0;
        assert!((l.dissipation_residual() - 2.0).abs() < 1e-15);
        assert!(!l.check_invariants(1e-9));
    }
}
