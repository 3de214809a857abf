use std::sync::atomic::{AtomicU64, Ordering};

/// Fixed-point resolution: one full evaluation is `UNIT` ticks, so sums of
/// decimal fidelities such as 0.2 and 0.8 accumulate without rounding drift.
const UNIT: u64 = 1_000_000_000;

fn ticks(fidelity: f64) -> u64 {
    (fidelity * UNIT as f64).round() as u64
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CostKind {
    Stage1,
    Stage2,
    Baseline,
}

impl CostKind {
    fn slot(self) -> usize {
        self as usize
    }
}

/// Thread-safe accumulator of evaluation cost in full-evaluation
/// equivalents (N_eq).
#[derive(Debug, Default)]
pub struct CostLedger {
    ticks: [AtomicU64; 3],
    counts: [AtomicU64; 3],
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LedgerSnapshot {
    pub total: f64,
    pub stage1: f64,
    pub stage2: f64,
    pub baseline: f64,
    pub stage1_count: u64,
    pub stage2_count: u64,
    pub baseline_count: u64,
}

impl CostLedger {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn charge(&self, kind: CostKind, fidelity: f64) {
        self.ticks[kind.slot()].fetch_add(ticks(fidelity), Ordering::Relaxed);
        self.counts[kind.slot()].fetch_add(1, Ordering::Relaxed);
    }

    fn total_ticks(&self) -> u64 {
        self.ticks.iter().map(|t| t.load(Ordering::Relaxed)).sum()
    }

    pub fn total(&self) -> f64 {
        self.total_ticks() as f64 / UNIT as f64
    }

    /// Whether charging `cost` more would stay within `budget`.
    pub fn fits(&self, cost: f64, budget: f64) -> bool {
        self.total_ticks() + ticks(cost) <= ticks(budget)
    }

    pub fn remaining(&self, budget: f64) -> f64 {
        ticks(budget).saturating_sub(self.total_ticks()) as f64 / UNIT as f64
    }

    pub fn snapshot(&self) -> LedgerSnapshot {
        let t = |k: CostKind| self.ticks[k.slot()].load(Ordering::Relaxed) as f64 / UNIT as f64;
        let c = |k: CostKind| self.counts[k.slot()].load(Ordering::Relaxed);
        LedgerSnapshot {
            total: self.total(),
            stage1: t(CostKind::Stage1),
            stage2: t(CostKind::Stage2),
            baseline: t(CostKind::Baseline),
            stage1_count: c(CostKind::Stage1),
            stage2_count: c(CostKind::Stage2),
            baseline_count: c(CostKind::Baseline),
        }
    }

    /// Adds an uncounted amount. Only for exercising the accounting checks.
    #[doc(hidden)]
    pub fn tamper(&self, amount: f64) {
        self.ticks[CostKind::Baseline.slot()].fetch_add(ticks(amount), Ordering::Relaxed);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn exact_decimal_sums() {
        let l = CostLedger::new();
        for _ in 0..12 {
            l.charge(CostKind::Stage1, 0.2);
        }
        assert_eq!(l.total(), 2.4);
        for _ in 0..6 {
            l.charge(CostKind::Stage2, 0.8);
        }
        assert_eq!(l.total(), 7.2);
        let s = l.snapshot();
        assert_eq!((s.stage1_count, s.stage2_count, s.baseline_count), (12, 6, 0));
        assert_eq!(s.stage1, 2.4);
        assert!(l.fits(4.8, 12.0));
        assert!(!l.fits(4.9, 12.0));
        assert_eq!(l.remaining(10.0), 2.8);
    }

    #[test]
    fn tamper_shifts_total_without_counts() {
        let l = CostLedger::new();
        l.charge(CostKind::Stage2, 1.0);
        l.tamper(0.5);
        assert_eq!(l.total(), 1.5);
        assert_eq!(l.snapshot().baseline_count, 0);
    }

    proptest! {
        #[test]
        fn monotone_and_order_independent(f in prop::collection::vec(0.001..1.0f64, 1..40)) {
            let a = CostLedger::new();
            let mut prev = 0.0;
            for &x in &f {
                a.charge(CostKind::Stage1, x);
                prop_assert!(a.total() >= prev);
                prev = a.total();
            }
            let b = CostLedger::new();
            for &x in f.iter().rev() {
                b.charge(CostKind::Stage1, x);
            }
            prop_assert_eq!(a.total(), b.total());
        }
    }
}
