use serde::{Deserialize, Serialize};

use super::Dataset;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LifeTableRow {
    pub time: u32,
    pub at_risk: usize,
    pub events: usize,
    pub hazard: f64,
    pub survival: f64,
}

/// Discrete-time life table. Rows stop at the last time with a non-empty
/// risk set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LifeTable {
    pub rows: Vec<LifeTableRow>,
}

impl LifeTable {
    pub fn hazards(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.hazard).collect()
    }

    pub fn survival(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.survival).collect()
    }

    /// Survival at `t`; `S(0) = 1`, and times past the table carry the last value.
    pub fn survival_at(&self, t: u32) -> f64 {
        if t == 0 {
            return 1.0;
        }
        self.rows
            .iter()
            .take_while(|r| r.time <= t)
            .last()
            .map_or(1.0, |r| r.survival)
    }
}

pub fn life_table(dataset: &Dataset) -> LifeTable {
    let k = dataset.k_max() as usize;
    let mut ends = vec![0usize; k + 1];
    let mut events = vec![0usize; k + 1];
    for s in dataset.subjects() {
        let t = s.time() as usize;
        ends[t] += 1;
        if s.event() {
            events[t] += 1;
        }
    }
    let mut at_risk = dataset.len();
    let mut surv = 1.0;
    let mut rows = Vec::with_capacity(k);
    for t in 1..=k {
        if at_risk == 0 {
            break;
        }
        let hazard = events[t] as f64 / at_risk as f64;
        surv *= 1.0 - hazard;
        rows.push(LifeTableRow {
            time: t as u32,
            at_risk,
            events: events[t],
            hazard,
            survival: surv,
        });
        at_risk -= ends[t];
    }
    LifeTable { rows }
}
