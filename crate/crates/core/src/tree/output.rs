//! Prediction, serialization and reports for grown trees.

use std::fmt::Write as _;
use std::io::Write;

use serde::{Deserialize, Serialize};

use super::split::SplitKind;
use super::{MobNode, MobTree};
use crate::error::Error;
use crate::survival::io::format_z;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub node: usize,
    /// `λ̂(t)` for `t = 1, 2, …` up to the last time at risk in the node.
    pub hazards: Vec<f64>,
    pub survival: Vec<f64>,
}

impl MobTree {
    /// Terminal node reached by `z` (values coded as in the training data).
    pub fn route(&self, z: &[f64]) -> Result<usize, Error> {
        if z.len() != self.z_vars.len() {
            return Err(Error::Config(format!(
                "expected {} partitioning values, got {}",
                self.z_vars.len(),
                z.len()
            )));
        }
        let mut id = 0;
        while let (Some(rule), Some([left, right])) = (&self.nodes[id].split, self.nodes[id].children) {
            let var = &self.z_vars[rule.variable_index];
            let value = z[rule.variable_index];
            id = match rule.goes_left(var, value) {
                Some(true) => left,
                Some(false) => right,
                None => {
                    return Err(Error::UnseenLevel {
                        variable: var.name.clone(),
                        level: format_z(var, value),
                    })
                }
            };
        }
        Ok(id)
    }

    pub fn predict(&self, z: &[f64], x: &[f64]) -> Result<Prediction, Error> {
        let node = self.route(z)?;
        let (hazards, survival) = node_curve(&self.nodes[node], x);
        Ok(Prediction {
            node,
            hazards,
            survival,
        })
    }

    pub fn to_json(&self) -> Result<String, Error> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self, Error> {
        Ok(serde_json::from_str(s)?)
    }

    /// Plain-text rendering of the tree.
    pub fn render(&self) -> String {
        let mut out = String::new();
        self.render_node(0, "", &mut out);
        out
    }

    fn render_node(&self, id: usize, indent: &str, out: &mut String) {
        let node = &self.nodes[id];
        let _ = write!(out, "[{id}] n = {}, events = {}", node.n_subjects, node.n_events);
        match (&node.split, node.children) {
            (Some(rule), Some([left, right])) => {
                let p = node
                    .tests
                    .iter()
                    .find(|t| t.variable == rule.variable)
                    .map_or(f64::NAN, |t| t.adjusted_p_value);
                let _ = writeln!(out, ", split on {} (adjusted p = {p:.4})", rule.variable);
                let (l, r) = match &rule.kind {
                    SplitKind::Numeric { cutpoint } => (
                        format!("{} <= {cutpoint}", rule.variable),
                        format!("{} > {cutpoint}", rule.variable),
                    ),
                    SplitKind::Categorical { left, right } => (
                        format!("{} in {{{}}}", rule.variable, left.join(", ")),
                        format!("{} in {{{}}}", rule.variable, right.join(", ")),
                    ),
                };
                let _ = write!(out, "{indent}|-- {l}: ");
                self.render_node(left, &format!("{indent}|   "), out);
                let _ = write!(out, "{indent}`-- {r}: ");
                self.render_node(right, &format!("{indent}    "), out);
            }
            _ => {
                let reason = node
                    .stop_reason
                    .map(|r| {
                        serde_json::to_value(r)
                            .ok()
                            .and_then(|v| v.as_str().map(String::from))
                            .unwrap_or_default()
                    })
                    .unwrap_or_default();
                let surv = node.life_table.last().map_or(1.0, |r| r.survival);
                let _ = writeln!(out, ", S(last) = {surv:.4} * ({reason})");
            }
        }
    }

    /// Per-terminal life table next to the model-based curve at `x = 0`.
    pub fn write_survival_csv<W: Write>(&self, mut w: W) -> Result<(), Error> {
        writeln!(
            w,
            "node,time,at_risk,events,life_table_hazard,life_table_survival,model_hazard,model_survival"
        )?;
        for node in self.terminals() {
            let (hz, sv) = node_curve(node, &vec![0.0; self.x_names.len()]);
            for row in &node.life_table {
                let i = row.time as usize - 1;
                writeln!(
                    w,
                    "{},{},{},{},{},{},{},{}",
                    node.id,
                    row.time,
                    row.at_risk,
                    row.events,
                    row.hazard,
                    row.survival,
                    hz.get(i).map_or(String::new(), |v| v.to_string()),
                    sv.get(i).map_or(String::new(), |v| v.to_string()),
                )?;
            }
        }
        Ok(())
    }

    /// One row per node and partitioning variable.
    pub fn write_pvalue_csv<W: Write>(&self, mut w: W) -> Result<(), Error> {
        writeln!(
            w,
            "node,variable,statistic,p_value,adjusted_p_value,method,testable,selected"
        )?;
        for node in &self.nodes {
            for t in &node.tests {
                writeln!(
                    w,
                    "{},{},{},{},{},{},{},{}",
                    node.id,
                    t.variable,
                    t.statistic,
                    t.p_value,
                    t.adjusted_p_value,
                    serde_json::to_value(t.method)?.as_str().unwrap_or_default(),
                    t.testable,
                    node.selected.as_deref() == Some(t.variable.as_str()) && node.split.is_some(),
                )?;
            }
        }
        Ok(())
    }
}

/// Hazards and survival of a node's model for covariates `x`.
fn node_curve(node: &MobNode, x: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let theta = node.theta();
    let k = node.design.slots.len() as u32;
    let hazards: Vec<f64> = (1..=k).map_while(|t| node.design.hazard(&theta, t, x)).collect();
    let mut s = 1.0;
    let survival = hazards
        .iter()
        .map(|h| {
            s *= 1.0 - h;
            s
        })
        .collect();
    (hazards, survival)
}
