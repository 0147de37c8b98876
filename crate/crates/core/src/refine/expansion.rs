//! Alpha-expansion over the 17 labels, one binary min-cut per move.

use serde::Serialize;

use super::energy::EnergyModel;
use super::maxflow::{max_flow, FlowNetwork, INFINITE};
use crate::error::{Error, Result};
use crate::NUM_CLASSES;

/// Energies are scaled by this factor and rounded to integer capacities.
pub const CAPACITY_SCALE: f64 = 1e6;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct TraceEntry {
    pub sweep: usize,
    pub label: u8,
    pub energy: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExpansionResult {
    pub labels: Vec<u8>,
    pub initial_energy: f64,
    pub energy: f64,
    pub sweeps: usize,
    /// Energy after every attempted move, accepted or not.
    pub trace: Vec<TraceEntry>,
}

impl ExpansionResult {
    /// `sweep,label,energy` rows with a header.
    pub fn trace_csv(&self) -> String {
        let mut s = String::from("sweep,label,energy\n");
        for t in &self.trace {
            s.push_str(&format!("{},{},{}\n", t.sweep, t.label, t.energy));
        }
        s
    }
}

fn to_capacity(x: f64) -> i64 {
    let scaled = (x * CAPACITY_SCALE).round();
    if scaled >= INFINITE as f64 {
        INFINITE
    } else {
        scaled as i64
    }
}

/// Best labeling reachable from `labels` by switching any subset of vertices to `alpha`.
fn expansion_move(energy: &EnergyModel, labels: &[u8], alpha: u8) -> Vec<u8> {
    let n = labels.len();
    let (s, t) = (n, n + 1);
    // cost paid when the vertex switches (sink side) / keeps (source side)
    let mut switch_cost = vec![0.0f64; n];
    let mut keep_cost = vec![0.0f64; n];
    for v in 0..n {
        keep_cost[v] += energy.unary[v][labels[v] as usize];
        switch_cost[v] += energy.unary[v][alpha as usize];
    }
    let mut net = FlowNetwork::new(n + 2, s, t);
    for (&(u, w), &wt) in energy.edges.iter().zip(&energy.pairwise) {
        let (u, w) = (u as usize, w as usize);
        let (lu, lw) = (labels[u], labels[w]);
        let diff = |a: u8, b: u8| if a != b { wt } else { 0.0 };
        let a = diff(lu, lw);
        let b = diff(lu, alpha);
        let c = diff(alpha, lw);
        // E(x_u, x_w) = A + (C - A) x_u + (D - C) x_w + (B + C - A - D)(1 - x_u) x_w, D = 0
        let du = c - a;
        if du > 0.0 {
            switch_cost[u] += du;
        } else {
            keep_cost[u] -= du;
        }
        let dw = -c;
        if dw > 0.0 {
            switch_cost[w] += dw;
        } else {
            keep_cost[w] -= dw;
        }
        let coupling = b + c - a;
        if coupling > 0.0 {
            net.add_arc(u, w, to_capacity(coupling));
        }
    }
    for v in 0..n {
        let d = switch_cost[v] - keep_cost[v];
        if d > 0.0 {
            net.add_arc(s, v, to_capacity(d));
        } else if d < 0.0 {
            net.add_arc(v, t, to_capacity(-d));
        }
    }
    let cut = max_flow(&net);
    labels
        .iter()
        .enumerate()
        .map(|(v, &l)| if cut.source_side[v] { l } else { alpha })
        .collect()
}

/// Sweeps expansion moves over labels `0..=16` in order, accepting a move only
/// when it lowers the energy, until a sweep changes nothing or `max_sweeps`
/// sweeps have run.
pub fn alpha_expansion(energy: &EnergyModel, init: &[u8], max_sweeps: usize) -> Result<ExpansionResult> {
    if init.len() != energy.vertex_count() {
        return Err(Error::Argument(format!(
            "{} initial labels for {} vertices",
            init.len(),
            energy.vertex_count()
        )));
    }
    if let Some(bad) = init.iter().find(|&&l| l as usize >= NUM_CLASSES) {
        return Err(Error::Argument(format!("initial label {bad} outside 0..=16")));
    }
    let mut labels = init.to_vec();
    let initial_energy = energy.energy(&labels);
    let mut current = initial_energy;
    let mut trace = Vec::new();
    let mut sweeps = 0;
    while sweeps < max_sweeps {
        sweeps += 1;
        let mut improved = false;
        for alpha in 0..NUM_CLASSES as u8 {
            let proposal = expansion_move(energy, &labels, alpha);
            let e = energy.energy(&proposal);
            if e < current {
                labels = proposal;
                current = e;
                improved = true;
            }
            trace.push(TraceEntry {
                sweep: sweeps,
                label: alpha,
                energy: current,
            });
        }
        log::debug!("alpha-expansion sweep {sweeps}: energy {current}");
        if !improved {
            break;
        }
    }
    Ok(ExpansionResult {
        labels,
        initial_energy,
        energy: current,
        sweeps,
        trace,
    })
}
