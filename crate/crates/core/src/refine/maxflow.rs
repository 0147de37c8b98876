//! Exact integer max-flow (Dinic's blocking-flow algorithm) and min-cut recovery.

use std::collections::VecDeque;

/// Capacity that behaves as infinite.
pub const INFINITE: i64 = i64::MAX / 4;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Arc {
    pub from: usize,
    pub to: usize,
    pub capacity: i64,
}

/// Directed network with integer capacities and distinguished terminals.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FlowNetwork {
    nodes: usize,
    source: usize,
    sink: usize,
    arcs: Vec<Arc>,
}

impl FlowNetwork {
    /// Panics when a terminal is out of range or `source == sink`.
    pub fn new(nodes: usize, source: usize, sink: usize) -> Self {
        assert!(source < nodes && sink < nodes, "terminal out of range");
        assert_ne!(source, sink, "source and sink must differ");
        FlowNetwork {
            nodes,
            source,
            sink,
            arcs: Vec::new(),
        }
    }

    /// Adds `from → to`. Negative capacities are clamped to zero and values
    /// above [`INFINITE`] saturate.
    pub fn add_arc(&mut self, from: usize, to: usize, capacity: i64) {
        assert!(from < self.nodes && to < self.nodes, "arc endpoint out of range");
        self.arcs.push(Arc {
            from,
            to,
            capacity: capacity.clamp(0, INFINITE),
        });
    }

    pub fn node_count(&self) -> usize {
        self.nodes
    }

    pub fn source(&self) -> usize {
        self.source
    }

    pub fn sink(&self) -> usize {
        self.sink
    }

    pub fn arcs(&self) -> &[Arc] {
        &self.arcs
    }

    /// Total capacity of arcs leaving the source side of `source_side`.
    pub fn cut_capacity(&self, source_side: &[bool]) -> i64 {
        self.arcs
            .iter()
            .filter(|a| source_side[a.from] && !source_side[a.to])
            .fold(0i64, |acc, a| acc.saturating_add(a.capacity))
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MaxFlowResult {
    pub value: i64,
    /// `true` for nodes on the source side of a minimum cut.
    pub source_side: Vec<bool>,
}

/// Residual graph in compressed adjacency form; arc `e` and `e ^ 1` are twins.
struct Residual {
    head: Vec<usize>,
    to: Vec<usize>,
    cap: Vec<i64>,
    start: Vec<usize>,
    order: Vec<usize>,
}

impl Residual {
    fn build(net: &FlowNetwork) -> Self {
        let m = net.arcs.len();
        let mut head = Vec::with_capacity(2 * m);
        let mut to = Vec::with_capacity(2 * m);
        let mut cap = Vec::with_capacity(2 * m);
        for a in &net.arcs {
            head.push(a.from);
            to.push(a.to);
            cap.push(a.capacity);
            head.push(a.to);
            to.push(a.from);
            cap.push(0);
        }
        let mut start = vec![0usize; net.nodes + 1];
        for &h in &head {
            start[h + 1] += 1;
        }
        for i in 0..net.nodes {
            start[i + 1] += start[i];
        }
        let mut fill = start.clone();
        let mut order = vec![0usize; head.len()];
        for (e, &h) in head.iter().enumerate() {
            order[fill[h]] = e;
            fill[h] += 1;
        }
        Residual {
            head,
            to,
            cap,
            start,
            order,
        }
    }

    fn levels(&self, s: usize, level: &mut [i32]) {
        level.fill(-1);
        level[s] = 0;
        let mut queue = VecDeque::from([s]);
        while let Some(v) = queue.pop_front() {
            for &e in &self.order[self.start[v]..self.start[v + 1]] {
                let w = self.to[e];
                if self.cap[e] > 0 && level[w] < 0 {
                    level[w] = level[v] + 1;
                    queue.push_back(w);
                }
            }
        }
    }

    fn blocking_flow(&mut self, s: usize, t: usize, level: &mut [i32], next: &mut [usize]) -> i64 {
        let mut total = 0i64;
        let mut path: Vec<usize> = Vec::new();
        let mut v = s;
        loop {
            if v == t {
                let push = path.iter().map(|&e| self.cap[e]).min().unwrap_or(0);
                for &e in &path {
                    self.cap[e] -= push;
                    self.cap[e ^ 1] += push;
                }
                total = total.saturating_add(push);
                // restart from the tail of the first saturated arc
                let cut = path.iter().position(|&e| self.cap[e] == 0).unwrap_or(0);
                path.truncate(cut);
                v = path.last().map_or(s, |&e| self.to[e]);
                continue;
            }
            let end = self.start[v + 1];
            let mut advanced = false;
            while next[v] < end {
                let e = self.order[next[v]];
                let w = self.to[e];
                if self.cap[e] > 0 && level[w] == level[v] + 1 {
                    path.push(e);
                    v = w;
                    advanced = true;
                    break;
                }
                next[v] += 1;
            }
            if advanced {
                continue;
            }
            if v == s {
                return total;
            }
            // dead end: prune the node and retreat
            level[v] = -1;
            let e = path.pop().expect("non-source node is reached by an arc");
            v = self.head[e];
            next[v] += 1;
        }
    }
}

/// Maximum `source → sink` flow and the source side of a minimum cut
/// (nodes reachable from the source in the final residual graph).
pub fn max_flow(net: &FlowNetwork) -> MaxFlowResult {
    let mut res = Residual::build(net);
    let (s, t) = (net.source, net.sink);
    let mut level = vec![-1i32; net.nodes];
    let mut value = 0i64;
    loop {
        res.levels(s, &mut level);
        if level[t] < 0 {
            break;
        }
        let mut next: Vec<usize> = res.start[..net.nodes].to_vec();
        value = value.saturating_add(res.blocking_flow(s, t, &mut level, &mut next));
    }
    res.levels(s, &mut level);
    MaxFlowResult {
        value,
        source_side: level.iter().map(|&l| l >= 0).collect(),
    }
}
