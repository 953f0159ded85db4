//! Network models and agent-based simulators.
//!
//! A network is an undirected connected graph whose nodes are entry/exit
//! points, intersections, or a dead-end tail. Agents walk the graph with
//! synchronous per-tick movement: at each node the backward direction is
//! removed from the turning options and the remaining probabilities are
//! renormalized. Arrival at an entry/exit node increments that node's counter
//! and the agent respawns (fork: at the tail; city model: at an entry node
//! drawn proportionally to observed entry counts) at the end of the same tick,
//! moving out on the next one. Spawn ticks never increment counters.

use std::collections::HashMap;

use rand::Rng;
use rand_distr::Distribution;

use crate::error::{AbcError, Result};
use crate::params::{ParamBlock, ParamLayout};
use crate::summaries::SummaryVector;

/// Role of a node in the walk dynamics.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NodeRole {
    /// Counter-equipped boundary node: arrivals are recorded and respawned.
    EntryExit,
    /// Interior node, optionally carrying a turning-probability simplex.
    Intersection,
    /// Dead-end interior node (no counter); walkers bounce back.
    Tail,
}

impl NodeRole {
    pub fn parse(text: &str) -> Result<Self> {
        match text.trim().to_ascii_lowercase().as_str() {
            "entry_exit" => Ok(NodeRole::EntryExit),
            "intersection" => Ok(NodeRole::Intersection),
            "tail" => Ok(NodeRole::Tail),
            other => Err(AbcError::Config(format!("unknown node role `{other}`"))),
        }
    }
}

impl std::fmt::Display for NodeRole {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            NodeRole::EntryExit => "entry_exit",
            NodeRole::Intersection => "intersection",
            NodeRole::Tail => "tail",
        })
    }
}

/// Undirected network with node roles and named counters.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkModel {
    roles: Vec<NodeRole>,
    adj: Vec<Vec<usize>>,
    /// Counter bindings in declaration order: (name, node id).
    counters: Vec<(String, usize)>,
}

impl NetworkModel {
    pub fn new(
        roles: Vec<NodeRole>,
        edges: &[(usize, usize)],
        counters: Vec<(String, usize)>,
    ) -> Result<Self> {
        let n = roles.len();
        if n < 2 {
            return Err(AbcError::Shape("network needs at least 2 nodes".into()));
        }
        let mut adj = vec![Vec::new(); n];
        for &(a, b) in edges {
            if a >= n || b >= n {
                return Err(AbcError::Shape(format!(
                    "edge ({a}, {b}) references a node outside 0..{n}"
                )));
            }
            if a == b {
                return Err(AbcError::Shape(format!("self-loop at node {a}")));
            }
            if adj[a].contains(&b) {
                return Err(AbcError::Shape(format!("duplicate edge ({a}, {b})")));
            }
            adj[a].push(b);
            adj[b].push(a);
        }
        for row in &mut adj {
            row.sort_unstable();
        }
        // Connectivity via breadth-first search from node 0.
        let mut seen = vec![false; n];
        let mut queue = vec![0usize];
        seen[0] = true;
        while let Some(v) = queue.pop() {
            for &w in &adj[v] {
                if !seen[w] {
                    seen[w] = true;
                    queue.push(w);
                }
            }
        }
        if seen.iter().any(|s| !s) {
            return Err(AbcError::Shape("network graph is not connected".into()));
        }
        for (i, r) in roles.iter().enumerate() {
            if matches!(r, NodeRole::EntryExit | NodeRole::Tail) && adj[i].is_empty() {
                return Err(AbcError::Shape(format!("node {i} has degree 0")));
            }
        }
        for (name, node) in &counters {
            if *node >= n {
                return Err(AbcError::Shape(format!(
                    "counter `{name}` bound to unknown node {node}"
                )));
            }
            if roles[*node] != NodeRole::EntryExit {
                return Err(AbcError::Shape(format!(
                    "counter `{name}` bound to non-entry node {node}"
                )));
            }
        }
        Ok(NetworkModel { roles, adj, counters })
    }

    pub fn node_count(&self) -> usize {
        self.roles.len()
    }

    pub fn edge_count(&self) -> usize {
        self.adj.iter().map(|r| r.len()).sum::<usize>() / 2
    }

    pub fn role(&self, node: usize) -> NodeRole {
        self.roles[node]
    }

    /// Neighbors of `node` in ascending id order.
    pub fn neighbors(&self, node: usize) -> &[usize] {
        &self.adj[node]
    }

    /// Entry/exit node ids in ascending order.
    pub fn entry_nodes(&self) -> Vec<usize> {
        (0..self.roles.len())
            .filter(|&i| self.roles[i] == NodeRole::EntryExit)
            .collect()
    }

    pub fn intersection_nodes(&self) -> Vec<usize> {
        (0..self.roles.len())
            .filter(|&i| self.roles[i] == NodeRole::Intersection)
            .collect()
    }

    pub fn counters(&self) -> &[(String, usize)] {
        &self.counters
    }

    /// Parse a network definition file:
    ///
    /// ```text
    /// # comment
    /// node 0 entry_exit
    /// node 3 intersection
    /// edge 3 0
    /// counter TA 0
    /// ```
    ///
    /// Node ids must form a contiguous 0..n range.
    pub fn parse(text: &str) -> Result<Self> {
        let mut roles: Vec<(usize, NodeRole)> = Vec::new();
        let mut edges: Vec<(usize, usize)> = Vec::new();
        let mut counters: Vec<(String, usize)> = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let mut parts = content.split_whitespace();
            let directive = parts.next().unwrap();
            let rest: Vec<&str> = parts.collect();
            let parse_id = |s: &str| -> Result<usize> {
                s.parse::<usize>().map_err(|_| AbcError::Parse {
                    line,
                    msg: format!("invalid node id `{s}`"),
                })
            };
            match directive {
                "node" => {
                    if rest.len() != 2 {
                        return Err(AbcError::Parse {
                            line,
                            msg: "expected `node <id> <role>`".into(),
                        });
                    }
                    let id = parse_id(rest[0])?;
                    let role = NodeRole::parse(rest[1]).map_err(|e| AbcError::Parse {
                        line,
                        msg: e.to_string(),
                    })?;
                    if roles.iter().any(|(i, _)| *i == id) {
                        return Err(AbcError::Parse {
                            line,
                            msg: format!("duplicate node {id}"),
                        });
                    }
                    roles.push((id, role));
                }
                "edge" => {
                    if rest.len() != 2 {
                        return Err(AbcError::Parse {
                            line,
                            msg: "expected `edge <a> <b>`".into(),
                        });
                    }
                    edges.push((parse_id(rest[0])?, parse_id(rest[1])?));
                }
                "counter" => {
                    if rest.len() != 2 {
                        return Err(AbcError::Parse {
                            line,
                            msg: "expected `counter <name> <node>`".into(),
                        });
                    }
                    counters.push((rest[0].to_string(), parse_id(rest[1])?));
                }
                other => {
                    return Err(AbcError::Parse {
                        line,
                        msg: format!("unknown directive `{other}`"),
                    });
                }
            }
        }
        let n = roles.len();
        let mut role_vec = vec![None; n];
        for (id, role) in roles {
            if id >= n {
                return Err(AbcError::Config(format!(
                    "node ids must form a contiguous 0..{n} range, found {id}"
                )));
            }
            role_vec[id] = Some(role);
        }
        let roles: Vec<NodeRole> = role_vec
            .into_iter()
            .collect::<Option<_>>()
            .ok_or_else(|| AbcError::Config("node ids must form a contiguous range".into()))?;
        NetworkModel::new(roles, &edges, counters)
    }
}

/// Where agents are placed at tick 0 (previous node unset).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StartRule {
    AllAtNode(usize),
    EntryWeighted,
}

/// Where an agent reappears after being counted at an entry/exit node.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RespawnRule {
    AtNode(usize),
    EntryWeighted,
}

/// A single walk configuration over a network.
pub struct WalkPlan<'a> {
    pub model: &'a NetworkModel,
    /// Turning simplex per intersection node, aligned with its ascending
    /// neighbor list. Nodes without an entry choose uniformly.
    pub turning: &'a HashMap<usize, Vec<f64>>,
    /// Relative weights over the ascending entry-node list; need not be
    /// normalized. Used by the `EntryWeighted` rules.
    pub entry_weights: &'a [f64],
    pub start: StartRule,
    pub respawn: RespawnRule,
    pub n_peds: usize,
    pub ticks: usize,
}

/// Restricted turning distribution at `node` for an agent that arrived from
/// `previous`: backward direction removed, zero-mass options dropped, rest
/// renormalized. Empty result means the walker bounces back.
pub fn restricted_options(
    model: &NetworkModel,
    turning: &HashMap<usize, Vec<f64>>,
    node: usize,
    previous: Option<usize>,
) -> Vec<(usize, f64)> {
    let nbrs = model.neighbors(node);
    let weights = turning.get(&node);
    let mut opts: Vec<(usize, f64)> = Vec::with_capacity(nbrs.len());
    let mut total = 0.0;
    for (i, &nb) in nbrs.iter().enumerate() {
        if previous == Some(nb) {
            continue;
        }
        let w = weights.map_or(1.0, |ws| ws[i]);
        if w > 0.0 {
            opts.push((nb, w));
            total += w;
        }
    }
    for o in &mut opts {
        o.1 /= total;
    }
    opts
}

fn draw_categorical<R: Rng + ?Sized>(options: &[(usize, f64)], rng: &mut R) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for (node, p) in options {
        acc += p;
        if u < acc {
            return *node;
        }
    }
    options.last().expect("non-empty options").0
}

/// Run the synchronous walker and return exit counts per entry/exit node in
/// ascending node-id order.
pub fn run_walk<R: Rng + ?Sized>(plan: &WalkPlan, rng: &mut R) -> Result<Vec<u64>> {
    let model = plan.model;
    let entry_nodes = model.entry_nodes();
    if entry_nodes.is_empty() {
        return Err(AbcError::Shape("network has no entry/exit nodes".into()));
    }
    let mut entry_index = vec![usize::MAX; model.node_count()];
    for (i, &e) in entry_nodes.iter().enumerate() {
        entry_index[e] = i;
    }
    // Validate turning parameters against the topology.
    for (node, simplex) in plan.turning {
        if *node >= model.node_count() || model.role(*node) != NodeRole::Intersection {
            return Err(AbcError::Shape(format!(
                "turning parameters bound to non-intersection node {node}"
            )));
        }
        let deg = model.neighbors(*node).len();
        if simplex.len() != deg {
            return Err(AbcError::Shape(format!(
                "turning simplex at node {node} has {} components but degree is {deg}",
                simplex.len()
            )));
        }
        let sum: f64 = simplex.iter().sum();
        if (sum - 1.0).abs() > 1e-9 || simplex.iter().any(|w| *w < 0.0) {
            return Err(AbcError::Shape(format!(
                "turning simplex at node {node} is not a probability vector"
            )));
        }
    }
    if plan.entry_weights.len() != entry_nodes.len() {
        return Err(AbcError::Shape(format!(
            "{} entry weights for {} entry nodes",
            plan.entry_weights.len(),
            entry_nodes.len()
        )));
    }
    let weight_total: f64 = plan.entry_weights.iter().sum();
    if plan.entry_weights.iter().any(|w| *w <= 0.0) || weight_total <= 0.0 {
        return Err(AbcError::Shape("entry weights must be positive".into()));
    }
    let entry_probs: Vec<f64> = plan
        .entry_weights
        .iter()
        .map(|w| w / weight_total)
        .collect();
    let entry_options: Vec<(usize, f64)> = entry_nodes
        .iter()
        .copied()
        .zip(entry_probs.iter().copied())
        .collect();

    if let StartRule::AllAtNode(s) = plan.start {
        if s >= model.node_count() {
            return Err(AbcError::Shape(format!("start node {s} out of range")));
        }
    }
    if let RespawnRule::AtNode(s) = plan.respawn {
        if s >= model.node_count() {
            return Err(AbcError::Shape(format!("respawn node {s} out of range")));
        }
    }

    let mut counts = vec![0u64; entry_nodes.len()];
    // Agent state: (current node, previous node).
    let mut agents: Vec<(usize, Option<usize>)> = (0..plan.n_peds)
        .map(|_| match plan.start {
            StartRule::AllAtNode(s) => (s, None),
            StartRule::EntryWeighted => (draw_categorical(&entry_options, rng), None),
        })
        .collect();

    for _tick in 0..plan.ticks {
        for agent in &mut agents {
            let (node, previous) = *agent;
            let options = restricted_options(model, plan.turning, node, previous);
            let next = if options.is_empty() {
                match previous {
                    // Dead end: bounce back the way we came.
                    Some(p) => p,
                    // Isolated zero-mass start; pick uniformly among neighbors.
                    None => {
                        let nbrs = model.neighbors(node);
                        let u: f64 = rng.gen();
                        nbrs[((u * nbrs.len() as f64) as usize).min(nbrs.len() - 1)]
                    }
                }
            } else {
                draw_categorical(&options, rng)
            };
            if model.role(next) == NodeRole::EntryExit {
                counts[entry_index[next]] += 1;
                let spawn = match plan.respawn {
                    RespawnRule::AtNode(s) => s,
                    RespawnRule::EntryWeighted => draw_categorical(&entry_options, rng),
                };
                *agent = (spawn, None);
            } else {
                *agent = (next, Some(node));
            }
        }
        debug_assert_eq!(agents.len(), plan.n_peds);
    }
    Ok(counts)
}

/// Seven-node fork: tail 6 feeding intersections 5 and 3, leaves 0, 1, 2, 4.
pub fn build_fork_network() -> NetworkModel {
    let roles = vec![
        NodeRole::EntryExit,    // 0
        NodeRole::EntryExit,    // 1
        NodeRole::EntryExit,    // 2
        NodeRole::Intersection, // 3
        NodeRole::EntryExit,    // 4
        NodeRole::Intersection, // 5
        NodeRole::Tail,         // 6
    ];
    let edges = [(6, 5), (5, 3), (5, 1), (3, 0), (3, 2), (3, 4)];
    let counters = vec![("node0".to_string(), 0)];
    NetworkModel::new(roles, &edges, counters).expect("fork network is valid")
}

/// Six-node city-center network: intersections 3 and 4, entry/exit nodes
/// 0, 1, 2, 5, with counters AW→5, TR→2, TA→0, CPS→1.
pub fn build_cbd_network() -> NetworkModel {
    let roles = vec![
        NodeRole::EntryExit,    // 0
        NodeRole::EntryExit,    // 1
        NodeRole::EntryExit,    // 2
        NodeRole::Intersection, // 3
        NodeRole::Intersection, // 4
        NodeRole::EntryExit,    // 5
    ];
    let edges = [(3, 0), (3, 2), (3, 4), (4, 1), (4, 5)];
    let counters = vec![
        ("AW".to_string(), 5),
        ("TR".to_string(), 2),
        ("TA".to_string(), 0),
        ("CPS".to_string(), 1),
    ];
    NetworkModel::new(roles, &edges, counters).expect("cbd network is valid")
}

/// Draw `n` Normal(mean, sd) samples.
pub fn simulate_gaussian<R: Rng + ?Sized>(
    mean: f64,
    sd: f64,
    n: usize,
    rng: &mut R,
) -> Result<Vec<f64>> {
    if !(sd > 0.0) || !sd.is_finite() {
        return Err(AbcError::Domain(format!("gaussian sd must be positive, got {sd}")));
    }
    if n == 0 {
        return Err(AbcError::Domain("gaussian sample size must be >= 1".into()));
    }
    let d = rand_distr::Normal::new(mean, sd).expect("validated");
    Ok((0..n).map(|_| d.sample(rng)).collect())
}

/// Walk the fork network and return the count at node 0. At node 3 arriving
/// from node 5 the next node is 0 with probability `p_to_node0` and nodes 2, 4
/// with probability (1 - p)/2 each; all other choices are uniform over
/// non-backward neighbors. Agents start at the tail and respawn there.
pub fn simulate_fork<R: Rng + ?Sized>(
    p_to_node0: f64,
    n_peds: usize,
    ticks: usize,
    rng: &mut R,
) -> Result<u64> {
    if !(0.0..=1.0).contains(&p_to_node0) || p_to_node0.is_nan() {
        return Err(AbcError::Domain(format!(
            "fork branch probability must lie in [0, 1], got {p_to_node0}"
        )));
    }
    if ticks == 0 {
        return Err(AbcError::Domain("ticks must be >= 1".into()));
    }
    let model = build_fork_network();
    // Node 3's ascending neighbors are (0, 2, 4, 5); the simplex below yields
    // the (p, (1-p)/2, (1-p)/2) split once the backward node 5 is excluded.
    let half = (1.0 - p_to_node0) / 2.0;
    let turning: HashMap<usize, Vec<f64>> =
        HashMap::from([(3, vec![p_to_node0, half, half, 0.0])]);
    let entry_weights = vec![1.0; 4];
    let plan = WalkPlan {
        model: &model,
        turning: &turning,
        entry_weights: &entry_weights,
        start: StartRule::AllAtNode(6),
        respawn: RespawnRule::AtNode(6),
        n_peds,
        ticks,
    };
    let counts = run_walk(&plan, rng)?;
    Ok(counts[0])
}

/// Walk the city-center network and return counts at nodes (0, 1, 2, 5).
///
/// `theta1` is the turning simplex at node 4 over neighbors (1, 3, 5);
/// `theta2` at node 3 over neighbors (0, 2, 4). Initial placement and respawn
/// both draw entry nodes proportionally to `entry_weights` over (0, 1, 2, 5).
pub fn simulate_cbd<R: Rng + ?Sized>(
    theta1: &[f64],
    theta2: &[f64],
    n_peds: usize,
    ticks: usize,
    entry_weights: &[f64],
    rng: &mut R,
) -> Result<[u64; 4]> {
    if ticks == 0 {
        return Err(AbcError::Domain("ticks must be >= 1".into()));
    }
    for (name, t) in [("theta1", theta1), ("theta2", theta2)] {
        if t.len() != 3 {
            return Err(AbcError::Shape(format!(
                "{name} must have 3 components, got {}",
                t.len()
            )));
        }
        let sum: f64 = t.iter().sum();
        if (sum - 1.0).abs() > 1e-9 || t.iter().any(|x| *x < 0.0) {
            return Err(AbcError::Shape(format!("{name} is not a probability simplex")));
        }
    }
    let model = build_cbd_network();
    let turning: HashMap<usize, Vec<f64>> =
        HashMap::from([(4, theta1.to_vec()), (3, theta2.to_vec())]);
    let plan = WalkPlan {
        model: &model,
        turning: &turning,
        entry_weights,
        start: StartRule::EntryWeighted,
        respawn: RespawnRule::EntryWeighted,
        n_peds,
        ticks,
    };
    let counts = run_walk(&plan, rng)?;
    Ok([counts[0], counts[1], counts[2], counts[3]])
}

/// Summary statistic applied to the Gaussian sampler's output.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GaussianSummary {
    /// Sample mean only.
    Mean,
    /// Sample mean and sample standard deviation (n - 1 denominator).
    MeanSd,
}

impl GaussianSummary {
    pub fn parse(text: &str) -> Result<Self> {
        match text.trim().to_ascii_lowercase().as_str() {
            "mean" => Ok(GaussianSummary::Mean),
            "mean_sd" => Ok(GaussianSummary::MeanSd),
            other => Err(AbcError::Config(format!("unknown gaussian summary `{other}`"))),
        }
    }
}

impl std::fmt::Display for GaussianSummary {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            GaussianSummary::Mean => "mean",
            GaussianSummary::MeanSd => "mean_sd",
        })
    }
}

/// The registered simulator behind an experiment.
#[derive(Debug, Clone)]
pub enum ModelKind {
    Gaussian {
        n_samples: usize,
        summary: GaussianSummary,
    },
    Fork {
        ticks: usize,
    },
    Cbd {
        ticks: usize,
        entry_weights: Vec<f64>,
    },
    /// A user-supplied network: every intersection gets a turning simplex
    /// parameter named `theta<node>`.
    Network {
        model: NetworkModel,
        ticks: usize,
        entry_weights: Vec<f64>,
        start: StartRule,
        respawn: RespawnRule,
    },
}

/// A simulator plus the full parameter layout it consumes (inferred and fixed
/// parameters alike, in flat storage order).
#[derive(Debug, Clone)]
pub struct Simulator {
    kind: ModelKind,
    layout: ParamLayout,
}

impl Simulator {
    pub fn new(kind: ModelKind) -> Result<Self> {
        let layout = match &kind {
            ModelKind::Gaussian { .. } => ParamLayout::new(vec![
                ParamBlock::Scalar { name: "mu".into() },
                ParamBlock::Scalar { name: "sigma".into() },
            ])?,
            ModelKind::Fork { .. } => ParamLayout::new(vec![
                ParamBlock::Scalar { name: "p".into() },
                ParamBlock::Scalar { name: "n_peds".into() },
            ])?,
            ModelKind::Cbd { entry_weights, .. } => {
                if entry_weights.len() != 4 {
                    return Err(AbcError::Shape(format!(
                        "cbd model needs 4 entry weights, got {}",
                        entry_weights.len()
                    )));
                }
                ParamLayout::new(vec![
                    ParamBlock::Simplex {
                        name: "theta1".into(),
                        components: vec![
                            "theta1_1".into(),
                            "theta1_3".into(),
                            "theta1_5".into(),
                        ],
                    },
                    ParamBlock::Simplex {
                        name: "theta2".into(),
                        components: vec![
                            "theta2_0".into(),
                            "theta2_2".into(),
                            "theta2_4".into(),
                        ],
                    },
                    ParamBlock::Scalar { name: "n_peds".into() },
                ])?
            }
            ModelKind::Network { model, entry_weights, .. } => {
                if entry_weights.len() != model.entry_nodes().len() {
                    return Err(AbcError::Shape(format!(
                        "{} entry weights for {} entry nodes",
                        entry_weights.len(),
                        model.entry_nodes().len()
                    )));
                }
                let mut blocks = Vec::new();
                for node in model.intersection_nodes() {
                    blocks.push(ParamBlock::Simplex {
                        name: format!("theta{node}"),
                        components: model
                            .neighbors(node)
                            .iter()
                            .map(|nb| format!("theta{node}_{nb}"))
                            .collect(),
                    });
                }
                blocks.push(ParamBlock::Scalar { name: "n_peds".into() });
                ParamLayout::new(blocks)?
            }
        };
        Ok(Simulator { kind, layout })
    }

    /// Look up a built-in model by id: `gaussian`, `fork`, or `cbd`.
    pub fn builtin(
        model_id: &str,
        n_samples: usize,
        summary: GaussianSummary,
        ticks: usize,
        entry_weights: Vec<f64>,
    ) -> Result<Self> {
        match model_id.to_ascii_lowercase().as_str() {
            "gaussian" => Simulator::new(ModelKind::Gaussian { n_samples, summary }),
            "fork" => Simulator::new(ModelKind::Fork { ticks }),
            "cbd" => Simulator::new(ModelKind::Cbd { ticks, entry_weights }),
            other => Err(AbcError::UnknownName(format!("unknown model `{other}`"))),
        }
    }

    pub fn kind(&self) -> &ModelKind {
        &self.kind
    }

    /// Full parameter layout consumed by [`Simulator::simulate`].
    pub fn layout(&self) -> &ParamLayout {
        &self.layout
    }

    /// Names of the summary statistics this simulator produces, in order.
    pub fn summary_names(&self) -> Vec<String> {
        match &self.kind {
            ModelKind::Gaussian { summary, .. } => match summary {
                GaussianSummary::Mean => vec!["mean".into()],
                GaussianSummary::MeanSd => vec!["mean".into(), "sd".into()],
            },
            ModelKind::Fork { .. } => vec!["node0".into()],
            ModelKind::Cbd { .. } => build_cbd_network()
                .counters()
                .iter()
                .map(|(name, _)| name.clone())
                .collect(),
            ModelKind::Network { model, .. } => {
                model.counters().iter().map(|(n, _)| n.clone()).collect()
            }
        }
    }

    /// Run the simulator once on a flat parameter vector (layout order) and
    /// summarize the output. Pure in (params, rng stream).
    pub fn simulate<R: Rng + ?Sized>(&self, flat: &[f64], rng: &mut R) -> Result<SummaryVector> {
        if flat.len() != self.layout.flat_len() {
            return Err(AbcError::Shape(format!(
                "parameter vector length {} but simulator expects {}",
                flat.len(),
                self.layout.flat_len()
            )));
        }
        match &self.kind {
            ModelKind::Gaussian { n_samples, summary } => {
                let (mu, sigma) = (flat[0], flat[1]);
                let samples = simulate_gaussian(mu, sigma, *n_samples, rng)?;
                let n = samples.len() as f64;
                let mean = samples.iter().sum::<f64>() / n;
                match summary {
                    GaussianSummary::Mean => {
                        SummaryVector::new(vec!["mean".into()], vec![mean])
                    }
                    GaussianSummary::MeanSd => {
                        let var = samples.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>()
                            / (n - 1.0);
                        SummaryVector::new(
                            vec!["mean".into(), "sd".into()],
                            vec![mean, var.sqrt()],
                        )
                    }
                }
            }
            ModelKind::Fork { ticks } => {
                let p = flat[0];
                let n_peds = round_count("n_peds", flat[1])?;
                let count = simulate_fork(p, n_peds, *ticks, rng)?;
                SummaryVector::new(vec!["node0".into()], vec![count as f64])
            }
            ModelKind::Cbd { ticks, entry_weights } => {
                let theta1 = &flat[0..3];
                let theta2 = &flat[3..6];
                let n_peds = round_count("n_peds", flat[6])?;
                let counts = simulate_cbd(theta1, theta2, n_peds, *ticks, entry_weights, rng)?;
                // Map ascending-node counts (0,1,2,5) onto counter order.
                let model = build_cbd_network();
                let entry_nodes = model.entry_nodes();
                let values = model
                    .counters()
                    .iter()
                    .map(|(_, node)| {
                        let idx = entry_nodes.iter().position(|e| e == node).unwrap();
                        counts[idx] as f64
                    })
                    .collect();
                SummaryVector::new(self.summary_names(), values)
            }
            ModelKind::Network { model, ticks, entry_weights, start, respawn } => {
                let intersections = model.intersection_nodes();
                let mut turning = HashMap::new();
                let mut off = 0;
                for node in intersections {
                    let deg = model.neighbors(node).len();
                    turning.insert(node, flat[off..off + deg].to_vec());
                    off += deg;
                }
                let n_peds = round_count("n_peds", flat[off])?;
                let plan = WalkPlan {
                    model,
                    turning: &turning,
                    entry_weights,
                    start: *start,
                    respawn: *respawn,
                    n_peds,
                    ticks: *ticks,
                };
                let counts = run_walk(&plan, rng)?;
                let entry_nodes = model.entry_nodes();
                let values = model
                    .counters()
                    .iter()
                    .map(|(_, node)| {
                        let idx = entry_nodes.iter().position(|e| e == node).unwrap();
                        counts[idx] as f64
                    })
                    .collect();
                SummaryVector::new(self.summary_names(), values)
            }
        }
    }
}

/// Round a continuous particle coordinate to the nonnegative integer the
/// simulator consumes.
fn round_count(name: &str, value: f64) -> Result<usize> {
    if !value.is_finite() {
        return Err(AbcError::Domain(format!("{name} must be finite, got {value}")));
    }
    let rounded = value.round();
    if rounded < 0.0 {
        return Err(AbcError::Domain(format!("{name} must be nonnegative, got {value}")));
    }
    Ok(rounded as usize)
}
