use crate::error::{Result, SimError};
use crate::ids::NodeId;
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet, VecDeque};

#[derive(Copy, Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Host,
    Switch,
    Router,
    Gateway,
    EmailServer,
    LymphNodeHost,
    CntsHost,
}

impl Role {
    /// Hubs, switches and routers, plus the designated protection-plane hosts.
    pub fn is_equipment(self) -> bool {
        matches!(
            self,
            Role::Switch | Role::Router | Role::LymphNodeHost | Role::CntsHost
        )
    }

    pub fn is_host_like(self) -> bool {
        matches!(self, Role::Host | Role::EmailServer | Role::Gateway)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NodeSpec {
    pub id: NodeId,
    #[serde(default = "default_role")]
    pub role: Role,
}

fn default_role() -> Role {
    Role::Host
}

/// Raw topology description as it appears in a scenario file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TopologySpec {
    Explicit {
        nodes: Vec<NodeSpec>,
        edges: Vec<(NodeId, NodeId)>,
    },
    /// Random tree plus extra chords. Node 0 is the gateway; the `equipment`
    /// highest-degree remaining nodes become switches/routers; the next one
    /// is the email server.
    Generated {
        nodes: u32,
        extra_edges: u32,
        seed: u64,
        #[serde(default)]
        equipment: u32,
    },
}

/// Validated, connected network graph with a precomputed routing table.
#[derive(Clone, Debug)]
pub struct Topology {
    ids: Vec<NodeId>,
    index: BTreeMap<NodeId, usize>,
    roles: Vec<Role>,
    adjacency: Vec<Vec<usize>>,
    edge_count: usize,
    // dist[dst][u]
    dist: Vec<Vec<u32>>,
}

const UNREACHABLE: u32 = u32::MAX;

impl Topology {
    pub fn build(nodes: &[NodeSpec], edges: &[(NodeId, NodeId)]) -> Result<Self> {
        let mut index = BTreeMap::new();
        for n in nodes {
            if index.insert(n.id, 0).is_some() {
                return Err(SimError::DuplicateNodeId(n.id));
            }
        }
        let ids: Vec<NodeId> = index.keys().copied().collect();
        for (i, id) in ids.iter().enumerate() {
            index.insert(*id, i);
        }
        let mut roles = vec![Role::Host; ids.len()];
        for n in nodes {
            roles[index[&n.id]] = n.role;
        }
        let mut adj: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); ids.len()];
        for &(a, b) in edges {
            let (Some(&ia), Some(&ib)) = (index.get(&a), index.get(&b)) else {
                return Err(SimError::DanglingEdge(a, b));
            };
            if ia != ib {
                adj[ia].insert(ib);
                adj[ib].insert(ia);
            }
        }
        let adjacency: Vec<Vec<usize>> = adj.into_iter().map(|s| s.into_iter().collect()).collect();
        let edge_count = adjacency.iter().map(Vec::len).sum::<usize>() / 2;
        let mut topo = Topology {
            ids,
            index,
            roles,
            adjacency,
            edge_count,
            dist: Vec::new(),
        };
        if topo.ids.is_empty() {
            return Err(SimError::DisconnectedGraph);
        }
        topo.dist = (0..topo.ids.len()).map(|d| topo.bfs_from(d)).collect();
        if topo.dist[0].iter().any(|&d| d == UNREACHABLE) {
            return Err(SimError::DisconnectedGraph);
        }
        Ok(topo)
    }

    pub fn from_spec(spec: &TopologySpec) -> Result<Self> {
        match spec {
            TopologySpec::Explicit { nodes, edges } => Self::build(nodes, edges),
            TopologySpec::Generated {
                nodes,
                extra_edges,
                seed,
                equipment,
            } => {
                use rand::SeedableRng;
                let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(*seed);
                let edges = random_tree_plus_edges(*nodes, *extra_edges, &mut rng);
                let roles = assign_roles(*nodes, &edges, *equipment);
                let specs: Vec<NodeSpec> = roles
                    .into_iter()
                    .enumerate()
                    .map(|(i, role)| NodeSpec {
                        id: NodeId(i as u32),
                        role,
                    })
                    .collect();
                Self::build(&specs, &edges)
            }
        }
    }

    fn bfs_from(&self, src: usize) -> Vec<u32> {
        let mut dist = vec![UNREACHABLE; self.ids.len()];
        dist[src] = 0;
        let mut q = VecDeque::from([src]);
        while let Some(u) = q.pop_front() {
            for &v in &self.adjacency[u] {
                if dist[v] == UNREACHABLE {
                    dist[v] = dist[u] + 1;
                    q.push_back(v);
                }
            }
        }
        dist
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn edge_count(&self) -> usize {
        self.edge_count
    }

    /// Node ids in ascending order.
    pub fn nodes(&self) -> &[NodeId] {
        &self.ids
    }

    pub fn contains(&self, n: NodeId) -> bool {
        self.index.contains_key(&n)
    }

    pub fn idx(&self, n: NodeId) -> Option<usize> {
        self.index.get(&n).copied()
    }

    pub fn id_at(&self, i: usize) -> NodeId {
        self.ids[i]
    }

    pub fn role(&self, n: NodeId) -> Option<Role> {
        self.idx(n).map(|i| self.roles[i])
    }

    pub fn nodes_with_role(&self, role: Role) -> Vec<NodeId> {
        self.ids
            .iter()
            .zip(&self.roles)
            .filter(|(_, r)| **r == role)
            .map(|(id, _)| *id)
            .collect()
    }

    /// Neighbors in ascending id order.
    pub fn neighbors(&self, n: NodeId) -> Vec<NodeId> {
        match self.idx(n) {
            Some(i) => self.adjacency[i].iter().map(|&j| self.ids[j]).collect(),
            None => Vec::new(),
        }
    }

    pub fn degree(&self, n: NodeId) -> usize {
        self.idx(n).map_or(0, |i| self.adjacency[i].len())
    }

    pub fn edges(&self) -> Vec<(NodeId, NodeId)> {
        let mut out = Vec::with_capacity(self.edge_count);
        for (i, ns) in self.adjacency.iter().enumerate() {
            for &j in ns {
                if i < j {
                    out.push((self.ids[i], self.ids[j]));
                }
            }
        }
        out
    }

    pub fn distance(&self, a: NodeId, b: NodeId) -> Option<u32> {
        let (ia, ib) = (self.idx(a)?, self.idx(b)?);
        let d = self.dist[ib][ia];
        (d != UNREACHABLE).then_some(d)
    }

    /// Next hop from `from` toward `to`: the smallest-id neighbor on a shortest path.
    pub fn next_hop(&self, from: NodeId, to: NodeId) -> Option<NodeId> {
        let (i, t) = (self.idx(from)?, self.idx(to)?);
        if i == t {
            return Some(from);
        }
        let d = self.dist[t][i];
        if d == UNREACHABLE {
            return None;
        }
        self.adjacency[i]
            .iter()
            .find(|&&v| self.dist[t][v] + 1 == d)
            .map(|&v| self.ids[v])
    }

    /// Full deterministic route including both endpoints.
    pub fn route(&self, from: NodeId, to: NodeId) -> Result<Vec<NodeId>> {
        if !self.contains(from) {
            return Err(SimError::UnknownNode(from));
        }
        if !self.contains(to) {
            return Err(SimError::UnknownNode(to));
        }
        let mut path = vec![from];
        let mut cur = from;
        while cur != to {
            cur = self
                .next_hop(cur, to)
                .ok_or(SimError::UnroutablePacket(from, to))?;
            path.push(cur);
        }
        Ok(path)
    }

    /// Nodes within `radius` hops of `center`, ascending.
    pub fn ball(&self, center: NodeId, radius: u32) -> Vec<NodeId> {
        let Some(c) = self.idx(center) else {
            return Vec::new();
        };
        self.ids
            .iter()
            .enumerate()
            .filter(|(i, _)| self.dist[c][*i] <= radius)
            .map(|(_, id)| *id)
            .collect()
    }
}

/// Uniform random recursive tree on `n` nodes plus `extra` distinct chords.
pub fn random_tree_plus_edges<R: Rng>(n: u32, extra: u32, rng: &mut R) -> Vec<(NodeId, NodeId)> {
    let mut edges = Vec::new();
    let mut present = BTreeSet::new();
    for i in 1..n {
        let j = rng.gen_range(0..i);
        edges.push((NodeId(j), NodeId(i)));
        present.insert((j, i));
    }
    let max_edges = n as u64 * (n as u64).saturating_sub(1) / 2;
    let target = (present.len() as u64 + extra as u64).min(max_edges);
    while (present.len() as u64) < target {
        let a = rng.gen_range(0..n);
        let b = rng.gen_range(0..n);
        if a == b {
            continue;
        }
        let key = (a.min(b), a.max(b));
        if present.insert(key) {
            edges.push((NodeId(key.0), NodeId(key.1)));
        }
    }
    edges
}

fn assign_roles(n: u32, edges: &[(NodeId, NodeId)], equipment: u32) -> Vec<Role> {
    let mut roles = vec![Role::Host; n as usize];
    if n == 0 {
        return roles;
    }
    roles[0] = Role::Gateway;
    let mut degree = vec![0usize; n as usize];
    for (a, b) in edges {
        degree[a.0 as usize] += 1;
        degree[b.0 as usize] += 1;
    }
    let mut order: Vec<usize> = (1..n as usize).collect();
    order.sort_by(|&a, &b| degree[b].cmp(&degree[a]).then(a.cmp(&b)));
    let mut it = order.into_iter();
    for k in 0..equipment {
        if let Some(i) = it.next() {
            roles[i] = if k % 2 == 0 { Role::Switch } else { Role::Router };
        }
    }
    // the email server is the lowest-degree remaining node
    if let Some(i) = it.last() {
        roles[i] = Role::EmailServer;
    }
    roles
}
