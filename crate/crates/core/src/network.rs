//! Radial feeder model: buses, lines, tree topology, sector partition and
//! per-unit conversion.
//!
//! The bundled dataset is the standard 33-bus feeder (32 lines, 3715 kW /
//! 2300 kVAR of spot load) with 400 A ampacity on the trunk joining buses
//! 1 through 9 and 200 A everywhere else.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fs::File;
use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Id of the substation bus. Every network must contain it.
pub const SLACK_BUS: u32 = 1;

pub const DEFAULT_BASE_KV: f64 = 11.0;
pub const DEFAULT_BASE_MVA: f64 = 1.0;
/// Base voltage used by most published results for the 33-bus feeder.
pub const CANONICAL_33_BUS_BASE_KV: f64 = 12.66;
pub const DEFAULT_SECTOR_COUNT: u32 = 7;
pub const DEFAULT_RESIDENCES_PER_BUS: u32 = 92;

const IEEE33_BUSES: &str = include_str!("../data/ieee33_buses.csv");
const IEEE33_LINES: &str = include_str!("../data/ieee33_lines.csv");
const IEEE33_SECTORS: &str = include_str!("../data/ieee33_sectors.csv");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bus {
    #[serde(rename = "bus_id")]
    pub id: u32,
    #[serde(rename = "p_kw")]
    pub p_load_kw: f64,
    #[serde(rename = "q_kvar")]
    pub q_load_kvar: f64,
    pub n_residences: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Line {
    #[serde(rename = "from")]
    pub from_bus: u32,
    #[serde(rename = "to")]
    pub to_bus: u32,
    pub r_ohm: f64,
    pub x_ohm: f64,
    pub ampacity_a: f64,
}

/// Parent/child structure of a validated radial network, by bus position.
#[derive(Debug, Clone)]
struct Topology {
    index_of: BTreeMap<u32, usize>,
    parent: Vec<Option<usize>>,
    feeder_line: Vec<Option<usize>>,
    children: Vec<Vec<usize>>,
    /// Breadth-first order from the slack bus.
    order: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct RadialNetwork {
    pub buses: Vec<Bus>,
    pub lines: Vec<Line>,
    pub base_kv: f64,
    pub base_mva: f64,
    pub v_rated_pu: f64,
    topo: Topology,
}

impl RadialNetwork {
    pub fn new(buses: Vec<Bus>, lines: Vec<Line>, base_kv: f64, base_mva: f64) -> Result<Self> {
        check_base(base_kv, base_mva)?;
        for b in &buses {
            if !(b.p_load_kw.is_finite() && b.p_load_kw >= 0.0)
                || !(b.q_load_kvar.is_finite() && b.q_load_kvar >= 0.0)
            {
                return Err(Error::Schema(format!(
                    "bus {} has a negative or non-finite spot load",
                    b.id
                )));
            }
        }
        for l in &lines {
            let ok = l.r_ohm.is_finite()
                && l.x_ohm.is_finite()
                && l.r_ohm >= 0.0
                && l.x_ohm >= 0.0
                && (l.r_ohm > 0.0 || l.x_ohm > 0.0);
            if !ok {
                return Err(Error::Schema(format!(
                    "line {}-{} needs non-negative R and X, not both zero",
                    l.from_bus, l.to_bus
                )));
            }
            if !(l.ampacity_a.is_finite() && l.ampacity_a > 0.0) {
                return Err(Error::Schema(format!(
                    "line {}-{} has non-positive ampacity",
                    l.from_bus, l.to_bus
                )));
            }
        }
        let topo = Topology::build(&buses, &lines)?;
        Ok(Self {
            buses,
            lines,
            base_kv,
            base_mva,
            v_rated_pu: 1.0,
            topo,
        })
    }

    /// The bundled 33-bus feeder at the default 11 kV / 1 MVA base.
    pub fn ieee33() -> Self {
        Self::ieee33_with_base(DEFAULT_BASE_KV, DEFAULT_BASE_MVA)
            .expect("bundled 33-bus dataset is valid")
    }

    pub fn ieee33_with_base(base_kv: f64, base_mva: f64) -> Result<Self> {
        load_network(
            IEEE33_BUSES.as_bytes(),
            IEEE33_LINES.as_bytes(),
            base_kv,
            base_mva,
        )
    }

    /// Same topology and loads, different voltage/power base.
    pub fn with_base(&self, base_kv: f64, base_mva: f64) -> Result<Self> {
        check_base(base_kv, base_mva)?;
        let mut out = self.clone();
        out.base_kv = base_kv;
        out.base_mva = base_mva;
        Ok(out)
    }

    pub fn bus_count(&self) -> usize {
        self.buses.len()
    }

    pub fn index_of(&self, bus_id: u32) -> Option<usize> {
        self.topo.index_of.get(&bus_id).copied()
    }

    pub fn slack_index(&self) -> usize {
        self.topo.order[0]
    }

    /// Parent bus position of the bus at `idx` (None for the slack).
    pub fn parent(&self, idx: usize) -> Option<usize> {
        self.topo.parent[idx]
    }

    /// Line feeding the bus at `idx` from its parent.
    pub fn feeder_line(&self, idx: usize) -> Option<usize> {
        self.topo.feeder_line[idx]
    }

    pub fn children(&self, idx: usize) -> &[usize] {
        &self.topo.children[idx]
    }

    /// Bus positions in breadth-first order, slack first.
    pub fn bfs_order(&self) -> &[usize] {
        &self.topo.order
    }

    /// Ids of every bus except the slack, in dataset order.
    pub fn load_bus_ids(&self) -> Vec<u32> {
        self.buses
            .iter()
            .map(|b| b.id)
            .filter(|&id| id != SLACK_BUS)
            .collect()
    }

    pub fn z_base_ohm(&self) -> f64 {
        self.base_kv * self.base_kv / self.base_mva
    }

    /// Line current base in amperes, `S_base / (sqrt(3) V_base)`.
    pub fn i_base_a(&self) -> f64 {
        1000.0 * self.base_mva / (3f64.sqrt() * self.base_kv)
    }

    /// Depth-first preorder from the slack; each bus appears exactly once.
    pub fn dfs_order(&self) -> Vec<usize> {
        let mut out = Vec::with_capacity(self.buses.len());
        let mut stack = vec![self.slack_index()];
        while let Some(b) = stack.pop() {
            out.push(b);
            stack.extend(self.children(b).iter().rev());
        }
        out
    }

    pub fn to_per_unit(&self) -> Result<PerUnitNetwork> {
        check_base(self.base_kv, self.base_mva)?;
        let z_base = self.z_base_ohm();
        let s_base_kw = self.base_mva * 1000.0;
        let i_base = self.i_base_a();
        Ok(PerUnitNetwork {
            base_kv: self.base_kv,
            base_mva: self.base_mva,
            buses: self
                .buses
                .iter()
                .map(|b| PerUnitBus {
                    id: b.id,
                    p_pu: b.p_load_kw / s_base_kw,
                    q_pu: b.q_load_kvar / s_base_kw,
                    n_residences: b.n_residences,
                })
                .collect(),
            lines: self
                .lines
                .iter()
                .map(|l| PerUnitLine {
                    from_bus: l.from_bus,
                    to_bus: l.to_bus,
                    r_pu: l.r_ohm / z_base,
                    x_pu: l.x_ohm / z_base,
                    ampacity_pu: l.ampacity_a / i_base,
                })
                .collect(),
        })
    }
}

fn check_base(base_kv: f64, base_mva: f64) -> Result<()> {
    if !(base_kv.is_finite() && base_kv > 0.0) || !(base_mva.is_finite() && base_mva > 0.0) {
        return Err(Error::Config(format!(
            "base voltage and power must be positive (got {base_kv} kV, {base_mva} MVA)"
        )));
    }
    Ok(())
}

impl Topology {
    fn build(buses: &[Bus], lines: &[Line]) -> Result<Self> {
        let mut index_of = BTreeMap::new();
        for (i, b) in buses.iter().enumerate() {
            if index_of.insert(b.id, i).is_some() {
                return Err(Error::Schema(format!("duplicate bus id {}", b.id)));
            }
        }
        let slack = *index_of
            .get(&SLACK_BUS)
            .ok_or_else(|| Error::Schema(format!("bus table has no slack bus (id {SLACK_BUS})")))?;

        let n = buses.len();
        let mut adj: Vec<Vec<(usize, usize)>> = vec![Vec::new(); n];
        for (k, l) in lines.iter().enumerate() {
            let lookup = |id: u32| {
                index_of.get(&id).copied().ok_or_else(|| {
                    Error::Schema(format!(
                        "line {}-{} references unknown bus {id}",
                        l.from_bus, l.to_bus
                    ))
                })
            };
            let (a, b) = (lookup(l.from_bus)?, lookup(l.to_bus)?);
            if a == b {
                return Err(Error::Topology {
                    bus: l.from_bus,
                    reason: "line connects a bus to itself".into(),
                });
            }
            adj[a].push((b, k));
            adj[b].push((a, k));
        }

        let mut parent = vec![None; n];
        let mut feeder_line = vec![None; n];
        let mut children = vec![Vec::new(); n];
        let mut seen = vec![false; n];
        let mut order = Vec::with_capacity(n);
        let mut queue = VecDeque::from([slack]);
        seen[slack] = true;
        while let Some(u) = queue.pop_front() {
            order.push(u);
            for &(v, k) in &adj[u] {
                if feeder_line[u] == Some(k) {
                    continue;
                }
                if seen[v] {
                    return Err(Error::Topology {
                        bus: buses[v].id,
                        reason: "reached twice from the slack; the lines contain a loop".into(),
                    });
                }
                seen[v] = true;
                parent[v] = Some(u);
                feeder_line[v] = Some(k);
                children[u].push(v);
                queue.push_back(v);
            }
        }
        if let Some(v) = (0..n).find(|&v| !seen[v]) {
            return Err(Error::Topology {
                bus: buses[v].id,
                reason: "not reachable from the slack bus".into(),
            });
        }
        debug_assert_eq!(lines.len() + 1, n);

        Ok(Self {
            index_of,
            parent,
            feeder_line,
            children,
            order,
        })
    }
}

/// Reads the bus and line tables and validates the result.
pub fn load_network<B: Read, L: Read>(
    bus_table: B,
    line_table: L,
    base_kv: f64,
    base_mva: f64,
) -> Result<RadialNetwork> {
    let buses: Vec<Bus> = read_records(bus_table, "bus table")?;
    let lines: Vec<Line> = read_records(line_table, "line table")?;
    RadialNetwork::new(buses, lines, base_kv, base_mva)
}

pub fn load_network_files(
    bus_path: &Path,
    line_path: &Path,
    base_kv: f64,
    base_mva: f64,
) -> Result<RadialNetwork> {
    let buses = File::open(bus_path).map_err(|e| Error::io(bus_path, e))?;
    let lines = File::open(line_path).map_err(|e| Error::io(line_path, e))?;
    load_network(buses, lines, base_kv, base_mva)
}

fn read_records<R: Read, T: for<'de> Deserialize<'de>>(src: R, what: &str) -> Result<Vec<T>> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(src);
    rdr.deserialize()
        .collect::<std::result::Result<Vec<T>, _>>()
        .map_err(|e| Error::Schema(format!("{what}: {e}")))
}

#[derive(Debug, Clone, PartialEq)]
pub struct PerUnitBus {
    pub id: u32,
    pub p_pu: f64,
    pub q_pu: f64,
    pub n_residences: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PerUnitLine {
    pub from_bus: u32,
    pub to_bus: u32,
    pub r_pu: f64,
    pub x_pu: f64,
    pub ampacity_pu: f64,
}

/// Per-unit view of a network. Impedances are divided by `kV^2 / MVA`,
/// powers by the MVA base.
#[derive(Debug, Clone, PartialEq)]
pub struct PerUnitNetwork {
    pub base_kv: f64,
    pub base_mva: f64,
    pub buses: Vec<PerUnitBus>,
    pub lines: Vec<PerUnitLine>,
}

impl PerUnitNetwork {
    pub fn to_physical(&self) -> Result<RadialNetwork> {
        check_base(self.base_kv, self.base_mva)?;
        let z_base = self.base_kv * self.base_kv / self.base_mva;
        let s_base_kw = self.base_mva * 1000.0;
        let i_base = 1000.0 * self.base_mva / (3f64.sqrt() * self.base_kv);
        let buses = self
            .buses
            .iter()
            .map(|b| Bus {
                id: b.id,
                p_load_kw: b.p_pu * s_base_kw,
                q_load_kvar: b.q_pu * s_base_kw,
                n_residences: b.n_residences,
            })
            .collect();
        let lines = self
            .lines
            .iter()
            .map(|l| Line {
                from_bus: l.from_bus,
                to_bus: l.to_bus,
                r_ohm: l.r_pu * z_base,
                x_ohm: l.x_pu * z_base,
                ampacity_a: l.ampacity_pu * i_base,
            })
            .collect();
        RadialNetwork::new(buses, lines, self.base_kv, self.base_mva)
    }
}

/// Assignment of every non-slack bus to one of `sector_count` sectors.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SectorMap {
    assignments: BTreeMap<u32, u32>,
    sector_count: u32,
}

#[derive(Debug, Deserialize)]
struct SectorRow {
    bus_id: u32,
    sector_id: u32,
}

impl SectorMap {
    /// Validates that the assignment partitions the non-slack buses of
    /// `net` into sectors `1..=S`, each non-empty and connected (sectors
    /// hanging directly off the slack may share it as their connector).
    pub fn new(net: &RadialNetwork, assignments: BTreeMap<u32, u32>) -> Result<Self> {
        let mut assignments = assignments;
        if let Some(s) = assignments.remove(&SLACK_BUS) {
            if s != 0 {
                return Err(Error::Schema(format!(
                    "slack bus must have sector 0, got {s}"
                )));
            }
        }
        for &bus in assignments.keys() {
            if net.index_of(bus).is_none() {
                return Err(Error::Schema(format!("sector map names unknown bus {bus}")));
            }
        }
        let missing: Vec<u32> = net
            .load_bus_ids()
            .into_iter()
            .filter(|id| !assignments.contains_key(id))
            .collect();
        if !missing.is_empty() {
            return Err(Error::Schema(format!(
                "sector map misses buses {missing:?}"
            )));
        }
        let sector_count = assignments.values().copied().max().unwrap_or(0);
        if sector_count == 0 || assignments.values().any(|&s| s == 0) {
            return Err(Error::Schema(
                "sector ids must start at 1 for non-slack buses".into(),
            ));
        }
        let used: BTreeSet<u32> = assignments.values().copied().collect();
        if let Some(empty) = (1..=sector_count).find(|s| !used.contains(s)) {
            return Err(Error::Schema(format!("sector {empty} is empty")));
        }

        let slack = net.slack_index();
        for sector in 1..=sector_count {
            let roots: Vec<usize> = assignments
                .iter()
                .filter(|&(_, &s)| s == sector)
                .map(|(&bus, _)| net.index_of(bus).expect("checked above"))
                .filter(|&idx| {
                    let p = net.parent(idx).expect("non-slack bus has a parent");
                    p == slack || assignments.get(&net.buses[p].id) != Some(&sector)
                })
                .collect();
            let connected = roots.len() == 1 || roots.iter().all(|&r| net.parent(r) == Some(slack));
            if !connected {
                return Err(Error::Topology {
                    bus: net.buses[roots[1]].id,
                    reason: format!("sector {sector} is not a connected subtree"),
                });
            }
        }
        Ok(Self {
            assignments,
            sector_count,
        })
    }

    pub fn from_csv<R: Read>(net: &RadialNetwork, src: R) -> Result<Self> {
        let rows: Vec<SectorRow> = read_records(src, "sector map")?;
        let mut map = BTreeMap::new();
        for r in rows {
            if map.insert(r.bus_id, r.sector_id).is_some() {
                return Err(Error::Schema(format!(
                    "bus {} appears twice in sector map",
                    r.bus_id
                )));
            }
        }
        Self::new(net, map)
    }

    pub fn from_csv_file(net: &RadialNetwork, path: &Path) -> Result<Self> {
        let f = File::open(path).map_err(|e| Error::io(path, e))?;
        Self::from_csv(net, f)
    }

    pub fn sector_count(&self) -> u32 {
        self.sector_count
    }

    pub fn sector_of(&self, bus_id: u32) -> Option<u32> {
        self.assignments.get(&bus_id).copied()
    }

    pub fn buses_in(&self, sector: u32) -> Vec<u32> {
        self.assignments
            .iter()
            .filter(|&(_, &s)| s == sector)
            .map(|(&b, _)| b)
            .collect()
    }

    pub fn assignments(&self) -> &BTreeMap<u32, u32> {
        &self.assignments
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("bus_id,sector_id\n");
        for (b, s) in &self.assignments {
            out.push_str(&format!("{b},{s}\n"));
        }
        out
    }
}

/// Default partition of `net` into `sector_count` connected sectors.
///
/// On the bundled 33-bus feeder with seven sectors this is the documented
/// map: 2-5, 6-9, 10-14, 15-18, 19-22, 23-25, 26-33. Other networks and
/// counts are cut greedily into subtrees of roughly equal size.
pub fn default_sector_map(net: &RadialNetwork, sector_count: u32) -> Result<SectorMap> {
    let n_load = net.bus_count() - 1;
    if sector_count == 0 || (sector_count as usize) > n_load {
        return Err(Error::Config(format!(
            "cannot split {n_load} non-slack buses into {sector_count} sectors"
        )));
    }
    if sector_count == DEFAULT_SECTOR_COUNT && is_ieee33_layout(net) {
        if let Ok(map) = SectorMap::from_csv(net, IEEE33_SECTORS.as_bytes()) {
            return Ok(map);
        }
    }
    let labels = greedy_partition(net, sector_count as usize);
    let map = net
        .load_bus_ids()
        .into_iter()
        .map(|id| (id, labels[net.index_of(id).unwrap()]))
        .collect();
    SectorMap::new(net, map)
}

fn is_ieee33_layout(net: &RadialNetwork) -> bool {
    net.bus_count() == 33 && (1..=33).all(|id| net.index_of(id).is_some())
}

/// Returns a sector label (1-based) per bus position; the slack gets 0.
fn greedy_partition(net: &RadialNetwork, sectors: usize) -> Vec<u32> {
    let n = net.bus_count();
    let slack = net.slack_index();
    let n_load = n - 1;
    let top = net.children(slack).len();
    let target = n_load.div_ceil(sectors);

    // Bottom-up: cut a subtree off whenever its still-attached size reaches
    // the target, as long as extra pieces are wanted.
    let mut cut = vec![false; n];
    let mut open = vec![0usize; n];
    let mut cuts_left = sectors.saturating_sub(top);
    for &b in net.bfs_order().iter().rev() {
        if b == slack {
            continue;
        }
        let size = 1 + net.children(b).iter().map(|&c| open[c]).sum::<usize>();
        if size >= target && cuts_left > 0 && net.parent(b) != Some(slack) {
            cut[b] = true;
            cuts_left -= 1;
            open[b] = 0;
        } else {
            open[b] = size;
        }
    }

    // Piece root per bus, top-down.
    let mut root = vec![usize::MAX; n];
    for &b in net.bfs_order() {
        if b == slack {
            continue;
        }
        let p = net.parent(b).unwrap();
        root[b] = if cut[b] || p == slack { b } else { root[p] };
    }

    let piece_roots = |root: &[usize]| -> Vec<usize> {
        let mut seen = BTreeSet::new();
        net.bfs_order()
            .iter()
            .filter(|&&b| b != slack && seen.insert(root[b]))
            .map(|&b| root[b])
            .collect()
    };

    // Too few pieces: peel single leaves off the largest piece.
    loop {
        let roots = piece_roots(&root);
        if roots.len() >= sectors {
            break;
        }
        let size_of = |r: usize| (0..n).filter(|&b| b != slack && root[b] == r).count();
        let biggest = *roots.iter().max_by_key(|&&r| size_of(r)).unwrap();
        let leaf = (0..n)
            .filter(|&b| b != slack && b != biggest && root[b] == biggest)
            .find(|&b| net.children(b).iter().all(|&c| root[c] != biggest))
            .expect("a piece with two or more buses has a non-root leaf");
        root[leaf] = leaf;
    }

    // Too many pieces only happens when the slack has more children than
    // sectors; fold the surplus top-level pieces into the last sector.
    let roots = piece_roots(&root);
    let mut labels = vec![0u32; n];
    for b in 0..n {
        if b == slack {
            continue;
        }
        let pos = roots.iter().position(|&r| r == root[b]).unwrap();
        labels[b] = (pos.min(sectors - 1) + 1) as u32;
    }
    labels
}
