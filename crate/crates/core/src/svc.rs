//! Layered structure of a scalable video stream.
//!
//! Every coded unit is addressed by a frame index and a DTQ layer triple.
//! A [`DependencyGraph`] records which units must be decoded before a given
//! unit can be; the temporal part is a dyadic hierarchical-B structure and the
//! quality part depends on the quality-scalability [`Scheme`].

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Spatial / temporal / quality level identifiers carried by every NAL unit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize)]
pub struct LayerId {
    pub did: u8,
    pub tid: u8,
    pub qid: u8,
}

impl LayerId {
    pub const BASE: LayerId = LayerId { did: 0, tid: 0, qid: 0 };

    pub const fn new(did: u8, tid: u8, qid: u8) -> Self {
        LayerId { did, tid, qid }
    }

    pub const fn tq(tid: u8, qid: u8) -> Self {
        LayerId { did: 0, tid, qid }
    }

    /// Component-wise `<=`: true when this layer is part of the extraction point `selection`.
    pub fn within(&self, selection: &LayerId) -> bool {
        self.did <= selection.did && self.tid <= selection.tid && self.qid <= selection.qid
    }
}

impl fmt::Display for LayerId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.did == 0 {
            write!(f, "T{}Q{}", self.tid, self.qid)
        } else {
            write!(f, "D{}T{}Q{}", self.did, self.tid, self.qid)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    Cgs,
    Fgs,
    Mgs,
}

impl Scheme {
    pub const ALL: [Scheme; 3] = [Scheme::Cgs, Scheme::Fgs, Scheme::Mgs];

    pub fn as_str(&self) -> &'static str {
        match self {
            Scheme::Cgs => "cgs",
            Scheme::Fgs => "fgs",
            Scheme::Mgs => "mgs",
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "cgs" => Ok(Scheme::Cgs),
            "fgs" => Ok(Scheme::Fgs),
            "mgs" => Ok(Scheme::Mgs),
            other => Err(Error::config("scheme", format!("unknown scheme {other:?}"))),
        }
    }
}

/// GOP layout of the coded video.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GopConfig {
    /// Frames per GOP; a power of two.
    pub gop_size: u32,
    /// Must equal `log2(gop_size) + 1`.
    pub temporal_levels: u8,
    /// 1 means no quality scalability.
    pub quality_levels: u8,
    pub scheme: Scheme,
    /// Distance between MGS reference frames. Ignored by CGS and FGS.
    pub mgs_key_period: u32,
}

impl GopConfig {
    pub fn new(gop_size: u32, quality_levels: u8, scheme: Scheme) -> Result<Self> {
        if gop_size == 0 || !gop_size.is_power_of_two() {
            return Err(Error::config("gop.gop_size", format!("{gop_size} is not a power of two")));
        }
        let cfg = GopConfig {
            gop_size,
            temporal_levels: gop_size.trailing_zeros() as u8 + 1,
            quality_levels,
            scheme,
            mgs_key_period: gop_size,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn with_key_period(mut self, period: u32) -> Result<Self> {
        self.mgs_key_period = period;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if self.gop_size == 0 || !self.gop_size.is_power_of_two() {
            return Err(Error::config("gop.gop_size", format!("{} is not a power of two", self.gop_size)));
        }
        let expected = self.gop_size.trailing_zeros() + 1;
        if u32::from(self.temporal_levels) != expected {
            return Err(Error::config(
                "gop.temporal_levels",
                format!("{} does not match gop_size {} (expected {expected})", self.temporal_levels, self.gop_size),
            ));
        }
        if self.quality_levels == 0 {
            return Err(Error::config("gop.quality_levels", "must be at least 1"));
        }
        if self.scheme == Scheme::Mgs && self.mgs_key_period == 0 {
            return Err(Error::config("gop.mgs_key_period", "must be at least 1 for MGS"));
        }
        Ok(())
    }

    /// Temporal level of a frame in the dyadic hierarchy.
    pub fn tid_of(&self, frame: u32) -> u8 {
        let pos = frame % self.gop_size;
        if pos == 0 {
            0
        } else {
            self.temporal_levels - 1 - pos.trailing_zeros() as u8
        }
    }

    pub fn top_qid(&self) -> u8 {
        self.quality_levels - 1
    }

    pub fn is_mgs_key(&self, frame: u32) -> bool {
        frame % self.mgs_key_period == 0
    }
}

/// One node of the layered frame grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct CodedUnit {
    pub frame_index: u32,
    pub layer: LayerId,
}

impl CodedUnit {
    pub const fn new(frame_index: u32, layer: LayerId) -> Self {
        CodedUnit { frame_index, layer }
    }
}

impl fmt::Display for CodedUnit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.frame_index, self.layer)
    }
}

/// Directed acyclic graph of "prerequisite -> dependent" edges between coded units.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct DependencyGraph {
    prereqs: BTreeMap<CodedUnit, BTreeSet<CodedUnit>>,
}

impl DependencyGraph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_node(&mut self, unit: CodedUnit) {
        self.prereqs.entry(unit).or_default();
    }

    /// Adds `prerequisite -> dependent`; both endpoints become nodes.
    pub fn add_edge(&mut self, prerequisite: CodedUnit, dependent: CodedUnit) {
        self.add_node(prerequisite);
        self.prereqs.entry(dependent).or_default().insert(prerequisite);
    }

    pub fn contains(&self, unit: &CodedUnit) -> bool {
        self.prereqs.contains_key(unit)
    }

    pub fn nodes(&self) -> impl Iterator<Item = &CodedUnit> + '_ {
        self.prereqs.keys()
    }

    pub fn node_count(&self) -> usize {
        self.prereqs.len()
    }

    pub fn edge_count(&self) -> usize {
        self.prereqs.values().map(BTreeSet::len).sum()
    }

    /// Direct prerequisites of `unit` (empty for unknown units).
    pub fn prerequisites(&self, unit: &CodedUnit) -> impl Iterator<Item = &CodedUnit> + '_ {
        self.prereqs.get(unit).into_iter().flatten()
    }

    pub fn edges(&self) -> impl Iterator<Item = (CodedUnit, CodedUnit)> + '_ {
        self.prereqs
            .iter()
            .flat_map(|(dep, pres)| pres.iter().map(move |pre| (*pre, *dep)))
    }

    /// Kahn's algorithm; `None` if the graph has a cycle.
    pub fn topological_order(&self) -> Option<Vec<CodedUnit>> {
        let mut indegree: BTreeMap<CodedUnit, usize> =
            self.prereqs.iter().map(|(u, p)| (*u, p.len())).collect();
        let mut dependents: BTreeMap<CodedUnit, Vec<CodedUnit>> = BTreeMap::new();
        for (pre, dep) in self.edges() {
            dependents.entry(pre).or_default().push(dep);
        }
        let mut ready: VecDeque<CodedUnit> =
            indegree.iter().filter(|(_, d)| **d == 0).map(|(u, _)| *u).collect();
        let mut order = Vec::with_capacity(self.prereqs.len());
        while let Some(u) = ready.pop_front() {
            order.push(u);
            for dep in dependents.get(&u).into_iter().flatten() {
                let d = indegree.get_mut(dep).expect("edge endpoint is a node");
                *d -= 1;
                if *d == 0 {
                    ready.push_back(*dep);
                }
            }
        }
        (order.len() == self.prereqs.len()).then_some(order)
    }

    pub fn is_acyclic(&self) -> bool {
        self.topological_order().is_some()
    }
}

/// Dyadic hierarchical-B prediction over base-quality units.
///
/// Frames at GOP boundaries are T0 anchors. A frame at GOP offset `p` with
/// lowest set bit `s` references `f - s` and `f + s`; when `f + s` is past the
/// end of the video only the left reference is kept.
pub fn build_temporal_hierarchy(gop: &GopConfig, num_frames: u32) -> Result<DependencyGraph> {
    gop.validate()?;
    if num_frames == 0 {
        return Err(Error::config("num_frames", "must be at least 1"));
    }
    let mut graph = DependencyGraph::new();
    for f in 0..num_frames {
        let unit = CodedUnit::new(f, LayerId::tq(gop.tid_of(f), 0));
        graph.add_node(unit);
        let pos = f % gop.gop_size;
        if pos == 0 {
            continue;
        }
        let step = 1u32 << pos.trailing_zeros();
        for r in [f - step, f + step] {
            if r < num_frames {
                graph.add_edge(CodedUnit::new(r, LayerId::tq(gop.tid_of(r), 0)), unit);
            }
        }
    }
    Ok(graph)
}

/// Adds the enhancement-layer units and the scheme-specific quality edges.
///
/// * CGS: `(f,q)` needs `(f,q-1)`, and every temporal edge `p -> f` is
///   replicated at each enhancement level, so each layer has its own
///   inter-frame prediction chain.
/// * FGS: `(f,q)` needs only `(f,0)`; inter-frame prediction stays in the base.
/// * MGS: `(f,q)` needs `(f,q-1)`. Non-reference frames additionally predict
///   their enhancement from the temporal parents' enhancement at the same
///   level and from the top enhancement of the nearest preceding reference
///   frame. Reference frames predict their enhancement from their own base only.
pub fn add_quality_edges(graph: &DependencyGraph, gop: &GopConfig) -> Result<DependencyGraph> {
    gop.validate()?;
    let mut out = graph.clone();
    if gop.quality_levels == 1 {
        return Ok(out);
    }
    let base_units: Vec<CodedUnit> = graph.nodes().filter(|u| u.layer.qid == 0).copied().collect();
    let at = |u: CodedUnit, q: u8| CodedUnit::new(u.frame_index, LayerId { qid: q, ..u.layer });
    let top = gop.top_qid();

    for &unit in &base_units {
        let temporal_parents: Vec<CodedUnit> = graph
            .prerequisites(&unit)
            .filter(|p| p.layer.qid == 0)
            .copied()
            .collect();
        for q in 1..gop.quality_levels {
            let enh = at(unit, q);
            match gop.scheme {
                Scheme::Cgs => {
                    out.add_edge(at(unit, q - 1), enh);
                    for &p in &temporal_parents {
                        out.add_edge(at(p, q), enh);
                    }
                }
                Scheme::Fgs => out.add_edge(unit, enh),
                Scheme::Mgs => {
                    out.add_edge(at(unit, q - 1), enh);
                    if !gop.is_mgs_key(unit.frame_index) {
                        for &p in &temporal_parents {
                            out.add_edge(at(p, q), enh);
                        }
                        let key = unit.frame_index - unit.frame_index % gop.mgs_key_period;
                        let key_unit = CodedUnit::new(key, LayerId::tq(gop.tid_of(key), top));
                        out.add_edge(key_unit, enh);
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Full graph for a video: temporal hierarchy plus quality edges.
pub fn build_graph(gop: &GopConfig, num_frames: u32) -> Result<DependencyGraph> {
    add_quality_edges(&build_temporal_hierarchy(gop, num_frames)?, gop)
}

/// Largest subset of `received` closed under prerequisites.
///
/// Units outside the graph are ignored.
pub fn decodable_units(received: &BTreeSet<CodedUnit>, graph: &DependencyGraph) -> BTreeSet<CodedUnit> {
    let order = graph
        .topological_order()
        .expect("dependency graphs are constructed acyclic");
    decodable_in_order(received, graph, &order)
}

/// Same as [`decodable_units`] with a precomputed topological order.
pub fn decodable_in_order(
    received: &BTreeSet<CodedUnit>,
    graph: &DependencyGraph,
    order: &[CodedUnit],
) -> BTreeSet<CodedUnit> {
    let mut ok = BTreeSet::new();
    for u in order {
        if received.contains(u) && graph.prerequisites(u).all(|p| ok.contains(p)) {
            ok.insert(*u);
        }
    }
    ok
}
