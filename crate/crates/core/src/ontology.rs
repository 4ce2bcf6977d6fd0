//! Activity knowledge graph.
//!
//! A rooted DAG whose edges go from a concept to the concepts it semantically
//! contains. Depths are shortest root distances; the last common ancestor of
//! two concepts is their deepest shared ancestor. The graph is immutable once
//! loaded and every query is a pure read.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet, VecDeque};
use std::fmt;
use std::io::{BufRead, BufReader, Read, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Identifier of an activity concept (e.g. `1`, `11`, `121`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ConceptId(pub u32);

impl fmt::Display for ConceptId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl From<u32> for ConceptId {
    fn from(v: u32) -> Self {
        ConceptId(v)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ConceptKind {
    Stop,
    Move,
    /// Aggregation category (the "aggregated activity" groups).
    Meta,
    Root,
}

impl ConceptKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ConceptKind::Stop => "stop",
            ConceptKind::Move => "move",
            ConceptKind::Meta => "meta",
            ConceptKind::Root => "root",
        }
    }
}

impl std::str::FromStr for ConceptKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "stop" => Ok(ConceptKind::Stop),
            "move" => Ok(ConceptKind::Move),
            "meta" => Ok(ConceptKind::Meta),
            "root" => Ok(ConceptKind::Root),
            other => Err(format!("unknown kind `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Concept {
    pub id: ConceptId,
    pub label: String,
    pub kind: ConceptKind,
    pub glyph: Option<String>,
}

/// One problem found while loading an ontology file. `line` is 1-based.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Diagnostic {
    pub line: usize,
    pub problem: Problem,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum Problem {
    #[error("malformed row: {0}")]
    Malformed(String),
    #[error("duplicate edge {child} <- {parent}")]
    DuplicateEdge { child: ConceptId, parent: ConceptId },
    #[error("concept {0} redefined with a different kind or label")]
    DuplicateId(ConceptId),
    #[error("multiple roots ({0} is a second root)")]
    MultipleRoots(ConceptId),
    #[error("no root row")]
    NoRoot,
    #[error("edge targets the root {0}")]
    EdgeToRoot(ConceptId),
    #[error("parent {parent} of {child} is never defined")]
    UnknownParent { child: ConceptId, parent: ConceptId },
    #[error("cycle through {child} <- {parent}")]
    Cycle { child: ConceptId, parent: ConceptId },
    #[error("concept {0} is not reachable from the root")]
    Disconnected(ConceptId),
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "line {}: {}", self.line, self.problem)
    }
}

#[derive(Debug, Error)]
pub enum OntologyError {
    #[error("invalid ontology:\n{}", format_diagnostics(.0))]
    Invalid(Vec<Diagnostic>),
    #[error("unknown concept {0}")]
    UnknownConcept(ConceptId),
    #[error("similarity undefined: both concepts are the root")]
    RootSimilarity,
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn format_diagnostics(diags: &[Diagnostic]) -> String {
    diags
        .iter()
        .map(|d| format!("  {d}"))
        .collect::<Vec<_>>()
        .join("\n")
}

/// Level at which activities are rolled up into coarser concepts.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AggregationLevel {
    /// No aggregation.
    Leaf,
    /// Ancestor at a fixed depth (or the concept itself when shallower).
    Depth(u32),
    /// Nearest ancestor of kind `meta`.
    Meta,
    /// Nearest ancestor belonging to an explicit category set.
    Categories(BTreeSet<ConceptId>),
}

impl fmt::Display for AggregationLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AggregationLevel::Leaf => f.write_str("leaf"),
            AggregationLevel::Depth(d) => write!(f, "depth:{d}"),
            AggregationLevel::Meta => f.write_str("meta"),
            AggregationLevel::Categories(set) => {
                let ids: Vec<String> = set.iter().map(|c| c.to_string()).collect();
                write!(f, "categories:{}", ids.join(","))
            }
        }
    }
}

impl std::str::FromStr for AggregationLevel {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "leaf" => Ok(AggregationLevel::Leaf),
            "meta" => Ok(AggregationLevel::Meta),
            _ => {
                if let Some(d) = s.strip_prefix("depth:") {
                    d.parse()
                        .map(AggregationLevel::Depth)
                        .map_err(|_| format!("bad depth in `{s}`"))
                } else if let Some(list) = s.strip_prefix("categories:") {
                    list.split(',')
                        .map(|t| t.trim().parse::<u32>().map(ConceptId))
                        .collect::<Result<BTreeSet<_>, _>>()
                        .map(AggregationLevel::Categories)
                        .map_err(|_| format!("bad category list in `{s}`"))
                } else {
                    Err(format!(
                        "unknown aggregation level `{s}` (expected leaf, meta, depth:N or categories:a,b,..)"
                    ))
                }
            }
        }
    }
}

/// Outcome of [`KnowledgeGraph::resolve_aggregate`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Aggregation {
    pub target: ConceptId,
    /// Several distinct candidates were tied; the smallest id was kept.
    pub ambiguous: bool,
}

#[derive(Debug, Clone)]
pub struct KnowledgeGraph {
    concepts: Vec<Concept>,
    index: HashMap<ConceptId, usize>,
    parents: Vec<Vec<usize>>,
    children: Vec<Vec<usize>>,
    root: usize,
    depth: Vec<u32>,
    /// Ancestors including the node itself, sorted by node index.
    ancestors: Vec<Vec<usize>>,
    effective_kind: Vec<ConceptKind>,
}

struct Row {
    line: usize,
    child: ConceptId,
    parent: Option<ConceptId>,
    kind: ConceptKind,
    label: String,
    glyph: Option<String>,
}

fn parse_row(line_no: usize, text: &str) -> Result<Row, Diagnostic> {
    let bad = |msg: String| Diagnostic {
        line: line_no,
        problem: Problem::Malformed(msg),
    };
    let fields: Vec<&str> = text.split('\t').collect();
    if fields.len() < 4 || fields.len() > 5 {
        return Err(bad(format!(
            "expected 4 or 5 tab-separated fields, found {}",
            fields.len()
        )));
    }
    let child = fields[0]
        .trim()
        .parse::<u32>()
        .map(ConceptId)
        .map_err(|_| bad(format!("bad child id `{}`", fields[0])))?;
    let parent = match fields[1].trim() {
        "-" => None,
        p => Some(
            p.parse::<u32>()
                .map(ConceptId)
                .map_err(|_| bad(format!("bad parent id `{p}`")))?,
        ),
    };
    let kind: ConceptKind = fields[2].trim().parse().map_err(bad)?;
    if (kind == ConceptKind::Root) != parent.is_none() {
        return Err(bad(
            "the root row must use parent `-` and kind `root`, and only the root may".into(),
        ));
    }
    let label = fields[3].trim().to_string();
    let glyph = fields
        .get(4)
        .map(|g| g.trim().to_string())
        .filter(|g| !g.is_empty());
    Ok(Row {
        line: line_no,
        child,
        parent,
        kind,
        label,
        glyph,
    })
}

impl KnowledgeGraph {
    /// Parses and validates the tab-separated edge-list format.
    pub fn load<R: Read>(source: R) -> Result<Self, OntologyError> {
        let mut diags = Vec::new();
        let mut rows = Vec::new();
        for (i, line) in BufReader::new(source).lines().enumerate() {
            let line = line?;
            let line_no = i + 1;
            let trimmed = line.trim_end_matches('\r');
            if trimmed.trim().is_empty() || trimmed.starts_with('#') {
                continue;
            }
            match parse_row(line_no, trimmed) {
                Ok(r) => rows.push(r),
                Err(d) => diags.push(d),
            }
        }

        let mut concepts: Vec<Concept> = Vec::new();
        let mut index: HashMap<ConceptId, usize> = HashMap::new();
        let mut root: Option<usize> = None;
        for r in &rows {
            match index.get(&r.child) {
                Some(&i) => {
                    let c: &Concept = &concepts[i];
                    if c.kind != r.kind || c.label != r.label {
                        diags.push(Diagnostic {
                            line: r.line,
                            problem: Problem::DuplicateId(r.child),
                        });
                    } else if r.parent.is_none() {
                        diags.push(Diagnostic {
                            line: r.line,
                            problem: Problem::MultipleRoots(r.child),
                        });
                    }
                }
                None => {
                    index.insert(r.child, concepts.len());
                    if r.parent.is_none() {
                        if root.is_some() {
                            diags.push(Diagnostic {
                                line: r.line,
                                problem: Problem::MultipleRoots(r.child),
                            });
                        } else {
                            root = Some(concepts.len());
                        }
                    }
                    concepts.push(Concept {
                        id: r.child,
                        label: r.label.clone(),
                        kind: r.kind,
                        glyph: r.glyph.clone(),
                    });
                }
            }
        }

        let n = concepts.len();
        let mut parents = vec![Vec::new(); n];
        let mut children = vec![Vec::new(); n];
        let mut edge_line: HashMap<(usize, usize), usize> = HashMap::new();
        for r in &rows {
            let Some(p) = r.parent else { continue };
            let c = index[&r.child];
            let Some(&pi) = index.get(&p) else {
                diags.push(Diagnostic {
                    line: r.line,
                    problem: Problem::UnknownParent {
                        child: r.child,
                        parent: p,
                    },
                });
                continue;
            };
            if Some(c) == root {
                diags.push(Diagnostic {
                    line: r.line,
                    problem: Problem::EdgeToRoot(r.child),
                });
                continue;
            }
            if edge_line.contains_key(&(pi, c)) {
                diags.push(Diagnostic {
                    line: r.line,
                    problem: Problem::DuplicateEdge {
                        child: r.child,
                        parent: p,
                    },
                });
                continue;
            }
            edge_line.insert((pi, c), r.line);
            parents[c].push(pi);
            children[pi].push(c);
        }

        let Some(root) = root else {
            diags.push(Diagnostic {
                line: rows.last().map_or(1, |r| r.line),
                problem: Problem::NoRoot,
            });
            return Err(OntologyError::Invalid(sorted(diags)));
        };

        diags.extend(find_cycles(&concepts, &children, &edge_line));

        // Shortest root distances; anything left unreached is disconnected.
        let mut depth = vec![u32::MAX; n];
        depth[root] = 0;
        let mut queue = VecDeque::from([root]);
        while let Some(u) = queue.pop_front() {
            for &v in &children[u] {
                if depth[v] == u32::MAX {
                    depth[v] = depth[u] + 1;
                    queue.push_back(v);
                }
            }
        }
        for (i, &d) in depth.iter().enumerate() {
            if d == u32::MAX {
                let line = rows
                    .iter()
                    .find(|r| r.child == concepts[i].id)
                    .map_or(0, |r| r.line);
                diags.push(Diagnostic {
                    line,
                    problem: Problem::Disconnected(concepts[i].id),
                });
            }
        }

        if !diags.is_empty() {
            return Err(OntologyError::Invalid(sorted(diags)));
        }

        for list in parents.iter_mut().chain(children.iter_mut()) {
            list.sort_by_key(|&i| concepts[i].id);
        }

        let order = topological_order(root, &children, &parents);
        let mut ancestors: Vec<Vec<usize>> = vec![Vec::new(); n];
        for &u in &order {
            let mut set: BTreeSet<usize> = BTreeSet::from([u]);
            for &p in &parents[u] {
                set.extend(ancestors[p].iter().copied());
            }
            ancestors[u] = set.into_iter().collect();
        }

        let mut effective_kind: Vec<ConceptKind> = concepts.iter().map(|c| c.kind).collect();
        for &u in order.iter().rev() {
            if matches!(concepts[u].kind, ConceptKind::Meta | ConceptKind::Root) {
                let kinds: BTreeSet<ConceptKind> =
                    children[u].iter().map(|&c| effective_kind[c]).collect();
                effective_kind[u] = match kinds.len() {
                    1 => *kinds.iter().next().unwrap(),
                    _ => concepts[u].kind,
                };
            }
        }

        Ok(KnowledgeGraph {
            concepts,
            index,
            parents,
            children,
            root,
            depth,
            ancestors,
            effective_kind,
        })
    }

    /// Writes the graph back in the edge-list format: the root first, then one
    /// row per edge ordered by (child, parent).
    pub fn write<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        let row = |c: &Concept, parent: Option<ConceptId>| {
            let mut s = format!(
                "{}\t{}\t{}\t{}",
                c.id,
                parent.map_or("-".to_string(), |p| p.to_string()),
                c.kind.as_str(),
                c.label
            );
            if let Some(g) = &c.glyph {
                s.push('\t');
                s.push_str(g);
            }
            s
        };
        writeln!(out, "{}", row(&self.concepts[self.root], None))?;
        let mut order: Vec<usize> = (0..self.concepts.len()).filter(|&i| i != self.root).collect();
        order.sort_by_key(|&i| self.concepts[i].id);
        for i in order {
            for &p in &self.parents[i] {
                writeln!(out, "{}", row(&self.concepts[i], Some(self.concepts[p].id)))?;
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.concepts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.concepts.is_empty()
    }

    pub fn root(&self) -> ConceptId {
        self.concepts[self.root].id
    }

    pub fn contains(&self, x: ConceptId) -> bool {
        self.index.contains_key(&x)
    }

    pub fn concept(&self, x: ConceptId) -> Result<&Concept, OntologyError> {
        Ok(&self.concepts[self.idx(x)?])
    }

    /// Concepts in ascending id order.
    pub fn concepts(&self) -> impl Iterator<Item = &Concept> {
        let mut v: Vec<&Concept> = self.concepts.iter().collect();
        v.sort_by_key(|c| c.id);
        v.into_iter()
    }

    pub fn parents(&self, x: ConceptId) -> Result<Vec<ConceptId>, OntologyError> {
        let i = self.idx(x)?;
        Ok(self.parents[i].iter().map(|&p| self.concepts[p].id).collect())
    }

    pub fn children(&self, x: ConceptId) -> Result<Vec<ConceptId>, OntologyError> {
        let i = self.idx(x)?;
        Ok(self.children[i].iter().map(|&c| self.concepts[c].id).collect())
    }

    /// `stop` or `move` for anything whose descendants are all of one kind;
    /// mixed categories keep their own tag.
    pub fn effective_kind(&self, x: ConceptId) -> Result<ConceptKind, OntologyError> {
        Ok(self.effective_kind[self.idx(x)?])
    }

    pub fn is_move(&self, x: ConceptId) -> bool {
        self.index
            .get(&x)
            .is_some_and(|&i| self.effective_kind[i] == ConceptKind::Move)
    }

    pub fn is_stop(&self, x: ConceptId) -> bool {
        self.index
            .get(&x)
            .is_some_and(|&i| self.effective_kind[i] == ConceptKind::Stop)
    }

    pub fn depth(&self, x: ConceptId) -> Result<u32, OntologyError> {
        Ok(self.depth[self.idx(x)?])
    }

    pub fn max_depth(&self) -> u32 {
        self.depth.iter().copied().max().unwrap_or(0)
    }

    /// Deepest common ancestor that has no other common ancestor below it;
    /// ties between equally deep candidates go to the smallest id.
    pub fn lca(&self, x: ConceptId, y: ConceptId) -> Result<ConceptId, OntologyError> {
        let (a, b) = (self.idx(x)?, self.idx(y)?);
        Ok(self.concepts[self.lca_idx(a, b)].id)
    }

    fn lca_idx(&self, a: usize, b: usize) -> usize {
        let (xa, xb) = (&self.ancestors[a], &self.ancestors[b]);
        let common: Vec<usize> = xa.iter().copied().filter(|c| xb.binary_search(c).is_ok()).collect();
        let lowest = |c: usize| {
            common
                .iter()
                .all(|&o| o == c || self.ancestors[o].binary_search(&c).is_err())
        };
        let mut best = self.root;
        for &c in common.iter().filter(|&&c| lowest(c)) {
            let better = self.depth[c] > self.depth[best]
                || (self.depth[c] == self.depth[best]
                    && self.concepts[c].id < self.concepts[best].id);
            if better {
                best = c;
            }
        }
        best
    }

    /// `2 d(lca) / (d(x) + d(y))`, with `d(lca)` capped at `min(d(x), d(y))`.
    /// The cap only binds on shortcut edges, where a shortest-path depth can
    /// rank an ancestor deeper than its descendant.
    pub fn wu_palmer(&self, x: ConceptId, y: ConceptId) -> Result<f64, OntologyError> {
        let (a, b) = (self.idx(x)?, self.idx(y)?);
        let denom = self.depth[a] + self.depth[b];
        if denom == 0 {
            return Err(OntologyError::RootSimilarity);
        }
        let l = self.depth[self.lca_idx(a, b)].min(self.depth[a]).min(self.depth[b]);
        Ok(2.0 * f64::from(l) / f64::from(denom))
    }

    pub fn aggregate(&self, x: ConceptId, lvl: &AggregationLevel) -> Result<ConceptId, OntologyError> {
        let agg = self.resolve_aggregate(x, lvl)?;
        if agg.ambiguous {
            log::warn!("aggregation of {x} at level {lvl} is ambiguous; kept {}", agg.target);
        }
        Ok(agg.target)
    }

    pub fn resolve_aggregate(
        &self,
        x: ConceptId,
        lvl: &AggregationLevel,
    ) -> Result<Aggregation, OntologyError> {
        let i = self.idx(x)?;
        let exact = |target: usize| Aggregation {
            target: self.concepts[target].id,
            ambiguous: false,
        };
        match lvl {
            AggregationLevel::Leaf => Ok(exact(i)),
            AggregationLevel::Depth(level) => {
                if self.depth[i] <= *level {
                    return Ok(exact(i));
                }
                // Walk up along shortest-path predecessors only.
                let mut frontier: BTreeSet<usize> = BTreeSet::from([i]);
                let mut d = self.depth[i];
                while d > *level {
                    frontier = frontier
                        .iter()
                        .flat_map(|&u| self.parents[u].iter().copied())
                        .filter(|&p| self.depth[p] == d - 1)
                        .collect();
                    d -= 1;
                }
                Ok(self.pick(frontier))
            }
            AggregationLevel::Meta => {
                Ok(self.nearest_ancestor(i, |c| self.concepts[c].kind == ConceptKind::Meta))
            }
            AggregationLevel::Categories(set) => {
                Ok(self.nearest_ancestor(i, |c| set.contains(&self.concepts[c].id)))
            }
        }
    }

    /// Closest ancestor-or-self satisfying `pred`, by upward hop count. Falls
    /// back to the concept itself when no ancestor qualifies.
    fn nearest_ancestor(&self, start: usize, pred: impl Fn(usize) -> bool) -> Aggregation {
        let mut frontier: BTreeSet<usize> = BTreeSet::from([start]);
        let mut seen: HashSet<usize> = HashSet::from([start]);
        while !frontier.is_empty() {
            let hits: BTreeSet<usize> = frontier.iter().copied().filter(|&c| pred(c)).collect();
            if !hits.is_empty() {
                return self.pick(hits);
            }
            frontier = frontier
                .iter()
                .flat_map(|&u| self.parents[u].iter().copied())
                .filter(|p| seen.insert(*p))
                .collect();
        }
        Aggregation {
            target: self.concepts[start].id,
            ambiguous: false,
        }
    }

    fn pick(&self, candidates: BTreeSet<usize>) -> Aggregation {
        let ids: BTreeSet<ConceptId> = candidates.iter().map(|&c| self.concepts[c].id).collect();
        Aggregation {
            target: *ids.iter().next().expect("non-empty candidate set"),
            ambiguous: ids.len() > 1,
        }
    }

    /// Stable content digest input: the serialized edge list.
    pub fn canonical_text(&self) -> String {
        let mut buf = Vec::new();
        self.write(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("utf-8 labels")
    }

    fn idx(&self, x: ConceptId) -> Result<usize, OntologyError> {
        self.index
            .get(&x)
            .copied()
            .ok_or(OntologyError::UnknownConcept(x))
    }
}

fn sorted(mut diags: Vec<Diagnostic>) -> Vec<Diagnostic> {
    diags.sort_by_key(|d| d.line);
    diags
}

/// Reports one diagnostic per back edge found by an iterative DFS over all
/// nodes, anchored at the line of the edge that closes the cycle.
fn find_cycles(
    concepts: &[Concept],
    children: &[Vec<usize>],
    edge_line: &HashMap<(usize, usize), usize>,
) -> Vec<Diagnostic> {
    #[derive(Clone, Copy, PartialEq)]
    enum Mark {
        White,
        Grey,
        Black,
    }
    let n = concepts.len();
    let mut mark = vec![Mark::White; n];
    let mut found = BTreeMap::new();
    for start in 0..n {
        if mark[start] != Mark::White {
            continue;
        }
        let mut stack: Vec<(usize, usize)> = vec![(start, 0)];
        mark[start] = Mark::Grey;
        while let Some(&mut (u, ref mut next)) = stack.last_mut() {
            if let Some(&v) = children[u].get(*next) {
                *next += 1;
                match mark[v] {
                    Mark::White => {
                        mark[v] = Mark::Grey;
                        stack.push((v, 0));
                    }
                    Mark::Grey => {
                        let line = edge_line[&(u, v)];
                        found.insert(
                            line,
                            Problem::Cycle {
                                child: concepts[v].id,
                                parent: concepts[u].id,
                            },
                        );
                    }
                    Mark::Black => {}
                }
            } else {
                mark[u] = Mark::Black;
                stack.pop();
            }
        }
    }
    found
        .into_iter()
        .map(|(line, problem)| Diagnostic { line, problem })
        .collect()
}

fn topological_order(root: usize, children: &[Vec<usize>], parents: &[Vec<usize>]) -> Vec<usize> {
    let mut indeg: Vec<usize> = parents.iter().map(Vec::len).collect();
    let mut order = Vec::with_capacity(children.len());
    let mut queue = VecDeque::from([root]);
    while let Some(u) = queue.pop_front() {
        order.push(u);
        for &v in &children[u] {
            indeg[v] -= 1;
            if indeg[v] == 0 {
                queue.push_back(v);
            }
        }
    }
    order
}

/// The bundled activity ontology (household travel survey coding scheme with
/// its aggregated-activity categories).
pub const REFERENCE_ONTOLOGY: &str = include_str!("../data/reference_ontology.tsv");

pub fn reference_ontology() -> KnowledgeGraph {
    KnowledgeGraph::load(REFERENCE_ONTOLOGY.as_bytes()).expect("bundled ontology is valid")
}
