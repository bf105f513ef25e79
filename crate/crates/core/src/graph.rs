//! Graph representation, edge-list ingestion, and cross-view node alignment.
//!
//! Views are undirected, unweighted, and have no self-loops. Two views are
//! aligned over the intersection of their label sets, ordered
//! lexicographically so downstream seeded procedures are reproducible.

use crate::error::{Error, Result};
use serde::Serialize;
use std::collections::{BTreeSet, HashMap, HashSet};
use std::io::BufRead;

/// Ordered set of external node identifiers shared by all views.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NodeUniverse {
    labels: Vec<String>,
    index: HashMap<String, usize>,
}

impl NodeUniverse {
    /// Builds a universe from unique labels, preserving their order.
    pub fn new(labels: Vec<String>) -> Result<Self> {
        if labels.is_empty() {
            return Err(Error::EmptyInput("node universe".into()));
        }
        let mut index = HashMap::with_capacity(labels.len());
        for (i, label) in labels.iter().enumerate() {
            if index.insert(label.clone(), i).is_some() {
                return Err(Error::InvalidParameter(format!(
                    "duplicate node label {label:?}"
                )));
            }
        }
        Ok(Self { labels, index })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn label(&self, i: usize) -> &str {
        &self.labels[i]
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.index.get(label).copied()
    }
}

/// Sparse symmetric binary adjacency: one network data view.
///
/// Edges are unordered pairs `(i, j)` with `i < j`, stored sorted and
/// deduplicated, so equality of views is equality of edge sets.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AdjacencyView {
    n: usize,
    edges: Vec<(u32, u32)>,
}

impl AdjacencyView {
    /// Builds a view from arbitrary index pairs. Self-pairs are rejected;
    /// duplicates and reversed pairs collapse to a single edge.
    pub fn from_edges<I>(n: usize, pairs: I) -> Result<Self>
    where
        I: IntoIterator<Item = (usize, usize)>,
    {
        let mut edges = Vec::new();
        for (a, b) in pairs {
            if a == b {
                return Err(Error::InvalidParameter(format!("self-loop at node {a}")));
            }
            if a >= n || b >= n {
                return Err(Error::InvalidParameter(format!(
                    "edge ({a}, {b}) outside node range 0..{n}"
                )));
            }
            let (lo, hi) = if a < b { (a, b) } else { (b, a) };
            edges.push((lo as u32, hi as u32));
        }
        edges.sort_unstable();
        edges.dedup();
        Ok(Self { n, edges })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    /// Edges as sorted `(i, j)` pairs with `i < j`.
    pub fn edges(&self) -> &[(u32, u32)] {
        &self.edges
    }

    /// Node degrees; `d[i]` counts edges incident to `i`.
    pub fn degrees(&self) -> Vec<u32> {
        let mut d = vec![0u32; self.n];
        for &(i, j) in &self.edges {
            d[i as usize] += 1;
            d[j as usize] += 1;
        }
        d
    }
}

/// Degrees of a view; kept as a free function to mirror the pipeline steps.
pub fn degrees(a: &AdjacencyView) -> Vec<u32> {
    a.degrees()
}

/// How edge-list lines are split into fields.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Delimiter {
    /// Split on one specific character.
    Char(char),
    /// Split on any run of whitespace.
    Whitespace,
}

/// Edge-list text format: delimiter-separated endpoint labels, one edge per
/// line, comment lines skipped, blank lines ignored.
#[derive(Debug, Clone)]
pub struct EdgeListFormat {
    pub delimiter: Delimiter,
    pub comment_prefix: char,
    /// Zero-based column indices of the two endpoints.
    pub columns: (usize, usize),
    /// Exact number of fields each data line must have.
    pub num_fields: usize,
}

impl Default for EdgeListFormat {
    fn default() -> Self {
        Self {
            delimiter: Delimiter::Char('\t'),
            comment_prefix: '#',
            columns: (0, 1),
            num_fields: 2,
        }
    }
}

/// Reads endpoint label pairs in file order, without any cleaning:
/// duplicates and self-pairs are retained for [`align_views`] to resolve.
pub fn load_edge_list<R: BufRead>(source: R, fmt: &EdgeListFormat) -> Result<Vec<(String, String)>> {
    let (ci, cj) = fmt.columns;
    if ci >= fmt.num_fields || cj >= fmt.num_fields {
        return Err(Error::InvalidParameter(format!(
            "endpoint columns {:?} exceed the {}-field line format",
            fmt.columns, fmt.num_fields
        )));
    }
    let mut pairs = Vec::new();
    for (lineno, line) in source.lines().enumerate() {
        let line = line?;
        let lineno = lineno + 1;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with(fmt.comment_prefix) {
            continue;
        }
        let fields: Vec<&str> = match fmt.delimiter {
            Delimiter::Char(c) => trimmed.split(c).collect(),
            Delimiter::Whitespace => trimmed.split_whitespace().collect(),
        };
        if fields.len() != fmt.num_fields {
            return Err(Error::Parse {
                line: lineno,
                message: format!(
                    "expected {} fields, found {}",
                    fmt.num_fields,
                    fields.len()
                ),
            });
        }
        pairs.push((fields[ci].to_string(), fields[cj].to_string()));
    }
    if pairs.is_empty() {
        return Err(Error::EmptyInput("edge list contains no edges".into()));
    }
    Ok(pairs)
}

/// What alignment dropped or collapsed, summed over both views.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct IngestionSummary {
    pub n: usize,
    pub edges_view1: usize,
    pub edges_view2: usize,
    pub dropped_self: usize,
    pub dropped_outside: usize,
    pub collapsed_duplicates: usize,
}

/// Two views aligned over a shared, lexicographically ordered node universe.
#[derive(Debug, Clone)]
pub struct AlignedViews {
    pub view1: AdjacencyView,
    pub view2: AdjacencyView,
    pub universe: NodeUniverse,
    pub summary: IngestionSummary,
}

/// Restricts both pair lists to the intersection of their label sets,
/// drops self-pairs, and collapses duplicate or reversed pairs.
pub fn align_views(
    pairs1: &[(String, String)],
    pairs2: &[(String, String)],
) -> Result<AlignedViews> {
    if pairs1.is_empty() || pairs2.is_empty() {
        return Err(Error::EmptyInput("edge pair list".into()));
    }
    fn touched(pairs: &[(String, String)]) -> HashSet<&str> {
        pairs
            .iter()
            .flat_map(|(a, b)| [a.as_str(), b.as_str()])
            .collect()
    }
    let set1 = touched(pairs1);
    let set2 = touched(pairs2);
    let shared: BTreeSet<&str> = set1.intersection(&set2).copied().collect();
    if shared.is_empty() {
        return Err(Error::NoSharedNodes);
    }
    let universe = NodeUniverse::new(shared.into_iter().map(String::from).collect())?;

    let mut summary = IngestionSummary {
        n: universe.len(),
        ..Default::default()
    };
    let mut index_pairs = |pairs: &[(String, String)]| -> Vec<(usize, usize)> {
        let mut kept = Vec::with_capacity(pairs.len());
        for (a, b) in pairs {
            if a == b {
                summary.dropped_self += 1;
                continue;
            }
            match (universe.index_of(a), universe.index_of(b)) {
                (Some(i), Some(j)) => kept.push(if i < j { (i, j) } else { (j, i) }),
                _ => summary.dropped_outside += 1,
            }
        }
        kept.sort_unstable();
        let before = kept.len();
        kept.dedup();
        summary.collapsed_duplicates += before - kept.len();
        kept
    };
    let kept1 = index_pairs(pairs1);
    let kept2 = index_pairs(pairs2);

    let n = universe.len();
    let view1 = AdjacencyView::from_edges(n, kept1)?;
    let view2 = AdjacencyView::from_edges(n, kept2)?;
    summary.edges_view1 = view1.edge_count();
    summary.edges_view2 = view2.edge_count();
    Ok(AlignedViews {
        view1,
        view2,
        universe,
        summary,
    })
}
