//! JSON scenario files.
//!
//! A scenario names a graph, a bearing target (the positions' own bearings or
//! raw unit vectors) and optionally an initial configuration for simulation.
//! Semantic errors carry the line of the offending JSON value.

use std::fmt;
use std::path::Path;

use bearing_core::formation::UNIT_NORM_TOL;
use bearing_core::linalg::Vector;
use bearing_core::{BearingConstraintSet, DirectedGraph, Formation};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const SCENARIO_VERSION: u32 = 1;
/// Edges shorter than this are rejected as coincident endpoints.
pub const COINCIDENT_TOL: f64 = 1e-9;
pub const DEFAULT_BOX: [f64; 2] = [-2.0, 2.0];

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("{source_name}:{line}:{column}: {message}")]
    Parse {
        source_name: String,
        line: usize,
        column: usize,
        message: String,
    },
    #[error("{source_name}:{}: {path}: {message}", line.map_or_else(|| "?".to_owned(), |l| l.to_string()))]
    Validation {
        source_name: String,
        line: Option<usize>,
        path: String,
        message: String,
    },
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Node {
    pub id: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub position: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged, deny_unknown_fields)]
pub enum Target {
    FromPositions { from_positions: bool },
    Bearings { bearings: Vec<Vec<f64>> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged, deny_unknown_fields)]
pub enum Initial {
    Positions {
        positions: Vec<Vec<f64>>,
    },
    Random {
        random_seed: u64,
        /// `[lo, hi]` applied to every coordinate.
        #[serde(rename = "box", default = "default_box")]
        bounds: [f64; 2],
    },
}

fn default_box() -> [f64; 2] {
    DEFAULT_BOX
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub version: u32,
    pub name: String,
    pub dimension: usize,
    pub nodes: Vec<Node>,
    pub edges: Vec<[usize; 2]>,
    pub target: Target,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial: Option<Initial>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub notes: Option<String>,
}

/// A validated scenario plus non-fatal findings.
#[derive(Debug, Clone)]
pub struct Parsed {
    pub scenario: Scenario,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
enum Seg {
    Key(&'static str),
    Index(usize),
}

impl fmt::Display for Seg {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Seg::Key(k) => write!(f, ".{k}"),
            Seg::Index(i) => write!(f, "[{i}]"),
        }
    }
}

struct Issue {
    path: Vec<Seg>,
    message: String,
}

fn issue(path: Vec<Seg>, message: impl Into<String>) -> Issue {
    Issue {
        path,
        message: message.into(),
    }
}

pub fn parse_file(path: &Path) -> Result<Parsed, ScenarioError> {
    let text = std::fs::read_to_string(path).map_err(|source| ScenarioError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_str(&text, &path.display().to_string())
}

/// Parses and validates scenario text; `source_name` only labels messages.
pub fn parse_str(text: &str, source_name: &str) -> Result<Parsed, ScenarioError> {
    let scenario: Scenario = serde_json::from_str(text).map_err(|e| ScenarioError::Parse {
        source_name: source_name.to_owned(),
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    match scenario.check() {
        Ok(warnings) => Ok(Parsed { scenario, warnings }),
        Err(Issue { path, message }) => Err(ScenarioError::Validation {
            source_name: source_name.to_owned(),
            line: locate_line(text, &path),
            path: path_string(&path),
            message,
        }),
    }
}

fn path_string(path: &[Seg]) -> String {
    let mut s = String::from("$");
    for seg in path {
        s.push_str(&seg.to_string());
    }
    s
}

impl Scenario {
    pub fn agent_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn edge_pairs(&self) -> Vec<(usize, usize)> {
        self.edges.iter().map(|&[i, j]| (i, j)).collect()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serializes")
    }

    /// Builds a scenario whose target is the given formation.
    pub fn from_formation(name: &str, f: &Formation, initial: Option<Initial>, notes: Option<String>) -> Self {
        let d = f.dim();
        Scenario {
            version: SCENARIO_VERSION,
            name: name.to_owned(),
            dimension: d,
            nodes: (0..f.agent_count())
                .map(|i| Node {
                    id: i + 1,
                    position: Some(f.positions().rows(i * d, d).iter().copied().collect()),
                })
                .collect(),
            edges: f.graph().edge_ids().into_iter().map(|(i, j)| [i, j]).collect(),
            target: Target::FromPositions { from_positions: true },
            initial,
            notes,
        }
    }

    /// Validated scenarios always build a graph.
    pub fn graph(&self) -> DirectedGraph {
        DirectedGraph::new(self.agent_count(), &self.edge_pairs()).expect("validated scenario")
    }

    fn stacked_positions(&self) -> Option<Vector> {
        let mut out = Vec::with_capacity(self.agent_count() * self.dimension);
        for node in &self.nodes {
            out.extend_from_slice(node.position.as_ref()?);
        }
        Some(Vector::from_vec(out))
    }

    /// The formation whose bearings define the target, when positions are given.
    pub fn target_formation(&self) -> Option<Formation> {
        match self.target {
            Target::FromPositions { .. } => {
                Some(Formation::new(self.graph(), self.dimension, self.stacked_positions()?).expect("validated scenario"))
            }
            Target::Bearings { .. } => None,
        }
    }

    pub fn constraints(&self) -> BearingConstraintSet {
        match &self.target {
            Target::FromPositions { .. } => self
                .target_formation()
                .expect("validated scenario")
                .constraints_from_target()
                .clone(),
            Target::Bearings { bearings } => BearingConstraintSet::new(
                self.graph(),
                self.dimension,
                bearings.iter().map(|b| Vector::from_column_slice(b)).collect(),
            )
            .expect("validated scenario"),
        }
    }

    /// Initial positions and the seed that produced them (if random).
    ///
    /// `seed_override` replaces the scenario's seed, or turns a scenario without
    /// an initial block into a random one over the default box.
    pub fn initial_positions(&self, seed_override: Option<u64>) -> Option<(Vector, Option<u64>)> {
        let n = self.agent_count();
        let d = self.dimension;
        match (&self.initial, seed_override) {
            (Some(Initial::Positions { positions }), None) => {
                Some((Vector::from_iterator(n * d, positions.iter().flatten().copied()), None))
            }
            (Some(Initial::Random { random_seed, bounds }), seed) => {
                let seed = seed.unwrap_or(*random_seed);
                Some((random_positions(n, d, seed, *bounds), Some(seed)))
            }
            (_, Some(seed)) => {
                let bounds = match &self.initial {
                    Some(Initial::Random { bounds, .. }) => *bounds,
                    _ => DEFAULT_BOX,
                };
                Some((random_positions(n, d, seed, bounds), Some(seed)))
            }
            (None, None) => None,
        }
    }

    fn check(&self) -> Result<Vec<String>, Issue> {
        use Seg::*;
        let mut warnings = Vec::new();
        if self.version != SCENARIO_VERSION {
            return Err(issue(
                vec![Key("version")],
                format!("unsupported version {} (expected {SCENARIO_VERSION})", self.version),
            ));
        }
        let d = self.dimension;
        if d < 2 {
            return Err(issue(vec![Key("dimension")], "dimension must be at least 2"));
        }
        let n = self.nodes.len();
        if n < 2 {
            return Err(issue(vec![Key("nodes")], "at least 2 nodes are required"));
        }
        for (k, node) in self.nodes.iter().enumerate() {
            if node.id != k + 1 {
                return Err(issue(
                    vec![Key("nodes"), Index(k), Key("id")],
                    format!("node ids must be unique and contiguous from 1; expected {}, found {}", k + 1, node.id),
                ));
            }
            if let Some(p) = &node.position {
                check_vector(p, d, vec![Key("nodes"), Index(k), Key("position")])?;
            }
        }
        let mut seen = std::collections::HashSet::new();
        for (k, &[i, j]) in self.edges.iter().enumerate() {
            let at = || vec![Key("edges"), Index(k)];
            for id in [i, j] {
                if id == 0 || id > n {
                    return Err(issue(at(), format!("vertex id {id} is outside 1..={n}")));
                }
            }
            if i == j {
                return Err(issue(at(), format!("self-loop on node {i}")));
            }
            if !seen.insert((i, j)) {
                return Err(issue(at(), format!("duplicate edge ({i}, {j})")));
            }
        }

        let has_positions = self.nodes.iter().all(|node| node.position.is_some());
        match &self.target {
            Target::FromPositions { from_positions } => {
                if !from_positions {
                    return Err(issue(
                        vec![Key("target"), Key("from_positions")],
                        "from_positions must be true; give explicit bearings otherwise",
                    ));
                }
                if let Some(k) = self.nodes.iter().position(|node| node.position.is_none()) {
                    return Err(issue(
                        vec![Key("nodes"), Index(k)],
                        "target from_positions requires a position on every node",
                    ));
                }
            }
            Target::Bearings { bearings } => {
                if bearings.len() != self.edges.len() {
                    return Err(issue(
                        vec![Key("target"), Key("bearings")],
                        format!("{} bearings given for {} edges", bearings.len(), self.edges.len()),
                    ));
                }
                for (k, b) in bearings.iter().enumerate() {
                    let at = vec![Key("target"), Key("bearings"), Index(k)];
                    check_vector(b, d, at.clone())?;
                    let norm = b.iter().map(|x| x * x).sum::<f64>().sqrt();
                    if (norm - 1.0).abs() > UNIT_NORM_TOL {
                        return Err(issue(at, format!("bearing is not unit length (norm {norm})")));
                    }
                }
            }
        }
        if has_positions {
            for (k, &[i, j]) in self.edges.iter().enumerate() {
                let (pi, pj) = (
                    self.nodes[i - 1].position.as_ref().unwrap(),
                    self.nodes[j - 1].position.as_ref().unwrap(),
                );
                let len = pi.iter().zip(pj).map(|(a, b)| (b - a).powi(2)).sum::<f64>().sqrt();
                if len < COINCIDENT_TOL {
                    return Err(issue(
                        vec![Key("edges"), Index(k)],
                        format!("nodes {i} and {j} coincide (distance {len:e})"),
                    ));
                }
            }
        }

        match &self.initial {
            Some(Initial::Positions { positions }) => {
                if positions.len() != n {
                    return Err(issue(
                        vec![Key("initial"), Key("positions")],
                        format!("{} initial positions given for {n} nodes", positions.len()),
                    ));
                }
                for (k, p) in positions.iter().enumerate() {
                    check_vector(p, d, vec![Key("initial"), Key("positions"), Index(k)])?;
                }
            }
            Some(Initial::Random { bounds, .. }) => {
                if !(bounds[0] < bounds[1]) || !bounds.iter().all(|b| b.is_finite()) {
                    return Err(issue(
                        vec![Key("initial"), Key("box")],
                        "box must be [lo, hi] with finite lo < hi",
                    ));
                }
            }
            None => {}
        }

        if !self.graph().is_weakly_connected() {
            warnings.push(format!(
                "graph of '{}' is not weakly connected; components evolve independently",
                self.name
            ));
        }
        Ok(warnings)
    }
}

fn check_vector(v: &[f64], d: usize, path: Vec<Seg>) -> Result<(), Issue> {
    if v.len() != d {
        return Err(issue(path, format!("expected {d} coordinates, found {}", v.len())));
    }
    if !v.iter().all(|x| x.is_finite()) {
        return Err(issue(path, "coordinates must be finite"));
    }
    Ok(())
}

/// Uniform positions in `[lo, hi)^(n d)` from a seeded ChaCha8 stream.
pub fn random_positions(n: usize, d: usize, seed: u64, bounds: [f64; 2]) -> Vector {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Vector::from_fn(n * d, |_, _| rng.gen_range(bounds[0]..bounds[1]))
}

/// 1-based line where the value at `path` starts. `text` must be valid JSON.
fn locate_line(text: &str, path: &[Seg]) -> Option<usize> {
    let mut scanner = Scanner {
        bytes: text.as_bytes(),
        pos: 0,
        line: 1,
    };
    let mut current = Vec::new();
    scanner.value(&mut current, path)
}

enum PathItem {
    Key(String),
    Index(usize),
}

struct Scanner<'a> {
    bytes: &'a [u8],
    pos: usize,
    line: usize,
}

impl Scanner<'_> {
    fn peek(&self) -> Option<u8> {
        self.bytes.get(self.pos).copied()
    }

    fn bump(&mut self) {
        if self.peek() == Some(b'\n') {
            self.line += 1;
        }
        self.pos += 1;
    }

    fn skip_ws(&mut self) {
        while matches!(self.peek(), Some(b' ' | b'\t' | b'\r' | b'\n')) {
            self.bump();
        }
    }

    fn string(&mut self) -> Option<String> {
        self.bump();
        let start = self.pos;
        loop {
            match self.peek()? {
                b'\\' => {
                    self.bump();
                    self.bump();
                }
                b'"' => break,
                _ => self.bump(),
            }
        }
        let s = String::from_utf8_lossy(&self.bytes[start..self.pos]).into_owned();
        self.bump();
        Some(s)
    }

    fn matches(current: &[PathItem], target: &[Seg]) -> bool {
        current.len() == target.len()
            && current.iter().zip(target).all(|(c, t)| match (c, t) {
                (PathItem::Key(a), Seg::Key(b)) => a == b,
                (PathItem::Index(a), Seg::Index(b)) => a == b,
                _ => false,
            })
    }

    /// Walks one value; returns the target's line as soon as it is reached.
    fn value(&mut self, current: &mut Vec<PathItem>, target: &[Seg]) -> Option<usize> {
        self.skip_ws();
        if Self::matches(current, target) {
            return Some(self.line);
        }
        match self.peek()? {
            b'{' => {
                self.bump();
                loop {
                    self.skip_ws();
                    match self.peek()? {
                        b'}' => {
                            self.bump();
                            return None;
                        }
                        b',' => self.bump(),
                        b'"' => {
                            let key = self.string()?;
                            self.skip_ws();
                            self.bump(); // ':'
                            current.push(PathItem::Key(key));
                            let found = self.value(current, target);
                            current.pop();
                            if found.is_some() {
                                return found;
                            }
                        }
                        _ => return None,
                    }
                }
            }
            b'[' => {
                self.bump();
                let mut index = 0;
                loop {
                    self.skip_ws();
                    match self.peek()? {
                        b']' => {
                            self.bump();
                            return None;
                        }
                        b',' => {
                            self.bump();
                            index += 1;
                        }
                        _ => {
                            current.push(PathItem::Index(index));
                            let found = self.value(current, target);
                            current.pop();
                            if found.is_some() {
                                return found;
                            }
                        }
                    }
                }
            }
            b'"' => {
                self.string()?;
                None
            }
            _ => {
                while !matches!(self.peek(), None | Some(b',' | b']' | b'}' | b' ' | b'\t' | b'\r' | b'\n')) {
                    self.bump();
                }
                None
            }
        }
    }
}
