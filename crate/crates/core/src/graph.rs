//! Cluster graphs: sites carrying roles, undirected edges, and the wire
//! bookkeeping the teleportation protocol relies on.
//!
//! A wire is an input/output pair with the same index; the sites between
//! them are body sites. Constructors cover the shapes the protocol runner
//! understands plus an all-body grid for carving experiments. Graphs also
//! round-trip through a line-based text format, one record per line.

use std::collections::BTreeSet;
use std::fmt;

use crate::error::{Error, Result};
use crate::pauli::{check_d, PauliWord};

/// What a site is for: a teleportation input, an output, or plain cluster
/// body. Input and output carry the wire index they belong to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SiteRole {
    Input(usize),
    Body,
    Output(usize),
}

impl fmt::Display for SiteRole {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SiteRole::Input(w) => write!(f, "input {w}"),
            SiteRole::Body => write!(f, "body"),
            SiteRole::Output(w) => write!(f, "output {w}"),
        }
    }
}

/// An undirected graph over sites `0..site_count`, with a level count `d`
/// shared by every site.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClusterGraph {
    d: usize,
    roles: Vec<SiteRole>,
    edges: BTreeSet<(usize, usize)>,
}

impl ClusterGraph {
    /// Build and validate a graph. Edges may come in any order and either
    /// orientation; they are stored with the smaller site first. Wire
    /// indices must form a contiguous range with exactly one input and one
    /// output each.
    pub fn new(
        d: usize,
        roles: Vec<SiteRole>,
        edges: impl IntoIterator<Item = (usize, usize)>,
    ) -> Result<Self> {
        check_d(d)?;
        if roles.is_empty() {
            return Err(Error::BadGraphShape("graph needs at least one site".into()));
        }
        let n = roles.len();
        let mut set = BTreeSet::new();
        for (a, b) in edges {
            if a >= n {
                return Err(Error::SiteOutOfRange { site: a, sites: n });
            }
            if b >= n {
                return Err(Error::SiteOutOfRange { site: b, sites: n });
            }
            if a == b {
                return Err(Error::DuplicateSite { site: a });
            }
            set.insert((a.min(b), a.max(b)));
        }
        let g = Self { d, roles, edges: set };
        g.check_wires()?;
        Ok(g)
    }

    fn check_wires(&self) -> Result<()> {
        let mut inputs = BTreeSet::new();
        let mut outputs = BTreeSet::new();
        for (site, role) in self.roles.iter().enumerate() {
            match role {
                SiteRole::Input(w) => {
                    if !inputs.insert(*w) {
                        return Err(Error::BadGraphShape(format!(
                            "wire {w} has two input sites (second at site {site})"
                        )));
                    }
                }
                SiteRole::Output(w) => {
                    if !outputs.insert(*w) {
                        return Err(Error::BadGraphShape(format!(
                            "wire {w} has two output sites (second at site {site})"
                        )));
                    }
                }
                SiteRole::Body => {}
            }
        }
        if inputs != outputs {
            return Err(Error::BadGraphShape(
                "input and output wire indices do not match".into(),
            ));
        }
        for (expect, &w) in inputs.iter().enumerate() {
            if w != expect {
                return Err(Error::BadGraphShape(format!(
                    "wire indices must be contiguous from 0, found {w}"
                )));
            }
        }
        Ok(())
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn site_count(&self) -> usize {
        self.roles.len()
    }

    pub fn roles(&self) -> &[SiteRole] {
        &self.roles
    }

    pub fn role(&self, site: usize) -> Result<SiteRole> {
        self.roles
            .get(site)
            .copied()
            .ok_or(Error::SiteOutOfRange { site, sites: self.roles.len() })
    }

    /// Edges with the smaller site first, ascending.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.edges.iter().copied()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    /// Number of input/output wire pairs.
    pub fn wire_count(&self) -> usize {
        self.roles
            .iter()
            .filter(|r| matches!(r, SiteRole::Input(_)))
            .count()
    }

    /// Neighbors of `a`, ascending.
    pub fn neighbors(&self, a: usize) -> Result<Vec<usize>> {
        self.role(a)?;
        let mut out = Vec::new();
        for &(x, y) in &self.edges {
            if x == a {
                out.push(y);
            } else if y == a {
                out.push(x);
            }
        }
        out.sort_unstable();
        Ok(out)
    }

    pub fn input_site(&self, wire: usize) -> Result<usize> {
        self.roles
            .iter()
            .position(|r| *r == SiteRole::Input(wire))
            .ok_or_else(|| Error::BadGraphShape(format!("no input site for wire {wire}")))
    }

    pub fn output_site(&self, wire: usize) -> Result<usize> {
        self.roles
            .iter()
            .position(|r| *r == SiteRole::Output(wire))
            .ok_or_else(|| Error::BadGraphShape(format!("no output site for wire {wire}")))
    }

    /// Sites the protocol measures (inputs and body), ascending.
    pub fn measured_sites(&self) -> Vec<usize> {
        self.roles
            .iter()
            .enumerate()
            .filter(|(_, r)| !matches!(r, SiteRole::Output(_)))
            .map(|(s, _)| s)
            .collect()
    }

    /// Output sites ordered by wire index.
    pub fn output_sites(&self) -> Vec<usize> {
        let mut pairs: Vec<(usize, usize)> = self
            .roles
            .iter()
            .enumerate()
            .filter_map(|(s, r)| match r {
                SiteRole::Output(w) => Some((*w, s)),
                _ => None,
            })
            .collect();
        pairs.sort_unstable();
        pairs.into_iter().map(|(_, s)| s).collect()
    }

    /// The correlation word of `a`: shift-inverse at `a` and one clock
    /// factor on each neighbor (`X_a^(d-1) * prod_b Z_b`), trivial phase.
    /// Cluster states of this graph are +1 eigenstates of every such word.
    pub fn correlation_operator(&self, a: usize) -> Result<PauliWord> {
        self.role(a)?;
        let mut w = PauliWord::single(self.d, a, 0, self.d - 1)?;
        for b in self.neighbors(a)? {
            w = w.mul(&PauliWord::z(self.d, b)?)?;
        }
        Ok(w)
    }

    /// Three sites in a line, input at 0, output at 2: the one-wire
    /// teleportation unit.
    pub fn teleport_unit(d: usize) -> Result<Self> {
        Self::new(
            d,
            vec![SiteRole::Input(0), SiteRole::Body, SiteRole::Output(0)],
            [(0, 1), (1, 2)],
        )
    }

    /// Odd-length chain with input at site 0 and output at site m-1.
    pub fn chain(d: usize, m: usize) -> Result<Self> {
        if m < 3 || m % 2 == 0 {
            return Err(Error::BadGraphShape(format!(
                "chain length must be odd and at least 3, got {m}"
            )));
        }
        let mut roles = vec![SiteRole::Body; m];
        roles[0] = SiteRole::Input(0);
        roles[m - 1] = SiteRole::Output(0);
        Self::new(d, roles, (0..m - 1).map(|i| (i, i + 1)))
    }

    /// Six sites carrying two wires whose body sites are cross-linked, so
    /// the wires do not teleport independently. Sites 0 and 1 are the
    /// inputs, 2 and 3 the body, 4 and 5 the outputs.
    pub fn coupled_pair(d: usize) -> Result<Self> {
        Self::new(
            d,
            vec![
                SiteRole::Input(0),
                SiteRole::Input(1),
                SiteRole::Body,
                SiteRole::Body,
                SiteRole::Output(0),
                SiteRole::Output(1),
            ],
            [(0, 2), (0, 3), (1, 3), (2, 4), (3, 4), (3, 5)],
        )
    }

    /// `n` disjoint three-site chains, one per wire. Wire `w` occupies
    /// sites 3w, 3w+1, 3w+2.
    pub fn parallel_stack(d: usize, n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::BadGraphShape("stack needs at least one wire".into()));
        }
        let mut roles = Vec::with_capacity(3 * n);
        let mut edges = Vec::with_capacity(2 * n);
        for w in 0..n {
            let base = 3 * w;
            roles.push(SiteRole::Input(w));
            roles.push(SiteRole::Body);
            roles.push(SiteRole::Output(w));
            edges.push((base, base + 1));
            edges.push((base + 1, base + 2));
        }
        Self::new(d, roles, edges)
    }

    /// Rectangular grid of body sites, row-major, with nearest-neighbor
    /// edges. Carving a path out of it yields a teleportation chain.
    pub fn grid(d: usize, rows: usize, cols: usize) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::BadGraphShape(format!(
                "grid must have positive extent, got {rows} x {cols}"
            )));
        }
        let roles = vec![SiteRole::Body; rows * cols];
        let mut edges = Vec::new();
        for r in 0..rows {
            for c in 0..cols {
                let s = r * cols + c;
                if c + 1 < cols {
                    edges.push((s, s + 1));
                }
                if r + 1 < rows {
                    edges.push((s, s + cols));
                }
            }
        }
        Self::new(d, roles, edges)
    }

    /// The graph with `site` removed and higher sites shifted down by one.
    pub fn without_site(&self, site: usize) -> Result<Self> {
        self.role(site)?;
        if self.roles.len() == 1 {
            return Err(Error::BadGraphShape("cannot remove the last site".into()));
        }
        let mut roles = self.roles.clone();
        roles.remove(site);
        let renumber = |s: usize| if s > site { s - 1 } else { s };
        let edges = self
            .edges
            .iter()
            .filter(|&&(a, b)| a != site && b != site)
            .map(|&(a, b)| (renumber(a), renumber(b)));
        Self::new(self.d, roles, edges)
    }

    /// Serialize to the line format: a `d` record, one `site` record per
    /// site, then one `edge` record per edge.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("d {}\n", self.d));
        for (site, role) in self.roles.iter().enumerate() {
            out.push_str(&format!("site {site} {role}\n"));
        }
        for &(a, b) in &self.edges {
            out.push_str(&format!("edge {a} {b}\n"));
        }
        out
    }

    /// Parse the line format produced by [`ClusterGraph::to_text`]. Blank
    /// lines and `#` comments are allowed; sites may appear in any order
    /// but must cover `0..n` exactly once each.
    pub fn from_text(text: &str) -> Result<Self> {
        let mut d: Option<usize> = None;
        let mut sites: Vec<(usize, SiteRole)> = Vec::new();
        let mut edges: Vec<(usize, usize)> = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = lineno + 1;
            let body = raw.split('#').next().unwrap_or("").trim();
            if body.is_empty() {
                continue;
            }
            let mut parts = body.split_whitespace();
            let parse = |tok: Option<&str>, what: &str| -> Result<usize> {
                tok.ok_or_else(|| Error::GraphParse {
                    line,
                    reason: format!("missing {what}"),
                })?
                .parse()
                .map_err(|_| Error::GraphParse {
                    line,
                    reason: format!("{what} is not a number"),
                })
            };
            match parts.next() {
                Some("d") => {
                    if d.replace(parse(parts.next(), "level count")?).is_some() {
                        return Err(Error::GraphParse {
                            line,
                            reason: "duplicate d record".into(),
                        });
                    }
                }
                Some("site") => {
                    let id = parse(parts.next(), "site id")?;
                    let role = match parts.next() {
                        Some("body") => SiteRole::Body,
                        Some("input") => SiteRole::Input(parse(parts.next(), "wire index")?),
                        Some("output") => SiteRole::Output(parse(parts.next(), "wire index")?),
                        other => {
                            return Err(Error::GraphParse {
                                line,
                                reason: format!("unknown role {other:?}"),
                            })
                        }
                    };
                    sites.push((id, role));
                }
                Some("edge") => {
                    let a = parse(parts.next(), "edge endpoint")?;
                    let b = parse(parts.next(), "edge endpoint")?;
                    edges.push((a, b));
                }
                other => {
                    return Err(Error::GraphParse {
                        line,
                        reason: format!("unknown record {other:?}"),
                    })
                }
            }
            if let Some(extra) = parts.next() {
                return Err(Error::GraphParse {
                    line,
                    reason: format!("unexpected trailing token {extra:?}"),
                });
            }
        }
        let d = d.ok_or(Error::GraphParse { line: 0, reason: "missing d record".into() })?;
        let n = sites.len();
        let mut roles = vec![None; n];
        for (id, role) in sites {
            if id >= n {
                return Err(Error::GraphParse {
                    line: 0,
                    reason: format!("site ids must cover 0..{n}, found {id}"),
                });
            }
            if roles[id].replace(role).is_some() {
                return Err(Error::GraphParse {
                    line: 0,
                    reason: format!("site {id} defined twice"),
                });
            }
        }
        let roles: Vec<SiteRole> = roles
            .into_iter()
            .collect::<Option<Vec<_>>>()
            .ok_or_else(|| Error::GraphParse { line: 0, reason: "missing site record".into() })?;
        Self::new(d, roles, edges)
    }
}
