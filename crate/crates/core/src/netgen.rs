//! Exposure-network generators.
//!
//! An edge `i -> j` means bank `i` lends to bank `j`: it is an asset of `i`
//! and a liability of `j`. Generators produce the topology; [`assign_loans`]
//! then splits each lender's interbank book equally over its borrowers.

use std::collections::BTreeSet;
use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{open_unit, unit};

#[derive(Debug, Clone, PartialEq)]
pub struct ExposureNetwork {
    borrowers: Vec<Vec<usize>>,
    loans: Vec<Vec<f64>>,
    generator: String,
}

impl ExposureNetwork {
    /// Builds a network from `(lender, borrower)` pairs. Rejects self-loops,
    /// duplicates and out-of-range endpoints.
    pub fn from_edges<I>(n: usize, edges: I, generator: impl Into<String>) -> Result<Self>
    where
        I: IntoIterator<Item = (usize, usize, f64)>,
    {
        let mut borrowers = vec![Vec::new(); n];
        let mut loans = vec![Vec::new(); n];
        let mut pairs: Vec<(usize, usize, f64)> = edges.into_iter().collect();
        pairs.sort_by_key(|&(src, dst, _)| (src, dst));
        for w in pairs.windows(2) {
            if w[0].0 == w[1].0 && w[0].1 == w[1].1 {
                return Err(Error::invalid(
                    "edges",
                    format!("duplicate edge {} -> {}", w[0].0, w[0].1),
                ));
            }
        }
        for (src, dst, weight) in pairs {
            if src >= n || dst >= n {
                return Err(Error::invalid("edges", format!("edge {src} -> {dst} outside 0..{n}")));
            }
            if src == dst {
                return Err(Error::invalid("edges", format!("self-loop at {src}")));
            }
            borrowers[src].push(dst);
            loans[src].push(weight);
        }
        Ok(ExposureNetwork {
            borrowers,
            loans,
            generator: generator.into(),
        })
    }

    fn from_adjacency(mut borrowers: Vec<Vec<usize>>, generator: String) -> Self {
        for b in &mut borrowers {
            b.sort_unstable();
        }
        let loans = borrowers.iter().map(|b| vec![0.0; b.len()]).collect();
        ExposureNetwork {
            borrowers,
            loans,
            generator,
        }
    }

    /// Number of banks.
    pub fn len(&self) -> usize {
        self.borrowers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.borrowers.is_empty()
    }

    pub fn generator(&self) -> &str {
        &self.generator
    }

    pub fn edge_count(&self) -> usize {
        self.borrowers.iter().map(Vec::len).sum()
    }

    pub fn out_degree(&self, bank: usize) -> usize {
        self.borrowers[bank].len()
    }

    pub fn borrowers(&self, bank: usize) -> &[usize] {
        &self.borrowers[bank]
    }

    pub fn loans(&self, bank: usize) -> &[f64] {
        &self.loans[bank]
    }

    pub fn has_edge(&self, lender: usize, borrower: usize) -> bool {
        self.borrowers[lender].binary_search(&borrower).is_ok()
    }

    /// All `(lender, borrower, amount)` triples in lender-major order.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        self.borrowers
            .iter()
            .zip(&self.loans)
            .enumerate()
            .flat_map(|(i, (bs, ws))| bs.iter().zip(ws).map(move |(&j, &w)| (i, j, w)))
    }

    /// Reverse adjacency: for each borrower, its `(lender, amount)` pairs.
    pub fn lenders(&self) -> Vec<Vec<(usize, f64)>> {
        let mut out = vec![Vec::new(); self.len()];
        for (i, j, w) in self.edges() {
            out[j].push((i, w));
        }
        out
    }

    pub fn in_degrees(&self) -> Vec<usize> {
        let mut deg = vec![0; self.len()];
        for bs in &self.borrowers {
            for &j in bs {
                deg[j] += 1;
            }
        }
        deg
    }

    /// Total (in + out) degree per bank.
    pub fn degrees(&self) -> Vec<usize> {
        let mut deg = self.in_degrees();
        for (i, bs) in self.borrowers.iter().enumerate() {
            deg[i] += bs.len();
        }
        deg
    }

    /// Average local clustering of the underlying undirected simple graph.
    pub fn average_clustering(&self) -> f64 {
        let n = self.len();
        if n == 0 {
            return 0.0;
        }
        let mut nbrs: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); n];
        for (i, j, _) in self.edges() {
            nbrs[i].insert(j);
            nbrs[j].insert(i);
        }
        let total: f64 = nbrs
            .iter()
            .map(|set| {
                let k = set.len();
                if k < 2 {
                    return 0.0;
                }
                let v: Vec<usize> = set.iter().copied().collect();
                let mut links = 0usize;
                for x in 0..k {
                    for y in x + 1..k {
                        if nbrs[v[x]].contains(&v[y]) {
                            links += 1;
                        }
                    }
                }
                2.0 * links as f64 / (k * (k - 1)) as f64
            })
            .sum();
        total / n as f64
    }

    pub fn interbank_total(&self, bank: usize) -> f64 {
        self.loans[bank].iter().sum()
    }
}

fn check_probability(name: &'static str, p: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::invalid(name, format!("must lie in [0, 1], got {p}")));
    }
    Ok(())
}

/// Directed Erdős–Rényi graph: each ordered pair `(i, j)`, `i != j`, is an
/// edge independently with probability `alpha`. Uses geometric skips over
/// the pair index, so the cost scales with the edge count.
pub fn erdos_renyi<R: RngCore + ?Sized>(m: usize, alpha: f64, rng: &mut R) -> Result<ExposureNetwork> {
    check_probability("alpha", alpha)?;
    if m == 0 {
        return Err(Error::invalid("M", "need at least one bank"));
    }
    let mut borrowers = vec![Vec::new(); m];
    let pairs = (m * (m - 1)) as u64;
    let label = format!("erdos_renyi(alpha={alpha})");
    if alpha == 0.0 || pairs == 0 {
        return Ok(ExposureNetwork::from_adjacency(borrowers, label));
    }
    let log_q = (1.0 - alpha).ln();
    let mut k: u64 = 0;
    loop {
        if alpha < 1.0 {
            let skip = (open_unit(rng).ln() / log_q).floor();
            if skip >= (pairs - k) as f64 {
                break;
            }
            k += skip as u64;
        }
        if k >= pairs {
            break;
        }
        let i = (k / (m as u64 - 1)) as usize;
        let r = (k % (m as u64 - 1)) as usize;
        let j = if r >= i { r + 1 } else { r };
        borrowers[i].push(j);
        k += 1;
    }
    Ok(ExposureNetwork::from_adjacency(borrowers, label))
}

fn mutual(adj: Vec<BTreeSet<usize>>) -> Vec<Vec<usize>> {
    adj.into_iter().map(|s| s.into_iter().collect()).collect()
}

/// Watts–Strogatz small world: ring lattice with `c` nearest neighbours,
/// each lattice edge rewired with probability `beta` to a uniformly chosen
/// new endpoint (no self-loops, no duplicates). Every undirected edge becomes
/// a pair of mutual loans.
pub fn watts_strogatz<R: RngCore + ?Sized>(m: usize, c: usize, beta: f64, rng: &mut R) -> Result<ExposureNetwork> {
    check_probability("beta", beta)?;
    if !c.is_multiple_of(2) {
        return Err(Error::invalid("c", format!("must be even, got {c}")));
    }
    if c >= m {
        return Err(Error::invalid("c", format!("must be smaller than M = {m}, got {c}")));
    }
    let mut adj: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); m];
    for i in 0..m {
        for k in 1..=c / 2 {
            let j = (i + k) % m;
            adj[i].insert(j);
            adj[j].insert(i);
        }
    }
    for k in 1..=c / 2 {
        for i in 0..m {
            let j = (i + k) % m;
            if unit(rng) >= beta || !adj[i].contains(&j) {
                continue;
            }
            if adj[i].len() >= m - 1 {
                continue;
            }
            let w = loop {
                let w = rng.random_range(0..m);
                if w != i && !adj[i].contains(&w) {
                    break w;
                }
            };
            adj[i].remove(&j);
            adj[j].remove(&i);
            adj[i].insert(w);
            adj[w].insert(i);
        }
    }
    Ok(ExposureNetwork::from_adjacency(
        mutual(adj),
        format!("watts_strogatz(c={c},beta={beta})"),
    ))
}

/// Core-periphery network: a directed Erdős–Rényi core of `m_core` banks,
/// then `m_periph` banks added one at a time, each lending to `m_links`
/// distinct existing banks chosen with probability proportional to their
/// current total degree.
pub fn core_periphery<R: RngCore + ?Sized>(
    m_core: usize,
    alpha_core: f64,
    m_periph: usize,
    m_links: usize,
    rng: &mut R,
) -> Result<ExposureNetwork> {
    if m_links > m_core {
        return Err(Error::invalid(
            "m_links",
            format!("must not exceed the core size {m_core}, got {m_links}"),
        ));
    }
    let core = erdos_renyi(m_core, alpha_core, rng)?;
    let total = m_core + m_periph;
    let mut borrowers: Vec<Vec<usize>> = (0..m_core).map(|i| core.borrowers(i).to_vec()).collect();
    borrowers.resize(total, Vec::new());
    let mut degree: Vec<usize> = core.degrees();
    degree.resize(total, 0);

    let mut keys: Vec<(f64, usize)> = Vec::with_capacity(total);
    for v in m_core..total {
        // Efraimidis–Spirakis: the m largest keys ln(u)/w form a weighted
        // sample without replacement. Zero-degree banks only fill leftovers.
        keys.clear();
        for (u, &d) in degree[..v].iter().enumerate() {
            let r = open_unit(rng);
            let key = if d > 0 { r.ln() / d as f64 } else { f64::NEG_INFINITY };
            keys.push((key, u));
        }
        let mut chosen: Vec<usize> = if keys.len() > m_links {
            keys.select_nth_unstable_by(m_links, |x, y| y.0.total_cmp(&x.0));
            keys[..m_links].iter().map(|k| k.1).collect()
        } else {
            keys.iter().map(|k| k.1).collect()
        };
        let mut filled: usize = chosen.iter().filter(|&&u| degree[u] > 0).count();
        if filled < chosen.len() {
            // Not enough connected banks: top up uniformly from the rest.
            chosen.retain(|&u| degree[u] > 0);
            let mut pool: Vec<usize> = (0..v).filter(|u| degree[*u] == 0).collect();
            while filled < m_links.min(v) {
                let k = rng.random_range(0..pool.len());
                chosen.push(pool.swap_remove(k));
                filled += 1;
            }
        }
        for &u in &chosen {
            degree[u] += 1;
        }
        degree[v] += chosen.len();
        borrowers[v] = chosen;
    }
    Ok(ExposureNetwork::from_adjacency(
        borrowers,
        format!("core_periphery(core={m_core},alpha={alpha_core},periphery={m_periph},links={m_links})"),
    ))
}

/// Every bank lends to every other bank.
pub fn complete(m: usize) -> ExposureNetwork {
    let borrowers = (0..m).map(|i| (0..m).filter(|&j| j != i).collect()).collect();
    ExposureNetwork::from_adjacency(borrowers, "complete".into())
}

/// Sets every loan of bank `i` to `theta * assets0[i] / out_degree(i)`.
/// Banks without borrowers lend nothing.
pub fn assign_loans(mut net: ExposureNetwork, theta: f64, assets0: &[f64]) -> Result<ExposureNetwork> {
    check_probability("theta", theta)?;
    if assets0.len() != net.len() {
        return Err(Error::invalid(
            "assets0",
            format!("length {} does not match network size {}", assets0.len(), net.len()),
        ));
    }
    for ((bs, ws), &a) in net.borrowers.iter().zip(net.loans.iter_mut()).zip(assets0) {
        if bs.is_empty() {
            continue;
        }
        let each = theta * a / bs.len() as f64;
        ws.iter_mut().for_each(|w| *w = each);
    }
    Ok(net)
}

/// Topology recipe used by the Monte Carlo driver.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NetworkSpec {
    ErdosRenyi {
        alpha: f64,
    },
    WattsStrogatz {
        c: usize,
        beta: f64,
    },
    /// Core of `core` banks; the remaining banks are periphery.
    CorePeriphery {
        core: usize,
        alpha_core: f64,
        links: usize,
    },
    Complete,
}

impl NetworkSpec {
    /// Sparse seed core: 50 banks, alpha 0.1, 15 links per newcomer.
    pub const CORE_PERIPHERY_SPARSE: NetworkSpec = NetworkSpec::CorePeriphery {
        core: 50,
        alpha_core: 0.1,
        links: 15,
    };
    /// Dense seed core: 50 banks, alpha 0.75, 15 links per newcomer.
    pub const CORE_PERIPHERY_DENSE: NetworkSpec = NetworkSpec::CorePeriphery {
        core: 50,
        alpha_core: 0.75,
        links: 15,
    };

    pub fn generate<R: RngCore + ?Sized>(&self, m: usize, rng: &mut R) -> Result<ExposureNetwork> {
        match *self {
            NetworkSpec::ErdosRenyi { alpha } => erdos_renyi(m, alpha, rng),
            NetworkSpec::WattsStrogatz { c, beta } => watts_strogatz(m, c, beta, rng),
            NetworkSpec::CorePeriphery {
                core,
                alpha_core,
                links,
            } => {
                if core > m {
                    return Err(Error::invalid("core", format!("core size {core} exceeds M = {m}")));
                }
                core_periphery(core, alpha_core, m - core, links, rng)
            }
            NetworkSpec::Complete => Ok(complete(m)),
        }
    }
}

impl fmt::Display for NetworkSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NetworkSpec::ErdosRenyi { alpha } => write!(f, "er:{alpha}"),
            NetworkSpec::WattsStrogatz { c, beta } => write!(f, "ws:{c}:{beta}"),
            NetworkSpec::CorePeriphery {
                core,
                alpha_core,
                links,
            } => {
                write!(f, "cp:{core}:{alpha_core}:{links}")
            }
            NetworkSpec::Complete => f.write_str("complete"),
        }
    }
}

/// Accepts `er:ALPHA`, `ws:C:BETA`, `cp:CORE:ALPHA:LINKS`, the presets
/// `cp:sparse` / `cp:dense`, and `complete`.
impl FromStr for NetworkSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.trim().split(':').collect();
        let bad = || Error::invalid("network", format!("cannot parse `{s}`"));
        let num = |x: &str| x.parse::<f64>().map_err(|_| bad());
        let int = |x: &str| x.parse::<usize>().map_err(|_| bad());
        match parts.as_slice() {
            ["complete"] => Ok(NetworkSpec::Complete),
            ["er", alpha] => Ok(NetworkSpec::ErdosRenyi { alpha: num(alpha)? }),
            ["ws", c, beta] => Ok(NetworkSpec::WattsStrogatz {
                c: int(c)?,
                beta: num(beta)?,
            }),
            ["cp", "sparse"] => Ok(NetworkSpec::CORE_PERIPHERY_SPARSE),
            ["cp", "dense"] => Ok(NetworkSpec::CORE_PERIPHERY_DENSE),
            ["cp", core, alpha, links] => Ok(NetworkSpec::CorePeriphery {
                core: int(core)?,
                alpha_core: num(alpha)?,
                links: int(links)?,
            }),
            _ => Err(bad()),
        }
    }
}

/// Sidecar metadata written next to an edge-list CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkMeta {
    #[serde(rename = "M")]
    pub m: usize,
    pub seed: u64,
    pub generator: String,
}

#[derive(Debug, Serialize, Deserialize)]
struct EdgeRow {
    src: usize,
    dst: usize,
    weight: f64,
}

/// Writes `src,dst,weight` rows with a header line.
pub fn write_edge_list<W: Write>(net: &ExposureNetwork, out: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(out);
    for (src, dst, weight) in net.edges() {
        w.serialize(EdgeRow { src, dst, weight })?;
    }
    if net.edge_count() == 0 {
        w.write_record(["src", "dst", "weight"])?;
    }
    w.flush()?;
    Ok(())
}

/// Reads an edge list produced by [`write_edge_list`]; the bank count comes
/// from the sidecar because isolated banks have no rows.
pub fn read_edge_list<R: Read>(input: R, meta: &NetworkMeta) -> Result<ExposureNetwork> {
    let mut r = csv::Reader::from_reader(input);
    let header = r.headers()?.clone();
    if header.iter().collect::<Vec<_>>() != ["src", "dst", "weight"] {
        return Err(Error::Parse {
            line: 1,
            reason: format!(
                "expected header `src,dst,weight`, got `{}`",
                header.iter().collect::<Vec<_>>().join(",")
            ),
        });
    }
    let mut edges = Vec::new();
    for row in r.deserialize::<EdgeRow>() {
        let row = row?;
        edges.push((row.src, row.dst, row.weight));
    }
    ExposureNetwork::from_edges(meta.m, edges, meta.generator.clone())
}
