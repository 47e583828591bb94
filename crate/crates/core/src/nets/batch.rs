use crate::envs::{TeamSpec, ID_DIM};
use crate::error::{Error, Result};

/// Node inputs and edges for one or more teams.
///
/// Several graphs can be stacked into one disconnected graph so a whole
/// rollout is evaluated in a single forward pass. Edges always include a self
/// loop per node.
#[derive(Clone, Debug, PartialEq)]
pub struct GraphBatch {
    obs_dim: usize,
    cap_dim: usize,
    observations: Vec<f64>,
    capabilities: Vec<f64>,
    ids: Option<Vec<usize>>,
    /// Message `src → dst` for every edge.
    src: Vec<usize>,
    dst: Vec<usize>,
    /// Node ranges of the stacked graphs; `offsets.len() == graphs + 1`.
    offsets: Vec<usize>,
}

fn flatten(rows: &[Vec<f64>], what: &str) -> Result<(usize, Vec<f64>)> {
    let width = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != width) {
        return Err(Error::Layout {
            expected: format!("{what} rows of equal width {width}"),
            found: rows.iter().map(Vec::len).find(|&l| l != width).unwrap_or(0),
        });
    }
    Ok((width, rows.concat()))
}

impl GraphBatch {
    /// One team, fully connected.
    pub fn new(observations: &[Vec<f64>], capabilities: &[Vec<f64>], ids: Option<Vec<usize>>) -> Result<Self> {
        let n = observations.len();
        let adjacency = vec![vec![true; n]; n];
        Self::with_adjacency(observations, capabilities, ids, &adjacency)
    }

    /// One team with an explicit symmetric adjacency. The diagonal is ignored;
    /// every node always aggregates its own message.
    #[allow(clippy::needless_range_loop)]
    pub fn with_adjacency(
        observations: &[Vec<f64>],
        capabilities: &[Vec<f64>],
        ids: Option<Vec<usize>>,
        adjacency: &[Vec<bool>],
    ) -> Result<Self> {
        let n = observations.len();
        if n == 0 {
            return Err(Error::InvalidTeam("graph has no nodes".into()));
        }
        if capabilities.len() != n {
            return Err(Error::TeamSize {
                expected: n,
                found: capabilities.len(),
            });
        }
        if let Some(ids) = &ids {
            if ids.len() != n {
                return Err(Error::TeamSize {
                    expected: n,
                    found: ids.len(),
                });
            }
            if let Some(bad) = ids.iter().find(|&&i| i >= ID_DIM) {
                return Err(Error::InvalidTeam(format!("id {bad} outside the {ID_DIM}-robot pool")));
            }
        }
        if adjacency.len() != n || adjacency.iter().any(|r| r.len() != n) {
            return Err(Error::Adjacency(format!("expected {n}x{n}")));
        }
        let mut src = Vec::new();
        let mut dst = Vec::new();
        for i in 0..n {
            for j in 0..n {
                if adjacency[i][j] != adjacency[j][i] {
                    return Err(Error::Adjacency(format!("entry ({i}, {j}) differs from ({j}, {i})")));
                }
                if i == j || adjacency[i][j] {
                    src.push(j);
                    dst.push(i);
                }
            }
        }
        let (obs_dim, observations) = flatten(observations, "observation")?;
        let (cap_dim, capabilities) = flatten(capabilities, "capability")?;
        Ok(Self {
            obs_dim,
            cap_dim,
            observations,
            capabilities,
            ids,
            src,
            dst,
            offsets: vec![0, n],
        })
    }

    /// Fully connected graph for `team` with the given base observations.
    pub fn for_team(team: &TeamSpec, observations: &[Vec<f64>]) -> Result<Self> {
        Self::new(observations, &team.capabilities(), team.ids())
    }

    /// Concatenates graphs into one disconnected batch.
    pub fn stack(parts: &[GraphBatch]) -> Result<Self> {
        let first = parts
            .first()
            .ok_or_else(|| Error::InvalidTeam("cannot stack zero graphs".into()))?;
        let mut out = GraphBatch {
            obs_dim: first.obs_dim,
            cap_dim: first.cap_dim,
            observations: Vec::new(),
            capabilities: Vec::new(),
            ids: first.ids.as_ref().map(|_| Vec::new()),
            src: Vec::new(),
            dst: Vec::new(),
            offsets: vec![0],
        };
        for part in parts {
            if part.obs_dim != out.obs_dim || part.cap_dim != out.cap_dim {
                return Err(Error::Layout {
                    expected: format!("{} observation + {} capability columns", out.obs_dim, out.cap_dim),
                    found: part.obs_dim + part.cap_dim,
                });
            }
            let base = out.num_nodes();
            out.observations.extend_from_slice(&part.observations);
            out.capabilities.extend_from_slice(&part.capabilities);
            out.ids = match (out.ids.take(), &part.ids) {
                (Some(mut acc), Some(ids)) => {
                    acc.extend_from_slice(ids);
                    Some(acc)
                }
                _ => None,
            };
            out.src.extend(part.src.iter().map(|s| s + base));
            out.dst.extend(part.dst.iter().map(|d| d + base));
            for w in part.offsets.windows(2) {
                out.offsets.push(base + w[1]);
            }
        }
        Ok(out)
    }

    pub fn num_nodes(&self) -> usize {
        *self.offsets.last().unwrap_or(&0)
    }

    pub fn num_graphs(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn offsets(&self) -> &[usize] {
        &self.offsets
    }

    /// Nodes per graph if every graph has the same size.
    pub fn uniform_graph_size(&self) -> Option<usize> {
        let n = self.offsets[1] - self.offsets[0];
        self.offsets.windows(2).all(|w| w[1] - w[0] == n).then_some(n)
    }

    pub fn obs_dim(&self) -> usize {
        self.obs_dim
    }

    pub fn cap_dim(&self) -> usize {
        self.cap_dim
    }

    pub fn observation(&self, i: usize) -> &[f64] {
        &self.observations[i * self.obs_dim..(i + 1) * self.obs_dim]
    }

    pub fn capability(&self, i: usize) -> &[f64] {
        &self.capabilities[i * self.cap_dim..(i + 1) * self.cap_dim]
    }

    pub fn ids(&self) -> Option<&[usize]> {
        self.ids.as_deref()
    }

    pub fn edges(&self) -> (&[usize], &[usize]) {
        (&self.src, &self.dst)
    }
}
