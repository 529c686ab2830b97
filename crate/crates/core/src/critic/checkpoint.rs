//! Binary checkpoint format.
//!
//! ```text
//! "RHNET 1\n"
//! u32 block count
//! per block: u32 name length, UTF-8 name, u32 rows, u32 cols, rows*cols f64
//! ```
//!
//! All integers and floats are little-endian, weights row-major. Besides the
//! parameter blocks there are three meta blocks: `meta.arch` holds
//! `[node_dim, edge_dim, ego_dim, layers, hidden, embed, head...]`,
//! `meta.return_scale` one value and `meta.graph`
//! `[neighbors, edge_radius, sensor_radius, sign_range]`.

use std::path::{Path, PathBuf};

use super::{Arch, Critic, CriticError, GraphParams, ValueNet};

pub const CHECKPOINT_MAGIC: &[u8] = b"RHNET 1\n";

fn push_block(out: &mut Vec<u8>, name: &str, rows: usize, cols: usize, values: &[f64]) {
    out.extend_from_slice(&(name.len() as u32).to_le_bytes());
    out.extend_from_slice(name.as_bytes());
    out.extend_from_slice(&(rows as u32).to_le_bytes());
    out.extend_from_slice(&(cols as u32).to_le_bytes());
    for v in values {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

pub fn write_checkpoint(critic: &Critic) -> Vec<u8> {
    let net = &critic.net;
    let a = &net.arch;
    let mut arch = vec![a.node_dim, a.edge_dim, a.ego_dim, a.layers, a.hidden, a.embed];
    arch.extend(&a.head);
    let arch: Vec<f64> = arch.into_iter().map(|v| v as f64).collect();
    let g = &critic.graph;
    let graph = [g.neighbors as f64, g.edge_radius, g.sensor_radius, g.sign_range];

    let mut out = CHECKPOINT_MAGIC.to_vec();
    out.extend_from_slice(&((net.layout.len() + 3) as u32).to_le_bytes());
    push_block(&mut out, "meta.arch", arch.len(), 1, &arch);
    push_block(&mut out, "meta.return_scale", 1, 1, &[net.return_scale]);
    push_block(&mut out, "meta.graph", graph.len(), 1, &graph);
    for b in &net.layout {
        push_block(&mut out, &b.name, b.rows, b.cols, &net.params[b.range()]);
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8], CriticError> {
        let end = self.pos.checked_add(n).filter(|e| *e <= self.bytes.len());
        let end = end.ok_or_else(|| CriticError::Checkpoint(format!("truncated at byte {}", self.pos)))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<usize, CriticError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")) as usize)
    }
}

fn as_count(v: f64, what: &str) -> Result<usize, CriticError> {
    if v >= 0.0 && v.fract() == 0.0 && v < 1e6 {
        Ok(v as usize)
    } else {
        Err(CriticError::Checkpoint(format!("{what} is not a count: {v}")))
    }
}

pub fn read_checkpoint(bytes: &[u8]) -> Result<Critic, CriticError> {
    if !bytes.starts_with(CHECKPOINT_MAGIC) {
        return Err(CriticError::Checkpoint("missing RHNET 1 header".into()));
    }
    let mut r = Reader { bytes, pos: CHECKPOINT_MAGIC.len() };
    let count = r.u32()?;
    let mut blocks = Vec::with_capacity(count.min(1024));
    for _ in 0..count {
        let len = r.u32()?;
        let name = std::str::from_utf8(r.take(len)?)
            .map_err(|_| CriticError::Checkpoint("block name is not UTF-8".into()))?
            .to_string();
        let (rows, cols) = (r.u32()?, r.u32()?);
        let n = rows.checked_mul(cols).ok_or_else(|| CriticError::Checkpoint(format!("{name}: shape overflow")))?;
        let raw = r.take(n.checked_mul(8).ok_or_else(|| CriticError::Checkpoint("size overflow".into()))?)?;
        let values: Vec<f64> = raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect();
        if values.iter().any(|v| !v.is_finite()) {
            return Err(CriticError::Checkpoint(format!("{name}: non-finite value")));
        }
        blocks.push((name, rows, cols, values));
    }
    if r.pos != bytes.len() {
        return Err(CriticError::Checkpoint("trailing bytes".into()));
    }
    let meta = |name: &str| {
        blocks
            .iter()
            .find(|b| b.0 == name)
            .map(|b| b.3.clone())
            .ok_or_else(|| CriticError::Checkpoint(format!("missing {name}")))
    };
    let arch_v = meta("meta.arch")?;
    if arch_v.len() < 6 {
        return Err(CriticError::Checkpoint("meta.arch too short".into()));
    }
    let c: Vec<usize> = arch_v.iter().map(|v| as_count(*v, "meta.arch entry")).collect::<Result<_, _>>()?;
    let arch = Arch {
        node_dim: c[0],
        edge_dim: c[1],
        ego_dim: c[2],
        layers: c[3],
        hidden: c[4],
        embed: c[5],
        head: c[6..].to_vec(),
    };
    let scale = meta("meta.return_scale")?;
    let graph_v = meta("meta.graph")?;
    if scale.len() != 1 || graph_v.len() != 4 {
        return Err(CriticError::Checkpoint("malformed meta block".into()));
    }
    let graph = GraphParams {
        neighbors: as_count(graph_v[0], "neighbors")?,
        edge_radius: graph_v[1],
        sensor_radius: graph_v[2],
        sign_range: graph_v[3],
    };
    let mut net = ValueNet::zeros(arch, scale[0]);
    let params: Vec<_> = blocks.iter().filter(|b| !b.0.starts_with("meta.")).collect();
    if params.len() != net.layout.len() {
        return Err(CriticError::Checkpoint(format!(
            "expected {} parameter blocks, found {}",
            net.layout.len(),
            params.len()
        )));
    }
    for (want, got) in net.layout.clone().iter().zip(params) {
        if want.name != got.0 || want.rows != got.1 || want.cols != got.2 {
            return Err(CriticError::Checkpoint(format!(
                "block {} ({}x{}) does not match expected {} ({}x{})",
                got.0, got.1, got.2, want.name, want.rows, want.cols
            )));
        }
        net.params[want.range()].copy_from_slice(&got.3);
    }
    Ok(Critic { net, graph })
}

/// `<path>.json`, the human-readable hyperparameter sidecar.
pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut name = path.as_os_str().to_owned();
    name.push(".json");
    PathBuf::from(name)
}

/// Writes the checkpoint and its sidecar; `hyper` is merged with the
/// architecture and parameter count.
pub fn save_checkpoint(path: &Path, critic: &Critic, hyper: &serde_json::Value) -> Result<(), CriticError> {
    let io = |p: &Path| {
        let p = p.to_path_buf();
        move |source| CriticError::Io { path: p, source }
    };
    std::fs::write(path, write_checkpoint(critic)).map_err(io(path))?;
    let side = serde_json::json!({
        "format": "RHNET 1",
        "arch": critic.net.arch,
        "graph": critic.graph,
        "return_scale": critic.net.return_scale,
        "num_params": critic.net.num_params(),
        "hyperparameters": hyper,
    });
    let side_path = sidecar_path(path);
    let text = serde_json::to_string_pretty(&side).expect("json values serialise");
    std::fs::write(&side_path, text + "\n").map_err(io(&side_path))?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<Critic, CriticError> {
    let bytes = std::fs::read(path).map_err(|source| CriticError::Io { path: path.to_path_buf(), source })?;
    read_checkpoint(&bytes)
}
