//! The three fusion networks: attention neighborhood (AN), abundance
//! predictor (AP), and signature predictor (SP), built as differentiable
//! graph functions, plus model checkpointing.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::diffcore::{multi_head_attention, Graph, MhaIds, MhaParams, Param, TensorId};
use crate::eea::EndmemberEnsemble;
use crate::error::{Error, Result};

/// Largest divisor of `d_model` that is at most 4; the default head count for
/// all three networks.
pub fn default_heads(d_model: usize) -> usize {
    (1..=4.min(d_model)).rev().find(|h| d_model % h == 0).unwrap_or(1)
}

/// Attention Neighborhood parameters (the set called Theta).
#[derive(Debug, Clone, PartialEq)]
pub struct AnParams {
    pub mha: MhaParams<f64>,
    pub d_model: usize,
}

impl AnParams {
    pub fn init(l: usize, heads: usize, rng: &mut ChaCha8Rng) -> Result<Self> {
        Ok(AnParams { mha: MhaParams::init("an", l, heads, rng)?, d_model: l })
    }

    pub fn insert(&self, g: &mut Graph<f64>) -> Result<MhaIds> {
        self.mha.insert(g)
    }
}

/// Context-aware pixel: query = the pixel, keys/values = its neighborhood.
pub fn an_forward(
    g: &mut Graph<f64>,
    ids: &MhaIds,
    y: TensorId,
    eta: TensorId,
) -> Result<TensorId> {
    let (rows, _) = g.shape(eta);
    if rows == 0 {
        return Err(Error::InvalidArgument("empty neighborhood".into()));
    }
    multi_head_attention(g, ids, y, eta, eta)
}

/// Abundance Predictor parameters (the set called Psi): linear L->L,
/// multi-head self-attention, linear L->M, softmax; residual from the first
/// linear layer's input to the attention output.
#[derive(Debug, Clone, PartialEq)]
pub struct ApParams {
    pub w1: Param<f64>,
    pub b1: Param<f64>,
    pub mha: MhaParams<f64>,
    pub w2: Param<f64>,
    pub b2: Param<f64>,
    pub d_model: usize,
    pub m: usize,
}

pub struct ApIds {
    w1: TensorId,
    b1: TensorId,
    mha: MhaIds,
    w2: TensorId,
    b2: TensorId,
}

impl ApIds {
    /// Ids in the order the AP parameters are visited.
    pub fn flat(&self) -> Vec<TensorId> {
        let mut out = vec![self.w1, self.b1];
        out.extend(self.mha.flat());
        out.extend([self.w2, self.b2]);
        out
    }
}

impl ApParams {
    pub fn init(l: usize, m: usize, heads: usize, rng: &mut ChaCha8Rng) -> Result<Self> {
        Ok(ApParams {
            w1: Param::uniform_init("ap.w1", l, l, l, rng),
            b1: Param::uniform_init("ap.b1", 1, l, l, rng),
            mha: MhaParams::init("ap", l, heads, rng)?,
            w2: Param::uniform_init("ap.w2", l, m, l, rng),
            b2: Param::uniform_init("ap.b2", 1, m, l, rng),
            d_model: l,
            m,
        })
    }

    pub fn insert(&self, g: &mut Graph<f64>) -> Result<ApIds> {
        Ok(ApIds {
            w1: self.w1.insert(g)?,
            b1: self.b1.insert(g)?,
            mha: self.mha.insert(g)?,
            w2: self.w2.insert(g)?,
            b2: self.b2.insert(g)?,
        })
    }
}

/// Per-pixel abundance prediction from one context-aware pixel (`1 x L`).
pub fn ap_forward(g: &mut Graph<f64>, ids: &ApIds, y_bar: TensorId) -> Result<TensorId> {
    let x1 = g.matmul(y_bar, ids.w1)?;
    let x1 = g.add(x1, ids.b1)?;
    let attn = multi_head_attention(g, &ids.mha, x1, x1, x1)?;
    let z = g.add(attn, y_bar)?;
    let logits = g.matmul(z, ids.w2)?;
    let logits = g.add(logits, ids.b2)?;
    g.softmax_rows(logits)
}

/// Batched AP forward over a `D x L` matrix of context-aware pixels, one
/// independent token per row.
///
/// With a single token, each attention head's softmax weight is exactly 1, so
/// head_i reduces to `x' W_i^V`; the whole block batches into plain matrix
/// products. A unit test pins equality with the per-pixel path.
pub fn ap_forward_batch(g: &mut Graph<f64>, ids: &ApIds, x: TensorId) -> Result<TensorId> {
    let x1 = g.matmul(x, ids.w1)?;
    let x1 = g.add_broadcast_row(x1, ids.b1)?;
    let mut head_outs = Vec::with_capacity(ids.mha.heads.len());
    for &(_, _, wv) in &ids.mha.heads {
        head_outs.push(g.matmul(x1, wv)?);
    }
    let cat = if head_outs.len() == 1 {
        head_outs[0]
    } else {
        g.concat_cols(&head_outs)?
    };
    let attn = g.matmul(cat, ids.mha.w_o)?;
    let z = g.add(attn, x)?;
    let logits = g.matmul(z, ids.w2)?;
    let logits = g.add_broadcast_row(logits, ids.b2)?;
    g.softmax_rows(logits)
}

/// Signature Predictor parameters: M attention blocks (Phi) and M trainable
/// query vectors (Omega).
#[derive(Debug, Clone, PartialEq)]
pub struct SpParams {
    pub blocks: Vec<MhaParams<f64>>,
    pub omega: Vec<Param<f64>>,
    pub d_model: usize,
    /// False while the blocks are frozen single-head identities (stage 1).
    pub expanded: bool,
}

pub struct SpIds {
    blocks: Vec<MhaIds>,
    omega: Vec<TensorId>,
}

impl SpIds {
    /// Ids in the order the SP parameters are visited.
    pub fn flat(&self) -> Vec<TensorId> {
        let mut out = Vec::new();
        for b in &self.blocks {
            out.extend(b.flat());
        }
        out.extend(&self.omega);
        out
    }
}

impl SpParams {
    /// Stage-1 construction: identity blocks, frozen; queries anchored at the
    /// ensemble-group means plus small seeded noise.
    pub fn init_stage1(ensembles: &EndmemberEnsemble, rng: &mut ChaCha8Rng) -> Result<Self> {
        let m = ensembles.num_endmembers();
        if m == 0 {
            return Err(Error::InvalidArgument("empty ensemble".into()));
        }
        let l = ensembles.groups[0].ncols();
        let mut blocks = Vec::with_capacity(m);
        let mut omega = Vec::with_capacity(m);
        for (i, _group) in ensembles.groups.iter().enumerate() {
            blocks.push(MhaParams::identity(&format!("sp.b{i}"), l, false));
            // Small random queries start the softmax near uniform, so each
            // initial prediction sits near its candidate mean.
            omega.push(Param::uniform_init(&format!("sp.omega{i}"), 1, l, l, rng));
        }
        Ok(SpParams { blocks, omega, d_model: l, expanded: false })
    }

    /// Stage-2 expansion: re-express each identity block with `heads` heads
    /// computing the same function, and unfreeze everything.
    pub fn expand(&mut self, heads: usize) -> Result<()> {
        if self.expanded {
            return Ok(());
        }
        for (i, b) in self.blocks.iter_mut().enumerate() {
            *b = MhaParams::identity_expanded(&format!("sp.b{i}"), self.d_model, heads)?;
            b.set_trainable(true);
        }
        self.expanded = true;
        Ok(())
    }

    pub fn num_endmembers(&self) -> usize {
        self.blocks.len()
    }

    pub fn insert(&self, g: &mut Graph<f64>) -> Result<SpIds> {
        let blocks = self
            .blocks
            .iter()
            .map(|b| b.insert(g))
            .collect::<Result<Vec<_>>>()?;
        let omega = self
            .omega
            .iter()
            .map(|o| o.insert(g))
            .collect::<Result<Vec<_>>>()?;
        Ok(SpIds { blocks, omega })
    }
}

/// Predicted signatures `L x M`: column i is block i attending from query
/// Omega_i over ensemble group C_i.
pub fn sp_forward(
    g: &mut Graph<f64>,
    ids: &SpIds,
    ensembles: &EndmemberEnsemble,
) -> Result<TensorId> {
    let m = ids.blocks.len();
    if ensembles.num_endmembers() != m {
        return Err(Error::ShapeMismatch(format!(
            "{} ensemble groups for {m} blocks",
            ensembles.num_endmembers()
        )));
    }
    let mut rows = Vec::with_capacity(m);
    for i in 0..m {
        let group = &ensembles.groups[i];
        let c = g.constant(group.nrows(), group.ncols(), group.iter().cloned().collect())?;
        let out = multi_head_attention(g, &ids.blocks[i], ids.omega[i], c, c)?;
        rows.push(out);
    }
    let stacked = g.concat_rows(&rows)?; // M x L
    g.transpose(stacked)
}

/// Reconstruction under the linear mixing model: `Y_hat = S_hat A_hat`.
pub fn reconstruct(g: &mut Graph<f64>, s_hat: TensorId, a_hat: TensorId) -> Result<TensorId> {
    g.matmul(s_hat, a_hat)
}

/// The full trainable parameter bundle.
#[derive(Debug, Clone, PartialEq)]
pub struct FsModelParams {
    pub an: AnParams,
    pub ap: ApParams,
    pub sp: SpParams,
}

impl FsModelParams {
    pub fn visit_params<'a>(&'a self, f: &mut impl FnMut(&'a Param<f64>)) {
        self.an.mha.visit(f);
        f(&self.ap.w1);
        f(&self.ap.b1);
        self.ap.mha.visit(f);
        f(&self.ap.w2);
        f(&self.ap.b2);
        for b in &self.sp.blocks {
            b.visit(f);
        }
        for o in &self.sp.omega {
            f(o);
        }
    }

    pub fn visit_params_mut(&mut self, mut f: impl FnMut(&mut Param<f64>)) {
        self.an.mha.visit_mut(&mut f);
        f(&mut self.ap.w1);
        f(&mut self.ap.b1);
        self.ap.mha.visit_mut(&mut f);
        f(&mut self.ap.w2);
        f(&mut self.ap.b2);
        for b in &mut self.sp.blocks {
            b.visit_mut(&mut f);
        }
        for o in &mut self.sp.omega {
            f(o);
        }
    }
}

const CKPT_MAGIC: &[u8; 4] = b"FSCP";
const CKPT_VERSION: u32 = 1;

#[derive(serde::Serialize, serde::Deserialize)]
struct CkptMeta {
    l: usize,
    m: usize,
    h_an: usize,
    h_ap: usize,
    sp_heads: usize,
    sp_expanded: bool,
}

/// Versioned binary checkpoint: header + named shape-tagged float64 tensors.
/// Round-trips bit-exactly.
pub fn save_checkpoint(model: &FsModelParams, path: &Path) -> Result<()> {
    let meta = CkptMeta {
        l: model.an.d_model,
        m: model.ap.m,
        h_an: model.an.mha.heads(),
        h_ap: model.ap.mha.heads(),
        sp_heads: model.sp.blocks.first().map_or(1, |b| b.heads()),
        sp_expanded: model.sp.expanded,
    };
    let meta_json = serde_json::to_vec(&meta)
        .map_err(|e| Error::Format(format!("checkpoint meta: {e}")))?;
    let mut tensors: Vec<&Param<f64>> = Vec::new();
    model.visit_params(&mut |p| tensors.push(p));

    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(CKPT_MAGIC)?;
    w.write_all(&CKPT_VERSION.to_le_bytes())?;
    w.write_all(&(meta_json.len() as u32).to_le_bytes())?;
    w.write_all(&meta_json)?;
    w.write_all(&(tensors.len() as u32).to_le_bytes())?;
    for p in tensors {
        w.write_all(&(p.name.len() as u32).to_le_bytes())?;
        w.write_all(p.name.as_bytes())?;
        w.write_all(&(p.rows as u32).to_le_bytes())?;
        w.write_all(&(p.cols as u32).to_le_bytes())?;
        w.write_all(&[p.trainable as u8])?;
        for &v in &p.data {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<FsModelParams> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic).map_err(|_| Error::Format("truncated checkpoint".into()))?;
    if &magic != CKPT_MAGIC {
        return Err(Error::Format("bad magic, not a checkpoint".into()));
    }
    let mut u32b = [0u8; 4];
    r.read_exact(&mut u32b)?;
    let version = u32::from_le_bytes(u32b);
    if version != CKPT_VERSION {
        return Err(Error::Format(format!("unsupported checkpoint version {version}")));
    }
    r.read_exact(&mut u32b)?;
    let meta_len = u32::from_le_bytes(u32b) as usize;
    let mut meta_buf = vec![0u8; meta_len];
    r.read_exact(&mut meta_buf)?;
    let meta: CkptMeta = serde_json::from_slice(&meta_buf)
        .map_err(|e| Error::Format(format!("checkpoint meta: {e}")))?;

    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let an = AnParams::init(meta.l, meta.h_an, &mut rng)?;
    let ap = ApParams::init(meta.l, meta.m, meta.h_ap, &mut rng)?;
    let dummy = EndmemberEnsemble {
        groups: (0..meta.m).map(|_| Array2::zeros((1, meta.l))).collect(),
    };
    let mut sp = SpParams::init_stage1(&dummy, &mut rng)?;
    if meta.sp_expanded {
        sp.expand(meta.sp_heads)?;
    }
    let mut model = FsModelParams { an, ap, sp };

    r.read_exact(&mut u32b)?;
    let count = u32::from_le_bytes(u32b) as usize;
    let mut loaded: std::collections::HashMap<String, (usize, usize, bool, Vec<f64>)> =
        std::collections::HashMap::new();
    for _ in 0..count {
        r.read_exact(&mut u32b)?;
        let name_len = u32::from_le_bytes(u32b) as usize;
        let mut name_buf = vec![0u8; name_len];
        r.read_exact(&mut name_buf)?;
        let name = String::from_utf8(name_buf)
            .map_err(|_| Error::Format("bad tensor name".into()))?;
        r.read_exact(&mut u32b)?;
        let rows = u32::from_le_bytes(u32b) as usize;
        r.read_exact(&mut u32b)?;
        let cols = u32::from_le_bytes(u32b) as usize;
        let mut flag = [0u8; 1];
        r.read_exact(&mut flag)?;
        let mut data = vec![0.0; rows * cols];
        let mut f64b = [0u8; 8];
        for v in &mut data {
            r.read_exact(&mut f64b)
                .map_err(|_| Error::Format("truncated tensor payload".into()))?;
            *v = f64::from_le_bytes(f64b);
        }
        loaded.insert(name, (rows, cols, flag[0] != 0, data));
    }
    let mut missing = Vec::new();
    model.visit_params_mut(|p| match loaded.get(&p.name) {
        Some((rows, cols, trainable, data)) if *rows == p.rows && *cols == p.cols => {
            p.data = data.clone();
            p.trainable = *trainable;
        }
        _ => missing.push(p.name.clone()),
    });
    if !missing.is_empty() {
        return Err(Error::Format(format!("checkpoint missing tensors: {missing:?}")));
    }
    Ok(model)
}
