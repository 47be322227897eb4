//! Training orchestration: AN training with context-pixel generation, the
//! two-stage AP+SP procedure with the control volume, and the end-to-end
//! unmixing composition.

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::diffcore::{AdamState, Graph, Param, TensorId};
use crate::eea::{build_ensembles, run_eea, EeaAlgorithm, EndmemberEnsemble};
use crate::error::{Error, Result};
use crate::fsnet::{
    an_forward, ap_forward_batch, default_heads, save_checkpoint, sp_forward, AnParams, ApParams,
    FsModelParams, SpParams,
};
use crate::geometry::{pca_fit, simplex_volume, PcaProjection};
use crate::neighborhood::{gather_neighbors, neighbor_offsets, NeighborhoodSpec};
use crate::objectives::{mse_loss, stage_loss, LossWeights, TrainStage};
use crate::scene::HsImage;

/// Seeds for the independent random streams of one training job.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Seeds {
    pub params: u64,
    pub shuffle: u64,
    pub eea: u64,
}

impl Default for Seeds {
    fn default() -> Self {
        Seeds { params: 1, shuffle: 2, eea: 3 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub lr: f64,
    pub batch: usize,
    pub epochs_an: usize,
    pub epochs_stage1: usize,
    pub epochs_stage2: usize,
    pub weights: LossWeights,
    pub nbhd: NeighborhoodSpec,
    pub seeds: Seeds,
    /// Head counts; 0 selects the default for the band count.
    pub heads_an: usize,
    pub heads_ap: usize,
    pub heads_sp: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr: 1e-4,
            batch: 400,
            epochs_an: 50,
            epochs_stage1: 300,
            epochs_stage2: 100,
            weights: LossWeights::default(),
            nbhd: NeighborhoodSpec::circle(2),
            seeds: Seeds::default(),
            heads_an: 0,
            heads_ap: 0,
            heads_sp: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::Config(format!("learning rate {} must be positive", self.lr)));
        }
        if self.batch == 0 {
            return Err(Error::Config("batch size must be >= 1".into()));
        }
        self.weights.validate()?;
        Ok(())
    }

    fn resolve_heads(&self, l: usize) -> (usize, usize, usize) {
        let auto = default_heads(l);
        let pick = |h: usize| if h == 0 { auto } else { h };
        (pick(self.heads_an), pick(self.heads_ap), pick(self.heads_sp))
    }
}

/// Per-epoch mean volume and min-vol contribution during stage 2.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MinVolTrace {
    pub volume: f64,
    pub penalty: f64,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct TrainReport {
    pub an_loss: Vec<f64>,
    pub stage1_loss: Vec<f64>,
    pub stage2_loss: Vec<f64>,
    pub minvol_trace: Vec<MinVolTrace>,
    pub v_t: Option<f64>,
    pub secs_an: f64,
    pub secs_stage1: f64,
    pub secs_stage2: f64,
}

fn shuffled_batches(n: usize, batch: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<usize>> {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(rng);
    idx.chunks(batch).map(|c| c.to_vec()).collect()
}

fn collect_grads(
    g: &Graph<f64>,
    names: &[String],
    ids: &[TensorId],
) -> HashMap<String, Vec<f64>> {
    let mut out = HashMap::new();
    for (name, &id) in names.iter().zip(ids) {
        if let Some(grad) = g.grad(id) {
            out.insert(name.clone(), grad.to_vec());
        }
    }
    out
}

fn apply_grads(
    adam: &mut AdamState<f64>,
    grads: &HashMap<String, Vec<f64>>,
    mut visit: impl FnMut(&mut dyn FnMut(&mut Param<f64>) -> Result<()>) -> Result<()>,
) -> Result<()> {
    if grads.is_empty() {
        return Ok(());
    }
    adam.begin_step();
    visit(&mut |p: &mut Param<f64>| {
        if let Some(gr) = grads.get(&p.name) {
            adam.update(p, gr)?;
        }
        Ok(())
    })
}

fn param_names<F: FnMut(&mut dyn FnMut(&Param<f64>))>(mut visit: F) -> Vec<String> {
    let mut names = Vec::new();
    visit(&mut |p: &Param<f64>| names.push(p.name.clone()));
    names
}

/// Algorithm: train the attention neighborhood on batched MSE between the
/// context-aware and observed pixels, then generate the context pixels once
/// for the whole image.
pub fn train_an(
    img: &HsImage,
    cfg: &TrainConfig,
) -> Result<(AnParams, Array2<f64>, Vec<f64>, f64)> {
    cfg.validate()?;
    let n = img.num_pixels();
    if n == 0 {
        return Err(Error::InvalidArgument("empty image".into()));
    }
    let l = img.bands;
    let (h_an, _, _) = cfg.resolve_heads(l);
    let offsets = neighbor_offsets(&cfg.nbhd)?;
    let start = Instant::now();

    // Neighborhoods are fixed; gather them once.
    let etas: Vec<Array2<f64>> = (0..n)
        .map(|k| gather_neighbors(img, k, &offsets))
        .collect::<Result<_>>()?;

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seeds.params);
    let an = AnParams::init(l, h_an, &mut rng)?;
    let mut an = an;
    let names = param_names(|f| an.mha.visit(&mut |p| f(p)));
    let mut adam = AdamState::new(cfg.lr);
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(cfg.seeds.shuffle);
    let mut losses = Vec::with_capacity(cfg.epochs_an);

    for _epoch in 0..cfg.epochs_an {
        let batches = shuffled_batches(n, cfg.batch, &mut shuffle_rng);
        let mut epoch_loss = 0.0;
        for batch in &batches {
            let mut g: Graph<f64> = Graph::new();
            let ids = an.insert(&mut g)?;
            let flat = ids.flat();
            let mut outs = Vec::with_capacity(batch.len());
            let mut targets = Vec::with_capacity(batch.len());
            for &k in batch {
                let y = g.constant(1, l, img.data.column(k).to_vec())?;
                let eta = g.constant(
                    etas[k].nrows(),
                    l,
                    etas[k].iter().cloned().collect(),
                )?;
                outs.push(an_forward(&mut g, &ids, y, eta)?);
                targets.push(y);
            }
            let y_bar = g.concat_rows(&outs)?;
            let y_obs = g.concat_rows(&targets)?;
            let loss = mse_loss(&mut g, y_bar, y_obs)?;
            g.backward(loss)?;
            epoch_loss += g.scalar_value(loss);
            let grads = collect_grads(&g, &names, &flat);
            apply_grads(&mut adam, &grads, |f| {
                let mut err = Ok(());
                an.mha.visit_mut(|p| {
                    if err.is_ok() {
                        err = f(p);
                    }
                });
                err
            })?;
        }
        losses.push(epoch_loss / batches.len() as f64);
    }

    // Context-aware pixel generation over the full image.
    let mut y_bar = Array2::<f64>::zeros((l, n));
    for chunk in (0..n).collect::<Vec<_>>().chunks(512) {
        let mut g: Graph<f64> = Graph::new();
        let ids = an.insert(&mut g)?;
        for &k in chunk {
            let y = g.constant(1, l, img.data.column(k).to_vec())?;
            let eta = g.constant(etas[k].nrows(), l, etas[k].iter().cloned().collect())?;
            let out = an_forward(&mut g, &ids, y, eta)?;
            for (b, &v) in g.value(out).iter().enumerate() {
                y_bar[[b, k]] = v;
            }
        }
    }
    Ok((an, y_bar, losses, start.elapsed().as_secs_f64()))
}

/// V_T: simplex volume of the current SP prediction under the projection.
pub fn control_volume(
    sp: &SpParams,
    ensembles: &EndmemberEnsemble,
    proj: &PcaProjection<f64>,
) -> Result<f64> {
    let mut g: Graph<f64> = Graph::new();
    let ids = sp.insert(&mut g)?;
    let s = sp_forward(&mut g, &ids, ensembles)?;
    let (l, m) = g.shape(s);
    let s_arr = Array2::from_shape_vec((l, m), g.value(s).to_vec())
        .map_err(|e| Error::ShapeMismatch(e.to_string()))?;
    simplex_volume(s_arr.view(), proj)
}

/// Predict abundances for every column of `y_bar` with the trained AP.
pub fn predict_abundances(ap: &ApParams, y_bar: &Array2<f64>) -> Result<Array2<f64>> {
    let (l, n) = y_bar.dim();
    let m = ap.m;
    let mut a = Array2::<f64>::zeros((m, n));
    for chunk in (0..n).collect::<Vec<_>>().chunks(1024) {
        let mut g: Graph<f64> = Graph::new();
        let ids = ap.insert(&mut g)?;
        let mut data = Vec::with_capacity(chunk.len() * l);
        for &k in chunk {
            data.extend(y_bar.column(k).iter());
        }
        let x = g.constant(chunk.len(), l, data)?;
        let out = ap_forward_batch(&mut g, &ids, x)?;
        let v = g.value(out);
        for (row, &k) in chunk.iter().enumerate() {
            for i in 0..m {
                a[[i, k]] = v[row * m + i];
            }
        }
    }
    Ok(a)
}

/// Predict signatures with the trained SP.
pub fn predict_signatures(
    sp: &SpParams,
    ensembles: &EndmemberEnsemble,
) -> Result<Array2<f64>> {
    let mut g: Graph<f64> = Graph::new();
    let ids = sp.insert(&mut g)?;
    let s = sp_forward(&mut g, &ids, ensembles)?;
    let (l, m) = g.shape(s);
    Array2::from_shape_vec((l, m), g.value(s).to_vec())
        .map_err(|e| Error::ShapeMismatch(e.to_string()))
}

struct StageOutcome {
    losses: Vec<f64>,
    minvol: Vec<MinVolTrace>,
    secs: f64,
}

#[allow(clippy::too_many_arguments)]
fn run_stage(
    ap: &mut ApParams,
    sp: &mut SpParams,
    y_bar: &Array2<f64>,
    y: &Array2<f64>,
    ensembles: &EndmemberEnsemble,
    proj: &PcaProjection<f64>,
    cfg: &TrainConfig,
    stage: TrainStage,
    epochs: usize,
    v_t: Option<f64>,
    adam: &mut AdamState<f64>,
    shuffle_rng: &mut ChaCha8Rng,
) -> Result<StageOutcome> {
    let (l, n) = y.dim();
    let start = Instant::now();
    let mut losses = Vec::with_capacity(epochs);
    let mut minvol = Vec::with_capacity(epochs);
    let ap_names = param_names(|f| {
        f(&ap.w1);
        f(&ap.b1);
        ap.mha.visit(&mut |p| f(p));
        f(&ap.w2);
        f(&ap.b2);
    });
    let sp_names = param_names(|f| {
        for b in &sp.blocks {
            b.visit(&mut |p| f(p));
        }
        for o in &sp.omega {
            f(o);
        }
    });
    let names: Vec<String> = ap_names.iter().chain(&sp_names).cloned().collect();

    for _epoch in 0..epochs {
        let batches = shuffled_batches(n, cfg.batch, shuffle_rng);
        let mut epoch_loss = 0.0;
        let mut epoch_vol = 0.0;
        let mut epoch_pen = 0.0;
        for batch in &batches {
            let mut g: Graph<f64> = Graph::new();
            let ap_ids = ap.insert(&mut g)?;
            let sp_ids = sp.insert(&mut g)?;
            let mut flat = ap_ids.flat();
            flat.extend(sp_ids.flat());

            let s_hat = sp_forward(&mut g, &sp_ids, ensembles)?;
            let mut x_data = Vec::with_capacity(batch.len() * l);
            let mut y_data = Vec::with_capacity(batch.len() * l);
            for &k in batch {
                x_data.extend(y_bar.column(k).iter());
                y_data.extend(y.column(k).iter());
            }
            let x = g.constant(batch.len(), l, x_data)?;
            let y_obs = g.constant(batch.len(), l, y_data)?;
            let a_rows = ap_forward_batch(&mut g, &ap_ids, x)?; // D x M
            let s_t = g.transpose(s_hat)?; // M x L
            let y_hat = g.matmul(a_rows, s_t)?; // D x L, one pixel per row
            let loss = stage_loss(&mut g, y_hat, y_obs, s_hat, &cfg.weights, stage, v_t, Some(proj))?;
            g.backward(loss)?;
            epoch_loss += g.scalar_value(loss);
            if stage == TrainStage::Stage2 {
                let (lrows, mcols) = g.shape(s_hat);
                let s_arr = Array2::from_shape_vec((lrows, mcols), g.value(s_hat).to_vec())
                    .map_err(|e| Error::ShapeMismatch(e.to_string()))?;
                let vol = simplex_volume(s_arr.view(), proj)?;
                epoch_vol += vol;
                epoch_pen += cfg.weights.minvol * (vol - v_t.unwrap_or(0.0)).max(0.0);
            }
            let grads = collect_grads(&g, &names, &flat);
            apply_grads(adam, &grads, |f| {
                let mut err = Ok(());
                let mut apply = |p: &mut Param<f64>| {
                    if err.is_ok() {
                        err = f(p);
                    }
                };
                apply(&mut ap.w1);
                apply(&mut ap.b1);
                ap.mha.visit_mut(&mut apply);
                apply(&mut ap.w2);
                apply(&mut ap.b2);
                for b in &mut sp.blocks {
                    b.visit_mut(&mut apply);
                }
                for o in &mut sp.omega {
                    apply(o);
                }
                err
            })?;
        }
        losses.push(epoch_loss / batches.len() as f64);
        if stage == TrainStage::Stage2 {
            minvol.push(MinVolTrace {
                volume: epoch_vol / batches.len() as f64,
                penalty: epoch_pen / batches.len() as f64,
            });
        }
    }
    Ok(StageOutcome { losses, minvol, secs: start.elapsed().as_secs_f64() })
}

/// Two-stage AP+SP training. Stage 1 trains Psi and Omega with the SP blocks
/// frozen at identity; the control volume is then computed once; stage 2
/// expands the SP blocks and trains everything with the min-vol penalty.
pub fn train_ap_sp(
    y_bar: &Array2<f64>,
    y: &Array2<f64>,
    ensembles: &EndmemberEnsemble,
    proj: &PcaProjection<f64>,
    cfg: &TrainConfig,
) -> Result<(ApParams, SpParams, Array2<f64>, Array2<f64>, TrainReport)> {
    cfg.validate()?;
    let (l, n) = y.dim();
    if y_bar.dim() != (l, n) {
        return Err(Error::ShapeMismatch(format!(
            "context pixels {:?} vs image {:?}",
            y_bar.dim(),
            y.dim()
        )));
    }
    let m = ensembles.num_endmembers();
    let (_, h_ap, h_sp) = cfg.resolve_heads(l);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seeds.params.wrapping_add(0x9e3779b97f4a7c15));
    let mut ap = ApParams::init(l, m, h_ap, &mut rng)?;
    let mut sp = SpParams::init_stage1(ensembles, &mut rng)?;
    let mut adam = AdamState::new(cfg.lr);
    let mut shuffle_rng =
        ChaCha8Rng::seed_from_u64(cfg.seeds.shuffle.wrapping_add(0x9e3779b97f4a7c15));
    let mut report = TrainReport::default();

    let s1 = run_stage(
        &mut ap,
        &mut sp,
        y_bar,
        y,
        ensembles,
        proj,
        cfg,
        TrainStage::Stage1,
        cfg.epochs_stage1,
        None,
        &mut adam,
        &mut shuffle_rng,
    )?;
    report.stage1_loss = s1.losses;
    report.secs_stage1 = s1.secs;

    let v_t = control_volume(&sp, ensembles, proj)?;
    report.v_t = Some(v_t);

    if cfg.epochs_stage2 > 0 {
        sp.expand(h_sp)?;
        let s2 = run_stage(
            &mut ap,
            &mut sp,
            y_bar,
            y,
            ensembles,
            proj,
            cfg,
            TrainStage::Stage2,
            cfg.epochs_stage2,
            Some(v_t),
            &mut adam,
            &mut shuffle_rng,
        )?;
        report.stage2_loss = s2.losses;
        report.minvol_trace = s2.minvol;
        report.secs_stage2 = s2.secs;
    }

    let a_hat = predict_abundances(&ap, y_bar)?;
    let s_hat = predict_signatures(&sp, ensembles)?;
    Ok((ap, sp, a_hat, s_hat, report))
}

/// Full end-to-end unmixing output.
pub struct UnmixOutput {
    pub abundances: Array2<f64>,
    pub signatures: Array2<f64>,
    pub model: FsModelParams,
    pub ensembles: EndmemberEnsemble,
    pub report: TrainReport,
}

/// EEAs -> ensembles -> AN training -> two-stage AP+SP training -> prediction.
/// Fully deterministic given the config seeds. If `dump_dir` is set, the
/// model trained so far is written there when a stage aborts on divergence.
pub fn unmix(
    img: &HsImage,
    m: usize,
    algos: &[EeaAlgorithm],
    cfg: &TrainConfig,
    dump_dir: Option<&Path>,
) -> Result<UnmixOutput> {
    cfg.validate()?;
    if algos.is_empty() {
        return Err(Error::InvalidArgument("no EEA selected".into()));
    }
    let sets = algos
        .iter()
        .map(|&a| run_eea(a, img.data.view(), m, cfg.seeds.eea))
        .collect::<Result<Vec<_>>>()?;
    let ensembles = build_ensembles(&sets, m)?;
    let proj = pca_fit(img.data.view(), m - 1)?;

    let (an, y_bar, an_loss, secs_an) = train_an(img, cfg)?;

    let dump = |an: &AnParams, ap: &ApParams, sp: &SpParams| -> Option<PathBuf> {
        let dir = dump_dir?;
        let path = dir.join("last_good.fscp");
        let model = FsModelParams { an: an.clone(), ap: ap.clone(), sp: sp.clone() };
        save_checkpoint(&model, &path).ok()?;
        Some(path)
    };

    match train_ap_sp(&y_bar, &img.data, &ensembles, &proj, cfg) {
        Ok((ap, sp, a_hat, s_hat, mut report)) => {
            report.an_loss = an_loss;
            report.secs_an = secs_an;
            let model = FsModelParams { an, ap, sp };
            Ok(UnmixOutput { abundances: a_hat, signatures: s_hat, model, ensembles, report })
        }
        Err(e) => {
            // Divergence guard: keep the trained AN at least.
            if let (Some(_), Ok(ap0)) = (
                dump_dir,
                ApParams::init(img.bands, m, cfg.resolve_heads(img.bands).1, &mut ChaCha8Rng::seed_from_u64(cfg.seeds.params)),
            ) {
                if let Ok(sp0) = SpParams::init_stage1(&ensembles, &mut ChaCha8Rng::seed_from_u64(cfg.seeds.params)) {
                    dump(&an, &ap0, &sp0);
                }
            }
            Err(e)
        }
    }
}
