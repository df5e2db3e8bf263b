//! The defense pipeline: representation → (optional) patches → per-tensor
//! rank sampling → decomposition → reconstruction → stitch → invert
//! representation → clamp to `[0,1]`.
//!
//! [`defend`] is pure per `(batch, config)`: every random draw (rank pool
//! picks and decomposition seeds) comes from per-chunk streams derived from
//! the config seed, in a fixed order, before any parallel work starts — so
//! outputs and reports are bit-identical across runs and thread counts
//! (wall-clock fields aside).
//!
//! Infeasible ranks never abort a run: they are clamped to the tensor at
//! hand and recorded. A decomposition that fails numerically leaves its
//! tensor undefended (pass-through) and is flagged in the report.

mod patch;
mod repr;

pub use patch::{split_patches, stitch_patches, PatchGrid};
pub use repr::{build_representation, invert_representation};

use std::time::Instant;

use rand::Rng;
use rayon::prelude::*;

use crate::decomp::{
    cp_als, reconstruct_cp, reconstruct_tt, reconstruct_tucker, relative_error, tt_svd, tucker,
    DecompOptions,
};
use crate::error::{Error, Result};
use crate::rng::{mix_seed, stream_rng};
use crate::slq::{slq, SlqConfig};
use crate::tensor::{frobenius_norm, DenseTensor};

/// A batch of `[height, width, 3]` images with pixels in `[0,1]`. All images
/// share the same spatial dimensions and there is at least one.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageBatch {
    images: Vec<DenseTensor>,
}

impl ImageBatch {
    pub fn new(images: Vec<DenseTensor>) -> Result<Self> {
        if images.is_empty() {
            return Err(Error::domain("image batch must hold at least one image"));
        }
        let first = images[0].shape().to_vec();
        for (i, img) in images.iter().enumerate() {
            let s = img.shape();
            if s.len() != 3 || s[2] != 3 {
                return Err(Error::domain(format!(
                    "image {i} must have shape [height, width, 3], got {s:?}"
                )));
            }
            if s != first {
                return Err(Error::domain(format!(
                    "image {i} shape {s:?} differs from image 0 shape {first:?}"
                )));
            }
            if let Some(p) = img.data().iter().position(|v| !(0.0..=1.0).contains(v)) {
                return Err(Error::domain(format!(
                    "image {i} has pixel {} outside [0,1] at flat index {p}",
                    img.data()[p]
                )));
            }
        }
        Ok(ImageBatch { images })
    }

    pub fn images(&self) -> &[DenseTensor] {
        &self.images
    }

    pub fn into_images(self) -> Vec<DenseTensor> {
        self.images
    }

    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        false // construction requires at least one image
    }

    pub fn height(&self) -> usize {
        self.images[0].shape()[0]
    }

    pub fn width(&self) -> usize {
        self.images[0].shape()[1]
    }
}

/// Which decomposition engine sanitizes each tensor.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Decomposition {
    Parafac,
    Tucker,
    TensorTrain,
}

impl Decomposition {
    pub const ALL: [Decomposition; 3] = [
        Decomposition::Parafac,
        Decomposition::Tucker,
        Decomposition::TensorTrain,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Decomposition::Parafac => "parafac",
            Decomposition::Tucker => "tucker",
            Decomposition::TensorTrain => "tensor-train",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|d| d.name() == s)
    }
}

/// How a batch of images is packed into decomposition inputs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Representation {
    /// Each image is its own `[H, W, 3]` tensor.
    ThreeMode,
    /// One `[H, W, 3N]` tensor; image `i` at channels `3i..3i+3`.
    ThreeModeStacked,
    /// One `[N, H, W, 3]` tensor; image `i` at index `i` of mode 0.
    FourMode,
}

impl Representation {
    pub const ALL: [Representation; 3] = [
        Representation::ThreeMode,
        Representation::ThreeModeStacked,
        Representation::FourMode,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Representation::ThreeMode => "3-mode",
            Representation::ThreeModeStacked => "3-mode-stacked",
            Representation::FourMode => "4-mode",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|r| r.name() == s)
    }

    /// Order of the representation tensor(s).
    pub fn order(self) -> usize {
        match self {
            Representation::FourMode => 4,
            _ => 3,
        }
    }
}

/// Full description of one defense: engine, packing, chunk size, ranks (or a
/// pool to sample from), optional patching, and the seed driving every
/// random draw.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DefenseConfig {
    pub decomposition: Decomposition,
    pub representation: Representation,
    pub batch_size: usize,
    pub ranks: Vec<usize>,
    /// `(patch_w, patch_h)`: spatial tile size; `None` disables patching.
    pub patch: Option<(usize, usize)>,
    /// When present, each tensor's ranks are drawn uniformly from this pool
    /// instead of using `ranks`.
    pub rank_pool: Option<Vec<Vec<usize>>>,
    pub seed: u64,
}

impl DefenseConfig {
    /// Structural validation (independent of any particular batch):
    /// positive batch size and patch dims, and rank lists that fit the
    /// decomposition/representation pair. Tensor-train on 4-mode takes
    /// exactly `(r1, r2, r3)` with `r1 ≤ batch_size` and `r3 ≤ 3`; on a
    /// 3-mode representation it takes `(r1, r2)`, or a single rank whose
    /// channel-side rank defaults to the full channel mode.
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::config("batch size must be at least 1"));
        }
        if let Some((pw, ph)) = self.patch {
            if pw == 0 || ph == 0 {
                return Err(Error::config("patch dimensions must be at least 1"));
            }
        }
        match &self.rank_pool {
            Some(pool) => {
                if pool.is_empty() {
                    return Err(Error::config("rank pool must be nonempty when present"));
                }
                for (i, entry) in pool.iter().enumerate() {
                    self.check_rank_list(entry, &format!("rank pool entry {i}"))?;
                }
                // `ranks` is unused when a pool is present; tolerate an
                // empty list but reject a malformed one
                if !self.ranks.is_empty() {
                    self.check_rank_list(&self.ranks, "ranks")?;
                }
            }
            None => self.check_rank_list(&self.ranks, "ranks")?,
        }
        Ok(())
    }

    fn check_rank_list(&self, ranks: &[usize], what: &str) -> Result<()> {
        if ranks.iter().any(|&r| r == 0) {
            return Err(Error::config(format!(
                "{what}: every rank must be at least 1, got {ranks:?}"
            )));
        }
        let order = self.representation.order();
        match self.decomposition {
            Decomposition::Parafac => {
                if ranks.len() != 1 {
                    return Err(Error::config(format!(
                        "{what}: parafac takes exactly one rank, got {ranks:?}"
                    )));
                }
            }
            Decomposition::Tucker => {
                if ranks.len() != order {
                    return Err(Error::config(format!(
                        "{what}: tucker on a {order}-mode representation takes {order} ranks, got {ranks:?}"
                    )));
                }
            }
            Decomposition::TensorTrain => match self.representation {
                Representation::FourMode => {
                    if ranks.len() != 3 {
                        return Err(Error::config(format!(
                            "{what}: tensor-train on 4-mode takes exactly 3 ranks, got {ranks:?}"
                        )));
                    }
                    if ranks[0] > self.batch_size {
                        return Err(Error::config(format!(
                            "{what}: first tensor-train rank {} exceeds batch size {}",
                            ranks[0], self.batch_size
                        )));
                    }
                    if ranks[2] > 3 {
                        return Err(Error::config(format!(
                            "{what}: third tensor-train rank {} exceeds the channel mode size 3",
                            ranks[2]
                        )));
                    }
                }
                _ => {
                    if ranks.len() != 1 && ranks.len() != 2 {
                        return Err(Error::config(format!(
                            "{what}: tensor-train on a 3-mode representation takes 1 or 2 ranks, got {ranks:?}"
                        )));
                    }
                }
            },
        }
        Ok(())
    }
}

/// Outcome of one decomposed tensor (one per patch when patching).
#[derive(Debug, Clone, PartialEq)]
pub struct TensorRecord {
    /// Index of the `batch_size` chunk this tensor came from.
    pub chunk: usize,
    /// Index of the representation tensor within its chunk (image index for
    /// the 3-mode representation, 0 otherwise).
    pub tensor: usize,
    /// `(tile_row, tile_col)` when patching; `None` otherwise.
    pub tile: Option<(usize, usize)>,
    /// Shape of the decomposed tensor.
    pub shape: Vec<usize>,
    /// Ranks asked for (sampled from the pool when one is configured).
    pub requested_ranks: Vec<usize>,
    /// Ranks actually used after clamping to what the shape admits.
    pub used_ranks: Vec<usize>,
    /// True when `used_ranks != requested_ranks`.
    pub clamped: bool,
    /// `‖t − t̂‖_F / ‖t‖_F`; 0.0 for a zero tensor or a pass-through.
    pub relative_error: f64,
    /// Wall-clock decomposition time. Excluded from determinism guarantees.
    pub seconds: f64,
    /// Failure message when the tensor passed through undefended.
    pub failure: Option<String>,
}

/// One [`TensorRecord`] per decomposed tensor, in deterministic
/// chunk → tensor → tile order.
#[derive(Debug, Clone, PartialEq)]
pub struct DefenseReport {
    pub records: Vec<TensorRecord>,
}

impl DefenseReport {
    /// Mean relative reconstruction error over successfully decomposed
    /// tensors; 0.0 when every tensor passed through.
    pub fn mean_relative_error(&self) -> f64 {
        let ok: Vec<f64> = self
            .records
            .iter()
            .filter(|r| r.failure.is_none())
            .map(|r| r.relative_error)
            .collect();
        if ok.is_empty() {
            0.0
        } else {
            ok.iter().sum::<f64>() / ok.len() as f64
        }
    }

    /// True when any tensor passed through undefended.
    pub fn any_failures(&self) -> bool {
        self.records.iter().any(|r| r.failure.is_some())
    }
}

/// Uniform draw from a rank pool. Deterministic per RNG state; errors on an
/// empty pool.
pub fn sample_ranks<R: Rng + ?Sized>(pool: &[Vec<usize>], rng: &mut R) -> Result<Vec<usize>> {
    if pool.is_empty() {
        return Err(Error::domain("rank pool must be nonempty"));
    }
    Ok(pool[rng.random_range(0..pool.len())].clone())
}

/// A tensor-train rank list of length one on a 3-mode tensor is shorthand
/// for `(r, full channel rank)`.
fn expand_requested(decomp: Decomposition, ranks: &[usize], shape: &[usize]) -> Vec<usize> {
    if decomp == Decomposition::TensorTrain && shape.len() == 3 && ranks.len() == 1 {
        vec![ranks[0], shape[2]]
    } else {
        ranks.to_vec()
    }
}

/// Clamps requested ranks to what `shape` admits: Tucker per-mode sizes, and
/// the tensor-train chain bound `r_k ≤ min(r_{k-1}·n_k, n_{k+1}···n_d)`.
/// Parafac ranks are never clamped (CP rank may exceed mode sizes).
fn clamp_ranks(decomp: Decomposition, requested: &[usize], shape: &[usize]) -> Vec<usize> {
    match decomp {
        Decomposition::Parafac => requested.to_vec(),
        Decomposition::Tucker => requested
            .iter()
            .zip(shape)
            .map(|(&r, &n)| r.min(n))
            .collect(),
        Decomposition::TensorTrain => {
            let mut used = Vec::with_capacity(requested.len());
            let mut prev = 1usize;
            for (k, &r) in requested.iter().enumerate() {
                let rows = prev * shape[k];
                let cols: usize = shape[k + 1..].iter().product();
                let c = r.min(rows).min(cols);
                used.push(c);
                prev = c;
            }
            used
        }
    }
}

fn decompose_tile(
    t: &DenseTensor,
    decomp: Decomposition,
    ranks: &[usize],
    seed: u64,
) -> Result<DenseTensor> {
    let opts = DecompOptions {
        seed,
        ..DecompOptions::default()
    };
    match decomp {
        Decomposition::Parafac => Ok(reconstruct_cp(&cp_als(t, ranks[0], &opts)?)),
        Decomposition::Tucker => Ok(reconstruct_tucker(&tucker(t, ranks, &opts)?)),
        Decomposition::TensorTrain => Ok(reconstruct_tt(&tt_svd(t, ranks)?)),
    }
}

/// One decomposition unit of work, with its randomness pre-drawn so
/// execution order cannot matter.
struct Job {
    chunk: usize,
    tensor: usize,
    tile: Option<(usize, usize)>,
    input: DenseTensor,
    requested: Vec<usize>,
    seed: u64,
}

fn run_job(job: Job, decomp: Decomposition) -> (DenseTensor, TensorRecord) {
    let start = Instant::now();
    let used = clamp_ranks(decomp, &job.requested, job.input.shape());
    let clamped = used != job.requested;
    let (output, rel, failure) = if frobenius_norm(&job.input) == 0.0 {
        // a zero tensor is its own exact low-rank reconstruction
        (job.input, 0.0, None)
    } else {
        match decompose_tile(&job.input, decomp, &used, job.seed) {
            Ok(recon) => {
                let rel = relative_error(&job.input, &recon)
                    .expect("reconstruction shape matches and input norm is positive");
                (recon, rel, None)
            }
            // failure containment: the tensor passes through undefended
            Err(e) => (job.input, 0.0, Some(e.to_string())),
        }
    };
    let record = TensorRecord {
        chunk: job.chunk,
        tensor: job.tensor,
        tile: job.tile,
        shape: output.shape().to_vec(),
        requested_ranks: job.requested,
        used_ranks: used,
        clamped,
        relative_error: rel,
        seconds: start.elapsed().as_secs_f64(),
        failure,
    };
    (output, record)
}

struct TensorSlot {
    tiles: usize,
    tile_rows: usize,
    tile_cols: usize,
}

struct ChunkSlot {
    images: usize,
    tensors: Vec<TensorSlot>,
}

/// Sanitizes a batch: packs images `batch_size` at a time into the chosen
/// representation (a final partial chunk keeps its remainder size),
/// optionally splits into patches, decomposes every tensor at its
/// (possibly pool-sampled) ranks, reconstructs, reassembles, and clamps
/// pixels to `[0,1]`.
///
/// Chunk `i` draws from stream `i` of the config seed; within a chunk, one
/// (ranks, seed) pair is drawn per tensor in tensor → tile row-major order.
/// Tensors may decompose in parallel; outputs and report order never depend
/// on scheduling.
pub fn defend(batch: &ImageBatch, cfg: &DefenseConfig) -> Result<(ImageBatch, DefenseReport)> {
    cfg.validate()?;
    let (h, w) = (batch.height(), batch.width());

    let mut jobs = Vec::new();
    let mut chunks = Vec::new();
    for (ci, chunk) in batch.images().chunks(cfg.batch_size).enumerate() {
        let mut rng = stream_rng(cfg.seed, ci as u64);
        let tensors = repr::build_from_slice(chunk, cfg.representation);
        let mut slots = Vec::with_capacity(tensors.len());
        for (ti, t) in tensors.into_iter().enumerate() {
            let (tiles, tile_rows, tile_cols) = match cfg.patch {
                Some((pw, ph)) => {
                    let grid = split_patches(&t, pw, ph)?;
                    (grid.patches, grid.tile_rows, grid.tile_cols)
                }
                None => (vec![t], 1, 1),
            };
            slots.push(TensorSlot {
                tiles: tiles.len(),
                tile_rows,
                tile_cols,
            });
            for (k, tile) in tiles.into_iter().enumerate() {
                let base = match &cfg.rank_pool {
                    Some(pool) => sample_ranks(pool, &mut rng)?,
                    None => cfg.ranks.clone(),
                };
                let requested = expand_requested(cfg.decomposition, &base, tile.shape());
                let seed = rng.random::<u64>();
                jobs.push(Job {
                    chunk: ci,
                    tensor: ti,
                    tile: cfg.patch.map(|_| (k / tile_cols, k % tile_cols)),
                    input: tile,
                    requested,
                    seed,
                });
            }
        }
        chunks.push(ChunkSlot {
            images: chunk.len(),
            tensors: slots,
        });
    }

    let results: Vec<(DenseTensor, TensorRecord)> = jobs
        .into_par_iter()
        .map(|job| run_job(job, cfg.decomposition))
        .collect();

    let mut outputs = Vec::with_capacity(batch.len());
    let mut records = Vec::with_capacity(results.len());
    let mut results = results.into_iter();
    for chunk in &chunks {
        let mut tensors = Vec::with_capacity(chunk.tensors.len());
        for slot in &chunk.tensors {
            let mut tiles = Vec::with_capacity(slot.tiles);
            for _ in 0..slot.tiles {
                let (t, record) = results.next().expect("one result per job");
                records.push(record);
                tiles.push(t);
            }
            let tensor = if cfg.patch.is_some() {
                stitch_patches(&PatchGrid {
                    tile_rows: slot.tile_rows,
                    tile_cols: slot.tile_cols,
                    patches: tiles,
                })?
            } else {
                tiles.pop().expect("unpatched tensor is a single tile")
            };
            tensors.push(tensor);
        }
        let images = invert_representation(&tensors, cfg.representation, chunk.images, h, w)?;
        for img in images {
            let data: Vec<f64> = img.into_data().iter().map(|v| v.clamp(0.0, 1.0)).collect();
            outputs.push(DenseTensor::new(vec![h, w, 3], data)?);
        }
    }
    Ok((ImageBatch::new(outputs)?, DefenseReport { records }))
}

/// SLQ baseline with the same calling convention as [`defend`]: image `i`
/// draws its block qualities from stream `i` of the config seed, so no two
/// images share a quality pattern. Records carry empty rank lists.
pub fn defend_slq(batch: &ImageBatch, cfg: &SlqConfig) -> Result<(ImageBatch, DefenseReport)> {
    cfg.validate()?;
    let results: Result<Vec<(DenseTensor, TensorRecord)>> = batch
        .images()
        .par_iter()
        .enumerate()
        .map(|(i, img)| {
            let start = Instant::now();
            let sub = SlqConfig {
                seed: mix_seed(cfg.seed, i as u64),
                ..cfg.clone()
            };
            let out = slq(img, &sub)?;
            let rel = if frobenius_norm(img) == 0.0 {
                0.0
            } else {
                relative_error(img, &out).expect("slq preserves shape")
            };
            let record = TensorRecord {
                chunk: i,
                tensor: 0,
                tile: None,
                shape: img.shape().to_vec(),
                requested_ranks: vec![],
                used_ranks: vec![],
                clamped: false,
                relative_error: rel,
                seconds: start.elapsed().as_secs_f64(),
                failure: None,
            };
            Ok((out, record))
        })
        .collect();
    let (images, records) = results?.into_iter().unzip();
    Ok((ImageBatch::new(images)?, DefenseReport { records }))
}
