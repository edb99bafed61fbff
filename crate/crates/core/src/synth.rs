//! Reproducible synthetic workloads: low-tubal-rank and CP tensors,
//! Bernoulli observation masks and dynamic free-submodule streams.
//!
//! # Random numbers
//!
//! Every generator draws from ChaCha20 (the RFC 7539 block function with a
//! 64-bit stream id, as in `rand_chacha`). For a user seed `s` and a
//! sub-stream id `k` the key is the 8 little-endian bytes of `s` followed by
//! 24 zero bytes, and the stream id is set to `k`:
//!
//! | stream            | id                | consumer                         |
//! |-------------------|-------------------|----------------------------------|
//! | data              | 0                 | tensor factors, stream weights   |
//! | mask              | 1                 | observation masks                |
//! | init              | 2                 | random initial estimates         |
//! | order             | 3                 | shuffled pass order              |
//! | segment `n` basis | `2^32 + n`        | ground-truth bases of FSM streams |
//!
//! Uniforms are `(next_u64 >> 11) * 2^-53`. Gaussians use one Box-Muller
//! pair per sample, keeping only the cosine branch:
//! `sqrt(-2 ln(1 - u1)) * cos(2 pi u2)`. Data and masks come from separate
//! streams, so changing the sampling rate never changes the tensor.

use std::io::{BufRead, Write};
use std::sync::Arc;

use nalgebra::DMatrix;
use rand::seq::index;
use serde::{Deserialize, Serialize};

use crate::tensor::{tprod, Tensor3, TubeFft};
use crate::toucan::FsmEstimate;
use crate::{par, Error, Result};

pub mod rng {
    use rand_chacha::rand_core::{RngCore, SeedableRng};
    use rand_chacha::ChaCha20Rng;

    pub const STREAM_DATA: u64 = 0;
    pub const STREAM_MASK: u64 = 1;
    pub const STREAM_INIT: u64 = 2;
    pub const STREAM_ORDER: u64 = 3;
    pub const STREAM_SEGMENT_BASE: u64 = 1 << 32;

    pub fn substream(seed: u64, stream: u64) -> ChaCha20Rng {
        let mut key = [0u8; 32];
        key[..8].copy_from_slice(&seed.to_le_bytes());
        let mut g = ChaCha20Rng::from_seed(key);
        g.set_stream(stream);
        g
    }

    /// Uniform on `[0, 1)` with 53 random bits.
    #[inline]
    pub fn uniform(g: &mut ChaCha20Rng) -> f64 {
        (g.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    #[inline]
    pub fn gaussian(g: &mut ChaCha20Rng) -> f64 {
        let u1 = uniform(g);
        let u2 = uniform(g);
        (-2.0 * (1.0 - u1).ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
    }
}

use rng::{STREAM_DATA, STREAM_MASK, STREAM_SEGMENT_BASE};

/// What a mask observes in one lateral slice.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MaskKind {
    Entries,
    Tubes,
}

impl MaskKind {
    pub fn name(self) -> &'static str {
        match self {
            MaskKind::Entries => "entries",
            MaskKind::Tubes => "tubes",
        }
    }
}

impl std::str::FromStr for MaskKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "entries" => Ok(MaskKind::Entries),
            "tubes" => Ok(MaskKind::Tubes),
            _ => Err(Error::InvalidArgument(format!("unknown mask kind {s:?}"))),
        }
    }
}

/// How masks are drawn at a given rate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sampling {
    /// Every element kept independently with probability `rate`.
    #[default]
    Bernoulli,
    /// Exactly `round(rate * N)` elements, uniformly without replacement.
    Uniform,
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Observed {
    /// `(i, k)` pairs sorted by `(k, i)`.
    Entries(Vec<(usize, usize)>),
    /// Sorted row indices.
    Tubes(Vec<usize>),
}

/// Observation pattern of one `n1 x 1 x n3` lateral slice.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SampleMask {
    n1: usize,
    n3: usize,
    observed: Observed,
}

impl SampleMask {
    pub fn entries(n1: usize, n3: usize, mut idx: Vec<(usize, usize)>) -> Result<Self> {
        if let Some(&(i, k)) = idx.iter().find(|&&(i, k)| i >= n1 || k >= n3) {
            return Err(Error::InvalidArgument(format!(
                "entry ({i}, {k}) outside {n1}x{n3}"
            )));
        }
        idx.sort_unstable_by_key(|&(i, k)| (k, i));
        if idx.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::InvalidArgument("duplicate mask entry".into()));
        }
        Ok(Self {
            n1,
            n3,
            observed: Observed::Entries(idx),
        })
    }

    pub fn tubes(n1: usize, n3: usize, mut rows: Vec<usize>) -> Result<Self> {
        if let Some(&i) = rows.iter().find(|&&i| i >= n1) {
            return Err(Error::InvalidArgument(format!("tube {i} outside n1 = {n1}")));
        }
        rows.sort_unstable();
        if rows.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::InvalidArgument("duplicate mask tube".into()));
        }
        Ok(Self {
            n1,
            n3,
            observed: Observed::Tubes(rows),
        })
    }

    pub fn full(n1: usize, n3: usize, kind: MaskKind) -> Self {
        let observed = match kind {
            MaskKind::Entries => {
                Observed::Entries((0..n3).flat_map(|k| (0..n1).map(move |i| (i, k))).collect())
            }
            MaskKind::Tubes => Observed::Tubes((0..n1).collect()),
        };
        Self { n1, n3, observed }
    }

    pub fn empty(n1: usize, n3: usize, kind: MaskKind) -> Self {
        let observed = match kind {
            MaskKind::Entries => Observed::Entries(Vec::new()),
            MaskKind::Tubes => Observed::Tubes(Vec::new()),
        };
        Self { n1, n3, observed }
    }

    #[inline]
    pub fn dims(&self) -> (usize, usize) {
        (self.n1, self.n3)
    }

    pub fn kind(&self) -> MaskKind {
        match self.observed {
            Observed::Entries(_) => MaskKind::Entries,
            Observed::Tubes(_) => MaskKind::Tubes,
        }
    }

    /// Number of mask elements (entries or tubes).
    pub fn len(&self) -> usize {
        match &self.observed {
            Observed::Entries(e) => e.len(),
            Observed::Tubes(t) => t.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Number of observed scalar entries.
    pub fn entry_count(&self) -> usize {
        match &self.observed {
            Observed::Entries(e) => e.len(),
            Observed::Tubes(t) => t.len() * self.n3,
        }
    }

    pub fn entry_list(&self) -> Option<&[(usize, usize)]> {
        match &self.observed {
            Observed::Entries(e) => Some(e),
            Observed::Tubes(_) => None,
        }
    }

    pub fn tube_list(&self) -> Option<&[usize]> {
        match &self.observed {
            Observed::Entries(_) => None,
            Observed::Tubes(t) => Some(t),
        }
    }

    /// Dense indicator over the slice, indexed `k * n1 + i`.
    pub fn indicator(&self) -> Vec<bool> {
        let mut out = vec![false; self.n1 * self.n3];
        match &self.observed {
            Observed::Entries(e) => {
                for &(i, k) in e {
                    out[k * self.n1 + i] = true;
                }
            }
            Observed::Tubes(t) => {
                for k in 0..self.n3 {
                    for &i in t {
                        out[k * self.n1 + i] = true;
                    }
                }
            }
        }
        out
    }

    /// The same observations as an entry mask.
    pub fn to_entries(&self) -> SampleMask {
        match &self.observed {
            Observed::Entries(_) => self.clone(),
            Observed::Tubes(t) => SampleMask {
                n1: self.n1,
                n3: self.n3,
                observed: Observed::Entries(
                    (0..self.n3)
                        .flat_map(|k| t.iter().map(move |&i| (i, k)))
                        .collect(),
                ),
            },
        }
    }

    /// Zeroes the unobserved entries of a lateral slice.
    pub fn apply(&self, v: &Tensor3) -> Result<Tensor3> {
        if v.dims() != (self.n1, 1, self.n3) {
            return Err(Error::DimensionMismatch(format!(
                "mask {}x{} applied to {:?}",
                self.n1,
                self.n3,
                v.dims()
            )));
        }
        let ind = self.indicator();
        let data = v
            .as_slice()
            .iter()
            .zip(&ind)
            .map(|(&x, &o)| if o { x } else { 0.0 })
            .collect();
        Tensor3::from_vec(self.n1, 1, self.n3, data)
    }
}

fn check_rate(rate: f64) -> Result<()> {
    if rate > 0.0 && rate <= 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!(
            "sample rate {rate} outside (0, 1]"
        )))
    }
}

/// Draws successive masks from the mask sub-stream of one seed.
#[derive(Debug, Clone)]
pub struct MaskSampler {
    n1: usize,
    n3: usize,
    kind: MaskKind,
    rate: f64,
    sampling: Sampling,
    g: rand_chacha::ChaCha20Rng,
}

impl MaskSampler {
    pub fn new(n1: usize, n3: usize, kind: MaskKind, rate: f64, seed: u64) -> Result<Self> {
        check_rate(rate)?;
        Ok(Self {
            n1,
            n3,
            kind,
            rate,
            sampling: Sampling::Bernoulli,
            g: rng::substream(seed, STREAM_MASK),
        })
    }

    pub fn with_sampling(mut self, sampling: Sampling) -> Self {
        self.sampling = sampling;
        self
    }

    pub fn next_mask(&mut self) -> SampleMask {
        let population = match self.kind {
            MaskKind::Entries => self.n1 * self.n3,
            MaskKind::Tubes => self.n1,
        };
        let picked: Vec<usize> = match self.sampling {
            Sampling::Bernoulli => (0..population)
                .filter(|_| rng::uniform(&mut self.g) < self.rate)
                .collect(),
            Sampling::Uniform => {
                let m = ((self.rate * population as f64).round() as usize).min(population);
                let mut v = index::sample(&mut self.g, population, m).into_vec();
                v.sort_unstable();
                v
            }
        };
        let observed = match self.kind {
            MaskKind::Entries => {
                Observed::Entries(picked.into_iter().map(|p| (p % self.n1, p / self.n1)).collect())
            }
            MaskKind::Tubes => Observed::Tubes(picked),
        };
        SampleMask {
            n1: self.n1,
            n3: self.n3,
            observed,
        }
    }
}

/// One Bernoulli mask: each entry (or tube) kept with probability `rate`.
pub fn gen_mask(n1: usize, n3: usize, kind: MaskKind, rate: f64, seed: u64) -> Result<SampleMask> {
    Ok(MaskSampler::new(n1, n3, kind, rate, seed)?.next_mask())
}

/// Masks for `n2` consecutive lateral slices.
pub fn gen_masks(
    n1: usize,
    n2: usize,
    n3: usize,
    kind: MaskKind,
    rate: f64,
    seed: u64,
) -> Result<Vec<SampleMask>> {
    let mut s = MaskSampler::new(n1, n3, kind, rate, seed)?;
    Ok((0..n2).map(|_| s.next_mask()).collect())
}

fn gaussian_tensor(n1: usize, n2: usize, n3: usize, g: &mut rand_chacha::ChaCha20Rng) -> Tensor3 {
    Tensor3::from_fn(n1, n2, n3, |_, _, _| rng::gaussian(g))
}

/// `G1 * G2` with i.i.d. standard Gaussian `G1: n1 x r x n3`, `G2: r x n2 x n3`
/// (drawn in that order, each in linear layout order).
pub fn gen_low_tubal_rank(n1: usize, n2: usize, n3: usize, r: usize, seed: u64) -> Result<Tensor3> {
    if r == 0 || r > n1.min(n2) {
        return Err(Error::RankOutOfRange {
            rank: r,
            max: n1.min(n2),
        });
    }
    let mut g = rng::substream(seed, STREAM_DATA);
    let a = gaussian_tensor(n1, r, n3, &mut g);
    let b = gaussian_tensor(r, n2, n3, &mut g);
    tprod(&a, &b)
}

/// Factor matrices of a CP model, drawn column-major as `A`, `B`, `C`.
#[derive(Debug, Clone, PartialEq)]
pub struct CpFactors {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub c: DMatrix<f64>,
}

impl CpFactors {
    pub fn random(n1: usize, n2: usize, n3: usize, r: usize, seed: u64) -> Self {
        let mut g = rng::substream(seed, STREAM_DATA);
        let mut draw = |rows: usize| {
            let v: Vec<f64> = (0..rows * r).map(|_| rng::gaussian(&mut g)).collect();
            DMatrix::from_vec(rows, r, v)
        };
        let a = draw(n1);
        let b = draw(n2);
        let c = draw(n3);
        Self { a, b, c }
    }

    /// `X(i, j, k) = sum_l A(i, l) B(j, l) C(k, l)`.
    pub fn to_tensor(&self) -> Tensor3 {
        let (n1, n2, n3) = (self.a.nrows(), self.b.nrows(), self.c.nrows());
        let bt = self.b.transpose();
        let slices = par::map_range(n3, |k| {
            let scaled = DMatrix::from_fn(n1, self.a.ncols(), |i, l| self.a[(i, l)] * self.c[(k, l)]);
            scaled * &bt
        });
        let mut out = Tensor3::zeros(n1, n2, n3);
        for (k, m) in slices.iter().enumerate() {
            out.set_frontal(k, m);
        }
        out
    }
}

/// Sum of `r` Gaussian rank-one outer products.
pub fn gen_cp(n1: usize, n2: usize, n3: usize, r: usize, seed: u64) -> Result<Tensor3> {
    if r == 0 {
        return Err(Error::RankOutOfRange { rank: 0, max: usize::MAX });
    }
    Ok(CpFactors::random(n1, n2, n3, r, seed).to_tensor())
}

/// Parameters of a streamed sequence of lateral slices drawn from a free
/// submodule that is redrawn every `change_period` slices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StreamSpec {
    pub n1: usize,
    pub n3: usize,
    pub rank: usize,
    pub steps: usize,
    /// Slices between redraws of the basis; 0 keeps one basis throughout.
    pub change_period: usize,
    pub sample_rate: f64,
    pub kind: MaskKind,
    pub seed: u64,
}

impl StreamSpec {
    pub fn validate(&self) -> Result<()> {
        check_rate(self.sample_rate)?;
        if self.rank == 0 || self.rank >= self.n1 {
            return Err(Error::RankOutOfRange {
                rank: self.rank,
                max: self.n1.saturating_sub(1),
            });
        }
        if self.n3 == 0 {
            return Err(Error::InvalidArgument("n3 must be positive".into()));
        }
        Ok(())
    }

    pub fn segment_of(&self, t: usize) -> usize {
        if self.change_period == 0 {
            0
        } else {
            t / self.change_period
        }
    }

    pub fn segment_count(&self) -> usize {
        if self.steps == 0 {
            0
        } else {
            self.segment_of(self.steps - 1) + 1
        }
    }

    /// Ground-truth basis of segment `s`.
    pub fn segment_basis(&self, s: usize) -> Result<FsmEstimate> {
        FsmEstimate::random_from_rng(
            self.n1,
            self.rank,
            self.n3,
            &mut rng::substream(self.seed, STREAM_SEGMENT_BASE + s as u64),
        )
    }
}

/// One element of an FSM stream.
#[derive(Debug, Clone)]
pub struct StreamItem {
    pub t: usize,
    pub slice: Tensor3,
    pub mask: SampleMask,
    pub fsm_id: usize,
    pub truth: Arc<FsmEstimate>,
}

/// Pull-based generator behind [`gen_fsm_stream`].
#[derive(Debug)]
pub struct FsmStream {
    spec: StreamSpec,
    plan: TubeFft,
    weights: rand_chacha::ChaCha20Rng,
    masks: MaskSampler,
    t: usize,
    current: Option<(usize, Arc<FsmEstimate>)>,
}

impl Iterator for FsmStream {
    type Item = Result<StreamItem>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.t >= self.spec.steps {
            return None;
        }
        let t = self.t;
        self.t += 1;
        let seg = self.spec.segment_of(t);
        if self.current.as_ref().map(|(s, _)| *s) != Some(seg) {
            match self.spec.segment_basis(seg) {
                Ok(b) => self.current = Some((seg, Arc::new(b))),
                Err(e) => return Some(Err(e)),
            }
        }
        let truth = Arc::clone(&self.current.as_ref().expect("basis drawn").1);
        let (n1, r, n3) = (self.spec.n1, self.spec.rank, self.spec.n3);
        let w: Vec<f64> = (0..r * n3).map(|_| rng::gaussian(&mut self.weights)).collect();
        let wbar = self.plan.forward_lateral(&w, r);
        let vbar: Vec<_> = truth.slices().iter().zip(&wbar).map(|(u, w)| u * w).collect();
        let data = self.plan.inverse_lateral(&vbar);
        let slice = match Tensor3::from_vec(n1, 1, n3, data) {
            Ok(s) => s,
            Err(e) => return Some(Err(e)),
        };
        Some(Ok(StreamItem {
            t,
            slice,
            mask: self.masks.next_mask(),
            fsm_id: seg,
            truth,
        }))
    }
}

/// Lateral slices `V_t = U_s * W_t` with fresh Gaussian weights per slice
/// and a fresh mask per slice; the basis `U_s` is redrawn independently at
/// every segment boundary.
pub fn gen_fsm_stream(spec: &StreamSpec) -> Result<FsmStream> {
    spec.validate()?;
    Ok(FsmStream {
        plan: TubeFft::new(spec.n3),
        weights: rng::substream(spec.seed, STREAM_DATA),
        masks: MaskSampler::new(spec.n1, spec.n3, spec.kind, spec.sample_rate, spec.seed)?,
        t: 0,
        current: None,
        spec: spec.clone(),
    })
}

/// Writes masks for consecutive slices as CSV.
///
/// The first line holds `kind,n1,n3` (e.g. `entries,50,12`); each further
/// line is one observed element, `t,i,k` for entry masks and `t,i` for tube
/// masks, all zero-based.
pub fn write_masks_csv<W: Write>(w: &mut W, masks: &[SampleMask]) -> Result<()> {
    let first = masks
        .first()
        .ok_or_else(|| Error::InvalidArgument("no masks to write".into()))?;
    let (n1, n3) = first.dims();
    let kind = first.kind();
    writeln!(w, "{},{n1},{n3}", kind.name())?;
    for (t, m) in masks.iter().enumerate() {
        if m.kind() != kind || m.dims() != (n1, n3) {
            return Err(Error::InvalidArgument(format!("mask {t} differs in kind or shape")));
        }
        match &m.observed {
            Observed::Entries(e) => {
                for &(i, k) in e {
                    writeln!(w, "{t},{i},{k}")?;
                }
            }
            Observed::Tubes(tubes) => {
                for &i in tubes {
                    writeln!(w, "{t},{i}")?;
                }
            }
        }
    }
    Ok(())
}

/// Reads the format of [`write_masks_csv`] for `n2` slices.
pub fn read_masks_csv<R: BufRead>(r: R, n2: usize) -> Result<Vec<SampleMask>> {
    let mut lines = r.lines();
    let head = lines
        .next()
        .ok_or_else(|| Error::Format("empty mask file".into()))??;
    let fields: Vec<&str> = head.trim().split(',').collect();
    let bad_head = || Error::Format(format!("bad mask header {head:?}"));
    if fields.len() != 3 {
        return Err(bad_head());
    }
    let kind: MaskKind = fields[0].parse().map_err(|_| bad_head())?;
    let n1: usize = fields[1].parse().map_err(|_| bad_head())?;
    let n3: usize = fields[2].parse().map_err(|_| bad_head())?;
    let width = match kind {
        MaskKind::Entries => 3,
        MaskKind::Tubes => 2,
    };
    let mut entries: Vec<Vec<(usize, usize)>> = vec![Vec::new(); n2];
    let mut tubes: Vec<Vec<usize>> = vec![Vec::new(); n2];
    for (lineno, line) in lines.enumerate() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let vals: std::result::Result<Vec<usize>, _> = line.split(',').map(str::parse).collect();
        let vals = vals.map_err(|_| Error::Format(format!("line {}: {line:?}", lineno + 2)))?;
        if vals.len() != width || vals[0] >= n2 {
            return Err(Error::Format(format!("line {}: {line:?}", lineno + 2)));
        }
        match kind {
            MaskKind::Entries => entries[vals[0]].push((vals[1], vals[2])),
            MaskKind::Tubes => tubes[vals[0]].push(vals[1]),
        }
    }
    match kind {
        MaskKind::Entries => entries
            .into_iter()
            .map(|e| SampleMask::entries(n1, n3, e))
            .collect(),
        MaskKind::Tubes => tubes
            .into_iter()
            .map(|t| SampleMask::tubes(n1, n3, t))
            .collect(),
    }
}
