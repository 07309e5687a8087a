//! Assembly of the integrable pair `F1, F2` from regular points and anchored
//! dyadic cells, space-membership certificates, and partial-sum growth
//! experiments.
//!
//! The construction is desk-scale by design: level `n` contributes `2·N_n`
//! points whose anchored dyadic cells carry normalized indicators with mass
//! `ε_n`. Distinct points come from a seeded Kronecker sequence snapped to
//! the ρ grid; the number of usable distinct anchors is capped because the
//! cut points must at least halve at every step, so the window of anchor
//! column `j` (first hit `≈ j²/2` in the diagonal walk) shrinks below f64
//! interval resolution once `j` exceeds ten. Later levels reuse pool points
//! round-robin; their mass stacks on the same cells.
//!
//! Divergence itself is an asymptotic statement and is not verifiable at
//! finite truncation; the growth experiment reports an empirical signature:
//! dyadic-block partial sums of the combined series (equivalently, for
//! Walsh-type systems, cell averages of `F1 + F2`) are provably cellwise
//! nondecreasing when levels are added, and the high-threshold measure
//! fraction grows.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::construct::{
    first_hit, run_pipeline, ConstructError, CutPoints, ExponentSpec, PipelineConfig,
    PipelineMode, PipelineResult,
};
use crate::maps::{DigitInterleave, DyadicBox, DyadicIv, MapError};
use crate::systems::{BiorthSystem, SystemError, Which};
use crate::vexp::{self, BoxSum, ExponentFn, VexpError};

#[derive(Debug, Error)]
pub enum DivergeError {
    #[error("schedule invalid: {0}")]
    BadSchedule(String),
    #[error("could not place {needed} anchored points (placed {placed}) within the depth budget")]
    Placement { needed: usize, placed: usize },
    #[error(transparent)]
    Construct(#[from] ConstructError),
    #[error(transparent)]
    Vexp(#[from] VexpError),
    #[error(transparent)]
    System(#[from] SystemError),
    #[error(transparent)]
    Map(#[from] MapError),
}

/// Level weights `ε_n` (decreasing, summable by finiteness) and widths `N_n`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DivergenceSchedule {
    pub epsilons: Vec<f64>,
    pub widths: Vec<usize>,
}

impl DivergenceSchedule {
    /// `ε_n = 1/n²`, `N_n = 1`.
    pub fn standard(nmax: usize) -> Self {
        DivergenceSchedule {
            epsilons: (1..=nmax).map(|n| 1.0 / (n * n) as f64).collect(),
            widths: vec![1; nmax],
        }
    }

    pub fn nmax(&self) -> usize {
        self.epsilons.len()
    }

    pub fn entry_count(&self) -> usize {
        self.widths.iter().map(|&w| 2 * w).sum()
    }

    pub fn validate(&self) -> Result<(), DivergeError> {
        if self.epsilons.is_empty() || self.epsilons.len() != self.widths.len() {
            return Err(DivergeError::BadSchedule("empty or mismatched schedule".into()));
        }
        for w in self.epsilons.windows(2) {
            if !(w[1] < w[0]) {
                return Err(DivergeError::BadSchedule("ε must be strictly decreasing".into()));
            }
        }
        if self.epsilons.iter().any(|&e| e <= 0.0) || self.widths.iter().any(|&w| w == 0) {
            return Err(DivergeError::BadSchedule("ε > 0 and N ≥ 1 required".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Parity {
    Odd,
    Even,
}

/// One term slot of the construction: level `n`, width slot `i`, parity
/// (odd → `F1`, even → `F2`) and the pool point it draws.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ThetaEntry {
    pub level: usize,
    pub slot: usize,
    pub parity: Parity,
    pub pool_idx: usize,
}

/// The selected family: a pool of distinct regular points plus the entry
/// assignment. Pool points are snapped to the ρ grid with odd mantissas, so
/// they stay off every coarse dyadic boundary; for Walsh-type systems the
/// half-open cell averages then reproduce point values exactly once the cell
/// is finer than the function's resolution.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ThetaFamily {
    pub pool: Vec<Vec<f64>>,
    pub rho_images: Vec<f64>,
    pub entries: Vec<ThetaEntry>,
    pub seed: u64,
}

impl ThetaFamily {
    pub fn distinct_points(&self) -> usize {
        self.pool.len()
    }
}

fn kronecker_point(dim: usize, offsets: &[f64], index: usize) -> Vec<f64> {
    // Square roots of the first primes give badly approximable steps.
    const STEPS: [f64; 4] = [
        std::f64::consts::SQRT_2,
        1.7320508075688772,
        2.23606797749979,
        2.6457513110645906,
    ];
    (0..dim)
        .map(|axis| {
            let step = STEPS[axis % STEPS.len()];
            (offsets[axis] + (index as f64 + 1.0) * step).fract()
        })
        .collect()
}

fn snap_off_grid(rho: &DigitInterleave, x: &[f64]) -> (Vec<f64>, f64) {
    // Snap to the ρ grid and force odd mantissas (positive distance to every
    // coarser dyadic boundary).
    let ms: Vec<u64> = x.iter().map(|&c| rho.snap_coord(c) | 1).collect();
    let t = rho.interleave_mantissas(&ms);
    let coords: Vec<f64> =
        ms.iter().map(|&m| m as f64 / (1u64 << rho.depth) as f64).collect();
    (coords, t as f64 / (1u64 << rho.total_depth()) as f64)
}

/// Deterministic family from a seeded Kronecker sequence: pool points are
/// distinct on the depth-12 interleaved grid and assigned to entries
/// round-robin.
pub fn select_theta(
    dim: usize,
    schedule: &DivergenceSchedule,
    seed: u64,
    pool_cap: usize,
) -> Result<ThetaFamily, DivergeError> {
    schedule.validate()?;
    let rho = DigitInterleave::for_dim(dim);
    let target = schedule.entry_count().min(pool_cap.max(1));
    let offsets = seed_offsets(dim, seed);
    let mut pool = Vec::new();
    let mut rho_images = Vec::new();
    let mut keys: Vec<u64> = Vec::new();
    let mut index = 0usize;
    while pool.len() < target && index < 100_000 {
        let cand = kronecker_point(dim, &offsets, index);
        index += 1;
        let (coords, t) = snap_off_grid(&rho, &cand);
        let key = (t * (1u64 << 12) as f64).floor() as u64;
        if keys.contains(&key) {
            continue;
        }
        keys.push(key);
        pool.push(coords);
        rho_images.push(t);
    }
    if pool.len() < target {
        return Err(DivergeError::Placement { needed: target, placed: pool.len() });
    }
    let entries = assign_entries(schedule, pool.len());
    Ok(ThetaFamily { pool, rho_images, entries, seed })
}

fn seed_offsets(dim: usize, seed: u64) -> Vec<f64> {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    (0..dim).map(|_| rng.gen::<f64>()).collect()
}

fn assign_entries(schedule: &DivergenceSchedule, pool_len: usize) -> Vec<ThetaEntry> {
    let mut entries = Vec::with_capacity(schedule.entry_count());
    let mut counter = 0usize;
    for (level0, &width) in schedule.widths.iter().enumerate() {
        for slot in 1..=width {
            for parity in [Parity::Odd, Parity::Even] {
                entries.push(ThetaEntry {
                    level: level0 + 1,
                    slot,
                    parity,
                    pool_idx: counter % pool_len,
                });
                counter += 1;
            }
        }
    }
    entries
}

/// Anchored interval assignment for one pool point: the binary interval of
/// length `≤ t_{i₁} − t_{i₁+1}` containing the snapped ρ-image, where `i₁`
/// is the first diagonal-walk hit of the point's column.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Assignment {
    pub pool_idx: usize,
    pub column: usize,
    pub first_hit: usize,
    pub bound: f64,
    pub interval: DyadicIv,
    pub cell: DyadicBox,
    /// Snapped anchor value fed to the pipeline's dense-set numeration.
    pub anchor: f64,
}

/// Depth of the largest dyadic interval not exceeding `bound`.
fn depth_for_bound(bound: f64) -> u32 {
    let mut depth = 0u32;
    while 0.5f64.powi(depth as i32) > bound && depth < 62 {
        depth += 1;
    }
    depth
}

/// Compute the anchored assignments. Each pool point `j` (column `j+1`) gets
/// the dyadic interval at the first-hit scale that contains its ρ-image; the
/// pipeline's dense set is anchored at the interval's lower endpoint so the
/// written window covers the cell entirely.
pub fn assign_intervals(
    family: &ThetaFamily,
    cuts: &CutPoints,
    rho: &DigitInterleave,
) -> Result<Vec<Assignment>, DivergeError> {
    let mut out = Vec::with_capacity(family.pool.len());
    for (j, &t) in family.rho_images.iter().enumerate() {
        let column = j + 1;
        let k = first_hit(column);
        assert!(k <= cuts.order(), "truncation order must cover every first hit");
        let (lo, hi) = cuts.slab(k);
        let bound = hi - lo;
        let depth = depth_for_bound(bound).min(rho.total_depth());
        let num = (t * (1u64 << depth) as f64).floor() as u64;
        let num = num.min((1u64 << depth.max(1)) - 1);
        let interval = DyadicIv { num, depth };
        let cell = rho.preimage_box(interval)?;
        out.push(Assignment {
            pool_idx: j,
            column,
            first_hit: k,
            bound,
            interval,
            cell,
            anchor: interval.lo(),
        });
    }
    Ok(out)
}

/// Variant of [`select_theta`] that also enforces pairwise-disjoint anchored
/// intervals (so no term cell is swallowed by a shallower one) and returns
/// the assignments plus the dense-set numeration for the pipeline.
pub fn select_theta_anchored(
    dim: usize,
    schedule: &DivergenceSchedule,
    seed: u64,
    pool_cap: usize,
    cuts: &CutPoints,
    rho: &DigitInterleave,
) -> Result<(ThetaFamily, Vec<Assignment>, Vec<f64>), DivergeError> {
    schedule.validate()?;
    let target = schedule.entry_count().min(pool_cap.max(1));
    let offsets = seed_offsets(dim, seed);
    let mut pool: Vec<Vec<f64>> = Vec::new();
    let mut rho_images: Vec<f64> = Vec::new();
    let mut intervals: Vec<DyadicIv> = Vec::new();
    let mut index = 0usize;
    while pool.len() < target && index < 200_000 {
        let cand = kronecker_point(dim, &offsets, index);
        index += 1;
        let (coords, t) = snap_off_grid(rho, &cand);
        let column = pool.len() + 1;
        let k = first_hit(column);
        assert!(k <= cuts.order());
        let (lo, hi) = cuts.slab(k);
        let depth = depth_for_bound(hi - lo).min(rho.total_depth());
        let num = ((t * (1u64 << depth) as f64).floor() as u64).min((1u64 << depth.max(1)) - 1);
        let iv = DyadicIv { num, depth };
        let clash = intervals.iter().any(|other| {
            let d = iv.depth.min(other.depth);
            (iv.num >> (iv.depth - d)) == (other.num >> (other.depth - d))
        });
        if clash {
            continue;
        }
        intervals.push(iv);
        pool.push(coords);
        rho_images.push(t);
    }
    if pool.len() < target {
        return Err(DivergeError::Placement { needed: target, placed: pool.len() });
    }
    let entries = assign_entries(schedule, pool.len());
    let family = ThetaFamily { pool, rho_images, entries, seed };
    let assignments = assign_intervals(&family, cuts, rho)?;
    let dense: Vec<f64> = assignments.iter().map(|a| a.anchor).collect();
    Ok((family, assignments, dense))
}

/// One materialized term of `F1` or `F2`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TermRecord {
    pub level: usize,
    pub slot: usize,
    pub parity: Parity,
    pub pool_idx: usize,
    pub weight: f64,
    pub interval: DyadicIv,
    pub volume: f64,
}

/// The pair `F1, F2` with full provenance.
#[derive(Debug, Clone)]
pub struct FPair {
    pub f1: BoxSum,
    pub f2: BoxSum,
    pub provenance: Vec<TermRecord>,
    pub schedule: DivergenceSchedule,
}

/// `F1 = Σ_n (ε_n/N_n) Σ_i χ_{M_{2i−1}}/|M_{2i−1}|` and the even-index
/// counterpart `F2`.
pub fn build_f_pair(
    family: &ThetaFamily,
    assignments: &[Assignment],
    schedule: &DivergenceSchedule,
) -> Result<FPair, DivergeError> {
    schedule.validate()?;
    let mut f1 = Vec::new();
    let mut f2 = Vec::new();
    let mut provenance = Vec::new();
    for e in &family.entries {
        let a = &assignments[e.pool_idx];
        let volume = a.cell.volume();
        let eps = schedule.epsilons[e.level - 1];
        let width = schedule.widths[e.level - 1] as f64;
        let weight = eps / width / volume;
        let term = (a.cell.clone(), weight);
        match e.parity {
            Parity::Odd => f1.push(term),
            Parity::Even => f2.push(term),
        }
        provenance.push(TermRecord {
            level: e.level,
            slot: e.slot,
            parity: e.parity,
            pool_idx: e.pool_idx,
            weight,
            interval: a.interval,
            volume,
        });
    }
    Ok(FPair {
        f1: BoxSum::new(f1),
        f2: BoxSum::new(f2),
        provenance,
        schedule: schedule.clone(),
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MembershipReport {
    pub l1_f1: f64,
    pub l1_f2: f64,
    pub norm_f1: f64,
    pub norm_f2: f64,
    pub ratio_f1: f64,
    pub ratio_f2: f64,
    pub ratio_lo: f64,
    pub ratio_hi: f64,
    pub pass: bool,
}

/// Luxemburg norms of the pair against the constructed exponent and the
/// sandwich ratios `‖F‖_{p̄}/‖F‖₁ ∈ [1/4, 4]`.
pub fn membership_check(
    fpair: &FPair,
    pbar: &ExponentFn,
    tol: f64,
) -> Result<MembershipReport, DivergeError> {
    let l1_f1 = vexp::l1_norm(&fpair.f1, &pbar.rho)?;
    let l1_f2 = vexp::l1_norm(&fpair.f2, &pbar.rho)?;
    let norm_f1 = vexp::norm(&fpair.f1, pbar, tol)?.value;
    let norm_f2 = vexp::norm(&fpair.f2, pbar, tol)?.value;
    let ratio_f1 = if l1_f1 > 0.0 { norm_f1 / l1_f1 } else { 1.0 };
    let ratio_f2 = if l1_f2 > 0.0 { norm_f2 / l1_f2 } else { 1.0 };
    let (ratio_lo, ratio_hi) = (0.25 - 1e-6, 4.0 + 1e-6);
    let within = |r: f64| (ratio_lo..=ratio_hi).contains(&r);
    let pass = norm_f1.is_finite() && norm_f2.is_finite() && within(ratio_f1) && within(ratio_f2);
    Ok(MembershipReport {
        l1_f1,
        l1_f2,
        norm_f1,
        norm_f2,
        ratio_f1,
        ratio_f2,
        ratio_lo,
        ratio_hi,
        pass,
    })
}

pub const GROWTH_THRESHOLDS: [f64; 8] = [1.0, 2.0, 5.0, 10.0, 20.0, 50.0, 100.0, 1000.0];

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GrowthReport {
    pub grid_depth: u32,
    pub nmax: usize,
    pub n_terms: usize,
    pub thresholds: Vec<f64>,
    /// Fractions of grid cells with ladder-G above each threshold.
    pub ladder_fractions: Vec<f64>,
    /// Fractions for the all-index sweep max `max_{N ≤ n_terms} |S_N|`.
    pub sweep_fractions: Vec<f64>,
    pub ladder_median: f64,
    pub ladder_max: f64,
    pub sweep_max: f64,
    /// Per-cell ladder maxima (dyadic-block partial sums including the
    /// constant term; for Walsh systems these are cell averages of F1+F2).
    pub ladder_cells: Vec<f64>,
    /// Per-cell sweep maxima of the raw partial-sum functional.
    pub sweep_cells: Vec<f64>,
}

impl GrowthReport {
    /// CSV rows `threshold, measure_fraction, nmax, Nmax`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("threshold,measure_fraction,nmax,Nmax\n");
        for (t, f) in self.thresholds.iter().zip(&self.ladder_fractions) {
            s.push_str(&format!("{},{},{},{}\n", t, f, self.nmax, self.n_terms));
        }
        s
    }

    pub fn fraction_above(&self, threshold: f64) -> f64 {
        let hits = self.ladder_cells.iter().filter(|&&g| g > threshold).count();
        hits as f64 / self.ladder_cells.len() as f64
    }
}

/// Evaluate the growth functionals over the interleaved-depth grid.
///
/// Two maxima are recorded per cell: the all-index sweep
/// `max_{N ≤ n_terms} |S_N(x)|` of the combined partial-sum functional, and
/// the dyadic ladder `max_j |c₀ + S_{2^j − 1}(x)|` (the constant term
/// restored), which for Walsh-type systems equals the maximal cell average
/// of `F1 + F2` and is provably nondecreasing when positive mass is added.
pub fn growth_experiment(
    fpair: &FPair,
    sys: &BiorthSystem,
    grid_depth: u32,
    n_terms: usize,
) -> Result<GrowthReport, DivergeError> {
    let rho = DigitInterleave::for_dim(sys.dim);
    let cells = 1u64 << grid_depth;

    // Precompute coefficients of the combined functional.
    let c_f1: Vec<f64> = sys.coefficients(&fpair.f1, Which::G, n_terms)?;
    let c_f2: Vec<f64> = sys.coefficients(&fpair.f2, Which::F, n_terms)?;
    let c0: f64 = total_mass(&fpair.f1) + total_mass(&fpair.f2);

    // 1-D interval images of every term (both halves), for exact averages.
    let mut term_ivs: Vec<(DyadicIv, f64)> = Vec::new();
    for rec in &fpair.provenance {
        term_ivs.push((rec.interval, rec.weight));
    }

    let mut ladder_cells = Vec::with_capacity(cells as usize);
    let mut sweep_cells = Vec::with_capacity(cells as usize);
    for cell in 0..cells {
        let iv = DyadicIv { num: cell, depth: grid_depth };
        let b = rho.preimage_box(iv)?;
        let x: Vec<f64> = b
            .axes
            .iter()
            .map(|axis| (axis.num as f64 + 0.5) / (1u64 << axis.depth) as f64)
            .collect();

        // Sweep: running partial sums of the combined functional.
        let mut acc = 0.0f64;
        let mut sweep = 0.0f64;
        for n in 1..=n_terms {
            let fv = sys.eval(n, Which::F, &x)?;
            let gv = sys.eval(n, Which::G, &x)?;
            acc += c_f1[n - 1] * fv + c_f2[n - 1] * gv;
            sweep = sweep.max(acc.abs());
        }
        sweep_cells.push(sweep);

        // Ladder: exact cell averages of F1 + F2 over the dyadic tower.
        let mut ladder = c0.abs(); // j = 0: the whole cube
        for j in 1..=grid_depth {
            let q = DyadicIv { num: cell >> (grid_depth - j), depth: j };
            let mut avg = 0.0f64;
            for &(iv_t, w) in &term_ivs {
                let d = q.depth.min(iv_t.depth);
                let nested = (q.num >> (q.depth - d)) == (iv_t.num >> (iv_t.depth - d));
                if nested {
                    let overlap = iv_t.len().min(q.len());
                    avg += w * overlap / q.len();
                }
            }
            ladder = ladder.max(avg.abs());
        }
        ladder_cells.push(ladder);
    }

    let frac = |cells_g: &[f64], tau: f64| {
        cells_g.iter().filter(|&&g| g > tau).count() as f64 / cells_g.len() as f64
    };
    let thresholds = GROWTH_THRESHOLDS.to_vec();
    let ladder_fractions = thresholds.iter().map(|&t| frac(&ladder_cells, t)).collect();
    let sweep_fractions = thresholds.iter().map(|&t| frac(&sweep_cells, t)).collect();
    let mut sorted = ladder_cells.clone();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let ladder_median = sorted[sorted.len() / 2];
    let ladder_max = *sorted.last().unwrap();
    let sweep_max = sweep_cells.iter().cloned().fold(0.0, f64::max);

    Ok(GrowthReport {
        grid_depth,
        nmax: fpair.schedule.nmax(),
        n_terms,
        thresholds,
        ladder_fractions,
        sweep_fractions,
        ladder_median,
        ladder_max,
        sweep_max,
        ladder_cells,
        sweep_cells,
    })
}

fn total_mass(f: &BoxSum) -> f64 {
    f.terms.iter().map(|(b, w)| w * b.volume()).sum()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GrowthComparison {
    pub cellwise_nondecreasing: bool,
    pub min_gap: f64,
    pub fraction_before: f64,
    pub fraction_after: f64,
    pub strictly_grew: bool,
}

/// Compare paired runs (same seed and grid, larger level count second).
pub fn compare_growth(before: &GrowthReport, after: &GrowthReport, threshold: f64) -> GrowthComparison {
    assert_eq!(before.ladder_cells.len(), after.ladder_cells.len(), "grids must match");
    let mut min_gap = f64::INFINITY;
    for (b, a) in before.ladder_cells.iter().zip(&after.ladder_cells) {
        min_gap = min_gap.min(a - b);
    }
    let fraction_before = before.fraction_above(threshold);
    let fraction_after = after.fraction_above(threshold);
    GrowthComparison {
        cellwise_nondecreasing: min_gap >= -1e-12,
        min_gap,
        fraction_before,
        fraction_after,
        strictly_grew: fraction_after > fraction_before,
    }
}

/// Full divergence-experiment configuration.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DivergeConfig {
    pub exponent: ExponentSpec,
    pub dim: usize,
    pub nmax: usize,
    pub grid_depth: u32,
    /// Partial-sum range of the sweep (defaults to `2^{grid_depth} − 1`).
    pub n_terms: Option<usize>,
    pub system: BiorthSystem,
    pub seed: u64,
    pub pool_cap: usize,
    pub tol: f64,
}

impl Default for DivergeConfig {
    fn default() -> Self {
        DivergeConfig {
            exponent: ExponentSpec::ConjLog,
            dim: 2,
            nmax: 4,
            grid_depth: 12,
            n_terms: None,
            system: BiorthSystem::walsh(2),
            seed: 1,
            pool_cap: 10,
            tol: 1e-8,
        }
    }
}

#[derive(Debug, Clone)]
pub struct DivergeResult {
    pub pipeline: PipelineResult,
    pub family: ThetaFamily,
    pub assignments: Vec<Assignment>,
    pub fpair: FPair,
    pub membership: MembershipReport,
    pub growth: GrowthReport,
}

/// End-to-end divergence experiment: anchored family, pipeline with the
/// Θ-numeration as the dense set, pair assembly, membership and growth.
pub fn run_diverge(cfg: &DivergeConfig) -> Result<DivergeResult, DivergeError> {
    let schedule = DivergenceSchedule::standard(cfg.nmax);
    let pool_target = schedule.entry_count().min(cfg.pool_cap);
    let levels = first_hit(pool_target).max(first_hit(pool_target.max(1)));

    // Cut points first (independent of anchors), then the anchored family.
    let input_profile = cfg.exponent.profile()?;
    let base_profile = input_profile.conjugate().0;
    let star = base_profile
        .rearrange()
        .map_err(ConstructError::from)?
        .sorted;
    let h = crate::construct::envelope(&star)?;
    let (params, cuts) = crate::construct::auto_params(&h, levels)?;
    let rho = DigitInterleave::for_dim(cfg.dim);
    let (family, assignments, dense) =
        select_theta_anchored(cfg.dim, &schedule, cfg.seed, cfg.pool_cap, &cuts, &rho)?;

    let pipe_cfg = PipelineConfig {
        exponent: cfg.exponent.clone(),
        mode: PipelineMode::Conjugate,
        dim: cfg.dim,
        levels,
        params: Some(params),
        dense_set: Some(dense),
        samples: 2000,
        seed: cfg.seed,
        piece_cap: 400_000,
    };
    let pipeline = run_pipeline(&pipe_cfg)?;

    let fpair = build_f_pair(&family, &assignments, &schedule)?;
    let membership = membership_check(&fpair, &pipeline.conj_exponent, cfg.tol)?;
    let n_terms = cfg.n_terms.unwrap_or((1usize << cfg.grid_depth) - 1);
    let growth = growth_experiment(&fpair, &cfg.system, cfg.grid_depth, n_terms)?;

    Ok(DivergeResult { pipeline, family, assignments, fpair, membership, growth })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schedule_standard_shape() {
        let s = DivergenceSchedule::standard(4);
        assert_eq!(s.nmax(), 4);
        assert_eq!(s.entry_count(), 8);
        s.validate().unwrap();
        assert_eq!(s.epsilons[1], 0.25);
    }

    #[test]
    fn select_theta_counts_and_regularity() {
        let schedule = DivergenceSchedule::standard(1);
        let fam = select_theta(2, &schedule, 7, 10).unwrap();
        assert_eq!(fam.pool.len(), 2);
        // Positive distance to every depth-10 dyadic boundary.
        for p in &fam.pool {
            for &c in p {
                let scaled = c * 1024.0;
                let dist = (scaled - scaled.round()).abs() / 1024.0;
                assert!(dist > 0.0, "point {c} sits on a depth-10 boundary");
            }
        }
    }

    #[test]
    fn select_theta_deterministic_and_prefix_stable() {
        let s4 = DivergenceSchedule::standard(4);
        let s8 = DivergenceSchedule::standard(8);
        let a = select_theta(2, &s4, 42, 10).unwrap();
        let b = select_theta(2, &s8, 42, 10).unwrap();
        assert_eq!(a.pool.len(), 8);
        assert_eq!(b.pool.len(), 10);
        for i in 0..8 {
            assert_eq!(a.pool[i], b.pool[i], "pool prefix must be seed-stable");
        }
        let c = select_theta(2, &s4, 42, 10).unwrap();
        assert_eq!(a.pool, c.pool);
    }

    #[test]
    fn select_theta_coverage_density() {
        // With a large schedule the pool covers every interleaved depth-4 cell.
        let schedule = DivergenceSchedule {
            epsilons: (1..=6).map(|n| 1.0 / (n * n) as f64).collect(),
            widths: (1..=6).map(|n| 1usize << n).collect(),
        };
        let fam = select_theta(2, &schedule, 3, usize::MAX).unwrap();
        let mut hit = vec![false; 16];
        for &t in &fam.rho_images {
            hit[(t * 16.0).floor() as usize] = true;
        }
        assert!(hit.iter().all(|&h| h), "coverage gaps: {hit:?}");
    }

    #[test]
    fn assignment_volumes_match_bounds() {
        let cfg = DivergeConfig { nmax: 2, ..Default::default() };
        let r = run_diverge(&cfg).unwrap();
        for a in &r.assignments {
            assert!(a.interval.len() <= a.bound + 1e-18);
            assert!(a.interval.len() > a.bound / 4.0, "interval too small vs bound");
            assert_eq!(a.cell.volume(), a.interval.len());
            // ρ(θ) lies inside the assigned interval.
            let t = r.family.rho_images[a.pool_idx];
            assert!(a.interval.contains_point(t), "ρθ = {t} outside {:?}", a.interval);
        }
        // Anchors are pairwise disjoint intervals.
        for i in 0..r.assignments.len() {
            for j in 0..i {
                let a = r.assignments[i].interval;
                let b = r.assignments[j].interval;
                let d = a.depth.min(b.depth);
                assert_ne!(a.num >> (a.depth - d), b.num >> (b.depth - d), "{i} vs {j}");
            }
        }
    }

    #[test]
    fn f_pair_masses() {
        let cfg = DivergeConfig { nmax: 3, ..Default::default() };
        let r = run_diverge(&cfg).unwrap();
        let mass1 = total_mass(&r.fpair.f1);
        let mass2 = total_mass(&r.fpair.f2);
        let want: f64 = (1..=3).map(|n| 1.0 / (n * n) as f64).sum();
        assert!((mass1 - want).abs() < 1e-12, "{mass1} vs {want}");
        assert!((mass2 - want).abs() < 1e-12);
        // Odd entries feed F1 only.
        for rec in &r.fpair.provenance {
            assert!(rec.weight > 0.0);
        }
    }

    #[test]
    fn single_term_pair_is_scaled_indicator() {
        // nmax = 1: F1 = χ_M/|M| with ε₁ = 1.
        let cfg = DivergeConfig { nmax: 1, ..Default::default() };
        let r = run_diverge(&cfg).unwrap();
        assert_eq!(r.fpair.f1.terms.len(), 1);
        let (b, w) = &r.fpair.f1.terms[0];
        assert!((w * b.volume() - 1.0).abs() < 1e-12);
        assert!((total_mass(&r.fpair.f1) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn membership_single_indicator_ratio() {
        // F = χ_M/|M| for a window cell: ratio within the sandwich.
        let cfg = DivergeConfig { nmax: 1, ..Default::default() };
        let r = run_diverge(&cfg).unwrap();
        assert!(r.membership.pass, "{:?}", r.membership);
        assert!((r.membership.l1_f1 - 1.0).abs() < 1e-9);
    }

    #[test]
    fn growth_zero_pair() {
        let fpair = FPair {
            f1: BoxSum::zero(),
            f2: BoxSum::zero(),
            provenance: vec![],
            schedule: DivergenceSchedule::standard(1),
        };
        let sys = BiorthSystem::walsh(2);
        let rep = growth_experiment(&fpair, &sys, 6, 63).unwrap();
        assert_eq!(rep.ladder_max, 0.0);
        assert_eq!(rep.sweep_max, 0.0);
    }

    #[test]
    fn growth_single_walsh_function() {
        // F1 = w₃ as a box sum: the sweep max is |w₃| = 1 everywhere once
        // N ≥ 3.
        let sys = BiorthSystem::walsh(2);
        let mut terms = Vec::new();
        for cx in 0..4u64 {
            for cy in 0..4u64 {
                let axes = vec![DyadicIv { num: cx, depth: 2 }, DyadicIv { num: cy, depth: 2 }];
                let b = DyadicBox { axes };
                let x = [(cx as f64 + 0.5) / 4.0, (cy as f64 + 0.5) / 4.0];
                terms.push((b, sys.eval(3, Which::F, &x).unwrap()));
            }
        }
        let fpair = FPair {
            f1: BoxSum::new(terms),
            f2: BoxSum::zero(),
            provenance: vec![],
            schedule: DivergenceSchedule::standard(1),
        };
        let rep = growth_experiment(&fpair, &sys, 6, 63).unwrap();
        for &g in &rep.sweep_cells {
            assert!((g - 1.0).abs() < 1e-12, "sweep G = {g}");
        }
    }

    #[test]
    fn ladder_equals_block_partial_sums_for_walsh() {
        // For Walsh systems the dyadic-block partial sums plus the constant
        // term are exactly the cell averages the ladder computes.
        let cfg = DivergeConfig { nmax: 2, grid_depth: 6, ..Default::default() };
        let r = run_diverge(&cfg).unwrap();
        let sys = cfg.system;
        let combined = {
            let mut t = r.fpair.f1.terms.clone();
            t.extend(r.fpair.f2.terms.clone());
            BoxSum::new(t)
        };
        let c0 = total_mass(&combined);
        for cell in [0u64, 7, 21, 40, 63] {
            let rho = DigitInterleave::for_dim(2);
            let b = rho.preimage_box(DyadicIv { num: cell, depth: 6 }).unwrap();
            let x: Vec<f64> = b
                .axes
                .iter()
                .map(|axis| (axis.num as f64 + 0.5) / (1u64 << axis.depth) as f64)
                .collect();
            for j in 1..=6u32 {
                let n_block = (1usize << j) - 1;
                let s = sys.partial_sum(&r.fpair.f1, &r.fpair.f2, n_block, &x).unwrap();
                // Average of F1+F2 over the depth-j Morton cell around x.
                let q = DyadicIv { num: cell >> (6 - j), depth: j };
                let mut avg = 0.0;
                for rec in &r.fpair.provenance {
                    let d = q.depth.min(rec.interval.depth);
                    if (q.num >> (q.depth - d)) == (rec.interval.num >> (rec.interval.depth - d)) {
                        avg += rec.weight * rec.interval.len().min(q.len()) / q.len();
                    }
                }
                assert!(
                    (c0 + s - avg).abs() < 1e-9,
                    "cell {cell} j {j}: c0+S = {}, avg = {avg}",
                    c0 + s
                );
            }
        }
    }

    #[test]
    fn paired_runs_grow() {
        let base = DivergeConfig { grid_depth: 10, ..Default::default() };
        let small = run_diverge(&DivergeConfig { nmax: 2, ..base.clone() }).unwrap();
        let large = run_diverge(&DivergeConfig { nmax: 4, ..base }).unwrap();
        let cmp = compare_growth(&small.growth, &large.growth, 10.0);
        assert!(cmp.cellwise_nondecreasing, "min gap {}", cmp.min_gap);
        assert!(cmp.strictly_grew, "{} -> {}", cmp.fraction_before, cmp.fraction_after);
    }
}
