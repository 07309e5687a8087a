//! Exact arithmetic for 1-D piecewise functions on `[0,1]`.
//!
//! A [`Piecewise1D`] is a sorted list of disjoint half-open pieces, each a
//! constant or a shifted copy of `t ↦ ln(e/t)` (optionally mirrored and/or
//! Hölder conjugated), plus a default value on the uncovered remainder.
//! Integrals, power integrals `∫ c^{f}`, level-set measures and decreasing
//! rearrangements are all computed from closed-form antiderivatives and
//! closed-form level-set inversions; no quadrature is used for the
//! `Const`/`Log` algebra. The conjugated kinds have no elementary
//! antiderivative, so their power integrals go through a certified
//! adaptive rule on the log-integrand (see [`exp_ratio_kernel`]).

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// `ln(e/s) = 1 − ln s`.
#[inline]
pub fn log_e_over(s: f64) -> f64 {
    1.0 - s.ln()
}

/// Pointwise Hölder conjugate `v ↦ v/(v−1)`; `v = 1` maps to `+∞`.
#[inline]
pub fn holder_conjugate_value(v: f64) -> f64 {
    if v <= 1.0 {
        f64::INFINITY
    } else {
        v / (v - 1.0)
    }
}

#[derive(Debug, Error)]
pub enum PiecewiseError {
    #[error("interval [{lo}, {hi}) is not inside [0,1] or is empty")]
    BadInterval { lo: f64, hi: f64 },
    #[error("pieces overlap or are unsorted near position {at}")]
    Overlap { at: f64 },
    #[error("log piece on [{lo}, {hi}) has window outside (0,1] (shift {shift})")]
    BadLogWindow { lo: f64, hi: f64, shift: f64 },
    #[error("operation requires the Const/Log algebra; found a conjugated piece")]
    UnsupportedKind,
    #[error("rearrangement is not exact: log value ranges interleave at value {at}")]
    InterleavedRanges { at: f64 },
    #[error("function must be nonnegative for this operation (found {value} at {at})")]
    Negative { at: f64, value: f64 },
}

/// The shape of one piece.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum PieceKind {
    /// Constant value.
    Const(f64),
    /// `t ↦ ln(e/(t − shift))`, strictly decreasing; needs `t − shift ∈ (0,1]`.
    Log { shift: f64 },
    /// `t ↦ ln(e/(shift − t))`, strictly increasing (mirror image of `Log`).
    LogRev { shift: f64 },
    /// Hölder conjugate of `Log`: `w/(w−1)` with `w = ln(e/(t − shift))`; increasing.
    ConjLog { shift: f64 },
    /// Hölder conjugate of `LogRev`; decreasing.
    ConjLogRev { shift: f64 },
}

impl PieceKind {
    /// Pointwise Hölder conjugate of the piece shape.
    pub fn conjugate(self) -> PieceKind {
        match self {
            PieceKind::Const(v) => PieceKind::Const(holder_conjugate_value(v)),
            PieceKind::Log { shift } => PieceKind::ConjLog { shift },
            PieceKind::ConjLog { shift } => PieceKind::Log { shift },
            PieceKind::LogRev { shift } => PieceKind::ConjLogRev { shift },
            PieceKind::ConjLogRev { shift } => PieceKind::LogRev { shift },
        }
    }

    fn is_conjugated(self) -> bool {
        matches!(self, PieceKind::ConjLog { .. } | PieceKind::ConjLogRev { .. })
    }
}

/// One piece of a [`Piecewise1D`], on the half-open interval `[lo, hi)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Piece {
    pub lo: f64,
    pub hi: f64,
    pub kind: PieceKind,
}

impl Piece {
    pub fn len(&self) -> f64 {
        self.hi - self.lo
    }

    /// Evaluate at `t ∈ [lo, hi)`.
    pub fn eval(&self, t: f64) -> f64 {
        match self.kind {
            PieceKind::Const(v) => v,
            PieceKind::Log { shift } => log_e_over(t - shift),
            PieceKind::LogRev { shift } => log_e_over(shift - t),
            PieceKind::ConjLog { shift } => holder_conjugate_value(log_e_over(t - shift)),
            PieceKind::ConjLogRev { shift } => holder_conjugate_value(log_e_over(shift - t)),
        }
    }

    /// Closed interval of values taken on `[lo, hi]` as `(min, max)`;
    /// open endpoints may report `+∞`.
    pub fn value_range(&self) -> (f64, f64) {
        let a = self.eval(self.lo);
        let b = match self.kind {
            PieceKind::Const(v) => v,
            PieceKind::Log { shift } => log_e_over(self.hi - shift),
            PieceKind::LogRev { shift } => log_e_over(shift - self.hi),
            PieceKind::ConjLog { shift } => holder_conjugate_value(log_e_over(self.hi - shift)),
            PieceKind::ConjLogRev { shift } => holder_conjugate_value(log_e_over(shift - self.hi)),
        };
        (a.min(b), a.max(b))
    }

    /// The `s`-window of a log-kind piece: the range of `t − shift`
    /// (or `shift − t`), oriented so that `s` increases.
    fn s_window(&self) -> Option<(f64, f64, bool)> {
        match self.kind {
            PieceKind::Const(_) => None,
            PieceKind::Log { shift } | PieceKind::ConjLog { shift } => {
                Some((self.lo - shift, self.hi - shift, false))
            }
            PieceKind::LogRev { shift } | PieceKind::ConjLogRev { shift } => {
                Some((shift - self.hi, shift - self.lo, true))
            }
        }
    }
}

/// Level-set measures `m_i = |{t : |f(t)| > α_i}|` at a decreasing list of
/// thresholds.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DistributionTable {
    pub thresholds: Vec<f64>,
    pub measures: Vec<f64>,
}

/// Result of a decreasing rearrangement, with the source→target links
/// needed to build the transport map.
#[derive(Debug, Clone)]
pub struct Rearrangement {
    /// The nonincreasing, equimeasurable output.
    pub sorted: Piecewise1D,
    /// Source interval → target interval, orientation `+1` (order preserving)
    /// or `-1` (order reversing); together the sources tile `[0,1]`.
    pub links: Vec<TransportLink>,
    /// Whether the exact piece algebra was used (`false` ⇒ grid fallback).
    pub exact: bool,
    /// Upper bound on the pointwise refinement error of the fallback path.
    pub fallback_error: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TransportLink {
    pub src_lo: f64,
    pub src_hi: f64,
    pub dst_lo: f64,
    pub dst_hi: f64,
    pub orient: i8,
}

/// A function on `[0,1]` given by sorted disjoint pieces plus a default
/// value on the complement. Immutable after construction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Piecewise1D {
    pieces: Vec<Piece>,
    default_value: f64,
}

impl Piecewise1D {
    pub fn new(mut pieces: Vec<Piece>, default_value: f64) -> Result<Self, PiecewiseError> {
        pieces.retain(|p| p.hi > p.lo);
        pieces.sort_by(|a, b| a.lo.partial_cmp(&b.lo).unwrap());
        let mut prev_hi = 0.0f64;
        for p in &pieces {
            if !(p.lo >= 0.0 && p.hi <= 1.0 + 1e-12 && p.hi > p.lo) {
                return Err(PiecewiseError::BadInterval { lo: p.lo, hi: p.hi });
            }
            if p.lo < prev_hi - 1e-15 {
                return Err(PiecewiseError::Overlap { at: p.lo });
            }
            if let Some((s_lo, s_hi, _)) = p.s_window() {
                // Endpoint singularity (s_lo = 0) is allowed as an open limit.
                if s_lo < -1e-15 || s_hi > 1.0 + 1e-12 {
                    let shift = match p.kind {
                        PieceKind::Log { shift }
                        | PieceKind::LogRev { shift }
                        | PieceKind::ConjLog { shift }
                        | PieceKind::ConjLogRev { shift } => shift,
                        PieceKind::Const(_) => unreachable!(),
                    };
                    return Err(PiecewiseError::BadLogWindow { lo: p.lo, hi: p.hi, shift });
                }
            }
            prev_hi = p.hi;
        }
        Ok(Piecewise1D { pieces, default_value })
    }

    /// The constant function.
    pub fn constant(v: f64) -> Self {
        Piecewise1D { pieces: vec![Piece { lo: 0.0, hi: 1.0, kind: PieceKind::Const(v) }], default_value: v }
    }

    /// `t ↦ ln(e/t)` on `(0,1]`.
    pub fn log_e_over_t() -> Self {
        Piecewise1D {
            pieces: vec![Piece { lo: 0.0, hi: 1.0, kind: PieceKind::Log { shift: 0.0 } }],
            default_value: 0.0,
        }
    }

    /// Step function: `values[i]` on `[breaks[i], breaks[i+1])`; `breaks`
    /// must start at 0 and end at 1.
    pub fn step(breaks: &[f64], values: &[f64]) -> Result<Self, PiecewiseError> {
        assert_eq!(breaks.len(), values.len() + 1, "breaks must bracket values");
        let pieces = values
            .iter()
            .zip(breaks.windows(2))
            .map(|(&v, w)| Piece { lo: w[0], hi: w[1], kind: PieceKind::Const(v) })
            .collect();
        Piecewise1D::new(pieces, 0.0)
    }

    pub fn pieces(&self) -> &[Piece] {
        &self.pieces
    }

    pub fn default_value(&self) -> f64 {
        self.default_value
    }

    pub fn piece_count(&self) -> usize {
        self.pieces.len()
    }

    /// Total length of the explicit pieces.
    pub fn covered_length(&self) -> f64 {
        self.pieces.iter().map(Piece::len).sum()
    }

    pub fn has_conjugated_pieces(&self) -> bool {
        self.pieces.iter().any(|p| p.kind.is_conjugated())
    }

    /// Evaluate at `t`; total on `[0,1]` except at piece endpoints where the
    /// half-open convention decides.
    pub fn eval(&self, t: f64) -> f64 {
        match self.pieces.binary_search_by(|p| {
            if t < p.lo {
                std::cmp::Ordering::Greater
            } else if t >= p.hi {
                std::cmp::Ordering::Less
            } else {
                std::cmp::Ordering::Equal
            }
        }) {
            Ok(i) => self.pieces[i].eval(t),
            Err(_) => self.default_value,
        }
    }

    /// Pieces plus default-gap filler pieces, tiling `[0,1]` in order.
    /// Gaps at the ulp scale are null sets and get no filler.
    fn tiling(&self) -> Vec<Piece> {
        let mut out = Vec::with_capacity(self.pieces.len() * 2 + 1);
        let mut cursor = 0.0f64;
        for p in &self.pieces {
            if p.lo > cursor + 1e-15 {
                out.push(Piece { lo: cursor, hi: p.lo, kind: PieceKind::Const(self.default_value) });
            }
            out.push(*p);
            cursor = p.hi;
        }
        if cursor < 1.0 - 1e-15 {
            out.push(Piece { lo: cursor, hi: 1.0, kind: PieceKind::Const(self.default_value) });
        }
        out
    }

    /// Walk the piece cover of `[j_lo, j_hi)` (including default gaps) and
    /// accumulate `per_piece` over each overlap. Pieces are sorted, so the
    /// scan touches only the overlapping range.
    fn fold_over<F: FnMut(&Piece, f64, f64) -> f64>(
        &self,
        j_lo: f64,
        j_hi: f64,
        mut per_piece: F,
    ) -> f64 {
        let start = self.pieces.partition_point(|p| p.hi <= j_lo);
        let mut total = 0.0f64;
        let mut cursor = j_lo;
        for p in &self.pieces[start..] {
            if p.lo >= j_hi || total.is_infinite() {
                break;
            }
            if p.lo > cursor {
                let hi = p.lo.min(j_hi);
                if hi > cursor + 1e-15 {
                    let gap = Piece { lo: cursor, hi, kind: PieceKind::Const(self.default_value) };
                    total += per_piece(&gap, cursor, hi);
                }
                cursor = hi;
            }
            let lo = p.lo.max(cursor);
            let hi = p.hi.min(j_hi);
            if hi > lo {
                total += per_piece(p, lo, hi);
                cursor = hi;
            }
        }
        if cursor < j_hi - 1e-15 && total.is_finite() {
            let gap = Piece { lo: cursor, hi: j_hi, kind: PieceKind::Const(self.default_value) };
            total += per_piece(&gap, cursor, j_hi);
        }
        total
    }

    /// `∫_J f` by closed-form antiderivatives. `J` must be inside `[0,1]`.
    pub fn integrate(&self, j_lo: f64, j_hi: f64) -> Result<f64, PiecewiseError> {
        if !(0.0..=1.0 + 1e-12).contains(&j_lo) || j_hi > 1.0 + 1e-12 || j_hi < j_lo {
            return Err(PiecewiseError::BadInterval { lo: j_lo, hi: j_hi });
        }
        Ok(self.fold_over(j_lo, j_hi, |p, lo, hi| piece_integral(p, lo, hi)))
    }

    /// `∫_J c^{f(t)} dt` by closed forms (power rule / explicit log branch for
    /// the `Log` kinds; certified adaptive rule for conjugated kinds).
    /// Divergent integrals return `+∞`, not an error.
    pub fn pow_integral(&self, c: f64, j_lo: f64, j_hi: f64) -> Result<f64, PiecewiseError> {
        if !(0.0..=1.0 + 1e-12).contains(&j_lo) || j_hi > 1.0 + 1e-12 || j_hi < j_lo {
            return Err(PiecewiseError::BadInterval { lo: j_lo, hi: j_hi });
        }
        assert!(c > 0.0, "pow_integral base must be positive");
        let total = self.fold_over(j_lo, j_hi, |p, lo, hi| piece_pow_integral(p, c, lo, hi));
        Ok(if total.is_infinite() { f64::INFINITY } else { total })
    }

    /// `|{t ∈ [0,1] : |f(t)| > α}|` by closed-form level-set inversion.
    pub fn distribution(&self, alpha: f64) -> f64 {
        debug_assert!(alpha >= 0.0);
        let mut total = 0.0f64;
        for p in self.tiling() {
            total += piece_level_measure(&p, alpha);
        }
        total
    }

    pub fn distribution_table(&self, thresholds: &[f64]) -> DistributionTable {
        let mut th = thresholds.to_vec();
        th.sort_by(|a, b| b.partial_cmp(a).unwrap());
        let measures = th.iter().map(|&a| self.distribution(a)).collect();
        DistributionTable { thresholds: th, measures }
    }

    /// Decreasing rearrangement with transport links. Exact for functions in
    /// the `Const`/`Log` algebra whose log value ranges do not interleave;
    /// otherwise falls back to a step refinement at `fallback_depth`.
    pub fn rearrange(&self) -> Result<Rearrangement, PiecewiseError> {
        self.rearrange_with_depth(DEFAULT_FALLBACK_DEPTH)
    }

    pub fn rearrange_with_depth(&self, fallback_depth: u32) -> Result<Rearrangement, PiecewiseError> {
        for p in self.tiling() {
            let (mn, _) = p.value_range();
            if mn < 0.0 {
                return Err(PiecewiseError::Negative { at: p.lo, value: mn });
            }
        }
        match self.rearrange_exact() {
            Ok(r) => Ok(r),
            Err(PiecewiseError::UnsupportedKind) | Err(PiecewiseError::InterleavedRanges { .. }) => {
                Ok(self.rearrange_grid(fallback_depth))
            }
            Err(e) => Err(e),
        }
    }

    fn rearrange_exact(&self) -> Result<Rearrangement, PiecewiseError> {
        #[derive(Clone, Copy)]
        enum AtomValue {
            Const(f64),
            // value ln(e/s) on the s-window [s_lo, s_hi); `reversed` links the
            // source orientation (s decreasing with t).
            Log { s_lo: f64, s_hi: f64, reversed: bool },
        }
        struct Atom {
            src_lo: f64,
            src_hi: f64,
            value: AtomValue,
        }

        let mut atoms = Vec::new();
        for p in self.tiling() {
            match p.kind {
                PieceKind::Const(v) => {
                    atoms.push(Atom { src_lo: p.lo, src_hi: p.hi, value: AtomValue::Const(v) })
                }
                PieceKind::Log { .. } | PieceKind::LogRev { .. } => {
                    let (s_lo, s_hi, reversed) = p.s_window().unwrap();
                    atoms.push(Atom {
                        src_lo: p.lo,
                        src_hi: p.hi,
                        value: AtomValue::Log { s_lo, s_hi, reversed },
                    })
                }
                _ => return Err(PiecewiseError::UnsupportedKind),
            }
        }

        // Sweep values from high to low; for log atoms value = ln(e/s), so the
        // sweep runs over increasing s. Const value v sits at s = e^{1-v}.
        let s_of_const = |v: f64| (1.0 - v).exp();

        let mut breakpoints: Vec<f64> = Vec::new();
        for a in &atoms {
            match a.value {
                AtomValue::Const(v) => breakpoints.push(s_of_const(v)),
                AtomValue::Log { s_lo, s_hi, .. } => {
                    breakpoints.push(s_lo);
                    breakpoints.push(s_hi);
                }
            }
        }
        breakpoints.sort_by(|a, b| a.partial_cmp(b).unwrap());
        breakpoints.dedup();

        let mut out_pieces: Vec<Piece> = Vec::new();
        let mut links: Vec<TransportLink> = Vec::new();
        let mut cursor = 0.0f64;

        let emit_consts_at = |s: f64,
                                  cursor: &mut f64,
                                  out_pieces: &mut Vec<Piece>,
                                  links: &mut Vec<TransportLink>| {
            // All const atoms with this exact value, in source order.
            for a in &atoms {
                if let AtomValue::Const(v) = a.value {
                    if s_of_const(v) == s {
                        let len = a.src_hi - a.src_lo;
                        out_pieces.push(Piece {
                            lo: *cursor,
                            hi: *cursor + len,
                            kind: PieceKind::Const(v),
                        });
                        links.push(TransportLink {
                            src_lo: a.src_lo,
                            src_hi: a.src_hi,
                            dst_lo: *cursor,
                            dst_hi: *cursor + len,
                            orient: 1,
                        });
                        *cursor += len;
                    }
                }
            }
        };

        for (i, &b) in breakpoints.iter().enumerate() {
            emit_consts_at(b, &mut cursor, &mut out_pieces, &mut links);
            let b_next = match breakpoints.get(i + 1) {
                Some(&x) => x,
                None => break,
            };
            if b_next <= b {
                continue;
            }
            // Log atoms active across (b, b_next).
            let mut active: Option<&Atom> = None;
            let mut count = 0usize;
            for a in &atoms {
                if let AtomValue::Log { s_lo, s_hi, .. } = a.value {
                    if s_lo <= b && s_hi >= b_next {
                        count += 1;
                        match active {
                            // Deterministic representative: earliest-opened window.
                            Some(cur) => {
                                let cur_lo = match cur.value {
                                    AtomValue::Log { s_lo, .. } => s_lo,
                                    AtomValue::Const(_) => unreachable!(),
                                };
                                if s_lo < cur_lo {
                                    active = Some(a);
                                }
                            }
                            None => active = Some(a),
                        }
                    }
                }
            }
            if count > 1 {
                // Window boundaries of adjacent slabs are computed through
                // independently rounded shifts, so overlap slivers at the
                // ulp scale of the anchors (~1e-16 absolute) are expected;
                // anything wider breaks the exact algebra.
                let width = b_next - b;
                if width > 4e-16 {
                    return Err(PiecewiseError::InterleavedRanges { at: log_e_over(b) });
                }
            }
            if let Some(a) = active {
                if let AtomValue::Log { s_lo, reversed, .. } = a.value {
                    let len = b_next - b;
                    out_pieces.push(Piece {
                        lo: cursor,
                        hi: cursor + len,
                        kind: PieceKind::Log { shift: cursor - b },
                    });
                    let (src_lo, src_hi, orient) = if !reversed {
                        (a.src_lo + (b - s_lo), a.src_lo + (b_next - s_lo), 1i8)
                    } else {
                        (a.src_hi - (b_next - s_lo), a.src_hi - (b - s_lo), -1i8)
                    };
                    links.push(TransportLink {
                        src_lo,
                        src_hi,
                        dst_lo: cursor,
                        dst_hi: cursor + len,
                        orient,
                    });
                    cursor += len;
                }
            }
        }

        let sorted = Piecewise1D { pieces: out_pieces, default_value: 0.0 };
        links.sort_by(|a, b| a.src_lo.partial_cmp(&b.src_lo).unwrap());
        // Overlap slivers leave ulp-scale gaps in the source coverage; close
        // them so every point of [0,1] has a transport image.
        let mut cursor = 0.0f64;
        for l in links.iter_mut() {
            let gap = l.src_lo - cursor;
            if gap > 0.0 && gap <= 1e-12 {
                l.src_lo = cursor;
            }
            cursor = l.src_hi;
        }
        if let Some(last) = links.last_mut() {
            if (1.0 - last.src_hi) > 0.0 && (1.0 - last.src_hi) <= 1e-12 {
                last.src_hi = 1.0;
            }
        }
        Ok(Rearrangement { sorted, links, exact: true, fallback_error: None })
    }

    /// Step-function fallback: refine to a dyadic grid, sort cell values.
    /// Returns the approximation together with a sampled variation bound.
    pub fn rearrange_grid(&self, depth: u32) -> Rearrangement {
        let cells = 1usize << depth.min(24);
        let w = 1.0 / cells as f64;
        let mut vals: Vec<(f64, usize)> = (0..cells)
            .map(|i| ((self.eval((i as f64 + 0.5) * w)).abs(), i))
            .collect();
        let mut max_var = 0.0f64;
        for i in 0..cells {
            let a = self.eval(i as f64 * w + w * 0.25).abs();
            let b = self.eval(i as f64 * w + w * 0.75).abs();
            max_var = max_var.max((a - vals[i].0).abs()).max((b - vals[i].0).abs());
        }
        vals.sort_by(|x, y| y.0.partial_cmp(&x.0).unwrap().then(x.1.cmp(&y.1)));
        let mut pieces = Vec::with_capacity(cells);
        let mut links = Vec::with_capacity(cells);
        for (j, &(v, i)) in vals.iter().enumerate() {
            let lo = j as f64 * w;
            pieces.push(Piece { lo, hi: lo + w, kind: PieceKind::Const(v) });
            links.push(TransportLink {
                src_lo: i as f64 * w,
                src_hi: (i + 1) as f64 * w,
                dst_lo: lo,
                dst_hi: lo + w,
                orient: 1,
            });
        }
        links.sort_by(|a, b| a.src_lo.partial_cmp(&b.src_lo).unwrap());
        Rearrangement {
            sorted: Piecewise1D { pieces, default_value: 0.0 },
            links,
            exact: false,
            fallback_error: Some(max_var),
        }
    }

    /// Exact pointwise minimum with another *nonincreasing* function, used to
    /// cap a rearranged profile by `ln(e/t)`. Both inputs must be
    /// nonincreasing and in the `Const`/`Log` algebra.
    pub fn min_with(&self, other: &Piecewise1D) -> Result<Piecewise1D, PiecewiseError> {
        let a = self.tiling();
        let b = other.tiling();
        let mut cuts: Vec<f64> = Vec::new();
        for p in a.iter().chain(b.iter()) {
            cuts.push(p.lo);
            cuts.push(p.hi);
        }
        // Crossing points between overlapping pieces resolve in closed form.
        for pa in &a {
            for pb in &b {
                let lo = pa.lo.max(pb.lo);
                let hi = pa.hi.min(pb.hi);
                if hi <= lo {
                    continue;
                }
                if let Some(x) = crossing_point(pa, pb) {
                    if x > lo && x < hi {
                        cuts.push(x);
                    }
                }
            }
        }
        cuts.sort_by(|x, y| x.partial_cmp(y).unwrap());
        cuts.dedup();
        let mut pieces = Vec::new();
        for w in cuts.windows(2) {
            let (lo, hi) = (w[0], w[1]);
            if hi <= lo {
                continue;
            }
            let mid = 0.5 * (lo + hi);
            let pa = piece_at(&a, mid);
            let pb = piece_at(&b, mid);
            let chosen = if pa.eval(mid) <= pb.eval(mid) { pa } else { pb };
            pieces.push(Piece { lo, hi, kind: chosen.kind });
        }
        merge_adjacent(&mut pieces);
        Piecewise1D::new(pieces, 0.0)
    }

    /// Replace the values on `[w_lo, w_hi)` with `g(t − offset)` where `g` is
    /// given by its tiling; pieces of `self` are fragmented exactly.
    pub fn overwrite_window(
        &self,
        w_lo: f64,
        w_hi: f64,
        g: &Piecewise1D,
        offset: f64,
    ) -> Result<Piecewise1D, PiecewiseError> {
        let w_lo = w_lo.max(0.0);
        let w_hi = w_hi.min(1.0);
        if w_hi <= w_lo {
            return Ok(self.clone());
        }
        let mut pieces: Vec<Piece> = Vec::new();
        for p in &self.pieces {
            if p.hi <= w_lo || p.lo >= w_hi {
                pieces.push(*p);
                continue;
            }
            if p.lo < w_lo {
                pieces.push(Piece { lo: p.lo, hi: w_lo, kind: p.kind });
            }
            if p.hi > w_hi {
                pieces.push(Piece { lo: w_hi, hi: p.hi, kind: p.kind });
            }
        }
        // Shifted copy of g restricted to the window.
        for gp in g.tiling() {
            let lo = (gp.lo + offset).max(w_lo);
            let hi = (gp.hi + offset).min(w_hi);
            if hi <= lo {
                continue;
            }
            let kind = match gp.kind {
                PieceKind::Const(v) => {
                    if v == self.default_value {
                        continue;
                    }
                    PieceKind::Const(v)
                }
                PieceKind::Log { shift } => PieceKind::Log { shift: shift + offset },
                PieceKind::LogRev { shift } => PieceKind::LogRev { shift: shift + offset },
                PieceKind::ConjLog { shift } => PieceKind::ConjLog { shift: shift + offset },
                PieceKind::ConjLogRev { shift } => PieceKind::ConjLogRev { shift: shift + offset },
            };
            pieces.push(Piece { lo, hi, kind });
        }
        Piecewise1D::new(pieces, self.default_value)
    }

    /// Apply the pointwise Hölder conjugate piece-by-piece. Pieces where the
    /// value equals 1 on positive measure are reported via the flag.
    pub fn conjugate(&self) -> (Piecewise1D, bool) {
        let mut infinite_flag = false;
        let pieces = self
            .pieces
            .iter()
            .map(|p| {
                if let PieceKind::Const(v) = p.kind {
                    if v <= 1.0 {
                        infinite_flag = true;
                    }
                }
                Piece { lo: p.lo, hi: p.hi, kind: p.kind.conjugate() }
            })
            .collect();
        let default_value = holder_conjugate_value(self.default_value);
        if self.default_value <= 1.0 && self.covered_length() < 1.0 - 1e-12 {
            infinite_flag = true;
        }
        (Piecewise1D { pieces, default_value }, infinite_flag)
    }

    /// Line-oriented text format: `u v CONST value` / `u v LOGSHIFT d`
    /// (extensions: `LOGREV`, `CONJLOG`, `CONJLOGREV`); first line
    /// `DEFAULT value`.
    pub fn to_text(&self) -> String {
        let mut s = format!("DEFAULT {:?}\n", self.default_value);
        for p in &self.pieces {
            let line = match p.kind {
                PieceKind::Const(v) => format!("{:?} {:?} CONST {:?}", p.lo, p.hi, v),
                PieceKind::Log { shift } => format!("{:?} {:?} LOGSHIFT {:?}", p.lo, p.hi, shift),
                PieceKind::LogRev { shift } => format!("{:?} {:?} LOGREV {:?}", p.lo, p.hi, shift),
                PieceKind::ConjLog { shift } => format!("{:?} {:?} CONJLOG {:?}", p.lo, p.hi, shift),
                PieceKind::ConjLogRev { shift } => {
                    format!("{:?} {:?} CONJLOGREV {:?}", p.lo, p.hi, shift)
                }
            };
            s.push_str(&line);
            s.push('\n');
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self, String> {
        let mut default_value = 0.0f64;
        let mut pieces = Vec::new();
        for (ln, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let tok: Vec<&str> = line.split_whitespace().collect();
            let parse = |s: &str| s.parse::<f64>().map_err(|e| format!("line {}: {}", ln + 1, e));
            if tok[0] == "DEFAULT" {
                default_value = parse(tok.get(1).ok_or("missing default value")?)?;
                continue;
            }
            if tok.len() != 4 {
                return Err(format!("line {}: expected `u v KIND x`", ln + 1));
            }
            let (lo, hi, x) = (parse(tok[0])?, parse(tok[1])?, parse(tok[3])?);
            let kind = match tok[2] {
                "CONST" => PieceKind::Const(x),
                "LOGSHIFT" => PieceKind::Log { shift: x },
                "LOGREV" => PieceKind::LogRev { shift: x },
                "CONJLOG" => PieceKind::ConjLog { shift: x },
                "CONJLOGREV" => PieceKind::ConjLogRev { shift: x },
                k => return Err(format!("line {}: unknown kind {}", ln + 1, k)),
            };
            pieces.push(Piece { lo, hi, kind });
        }
        Piecewise1D::new(pieces, default_value).map_err(|e| e.to_string())
    }
}

pub const DEFAULT_FALLBACK_DEPTH: u32 = 20;

fn piece_at<'a>(tiling: &'a [Piece], t: f64) -> &'a Piece {
    tiling
        .iter()
        .find(|p| t >= p.lo && t < p.hi)
        .unwrap_or_else(|| tiling.last().unwrap())
}

fn merge_adjacent(pieces: &mut Vec<Piece>) {
    let mut out: Vec<Piece> = Vec::with_capacity(pieces.len());
    for p in pieces.drain(..) {
        if let Some(last) = out.last_mut() {
            if last.hi == p.lo && last.kind == p.kind {
                last.hi = p.hi;
                continue;
            }
        }
        out.push(p);
    }
    *pieces = out;
}

/// Crossing point of two monotone pieces, when one exists in closed form.
fn crossing_point(a: &Piece, b: &Piece) -> Option<f64> {
    use PieceKind::*;
    match (a.kind, b.kind) {
        (Const(_), Const(_)) => None,
        (Const(v), Log { shift }) | (Log { shift }, Const(v)) => {
            // ln(e/(t−d)) = v  ⟺  t = d + e^{1−v}
            Some(shift + (1.0 - v).exp())
        }
        (Const(v), LogRev { shift }) | (LogRev { shift }, Const(v)) => Some(shift - (1.0 - v).exp()),
        (Log { .. }, Log { .. }) => None, // parallel translates never cross
        _ => None,
    }
}

/// `∫_lo^hi piece(t) dt` in closed form. `ConjLog` kinds use the certified
/// adaptive rule on the substituted integrand (no elementary antiderivative).
fn piece_integral(p: &Piece, lo: f64, hi: f64) -> f64 {
    match p.kind {
        PieceKind::Const(v) => v * (hi - lo),
        PieceKind::Log { shift } => log_antiderivative(hi - shift) - log_antiderivative(lo - shift),
        PieceKind::LogRev { shift } => log_antiderivative(shift - lo) - log_antiderivative(shift - hi),
        PieceKind::ConjLog { shift } => conj_log_integral(lo - shift, hi - shift),
        PieceKind::ConjLogRev { shift } => conj_log_integral(shift - hi, shift - lo),
    }
}

/// Antiderivative of `ln(e/s) = 1 − ln s`: `2s − s ln s`, continuous at 0.
#[inline]
fn log_antiderivative(s: f64) -> f64 {
    if s <= 0.0 {
        0.0
    } else {
        2.0 * s - s * s.ln()
    }
}

/// `∫ conj(ln(e/s)) ds` over `[s1, s2] ⊆ (0,1]`; diverges when `s2 = 1` is
/// reached with positive measure only in the limit value sense (the +∞
/// endpoint itself is null), but `∫ 1/(−ln s)` diverges as `s → 1⁻`.
fn conj_log_integral(s1: f64, s2: f64) -> f64 {
    debug_assert!(s1 <= s2);
    if s2 <= 0.0 {
        return 0.0;
    }
    let s1 = s1.max(0.0);
    // conj(ln(e/s)) = 1 + 1/(−ln s); substitute u = −ln s:
    // ∫ (1 + 1/u) e^{−u} du over [−ln s2, −ln s1].
    let u_lo = -s2.ln();
    let u_hi = if s1 == 0.0 { f64::INFINITY } else { -s1.ln() };
    if u_lo <= 0.0 {
        return f64::INFINITY; // window touches s = 1 where 1/(−ln s) is non-integrable
    }
    let u_hi = u_hi.min(u_lo.max(1.0) + 750.0); // tail below e^{-750} is a strict 0 in f64
    (s2 - s1) + integral_exp_phi(|u| -u - u.ln(), u_lo, u_hi)
}

/// `∫_lo^hi c^{piece(t)} dt`, closed forms for `Const`/`Log`, kernel for the
/// conjugated kinds. Divergence reported as `+∞`.
fn piece_pow_integral(p: &Piece, c: f64, lo: f64, hi: f64) -> f64 {
    match p.kind {
        PieceKind::Const(v) => c.powf(v) * (hi - lo),
        PieceKind::Log { shift } => pow_log_window(c, lo - shift, hi - shift),
        PieceKind::LogRev { shift } => pow_log_window(c, shift - hi, shift - lo),
        PieceKind::ConjLog { shift } => pow_conj_window(c, lo - shift, hi - shift),
        PieceKind::ConjLogRev { shift } => pow_conj_window(c, shift - hi, shift - lo),
    }
}

/// `∫ c^{ln(e/s)} ds = c ∫ s^{−ln c} ds` over `[s1, s2]`.
fn pow_log_window(c: f64, s1: f64, s2: f64) -> f64 {
    debug_assert!(s1 <= s2);
    if s2 <= 0.0 {
        return 0.0;
    }
    let s1 = s1.max(0.0);
    let beta = c.ln();
    if (beta - 1.0).abs() < 1e-14 {
        // c = e: antiderivative c·ln s
        if s1 == 0.0 {
            return f64::INFINITY;
        }
        return c * (s2.ln() - s1.ln());
    }
    let pow = |s: f64| {
        if s == 0.0 {
            if 1.0 - beta > 0.0 {
                0.0
            } else {
                f64::INFINITY
            }
        } else {
            s.powf(1.0 - beta)
        }
    };
    let hi = pow(s2);
    let lo = pow(s1);
    if lo.is_infinite() || hi.is_infinite() {
        // Exponent −β ≤ −1 with the window touching its singular endpoint.
        return if beta >= 1.0 { f64::INFINITY } else { f64::INFINITY };
    }
    c / (1.0 - beta) * (hi - lo)
}

/// `∫ c^{conj(ln(e/s))} ds` over `[s1, s2] ⊆ [0,1]` via
/// `c·∫ e^{b/u − u} du`, `u = −ln s`, `b = ln c`.
fn pow_conj_window(c: f64, s1: f64, s2: f64) -> f64 {
    debug_assert!(s1 <= s2);
    if s2 <= 0.0 || s1 >= s2 {
        return 0.0;
    }
    let s1 = s1.max(0.0);
    let b = c.ln();
    let u_lo = -s2.ln(); // smaller u (s near 1)
    let u_hi = if s1 == 0.0 { f64::INFINITY } else { -s1.ln() };
    c * exp_ratio_kernel(b, u_lo.max(0.0), u_hi)
}

/// `K(b; u_lo, u_hi) = ∫_{u_lo}^{u_hi} e^{b/u − u} du` for `0 ≤ u_lo ≤ u_hi`.
///
/// The integrand has no elementary antiderivative; it is evaluated by an
/// adaptive Simpson rule on the normalized log-integrand (all function values
/// pass through one `exp`, so overflow is confined to the final scaling).
/// Diverges iff `u_lo = 0` with `b > 0`.
pub fn exp_ratio_kernel(b: f64, u_lo: f64, u_hi: f64) -> f64 {
    debug_assert!(u_lo >= 0.0 && u_hi >= u_lo);
    if u_hi == u_lo {
        return 0.0;
    }
    if b == 0.0 {
        return (-u_lo).exp() - (-u_hi).exp();
    }
    let mut lo = u_lo;
    let hi = u_hi;
    if b > 0.0 {
        if lo == 0.0 {
            return f64::INFINITY;
        }
    } else {
        // e^{b/u} vanishes beyond all f64 resolution below u = |b|/750.
        lo = lo.max(-b / 750.0);
        if lo >= hi {
            return 0.0;
        }
    }
    let phi = |u: f64| b / u - u;
    // Maximum of φ: at u* = sqrt(−b) for b < 0 (if inside), else at an endpoint.
    let mut phi_max = phi(lo).max(phi(hi));
    if b < 0.0 {
        let ustar = (-b).sqrt();
        if ustar > lo && ustar < hi {
            phi_max = phi_max.max(phi(ustar));
        }
    }
    if phi_max < -745.0 {
        return 0.0;
    }
    let normalized = integral_exp_phi(|u| phi(u) - phi_max, lo, hi.min(lo.max(1.0) + 1500.0));
    let scale = phi_max.exp();
    if scale.is_infinite() {
        return f64::INFINITY;
    }
    scale * normalized
}

/// Adaptive Simpson for `∫ e^{φ(u)} du` with `φ ≤ 0` after normalization.
fn integral_exp_phi(phi: impl Fn(f64) -> f64 + Copy, lo: f64, hi: f64) -> f64 {
    fn simpson(a: f64, b: f64, fa: f64, fm: f64, fb: f64) -> f64 {
        (b - a) / 6.0 * (fa + 4.0 * fm + fb)
    }
    fn rec(
        f: impl Fn(f64) -> f64 + Copy,
        a: f64,
        b: f64,
        fa: f64,
        fm: f64,
        fb: f64,
        whole: f64,
        tol: f64,
        depth: u32,
    ) -> f64 {
        let m = 0.5 * (a + b);
        let flm = f(0.5 * (a + m));
        let frm = f(0.5 * (m + b));
        let left = simpson(a, m, fa, flm, fm);
        let right = simpson(m, b, fm, frm, fb);
        if depth == 0 || (left + right - whole).abs() <= 15.0 * tol {
            return left + right + (left + right - whole) / 15.0;
        }
        rec(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)
            + rec(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
    }
    if hi <= lo {
        return 0.0;
    }
    let g = move |u: f64| phi(u).exp();
    // Seed with a few panels so narrow boundary layers are not missed.
    let panels = 16usize;
    let w = (hi - lo) / panels as f64;
    let mut total = 0.0;
    let tol = 1e-13 * (hi - lo).max(1.0);
    for i in 0..panels {
        let a = lo + i as f64 * w;
        let b = a + w;
        let (fa, fm, fb) = (g(a), g(0.5 * (a + b)), g(b));
        let whole = simpson(a, b, fa, fm, fb);
        total += rec(g, a, b, fa, fm, fb, whole, tol / panels as f64, 48);
    }
    total
}

/// `|{t ∈ [lo,hi) : |piece(t)| > α}|` in closed form.
fn piece_level_measure(p: &Piece, alpha: f64) -> f64 {
    let (lo, hi) = (p.lo, p.hi);
    match p.kind {
        PieceKind::Const(v) => {
            if v.abs() > alpha {
                hi - lo
            } else {
                0.0
            }
        }
        // Values of the log kinds are positive on valid windows.
        PieceKind::Log { shift } => {
            // ln(e/(t−d)) > α ⟺ t < d + e^{1−α}
            let cut = shift + (1.0 - alpha).exp();
            (cut.min(hi) - lo).max(0.0)
        }
        PieceKind::LogRev { shift } => {
            let cut = shift - (1.0 - alpha).exp();
            (hi - cut.max(lo)).max(0.0)
        }
        PieceKind::ConjLog { shift } => {
            if alpha <= 1.0 {
                return hi - lo; // conjugated values exceed 1 everywhere
            }
            // w/(w−1) > α ⟺ w < α/(α−1) ⟺ t > d + e^{1−conj(α)}
            let cut = shift + (1.0 - holder_conjugate_value(alpha)).exp();
            (hi - cut.max(lo)).max(0.0)
        }
        PieceKind::ConjLogRev { shift } => {
            if alpha <= 1.0 {
                return hi - lo;
            }
            let cut = shift - (1.0 - holder_conjugate_value(alpha)).exp();
            (cut.min(hi) - lo).max(0.0)
        }
    }
}
