//! Measure-preserving transformations.
//!
//! Two families live here: [`DigitInterleave`], the Morton / Z-order map
//! `ρ : [0,1]^n → [0,1]` that round-robins binary digits of the coordinates
//! (exact on a fixed-depth dyadic grid), and [`PiecewiseMap`], an interval
//! exchange given by finitely many affine pieces of slope `±1`. Transport
//! maps between a function and its decreasing rearrangement are built from
//! the rearrangement links of [`crate::piecewise`].

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::piecewise::{Piecewise1D, PiecewiseError, Rearrangement};

#[derive(Debug, Error)]
pub enum MapError {
    #[error("dimension {dim} with depth {depth} exceeds the 62-bit interleave budget")]
    DepthBudget { dim: usize, depth: u32 },
    #[error("interval is not dyadic at a supported depth")]
    NotDyadic,
    #[error("point has {got} coordinates, map expects {want}")]
    DimMismatch { got: usize, want: usize },
    #[error("map pieces do not tile [0,1]: gap or overlap near {at}")]
    BadPieces { at: f64 },
    #[error(transparent)]
    Piecewise(#[from] PiecewiseError),
}

/// Dyadic interval `[num·2^{−depth}, (num+1)·2^{−depth})`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct DyadicIv {
    pub num: u64,
    pub depth: u32,
}

impl DyadicIv {
    pub fn new(num: u64, depth: u32) -> Self {
        assert!(depth <= 62);
        assert!(depth == 0 && num == 0 || num < (1u64 << depth));
        DyadicIv { num, depth }
    }

    pub fn lo(&self) -> f64 {
        self.num as f64 / (1u64 << self.depth) as f64
    }

    pub fn hi(&self) -> f64 {
        (self.num + 1) as f64 / (1u64 << self.depth) as f64
    }

    pub fn len(&self) -> f64 {
        0.5f64.powi(self.depth as i32)
    }

    pub fn contains_point(&self, t: f64) -> bool {
        t >= self.lo() && t < self.hi()
    }

    /// Largest dyadic interval containing `t` with length `≤ bound`;
    /// `None` when the needed depth exceeds the 62-bit budget.
    pub fn containing(t: f64, bound: f64) -> Option<DyadicIv> {
        assert!((0.0..1.0).contains(&t) && bound > 0.0);
        let mut depth = 0u32;
        while 0.5f64.powi(depth as i32) > bound {
            depth += 1;
            if depth > 62 {
                return None;
            }
        }
        let num = (t * (1u64 << depth) as f64).floor() as u64;
        let cap = if depth == 0 { 0 } else { (1u64 << depth) - 1 };
        Some(DyadicIv { num: num.min(cap), depth })
    }

    /// Largest dyadic interval contained in `[lo, hi]` (leftmost among ties);
    /// `None` if none exists down to depth 62.
    pub fn largest_inside(lo: f64, hi: f64) -> Option<DyadicIv> {
        if hi <= lo {
            return None;
        }
        for depth in 0..=62u32 {
            let scale = (1u64 << depth) as f64;
            let num = (lo * scale).ceil() as u64;
            if ((num + 1) as f64) / scale <= hi {
                return Some(DyadicIv { num, depth });
            }
        }
        None
    }
}

/// Axis-aligned dyadic box in `[0,1]^n`; per-axis depths may differ.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct DyadicBox {
    pub axes: Vec<DyadicIv>,
}

impl DyadicBox {
    pub fn dim(&self) -> usize {
        self.axes.len()
    }

    pub fn volume(&self) -> f64 {
        self.axes.iter().map(DyadicIv::len).product()
    }

    pub fn contains_point(&self, x: &[f64]) -> bool {
        self.axes.len() == x.len() && self.axes.iter().zip(x).all(|(iv, &c)| iv.contains_point(c))
    }

    /// Whether `self` contains `other` (per-axis dyadic nesting).
    pub fn contains_box(&self, other: &DyadicBox) -> bool {
        self.axes
            .iter()
            .zip(&other.axes)
            .all(|(a, b)| b.depth >= a.depth && (b.num >> (b.depth - a.depth)) == a.num)
    }

    pub fn disjoint(&self, other: &DyadicBox) -> bool {
        self.axes.iter().zip(&other.axes).any(|(a, b)| {
            let d = a.depth.min(b.depth);
            (a.num >> (a.depth - d)) != (b.num >> (b.depth - d))
        })
    }
}

/// The digit-interleaving map `ρ` on a depth-`depth` dyadic grid:
/// `ρ(x)` has binary digits `a_{11} a_{21} … a_{n1} a_{12} …` where
/// `x_i = 0.a_{i1} a_{i2} …`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DigitInterleave {
    pub dim: usize,
    pub depth: u32,
}

impl DigitInterleave {
    pub fn new(dim: usize, depth: u32) -> Result<Self, MapError> {
        if dim == 0 || (dim as u32) * depth > 62 {
            return Err(MapError::DepthBudget { dim, depth });
        }
        Ok(DigitInterleave { dim, depth })
    }

    /// Default full-precision map for a given dimension.
    pub fn for_dim(dim: usize) -> Self {
        let depth = match dim {
            1 => 52, // keep ρ(x) exactly representable in f64 at n = 1
            d => (62 / d as u32).min(52),
        };
        DigitInterleave { dim, depth }
    }

    pub fn total_depth(&self) -> u32 {
        self.dim as u32 * self.depth
    }

    /// Snap a coordinate to the depth-`depth` grid (towards the cell that
    /// contains it).
    pub fn snap_coord(&self, x: f64) -> u64 {
        let cells = 1u64 << self.depth;
        let m = (x.clamp(0.0, 1.0) * cells as f64).floor() as u64;
        m.min(cells - 1)
    }

    /// Interleave exact per-axis mantissas into the image mantissa at depth
    /// `dim·depth`.
    pub fn interleave_mantissas(&self, m: &[u64]) -> u64 {
        debug_assert_eq!(m.len(), self.dim);
        let mut out = 0u64;
        for digit in 0..self.depth {
            let shift = self.depth - 1 - digit;
            for axis in 0..self.dim {
                out = (out << 1) | ((m[axis] >> shift) & 1);
            }
        }
        out
    }

    /// Inverse of [`Self::interleave_mantissas`].
    pub fn deinterleave_mantissa(&self, t: u64) -> Vec<u64> {
        let mut m = vec![0u64; self.dim];
        let total = self.total_depth();
        for pos in 0..total {
            let axis = (pos as usize) % self.dim;
            let bit = (t >> (total - 1 - pos)) & 1;
            m[axis] = (m[axis] << 1) | bit;
        }
        m
    }

    /// `ρ(x)` with snapping to the grid; returns the image and the snapped
    /// point so callers can record the snap.
    pub fn apply(&self, x: &[f64]) -> Result<(f64, Vec<f64>), MapError> {
        if x.len() != self.dim {
            return Err(MapError::DimMismatch { got: x.len(), want: self.dim });
        }
        let ms: Vec<u64> = x.iter().map(|&c| self.snap_coord(c)).collect();
        let t = self.interleave_mantissas(&ms);
        let scale = (1u64 << self.total_depth()) as f64;
        let snapped = ms.iter().map(|&m| m as f64 / (1u64 << self.depth) as f64).collect();
        Ok((t as f64 / scale, snapped))
    }

    /// The dyadic box `B` with `ρ(B) = I` and `volume(B) = |I|`: the first
    /// `I.depth` interleaved digits distribute round-robin over the axes.
    pub fn preimage_box(&self, iv: DyadicIv) -> Result<DyadicBox, MapError> {
        if iv.depth > self.total_depth() {
            return Err(MapError::NotDyadic);
        }
        let mut nums = vec![0u64; self.dim];
        let mut depths = vec![0u32; self.dim];
        for pos in 0..iv.depth {
            let axis = (pos as usize) % self.dim;
            let bit = (iv.num >> (iv.depth - 1 - pos)) & 1;
            nums[axis] = (nums[axis] << 1) | bit;
            depths[axis] += 1;
        }
        let axes = nums
            .into_iter()
            .zip(depths)
            .map(|(num, depth)| DyadicIv { num, depth })
            .collect();
        Ok(DyadicBox { axes })
    }

    /// Exact preimage-measure check over every dyadic interval to `depth`:
    /// the preimage of a depth-`m` interval must be a box of volume `2^{−m}`.
    pub fn verify_preserving(&self, depth: u32) -> PreservationReport {
        let mut max_discrepancy = 0.0f64;
        let mut checked = 0usize;
        for m in 1..=depth.min(self.total_depth()) {
            for num in 0..(1u64 << m) {
                let iv = DyadicIv { num, depth: m };
                let b = self.preimage_box(iv).expect("depth within budget");
                let d = (b.volume() - iv.len()).abs();
                max_discrepancy = max_discrepancy.max(d);
                checked += 1;
            }
        }
        PreservationReport { checked, max_discrepancy }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct PreservationReport {
    pub checked: usize,
    pub max_discrepancy: f64,
}

/// One affine piece of an interval exchange: `[src_lo, src_hi) → dst`,
/// order-preserving (`orient = +1`) or order-reversing (`orient = −1`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MapPiece {
    pub src_lo: f64,
    pub src_hi: f64,
    pub dst_lo: f64,
    pub dst_hi: f64,
    pub orient: i8,
}

impl MapPiece {
    pub fn src_len(&self) -> f64 {
        self.src_hi - self.src_lo
    }

    pub fn dst_len(&self) -> f64 {
        self.dst_hi - self.dst_lo
    }

    #[inline]
    pub fn forward(&self, t: f64) -> f64 {
        if self.orient >= 0 {
            (t - self.src_lo) + self.dst_lo
        } else {
            self.dst_hi - (t - self.src_lo)
        }
    }

    #[inline]
    pub fn backward(&self, u: f64) -> f64 {
        if self.orient >= 0 {
            (u - self.dst_lo) + self.src_lo
        } else {
            self.src_lo + (self.dst_hi - u)
        }
    }
}

/// Measure-preserving transformation of `[0,1]` given by affine pieces whose
/// sources and targets each tile `[0,1]` up to null sets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PiecewiseMap {
    pieces: Vec<MapPiece>,
}

impl PiecewiseMap {
    pub fn new(mut pieces: Vec<MapPiece>) -> Result<Self, MapError> {
        // Composition seams can leave null slivers at the ulp scale.
        pieces.retain(|p| p.src_hi - p.src_lo > 1e-15);
        pieces.sort_by(|a, b| a.src_lo.partial_cmp(&b.src_lo).unwrap());
        let mut cursor = 0.0f64;
        for p in &pieces {
            if (p.src_lo - cursor).abs() > 1e-9 {
                return Err(MapError::BadPieces { at: p.src_lo });
            }
            if (p.src_len() - p.dst_len()).abs() > 1e-12 + 1e-9 * p.src_len() {
                return Err(MapError::BadPieces { at: p.src_lo });
            }
            cursor = p.src_hi;
        }
        if (cursor - 1.0).abs() > 1e-9 {
            return Err(MapError::BadPieces { at: cursor });
        }
        Ok(PiecewiseMap { pieces })
    }

    pub fn identity() -> Self {
        PiecewiseMap {
            pieces: vec![MapPiece { src_lo: 0.0, src_hi: 1.0, dst_lo: 0.0, dst_hi: 1.0, orient: 1 }],
        }
    }

    pub fn pieces(&self) -> &[MapPiece] {
        &self.pieces
    }

    pub fn forward(&self, t: f64) -> f64 {
        match self.pieces.binary_search_by(|p| {
            if t < p.src_lo {
                std::cmp::Ordering::Greater
            } else if t >= p.src_hi {
                std::cmp::Ordering::Less
            } else {
                std::cmp::Ordering::Equal
            }
        }) {
            Ok(i) => self.pieces[i].forward(t),
            Err(_) => t, // off the tiling by rounding; identity fallback at endpoints
        }
    }

    /// Build the canonical transport `ζ` with `f(t) = f*(ζ(t))` a.e. from a
    /// rearrangement: sources are processed left to right, targets assigned
    /// in decreasing-value order, ties broken by source position.
    pub fn transport(r: &Rearrangement) -> Result<Self, MapError> {
        let pieces = r
            .links
            .iter()
            .map(|l| MapPiece {
                src_lo: l.src_lo,
                src_hi: l.src_hi,
                dst_lo: l.dst_lo,
                dst_hi: l.dst_hi,
                orient: l.orient,
            })
            .collect();
        PiecewiseMap::new(pieces)
    }

    /// Inverse map (targets and sources swapped).
    pub fn invert(&self) -> Self {
        let mut pieces: Vec<MapPiece> = self
            .pieces
            .iter()
            .map(|p| MapPiece {
                src_lo: p.dst_lo,
                src_hi: p.dst_hi,
                dst_lo: p.src_lo,
                dst_hi: p.src_hi,
                orient: p.orient,
            })
            .collect();
        pieces.sort_by(|a, b| a.src_lo.partial_cmp(&b.src_lo).unwrap());
        PiecewiseMap { pieces }
    }

    /// `outer ∘ inner` after common refinement of inner targets with outer
    /// sources.
    pub fn compose(outer: &PiecewiseMap, inner: &PiecewiseMap) -> Result<Self, MapError> {
        let mut cuts: Vec<f64> = Vec::new();
        for p in &outer.pieces {
            cuts.push(p.src_lo);
            cuts.push(p.src_hi);
        }
        cuts.sort_by(|a, b| a.partial_cmp(b).unwrap());
        cuts.dedup();

        let mut pieces = Vec::new();
        for ip in &inner.pieces {
            // Split the target interval of `ip` at the outer source cuts.
            let mut local: Vec<f64> = vec![ip.dst_lo, ip.dst_hi];
            for &c in &cuts {
                if c > ip.dst_lo && c < ip.dst_hi {
                    local.push(c);
                }
            }
            local.sort_by(|a, b| a.partial_cmp(b).unwrap());
            for w in local.windows(2) {
                let (d_lo, d_hi) = (w[0], w[1]);
                if d_hi <= d_lo {
                    continue;
                }
                let mid = 0.5 * (d_lo + d_hi);
                let op = outer
                    .pieces
                    .iter()
                    .find(|p| mid >= p.src_lo && mid < p.src_hi)
                    .ok_or(MapError::BadPieces { at: mid })?;
                // Pull the sub-target back to the inner source.
                let (s_lo, s_hi) = if ip.orient >= 0 {
                    (ip.backward(d_lo), ip.backward(d_hi))
                } else {
                    (ip.backward(d_hi), ip.backward(d_lo))
                };
                // Push the sub-target through the outer piece.
                let (t_lo, t_hi) = if op.orient >= 0 {
                    (op.forward(d_lo), op.forward(d_hi))
                } else {
                    (op.forward(d_hi), op.forward(d_lo))
                };
                pieces.push(MapPiece {
                    src_lo: s_lo,
                    src_hi: s_hi,
                    dst_lo: t_lo,
                    dst_hi: t_hi,
                    orient: ip.orient * op.orient,
                });
            }
        }
        PiecewiseMap::new(pieces)
    }

    /// For every dyadic interval `I` to the given depth, compare
    /// `|m⁻¹(I)| = Σ |dst_i ∩ I|` with `|I|`; returns the max discrepancy.
    pub fn verify_preserving(&self, depth: u32) -> PreservationReport {
        let mut max_discrepancy = 0.0f64;
        let mut checked = 0usize;
        for m in 1..=depth {
            for num in 0..(1u64 << m) {
                let iv = DyadicIv { num, depth: m };
                let mut mass = 0.0f64;
                for p in &self.pieces {
                    let lo = p.dst_lo.max(iv.lo());
                    let hi = p.dst_hi.min(iv.hi());
                    if hi > lo {
                        mass += hi - lo;
                    }
                }
                max_discrepancy = max_discrepancy.max((mass - iv.len()).abs());
                checked += 1;
            }
        }
        PreservationReport { checked, max_discrepancy }
    }

    /// Text format: one line per piece `src_u src_v dst_u dst_v orient`.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for p in &self.pieces {
            s.push_str(&format!(
                "{:?} {:?} {:?} {:?} {}\n",
                p.src_lo,
                p.src_hi,
                p.dst_lo,
                p.dst_hi,
                if p.orient >= 0 { "+" } else { "-" }
            ));
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self, String> {
        let mut pieces = Vec::new();
        for (ln, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let tok: Vec<&str> = line.split_whitespace().collect();
            if tok.len() != 5 {
                return Err(format!("line {}: expected `su sv du dv orient`", ln + 1));
            }
            let parse = |s: &str| s.parse::<f64>().map_err(|e| format!("line {}: {}", ln + 1, e));
            pieces.push(MapPiece {
                src_lo: parse(tok[0])?,
                src_hi: parse(tok[1])?,
                dst_lo: parse(tok[2])?,
                dst_hi: parse(tok[3])?,
                orient: if tok[4] == "-" { -1 } else { 1 },
            });
        }
        PiecewiseMap::new(pieces).map_err(|e| e.to_string())
    }
}

/// Transport map for `f`: the canonical `ζ` with `f(t) = f*(ζ(t))`.
pub fn transport(f: &Piecewise1D) -> Result<(PiecewiseMap, Rearrangement), MapError> {
    let r = f.rearrange()?;
    let m = PiecewiseMap::transport(&r)?;
    Ok((m, r))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::piecewise::{Piece, PieceKind};

    #[test]
    fn interleave_two_dim_quarter_three_quarter() {
        // (1/4, 3/4) = (0.01₂, 0.11₂) → 0.0111₂ = 7/16.
        let rho = DigitInterleave::new(2, 2).unwrap();
        let (t, snapped) = rho.apply(&[0.25, 0.75]).unwrap();
        assert_eq!(t, 7.0 / 16.0);
        assert_eq!(snapped, vec![0.25, 0.75]);
    }

    #[test]
    fn interleave_identity_at_dim_one() {
        let rho = DigitInterleave::for_dim(1);
        for &x in &[0.0, 0.124, 0.5, 0.9999] {
            let (t, _) = rho.apply(&[x]).unwrap();
            assert!((t - x).abs() <= 0.5f64.powi(52));
        }
    }

    #[test]
    fn interleave_three_dim_one_digit() {
        // (1/2, 0, 1/2) = (0.1, 0.0, 0.1) → 0.101₂ = 5/8.
        let rho = DigitInterleave::new(3, 1).unwrap();
        let (t, _) = rho.apply(&[0.5, 0.0, 0.5]).unwrap();
        assert_eq!(t, 5.0 / 8.0);
    }

    #[test]
    fn interleave_roundtrip_mantissas() {
        let rho = DigitInterleave::new(3, 7).unwrap();
        for seed in 0..200u64 {
            let m = vec![(seed * 97 + 13) % 128, (seed * 57 + 5) % 128, (seed * 31 + 40) % 128];
            let t = rho.interleave_mantissas(&m);
            assert_eq!(rho.deinterleave_mantissa(t), m);
        }
    }

    #[test]
    fn preimage_box_examples() {
        let rho = DigitInterleave::new(2, 10).unwrap();
        // I = [0, 1/4) → [0,1/2) × [0,1/2).
        let b = rho.preimage_box(DyadicIv { num: 0, depth: 2 }).unwrap();
        assert_eq!(b.axes, vec![DyadicIv { num: 0, depth: 1 }, DyadicIv { num: 0, depth: 1 }]);
        // I = [1/2, 5/8): digits 1,0,0 → x₁ ∈ [1/2, 3/4), x₂ ∈ [0, 1/2).
        let b = rho.preimage_box(DyadicIv { num: 4, depth: 3 }).unwrap();
        assert_eq!(b.axes[0], DyadicIv { num: 2, depth: 2 });
        assert_eq!(b.axes[1], DyadicIv { num: 0, depth: 1 });
        // n = 1: identity.
        let rho1 = DigitInterleave::new(1, 10).unwrap();
        let b = rho1.preimage_box(DyadicIv { num: 3, depth: 3 }).unwrap();
        assert_eq!(b.axes, vec![DyadicIv { num: 3, depth: 3 }]);
    }

    #[test]
    fn preimage_box_brute_force_oracle() {
        // Enumerate the depth-3 grid cells of [0,1]² and check ρ maps exactly
        // the preimage-box cells into each dyadic interval.
        let rho = DigitInterleave::new(2, 3).unwrap();
        for depth in 1..=3u32 {
            for num in 0..(1u64 << depth) {
                let iv = DyadicIv { num, depth };
                let b = rho.preimage_box(iv).unwrap();
                let mut hits = 0usize;
                for mx in 0..8u64 {
                    for my in 0..8u64 {
                        let t = rho.interleave_mantissas(&[mx, my]) as f64 / 64.0;
                        let inside = iv.contains_point(t);
                        let in_box = b.contains_point(&[mx as f64 / 8.0, my as f64 / 8.0]);
                        assert_eq!(inside, in_box, "cell ({mx},{my}) depth {depth} num {num}");
                        if inside {
                            hits += 1;
                        }
                    }
                }
                assert_eq!(hits as f64 / 64.0, iv.len());
            }
        }
    }

    #[test]
    fn digit_interleave_preservation_is_exact() {
        for dim in 1..=3usize {
            let rho = DigitInterleave::for_dim(dim);
            let rep = rho.verify_preserving(8);
            assert_eq!(rep.max_discrepancy, 0.0);
        }
    }

    #[test]
    fn transport_step_sort_permutation() {
        let f = Piecewise1D::step(&[0.0, 1.0 / 3.0, 2.0 / 3.0, 1.0], &[1.0, 3.0, 2.0]).unwrap();
        let (zeta, r) = transport(&f).unwrap();
        // [0,⅓)→[⅔,1), [⅓,⅔)→[0,⅓), [⅔,1)→[⅓,⅔).
        assert!((zeta.forward(0.1) - (0.1 + 2.0 / 3.0)).abs() < 1e-15);
        assert!((zeta.forward(0.4) - (0.4 - 1.0 / 3.0)).abs() < 1e-15);
        assert!((zeta.forward(0.8) - (0.8 - 1.0 / 3.0)).abs() < 1e-15);
        for &t in &[0.05, 0.35, 0.65, 0.95] {
            assert_eq!(f.eval(t), r.sorted.eval(zeta.forward(t)));
        }
    }

    #[test]
    fn transport_identity_for_nonincreasing() {
        let f = Piecewise1D::log_e_over_t();
        let (zeta, _) = transport(&f).unwrap();
        for &t in &[0.1, 0.33, 0.5, 0.99] {
            assert_eq!(zeta.forward(t), t);
        }
    }

    #[test]
    fn transport_translated_log() {
        let f = Piecewise1D::new(
            vec![Piece { lo: 0.5, hi: 1.0, kind: PieceKind::Log { shift: 0.5 } }],
            0.0,
        )
        .unwrap();
        let (zeta, r) = transport(&f).unwrap();
        for i in 0..100 {
            let t = (i as f64 + 0.5) / 100.0;
            let diff = f.eval(t) - r.sorted.eval(zeta.forward(t));
            assert_eq!(diff, 0.0, "mismatch at {t}");
        }
        // (1/2,1] translates to (0,1/2], zero half goes to the tail.
        assert!((zeta.forward(0.75) - 0.25).abs() < 1e-15);
        assert!(zeta.forward(0.25) >= 0.5);
    }

    #[test]
    fn compose_identity_laws() {
        let f = Piecewise1D::step(&[0.0, 0.25, 0.5, 1.0], &[2.0, 5.0, 1.0]).unwrap();
        let (m, _) = transport(&f).unwrap();
        let id = PiecewiseMap::identity();
        let left = PiecewiseMap::compose(&id, &m).unwrap();
        for &t in &[0.1, 0.3, 0.7] {
            assert!((left.forward(t) - m.forward(t)).abs() < 1e-15);
        }
        let inv = m.invert();
        let round = PiecewiseMap::compose(&inv, &m).unwrap();
        for &t in &[0.05, 0.2, 0.45, 0.8] {
            assert!((round.forward(t) - t).abs() < 1e-12, "t = {t}");
        }
    }

    #[test]
    fn compose_swap_halves_involution() {
        let swap = PiecewiseMap::new(vec![
            MapPiece { src_lo: 0.0, src_hi: 0.5, dst_lo: 0.5, dst_hi: 1.0, orient: 1 },
            MapPiece { src_lo: 0.5, src_hi: 1.0, dst_lo: 0.0, dst_hi: 0.5, orient: 1 },
        ])
        .unwrap();
        let double = PiecewiseMap::compose(&swap, &swap).unwrap();
        for i in 0..64 {
            let t = i as f64 / 64.0;
            assert!((double.forward(t) - t).abs() < 1e-15);
        }
        assert_eq!(swap.verify_preserving(6).max_discrepancy, 0.0);
    }

    #[test]
    fn transport_preserves_measure_sixteen_pieces() {
        // 16-piece step function on a dyadic grid: exact bookkeeping.
        let breaks: Vec<f64> = (0..=16).map(|i| i as f64 / 16.0).collect();
        let values: Vec<f64> = (0..16).map(|i| ((i * 7 + 3) % 16) as f64).collect();
        let f = Piecewise1D::step(&breaks, &values).unwrap();
        let (zeta, _) = transport(&f).unwrap();
        let rep = zeta.verify_preserving(8);
        assert_eq!(rep.max_discrepancy, 0.0);
    }

    #[test]
    fn map_text_roundtrip() {
        let swap = PiecewiseMap::new(vec![
            MapPiece { src_lo: 0.0, src_hi: 0.5, dst_lo: 0.5, dst_hi: 1.0, orient: 1 },
            MapPiece { src_lo: 0.5, src_hi: 1.0, dst_lo: 0.0, dst_hi: 0.5, orient: -1 },
        ])
        .unwrap();
        let parsed = PiecewiseMap::from_text(&swap.to_text()).unwrap();
        assert_eq!(swap, parsed);
    }

    #[test]
    fn reversed_link_transport_matches_values() {
        let f = Piecewise1D::new(
            vec![Piece { lo: 0.25, hi: 0.75, kind: PieceKind::LogRev { shift: 0.75 } }],
            0.0,
        )
        .unwrap();
        let (zeta, r) = transport(&f).unwrap();
        for i in 1..100 {
            let t = 0.25 + 0.5 * (i as f64) / 100.0;
            let lhs = f.eval(t);
            let rhs = r.sorted.eval(zeta.forward(t));
            assert!((lhs - rhs).abs() < 1e-12, "t={t}: {lhs} vs {rhs}");
        }
    }

    #[test]
    fn largest_inside_dyadic() {
        let iv = DyadicIv::largest_inside(0.5, 0.5625).unwrap();
        assert_eq!(iv, DyadicIv { num: 8, depth: 4 });
        let iv = DyadicIv::largest_inside(0.3, 0.45).unwrap();
        assert!(iv.lo() >= 0.3 && iv.hi() <= 0.45);
        assert!(iv.len() >= 0.15 / 4.0);
        assert!(DyadicIv::largest_inside(0.3, 0.3).is_none());
    }

    #[test]
    fn containing_dyadic() {
        let iv = DyadicIv::containing(0.7013, 0.125).unwrap();
        assert_eq!(iv, DyadicIv { num: 5, depth: 3 }); // [0.625, 0.75)
        let iv = DyadicIv::containing(0.3, 2.0).unwrap();
        assert_eq!(iv, DyadicIv { num: 0, depth: 0 }); // [0,1)
    }
}
