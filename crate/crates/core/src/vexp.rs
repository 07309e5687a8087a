//! Variable-exponent Lebesgue space machinery on `Ω = [0,1]^n`.
//!
//! An exponent is a 1-D profile on `[0,1]` pulled back along the digit
//! interleaving `ρ` (for `n = 1` the pullback is the identity). For a finite
//! sum of weighted dyadic-box indicators the modular
//! `∫_Ω (|f(x)|/λ)^{p(x)} dx` transfers to the line exactly: the support is
//! flattened into ρ-image intervals on which `|f|` is constant, and each
//! region integrates in closed form against the profile pieces. The
//! Luxemburg norm is the infimum `inf{λ : modular ≤ 1}`, computed by
//! bisection (the modular is nonincreasing in `λ`).

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::maps::{DigitInterleave, DyadicBox, DyadicIv, MapError};
use crate::piecewise::{Piecewise1D, PiecewiseError};

#[derive(Debug, Error)]
pub enum VexpError {
    #[error("function is not in the space: modular is infinite for every λ")]
    NotInSpace,
    #[error("box dimension {got} does not match exponent dimension {want}")]
    DimMismatch { got: usize, want: usize },
    #[error("bisection failed to bracket the norm (λ ∈ [{lo}, {hi}])")]
    Bracket { lo: f64, hi: f64 },
    #[error(transparent)]
    Piecewise(#[from] PiecewiseError),
    #[error(transparent)]
    Map(#[from] MapError),
}

/// Exponent `x ↦ profile(ρ(x))` on `[0,1]^n`; `n = 1` is the direct case.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExponentFn {
    pub profile: Piecewise1D,
    pub rho: DigitInterleave,
}

impl ExponentFn {
    pub fn direct(profile: Piecewise1D) -> Self {
        ExponentFn { profile, rho: DigitInterleave::for_dim(1) }
    }

    pub fn pullback(profile: Piecewise1D, rho: DigitInterleave) -> Self {
        ExponentFn { profile, rho }
    }

    pub fn dim(&self) -> usize {
        self.rho.dim
    }

    /// Evaluate at a point of `Ω` (snapped to the ρ grid).
    pub fn eval_point(&self, x: &[f64]) -> Result<f64, VexpError> {
        let (t, _) = self.rho.apply(x)?;
        Ok(self.profile.eval(t))
    }

    /// Pointwise Hölder conjugate; the flag reports pieces where the value 1
    /// conjugates to `+∞` on positive measure.
    pub fn conjugate(&self) -> (ExponentFn, bool) {
        let (profile, flag) = self.profile.conjugate();
        (ExponentFn { profile, rho: self.rho }, flag)
    }
}

/// Finite weighted sum of dyadic-box indicators `Σ wᵢ·χ_{Bᵢ}`; boxes may
/// overlap (values add).
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct BoxSum {
    pub terms: Vec<(DyadicBox, f64)>,
}

impl BoxSum {
    pub fn new(terms: Vec<(DyadicBox, f64)>) -> Self {
        BoxSum { terms }
    }

    pub fn zero() -> Self {
        BoxSum { terms: Vec::new() }
    }

    pub fn dim(&self) -> Option<usize> {
        self.terms.first().map(|(b, _)| b.dim())
    }

    pub fn is_zero(&self) -> bool {
        self.terms.iter().all(|&(_, w)| w == 0.0)
    }

    pub fn scale(&self, a: f64) -> BoxSum {
        BoxSum { terms: self.terms.iter().map(|(b, w)| (b.clone(), w * a)).collect() }
    }

    /// Value at a point (sum over containing boxes).
    pub fn eval_point(&self, x: &[f64]) -> f64 {
        self.terms
            .iter()
            .filter(|(b, _)| b.contains_point(x))
            .map(|&(_, w)| w)
            .sum()
    }
}

/// The support of a [`BoxSum`] flattened into 1-D ρ-image intervals on which
/// the stacked value is constant.
#[derive(Debug, Clone)]
pub struct FlatRegions {
    /// `(interval, |value|)` with positive values only.
    pub cells: Vec<(DyadicIv, f64)>,
}

impl FlatRegions {
    pub fn l1(&self) -> f64 {
        self.cells.iter().map(|(iv, v)| iv.len() * v).sum()
    }

    pub fn sup(&self) -> f64 {
        self.cells.iter().map(|&(_, v)| v).fold(0.0, f64::max)
    }
}

/// Flatten a box sum along `ρ` by Morton descent: split the unit interval
/// until every term's box either contains or misses the cell's preimage.
pub fn flatten(f: &BoxSum, rho: &DigitInterleave) -> Result<FlatRegions, VexpError> {
    for (b, _) in &f.terms {
        if b.dim() != rho.dim {
            return Err(VexpError::DimMismatch { got: b.dim(), want: rho.dim });
        }
        for axis in &b.axes {
            if axis.depth > rho.depth {
                return Err(VexpError::Map(MapError::NotDyadic));
            }
        }
    }
    let mut cells = Vec::new();
    let active: Vec<usize> = (0..f.terms.len()).collect();
    descend(f, rho, DyadicIv { num: 0, depth: 0 }, &active, 0.0, &mut cells);
    cells.sort_by_key(|(iv, _)| (iv.depth, iv.num));
    Ok(FlatRegions { cells })
}

fn descend(
    f: &BoxSum,
    rho: &DigitInterleave,
    iv: DyadicIv,
    active: &[usize],
    acc: f64,
    out: &mut Vec<(DyadicIv, f64)>,
) {
    let cell = rho.preimage_box(iv).expect("descent within depth budget");
    let mut acc = acc;
    let mut pending: Vec<usize> = Vec::new();
    for &i in active {
        let (b, w) = &f.terms[i];
        if b.contains_box(&cell) {
            acc += w;
        } else if !cell.disjoint(b) {
            pending.push(i);
        }
    }
    if pending.is_empty() {
        let v = acc.abs();
        if v > 0.0 {
            out.push((iv, v));
        }
        return;
    }
    debug_assert!(iv.depth < rho.total_depth(), "descent exhausted the grid");
    let child = DyadicIv { num: iv.num << 1, depth: iv.depth + 1 };
    descend(f, rho, child, &pending, acc, out);
    let child = DyadicIv { num: (iv.num << 1) | 1, depth: iv.depth + 1 };
    descend(f, rho, child, &pending, acc, out);
}

/// `∫_Ω (|f(x)|/λ)^{p(x)} dx` computed region-by-region in closed form.
/// Divergent modulars return `+∞`.
pub fn modular(f: &BoxSum, p: &ExponentFn, lambda: f64) -> Result<f64, VexpError> {
    assert!(lambda > 0.0, "modular requires λ > 0");
    let flat = flatten(f, &p.rho)?;
    modular_flat(&flat, p, lambda)
}

fn modular_flat(flat: &FlatRegions, p: &ExponentFn, lambda: f64) -> Result<f64, VexpError> {
    let mut total = 0.0f64;
    for (iv, v) in &flat.cells {
        let c = v / lambda;
        let part = p.profile.pow_integral(c, iv.lo(), iv.hi())?;
        total += part;
        if total.is_infinite() {
            return Ok(f64::INFINITY);
        }
    }
    Ok(total)
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct NormResult {
    pub value: f64,
    pub modular_at_value: f64,
    pub iterations: u32,
}

/// Luxemburg norm `inf{λ > 0 : modular(f, p, λ) ≤ 1}` by bisection.
pub fn norm(f: &BoxSum, p: &ExponentFn, tol: f64) -> Result<NormResult, VexpError> {
    assert!(tol > 0.0);
    let flat = flatten(f, &p.rho)?;
    if flat.cells.is_empty() {
        return Ok(NormResult { value: 0.0, modular_at_value: 0.0, iterations: 0 });
    }
    let l1 = flat.l1();
    let sup = flat.sup();

    // On a probability space with p ≥ 1, ‖f‖₁/2 ≤ ‖f‖_{p(·)} ≤ 2‖f‖_∞;
    // the brackets start there and expand defensively.
    let mut hi = 2.0 * sup;
    let mut expand = 0;
    while modular_flat(&flat, p, hi)? > 1.0 {
        hi *= 2.0;
        expand += 1;
        if expand > 80 {
            return Err(VexpError::NotInSpace);
        }
    }
    let mut lo = (l1 / 4.0).min(hi / 2.0);
    while modular_flat(&flat, p, lo)? <= 1.0 {
        lo /= 2.0;
        expand += 1;
        if lo < 1e-300 || expand > 200 {
            // Modular stays ≤ 1 down to zero: the norm is 0 only for the
            // zero function, otherwise the infimum is this tiny bracket.
            return Ok(NormResult { value: lo, modular_at_value: 0.0, iterations: expand });
        }
    }

    let mut iterations = 0u32;
    while hi - lo > tol * hi && iterations < 400 {
        let mid = 0.5 * (hi + lo);
        if modular_flat(&flat, p, mid)? <= 1.0 {
            hi = mid;
        } else {
            lo = mid;
        }
        iterations += 1;
    }
    let m = modular_flat(&flat, p, hi)?;
    Ok(NormResult { value: hi, modular_at_value: m, iterations })
}

/// Closed-form `L^{p₀}` norm of a box sum for constant exponent `p₀`
/// (independent oracle for the bisection path).
pub fn lp_norm_constant(f: &BoxSum, rho: &DigitInterleave, p0: f64) -> Result<f64, VexpError> {
    let flat = flatten(f, rho)?;
    let s: f64 = flat.cells.iter().map(|(iv, v)| v.powf(p0) * iv.len()).sum();
    Ok(s.powf(1.0 / p0))
}

/// `‖f‖₁ = ∫ |f|` for a box sum (exact dyadic sums).
pub fn l1_norm(f: &BoxSum, rho: &DigitInterleave) -> Result<f64, VexpError> {
    Ok(flatten(f, rho)?.l1())
}

/// `‖f‖_∞` (max stacked value).
pub fn sup_norm(f: &BoxSum, rho: &DigitInterleave) -> Result<f64, VexpError> {
    Ok(flatten(f, rho)?.sup())
}

/// One row of the rectangle-indicator lower-bound report.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BoxNormRow {
    pub corner: Vec<f64>,
    pub depths: Vec<u32>,
    pub norm: f64,
    pub bound: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CharLowerBoundReport {
    pub bound: f64,
    pub min_norm: f64,
    pub min_box: Option<BoxNormRow>,
    pub boxes_checked: usize,
    pub violations: usize,
    pub rows: Vec<BoxNormRow>,
}

impl CharLowerBoundReport {
    pub fn pass(&self) -> bool {
        self.violations == 0
    }

    /// CSV rows `box, depth, norm, bound, pass`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("box,depth,norm,bound,pass\n");
        for r in &self.rows {
            let corner: Vec<String> = r.corner.iter().map(|c| format!("{c}")).collect();
            let depths: Vec<String> = r.depths.iter().map(|d| format!("{d}")).collect();
            s.push_str(&format!(
                "{},{},{},{},{}\n",
                corner.join("|"),
                depths.join("|"),
                r.norm,
                r.bound,
                r.pass
            ));
        }
        s
    }
}

/// Enumerate every dyadic box with per-axis depth ≤ `max_depth`, compute
/// `‖χ_I‖_{p}` and compare with `1/c`. `collect_rows` keeps per-box rows
/// (the summary fields are always filled).
pub fn char_lower_bound(
    p: &ExponentFn,
    max_depth: u32,
    c: f64,
    tol: f64,
    collect_rows: bool,
) -> Result<CharLowerBoundReport, VexpError> {
    let dim = p.rho.dim;
    let bound = 1.0 / c;
    let mut depths = vec![0u32; dim];
    let mut rows = Vec::new();
    let mut min_norm = f64::INFINITY;
    let mut min_box: Option<BoxNormRow> = None;
    let mut boxes_checked = 0usize;
    let mut violations = 0usize;

    loop {
        // All corner choices for this depth vector.
        let mut nums = vec![0u64; dim];
        loop {
            let axes: Vec<DyadicIv> =
                nums.iter().zip(&depths).map(|(&num, &depth)| DyadicIv { num, depth }).collect();
            let b = DyadicBox { axes };
            let f = BoxSum::new(vec![(b.clone(), 1.0)]);
            let n = norm(&f, p, tol)?;
            boxes_checked += 1;
            let pass = n.value > bound;
            if !pass {
                violations += 1;
            }
            let row = BoxNormRow {
                corner: b.axes.iter().map(DyadicIv::lo).collect(),
                depths: b.axes.iter().map(|iv| iv.depth).collect(),
                norm: n.value,
                bound,
                pass,
            };
            if n.value < min_norm {
                min_norm = n.value;
                min_box = Some(row.clone());
            }
            if collect_rows {
                rows.push(row);
            }
            // Advance the corner odometer.
            let mut axis = 0;
            loop {
                if axis == dim {
                    break;
                }
                nums[axis] += 1;
                if nums[axis] < (1u64 << depths[axis]) {
                    break;
                }
                nums[axis] = 0;
                axis += 1;
            }
            if axis == dim {
                break;
            }
        }
        // Advance the depth odometer.
        let mut axis = 0;
        loop {
            if axis == dim {
                break;
            }
            depths[axis] += 1;
            if depths[axis] <= max_depth {
                break;
            }
            depths[axis] = 0;
            axis += 1;
        }
        if axis == dim {
            break;
        }
    }

    Ok(CharLowerBoundReport { bound, min_norm, min_box, boxes_checked, violations, rows })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::piecewise::{Piece, PieceKind};

    fn unit_box(dim: usize) -> DyadicBox {
        DyadicBox { axes: vec![DyadicIv { num: 0, depth: 0 }; dim] }
    }

    fn box2(x: (u64, u32), y: (u64, u32)) -> DyadicBox {
        DyadicBox { axes: vec![DyadicIv { num: x.0, depth: x.1 }, DyadicIv { num: y.0, depth: y.1 }] }
    }

    fn assert_close(a: f64, b: f64, tol: f64) {
        assert!((a - b).abs() <= tol, "{a} vs {b} (tol {tol})");
    }

    #[test]
    fn modular_indicator_constant_exponent() {
        // f = χ_{[0,1/4)}, p ≡ 2, λ = 1 → 1/4 (1-D).
        let p = ExponentFn::direct(Piecewise1D::constant(2.0));
        let f = BoxSum::new(vec![(DyadicBox { axes: vec![DyadicIv { num: 0, depth: 2 }] }, 1.0)]);
        assert_close(modular(&f, &p, 1.0).unwrap(), 0.25, 1e-15);
    }

    #[test]
    fn modular_step_exponent_of_one() {
        // f ≡ 1 on [0,1), p step [1, 2] → modular at λ = 1 is 1.
        let p = ExponentFn::direct(Piecewise1D::step(&[0.0, 0.5, 1.0], &[1.0, 2.0]).unwrap());
        let f = BoxSum::new(vec![(unit_box(1), 1.0)]);
        assert_close(modular(&f, &p, 1.0).unwrap(), 1.0, 1e-15);
    }

    #[test]
    fn modular_log_exponent_power_rule() {
        // f ≡ 2, p = ln(e/t): ∫₀¹ 2^{ln(e/t)} dt = 2/(1 − ln 2).
        let p = ExponentFn::direct(Piecewise1D::log_e_over_t());
        let f = BoxSum::new(vec![(unit_box(1), 2.0)]);
        let got = modular(&f, &p, 1.0).unwrap();
        assert_close(got, 2.0 / (1.0 - 2.0f64.ln()), 1e-12);
        assert_close(got, 6.5177827065418589, 1e-12);
    }

    #[test]
    fn norm_indicator_constant_exponent() {
        // ‖χ_E‖_{p₀} = |E|^{1/p₀}.
        let p = ExponentFn::direct(Piecewise1D::constant(2.0));
        let f = BoxSum::new(vec![(DyadicBox { axes: vec![DyadicIv { num: 0, depth: 2 }] }, 1.0)]);
        let n = norm(&f, &p, 1e-12).unwrap();
        assert_close(n.value, 0.5, 1e-10);
    }

    #[test]
    fn norm_step_exponent_quadratic_oracle() {
        // f ≡ 1, p = [1 on [0,½), 2 on [½,1)]: modular(λ) = 1/(2λ) + 1/(2λ²) = 1
        // ⟺ 2λ² − λ − 1 = 0 ⟺ λ = 1.
        let p = ExponentFn::direct(Piecewise1D::step(&[0.0, 0.5, 1.0], &[1.0, 2.0]).unwrap());
        let f = BoxSum::new(vec![(unit_box(1), 1.0)]);
        let n = norm(&f, &p, 1e-12).unwrap();
        assert_close(n.value, 1.0, 1e-10);
    }

    #[test]
    fn norm_zero_function() {
        let p = ExponentFn::direct(Piecewise1D::constant(2.0));
        let n = norm(&BoxSum::zero(), &p, 1e-10).unwrap();
        assert_eq!(n.value, 0.0);
    }

    #[test]
    fn norm_matches_constant_exponent_closed_form() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let rho = DigitInterleave::for_dim(2);
        for &p0 in &[1.5, 2.0, 3.0] {
            let p = ExponentFn::pullback(Piecewise1D::constant(p0), rho);
            for _ in 0..20 {
                let mut terms = Vec::new();
                for _ in 0..rng.gen_range(1..6) {
                    let dx = rng.gen_range(0..5u32);
                    let dy = rng.gen_range(0..5u32);
                    let b = box2((rng.gen_range(0..(1u64 << dx.max(1))) % (1 << dx).max(1), dx),
                                 (rng.gen_range(0..(1u64 << dy.max(1))) % (1 << dy).max(1), dy));
                    terms.push((b, rng.gen_range(0.1..5.0)));
                }
                let f = BoxSum::new(terms);
                let want = lp_norm_constant(&f, &rho, p0).unwrap();
                let got = norm(&f, &p, 1e-11).unwrap().value;
                assert!((got - want).abs() <= 1e-8 * want.max(1.0), "p0={p0}: {got} vs {want}");
            }
        }
    }

    #[test]
    fn norm_scaling_and_lattice() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let rho = DigitInterleave::for_dim(2);
        let profile = Piecewise1D::step(&[0.0, 0.25, 0.75, 1.0], &[1.5, 3.0, 2.0]).unwrap();
        let p = ExponentFn::pullback(profile, rho);
        let tol = 1e-10;
        for _ in 0..10 {
            let b1 = box2((rng.gen_range(0..4), 2), (rng.gen_range(0..4), 2));
            let b2 = box2((rng.gen_range(0..2), 1), (rng.gen_range(0..2), 1));
            let w1 = rng.gen_range(0.2..3.0);
            let w2 = rng.gen_range(0.2..3.0);
            let f = BoxSum::new(vec![(b1.clone(), w1), (b2.clone(), w2)]);
            let alpha: f64 = rng.gen_range(0.1..10.0);
            let nf = norm(&f, &p, tol).unwrap().value;
            let nscaled = norm(&f.scale(alpha), &p, tol).unwrap().value;
            assert!((nscaled - alpha * nf).abs() <= 2.0 * tol * nscaled.max(1.0) + 1e-9);
            // 0 ≤ f ≤ g pointwise ⇒ ‖f‖ ≤ ‖g‖ (+ slack): g = f + extra mass.
            let g = BoxSum::new(vec![(b1, w1 + 0.5), (b2, w2)]);
            let ng = norm(&g, &p, tol).unwrap().value;
            assert!(nf <= ng + 2.0 * tol + 1e-9);
        }
    }

    #[test]
    fn unit_ball_characterization() {
        let rho = DigitInterleave::for_dim(2);
        let profile = Piecewise1D::step(&[0.0, 0.5, 1.0], &[1.2, 4.0]).unwrap();
        let p = ExponentFn::pullback(profile, rho);
        let f = BoxSum::new(vec![(box2((1, 2), (2, 2)), 3.0), (box2((0, 1), (1, 1)), 0.7)]);
        let n = norm(&f, &p, 1e-11).unwrap().value;
        let m = modular(&f.scale(1.0 / n), &p, 1.0).unwrap();
        assert!(m <= 1.0 + 1e-7, "modular(f/‖f‖) = {m}");
    }

    #[test]
    fn conjugate_exponent_roundtrip() {
        let p = ExponentFn::direct(Piecewise1D::constant(3.0));
        let (q, flag) = p.conjugate();
        assert!(!flag);
        assert_close(q.profile.eval(0.4), 1.5, 1e-15);
        // p ≡ 1 flags the conjugate-infinite case.
        let p1 = ExponentFn::direct(Piecewise1D::constant(1.0));
        let (_, flag) = p1.conjugate();
        assert!(flag);
    }

    #[test]
    fn pullback_agrees_with_composition() {
        let rho = DigitInterleave::new(2, 8).unwrap();
        let profile = Piecewise1D::step(&[0.0, 0.3, 1.0], &[2.0, 5.0]).unwrap();
        let p = ExponentFn::pullback(profile.clone(), rho);
        for &(x, y) in &[(0.1, 0.7), (0.5, 0.5), (0.9, 0.2)] {
            let (t, _) = rho.apply(&[x, y]).unwrap();
            assert_eq!(p.eval_point(&[x, y]).unwrap(), profile.eval(t));
        }
    }

    #[test]
    fn modular_transfer_is_measure_preserving() {
        // ∫_Ω c^{q̄} = ∫₀¹ c^{q̃} for the pullback exponent: indicator of Ω.
        let rho = DigitInterleave::for_dim(2);
        let profile = Piecewise1D::log_e_over_t();
        let p = ExponentFn::pullback(profile.clone(), rho);
        let f = BoxSum::new(vec![(unit_box(2), 1.0)]);
        let lambda = 0.5; // c = 2
        let got = modular(&f, &p, lambda).unwrap();
        let want = profile.pow_integral(2.0, 0.0, 1.0).unwrap();
        assert_close(got, want, 1e-12);
    }

    #[test]
    fn char_lower_bound_constant_exponent_closed_form() {
        // q̄ ≡ 2: min norm over depth-d boxes is 2^{−d·n/2}; with 1/c = 0.1 the
        // scan passes iff 2^{−d·n/2} > 0.1.
        let rho = DigitInterleave::for_dim(2);
        let p = ExponentFn::pullback(Piecewise1D::constant(2.0), rho);
        let rep = char_lower_bound(&p, 2, 10.0, 1e-10, false).unwrap();
        assert_close(rep.min_norm, 0.25, 1e-8); // |I| = 2^{-4}, sqrt
        assert!(rep.pass());
        let rep = char_lower_bound(&p, 4, 10.0, 1e-10, false).unwrap();
        assert!(!rep.pass()); // 2^{-4} < 0.1
    }

    #[test]
    fn char_lower_bound_whole_domain() {
        // ‖χ_Ω‖ ≥ 1 for any p ≥ 1 (modular(χ_Ω, p, 1) = 1).
        let rho = DigitInterleave::for_dim(2);
        let p = ExponentFn::pullback(Piecewise1D::step(&[0.0, 0.5, 1.0], &[1.5, 3.0]).unwrap(), rho);
        let f = BoxSum::new(vec![(unit_box(2), 1.0)]);
        let n = norm(&f, &p, 1e-11).unwrap().value;
        assert!(n >= 1.0 - 1e-9);
        assert_close(modular(&f, &p, 1.0).unwrap(), 1.0, 1e-12);
    }

    #[test]
    fn flatten_overlapping_boxes() {
        let rho = DigitInterleave::for_dim(2);
        // Two overlapping boxes: [0,1/2)² weight 1 and [0,1/4)×[0,1/2) weight 2.
        let f = BoxSum::new(vec![(box2((0, 1), (0, 1)), 1.0), (box2((0, 2), (0, 1)), 2.0)]);
        let flat = flatten(&f, &rho).unwrap();
        assert_close(flat.l1(), 1.0 * 0.25 + 2.0 * 0.125, 1e-15);
        assert_close(flat.sup(), 3.0, 1e-15);
        // Stacked region [0,1/4)×[0,1/2) has value 3.
        assert!(flat.cells.iter().any(|&(_, v)| v == 3.0));
    }

    #[test]
    fn norm_with_conjugated_profile_kernel() {
        // Exponent with a conjugated log piece: indicator norms stay finite
        // and respect |E|^{1/pmax} ≤ ‖χ_E‖ ≤ |E|^{1/pmin} on [0,1].
        let profile = Piecewise1D::new(
            vec![Piece { lo: 0.0, hi: 0.5, kind: PieceKind::ConjLog { shift: -0.25 } }],
            2.0,
        )
        .unwrap();
        let p = ExponentFn::direct(profile.clone());
        let f = BoxSum::new(vec![(DyadicBox { axes: vec![DyadicIv { num: 0, depth: 2 }] }, 1.0)]);
        let n = norm(&f, &p, 1e-11).unwrap().value;
        let pmin = profile.eval(0.0);
        let pmax = profile.eval(0.2499);
        let e = 0.25f64;
        assert!(n <= e.powf(1.0 / pmax) + 1e-8 && n >= e.powf(1.0 / pmin) - 1e-8,
            "n = {n}, bounds [{}, {}]", e.powf(1.0 / pmin), e.powf(1.0 / pmax));
    }
}
