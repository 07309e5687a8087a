//! Uniformly bounded biorthonormal systems on `Ω = [0,1]^n` with exact
//! coefficient integrals against dyadic box sums.
//!
//! Three kinds are provided: the Walsh–Paley system (±1-valued, `A = 1`),
//! a real trigonometric product system (`A = 2^{n/2}`), and a genuinely
//! biorthonormal perturbation of Walsh–Paley (`f_n ≠ g_n` on a finite
//! block, duals from the explicit inverse of `I + αP`).
//!
//! Indices start at `n = 1` for the first nonconstant function; the
//! constant is excluded so that `∫_E f_n → 0` can hold on every fixed set.
//! Multi-indices for product systems come from the same round-robin digit
//! pairing as the interleaving map `ρ`, so index growth tracks resolution
//! growth per axis.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::maps::DyadicBox;
use crate::vexp::BoxSum;

#[derive(Debug, Error)]
pub enum SystemError {
    #[error("bad system descriptor `{0}` (expected walsh:n=…, trig:n=…, pwalsh:n=…,alpha=…,M=…)")]
    BadDescriptor(String),
    #[error("point has {got} coordinates, system expects {want}")]
    DimMismatch { got: usize, want: usize },
}

/// Which half of the biorthonormal pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Which {
    F,
    G,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum SystemKind {
    WalshPaley,
    TrigReal,
    /// Walsh–Paley with `f̃_i = w_i + α·w_{M+1−i}` on the first `block`
    /// indices and duals `g̃_i = (w_i − α·w_{M+1−i})/(1 − α²)`.
    PerturbedWalsh { alpha: f64, block: usize },
}

/// An evaluable biorthonormal system on `[0,1]^dim`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BiorthSystem {
    pub kind: SystemKind,
    pub dim: usize,
}

impl BiorthSystem {
    pub fn walsh(dim: usize) -> Self {
        BiorthSystem { kind: SystemKind::WalshPaley, dim }
    }

    pub fn trig(dim: usize) -> Self {
        BiorthSystem { kind: SystemKind::TrigReal, dim }
    }

    pub fn perturbed_walsh(dim: usize, alpha: f64, block: usize) -> Self {
        assert!(alpha.abs() < 1.0 && block >= 1);
        BiorthSystem { kind: SystemKind::PerturbedWalsh { alpha, block }, dim }
    }

    /// Parse `walsh:n=2`, `trig:n=2`, `pwalsh:n=1,alpha=0.1,M=64`.
    pub fn parse(desc: &str) -> Result<Self, SystemError> {
        let bad = || SystemError::BadDescriptor(desc.to_string());
        let (head, rest) = desc.split_once(':').ok_or_else(bad)?;
        let mut dim = None;
        let mut alpha = 0.1f64;
        let mut block = 64usize;
        for part in rest.split(',') {
            let (key, value) = part.split_once('=').ok_or_else(bad)?;
            match key.trim() {
                "n" => dim = Some(value.trim().parse::<usize>().map_err(|_| bad())?),
                "alpha" => alpha = value.trim().parse::<f64>().map_err(|_| bad())?,
                "M" => block = value.trim().parse::<usize>().map_err(|_| bad())?,
                _ => return Err(bad()),
            }
        }
        let dim = dim.ok_or_else(bad)?;
        match head.trim() {
            "walsh" => Ok(Self::walsh(dim)),
            "trig" => Ok(Self::trig(dim)),
            "pwalsh" => Ok(Self::perturbed_walsh(dim, alpha, block)),
            _ => Err(bad()),
        }
    }

    pub fn descriptor(&self) -> String {
        match self.kind {
            SystemKind::WalshPaley => format!("walsh:n={}", self.dim),
            SystemKind::TrigReal => format!("trig:n={}", self.dim),
            SystemKind::PerturbedWalsh { alpha, block } => {
                format!("pwalsh:n={},alpha={},M={}", self.dim, alpha, block)
            }
        }
    }

    /// Uniform bound `A` with `‖f_n‖_∞, ‖g_n‖_∞ ≤ A`.
    pub fn bound(&self) -> f64 {
        match self.kind {
            SystemKind::WalshPaley => 1.0,
            SystemKind::TrigReal => 2.0f64.powf(self.dim as f64 / 2.0),
            SystemKind::PerturbedWalsh { alpha, .. } => (1.0 + alpha).max(1.0 / (1.0 - alpha)),
        }
    }

    /// Split a raw index into per-axis indices by round-robin bit assignment
    /// (bit `j` of `raw` goes to axis `j mod dim`).
    fn multi_index(&self, raw: usize) -> Vec<usize> {
        let mut m = vec![0usize; self.dim];
        let mut bit = 0usize;
        let mut r = raw;
        while r > 0 {
            if r & 1 == 1 {
                m[bit % self.dim] |= 1 << (bit / self.dim);
            }
            r >>= 1;
            bit += 1;
        }
        m
    }

    /// Evaluate `f_n` or `g_n` at `x`; `n ≥ 1` indexes the nonconstant
    /// functions.
    pub fn eval(&self, n: usize, which: Which, x: &[f64]) -> Result<f64, SystemError> {
        if x.len() != self.dim {
            return Err(SystemError::DimMismatch { got: x.len(), want: self.dim });
        }
        assert!(n >= 1, "indices start at the first nonconstant function");
        Ok(match self.kind {
            SystemKind::WalshPaley => self.walsh_eval(n, x),
            SystemKind::TrigReal => self.trig_eval(n, x),
            SystemKind::PerturbedWalsh { alpha, block } => {
                if n > block {
                    self.walsh_eval(n, x)
                } else {
                    let mirror = block + 1 - n;
                    let (w, wm) = (self.walsh_eval(n, x), self.walsh_eval(mirror, x));
                    match which {
                        Which::F => w + alpha * wm,
                        Which::G => (w - alpha * wm) / (1.0 - alpha * alpha),
                    }
                }
            }
        })
    }

    fn walsh_eval(&self, raw: usize, x: &[f64]) -> f64 {
        let mi = self.multi_index(raw);
        let mut sign = 1i32;
        for (axis, &m) in mi.iter().enumerate() {
            if walsh_1d_negative(m, x[axis]) {
                sign = -sign;
            }
        }
        sign as f64
    }

    fn trig_eval(&self, raw: usize, x: &[f64]) -> f64 {
        let mi = self.multi_index(raw);
        mi.iter().enumerate().map(|(axis, &m)| trig_1d_eval(m, x[axis])).product()
    }

    /// Exact `∫_B f_n` (or `g_n`) over a dyadic box.
    pub fn box_integral(&self, n: usize, which: Which, b: &DyadicBox) -> Result<f64, SystemError> {
        if b.dim() != self.dim {
            return Err(SystemError::DimMismatch { got: b.dim(), want: self.dim });
        }
        assert!(n >= 1);
        Ok(match self.kind {
            SystemKind::WalshPaley => self.walsh_box_integral(n, b),
            SystemKind::TrigReal => self.trig_box_integral(n, b),
            SystemKind::PerturbedWalsh { alpha, block } => {
                if n > block {
                    self.walsh_box_integral(n, b)
                } else {
                    let mirror = block + 1 - n;
                    let (i, im) = (self.walsh_box_integral(n, b), self.walsh_box_integral(mirror, b));
                    match which {
                        Which::F => i + alpha * im,
                        Which::G => (i - alpha * im) / (1.0 - alpha * alpha),
                    }
                }
            }
        })
    }

    fn walsh_box_integral(&self, raw: usize, b: &DyadicBox) -> f64 {
        let mi = self.multi_index(raw);
        let mut value = 1.0f64;
        for (axis, &m) in mi.iter().enumerate() {
            let iv = b.axes[axis];
            // w_m is constant on depth-d cells iff m < 2^d; otherwise a full
            // Rademacher factor averages to zero over the cell.
            if m >= (1usize << iv.depth.min(63)) {
                return 0.0;
            }
            let sign = if walsh_1d_negative_mantissa(m, iv.num, iv.depth) { -1.0 } else { 1.0 };
            value *= sign * iv.len();
        }
        value
    }

    fn trig_box_integral(&self, raw: usize, b: &DyadicBox) -> f64 {
        let mi = self.multi_index(raw);
        let mut value = 1.0f64;
        for (axis, &m) in mi.iter().enumerate() {
            let iv = b.axes[axis];
            value *= trig_1d_integral(m, iv.lo(), iv.hi());
        }
        value
    }

    /// Exact Fourier coefficient `(F, f_n)` or `(F, g_n)` of a box sum.
    pub fn coefficient(&self, f: &BoxSum, n: usize, which: Which) -> Result<f64, SystemError> {
        let mut acc = 0.0f64;
        for (b, w) in &f.terms {
            acc += w * self.box_integral(n, which, b)?;
        }
        Ok(acc)
    }

    /// Coefficients for `n = 1..=n_max` (index 0 of the result is `n = 1`).
    pub fn coefficients(&self, f: &BoxSum, which: Which, n_max: usize) -> Result<Vec<f64>, SystemError> {
        (1..=n_max).map(|n| self.coefficient(f, n, which)).collect()
    }

    /// The combined partial-sum functional
    /// `Σ_{n≤N} ((F1,g_n)·f_n(x) + (F2,f_n)·g_n(x))`.
    pub fn partial_sum(
        &self,
        f1: &BoxSum,
        f2: &BoxSum,
        n_max: usize,
        x: &[f64],
    ) -> Result<f64, SystemError> {
        let mut acc = 0.0f64;
        for n in 1..=n_max {
            let c1 = self.coefficient(f1, n, Which::G)?;
            let c2 = self.coefficient(f2, n, Which::F)?;
            acc += c1 * self.eval(n, Which::F, x)? + c2 * self.eval(n, Which::G, x)?;
        }
        Ok(acc)
    }

    /// Max deviation `max |(f_i, g_j) − δ_{ij}|` over `i, j ≤ n_max`, by
    /// exact integration.
    pub fn gram_check(&self, n_max: usize) -> f64 {
        let mut worst = 0.0f64;
        for i in 1..=n_max {
            for j in 1..=n_max {
                let want = if i == j { 1.0 } else { 0.0 };
                let got = self.pair_inner(i, j);
                worst = worst.max((got - want).abs());
            }
        }
        worst
    }

    /// `(f_i, g_j)` by exact integration over `[0,1]^dim`.
    fn pair_inner(&self, i: usize, j: usize) -> f64 {
        match self.kind {
            SystemKind::WalshPaley => self.walsh_inner(i, j),
            SystemKind::TrigReal => {
                let a = self.multi_index(i);
                let b = self.multi_index(j);
                a.iter().zip(&b).map(|(&m, &k)| trig_1d_inner(m, k)).product()
            }
            SystemKind::PerturbedWalsh { alpha, block } => {
                let inner = |a: usize, b: usize| self.walsh_inner(a, b);
                let fi: Vec<(usize, f64)> = if i > block {
                    vec![(i, 1.0)]
                } else {
                    vec![(i, 1.0), (block + 1 - i, alpha)]
                };
                let gj: Vec<(usize, f64)> = if j > block {
                    vec![(j, 1.0)]
                } else {
                    let d = 1.0 - alpha * alpha;
                    vec![(j, 1.0 / d), (block + 1 - j, -alpha / d)]
                };
                let mut acc = 0.0;
                for &(a, wa) in &fi {
                    for &(b, wb) in &gj {
                        acc += wa * wb * inner(a, b);
                    }
                }
                acc
            }
        }
    }

    fn walsh_inner(&self, i: usize, j: usize) -> f64 {
        // w_i·w_j = w_{i⊕j}; ∫ w_m = δ_{m,0} over the cube.
        if i ^ j == 0 {
            1.0
        } else {
            0.0
        }
    }

    /// `∫_E f_n` for `n = 1..=n_max` where `E` is a finite union of disjoint
    /// dyadic boxes; returns the sequence (exact integrals).
    pub fn vanishing_check(
        &self,
        e: &[DyadicBox],
        which: Which,
        n_max: usize,
    ) -> Result<VanishingReport, SystemError> {
        let mut values = Vec::with_capacity(n_max);
        for n in 1..=n_max {
            let mut acc = 0.0;
            for b in e {
                acc += self.box_integral(n, which, b)?;
            }
            values.push(acc);
        }
        // Tail suprema: max_{n > n₀} |∫| for each n₀.
        let mut tail = vec![0.0f64; n_max];
        let mut running = 0.0f64;
        for n0 in (0..n_max).rev() {
            running = running.max(values[n0].abs());
            tail[n0] = running;
        }
        Ok(VanishingReport { values, tail_sup: tail })
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VanishingReport {
    /// `values[n-1] = ∫_E f_n`.
    pub values: Vec<f64>,
    /// `tail_sup[n0-1] = max_{n ≥ n0} |∫_E f_n|`.
    pub tail_sup: Vec<f64>,
}

impl VanishingReport {
    /// First index past which every integral is exactly zero, if any.
    pub fn exact_zero_from(&self) -> Option<usize> {
        let last_nonzero = self.values.iter().rposition(|&v| v != 0.0)?;
        Some(last_nonzero + 2)
    }

    pub fn to_csv(&self, which: Which) -> String {
        let tag = match which {
            Which::F => "f",
            Which::G => "g",
        };
        let mut s = String::from("n,which,value\n");
        for (i, v) in self.values.iter().enumerate() {
            s.push_str(&format!("{},{},{}\n", i + 1, tag, v));
        }
        s
    }
}

/// Whether `w_m(x) = −1` (1-D Walsh–Paley), evaluated right-continuously.
fn walsh_1d_negative(m: usize, x: f64) -> bool {
    // Digits to depth 52 cover every representable dyadic argument here.
    let depth = 52u32;
    let num = ((x.clamp(0.0, 1.0)) * (1u64 << depth) as f64).floor() as u64;
    let num = num.min((1u64 << depth) - 1);
    walsh_1d_negative_mantissa(m, num, depth)
}

/// Sign of `w_m` on the depth-`depth` cell with the given mantissa
/// (requires `m < 2^depth` so the sign is constant on the cell).
fn walsh_1d_negative_mantissa(m: usize, num: u64, depth: u32) -> bool {
    debug_assert!(depth == 0 && m == 0 || (m as u128) < (1u128 << depth));
    // Rademacher r_j reads fractional digit j+1, i.e. mantissa bit depth−1−j.
    let mut parity = false;
    let mut mm = m;
    let mut j = 0u32;
    while mm > 0 {
        if mm & 1 == 1 && (num >> (depth - 1 - j)) & 1 == 1 {
            parity = !parity;
        }
        mm >>= 1;
        j += 1;
    }
    parity
}

/// 1-D real trigonometric system: `e_0 = 1`, `e_{2k−1} = √2 cos(2πkx)`,
/// `e_{2k} = √2 sin(2πkx)`.
fn trig_1d_eval(m: usize, x: f64) -> f64 {
    if m == 0 {
        return 1.0;
    }
    let k = m.div_ceil(2) as f64;
    let arg = std::f64::consts::TAU * k * x;
    if m % 2 == 1 {
        std::f64::consts::SQRT_2 * arg.cos()
    } else {
        std::f64::consts::SQRT_2 * arg.sin()
    }
}

/// `∫_a^b e_m(x) dx` in closed form.
fn trig_1d_integral(m: usize, a: f64, b: f64) -> f64 {
    if m == 0 {
        return b - a;
    }
    let k = m.div_ceil(2) as f64;
    let w = std::f64::consts::TAU * k;
    if m % 2 == 1 {
        std::f64::consts::SQRT_2 * ((w * b).sin() - (w * a).sin()) / w
    } else {
        -std::f64::consts::SQRT_2 * ((w * b).cos() - (w * a).cos()) / w
    }
}

/// `∫₀¹ e_m e_k dx` in closed form (integer frequency bookkeeping; integrals
/// of `cos/sin(2πmx)` over a full period vanish exactly).
fn trig_1d_inner(m: usize, k: usize) -> f64 {
    if m == k {
        return 1.0;
    }
    if m == 0 || k == 0 {
        return 0.0; // nonconstant factors integrate to zero over [0,1]
    }
    let fm = m.div_ceil(2);
    let fk = k.div_ceil(2);
    if fm != fk {
        // Product-to-sum leaves only nonzero integer frequencies.
        return 0.0;
    }
    // Same frequency, different phase: ∫ 2·cos·sin = ∫ sin(4πfx) = 0.
    0.0
}
