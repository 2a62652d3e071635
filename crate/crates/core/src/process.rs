//! Sequential marked empirical process of residuals.
//!
//! ```text
//! T̂_n(s, z) = n^{-1/2} Σ_{i ≤ ⌊ns⌋} Û_i ω(X_i) 1{X_i ≤ z}
//! ```
//!
//! The process is a step function: it only changes at `s = i/n` and, for
//! `d = 1`, at the observed covariates `z = X_k`. The lattice used here has
//! rows `i = 1..n` and one column per observation, plus the unmarked CUSUM
//! margin `T̂_n(s, ∞)`. For `d = 1` the columns are sorted ascending; for
//! `d > 1` they follow the observation order and `≤` is componentwise.
//!
//! Row 0 (`s < 1/n`) is identically zero and is not stored.

use crate::error::{Error, Result};
use crate::regression::FitState;
use crate::scalar::Scalar;

/// Largest sample size for which the full `n × n` lattice is stored.
pub const MAX_MATERIALIZED_N: usize = 4096;

/// The process evaluated on its jump lattice.
#[derive(Clone, Debug, PartialEq)]
pub struct ProcessGrid<T> {
    n: usize,
    z_order: Vec<usize>,
    values: Vec<T>,
    margin: Vec<T>,
}

impl<T: Scalar> ProcessGrid<T> {
    pub fn n(&self) -> usize {
        self.n
    }

    /// Observation index behind each column.
    pub fn z_order(&self) -> &[usize] {
        &self.z_order
    }

    /// `T̂_n(i/n, z_k)` for `i = 1..=n`, `k = 0..n`.
    #[inline]
    pub fn value(&self, i: usize, k: usize) -> T {
        debug_assert!(i >= 1 && i <= self.n);
        self.values[(i - 1) * self.n + k]
    }

    /// Row `i` (`s = i/n`), `i = 1..=n`.
    pub fn row(&self, i: usize) -> &[T] {
        &self.values[(i - 1) * self.n..i * self.n]
    }

    /// `T̂_n(i/n, ∞)` for `i = 1..=n`.
    pub fn margin(&self) -> &[T] {
        &self.margin
    }

    /// Grid built from explicit values; used for hand-made fixtures.
    pub fn from_values(
        n: usize,
        z_order: Vec<usize>,
        values: Vec<T>,
        margin: Vec<T>,
    ) -> Result<Self> {
        if z_order.len() != n || values.len() != n * n || margin.len() != n {
            return Err(Error::Contract(
                "grid components have inconsistent sizes".into(),
            ));
        }
        Ok(Self {
            n,
            z_order,
            values,
            margin,
        })
    }

    /// Multiplies every cell by `c`.
    pub fn scaled(&self, c: T) -> Self {
        Self {
            n: self.n,
            z_order: self.z_order.clone(),
            values: self.values.iter().map(|&v| v * c).collect(),
            margin: self.margin.iter().map(|&v| v * c).collect(),
        }
    }

    /// Summaries of the stored lattice. `variance` holds `σ̂²` per
    /// observation (not per column) and enables the variance-weighted
    /// averages.
    pub fn functionals(&self, variance: Option<&[T]>) -> Functionals<T> {
        let n = self.n;
        let weights: Option<Vec<T>> =
            variance.map(|v| self.z_order.iter().map(|&j| v[j]).collect());
        let mut acc = FunctionalAccumulator::new(n, weights);
        for i in 1..=n {
            acc.push_row(self.row(i), self.margin[i - 1]);
        }
        acc.finish()
    }

    /// Suprema of `|T̂_n|` over the requested part of the lattice.
    pub fn sup_abs(&self, over: SupOver) -> SupValue<T> {
        let f = self.functionals(None);
        match over {
            SupOver::Full => SupValue::Scalar(f.sup_full()),
            SupOver::Margin => SupValue::Scalar(f.sup_margin()),
            SupOver::PerS => SupValue::Vector(f.per_s_sup.clone()),
            SupOver::PerZ => SupValue::Vector(f.per_z_sup.clone()),
        }
    }
}

/// Region of the lattice a supremum is taken over.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SupOver {
    /// All `(s, z)` cells including the margin column.
    Full,
    /// The margin `z = ∞` only (classic CUSUM).
    Margin,
    /// `sup_z` for each `s = i/n`, margin included.
    PerS,
    /// `sup_s` for each observed column (margin excluded).
    PerZ,
}

#[derive(Clone, Debug, PartialEq)]
pub enum SupValue<T> {
    Scalar(T),
    Vector(Vec<T>),
}

impl<T: Copy> SupValue<T> {
    pub fn scalar(&self) -> Option<T> {
        match self {
            SupValue::Scalar(v) => Some(*v),
            SupValue::Vector(_) => None,
        }
    }

    pub fn vector(&self) -> Option<&[T]> {
        match self {
            SupValue::Vector(v) => Some(v),
            SupValue::Scalar(_) => None,
        }
    }
}

/// Every lattice summary the test statistics need.
///
/// s-integrals are exact for the step function: `∫₀¹ g(s) ds` with
/// `g = V[i]` on `[i/n, (i+1)/n)` equals `n⁻¹ Σ_{i=0}^{n-1} V[i]`, and
/// `V[0] = 0`.
#[derive(Clone, Debug, PartialEq)]
pub struct Functionals<T> {
    pub n: usize,
    /// `sup_z |T̂_n(i/n, z)|`, margin included, `i = 1..=n`.
    pub per_s_sup: Vec<T>,
    /// `sup_s |T̂_n(s, z_k)|` per column.
    pub per_z_sup: Vec<T>,
    /// `T̂_n(i/n, ∞)`, `i = 1..=n`.
    pub margin: Vec<T>,
    /// `∫₀¹ T̂_n(s, z_k)² ds` per column.
    pub column_integrals: Vec<T>,
    /// `∫₀¹ T̂_n(s, ∞)² ds`.
    pub margin_integral: T,
    /// `n⁻¹ Σ_k T̂_n(i/n, X_k)² σ̂²(X_k)` per row, when variances were given.
    pub weighted_row_means: Option<Vec<T>>,
}

impl<T: Scalar> Functionals<T> {
    pub fn sup_full(&self) -> T {
        self.per_s_sup.iter().copied().fold(T::zero(), T::max)
    }

    pub fn sup_margin(&self) -> T {
        self.margin.iter().fold(T::zero(), |m, v| m.max(v.abs()))
    }
}

struct FunctionalAccumulator<T> {
    n: usize,
    inv_n: T,
    weights: Option<Vec<T>>,
    rows_seen: usize,
    per_s_sup: Vec<T>,
    per_z_sup: Vec<T>,
    margin: Vec<T>,
    col_sq: Vec<T>,
    margin_sq: T,
    weighted: Option<Vec<T>>,
}

impl<T: Scalar> FunctionalAccumulator<T> {
    fn new(n: usize, weights: Option<Vec<T>>) -> Self {
        let weighted = weights.as_ref().map(|_| Vec::with_capacity(n));
        Self {
            n,
            inv_n: T::from_count(n).recip(),
            weights,
            rows_seen: 0,
            per_s_sup: Vec::with_capacity(n),
            per_z_sup: vec![T::zero(); n],
            margin: Vec::with_capacity(n),
            col_sq: vec![T::zero(); n],
            margin_sq: T::zero(),
            weighted,
        }
    }

    fn push_row(&mut self, row: &[T], margin: T) {
        self.rows_seen += 1;
        let last = self.rows_seen == self.n;
        let mut row_sup = margin.abs();
        for (k, &v) in row.iter().enumerate() {
            let a = v.abs();
            row_sup = row_sup.max(a);
            self.per_z_sup[k] = self.per_z_sup[k].max(a);
            if !last {
                self.col_sq[k] = self.col_sq[k] + v * v;
            }
        }
        self.per_s_sup.push(row_sup);
        self.margin.push(margin);
        if !last {
            self.margin_sq = self.margin_sq + margin * margin;
        }
        if let (Some(w), Some(out)) = (self.weights.as_ref(), self.weighted.as_mut()) {
            let s: T = row.iter().zip(w).map(|(&v, &wk)| v * v * wk).sum();
            out.push(s * self.inv_n);
        }
    }

    fn finish(self) -> Functionals<T> {
        let inv_n = self.inv_n;
        Functionals {
            n: self.n,
            per_s_sup: self.per_s_sup,
            per_z_sup: self.per_z_sup,
            margin: self.margin,
            column_integrals: self.col_sq.into_iter().map(|v| v * inv_n).collect(),
            margin_integral: self.margin_sq * inv_n,
            weighted_row_means: self.weighted,
        }
    }
}

/// Column layout of the lattice and the per-observation increments.
struct Layout<T> {
    z_order: Vec<usize>,
    /// `n^{-1/2} Û_i ω(X_i)`, zero at degenerate points.
    increments: Vec<T>,
    /// d = 1: first sorted column with `z ≥ X_i`.
    suffix_start: Option<Vec<usize>>,
}

fn layout<T: Scalar>(fit: &FitState<T>) -> Layout<T> {
    layout_from(fit, fit.residuals())
}

fn layout_from<T: Scalar>(fit: &FitState<T>, residuals: &[T]) -> Layout<T> {
    let n = fit.n();
    let sample = fit.sample();
    let scale = T::from_count(n).sqrt().recip();
    let weights = fit.point_weights();
    let increments = residuals
        .iter()
        .zip(&weights)
        .map(|(&u, &w)| u * w * scale)
        .collect();
    if fit.d() == 1 {
        let xs = sample.x();
        let mut z_order: Vec<usize> = (0..n).collect();
        z_order.sort_by(|&a, &b| {
            xs[a]
                .partial_cmp(&xs[b])
                .expect("finite covariates")
                .then(a.cmp(&b))
        });
        let sorted: Vec<T> = z_order.iter().map(|&j| xs[j]).collect();
        let suffix_start = xs
            .iter()
            .map(|&x| sorted.partition_point(|&z| z < x))
            .collect();
        Layout {
            z_order,
            increments,
            suffix_start: Some(suffix_start),
        }
    } else {
        Layout {
            z_order: (0..n).collect(),
            increments,
            suffix_start: None,
        }
    }
}

#[inline]
fn dominated<T: Scalar>(x: &[T], z: &[T]) -> bool {
    x.iter().zip(z).all(|(a, b)| *a <= *b)
}

/// Walks the lattice row by row, calling `visit(i, row, margin)` for
/// `i = 1..=n` while holding only one row in memory.
fn sweep<T: Scalar, F: FnMut(usize, &[T], T)>(fit: &FitState<T>, lay: &Layout<T>, mut visit: F) {
    let n = fit.n();
    let sample = fit.sample();
    let mut row = vec![T::zero(); n];
    let mut margin = T::zero();
    for i in 0..n {
        let c = lay.increments[i];
        if c != T::zero() {
            match &lay.suffix_start {
                Some(starts) => {
                    for v in &mut row[starts[i]..] {
                        *v = *v + c;
                    }
                }
                None => {
                    let xi = sample.row(i);
                    for (v, &j) in row.iter_mut().zip(&lay.z_order) {
                        if dominated(xi, sample.row(j)) {
                            *v = *v + c;
                        }
                    }
                }
            }
            margin = margin + c;
        }
        visit(i + 1, &row, margin);
    }
}

/// Builds the full lattice with the prefix-sum recurrence
/// `V[i][k] = V[i-1][k] + n^{-1/2} Û_i ω(X_i) 1{X_i ≤ z_k}`.
pub fn build_grid<T: Scalar>(fit: &FitState<T>) -> Result<ProcessGrid<T>> {
    let n = fit.n();
    if n > MAX_MATERIALIZED_N {
        return Err(Error::Contract(format!(
            "lattice for n = {n} exceeds the materialization limit {MAX_MATERIALIZED_N}; use streaming functionals"
        )));
    }
    let lay = layout(fit);
    let mut values = Vec::with_capacity(n * n);
    let mut margin = Vec::with_capacity(n);
    sweep(fit, &lay, |_, row, m| {
        values.extend_from_slice(row);
        margin.push(m);
    });
    Ok(ProcessGrid {
        n,
        z_order: lay.z_order,
        values,
        margin,
    })
}

/// Literal triple-loop evaluation of the defining sum at every lattice
/// cell; no incremental updates. Cost `O(n³ d)`.
pub fn brute_force_grid<T: Scalar>(fit: &FitState<T>) -> ProcessGrid<T> {
    let n = fit.n();
    let sample = fit.sample();
    let weights = fit.point_weights();
    let residuals = fit.residuals();
    let root_n = T::from_count(n).sqrt();
    let z_order = layout(fit).z_order;
    let mut values = Vec::with_capacity(n * n);
    let mut margin = Vec::with_capacity(n);
    for i in 1..=n {
        for &zk in &z_order {
            let z = sample.row(zk);
            let mut total = T::zero();
            for j in 0..i {
                if dominated(sample.row(j), z) {
                    total = total + residuals[j] * weights[j];
                }
            }
            values.push(total / root_n);
        }
        let mut total = T::zero();
        for j in 0..i {
            total = total + residuals[j] * weights[j];
        }
        margin.push(total / root_n);
    }
    ProcessGrid {
        n,
        z_order,
        values,
        margin,
    }
}

/// Lattice summaries computed in one streaming pass without storing the
/// grid. `variance` is `σ̂²` per observation.
pub fn streaming_functionals<T: Scalar>(
    fit: &FitState<T>,
    variance: Option<&[T]>,
) -> Functionals<T> {
    streaming_functionals_for(fit, fit.residuals(), variance)
}

/// As [`streaming_functionals`] but with residuals supplied separately
/// (bootstrap refits reuse the original covariates and weights).
pub fn streaming_functionals_for<T: Scalar>(
    fit: &FitState<T>,
    residuals: &[T],
    variance: Option<&[T]>,
) -> Functionals<T> {
    let lay = layout_from(fit, residuals);
    let weights = variance.map(|v| lay.z_order.iter().map(|&j| v[j]).collect());
    let mut acc = FunctionalAccumulator::new(fit.n(), weights);
    sweep(fit, &lay, |_, row, m| acc.push_row(row, m));
    acc.finish()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::KernelSpec;
    use crate::regression::{FitState, Sample, WeightWindow};

    fn hand_fit(x: Vec<f64>, d: usize, residuals: Vec<f64>) -> FitState<f64> {
        let n = residuals.len();
        let sample = Sample::new(x, d, residuals.clone()).unwrap();
        FitState::from_parts(
            sample,
            KernelSpec::epanechnikov4(d).unwrap(),
            1.0,
            vec![0.0; n],
            WeightWindow::Everywhere,
            vec![false; n],
        )
        .unwrap()
    }

    fn assert_close(a: &ProcessGrid<f64>, b: &ProcessGrid<f64>) {
        assert_eq!(a.z_order(), b.z_order());
        for (x, y) in a
            .values
            .iter()
            .zip(&b.values)
            .chain(a.margin().iter().zip(b.margin()))
        {
            assert!((x - y).abs() < 1e-14, "{x} vs {y}");
        }
    }

    #[test]
    fn two_point_hand_case() {
        let fit = hand_fit(vec![0.5, 0.2], 1, vec![1.0, -1.0]);
        let g = build_grid(&fit).unwrap();
        // columns sorted: z = 0.2 (obs 1), z = 0.5 (obs 0)
        assert_eq!(g.z_order(), &[1, 0]);
        let r = std::f64::consts::FRAC_1_SQRT_2;
        assert!((g.value(1, 1) - r).abs() < 1e-15);
        assert!(g.value(1, 0).abs() < 1e-15);
        assert!((g.value(2, 0) + r).abs() < 1e-15);
        assert!(g.value(2, 1).abs() < 1e-15);
        assert!((g.margin()[0] - r).abs() < 1e-15);
        assert!(g.margin()[1].abs() < 1e-15);
        assert_close(&g, &brute_force_grid(&fit));
        assert!((g.sup_abs(SupOver::Full).scalar().unwrap() - r).abs() < 1e-15);
    }

    #[test]
    fn zero_residuals_give_zero_grid() {
        let fit = hand_fit(vec![0.3, 0.1, 0.7], 1, vec![0.0; 3]);
        let g = build_grid(&fit).unwrap();
        assert!(g.values.iter().all(|&v| v == 0.0));
        assert!(g.margin().iter().all(|&v| v == 0.0));
        assert_eq!(g.sup_abs(SupOver::Full).scalar(), Some(0.0));
        assert_eq!(brute_force_grid(&fit), g);
    }

    #[test]
    fn recurrence_holds_cell_by_cell_in_two_dimensions() {
        let x = vec![0.1, 0.9, 0.5, 0.4, 0.8, 0.2, 0.3, 0.3];
        let u = vec![1.0, -0.5, 0.25, 2.0];
        let fit = hand_fit(x, 2, u.clone());
        let g = build_grid(&fit).unwrap();
        let s = fit.sample();
        for i in 2..=4 {
            for (k, &zk) in g.z_order().iter().enumerate() {
                let inc = if s.row(i - 1).iter().zip(s.row(zk)).all(|(a, b)| a <= b) {
                    u[i - 1] / 2.0
                } else {
                    0.0
                };
                assert!((g.value(i, k) - g.value(i - 1, k) - inc).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn streaming_matches_materialized() {
        let x = vec![0.3, -1.0, 2.0, 0.7, 0.7, -0.2];
        let u = vec![0.5, -1.5, 0.25, 1.0, -0.75, 0.1];
        let fit = hand_fit(x, 1, u);
        let var = vec![1.0, 2.0, 0.5, 1.5, 0.1, 3.0];
        let a = build_grid(&fit).unwrap().functionals(Some(&var));
        let b = streaming_functionals(&fit, Some(&var));
        assert_eq!(a, b);
    }

    #[test]
    fn tied_covariates_share_column_values() {
        let fit = hand_fit(vec![1.0, 1.0, 0.0], 1, vec![1.0, 2.0, 4.0]);
        let g = build_grid(&fit).unwrap();
        for i in 1..=3 {
            assert_eq!(g.value(i, 1), g.value(i, 2));
        }
        assert_close(&g, &brute_force_grid(&fit));
    }
}
