//! Nadaraya-Watson regression with product kernels.
//!
//! The estimator at a point `x` is the kernel-weighted average
//! `Σ K((x - X_j)/h) Y_j / Σ K((x - X_j)/h)`. With higher-order kernels the
//! weights can be negative and the denominator can approach zero; such
//! points are flagged degenerate, their value is set to zero and they carry
//! no weight in any downstream sum.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::KernelSpec;
use crate::scalar::Scalar;

/// Relative threshold for the Nadaraya-Watson denominator, scaled by the
/// kernel peak and the sample size.
pub const DENOMINATOR_EPS: f64 = 1e-12;

/// Observed regression sample `(Y_i, X_i)`, `i = 1..n`, with `X_i ∈ R^d`.
#[derive(Clone, Debug, PartialEq)]
pub struct Sample<T> {
    x: Vec<T>,
    y: Vec<T>,
    d: usize,
    labels: Option<Vec<String>>,
}

impl<T: Scalar> Sample<T> {
    /// Builds a sample from row-major covariates (`n × d`) and responses.
    pub fn new(x: Vec<T>, d: usize, y: Vec<T>) -> Result<Self> {
        if d == 0 {
            return Err(Error::InvalidInput(
                "covariate dimension must be at least 1".into(),
            ));
        }
        if y.is_empty() {
            return Err(Error::InvalidInput("sample is empty".into()));
        }
        if x.len() != y.len() * d {
            return Err(Error::InvalidInput(format!(
                "covariate matrix has {} entries, expected {} × {}",
                x.len(),
                y.len(),
                d
            )));
        }
        if let Some(i) = x.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "non-finite covariate in row {}, column {}",
                i / d,
                i % d
            )));
        }
        if let Some(i) = y.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "non-finite response in row {i}"
            )));
        }
        Ok(Self {
            x,
            y,
            d,
            labels: None,
        })
    }

    /// Builds a one-dimensional sample.
    pub fn univariate(x: Vec<T>, y: Vec<T>) -> Result<Self> {
        Self::new(x, 1, y)
    }

    /// Lag-embeds an autoregression: row `t` has response `series[t]` and
    /// covariates `(series[t-1], …, series[t-p])`; the first `p` values only
    /// serve as initial conditions.
    pub fn lag_embed(series: &[T], p: usize) -> Result<Self> {
        if p == 0 {
            return Err(Error::InvalidInput("lag order must be at least 1".into()));
        }
        if series.len() <= p {
            return Err(Error::TooFewObservations {
                found: series.len().saturating_sub(p),
                required: 1,
            });
        }
        let n = series.len() - p;
        let mut x = Vec::with_capacity(n * p);
        let mut y = Vec::with_capacity(n);
        for t in p..series.len() {
            y.push(series[t]);
            for lag in 1..=p {
                x.push(series[t - lag]);
            }
        }
        Self::new(x, p, y)
    }

    pub fn with_labels(mut self, labels: Vec<String>) -> Result<Self> {
        if labels.len() != self.n() {
            return Err(Error::InvalidInput(format!(
                "{} labels for {} observations",
                labels.len(),
                self.n()
            )));
        }
        self.labels = Some(labels);
        Ok(self)
    }

    /// Same covariates and labels, new responses.
    pub fn with_responses(&self, y: Vec<T>) -> Result<Self> {
        if y.len() != self.n() {
            return Err(Error::Contract(format!(
                "response vector has length {}, expected {}",
                y.len(),
                self.n()
            )));
        }
        if let Some(i) = y.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "non-finite response in row {i}"
            )));
        }
        Ok(Self {
            x: self.x.clone(),
            y,
            d: self.d,
            labels: self.labels.clone(),
        })
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn y(&self) -> &[T] {
        &self.y
    }

    /// Row-major covariate matrix.
    pub fn x(&self) -> &[T] {
        &self.x
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[T] {
        &self.x[i * self.d..(i + 1) * self.d]
    }

    pub fn column(&self, j: usize) -> Vec<T> {
        (0..self.n()).map(|i| self.x[i * self.d + j]).collect()
    }

    pub fn labels(&self) -> Option<&[String]> {
        self.labels.as_deref()
    }

    /// Sample standard deviation of each covariate coordinate.
    pub fn coordinate_sd(&self) -> Vec<T> {
        let n = T::from_count(self.n());
        (0..self.d)
            .map(|j| {
                let col = self.column(j);
                let mean = col.iter().copied().sum::<T>() / n;
                let ss = col.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>();
                let denom = if self.n() > 1 { n - T::one() } else { T::one() };
                (ss / denom).sqrt()
            })
            .collect()
    }
}

/// Weight function `ω_n`, the indicator of a box in covariate space.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum WeightWindow<T> {
    Everywhere,
    Box { lower: Vec<T>, upper: Vec<T> },
}

impl<T: Scalar> WeightWindow<T> {
    /// `[-c, c]^d`.
    pub fn symmetric_box(c: T, d: usize) -> Result<Self> {
        if !(c > T::zero()) {
            return Err(Error::InvalidInput(
                "box half-width must be positive".into(),
            ));
        }
        Ok(WeightWindow::Box {
            lower: vec![-c; d],
            upper: vec![c; d],
        })
    }

    /// Box spanned by the marginal empirical `tau` and `1 - tau` quantiles.
    pub fn from_quantiles(sample: &Sample<T>, tau: f64) -> Result<Self> {
        if !(0.0..0.5).contains(&tau) {
            return Err(Error::InvalidInput(format!(
                "quantile level {tau} outside [0, 0.5)"
            )));
        }
        let mut lower = Vec::with_capacity(sample.d());
        let mut upper = Vec::with_capacity(sample.d());
        for j in 0..sample.d() {
            let mut col = sample.column(j);
            col.sort_by(|a, b| a.partial_cmp(b).expect("finite covariates"));
            lower.push(empirical_quantile(&col, tau));
            upper.push(empirical_quantile(&col, 1.0 - tau));
        }
        Ok(WeightWindow::Box { lower, upper })
    }

    #[inline]
    pub fn contains(&self, x: &[T]) -> bool {
        match self {
            WeightWindow::Everywhere => true,
            WeightWindow::Box { lower, upper } => x
                .iter()
                .zip(lower.iter().zip(upper))
                .all(|(v, (lo, hi))| *v >= *lo && *v <= *hi),
        }
    }

    #[inline]
    pub fn weight(&self, x: &[T]) -> T {
        if self.contains(x) {
            T::one()
        } else {
            T::zero()
        }
    }

    /// Converts the window to another scalar type.
    pub fn cast<U: Scalar>(&self) -> WeightWindow<U> {
        match self {
            WeightWindow::Everywhere => WeightWindow::Everywhere,
            WeightWindow::Box { lower, upper } => WeightWindow::Box {
                lower: lower.iter().map(|v| U::lit(v.as_f64())).collect(),
                upper: upper.iter().map(|v| U::lit(v.as_f64())).collect(),
            },
        }
    }
}

/// Linear-interpolation quantile of sorted data.
fn empirical_quantile<T: Scalar>(sorted: &[T], p: f64) -> T {
    let pos = p * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = T::lit(pos - lo as f64);
    sorted[lo] + (sorted[hi] - sorted[lo]) * frac
}

/// A kernel-smoother evaluation together with its degeneracy flag.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Prediction<T> {
    pub value: T,
    pub degenerate: bool,
}

/// Denominator threshold `ε · K_max · n`.
pub fn degeneracy_threshold<T: Scalar>(kernel: &KernelSpec, n: usize) -> T {
    T::lit(DENOMINATOR_EPS * kernel.peak() * n as f64)
}

fn check_bandwidth<T: Scalar>(h: T) -> Result<()> {
    if h.is_finite() && h > T::zero() {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!(
            "bandwidth must be positive and finite, got {h}"
        )))
    }
}

fn check_kernel<T: Scalar>(sample: &Sample<T>, kernel: &KernelSpec) -> Result<()> {
    if kernel.dim != sample.d() {
        return Err(Error::InvalidInput(format!(
            "kernel dimension {} does not match covariate dimension {}",
            kernel.dim,
            sample.d()
        )));
    }
    Ok(())
}

/// Nadaraya-Watson estimate at `query`.
pub fn nw_predict<T: Scalar>(
    sample: &Sample<T>,
    kernel: &KernelSpec,
    h: T,
    query: &[T],
) -> Result<Prediction<T>> {
    check_bandwidth(h)?;
    check_kernel(sample, kernel)?;
    if query.len() != sample.d() || query.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput(
            "query must be a finite point of the covariate space".into(),
        ));
    }
    let inv_h = h.recip();
    let mut num = T::zero();
    let mut den = T::zero();
    for (j, &yj) in sample.y().iter().enumerate() {
        let w = kernel.weight(query, sample.row(j), inv_h);
        num = num + w * yj;
        den = den + w;
    }
    Ok(ratio(num, den, degeneracy_threshold(kernel, sample.n())))
}

#[inline]
fn ratio<T: Scalar>(num: T, den: T, eps: T) -> Prediction<T> {
    if den < eps {
        Prediction {
            value: T::zero(),
            degenerate: true,
        }
    } else {
        Prediction {
            value: num / den,
            degenerate: false,
        }
    }
}

/// A fitted Nadaraya-Watson regression evaluated at the sample points.
#[derive(Clone, Debug)]
pub struct FitState<T> {
    sample: Sample<T>,
    kernel: KernelSpec,
    bandwidth: T,
    fitted: Vec<T>,
    residuals: Vec<T>,
    window: WeightWindow<T>,
    degenerate: Vec<bool>,
}

impl<T: Scalar> FitState<T> {
    pub fn sample(&self) -> &Sample<T> {
        &self.sample
    }

    pub fn kernel(&self) -> &KernelSpec {
        &self.kernel
    }

    pub fn bandwidth(&self) -> T {
        self.bandwidth
    }

    pub fn fitted(&self) -> &[T] {
        &self.fitted
    }

    pub fn residuals(&self) -> &[T] {
        &self.residuals
    }

    pub fn window(&self) -> &WeightWindow<T> {
        &self.window
    }

    pub fn degenerate(&self) -> &[bool] {
        &self.degenerate
    }

    pub fn n(&self) -> usize {
        self.sample.n()
    }

    pub fn d(&self) -> usize {
        self.sample.d()
    }

    /// Effective weight of each observation: `ω(X_i)`, or zero when the fit
    /// at `X_i` is degenerate.
    pub fn point_weights(&self) -> Vec<T> {
        (0..self.n())
            .map(|i| {
                if self.degenerate[i] {
                    T::zero()
                } else {
                    self.window.weight(self.sample.row(i))
                }
            })
            .collect()
    }

    /// Replaces the residuals, keeping everything else. Used to build
    /// hand-made fixtures.
    pub fn with_residuals(&self, residuals: Vec<T>) -> Result<Self> {
        if residuals.len() != self.n() {
            return Err(Error::Contract(format!(
                "residual vector has length {}, expected {}",
                residuals.len(),
                self.n()
            )));
        }
        Ok(Self {
            residuals,
            ..self.clone()
        })
    }

    /// Assembles a fit from precomputed parts.
    pub fn from_parts(
        sample: Sample<T>,
        kernel: KernelSpec,
        bandwidth: T,
        fitted: Vec<T>,
        window: WeightWindow<T>,
        degenerate: Vec<bool>,
    ) -> Result<Self> {
        let n = sample.n();
        if fitted.len() != n || degenerate.len() != n {
            return Err(Error::Contract("fit components must have length n".into()));
        }
        let residuals = sample
            .y()
            .iter()
            .zip(&fitted)
            .map(|(&y, &m)| y - m)
            .collect();
        Ok(Self {
            sample,
            kernel,
            bandwidth,
            fitted,
            residuals,
            window,
            degenerate,
        })
    }
}

/// Fits the Nadaraya-Watson estimator at every sample point.
pub fn nw_fit<T: Scalar>(
    sample: &Sample<T>,
    kernel: &KernelSpec,
    h: T,
    window: &WeightWindow<T>,
) -> Result<FitState<T>> {
    check_bandwidth(h)?;
    check_kernel(sample, kernel)?;
    if let WeightWindow::Box { lower, upper } = window {
        if lower.len() != sample.d() || upper.len() != sample.d() {
            return Err(Error::InvalidInput("window box dimension mismatch".into()));
        }
    }
    let n = sample.n();
    let inv_h = h.recip();
    let eps = degeneracy_threshold(kernel, n);
    let mut fitted = Vec::with_capacity(n);
    let mut degenerate = Vec::with_capacity(n);
    for i in 0..n {
        let xi = sample.row(i);
        let mut num = T::zero();
        let mut den = T::zero();
        for (j, &yj) in sample.y().iter().enumerate() {
            let w = kernel.weight(xi, sample.row(j), inv_h);
            num = num + w * yj;
            den = den + w;
        }
        let p = ratio(num, den, eps);
        fitted.push(p.value);
        degenerate.push(p.degenerate);
    }
    FitState::from_parts(
        sample.clone(),
        *kernel,
        h,
        fitted,
        window.clone(),
        degenerate,
    )
}

/// Dense kernel matrix over the sample points for repeated smoothing of
/// different response vectors with fixed covariates and bandwidth.
#[derive(Clone, Debug)]
pub struct Smoother<T> {
    n: usize,
    weights: Vec<T>,
    denominators: Vec<T>,
    degenerate: Vec<bool>,
}

impl<T: Scalar> Smoother<T> {
    pub fn new(sample: &Sample<T>, kernel: &KernelSpec, h: T) -> Result<Self> {
        check_bandwidth(h)?;
        check_kernel(sample, kernel)?;
        let n = sample.n();
        let inv_h = h.recip();
        let eps = degeneracy_threshold(kernel, n);
        let mut weights = Vec::with_capacity(n * n);
        let mut denominators = Vec::with_capacity(n);
        let mut degenerate = Vec::with_capacity(n);
        for i in 0..n {
            let xi = sample.row(i);
            let mut den = T::zero();
            for j in 0..n {
                let w = kernel.weight(xi, sample.row(j), inv_h);
                weights.push(w);
                den = den + w;
            }
            denominators.push(den);
            degenerate.push(den < eps);
        }
        Ok(Self {
            n,
            weights,
            denominators,
            degenerate,
        })
    }

    pub fn degenerate(&self) -> &[bool] {
        &self.degenerate
    }

    /// Smoothed values at the sample points for responses `y`; identical in
    /// floating point to [`nw_fit`] on the same data.
    pub fn apply(&self, y: &[T], out: &mut Vec<T>) {
        assert_eq!(y.len(), self.n);
        out.clear();
        for i in 0..self.n {
            if self.degenerate[i] {
                out.push(T::zero());
                continue;
            }
            let row = &self.weights[i * self.n..(i + 1) * self.n];
            let mut num = T::zero();
            for (&w, &yj) in row.iter().zip(y) {
                num = num + w * yj;
            }
            out.push(num / self.denominators[i]);
        }
    }

    /// Kernel-weighted variance estimate at each sample point, centred at
    /// the smoothed value there and clamped at zero.
    pub fn local_variance(&self, y: &[T], fitted: &[T], out: &mut Vec<T>) {
        out.clear();
        for i in 0..self.n {
            if self.degenerate[i] {
                out.push(T::zero());
                continue;
            }
            let row = &self.weights[i * self.n..(i + 1) * self.n];
            let m = fitted[i];
            let mut num = T::zero();
            for (&w, &yj) in row.iter().zip(y) {
                let r = yj - m;
                num = num + w * r * r;
            }
            out.push((num / self.denominators[i]).max(T::zero()));
        }
    }
}

/// Kernel-weighted conditional variance at `query`, centred at the
/// regression estimate at `query` itself. Negative values, possible with
/// higher-order kernels, are clamped to zero.
pub fn variance_estimate<T: Scalar>(fit: &FitState<T>, query: &[T]) -> Result<Prediction<T>> {
    let sample = fit.sample();
    let kernel = fit.kernel();
    let m = nw_predict(sample, kernel, fit.bandwidth(), query)?;
    if m.degenerate {
        return Ok(m);
    }
    let inv_h = fit.bandwidth().recip();
    let mut num = T::zero();
    let mut den = T::zero();
    for (j, &yj) in sample.y().iter().enumerate() {
        let w = kernel.weight(query, sample.row(j), inv_h);
        let r = yj - m.value;
        num = num + w * r * r;
        den = den + w;
    }
    let p = ratio(num, den, degeneracy_threshold(kernel, sample.n()));
    Ok(Prediction {
        value: p.value.max(T::zero()),
        degenerate: p.degenerate,
    })
}

/// Variance estimates at every sample point (`σ̂²(X_k)`), zero where the fit
/// is degenerate.
pub fn variance_at_samples<T: Scalar>(fit: &FitState<T>) -> Vec<T> {
    let sample = fit.sample();
    let kernel = fit.kernel();
    let inv_h = fit.bandwidth().recip();
    (0..fit.n())
        .map(|k| {
            if fit.degenerate()[k] {
                return T::zero();
            }
            let xk = sample.row(k);
            let m = fit.fitted()[k];
            let mut num = T::zero();
            let mut den = T::zero();
            for (j, &yj) in sample.y().iter().enumerate() {
                let w = kernel.weight(xk, sample.row(j), inv_h);
                let r = yj - m;
                num = num + w * r * r;
                den = den + w;
            }
            (num / den).max(T::zero())
        })
        .collect()
}

/// `ĉ_n = n⁻¹ Σ Û_i² ω(X_i)`, degenerate points excluded.
pub fn c_hat<T: Scalar>(fit: &FitState<T>) -> T {
    let w = fit.point_weights();
    let s: T = fit
        .residuals()
        .iter()
        .zip(&w)
        .map(|(&u, &wi)| u * u * wi)
        .sum();
    s / T::from_count(fit.n())
}

/// Leave-one-out cross-validation criterion for one bandwidth.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CvScore<T> {
    pub bandwidth: T,
    /// Mean squared leave-one-out error over the valid points, or `None`
    /// when fewer than half of the points have a usable denominator.
    pub score: Option<T>,
    pub valid_points: usize,
}

/// Default candidate grid: 30 log-spaced multiples in `[0.1, 2]` of
/// `n^(-1/(4+d))` times the geometric mean of the coordinate standard
/// deviations.
pub fn default_bandwidth_grid<T: Scalar>(sample: &Sample<T>) -> Vec<T> {
    let n = sample.n() as f64;
    let d = sample.d() as f64;
    let sds = sample.coordinate_sd();
    let log_mean = sds
        .iter()
        .map(|s| s.as_f64().max(f64::MIN_POSITIVE).ln())
        .sum::<f64>()
        / d;
    let scale = log_mean.exp() * n.powf(-1.0 / (4.0 + d));
    let scale = if scale.is_finite() && scale > 0.0 {
        scale
    } else {
        1.0
    };
    log_grid(0.1 * scale, 2.0 * scale, 30)
        .into_iter()
        .map(T::lit)
        .collect()
}

pub(crate) fn log_grid(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    if count == 1 {
        return vec![lo];
    }
    let (a, b) = (lo.ln(), hi.ln());
    (0..count)
        .map(|i| (a + (b - a) * i as f64 / (count - 1) as f64).exp())
        .collect()
}

/// Leave-one-out scores for every candidate bandwidth.
pub fn cv_scores<T: Scalar>(
    sample: &Sample<T>,
    kernel: &KernelSpec,
    grid: &[T],
) -> Result<Vec<CvScore<T>>> {
    check_kernel(sample, kernel)?;
    if grid.is_empty() {
        return Err(Error::InvalidInput("bandwidth grid is empty".into()));
    }
    for &h in grid {
        check_bandwidth(h)?;
    }
    let n = sample.n();
    if n < 2 {
        return Err(Error::TooFewObservations {
            found: n,
            required: 2,
        });
    }
    // Sorting by the first coordinate lets each point scan only the
    // neighbours inside the kernel support along that axis.
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        sample.row(a)[0]
            .partial_cmp(&sample.row(b)[0])
            .expect("finite")
    });
    let first: Vec<T> = order.iter().map(|&i| sample.row(i)[0]).collect();
    let eps = degeneracy_threshold::<T>(kernel, n);
    let support = T::lit(kernel.support());

    Ok(grid
        .iter()
        .map(|&h| {
            let inv_h = h.recip();
            let reach = support * h;
            let mut sse = T::zero();
            let mut valid = 0usize;
            for (pos, &i) in order.iter().enumerate() {
                let xi = sample.row(i);
                let mut num = T::zero();
                let mut den = T::zero();
                let mut accumulate = |j: usize| {
                    let w = kernel.weight(xi, sample.row(j), inv_h);
                    num = num + w * sample.y()[j];
                    den = den + w;
                };
                let mut q = pos;
                while q > 0 && first[pos] - first[q - 1] <= reach {
                    q -= 1;
                    accumulate(order[q]);
                }
                let mut q = pos + 1;
                while q < n && first[q] - first[pos] <= reach {
                    accumulate(order[q]);
                    q += 1;
                }
                if den >= eps {
                    let r = sample.y()[i] - num / den;
                    sse = sse + r * r;
                    valid += 1;
                }
            }
            let score = (2 * valid >= n && valid > 0).then(|| sse / T::from_count(valid));
            CvScore {
                bandwidth: h,
                score,
                valid_points: valid,
            }
        })
        .collect())
}

/// Cross-validated bandwidth: the grid value with the smallest mean
/// leave-one-out squared error; ties go to the smaller bandwidth.
pub fn cv_bandwidth<T: Scalar>(sample: &Sample<T>, kernel: &KernelSpec, grid: &[T]) -> Result<T> {
    if grid.len() == 1 {
        check_bandwidth(grid[0])?;
        return Ok(grid[0]);
    }
    let scores = cv_scores(sample, kernel, grid)?;
    select_min_score(&scores).ok_or(Error::NoValidBandwidth)
}

pub(crate) fn select_min_score<T: Scalar>(scores: &[CvScore<T>]) -> Option<T> {
    let mut best: Option<(T, T)> = None;
    for s in scores {
        let Some(v) = s.score else { continue };
        best = match best {
            None => Some((v, s.bandwidth)),
            Some((bv, bh)) => {
                if v < bv || (v == bv && s.bandwidth < bh) {
                    Some((v, s.bandwidth))
                } else {
                    Some((bv, bh))
                }
            }
        };
    }
    best.map(|(_, h)| h)
}
