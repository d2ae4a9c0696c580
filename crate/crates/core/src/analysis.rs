//! Finite-size scaling analysis on ensemble scan output.
//!
//! Provides scaling-collapse quality scoring (weighted isotonic master-curve
//! fit), critical-point scans, pairwise curve crossings with delta-method
//! errors, susceptibility peaks via central differences, power-law and
//! logarithmic fits, and marching-squares contour extraction for phase
//! diagrams.

use ndarray::Array2;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("need at least {need} data points, got {got}")]
    InsufficientData { need: usize, got: usize },
    #[error("curves share fewer than two grid points")]
    DisjointGrids,
    #[error("curves do not cross on the shared grid")]
    NoCrossing,
    #[error("fit requires strictly positive values")]
    NonPositiveData,
    #[error("singular design matrix in least-squares fit")]
    SingularFit,
}

/// Critical exponents entering the finite-size rescaling
/// `y * L^{2 beta / nu}` vs `(x - xc) * L^{1 / nu}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScalingExponents {
    pub two_beta_over_nu: f64,
    pub one_over_nu: f64,
}

impl ScalingExponents {
    /// 2D Ising universality: beta = 1/8, nu = 1.
    pub fn ising_2d() -> Self {
        Self { two_beta_over_nu: 0.25, one_over_nu: 1.0 }
    }

    /// Mean-field universality: beta = 1/2, nu = 1/2.
    pub fn mean_field() -> Self {
        Self { two_beta_over_nu: 2.0, one_over_nu: 2.0 }
    }
}

/// One point of an observable-vs-control-parameter curve.
#[derive(Debug, Clone, Copy)]
pub struct CurvePoint {
    pub x: f64,
    pub y: f64,
    pub se: f64,
}

/// An observable curve measured at linear lattice size `l`.
#[derive(Debug, Clone)]
pub struct SizeCurve {
    pub l: usize,
    pub points: Vec<CurvePoint>,
}

impl SizeCurve {
    pub fn new(l: usize, points: Vec<CurvePoint>) -> Self {
        Self { l, points }
    }

    /// Curve with `y` and `se` multiplied by `L^{2 beta / nu}`; crossings of
    /// these rescaled curves estimate the critical point.
    pub fn amplitude_rescaled(&self, two_beta_over_nu: f64) -> SizeCurve {
        let a = (self.l as f64).powf(two_beta_over_nu);
        let points = self
            .points
            .iter()
            .map(|p| CurvePoint { x: p.x, y: p.y * a, se: p.se * a })
            .collect();
        SizeCurve { l: self.l, points }
    }
}

/// Weighted isotonic regression by pool-adjacent-violators.
///
/// Returns the monotone (non-decreasing if `increasing`) weighted
/// least-squares fit to `y`; `y` must already be ordered by the predictor.
pub fn isotonic_fit(y: &[f64], w: &[f64], increasing: bool) -> Vec<f64> {
    assert_eq!(y.len(), w.len());
    let sgn = if increasing { 1.0 } else { -1.0 };
    let mut mean: Vec<f64> = Vec::with_capacity(y.len());
    let mut weight: Vec<f64> = Vec::with_capacity(y.len());
    let mut count: Vec<usize> = Vec::with_capacity(y.len());
    for (yi, wi) in y.iter().zip(w) {
        mean.push(sgn * yi);
        weight.push(*wi);
        count.push(1);
        while mean.len() > 1 && mean[mean.len() - 2] > mean[mean.len() - 1] {
            let m2 = mean.pop().unwrap();
            let w2 = weight.pop().unwrap();
            let c2 = count.pop().unwrap();
            let k = mean.len() - 1;
            let wtot = weight[k] + w2;
            if wtot > 0.0 {
                mean[k] = (mean[k] * weight[k] + m2 * w2) / wtot;
            }
            weight[k] = wtot;
            count[k] += c2;
        }
    }
    let mut out = Vec::with_capacity(y.len());
    for (m, c) in mean.iter().zip(&count) {
        out.extend(std::iter::repeat(sgn * m).take(*c));
    }
    out
}

fn best_isotonic_sse(v: &[f64], w: &[f64]) -> f64 {
    let sse = |fit: &[f64]| {
        v.iter()
            .zip(fit)
            .zip(w)
            .map(|((y, f), wi)| wi * (y - f) * (y - f))
            .sum::<f64>()
    };
    let inc = sse(&isotonic_fit(v, w, true));
    let dec = sse(&isotonic_fit(v, w, false));
    inc.min(dec)
}

/// Quality of a scaling collapse at trial critical point `xc`.
///
/// All points are rescaled to `(u, v) = ((x - xc) L^{1/nu}, y L^{2b/nu})`,
/// split at u = 0, and each branch is fit by the better of an increasing or
/// decreasing weighted isotonic master curve. Returns the reduced chi-square
/// per point, so values are comparable across exponent hypotheses.
pub fn collapse_quality(
    curves: &[SizeCurve],
    exp: ScalingExponents,
    xc: f64,
) -> Result<f64, AnalysisError> {
    let mut branches: [Vec<(f64, f64, f64)>; 2] = [Vec::new(), Vec::new()];
    for c in curves {
        let l = c.l as f64;
        let au = l.powf(exp.one_over_nu);
        let av = l.powf(exp.two_beta_over_nu);
        for p in &c.points {
            let u = (p.x - xc) * au;
            let v = p.y * av;
            let se = (p.se * av).max(1e-12);
            let idx = usize::from(u >= 0.0);
            branches[idx].push((u, v, 1.0 / (se * se)));
        }
    }
    let mut chi2 = 0.0;
    let mut n = 0usize;
    for branch in branches.iter_mut() {
        if branch.len() < 2 {
            continue;
        }
        branch.sort_by(|a, b| a.0.total_cmp(&b.0));
        let v: Vec<f64> = branch.iter().map(|p| p.1).collect();
        let w: Vec<f64> = branch.iter().map(|p| p.2).collect();
        chi2 += best_isotonic_sse(&v, &w);
        n += branch.len();
    }
    if n == 0 {
        return Err(AnalysisError::InsufficientData { need: 2, got: 0 });
    }
    Ok(chi2 / n as f64)
}

/// Whether the rescaled u-ranges of consecutive sizes overlap at `xc`; a
/// collapse score with disjoint ranges compares nothing and is meaningless.
pub fn rescaled_ranges_overlap(curves: &[SizeCurve], exp: ScalingExponents, xc: f64) -> bool {
    let mut ranges: Vec<(usize, f64, f64)> = curves
        .iter()
        .filter(|c| !c.points.is_empty())
        .map(|c| {
            let au = (c.l as f64).powf(exp.one_over_nu);
            let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
            for p in &c.points {
                let u = (p.x - xc) * au;
                lo = lo.min(u);
                hi = hi.max(u);
            }
            (c.l, lo, hi)
        })
        .collect();
    ranges.sort_by_key(|r| r.0);
    ranges.windows(2).all(|p| p[0].1.max(p[1].1) <= p[0].2.min(p[1].2))
}

/// Result of scanning the trial critical point over a grid.
#[derive(Debug, Clone)]
pub struct CollapseScan {
    pub exponents: ScalingExponents,
    /// (trial xc, quality) over the scanned grid.
    pub grid: Vec<(f64, f64)>,
    pub best_xc: f64,
    pub best_q: f64,
    /// Rescaled ranges of consecutive sizes overlap at the best xc.
    pub valid_overlap: bool,
}

/// Scan trial critical points, scoring each by [`collapse_quality`].
pub fn collapse_scan(
    curves: &[SizeCurve],
    exp: ScalingExponents,
    xc_grid: &[f64],
) -> Result<CollapseScan, AnalysisError> {
    if xc_grid.is_empty() {
        return Err(AnalysisError::InsufficientData { need: 1, got: 0 });
    }
    let mut grid = Vec::with_capacity(xc_grid.len());
    let (mut best_xc, mut best_q) = (f64::NAN, f64::INFINITY);
    for &xc in xc_grid {
        let q = collapse_quality(curves, exp, xc)?;
        if q < best_q {
            best_q = q;
            best_xc = xc;
        }
        grid.push((xc, q));
    }
    let valid_overlap = rescaled_ranges_overlap(curves, exp, best_xc);
    Ok(CollapseScan { exponents: exp, grid, best_xc, best_q, valid_overlap })
}

/// A crossing between two size curves.
#[derive(Debug, Clone, Copy)]
pub struct Crossing {
    pub l_pair: (usize, usize),
    pub x: f64,
    pub se: f64,
    /// Number of sign changes found; if > 1, the steepest was taken.
    pub n_candidates: usize,
}

/// Locate where two curves cross by linear interpolation between shared grid
/// points; the standard error follows from the delta method applied to the
/// bracketing differences.
pub fn pair_crossing(a: &SizeCurve, b: &SizeCurve) -> Result<Crossing, AnalysisError> {
    let mut shared: Vec<(f64, f64, f64)> = Vec::new();
    for pa in &a.points {
        if let Some(pb) = b.points.iter().find(|pb| (pb.x - pa.x).abs() < 1e-9) {
            let d = pa.y - pb.y;
            let var = pa.se * pa.se + pb.se * pb.se;
            shared.push((pa.x, d, var));
        }
    }
    if shared.len() < 2 {
        return Err(AnalysisError::DisjointGrids);
    }
    shared.sort_by(|p, q| p.0.total_cmp(&q.0));
    let mut best: Option<(f64, f64, f64)> = None; // (x*, var, |slope|)
    let mut n_candidates = 0usize;
    for pair in shared.windows(2) {
        let (x0, d0, v0) = pair[0];
        let (x1, d1, v1) = pair[1];
        // An exact zero at a grid point belongs to the interval on its right,
        // so it is not double counted.
        let opposite = d0 * d1 < 0.0 || (d0 == 0.0 && d1 != 0.0);
        if !opposite {
            continue;
        }
        n_candidates += 1;
        let h = x1 - x0;
        let dd = d1 - d0;
        let x_star = x0 - d0 * h / dd;
        // x* = x0 - h d0 / (d1 - d0):
        //   d x*/d d0 = -h d1 / (d1-d0)^2,  d x*/d d1 = h d0 / (d1-d0)^2
        let g = h / (dd * dd);
        let var = g * g * (d1 * d1 * v0 + d0 * d0 * v1);
        let slope = (dd / h).abs();
        if best.map_or(true, |(_, _, s)| slope > s) {
            best = Some((x_star, var, slope));
        }
    }
    match best {
        Some((x, var, _)) => Ok(Crossing {
            l_pair: (a.l, b.l),
            x,
            se: var.sqrt(),
            n_candidates,
        }),
        None => Err(AnalysisError::NoCrossing),
    }
}

/// Combined critical-point estimate from all pairwise crossings.
#[derive(Debug, Clone)]
pub struct CrossingSummary {
    pub crossings: Vec<Crossing>,
    /// Inverse-variance weighted mean of the crossing positions.
    pub mean: f64,
    /// Larger of the weighted standard error and the scatter of estimates.
    pub se: f64,
    /// Pairs whose difference changed sign more than once.
    pub n_multiple: usize,
}

/// All pairwise crossings of the given curves; pairs that do not cross are
/// skipped, and an error is returned only if no pair crosses.
pub fn crossing_summary(curves: &[SizeCurve]) -> Result<CrossingSummary, AnalysisError> {
    let mut crossings = Vec::new();
    for i in 0..curves.len() {
        for j in i + 1..curves.len() {
            if let Ok(c) = pair_crossing(&curves[i], &curves[j]) {
                crossings.push(c);
            }
        }
    }
    if crossings.is_empty() {
        return Err(AnalysisError::NoCrossing);
    }
    let mut wsum = 0.0;
    let mut wx = 0.0;
    for c in &crossings {
        let w = 1.0 / (c.se * c.se).max(1e-24);
        wsum += w;
        wx += w * c.x;
    }
    let mean = wx / wsum;
    let weighted_se = (1.0 / wsum).sqrt();
    let scatter_se = if crossings.len() >= 2 {
        let k = crossings.len() as f64;
        let var = crossings.iter().map(|c| (c.x - mean) * (c.x - mean)).sum::<f64>() / (k - 1.0);
        (var / k).sqrt()
    } else {
        0.0
    };
    let n_multiple = crossings.iter().filter(|c| c.n_candidates > 1).count();
    Ok(CrossingSummary { crossings, mean, se: weighted_se.max(scatter_se), n_multiple })
}

/// Central-difference derivative dy/dx with propagated standard errors;
/// output has two fewer points than the input.
pub fn derivative_curve(points: &[CurvePoint]) -> Result<Vec<CurvePoint>, AnalysisError> {
    if points.len() < 3 {
        return Err(AnalysisError::InsufficientData { need: 3, got: points.len() });
    }
    let mut out = Vec::with_capacity(points.len() - 2);
    for w in points.windows(3) {
        let span = w[2].x - w[0].x;
        let dy = (w[2].y - w[0].y) / span;
        let se = (w[2].se * w[2].se + w[0].se * w[0].se).sqrt() / span.abs();
        out.push(CurvePoint { x: w[1].x, y: dy, se });
    }
    Ok(out)
}

/// An extremum of a gridded curve, refined by parabolic interpolation.
#[derive(Debug, Clone, Copy)]
pub struct Peak {
    pub x: f64,
    pub height: f64,
    pub se: f64,
    pub grid_index: usize,
}

fn refine_parabolic(points: &[CurvePoint], i: usize) -> (f64, f64) {
    if i == 0 || i + 1 >= points.len() {
        return (points[i].x, points[i].y);
    }
    let (p0, p1, p2) = (points[i - 1], points[i], points[i + 1]);
    // Fit y = a t^2 + b t + c on the local offsets t = x - x1.
    let (t0, t2) = (p0.x - p1.x, p2.x - p1.x);
    let denom = t0 * t2 * (t0 - t2);
    if denom == 0.0 {
        return (p1.x, p1.y);
    }
    let a = (t2 * (p0.y - p1.y) - t0 * (p2.y - p1.y)) / denom;
    let b = (t0 * t0 * (p2.y - p1.y) - t2 * t2 * (p0.y - p1.y)) / denom;
    if a == 0.0 {
        return (p1.x, p1.y);
    }
    let t_star = -b / (2.0 * a);
    if t_star <= t0 || t_star >= t2 {
        return (p1.x, p1.y);
    }
    (p1.x + t_star, p1.y + b * t_star + a * t_star * t_star)
}

/// Global maximum (or minimum) of the curve with parabolic refinement.
pub fn find_peak(points: &[CurvePoint], maximize: bool) -> Result<Peak, AnalysisError> {
    if points.is_empty() {
        return Err(AnalysisError::InsufficientData { need: 1, got: 0 });
    }
    let mut i_best = 0usize;
    for (i, p) in points.iter().enumerate() {
        let better = if maximize { p.y > points[i_best].y } else { p.y < points[i_best].y };
        if better {
            i_best = i;
        }
    }
    let (x, height) = refine_parabolic(points, i_best);
    Ok(Peak { x, height, se: points[i_best].se, grid_index: i_best })
}

/// All interior local maxima, in order of increasing x.
pub fn local_maxima(points: &[CurvePoint]) -> Vec<Peak> {
    let mut peaks = Vec::new();
    for i in 1..points.len().saturating_sub(1) {
        if points[i].y > points[i - 1].y && points[i].y >= points[i + 1].y {
            let (x, height) = refine_parabolic(points, i);
            peaks.push(Peak { x, height, se: points[i].se, grid_index: i });
        }
    }
    peaks
}

/// Weighted straight-line fit y = intercept + slope * x.
#[derive(Debug, Clone, Copy)]
pub struct LinearFit {
    pub intercept: f64,
    pub slope: f64,
    pub se_intercept: f64,
    pub se_slope: f64,
}

/// Least-squares line fit. With explicit weights (1/se^2) the parameter
/// errors come directly from the normal-equation inverse; with unit weights
/// they are scaled by the residual variance.
pub fn linear_fit(x: &[f64], y: &[f64], w: Option<&[f64]>) -> Result<LinearFit, AnalysisError> {
    let n = x.len();
    if n < 2 || y.len() != n {
        return Err(AnalysisError::InsufficientData { need: 2, got: n.min(y.len()) });
    }
    let unit = vec![1.0; n];
    let w = w.unwrap_or(&unit);
    let (mut sw, mut swx, mut swxx, mut swy, mut swxy) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for i in 0..n {
        sw += w[i];
        swx += w[i] * x[i];
        swxx += w[i] * x[i] * x[i];
        swy += w[i] * y[i];
        swxy += w[i] * x[i] * y[i];
    }
    let det = sw * swxx - swx * swx;
    if det.abs() < 1e-300 || !det.is_finite() {
        return Err(AnalysisError::SingularFit);
    }
    let intercept = (swxx * swy - swx * swxy) / det;
    let slope = (sw * swxy - swx * swy) / det;
    let mut var_scale = 1.0;
    if std::ptr::eq(w.as_ptr(), unit.as_ptr()) && n > 2 {
        let sse: f64 = x
            .iter()
            .zip(y)
            .map(|(xi, yi)| {
                let r = yi - intercept - slope * xi;
                r * r
            })
            .sum();
        var_scale = sse / (n - 2) as f64;
    }
    Ok(LinearFit {
        intercept,
        slope,
        se_intercept: (var_scale * swxx / det).sqrt(),
        se_slope: (var_scale * sw / det).sqrt(),
    })
}

/// Power-law fit y = amplitude * x^exponent via log-log least squares.
#[derive(Debug, Clone, Copy)]
pub struct PowerLawFit {
    pub exponent: f64,
    pub amplitude: f64,
    pub se_exponent: f64,
}

pub fn power_law_fit(
    x: &[f64],
    y: &[f64],
    se: Option<&[f64]>,
) -> Result<PowerLawFit, AnalysisError> {
    if x.iter().any(|v| *v <= 0.0) || y.iter().any(|v| *v <= 0.0) {
        return Err(AnalysisError::NonPositiveData);
    }
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let w: Option<Vec<f64>> = se.map(|s| {
        // d ln y = dy / y, so weight 1/se_ln^2 = (y/se)^2.
        y.iter().zip(s).map(|(yi, si)| (yi / si) * (yi / si)).collect()
    });
    let fit = linear_fit(&lx, &ly, w.as_deref())?;
    Ok(PowerLawFit {
        exponent: fit.slope,
        amplitude: fit.intercept.exp(),
        se_exponent: fit.se_slope,
    })
}

/// Fit y = a + b ln(l), as used for logarithmically drifting peak positions.
pub fn log_linear_fit(
    l: &[f64],
    y: &[f64],
    se: Option<&[f64]>,
) -> Result<LinearFit, AnalysisError> {
    if l.iter().any(|v| *v <= 0.0) {
        return Err(AnalysisError::NonPositiveData);
    }
    let lx: Vec<f64> = l.iter().map(|v| v.ln()).collect();
    let w: Option<Vec<f64>> = se.map(|s| s.iter().map(|si| 1.0 / (si * si)).collect());
    linear_fit(&lx, &y.to_vec(), w.as_deref())
}

/// A contour line segment between two interpolated edge points.
pub type Segment = [(f64, f64); 2];

/// Marching-squares extraction of the level set f = level on a rectilinear
/// grid; `f` is indexed `[ix, iy]`. Saddle cells are resolved by the cell
/// center average.
pub fn contour_segments(xs: &[f64], ys: &[f64], f: &Array2<f64>, level: f64) -> Vec<Segment> {
    assert_eq!(f.shape(), &[xs.len(), ys.len()]);
    let mut segs = Vec::new();
    if xs.len() < 2 || ys.len() < 2 {
        return segs;
    }
    for i in 0..xs.len() - 1 {
        for j in 0..ys.len() - 1 {
            let c00 = f[[i, j]];
            let c10 = f[[i + 1, j]];
            let c11 = f[[i + 1, j + 1]];
            let c01 = f[[i, j + 1]];
            let code = usize::from(c00 > level)
                | usize::from(c10 > level) << 1
                | usize::from(c11 > level) << 2
                | usize::from(c01 > level) << 3;
            if code == 0 || code == 15 {
                continue;
            }
            let frac = |a: f64, b: f64| (level - a) / (b - a);
            // Edge midpoints: 0 bottom, 1 right, 2 top, 3 left.
            let edge = |e: usize| -> (f64, f64) {
                match e {
                    0 => (xs[i] + frac(c00, c10) * (xs[i + 1] - xs[i]), ys[j]),
                    1 => (xs[i + 1], ys[j] + frac(c10, c11) * (ys[j + 1] - ys[j])),
                    2 => (xs[i] + frac(c01, c11) * (xs[i + 1] - xs[i]), ys[j + 1]),
                    _ => (xs[i], ys[j] + frac(c00, c01) * (ys[j + 1] - ys[j])),
                }
            };
            let center_above = (c00 + c10 + c11 + c01) / 4.0 > level;
            let pairs: &[(usize, usize)] = match code {
                1 => &[(3, 0)],
                2 => &[(0, 1)],
                3 => &[(3, 1)],
                4 => &[(1, 2)],
                5 if center_above => &[(0, 1), (2, 3)],
                5 => &[(3, 0), (1, 2)],
                6 => &[(0, 2)],
                7 => &[(3, 2)],
                8 => &[(3, 2)],
                9 => &[(0, 2)],
                10 if center_above => &[(3, 0), (1, 2)],
                10 => &[(0, 1), (2, 3)],
                11 => &[(1, 2)],
                12 => &[(3, 1)],
                13 => &[(0, 1)],
                14 => &[(3, 0)],
                _ => unreachable!(),
            };
            for &(ea, eb) in pairs {
                segs.push([edge(ea), edge(eb)]);
            }
        }
    }
    segs
}

/// Reflect contour segments across the diagonal x = y; useful when the
/// underlying model is symmetric under exchanging the two scanned couplings.
pub fn mirrored_across_diagonal(segs: &[Segment]) -> Vec<Segment> {
    segs.iter().map(|s| [(s[0].1, s[0].0), (s[1].1, s[1].0)]).collect()
}
