//! Full-reference quality metrics on single-plane images in `[0, 1]`.

use thiserror::Error;

use crate::imgproc::Plane;

/// PSNR reported for identical images.
pub const PSNR_CAP: f64 = 99.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("image sizes differ: {0:?} vs {1:?}")]
    SizeMismatch((usize, usize), (usize, usize)),
    #[error("image {0:?} is smaller than the {1}x{1} window")]
    TooSmall((usize, usize), usize),
    #[error("peak must be positive")]
    Peak,
    #[error("nothing to evaluate")]
    Empty,
}

/// Window and constants for SSIM and MS-SSIM.
#[derive(Clone, Debug, PartialEq)]
pub struct SsimParams {
    pub window: usize,
    pub sigma: f64,
    pub k1: f64,
    pub k2: f64,
    pub dynamic_range: f64,
    /// Per-scale exponents, finest first. Normalized to sum 1.
    pub weights: Vec<f64>,
}

impl Default for SsimParams {
    fn default() -> Self {
        let raw = [0.0448, 0.2856, 0.3001, 0.2363, 0.1333];
        let total: f64 = raw.iter().sum();
        SsimParams {
            window: 11,
            sigma: 1.5,
            k1: 0.01,
            k2: 0.03,
            dynamic_range: 1.0,
            weights: raw.iter().map(|w| w / total).collect(),
        }
    }
}

impl SsimParams {
    /// Normalized 1-D Gaussian; the 2-D window is its outer product.
    pub fn kernel_1d(&self) -> Vec<f64> {
        let c = (self.window / 2) as f64;
        let g: Vec<f64> = (0..self.window)
            .map(|i| (-((i as f64 - c).powi(2)) / (2.0 * self.sigma * self.sigma)).exp())
            .collect();
        let s: f64 = g.iter().sum();
        g.into_iter().map(|v| v / s).collect()
    }

    fn c1(&self) -> f64 {
        (self.k1 * self.dynamic_range).powi(2)
    }

    fn c2(&self) -> f64 {
        (self.k2 * self.dynamic_range).powi(2)
    }
}

fn check_same(a: &Plane, b: &Plane) -> Result<(), MetricsError> {
    if a.dims() != b.dims() {
        return Err(MetricsError::SizeMismatch(a.dims(), b.dims()));
    }
    Ok(())
}

/// `10 log10(peak^2 / MSE)`, or [`PSNR_CAP`] when the images are equal.
pub fn psnr(a: &Plane, b: &Plane, peak: f64) -> Result<f64, MetricsError> {
    check_same(a, b)?;
    if !(peak > 0.0) {
        return Err(MetricsError::Peak);
    }
    if a.is_empty() {
        return Err(MetricsError::Empty);
    }
    let mse = a.data().iter().zip(b.data()).map(|(x, y)| (x - y).powi(2)).sum::<f64>() / a.data().len() as f64;
    if mse == 0.0 {
        return Ok(PSNR_CAP);
    }
    Ok(10.0 * (peak * peak / mse).log10())
}

/// Separable valid-region filtering of `x` with `k` along both axes.
fn filter_valid(x: &[f64], h: usize, w: usize, k: &[f64]) -> Vec<f64> {
    let n = k.len();
    let (oh, ow) = (h - n + 1, w - n + 1);
    let mut rows = vec![0.0; h * ow];
    for i in 0..h {
        let src = &x[i * w..(i + 1) * w];
        for j in 0..ow {
            rows[i * ow + j] = k.iter().zip(&src[j..j + n]).map(|(a, b)| a * b).sum();
        }
    }
    let mut out = vec![0.0; oh * ow];
    for i in 0..oh {
        for (t, &kt) in k.iter().enumerate() {
            let src = &rows[(i + t) * ow..(i + t + 1) * ow];
            for (o, s) in out[i * ow..(i + 1) * ow].iter_mut().zip(src) {
                *o += kt * s;
            }
        }
    }
    out
}

/// Mean SSIM and mean contrast-structure term over the valid region.
fn ssim_parts(a: &Plane, b: &Plane, p: &SsimParams) -> Result<(f64, f64), MetricsError> {
    check_same(a, b)?;
    let (h, w) = a.dims();
    if h < p.window || w < p.window || p.window == 0 {
        return Err(MetricsError::TooSmall((h, w), p.window));
    }
    let k = p.kernel_1d();
    let (x, y) = (a.data(), b.data());
    let prod = |f: &dyn Fn(usize) -> f64| (0..x.len()).map(f).collect::<Vec<f64>>();
    let mu_x = filter_valid(x, h, w, &k);
    let mu_y = filter_valid(y, h, w, &k);
    let xx = filter_valid(&prod(&|i| x[i] * x[i]), h, w, &k);
    let yy = filter_valid(&prod(&|i| y[i] * y[i]), h, w, &k);
    let xy = filter_valid(&prod(&|i| x[i] * y[i]), h, w, &k);
    let (c1, c2) = (p.c1(), p.c2());
    let (mut s_sum, mut cs_sum) = (0.0, 0.0);
    for i in 0..mu_x.len() {
        let (mx, my) = (mu_x[i], mu_y[i]);
        let vx = xx[i] - mx * mx;
        let vy = yy[i] - my * my;
        let cov = xy[i] - mx * my;
        let cs = (2.0 * cov + c2) / (vx + vy + c2);
        let l = (2.0 * mx * my + c1) / (mx * mx + my * my + c1);
        s_sum += l * cs;
        cs_sum += cs;
    }
    let n = mu_x.len() as f64;
    Ok((s_sum / n, cs_sum / n))
}

/// Mean SSIM with a Gaussian window, valid region only.
pub fn ssim(a: &Plane, b: &Plane, p: &SsimParams) -> Result<f64, MetricsError> {
    Ok(ssim_parts(a, b, p)?.0)
}

/// 2x2 box average followed by decimation; odd trailing rows/columns drop.
pub fn downsample2(x: &Plane) -> Plane {
    let (h, w) = (x.height() / 2, x.width() / 2);
    Plane::from_fn(h, w, |i, j| {
        (x.get(2 * i, 2 * j) + x.get(2 * i, 2 * j + 1) + x.get(2 * i + 1, 2 * j) + x.get(2 * i + 1, 2 * j + 1)) / 4.0
    })
}

/// Number of scales at which an `h x w` image still covers the window,
/// capped by the number of weights.
pub fn usable_scales(h: usize, w: usize, p: &SsimParams) -> usize {
    let mut m = h.min(w);
    let mut s = 0;
    while s < p.weights.len() && m >= p.window && p.window > 0 {
        s += 1;
        m /= 2;
    }
    s
}

/// Multi-scale SSIM with as many scales as the image size allows; the used
/// weights are renormalized to sum 1.
pub fn ms_ssim(a: &Plane, b: &Plane, p: &SsimParams) -> Result<f64, MetricsError> {
    check_same(a, b)?;
    let scales = usable_scales(a.height(), a.width(), p);
    if scales == 0 {
        return Err(MetricsError::TooSmall(a.dims(), p.window));
    }
    ms_ssim_scales(a, b, p, scales)
}

/// Multi-scale SSIM over exactly `scales` scales. Contrast-structure terms
/// of the finer scales and the full SSIM of the coarsest scale are clamped
/// at 0 before exponentiation; a single scale returns plain SSIM.
pub fn ms_ssim_scales(a: &Plane, b: &Plane, p: &SsimParams, scales: usize) -> Result<f64, MetricsError> {
    check_same(a, b)?;
    if scales == 0 || scales > p.weights.len() || scales > usable_scales(a.height(), a.width(), p) {
        return Err(MetricsError::TooSmall(a.dims(), p.window));
    }
    if scales == 1 {
        return ssim(a, b, p);
    }
    let total: f64 = p.weights[..scales].iter().sum();
    let (mut x, mut y) = (a.clone(), b.clone());
    let mut value = 1.0;
    for s in 0..scales {
        let (full, cs) = ssim_parts(&x, &y, p)?;
        let term = if s + 1 == scales { full } else { cs };
        value *= term.max(0.0).powf(p.weights[s] / total);
        if s + 1 < scales {
            x = downsample2(&x);
            y = downsample2(&y);
        }
    }
    Ok(value)
}

#[derive(Clone, Debug, PartialEq)]
pub struct MetricRow {
    pub id: String,
    pub psnr: f64,
    pub ssim: f64,
    pub ms_ssim: f64,
}

impl MetricRow {
    pub fn compute(id: &str, test: &Plane, reference: &Plane, p: &SsimParams) -> Result<Self, MetricsError> {
        Ok(MetricRow {
            id: id.to_string(),
            psnr: psnr(test, reference, 1.0)?,
            ssim: ssim(test, reference, p)?,
            ms_ssim: ms_ssim(test, reference, p)?,
        })
    }

    /// Column-wise arithmetic mean of `rows`.
    pub fn mean(id: &str, rows: &[MetricRow]) -> Result<Self, MetricsError> {
        if rows.is_empty() {
            return Err(MetricsError::Empty);
        }
        let n = rows.len() as f64;
        let avg = |f: fn(&MetricRow) -> f64| rows.iter().map(f).sum::<f64>() / n;
        Ok(MetricRow {
            id: id.to_string(),
            psnr: avg(|r| r.psnr),
            ssim: avg(|r| r.ssim),
            ms_ssim: avg(|r| r.ms_ssim),
        })
    }
}

pub const REPORT_HEADER: [&str; 4] = ["id", "PSNR", "SSIM", "MS-SSIM"];
pub const MEAN_ID: &str = "mean";
pub const BASELINE_ID: &str = "baseline-blurred";

/// Per-image rows sorted by id, their mean and optionally the mean of the
/// unprocessed inputs for comparison.
#[derive(Clone, Debug, PartialEq)]
pub struct MetricReport {
    pub rows: Vec<MetricRow>,
    pub mean: MetricRow,
    pub baseline: Option<MetricRow>,
}

/// Scores each `(id, test, reference)` triple.
pub fn evaluate(items: &[(&str, &Plane, &Plane)], p: &SsimParams) -> Result<MetricReport, MetricsError> {
    if items.is_empty() {
        return Err(MetricsError::Empty);
    }
    let mut rows = items
        .iter()
        .map(|(id, t, r)| MetricRow::compute(id, t, r, p))
        .collect::<Result<Vec<_>, _>>()?;
    rows.sort_by(|a, b| a.id.cmp(&b.id));
    let mean = MetricRow::mean(MEAN_ID, &rows)?;
    Ok(MetricReport {
        rows,
        mean,
        baseline: None,
    })
}

impl MetricReport {
    /// Adds the mean scores of `items` as the baseline row.
    pub fn with_baseline(mut self, items: &[(&str, &Plane, &Plane)], p: &SsimParams) -> Result<Self, MetricsError> {
        let base = evaluate(items, p)?;
        let mut row = base.mean;
        row.id = BASELINE_ID.to_string();
        self.baseline = Some(row);
        Ok(self)
    }

    fn all_rows(&self) -> impl Iterator<Item = &MetricRow> {
        self.rows.iter().chain(Some(&self.mean)).chain(self.baseline.as_ref())
    }

    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(REPORT_HEADER).unwrap();
        for r in self.all_rows() {
            w.write_record([
                r.id.clone(),
                format!("{:.4}", r.psnr),
                format!("{:.6}", r.ssim),
                format!("{:.6}", r.ms_ssim),
            ])
            .unwrap();
        }
        String::from_utf8(w.into_inner().unwrap()).unwrap()
    }
}
