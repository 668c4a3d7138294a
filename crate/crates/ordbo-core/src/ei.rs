//! Vanilla GP regression plus expected improvement, the comparison baseline.
//!
//! Inputs are normalised to the unit box and outputs standardised before
//! fitting, so the hyperparameter box [1e-3, 1e3] is meaningful regardless
//! of the objective's scale. Hyperparameters maximise the Gaussian log
//! marginal likelihood by multi-start Adam on logistic-transformed
//! log-parameters.

use rand::Rng;

use crate::error::{Error, Result};
use crate::kernel::KernelSpec;
use crate::linalg::{cholesky_escalate, dot, Chol, Mat};
use crate::lowdisc::halton_point;
use crate::normal::{norm_cdf, norm_pdf};
use crate::scalar::Scalar;

const HP_LO: f64 = 1e-3;
const HP_HI: f64 = 1e3;

/// Shared-lengthscale Matern 3/2 hyperparameters, in normalised/standardised
/// space, each bounded in [1e-3, 1e3].
#[derive(Debug, Clone, Copy)]
pub struct GpHyperparams<S> {
    pub lengthscale: S,
    pub signal_variance: S,
    pub noise_variance: S,
}

impl<S: Scalar> GpHyperparams<S> {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("lengthscale", self.lengthscale),
            ("signal_variance", self.signal_variance),
            ("noise_variance", self.noise_variance),
        ] {
            if !(v >= S::c(HP_LO) && v <= S::c(HP_HI)) {
                return Err(Error::domain(format!("{name} = {v:?} outside [1e-3, 1e3]")));
            }
        }
        Ok(())
    }
}

/// A fitted GP: factorised train covariance plus the scaling that maps
/// between raw and standardised spaces.
#[derive(Debug, Clone)]
pub struct FittedGp<S> {
    pub hyper: GpHyperparams<S>,
    x_norm: Mat<S>,
    y_std: Vec<S>,
    y_mean: S,
    y_scale: S,
    domain: Vec<(S, S)>,
    chol: Chol<S>,
    alpha: Vec<S>,
    kernel: KernelSpec<S>,
    pub log_marginal: S,
}

fn normalise_x<S: Scalar>(x: &Mat<S>, domain: &[(S, S)]) -> Mat<S> {
    let mut out = Mat::zeros(x.nrows(), x.ncols());
    for i in 0..x.nrows() {
        for j in 0..x.ncols() {
            let (lo, hi) = domain[j];
            out[(i, j)] = (x[(i, j)] - lo) / (hi - lo);
        }
    }
    out
}

fn train_cov<S: Scalar>(
    kernel: &KernelSpec<S>,
    x: &Mat<S>,
    hp: &GpHyperparams<S>,
) -> Result<Mat<S>> {
    let n = x.nrows();
    let mut k = Mat::zeros(n, n);
    for i in 0..n {
        k[(i, i)] = hp.signal_variance + hp.noise_variance;
        for j in (i + 1)..n {
            let r = Mat::row_dist(x.row(i), x.row(j)) / hp.lengthscale;
            let v = hp.signal_variance * kernel.kernel_value(r)?;
            k[(i, j)] = v;
            k[(j, i)] = v;
        }
    }
    Ok(k)
}

/// Log marginal likelihood of standardised targets under `hp`.
pub fn log_marginal<S: Scalar>(
    kernel: &KernelSpec<S>,
    x_norm: &Mat<S>,
    y_std: &[S],
    hp: &GpHyperparams<S>,
) -> Result<S> {
    let n = y_std.len();
    let k = train_cov(kernel, x_norm, hp)?;
    let chol = cholesky_escalate(&k, S::c(1e-12))?;
    let alpha = chol.solve_vec(y_std);
    let two_pi = S::c(std::f64::consts::TAU);
    Ok(-(dot(y_std, &alpha) + chol.logdet() + S::of(n) * two_pi.ln()) * S::c(0.5))
}

/// Gradient of the log marginal with respect to the log hyperparameters.
pub fn log_marginal_grad<S: Scalar>(
    kernel: &KernelSpec<S>,
    x_norm: &Mat<S>,
    y_std: &[S],
    hp: &GpHyperparams<S>,
) -> Result<[S; 3]> {
    let n = y_std.len();
    let k = train_cov(kernel, x_norm, hp)?;
    let chol = cholesky_escalate(&k, S::c(1e-12))?;
    let alpha = chol.solve_vec(y_std);
    let kinv = chol.inverse();
    let sqrt3 = S::c(3.0).sqrt();
    let mut g = [S::zero(); 3];
    for i in 0..n {
        for j in 0..n {
            // W = alpha alpha^T - K^-1
            let w = alpha[i] * alpha[j] - kinv[(i, j)];
            let r = Mat::row_dist(x_norm.row(i), x_norm.row(j)) / hp.lengthscale;
            let a = sqrt3 * r;
            let kv = kernel.kernel_value(r)?;
            // d K / d log lengthscale = s^2 a^2 exp(-a)
            g[0] += w * hp.signal_variance * a * a * (-a).exp();
            // d K / d log signal = s^2 k(r)
            g[1] += w * hp.signal_variance * kv;
            if i == j {
                g[2] += w * hp.noise_variance;
            }
        }
    }
    Ok([g[0] * S::c(0.5), g[1] * S::c(0.5), g[2] * S::c(0.5)])
}

fn logit_box<S: Scalar>(v: S) -> S {
    let lo = S::c(HP_LO.ln());
    let hi = S::c(HP_HI.ln());
    let eps = S::c(1e-7);
    let f = ((v.ln() - lo) / (hi - lo)).max(eps).min(S::one() - eps);
    (f / (S::one() - f)).ln()
}

fn unlogit_box<S: Scalar>(raw: S) -> S {
    let lo = S::c(HP_LO.ln());
    let hi = S::c(HP_HI.ln());
    let s = S::one() / (S::one() + (-raw).exp());
    (lo + (hi - lo) * s).exp()
}

fn fit_from_start<S: Scalar>(
    kernel: &KernelSpec<S>,
    x_norm: &Mat<S>,
    y_std: &[S],
    start: GpHyperparams<S>,
    steps: usize,
) -> Result<(GpHyperparams<S>, S)> {
    let mut raw =
        [logit_box(start.lengthscale), logit_box(start.signal_variance), logit_box(start.noise_variance)];
    let to_hp = |raw: &[S; 3]| GpHyperparams {
        lengthscale: unlogit_box(raw[0]),
        signal_variance: unlogit_box(raw[1]),
        noise_variance: unlogit_box(raw[2]),
    };
    let mut best_hp = to_hp(&raw);
    let mut best_lml = log_marginal(kernel, x_norm, y_std, &best_hp)?;
    let lr = S::c(0.08);
    let (b1, b2, eps) = (S::c(0.9), S::c(0.999), S::c(1e-8));
    let mut m = [S::zero(); 3];
    let mut v = [S::zero(); 3];
    let span = S::c(HP_HI.ln() - HP_LO.ln());
    for t in 1..=steps {
        let hp = to_hp(&raw);
        let g_log = log_marginal_grad(kernel, x_norm, y_std, &hp)?;
        for i in 0..3 {
            // chain through the logistic map on the log scale
            let s = S::one() / (S::one() + (-raw[i]).exp());
            let g = g_log[i] * span * s * (S::one() - s);
            if !g.is_finite() {
                return Err(Error::numerical("non-finite LML gradient"));
            }
            m[i] = b1 * m[i] + (S::one() - b1) * g;
            v[i] = b2 * v[i] + (S::one() - b2) * g * g;
            let mh = m[i] / (S::one() - b1.powf(S::of(t)));
            let vh = v[i] / (S::one() - b2.powf(S::of(t)));
            raw[i] += lr * mh / (vh.sqrt() + eps);
        }
        let hp = to_hp(&raw);
        let lml = log_marginal(kernel, x_norm, y_std, &hp)?;
        if lml.is_finite() && lml > best_lml {
            best_lml = lml;
            best_hp = hp;
        }
    }
    Ok((best_hp, best_lml))
}

/// Fits hyperparameters by multi-start gradient ascent (4 deterministic
/// starts) of the log marginal likelihood.
pub fn gp_fit<S: Scalar>(x: &Mat<S>, y: &[S], domain: &[(S, S)]) -> Result<FittedGp<S>> {
    let n = y.len();
    if n < 2 {
        return Err(Error::domain("gp_fit needs at least two observations"));
    }
    if x.nrows() != n || x.ncols() != domain.len() {
        return Err(Error::domain("gp_fit shape mismatch"));
    }
    let kernel = KernelSpec::matern32();
    let x_norm = normalise_x(x, domain);
    let y_mean = y.iter().copied().sum::<S>() / S::of(n);
    let var = y.iter().map(|&v| (v - y_mean) * (v - y_mean)).sum::<S>() / S::of(n);
    // constant targets degrade to a noise-dominated fit around the mean
    let y_scale = if var.sqrt() > S::c(1e-12) { var.sqrt() } else { S::one() };
    let y_std: Vec<S> = y.iter().map(|&v| (v - y_mean) / y_scale).collect();

    let starts = [
        GpHyperparams { lengthscale: S::c(0.2), signal_variance: S::one(), noise_variance: S::c(1e-4).max(S::c(HP_LO)) },
        GpHyperparams { lengthscale: S::c(0.5), signal_variance: S::one(), noise_variance: S::c(1e-2) },
        GpHyperparams { lengthscale: S::one(), signal_variance: S::c(2.0), noise_variance: S::c(HP_LO) },
        GpHyperparams { lengthscale: S::c(0.1), signal_variance: S::c(0.5), noise_variance: S::c(1e-2) },
    ];
    let mut best: Option<(GpHyperparams<S>, S)> = None;
    for start in starts {
        let (hp, lml) = fit_from_start(&kernel, &x_norm, &y_std, start, 120)?;
        if best.as_ref().map_or(true, |(_, b)| lml > *b) {
            best = Some((hp, lml));
        }
    }
    let (hyper, log_ml) = best.expect("at least one start");
    FittedGp::with_hyperparams_inner(kernel, x_norm, y_std, y_mean, y_scale, domain.to_vec(), hyper, log_ml)
}

impl<S: Scalar> FittedGp<S> {
    /// Builds a GP with fixed hyperparameters (no fitting); used by tests
    /// and by callers that manage their own hyperparameter schedule.
    pub fn with_hyperparams(
        x: &Mat<S>,
        y: &[S],
        domain: &[(S, S)],
        hyper: GpHyperparams<S>,
    ) -> Result<Self> {
        hyper.validate()?;
        let kernel = KernelSpec::matern32();
        let x_norm = normalise_x(x, domain);
        let n = y.len();
        let y_mean = y.iter().copied().sum::<S>() / S::of(n);
        let var = y.iter().map(|&v| (v - y_mean) * (v - y_mean)).sum::<S>() / S::of(n);
        let y_scale = if var.sqrt() > S::c(1e-12) { var.sqrt() } else { S::one() };
        let y_std: Vec<S> = y.iter().map(|&v| (v - y_mean) / y_scale).collect();
        let lml = log_marginal(&kernel, &x_norm, &y_std, &hyper)?;
        Self::with_hyperparams_inner(kernel, x_norm, y_std, y_mean, y_scale, domain.to_vec(), hyper, lml)
    }

    #[allow(clippy::too_many_arguments)]
    fn with_hyperparams_inner(
        kernel: KernelSpec<S>,
        x_norm: Mat<S>,
        y_std: Vec<S>,
        y_mean: S,
        y_scale: S,
        domain: Vec<(S, S)>,
        hyper: GpHyperparams<S>,
        log_ml: S,
    ) -> Result<Self> {
        let k = train_cov(&kernel, &x_norm, &hyper)?;
        let chol = cholesky_escalate(&k, S::c(1e-12))?;
        let alpha = chol.solve_vec(&y_std);
        Ok(FittedGp {
            hyper,
            x_norm,
            y_std,
            y_mean,
            y_scale,
            domain,
            chol,
            alpha,
            kernel,
            log_marginal: log_ml,
        })
    }

    pub fn n_obs(&self) -> usize {
        self.y_std.len()
    }

    /// Posterior mean and variance at a raw-space point, in raw units.
    pub fn predict(&self, x_raw: &[S]) -> Result<(S, S)> {
        if x_raw.len() != self.domain.len() {
            return Err(Error::domain("predict dimension mismatch"));
        }
        let xq: Vec<S> = x_raw
            .iter()
            .zip(self.domain.iter())
            .map(|(&v, &(lo, hi))| (v - lo) / (hi - lo))
            .collect();
        let n = self.n_obs();
        let mut kq = Vec::with_capacity(n);
        for i in 0..n {
            let r = Mat::row_dist(self.x_norm.row(i), &xq) / self.hyper.lengthscale;
            kq.push(self.hyper.signal_variance * self.kernel.kernel_value(r)?);
        }
        let mean_std = dot(&kq, &self.alpha);
        let w = self.chol.solve_vec(&kq);
        let var_std = (self.hyper.signal_variance - dot(&kq, &w)).max(S::zero());
        Ok((mean_std * self.y_scale + self.y_mean, var_std * self.y_scale * self.y_scale))
    }

    /// Best (lowest) observed raw value.
    pub fn best_observed(&self) -> S {
        self.y_std
            .iter()
            .map(|&v| v * self.y_scale + self.y_mean)
            .fold(S::infinity(), S::min)
    }

    /// Information gain 1/2 log |I + K_signal / noise| of the fitted model.
    pub fn info_gain(&self) -> Result<S> {
        let n = self.n_obs();
        let mut m = Mat::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                let r = Mat::row_dist(self.x_norm.row(i), self.x_norm.row(j)) / self.hyper.lengthscale;
                let v = self.hyper.signal_variance * self.kernel.kernel_value(r)? / self.hyper.noise_variance;
                m[(i, j)] = v + if i == j { S::one() } else { S::zero() };
            }
        }
        let chol = cholesky_escalate(&m, S::c(1e-12))?;
        Ok(chol.logdet() * S::c(0.5))
    }
}

/// EI = (best - mu) Phi(z) + sd phi(z) with z = (best - mu)/sd; the sd = 0
/// limit is max(best - mu, 0).
pub fn expected_improvement<S: Scalar>(mu: S, sd: S, best: S) -> Result<S> {
    if sd < S::zero() || !sd.is_finite() {
        return Err(Error::domain("expected_improvement requires sd >= 0"));
    }
    if sd == S::zero() {
        return Ok((best - mu).max(S::zero()));
    }
    let z = (best - mu) / sd;
    Ok(((best - mu) * norm_cdf(z) + sd * norm_pdf(z)).max(S::zero()))
}

#[derive(Debug, Clone, Copy)]
pub struct EiSearchConfig {
    /// Low-discrepancy candidates over the whole domain.
    pub candidates: usize,
    /// Gaussian perturbations added around each of the best anchors.
    pub anchors: usize,
    pub perturbations_per_anchor: usize,
}

impl Default for EiSearchConfig {
    fn default() -> Self {
        EiSearchConfig { candidates: 2048, anchors: 3, perturbations_per_anchor: 8 }
    }
}

/// argmax of EI over a deterministic candidate set: `candidates` Halton
/// points plus perturbations of the best observations. Ties go to the
/// earliest candidate.
pub fn select_ei<S: Scalar, R: Rng + ?Sized>(
    gp: &FittedGp<S>,
    domain: &[(S, S)],
    cfg: EiSearchConfig,
    rng: &mut R,
) -> Result<Vec<S>> {
    if cfg.candidates == 0 {
        return Err(Error::domain("select_ei needs at least one candidate"));
    }
    let d = domain.len();
    let shift: Vec<S> = (0..d).map(|_| S::unit_uniform(rng)).collect();
    let mut cands: Vec<Vec<S>> = (0..cfg.candidates)
        .map(|i| {
            let u = halton_point(i, &shift);
            (0..d).map(|j| domain[j].0 + u[j] * (domain[j].1 - domain[j].0)).collect()
        })
        .collect();
    // perturbations of the lowest observations
    let mut order: Vec<usize> = (0..gp.n_obs()).collect();
    order.sort_by(|&a, &b| gp.y_std[a].partial_cmp(&gp.y_std[b]).unwrap().then(a.cmp(&b)));
    for &i in order.iter().take(cfg.anchors) {
        for _ in 0..cfg.perturbations_per_anchor {
            let p: Vec<S> = (0..d)
                .map(|j| {
                    let (lo, hi) = domain[j];
                    let raw = gp.x_norm[(i, j)] * (hi - lo) + lo;
                    let jitter = S::standard_normal(rng) * S::c(0.01) * (hi - lo);
                    (raw + jitter).max(lo).min(hi)
                })
                .collect();
            cands.push(p);
        }
    }
    let best = gp.best_observed();
    let mut best_ei = S::neg_infinity();
    let mut best_x = cands[0].clone();
    for c in &cands {
        let (mu, var) = gp.predict(c)?;
        let ei = expected_improvement(mu, var.max(S::zero()).sqrt(), best)?;
        if ei > best_ei {
            best_ei = ei;
            best_x = c.clone();
        }
    }
    Ok(best_x)
}
