//! Variational latent Gaussian process over the ordinal warping.
//!
//! The approximate posterior q(f_n) = N(mu_f, diag(sigma_diag)) is
//! parameterised directly at the warped inputs. Training maximises the
//! evidence lower bound (expected ordinal log-likelihood minus the KL
//! divergence to the GP prior) over the variational parameters, the input
//! warping increments, the bin increments, and the likelihood noise, with
//! box constraints handled by logistic transformations and the per-refit
//! movement cap on retained latent coordinates enforced directly.

use crate::error::{Error, Result};
use crate::kernel::KernelSpec;
use crate::likelihood::{expected_log_lik, ordinal_log_lik_parts};
use crate::linalg::{cholesky_escalate, Chol, Mat};
use crate::quadrature::gauss_hermite;
use crate::scalar::Scalar;
use crate::warp::{RankedDataset, WarpState};

/// Mean vector and the diagonal of the covariance of q(f_n).
#[derive(Debug, Clone)]
pub struct VariationalState<S> {
    pub mu_f: Vec<S>,
    pub sigma_diag: Vec<S>,
}

impl<S: Scalar> VariationalState<S> {
    pub fn validate(&self, n: usize) -> Result<()> {
        if self.mu_f.len() != n || self.sigma_diag.len() != n {
            return Err(Error::domain("variational state length mismatch"));
        }
        if self.sigma_diag.iter().any(|&v| !(v > S::zero())) {
            return Err(Error::domain("sigma_diag must be strictly positive"));
        }
        Ok(())
    }
}

/// Finite-dimensional Gaussian returned by the closed-form posterior.
#[derive(Debug, Clone)]
pub struct PosteriorGaussian<S> {
    pub mean: Vec<S>,
    pub cov: Mat<S>,
}

impl<S: Scalar> PosteriorGaussian<S> {
    pub fn variances(&self) -> Vec<S> {
        (0..self.mean.len()).map(|i| self.cov[(i, i)]).collect()
    }
}

/// Midpoint of a bin's finite edges; extreme bins fall back to the adjacent
/// finite edge shifted by one, and the single unbounded bin to zero.
pub fn bin_midpoint<S: Scalar>(edges: &[S], bin: usize) -> S {
    let lo = edges[bin - 1];
    let hi = edges[bin];
    match (lo.is_finite(), hi.is_finite()) {
        (true, true) => (lo + hi) * S::c(0.5),
        (false, true) => hi - S::one(),
        (true, false) => lo + S::one(),
        (false, false) => S::zero(),
    }
}

#[derive(Debug, Clone)]
struct Cache<S> {
    latent: Mat<S>,
    bins: Vec<usize>,
    kmat: Mat<S>,
    chol: Chol<S>,
    kinv: Mat<S>,
}

/// The latent model: kernel, warp, variational state, ranked data, and the
/// derived quantities (latent coordinates, prior covariance, factorisation).
#[derive(Debug, Clone)]
pub struct LatentModel<S: Scalar> {
    pub kernel: KernelSpec<S>,
    pub warp: WarpState<S>,
    pub variational: VariationalState<S>,
    pub data: RankedDataset<S>,
    pub quad_order: usize,
    cache: Cache<S>,
}

/// What `insert_observation` did, consumed by the next training call.
#[derive(Debug, Clone)]
pub struct InsertReport {
    /// Row index of the new observation.
    pub new_row: usize,
    /// Per dimension, the index of the first of the two half-increments.
    pub split_positions: Vec<usize>,
}

/// Movement constraint applied to retained latent coordinates during a
/// refit: every coordinate of every non-exempt row must stay within
/// `per_coord_cap` of `reference`.
#[derive(Debug, Clone)]
pub struct MovementGuard<S> {
    pub reference: Mat<S>,
    pub per_coord_cap: S,
    pub exempt_row: Option<usize>,
    /// Increments created by the latest insert; these get in-cell freedom
    /// instead of the movement box.
    pub fresh_split: Option<Vec<usize>>,
}

#[derive(Debug, Clone)]
pub struct TrainReport<S> {
    pub initial_elbo: S,
    pub final_elbo: S,
    pub steps: usize,
    /// Largest per-coordinate movement of a retained point, if guarded.
    pub max_coord_movement: S,
    /// Largest Euclidean movement of a retained point, if guarded.
    pub max_l2_movement: S,
}

/// ELBO gradient with respect to the model-space parameters.
#[derive(Debug, Clone)]
pub struct ElboGradient<S> {
    pub mu_f: Vec<S>,
    pub sigma_diag: Vec<S>,
    /// Same layout as `WarpState::input_deltas`; entry 0 of each dimension
    /// is the pinned zero increment and carries a zero gradient.
    pub input_deltas: Vec<Vec<S>>,
    pub bin_increments: Vec<S>,
    pub noise_sigma: S,
}

impl<S: Scalar> LatentModel<S> {
    pub fn new(
        kernel: KernelSpec<S>,
        warp: WarpState<S>,
        variational: VariationalState<S>,
        data: RankedDataset<S>,
        quad_order: usize,
    ) -> Result<Self> {
        variational.validate(data.len())?;
        warp.validate()?;
        let cache = Self::build_cache(&kernel, &warp, &data)?;
        Ok(LatentModel { kernel, warp, variational, data, quad_order, cache })
    }

    /// Fresh model with the default warp initialisation and variational
    /// means at the bin midpoints of each observation's output rank.
    pub fn init(kernel: KernelSpec<S>, data: RankedDataset<S>, quad_order: usize) -> Result<Self> {
        let n = data.len();
        let warp = WarpState::init(n, data.dim())?;
        let edges = warp.edges()?;
        let mu_f: Vec<S> =
            data.output_ranks().iter().map(|&r| bin_midpoint(&edges, r)).collect();
        let sigma_diag = vec![S::c(0.5); n];
        Self::new(kernel, warp, VariationalState { mu_f, sigma_diag }, data, quad_order)
    }

    fn build_cache(
        kernel: &KernelSpec<S>,
        warp: &WarpState<S>,
        data: &RankedDataset<S>,
    ) -> Result<Cache<S>> {
        let (latent, bins) = warp.latent_coordinates(data)?;
        let kmat = kernel.cov_matrix(&latent)?;
        let chol = cholesky_escalate(&kmat, kernel.jitter)?;
        let kinv = chol.inverse();
        Ok(Cache { latent, bins, kmat, chol, kinv })
    }

    fn refresh_cache(&mut self) -> Result<()> {
        self.cache = Self::build_cache(&self.kernel, &self.warp, &self.data)?;
        Ok(())
    }

    pub fn n_obs(&self) -> usize {
        self.data.len()
    }

    pub fn dim(&self) -> usize {
        self.data.dim()
    }

    pub fn latent(&self) -> &Mat<S> {
        &self.cache.latent
    }

    pub fn bins(&self) -> &[usize] {
        &self.cache.bins
    }

    pub fn prior_cov(&self) -> &Mat<S> {
        &self.cache.kmat
    }

    /// Recomputes everything from (warp, data) and compares to the cache.
    pub fn verify_cache(&self, tol: S) -> Result<()> {
        let fresh = Self::build_cache(&self.kernel, &self.warp, &self.data)?;
        let n = self.n_obs();
        for i in 0..n {
            for j in 0..self.dim() {
                if (fresh.latent[(i, j)] - self.cache.latent[(i, j)]).abs() > tol {
                    return Err(Error::internal("cache latent coordinates stale"));
                }
            }
            for j in 0..n {
                if (fresh.kmat[(i, j)] - self.cache.kmat[(i, j)]).abs() > tol {
                    return Err(Error::internal("cache covariance stale"));
                }
            }
        }
        Ok(())
    }

    /// KL[q || p] using the cached factorisation.
    fn kl_cached(&self) -> S {
        let n = self.n_obs();
        let mu = &self.variational.mu_f;
        let v = &self.variational.sigma_diag;
        let alpha = self.cache.chol.solve_vec(mu);
        let quad = crate::linalg::dot(mu, &alpha);
        let mut tr = S::zero();
        let mut logdet_sigma = S::zero();
        for i in 0..n {
            tr += v[i] * self.cache.kinv[(i, i)];
            logdet_sigma += v[i].ln();
        }
        (tr + quad - S::of(n) + self.cache.chol.logdet() - logdet_sigma) * S::c(0.5)
    }

    /// Evidence lower bound of the current state.
    pub fn elbo(&self) -> Result<S> {
        let edges = self.warp.edges()?;
        let mut lik = S::zero();
        for i in 0..self.n_obs() {
            lik += expected_log_lik(
                self.variational.mu_f[i],
                self.variational.sigma_diag[i],
                self.cache.bins[i],
                &edges,
                self.warp.noise_sigma,
                self.quad_order,
            )?;
        }
        Ok(lik - self.kl_cached())
    }

    /// Closed-form posterior at latent query points (rows of `queries`):
    /// mean k_q^T K^-1 mu_f and covariance
    /// k(.,.) + k_q^T K^-1 (Sigma - K) K^-1 k_q.
    pub fn posterior_at(&self, queries: &Mat<S>) -> Result<PosteriorGaussian<S>> {
        let n = self.n_obs();
        let m = queries.nrows();
        if queries.ncols() != self.dim() {
            return Err(Error::domain("posterior query dimension mismatch"));
        }
        if queries.as_slice().iter().any(|v| !v.is_finite()) {
            return Err(Error::domain("posterior query must be finite"));
        }
        // cross covariances, one column per query
        let mut kq: Vec<Vec<S>> = Vec::with_capacity(m);
        for q in 0..m {
            let mut col = Vec::with_capacity(n);
            for i in 0..n {
                let r = Mat::row_dist(self.cache.latent.row(i), queries.row(q));
                col.push(self.kernel.kernel_value(r)?);
            }
            kq.push(col);
        }
        let w: Vec<Vec<S>> = kq.iter().map(|c| self.cache.chol.solve_vec(c)).collect();
        let mean: Vec<S> =
            w.iter().map(|wq| crate::linalg::dot(wq, &self.variational.mu_f)).collect();

        // D = Sigma - K kept explicit so Sigma == K collapses to the prior
        // without round-off
        let mut d = Mat::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                let s = if i == j { self.variational.sigma_diag[i] } else { S::zero() };
                d[(i, j)] = s - self.cache.kmat[(i, j)];
            }
        }
        let kqq = self.kernel.cov_matrix(queries)?;
        let mut cov = Mat::zeros(m, m);
        // t_q = D w_q
        let t: Vec<Vec<S>> = w.iter().map(|wq| d.matvec(wq)).collect();
        for a in 0..m {
            for b in 0..m {
                cov[(a, b)] = kqq[(a, b)] + crate::linalg::dot(&w[a], &t[b]);
            }
        }
        for a in 0..m {
            for b in (a + 1)..m {
                let s = (cov[(a, b)] + cov[(b, a)]) * S::c(0.5);
                cov[(a, b)] = s;
                cov[(b, a)] = s;
            }
        }
        Ok(PosteriorGaussian { mean, cov })
    }

    /// Analytic ELBO gradient over every trainable parameter group.
    pub fn elbo_gradient(&self) -> Result<ElboGradient<S>> {
        let n = self.n_obs();
        let d = self.dim();
        let edges = self.warp.edges()?;
        let n_fin = edges.len() - 2; // finite edges
        let sigma = self.warp.noise_sigma;
        let (nodes, weights) = gauss_hermite::<S>(self.quad_order)?;
        let inv_sqrt_pi = S::c(0.5641895835477563);

        let mut g_mu = vec![S::zero(); n];
        let mut g_v = vec![S::zero(); n];
        let mut g_edges = vec![S::zero(); n_fin];
        let mut g_sigma = S::zero();

        // expected log-likelihood terms
        for i in 0..n {
            let mu = self.variational.mu_f[i];
            let var = self.variational.sigma_diag[i];
            let bin = self.cache.bins[i];
            let scale = (S::c(2.0) * var).sqrt();
            let mut acc_mu = S::zero();
            let mut acc_var = S::zero();
            let mut acc_lo = S::zero();
            let mut acc_hi = S::zero();
            let mut acc_sig = S::zero();
            for (&t, &wt) in nodes.iter().zip(weights.iter()) {
                let f = mu + scale * t;
                let parts = ordinal_log_lik_parts(f, bin, &edges, sigma)?;
                acc_mu += wt * parts.d_f;
                acc_var += wt * parts.d_f * t;
                acc_lo += wt * parts.d_lo_edge;
                acc_hi += wt * parts.d_hi_edge;
                acc_sig += wt * parts.d_sigma;
            }
            g_mu[i] += inv_sqrt_pi * acc_mu;
            // d f / d var = t / sqrt(2 var)
            g_v[i] += inv_sqrt_pi * acc_var / (S::c(2.0) * var).sqrt();
            g_sigma += inv_sqrt_pi * acc_sig;
            // edges[bin-1] and edges[bin] map to finite-edge indices bin-2, bin-1
            if bin >= 2 {
                g_edges[bin - 2] += inv_sqrt_pi * acc_lo;
            }
            if bin <= n_fin {
                g_edges[bin - 1] += inv_sqrt_pi * acc_hi;
            }
        }

        // KL term
        let mu = &self.variational.mu_f;
        let v = &self.variational.sigma_diag;
        let alpha = self.cache.chol.solve_vec(mu);
        let kinv = &self.cache.kinv;
        for i in 0..n {
            g_mu[i] -= alpha[i];
            g_v[i] -= (kinv[(i, i)] - S::one() / v[i]) * S::c(0.5);
        }

        // dKL/dK = (K^-1 - K^-1 Sigma K^-1 - alpha alpha^T) / 2, entrywise
        let mut gk = Mat::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                let mut ksk = S::zero();
                for l in 0..n {
                    ksk += kinv[(i, l)] * v[l] * kinv[(l, j)];
                }
                gk[(i, j)] = (kinv[(i, j)] - ksk - alpha[i] * alpha[j]) * S::c(0.5);
            }
        }
        // chain through pairwise distances to latent coordinates:
        // dKL/ds_i = 2 sum_j gk_ij (k'(r)/r) (s_i - s_j)
        let latent = &self.cache.latent;
        let mut dkl_ds = Mat::zeros(n, d);
        for i in 0..n {
            for j in 0..n {
                if i == j {
                    continue;
                }
                let r = Mat::row_dist(latent.row(i), latent.row(j));
                let c = self.kernel.deriv_over_r(r);
                let w2 = S::c(2.0) * gk[(i, j)] * c;
                for l in 0..d {
                    dkl_ds[(i, l)] += w2 * (latent[(i, l)] - latent[(j, l)]);
                }
            }
        }
        // chain to increments: s_i depends on deltas[0..rank_i], so the
        // gradient of delta u collects every point ranked above u
        let mut g_deltas = vec![vec![S::zero(); n]; d];
        for l in 0..d {
            let ranks = &self.data.input_ranks()[l];
            let mut by_rank = vec![S::zero(); n];
            for i in 0..n {
                by_rank[ranks[i] - 1] = dkl_ds[(i, l)];
            }
            let mut suffix = S::zero();
            for u in (0..n).rev() {
                suffix += by_rank[u];
                g_deltas[l][u] = -suffix;
            }
            g_deltas[l][0] = S::zero(); // pinned increment
        }

        // chain finite-edge gradients to bin increments: edge e depends on
        // increments below it
        let n_inc = self.warp.bin_increments.len();
        let mut g_inc = vec![S::zero(); n_inc];
        let mut suffix = S::zero();
        for e in (0..n_fin).rev() {
            suffix += g_edges[e];
            if e >= 1 {
                g_inc[e - 1] = suffix;
            }
        }

        Ok(ElboGradient {
            mu_f: g_mu,
            sigma_diag: g_v,
            input_deltas: g_deltas,
            bin_increments: g_inc,
            noise_sigma: g_sigma,
        })
    }

    /// Adds an observation: ranks are recomputed, the containing latent
    /// increment of each dimension is split in half (retained coordinates do
    /// not move), a new bin increment is spliced at the output rank, and the
    /// variational state is extended.
    pub fn insert_observation(mut self, x_new: &[S], y_new: S) -> Result<(Self, InsertReport)> {
        let n = self.n_obs();
        let d = self.dim();
        if x_new.len() != d {
            return Err(Error::domain("insert_observation: dimension mismatch"));
        }
        if x_new.iter().any(|v| !v.is_finite()) || !y_new.is_finite() {
            return Err(Error::domain("insert_observation: non-finite input"));
        }
        // per-dimension insertion position among sorted coordinates
        let mut split_positions = Vec::with_capacity(d);
        for j in 0..d {
            let col: Vec<S> = (0..n).map(|i| self.data.x()[(i, j)]).collect();
            let lo = col.iter().cloned().fold(S::infinity(), S::min);
            let hi = col.iter().cloned().fold(S::neg_infinity(), S::max);
            let v = x_new[j];
            if !(v > lo && v < hi) {
                return Err(Error::domain(format!(
                    "new point coordinate {j} outside the observed range"
                )));
            }
            if col.iter().any(|&c| c == v) {
                return Err(Error::domain(format!(
                    "new point coincides with an existing coordinate in dimension {j}"
                )));
            }
            split_positions.push(col.iter().filter(|&&c| c < v).count());
        }
        // split input increments
        for j in 0..d {
            let k = split_positions[j];
            let half = self.warp.input_deltas[j][k] * S::c(0.5);
            self.warp.input_deltas[j][k] = half;
            self.warp.input_deltas[j].insert(k, half);
            // keep the pinned zero at the front
            if k == 0 {
                self.warp.input_deltas[j].swap(0, 1);
            }
        }
        self.data.push(x_new, y_new)?;
        let n_new = n + 1;

        // splice a bin increment at the new output rank
        let rho = *self.data.output_ranks().last().expect("non-empty");
        if n_new >= 3 {
            let old = &self.warp.bin_increments;
            let delta_new = if old.is_empty() {
                (self.warp.bin_bounds.1 * S::c(0.5)).min(S::one())
            } else {
                let mut sorted = old.clone();
                sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
                let median = crate::linalg::quantile(&sorted, S::c(0.5));
                median.min(self.warp.bin_bounds.1 * S::c(0.5))
            }
            .max(self.warp.bin_bounds.0);
            let pos = rho.saturating_sub(2).min(self.warp.bin_increments.len());
            self.warp.bin_increments.insert(pos, delta_new);
        }

        // extend the variational state
        let edges = self.warp.edges()?;
        self.variational.mu_f.push(bin_midpoint(&edges, rho));
        self.variational.sigma_diag.push(S::c(0.5));

        // the increment floor tracks the observation count
        self.warp.delta_bounds.0 = S::c(1e-3) / S::of(n_new);

        self.refresh_cache()?;
        let report = InsertReport { new_row: n, split_positions };
        Ok((self, report))
    }

    /// Trains the ELBO with Adam under logistic box constraints, returning
    /// the best iterate seen. With a movement guard, retained latent
    /// coordinates never leave the per-coordinate cap around the reference.
    pub fn train(
        self,
        steps: usize,
        learning_rate: S,
        movement: Option<&MovementGuard<S>>,
    ) -> Result<(Self, TrainReport<S>)> {
        train_model(self, steps, learning_rate, movement)
    }
}

/// KL divergence between N(mu, diag(sigma_diag)) and N(0, K), factoring K
/// internally (with jitter escalation from 1e-10).
pub fn kl_term<S: Scalar>(v: &VariationalState<S>, k: &Mat<S>) -> Result<S> {
    let n = k.nrows();
    v.validate(n)?;
    let chol = cholesky_escalate(k, S::c(1e-10))?;
    let alpha = chol.solve_vec(&v.mu_f);
    let quad = crate::linalg::dot(&v.mu_f, &alpha);
    let kinv = chol.inverse();
    let mut tr = S::zero();
    let mut logdet_sigma = S::zero();
    for i in 0..n {
        tr += v.sigma_diag[i] * kinv[(i, i)];
        logdet_sigma += v.sigma_diag[i].ln();
    }
    Ok((tr + quad - S::of(n) + chol.logdet() - logdet_sigma) * S::c(0.5))
}

// ---------------------------------------------------------------------------
// training internals
// ---------------------------------------------------------------------------

#[derive(Clone, Copy)]
enum ParamKind {
    MuF(usize),
    LogVar(usize),
    Delta { dim: usize, idx: usize },
    BinInc(usize),
    NoiseSigma,
}

struct ParamLayout<S> {
    kinds: Vec<ParamKind>,
    /// Box for logistic-mapped parameters, None for unconstrained / log ones.
    boxes: Vec<Option<(S, S)>>,
    delta_range: (usize, usize),
}

fn param_name(kind: ParamKind) -> String {
    match kind {
        ParamKind::MuF(i) => format!("mu_f[{i}]"),
        ParamKind::LogVar(i) => format!("sigma_diag[{i}]"),
        ParamKind::Delta { dim, idx } => format!("input_delta[dim={dim}][{idx}]"),
        ParamKind::BinInc(i) => format!("bin_increment[{i}]"),
        ParamKind::NoiseSigma => "noise_sigma".to_string(),
    }
}

fn logistic<S: Scalar>(t: S) -> S {
    S::one() / (S::one() + (-t).exp())
}

fn to_raw<S: Scalar>(value: S, lo: S, hi: S) -> S {
    let eps = S::c(1e-7);
    let frac = ((value - lo) / (hi - lo)).max(eps).min(S::one() - eps);
    (frac / (S::one() - frac)).ln()
}

fn from_raw<S: Scalar>(raw: S, lo: S, hi: S) -> S {
    lo + (hi - lo) * logistic(raw)
}

fn build_layout<S: Scalar>(
    model: &LatentModel<S>,
    movement: Option<&MovementGuard<S>>,
) -> ParamLayout<S> {
    let n = model.n_obs();
    let d = model.dim();
    let mut kinds = Vec::new();
    let mut boxes = Vec::new();
    for i in 0..n {
        kinds.push(ParamKind::MuF(i));
        boxes.push(None);
    }
    for i in 0..n {
        kinds.push(ParamKind::LogVar(i));
        boxes.push(None);
    }
    let delta_start = kinds.len();
    let (dmin, dmax) = model.warp.delta_bounds;
    let fresh = movement.and_then(|g| g.fresh_split.as_ref());
    for dim in 0..d {
        for idx in 1..n {
            let cur = model.warp.input_deltas[dim][idx];
            let floor = dmin.min(cur * S::c(0.5));
            let b = match movement {
                Some(guard) => {
                    let is_fresh = fresh
                        .map(|pos| idx == pos[dim] || idx == pos[dim] + 1)
                        .unwrap_or(false);
                    if is_fresh {
                        // in-cell freedom for the freshly split halves
                        (dmin.min(cur * S::c(0.25)), dmax.min(cur * S::c(4.0)))
                    } else {
                        let cap = guard.per_coord_cap;
                        ((cur - cap).max(floor), (cur + cap).min(dmax))
                    }
                }
                None => (floor, dmax),
            };
            kinds.push(ParamKind::Delta { dim, idx });
            boxes.push(Some(b));
        }
    }
    let delta_end = kinds.len();
    for i in 0..model.warp.bin_increments.len() {
        kinds.push(ParamKind::BinInc(i));
        boxes.push(Some(model.warp.bin_bounds));
    }
    kinds.push(ParamKind::NoiseSigma);
    boxes.push(Some(model.warp.sigma_bounds));
    ParamLayout { kinds, boxes, delta_range: (delta_start, delta_end) }
}

fn read_params<S: Scalar>(model: &LatentModel<S>, layout: &ParamLayout<S>) -> Vec<S> {
    layout
        .kinds
        .iter()
        .zip(layout.boxes.iter())
        .map(|(&kind, b)| match kind {
            ParamKind::MuF(i) => model.variational.mu_f[i],
            ParamKind::LogVar(i) => model.variational.sigma_diag[i].ln(),
            ParamKind::Delta { dim, idx } => {
                let (lo, hi) = b.expect("delta has a box");
                to_raw(model.warp.input_deltas[dim][idx], lo, hi)
            }
            ParamKind::BinInc(i) => {
                let (lo, hi) = b.expect("bin increment has a box");
                to_raw(model.warp.bin_increments[i], lo, hi)
            }
            ParamKind::NoiseSigma => {
                let (lo, hi) = b.expect("sigma has a box");
                to_raw(model.warp.noise_sigma, lo, hi)
            }
        })
        .collect()
}

fn write_params<S: Scalar>(model: &mut LatentModel<S>, layout: &ParamLayout<S>, raw: &[S]) {
    for ((&kind, b), &r) in layout.kinds.iter().zip(layout.boxes.iter()).zip(raw.iter()) {
        match kind {
            ParamKind::MuF(i) => model.variational.mu_f[i] = r,
            ParamKind::LogVar(i) => model.variational.sigma_diag[i] = r.exp(),
            ParamKind::Delta { dim, idx } => {
                let (lo, hi) = b.expect("delta has a box");
                model.warp.input_deltas[dim][idx] = from_raw(r, lo, hi);
            }
            ParamKind::BinInc(i) => {
                let (lo, hi) = b.expect("bin increment has a box");
                model.warp.bin_increments[i] = from_raw(r, lo, hi);
            }
            ParamKind::NoiseSigma => {
                let (lo, hi) = b.expect("sigma has a box");
                model.warp.noise_sigma = from_raw(r, lo, hi);
            }
        }
    }
}

/// Gradient of the ELBO with respect to the raw coordinates, chained
/// through the logistic / log transforms.
fn raw_gradient<S: Scalar>(
    model: &LatentModel<S>,
    layout: &ParamLayout<S>,
    raw: &[S],
) -> Result<Vec<S>> {
    let g = model.elbo_gradient()?;
    let mut out = Vec::with_capacity(raw.len());
    for ((&kind, b), &r) in layout.kinds.iter().zip(layout.boxes.iter()).zip(raw.iter()) {
        let val = match kind {
            ParamKind::MuF(i) => g.mu_f[i],
            ParamKind::LogVar(i) => g.sigma_diag[i] * model.variational.sigma_diag[i],
            ParamKind::Delta { dim, idx } => {
                let (lo, hi) = b.expect("delta has a box");
                let s = logistic(r);
                g.input_deltas[dim][idx] * (hi - lo) * s * (S::one() - s)
            }
            ParamKind::BinInc(i) => {
                let (lo, hi) = b.expect("bin increment has a box");
                let s = logistic(r);
                g.bin_increments[i] * (hi - lo) * s * (S::one() - s)
            }
            ParamKind::NoiseSigma => {
                let (lo, hi) = b.expect("sigma has a box");
                let s = logistic(r);
                g.noise_sigma * (hi - lo) * s * (S::one() - s)
            }
        };
        if !val.is_finite() {
            return Err(Error::NonFiniteGradient { param: param_name(kind) });
        }
        out.push(val);
    }
    Ok(out)
}

/// Latent coordinates implied by a raw delta assignment, without touching
/// the model. Used by the movement check before accepting a step.
fn deltas_to_latent<S: Scalar>(
    model: &LatentModel<S>,
    layout: &ParamLayout<S>,
    raw: &[S],
) -> Mat<S> {
    let n = model.n_obs();
    let d = model.dim();
    let mut deltas: Vec<Vec<S>> = model.warp.input_deltas.clone();
    for (i, (&kind, b)) in layout.kinds.iter().zip(layout.boxes.iter()).enumerate() {
        if let ParamKind::Delta { dim, idx } = kind {
            let (lo, hi) = b.expect("delta has a box");
            deltas[dim][idx] = from_raw(raw[i], lo, hi);
        }
    }
    let mut latent = Mat::zeros(n, d);
    for j in 0..d {
        let ranks = &model.data.input_ranks()[j];
        let mut cumsum = vec![S::zero(); n];
        let mut acc = S::zero();
        for (u, &dv) in deltas[j].iter().enumerate() {
            acc += dv;
            cumsum[u] = acc;
        }
        for i in 0..n {
            latent[(i, j)] = cumsum[ranks[i] - 1];
        }
    }
    latent
}

fn movement_ok<S: Scalar>(latent: &Mat<S>, guard: &MovementGuard<S>) -> bool {
    let tol = guard.per_coord_cap * S::c(1e-12);
    for i in 0..latent.nrows() {
        if Some(i) == guard.exempt_row {
            continue;
        }
        for j in 0..latent.ncols() {
            if (latent[(i, j)] - guard.reference[(i, j)]).abs() > guard.per_coord_cap + tol {
                return false;
            }
        }
    }
    true
}

fn train_model<S: Scalar>(
    mut model: LatentModel<S>,
    steps: usize,
    learning_rate: S,
    movement: Option<&MovementGuard<S>>,
) -> Result<(LatentModel<S>, TrainReport<S>)> {
    let initial_elbo = model.elbo()?;
    if steps == 0 {
        return Ok((
            model,
            TrainReport {
                initial_elbo,
                final_elbo: initial_elbo,
                steps: 0,
                max_coord_movement: S::zero(),
                max_l2_movement: S::zero(),
            },
        ));
    }
    if let Some(g) = movement {
        if g.reference.nrows() != model.n_obs() || g.reference.ncols() != model.dim() {
            return Err(Error::domain("movement reference shape mismatch"));
        }
    }
    let layout = build_layout(&model, movement);
    let mut raw = read_params(&model, &layout);
    write_params(&mut model, &layout, &raw);
    model.refresh_cache()?;
    // the transform round-trip can nudge values; rescore the true start
    let mut best_elbo = model.elbo()?;
    let mut best_raw = raw.clone();

    let beta1 = S::c(0.9);
    let beta2 = S::c(0.999);
    let eps = S::c(1e-8);
    let mut m1 = vec![S::zero(); raw.len()];
    let mut m2 = vec![S::zero(); raw.len()];
    let (ds, de) = layout.delta_range;

    for step in 1..=steps {
        let g = raw_gradient(&model, &layout, &raw)?;
        let t = S::of(step);
        let bc1 = S::one() - beta1.powf(t);
        let bc2 = S::one() - beta2.powf(t);
        let mut upd = vec![S::zero(); raw.len()];
        for i in 0..raw.len() {
            m1[i] = beta1 * m1[i] + (S::one() - beta1) * g[i];
            m2[i] = beta2 * m2[i] + (S::one() - beta2) * g[i] * g[i];
            let mhat = m1[i] / bc1;
            let vhat = m2[i] / bc2;
            // ascent direction
            upd[i] = learning_rate * mhat / (vhat.sqrt() + eps);
        }
        let mut cand = raw.clone();
        for i in 0..raw.len() {
            if i < ds || i >= de {
                cand[i] = raw[i] + upd[i];
            }
        }
        // delta coordinates obey the movement cap; halve their step until
        // the retained coordinates comply
        let mut scale = S::one();
        let mut applied = false;
        for _ in 0..40 {
            for i in ds..de {
                cand[i] = raw[i] + scale * upd[i];
            }
            match movement {
                Some(guard) => {
                    let latent = deltas_to_latent(&model, &layout, &cand);
                    if movement_ok(&latent, guard) {
                        applied = true;
                        break;
                    }
                    scale *= S::c(0.5);
                }
                None => {
                    applied = true;
                    break;
                }
            }
        }
        if !applied {
            for i in ds..de {
                cand[i] = raw[i];
            }
        }
        raw = cand;
        write_params(&mut model, &layout, &raw);
        model.refresh_cache()?;
        let e = model.elbo()?;
        if e.is_finite() && e > best_elbo {
            best_elbo = e;
            best_raw = raw.clone();
        }
    }

    write_params(&mut model, &layout, &best_raw);
    model.refresh_cache()?;
    let final_elbo = model.elbo()?;

    let (mut max_coord, mut max_l2) = (S::zero(), S::zero());
    if let Some(guard) = movement {
        for i in 0..model.n_obs() {
            if Some(i) == guard.exempt_row {
                continue;
            }
            let mut sq = S::zero();
            for j in 0..model.dim() {
                let dmove = (model.cache.latent[(i, j)] - guard.reference[(i, j)]).abs();
                max_coord = max_coord.max(dmove);
                sq += dmove * dmove;
            }
            max_l2 = max_l2.max(sq.sqrt());
        }
    }
    Ok((
        model,
        TrainReport {
            initial_elbo,
            final_elbo,
            steps,
            max_coord_movement: max_coord,
            max_l2_movement: max_l2,
        },
    ))
}
