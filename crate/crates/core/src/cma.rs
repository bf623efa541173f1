//! (mu/mu_w, lambda)-CMA-ES with full or diagonal (separable) covariance.
//!
//! Learning rates and recombination weights are the standard defaults from
//! Hansen's tutorial; the separable variant scales `c1` and `cmu` by
//! `(n + 2) / 3` and keeps only the diagonal of `C`, so one generation costs
//! `O(lambda * n)`.
//!
//! Termination:
//! * `Tolerance`: over the last `10 + ceil(30 n / lambda)` generations the
//!   per-generation best values, together with the current generation's
//!   values, span less than `f_tolerance`;
//! * `Budget`: another generation would exceed `max_evaluations`;
//! * `Stagnation`: the step size collapsed or `C` became ill-conditioned.
//!
//! On termination the final mean is evaluated once more and returned as the
//! best point if it is at least as good as every sampled candidate.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seeds::derive_seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CmaMode {
    #[default]
    Full,
    Separable,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CmaOptions {
    pub sigma0: f64,
    pub f_tolerance: f64,
    /// Evaluation budget; `None` means `500 * n`.
    pub max_evaluations: Option<usize>,
    /// Population size; `None` means `4 + floor(3 ln n)`.
    pub population: Option<usize>,
    pub mode: CmaMode,
    pub seed: u64,
}

impl Default for CmaOptions {
    fn default() -> Self {
        Self {
            sigma0: 0.5,
            f_tolerance: 1e-5,
            max_evaluations: None,
            population: None,
            mode: CmaMode::Full,
            seed: 0,
        }
    }
}

impl CmaOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma0 > 0.0 && self.sigma0.is_finite()) {
            return Err(Error::Config(format!("sigma0 must be positive, got {}", self.sigma0)));
        }
        if !(self.f_tolerance > 0.0) {
            return Err(Error::Config(format!(
                "f_tolerance must be positive, got {}",
                self.f_tolerance
            )));
        }
        if matches!(self.population, Some(l) if l < 2) {
            return Err(Error::Config("population must be at least 2".into()));
        }
        Ok(())
    }

    pub fn population_for(&self, n: usize) -> usize {
        self.population
            .unwrap_or_else(|| 4 + (3.0 * (n as f64).ln()).floor() as usize)
    }

    pub fn budget_for(&self, n: usize) -> usize {
        self.max_evaluations.unwrap_or(500 * n)
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        Self {
            seed,
            ..self.clone()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Termination {
    Tolerance,
    Budget,
    Stagnation,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CmaResult {
    pub x_best: Vec<f64>,
    pub f_best: f64,
    pub evaluations_used: usize,
    pub generations: usize,
    pub termination_reason: Termination,
    /// Best-so-far objective value after each generation.
    pub history: Vec<f64>,
}

/// Snapshot handed to the per-generation observer.
#[derive(Debug)]
pub struct GenerationInfo<'a> {
    pub generation: usize,
    pub evaluations: usize,
    pub mean: &'a [f64],
    pub sigma: f64,
    pub generation_best: f64,
    pub best_so_far: f64,
}

struct Strategy {
    weights: Vec<f64>,
    mu_eff: f64,
    c_sigma: f64,
    d_sigma: f64,
    c_c: f64,
    c_1: f64,
    c_mu: f64,
    chi_n: f64,
}

impl Strategy {
    fn new(n: usize, lambda: usize, mode: CmaMode) -> Self {
        let nf = n as f64;
        let mu = lambda / 2;
        let raw: Vec<f64> = (1..=mu)
            .map(|i| ((lambda as f64 + 1.0) / 2.0).ln() - (i as f64).ln())
            .collect();
        let sum: f64 = raw.iter().sum();
        let weights: Vec<f64> = raw.iter().map(|w| w / sum).collect();
        let mu_eff = 1.0 / weights.iter().map(|w| w * w).sum::<f64>();

        let c_sigma = (mu_eff + 2.0) / (nf + mu_eff + 5.0);
        let d_sigma = 1.0 + 2.0 * (((mu_eff - 1.0) / (nf + 1.0)).sqrt() - 1.0).max(0.0) + c_sigma;
        let c_c = (4.0 + mu_eff / nf) / (nf + 4.0 + 2.0 * mu_eff / nf);
        let mut c_1 = 2.0 / ((nf + 1.3).powi(2) + mu_eff);
        let mut c_mu = (1.0 - c_1)
            .min(2.0 * (mu_eff - 2.0 + 1.0 / mu_eff) / ((nf + 2.0).powi(2) + mu_eff));
        if mode == CmaMode::Separable {
            let scale = (nf + 2.0) / 3.0;
            c_1 = (c_1 * scale).min(1.0);
            c_mu = (c_mu * scale).min(1.0 - c_1);
        }
        let chi_n = nf.sqrt() * (1.0 - 1.0 / (4.0 * nf) + 1.0 / (21.0 * nf * nf));
        Self {
            weights,
            mu_eff,
            c_sigma,
            d_sigma,
            c_c,
            c_1,
            c_mu,
            chi_n,
        }
    }
}

/// Covariance representation: `C = B diag(d^2) B^T` (full) or `diag(d^2)`.
enum Covariance {
    Full {
        c: DMatrix<f64>,
        b: DMatrix<f64>,
        d: DVector<f64>,
        last_decomposition: usize,
    },
    Diagonal {
        c: Vec<f64>,
    },
}

impl Covariance {
    fn new(n: usize, mode: CmaMode) -> Self {
        match mode {
            CmaMode::Full => Covariance::Full {
                c: DMatrix::identity(n, n),
                b: DMatrix::identity(n, n),
                d: DVector::from_element(n, 1.0),
                last_decomposition: 0,
            },
            CmaMode::Separable => Covariance::Diagonal { c: vec![1.0; n] },
        }
    }

    /// `y = C^{1/2} z`.
    fn transform(&self, z: &[f64], y: &mut [f64]) {
        match self {
            Covariance::Full { b, d, .. } => {
                let n = z.len();
                y.fill(0.0);
                for j in 0..n {
                    let dz = d[j] * z[j];
                    let col = b.column(j);
                    for (yi, bij) in y.iter_mut().zip(col.iter()) {
                        *yi += bij * dz;
                    }
                }
            }
            Covariance::Diagonal { c } => {
                for ((yi, zi), ci) in y.iter_mut().zip(z).zip(c) {
                    *yi = ci.sqrt() * zi;
                }
            }
        }
    }

    /// `C^{-1/2} y` given the weighted mean of the `z` samples that produced it.
    fn whiten(&self, z_w: &[f64], out: &mut [f64]) {
        match self {
            Covariance::Full { b, .. } => {
                out.fill(0.0);
                for (j, zj) in z_w.iter().enumerate() {
                    let col = b.column(j);
                    for (oi, bij) in out.iter_mut().zip(col.iter()) {
                        *oi += bij * zj;
                    }
                }
            }
            Covariance::Diagonal { .. } => out.copy_from_slice(z_w),
        }
    }

    fn max_std(&self) -> f64 {
        match self {
            Covariance::Full { c, .. } => c.diagonal().iter().fold(0.0f64, |m, v| m.max(v.sqrt())),
            Covariance::Diagonal { c } => c.iter().fold(0.0f64, |m, v| m.max(v.sqrt())),
        }
    }

    fn condition(&self) -> f64 {
        let (lo, hi) = match self {
            Covariance::Full { d, .. } => d.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), v| {
                (lo.min(v * v), hi.max(v * v))
            }),
            Covariance::Diagonal { c } => c
                .iter()
                .fold((f64::INFINITY, 0.0f64), |(lo, hi), &v| (lo.min(v), hi.max(v))),
        };
        hi / lo
    }
}

/// Minimizes `objective` starting from `x0`.
pub fn minimize<F>(objective: F, x0: &[f64], opts: &CmaOptions) -> Result<CmaResult>
where
    F: FnMut(&[f64]) -> f64,
{
    minimize_observed(objective, x0, opts, |_| {})
}

/// [`minimize`] with a callback invoked after every generation.
pub fn minimize_observed<F, O>(
    mut objective: F,
    x0: &[f64],
    opts: &CmaOptions,
    mut observer: O,
) -> Result<CmaResult>
where
    F: FnMut(&[f64]) -> f64,
    O: FnMut(&GenerationInfo<'_>),
{
    opts.validate()?;
    let n = x0.len();
    if n == 0 {
        return Err(Error::Config("CMA-ES needs at least one dimension".into()));
    }
    let lambda = opts.population_for(n);
    let budget = opts.budget_for(n);
    let s = Strategy::new(n, lambda, opts.mode);
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);

    let mut mean = x0.to_vec();
    let mut sigma = opts.sigma0;
    let mut p_sigma = vec![0.0; n];
    let mut p_c = vec![0.0; n];
    let mut cov = Covariance::new(n, opts.mode);

    let mut zs = vec![vec![0.0; n]; lambda];
    let mut ys = vec![vec![0.0; n]; lambda];
    let mut xs = vec![vec![0.0; n]; lambda];
    let mut fs = vec![0.0; lambda];
    let mut order: Vec<usize> = (0..lambda).collect();
    let mut y_w = vec![0.0; n];
    let mut z_w = vec![0.0; n];
    let mut whitened = vec![0.0; n];

    let mut x_best = x0.to_vec();
    let mut f_best = f64::INFINITY;
    let mut evaluations = 0usize;
    let mut history = Vec::new();
    let mut gen_bests: Vec<f64> = Vec::new();
    let window = 10 + (30 * n).div_ceil(lambda);
    let tol_x = 1e-12 * opts.sigma0;

    let mut evaluate = |x: &[f64], evaluations: &mut usize| -> Result<f64> {
        let f = objective(x);
        *evaluations += 1;
        if !f.is_finite() {
            return Err(Error::NonFiniteObjective {
                value: f,
                evaluation: *evaluations,
            });
        }
        Ok(f)
    };

    let reason = loop {
        if evaluations + lambda > budget {
            break Termination::Budget;
        }

        for k in 0..lambda {
            for zi in zs[k].iter_mut() {
                *zi = rng.sample(StandardNormal);
            }
            cov.transform(&zs[k], &mut ys[k]);
            for ((xi, mi), yi) in xs[k].iter_mut().zip(&mean).zip(&ys[k]) {
                *xi = mi + sigma * yi;
            }
        }
        for k in 0..lambda {
            fs[k] = evaluate(&xs[k], &mut evaluations)?;
            if fs[k] < f_best {
                f_best = fs[k];
                x_best.copy_from_slice(&xs[k]);
            }
        }
        order.sort_by(|&a, &b| fs[a].total_cmp(&fs[b]).then(a.cmp(&b)));

        y_w.fill(0.0);
        z_w.fill(0.0);
        for (w, &k) in s.weights.iter().zip(&order) {
            for i in 0..n {
                y_w[i] += w * ys[k][i];
                z_w[i] += w * zs[k][i];
            }
        }
        for (mi, yi) in mean.iter_mut().zip(&y_w) {
            *mi += sigma * yi;
        }

        cov.whiten(&z_w, &mut whitened);
        let cs = (s.c_sigma * (2.0 - s.c_sigma) * s.mu_eff).sqrt();
        for (p, w) in p_sigma.iter_mut().zip(&whitened) {
            *p = (1.0 - s.c_sigma) * *p + cs * w;
        }
        let ps_norm = p_sigma.iter().map(|v| v * v).sum::<f64>().sqrt();
        let generation = gen_bests.len();
        let h_sigma = ps_norm
            / (1.0 - (1.0 - s.c_sigma).powi(2 * (generation as i32 + 1))).sqrt()
            < (1.4 + 2.0 / (n as f64 + 1.0)) * s.chi_n;
        let cc = (s.c_c * (2.0 - s.c_c) * s.mu_eff).sqrt();
        for (p, y) in p_c.iter_mut().zip(&y_w) {
            *p = (1.0 - s.c_c) * *p + if h_sigma { cc * y } else { 0.0 };
        }
        let delta = if h_sigma { 0.0 } else { s.c_c * (2.0 - s.c_c) };
        let decay = 1.0 - s.c_1 - s.c_mu + s.c_1 * delta;

        match &mut cov {
            Covariance::Full {
                c,
                b,
                d,
                last_decomposition,
            } => {
                for j in 0..n {
                    for i in j..n {
                        let mut rank_mu = 0.0;
                        for (w, &k) in s.weights.iter().zip(&order) {
                            rank_mu += w * ys[k][i] * ys[k][j];
                        }
                        let v = decay * c[(i, j)] + s.c_1 * p_c[i] * p_c[j] + s.c_mu * rank_mu;
                        c[(i, j)] = v;
                        c[(j, i)] = v;
                    }
                }
                let gap = (lambda as f64 / ((s.c_1 + s.c_mu) * n as f64 * 10.0)).max(1.0);
                if (evaluations - *last_decomposition) as f64 >= gap * lambda as f64 {
                    *last_decomposition = evaluations;
                    let eig = SymmetricEigen::new(c.clone());
                    *b = eig.eigenvectors;
                    *d = eig.eigenvalues.map(|v| v.max(1e-300).sqrt());
                }
            }
            Covariance::Diagonal { c } => {
                for i in 0..n {
                    let mut rank_mu = 0.0;
                    for (w, &k) in s.weights.iter().zip(&order) {
                        rank_mu += w * ys[k][i] * ys[k][i];
                    }
                    c[i] = decay * c[i] + s.c_1 * p_c[i] * p_c[i] + s.c_mu * rank_mu;
                }
            }
        }

        sigma *= ((s.c_sigma / s.d_sigma) * (ps_norm / s.chi_n - 1.0)).exp();

        let gen_best = fs[order[0]];
        gen_bests.push(gen_best);
        history.push(f_best);
        observer(&GenerationInfo {
            generation,
            evaluations,
            mean: &mean,
            sigma,
            generation_best: gen_best,
            best_so_far: f_best,
        });

        if gen_bests.len() >= window {
            let recent = &gen_bests[gen_bests.len() - window..];
            let (lo, hi) = recent
                .iter()
                .chain(fs.iter())
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                    (lo.min(v), hi.max(v))
                });
            if hi - lo < opts.f_tolerance {
                break Termination::Tolerance;
            }
        }
        if !sigma.is_finite()
            || sigma * cov.max_std() < tol_x
            || cov.condition() > 1e14
            || mean.iter().any(|m| !m.is_finite())
        {
            break Termination::Stagnation;
        }
    };

    if evaluations < budget && mean.iter().all(|m| m.is_finite()) {
        let f_mean = evaluate(&mean, &mut evaluations)?;
        if f_mean <= f_best {
            f_best = f_mean;
            x_best.copy_from_slice(&mean);
        }
    }

    Ok(CmaResult {
        x_best,
        f_best,
        evaluations_used: evaluations,
        generations: gen_bests.len(),
        termination_reason: reason,
        history,
    })
}

/// Seed used for restart `index`; restart 0 uses `base` unchanged.
pub fn restart_seed(base: u64, index: usize) -> u64 {
    if index == 0 {
        base
    } else {
        derive_seed(&[base, index as u64])
    }
}

/// Runs [`minimize`] `n_restarts` times from independently sampled starts
/// and returns the run with the lowest `f_best`. `evaluations_used` of the
/// returned result counts all restarts.
///
/// Restart `i` runs with seed `restart_seed(opts.seed, i)`, and its start
/// point is drawn by `x0_sampler` from a `ChaCha8Rng` seeded with
/// `derive_seed(&[restart_seed(opts.seed, i)])`.
pub fn minimize_restarts<F, S>(
    mut objective: F,
    mut x0_sampler: S,
    opts: &CmaOptions,
    n_restarts: usize,
) -> Result<CmaResult>
where
    F: FnMut(&[f64]) -> f64,
    S: FnMut(&mut ChaCha8Rng) -> Vec<f64>,
{
    if n_restarts == 0 {
        return Err(Error::Config("n_restarts must be at least 1".into()));
    }
    let mut best: Option<CmaResult> = None;
    let mut total = 0;
    for i in 0..n_restarts {
        let seed = restart_seed(opts.seed, i);
        let mut start_rng = start_rng(seed);
        let x0 = x0_sampler(&mut start_rng);
        let run = minimize(&mut objective, &x0, &opts.with_seed(seed))?;
        total += run.evaluations_used;
        if best.as_ref().is_none_or(|b| run.f_best < b.f_best) {
            best = Some(run);
        }
    }
    let mut best = best.expect("at least one restart");
    best.evaluations_used = total;
    Ok(best)
}

/// Random stream used to draw the start point of a run with `seed`.
pub fn start_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(&[seed]))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sphere(x: &[f64]) -> f64 {
        x.iter().map(|v| v * v).sum()
    }

    #[test]
    fn default_population() {
        let o = CmaOptions::default();
        assert_eq!(o.population_for(1), 4);
        assert_eq!(o.population_for(10), 10);
        assert_eq!(o.population_for(20), 12);
        assert_eq!(o.budget_for(8), 4000);
    }

    #[test]
    fn rejects_bad_options() {
        let x0 = [1.0];
        for opts in [
            CmaOptions { sigma0: 0.0, ..Default::default() },
            CmaOptions { f_tolerance: 0.0, ..Default::default() },
            CmaOptions { population: Some(1), ..Default::default() },
        ] {
            assert!(matches!(minimize(sphere, &x0, &opts), Err(Error::Config(_))));
        }
        assert!(matches!(
            minimize(sphere, &[], &CmaOptions::default()),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn non_finite_objective_aborts() {
        let r = minimize(|x: &[f64]| if x[0] > 0.0 { f64::NAN } else { 0.0 }, &[0.0, 0.0], &CmaOptions::default());
        assert!(matches!(r, Err(Error::NonFiniteObjective { .. })));
    }

    #[test]
    fn constant_objective_stops_by_tolerance() {
        let mut last_mean = Vec::new();
        let r = minimize_observed(|_: &[f64]| 3.0, &[0.1, 0.2, 0.3], &CmaOptions::default(), |g| {
            last_mean = g.mean.to_vec();
        })
        .unwrap();
        assert_eq!(r.termination_reason, Termination::Tolerance);
        assert_eq!(r.f_best, 3.0);
        assert_eq!(r.x_best, last_mean);
    }

    #[test]
    fn separable_sphere() {
        let opts = CmaOptions {
            mode: CmaMode::Separable,
            f_tolerance: 1e-14,
            max_evaluations: Some(50_000),
            seed: 3,
            ..Default::default()
        };
        let r = minimize(sphere, &[0.5; 30], &opts).unwrap();
        assert!(r.f_best < 1e-8, "{}", r.f_best);
    }

    #[test]
    fn budget_is_respected() {
        let opts = CmaOptions {
            max_evaluations: Some(100),
            f_tolerance: 1e-30,
            ..Default::default()
        };
        let r = minimize(sphere, &[1.0; 5], &opts).unwrap();
        assert_eq!(r.termination_reason, Termination::Budget);
        assert!(r.evaluations_used <= 100);
    }

    #[test]
    fn restarts_require_at_least_one_run() {
        let r = minimize_restarts(sphere, |_| vec![1.0], &CmaOptions::default(), 0);
        assert!(r.is_err());
    }
}
