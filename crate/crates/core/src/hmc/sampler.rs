//! Jittered-trajectory HMC with dual averaging and windowed metric adaptation.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{HmcError, LogDensity, PosteriorDraws, SamplerConfig};

/// Energy error (nats) beyond which a trajectory is declared divergent.
pub const DIVERGENCE_THRESHOLD: f64 = 1000.0;
const MAX_DIVERGENT_FRACTION: f64 = 0.10;

/// Per-chain sampler summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainStats {
    pub step_size: f64,
    pub inv_metric: Vec<f64>,
    /// Mean acceptance probability after warmup.
    pub accept_rate: f64,
    /// Divergent transitions after warmup.
    pub divergences: usize,
    pub leapfrog_steps: u64,
}

/// One leapfrog step under a diagonal inverse metric. `grad` holds the
/// gradient at `q` on entry and at the new `q` on exit; returns the new log density.
pub fn leapfrog<M: LogDensity + ?Sized>(
    target: &M,
    q: &mut [f64],
    p: &mut [f64],
    grad: &mut [f64],
    eps: f64,
    inv_metric: &[f64],
) -> f64 {
    for (pi, g) in p.iter_mut().zip(grad.iter()) {
        *pi += 0.5 * eps * g;
    }
    for ((qi, pi), m) in q.iter_mut().zip(p.iter()).zip(inv_metric) {
        *qi += eps * m * pi;
    }
    let lp = target.log_density_gradient(q, grad);
    for (pi, g) in p.iter_mut().zip(grad.iter()) {
        *pi += 0.5 * eps * g;
    }
    lp
}

/// Potential plus kinetic energy.
pub fn hamiltonian(log_density: f64, p: &[f64], inv_metric: &[f64]) -> f64 {
    -log_density + 0.5 * p.iter().zip(inv_metric).map(|(x, m)| x * x * m).sum::<f64>()
}

/// Central-difference gradient of `target` at `q`.
pub fn finite_difference_gradient<M: LogDensity + ?Sized>(target: &M, q: &[f64], h: f64) -> Vec<f64> {
    let mut x = q.to_vec();
    (0..q.len())
        .map(|i| {
            x[i] = q[i] + h;
            let hi = target.log_density(&x);
            x[i] = q[i] - h;
            let lo = target.log_density(&x);
            x[i] = q[i];
            (hi - lo) / (2.0 * h)
        })
        .collect()
}

/// Compare a handful of gradient coordinates against central differences.
fn spot_check_gradient<M: LogDensity + ?Sized>(target: &M, q: &[f64], rng: &mut ChaCha8Rng) -> Result<(), HmcError> {
    let dim = q.len();
    let mut grad = vec![0.0; dim];
    target.log_density_gradient(q, &mut grad);
    let mut x = q.to_vec();
    for _ in 0..dim.min(6) {
        let i = rng.random_range(0..dim);
        let h = 1e-5 * q[i].abs().max(1.0);
        x[i] = q[i] + h;
        let hi = target.log_density(&x);
        x[i] = q[i] - h;
        let lo = target.log_density(&x);
        x[i] = q[i];
        let numeric = (hi - lo) / (2.0 * h);
        let scale = numeric.abs().max(grad[i].abs()).max(1.0);
        if (numeric - grad[i]).abs() > 1e-3 * scale {
            return Err(HmcError::GradientCheckFailed { index: i, analytic: grad[i], numeric });
        }
    }
    Ok(())
}

struct DualAveraging {
    mu: f64,
    log_eps_bar: f64,
    h_bar: f64,
    t: f64,
    delta: f64,
}

impl DualAveraging {
    const GAMMA: f64 = 0.05;
    const T0: f64 = 10.0;
    const KAPPA: f64 = 0.75;

    fn new(eps: f64, delta: f64) -> Self {
        Self { mu: (10.0 * eps).ln(), log_eps_bar: 0.0, h_bar: 0.0, t: 0.0, delta }
    }

    fn update(&mut self, accept: f64) -> f64 {
        self.t += 1.0;
        let eta = 1.0 / (self.t + Self::T0);
        self.h_bar = (1.0 - eta) * self.h_bar + eta * (self.delta - accept);
        let log_eps = self.mu - self.t.sqrt() / Self::GAMMA * self.h_bar;
        let w = self.t.powf(-Self::KAPPA);
        self.log_eps_bar = w * log_eps + (1.0 - w) * self.log_eps_bar;
        log_eps.exp()
    }

    fn final_step_size(&self) -> f64 {
        self.log_eps_bar.exp()
    }
}

/// Warmup schedule: a fast initial buffer, doubling slow windows that
/// estimate the metric, and a fast terminal buffer.
fn slow_windows(n_warmup: usize) -> Vec<(usize, usize)> {
    let (mut init, mut term, mut base) = (75, 50, 25);
    if n_warmup < 20 {
        return Vec::new();
    }
    if init + term + base > n_warmup {
        init = (0.15 * n_warmup as f64) as usize;
        term = (0.1 * n_warmup as f64) as usize;
        base = n_warmup - init - term;
    }
    let last = n_warmup - term;
    let mut ends = Vec::new();
    let mut start = init;
    let mut size = base;
    while start < last {
        let mut end = start + size;
        // absorb a following window that would not fit
        if end + 2 * size > last {
            end = last;
        }
        ends.push((start, end));
        start = end;
        size *= 2;
    }
    ends
}

struct Chain<'a, M: LogDensity + ?Sized> {
    target: &'a M,
    cfg: &'a SamplerConfig,
    rng: ChaCha8Rng,
    q: Vec<f64>,
    grad: Vec<f64>,
    lp: f64,
    inv_metric: Vec<f64>,
    eps: f64,
    leapfrogs: u64,
}

impl<M: LogDensity + ?Sized> Chain<'_, M> {
    fn momentum(&mut self) -> Vec<f64> {
        let rng = &mut self.rng;
        self.inv_metric.iter().map(|m| rng.sample::<f64, _>(StandardNormal) / m.sqrt()).collect()
    }

    /// One transition; returns (acceptance probability, divergent).
    fn transition(&mut self) -> (f64, bool) {
        let mut p = self.momentum();
        let h0 = hamiltonian(self.lp, &p, &self.inv_metric);
        let time = (1.0 - self.rng.random::<f64>()) * self.cfg.max_integration_time;
        let n_steps = ((time / self.eps).ceil() as usize).clamp(1, self.cfg.max_leapfrog);
        let mut q = self.q.clone();
        let mut grad = self.grad.clone();
        let mut lp = self.lp;
        let mut divergent = false;
        for _ in 0..n_steps {
            lp = leapfrog(self.target, &mut q, &mut p, &mut grad, self.eps, &self.inv_metric);
            self.leapfrogs += 1;
            let h = hamiltonian(lp, &p, &self.inv_metric);
            if !h.is_finite() || h - h0 > DIVERGENCE_THRESHOLD {
                divergent = true;
                break;
            }
        }
        let accept = if divergent { 0.0 } else { (h0 - hamiltonian(lp, &p, &self.inv_metric)).exp().min(1.0) };
        if self.rng.random::<f64>() < accept {
            self.q = q;
            self.grad = grad;
            self.lp = lp;
        }
        (accept, divergent)
    }

    /// Double or halve the step size until a single leapfrog step crosses
    /// acceptance 0.8.
    fn find_reasonable_step_size(&mut self) {
        let target = 0.8f64.ln();
        let delta_h = |chain: &mut Self, eps: f64| {
            let mut p = chain.momentum();
            let h0 = hamiltonian(chain.lp, &p, &chain.inv_metric);
            let (mut q, mut g) = (chain.q.clone(), chain.grad.clone());
            let lp = leapfrog(chain.target, &mut q, &mut p, &mut g, eps, &chain.inv_metric);
            let d = h0 - hamiltonian(lp, &p, &chain.inv_metric);
            if d.is_finite() {
                d
            } else {
                f64::NEG_INFINITY
            }
        };
        let mut eps = self.eps;
        let up = delta_h(self, eps) > target;
        for _ in 0..60 {
            let next = if up { eps * 2.0 } else { eps * 0.5 };
            if next < self.cfg.min_step_size || next > self.cfg.max_step_size {
                break;
            }
            eps = next;
            let d = delta_h(self, eps);
            if up != (d > target) {
                break;
            }
        }
        self.eps = eps.clamp(self.cfg.min_step_size, self.cfg.max_step_size);
    }
}

/// Inverse of the diagonal curvature `-d2 lp / dq_k^2` at `q`, by central
/// differences of the gradient. Coordinates with non-positive or non-finite
/// curvature keep unit scale.
fn curvature_metric<M: LogDensity + ?Sized>(target: &M, q: &[f64]) -> Vec<f64> {
    let dim = q.len();
    let mut x = q.to_vec();
    let (mut gp, mut gm) = (vec![0.0; dim], vec![0.0; dim]);
    (0..dim)
        .map(|k| {
            let h = 1e-4 * q[k].abs().max(1.0);
            x[k] = q[k] + h;
            target.log_density_gradient(&x, &mut gp);
            x[k] = q[k] - h;
            target.log_density_gradient(&x, &mut gm);
            x[k] = q[k];
            let curv = -(gp[k] - gm[k]) / (2.0 * h);
            if curv.is_finite() && curv > 0.0 {
                (1.0 / curv).clamp(1e-12, 1e4)
            } else {
                1.0
            }
        })
        .collect()
}

fn chain_rng(seed: u64, chain: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(chain as u64);
    rng
}

fn run_chain<M: LogDensity + ?Sized>(
    target: &M,
    init: &[f64],
    cfg: &SamplerConfig,
    chain: usize,
) -> Result<(Vec<f64>, ChainStats, usize), HmcError> {
    let dim = target.dim();
    let mut rng = chain_rng(cfg.seed, chain);
    let q: Vec<f64> = init.iter().map(|x| x + cfg.init_jitter * (2.0 * rng.random::<f64>() - 1.0)).collect();
    let mut grad = vec![0.0; dim];
    let lp = target.log_density_gradient(&q, &mut grad);
    if !lp.is_finite() || grad.iter().any(|g| !g.is_finite()) {
        return Err(HmcError::NonFiniteDensityAtInit(chain));
    }
    spot_check_gradient(target, &q, &mut rng)?;
    let inv_metric = curvature_metric(target, &q);
    let mut st = Chain { target, cfg, rng, q, grad, lp, inv_metric, eps: 1.0, leapfrogs: 0 };
    st.eps = st.eps.clamp(cfg.min_step_size, cfg.max_step_size);
    st.find_reasonable_step_size();
    let mut da = DualAveraging::new(st.eps, cfg.target_accept);

    let windows = slow_windows(cfg.n_warmup);
    let mut window = 0;
    let (mut n_w, mut mean_w, mut m2_w) = (0usize, vec![0.0; dim], vec![0.0; dim]);

    let n_kept = cfg.n_kept();
    let names_len = target.parameter_names().len();
    let mut kept = Vec::with_capacity(n_kept * names_len);
    let (mut accept_sum, mut divergences) = (0.0, 0usize);
    for iter in 0..cfg.n_iterations {
        let (accept, divergent) = st.transition();
        if iter < cfg.n_warmup {
            st.eps = da.update(accept).clamp(cfg.min_step_size, cfg.max_step_size);
            let in_slow = window < windows.len() && iter >= windows[window].0;
            if in_slow {
                n_w += 1;
                for k in 0..dim {
                    let d = st.q[k] - mean_w[k];
                    mean_w[k] += d / n_w as f64;
                    m2_w[k] += d * (st.q[k] - mean_w[k]);
                }
                if iter + 1 == windows[window].1 {
                    let n = n_w as f64;
                    for k in 0..dim {
                        let var = m2_w[k] / (n - 1.0).max(1.0);
                        // shrink toward a small multiple of the previous scale
                        st.inv_metric[k] = (n / (n + 5.0)) * var + 1e-3 * st.inv_metric[k] * (5.0 / (n + 5.0));
                    }
                    n_w = 0;
                    mean_w.iter_mut().for_each(|m| *m = 0.0);
                    m2_w.iter_mut().for_each(|m| *m = 0.0);
                    window += 1;
                    st.find_reasonable_step_size();
                    da = DualAveraging::new(st.eps, cfg.target_accept);
                }
            }
            if iter + 1 == cfg.n_warmup {
                st.eps = da.final_step_size().clamp(cfg.min_step_size, cfg.max_step_size);
            }
        } else {
            accept_sum += accept;
            divergences += divergent as usize;
            kept.extend(target.constrain(&st.q));
        }
    }
    let stats = ChainStats {
        step_size: st.eps,
        inv_metric: st.inv_metric.clone(),
        accept_rate: accept_sum / n_kept as f64,
        divergences,
        leapfrog_steps: st.leapfrogs,
    };
    Ok((kept, stats, divergences))
}

/// Run `config.n_chains` chains from `init` (plus per-chain jitter).
///
/// Chain `c` uses the ChaCha8 stream `c` of the generator seeded with
/// `config.seed`, so results do not depend on `config.jobs`.
pub fn run_hmc<M: LogDensity + ?Sized>(target: &M, init: &[f64], config: &SamplerConfig) -> Result<PosteriorDraws, HmcError> {
    config.validate()?;
    if init.len() != target.dim() {
        return Err(HmcError::InvalidConfig(format!("init has {} coordinates, target has {}", init.len(), target.dim())));
    }
    let mut results: Vec<Option<Result<(Vec<f64>, ChainStats, usize), HmcError>>> =
        (0..config.n_chains).map(|_| None).collect();
    let chains: Vec<usize> = (0..config.n_chains).collect();
    for batch in chains.chunks(config.jobs) {
        let out: Vec<_> = std::thread::scope(|s| {
            let handles: Vec<_> = batch.iter().map(|&c| s.spawn(move || run_chain(target, init, config, c))).collect();
            handles.into_iter().map(|h| h.join().expect("chain thread panicked")).collect()
        });
        for (&c, r) in batch.iter().zip(out) {
            log::info!("chain {c} finished");
            results[c] = Some(r);
        }
    }
    let mut values = Vec::new();
    let mut chain_stats = Vec::new();
    let mut divergent = 0;
    for r in results {
        let (v, s, d) = r.expect("every chain ran")?;
        values.extend(v);
        chain_stats.push(s);
        divergent += d;
    }
    let draws = PosteriorDraws {
        names: target.parameter_names(),
        n_chains: config.n_chains,
        n_kept: config.n_kept(),
        values,
        seed: config.seed,
        config: config.clone(),
        chain_stats,
    };
    let total = draws.n_total();
    if divergent as f64 > MAX_DIVERGENT_FRACTION * total as f64 {
        return Err(HmcError::DivergenceExplosion { divergent, total, draws: Box::new(draws) });
    }
    Ok(draws)
}
