//! Training dynamics: gradient flow (classical RK4 with step-halving),
//! explicit gradient descent, implicit gradient descent realized as a
//! proximal-point step with an L-BFGS inner solver, and convergence-rate
//! estimation from loss traces.

use crate::error::{Result, RitzError};
use crate::loss::LossEvaluator;

/// Anything trainable: a loss with value and gradient over a flat
/// parameter vector.
pub trait Objective: Sync {
    fn dim(&self) -> usize;
    fn loss(&self, theta: &[f64]) -> Result<f64>;
    fn loss_grad(&self, theta: &[f64]) -> Result<(f64, Vec<f64>)>;
    /// Length of the leading outer-coefficient block (for the ‖a‖₂
    /// trace column); defaults to the full vector.
    fn outer_len(&self) -> usize {
        self.dim()
    }
}

impl Objective for LossEvaluator {
    fn dim(&self) -> usize {
        LossEvaluator::dim(self)
    }
    fn loss(&self, theta: &[f64]) -> Result<f64> {
        LossEvaluator::loss(self, theta)
    }
    fn loss_grad(&self, theta: &[f64]) -> Result<(f64, Vec<f64>)> {
        LossEvaluator::loss_grad(self, theta)
    }
    fn outer_len(&self) -> usize {
        self.params_with(&self.initial_theta()).m()
    }
}

/// J(θ) = ½‖θ‖²; closed-form dynamics for oracle tests.
pub struct QuadraticLoss {
    pub dim: usize,
}

impl Objective for QuadraticLoss {
    fn dim(&self) -> usize {
        self.dim
    }
    fn loss(&self, theta: &[f64]) -> Result<f64> {
        Ok(0.5 * theta.iter().map(|t| t * t).sum::<f64>())
    }
    fn loss_grad(&self, theta: &[f64]) -> Result<(f64, Vec<f64>)> {
        Ok((self.loss(theta)?, theta.to_vec()))
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

// ---------------------------------------------------------------------------
// Traces
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct TraceRecord {
    pub step: usize,
    pub time: f64,
    pub loss: f64,
    pub grad_norm: f64,
    pub a_norm: f64,
    /// ‖θ_k − θ_final‖₂, back-filled once the run ends.
    pub dist_to_final: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct TrainingTrace {
    pub scheme: String,
    /// Step size η (discrete schemes) or initial dt (gradient flow).
    pub eta: f64,
    pub records: Vec<TraceRecord>,
    /// Parameter snapshots aligned with `records` (used for distance
    /// back-fill; may be cleared by callers who do not need them).
    pub thetas: Vec<Vec<f64>>,
}

impl TrainingTrace {
    fn new(scheme: &str, eta: f64) -> Self {
        TrainingTrace { scheme: scheme.into(), eta, records: Vec::new(), thetas: Vec::new() }
    }

    fn push(&mut self, step: usize, time: f64, loss: f64, grad_norm: f64, theta: &[f64], a_len: usize) {
        let a_norm = norm(&theta[..a_len.min(theta.len())]);
        self.records.push(TraceRecord { step, time, loss, grad_norm, a_norm, dist_to_final: None });
        self.thetas.push(theta.to_vec());
    }

    /// Fills `dist_to_final` from the stored snapshots and the final iterate.
    pub fn backfill_distances(&mut self, theta_final: &[f64]) {
        for (rec, th) in self.records.iter_mut().zip(&self.thetas) {
            let d = th
                .iter()
                .zip(theta_final)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt();
            rec.dist_to_final = Some(d);
        }
    }

    /// CSV with header `step,time,loss,grad_norm,a_norm`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("step,time,loss,grad_norm,a_norm\n");
        for r in &self.records {
            out.push_str(&format!(
                "{},{:.17e},{:.17e},{:.17e},{:.17e}\n",
                r.step, r.time, r.loss, r.grad_norm, r.a_norm
            ));
        }
        out
    }
}

// ---------------------------------------------------------------------------
// Gradient flow: θ′ = −∇J(θ), classical RK4, halve-on-increase
// ---------------------------------------------------------------------------

pub struct FlowOptions {
    pub horizon: f64,
    pub dt: f64,
    /// Record every this many accepted steps (t=0 and the final state are
    /// always recorded).
    pub record_stride: usize,
    /// Stop early once the loss drops below this value, if set.
    pub loss_floor: Option<f64>,
}

pub fn gradient_flow(
    obj: &dyn Objective,
    theta0: &[f64],
    opts: &FlowOptions,
) -> Result<(Vec<f64>, TrainingTrace)> {
    if !(opts.dt > 0.0) || !(opts.horizon > 0.0) {
        return Err(RitzError::InvalidData("gradient flow needs dt > 0 and horizon > 0".into()));
    }
    let stride = opts.record_stride.max(1);
    let mut trace = TrainingTrace::new("gradient_flow", opts.dt);
    let a_len = obj.outer_len();

    let rhs = |theta: &[f64]| -> Result<Vec<f64>> {
        let (_, g) = obj.loss_grad(theta)?;
        Ok(g.into_iter().map(|x| -x).collect())
    };

    let mut theta = theta0.to_vec();
    let (mut loss, mut grad) = obj.loss_grad(&theta)?;
    let mut t = 0.0;
    let mut dt = opts.dt;
    let dt_floor = 1e-12 * opts.dt;
    let mut step = 0usize;
    trace.push(0, 0.0, loss, norm(&grad), &theta, a_len);

    while t < opts.horizon {
        if let Some(floor) = opts.loss_floor {
            if loss <= floor {
                break;
            }
        }
        let h = dt.min(opts.horizon - t);
        // classical RK4 stage evaluation
        let k1: Vec<f64> = grad.iter().map(|g| -g).collect();
        let mid1: Vec<f64> = theta.iter().zip(&k1).map(|(x, k)| x + 0.5 * h * k).collect();
        let k2 = rhs(&mid1)?;
        let mid2: Vec<f64> = theta.iter().zip(&k2).map(|(x, k)| x + 0.5 * h * k).collect();
        let k3 = rhs(&mid2)?;
        let end: Vec<f64> = theta.iter().zip(&k3).map(|(x, k)| x + h * k).collect();
        let k4 = rhs(&end)?;
        let cand: Vec<f64> = (0..theta.len())
            .map(|i| theta[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
            .collect();
        let (cand_loss, cand_grad) = obj.loss_grad(&cand)?;
        if cand_loss > loss {
            dt *= 0.5;
            if dt < dt_floor {
                return Err(RitzError::StepUnderflow { floor: dt_floor });
            }
            continue;
        }
        theta = cand;
        loss = cand_loss;
        grad = cand_grad;
        t += h;
        step += 1;
        if step % stride == 0 || t >= opts.horizon {
            trace.push(step, t, loss, norm(&grad), &theta, a_len);
        }
    }
    if trace.records.last().map(|r| r.step) != Some(step) {
        trace.push(step, t, loss, norm(&grad), &theta, a_len);
    }
    trace.backfill_distances(&theta);
    Ok((theta, trace))
}

// ---------------------------------------------------------------------------
// Explicit gradient descent
// ---------------------------------------------------------------------------

pub fn gd_step(obj: &dyn Objective, theta: &[f64], eta: f64) -> Result<Vec<f64>> {
    if !(eta > 0.0) {
        return Err(RitzError::InvalidData("eta must be > 0".into()));
    }
    let (_, g) = obj.loss_grad(theta)?;
    Ok(theta.iter().zip(&g).map(|(x, gi)| x - eta * gi).collect())
}

pub fn run_gd(
    obj: &dyn Objective,
    theta0: &[f64],
    eta: f64,
    steps: usize,
    record_stride: usize,
) -> Result<(Vec<f64>, TrainingTrace)> {
    let stride = record_stride.max(1);
    let a_len = obj.outer_len();
    let mut trace = TrainingTrace::new("gd", eta);
    let mut theta = theta0.to_vec();
    let (l0, g0) = obj.loss_grad(&theta)?;
    trace.push(0, 0.0, l0, norm(&g0), &theta, a_len);
    for k in 1..=steps {
        theta = gd_step(obj, &theta, eta)?;
        if k % stride == 0 || k == steps {
            let (l, g) = obj.loss_grad(&theta)?;
            trace.push(k, k as f64 * eta, l, norm(&g), &theta, a_len);
        }
    }
    trace.backfill_distances(&theta);
    Ok((theta, trace))
}

// ---------------------------------------------------------------------------
// Implicit gradient descent (proximal point with L-BFGS inner solver)
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct InnerOptions {
    pub max_iters: usize,
    pub grad_tol: f64,
}

impl Default for InnerOptions {
    fn default() -> Self {
        InnerOptions { max_iters: 10, grad_tol: 1e-8 }
    }
}

const LBFGS_MEMORY: usize = 10;
const ARMIJO_C: f64 = 1e-4;
const BACKTRACK_FACTOR: f64 = 0.5;
const MAX_BACKTRACKS: usize = 30;

#[derive(Debug, Clone)]
pub struct IgdStepResult {
    pub theta: Vec<f64>,
    /// Inner gradient criterion met (‖∇φ‖ ≤ grad_tol).
    pub converged: bool,
    /// No improving inner step was found; theta equals the input.
    pub stalled: bool,
    /// ‖θ_{k+1} − θ_k + η ∇J(θ_{k+1})‖₂.
    pub fixed_point_residual: f64,
    pub loss: f64,
    /// ∇J at the returned iterate.
    pub grad: Vec<f64>,
    pub inner_iters: usize,
}

/// One implicit step: approximately minimizes φ(z) = J(z) + ‖z−θ_k‖²/(2η),
/// whose stationarity condition is z = θ_k − η ∇J(z). Any φ-decrease from
/// the z = θ_k start implies J(z) ≤ J(θ_k).
pub fn igd_step(
    obj: &dyn Objective,
    theta_k: &[f64],
    eta: f64,
    inner: &InnerOptions,
) -> Result<IgdStepResult> {
    igd_step_warm(obj, theta_k, None, eta, inner)
}

/// `igd_step` with an optional warm-start guess for the inner minimizer
/// (e.g. an extrapolation of the outer trajectory). The guess is only
/// adopted when it already improves the proximal objective over θ_k, so
/// the descent guarantee J(θ_{k+1}) ≤ J(θ_k) is preserved.
pub fn igd_step_warm(
    obj: &dyn Objective,
    theta_k: &[f64],
    warm: Option<&[f64]>,
    eta: f64,
    inner: &InnerOptions,
) -> Result<IgdStepResult> {
    if !(eta > 0.0) {
        return Err(RitzError::InvalidData("eta must be > 0".into()));
    }
    let n = theta_k.len();
    // prox objective value and gradient
    let prox = |z: &[f64]| -> Result<(f64, Vec<f64>, f64, Vec<f64>)> {
        let (j, mut g) = obj.loss_grad(z)?;
        let mut quad = 0.0;
        let jg = g.clone();
        for i in 0..n {
            let dzi = z[i] - theta_k[i];
            quad += dzi * dzi;
            g[i] += dzi / eta;
        }
        Ok((j + quad / (2.0 * eta), g, j, jg))
    };

    let mut z = theta_k.to_vec();
    let (mut phi, mut gphi, mut jval, mut jgrad) = prox(&z)?;
    let mut improved = false;
    if let Some(guess) = warm {
        if guess.len() == n {
            let (phi_w, g_w, j_w, jg_w) = prox(guess)?;
            if phi_w < phi {
                z = guess.to_vec();
                phi = phi_w;
                gphi = g_w;
                jval = j_w;
                jgrad = jg_w;
                improved = true;
            }
        }
    }
    let mut s_hist: Vec<Vec<f64>> = Vec::new();
    let mut y_hist: Vec<Vec<f64>> = Vec::new();
    let mut iters = 0usize;

    for _ in 0..inner.max_iters {
        let gnorm = norm(&gphi);
        if gnorm <= inner.grad_tol {
            break;
        }
        // two-loop recursion
        let mut q = gphi.clone();
        let k = s_hist.len();
        let mut alpha = vec![0.0; k];
        let mut rho = vec![0.0; k];
        for i in (0..k).rev() {
            rho[i] = 1.0 / y_hist[i].iter().zip(&s_hist[i]).map(|(y, s)| y * s).sum::<f64>();
            alpha[i] = rho[i] * s_hist[i].iter().zip(&q).map(|(s, qi)| s * qi).sum::<f64>();
            for (qi, yi) in q.iter_mut().zip(&y_hist[i]) {
                *qi -= alpha[i] * yi;
            }
        }
        if k > 0 {
            let sy: f64 = s_hist[k - 1].iter().zip(&y_hist[k - 1]).map(|(s, y)| s * y).sum();
            let yy: f64 = y_hist[k - 1].iter().map(|y| y * y).sum();
            let gamma = sy / yy;
            for qi in q.iter_mut() {
                *qi *= gamma;
            }
        }
        for i in 0..k {
            let beta = rho[i] * y_hist[i].iter().zip(&q).map(|(y, qi)| y * qi).sum::<f64>();
            for (qi, si) in q.iter_mut().zip(&s_hist[i]) {
                *qi += (alpha[i] - beta) * si;
            }
        }
        // descent direction; fall back to steepest descent if curvature
        // information produced an ascent direction
        let mut dir: Vec<f64> = q.iter().map(|qi| -qi).collect();
        let ddotg: f64 = dir.iter().zip(&gphi).map(|(d, g)| d * g).sum();
        let ddotg = if ddotg >= 0.0 {
            dir = gphi.iter().map(|g| -g).collect();
            -gnorm * gnorm
        } else {
            ddotg
        };

        // Armijo backtracking
        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..=MAX_BACKTRACKS {
            let cand: Vec<f64> = z.iter().zip(&dir).map(|(zi, di)| zi + step * di).collect();
            let (phi_c, g_c, j_c, jg_c) = prox(&cand)?;
            if phi_c <= phi + ARMIJO_C * step * ddotg {
                accepted = Some((cand, phi_c, g_c, j_c, jg_c, step));
                break;
            }
            step *= BACKTRACK_FACTOR;
        }
        let Some((z_new, phi_new, g_new, j_new, jg_new, _)) = accepted else {
            break;
        };
        iters += 1;
        improved = true;
        let s: Vec<f64> = z_new.iter().zip(&z).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = g_new.iter().zip(&gphi).map(|(a, b)| a - b).collect();
        let sy: f64 = s.iter().zip(&y).map(|(a, b)| a * b).sum();
        if sy > 0.0 {
            s_hist.push(s);
            y_hist.push(y);
            if s_hist.len() > LBFGS_MEMORY {
                s_hist.remove(0);
                y_hist.remove(0);
            }
        }
        z = z_new;
        phi = phi_new;
        gphi = g_new;
        jval = j_new;
        jgrad = jg_new;
    }

    let converged = norm(&gphi) <= inner.grad_tol;
    if !improved && !converged {
        return Ok(IgdStepResult {
            theta: theta_k.to_vec(),
            converged: false,
            stalled: true,
            fixed_point_residual: eta * norm(&gphi),
            loss: jval,
            grad: jgrad,
            inner_iters: 0,
        });
    }
    // ‖z − θ_k + η∇J(z)‖ = η‖∇φ(z)‖
    let residual = eta * norm(&gphi);
    Ok(IgdStepResult {
        theta: z,
        converged,
        stalled: false,
        fixed_point_residual: residual,
        loss: jval,
        grad: jgrad,
        inner_iters: iters,
    })
}

#[derive(Debug, Clone, Default)]
pub struct IgdRunStats {
    pub converged_steps: usize,
    pub stalled_steps: usize,
    pub max_fixed_point_residual: f64,
}

pub fn run_igd(
    obj: &dyn Objective,
    theta0: &[f64],
    eta: f64,
    steps: usize,
    inner: &InnerOptions,
    record_stride: usize,
) -> Result<(Vec<f64>, TrainingTrace, IgdRunStats)> {
    let stride = record_stride.max(1);
    let a_len = obj.outer_len();
    let mut trace = TrainingTrace::new("igd", eta);
    let mut stats = IgdRunStats::default();
    let mut theta = theta0.to_vec();
    let (l0, g0) = obj.loss_grad(&theta)?;
    trace.push(0, 0.0, l0, norm(&g0), &theta, a_len);
    let mut prev: Option<Vec<f64>> = None;
    for k in 1..=steps {
        // extrapolated warm start for the inner solver; igd_step_warm only
        // adopts it when it already decreases the proximal objective
        let guess: Option<Vec<f64>> = prev.as_ref().map(|p| {
            theta.iter().zip(p).map(|(t, q)| 2.0 * t - q).collect()
        });
        prev = Some(theta.clone());
        let res = igd_step_warm(obj, &theta, guess.as_deref(), eta, inner)?;
        if res.stalled {
            stats.stalled_steps += 1;
        } else {
            theta = res.theta;
        }
        if res.converged {
            stats.converged_steps += 1;
            stats.max_fixed_point_residual =
                stats.max_fixed_point_residual.max(res.fixed_point_residual);
        }
        if k % stride == 0 || k == steps {
            trace.push(k, k as f64 * eta, res.loss, norm(&res.grad), &theta, a_len);
        }
    }
    trace.backfill_distances(&theta);
    Ok((theta, trace, stats))
}

// ---------------------------------------------------------------------------
// Rate fitting
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Regime {
    Power,
    Exponential,
    Undetermined,
}

impl Regime {
    pub fn as_str(&self) -> &'static str {
        match self {
            Regime::Power => "power",
            Regime::Exponential => "exponential",
            Regime::Undetermined => "undetermined",
        }
    }
}

#[derive(Debug, Clone)]
pub struct RateFit {
    pub regime: Regime,
    pub epsilon_hat: f64,
    pub constant: f64,
    pub r_squared: f64,
    /// Half-open record index range [start, end) the fit used.
    pub window: (usize, usize),
}

/// Least squares y = a + b x; returns (a, b, r²).
fn linreg(xs: &[f64], ys: &[f64]) -> (f64, f64, f64) {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    let mut syy = 0.0;
    for (x, y) in xs.iter().zip(ys) {
        sxx += (x - mx) * (x - mx);
        sxy += (x - mx) * (y - my);
        syy += (y - my) * (y - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return (my, 0.0, 0.0);
    }
    let b = sxy / sxx;
    let a = my - b * mx;
    let r2 = (sxy * sxy) / (sxx * syy);
    (a, b, r2)
}

const FLAT_GAP: f64 = 1e-14;
const MIN_TAIL: usize = 50;

/// Fits log(J − J_final) against {log t, t} on the tail window (last half
/// of the records, excluding the final 5% to avoid self-reference against
/// the J_final proxy) and selects the regime with the higher R².
/// Power slope −1/(1−2ε) is inverted to ε̂; the exponential regime
/// reports ε̂ = 1/2.
pub fn fit_rate(trace: &TrainingTrace) -> Result<RateFit> {
    let n = trace.records.len();
    if n < MIN_TAIL {
        return Err(RitzError::InsufficientTail { have: n, need: MIN_TAIL });
    }
    let j_final = trace.records[n - 1].loss;
    // exclude the last 5% (at least one record: J_final itself)
    let cut = (n as f64 * 0.05).ceil() as usize;
    let end = n - cut.max(1);
    let start = n / 2;
    if end <= start || end - start < MIN_TAIL {
        // widen toward the front if the tail half is too short
        let start = end.saturating_sub(MIN_TAIL);
        if end - start < MIN_TAIL {
            return Err(RitzError::InsufficientTail { have: end - start, need: MIN_TAIL });
        }
        return fit_window(trace, start, end, j_final);
    }
    fit_window(trace, start, end, j_final)
}

fn fit_window(trace: &TrainingTrace, start: usize, end: usize, j_final: f64) -> Result<RateFit> {
    let mut ts = Vec::new();
    let mut gaps = Vec::new();
    for r in &trace.records[start..end] {
        let gap = r.loss - j_final;
        if r.time > 0.0 && gap > FLAT_GAP {
            ts.push(r.time);
            gaps.push(gap);
        }
    }
    if gaps.is_empty() {
        return Ok(RateFit {
            regime: Regime::Undetermined,
            epsilon_hat: f64::NAN,
            constant: f64::NAN,
            r_squared: 0.0,
            window: (start, end),
        });
    }
    if ts.len() < MIN_TAIL {
        return Err(RitzError::InsufficientTail { have: ts.len(), need: MIN_TAIL });
    }
    let ly: Vec<f64> = gaps.iter().map(|g| g.ln()).collect();
    let lx: Vec<f64> = ts.iter().map(|t| t.ln()).collect();
    let (a_pow, b_pow, r2_pow) = linreg(&lx, &ly);
    let (a_exp, _b_exp, r2_exp) = linreg(&ts, &ly);
    // A valid power law J − J* ~ t^{−1/(1−2ε)} with ε ∈ (0, ½) needs a
    // slope strictly below −1.
    let power_valid = b_pow < -1.0;
    if power_valid && r2_pow > r2_exp {
        let eps = 0.5 * (1.0 + 1.0 / b_pow);
        Ok(RateFit {
            regime: Regime::Power,
            epsilon_hat: eps.clamp(f64::MIN_POSITIVE, 0.5),
            constant: a_pow.exp(),
            r_squared: r2_pow,
            window: (start, end),
        })
    } else {
        Ok(RateFit {
            regime: Regime::Exponential,
            epsilon_hat: 0.5,
            constant: a_exp.exp(),
            r_squared: r2_exp,
            window: (start, end),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn quad(dim: usize) -> QuadraticLoss {
        QuadraticLoss { dim }
    }

    #[test]
    fn gradient_flow_matches_linear_ode() {
        // theta' = -theta => theta(t) = theta0 e^{-t}
        let obj = quad(3);
        let theta0 = vec![1.0, -2.0, 0.5];
        let opts = FlowOptions { horizon: 1.0, dt: 0.01, record_stride: 10, loss_floor: None };
        let (theta, trace) = gradient_flow(&obj, &theta0, &opts).unwrap();
        for (a, b) in theta.iter().zip(&theta0) {
            assert_relative_eq!(*a, b * (-1.0f64).exp(), max_relative = 1e-6);
        }
        for w in trace.records.windows(2) {
            assert!(w[1].loss <= w[0].loss + 1e-10);
        }
    }

    #[test]
    fn gd_step_zero_gradient_is_fixed_point() {
        let obj = quad(4);
        let theta = vec![0.0; 4];
        let next = gd_step(&obj, &theta, 0.3).unwrap();
        assert_eq!(next, theta);
    }

    #[test]
    fn gd_quadratic_monotone_below_stability_threshold() {
        let obj = quad(2);
        let mut theta = vec![3.0, -1.0];
        let mut prev = obj.loss(&theta).unwrap();
        for _ in 0..20 {
            theta = gd_step(&obj, &theta, 1.5).unwrap(); // L = 1, eta < 2
            let l = obj.loss(&theta).unwrap();
            assert!(l <= prev + 1e-12);
            prev = l;
        }
    }

    #[test]
    fn igd_quadratic_closed_form() {
        // prox of 1/2|z|^2: z = theta/(1+eta)
        let obj = quad(5);
        let theta: Vec<f64> = vec![1.0, -0.7, 2.5, 0.3, -4.0];
        for &eta in &[0.1, 0.5, 2.0] {
            let inner = InnerOptions { max_iters: 10, grad_tol: 1e-12 };
            let res = igd_step(&obj, &theta, eta, &inner).unwrap();
            assert!(res.converged);
            for (z, t) in res.theta.iter().zip(&theta) {
                assert!((z - t / (1.0 + eta)).abs() < 1e-10, "eta={eta}: {z} vs {}", t / (1.0 + eta));
            }
            assert!(res.fixed_point_residual <= eta * inner.grad_tol);
        }
    }

    #[test]
    fn igd_small_eta_stays_put() {
        let obj = quad(3);
        let theta = vec![1.0, 2.0, 3.0];
        let res = igd_step(&obj, &theta, 1e-10, &InnerOptions::default()).unwrap();
        for (z, t) in res.theta.iter().zip(&theta) {
            assert!((z - t).abs() < 1e-8);
        }
    }

    #[test]
    fn gd_matches_igd_to_first_order() {
        // igd = gd + O(eta^2) on a smooth nonquadratic toy
        struct Quartic;
        impl Objective for Quartic {
            fn dim(&self) -> usize {
                2
            }
            fn loss(&self, t: &[f64]) -> Result<f64> {
                Ok(0.25 * (t[0].powi(4) + t[1].powi(4)) + 0.5 * (t[0] * t[0] + t[1] * t[1]))
            }
            fn loss_grad(&self, t: &[f64]) -> Result<(f64, Vec<f64>)> {
                Ok((self.loss(t)?, vec![t[0].powi(3) + t[0], t[1].powi(3) + t[1]]))
            }
        }
        let obj = Quartic;
        let theta = vec![0.8, -0.6];
        let eta = 1e-4;
        let gd = gd_step(&obj, &theta, eta).unwrap();
        let igd = igd_step(&obj, &theta, eta, &InnerOptions { max_iters: 30, grad_tol: 1e-14 })
            .unwrap();
        for (a, b) in gd.iter().zip(&igd.theta) {
            assert!((a - b).abs() < 10.0 * eta * eta, "{a} vs {b}");
        }
    }

    /// Synthetic power-law trace from the closed-form solution of
    /// z' = -z^{2(1-eps)}: z(t) = (z0^{2eps-1} + (1-2eps) t)^{-1/(1-2eps)}.
    fn power_trace(eps: f64) -> TrainingTrace {
        let mut trace = TrainingTrace::new("synthetic", 0.0);
        let z0: f64 = 1.0;
        let p = -1.0 / (1.0 - 2.0 * eps);
        // geometric time grid so the log-log fit sees several decades
        let n = 400;
        for i in 0..n {
            let t = 1e-2 * (1e8f64).powf(i as f64 / (n - 1) as f64);
            let z = (z0.powf(2.0 * eps - 1.0) + (1.0 - 2.0 * eps) * t).powf(p);
            trace.records.push(TraceRecord {
                step: i,
                time: t,
                loss: z,
                grad_norm: 0.0,
                a_norm: 0.0,
                dist_to_final: None,
            });
            trace.thetas.push(vec![]);
        }
        trace
    }

    #[test]
    fn rate_fit_recovers_power_exponents() {
        for &eps in &[0.1, 0.25, 0.4] {
            let trace = power_trace(eps);
            let fit = fit_rate(&trace).unwrap();
            assert_eq!(fit.regime, Regime::Power, "eps={eps}");
            assert!(
                (fit.epsilon_hat - eps).abs() <= 0.1 * eps,
                "eps={eps} got {}",
                fit.epsilon_hat
            );
        }
    }

    #[test]
    fn rate_fit_classifies_exponential() {
        let mut trace = TrainingTrace::new("synthetic", 0.0);
        for i in 0..300 {
            let t = 0.05 * (i as f64 + 1.0);
            trace.records.push(TraceRecord {
                step: i,
                time: t,
                loss: (-t).exp(),
                grad_norm: 0.0,
                a_norm: 0.0,
                dist_to_final: None,
            });
            trace.thetas.push(vec![]);
        }
        let fit = fit_rate(&trace).unwrap();
        assert_eq!(fit.regime, Regime::Exponential);
        assert_eq!(fit.epsilon_hat, 0.5);
    }

    #[test]
    fn rate_fit_flat_trace_undetermined() {
        let mut trace = TrainingTrace::new("synthetic", 0.0);
        for i in 0..200 {
            trace.records.push(TraceRecord {
                step: i,
                time: (i + 1) as f64,
                loss: 1.0,
                grad_norm: 0.0,
                a_norm: 0.0,
                dist_to_final: None,
            });
            trace.thetas.push(vec![]);
        }
        let fit = fit_rate(&trace).unwrap();
        assert_eq!(fit.regime, Regime::Undetermined);
    }

    #[test]
    fn rate_fit_short_trace_errors() {
        let mut trace = TrainingTrace::new("synthetic", 0.0);
        for i in 0..10 {
            trace.records.push(TraceRecord {
                step: i,
                time: (i + 1) as f64,
                loss: 1.0 / (i + 1) as f64,
                grad_norm: 0.0,
                a_norm: 0.0,
                dist_to_final: None,
            });
            trace.thetas.push(vec![]);
        }
        assert!(matches!(fit_rate(&trace), Err(RitzError::InsufficientTail { .. })));
    }
}
