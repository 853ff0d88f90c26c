//! Differential operators applied to the network: admissible linear
//! operators, the Robin boundary operator, nonlinear residuals (Burgers and
//! the monotone second-order families), Ritz energy densities, and the
//! smooth cutoff ansatz enforcing homogeneous Dirichlet conditions.

use crate::error::{Result, RitzError};
use crate::functions::{Field, HFun};
use crate::net::{MultiIndex, NetworkParams, MAX_ORDER};

/// Threshold below which the |grad|^{p-4} term is dropped for 2 < p < 4;
/// the true limit of that term is 0 for p > 2.
pub const GRAD_SINGULARITY_EPS: f64 = 1e-10;

/// Admissible linear operator: finitely many (multi-index, coefficient)
/// terms with a unique strictly maximal-order term.
#[derive(Debug, Clone)]
pub struct LinearOperatorSpec {
    terms: Vec<(MultiIndex, Field)>,
    leading: MultiIndex,
}

impl LinearOperatorSpec {
    pub fn new(terms: Vec<(MultiIndex, Field)>) -> Result<Self> {
        if terms.is_empty() {
            return Err(RitzError::InvalidData("operator has no terms".into()));
        }
        let d = terms[0].0.dim();
        if terms.iter().any(|(xi, _)| xi.dim() != d) {
            return Err(RitzError::InvalidData("mixed multi-index dimensions".into()));
        }
        let max_order = terms.iter().map(|(xi, _)| xi.order()).max().unwrap();
        if max_order > MAX_ORDER {
            return Err(RitzError::OrderExceeded {
                requested: max_order,
                max: MAX_ORDER,
            });
        }
        let top: Vec<&MultiIndex> = terms
            .iter()
            .filter(|(xi, _)| xi.order() == max_order)
            .map(|(xi, _)| xi)
            .collect();
        if top.len() != 1 {
            return Err(RitzError::InvalidData(
                "operator must have exactly one term of strictly maximal order".into(),
            ));
        }
        let leading = top[0].clone();
        Ok(LinearOperatorSpec { terms, leading })
    }

    pub fn terms(&self) -> &[(MultiIndex, Field)] {
        &self.terms
    }

    pub fn leading(&self) -> &MultiIndex {
        &self.leading
    }

    pub fn dim(&self) -> usize {
        self.terms[0].0.dim()
    }

    /// Identity operator u -> u in d dimensions.
    pub fn identity(d: usize) -> Self {
        LinearOperatorSpec::new(vec![(MultiIndex::zero(d), Field::Const(1.0))]).unwrap()
    }

    /// Heat operator d_t - d_xx on a (t, x) slab.
    pub fn heat_1d() -> Self {
        LinearOperatorSpec::new(vec![
            (MultiIndex(vec![1, 0]), Field::Const(1.0)),
            (MultiIndex(vec![0, 2]), Field::Const(-1.0)),
        ])
        .unwrap()
    }

    /// Builds an operator without the unique-maximal-order admissibility
    /// check (needed e.g. for the Laplacian, whose top-order terms tie).
    pub fn new_relaxed(terms: Vec<(MultiIndex, Field)>) -> Result<Self> {
        if terms.is_empty() {
            return Err(RitzError::InvalidData("operator has no terms".into()));
        }
        let max_order = terms.iter().map(|(xi, _)| xi.order()).max().unwrap();
        if max_order > MAX_ORDER {
            return Err(RitzError::OrderExceeded {
                requested: max_order,
                max: MAX_ORDER,
            });
        }
        let leading = terms
            .iter()
            .find(|(xi, _)| xi.order() == max_order)
            .unwrap()
            .0
            .clone();
        Ok(LinearOperatorSpec { terms, leading })
    }

    /// Negative Laplacian in d dimensions (relaxed: top-order terms tie).
    pub fn neg_laplacian(d: usize) -> Self {
        let terms: Vec<(MultiIndex, Field)> = (0..d)
            .map(|i| {
                let mut xi = vec![0; d];
                xi[i] = 2;
                (MultiIndex(xi), Field::Const(-1.0))
            })
            .collect();
        LinearOperatorSpec::new_relaxed(terms).unwrap()
    }
}

/// Robin boundary operator alpha*u + beta*du/dn.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RobinSpec {
    pub alpha: f64,
    pub beta: f64,
}

impl RobinSpec {
    pub fn new(alpha: f64, beta: f64) -> Result<Self> {
        if alpha == 0.0 && beta == 0.0 {
            return Err(RitzError::InvalidData(
                "Robin coefficients must not both be zero".into(),
            ));
        }
        Ok(RobinSpec { alpha, beta })
    }

    pub fn dirichlet() -> Self {
        RobinSpec { alpha: 1.0, beta: 0.0 }
    }
}

/// Nonlinear interior operators.
#[derive(Debug, Clone)]
pub enum NonlinearOperatorSpec {
    /// u_t + u u_x - nu u_xx on a (t, x) slab.
    Burgers { nu: f64 },
    /// -div(|grad u|^{p-2} grad u) + q(x) u + h(u), p >= 2.
    PLaplaceMonotone { p: f64, q: Field, h: HFun },
    /// -div((1 + u^2) grad u) + q(x) u + h(u).
    QuasilinearMonotone { q: Field, h: HFun },
}

impl NonlinearOperatorSpec {
    pub fn validate(&self) -> Result<()> {
        if let NonlinearOperatorSpec::PLaplaceMonotone { p, .. } = self {
            if *p < 2.0 {
                return Err(RitzError::InvalidData(format!("p = {p} must be >= 2")));
            }
        }
        Ok(())
    }
}

/// Ritz energy densities.
#[derive(Debug, Clone)]
pub enum EnergySpec {
    /// (1/p)|grad u|^p - f(x) u
    PLaplace { p: f64, f: Field },
    /// (eps^2/2)|grad u|^2 + (1/4)(u^2 - 1)^2
    AllenCahn { epsilon: f64 },
}

impl EnergySpec {
    pub fn validate(&self) -> Result<()> {
        match self {
            EnergySpec::PLaplace { p, .. } if *p < 2.0 => {
                Err(RitzError::InvalidData(format!("p = {p} must be >= 2")))
            }
            EnergySpec::AllenCahn { epsilon } if *epsilon <= 0.0 => {
                Err(RitzError::InvalidData("epsilon must be positive".into()))
            }
            _ => Ok(()),
        }
    }
}

// ---------------------------------------------------------------------------
// Cutoff ansatz
// ---------------------------------------------------------------------------

/// Tensor-product quintic-smoothstep cutoff on a hyperrectangle.
///
/// eta(x) = prod_i rho_i(x_i) with rho ramping 0 -> 1 over a margin of
/// `margin_frac` of the side length at each face; eta == 1 on the inset
/// plateau U and eta == 0 on the boundary. C^2 with exact polynomial
/// derivatives.
#[derive(Debug, Clone)]
pub struct CutoffSpec {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    pub margin_frac: f64,
}

/// Quintic smoothstep 10 s^3 - 15 s^4 + 6 s^5 and its first two derivatives.
fn smoothstep(s: f64) -> (f64, f64, f64) {
    if s <= 0.0 {
        (0.0, 0.0, 0.0)
    } else if s >= 1.0 {
        (1.0, 0.0, 0.0)
    } else {
        let s2 = s * s;
        let s3 = s2 * s;
        (
            10.0 * s3 - 15.0 * s2 * s2 + 6.0 * s2 * s3,
            30.0 * s2 - 60.0 * s3 + 30.0 * s2 * s2,
            60.0 * s - 180.0 * s2 + 120.0 * s3,
        )
    }
}

impl CutoffSpec {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>, margin_frac: f64) -> Result<Self> {
        if lo.len() != hi.len() || lo.is_empty() {
            return Err(RitzError::InvalidData("cutoff bounds mismatch".into()));
        }
        if lo.iter().zip(&hi).any(|(l, h)| l >= h) {
            return Err(RitzError::DegenerateDomain("cutoff lo >= hi".into()));
        }
        if margin_frac <= 0.0 || margin_frac >= 0.5 {
            return Err(RitzError::InvalidData(
                "cutoff margin fraction must lie in (0, 0.5)".into(),
            ));
        }
        Ok(CutoffSpec { lo, hi, margin_frac })
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    /// Default margin of 0.1 of the side length.
    pub fn with_default_margin(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        CutoffSpec::new(lo, hi, 0.1)
    }

    /// Per-dimension factor rho(x_i) with first and second derivatives.
    fn factor(&self, i: usize, xi: f64) -> (f64, f64, f64) {
        let delta = self.margin_frac * (self.hi[i] - self.lo[i]);
        let s_lo = (xi - self.lo[i]) / delta;
        let s_hi = (self.hi[i] - xi) / delta;
        if s_lo < 1.0 {
            let (q, dq, ddq) = smoothstep(s_lo);
            (q, dq / delta, ddq / (delta * delta))
        } else if s_hi < 1.0 {
            let (q, dq, ddq) = smoothstep(s_hi);
            (q, -dq / delta, ddq / (delta * delta))
        } else {
            (1.0, 0.0, 0.0)
        }
    }

    /// d^xi eta(x) for |xi| <= 2.
    pub fn eval(&self, x: &[f64], xi: &MultiIndex) -> Result<f64> {
        if x.len() != self.dim() || xi.dim() != self.dim() {
            return Err(RitzError::DimensionMismatch {
                expected: self.dim(),
                got: x.len().max(xi.dim()),
            });
        }
        if xi.order() > 2 {
            return Err(RitzError::OrderExceeded {
                requested: xi.order(),
                max: 2,
            });
        }
        let mut prod = 1.0;
        for (i, &e) in xi.0.iter().enumerate() {
            let (q, dq, ddq) = self.factor(i, x[i]);
            prod *= match e {
                0 => q,
                1 => dq,
                2 => ddq,
                _ => unreachable!(),
            };
        }
        Ok(prod)
    }

    /// eta value, gradient and Hessian at x.
    pub fn bundle(&self, x: &[f64]) -> Result<(f64, Vec<f64>, Vec<Vec<f64>>)> {
        let d = self.dim();
        if x.len() != d {
            return Err(RitzError::DimensionMismatch { expected: d, got: x.len() });
        }
        let factors: Vec<(f64, f64, f64)> = (0..d).map(|i| self.factor(i, x[i])).collect();
        let prod_except = |skip: &[usize]| -> f64 {
            factors
                .iter()
                .enumerate()
                .filter(|(i, _)| !skip.contains(i))
                .map(|(_, f)| f.0)
                .product()
        };
        let eta = prod_except(&[]);
        let grad: Vec<f64> = (0..d).map(|i| factors[i].1 * prod_except(&[i])).collect();
        let mut hess = vec![vec![0.0; d]; d];
        for i in 0..d {
            for j in 0..d {
                hess[i][j] = if i == j {
                    factors[i].2 * prod_except(&[i])
                } else {
                    factors[i].1 * factors[j].1 * prod_except(&[i, j])
                };
            }
        }
        Ok((eta, grad, hess))
    }
}

// ---------------------------------------------------------------------------
// Pointwise derivative bundle of the network
// ---------------------------------------------------------------------------

/// Value, gradient and Hessian of the raw network at a point, together with
/// the multi-index layout used to linearize residuals.
#[derive(Debug, Clone)]
pub struct DerivBundle {
    pub u: f64,
    pub grad: Vec<f64>,
    pub hess: Vec<Vec<f64>>,
}

impl DerivBundle {
    pub fn of_network(params: &NetworkParams, x: &[f64]) -> Result<Self> {
        let d = params.d();
        let u = params.eval(x)?;
        let mut grad = vec![0.0; d];
        for i in 0..d {
            grad[i] = params.partial_derivative(x, &MultiIndex::unit(d, i))?;
        }
        let mut hess = vec![vec![0.0; d]; d];
        for i in 0..d {
            for j in i..d {
                let mut e = vec![0; d];
                e[i] += 1;
                e[j] += 1;
                let v = params.partial_derivative(x, &MultiIndex(e))?;
                hess[i][j] = v;
                hess[j][i] = v;
            }
        }
        Ok(DerivBundle { u, grad, hess })
    }
}

/// The canonical stencil for second-order residuals: value, first
/// derivatives, then upper-triangular second derivatives.
pub fn second_order_stencil(d: usize) -> Vec<MultiIndex> {
    let mut idx = vec![MultiIndex::zero(d)];
    for i in 0..d {
        idx.push(MultiIndex::unit(d, i));
    }
    for i in 0..d {
        for j in i..d {
            let mut e = vec![0; d];
            e[i] += 1;
            e[j] += 1;
            idx.push(MultiIndex(e));
        }
    }
    idx
}

/// Builds a DerivBundle from derivative values laid out per
/// [`second_order_stencil`].
pub fn bundle_from_stencil(d: usize, derivs: &[f64]) -> DerivBundle {
    let u = derivs[0];
    let grad = derivs[1..1 + d].to_vec();
    let mut hess = vec![vec![0.0; d]; d];
    let mut k = 1 + d;
    for i in 0..d {
        for j in i..d {
            hess[i][j] = derivs[k];
            hess[j][i] = derivs[k];
            k += 1;
        }
    }
    DerivBundle { u, grad, hess }
}

/// Folds (dR/du, dR/dgrad, dR/dHess) into coefficients per
/// [`second_order_stencil`] order (mixed entries accumulate both symmetric
/// positions).
pub fn coeffs_to_stencil(d: usize, du: f64, dgrad: &[f64], dhess: &[Vec<f64>]) -> Vec<f64> {
    let mut c = Vec::with_capacity(1 + d + d * (d + 1) / 2);
    c.push(du);
    c.extend_from_slice(dgrad);
    for i in 0..d {
        for j in i..d {
            c.push(if i == j {
                dhess[i][i]
            } else {
                dhess[i][j] + dhess[j][i]
            });
        }
    }
    c
}

// ---------------------------------------------------------------------------
// Operator applications
// ---------------------------------------------------------------------------

/// L u_theta(x) = sum_xi c_xi(x) d^xi u_theta(x).
pub fn apply_linear(op: &LinearOperatorSpec, params: &NetworkParams, x: &[f64]) -> Result<f64> {
    let mut acc = 0.0;
    for (xi, c) in op.terms() {
        acc += c.eval(x) * params.partial_derivative(x, xi)?;
    }
    Ok(acc)
}

/// alpha u(x) + beta grad u(x) . n.
pub fn boundary_value(
    params: &NetworkParams,
    x: &[f64],
    normal: &[f64],
    robin: &RobinSpec,
) -> Result<f64> {
    let norm: f64 = normal.iter().map(|v| v * v).sum::<f64>().sqrt();
    if (norm - 1.0).abs() > 1e-12 {
        return Err(RitzError::NonUnitNormal { norm });
    }
    let mut v = robin.alpha * params.eval(x)?;
    if robin.beta != 0.0 {
        let d = params.d();
        for i in 0..d {
            v += robin.beta * normal[i] * params.partial_derivative(x, &MultiIndex::unit(d, i))?;
        }
    }
    Ok(v)
}

/// Burgers residual u_t + u u_x - nu u_xx at (t, x).
pub fn burgers_residual(params: &NetworkParams, tx: &[f64], nu: f64) -> Result<f64> {
    if params.d() != 2 {
        return Err(RitzError::DimensionMismatch { expected: 2, got: params.d() });
    }
    let u = params.eval(tx)?;
    let ut = params.partial_derivative(tx, &MultiIndex(vec![1, 0]))?;
    let ux = params.partial_derivative(tx, &MultiIndex(vec![0, 1]))?;
    let uxx = params.partial_derivative(tx, &MultiIndex(vec![0, 2]))?;
    Ok(ut + u * ux - nu * uxx)
}

/// Burgers residual value and dR/dderivs per the Burgers stencil
/// [(0,0),(1,0),(0,1),(0,2)].
pub fn burgers_stencil() -> Vec<MultiIndex> {
    vec![
        MultiIndex(vec![0, 0]),
        MultiIndex(vec![1, 0]),
        MultiIndex(vec![0, 1]),
        MultiIndex(vec![0, 2]),
    ]
}

pub fn burgers_value_and_coeffs(derivs: &[f64], nu: f64) -> (f64, Vec<f64>) {
    let (u, ut, ux, uxx) = (derivs[0], derivs[1], derivs[2], derivs[3]);
    (ut + u * ux - nu * uxx, vec![ux, 1.0, u, -nu])
}

/// Cutoff-composed bundle: value/gradient/Hessian of eta * u from the raw
/// bundle of u and the analytic derivatives of eta.
fn compose_cutoff(
    cutoff: &CutoffSpec,
    x: &[f64],
    raw: &DerivBundle,
) -> Result<(DerivBundle, f64, Vec<f64>, Vec<Vec<f64>>)> {
    let (eta, geta, heta) = cutoff.bundle(x)?;
    let d = raw.grad.len();
    let u = eta * raw.u;
    let mut grad = vec![0.0; d];
    for i in 0..d {
        grad[i] = eta * raw.grad[i] + geta[i] * raw.u;
    }
    let mut hess = vec![vec![0.0; d]; d];
    for i in 0..d {
        for j in 0..d {
            hess[i][j] = eta * raw.hess[i][j]
                + geta[i] * raw.grad[j]
                + geta[j] * raw.grad[i]
                + heta[i][j] * raw.u;
        }
    }
    Ok((DerivBundle { u, grad, hess }, eta, geta, heta))
}

/// Monotone residual value and linearization coefficients with respect to
/// the RAW network derivatives in [`second_order_stencil`] order.
///
/// Divergence forms are expanded analytically:
///   -div(|v|^{p-2} v)        = -|v|^{p-2} tr(H) - (p-2)|v|^{p-4} v^T H v
///   -div((1+u^2) v)          = -(1+u^2) tr(H) - 2 u |v|^2
/// with v = grad(eta u), H = Hess(eta u).
pub fn monotone_value_and_coeffs(
    op: &NonlinearOperatorSpec,
    cutoff: &CutoffSpec,
    x: &[f64],
    raw: &DerivBundle,
) -> Result<(f64, Vec<f64>)> {
    op.validate()?;
    let d = raw.grad.len();
    let (tld, eta, geta, heta) = compose_cutoff(cutoff, x, raw)?;
    let v = &tld.grad;
    let hm = &tld.hess;
    let vnorm2: f64 = v.iter().map(|t| t * t).sum();
    let vnorm = vnorm2.sqrt();
    let trace: f64 = (0..d).map(|i| hm[i][i]).sum();
    let vhv: f64 = (0..d)
        .map(|i| (0..d).map(|j| v[i] * hm[i][j] * v[j]).sum::<f64>())
        .sum();

    // value and partials with respect to (u~, grad u~, Hess u~)
    let (mut val, mut du, mut dgrad, mut dhess);
    match op {
        NonlinearOperatorSpec::Burgers { .. } => {
            return Err(RitzError::InvalidData(
                "Burgers is not a monotone divergence-form operator".into(),
            ));
        }
        NonlinearOperatorSpec::PLaplaceMonotone { p, q, h } => {
            let p = *p;
            dgrad = vec![0.0; d];
            dhess = vec![vec![0.0; d]; d];
            // -|v|^{p-2} tr(H)
            let a_pow = pow_guarded(vnorm, p - 2.0);
            val = -a_pow * trace;
            for i in 0..d {
                dhess[i][i] -= a_pow;
            }
            if p > 2.0 {
                let da_pow = (p - 2.0) * pow_guarded(vnorm, p - 4.0);
                for i in 0..d {
                    dgrad[i] -= da_pow * v[i] * trace;
                }
                // -(p-2)|v|^{p-4} v^T H v
                let b_pow = (p - 2.0) * pow_guarded(vnorm, p - 4.0);
                val -= b_pow * vhv;
                let db_pow = (p - 2.0) * (p - 4.0) * pow_guarded(vnorm, p - 6.0);
                for i in 0..d {
                    let hv: f64 = (0..d).map(|j| hm[i][j] * v[j]).sum();
                    let vh: f64 = (0..d).map(|j| v[j] * hm[j][i]).sum();
                    dgrad[i] -= db_pow * v[i] * vhv + b_pow * (hv + vh);
                }
                for i in 0..d {
                    for j in 0..d {
                        dhess[i][j] -= b_pow * v[i] * v[j];
                    }
                }
            }
            let qv = q.eval(x);
            if qv < 0.0 {
                return Err(RitzError::InvalidData(format!("q(x) = {qv} < 0 at {x:?}")));
            }
            val += qv * tld.u + h.eval(tld.u)?;
            du = qv + h.deriv(tld.u);
        }
        NonlinearOperatorSpec::QuasilinearMonotone { q, h } => {
            let coef = 1.0 + tld.u * tld.u;
            val = -coef * trace - 2.0 * tld.u * vnorm2;
            du = -2.0 * tld.u * trace - 2.0 * vnorm2;
            dgrad = (0..d).map(|i| -4.0 * tld.u * v[i]).collect();
            dhess = vec![vec![0.0; d]; d];
            for i in 0..d {
                dhess[i][i] = -coef;
            }
            let qv = q.eval(x);
            if qv < 0.0 {
                return Err(RitzError::InvalidData(format!("q(x) = {qv} < 0 at {x:?}")));
            }
            val += qv * tld.u + h.eval(tld.u)?;
            du += qv + h.deriv(tld.u);
        }
    }

    // chain (u~, grad u~, Hess u~) -> raw (u, grad u, Hess u)
    let mut rdu = du * eta;
    let mut rdgrad = vec![0.0; d];
    let mut rdhess = vec![vec![0.0; d]; d];
    for i in 0..d {
        rdu += dgrad[i] * geta[i];
        rdgrad[i] += dgrad[i] * eta;
    }
    for i in 0..d {
        for j in 0..d {
            let c = dhess[i][j];
            rdhess[i][j] += c * eta;
            rdgrad[j] += c * geta[i];
            rdgrad[i] += c * geta[j];
            rdu += c * heta[i][j];
        }
    }
    Ok((val, coeffs_to_stencil(d, rdu, &rdgrad, &rdhess)))
}

/// |v|^e with the singular-gradient guard: returns 0 when the exponent is
/// negative and |v| is below the guard threshold; |v|^0 = 1.
fn pow_guarded(vnorm: f64, e: f64) -> f64 {
    if e == 0.0 {
        1.0
    } else if e < 0.0 && vnorm < GRAD_SINGULARITY_EPS {
        0.0
    } else {
        vnorm.powf(e)
    }
}

/// Monotone residual L u~ + q u~ + h(u~) at x.
pub fn monotone_residual(
    op: &NonlinearOperatorSpec,
    cutoff: &CutoffSpec,
    params: &NetworkParams,
    x: &[f64],
) -> Result<f64> {
    let raw = DerivBundle::of_network(params, x)?;
    Ok(monotone_value_and_coeffs(op, cutoff, x, &raw)?.0)
}

/// Pointwise Ritz energy integrand. Cutoff, when present, is applied to u.
pub fn energy_density(
    spec: &EnergySpec,
    cutoff: Option<&CutoffSpec>,
    params: &NetworkParams,
    x: &[f64],
) -> Result<f64> {
    let raw = DerivBundle::of_network(params, x)?;
    Ok(energy_value_and_coeffs(spec, cutoff, x, &raw)?.0)
}

/// Energy integrand value and linearization vs raw (u, grad u); the Hessian
/// slots of the stencil carry zero coefficients (first-order integrands).
pub fn energy_value_and_coeffs(
    spec: &EnergySpec,
    cutoff: Option<&CutoffSpec>,
    x: &[f64],
    raw: &DerivBundle,
) -> Result<(f64, Vec<f64>)> {
    spec.validate()?;
    let d = raw.grad.len();
    let (u, v, eta, geta) = match cutoff {
        Some(c) => {
            let (tld, eta, geta, _) = compose_cutoff(c, x, raw)?;
            (tld.u, tld.grad, eta, geta)
        }
        None => (raw.u, raw.grad.clone(), 1.0, vec![0.0; d]),
    };
    let vnorm2: f64 = v.iter().map(|t| t * t).sum();
    let (val, du, dgrad): (f64, f64, Vec<f64>) = match spec {
        EnergySpec::PLaplace { p, f } => {
            let p = *p;
            let fv = f.eval(x);
            let val = pow_guarded(vnorm2.sqrt(), p) / p - fv * u;
            let gpow = pow_guarded(vnorm2.sqrt(), p - 2.0);
            (val, -fv, v.iter().map(|vi| gpow * vi).collect())
        }
        EnergySpec::AllenCahn { epsilon } => {
            let e2 = epsilon * epsilon;
            let w = u * u - 1.0;
            let val = 0.5 * e2 * vnorm2 + 0.25 * w * w;
            (val, u * w, v.iter().map(|vi| e2 * vi).collect())
        }
    };
    // chain back to raw derivatives
    let mut rdu = du * eta;
    let mut rdgrad = vec![0.0; d];
    for i in 0..d {
        rdu += dgrad[i] * geta[i];
        rdgrad[i] = dgrad[i] * eta;
    }
    let zeros = vec![vec![0.0; d]; d];
    Ok((val, coeffs_to_stencil(d, rdu, &rdgrad, &zeros)))
}

/// d^xi eta(x) for |xi| <= 2 (public cutoff evaluation).
pub fn cutoff_eval(cutoff: &CutoffSpec, x: &[f64], xi: &MultiIndex) -> Result<f64> {
    cutoff.eval(x, xi)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::functions::HFun;
    use crate::net::{Scaling, Trainable};
    use approx::assert_relative_eq;

    fn single_neuron_2d() -> NetworkParams {
        NetworkParams::new(
            vec![0.8],
            vec![vec![0.6, -1.1]],
            vec![0.25],
            Scaling::Plain,
            Trainable::OuterOnly,
        )
        .unwrap()
    }

    fn small_net(d: usize) -> NetworkParams {
        // fixed small network with incommensurate weights
        let m = 4;
        let mut w = Vec::new();
        let mut b = Vec::new();
        let mut a = Vec::new();
        for k in 0..m {
            w.push((0..d).map(|i| 0.3 + 0.17 * k as f64 - 0.23 * i as f64).collect());
            b.push(0.1 * k as f64 - 0.15);
            a.push(0.5 - 0.2 * k as f64);
        }
        NetworkParams::new(a, w, b, Scaling::Plain, Trainable::OuterOnly).unwrap()
    }

    #[test]
    fn admissibility_requires_unique_leading_term() {
        // two tied top-order terms are rejected by the strict constructor
        let tied = LinearOperatorSpec::new(vec![
            (MultiIndex(vec![2, 0]), Field::Const(1.0)),
            (MultiIndex(vec![0, 2]), Field::Const(1.0)),
        ]);
        assert!(tied.is_err());
        // but the relaxed constructor (used for the Laplacian) accepts them
        let lap = LinearOperatorSpec::neg_laplacian(2);
        assert_eq!(lap.terms().len(), 2);
        // heat operator has the unique leading term (0,2)
        assert_eq!(LinearOperatorSpec::heat_1d().leading(), &MultiIndex(vec![0, 2]));
    }

    #[test]
    fn heat_operator_matches_finite_differences() {
        let params = single_neuron_2d();
        let op = LinearOperatorSpec::heat_1d();
        let x = [0.4, -0.3];
        let analytic = apply_linear(&op, &params, &x).unwrap();
        let h = 1e-5;
        let u = |t: f64, s: f64| params.eval(&[t, s]).unwrap();
        let ut = (u(x[0] + h, x[1]) - u(x[0] - h, x[1])) / (2.0 * h);
        let uxx = (u(x[0], x[1] + h) - 2.0 * u(x[0], x[1]) + u(x[0], x[1] - h)) / (h * h);
        let fd = ut - uxx;
        assert!((analytic - fd).abs() / fd.abs().max(1e-12) < 1e-5, "{analytic} vs {fd}");
    }

    #[test]
    fn robin_boundary_matches_directional_differences() {
        let params = small_net(2);
        let robin = RobinSpec { alpha: 0.7, beta: -1.3 };
        let x = [0.2, 0.0];
        let normal = [0.0, -1.0];
        let analytic = boundary_value(&params, &x, &normal, &robin).unwrap();
        let h = 1e-6;
        let shift = |s: f64| {
            params
                .eval(&[x[0] + s * normal[0], x[1] + s * normal[1]])
                .unwrap()
        };
        let dn = (shift(h) - shift(-h)) / (2.0 * h);
        let fd = robin.alpha * params.eval(&x).unwrap() + robin.beta * dn;
        assert!((analytic - fd).abs() < 1e-6, "{analytic} vs {fd}");
    }

    #[test]
    fn boundary_value_rejects_non_unit_normal() {
        let params = small_net(2);
        let robin = RobinSpec::dirichlet();
        let res = boundary_value(&params, &[0.0, 0.0], &[0.5, 0.5], &robin);
        assert!(matches!(res, Err(RitzError::NonUnitNormal { .. })));
    }

    #[test]
    fn burgers_residual_matches_finite_differences() {
        let params = small_net(2);
        let nu = 0.01 / std::f64::consts::PI;
        let tx = [0.3, 0.45];
        let analytic = burgers_residual(&params, &tx, nu).unwrap();
        let h = 1e-5;
        let u = |t: f64, s: f64| params.eval(&[t, s]).unwrap();
        let u0 = u(tx[0], tx[1]);
        let ut = (u(tx[0] + h, tx[1]) - u(tx[0] - h, tx[1])) / (2.0 * h);
        let ux = (u(tx[0], tx[1] + h) - u(tx[0], tx[1] - h)) / (2.0 * h);
        let uxx = (u(tx[0], tx[1] + h) - 2.0 * u0 + u(tx[0], tx[1] - h)) / (h * h);
        let fd = ut + u0 * ux - nu * uxx;
        assert!((analytic - fd).abs() / fd.abs().max(1e-12) < 1e-5, "{analytic} vs {fd}");
    }

    #[test]
    fn burgers_value_and_coeffs_linearize_residual() {
        let derivs = [0.4, -0.2, 0.9, 1.5];
        let nu = 0.1;
        let (val, coeffs) = burgers_value_and_coeffs(&derivs, nu);
        assert_relative_eq!(val, -0.2 + 0.4 * 0.9 - 0.1 * 1.5, epsilon = 1e-15);
        // directional derivative check of the linearization
        let dir = [0.3, -0.7, 0.11, 0.5];
        let eps = 1e-7;
        let perturbed: Vec<f64> = derivs.iter().zip(&dir).map(|(d, v)| d + eps * v).collect();
        let (val2, _) = burgers_value_and_coeffs(&perturbed, nu);
        let lin: f64 = coeffs.iter().zip(&dir).map(|(c, v)| c * v).sum();
        assert!(((val2 - val) / eps - lin).abs() < 1e-6);
    }

    #[test]
    fn cutoff_vanishes_on_boundary_and_is_one_inside() {
        let cut = CutoffSpec::with_default_margin(vec![-1.0, -1.0], vec![1.0, 1.0]).unwrap();
        let zero = MultiIndex::zero(2);
        assert_eq!(cut.eval(&[-1.0, 0.3], &zero).unwrap(), 0.0);
        assert_eq!(cut.eval(&[0.2, 1.0], &zero).unwrap(), 0.0);
        assert_eq!(cut.eval(&[0.0, 0.0], &zero).unwrap(), 1.0);
        assert_eq!(cut.eval(&[0.5, -0.3], &zero).unwrap(), 1.0);
    }

    #[test]
    fn cutoff_derivatives_match_finite_differences() {
        let cut = CutoffSpec::with_default_margin(vec![0.0, 0.0], vec![1.0, 1.0]).unwrap();
        // a point inside the ramp of the first coordinate
        let x = [0.05, 0.63];
        let zero = MultiIndex::zero(2);
        let h = 1e-6;
        for i in 0..2 {
            let e = MultiIndex::unit(2, i);
            let mut xp = x;
            xp[i] += h;
            let mut xm = x;
            xm[i] -= h;
            let fd = (cut.eval(&xp, &zero).unwrap() - cut.eval(&xm, &zero).unwrap()) / (2.0 * h);
            assert!((cut.eval(&x, &e).unwrap() - fd).abs() < 1e-6);
            // second derivative against FD of the analytic first derivative
            let mut e2 = vec![0; 2];
            e2[i] = 2;
            let fd2 =
                (cut.eval(&xp, &e).unwrap() - cut.eval(&xm, &e).unwrap()) / (2.0 * h);
            assert!((cut.eval(&x, &MultiIndex(e2)).unwrap() - fd2).abs() < 1e-4);
        }
        // mixed second derivative
        let exy = MultiIndex(vec![1, 1]);
        let ey = MultiIndex::unit(2, 1);
        let fd_mixed = {
            let mut xp = x;
            xp[0] += h;
            let mut xm = x;
            xm[0] -= h;
            (cut.eval(&xp, &ey).unwrap() - cut.eval(&xm, &ey).unwrap()) / (2.0 * h)
        };
        assert!((cut.eval(&x, &exy).unwrap() - fd_mixed).abs() < 1e-6);
    }

    /// eta * u with eta and u both evaluated only through their public
    /// value paths (for nested-FD oracles).
    fn u_tilde(cut: &CutoffSpec, params: &NetworkParams, y: &[f64]) -> f64 {
        cut.eval(y, &MultiIndex::zero(y.len())).unwrap() * params.eval(y).unwrap()
    }

    fn grad_fd(cut: &CutoffSpec, params: &NetworkParams, y: &[f64], h: f64) -> Vec<f64> {
        (0..y.len())
            .map(|i| {
                let mut yp = y.to_vec();
                yp[i] += h;
                let mut ym = y.to_vec();
                ym[i] -= h;
                (u_tilde(cut, params, &yp) - u_tilde(cut, params, &ym)) / (2.0 * h)
            })
            .collect()
    }

    #[test]
    fn p_laplace_monotone_matches_nested_divergence_differences() {
        let params = small_net(2);
        let cut = CutoffSpec::with_default_margin(vec![-1.0, -1.0], vec![1.0, 1.0]).unwrap();
        let op = NonlinearOperatorSpec::PLaplaceMonotone {
            p: 3.0,
            q: Field::Const(0.8),
            h: HFun::Cube,
        };
        let x = [0.94, -0.2]; // inside the ramp so cutoff derivatives engage
        let analytic = monotone_residual(&op, &cut, &params, &x).unwrap();
        // -div(|grad u~|^{p-2} grad u~) by nested central differences
        let h_in = 1e-5;
        let h_out = 2e-4;
        let flux = |y: &[f64], i: usize| -> f64 {
            let g = grad_fd(&cut, &params, y, h_in);
            let gn = g.iter().map(|v| v * v).sum::<f64>().sqrt();
            gn * g[i] // |g|^{p-2} g_i with p = 3
        };
        let mut div = 0.0;
        for i in 0..2 {
            let mut xp = x.to_vec();
            xp[i] += h_out;
            let mut xm = x.to_vec();
            xm[i] -= h_out;
            div += (flux(&xp, i) - flux(&xm, i)) / (2.0 * h_out);
        }
        let ut = u_tilde(&cut, &params, &x);
        let fd = -div + 0.8 * ut + ut * ut * ut;
        assert!(
            (analytic - fd).abs() / fd.abs().max(1e-8) < 1e-4,
            "{analytic} vs {fd}"
        );
    }

    #[test]
    fn quasilinear_monotone_matches_nested_divergence_differences() {
        let params = small_net(2);
        let cut = CutoffSpec::with_default_margin(vec![-1.0, -1.0], vec![1.0, 1.0]).unwrap();
        let op = NonlinearOperatorSpec::QuasilinearMonotone {
            q: Field::Const(0.5),
            h: HFun::Zero,
        };
        let x = [0.3, 0.92];
        let analytic = monotone_residual(&op, &cut, &params, &x).unwrap();
        let h_in = 1e-4;
        let h_out = 1e-3;
        let flux = |y: &[f64], i: usize| -> f64 {
            let g = grad_fd(&cut, &params, y, h_in);
            (1.0 + u_tilde(&cut, &params, y).powi(2)) * g[i]
        };
        let mut div = 0.0;
        for i in 0..2 {
            let mut xp = x.to_vec();
            xp[i] += h_out;
            let mut xm = x.to_vec();
            xm[i] -= h_out;
            div += (flux(&xp, i) - flux(&xm, i)) / (2.0 * h_out);
        }
        let fd = -div + 0.5 * u_tilde(&cut, &params, &x);
        assert!(
            (analytic - fd).abs() / fd.abs().max(1e-8) < 1e-4,
            "{analytic} vs {fd}"
        );
    }

    #[test]
    fn p_laplace_degenerates_to_laplacian_at_p_two() {
        // p = 2: -div(grad u~) + q u~ is exactly -trace(Hess u~) + q u~
        let params = small_net(2);
        let cut = CutoffSpec::with_default_margin(vec![-1.0, -1.0], vec![1.0, 1.0]).unwrap();
        let op = NonlinearOperatorSpec::PLaplaceMonotone {
            p: 2.0,
            q: Field::Const(0.0),
            h: HFun::Zero,
        };
        for x in [[0.95, 0.1], [0.0, 0.0], [-0.5, 0.93]] {
            let analytic = monotone_residual(&op, &cut, &params, &x).unwrap();
            let raw = DerivBundle::of_network(&params, &x).unwrap();
            let (tld, _, _, _) = compose_cutoff(&cut, &x, &raw).unwrap();
            let neg_lap = -(tld.hess[0][0] + tld.hess[1][1]);
            assert!((analytic - neg_lap).abs() < 1e-10, "{analytic} vs {neg_lap}");
        }
    }

    #[test]
    fn monotone_rejects_negative_q() {
        let params = small_net(2);
        let cut = CutoffSpec::with_default_margin(vec![-1.0, -1.0], vec![1.0, 1.0]).unwrap();
        let op = NonlinearOperatorSpec::PLaplaceMonotone {
            p: 2.0,
            q: Field::Const(-1.0),
            h: HFun::Zero,
        };
        assert!(monotone_residual(&op, &cut, &params, &[0.1, 0.1]).is_err());
    }

    #[test]
    fn monotone_rejects_p_below_two() {
        let op = NonlinearOperatorSpec::PLaplaceMonotone {
            p: 1.5,
            q: Field::Const(0.0),
            h: HFun::Zero,
        };
        assert!(op.validate().is_err());
    }

    #[test]
    fn energy_linearization_matches_directional_differences() {
        let d = 2;
        let specs = vec![
            EnergySpec::PLaplace { p: 3.0, f: Field::Const(0.4) },
            EnergySpec::AllenCahn { epsilon: 0.3 },
        ];
        let cut = CutoffSpec::with_default_margin(vec![-1.0, -1.0], vec![1.0, 1.0]).unwrap();
        let x = [0.93, 0.2];
        let stencil = second_order_stencil(d);
        let n_idx = stencil.len();
        let base: Vec<f64> = (0..n_idx).map(|k| 0.3 - 0.07 * k as f64).collect();
        let dir: Vec<f64> = (0..n_idx).map(|k| 0.21 + 0.05 * k as f64).collect();
        for spec in specs {
            let raw = bundle_from_stencil(d, &base);
            let (val, coeffs) = energy_value_and_coeffs(&spec, Some(&cut), &x, &raw).unwrap();
            let eps = 1e-7;
            let pert: Vec<f64> = base.iter().zip(&dir).map(|(b, v)| b + eps * v).collect();
            let raw2 = bundle_from_stencil(d, &pert);
            let (val2, _) = energy_value_and_coeffs(&spec, Some(&cut), &x, &raw2).unwrap();
            let lin: f64 = coeffs.iter().zip(&dir).map(|(c, v)| c * v).sum();
            assert!(
                ((val2 - val) / eps - lin).abs() < 1e-6,
                "{spec:?}: {} vs {lin}",
                (val2 - val) / eps
            );
        }
    }

    #[test]
    fn p_laplace_energy_is_p_homogeneous_in_u() {
        // with f = 0 the density is |grad u|^p / p, homogeneous of degree p
        let mut params = small_net(2);
        let spec = EnergySpec::PLaplace { p: 3.0, f: Field::Const(0.0) };
        let x = [0.4, 0.6];
        let e1 = energy_density(&spec, None, &params, &x).unwrap();
        for a in params.a.iter_mut() {
            *a *= 2.0;
        }
        let e2 = energy_density(&spec, None, &params, &x).unwrap();
        assert_relative_eq!(e2, 8.0 * e1, max_relative = 1e-12);
    }

    #[test]
    fn monotone_linearization_matches_directional_differences() {
        // the coefficients returned for the raw stencil must be the exact
        // first-order response of the residual value
        let d = 2;
        let cut = CutoffSpec::with_default_margin(vec![-1.0, -1.0], vec![1.0, 1.0]).unwrap();
        let op = NonlinearOperatorSpec::PLaplaceMonotone {
            p: 3.0,
            q: Field::Const(0.6),
            h: HFun::Cube,
        };
        let x = [0.91, -0.35];
        let stencil = second_order_stencil(d);
        let base: Vec<f64> = (0..stencil.len()).map(|k| 0.4 - 0.09 * k as f64).collect();
        let dir: Vec<f64> = (0..stencil.len()).map(|k| 0.13 + 0.06 * k as f64).collect();
        let raw = bundle_from_stencil(d, &base);
        let (val, coeffs) = monotone_value_and_coeffs(&op, &cut, &x, &raw).unwrap();
        let eps = 1e-7;
        let pert: Vec<f64> = base.iter().zip(&dir).map(|(b, v)| b + eps * v).collect();
        let (val2, _) =
            monotone_value_and_coeffs(&op, &cut, &x, &bundle_from_stencil(d, &pert)).unwrap();
        let lin: f64 = coeffs.iter().zip(&dir).map(|(c, v)| c * v).sum();
        assert!(((val2 - val) / eps - lin).abs() < 1e-5);
    }
}
