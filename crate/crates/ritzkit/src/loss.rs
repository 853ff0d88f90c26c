//! PINN and Deep Ritz objectives in the empirical convention
//! J = 1/2 (|s|^2 + |h|^2) with
//!   s_p = (L u(x_p) - f(x_p)) / sqrt(n1),
//!   h_j = sqrt(lambda / n2) (B u(x_j) - g(x_j)),
//! plus analytic gradients with respect to the trainable set.
//!
//! For outer-only (random feature) training, per-point derivative features
//! are precomputed once since the inner parameters are frozen; training
//! steps then reduce to dense dot products.

use crate::error::{Result, RitzError};
use crate::functions::Field;
use crate::geometry::CollocationSet;
use crate::net::{MultiIndex, NetworkParams, Trainable};
use crate::operators::{
    self, burgers_stencil, burgers_value_and_coeffs, bundle_from_stencil, second_order_stencil,
    CutoffSpec, EnergySpec, LinearOperatorSpec, NonlinearOperatorSpec, RobinSpec,
};
use rayon::prelude::*;

/// Chunk size for deterministic parallel reduction over collocation points.
const CHUNK: usize = 256;

#[derive(Debug, Clone)]
pub enum LossKind {
    PinnLinear(LinearOperatorSpec),
    PinnBurgers { nu: f64 },
    PinnMonotone { op: NonlinearOperatorSpec, cutoff: CutoffSpec },
    Ritz { spec: EnergySpec, cutoff: Option<CutoffSpec> },
}

#[derive(Debug, Clone)]
pub struct LossSpec {
    pub kind: LossKind,
    pub robin: RobinSpec,
    /// Interior source f (PINN kinds only; Ritz sources live in the energy).
    pub f: Field,
    /// Boundary data g.
    pub g: Field,
    pub lambda: f64,
    pub collocation: CollocationSet,
}

impl LossSpec {
    pub fn validate(&self) -> Result<()> {
        if self.lambda < 0.0 {
            return Err(RitzError::InvalidData("lambda must be >= 0".into()));
        }
        if self.collocation.n_boundary() == 0 {
            let has_cutoff = matches!(
                &self.kind,
                LossKind::PinnMonotone { .. } | LossKind::Ritz { cutoff: Some(_), .. }
            );
            if !has_cutoff {
                return Err(RitzError::InvalidData(
                    "n2 = 0 requires a cutoff enforcing the boundary condition".into(),
                ));
            }
        }
        Ok(())
    }

    fn is_pinn(&self) -> bool {
        !matches!(self.kind, LossKind::Ritz { .. })
    }

    /// Multi-indices of raw network derivatives the interior term touches.
    fn interior_stencil(&self, d: usize) -> Vec<MultiIndex> {
        match &self.kind {
            LossKind::PinnLinear(op) => op.terms().iter().map(|(xi, _)| xi.clone()).collect(),
            LossKind::PinnBurgers { .. } => burgers_stencil(),
            LossKind::PinnMonotone { .. } | LossKind::Ritz { .. } => second_order_stencil(d),
        }
    }

    /// Interior pointwise value and dvalue/dderivs. For PINN kinds the
    /// value is the residual including the -f term; for Ritz it is the
    /// energy integrand.
    fn interior_value_coeffs(&self, x: &[f64], derivs: &[f64], d: usize) -> Result<(f64, Vec<f64>)> {
        match &self.kind {
            LossKind::PinnLinear(op) => {
                let coeffs: Vec<f64> = op.terms().iter().map(|(_, c)| c.eval(x)).collect();
                let val: f64 = coeffs.iter().zip(derivs).map(|(c, v)| c * v).sum();
                Ok((val - self.f.eval(x), coeffs))
            }
            LossKind::PinnBurgers { nu } => {
                let (val, coeffs) = burgers_value_and_coeffs(derivs, *nu);
                Ok((val - self.f.eval(x), coeffs))
            }
            LossKind::PinnMonotone { op, cutoff } => {
                let raw = bundle_from_stencil(d, derivs);
                let (val, coeffs) = operators::monotone_value_and_coeffs(op, cutoff, x, &raw)?;
                Ok((val - self.f.eval(x), coeffs))
            }
            LossKind::Ritz { spec, cutoff } => {
                let raw = bundle_from_stencil(d, derivs);
                operators::energy_value_and_coeffs(spec, cutoff.as_ref(), x, &raw)
            }
        }
    }

    /// Boundary stencil: value plus first derivatives when beta != 0.
    fn boundary_stencil(&self, d: usize) -> Vec<MultiIndex> {
        let mut idx = vec![MultiIndex::zero(d)];
        if self.robin.beta != 0.0 {
            for i in 0..d {
                idx.push(MultiIndex::unit(d, i));
            }
        }
        idx
    }

    /// B u - g at boundary point j given derivative values in boundary
    /// stencil order; returns (value, coefficients).
    fn boundary_value_coeffs(&self, x: &[f64], normal: &[f64], derivs: &[f64]) -> (f64, Vec<f64>) {
        let mut coeffs = vec![self.robin.alpha];
        let mut val = self.robin.alpha * derivs[0];
        if self.robin.beta != 0.0 {
            for (i, n_i) in normal.iter().enumerate() {
                coeffs.push(self.robin.beta * n_i);
                val += self.robin.beta * n_i * derivs[1 + i];
            }
        }
        (val - self.g.eval(x), coeffs)
    }
}

/// Interior/boundary residual vectors; J_emp = 1/2 (|s|^2 + |h|^2) exactly
/// for PINN kinds.
#[derive(Debug, Clone)]
pub struct ResidualVectors {
    pub s: Vec<f64>,
    pub h: Vec<f64>,
}

// ---------------------------------------------------------------------------
// Trainable parameter vector packing
// ---------------------------------------------------------------------------

pub fn trainable_dim(params: &NetworkParams) -> usize {
    match params.trainable {
        Trainable::OuterOnly => params.m(),
        Trainable::Full => params.m() * (params.d() + 2),
    }
}

/// Packs the trainable set: [a...] for outer-only, [a..., (w_k, b_k)...]
/// for full training (inner layout matches `inner_param_gradient`).
pub fn pack(params: &NetworkParams) -> Vec<f64> {
    let mut theta = params.a.clone();
    if params.trainable == Trainable::Full {
        for k in 0..params.m() {
            theta.extend_from_slice(&params.w[k]);
            theta.push(params.b[k]);
        }
    }
    theta
}

pub fn unpack_into(params: &mut NetworkParams, theta: &[f64]) {
    let m = params.m();
    let d = params.d();
    params.a.copy_from_slice(&theta[..m]);
    if params.trainable == Trainable::Full {
        for k in 0..m {
            let base = m + k * (d + 1);
            params.w[k].copy_from_slice(&theta[base..base + d]);
            params.b[k] = theta[base + d];
        }
    }
}

// ---------------------------------------------------------------------------
// Evaluator
// ---------------------------------------------------------------------------

/// Per-point precomputed features for outer-only training: one feature
/// vector (length m) per stencil multi-index.
struct PointFeatures {
    features: Vec<Vec<f64>>,
}

/// Loss/gradient evaluator over a packed trainable vector. Immutable after
/// construction; reusable across training steps.
pub struct LossEvaluator {
    spec: LossSpec,
    template: NetworkParams,
    interior_stencil: Vec<MultiIndex>,
    boundary_stencil: Vec<MultiIndex>,
    cache: Option<(Vec<PointFeatures>, Vec<PointFeatures>)>,
}

impl LossEvaluator {
    pub fn new(spec: LossSpec, params: &NetworkParams) -> Result<Self> {
        spec.validate()?;
        if let LossKind::PinnBurgers { .. } = spec.kind {
            if params.d() != 2 {
                return Err(RitzError::DimensionMismatch { expected: 2, got: params.d() });
            }
        }
        let d = params.d();
        let interior_stencil = spec.interior_stencil(d);
        let boundary_stencil = spec.boundary_stencil(d);
        let cache = if params.trainable == Trainable::OuterOnly {
            let build = |points: &[Vec<f64>], stencil: &[MultiIndex]| -> Result<Vec<PointFeatures>> {
                points
                    .par_iter()
                    .map(|x| {
                        let features = stencil
                            .iter()
                            .map(|xi| params.feature_derivative_vector(x, xi))
                            .collect::<Result<Vec<_>>>()?;
                        Ok(PointFeatures { features })
                    })
                    .collect()
            };
            Some((
                build(&spec.collocation.interior, &interior_stencil)?,
                build(&spec.collocation.boundary, &boundary_stencil)?,
            ))
        } else {
            None
        };
        Ok(LossEvaluator {
            spec,
            template: params.clone(),
            interior_stencil,
            boundary_stencil,
            cache,
        })
    }

    pub fn spec(&self) -> &LossSpec {
        &self.spec
    }

    pub fn dim(&self) -> usize {
        trainable_dim(&self.template)
    }

    pub fn initial_theta(&self) -> Vec<f64> {
        pack(&self.template)
    }

    /// Network parameters corresponding to a packed trainable vector.
    pub fn params_with(&self, theta: &[f64]) -> NetworkParams {
        let mut p = self.template.clone();
        unpack_into(&mut p, theta);
        p
    }

    fn derivs_at(
        &self,
        params: &NetworkParams,
        cache: Option<&PointFeatures>,
        theta_a: &[f64],
        x: &[f64],
        stencil: &[MultiIndex],
    ) -> Result<Vec<f64>> {
        match cache {
            Some(pf) => Ok(pf
                .features
                .iter()
                .map(|feat| feat.iter().zip(theta_a).map(|(f, a)| f * a).sum())
                .collect()),
            None => stencil
                .iter()
                .map(|xi| params.partial_derivative(x, xi))
                .collect(),
        }
    }

    /// s and h residual vectors at theta.
    pub fn residual_vectors(&self, theta: &[f64]) -> Result<ResidualVectors> {
        let params = self.params_with(theta);
        let coll = &self.spec.collocation;
        let n1 = coll.n_interior();
        let n2 = coll.n_boundary();
        let inv_sqrt_n1 = 1.0 / (n1.max(1) as f64).sqrt();
        let lam_sqrt = if n2 > 0 { (self.spec.lambda / n2 as f64).sqrt() } else { 0.0 };
        let m = params.m();

        let s = coll
            .interior
            .par_iter()
            .enumerate()
            .map(|(p, x)| {
                let pf = self.cache.as_ref().map(|(i, _)| &i[p]);
                let derivs =
                    self.derivs_at(&params, pf, &theta[..m], x, &self.interior_stencil)?;
                let (val, _) = self.spec.interior_value_coeffs(x, &derivs, params.d())?;
                Ok(val * inv_sqrt_n1)
            })
            .collect::<Result<Vec<f64>>>()?;
        let h = coll
            .boundary
            .par_iter()
            .enumerate()
            .map(|(j, x)| {
                let pf = self.cache.as_ref().map(|(_, b)| &b[j]);
                let derivs =
                    self.derivs_at(&params, pf, &theta[..m], x, &self.boundary_stencil)?;
                let (val, _) = self.spec.boundary_value_coeffs(x, &coll.normals[j], &derivs);
                Ok(val * lam_sqrt)
            })
            .collect::<Result<Vec<f64>>>()?;
        Ok(ResidualVectors { s, h })
    }

    /// Empirical loss at theta.
    pub fn loss(&self, theta: &[f64]) -> Result<f64> {
        Ok(self.loss_grad_impl(theta, false)?.0)
    }

    /// Loss and gradient at theta.
    pub fn loss_grad(&self, theta: &[f64]) -> Result<(f64, Vec<f64>)> {
        let (l, g) = self.loss_grad_impl(theta, true)?;
        Ok((l, g.unwrap()))
    }

    pub fn grad(&self, theta: &[f64]) -> Result<Vec<f64>> {
        Ok(self.loss_grad_impl(theta, true)?.1.unwrap())
    }

    fn loss_grad_impl(&self, theta: &[f64], want_grad: bool) -> Result<(f64, Option<Vec<f64>>)> {
        let params = self.params_with(theta);
        let coll = &self.spec.collocation;
        let d = params.d();
        let m = params.m();
        let n1 = coll.n_interior();
        let n2 = coll.n_boundary();
        let dim = self.dim();
        let is_pinn = self.spec.is_pinn();
        let full = params.trainable == Trainable::Full;
        let inv_sqrt_n1 = 1.0 / (n1.max(1) as f64).sqrt();
        let lam_sqrt = if n2 > 0 { (self.spec.lambda / n2 as f64).sqrt() } else { 0.0 };

        // Per-chunk partial (loss, grad) accumulators, reduced in chunk
        // order so results do not depend on thread count.
        let process_region = |interior: bool| -> Result<(f64, Option<Vec<f64>>)> {
            let points: &[Vec<f64>] = if interior { &coll.interior } else { &coll.boundary };
            let n = points.len();
            let idx_chunks: Vec<(usize, usize)> = (0..n)
                .step_by(CHUNK)
                .map(|s| (s, (s + CHUNK).min(n)))
                .collect();
            let partials: Vec<(f64, Option<Vec<f64>>)> = idx_chunks
                .par_iter()
                .map(|&(lo, hi)| -> Result<(f64, Option<Vec<f64>>)> {
                    let mut loss_acc = 0.0;
                    let mut grad_acc = if want_grad { Some(vec![0.0; dim]) } else { None };
                    for p in lo..hi {
                        let x = &points[p];
                        let stencil = if interior {
                            &self.interior_stencil
                        } else {
                            &self.boundary_stencil
                        };
                        let pf = self.cache.as_ref().map(|(i, b)| {
                            if interior { &i[p] } else { &b[p] }
                        });
                        let derivs = self.derivs_at(&params, pf, &theta[..m], x, stencil)?;
                        // residual value, its d/dderivs, and the scale factor
                        let (coeffs, weight_for_loss, factor_for_grad);
                        if interior {
                            let (v, c) = self.spec.interior_value_coeffs(x, &derivs, d)?;
                            if is_pinn {
                                // s_p = v / sqrt(n1); contributes 1/2 s_p^2
                                let s = v * inv_sqrt_n1;
                                coeffs = c;
                                weight_for_loss = 0.5 * s * s;
                                factor_for_grad = s * inv_sqrt_n1;
                            } else {
                                // ritz: contributes w_p * integrand
                                let w = coll.interior_weights[p];
                                coeffs = c;
                                weight_for_loss = w * v;
                                factor_for_grad = w;
                            }
                        } else {
                            let (v, c) =
                                self.spec.boundary_value_coeffs(x, &coll.normals[p], &derivs);
                            let hval = v * lam_sqrt;
                            coeffs = c;
                            let half = if is_pinn { 0.5 } else { 1.0 };
                            weight_for_loss = half * hval * hval;
                            factor_for_grad = (2.0 * half) * hval * lam_sqrt;
                        }
                        loss_acc += weight_for_loss;
                        if let Some(g) = grad_acc.as_mut() {
                            if factor_for_grad != 0.0 {
                                for (k, (xi, &cf)) in stencil.iter().zip(&coeffs).enumerate() {
                                    if cf == 0.0 {
                                        continue;
                                    }
                                    let cfac = factor_for_grad * cf;
                                    match pf {
                                        Some(pfc) => {
                                            let feats = &pfc.features[k];
                                            for (gk, fk) in g[..m].iter_mut().zip(feats) {
                                                *gk += cfac * fk;
                                            }
                                        }
                                        None => {
                                            let feats = params.feature_derivative_vector(x, xi)?;
                                            for (gk, fk) in g[..m].iter_mut().zip(&feats) {
                                                *gk += cfac * fk;
                                            }
                                            if full {
                                                let ig = params.inner_param_gradient(x, xi)?;
                                                for (gk, ik) in g[m..].iter_mut().zip(&ig) {
                                                    *gk += cfac * ik;
                                                }
                                            }
                                        }
                                    }
                                }
                            }
                        }
                    }
                    Ok((loss_acc, grad_acc))
                })
                .collect::<Result<Vec<_>>>()?;
            let mut loss = 0.0;
            let mut grad = if want_grad { Some(vec![0.0; dim]) } else { None };
            for (l, g) in partials {
                loss += l;
                if let (Some(acc), Some(part)) = (grad.as_mut(), g) {
                    for (a, b) in acc.iter_mut().zip(part) {
                        *a += b;
                    }
                }
            }
            Ok((loss, grad))
        };

        let (li, gi) = process_region(true)?;
        let (lb, gb) = process_region(false)?;
        let loss = li + lb;
        let grad = match (gi, gb) {
            (Some(mut a), Some(b)) => {
                for (x, y) in a.iter_mut().zip(b) {
                    *x += y;
                }
                Some(a)
            }
            _ => None,
        };
        Ok((loss, grad))
    }

    /// Per-point gradients of the normalized residuals s_p and h_j with
    /// respect to the trainable vector (columns of the residual Jacobian).
    /// Used by the Gram diagnostics.
    pub fn residual_jacobian(&self, theta: &[f64]) -> Result<(Vec<Vec<f64>>, Vec<Vec<f64>>)> {
        let params = self.params_with(theta);
        let coll = &self.spec.collocation;
        let d = params.d();
        let m = params.m();
        let full = params.trainable == Trainable::Full;
        let dim = self.dim();
        let n1 = coll.n_interior();
        let n2 = coll.n_boundary();
        let inv_sqrt_n1 = 1.0 / (n1.max(1) as f64).sqrt();
        let lam_sqrt = if n2 > 0 { (self.spec.lambda / n2 as f64).sqrt() } else { 0.0 };

        let one_region = |interior: bool| -> Result<Vec<Vec<f64>>> {
            let points: &[Vec<f64>] = if interior { &coll.interior } else { &coll.boundary };
            points
                .par_iter()
                .enumerate()
                .map(|(p, x)| {
                    let stencil = if interior {
                        &self.interior_stencil
                    } else {
                        &self.boundary_stencil
                    };
                    let pf = self
                        .cache
                        .as_ref()
                        .map(|(i, b)| if interior { &i[p] } else { &b[p] });
                    let derivs = self.derivs_at(&params, pf, &theta[..m], x, stencil)?;
                    let (coeffs, scale) = if interior {
                        let (_, c) = self.spec.interior_value_coeffs(x, &derivs, d)?;
                        (c, inv_sqrt_n1)
                    } else {
                        let (_, c) = self.spec.boundary_value_coeffs(x, &coll.normals[p], &derivs);
                        (c, lam_sqrt)
                    };
                    let mut col = vec![0.0; dim];
                    for (k, xi) in stencil.iter().enumerate() {
                        let cf = scale * coeffs[k];
                        if cf == 0.0 {
                            continue;
                        }
                        match pf {
                            Some(pfc) => {
                                for (gk, fk) in col[..m].iter_mut().zip(&pfc.features[k]) {
                                    *gk += cf * fk;
                                }
                            }
                            None => {
                                let feats = params.feature_derivative_vector(x, xi)?;
                                for (gk, fk) in col[..m].iter_mut().zip(&feats) {
                                    *gk += cf * fk;
                                }
                                if full {
                                    let ig = params.inner_param_gradient(x, xi)?;
                                    for (gk, ik) in col[m..].iter_mut().zip(&ig) {
                                        *gk += cf * ik;
                                    }
                                }
                            }
                        }
                    }
                    Ok(col)
                })
                .collect()
        };
        Ok((one_region(true)?, one_region(false)?))
    }
}

// ---------------------------------------------------------------------------
// Free functions matching the operation contracts
// ---------------------------------------------------------------------------

pub fn residual_vectors(spec: &LossSpec, params: &NetworkParams) -> Result<ResidualVectors> {
    let ev = LossEvaluator::new(spec.clone(), params)?;
    ev.residual_vectors(&pack(params))
}

pub fn empirical_loss(spec: &LossSpec, params: &NetworkParams) -> Result<f64> {
    let ev = LossEvaluator::new(spec.clone(), params)?;
    ev.loss(&pack(params))
}

pub fn loss_gradient(spec: &LossSpec, params: &NetworkParams) -> Result<Vec<f64>> {
    let ev = LossEvaluator::new(spec.clone(), params)?;
    ev.grad(&pack(params))
}
