//! Independent oracles: a Cole–Hopf evaluator for the viscous Burgers
//! equation and manufactured exact solutions for linear problems. These
//! paths deliberately avoid the network/operator derivative machinery —
//! they are quadrature and closed-form only — so they can serve as
//! cross-checks for it.

use crate::error::{Result, RitzError};
use crate::functions::Field;
use crate::net::MultiIndex;
use crate::operators::{LinearOperatorSpec, RobinSpec};
use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::{Arc, Mutex, OnceLock};

// ---------------------------------------------------------------------------
// Gauss–Hermite quadrature (physicists' convention, weight e^{-z^2})
// ---------------------------------------------------------------------------

/// Nodes and weights such that ∫ e^{-z²} f(z) dz ≈ Σ w_i f(z_i).
pub fn gauss_hermite(n: usize) -> Arc<(Vec<f64>, Vec<f64>)> {
    static CACHE: OnceLock<Mutex<HashMap<usize, Arc<(Vec<f64>, Vec<f64>)>>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    if let Some(v) = cache.lock().unwrap().get(&n) {
        return v.clone();
    }
    let computed = Arc::new(compute_gauss_hermite(n));
    cache.lock().unwrap().insert(n, computed.clone());
    computed
}

/// Orthonormal Hermite function h_n(z) (weight e^{-z²}) and its
/// derivative, via the stable three-term recurrence.
fn hermite_eval(n: usize, z: f64) -> (f64, f64) {
    let mut p1 = PI.powf(-0.25);
    let mut p2 = 0.0;
    for j in 1..=n {
        let p3 = p2;
        p2 = p1;
        p1 = z * (2.0 / j as f64).sqrt() * p2 - (((j - 1) as f64) / j as f64).sqrt() * p3;
    }
    // h_n'(z) = sqrt(2n) h_{n-1}(z) - z h_n(z); only the sqrt(2n) h_{n-1}
    // part matters at a root, but keep the full derivative for Newton
    ((p1), (2.0 * n as f64).sqrt() * p2 - z * p1)
}

/// All roots are bracketed by a grid scan finer than the minimal root
/// spacing (≈ π/√(2n) in the bulk), then polished by bisection and a
/// final Newton step. Robust for the large node counts (≥ 256) where the
/// classical extrapolated initial guesses lose roots.
fn compute_gauss_hermite(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let m = n / 2;
    let z_max = ((2 * n + 1) as f64).sqrt() + 1.0;
    let step = PI / (2.0 * (2.0 * n as f64).sqrt()) / 4.0;
    let mut found = Vec::with_capacity(m);
    // scan positive half-line; for odd n, z = 0 is itself a root
    let mut z_lo = if n % 2 == 1 { step * 0.5 } else { 0.0 };
    let mut f_lo = hermite_eval(n, z_lo).0;
    while z_lo < z_max && found.len() < m {
        let z_hi = z_lo + step;
        let f_hi = hermite_eval(n, z_hi).0;
        if f_lo == 0.0 {
            found.push(z_lo);
        } else if f_lo * f_hi < 0.0 {
            // bisection to near machine precision
            let (mut a, mut b, mut fa) = (z_lo, z_hi, f_lo);
            for _ in 0..80 {
                let mid = 0.5 * (a + b);
                let fm = hermite_eval(n, mid).0;
                if fm == 0.0 {
                    a = mid;
                    b = mid;
                    break;
                }
                if fa * fm < 0.0 {
                    b = mid;
                } else {
                    a = mid;
                    fa = fm;
                }
                if b - a < 1e-15 * (1.0 + mid.abs()) {
                    break;
                }
            }
            let mut root = 0.5 * (a + b);
            for _ in 0..3 {
                let (p, dp) = hermite_eval(n, root);
                if dp != 0.0 {
                    root -= p / dp;
                }
            }
            found.push(root);
        }
        z_lo = z_hi;
        f_lo = f_hi;
    }
    debug_assert_eq!(found.len(), m, "gauss-hermite root scan missed roots for n = {n}");
    // weights: w = 2 / (h_n'(root))^2, matching the classical formula
    // w = 2 / (sqrt(2n) h_{n-1})^2 since h_n vanishes at a root
    let center = if n % 2 == 1 {
        let (_, dp) = hermite_eval(n, 0.0);
        x[m] = 0.0;
        w[m] = 2.0 / (dp * dp);
        1
    } else {
        0
    };
    let _ = center;
    for (i, &root) in found.iter().enumerate() {
        let (_, dp) = hermite_eval(n, root);
        let weight = 2.0 / (dp * dp);
        // found[] is ascending in (0, z_max); store symmetric pairs
        let hi = n - m + i; // upper half slot
        let lo = m - 1 - i; // mirrored lower slot
        x[hi] = root;
        x[lo] = -root;
        w[hi] = weight;
        w[lo] = weight;
    }
    (x, w)
}

// ---------------------------------------------------------------------------
// Cole–Hopf Burgers reference
// ---------------------------------------------------------------------------

/// Integrand pieces of the Cole–Hopf representation for the initial
/// condition u(0, x) = −sin(πx):
///   u(t,x) = −∫ sin(π(x−η)) F(x−η) e^{-η²/(4νt)} dη
///            / ∫ F(x−η) e^{-η²/(4νt)} dη,
///   F(y) = exp(−cos(πy) / (2πν)).
/// With η = 2√(νt) z the Gaussian kernel becomes the Gauss–Hermite weight.
fn cole_hopf_level(t: f64, x: f64, nu: f64, n_nodes: usize) -> f64 {
    let gh = gauss_hermite(n_nodes);
    let (nodes, weights) = (&gh.0, &gh.1);
    let s = 2.0 * (nu * t).sqrt();
    let inv = 1.0 / (2.0 * PI * nu);
    let mut num = 0.0;
    let mut den = 0.0;
    for (z, w) in nodes.iter().zip(weights) {
        let y = x - s * z;
        // factor the largest exponent out implicitly: cos ∈ [−1, 1], so the
        // unnormalized weight stays within e^{±1/(2πν)}, representable for
        // every ν of interest here
        let f = (-(PI * y).cos() * inv).exp();
        num += w * (PI * y).sin() * f;
        den += w * f;
    }
    -num / den
}

/// Cole–Hopf evaluation with quadrature escalation: node counts double
/// from 64 to 512 until two successive levels agree to 1e-7.
pub fn burgers_reference(t: f64, x: f64, nu: f64) -> Result<f64> {
    if !(t > 0.0) {
        return Err(RitzError::ReferenceDomain(format!("cole-hopf needs t > 0, got {t}")));
    }
    if !(-1.0..=1.0).contains(&x) {
        return Err(RitzError::ReferenceDomain(format!("x must lie in [-1, 1], got {x}")));
    }
    if !(nu > 0.0) {
        return Err(RitzError::ReferenceDomain(format!("nu must be > 0, got {nu}")));
    }
    let mut prev = cole_hopf_level(t, x, nu, 64);
    for &n in &[128usize, 256, 512] {
        let cur = cole_hopf_level(t, x, nu, n);
        if (cur - prev).abs() <= 1e-7 {
            return Ok(cur);
        }
        prev = cur;
    }
    Ok(prev)
}

/// CSV grid (t,x,u) of the reference field, for plotting overlays.
pub fn burgers_reference_grid_csv(ts: &[f64], xs: &[f64], nu: f64) -> Result<String> {
    let mut out = String::from("t,x,u\n");
    for &t in ts {
        for &x in xs {
            out.push_str(&format!("{t:.17e},{x:.17e},{:.17e}\n", burgers_reference(t, x, nu)?));
        }
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Finite-difference Burgers cross-check (IMEX: explicit advection,
// Crank–Nicolson diffusion, Thomas tridiagonal solves)
// ---------------------------------------------------------------------------

/// Solves u_t + u u_x = ν u_xx on [−1,1] with u(0,x) = −sin(πx) and
/// homogeneous Dirichlet walls up to `t_end`; returns the final-time value
/// at `x_query` by linear interpolation. Independent of the Cole–Hopf path.
pub fn burgers_fd_reference(t_end: f64, x_query: f64, nu: f64, nx: usize, nt: usize) -> Result<f64> {
    if !(t_end > 0.0) || nx < 3 || nt < 1 {
        return Err(RitzError::ReferenceDomain("bad finite-difference grid".into()));
    }
    let dx = 2.0 / (nx - 1) as f64;
    let dt = t_end / nt as f64;
    let mut u: Vec<f64> = (0..nx).map(|i| -(PI * (-1.0 + i as f64 * dx)).sin()).collect();
    let r = nu * dt / (dx * dx);

    // Crank–Nicolson diffusion matrix (I − r/2 D2) is constant tridiagonal
    let a = -0.5 * r; // sub/super diagonal
    let b = 1.0 + r; // main diagonal
    let mut adv_prev: Option<Vec<f64>> = None;
    let mut rhs = vec![0.0; nx];
    let mut cp = vec![0.0; nx];
    let mut dp = vec![0.0; nx];
    for _ in 0..nt {
        // advection term −u u_x with central differences
        let adv: Vec<f64> = (0..nx)
            .map(|i| {
                if i == 0 || i == nx - 1 {
                    0.0
                } else {
                    -u[i] * (u[i + 1] - u[i - 1]) / (2.0 * dx)
                }
            })
            .collect();
        // Adams–Bashforth 2 after the first (Euler) step
        for i in 1..nx - 1 {
            let a_term = match &adv_prev {
                Some(prev) => 1.5 * adv[i] - 0.5 * prev[i],
                None => adv[i],
            };
            rhs[i] = u[i] + dt * a_term + 0.5 * r * (u[i + 1] - 2.0 * u[i] + u[i - 1]);
        }
        rhs[0] = 0.0;
        rhs[nx - 1] = 0.0;
        // Thomas algorithm on interior unknowns (Dirichlet walls are 0)
        cp[1] = a / b;
        dp[1] = rhs[1] / b;
        for i in 2..nx - 1 {
            let m = b - a * cp[i - 1];
            cp[i] = a / m;
            dp[i] = (rhs[i] - a * dp[i - 1]) / m;
        }
        u[nx - 2] = dp[nx - 2];
        for i in (1..nx - 2).rev() {
            u[i] = dp[i] - cp[i] * u[i + 1];
        }
        u[0] = 0.0;
        u[nx - 1] = 0.0;
        adv_prev = Some(adv);
    }
    // linear interpolation at x_query
    let pos = (x_query + 1.0) / dx;
    let i = (pos.floor() as usize).min(nx - 2);
    let frac = pos - i as f64;
    Ok(u[i] * (1.0 - frac) + u[i + 1] * frac)
}

// ---------------------------------------------------------------------------
// Manufactured solutions
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ManufacturedId {
    /// u* ≡ 0 in any dimension.
    Zero,
    /// u*(t, x) = e^{−π²t} sin(πx) on a 2-d time slab; the classical heat
    /// kernel mode, exact for u_t = u_xx.
    HeatMode,
    /// u*(x) = Π_i sin(π x_i).
    SinProduct,
}

impl ManufacturedId {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "zero" => Ok(ManufacturedId::Zero),
            "heat_mode" => Ok(ManufacturedId::HeatMode),
            "sin_product" => Ok(ManufacturedId::SinProduct),
            other => Err(RitzError::UnknownFunction(other.into())),
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            ManufacturedId::Zero => "zero",
            ManufacturedId::HeatMode => "heat_mode",
            ManufacturedId::SinProduct => "sin_product",
        }
    }
}

/// k-th derivative of sin at phase π x: d^k/dx^k sin(πx) = π^k sin(πx + kπ/2).
fn sin_deriv(x: f64, k: usize) -> f64 {
    PI.powi(k as i32) * (PI * x + k as f64 * PI / 2.0).sin()
}

/// Exact partial derivative ∂^ξ u* at x (closed form, no network code).
pub fn manufactured_partial(id: ManufacturedId, x: &[f64], xi: &MultiIndex) -> Result<f64> {
    if xi.dim() != x.len() {
        return Err(RitzError::DimensionMismatch { expected: x.len(), got: xi.dim() });
    }
    match id {
        ManufacturedId::Zero => Ok(0.0),
        ManufacturedId::HeatMode => {
            if x.len() != 2 {
                return Err(RitzError::DimensionMismatch { expected: 2, got: x.len() });
            }
            let (j, k) = (xi.0[0], xi.0[1]);
            Ok((-PI * PI).powi(j as i32) * (-PI * PI * x[0]).exp() * sin_deriv(x[1], k))
        }
        ManufacturedId::SinProduct => {
            let mut v = 1.0;
            for (i, &k) in xi.0.iter().enumerate() {
                v *= sin_deriv(x[i], k);
            }
            Ok(v)
        }
    }
}

pub fn manufactured_value(id: ManufacturedId, x: &[f64]) -> Result<f64> {
    manufactured_partial(id, x, &MultiIndex::zero(x.len()))
}

/// Exact solution u*, matching source f = L u*, and boundary data
/// g = α u* (Robin data with β ≠ 0 needs the facet normal and is not
/// representable as a plain field; request α-only data here).
pub fn manufactured_linear(
    id: ManufacturedId,
    op: &LinearOperatorSpec,
    robin: &RobinSpec,
) -> Result<(Field, Field, Field)> {
    if robin.beta != 0.0 {
        return Err(RitzError::Config(
            "manufactured boundary data supports alpha-only (Dirichlet-type) conditions".into(),
        ));
    }
    let u = {
        Field::Custom(Arc::new(move |x: &[f64]| manufactured_value(id, x).unwrap_or(f64::NAN)))
    };
    let op_terms: Vec<(MultiIndex, Field)> = op.terms().to_vec();
    let f = Field::Custom(Arc::new(move |x: &[f64]| {
        op_terms
            .iter()
            .map(|(xi, c)| {
                c.eval(x) * manufactured_partial(id, x, xi).unwrap_or(f64::NAN)
            })
            .sum()
    }));
    let alpha = robin.alpha;
    let g = Field::Custom(Arc::new(move |x: &[f64]| {
        alpha * manufactured_value(id, x).unwrap_or(f64::NAN)
    }));
    Ok((u, f, g))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::functions::Field as F;
    use approx::assert_relative_eq;

    const NU: f64 = 0.01 / PI;

    #[test]
    fn gauss_hermite_moments() {
        for &n in &[8usize, 64, 128, 512] {
            let gh = gauss_hermite(n);
            let total: f64 = gh.1.iter().sum();
            assert_relative_eq!(total, PI.sqrt(), max_relative = 1e-12);
            let second: f64 = gh.0.iter().zip(&gh.1).map(|(z, w)| w * z * z).sum();
            assert_relative_eq!(second, PI.sqrt() / 2.0, max_relative = 1e-11);
        }
    }

    #[test]
    fn burgers_reference_odd_symmetry() {
        for &t in &[0.1, 0.5, 1.0] {
            assert!(burgers_reference(t, 0.0, NU).unwrap().abs() < 1e-10);
            for &x in &[0.15, 0.4, 0.75] {
                let up = burgers_reference(t, x, NU).unwrap();
                let um = burgers_reference(t, -x, NU).unwrap();
                assert!((up + um).abs() < 1e-7, "t={t} x={x}: {up} vs {um}");
            }
        }
    }

    #[test]
    fn burgers_reference_rejects_bad_domain() {
        assert!(burgers_reference(0.0, 0.5, NU).is_err());
        assert!(burgers_reference(-0.1, 0.5, NU).is_err());
        assert!(burgers_reference(0.5, 1.5, NU).is_err());
    }

    #[test]
    fn burgers_cole_hopf_vs_crank_nicolson() {
        let t = 0.5;
        let x = 0.25;
        let ch = burgers_reference(t, x, NU).unwrap();
        let fd = burgers_fd_reference(t, x, NU, 4097, 2048).unwrap();
        assert!((ch - fd).abs() < 1e-4, "cole-hopf {ch} vs crank-nicolson {fd}");
    }

    #[test]
    fn burgers_reference_satisfies_pde_in_fd_sense() {
        // central differences of the reference field plugged into the PDE
        let h = 1e-3;
        for &t in &[0.1, 0.3, 0.5] {
            for &x in &[-0.6, -0.2, 0.2, 0.6] {
                let u = |tt: f64, xx: f64| burgers_reference(tt, xx, NU).unwrap();
                let u0 = u(t, x);
                let ut = (u(t + h, x) - u(t - h, x)) / (2.0 * h);
                let ux = (u(t, x + h) - u(t, x - h)) / (2.0 * h);
                let uxx = (u(t, x + h) - 2.0 * u0 + u(t, x - h)) / (h * h);
                let res = ut + u0 * ux - NU * uxx;
                assert!(res.abs() < 1e-3, "t={t} x={x}: residual {res}");
            }
        }
    }

    #[test]
    fn manufactured_zero_is_trivial() {
        let op = LinearOperatorSpec::heat_1d();
        let robin = RobinSpec::dirichlet();
        let (u, f, g) = manufactured_linear(ManufacturedId::Zero, &op, &robin).unwrap();
        for &x in &[[0.2, -0.4], [0.9, 0.1]] {
            assert_eq!(u.eval(&x), 0.0);
            assert_eq!(f.eval(&x), 0.0);
            assert_eq!(g.eval(&x), 0.0);
        }
    }

    #[test]
    fn heat_mode_is_exact_heat_solution() {
        // u_t - u_xx applied to e^{-pi^2 t} sin(pi x) vanishes
        let op = LinearOperatorSpec::heat_1d();
        let robin = RobinSpec::dirichlet();
        let (u, f, g) = manufactured_linear(ManufacturedId::HeatMode, &op, &robin).unwrap();
        for &(t, x) in &[(0.0, 0.3), (0.2, -0.7), (0.8, 0.5)] {
            let p = [t, x];
            assert!(f.eval(&p).abs() < 1e-12, "source must vanish, got {}", f.eval(&p));
            let expect = (-PI * PI * t).exp() * (PI * x).sin();
            assert_relative_eq!(u.eval(&p), expect, epsilon = 1e-14);
            assert_relative_eq!(g.eval(&p), expect, epsilon = 1e-14);
        }
    }

    #[test]
    fn sin_product_source_matches_fd_application() {
        // random-coefficient second-order operator in 2-d
        let op = LinearOperatorSpec::new_relaxed(vec![
            (MultiIndex(vec![2, 0]), F::Const(-0.7)),
            (MultiIndex(vec![0, 2]), F::Const(-1.3)),
            (MultiIndex(vec![1, 0]), F::Const(0.4)),
            (MultiIndex(vec![0, 0]), F::Const(2.1)),
        ])
        .unwrap();
        let robin = RobinSpec::dirichlet();
        let (u, f, _) = manufactured_linear(ManufacturedId::SinProduct, &op, &robin).unwrap();
        let h = 1e-4;
        for &(x0, x1) in &[(0.2, 0.3), (-0.5, 0.8), (0.9, -0.9)] {
            let uu = |a: f64, b: f64| u.eval(&[a, b]);
            let uxx = (uu(x0 + h, x1) - 2.0 * uu(x0, x1) + uu(x0 - h, x1)) / (h * h);
            let uyy = (uu(x0, x1 + h) - 2.0 * uu(x0, x1) + uu(x0, x1 - h)) / (h * h);
            let ux = (uu(x0 + h, x1) - uu(x0 - h, x1)) / (2.0 * h);
            let fd = -0.7 * uxx - 1.3 * uyy + 0.4 * ux + 2.1 * uu(x0, x1);
            let exact = f.eval(&[x0, x1]);
            assert!(
                (fd - exact).abs() / exact.abs().max(1e-6) < 1e-6,
                "({x0},{x1}): fd {fd} vs exact {exact}"
            );
        }
    }

    #[test]
    fn manufactured_unknown_id_errors() {
        assert!(ManufacturedId::parse("not_a_solution").is_err());
        assert_eq!(ManufacturedId::parse("heat_mode").unwrap(), ManufacturedId::HeatMode);
    }

    #[test]
    fn reference_grid_csv_shape() {
        let csv = burgers_reference_grid_csv(&[0.25], &[-0.5, 0.0, 0.5], NU).unwrap();
        assert_eq!(csv.lines().count(), 4);
        assert!(csv.starts_with("t,x,u\n"));
    }
}
