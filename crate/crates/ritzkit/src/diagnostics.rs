//! Convergence diagnostics: tangent-kernel Gram matrices and their drift,
//! a dense Jacobi symmetric eigensolver, boundary coercivity certificates,
//! and discrete linear-independence determinants.

use crate::error::{Result, RitzError};
use crate::geometry::{self, check_admissible, Domain};
use crate::loss::LossEvaluator;
use crate::net::{tanh_kth_derivative, NetworkParams, Trainable};
use crate::operators::RobinSpec;
use rand::Rng;
use rayon::prelude::*;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Provenance {
    InteriorOuter,
    BoundaryOuter,
    FullW,
    FullA,
    BoundaryFeatureGamma,
}

impl Provenance {
    pub fn as_str(&self) -> &'static str {
        match self {
            Provenance::InteriorOuter => "interior_outer",
            Provenance::BoundaryOuter => "boundary_outer",
            Provenance::FullW => "full_w",
            Provenance::FullA => "full_a",
            Provenance::BoundaryFeatureGamma => "boundary_feature_gamma",
        }
    }
}

/// Dense symmetric Gram matrix in row-major storage.
#[derive(Debug, Clone)]
pub struct GramMatrix {
    pub n: usize,
    pub data: Vec<f64>,
    pub provenance: Provenance,
}

impl GramMatrix {
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    fn symmetry_defect(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..self.n {
            for j in (i + 1)..self.n {
                worst = worst.max((self.get(i, j) - self.get(j, i)).abs());
            }
        }
        worst
    }
}

/// Gram of a set of vectors (columns), K_ij = ⟨v_i, v_j⟩, computed in
/// parallel over rows with a deterministic layout.
fn gram_of(cols: &[Vec<f64>], provenance: Provenance) -> GramMatrix {
    let n = cols.len();
    let mut data = vec![0.0; n * n];
    let rows: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            (0..n)
                .map(|j| cols[i].iter().zip(&cols[j]).map(|(a, b)| a * b).sum())
                .collect()
        })
        .collect();
    for (i, row) in rows.into_iter().enumerate() {
        data[i * n..(i + 1) * n].copy_from_slice(&row);
    }
    GramMatrix { n, data, provenance }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Region {
    Interior,
    Boundary,
}

/// Outer (a-derivative) kernel Gram over the chosen collocation region:
/// K_ij = ⟨∂_a s_i, ∂_a s_j⟩ (or h for the boundary region).
pub fn gram_outer(ev: &LossEvaluator, theta: &[f64], which: Region) -> Result<GramMatrix> {
    let m = ev.params_with(theta).m();
    let (cols_s, cols_h) = ev.residual_jacobian(theta)?;
    let (cols, prov) = match which {
        Region::Interior => (cols_s, Provenance::InteriorOuter),
        Region::Boundary => (cols_h, Provenance::BoundaryOuter),
    };
    let outer: Vec<Vec<f64>> = cols.into_iter().map(|c| c[..m].to_vec()).collect();
    Ok(gram_of(&outer, prov))
}

/// Full-training Gram pair over the stacked residual vector (s then h):
/// G from inner-parameter derivative columns, G̃ from outer columns.
pub fn gram_full(ev: &LossEvaluator, theta: &[f64]) -> Result<(GramMatrix, GramMatrix)> {
    let params = ev.params_with(theta);
    if params.trainable != Trainable::Full {
        return Err(RitzError::InvalidData("gram_full requires full training mode".into()));
    }
    let m = params.m();
    let (cols_s, cols_h) = ev.residual_jacobian(theta)?;
    let stacked: Vec<Vec<f64>> = cols_s.into_iter().chain(cols_h).collect();
    let inner: Vec<Vec<f64>> = stacked.iter().map(|c| c[m..].to_vec()).collect();
    let outer: Vec<Vec<f64>> = stacked.iter().map(|c| c[..m].to_vec()).collect();
    Ok((gram_of(&inner, Provenance::FullW), gram_of(&outer, Provenance::FullA)))
}

/// ‖K_t − K_0‖_F / ‖K_0‖_F.
pub fn relative_drift(k_t: &GramMatrix, k_0: &GramMatrix) -> Result<f64> {
    if k_t.n != k_0.n || k_t.provenance != k_0.provenance {
        return Err(RitzError::GramMismatch);
    }
    let denom = k_0.frobenius_norm();
    if denom == 0.0 {
        return Err(RitzError::ZeroInitialNorm);
    }
    let num = k_t
        .data
        .iter()
        .zip(&k_0.data)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt();
    Ok(num / denom)
}

// ---------------------------------------------------------------------------
// Cyclic Jacobi eigensolver
// ---------------------------------------------------------------------------

const JACOBI_MAX_SWEEPS: usize = 100;

/// All eigenvalues of a dense symmetric matrix by cyclic Jacobi rotations.
pub fn jacobi_eigenvalues(mat: &GramMatrix) -> Result<Vec<f64>> {
    let defect = mat.symmetry_defect();
    let fro = mat.frobenius_norm();
    if defect > 1e-12 * fro.max(1.0) {
        return Err(RitzError::NotSymmetric(defect));
    }
    let n = mat.n;
    let mut a = mat.data.clone();
    let tol = 1e-14 * fro;
    for _ in 0..JACOBI_MAX_SWEEPS {
        let mut off: f64 = 0.0;
        for p in 0..n {
            for q in (p + 1)..n {
                off = off.max(a[p * n + q].abs());
            }
        }
        if off <= tol {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[p * n + q];
                if apq.abs() <= tol {
                    continue;
                }
                let app = a[p * n + p];
                let aqq = a[q * n + q];
                let tau = (aqq - app) / (2.0 * apq);
                let t = if tau >= 0.0 {
                    1.0 / (tau + (1.0 + tau * tau).sqrt())
                } else {
                    -1.0 / (-tau + (1.0 + tau * tau).sqrt())
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[k * n + p];
                    let akq = a[k * n + q];
                    a[k * n + p] = c * akp - s * akq;
                    a[k * n + q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[p * n + k];
                    let aqk = a[q * n + k];
                    a[p * n + k] = c * apk - s * aqk;
                    a[q * n + k] = s * apk + c * aqk;
                }
            }
        }
    }
    Ok((0..n).map(|i| a[i * n + i]).collect())
}

pub fn min_eigenvalue(mat: &GramMatrix) -> Result<f64> {
    let eig = jacobi_eigenvalues(mat)?;
    Ok(eig.into_iter().fold(f64::INFINITY, f64::min))
}

// ---------------------------------------------------------------------------
// Boundary coercivity certificate
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct CoercivityCertificate {
    pub lambda_min: f64,
    /// C = λ_min^{−1/2}; infinite when λ_min ≤ 0.
    pub c: f64,
    /// Bootstrap standard error of λ_min over quadrature resamples.
    pub lambda_min_se: f64,
    /// λ_min ≤ 0: the quadrature was too coarse to certify coercivity.
    pub degenerate: bool,
    pub n_quadrature: usize,
}

/// Boundary feature value φ_k(x) = scale·(α tanh(z_k) + β w_{k,d} tanh′(z_k))
/// where d is the Γ normal axis. Includes the network output scale so the
/// bound ‖a‖₂ ≤ C·‖αu+β∂u/∂ν‖ holds for both scalings.
fn gamma_feature(params: &NetworkParams, robin: &RobinSpec, x: &[f64], k: usize) -> Result<f64> {
    let d = params.d();
    let z: f64 = params.w[k].iter().zip(x).map(|(w, xi)| w * xi).sum::<f64>() + params.b[k];
    let t0 = tanh_kth_derivative(0, z)?;
    let t1 = tanh_kth_derivative(1, z)?;
    Ok(params.scale() * (robin.alpha * t0 + robin.beta * params.w[k][d - 1] * t1))
}

/// Γ feature Gram G_kl = Σ_q w_q φ_k(x_q) φ_l(x_q) over quadrature points.
pub fn gamma_feature_gram(
    params: &NetworkParams,
    robin: &RobinSpec,
    points: &[Vec<f64>],
    weights: &[f64],
) -> Result<GramMatrix> {
    let m = params.m();
    // feature matrix: row per quadrature point, column per neuron
    let phi: Vec<Vec<f64>> = points
        .par_iter()
        .map(|x| (0..m).map(|k| gamma_feature(params, robin, x, k)).collect())
        .collect::<Result<Vec<_>>>()?;
    let mut data = vec![0.0; m * m];
    for k in 0..m {
        for l in k..m {
            let v: f64 = phi
                .iter()
                .zip(weights)
                .map(|(row, w)| w * row[k] * row[l])
                .sum();
            data[k * m + l] = v;
            data[l * m + k] = v;
        }
    }
    Ok(GramMatrix { n: m, data, provenance: Provenance::BoundaryFeatureGamma })
}

fn lambda_min_of_features(
    params: &NetworkParams,
    robin: &RobinSpec,
    points: &[Vec<f64>],
    weights: &[f64],
) -> Result<f64> {
    min_eigenvalue(&gamma_feature_gram(params, robin, points, weights)?)
}

const BOOTSTRAP_RESAMPLES: usize = 10;
/// RNG stream for the bootstrap resampling (geometry uses 0..=2).
const BOOTSTRAP_STREAM: u64 = 3;

/// Certificate from explicit quadrature points and weights.
pub fn boundary_coercivity_certificate(
    params: &NetworkParams,
    robin: &RobinSpec,
    points: &[Vec<f64>],
    weights: &[f64],
    normal_axis: usize,
    seed: u64,
) -> Result<CoercivityCertificate> {
    let report = check_admissible(params, normal_axis);
    if !report.ok {
        return Err(RitzError::InvalidData(format!(
            "parameters are not admissible on the boundary: {:?}",
            report.violations
        )));
    }
    if points.len() < params.m() {
        return Err(RitzError::InvalidData(format!(
            "need at least m = {} quadrature points on the boundary segment, got {}",
            params.m(),
            points.len()
        )));
    }
    let lambda_min = lambda_min_of_features(params, robin, points, weights)?;
    // bootstrap: resample quadrature points with replacement
    let mut rng = geometry::stream_rng(seed, BOOTSTRAP_STREAM);
    let n = points.len();
    let mut resampled = Vec::with_capacity(BOOTSTRAP_RESAMPLES);
    for _ in 0..BOOTSTRAP_RESAMPLES {
        let idx: Vec<usize> = (0..n).map(|_| rng.gen_range(0..n)).collect();
        let pts: Vec<Vec<f64>> = idx.iter().map(|&i| points[i].clone()).collect();
        let ws: Vec<f64> = idx.iter().map(|&i| weights[i]).collect();
        resampled.push(lambda_min_of_features(params, robin, &pts, &ws)?);
    }
    let mean = resampled.iter().sum::<f64>() / BOOTSTRAP_RESAMPLES as f64;
    let var = resampled.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>()
        / (BOOTSTRAP_RESAMPLES - 1) as f64;
    let degenerate = lambda_min <= 0.0;
    Ok(CoercivityCertificate {
        lambda_min,
        c: if degenerate { f64::INFINITY } else { lambda_min.powf(-0.5) },
        lambda_min_se: var.sqrt(),
        degenerate,
        n_quadrature: n,
    })
}

/// Samples n_Γ = max(50·m, 1000) Monte Carlo quadrature points on the
/// domain's Γ segment and issues the certificate.
pub fn audit_coercivity(
    params: &NetworkParams,
    robin: &RobinSpec,
    domain: &Domain,
    seed: u64,
) -> Result<CoercivityCertificate> {
    let n_gamma = (50 * params.m()).max(1000);
    let (points, weights) = geometry::sample_gamma(domain, n_gamma, seed);
    boundary_coercivity_certificate(
        params,
        robin,
        &points,
        &weights,
        domain.gamma.axis,
        seed,
    )
}

// ---------------------------------------------------------------------------
// Discrete linear independence
// ---------------------------------------------------------------------------

/// Determinant of the m×m matrix [tanh(w_k·x_i + b_k)] by LU with partial
/// pivoting.
pub fn discrete_independence_det(params: &NetworkParams, points: &[Vec<f64>]) -> Result<f64> {
    let m = params.m();
    if points.len() != m {
        return Err(RitzError::DimensionMismatch { expected: m, got: points.len() });
    }
    let mut a = vec![0.0; m * m];
    for (i, x) in points.iter().enumerate() {
        for k in 0..m {
            let z: f64 =
                params.w[k].iter().zip(x).map(|(w, xi)| w * xi).sum::<f64>() + params.b[k];
            a[i * m + k] = z.tanh();
        }
    }
    let mut det = 1.0;
    for col in 0..m {
        // partial pivot
        let mut piv = col;
        for r in (col + 1)..m {
            if a[r * m + col].abs() > a[piv * m + col].abs() {
                piv = r;
            }
        }
        if a[piv * m + col] == 0.0 {
            return Ok(0.0);
        }
        if piv != col {
            for c in 0..m {
                a.swap(col * m + c, piv * m + c);
            }
            det = -det;
        }
        det *= a[col * m + col];
        for r in (col + 1)..m {
            let f = a[r * m + col] / a[col * m + col];
            for c in col..m {
                a[r * m + c] -= f * a[col * m + c];
            }
        }
    }
    Ok(det)
}
