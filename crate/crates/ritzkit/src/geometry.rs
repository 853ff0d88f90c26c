//! Domains, boundary facets with outward normals, flat-segment handling,
//! collocation sampling, Monte Carlo quadrature weights, and parameter
//! initialization schemes.
//!
//! All randomness flows through a counter-based generator (ChaCha8) with
//! explicit stream splitting so interior, boundary and init draws are
//! independent and bit-reproducible for a fixed seed.

use crate::error::{Result, RitzError};
use crate::net::{NetworkParams, Scaling, Trainable};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Identity of the PRNG scheme, recorded in run metadata.
pub const PRNG_ID: &str = "chacha8/stream-split(interior=0,boundary=1,init=2)";

const STREAM_INTERIOR: u64 = 0;
const STREAM_BOUNDARY: u64 = 1;
const STREAM_INIT: u64 = 2;

pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Standard normal via Box-Muller on the given stream.
fn normal(rng: &mut ChaCha8Rng) -> f64 {
    let u1: f64 = rng.gen::<f64>().max(1e-300);
    let u2: f64 = rng.gen::<f64>();
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

/// The designated flat boundary segment Gamma: the facet where coordinate
/// `axis` equals `value` (a constant), with outward normal `sign * e_axis`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlatSegment {
    pub axis: usize,
    pub value: f64,
    pub normal_sign: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DomainKind {
    Hyperrectangle,
    /// First coordinate is time; Gamma is the initial time slice t = t0.
    TimeSlab,
}

/// An axis-aligned box domain, optionally interpreted as a time slab.
#[derive(Debug, Clone)]
pub struct Domain {
    pub kind: DomainKind,
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    pub gamma: FlatSegment,
}

impl Domain {
    pub fn hyperrectangle(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        Self::check_bounds(&lo, &hi)?;
        let axis = lo.len() - 1;
        let gamma = FlatSegment { axis, value: lo[axis], normal_sign: -1.0 };
        Ok(Domain { kind: DomainKind::Hyperrectangle, lo, hi, gamma })
    }

    /// (t0, t1) x product of space intervals; Gamma = the t = t0 facet.
    pub fn time_slab(t_range: (f64, f64), space: &[(f64, f64)]) -> Result<Self> {
        let mut lo = vec![t_range.0];
        let mut hi = vec![t_range.1];
        for (a, b) in space {
            lo.push(*a);
            hi.push(*b);
        }
        Self::check_bounds(&lo, &hi)?;
        let gamma = FlatSegment { axis: 0, value: lo[0], normal_sign: -1.0 };
        Ok(Domain { kind: DomainKind::TimeSlab, lo, hi, gamma })
    }

    fn check_bounds(lo: &[f64], hi: &[f64]) -> Result<()> {
        if lo.is_empty() || lo.len() != hi.len() {
            return Err(RitzError::DegenerateDomain("empty or mismatched bounds".into()));
        }
        if lo.iter().zip(hi).any(|(l, h)| !(l < h)) {
            return Err(RitzError::DegenerateDomain("lo must be < hi componentwise".into()));
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn volume(&self) -> f64 {
        self.lo.iter().zip(&self.hi).map(|(l, h)| h - l).product()
    }

    /// Facet surface measure for facet (axis, side): product of the other
    /// side lengths.
    fn facet_measure(&self, axis: usize) -> f64 {
        self.lo
            .iter()
            .zip(&self.hi)
            .enumerate()
            .filter(|(i, _)| *i != axis)
            .map(|(_, (l, h))| h - l)
            .product()
    }

    pub fn surface_measure(&self) -> f64 {
        (0..self.dim()).map(|i| 2.0 * self.facet_measure(i)).sum()
    }

    /// Outward unit normal for facet (axis, upper?).
    fn facet_normal(&self, axis: usize, upper: bool) -> Vec<f64> {
        let mut n = vec![0.0; self.dim()];
        n[axis] = if upper { 1.0 } else { -1.0 };
        n
    }

    pub fn centroid(&self) -> Vec<f64> {
        self.lo.iter().zip(&self.hi).map(|(l, h)| 0.5 * (l + h)).collect()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim()
            && x.iter()
                .zip(self.lo.iter().zip(&self.hi))
                .all(|(v, (l, h))| *v >= *l && *v <= *h)
    }
}

/// Interior and boundary collocation points with normals, the Gamma subset,
/// and uniform Monte Carlo quadrature weights (|region| / n per point).
#[derive(Debug, Clone)]
pub struct CollocationSet {
    pub interior: Vec<Vec<f64>>,
    pub interior_weights: Vec<f64>,
    pub boundary: Vec<Vec<f64>>,
    pub normals: Vec<Vec<f64>>,
    pub boundary_weights: Vec<f64>,
    pub gamma_subset: Vec<usize>,
}

impl CollocationSet {
    pub fn n_interior(&self) -> usize {
        self.interior.len()
    }

    pub fn n_boundary(&self) -> usize {
        self.boundary.len()
    }
}

/// Uniform sampling over the interior volume and boundary surface measure.
/// Deterministic for a fixed seed.
pub fn sample(domain: &Domain, n_interior: usize, n_boundary: usize, seed: u64) -> Result<CollocationSet> {
    if n_interior == 0 && n_boundary == 0 {
        return Err(RitzError::InvalidData("no collocation points requested".into()));
    }
    let d = domain.dim();

    let mut interior = Vec::with_capacity(n_interior);
    let mut rng = stream_rng(seed, STREAM_INTERIOR);
    for _ in 0..n_interior {
        let x: Vec<f64> = (0..d)
            .map(|i| domain.lo[i] + rng.gen::<f64>() * (domain.hi[i] - domain.lo[i]))
            .collect();
        interior.push(x);
    }
    let interior_weights = vec![domain.volume() / n_interior.max(1) as f64; n_interior];

    let mut boundary = Vec::with_capacity(n_boundary);
    let mut normals = Vec::with_capacity(n_boundary);
    let mut gamma_subset = Vec::new();
    let mut rng = stream_rng(seed, STREAM_BOUNDARY);
    let total_surface = domain.surface_measure();
    for p in 0..n_boundary {
        // pick a facet proportional to its surface measure
        let mut pick = rng.gen::<f64>() * total_surface;
        let mut chosen = (0usize, false);
        'outer: for axis in 0..d {
            for upper in [false, true] {
                let meas = domain.facet_measure(axis);
                if pick < meas {
                    chosen = (axis, upper);
                    break 'outer;
                }
                pick -= meas;
            }
        }
        let (axis, upper) = chosen;
        let mut x: Vec<f64> = (0..d)
            .map(|i| domain.lo[i] + rng.gen::<f64>() * (domain.hi[i] - domain.lo[i]))
            .collect();
        x[axis] = if upper { domain.hi[axis] } else { domain.lo[axis] };
        if axis == domain.gamma.axis && x[axis] == domain.gamma.value {
            gamma_subset.push(p);
        }
        boundary.push(x);
        normals.push(domain.facet_normal(axis, upper));
    }
    let boundary_weights = vec![total_surface / n_boundary.max(1) as f64; n_boundary];

    Ok(CollocationSet {
        interior,
        interior_weights,
        boundary,
        normals,
        boundary_weights,
        gamma_subset,
    })
}

/// Uniform sampling restricted to the Gamma facet (for coercivity
/// quadrature). Points carry weight |Gamma| / n.
pub fn sample_gamma(domain: &Domain, n: usize, seed: u64) -> (Vec<Vec<f64>>, Vec<f64>) {
    let d = domain.dim();
    let mut rng = stream_rng(seed, STREAM_BOUNDARY);
    let mut points = Vec::with_capacity(n);
    for _ in 0..n {
        let mut x: Vec<f64> = (0..d)
            .map(|i| domain.lo[i] + rng.gen::<f64>() * (domain.hi[i] - domain.lo[i]))
            .collect();
        x[domain.gamma.axis] = domain.gamma.value;
        points.push(x);
    }
    let meas = domain.facet_measure(domain.gamma.axis);
    let weights = vec![meas / n.max(1) as f64; n];
    (points, weights)
}

/// Parameter initialization schemes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum InitScheme {
    /// a ~ Unif{-1,1}, w ~ N(0, I), b ~ N(0,1); NTK scaling, full training.
    Ntk,
    /// Same inner law, a = 0; plain scaling, outer-only training.
    RandomFeature,
    /// Tangential w ~ N(0, I_{d-1}); |w_d|, |b| uniform in (-delta, delta);
    /// outer-only training.
    SmallNormal { delta: f64 },
}

pub fn initialize(scheme: InitScheme, m: usize, d: usize, seed: u64) -> Result<NetworkParams> {
    if m == 0 || d == 0 {
        return Err(RitzError::InvalidData("m and d must be >= 1".into()));
    }
    let mut rng = stream_rng(seed, STREAM_INIT);
    match scheme {
        InitScheme::Ntk => {
            let a: Vec<f64> = (0..m).map(|_| if rng.gen::<bool>() { 1.0 } else { -1.0 }).collect();
            let w: Vec<Vec<f64>> = (0..m).map(|_| (0..d).map(|_| normal(&mut rng)).collect()).collect();
            let b: Vec<f64> = (0..m).map(|_| normal(&mut rng)).collect();
            NetworkParams::new(a, w, b, Scaling::Ntk, Trainable::Full)
        }
        InitScheme::RandomFeature => {
            let w: Vec<Vec<f64>> = (0..m).map(|_| (0..d).map(|_| normal(&mut rng)).collect()).collect();
            let b: Vec<f64> = (0..m).map(|_| normal(&mut rng)).collect();
            NetworkParams::new(vec![0.0; m], w, b, Scaling::Plain, Trainable::OuterOnly)
        }
        InitScheme::SmallNormal { delta } => {
            if delta <= 0.0 {
                return Err(RitzError::InvalidData("small_normal delta must be > 0".into()));
            }
            let w: Vec<Vec<f64>> = (0..m)
                .map(|_| {
                    let mut row: Vec<f64> = (0..d.saturating_sub(1)).map(|_| normal(&mut rng)).collect();
                    row.push(delta * (2.0 * rng.gen::<f64>() - 1.0));
                    row
                })
                .collect();
            let b: Vec<f64> = (0..m).map(|_| delta * (2.0 * rng.gen::<f64>() - 1.0)).collect();
            NetworkParams::new(vec![0.0; m], w, b, Scaling::Plain, Trainable::OuterOnly)
        }
    }
}

/// A single admissibility violation.
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    /// Tangential components of neurons i and j coincide (sign "+" for
    /// w~_i == w~_j, "-" for w~_i == -w~_j).
    DuplicateTangential { i: usize, j: usize, sign: char },
    /// Normal component w_{i, axis} is exactly zero.
    ZeroNormal { i: usize },
}

#[derive(Debug, Clone)]
pub struct AdmissibilityReport {
    pub ok: bool,
    pub violations: Vec<Violation>,
}

/// Checks the admissible inner-layer parameter conditions with respect to
/// the normal axis of the flat segment: pairwise non-(+/-)-equal tangential
/// components and nonzero normal components. Comparison is exact floating
/// equality (failure is a measure-zero event under continuous laws).
pub fn check_admissible(params: &NetworkParams, normal_axis: usize) -> AdmissibilityReport {
    let m = params.m();
    let mut violations = Vec::new();
    let tangential = |k: usize| -> Vec<f64> {
        params.w[k]
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != normal_axis)
            .map(|(_, v)| *v)
            .collect()
    };
    for i in 0..m {
        if params.w[i][normal_axis] == 0.0 {
            violations.push(Violation::ZeroNormal { i });
        }
    }
    for i in 0..m {
        let ti = tangential(i);
        for j in i + 1..m {
            let tj = tangential(j);
            if ti == tj {
                violations.push(Violation::DuplicateTangential { i, j, sign: '+' });
            }
            if ti.iter().zip(&tj).all(|(a, b)| *a == -*b) {
                violations.push(Violation::DuplicateTangential { i, j, sign: '-' });
            }
        }
    }
    AdmissibilityReport { ok: violations.is_empty(), violations }
}
