//! Two-layer tanh network with analytic partial derivatives of arbitrary
//! (bounded) order and gradients with respect to the trainable parameters.
//!
//! The k-th tanh derivative is represented as an integer-coefficient
//! polynomial in s = tanh(t), generated once per order by the recurrence
//! P_0(s) = s, P_{n+1}(s) = P_n'(s) (1 - s^2).

use crate::error::{Result, RitzError};
use crate::hexfloat;
use serde::{Deserialize, Serialize};
use std::sync::OnceLock;

/// Maximum supported derivative order.
pub const MAX_ORDER: usize = 8;

fn tanh_polys() -> &'static Vec<Vec<i64>> {
    static POLYS: OnceLock<Vec<Vec<i64>>> = OnceLock::new();
    POLYS.get_or_init(|| {
        let mut polys: Vec<Vec<i64>> = vec![vec![0, 1]]; // P_0(s) = s
        for _ in 0..MAX_ORDER {
            let p = polys.last().unwrap();
            // derivative of p
            let mut dp = vec![0i64; p.len().max(2) - 1];
            for (i, &c) in p.iter().enumerate().skip(1) {
                dp[i - 1] = c * i as i64;
            }
            // multiply by (1 - s^2)
            let mut next = vec![0i64; dp.len() + 2];
            for (i, &c) in dp.iter().enumerate() {
                next[i] += c;
                next[i + 2] -= c;
            }
            while next.len() > 1 && *next.last().unwrap() == 0 {
                next.pop();
            }
            polys.push(next);
        }
        polys
    })
}

/// d^k/dt^k tanh(t), exact up to `MAX_ORDER`.
pub fn tanh_kth_derivative(k: usize, t: f64) -> Result<f64> {
    if k > MAX_ORDER {
        return Err(RitzError::OrderExceeded {
            requested: k,
            max: MAX_ORDER,
        });
    }
    let s = t.tanh();
    Ok(eval_poly(&tanh_polys()[k], s))
}

/// Uniform bound on |tanh^{(k)}|: the sum of absolute coefficients of P_k.
pub fn tanh_derivative_bound(k: usize) -> Result<f64> {
    if k > MAX_ORDER {
        return Err(RitzError::OrderExceeded {
            requested: k,
            max: MAX_ORDER,
        });
    }
    Ok(tanh_polys()[k].iter().map(|c| c.unsigned_abs() as f64).sum())
}

fn eval_poly(coeffs: &[i64], s: f64) -> f64 {
    let mut acc = 0.0;
    for &c in coeffs.iter().rev() {
        acc = acc * s + c as f64;
    }
    acc
}

/// Multi-index encoding a mixed partial derivative.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct MultiIndex(pub Vec<usize>);

impl MultiIndex {
    pub fn zero(d: usize) -> Self {
        MultiIndex(vec![0; d])
    }

    /// Unit multi-index e_i in d dimensions.
    pub fn unit(d: usize, i: usize) -> Self {
        let mut v = vec![0; d];
        v[i] = 1;
        MultiIndex(v)
    }

    pub fn order(&self) -> usize {
        self.0.iter().sum()
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }
}

/// w^xi with the convention 0^0 = 1.
pub fn multi_index_power(w: &[f64], xi: &MultiIndex) -> f64 {
    let mut p = 1.0;
    for (wi, &e) in w.iter().zip(&xi.0) {
        for _ in 0..e {
            p *= wi;
        }
    }
    p
}

/// d(w^xi)/dw_i, again with 0^0 = 1 in the surviving factors.
fn multi_index_power_grad(w: &[f64], xi: &MultiIndex, i: usize) -> f64 {
    let e = xi.0[i];
    if e == 0 {
        return 0.0;
    }
    let mut p = e as f64;
    for _ in 0..e - 1 {
        p *= w[i];
    }
    for (j, (wj, &ej)) in w.iter().zip(&xi.0).enumerate() {
        if j != i {
            for _ in 0..ej {
                p *= wj;
            }
        }
    }
    p
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scaling {
    /// u = sum a_k tanh(w_k . x + b_k)
    Plain,
    /// u = (1/sqrt(m)) sum a_k tanh(w_k . x + b_k)
    Ntk,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Trainable {
    /// Random feature regime: only the outer weights a are trained.
    OuterOnly,
    /// NTK regime: (a, w, b) all trained.
    Full,
}

/// Parameters of the two-layer tanh network.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkParams {
    pub a: Vec<f64>,
    pub w: Vec<Vec<f64>>,
    pub b: Vec<f64>,
    pub scaling: Scaling,
    pub trainable: Trainable,
}

impl NetworkParams {
    pub fn new(
        a: Vec<f64>,
        w: Vec<Vec<f64>>,
        b: Vec<f64>,
        scaling: Scaling,
        trainable: Trainable,
    ) -> Result<Self> {
        let m = a.len();
        if m == 0 || w.len() != m || b.len() != m {
            return Err(RitzError::InvalidData(format!(
                "inconsistent widths: a={}, w={}, b={}",
                a.len(),
                w.len(),
                b.len()
            )));
        }
        let d = w[0].len();
        if d == 0 || w.iter().any(|row| row.len() != d) {
            return Err(RitzError::InvalidData("ragged or empty inner weight rows".into()));
        }
        Ok(NetworkParams { a, w, b, scaling, trainable })
    }

    pub fn m(&self) -> usize {
        self.a.len()
    }

    pub fn d(&self) -> usize {
        self.w[0].len()
    }

    pub fn scale(&self) -> f64 {
        match self.scaling {
            Scaling::Plain => 1.0,
            Scaling::Ntk => 1.0 / (self.m() as f64).sqrt(),
        }
    }

    fn check_dim(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.d() {
            return Err(RitzError::DimensionMismatch {
                expected: self.d(),
                got: x.len(),
            });
        }
        Ok(())
    }

    fn preactivation(&self, k: usize, x: &[f64]) -> f64 {
        let mut z = self.b[k];
        for (wi, xi) in self.w[k].iter().zip(x) {
            z += wi * xi;
        }
        z
    }

    /// u_theta(x) with the configured scaling applied.
    pub fn eval(&self, x: &[f64]) -> Result<f64> {
        self.check_dim(x)?;
        let mut sum = 0.0;
        for k in 0..self.m() {
            sum += self.a[k] * self.preactivation(k, x).tanh();
        }
        Ok(sum * self.scale())
    }

    /// Analytic partial derivative d^xi u_theta(x).
    pub fn partial_derivative(&self, x: &[f64], xi: &MultiIndex) -> Result<f64> {
        Ok(self
            .feature_derivative_vector(x, xi)?
            .iter()
            .zip(&self.a)
            .map(|(f, a)| f * a)
            .sum())
    }

    /// Per-neuron features: component k is d(d^xi u_theta(x))/da_k.
    /// Independent of a; dotting with a reproduces `partial_derivative`.
    pub fn feature_derivative_vector(&self, x: &[f64], xi: &MultiIndex) -> Result<Vec<f64>> {
        self.check_dim(x)?;
        if xi.dim() != self.d() {
            return Err(RitzError::DimensionMismatch {
                expected: self.d(),
                got: xi.dim(),
            });
        }
        let order = xi.order();
        if order > MAX_ORDER {
            return Err(RitzError::OrderExceeded {
                requested: order,
                max: MAX_ORDER,
            });
        }
        let poly = &tanh_polys()[order];
        let scale = self.scale();
        let mut out = Vec::with_capacity(self.m());
        for k in 0..self.m() {
            let s = self.preactivation(k, x).tanh();
            out.push(scale * eval_poly(poly, s) * multi_index_power(&self.w[k], xi));
        }
        Ok(out)
    }

    /// Gradient of d^xi u_theta(x) with respect to the inner parameters,
    /// laid out as [w_{1,1..d}, b_1, w_{2,1..d}, b_2, ...].
    pub fn inner_param_gradient(&self, x: &[f64], xi: &MultiIndex) -> Result<Vec<f64>> {
        self.check_dim(x)?;
        let order = xi.order();
        if order + 1 > MAX_ORDER {
            return Err(RitzError::OrderExceeded {
                requested: order + 1,
                max: MAX_ORDER,
            });
        }
        let p_k = &tanh_polys()[order];
        let p_k1 = &tanh_polys()[order + 1];
        let scale = self.scale();
        let d = self.d();
        let mut out = vec![0.0; self.m() * (d + 1)];
        for k in 0..self.m() {
            let s = self.preactivation(k, x).tanh();
            let tk = eval_poly(p_k, s);
            let tk1 = eval_poly(p_k1, s);
            let wpow = multi_index_power(&self.w[k], xi);
            let c = scale * self.a[k];
            let base = k * (d + 1);
            for i in 0..d {
                out[base + i] = c
                    * (tk1 * wpow * x[i] + tk * multi_index_power_grad(&self.w[k], xi, i));
            }
            out[base + d] = c * tk1 * wpow;
        }
        Ok(out)
    }

    // --- JSON serialization with hex-float values (bit-exact) ---

    pub fn to_json(&self) -> serde_json::Value {
        let hex = |v: &f64| serde_json::Value::String(hexfloat::format_hex(*v));
        serde_json::json!({
            "m": self.m(),
            "d": self.d(),
            "scaling": match self.scaling { Scaling::Plain => "plain", Scaling::Ntk => "ntk" },
            "trainable": match self.trainable { Trainable::OuterOnly => "outer_only", Trainable::Full => "full" },
            "a": self.a.iter().map(hex).collect::<Vec<_>>(),
            "w": self.w.iter().map(|row| row.iter().map(hex).collect::<Vec<_>>()).collect::<Vec<_>>(),
            "b": self.b.iter().map(hex).collect::<Vec<_>>(),
        })
    }

    pub fn from_json(v: &serde_json::Value) -> Result<Self> {
        let parse = |v: &serde_json::Value| -> Result<f64> {
            let s = v
                .as_str()
                .ok_or_else(|| RitzError::InvalidData("expected hex-float string".into()))?;
            hexfloat::parse_hex(s)
                .ok_or_else(|| RitzError::InvalidData(format!("bad hex-float '{s}'")))
        };
        let arr = |v: &serde_json::Value, name: &str| -> Result<Vec<serde_json::Value>> {
            Ok(v.get(name)
                .and_then(|x| x.as_array())
                .ok_or_else(|| RitzError::InvalidData(format!("missing array '{name}'")))?
                .clone())
        };
        let a = arr(v, "a")?.iter().map(parse).collect::<Result<Vec<_>>>()?;
        let b = arr(v, "b")?.iter().map(parse).collect::<Result<Vec<_>>>()?;
        let w = arr(v, "w")?
            .iter()
            .map(|row| {
                row.as_array()
                    .ok_or_else(|| RitzError::InvalidData("w rows must be arrays".into()))?
                    .iter()
                    .map(parse)
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        let scaling = match v.get("scaling").and_then(|s| s.as_str()) {
            Some("plain") => Scaling::Plain,
            Some("ntk") => Scaling::Ntk,
            other => {
                return Err(RitzError::InvalidData(format!("bad scaling {other:?}")));
            }
        };
        let trainable = match v.get("trainable").and_then(|s| s.as_str()) {
            Some("full") => Trainable::Full,
            // outer_only is the default for dumps that omit the field
            _ => Trainable::OuterOnly,
        };
        NetworkParams::new(a, w, b, scaling, trainable)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn tanh_derivatives_at_zero() {
        assert_eq!(tanh_kth_derivative(0, 0.0).unwrap(), 0.0);
        assert_eq!(tanh_kth_derivative(1, 0.0).unwrap(), 1.0);
        assert_eq!(tanh_kth_derivative(2, 0.0).unwrap(), 0.0);
    }

    #[test]
    fn tanh_first_derivative_closed_form() {
        // tanh'(t) = 4 e^{2t} / (e^{2t} + 1)^2
        let t: f64 = 1.0;
        let e2t = (2.0 * t).exp();
        let expected = 4.0 * e2t / ((e2t + 1.0) * (e2t + 1.0));
        assert_relative_eq!(
            tanh_kth_derivative(1, t).unwrap(),
            expected,
            max_relative = 1e-14
        );
    }

    #[test]
    fn tanh_order_cap() {
        assert!(tanh_kth_derivative(MAX_ORDER, 0.3).is_ok());
        assert!(matches!(
            tanh_kth_derivative(MAX_ORDER + 1, 0.3),
            Err(RitzError::OrderExceeded { .. })
        ));
    }

    #[test]
    fn tanh_derivative_recurrence_vs_finite_difference() {
        // central FD of order k-1 reproduces order k
        let mut t = -5.0f64;
        while t <= 5.0 {
            for k in 1..=6usize {
                let h = 1e-5;
                let fd = (tanh_kth_derivative(k - 1, t + h).unwrap()
                    - tanh_kth_derivative(k - 1, t - h).unwrap())
                    / (2.0 * h);
                let exact = tanh_kth_derivative(k, t).unwrap();
                let tol = 1e-6 * exact.abs().max(1e-3);
                assert!(
                    (fd - exact).abs() < tol,
                    "k={k} t={t}: fd={fd} exact={exact}"
                );
            }
            t += 0.1;
        }
    }

    #[test]
    fn tanh_derivative_bounded() {
        for k in 0..=MAX_ORDER {
            let bk = tanh_derivative_bound(k).unwrap();
            for i in 0..200 {
                let t = -5.0 + i as f64 * 0.05;
                assert!(tanh_kth_derivative(k, t).unwrap().abs() <= bk);
            }
        }
    }

    #[test]
    fn tanh_odd_even_symmetry() {
        for i in 0..100 {
            let t = -4.0 + i as f64 * 0.08;
            assert_eq!(
                tanh_kth_derivative(0, -t).unwrap(),
                -tanh_kth_derivative(0, t).unwrap()
            );
            assert_eq!(
                tanh_kth_derivative(1, -t).unwrap(),
                tanh_kth_derivative(1, t).unwrap()
            );
        }
    }

    fn single_neuron(a: f64, w: Vec<f64>, b: f64) -> NetworkParams {
        NetworkParams::new(vec![a], vec![w], vec![b], Scaling::Plain, Trainable::Full).unwrap()
    }

    #[test]
    fn eval_zero_outer_weights() {
        let net = NetworkParams::new(
            vec![0.0; 3],
            vec![vec![1.0, -2.0]; 3],
            vec![0.5; 3],
            Scaling::Plain,
            Trainable::OuterOnly,
        )
        .unwrap();
        assert_eq!(net.eval(&[0.3, 0.7]).unwrap(), 0.0);
    }

    #[test]
    fn eval_single_neuron_cases() {
        let net = single_neuron(1.0, vec![0.0, 0.0], 0.0);
        assert_eq!(net.eval(&[1.3, -0.2]).unwrap(), 0.0);

        let net = single_neuron(2.0, vec![1.0, 0.0], 0.0);
        let x = [0.5f64.atanh(), 0.0];
        assert_relative_eq!(net.eval(&x).unwrap(), 1.0, max_relative = 1e-14);
    }

    #[test]
    fn partial_zero_index_equals_eval() {
        let net = single_neuron(1.7, vec![0.3, -1.1], 0.2);
        let x = [0.4, 0.9];
        assert_eq!(
            net.partial_derivative(&x, &MultiIndex::zero(2)).unwrap(),
            net.eval(&x).unwrap()
        );
    }

    #[test]
    fn partial_first_order_single_neuron() {
        let net = single_neuron(1.0, vec![1.0, 0.0], 0.0);
        let v = net
            .partial_derivative(&[0.0, 0.0], &MultiIndex(vec![1, 0]))
            .unwrap();
        assert_eq!(v, 1.0);
    }

    #[test]
    fn ntk_scaling_divides_by_sqrt_m() {
        let mut net = NetworkParams::new(
            vec![1.0, -0.5, 0.25, 2.0],
            vec![vec![0.3], vec![-0.7], vec![1.1], vec![0.0]],
            vec![0.1, 0.2, -0.3, 0.4],
            Scaling::Plain,
            Trainable::OuterOnly,
        )
        .unwrap();
        let plain = net.eval(&[0.6]).unwrap();
        net.scaling = Scaling::Ntk;
        assert_eq!(net.eval(&[0.6]).unwrap(), plain / 2.0);
    }

    #[test]
    fn feature_vector_linear_in_a() {
        let mut net = NetworkParams::new(
            vec![1.0, 2.0],
            vec![vec![0.5, 0.5], vec![-1.0, 0.3]],
            vec![0.0, 0.4],
            Scaling::Plain,
            Trainable::OuterOnly,
        )
        .unwrap();
        let x = [0.2, -0.6];
        let xi = MultiIndex(vec![1, 1]);
        let feats = net.feature_derivative_vector(&x, &xi).unwrap();
        let dot: f64 = feats.iter().zip(&net.a).map(|(f, a)| f * a).sum();
        assert_relative_eq!(
            dot,
            net.partial_derivative(&x, &xi).unwrap(),
            max_relative = 1e-15
        );
        // independent of a
        net.a = vec![5.0, -3.0];
        assert_eq!(net.feature_derivative_vector(&x, &xi).unwrap(), feats);
    }

    #[test]
    fn inner_gradient_zero_outer() {
        let net = NetworkParams::new(
            vec![0.0, 0.0],
            vec![vec![0.5], vec![-1.0]],
            vec![0.0, 0.4],
            Scaling::Plain,
            Trainable::Full,
        )
        .unwrap();
        let g = net
            .inner_param_gradient(&[0.3], &MultiIndex(vec![1]))
            .unwrap();
        assert!(g.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn inner_gradient_bias_formula() {
        let net = single_neuron(1.3, vec![0.7, -0.2], 0.5);
        let x = [0.1, 0.8];
        let g = net
            .inner_param_gradient(&x, &MultiIndex::zero(2))
            .unwrap();
        let z = 0.7 * x[0] - 0.2 * x[1] + 0.5;
        let expected = 1.3 * tanh_kth_derivative(1, z).unwrap();
        assert_relative_eq!(g[2], expected, max_relative = 1e-14);
    }

    #[test]
    fn json_round_trip_bit_exact() {
        let net = NetworkParams::new(
            vec![0.1, -std::f64::consts::PI],
            vec![vec![1.0 / 3.0, 0.7], vec![-0.0, 1e-300]],
            vec![2.5, f64::MIN_POSITIVE],
            Scaling::Ntk,
            Trainable::Full,
        )
        .unwrap();
        let v = net.to_json();
        let back = NetworkParams::from_json(&v).unwrap();
        assert_eq!(net.a.iter().map(|x| x.to_bits()).collect::<Vec<_>>(),
                   back.a.iter().map(|x| x.to_bits()).collect::<Vec<_>>());
        assert_eq!(net.w, back.w);
        assert_eq!(net.b.iter().map(|x| x.to_bits()).collect::<Vec<_>>(),
                   back.b.iter().map(|x| x.to_bits()).collect::<Vec<_>>());
        assert_eq!(net.scaling, back.scaling);
    }
}
