//! Gauss–Legendre rules and the semi-infinite ray quadrature used by the
//! phase integrals.

use crate::error::{LabError, Result};
use serde::{Deserialize, Serialize};

/// n-point Gauss–Legendre rule on [-1, 1].
#[derive(Clone, Debug, PartialEq)]
pub struct GaussLegendre {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussLegendre {
    pub fn new(n: usize) -> Self {
        assert!(n >= 1);
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        let m = (n + 1) / 2;
        for i in 0..m {
            // Tricomi initial guess, then Newton on P_n
            let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (p, d) = legendre(n, x);
                dp = d;
                let dx = p / d;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let (_, d) = legendre(n, x);
            dp = if d != 0.0 { d } else { dp };
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes[i] = -x;
            nodes[n - 1 - i] = x;
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        GaussLegendre { nodes, weights }
    }

    /// Nodes and weights mapped to [a, b].
    pub fn on(&self, a: f64, b: f64) -> impl Iterator<Item = (f64, f64)> + '_ {
        let c = 0.5 * (a + b);
        let h = 0.5 * (b - a);
        self.nodes.iter().zip(&self.weights).map(move |(x, w)| (c + h * x, h * w))
    }
}

fn legendre(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=n {
        let k = k as f64;
        let p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
    }
    let p = if n == 0 { 1.0 } else { p1 };
    let d = n as f64 * (x * p - p0) / (x * x - 1.0);
    (p, d)
}

/// Quadrature parameters for ∫_0^∞ g(t) dt along a ray.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RayQuadratureParams {
    pub nodes: usize,
    pub growth: f64,
    pub first_panel: f64,
    pub t_max: f64,
    /// α such that the integrand decays like t^{-α-1}.
    pub tail_exponent: f64,
    pub tail_tol: f64,
}

impl Default for RayQuadratureParams {
    fn default() -> Self {
        RayQuadratureParams { nodes: 16, growth: 2.0, first_panel: 0.5, t_max: 1e4, tail_exponent: 1.0, tail_tol: 1e-8 }
    }
}

/// Geometric panels on [0, t_max] plus a power-law tail mapped onto [0, 1].
#[derive(Clone, Debug)]
pub struct RayQuadrature {
    pub params: RayQuadratureParams,
    rule: GaussLegendre,
    half_rule: GaussLegendre,
    /// (t, w) on [0, t_max] when the ray has no interior closest point
    base: Vec<(f64, f64)>,
    tail: Vec<(f64, f64)>,
    tail_half: Vec<(f64, f64)>,
}

impl PartialEq for RayQuadrature {
    fn eq(&self, o: &Self) -> bool {
        self.params == o.params
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RayIntegral<const K: usize> {
    pub value: [f64; K],
    pub tail: [f64; K],
    pub tail_error: f64,
}

impl RayQuadrature {
    pub fn new(params: RayQuadratureParams) -> Result<Self> {
        if params.nodes < 2 {
            return Err(LabError::config("eikonal.nodes", "need at least 2 nodes per panel"));
        }
        if !(params.growth > 1.0) {
            return Err(LabError::config("eikonal.growth", "panel growth must exceed 1"));
        }
        if !(params.t_max > params.first_panel && params.first_panel > 0.0) {
            return Err(LabError::config("eikonal.t_max", "t_max must exceed the first panel length"));
        }
        if !(params.tail_exponent > 0.0) {
            return Err(LabError::config("eikonal.tail_exponent", "tail exponent must be positive"));
        }
        if !(params.tail_tol > 0.0) {
            return Err(LabError::config("eikonal.tail_tol", "tail_tol must be positive"));
        }
        let rule = GaussLegendre::new(params.nodes);
        let half_rule = GaussLegendre::new((params.nodes / 2).max(2));
        let mut q = RayQuadrature { params, rule, half_rule, base: Vec::new(), tail: Vec::new(), tail_half: Vec::new() };
        q.base = q.panel_nodes(0.0);
        q.tail = q.tail_nodes(&q.rule);
        q.tail_half = q.tail_nodes(&q.half_rule);
        Ok(q)
    }

    pub fn with_tail_exponent(&self, alpha: f64) -> Result<Self> {
        let mut p = self.params.clone();
        p.tail_exponent = alpha;
        Self::new(p)
    }

    pub fn with_nodes(&self, nodes: usize) -> Result<Self> {
        let mut p = self.params.clone();
        p.nodes = nodes;
        Self::new(p)
    }

    fn breakpoints(&self, s_star: f64) -> Vec<f64> {
        let p = &self.params;
        let mut b = vec![0.0];
        let mut t = p.first_panel;
        while t < p.t_max {
            b.push(t);
            t *= p.growth;
        }
        b.push(p.t_max);
        if s_star > 0.0 && s_star < p.t_max {
            // refine around the point of closest approach
            b.push(s_star);
            let mut d = p.first_panel;
            while s_star - d > 0.0 || s_star + d < p.t_max {
                if s_star - d > 0.0 {
                    b.push(s_star - d);
                }
                if s_star + d < p.t_max {
                    b.push(s_star + d);
                }
                d *= p.growth;
            }
        }
        b.sort_by(f64::total_cmp);
        b.dedup_by(|x, y| (*x - *y).abs() < 1e-12 * (1.0 + y.abs()));
        b
    }

    fn panel_nodes(&self, s_star: f64) -> Vec<(f64, f64)> {
        let b = self.breakpoints(s_star);
        let mut out = Vec::with_capacity(b.len() * self.params.nodes);
        for w in b.windows(2) {
            out.extend(self.rule.on(w[0], w[1]));
        }
        out
    }

    fn tail_nodes(&self, rule: &GaussLegendre) -> Vec<(f64, f64)> {
        // t = T u^{-1/α}, dt = (T/α) u^{-1/α-1} du on u ∈ (0, 1]
        let t0 = self.params.t_max;
        let a = self.params.tail_exponent;
        rule.on(0.0, 1.0)
            .map(|(u, w)| (t0 * u.powf(-1.0 / a), w * t0 / a * u.powf(-1.0 / a - 1.0)))
            .collect()
    }

    pub fn node_count(&self) -> usize {
        self.base.len() + self.tail.len() + self.tail_half.len()
    }

    /// ∫_0^∞ g(t) dt with refinement around `s_star` (the closest approach to the origin).
    pub fn integrate<const K: usize, F>(&self, s_star: f64, mut g: F) -> Result<RayIntegral<K>>
    where
        F: FnMut(f64) -> [f64; K],
    {
        let mut acc = [0.0; K];
        let refined;
        let nodes: &[(f64, f64)] = if s_star > 0.0 {
            refined = self.panel_nodes(s_star);
            &refined
        } else {
            &self.base
        };
        for &(t, w) in nodes {
            let v = g(t);
            for k in 0..K {
                acc[k] += w * v[k];
            }
        }
        let mut tail = [0.0; K];
        let mut tail_half = [0.0; K];
        for &(t, w) in &self.tail {
            let v = g(t);
            for k in 0..K {
                tail[k] += w * v[k];
            }
        }
        for &(t, w) in &self.tail_half {
            let v = g(t);
            for k in 0..K {
                tail_half[k] += w * v[k];
            }
        }
        let mut value = [0.0; K];
        let mut err: f64 = 0.0;
        for k in 0..K {
            value[k] = acc[k] + tail[k];
            err = err.max((tail[k] - tail_half[k]).abs());
        }
        if value.iter().any(|v| !v.is_finite()) || !err.is_finite() {
            return Err(LabError::numerical("q_transform", "non-finite integrand sample along the ray"));
        }
        if err > self.params.tail_tol {
            return Err(LabError::numerical(
                "q_transform",
                format!(
                    "tail remainder estimate {err:.3e} exceeds tail_tol {:.3e}; try a larger eikonal.t_max (e.g. {:.0e})",
                    self.params.tail_tol,
                    self.params.t_max * 10.0
                ),
            ));
        }
        Ok(RayIntegral { value, tail, tail_error: err })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gauss_legendre_exact_for_polynomials() {
        for n in [2usize, 5, 8, 16] {
            let r = GaussLegendre::new(n);
            let ws: f64 = r.weights.iter().sum();
            assert!((ws - 2.0).abs() < 1e-14);
            let deg = 2 * n - 1;
            let s: f64 = r.nodes.iter().zip(&r.weights).map(|(x, w)| w * x.powi(deg as i32 - 1)).sum();
            // ∫ x^{deg-1} over [-1,1], deg-1 even
            let want = 2.0 / deg as f64;
            assert!((s - want).abs() < 1e-13, "n={n}: {s} vs {want}");
        }
    }

    #[test]
    fn power_law_tail_is_exact_for_pure_power() {
        let q = RayQuadrature::new(RayQuadratureParams { tail_exponent: 0.6, ..Default::default() }).unwrap();
        // ∫_0^∞ (1+t)^{-1.6} dt = 1/0.6
        let r = q.integrate(0.0, |t| [(1.0 + t).powf(-1.6)]).unwrap();
        assert!((r.value[0] - 1.0 / 0.6).abs() < 1e-9, "{}", r.value[0]);
    }

    #[test]
    fn tail_tolerance_enforced() {
        let q = RayQuadrature::new(RayQuadratureParams {
            tail_exponent: 0.5,
            tail_tol: 1e-30,
            t_max: 20.0,
            ..Default::default()
        })
        .unwrap();
        let e = q.integrate(0.0, |t| [(1.0 + t).powf(-1.2) + (1.0 + t).powf(-2.9)]).unwrap_err();
        assert!(e.to_string().contains("t_max"));
    }

    #[test]
    fn refinement_handles_interior_peak() {
        let q = RayQuadrature::new(RayQuadratureParams { tail_exponent: 1.0, ..Default::default() }).unwrap();
        let c = 37.3;
        let r = q.integrate(c, |t| [1.0 / (1.0 + (t - c) * (t - c))]).unwrap();
        let want = std::f64::consts::FRAC_PI_2 + c.atan();
        assert!((r.value[0] - want).abs() < 1e-7, "{} vs {}", r.value[0], want);
    }
}
