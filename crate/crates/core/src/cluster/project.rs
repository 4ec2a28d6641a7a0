//! Deterministic 2D PCA projection.

use serde::{Deserialize, Serialize};

use super::distances::Points;
use super::ClusterError;
use crate::corpus::EmbeddingSpace;
use crate::exec::Execution;

const MAX_ITERATIONS: usize = 500;
const TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Projection2D {
    pub ids: Vec<String>,
    pub coords: Vec<[f64; 2]>,
    pub components: [Vec<f64>; 2],
    pub explained_variance: [f64; 2],
    pub total_variance: f64,
}

impl Projection2D {
    pub fn get(&self, id: &str) -> Option<[f64; 2]> {
        self.ids.iter().position(|x| x == id).map(|i| self.coords[i])
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn normalize(v: &mut [f64]) -> f64 {
    let n = dot(v, v).sqrt();
    if n > 0.0 {
        v.iter_mut().for_each(|x| *x /= n);
    }
    n
}

/// Orthonormalizes `b` against unit `a`, substituting a basis direction when
/// `b` is (numerically) inside span(a).
fn orthonormal_pair(a: &mut Vec<f64>, b: &mut Vec<f64>) {
    let dim = a.len();
    if normalize(a) == 0.0 {
        *a = vec![0.0; dim];
        a[0] = 1.0;
    }
    let scale = dot(b, b).sqrt();
    let p = dot(a, b);
    b.iter_mut().zip(a.iter()).for_each(|(x, y)| *x -= p * y);
    if dim > 1 && dot(b, b).sqrt() <= 1e-10 * scale.max(f64::MIN_POSITIVE) || dot(b, b) == 0.0 {
        let k = (0..dim)
            .min_by(|&i, &j| a[i].abs().total_cmp(&a[j].abs()))
            .unwrap_or(0);
        *b = vec![0.0; dim];
        b[k] = 1.0;
        let p = dot(a, b);
        b.iter_mut().zip(a.iter()).for_each(|(x, y)| *x -= p * y);
    }
    normalize(b);
}

fn fix_sign(v: &mut [f64]) {
    let mut best = 0;
    for i in 1..v.len() {
        if v[i].abs() > v[best].abs() {
            best = i;
        }
    }
    if v.get(best).is_some_and(|x| *x < 0.0) {
        v.iter_mut().for_each(|x| *x = -*x);
    }
}

struct Centered {
    n: usize,
    dim: usize,
    x: Vec<f64>,
}

impl Centered {
    fn row(&self, i: usize) -> &[f64] {
        &self.x[i * self.dim..(i + 1) * self.dim]
    }

    /// Covariance times each vector, without forming the covariance.
    fn apply(&self, vs: &[Vec<f64>; 2], exec: Execution) -> [Vec<f64>; 2] {
        let chunk = 256;
        let partials = exec.map_range(self.n.div_ceil(chunk), |c| {
            let mut out = [vec![0.0; self.dim], vec![0.0; self.dim]];
            for i in c * chunk..((c + 1) * chunk).min(self.n) {
                let r = self.row(i);
                for (o, v) in out.iter_mut().zip(vs) {
                    let s = dot(r, v);
                    o.iter_mut().zip(r).for_each(|(acc, x)| *acc += s * x);
                }
            }
            out
        });
        let denom = (self.n - 1) as f64;
        let mut out = [vec![0.0; self.dim], vec![0.0; self.dim]];
        for p in partials {
            for (o, q) in out.iter_mut().zip(p) {
                o.iter_mut().zip(q).for_each(|(a, b)| *a += b);
            }
        }
        for o in &mut out {
            o.iter_mut().for_each(|a| *a /= denom);
        }
        out
    }
}

/// Top-two principal components by subspace iteration with a Rayleigh–Ritz step.
pub fn project_2d(space: &EmbeddingSpace) -> Result<Projection2D, ClusterError> {
    project_2d_with(space.into(), space.ids(), Execution::default())
}

pub fn project_2d_with(
    points: Points<'_>,
    ids: &[String],
    exec: Execution,
) -> Result<Projection2D, ClusterError> {
    let n = points.len();
    if ids.len() != n {
        return Err(ClusterError::Mismatch(format!("{} ids for {n} points", ids.len())));
    }
    if n < 3 {
        return Err(ClusterError::TooFewItems { needed: 3, found: n });
    }
    let dim = points.dim();
    let mut mean = vec![0.0; dim];
    for i in 0..n {
        mean.iter_mut().zip(points.row(i)).for_each(|(m, &v)| *m += v as f64);
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    let mut x = Vec::with_capacity(n * dim);
    for i in 0..n {
        x.extend(points.row(i).iter().zip(&mean).map(|(&v, m)| v as f64 - m));
    }
    let data = Centered { n, dim, x };
    let total_variance = data.x.iter().map(|v| v * v).sum::<f64>() / (n - 1) as f64;

    // Fixed, data-independent start vectors.
    let mut v = [
        (0..dim).map(|i| 1.0 + ((i * 7919) % 13) as f64 / 13.0).collect::<Vec<_>>(),
        (0..dim).map(|i| ((i * 104_729) % 17) as f64 / 17.0 - 0.5).collect::<Vec<_>>(),
    ];
    {
        let [a, b] = &mut v;
        orthonormal_pair(a, b);
    }
    let mut lambda = [0.0f64; 2];
    if total_variance > 0.0 {
        for _ in 0..MAX_ITERATIONS {
            let w = data.apply(&v, exec);
            // Rayleigh–Ritz on span(v): B = VᵀSV.
            let (b11, b12, b22) = (dot(&v[0], &w[0]), dot(&v[0], &w[1]), dot(&v[1], &w[1]));
            let theta = 0.5 * (2.0 * b12).atan2(b11 - b22);
            let (c, s) = (theta.cos(), theta.sin());
            let l1 = c * c * b11 + 2.0 * s * c * b12 + s * s * b22;
            let l2 = s * s * b11 - 2.0 * s * c * b12 + c * c * b22;
            let mut w0: Vec<f64> = w[0].iter().zip(&w[1]).map(|(a, b)| c * a + s * b).collect();
            let mut w1: Vec<f64> = w[0].iter().zip(&w[1]).map(|(a, b)| -s * a + c * b).collect();
            let (l1, l2) = if l2 > l1 {
                std::mem::swap(&mut w0, &mut w1);
                (l2, l1)
            } else {
                (l1, l2)
            };
            let done = (l1 - lambda[0]).abs() <= TOLERANCE * total_variance
                && (l2 - lambda[1]).abs() <= TOLERANCE * total_variance;
            lambda = [l1, l2];
            orthonormal_pair(&mut w0, &mut w1);
            v = [w0, w1];
            if done {
                break;
            }
        }
        // Final Ritz values on the converged basis.
        let w = data.apply(&v, exec);
        lambda = [dot(&v[0], &w[0]).max(0.0), dot(&v[1], &w[1]).max(0.0)];
        if lambda[1] > lambda[0] {
            v.swap(0, 1);
            lambda.swap(0, 1);
        }
    }
    for c in &mut v {
        fix_sign(c);
    }
    let coords = (0..n)
        .map(|i| {
            let r = data.row(i);
            [dot(r, &v[0]), dot(r, &v[1])]
        })
        .collect();
    Ok(Projection2D {
        ids: ids.to_vec(),
        coords,
        components: v,
        explained_variance: lambda,
        total_variance,
    })
}
