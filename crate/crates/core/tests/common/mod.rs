//! Independent full-data estimators on fully observed data, shared by the
//! integration tests.
#![allow(dead_code)]

use twophase::glm::expit;

pub struct FullData {
    pub a: Vec<f64>,
    pub y: Vec<f64>,
    pub w: Vec<Vec<f64>>,
}

fn solve(mut m: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let p = b.len();
    for c in 0..p {
        let piv = (c..p).max_by(|&i, &j| m[i][c].abs().total_cmp(&m[j][c].abs())).unwrap();
        m.swap(c, piv);
        b.swap(c, piv);
        for r in c + 1..p {
            let f = m[r][c] / m[c][c];
            for k in c..p {
                m[r][k] -= f * m[c][k];
            }
            b[r] -= f * b[c];
        }
    }
    let mut x = vec![0.0; p];
    for c in (0..p).rev() {
        let s: f64 = (c + 1..p).map(|k| m[c][k] * x[k]).sum();
        x[c] = (b[c] - s) / m[c][c];
    }
    x
}

/// Logistic regression with intercept by Newton's method.
pub fn logistic(x: &[Vec<f64>], y: &[f64]) -> Vec<f64> {
    let p = x[0].len() + 1;
    let row = |i: usize| std::iter::once(1.0).chain(x[i].iter().copied()).collect::<Vec<f64>>();
    let mut beta = vec![0.0; p];
    for _ in 0..200 {
        let mut hess = vec![vec![0.0; p]; p];
        let mut grad = vec![0.0; p];
        for i in 0..x.len() {
            let r = row(i);
            let mu = expit(r.iter().zip(&beta).map(|(a, b)| a * b).sum());
            for j in 0..p {
                grad[j] += r[j] * (y[i] - mu);
                for k in 0..p {
                    hess[j][k] += r[j] * r[k] * mu * (1.0 - mu);
                }
            }
        }
        let step = solve(hess, grad);
        beta.iter_mut().zip(&step).for_each(|(b, s)| *b += s);
        if step.iter().map(|s| s.abs()).fold(0.0, f64::max) < 1e-14 {
            break;
        }
    }
    beta
}

pub fn predict(beta: &[f64], x: &[f64]) -> f64 {
    expit(beta[0] + x.iter().zip(&beta[1..]).map(|(a, b)| a * b).sum::<f64>())
}

fn logit(p: f64) -> f64 {
    let p = p.clamp(1e-6, 1.0 - 1e-6);
    (p / (1.0 - p)).ln()
}

pub struct Fits {
    pub g1: Vec<f64>,
    pub q1: Vec<f64>,
    pub q0: Vec<f64>,
}

pub fn fits(d: &FullData) -> Fits {
    let gb = logistic(&d.w, &d.a);
    let qx: Vec<Vec<f64>> = d.w.iter().zip(&d.a).map(|(w, &a)| std::iter::once(a).chain(w.iter().copied()).collect()).collect();
    let qb = logistic(&qx, &d.y);
    let arm = |a: f64| -> Vec<f64> {
        d.w.iter()
            .map(|w| predict(&qb, &std::iter::once(a).chain(w.iter().copied()).collect::<Vec<_>>()))
            .collect()
    };
    Fits {
        g1: d.w.iter().map(|w| predict(&gb, w).clamp(0.01, 0.99)).collect(),
        q1: arm(1.0),
        q0: arm(0.0),
    }
}

fn dbar(d: &FullData, f: &Fits, q1: &[f64], q0: &[f64]) -> Vec<f64> {
    (0..d.y.len())
        .map(|i| {
            let (h, q) = if d.a[i] == 1.0 { (1.0 / f.g1[i], q1[i]) } else { (-1.0 / (1.0 - f.g1[i]), q0[i]) };
            h * (d.y[i] - q) + q1[i] - q0[i]
        })
        .collect()
}

fn mean_se(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let m = x.iter().sum::<f64>() / n;
    let v = x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, (v / n).sqrt())
}

/// Full-data one-step (AIPW) estimate and SE.
pub fn one_step(d: &FullData, f: &Fits) -> (f64, f64) {
    mean_se(&dbar(d, f, &f.q1, &f.q0))
}

/// Full-data TMLE with a logistic fluctuation along H; estimate and SE.
pub fn tmle(d: &FullData, f: &Fits) -> (f64, f64) {
    let n = d.y.len();
    let h: Vec<f64> = (0..n).map(|i| if d.a[i] == 1.0 { 1.0 / f.g1[i] } else { -1.0 / (1.0 - f.g1[i]) }).collect();
    let off: Vec<f64> = (0..n).map(|i| logit(if d.a[i] == 1.0 { f.q1[i] } else { f.q0[i] })).collect();
    let mut eps = 0.0;
    for _ in 0..200 {
        let (mut s, mut ds) = (0.0, 0.0);
        for i in 0..n {
            let mu = expit(off[i] + eps * h[i]);
            s += h[i] * (d.y[i] - mu);
            ds -= h[i] * h[i] * mu * (1.0 - mu);
        }
        let step = -s / ds;
        eps += step;
        if step.abs() < 1e-15 {
            break;
        }
    }
    let q1: Vec<f64> = (0..n).map(|i| expit(logit(f.q1[i]) + eps / f.g1[i])).collect();
    let q0: Vec<f64> = (0..n).map(|i| expit(logit(f.q0[i]) - eps / (1.0 - f.g1[i]))).collect();
    let psi = (0..n).map(|i| q1[i] - q0[i]).sum::<f64>() / n as f64;
    let dd: Vec<f64> = dbar(d, f, &q1, &q0).iter().map(|v| v - psi).collect();
    (psi, mean_se(&dd).1)
}

/// Main-terms logistic g-computation.
pub fn g_computation(f: &Fits) -> f64 {
    f.q1.iter().zip(&f.q0).map(|(a, b)| a - b).sum::<f64>() / f.q1.len() as f64
}
