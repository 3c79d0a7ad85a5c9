//! Box-constrained limited-memory quasi-Newton descent driven by central finite
//! differences. Used for acquisition ascent and for continuous length-scale
//! estimation, both of which only expose function values.

use std::collections::VecDeque;

use crate::linalg::dot;
use crate::scalar::Scalar;

#[derive(Debug, Clone)]
pub struct BoundedOptions<T> {
    pub max_iter: usize,
    /// Number of correction pairs kept.
    pub memory: usize,
    /// Finite-difference step as a fraction of each axis width.
    pub fd_rel_step: T,
    /// Stop once the projected-gradient step `|x - P(x - g)|∞` falls below this.
    pub pg_tol: T,
    /// Stop once one iteration improves the value by less than `f_tol (1 + |f|)`.
    pub f_tol: T,
    /// Largest first step, as a fraction of the smallest axis width.
    pub initial_step: T,
}

impl<T: Scalar> Default for BoundedOptions<T> {
    fn default() -> Self {
        Self {
            max_iter: 100,
            memory: 6,
            fd_rel_step: T::lit(1e-6),
            pg_tol: T::lit(1e-10),
            f_tol: T::lit(1e-12),
            initial_step: T::lit(0.1),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LocalOptimum<T> {
    pub x: Vec<T>,
    pub value: T,
    pub iterations: usize,
    pub evaluations: usize,
}

/// Central differences with steps `rel · (u - l)`, shortened at the bounds.
pub fn fd_gradient<T: Scalar, F: FnMut(&[T]) -> T>(
    f: &mut F,
    x: &[T],
    lower: &[T],
    upper: &[T],
    rel: T,
) -> Vec<T> {
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            let h = rel * (upper[i] - lower[i]);
            let hi = (x[i] + h).min(upper[i]);
            let lo = (x[i] - h).max(lower[i]);
            probe[i] = hi;
            let fp = f(&probe);
            probe[i] = lo;
            let fm = f(&probe);
            probe[i] = x[i];
            if hi > lo {
                (fp - fm) / (hi - lo)
            } else {
                T::zero()
            }
        })
        .collect()
}

/// Minimizes `f` over the box `[lower, upper]` starting from `x0` (clamped into the box).
pub fn minimize_bounded<T: Scalar, F: FnMut(&[T]) -> T>(
    mut f: F,
    x0: &[T],
    lower: &[T],
    upper: &[T],
    opts: &BoundedOptions<T>,
) -> LocalOptimum<T> {
    let n = x0.len();
    let clamp = |v: &[T]| -> Vec<T> {
        v.iter()
            .zip(lower.iter().zip(upper))
            .map(|(&a, (&l, &u))| a.max(l).min(u))
            .collect()
    };
    let mut evals = 0usize;
    let mut counted = |x: &[T]| {
        evals += 1;
        f(x)
    };

    let mut x = clamp(x0);
    let mut fx = counted(&x);
    if n == 0 || !fx.is_finite() {
        return LocalOptimum { x, value: fx, iterations: 0, evaluations: evals };
    }
    let mut g = fd_gradient(&mut counted, &x, lower, upper, opts.fd_rel_step);
    let mut pairs: VecDeque<(Vec<T>, Vec<T>, T)> = VecDeque::new();
    let min_width = (0..n).map(|i| upper[i] - lower[i]).fold(T::infinity(), T::min);
    let mut iterations = 0;

    while iterations < opts.max_iter {
        iterations += 1;

        let stepped = clamp(&x.iter().zip(&g).map(|(&a, &b)| a - b).collect::<Vec<_>>());
        let pg = x.iter().zip(&stepped).map(|(&a, &b)| (a - b).abs()).fold(T::zero(), T::max);
        if pg <= opts.pg_tol {
            break;
        }

        let free: Vec<bool> = (0..n)
            .map(|i| !((x[i] <= lower[i] && g[i] > T::zero()) || (x[i] >= upper[i] && g[i] < T::zero())))
            .collect();

        let mut d = two_loop(&g, &pairs);
        for i in 0..n {
            if !free[i] {
                d[i] = T::zero();
            }
        }
        if !(dot(&g, &d) < T::zero()) {
            pairs.clear();
            d = g.iter().zip(&free).map(|(&gi, &fr)| if fr { -gi } else { T::zero() }).collect();
        }
        if pairs.is_empty() {
            let dmax = d.iter().fold(T::zero(), |m, v| m.max(v.abs()));
            if dmax > T::zero() {
                let scale = (opts.initial_step * min_width / dmax).min(T::one());
                d.iter_mut().for_each(|v| *v = *v * scale);
            }
        }

        let mut t = T::one();
        let mut accepted = None;
        for _ in 0..40 {
            let trial = clamp(&x.iter().zip(&d).map(|(&a, &b)| a + t * b).collect::<Vec<_>>());
            let ft = counted(&trial);
            let delta: Vec<T> = trial.iter().zip(&x).map(|(&a, &b)| a - b).collect();
            let slope = dot(&g, &delta).min(T::zero());
            if ft.is_finite() && ft <= fx + T::lit(1e-4) * slope && ft <= fx && trial != x {
                accepted = Some((trial, ft));
                break;
            }
            t = t * T::lit(0.5);
        }
        let Some((xn, fnew)) = accepted else {
            if pairs.is_empty() {
                break;
            }
            pairs.clear();
            continue;
        };

        let gn = fd_gradient(&mut counted, &xn, lower, upper, opts.fd_rel_step);
        let s: Vec<T> = xn.iter().zip(&x).map(|(&a, &b)| a - b).collect();
        let y: Vec<T> = gn.iter().zip(&g).map(|(&a, &b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > T::epsilon() * dot(&y, &y).sqrt() * dot(&s, &s).sqrt() && sy > T::zero() {
            if pairs.len() == opts.memory {
                pairs.pop_front();
            }
            pairs.push_back((s, y, sy));
        }

        let improvement = fx - fnew;
        x = xn;
        g = gn;
        let stalled = improvement <= opts.f_tol * (T::one() + fx.abs());
        fx = fnew;
        if stalled {
            break;
        }
    }

    LocalOptimum { x, value: fx, iterations, evaluations: evals }
}

/// `-H g` from the stored correction pairs.
fn two_loop<T: Scalar>(g: &[T], pairs: &VecDeque<(Vec<T>, Vec<T>, T)>) -> Vec<T> {
    let mut q: Vec<T> = g.to_vec();
    let mut alphas = Vec::with_capacity(pairs.len());
    for (s, y, sy) in pairs.iter().rev() {
        let a = dot(s, &q) / *sy;
        for (qi, &yi) in q.iter_mut().zip(y) {
            *qi = *qi - a * yi;
        }
        alphas.push(a);
    }
    if let Some((_, y, sy)) = pairs.back() {
        let gamma = *sy / dot(y, y);
        q.iter_mut().for_each(|v| *v = *v * gamma);
    }
    for ((s, y, sy), a) in pairs.iter().zip(alphas.into_iter().rev()) {
        let b = dot(y, &q) / *sy;
        for (qi, &si) in q.iter_mut().zip(s) {
            *qi = *qi + (a - b) * si;
        }
    }
    q.iter().map(|&v| -v).collect()
}
