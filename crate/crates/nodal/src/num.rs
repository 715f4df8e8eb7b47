//! Scalar abstraction and small numeric kernels.
//!
//! The low-level kernels (quadrature rules, least-squares fits, root
//! bracketing) are generic over the scalar type through [`Scalar`]; the
//! statistical pipelines instantiate them at [`crate::Real`].

use num_traits::{Float, FloatConst, FromPrimitive};
use std::fmt::{Debug, Display};
use std::iter::Sum;

/// Floating-point scalar used by the numeric kernels.
pub trait Scalar:
    Float + FloatConst + FromPrimitive + Sum + Debug + Display + Send + Sync + 'static
{
    fn cast(x: f64) -> Self {
        <Self as FromPrimitive>::from_f64(x).expect("scalar conversion")
    }
    fn cast_usize(n: usize) -> Self {
        <Self as FromPrimitive>::from_usize(n).expect("scalar conversion")
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// Nodes and weights of the `n`-point Gauss-Legendre rule on `[-1, 1]`,
/// computed by Newton iteration on the Legendre recurrence.
pub fn gauss_legendre<S: Scalar>(n: usize) -> (Vec<S>, Vec<S>) {
    assert!(n >= 1);
    let mut nodes = vec![S::zero(); n];
    let mut weights = vec![S::zero(); n];
    let nf = S::cast_usize(n);
    for i in 0..n {
        // Chebyshev-like initial guess.
        let k = S::cast_usize(i) + S::cast(0.75);
        let mut x = (S::PI() * k / (nf + S::cast(0.5))).cos();
        for _ in 0..100 {
            let (p, dp) = legendre_with_derivative(n, x);
            let dx = p / dp;
            x = x - dx;
            if dx.abs() < S::cast(1e-15) {
                break;
            }
        }
        let (_, dp) = legendre_with_derivative(n, x);
        nodes[i] = x;
        weights[i] = S::cast(2.0) / ((S::one() - x * x) * dp * dp);
    }
    nodes.reverse();
    weights.reverse();
    (nodes, weights)
}

fn legendre_with_derivative<S: Scalar>(n: usize, x: S) -> (S, S) {
    let mut p0 = S::one();
    let mut p1 = x;
    if n == 0 {
        return (p0, S::zero());
    }
    for k in 2..=n {
        let kf = S::cast_usize(k);
        let p2 = ((S::cast(2.0) * kf - S::one()) * x * p1 - (kf - S::one()) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let dp = S::cast_usize(n) * (x * p1 - p0) / (x * x - S::one());
    (p1, dp)
}

/// Integrate `f` over `[a, b]` with a composite `n`-point Gauss-Legendre rule
/// on `panels` equal panels.
pub fn integrate_gauss<S: Scalar>(
    f: impl Fn(S) -> S,
    a: S,
    b: S,
    n: usize,
    panels: usize,
) -> S {
    let (nodes, weights) = gauss_legendre::<S>(n);
    let width = (b - a) / S::cast_usize(panels);
    let half = S::cast(0.5);
    let mut total = S::zero();
    for p in 0..panels {
        let lo = a + width * S::cast_usize(p);
        let mid = lo + width * half;
        let scale = width * half;
        for (x, w) in nodes.iter().zip(weights.iter()) {
            total = total + *w * f(mid + scale * *x) * scale;
        }
    }
    total
}

/// Ordinary least squares for `y ~ intercept + slope * x`:
/// returns `(intercept, slope, r_squared)`.
pub fn linear_fit<S: Scalar>(x: &[S], y: &[S]) -> (S, S, S) {
    assert_eq!(x.len(), y.len());
    assert!(x.len() >= 2);
    let n = S::cast_usize(x.len());
    let sx = x.iter().copied().sum::<S>();
    let sy = y.iter().copied().sum::<S>();
    let mx = sx / n;
    let my = sy / n;
    let mut sxx = S::zero();
    let mut sxy = S::zero();
    let mut syy = S::zero();
    for (&xi, &yi) in x.iter().zip(y.iter()) {
        let dx = xi - mx;
        let dy = yi - my;
        sxx = sxx + dx * dx;
        sxy = sxy + dx * dy;
        syy = syy + dy * dy;
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r2 = if syy > S::zero() {
        (sxy * sxy) / (sxx * syy)
    } else {
        S::one()
    };
    (intercept, slope, r2)
}

/// Bisection followed by a single Newton polish for a 1-D root of `f` in
/// `[a, b]`, assuming `f(a)` and `f(b)` have opposite signs. Returns the
/// parameter of the root.
pub fn bisect_newton<S: Scalar>(
    f: impl Fn(S) -> S,
    df: impl Fn(S) -> S,
    mut a: S,
    mut b: S,
    iterations: usize,
) -> S {
    let mut fa = f(a);
    let half = S::cast(0.5);
    for _ in 0..iterations {
        let m = (a + b) * half;
        let fm = f(m);
        if fm == S::zero() {
            return m;
        }
        if (fa > S::zero()) == (fm > S::zero()) {
            a = m;
            fa = fm;
        } else {
            b = m;
        }
    }
    let mut x = (a + b) * half;
    let d = df(x);
    if d != S::zero() {
        let step = f(x) / d;
        let next = x - step;
        if next >= a.min(b) && next <= a.max(b) {
            x = next;
        }
    }
    x
}

/// Cumulative trapezoid integral of samples `(x, y)` starting at zero.
pub fn cumtrapz<S: Scalar>(x: &[S], y: &[S]) -> Vec<S> {
    assert_eq!(x.len(), y.len());
    let mut out = Vec::with_capacity(x.len());
    let half = S::cast(0.5);
    let mut acc = S::zero();
    out.push(acc);
    for i in 1..x.len() {
        acc = acc + (x[i] - x[i - 1]) * (y[i] + y[i - 1]) * half;
        out.push(acc);
    }
    out
}
