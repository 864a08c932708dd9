//! Adaptive Gauss–Kronrod quadrature and certified tails on `[a, inf)`.

use std::collections::BinaryHeap;

use serde::{Deserialize, Serialize};

use crate::expr::{Asym, Growth};

const XGK: [f64; 8] = [
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144845693013,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.0,
];
const WGK: [f64; 8] = [
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
];
// Gauss weights for the nodes XGK[1], XGK[3], XGK[5], XGK[7].
const WG: [f64; 4] = [
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
];

fn gk15(f: &dyn Fn(f64) -> f64, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut k = WGK[7] * fc;
    let mut g = WG[3] * fc;
    for i in 0..7 {
        let x = h * XGK[i];
        let s = f(c - x) + f(c + x);
        k += WGK[i] * s;
        if i % 2 == 1 {
            g += WG[i / 2] * s;
        }
    }
    (k * h, ((k - g) * h).abs())
}

#[derive(Debug, Clone, Copy)]
pub struct QuadOptions {
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub max_intervals: usize,
    /// Uniform pre-split, so narrow features are not missed by the first rule.
    pub initial_pieces: usize,
}

impl Default for QuadOptions {
    fn default() -> Self {
        QuadOptions { abs_tol: 1e-13, rel_tol: 1e-11, max_intervals: 4000, initial_pieces: 16 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadResult {
    pub value: f64,
    pub error: f64,
    pub intervals: usize,
}

struct Piece {
    a: f64,
    b: f64,
    val: f64,
    err: f64,
}

impl PartialEq for Piece {
    fn eq(&self, o: &Self) -> bool {
        self.err == o.err
    }
}
impl Eq for Piece {}
impl PartialOrd for Piece {
    fn partial_cmp(&self, o: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(o))
    }
}
impl Ord for Piece {
    fn cmp(&self, o: &Self) -> std::cmp::Ordering {
        self.err.total_cmp(&o.err)
    }
}

/// Globally adaptive G7–K15 on a finite interval.
pub fn integrate(f: &dyn Fn(f64) -> f64, a: f64, b: f64, opts: QuadOptions) -> QuadResult {
    if a == b {
        return QuadResult { value: 0.0, error: 0.0, intervals: 0 };
    }
    let n0 = opts.initial_pieces.max(1);
    let mut heap = BinaryHeap::new();
    for i in 0..n0 {
        let lo = a + (b - a) * i as f64 / n0 as f64;
        let hi = a + (b - a) * (i + 1) as f64 / n0 as f64;
        let (val, err) = gk15(f, lo, hi);
        heap.push(Piece { a: lo, b: hi, val, err });
    }
    loop {
        let total: f64 = heap.iter().map(|p| p.val).sum();
        let err: f64 = heap.iter().map(|p| p.err).sum();
        if err <= opts.abs_tol.max(opts.rel_tol * total.abs()) || heap.len() >= opts.max_intervals {
            return QuadResult { value: total, error: err, intervals: heap.len() };
        }
        let worst = heap.pop().unwrap();
        let mid = 0.5 * (worst.a + worst.b);
        if mid <= worst.a || mid >= worst.b {
            heap.push(worst);
            let total: f64 = heap.iter().map(|p| p.val).sum();
            let err: f64 = heap.iter().map(|p| p.err).sum();
            return QuadResult { value: total, error: err, intervals: heap.len() };
        }
        for (lo, hi) in [(worst.a, mid), (mid, worst.b)] {
            let (val, err) = gk15(f, lo, hi);
            heap.push(Piece { a: lo, b: hi, val, err });
        }
    }
}

/// How a tail estimate was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TailMethod {
    /// Integrand identically zero beyond the quadrature window.
    EventuallyZero,
    /// `(log F)' <= -kappa < 0` on the tail: bound `F(R) / kappa`.
    ExponentialRate,
    /// `r (log F)' <= -s < -1` on the tail: bound `F(R) R / (s - 1)`.
    PowerLaw,
}

/// Where the asymptotic information came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TailSource {
    Symbolic,
    Sampled,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TailVerdict {
    Finite {
        value: f64,
        quad_error: f64,
        tail_bound: f64,
        method: TailMethod,
        source: TailSource,
    },
    Divergent {
        /// Partial integrals `(R, int_a^R F)` on a geometric sequence of radii.
        witness: Vec<(f64, f64)>,
        reason: String,
    },
    Inconclusive {
        reason: String,
    },
}

impl TailVerdict {
    pub fn is_finite(&self) -> bool {
        matches!(self, TailVerdict::Finite { .. })
    }

    pub fn is_divergent(&self) -> bool {
        matches!(self, TailVerdict::Divergent { .. })
    }

    pub fn value(&self) -> Option<f64> {
        match self {
            TailVerdict::Finite { value, .. } => Some(*value),
            _ => None,
        }
    }
}

fn integrable_class(g: &Growth) -> Option<bool> {
    if g.e2 != 0.0 {
        return Some(g.e2 < 0.0);
    }
    if g.e1 != 0.0 {
        return Some(g.e1 < 0.0);
    }
    if g.p < -1.0 {
        return Some(true);
    }
    if g.p > -1.0 {
        return Some(false);
    }
    if g.l < -1.0 {
        Some(true)
    } else {
        Some(false)
    }
}

fn log_slope(f: &dyn Fn(f64) -> f64, r: f64) -> f64 {
    let h = 1e-4 * r.max(1.0);
    let (a, b) = (f(r + h).abs(), f(r - h).abs());
    (a.ln() - b.ln()) / (2.0 * h)
}

fn samples(lo: f64, hi: f64, n: usize) -> impl Iterator<Item = f64> {
    (0..=n).map(move |i| lo + (hi - lo) * i as f64 / n as f64)
}

fn partial_witness(f: &dyn Fn(f64) -> f64, a: f64, r: f64) -> Vec<(f64, f64)> {
    let mut out = Vec::new();
    let mut acc = 0.0;
    let mut lo = a;
    let mut hi = r;
    for _ in 0..4 {
        acc += integrate(f, lo, hi, QuadOptions::default()).value;
        out.push((hi, acc));
        lo = hi;
        hi *= 2.0;
    }
    out
}

/// Integral of `f` over `[a, inf)`: adaptive quadrature on `[a, R]` plus a
/// certified tail bound. `asym` is the symbolic asymptotic class if known;
/// otherwise the tail is judged from samples on `[R, 4R]` (tagged `Sampled`).
pub fn integrate_to_infinity(
    f: &dyn Fn(f64) -> f64,
    asym: Option<Asym>,
    a: f64,
    r_quad: f64,
) -> TailVerdict {
    let r = r_quad.max(a + 1.0);
    let n_s = 400;
    let source = if asym.is_some() { TailSource::Symbolic } else { TailSource::Sampled };

    if let Some(Asym::EventuallyZero) = asym {
        // Push R outward until a whole window [R, 2R] samples to zero.
        let mut end = r;
        for _ in 0..20 {
            if samples(end, 2.0 * end, 4000).all(|x| f(x) == 0.0) {
                let q = integrate(f, a, end, QuadOptions { initial_pieces: 64, ..Default::default() });
                return TailVerdict::Finite {
                    value: q.value,
                    quad_error: q.error,
                    tail_bound: 0.0,
                    method: TailMethod::EventuallyZero,
                    source,
                };
            }
            end *= 2.0;
        }
        return TailVerdict::Inconclusive { reason: "eventually-zero integrand has no zero window".into() };
    }

    let window: Vec<f64> = samples(r, 4.0 * r, n_s).map(|x| f(x)).collect();
    if asym.is_none() && window.iter().all(|v| *v == 0.0) {
        let q = integrate(f, a, r, QuadOptions { initial_pieces: 64, ..Default::default() });
        return TailVerdict::Finite {
            value: q.value,
            quad_error: q.error,
            tail_bound: 0.0,
            method: TailMethod::EventuallyZero,
            source,
        };
    }

    let class = match asym {
        Some(Asym::Like(g)) => Some((g, integrable_class(&g).unwrap())),
        _ => None,
    };

    if let Some((g, false)) = class {
        if g.sign == 1 {
            let w = partial_witness(f, a, r);
            let grows = w.windows(2).all(|p| p[1].1 > p[0].1);
            if grows {
                return TailVerdict::Divergent {
                    witness: w,
                    reason: format!("integrand ~ {g} is not integrable"),
                };
            }
        }
        return TailVerdict::Inconclusive {
            reason: "non-integrable growth class without a definite sign".into(),
        };
    }

    if window.iter().any(|v| *v == 0.0 || !v.is_finite()) {
        return TailVerdict::Inconclusive { reason: "tail samples vanish or are not finite".into() };
    }
    let sign_ok = window.iter().all(|v| *v > 0.0) || window.iter().all(|v| *v < 0.0);
    if !sign_ok {
        return TailVerdict::Inconclusive { reason: "integrand changes sign on the tail".into() };
    }

    let slopes: Vec<(f64, f64)> = samples(r, 4.0 * r, n_s).map(|x| (x, log_slope(f, x))).collect();
    let fr = f(r).abs();

    // Exponential-rate certificate.
    let kappa_samples = slopes.iter().map(|(_, s)| -s).fold(f64::INFINITY, f64::min);
    let kappa_limit = match class {
        Some((g, _)) if g.e2 < 0.0 => f64::INFINITY,
        Some((g, _)) if g.e2 == 0.0 && g.e1 < 0.0 => -g.e1,
        Some(_) => 0.0,
        None => {
            // Sampled: require the rate not to weaken across the window.
            let first = -slopes[0].1;
            let last = -slopes[slopes.len() - 1].1;
            if last >= 0.5 * first { kappa_samples } else { 0.0 }
        }
    };
    let kappa = kappa_samples.min(kappa_limit);
    let q = integrate(f, a, r, QuadOptions::default());
    if kappa > 1e-8 {
        return TailVerdict::Finite {
            value: q.value,
            quad_error: q.error,
            tail_bound: fr / kappa,
            method: TailMethod::ExponentialRate,
            source,
        };
    }

    // Power-law certificate.
    let s_samples = slopes.iter().map(|(x, s)| -x * s).fold(f64::INFINITY, f64::min);
    let s_limit = match class {
        Some((g, _)) if g.e2 == 0.0 && g.e1 == 0.0 => -g.p,
        Some(_) => f64::INFINITY,
        None => {
            let first = -slopes[0].0 * slopes[0].1;
            let last = -slopes[slopes.len() - 1].0 * slopes[slopes.len() - 1].1;
            if last >= first - 1e-3 { s_samples } else { 1.0 }
        }
    };
    let s = s_samples.min(s_limit);
    if s > 1.0 + 1e-8 {
        return TailVerdict::Finite {
            value: q.value,
            quad_error: q.error,
            tail_bound: fr * r / (s - 1.0),
            method: TailMethod::PowerLaw,
            source,
        };
    }

    if class.is_none() {
        // Sampled divergence: tail decays no faster than 1/r and stays positive.
        if window.iter().all(|v| *v > 0.0) && slopes.iter().all(|(x, s)| -x * s <= 1.0) {
            let w = partial_witness(f, a, r);
            if w.windows(2).all(|p| p[1].1 > p[0].1) {
                return TailVerdict::Divergent {
                    witness: w,
                    reason: "sampled integrand decays no faster than 1/r".into(),
                };
            }
        }
    }
    TailVerdict::Inconclusive { reason: "no exponential or power-law tail certificate".into() }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::{asymptotic, Expr};

    fn run(s: &str, a: f64, r: f64) -> TailVerdict {
        let e = Expr::parse(s).unwrap();
        let f = |x: f64| e.at_r(x);
        integrate_to_infinity(&f, asymptotic(&e), a, r)
    }

    #[test]
    fn finite_interval_accuracy() {
        let q = integrate(&|x: f64| x.sin(), 0.0, std::f64::consts::PI, QuadOptions::default());
        assert!((q.value - 2.0).abs() < 1e-13);
        let q = integrate(&|x: f64| x.sqrt(), 0.0, 1.0, QuadOptions::default());
        assert!((q.value - 2.0 / 3.0).abs() < 1e-10);
    }

    #[test]
    fn exponential_tail() {
        let v = run("exp(-r)", 1.0, 20.0);
        match v {
            TailVerdict::Finite { value, tail_bound, method, .. } => {
                assert!((value - (-1f64).exp()).abs() < 1e-8);
                assert!(tail_bound >= (-20f64).exp() * 0.999);
                assert_eq!(method, TailMethod::ExponentialRate);
            }
            other => panic!("{other:?}"),
        }
        // r e^{-r} is log-convex on the tail; the certificate uses the limiting rate.
        assert!(run("r*exp(-r)", 1.0, 20.0).is_finite());
    }

    #[test]
    fn power_tails() {
        let v = run("r^-2", 1.0, 50.0);
        match v {
            TailVerdict::Finite { value, tail_bound, method, .. } => {
                assert_eq!(method, TailMethod::PowerLaw);
                assert!((value + tail_bound - 1.0).abs() < 1e-6);
            }
            other => panic!("{other:?}"),
        }
        assert!(run("1/r", 1.0, 20.0).is_divergent());
        assert!(run("r", 1.0, 20.0).is_divergent());
        assert!(run("0.3", 1.0, 20.0).is_divergent());
    }

    #[test]
    fn compact_support() {
        let v = run("bump(r - 3)", 1.0, 10.0);
        let reference = integrate(&|x: f64| Expr::parse("bump(r-3)").unwrap().at_r(x), 2.0, 4.0, QuadOptions::default());
        assert!((v.value().unwrap() - reference.value).abs() < 1e-10);
    }

    #[test]
    fn sampled_fallback() {
        let f = |x: f64| (-2.0 * x).exp() * (3.0 + x.sin());
        match integrate_to_infinity(&f, None, 1.0, 20.0) {
            TailVerdict::Finite { source, .. } => assert_eq!(source, TailSource::Sampled),
            other => panic!("{other:?}"),
        }
        let g = |x: f64| 1.0 + 0.0 * x;
        assert!(integrate_to_infinity(&g, None, 1.0, 20.0).is_divergent());
        let h = |x: f64| x.sin() / x;
        assert!(matches!(integrate_to_infinity(&h, None, 1.0, 20.0), TailVerdict::Inconclusive { .. }));
    }
}
