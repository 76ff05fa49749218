//! One-dimensional quadrature rules and a nested tensor driver over boxes.

use alloc::vec;
use alloc::vec::Vec;
use core::cell::Cell;
use core::f64::consts::PI;

/// Gauss-Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(order: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(order >= 1);
    let mut nodes = vec![0.0; order];
    let mut weights = vec![0.0; order];
    let n = order as f64;
    for i in 0..order.div_ceil(2) {
        let mut x = libm::cos(PI * (i as f64 + 0.75) / (n + 0.5));
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre(order, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if libm::fabs(dx) < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre(order, x);
        if d != 0.0 {
            dp = d;
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[order - 1 - i] = x;
        weights[i] = w;
        weights[order - 1 - i] = w;
    }
    (nodes, weights)
}

/// `(P_n(x), P_n'(x))` by the three-term recurrence.
fn legendre(n: usize, x: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, x);
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let k = k as f64;
        let p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

pub fn composite_gauss_legendre(f: &dyn Fn(f64) -> f64, a: f64, b: f64, panels: usize, rule: &(Vec<f64>, Vec<f64>)) -> f64 {
    let width = (b - a) / panels as f64;
    let mut total = 0.0;
    for p in 0..panels {
        let lo = a + width * p as f64;
        let mid = lo + 0.5 * width;
        let mut s = 0.0;
        for (x, w) in rule.0.iter().zip(&rule.1) {
            s += w * f(mid + 0.5 * width * x);
        }
        total += 0.5 * width * s;
    }
    total
}

const GK_NODES: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const GK_WEIGHTS_K: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_728,
];
const GK_WEIGHTS_G: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

/// Error from an integrand that returned a non-finite value at `x`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NonFiniteAt(pub f64);

fn gauss_kronrod15(f: &dyn Fn(f64) -> f64, a: f64, b: f64) -> Result<(f64, f64), NonFiniteAt> {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let eval = |x: f64| {
        let v = f(x);
        if v.is_finite() {
            Ok(v)
        } else {
            Err(NonFiniteAt(x))
        }
    };
    let fc = eval(c)?;
    let mut k = GK_WEIGHTS_K[7] * fc;
    let mut g = GK_WEIGHTS_G[3] * fc;
    for i in 0..7 {
        let dx = h * GK_NODES[i];
        let s = eval(c - dx)? + eval(c + dx)?;
        k += GK_WEIGHTS_K[i] * s;
        if i % 2 == 1 {
            g += GK_WEIGHTS_G[i / 2] * s;
        }
    }
    Ok((k * h, libm::fabs((k - g) * h)))
}

/// Adaptive Gauss-Kronrod (7, 15) with recursive bisection.
pub fn adaptive_gauss_kronrod(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> Result<f64, NonFiniteAt> {
    fn recurse(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64, whole: (f64, f64), depth: u32) -> Result<f64, NonFiniteAt> {
        let (v, e) = whole;
        if e <= tol || depth == 0 || libm::fabs(b - a) < 1e-300 {
            return Ok(v);
        }
        let m = 0.5 * (a + b);
        let left = gauss_kronrod15(f, a, m)?;
        let right = gauss_kronrod15(f, m, b)?;
        Ok(recurse(f, a, m, 0.5 * tol, left, depth - 1)? + recurse(f, m, b, 0.5 * tol, right, depth - 1)?)
    }
    if a == b {
        return Ok(0.0);
    }
    let whole = gauss_kronrod15(f, a, b)?;
    recurse(f, a, b, tol, whole, 40)
}

/// Tanh-sinh (double exponential) rule with step `2^-level`. Nodes that round
/// onto an endpoint are skipped, so integrable endpoint singularities are fine.
pub fn tanh_sinh(f: &dyn Fn(f64) -> f64, a: f64, b: f64, level: u32) -> f64 {
    if a == b {
        return 0.0;
    }
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let step = libm::ldexp(1.0, -(level as i32));
    let steps = libm::ceil(4.0 / step) as i64;
    let mut total = 0.0;
    for i in -steps..=steps {
        let t = i as f64 * step;
        let u = 0.5 * PI * libm::sinh(t);
        let cu = libm::cosh(u);
        let w = 0.5 * PI * libm::cosh(t) / (cu * cu);
        let x = c + h * libm::tanh(u);
        if x <= a.min(b) || x >= a.max(b) || w == 0.0 {
            continue;
        }
        total += w * f(x);
    }
    total * h * step
}

/// One-dimensional rule used at every level of a nested integration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Rule {
    GaussLegendre { panels: usize, order: usize },
    TanhSinh { level: u32 },
}

impl Rule {
    /// Next finer rule, used for the refinement error proxy.
    pub fn refined(self) -> Self {
        match self {
            Rule::GaussLegendre { panels, order } => Rule::GaussLegendre {
                panels: 2 * panels,
                order,
            },
            Rule::TanhSinh { level } => Rule::TanhSinh { level: level + 1 },
        }
    }
}

/// Result of a nested integration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NestedEstimate {
    pub value: f64,
    /// `|fine - coarse|` between `rule` and `rule.refined()`.
    pub refinement_delta: f64,
    /// Nodes at which the integrand was non-finite and was dropped.
    pub flagged_nodes: usize,
}

/// Nested tensor integration over `bounds` (one `(lo, hi)` pair per axis).
///
/// With `detect_support`, each axis is first scanned on `scan` points and
/// every boundary between zero and nonzero values of the (partially
/// integrated) integrand is located by bisection; the rule is then applied on
/// each nonzero segment separately.
pub fn nested(
    f: &dyn Fn(&[f64]) -> f64,
    bounds: &[(f64, f64)],
    rule: Rule,
    detect_support: bool,
    scan: usize,
) -> NestedEstimate {
    let coarse_flags = Cell::new(0);
    let coarse = nested_once(f, bounds, rule, detect_support, scan, &coarse_flags);
    let fine_flags = Cell::new(0);
    let fine = nested_once(f, bounds, rule.refined(), detect_support, scan, &fine_flags);
    NestedEstimate {
        value: fine,
        refinement_delta: libm::fabs(fine - coarse),
        flagged_nodes: fine_flags.get(),
    }
}

fn nested_once(
    f: &dyn Fn(&[f64]) -> f64,
    bounds: &[(f64, f64)],
    rule: Rule,
    detect: bool,
    scan: usize,
    flags: &Cell<usize>,
) -> f64 {
    let gl = match rule {
        Rule::GaussLegendre { order, .. } => Some(gauss_legendre(order)),
        Rule::TanhSinh { .. } => None,
    };
    let mut point = vec![0.0; bounds.len()];
    integrate_axis(f, bounds, 0, &mut point, rule, gl.as_ref(), detect, scan, flags)
}

#[allow(clippy::too_many_arguments)]
fn integrate_axis(
    f: &dyn Fn(&[f64]) -> f64,
    bounds: &[(f64, f64)],
    axis: usize,
    point: &mut Vec<f64>,
    rule: Rule,
    gl: Option<&(Vec<f64>, Vec<f64>)>,
    detect: bool,
    scan: usize,
    flags: &Cell<usize>,
) -> f64 {
    if axis == bounds.len() {
        let v = f(point);
        if v.is_finite() {
            return v;
        }
        flags.set(flags.get() + 1);
        return 0.0;
    }
    let point_cell = core::cell::RefCell::new(core::mem::take(point));
    let g = |t: f64| -> f64 {
        let mut p = point_cell.borrow().clone();
        p[axis] = t;
        integrate_axis(f, bounds, axis + 1, &mut p, rule, gl, detect, scan, flags)
    };
    let (lo, hi) = bounds[axis];
    let segments = if detect {
        support_segments(&g, lo, hi, scan)
    } else {
        vec![(lo, hi)]
    };
    let mut total = 0.0;
    for (a, b) in segments {
        total += match rule {
            Rule::GaussLegendre { panels, .. } => composite_gauss_legendre(&g, a, b, panels, gl.expect("rule")),
            Rule::TanhSinh { level } => tanh_sinh(&g, a, b, level),
        };
    }
    *point = point_cell.into_inner();
    total
}

/// Maximal sub-intervals of `[lo, hi]` on which `g` is nonzero, as resolved
/// by a uniform scan refined with bisection at each transition.
pub fn support_segments(g: &dyn Fn(f64) -> f64, lo: f64, hi: f64, scan: usize) -> Vec<(f64, f64)> {
    let scan = scan.max(2);
    let xs: Vec<f64> = (0..=scan).map(|i| lo + (hi - lo) * i as f64 / scan as f64).collect();
    let on: Vec<bool> = xs.iter().map(|&x| g(x) != 0.0).collect();
    let boundary = |mut inside: f64, mut outside: f64| {
        for _ in 0..200 {
            let m = 0.5 * (inside + outside);
            if m == inside || m == outside {
                break;
            }
            if g(m) != 0.0 {
                inside = m;
            } else {
                outside = m;
            }
        }
        // keep the segment on the nonzero side; the rule never samples the end
        inside
    };
    let mut segments = Vec::new();
    let mut start = if on[0] { Some(lo) } else { None };
    for i in 1..xs.len() {
        match (on[i - 1], on[i]) {
            (false, true) => start = Some(boundary(xs[i], xs[i - 1])),
            (true, false) => {
                let end = boundary(xs[i - 1], xs[i]);
                segments.push((start.take().unwrap_or(xs[i - 1]), end));
            }
            _ => {}
        }
    }
    if let Some(s) = start {
        segments.push((s, hi));
    }
    segments
}
