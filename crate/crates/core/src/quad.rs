//! Quadrature rules for complex-valued integrands of a real parameter.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use num_complex::Complex64;

type C = Complex64;

// Kronrod 15-point abscissae (descending, last is the centre), weights, and
// the embedded Gauss 7-point weights for the odd-indexed abscissae.
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
const WG: [f64; 4] = [
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
];

/// One Gauss-Kronrod 15 panel on `[a, b]`: (estimate, error).
pub fn gk15<E>(f: &mut impl FnMut(f64) -> Result<C, E>, a: f64, b: f64) -> Result<(C, f64), E> {
    let centre = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(centre)?;
    let mut kron = fc * WGK[7];
    let mut gauss = fc * WG[3];
    for j in 0..7 {
        let dx = half * XGK[j];
        let f1 = f(centre - dx)?;
        let f2 = f(centre + dx)?;
        kron += (f1 + f2) * WGK[j];
        if j % 2 == 1 {
            gauss += (f1 + f2) * WG[j / 2];
        }
    }
    let val = kron * half;
    let err = ((kron - gauss) * half).norm();
    Ok((val, err))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadResult {
    pub value: C,
    pub error: f64,
    pub converged: bool,
    pub panels: usize,
}

struct Panel {
    a: f64,
    b: f64,
    val: C,
    err: f64,
}

impl PartialEq for Panel {
    fn eq(&self, o: &Self) -> bool {
        self.err == o.err
    }
}
impl Eq for Panel {}
impl PartialOrd for Panel {
    fn partial_cmp(&self, o: &Self) -> Option<Ordering> {
        Some(self.cmp(o))
    }
}
impl Ord for Panel {
    fn cmp(&self, o: &Self) -> Ordering {
        self.err.total_cmp(&o.err)
    }
}

/// Globally adaptive GK15 on `[a, b]`, stopping once the summed error is below
/// `max(abs_tol, rel_tol * |value|)` or `max_panels` is reached.
pub fn integrate<E>(
    mut f: impl FnMut(f64) -> Result<C, E>,
    a: f64,
    b: f64,
    abs_tol: f64,
    rel_tol: f64,
    max_panels: usize,
) -> Result<QuadResult, E> {
    let (v, e) = gk15(&mut f, a, b)?;
    let mut heap = BinaryHeap::new();
    heap.push(Panel { a, b, val: v, err: e });
    let mut total = v;
    let mut err = e;
    let mut panels = 1;
    loop {
        if err <= abs_tol.max(rel_tol * total.norm()) {
            return Ok(QuadResult { value: total, error: err, converged: true, panels });
        }
        if panels >= max_panels {
            break;
        }
        let p = heap.pop().expect("heap never empties");
        let m = 0.5 * (p.a + p.b);
        if m <= p.a || m >= p.b {
            // interval no longer splittable in floating point
            heap.push(p);
            break;
        }
        let (v1, e1) = gk15(&mut f, p.a, m)?;
        let (v2, e2) = gk15(&mut f, m, p.b)?;
        total += v1 + v2 - p.val;
        err += e1 + e2 - p.err;
        heap.push(Panel { a: p.a, b: m, val: v1, err: e1 });
        heap.push(Panel { a: m, b: p.b, val: v2, err: e2 });
        panels += 1;
    }
    // recompute sums to shed accumulated rounding
    let value = heap.iter().map(|p| p.val).sum();
    let error = heap.iter().map(|p| p.err).sum();
    Ok(QuadResult { value, error, converged: false, panels })
}

/// Gauss-Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * z * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (z * p1 - p0) / (z * z - 1.0);
            let dz = p1 / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        let wi = 2.0 / ((1.0 - z * z) * dp * dp);
        w[i] = wi;
        w[n - 1 - i] = wi;
    }
    (x, w)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::convert::Infallible;

    #[test]
    fn kronrod_rule_is_exact_to_degree_22() {
        for deg in 0..=22 {
            let mut f = |x: f64| -> Result<C, Infallible> { Ok(C::new(x.powi(deg), 0.0)) };
            let (v, _) = gk15(&mut f, -1.0, 1.0).unwrap();
            let exact = if deg % 2 == 0 { 2.0 / (deg as f64 + 1.0) } else { 0.0 };
            assert!((v.re - exact).abs() < 1e-14, "degree {deg}");
        }
    }

    #[test]
    fn adaptive_handles_endpoint_sqrt() {
        let r = integrate(|x: f64| -> Result<C, Infallible> { Ok(C::new(x.sqrt(), 0.0)) }, 0.0, 1.0, 1e-12, 1e-12, 500)
            .unwrap();
        assert!(r.converged);
        assert!((r.value.re - 2.0 / 3.0).abs() < 1e-11);
    }

    #[test]
    fn oscillatory_complex_integrand() {
        let r = integrate(
            |x: f64| -> Result<C, Infallible> { Ok(C::new(0.0, 40.0 * x).exp()) },
            0.0,
            3.0,
            1e-13,
            1e-12,
            500,
        )
        .unwrap();
        let exact = (C::new(0.0, 120.0).exp() - 1.0) / C::new(0.0, 40.0);
        assert!((r.value - exact).norm() < 1e-12);
    }

    #[test]
    fn gauss_legendre_weights_and_exactness() {
        for n in [1usize, 2, 5, 8, 20] {
            let (x, w) = gauss_legendre(n);
            assert!((w.iter().sum::<f64>() - 2.0).abs() < 1e-14);
            for deg in 0..(2 * n) {
                let v: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(deg as i32)).sum();
                let exact = if deg % 2 == 0 { 2.0 / (deg as f64 + 1.0) } else { 0.0 };
                assert!((v - exact).abs() < 1e-13, "n={n} deg={deg}");
            }
        }
    }
}
