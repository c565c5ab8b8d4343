//! Truncated Taylor series in one complex variable.
//!
//! A `Jet` holds `f(s0), f'(s0), f''(s0)/2!, ...` up to a fixed order and
//! supports the arithmetic needed to push field derivatives through the
//! effective-potential formulas without numeric differentiation.

use std::ops::{Add, Div, Mul, Neg, Sub};

use num_complex::Complex64;

type C = Complex64;

pub const MAX_LEN: usize = 6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Jet {
    c: [C; MAX_LEN],
    len: usize,
}

impl Jet {
    /// From plain derivatives `[f, f', f'', ...]`.
    pub fn from_derivatives(d: &[C]) -> Jet {
        assert!(!d.is_empty() && d.len() <= MAX_LEN);
        let mut c = [C::new(0.0, 0.0); MAX_LEN];
        let mut fact = 1.0;
        for (k, v) in d.iter().enumerate() {
            if k > 0 {
                fact *= k as f64;
            }
            c[k] = v / fact;
        }
        Jet { c, len: d.len() }
    }

    pub fn constant(v: C, len: usize) -> Jet {
        let mut c = [C::new(0.0, 0.0); MAX_LEN];
        c[0] = v;
        Jet { c, len }
    }

    /// The identity function `s` expanded at `s0`.
    pub fn variable(s0: C, len: usize) -> Jet {
        let mut j = Jet::constant(s0, len);
        if len > 1 {
            j.c[1] = C::new(1.0, 0.0);
        }
        j
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn value(&self) -> C {
        self.c[0]
    }

    /// k-th derivative (not the Taylor coefficient).
    pub fn deriv(&self, k: usize) -> C {
        assert!(k < self.len, "jet too short for derivative {k}");
        let mut fact = 1.0;
        for i in 2..=k {
            fact *= i as f64;
        }
        self.c[k] * fact
    }

    /// Jet of the derivative; one order shorter.
    pub fn differentiate(&self) -> Jet {
        assert!(self.len > 1);
        let mut c = [C::new(0.0, 0.0); MAX_LEN];
        for k in 1..self.len {
            c[k - 1] = self.c[k] * k as f64;
        }
        Jet { c, len: self.len - 1 }
    }

    pub fn truncate(&self, len: usize) -> Jet {
        let mut j = *self;
        j.len = len.min(self.len);
        for k in j.len..MAX_LEN {
            j.c[k] = C::new(0.0, 0.0);
        }
        j
    }

    pub fn scale(&self, k: C) -> Jet {
        let mut j = *self;
        for v in j.c.iter_mut().take(self.len) {
            *v *= k;
        }
        j
    }

    pub fn recip(&self) -> Jet {
        Jet::constant(C::new(1.0, 0.0), self.len) / *self
    }

    /// Square root whose leading value is `root` (which must square to the
    /// value); the caller picks the branch.
    pub fn sqrt_with(&self, root: C) -> Jet {
        let mut r = [C::new(0.0, 0.0); MAX_LEN];
        r[0] = root;
        for k in 1..self.len {
            let mut acc = self.c[k];
            for i in 1..k {
                acc -= r[i] * r[k - i];
            }
            r[k] = acc / (2.0 * root);
        }
        Jet { c: r, len: self.len }
    }

    /// `self^p` for real `p` using the supplied leading value `lead` = value^p.
    pub fn powf_with(&self, p: f64, lead: C) -> Jet {
        // (f^p)' = p f^(p-1) f'  =>  f g' = p f' g  solved order by order
        let f = &self.c;
        let mut g = [C::new(0.0, 0.0); MAX_LEN];
        g[0] = lead;
        for k in 1..self.len {
            // k f0 g_k = sum_{j=1..k} (p j - (k - j)) f_j g_{k-j}
            let mut acc = C::new(0.0, 0.0);
            for j in 1..=k {
                acc += (p * j as f64 - (k - j) as f64) * f[j] * g[k - j];
            }
            g[k] = acc / (k as f64 * f[0]);
        }
        Jet { c: g, len: self.len }
    }

    pub fn exp(&self) -> Jet {
        let mut g = [C::new(0.0, 0.0); MAX_LEN];
        g[0] = self.c[0].exp();
        for k in 1..self.len {
            let mut acc = C::new(0.0, 0.0);
            for j in 1..=k {
                acc += j as f64 * self.c[j] * g[k - j];
            }
            g[k] = acc / k as f64;
        }
        Jet { c: g, len: self.len }
    }

    /// Principal-branch logarithm.
    pub fn ln(&self) -> Jet {
        let d = self.differentiate() / self.truncate(self.len - 1);
        self.integrate_from(self.c[0].ln(), &d)
    }

    // Build a jet from its value and the jet of its derivative.
    fn integrate_from(&self, v0: C, d: &Jet) -> Jet {
        let mut c = [C::new(0.0, 0.0); MAX_LEN];
        c[0] = v0;
        for k in 1..self.len {
            c[k] = d.c[k - 1] / k as f64;
        }
        Jet { c, len: self.len }
    }

    pub fn sin(&self) -> Jet {
        self.sin_cos().0
    }

    pub fn cos(&self) -> Jet {
        self.sin_cos().1
    }

    pub fn sin_cos(&self) -> (Jet, Jet) {
        let mut s = [C::new(0.0, 0.0); MAX_LEN];
        let mut c = [C::new(0.0, 0.0); MAX_LEN];
        s[0] = self.c[0].sin();
        c[0] = self.c[0].cos();
        for k in 1..self.len {
            let mut as_ = C::new(0.0, 0.0);
            let mut ac = C::new(0.0, 0.0);
            for j in 1..=k {
                as_ += j as f64 * self.c[j] * c[k - j];
                ac -= j as f64 * self.c[j] * s[k - j];
            }
            s[k] = as_ / k as f64;
            c[k] = ac / k as f64;
        }
        (Jet { c: s, len: self.len }, Jet { c, len: self.len })
    }
}

fn common(a: &Jet, b: &Jet) -> usize {
    a.len.min(b.len)
}

impl Add for Jet {
    type Output = Jet;
    fn add(self, o: Jet) -> Jet {
        let len = common(&self, &o);
        let mut c = [C::new(0.0, 0.0); MAX_LEN];
        for k in 0..len {
            c[k] = self.c[k] + o.c[k];
        }
        Jet { c, len }
    }
}

impl Sub for Jet {
    type Output = Jet;
    fn sub(self, o: Jet) -> Jet {
        self + (-o)
    }
}

impl Neg for Jet {
    type Output = Jet;
    fn neg(self) -> Jet {
        self.scale(C::new(-1.0, 0.0))
    }
}

impl Mul for Jet {
    type Output = Jet;
    fn mul(self, o: Jet) -> Jet {
        let len = common(&self, &o);
        let mut c = [C::new(0.0, 0.0); MAX_LEN];
        for k in 0..len {
            let mut acc = C::new(0.0, 0.0);
            for i in 0..=k {
                acc += self.c[i] * o.c[k - i];
            }
            c[k] = acc;
        }
        Jet { c, len }
    }
}

impl Div for Jet {
    type Output = Jet;
    fn div(self, o: Jet) -> Jet {
        let len = common(&self, &o);
        let mut q = [C::new(0.0, 0.0); MAX_LEN];
        for k in 0..len {
            let mut acc = self.c[k];
            for i in 1..=k {
                acc -= o.c[i] * q[k - i];
            }
            q[k] = acc / o.c[0];
        }
        Jet { c: q, len }
    }
}

impl Add<C> for Jet {
    type Output = Jet;
    fn add(mut self, v: C) -> Jet {
        self.c[0] += v;
        self
    }
}

impl Mul<C> for Jet {
    type Output = Jet;
    fn mul(self, v: C) -> Jet {
        self.scale(v)
    }
}

impl Mul<f64> for Jet {
    type Output = Jet;
    fn mul(self, v: f64) -> Jet {
        self.scale(C::new(v, 0.0))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: C, b: C, tol: f64) -> bool {
        (a - b).norm() <= tol * b.norm().max(1.0)
    }

    #[test]
    fn product_and_quotient_match_closed_forms() {
        let s0 = C::new(0.4, 0.3);
        let x = Jet::variable(s0, 5);
        // f = s^2 / (1 + s)
        let f = (x * x) / (x + C::new(1.0, 0.0));
        let one = C::new(1.0, 0.0);
        let d1 = (s0 * s0 + 2.0 * s0) / ((one + s0) * (one + s0));
        let d2 = 2.0 / (one + s0).powi(3);
        assert!(close(f.deriv(1), d1, 1e-14));
        assert!(close(f.deriv(2), d2, 1e-14));
        assert!(close(f.deriv(4), 24.0 / (one + s0).powi(5), 1e-13));
    }

    #[test]
    fn sqrt_and_powf_respect_supplied_branch() {
        let s0 = C::new(-2.0, 0.5);
        let x = Jet::variable(s0, 4);
        let r = x.sqrt_with(-s0.sqrt());
        // derivative of the negative branch is -1/(2 sqrt)
        assert!(close(r.deriv(1), -0.5 / s0.sqrt(), 1e-14));
        let p = x.powf_with(-1.5, s0.powf(-1.5));
        assert!(close(p.deriv(1), -1.5 * s0.powf(-2.5), 1e-13));
        assert!(close(p.deriv(3), -1.5 * -2.5 * -3.5 * s0.powf(-4.5), 1e-12));
    }

    #[test]
    fn transcendental_jets() {
        let s0 = C::new(0.3, -0.2);
        let x = Jet::variable(s0, 5);
        let e = x.exp();
        for k in 0..5 {
            assert!(close(e.deriv(k), s0.exp(), 1e-14));
        }
        let (s, c) = x.sin_cos();
        assert!(close(s.deriv(3), -s0.cos(), 1e-14));
        assert!(close(c.deriv(2), -s0.cos(), 1e-14));
        let l = x.ln();
        assert!(close(l.deriv(2), -1.0 / (s0 * s0), 1e-14));
    }

    #[test]
    fn differentiate_shifts_orders() {
        let x = Jet::variable(C::new(1.0, 1.0), 4);
        let cube = x * x * x;
        let d = cube.differentiate();
        assert_eq!(d.len(), 3);
        assert!(close(d.value(), 3.0 * C::new(1.0, 1.0).powi(2), 1e-15));
        assert!(close(d.deriv(2), C::new(6.0, 0.0), 1e-15));
    }
}
