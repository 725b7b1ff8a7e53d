use std::ops::{Add, Mul, Neg, Sub};

/// Value of a scalar field of `(t, x)` together with `∂/∂t`, `∂/∂x` and
/// `∂²/∂x²`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Jet2 {
    pub value: f64,
    pub d_t: f64,
    pub d_x: f64,
    pub d_xx: f64,
}

impl Jet2 {
    pub const fn new(value: f64, d_t: f64, d_x: f64, d_xx: f64) -> Self {
        Self { value, d_t, d_x, d_xx }
    }

    pub const fn constant(value: f64) -> Self {
        Self::new(value, 0.0, 0.0, 0.0)
    }

    /// The coordinate `t` seeded at `t`.
    pub const fn var_t(t: f64) -> Self {
        Self::new(t, 1.0, 0.0, 0.0)
    }

    /// The coordinate `x` seeded at `x`.
    pub const fn var_x(x: f64) -> Self {
        Self::new(x, 0.0, 1.0, 0.0)
    }

    /// Applies a scalar function given its value and first two derivatives
    /// at `self.value`.
    pub fn chain(self, f: f64, df: f64, d2f: f64) -> Self {
        Self {
            value: f,
            d_t: df * self.d_t,
            d_x: df * self.d_x,
            d_xx: d2f * self.d_x * self.d_x + df * self.d_xx,
        }
    }

    pub fn tanh(self) -> Self {
        let s = self.value.tanh();
        let d1 = 1.0 - s * s;
        self.chain(s, d1, -2.0 * s * d1)
    }

    pub fn exp(self) -> Self {
        let e = self.value.exp();
        self.chain(e, e, e)
    }

    pub fn scale(self, k: f64) -> Self {
        Self::new(k * self.value, k * self.d_t, k * self.d_x, k * self.d_xx)
    }

    pub fn is_finite(&self) -> bool {
        self.value.is_finite() && self.d_t.is_finite() && self.d_x.is_finite() && self.d_xx.is_finite()
    }
}

impl Add for Jet2 {
    type Output = Jet2;
    fn add(self, o: Jet2) -> Jet2 {
        Jet2::new(
            self.value + o.value,
            self.d_t + o.d_t,
            self.d_x + o.d_x,
            self.d_xx + o.d_xx,
        )
    }
}

impl Sub for Jet2 {
    type Output = Jet2;
    fn sub(self, o: Jet2) -> Jet2 {
        self + (-o)
    }
}

impl Neg for Jet2 {
    type Output = Jet2;
    fn neg(self) -> Jet2 {
        self.scale(-1.0)
    }
}

impl Mul for Jet2 {
    type Output = Jet2;
    fn mul(self, o: Jet2) -> Jet2 {
        Jet2 {
            value: self.value * o.value,
            d_t: self.d_t * o.value + self.value * o.d_t,
            d_x: self.d_x * o.value + self.value * o.d_x,
            d_xx: self.d_xx * o.value + 2.0 * self.d_x * o.d_x + self.value * o.d_xx,
        }
    }
}

impl Add<f64> for Jet2 {
    type Output = Jet2;
    fn add(self, k: f64) -> Jet2 {
        Jet2 {
            value: self.value + k,
            ..self
        }
    }
}

impl Mul<f64> for Jet2 {
    type Output = Jet2;
    fn mul(self, k: f64) -> Jet2 {
        self.scale(k)
    }
}
