use std::ops::{Add, Div, Mul, Neg, Sub};

/// A value together with its gradient with respect to all `n` variables.
#[derive(Debug, Clone, PartialEq)]
pub struct DualNumber {
    pub value: f64,
    pub partials: Vec<f64>,
}

impl DualNumber {
    pub fn constant(value: f64, n: usize) -> Self {
        Self {
            value,
            partials: vec![0.0; n],
        }
    }

    pub fn variable(value: f64, index: usize, n: usize) -> Self {
        let mut partials = vec![0.0; n];
        partials[index] = 1.0;
        Self { value, partials }
    }

    /// Applies a scalar function given its value and derivative at `self.value`.
    pub fn chain(&self, value: f64, derivative: f64) -> Self {
        Self {
            value,
            partials: self.partials.iter().map(|p| p * derivative).collect(),
        }
    }

    fn combine(&self, other: &Self, value: f64, da: f64, db: f64) -> Self {
        Self {
            value,
            partials: self
                .partials
                .iter()
                .zip(&other.partials)
                .map(|(a, b)| da * a + db * b)
                .collect(),
        }
    }
}

impl Add for &DualNumber {
    type Output = DualNumber;
    fn add(self, rhs: Self) -> DualNumber {
        self.combine(rhs, self.value + rhs.value, 1.0, 1.0)
    }
}

impl Sub for &DualNumber {
    type Output = DualNumber;
    fn sub(self, rhs: Self) -> DualNumber {
        self.combine(rhs, self.value - rhs.value, 1.0, -1.0)
    }
}

impl Mul for &DualNumber {
    type Output = DualNumber;
    fn mul(self, rhs: Self) -> DualNumber {
        self.combine(rhs, self.value * rhs.value, rhs.value, self.value)
    }
}

/// Caller checks `rhs.value != 0`.
impl Div for &DualNumber {
    type Output = DualNumber;
    fn div(self, rhs: Self) -> DualNumber {
        let q = self.value / rhs.value;
        self.combine(rhs, q, 1.0 / rhs.value, -q / rhs.value)
    }
}

impl Neg for &DualNumber {
    type Output = DualNumber;
    fn neg(self) -> DualNumber {
        self.chain(-self.value, -1.0)
    }
}
