/// A real exponent with fast paths for the values that dominate the inner
/// loops (1, 2, small integers, square roots).
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) enum Power {
    Zero,
    One,
    Two,
    Int(i32),
    Sqrt,
    InvSqrt,
    Real(f64),
}

impl Power {
    pub(crate) fn new(e: f64) -> Self {
        if e == 0.0 {
            Power::Zero
        } else if e == 1.0 {
            Power::One
        } else if e == 2.0 {
            Power::Two
        } else if e == 0.5 {
            Power::Sqrt
        } else if e == -0.5 {
            Power::InvSqrt
        } else if e.fract() == 0.0 && e.abs() <= 16.0 {
            Power::Int(e as i32)
        } else {
            Power::Real(e)
        }
    }

    #[inline]
    pub(crate) fn apply(self, x: f64) -> f64 {
        match self {
            Power::Zero => 1.0,
            Power::One => x,
            Power::Two => x * x,
            Power::Int(i) => x.powi(i),
            Power::Sqrt => x.sqrt(),
            Power::InvSqrt => 1.0 / x.sqrt(),
            Power::Real(e) => x.powf(e),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fast_paths_agree_with_powf() {
        for &e in &[0.0, 1.0, 2.0, 3.0, -1.0, 0.5, -0.5, 1.7, -2.25] {
            let p = Power::new(e);
            for &x in &[0.3, 1.0, 2.5, 1e3] {
                let a = p.apply(x);
                let b: f64 = x.powf(e);
                assert!((a - b).abs() <= 1e-14 * b.abs(), "e={e} x={x}: {a} vs {b}");
            }
        }
    }
}
