use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// What a sequence does beyond its stored prefix.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Tail {
    /// Nothing is known; infinite sums are refused.
    Undeclared,
    /// All further terms are zero.
    Zero,
    /// `x_{L+m} = x_{L−1}·q^{m+1}` after the last stored term `x_{L−1}`.
    Geometric(f64),
}

/// A nonnegative sequence `x_first, x_first+1, …` given by a prefix and a tail model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sequence {
    pub first: usize,
    pub values: Vec<f64>,
    pub tail: Tail,
}

impl Sequence {
    pub fn new(first: usize, values: Vec<f64>, tail: Tail) -> Result<Sequence> {
        if values.is_empty() {
            return Err(Error::InvalidArgument("sequence prefix is empty".into()));
        }
        if values.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::InvalidArgument(
                "sequence terms must be finite and nonnegative".into(),
            ));
        }
        if let Tail::Geometric(q) = tail {
            if !(q > 0.0) {
                return Err(Error::InvalidArgument(format!("tail ratio {q} must be positive")));
            }
        }
        Ok(Sequence { first, values, tail })
    }

    /// One past the last stored index.
    pub fn end(&self) -> usize {
        self.first + self.values.len()
    }

    fn last(&self) -> f64 {
        *self.values.last().expect("prefix is non-empty")
    }

    pub fn get(&self, i: usize) -> Result<f64> {
        if i < self.first {
            return Err(Error::InvalidArgument(format!(
                "index {i} precedes the first index {}",
                self.first
            )));
        }
        if i < self.end() {
            return Ok(self.values[i - self.first]);
        }
        match self.tail {
            Tail::Zero => Ok(0.0),
            Tail::Geometric(q) => Ok(self.last() * q.powi((i - self.end() + 1) as i32)),
            Tail::Undeclared => Err(Error::TailUndeclared(format!("term {i} lies beyond the stored prefix"))),
        }
    }

    /// `Σ_{i ≥ j} x_i` in closed form.
    pub fn sum_from(&self, j: usize) -> Result<f64> {
        let beyond = match self.tail {
            Tail::Zero => 0.0,
            Tail::Geometric(q) if q >= 1.0 => {
                return Err(Error::DivergentTail(format!("tail ratio {q} is not below 1")));
            }
            Tail::Geometric(q) => {
                let start = j.max(self.end());
                self.get(start)? / (1.0 - q)
            }
            Tail::Undeclared => return Err(Error::TailUndeclared("infinite sum without a tail model".into())),
        };
        let lo = j.max(self.first);
        let head: f64 = if lo < self.end() {
            self.values[lo - self.first..].iter().sum()
        } else {
            0.0
        };
        Ok(head + beyond)
    }

    /// `Σ_{first ≤ i ≤ k} x_i`.
    pub fn sum_to(&self, k: usize) -> Result<f64> {
        let mut s = 0.0;
        for i in self.first..=k {
            s += self.get(i)?;
        }
        Ok(s)
    }

    /// `(Σ j x_j, Σ j² x_j)` with the geometric tail summed in closed form.
    pub fn moments(&self) -> Result<(f64, f64)> {
        let mut m1 = 0.0;
        let mut m2 = 0.0;
        for (k, v) in self.values.iter().enumerate() {
            let j = (self.first + k) as f64;
            m1 += j * v;
            m2 += j * j * v;
        }
        match self.tail {
            Tail::Zero => {}
            Tail::Undeclared => return Err(Error::TailUndeclared("moments need a tail model".into())),
            Tail::Geometric(q) if q >= 1.0 => {
                return Err(Error::DivergentTail(format!("tail ratio {q} is not below 1")));
            }
            Tail::Geometric(q) => {
                // Σ_{m≥0} (J+m) q^m and Σ_{m≥0} (J+m)² q^m with J the first tail index
                let start = self.get(self.end())?;
                let jj = self.end() as f64;
                let p = 1.0 - q;
                m1 += start * (jj / p + q / (p * p));
                m2 += start * (jj * jj / p + 2.0 * jj * q / (p * p) + q * (1.0 + q) / (p * p * p));
            }
        }
        Ok((m1, m2))
    }

    pub fn total(&self) -> Result<f64> {
        self.sum_from(self.first)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn geometric_tail_sums() {
        let s = Sequence::new(0, vec![1.0, 0.5], Tail::Geometric(0.5)).unwrap();
        assert_eq!(s.get(4).unwrap(), 0.0625);
        assert_eq!(s.sum_from(0).unwrap(), 2.0);
        assert_eq!(s.sum_from(3).unwrap(), 0.25);
        assert_eq!(s.sum_to(2).unwrap(), 1.75);
    }

    #[test]
    fn undeclared_tail_refuses_infinite_sums() {
        let s = Sequence::new(0, vec![1.0, 0.5], Tail::Undeclared).unwrap();
        assert!(matches!(s.sum_from(0), Err(Error::TailUndeclared(_))));
        assert_eq!(s.get(1).unwrap(), 0.5);
        assert!(matches!(s.get(2), Err(Error::TailUndeclared(_))));
    }

    #[test]
    fn moment_examples() {
        let point = Sequence::new(1, vec![0.0, 0.0, 0.0, 0.0, 1.0], Tail::Zero).unwrap();
        assert_eq!(point.moments().unwrap(), (5.0, 25.0));
        let two = Sequence::new(1, vec![0.5, 0.0, 0.5], Tail::Zero).unwrap();
        assert_eq!(two.moments().unwrap(), (2.0, 5.0));
        let bad = Sequence::new(1, vec![0.5], Tail::Geometric(1.0)).unwrap();
        assert!(matches!(bad.moments(), Err(Error::DivergentTail(_))));
    }

    #[test]
    fn closed_form_moments_match_truncation() {
        let rho: f64 = 2.0;
        let weights: Vec<f64> = (1..=5).map(|k| rho.powi(-k)).collect();
        let closed = Sequence::new(1, weights, Tail::Geometric(1.0 / rho)).unwrap();
        let (m1, m2) = closed.moments().unwrap();
        let (mut t1, mut t2) = (0.0, 0.0);
        for k in 1..=50 {
            let v = rho.powi(-k);
            t1 += k as f64 * v;
            t2 += (k * k) as f64 * v;
        }
        assert!((m1 - t1).abs() < 1e-12 * t1);
        assert!((m2 - t2).abs() < 1e-12 * t2);
    }
}
