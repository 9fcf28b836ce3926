//! Simple Lipschitz differential forms `f dg_1 ^ ... ^ dg_k` and finite sums
//! of them.
//!
//! Coordinate coefficients are Jacobian minors: the coefficient of
//! `dx_{i_1} ^ ... ^ dx_{i_k}` in `f dg_1 ^ ... ^ dg_k` is
//! `f * det[d g_r / d x_{i_c}]`. The exterior derivative is kept lazy, the
//! coefficient `f` simply becomes the first factor, so derivatives are only
//! ever evaluated at quadrature points.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::fields::{Expr, ScalarField};

/// Largest ambient dimension a form may live in.
pub const MAX_AMBIENT: usize = 8;

/// A strictly increasing list of zero-based axes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MultiIndex(Vec<usize>);

impl MultiIndex {
    pub fn new(axes: Vec<usize>, ambient: usize) -> Result<Self> {
        if axes.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::usage(format!(
                "multi-index {axes:?} is not strictly increasing"
            )));
        }
        if let Some(&a) = axes.iter().find(|&&a| a >= ambient) {
            return Err(Error::usage(format!(
                "axis {a} out of range for dimension {ambient}"
            )));
        }
        Ok(MultiIndex(axes))
    }

    /// `(0, 1, ..., k-1)`.
    pub fn leading(k: usize) -> Self {
        MultiIndex((0..k).collect())
    }

    pub fn axes(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Determinant of the `k x k` row-major matrix in `m`, by LU with partial
/// pivoting. `m` is overwritten.
pub fn determinant(m: &mut [f64], k: usize) -> f64 {
    debug_assert_eq!(m.len(), k * k);
    let mut det = 1.0;
    for col in 0..k {
        let mut piv = col;
        let mut best = m[col * k + col].abs();
        for r in col + 1..k {
            let v = m[r * k + col].abs();
            if v > best {
                best = v;
                piv = r;
            }
        }
        if best == 0.0 {
            return 0.0;
        }
        if piv != col {
            for c in 0..k {
                m.swap(col * k + c, piv * k + c);
            }
            det = -det;
        }
        let d = m[col * k + col];
        det *= d;
        for r in col + 1..k {
            let factor = m[r * k + col] / d;
            if factor != 0.0 {
                for c in col + 1..k {
                    m[r * k + c] -= factor * m[col * k + c];
                }
            }
        }
    }
    det
}

/// `f dg_1 ^ ... ^ dg_k` on `R^n`.
#[derive(Debug, Clone)]
pub struct SimpleForm {
    ambient: usize,
    coefficient: ScalarField,
    factors: Vec<ScalarField>,
}

impl SimpleForm {
    pub fn new(coefficient: ScalarField, factors: Vec<ScalarField>) -> Result<Self> {
        let n = coefficient.arity();
        if n > MAX_AMBIENT {
            return Err(Error::usage(format!(
                "ambient dimension {n} exceeds {MAX_AMBIENT}"
            )));
        }
        for g in &factors {
            Error::check_dim(n, g.arity())?;
        }
        if factors.len() > n {
            return Err(Error::usage(format!(
                "degree {} exceeds ambient dimension {n}",
                factors.len()
            )));
        }
        Ok(SimpleForm {
            ambient: n,
            coefficient,
            factors,
        })
    }

    /// Parse `coefficient` and `factors` in the expression grammar.
    pub fn parse(coefficient: &str, factors: &[&str], ambient: usize) -> Result<Self> {
        let f = ScalarField::parse(coefficient, ambient)?;
        let gs = factors
            .iter()
            .map(|s| ScalarField::parse(s, ambient))
            .collect::<Result<Vec<_>>>()?;
        SimpleForm::new(f, gs)
    }

    /// `f dx_{axes[0]} ^ ...`.
    pub fn coordinate(coefficient: ScalarField, axes: &MultiIndex) -> Result<Self> {
        let n = coefficient.arity();
        let gs = axes
            .axes()
            .iter()
            .map(|&j| ScalarField::coordinate(n, j))
            .collect::<Result<Vec<_>>>()?;
        SimpleForm::new(coefficient, gs)
    }

    pub fn ambient(&self) -> usize {
        self.ambient
    }

    pub fn degree(&self) -> usize {
        self.factors.len()
    }

    pub fn coefficient_field(&self) -> &ScalarField {
        &self.coefficient
    }

    pub fn factors(&self) -> &[ScalarField] {
        &self.factors
    }

    /// `d(f dg_1 ^ ... ^ dg_k) = 1 df ^ dg_1 ^ ... ^ dg_k`.
    pub fn exterior_derivative(&self) -> Result<SimpleForm> {
        if self.degree() >= self.ambient {
            return Err(Error::usage(
                "exterior derivative of a top-degree form is zero; use an empty FormSum",
            ));
        }
        let mut factors = Vec::with_capacity(self.degree() + 1);
        factors.push(self.coefficient.clone());
        factors.extend(self.factors.iter().cloned());
        Ok(SimpleForm {
            ambient: self.ambient,
            coefficient: ScalarField::constant(self.ambient, 1.0),
            factors,
        })
    }

    pub fn coefficient(&self, axes: &MultiIndex, x: &[f64]) -> Result<f64> {
        Error::check_dim(self.ambient, x.len())?;
        if axes.len() != self.degree() {
            return Err(Error::usage(format!(
                "multi-index of length {} for a form of degree {}",
                axes.len(),
                self.degree()
            )));
        }
        if axes.axes().iter().any(|&a| a >= self.ambient) {
            return Err(Error::usage("multi-index axis out of range"));
        }
        Ok(self.coefficient_unchecked(axes.axes(), x))
    }

    pub(crate) fn coefficient_unchecked(&self, axes: &[usize], x: &[f64]) -> f64 {
        let f = self.coefficient.eval_unchecked(x);
        let k = self.factors.len();
        if f == 0.0 || k == 0 {
            return f;
        }
        let mut buf = [0.0f64; MAX_AMBIENT * MAX_AMBIENT];
        let m = &mut buf[..k * k];
        for (r, g) in self.factors.iter().enumerate() {
            for (c, &j) in axes.iter().enumerate() {
                m[r * k + c] = g.partial_unchecked(j, x);
            }
        }
        f * determinant(m, k)
    }

    /// Coefficient `b` of `b dx_1 ^ ... ^ dx_n` for a top-degree form.
    pub fn volume_coefficient(&self, x: &[f64]) -> Result<f64> {
        if self.degree() != self.ambient {
            return Err(Error::usage(format!(
                "volume coefficient needs degree {}, form has degree {}",
                self.ambient,
                self.degree()
            )));
        }
        self.coefficient(&MultiIndex::leading(self.ambient), x)
    }

    /// Coefficient `a` of `dx_1 ^ ... ^ dx_{n-1}` at the boundary point
    /// `(x', 0)` of the half-space `x_n >= 0`.
    pub fn tangential_coefficient(&self, boundary_point: &[f64]) -> Result<f64> {
        if self.degree() + 1 != self.ambient {
            return Err(Error::usage(format!(
                "tangential coefficient needs degree {}, form has degree {}",
                self.ambient - 1,
                self.degree()
            )));
        }
        Error::check_dim(self.ambient - 1, boundary_point.len())?;
        let mut x = boundary_point.to_vec();
        x.push(0.0);
        Ok(self.coefficient_unchecked(&(0..self.ambient - 1).collect::<Vec<_>>(), &x))
    }

    /// Pull back along the embedding `x' -> (x', 0)`, giving a top-degree
    /// form on `R^{n-1}`.
    pub fn restrict_to_boundary(&self) -> Result<SimpleForm> {
        if self.ambient < 2 {
            return Err(Error::usage(
                "the boundary of the half-line is a point; it has no coordinate form",
            ));
        }
        if self.degree() + 1 != self.ambient {
            return Err(Error::usage("only (n-1)-forms restrict to the boundary"));
        }
        let m = self.ambient - 1;
        let mut embed: Vec<Arc<Expr>> = (0..m).map(Expr::coord).collect();
        embed.push(Expr::constant(0.0));
        self.map_fields(|f| f.compose(&embed, m))
    }

    /// Apply `op` to the coefficient and every factor.
    pub fn map_fields<F>(&self, mut op: F) -> Result<SimpleForm>
    where
        F: FnMut(&ScalarField) -> Result<ScalarField>,
    {
        let coefficient = op(&self.coefficient)?;
        let factors = self
            .factors
            .iter()
            .map(&mut op)
            .collect::<Result<Vec<_>>>()?;
        SimpleForm::new(coefficient, factors)
    }

    /// Replace the coefficient, keeping the factors.
    pub fn with_coefficient(&self, coefficient: ScalarField) -> Result<SimpleForm> {
        SimpleForm::new(coefficient, self.factors.clone())
    }
}

/// A finite sum of simple forms of equal degree. The empty sum is the zero form.
#[derive(Debug, Clone)]
pub struct FormSum {
    ambient: usize,
    degree: usize,
    terms: Vec<SimpleForm>,
}

impl FormSum {
    pub fn new(ambient: usize, degree: usize, terms: Vec<SimpleForm>) -> Result<Self> {
        if degree > ambient {
            return Err(Error::usage(format!(
                "degree {degree} exceeds dimension {ambient}"
            )));
        }
        for t in &terms {
            Error::check_dim(ambient, t.ambient())?;
            if t.degree() != degree {
                return Err(Error::usage(format!(
                    "term of degree {} in a sum of degree {degree}",
                    t.degree()
                )));
            }
        }
        Ok(FormSum {
            ambient,
            degree,
            terms,
        })
    }

    pub fn zero(ambient: usize, degree: usize) -> Result<Self> {
        FormSum::new(ambient, degree, vec![])
    }

    pub fn ambient(&self) -> usize {
        self.ambient
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn terms(&self) -> &[SimpleForm] {
        &self.terms
    }

    pub fn coefficient(&self, axes: &MultiIndex, x: &[f64]) -> Result<f64> {
        Error::check_dim(self.ambient, x.len())?;
        if axes.len() != self.degree {
            return Err(Error::usage("multi-index length does not match degree"));
        }
        Ok(self.coefficient_unchecked(axes.axes(), x))
    }

    pub(crate) fn coefficient_unchecked(&self, axes: &[usize], x: &[f64]) -> f64 {
        self.terms
            .iter()
            .map(|t| t.coefficient_unchecked(axes, x))
            .sum()
    }

    pub fn volume_coefficient(&self, x: &[f64]) -> Result<f64> {
        if self.degree != self.ambient {
            return Err(Error::usage("volume coefficient needs a top-degree form"));
        }
        self.coefficient(&MultiIndex::leading(self.ambient), x)
    }

    pub fn tangential_coefficient(&self, boundary_point: &[f64]) -> Result<f64> {
        if self.degree + 1 != self.ambient {
            return Err(Error::usage("tangential coefficient needs an (n-1)-form"));
        }
        Error::check_dim(self.ambient - 1, boundary_point.len())?;
        let mut x = boundary_point.to_vec();
        x.push(0.0);
        Ok(self.coefficient_unchecked(&(0..self.ambient - 1).collect::<Vec<_>>(), &x))
    }

    pub fn exterior_derivative(&self) -> Result<FormSum> {
        if self.degree >= self.ambient {
            return Err(Error::usage(
                "exterior derivative of a top-degree form is zero; use an empty FormSum",
            ));
        }
        let terms = self
            .terms
            .iter()
            .map(SimpleForm::exterior_derivative)
            .collect::<Result<Vec<_>>>()?;
        FormSum::new(self.ambient, self.degree + 1, terms)
    }

    pub fn restrict_to_boundary(&self) -> Result<FormSum> {
        if self.ambient < 2 {
            return Err(Error::usage(
                "the boundary of the half-line is a point; it has no coordinate form",
            ));
        }
        if self.degree + 1 != self.ambient {
            return Err(Error::usage("only (n-1)-forms restrict to the boundary"));
        }
        let terms = self
            .terms
            .iter()
            .map(SimpleForm::restrict_to_boundary)
            .collect::<Result<Vec<_>>>()?;
        FormSum::new(self.ambient - 1, self.degree, terms)
    }

    pub fn map_terms<F>(&self, op: F) -> Result<FormSum>
    where
        F: FnMut(&SimpleForm) -> Result<SimpleForm>,
    {
        let terms = self.terms.iter().map(op).collect::<Result<Vec<_>>>()?;
        FormSum::new(self.ambient, self.degree, terms)
    }

    /// Every coordinate coefficient `(I, value)` at `x`.
    pub fn all_coefficients(&self, x: &[f64]) -> Vec<(Vec<usize>, f64)> {
        combinations(self.ambient, self.degree)
            .into_iter()
            .map(|axes| {
                let v = self.coefficient_unchecked(&axes, x);
                (axes, v)
            })
            .collect()
    }
}

impl From<SimpleForm> for FormSum {
    fn from(t: SimpleForm) -> Self {
        FormSum {
            ambient: t.ambient(),
            degree: t.degree(),
            terms: vec![t],
        }
    }
}

/// `b dx_1 ^ ... ^ dx_n`.
#[derive(Debug, Clone)]
pub struct TopFormField {
    b: ScalarField,
}

impl TopFormField {
    pub fn new(b: ScalarField) -> Self {
        TopFormField { b }
    }

    pub fn density(&self) -> &ScalarField {
        &self.b
    }

    pub fn to_form(&self) -> Result<SimpleForm> {
        SimpleForm::coordinate(self.b.clone(), &MultiIndex::leading(self.b.arity()))
    }
}

/// All increasing `k`-subsets of `0..n`.
pub fn combinations(n: usize, k: usize) -> Vec<Vec<usize>> {
    fn go(start: usize, n: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..n {
            cur.push(i);
            go(i + 1, n, k, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    go(0, n, k, &mut Vec::new(), &mut out);
    out
}
