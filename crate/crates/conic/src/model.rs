//! Affine expressions, rows and cone blocks over a dense variable index.

use thiserror::Error;

/// Sparse affine expression `sum(a_i * x_i) + constant`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LinExpr {
    pub terms: Vec<(usize, f64)>,
    pub constant: f64,
}

impl LinExpr {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn constant(value: f64) -> Self {
        Self {
            terms: Vec::new(),
            constant: value,
        }
    }

    pub fn var(index: usize) -> Self {
        Self {
            terms: vec![(index, 1.0)],
            constant: 0.0,
        }
    }

    pub fn from_terms(terms: &[(usize, f64)], constant: f64) -> Self {
        Self {
            terms: terms.to_vec(),
            constant,
        }
    }

    /// Appends `coef * x_index`; zero coefficients are skipped.
    pub fn add_term(&mut self, index: usize, coef: f64) -> &mut Self {
        if coef != 0.0 {
            self.terms.push((index, coef));
        }
        self
    }

    pub fn with_term(mut self, index: usize, coef: f64) -> Self {
        self.add_term(index, coef);
        self
    }

    pub fn with_constant(mut self, value: f64) -> Self {
        self.constant += value;
        self
    }

    pub fn add_expr(&mut self, other: &LinExpr, scale: f64) -> &mut Self {
        for &(i, a) in &other.terms {
            self.add_term(i, scale * a);
        }
        self.constant += scale * other.constant;
        self
    }

    pub fn scaled(&self, scale: f64) -> Self {
        let mut out = LinExpr::zero();
        out.add_expr(self, scale);
        out
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.terms.iter().map(|&(i, a)| a * x[i]).sum::<f64>() + self.constant
    }

    /// Merges repeated variables, drops exact zeros and sorts by index.
    pub fn compact(&self) -> Self {
        let mut terms = self.terms.clone();
        terms.sort_by_key(|t| t.0);
        let mut merged: Vec<(usize, f64)> = Vec::with_capacity(terms.len());
        for (i, a) in terms {
            match merged.last_mut() {
                Some(last) if last.0 == i => last.1 += a,
                _ => merged.push((i, a)),
            }
        }
        merged.retain(|t| t.1 != 0.0);
        Self {
            terms: merged,
            constant: self.constant,
        }
    }

    pub fn max_index(&self) -> Option<usize> {
        self.terms.iter().map(|t| t.0).max()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RowSense {
    /// `expr == 0`
    Eq,
    /// `expr <= 0`
    Le,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Row<T> {
    pub expr: LinExpr,
    pub sense: RowSense,
    pub tag: T,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ConeKind {
    /// `e_0 >= ||(e_1, ..., e_k)||`
    Soc,
    /// `2 e_0 e_1 >= ||(e_2, ..., e_k)||^2`, `e_0, e_1 >= 0`
    RotatedSoc,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Cone<T> {
    pub kind: ConeKind,
    pub exprs: Vec<LinExpr>,
    pub tag: T,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct RowId(pub usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ConeId(pub usize);

#[derive(Debug, Error, PartialEq)]
pub enum ModelError {
    #[error("variable index {index} out of range in {what} (program has {num_vars} variables)")]
    VariableOutOfRange {
        what: String,
        index: usize,
        num_vars: usize,
    },
    #[error("non-finite coefficient in {0}")]
    NonFinite(String),
    #[error("cone {index} has {dim} entries; {kind:?} needs at least {min}")]
    ConeTooSmall {
        index: usize,
        kind: ConeKind,
        dim: usize,
        min: usize,
    },
}

/// A linear objective with linear rows and second-order cone blocks.
///
/// Every row and cone carries a tag of type `T` naming the constraint family
/// it belongs to.
#[derive(Debug, Clone, PartialEq)]
pub struct ConicProgram<T> {
    pub var_names: Vec<String>,
    pub objective: LinExpr,
    pub rows: Vec<Row<T>>,
    pub cones: Vec<Cone<T>>,
}

impl<T> Default for ConicProgram<T> {
    fn default() -> Self {
        Self {
            var_names: Vec::new(),
            objective: LinExpr::zero(),
            rows: Vec::new(),
            cones: Vec::new(),
        }
    }
}

impl<T: Clone> ConicProgram<T> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn num_vars(&self) -> usize {
        self.var_names.len()
    }

    pub fn add_var(&mut self, name: impl Into<String>) -> usize {
        self.var_names.push(name.into());
        self.var_names.len() - 1
    }

    pub fn add_eq(&mut self, expr: LinExpr, tag: T) -> RowId {
        self.push_row(expr, RowSense::Eq, tag)
    }

    /// `expr <= 0`
    pub fn add_le(&mut self, expr: LinExpr, tag: T) -> RowId {
        self.push_row(expr, RowSense::Le, tag)
    }

    /// `expr >= 0`, stored as `-expr <= 0`.
    pub fn add_ge(&mut self, expr: LinExpr, tag: T) -> RowId {
        self.push_row(expr.scaled(-1.0), RowSense::Le, tag)
    }

    pub fn add_soc(&mut self, exprs: Vec<LinExpr>, tag: T) -> ConeId {
        self.push_cone(ConeKind::Soc, exprs, tag)
    }

    /// `2 u v >= ||w||^2` with `u, v >= 0`.
    pub fn add_rotated_soc(&mut self, u: LinExpr, v: LinExpr, w: Vec<LinExpr>, tag: T) -> ConeId {
        let mut exprs = Vec::with_capacity(w.len() + 2);
        exprs.push(u);
        exprs.push(v);
        exprs.extend(w);
        self.push_cone(ConeKind::RotatedSoc, exprs, tag)
    }

    fn push_row(&mut self, expr: LinExpr, sense: RowSense, tag: T) -> RowId {
        self.rows.push(Row { expr, sense, tag });
        RowId(self.rows.len() - 1)
    }

    fn push_cone(&mut self, kind: ConeKind, exprs: Vec<LinExpr>, tag: T) -> ConeId {
        self.cones.push(Cone { kind, exprs, tag });
        ConeId(self.cones.len() - 1)
    }

    pub fn row(&self, id: RowId) -> &Row<T> {
        &self.rows[id.0]
    }

    pub fn cone(&self, id: ConeId) -> &Cone<T> {
        &self.cones[id.0]
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let n = self.num_vars();
        let check = |e: &LinExpr, what: &dyn Fn() -> String| -> Result<(), ModelError> {
            if !e.constant.is_finite() || e.terms.iter().any(|t| !t.1.is_finite()) {
                return Err(ModelError::NonFinite(what()));
            }
            if let Some(&(index, _)) = e.terms.iter().find(|t| t.0 >= n) {
                return Err(ModelError::VariableOutOfRange {
                    what: what(),
                    index,
                    num_vars: n,
                });
            }
            Ok(())
        };
        check(&self.objective, &|| "objective".to_string())?;
        for (i, r) in self.rows.iter().enumerate() {
            check(&r.expr, &|| format!("row {i}"))?;
        }
        for (i, c) in self.cones.iter().enumerate() {
            let min = match c.kind {
                ConeKind::Soc => 1,
                ConeKind::RotatedSoc => 2,
            };
            if c.exprs.len() < min {
                return Err(ModelError::ConeTooSmall {
                    index: i,
                    kind: c.kind,
                    dim: c.exprs.len(),
                    min,
                });
            }
            for (k, e) in c.exprs.iter().enumerate() {
                check(e, &|| format!("cone {i} entry {k}"))?;
            }
        }
        Ok(())
    }

    /// Largest violation of any row or cone at `x`; cones are measured by the
    /// distance of `e_0` below the norm of the rest.
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        let mut worst: f64 = 0.0;
        for r in &self.rows {
            let v = r.expr.eval(x);
            let viol = match r.sense {
                RowSense::Eq => v.abs(),
                RowSense::Le => v.max(0.0),
            };
            worst = worst.max(viol);
        }
        for c in &self.cones {
            let vals: Vec<f64> = c.exprs.iter().map(|e| e.eval(x)).collect();
            worst = worst.max(cone_violation(c.kind, &vals));
        }
        worst
    }
}

pub(crate) fn cone_violation(kind: ConeKind, vals: &[f64]) -> f64 {
    match kind {
        ConeKind::Soc => {
            let tail: f64 = vals[1..].iter().map(|v| v * v).sum::<f64>().sqrt();
            (tail - vals[0]).max(0.0)
        }
        ConeKind::RotatedSoc => {
            let (u, v) = (vals[0], vals[1]);
            let w2: f64 = vals[2..].iter().map(|v| v * v).sum();
            // distance in the equivalent standard cone
            let t = (u + v) / std::f64::consts::SQRT_2;
            let d = (u - v) / std::f64::consts::SQRT_2;
            ((d * d + w2).sqrt() - t).max(0.0)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn compact_merges_and_drops_zeros() {
        let e = LinExpr::from_terms(&[(3, 1.0), (1, 2.0), (3, -1.0), (1, 0.5)], 4.0);
        let c = e.compact();
        assert_eq!(c.terms, vec![(1, 2.5)]);
        assert_eq!(c.constant, 4.0);
    }

    #[test]
    fn validate_rejects_out_of_range() {
        let mut p: ConicProgram<()> = ConicProgram::new();
        let x = p.add_var("x");
        p.add_le(LinExpr::var(x).with_term(x + 1, 1.0), ());
        assert!(matches!(
            p.validate(),
            Err(ModelError::VariableOutOfRange { index: 1, .. })
        ));
    }

    #[test]
    fn rotated_violation_matches_definition() {
        // 2 * 1 * 2 = 4 >= 3^2 fails by the standard-cone distance
        let v = cone_violation(ConeKind::RotatedSoc, &[1.0, 2.0, 3.0]);
        assert!(v > 0.0);
        assert_eq!(cone_violation(ConeKind::RotatedSoc, &[1.0, 2.0, 2.0]), 0.0);
    }
}
