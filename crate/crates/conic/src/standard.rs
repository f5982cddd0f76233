//! Standard form `min c'x + offset s.t. Ax = b, x in K` and the index map back
//! to a [`ConicProgram`].

use std::ops::Range;

use crate::model::{ConeKind, ConicProgram, RowSense};
use crate::solver::{ConicSolution, Status};

/// One block of the cone decomposition of `x`, in variable order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Block {
    Free(usize),
    Nonneg(usize),
    /// `x_0 >= ||x_1..||`
    Soc(usize),
    /// `2 x_0 x_1 >= ||x_2..||^2`
    RotatedSoc(usize),
}

impl Block {
    pub fn dim(&self) -> usize {
        match *self {
            Block::Free(d) | Block::Nonneg(d) | Block::Soc(d) | Block::RotatedSoc(d) => d,
        }
    }
}

/// Row-wise sparse `A`; each row holds `(column, value)` pairs.
pub type SparseRows = Vec<Vec<(usize, f64)>>;

#[derive(Debug, Clone, PartialEq)]
pub struct StandardForm {
    pub c: Vec<f64>,
    pub objective_offset: f64,
    pub a: SparseRows,
    pub b: Vec<f64>,
    pub blocks: Vec<Block>,
}

impl StandardForm {
    pub fn num_vars(&self) -> usize {
        self.c.len()
    }

    pub fn num_rows(&self) -> usize {
        self.b.len()
    }

    /// Blocks with their variable ranges.
    pub fn block_ranges(&self) -> Vec<(Block, Range<usize>)> {
        let mut start = 0;
        self.blocks
            .iter()
            .map(|&blk| {
                let r = start..start + blk.dim();
                start += blk.dim();
                (blk, r)
            })
            .collect()
    }

    pub fn objective(&self, x: &[f64]) -> f64 {
        dot(&self.c, x) + self.objective_offset
    }

    /// `||Ax - b||_inf`
    pub fn equality_residual(&self, x: &[f64]) -> f64 {
        self.a
            .iter()
            .zip(&self.b)
            .map(|(row, bi)| (row.iter().map(|&(j, v)| v * x[j]).sum::<f64>() - bi).abs())
            .fold(0.0, f64::max)
    }

    /// `A'y`
    pub fn at_times(&self, y: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.num_vars()];
        for (row, yi) in self.a.iter().zip(y) {
            for &(j, v) in row {
                out[j] += v * yi;
            }
        }
        out
    }

    /// Largest distance of `x` outside its cone blocks (free blocks ignored).
    pub fn cone_violation(&self, x: &[f64]) -> f64 {
        self.block_ranges()
            .into_iter()
            .map(|(blk, r)| block_violation(blk, &x[r]))
            .fold(0.0, f64::max)
    }

    /// Checks dimensions, index ranges and finiteness.
    pub fn check(&self) -> Result<(), String> {
        let n = self.num_vars();
        let total: usize = self.blocks.iter().map(Block::dim).sum();
        if total != n {
            return Err(format!("blocks cover {total} variables, c has {n}"));
        }
        if self.a.len() != self.b.len() {
            return Err(format!("A has {} rows, b has {}", self.a.len(), self.b.len()));
        }
        for blk in &self.blocks {
            match *blk {
                Block::Soc(0) => return Err("empty second-order cone block".into()),
                Block::RotatedSoc(d) if d < 2 => {
                    return Err("rotated cone block needs at least 2 entries".into())
                }
                _ => {}
            }
        }
        if !self.objective_offset.is_finite()
            || self.c.iter().chain(&self.b).any(|v| !v.is_finite())
        {
            return Err("non-finite value in c or b".into());
        }
        for (i, row) in self.a.iter().enumerate() {
            for &(j, v) in row {
                if j >= n {
                    return Err(format!("row {i} references column {j} >= {n}"));
                }
                if !v.is_finite() {
                    return Err(format!("non-finite coefficient in row {i}"));
                }
            }
        }
        Ok(())
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn block_violation(blk: Block, x: &[f64]) -> f64 {
    match blk {
        Block::Free(_) => 0.0,
        Block::Nonneg(_) => x.iter().map(|v| (-v).max(0.0)).fold(0.0, f64::max),
        Block::Soc(_) => crate::model::cone_violation(ConeKind::Soc, x),
        Block::RotatedSoc(_) => crate::model::cone_violation(ConeKind::RotatedSoc, x),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum RowSlot {
    Eq { row: usize },
    Le { slack: usize },
}

#[derive(Debug, Clone, PartialEq)]
struct ConeSlot {
    vars: Range<usize>,
}

/// Carries standard-form solutions back to the model that produced them.
#[derive(Debug, Clone, PartialEq)]
pub struct IndexMap {
    num_model_vars: usize,
    rows: Vec<RowSlot>,
    cones: Vec<ConeSlot>,
}

/// A solution expressed in model terms.
///
/// Row duals use one convention for both senses: the dual is the derivative
/// of the optimal objective with respect to the row's constant term. For
/// `expr <= 0` rows this is the usual nonnegative multiplier.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelSolution {
    pub status: Status,
    pub x: Vec<f64>,
    pub objective: f64,
    pub row_duals: Vec<f64>,
    pub cone_duals: Vec<Vec<f64>>,
    pub iterations: usize,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub relative_gap: f64,
}

impl IndexMap {
    pub fn num_model_vars(&self) -> usize {
        self.num_model_vars
    }

    pub fn recover<T: Clone>(&self, program: &ConicProgram<T>, sol: &ConicSolution) -> ModelSolution {
        let x = sol.x[..self.num_model_vars].to_vec();
        let row_duals = self
            .rows
            .iter()
            .map(|slot| match *slot {
                RowSlot::Eq { row } => -sol.y[row],
                RowSlot::Le { slack } => sol.z[slack],
            })
            .collect();
        let cone_duals = self
            .cones
            .iter()
            .map(|c| sol.z[c.vars.clone()].to_vec())
            .collect();
        ModelSolution {
            status: sol.status,
            objective: program.objective.eval(&x),
            x,
            row_duals,
            cone_duals,
            iterations: sol.iterations,
            primal_residual: sol.primal_residual,
            dual_residual: sol.dual_residual,
            relative_gap: sol.relative_gap,
        }
    }

    /// Lifts a model point to a standard-form point (slacks and cone images).
    pub fn lift<T: Clone>(&self, program: &ConicProgram<T>, x_model: &[f64]) -> Vec<f64> {
        let n_std = self
            .cones
            .last()
            .map(|c| c.vars.end)
            .or_else(|| {
                self.rows.iter().rev().find_map(|r| match r {
                    RowSlot::Le { slack } => Some(slack + 1),
                    _ => None,
                })
            })
            .unwrap_or(self.num_model_vars);
        let mut x = vec![0.0; n_std];
        x[..self.num_model_vars].copy_from_slice(x_model);
        for (slot, row) in self.rows.iter().zip(&program.rows) {
            if let RowSlot::Le { slack } = *slot {
                x[slack] = -row.expr.eval(x_model);
            }
        }
        for (slot, cone) in self.cones.iter().zip(&program.cones) {
            for (k, e) in slot.vars.clone().zip(&cone.exprs) {
                x[k] = e.eval(x_model);
            }
        }
        x
    }
}

/// Rewrites a model in standard form.
///
/// Model variables become one free block. Each `expr <= 0` row gets a
/// nonnegative slack `s` with `expr + s = 0`; each cone gets fresh variables
/// `t_k` constrained to the cone and tied to the model by `t_k - e_k = 0`.
pub fn to_standard_form<T: Clone>(program: &ConicProgram<T>) -> (StandardForm, IndexMap) {
    let n = program.num_vars();
    let num_slacks = program
        .rows
        .iter()
        .filter(|r| r.sense == RowSense::Le)
        .count();
    let cone_dims: usize = program.cones.iter().map(|c| c.exprs.len()).sum();
    let total = n + num_slacks + cone_dims;

    let mut a: SparseRows = Vec::with_capacity(program.rows.len() + cone_dims);
    let mut b = Vec::with_capacity(program.rows.len() + cone_dims);
    let mut rows = Vec::with_capacity(program.rows.len());
    let mut next_slack = n;
    for r in &program.rows {
        let e = r.expr.compact();
        let mut coeffs = e.terms.clone();
        match r.sense {
            RowSense::Eq => rows.push(RowSlot::Eq { row: a.len() }),
            RowSense::Le => {
                coeffs.push((next_slack, 1.0));
                rows.push(RowSlot::Le { slack: next_slack });
                next_slack += 1;
            }
        }
        a.push(coeffs);
        b.push(-e.constant);
    }

    let mut blocks = Vec::new();
    if n > 0 {
        blocks.push(Block::Free(n));
    }
    if num_slacks > 0 {
        blocks.push(Block::Nonneg(num_slacks));
    }
    let mut cones = Vec::with_capacity(program.cones.len());
    let mut next_var = n + num_slacks;
    for c in &program.cones {
        let dim = c.exprs.len();
        blocks.push(match c.kind {
            ConeKind::Soc => Block::Soc(dim),
            ConeKind::RotatedSoc => Block::RotatedSoc(dim),
        });
        for (k, e) in c.exprs.iter().enumerate() {
            let e = e.compact();
            let mut coeffs: Vec<(usize, f64)> = e.terms.iter().map(|&(j, v)| (j, -v)).collect();
            coeffs.push((next_var + k, 1.0));
            a.push(coeffs);
            b.push(e.constant);
        }
        cones.push(ConeSlot {
            vars: next_var..next_var + dim,
        });
        next_var += dim;
    }
    debug_assert_eq!(next_var, total);

    let obj = program.objective.compact();
    let mut c = vec![0.0; total];
    for &(j, v) in &obj.terms {
        c[j] += v;
    }
    let sf = StandardForm {
        c,
        objective_offset: obj.constant,
        a,
        b,
        blocks,
    };
    let map = IndexMap {
        num_model_vars: n,
        rows,
        cones,
    };
    (sf, map)
}

impl ModelSolution {
    pub fn is_optimal(&self) -> bool {
        self.status.has_solution()
    }
}
