//! Cone arithmetic used by the interior-point iteration: Jordan products,
//! Nesterov-Todd scalings and step lengths for nonnegative orthants and
//! second-order cones.

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum ConeType {
    Nonneg,
    Soc,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct ConeBlock {
    pub kind: ConeType,
    pub start: usize,
    pub dim: usize,
}

impl ConeBlock {
    pub fn range(&self) -> std::ops::Range<usize> {
        self.start..self.start + self.dim
    }
}

/// Barrier degree of the product cone.
pub(crate) fn degree(cones: &[ConeBlock]) -> usize {
    cones
        .iter()
        .map(|c| match c.kind {
            ConeType::Nonneg => c.dim,
            ConeType::Soc => 1,
        })
        .sum()
}

/// Identity element `e`.
pub(crate) fn identity(cones: &[ConeBlock], m: usize) -> Vec<f64> {
    let mut e = vec![0.0; m];
    for c in cones {
        match c.kind {
            ConeType::Nonneg => e[c.range()].iter_mut().for_each(|v| *v = 1.0),
            ConeType::Soc => e[c.start] = 1.0,
        }
    }
    e
}

/// `u o v`
pub(crate) fn jordan_product(cones: &[ConeBlock], u: &[f64], v: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; u.len()];
    for c in cones {
        let r = c.range();
        match c.kind {
            ConeType::Nonneg => {
                for i in r {
                    out[i] = u[i] * v[i];
                }
            }
            ConeType::Soc => {
                let (u0, v0) = (u[c.start], v[c.start]);
                out[c.start] = u[r.clone()].iter().zip(&v[r.clone()]).map(|(a, b)| a * b).sum();
                for i in c.start + 1..r.end {
                    out[i] = u0 * v[i] + v0 * u[i];
                }
            }
        }
    }
    out
}

/// Solves `lambda o x = d` for `x`.
pub(crate) fn jordan_divide(cones: &[ConeBlock], lambda: &[f64], d: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; d.len()];
    for c in cones {
        let r = c.range();
        match c.kind {
            ConeType::Nonneg => {
                for i in r {
                    out[i] = d[i] / lambda[i];
                }
            }
            ConeType::Soc => {
                let l0 = lambda[c.start];
                let l1 = &lambda[c.start + 1..r.end];
                let d1 = &d[c.start + 1..r.end];
                let det = l0 * l0 - l1.iter().map(|v| v * v).sum::<f64>();
                let l1d1: f64 = l1.iter().zip(d1).map(|(a, b)| a * b).sum();
                let x0 = (l0 * d[c.start] - l1d1) / det;
                out[c.start] = x0;
                for (k, i) in (c.start + 1..r.end).enumerate() {
                    out[i] = (d1[k] - x0 * l1[k]) / l0;
                }
            }
        }
    }
    out
}

/// Smallest `alpha` such that `x + alpha e` lies in the closed cone.
pub(crate) fn interior_shift(cones: &[ConeBlock], x: &[f64]) -> f64 {
    let mut alpha = f64::NEG_INFINITY;
    for c in cones {
        let r = c.range();
        match c.kind {
            ConeType::Nonneg => {
                for i in r {
                    alpha = alpha.max(-x[i]);
                }
            }
            ConeType::Soc => {
                let tail = norm(&x[c.start + 1..r.end]);
                alpha = alpha.max(tail - x[c.start]);
            }
        }
    }
    alpha
}

/// Largest `alpha >= 0` with `u + alpha d` in the cone, for `u` interior.
/// Returns `f64::INFINITY` when the ray never leaves the cone.
pub(crate) fn max_step(cones: &[ConeBlock], u: &[f64], d: &[f64]) -> f64 {
    let mut alpha = f64::INFINITY;
    for c in cones {
        let r = c.range();
        match c.kind {
            ConeType::Nonneg => {
                for i in r {
                    if d[i] < 0.0 {
                        alpha = alpha.min(-u[i] / d[i]);
                    }
                }
            }
            ConeType::Soc => {
                alpha = alpha.min(soc_step(&u[r.clone()], &d[r]));
            }
        }
    }
    alpha
}

fn soc_step(u: &[f64], d: &[f64]) -> f64 {
    // Boundary crossing of f(a) = (u0 + a d0)^2 - ||u1 + a d1||^2; f(0) > 0.
    let qa = d[0] * d[0] - sq_norm(&d[1..]);
    let qb = u[0] * d[0] - dot(&u[1..], &d[1..]);
    let qc = (u[0] * u[0] - sq_norm(&u[1..])).max(0.0);
    let mut alpha = f64::INFINITY;
    if qa == 0.0 {
        if qb < 0.0 {
            alpha = -qc / (2.0 * qb);
        }
    } else {
        let disc = qb * qb - qa * qc;
        if disc >= 0.0 {
            let sq = disc.sqrt();
            let q = -(qb + qb.signum() * sq);
            let mut roots = [f64::INFINITY; 2];
            if q != 0.0 {
                roots[0] = q / qa;
                roots[1] = qc / q;
            } else {
                roots[0] = -qb / qa;
            }
            for r in roots {
                if r > 0.0 {
                    alpha = alpha.min(r);
                }
            }
        }
    }
    // The ray may also exit through the lower nappe if d0 pulls u0 negative
    // without the quadratic changing sign (only possible when qc == 0).
    if d[0] < 0.0 {
        alpha = alpha.min(-u[0] / d[0]);
    }
    alpha
}

/// Nesterov-Todd scaling `W` with `W z = W^{-1} s = lambda`.
#[derive(Debug, Clone)]
pub(crate) struct Scaling {
    blocks: Vec<BlockScaling>,
    pub lambda: Vec<f64>,
}

#[derive(Debug, Clone)]
enum BlockScaling {
    Nonneg { w: Vec<f64> },
    /// `W = eta (2 v v' - J)`
    Soc { eta: f64, v: Vec<f64> },
}

impl Scaling {
    pub fn identity(cones: &[ConeBlock], m: usize) -> Self {
        let blocks = cones
            .iter()
            .map(|c| match c.kind {
                ConeType::Nonneg => BlockScaling::Nonneg {
                    w: vec![1.0; c.dim],
                },
                ConeType::Soc => {
                    let mut v = vec![0.0; c.dim];
                    v[0] = 1.0;
                    BlockScaling::Soc { eta: 1.0, v }
                }
            })
            .collect();
        Self {
            blocks,
            lambda: identity(cones, m),
        }
    }

    /// Returns `None` when `s` or `z` has left the cone interior.
    pub fn compute(cones: &[ConeBlock], s: &[f64], z: &[f64]) -> Option<Self> {
        let mut blocks = Vec::with_capacity(cones.len());
        let mut lambda = vec![0.0; s.len()];
        for c in cones {
            let r = c.range();
            match c.kind {
                ConeType::Nonneg => {
                    let mut w = Vec::with_capacity(c.dim);
                    for i in r {
                        if !(s[i] > 0.0 && z[i] > 0.0) {
                            return None;
                        }
                        w.push((s[i] / z[i]).sqrt());
                        lambda[i] = (s[i] * z[i]).sqrt();
                    }
                    blocks.push(BlockScaling::Nonneg { w });
                }
                ConeType::Soc => {
                    let sb = &s[r.clone()];
                    let zb = &z[r.clone()];
                    let s_det = sb[0] * sb[0] - sq_norm(&sb[1..]);
                    let z_det = zb[0] * zb[0] - sq_norm(&zb[1..]);
                    if !(s_det > 0.0 && z_det > 0.0 && sb[0] > 0.0 && zb[0] > 0.0) {
                        return None;
                    }
                    let s_nrm = s_det.sqrt();
                    let z_nrm = z_det.sqrt();
                    let s_bar: Vec<f64> = sb.iter().map(|v| v / s_nrm).collect();
                    let z_bar: Vec<f64> = zb.iter().map(|v| v / z_nrm).collect();
                    let gamma = ((1.0 + dot(&s_bar, &z_bar)) / 2.0).sqrt();
                    // w = (s_bar + J z_bar) / (2 gamma) has J-norm one; W is the
                    // hyperbolic reflection built from v = (w + e) / sqrt(2 (w_0 + 1))
                    let mut v: Vec<f64> = s_bar
                        .iter()
                        .zip(&z_bar)
                        .enumerate()
                        .map(|(k, (a, b))| if k == 0 { a + b } else { a - b })
                        .collect();
                    v.iter_mut().for_each(|x| *x /= 2.0 * gamma);
                    let scale = (2.0 * (v[0] + 1.0)).sqrt();
                    v[0] += 1.0;
                    v.iter_mut().for_each(|x| *x /= scale);
                    let eta = (s_nrm / z_nrm).sqrt();
                    let blk = BlockScaling::Soc { eta, v };
                    let lam = blk.apply(zb);
                    lambda[r].copy_from_slice(&lam);
                    blocks.push(blk);
                }
            }
        }
        Some(Self { blocks, lambda })
    }

    /// `W x`
    pub fn apply(&self, cones: &[ConeBlock], x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; x.len()];
        for (c, b) in cones.iter().zip(&self.blocks) {
            let r = c.range();
            out[r.clone()].copy_from_slice(&b.apply(&x[r]));
        }
        out
    }

    /// `W^{-1} x`
    pub fn apply_inv(&self, cones: &[ConeBlock], x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; x.len()];
        for (c, b) in cones.iter().zip(&self.blocks) {
            let r = c.range();
            out[r.clone()].copy_from_slice(&b.apply_inv(&x[r]));
        }
        out
    }

    /// `W^{-1}` restricted to block `k`, applied to a block-local vector.
    pub fn apply_inv_block(&self, k: usize, x: &[f64]) -> Vec<f64> {
        self.blocks[k].apply_inv(x)
    }
}

impl BlockScaling {
    fn apply(&self, x: &[f64]) -> Vec<f64> {
        match self {
            BlockScaling::Nonneg { w } => x.iter().zip(w).map(|(a, b)| a * b).collect(),
            BlockScaling::Soc { eta, v } => {
                let vx = dot(v, x);
                let mut out: Vec<f64> = v.iter().map(|vi| 2.0 * vx * vi).collect();
                out[0] -= x[0];
                for i in 1..x.len() {
                    out[i] += x[i];
                }
                out.iter_mut().for_each(|o| *o *= eta);
                out
            }
        }
    }

    fn apply_inv(&self, x: &[f64]) -> Vec<f64> {
        match self {
            BlockScaling::Nonneg { w } => x.iter().zip(w).map(|(a, b)| a / b).collect(),
            BlockScaling::Soc { eta, v } => {
                // W^{-1} = (2 J v v' J - J) / eta
                let jv: Vec<f64> = v
                    .iter()
                    .enumerate()
                    .map(|(k, vi)| if k == 0 { *vi } else { -vi })
                    .collect();
                let jvx = dot(&jv, x);
                let mut out: Vec<f64> = jv.iter().map(|a| 2.0 * jvx * a).collect();
                out[0] -= x[0];
                for i in 1..x.len() {
                    out[i] += x[i];
                }
                out.iter_mut().for_each(|o| *o /= eta);
                out
            }
        }
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn sq_norm(a: &[f64]) -> f64 {
    a.iter().map(|v| v * v).sum()
}

pub(crate) fn norm(a: &[f64]) -> f64 {
    sq_norm(a).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn soc(start: usize, dim: usize) -> ConeBlock {
        ConeBlock {
            kind: ConeType::Soc,
            start,
            dim,
        }
    }

    #[test]
    fn nt_scaling_maps_s_and_z_to_same_point() {
        let cones = [
            ConeBlock {
                kind: ConeType::Nonneg,
                start: 0,
                dim: 2,
            },
            soc(2, 3),
        ];
        let s = [1.0, 3.0, 2.0, 0.5, -1.0];
        let z = [4.0, 0.25, 1.5, -0.3, 0.7];
        let w = Scaling::compute(&cones, &s, &z).unwrap();
        let wz = w.apply(&cones, &z);
        let winv_s = w.apply_inv(&cones, &s);
        for i in 0..5 {
            assert!((wz[i] - winv_s[i]).abs() < 1e-12, "{wz:?} vs {winv_s:?}");
            assert!((wz[i] - w.lambda[i]).abs() < 1e-12);
        }
        let x = [0.3, -0.2, 0.9, 0.1, 0.4];
        let back = w.apply_inv(&cones, &w.apply(&cones, &x));
        for i in 0..5 {
            assert!((back[i] - x[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn jordan_divide_inverts_product() {
        let cones = [soc(0, 4)];
        let lam = [2.0, 0.3, -0.5, 0.7];
        let x = [0.4, 1.0, -2.0, 0.25];
        let d = jordan_product(&cones, &lam, &x);
        let back = jordan_divide(&cones, &lam, &d);
        for i in 0..4 {
            assert!((back[i] - x[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn step_to_soc_boundary() {
        let cones = [soc(0, 3)];
        // from (1,0,0) towards (-1, 1, 0): boundary where 1 - a = a -> a = 1/2
        let a = max_step(&cones, &[1.0, 0.0, 0.0], &[-1.0, 1.0, 0.0]);
        assert!((a - 0.5).abs() < 1e-14);
        // moving inside forever
        let a = max_step(&cones, &[1.0, 0.0, 0.0], &[1.0, 0.5, 0.0]);
        assert!(a.is_infinite());
    }

    #[test]
    fn shift_measures_distance_to_cone() {
        let cones = [soc(0, 3)];
        assert!((interior_shift(&cones, &[0.0, 3.0, 4.0]) - 5.0).abs() < 1e-14);
        assert!(interior_shift(&cones, &[2.0, 0.0, 0.0]) < 0.0);
    }
}
