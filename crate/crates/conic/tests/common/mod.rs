//! Randomized conic programs with known optima, shared with other crates'
//! tests through `#[path]`.

use distrelax_conic::{Block, StandardForm};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Problem with a planted primal-dual optimal pair.
///
/// Picks `x*` in the cone and a complementary `z*` in the dual cone, random
/// `A` and `y*`, then sets `b = A x*` and `c = A'y* + z*`. The KKT conditions
/// hold at `(x*, y*, z*)`, so the optimal value is `c'x*`.
pub fn planted(seed: u64, free: usize, nonneg: usize, socs: &[usize], rsocs: &[usize]) -> (StandardForm, f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x = Vec::new();
    let mut z = Vec::new();
    let mut blocks = Vec::new();
    if free > 0 {
        blocks.push(Block::Free(free));
        for _ in 0..free {
            x.push(rng.gen_range(-2.0..2.0));
            z.push(0.0);
        }
    }
    if nonneg > 0 {
        blocks.push(Block::Nonneg(nonneg));
        for k in 0..nonneg {
            if k % 2 == 0 {
                x.push(rng.gen_range(0.1..2.0));
                z.push(0.0);
            } else {
                x.push(0.0);
                z.push(rng.gen_range(0.1..2.0));
            }
        }
    }
    for &d in socs {
        blocks.push(Block::Soc(d));
        let u: Vec<f64> = (1..d).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let nu = u.iter().map(|v| v * v).sum::<f64>().sqrt();
        let alpha = rng.gen_range(0.2..1.5);
        x.push(nu);
        x.extend(&u);
        z.push(alpha * nu);
        z.extend(u.iter().map(|v| -alpha * v));
    }
    for &d in rsocs {
        blocks.push(Block::RotatedSoc(d));
        let w: Vec<f64> = (2..d).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let w2 = w.iter().map(|v| v * v).sum::<f64>();
        let a = rng.gen_range(0.3..1.5);
        let b = w2 / (2.0 * a);
        let beta = rng.gen_range(0.2..1.5);
        x.extend([a, b]);
        x.extend(&w);
        z.extend([beta * b, beta * a]);
        z.extend(w.iter().map(|v| -beta * v));
    }
    let n = x.len();
    let m = n / 2;
    let mut a_rows = Vec::with_capacity(m);
    for _ in 0..m {
        let mut row = Vec::new();
        for j in 0..n {
            if rng.gen_bool(0.6) {
                row.push((j, rng.gen_range(-1.0..1.0)));
            }
        }
        a_rows.push(row);
    }
    let y: Vec<f64> = (0..m).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let b: Vec<f64> = a_rows
        .iter()
        .map(|r| r.iter().map(|&(j, v)| v * x[j]).sum())
        .collect();
    let mut c = z.clone();
    for (r, yi) in a_rows.iter().zip(&y) {
        for &(j, v) in r {
            c[j] += v * yi;
        }
    }
    let opt = c.iter().zip(&x).map(|(a, b)| a * b).sum::<f64>();
    let sf = StandardForm {
        c,
        objective_offset: 0.0,
        a: a_rows,
        b,
        blocks,
    };
    (sf, opt)
}

pub fn dual_cone_violation(sf: &StandardForm, z: &[f64]) -> f64 {
    // all blocks used here are self-dual; free blocks need z = 0
    let mut worst: f64 = 0.0;
    for (blk, r) in sf.block_ranges() {
        if let Block::Free(_) = blk {
            worst = worst.max(z[r].iter().fold(0.0, |m, v| m.max(v.abs())));
        }
    }
    worst.max(sf.cone_violation(z))
}
