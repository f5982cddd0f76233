//! Smallest distance from a point to a disk intersected with a half-plane,
//! written in the modeling layer and solved through the standard form.

use distrelax_conic::{solve, to_standard_form, ConicProgram, LinExpr, Settings};

fn main() {
    let mut p: ConicProgram<&str> = ConicProgram::new();
    let x = p.add_var("x");
    let y = p.add_var("y");
    let t = p.add_var("t");
    // t >= ||(x - 3, y - 2)||
    p.add_soc(
        vec![LinExpr::var(t), LinExpr::var(x).with_constant(-3.0), LinExpr::var(y).with_constant(-2.0)],
        "distance",
    );
    // x² + y² <= 1
    p.add_soc(vec![LinExpr::constant(1.0), LinExpr::var(x), LinExpr::var(y)], "disk");
    let half = p.add_le(LinExpr::var(x).with_term(y, 1.0).with_constant(-0.5), "x + y <= 0.5");
    p.objective = LinExpr::var(t);

    let (sf, map) = to_standard_form(&p);
    println!("standard form: {} variables, {} rows, {} blocks", sf.num_vars(), sf.num_rows(), sf.blocks.len());
    let sol = solve(&sf, &Settings::default()).expect("well-formed program");
    let m = map.recover(&p, &sol);
    println!("status {} after {} iterations", m.status, m.iterations);
    println!("x = {:.6}, y = {:.6}, distance = {:.6}", m.x[x], m.x[y], m.objective);
    println!("dual of {:?}: {:.6}", p.row(half).tag, m.row_duals[half.0]);
    println!("residuals: primal {:.1e}, dual {:.1e}, gap {:.1e}", m.primal_residual, m.dual_residual, m.relative_gap);
}
