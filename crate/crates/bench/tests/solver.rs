use rsma_bench::ClarabelSolver;
use rsma_core::conic::{check_solution, AffineExpr, ProgramBuilder};
use rsma_core::{Cone, ConicProgram, ConicSolution, ConicSolver, ConicStatus};

fn solve(program: &ConicProgram) -> ConicSolution {
    let sol = ClarabelSolver::default().solve(program);
    if sol.status == ConicStatus::Optimal {
        assert!(check_solution(program, &sol.x, 1e-6).passed(), "optimal point fails its cones");
        let cx = program.objective_value(&sol.x);
        assert!((sol.objective - cx).abs() <= 1e-9 * cx.abs().max(1.0));
    }
    sol
}

#[test]
fn linear_lower_bound() {
    // min x  s.t. x ≥ 3
    let mut b = ProgramBuilder::new();
    let x = b.add_var("x");
    b.set_objective(x, 1.0);
    b.nonneg(AffineExpr::var(x).plus(-3.0));
    let sol = solve(&b.build());
    assert_eq!(sol.status, ConicStatus::Optimal);
    assert!((sol.x[0] - 3.0).abs() < 1e-7);
}

#[test]
fn exponential_cone_log() {
    // max t  s.t. (t, 1, e) ∈ K_exp  ⇔  e^t ≤ e  →  t* = 1
    let mut b = ProgramBuilder::new();
    let t = b.add_var("t");
    b.set_objective(t, -1.0);
    b.add_block(
        Cone::Exponential,
        &[AffineExpr::var(t), AffineExpr::constant(1.0), AffineExpr::constant(std::f64::consts::E)],
    );
    let sol = solve(&b.build());
    assert_eq!(sol.status, ConicStatus::Optimal);
    assert!((sol.x[0] - 1.0).abs() < 1e-6, "{:?}", sol.x);
}

#[test]
fn second_order_cone_distance() {
    // min r  s.t. ‖(x, y)‖ ≤ r, x + y = 2  →  r* = √2
    let mut b = ProgramBuilder::new();
    let r = b.add_var("r");
    let x = b.add_var("x");
    let y = b.add_var("y");
    b.set_objective(r, 1.0);
    b.add_block(Cone::SecondOrder(3), &[AffineExpr::var(r), AffineExpr::var(x), AffineExpr::var(y)]);
    b.add_block(Cone::Zero(1), &[AffineExpr::var(x).term(y, 1.0).plus(-2.0)]);
    let sol = solve(&b.build());
    assert_eq!(sol.status, ConicStatus::Optimal);
    assert!((sol.x[0] - 2f64.sqrt()).abs() < 1e-7);
    assert!((sol.x[1] - 1.0).abs() < 1e-6 && (sol.x[2] - 1.0).abs() < 1e-6);
}

#[test]
fn infeasible_is_reported() {
    // x ≥ 1 and x ≤ 0
    let mut b = ProgramBuilder::new();
    let x = b.add_var("x");
    b.set_objective(x, 1.0);
    b.nonneg(AffineExpr::var(x).plus(-1.0));
    b.nonneg(AffineExpr::var(x).scale(-1.0));
    assert_eq!(solve(&b.build()).status, ConicStatus::Infeasible);
}

#[test]
fn unbounded_is_reported() {
    let mut b = ProgramBuilder::new();
    let x = b.add_var("x");
    b.set_objective(x, -1.0);
    b.nonneg(AffineExpr::var(x));
    assert_eq!(solve(&b.build()).status, ConicStatus::Unbounded);
}

#[test]
fn text_round_trip_solves_identically() {
    let mut b = ProgramBuilder::new();
    let u = b.add_var("u");
    let w = b.add_var("w");
    b.set_objective(u, 1.0);
    b.add_block(Cone::RotatedSecondOrder(3), &[AffineExpr::var(u), AffineExpr::constant(0.5), AffineExpr::var(w)]);
    b.nonneg(AffineExpr::var(w).plus(-2.0));
    let program = b.build();
    let parsed = ConicProgram::from_text(&program.to_text()).unwrap();
    assert_eq!(parsed, program);
    let (a, c) = (solve(&program), solve(&parsed));
    assert_eq!(a.x, c.x);
    // u · 1 ≥ w²  with w ≥ 2  →  u* = 4
    assert!((a.x[0] - 4.0).abs() < 1e-6);
}
