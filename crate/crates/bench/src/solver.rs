//! [`ConicSolver`] backed by the Clarabel interior-point solver.
//!
//! Rotated second-order blocks are mapped onto standard ones with
//! `(u, v, w) ↦ ((u + v)/√2, (u − v)/√2, w)`, which is its own inverse.

use clarabel::algebra::CscMatrix;
use clarabel::solver::{
    DefaultSettings, DefaultSolver, IPSolver, SolverStatus, SupportedConeT,
};
use rsma_core::conic::{ConicProgram, ConicSolution, ConicStatus, Cone};

/// Interior-point backend; defaults match the feasibility and gap target of
/// `1e-8`.
#[derive(Debug, Clone)]
pub struct ClarabelSolver {
    pub max_iter: u32,
    pub tol: f64,
}

impl Default for ClarabelSolver {
    fn default() -> Self {
        Self { max_iter: 200, tol: 1e-8 }
    }
}

const HALF_SQRT2: f64 = std::f64::consts::FRAC_1_SQRT_2;

/// Row-level recipe for the transformed system.
enum RowMap {
    Copy(usize),
    /// `(row_a ± row_b)/√2`
    Sum(usize, usize),
    Diff(usize, usize),
}

fn row_maps(program: &ConicProgram) -> (Vec<RowMap>, Vec<SupportedConeT<f64>>) {
    let mut maps = Vec::with_capacity(program.num_rows());
    let mut cones = Vec::with_capacity(program.cones.len());
    let mut row = 0;
    for cone in &program.cones {
        let d = cone.dim();
        match *cone {
            Cone::Zero(d) => cones.push(SupportedConeT::ZeroConeT(d)),
            Cone::Nonnegative(d) => cones.push(SupportedConeT::NonnegativeConeT(d)),
            Cone::SecondOrder(d) => cones.push(SupportedConeT::SecondOrderConeT(d)),
            Cone::Exponential => cones.push(SupportedConeT::ExponentialConeT()),
            Cone::RotatedSecondOrder(d) => cones.push(SupportedConeT::SecondOrderConeT(d)),
        }
        if let Cone::RotatedSecondOrder(_) = cone {
            maps.push(RowMap::Sum(row, row + 1));
            maps.push(RowMap::Diff(row, row + 1));
            maps.extend((row + 2..row + d).map(RowMap::Copy));
        } else {
            maps.extend((row..row + d).map(RowMap::Copy));
        }
        row += d;
    }
    (maps, cones)
}

impl rsma_core::ConicSolver for ClarabelSolver {
    fn solve(&self, program: &ConicProgram) -> ConicSolution {
        let n = program.num_vars();
        let m = program.num_rows();
        let failed = |status| ConicSolution {
            status,
            x: vec![0.0; n],
            y: vec![0.0; m],
            objective: f64::NAN,
            primal_residual: f64::INFINITY,
            dual_residual: f64::INFINITY,
            gap: f64::INFINITY,
            iterations: 0,
        };
        if program.validate().is_err() {
            return failed(ConicStatus::Numerical);
        }

        let (maps, cones) = row_maps(program);
        let (mut rows, mut cols, mut vals) = (Vec::new(), Vec::new(), Vec::new());
        let mut b = Vec::with_capacity(m);
        for (i, map) in maps.iter().enumerate() {
            match *map {
                RowMap::Copy(r) => {
                    for (j, v) in program.row(r) {
                        rows.push(i);
                        cols.push(j);
                        vals.push(v);
                    }
                    b.push(program.offsets[r]);
                }
                RowMap::Sum(r0, r1) | RowMap::Diff(r0, r1) => {
                    let sign = if matches!(map, RowMap::Sum(..)) { 1.0 } else { -1.0 };
                    for (j, v) in program.row(r0) {
                        rows.push(i);
                        cols.push(j);
                        vals.push(HALF_SQRT2 * v);
                    }
                    for (j, v) in program.row(r1) {
                        rows.push(i);
                        cols.push(j);
                        vals.push(sign * HALF_SQRT2 * v);
                    }
                    b.push(HALF_SQRT2 * (program.offsets[r0] + sign * program.offsets[r1]));
                }
            }
        }
        // Duplicate (row, col) entries are summed by the triplet constructor.
        let a = CscMatrix::new_from_triplets(m, n, rows, cols, vals);
        let p = CscMatrix::zeros((n, n));
        let settings = DefaultSettings {
            verbose: false,
            max_iter: self.max_iter,
            tol_feas: self.tol,
            tol_gap_abs: self.tol,
            tol_gap_rel: self.tol,
            ..DefaultSettings::default()
        };
        let mut solver = match DefaultSolver::new(&p, &program.objective, &a, &b, &cones, settings) {
            Ok(s) => s,
            Err(_) => return failed(ConicStatus::Numerical),
        };
        solver.solve();
        let sol = &solver.solution;
        let status = match sol.status {
            SolverStatus::Solved => ConicStatus::Optimal,
            SolverStatus::PrimalInfeasible | SolverStatus::AlmostPrimalInfeasible => ConicStatus::Infeasible,
            SolverStatus::DualInfeasible | SolverStatus::AlmostDualInfeasible => ConicStatus::Unbounded,
            SolverStatus::MaxIterations | SolverStatus::MaxTime => ConicStatus::MaxIterations,
            _ => ConicStatus::Numerical,
        };
        let mut y = sol.z.clone();
        for (i, map) in maps.iter().enumerate() {
            if let RowMap::Sum(r0, r1) = *map {
                let (zs, zd) = (sol.z[i], sol.z[i + 1]);
                y[r0] = HALF_SQRT2 * (zs + zd);
                y[r1] = HALF_SQRT2 * (zs - zd);
            }
        }
        let objective = program.objective_value(&sol.x);
        let gap = (sol.obj_val - sol.obj_val_dual).abs() / sol.obj_val.abs().max(1.0);
        ConicSolution {
            status,
            x: sol.x.clone(),
            y,
            objective,
            primal_residual: sol.r_prim,
            dual_residual: sol.r_dual,
            gap,
            iterations: sol.iterations,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rsma_core::conic::{check_solution, AffineExpr, ProgramBuilder};
    use rsma_core::ConicSolver;

    #[test]
    fn rotated_cone_round_trip() {
        // min u s.t. 2 u v ≥ w², v = 2, w = 2  →  u = 1
        let mut b = ProgramBuilder::new();
        let u = b.add_var("u");
        b.set_objective(u, 1.0);
        b.add_block(
            Cone::RotatedSecondOrder(3),
            &[AffineExpr::var(u), AffineExpr::constant(2.0), AffineExpr::constant(2.0)],
        );
        let program = b.build();
        let sol = ClarabelSolver::default().solve(&program);
        assert_eq!(sol.status, ConicStatus::Optimal);
        assert!((sol.x[0] - 1.0).abs() < 1e-7, "{:?}", sol.x);
        assert!(check_solution(&program, &sol.x, 1e-6).passed());
    }
}
