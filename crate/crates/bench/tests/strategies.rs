//! Solver-backed properties of the strategy drivers.

use proptest::prelude::*;
use rsma_bench::ClarabelSolver;
use rsma_core::channel::{sample_channels, sample_channels_with};
use rsma_core::eval::{evaluate_sinrs, phase_kernels};
use rsma_core::fbl::BlocklengthMode;
use rsma_core::linalg::{inner, norm_sqr};
use rsma_core::model::Bler;
use rsma_core::noma::{decoding_order, noma_rates};
use rsma_core::sca::{sca_solve, ACCEPT_TOL};
use rsma_core::strategy::{self, reevaluate, StrategyRun};
use rsma_core::subproblem::ScaState;
use rsma_core::{Strategy as Scheme, SystemConfig};

fn solver() -> ClarabelSolver {
    ClarabelSolver::default()
}

fn config(strategy: Scheme, k: usize, mode: BlocklengthMode, l: u32) -> SystemConfig {
    let vars = [1.0, 0.09, 0.5, 0.2];
    let mut c = SystemConfig::unicast(4, vars[..k].to_vec(), 100.0, l, strategy);
    c.blocklength_mode = mode;
    c.p_relay = 100.0;
    c
}

fn mode() -> impl Strategy<Value = BlocklengthMode> {
    prop::sample::select(vec![BlocklengthMode::Finite, BlocklengthMode::Infinite])
}

fn check_run(run: &StrategyRun, cfg: &SystemConfig, channels: &rsma_core::ChannelSet) -> Result<(), TestCaseError> {
    let s = &run.solution;
    prop_assert!(s.total_power() <= cfg.p_tx * (1.0 + 1e-8) + 1e-12);
    let again = reevaluate(channels, cfg, s).unwrap();
    for (a, b) in again.iter().zip(&s.group_rates) {
        prop_assert!((a - b).abs() <= 1e-9 * b.abs().max(1.0), "group rate {b} re-evaluates to {a}");
    }
    // The restriction never overstates the true rates.
    let worst = again.iter().copied().fold(f64::INFINITY, f64::min);
    prop_assert!(worst >= s.diagnostics.t_star - 1e-5, "min rate {worst} < t* {}", s.diagnostics.t_star);
    for w in s.objective_trace.windows(2) {
        prop_assert!(w[1] >= w[0] - 10.0 * 1e-8 * w[0].abs().max(1.0), "trace decreased: {:?}", w);
    }
    prop_assert!(s.diagnostics.max_warm_start_violation <= ACCEPT_TOL);
    Ok(())
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 8, ..ProptestConfig::default() })]

    #[test]
    fn non_cooperative_runs_are_consistent(
        seed in any::<u64>(),
        k in 2usize..=4,
        strategy in prop::sample::select(vec![Scheme::Rsma, Scheme::Sdma, Scheme::Noma]),
        mode in mode(),
    ) {
        let cfg = config(strategy, k, mode, 300);
        let ch = sample_channels(&cfg, seed);
        let run = strategy::solve(&ch, &cfg, &solver()).unwrap();
        prop_assert_eq!(run.strategy, strategy);
        check_run(&run, &cfg, &ch)?;
        if strategy == Scheme::Sdma {
            prop_assert_eq!(run.solution.common_power(), 0.0);
        }
    }

    #[test]
    fn rsma_dominates_sdma(seed in any::<u64>(), k in 2usize..=4, mode in mode()) {
        // Dominance holds at a common error target; the defaults give RSMA a
        // stricter one.
        let mut sdma_cfg = config(Scheme::Sdma, k, mode, 300);
        sdma_cfg.bler = Bler::uniform(1e-5);
        let ch = sample_channels(&sdma_cfg, seed);
        let sdma = strategy::solve(&ch, &sdma_cfg, &solver()).unwrap().solution;
        let tau = sdma_cfg.sca_tolerance;

        // Warm start from the converged SDMA design. A zero common precoder
        // linearizes the common SINR bound to 0 ≥ 1 + interference, so the
        // warm start is taken by the private-only branch of the RSMA solve.
        let rsma_cfg = sdma_cfg.with_strategy(Scheme::Rsma);
        let sinr = evaluate_sinrs(&ch, &sdma.precoders, &rsma_cfg).unwrap();
        let init = ScaState {
            iteration: 0,
            precoders: sdma.precoders.clone(),
            rho_c: Vec::new(),
            rho_p: sinr.private.iter().map(|g| g.max(1e-6)).collect(),
            objective: 0.0,
        };
        let warm = sca_solve(&ch, &rsma_cfg, 300, 0, init, false, &solver()).unwrap();
        prop_assert!(warm.diagnostics.t_star >= sdma.diagnostics.t_star - 10.0 * tau);

        let rsma = strategy::solve(&ch, &rsma_cfg, &solver()).unwrap().solution;
        prop_assert!(rsma.mmf >= sdma.mmf - 10.0 * tau, "RSMA {} < SDMA {}", rsma.mmf, sdma.mmf);
    }

    #[test]
    fn noma_order_and_prefix_decoding(seed in any::<u64>(), k in 2usize..=4, mode in mode()) {
        let cfg = config(Scheme::Noma, k, mode, 300);
        let ch = sample_channels(&cfg, seed);
        let run = strategy::solve(&ch, &cfg, &solver()).unwrap();
        let order = run.solution.diagnostics.decoding_order.clone().unwrap();
        let mut sorted = order.clone();
        sorted.sort_unstable();
        prop_assert_eq!(sorted, (0..k).collect::<Vec<_>>());
        prop_assert_eq!(&order, &decoding_order(&ch, &cfg));
        let gains: Vec<f64> = order.iter().map(|&m| norm_sqr(&ch.downlink[m])).collect();
        prop_assert!(gains.windows(2).all(|w| w[0] >= w[1]));

        // Message j is decoded by exactly the decoders at positions 0..=j,
        // each after cancelling the messages behind it.
        let (kernel, _) = phase_kernels(&cfg, cfg.l_total, 0).unwrap();
        let p = &run.solution.precoders;
        let rates = noma_rates(&ch, &cfg, p, &order, &kernel);
        for j in 0..k {
            let expected = (0..=j)
                .map(|i| {
                    let h = &ch.downlink[order[i]];
                    let interference: f64 = (0..j).map(|q| inner(h, &p[1 + order[q]]).norm_sqr()).sum();
                    kernel.rate(inner(h, &p[1 + order[j]]).norm_sqr() / (1.0 + interference)).max(0.0)
                })
                .fold(f64::INFINITY, f64::min);
            prop_assert!((rates[order[j]] - expected).abs() <= 1e-12 * expected.max(1.0));
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 3, ..ProptestConfig::default() })]

    #[test]
    fn cooperative_grid_and_argmax(seed in any::<u64>(), mode in mode()) {
        let mut cfg = SystemConfig::unicast(2, vec![1.0, 0.09, 0.01], 100.0, 300, Scheme::CooperativeRsma);
        cfg.p_relay = 100.0;
        cfg.blocklength_mode = mode;
        let ch = sample_channels_with(&cfg, seed, true);
        let run = strategy::solve(&ch, &cfg, &solver()).unwrap();
        let grid: Vec<u32> = run.candidates.iter().map(|c| c.l_c).collect();
        prop_assert_eq!(grid, (100..=200).step_by(10).collect::<Vec<u32>>());
        prop_assert!(run.candidates.iter().all(|c| c.l_c + c.l_d == 300));

        let best = run
            .candidates
            .iter()
            .filter_map(|c| c.t_star.map(|t| (t, c.l_c)))
            .fold(None::<(f64, u32)>, |acc, (t, l)| match acc {
                Some((bt, _)) if bt >= t => acc,
                _ => Some((t, l)),
            })
            .unwrap();
        prop_assert_eq!(run.solution.l_c, best.1);
        prop_assert_eq!(run.solution.diagnostics.t_star, best.0);
        prop_assert!((run.solution.theta - f64::from(run.solution.l_d) / 300.0).abs() < 1e-15);
        check_run(&run, &cfg, &ch)?;
    }
}

#[test]
fn zero_power_gives_zero_rates() {
    for strategy in Scheme::ALL {
        let mut cfg = config(strategy, 3, BlocklengthMode::Finite, 300);
        cfg.p_tx = 0.0;
        cfg.p_relay = 0.0;
        let ch = sample_channels_with(&cfg, 5, true);
        let run = strategy::solve(&ch, &cfg, &solver()).unwrap();
        assert_eq!(run.solution.mmf, 0.0, "{strategy}");
        assert_eq!(run.solution.total_power(), 0.0);
    }
}

#[test]
fn single_user_matches_point_to_point_rate() {
    use rsma_core::fbl::{fbl_rate, FblParams};
    for strategy in [Scheme::Rsma, Scheme::Sdma, Scheme::Noma] {
        for seed in 0..3 {
            let cfg = SystemConfig::unicast(4, vec![1.0], 100.0, 500, strategy);
            let ch = sample_channels(&cfg, seed);
            let run = strategy::solve(&ch, &cfg, &solver()).unwrap();
            let gamma = cfg.p_tx * norm_sqr(&ch.downlink[0]);
            let expect = fbl_rate(gamma, &FblParams::finite(cfg.epsilon(), 500).unwrap()).unwrap();
            let rel = (run.solution.mmf - expect).abs() / expect;
            assert!(rel < 1e-3, "{strategy} seed {seed}: {} vs {expect}", run.solution.mmf);
        }
    }
}
