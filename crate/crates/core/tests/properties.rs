//! Property tests over the plant, the horizon schedule, the baselines and the
//! Gamma tail.

use irhc::analysis::tail_sum;
use irhc::baselines::{proportional_window, traditional_rhc_step};
use irhc::controller::{run, ControllerState, IrhcController, ItecSpec, Mode, RunOptions};
use irhc::plant::{
    eval_continuous, norm_sq, simulate, trajectory_cost, DiscretizerConfig, Method, Oscillator, Plant,
    ScalarLinear,
};
use irhc::record::RunRecord;
use irhc::trajopt::{EnergyWindow, HorizonProblem, InputSet, Solver};
use proptest::prelude::*;

fn oscillator(method: Method) -> Plant {
    Plant::oscillator(DiscretizerConfig::new(0.05, method).unwrap()).unwrap()
}

/// Horizon, terminal time and exponent at every step, driven by `controls`.
fn schedule(n: usize, mode: Mode, controls: &[f64]) -> Vec<(usize, usize, usize, u32, f64, usize)> {
    let itec = ItecSpec::new(1.0, n).unwrap();
    let mut st = ControllerState::init(0.8, itec, &[1.0], mode).unwrap();
    let mut out = Vec::new();
    for &u in controls {
        out.push((st.k, st.horizon, st.terminal_time(), st.exponent, st.gamma, st.window_start));
        st.advance(&[u]);
    }
    out
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn horizon_stays_between_n_plus_one_and_2n(n in 1usize..7, us in prop::collection::vec(-2.0f64..2.0, 1..80)) {
        for (_, h, ..) in schedule(n, Mode::Itec, &us) {
            prop_assert!(n < h && h <= 2 * n, "h={h} n={n}");
        }
    }

    #[test]
    fn horizon_covers_active_window(n in 1usize..7, us in prop::collection::vec(-2.0f64..2.0, 1..80)) {
        for (k, h, _, _, _, p) in schedule(n, Mode::Itec, &us) {
            if k < p + n {
                prop_assert!(k + h >= p + n, "k={k} h={h} p={p}");
            }
        }
    }

    #[test]
    fn schedule_matches_closed_form(n in 1usize..7, us in prop::collection::vec(-2.0f64..2.0, 1..80)) {
        // h = 2N - (k mod N); the exponent grows once per 2N steps, half a period late.
        for (k, h, t, e, _, p) in schedule(n, Mode::Itec, &us) {
            prop_assert_eq!(h, 2 * n - k % n);
            prop_assert_eq!(t, k + h);
            prop_assert_eq!(e as usize, (k + n) / (2 * n));
            prop_assert_eq!(p, (2 * (k / (2 * n)) + 1) * n);
        }
        for (k, h, t, e, ..) in schedule(n, Mode::NonItec, &us) {
            prop_assert_eq!(h, 2 * n - k % n);
            prop_assert_eq!(t, k + h);
            prop_assert_eq!(e as usize, k / n);
        }
    }

    #[test]
    fn schedule_is_periodic(n in 1usize..6, us in prop::collection::vec(-2.0f64..2.0, 30..80)) {
        let itec = schedule(n, Mode::Itec, &us);
        for (a, b) in itec.iter().zip(itec.iter().skip(2 * n)) {
            prop_assert_eq!(b.1, a.1);
            prop_assert_eq!(b.2, a.2 + 2 * n);
            prop_assert_eq!(b.3, a.3 + 1);
        }
        let plain = schedule(n, Mode::NonItec, &us);
        for (a, b) in plain.iter().zip(plain.iter().skip(n)) {
            prop_assert_eq!(b.1, a.1);
            prop_assert_eq!(b.2, a.2 + n);
            prop_assert_eq!(b.3, a.3 + 1);
        }
    }

    #[test]
    fn gamma_is_reconstructed_from_applied_controls(n in 1usize..6, us in prop::collection::vec(-2.0f64..2.0, 1..60)) {
        for (k, _, _, _, gamma, _) in schedule(n, Mode::Itec, &us) {
            let p = (2 * (k / (2 * n)) + 1) * n;
            let spent: f64 = (p..k).map(|j| us[j] * us[j]).sum();
            prop_assert!((gamma - spent).abs() <= 1e-12 * (1.0 + spent), "k={k} {gamma} vs {spent}");
        }
    }

    #[test]
    fn split_simulation_chains(
        x0 in prop::array::uniform2(-2.0f64..2.0),
        us in prop::collection::vec(-2.0f64..2.0, 2..40),
        cut in 0.0f64..1.0,
        rk4 in any::<bool>(),
    ) {
        let plant = oscillator(if rk4 { Method::Rk4 } else { Method::Euler });
        let controls: Vec<Vec<f64>> = us.iter().map(|&u| vec![u]).collect();
        let at = 1 + (((controls.len() - 1) as f64) * cut) as usize;
        let whole = simulate(&plant, &x0, &controls).unwrap();
        let first = simulate(&plant, &x0, &controls[..at]).unwrap();
        let second = simulate(&plant, first.final_state(), &controls[at..]).unwrap();
        prop_assert_eq!(whole.final_state(), second.final_state());
        let joined = trajectory_cost(&first) + trajectory_cost(&second);
        prop_assert!((trajectory_cost(&whole) - joined).abs() <= 1e-12 * (1.0 + joined));
    }

    #[test]
    fn input_enters_the_second_state_linearly(x in prop::array::uniform2(-5.0f64..5.0), u in -10.0f64..10.0) {
        let with = eval_continuous(&Oscillator, &x, &[u]).unwrap();
        let without = eval_continuous(&Oscillator, &x, &[0.0]).unwrap();
        prop_assert_eq!(with[0], without[0]);
        let scale = without[1].abs() + 3.0 * u.abs();
        prop_assert!((with[1] - without[1] - 3.0 * u).abs() <= 4.0 * f64::EPSILON * scale);
    }

    #[test]
    fn tail_is_independent_of_explicit_terms(beta in 0.0f64..0.99, start in 1usize..40, a in 0usize..50, b in 0usize..50) {
        let (ta, tb) = (tail_sum(beta, start, a), tail_sum(beta, start, b));
        prop_assert!((ta - tb).abs() <= 1e-12 * ta.max(1.0));
        // T(s) = beta^ceil(s/2) + T(s+1)
        let peeled = beta.powi(start.div_ceil(2) as i32) + tail_sum(beta, start + 1, a);
        prop_assert!((ta - peeled).abs() <= 1e-12 * ta.max(1.0));
    }

    #[test]
    fn proportional_budgets_add_up_to_c(n in 1usize..7, c in 0.0f64..10.0, q in 0usize..4, spent in 0.0f64..1.0) {
        let itec = ItecSpec::new(c, n).unwrap();
        let (start, end) = itec.window(q + 1);
        // Approaching the window the allocation grows by C/N per step and
        // reaches the full C as the window opens.
        prop_assert!(proportional_window(&itec, start - n, 0.0).is_none());
        for j in 1..n {
            let w = proportional_window(&itec, start - j, 0.0).unwrap();
            prop_assert!((w.budget - (n - j) as f64 * c / n as f64).abs() <= 1e-12 * (1.0 + c));
        }
        prop_assert_eq!(proportional_window(&itec, start, 0.0).unwrap().budget, c);
        // Inside, whatever has been spent plus what is left is C.
        for k in start..=end {
            let gamma = spent * c;
            let w = proportional_window(&itec, k, gamma).unwrap();
            prop_assert!((gamma + w.budget - c).abs() <= 1e-12 * (1.0 + c));
            prop_assert_eq!(k + w.end, end);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn traditional_rhc_is_the_unconstrained_horizon_problem(
        x in prop::array::uniform2(-2.0f64..2.0),
        horizon in 1usize..9,
    ) {
        let plant = oscillator(Method::Euler);
        let solver = Solver::default();
        let u = traditional_rhc_step(&plant, &x, horizon, &solver).unwrap();
        let direct = solver.solve(&HorizonProblem::new(&plant, x.to_vec(), horizon), None).unwrap();
        prop_assert_eq!(u, direct.controls[0].clone());
    }

    #[test]
    fn solve_reports_its_own_rollout_cost(
        x in prop::array::uniform2(-2.0f64..2.0),
        horizon in 1usize..9,
        budget in 0.1f64..4.0,
        terminal in 0.5f64..5.0,
    ) {
        let plant = oscillator(Method::Euler);
        let solver = Solver::default();
        let problem = HorizonProblem::new(&plant, x.to_vec(), horizon)
            .with_energy_window(EnergyWindow { start: 0, end: horizon - 1, budget })
            .with_terminal_bound(terminal);
        let res = solver.solve(&problem, None).unwrap();
        let traj = simulate(&plant, &x, &res.controls).unwrap();
        prop_assert!((trajectory_cost(&traj) - res.cost).abs() <= 1e-9 * (1.0 + res.cost));
        if res.status.is_feasible() {
            let energy: f64 = res.controls.iter().map(|u| norm_sq(u)).sum();
            prop_assert!(energy <= budget + solver.config.feasibility_tol);
            prop_assert!(norm_sq(traj.final_state()) <= terminal + solver.config.feasibility_tol);
        }
    }

    #[test]
    fn trace_csv_round_trips(x in prop::array::uniform2(-1.0f64..1.0), a in 0.5f64..1.2) {
        let plant = oscillator(Method::Euler);
        let itec = ItecSpec::new(4.8, 2).unwrap();
        let state = ControllerState::init(0.8, itec, &x, Mode::Itec).unwrap();
        let mut ctl = IrhcController::new(state, Solver::default(), InputSet::Unbounded);
        let opts = RunOptions { max_steps: 12, ..RunOptions::default() };
        let record = run(&mut ctl, &plant, &x, &opts).unwrap();
        let mut buf = Vec::new();
        record.write_csv(&mut buf).unwrap();
        let back = RunRecord::read_csv(buf.as_slice(), &plant, record.termination).unwrap();
        prop_assert_eq!(&back, &record);

        let lin = ScalarLinear::new(a, 1.0);
        let state = ControllerState::init(0.5, ItecSpec::new(1.0, 1).unwrap(), &[x[0]], Mode::NonItec).unwrap();
        let mut ctl = IrhcController::new(state, Solver::default(), InputSet::Unbounded);
        let record = run(&mut ctl, &lin, &[x[0]], &opts).unwrap();
        let mut buf = Vec::new();
        record.write_csv(&mut buf).unwrap();
        let back = RunRecord::read_csv(buf.as_slice(), &lin, record.termination).unwrap();
        prop_assert_eq!(back, record);
    }

    #[test]
    fn closed_loop_respects_every_window(x in prop::array::uniform2(-1.5f64..1.5), c in 1.0f64..6.0, n in 2usize..5) {
        let plant = oscillator(Method::Euler);
        let itec = ItecSpec::new(c, n).unwrap();
        let state = ControllerState::init(0.8, itec, &x, Mode::Itec).unwrap();
        let solver = Solver::default();
        let tol = solver.config.feasibility_tol;
        let mut ctl = IrhcController::new(state, solver, InputSet::Unbounded);
        let opts = RunOptions { max_steps: 6 * n, ..RunOptions::default() };
        let record = run(&mut ctl, &plant, &x, &opts).unwrap();
        for e in record.window_energies(n) {
            prop_assert!(e <= c + tol, "{e} > {c}");
        }
    }
}
