//! Oracles shared by the oracle and acceptance suites.

#![allow(dead_code)]

use irhc::plant::{norm_sq, DiscreteSystem, DiscretizerConfig, Method, Plant, ScalarLinear};
use irhc::trajopt::{EnergyWindow, HorizonProblem, InputSet, Solver};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Exhaustive search on a `201^h` grid over the box; returns the best cost and
/// the largest single-cell cost change around the best point.
pub fn grid_search(problem: &HorizonProblem<'_>, lo: f64, hi: f64) -> (f64, f64) {
    const POINTS: usize = 201;
    let h = problem.horizon;
    let cell = (hi - lo) / (POINTS - 1) as f64;
    let value = |idx: &[usize]| -> f64 { lo + cell * idx[0] as f64 };
    let cost_at = |idx: &[usize]| -> Option<f64> {
        let controls: Vec<Vec<f64>> = idx.iter().map(|&i| vec![value(&[i])]).collect();
        let ev = problem.evaluate(&controls).unwrap();
        (ev.max_violation() <= 0.0).then_some(ev.cost)
    };
    let mut idx = vec![0usize; h];
    let mut best = (f64::INFINITY, idx.clone());
    loop {
        if let Some(c) = cost_at(&idx) {
            if c < best.0 {
                best = (c, idx.clone());
            }
        }
        let mut pos = 0;
        loop {
            if pos == h {
                let (cost, at) = best;
                let mut inc = 0.0f64;
                for d in 0..h {
                    for step in [-1i64, 1] {
                        let j = at[d] as i64 + step;
                        if (0..POINTS as i64).contains(&j) {
                            let mut n = at.clone();
                            n[d] = j as usize;
                            if let Some(c) = cost_at(&n) {
                                inc = inc.max((c - cost).abs());
                            }
                        }
                    }
                }
                return (cost, inc);
            }
            idx[pos] += 1;
            if idx[pos] < POINTS {
                break;
            }
            idx[pos] = 0;
            pos += 1;
        }
    }
}

pub fn random_problem<'a>(rng: &mut ChaCha8Rng, system: &'a dyn DiscreteSystem) -> (HorizonProblem<'a>, Vec<Vec<f64>>) {
    let n = system.state_dim();
    let m = system.input_dim();
    let horizon = rng.random_range(1..=8);
    let x0: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
    let mut problem = HorizonProblem::new(system, x0, horizon);
    if rng.random_bool(0.5) {
        let start = rng.random_range(0..horizon);
        let end = rng.random_range(start..horizon);
        problem = problem.with_energy_window(EnergyWindow {
            start,
            end,
            budget: rng.random_range(0.0..2.0),
        });
    }
    if rng.random_bool(0.5) {
        problem = problem.with_terminal_bound(rng.random_range(0.0..3.0));
    }
    let controls = (0..horizon)
        .map(|_| (0..m).map(|_| rng.random_range(-2.0..2.0)).collect())
        .collect();
    (problem, controls)
}

/// Components where `g` and central differences of `f` disagree by more than
/// `max(1e-5, 1e-4 |g|)`.
pub fn fd_mismatches(g: &[f64], f: impl Fn(&[f64]) -> f64, z: &[f64]) -> Vec<String> {
    let eps = 1e-6;
    let norm = norm_sq(g).sqrt();
    let tol = 1e-5f64.max(1e-4 * norm);
    let mut bad = Vec::new();
    for i in 0..z.len() {
        let mut zp = z.to_vec();
        let mut zm = z.to_vec();
        zp[i] += eps;
        zm[i] -= eps;
        let fd = (f(&zp) - f(&zm)) / (2.0 * eps);
        if (fd - g[i]).abs() > tol {
            bad.push(format!("component {i}: adjoint {} fd {fd}", g[i]));
        }
    }
    bad
}

/// Solver against grid search on `instances` seeded scalar problems with `h <= 3`.
/// Returns a description of every disagreement.
pub fn grid_disagreements(instances: usize) -> Vec<String> {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let solver = Solver::default();
    let mut bad = Vec::new();
    for instance in 0..instances {
        let a = rng.random_range(-1.5..1.5);
        let b = rng.random_range(0.2..1.5);
        let x0 = rng.random_range(-2.0..2.0);
        let horizon = 1 + instance % 3;
        let bound = rng.random_range(0.3..1.0);
        let sys = ScalarLinear::new(a, b);
        let problem = HorizonProblem::new(&sys, vec![x0], horizon).with_input_set(InputSet::Box {
            lower: vec![-bound],
            upper: vec![bound],
        });
        let (grid_cost, increment) = grid_search(&problem, -bound, bound);
        let result = solver.solve(&problem, None).unwrap();
        if !result.status.is_feasible() || (result.cost - grid_cost).abs() > 2.0 * increment + 1e-9 {
            bad.push(format!(
                "instance {instance}: solver {} ({:?}) grid {grid_cost} increment {increment}",
                result.cost, result.status
            ));
        }
    }
    bad
}

/// Adjoint gradients of cost and both constraints against central differences
/// on `instances` seeded problems over the Euler and RK4 oscillator and a scalar plant.
pub fn gradient_disagreements(instances: usize) -> Vec<String> {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let euler = Plant::oscillator(DiscretizerConfig::new(0.05, Method::Euler).unwrap()).unwrap();
    let rk4 = Plant::oscillator(DiscretizerConfig::new(0.05, Method::Rk4).unwrap()).unwrap();
    let scalar = ScalarLinear::new(1.1, 0.7);
    let mut bad = Vec::new();
    for instance in 0..instances {
        let system: &dyn DiscreteSystem = match instance % 3 {
            0 => &euler,
            1 => &rk4,
            _ => &scalar,
        };
        let (problem, controls) = random_problem(&mut rng, system);
        let z = problem.flatten(&controls).unwrap();
        let cost = |z: &[f64]| problem.evaluate(&problem.unflatten(z)).unwrap().cost;
        let mut here = fd_mismatches(&problem.gradient(&controls).unwrap(), cost, &z);

        let (energy, terminal) = problem.constraint_gradients(&controls).unwrap();
        if let Some(g) = energy {
            here.extend(fd_mismatches(&g, |z| problem.constraint_values(z).unwrap().0.unwrap(), &z));
        }
        if let Some(g) = terminal {
            here.extend(fd_mismatches(&g, |z| problem.constraint_values(z).unwrap().1.unwrap(), &z));
        }
        bad.extend(here.into_iter().map(|b| format!("instance {instance}: {b}")));
    }
    bad
}
