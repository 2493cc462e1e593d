use rstokes::verification::{convergence_csv, convergence_study, orders, solve_level, MmsProblem, MmsSettings};
use rstokes::{Execution, NewtonConfig};

#[test]
fn newtonian_orders_are_close_to_one() {
    let groups = convergence_study(&[2.0], &[4, 8, 16], &MmsSettings::default()).unwrap();
    let g = &groups[0];
    for k in 1..g.len() {
        let o = orders(&g[k - 1].errors, &g[k].errors);
        for (name, v) in [("D", o.d), ("V", o.v), ("p", o.p), ("lambda", o.lambda)] {
            assert!((0.8..1.2).contains(&v), "{name} order {v} at n = {}", g[k].n);
        }
    }
}

#[test]
fn sequential_and_parallel_studies_agree_bitwise() {
    let seq = MmsSettings {
        exec: Execution::Sequential,
        ..MmsSettings::default()
    };
    let par = MmsSettings {
        exec: Execution::Parallel,
        ..MmsSettings::default()
    };
    let a = convergence_study(&[1.5], &[4, 8], &seq).unwrap();
    let b = convergence_study(&[1.5], &[4, 8], &par).unwrap();
    assert_eq!(convergence_csv(&a), convergence_csv(&b));
}

#[test]
fn continuation_reaches_the_same_solution() {
    let plain = solve_level(1.25, 8, &MmsSettings::default()).unwrap();
    let warm = solve_level(
        1.25,
        8,
        &MmsSettings {
            continuation: true,
            ..MmsSettings::default()
        },
    )
    .unwrap();
    let rel = (plain.errors.err_v - warm.errors.err_v).abs() / plain.errors.err_v;
    assert!(rel < 1e-8, "relative difference {rel}");
}

#[test]
fn discrete_solution_beats_nothing_and_respects_constraints() {
    let settings = MmsSettings::default();
    let problem = MmsProblem::new(8, 4.0 / 3.0, &settings).unwrap();
    let (state, stats) = problem.solve(&NewtonConfig::default()).unwrap();
    assert!(stats.iterations > 0);
    let m = problem.metrics(&state);
    assert!(m.worst_contact() < 1e-10 && m.divergence < 1e-10);
    for (i, v) in problem.constraints.iter() {
        assert_eq!(state.u[i], v);
    }
    let errors = problem.errors(&state, settings.error_degree);
    let zero = problem.errors(&rstokes::MixedState::for_spaces(&problem.spaces), settings.error_degree);
    assert!(errors.err_v < 0.1 * zero.err_v);
}

#[test]
fn csv_has_one_row_per_level() {
    let groups = convergence_study(&[2.0, 1.5], &[2, 4], &MmsSettings::default()).unwrap();
    let csv = convergence_csv(&groups);
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines.len(), 5);
    assert!(lines[0].starts_with("r,h,err_D"));
    assert_eq!(lines[1].split(',').nth(3), Some(""));
}

#[test]
fn study_needs_two_levels() {
    assert!(convergence_study(&[2.0], &[4], &MmsSettings::default()).is_err());
}
