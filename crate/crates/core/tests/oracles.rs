mod common;

#[test]
fn simplex_matches_vertex_enumeration() {
    for seed in 0..300 {
        common::check_lp_instance(seed).unwrap();
    }
}

#[test]
fn welfare_max_matches_greedy_knapsack() {
    for seed in 0..200 {
        common::check_knapsack_instance(seed).unwrap();
    }
}

#[test]
fn fair_lp_is_no_worse_than_binary_enumeration() {
    for seed in 0..100 {
        common::check_fair_instance(seed).unwrap();
    }
}

#[test]
fn joint_gridpoint_activation_matches_single_gridpoints() {
    for seed in 0..60 {
        common::check_u_enumeration(seed).unwrap();
    }
}

#[test]
fn vertex_oracle_sanity() {
    // min -x - y  s.t. x + y <= 1, box [0, 1]^2
    let mut lp = fairbni::lp::LinearProgram::new(vec![-1.0, -1.0], vec![0.0; 2], vec![1.0; 2])
        .unwrap();
    lp.add_le(vec![1.0, 1.0], 1.0).unwrap();
    assert_eq!(common::vertex_enumeration(&lp), Some(-1.0));
    lp.add_le(vec![-1.0, 0.0], -2.0).unwrap();
    assert_eq!(common::vertex_enumeration(&lp), None);
}

#[test]
fn greedy_oracle_sanity() {
    let v = common::greedy_knapsack(&[-3.0, -2.0, 1.0], &[1.0, 2.0, 1.0], 2.0);
    assert!((v - (-4.0)).abs() < 1e-15);
}
