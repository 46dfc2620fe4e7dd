use hdmpc_core::linalg::Matrix;
use hdmpc_core::opt::{
    brute_force_miqp, solve_miqp, solve_qp, MixedIntegerQP, QuadraticProgram, SolveOptions,
    SolveStatus,
};
use proptest::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

fn uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    let u = (rng.next_u64() >> 11) as f64 / (1u64 << 53) as f64;
    lo + (hi - lo) * u
}

/// H = M^T M (rank `rank`) + ridge * I.
fn random_psd(rng: &mut ChaCha8Rng, n: usize, rank: usize, ridge: f64) -> Matrix {
    let m: Vec<Vec<f64>> = (0..rank)
        .map(|_| (0..n).map(|_| uniform(rng, -1.0, 1.0)).collect())
        .collect();
    let mut h = Matrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            let s: f64 = m.iter().map(|r| r[i] * r[j]).sum();
            h[(i, j)] = s + if i == j { ridge } else { 0.0 };
        }
    }
    h
}

fn random_box_qp(seed: u64, n: usize) -> QuadraticProgram {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut qp = QuadraticProgram::new(n);
    qp.hessian = random_psd(&mut rng, n, n / 2, 0.05);
    for i in 0..n {
        qp.linear[i] = uniform(&mut rng, -3.0, 3.0);
        qp.set_bounds(i, -1.0, 1.0);
    }
    qp
}

/// Mixed problem: continuous x in [-5, 5], binaries gate x_i through x_i <= 5 d_i
/// and -x_i <= 5 d_i, plus random inequalities satisfied by x = 0, d = 1.
fn random_miqp(seed: u64, n_cont: usize, n_bin: usize) -> MixedIntegerQP {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = n_cont + n_bin;
    let mut qp = QuadraticProgram::new(n);
    let rank = 1 + (rng.next_u32() as usize % n);
    let h = random_psd(&mut rng, n, rank, 0.0);
    qp.hessian = h;
    for i in 0..n {
        qp.linear[i] = uniform(&mut rng, -4.0, 4.0);
    }
    for i in 0..n_cont {
        qp.set_bounds(i, -5.0, 5.0);
    }
    for b in 0..n_bin {
        let d = n_cont + b;
        qp.set_bounds(d, 0.0, 1.0);
        let x = b % n_cont;
        qp.add_ineq_sparse(&[(x, 1.0), (d, -5.0)], 0.0);
        qp.add_ineq_sparse(&[(x, -1.0), (d, -5.0)], 0.0);
    }
    for _ in 0..n_cont / 2 {
        let row: Vec<f64> = (0..n).map(|_| uniform(&mut rng, -1.0, 1.0)).collect();
        let at_ref: f64 = row[n_cont..].iter().sum();
        qp.add_ineq(&row, at_ref + uniform(&mut rng, 0.5, 3.0));
    }
    MixedIntegerQP {
        base: qp,
        binary_indices: (n_cont..n).collect(),
    }
}

/// Projected gradient with step 1/L on a box QP.
fn projected_gradient(qp: &QuadraticProgram, iters: usize) -> (Vec<f64>, f64) {
    let n = qp.num_vars();
    let mut lip = 0.0f64;
    for i in 0..n {
        let row: f64 = (0..n).map(|j| qp.hessian[(i, j)].abs()).sum();
        lip = lip.max(2.0 * row);
    }
    let step = 1.0 / lip;
    let mut x = vec![0.0; n];
    for _ in 0..iters {
        let hx = qp.hessian.mul_vec(&x);
        for i in 0..n {
            let g = 2.0 * hx[i] + qp.linear[i];
            x[i] = (x[i] - step * g).clamp(qp.lower[i], qp.upper[i]);
        }
    }
    let obj = qp.objective(&x);
    (x, obj)
}

#[test]
fn box_qp_matches_projected_gradient_oracle() {
    for seed in 0..5 {
        let qp = random_box_qp(seed, 10);
        let res = solve_qp(&qp, &SolveOptions::default()).unwrap();
        assert_eq!(res.status, SolveStatus::Optimal);
        let (_, oracle) = projected_gradient(&qp, 1_000_000);
        assert!(
            (res.objective - oracle).abs() <= 1e-6,
            "seed {seed}: {} vs {}",
            res.objective,
            oracle
        );
    }
}

#[test]
fn box_qp_frozen_oracle_values() {
    // Projected gradient, 10^6 iterations, on random_box_qp(seed, 10).
    const ORACLE: [f64; 5] = [
        -9.492962250745544,
        -8.783318105687414,
        -10.430052695921388,
        -6.835372783313402,
        -9.941285775396882,
    ];
    for (seed, want) in ORACLE.iter().enumerate() {
        let res = solve_qp(&random_box_qp(seed as u64, 10), &SolveOptions::default()).unwrap();
        assert!((res.objective - want).abs() <= 1e-6, "seed {seed}: {}", res.objective);
    }
}

#[test]
fn binary_square_example() {
    let mut qp = QuadraticProgram::new(1);
    qp.add_squared_affine(&[(0, 1.0)], -1.5, 1.0);
    qp.set_bounds(0, 0.0, 1.0);
    let miqp = MixedIntegerQP {
        base: qp,
        binary_indices: vec![0],
    };
    let res = solve_miqp(&miqp, &SolveOptions::default()).unwrap();
    assert_eq!(res.status, SolveStatus::Optimal);
    assert_eq!(res.x[0], 1.0);
    assert!((res.objective - 0.25).abs() < 1e-12);
}

#[test]
fn integral_relaxation_needs_no_branching() {
    let mut qp = QuadraticProgram::new(2);
    qp.add_squared_affine(&[(0, 1.0)], -1.0, 1.0);
    qp.add_squared_affine(&[(1, 1.0)], -0.25, 1.0);
    qp.set_bounds(0, 0.0, 1.0);
    let relaxed = solve_qp(&qp, &SolveOptions::default()).unwrap();
    let miqp = MixedIntegerQP {
        base: qp,
        binary_indices: vec![0],
    };
    let res = solve_miqp(&miqp, &SolveOptions::default()).unwrap();
    assert_eq!(res.status, SolveStatus::Optimal);
    assert!((res.objective - relaxed.objective).abs() < 1e-12);
    assert!((res.x[1] - relaxed.x[1]).abs() < 1e-12);
}

#[test]
fn brute_force_without_binaries_equals_qp() {
    let qp = random_box_qp(3, 6);
    let direct = solve_qp(&qp, &SolveOptions::default()).unwrap();
    let miqp = MixedIntegerQP {
        base: qp,
        binary_indices: vec![],
    };
    let enumerated = brute_force_miqp(&miqp, &SolveOptions::default()).unwrap();
    assert_eq!(direct.x, enumerated.x);
    assert_eq!(direct.objective, enumerated.objective);
}

#[test]
fn brute_force_all_leaves_infeasible() {
    let mut qp = QuadraticProgram::new(2);
    qp.set_bounds(0, 0.0, 1.0);
    qp.add_ineq(&[0.0, 1.0], -1.0);
    qp.add_ineq(&[0.0, -1.0], -1.0);
    let miqp = MixedIntegerQP {
        base: qp,
        binary_indices: vec![0],
    };
    let res = brute_force_miqp(&miqp, &SolveOptions::default()).unwrap();
    assert_eq!(res.status, SolveStatus::Infeasible);
}

#[test]
fn random_miqps_match_enumeration() {
    let opts = SolveOptions::default();
    for seed in 0..100u64 {
        let n_bin = 1 + (seed as usize % 8);
        let n_cont = 2 + (seed as usize * 7 % 11);
        let miqp = random_miqp(seed, n_cont, n_bin);
        let bb = solve_miqp(&miqp, &opts).unwrap();
        let bf = brute_force_miqp(&miqp, &opts).unwrap();
        assert_eq!(bb.status, bf.status, "seed {seed}");
        if bf.status == SolveStatus::Optimal {
            let tol = 1e-6 * (1.0 + bf.objective.abs());
            assert!(
                (bb.objective - bf.objective).abs() <= tol,
                "seed {seed}: bb {} bf {}",
                bb.objective,
                bf.objective
            );
            for &i in &miqp.binary_indices {
                assert!(bb.x[i] == 0.0 || bb.x[i] == 1.0);
            }
        }
    }
}

#[test]
fn optimal_points_are_local_minima() {
    let opts = SolveOptions::default();
    for seed in 0..20u64 {
        let mut qp = random_box_qp(100 + seed, 8);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..3 {
            let row: Vec<f64> = (0..8).map(|_| uniform(&mut rng, -1.0, 1.0)).collect();
            qp.add_ineq(&row, uniform(&mut rng, 0.0, 1.0));
        }
        let res = solve_qp(&qp, &opts).unwrap();
        assert_eq!(res.status, SolveStatus::Optimal);
        assert!(qp.max_violation(&res.x) <= opts.feas_tol);
        let mut probes = 0;
        for _ in 0..20_000 {
            if probes == 20 {
                break;
            }
            let d: Vec<f64> = (0..8).map(|_| uniform(&mut rng, -1.0, 1.0)).collect();
            for sign in [1.0, -1.0] {
                let y: Vec<f64> = res.x.iter().zip(&d).map(|(x, di)| x + sign * 1e-4 * di).collect();
                if qp.max_violation(&y) <= 1e-12 {
                    probes += 1;
                    assert!(qp.objective(&y) >= res.objective - 1e-8, "seed {seed}");
                }
            }
        }
        // Every solution has some feasible direction unless pinned at a vertex.
        assert!(probes > 0 || res.iterations > 0);
    }
}

#[test]
fn solver_is_bit_deterministic() {
    let miqp = random_miqp(42, 10, 6);
    let a = solve_miqp(&miqp, &SolveOptions::default()).unwrap();
    let b = solve_miqp(&miqp, &SolveOptions::default()).unwrap();
    assert_eq!(a, b);
    let qp = random_box_qp(42, 10);
    let a = solve_qp(&qp, &SolveOptions::default()).unwrap();
    let b = solve_qp(&qp, &SolveOptions::default()).unwrap();
    assert_eq!(a, b);
}

#[test]
fn legacy_preset_keeps_iteration_budget() {
    let legacy = SolveOptions::legacy();
    assert_eq!(legacy.max_iter, 5000);
    assert_eq!(legacy.feas_tol, 1e-3);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn reported_objective_matches_evaluation(seed in any::<u64>(), n in 2usize..12) {
        let qp = random_box_qp(seed, n);
        let res = solve_qp(&qp, &SolveOptions::default()).unwrap();
        prop_assert_eq!(res.status, SolveStatus::Optimal);
        let direct = qp.objective(&res.x);
        prop_assert!((res.objective - direct).abs() <= 1e-10 * (1.0 + direct.abs()));
        prop_assert!(res.kkt_residual <= SolveOptions::default().stat_tol);
    }

    #[test]
    fn branch_and_bound_matches_enumeration(seed in any::<u64>(), n_bin in 1usize..7, n_cont in 2usize..10) {
        let miqp = random_miqp(seed, n_cont, n_bin);
        let opts = SolveOptions::default();
        let bb = solve_miqp(&miqp, &opts).unwrap();
        let bf = brute_force_miqp(&miqp, &opts).unwrap();
        prop_assert_eq!(bb.status, bf.status);
        if bf.status == SolveStatus::Optimal {
            prop_assert!(bf.objective <= bb.objective + 1e-9 * (1.0 + bb.objective.abs()));
            prop_assert!(bf.objective >= bb.objective - 1e-6 * (1.0 + bb.objective.abs()));
        }
    }
}
