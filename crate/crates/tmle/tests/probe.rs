// temporary probe; removed before finalizing
use tmle::simulation::{run_grid, DgpSpec, SimGridConfig};

#[test]
#[ignore]
fn probe_table1_cells() {
    let mut config = SimGridConfig::new(DgpSpec::D1);
    config.master_seed = 314;
    config.replicates = 150;

    // (a) n=1000 p=0.5 q=0.5
    config.n_list = vec![1000];
    config.p_grid = vec![0.5];
    config.q_grid = vec![0.5];
    let t0 = std::time::Instant::now();
    for r in run_grid(&config).unwrap() {
        println!(
            "a: {} bias={:.3} rvar={:.3} cov={:.3} fail={}",
            r.estimator, r.sqrt_n_abs_bias, r.rvar, r.coverage, r.failures
        );
    }
    println!("cell a took {:?}", t0.elapsed());

    // (b) n=1000 p=0.1 q=0.1
    config.p_grid = vec![0.1];
    config.q_grid = vec![0.1];
    let t0 = std::time::Instant::now();
    for r in run_grid(&config).unwrap() {
        println!(
            "b: {} bias={:.3} rvar={:.3} cov={:.3} fail={}",
            r.estimator, r.sqrt_n_abs_bias, r.rvar, r.coverage, r.failures
        );
    }
    println!("cell b took {:?}", t0.elapsed());

    // (c) n=2000 p=0.01 q=0.1
    config.n_list = vec![2000];
    config.p_grid = vec![0.01];
    config.q_grid = vec![0.1];
    let t0 = std::time::Instant::now();
    for r in run_grid(&config).unwrap() {
        println!(
            "c: {} bias={:.3} rvar={:.3} cov={:.3} fail={}",
            r.estimator, r.sqrt_n_abs_bias, r.rvar, r.coverage, r.failures
        );
    }
    println!("cell c took {:?}", t0.elapsed());
}

#[test]
#[ignore]
fn probe_table2_cell() {
    let mut config = SimGridConfig::new(DgpSpec::D3);
    config.master_seed = 314;
    config.replicates = 40;
    config.n_list = vec![10000];
    config.p_grid = vec![0.1];
    config.q_grid = vec![0.1];
    let t0 = std::time::Instant::now();
    for r in run_grid(&config).unwrap() {
        println!(
            "t2: {} bias={:.3} rvar={:.3} cov={:.3} fail={}",
            r.estimator, r.sqrt_n_abs_bias, r.rvar, r.coverage, r.failures
        );
    }
    println!("table2 cell took {:?} for 40 reps", t0.elapsed());
}
