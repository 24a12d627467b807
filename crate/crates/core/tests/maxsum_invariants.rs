//! Max-Sum against dynamics baselines: the maximize sign must match or
//! beat the best of a thousand greedy runs, and the minimize sign must
//! match or undercut the worst of a thousand bad-start best-response
//! runs, on nearly every instance of the anti-correlated desk ensemble.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use spg_core::dynamics::{best_response_run, greedy, init_worst};
use spg_core::ensemble::{derive_seed, sample_instance, ActivityModel, EnsembleParams};
use spg_core::maxsum::{run_maxsum, MaxSumOptions, Sign};

fn desk(c: f64, cap: u32, seed: u64) -> spg_core::game::GameInstance {
    sample_instance(&EnsembleParams {
        n_users: 100,
        n_units: 10,
        capacity: cap,
        edge_prob: 0.5,
        w_min: 2,
        w_max: 5,
        v_min: 1,
        v_max: 4,
        correlation: c,
        seed,
        activity: ActivityModel::AllActive,
    })
    .unwrap()
}

#[test]
fn maximize_matches_or_beats_the_best_of_1000_greedy_runs() {
    let mut wins = 0;
    let n_inst = 50u64;
    for i in 0..n_inst {
        let inst = desk(-1.0, 35, derive_seed(900, i));
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(901, i));
        let best_greedy = (0..1000)
            .map(|_| inst.utility(&greedy(&inst, &mut rng).final_assignment))
            .max()
            .unwrap();
        let ms = run_maxsum(&inst, Sign::Maximize, &MaxSumOptions::default(), &mut rng);
        if ms.utility >= best_greedy {
            wins += 1;
        }
    }
    assert!(
        wins as f64 >= 0.95 * n_inst as f64,
        "maximize beat greedy on only {wins}/{n_inst} instances"
    );
}

#[test]
fn minimize_matches_or_undercuts_the_worst_of_1000_bad_restarts() {
    let mut wins = 0;
    let n_inst = 50u64;
    for i in 0..n_inst {
        let inst = desk(-1.0, 35, derive_seed(910, i));
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(911, i));
        let worst_brb = (0..1000)
            .map(|_| {
                let x0 = init_worst(&inst, &mut rng);
                inst.utility(&best_response_run(&inst, x0, &mut rng, false).final_assignment)
            })
            .min()
            .unwrap();
        let ms = run_maxsum(&inst, Sign::Minimize, &MaxSumOptions::default(), &mut rng);
        if ms.utility <= worst_brb {
            wins += 1;
        }
    }
    assert!(
        wins as f64 >= 0.95 * n_inst as f64,
        "minimize undercut bad restarts on only {wins}/{n_inst} instances"
    );
}
