use bibt_core::io::{aggregate_games, GameRecord};
use bibt_core::sampler::{default_labels, GibbsKernel};
use bibt_core::{rng_from_seed, run_chain, ComparisonData, Hyperparams, OperatorSet, SamplerState};
use proptest::prelude::*;

fn data_strategy() -> impl Strategy<Value = ComparisonData> {
    (3usize..=6).prop_flat_map(|n| {
        let e = n * (n - 1) / 2;
        prop::collection::vec((0u32..40).prop_flat_map(|t| (0..=t, Just(t))), e).prop_map(move |pairs| {
            let (wins, trials) = pairs.into_iter().unzip();
            ComparisonData::new(default_labels(n), wins, trials).unwrap()
        })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn state_invariants_hold_after_every_sweep(data in data_strategy(), seed in any::<u64>()) {
        let ops = OperatorSet::new(data.n_entities()).unwrap();
        let hp = Hyperparams::default();
        let kernel = GibbsKernel::new(&data, &ops, &hp).unwrap();
        let mut st = SamplerState::initial(&data, &ops).unwrap();
        let mut rng = rng_from_seed(seed);
        for _ in 0..30 {
            kernel.sweep(&mut st, &mut rng).unwrap();
            prop_assert!(st.s.sum().abs() < 1e-12);
            prop_assert!(st.sigma2 > 0.0 && st.tau2 > 0.0 && st.xi > 0.0);
            prop_assert!(st.lambda2.iter().all(|&v| v > 0.0));
            prop_assert!(st.nu.iter().all(|&v| v > 0.0));
            for (e, &n) in data.trials().iter().enumerate() {
                if n == 0 {
                    prop_assert_eq!(st.omega[e], 0.0);
                } else {
                    prop_assert!(st.omega[e] > 0.0);
                }
            }
        }
    }

    #[test]
    fn seeded_chains_are_reproducible(data in data_strategy(), seed in any::<u64>()) {
        let ops = OperatorSet::new(data.n_entities()).unwrap();
        let hp = Hyperparams { n_iterations: 40, burn_in: 10, thin: 3, seed, ..Hyperparams::default() };
        let a = run_chain(&data, &hp, &ops).unwrap();
        let b = run_chain(&data, &hp, &ops).unwrap();
        prop_assert_eq!(a.n_draws(), 10);
        prop_assert_eq!(a.scores, b.scores);
        prop_assert_eq!(a.weights, b.weights);
        prop_assert_eq!(a.sigma2, b.sigma2);
    }

    #[test]
    fn game_aggregation_ignores_row_order(
        games in prop::collection::vec((0usize..5, 1usize..5), 3..60),
        shuffle_seed in any::<u64>(),
    ) {
        let names = ["ATH", "BOS", "CHC", "DET", "LAN"];
        let mut records: Vec<GameRecord> = games
            .iter()
            .map(|&(w, off)| GameRecord {
                date: None,
                winner: names[w].into(),
                loser: names[(w + off) % 5].into(),
            })
            .collect();
        let teams: std::collections::BTreeSet<_> =
            records.iter().flat_map(|g| [g.winner.clone(), g.loser.clone()]).collect();
        prop_assume!(teams.len() >= 3);
        let a = aggregate_games(&records).unwrap();
        let mut rng = rng_from_seed(shuffle_seed);
        use rand::seq::SliceRandom;
        records.shuffle(&mut rng);
        let b = aggregate_games(&records).unwrap();
        prop_assert_eq!(&a, &b);
        prop_assert_eq!(a.trials().iter().sum::<u32>() as usize, records.len());
        let mut sorted = a.labels().to_vec();
        sorted.sort();
        prop_assert_eq!(a.labels(), &sorted[..]);
    }
}
