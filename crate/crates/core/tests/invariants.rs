mod common;

fn check(name: &str) {
    let suite = common::suite();
    let inv = suite.iter().find(|i| i.name == name).expect("registered invariant");
    if let Err(e) = common::run(inv) {
        panic!("{}::{}: {e}", inv.module, inv.name);
    }
}

macro_rules! invariants {
    ($($name:ident),* $(,)?) => {
        $(#[test] fn $name() { check(stringify!($name)); })*

        #[test]
        fn every_registered_invariant_has_a_test() {
            let listed = [$(stringify!($name)),*];
            for inv in common::suite() {
                assert!(listed.contains(&inv.name), "{} has no test", inv.name);
            }
        }
    };
}

invariants!(
    softmax_is_masked_distribution,
    gru_sequence_is_fold_of_steps,
    adam_is_deterministic,
    layer_gradients_match_fd,
    vocab_ignores_heldout_documents,
    batch_targets_are_shifted_inputs,
    attention_weights_are_masked_distributions,
    attention_is_monotone_in_a_key_score,
    hierarchy_gradients_match_fd,
    empty_context_is_zero,
    outputs_are_distributions,
    masked_context_matches_baseline,
    checkpoint_round_trip_is_bit_exact,
    model_gradients_match_fd,
    greedy_decode_is_deterministic,
    best_epoch_is_earliest_max,
    same_seed_same_checkpoint,
    overfit_loss_trends_down,
    metrics_are_permutation_invariant,
    self_bleu_is_100,
    rouge_zero_iff_no_lcs,
    macro_recall_bounded_and_monotone,
    win_tie_loss_partition,
);
