//! Property tests for invariants that hold across inputs.

use std::collections::HashSet;

use proptest::prelude::*;

use dforge::adapters::{attach_lora, LoraConfig};
use dforge::bench::{mean_std, records_to_csv, run_sweep_with, Method, SweepConfig, SweepEnv, Timing};
use dforge::data::{
    draw_train_queries, generate_synthetic, split_words, Example, Label, PoolSampler, Split, SyntheticConfig,
    SyntheticDataset, Task,
};
use dforge::methods::{instance_loss, objective, standard_task, student_instances, teacher_targets, DistillConfig, LossBreakdown};
use dforge::model::{read_checkpoint, write_checkpoint, MiniTransformer, Mode, ModelConfig};
use dforge::tensor::{Tape, Tensor, Var};
use dforge::Error;

fn tiny(vocab: usize, d_model: usize, n_layers: usize, seed: u64) -> MiniTransformer {
    let cfg = ModelConfig {
        vocab_size: vocab,
        max_seq_len: 128,
        d_model,
        n_layers,
        n_heads: 2,
        d_ff: 2 * d_model,
        dropout_p: 0.1,
        tie_embeddings: seed.is_multiple_of(2),
    };
    MiniTransformer::init(&cfg, seed).unwrap()
}

fn small_data(seed: u64) -> (SyntheticDataset, Task) {
    let ds = generate_synthetic(&SyntheticConfig {
        pool_size: 60,
        validation_size: 20,
        seed,
        ..Default::default()
    })
    .unwrap();
    let task = standard_task(ds.all_examples()).unwrap();
    (ds, task)
}

fn pool(n: u64) -> Vec<Example> {
    (0..n)
        .map(|uid| Example {
            uid,
            premise: format!("p{uid}"),
            hypothesis: "h".into(),
            label: if uid % 2 == 0 { Label::Entailment } else { Label::Contradiction },
            split: Split::TrainPool,
        })
        .collect()
}

fn logits(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-20.0f64..20.0, n)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn kl_is_nonnegative_and_zero_on_itself(
        (p, q) in (2usize..16).prop_flat_map(|n| (logits(n), logits(n))),
        t in 0.5f64..4.0,
    ) {
        let mut tape = Tape::no_grad();
        let n = p.len();
        let pv = Var::constant(&Tensor::new(&[n], p).unwrap());
        let qv = Var::constant(&Tensor::new(&[n], q).unwrap());
        prop_assert!(tape.kl_divergence(&pv, &qv, t).unwrap().item() >= -1e-12);
        prop_assert!(tape.kl_divergence(&pv, &pv, t).unwrap().item().abs() <= 1e-12);
    }

    #[test]
    fn combine_is_the_convex_mixture(alpha in 0.0f64..=1.0, kl in 0.0f64..10.0, ce in 0.0f64..10.0) {
        let c = LossBreakdown::combine(alpha, kl, ce);
        prop_assert!((c - (alpha * kl + (1.0 - alpha) * ce)).abs() <= 1e-12);
        prop_assert!(c >= kl.min(ce) - 1e-12 && c <= kl.max(ce) + 1e-12);
        prop_assert_eq!(LossBreakdown::combine(0.0, kl, ce), ce);
        prop_assert_eq!(LossBreakdown::combine(1.0, kl, ce), kl);
    }

    #[test]
    fn mean_std_bounds(xs in prop::collection::vec(0.0f64..1.0, 1..12)) {
        let (m, s) = mean_std(&xs);
        let lo = xs.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        prop_assert!(m >= lo - 1e-12 && m <= hi + 1e-12);
        prop_assert!(s >= 0.0 && s <= (hi - lo) + 1e-12);
    }

    #[test]
    fn supports_exclude_the_query_and_repeat(n in 2u64..40, k in 0usize..12, seed: u64, q in 0u64..40) {
        let p = pool(n);
        let query = p[(q % n) as usize].clone();
        let sampler = PoolSampler::new(p, seed);
        match sampler.sample(&query, k) {
            Ok(s) => {
                prop_assert_eq!(s.len(), k);
                prop_assert!(s.iter().all(|e| e.uid != query.uid));
                prop_assert_eq!(s.iter().map(|e| e.uid).collect::<HashSet<_>>().len(), k);
                prop_assert_eq!(s, sampler.sample(&query, k).unwrap());
            }
            Err(e) => {
                prop_assert!(k as u64 > n - 1);
                prop_assert!(matches!(e, Error::Sampling(_)));
            }
        }
    }

    #[test]
    fn tokenizer_round_trips_known_words(words in prop::collection::vec("[a-z]{1,6}", 1..12)) {
        let text = words.join(" ");
        let (_, task) = small_data(0);
        let tok = dforge::data::Tokenizer::build(&[], [text.as_str()]);
        prop_assert_eq!(tok.decode(&tok.encode(&text)), text.clone());
        prop_assert_eq!(tok.encode(&text).len(), split_words(&text).len());
        // unseen words never map to a verbalizer token
        let ids: Vec<u32> = task.tokenizer.encode(&text);
        let verbal: HashSet<usize> = task.verbalizer.token_ids().into_iter().collect();
        for (w, id) in split_words(&text).iter().zip(ids) {
            if task.tokenizer.id(w).is_none() {
                prop_assert!(!verbal.contains(&(id as usize)));
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn checkpoint_round_trip(seed in 0u64..1000, d in prop::sample::select(vec![8usize, 16]), layers in 1usize..3, lora: bool) {
        let mut m = tiny(40, d, layers, seed);
        if lora {
            attach_lora(&mut m, &LoraConfig { rank: 2, ..Default::default() }, seed).unwrap();
        }
        let bytes = write_checkpoint(&m).unwrap();
        let back = read_checkpoint(&bytes).unwrap();
        prop_assert!(m.params().bit_eq(back.params()));
        prop_assert_eq!(m.config(), back.config());
        prop_assert_eq!(write_checkpoint(&back).unwrap(), bytes);
    }

    #[test]
    fn prompt_length_and_overflow(seed in 0u64..50, k in 0usize..6, max_len in 20usize..200) {
        let (ds, task) = small_data(seed % 5);
        let query = &ds.validation_matched[(seed % 20) as usize];
        let supports = PoolSampler::new(ds.train_pool.clone(), seed).sample(query, k).unwrap();
        let full = task.prompt(&supports, query, usize::MAX).unwrap();
        prop_assert_eq!(full.sections.total(), full.tokens.len());
        prop_assert_eq!(full.answer_position, full.tokens.len() - 1);
        match task.prompt(&supports, query, max_len) {
            Ok(p) => prop_assert_eq!(p.tokens, full.tokens),
            Err(Error::ContextWindow { limit, actual, .. }) => {
                prop_assert_eq!(limit, max_len);
                prop_assert_eq!(actual, full.tokens.len());
                prop_assert!(actual > max_len);
            }
            Err(e) => prop_assert!(false, "unexpected error {e}"),
        }
    }

    #[test]
    fn lora_is_a_no_op_at_init(seed in 0u64..1000, rank in 1usize..8) {
        let base = tiny(40, 16, 1, seed);
        let mut adapted = base.clone();
        attach_lora(&mut adapted, &LoraConfig { rank, ..Default::default() }, seed + 1).unwrap();
        let tokens: Vec<u32> = (0..12).map(|i| ((seed + i * 7) % 40) as u32).collect();
        prop_assert_eq!(base.logits(&tokens).unwrap().to_vec(), adapted.logits(&tokens).unwrap().to_vec());
    }

    #[test]
    fn cd_loss_obeys_mixing_identity(seed in 0u64..100, alpha in 0.0f64..=1.0, t in 0.5f64..3.0) {
        let (ds, task) = small_data(seed % 3);
        let teacher = tiny(task.vocab_size(), 16, 1, seed + 1);
        let student = tiny(task.vocab_size(), 8, 1, seed + 2);
        let dcfg = DistillConfig { alpha, temperature: t, k: 2, ..Default::default() };
        let queries = draw_train_queries(&ds.train_pool, 2, seed).unwrap();
        let targets = teacher_targets(&teacher, &task, &ds.train_pool, &queries, &dcfg).unwrap();
        let obj = objective(&task, &dcfg);
        for inst in student_instances(&task, &ds.train_pool, &queries, targets, seed, 128).unwrap() {
            let (loss, parts) = instance_loss(&mut Tape::new(), &student, &inst, &obj, Mode::Eval).unwrap();
            let kl = parts.l_kl.unwrap();
            prop_assert!(kl >= -1e-12);
            prop_assert_eq!(loss.item(), LossBreakdown::combine(alpha, kl, parts.l_ce));
            prop_assert_eq!(parts.l_total, loss.item());
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn sweep_emits_one_row_per_cell(
        methods in prop::sample::subsequence(vec![Method::Baseline, Method::Icl, Method::PbftBitfit], 1..=3),
        ks in prop::sample::subsequence(vec![1usize, 2, 4], 1..=3),
        n_seeds in 1u64..4,
    ) {
        let (ds, task) = small_data(1);
        let env = SweepEnv {
            teacher: tiny(task.vocab_size(), 8, 1, 1),
            student: tiny(task.vocab_size(), 8, 1, 2),
            task,
            pool: ds.train_pool.clone(),
            matched: ds.validation_matched.clone(),
            mismatched: ds.validation_mismatched.clone(),
        };
        let cfg = SweepConfig {
            methods: methods.clone(),
            support_counts: ks.clone(),
            seeds: (0..n_seeds).collect(),
            n_inferences: 5,
            train: dforge::methods::TrainConfig { epochs: 2, train_set_size: 2, ..Default::default() },
            timing: Timing::Disabled,
            ..Default::default()
        };
        let out = run_sweep_with(&env, &cfg).unwrap();
        prop_assert_eq!(out.records.len(), methods.len() * ks.len() * n_seeds as usize);
        let csv = records_to_csv(&out.records).unwrap();
        prop_assert_eq!(csv.lines().count(), 1 + out.records.len());
    }
}
