//! Renders a few-shot prompt over the synthetic NLI task and scores the
//! verbalizer at the answer position of an untrained model.

use dforge::data::{generate_synthetic, score_verbalizer, Label, PoolSampler, SyntheticConfig};
use dforge::methods::standard_task;
use dforge::model::{MiniTransformer, ModelConfig};
use dforge::Result;

fn main() -> Result<()> {
    let ds = generate_synthetic(&SyntheticConfig {
        pool_size: 200,
        validation_size: 20,
        ..Default::default()
    })?;
    let task = standard_task(ds.all_examples())?;
    println!("vocabulary: {} words", task.vocab_size());

    let query = &ds.validation_matched[0];
    let supports = PoolSampler::new(ds.train_pool.clone(), 0).sample(query, 2)?;
    println!("--- prompt ---\n{}", task.template.render(&supports, query, &task.verbalizer));

    let model = MiniTransformer::init(&ModelConfig::student_xs(task.vocab_size()), 0)?;
    let prompt = task.prompt(&supports, query, model.config().max_seq_len)?;
    println!(
        "--- {} tokens, answer predicted at position {} ---",
        prompt.tokens.len(),
        prompt.answer_position
    );
    let logits = model.logits_at(&prompt.tokens, prompt.answer_position)?;
    let score = score_verbalizer(logits.data(), &task.verbalizer)?;
    println!(
        "gold {:?} ({}), predicted {:?}, p(Yes) {:.3}, p(No) {:.3}, coverage {:.3}",
        query.label,
        task.verbalizer.answer_word(query.label),
        score.label,
        score.prob_yes,
        score.prob_no,
        score.coverage
    );
    for label in [Label::Entailment, Label::Contradiction] {
        println!("{label:?} -> {:?}", task.verbalizer.forms(label));
    }
    Ok(())
}
