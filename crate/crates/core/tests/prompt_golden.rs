//! The rendered prompt layout is locked by a golden file.

use dforge::data::{Example, Label, Split, Task, PromptTemplate, VerbalizerMap};

const GOLDEN: &str = include_str!("golden/one_shot_prompt.txt");

fn example(uid: u64, premise: &str, hypothesis: &str, label: Label) -> Example {
    Example {
        uid,
        premise: premise.into(),
        hypothesis: hypothesis.into(),
        label,
        split: Split::TrainPool,
    }
}

fn pair() -> (Example, Example) {
    (
        example(
            1,
            "It was a steep learning curve for me, she said.",
            "She faced no difficulty with the task.",
            Label::Contradiction,
        ),
        example(
            2,
            "I'll listen and agree with what I think sounds right.",
            "I won't even bother listening.",
            Label::Entailment,
        ),
    )
}

#[test]
fn one_shot_prompt_matches_golden() {
    let (support, query) = pair();
    let text = PromptTemplate::default().render(&[support], &query, &VerbalizerMap::default());
    assert_eq!(text, GOLDEN);
}

#[test]
fn tokens_follow_the_rendered_text() {
    let (support, query) = pair();
    let task = Task::build(PromptTemplate::default(), VerbalizerMap::default(), [&support, &query], &[]).unwrap();
    let p = task.prompt(std::slice::from_ref(&support), &query, 512).unwrap();
    let decoded = task.tokenizer.decode(&p.tokens[1..]);
    let expected = task.tokenizer.decode(&task.tokenizer.encode(GOLDEN));
    assert_eq!(decoded, expected);
    assert_eq!(p.answer_position, p.tokens.len() - 1);
    assert_eq!(task.tokenizer.token(*p.tokens.last().unwrap()), Some(":"));
    assert_eq!(p.sections.total(), p.tokens.len());
}
