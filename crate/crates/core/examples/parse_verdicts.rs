//! Parses a judge's numbered verdict list.

use groundcheck::sentence::parse_nli_answer;

fn main() {
    let answer = "Answer:\n\
        (0). The Eiffel Tower is in Rome. <reason> premise reference: \"The Eiffel Tower is in Paris.\" It's contradiction. </reason> [I]\n\
        (1). It opened in 1889. <reason> premise reference: \"It opened in 1889.\" It's entailment. </reason> [C]";

    match parse_nli_answer(answer, 2) {
        Ok(verdicts) => {
            for v in verdicts {
                println!(
                    "({}) {:?} -> {:?}\n    {}",
                    v.index,
                    v.mark,
                    v.mark.judgment(),
                    v.reason
                );
            }
        }
        Err(e) => println!("unparseable: {e}"),
    }

    let truncated = "Answer:\n(0). The Eiffel Tower is in Rome. <reason> premise reference: None.";
    if let Err(e) = parse_nli_answer(truncated, 2) {
        println!("truncated answer: {e}");
    }
}
