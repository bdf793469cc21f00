//! Finds the score threshold that maximizes macro F1 for a consistency scorer.

use groundcheck::eval::{f1_at, parse_gold, parse_scores, sweep_threshold};
use groundcheck::model::Judgment;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    // Scores on a 0..5 scale; only 5 means fully consistent.
    let scores = parse_scores(
        r#"{"orientation":"consistency","max":5}
{"id":"a","score":0.5}
{"id":"b","score":2.0}
{"id":"c","score":3.5}
{"id":"d","score":4.0}
{"id":"e","score":4.5}
{"id":"f","score":5.0}"#,
    )?;
    let gold = parse_gold(
        r#"{"id":"a","label":"hallucination"}
{"id":"b","label":"hallucination"}
{"id":"c","label":"hallucination"}
{"id":"d","label":"non_hallucination"}
{"id":"e","label":"non_hallucination"}
{"id":"f","label":"non_hallucination"}"#,
    );

    let mut xs = Vec::new();
    let mut ys: Vec<Judgment> = Vec::new();
    for g in &gold.items {
        let s = scores
            .scores
            .items
            .iter()
            .find(|s| s.id == g.id)
            .ok_or("missing score")?;
        xs.push(s.score / scores.max);
        ys.push(g.label);
    }
    let (t, f1) = sweep_threshold(&xs, &ys, 0.02)?;
    println!(
        "best threshold {t:.2} (raw {:.2}) macro F1 {f1:.4}",
        t * scores.max
    );
    println!("at 0.50: macro F1 {:.4}", f1_at(&xs, &ys, 0.5));
    Ok(())
}
