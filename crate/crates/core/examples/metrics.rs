//! Detection F1 and text-overlap scores.

use groundcheck::eval::{bleu4, f1_per_class, ConfusionCounts, DetectionMetrics, OverlapScores};
use groundcheck::model::Judgment::{Hallucination as H, NonHallucination as N};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let gold = [H, H, N, N, N, H];
    let predicted = [H, N, N, N, H, H];
    let counts = ConfusionCounts::from_pairs(&gold, &predicted)?;
    let m = DetectionMetrics::from_counts(counts);
    println!(
        "macro F1 {:.4} (hallucination {:.4}, grounded {:.4})",
        m.f1_macro, m.f1_hallucination, m.f1_non_hallucination
    );
    println!("per-class check: {:.4}", f1_per_class(&counts, H));

    let pairs = [
        ("the cat sat on the mat", "the cat sat on the mat"),
        ("a cat is on the mat", "there is a cat on the mat"),
        (
            "the quick brown fox jumps over the lazy dog today",
            "the quick brown fox jumped over the lazy dog",
        ),
    ];
    let mut all = Vec::new();
    for (candidate, reference) in pairs {
        let s = OverlapScores::score(candidate, reference);
        println!(
            "R1 {:.4}  R2 {:.4}  RL {:.4}  BLEU-4 {:.4}  {candidate:?}",
            s.rouge1, s.rouge2, s.rouge_l, s.bleu4
        );
        all.push(s);
    }
    let mean = OverlapScores::mean(&all);
    println!(
        "mean  R1 {:.4}  R2 {:.4}  RL {:.4}  BLEU-4 {:.4}",
        mean.rouge1, mean.rouge2, mean.rouge_l, mean.bleu4
    );
    println!(
        "empty candidate BLEU-4: {}",
        bleu4("", "anything at all here")
    );
    Ok(())
}
