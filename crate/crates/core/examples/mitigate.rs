//! Detects unsupported sentences, then rewrites the response and prints the
//! edit ledger.

use std::sync::Arc;

use groundcheck::inference::CompletionClient;
use groundcheck::mitigation::{build_rewrite_instructions, Mitigator};
use groundcheck::model::{EditAction, RawResponse, SourceText};
use groundcheck::ner::OfflineNer;
use groundcheck::pipeline::{Detector, DetectorSettings, PromptSet};
use groundcheck::selector::SentenceSplitter;
use groundcheck::stub::StubJudge;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    // Rewrites drop flagged sentences, except one that gets a corrected version.
    let judge = StubJudge::lexical().with_rewrite(|req| {
        req.claim
            .replace("Turing was born in Paris.", "Turing was born in London.")
            .replace(" He enjoyed painting.", "")
    });
    let client = CompletionClient::new(Arc::new(judge));
    let detector = Detector::new(
        client.clone(),
        Arc::new(OfflineNer::new()),
        DetectorSettings::default(),
    );

    let source = SourceText::new(
        "doc",
        "Alan Turing was born in London. He studied at Cambridge.",
    )?;
    let response = RawResponse::new(
        "resp",
        "Alan Turing was born in Paris. He studied at Cambridge. He enjoyed painting.",
        &SentenceSplitter::default(),
    );
    let report = detector.detect(&source, &response)?;
    println!(
        "instructions:\n{}\n",
        build_rewrite_instructions(&report, &response)
    );

    let mitigator = Mitigator::new(PromptSet::default().mitigation);
    let refined = mitigator.mitigate(&source, &response, &report, &client)?;
    println!("refined: {}", refined.text);
    for edit in &refined.edits {
        let action = match edit.action {
            EditAction::Kept => "kept",
            EditAction::Rewritten => "rewritten",
            EditAction::Removed => "removed",
        };
        println!(
            "  #{} {action:<9} {}",
            edit.index,
            edit.new_text.as_deref().unwrap_or("")
        );
    }
    Ok(())
}
