//! Runs sentence-level and entity-level detection on one response.
//!
//! The judge here is the rule-based stub (a hypothesis is supported when
//! all its words occur in the source), so the example runs offline.

use std::sync::Arc;

use groundcheck::inference::CompletionClient;
use groundcheck::model::{DetectionLevel, RawResponse, SourceText};
use groundcheck::ner::OfflineNer;
use groundcheck::pipeline::{Detector, DetectorSettings};
use groundcheck::selector::SentenceSplitter;
use groundcheck::stub::StubJudge;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let ner = OfflineNer::from_gazetteer_dir(concat!(
        env!("CARGO_MANIFEST_DIR"),
        "/examples/data/gazetteer"
    ))?;
    let client = CompletionClient::new(Arc::new(StubJudge::lexical()));
    let detector = Detector::new(client.clone(), Arc::new(ner), DetectorSettings::default());

    let source = SourceText::new(
        "doc",
        "Ada Lovelace was born in London in 1815. She worked with Charles Babbage on the Analytical Engine.",
    )?;
    let response = RawResponse::new(
        "resp",
        "Ada Lovelace was born in London in 1816. She worked with Charles Babbage on the Analytical Engine. \
         She also won a medal for chess.",
        &SentenceSplitter::default(),
    );

    let report = detector.detect(&source, &response)?;
    for hyp in &report.hypotheses {
        let verdict = report.final_judgments[&hyp.index];
        println!("#{} {:<18} {}", hyp.index, verdict.as_str(), hyp.text);
        for r in report
            .records
            .iter()
            .filter(|r| r.hypothesis_index == hyp.index)
        {
            let level = match r.level {
                DetectionLevel::Sentence => "sentence",
                DetectionLevel::Entity => "entity",
            };
            println!(
                "    {level:<8} {:<18} {}",
                r.judgment.as_str(),
                r.hypothesis
            );
        }
    }
    println!("response verdict: {}", report.response_judgment().as_str());
    println!("completion requests: {}", client.stats().provider_calls());
    Ok(())
}
