//! Records completions once, then replays them without a model.

use std::sync::Arc;

use groundcheck::inference::{
    CompletionClient, CompletionProvider, RecordingProvider, ScriptedProvider,
};
use groundcheck::model::{RawResponse, SourceText};
use groundcheck::ner::OfflineNer;
use groundcheck::pipeline::{Detector, DetectorSettings};
use groundcheck::selector::SentenceSplitter;
use groundcheck::stub::StubJudge;

fn detect(
    provider: Arc<dyn CompletionProvider>,
    response: &str,
) -> Result<String, Box<dyn std::error::Error>> {
    let detector = Detector::new(
        CompletionClient::new(provider),
        Arc::new(OfflineNer::new()),
        DetectorSettings::default(),
    );
    let source = SourceText::new(
        "s",
        "Grace Hopper served in the Navy. She worked on the Harvard Mark I.",
    )?;
    let response = RawResponse::new("r", response, &SentenceSplitter::default());
    let report = detector.detect(&source, &response)?;
    Ok(serde_json::to_string(&report.final_judgments)?)
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = tempfile::tempdir()?;
    let script = dir.path().join("script.jsonl");
    let response = "Grace Hopper served in the Navy. She worked on the ENIAC.";

    let recorder = Arc::new(RecordingProvider::new(StubJudge::lexical()));
    let live = detect(recorder.clone(), response)?;
    recorder.save(&script)?;
    println!(
        "recorded {} completions: {live}",
        std::fs::read_to_string(&script)?.lines().count()
    );

    let replay = Arc::new(ScriptedProvider::from_jsonl(&script)?);
    println!("replayed: {}", detect(replay.clone(), response)?);

    match detect(replay, "Grace Hopper sailed to Paris.") {
        Ok(v) => println!("unexpected: {v}"),
        Err(e) => println!("new input without a fixture: {e}"),
    }
    Ok(())
}
