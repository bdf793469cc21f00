//! Calls an OpenAI-compatible chat endpoint. Set GROUNDCHECK_ENDPOINT and,
//! if needed, GROUNDCHECK_API_KEY.

use std::sync::Arc;

use groundcheck::inference::remote::RemoteProvider;
use groundcheck::inference::{CompletionClient, RetryPolicy};
use groundcheck::model::{RawResponse, SourceText};
use groundcheck::ner::OfflineNer;
use groundcheck::pipeline::{Detector, DetectorSettings};
use groundcheck::selector::SentenceSplitter;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let Ok(endpoint) = std::env::var("GROUNDCHECK_ENDPOINT") else {
        println!("GROUNDCHECK_ENDPOINT is not set; nothing to do");
        return Ok(());
    };
    let key = std::env::var("GROUNDCHECK_API_KEY").ok();
    let client = CompletionClient::new(Arc::new(RemoteProvider::new(endpoint, key)))
        .with_retry(RetryPolicy::default());
    let detector = Detector::new(
        client.clone(),
        Arc::new(OfflineNer::new()),
        DetectorSettings::default(),
    );

    let source = SourceText::new(
        "s",
        "Mount Kilimanjaro is in Tanzania and rises to 5,895 metres.",
    )?;
    let response = RawResponse::new(
        "r",
        "Kilimanjaro is in Kenya. It is about 5,900 metres tall.",
        &SentenceSplitter::default(),
    );
    let report = detector.detect(&source, &response)?;
    for j in &report.final_judgments {
        println!("{j:?}");
    }
    println!("{} model calls", client.stats().provider_calls());
    Ok(())
}
