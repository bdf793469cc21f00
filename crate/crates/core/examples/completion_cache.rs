//! A directory cache makes a second pass over the same inputs free.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use groundcheck::inference::{
    CompletionClient, CompletionProvider, DirCache, Message, ProviderError,
};
use groundcheck::model::{GenerationParams, RawResponse, SourceText};
use groundcheck::ner::OfflineNer;
use groundcheck::pipeline::{Detector, DetectorSettings};
use groundcheck::selector::SentenceSplitter;
use groundcheck::stub::StubJudge;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = tempfile::tempdir()?;
    let calls = Arc::new(AtomicUsize::new(0));

    let pass = |label: &str| -> Result<(), Box<dyn std::error::Error>> {
        let judge = StubJudge::lexical();
        let counter = calls.clone();
        let provider =
            move |m: &[Message], p: &GenerationParams| -> Result<String, ProviderError> {
                counter.fetch_add(1, Ordering::SeqCst);
                judge.complete(m, p)
            };
        let client = CompletionClient::new(Arc::new(provider))
            .with_cache(Arc::new(DirCache::open(dir.path())?));
        let detector = Detector::new(
            client.clone(),
            Arc::new(OfflineNer::new()),
            DetectorSettings::default(),
        );

        let source = SourceText::new("s", "The museum opened in 1901 and has 40 rooms.")?;
        let response = RawResponse::new(
            "r",
            "The museum opened in 1901. It has 45 rooms.",
            &SentenceSplitter::default(),
        );
        let report = detector.detect(&source, &response)?;
        let stats = client.stats();
        println!(
            "{label}: {} hallucinated, {} provider calls, {} cache hits",
            report.hallucinated_indices().len(),
            stats.provider_calls(),
            stats.cache_hits()
        );
        Ok(())
    };

    pass("first pass")?;
    pass("second pass")?;
    println!(
        "provider invoked {} times in total",
        calls.load(Ordering::SeqCst)
    );
    Ok(())
}
