//! Batch detection and mitigation over a JSONL file, driven by a config.
//!
//! Output is one report line per record, in input order, whatever the
//! worker count.

use std::sync::Arc;

use groundcheck::config::Config;
use groundcheck::eval::zero_hallucination_rate;
use groundcheck::jsonl::{read_lines, InputRecord, RefinedLine, ReportLine};
use groundcheck::model::{RawResponse, SourceText};
use groundcheck::runner::map_ordered;
use groundcheck::stub::StubJudge;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = env!("CARGO_MANIFEST_DIR");
    let config = Config::from_json(
        &format!(
            r#"{{
                "ner": {{"provider": "offline", "gazetteer_dir": "{dir}/examples/data/gazetteer"}},
                "pipeline": {{"workers": 4}},
                "prompts": {{"today": "October 17th, 2026"}}
            }}"#
        ),
        "inline",
    )?;
    let client = config.client_with(Arc::new(StubJudge::lexical()))?;
    let rt = config.runtime_with(client, config.ner_provider()?)?;

    let records: Vec<InputRecord> = read_lines(format!("{dir}/examples/data/pairs.jsonl"))?.items;
    let results = map_ordered(&records, rt.workers, |r| {
        let source = SourceText::new(&r.id, &r.source).unwrap();
        let response = RawResponse::new(&r.id, &r.response, &rt.splitter);
        let report = rt.detector.detect(&source, &response).unwrap();
        let refined = rt
            .mitigator
            .mitigate(&source, &response, &report, &rt.client)
            .unwrap();

        let again = RawResponse::new(&r.id, &refined.text, &rt.splitter);
        let after = rt.detector.detect(&source, &again).unwrap();
        (report, refined, after)
    });

    for (r, (report, refined, _)) in records.iter().zip(&results) {
        println!(
            "{}",
            serde_json::to_string(&ReportLine::from_report(&r.id, report))?
        );
        println!(
            "{}",
            serde_json::to_string(&RefinedLine::new(&r.id, refined.clone()))?
        );
    }
    let before: Vec<_> = results.iter().map(|(b, _, _)| b.clone()).collect();
    let after: Vec<_> = results.iter().map(|(_, _, a)| a.clone()).collect();
    println!(
        "hallucination-free responses: {:.2} before, {:.2} after",
        zero_hallucination_rate(&before)?,
        zero_hallucination_rate(&after)?
    );
    Ok(())
}
