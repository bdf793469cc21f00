//! Loads the three supported benchmark layouts. Malformed lines are reported,
//! not skipped.

use groundcheck::eval::{parse_dataset, DatasetFormat};

const HALUEVAL: &str = r#"{"id":"q1","knowledge":"The Nile flows north into the Mediterranean.","right_answer":"It flows north.","hallucinated_answer":"It flows south."}"#;

const FACTCC: &str = r#"{"id":"f1","text":"Sales rose 4% in May.","claim":"Sales rose 4% in May.","label":"CORRECT"}
{"id":"f2","text":"Sales rose 4% in May.","claim":"Sales fell in May.","label":"INCORRECT"}
{"id":"f3","text":"missing claim","label":"CORRECT"}"#;

const SCORED: &str = r#"{"orientation":"consistency","max":5}
{"id":"s1","source":"The bridge opened in 1932.","response":"It opened in 1932.","score":5}
{"id":"s2","source":"The bridge opened in 1932.","response":"It opened in 1923.","score":2.5}"#;

fn main() {
    for (format, text) in [
        (DatasetFormat::HaluevalPair, HALUEVAL),
        (DatasetFormat::FactccSentence, FACTCC),
        (DatasetFormat::Scored, SCORED),
    ] {
        let report = parse_dataset(text, format);
        println!(
            "{format}: {} pairs, {} bad lines",
            report.items.len(),
            report.errors.len()
        );
        for p in &report.items {
            println!("  {:<6} {:?} {:?}", p.id, p.label, p.response);
        }
        for e in &report.errors {
            println!("  line {}: {}", e.line, e.message);
        }
    }
}
