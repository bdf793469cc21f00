//! Recognizes entities with the offline recognizer and tags each one.

use groundcheck::entity::expand_hypothesis;
use groundcheck::model::RawResponse;
use groundcheck::ner::{recognize, resolve_overlaps, EntityCategorySet, OfflineNer};
use groundcheck::selector::{select_hypotheses, SelectorConfig, SentenceSplitter};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let ner = OfflineNer::new()
        .with_gazetteer("Person", ["Ada Lovelace", "Charles Babbage", "Ada"])
        .with_gazetteer("Location", ["London"]);

    let text =
        "Ada Lovelace met Charles Babbage in London in 1833 and wrote her notes over 9 months.";
    let response = RawResponse::new("r", text, &SentenceSplitter::default());
    let hyp = &select_hypotheses(&response, &SelectorConfig::default())[0];

    let spans = recognize(&ner, &hyp.text, &EntityCategorySet::default())?;
    println!("raw mentions: {}", spans.len());
    let spans = resolve_overlaps(&spans);

    for tagged in expand_hypothesis(hyp, &spans)? {
        println!("{:<18} {}", tagged.entity.category, tagged.rendered);
    }

    let people_only = EntityCategorySet::new(["Person"])?;
    let people = recognize(&ner, &hyp.text, &people_only)?;
    println!(
        "people: {:?}",
        people
            .iter()
            .map(|s| s.surface.as_str())
            .collect::<Vec<_>>()
    );
    Ok(())
}
