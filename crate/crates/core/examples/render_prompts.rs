//! Renders the detection and rewrite prompts for a small input.

use groundcheck::inference::template::{
    bindings, PromptTemplate, DETECTION, HYPOTHESIS, MITIGATION, RAW_RESPONSE,
    REWRITE_INSTRUCTIONS, SOURCE_TEXT,
};
use groundcheck::sentence::number_hypotheses;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let source = "The Eiffel Tower is in Paris. It opened in 1889.";
    let hypotheses = number_hypotheses(["The Eiffel Tower is in Rome.", "It opened in 1889."]);

    let detection = PromptTemplate::get(DETECTION)?.with_today("October 17th, 2026");
    let messages = detection.render(&bindings([
        (SOURCE_TEXT, source),
        (HYPOTHESIS, hypotheses.as_str()),
    ]))?;
    println!("detection prompt: {} messages", messages.len());
    let last = messages.last().unwrap();
    println!("--- {} ---\n{}\n", last.role.as_str(), last.content);

    let mitigation = PromptTemplate::get(MITIGATION)?;
    println!("rewrite placeholders: {:?}", mitigation.placeholders()?);
    let messages = mitigation.render(&bindings([
        (SOURCE_TEXT, source),
        (
            RAW_RESPONSE,
            "The Eiffel Tower is in Rome. It opened in 1889.",
        ),
        (
            REWRITE_INSTRUCTIONS,
            "1. The Eiffel Tower is in Rome.\n- reason: The source places it in Paris.",
        ),
    ]))?;
    for m in &messages {
        println!("--- {} ---\n{}", m.role.as_str(), m.content);
    }

    // Missing bindings are an error, not an empty substitution.
    if let Err(e) = mitigation.render(&bindings([(SOURCE_TEXT, source)])) {
        println!("\nincomplete bindings: {e}");
    }
    Ok(())
}
