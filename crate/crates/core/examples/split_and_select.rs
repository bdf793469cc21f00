//! Splits a response into sentences and shows which ones would be judged.

use groundcheck::model::RawResponse;
use groundcheck::selector::{select_hypotheses, SelectorConfig, SentenceSplitter};

fn main() {
    let text = "Here are the main points:\n\
                Dr. Smith joined the lab in 2019. The grant was worth $3.50 million! \
                Was it renewed? Okay then.\n\
                42.\n\
                I hope this helps.";

    let splitter = SentenceSplitter::default();
    let response = RawResponse::new("r1", text, &splitter);
    println!("{} sentences", response.sentences.len());

    for hyp in select_hypotheses(&response, &SelectorConfig::default()) {
        match &hyp.skip_reason {
            None => println!("  judge #{} {:?}", hyp.index, hyp.text),
            Some(why) => println!("  purge #{} {:?} ({why})", hyp.index, hyp.text),
        }
    }

    // Short responses are judged whole, so a lone header still gets checked.
    let short = RawResponse::new("r2", "Summary:", &splitter);
    let hyps = select_hypotheses(&short, &SelectorConfig::default());
    println!("single sentence selected: {}", hyps[0].selected);
}
