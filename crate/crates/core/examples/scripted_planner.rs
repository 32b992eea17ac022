//! Plan through a scripted backend, including the corrective retry after an
//! invalid first answer.
//!
//!     cargo run --example scripted_planner

use audio_composer::plan::{parse_plan_response, validate_plan};
use audio_composer::planner::{build_prompt, corrective_message, Planner, PromptTemplate, ScriptedBackend};

const REQUEST: &str = "rain on a tin roof with distant thunder and a dog";
const FIRST: &str = r#"{"plan": "1. A.generate('Rain on a tin roof.',start_time=0,end_time=10); 2. B.generate('Distant thunder.',start_time=2,end_time=6); 3. C.generate('A dog barks.',start_time=4,end_time=5)"}"#;
const SECOND: &str = r#"{"plan": "1. A.generate('Rain on a tin roof.',start_time=0,end_time=10); 2. B.generate('Distant thunder.',start_time=2,end_time=4); 3. C.generate('A dog barks.',start_time=6,end_time=7)"}"#;

fn main() {
    let template = PromptTemplate::standard();
    for m in build_prompt(&template, &[], REQUEST).iter().rev().take(1) {
        println!("last prompt message: {m:?}");
    }
    let correction = corrective_message(&validate_plan(&parse_plan_response(FIRST, 10.0).unwrap()));
    println!("correction sent after the first answer:\n{correction}\n");
    let backend = ScriptedBackend::new().register(REQUEST, FIRST).register(&correction, SECOND);
    let outcome = Planner::new(Box::new(backend)).plan_from_request(&template, &[], REQUEST, 10.0).unwrap();
    println!("accepted after {} attempt(s):", outcome.attempts);
    println!("{}", serde_json::to_string_pretty(&outcome.plan).unwrap());
}
