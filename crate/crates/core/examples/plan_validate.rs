//! Parse a planner response, validate it, and show how violations are reported.
//!
//!     cargo run --example plan_validate

use audio_composer::plan::{max_concurrency, parse_plan_response, serialize_plan, validate_plan};

const GOOD: &str = r#"{"plan": "1. A.generate('Buzzing and humming of a motor.',start_time=0,end_time=10); 2. B.generate('A man speaking.',start_time=2,end_time=8)"}"#;
const CROWDED: &str = r#"{"plan": "1. A.generate('Rain.',start_time=0,end_time=10); 2. B.generate('Thunder.',start_time=2,end_time=6); 3. C.generate('Dog barking.',start_time=4,end_time=5)"}"#;

fn main() {
    for (name, response) in [("good", GOOD), ("crowded", CROWDED)] {
        let plan = parse_plan_response(response, 10.0).expect("parses");
        let report = validate_plan(&plan);
        println!("{name}: {} steps, max concurrency {}, valid={}", plan.steps.len(), max_concurrency(&plan), report.valid);
        for v in &report.violations {
            println!("  {v:?}");
        }
        println!("  canonical: {}", serialize_plan(&plan));
    }
}
