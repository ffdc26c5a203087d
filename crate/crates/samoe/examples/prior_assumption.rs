//! Trigger matching and prior assumption vectors for a few statements.

use samoe::prior::{compute_prior, TriggerPool};

fn main() {
    let pool = TriggerPool::builtin();
    println!("built-in pool: {} triggers\n", pool.len());
    let statements = [
        "7 be listed a total of 3 times",
        "alice has a larger score than bob",
        "the highest laps be 15",
        "bob never score 0 points",
        "carol 's year be 2007",
    ];
    println!("{:<38} {:>28}  a_P (count, comp, sup, neg, none)", "statement", "delta");
    for s in &statements {
        let prior = compute_prior(s, &pool, 5);
        let delta: Vec<String> = prior.delta.iter().map(|d| format!("{d:.1}")).collect();
        let a_p: Vec<String> = prior.a_p.iter().map(|p| format!("{p:.3}")).collect();
        println!("{s:<38} {:>28}  {}", delta.join(" "), a_p.join(" "));
    }
}
