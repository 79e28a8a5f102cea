//! `verify`: run the whole invariant suite and print one pass/fail line per
//! property. Exit code 0 when everything holds, 2 otherwise.

use wavenet_core::checks::{self, CheckResult};
use wavenet_core::filterbank::build_assignment_scaled;
use wavenet_core::Rng;

use crate::checkpoint::Checkpoint;
use crate::error::Result;
use crate::model::assignment_into;

pub fn cmd_verify(seeds: usize) -> Result<i32> {
    let mut results = checks::run_all(seeds);
    results.push(checkpoint_round_trip_check());
    let mut failures = 0;
    for r in &results {
        let status = if r.passed { "ok" } else { "FAIL" };
        println!("{status} {}: {}", r.name, r.detail);
        if !r.passed {
            failures += 1;
        }
    }
    println!(
        "verify: {} passed, {} failed ({} recursive-approximation seeds)",
        results.len() - failures,
        failures,
        seeds
    );
    Ok(if failures == 0 { 0 } else { 2 })
}

/// Round-trip bytes plus CRC fault injection, all in memory.
fn checkpoint_round_trip_check() -> CheckResult {
    let run = || -> crate::error::Result<(bool, String)> {
        let assignment = build_assignment_scaled(&mut Rng::new(123), 2, 1)?;
        let mut ck = Checkpoint::new();
        assignment_into(&mut ck, &assignment)?;
        let bytes = ck.to_bytes();
        let reloaded = Checkpoint::from_bytes(&bytes)?;
        let stable = reloaded.to_bytes() == bytes;

        let mut rng = Rng::new(321);
        let mut detected = 0;
        let trials = 100;
        for _ in 0..trials {
            let mut corrupted = bytes.clone();
            let bit = rng.below(bytes.len() * 8);
            corrupted[bit / 8] ^= 1 << (bit % 8);
            if Checkpoint::from_bytes(&corrupted).is_err() {
                detected += 1;
            }
        }
        Ok((
            stable && detected == trials,
            format!(
                "save/load/save byte-identical: {stable}; bit flips detected: {detected}/{trials}"
            ),
        ))
    };
    match run() {
        Ok((passed, detail)) => CheckResult {
            name: "checkpoint-round-trip".into(),
            passed,
            detail,
        },
        Err(e) => CheckResult {
            name: "checkpoint-round-trip".into(),
            passed: false,
            detail: format!("errored: {e}"),
        },
    }
}
