use std::collections::BTreeMap;

use num_traits::One;
use serde_json::json;

use super::{AttackError, AttackPlan};
use crate::bits::{BitWord, ErasedWord};
use crate::channel::{run_session, Protocol, SessionOptions, Speaker};
use crate::rational::{fraction, Rational};

#[derive(Debug, Clone)]
pub struct ConfusionVerdict {
    pub plan: AttackPlan,
    pub inputs: (BitWord, BitWord),
    /// Fraction of rounds in which Bob speaks.
    pub bob_fraction: Rational,
    pub cost_rounds: usize,
    pub cost_fraction: Rational,
    pub bound: Rational,
    pub views_identical: bool,
    pub outputs: (BitWord, BitWord),
}

impl ConfusionVerdict {
    pub fn within_bound(&self) -> bool {
        self.cost_fraction <= self.bound
    }

    /// At least one of the two inputs is decoded wrongly.
    pub fn fools(&self) -> bool {
        self.views_identical && (self.outputs.0 != self.inputs.0 || self.outputs.1 != self.inputs.1)
    }
}

/// Alice's whole transcript on input `x` when every Bob message is erased.
fn silent_bob_transcript<P: Protocol>(protocol: &P, x: &BitWord) -> Vec<BitWord> {
    let mut state = protocol.alice_start(x);
    let mut heard: Option<ErasedWord> = None;
    let mut out = Vec::new();
    for slot in protocol.schedule().chunks() {
        let step = protocol.alice_send(&state, heard.as_ref(), slot);
        state = step.state;
        out.push(step.word);
        heard = Some(ErasedWord::all_erased(slot.bob_len));
    }
    out
}

fn transcript_distance(a: &[BitWord], b: &[BitWord]) -> usize {
    a.iter().zip(b).map(|(u, v)| u.hamming(v).unwrap_or(0)).sum()
}

/// The generic two-input confusion attack. When Bob speaks at most a third
/// of the time, erase all of Bob and the positions where the two closest
/// silent-Bob transcripts of Alice differ; otherwise erase all of Alice.
/// Replays both inputs under the plan and compares Bob's views.
pub fn erasure_confusion_attack<P: Protocol>(protocol: &P) -> Result<ConfusionVerdict, AttackError> {
    let inputs = protocol.params().all_inputs();
    if inputs.len() < 2 {
        return Err(AttackError::InvalidInputs("need at least two inputs".into()));
    }
    let schedule = protocol.schedule();
    let total = schedule.total_rounds();
    let r = schedule.bob_fraction();
    let mut masks = BTreeMap::new();
    let (a, b, bound, description);
    if r <= Rational::new(1, 3) {
        let transcripts: Vec<Vec<BitWord>> = inputs.iter().map(|x| silent_bob_transcript(protocol, x)).collect();
        let mut best = (usize::MAX, 0, 1);
        for i in 0..inputs.len() {
            for j in i + 1..inputs.len() {
                let d = transcript_distance(&transcripts[i], &transcripts[j]);
                if d < best.0 {
                    best = (d, i, j);
                }
            }
        }
        (a, b) = (best.1, best.2);
        for (k, slot) in schedule.chunks().iter().enumerate() {
            let diff = transcripts[a][k].xor(&transcripts[b][k]).expect("equal lengths");
            masks.insert((slot.index, Speaker::Alice), diff);
            masks.insert((slot.index, Speaker::Bob), BitWord::ones(slot.bob_len));
        }
        bound = (Rational::one() + r) / Rational::from_integer(2);
        description = "erase Bob entirely and Alice where the closest transcripts differ";
    } else {
        (a, b) = (0, 1);
        for slot in schedule.chunks() {
            masks.insert((slot.index, Speaker::Alice), BitWord::ones(slot.alice_len));
        }
        bound = Rational::one() - r;
        description = "erase Alice entirely";
    }
    let plan = AttackPlan::new(masks, description)
        .with_param("protocol", json!(protocol.params().protocol.to_string()))
        .with_param("n", json!(protocol.params().n))
        .with_param("epsilon", json!(protocol.params().epsilon.to_string()))
        .with_param("m", json!(protocol.params().m))
        .with_param("inputs", json!([inputs[a].to_string(), inputs[b].to_string()]));

    let opts = SessionOptions { record_bob_view: true, ..Default::default() };
    let ra = run_session(protocol, &inputs[a], &mut plan.adversary(), opts)?;
    let rb = run_session(protocol, &inputs[b], &mut plan.adversary(), opts)?;
    let cost_rounds = plan.total_cost;
    Ok(ConfusionVerdict {
        inputs: (inputs[a].clone(), inputs[b].clone()),
        bob_fraction: r,
        cost_rounds,
        cost_fraction: fraction(cost_rounds, total),
        bound,
        views_identical: ra.bob_view == rb.bob_view,
        outputs: (ra.bob_output, rb.bob_output),
        plan,
    })
}
