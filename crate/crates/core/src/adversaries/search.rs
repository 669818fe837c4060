use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::json;

use super::{actions_to_string, apply_chunk_actions, within_budget, AttackError, AttackPlan, ChunkAction, ChunkActionAdversary};
use crate::bits::BitWord;
use crate::channel::{Protocol, Session, SessionOptions};
use crate::rational::Rational;

/// Largest number of action sequences exhaustive search will enumerate.
pub const DEFAULT_SEARCH_CAP: u128 = 5u128.pow(8);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SearchMethod {
    /// Every action sequence over the first `depth` chunks; later chunks pass.
    Exhaustive { depth: usize },
    /// Keeps the `width` cheapest open branches per chunk, ties broken by a
    /// seeded shuffle.
    Beam { width: usize, seed: u64 },
}

#[derive(Debug, Clone)]
pub struct SearchHit {
    pub input: BitWord,
    pub decoy: BitWord,
    pub actions: Vec<ChunkAction>,
    pub output: BitWord,
    pub cost_fraction: Rational,
    pub plan: AttackPlan,
}

type Node<'p, P> = (Session<'p, P>, ChunkActionAdversary<P>);

struct Searcher<'p, P: Protocol> {
    protocol: &'p P,
    budget: Rational,
    depth: usize,
    total: usize,
}

impl<'p, P: Protocol> Searcher<'p, P> {
    fn affordable(&self, s: &Session<'p, P>) -> bool {
        within_budget(s.erased_rounds(), self.total, self.budget)
    }

    /// Bob already holds the right answer, so no continuation can fool him.
    fn settled(&self, s: &Session<'p, P>) -> bool {
        let x = self.protocol.alice_input(s.alice());
        self.protocol.bob_committed(s.bob()) == Some(x)
    }

    /// Runs a node to the end with passing chunks and reports a hit if Bob
    /// is fooled within budget.
    fn complete(&self, node: &Node<'p, P>, decoy: &BitWord) -> Result<Option<SearchHit>, AttackError> {
        let (mut session, mut adv) = (node.0.clone(), node.1.clone());
        while !session.is_done() {
            session.run_chunk(&mut adv)?;
        }
        let result = session.finish();
        let erased = result.erased_alice_rounds + result.erased_bob_rounds;
        if result.success || !within_budget(erased, self.total, self.budget) {
            return Ok(None);
        }
        let plan = AttackPlan::from_masks(&result.masks, "chunk-action search")
            .with_param("input", json!(result.input.to_string()))
            .with_param("decoy", json!(decoy.to_string()))
            .with_param("actions", json!(actions_to_string(adv.actions())));
        Ok(Some(SearchHit {
            input: result.input,
            decoy: decoy.clone(),
            actions: adv.actions().to_vec(),
            output: result.bob_output,
            cost_fraction: result.total_erasure_fraction,
            plan,
        }))
    }

    fn children(&self, node: &Node<'p, P>) -> Result<Vec<Node<'p, P>>, AttackError> {
        let mut out = Vec::new();
        for action in ChunkAction::ALL {
            let (mut session, mut adv) = (node.0.clone(), node.1.clone());
            adv.push(action);
            session.run_chunk(&mut adv)?;
            if self.affordable(&session) && !self.settled(&session) {
                out.push((session, adv));
            }
        }
        Ok(out)
    }

    fn dfs(&self, node: Node<'p, P>, decoy: &BitWord) -> Result<Option<SearchHit>, AttackError> {
        if node.0.next_chunk() >= self.depth || node.0.is_done() {
            return self.complete(&node, decoy);
        }
        for child in self.children(&node)? {
            if let Some(hit) = self.dfs(child, decoy)? {
                return Ok(Some(hit));
            }
        }
        Ok(None)
    }

    fn beam(&self, root: Node<'p, P>, decoy: &BitWord, width: usize, rng: &mut ChaCha8Rng) -> Result<Option<SearchHit>, AttackError> {
        let mut frontier = vec![root];
        for _ in 0..self.depth {
            let mut next = Vec::new();
            for node in &frontier {
                next.extend(self.children(node)?);
            }
            next.shuffle(rng);
            next.sort_by_key(|n| n.0.erased_rounds());
            next.truncate(width.max(1));
            frontier = next;
            if frontier.is_empty() {
                return Ok(None);
            }
        }
        for node in &frontier {
            if let Some(hit) = self.complete(node, decoy)? {
                return Ok(Some(hit));
            }
        }
        Ok(None)
    }
}

/// Searches chunk-action scripts, over every (input, decoy) pair in
/// ascending order, for one that makes Bob output a wrong answer while
/// erasing at most `budget` of all rounds. Finding nothing is evidence, not
/// proof, that no such attack exists within the repertoire.
pub fn attack_search<P: Protocol>(
    protocol: &P,
    budget: Rational,
    method: SearchMethod,
    cap: u128,
) -> Result<Option<SearchHit>, AttackError> {
    let chunks = protocol.schedule().chunk_count();
    let depth = match method {
        SearchMethod::Exhaustive { depth } => depth.min(chunks),
        SearchMethod::Beam { .. } => chunks,
    };
    if let SearchMethod::Exhaustive { .. } = method {
        let size = (ChunkAction::ALL.len() as u128).checked_pow(depth as u32).unwrap_or(u128::MAX);
        if size > cap {
            return Err(AttackError::SearchSpaceTooLarge { size, cap });
        }
    }
    let searcher = Searcher { protocol, budget, depth, total: protocol.schedule().total_rounds() };
    let inputs = protocol.params().all_inputs();
    let opts = SessionOptions { record_masks: true, ..Default::default() };
    let mut rng = match method {
        SearchMethod::Beam { seed, .. } => ChaCha8Rng::seed_from_u64(seed),
        SearchMethod::Exhaustive { .. } => ChaCha8Rng::seed_from_u64(0),
    };
    for x in &inputs {
        for decoy in inputs.iter().filter(|d| *d != x) {
            let session = Session::new(protocol, x, opts)?;
            if !searcher.affordable(&session) {
                continue;
            }
            let root = (session, apply_chunk_actions::<P>(Vec::new(), decoy.clone()));
            let hit = match method {
                SearchMethod::Exhaustive { .. } => searcher.dfs(root, decoy)?,
                SearchMethod::Beam { width, .. } => searcher.beam(root, decoy, width, &mut rng)?,
            };
            if hit.is_some() {
                return Ok(hit);
            }
        }
    }
    Ok(None)
}
