//! Synchronous, lossless message passing over a [`Digraph`].
//!
//! Each round is a barrier: every node posts one payload, then every node
//! reads the payloads of its neighbors `N_i` (itself included). Nothing posted
//! in round `t + 1` is visible before all round-`t` reads complete.

use crate::error::Result;
use crate::graph::Digraph;

/// One delivered payload.
#[derive(Debug, Clone, PartialEq)]
pub struct Envelope<T> {
    pub round: usize,
    pub sender: usize,
    pub payload: T,
}

#[derive(Debug, Clone)]
pub struct SyncNetwork<'g> {
    graph: &'g Digraph,
    round: usize,
}

impl<'g> SyncNetwork<'g> {
    pub fn new(graph: &'g Digraph) -> Self {
        Self { graph, round: 0 }
    }

    pub fn graph(&self) -> &Digraph {
        self.graph
    }

    /// Rounds completed so far.
    pub fn round(&self) -> usize {
        self.round
    }

    /// Runs one round. `outbox[j]` is node `j`'s broadcast; the result holds,
    /// for every node `i`, the envelopes from `j ∈ N_i` in ascending sender order.
    pub fn exchange<T: Clone>(&mut self, outbox: &[T]) -> Result<Vec<Vec<Envelope<T>>>> {
        assert_eq!(
            outbox.len(),
            self.graph.node_count(),
            "one payload per node"
        );
        self.round += 1;
        let round = self.round;
        let mut inboxes: Vec<Vec<Envelope<T>>> = vec![Vec::new(); outbox.len()];
        for (sender, payload) in outbox.iter().enumerate() {
            for reader in self.graph.readers_of(sender)? {
                inboxes[reader].push(Envelope {
                    round,
                    sender,
                    payload: payload.clone(),
                });
            }
        }
        Ok(inboxes)
    }
}
