"""Entity-state tracking over procedural text.

LSTM encoders distill per-entity and per-(entity, location) evidence from a
paragraph; a lifecycle-constrained linear-chain CRF predicts discrete entity
states; a pipelined decoder fills the location grid; the evaluation layer
answers and scores the sentence-level and document-level question sets.
"""

__version__ = "0.1.0"
