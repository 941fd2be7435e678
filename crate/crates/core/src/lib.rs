//! Sequence-valued vertex embeddings, a recurrent reader and a Q-network
//! head, trained with Q-learning to build greedy solutions for minimum vertex
//! cover, max cut and maximum independent set, plus the classical baselines
//! and exact solvers used to score them.

pub mod baselines;
pub mod dynamics;
pub mod graphs;
pub mod harness;
pub mod model;
pub mod rl;
pub mod seeding;
pub mod tensor;

#[cfg(test)]
mod end_to_end;
