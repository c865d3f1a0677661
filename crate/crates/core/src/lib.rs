//! A compact task-oriented dialogue stack (rule NLU, DST, policy, NLG over a
//! synthetic multi-domain world) with trainable post-processing networks
//! inserted between the modules. Includes an agenda-based user simulator,
//! imitation pretraining, a from-scratch PPO trainer, and a simulated-user
//! evaluation harness.

pub mod acts;
pub mod adapters;
pub mod config;
pub mod error;
pub mod eval;
pub mod nn;
pub mod pipeline;
pub mod ppn;
pub mod session;
pub mod sim;
pub mod state;
pub mod templates;
pub mod training;
pub mod vocab;
pub mod world;

pub use acts::{DialogueAct, Intent};
pub use config::RunConfig;
pub use error::{PpnError, Result};
pub use eval::{run_eval, score_session, Metrics, SessionScore};
pub use ppn::Ppn;
pub use session::{run_session, Env, PpnSet, Session, SessionConfig, MAX_TURNS};
pub use sim::UserSimulator;
pub use training::{run_training, Strategy, TrainConfig};
pub use vocab::{Manifest, PpnPosition};
pub use world::{build_world, generate_goal, Database, Ontology, UserGoal, WorldConfig};
