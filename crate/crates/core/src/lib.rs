pub mod cli;
pub mod clock;
pub mod device;
pub mod eval;
pub mod explorer;
pub mod grammar;
pub mod llm;
pub mod pipeline;
pub mod rag;
pub mod replay;
pub mod simulator;
