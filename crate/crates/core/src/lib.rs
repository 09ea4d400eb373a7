pub mod augment;
pub mod controller;
pub mod evaluation;
pub mod hpo;
pub mod llm;
pub mod prompt;
pub mod runio;
pub mod space;
mod util;
