pub mod acro_rules;
pub mod corpus;
pub mod dedupe;
pub mod disambig;
pub mod distant;
pub mod embed;
pub mod error;
pub mod evaluate;
pub mod par;
pub mod synthetic;
pub mod tagger;
pub mod twin;

pub use error::{Error, ErrorKind, Result};
