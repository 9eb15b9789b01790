//! Headless runner and realtime sync server around the roomsim engine.

pub mod hub;
pub mod protocol;
pub mod runner;
pub mod server;

pub use hub::{ClientId, Hub, Receipt};
pub use protocol::{decode, encode, Envelope, Message, StateUpdate, PROTOCOL_VERSION};
pub use runner::{run, RunConfig, Summary};
pub use server::{router, Shared};
