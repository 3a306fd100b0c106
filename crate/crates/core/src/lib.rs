pub mod poly;
pub mod cli;
pub mod driver;
pub mod extract;
pub mod optcond;
pub mod relax;
pub mod sdp;
