pub mod cfg;
pub mod frontend;
pub mod hardware;
pub mod octagon;
pub mod pointer;
pub mod wellformed;
pub mod engine;
pub mod report;
pub mod oracle;
pub mod pipeline;
