pub mod disco;
pub mod epec;
pub mod exec;
pub mod model;
pub mod nlp;
pub mod powerflow;
pub mod report;
pub mod verify;
