pub mod bench;
pub mod experiment;
pub mod export_frozen;
pub mod finetune;
pub mod keygen;
pub mod predict;
pub mod serve;
pub mod train_source;
