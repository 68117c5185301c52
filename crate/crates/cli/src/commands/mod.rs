pub mod evaluate;
pub mod fewshot;
pub mod generate;
pub mod humaneval;
pub mod prepare;
pub mod stats;
pub mod train;
