//! Backend-agnostic staged training for skill-controlled question
//! generation, with a tiny from-scratch transformer as the reference
//! backend.

pub mod adam;
pub mod recipe;
pub mod registry;
pub mod tape;
pub mod tiny;
pub mod train;
pub mod vocab;

pub use recipe::{
    run_recipe, stage_dir, stage_seed, CorpusBindings, CorpusRole, RecipeError, RecipeName, RecipeOutcome,
    RecipeRecord, RunOptions, StageRecipe, StageSpec,
};
pub use registry::{backend_name_from_env, create_backend, load_backend, tiny_vocab, BACKEND_ENV};
pub use tiny::{TinyBackend, TinyConfig};
pub use train::{
    early_stopping_outcome, to_id_pairs, train_stage, EarlyStopping, EpochRecord, StopDecision, TrainConfig,
    TrainError, TrainReport,
};
pub use vocab::Vocab;
