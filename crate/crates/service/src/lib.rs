//! Gallery, job runner and HTTP front end for the palette pipeline.

pub mod api;
pub mod files;
pub mod jobs;
pub mod remote;
pub mod runner;
pub mod search;
pub mod store;

pub use jobs::{JobManager, JobRunner, JobState, PipelineRunner};
pub use runner::{run, RunConfig, RunRequest, Stage};
pub use search::{search, SearchQuery, SearchResults};
pub use store::{GalleryEntry, GalleryStore};
