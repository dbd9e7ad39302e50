pub mod tensor;
pub mod text;
pub mod embeddings;
pub mod metrics;
pub mod summarizer;
pub mod matcher;
pub mod experiments;
