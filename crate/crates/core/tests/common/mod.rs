pub mod fixtures;
pub mod svm_oracle;
