pub mod up_oracle;
