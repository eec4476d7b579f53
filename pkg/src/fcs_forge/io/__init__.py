"""Dataset, plan and store input/output, and synthetic data generation."""
