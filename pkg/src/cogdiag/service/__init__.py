"""HTTP service wrapping the experiment pipelines."""
