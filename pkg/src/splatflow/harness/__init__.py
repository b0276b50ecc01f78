"""Synthetic scenes, the flow-recovery experiment, gradient checks, reports and the CLI."""
