"""Background fan-out for Monte-Carlo runs."""
