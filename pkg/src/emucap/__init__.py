"""Idempotent channel structure, emulation capacities and converse certificates."""
