"""Test-suite generation and mutation scoring for block-diagram CPS models."""
