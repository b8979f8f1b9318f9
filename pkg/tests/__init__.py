"""Test suite for ec-stability."""
