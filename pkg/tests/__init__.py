"""Test suite for crlab."""
