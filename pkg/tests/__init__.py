"""Test suite for the frictional hedging library and runner."""
