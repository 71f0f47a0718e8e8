"""Schemas and errors shared by the market, engine, evaluation and runner packages."""
