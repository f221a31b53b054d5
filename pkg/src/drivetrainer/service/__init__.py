"""Benchmarking, introspection, replay rendering and the command line."""
