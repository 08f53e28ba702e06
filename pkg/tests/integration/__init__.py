"""
Integration tests for FairFed.
"""
