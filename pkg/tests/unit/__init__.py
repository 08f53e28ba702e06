"""
Unit tests for FairFed.
"""
