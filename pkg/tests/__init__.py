"""
Tests package for FairFed.
"""
