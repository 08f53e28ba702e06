"""
Utility functions package - reward metrics and response grammars
"""
