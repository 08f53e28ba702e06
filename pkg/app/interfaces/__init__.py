"""
Interfaces package
"""
