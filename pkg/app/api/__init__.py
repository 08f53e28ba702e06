"""
Federation package - wire protocol, group clients and transports
"""

from .protocol import FederationError, ProtocolError, ReportTimeoutError
