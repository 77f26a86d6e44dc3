"""Publish/subscribe broker with QoS 0/1/2, retained messages, persistent
sessions and ledger-backed connection authentication."""

from .auth import AuthFailure, LedgerAuthenticator, NotAuthorized, StaticAuthenticator
from .bridge import LedgerBridge
from .broker import Broker, BrokerConfig, Session
from .client import Client
from .flows import QuotaExceeded
from .frames import FrameError, Publish, decode, encode
from .sim import FaultConfig, SimNetwork
from .tcp import TcpBrokerServer, TcpClient
from .topics import InvalidTopic, covers, match, validate_filter, validate_topic

__all__ = [
    "AuthFailure", "Broker", "BrokerConfig", "Client", "FaultConfig", "FrameError",
    "InvalidTopic", "LedgerAuthenticator", "LedgerBridge", "NotAuthorized", "Publish",
    "QuotaExceeded", "Session", "SimNetwork", "StaticAuthenticator", "TcpBrokerServer",
    "TcpClient", "covers", "decode", "encode", "match", "validate_filter", "validate_topic",
]
