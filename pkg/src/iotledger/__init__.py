"""Permissioned execute-order-validate ledger with an IoT access-control
contract, a challenge-authenticated pub/sub broker and a benchmark engine."""

__version__ = "0.1.0"
